//! Ground state versus free energy for SK: `max H ≤ F ≤ max H + L/β` on every
//! draw, with `L` the log of the number of summands, hence
//! `Var(max H) ≤ 3 Var(F) + 6 (L/β)²`.

use serde::{Deserialize, Serialize};

use super::sk::{GibbsSums, SkInstance};
use crate::criteria::{decide, InequalityReport, Relation};
use crate::gaussian::BetaParam;
use crate::par::map_range;
use crate::rng::RngStream;
use crate::stats::{variance_estimate, EstimateWithCI, EstimatorConfig};
use crate::{Error, Result};

/// Largest `n` accepted by [`ground_state_relation`].
pub const MAX_GROUND_STATE_SITES: usize = 20;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundStateReport {
    pub n_sites: usize,
    pub beta: f64,
    pub draws: usize,
    /// Draws where `max H ≤ F ≤ max H + log(2^n)/β` failed in floating point.
    pub sandwich_violations: usize,
    /// Largest observed `F − max H`.
    pub max_gap: f64,
    pub var_max: EstimateWithCI,
    pub var_free: EstimateWithCI,
    /// With `L = log 2^n`, the log of the configuration count.
    pub configuration_count: InequalityReport,
    /// With `L = log n`, as the relation is often quoted.
    pub literal_log_n: InequalityReport,
}

impl GroundStateReport {
    pub fn passes(&self) -> bool {
        self.sandwich_violations == 0 && self.configuration_count.passes()
    }
}

/// Exact sums for `draws` independent SK instances, instance `k` from
/// `rng.derive(k)`.
pub fn sk_disorder_sums(n: usize, beta: BetaParam, draws: usize, rng: &RngStream) -> Result<Vec<GibbsSums>> {
    map_range(0..draws, |k| SkInstance::sample(n, beta, &rng.derive(k as u64)).map(|i| i.exact_sums()))
        .into_iter()
        .collect()
}

/// Checks the sandwich on every draw and the variance relation within CI.
/// `cfg.samples` sets the number of disorder draws.
pub fn ground_state_relation(n: usize, beta: BetaParam, cfg: &EstimatorConfig, rng: &RngStream) -> Result<GroundStateReport> {
    if n > MAX_GROUND_STATE_SITES {
        return Err(Error::Capacity {
            n,
            max: MAX_GROUND_STATE_SITES,
        });
    }
    cfg.validate()?;
    let b = beta.get();
    let sums = sk_disorder_sums(n, beta, cfg.samples, rng)?;
    let log_count = sums[0].log_count;
    let mut violations = 0;
    let mut max_gap = 0.0f64;
    for s in &sums {
        let gap = s.free_energy - s.max_energy;
        if !(gap >= 0.0 && gap <= log_count / b) {
            violations += 1;
        }
        max_gap = max_gap.max(gap);
    }
    let fp = rng.fingerprint();
    let maxes: Vec<f64> = sums.iter().map(|s| s.max_energy).collect();
    let frees: Vec<f64> = sums.iter().map(|s| s.free_energy).collect();
    let var_max = variance_estimate(&maxes, cfg.batches, fp);
    let var_free = variance_estimate(&frees, cfg.batches, fp);
    let report = |name: &str, l: f64| {
        let mut rhs = var_free.scaled(3.0);
        rhs.value += 6.0 * (l / b).powi(2);
        let mut r = InequalityReport::new(name, Relation::Le);
        r.push_with(0.0, var_max.clone(), rhs.clone(), decide(&var_max, &rhs, Relation::Le));
        r
    };
    Ok(GroundStateReport {
        n_sites: n,
        beta: b,
        draws: sums.len(),
        sandwich_violations: violations,
        max_gap,
        configuration_count: report("ground_state_log_count", log_count),
        literal_log_n: report("ground_state_log_n", (n as f64).ln()),
        var_max,
        var_free,
    })
}
