//! Reproducible Monte Carlo estimation.
//!
//! Standard errors come from batch means: the sample sequence is cut into
//! `batches` contiguous blocks and the spread of the block statistics gives
//! the error bar. Sampling auto-doubles until the 95% half-width relative to
//! the estimate falls under `target_rel_ci`, or `max_samples` is reached, in
//! which case the estimate is returned flagged [`EstimateStatus::LowPrecision`].
//! Sample `i` always uses the stream `root.derive(i)`, so a doubled run extends
//! the previous one rather than replacing it.

use serde::{Deserialize, Serialize};

use crate::grid::TimeGrid;
use crate::par::map_range;
use crate::rng::{RngStream, StreamRng};
use crate::{Error, Result};

/// Two-sided 95% normal quantile.
pub const Z95: f64 = 1.959_963_984_540_054;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EstimateStatus {
    Converged,
    /// Sample ceiling hit before the precision target.
    LowPrecision,
    /// The estimand is degenerate (e.g. an all-zero norm).
    Degenerate,
}

impl EstimateStatus {
    /// The more severe of two statuses.
    pub fn max_severity(self, other: Self) -> Self {
        use EstimateStatus::*;
        match (self, other) {
            (LowPrecision, _) | (_, LowPrecision) => LowPrecision,
            (Degenerate, _) | (_, Degenerate) => Degenerate,
            _ => Converged,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimateWithCI {
    pub value: f64,
    pub stderr: f64,
    pub n_samples: usize,
    pub n_batches: usize,
    pub seed_fingerprint: u64,
    pub status: EstimateStatus,
}

impl EstimateWithCI {
    /// A value known without sampling error.
    pub fn exact(value: f64) -> Self {
        Self {
            value,
            stderr: 0.0,
            n_samples: 0,
            n_batches: 0,
            seed_fingerprint: 0,
            status: EstimateStatus::Converged,
        }
    }

    pub fn ci(&self, z: f64) -> (f64, f64) {
        (self.value - z * self.stderr, self.value + z * self.stderr)
    }

    pub fn ci95(&self) -> (f64, f64) {
        self.ci(Z95)
    }

    /// 95% half-width over |value|.
    pub fn rel_half_width(&self) -> f64 {
        if self.stderr == 0.0 {
            0.0
        } else if self.value == 0.0 {
            f64::INFINITY
        } else {
            Z95 * self.stderr / self.value.abs()
        }
    }

    /// Multiply by a deterministic constant.
    pub fn scaled(&self, c: f64) -> Self {
        Self {
            value: self.value * c,
            stderr: self.stderr * c.abs(),
            ..self.clone()
        }
    }

    /// `true` when the two `z`-intervals intersect.
    pub fn overlaps(&self, other: &EstimateWithCI, z: f64) -> bool {
        (self.value - other.value).abs() <= z * (self.stderr + other.stderr)
    }

    pub fn is_low_precision(&self) -> bool {
        self.status == EstimateStatus::LowPrecision
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimatorConfig {
    pub samples: usize,
    pub batches: usize,
    pub target_rel_ci: f64,
    pub max_samples: usize,
}

impl Default for EstimatorConfig {
    fn default() -> Self {
        Self {
            samples: 4096,
            batches: 32,
            target_rel_ci: 0.05,
            max_samples: 1 << 18,
        }
    }
}

impl EstimatorConfig {
    /// Exactly `samples` draws, no doubling.
    pub fn fixed(samples: usize, batches: usize) -> Self {
        Self {
            samples,
            batches,
            target_rel_ci: 0.0,
            max_samples: samples,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.batches < 2 {
            return Err(Error::InvalidConfig(format!(
                "batches must be >= 2, got {}",
                self.batches
            )));
        }
        if self.samples < self.batches || self.samples % self.batches != 0 {
            return Err(Error::InvalidConfig(format!(
                "samples ({}) must be a positive multiple of batches ({})",
                self.samples, self.batches
            )));
        }
        if self.max_samples < self.samples {
            return Err(Error::InvalidConfig(format!(
                "max_samples ({}) below samples ({})",
                self.max_samples, self.samples
            )));
        }
        if !(self.target_rel_ci >= 0.0) {
            return Err(Error::InvalidConfig("target_rel_ci must be >= 0".into()));
        }
        Ok(())
    }

    pub(crate) fn accepts(&self, e: &EstimateWithCI) -> bool {
        e.rel_half_width() <= self.target_rel_ci
    }
}

/// Pairwise (tree) summation in a fixed order.
pub fn pairwise_sum(xs: &[f64]) -> f64 {
    const LEAF: usize = 32;
    if xs.len() <= LEAF {
        xs.iter().sum()
    } else {
        let mid = xs.len() / 2;
        pairwise_sum(&xs[..mid]) + pairwise_sum(&xs[mid..])
    }
}

pub fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return f64::NAN;
    }
    pairwise_sum(xs) / xs.len() as f64
}

/// Unbiased sample variance (two-pass).
pub fn sample_variance(xs: &[f64]) -> f64 {
    let n = xs.len();
    if n < 2 {
        return 0.0;
    }
    let m = mean(xs);
    let dev: Vec<f64> = xs.iter().map(|x| (x - m) * (x - m)).collect();
    pairwise_sum(&dev) / (n - 1) as f64
}

fn batch_ranges(len: usize, batches: usize) -> impl Iterator<Item = std::ops::Range<usize>> {
    (0..batches).map(move |b| (b * len / batches)..((b + 1) * len / batches))
}

/// Standard error of the mean of `stats` treated as i.i.d. replicates.
fn replicate_stderr(stats: &[f64]) -> f64 {
    let b = stats.len();
    if b < 2 {
        return 0.0;
    }
    (sample_variance(stats) / b as f64).sqrt()
}

/// Mean with batch-means standard error.
pub fn mean_estimate(values: &[f64], batches: usize, fingerprint: u64) -> EstimateWithCI {
    let batches = batches.clamp(1, values.len().max(1));
    let means: Vec<f64> = batch_ranges(values.len(), batches)
        .map(|r| mean(&values[r]))
        .collect();
    EstimateWithCI {
        value: mean(values),
        stderr: replicate_stderr(&means),
        n_samples: values.len(),
        n_batches: batches,
        seed_fingerprint: fingerprint,
        status: EstimateStatus::Converged,
    }
}

/// Unbiased variance; the error bar comes from per-batch variances.
pub fn variance_estimate(values: &[f64], batches: usize, fingerprint: u64) -> EstimateWithCI {
    let batches = batches.clamp(1, (values.len() / 2).max(1));
    let vars: Vec<f64> = batch_ranges(values.len(), batches)
        .map(|r| sample_variance(&values[r]))
        .collect();
    EstimateWithCI {
        value: sample_variance(values),
        stderr: replicate_stderr(&vars),
        n_samples: values.len(),
        n_batches: batches,
        seed_fingerprint: fingerprint,
        status: EstimateStatus::Converged,
    }
}

/// Draw rows `row(root.derive(i), i)` for `i` in `0..n`, doubling `n` until
/// `accept` is satisfied or the ceiling is reached. Returns the rows and
/// whether `accept` was met.
pub fn draw_adaptive<R, F, A>(
    cfg: &EstimatorConfig,
    root: &RngStream,
    row: F,
    accept: A,
) -> Result<(Vec<R>, bool)>
where
    R: Send,
    F: Fn(RngStream, usize) -> R + Sync + Send,
    A: Fn(&[R]) -> bool,
{
    cfg.validate()?;
    let mut rows: Vec<R> = map_range(0..cfg.samples, |i| row(root.derive(i as u64), i));
    loop {
        if accept(&rows) {
            return Ok((rows, true));
        }
        let n = rows.len();
        if n * 2 > cfg.max_samples {
            return Ok((rows, false));
        }
        let more = map_range(n..2 * n, |i| row(root.derive(i as u64), i));
        rows.extend(more);
    }
}

/// A sample vector with the bookkeeping needed to form estimates.
#[derive(Debug, Clone)]
pub struct Samples {
    pub values: Vec<f64>,
    pub batches: usize,
    pub fingerprint: u64,
    pub converged: bool,
}

impl Samples {
    fn finish(&self, mut e: EstimateWithCI) -> EstimateWithCI {
        if !self.converged {
            e.status = EstimateStatus::LowPrecision;
        }
        e
    }

    pub fn mean(&self) -> EstimateWithCI {
        self.finish(mean_estimate(&self.values, self.batches, self.fingerprint))
    }

    pub fn variance(&self) -> EstimateWithCI {
        self.finish(variance_estimate(&self.values, self.batches, self.fingerprint))
    }

    /// `(E X^p)^(1/p)` of nonnegative samples with a delta-method error bar.
    pub fn lp_norm(&self, p: f64) -> Result<EstimateWithCI> {
        if !(p >= 1.0) || !p.is_finite() {
            return Err(Error::Precondition(format!("L^p norm needs p >= 1, got {p}")));
        }
        if let Some(x) = self.values.iter().find(|x| !(**x >= 0.0)) {
            return Err(Error::Precondition(format!(
                "L^p norm needs nonnegative samples, found {x}"
            )));
        }
        let powered: Vec<f64> = self.values.iter().map(|x| x.powf(p)).collect();
        let m = mean_estimate(&powered, self.batches, self.fingerprint);
        if m.value == 0.0 {
            return Ok(EstimateWithCI {
                value: 0.0,
                stderr: 0.0,
                status: EstimateStatus::Degenerate,
                ..m
            });
        }
        let norm = m.value.powf(1.0 / p);
        let stderr = norm / (p * m.value) * m.stderr;
        Ok(self.finish(EstimateWithCI {
            value: norm,
            stderr,
            ..m
        }))
    }
}

/// Draw scalar samples, doubling until `criterion` on the draws is met.
pub fn mc_samples<S, C>(
    sampler: S,
    cfg: &EstimatorConfig,
    rng: &RngStream,
    criterion: C,
) -> Result<Samples>
where
    S: Fn(&mut StreamRng) -> f64 + Sync + Send,
    C: Fn(&Samples) -> bool,
{
    let (values, converged) = draw_adaptive(
        cfg,
        rng,
        |s, _| sampler(&mut s.rng()),
        |v: &[f64]| {
            criterion(&Samples {
                values: v.to_vec(),
                batches: cfg.batches,
                fingerprint: rng.fingerprint(),
                converged: true,
            })
        },
    )?;
    Ok(Samples {
        values,
        batches: cfg.batches,
        fingerprint: rng.fingerprint(),
        converged,
    })
}

pub fn mc_mean<S>(sampler: S, cfg: &EstimatorConfig, rng: &RngStream) -> Result<EstimateWithCI>
where
    S: Fn(&mut StreamRng) -> f64 + Sync + Send,
{
    Ok(mc_samples(sampler, cfg, rng, |s| cfg.accepts(&s.mean()))?.mean())
}

pub fn mc_variance<S>(sampler: S, cfg: &EstimatorConfig, rng: &RngStream) -> Result<EstimateWithCI>
where
    S: Fn(&mut StreamRng) -> f64 + Sync + Send,
{
    Ok(mc_samples(sampler, cfg, rng, |s| cfg.accepts(&s.variance()))?.variance())
}

pub fn lp_norm<S>(sampler: S, p: f64, cfg: &EstimatorConfig, rng: &RngStream) -> Result<EstimateWithCI>
where
    S: Fn(&mut StreamRng) -> f64 + Sync + Send,
{
    mc_samples(sampler, cfg, rng, |s| {
        s.lp_norm(p).map(|e| cfg.accepts(&e)).unwrap_or(true)
    })?
    .lp_norm(p)
}

/// Result of [`hypercontractive_integral`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HypercontractiveIntegral {
    /// `∫_0^∞ e^{-2s}(1-e^{-2s}) ‖g‖²_{1+e^{-2s}} ds`
    pub integral: f64,
    /// `C ‖g‖₂² / [1 + log(‖g‖₂/‖g‖₁)]²`
    pub comparator: f64,
    pub norm_1: f64,
    pub norm_2: f64,
    pub constant: f64,
}

/// Trapezoid rule for the hypercontractive integral over the grid, with the
/// tail past the last point closed using the norm at that point (the
/// exponent tends to 1 there). `norm(p)` returns `‖g‖_p`.
pub fn hypercontractive_integral<N>(norm: N, grid: &TimeGrid, constant: f64) -> Result<HypercontractiveIntegral>
where
    N: Fn(f64) -> f64,
{
    let norm_1 = norm(1.0);
    let norm_2 = norm(2.0);
    if !(norm_1 > 0.0) {
        return Err(Error::Undefined(format!(
            "norm ratio ‖g‖₂/‖g‖₁ with ‖g‖₁ = {norm_1}"
        )));
    }
    let integrand = |s: f64| {
        let u = (-2.0 * s).exp();
        let g = norm(1.0 + u);
        u * (1.0 - u) * g * g
    };
    let w = grid.trapezoid_weights();
    let body: Vec<f64> = grid
        .points()
        .iter()
        .zip(&w)
        .map(|(&s, &wk)| wk * integrand(s))
        .collect();
    let t_end = grid.last();
    let g_end = norm(1.0 + (-2.0 * t_end).exp());
    let tail = g_end * g_end * ((-2.0 * t_end).exp() / 2.0 - (-4.0 * t_end).exp() / 4.0);
    let log_term = 1.0 + (norm_2 / norm_1).ln();
    Ok(HypercontractiveIntegral {
        integral: pairwise_sum(&body) + tail,
        comparator: constant * norm_2 * norm_2 / (log_term * log_term),
        norm_1,
        norm_2,
        constant,
    })
}
