//! The random energy model in two normalizations.
//!
//! * `NCoordinates`: `f_β(x) = (1/β) log Σ_{i≤n} e^{βx_i}` under the
//!   standard Gaussian on `R^n`.
//! * `Rem2nScaled`: `2^n` i.i.d. standard Gaussians `X_σ` with energies
//!   `H(σ) = √n X_σ`, so `F = (1/β) log Σ_σ e^{β√n X_σ}`.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::spins::check_capacity;
use crate::criteria::partial_curvature_bound;
use crate::gaussian::{free_energy_unchecked, softmax_into, BetaParam};
use crate::rng::RngStream;
use crate::stats::{
    mc_samples, EstimateStatus, EstimateWithCI, EstimatorConfig, Samples,
};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RemNormalization {
    #[default]
    NCoordinates,
    Rem2nScaled,
}

impl RemNormalization {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::NCoordinates => "n_coordinates",
            Self::Rem2nScaled => "rem_2n_scaled",
        }
    }

    /// Number of Gaussian variables for `n` sites.
    pub fn n_variables(self, n: usize) -> Result<usize> {
        match self {
            Self::NCoordinates => Ok(n),
            Self::Rem2nScaled => {
                check_capacity(n)?;
                Ok(1 << n)
            }
        }
    }

    /// Factor `c` in `H = c·X`.
    pub fn energy_scale(self, n: usize) -> f64 {
        match self {
            Self::NCoordinates => 1.0,
            Self::Rem2nScaled => (n as f64).sqrt(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RemInstance {
    pub n_sites: usize,
    /// The Gaussian draws `X`, one per variable.
    pub energies: Vec<f64>,
    pub beta: BetaParam,
    pub normalization: RemNormalization,
}

impl RemInstance {
    pub fn new(n_sites: usize, energies: Vec<f64>, beta: BetaParam, normalization: RemNormalization) -> Result<Self> {
        if n_sites == 0 {
            return Err(Error::EmptyInput);
        }
        let expected = normalization.n_variables(n_sites)?;
        if energies.len() != expected {
            return Err(Error::DimensionMismatch {
                expected,
                got: energies.len(),
            });
        }
        if let Some(index) = energies.iter().position(|e| !e.is_finite()) {
            return Err(Error::NonFinite {
                index,
                value: energies[index],
            });
        }
        Ok(Self {
            n_sites,
            energies,
            beta,
            normalization,
        })
    }

    pub fn sample(n_sites: usize, beta: BetaParam, normalization: RemNormalization, stream: &RngStream) -> Result<Self> {
        let count = normalization.n_variables(n_sites)?;
        let mut rng = stream.rng();
        let energies = (0..count).map(|_| rng.sample(StandardNormal)).collect();
        Self::new(n_sites, energies, beta, normalization)
    }

    pub fn hamiltonian(&self) -> Vec<f64> {
        let c = self.normalization.energy_scale(self.n_sites);
        self.energies.iter().map(|x| c * x).collect()
    }

    /// `(1/β) log Σ e^{βH}`.
    pub fn gibbs_free_energy(&self) -> f64 {
        free_energy_unchecked(&self.hamiltonian(), self.beta.get())
    }
}

/// Largest β of the high-temperature regime, `√(log 2 / 2)`.
pub fn rem_high_temp_beta_max() -> f64 {
    (std::f64::consts::LN_2 / 2.0).sqrt()
}

/// `((1 − β²)/(1 − 2β²))/n` for `f_β` over `n` coordinates.
pub fn rem_high_temp_bound(n: usize, beta: BetaParam) -> Result<f64> {
    if n == 0 {
        return Err(Error::EmptyInput);
    }
    let b = beta.get();
    let max = rem_high_temp_beta_max();
    if b >= max {
        return Err(Error::Regime {
            param: "beta",
            value: b,
            regime: format!("0 < beta < sqrt(ln 2 / 2) = {max:.6}"),
        });
    }
    let b2 = b * b;
    Ok((1.0 - b2) / (1.0 - 2.0 * b2) / n as f64)
}

/// Disorder variance of `f_β` over `n` coordinates by Monte Carlo.
pub fn rem_free_energy_variance(n: usize, beta: BetaParam, cfg: &EstimatorConfig, rng: &RngStream) -> Result<EstimateWithCI> {
    if n == 0 {
        return Err(Error::EmptyInput);
    }
    let b = beta.get();
    crate::stats::mc_variance(
        |r| {
            let x: Vec<f64> = (0..n).map(|_| r.sample(StandardNormal)).collect();
            free_energy_unchecked(&x, b)
        },
        cfg,
        rng,
    )
}

/// Monte Carlo `L^p(γ_n)` norms of `∂_1 f_β` over `n` coordinates.
///
/// `∂_i f_β` is the `i`-th softmax weight, and the coordinates are
/// exchangeable, so `‖∂_1 f_β‖_p^p = E[(1/n) Σ_i p_i^p]`. Each draw records
/// the sums for all requested exponents, which makes `‖·‖_1 = 1/n` exact.
#[derive(Debug, Clone)]
pub struct RemGradientNorms {
    pub n: usize,
    pub beta: BetaParam,
    pub exponents: Vec<f64>,
    /// Per exponent, per draw: `(1/n) Σ_i p_i^q`.
    pub power_sums: Vec<Samples>,
}

impl RemGradientNorms {
    pub fn estimate(n: usize, beta: BetaParam, exponents: &[f64], cfg: &EstimatorConfig, rng: &RngStream) -> Result<Self> {
        if n == 0 {
            return Err(Error::EmptyInput);
        }
        if let Some(q) = exponents.iter().find(|q| !(**q >= 1.0) || !q.is_finite()) {
            return Err(Error::Precondition(format!("exponents must be >= 1, got {q}")));
        }
        cfg.validate()?;
        let b = beta.get();
        let inv_n = 1.0 / n as f64;
        let (rows, converged) = crate::stats::draw_adaptive(
            cfg,
            rng,
            |s, _| {
                let mut r = s.rng();
                let x: Vec<f64> = (0..n).map(|_| r.sample(StandardNormal)).collect();
                let mut p = vec![0.0; n];
                softmax_into(&x, b, &mut p);
                exponents
                    .iter()
                    .map(|&q| inv_n * p.iter().map(|w| w.powf(q)).sum::<f64>())
                    .collect::<Vec<f64>>()
            },
            |_| true,
        )?;
        let power_sums = (0..exponents.len())
            .map(|k| Samples {
                values: rows.iter().map(|r| r[k]).collect(),
                batches: cfg.batches,
                fingerprint: rng.fingerprint(),
                converged,
            })
            .collect();
        Ok(Self {
            n,
            beta,
            exponents: exponents.to_vec(),
            power_sums,
        })
    }

    /// `‖∂_1 f_β‖_q` for one of the recorded exponents.
    pub fn norm(&self, q: f64) -> Option<EstimateWithCI> {
        let k = self.exponents.iter().position(|e| (e - q).abs() <= 1e-12)?;
        let m = self.power_sums[k].mean();
        let value = m.value.powf(1.0 / q);
        let stderr = if m.value > 0.0 { value / (q * m.value) * m.stderr } else { 0.0 };
        Some(EstimateWithCI { value, stderr, ..m })
    }
}

/// `1/n + 4β²·n·C·‖∂_1 f_β‖_2² / [1 + log(‖∂_1 f_β‖_2/‖∂_1 f_β‖_1)]²`, the
/// hypercontractive variance bound for `f_β` over `n` coordinates.
///
/// With `q = E Σ_i p_i²` this is `1/n + 4β²C q / [1 + ½ log(nq)]²`; the error
/// bar is propagated from `q` by the delta method. A vanishing `q` makes the
/// norm ratio undefined and the estimate is flagged `Degenerate`.
pub fn rem_low_temp_bound_estimate(
    n: usize,
    beta: BetaParam,
    constant: f64,
    cfg: &EstimatorConfig,
    rng: &RngStream,
) -> Result<EstimateWithCI> {
    if n < 3 {
        return Err(Error::Precondition(format!("n must be >= 3, got {n}")));
    }
    if !(constant > 0.0 && constant.is_finite()) {
        return Err(Error::InvalidConfig(format!("constant must be positive, got {constant}")));
    }
    let b = beta.get();
    let nf = n as f64;
    let samples = mc_samples(
        |r| {
            let x: Vec<f64> = (0..n).map(|_| r.sample(StandardNormal)).collect();
            let mut p = vec![0.0; n];
            softmax_into(&x, b, &mut p);
            p.iter().map(|w| w * w).sum()
        },
        cfg,
        rng,
        |s| cfg.accepts(&s.mean()),
    )?;
    let q = samples.mean();
    if !(q.value > 0.0) || !q.value.is_finite() {
        return Ok(EstimateWithCI {
            value: f64::NAN,
            stderr: f64::NAN,
            status: EstimateStatus::Degenerate,
            ..q
        });
    }
    let k = 4.0 * b * b * constant;
    let l = 1.0 + 0.5 * (nf * q.value).ln();
    let value = 1.0 / nf + k * q.value / (l * l);
    let slope = k * (1.0 / (l * l) - 1.0 / (l * l * l));
    Ok(EstimateWithCI {
        value,
        stderr: slope.abs() * q.stderr,
        ..q
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RemChatterjeeBound {
    /// `T = ½ log(2β²)`.
    pub t: f64,
    /// `I(0) ≤ n`.
    pub i0: f64,
    /// `(n/2^n) e^{-2T} e^n`.
    pub envelope: f64,
    /// `min(envelope, I(0))`, the value passed to the curvature bound.
    pub it: f64,
    pub bound: f64,
    /// The envelope exceeds the trivial `I(0)` bound, so it carries no
    /// information.
    pub vacuous: bool,
}

/// Low-temperature bound for the `2^n`-configuration REM from the partial
/// curvature inequality at `T = ½ log(2β²)` with `I(T) ≤ (n/2^n)e^{-2T}e^n`.
pub fn rem_chatterjee_low_temp_bound(n: usize, beta: BetaParam) -> Result<RemChatterjeeBound> {
    let b = beta.get();
    let min_beta = 2.0 * std::f64::consts::LN_2.sqrt();
    if b <= min_beta {
        return Err(Error::Regime {
            param: "beta",
            value: b,
            regime: format!("beta > 2 sqrt(ln 2) = {min_beta:.6}"),
        });
    }
    if n == 0 {
        return Err(Error::EmptyInput);
    }
    let nf = n as f64;
    let t = 0.5 * (2.0 * b * b).ln();
    let i0 = nf;
    let envelope = (nf.ln() - nf * std::f64::consts::LN_2 - 2.0 * t + nf).exp();
    let it = envelope.min(i0);
    Ok(RemChatterjeeBound {
        t,
        i0,
        envelope,
        it,
        bound: partial_curvature_bound(i0, it, t)?,
        vacuous: envelope >= i0,
    })
}
