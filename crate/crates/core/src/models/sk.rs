//! The Sherrington–Kirkpatrick model `H(σ) = −(1/√n) Σ_{i,j} X_ij σ_i σ_j`
//! over all `n²` ordered pairs, with i.i.d. standard Gaussian `X_ij`.

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::overlap::OverlapDistribution;
use super::spins::{check_capacity, SpinConfiguration};
use crate::criteria::partial_curvature_bound;
use crate::gaussian::{log_sum_exp, BetaParam, GaussianMeasure};
use crate::rng::RngStream;
use crate::stats::{mc_variance, EstimateWithCI, EstimatorConfig};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct SkInstance {
    pub n_sites: usize,
    /// `X_ij`, not symmetrized.
    pub couplings: DMatrix<f64>,
    pub beta: BetaParam,
}

/// Exact sums over the `2^n` configurations of one instance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GibbsSums {
    /// `(1/β) log Σ_σ e^{β H(σ)}`.
    pub free_energy: f64,
    /// `max_σ H(σ)`.
    pub max_energy: f64,
    /// `log 2^n`.
    pub log_count: f64,
}

/// Recompute the energy from scratch this often during the walk.
const RESYNC: u64 = 1 << 12;

impl SkInstance {
    pub fn new(couplings: DMatrix<f64>, beta: BetaParam) -> Result<Self> {
        let n = couplings.nrows();
        if couplings.ncols() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                got: couplings.ncols(),
            });
        }
        check_capacity(n)?;
        Ok(Self {
            n_sites: n,
            couplings,
            beta,
        })
    }

    /// Couplings drawn row by row from `stream`.
    pub fn sample(n: usize, beta: BetaParam, stream: &RngStream) -> Result<Self> {
        Self::draw(n, beta, &mut stream.rng())
    }

    pub fn draw<R: Rng + ?Sized>(n: usize, beta: BetaParam, rng: &mut R) -> Result<Self> {
        check_capacity(n)?;
        let mut c = DMatrix::zeros(n, n);
        for i in 0..n {
            for j in 0..n {
                c[(i, j)] = rng.sample(StandardNormal);
            }
        }
        Self::new(c, beta)
    }

    pub fn hamiltonian(&self, sigma: &[f64]) -> f64 {
        let n = self.n_sites;
        let mut acc = 0.0;
        for i in 0..n {
            let mut row = 0.0;
            for j in 0..n {
                row += self.couplings[(i, j)] * sigma[j];
            }
            acc += sigma[i] * row;
        }
        -acc / (n as f64).sqrt()
    }

    /// Enumerates `{−1,1}^n` in Gray-code order, one spin flip per step, with
    /// an `O(n)` energy update from the local fields
    /// `h_k = Σ_{j≠k} (X_kj + X_jk) σ_j`.
    pub fn exact_sums(&self) -> GibbsSums {
        let n = self.n_sites;
        let b = self.beta.get();
        let scale = 1.0 / (n as f64).sqrt();
        let sym = &self.couplings + self.couplings.transpose();
        let mut sigma = vec![-1.0; n];
        let fields = |sigma: &[f64]| -> Vec<f64> {
            (0..n)
                .map(|k| (0..n).filter(|&j| j != k).map(|j| sym[(k, j)] * sigma[j]).sum())
                .collect()
        };
        let mut h = fields(&sigma);
        let mut energy = self.hamiltonian(&sigma);
        let mut max_e = energy;
        // Streaming log-sum-exp of βH: Σ e^{β(H − max)} with the max tracked.
        let mut sum = 1.0;
        let total = 1u64 << n;
        for step in 1..total {
            let k = step.trailing_zeros() as usize;
            let old = sigma[k];
            energy += 2.0 * scale * old * h[k];
            sigma[k] = -old;
            for j in 0..n {
                if j != k {
                    h[j] -= 2.0 * old * sym[(j, k)];
                }
            }
            if step.is_multiple_of(RESYNC) {
                h = fields(&sigma);
                energy = self.hamiltonian(&sigma);
            }
            if energy > max_e {
                sum = sum * (b * (max_e - energy)).exp() + 1.0;
                max_e = energy;
            } else {
                sum += (b * (energy - max_e)).exp();
            }
        }
        GibbsSums {
            free_energy: max_e + sum.ln() / b,
            max_energy: max_e,
            log_count: (total as f64).ln(),
        }
    }

    /// `(1/β) log Σ_σ e^{β H(σ)}`.
    pub fn gibbs_free_energy(&self) -> f64 {
        self.exact_sums().free_energy
    }

    /// Direct evaluation of every energy, for cross-checks.
    pub fn energies_naive(&self) -> Vec<f64> {
        let n = self.n_sites;
        (0..1u64 << n)
            .map(|i| self.hamiltonian(&SpinConfiguration::from_index(n, i).as_f64()))
            .collect()
    }

    pub fn free_energy_naive(&self) -> f64 {
        let b = self.beta.get();
        let scaled: Vec<f64> = self.energies_naive().iter().map(|e| b * e).collect();
        log_sum_exp(&scaled).expect("nonempty") / b
    }
}

/// Disorder variance of the exact free energy, one instance per draw.
pub fn sk_free_energy_variance(n: usize, beta: BetaParam, cfg: &EstimatorConfig, rng: &RngStream) -> Result<EstimateWithCI> {
    check_capacity(n)?;
    mc_variance(
        |r| {
            SkInstance::draw(n, beta, r)
                .map(|inst| inst.gibbs_free_energy())
                .unwrap_or(f64::NAN)
        },
        cfg,
        rng,
    )
}

/// The factor `A` (`2^n × n²`) of the configuration covariance, with
/// `A_{σ,(i,j)} = −σ_iσ_j/√n`, so `H = A·vec(X)` and `A Aᵀ = M`.
pub fn sk_factor(n: usize) -> Result<DMatrix<f64>> {
    check_capacity(n)?;
    if n > 12 {
        return Err(Error::Capacity { n, max: 12 });
    }
    let scale = 1.0 / (n as f64).sqrt();
    let rows = 1usize << n;
    let mut a = DMatrix::zeros(rows, n * n);
    for r in 0..rows {
        let s = SpinConfiguration::from_index(n, r as u64).as_f64();
        for i in 0..n {
            for j in 0..n {
                a[(r, i * n + j)] = -s[i] * s[j] * scale;
            }
        }
    }
    Ok(a)
}

/// The law of `(H(σ))_σ` as a Gaussian measure on `R^{2^n}`.
pub fn sk_measure(n: usize) -> Result<GaussianMeasure> {
    GaussianMeasure::from_factor(sk_factor(n)?)
}

/// `C_β / (2β²)` with `C_β = E_{σ,σ'} e^{2β² M_{σσ'}}`, for `0 < β < 1/2`.
pub fn sk_variance_bound(n: usize, beta: BetaParam) -> Result<f64> {
    let b = beta.get();
    if b >= 0.5 {
        return Err(Error::Regime {
            param: "beta",
            value: b,
            regime: "0 < beta < 1/2".into(),
        });
    }
    Ok(super::overlap::sk_cbeta_exact(n, beta)? / (2.0 * b * b))
}

/// `e^{-2t} Σ_ij (M_ij)^r e^{2β²e^{-2t}M_ij} ν_i ν_j` for a general
/// nonnegative `M` and nonnegative weights `ν`.
pub fn chatterjee_ir_bound(m: &DMatrix<f64>, nu: &[f64], beta: BetaParam, r: u32, t: f64) -> Result<f64> {
    let n = m.nrows();
    if m.ncols() != n || nu.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: if m.ncols() != n { m.ncols() } else { nu.len() },
        });
    }
    if let Some(v) = m.iter().chain(nu).find(|v| **v < 0.0) {
        return Err(Error::Precondition(format!("entries must be nonnegative, found {v}")));
    }
    if !(t >= 0.0) {
        return Err(Error::Precondition(format!("t must be >= 0, got {t}")));
    }
    let u = (-2.0 * t).exp();
    let c = 2.0 * beta.get() * beta.get() * u;
    let mut acc = 0.0;
    for j in 0..n {
        for i in 0..n {
            let mij = m[(i, j)];
            acc += mij.powi(r as i32) * (c * mij).exp() * nu[i] * nu[j];
        }
    }
    Ok(u * acc)
}

/// [`chatterjee_ir_bound`] for the SK covariance with `ν_σ = 2^{-n}`, through
/// the overlap law in `n + 1` terms.
pub fn sk_chatterjee_ir_bound(n: usize, beta: BetaParam, r: u32, t: f64) -> Result<f64> {
    if !(t >= 0.0) {
        return Err(Error::Precondition(format!("t must be >= 0, got {t}")));
    }
    let u = (-2.0 * t).exp();
    let b = beta.get();
    Ok(u * OverlapDistribution::new(n)?.covariance_moment(r, 2.0 * b * b * u))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SkLognBound {
    /// `T = ½ log(2β²/γ)`.
    pub t: f64,
    pub i0: f64,
    pub it: f64,
    pub bound: f64,
}

/// Variance bound from the partial curvature inequality at `T = ½ log(2β²/γ)`,
/// with `I(0) ≤ min(n, Chatterjee bound at 0)` and `I(T)` from the Chatterjee
/// bound, where `2β²e^{-2T} = γ`. The overlap moment `E[M e^{γM}]` stays
/// bounded in `n` only for `γ < 1/2`.
pub fn sk_logn_bound(n: usize, beta: BetaParam, gamma: f64) -> Result<SkLognBound> {
    if n < 3 {
        return Err(Error::Precondition(format!("n must be >= 3, got {n}")));
    }
    if !(gamma > 0.0 && gamma < 0.5) {
        return Err(Error::Regime {
            param: "gamma",
            value: gamma,
            regime: "0 < gamma < 1/2 (E[M e^(gamma M)] diverges with n otherwise)".into(),
        });
    }
    let b = beta.get();
    let t = 0.5 * (2.0 * b * b / gamma).ln();
    if t <= 0.0 {
        return Err(Error::Regime {
            param: "beta",
            value: b,
            regime: format!("2 beta^2 > gamma = {gamma} (interpolation time T must be positive)"),
        });
    }
    let i0 = (n as f64).min(sk_chatterjee_ir_bound(n, beta, 1, 0.0)?);
    let it = i0.min(sk_chatterjee_ir_bound(n, beta, 1, t)?);
    Ok(SkLognBound {
        t,
        i0,
        it,
        bound: partial_curvature_bound(i0, it, t)?,
    })
}
