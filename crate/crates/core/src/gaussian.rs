//! The free energy `f_β(x) = (1/β) log Σ_i e^{β x_i}`, its softmax gradient and
//! Hessian, the carré du champ `Γ(f) = |∇f|²` and its iterate
//! `Γ₂(f) = ‖Hess f‖²_HS + |∇f|²` for the Ornstein–Uhlenbeck generator, and
//! Gaussian measures (standard or with covariance `M`) to sample from.
//!
//! Everything that exponentiates is max-shifted, so `β·x_i` may exceed the
//! floating-point range without overflow.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::rng::RngStream;
use crate::stats::pairwise_sum;
use crate::{Error, Result};

/// Hessians are also materialized densely up to this dimension.
pub const DENSE_HESSIAN_LIMIT: usize = 512;

/// PSD tolerance on the smallest eigenvalue, relative to `max |M_ij|`.
pub const PSD_TOL: f64 = 1e-10;

/// Inverse temperature `β > 0`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct BetaParam(f64);

impl BetaParam {
    pub fn new(beta: f64) -> Result<Self> {
        if beta > 0.0 && beta.is_finite() {
            Ok(Self(beta))
        } else {
            Err(Error::InvalidBeta(beta))
        }
    }

    #[inline]
    pub fn get(self) -> f64 {
        self.0
    }
}

impl TryFrom<f64> for BetaParam {
    type Error = Error;
    fn try_from(v: f64) -> Result<Self> {
        Self::new(v)
    }
}

impl From<BetaParam> for f64 {
    fn from(b: BetaParam) -> f64 {
        b.0
    }
}

fn check_vector(x: &[f64]) -> Result<()> {
    if x.is_empty() {
        return Err(Error::EmptyInput);
    }
    if let Some((index, &value)) = x.iter().enumerate().find(|(_, v)| !v.is_finite()) {
        return Err(Error::NonFinite { index, value });
    }
    Ok(())
}

fn max_of(x: &[f64]) -> f64 {
    x.iter().copied().fold(f64::NEG_INFINITY, f64::max)
}

/// `log Σ e^{x_i}`, shifted by the maximum.
pub fn log_sum_exp(x: &[f64]) -> Result<f64> {
    check_vector(x)?;
    let m = max_of(x);
    let terms: Vec<f64> = x.iter().map(|v| (v - m).exp()).collect();
    Ok(m + pairwise_sum(&terms).ln())
}

/// `f_β(x) = (1/β) log Σ e^{β x_i}`.
///
/// Computed as `max x + (1/β) log Σ e^{β(x_i - max x)}`; the sum lies in
/// `[1, n]`, so `max x ≤ f_β(x) ≤ max x + log(n)/β` holds in floating point.
pub fn free_energy(x: &[f64], beta: BetaParam) -> Result<f64> {
    check_vector(x)?;
    Ok(free_energy_unchecked(x, beta.get()))
}

pub(crate) fn free_energy_unchecked(x: &[f64], b: f64) -> f64 {
    let m = max_of(x);
    let terms: Vec<f64> = x.iter().map(|v| (b * (v - m)).exp()).collect();
    m + pairwise_sum(&terms).ln() / b
}

/// Softmax of `β·x`: the gradient of `f_β`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SoftmaxState {
    /// `β·x`.
    pub logits: Vec<f64>,
    /// `p_i = ∂_i f_β(x) = e^{β x_i} / Σ_k e^{β x_k}`.
    pub weights: Vec<f64>,
    /// `log Σ e^{β x_k}`.
    pub log_z: f64,
}

pub fn gradient_f_beta(x: &[f64], beta: BetaParam) -> Result<SoftmaxState> {
    check_vector(x)?;
    let b = beta.get();
    let mut weights = vec![0.0; x.len()];
    let log_z = softmax_into(x, b, &mut weights);
    Ok(SoftmaxState {
        logits: x.iter().map(|v| b * v).collect(),
        weights,
        log_z,
    })
}

/// Writes the softmax of `b·x` into `out` and returns `log Σ e^{b x_k}`.
/// No validation: the hot loop of every nested estimator.
#[inline]
pub(crate) fn softmax_into(x: &[f64], b: f64, out: &mut [f64]) -> f64 {
    let m = max_of(x);
    let mut s = 0.0;
    for (o, v) in out.iter_mut().zip(x) {
        let e = (b * (v - m)).exp();
        *o = e;
        s += e;
    }
    let inv = 1.0 / s;
    for o in out.iter_mut() {
        *o *= inv;
    }
    b * m + s.ln()
}

/// Hessian of `f_β`: `H_ij = β(p_i δ_ij − p_i p_j)`.
///
/// Kept in factored form `(p, β)`; the dense matrix is attached only for
/// `n ≤ 512`.
#[derive(Debug, Clone, PartialEq)]
pub struct SoftmaxHessian {
    pub weights: Vec<f64>,
    pub beta: f64,
    pub dense: Option<DMatrix<f64>>,
}

impl SoftmaxHessian {
    pub fn dim(&self) -> usize {
        self.weights.len()
    }

    pub fn entry(&self, i: usize, j: usize) -> f64 {
        let p = &self.weights;
        let d = if i == j { p[i] } else { 0.0 };
        self.beta * (d - p[i] * p[j])
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let n = self.dim();
        DMatrix::from_fn(n, n, |i, j| self.entry(i, j))
    }

    /// `‖H‖²_HS = β²(Σp² − 2Σp³ + (Σp²)²)`.
    pub fn frobenius_sq(&self) -> f64 {
        softmax_frobenius_sq(&self.weights, self.beta)
    }

    /// Row sums; zero up to rounding since `Σ p = 1`.
    pub fn row_sums(&self) -> Vec<f64> {
        let total: f64 = self.weights.iter().sum();
        self.weights
            .iter()
            .map(|&pi| self.beta * (pi - pi * total))
            .collect()
    }
}

pub(crate) fn softmax_frobenius_sq(p: &[f64], beta: f64) -> f64 {
    let (mut s2, mut s3) = (0.0, 0.0);
    for &x in p {
        let x2 = x * x;
        s2 += x2;
        s3 += x2 * x;
    }
    beta * beta * (s2 - 2.0 * s3 + s2 * s2)
}

/// `⟨H(p), H(q)⟩_HS` for two softmax Hessians.
pub(crate) fn softmax_inner(p: &[f64], beta_p: f64, q: &[f64], beta_q: f64) -> f64 {
    let (mut pq, mut cross) = (0.0, 0.0);
    for (&a, &b) in p.iter().zip(q) {
        let ab = a * b;
        pq += ab;
        cross += ab * (a + b);
    }
    beta_p * beta_q * (pq - cross + pq * pq)
}

pub fn hessian_f_beta(s: &SoftmaxState, beta: BetaParam) -> SoftmaxHessian {
    let mut h = SoftmaxHessian {
        weights: s.weights.clone(),
        beta: beta.get(),
        dense: None,
    };
    if h.dim() <= DENSE_HESSIAN_LIMIT {
        h.dense = Some(h.to_dense());
    }
    h
}

/// `Γ(f) = |∇f|²`.
pub fn gamma(grad: &[f64]) -> f64 {
    grad.iter().map(|g| g * g).sum()
}

/// `Γ₂(f) = ‖Hess f‖²_HS + |∇f|²`.
pub fn gamma2(grad: &[f64], hess: &DMatrix<f64>) -> Result<f64> {
    if hess.nrows() != grad.len() || hess.ncols() != grad.len() {
        return Err(Error::DimensionMismatch {
            expected: grad.len(),
            got: if hess.nrows() != grad.len() { hess.nrows() } else { hess.ncols() },
        });
    }
    Ok(hess.norm_squared() + gamma(grad))
}

/// Centered Gaussian law on `R^n`: `γ_n`, or covariance `M = A Aᵀ` for a
/// stored factor `A` (n × k).
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianMeasure {
    dim: usize,
    covariance: Option<DMatrix<f64>>,
    factor: Option<DMatrix<f64>>,
}

impl GaussianMeasure {
    /// `γ_n`.
    pub fn standard(dim: usize) -> Self {
        Self {
            dim,
            covariance: None,
            factor: None,
        }
    }

    /// Covariance `M`, factored by Cholesky or, for rank-deficient `M`, by a
    /// symmetric eigendecomposition with negative round-off clipped.
    pub fn with_covariance(m: DMatrix<f64>) -> Result<Self> {
        let n = m.nrows();
        if n == 0 {
            return Err(Error::EmptyInput);
        }
        if m.ncols() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                got: m.ncols(),
            });
        }
        if let Some((index, &value)) = m.iter().enumerate().find(|(_, v)| !v.is_finite()) {
            return Err(Error::NonFinite { index, value });
        }
        let scale = m.amax().max(1.0);
        let asym = (&m - m.transpose()).amax();
        if asym > PSD_TOL * scale {
            return Err(Error::NotSymmetric(asym));
        }
        let factor = match m.clone().cholesky() {
            Some(ch) => ch.l(),
            None => {
                let eig = m.clone().symmetric_eigen();
                let min = eig.eigenvalues.min();
                if min < -PSD_TOL * scale {
                    return Err(Error::NotPsd(min));
                }
                let roots = eig.eigenvalues.map(|l| l.max(0.0).sqrt());
                &eig.eigenvectors * DMatrix::from_diagonal(&roots)
            }
        };
        let resid = (&factor * factor.transpose() - &m).amax();
        if resid > 1e-8 * scale {
            return Err(Error::NotPsd(-resid));
        }
        Ok(Self {
            dim: n,
            covariance: Some(m),
            factor: Some(factor),
        })
    }

    /// Covariance `A Aᵀ` from an explicit factor (which may be rectangular).
    pub fn from_factor(a: DMatrix<f64>) -> Result<Self> {
        if a.nrows() == 0 || a.ncols() == 0 {
            return Err(Error::EmptyInput);
        }
        let m = &a * a.transpose();
        Ok(Self {
            dim: a.nrows(),
            covariance: Some(m),
            factor: Some(a),
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn is_standard(&self) -> bool {
        self.covariance.is_none()
    }

    pub fn covariance(&self) -> Option<&DMatrix<f64>> {
        self.covariance.as_ref()
    }

    pub fn factor(&self) -> Option<&DMatrix<f64>> {
        self.factor.as_ref()
    }

    /// `M` as a dense matrix (identity for `γ_n`).
    pub fn covariance_dense(&self) -> DMatrix<f64> {
        self.covariance
            .clone()
            .unwrap_or_else(|| DMatrix::identity(self.dim, self.dim))
    }

    /// One draw into `out` (length `dim`).
    pub fn draw_into<R: Rng + ?Sized>(&self, rng: &mut R, out: &mut [f64]) {
        match &self.factor {
            None => {
                for o in out.iter_mut() {
                    *o = rng.sample(StandardNormal);
                }
            }
            Some(a) => {
                let z = DVector::<f64>::from_fn(a.ncols(), |_, _| rng.sample(StandardNormal));
                let y = a * z;
                out.copy_from_slice(y.as_slice());
            }
        }
    }

    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        let mut out = vec![0.0; self.dim];
        self.draw_into(rng, &mut out);
        out
    }

    /// The draw addressed by `stream`; a pure function of `(seed, stream_id)`.
    pub fn sample(&self, stream: &RngStream) -> Vec<f64> {
        self.draw(&mut stream.rng())
    }

    /// `count` draws; draw `i` comes from `stream.derive(i)`.
    pub fn sample_many(&self, stream: &RngStream, count: usize) -> Vec<Vec<f64>> {
        crate::par::map_range(0..count, |i| self.sample(&stream.derive(i as u64)))
    }

    /// `gᵀ M h`, the bilinear carré du champ of the generalized OU generator.
    pub fn metric(&self, g: &[f64], h: &[f64]) -> f64 {
        match &self.factor {
            None => g.iter().zip(h).map(|(a, b)| a * b).sum(),
            Some(a) => {
                let ag = a.tr_mul(&DVector::from_column_slice(g));
                let ah = a.tr_mul(&DVector::from_column_slice(h));
                ag.dot(&ah)
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn b(v: f64) -> BetaParam {
        BetaParam::new(v).unwrap()
    }

    #[test]
    fn log_sum_exp_examples() {
        assert_relative_eq!(log_sum_exp(&[0.0; 4]).unwrap(), 4f64.ln(), epsilon = 1e-15);
        assert_relative_eq!(log_sum_exp(&[1000.0, 1000.0]).unwrap(), 1000.0 + 2f64.ln(), epsilon = 1e-12);
        assert_eq!(log_sum_exp(&[-3.25]).unwrap(), -3.25);
        assert_eq!(log_sum_exp(&[]), Err(Error::EmptyInput));
        assert!(matches!(log_sum_exp(&[1.0, f64::NAN]), Err(Error::NonFinite { index: 1, .. })));
    }

    #[test]
    fn free_energy_examples() {
        for beta in [0.1, 1.0, 7.0] {
            let f = free_energy(&[2.5; 6], b(beta)).unwrap();
            assert_relative_eq!(f, 2.5 + 6f64.ln() / beta, epsilon = 1e-13);
            assert_eq!(free_energy(&[-1.5], b(beta)).unwrap(), -1.5);
        }
        // β x far outside the exponent range.
        let f = free_energy(&[1e6, -1e6], b(1e4)).unwrap();
        assert!(f.is_finite());
        assert_eq!(f, 1e6);
        assert!(BetaParam::new(0.0).is_err());
        assert!(BetaParam::new(-1.0).is_err());
    }

    #[test]
    fn gradient_examples() {
        let s = gradient_f_beta(&[0.0; 5], b(2.0)).unwrap();
        for p in &s.weights {
            assert_relative_eq!(*p, 0.2, epsilon = 1e-15);
        }
        let s = gradient_f_beta(&[50.0, 0.0, 0.0], b(1.0)).unwrap();
        assert!((1.0 - s.weights[0]).abs() <= 1e-20 + 2.0 * (-50f64).exp());
        assert!(s.weights[1] < 2e-22);
    }

    #[test]
    fn hessian_examples() {
        let s = gradient_f_beta(&[0.0, 0.0], b(1.0)).unwrap();
        let h = hessian_f_beta(&s, b(1.0));
        let d = h.dense.as_ref().unwrap();
        let expect = DMatrix::from_row_slice(2, 2, &[0.25, -0.25, -0.25, 0.25]);
        assert!((d - expect).amax() < 1e-15);
        assert_relative_eq!(h.frobenius_sq(), 0.25, epsilon = 1e-15);

        let degenerate = SoftmaxHessian {
            weights: vec![1.0, 0.0, 0.0],
            beta: 3.0,
            dense: None,
        };
        assert!(degenerate.to_dense().amax() == 0.0);
        assert_eq!(degenerate.frobenius_sq(), 0.0);
    }

    #[test]
    fn dense_form_dropped_above_limit() {
        let x = vec![0.1; DENSE_HESSIAN_LIMIT + 1];
        let s = gradient_f_beta(&x, b(1.0)).unwrap();
        assert!(hessian_f_beta(&s, b(1.0)).dense.is_none());
        let s = gradient_f_beta(&x[..DENSE_HESSIAN_LIMIT], b(1.0)).unwrap();
        assert!(hessian_f_beta(&s, b(1.0)).dense.is_some());
    }

    #[test]
    fn gamma_examples() {
        let g = [1.0, -2.0, 0.5];
        let zero = DMatrix::zeros(3, 3);
        assert_eq!(gamma2(&g, &zero).unwrap(), gamma(&g));
        assert_eq!(gamma(&[0.0, 0.0]), 0.0);
        assert_eq!(gamma2(&[0.0, 0.0], &DMatrix::zeros(2, 2)).unwrap(), 0.0);

        let s = gradient_f_beta(&[0.0, 0.0], b(1.0)).unwrap();
        let h = hessian_f_beta(&s, b(1.0));
        assert_relative_eq!(gamma(&s.weights), 0.5, epsilon = 1e-15);
        assert_relative_eq!(gamma2(&s.weights, h.dense.as_ref().unwrap()).unwrap(), 0.75, epsilon = 1e-15);
        assert!(matches!(gamma2(&g, &DMatrix::zeros(2, 2)), Err(Error::DimensionMismatch { .. })));
    }

    #[test]
    fn softmax_inner_matches_dense() {
        let p = gradient_f_beta(&[0.3, -1.0, 2.0, 0.0], b(1.3)).unwrap().weights;
        let q = gradient_f_beta(&[1.0, 0.5, -0.2, 0.7], b(0.4)).unwrap().weights;
        let hp = SoftmaxHessian { weights: p.clone(), beta: 1.3, dense: None }.to_dense();
        let hq = SoftmaxHessian { weights: q.clone(), beta: 0.4, dense: None }.to_dense();
        assert_relative_eq!(softmax_inner(&p, 1.3, &q, 0.4), hp.dot(&hq), epsilon = 1e-15);
    }

    #[test]
    fn identity_sampling_moments() {
        let m = GaussianMeasure::standard(3);
        let draws = m.sample_many(&RngStream::from_seed(11), 100_000);
        for i in 0..3 {
            let mean: f64 = draws.iter().map(|d| d[i]).sum::<f64>() / 1e5;
            assert!(mean.abs() < 4.0 / (1e5f64).sqrt(), "coord {i} mean {mean}");
        }
    }

    #[test]
    fn scaled_covariance_sampling() {
        let m = GaussianMeasure::with_covariance(DMatrix::from_diagonal_element(2, 2, 4.0)).unwrap();
        let draws = m.sample_many(&RngStream::from_seed(12), 100_000);
        for i in 0..2 {
            let v: f64 = draws.iter().map(|d| d[i] * d[i]).sum::<f64>() / 1e5;
            assert!((v - 4.0).abs() < 0.2, "variance {v}");
        }
    }

    #[test]
    fn sampling_is_deterministic() {
        let m = GaussianMeasure::standard(4);
        let s = RngStream::new(3, 9);
        assert_eq!(m.sample_many(&s, 50), m.sample_many(&s, 50));
        assert_eq!(m.sample(&s), m.sample(&s));
    }

    #[test]
    fn rank_deficient_covariance_falls_back() {
        // rank one: v vᵀ
        let v = DVector::from_vec(vec![1.0, 2.0, -1.0]);
        let m = &v * v.transpose();
        let g = GaussianMeasure::with_covariance(m.clone()).unwrap();
        let f = g.factor().unwrap();
        assert!((f * f.transpose() - m).amax() < 1e-8);
    }

    #[test]
    fn non_psd_and_asymmetric_rejected() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]);
        assert!(matches!(GaussianMeasure::with_covariance(m), Err(Error::NotPsd(_))));
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.0, 1.0]);
        assert!(matches!(GaussianMeasure::with_covariance(m), Err(Error::NotSymmetric(_))));
    }

    #[test]
    fn metric_uses_covariance() {
        let m = DMatrix::from_row_slice(2, 2, &[2.0, 1.0, 1.0, 3.0]);
        let g = GaussianMeasure::with_covariance(m).unwrap();
        assert_relative_eq!(g.metric(&[1.0, -1.0], &[0.5, 2.0]), -3.5, epsilon = 1e-12);
    }

    fn fd_gradient(x: &[f64], beta: BetaParam, h: f64) -> Vec<f64> {
        (0..x.len())
            .map(|i| {
                let mut xp = x.to_vec();
                let mut xm = x.to_vec();
                xp[i] += h;
                xm[i] -= h;
                (free_energy(&xp, beta).unwrap() - free_energy(&xm, beta).unwrap()) / (2.0 * h)
            })
            .collect()
    }

    fn rel_close(a: f64, b: f64, rel: f64, abs: f64) -> bool {
        (a - b).abs() <= rel * a.abs().max(b.abs()) + abs
    }

    #[test]
    fn derivatives_match_finite_differences() {
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(17);
        let h = 1e-4;
        for beta in [0.2, 1.0, 5.0] {
            let bp = b(beta);
            for _ in 0..100 {
                let n = 2 + (rand::Rng::random::<u32>(&mut rng) % 6) as usize;
                let x: Vec<f64> = (0..n).map(|_| rand::Rng::sample(&mut rng, StandardNormal)).collect();
                let s = gradient_f_beta(&x, bp).unwrap();
                let fd = fd_gradient(&x, bp, h);
                for i in 0..n {
                    assert!(rel_close(s.weights[i], fd[i], 1e-5, 1e-9), "grad {i}: {} vs {}", s.weights[i], fd[i]);
                }
                let hs = hessian_f_beta(&s, bp);
                for i in 0..n {
                    let mut xp = x.clone();
                    let mut xm = x.clone();
                    xp[i] += h;
                    xm[i] -= h;
                    let gp = gradient_f_beta(&xp, bp).unwrap().weights;
                    let gm = gradient_f_beta(&xm, bp).unwrap().weights;
                    for j in 0..n {
                        let fdh = (gp[j] - gm[j]) / (2.0 * h);
                        assert!(rel_close(hs.entry(i, j), fdh, 1e-5, 1e-8), "hess ({i},{j}) beta {beta}: {} vs {fdh}", hs.entry(i, j));
                    }
                }
            }
        }
    }

    proptest! {
        #[test]
        fn softmax_normalized_for_wide_ranges(
            x in proptest::collection::vec(-1e5f64..1e5, 1..64),
            beta in 0.01f64..50.0,
        ) {
            let s = gradient_f_beta(&x, b(beta)).unwrap();
            let total: f64 = s.weights.iter().sum();
            prop_assert!((total - 1.0).abs() <= 1e-12);
            prop_assert!(s.weights.iter().all(|p| (0.0..=1.0).contains(p)));
            prop_assert!(s.log_z.is_finite());
        }

        #[test]
        fn hessian_rows_vanish_and_psd(
            x in proptest::collection::vec(-20f64..20.0, 1..12),
            beta in 0.05f64..10.0,
        ) {
            let s = gradient_f_beta(&x, b(beta)).unwrap();
            let h = hessian_f_beta(&s, b(beta));
            for r in h.row_sums() {
                prop_assert!(r.abs() <= 1e-12);
            }
            let eig = h.to_dense().symmetric_eigen();
            prop_assert!(eig.eigenvalues.min() >= -1e-12);
            prop_assert!((h.to_dense().norm_squared() - h.frobenius_sq()).abs() <= 1e-12);
        }

        #[test]
        fn free_energy_sandwich(
            x in proptest::collection::vec(-1e3f64..1e3, 1..128),
            beta in 0.01f64..100.0,
        ) {
            let f = free_energy(&x, b(beta)).unwrap();
            let m = x.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            prop_assert!(m <= f);
            prop_assert!(f <= m + (x.len() as f64).ln() / beta + 1e-12 * m.abs().max(1.0));
        }

        #[test]
        fn gamma2_dominates_gamma(
            x in proptest::collection::vec(-5f64..5.0, 1..10),
            beta in 0.05f64..10.0,
        ) {
            let s = gradient_f_beta(&x, b(beta)).unwrap();
            let h = hessian_f_beta(&s, b(beta));
            prop_assert!(gamma2(&s.weights, h.dense.as_ref().unwrap()).unwrap() >= gamma(&s.weights));
        }
    }
}
