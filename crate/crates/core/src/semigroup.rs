//! The Ornstein–Uhlenbeck semigroup through the Mehler integral
//! `P_t f(x) = E f(e^{-t} x + √(1 − e^{-2t}) Y)`, with `Y` drawn from the same
//! Gaussian measure as `x`.
//!
//! Derivatives are transported by commutation, `∇P_t f = e^{-t} P_t ∇f` and
//! `Hess P_t f = e^{-2t} P_t Hess f`, so no finite differences are needed. The
//! decay curves are nested Monte Carlo estimates: an outer average over `X`
//! of a squared inner average over `Y`. Squaring an inner mean inflates it by
//! the inner variance over `K`; every curve reports the U-statistic
//! `(|Σ u_k|² − Σ|u_k|²) / (K(K−1))`, which is unbiased, alongside the raw
//! plug-in value. All grid times of one outer sample reuse the same `X` and
//! the same inner draws, so neighbouring curve values are strongly
//! positively correlated and differences along the curve are sharp.

use std::io::Write;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::functions::{Hessian, SmoothFunction};
use crate::gaussian::GaussianMeasure;
use crate::grid::TimeGrid;
use crate::rng::RngStream;
use crate::stats::{draw_adaptive, mean_estimate, EstimateStatus, EstimateWithCI, EstimatorConfig};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MehlerConfig {
    /// Draws of `Y` per evaluation point (antithetic pairs count once).
    pub inner_samples: usize,
    /// Pair each `Y` with `−Y`.
    pub antithetic: bool,
    /// Outer sampling over `X`.
    pub outer: EstimatorConfig,
}

impl Default for MehlerConfig {
    fn default() -> Self {
        Self {
            inner_samples: 256,
            antithetic: false,
            outer: EstimatorConfig::default(),
        }
    }
}

impl MehlerConfig {
    pub fn fixed(outer_samples: usize, batches: usize, inner_samples: usize) -> Self {
        Self {
            inner_samples,
            antithetic: false,
            outer: EstimatorConfig::fixed(outer_samples, batches),
        }
    }

    pub fn antithetic(mut self, on: bool) -> Self {
        self.antithetic = on;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.inner_samples < 2 {
            return Err(Error::InvalidConfig(format!(
                "inner_samples must be >= 2, got {}",
                self.inner_samples
            )));
        }
        self.outer.validate()
    }
}

/// How the bias-corrected `‖mean of Hessians‖²_HS` is formed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum FrobeniusAlgorithm {
    /// Accumulate the dense sum `S`, then `‖S‖² − Σ‖H_a‖²`. `O(K n²)`.
    Dense,
    /// `Σ_{a≠b} ⟨H_a, H_b⟩` with factored inner products. `O(K² n)`.
    Pairwise,
    /// Pairwise when `K ≤ n`, dense otherwise.
    #[default]
    Auto,
}

/// Normalization of the covariance-weighted curve `I_r`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum IrNormalization {
    /// `I_r(t) = e^{-2t} Σ_ij (M_ij)^r E[∂_i f(X) P_{2t}∂_j f(X)]`.
    /// For `r = 1` this is `∫Γ(P_t f)dμ`, so `Var = 2∫_0^∞ I_1`.
    #[default]
    VarianceConsistent,
    /// `I_r(t) = 2 e^{-2t} Σ_ij (M_ij)^r E[∂_i f(X) P_t ∂_j f(X)]`, read
    /// literally; `I_1(0) = 2 I(0)`.
    Literal,
}

/// `(e^{-t}, √(1 − e^{-2t}))`.
#[inline]
pub fn mehler_coefficients(t: f64) -> (f64, f64) {
    ((-t).exp(), (-(-2.0 * t).exp_m1()).sqrt())
}

fn check_time(t: f64) -> Result<()> {
    if t >= 0.0 && t.is_finite() {
        Ok(())
    } else {
        Err(Error::Precondition(format!("semigroup time must be finite and >= 0, got {t}")))
    }
}

fn check_dims(measure: &GaussianMeasure, f_dim: usize, x: Option<&[f64]>) -> Result<()> {
    if measure.dim() != f_dim {
        return Err(Error::DimensionMismatch {
            expected: measure.dim(),
            got: f_dim,
        });
    }
    if let Some(x) = x {
        if x.len() != f_dim {
            return Err(Error::DimensionMismatch {
                expected: f_dim,
                got: x.len(),
            });
        }
    }
    Ok(())
}

fn inner_draws(measure: &GaussianMeasure, k: usize, stream: &RngStream) -> Vec<Vec<f64>> {
    let mut rng = stream.rng();
    (0..k).map(|_| measure.draw(&mut rng)).collect()
}

/// Mehler points for one inner draw: `a x + s y`, and `a x − s y` when
/// antithetic.
fn unit_points(x: &[f64], y: &[f64], a: f64, s: f64, antithetic: bool) -> Vec<Vec<f64>> {
    let plus = x.iter().zip(y).map(|(xi, yi)| a * xi + s * yi).collect();
    if antithetic {
        let minus = x.iter().zip(y).map(|(xi, yi)| a * xi - s * yi).collect();
        vec![plus, minus]
    } else {
        vec![plus]
    }
}

/// Monte Carlo `P_t f(x)` with its standard error over the inner draws.
pub fn mehler_apply<G>(
    f: G,
    t: f64,
    x: &[f64],
    measure: &GaussianMeasure,
    cfg: &MehlerConfig,
    rng: &RngStream,
) -> Result<EstimateWithCI>
where
    G: Fn(&[f64]) -> f64,
{
    check_time(t)?;
    check_dims(measure, x.len(), None)?;
    cfg.validate()?;
    let fp = rng.fingerprint();
    if t == 0.0 {
        return Ok(EstimateWithCI {
            seed_fingerprint: fp,
            ..EstimateWithCI::exact(f(x))
        });
    }
    let (a, s) = mehler_coefficients(t);
    let ys = inner_draws(measure, cfg.inner_samples, &rng.derive_named("inner"));
    let values: Vec<f64> = ys
        .iter()
        .map(|y| {
            let pts = unit_points(x, y, a, s, cfg.antithetic);
            pts.iter().map(|z| f(z)).sum::<f64>() / pts.len() as f64
        })
        .collect();
    Ok(mean_estimate(&values, values.len(), fp))
}

/// Inner averages of the gradient at the Mehler points, one per unit.
fn unit_gradients<F: SmoothFunction + ?Sized>(
    f: &F,
    x: &[f64],
    ys: &[Vec<f64>],
    a: f64,
    s: f64,
    antithetic: bool,
) -> Vec<Vec<f64>> {
    let n = x.len();
    let mut buf = vec![0.0; n];
    ys.iter()
        .map(|y| {
            let pts = unit_points(x, y, a, s, antithetic);
            let mut u = vec![0.0; n];
            for z in &pts {
                f.gradient_into(z, &mut buf);
                for (ui, bi) in u.iter_mut().zip(&buf) {
                    *ui += bi;
                }
            }
            let w = 1.0 / pts.len() as f64;
            u.iter_mut().for_each(|v| *v *= w);
            u
        })
        .collect()
}

fn unit_hessians<F: SmoothFunction + ?Sized>(
    f: &F,
    x: &[f64],
    ys: &[Vec<f64>],
    a: f64,
    s: f64,
    antithetic: bool,
) -> Vec<Hessian> {
    ys.iter()
        .map(|y| {
            let mut parts: Vec<Hessian> = unit_points(x, y, a, s, antithetic)
                .iter()
                .map(|z| f.hessian(z))
                .collect();
            if parts.len() == 1 {
                parts.pop().unwrap()
            } else {
                Hessian::Mixture(parts)
            }
        })
        .collect()
}

/// `∇P_t f(x) = e^{-t} P_t(∇f)(x)`, per coordinate.
pub fn pt_gradient<F: SmoothFunction + ?Sized>(
    f: &F,
    t: f64,
    x: &[f64],
    measure: &GaussianMeasure,
    cfg: &MehlerConfig,
    rng: &RngStream,
) -> Result<Vec<EstimateWithCI>> {
    check_time(t)?;
    check_dims(measure, f.dim(), Some(x))?;
    cfg.validate()?;
    let fp = rng.fingerprint();
    if t == 0.0 {
        return Ok(f
            .gradient(x)
            .into_iter()
            .map(|g| EstimateWithCI {
                seed_fingerprint: fp,
                ..EstimateWithCI::exact(g)
            })
            .collect());
    }
    let (a, s) = mehler_coefficients(t);
    let ys = inner_draws(measure, cfg.inner_samples, &rng.derive_named("inner"));
    let units = unit_gradients(f, x, &ys, a, s, cfg.antithetic);
    Ok((0..x.len())
        .map(|i| {
            let col: Vec<f64> = units.iter().map(|u| u[i]).collect();
            mean_estimate(&col, col.len(), fp).scaled(a)
        })
        .collect())
}

/// Entrywise estimate of a matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct MatrixEstimate {
    pub value: DMatrix<f64>,
    pub stderr: DMatrix<f64>,
}

/// `Hess P_t f(x) = e^{-2t} P_t(Hess f)(x)`.
pub fn pt_hessian<F: SmoothFunction + ?Sized>(
    f: &F,
    t: f64,
    x: &[f64],
    measure: &GaussianMeasure,
    cfg: &MehlerConfig,
    rng: &RngStream,
) -> Result<MatrixEstimate> {
    check_time(t)?;
    check_dims(measure, f.dim(), Some(x))?;
    cfg.validate()?;
    let n = x.len();
    if t == 0.0 {
        return Ok(MatrixEstimate {
            value: f.hessian(x).to_dense(),
            stderr: DMatrix::zeros(n, n),
        });
    }
    let (a, s) = mehler_coefficients(t);
    let ys = inner_draws(measure, cfg.inner_samples, &rng.derive_named("inner"));
    let units: Vec<DMatrix<f64>> = unit_hessians(f, x, &ys, a, s, cfg.antithetic)
        .iter()
        .map(Hessian::to_dense)
        .collect();
    let k = units.len() as f64;
    let mut mean = DMatrix::zeros(n, n);
    for u in &units {
        mean += u;
    }
    mean /= k;
    let mut var = DMatrix::zeros(n, n);
    for u in &units {
        let d = u - &mean;
        var += d.component_mul(&d);
    }
    var /= k - 1.0;
    let scale = (-2.0 * t).exp();
    Ok(MatrixEstimate {
        value: mean * scale,
        stderr: var.map(|v| (v / k).sqrt() * scale),
    })
}

/// Bias-corrected and plug-in `‖(1/K) Σ_a H_a‖²_HS`.
fn frobenius_pair(units: &[Hessian], algorithm: FrobeniusAlgorithm) -> (f64, f64) {
    let k = units.len();
    let n = units.first().map_or(0, Hessian::dim);
    let diag: f64 = units.iter().map(Hessian::frobenius_sq).sum();
    let algorithm = match algorithm {
        FrobeniusAlgorithm::Auto if k <= n => FrobeniusAlgorithm::Pairwise,
        FrobeniusAlgorithm::Auto => FrobeniusAlgorithm::Dense,
        other => other,
    };
    let off = match algorithm {
        FrobeniusAlgorithm::Pairwise => {
            let mut acc = 0.0;
            for a in 0..k {
                for b in (a + 1)..k {
                    acc += units[a].inner(&units[b]);
                }
            }
            2.0 * acc
        }
        _ => {
            let mut sum = DMatrix::zeros(n, n);
            for u in units {
                u.add_scaled_to(&mut sum, 1.0);
            }
            sum.norm_squared() - diag
        }
    };
    let kf = k as f64;
    (off / (kf * (kf - 1.0)), (off + diag) / (kf * kf))
}

/// Unbiased estimate of `‖E H‖²_HS` from i.i.d. matrices `H_1..H_K`
/// (`K ≥ 2`): the average of `⟨H_a, H_b⟩` over ordered pairs `a ≠ b`.
pub fn frobenius_of_mean(units: &[Hessian], algorithm: FrobeniusAlgorithm) -> Result<f64> {
    if units.len() < 2 {
        return Err(Error::Precondition("need at least two matrices".into()));
    }
    let n = units[0].dim();
    if let Some(u) = units.iter().find(|u| u.dim() != n) {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: u.dim(),
        });
    }
    Ok(frobenius_pair(units, algorithm).0)
}

/// One outer sample of the gradient curve and, optionally, the Hessian curve.
/// Layout: `[grad (corrected) | grad (raw) | hess (corrected) | hess (raw)]`,
/// each block one entry per time.
fn nested_row<F: SmoothFunction + ?Sized>(
    f: &F,
    measure: &GaussianMeasure,
    times: &[f64],
    cfg: &MehlerConfig,
    hessian: Option<FrobeniusAlgorithm>,
    stream: &RngStream,
) -> Vec<f64> {
    let m = times.len();
    let width = if hessian.is_some() { 4 * m } else { 2 * m };
    let mut row = vec![0.0; width];
    let x = measure.sample(&stream.derive_named("outer"));
    let ys = inner_draws(measure, cfg.inner_samples, &stream.derive_named("inner"));
    let k = ys.len() as f64;
    for (j, &t) in times.iter().enumerate() {
        if t == 0.0 {
            let g = f.gradient(&x);
            let v = measure.metric(&g, &g);
            row[j] = v;
            row[m + j] = v;
            if hessian.is_some() {
                let h = f.hessian(&x).frobenius_sq();
                row[2 * m + j] = h;
                row[3 * m + j] = h;
            }
            continue;
        }
        let (a, s) = mehler_coefficients(t);
        let units = unit_gradients(f, &x, &ys, a, s, cfg.antithetic);
        let mut sum = vec![0.0; x.len()];
        let mut diag = 0.0;
        for u in &units {
            diag += measure.metric(u, u);
            for (si, ui) in sum.iter_mut().zip(u) {
                *si += ui;
            }
        }
        let total = measure.metric(&sum, &sum);
        let decay = a * a;
        row[j] = decay * (total - diag) / (k * (k - 1.0));
        row[m + j] = decay * total / (k * k);
        if let Some(algorithm) = hessian {
            let hs = unit_hessians(f, &x, &ys, a, s, cfg.antithetic);
            let (corr, raw) = frobenius_pair(&hs, algorithm);
            row[2 * m + j] = decay * decay * corr;
            row[3 * m + j] = decay * decay * raw;
        }
    }
    row
}

fn column(rows: &[Vec<f64>], c: usize) -> Vec<f64> {
    rows.iter().map(|r| r[c]).collect()
}

fn column_estimate(rows: &[Vec<f64>], c: usize, batches: usize, fp: u64, converged: bool) -> EstimateWithCI {
    let mut e = mean_estimate(&column(rows, c), batches, fp);
    if !converged {
        e.status = EstimateStatus::LowPrecision;
    }
    e
}

/// Draws rows until every column in `0..checked` meets the precision target.
fn draw_rows<R>(cfg: &MehlerConfig, root: &RngStream, checked: usize, row: R) -> Result<(Vec<Vec<f64>>, bool)>
where
    R: Fn(&RngStream) -> Vec<f64> + Sync + Send,
{
    cfg.validate()?;
    let outer = &cfg.outer;
    let fp = root.fingerprint();
    draw_adaptive(
        outer,
        root,
        |s, _| row(&s),
        |rows: &[Vec<f64>]| {
            (0..checked).all(|c| outer.accepts(&mean_estimate(&column(rows, c), outer.batches, fp)))
        },
    )
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CurveKind {
    /// `I(t) = ∫Γ(P_t f)`.
    I,
    /// `I_r(t)`.
    Ir,
    /// `J_r(t) = e^{2t} I_r(t)`.
    Jr,
    /// `K(t) = e^{2t} I(t)`.
    K,
    /// `∫Γ₂(P_t f)`.
    Gamma2,
    /// `∫‖Hess P_t f‖²_HS`.
    Hessian,
    /// A criterion function `ψ` sampled on a grid.
    Psi,
}

impl CurveKind {
    pub fn as_str(self) -> &'static str {
        match self {
            CurveKind::I => "I",
            CurveKind::Ir => "I_r",
            CurveKind::Jr => "J_r",
            CurveKind::K => "K",
            CurveKind::Gamma2 => "Gamma2",
            CurveKind::Hessian => "Hessian",
            CurveKind::Psi => "psi",
        }
    }
}

/// A sampled function of semigroup time with per-point error bars.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecayCurve {
    pub kind: CurveKind,
    pub r: Option<u32>,
    pub grid: TimeGrid,
    pub values: Vec<EstimateWithCI>,
    /// Plug-in values before the nested-sampling bias correction.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub raw: Option<Vec<f64>>,
}

#[derive(Serialize)]
struct CurveRow<'a> {
    t: f64,
    estimate: f64,
    stderr: f64,
    kind: &'a str,
    r: Option<u32>,
}

impl DecayCurve {
    pub fn new(kind: CurveKind, r: Option<u32>, grid: TimeGrid, values: Vec<EstimateWithCI>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::GridMismatch(format!(
                "{} values for {} grid points",
                values.len(),
                grid.len()
            )));
        }
        Ok(Self {
            kind,
            r,
            grid,
            values,
            raw: None,
        })
    }

    /// Exact values of `g(t)` on the grid.
    pub fn from_fn(kind: CurveKind, grid: TimeGrid, g: impl Fn(f64) -> f64) -> Self {
        let values = grid.points().iter().map(|&t| EstimateWithCI::exact(g(t))).collect();
        Self {
            kind,
            r: None,
            grid,
            values,
            raw: None,
        }
    }

    pub fn times(&self) -> &[f64] {
        self.grid.points()
    }

    pub fn estimates(&self) -> impl Iterator<Item = f64> + '_ {
        self.values.iter().map(|e| e.value)
    }

    pub fn value_at(&self, t: f64) -> Option<&EstimateWithCI> {
        self.grid.index_of(t).map(|i| &self.values[i])
    }

    /// Multiply each point by `g(t)`.
    pub fn reweighted(&self, kind: CurveKind, g: impl Fn(f64) -> f64) -> Self {
        Self {
            kind,
            r: self.r,
            grid: self.grid.clone(),
            values: self
                .times()
                .iter()
                .zip(&self.values)
                .map(|(&t, e)| e.scaled(g(t)))
                .collect(),
            raw: self
                .raw
                .as_ref()
                .map(|raw| self.times().iter().zip(raw).map(|(&t, v)| v * g(t)).collect()),
        }
    }

    /// `K(t) = e^{2t} I(t)`.
    pub fn to_k(&self) -> Result<Self> {
        if self.kind != CurveKind::I {
            return Err(Error::Precondition(format!("K needs an I curve, got {}", self.kind.as_str())));
        }
        Ok(self.reweighted(CurveKind::K, |t| (2.0 * t).exp()))
    }

    /// `J_r(t) = e^{2t} I_r(t)`.
    pub fn to_j(&self) -> Result<Self> {
        if self.kind != CurveKind::Ir {
            return Err(Error::Precondition(format!("J_r needs an I_r curve, got {}", self.kind.as_str())));
        }
        Ok(self.reweighted(CurveKind::Jr, |t| (2.0 * t).exp()))
    }

    /// `true` when no later point exceeds an earlier one beyond `z` combined
    /// standard errors.
    pub fn is_nonincreasing_within(&self, z: f64) -> bool {
        self.values.windows(2).all(|w| w[1].value - w[0].value <= z * (w[0].stderr + w[1].stderr))
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        for (&t, e) in self.times().iter().zip(&self.values) {
            wr.serialize(CurveRow {
                t,
                estimate: e.value,
                stderr: e.stderr,
                kind: self.kind.as_str(),
                r: self.r,
            })?;
        }
        wr.flush().map_err(|e| Error::Serialization(e.to_string()))?;
        Ok(())
    }

    pub fn to_csv_string(&self) -> Result<String> {
        let mut buf = Vec::new();
        self.write_csv(&mut buf)?;
        String::from_utf8(buf).map_err(|e| Error::Serialization(e.to_string()))
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

/// `I(t) = ∫Γ(P_t f)dμ = e^{-2t} E|P_t∇f(X)|²_M` on the grid.
pub fn i_curve<F: SmoothFunction + ?Sized>(
    f: &F,
    measure: &GaussianMeasure,
    grid: &TimeGrid,
    cfg: &MehlerConfig,
    rng: &RngStream,
) -> Result<DecayCurve> {
    check_dims(measure, f.dim(), None)?;
    let times = grid.points();
    let m = times.len();
    let (rows, converged) = draw_rows(cfg, rng, m, |s| nested_row(f, measure, times, cfg, None, s))?;
    let fp = rng.fingerprint();
    let b = cfg.outer.batches;
    let mut curve = DecayCurve::new(
        CurveKind::I,
        None,
        grid.clone(),
        (0..m).map(|j| column_estimate(&rows, j, b, fp, converged)).collect(),
    )?;
    curve.raw = Some((0..m).map(|j| column_estimate(&rows, m + j, b, fp, converged).value).collect());
    Ok(curve)
}

/// `I(t)`, `∫‖Hess P_t f‖²_HS` and `∫Γ₂(P_t f) = ∫‖Hess P_t f‖² + I(t)` from
/// one set of draws.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GammaCurves {
    pub gamma: DecayCurve,
    pub hessian: DecayCurve,
    pub gamma2: DecayCurve,
}

pub fn gamma_curves<F: SmoothFunction + ?Sized>(
    f: &F,
    measure: &GaussianMeasure,
    grid: &TimeGrid,
    cfg: &MehlerConfig,
    algorithm: FrobeniusAlgorithm,
    rng: &RngStream,
) -> Result<GammaCurves> {
    check_dims(measure, f.dim(), None)?;
    if !measure.is_standard() {
        return Err(Error::Unsupported(
            "Γ₂ curves are implemented for the standard Gaussian measure only".into(),
        ));
    }
    let times = grid.points();
    let m = times.len();
    let (mut rows, converged) = draw_rows(cfg, rng, m, |s| {
        let mut r = nested_row(f, measure, times, cfg, Some(algorithm), s);
        let extra: Vec<f64> = (0..m).map(|j| r[j] + r[2 * m + j]).collect();
        r.extend(extra);
        r
    })?;
    rows.shrink_to_fit();
    let fp = rng.fingerprint();
    let b = cfg.outer.batches;
    let est = |c: usize| column_estimate(&rows, c, b, fp, converged);
    let build = |kind, main: usize, raw: Option<(usize, usize)>| -> Result<DecayCurve> {
        let mut c = DecayCurve::new(kind, None, grid.clone(), (0..m).map(|j| est(main + j)).collect())?;
        c.raw = raw.map(|(r1, r2)| (0..m).map(|j| est(r1 + j).value + est(r2 + j).value).collect());
        Ok(c)
    };
    let mut gamma = build(CurveKind::I, 0, None)?;
    gamma.raw = Some((0..m).map(|j| est(m + j).value).collect());
    let mut hessian = build(CurveKind::Hessian, 2 * m, None)?;
    hessian.raw = Some((0..m).map(|j| est(3 * m + j).value).collect());
    let gamma2 = build(CurveKind::Gamma2, 4 * m, Some((m, 3 * m)))?;
    Ok(GammaCurves {
        gamma,
        hessian,
        gamma2,
    })
}

/// `∫Γ₂(P_t f)dγ_n` on the grid.
pub fn gamma2_integral_curve<F: SmoothFunction + ?Sized>(
    f: &F,
    measure: &GaussianMeasure,
    grid: &TimeGrid,
    cfg: &MehlerConfig,
    rng: &RngStream,
) -> Result<DecayCurve> {
    Ok(gamma_curves(f, measure, grid, cfg, FrobeniusAlgorithm::Auto, rng)?.gamma2)
}

const NONNEG_TOL: f64 = 1e-12;

/// `I_r` of `f` under the covariance `M` of `measure`, which must be entrywise
/// nonnegative.
pub fn i_r_curve<F: SmoothFunction + ?Sized>(
    f: &F,
    measure: &GaussianMeasure,
    r: u32,
    normalization: IrNormalization,
    grid: &TimeGrid,
    cfg: &MehlerConfig,
    rng: &RngStream,
) -> Result<DecayCurve> {
    check_dims(measure, f.dim(), None)?;
    if r == 0 {
        return Err(Error::Precondition("r must be a positive integer".into()));
    }
    let cov = measure.covariance_dense();
    // Covariances assembled from a factor carry rounding of order ε·max|M|.
    let floor = -NONNEG_TOL * cov.amax();
    if let Some(v) = cov.iter().find(|v| **v < floor) {
        return Err(Error::Precondition(format!(
            "I_r needs an entrywise nonnegative covariance, found {v}"
        )));
    }
    let weight = if measure.is_standard() || r == 1 {
        None
    } else {
        Some(cov.map(|v| v.max(0.0).powi(r as i32)))
    };
    let bilinear = |g: &[f64], h: &[f64]| -> f64 {
        match &weight {
            None => measure.metric(g, h),
            Some(w) => {
                let mut acc = 0.0;
                for (j, hj) in h.iter().enumerate() {
                    if *hj == 0.0 {
                        continue;
                    }
                    let col: f64 = w.column(j).iter().zip(g).map(|(a, b)| a * b).sum();
                    acc += col * hj;
                }
                acc
            }
        }
    };
    let (lag, factor) = match normalization {
        IrNormalization::VarianceConsistent => (2.0, 1.0),
        IrNormalization::Literal => (1.0, 2.0),
    };
    let times = grid.points();
    let m = times.len();
    let (rows, converged) = draw_rows(cfg, rng, m, |s| {
        let x = measure.sample(&s.derive_named("outer"));
        let ys = inner_draws(measure, cfg.inner_samples, &s.derive_named("inner"));
        let g0 = f.gradient(&x);
        times
            .iter()
            .map(|&t| {
                let h = if t == 0.0 {
                    g0.clone()
                } else {
                    let (a, sd) = mehler_coefficients(lag * t);
                    let units = unit_gradients(f, &x, &ys, a, sd, cfg.antithetic);
                    let mut mean = vec![0.0; x.len()];
                    for u in &units {
                        for (mi, ui) in mean.iter_mut().zip(u) {
                            *mi += ui;
                        }
                    }
                    let k = units.len() as f64;
                    mean.iter_mut().for_each(|v| *v /= k);
                    mean
                };
                factor * (-2.0 * t).exp() * bilinear(&g0, &h)
            })
            .collect()
    })?;
    let fp = rng.fingerprint();
    DecayCurve::new(
        CurveKind::Ir,
        Some(r),
        grid.clone(),
        (0..m).map(|j| column_estimate(&rows, j, cfg.outer.batches, fp, converged)).collect(),
    )
}

/// `Var(f) = 2∫_0^∞ I(s) ds`, by trapezoid over the grid up to its last point
/// `T`. The remainder is closed with the exponential decay of the variance,
/// `Var(P_T f) ≤ e^{-2T} Var(f)`, which turns the truncated integral `Q` into
/// `Q / (1 − e^{-2T})`; the horizon is rejected when that closure accounts for
/// more than 10% of the total.
pub fn variance_dynamical<F: SmoothFunction + ?Sized>(
    f: &F,
    measure: &GaussianMeasure,
    grid: &TimeGrid,
    cfg: &MehlerConfig,
    rng: &RngStream,
) -> Result<EstimateWithCI> {
    check_dims(measure, f.dim(), None)?;
    let t_end = grid.last();
    if !(t_end > 0.0) {
        return Err(Error::InvalidConfig("grid must extend beyond t = 0".into()));
    }
    let fraction = (-2.0 * t_end).exp();
    if fraction > 0.1 {
        return Err(Error::TailTooLarge { fraction });
    }
    let times = grid.points();
    let m = times.len();
    let w: Vec<f64> = grid
        .trapezoid_weights()
        .into_iter()
        .map(|wk| 2.0 * wk / (1.0 - fraction))
        .collect();
    let (rows, converged) = draw_rows(cfg, rng, 1, |s| {
        let r = nested_row(f, measure, times, cfg, None, s);
        vec![(0..m).map(|j| w[j] * r[j]).sum::<f64>()]
    })?;
    Ok(column_estimate(&rows, 0, cfg.outer.batches, rng.fingerprint(), converged))
}
