//! Inequality checkers and bound evaluators along the semigroup.
//!
//! A checker compares two estimated sides point by point and returns an
//! [`InequalityReport`]. Verdicts follow one rule everywhere: for a claim
//! `lhs ≤ rhs`,
//!
//! * `holds` when the point estimates satisfy it,
//! * `violated` when `lhs − 3·se(lhs)` still exceeds `rhs + 3·se(rhs)`,
//! * `holds_within_ci` otherwise.
//!
//! A claim `lhs ≥ rhs` is mirrored. A relative slack of `1e-12` absorbs
//! rounding in exact comparisons.

use std::io::Write;
use std::num::NonZeroUsize;

use gauss_quad::legendre::GaussLegendre;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::functions::SmoothFunction;
use crate::gaussian::{BetaParam, GaussianMeasure};
use crate::grid::TimeGrid;
use crate::rng::RngStream;
use crate::semigroup::{CurveKind, DecayCurve};
use crate::stats::{mc_samples, EstimateWithCI, EstimatorConfig};
use crate::{Error, Result};

/// Rounding slack relative to the larger side.
pub const EXACT_SLACK: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Relation {
    /// `lhs ≤ rhs`
    Le,
    /// `lhs ≥ rhs`
    Ge,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Holds,
    HoldsWithinCi,
    /// The check could not be evaluated (e.g. a nonpositive curve value under
    /// a logarithm).
    Inconclusive,
    Violated,
}

impl Verdict {
    pub fn as_str(self) -> &'static str {
        match self {
            Verdict::Holds => "holds",
            Verdict::HoldsWithinCi => "holds_within_ci",
            Verdict::Inconclusive => "inconclusive",
            Verdict::Violated => "violated",
        }
    }
}

/// Apply the decision rule to one pair of estimates.
pub fn decide(lhs: &EstimateWithCI, rhs: &EstimateWithCI, relation: Relation) -> Verdict {
    let (small, large) = match relation {
        Relation::Le => (lhs, rhs),
        Relation::Ge => (rhs, lhs),
    };
    let slack = EXACT_SLACK * small.value.abs().max(large.value.abs());
    if small.value <= large.value + slack {
        Verdict::Holds
    } else if small.value - 3.0 * small.stderr > large.value + 3.0 * large.stderr + slack {
        Verdict::Violated
    } else {
        Verdict::HoldsWithinCi
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportPoint {
    pub t: f64,
    pub lhs: EstimateWithCI,
    pub rhs: EstimateWithCI,
    /// Slack in the direction of the claim: `rhs − lhs` for `≤`, `lhs − rhs`
    /// for `≥`.
    pub margin: f64,
    pub verdict: Verdict,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InequalityReport {
    pub name: String,
    pub relation: Relation,
    pub points: Vec<ReportPoint>,
}

#[derive(Serialize)]
struct CsvRow<'a> {
    name: &'a str,
    t: f64,
    lhs: f64,
    lhs_se: f64,
    rhs: f64,
    rhs_se: f64,
    verdict: &'a str,
}

impl InequalityReport {
    pub fn new(name: impl Into<String>, relation: Relation) -> Self {
        Self {
            name: name.into(),
            relation,
            points: Vec::new(),
        }
    }

    pub fn push(&mut self, t: f64, lhs: EstimateWithCI, rhs: EstimateWithCI) {
        let verdict = decide(&lhs, &rhs, self.relation);
        self.push_with(t, lhs, rhs, verdict);
    }

    pub fn push_with(&mut self, t: f64, lhs: EstimateWithCI, rhs: EstimateWithCI, verdict: Verdict) {
        let margin = match self.relation {
            Relation::Le => rhs.value - lhs.value,
            Relation::Ge => lhs.value - rhs.value,
        };
        self.points.push(ReportPoint {
            t,
            lhs,
            rhs,
            margin,
            verdict,
        });
    }

    /// The most severe verdict across points (`holds` for an empty report).
    pub fn worst(&self) -> Verdict {
        self.points.iter().map(|p| p.verdict).max().unwrap_or(Verdict::Holds)
    }

    pub fn any_violated(&self) -> bool {
        self.worst() == Verdict::Violated
    }

    /// Every point is `holds` or `holds_within_ci`.
    pub fn passes(&self) -> bool {
        self.worst() <= Verdict::HoldsWithinCi
    }

    pub fn count(&self, v: Verdict) -> usize {
        self.points.iter().filter(|p| p.verdict == v).count()
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        for p in &self.points {
            wr.serialize(CsvRow {
                name: &self.name,
                t: p.t,
                lhs: p.lhs.value,
                lhs_se: p.lhs.stderr,
                rhs: p.rhs.value,
                rhs_se: p.rhs.stderr,
                verdict: p.verdict.as_str(),
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

fn same_grid(a: &DecayCurve, b: &DecayCurve) -> Result<()> {
    if a.grid.same_as(&b.grid) {
        Ok(())
    } else {
        Err(Error::GridMismatch(format!(
            "{} curve has {} points, {} curve has {}",
            a.kind.as_str(),
            a.grid.len(),
            b.kind.as_str(),
            b.grid.len()
        )))
    }
}

/// Sum of two estimates with standard errors added linearly, which is
/// conservative under any correlation.
fn add(a: &EstimateWithCI, b: &EstimateWithCI) -> EstimateWithCI {
    EstimateWithCI {
        value: a.value + b.value,
        stderr: a.stderr + b.stderr,
        n_samples: a.n_samples.max(b.n_samples),
        n_batches: a.n_batches.max(b.n_batches),
        status: a.status.max_severity(b.status),
        ..a.clone()
    }
}

/// Point-by-point comparison of two curves on a shared grid.
pub fn compare_curves(name: &str, lhs: &DecayCurve, rhs: &DecayCurve, relation: Relation) -> Result<InequalityReport> {
    same_grid(lhs, rhs)?;
    let mut report = InequalityReport::new(name, relation);
    for ((&t, l), r) in lhs.times().iter().zip(&lhs.values).zip(&rhs.values) {
        report.push(t, l.clone(), r.clone());
    }
    Ok(report)
}

/// `∫Γ₂(P_t f) ≥ ∫Γ(P_t f)` at every grid time.
pub fn check_integrated_cd(gamma2: &DecayCurve, gamma: &DecayCurve) -> Result<InequalityReport> {
    compare_curves("integrated_cd", gamma2, gamma, Relation::Ge)
}

/// `∫Γ₂(P_t f) ≤ ∫Γ(P_t f) + ψ(t)` at every grid time.
pub fn check_ic(gamma2: &DecayCurve, gamma: &DecayCurve, psi: &PsiFunction) -> Result<InequalityReport> {
    same_grid(gamma2, gamma)?;
    let mut report = InequalityReport::new("ic", Relation::Le);
    for ((&t, l), g) in gamma2.times().iter().zip(&gamma2.values).zip(&gamma.values) {
        let rhs = add(g, &psi.evaluate(t)?);
        report.push(t, l.clone(), rhs);
    }
    Ok(report)
}

/// The criterion function `ψ` of an integrated curvature bound.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "form", rename_all = "snake_case")]
pub enum PsiFunction {
    Zero,
    /// `c·e^{-rate·t}`.
    Exponential { c: f64, rate: f64 },
    /// `(2β²/n)·e^{-4t}·exp(2β² e^{-2t})`: `2β²e^{-2t}` times the upper envelope
    /// `e^{-2t} e^{2β² e^{-2t}} / n` of `I(t)` for the free energy over `n`
    /// coordinates.
    RemEnvelope { beta: f64, n: f64 },
    /// A sampled curve, interpolated geometrically between positive points
    /// (linearly otherwise); beyond its last point an exponential tail fitted
    /// to the final points.
    Sampled { curve: DecayCurve },
}

const TAIL_FIT_POINTS: usize = 4;

impl PsiFunction {
    /// `ψ(t) = 2β² e^{-2t} I(t)` from an estimated `I` curve.
    pub fn from_i_curve(beta: BetaParam, curve: &DecayCurve) -> Self {
        let b2 = 2.0 * beta.get() * beta.get();
        PsiFunction::Sampled {
            curve: curve.reweighted(CurveKind::Psi, |t| b2 * (-2.0 * t).exp()),
        }
    }

    pub fn rem_envelope(beta: BetaParam, n: usize) -> Self {
        PsiFunction::RemEnvelope {
            beta: beta.get(),
            n: n as f64,
        }
    }

    fn value(&self, t: f64) -> f64 {
        match self {
            PsiFunction::Zero => 0.0,
            PsiFunction::Exponential { c, rate } => c * (-rate * t).exp(),
            PsiFunction::RemEnvelope { beta, n } => {
                let c = 2.0 * beta * beta;
                let u = (-2.0 * t).exp();
                c / n * u * u * (c * u).exp()
            }
            PsiFunction::Sampled { curve } => sampled_value(curve, t).value,
        }
    }

    /// `ψ(t)` for `t ≥ 0`, with an error bar for sampled forms.
    pub fn evaluate(&self, t: f64) -> Result<EstimateWithCI> {
        if !(t >= 0.0) || !t.is_finite() {
            return Err(Error::Precondition(format!("psi evaluated at t = {t}")));
        }
        match self {
            PsiFunction::Sampled { curve } => Ok(sampled_value(curve, t)),
            _ => Ok(EstimateWithCI::exact(self.value(t))),
        }
    }

    /// Exponential decay rate of `ψ` at infinity (`∞` for `ψ ≡ 0`).
    pub fn tail_rate(&self) -> Result<f64> {
        match self {
            PsiFunction::Zero => Ok(f64::INFINITY),
            PsiFunction::Exponential { c, rate } => Ok(if *c == 0.0 { f64::INFINITY } else { *rate }),
            PsiFunction::RemEnvelope { .. } => Ok(4.0),
            PsiFunction::Sampled { curve } => fitted_tail(curve).map(|(rate, _, _)| rate),
        }
    }

    /// Whether `∫_0^∞ e^{-2t} ∫_t^∞ e^{2s} ψ(s) ds dt` is finite. For the
    /// exponential family this is exact (`rate > 2`); for a sampled curve the
    /// decay rate fitted on its final points must exceed 2.
    pub fn check_integrable(&self) -> Result<()> {
        let rate = self.tail_rate()?;
        if rate > 2.0 {
            Ok(())
        } else {
            Err(Error::NotIntegrable(format!(
                "psi decays like e^(-{rate} t); e^(2s) psi(s) is not integrable unless the rate exceeds 2"
            )))
        }
    }
}

fn sampled_value(curve: &DecayCurve, t: f64) -> EstimateWithCI {
    let pts = curve.times();
    let last = pts.len() - 1;
    if t >= pts[last] {
        let e = &curve.values[last];
        let rate = fitted_tail(curve).map(|r| r.0).unwrap_or(0.0);
        return e.scaled((-rate * (t - pts[last])).exp());
    }
    let k = pts.partition_point(|&p| p <= t).saturating_sub(1);
    let (t0, t1) = (pts[k], pts[k + 1]);
    let w = (t - t0) / (t1 - t0);
    let (a, b) = (&curve.values[k], &curve.values[k + 1]);
    let value = if a.value > 0.0 && b.value > 0.0 {
        a.value.powf(1.0 - w) * b.value.powf(w)
    } else {
        (1.0 - w) * a.value + w * b.value
    };
    EstimateWithCI {
        value,
        stderr: (1.0 - w) * a.stderr + w * b.stderr,
        ..a.clone()
    }
}

/// Least-squares fit of `log ψ` on the final points: `(rate, t_last, ψ_last)`.
fn fitted_tail(curve: &DecayCurve) -> Result<(f64, f64, f64)> {
    let pts = curve.times();
    let m = pts.len();
    if m < TAIL_FIT_POINTS {
        return Err(Error::NotIntegrable(format!(
            "need at least {TAIL_FIT_POINTS} sampled points to assess the tail"
        )));
    }
    let tail: Vec<(f64, f64)> = (m - TAIL_FIT_POINTS..m).map(|k| (pts[k], curve.values[k].value)).collect();
    if tail.iter().all(|(_, v)| *v == 0.0) {
        return Ok((f64::INFINITY, pts[m - 1], 0.0));
    }
    if let Some((t, v)) = tail.iter().find(|(_, v)| !(*v > 0.0)) {
        return Err(Error::NotIntegrable(format!(
            "sampled psi is {v} at t = {t}; tail decay cannot be assessed"
        )));
    }
    let n = tail.len() as f64;
    let mt = tail.iter().map(|p| p.0).sum::<f64>() / n;
    let ml = tail.iter().map(|p| p.1.ln()).sum::<f64>() / n;
    let sxy: f64 = tail.iter().map(|(t, v)| (t - mt) * (v.ln() - ml)).sum();
    let sxx: f64 = tail.iter().map(|(t, _)| (t - mt) * (t - mt)).sum();
    Ok((-sxy / sxx, pts[m - 1], curve.values[m - 1].value))
}

/// `m + 4∫_0^∞ e^{-2t}∫_t^∞ e^{2s}ψ(s) ds dt = m + 2∫_0^∞ (e^{2s} − 1) ψ(s) ds`
/// in closed form, for the forms that have one.
pub fn theorem_variance_bound_closed_form(mean_grad_norm_sq: f64, psi: &PsiFunction) -> Option<f64> {
    match psi {
        PsiFunction::Zero => Some(mean_grad_norm_sq),
        PsiFunction::Exponential { c, rate } if *rate > 2.0 => Some(mean_grad_norm_sq + 4.0 * c / (rate * (rate - 2.0))),
        PsiFunction::RemEnvelope { beta, n } => {
            let c = 2.0 * beta * beta;
            Some(mean_grad_norm_sq + (exprel(c) - 1.0) / n)
        }
        _ => None,
    }
}

/// `(e^x − 1)/x`, continuous at 0.
fn exprel(x: f64) -> f64 {
    if x.abs() < 1e-8 {
        1.0 + x / 2.0
    } else {
        x.exp_m1() / x
    }
}

const GL_NODES: usize = 24;
const GL_PANELS: usize = 96;

/// Variance bound `|∫∇f|² + 4∫_0^∞ e^{-2t}∫_t^∞ e^{2s}ψ(s) ds dt`, evaluated as
/// `m + 2∫_0^∞ (e^{2s} − 1)ψ(s) ds` by composite Gauss–Legendre quadrature on
/// `[0, tail_t]` plus the exponential tail beyond.
pub fn theorem_variance_bound(mean_grad_norm_sq: f64, psi: &PsiFunction, tail_t: f64) -> Result<f64> {
    if !(tail_t > 0.0) || !tail_t.is_finite() {
        return Err(Error::InvalidConfig(format!("tail horizon must be positive, got {tail_t}")));
    }
    psi.check_integrable()?;
    if let PsiFunction::Zero = psi {
        return Ok(mean_grad_norm_sq);
    }
    let integrand = |s: f64| 2.0 * (2.0 * s).exp_m1() * psi.value(s);
    let body = match psi {
        PsiFunction::Sampled { curve } => {
            // Smooth between knots: integrate each piece separately.
            let mut knots: Vec<f64> = curve.times().iter().copied().filter(|&t| t < tail_t).collect();
            knots.push(tail_t);
            composite(&knots, 2, &integrand)
        }
        _ => {
            let knots: Vec<f64> = (0..=GL_PANELS).map(|k| tail_t * k as f64 / GL_PANELS as f64).collect();
            composite(&knots, 1, &integrand)
        }
    };
    let rate = psi.tail_rate()?;
    let tail = if rate.is_infinite() {
        0.0
    } else {
        // ∫_T^∞ 2(e^{2s} − 1) ψ(T) e^{-rate(s−T)} ds
        let p = psi.value(tail_t);
        2.0 * p * ((2.0 * tail_t).exp() / (rate - 2.0) - 1.0 / rate)
    };
    Ok(mean_grad_norm_sq + body + tail)
}

fn composite(knots: &[f64], sub: usize, f: &impl Fn(f64) -> f64) -> f64 {
    let rule = GaussLegendre::new(NonZeroUsize::new(GL_NODES).unwrap());
    let mut total = 0.0;
    for w in knots.windows(2) {
        let h = (w[1] - w[0]) / sub as f64;
        for k in 0..sub {
            let a = w[0] + k as f64 * h;
            total += rule.integrate(a, a + h, f);
        }
    }
    total
}

/// `2/(1 − e^{-2T}) ∫_0^T I(t) dt` by trapezoid; `T` must be a grid point.
pub fn cel_bound(curve: &DecayCurve, t_end: f64) -> Result<EstimateWithCI> {
    let idx = curve
        .grid
        .index_of(t_end)
        .ok_or_else(|| Error::GridMismatch(format!("T = {t_end} is not a grid point")))?;
    if !(t_end > 0.0) {
        return Err(Error::Precondition("T must be positive".into()));
    }
    let w = curve.grid.trapezoid_weights_to(idx);
    let pref = 2.0 / (-(-2.0 * t_end).exp_m1());
    let (mut v, mut se) = (0.0, 0.0);
    for (wk, e) in w.iter().zip(&curve.values) {
        v += wk * e.value;
        se += wk * e.stderr;
    }
    Ok(EstimateWithCI {
        value: pref * v,
        stderr: pref * se,
        ..curve.values[0].clone()
    })
}

/// `I(s) ≤ I(0)^{1−s/T} I(T)^{s/T}` for grid points `0 < s < T`.
pub fn baudoin_wang_check(curve: &DecayCurve, t_end: f64) -> Result<InequalityReport> {
    let idx = curve
        .grid
        .index_of(t_end)
        .ok_or_else(|| Error::GridMismatch(format!("T = {t_end} is not a grid point")))?;
    let t0 = curve.times()[0];
    if t0 != 0.0 {
        return Err(Error::GridMismatch("the curve must start at t = 0".into()));
    }
    if !(t_end > 0.0) {
        return Err(Error::Precondition("T must be positive".into()));
    }
    let i0 = &curve.values[0];
    let it = &curve.values[idx];
    let mut report = InequalityReport::new("baudoin_wang", Relation::Le);
    let usable = i0.value > 0.0 && it.value > 0.0;
    for k in 1..idx {
        let s = curve.times()[k];
        let theta = s / t_end;
        let lhs = curve.values[k].clone();
        if !usable {
            report.push_with(s, lhs, EstimateWithCI::exact(f64::NAN), Verdict::Inconclusive);
            continue;
        }
        let value = i0.value.powf(1.0 - theta) * it.value.powf(theta);
        let rel = (1.0 - theta) * i0.stderr / i0.value + theta * it.stderr / it.value;
        let rhs = EstimateWithCI {
            value,
            stderr: value * rel,
            ..i0.clone()
        };
        report.push(s, lhs, rhs);
    }
    Ok(report)
}

/// `(1 − e^{-x})/x`, continuous at 0.
fn bracket(x: f64) -> f64 {
    if x < 1e-6 {
        1.0 - x / 2.0 + x * x / 6.0
    } else {
        -(-x).exp_m1() / x
    }
}

/// `(2T·I(0)/(1 − e^{-2T}))·[1/log a − 1/(a log a)]` with `a = I(0)/I(T)`.
///
/// The bracket equals `(1 − e^{-x})/x` at `x = log a` and is extended
/// continuously to `a = 1`, where it equals 1.
pub fn partial_curvature_bound(i0: f64, it: f64, t_end: f64) -> Result<f64> {
    if !(i0 > 0.0 && i0.is_finite()) || !(it > 0.0 && it.is_finite()) {
        return Err(Error::Precondition(format!("I(0) and I(T) must be positive, got {i0} and {it}")));
    }
    if !(t_end > 0.0 && t_end.is_finite()) {
        return Err(Error::Precondition(format!("T must be positive, got {t_end}")));
    }
    let x = (i0 / it).ln();
    if x < -EXACT_SLACK {
        return Err(Error::Precondition(format!("a = I(0)/I(T) = {} < 1", i0 / it)));
    }
    let pref = 2.0 * t_end / (-(-2.0 * t_end).exp_m1());
    Ok(pref * i0 * bracket(x.max(0.0)))
}

/// Random audit of `Σ_j (∫u_j v dμ)² ≤ (∫v dμ)²` for `u_j ≥ 0`, `Σ_j u_j ≤ 1`,
/// `v ≥ 0` and discrete probability measures `μ` with up to 50 atoms and up
/// to 20 functions `u_j`.
pub fn simplex_smoothing_check(rng: &RngStream, trials: usize) -> Result<InequalityReport> {
    if trials == 0 {
        return Err(Error::Precondition("trials must be >= 1".into()));
    }
    let results = crate::par::map_range(0..trials, |k| {
        let mut r = rng.derive(k as u64).rng();
        let atoms = r.random_range(1..=50usize);
        let n = r.random_range(1..=20usize);
        let mut mu: Vec<f64> = (0..atoms).map(|_| r.random::<f64>()).collect();
        let total: f64 = mu.iter().sum();
        mu.iter_mut().for_each(|m| *m /= total);
        let v: Vec<f64> = (0..atoms).map(|_| 10.0 * r.random::<f64>()).collect();
        let u: Vec<Vec<f64>> = (0..atoms)
            .map(|_| {
                // n + 1 exponentials normalized, the last one dropped: a point
                // of the sub-simplex, scaled further to reach its interior.
                let e: Vec<f64> = (0..=n).map(|_| -(1.0 - r.random::<f64>()).ln()).collect();
                let s: f64 = e.iter().sum();
                let shrink = r.random::<f64>();
                e[..n].iter().map(|x| x / s * (1.0 - 0.5 * shrink)).collect()
            })
            .collect();
        simplex_sides(&mu, &u, &v)
    });
    let mut report = InequalityReport::new("simplex_smoothing", Relation::Le);
    for (k, (lhs, rhs)) in results.into_iter().enumerate() {
        report.push(k as f64, EstimateWithCI::exact(lhs), EstimateWithCI::exact(rhs));
    }
    Ok(report)
}

/// `(Σ_j (∫u_j v dμ)², (∫v dμ)²)` for `u[atom][j]`.
pub fn simplex_sides(mu: &[f64], u: &[Vec<f64>], v: &[f64]) -> (f64, f64) {
    let n = u.first().map_or(0, Vec::len);
    let lhs = (0..n)
        .map(|j| {
            let s: f64 = mu.iter().zip(u).zip(v).map(|((m, uj), vx)| m * uj[j] * vx).sum();
            s * s
        })
        .sum();
    let iv: f64 = mu.iter().zip(v).map(|(m, vx)| m * vx).sum();
    (lhs, iv * iv)
}

/// `Var(f) ≤ ∫Γ(f)dμ` from one set of draws.
pub fn poincare_check<F: SmoothFunction + ?Sized>(
    f: &F,
    measure: &GaussianMeasure,
    cfg: &EstimatorConfig,
    rng: &RngStream,
) -> Result<InequalityReport> {
    let values = mc_samples(|r| f.value(&measure.draw(r)), cfg, rng, |_| true)?;
    let grads = mc_samples(
        |r| {
            let g = f.gradient(&measure.draw(r));
            measure.metric(&g, &g)
        },
        cfg,
        rng,
        |_| true,
    )?;
    let mut report = InequalityReport::new(format!("poincare[{}]", f.label()), Relation::Le);
    report.push(0.0, values.variance(), grads.mean());
    Ok(report)
}

/// The grid over which a sampled `ψ` from `curve` is known.
pub fn psi_grid(psi: &PsiFunction) -> Option<&TimeGrid> {
    match psi {
        PsiFunction::Sampled { curve } => Some(&curve.grid),
        _ => None,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::semigroup::CurveKind;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn grid() -> TimeGrid {
        TimeGrid::uniform(2.0, 9).unwrap()
    }

    #[test]
    fn decision_rule() {
        let e = |v: f64, s: f64| EstimateWithCI { stderr: s, ..EstimateWithCI::exact(v) };
        assert_eq!(decide(&e(1.0, 0.0), &e(1.0, 0.0), Relation::Le), Verdict::Holds);
        assert_eq!(decide(&e(1.1, 0.1), &e(1.0, 0.0), Relation::Le), Verdict::HoldsWithinCi);
        assert_eq!(decide(&e(2.0, 0.1), &e(1.0, 0.1), Relation::Le), Verdict::Violated);
        assert_eq!(decide(&e(0.999, 0.0), &e(1.0, 0.0), Relation::Ge), Verdict::Violated);
        assert_eq!(decide(&e(1.0, 0.0), &e(0.5, 0.0), Relation::Ge), Verdict::Holds);
    }

    #[test]
    fn cd_checker_self_test() {
        let g = DecayCurve::from_fn(CurveKind::I, grid(), |t| 3.0 * (-2.0 * t).exp());
        let g2 = g.reweighted(CurveKind::Gamma2, |_| 1.0);
        let r = check_integrated_cd(&g2, &g).unwrap();
        assert!(r.points.iter().all(|p| p.verdict == Verdict::Holds));
        let low = g.reweighted(CurveKind::Gamma2, |_| 0.999);
        assert!(check_integrated_cd(&low, &g).unwrap().any_violated());
        let other = DecayCurve::from_fn(CurveKind::I, TimeGrid::uniform(2.0, 5).unwrap(), |_| 1.0);
        assert!(matches!(check_integrated_cd(&g2, &other), Err(Error::GridMismatch(_))));
    }

    #[test]
    fn ic_with_zero_psi_on_linear() {
        let g = DecayCurve::from_fn(CurveKind::I, grid(), |t| (-2.0 * t).exp());
        let r = check_ic(&g, &g, &PsiFunction::Zero).unwrap();
        assert_eq!(r.worst(), Verdict::Holds);
        assert!(r.points.iter().all(|p| p.margin == 0.0));
    }

    #[test]
    fn report_csv_columns() {
        let g = DecayCurve::from_fn(CurveKind::I, TimeGrid::uniform(1.0, 2).unwrap(), |_| 1.0);
        let csv = check_integrated_cd(&g, &g).unwrap().to_csv_string().unwrap();
        let mut lines = csv.lines();
        assert_eq!(lines.next().unwrap(), "name,t,lhs,lhs_se,rhs,rhs_se,verdict");
        assert_eq!(lines.next().unwrap(), "integrated_cd,0.0,1.0,0.0,1.0,0.0,holds");
    }

    #[test]
    fn theorem_bound_zero_psi() {
        assert_eq!(theorem_variance_bound(2.5, &PsiFunction::Zero, 10.0).unwrap(), 2.5);
    }

    #[test]
    fn theorem_bound_exponential_family() {
        let e4 = PsiFunction::Exponential { c: 1.0, rate: 4.0 };
        assert_relative_eq!(theorem_variance_bound_closed_form(0.0, &e4).unwrap(), 0.5, epsilon = 1e-15);
        assert_relative_eq!(theorem_variance_bound(0.0, &e4, 12.0).unwrap(), 0.5, epsilon = 1e-8);
        let e2 = PsiFunction::Exponential { c: 1.0, rate: 2.0 };
        assert!(matches!(theorem_variance_bound(0.0, &e2, 12.0), Err(Error::NotIntegrable(_))));
        assert!(theorem_variance_bound_closed_form(0.0, &e2).is_none());
        let e6 = PsiFunction::Exponential { c: 3.0, rate: 6.0 };
        assert_relative_eq!(theorem_variance_bound(1.0, &e6, 12.0).unwrap(), 1.0 + 12.0 / 24.0, epsilon = 1e-8);
    }

    #[test]
    fn rem_envelope_quadrature_matches_closed_form() {
        for (beta, n) in [(0.2, 64usize), (0.5, 1024), (0.58, 100), (1.5, 16)] {
            let psi = PsiFunction::rem_envelope(BetaParam::new(beta).unwrap(), n);
            let m = 1.0 / n as f64;
            let closed = theorem_variance_bound_closed_form(m, &psi).unwrap();
            let quad = theorem_variance_bound(m, &psi, 14.0).unwrap();
            assert!((closed - quad).abs() <= 1e-8 * closed, "beta {beta}: {closed} vs {quad}");
            let c = 2.0 * beta * beta;
            assert_relative_eq!(closed, c.exp_m1() / (c * n as f64), max_relative = 1e-12);
            if beta * beta < 0.5 {
                let printed = (1.0 - beta * beta) / (1.0 - 2.0 * beta * beta) / n as f64;
                assert!(closed <= printed, "beta {beta}");
            }
        }
    }

    #[test]
    fn sampled_psi_integrability() {
        let g = TimeGrid::uniform(6.0, 25).unwrap();
        let good = PsiFunction::Sampled { curve: DecayCurve::from_fn(CurveKind::Psi, g.clone(), |t| (-4.0 * t).exp()) };
        assert!(good.check_integrable().is_ok());
        let v = theorem_variance_bound(0.0, &good, 6.0).unwrap();
        assert!((v - 0.5).abs() < 1e-8, "{v}");
        let bad = PsiFunction::Sampled { curve: DecayCurve::from_fn(CurveKind::Psi, g, |t| (-1.5 * t).exp()) };
        assert!(matches!(bad.check_integrable(), Err(Error::NotIntegrable(_))));
    }

    #[test]
    fn cel_bound_linear_is_tight() {
        let g = TimeGrid::geometric(3.0, 4001, 0.5).unwrap().with_knots(&[0.5, 1.0, 2.0]).unwrap();
        let c = DecayCurve::from_fn(CurveKind::I, g, |t| 5.0 * (-2.0 * t).exp());
        for t in [0.5, 1.0, 2.0, 3.0] {
            let b = cel_bound(&c, t).unwrap();
            assert!((b.value - 5.0).abs() / 5.0 < 1e-6, "T={t}: {}", b.value);
        }
        assert!(cel_bound(&c, 0.123456).is_err());
    }

    #[test]
    fn baudoin_wang_equality_and_violation() {
        let g = grid();
        let lin = DecayCurve::from_fn(CurveKind::I, g.clone(), |t| 2.0 * (-2.0 * t).exp());
        let r = baudoin_wang_check(&lin, 2.0).unwrap();
        assert!(r.passes());
        assert!(r.points.iter().all(|p| (p.margin).abs() < 1e-12));
        // log-concave: exp(-t²) lies above its chord in log scale.
        let concave = DecayCurve::from_fn(CurveKind::I, g.clone(), |t| (-t * t).exp());
        assert!(baudoin_wang_check(&concave, 2.0).unwrap().any_violated());
        let zero = DecayCurve::from_fn(CurveKind::I, g, |t| if t >= 2.0 { 0.0 } else { 1.0 });
        assert_eq!(baudoin_wang_check(&zero, 2.0).unwrap().worst(), Verdict::Inconclusive);
    }

    #[test]
    fn partial_bound_exponential_case() {
        for (i0, t) in [(1.0f64, 0.5f64), (0.3, 2.0), (7.0, 5.0)] {
            let it = i0 * (-2.0 * t).exp();
            let b = partial_curvature_bound(i0, it, t).unwrap();
            assert!((b - i0).abs() <= 1e-10 * i0, "{b} vs {i0}");
        }
    }

    #[test]
    fn partial_bound_limit_and_domain() {
        let t: f64 = 0.7;
        let pref = 2.0 * t / (1.0 - (-2.0 * t).exp());
        assert_relative_eq!(partial_curvature_bound(1.0, 1.0, t).unwrap(), pref, max_relative = 1e-15);
        let near = partial_curvature_bound(1.0, 1.0 / (1.0 + 1e-9), t).unwrap();
        assert_relative_eq!(near, pref, max_relative = 1e-8);
        for x in [1e-7, 5e-7, 2e-6] {
            let series = bracket(x);
            let direct = (1.0 - (-x).exp()) / x;
            assert!((series - direct).abs() < 1e-9);
        }
        assert!(partial_curvature_bound(1.0, 2.0, t).is_err());
        assert!(partial_curvature_bound(0.0, 1.0, t).is_err());
        assert!(partial_curvature_bound(1.0, 0.5, 0.0).is_err());
    }

    #[test]
    fn simplex_special_cases() {
        let mu = vec![0.2, 0.5, 0.3];
        let v = vec![1.0, 4.0, 2.0];
        let n = 4;
        let flat: Vec<Vec<f64>> = (0..3).map(|_| vec![1.0 / n as f64; n]).collect();
        let (l, r) = simplex_sides(&mu, &flat, &v);
        assert_relative_eq!(l, r / n as f64, max_relative = 1e-14);
        let single: Vec<Vec<f64>> = (0..3).map(|_| vec![1.0, 0.0, 0.0]).collect();
        let (l, r) = simplex_sides(&mu, &single, &v);
        assert_relative_eq!(l, r, max_relative = 1e-15);
    }

    #[test]
    fn simplex_audit() {
        let r = simplex_smoothing_check(&RngStream::from_seed(4), 1000).unwrap();
        assert_eq!(r.points.len(), 1000);
        assert_eq!(r.count(Verdict::Violated), 0);
        assert_eq!(r.count(Verdict::HoldsWithinCi), 0);
    }

    #[test]
    fn poincare_on_free_energy() {
        let f = crate::functions::FreeEnergy::new(8, 1.0).unwrap();
        let g = GaussianMeasure::standard(8);
        let r = poincare_check(&f, &g, &EstimatorConfig::fixed(20_000, 40), &RngStream::from_seed(2)).unwrap();
        assert!(r.passes());
    }

    proptest! {
        #[test]
        fn partial_bound_scale_equivariant(
            i0 in 1e-6f64..1e3,
            ratio in 1.0f64..1e6,
            t in 1e-3f64..10.0,
            lambda in 1e-3f64..1e3,
        ) {
            let it = i0 / ratio;
            let b = partial_curvature_bound(i0, it, t).unwrap();
            let bl = partial_curvature_bound(lambda * i0, lambda * it, t).unwrap();
            prop_assert!((bl - lambda * b).abs() <= 1e-12 * bl.abs());
        }

        #[test]
        fn partial_bound_monotone_in_endpoints(
            i0 in 1e-3f64..10.0,
            r1 in 1.0f64..100.0,
            r2 in 1.0f64..100.0,
            t in 0.01f64..5.0,
        ) {
            let (lo, hi) = if r1 < r2 { (r1, r2) } else { (r2, r1) };
            let b_hi = partial_curvature_bound(i0, i0 / lo, t).unwrap();
            let b_lo = partial_curvature_bound(i0, i0 / hi, t).unwrap();
            prop_assert!(b_lo <= b_hi * (1.0 + 1e-12));
        }

        #[test]
        fn simplex_lemma_random(
            seed in any::<u64>(),
        ) {
            let r = simplex_smoothing_check(&RngStream::from_seed(seed), 8).unwrap();
            prop_assert_eq!(r.count(Verdict::Violated), 0);
        }
    }
}
