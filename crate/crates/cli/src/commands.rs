use anyhow::{bail, ensure, Result};
use clap::Subcommand;
use serde::Serialize;
use serde_json::{json, Value};

use gammalab::criteria::{
    baudoin_wang_check, cel_bound, check_ic, check_integrated_cd, decide, partial_curvature_bound,
    simplex_smoothing_check, InequalityReport, PsiFunction, Relation, Verdict,
};
use gammalab::functions::{CoordinateMax, FreeEnergy, Linear, SmoothFunction};
use gammalab::models::rem::rem_high_temp_beta_max;
use gammalab::models::{
    ground_state_relation, rem_chatterjee_low_temp_bound, rem_free_energy_variance, rem_high_temp_bound,
    rem_low_temp_bound_estimate, sk_free_energy_variance, sk_logn_bound, sk_measure, sk_variance_bound,
};
use gammalab::semigroup::{gamma_curves, i_curve, i_r_curve, variance_dynamical, FrobeniusAlgorithm, IrNormalization};
use gammalab::stats::mc_variance;
use gammalab::{BetaParam, DecayCurve, EstimateWithCI, EstimatorConfig, GaussianMeasure, MehlerConfig, RngStream, TimeGrid};

use crate::params::{Curve, Format, Model, Params};

#[derive(Debug, Clone, Subcommand)]
pub enum Command {
    /// Integrated curvature criterion `∫Γ₂(P_t f) ≤ ∫Γ(P_t f) + 2β²e^{-2t}I(t)` for the REM free energy.
    IcCheck(Params),
    /// Integrated `Γ₂ ≥ Γ` along the semigroup.
    CdCheck(Params),
    /// A decay curve (`I`, Hessian, `Γ₂` or `I_r`) on the time grid.
    SemigroupCurve(Params),
    /// `2∫I` against the direct Monte Carlo variance.
    VarianceTable(Params),
    /// Disorder variance against the model's variance bound, per `n`.
    BoundsTable(Params),
    /// Log-convexity `I(s) ≤ I(0)^{1−s/T} I(T)^{s/T}`.
    BwCheck(Params),
    /// `Var f ≤ 2∫_0^T I / (1 − e^{-2T})`.
    CelCheck(Params),
    /// Variance bound from `I(0)`, `I(T)` and `T`.
    PartialBound(Params),
    /// SK ground state against the free energy.
    GroundState(Params),
    /// Randomized audit of the simplex smoothing lemma.
    SimplexLemma(Params),
    /// Run a manifest file as is.
    Run {
        /// Manifest file.
        path: std::path::PathBuf,
    },
}

impl Command {
    pub fn id(&self) -> &'static str {
        match self {
            Self::IcCheck(_) => "ic-check",
            Self::CdCheck(_) => "cd-check",
            Self::SemigroupCurve(_) => "semigroup-curve",
            Self::VarianceTable(_) => "variance-table",
            Self::BoundsTable(_) => "bounds-table",
            Self::BwCheck(_) => "bw-check",
            Self::CelCheck(_) => "cel-check",
            Self::PartialBound(_) => "partial-bound",
            Self::GroundState(_) => "ground-state",
            Self::SimplexLemma(_) => "simplex-lemma",
            Self::Run { .. } => "run",
        }
    }

    pub fn params(&self) -> Option<&Params> {
        match self {
            Self::IcCheck(p)
            | Self::CdCheck(p)
            | Self::SemigroupCurve(p)
            | Self::VarianceTable(p)
            | Self::BoundsTable(p)
            | Self::BwCheck(p)
            | Self::CelCheck(p)
            | Self::PartialBound(p)
            | Self::GroundState(p)
            | Self::SimplexLemma(p) => Some(p),
            Self::Run { .. } => None,
        }
    }
}

pub const COMMANDS: [&str; 10] = [
    "ic-check",
    "cd-check",
    "semigroup-curve",
    "variance-table",
    "bounds-table",
    "bw-check",
    "cel-check",
    "partial-bound",
    "ground-state",
    "simplex-lemma",
];

/// What a subcommand produced.
pub struct Outcome {
    pub result: Value,
    pub csv: String,
    pub violated: bool,
}

pub fn execute(command: &str, p: &Params) -> Result<Outcome> {
    match command {
        "ic-check" => ic_check(p),
        "cd-check" => cd_check(p),
        "semigroup-curve" => semigroup_curve(p),
        "variance-table" => variance_table(p),
        "bounds-table" => bounds_table(p),
        "bw-check" => bw_check(p),
        "cel-check" => cel_check(p),
        "partial-bound" => partial_bound(p),
        "ground-state" => ground_state(p),
        "simplex-lemma" => simplex_lemma(p),
        other => bail!("unknown command `{other}`; expected one of {}", COMMANDS.join(", ")),
    }
}

fn stream(p: &Params, label: &str, k: usize) -> RngStream {
    RngStream::from_seed(p.seed()).derive_named(label).derive(k as u64)
}

fn mehler_cfg(p: &Params) -> Result<MehlerConfig> {
    let cfg = MehlerConfig::fixed(p.samples.unwrap_or(4096), p.batches.unwrap_or(32), p.inner.unwrap_or(32))
        .antithetic(p.antithetic.unwrap_or(false));
    cfg.validate()?;
    Ok(cfg)
}

fn estimator_cfg(p: &Params) -> Result<EstimatorConfig> {
    let cfg = EstimatorConfig::fixed(p.samples.unwrap_or(4096), p.batches.unwrap_or(32));
    cfg.validate()?;
    Ok(cfg)
}

fn grid(p: &Params) -> Result<TimeGrid> {
    Ok(TimeGrid::geometric(
        p.t_max.unwrap_or(3.0),
        p.grid_points.unwrap_or(12),
        p.stretch.unwrap_or(2.0),
    )?)
}

fn combos(p: &Params) -> Vec<(usize, usize, f64)> {
    let mut out = Vec::new();
    for &n in p.sizes() {
        for &b in p.betas() {
            out.push((out.len(), n, b));
        }
    }
    out
}

fn beta(b: f64) -> Result<BetaParam> {
    Ok(BetaParam::new(b)?)
}

/// The function and measure studied for a model at `(n, β)`.
fn target(model: Model, n: usize, b: f64) -> Result<(Box<dyn SmoothFunction>, GaussianMeasure)> {
    Ok(match model {
        Model::Rem => (Box::new(FreeEnergy::new(n, b)?), GaussianMeasure::standard(n)),
        Model::Sk => (Box::new(FreeEnergy::new(1 << n.min(24), b)?), sk_measure(n)?),
        Model::Linear => (
            Box::new(Linear::new((0..n).map(|i| 1.0 / (i + 1) as f64).collect())?),
            GaussianMeasure::standard(n),
        ),
        Model::CoordinateMax => (Box::new(CoordinateMax::new(n)?), GaussianMeasure::standard(n)),
    })
}

fn label(report: &mut InequalityReport, n: usize, b: f64) {
    report.name = format!("{}[n={n},beta={b}]", report.name);
}

fn reports_csv(reports: &[InequalityReport]) -> Result<String> {
    let mut out = String::new();
    for (k, r) in reports.iter().enumerate() {
        let body = r.to_csv_string()?;
        let skip = if k == 0 { 0 } else { body.find('\n').map_or(body.len(), |i| i + 1) };
        out.push_str(&body[skip..]);
    }
    Ok(out)
}

fn rows_csv<T: Serialize>(rows: &[T]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r)?;
    }
    Ok(String::from_utf8(w.into_inner()?)?)
}

fn report_outcome(reports: Vec<InequalityReport>) -> Result<Outcome> {
    Ok(Outcome {
        violated: reports.iter().any(InequalityReport::any_violated),
        csv: reports_csv(&reports)?,
        result: serde_json::to_value(&reports)?,
    })
}

fn ic_check(p: &Params) -> Result<Outcome> {
    ensure!(p.model() == Model::Rem, "ic-check is defined for the REM free energy (--model rem)");
    let (g, cfg) = (grid(p)?, mehler_cfg(p)?);
    let mut reports = Vec::new();
    for (k, n, b) in combos(p) {
        let (f, measure) = target(p.model(), n, b)?;
        let c = gamma_curves(f.as_ref(), &measure, &g, &cfg, FrobeniusAlgorithm::Auto, &stream(p, "ic-check", k))?;
        let psi = PsiFunction::from_i_curve(beta(b)?, &c.gamma);
        let mut r = check_ic(&c.gamma2, &c.gamma, &psi)?;
        label(&mut r, n, b);
        reports.push(r);
    }
    report_outcome(reports)
}

fn cd_check(p: &Params) -> Result<Outcome> {
    ensure!(p.model() != Model::Sk, "cd-check needs a standard Gaussian model");
    let (g, cfg) = (grid(p)?, mehler_cfg(p)?);
    let mut reports = Vec::new();
    for (k, n, b) in combos(p) {
        let (f, measure) = target(p.model(), n, b)?;
        let c = gamma_curves(f.as_ref(), &measure, &g, &cfg, FrobeniusAlgorithm::Auto, &stream(p, "cd-check", k))?;
        let mut r = check_integrated_cd(&c.gamma2, &c.gamma)?;
        label(&mut r, n, b);
        reports.push(r);
    }
    report_outcome(reports)
}

fn curve_for(p: &Params, n: usize, b: f64, k: usize) -> Result<DecayCurve> {
    let (g, cfg) = (grid(p)?, mehler_cfg(p)?);
    let (f, measure) = target(p.model(), n, b)?;
    let rng = stream(p, "semigroup-curve", k);
    Ok(match p.curve.unwrap_or(Curve::I) {
        Curve::I => i_curve(f.as_ref(), &measure, &g, &cfg, &rng)?,
        Curve::Hessian => gamma_curves(f.as_ref(), &measure, &g, &cfg, FrobeniusAlgorithm::Auto, &rng)?.hessian,
        Curve::Gamma2 => gamma_curves(f.as_ref(), &measure, &g, &cfg, FrobeniusAlgorithm::Auto, &rng)?.gamma2,
        Curve::Ir => i_r_curve(
            f.as_ref(),
            &measure,
            p.r.unwrap_or(1),
            IrNormalization::VarianceConsistent,
            &g,
            &cfg,
            &rng,
        )?,
    })
}

fn semigroup_curve(p: &Params) -> Result<Outcome> {
    let cs = combos(p);
    ensure!(
        p.format() == Format::Json || cs.len() == 1,
        "CSV curves hold one (n, beta) pair; got {}",
        cs.len()
    );
    let mut curves = Vec::new();
    let mut csv = String::new();
    for (k, n, b) in cs {
        let c = curve_for(p, n, b, k)?;
        csv = c.to_csv_string()?;
        curves.push(json!({ "n": n, "beta": b, "curve": c }));
    }
    Ok(Outcome {
        result: Value::Array(curves),
        csv,
        violated: false,
    })
}

#[derive(Serialize)]
struct VarianceRow {
    n: usize,
    beta: f64,
    dynamical: f64,
    dynamical_se: f64,
    direct: f64,
    direct_se: f64,
    agree: bool,
}

fn variance_table(p: &Params) -> Result<Outcome> {
    let (g, mcfg, ecfg) = (grid(p)?, mehler_cfg(p)?, estimator_cfg(p)?);
    let mut rows = Vec::new();
    for (k, n, b) in combos(p) {
        let (f, measure) = target(p.model(), n, b)?;
        let dyn_v = variance_dynamical(f.as_ref(), &measure, &g, &mcfg, &stream(p, "variance-dynamical", k))?;
        let direct = mc_variance(|r| f.value(&measure.draw(r)), &ecfg, &stream(p, "variance-direct", k))?;
        rows.push(VarianceRow {
            n,
            beta: b,
            dynamical: dyn_v.value,
            dynamical_se: dyn_v.stderr,
            direct: direct.value,
            direct_se: direct.stderr,
            agree: dyn_v.overlaps(&direct, gammalab::stats::Z95),
        });
    }
    Ok(Outcome {
        violated: rows.iter().any(|r| !r.agree),
        csv: rows_csv(&rows)?,
        result: serde_json::to_value(&rows)?,
    })
}

#[derive(Serialize)]
struct BoundRow {
    n: usize,
    beta: f64,
    mc_var: f64,
    mc_se: f64,
    bound: f64,
    bound_se: f64,
    slack: f64,
    bound_kind: &'static str,
    verdict: Verdict,
}

#[derive(Serialize)]
struct BoundCsvRow {
    n: usize,
    mc_var: f64,
    mc_se: f64,
    bound: f64,
    slack: f64,
}

fn bounds_table(p: &Params) -> Result<Outcome> {
    let cfg = estimator_cfg(p)?;
    let model = p.model();
    ensure!(matches!(model, Model::Rem | Model::Sk), "bounds-table needs --model rem or --model sk");
    ensure!(
        p.format() == Format::Json || p.betas().len() == 1,
        "the CSV bounds table holds one beta; got {}",
        p.betas().len()
    );
    let mut rows = Vec::new();
    for (k, n, b) in combos(p) {
        let bp = beta(b)?;
        let rng = stream(p, "bounds-mc", k);
        let (var, bound, kind) = match model {
            Model::Rem => {
                let var = rem_free_energy_variance(n, bp, &cfg, &rng)?;
                if b < rem_high_temp_beta_max() {
                    (var, EstimateWithCI::exact(rem_high_temp_bound(n, bp)?), "rem_high_temperature")
                } else {
                    let c = p.constant.unwrap_or(1.0);
                    let est = rem_low_temp_bound_estimate(n, bp, c, &cfg, &stream(p, "bounds-norms", k))?;
                    (var, est, "rem_hypercontractive")
                }
            }
            _ => {
                let var = sk_free_energy_variance(n, bp, &cfg, &rng)?;
                if b < 0.5 {
                    (var, EstimateWithCI::exact(sk_variance_bound(n, bp)?), "sk_high_temperature")
                } else {
                    let r = sk_logn_bound(n, bp, p.gamma.unwrap_or(0.1))?;
                    (var, EstimateWithCI::exact(r.bound), "sk_partial_curvature")
                }
            }
        };
        rows.push(BoundRow {
            n,
            beta: b,
            mc_var: var.value,
            mc_se: var.stderr,
            bound: bound.value,
            bound_se: bound.stderr,
            slack: bound.value - var.value,
            bound_kind: kind,
            verdict: decide(&var, &bound, Relation::Le),
        });
    }
    let csv_rows: Vec<BoundCsvRow> = rows
        .iter()
        .map(|r| BoundCsvRow {
            n: r.n,
            mc_var: r.mc_var,
            mc_se: r.mc_se,
            bound: r.bound,
            slack: r.slack,
        })
        .collect();
    Ok(Outcome {
        violated: rows.iter().any(|r| r.verdict == Verdict::Violated),
        csv: rows_csv(&csv_rows)?,
        result: serde_json::to_value(&rows)?,
    })
}

fn bw_check(p: &Params) -> Result<Outcome> {
    let (g, cfg) = (grid(p)?, mehler_cfg(p)?);
    let mut reports = Vec::new();
    for (k, n, b) in combos(p) {
        let (f, measure) = target(p.model(), n, b)?;
        let curve = i_curve(f.as_ref(), &measure, &g, &cfg, &stream(p, "bw-check", k))?;
        let mut r = baudoin_wang_check(&curve, g.last())?;
        label(&mut r, n, b);
        reports.push(r);
    }
    report_outcome(reports)
}

fn cel_check(p: &Params) -> Result<Outcome> {
    let ends = p.t_end.clone().unwrap_or_else(|| vec![0.5, 1.0, 2.0]);
    let g = grid(p)?.with_knots(&ends)?;
    let (mcfg, ecfg) = (mehler_cfg(p)?, estimator_cfg(p)?);
    let mut reports = Vec::new();
    for (k, n, b) in combos(p) {
        let (f, measure) = target(p.model(), n, b)?;
        let curve = i_curve(f.as_ref(), &measure, &g, &mcfg, &stream(p, "cel-curve", k))?;
        let var = mc_variance(|r| f.value(&measure.draw(r)), &ecfg, &stream(p, "cel-variance", k))?;
        let mut r = InequalityReport::new("cel", Relation::Ge);
        for &t in &ends {
            r.push(t, cel_bound(&curve, t)?, var.clone());
        }
        label(&mut r, n, b);
        reports.push(r);
    }
    report_outcome(reports)
}

#[derive(Serialize)]
struct PartialRow {
    n: Option<usize>,
    beta: Option<f64>,
    t: f64,
    i0: f64,
    it: f64,
    bound: f64,
}

fn partial_bound(p: &Params) -> Result<Outcome> {
    let mut rows = Vec::new();
    let mut detail = Vec::new();
    if let (Some(i0), Some(it)) = (p.i0, p.it) {
        let t = p.t_end.as_ref().and_then(|v| v.first().copied()).unwrap_or(1.0);
        rows.push(PartialRow {
            n: None,
            beta: None,
            t,
            i0,
            it,
            bound: partial_curvature_bound(i0, it, t)?,
        });
    } else {
        for (_, n, b) in combos(p) {
            let bp = beta(b)?;
            match p.model() {
                Model::Sk => {
                    let r = sk_logn_bound(n, bp, p.gamma.unwrap_or(0.1))?;
                    rows.push(PartialRow { n: Some(n), beta: Some(b), t: r.t, i0: r.i0, it: r.it, bound: r.bound });
                }
                Model::Rem => {
                    let r = rem_chatterjee_low_temp_bound(n, bp)?;
                    rows.push(PartialRow { n: Some(n), beta: Some(b), t: r.t, i0: r.i0, it: r.it, bound: r.bound });
                    detail.push(json!({ "n": n, "beta": b, "envelope": r.envelope, "vacuous": r.vacuous }));
                }
                _ => bail!("partial-bound needs --i0 and --it, or --model sk / rem"),
            }
        }
    }
    let mut result = json!({ "bounds": serde_json::to_value(&rows)? });
    if !detail.is_empty() {
        result["rem_envelope"] = Value::Array(detail);
    }
    Ok(Outcome {
        result,
        csv: rows_csv(&rows)?,
        violated: false,
    })
}

fn ground_state(p: &Params) -> Result<Outcome> {
    ensure!(p.model() == Model::Sk, "ground-state is defined for --model sk");
    let cfg = estimator_cfg(p)?;
    let mut out = Vec::new();
    let mut reports = Vec::new();
    let mut violated = false;
    for (k, n, b) in combos(p) {
        let r = ground_state_relation(n, beta(b)?, &cfg, &stream(p, "ground-state", k))?;
        violated |= r.sandwich_violations > 0 || r.configuration_count.any_violated();
        for mut rep in [r.configuration_count.clone(), r.literal_log_n.clone()] {
            label(&mut rep, n, b);
            reports.push(rep);
        }
        out.push(r);
    }
    Ok(Outcome {
        result: serde_json::to_value(&out)?,
        csv: reports_csv(&reports)?,
        violated,
    })
}

fn simplex_lemma(p: &Params) -> Result<Outcome> {
    let r = simplex_smoothing_check(&stream(p, "simplex-lemma", 0), p.trials.unwrap_or(1000))?;
    report_outcome(vec![r])
}
