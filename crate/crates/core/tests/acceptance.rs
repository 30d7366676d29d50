//! Acceptance suite: one PASS/FAIL line per criterion, exit status 1 if any
//! criterion fails.

use std::num::NonZeroUsize;
use std::process::ExitCode;
use std::time::{Duration, Instant};

use gammalab::criteria::{
    baudoin_wang_check, cel_bound, check_ic, decide, partial_curvature_bound, poincare_check,
    simplex_smoothing_check, InequalityReport, PsiFunction, Relation, Verdict,
};
use gammalab::functions::{CoordinateMax, FreeEnergy, Linear, SmoothFunction};
use gammalab::models::overlap::OverlapDistribution;
use gammalab::models::{
    ground_state_relation, rem_free_energy_variance, rem_high_temp_bound, rem_low_temp_bound_estimate,
    sk_cbeta_exact, sk_chatterjee_ir_bound, sk_covariance, sk_free_energy_variance, sk_measure, sk_variance_bound,
    SpinConfiguration,
};
use gammalab::semigroup::{
    gamma_curves, i_curve, i_r_curve, mehler_apply, variance_dynamical, FrobeniusAlgorithm, IrNormalization,
};
use gammalab::stats::mc_variance;
use gammalab::{BetaParam, EstimateWithCI, EstimatorConfig, GaussianMeasure, MehlerConfig, RngStream, TimeGrid};

type Outcome = Result<(bool, String), gammalab::Error>;

const SEED: u64 = 20_240_917;

fn beta(v: f64) -> BetaParam {
    BetaParam::new(v).expect("positive beta")
}

fn root(label: &str) -> RngStream {
    RngStream::from_seed(SEED).derive_named(label)
}

fn not_violated(lhs: &EstimateWithCI, rhs: &EstimateWithCI, rel: Relation) -> bool {
    decide(lhs, rhs, rel) != Verdict::Violated
}

fn semigroup_exactness() -> Outcome {
    let g = GaussianMeasure::standard(3);
    let cfg = MehlerConfig::fixed(64, 2, 40_000);
    let x = [0.8, -1.1, 0.35];
    let rng = root("mehler");
    let mut worst = 0.0f64;
    for (k, &t) in [0.1, 0.5, 1.0, 2.0].iter().enumerate() {
        let s = rng.derive(k as u64);
        let h1 = mehler_apply(|z| z[0], t, &x, &g, &cfg, &s)?;
        let h2 = mehler_apply(|z| z[1] * z[1] - 1.0, t, &x, &g, &cfg, &s.derive(1))?;
        for (e, want) in [(h1, (-t).exp() * x[0]), (h2, (-2.0 * t).exp() * (x[1] * x[1] - 1.0))] {
            worst = worst.max((e.value - want).abs() / e.stderr);
        }
    }
    Ok((worst <= 3.0, format!("max |z| = {worst:.2}")))
}

fn variance_identity() -> Outcome {
    let mcfg = MehlerConfig::fixed(4096, 32, 32);
    let ecfg = EstimatorConfig::fixed(1 << 16, 32);
    let grid = TimeGrid::geometric(4.0, 40, 2.5)?;
    let linear = Linear::new(vec![1.0, -2.0, 0.5, 0.25])?;
    let cmax = CoordinateMax::new(8)?;
    let fb = FreeEnergy::new(16, 0.5)?;
    let cases: [&dyn SmoothFunction; 3] = [&linear, &cmax, &fb];
    let mut ok = true;
    let mut detail = Vec::new();
    for (k, f) in cases.into_iter().enumerate() {
        let g = GaussianMeasure::standard(f.dim());
        let dynamical = variance_dynamical(f, &g, &grid, &mcfg, &root("vardyn").derive(k as u64))?;
        let direct = mc_variance(|r| f.value(&g.draw(r)), &ecfg, &root("vardirect").derive(k as u64))?;
        let agree = dynamical.overlaps(&direct, 1.96);
        ok &= agree;
        detail.push(format!("{} {:.4}/{:.4}", f.label(), dynamical.value, direct.value));
    }
    Ok((ok, detail.join(", ")))
}

fn superconcentration_gap() -> Outcome {
    let cfg = EstimatorConfig::fixed(16_384, 32);
    let mut scaled = Vec::new();
    let mut ok = true;
    for k in 4..=12 {
        let n = 1usize << k;
        let f = CoordinateMax::new(n)?;
        let report = poincare_check(&f, &GaussianMeasure::standard(n), &cfg, &root("poincare").derive(k))?;
        ok &= !report.any_violated();
        scaled.push(report.points[0].lhs.value * (n as f64).ln());
    }
    let (lo, hi) = scaled.iter().fold((f64::INFINITY, 0.0f64), |(l, h), &v| (l.min(v), h.max(v)));
    Ok((ok && hi / lo <= 2.0, format!("Var·log n in [{lo:.3}, {hi:.3}]")))
}

/// `E g(Z)` for `Z ~ N(0,1)` by Gauss–Hermite with `nodes` points.
fn gauss_expect(nodes: usize, g: impl Fn(f64) -> f64) -> f64 {
    let rule = gauss_quad::GaussHermite::new(NonZeroUsize::new(nodes).unwrap());
    let sqrt_pi = std::f64::consts::PI.sqrt();
    rule.as_node_weight_pairs()
        .iter()
        .map(|&(xi, w)| w / sqrt_pi * g(std::f64::consts::SQRT_2 * xi))
        .sum()
}

/// For `n = 2`, `f_β` depends on `x` through `u = (x₁ − x₂)/√2` besides a
/// linear part, so `(∫|∇P_t f|², ∫‖Hess P_t f‖²)` reduce to two-dimensional
/// Gaussian integrals over `u` and the matching inner variable `w`.
fn two_site_oracle(b: f64, t: f64, nodes: usize) -> (f64, f64) {
    let a = (-t).exp();
    let s = (-(-2.0 * t).exp_m1()).sqrt();
    let sig = |z: f64| 1.0 / (1.0 + (-z).exp());
    let k = b * std::f64::consts::SQRT_2;
    let (i, h) = (
        gauss_expect(nodes, |u| {
            let p = gauss_expect(nodes, |w| sig(k * (a * u + s * w)));
            p * p + (1.0 - p) * (1.0 - p)
        }),
        gauss_expect(nodes, |u| {
            let q = gauss_expect(nodes, |w| {
                let p = sig(k * (a * u + s * w));
                p * (1.0 - p)
            });
            4.0 * b * b * q * q
        }),
    );
    (a * a * i, a.powi(4) * h)
}

fn ic_criterion() -> Outcome {
    let grid = TimeGrid::geometric(3.0, 12, 2.0)?;
    let cfg = MehlerConfig::fixed(1024, 32, 32);
    let mut ok = true;
    let mut points = 0;
    for (ni, n) in [4usize, 8, 16].into_iter().enumerate() {
        for (bi, b) in [0.2, 0.5, 1.0].into_iter().enumerate() {
            let f = FreeEnergy::new(n, b)?;
            let rng = root("ic").derive((3 * ni + bi) as u64);
            let c = gamma_curves(&f, &GaussianMeasure::standard(n), &grid, &cfg, FrobeniusAlgorithm::Auto, &rng)?;
            let psi = PsiFunction::from_i_curve(beta(b), &c.gamma);
            let report = check_ic(&c.gamma2, &c.gamma, &psi)?;
            ok &= report.passes();
            points += report.points.len();
        }
    }
    // Two sites: nested Monte Carlo against tensor Gauss–Hermite.
    let mut quad_gap = 0.0f64;
    let mut mc_z = 0.0f64;
    for (bi, b) in [0.2, 0.5, 1.0].into_iter().enumerate() {
        let f = FreeEnergy::new(2, b)?;
        let c = gamma_curves(
            &f,
            &GaussianMeasure::standard(2),
            &grid,
            &MehlerConfig::fixed(8192, 32, 32),
            FrobeniusAlgorithm::Auto,
            &root("ic2").derive(bi as u64),
        )?;
        for (j, &t) in grid.points().iter().enumerate() {
            let (i40, h40) = two_site_oracle(b, t, 40);
            let (i60, h60) = two_site_oracle(b, t, 60);
            quad_gap = quad_gap.max((i40 - i60).abs()).max((h40 - h60).abs());
            ok &= h60 <= 2.0 * b * b * (-2.0 * t).exp() * i60;
            let (ie, he) = (&c.gamma.values[j], &c.hessian.values[j]);
            mc_z = mc_z
                .max((ie.value - i60).abs() / ie.stderr.max(1e-300))
                .max((he.value - h60).abs() / he.stderr.max(1e-300));
        }
    }
    ok &= quad_gap <= 1e-4 && mc_z <= 4.0;
    Ok((ok, format!("{points} points; quadrature 40/60 gap {quad_gap:.1e}; n=2 MC max |z| {mc_z:.2}")))
}

fn rem_high_temperature() -> Outcome {
    let cfg = EstimatorConfig::fixed(16_384, 32);
    let mut ok = (rem_high_temp_bound(100, beta(0.3))? - 0.0110976).abs() < 5e-8;
    let mut worst = 0.0f64;
    for (k, (b, n)) in [0.2, 0.3, 0.5]
        .into_iter()
        .flat_map(|b| [64usize, 256, 1024].map(|n| (b, n)))
        .enumerate()
    {
        let v = rem_free_energy_variance(n, beta(b), &cfg, &root("rem_high").derive(k as u64))?;
        let bound = rem_high_temp_bound(n, beta(b))?;
        ok &= not_violated(&v, &EstimateWithCI::exact(bound), Relation::Le);
        worst = worst.max(v.value / bound);
    }
    Ok((ok, format!("max Var/bound = {worst:.3}")))
}

fn rem_low_temperature() -> Outcome {
    let cfg = EstimatorConfig::fixed(4096, 32);
    let mut scaled = Vec::new();
    let mut ok = true;
    for k in 8..=14u64 {
        let n = 1usize << k;
        let b = beta((n as f64).ln().sqrt());
        let v = rem_free_energy_variance(n, b, &cfg, &root("rem_low_var").derive(k))?;
        let bound = rem_low_temp_bound_estimate(n, b, 1.0, &EstimatorConfig::fixed(1024, 32), &root("rem_low_bound").derive(k))?;
        ok &= not_violated(&bound, &v, Relation::Ge);
        scaled.push(v.value * (n as f64).ln());
    }
    let (lo, hi) = scaled.iter().fold((f64::INFINITY, 0.0f64), |(l, h), &v| (l.min(v), h.max(v)));
    Ok((ok && hi / lo <= 3.0, format!("Var·log n in [{lo:.3}, {hi:.3}]")))
}

fn sk_bound() -> Outcome {
    let cfg = EstimatorConfig::fixed(2000, 20);
    let mut ok = true;
    let mut worst = 0.0f64;
    for (k, (b, n)) in [0.1, 0.25, 0.4]
        .into_iter()
        .flat_map(|b| [8usize, 10, 12].map(|n| (b, n)))
        .enumerate()
    {
        let v = sk_free_energy_variance(n, beta(b), &cfg, &root("sk").derive(k as u64))?;
        let bound = sk_variance_bound(n, beta(b))?;
        ok &= not_violated(&v, &EstimateWithCI::exact(bound), Relation::Le);
        worst = worst.max(v.value / bound);
    }
    // Overlap law against all 4^n pairs: integer histogram, then C_β.
    for n in 1..=8usize {
        let total = 1u64 << n;
        let mut hist = vec![0u128; n + 1];
        let mut acc = 0.0;
        let b = 0.3;
        for i in 0..total {
            let a = SpinConfiguration::from_index(n, i);
            for j in 0..total {
                let c = SpinConfiguration::from_index(n, j);
                hist[((a.overlap(&c)? + n as i64) / 2) as usize] += 1;
                acc += (2.0 * b * b * sk_covariance(&a, &c)?).exp();
            }
        }
        let d = OverlapDistribution::new(n)?;
        ok &= d.counts().zip(&hist).all(|((_, c), h)| c * u128::from(total) == *h);
        let brute = acc / (total * total) as f64;
        ok &= (sk_cbeta_exact(n, beta(b))? - brute).abs() <= 1e-12 * brute;
    }
    Ok((ok, format!("max Var/bound = {worst:.4}")))
}

fn chatterjee_ir() -> Outcome {
    let n = 8;
    let b = 0.25;
    let measure = sk_measure(n)?;
    let f = FreeEnergy::new(1 << n, b)?;
    let grid = TimeGrid::uniform(3.0, 10)?;
    let cfg = MehlerConfig::fixed(1024, 32, 16);
    let mut ok = true;
    let mut worst = 0.0f64;
    for r in [1u32, 2] {
        let curve = i_r_curve(&f, &measure, r, IrNormalization::VarianceConsistent, &grid, &cfg, &root("ir").derive(r as u64))?;
        for (e, &t) in curve.values.iter().zip(grid.points()) {
            let bound = sk_chatterjee_ir_bound(n, beta(b), r, t)?;
            ok &= not_violated(e, &EstimateWithCI::exact(bound), Relation::Le);
            worst = worst.max(e.value / bound);
        }
    }
    Ok((ok, format!("max I_r/bound = {worst:.3}")))
}

fn interpolation_lemmas() -> Outcome {
    let mut ok = true;
    // Linear f: the curve is exact and the bound is tight.
    let lin = Linear::new(vec![0.6, -1.2, 2.0])?;
    let var_lin = lin.norm_sq();
    let fine = TimeGrid::uniform(2.0, 4001)?;
    let lin_curve = i_curve(&lin, &GaussianMeasure::standard(3), &fine, &MehlerConfig::fixed(64, 4, 2), &root("cel_lin"))?;
    let lin_mc = mc_variance(|r| lin.value(&GaussianMeasure::standard(3).draw(r)), &EstimatorConfig::fixed(1 << 15, 32), &root("cel_lin_mc"))?;
    let mut gap = 0.0f64;
    for t in [0.5, 1.0, 2.0] {
        let c = cel_bound(&lin_curve, t)?;
        gap = gap.max((c.value - var_lin).abs() / var_lin);
        ok &= not_violated(&c, &lin_mc, Relation::Ge);
    }
    ok &= gap < 1e-6;
    // f_β: bound above the MC variance.
    let grid = TimeGrid::uniform(2.0, 41)?;
    let fb = FreeEnergy::new(8, 1.0)?;
    let g8 = GaussianMeasure::standard(8);
    let curve = i_curve(&fb, &g8, &grid, &MehlerConfig::fixed(2048, 32, 32), &root("cel_fb"))?;
    let v = mc_variance(|r| fb.value(&g8.draw(r)), &EstimatorConfig::fixed(1 << 15, 32), &root("cel_fb_mc"))?;
    for t in [0.5, 1.0, 2.0] {
        ok &= not_violated(&cel_bound(&curve, t)?, &v, Relation::Ge);
    }
    // Log-convexity on genuine curves.
    let cmax = CoordinateMax::new(6)?;
    let cm_curve = i_curve(&cmax, &GaussianMeasure::standard(6), &grid, &MehlerConfig::fixed(2048, 32, 32), &root("bw_cmax"))?;
    let mut bw: Vec<InequalityReport> = Vec::new();
    for c in [&curve, &cm_curve, &lin_curve] {
        bw.push(baudoin_wang_check(c, 2.0)?);
    }
    ok &= bw.iter().all(|r| !r.any_violated());
    // Exponential curves: the partial curvature bound returns I(0).
    let mut exp_err = 0.0f64;
    for (i0, t) in [(1.0, 0.5), (3.7, 1.0), (0.02, 2.0), (12.0, 0.01)] {
        let it = i0 * (-2.0f64 * t).exp();
        exp_err = exp_err.max((partial_curvature_bound(i0, it, t)? - i0).abs() / i0);
    }
    ok &= exp_err <= 1e-10;
    Ok((ok, format!("linear gap {gap:.1e}, exponential error {exp_err:.1e}")))
}

fn ground_state() -> Outcome {
    let r = ground_state_relation(10, beta(0.25), &EstimatorConfig::fixed(2000, 20), &root("ground"))?;
    let v = &r.configuration_count.points[0];
    Ok((
        r.sandwich_violations == 0 && r.configuration_count.passes(),
        format!(
            "{} draws, {} sandwich failures, Var(max) {:.3} vs {:.1}",
            r.draws, r.sandwich_violations, v.lhs.value, v.rhs.value
        ),
    ))
}

fn simplex_lemma() -> Outcome {
    let r = simplex_smoothing_check(&root("simplex"), 1000)?;
    let beyond = r.points.iter().filter(|p| p.lhs.value > p.rhs.value + 1e-12).count();
    Ok((beyond == 0 && r.points.len() == 1000, format!("{} trials, {beyond} beyond 1e-12", r.points.len())))
}

/// Every table above, serialized.
fn tables() -> Result<String, gammalab::Error> {
    let grid = TimeGrid::geometric(2.0, 8, 2.0)?;
    let f = FreeEnergy::new(8, 0.5)?;
    let g = GaussianMeasure::standard(8);
    let mut out = String::new();
    out += &i_curve(&f, &g, &grid, &MehlerConfig::fixed(256, 16, 16), &root("repro_i"))?.to_json()?;
    let c = gamma_curves(&f, &g, &grid, &MehlerConfig::fixed(128, 16, 8), FrobeniusAlgorithm::Auto, &root("repro_g"))?;
    out += &check_ic(&c.gamma2, &c.gamma, &PsiFunction::from_i_curve(beta(0.5), &c.gamma))?.to_json()?;
    out += &serde_json::to_string(&variance_dynamical(
        &f,
        &g,
        &TimeGrid::geometric(3.0, 16, 2.0)?,
        &MehlerConfig::fixed(256, 16, 8),
        &root("repro_v"),
    )?)
    .map_err(gammalab::Error::from)?;
    out += &serde_json::to_string(&rem_free_energy_variance(64, beta(0.3), &EstimatorConfig::fixed(2048, 16), &root("repro_r"))?)
        .map_err(gammalab::Error::from)?;
    out += &serde_json::to_string(&sk_free_energy_variance(8, beta(0.25), &EstimatorConfig::fixed(256, 16), &root("repro_s"))?)
        .map_err(gammalab::Error::from)?;
    out += &serde_json::to_string(&ground_state_relation(8, beta(0.25), &EstimatorConfig::fixed(256, 16), &root("repro_gs"))?)
        .map_err(gammalab::Error::from)?;
    out += &simplex_smoothing_check(&root("repro_simplex"), 100)?.to_json()?;
    Ok(out)
}

fn reproducibility() -> Outcome {
    let mut outputs = Vec::new();
    for threads in [1, 2, 4, 7] {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .expect("thread pool");
        outputs.push(pool.install(tables)?);
    }
    let same = outputs.windows(2).all(|w| w[0].as_bytes() == w[1].as_bytes());
    Ok((same, format!("{} bytes, threads 1/2/4/7", outputs[0].len())))
}

fn main() -> ExitCode {
    let criteria: [(&str, Duration, fn() -> Outcome); 12] = [
        ("semigroup exactness on Hermite functions", Duration::from_secs(10), semigroup_exactness),
        ("variance identity", Duration::from_secs(120), variance_identity),
        ("Poincaré and the superconcentration gap", Duration::from_secs(120), superconcentration_gap),
        ("integrated curvature criterion", Duration::from_secs(300), ic_criterion),
        ("REM high temperature", Duration::from_secs(120), rem_high_temperature),
        ("REM low temperature", Duration::from_secs(300), rem_low_temperature),
        ("SK variance bound", Duration::from_secs(600), sk_bound),
        ("Chatterjee I_r bound", Duration::from_secs(300), chatterjee_ir),
        ("interpolation lemmas", Duration::from_secs(120), interpolation_lemmas),
        ("ground-state relation", Duration::from_secs(180), ground_state),
        ("simplex smoothing lemma", Duration::from_secs(5), simplex_lemma),
        ("reproducibility across thread counts", Duration::from_secs(600), reproducibility),
    ];
    let mut failed = 0;
    for (k, (name, budget, run)) in criteria.into_iter().enumerate() {
        let start = Instant::now();
        let outcome = run();
        let elapsed = start.elapsed();
        let (pass, detail) = match outcome {
            Ok((pass, detail)) => (pass && elapsed <= budget, detail),
            Err(e) => (false, format!("error: {e}")),
        };
        if !pass {
            failed += 1;
        }
        println!(
            "criterion {:>2} {} {name}: {detail} [{:.1}s / {}s]",
            k + 1,
            if pass { "PASS" } else { "FAIL" },
            elapsed.as_secs_f64(),
            budget.as_secs()
        );
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        println!("{failed} criteria failed");
        ExitCode::FAILURE
    }
}
