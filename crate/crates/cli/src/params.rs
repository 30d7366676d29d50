use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, ValueEnum};
use serde::{Deserialize, Serialize};

/// Environment variable holding the seed used when neither the command line
/// nor the manifest sets one.
pub const SEED_ENV: &str = "GAMMALAB_SEED";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Model {
    /// Free energy of n i.i.d. Gaussians, `(1/β) log Σ e^{βx_i}`.
    Rem,
    /// SK free energy over the 2^n configurations (n ≤ 12 for semigroup work).
    Sk,
    /// `Σ_i x_i/(i+1)`.
    Linear,
    /// `max_i x_i`.
    CoordinateMax,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Curve {
    I,
    Hessian,
    Gamma2,
    Ir,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Format {
    Json,
    Csv,
}

/// Every tunable of every subcommand. Unset fields fall back to the manifest,
/// then to the defaults in [`Params::resolve`].
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize, Args)]
#[serde(default, deny_unknown_fields)]
pub struct Params {
    #[arg(long, value_enum)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub model: Option<Model>,
    /// Sizes, comma separated.
    #[arg(long, value_delimiter = ',')]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n: Option<Vec<usize>>,
    /// Inverse temperatures, comma separated.
    #[arg(long, value_delimiter = ',')]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub beta: Option<Vec<f64>>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    /// Outer Monte Carlo draws (disorder draws for spin-glass tables).
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub samples: Option<usize>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub batches: Option<usize>,
    /// Inner Mehler draws per outer point.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub inner: Option<usize>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub antithetic: Option<bool>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub t_max: Option<f64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub grid_points: Option<usize>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub stretch: Option<f64>,
    /// Interpolation horizons, comma separated.
    #[arg(long, value_delimiter = ',')]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub t_end: Option<Vec<f64>>,
    #[arg(long, value_enum)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub curve: Option<Curve>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub r: Option<u32>,
    /// `γ` in `T = ½ log(2β²/γ)` for the SK log n bound.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub gamma: Option<f64>,
    /// Hypercontractive constant for the REM low-temperature bound.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub constant: Option<f64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub trials: Option<usize>,
    /// `I(0)` for a closed-form partial curvature bound.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub i0: Option<f64>,
    /// `I(T)` for a closed-form partial curvature bound.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub it: Option<f64>,
    #[arg(long, value_enum)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub format: Option<Format>,
    /// Report file; standard output when absent.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
}

/// A manifest file: the subcommand and its parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentManifest {
    pub command: String,
    #[serde(default = "artifact_version")]
    pub version: String,
    #[serde(default)]
    pub params: Params,
}

pub fn artifact_version() -> String {
    concat!("gammalab ", env!("CARGO_PKG_VERSION")).to_string()
}

impl ExperimentManifest {
    pub fn parse(text: &str) -> Result<Self> {
        let de = &mut serde_json::Deserializer::from_str(text);
        serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            anyhow::anyhow!("invalid manifest at `{path}`: {}", e.into_inner())
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading manifest {}", path.display()))?;
        Self::parse(&text).with_context(|| format!("in manifest {}", path.display()))
    }
}

macro_rules! overlay {
    ($top:expr, $base:expr, $($field:ident),+ $(,)?) => {
        Params { $($field: $top.$field.or($base.$field),)+ }
    };
}

impl Params {
    /// Fields of `self` win over `base`.
    pub fn over(self, base: Params) -> Params {
        overlay!(
            self, base, model, n, beta, seed, samples, batches, inner, antithetic, t_max, grid_points, stretch,
            t_end, curve, r, gamma, constant, trials, i0, it, format, out,
        )
    }

    /// Fill every unset field with its default. The seed falls back to
    /// `GAMMALAB_SEED`, then 0.
    pub fn resolve(self) -> Result<Params> {
        let seed = match self.seed {
            Some(s) => s,
            None => match std::env::var(SEED_ENV) {
                Ok(v) => v
                    .trim()
                    .parse()
                    .with_context(|| format!("{SEED_ENV}={v:?} is not an unsigned integer"))?,
                Err(_) => 0,
            },
        };
        let p = Params {
            model: Some(Model::Rem),
            n: Some(vec![16]),
            beta: Some(vec![0.5]),
            seed: Some(seed),
            samples: Some(4096),
            batches: Some(32),
            inner: Some(32),
            antithetic: Some(false),
            t_max: Some(3.0),
            grid_points: Some(12),
            stretch: Some(2.0),
            t_end: Some(vec![0.5, 1.0, 2.0]),
            curve: Some(Curve::I),
            r: Some(1),
            gamma: Some(0.1),
            constant: Some(1.0),
            trials: Some(1000),
            i0: None,
            it: None,
            format: Some(Format::Json),
            out: None,
        };
        let p = self.over(p);
        if p.n.as_ref().is_some_and(|v| v.is_empty()) || p.beta.as_ref().is_some_and(|v| v.is_empty()) {
            bail!("--n and --beta need at least one value");
        }
        Ok(p)
    }

    pub fn model(&self) -> Model {
        self.model.unwrap_or(Model::Rem)
    }
    pub fn sizes(&self) -> &[usize] {
        self.n.as_deref().unwrap_or(&[])
    }
    pub fn betas(&self) -> &[f64] {
        self.beta.as_deref().unwrap_or(&[])
    }
    pub fn seed(&self) -> u64 {
        self.seed.unwrap_or(0)
    }
    pub fn format(&self) -> Format {
        self.format.unwrap_or(Format::Json)
    }
}
