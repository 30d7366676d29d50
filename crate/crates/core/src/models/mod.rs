//! Spin-glass models: the random energy model and Sherrington–Kirkpatrick,
//! with exact Gibbs sums and variance-bound evaluators.

pub mod ground_state;
pub mod overlap;
pub mod rem;
pub mod sk;
pub mod spins;

use serde::{Deserialize, Serialize};

pub use ground_state::{ground_state_relation, GroundStateReport};
pub use overlap::{sk_cbeta_exact, sk_covariance, OverlapDistribution};
pub use rem::{
    rem_chatterjee_low_temp_bound, rem_free_energy_variance, rem_high_temp_bound, rem_low_temp_bound_estimate,
    RemChatterjeeBound, RemGradientNorms, RemInstance, RemNormalization,
};
pub use sk::{
    chatterjee_ir_bound, sk_chatterjee_ir_bound, sk_free_energy_variance, sk_logn_bound, sk_measure,
    sk_variance_bound, GibbsSums, SkInstance, SkLognBound,
};
pub use spins::{SpinConfiguration, MAX_EXACT_SITES};

use crate::gaussian::BetaParam;
use crate::rng::RngStream;
use crate::Result;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    Rem,
    Sk,
}

/// Everything needed to regenerate a model instance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelManifest {
    pub model: ModelKind,
    pub n_sites: usize,
    pub beta: BetaParam,
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub normalization: Option<RemNormalization>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum ModelInstance {
    Rem(RemInstance),
    Sk(SkInstance),
}

impl ModelInstance {
    pub fn gibbs_free_energy(&self) -> f64 {
        match self {
            Self::Rem(r) => r.gibbs_free_energy(),
            Self::Sk(s) => s.gibbs_free_energy(),
        }
    }
}

impl ModelManifest {
    /// Disorder draw `k`, from the stream `seed → model name → k`.
    pub fn instantiate(&self, draw: u64) -> Result<ModelInstance> {
        let root = RngStream::from_seed(self.seed);
        match self.model {
            ModelKind::Rem => {
                let stream = root.derive_named("rem").derive(draw);
                RemInstance::sample(self.n_sites, self.beta, self.normalization.unwrap_or_default(), &stream)
                    .map(ModelInstance::Rem)
            }
            ModelKind::Sk => {
                let stream = root.derive_named("sk").derive(draw);
                SkInstance::sample(self.n_sites, self.beta, &stream).map(ModelInstance::Sk)
            }
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }
}
