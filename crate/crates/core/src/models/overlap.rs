//! The law of the overlap `S = Σ_i σ_i σ'_i` between two independent uniform
//! configurations of `{−1, 1}^n`: `P(S = 2k − n) = C(n, k) / 2^n`.
//!
//! Pair sums over the cube whose summand depends only on the overlap collapse
//! from `4^n` terms to `n + 1`.

use serde::{Deserialize, Serialize};

use super::spins::SpinConfiguration;
use crate::gaussian::BetaParam;
use crate::{Error, Result};

pub const MAX_OVERLAP_SITES: usize = 64;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OverlapDistribution {
    n_sites: usize,
    /// `C(n, k)` for `k = 0..=n`.
    counts: Vec<u128>,
}

impl OverlapDistribution {
    pub fn new(n_sites: usize) -> Result<Self> {
        if n_sites == 0 {
            return Err(Error::EmptyInput);
        }
        if n_sites > MAX_OVERLAP_SITES {
            return Err(Error::Capacity {
                n: n_sites,
                max: MAX_OVERLAP_SITES,
            });
        }
        let mut counts = vec![1u128; n_sites + 1];
        for k in 1..=n_sites {
            counts[k] = counts[k - 1] * (n_sites - k + 1) as u128 / k as u128;
        }
        Ok(Self { n_sites, counts })
    }

    pub fn n_sites(&self) -> usize {
        self.n_sites
    }

    /// `Σ_k C(n, k)`, which is `2^n` exactly.
    pub fn total_count(&self) -> u128 {
        self.counts.iter().sum()
    }

    /// `(S, C(n, (n+S)/2))` for `S = −n, −n+2, …, n`.
    pub fn counts(&self) -> impl Iterator<Item = (i64, u128)> + '_ {
        let n = self.n_sites as i64;
        self.counts.iter().enumerate().map(move |(k, &c)| (2 * k as i64 - n, c))
    }

    /// `(S, P(S))`.
    pub fn weights(&self) -> Vec<(i64, f64)> {
        let scale = 0.5f64.powi(self.n_sites as i32);
        self.counts().map(|(s, c)| (s, c as f64 * scale)).collect()
    }

    /// `E g(S)`.
    pub fn expect(&self, g: impl Fn(i64) -> f64) -> f64 {
        self.weights().into_iter().map(|(s, p)| p * g(s)).sum()
    }

    /// `E[(S²/n)^r e^{c S²/n}]`: the average of `M^r e^{cM}` over independent
    /// uniform pairs, with `M = S²/n` the SK configuration covariance.
    pub fn covariance_moment(&self, r: u32, c: f64) -> f64 {
        let n = self.n_sites as f64;
        self.expect(|s| {
            let m = (s * s) as f64 / n;
            m.powi(r as i32) * (c * m).exp()
        })
    }
}

/// `M_{σσ'} = (Σ_i σ_i σ'_i / √n)²`.
pub fn sk_covariance(a: &SpinConfiguration, b: &SpinConfiguration) -> Result<f64> {
    let s = a.overlap(b)? as f64;
    Ok(s * s / a.len() as f64)
}

/// `E_{σ,σ'} exp(2β² M_{σσ'})` exactly.
pub fn sk_cbeta_exact(n: usize, beta: BetaParam) -> Result<f64> {
    let b = beta.get();
    Ok(OverlapDistribution::new(n)?.covariance_moment(0, 2.0 * b * b))
}
