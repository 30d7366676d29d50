use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Largest cube `{−1, 1}^n` enumerated exactly.
pub const MAX_EXACT_SITES: usize = 24;

/// A point of `{−1, 1}^n`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SpinConfiguration {
    spins: Vec<i8>,
}

impl SpinConfiguration {
    pub fn new(spins: Vec<i8>) -> Result<Self> {
        if spins.is_empty() {
            return Err(Error::EmptyInput);
        }
        if let Some(index) = spins.iter().position(|s| *s != 1 && *s != -1) {
            return Err(Error::Precondition(format!(
                "spin {index} is {}, expected ±1",
                spins[index]
            )));
        }
        Ok(Self { spins })
    }

    /// Bit `k` of `index` set means `σ_k = +1`.
    pub fn from_index(n: usize, index: u64) -> Self {
        Self {
            spins: (0..n).map(|k| if index >> k & 1 == 1 { 1 } else { -1 }).collect(),
        }
    }

    pub fn index(&self) -> u64 {
        self.spins
            .iter()
            .enumerate()
            .filter(|(_, s)| **s == 1)
            .fold(0, |acc, (k, _)| acc | 1 << k)
    }

    pub fn len(&self) -> usize {
        self.spins.len()
    }

    pub fn is_empty(&self) -> bool {
        self.spins.is_empty()
    }

    pub fn spins(&self) -> &[i8] {
        &self.spins
    }

    pub fn as_f64(&self) -> Vec<f64> {
        self.spins.iter().map(|&s| f64::from(s)).collect()
    }

    /// `Σ_i σ_i σ'_i`.
    pub fn overlap(&self, other: &SpinConfiguration) -> Result<i64> {
        if self.len() != other.len() {
            return Err(Error::DimensionMismatch {
                expected: self.len(),
                got: other.len(),
            });
        }
        Ok(self
            .spins
            .iter()
            .zip(&other.spins)
            .map(|(a, b)| i64::from(a * b))
            .sum())
    }
}

pub(crate) fn check_capacity(n: usize) -> Result<()> {
    if n == 0 {
        return Err(Error::EmptyInput);
    }
    if n > MAX_EXACT_SITES {
        return Err(Error::Capacity {
            n,
            max: MAX_EXACT_SITES,
        });
    }
    Ok(())
}
