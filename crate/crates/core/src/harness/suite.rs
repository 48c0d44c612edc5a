use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::covariance::{CovarianceStore, Provenance};
use crate::error::Result;

/// What a random stream is used for. Streams of different domains never
/// overlap for the same seed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Domain {
    Estimate = 1,
    Pilot = 2,
    Baseline = 3,
}

/// Identifies one input draw: streams are keyed by (seed, domain,
/// replication, group) and the sample index selects the ChaCha stream.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StreamKey {
    pub seed: u64,
    pub domain: Domain,
    pub replication: u64,
    pub group: u64,
    pub sample: u64,
}

impl StreamKey {
    pub fn rng(&self) -> ChaCha8Rng {
        let mut key = [0u8; 32];
        key[..8].copy_from_slice(&self.seed.to_le_bytes());
        key[8..16].copy_from_slice(&(self.domain as u64).to_le_bytes());
        key[16..24].copy_from_slice(&self.replication.to_le_bytes());
        key[24..].copy_from_slice(&self.group.to_le_bytes());
        let mut rng = ChaCha8Rng::from_seed(key);
        rng.set_stream(self.sample);
        rng
    }

    /// Standard Gaussian input of dimension `dim`.
    pub fn input(&self, dim: usize) -> Vec<f64> {
        let mut rng = self.rng();
        (0..dim).map(|_| rng.sample(StandardNormal)).collect()
    }
}

/// Linear-Gaussian model suite: p_i^s(z) = offset_s[i] + (A_s z)_i with z
/// standard Gaussian, so Cov[p^s] = A_s A_s^T exactly.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticSuite {
    /// `loadings[s][i]` is row i of A_s; all rows share one input dimension.
    pub loadings: Vec<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub offsets: Option<Vec<Vec<f64>>>,
}

impl SyntheticSuite {
    pub fn from_matrices(loadings: &[DMatrix<f64>], offsets: Option<&[DVector<f64>]>) -> Self {
        Self {
            loadings: loadings
                .iter()
                .map(|a| a.row_iter().map(|r| r.iter().copied().collect()).collect())
                .collect(),
            offsets: offsets.map(|o| o.iter().map(|v| v.iter().copied().collect()).collect()),
        }
    }

    pub fn num_outputs(&self) -> usize {
        self.loadings.len()
    }

    pub fn num_models(&self) -> usize {
        self.loadings.first().map_or(0, Vec::len)
    }

    pub fn input_dim(&self) -> usize {
        self.loadings
            .first()
            .and_then(|a| a.first())
            .map_or(0, Vec::len)
    }

    /// Shape problems, or `None` if the suite is consistent.
    pub fn shape_error(&self) -> Option<(String, String)> {
        let (l, d) = (self.num_models(), self.input_dim());
        if self.loadings.is_empty() || l == 0 || d == 0 {
            return Some(("/loadings".into(), "need at least one output, model and input dimension".into()));
        }
        for (s, a) in self.loadings.iter().enumerate() {
            if a.len() != l {
                return Some((format!("/loadings/{s}"), format!("expected {l} model rows, got {}", a.len())));
            }
            for (i, row) in a.iter().enumerate() {
                if row.len() != d {
                    return Some((format!("/loadings/{s}/{i}"), format!("expected {d} entries, got {}", row.len())));
                }
                if let Some(k) = row.iter().position(|v| !v.is_finite()) {
                    return Some((format!("/loadings/{s}/{i}/{k}"), "loading must be finite".into()));
                }
            }
        }
        if let Some(off) = &self.offsets {
            if off.len() != self.num_outputs() {
                return Some(("/offsets".into(), format!("expected {} offset vectors", self.num_outputs())));
            }
            for (s, o) in off.iter().enumerate() {
                if o.len() != l {
                    return Some((format!("/offsets/{s}"), format!("expected {l} offsets, got {}", o.len())));
                }
                if let Some(k) = o.iter().position(|v| !v.is_finite()) {
                    return Some((format!("/offsets/{s}/{k}"), "offset must be finite".into()));
                }
            }
        }
        None
    }

    pub fn loading_matrix(&self, s: usize) -> DMatrix<f64> {
        let a = &self.loadings[s];
        DMatrix::from_fn(a.len(), self.input_dim(), |i, k| a[i][k])
    }

    pub fn exact_covariance(&self, s: usize) -> DMatrix<f64> {
        let a = self.loading_matrix(s);
        &a * a.transpose()
    }

    pub fn exact_store(&self) -> Result<CovarianceStore> {
        let mats: Vec<DMatrix<f64>> = (0..self.num_outputs()).map(|s| self.exact_covariance(s)).collect();
        CovarianceStore::from_dense(&mats, Provenance::Exact)
    }

    pub fn offset(&self, s: usize, i: usize) -> f64 {
        self.offsets.as_ref().map_or(0.0, |o| o[s][i])
    }

    /// Value of model `i` (0-based) for output `s`.
    pub fn value(&self, s: usize, i: usize, input: &[f64]) -> f64 {
        self.offset(s, i)
            + self.loadings[s][i]
                .iter()
                .zip(input)
                .map(|(a, z)| a * z)
                .sum::<f64>()
    }

    /// Exact means, the offsets.
    pub fn means(&self, s: usize) -> Vec<f64> {
        (0..self.num_models()).map(|i| self.offset(s, i)).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn streams_are_reproducible_and_distinct() {
        let key = StreamKey {
            seed: 7,
            domain: Domain::Estimate,
            replication: 0,
            group: 3,
            sample: 11,
        };
        assert_eq!(key.input(5), key.input(5));
        let others = [
            StreamKey { seed: 8, ..key },
            StreamKey { domain: Domain::Pilot, ..key },
            StreamKey { replication: 1, ..key },
            StreamKey { group: 4, ..key },
            StreamKey { sample: 12, ..key },
        ];
        for o in others {
            assert_ne!(o.input(5), key.input(5));
        }
    }

    #[test]
    fn exact_covariance_is_a_a_transpose() {
        let a = DMatrix::from_row_slice(2, 3, &[1.0, 2.0, 0.0, 0.5, -1.0, 3.0]);
        let suite = SyntheticSuite::from_matrices(std::slice::from_ref(&a), None);
        assert!(suite.shape_error().is_none());
        assert_eq!(suite.exact_covariance(0), &a * a.transpose());
        assert_eq!(suite.value(0, 1, &[1.0, 1.0, 1.0]), 2.5);
    }
}
