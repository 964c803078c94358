//! Quenched disorder fields.
//!
//! Fields are IID with mean 0 and variance 1, drawn sequentially from a
//! ChaCha8 stream keyed by the field seed, so a field regenerated at a larger
//! N keeps its prefix and a field is fully determined by (dist, n, seed).

use crate::rng::stream_rng;
use crate::{Error, Result};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DisorderDist {
    Gaussian,
    Rademacher,
}

impl DisorderDist {
    /// Header tag used by the table cache format.
    pub fn tag(self) -> u8 {
        match self {
            DisorderDist::Gaussian => 1,
            DisorderDist::Rademacher => 2,
        }
    }

    pub fn from_tag(tag: u8) -> Option<Self> {
        match tag {
            1 => Some(DisorderDist::Gaussian),
            2 => Some(DisorderDist::Rademacher),
            _ => None,
        }
    }
}

/// Log moment generating function lambda(beta) = log E[e^{beta omega}].
pub fn lambda(dist: DisorderDist, beta: f64) -> f64 {
    match dist {
        DisorderDist::Gaussian => 0.5 * beta * beta,
        DisorderDist::Rademacher => beta.cosh().ln(),
    }
}

/// The annealed window for the critical point: -lambda(beta) <= h_c(beta) < 0
/// for beta > 0. Returned as (lower, upper).
pub fn annealed_bound_window(dist: DisorderDist, beta: f64) -> (f64, f64) {
    (-lambda(dist, beta), 0.0)
}

/// A replica ensemble request: per-replica seeds derive from `master_seed`
/// so the set extends without regenerating earlier replicas.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DisorderSpec {
    pub dist: DisorderDist,
    pub beta: f64,
    pub replicas: usize,
    pub master_seed: u64,
}

#[derive(Debug, Clone)]
pub struct DisorderField {
    dist: DisorderDist,
    beta: f64,
    seed: u64,
    values: Vec<f64>,
}

impl DisorderField {
    /// Draws omega_1..omega_n. The stream is a pure function of `seed`;
    /// `beta` only scales the site weights.
    pub fn generate(dist: DisorderDist, beta: f64, n: usize, seed: u64) -> Result<Self> {
        if !beta.is_finite() || beta < 0.0 {
            return Err(Error::InvalidParameter {
                name: "beta",
                reason: format!("must be finite and >= 0, got {beta}"),
            });
        }
        let mut rng = stream_rng(seed, &[]);
        let values = (0..n)
            .map(|_| match dist {
                DisorderDist::Gaussian => rng.sample::<f64, _>(StandardNormal),
                DisorderDist::Rademacher => {
                    if rng.gen::<bool>() {
                        1.0
                    } else {
                        -1.0
                    }
                }
            })
            .collect();
        Ok(DisorderField {
            dist,
            beta,
            seed,
            values,
        })
    }

    /// Wraps explicit values (constant or replayed fields in tests and
    /// custom experiments).
    pub fn from_values(
        dist: DisorderDist,
        beta: f64,
        seed: u64,
        values: Vec<f64>,
    ) -> Result<Self> {
        if !beta.is_finite() || beta < 0.0 {
            return Err(Error::InvalidParameter {
                name: "beta",
                reason: format!("must be finite and >= 0, got {beta}"),
            });
        }
        Ok(DisorderField {
            dist,
            beta,
            seed,
            values,
        })
    }

    pub fn dist(&self) -> DisorderDist {
        self.dist
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// omega at 1-based site index.
    #[inline]
    pub fn omega(&self, site: usize) -> f64 {
        self.values[site - 1]
    }

    /// beta * omega at 1-based site index.
    #[inline]
    pub fn site_log_weight(&self, site: usize) -> f64 {
        self.beta * self.values[site - 1]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }
}
