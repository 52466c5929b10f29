//! Simulated users with hidden weights over raw step features.

use crate::elicit::{Label, Responder};
use crate::explain::{ExplanationStep, NUM_FEATURES};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OracleSpec {
    #[serde(default = "default_beta")]
    pub beta: f64,
    #[serde(default = "default_mislabel")]
    pub mislabel_rate: f64,
}

fn default_beta() -> f64 {
    1.0
}

fn default_mislabel() -> f64 {
    0.1
}

impl Default for OracleSpec {
    fn default() -> Self {
        OracleSpec {
            beta: default_beta(),
            mislabel_rate: default_mislabel(),
        }
    }
}

#[derive(Clone, Debug)]
pub struct OracleUser {
    pub w_star: Vec<f64>,
    pub beta: f64,
    pub mislabel_rate: f64,
    rng: ChaCha8Rng,
}

/// Weights `10^j` with `j` uniform on `[-2, 2]`, drawn independently.
pub fn sample_weights(rng: &mut impl Rng, p: usize) -> Vec<f64> {
    (0..p).map(|_| 10f64.powf(rng.gen_range(-2.0..=2.0))).collect()
}

/// A user with default noise whose weights and answers derive from `seed`.
pub fn sample_oracle(seed: u64) -> OracleUser {
    sample_oracle_with(seed, OracleSpec::default())
}

pub fn sample_oracle_with(seed: u64, spec: OracleSpec) -> OracleUser {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let w_star = sample_weights(&mut rng, NUM_FEATURES);
    OracleUser::new(w_star, spec, rng.gen())
}

impl OracleUser {
    pub fn new(w_star: Vec<f64>, spec: OracleSpec, seed: u64) -> Self {
        assert!(spec.beta > 0.0, "beta must be positive");
        assert!((0.0..0.5).contains(&spec.mislabel_rate), "mislabel rate must lie in [0, 0.5)");
        OracleUser {
            w_star,
            beta: spec.beta,
            mislabel_rate: spec.mislabel_rate,
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    pub fn utility(&self, phi: &[i64]) -> f64 {
        self.w_star.iter().zip(phi).map(|(w, &x)| w * x as f64).sum()
    }

    pub fn p_indifferent(&self, phi1: &[i64], phi2: &[i64]) -> f64 {
        (-self.beta * (self.utility(phi2) - self.utility(phi1)).abs()).exp()
    }

    pub fn respond(&mut self, phi1: &[i64], phi2: &[i64]) -> Label {
        if self.rng.gen::<f64>() < self.p_indifferent(phi1, phi2) {
            return Label::Indifferent;
        }
        let truth = if self.utility(phi1) < self.utility(phi2) {
            Label::Left
        } else {
            Label::Right
        };
        if self.rng.gen::<f64>() < self.mislabel_rate {
            match truth {
                Label::Left => Label::Right,
                _ => Label::Left,
            }
        } else {
            truth
        }
    }
}

impl Responder for OracleUser {
    fn respond(&mut self, y1: &ExplanationStep, y2: &ExplanationStep) -> Result<Label, String> {
        Ok(OracleUser::respond(self, &y1.features, &y2.features))
    }
}
