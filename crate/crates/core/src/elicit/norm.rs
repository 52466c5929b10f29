use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Normalization {
    /// Fixed bounds from an approximate nadir point.
    Default,
    None,
    /// Upper bound is the largest value seen in any generated pair.
    Cumulative,
    /// Upper bound is the larger value of the most recent pair.
    Local,
}

impl Normalization {
    pub const ALL: [Normalization; 4] = [
        Normalization::Default,
        Normalization::None,
        Normalization::Cumulative,
        Normalization::Local,
    ];
}

/// Per-feature bounds used to put features on a common scale.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NormState {
    pub mode: Normalization,
    pub ub: Vec<f64>,
    pub lb: Vec<f64>,
}

impl NormState {
    pub fn new(mode: Normalization, p: usize) -> Self {
        NormState {
            mode,
            ub: vec![1.0; p],
            lb: vec![0.0; p],
        }
    }

    /// Default mode with precomputed upper bounds; lower bounds are zero.
    pub fn with_bounds(ub: Vec<f64>) -> Self {
        let p = ub.len();
        NormState {
            mode: Normalization::Default,
            ub,
            lb: vec![0.0; p],
        }
    }

    fn scale(&self, i: usize) -> f64 {
        match self.mode {
            Normalization::None => 1.0,
            _ => {
                let d = self.ub[i] - self.lb[i];
                if d > 0.0 {
                    d
                } else {
                    1.0
                }
            }
        }
    }

    pub fn normalize(&self, phi: &[i64]) -> Vec<f64> {
        phi.iter()
            .enumerate()
            .map(|(i, &x)| match self.mode {
                Normalization::None => x as f64,
                _ => (x as f64 - self.lb[i]) / self.scale(i),
            })
            .collect()
    }

    /// Per-feature cost weights `w_i / scale_i`, so that the item costs of a
    /// step sum to `f_w` of its normalized features (up to a constant).
    pub fn cost_weights(&self, w: &[f64]) -> Vec<f64> {
        w.iter().enumerate().map(|(i, &x)| x / self.scale(i)).collect()
    }

    /// Rescales finite diversification weights to the normalized feature
    /// scale. Infinite weights stay infinite.
    pub fn deviation_weights(&self, u: &[f64]) -> Vec<f64> {
        u.iter()
            .enumerate()
            .map(|(i, &x)| if x.is_infinite() { x } else { x / self.scale(i) })
            .collect()
    }

    /// Bound update after a pair has been generated.
    pub fn observe(&mut self, phi1: &[i64], phi2: &[i64]) {
        match self.mode {
            Normalization::Default | Normalization::None => {}
            Normalization::Cumulative => {
                for i in 0..self.ub.len() {
                    self.ub[i] = self.ub[i].max(phi1[i] as f64).max(phi2[i] as f64);
                }
            }
            Normalization::Local => {
                for i in 0..self.ub.len() {
                    let m = phi1[i].max(phi2[i]);
                    self.ub[i] = if m > 0 { m as f64 } else { 1.0 };
                }
            }
        }
    }

    pub fn zero_width_features(&self) -> Vec<usize> {
        (0..self.ub.len()).filter(|&i| self.ub[i] - self.lb[i] <= 0.0).collect()
    }
}
