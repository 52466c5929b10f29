use serde::{Deserialize, Serialize};

/// Counts behind the UCB diversification weights.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct UcbStats {
    /// Pairs where the preferred step is lower on feature i.
    pub improved: Vec<u64>,
    /// Pairs where the two steps differ on feature i.
    pub differ: Vec<u64>,
    /// Preference-labeled pairs seen so far.
    pub pairs: u64,
}

impl UcbStats {
    pub fn new(p: usize) -> Self {
        UcbStats {
            improved: vec![0; p],
            differ: vec![0; p],
            pairs: 0,
        }
    }

    pub fn from_history<'a>(p: usize, history: impl IntoIterator<Item = (&'a [i64], &'a [i64])>) -> Self {
        let mut s = UcbStats::new(p);
        for (plus, minus) in history {
            s.record(plus, minus);
        }
        s
    }

    pub fn record(&mut self, plus: &[i64], minus: &[i64]) {
        self.pairs += 1;
        for i in 0..self.differ.len() {
            if plus[i] != minus[i] {
                self.differ[i] += 1;
            }
            if plus[i] < minus[i] {
                self.improved[i] += 1;
            }
        }
    }

    /// `q_i + 2 sqrt(ln|Q| / N_i)`, infinite where `N_i = 0`.
    pub fn weights(&self) -> Vec<f64> {
        let log_q = if self.pairs > 0 { (self.pairs as f64).ln() } else { 0.0 };
        self.differ
            .iter()
            .zip(&self.improved)
            .map(|(&n, &k)| {
                if n == 0 {
                    f64::INFINITY
                } else {
                    let n = n as f64;
                    k as f64 / n + 2.0 * (log_q / n).sqrt()
                }
            })
            .collect()
    }
}
