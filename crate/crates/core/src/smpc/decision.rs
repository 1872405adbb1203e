use serde::{Deserialize, Serialize};

/// Position of every decision variable in the flat solver vector:
/// `u0` (3), then per later step `u~_i` (3) and, with feedback, `K~_i`
/// (3x3 row-major).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Layout {
    pub horizon: usize,
    pub gains: bool,
}

impl Layout {
    pub fn block_len(&self) -> usize {
        if self.gains {
            12
        } else {
            3
        }
    }

    pub fn len(&self) -> usize {
        3 + (self.horizon - 1) * self.block_len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// First index of the block of step `i >= 1`.
    pub fn block_start(&self, i: usize) -> usize {
        debug_assert!(i >= 1 && i < self.horizon);
        3 + (i - 1) * self.block_len()
    }

    /// Prediction step whose block contains variable `k`.
    pub fn block_of(&self, k: usize) -> usize {
        if k < 3 {
            0
        } else {
            1 + (k - 3) / self.block_len()
        }
    }

    /// Feedforward input of step `i` (the raw, unclamped `u0` for `i = 0`).
    pub fn input(&self, d: &[f64], i: usize) -> [f64; 3] {
        let s = if i == 0 { 0 } else { self.block_start(i) };
        [d[s], d[s + 1], d[s + 2]]
    }

    /// Feedback gain of step `i`; zero without feedback or at step 0.
    pub fn gain(&self, d: &[f64], i: usize) -> [[f64; 3]; 3] {
        if !self.gains || i == 0 {
            return [[0.0; 3]; 3];
        }
        let s = self.block_start(i) + 3;
        std::array::from_fn(|r| std::array::from_fn(|c| d[s + 3 * r + c]))
    }

    /// Decision holding `u` at every step with zero feedback.
    pub fn hold(&self, u: [f64; 3]) -> Vec<f64> {
        let mut d = vec![0.0; self.len()];
        d[..3].copy_from_slice(&u);
        for i in 1..self.horizon {
            let s = self.block_start(i);
            d[s..s + 3].copy_from_slice(&u);
        }
        d
    }

    /// Receding-horizon shift: step `i + 1` moves to step `i` and the last
    /// block is repeated.
    pub fn shift(&self, d: &[f64]) -> Vec<f64> {
        if self.horizon == 1 {
            return d.to_vec();
        }
        let mut out = d.to_vec();
        out[..3].copy_from_slice(&self.input(d, 1));
        let bl = self.block_len();
        for i in 1..self.horizon - 1 {
            let (dst, src) = (self.block_start(i), self.block_start(i + 1));
            out[dst..dst + bl].copy_from_slice(&d[src..src + bl]);
        }
        out
    }
}

/// Solved decision in structured form (normalized units).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SmpcDecision {
    pub u0: [f64; 3],
    pub feedforward: Vec<[f64; 3]>,
    /// Empty when the variant has no feedback.
    pub gains: Vec<[[f64; 3]; 3]>,
}

impl SmpcDecision {
    pub fn from_vec(layout: &Layout, d: &[f64]) -> Self {
        Self {
            u0: layout.input(d, 0),
            feedforward: (1..layout.horizon).map(|i| layout.input(d, i)).collect(),
            gains: if layout.gains {
                (1..layout.horizon).map(|i| layout.gain(d, i)).collect()
            } else {
                Vec::new()
            },
        }
    }

    pub fn to_vec(&self, layout: &Layout) -> Vec<f64> {
        let mut d = vec![0.0; layout.len()];
        d[..3].copy_from_slice(&self.u0);
        for i in 1..layout.horizon {
            let s = layout.block_start(i);
            d[s..s + 3].copy_from_slice(&self.feedforward[i - 1]);
            if layout.gains {
                for r in 0..3 {
                    d[s + 3 + 3 * r..s + 6 + 3 * r].copy_from_slice(&self.gains[i - 1][r]);
                }
            }
        }
        d
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn paper_sized_layouts() {
        let full = Layout {
            horizon: 4,
            gains: true,
        };
        assert_eq!(full.len(), 39);
        let nominal = Layout {
            horizon: 4,
            gains: false,
        };
        assert_eq!(nominal.len(), 12);
        assert_eq!(full.len() - nominal.len(), 27);
        assert_eq!(full.block_of(2), 0);
        assert_eq!(full.block_of(3), 1);
        assert_eq!(full.block_of(38), 3);
    }

    #[test]
    fn structured_round_trip_and_shift() {
        let l = Layout {
            horizon: 3,
            gains: true,
        };
        let d: Vec<f64> = (0..l.len()).map(|k| k as f64).collect();
        let s = SmpcDecision::from_vec(&l, &d);
        assert_eq!(s.to_vec(&l), d);
        assert_eq!(s.gains[0][1], [9.0, 10.0, 11.0]);
        let sh = l.shift(&d);
        assert_eq!(&sh[..3], &d[3..6]);
        assert_eq!(&sh[3..15], &d[15..27]);
        assert_eq!(&sh[15..27], &d[15..27]);
    }
}
