use serde::{Deserialize, Serialize};

use super::EngineState;
use crate::rng::{self, Stream};

/// Ground-truth residual process `g(x, w)`, `w ~ N(0, I2)`.
///
/// ```text
/// r_ca50 = s1(x) * (w1 + gamma(x) * (w1^2 - 1))
/// r_imep = s2(x) * (rho * w1 + sqrt(1 - rho^2) * w2)
/// s1     = base + a_late * sig((ca50 - c_late) / h_late) + a_low * sig((imep_low - imep) / h_low)
/// gamma  = a_skew * sig((ca50 - c_skew) / h_skew)
/// s2     = base2 + a2 * sig((ca50 - c_late) / h_late)
/// ```
///
/// Scale and skew grow towards late phasing and low load, and the two
/// components are negatively correlated.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResidualParams {
    pub ca50_base: f64,
    pub ca50_late_gain: f64,
    pub late_center: f64,
    pub late_width: f64,
    pub ca50_low_load_gain: f64,
    pub low_load_center: f64,
    pub low_load_width: f64,
    pub skew_gain: f64,
    pub skew_center: f64,
    pub skew_width: f64,
    pub imep_base: f64,
    pub imep_late_gain: f64,
    pub correlation: f64,
}

impl Default for ResidualParams {
    fn default() -> Self {
        Self {
            ca50_base: 0.8,
            ca50_late_gain: 0.6,
            late_center: 10.0,
            late_width: 1.5,
            ca50_low_load_gain: 0.4,
            low_load_center: 2.6,
            low_load_width: 0.2,
            skew_gain: 0.3,
            skew_center: 9.0,
            skew_width: 1.5,
            imep_base: 0.05,
            imep_late_gain: 0.03,
            correlation: -0.5,
        }
    }
}

fn sigmoid(t: f64) -> f64 {
    1.0 / (1.0 + (-t).exp())
}

impl ResidualParams {
    pub fn ca50_scale(&self, x: &EngineState) -> f64 {
        self.ca50_base
            + self.ca50_late_gain * sigmoid((x.ca50 - self.late_center) / self.late_width)
            + self.ca50_low_load_gain * sigmoid((self.low_load_center - x.imep) / self.low_load_width)
    }

    pub fn skew(&self, x: &EngineState) -> f64 {
        self.skew_gain * sigmoid((x.ca50 - self.skew_center) / self.skew_width)
    }

    pub fn imep_scale(&self, x: &EngineState) -> f64 {
        self.imep_base + self.imep_late_gain * sigmoid((x.ca50 - self.late_center) / self.late_width)
    }

    /// Evaluates the generator at a given latent draw (physical units).
    pub fn from_latent(&self, x: &EngineState, w: [f64; 2]) -> [f64; 2] {
        let s1 = self.ca50_scale(x);
        let g = self.skew(x);
        let s2 = self.imep_scale(x);
        let rho = self.correlation;
        [
            s1 * (w[0] + g * (w[0] * w[0] - 1.0)),
            s2 * (rho * w[0] + (1.0 - rho * rho).sqrt() * w[1]),
        ]
    }

    pub fn sample(&self, x: &EngineState, rng: &mut Stream) -> [f64; 2] {
        let w = [rng::normal(rng), rng::normal(rng)];
        self.from_latent(x, w)
    }

    /// Analytic mean and covariance `(mean, [var_ca50, cov, var_imep])`.
    pub fn moments(&self, x: &EngineState) -> ([f64; 2], [f64; 3]) {
        let s1 = self.ca50_scale(x);
        let g = self.skew(x);
        let s2 = self.imep_scale(x);
        // E[w1^2 - 1] = 0, E[(w1^2 - 1)^2] = 2, E[w1 (w1^2 - 1)] = 0
        let var1 = s1 * s1 * (1.0 + 2.0 * g * g);
        let cov = s1 * s2 * self.correlation;
        ([0.0, 0.0], [var1, cov, s2 * s2])
    }
}
