use serde::{Deserialize, Serialize};

use super::{ControlInput, EngineState, Normalizer, ResidualParams};
use crate::error::{Error, Result};
use crate::rng::Stream;

/// Coefficients of the saturating cycle-to-cycle drift `f(x, u)`.
///
/// With inputs mapped to `[-1, 1]` (`n`, `f`, `e` for NVO, fuel, ethanol):
///
/// ```text
/// ca50+  = 7 + 6 tanh([0.3 (ca50 - 7) - 4 n - 2 f + 3 e + 0.2 (ca50 - 7) n] / 6)
/// imep+  = 3.25 + 1.25 tanh([0.25 (imep - 3.25) + 1.6 f + 0.4 e - 0.005 (ca50 - 7)^2] / 1.25)
/// dpmax+ = max(0, 2.5 + 0.8 (imep+ - 3.25) - 0.25 (ca50+ - 7))
/// ```
///
/// The DPmax row is evaluated on the post-residual CA50 and IMEP.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DriftParams {
    pub ca50_center: f64,
    pub ca50_span: f64,
    pub ca50_carry: f64,
    pub ca50_nvo: f64,
    pub ca50_fuel: f64,
    pub ca50_eth: f64,
    pub ca50_nvo_cross: f64,
    pub imep_center: f64,
    pub imep_span: f64,
    pub imep_carry: f64,
    pub imep_fuel: f64,
    pub imep_eth: f64,
    pub imep_phasing_loss: f64,
    pub dpmax_base: f64,
    pub dpmax_imep: f64,
    pub dpmax_ca50: f64,
}

impl Default for DriftParams {
    fn default() -> Self {
        Self {
            ca50_center: 7.0,
            ca50_span: 6.0,
            ca50_carry: 0.3,
            ca50_nvo: -4.0,
            ca50_fuel: -2.0,
            ca50_eth: 3.0,
            ca50_nvo_cross: 0.2,
            imep_center: 3.25,
            imep_span: 1.25,
            imep_carry: 0.25,
            imep_fuel: 1.6,
            imep_eth: 0.4,
            imep_phasing_loss: 0.005,
            dpmax_base: 2.5,
            dpmax_imep: 0.8,
            dpmax_ca50: 0.25,
        }
    }
}

impl DriftParams {
    /// Pre-residual CA50 and IMEP of the next cycle. Inputs are taken as given
    /// (no clamping) so predictions can evaluate off-box scenario inputs.
    pub fn drift(&self, x: &EngineState, u: &ControlInput) -> [f64; 2] {
        let [n, f, e] = Normalizer.input(u);
        let dc = x.ca50 - self.ca50_center;
        let z = self.ca50_carry * dc
            + self.ca50_nvo * n
            + self.ca50_fuel * f
            + self.ca50_eth * e
            + self.ca50_nvo_cross * dc * n;
        let y = self.imep_carry * (x.imep - self.imep_center) + self.imep_fuel * f + self.imep_eth * e
            - self.imep_phasing_loss * dc * dc;
        [
            self.ca50_center + self.ca50_span * (z / self.ca50_span).tanh(),
            self.imep_center + self.imep_span * (y / self.imep_span).tanh(),
        ]
    }

    pub fn dpmax(&self, ca50: f64, imep: f64) -> f64 {
        (self.dpmax_base + self.dpmax_imep * (imep - self.imep_center) - self.dpmax_ca50 * (ca50 - self.ca50_center))
            .max(0.0)
    }

    /// `f(x, u) + r` with DPmax recomputed from the post-residual state.
    pub fn advance(&self, x: &EngineState, u: &ControlInput, r: [f64; 2]) -> EngineState {
        let [c, i] = self.drift(x, u);
        let ca50 = c + r[0];
        let imep = i + r[1];
        EngineState::new(ca50, imep, self.dpmax(ca50, imep))
    }

    /// [`advance`](Self::advance) in normalized coordinates.
    #[inline]
    pub fn advance_normalized(&self, x: &[f64; 3], u: &[f64; 3], r: &[f64; 2]) -> [f64; 3] {
        let n = Normalizer;
        let xs = n.denormalize_state(x);
        let us = n.denormalize_input(u);
        let rp = n.denormalize_residual(r);
        n.state(&self.advance(&xs, &us, rp))
    }
}

/// Drift plus ground-truth residual process.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnginePlant {
    pub drift: DriftParams,
    pub residual: ResidualParams,
    pub residual_enabled: bool,
}

impl Default for EnginePlant {
    fn default() -> Self {
        Self {
            drift: DriftParams::default(),
            residual: ResidualParams::default(),
            residual_enabled: true,
        }
    }
}

impl EnginePlant {
    pub fn deterministic() -> Self {
        Self {
            residual_enabled: false,
            ..Self::default()
        }
    }

    /// One engine cycle. The input is clamped to the hard box; the residual is
    /// drawn from `rng` at the current state.
    pub fn step(&self, x: &EngineState, u: &ControlInput, rng: &mut Stream) -> Result<EngineState> {
        if !x.is_finite() {
            return Err(Error::NonFinite(format!("plant state {x:?}")));
        }
        let u = u.clamped();
        if !u.is_finite() {
            return Err(Error::NonFinite(format!("plant input {u:?}")));
        }
        let r = if self.residual_enabled {
            self.residual.sample(x, rng)
        } else {
            [0.0, 0.0]
        };
        Ok(self.drift.advance(x, &u, r))
    }

    /// The residual `x+ - f(x, u)` for the next step, without applying it.
    pub fn residual_sample(&self, x: &EngineState, rng: &mut Stream) -> [f64; 2] {
        if self.residual_enabled {
            self.residual.sample(x, rng)
        } else {
            [0.0, 0.0]
        }
    }
}

impl ControlInput {
    fn is_finite(&self) -> bool {
        self.to_array().iter().all(|v| v.is_finite())
    }
}
