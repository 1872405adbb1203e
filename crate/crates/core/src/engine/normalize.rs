use super::{ControlInput, EngineState};

/// Closed interval `[lo, hi]` with an affine map onto `[-1, 1]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

impl Interval {
    pub const fn new(lo: f64, hi: f64) -> Self {
        Self { lo, hi }
    }

    pub fn mid(&self) -> f64 {
        0.5 * (self.lo + self.hi)
    }

    pub fn half_width(&self) -> f64 {
        0.5 * (self.hi - self.lo)
    }

    pub fn to_unit(&self, v: f64) -> f64 {
        (v - self.mid()) / self.half_width()
    }

    pub fn from_unit(&self, t: f64) -> f64 {
        self.mid() + t * self.half_width()
    }

    pub fn clamp(&self, v: f64) -> f64 {
        v.clamp(self.lo, self.hi)
    }
}

/// State constraint box: CA50 [2, 13] °CA, IMEP [2, 4.5] bar, DPmax [0, 5] bar/°CA.
pub const STATE_BOX: [Interval; 3] = [
    Interval::new(2.0, 13.0),
    Interval::new(2.0, 4.5),
    Interval::new(0.0, 5.0),
];

/// Hard actuator box: NVO [172, 232] °CA, fuel [0.5, 0.97] ms, ethanol [0, 0.4] ms.
pub const INPUT_BOX: [Interval; 3] = [
    Interval::new(172.0, 232.0),
    Interval::new(0.5, 0.97),
    Interval::new(0.0, 0.4),
];

/// Box-to-`[-1, 1]` normalization for states, inputs and residuals.
///
/// Residuals are differences of states, so they scale by the half width only.
#[derive(Debug, Clone, Copy, Default)]
pub struct Normalizer;

impl Normalizer {
    pub fn state(&self, s: &EngineState) -> [f64; 3] {
        let a = s.to_array();
        std::array::from_fn(|i| STATE_BOX[i].to_unit(a[i]))
    }

    pub fn denormalize_state(&self, n: &[f64; 3]) -> EngineState {
        EngineState::from_array(std::array::from_fn(|i| STATE_BOX[i].from_unit(n[i])))
    }

    pub fn input(&self, u: &ControlInput) -> [f64; 3] {
        let a = u.to_array();
        std::array::from_fn(|i| INPUT_BOX[i].to_unit(a[i]))
    }

    pub fn denormalize_input(&self, n: &[f64; 3]) -> ControlInput {
        ControlInput::from_array(std::array::from_fn(|i| INPUT_BOX[i].from_unit(n[i])))
    }

    /// CA50/IMEP residual in normalized units.
    pub fn residual(&self, r: &[f64; 2]) -> [f64; 2] {
        [r[0] / STATE_BOX[0].half_width(), r[1] / STATE_BOX[1].half_width()]
    }

    pub fn denormalize_residual(&self, r: &[f64; 2]) -> [f64; 2] {
        [r[0] * STATE_BOX[0].half_width(), r[1] * STATE_BOX[1].half_width()]
    }
}
