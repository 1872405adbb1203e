//! Surrogate HCCI plant and everything the controllers treat as "the world".

mod dataset;
mod equilibrium;
mod limits;
mod normalize;
mod plant;
mod reference;
mod residual;

pub use dataset::{
    generate_dataset, read_dataset_csv, write_dataset_csv, DatasetMeta, DatasetRecord, ExcitationPolicy, DATASET_HEADER,
};
pub use equilibrium::{equilibrium, equilibrium_input, fixed_point, Equilibrium};
pub use limits::OperatingLimits;
pub use normalize::{Interval, Normalizer, INPUT_BOX, STATE_BOX};
pub use plant::{DriftParams, EnginePlant};
pub use reference::ReferenceProfile;
pub use residual::ResidualParams;

use serde::{Deserialize, Serialize};

/// Per-cycle combustion indicators.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EngineState {
    /// Crank angle of 50% heat release, °CA.
    pub ca50: f64,
    /// Indicated mean effective pressure, bar.
    pub imep: f64,
    /// Maximum pressure rise rate, bar/°CA.
    pub dpmax: f64,
}

/// Actuator settings for one cycle.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ControlInput {
    /// Negative valve overlap, °CA.
    pub nvo: f64,
    /// Fuel injection duration, ms.
    pub fuel: f64,
    /// Ethanol injection duration, ms.
    pub eth: f64,
}

impl EngineState {
    pub fn new(ca50: f64, imep: f64, dpmax: f64) -> Self {
        Self { ca50, imep, dpmax }
    }

    pub fn to_array(self) -> [f64; 3] {
        [self.ca50, self.imep, self.dpmax]
    }

    pub fn from_array(a: [f64; 3]) -> Self {
        Self::new(a[0], a[1], a[2])
    }

    pub fn is_finite(&self) -> bool {
        self.ca50.is_finite() && self.imep.is_finite() && self.dpmax.is_finite()
    }
}

impl ControlInput {
    pub fn new(nvo: f64, fuel: f64, eth: f64) -> Self {
        Self { nvo, fuel, eth }
    }

    pub fn to_array(self) -> [f64; 3] {
        [self.nvo, self.fuel, self.eth]
    }

    pub fn from_array(a: [f64; 3]) -> Self {
        Self::new(a[0], a[1], a[2])
    }

    /// Projects onto the hard actuator box.
    pub fn clamped(self) -> Self {
        Self::new(
            INPUT_BOX[0].clamp(self.nvo),
            INPUT_BOX[1].clamp(self.fuel),
            INPUT_BOX[2].clamp(self.eth),
        )
    }

    pub fn in_box(&self) -> bool {
        self.to_array()
            .iter()
            .zip(INPUT_BOX.iter())
            .all(|(v, b)| *v >= b.lo && *v <= b.hi)
    }
}
