use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// CA50 setpoint plus a stepped IMEP demand.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReferenceProfile {
    pub ca50: f64,
    pub imep_levels: Vec<f64>,
    pub phase_len: usize,
}

impl Default for ReferenceProfile {
    fn default() -> Self {
        Self {
            ca50: 7.0,
            imep_levels: vec![2.8, 2.2, 3.2, 3.9],
            phase_len: 30,
        }
    }
}

impl ReferenceProfile {
    /// `(ca50_ref, imep_ref)` for a cycle; cycles past the last phase hold it.
    pub fn at(&self, cycle: i64) -> Result<(f64, f64)> {
        if cycle < 0 {
            return Err(Error::InvalidArgument(format!("negative cycle {cycle}")));
        }
        Ok((self.ca50, self.imep_levels[self.phase(cycle as usize)]))
    }

    pub fn phase(&self, cycle: usize) -> usize {
        (cycle / self.phase_len).min(self.imep_levels.len() - 1)
    }
}
