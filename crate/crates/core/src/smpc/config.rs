use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::pce::PceConfig;

/// Controller and solver settings. All quantities live in normalized units.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SmpcConfig {
    pub horizon: usize,
    /// Violation level of the state chance constraints.
    pub eps_state: f64,
    /// Violation level of the input chance constraints.
    pub eps_input: f64,
    pub q_diag: [f64; 3],
    pub r_diag: [f64; 3],
    /// Replaces the computed terminal weight when set.
    pub terminal_override: Option<[[f64; 3]; 3]>,
    /// Bandwidth of the kernel in the distributional objective.
    pub mmd_bandwidth: f64,
    /// Keep the decision-independent `k(x_ref, x_ref)` term in the MMD cost.
    pub mmd_include_constant: bool,
    pub penalty_initial: f64,
    pub penalty_growth: f64,
    pub outer_iterations: usize,
    pub inner_iterations: usize,
    pub lbfgs_memory: usize,
    pub fd_step: f64,
    pub grad_tol: f64,
    pub step_tol: f64,
    /// Objective decrease below which the inner loop stops.
    pub f_tol: f64,
    /// Diagonal jitter before the covariance Cholesky factorization.
    pub jitter: f64,
    /// Largest constraint violation accepted without a quality flag.
    pub violation_tol: f64,
    pub pce_initial: PceConfig,
    pub pce_later: PceConfig,
}

impl Default for SmpcConfig {
    fn default() -> Self {
        Self {
            horizon: 4,
            eps_state: 0.95,
            eps_input: 0.95,
            q_diag: [10.0, 10.0, 0.1],
            r_diag: [0.2, 1.0, 0.5],
            terminal_override: None,
            mmd_bandwidth: 0.5,
            mmd_include_constant: false,
            penalty_initial: 100.0,
            penalty_growth: 10.0,
            outer_iterations: 3,
            inner_iterations: 60,
            lbfgs_memory: 8,
            fd_step: 1e-5,
            grad_tol: 1e-4,
            step_tol: 1e-7,
            f_tol: 1e-10,
            jitter: 1e-9,
            violation_tol: 1e-3,
            pce_initial: PceConfig::initial_step(),
            pce_later: PceConfig::later_step(),
        }
    }
}

impl SmpcConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        if self.horizon == 0 {
            return bad("smpc.horizon must be at least 1");
        }
        for (name, e) in [("smpc.eps_state", self.eps_state), ("smpc.eps_input", self.eps_input)] {
            if !(e > 0.0 && e < 1.0) {
                return Err(Error::Config(format!("{name} must lie in (0, 1), got {e}")));
            }
        }
        if self.q_diag.iter().any(|v| !(*v >= 0.0)) {
            return bad("smpc.q entries must be >= 0");
        }
        if self.r_diag.iter().any(|v| !(*v > 0.0)) {
            return bad("smpc.r entries must be > 0");
        }
        if !(self.mmd_bandwidth > 0.0) {
            return bad("smpc.mmd_bandwidth must be > 0");
        }
        if !(self.jitter > 0.0) {
            return bad("smpc.jitter must be > 0");
        }
        if !(self.fd_step > 0.0) || !(self.penalty_initial > 0.0) || !(self.penalty_growth >= 1.0) {
            return bad("smpc solver settings out of range");
        }
        if self.outer_iterations == 0 || self.lbfgs_memory == 0 {
            return bad("smpc.outer_iterations and smpc.lbfgs_memory must be >= 1");
        }
        Ok(())
    }
}

/// Cantelli multiplier `sqrt((1 - eps) / eps)`.
pub fn cantelli_kappa(eps: f64) -> f64 {
    ((1.0 - eps) / eps).sqrt()
}
