use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use super::config::SmpcConfig;
use super::decision::{Layout, SmpcDecision};
use super::gaussian::GaussianResidual;
use super::problem::{CostKind, Problem, Propagation, Tracking};
use super::scenario::ScenarioSet;
use super::solver::{solve, SolveReport};
use super::terminal::{linearize, terminal_weight};
use crate::engine::{equilibrium, ControlInput, DriftParams, EngineState, Normalizer};
use crate::error::{Error, Result};
use crate::genmodel::ResidualModel;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum VariantTag {
    Nominal,
    Gaussian,
    Pc,
    Gem,
}

impl VariantTag {
    pub const ALL: [VariantTag; 4] = [
        VariantTag::Nominal,
        VariantTag::Gaussian,
        VariantTag::Pc,
        VariantTag::Gem,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            VariantTag::Nominal => "nominal",
            VariantTag::Gaussian => "gaussian",
            VariantTag::Pc => "pc",
            VariantTag::Gem => "gem",
        }
    }
}

impl fmt::Display for VariantTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for VariantTag {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL.into_iter().find(|t| t.as_str() == s).ok_or_else(|| {
            Error::Config(format!(
                "unknown controller '{s}' (expected nominal, gaussian, pc or gem)"
            ))
        })
    }
}

/// A controller variant with the sub-model it needs.
#[derive(Clone)]
pub enum Variant {
    /// Deterministic prediction, no feedback gains.
    Nominal,
    /// Linear-Gaussian residual with linearized covariance propagation.
    Gaussian(Arc<GaussianResidual>),
    /// Learned residual, scenario propagation, expected quadratic cost.
    Pc(Arc<dyn ResidualModel>),
    /// Learned residual, scenario propagation, MMD cost.
    Gem(Arc<dyn ResidualModel>),
}

impl Variant {
    pub fn tag(&self) -> VariantTag {
        match self {
            Variant::Nominal => VariantTag::Nominal,
            Variant::Gaussian(_) => VariantTag::Gaussian,
            Variant::Pc(_) => VariantTag::Pc,
            Variant::Gem(_) => VariantTag::Gem,
        }
    }
}

/// Output of one receding-horizon step.
#[derive(Debug, Clone)]
pub struct ControlStep {
    /// Physical input, inside the hard box.
    pub input: ControlInput,
    pub decision: SmpcDecision,
    pub report: SolveReport,
}

/// Receding-horizon controller with warm start. Not shareable across
/// threads while stepping; build one per closed-loop run.
pub struct Controller {
    tag: VariantTag,
    propagation: Propagation,
    cost: CostKind,
    cfg: SmpcConfig,
    drift: DriftParams,
    layout: Layout,
    warm: Option<Vec<f64>>,
    reference: Option<((f64, f64), Tracking)>,
}

impl Controller {
    /// `scenarios` is required by `pc` and `gem` and must cover the horizon.
    pub fn new(
        variant: Variant,
        cfg: SmpcConfig,
        drift: DriftParams,
        scenarios: Option<Arc<ScenarioSet>>,
    ) -> Result<Self> {
        cfg.validate()?;
        let tag = variant.tag();
        let need = |s: Option<Arc<ScenarioSet>>| {
            s.ok_or_else(|| Error::Config(format!("controller '{tag}' needs a projection bundle")))
        };
        let (propagation, cost) = match variant {
            Variant::Nominal => (Propagation::Deterministic, CostKind::Quadratic),
            Variant::Gaussian(g) => (Propagation::Linearized(g), CostKind::Quadratic),
            Variant::Pc(model) => (
                Propagation::Scenario {
                    set: need(scenarios)?,
                    model,
                },
                CostKind::Quadratic,
            ),
            Variant::Gem(model) => (
                Propagation::Scenario {
                    set: need(scenarios)?,
                    model,
                },
                CostKind::Mmd,
            ),
        };
        if let Propagation::Scenario { set, .. } = &propagation {
            if set.horizon() != cfg.horizon {
                return Err(Error::Config(format!(
                    "projection bundle covers {} steps, smpc.horizon is {}",
                    set.horizon(),
                    cfg.horizon
                )));
            }
        }
        let layout = Layout {
            horizon: cfg.horizon,
            gains: propagation.has_gains(),
        };
        Ok(Self {
            tag,
            propagation,
            cost,
            cfg,
            drift,
            layout,
            warm: None,
            reference: None,
        })
    }

    pub fn tag(&self) -> VariantTag {
        self.tag
    }

    pub fn layout(&self) -> Layout {
        self.layout
    }

    pub fn config(&self) -> &SmpcConfig {
        &self.cfg
    }

    /// Drops the warm start.
    pub fn reset(&mut self) {
        self.warm = None;
    }

    /// Reference state and input (the equilibrium at the targets) and the
    /// terminal weight linearized there. Cached per reference value.
    pub fn tracking(&mut self, reference: (f64, f64)) -> Result<Tracking> {
        if let Some((r, t)) = &self.reference {
            if *r == reference {
                return Ok(t.clone());
            }
        }
        let eq = equilibrium(&self.drift, reference.0, reference.1, self.cfg.r_diag)?;
        let x_ref = eq.state_normalized();
        let u_ref = eq.input_normalized();
        let q = Matrix3::from_diagonal(&Vector3::from(self.cfg.q_diag));
        let r = Matrix3::from_diagonal(&Vector3::from(self.cfg.r_diag));
        let q_t = match self.cfg.terminal_override {
            Some(m) => Matrix3::from_fn(|i, j| m[i][j]),
            None => {
                let (a, b) = linearize(&self.drift, &x_ref, &u_ref);
                terminal_weight(&a, &b, &q, &r)?.1
            }
        };
        let t = Tracking {
            x_ref,
            u_ref,
            q,
            r,
            q_t,
        };
        self.reference = Some((reference, t.clone()));
        Ok(t)
    }

    /// Solves from the measured state, returns the clamped physical input and
    /// shifts the solution into the next warm start.
    pub fn step(&mut self, x: &EngineState, reference: (f64, f64)) -> Result<ControlStep> {
        let tracking = self.tracking(reference)?;
        let warm = match &self.warm {
            Some(w) => w.clone(),
            None => self.layout.hold(tracking.u_ref),
        };
        let problem = Problem::new(
            &self.drift,
            &self.propagation,
            self.cost,
            &self.cfg,
            Normalizer.state(x),
            tracking,
        )?;
        let (d, report) = solve(&problem, &warm)?;
        let decision = SmpcDecision::from_vec(&self.layout, &d);
        self.warm = Some(self.layout.shift(&d));
        Ok(ControlStep {
            input: Normalizer.denormalize_input(&decision.u0).clamped(),
            decision,
            report,
        })
    }
}
