use std::sync::Arc;

use nalgebra::{Matrix3, Matrix3x2, Vector3};

use super::config::{cantelli_kappa, SmpcConfig};
use super::cost::{mmd_stage_cost, quadratic_stage, tightened_violations, MomentState};
use super::decision::Layout;
use super::dynamics::{jacobians, Dynamics};
use super::gaussian::GaussianResidual;
use super::scenario::ScenarioSet;
use crate::engine::OperatingLimits;
use crate::error::{ensure_finite, Error, Result};
use crate::genmodel::{GaussianKernel, ResidualModel};

/// How predicted moments are carried from one step to the next.
#[derive(Clone)]
pub enum Propagation {
    /// `x+ = f(x, u)` with zero covariance.
    Deterministic,
    /// Mean through `f + mu(x)`, covariance through the Jacobians plus the
    /// fitted residual covariance.
    Linearized(Arc<GaussianResidual>),
    /// Frozen collocation scenarios through `f + g(x, w)` and projection.
    Scenario {
        set: Arc<ScenarioSet>,
        model: Arc<dyn ResidualModel>,
    },
}

impl Propagation {
    pub fn has_gains(&self) -> bool {
        !matches!(self, Propagation::Deterministic)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CostKind {
    /// Expected quadratic cost with trace terms and the terminal weight.
    Quadratic,
    /// Per-step singleton MMD on (CA50, IMEP) plus `|E[u] - u_ref|_R^2`.
    Mmd,
}

/// Reference point and weights of one solve, normalized.
#[derive(Debug, Clone, PartialEq)]
pub struct Tracking {
    pub x_ref: [f64; 3],
    pub u_ref: [f64; 3],
    pub q: Matrix3<f64>,
    pub r: Matrix3<f64>,
    pub q_t: Matrix3<f64>,
}

/// Everything one prediction step produced.
#[derive(Debug, Clone)]
pub struct StepRecord {
    pub moment_in: MomentState,
    pub moment_out: MomentState,
    /// Decoder outputs of the scenarios of this step. They depend only on
    /// `moment_in`, so they can be reused when this step's inputs change.
    pub residuals: Vec<[f64; 2]>,
    /// Predicted samples of the next state (scenario propagation only).
    pub samples: Vec<[f64; 3]>,
    pub cost: f64,
    /// Sum of squared constraint violations.
    pub penalty: f64,
    pub max_violation: f64,
}

#[derive(Debug, Clone)]
pub struct Rollout {
    pub steps: Vec<StepRecord>,
}

impl Rollout {
    pub fn cost(&self) -> f64 {
        self.steps.iter().map(|s| s.cost).sum()
    }

    pub fn penalty(&self) -> f64 {
        self.steps.iter().map(|s| s.penalty).sum()
    }

    pub fn objective(&self, weight: f64) -> f64 {
        self.steps.iter().map(|s| s.cost + weight * s.penalty).sum()
    }

    pub fn max_violation(&self) -> f64 {
        self.steps.iter().fold(0.0, |m, s| m.max(s.max_violation))
    }

    pub fn means(&self) -> Vec<[f64; 3]> {
        self.steps
            .iter()
            .map(|s| [s.moment_out.mean[0], s.moment_out.mean[1], s.moment_out.mean[2]])
            .collect()
    }
}

fn mat3(g: [[f64; 3]; 3]) -> Matrix3<f64> {
    Matrix3::from_fn(|r, c| g[r][c])
}

fn clamp_unit(u: [f64; 3]) -> [f64; 3] {
    u.map(|v| v.clamp(-1.0, 1.0))
}

fn hinge_sums(v: &[f64]) -> (f64, f64) {
    v.iter().fold((0.0, 0.0), |(s, m), x| (s + x * x, m.max(*x)))
}

/// One finite-horizon problem: measured state, references, propagation and
/// cost. The decision vector follows [`Layout`].
pub struct Problem<'a> {
    plant: &'a dyn Dynamics,
    propagation: &'a Propagation,
    cost: CostKind,
    cfg: &'a SmpcConfig,
    layout: Layout,
    x0: [f64; 3],
    tracking: Tracking,
    limits: OperatingLimits,
    kappa_x: f64,
    kappa_u: f64,
    kernel: GaussianKernel,
    step0_residuals: Vec<[f64; 2]>,
}

impl<'a> Problem<'a> {
    pub fn new(
        plant: &'a dyn Dynamics,
        propagation: &'a Propagation,
        cost: CostKind,
        cfg: &'a SmpcConfig,
        x0: [f64; 3],
        tracking: Tracking,
    ) -> Result<Self> {
        cfg.validate()?;
        ensure_finite("measured state", &x0)?;
        let layout = Layout {
            horizon: cfg.horizon,
            gains: propagation.has_gains(),
        };
        let step0_residuals = match propagation {
            Propagation::Scenario { set, model } => {
                if set.horizon() != cfg.horizon {
                    return Err(Error::Config(format!(
                        "scenario set covers {} steps, horizon is {}",
                        set.horizon(),
                        cfg.horizon
                    )));
                }
                let d = set.design(0);
                let mut out = vec![[0.0; 2]; d.points()];
                model.residual_batch(&vec![x0; d.points()], &d.w, &mut out);
                ensure_finite("step-0 residuals", out.as_flattened())?;
                out
            }
            _ if cost == CostKind::Mmd => {
                return Err(Error::Config("the MMD objective needs scenario propagation".into()));
            }
            _ => Vec::new(),
        };
        Ok(Self {
            plant,
            propagation,
            cost,
            cfg,
            layout,
            x0,
            tracking,
            limits: OperatingLimits::normalized(),
            kappa_x: cantelli_kappa(cfg.eps_state),
            kappa_u: cantelli_kappa(cfg.eps_input),
            kernel: GaussianKernel::new(cfg.mmd_bandwidth)?,
            step0_residuals,
        })
    }

    pub fn layout(&self) -> Layout {
        self.layout
    }

    pub fn config(&self) -> &SmpcConfig {
        self.cfg
    }

    pub fn tracking(&self) -> &Tracking {
        &self.tracking
    }

    /// Full forward rollout.
    pub fn rollout(&self, d: &[f64]) -> Rollout {
        let mut steps = Vec::with_capacity(self.layout.horizon);
        let mut moment = MomentState::deterministic(self.x0);
        for i in 0..self.layout.horizon {
            let rec = self.step(d, i, moment, None);
            moment = rec.moment_out;
            steps.push(rec);
        }
        Rollout { steps }
    }

    /// Objective of `d` assuming steps before `from` are unchanged from
    /// `base`.
    pub fn objective_from(&self, d: &[f64], weight: f64, base: &Rollout, from: usize) -> f64 {
        let mut total: f64 = base.steps[..from].iter().map(|s| s.cost + weight * s.penalty).sum();
        let mut moment = base.steps[from].moment_in;
        for i in from..self.layout.horizon {
            let reuse = (i == from).then(|| base.steps[from].residuals.as_slice());
            let rec = self.step(d, i, moment, reuse);
            total += rec.cost + weight * rec.penalty;
            moment = rec.moment_out;
            if !total.is_finite() {
                return f64::INFINITY;
            }
        }
        total
    }

    /// Central finite-difference gradient. Each perturbation re-evaluates only
    /// the steps from the perturbed block on.
    pub fn gradient(&self, d: &[f64], weight: f64, base: &Rollout) -> Vec<f64> {
        let h = self.cfg.fd_step;
        let mut x = d.to_vec();
        (0..d.len())
            .map(|k| {
                let b = self.layout.block_of(k);
                x[k] = d[k] + h;
                let fp = self.objective_from(&x, weight, base, b);
                x[k] = d[k] - h;
                let fm = self.objective_from(&x, weight, base, b);
                x[k] = d[k];
                (fp - fm) / (2.0 * h)
            })
            .collect()
    }

    fn step(&self, d: &[f64], i: usize, moment_in: MomentState, reuse: Option<&[[f64; 2]]>) -> StepRecord {
        let t = &self.tracking;
        let raw = self.layout.input(d, i);
        let (u, k) = if i == 0 {
            (clamp_unit(raw), Matrix3::zeros())
        } else {
            (raw, mat3(self.layout.gain(d, i)))
        };
        let u_vec = Vector3::from(u);
        let u_dev = u_vec - Vector3::from(t.u_ref);

        let mut violations = [0.0; 12];
        if i == 0 {
            // outside-box part of the raw u0; the clamped value is what is applied
            for c in 0..3 {
                violations[c] = (raw[c].abs() - 1.0).max(0.0);
            }
        } else {
            violations[..6].copy_from_slice(&tightened_violations(
                &self.limits.g_input,
                &self.limits.h_input,
                &u_vec,
                &k,
                self.kappa_u,
            ));
        }
        let mut cost = match self.cost {
            CostKind::Quadratic => quadratic_stage(&u_dev, &(k * k.transpose()), &t.r),
            CostKind::Mmd => (u_dev.transpose() * t.r * u_dev)[0],
        };

        let (moment_out, residuals, samples) = match self.propagate(i, &moment_in, &u, &k, reuse) {
            Some(p) => p,
            None => return self.failed(moment_in),
        };

        violations[6..].copy_from_slice(&tightened_violations(
            &self.limits.g_state,
            &self.limits.h_state,
            &moment_out.mean,
            &moment_out.chol,
            self.kappa_x,
        ));
        let last = i + 1 == self.layout.horizon;
        cost += match self.cost {
            CostKind::Quadratic => {
                let w = if last { &t.q_t } else { &t.q };
                quadratic_stage(&(moment_out.mean - Vector3::from(t.x_ref)), &moment_out.covariance(), w)
            }
            CostKind::Mmd => {
                let pts: Vec<[f64; 2]> = samples.iter().map(|s| [s[0], s[1]]).collect();
                let a1 = self.scenario_set().design(i).mean_row();
                mmd_stage_cost(
                    &pts,
                    [t.x_ref[0], t.x_ref[1]],
                    self.kernel,
                    a1,
                    self.cfg.mmd_include_constant,
                )
                .unwrap_or(f64::INFINITY)
            }
        };
        let (penalty, max_violation) = hinge_sums(&violations);
        StepRecord {
            moment_in,
            moment_out,
            residuals,
            samples,
            cost: if cost.is_finite() { cost } else { f64::INFINITY },
            penalty,
            max_violation,
        }
    }

    fn failed(&self, moment_in: MomentState) -> StepRecord {
        StepRecord {
            moment_in,
            moment_out: moment_in,
            residuals: Vec::new(),
            samples: Vec::new(),
            cost: f64::INFINITY,
            penalty: 0.0,
            max_violation: f64::INFINITY,
        }
    }

    fn scenario_set(&self) -> &ScenarioSet {
        match self.propagation {
            Propagation::Scenario { set, .. } => set,
            _ => unreachable!("MMD cost is rejected without scenarios"),
        }
    }

    fn factor(&self, cov: Matrix3<f64>) -> Option<Matrix3<f64>> {
        let sym = 0.5 * (cov + cov.transpose()) + Matrix3::identity() * self.cfg.jitter;
        sym.cholesky().map(|c| c.l())
    }

    #[allow(clippy::type_complexity)]
    fn propagate(
        &self,
        i: usize,
        m: &MomentState,
        u: &[f64; 3],
        k: &Matrix3<f64>,
        reuse: Option<&[[f64; 2]]>,
    ) -> Option<(MomentState, Vec<[f64; 2]>, Vec<[f64; 3]>)> {
        let x = [m.mean[0], m.mean[1], m.mean[2]];
        match self.propagation {
            Propagation::Deterministic => {
                let next = self.plant.step(&x, u, &[0.0, 0.0]);
                next.iter()
                    .all(|v| v.is_finite())
                    .then(|| (MomentState::deterministic(next), Vec::new(), Vec::new()))
            }
            Propagation::Linearized(g) => {
                let r = g.mean(&x);
                let next = self.plant.step(&x, u, &r);
                if !next.iter().all(|v| v.is_finite()) {
                    return None;
                }
                let (a, b, e) = jacobians(self.plant, &x, u, &r);
                let dmu = Matrix3x2::new(g.c[0][0], g.c[1][0], g.c[0][1], g.c[1][1], 0.0, 0.0).transpose();
                let a_eff = a + e * dmu;
                let spread = a_eff * m.chol + b * k;
                let cov = spread * spread.transpose() + e * g.covariance() * e.transpose();
                let chol = self.factor(cov)?;
                Some((
                    MomentState {
                        mean: Vector3::from(next),
                        chol,
                    },
                    Vec::new(),
                    Vec::new(),
                ))
            }
            Propagation::Scenario { set, model } => {
                let design = set.design(i);
                let n = design.points();
                let (xs, us): (Vec<[f64; 3]>, Vec<[f64; 3]>) = design
                    .xi
                    .iter()
                    .map(|xi| {
                        let v = Vector3::from(*xi);
                        let xs = m.chol * v + m.mean;
                        let us = k * v + Vector3::from(*u);
                        ([xs[0], xs[1], xs[2]], [us[0], us[1], us[2]])
                    })
                    .unzip();
                let residuals = match (i, reuse) {
                    (0, _) => self.step0_residuals.clone(),
                    (_, Some(r)) => r.to_vec(),
                    _ => {
                        let mut out = vec![[0.0; 2]; n];
                        model.residual_batch(&xs, &design.w, &mut out);
                        out
                    }
                };
                let samples: Vec<[f64; 3]> = (0..n).map(|j| self.plant.step(&xs[j], &us[j], &residuals[j])).collect();
                if !samples.as_flattened().iter().all(|v| v.is_finite()) {
                    return None;
                }
                let mut coeffs = vec![[0.0; 3]; design.terms];
                for (t, c) in coeffs.iter_mut().enumerate() {
                    let row = &design.operator[t * n..(t + 1) * n];
                    for (a, s) in row.iter().zip(&samples) {
                        c[0] += a * s[0];
                        c[1] += a * s[1];
                        c[2] += a * s[2];
                    }
                }
                let mut cov = Matrix3::zeros();
                for c in &coeffs[1..] {
                    let v = Vector3::from(*c);
                    cov += v * v.transpose();
                }
                let chol = self.factor(cov)?;
                Some((
                    MomentState {
                        mean: Vector3::from(coeffs[0]),
                        chol,
                    },
                    residuals,
                    samples,
                ))
            }
        }
    }
}
