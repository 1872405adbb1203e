use std::collections::VecDeque;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::problem::{Problem, Rollout};
use crate::error::{Error, Result};

/// Quality flags of a solve, stored as a bit set in trajectory logs.
pub mod flags {
    /// The inner iteration cap was hit in the last penalty round.
    pub const ITERATION_CAP: u32 = 1;
    /// The returned decision violates a constraint by more than the tolerance.
    pub const VIOLATION: u32 = 2;
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveReport {
    /// Objective after every accepted inner step (penalty weight of that round).
    pub objective_trace: Vec<f64>,
    pub objective: f64,
    pub max_violation: f64,
    pub iterations: usize,
    pub penalty_weight: f64,
    pub flags: u32,
    pub wall_ms: f64,
}

impl SolveReport {
    pub fn degraded(&self) -> bool {
        self.flags != 0
    }
}

struct Inner {
    iterations: usize,
    capped: bool,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// L-BFGS with Armijo backtracking at a fixed penalty weight. Only steps that
/// lower the objective are accepted, so the incumbent never gets worse.
fn lbfgs(problem: &Problem, d: &mut Vec<f64>, ro: &mut Rollout, weight: f64, trace: &mut Vec<f64>) -> Inner {
    let cfg = problem.config();
    let mut f = ro.objective(weight);
    let mut g = problem.gradient(d, weight, ro);
    let mut mem: VecDeque<(Vec<f64>, Vec<f64>, f64)> = VecDeque::with_capacity(cfg.lbfgs_memory);
    for it in 0..cfg.inner_iterations {
        if norm(&g) <= cfg.grad_tol {
            return Inner {
                iterations: it,
                capped: false,
            };
        }
        // two-loop recursion
        let mut q: Vec<f64> = g.clone();
        let mut alphas = Vec::with_capacity(mem.len());
        for (s, y, rho) in mem.iter().rev() {
            let a = rho * dot(s, &q);
            q.iter_mut().zip(y).for_each(|(qi, yi)| *qi -= a * yi);
            alphas.push(a);
        }
        if let Some((s, y, _)) = mem.back() {
            let gamma = dot(s, y) / dot(y, y);
            q.iter_mut().for_each(|v| *v *= gamma);
        }
        for ((s, y, rho), a) in mem.iter().zip(alphas.iter().rev()) {
            let b = rho * dot(y, &q);
            q.iter_mut().zip(s).for_each(|(qi, si)| *qi += (a - b) * si);
        }
        let mut p: Vec<f64> = q.iter().map(|v| -v).collect();
        let mut slope = dot(&g, &p);
        if !(slope < 0.0) {
            mem.clear();
            p = g.iter().map(|v| -v).collect();
            slope = -dot(&g, &g);
        }
        let mut t = if mem.is_empty() { (1.0 / norm(&g)).min(1.0) } else { 1.0 };
        let mut accepted = None;
        for _ in 0..40 {
            let trial: Vec<f64> = d.iter().zip(&p).map(|(x, pi)| x + t * pi).collect();
            let r = problem.rollout(&trial);
            let ft = r.objective(weight);
            if ft.is_finite() && ft <= f + 1e-4 * t * slope && ft < f {
                accepted = Some((trial, r, ft));
                break;
            }
            t *= 0.5;
        }
        let Some((trial, r, ft)) = accepted else {
            return Inner {
                iterations: it,
                capped: false,
            };
        };
        let s: Vec<f64> = trial.iter().zip(d.iter()).map(|(a, b)| a - b).collect();
        let gn = problem.gradient(&trial, weight, &r);
        let y: Vec<f64> = gn.iter().zip(&g).map(|(a, b)| a - b).collect();
        let sy = dot(&s, &y);
        if sy > 1e-12 * norm(&s) * norm(&y) && sy > 0.0 {
            if mem.len() == cfg.lbfgs_memory {
                mem.pop_front();
            }
            mem.push_back((s.clone(), y, 1.0 / sy));
        }
        let decrease = f - ft;
        *d = trial;
        *ro = r;
        f = ft;
        g = gn;
        trace.push(f);
        if norm(&s) <= cfg.step_tol || decrease <= cfg.f_tol {
            return Inner {
                iterations: it + 1,
                capped: false,
            };
        }
    }
    Inner {
        iterations: cfg.inner_iterations,
        capped: norm(&g) > cfg.grad_tol,
    }
}

/// Quadratic-penalty outer loop around [`lbfgs`]. The returned `u0` lies in
/// the hard input box.
pub fn solve(problem: &Problem, warm: &[f64]) -> Result<(Vec<f64>, SolveReport)> {
    let start = Instant::now();
    let layout = problem.layout();
    if warm.len() != layout.len() {
        return Err(Error::Dimension(format!(
            "warm start has {} entries, decision needs {}",
            warm.len(),
            layout.len()
        )));
    }
    let cfg = problem.config();
    let mut d = warm.to_vec();
    let mut ro = problem.rollout(&d);
    if !ro.objective(cfg.penalty_initial).is_finite() {
        // clamp the warm start's u0 and drop feedback before giving up
        d[..3].iter_mut().for_each(|v| *v = v.clamp(-1.0, 1.0));
        for i in 1..layout.horizon {
            let s = layout.block_start(i);
            d[s + 3..s + layout.block_len()].iter_mut().for_each(|v| *v = 0.0);
        }
        ro = problem.rollout(&d);
        if !ro.objective(cfg.penalty_initial).is_finite() {
            return Err(Error::NonFinite("rollout of the warm start".into()));
        }
    }
    let mut weight = cfg.penalty_initial;
    let mut trace = vec![ro.objective(weight)];
    let mut iterations = 0;
    let mut capped = false;
    for outer in 0..cfg.outer_iterations {
        if outer > 0 {
            weight *= cfg.penalty_growth;
            trace.push(ro.objective(weight));
        }
        let inner = lbfgs(problem, &mut d, &mut ro, weight, &mut trace);
        iterations += inner.iterations;
        capped = inner.capped;
        if ro.max_violation() <= cfg.violation_tol {
            break;
        }
    }
    d[..3].iter_mut().for_each(|v| *v = v.clamp(-1.0, 1.0));
    let ro = problem.rollout(&d);
    let max_violation = ro.max_violation();
    let mut fl = 0;
    if capped {
        fl |= flags::ITERATION_CAP;
    }
    if max_violation > cfg.violation_tol {
        fl |= flags::VIOLATION;
    }
    Ok((
        d,
        SolveReport {
            objective_trace: trace,
            objective: ro.objective(weight),
            max_violation,
            iterations,
            penalty_weight: weight,
            flags: fl,
            wall_ms: start.elapsed().as_secs_f64() * 1e3,
        },
    ))
}
