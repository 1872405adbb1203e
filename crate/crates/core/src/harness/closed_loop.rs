use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::engine::{equilibrium, ControlInput, EnginePlant, EngineState, ReferenceProfile};
use crate::error::{Error, Result};
use crate::rng;
use crate::smpc::Controller;

/// One logged engine cycle: the state entering the cycle, the applied input
/// and the references in force.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryRow {
    pub run: usize,
    pub cycle: usize,
    pub state: EngineState,
    pub input: ControlInput,
    pub ca50_ref: f64,
    pub imep_ref: f64,
    pub solver_flag: u32,
    pub solve_ms: f64,
}

/// Closed-loop settings shared by every run of a study.
#[derive(Debug, Clone, PartialEq)]
pub struct LoopSettings {
    pub plant: EnginePlant,
    pub profile: ReferenceProfile,
    pub cycles: usize,
    pub seed: u64,
    /// Weights of the equilibrium used as the initial state.
    pub equilibrium_weights: [f64; 3],
}

impl LoopSettings {
    pub fn initial_state(&self) -> Result<EngineState> {
        let (c, i) = self.profile.at(0)?;
        Ok(equilibrium(&self.plant.drift, c, i, self.equilibrium_weights)?.state)
    }
}

/// Simulates one run. The residual stream depends only on the seed and the
/// run index, so every controller sees the same latent disturbance sequence.
pub fn run_closed_loop(settings: &LoopSettings, controller: &mut Controller, run: usize) -> Result<Vec<TrajectoryRow>> {
    if settings.cycles == 0 {
        return Err(Error::Config("cycles must be at least 1".into()));
    }
    let mut rng = rng::stream(settings.seed, rng::ids::CLOSED_LOOP_BASE + run as u64);
    let mut x = settings.initial_state()?;
    controller.reset();
    let mut rows = Vec::with_capacity(settings.cycles);
    for cycle in 0..settings.cycles {
        let (ca50_ref, imep_ref) = settings.profile.at(cycle as i64)?;
        let step = controller.step(&x, (ca50_ref, imep_ref))?;
        rows.push(TrajectoryRow {
            run,
            cycle,
            state: x,
            input: step.input,
            ca50_ref,
            imep_ref,
            solver_flag: step.report.flags,
            solve_ms: step.report.wall_ms,
        });
        x = settings.plant.step(&x, &step.input, &mut rng)?;
    }
    Ok(rows)
}

/// Runs `0..runs` on the rayon pool, one controller per run, and returns the
/// rows ordered by run and cycle.
pub fn monte_carlo<F>(settings: &LoopSettings, runs: usize, make_controller: F) -> Result<Vec<TrajectoryRow>>
where
    F: Fn() -> Result<Controller> + Sync,
{
    if runs == 0 {
        return Err(Error::Config("runs must be at least 1".into()));
    }
    let per_run: Vec<Vec<TrajectoryRow>> = (0..runs)
        .into_par_iter()
        .map(|run| {
            let mut c = make_controller()?;
            run_closed_loop(settings, &mut c, run)
        })
        .collect::<Result<_>>()?;
    Ok(per_run.into_iter().flatten().collect())
}
