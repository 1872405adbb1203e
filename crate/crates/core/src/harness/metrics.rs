use serde::{Deserialize, Serialize};

use super::closed_loop::TrajectoryRow;
use crate::error::{Error, Result};

pub const CA50_HIGH: f64 = 13.0;
pub const CA50_LOW: f64 = 2.0;

/// Summary statistics of one group of rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsBlock {
    pub samples: usize,
    /// Population variance of all CA50 samples.
    pub ca50_variance: f64,
    /// Fraction of samples with CA50 >= 13.
    pub ratio_ca50_high: f64,
    /// Fraction of samples with CA50 <= 2.
    pub ratio_ca50_low: f64,
    /// RMSE of the per-cycle cross-run mean CA50 against the reference.
    pub rmse_ca50: f64,
    /// RMSE of the per-cycle cross-run mean IMEP against the reference.
    pub rmse_imep: f64,
    /// Per-run RMSE against the reference, averaged over runs.
    pub rmse_ca50_per_run: f64,
    pub rmse_imep_per_run: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverStats {
    pub solves: usize,
    pub degraded: usize,
    pub mean_solve_ms: f64,
    pub max_solve_ms: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub runs: usize,
    pub cycles: usize,
    pub overall: MetricsBlock,
    /// One block per reference phase, in phase order.
    pub phases: Vec<MetricsBlock>,
    /// Wall-clock figures; not reproducible across executions.
    pub solver: SolverStats,
}

fn block(rows: &[&TrajectoryRow], runs: usize) -> MetricsBlock {
    let n = rows.len() as f64;
    // two-pass variance
    let mean = rows.iter().map(|r| r.state.ca50).sum::<f64>() / n;
    let var = rows.iter().map(|r| (r.state.ca50 - mean).powi(2)).sum::<f64>() / n;
    let high = rows.iter().filter(|r| r.state.ca50 >= CA50_HIGH).count() as f64 / n;
    let low = rows.iter().filter(|r| r.state.ca50 <= CA50_LOW).count() as f64 / n;

    let mut cycles: Vec<usize> = rows.iter().map(|r| r.cycle).collect();
    cycles.sort_unstable();
    cycles.dedup();
    let mut se_c = 0.0;
    let mut se_i = 0.0;
    for &c in &cycles {
        let at: Vec<&&TrajectoryRow> = rows.iter().filter(|r| r.cycle == c).collect();
        let m = at.len() as f64;
        let mc = at.iter().map(|r| r.state.ca50).sum::<f64>() / m;
        let mi = at.iter().map(|r| r.state.imep).sum::<f64>() / m;
        se_c += (mc - at[0].ca50_ref).powi(2);
        se_i += (mi - at[0].imep_ref).powi(2);
    }
    let nc = cycles.len() as f64;

    let mut run_c = 0.0;
    let mut run_i = 0.0;
    let mut run_count = 0;
    for run in 0..runs {
        let mine: Vec<&&TrajectoryRow> = rows.iter().filter(|r| r.run == run).collect();
        if mine.is_empty() {
            continue;
        }
        let k = mine.len() as f64;
        run_c += (mine.iter().map(|r| (r.state.ca50 - r.ca50_ref).powi(2)).sum::<f64>() / k).sqrt();
        run_i += (mine.iter().map(|r| (r.state.imep - r.imep_ref).powi(2)).sum::<f64>() / k).sqrt();
        run_count += 1;
    }
    MetricsBlock {
        samples: rows.len(),
        ca50_variance: var,
        ratio_ca50_high: high,
        ratio_ca50_low: low,
        rmse_ca50: (se_c / nc).sqrt(),
        rmse_imep: (se_i / nc).sqrt(),
        rmse_ca50_per_run: run_c / run_count as f64,
        rmse_imep_per_run: run_i / run_count as f64,
    }
}

/// Metrics over a study log. `phase_of` maps a cycle to its reference phase.
pub fn compute_metrics(rows: &[TrajectoryRow], phase_of: impl Fn(usize) -> usize) -> Result<MetricsReport> {
    if rows.is_empty() {
        return Err(Error::InvalidArgument(
            "metrics need at least one trajectory row".into(),
        ));
    }
    // fixed summation order, whatever order the runs arrived in
    let mut sorted = rows.to_vec();
    sorted.sort_by_key(|r| (r.run, r.cycle));
    let rows = &sorted[..];
    let runs = rows.iter().map(|r| r.run).max().unwrap_or(0) + 1;
    let cycles = rows.iter().map(|r| r.cycle).max().unwrap_or(0) + 1;
    let all: Vec<&TrajectoryRow> = rows.iter().collect();
    let phase_count = (0..cycles).map(&phase_of).max().unwrap_or(0) + 1;
    let phases = (0..phase_count)
        .filter_map(|p| {
            let sel: Vec<&TrajectoryRow> = rows.iter().filter(|r| phase_of(r.cycle) == p).collect();
            (!sel.is_empty()).then(|| block(&sel, runs))
        })
        .collect();
    let ms: Vec<f64> = rows.iter().map(|r| r.solve_ms).collect();
    Ok(MetricsReport {
        runs,
        cycles,
        overall: block(&all, runs),
        phases,
        solver: SolverStats {
            solves: rows.len(),
            degraded: rows.iter().filter(|r| r.solver_flag != 0).count(),
            mean_solve_ms: ms.iter().sum::<f64>() / ms.len() as f64,
            max_solve_ms: ms.iter().cloned().fold(0.0, f64::max),
        },
    })
}
