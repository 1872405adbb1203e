use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{ControlInput, EnginePlant, EngineState, Normalizer, INPUT_BOX};
use crate::error::{Error, Result};
use crate::rng::{self, Stream};

pub const DATASET_HEADER: &str = "ca50_n,imep_n,dpmax_n,r_ca50_n,r_imep_n";
const FORMAT_VERSION: u32 = 1;

/// One `(state, residual)` pair, both normalized.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DatasetRecord {
    pub state: [f64; 3],
    pub residual: [f64; 2],
}

/// Random input excitation for data collection.
///
/// Each actuator holds a uniform target from its box and redraws it with
/// probability `redraw_prob` per cycle; the applied input follows the target
/// through a first-order filter `u+ = a u + (1 - a) target`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExcitationPolicy {
    pub filter: f64,
    pub redraw_prob: f64,
}

impl Default for ExcitationPolicy {
    fn default() -> Self {
        Self {
            filter: 0.7,
            redraw_prob: 0.2,
        }
    }
}

/// Simulates the plant under [`ExcitationPolicy`] and records `n` pairs.
pub fn generate_dataset(
    plant: &EnginePlant,
    n: usize,
    policy: &ExcitationPolicy,
    seed: u64,
) -> Result<Vec<DatasetRecord>> {
    simulate_excitation(plant, n, policy, seed).map(|(records, _)| records)
}

/// Dataset plus the applied (physical) inputs, one per record.
fn simulate_excitation(
    plant: &EnginePlant,
    n: usize,
    policy: &ExcitationPolicy,
    seed: u64,
) -> Result<(Vec<DatasetRecord>, Vec<[f64; 3]>)> {
    let mut rng = rng::stream(seed, rng::ids::DATASET);
    let draw = |rng: &mut Stream| -> [f64; 3] {
        std::array::from_fn(|i| INPUT_BOX[i].lo + (INPUT_BOX[i].hi - INPUT_BOX[i].lo) * rng.random::<f64>())
    };
    let mut target = draw(&mut rng);
    let mut u = target;
    let mut x = EngineState::new(7.0, 3.0, plant.drift.dpmax(7.0, 3.0));
    let norm = Normalizer;
    let mut out = Vec::with_capacity(n);
    let mut inputs = Vec::with_capacity(n);
    for _ in 0..n {
        for (i, t) in target.iter_mut().enumerate() {
            if rng.random::<f64>() < policy.redraw_prob {
                *t = INPUT_BOX[i].lo + (INPUT_BOX[i].hi - INPUT_BOX[i].lo) * rng.random::<f64>();
            }
        }
        for i in 0..3 {
            u[i] = policy.filter * u[i] + (1.0 - policy.filter) * target[i];
        }
        inputs.push(u);
        let input = ControlInput::from_array(u);
        let r = plant.residual_sample(&x, &mut rng);
        out.push(DatasetRecord {
            state: norm.state(&x),
            residual: norm.residual(&r),
        });
        x = plant.drift.advance(&x, &input, r);
        if !x.is_finite() {
            return Err(Error::NonFinite(format!("dataset state {x:?}")));
        }
    }
    Ok((out, inputs))
}

/// Sidecar metadata echoed next to a dataset file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetMeta {
    pub format_version: u32,
    pub seed: u64,
    pub records: usize,
    pub plant: EnginePlant,
    pub policy: ExcitationPolicy,
}

impl DatasetMeta {
    pub fn new(seed: u64, records: usize, plant: &EnginePlant, policy: &ExcitationPolicy) -> Self {
        Self {
            format_version: FORMAT_VERSION,
            seed,
            records,
            plant: plant.clone(),
            policy: policy.clone(),
        }
    }

    pub fn sidecar_path(csv: &Path) -> PathBuf {
        let mut s = csv.as_os_str().to_owned();
        s.push(".meta.json");
        PathBuf::from(s)
    }
}

/// Writes the CSV (9 significant digits) and, when given, the JSON sidecar.
pub fn write_dataset_csv(path: &Path, data: &[DatasetRecord], meta: Option<&DatasetMeta>) -> Result<()> {
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let io = |e| Error::io(path, e);
    writeln!(w, "{DATASET_HEADER}").map_err(io)?;
    for r in data {
        writeln!(
            w,
            "{:.8e},{:.8e},{:.8e},{:.8e},{:.8e}",
            r.state[0], r.state[1], r.state[2], r.residual[0], r.residual[1]
        )
        .map_err(io)?;
    }
    w.flush().map_err(io)?;
    if let Some(meta) = meta {
        let side = DatasetMeta::sidecar_path(path);
        let text = serde_json::to_string_pretty(meta).expect("metadata serializes");
        fs::write(&side, text).map_err(|e| Error::io(&side, e))?;
    }
    Ok(())
}

pub fn read_dataset_csv(path: &Path) -> Result<Vec<DatasetRecord>> {
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut lines = BufReader::new(file).lines();
    let header = lines
        .next()
        .ok_or_else(|| Error::parse(path, "empty file"))?
        .map_err(|e| Error::io(path, e))?;
    if header.trim() != DATASET_HEADER {
        return Err(Error::parse(path, format!("unexpected header `{header}`")));
    }
    let mut out = Vec::new();
    for (lineno, line) in lines.enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let vals: Vec<f64> = line
            .split(',')
            .map(|t| t.trim().parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| Error::parse(path, format!("line {}: {e}", lineno + 2)))?;
        if vals.len() != 5 {
            return Err(Error::parse(path, format!("line {}: expected 5 fields", lineno + 2)));
        }
        out.push(DatasetRecord {
            state: [vals[0], vals[1], vals[2]],
            residual: [vals[3], vals[4]],
        });
    }
    Ok(out)
}
