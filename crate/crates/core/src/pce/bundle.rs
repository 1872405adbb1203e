use std::fs;
use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::{MultiIndexSet, PceConfig, PceProjection};
use crate::error::{Error, Result};

const FORMAT_VERSION: u32 = 1;

/// Serialized projection: multi-indices, collocation points and the operator,
/// row-major. Floats are written in shortest round-trip form, so reloading
/// reproduces every bit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StoredProjection {
    pub dim: usize,
    pub degree: usize,
    pub indices: Vec<Vec<u32>>,
    pub config: PceConfig,
    pub samples: usize,
    pub points: Vec<f64>,
    pub operator: Vec<f64>,
}

/// Projections for every prediction step of the controller.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProjectionBundle {
    pub format_version: u32,
    pub steps: Vec<StoredProjection>,
}

fn row_major(m: &DMatrix<f64>) -> Vec<f64> {
    m.transpose().iter().copied().collect()
}

impl StoredProjection {
    pub fn new(proj: &PceProjection, config: &PceConfig) -> Self {
        Self {
            dim: proj.set().dim(),
            degree: proj.set().degree(),
            indices: proj.set().indices().to_vec(),
            config: config.clone(),
            samples: proj.samples(),
            points: row_major(proj.points()),
            operator: row_major(proj.operator()),
        }
    }

    pub fn load(&self) -> Result<PceProjection> {
        let set = MultiIndexSet::from_parts(self.dim, self.degree, self.indices.clone())
            .ok_or_else(|| Error::Config("stored multi-index set is not graded-lex".into()))?;
        if self.points.len() != self.samples * self.dim || self.operator.len() != set.len() * self.samples {
            return Err(Error::Dimension("stored projection array sizes".into()));
        }
        let points = DMatrix::from_row_slice(self.samples, self.dim, &self.points);
        let operator = DMatrix::from_row_slice(set.len(), self.samples, &self.operator);
        PceProjection::from_stored(set, points, operator)
    }
}

impl ProjectionBundle {
    pub fn new(steps: Vec<StoredProjection>) -> Self {
        Self {
            format_version: FORMAT_VERSION,
            steps,
        }
    }
}

pub fn write_bundle(path: &Path, bundle: &ProjectionBundle) -> Result<()> {
    let text = serde_json::to_string(bundle).expect("bundle serializes");
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn read_bundle(path: &Path) -> Result<ProjectionBundle> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let b: ProjectionBundle = serde_json::from_str(&text).map_err(|e| Error::parse(path, e.to_string()))?;
    if b.format_version != FORMAT_VERSION {
        return Err(Error::parse(
            path,
            format!("unsupported format_version {}", b.format_version),
        ));
    }
    Ok(b)
}
