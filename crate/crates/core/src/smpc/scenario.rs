use crate::error::{Error, Result};
use crate::pce::{
    build_projection, build_projection_woodbury, MultiIndexSet, PceConfig, PceProjection, ProjectionBundle,
    StoredProjection,
};

/// Frozen collocation design of one prediction step in the layout the
/// rollout consumes.
#[derive(Debug, Clone)]
pub struct StepDesign {
    /// State germ `xi` per point (zero at the first step).
    pub xi: Vec<[f64; 3]>,
    /// Residual germ `w` per point.
    pub w: Vec<[f64; 2]>,
    /// Projection operator, `terms x points`, row-major.
    pub operator: Vec<f64>,
    pub terms: usize,
}

impl StepDesign {
    fn from_projection(p: &PceProjection, has_xi: bool) -> Self {
        let pts = p.points();
        let n = pts.nrows();
        let (xi, w) = if has_xi {
            (
                (0..n).map(|j| [pts[(j, 0)], pts[(j, 1)], pts[(j, 2)]]).collect(),
                (0..n).map(|j| [pts[(j, 3)], pts[(j, 4)]]).collect(),
            )
        } else {
            (vec![[0.0; 3]; n], (0..n).map(|j| [pts[(j, 0)], pts[(j, 1)]]).collect())
        };
        let a = p.operator();
        let operator = (0..a.nrows()).flat_map(|r| (0..n).map(move |c| a[(r, c)])).collect();
        Self {
            xi,
            w,
            operator,
            terms: a.nrows(),
        }
    }

    pub fn points(&self) -> usize {
        self.w.len()
    }

    /// First operator row: samples to expectation.
    pub fn mean_row(&self) -> &[f64] {
        &self.operator[..self.points()]
    }
}

/// Collocation designs and projections for every prediction step: the first
/// step propagates only the residual germ `w` (2-D); later steps propagate the
/// joint germ `(xi, w)` (3 + 2 = 5-D).
#[derive(Debug, Clone)]
pub struct ScenarioSet {
    pub initial: PceProjection,
    pub later: Vec<PceProjection>,
    pub initial_config: PceConfig,
    pub later_configs: Vec<PceConfig>,
    designs: Vec<StepDesign>,
}

fn degree_of(cfg: &PceConfig) -> Result<usize> {
    if cfg.degree_weights.is_empty() {
        return Err(Error::Config("PCE degree weights are empty".into()));
    }
    Ok(cfg.degree_weights.len() - 1)
}

fn build(set: &MultiIndexSet, cfg: &PceConfig) -> Result<PceProjection> {
    if cfg.degree_weights.iter().all(|w| *w > 0.0) {
        build_projection_woodbury(set, cfg)
    } else {
        build_projection(set, cfg)
    }
}

impl ScenarioSet {
    /// Builds all projections. Step `i >= 1` uses `later.seed + i` so every
    /// step has its own frozen draw.
    pub fn build(horizon: usize, initial: &PceConfig, later: &PceConfig) -> Result<Self> {
        if horizon == 0 {
            return Err(Error::Config("horizon must be at least 1".into()));
        }
        let p0 = build(&MultiIndexSet::new(2, degree_of(initial)?), initial)?;
        let set = MultiIndexSet::new(5, degree_of(later)?);
        let mut projs = Vec::new();
        let mut cfgs = Vec::new();
        for i in 1..horizon {
            let cfg = PceConfig {
                seed: later.seed + i as u64,
                ..later.clone()
            };
            projs.push(build(&set, &cfg)?);
            cfgs.push(cfg);
        }
        Ok(Self::assemble(p0, initial.clone(), projs, cfgs))
    }

    fn assemble(
        initial: PceProjection,
        initial_config: PceConfig,
        later: Vec<PceProjection>,
        later_configs: Vec<PceConfig>,
    ) -> Self {
        let mut designs = vec![StepDesign::from_projection(&initial, false)];
        designs.extend(later.iter().map(|p| StepDesign::from_projection(p, true)));
        Self {
            initial,
            later,
            initial_config,
            later_configs,
            designs,
        }
    }

    pub fn horizon(&self) -> usize {
        self.later.len() + 1
    }

    pub fn design(&self, step: usize) -> &StepDesign {
        &self.designs[step]
    }

    pub fn to_bundle(&self) -> ProjectionBundle {
        let mut steps = vec![StoredProjection::new(&self.initial, &self.initial_config)];
        for (p, c) in self.later.iter().zip(&self.later_configs) {
            steps.push(StoredProjection::new(p, c));
        }
        ProjectionBundle::new(steps)
    }

    pub fn from_bundle(b: &ProjectionBundle) -> Result<Self> {
        let mut it = b.steps.iter();
        let first = it
            .next()
            .ok_or_else(|| Error::Config("projection bundle has no steps".into()))?;
        let initial = first.load()?;
        if initial.set().dim() != 2 {
            return Err(Error::Config("first bundle step must have a 2-D germ".into()));
        }
        let mut later = Vec::new();
        let mut cfgs = Vec::new();
        for s in it {
            let p = s.load()?;
            if p.set().dim() != 5 {
                return Err(Error::Config("later bundle steps must have a 5-D germ".into()));
            }
            later.push(p);
            cfgs.push(s.config.clone());
        }
        Ok(Self::assemble(initial, first.config.clone(), later, cfgs))
    }
}
