use std::sync::Arc;

use super::closed_loop::{monte_carlo, LoopSettings, TrajectoryRow};
use super::config::RunConfig;
use super::metrics::{compute_metrics, MetricsReport};
use crate::engine::read_dataset_csv;
use crate::error::Result;
use crate::genmodel::{split_dataset, ResidualModel, WaeModel};
use crate::pce::read_bundle;
use crate::smpc::{Controller, GaussianResidual, ScenarioSet, Variant, VariantTag};

/// Models and projections shared by all controllers of a study.
#[derive(Clone)]
pub struct StudyInputs {
    pub scenarios: Option<Arc<ScenarioSet>>,
    pub model: Option<Arc<dyn ResidualModel>>,
    pub gaussian: Option<Arc<GaussianResidual>>,
}

impl StudyInputs {
    /// Loads what `controllers` need from the configured paths. The Gaussian
    /// baseline is fitted on the training part of the dataset.
    pub fn load(cfg: &RunConfig, controllers: &[VariantTag]) -> Result<Self> {
        let uses = |t: VariantTag| controllers.contains(&t);
        let learned = uses(VariantTag::Pc) || uses(VariantTag::Gem);
        let model: Option<Arc<dyn ResidualModel>> = if learned {
            let path = cfg.require(&cfg.paths.model, "paths.model")?;
            Some(Arc::new(WaeModel::load(path)?))
        } else {
            None
        };
        let scenarios = if learned {
            Some(Arc::new(match &cfg.paths.pce {
                Some(p) => ScenarioSet::from_bundle(&read_bundle(p)?)?,
                None => ScenarioSet::build(cfg.smpc.horizon, &cfg.smpc.pce_initial, &cfg.smpc.pce_later)?,
            }))
        } else {
            None
        };
        let gaussian = if uses(VariantTag::Gaussian) {
            let path = cfg.require(&cfg.paths.dataset, "paths.dataset")?;
            let data = read_dataset_csv(path)?;
            let (train, _) = split_dataset(&data, cfg.data.test_records)?;
            Some(Arc::new(GaussianResidual::fit(train)?))
        } else {
            None
        };
        Ok(Self {
            scenarios,
            model,
            gaussian,
        })
    }

    pub fn variant(&self, tag: VariantTag) -> Result<Variant> {
        let missing = |what: &str| crate::Error::Config(format!("controller '{tag}' needs {what}"));
        Ok(match tag {
            VariantTag::Nominal => Variant::Nominal,
            VariantTag::Gaussian => Variant::Gaussian(self.gaussian.clone().ok_or_else(|| missing("a Gaussian fit"))?),
            VariantTag::Pc => Variant::Pc(self.model.clone().ok_or_else(|| missing("a residual model"))?),
            VariantTag::Gem => Variant::Gem(self.model.clone().ok_or_else(|| missing("a residual model"))?),
        })
    }
}

pub fn loop_settings(cfg: &RunConfig) -> LoopSettings {
    LoopSettings {
        plant: cfg.plant.clone(),
        profile: cfg.profile.clone(),
        cycles: cfg.cycles,
        seed: cfg.seed,
        equilibrium_weights: cfg.smpc.r_diag,
    }
}

/// Runs the Monte Carlo study of one controller and scores it.
pub fn simulate(cfg: &RunConfig, tag: VariantTag, inputs: &StudyInputs) -> Result<(Vec<TrajectoryRow>, MetricsReport)> {
    cfg.validate()?;
    let settings = loop_settings(cfg);
    let variant = inputs.variant(tag)?;
    let rows = monte_carlo(&settings, cfg.runs, || {
        Controller::new(
            variant.clone(),
            cfg.smpc.clone(),
            cfg.plant.drift.clone(),
            inputs.scenarios.clone(),
        )
    })?;
    let report = compute_metrics(&rows, |c| cfg.profile.phase(c))?;
    Ok((rows, report))
}
