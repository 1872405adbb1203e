//! Flat `section.key = value` configuration shared by every subcommand.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use crate::engine::{EnginePlant, ExcitationPolicy, ReferenceProfile};
use crate::error::{Error, Result};
use crate::genmodel::{FitOptions, TrainConfig};
use crate::pce::DensityWeighting;
use crate::smpc::{SmpcConfig, VariantTag};

/// Dataset generation and train/test split.
#[derive(Debug, Clone, PartialEq)]
pub struct DataSettings {
    pub records: usize,
    pub test_records: usize,
    pub seed: u64,
    pub policy: ExcitationPolicy,
}

impl Default for DataSettings {
    fn default() -> Self {
        Self {
            records: 50_000,
            test_records: 10_000,
            seed: 1,
            policy: ExcitationPolicy::default(),
        }
    }
}

/// File locations. None of them has a default; subcommands ask for the ones
/// they need through [`RunConfig::require`].
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Paths {
    pub dataset: Option<PathBuf>,
    pub model: Option<PathBuf>,
    pub pce: Option<PathBuf>,
    pub fit_report: Option<PathBuf>,
    pub out_dir: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub controllers: Vec<VariantTag>,
    pub runs: usize,
    pub cycles: usize,
    pub seed: u64,
    pub plot: bool,
    pub plant: EnginePlant,
    pub profile: ReferenceProfile,
    pub smpc: SmpcConfig,
    pub data: DataSettings,
    pub train: TrainConfig,
    pub fit: FitOptions,
    pub paths: Paths,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            controllers: VariantTag::ALL.to_vec(),
            runs: 50,
            cycles: 120,
            seed: 2024,
            plot: false,
            plant: EnginePlant::default(),
            profile: ReferenceProfile::default(),
            smpc: SmpcConfig::default(),
            data: DataSettings::default(),
            train: TrainConfig::default(),
            fit: FitOptions::default(),
            paths: Paths::default(),
        }
    }
}

trait Value: Sized {
    fn parse(s: &str) -> std::result::Result<Self, String>;
    fn show(&self) -> String;
}

macro_rules! plain_value {
    ($($t:ty),*) => {$(
        impl Value for $t {
            fn parse(s: &str) -> std::result::Result<Self, String> {
                s.parse::<$t>().map_err(|e| e.to_string())
            }
            fn show(&self) -> String {
                self.to_string()
            }
        }
    )*};
}
plain_value!(f64, usize, u64, bool);

fn list<T: Value>(s: &str) -> std::result::Result<Vec<T>, String> {
    s.split(',').map(|t| T::parse(t.trim())).collect()
}

fn show_list<T: Value>(v: &[T]) -> String {
    v.iter().map(Value::show).collect::<Vec<_>>().join(", ")
}

impl Value for Vec<f64> {
    fn parse(s: &str) -> std::result::Result<Self, String> {
        list(s)
    }
    fn show(&self) -> String {
        show_list(self)
    }
}

impl Value for Vec<usize> {
    fn parse(s: &str) -> std::result::Result<Self, String> {
        list(s)
    }
    fn show(&self) -> String {
        show_list(self)
    }
}

impl Value for [f64; 3] {
    fn parse(s: &str) -> std::result::Result<Self, String> {
        let v: Vec<f64> = list(s)?;
        v.try_into()
            .map_err(|v: Vec<f64>| format!("expected 3 values, found {}", v.len()))
    }
    fn show(&self) -> String {
        show_list(self)
    }
}

impl Value for Option<[[f64; 3]; 3]> {
    fn parse(s: &str) -> std::result::Result<Self, String> {
        if s == "none" {
            return Ok(None);
        }
        let v: Vec<f64> = list(s)?;
        if v.len() != 9 {
            return Err(format!("expected `none` or 9 row-major values, found {}", v.len()));
        }
        Ok(Some([[v[0], v[1], v[2]], [v[3], v[4], v[5]], [v[6], v[7], v[8]]]))
    }
    fn show(&self) -> String {
        match self {
            None => "none".into(),
            Some(m) => show_list(&m.concat()),
        }
    }
}

impl Value for Option<PathBuf> {
    fn parse(s: &str) -> std::result::Result<Self, String> {
        Ok(if s.is_empty() { None } else { Some(PathBuf::from(s)) })
    }
    fn show(&self) -> String {
        self.as_ref().map(|p| p.display().to_string()).unwrap_or_default()
    }
}

impl Value for Vec<VariantTag> {
    fn parse(s: &str) -> std::result::Result<Self, String> {
        let v = s
            .split(',')
            .map(|t| t.trim().parse::<VariantTag>().map_err(|e| e.to_string()))
            .collect::<std::result::Result<Vec<_>, _>>()?;
        if v.is_empty() {
            return Err("at least one controller is needed".into());
        }
        Ok(v)
    }
    fn show(&self) -> String {
        self.iter().map(|t| t.as_str()).collect::<Vec<_>>().join(", ")
    }
}

impl Value for DensityWeighting {
    fn parse(s: &str) -> std::result::Result<Self, String> {
        match s {
            "squared" => Ok(DensityWeighting::Squared),
            "linear" => Ok(DensityWeighting::Linear),
            "uniform" => Ok(DensityWeighting::Uniform),
            _ => Err(format!("`{s}` is not one of squared, linear, uniform")),
        }
    }
    fn show(&self) -> String {
        match self {
            DensityWeighting::Squared => "squared",
            DensityWeighting::Linear => "linear",
            DensityWeighting::Uniform => "uniform",
        }
        .into()
    }
}

/// One configuration key with its documentation.
pub struct Key {
    pub name: &'static str,
    pub help: &'static str,
    get: fn(&RunConfig) -> String,
    set: fn(&mut RunConfig, &str) -> std::result::Result<(), String>,
}

macro_rules! key {
    ($name:literal, $help:literal, $($field:ident).+) => {
        Key {
            name: $name,
            help: $help,
            get: |c| Value::show(&c.$($field).+),
            set: |c, s| {
                c.$($field).+ = Value::parse(s)?;
                Ok(())
            },
        }
    };
}

/// Every accepted key, in documentation order.
pub static KEYS: &[Key] = &[
    key!(
        "run.controllers",
        "comma-separated controllers: nominal, gaussian, pc, gem",
        controllers
    ),
    key!("run.runs", "Monte Carlo runs per controller", runs),
    key!("run.cycles", "engine cycles per run", cycles),
    key!("run.seed", "base seed of the closed-loop residual streams", seed),
    key!(
        "run.plot",
        "write an SVG of mean and spread bands after simulating",
        plot
    ),
    key!(
        "paths.dataset",
        "dataset CSV (written by gen-data, read by train, eval-model and the gaussian controller)",
        paths.dataset
    ),
    key!("paths.model", "residual model file (.wae.json)", paths.model),
    key!(
        "paths.pce",
        "projection bundle; built in memory from the pce_* keys when empty",
        paths.pce
    ),
    key!(
        "paths.fit_report",
        "fit report JSON written by eval-model",
        paths.fit_report
    ),
    key!(
        "paths.out_dir",
        "directory for trajectories, metrics and plots",
        paths.out_dir
    ),
    key!(
        "plant.residual",
        "draw the ground-truth residual in the plant",
        plant.residual_enabled
    ),
    key!("data.records", "dataset records (train plus test)", data.records),
    key!(
        "data.test_records",
        "records held out for testing, taken from the end",
        data.test_records
    ),
    key!("data.seed", "dataset seed", data.seed),
    key!(
        "data.filter",
        "low-pass coefficient of the excitation inputs",
        data.policy.filter
    ),
    key!(
        "data.redraw_prob",
        "per-cycle probability of a new excitation target",
        data.policy.redraw_prob
    ),
    key!("train.batch_size", "training batch size", train.batch_size),
    key!("train.epochs", "training epochs", train.epochs),
    key!("train.lambda", "weight of the latent MMD penalty", train.lambda),
    key!("train.learning_rate", "initial Adam step", train.learning_rate),
    key!(
        "train.final_learning_rate",
        "Adam step at the last batch (cosine decay)",
        train.final_learning_rate
    ),
    key!(
        "train.bandwidth",
        "kernel bandwidth of the latent MMD penalty",
        train.bandwidth
    ),
    key!(
        "train.hidden",
        "hidden layer widths of encoder and decoder",
        train.hidden
    ),
    key!(
        "train.standardize",
        "scale residuals by their training std inside the model",
        train.standardize
    ),
    key!("train.seed", "training seed", train.seed),
    key!("fit.bandwidth", "kernel bandwidth of the fit statistics", fit.bandwidth),
    key!(
        "fit.permutations",
        "permutations for the null quantiles (0 skips them)",
        fit.permutations
    ),
    key!(
        "fit.samples_per_slice",
        "generated samples per state slice",
        fit.samples_per_slice
    ),
    key!(
        "fit.slice_radius",
        "normalized radius for test records near a slice",
        fit.slice_radius
    ),
    key!("fit.seed", "seed of the fit evaluation", fit.seed),
    key!("profile.ca50", "CA50 setpoint [deg CA]", profile.ca50),
    key!(
        "profile.imep_levels",
        "IMEP reference per phase [bar]",
        profile.imep_levels
    ),
    key!("profile.phase_len", "cycles per reference phase", profile.phase_len),
    key!("smpc.horizon", "prediction horizon", smpc.horizon),
    key!("smpc.eps_state", "state chance-constraint level", smpc.eps_state),
    key!("smpc.eps_input", "input chance-constraint level", smpc.eps_input),
    key!("smpc.q", "state weights (ca50, imep, dpmax)", smpc.q_diag),
    key!("smpc.r", "input weights (nvo, fuel, eth)", smpc.r_diag),
    key!(
        "smpc.terminal",
        "terminal weight override, `none` or 9 row-major values",
        smpc.terminal_override
    ),
    key!(
        "smpc.mmd_bandwidth",
        "kernel bandwidth of the MMD objective",
        smpc.mmd_bandwidth
    ),
    key!(
        "smpc.mmd_include_constant",
        "keep the constant kernel term in the MMD objective",
        smpc.mmd_include_constant
    ),
    key!("smpc.penalty_initial", "first penalty weight", smpc.penalty_initial),
    key!(
        "smpc.penalty_growth",
        "penalty weight factor per outer round",
        smpc.penalty_growth
    ),
    key!("smpc.outer_iterations", "penalty rounds", smpc.outer_iterations),
    key!(
        "smpc.inner_iterations",
        "L-BFGS iteration cap per round",
        smpc.inner_iterations
    ),
    key!("smpc.lbfgs_memory", "L-BFGS memory", smpc.lbfgs_memory),
    key!("smpc.fd_step", "central difference step", smpc.fd_step),
    key!("smpc.grad_tol", "gradient-norm stop", smpc.grad_tol),
    key!("smpc.step_tol", "step-norm stop", smpc.step_tol),
    key!("smpc.f_tol", "objective-decrease stop", smpc.f_tol),
    key!(
        "smpc.jitter",
        "diagonal jitter before the covariance Cholesky",
        smpc.jitter
    ),
    key!(
        "smpc.violation_tol",
        "largest violation returned without a flag",
        smpc.violation_tol
    ),
    key!(
        "pce_initial.samples",
        "collocation points of the first prediction step",
        smpc.pce_initial.samples
    ),
    key!(
        "pce_initial.scale",
        "density-weight scale of the first step",
        smpc.pce_initial.scale
    ),
    key!(
        "pce_initial.degree_weights",
        "regularization per total degree, first step",
        smpc.pce_initial.degree_weights
    ),
    key!(
        "pce_initial.seed",
        "collocation seed of the first step",
        smpc.pce_initial.seed
    ),
    key!(
        "pce_initial.weighting",
        "density weighting: squared, linear or uniform",
        smpc.pce_initial.weighting
    ),
    key!(
        "pce_later.samples",
        "collocation points of later steps",
        smpc.pce_later.samples
    ),
    key!(
        "pce_later.scale",
        "density-weight scale of later steps",
        smpc.pce_later.scale
    ),
    key!(
        "pce_later.degree_weights",
        "regularization per total degree, later steps",
        smpc.pce_later.degree_weights
    ),
    key!(
        "pce_later.seed",
        "collocation base seed of later steps (step i uses seed + i)",
        smpc.pce_later.seed
    ),
    key!(
        "pce_later.weighting",
        "density weighting: squared, linear or uniform",
        smpc.pce_later.weighting
    ),
    key!("drift.ca50_center", "CA50 drift center", plant.drift.ca50_center),
    key!("drift.ca50_span", "CA50 saturation half-range", plant.drift.ca50_span),
    key!(
        "drift.ca50_carry",
        "CA50 carry-over coefficient",
        plant.drift.ca50_carry
    ),
    key!("drift.ca50_nvo", "CA50 sensitivity to NVO", plant.drift.ca50_nvo),
    key!("drift.ca50_fuel", "CA50 sensitivity to fuel", plant.drift.ca50_fuel),
    key!("drift.ca50_eth", "CA50 sensitivity to ethanol", plant.drift.ca50_eth),
    key!(
        "drift.ca50_nvo_cross",
        "CA50 carry-over times NVO coefficient",
        plant.drift.ca50_nvo_cross
    ),
    key!("drift.imep_center", "IMEP drift center", plant.drift.imep_center),
    key!("drift.imep_span", "IMEP saturation half-range", plant.drift.imep_span),
    key!(
        "drift.imep_carry",
        "IMEP carry-over coefficient",
        plant.drift.imep_carry
    ),
    key!("drift.imep_fuel", "IMEP sensitivity to fuel", plant.drift.imep_fuel),
    key!("drift.imep_eth", "IMEP sensitivity to ethanol", plant.drift.imep_eth),
    key!(
        "drift.imep_phasing_loss",
        "IMEP loss per squared CA50 offset",
        plant.drift.imep_phasing_loss
    ),
    key!("drift.dpmax_base", "DPmax at the center point", plant.drift.dpmax_base),
    key!("drift.dpmax_imep", "DPmax slope in IMEP", plant.drift.dpmax_imep),
    key!(
        "drift.dpmax_ca50",
        "DPmax slope in CA50 (subtracted)",
        plant.drift.dpmax_ca50
    ),
    key!(
        "residual.ca50_base",
        "CA50 residual scale floor",
        plant.residual.ca50_base
    ),
    key!(
        "residual.ca50_late_gain",
        "extra CA50 scale at late phasing",
        plant.residual.ca50_late_gain
    ),
    key!(
        "residual.late_center",
        "late-phasing logistic center [deg CA]",
        plant.residual.late_center
    ),
    key!(
        "residual.late_width",
        "late-phasing logistic width",
        plant.residual.late_width
    ),
    key!(
        "residual.ca50_low_load_gain",
        "extra CA50 scale at low load",
        plant.residual.ca50_low_load_gain
    ),
    key!(
        "residual.low_load_center",
        "low-load logistic center [bar]",
        plant.residual.low_load_center
    ),
    key!(
        "residual.low_load_width",
        "low-load logistic width",
        plant.residual.low_load_width
    ),
    key!(
        "residual.skew_gain",
        "largest skew of the CA50 residual",
        plant.residual.skew_gain
    ),
    key!(
        "residual.skew_center",
        "skew logistic center [deg CA]",
        plant.residual.skew_center
    ),
    key!("residual.skew_width", "skew logistic width", plant.residual.skew_width),
    key!(
        "residual.imep_base",
        "IMEP residual scale floor",
        plant.residual.imep_base
    ),
    key!(
        "residual.imep_late_gain",
        "extra IMEP scale at late phasing",
        plant.residual.imep_late_gain
    ),
    key!(
        "residual.correlation",
        "CA50-IMEP residual correlation",
        plant.residual.correlation
    ),
];

fn find(name: &str) -> Result<&'static Key> {
    KEYS.iter()
        .find(|k| k.name == name)
        .ok_or_else(|| Error::UnknownKey(name.to_string()))
}

/// Parses `key = value` lines. Blank lines and `#` comments are skipped.
pub fn parse_pairs(text: &str, origin: &Path) -> Result<Vec<(String, String)>> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| Error::parse(origin, format!("line {}: expected `key = value`", i + 1)))?;
        out.push((k.trim().to_string(), v.trim().to_string()));
    }
    Ok(out)
}

impl RunConfig {
    /// Applies one key. Later assignments win.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let k = find(key)?;
        (k.set)(self, value).map_err(|e| Error::Config(format!("{key}: {e}")))
    }

    pub fn get(&self, key: &str) -> Result<String> {
        Ok((find(key)?.get)(self))
    }

    /// Applies a `key=value` override as given on the command line.
    pub fn set_override(&mut self, assignment: &str) -> Result<()> {
        let (k, v) = assignment
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("override `{assignment}` is not key=value")))?;
        self.set(k.trim(), v.trim())
    }

    pub fn apply_text(&mut self, text: &str, origin: &Path) -> Result<()> {
        for (k, v) in parse_pairs(text, origin)? {
            self.set(&k, &v).map_err(|e| match e {
                Error::UnknownKey(_) | Error::Config(_) => Error::parse(origin, e.to_string()),
                other => other,
            })?;
        }
        Ok(())
    }

    /// Defaults overlaid with a configuration file.
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut c = Self::default();
        c.apply_text(&text, path)?;
        Ok(c)
    }

    /// Every key with its current value, in the file format.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        for k in KEYS {
            let _ = writeln!(s, "{} = {}", k.name, (k.get)(self));
        }
        s
    }

    pub fn require<'a>(&self, value: &'a Option<PathBuf>, key: &str) -> Result<&'a Path> {
        value.as_deref().ok_or_else(|| Error::MissingKey(key.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        if self.runs == 0 {
            return Err(Error::Config("run.runs must be at least 1".into()));
        }
        if self.cycles == 0 {
            return Err(Error::Config("run.cycles must be at least 1".into()));
        }
        if self.profile.imep_levels.is_empty() || self.profile.phase_len == 0 {
            return Err(Error::Config(
                "profile needs at least one level and phase_len >= 1".into(),
            ));
        }
        if self.data.test_records >= self.data.records {
            return Err(Error::Config("data.test_records must be below data.records".into()));
        }
        self.smpc.validate()?;
        self.train.validate()
    }
}

/// Help text listing every key with its default.
pub fn keys_help() -> String {
    let d = RunConfig::default();
    let width = KEYS.iter().map(|k| k.name.len()).max().unwrap_or(0);
    let mut s = String::from("Configuration keys (file lines `key = value`, or --set key=value):\n");
    for k in KEYS {
        let v = (k.get)(&d);
        let shown = if v.is_empty() { "(unset)".to_string() } else { v };
        let _ = writeln!(s, "  {:width$}  {} [default: {}]", k.name, k.help, shown);
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn keys_are_unique_and_one_dot_deep() {
        let mut names: Vec<&str> = KEYS.iter().map(|k| k.name).collect();
        assert!(names.iter().all(|n| n.matches('.').count() == 1));
        names.sort_unstable();
        names.dedup();
        assert_eq!(names.len(), KEYS.len());
    }

    #[test]
    fn text_round_trip_reproduces_the_config() {
        let mut c = RunConfig::default();
        c.set("smpc.q", "1, 2, 3").unwrap();
        c.set("paths.model", "/tmp/m.wae.json").unwrap();
        c.set("smpc.terminal", "1,0,0,0,1,0,0,0,1").unwrap();
        c.set("run.controllers", "gem, pc").unwrap();
        let mut back = RunConfig::default();
        back.apply_text(&c.to_text(), Path::new("x")).unwrap();
        assert_eq!(back, c);
    }

    #[test]
    fn every_default_survives_show_then_parse() {
        let d = RunConfig::default();
        for k in KEYS {
            let mut c = RunConfig::default();
            c.set(k.name, &(k.get)(&d)).unwrap();
            assert_eq!(c, d, "{}", k.name);
        }
    }

    #[test]
    fn unknown_and_malformed_input_is_rejected() {
        let mut c = RunConfig::default();
        assert!(matches!(c.set("smpc.nope", "1"), Err(Error::UnknownKey(_))));
        assert!(matches!(c.set("smpc.horizon", "x"), Err(Error::Config(_))));
        assert!(matches!(c.set("smpc.q", "1,2"), Err(Error::Config(_))));
        assert!(c.apply_text("just words\n", Path::new("f")).is_err());
        assert!(c.set_override("run.runs").is_err());
        c.apply_text("# comment\n\nrun.runs = 3 # trailing\n", Path::new("f"))
            .unwrap();
        assert_eq!(c.runs, 3);
    }

    #[test]
    fn missing_path_names_the_key() {
        let c = RunConfig::default();
        let e = c.require(&c.paths.model, "paths.model").unwrap_err();
        assert!(e.to_string().contains("paths.model"));
    }

    #[test]
    fn help_lists_every_key() {
        let h = keys_help();
        for k in KEYS {
            assert!(h.contains(k.name));
        }
    }
}
