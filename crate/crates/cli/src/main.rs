use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, CommandFactory, FromArgMatches, Parser, Subcommand};
use hcci_smpc::engine::{generate_dataset, read_dataset_csv, write_dataset_csv, DatasetMeta};
use hcci_smpc::genmodel::{evaluate_fit, split_dataset, wae_train, WaeModel};
use hcci_smpc::harness::{
    compute_metrics, emit_plot, keys_help, read_trajectory_csv, read_trajectory_meta, simulate, write_json,
    write_metrics_json, write_trajectory_csv, ComparisonDocument, FitDocument, MetricsDocument, RunConfig, StudyInputs,
    TrajectoryMeta,
};
use hcci_smpc::pce::write_bundle;
use hcci_smpc::smpc::{ScenarioSet, VariantTag};
use hcci_smpc::{Error, Result};

/// Stochastic MPC study driver for the surrogate HCCI engine.
#[derive(Parser, Debug)]
#[command(name = "hcci-smpc", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Simulate the excited plant and write the residual dataset (paths.dataset).
    GenData(Common),
    /// Train the residual model on the dataset and save it (paths.model).
    Train(Common),
    /// Score the trained model on the held-out records (paths.fit_report).
    EvalModel(Common),
    /// Build the collocation projections and save the bundle (paths.pce).
    PrecomputePce(Common),
    /// Run the closed-loop Monte Carlo study and write logs and metrics (paths.out_dir).
    Simulate(Common),
    /// Recompute metrics from stored logs and print the comparison (paths.out_dir).
    Report(Common),
}

#[derive(Args, Debug, Clone, Default)]
struct Common {
    /// Configuration file with `section.key = value` lines.
    #[arg(long, short = 'c')]
    config: Option<PathBuf>,
    /// Override one key, e.g. `--set smpc.horizon=4`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    /// Shorthand for run.controllers.
    #[arg(long)]
    controller: Option<String>,
    /// Shorthand for run.runs.
    #[arg(long)]
    runs: Option<String>,
    /// Shorthand for run.cycles.
    #[arg(long)]
    cycles: Option<String>,
    /// Shorthand for run.seed.
    #[arg(long)]
    seed: Option<String>,
    /// Shorthand for run.plot = true.
    #[arg(long)]
    plot: bool,
    /// Shorthand for paths.out_dir.
    #[arg(long)]
    out_dir: Option<String>,
    /// Shorthand for paths.dataset.
    #[arg(long)]
    dataset: Option<String>,
    /// Shorthand for paths.model.
    #[arg(long)]
    model: Option<String>,
    /// Shorthand for paths.pce.
    #[arg(long)]
    pce: Option<String>,
}

impl Common {
    fn load(&self) -> Result<RunConfig> {
        let mut cfg = match &self.config {
            Some(p) => RunConfig::from_file(p)?,
            None => RunConfig::default(),
        };
        let shorthands = [
            ("run.controllers", &self.controller),
            ("run.runs", &self.runs),
            ("run.cycles", &self.cycles),
            ("run.seed", &self.seed),
            ("paths.out_dir", &self.out_dir),
            ("paths.dataset", &self.dataset),
            ("paths.model", &self.model),
            ("paths.pce", &self.pce),
        ];
        for (key, value) in shorthands {
            if let Some(v) = value {
                cfg.set(key, v)?;
            }
        }
        if self.plot {
            cfg.plot = true;
        }
        for o in &self.overrides {
            cfg.set_override(o)?;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

fn gen_data(cfg: &RunConfig) -> Result<()> {
    let path = cfg.require(&cfg.paths.dataset, "paths.dataset")?;
    let data = generate_dataset(&cfg.plant, cfg.data.records, &cfg.data.policy, cfg.data.seed)?;
    let meta = DatasetMeta::new(cfg.data.seed, data.len(), &cfg.plant, &cfg.data.policy);
    write_dataset_csv(path, &data, Some(&meta))?;
    println!("wrote {} records to {}", data.len(), path.display());
    Ok(())
}

fn train(cfg: &RunConfig) -> Result<()> {
    let data_path = cfg.require(&cfg.paths.dataset, "paths.dataset")?;
    let model_path = cfg.require(&cfg.paths.model, "paths.model")?;
    let data = read_dataset_csv(data_path)?;
    let (train, _) = split_dataset(&data, cfg.data.test_records)?;
    let start = Instant::now();
    let out = wae_train(train, &cfg.train)?;
    out.model.save(model_path)?;
    let last = out.epoch_losses.last().copied().unwrap_or(f64::NAN);
    println!(
        "trained on {} records, {} epochs, final loss {last:.6e}, {:.1} s; model written to {}",
        train.len(),
        out.epoch_losses.len(),
        start.elapsed().as_secs_f64(),
        model_path.display()
    );
    Ok(())
}

fn eval_model(cfg: &RunConfig) -> Result<()> {
    let model = WaeModel::load(cfg.require(&cfg.paths.model, "paths.model")?)?;
    let data = read_dataset_csv(cfg.require(&cfg.paths.dataset, "paths.dataset")?)?;
    let out = cfg.require(&cfg.paths.fit_report, "paths.fit_report")?;
    let (_, test) = split_dataset(&data, cfg.data.test_records)?;
    let report = evaluate_fit(&model, test, &cfg.fit)?;
    let show = |v: Option<f64>| v.map(|x| format!("{x:.6e}")).unwrap_or_else(|| "skipped".into());
    println!(
        "marginal mmd2 {:.6e} (null q95 {}), latent mmd2 {} (null q95 {})",
        report.marginal_mmd2,
        show(report.marginal_null_q95),
        show(report.latent_mmd2),
        show(report.latent_null_q95)
    );
    write_json(out, &FitDocument::new(test.len(), report))?;
    println!("fit report written to {}", out.display());
    Ok(())
}

fn precompute_pce(cfg: &RunConfig) -> Result<()> {
    let path = cfg.require(&cfg.paths.pce, "paths.pce")?;
    let set = ScenarioSet::build(cfg.smpc.horizon, &cfg.smpc.pce_initial, &cfg.smpc.pce_later)?;
    write_bundle(path, &set.to_bundle())?;
    println!("wrote {} projections to {}", set.horizon(), path.display());
    Ok(())
}

fn trajectory_path(dir: &Path, tag: VariantTag) -> PathBuf {
    dir.join(format!("{tag}.trajectory.csv"))
}

fn summary_header() {
    println!(
        "{:<9} {:>10} {:>10} {:>10} {:>10} {:>10} {:>9} {:>9}",
        "controller", "var_ca50", "ratio>=13", "ratio<=2", "rmse_ca50", "rmse_imep", "degraded", "mean_ms"
    );
}

fn summary_line(doc: &MetricsDocument) {
    let m = &doc.metrics;
    let o = &m.overall;
    println!(
        "{:<9} {:>10.4} {:>10.5} {:>10.5} {:>10.4} {:>10.4} {:>9} {:>9.1}",
        doc.controller,
        o.ca50_variance,
        o.ratio_ca50_high,
        o.ratio_ca50_low,
        o.rmse_ca50,
        o.rmse_imep,
        m.solver.degraded,
        m.solver.mean_solve_ms
    );
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::Io {
        path: dir.to_path_buf(),
        source: e,
    })
}

fn run_simulate(cfg: &RunConfig) -> Result<()> {
    let dir = cfg.require(&cfg.paths.out_dir, "paths.out_dir")?;
    let inputs = StudyInputs::load(cfg, &cfg.controllers)?;
    create_dir(dir)?;
    fs::write(dir.join("config.txt"), cfg.to_text()).map_err(|e| Error::Io {
        path: dir.join("config.txt"),
        source: e,
    })?;
    let mut series = Vec::new();
    summary_header();
    for &tag in &cfg.controllers {
        let (rows, report) = simulate(cfg, tag, &inputs)?;
        let csv = trajectory_path(dir, tag);
        write_trajectory_csv(
            &csv,
            &rows,
            &TrajectoryMeta::new(tag.as_str(), cfg.seed, cfg.runs, cfg.cycles),
        )?;
        let doc = MetricsDocument::new(tag.as_str(), cfg.seed, report);
        write_metrics_json(&dir.join(format!("{tag}.metrics.json")), &doc)?;
        summary_line(&doc);
        series.push((tag.to_string(), rows));
    }
    if cfg.plot {
        emit_plot(&dir.join("study.svg"), &series)?;
    }
    Ok(())
}

fn report(cfg: &RunConfig) -> Result<()> {
    let dir = cfg.require(&cfg.paths.out_dir, "paths.out_dir")?;
    let mut docs = Vec::new();
    let mut series = Vec::new();
    summary_header();
    for &tag in &cfg.controllers {
        let csv = trajectory_path(dir, tag);
        let meta = read_trajectory_meta(&csv)?;
        let rows = read_trajectory_csv(&csv)?;
        let metrics = compute_metrics(&rows, |c| cfg.profile.phase(c))?;
        let doc = MetricsDocument::new(tag.as_str(), meta.seed, metrics);
        summary_line(&doc);
        docs.push(doc);
        series.push((tag.to_string(), rows));
    }
    write_json(&dir.join("comparison.json"), &ComparisonDocument::new(cfg.seed, docs))?;
    if cfg.plot {
        emit_plot(&dir.join("study.svg"), &series)?;
    }
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    let (common, action): (&Common, fn(&RunConfig) -> Result<()>) = match &cli.command {
        Command::GenData(c) => (c, gen_data),
        Command::Train(c) => (c, train),
        Command::EvalModel(c) => (c, eval_model),
        Command::PrecomputePce(c) => (c, precompute_pce),
        Command::Simulate(c) => (c, run_simulate),
        Command::Report(c) => (c, report),
    };
    action(&common.load()?)
}

/// One line, `key=value` fields, message last and quoted.
fn error_line(kind: &str, message: &str) -> String {
    let flat = message.split_whitespace().collect::<Vec<_>>().join(" ");
    format!("error kind={kind} message={flat:?}")
}

fn main() -> ExitCode {
    let help = keys_help();
    let cmd = Cli::command()
        .after_long_help(help.clone())
        .mut_subcommands(|s| s.after_long_help(help.clone()));
    let matches = match cmd.try_get_matches() {
        Ok(m) => m,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                let _ = e.print();
                return ExitCode::SUCCESS;
            }
            let text = e.render().to_string();
            let first = text.lines().next().unwrap_or("").trim_start_matches("error: ");
            eprintln!("{}", error_line("usage", first));
            return ExitCode::from(2);
        }
    };
    let cli = match Cli::from_arg_matches(&matches) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("{}", error_line("usage", &e.to_string()));
            return ExitCode::from(2);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", error_line(e.kind(), &e.to_string()));
            match e {
                Error::UnknownKey(_) | Error::MissingKey(_) | Error::Config(_) => ExitCode::from(2),
                _ => ExitCode::FAILURE,
            }
        }
    }
}
