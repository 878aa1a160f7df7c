//! The subcommands. Seeds run concurrently; each writes its own files and
//! manifest, and the merged metrics table is written afterwards in seed
//! order.

use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::Rng as _;
use rayon::prelude::*;

use wdgnn::analysis::{response_maxima, weight_product_deviation, write_convergence_csv, write_stability_csv};
use wdgnn::nn::{checkpoint, ModelKind};
use wdgnn::online::OnlineMode;
use wdgnn::rng::{self, derive_seed};
use wdgnn::scenarios::bounds::{
    centralized_tracking, distributed_tracking, random_locals, random_weight_sequence, stability_reports,
    TrackingReport,
};
use wdgnn::scenarios::flocking::{run_flocking_experiment, FlockingMode};
use wdgnn::scenarios::movielens::{parse_movielens_file, run_recommendation_experiment};
use wdgnn::scenarios::quadratic::quadratic_stream;
use wdgnn::scenarios::sourceloc::{online_curve, OnlineCurve, SourceLocSetup};
use wdgnn::train::{evaluate, TrainOutcome};
use wdgnn::WdGnnParams;

use crate::config::ExperimentConfig;
use crate::output::{file_name, write_file, write_manifest, write_metrics, Manifest, OutputLayout, SeedMetrics};
use crate::CliError;

/// The doubly stochastic construction behind every distributed run.
pub const CONSENSUS_WEIGHTS: &str = "metropolis (self weight floor 1/N)";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Sourceloc,
    Flocking,
    Movielens,
    StabilitySweep,
    ConvergenceSweep,
    Bounds,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Sourceloc => "sourceloc",
            Command::Flocking => "flocking",
            Command::Movielens => "movielens",
            Command::StabilitySweep => "stability-sweep",
            Command::ConvergenceSweep => "convergence-sweep",
            Command::Bounds => "bounds",
        }
    }

    fn columns(self) -> &'static [&'static str] {
        match self {
            Command::Sourceloc => &["accuracy"],
            Command::Flocking => &["total_variation", "final_variation"],
            Command::Movielens => &["rmse"],
            Command::StabilitySweep => &["drop_probability", "accuracy"],
            Command::ConvergenceSweep => &["step", "accuracy"],
            Command::Bounds => &["value"],
        }
    }
}

/// Files written by one run.
#[derive(Debug, Clone)]
pub struct RunSummary {
    pub metrics: PathBuf,
    pub manifests: Vec<PathBuf>,
}

/// Checks scenario and mode compatibility before any work starts.
fn precheck(command: Command, cfg: &ExperimentConfig) -> Result<(), CliError> {
    if command == Command::Movielens {
        if cfg.online.mode == Some(OnlineMode::Distributed) {
            return Err(CliError::Validation(
                "movielens supports centralized online learning only; set online.mode = \"centralized\" or leave it unset".into(),
            ));
        }
        match &cfg.data.movielens {
            None => {
                return Err(CliError::Validation(
                    "movielens needs data.movielens, the path of the 100k ratings file".into(),
                ))
            }
            Some(p) if !p.is_file() => {
                return Err(CliError::Validation(format!("ratings file {} does not exist", p.display())));
            }
            Some(_) => {}
        }
    }
    Ok(())
}

pub fn run(command: Command, cfg: &ExperimentConfig, out_dir: &Path) -> Result<RunSummary, CliError> {
    cfg.validate()?;
    precheck(command, cfg)?;
    let layout = OutputLayout::new(out_dir, command.name(), cfg.hash())?;
    let mut canonical = cfg.clone();
    canonical.seeds.clear();
    canonical.out_dir = None;
    std::fs::write(layout.config(), canonical.to_toml())?;

    let results: Vec<(u64, SeedMetrics, PathBuf)> = cfg
        .seeds
        .par_iter()
        .map(|&seed| {
            let start = Instant::now();
            log::info!("{} seed {seed}: started", command.name());
            let (metrics, outputs) = run_seed(command, cfg, &layout, seed)?;
            let manifest_path = layout.manifest(seed);
            let manifest = Manifest {
                command: command.name(),
                seed,
                config_hash: &layout.hash,
                wall_time_seconds: start.elapsed().as_secs_f64(),
                outputs: outputs.iter().map(|p| file_name(p)).collect(),
                version: env!("CARGO_PKG_VERSION"),
                consensus_weights: CONSENSUS_WEIGHTS,
            };
            write_manifest(&manifest_path, &manifest)?;
            log::info!("{} seed {seed}: done in {:.1}s", command.name(), manifest.wall_time_seconds);
            Ok((seed, metrics, manifest_path))
        })
        .collect::<Result<_, CliError>>()?;

    let per_seed: Vec<(u64, SeedMetrics)> = results.iter().map(|(s, m, _)| (*s, m.clone())).collect();
    let metrics = layout.metrics();
    write_metrics(&metrics, command.columns(), &per_seed)?;
    Ok(RunSummary { metrics, manifests: results.into_iter().map(|(_, _, p)| p).collect() })
}

fn run_seed(
    command: Command,
    cfg: &ExperimentConfig,
    layout: &OutputLayout,
    seed: u64,
) -> Result<(SeedMetrics, Vec<PathBuf>), CliError> {
    match command {
        Command::Sourceloc => sourceloc(cfg, layout, seed),
        Command::Flocking => flocking(cfg, layout, seed),
        Command::Movielens => movielens(cfg, layout, seed),
        Command::StabilitySweep => stability_sweep(cfg, layout, seed),
        Command::ConvergenceSweep => convergence_sweep(cfg, layout, seed),
        Command::Bounds => bounds(cfg, layout, seed),
    }
}

fn write_training(path: &Path, t: &TrainOutcome) -> Result<(), CliError> {
    write_file(path, |out| {
        writeln!(out, "epoch,train_loss,val_loss,val_metric,best")?;
        for r in &t.history {
            writeln!(out, "{},{},{},{},{}", r.epoch, r.train_loss, r.val_loss, r.val_metric, r.epoch == t.best_epoch)?;
        }
        Ok(())
    })
}

/// Every graph shift operator used by the scenarios has its spectrum in
/// this band.
const SPECTRUM_BAND: (f64, f64) = (-1.0, 1.0);
const RESPONSE_GRID: usize = 401;

/// Stores the parameters and, beside them, the largest frequency response
/// of each filter on the spectrum band. Filters are not normalized to keep
/// these at most one.
fn write_model(layout: &OutputLayout, seed: u64, part: &str, params: &WdGnnParams) -> Result<Vec<PathBuf>, CliError> {
    let model = layout.seed_file(seed, part, "json");
    checkpoint::save_file(params, &model)?;
    let maxima = response_maxima(params, SPECTRUM_BAND.0, SPECTRUM_BAND.1, RESPONSE_GRID);
    let responses = layout.seed_file(seed, &part.replacen("model", "responses", 1), "csv");
    write_file(&responses, |out| {
        writeln!(out, "filter,response_max")?;
        for (i, r) in maxima.iter().enumerate() {
            let name = if i == 0 { "wide".to_string() } else { format!("deep{}", i - 1) };
            writeln!(out, "{name},{r}")?;
        }
        Ok(())
    })?;
    Ok(vec![model, responses])
}

fn write_curves(path: &Path, curves: &[OnlineCurve]) -> Result<(), CliError> {
    write_file(path, |out| {
        writeln!(out, "mode,step,accuracy")?;
        for c in curves {
            for (step, acc) in &c.points {
                writeln!(out, "{},{step},{acc}", c.mode.name())?;
            }
        }
        Ok(())
    })
}

/// Trains the source-localization WD-GNN of one seed and stores its
/// training history and parameters.
fn sourceloc_model(
    cfg: &ExperimentConfig,
    layout: &OutputLayout,
    seed: u64,
    outputs: &mut Vec<PathBuf>,
) -> Result<(SourceLocSetup, TrainOutcome), CliError> {
    let c = cfg.effective_sourceloc();
    let setup = SourceLocSetup::new(&c, seed)?;
    let training = setup.train_model(&c, ModelKind::WdGnn, seed)?;
    let history = layout.seed_file(seed, "training", "csv");
    write_training(&history, &training)?;
    outputs.push(history);
    outputs.extend(write_model(layout, seed, "model", &training.params)?);
    Ok((setup, training))
}

fn online_curves(
    cfg: &ExperimentConfig,
    setup: &SourceLocSetup,
    params: &WdGnnParams,
    seed: u64,
) -> Result<(f64, Vec<OnlineCurve>), CliError> {
    let c = cfg.effective_sourceloc();
    let graph = setup.perturbed_graph(c.drop_probability, seed)?;
    let test = setup.test_on(&graph);
    let perturbed = evaluate(params, &test)?.1;
    let stream = setup.online_stream(c.n_online, &graph, seed)?;
    let curves = cfg
        .online_modes()
        .into_iter()
        .map(|mode| online_curve(params, &stream, &test, mode, c.gamma, cfg.eval_every()))
        .collect::<wdgnn::Result<Vec<_>>>()?;
    Ok((perturbed, curves))
}

fn sourceloc(
    cfg: &ExperimentConfig,
    layout: &OutputLayout,
    seed: u64,
) -> Result<(SeedMetrics, Vec<PathBuf>), CliError> {
    let mut outputs = Vec::new();
    let (setup, training) = sourceloc_model(cfg, layout, seed, &mut outputs)?;
    let clean = evaluate(&training.params, &setup.test)?.1;
    let (perturbed, curves) = online_curves(cfg, &setup, &training.params, seed)?;
    let path = layout.seed_file(seed, "online", "csv");
    write_curves(&path, &curves)?;
    outputs.push(path);
    let mut m = SeedMetrics::default();
    m.push("clean", vec![clean]);
    m.push("perturbed", vec![perturbed]);
    for c in &curves {
        m.push(format!("{}_online", c.mode.name()), vec![c.final_accuracy()]);
    }
    Ok((m, outputs))
}

fn convergence_sweep(
    cfg: &ExperimentConfig,
    layout: &OutputLayout,
    seed: u64,
) -> Result<(SeedMetrics, Vec<PathBuf>), CliError> {
    let mut outputs = Vec::new();
    let (setup, training) = sourceloc_model(cfg, layout, seed, &mut outputs)?;
    let (_, curves) = online_curves(cfg, &setup, &training.params, seed)?;
    let path = layout.seed_file(seed, "curves", "csv");
    write_curves(&path, &curves)?;
    outputs.push(path);
    let mut m = SeedMetrics::default();
    for c in &curves {
        for &(step, acc) in &c.points {
            m.push(c.mode.name(), vec![step as f64, acc]);
        }
    }
    Ok((m, outputs))
}

fn stability_sweep(
    cfg: &ExperimentConfig,
    layout: &OutputLayout,
    seed: u64,
) -> Result<(SeedMetrics, Vec<PathBuf>), CliError> {
    let mut outputs = Vec::new();
    let (setup, training) = sourceloc_model(cfg, layout, seed, &mut outputs)?;
    let mut m = SeedMetrics::default();
    for &p in &cfg.perturbation.sweep {
        let graph = setup.perturbed_graph(p, seed)?;
        let acc = evaluate(&training.params, &setup.test_on(&graph))?.1;
        m.push(format!("p={p}"), vec![p, acc]);
    }
    let path = layout.seed_file(seed, "sweep", "csv");
    write_file(&path, |out| {
        writeln!(out, "drop_probability,accuracy")?;
        for (_, v) in &m.rows {
            writeln!(out, "{},{}", v[0], v[1])?;
        }
        Ok(())
    })?;
    outputs.push(path);
    Ok((m, outputs))
}

fn flocking_mode_selected(cfg: &ExperimentConfig, mode: FlockingMode) -> bool {
    match (mode, cfg.online.mode) {
        (FlockingMode::Offline, _) | (_, None) => true,
        (FlockingMode::Centralized, Some(m)) => m == OnlineMode::Centralized,
        (FlockingMode::Distributed, Some(m)) => m == OnlineMode::Distributed,
    }
}

fn flocking(cfg: &ExperimentConfig, layout: &OutputLayout, seed: u64) -> Result<(SeedMetrics, Vec<PathBuf>), CliError> {
    let c = cfg.effective_flocking();
    let e = run_flocking_experiment(&c, seed)?;
    let mut outputs = Vec::new();
    for (name, t) in [("wdgnn", &e.wdgnn), ("graph_filter", &e.filter)] {
        let history = layout.seed_file(seed, &format!("training_{name}"), "csv");
        write_training(&history, t)?;
        outputs.push(history);
        outputs.extend(write_model(layout, seed, &format!("model_{name}"), &t.params)?);
    }
    let mut m = SeedMetrics::default();
    for (score, example) in e.scores.iter().zip(&e.examples) {
        if !flocking_mode_selected(cfg, score.mode) {
            continue;
        }
        let condition = format!("{}_{}", score.policy, score.mode.name());
        m.push(condition.clone(), vec![score.total_variation, score.final_variation]);
        let path = layout.seed_file(seed, &format!("trajectory_{condition}"), "csv");
        write_file(&path, |out| Ok(example.write_trajectory_csv(out)?))?;
        outputs.push(path);
    }
    Ok((m, outputs))
}

fn movielens(
    cfg: &ExperimentConfig,
    layout: &OutputLayout,
    seed: u64,
) -> Result<(SeedMetrics, Vec<PathBuf>), CliError> {
    let c = cfg.effective_movielens();
    let path = cfg.data.movielens.as_ref().expect("checked before the run");
    let ratings = parse_movielens_file(path, c.top_movies)?;
    let run = run_recommendation_experiment(&ratings, &c, seed)?;
    let mut outputs = Vec::new();
    let history = layout.seed_file(seed, "training", "csv");
    write_training(&history, &run.training)?;
    outputs.push(history);
    outputs.extend(write_model(layout, seed, "model", &run.training.params)?);
    let mut m = SeedMetrics::default();
    m.push("target_offline", vec![run.target_rmse]);
    if let Some((offline, online)) = run.transfer {
        m.push("transfer_offline", vec![offline]);
        m.push("transfer_online", vec![online]);
        let trace = layout.seed_file(seed, "transfer_online", "csv");
        write_file(&trace, |out| Ok(run.transfer_trace.write_csv(out)?))?;
        outputs.push(trace);
    }
    Ok((m, outputs))
}

fn write_tracking(path: &Path, rep: &TrackingReport) -> Result<(), CliError> {
    write_file(path, |out| Ok(write_convergence_csv(&rep.rows, &rep.constants, out)?))
}

fn max_ratio(rep: &TrackingReport) -> f64 {
    rep.rows.iter().filter_map(|r| r.bound.map(|b| r.tracking_error / b)).fold(0.0, f64::max)
}

fn bounds(cfg: &ExperimentConfig, layout: &OutputLayout, seed: u64) -> Result<(SeedMetrics, Vec<PathBuf>), CliError> {
    let mut outputs = Vec::new();
    let mut m = SeedMetrics::default();

    let reports = stability_reports(&cfg.stability, derive_seed(seed, 0))?;
    let path = layout.seed_file(seed, "stability", "csv");
    write_file(&path, |out| Ok(write_stability_csv(&reports, cfg.stability.slack, out)?))?;
    outputs.push(path);
    let dominated = reports.iter().filter(|r| r.dominated(cfg.stability.slack)).count();
    m.push("stability_dominated_share", vec![dominated as f64 / reports.len().max(1) as f64]);

    let stream = quadratic_stream(&cfg.effective_quadratic(), derive_seed(seed, 1))?;
    let c_s = stream.curvature_range().0;
    let central = centralized_tracking(&stream, cfg.online.gamma.unwrap_or(1.0 / c_s))?;
    let path = layout.seed_file(seed, "centralized", "csv");
    write_tracking(&path, &central)?;
    outputs.push(path);
    m.push("centralized_max_error_over_bound", vec![max_ratio(&central)]);

    let init = random_locals(&stream, 1.0, derive_seed(seed, 2))?;
    let dist = distributed_tracking(&stream, cfg.online.gamma.unwrap_or(0.5 / c_s), init)?;
    let path = layout.seed_file(seed, "distributed", "csv");
    write_tracking(&path, &dist)?;
    outputs.push(path);
    let path = layout.seed_file(seed, "disagreement", "csv");
    write_file(&path, |out| {
        writeln!(out, "t,disagreement")?;
        for (t, d) in dist.disagreement.iter().enumerate() {
            writeln!(out, "{t},{d}")?;
        }
        Ok(())
    })?;
    outputs.push(path);
    let d0 = dist.disagreement.first().copied().unwrap_or(0.0);
    let d_end = dist.disagreement.last().copied().unwrap_or(0.0);
    m.push("distributed_max_error_over_bound", vec![max_ratio(&dist)]);
    m.push("distributed_disagreement_ratio", vec![if d0 > 0.0 { d_end / d0 } else { 0.0 }]);
    m.push("distributed_final_error", vec![dist.rows.last().map(|r| r.tracking_error).unwrap_or(f64::NAN)]);
    m.push("distributed_bound_limit", vec![dist.limit]);

    let mut r = rng::seeded(derive_seed(seed, 3));
    let mut lemma = Vec::new();
    for i in 0..20 {
        let n = r.random_range(3..=10);
        let len = r.random_range(1..=60);
        let seq = random_weight_sequence(n, len, derive_seed(seed, 100 + i))?;
        let (dev, bound) = weight_product_deviation(&seq, 1)?;
        lemma.push((n, len, dev, bound));
    }
    let path = layout.seed_file(seed, "lemma", "csv");
    write_file(&path, |out| {
        writeln!(out, "sequence,n,length,deviation,bound")?;
        for (i, (n, len, dev, bound)) in lemma.iter().enumerate() {
            writeln!(out, "{i},{n},{len},{dev},{bound}")?;
        }
        Ok(())
    })?;
    outputs.push(path);
    let worst = lemma.iter().map(|&(_, _, d, b)| d / b).fold(0.0, f64::max);
    m.push("lemma_max_deviation_over_bound", vec![worst]);
    Ok((m, outputs))
}
