//! `kitenav` — drive the navigation stack end to end: generate benchmark
//! worlds, train the trajectory sampler and the terrain classifier, run
//! policy trials, and produce the paired benchmark report.
//!
//! Exit codes: 0 when every requested output was written; 2 for bad
//! arguments, unreadable or malformed inputs, and domain validation
//! failures; 1 for internal errors.

mod config;

use std::fmt::Display;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::str::FromStr;

use clap::{Args, Parser, Subcommand, ValueEnum};

use config::Manifest;
use kitenav_core::bench::{report_from_batches, run_benchmark, BenchConfig, BenchError, TrialBatch};
use kitenav_core::diffusion::{
    load_dataset, load_predictor, make_schedule, save_dataset, save_predictor,
    train_noise_predictor, DiffusionError,
};
use kitenav_core::seed::{derive, stage};
use kitenav_core::sim::{
    generate_world, load_world, local_planner_dataset, run_trial, save_world,
    traversability_dataset, PolicyConfig, PolicyMode, SimError, TrialAssets, World, WorldKind,
};
use kitenav_core::traversability::{
    load_model, load_samples, predict_map, save_model, save_samples, train_traversability,
    FocalLossParams, TraversabilityError,
};

#[derive(Parser)]
#[command(
    name = "kitenav",
    version,
    about = "Language-conditioned local-global navigation: worlds, training, trials, benchmark"
)]
struct Cli {
    /// `key = value` manifest supplying defaults for any long flag of the
    /// chosen command; explicit flags win.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a world bundle and its topology graph file.
    GenWorld(GenWorldArgs),
    /// Extract the topology graph from a world bundle into a JSON file.
    BuildGraph(BuildGraphArgs),
    /// Train the trajectory sampler and the terrain classifier; write
    /// checkpoints and per-epoch loss curves.
    Train(TrainArgs),
    /// Run one policy trial on a world bundle and record its result.
    RunTrial(RunTrialArgs),
    /// Run the paired benchmark over both world kinds and write the report
    /// files.
    RunBench(RunBenchArgs),
    /// Rebuild the report files from a stored trial log.
    Report(ReportArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum KindArg {
    Structured,
    Unstructured,
}

impl From<KindArg> for WorldKind {
    fn from(value: KindArg) -> Self {
        match value {
            KindArg::Structured => WorldKind::Structured,
            KindArg::Unstructured => WorldKind::Unstructured,
        }
    }
}

impl FromStr for KindArg {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "structured" => Ok(KindArg::Structured),
            "unstructured" => Ok(KindArg::Unstructured),
            other => Err(format!(
                "unknown world kind {other:?} (expected structured or unstructured)"
            )),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum ModeArg {
    #[value(name = "lp_only")]
    LpOnly,
    #[value(name = "gp_only")]
    GpOnly,
    #[value(name = "lp_gp")]
    LpGp,
}

impl From<ModeArg> for PolicyMode {
    fn from(value: ModeArg) -> Self {
        match value {
            ModeArg::LpOnly => PolicyMode::LpOnly,
            ModeArg::GpOnly => PolicyMode::GpOnly,
            ModeArg::LpGp => PolicyMode::LpGp,
        }
    }
}

impl FromStr for ModeArg {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "lp_only" => Ok(ModeArg::LpOnly),
            "gp_only" => Ok(ModeArg::GpOnly),
            "lp_gp" => Ok(ModeArg::LpGp),
            other => Err(format!(
                "unknown policy mode {other:?} (expected lp_only, gp_only, or lp_gp)"
            )),
        }
    }
}

enum CliError {
    /// Bad arguments, unreadable or malformed inputs, domain validation.
    Usage(String),
    /// Failures inside the pipeline on valid inputs.
    Internal(String),
}

fn usage(msg: impl Display) -> CliError {
    CliError::Usage(msg.to_string())
}

fn internal(msg: impl Display) -> CliError {
    CliError::Internal(msg.to_string())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(CliError::Internal(msg)) => {
            eprintln!("internal error: {msg}");
            ExitCode::from(1)
        }
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    let manifest = match &cli.config {
        Some(path) => Manifest::load(path).map_err(usage)?,
        None => Manifest::empty(),
    };
    match cli.command {
        Command::GenWorld(args) => cmd_gen_world(args, &manifest),
        Command::BuildGraph(args) => cmd_build_graph(args, &manifest),
        Command::Train(args) => cmd_train(args, &manifest),
        Command::RunTrial(args) => cmd_run_trial(args, &manifest),
        Command::RunBench(args) => cmd_run_bench(args, &manifest),
        Command::Report(args) => cmd_report(args, &manifest),
    }
}

// ---------------------------------------------------------------------------
// flag / manifest / environment resolution

/// Flag value, else manifest value, else the built-in default.
fn pick<T>(flag: Option<T>, manifest: &Manifest, key: &str, default: T) -> Result<T, CliError>
where
    T: FromStr,
    T::Err: Display,
{
    match flag {
        Some(value) => Ok(value),
        None => Ok(manifest.get::<T>(key).map_err(usage)?.unwrap_or(default)),
    }
}

/// Flag value, else manifest value, else `None`.
fn pick_optional<T>(flag: Option<T>, manifest: &Manifest, key: &str) -> Result<Option<T>, CliError>
where
    T: FromStr,
    T::Err: Display,
{
    match flag {
        Some(value) => Ok(Some(value)),
        None => manifest.get::<T>(key).map_err(usage),
    }
}

/// Flag value, else manifest value; missing both is a usage error.
fn pick_required<T>(flag: Option<T>, manifest: &Manifest, key: &str) -> Result<T, CliError>
where
    T: FromStr,
    T::Err: Display,
{
    pick_optional(flag, manifest, key)?
        .ok_or_else(|| usage(format!("missing --{key} (pass the flag or a config entry)")))
}

/// Seed resolution: flag, else manifest `seed`, else the `KITE_SEED`
/// environment variable, else 0.
fn pick_seed(flag: Option<u64>, manifest: &Manifest) -> Result<u64, CliError> {
    if let Some(seed) = flag {
        return Ok(seed);
    }
    if let Some(seed) = manifest.get::<u64>("seed").map_err(usage)? {
        return Ok(seed);
    }
    match std::env::var("KITE_SEED") {
        Ok(raw) => raw
            .trim()
            .parse::<u64>()
            .map_err(|e| usage(format!("KITE_SEED={raw:?}: {e}"))),
        Err(std::env::VarError::NotPresent) => Ok(0),
        Err(e) => Err(usage(format!("KITE_SEED: {e}"))),
    }
}

/// Resolve the output directory (default `.`) and make sure it exists.
fn out_dir(flag: Option<PathBuf>, manifest: &Manifest) -> Result<PathBuf, CliError> {
    let dir = pick(flag, manifest, "out", PathBuf::from("."))?;
    fs::create_dir_all(&dir)
        .map_err(|e| usage(format!("cannot create output directory {}: {e}", dir.display())))?;
    Ok(dir)
}

// ---------------------------------------------------------------------------
// error classification and io helpers

/// Any failure to read or parse a user-named input file is a usage error.
fn input_error(what: &str, path: &Path, e: impl Display) -> CliError {
    usage(format!("{what} {}: {e}", path.display()))
}

fn write_error(path: &Path, e: impl Display) -> CliError {
    internal(format!("writing {}: {e}", path.display()))
}

fn generation_error(e: SimError) -> CliError {
    match e {
        SimError::SizeTooSmall { .. } => usage(e),
        other => internal(other),
    }
}

fn sampler_training_error(e: DiffusionError) -> CliError {
    match e {
        DiffusionError::EmptyDataset
        | DiffusionError::ShapeMismatch { .. }
        | DiffusionError::MalformedDataset { .. }
        | DiffusionError::InvalidSchedule(_) => usage(e),
        other => internal(other),
    }
}

fn classifier_training_error(e: TraversabilityError) -> CliError {
    match e {
        TraversabilityError::DegenerateDataset
        | TraversabilityError::NonFiniteFeature
        | TraversabilityError::FeatureDimMismatch { .. }
        | TraversabilityError::MalformedDataset { .. } => usage(e),
        other => internal(other),
    }
}

fn write_string(path: &Path, contents: &str) -> Result<(), CliError> {
    fs::write(path, contents).map_err(|e| write_error(path, e))
}

fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let text = serde_json::to_string_pretty(value)
        .map_err(|e| internal(format!("serializing {}: {e}", path.display())))?;
    write_string(path, &text)
}

fn write_loss_csv(path: &Path, losses: &[f64]) -> Result<(), CliError> {
    let mut text = String::from("epoch,mean_loss\n");
    for (i, loss) in losses.iter().enumerate() {
        text.push_str(&format!("{},{}\n", i + 1, loss));
    }
    write_string(path, &text)
}

// ---------------------------------------------------------------------------
// gen-world

#[derive(Args)]
struct GenWorldArgs {
    /// World family to generate.
    #[arg(long, value_enum)]
    kind: Option<KindArg>,
    /// Side length in grid cells (0.5 m per cell). Defaults to 500 for
    /// structured worlds and 600 for unstructured ones.
    #[arg(long)]
    size: Option<usize>,
    /// Generation seed; falls back to config `seed`, then `KITE_SEED`, then 0.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn default_world_size(kind: WorldKind) -> usize {
    match kind {
        WorldKind::Structured => 500,
        WorldKind::Unstructured => 600,
    }
}

fn cmd_gen_world(args: GenWorldArgs, manifest: &Manifest) -> Result<(), CliError> {
    let kind: WorldKind = pick_required(args.kind, manifest, "kind")?.into();
    let size = pick(args.size, manifest, "size", default_world_size(kind))?;
    let seed = pick_seed(args.seed, manifest)?;
    let out = out_dir(args.out, manifest)?;

    let world = generate_world(kind, size, seed).map_err(generation_error)?;
    let world_path = out.join(format!("world-{kind}-{seed}.wrld"));
    let graph_path = out.join(format!("world-{kind}-{seed}.graph.json"));
    save_world(&world, &world_path).map_err(|e| write_error(&world_path, e))?;
    world
        .graph
        .save(&graph_path)
        .map_err(|e| write_error(&graph_path, e))?;

    println!("world: {}", world_path.display());
    println!("graph: {}", graph_path.display());
    println!(
        "{kind}, {size}x{size} cells, {} nodes, {} edges, {} route hops, {} moving obstacles",
        world.graph.len(),
        world.graph.edges().len(),
        world.route_nodes.len().saturating_sub(1),
        world.obstacles.len()
    );
    println!("instruction: {}", world.instruction);
    Ok(())
}

// ---------------------------------------------------------------------------
// build-graph

#[derive(Args)]
struct BuildGraphArgs {
    /// World bundle to read.
    #[arg(long)]
    world: Option<PathBuf>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn cmd_build_graph(args: BuildGraphArgs, manifest: &Manifest) -> Result<(), CliError> {
    let world_path: PathBuf = pick_required(args.world, manifest, "world")?;
    let out = out_dir(args.out, manifest)?;
    let world = load_world(&world_path).map_err(|e| input_error("world", &world_path, e))?;

    let stem = world_path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "world".to_owned());
    let graph_path = out.join(format!("{stem}.graph.json"));
    world
        .graph
        .save(&graph_path)
        .map_err(|e| write_error(&graph_path, e))?;

    println!("graph: {}", graph_path.display());
    println!(
        "{} nodes, {} edges, embedding dim {}",
        world.graph.len(),
        world.graph.edges().len(),
        world.graph.embedding_dim()
    );
    Ok(())
}

// ---------------------------------------------------------------------------
// train

#[derive(Args)]
struct TrainArgs {
    /// World bundle to derive demonstration datasets from; the datasets are
    /// written next to the checkpoints. Mutually exclusive with the explicit
    /// dataset flags.
    #[arg(long, conflicts_with_all = ["sampler_dataset", "classifier_dataset"])]
    world: Option<PathBuf>,
    /// JSONL trajectory dataset for the sampler.
    #[arg(long)]
    sampler_dataset: Option<PathBuf>,
    /// JSONL labeled-cell dataset for the terrain classifier.
    #[arg(long)]
    classifier_dataset: Option<PathBuf>,
    /// Demonstration snippets to derive (with --world).
    #[arg(long)]
    sampler_samples: Option<usize>,
    /// Labeled cells per class to derive (with --world).
    #[arg(long)]
    classifier_samples: Option<usize>,
    /// Training epochs for the sampler.
    #[arg(long)]
    sampler_epochs: Option<usize>,
    /// Training epochs for the classifier.
    #[arg(long)]
    classifier_epochs: Option<usize>,
    /// Focal-loss weighting factor.
    #[arg(long)]
    lambda: Option<f64>,
    /// Focal-loss focusing exponent.
    #[arg(long)]
    gamma: Option<f64>,
    /// Denoising steps in the sampler's schedule.
    #[arg(long)]
    diffusion_steps: Option<usize>,
    /// Master seed; falls back to config `seed`, then `KITE_SEED`, then 0.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn cmd_train(args: TrainArgs, manifest: &Manifest) -> Result<(), CliError> {
    let seed = pick_seed(args.seed, manifest)?;
    let out = out_dir(args.out, manifest)?;
    let world_path = pick_optional(args.world, manifest, "world")?;
    let sampler_epochs = pick(args.sampler_epochs, manifest, "sampler-epochs", 900)?;
    let classifier_epochs = pick(args.classifier_epochs, manifest, "classifier-epochs", 400)?;
    let diffusion_steps = pick(args.diffusion_steps, manifest, "diffusion-steps", 50)?;
    let focal = FocalLossParams {
        lambda: pick(args.lambda, manifest, "lambda", FocalLossParams::default().lambda)?,
        gamma: pick(args.gamma, manifest, "gamma", FocalLossParams::default().gamma)?,
    };

    // Resolve the two datasets: either derived from a world bundle (and
    // saved, so the run's inputs are themselves artifacts) or read from
    // explicit files.
    let (sampler_data, classifier_data) = if let Some(world_path) = world_path {
        let world = load_world(&world_path).map_err(|e| input_error("world", &world_path, e))?;
        let snippets = pick(args.sampler_samples, manifest, "sampler-samples", 1200)?;
        let per_class = pick(args.classifier_samples, manifest, "classifier-samples", 800)?;
        let sampler_data =
            local_planner_dataset(&world, snippets, 0).map_err(|e| internal(e))?;
        let classifier_data =
            traversability_dataset(&world, per_class, 0).map_err(|e| internal(e))?;
        let sampler_path = out.join("sampler-dataset.jsonl");
        let classifier_path = out.join("classifier-dataset.jsonl");
        save_dataset(&sampler_path, &sampler_data).map_err(|e| write_error(&sampler_path, e))?;
        save_samples(&classifier_path, &classifier_data)
            .map_err(|e| write_error(&classifier_path, e))?;
        println!("sampler dataset: {} ({} snippets)", sampler_path.display(), sampler_data.len());
        println!(
            "classifier dataset: {} ({} cells)",
            classifier_path.display(),
            classifier_data.len()
        );
        (Some(sampler_data), Some(classifier_data))
    } else {
        let sampler_path: Option<PathBuf> =
            pick_optional(args.sampler_dataset, manifest, "sampler-dataset")?;
        let classifier_path: Option<PathBuf> =
            pick_optional(args.classifier_dataset, manifest, "classifier-dataset")?;
        if sampler_path.is_none() && classifier_path.is_none() {
            return Err(usage(
                "nothing to train: pass --world, or --sampler-dataset / --classifier-dataset",
            ));
        }
        let sampler_data = sampler_path
            .map(|p| load_dataset(&p).map_err(|e| input_error("sampler dataset", &p, e)))
            .transpose()?;
        let classifier_data = classifier_path
            .map(|p| load_samples(&p).map_err(|e| input_error("classifier dataset", &p, e)))
            .transpose()?;
        (sampler_data, classifier_data)
    };

    if let Some(dataset) = sampler_data {
        let schedule =
            make_schedule(diffusion_steps, 1e-4, 0.02).map_err(sampler_training_error)?;
        let (predictor, losses) = train_noise_predictor(
            &dataset,
            &schedule,
            sampler_epochs,
            derive(seed, stage::TRAIN_LP, 0),
        )
        .map_err(sampler_training_error)?;
        let ckpt = out.join("sampler.nprd");
        let curve = out.join("sampler-loss.csv");
        save_predictor(&ckpt, &predictor).map_err(|e| write_error(&ckpt, e))?;
        write_loss_csv(&curve, &losses)?;
        println!(
            "sampler checkpoint: {} ({} epochs, final loss {:.4})",
            ckpt.display(),
            losses.len(),
            losses.last().copied().unwrap_or(f64::NAN)
        );
    }

    if let Some(dataset) = classifier_data {
        let (model, losses) = train_traversability(
            &dataset,
            &focal,
            classifier_epochs,
            derive(seed, stage::TRAIN_GP, 0),
        )
        .map_err(classifier_training_error)?;
        let ckpt = out.join("terrain.tmdl");
        let curve = out.join("terrain-loss.csv");
        save_model(&ckpt, &model).map_err(|e| write_error(&ckpt, e))?;
        write_loss_csv(&curve, &losses)?;
        println!(
            "terrain checkpoint: {} ({} epochs, final loss {:.4})",
            ckpt.display(),
            losses.len(),
            losses.last().copied().unwrap_or(f64::NAN)
        );
    }

    Ok(())
}

// ---------------------------------------------------------------------------
// run-trial

#[derive(Args)]
struct RunTrialArgs {
    /// World bundle to run in.
    #[arg(long)]
    world: Option<PathBuf>,
    /// Policy variant.
    #[arg(long, value_enum)]
    mode: Option<ModeArg>,
    /// Trained sampler checkpoint; required for lp_only and lp_gp.
    #[arg(long)]
    sampler: Option<PathBuf>,
    /// Trained terrain-classifier checkpoint; required for gp_only and lp_gp.
    #[arg(long)]
    terrain: Option<PathBuf>,
    /// Navigation instruction; defaults to the world's own.
    #[arg(long)]
    instruction: Option<String>,
    /// Trial seed (localization and sampling noise); falls back to config
    /// `seed`, then `KITE_SEED`, then 0.
    #[arg(long)]
    seed: Option<u64>,
    /// Route-length penalty weight in the instruction planner.
    #[arg(long)]
    beta_cost: Option<f64>,
    /// Candidate trajectories sampled per replanning cycle.
    #[arg(long)]
    candidates: Option<usize>,
    /// e-folding distance of the goal-distance waypoint weight, meters.
    #[arg(long)]
    distance_scale: Option<f64>,
    /// Simulated-time budget, seconds.
    #[arg(long)]
    timeout: Option<f64>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn cmd_run_trial(args: RunTrialArgs, manifest: &Manifest) -> Result<(), CliError> {
    let world_path: PathBuf = pick_required(args.world, manifest, "world")?;
    let mode: PolicyMode = pick(args.mode, manifest, "mode", ModeArg::LpGp)?.into();
    let seed = pick_seed(args.seed, manifest)?;
    let out = out_dir(args.out, manifest)?;

    let world = load_world(&world_path).map_err(|e| input_error("world", &world_path, e))?;

    let mut policy = PolicyConfig::new(mode);
    policy.beta_cost = pick(args.beta_cost, manifest, "beta-cost", policy.beta_cost)?;
    policy.k_candidates = pick(args.candidates, manifest, "candidates", policy.k_candidates)?;
    policy.weight_params.distance_scale = pick(
        args.distance_scale,
        manifest,
        "distance-scale",
        policy.weight_params.distance_scale,
    )?;
    policy.timeout_s = pick(args.timeout, manifest, "timeout", policy.timeout_s)?;
    policy.instruction = pick_optional(args.instruction, manifest, "instruction")?;

    let predictor = if mode.uses_sampler() {
        let path: PathBuf = pick_optional(args.sampler, manifest, "sampler")?
            .ok_or_else(|| usage(format!("mode {} needs --sampler", mode.label())))?;
        Some(load_predictor(&path).map_err(|e| input_error("sampler checkpoint", &path, e))?)
    } else {
        None
    };
    let traversability_map = if mode.uses_map() {
        let path: PathBuf = pick_optional(args.terrain, manifest, "terrain")?
            .ok_or_else(|| usage(format!("mode {} needs --terrain", mode.label())))?;
        let model =
            load_model(&path).map_err(|e| input_error("terrain checkpoint", &path, e))?;
        Some(predict_map(&model, &world.features).map_err(classifier_training_error)?)
    } else {
        None
    };
    let assets = TrialAssets {
        noise_predictor: predictor.as_ref(),
        traversability_map: traversability_map.as_ref(),
    };

    let result = run_trial(&world, &policy, &assets, seed).map_err(|e| match e {
        SimError::MissingAsset(_) => usage(e),
        other => internal(other),
    })?;

    let result_path = out.join("trial-result.json");
    write_json(&result_path, &result)?;

    print_trial_summary(&world, &result);
    println!("result: {}", result_path.display());
    Ok(())
}

fn print_trial_summary(world: &World, result: &kitenav_core::sim::TrialResult) {
    if result.reached_goal {
        let efficiency = if result.optimal_path_length > 0.0 {
            result.actual_path_length / result.optimal_path_length
        } else {
            f64::NAN
        };
        println!(
            "reached the goal in {:.1} s with {} interventions; path {:.1} m vs optimal {:.1} m (efficiency {:.2})",
            result.sim_time,
            result.interventions,
            result.actual_path_length,
            result.optimal_path_length,
            efficiency
        );
    } else {
        println!(
            "did not reach the goal within {:.0} s ({} interventions, {:.1} m traveled)",
            result.sim_time, result.interventions, result.actual_path_length
        );
    }
    println!(
        "route: {} hops on a {} graph of {} nodes",
        result.planned_route.len().saturating_sub(1),
        world.kind,
        world.graph.len()
    );
}

// ---------------------------------------------------------------------------
// run-bench

#[derive(Args)]
struct RunBenchArgs {
    /// Master seed; falls back to config `seed`, then `KITE_SEED`, then 0.
    #[arg(long)]
    seed: Option<u64>,
    /// Paired trials per policy variant per world.
    #[arg(long)]
    trials: Option<usize>,
    /// Comma-separated policy variants, in table order.
    #[arg(long, value_enum, value_delimiter = ',')]
    modes: Option<Vec<ModeArg>>,
    /// Side length of the structured world, cells.
    #[arg(long)]
    structured_size: Option<usize>,
    /// Side length of the unstructured world, cells.
    #[arg(long)]
    unstructured_size: Option<usize>,
    /// Demonstration snippets for sampler training.
    #[arg(long)]
    sampler_samples: Option<usize>,
    /// Training epochs for the sampler.
    #[arg(long)]
    sampler_epochs: Option<usize>,
    /// Labeled cells per class for classifier training.
    #[arg(long)]
    classifier_samples: Option<usize>,
    /// Training epochs for the classifier.
    #[arg(long)]
    classifier_epochs: Option<usize>,
    /// Significance level for the pairwise tests.
    #[arg(long)]
    alpha: Option<f64>,
    /// Worker threads for the trial loop (0 = one per core). Results do not
    /// depend on this.
    #[arg(long)]
    workers: Option<usize>,
    /// Suppress per-stage progress lines on stderr.
    #[arg(long)]
    quiet: bool,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn parse_modes(raw: &str) -> Result<Vec<ModeArg>, String> {
    raw.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(<ModeArg as FromStr>::from_str)
        .collect()
}

fn cmd_run_bench(args: RunBenchArgs, manifest: &Manifest) -> Result<(), CliError> {
    let defaults = BenchConfig::default();
    let modes: Vec<PolicyMode> = match args.modes {
        Some(modes) => modes.into_iter().map(PolicyMode::from).collect(),
        None => match manifest.raw("modes") {
            Some(raw) => parse_modes(raw)
                .map_err(usage)?
                .into_iter()
                .map(PolicyMode::from)
                .collect(),
            None => defaults.modes.clone(),
        },
    };
    let config = BenchConfig {
        master_seed: pick_seed(args.seed, manifest)?,
        trials: pick(args.trials, manifest, "trials", defaults.trials)?,
        modes,
        kinds: defaults.kinds.clone(),
        structured_size: pick(
            args.structured_size,
            manifest,
            "structured-size",
            defaults.structured_size,
        )?,
        unstructured_size: pick(
            args.unstructured_size,
            manifest,
            "unstructured-size",
            defaults.unstructured_size,
        )?,
        sampler_samples: pick(
            args.sampler_samples,
            manifest,
            "sampler-samples",
            defaults.sampler_samples,
        )?,
        sampler_epochs: pick(
            args.sampler_epochs,
            manifest,
            "sampler-epochs",
            defaults.sampler_epochs,
        )?,
        classifier_samples_per_class: pick(
            args.classifier_samples,
            manifest,
            "classifier-samples",
            defaults.classifier_samples_per_class,
        )?,
        classifier_epochs: pick(
            args.classifier_epochs,
            manifest,
            "classifier-epochs",
            defaults.classifier_epochs,
        )?,
        alpha: pick(args.alpha, manifest, "alpha", defaults.alpha)?,
    };
    if config.trials == 0 {
        return Err(usage("trial count must be at least 1"));
    }
    if config.modes.is_empty() {
        return Err(usage("mode list must not be empty"));
    }
    if !(config.alpha > 0.0 && config.alpha < 1.0) {
        return Err(usage(format!(
            "alpha must lie strictly between 0 and 1, got {}",
            config.alpha
        )));
    }
    let workers = pick(args.workers, manifest, "workers", 0usize)?;
    let out = out_dir(args.out, manifest)?;

    let progress = |line: &str| {
        if !args.quiet {
            eprintln!("{line}");
        }
    };
    let bench_error = |e: BenchError| match e {
        BenchError::Sim(SimError::SizeTooSmall { .. }) => usage(e),
        other => internal(other),
    };
    let output = if workers > 0 {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(workers)
            .build()
            .map_err(|e| internal(format!("building worker pool: {e}")))?;
        pool.install(|| run_benchmark(&config, progress))
            .map_err(bench_error)?
    } else {
        run_benchmark(&config, progress).map_err(bench_error)?
    };

    let report_path = out.join("report.csv");
    let significance_path = out.join("significance.csv");
    let batches_path = out.join("batches.json");
    let events_path = out.join("events.jsonl");
    write_string(&report_path, &output.report.metrics_csv())?;
    write_string(&significance_path, &output.report.significance_csv())?;
    write_json(&batches_path, &output.batches)?;
    write_events_log(&events_path, &output.batches)?;

    for batch in &output.batches {
        for (index, message) in &batch.failures {
            eprintln!("warning: {} trial {index} failed: {message}", batch.label);
        }
    }

    print!("{}", output.report.text_table());
    println!();
    println!("report:       {}", report_path.display());
    println!("significance: {}", significance_path.display());
    println!("trial log:    {}", batches_path.display());
    println!("events:       {}", events_path.display());
    Ok(())
}

/// One line per trial: the batch label, trial index, outcome, and the full
/// event stream.
fn write_events_log(path: &Path, batches: &[TrialBatch]) -> Result<(), CliError> {
    #[derive(serde::Serialize)]
    struct EventLine<'a> {
        label: &'a str,
        trial: usize,
        reached_goal: bool,
        interventions: u32,
        events: &'a [kitenav_core::sim::TrialEvent],
    }
    let mut text = String::new();
    for batch in batches {
        for (trial, result) in batch.trials.iter().enumerate() {
            let line = serde_json::to_string(&EventLine {
                label: &batch.label,
                trial,
                reached_goal: result.reached_goal,
                interventions: result.interventions,
                events: &result.events,
            })
            .map_err(|e| internal(format!("serializing {}: {e}", path.display())))?;
            text.push_str(&line);
            text.push('\n');
        }
    }
    write_string(path, &text)
}

// ---------------------------------------------------------------------------
// report

#[derive(Args)]
struct ReportArgs {
    /// Trial log written by run-bench (batches.json).
    #[arg(long)]
    batches: Option<PathBuf>,
    /// Significance level for the pairwise tests.
    #[arg(long)]
    alpha: Option<f64>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn cmd_report(args: ReportArgs, manifest: &Manifest) -> Result<(), CliError> {
    let batches_path: PathBuf = pick_required(args.batches, manifest, "batches")?;
    let alpha = pick(args.alpha, manifest, "alpha", 0.05)?;
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(usage(format!(
            "alpha must lie strictly between 0 and 1, got {alpha}"
        )));
    }
    let out = out_dir(args.out, manifest)?;

    let text = fs::read_to_string(&batches_path)
        .map_err(|e| input_error("trial log", &batches_path, e))?;
    let batches: Vec<TrialBatch> = serde_json::from_str(&text)
        .map_err(|e| input_error("trial log", &batches_path, e))?;
    if batches.is_empty() {
        return Err(usage(format!(
            "trial log {} holds no batches",
            batches_path.display()
        )));
    }
    let report = report_from_batches(&batches, alpha)
        .map_err(|e| input_error("trial log", &batches_path, e))?;

    let report_path = out.join("report.csv");
    let significance_path = out.join("significance.csv");
    write_string(&report_path, &report.metrics_csv())?;
    write_string(&significance_path, &report.significance_csv())?;

    print!("{}", report.text_table());
    println!();
    println!("report:       {}", report_path.display());
    println!("significance: {}", significance_path.display());
    Ok(())
}
