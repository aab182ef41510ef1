//! End-to-end benchmark pipeline: generate one world per terrain kind,
//! train the trajectory sampler and the terrain classifier on that world's
//! own demonstrations, run every policy variant over a shared batch of
//! seeded trials, and aggregate metrics with paired significance tests.
//!
//! Trials are paired across policy variants: trial `i` of every variant
//! uses the same world, the same obstacle phases, and the same derived
//! noise streams, so per-trial metric differences isolate the policy
//! change. That pairing is what the signed-rank comparisons rely on.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::diffusion::{train_noise_predictor, DiffusionError};
use crate::metrics::{summarize, MetricError};
use crate::report::{build_report, BenchReport, ComparisonRow};
use crate::seed::{self, stage};
use crate::sim::{
    generate_world, local_planner_dataset, run_trial, PolicyConfig, PolicyMode, SimError,
    TrialAssets, TrialResult, World, WorldKind,
};
use crate::sim::traversability_dataset;
use crate::stats::wilcoxon_signed_rank;
use crate::traversability::{
    predict_map, train_traversability, FocalLossParams, TraversabilityError,
};

#[derive(Debug, Error)]
pub enum BenchError {
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Diffusion(#[from] DiffusionError),
    #[error(transparent)]
    Traversability(#[from] TraversabilityError),
    #[error(transparent)]
    Metric(#[from] MetricError),
}

/// Full-run parameters. The defaults reproduce the benchmark as reported:
/// twenty paired trials of the two ablations and the full policy on one
/// structured and one unstructured world.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchConfig {
    pub master_seed: u64,
    /// Trials per policy variant per world.
    pub trials: usize,
    /// Policy variants, in table order.
    pub modes: Vec<PolicyMode>,
    /// World kinds, in table order.
    pub kinds: Vec<WorldKind>,
    /// Side length of the structured world, in cells.
    pub structured_size: usize,
    /// Side length of the unstructured world, in cells.
    pub unstructured_size: usize,
    /// Expert snippets for training the trajectory sampler.
    pub sampler_samples: usize,
    /// Training epochs for the trajectory sampler.
    pub sampler_epochs: usize,
    /// Labeled cells per class for training the terrain classifier.
    pub classifier_samples_per_class: usize,
    /// Training epochs for the terrain classifier.
    pub classifier_epochs: usize,
    /// Significance level for the pairwise comparisons.
    pub alpha: f64,
}

impl Default for BenchConfig {
    fn default() -> Self {
        Self {
            master_seed: 0,
            trials: 20,
            modes: vec![PolicyMode::LpOnly, PolicyMode::GpOnly, PolicyMode::LpGp],
            kinds: vec![WorldKind::Structured, WorldKind::Unstructured],
            structured_size: 500,
            unstructured_size: 600,
            sampler_samples: 1200,
            sampler_epochs: 900,
            classifier_samples_per_class: 800,
            classifier_epochs: 400,
            alpha: 0.05,
        }
    }
}

/// All trials of one policy variant on one world.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialBatch {
    pub kind: WorldKind,
    pub mode: PolicyMode,
    /// Row label, `MODE/kind`.
    pub label: String,
    pub trials: Vec<TrialResult>,
    /// Trials that errored instead of producing a result: (trial index,
    /// error message). The run continues past them.
    pub failures: Vec<(usize, String)>,
}

/// Everything a benchmark run produces, in memory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchOutput {
    pub report: BenchReport,
    pub batches: Vec<TrialBatch>,
    /// Final training loss of the trajectory sampler, per world kind.
    pub sampler_final_loss: Vec<(WorldKind, f64)>,
    /// Final training loss of the terrain classifier, per world kind.
    pub classifier_final_loss: Vec<(WorldKind, f64)>,
}

fn kind_index(kind: WorldKind) -> u64 {
    match kind {
        WorldKind::Structured => 0,
        WorldKind::Unstructured => 1,
    }
}

fn world_size(config: &BenchConfig, kind: WorldKind) -> usize {
    match kind {
        WorldKind::Structured => config.structured_size,
        WorldKind::Unstructured => config.unstructured_size,
    }
}

/// Run the whole benchmark. `progress` receives one human-readable line per
/// completed stage. Results are independent of thread count: every trial
/// derives its randomness from the master seed and its own index.
pub fn run_benchmark(
    config: &BenchConfig,
    mut progress: impl FnMut(&str),
) -> Result<BenchOutput, BenchError> {
    let mut batches = Vec::new();
    let mut sampler_final_loss = Vec::new();
    let mut classifier_final_loss = Vec::new();

    for &kind in &config.kinds {
        let k = kind_index(kind);
        let world_seed = seed::derive(config.master_seed, stage::BENCH_WORLD, k);
        let world = generate_world(kind, world_size(config, kind), world_seed)?;
        progress(&format!(
            "generated {kind} world ({} nodes, route {} hops)",
            world.graph.len(),
            world.route_nodes.len()
        ));

        let needs_sampler = config.modes.iter().any(|m| m.uses_sampler());
        let needs_map = config.modes.iter().any(|m| m.uses_map());

        let policy_template = PolicyConfig::new(PolicyMode::LpGp);
        let predictor = if needs_sampler {
            let dataset = local_planner_dataset(&world, config.sampler_samples, 0)?;
            let (predictor, losses) = train_noise_predictor(
                &dataset,
                &policy_template.schedule,
                config.sampler_epochs,
                seed::derive(config.master_seed, stage::TRAIN_LP, k),
            )?;
            let final_loss = losses.last().copied().unwrap_or(f64::NAN);
            sampler_final_loss.push((kind, final_loss));
            progress(&format!(
                "trained trajectory sampler on {} snippets ({} epochs, final loss {final_loss:.4})",
                dataset.len(),
                config.sampler_epochs
            ));
            Some(predictor)
        } else {
            None
        };

        let traversability_map = if needs_map {
            let dataset = traversability_dataset(&world, config.classifier_samples_per_class, 0)?;
            let (model, losses) = train_traversability(
                &dataset,
                &FocalLossParams::default(),
                config.classifier_epochs,
                seed::derive(config.master_seed, stage::TRAIN_GP, k),
            )?;
            let final_loss = losses.last().copied().unwrap_or(f64::NAN);
            classifier_final_loss.push((kind, final_loss));
            let map = predict_map(&model, &world.features)?;
            progress(&format!(
                "trained terrain classifier on {} cells and scored the map (final loss {final_loss:.4})",
                dataset.len()
            ));
            Some(map)
        } else {
            None
        };

        for &mode in &config.modes {
            let batch = run_batch(
                config,
                &world,
                mode,
                predictor.as_ref(),
                traversability_map.as_ref(),
            );
            progress(&format!(
                "{}: {} trials, {} completed, {} interventions total",
                batch.label,
                batch.trials.len(),
                batch.trials.iter().filter(|t| t.reached_goal).count(),
                batch.trials.iter().map(|t| t.interventions).sum::<u32>()
            ));
            batches.push(batch);
        }
    }

    Ok(BenchOutput {
        report: report_from_batches(&batches, config.alpha)?,
        batches,
        sampler_final_loss,
        classifier_final_loss,
    })
}

/// Build the metric table and pairwise tests from recorded batches. Batches
/// are grouped by world kind (first-appearance order); comparisons pair each
/// batch with every later batch of the same kind.
pub fn report_from_batches(
    batches: &[TrialBatch],
    alpha: f64,
) -> Result<BenchReport, MetricError> {
    let mut kinds = Vec::new();
    for batch in batches {
        if !kinds.contains(&batch.kind) {
            kinds.push(batch.kind);
        }
    }
    let mut summaries = Vec::new();
    let mut comparisons = Vec::new();
    for &kind in &kinds {
        let kind_batches: Vec<&TrialBatch> =
            batches.iter().filter(|b| b.kind == kind).collect();
        for batch in &kind_batches {
            summaries.push(summarize(batch.label.clone(), &batch.trials)?);
        }
        for i in 0..kind_batches.len() {
            for j in (i + 1)..kind_batches.len() {
                comparisons.extend(compare_batches(kind_batches[i], kind_batches[j], alpha));
            }
        }
    }
    Ok(build_report(summaries, comparisons))
}

fn run_batch(
    config: &BenchConfig,
    world: &World,
    mode: PolicyMode,
    predictor: Option<&crate::diffusion::MlpNoisePredictor>,
    traversability_map: Option<&crate::raster::ProbabilityRaster>,
) -> TrialBatch {
    let mut policy = PolicyConfig::new(mode);
    policy.instruction = Some(world.instruction.clone());
    let assets = TrialAssets {
        noise_predictor: if mode.uses_sampler() { predictor } else { None },
        traversability_map: if mode.uses_map() { traversability_map } else { None },
    };
    let outcomes: Vec<Result<TrialResult, SimError>> = (0..config.trials)
        .into_par_iter()
        .map(|i| run_trial(world, &policy, &assets, i as u64))
        .collect();
    let mut trials = Vec::with_capacity(config.trials);
    let mut failures = Vec::new();
    for (i, outcome) in outcomes.into_iter().enumerate() {
        match outcome {
            Ok(t) => trials.push(t),
            Err(e) => failures.push((i, e.to_string())),
        }
    }
    TrialBatch {
        kind: world.kind,
        mode,
        label: format!("{}/{}", mode.label(), world.kind),
        trials,
        failures,
    }
}

/// Paired comparisons between two batches on the same world: interventions
/// over all shared trials, efficiency and time over trials both variants
/// completed. Tests that cannot run (too few usable pairs, identical
/// samples) yield rows with no p-value.
fn compare_batches(a: &TrialBatch, b: &TrialBatch, alpha: f64) -> Vec<ComparisonRow> {
    let paired = a.trials.len().min(b.trials.len());
    let ic_a: Vec<f64> = a.trials[..paired].iter().map(|t| f64::from(t.interventions)).collect();
    let ic_b: Vec<f64> = b.trials[..paired].iter().map(|t| f64::from(t.interventions)).collect();

    let mut rows = Vec::new();
    rows.push(ComparisonRow::new(
        &a.label,
        &b.label,
        "IC",
        wilcoxon_signed_rank(&ic_a, &ic_b, alpha).ok(),
    ));

    for (metric, value) in [
        ("PE", pick_efficiency as fn(&TrialResult) -> Option<f64>),
        ("ET", pick_time as fn(&TrialResult) -> Option<f64>),
    ] {
        let mut xs = Vec::new();
        let mut ys = Vec::new();
        for (ta, tb) in a.trials[..paired].iter().zip(&b.trials[..paired]) {
            if let (Some(x), Some(y)) = (value(ta), value(tb)) {
                xs.push(x);
                ys.push(y);
            }
        }
        rows.push(ComparisonRow::new(
            &a.label,
            &b.label,
            metric,
            wilcoxon_signed_rank(&xs, &ys, alpha).ok(),
        ));
    }
    rows
}

fn pick_efficiency(t: &TrialResult) -> Option<f64> {
    crate::metrics::path_efficiency(t).ok()
}

fn pick_time(t: &TrialResult) -> Option<f64> {
    crate::metrics::execution_time(t).ok()
}

#[cfg(test)]
mod tests {
    use super::*;

    /// A miniature configuration that exercises the full pipeline quickly:
    /// small worlds, few trials, light training.
    pub(crate) fn tiny_config() -> BenchConfig {
        BenchConfig {
            master_seed: 7,
            trials: 3,
            modes: vec![PolicyMode::GpOnly, PolicyMode::LpGp],
            kinds: vec![WorldKind::Structured],
            structured_size: 200,
            unstructured_size: 200,
            sampler_samples: 120,
            sampler_epochs: 150,
            classifier_samples_per_class: 150,
            classifier_epochs: 120,
            alpha: 0.05,
        }
    }

    #[test]
    fn pipeline_produces_paired_batches_and_a_report() {
        let config = tiny_config();
        let out = run_benchmark(&config, |_| {}).unwrap();
        assert_eq!(out.batches.len(), 2);
        for batch in &out.batches {
            assert_eq!(batch.trials.len(), 3);
            assert!(batch.failures.is_empty(), "{:?}", batch.failures);
        }
        assert_eq!(out.report.summaries.len(), 2);
        // one batch pair × three metrics
        assert_eq!(out.report.comparisons.len(), 3);
        let csv = out.report.metrics_csv();
        assert!(csv.contains("GP_ONLY/structured"));
        assert!(csv.contains("LP_GP/structured"));
    }

    #[test]
    fn pipeline_is_deterministic() {
        let config = tiny_config();
        let a = run_benchmark(&config, |_| {}).unwrap();
        let b = run_benchmark(&config, |_| {}).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    #[ignore = "diagnostic printout for tuning, asserts nothing beyond success"]
    fn pipeline_stage_timings() {
        let config = tiny_config();
        let t0 = std::time::Instant::now();
        let mut last = t0;
        run_benchmark(&config, |line| {
            let now = std::time::Instant::now();
            println!("[{:6.2}s +{:5.2}s] {line}", (now - t0).as_secs_f64(), (now - last).as_secs_f64());
            last = now;
        })
        .unwrap();
        println!("total {:.2}s", t0.elapsed().as_secs_f64());
    }

    #[test]
    #[ignore = "diagnostic printout for tuning, asserts nothing beyond success"]
    fn trial_failure_diagnostics() {
        use crate::seed::{self, stage};
        let world_seed = seed::derive(7, stage::BENCH_WORLD, 0);
        let world = generate_world(WorldKind::Structured, 200, world_seed).unwrap();
        println!(
            "world: {} nodes, route {} hops, {} obstacles, instruction {:?}",
            world.graph.len(),
            world.route_nodes.len(),
            world.obstacles.len(),
            world.instruction
        );
        let mut policy = PolicyConfig::new(PolicyMode::GpOnly);
        policy.instruction = Some(world.instruction.clone());
        let assets = TrialAssets {
            noise_predictor: None,
            traversability_map: Some(&world.traversable),
        };
        let r = run_trial(&world, &policy, &assets, 0).unwrap();
        println!(
            "GP_ONLY truth-map: reached={} interventions={} time={:.0}s actual={:.0}m optimal={:.0}m",
            r.reached_goal, r.interventions, r.sim_time, r.actual_path_length, r.optimal_path_length
        );
        let mut by_cause = std::collections::BTreeMap::new();
        for e in &r.events {
            if let Some(c) = &e.intervention_cause {
                *by_cause.entry(format!("{c:?}")).or_insert(0usize) += 1;
            }
        }
        println!("causes: {by_cause:?}");
        println!("planned_route: {:?}", r.planned_route);
        for id in &r.planned_route {
            let n = world.graph.node(*id).unwrap();
            println!("  node {id} at ({:.1},{:.1}) tag {:?}", n.pose.x, n.pose.y, world.node_tags.get(id));
        }
        for e in r.events.iter().take(30) {
            println!(
                "  t={:7.2} pose=({:7.3},{:7.3}) sel={} score={:9.3} cause={:?}",
                e.t, e.pose.x, e.pose.y, e.selected_candidate, e.score, e.intervention_cause
            );
        }
        println!("spawn=({:.1},{:.1}) goal=({:.1},{:.1})", world.spawn.x, world.spawn.y, world.goal.x, world.goal.y);
    }

    #[test]
    #[ignore = "full-scale run for tuning; prints the complete report"]
    fn full_benchmark_probe() {
        let config = BenchConfig::default();
        let t0 = std::time::Instant::now();
        let out = run_benchmark(&config, |line| {
            println!("[{:7.1}s] {line}", t0.elapsed().as_secs_f64());
        })
        .unwrap();
        println!("\n{}", out.report.text_table());
        println!("total {:.1}s", t0.elapsed().as_secs_f64());
    }

    #[test]
    fn pipeline_is_thread_count_independent() {
        let config = tiny_config();
        let one = rayon::ThreadPoolBuilder::new()
            .num_threads(1)
            .build()
            .unwrap()
            .install(|| run_benchmark(&config, |_| {}))
            .unwrap();
        let four = rayon::ThreadPoolBuilder::new()
            .num_threads(4)
            .build()
            .unwrap()
            .install(|| run_benchmark(&config, |_| {}))
            .unwrap();
        assert_eq!(one, four);
    }
}
