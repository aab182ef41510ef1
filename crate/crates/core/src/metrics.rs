//! Per-trial benchmark metrics and per-method aggregation.
//!
//! Three numbers summarize a navigation policy: how often a human had to
//! step in (interventions per trial), how much longer than necessary the
//! driven path was (path efficiency), and how long the task took
//! (execution time). Efficiency and time are only meaningful for trials
//! that reached the goal; the aggregate keeps the raw per-trial vectors so
//! paired significance tests can run on them afterwards.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::sim::TrialResult;

#[derive(Debug, Error, PartialEq)]
pub enum MetricError {
    #[error("no trials to aggregate")]
    EmptyTrials,
    #[error("trial did not reach the goal")]
    DidNotReachGoal,
    #[error("optimal path length must be positive")]
    ZeroOptimal,
}

/// Mean interventions per trial over a batch. Defined for every trial,
/// finished or not.
pub fn intervention_count(trials: &[TrialResult]) -> Result<f64, MetricError> {
    if trials.is_empty() {
        return Err(MetricError::EmptyTrials);
    }
    let total: u32 = trials.iter().map(|t| t.interventions).sum();
    Ok(f64::from(total) / trials.len() as f64)
}

/// Driven length over shortest traversable length, for a trial that reached
/// the goal. Never below 1 up to float noise, because the optimal length is
/// a true lower bound.
pub fn path_efficiency(trial: &TrialResult) -> Result<f64, MetricError> {
    if !trial.reached_goal {
        return Err(MetricError::DidNotReachGoal);
    }
    if trial.optimal_path_length <= 0.0 {
        return Err(MetricError::ZeroOptimal);
    }
    Ok(trial.actual_path_length / trial.optimal_path_length)
}

/// Simulated seconds to complete the task, including intervention
/// penalties, for a trial that reached the goal.
pub fn execution_time(trial: &TrialResult) -> Result<f64, MetricError> {
    if !trial.reached_goal {
        return Err(MetricError::DidNotReachGoal);
    }
    Ok(trial.sim_time)
}

/// One benchmark-table row: a method label with its three aggregate metrics
/// and the per-trial vectors they were computed from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricSummary {
    pub method: String,
    /// Mean interventions per trial (IC), over all trials.
    pub interventions: f64,
    /// Mean path efficiency (PE) over goal-reaching trials; `None` when no
    /// trial finished.
    pub path_efficiency: Option<f64>,
    /// Mean execution time in seconds (ET) over goal-reaching trials;
    /// `None` when no trial finished.
    pub execution_time: Option<f64>,
    /// Trials that reached the goal, out of `trials`.
    pub completed: usize,
    pub trials: usize,
    /// Interventions per trial, aligned with the trial order.
    pub per_trial_interventions: Vec<f64>,
    /// Path efficiency per trial; `None` where the goal was not reached.
    pub per_trial_efficiency: Vec<Option<f64>>,
    /// Execution time per trial; `None` where the goal was not reached.
    pub per_trial_time: Vec<Option<f64>>,
}

/// Aggregate a method's trial batch into one table row.
pub fn summarize(method: impl Into<String>, trials: &[TrialResult]) -> Result<MetricSummary, MetricError> {
    let interventions = intervention_count(trials)?;
    let per_trial_interventions: Vec<f64> =
        trials.iter().map(|t| f64::from(t.interventions)).collect();
    let per_trial_efficiency: Vec<Option<f64>> =
        trials.iter().map(|t| path_efficiency(t).ok()).collect();
    let per_trial_time: Vec<Option<f64>> =
        trials.iter().map(|t| execution_time(t).ok()).collect();
    let completed = per_trial_time.iter().flatten().count();
    Ok(MetricSummary {
        method: method.into(),
        interventions,
        path_efficiency: mean_present(&per_trial_efficiency),
        execution_time: mean_present(&per_trial_time),
        completed,
        trials: trials.len(),
        per_trial_interventions,
        per_trial_efficiency,
        per_trial_time,
    })
}

fn mean_present(values: &[Option<f64>]) -> Option<f64> {
    let present: Vec<f64> = values.iter().flatten().copied().collect();
    if present.is_empty() {
        None
    } else {
        Some(present.iter().sum::<f64>() / present.len() as f64)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn finished(interventions: u32, actual: f64, optimal: f64, sim_time: f64) -> TrialResult {
        TrialResult {
            interventions,
            actual_path_length: actual,
            optimal_path_length: optimal,
            sim_time,
            reached_goal: true,
            planned_route: vec![0, 1],
            events: Vec::new(),
        }
    }

    fn timed_out(interventions: u32) -> TrialResult {
        TrialResult {
            interventions,
            actual_path_length: 250.0,
            optimal_path_length: 405.0,
            sim_time: 1200.0,
            reached_goal: false,
            planned_route: vec![0, 1],
            events: Vec::new(),
        }
    }

    #[test]
    fn interventions_average_over_all_trials() {
        let quiet: Vec<TrialResult> = (0..4).map(|_| finished(0, 405.0, 405.0, 270.0)).collect();
        assert_eq!(intervention_count(&quiet).unwrap(), 0.0);

        let mixed: Vec<TrialResult> = [1u32, 2, 3]
            .iter()
            .map(|&n| finished(n, 405.0, 405.0, 270.0))
            .collect();
        assert_eq!(intervention_count(&mixed).unwrap(), 2.0);

        // 25 interventions spread over 20 trials
        let mut batch: Vec<TrialResult> = (0..20).map(|_| finished(1, 405.0, 405.0, 270.0)).collect();
        for t in batch.iter_mut().take(5) {
            t.interventions = 2;
        }
        assert_eq!(intervention_count(&batch).unwrap(), 1.25);

        assert_eq!(intervention_count(&[]), Err(MetricError::EmptyTrials));
    }

    #[test]
    fn efficiency_is_actual_over_optimal() {
        assert_eq!(path_efficiency(&finished(0, 405.0, 405.0, 270.0)).unwrap(), 1.0);
        assert!((path_efficiency(&finished(0, 486.0, 405.0, 330.0)).unwrap() - 1.2).abs() < 1e-12);
        assert!((path_efficiency(&finished(0, 409.05, 405.0, 275.0)).unwrap() - 1.01).abs() < 1e-12);
        assert_eq!(
            path_efficiency(&timed_out(3)),
            Err(MetricError::DidNotReachGoal)
        );
        let mut degenerate = finished(0, 10.0, 0.0, 10.0);
        degenerate.optimal_path_length = 0.0;
        assert_eq!(path_efficiency(&degenerate), Err(MetricError::ZeroOptimal));
    }

    #[test]
    fn execution_time_reports_simulated_seconds() {
        // 2392 quarter-second control steps, no penalties
        assert_eq!(
            execution_time(&finished(0, 405.0, 405.0, 2392.0 * 0.25)).unwrap(),
            598.0
        );
        // two 10 s penalties on top of a 580 s run
        assert_eq!(
            execution_time(&finished(2, 420.0, 405.0, 580.0 + 20.0)).unwrap(),
            600.0
        );
        assert_eq!(
            execution_time(&timed_out(0)),
            Err(MetricError::DidNotReachGoal)
        );
    }

    #[test]
    fn summaries_keep_per_trial_vectors_and_skip_unfinished() {
        let trials = vec![
            finished(1, 405.0, 405.0, 598.0),
            timed_out(4),
            finished(0, 445.5, 405.0, 602.0),
        ];
        let s = summarize("LP_GP/structured", &trials).unwrap();
        assert_eq!(s.trials, 3);
        assert_eq!(s.completed, 2);
        assert!((s.interventions - 5.0 / 3.0).abs() < 1e-12);
        assert!((s.path_efficiency.unwrap() - 1.05).abs() < 1e-12);
        assert!((s.execution_time.unwrap() - 600.0).abs() < 1e-12);
        assert_eq!(s.per_trial_interventions, vec![1.0, 4.0, 0.0]);
        assert_eq!(s.per_trial_efficiency[1], None);
        assert_eq!(s.per_trial_time[0], Some(598.0));
        assert_eq!(summarize("x", &[]), Err(MetricError::EmptyTrials));
    }

    #[test]
    fn all_unfinished_batches_have_no_efficiency_or_time() {
        let trials = vec![timed_out(2), timed_out(7)];
        let s = summarize("GP_ONLY/unstructured", &trials).unwrap();
        assert_eq!(s.completed, 0);
        assert_eq!(s.path_efficiency, None);
        assert_eq!(s.execution_time, None);
        assert!((s.interventions - 4.5).abs() < 1e-12);
    }
}
