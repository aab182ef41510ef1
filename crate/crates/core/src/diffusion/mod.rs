//! Diffusion-based local trajectory proposals: a DDPM noise schedule, the
//! reverse-diffusion update, K-candidate generation from seeded noise, and
//! training of the conditional noise-prediction network.
//!
//! Trajectories are short robot-centric waypoint sequences (axis-aligned
//! offsets in meters from the robot's position), matching the local planner's
//! few-meter perceptual horizon.

mod io;
mod mlp;
mod synthetic;
mod train;

pub use io::{load_dataset, load_predictor, save_dataset, save_predictor};
pub use mlp::Mlp;
pub use synthetic::straight_line_dataset;
pub use train::{train_noise_predictor, MlpNoisePredictor};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geom::WorldPoint;

#[derive(Debug, Error)]
pub enum DiffusionError {
    #[error("invalid schedule: {0}")]
    InvalidSchedule(String),
    #[error("trajectory shapes disagree: {expected} vs {got} waypoints")]
    ShapeMismatch { expected: usize, got: usize },
    #[error("step {t} outside 1..={t_max}")]
    StepOutOfRange { t: usize, t_max: usize },
    #[error("training dataset is empty")]
    EmptyDataset,
    #[error("noise predictor returned a non-finite value")]
    NonFinitePrediction,
    #[error("malformed checkpoint: {0}")]
    MalformedCheckpoint(String),
    #[error("malformed dataset line {line}: {message}")]
    MalformedDataset { line: usize, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Ordered waypoint offsets (meters) in the robot-centric frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub waypoints: Vec<[f64; 2]>,
}

impl Trajectory {
    pub fn zeros(n: usize) -> Self {
        Self {
            waypoints: vec![[0.0, 0.0]; n],
        }
    }

    pub fn len(&self) -> usize {
        self.waypoints.len()
    }

    pub fn is_empty(&self) -> bool {
        self.waypoints.is_empty()
    }

    pub fn is_finite(&self) -> bool {
        self.waypoints
            .iter()
            .all(|w| w[0].is_finite() && w[1].is_finite())
    }

    pub fn flatten(&self) -> Vec<f64> {
        self.waypoints.iter().flat_map(|w| [w[0], w[1]]).collect()
    }

    pub fn from_flat(values: &[f64]) -> Self {
        assert!(values.len() % 2 == 0, "flat trajectory needs x,y pairs");
        Self {
            waypoints: values.chunks_exact(2).map(|c| [c[0], c[1]]).collect(),
        }
    }

    /// Offsets translated into world coordinates around `origin`.
    pub fn to_world(&self, origin: &WorldPoint) -> Vec<WorldPoint> {
        self.waypoints
            .iter()
            .map(|w| WorldPoint::new(origin.x + w[0], origin.y + w[1]))
            .collect()
    }
}

/// DDPM schedule: per-step beta with the derived alpha, running alpha
/// product, and reverse-step noise scale. All accessors are 1-indexed to
/// match the step convention t = 1..=T.
#[derive(Debug, Clone, PartialEq)]
pub struct SchedulerParams {
    beta: Vec<f64>,
    alpha: Vec<f64>,
    alpha_bar: Vec<f64>,
    sigma: Vec<f64>,
}

impl SchedulerParams {
    pub fn t_max(&self) -> usize {
        self.beta.len()
    }

    pub fn beta(&self, t: usize) -> f64 {
        self.beta[t - 1]
    }

    pub fn alpha(&self, t: usize) -> f64 {
        self.alpha[t - 1]
    }

    pub fn alpha_bar(&self, t: usize) -> f64 {
        self.alpha_bar[t - 1]
    }

    pub fn sigma(&self, t: usize) -> f64 {
        self.sigma[t - 1]
    }

    /// Copy with every reverse-step noise scale zeroed: sampling becomes the
    /// deterministic mean trajectory of the reverse process.
    pub fn deterministic(mut self) -> Self {
        self.sigma.iter_mut().for_each(|s| *s = 0.0);
        self
    }
}

/// Linear beta schedule from `beta_start` to `beta_end` over `t_count` steps.
pub fn make_schedule(
    t_count: usize,
    beta_start: f64,
    beta_end: f64,
) -> Result<SchedulerParams, DiffusionError> {
    if t_count < 1 {
        return Err(DiffusionError::InvalidSchedule(
            "need at least one step".into(),
        ));
    }
    if !(beta_start > 0.0 && beta_start <= beta_end && beta_end < 1.0) {
        return Err(DiffusionError::InvalidSchedule(format!(
            "need 0 < beta_start <= beta_end < 1, got {beta_start}..{beta_end}"
        )));
    }
    let beta: Vec<f64> = (0..t_count)
        .map(|i| {
            if t_count == 1 {
                beta_start
            } else {
                beta_start + (beta_end - beta_start) * i as f64 / (t_count - 1) as f64
            }
        })
        .collect();
    let alpha: Vec<f64> = beta.iter().map(|b| 1.0 - b).collect();
    let mut alpha_bar = Vec::with_capacity(t_count);
    let mut product = 1.0;
    for &a in &alpha {
        product *= a;
        alpha_bar.push(product);
    }
    let mut sigma = Vec::with_capacity(t_count);
    for t in 0..t_count {
        if t == 0 {
            sigma.push(0.0);
        } else {
            let var = beta[t] * (1.0 - alpha_bar[t - 1]) / (1.0 - alpha_bar[t]);
            sigma.push(var.sqrt());
        }
    }
    Ok(SchedulerParams {
        beta,
        alpha,
        alpha_bar,
        sigma,
    })
}

/// What the noise predictor sees besides the noisy trajectory: a flattened
/// local traversability patch, the offset to the current subgoal, and the
/// pose estimate (kept for provider implementations; the shipped network is
/// pose-free so it transfers across worlds).
#[derive(Debug, Clone, PartialEq)]
pub struct ConditioningContext {
    pub observation_features: Vec<f64>,
    pub goal_offset: [f64; 2],
    pub localization: WorldPoint,
}

pub trait NoisePredictor: Sync {
    fn n_waypoints(&self) -> usize;
    /// Estimate of the noise present in `noisy` at step `t`. Must be
    /// deterministic and finite.
    fn predict(&self, noisy: &Trajectory, t: usize, context: &ConditioningContext) -> Trajectory;
}

/// Predicts zero noise everywhere; reverse diffusion then only rescales.
#[derive(Debug, Clone)]
pub struct ZeroPredictor {
    pub n_waypoints: usize,
}

impl NoisePredictor for ZeroPredictor {
    fn n_waypoints(&self) -> usize {
        self.n_waypoints
    }

    fn predict(&self, _: &Trajectory, _: usize, _: &ConditioningContext) -> Trajectory {
        Trajectory::zeros(self.n_waypoints)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CandidateSet {
    pub candidates: Vec<Trajectory>,
    pub rng_seed: u64,
}

/// One reverse-diffusion update:
/// A_{t-1} = (A_t − beta_t/sqrt(1−alpha_bar_t) · n_pred) / sqrt(alpha_t) + sigma_t · z
pub fn denoise_step(
    a_t: &Trajectory,
    t: usize,
    n_pred: &Trajectory,
    params: &SchedulerParams,
    z: &Trajectory,
) -> Result<Trajectory, DiffusionError> {
    if t < 1 || t > params.t_max() {
        return Err(DiffusionError::StepOutOfRange {
            t,
            t_max: params.t_max(),
        });
    }
    for other in [n_pred, z] {
        if other.len() != a_t.len() {
            return Err(DiffusionError::ShapeMismatch {
                expected: a_t.len(),
                got: other.len(),
            });
        }
    }
    let noise_coef = params.beta(t) / (1.0 - params.alpha_bar(t)).sqrt();
    let scale = 1.0 / params.alpha(t).sqrt();
    let sigma = params.sigma(t);
    let waypoints = a_t
        .waypoints
        .iter()
        .zip(&n_pred.waypoints)
        .zip(&z.waypoints)
        .map(|((a, n), z)| {
            [
                scale * (a[0] - noise_coef * n[0]) + sigma * z[0],
                scale * (a[1] - noise_coef * n[1]) + sigma * z[1],
            ]
        })
        .collect();
    Ok(Trajectory { waypoints })
}

fn gaussian_trajectory(rng: &mut ChaCha8Rng, n: usize) -> Trajectory {
    let waypoints = (0..n)
        .map(|_| {
            [
                StandardNormal.sample(rng),
                StandardNormal.sample(rng),
            ]
        })
        .collect();
    Trajectory { waypoints }
}

/// Runs K independent reverse-diffusion chains from seeded Gaussian noise.
/// Chain k draws from stream k of the seed, so the result is bit-identical
/// whether chains run sequentially or concurrently.
pub fn generate_candidates(
    predictor: &dyn NoisePredictor,
    context: &ConditioningContext,
    params: &SchedulerParams,
    k: usize,
    seed: u64,
) -> Result<CandidateSet, DiffusionError> {
    assert!(k >= 1, "need at least one candidate");
    let n = predictor.n_waypoints();
    let zero = Trajectory::zeros(n);
    let mut candidates = Vec::with_capacity(k);
    for chain in 0..k {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(chain as u64);
        let mut a = gaussian_trajectory(&mut rng, n);
        for t in (1..=params.t_max()).rev() {
            let n_pred = predictor.predict(&a, t, context);
            if !n_pred.is_finite() {
                return Err(DiffusionError::NonFinitePrediction);
            }
            let z = if t > 1 {
                gaussian_trajectory(&mut rng, n)
            } else {
                zero.clone()
            };
            a = denoise_step(&a, t, &n_pred, params, &z)?;
        }
        candidates.push(a);
    }
    Ok(CandidateSet {
        candidates,
        rng_seed: seed,
    })
}
