//! Epsilon-prediction training. Each sample's expert trajectory is noised at
//! a pre-drawn set of (step, noise) pairs, giving one fixed regression
//! problem; full-batch descent with line search then drives the loss down
//! monotonically and deterministically.

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::mlp::Mlp;
use super::{ConditioningContext, DiffusionError, NoisePredictor, SchedulerParams, Trajectory};
use crate::opt;

const HIDDEN: [usize; 2] = [64, 64];
/// Noised copies drawn per expert sample.
const REPLICAS: usize = 6;

/// Fully-connected noise predictor. Input: the flattened noisy trajectory,
/// the observation patch, the goal offset, and the normalized step t/T,
/// standardized per feature with statistics frozen at training time; the
/// pose estimate is deliberately not an input so predictions transfer across
/// worlds.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpNoisePredictor {
    mlp: Mlp,
    patch_len: usize,
    n_waypoints: usize,
    t_max: usize,
    feature_mean: Vec<f64>,
    feature_scale: Vec<f64>,
}

impl MlpNoisePredictor {
    pub(super) fn from_parts(
        mlp: Mlp,
        patch_len: usize,
        n_waypoints: usize,
        t_max: usize,
        feature_mean: Vec<f64>,
        feature_scale: Vec<f64>,
    ) -> Self {
        Self {
            mlp,
            patch_len,
            n_waypoints,
            t_max,
            feature_mean,
            feature_scale,
        }
    }

    pub(super) fn feature_mean(&self) -> &[f64] {
        &self.feature_mean
    }

    pub(super) fn feature_scale(&self) -> &[f64] {
        &self.feature_scale
    }

    pub fn patch_len(&self) -> usize {
        self.patch_len
    }

    pub fn t_max(&self) -> usize {
        self.t_max
    }

    pub(super) fn mlp(&self) -> &Mlp {
        &self.mlp
    }

    fn input_row(&self, noisy: &Trajectory, t: usize, context: &ConditioningContext) -> Vec<f64> {
        assert_eq!(
            context.observation_features.len(),
            self.patch_len,
            "conditioning patch length does not match the trained network"
        );
        let mut row = noisy.flatten();
        row.extend_from_slice(&context.observation_features);
        row.push(context.goal_offset[0]);
        row.push(context.goal_offset[1]);
        row.push(t as f64 / self.t_max as f64);
        for (i, v) in row.iter_mut().enumerate() {
            *v = (*v - self.feature_mean[i]) / self.feature_scale[i];
        }
        row
    }
}

impl NoisePredictor for MlpNoisePredictor {
    fn n_waypoints(&self) -> usize {
        self.n_waypoints
    }

    fn predict(&self, noisy: &Trajectory, t: usize, context: &ConditioningContext) -> Trajectory {
        assert_eq!(noisy.len(), self.n_waypoints, "trajectory shape mismatch");
        let out = self.mlp.forward(&self.input_row(noisy, t, context));
        Trajectory::from_flat(&out)
    }
}

/// Trains an epsilon predictor on (context, expert trajectory) pairs.
/// Returns the fitted predictor and the per-epoch loss curve.
pub fn train_noise_predictor(
    dataset: &[(ConditioningContext, Trajectory)],
    params: &SchedulerParams,
    epochs: usize,
    seed: u64,
) -> Result<(MlpNoisePredictor, Vec<f64>), DiffusionError> {
    if dataset.is_empty() {
        return Err(DiffusionError::EmptyDataset);
    }
    let n = dataset[0].1.len();
    let patch_len = dataset[0].0.observation_features.len();
    for (context, expert) in dataset {
        if expert.len() != n {
            return Err(DiffusionError::ShapeMismatch {
                expected: n,
                got: expert.len(),
            });
        }
        if context.observation_features.len() != patch_len {
            return Err(DiffusionError::ShapeMismatch {
                expected: patch_len,
                got: context.observation_features.len(),
            });
        }
    }

    let input_dim = 2 * n + patch_len + 3;
    let output_dim = 2 * n;
    let t_max = params.t_max();

    // stream 0: the fixed noising draws; stream 1: weight initialization
    let mut noise_rng = ChaCha8Rng::seed_from_u64(seed);
    noise_rng.set_stream(0);
    let rows = dataset.len() * REPLICAS;
    let mut x = Array2::zeros((rows, input_dim));
    let mut y = Array2::zeros((rows, output_dim));
    let mut row = 0;
    for (context, expert) in dataset {
        let clean = expert.flatten();
        for _ in 0..REPLICAS {
            let t = noise_rng.gen_range(1..=t_max);
            let a_bar = params.alpha_bar(t);
            let (signal, noise_scale) = (a_bar.sqrt(), (1.0 - a_bar).sqrt());
            let eps: Vec<f64> = (0..output_dim)
                .map(|_| StandardNormal.sample(&mut noise_rng))
                .collect();
            for (c, (&a0, &e)) in clean.iter().zip(&eps).enumerate() {
                x[[row, c]] = signal * a0 + noise_scale * e;
                y[[row, c]] = e;
            }
            for (c, &f) in context.observation_features.iter().enumerate() {
                x[[row, 2 * n + c]] = f;
            }
            x[[row, 2 * n + patch_len]] = context.goal_offset[0];
            x[[row, 2 * n + patch_len + 1]] = context.goal_offset[1];
            x[[row, 2 * n + patch_len + 2]] = t as f64 / t_max as f64;
            row += 1;
        }
    }

    // standardize each input feature; the statistics travel with the model
    let mut feature_mean = vec![0.0; input_dim];
    let mut feature_scale = vec![1.0; input_dim];
    for c in 0..input_dim {
        let col = x.column(c);
        let mean = col.sum() / rows as f64;
        let var = col.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / rows as f64;
        feature_mean[c] = mean;
        // constant columns (e.g. a uniform patch) carry no signal; centering
        // alone already zeroes them, so keep unit scale for stability
        if var.sqrt() > 1e-8 {
            feature_scale[c] = var.sqrt();
        }
    }
    for ((_, c), v) in x.indexed_iter_mut() {
        *v = (*v - feature_mean[c]) / feature_scale[c];
    }

    let mut sizes = vec![input_dim];
    sizes.extend_from_slice(&HIDDEN);
    sizes.push(output_dim);
    let mut init_rng = ChaCha8Rng::seed_from_u64(seed);
    init_rng.set_stream(1);
    let init = Mlp::init(&sizes, &mut init_rng);

    let fit = opt::minimize_adam(
        init.to_flat(),
        epochs,
        |flat| Mlp::from_flat(&sizes, flat).mse_loss_grad(&x, &y),
        |flat| Mlp::from_flat(&sizes, flat).mse_loss(&x, &y),
    );
    let mlp = Mlp::from_flat(&sizes, &fit.params);
    Ok((
        MlpNoisePredictor::from_parts(mlp, patch_len, n, t_max, feature_mean, feature_scale),
        fit.losses,
    ))
}
