//! Per-cell traversability classifier: a logistic model over terrain feature
//! channels, trained by minimizing a focal loss so rare hard negatives are
//! not drowned out by the easy majority class.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::opt;
use crate::raster::{FeatureRaster, ProbabilityRaster};

use super::TraversabilityError;

/// Probabilities are clamped this far away from 0 and 1 so log terms stay
/// finite.
pub(super) const PROB_CLAMP: f64 = 1e-7;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FocalLossParams {
    /// Overall loss scale.
    pub lambda: f64,
    /// Focusing exponent; 0 recovers plain negative log-likelihood.
    pub gamma: f64,
}

impl Default for FocalLossParams {
    fn default() -> Self {
        Self {
            lambda: 3.0,
            gamma: 2.0,
        }
    }
}

/// One training cell: terrain feature values and whether a demonstration
/// trajectory traversed it.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct TrainSample {
    pub features: Vec<f64>,
    pub traversed: bool,
}

/// −λ·(1−p_t)^γ·log(p_t) with p_t = p for traversed cells and 1−p otherwise;
/// p is clamped to [1e-7, 1−1e-7] first.
pub fn focal_loss(p: f64, traversed: bool, params: &FocalLossParams) -> f64 {
    let p = p.clamp(PROB_CLAMP, 1.0 - PROB_CLAMP);
    let p_t = if traversed { p } else { 1.0 - p };
    -params.lambda * (1.0 - p_t).powf(params.gamma) * p_t.ln()
}

/// Analytic d(focal_loss)/dp, the chain-rule hook for trainers. Zero in the
/// clamped region, matching the clamp in [`focal_loss`].
pub fn focal_loss_dp(p: f64, traversed: bool, params: &FocalLossParams) -> f64 {
    if p <= PROB_CLAMP || p >= 1.0 - PROB_CLAMP {
        return 0.0;
    }
    let p_t = if traversed { p } else { 1.0 - p };
    // d/dp_t of −λ(1−p_t)^γ ln p_t; the γ-term vanishes identically at γ=0
    let mut d = -params.lambda * (1.0 - p_t).powf(params.gamma) / p_t;
    if params.gamma != 0.0 {
        d += params.lambda
            * params.gamma
            * (1.0 - p_t).powf(params.gamma - 1.0)
            * p_t.ln();
    }
    if traversed {
        d
    } else {
        -d
    }
}

/// Logistic per-cell classifier: p = σ(w·features + b), clamped away from
/// {0,1}.
#[derive(Debug, Clone, PartialEq)]
pub struct TraversabilityModel {
    weights: Vec<f64>,
    bias: f64,
}

impl TraversabilityModel {
    pub fn new(weights: Vec<f64>, bias: f64) -> Self {
        Self { weights, bias }
    }

    pub fn feature_dim(&self) -> usize {
        self.weights.len()
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn bias(&self) -> f64 {
        self.bias
    }

    pub fn predict(&self, features: &[f64]) -> Result<f64, TraversabilityError> {
        if features.len() != self.weights.len() {
            return Err(TraversabilityError::FeatureDimMismatch {
                expected: self.weights.len(),
                got: features.len(),
            });
        }
        let z: f64 = self
            .weights
            .iter()
            .zip(features)
            .map(|(w, f)| w * f)
            .sum::<f64>()
            + self.bias;
        Ok(sigmoid(z).clamp(PROB_CLAMP, 1.0 - PROB_CLAMP))
    }
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Fits the logistic model by deterministic full-batch minimization of the
/// mean focal loss, starting from a small seeded random init. Returns the
/// model and the per-epoch loss curve (for the training log). The dataset
/// must contain both classes.
pub fn train_traversability(
    samples: &[TrainSample],
    params: &FocalLossParams,
    epochs: usize,
    seed: u64,
) -> Result<(TraversabilityModel, Vec<f64>), TraversabilityError> {
    if samples.iter().all(|s| s.traversed) || samples.iter().all(|s| !s.traversed) {
        return Err(TraversabilityError::DegenerateDataset);
    }
    let dim = samples[0].features.len();
    for s in samples {
        if s.features.len() != dim {
            return Err(TraversabilityError::FeatureDimMismatch {
                expected: dim,
                got: s.features.len(),
            });
        }
        if s.features.iter().any(|f| !f.is_finite()) {
            return Err(TraversabilityError::NonFiniteFeature);
        }
    }

    let n = samples.len() as f64;
    let mean_loss = |theta: &[f64]| -> f64 {
        let model = TraversabilityModel::new(theta[..dim].to_vec(), theta[dim]);
        samples
            .iter()
            .map(|s| focal_loss(model.predict(&s.features).unwrap(), s.traversed, params))
            .sum::<f64>()
            / n
    };
    let loss_and_grad = |theta: &[f64]| -> (f64, Vec<f64>) {
        let model = TraversabilityModel::new(theta[..dim].to_vec(), theta[dim]);
        let mut loss = 0.0;
        let mut grad = vec![0.0; dim + 1];
        for s in samples {
            let p = model.predict(&s.features).unwrap();
            loss += focal_loss(p, s.traversed, params);
            // dL/dz = dL/dp · σ'(z), with σ'(z) = p(1−p)
            let dz = focal_loss_dp(p, s.traversed, params) * p * (1.0 - p);
            for (g, f) in grad.iter_mut().zip(&s.features) {
                *g += dz * f;
            }
            grad[dim] += dz;
        }
        for g in &mut grad {
            *g /= n;
        }
        (loss / n, grad)
    };

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let init: Vec<f64> = (0..dim + 1)
        .map(|_| {
            let v: f64 = StandardNormal.sample(&mut rng);
            0.01 * v
        })
        .collect();
    let fit = opt::minimize_adam(init, epochs, loss_and_grad, mean_loss);
    let model = TraversabilityModel::new(fit.params[..dim].to_vec(), fit.params[dim]);
    Ok((model, fit.losses))
}

/// Applies the model to every cell of a feature raster. The output shares
/// the input's georeference; values land strictly inside (0,1) thanks to the
/// model clamp.
pub fn predict_map(
    model: &TraversabilityModel,
    features: &FeatureRaster,
) -> Result<ProbabilityRaster, TraversabilityError> {
    if features.channels() != model.feature_dim() {
        return Err(TraversabilityError::FeatureDimMismatch {
            expected: model.feature_dim(),
            got: features.channels(),
        });
    }
    let georef = *features.georef();
    let mut cells = Vec::with_capacity(georef.cell_count());
    let mut row_features = vec![0.0f64; features.channels()];
    for row in 0..georef.height {
        for col in 0..georef.width {
            for (dst, src) in row_features.iter_mut().zip(features.features_at(row, col)) {
                *dst = f64::from(*src);
            }
            cells.push(model.predict(&row_features)? as f32);
        }
    }
    Ok(ProbabilityRaster::new(georef, cells).expect("clamped probabilities are valid cells"))
}
