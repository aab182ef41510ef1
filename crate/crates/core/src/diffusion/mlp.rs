//! Small fully-connected network: tanh hidden layers, linear output, batched
//! forward pass and mean-squared-error backprop over flattened parameters.

use ndarray::{Array1, Array2, Axis};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    sizes: Vec<usize>,
    weights: Vec<Array2<f64>>, // (out, in)
    biases: Vec<Array1<f64>>,
}

impl Mlp {
    /// Xavier-uniform initialization from a seeded stream.
    pub fn init(sizes: &[usize], rng: &mut ChaCha8Rng) -> Self {
        assert!(sizes.len() >= 2, "need at least input and output sizes");
        let mut weights = Vec::new();
        let mut biases = Vec::new();
        for pair in sizes.windows(2) {
            let (fan_in, fan_out) = (pair[0], pair[1]);
            let bound = 1.0 / (fan_in as f64).sqrt();
            let w = Array2::from_shape_fn((fan_out, fan_in), |_| rng.gen_range(-bound..bound));
            weights.push(w);
            biases.push(Array1::zeros(fan_out));
        }
        Self {
            sizes: sizes.to_vec(),
            weights,
            biases,
        }
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn input_dim(&self) -> usize {
        self.sizes[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.sizes.last().unwrap()
    }

    pub fn forward(&self, x: &[f64]) -> Vec<f64> {
        let batch = Array2::from_shape_vec((1, x.len()), x.to_vec()).unwrap();
        self.forward_batch(&batch).row(0).to_vec()
    }

    /// X is (batch, input_dim); returns (batch, output_dim).
    pub fn forward_batch(&self, x: &Array2<f64>) -> Array2<f64> {
        let mut h = x.clone();
        let last = self.weights.len() - 1;
        for (l, (w, b)) in self.weights.iter().zip(&self.biases).enumerate() {
            let mut z = h.dot(&w.t());
            z += b;
            h = if l < last { z.mapv(f64::tanh) } else { z };
        }
        h
    }

    /// Mean over batch and output dims of (prediction − target)².
    pub fn mse_loss(&self, x: &Array2<f64>, y: &Array2<f64>) -> f64 {
        let diff = self.forward_batch(x) - y;
        diff.mapv(|d| d * d).mean().unwrap()
    }

    /// Loss plus its gradient w.r.t. the flattened parameters.
    pub fn mse_loss_grad(&self, x: &Array2<f64>, y: &Array2<f64>) -> (f64, Vec<f64>) {
        let last = self.weights.len() - 1;
        // forward, keeping activations
        let mut activations = vec![x.clone()];
        for (l, (w, b)) in self.weights.iter().zip(&self.biases).enumerate() {
            let mut z = activations[l].dot(&w.t());
            z += b;
            activations.push(if l < last { z.mapv(f64::tanh) } else { z });
        }
        let output = activations.last().unwrap();
        let scale = 1.0 / (output.len() as f64);
        let diff = output - y;
        let loss = diff.mapv(|d| d * d).sum() * scale;

        // backward
        let mut delta = diff.mapv(|d| 2.0 * d * scale);
        let mut w_grads = vec![Array2::zeros((0, 0)); self.weights.len()];
        let mut b_grads = vec![Array1::zeros(0); self.biases.len()];
        for l in (0..self.weights.len()).rev() {
            w_grads[l] = delta.t().dot(&activations[l]);
            b_grads[l] = delta.sum_axis(Axis(0));
            if l > 0 {
                let upstream = delta.dot(&self.weights[l]);
                // activations[l] is tanh output of layer l-1's affine map
                delta = upstream * activations[l].mapv(|h| 1.0 - h * h);
            }
        }
        let mut flat = Vec::with_capacity(self.param_count());
        for (w, b) in w_grads.iter().zip(&b_grads) {
            flat.extend(w.iter());
            flat.extend(b.iter());
        }
        (loss, flat)
    }

    pub fn param_count(&self) -> usize {
        self.sizes
            .windows(2)
            .map(|p| p[0] * p[1] + p[1])
            .sum()
    }

    pub fn to_flat(&self) -> Vec<f64> {
        let mut flat = Vec::with_capacity(self.param_count());
        for (w, b) in self.weights.iter().zip(&self.biases) {
            flat.extend(w.iter());
            flat.extend(b.iter());
        }
        flat
    }

    pub fn from_flat(sizes: &[usize], flat: &[f64]) -> Self {
        let mut weights = Vec::new();
        let mut biases = Vec::new();
        let mut offset = 0;
        for pair in sizes.windows(2) {
            let (fan_in, fan_out) = (pair[0], pair[1]);
            let w_len = fan_in * fan_out;
            let w = Array2::from_shape_vec(
                (fan_out, fan_in),
                flat[offset..offset + w_len].to_vec(),
            )
            .unwrap();
            offset += w_len;
            let b = Array1::from_vec(flat[offset..offset + fan_out].to_vec());
            offset += fan_out;
            weights.push(w);
            biases.push(b);
        }
        assert_eq!(offset, flat.len(), "parameter count mismatch");
        Self {
            sizes: sizes.to_vec(),
            weights,
            biases,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    #[test]
    fn flat_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mlp = Mlp::init(&[4, 6, 2], &mut rng);
        let rebuilt = Mlp::from_flat(mlp.sizes(), &mlp.to_flat());
        assert_eq!(mlp, rebuilt);
    }

    #[test]
    fn backprop_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let mlp = Mlp::init(&[3, 5, 2], &mut rng);
        let x = Array2::from_shape_fn((4, 3), |_| rng.gen_range(-1.0..1.0));
        let y = Array2::from_shape_fn((4, 2), |_| rng.gen_range(-1.0..1.0));
        let (_, grad) = mlp.mse_loss_grad(&x, &y);
        let flat = mlp.to_flat();
        let h = 1e-6;
        for i in 0..flat.len() {
            let mut plus = flat.clone();
            plus[i] += h;
            let mut minus = flat.clone();
            minus[i] -= h;
            let l_plus = Mlp::from_flat(mlp.sizes(), &plus).mse_loss(&x, &y);
            let l_minus = Mlp::from_flat(mlp.sizes(), &minus).mse_loss(&x, &y);
            let fd = (l_plus - l_minus) / (2.0 * h);
            let denom = fd.abs().max(grad[i].abs()).max(1e-8);
            assert!(
                ((grad[i] - fd) / denom).abs() < 1e-5,
                "param {i}: analytic {} vs fd {}",
                grad[i],
                fd
            );
        }
    }

    #[test]
    fn init_is_seeded() {
        let a = Mlp::init(&[4, 8, 2], &mut ChaCha8Rng::seed_from_u64(5));
        let b = Mlp::init(&[4, 8, 2], &mut ChaCha8Rng::seed_from_u64(5));
        assert_eq!(a, b);
    }
}
