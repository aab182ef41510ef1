//! Deterministic full-batch gradient descent with Armijo backtracking.
//!
//! Every epoch takes one descent step whose length is halved until the
//! sufficient-decrease condition holds, so the recorded per-epoch loss is
//! non-increasing by construction and runs are bit-reproducible.

pub struct FitResult {
    pub params: Vec<f64>,
    /// Full-batch loss after each epoch's update.
    pub losses: Vec<f64>,
}

const SUFFICIENT_DECREASE: f64 = 1e-4;
const MAX_BACKTRACKS: usize = 40;

pub fn minimize(
    mut params: Vec<f64>,
    epochs: usize,
    mut loss_and_grad: impl FnMut(&[f64]) -> (f64, Vec<f64>),
    mut loss_only: impl FnMut(&[f64]) -> f64,
) -> FitResult {
    let mut eta: f64 = 0.25;
    let mut losses = Vec::with_capacity(epochs);
    for _ in 0..epochs {
        let (l0, grad) = loss_and_grad(&params);
        let grad_sq: f64 = grad.iter().map(|g| g * g).sum();
        if grad_sq == 0.0 || !grad_sq.is_finite() {
            losses.push(l0);
            continue;
        }
        // start from twice the last accepted step so the length can recover
        let mut step = (eta * 2.0).min(1.0);
        let mut accepted = None;
        for _ in 0..MAX_BACKTRACKS {
            let cand: Vec<f64> = params
                .iter()
                .zip(&grad)
                .map(|(p, g)| p - step * g)
                .collect();
            let l1 = loss_only(&cand);
            if l1.is_finite() && l1 <= l0 - SUFFICIENT_DECREASE * step * grad_sq {
                accepted = Some((cand, l1));
                break;
            }
            step *= 0.5;
        }
        match accepted {
            Some((cand, l1)) => {
                params = cand;
                eta = step;
                losses.push(l1);
            }
            // no acceptable step: keep the current point
            None => losses.push(l0),
        }
    }
    FitResult { params, losses }
}

/// Adam-preconditioned variant of [`minimize`]: the step direction is the
/// bias-corrected first moment divided by the square root of the second, so
/// features of very different magnitudes train at comparable rates. The same
/// backtracking acceptance keeps the per-epoch loss non-increasing and the
/// whole run bit-reproducible (no RNG involved).
pub fn minimize_adam(
    mut params: Vec<f64>,
    epochs: usize,
    mut loss_and_grad: impl FnMut(&[f64]) -> (f64, Vec<f64>),
    mut loss_only: impl FnMut(&[f64]) -> f64,
) -> FitResult {
    const BETA1: f64 = 0.9;
    const BETA2: f64 = 0.999;
    const DAMPING: f64 = 1e-8;
    let dim = params.len();
    let mut m = vec![0.0; dim];
    let mut v = vec![0.0; dim];
    let mut eta: f64 = 0.01;
    let mut losses = Vec::with_capacity(epochs);
    for epoch in 1..=epochs {
        let (l0, grad) = loss_and_grad(&params);
        let grad_sq: f64 = grad.iter().map(|g| g * g).sum();
        if grad_sq == 0.0 || !grad_sq.is_finite() {
            losses.push(l0);
            continue;
        }
        for i in 0..dim {
            m[i] = BETA1 * m[i] + (1.0 - BETA1) * grad[i];
            v[i] = BETA2 * v[i] + (1.0 - BETA2) * grad[i] * grad[i];
        }
        let bc1 = 1.0 - BETA1.powi(epoch as i32);
        let bc2 = 1.0 - BETA2.powi(epoch as i32);
        let mut dir: Vec<f64> = (0..dim)
            .map(|i| (m[i] / bc1) / ((v[i] / bc2).sqrt() + DAMPING))
            .collect();
        // stale momentum can point uphill; fall back to the plain gradient
        let mut slope: f64 = dir.iter().zip(&grad).map(|(d, g)| d * g).sum();
        if slope <= 0.0 || !slope.is_finite() {
            dir = grad.clone();
            slope = grad_sq;
        }
        let mut step = (eta * 2.0).min(1.0);
        let mut accepted = None;
        for _ in 0..MAX_BACKTRACKS {
            let cand: Vec<f64> = params.iter().zip(&dir).map(|(p, d)| p - step * d).collect();
            let l1 = loss_only(&cand);
            if l1.is_finite() && l1 <= l0 - SUFFICIENT_DECREASE * step * slope {
                accepted = Some((cand, l1));
                break;
            }
            step *= 0.5;
        }
        match accepted {
            Some((cand, l1)) => {
                params = cand;
                eta = step;
                losses.push(l1);
            }
            None => losses.push(l0),
        }
    }
    FitResult { params, losses }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn converges_on_quadratic_and_is_monotone() {
        // f(x) = Σ (x_i - i)²
        let target = |x: &[f64]| -> f64 {
            x.iter()
                .enumerate()
                .map(|(i, v)| (v - i as f64).powi(2))
                .sum()
        };
        let grad = |x: &[f64]| -> Vec<f64> {
            x.iter()
                .enumerate()
                .map(|(i, v)| 2.0 * (v - i as f64))
                .collect()
        };
        let result = minimize(
            vec![10.0, -4.0, 7.0],
            60,
            |x| (target(x), grad(x)),
            target,
        );
        for w in result.losses.windows(2) {
            assert!(w[1] <= w[0] + 1e-15);
        }
        assert!(result.losses.last().unwrap() < &1e-8);
        for (i, v) in result.params.iter().enumerate() {
            assert!((v - i as f64).abs() < 1e-4);
        }
    }

    #[test]
    fn adam_handles_ill_conditioned_quadratic() {
        // f(x) = x0² + 1e4·x1²: curvature spread that stalls plain descent
        let target = |x: &[f64]| x[0] * x[0] + 1e4 * x[1] * x[1];
        let grad = |x: &[f64]| vec![2.0 * x[0], 2e4 * x[1]];
        let result = minimize_adam(vec![5.0, 3.0], 400, |x| (target(x), grad(x)), target);
        for w in result.losses.windows(2) {
            assert!(w[1] <= w[0] + 1e-15);
        }
        assert!(
            result.losses.last().unwrap() < &1e-4,
            "loss stuck at {}",
            result.losses.last().unwrap()
        );
    }

    #[test]
    fn adam_is_deterministic() {
        let loss = |x: &[f64]| x[0].powi(4) + x[1] * x[1];
        let lg = |x: &[f64]| (loss(x), vec![4.0 * x[0].powi(3), 2.0 * x[1]]);
        let a = minimize_adam(vec![2.0, 3.0], 25, lg, loss);
        let b = minimize_adam(vec![2.0, 3.0], 25, lg, loss);
        assert_eq!(a.params, b.params);
        assert_eq!(a.losses, b.losses);
    }

    #[test]
    fn is_deterministic() {
        let loss = |x: &[f64]| x[0].powi(4) + x[1] * x[1];
        let lg = |x: &[f64]| (loss(x), vec![4.0 * x[0].powi(3), 2.0 * x[1]]);
        let a = minimize(vec![2.0, 3.0], 25, lg, loss);
        let b = minimize(vec![2.0, 3.0], 25, lg, loss);
        assert_eq!(a.params, b.params);
        assert_eq!(a.losses, b.losses);
    }
}
