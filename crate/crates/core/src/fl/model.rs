//! Flat-vector models with exact analytic gradients: softmax regression and
//! a one-hidden-layer MLP.

use crate::error::{Error, Result};
use ndarray::{Array2, ArrayView2, Axis};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Relu,
    Tanh,
}

impl Activation {
    fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Relu => z.max(0.0),
            Activation::Tanh => z.tanh(),
        }
    }

    /// Derivative expressed through the activation output.
    fn derivative_from_output(self, a: f64) -> f64 {
        match self {
            Activation::Relu => {
                if a > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Tanh => 1.0 - a * a,
        }
    }
}

/// Which classifier the flat parameter vector parameterizes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Architecture {
    Softmax { input: usize, classes: usize },
    Mlp { input: usize, hidden: usize, classes: usize, activation: Activation },
}

impl Architecture {
    /// Total parameter count d.
    pub fn dim(&self) -> usize {
        match *self {
            Architecture::Softmax { input, classes } => classes * input + classes,
            Architecture::Mlp { input, hidden, classes, .. } => {
                hidden * input + hidden + classes * hidden + classes
            }
        }
    }

    pub fn input(&self) -> usize {
        match *self {
            Architecture::Softmax { input, .. } | Architecture::Mlp { input, .. } => input,
        }
    }

    pub fn classes(&self) -> usize {
        match *self {
            Architecture::Softmax { classes, .. } | Architecture::Mlp { classes, .. } => classes,
        }
    }

    /// Named shapes of the layers in flattening order.
    pub fn layout(&self) -> Vec<(&'static str, Vec<usize>)> {
        match *self {
            Architecture::Softmax { input, classes } => {
                vec![("weights", vec![classes, input]), ("bias", vec![classes])]
            }
            Architecture::Mlp { input, hidden, classes, .. } => vec![
                ("hidden_weights", vec![hidden, input]),
                ("hidden_bias", vec![hidden]),
                ("output_weights", vec![classes, hidden]),
                ("output_bias", vec![classes]),
            ],
        }
    }
}

/// A model as a flat real vector plus its architecture descriptor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub arch: Architecture,
    pub values: Vec<f64>,
}

impl ModelParams {
    pub fn zeros(arch: Architecture) -> Self {
        ModelParams { arch, values: vec![0.0; arch.dim()] }
    }

    /// Seeded initialization: biases zero, weights scaled normals
    /// (1/sqrt(fan-in)); softmax regression starts at zero.
    pub fn init(arch: Architecture, rng: &mut impl Rng) -> Self {
        let mut p = ModelParams::zeros(arch);
        if let Architecture::Mlp { input, hidden, classes, .. } = arch {
            let (w1, rest) = p.values.split_at_mut(hidden * input);
            let scale1 = 1.0 / (input as f64).sqrt();
            for w in w1.iter_mut() {
                *w = rng.sample::<f64, _>(StandardNormal) * scale1;
            }
            let (_b1, rest) = rest.split_at_mut(hidden);
            let (w2, _b2) = rest.split_at_mut(classes * hidden);
            let scale2 = 1.0 / (hidden as f64).sqrt();
            for w in w2.iter_mut() {
                *w = rng.sample::<f64, _>(StandardNormal) * scale2;
            }
        }
        p
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn check_finite(&self) -> Result<()> {
        if self.values.iter().all(|v| v.is_finite()) {
            Ok(())
        } else {
            Err(Error::NonFinite { context: "model parameters".into() })
        }
    }
}

fn softmax_rows(logits: &mut Array2<f64>) {
    for mut row in logits.rows_mut() {
        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut sum = 0.0;
        for v in row.iter_mut() {
            *v = (*v - max).exp();
            sum += *v;
        }
        for v in row.iter_mut() {
            *v /= sum;
        }
    }
}

struct Forward {
    /// Hidden activations (MLP only).
    hidden: Option<Array2<f64>>,
    /// Class probabilities, one row per example.
    probs: Array2<f64>,
}

fn forward(params: &ModelParams, x: ArrayView2<f64>) -> Forward {
    match params.arch {
        Architecture::Softmax { input, classes } => {
            let w = ndarray::ArrayView2::from_shape((classes, input), &params.values[..classes * input])
                .expect("layout");
            let b = &params.values[classes * input..];
            let mut logits = x.dot(&w.t());
            for mut row in logits.rows_mut() {
                for (v, bias) in row.iter_mut().zip(b) {
                    *v += bias;
                }
            }
            softmax_rows(&mut logits);
            Forward { hidden: None, probs: logits }
        }
        Architecture::Mlp { input, hidden, classes, activation } => {
            let w1_end = hidden * input;
            let b1_end = w1_end + hidden;
            let w2_end = b1_end + classes * hidden;
            let w1 = ndarray::ArrayView2::from_shape((hidden, input), &params.values[..w1_end])
                .expect("layout");
            let b1 = &params.values[w1_end..b1_end];
            let w2 = ndarray::ArrayView2::from_shape((classes, hidden), &params.values[b1_end..w2_end])
                .expect("layout");
            let b2 = &params.values[w2_end..];

            let mut a1 = x.dot(&w1.t());
            for mut row in a1.rows_mut() {
                for (v, bias) in row.iter_mut().zip(b1) {
                    *v = activation.apply(*v + bias);
                }
            }
            let mut logits = a1.dot(&w2.t());
            for mut row in logits.rows_mut() {
                for (v, bias) in row.iter_mut().zip(b2) {
                    *v += bias;
                }
            }
            softmax_rows(&mut logits);
            Forward { hidden: Some(a1), probs: logits }
        }
    }
}

/// Mean cross-entropy over the batch given precomputed probabilities.
fn mean_cross_entropy(probs: &Array2<f64>, labels: &[usize]) -> f64 {
    let mut loss = 0.0;
    for (row, &y) in probs.rows().into_iter().zip(labels) {
        loss -= row[y].max(1e-300).ln();
    }
    loss / labels.len() as f64
}

/// Exact gradient of the mean cross-entropy on the batch, flattened in the
/// architecture's layout order. Also returns the batch loss.
pub fn loss_grad(
    params: &ModelParams,
    x: ArrayView2<f64>,
    labels: &[usize],
) -> Result<(f64, Vec<f64>)> {
    if labels.is_empty() {
        return Err(Error::domain("gradient needs a non-empty batch"));
    }
    if x.nrows() != labels.len() {
        return Err(Error::domain("feature/label batch size mismatch"));
    }
    let fwd = forward(params, x);
    let loss = mean_cross_entropy(&fwd.probs, labels);
    let batch = labels.len() as f64;

    // dL/dlogits = (probs - onehot) / batch
    let mut dlogits = fwd.probs;
    for (mut row, &y) in dlogits.rows_mut().into_iter().zip(labels) {
        row[y] -= 1.0;
        for v in row.iter_mut() {
            *v /= batch;
        }
    }

    let mut grad = vec![0.0; params.dim()];
    match params.arch {
        Architecture::Softmax { input, classes } => {
            let gw = dlogits.t().dot(&x); // classes x input
            grad[..classes * input].copy_from_slice(gw.as_standard_layout().as_slice().unwrap());
            let gb = dlogits.sum_axis(Axis(0));
            grad[classes * input..].copy_from_slice(gb.as_slice().unwrap());
        }
        Architecture::Mlp { input, hidden, classes, activation } => {
            let a1 = fwd.hidden.expect("mlp forward caches hidden layer");
            let w1_end = hidden * input;
            let b1_end = w1_end + hidden;
            let w2_end = b1_end + classes * hidden;
            let w2 = ndarray::ArrayView2::from_shape((classes, hidden), &params.values[b1_end..w2_end])
                .expect("layout");

            let gw2 = dlogits.t().dot(&a1); // classes x hidden
            let gb2 = dlogits.sum_axis(Axis(0));
            let mut da1 = dlogits.dot(&w2); // batch x hidden
            ndarray::Zip::from(&mut da1).and(&a1).for_each(|d, &a| {
                *d *= activation.derivative_from_output(a);
            });
            let gw1 = da1.t().dot(&x); // hidden x input
            let gb1 = da1.sum_axis(Axis(0));

            grad[..w1_end].copy_from_slice(gw1.as_standard_layout().as_slice().unwrap());
            grad[w1_end..b1_end].copy_from_slice(gb1.as_slice().unwrap());
            grad[b1_end..w2_end].copy_from_slice(gw2.as_standard_layout().as_slice().unwrap());
            grad[w2_end..].copy_from_slice(gb2.as_slice().unwrap());
        }
    }
    Ok((loss, grad))
}

/// Mean cross-entropy and top-1 accuracy on a dataset slice.
pub fn evaluate(params: &ModelParams, x: ArrayView2<f64>, labels: &[usize]) -> Result<(f64, f64)> {
    if labels.is_empty() {
        return Err(Error::domain("evaluation needs a non-empty dataset"));
    }
    let fwd = forward(params, x);
    let loss = mean_cross_entropy(&fwd.probs, labels);
    let mut correct = 0usize;
    for (row, &y) in fwd.probs.rows().into_iter().zip(labels) {
        let mut best = 0usize;
        let mut best_p = f64::NEG_INFINITY;
        for (k, &p) in row.iter().enumerate() {
            if p > best_p {
                best_p = p;
                best = k;
            }
        }
        if best == y {
            correct += 1;
        }
    }
    Ok((loss, correct as f64 / labels.len() as f64))
}

/// Per-example probabilities (used by diagnostics and tests).
pub fn predict_probs(params: &ModelParams, x: ArrayView2<f64>) -> Array2<f64> {
    forward(params, x).probs
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use rand::SeedableRng;
    use rand_chacha::ChaCha12Rng;

    fn fd_gradient(params: &ModelParams, x: ArrayView2<f64>, y: &[usize], h: f64) -> Vec<f64> {
        let mut out = vec![0.0; params.dim()];
        let mut p = params.clone();
        for k in 0..params.dim() {
            let orig = p.values[k];
            p.values[k] = orig + h;
            let (up, _) = loss_grad(&p, x, y).unwrap();
            p.values[k] = orig - h;
            let (down, _) = loss_grad(&p, x, y).unwrap();
            p.values[k] = orig;
            out[k] = (up - down) / (2.0 * h);
        }
        out
    }

    #[test]
    fn zero_softmax_on_balanced_batch_has_antisymmetric_rows() {
        // With zero weights and a balanced two-class batch, each logit-layer
        // gradient row is the negative of the other.
        let arch = Architecture::Softmax { input: 3, classes: 2 };
        let p = ModelParams::zeros(arch);
        let x = array![[1.0, -0.5, 2.0], [0.3, 0.8, -1.2]];
        let (_, g) = loss_grad(&p, x.view(), &[0, 1]).unwrap();
        for col in 0..3 {
            assert!((g[col] + g[3 + col]).abs() < 1e-14);
        }
        assert!((g[6] + g[7]).abs() < 1e-14);
    }

    #[test]
    fn duplicated_batch_leaves_gradient_unchanged() {
        let arch = Architecture::Mlp { input: 4, hidden: 3, classes: 3, activation: Activation::Tanh };
        let mut rng = ChaCha12Rng::seed_from_u64(1);
        let p = ModelParams::init(arch, &mut rng);
        let x = array![[0.1, -0.3, 0.7, 0.0], [1.0, 0.2, -0.5, 0.4]];
        let xx = array![
            [0.1, -0.3, 0.7, 0.0],
            [1.0, 0.2, -0.5, 0.4],
            [0.1, -0.3, 0.7, 0.0],
            [1.0, 0.2, -0.5, 0.4]
        ];
        let (l1, g1) = loss_grad(&p, x.view(), &[0, 2]).unwrap();
        let (l2, g2) = loss_grad(&p, xx.view(), &[0, 2, 0, 2]).unwrap();
        assert!((l1 - l2).abs() < 1e-14);
        for (a, b) in g1.iter().zip(&g2) {
            assert!((a - b).abs() < 1e-14);
        }
    }

    #[test]
    fn gradients_match_finite_differences() {
        let mut rng = ChaCha12Rng::seed_from_u64(2);
        let archs = [
            Architecture::Softmax { input: 5, classes: 3 },
            Architecture::Mlp { input: 4, hidden: 6, classes: 3, activation: Activation::Tanh },
            Architecture::Mlp { input: 4, hidden: 6, classes: 3, activation: Activation::Relu },
        ];
        for arch in archs {
            for _ in 0..4 {
                let mut p = ModelParams::init(arch, &mut rng);
                // Perturb all parameters (including biases) so ReLU kinks
                // are far from the sampled points.
                for v in p.values.iter_mut() {
                    *v += 0.05 * rng.sample::<f64, _>(rand_distr::StandardNormal);
                }
                let n = 6;
                let x = Array2::from_shape_fn((n, arch.input()), |_| {
                    rng.sample::<f64, _>(rand_distr::StandardNormal)
                });
                let y: Vec<usize> = (0..n).map(|i| i % arch.classes()).collect();
                let (_, analytic) = loss_grad(&p, x.view(), &y).unwrap();
                let numeric = fd_gradient(&p, x.view(), &y, 1e-6);
                for k in 0..p.dim() {
                    let denom = analytic[k].abs().max(numeric[k].abs()).max(1e-4);
                    assert!(
                        (analytic[k] - numeric[k]).abs() / denom < 1e-5,
                        "{arch:?} param {k}: analytic {} fd {}",
                        analytic[k],
                        numeric[k]
                    );
                }
            }
        }
    }

    #[test]
    fn evaluate_chance_level_for_uniform_model() {
        let arch = Architecture::Softmax { input: 2, classes: 10 };
        let p = ModelParams::zeros(arch);
        let n = 200;
        let x = Array2::from_shape_fn((n, 2), |(i, j)| ((i * 7 + j) % 13) as f64 / 13.0);
        let y: Vec<usize> = (0..n).map(|i| i % 10).collect();
        let (loss, acc) = evaluate(&p, x.view(), &y).unwrap();
        assert!((loss - 10f64.ln()).abs() < 1e-12);
        // Uniform probabilities: argmax is class 0, hitting 1 in 10 labels.
        assert!((acc - 0.1).abs() < 1e-12);
    }

    #[test]
    fn evaluate_perfect_predictor() {
        let arch = Architecture::Softmax { input: 3, classes: 3 };
        let mut p = ModelParams::zeros(arch);
        // W = 50 * I maps one-hot features onto their own class.
        for k in 0..3 {
            p.values[k * 3 + k] = 50.0;
        }
        let x = array![[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]];
        let (loss, acc) = evaluate(&p, x.view(), &[0, 1, 2]).unwrap();
        assert_eq!(acc, 1.0);
        assert!(loss < 1e-12);
    }

    #[test]
    fn evaluate_reference_fixture() {
        // Frozen from an independent implementation of softmax + CE.
        let arch = Architecture::Softmax { input: 2, classes: 3 };
        let mut p = ModelParams::zeros(arch);
        p.values.copy_from_slice(&[0.5, -0.2, -0.1, 0.3, 0.2, 0.1, 0.05, -0.05, 0.0]);
        let x = array![[1.0, 2.0], [-1.0, 0.5], [0.3, -0.7], [2.0, 1.0]];
        let y = [1usize, 0, 2, 0];
        let (loss, acc) = evaluate(&p, x.view(), &y).unwrap();
        assert!((loss - 1.110217570428822).abs() < 1e-12, "loss {loss}");
        assert!((acc - 0.5).abs() < 1e-15);
    }

    #[test]
    fn empty_batch_is_rejected() {
        let arch = Architecture::Softmax { input: 2, classes: 2 };
        let p = ModelParams::zeros(arch);
        let x = Array2::zeros((0, 2));
        assert!(loss_grad(&p, x.view(), &[]).is_err());
        assert!(evaluate(&p, x.view(), &[]).is_err());
    }
}
