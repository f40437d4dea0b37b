//! Synthetic Gaussian-blob classification data for fast tests and for
//! environments without the real image files.

use crate::error::{Error, Result};
use crate::fl::data::Dataset;
use ndarray::Array2;
use rand::Rng;
use rand_distr::StandardNormal;

/// One isotropic unit-variance Gaussian blob per class, class means spaced
/// `separation` apart in expectation. Larger separation means more
/// linearly-separable classes. Examples are laid out class-major and
/// labeled accordingly.
pub fn synthesize_dataset(
    classes: usize,
    dims: usize,
    per_class: usize,
    separation: f64,
    rng: &mut impl Rng,
) -> Result<Dataset> {
    if per_class == 0 {
        return Err(Error::domain("per_class must be at least 1"));
    }
    if classes < 2 {
        return Err(Error::domain("need at least two classes"));
    }
    if !(separation > 0.0) {
        return Err(Error::domain("separation must be positive"));
    }
    // E||mu_a - mu_b||^2 = separation^2 when each mean coordinate is
    // N(0, separation^2 / (2 dims)).
    let mean_std = separation / (2.0 * dims as f64).sqrt();
    let means: Vec<Vec<f64>> = (0..classes)
        .map(|_| (0..dims).map(|_| rng.sample::<f64, _>(StandardNormal) * mean_std).collect())
        .collect();

    let n = classes * per_class;
    let mut features = Array2::zeros((n, dims));
    let mut labels = Vec::with_capacity(n);
    for c in 0..classes {
        for k in 0..per_class {
            let row = c * per_class + k;
            for j in 0..dims {
                features[[row, j]] = means[c][j] + rng.sample::<f64, _>(StandardNormal);
            }
            labels.push(c);
        }
    }
    Dataset::new(features, labels, classes)
}

/// Affinely rescale features into [0, 1] (for writing image-format files).
pub fn rescale_unit_interval(features: &mut Array2<f64>) {
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for &v in features.iter() {
        lo = lo.min(v);
        hi = hi.max(v);
    }
    let span = (hi - lo).max(1e-12);
    for v in features.iter_mut() {
        *v = (*v - lo) / span;
    }
}
