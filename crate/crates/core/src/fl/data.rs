//! In-memory classification datasets and shard bookkeeping.

use crate::error::{Error, Result};
use ndarray::{Array2, ArrayView2};

/// A labeled dataset held as one feature matrix (examples x features).
#[derive(Debug, Clone)]
pub struct Dataset {
    pub features: Array2<f64>,
    pub labels: Vec<usize>,
    pub classes: usize,
}

impl Dataset {
    pub fn new(features: Array2<f64>, labels: Vec<usize>, classes: usize) -> Result<Self> {
        if features.nrows() != labels.len() {
            return Err(Error::domain("feature rows and labels disagree"));
        }
        if let Some(&bad) = labels.iter().find(|&&y| y >= classes) {
            return Err(Error::domain(format!("label {bad} outside class range {classes}")));
        }
        Ok(Dataset { features, labels, classes })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn feature_dim(&self) -> usize {
        self.features.ncols()
    }

    /// Copy the given rows into a dense batch.
    pub fn gather(&self, indices: &[usize]) -> (Array2<f64>, Vec<usize>) {
        let mut x = Array2::zeros((indices.len(), self.feature_dim()));
        let mut y = Vec::with_capacity(indices.len());
        for (row, &idx) in indices.iter().enumerate() {
            x.row_mut(row).assign(&self.features.row(idx));
            y.push(self.labels[idx]);
        }
        (x, y)
    }

    pub fn view(&self) -> ArrayView2<'_, f64> {
        self.features.view()
    }
}

/// Aggregation weights `alpha_i = |D_i| / sum_j |D_j|` from shard sizes.
pub fn shard_weights(shards: &[Vec<usize>]) -> Vec<f64> {
    let total: usize = shards.iter().map(|s| s.len()).sum();
    shards.iter().map(|s| s.len() as f64 / total as f64).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn weights_sum_to_one() {
        let shards = vec![vec![0; 3], vec![0; 5], vec![0; 2]];
        let w = shard_weights(&shards);
        assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!((w[1] - 0.5).abs() < 1e-12);
    }

    #[test]
    fn label_range_checked() {
        let x = array![[1.0], [2.0]];
        assert!(Dataset::new(x.clone(), vec![0, 3], 3).is_err());
        assert!(Dataset::new(x, vec![0, 2], 3).is_ok());
    }

    #[test]
    fn gather_picks_rows() {
        let x = array![[1.0, 0.0], [2.0, 0.0], [3.0, 0.0]];
        let ds = Dataset::new(x, vec![0, 1, 0], 2).unwrap();
        let (b, y) = ds.gather(&[2, 0]);
        assert_eq!(b[[0, 0]], 3.0);
        assert_eq!(b[[1, 0]], 1.0);
        assert_eq!(y, vec![0, 0]);
    }
}
