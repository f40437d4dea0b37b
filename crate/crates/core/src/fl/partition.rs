//! Heterogeneous data partitioning: per-class user proportions drawn from a
//! symmetric Dirichlet, smaller concentration meaning more skew.

use crate::error::{Error, Result};
use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, Gamma};

/// One Dirichlet(gamma * 1_m) draw per class: `out[class][user]`.
///
/// Uses the gamma-normalization construction so the user count can be a
/// runtime value.
pub fn dirichlet_proportions(
    classes: usize,
    gamma: f64,
    m: usize,
    rng: &mut impl Rng,
) -> Result<Vec<Vec<f64>>> {
    if gamma <= 0.0 {
        return Err(Error::domain("dirichlet concentration must be positive"));
    }
    if m == 0 {
        return Err(Error::domain("need at least one user"));
    }
    let gamma_dist = Gamma::new(gamma, 1.0)
        .map_err(|e| Error::domain(format!("gamma distribution: {e}")))?;
    let mut out = Vec::with_capacity(classes);
    for _ in 0..classes {
        loop {
            let draws: Vec<f64> = (0..m).map(|_| gamma_dist.sample(rng)).collect();
            let sum: f64 = draws.iter().sum();
            if sum > 0.0 && sum.is_finite() {
                out.push(draws.into_iter().map(|g| g / sum).collect());
                break;
            }
            // All draws underflowed (tiny gamma); redraw this class.
        }
    }
    Ok(out)
}

/// Split `labels` into `m` disjoint, exhaustive index shards according to
/// per-class user proportions. Indices of each class are shuffled before
/// cutting so shard contents are not order-biased.
pub fn partition_by_proportions(
    labels: &[usize],
    classes: usize,
    proportions: &[Vec<f64>],
    rng: &mut impl Rng,
) -> Result<Vec<Vec<usize>>> {
    if proportions.len() != classes {
        return Err(Error::domain("one proportion vector per class required"));
    }
    let m = proportions.first().map(|p| p.len()).unwrap_or(0);
    let mut shards: Vec<Vec<usize>> = vec![Vec::new(); m];
    for class in 0..classes {
        let mut idx: Vec<usize> =
            (0..labels.len()).filter(|&i| labels[i] == class).collect();
        idx.shuffle(rng);
        let n = idx.len();
        // Cumulative rounding keeps the split exhaustive.
        let mut cum = 0.0;
        let mut start = 0usize;
        for (user, &p) in proportions[class].iter().enumerate() {
            cum += p;
            let end = if user + 1 == m { n } else { (cum * n as f64).round() as usize };
            let end = end.clamp(start, n);
            shards[user].extend_from_slice(&idx[start..end]);
            start = end;
        }
    }
    Ok(shards)
}

/// Dirichlet partition of a label list; redraws pathological splits that
/// would leave a user with no data.
pub fn dirichlet_partition(
    labels: &[usize],
    classes: usize,
    gamma: f64,
    m: usize,
    rng: &mut impl Rng,
) -> Result<Vec<Vec<usize>>> {
    if labels.len() < m {
        return Err(Error::domain(format!(
            "cannot split {} examples across {m} users",
            labels.len()
        )));
    }
    const MAX_TRIES: usize = 1000;
    for _ in 0..MAX_TRIES {
        let props = dirichlet_proportions(classes, gamma, m, rng)?;
        let shards = partition_by_proportions(labels, classes, &props, rng)?;
        if shards.iter().all(|s| !s.is_empty()) {
            return Ok(shards);
        }
    }
    Err(Error::domain("could not draw a partition giving every user data"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha12Rng;

    fn cyclic_labels(n: usize, classes: usize) -> Vec<usize> {
        (0..n).map(|i| i % classes).collect()
    }

    #[test]
    fn partition_is_disjoint_and_exhaustive() {
        let labels = cyclic_labels(503, 10);
        let mut rng = ChaCha12Rng::seed_from_u64(1);
        for gamma in [0.1, 1.0, 100.0] {
            let shards = dirichlet_partition(&labels, 10, gamma, 7, &mut rng).unwrap();
            let mut seen = vec![false; labels.len()];
            for shard in &shards {
                for &i in shard {
                    assert!(!seen[i], "index {i} assigned twice");
                    seen[i] = true;
                }
            }
            assert!(seen.iter().all(|&s| s), "some index unassigned");
        }
    }

    #[test]
    fn huge_concentration_is_near_uniform() {
        // gamma -> infinity: per-user class histograms uniform within 5%.
        let labels = cyclic_labels(60_000, 10);
        let mut rng = ChaCha12Rng::seed_from_u64(2);
        let m = 10;
        let shards = dirichlet_partition(&labels, 10, 1e6, m, &mut rng).unwrap();
        for shard in &shards {
            let mut hist = vec![0usize; 10];
            for &i in shard {
                hist[labels[i]] += 1;
            }
            let total: usize = hist.iter().sum();
            for &h in &hist {
                let share = h as f64 / total as f64;
                assert!((share - 0.1).abs() < 0.005, "class share {share}");
            }
        }
    }

    #[test]
    fn small_concentration_is_skewed() {
        // Empirical fixture: at gamma = 0.1 the mean dominant-class share
        // per user exceeds one half, over 50 seeds.
        let labels = cyclic_labels(5_000, 10);
        let mut shares = Vec::new();
        for seed in 0..50u64 {
            let mut rng = ChaCha12Rng::seed_from_u64(seed);
            let shards = dirichlet_partition(&labels, 10, 0.1, 10, &mut rng).unwrap();
            for shard in &shards {
                let mut hist = vec![0usize; 10];
                for &i in shard {
                    hist[labels[i]] += 1;
                }
                let max = *hist.iter().max().unwrap();
                shares.push(max as f64 / shard.len() as f64);
            }
        }
        let mean = shares.iter().sum::<f64>() / shares.len() as f64;
        assert!(mean > 0.5, "mean dominant-class share {mean}");
    }

    #[test]
    fn every_user_gets_data() {
        let labels = cyclic_labels(40, 4);
        let mut rng = ChaCha12Rng::seed_from_u64(3);
        for _ in 0..20 {
            let shards = dirichlet_partition(&labels, 4, 0.05, 8, &mut rng).unwrap();
            assert!(shards.iter().all(|s| !s.is_empty()));
        }
    }

    #[test]
    fn too_few_examples_is_an_error() {
        let labels = cyclic_labels(3, 2);
        let mut rng = ChaCha12Rng::seed_from_u64(4);
        assert!(dirichlet_partition(&labels, 2, 1.0, 5, &mut rng).is_err());
    }

    #[test]
    fn proportions_are_normalized() {
        let mut rng = ChaCha12Rng::seed_from_u64(5);
        let props = dirichlet_proportions(10, 0.3, 6, &mut rng).unwrap();
        for class in props {
            assert!((class.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            assert!(class.iter().all(|&p| p >= 0.0));
        }
    }
}
