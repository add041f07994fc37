//! Codebook initialization by k-means over extracted feature vectors.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::TrainError;
use crate::tensor::Tensor;

const MAX_ITERATIONS: usize = 100;

fn sqdist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Clusters `points` into `k` centers: k-means++ seeding followed by Lloyd
/// iterations until assignments stabilize (at most 100 rounds).
///
/// Deterministic for a given seed. Assignment ties keep the lowest center
/// index and a cluster that loses all points keeps its previous center, so
/// `k` rows always come back, as a `[k, d]` tensor.
pub fn kmeans_init(points: &[Vec<f64>], k: usize, seed: u64) -> Result<Tensor, TrainError> {
    if k == 0 {
        return Err(TrainError::Config("k-means needs k >= 1".to_string()));
    }
    let n = points.len();
    if n == 0 {
        return Err(TrainError::Config("k-means needs at least one point".to_string()));
    }
    let d = points[0].len();
    if d == 0 {
        return Err(TrainError::Config("k-means points must have dimension >= 1".to_string()));
    }
    for (i, p) in points.iter().enumerate() {
        if p.len() != d {
            return Err(TrainError::Config(format!(
                "k-means point {} has dimension {}, expected {}",
                i,
                p.len(),
                d
            )));
        }
        if p.iter().any(|v| !v.is_finite()) {
            return Err(TrainError::Config(format!("k-means point {} is non-finite", i)));
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut centers: Vec<Vec<f64>> = Vec::with_capacity(k);
    centers.push(points[rng.gen_range(0..n)].clone());
    // Squared distance from each point to its nearest chosen center.
    let mut best_d2: Vec<f64> = points.iter().map(|p| sqdist(p, &centers[0])).collect();
    while centers.len() < k {
        let total: f64 = best_d2.iter().sum();
        let pick = if total > 0.0 {
            let r = rng.gen::<f64>() * total;
            let mut acc = 0.0;
            let mut pick = n - 1;
            for (i, &w) in best_d2.iter().enumerate() {
                acc += w;
                if r < acc {
                    pick = i;
                    break;
                }
            }
            pick
        } else {
            // Every point already coincides with a center; any choice works.
            rng.gen_range(0..n)
        };
        centers.push(points[pick].clone());
        let newest = centers.last().expect("just pushed");
        for (slot, p) in best_d2.iter_mut().zip(points) {
            let d2 = sqdist(p, newest);
            if d2 < *slot {
                *slot = d2;
            }
        }
    }

    let mut assignment = vec![usize::MAX; n];
    for _ in 0..MAX_ITERATIONS {
        let mut changed = false;
        for (i, p) in points.iter().enumerate() {
            let mut best = 0;
            let mut best_d = f64::INFINITY;
            for (c, center) in centers.iter().enumerate() {
                let d2 = sqdist(p, center);
                if d2 < best_d {
                    best_d = d2;
                    best = c;
                }
            }
            if assignment[i] != best {
                assignment[i] = best;
                changed = true;
            }
        }
        if !changed {
            break;
        }
        let mut sums = vec![0.0; k * d];
        let mut counts = vec![0usize; k];
        for (p, &a) in points.iter().zip(&assignment) {
            counts[a] += 1;
            for (slot, &v) in sums[a * d..(a + 1) * d].iter_mut().zip(p) {
                *slot += v;
            }
        }
        for c in 0..k {
            if counts[c] > 0 {
                for (dst, &s) in centers[c].iter_mut().zip(&sums[c * d..(c + 1) * d]) {
                    *dst = s / counts[c] as f64;
                }
            }
        }
    }

    let mut data = Vec::with_capacity(k * d);
    for center in &centers {
        data.extend_from_slice(center);
    }
    Ok(Tensor::new(vec![k, d], data).expect("centers are finite means of finite points"))
}
