//! Lloyd's k-means with k-means++ seeding.
//!
//! Ties in nearest-centroid search go to the lowest centroid index. Clusters that end
//! an iteration empty are re-seeded on the point farthest from its own centroid.

use rand::Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};

#[derive(Debug, Clone)]
pub struct KMeansFit {
    /// Row-major `k x d`.
    pub centroids: Vec<f64>,
    pub assignments: Vec<usize>,
    /// Sum of squared distances after every assignment step, including the final one.
    pub inertia_trace: Vec<f64>,
}

#[inline]
pub fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Index and squared distance of the nearest centroid.
pub fn nearest(point: &[f64], centroids: &[f64], d: usize) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (j, c) in centroids.chunks_exact(d).enumerate() {
        let dist = sq_dist(point, c);
        if dist < best.1 {
            best = (j, dist);
        }
    }
    best
}

fn assign(data: &[f64], centroids: &[f64], d: usize) -> Vec<(usize, f64)> {
    if data.len() / d >= 4096 {
        data.par_chunks_exact(d).map(|p| nearest(p, centroids, d)).collect()
    } else {
        data.chunks_exact(d).map(|p| nearest(p, centroids, d)).collect()
    }
}

fn plus_plus(data: &[f64], n: usize, d: usize, k: usize, rng: &mut impl Rng) -> Vec<f64> {
    let mut centroids = Vec::with_capacity(k * d);
    let first = rng.random_range(0..n);
    centroids.extend_from_slice(&data[first * d..(first + 1) * d]);
    let mut dist: Vec<f64> = data.chunks_exact(d).map(|p| sq_dist(p, &centroids[..d])).collect();
    for _ in 1..k {
        let total: f64 = dist.iter().sum();
        let pick = if total > 0.0 {
            let mut target = rng.random::<f64>() * total;
            let mut chosen = n - 1;
            for (i, &w) in dist.iter().enumerate() {
                if target < w {
                    chosen = i;
                    break;
                }
                target -= w;
            }
            // guard against landing on a zero-weight tail through rounding
            if dist[chosen] == 0.0 {
                chosen = dist.iter().rposition(|&w| w > 0.0).unwrap_or(chosen);
            }
            chosen
        } else {
            rng.random_range(0..n)
        };
        let c = data[pick * d..(pick + 1) * d].to_vec();
        for (i, p) in data.chunks_exact(d).enumerate() {
            dist[i] = dist[i].min(sq_dist(p, &c));
        }
        centroids.extend(c);
    }
    centroids
}

/// Clusters `n = data.len() / d` points into `k` groups.
pub fn kmeans(data: &[f64], d: usize, k: usize, max_iters: usize, rng: &mut impl Rng) -> Result<KMeansFit> {
    if d == 0 || data.len() % d != 0 {
        return Err(Error::Fit(format!("{} values do not form rows of width {d}", data.len())));
    }
    let n = data.len() / d;
    if k == 0 {
        return Err(Error::Fit("k must be positive".into()));
    }
    if n < k {
        return Err(Error::Fit(format!("{n} points cannot fill {k} clusters")));
    }
    if max_iters == 0 {
        return Err(Error::Fit("need at least one iteration".into()));
    }

    let mut centroids = plus_plus(data, n, d, k, rng);
    let mut inertia_trace = Vec::with_capacity(max_iters + 1);
    let mut previous: Option<Vec<usize>> = None;
    for _ in 0..max_iters {
        let assigned = assign(data, &centroids, d);
        inertia_trace.push(assigned.iter().map(|a| a.1).sum());
        let labels: Vec<usize> = assigned.iter().map(|a| a.0).collect();
        if previous.as_ref() == Some(&labels) {
            return Ok(KMeansFit {
                centroids,
                assignments: labels,
                inertia_trace,
            });
        }

        let mut sums = vec![0.0; k * d];
        let mut counts = vec![0usize; k];
        for (p, &c) in data.chunks_exact(d).zip(&labels) {
            counts[c] += 1;
            for (s, v) in sums[c * d..(c + 1) * d].iter_mut().zip(p) {
                *s += v;
            }
        }
        let mut far: Vec<(usize, f64)> = assigned.iter().map(|a| a.1).enumerate().collect();
        for c in 0..k {
            if counts[c] > 0 {
                let inv = 1.0 / counts[c] as f64;
                for (dst, s) in centroids[c * d..(c + 1) * d].iter_mut().zip(&sums[c * d..(c + 1) * d]) {
                    *dst = s * inv;
                }
            } else {
                // farthest point from its centroid; lowest index wins ties
                let (idx, _) = far
                    .iter()
                    .copied()
                    .fold((0, f64::NEG_INFINITY), |best, cur| if cur.1 > best.1 { cur } else { best });
                far[idx].1 = f64::NEG_INFINITY;
                centroids[c * d..(c + 1) * d].copy_from_slice(&data[idx * d..(idx + 1) * d]);
            }
        }
        previous = Some(labels);
    }
    let assigned = assign(data, &centroids, d);
    inertia_trace.push(assigned.iter().map(|a| a.1).sum());
    Ok(KMeansFit {
        centroids,
        assignments: assigned.into_iter().map(|a| a.0).collect(),
        inertia_trace,
    })
}
