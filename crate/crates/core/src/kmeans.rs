//! Lloyd k-means with k-means++ seeding.
//!
//! All distance and centroid arithmetic is `f64` with fixed summation order,
//! so a run is a pure function of its inputs and seed.

use std::collections::HashSet;

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{invalid, Error, Result};

#[derive(Clone, Debug)]
pub struct KMeansParams {
    pub k: usize,
    pub max_iters: usize,
    pub seed: u64,
    /// Training points are subsampled to `k * max_points_per_centroid`.
    pub max_points_per_centroid: Option<usize>,
}

impl KMeansParams {
    pub fn new(k: usize, seed: u64) -> Self {
        KMeansParams {
            k,
            max_iters: 100,
            seed,
            max_points_per_centroid: None,
        }
    }
}

#[derive(Clone, Debug)]
pub struct KMeansResult {
    pub dim: usize,
    /// `k * dim` values, row-major.
    pub centroids: Vec<f32>,
    /// Total squared distortion of each assignment step, in order.
    pub distortion: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    pub points_used: usize,
}

impl KMeansResult {
    pub fn centroid(&self, i: usize) -> &[f32] {
        &self.centroids[i * self.dim..(i + 1) * self.dim]
    }
}

/// Squared Euclidean distance with four independent accumulators.
#[inline]
pub(crate) fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    let mut lanes = [0.0f64; 4];
    let mut ac = a.chunks_exact(4);
    let mut bc = b.chunks_exact(4);
    for (x, y) in (&mut ac).zip(&mut bc) {
        for l in 0..4 {
            let d = x[l] - y[l];
            lanes[l] += d * d;
        }
    }
    let mut s = (lanes[0] + lanes[1]) + (lanes[2] + lanes[3]);
    for (x, y) in ac.remainder().iter().zip(bc.remainder()) {
        let d = x - y;
        s += d * d;
    }
    s
}

/// Like [`sq_dist`] but gives up once the running sum exceeds `bound`,
/// returning some value above `bound`. When it does not give up the result
/// is bit-identical to `sq_dist`.
#[inline]
fn sq_dist_bounded(a: &[f64], b: &[f64], bound: f64) -> f64 {
    let mut lanes = [0.0f64; 4];
    let mut ac = a.chunks_exact(8);
    let mut bc = b.chunks_exact(8);
    for (x, y) in (&mut ac).zip(&mut bc) {
        for half in 0..2 {
            for l in 0..4 {
                let d = x[4 * half + l] - y[4 * half + l];
                lanes[l] += d * d;
            }
        }
        let partial = (lanes[0] + lanes[1]) + (lanes[2] + lanes[3]);
        if partial > bound {
            return partial;
        }
    }
    let mut ar = ac.remainder().chunks_exact(4);
    let mut br = bc.remainder().chunks_exact(4);
    for (x, y) in (&mut ar).zip(&mut br) {
        for l in 0..4 {
            let d = x[l] - y[l];
            lanes[l] += d * d;
        }
    }
    let mut s = (lanes[0] + lanes[1]) + (lanes[2] + lanes[3]);
    for (x, y) in ar.remainder().iter().zip(br.remainder()) {
        let d = x - y;
        s += d * d;
    }
    s
}

/// Nearest centroid (ties go to the lowest index) with its squared
/// distance, plus the squared distance to the runner-up. `hint` is a
/// likely answer with its exact distance; it only tightens the search.
#[inline]
fn nearest_two(x: &[f64], centroids: &[f64], dim: usize, hint: Option<(usize, f64)>) -> (usize, f64, f64) {
    let (mut best, mut best_d) = hint.unwrap_or((usize::MAX, f64::INFINITY));
    let mut second_d = f64::INFINITY;
    for (i, c) in centroids.chunks_exact(dim).enumerate() {
        if i == best {
            continue;
        }
        let d = sq_dist_bounded(x, c, second_d);
        if d < best_d || (d == best_d && i < best) {
            second_d = best_d;
            best_d = d;
            best = i;
        } else if d < second_d {
            second_d = d;
        }
    }
    (best, best_d, second_d)
}

fn nearest(x: &[f64], centroids: &[f64], dim: usize) -> (usize, f64) {
    let (i, d, _) = nearest_two(x, centroids, dim, None);
    (i, d)
}

/// Relative slack on the skip test so rounding in the bounds can never
/// skip a point whose assignment might change.
const BOUND_SLACK: f64 = 1e-9;

/// Clusters `samples` (row-major, `dim` values each) into `params.k` groups.
pub fn kmeans(samples: &[f32], dim: usize, params: &KMeansParams) -> Result<KMeansResult> {
    if dim == 0 || !samples.len().is_multiple_of(dim) {
        return Err(invalid("sample buffer is not a whole number of vectors"));
    }
    let k = params.k;
    if k == 0 {
        return Err(invalid("k must be at least 1"));
    }
    let n_all = samples.len() / dim;
    if n_all < k {
        return Err(Error::Training {
            cells: Vec::new(),
            reason: format!("{n_all} samples is fewer than k = {k}"),
        });
    }
    let distinct: HashSet<Vec<u32>> = samples
        .chunks_exact(dim)
        .map(|v| v.iter().map(|x| (x + 0.0).to_bits()).collect())
        .collect();
    if distinct.len() < k {
        return Err(Error::Training {
            cells: Vec::new(),
            reason: format!("degenerate samples: {} distinct vectors for k = {k}", distinct.len()),
        });
    }

    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let mut picked: Vec<usize> = match params.max_points_per_centroid {
        Some(ppc) if n_all > k.saturating_mul(ppc) => {
            let mut idx = sample(&mut rng, n_all, k * ppc).into_vec();
            idx.sort_unstable();
            idx
        }
        _ => (0..n_all).collect(),
    };
    // A subsample can in principle lose distinctness; fall back to everything.
    if picked.len() < n_all {
        let d: HashSet<Vec<u32>> = picked
            .iter()
            .map(|&i| samples[i * dim..(i + 1) * dim].iter().map(|x| (x + 0.0).to_bits()).collect())
            .collect();
        if d.len() < k {
            picked = (0..n_all).collect();
        }
    }
    let n = picked.len();
    let data: Vec<f64> = picked
        .iter()
        .flat_map(|&i| samples[i * dim..(i + 1) * dim].iter().map(|&v| v as f64))
        .collect();
    let point = |i: usize| &data[i * dim..(i + 1) * dim];

    let mut centroids = seed_plus_plus(&data, dim, k, &mut rng);
    let mut assign = vec![usize::MAX; n];
    let mut dist = vec![0.0f64; n];
    // Lower bound on each point's distance to every centroid other than
    // its own. A point whose own distance is below it cannot move.
    let mut lower = vec![0.0f64; n];
    let mut history = Vec::new();
    let mut converged = false;
    let mut iterations = 0;

    while iterations < params.max_iters {
        iterations += 1;
        let found: Vec<(usize, f64, Option<f64>)> = (0..n)
            .into_par_iter()
            .map(|i| {
                let x = point(i);
                let a = assign[i];
                if a == usize::MAX {
                    let (c, d, d2) = nearest_two(x, &centroids, dim, None);
                    return (c, d, Some(d2));
                }
                let d = sq_dist(x, &centroids[a * dim..(a + 1) * dim]);
                if d.sqrt() * (1.0 + BOUND_SLACK) < lower[i] * (1.0 - BOUND_SLACK) {
                    (a, d, None)
                } else {
                    let (c, d, d2) = nearest_two(x, &centroids, dim, Some((a, d)));
                    (c, d, Some(d2))
                }
            })
            .collect();
        let mut changed = 0usize;
        let mut total = 0.0;
        for (i, (c, d, second)) in found.into_iter().enumerate() {
            if c != assign[i] {
                changed += 1;
                assign[i] = c;
            }
            dist[i] = d;
            if let Some(d2) = second {
                lower[i] = d2.sqrt();
            }
            total += d;
        }
        history.push(total);
        log::trace!("k-means iter {iterations}: distortion {total:.6e}, {changed} moved");
        if changed == 0 {
            converged = true;
            break;
        }

        let before = centroids.clone();
        let mut sums = vec![0.0f64; k * dim];
        let mut counts = vec![0usize; k];
        for i in 0..n {
            let c = assign[i];
            counts[c] += 1;
            for (s, &v) in sums[c * dim..(c + 1) * dim].iter_mut().zip(point(i)) {
                *s += v;
            }
        }
        for c in 0..k {
            if counts[c] > 0 {
                let inv = 1.0 / counts[c] as f64;
                for (dst, s) in centroids[c * dim..(c + 1) * dim].iter_mut().zip(&sums[c * dim..]) {
                    *dst = s * inv;
                }
            }
        }
        // Empty clusters take the sample farthest from its own centroid.
        for c in 0..k {
            if counts[c] > 0 {
                continue;
            }
            let mut far = None;
            let mut far_d = -1.0;
            for i in 0..n {
                if counts[assign[i]] > 1 && dist[i] > far_d {
                    far_d = dist[i];
                    far = Some(i);
                }
            }
            let Some(i) = far else { break };
            log::debug!("k-means: reseeding empty cluster {c} with sample {i}");
            counts[assign[i]] -= 1;
            counts[c] = 1;
            assign[i] = c;
            dist[i] = 0.0;
            lower[i] = 0.0;
            centroids[c * dim..(c + 1) * dim].copy_from_slice(point(i));
        }
        let max_move = before
            .chunks_exact(dim)
            .zip(centroids.chunks_exact(dim))
            .map(|(a, b)| sq_dist(a, b).sqrt())
            .fold(0.0f64, f64::max);
        for l in &mut lower {
            *l -= max_move;
        }
    }
    if !converged {
        // Report the distortion of the final centroids as well.
        let found: Vec<f64> = (0..n)
            .into_par_iter()
            .map(|i| nearest(point(i), &centroids, dim).1)
            .collect();
        let total: f64 = found.iter().sum();
        history.push(total);
    }

    Ok(KMeansResult {
        dim,
        centroids: centroids.iter().map(|&v| v as f32).collect(),
        distortion: history,
        iterations,
        converged,
        points_used: n,
    })
}

fn seed_plus_plus(data: &[f64], dim: usize, k: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let n = data.len() / dim;
    let point = |i: usize| &data[i * dim..(i + 1) * dim];
    let mut centroids = Vec::with_capacity(k * dim);
    let first = rng.random_range(0..n);
    centroids.extend_from_slice(point(first));
    let mut d2: Vec<f64> = (0..n).map(|i| sq_dist(point(i), point(first))).collect();
    for _ in 1..k {
        let total: f64 = d2.iter().sum();
        let chosen = if total > 0.0 {
            let mut r = rng.random::<f64>() * total;
            let mut pick = None;
            for (i, &d) in d2.iter().enumerate() {
                if d > 0.0 {
                    pick = Some(i);
                    if r < d {
                        break;
                    }
                    r -= d;
                }
            }
            pick.expect("positive total implies a positive weight")
        } else {
            rng.random_range(0..n)
        };
        let c = point(chosen).to_vec();
        for (i, d) in d2.iter_mut().enumerate() {
            *d = d.min(sq_dist(point(i), &c));
        }
        centroids.extend_from_slice(&c);
    }
    centroids
}
