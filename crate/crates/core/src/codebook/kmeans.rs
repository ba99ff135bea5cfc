use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::Rng;
use rayon::prelude::*;

use super::{sq_dist, Points};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KmeansParams {
    pub max_iter: usize,
    /// Stop once no centroid moves farther than this (Euclidean).
    pub tol: f64,
}

impl Default for KmeansParams {
    fn default() -> Self {
        Self {
            max_iter: 100,
            tol: 1e-6,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct KmeansModel {
    dim: usize,
    centroids: Vec<f64>,
    /// Within-cluster sum of squares under the final assignment.
    pub inertia: f64,
    /// Inertia after every assignment step, starting with the seeding.
    pub history: Vec<f64>,
    pub iterations: usize,
}

impl KmeansModel {
    pub fn from_centroids(dim: usize, centroids: Vec<f64>) -> Result<Self> {
        if dim == 0 || centroids.is_empty() || !centroids.len().is_multiple_of(dim) {
            return Err(Error::arg("centroid buffer does not match dimension"));
        }
        if centroids.iter().any(|v| !v.is_finite()) {
            return Err(Error::arg("non-finite centroid"));
        }
        Ok(Self {
            dim,
            centroids,
            inertia: 0.0,
            history: Vec::new(),
            iterations: 0,
        })
    }

    pub fn k(&self) -> usize {
        self.centroids.len() / self.dim
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn centroid(&self, c: usize) -> &[f64] {
        &self.centroids[c * self.dim..(c + 1) * self.dim]
    }

    pub fn centroids(&self) -> &[f64] {
        &self.centroids
    }

    /// Closest centroid and its squared distance; ties go to the lowest index.
    pub fn nearest(&self, x: &[f64]) -> (usize, f64) {
        nearest(&self.centroids, self.dim, x)
    }
}

fn nearest(centroids: &[f64], dim: usize, x: &[f64]) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (c, cen) in centroids.chunks_exact(dim).enumerate() {
        let d = sq_dist(x, cen);
        if d < best.1 {
            best = (c, d);
        }
    }
    best
}

fn assign(data: &Points, centroids: &[f64]) -> Vec<(usize, f64)> {
    let dim = data.dim();
    (0..data.len())
        .into_par_iter()
        .with_min_len(256)
        .map(|i| nearest(centroids, dim, data.row(i)))
        .collect()
}

fn inertia(assignment: &[(usize, f64)]) -> f64 {
    assignment.iter().map(|a| a.1).sum()
}

fn plus_plus_init(data: &Points, k: usize, rng: &mut impl Rng) -> Vec<f64> {
    let m = data.len();
    let mut centroids = Vec::with_capacity(k * data.dim());
    centroids.extend_from_slice(data.row(rng.random_range(0..m)));
    let mut d2: Vec<f64> = data.iter().map(|x| sq_dist(x, &centroids[..data.dim()])).collect();
    for _ in 1..k {
        let pick = match WeightedIndex::new(&d2) {
            Ok(dist) => dist.sample(rng),
            // every point already coincides with a centroid
            Err(_) => rng.random_range(0..m),
        };
        let chosen = data.row(pick).to_vec();
        for (d, x) in d2.iter_mut().zip(data.iter()) {
            *d = d.min(sq_dist(x, &chosen));
        }
        centroids.extend_from_slice(&chosen);
    }
    centroids
}

pub fn fit_kmeans(data: &Points, k: usize, seed: u64) -> Result<KmeansModel> {
    fit_kmeans_with(data, k, seed, KmeansParams::default())
}

/// k-means++ seeding followed by Lloyd iterations.
///
/// A cluster left empty by an update takes the point that lies farthest from its
/// own updated centroid, so `k` stays fixed.
pub fn fit_kmeans_with(data: &Points, k: usize, seed: u64, params: KmeansParams) -> Result<KmeansModel> {
    let m = data.len();
    if k == 0 {
        return Err(Error::arg("k-means needs k >= 1"));
    }
    if m < k {
        return Err(Error::arg(format!(
            "k-means with k={k} needs at least {k} points, got {m}"
        )));
    }
    let dim = data.dim();
    let mut rng = crate::seed::rng(seed);
    let mut centroids = plus_plus_init(data, k, &mut rng);
    let mut assignment = assign(data, &centroids);
    let mut history = vec![inertia(&assignment)];
    let mut iterations = 0;

    while iterations < params.max_iter {
        iterations += 1;
        let mut sums = vec![0.0; k * dim];
        let mut counts = vec![0usize; k];
        for (x, &(c, _)) in data.iter().zip(&assignment) {
            counts[c] += 1;
            for (s, v) in sums[c * dim..(c + 1) * dim].iter_mut().zip(x) {
                *s += v;
            }
        }
        let mut next = centroids.clone();
        for c in 0..k {
            if counts[c] > 0 {
                let n = counts[c] as f64;
                for (dst, s) in next[c * dim..(c + 1) * dim].iter_mut().zip(&sums[c * dim..(c + 1) * dim]) {
                    *dst = s / n;
                }
            }
        }
        let empty: Vec<usize> = (0..k).filter(|&c| counts[c] == 0).collect();
        if !empty.is_empty() {
            let mut far: Vec<(usize, f64)> = data
                .iter()
                .zip(&assignment)
                .enumerate()
                .map(|(i, (x, &(c, _)))| (i, sq_dist(x, &next[c * dim..(c + 1) * dim])))
                .collect();
            far.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(&b.0)));
            for (&c, &(i, _)) in empty.iter().zip(&far) {
                next[c * dim..(c + 1) * dim].copy_from_slice(data.row(i));
            }
        }
        let movement = next
            .chunks_exact(dim)
            .zip(centroids.chunks_exact(dim))
            .map(|(a, b)| sq_dist(a, b).sqrt())
            .fold(0.0, f64::max);
        centroids = next;
        assignment = assign(data, &centroids);
        history.push(inertia(&assignment));
        if movement < params.tol {
            break;
        }
    }

    Ok(KmeansModel {
        dim,
        centroids,
        inertia: *history.last().unwrap(),
        history,
        iterations,
    })
}
