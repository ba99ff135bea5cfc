use std::f64::consts::PI;

use rayon::prelude::*;

use super::{fit_kmeans, Points};
use crate::{Error, Result};

pub const VARIANCE_FLOOR: f64 = 1e-6;
pub const WEIGHT_FLOOR: f64 = 1e-4;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GmmParams {
    pub max_iter: usize,
    /// Stop when the relative log-likelihood improvement drops below this.
    pub rel_tol: f64,
}

impl Default for GmmParams {
    fn default() -> Self {
        Self {
            max_iter: 100,
            rel_tol: 1e-6,
        }
    }
}

/// Gaussian mixture with diagonal covariances.
#[derive(Debug, Clone, PartialEq)]
pub struct GmmModel {
    dim: usize,
    weights: Vec<f64>,
    means: Vec<f64>,
    variances: Vec<f64>,
    /// Total training log-likelihood of the final parameters.
    pub log_likelihood: f64,
    /// Log-likelihood of the k-means initialisation and after every EM iteration.
    pub history: Vec<f64>,
    pub iterations: usize,
}

impl GmmModel {
    /// Builds a model from raw parameters. Variances are clamped to the floor and
    /// weights renormalised to sum to one.
    pub fn from_parts(dim: usize, weights: Vec<f64>, means: Vec<f64>, variances: Vec<f64>) -> Result<Self> {
        let k = weights.len();
        if dim == 0 || k == 0 || means.len() != k * dim || variances.len() != k * dim {
            return Err(Error::arg("inconsistent GMM shapes"));
        }
        if weights.iter().chain(&means).chain(&variances).any(|v| !v.is_finite())
            || weights.iter().any(|&w| w <= 0.0)
        {
            return Err(Error::arg("GMM parameters must be finite with positive weights"));
        }
        let total: f64 = weights.iter().sum();
        Ok(Self {
            dim,
            weights: weights.iter().map(|w| w / total).collect(),
            means,
            variances: variances.into_iter().map(|v| v.max(VARIANCE_FLOOR)).collect(),
            log_likelihood: f64::NAN,
            history: Vec::new(),
            iterations: 0,
        })
    }

    pub fn k(&self) -> usize {
        self.weights.len()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn mean(&self, c: usize) -> &[f64] {
        &self.means[c * self.dim..(c + 1) * self.dim]
    }

    pub fn variance(&self, c: usize) -> &[f64] {
        &self.variances[c * self.dim..(c + 1) * self.dim]
    }

    pub fn means(&self) -> &[f64] {
        &self.means
    }

    pub fn variances(&self) -> &[f64] {
        &self.variances
    }

    /// `ln w_c - ½ Σ_j ln(2π σ²_cj)` per component.
    fn log_norms(&self) -> Vec<f64> {
        (0..self.k())
            .map(|c| {
                self.weights[c].ln()
                    - 0.5 * self.variance(c).iter().map(|v| (2.0 * PI * v).ln()).sum::<f64>()
            })
            .collect()
    }

    fn log_joint(&self, log_norms: &[f64], x: &[f64], out: &mut [f64]) {
        for (c, o) in out.iter_mut().enumerate() {
            let maha: f64 = x
                .iter()
                .zip(self.mean(c))
                .zip(self.variance(c))
                .map(|((xi, mu), var)| (xi - mu) * (xi - mu) / var)
                .sum();
            *o = log_norms[c] - 0.5 * maha;
        }
    }

    /// Soft assignments `γ_c ∝ w_c N(x; μ_c, diag σ²_c)`, normalised in log space.
    pub fn posteriors(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.dim {
            return Err(Error::arg(format!(
                "GMM expects dimension {}, got {}",
                self.dim,
                x.len()
            )));
        }
        let mut lj = vec![0.0; self.k()];
        self.log_joint(&self.log_norms(), x, &mut lj);
        softmax_in_place(&mut lj);
        Ok(lj)
    }

    pub fn log_likelihood_of(&self, data: &Points) -> f64 {
        e_step(self, data).0
    }
}

/// Replaces log-weights by their normalised exponentials and returns the log of their sum.
///
/// Normalising by the explicit sum keeps the result on the simplex even when the
/// log-weights are so large that `max + ln(sum)` rounds back to `max`.
fn softmax_in_place(v: &mut [f64]) -> f64 {
    let max = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        let u = 1.0 / v.len() as f64;
        v.iter_mut().for_each(|x| *x = u);
        return max;
    }
    v.iter_mut().for_each(|x| *x = (*x - max).exp());
    let sum: f64 = v.iter().sum();
    v.iter_mut().for_each(|x| *x /= sum);
    max + sum.ln()
}

/// Total log-likelihood and the row-major `m × k` responsibilities.
fn e_step(model: &GmmModel, data: &Points) -> (f64, Vec<f64>) {
    let k = model.k();
    let norms = model.log_norms();
    let mut resp = vec![0.0; data.len() * k];
    let lls: Vec<f64> = resp
        .par_chunks_mut(k)
        .zip(0..data.len())
        .with_min_len(128)
        .map(|(r, i)| {
            model.log_joint(&norms, data.row(i), r);
            softmax_in_place(r)
        })
        .collect();
    (lls.iter().sum(), resp)
}

/// Maximises `Σ n_c ln w_c` over the simplex subject to `w_c >= floor`.
///
/// Components whose unconstrained share falls below the floor are pinned to it and
/// the rest share the remaining mass in proportion to `n_c`.
pub(crate) fn floored_weights(counts: &[f64], floor: f64) -> Vec<f64> {
    let k = counts.len();
    let mut pinned = vec![false; k];
    loop {
        let free_mass = 1.0 - floor * pinned.iter().filter(|&&p| p).count() as f64;
        let free_total: f64 = counts.iter().zip(&pinned).filter(|(_, &p)| !p).map(|(c, _)| c).sum();
        let mut weights = vec![floor; k];
        let mut changed = false;
        for c in 0..k {
            if pinned[c] {
                continue;
            }
            let w = if free_total > 0.0 {
                counts[c] / free_total * free_mass
            } else {
                free_mass / (k - pinned.iter().filter(|&&p| p).count()) as f64
            };
            if w < floor {
                pinned[c] = true;
                changed = true;
            } else {
                weights[c] = w;
            }
        }
        if !changed {
            return weights;
        }
    }
}

fn m_step(model: &mut GmmModel, data: &Points, resp: &[f64]) {
    let k = model.k();
    let dim = model.dim;
    let mut counts = vec![0.0; k];
    let mut sums = vec![0.0; k * dim];
    for (x, r) in data.iter().zip(resp.chunks_exact(k)) {
        for c in 0..k {
            let g = r[c];
            if g == 0.0 {
                continue;
            }
            counts[c] += g;
            for (s, v) in sums[c * dim..(c + 1) * dim].iter_mut().zip(x) {
                *s += g * v;
            }
        }
    }
    for c in 0..k {
        if counts[c] <= 0.0 {
            continue;
        }
        for j in 0..dim {
            model.means[c * dim + j] = sums[c * dim + j] / counts[c];
        }
    }
    let mut sq = vec![0.0; k * dim];
    for (x, r) in data.iter().zip(resp.chunks_exact(k)) {
        for c in 0..k {
            let g = r[c];
            if g == 0.0 {
                continue;
            }
            let mu = &model.means[c * dim..(c + 1) * dim];
            for ((s, v), m) in sq[c * dim..(c + 1) * dim].iter_mut().zip(x).zip(mu) {
                *s += g * (v - m) * (v - m);
            }
        }
    }
    for c in 0..k {
        if counts[c] <= 0.0 {
            continue;
        }
        for j in 0..dim {
            model.variances[c * dim + j] = (sq[c * dim + j] / counts[c]).max(VARIANCE_FLOOR);
        }
    }
    model.weights = floored_weights(&counts, WEIGHT_FLOOR);
}

pub fn fit_gmm(data: &Points, k: usize, seed: u64) -> Result<GmmModel> {
    fit_gmm_with(data, k, seed, GmmParams::default())
}

/// EM for a diagonal GMM, initialised from a k-means run with the same seed.
pub fn fit_gmm_with(data: &Points, k: usize, seed: u64, params: GmmParams) -> Result<GmmModel> {
    if k == 0 || (k as f64) * WEIGHT_FLOOR > 1.0 {
        return Err(Error::arg(format!("GMM component count {k} out of range")));
    }
    let km = fit_kmeans(data, k, seed)?;
    let dim = data.dim();
    let mut counts = vec![0.0; k];
    let mut sums = vec![0.0; k * dim];
    let mut sq = vec![0.0; k * dim];
    let labels: Vec<usize> = data.iter().map(|x| km.nearest(x).0).collect();
    for (x, &c) in data.iter().zip(&labels) {
        counts[c] += 1.0;
        for (s, v) in sums[c * dim..(c + 1) * dim].iter_mut().zip(x) {
            *s += v;
        }
    }
    let mut means = km.centroids().to_vec();
    for c in 0..k {
        if counts[c] > 0.0 {
            for j in 0..dim {
                means[c * dim + j] = sums[c * dim + j] / counts[c];
            }
        }
    }
    for (x, &c) in data.iter().zip(&labels) {
        for j in 0..dim {
            let d = x[j] - means[c * dim + j];
            sq[c * dim + j] += d * d;
        }
    }
    let variances = (0..k * dim)
        .map(|i| {
            let c = i / dim;
            if counts[c] > 0.0 { sq[i] / counts[c] } else { 0.0 }.max(VARIANCE_FLOOR)
        })
        .collect();
    let weights = floored_weights(&counts, WEIGHT_FLOOR);
    let mut model = GmmModel {
        dim,
        weights,
        means,
        variances,
        log_likelihood: f64::NAN,
        history: Vec::new(),
        iterations: 0,
    };

    let (mut ll, mut resp) = e_step(&model, data);
    model.history.push(ll);
    while model.iterations < params.max_iter {
        model.iterations += 1;
        m_step(&mut model, data, &resp);
        let (next_ll, next_resp) = e_step(&model, data);
        model.history.push(next_ll);
        let improvement = (next_ll - ll) / ll.abs().max(f64::MIN_POSITIVE);
        ll = next_ll;
        resp = next_resp;
        if improvement < params.rel_tol {
            break;
        }
    }
    model.log_likelihood = ll;
    Ok(model)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;
    use rand_distr::{Distribution, Normal};

    #[test]
    fn single_component_is_the_mle() {
        let mut rng = crate::seed::rng(8);
        let rows: Vec<[f64; 3]> = (0..50)
            .map(|_| [rng.random_range(-1.0..1.0), rng.random_range(0.0..5.0), 2.0])
            .collect();
        let pts = Points::from_rows(&rows).unwrap();
        let g = fit_gmm(&pts, 1, 1).unwrap();
        assert_eq!(g.weights(), &[1.0]);
        let mean = pts.mean();
        for j in 0..3 {
            assert!((g.mean(0)[j] - mean[j]).abs() < 1e-12);
            let var = pts.iter().map(|x| (x[j] - mean[j]).powi(2)).sum::<f64>() / 50.0;
            assert!((g.variance(0)[j] - var.max(VARIANCE_FLOOR)).abs() < 1e-12);
        }
        // constant dimension sits on the floor
        assert_eq!(g.variance(0)[2], VARIANCE_FLOOR);
        assert!(g.log_likelihood.is_finite());
    }

    #[test]
    fn separated_clouds_weights() {
        let mut rng = crate::seed::rng(4);
        let noise = Normal::new(0.0, 0.5).unwrap();
        let mut rows = Vec::new();
        for (center, n) in [(-6.0, 70), (6.0, 130)] {
            for _ in 0..n {
                rows.push([center + noise.sample(&mut rng), noise.sample(&mut rng)]);
            }
        }
        let g = fit_gmm(&Points::from_rows(&rows).unwrap(), 2, 3).unwrap();
        let (small, big) = if g.mean(0)[0] < 0.0 { (0, 1) } else { (1, 0) };
        assert!((g.weights()[small] - 0.35).abs() < 0.02);
        assert!((g.weights()[big] - 0.65).abs() < 0.02);
        assert!(g.history.windows(2).all(|w| w[1] >= w[0] - 1e-9));
    }

    #[test]
    fn posteriors_basic_cases() {
        let one = GmmModel::from_parts(2, vec![1.0], vec![0.0, 0.0], vec![1.0, 1.0]).unwrap();
        assert_eq!(one.posteriors(&[3.0, -1.0]).unwrap(), vec![1.0]);

        let sym = GmmModel::from_parts(1, vec![0.5, 0.5], vec![-2.0, 2.0], vec![1.0, 1.0]).unwrap();
        let g = sym.posteriors(&[0.0]).unwrap();
        assert!((g[0] - 0.5).abs() < 1e-9 && (g[1] - 0.5).abs() < 1e-9);

        // at x = 3: log-odds = ((3+2)² - (3-2)²) / 2 = 12, so γ_1 = 1/(1+e^-12)
        let g = sym.posteriors(&[3.0]).unwrap();
        assert!(g[1] > 0.999);
        assert!((g[1] - 1.0 / (1.0 + (-12.0f64).exp())).abs() < 1e-12);

        // far away: no overflow to NaN
        let g = sym.posteriors(&[1e150]).unwrap();
        assert!(g.iter().all(|v| v.is_finite()));
        assert!((g.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!(sym.posteriors(&[0.0, 1.0]).is_err());
    }

    #[test]
    fn weight_floor_projection() {
        let w = floored_weights(&[100.0, 0.0, 0.0], 1e-4);
        assert_eq!(&w[1..], &[1e-4, 1e-4]);
        assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        let w = floored_weights(&[1.0, 3.0], 1e-4);
        assert!((w[0] - 0.25).abs() < 1e-15 && (w[1] - 0.75).abs() < 1e-15);
    }

    #[test]
    fn rejects_k_above_points() {
        let pts = Points::from_rows(&[[0.0], [1.0]]).unwrap();
        assert!(matches!(fit_gmm(&pts, 3, 0), Err(Error::Argument(_))));
    }
}
