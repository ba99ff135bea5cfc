//! Dual C-SVM solver using SMO with maximal-violating-pair working-set selection.
//!
//! Solves `min ½ αᵀQα − eᵀα` subject to `0 ≤ α ≤ C`, `yᵀα = 0`, where
//! `Q_ij = y_i y_j K_ij`. Decision values are `Σ α_i y_i K(x_i, x) + b`.

use crate::{Error, Result};

/// Used in place of a non-positive curvature along the pair direction.
const TAU: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SvmParams {
    pub c: f64,
    /// Stop when the maximal KKT violation `m(α) − M(α)` falls below this.
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for SvmParams {
    fn default() -> Self {
        Self {
            c: crate::DEFAULT_C,
            tol: 1e-3,
            max_iter: 100_000,
        }
    }
}

/// Precomputed symmetric kernel matrix, row-major.
#[derive(Debug, Clone)]
pub struct KernelMatrix {
    n: usize,
    values: Vec<f64>,
}

impl KernelMatrix {
    pub fn new(n: usize, values: Vec<f64>) -> Self {
        assert_eq!(values.len(), n * n, "kernel matrix must be n×n");
        Self { n, values }
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.n + j]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.n..(i + 1) * self.n]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DualSolution {
    pub alpha: Vec<f64>,
    pub bias: f64,
    pub iterations: usize,
    /// Maximal KKT violation at exit.
    pub gap: f64,
}

pub fn solve(k: &KernelMatrix, y: &[f64], params: &SvmParams) -> Result<DualSolution> {
    let n = k.len();
    if y.len() != n {
        return Err(Error::arg("label count does not match kernel matrix"));
    }
    if y.iter().any(|&v| v != 1.0 && v != -1.0) {
        return Err(Error::arg("binary labels must be +1 or -1"));
    }
    if !y.contains(&1.0) || !y.contains(&-1.0) {
        return Err(Error::arg("binary problem needs both positive and negative examples"));
    }
    if params.c <= 0.0 || !params.c.is_finite() {
        return Err(Error::arg(format!("C must be positive, got {}", params.c)));
    }
    let c = params.c;
    let mut alpha = vec![0.0; n];
    let mut grad = vec![-1.0; n];
    let mut iterations = 0;

    let up = |a: f64, yi: f64| (yi > 0.0 && a < c) || (yi < 0.0 && a > 0.0);
    let low = |a: f64, yi: f64| (yi > 0.0 && a > 0.0) || (yi < 0.0 && a < c);

    let gap = loop {
        let mut i = usize::MAX;
        let mut gmax = f64::NEG_INFINITY;
        let mut j = usize::MAX;
        let mut gmin = f64::INFINITY;
        for t in 0..n {
            let v = -y[t] * grad[t];
            if up(alpha[t], y[t]) && v > gmax {
                gmax = v;
                i = t;
            }
            if low(alpha[t], y[t]) && v < gmin {
                gmin = v;
                j = t;
            }
        }
        let gap = gmax - gmin;
        if i == usize::MAX || j == usize::MAX || gap < params.tol {
            break gap.max(0.0);
        }
        if iterations >= params.max_iter {
            return Err(Error::NotConverged {
                iterations,
                violation: gap,
            });
        }
        iterations += 1;

        let (old_i, old_j) = (alpha[i], alpha[j]);
        let quad = {
            let q = k.get(i, i) + k.get(j, j) - 2.0 * k.get(i, j);
            if q > 0.0 { q } else { TAU }
        };
        if y[i] != y[j] {
            let delta = (-grad[i] - grad[j]) / quad;
            let diff = alpha[i] - alpha[j];
            alpha[i] += delta;
            alpha[j] += delta;
            if diff > 0.0 {
                if alpha[j] < 0.0 {
                    alpha[j] = 0.0;
                    alpha[i] = diff;
                }
            } else if alpha[i] < 0.0 {
                alpha[i] = 0.0;
                alpha[j] = -diff;
            }
            if diff > 0.0 {
                if alpha[i] > c {
                    alpha[i] = c;
                    alpha[j] = c - diff;
                }
            } else if alpha[j] > c {
                alpha[j] = c;
                alpha[i] = c + diff;
            }
        } else {
            let delta = (grad[i] - grad[j]) / quad;
            let sum = alpha[i] + alpha[j];
            alpha[i] -= delta;
            alpha[j] += delta;
            if sum > c {
                if alpha[i] > c {
                    alpha[i] = c;
                    alpha[j] = sum - c;
                }
            } else if alpha[j] < 0.0 {
                alpha[j] = 0.0;
                alpha[i] = sum;
            }
            if sum > c {
                if alpha[j] > c {
                    alpha[j] = c;
                    alpha[i] = sum - c;
                }
            } else if alpha[i] < 0.0 {
                alpha[i] = 0.0;
                alpha[j] = sum;
            }
        }

        let di = alpha[i] - old_i;
        let dj = alpha[j] - old_j;
        let (ki, kj) = (k.row(i), k.row(j));
        for t in 0..n {
            grad[t] += y[t] * (y[i] * ki[t] * di + y[j] * kj[t] * dj);
        }
    };

    // bias: average over free vectors, otherwise the midpoint of the feasible interval
    let mut ub = f64::INFINITY;
    let mut lb = f64::NEG_INFINITY;
    let mut free_sum = 0.0;
    let mut free = 0usize;
    for t in 0..n {
        let yg = y[t] * grad[t];
        if alpha[t] >= c {
            if y[t] < 0.0 {
                ub = ub.min(yg);
            } else {
                lb = lb.max(yg);
            }
        } else if alpha[t] <= 0.0 {
            if y[t] > 0.0 {
                ub = ub.min(yg);
            } else {
                lb = lb.max(yg);
            }
        } else {
            free += 1;
            free_sum += yg;
        }
    }
    let rho = if free > 0 { free_sum / free as f64 } else { (ub + lb) / 2.0 };

    Ok(DualSolution {
        alpha,
        bias: -rho,
        iterations,
        gap,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn linear_gram(xs: &[[f64; 2]]) -> KernelMatrix {
        let n = xs.len();
        let mut v = Vec::with_capacity(n * n);
        for a in xs {
            for b in xs {
                v.push(a[0] * b[0] + a[1] * b[1]);
            }
        }
        KernelMatrix::new(n, v)
    }

    #[test]
    fn two_points_hard_margin() {
        // points at x = ±1 on a line: w = 1, b = 0, α = ½ each
        let k = linear_gram(&[[1.0, 0.0], [-1.0, 0.0]]);
        let s = solve(&k, &[1.0, -1.0], &SvmParams::default()).unwrap();
        assert!((s.alpha[0] - 0.5).abs() < 1e-12 && (s.alpha[1] - 0.5).abs() < 1e-12);
        assert!(s.bias.abs() < 1e-12);
    }

    #[test]
    fn four_points_margin_two() {
        // positives at x=2 and x=3, negatives at x=0 and x=-1: hyperplane x=1, w=1, b=-1
        let xs = [[2.0, 0.0], [3.0, 0.0], [0.0, 0.0], [-1.0, 0.0]];
        let y = [1.0, 1.0, -1.0, -1.0];
        let s = solve(&linear_gram(&xs), &y, &SvmParams { tol: 1e-12, ..Default::default() }).unwrap();
        let w: f64 = xs.iter().zip(&s.alpha).zip(&y).map(|((x, a), yy)| a * yy * x[0]).sum();
        assert!((w - 1.0).abs() < 1e-9, "w = {w}");
        assert!((s.bias + 1.0).abs() < 1e-9, "b = {}", s.bias);
        let sum: f64 = s.alpha.iter().zip(&y).map(|(a, yy)| a * yy).sum();
        assert!(sum.abs() < 1e-12);
    }

    #[test]
    fn rejects_bad_input() {
        let k = linear_gram(&[[1.0, 0.0], [-1.0, 0.0]]);
        assert!(solve(&k, &[1.0, 1.0], &SvmParams::default()).is_err());
        assert!(solve(&k, &[1.0, 0.0], &SvmParams::default()).is_err());
        assert!(solve(&k, &[1.0, -1.0], &SvmParams { c: 0.0, ..Default::default() }).is_err());
    }

    #[test]
    fn iteration_cap_is_reported() {
        let xs: Vec<[f64; 2]> = (0..20).map(|i| [(i as f64).sin(), (i as f64 * 1.7).cos()]).collect();
        let y: Vec<f64> = (0..20).map(|i| if i % 3 == 0 { 1.0 } else { -1.0 }).collect();
        let err = solve(&linear_gram(&xs), &y, &SvmParams { max_iter: 1, tol: 1e-12, ..Default::default() })
            .unwrap_err();
        assert!(matches!(err, Error::NotConverged { iterations: 1, .. }));
    }
}
