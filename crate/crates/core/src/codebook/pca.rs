use nalgebra::{DMatrix, SymmetricEigen};

use super::Points;
use crate::{Error, Result};

/// Whitening divides each projected coordinate by `sqrt(variance + WHITEN_EPS)`.
const WHITEN_EPS: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq)]
pub struct PcaModel {
    mean: Vec<f64>,
    /// `p × d`, row-major, rows orthonormal and ordered by decreasing variance.
    basis: Vec<f64>,
    variances: Vec<f64>,
    whiten: bool,
}

impl PcaModel {
    pub fn from_parts(mean: Vec<f64>, basis: Vec<f64>, variances: Vec<f64>, whiten: bool) -> Result<Self> {
        let d = mean.len();
        let p = variances.len();
        if d == 0 || p == 0 || p > d || basis.len() != p * d {
            return Err(Error::arg(format!(
                "inconsistent PCA shapes: mean {d}, basis {}, variances {p}",
                basis.len()
            )));
        }
        Ok(Self {
            mean,
            basis,
            variances,
            whiten,
        })
    }

    /// Zero-mean identity projection in `d` dimensions.
    pub fn identity(d: usize) -> Self {
        let mut basis = vec![0.0; d * d];
        for i in 0..d {
            basis[i * d + i] = 1.0;
        }
        Self {
            mean: vec![0.0; d],
            basis,
            variances: vec![0.0; d],
            whiten: false,
        }
    }

    pub fn input_dim(&self) -> usize {
        self.mean.len()
    }

    pub fn output_dim(&self) -> usize {
        self.variances.len()
    }

    pub fn mean(&self) -> &[f64] {
        &self.mean
    }

    pub fn basis_row(&self, r: usize) -> &[f64] {
        let d = self.input_dim();
        &self.basis[r * d..(r + 1) * d]
    }

    pub fn basis(&self) -> &[f64] {
        &self.basis
    }

    /// Variance of the training data along each basis direction.
    pub fn variances(&self) -> &[f64] {
        &self.variances
    }

    pub fn whiten(&self) -> bool {
        self.whiten
    }

    pub fn project(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.input_dim() {
            return Err(Error::arg(format!(
                "PCA expects dimension {}, got {}",
                self.input_dim(),
                x.len()
            )));
        }
        let centered: Vec<f64> = x.iter().zip(&self.mean).map(|(a, m)| a - m).collect();
        Ok((0..self.output_dim())
            .map(|r| {
                let v: f64 = self.basis_row(r).iter().zip(&centered).map(|(b, c)| b * c).sum();
                if self.whiten {
                    v / (self.variances[r] + WHITEN_EPS).sqrt()
                } else {
                    v
                }
            })
            .collect())
    }

    /// Maps projected coordinates back to the input space (ignores whitening).
    pub fn reconstruct(&self, y: &[f64]) -> Vec<f64> {
        let mut out = self.mean.clone();
        for (r, &c) in y.iter().enumerate() {
            for (o, b) in out.iter_mut().zip(self.basis_row(r)) {
                *o += c * b;
            }
        }
        out
    }
}

/// Top-`p` principal directions of the mean-centred data.
///
/// Data with no variance still yields an orthonormal basis (whatever the eigensolver
/// returns for the zero matrix) with all variances 0.
pub fn fit_pca(data: &Points, p: usize, whiten: bool) -> Result<PcaModel> {
    let m = data.len();
    let d = data.dim();
    if m < 2 {
        return Err(Error::arg(format!("PCA needs at least 2 samples, got {m}")));
    }
    if p == 0 || p > d || p > m - 1 {
        return Err(Error::arg(format!(
            "PCA target dimension {p} must lie in 1..={} for {m} samples of dimension {d}",
            d.min(m - 1)
        )));
    }
    let mean = data.mean();
    let mut cov = DMatrix::<f64>::zeros(d, d);
    let mut centered = vec![0.0; d];
    for row in data.iter() {
        for (c, (x, mu)) in centered.iter_mut().zip(row.iter().zip(&mean)) {
            *c = x - mu;
        }
        for i in 0..d {
            let ci = centered[i];
            if ci == 0.0 {
                continue;
            }
            for j in i..d {
                cov[(i, j)] += ci * centered[j];
            }
        }
    }
    for i in 0..d {
        for j in i..d {
            let v = cov[(i, j)] / m as f64;
            cov[(i, j)] = v;
            cov[(j, i)] = v;
        }
    }
    let eig = SymmetricEigen::new(cov);
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&a, &b| {
        eig.eigenvalues[b]
            .partial_cmp(&eig.eigenvalues[a])
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a.cmp(&b))
    });
    let mut basis = Vec::with_capacity(p * d);
    let mut variances = Vec::with_capacity(p);
    for &col in order.iter().take(p) {
        let v = eig.eigenvectors.column(col);
        // sign convention: largest-magnitude coordinate is positive
        let mut pivot = 0;
        for j in 1..d {
            if v[j].abs() > v[pivot].abs() + 1e-12 {
                pivot = j;
            }
        }
        let sign = if v[pivot] < 0.0 { -1.0 } else { 1.0 };
        basis.extend(v.iter().map(|x| x * sign));
        variances.push(eig.eigenvalues[col].max(0.0));
    }
    PcaModel::from_parts(mean, basis, variances, whiten)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn random_points(m: usize, d: usize, seed: u64) -> Points {
        let mut rng = crate::seed::rng(seed);
        let data = (0..m * d).map(|_| rng.random_range(-3.0..3.0)).collect();
        Points::new(d, data).unwrap()
    }

    fn dot(a: &[f64], b: &[f64]) -> f64 {
        a.iter().zip(b).map(|(x, y)| x * y).sum()
    }

    #[test]
    fn line_y_equals_x() {
        let pts = Points::from_rows(&[[-2.0, -2.0], [0.0, 0.0], [1.0, 1.0], [4.0, 4.0]]).unwrap();
        let pca = fit_pca(&pts, 1, false).unwrap();
        let h = 1.0 / 2f64.sqrt();
        let b = pca.basis_row(0);
        assert!((b[0].abs() - h).abs() < 1e-9 && (b[1].abs() - h).abs() < 1e-9);
        assert!(b[0] * b[1] > 0.0);
    }

    #[test]
    fn full_rank_reconstruction() {
        let pts = random_points(40, 5, 3);
        let pca = fit_pca(&pts, 5, false).unwrap();
        for x in pts.iter() {
            let back = pca.reconstruct(&pca.project(x).unwrap());
            for (a, b) in back.iter().zip(x) {
                assert!((a - b).abs() < 1e-5);
            }
        }
    }

    #[test]
    fn identical_rows_have_zero_variance() {
        let pts = Points::from_rows(&[[1.0, 2.0, 3.0]; 6]).unwrap();
        let pca = fit_pca(&pts, 2, false).unwrap();
        assert!(pca.variances().iter().all(|&v| v == 0.0));
        assert_eq!(pca.project(&[1.0, 2.0, 3.0]).unwrap(), vec![0.0, 0.0]);
    }

    #[test]
    fn orthonormal_sorted_basis() {
        let pts = random_points(60, 8, 11);
        let pca = fit_pca(&pts, 6, false).unwrap();
        for i in 0..6 {
            for j in 0..6 {
                let want = if i == j { 1.0 } else { 0.0 };
                assert!((dot(pca.basis_row(i), pca.basis_row(j)) - want).abs() < 1e-6);
            }
        }
        assert!(pca.variances().windows(2).all(|w| w[0] >= w[1]));
    }

    #[test]
    fn projection_identities() {
        let pts = random_points(30, 4, 5);
        let pca = fit_pca(&pts, 4, false).unwrap();
        assert!(pca.project(pca.mean()).unwrap().iter().all(|v| v.abs() < 1e-12));
        for r in 0..4 {
            let x: Vec<f64> = pca.mean().iter().zip(pca.basis_row(r)).map(|(m, b)| m + b).collect();
            let y = pca.project(&x).unwrap();
            for (c, v) in y.iter().enumerate() {
                assert!((v - if c == r { 1.0 } else { 0.0 }).abs() < 1e-9);
            }
        }
        let x = [0.3, -1.2, 2.5, 0.7];
        let centered: Vec<f64> = x.iter().zip(pca.mean()).map(|(a, m)| a - m).collect();
        let y = pca.project(&x).unwrap();
        assert!((dot(&y, &y).sqrt() - dot(&centered, &centered).sqrt()).abs() < 1e-5);
        assert!(pca.project(&[1.0]).is_err());
    }

    #[test]
    fn argument_checks() {
        let pts = random_points(4, 3, 1);
        assert!(fit_pca(&pts, 0, false).is_err());
        assert!(fit_pca(&pts, 4, false).is_err());
        assert!(fit_pca(&random_points(3, 6, 1), 3, false).is_err());
        assert!(fit_pca(&random_points(1, 2, 1), 1, false).is_err());
    }

    #[test]
    fn whitening_gives_unit_variance() {
        let pts = random_points(200, 3, 9);
        let pca = fit_pca(&pts, 3, true).unwrap();
        let proj: Vec<Vec<f64>> = pts.iter().map(|x| pca.project(x).unwrap()).collect();
        for c in 0..3 {
            let var = proj.iter().map(|y| y[c] * y[c]).sum::<f64>() / proj.len() as f64;
            assert!((var - 1.0).abs() < 1e-6);
        }
    }
}
