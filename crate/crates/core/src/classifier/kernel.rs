use std::fmt;
use std::str::FromStr;

use rand::seq::index;

use crate::{Error, Result};

/// Denominator guard in the chi-square terms.
pub const CHI2_EPS: f64 = 1e-10;
/// Features used to estimate the mean chi-square distance.
pub const GAMMA_SAMPLE_CAP: usize = 1000;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KernelKind {
    /// `exp(-γ Σ (x-y)² / (x+y))`
    Chi2,
    /// `Σ 2xy / (x+y)`
    AdditiveChi2,
    Linear,
}

impl KernelKind {
    pub fn as_str(self) -> &'static str {
        match self {
            KernelKind::Chi2 => "chi2",
            KernelKind::AdditiveChi2 => "additive-chi2",
            KernelKind::Linear => "linear",
        }
    }

    pub fn needs_nonnegative(self) -> bool {
        !matches!(self, KernelKind::Linear)
    }
}

impl fmt::Display for KernelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for KernelKind {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "chi2" => Ok(KernelKind::Chi2),
            "additive-chi2" => Ok(KernelKind::AdditiveChi2),
            "linear" => Ok(KernelKind::Linear),
            other => Err(format!("unknown kernel '{other}' (chi2|additive-chi2|linear)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Gamma {
    /// One over the mean pairwise chi-square distance of the training set.
    Auto,
    Fixed(f64),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KernelSpec {
    pub kind: KernelKind,
    pub gamma: Gamma,
}

impl KernelSpec {
    pub fn chi2(gamma: f64) -> Self {
        Self {
            kind: KernelKind::Chi2,
            gamma: Gamma::Fixed(gamma),
        }
    }

    pub fn chi2_auto() -> Self {
        Self {
            kind: KernelKind::Chi2,
            gamma: Gamma::Auto,
        }
    }

    pub fn linear() -> Self {
        Self {
            kind: KernelKind::Linear,
            gamma: Gamma::Fixed(1.0),
        }
    }

    pub fn additive_chi2() -> Self {
        Self {
            kind: KernelKind::AdditiveChi2,
            gamma: Gamma::Fixed(1.0),
        }
    }
}

pub fn chi2_distance(x: &[f64], y: &[f64]) -> f64 {
    x.iter()
        .zip(y)
        .map(|(a, b)| {
            let d = a - b;
            d * d / (a + b + CHI2_EPS)
        })
        .sum()
}

fn check(spec: &KernelSpec, x: &[f64], y: &[f64]) -> Result<()> {
    if x.len() != y.len() {
        return Err(Error::arg(format!(
            "kernel inputs differ in dimension: {} vs {}",
            x.len(),
            y.len()
        )));
    }
    if spec.kind.needs_nonnegative() && x.iter().chain(y).any(|&v| v < 0.0) {
        return Err(Error::arg("chi-square kernel needs non-negative inputs"));
    }
    Ok(())
}

/// Kernel value without input validation.
pub(crate) fn eval_unchecked(kind: KernelKind, gamma: f64, x: &[f64], y: &[f64]) -> f64 {
    match kind {
        KernelKind::Linear => x.iter().zip(y).map(|(a, b)| a * b).sum(),
        KernelKind::Chi2 => (-gamma * chi2_distance(x, y)).exp(),
        KernelKind::AdditiveChi2 => x
            .iter()
            .zip(y)
            .map(|(a, b)| 2.0 * a * b / (a + b + CHI2_EPS))
            .sum(),
    }
}

pub fn kernel_eval(spec: &KernelSpec, x: &[f64], y: &[f64]) -> Result<f64> {
    check(spec, x, y)?;
    let gamma = match spec.gamma {
        Gamma::Fixed(g) if g > 0.0 => g,
        Gamma::Fixed(g) => return Err(Error::arg(format!("gamma must be positive, got {g}"))),
        Gamma::Auto => return Err(Error::arg("gamma must be resolved before evaluating the kernel")),
    };
    Ok(eval_unchecked(spec.kind, gamma, x, y))
}

/// `1 / mean pairwise chi-square distance`, estimated on at most
/// [`GAMMA_SAMPLE_CAP`] features; falls back to 1 when every distance is 0.
pub fn resolve_gamma<R: AsRef<[f64]>>(train: &[R], seed: u64) -> Result<f64> {
    if train.len() < 2 {
        return Err(Error::arg("resolving gamma needs at least 2 training features"));
    }
    let idx: Vec<usize> = if train.len() > GAMMA_SAMPLE_CAP {
        let mut v = index::sample(&mut crate::seed::rng(seed), train.len(), GAMMA_SAMPLE_CAP).into_vec();
        v.sort_unstable();
        v
    } else {
        (0..train.len()).collect()
    };
    let mut total = 0.0;
    let mut pairs = 0usize;
    for (a, &i) in idx.iter().enumerate() {
        for &j in &idx[a + 1..] {
            total += chi2_distance(train[i].as_ref(), train[j].as_ref());
            pairs += 1;
        }
    }
    let mean = total / pairs as f64;
    Ok(if mean > 0.0 && mean.is_finite() { 1.0 / mean } else { 1.0 })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn chi2_identity_is_one() {
        let x = [0.2, 0.0, 0.8];
        assert_eq!(kernel_eval(&KernelSpec::chi2(3.0), &x, &x).unwrap(), 1.0);
    }

    #[test]
    fn linear_dot() {
        assert_eq!(kernel_eval(&KernelSpec::linear(), &[1.0, 2.0], &[3.0, 4.0]).unwrap(), 11.0);
    }

    #[test]
    fn chi2_hand_value() {
        let got = kernel_eval(&KernelSpec::chi2(1.0), &[1.0, 0.0], &[0.0, 1.0]).unwrap();
        let want = (-(1.0 / (1.0 + CHI2_EPS) + 1.0 / (1.0 + CHI2_EPS))).exp();
        assert_eq!(got, want);
        assert!((got - (-2.0f64).exp()).abs() < 1e-9);
    }

    #[test]
    fn argument_errors() {
        let spec = KernelSpec::chi2(1.0);
        assert!(kernel_eval(&spec, &[-0.1, 1.0], &[0.0, 1.0]).is_err());
        assert!(kernel_eval(&spec, &[1.0], &[0.0, 1.0]).is_err());
        assert!(kernel_eval(&KernelSpec::chi2_auto(), &[1.0], &[1.0]).is_err());
        assert!(kernel_eval(&KernelSpec::linear(), &[-1.0], &[1.0]).is_ok());
    }

    #[test]
    fn gamma_from_single_pair() {
        // (1-0)²/1 + (0-1)²/1 = 2 (up to the epsilon guard)
        let g = resolve_gamma(&[vec![1.0, 0.0], vec![0.0, 1.0]], 0).unwrap();
        assert!((g - 0.5).abs() < 1e-9);
        assert_eq!(resolve_gamma(&vec![vec![0.3, 0.7]; 5], 0).unwrap(), 1.0);
        assert!(resolve_gamma(&[vec![1.0]], 0).is_err());
    }

    #[test]
    fn gamma_tracks_scale() {
        let a = [vec![1.0, 0.0], vec![0.0, 1.0], vec![0.5, 0.5]];
        let b: Vec<Vec<f64>> = a.iter().map(|v| v.iter().map(|x| x * 4.0).collect()).collect();
        let ga = resolve_gamma(&a, 0).unwrap();
        let gb = resolve_gamma(&b, 0).unwrap();
        // chi-square distance is 1-homogeneous
        assert!((ga / gb - 4.0).abs() < 1e-6);
    }
}
