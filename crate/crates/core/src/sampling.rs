//! Evenly spaced selection of local features.
//!
//! Sample `i` of `n` drawn from a sequence of length `N` sits at the centre of the
//! `i`-th of `n` equal bins: `floor((i + 0.5) * N / n)`. When `n > N` the same rule
//! repeats rows, so short videos still produce exactly `n` samples.

use std::fmt;
use std::str::FromStr;

use crate::{Error, FeatureMatrix, Result};

/// How many local features to keep per video.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SamplePlan {
    Even(usize),
    /// Every available local feature.
    Dense,
}

impl SamplePlan {
    pub fn apply(self, seq: &FeatureMatrix) -> Result<FeatureMatrix> {
        match self {
            SamplePlan::Even(n) => sample_evenly(seq, n),
            SamplePlan::Dense => Ok(dense_plan(seq)),
        }
    }
}

impl fmt::Display for SamplePlan {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SamplePlan::Even(n) => write!(f, "{n}"),
            SamplePlan::Dense => f.write_str("dense"),
        }
    }
}

impl FromStr for SamplePlan {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        if s.eq_ignore_ascii_case("dense") || s.eq_ignore_ascii_case("max") {
            return Ok(SamplePlan::Dense);
        }
        match s.parse::<usize>() {
            Ok(0) => Err("sample count must be at least 1".into()),
            Ok(n) => Ok(SamplePlan::Even(n)),
            Err(_) => Err(format!("expected a sample count or 'dense', got '{s}'")),
        }
    }
}

/// Row indices picked from a sequence of `source_len` rows when `n` samples are requested.
pub fn even_indices(source_len: usize, n: usize) -> Result<Vec<usize>> {
    if n == 0 {
        return Err(Error::arg("sample count must be at least 1"));
    }
    if source_len == 0 {
        return Err(Error::arg("cannot sample from an empty sequence"));
    }
    // floor((2i + 1) * N / (2n)) in integer arithmetic
    Ok((0..n)
        .map(|i| ((2 * i + 1) * source_len) / (2 * n))
        .collect())
}

pub fn sample_evenly(seq: &FeatureMatrix, n: usize) -> Result<FeatureMatrix> {
    let idx = even_indices(seq.rows(), n)?;
    seq.select_rows(&idx)
}

pub fn dense_plan(seq: &FeatureMatrix) -> FeatureMatrix {
    seq.clone()
}
