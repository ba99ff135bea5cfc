//! Pooling of local features into a global feature, optionally per temporal segment.

use std::fmt;
use std::str::FromStr;

use crate::{Error, FeatureMatrix, Result, Stream};

/// How a global feature was produced.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Method {
    Mean,
    Max,
    MeanStd,
    Bow,
    Vlad,
    Fv,
}

impl Method {
    pub const ALL: [Method; 6] = [
        Method::Mean,
        Method::Max,
        Method::MeanStd,
        Method::Bow,
        Method::Vlad,
        Method::Fv,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Method::Mean => "mean",
            Method::Max => "max",
            Method::MeanStd => "mean_std",
            Method::Bow => "bow",
            Method::Vlad => "vlad",
            Method::Fv => "fv",
        }
    }

    /// True for the codebook-based encoders.
    pub fn is_encoder(self) -> bool {
        matches!(self, Method::Bow | Method::Vlad | Method::Fv)
    }

    pub fn pooler(self) -> Option<Pooler> {
        match self {
            Method::Mean => Some(Pooler::Mean),
            Method::Max => Some(Pooler::Max),
            Method::MeanStd => Some(Pooler::MeanStd),
            _ => None,
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Method {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        Method::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| format!("unknown method '{s}' (mean|max|mean_std|bow|vlad|fv)"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Pooler {
    Mean,
    Max,
    MeanStd,
}

impl Pooler {
    pub fn pool(self, seq: &FeatureMatrix) -> Result<Vec<f64>> {
        match self {
            Pooler::Mean => pool_mean(seq),
            Pooler::Max => pool_max(seq),
            Pooler::MeanStd => pool_mean_std(seq),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GlobalFeature {
    pub data: Vec<f64>,
    pub method: Method,
    pub segments: usize,
    pub video_id: String,
    pub stream: Stream,
    pub feature_set: String,
}

fn check_nonempty(seq: &FeatureMatrix) -> Result<()> {
    if seq.rows() == 0 {
        return Err(Error::arg("cannot pool an empty sequence"));
    }
    Ok(())
}

pub fn pool_mean(seq: &FeatureMatrix) -> Result<Vec<f64>> {
    check_nonempty(seq)?;
    let mut sum = vec![0.0f64; seq.cols()];
    for row in seq.iter_rows() {
        for (s, &v) in sum.iter_mut().zip(row) {
            *s += v as f64;
        }
    }
    let n = seq.rows() as f64;
    Ok(sum.into_iter().map(|s| s / n).collect())
}

pub fn pool_max(seq: &FeatureMatrix) -> Result<Vec<f64>> {
    check_nonempty(seq)?;
    let mut out = seq.row_f64(0);
    for row in seq.iter_rows().skip(1) {
        for (o, &v) in out.iter_mut().zip(row) {
            *o = o.max(v as f64);
        }
    }
    Ok(out)
}

/// Mean followed by the population standard deviation of each dimension.
pub fn pool_mean_std(seq: &FeatureMatrix) -> Result<Vec<f64>> {
    let mean = pool_mean(seq)?;
    let mut var = vec![0.0f64; seq.cols()];
    for row in seq.iter_rows() {
        for ((acc, &v), m) in var.iter_mut().zip(row).zip(&mean) {
            let d = v as f64 - m;
            *acc += d * d;
        }
    }
    let n = seq.rows() as f64;
    let mut out = mean;
    out.extend(var.into_iter().map(|v| (v / n).sqrt()));
    Ok(out)
}

/// Splits `n` rows into `s` contiguous spans `(start, len)`.
///
/// The first and last spans get `floor(n / s)` rows; the remainder is handed to the
/// interior spans, innermost first (for `s = 3` the middle span takes all of it,
/// so 25 rows become 8/9/8). With `s = 2` both spans count as interior.
pub fn segment_bounds(n: usize, s: usize) -> Result<Vec<(usize, usize)>> {
    if s == 0 {
        return Err(Error::arg("segment count must be at least 1"));
    }
    if n < s {
        return Err(Error::arg(format!(
            "cannot split {n} local features into {s} segments"
        )));
    }
    let base = n / s;
    let mut sizes = vec![base; s];
    let interior: Vec<usize> = if s >= 3 { (1..s - 1).collect() } else { (0..s).collect() };
    let mut order = interior;
    // innermost first; ties (equal distance from the centre) go to the lower index
    order.sort_by(|&a, &b| {
        let da = (2 * a + 1).abs_diff(s);
        let db = (2 * b + 1).abs_diff(s);
        da.cmp(&db).then(a.cmp(&b))
    });
    let mut remainder = n - base * s;
    if s == 3 {
        sizes[1] += remainder;
        remainder = 0;
    }
    for &seg in order.iter().cycle() {
        if remainder == 0 {
            break;
        }
        sizes[seg] += 1;
        remainder -= 1;
    }
    let mut start = 0;
    Ok(sizes
        .into_iter()
        .map(|len| {
            let span = (start, len);
            start += len;
            span
        })
        .collect())
}

/// Applies `pooler` to each of `s` temporal segments and concatenates the results in order.
pub fn aggregate_segmented<F>(seq: &FeatureMatrix, s: usize, pooler: F) -> Result<Vec<f64>>
where
    F: Fn(&FeatureMatrix) -> Result<Vec<f64>>,
{
    let bounds = segment_bounds(seq.rows(), s)?;
    let mut out = Vec::new();
    for (start, len) in bounds {
        out.extend(pooler(&seq.slice_rows(start, len)?)?);
    }
    Ok(out)
}
