use std::fs;
use std::path::Path;

use crate::{Error, Result};

/// Per-video, per-class scores; rows follow `video_ids`.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreMatrix {
    video_ids: Vec<String>,
    class_count: usize,
    scores: Vec<f64>,
}

impl ScoreMatrix {
    pub fn new(video_ids: Vec<String>, class_count: usize, scores: Vec<f64>) -> Result<Self> {
        if class_count == 0 {
            return Err(Error::arg("score matrix needs at least one class"));
        }
        if scores.len() != video_ids.len() * class_count {
            return Err(Error::arg(format!(
                "{} videos x {class_count} classes needs {} scores, got {}",
                video_ids.len(),
                video_ids.len() * class_count,
                scores.len()
            )));
        }
        if scores.iter().any(|v| !v.is_finite()) {
            return Err(Error::arg("non-finite score"));
        }
        Ok(Self {
            video_ids,
            class_count,
            scores,
        })
    }

    pub fn video_ids(&self) -> &[String] {
        &self.video_ids
    }

    pub fn class_count(&self) -> usize {
        self.class_count
    }

    pub fn len(&self) -> usize {
        self.video_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.video_ids.is_empty()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.scores[i * self.class_count..(i + 1) * self.class_count]
    }

    pub fn values(&self) -> &[f64] {
        &self.scores
    }

    pub fn position(&self, video_id: &str) -> Option<usize> {
        self.video_ids.iter().position(|v| v == video_id)
    }

    /// Index of the largest score in row `i`; ties go to the lowest class index.
    pub fn argmax(&self, i: usize) -> usize {
        let row = self.row(i);
        let mut best = 0;
        for (c, &v) in row.iter().enumerate().skip(1) {
            if v > row[best] {
                best = c;
            }
        }
        best
    }

    pub fn map_rows(&self, f: impl Fn(&[f64]) -> Vec<f64>) -> Result<Self> {
        let scores = self.scores.chunks_exact(self.class_count).flat_map(f).collect();
        Self::new(self.video_ids.clone(), self.class_count, scores)
    }

    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        let mut header = vec!["video_id".to_string()];
        header.extend((0..self.class_count).map(|c| format!("score_{c}")));
        w.write_record(&header).map_err(csv_err)?;
        for (i, id) in self.video_ids.iter().enumerate() {
            let mut rec = vec![id.clone()];
            // `{}` prints the shortest representation that re-parses to the same f64
            rec.extend(self.row(i).iter().map(|v| format!("{v}")));
            w.write_record(&rec).map_err(csv_err)?;
        }
        let bytes = w.into_inner().map_err(|e| Error::format(e.to_string()))?;
        Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let mut r = csv::ReaderBuilder::new()
            .has_headers(true)
            .flexible(true)
            .from_reader(text.as_bytes());
        let header = r.headers().map_err(csv_err)?.clone();
        if header.len() < 2 {
            return Err(Error::format_at(1, "score header needs video_id and at least one class"));
        }
        let class_count = header.len() - 1;
        let mut ids = Vec::new();
        let mut scores = Vec::new();
        for (i, rec) in r.records().enumerate() {
            let lineno = i + 2;
            let rec = rec.map_err(csv_err)?;
            if rec.len() != header.len() {
                return Err(Error::format_at(
                    lineno,
                    format!("ragged row: {} fields, header has {}", rec.len(), header.len()),
                ));
            }
            ids.push(rec[0].to_string());
            for field in rec.iter().skip(1) {
                let v: f64 = field
                    .trim()
                    .parse()
                    .map_err(|_| Error::format_at(lineno, format!("bad score '{field}'")))?;
                if !v.is_finite() {
                    return Err(Error::format_at(lineno, "non-finite score"));
                }
                scores.push(v);
            }
        }
        Self::new(ids, class_count, scores)
    }
}

fn csv_err(e: csv::Error) -> Error {
    let line = e.position().map(|p| p.line() as usize);
    Error::Format {
        line,
        message: e.to_string(),
    }
}

pub fn load_scores(path: impl AsRef<Path>) -> Result<ScoreMatrix> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    ScoreMatrix::from_csv(&text)
}

pub fn write_scores(s: &ScoreMatrix, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, s.to_csv()?).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn parses_2x3() {
        let s = ScoreMatrix::from_csv("video_id,score_0,score_1,score_2\na,0.1,0.2,0.7\nb,1,2,3\n")
            .unwrap();
        assert_eq!(s.len(), 2);
        assert_eq!(s.class_count(), 3);
        assert_eq!(s.row(1), &[1.0, 2.0, 3.0]);
        assert_eq!(s.argmax(0), 2);
    }

    #[test]
    fn ragged_row() {
        let err = ScoreMatrix::from_csv("video_id,s0,s1\na,1,2\nb,1\n").unwrap_err();
        match err {
            Error::Format { line, .. } => assert_eq!(line, Some(3)),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn argmax_ties_go_low() {
        let s = ScoreMatrix::new(vec!["a".into()], 3, vec![0.5, 0.5, 0.1]).unwrap();
        assert_eq!(s.argmax(0), 0);
    }

    #[test]
    fn file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("s.csv");
        let s = ScoreMatrix::new(vec!["x".into(), "y".into()], 2, vec![0.1, 1e-300, -3.5, 2.0 / 3.0])
            .unwrap();
        write_scores(&s, &p).unwrap();
        assert_eq!(load_scores(&p).unwrap(), s);
    }

    proptest! {
        #[test]
        fn csv_round_trip(vals in prop::collection::vec(-1e6f64..1e6, 1..40), c in 1usize..5) {
            let rows = vals.len() / c;
            prop_assume!(rows > 0);
            let ids = (0..rows).map(|i| format!("v{i}")).collect();
            let s = ScoreMatrix::new(ids, c, vals[..rows * c].to_vec()).unwrap();
            let back = ScoreMatrix::from_csv(&s.to_csv().unwrap()).unwrap();
            for (a, b) in back.values().iter().zip(s.values()) {
                prop_assert!((a - b).abs() <= 1e-12);
            }
        }
    }
}
