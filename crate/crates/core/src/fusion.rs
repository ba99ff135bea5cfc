//! Weighted late fusion of score matrices and split accuracy.

use std::collections::HashMap;

use crate::{Error, Manifest, Result, ScoreMatrix, SplitRole};

/// `Σ w_i S_i` over aligned score matrices; no renormalisation.
pub fn fuse(inputs: &[(&ScoreMatrix, f64)]) -> Result<ScoreMatrix> {
    let (first, _) = inputs
        .first()
        .ok_or_else(|| Error::arg("fusion needs at least one score matrix"))?;
    if inputs.iter().any(|(_, w)| !(*w >= 0.0) || !w.is_finite()) {
        return Err(Error::arg("fusion weights must be finite and non-negative"));
    }
    if inputs.iter().all(|(_, w)| *w == 0.0) {
        return Err(Error::arg("fusion weights are all zero"));
    }
    for (s, _) in &inputs[1..] {
        if s.class_count() != first.class_count() {
            return Err(Error::integrity(format!(
                "class counts differ: {} vs {}",
                first.class_count(),
                s.class_count()
            )));
        }
        if s.video_ids() != first.video_ids() {
            return Err(Error::integrity("score matrices list different videos or orders"));
        }
    }
    let mut out = vec![0.0; first.values().len()];
    for (s, w) in inputs {
        for (o, v) in out.iter_mut().zip(s.values()) {
            *o += w * v;
        }
    }
    ScoreMatrix::new(first.video_ids().to_vec(), first.class_count(), out)
}

/// Rescales each row to [0, 1]; constant rows become all zeros.
pub fn minmax_rows(s: &ScoreMatrix) -> Result<ScoreMatrix> {
    s.map_rows(|row| {
        let lo = row.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if hi > lo {
            row.iter().map(|v| (v - lo) / (hi - lo)).collect()
        } else {
            vec![0.0; row.len()]
        }
    })
}

/// Reorders an external score matrix to the test videos of `split`, in manifest order.
/// Classes are matched by column position against the manifest class list.
pub fn align_external(scores: &ScoreMatrix, manifest: &Manifest, split: &str) -> Result<ScoreMatrix> {
    if scores.class_count() != manifest.classes.len() {
        return Err(Error::integrity(format!(
            "external scores have {} classes, manifest declares {}",
            scores.class_count(),
            manifest.classes.len()
        )));
    }
    let index: HashMap<&str, usize> = scores
        .video_ids()
        .iter()
        .enumerate()
        .map(|(i, v)| (v.as_str(), i))
        .collect();
    let wanted = manifest.videos(split, SplitRole::Test);
    let missing: Vec<&str> = wanted
        .iter()
        .filter(|(v, _)| !index.contains_key(v))
        .map(|(v, _)| *v)
        .collect();
    if !missing.is_empty() {
        return Err(Error::integrity(format!(
            "external scores are missing test videos: {}",
            missing.join(", ")
        )));
    }
    let mut ids = Vec::with_capacity(wanted.len());
    let mut values = Vec::with_capacity(wanted.len() * scores.class_count());
    for (v, _) in wanted {
        ids.push(v.to_string());
        values.extend_from_slice(scores.row(index[v]));
    }
    ScoreMatrix::new(ids, scores.class_count(), values)
}

/// Fraction of the split's test videos whose top-scoring class is the true label.
pub fn accuracy(scores: &ScoreMatrix, manifest: &Manifest, split: &str) -> Result<f64> {
    let videos = manifest.videos(split, SplitRole::Test);
    if videos.is_empty() {
        return Err(Error::integrity(format!("split '{split}' has no test videos")));
    }
    let mut correct = 0usize;
    let mut missing = Vec::new();
    for (v, label) in &videos {
        match scores.position(v) {
            Some(i) => correct += (scores.argmax(i) == *label) as usize,
            None => missing.push(*v),
        }
    }
    if !missing.is_empty() {
        return Err(Error::integrity(format!(
            "scores do not cover test videos: {}",
            missing.join(", ")
        )));
    }
    Ok(correct as f64 / videos.len() as f64)
}

pub fn mean_over_splits(accuracies: &[f64]) -> Result<f64> {
    if accuracies.is_empty() {
        return Err(Error::arg("no split accuracies to average"));
    }
    Ok(accuracies.iter().sum::<f64>() / accuracies.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn sm(ids: &[&str], c: usize, v: &[f64]) -> ScoreMatrix {
        ScoreMatrix::new(ids.iter().map(|s| s.to_string()).collect(), c, v.to_vec()).unwrap()
    }

    fn manifest() -> Manifest {
        Manifest::parse(
            "#classes: a,b\n#split s1\n\
             v1,0,s1,test,spatial,f,x\nv2,1,s1,test,spatial,f,x\n\
             v3,1,s1,test,spatial,f,x\nv4,0,s1,test,spatial,f,x\nv5,0,s1,train,spatial,f,x\n",
            "",
        )
        .unwrap()
    }

    #[test]
    fn two_stream_example() {
        let spatial = sm(&["v"], 2, &[0.2, 0.8]);
        let temporal = sm(&["v"], 2, &[0.6, 0.4]);
        let f = fuse(&[(&spatial, 1.0), (&temporal, 1.5)]).unwrap();
        assert!((f.row(0)[0] - 1.1).abs() < 1e-12 && (f.row(0)[1] - 1.4).abs() < 1e-12);
        assert_eq!(f.argmax(0), 1);
        assert_eq!(fuse(&[(&spatial, 1.0)]).unwrap(), spatial);
    }

    #[test]
    fn fusion_errors() {
        let a = sm(&["v"], 2, &[0.2, 0.8]);
        let b = sm(&["w"], 2, &[0.6, 0.4]);
        let c = sm(&["v"], 3, &[0.6, 0.4, 0.0]);
        assert!(matches!(fuse(&[(&a, 1.0), (&b, 1.0)]), Err(Error::Integrity(_))));
        assert!(matches!(fuse(&[(&a, 1.0), (&c, 1.0)]), Err(Error::Integrity(_))));
        assert!(fuse(&[(&a, 0.0)]).is_err());
        assert!(fuse(&[(&a, -1.0)]).is_err());
        assert!(fuse(&[]).is_err());
    }

    #[test]
    fn accuracy_counts() {
        let m = manifest();
        let perfect = sm(&["v1", "v2", "v3", "v4"], 2, &[1.0, 0.0, 0.0, 1.0, 0.0, 1.0, 1.0, 0.0]);
        assert_eq!(accuracy(&perfect, &m, "s1").unwrap(), 1.0);
        let wrong = sm(&["v1", "v2", "v3", "v4"], 2, &[0.0, 1.0, 1.0, 0.0, 1.0, 0.0, 0.0, 1.0]);
        assert_eq!(accuracy(&wrong, &m, "s1").unwrap(), 0.0);
        let three = sm(&["v1", "v2", "v3", "v4"], 2, &[1.0, 0.0, 0.0, 1.0, 0.0, 1.0, 0.0, 1.0]);
        assert_eq!(accuracy(&three, &m, "s1").unwrap(), 0.75);
        let partial = sm(&["v1"], 2, &[1.0, 0.0]);
        assert!(matches!(accuracy(&partial, &m, "s1"), Err(Error::Integrity(_))));
    }

    #[test]
    fn align_reorders_and_reports_missing() {
        let m = manifest();
        let ext = sm(&["v4", "v9", "v2", "v1", "v3"], 2, &[4.0, 0.0, 9.0, 9.0, 2.0, 0.0, 1.0, 0.0, 3.0, 0.0]);
        let a = align_external(&ext, &m, "s1").unwrap();
        assert_eq!(a.video_ids(), &["v1", "v2", "v3", "v4"]);
        assert_eq!(a.values(), &[1.0, 0.0, 2.0, 0.0, 3.0, 0.0, 4.0, 0.0]);
        assert_eq!(align_external(&a, &m, "s1").unwrap(), a);

        let short = sm(&["v1", "v2", "v4"], 2, &[0.0; 6]);
        let err = align_external(&short, &m, "s1").unwrap_err();
        assert!(err.to_string().contains("v3"));
    }

    #[test]
    fn minmax() {
        let s = sm(&["a", "b"], 3, &[2.0, 4.0, 3.0, 1.0, 1.0, 1.0]);
        assert_eq!(minmax_rows(&s).unwrap().values(), &[0.0, 1.0, 0.5, 0.0, 0.0, 0.0]);
    }

    #[test]
    fn split_mean() {
        assert_eq!(mean_over_splits(&[0.5]).unwrap(), 0.5);
        assert_eq!(mean_over_splits(&[0.4, 0.6]).unwrap(), 0.5);
        assert_eq!(mean_over_splits(&[1.0, 1.0, 1.0]).unwrap(), 1.0);
        assert!(mean_over_splits(&[]).is_err());
    }

    proptest! {
        #[test]
        fn fusion_is_linear(
            a in prop::collection::vec(-5.0f64..5.0, 6),
            b in prop::collection::vec(-5.0f64..5.0, 6),
            wa in 0.0f64..3.0,
            wb in 0.01f64..3.0,
        ) {
            let ids = ["x", "y", "z"];
            let sa = sm(&ids, 2, &a);
            let sb = sm(&ids, 2, &b);
            let f = fuse(&[(&sa, wa), (&sb, wb)]).unwrap();
            for i in 0..6 {
                prop_assert_eq!(f.values()[i], wa * a[i] + wb * b[i]);
            }
            let f = fuse(&[(&sa, 1.0), (&sb, 0.0)]).unwrap();
            prop_assert_eq!(f.values(), sa.values());
        }

        #[test]
        fn accuracy_scale_invariant(v in prop::collection::vec(-5.0f64..5.0, 8), k in 0.01f64..100.0) {
            let m = manifest();
            let ids = ["v1", "v2", "v3", "v4"];
            let s = sm(&ids, 2, &v);
            let scaled = s.map_rows(|r| r.iter().map(|x| x * k).collect()).unwrap();
            prop_assert_eq!(accuracy(&s, &m, "s1").unwrap(), accuracy(&scaled, &m, "s1").unwrap());
        }
    }
}
