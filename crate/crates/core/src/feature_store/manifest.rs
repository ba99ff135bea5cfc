//! Line-oriented dataset manifest.
//!
//! ```text
//! #classes: brush_hair,cartwheel
//! #split split1
//! v001,0,split1,train,spatial,global_pool,spatial/v001.dovf
//! ```
//!
//! Blank lines and lines starting with `//` are ignored. A video may appear in
//! several splits, but only once per (split, video_id, stream, feature_set).

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Stream {
    Spatial,
    Temporal,
}

impl Stream {
    pub const ALL: [Stream; 2] = [Stream::Spatial, Stream::Temporal];

    pub fn as_str(self) -> &'static str {
        match self {
            Stream::Spatial => "spatial",
            Stream::Temporal => "temporal",
        }
    }
}

impl fmt::Display for Stream {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Stream {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "spatial" => Ok(Stream::Spatial),
            "temporal" => Ok(Stream::Temporal),
            other => Err(format!("unknown stream '{other}'")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SplitRole {
    Train,
    Test,
}

impl SplitRole {
    pub fn as_str(self) -> &'static str {
        match self {
            SplitRole::Train => "train",
            SplitRole::Test => "test",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct VideoRecord {
    pub video_id: String,
    pub label: usize,
    pub split: String,
    pub role: SplitRole,
    pub stream: Stream,
    pub feature_set: String,
    /// Path as written in the manifest, relative to the manifest's directory.
    pub path: PathBuf,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Manifest {
    pub classes: Vec<String>,
    /// Declared split names in file order.
    pub splits: Vec<String>,
    pub records: Vec<VideoRecord>,
    /// Directory relative record paths are resolved against.
    pub base_dir: PathBuf,
}

impl Manifest {
    pub fn parse(text: &str, base_dir: impl Into<PathBuf>) -> Result<Self> {
        let mut classes: Option<Vec<String>> = None;
        let mut splits: Vec<String> = Vec::new();
        let mut records = Vec::new();

        for (idx, raw) in text.lines().enumerate() {
            let lineno = idx + 1;
            let line = raw.trim();
            if line.is_empty() || line.starts_with("//") {
                continue;
            }
            if let Some(rest) = line.strip_prefix("#classes:") {
                if classes.is_some() {
                    return Err(Error::format_at(lineno, "duplicate #classes header"));
                }
                let list: Vec<String> = rest.split(',').map(|c| c.trim().to_string()).collect();
                if list.iter().any(|c| c.is_empty()) {
                    return Err(Error::format_at(lineno, "empty class name"));
                }
                classes = Some(list);
                continue;
            }
            if let Some(rest) = line.strip_prefix("#split") {
                let name = rest.trim();
                if name.is_empty() || name.contains(',') {
                    return Err(Error::format_at(lineno, "split header needs a name"));
                }
                if splits.iter().any(|s| s == name) {
                    return Err(Error::format_at(lineno, format!("split '{name}' declared twice")));
                }
                splits.push(name.to_string());
                continue;
            }
            if line.starts_with('#') {
                return Err(Error::format_at(lineno, format!("unknown header '{line}'")));
            }
            records.push(parse_record(line, lineno)?);
        }

        let classes = classes.ok_or_else(|| Error::format("missing #classes header"))?;
        let manifest = Manifest {
            classes,
            splits,
            records,
            base_dir: base_dir.into(),
        };
        manifest.validate()?;
        Ok(manifest)
    }

    pub fn validate(&self) -> Result<()> {
        let declared: BTreeSet<&str> = self.splits.iter().map(String::as_str).collect();
        let mut keys = BTreeSet::new();
        let mut roles: HashMap<(&str, &str), SplitRole> = HashMap::new();
        let mut labels: HashMap<&str, usize> = HashMap::new();

        for r in &self.records {
            if r.label >= self.classes.len() {
                return Err(Error::integrity(format!(
                    "video '{}' has label {} but only {} classes are declared",
                    r.video_id,
                    r.label,
                    self.classes.len()
                )));
            }
            if !declared.contains(r.split.as_str()) {
                return Err(Error::integrity(format!(
                    "video '{}' references undeclared split '{}'",
                    r.video_id, r.split
                )));
            }
            let key = (r.split.as_str(), r.video_id.as_str(), r.stream, r.feature_set.as_str());
            if !keys.insert(key) {
                return Err(Error::integrity(format!(
                    "duplicate record (video_id={}, stream={}, feature_set={}) in split '{}'",
                    r.video_id, r.stream, r.feature_set, r.split
                )));
            }
            match roles.insert((r.split.as_str(), r.video_id.as_str()), r.role) {
                Some(prev) if prev != r.role => {
                    return Err(Error::integrity(format!(
                        "video '{}' is both train and test in split '{}'",
                        r.video_id, r.split
                    )));
                }
                _ => {}
            }
            match labels.insert(r.video_id.as_str(), r.label) {
                Some(prev) if prev != r.label => {
                    return Err(Error::integrity(format!(
                        "video '{}' has conflicting labels {prev} and {}",
                        r.video_id, r.label
                    )));
                }
                _ => {}
            }
        }
        Ok(())
    }

    pub fn to_text(&self) -> String {
        let mut out = format!("#classes: {}\n", self.classes.join(","));
        for s in &self.splits {
            out.push_str(&format!("#split {s}\n"));
        }
        for r in &self.records {
            out.push_str(&format!(
                "{},{},{},{},{},{},{}\n",
                r.video_id,
                r.label,
                r.split,
                r.role.as_str(),
                r.stream,
                r.feature_set,
                r.path.display()
            ));
        }
        out
    }

    pub fn resolve(&self, record: &VideoRecord) -> PathBuf {
        self.base_dir.join(&record.path)
    }

    pub fn default_split(&self) -> Option<&str> {
        self.splits.first().map(String::as_str)
    }

    pub fn has_split(&self, split: &str) -> bool {
        self.splits.iter().any(|s| s == split)
    }

    /// Distinct feature-set tags in first-seen order.
    pub fn feature_sets(&self) -> Vec<&str> {
        let mut seen = Vec::new();
        for r in &self.records {
            if !seen.contains(&r.feature_set.as_str()) {
                seen.push(r.feature_set.as_str());
            }
        }
        seen
    }

    /// Streams with at least one record for `feature_set`, in spatial, temporal order.
    pub fn streams(&self, feature_set: &str) -> Vec<Stream> {
        Stream::ALL
            .into_iter()
            .filter(|s| {
                self.records
                    .iter()
                    .any(|r| r.stream == *s && r.feature_set == feature_set)
            })
            .collect()
    }

    /// Records of one split/role/stream/feature set, in manifest order.
    pub fn select(
        &self,
        split: &str,
        role: SplitRole,
        stream: Stream,
        feature_set: &str,
    ) -> Vec<&VideoRecord> {
        self.records
            .iter()
            .filter(|r| {
                r.split == split && r.role == role && r.stream == stream && r.feature_set == feature_set
            })
            .collect()
    }

    /// Video ids of a split's role, in first-seen manifest order, with their labels.
    pub fn videos(&self, split: &str, role: SplitRole) -> Vec<(&str, usize)> {
        let mut seen = BTreeMap::new();
        let mut out = Vec::new();
        for r in &self.records {
            if r.split == split && r.role == role && seen.insert(r.video_id.as_str(), ()).is_none() {
                out.push((r.video_id.as_str(), r.label));
            }
        }
        out
    }

    pub fn label_of(&self, video_id: &str) -> Option<usize> {
        self.records
            .iter()
            .find(|r| r.video_id == video_id)
            .map(|r| r.label)
    }
}

fn parse_record(line: &str, lineno: usize) -> Result<VideoRecord> {
    let fields: Vec<&str> = line.split(',').map(str::trim).collect();
    if fields.len() != 7 {
        return Err(Error::format_at(
            lineno,
            format!("expected 7 comma-separated fields, found {}", fields.len()),
        ));
    }
    if fields.iter().any(|f| f.is_empty()) {
        return Err(Error::format_at(lineno, "empty field"));
    }
    let label = fields[1]
        .parse::<usize>()
        .map_err(|_| Error::format_at(lineno, format!("bad label index '{}'", fields[1])))?;
    let role = match fields[3] {
        "train" => SplitRole::Train,
        "test" => SplitRole::Test,
        other => {
            return Err(Error::format_at(
                lineno,
                format!("split role must be train or test, got '{other}'"),
            ))
        }
    };
    let stream = fields[4]
        .parse::<Stream>()
        .map_err(|e| Error::format_at(lineno, e))?;
    Ok(VideoRecord {
        video_id: fields[0].to_string(),
        label,
        split: fields[2].to_string(),
        role,
        stream,
        feature_set: fields[5].to_string(),
        path: PathBuf::from(fields[6]),
    })
}

pub fn load_manifest(path: impl AsRef<Path>) -> Result<Manifest> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
    Manifest::parse(&text, base)
}

pub fn write_manifest(m: &Manifest, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, m.to_text()).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    const OK: &str = "\
#classes: run,jump
#split split1
v1,0,split1,train,spatial,gp,s/v1.dovf
v2,1,split1,train,spatial,gp,s/v2.dovf
v3,0,split1,test,spatial,gp,s/v3.dovf
v4,1,split1,test,spatial,gp,s/v4.dovf
";

    #[test]
    fn parses_counts() {
        let m = Manifest::parse(OK, "/data").unwrap();
        assert_eq!(m.classes, vec!["run", "jump"]);
        assert_eq!(m.splits, vec!["split1"]);
        assert_eq!(m.records.len(), 4);
        assert_eq!(m.resolve(&m.records[0]), PathBuf::from("/data/s/v1.dovf"));
        assert_eq!(m.videos("split1", SplitRole::Test), vec![("v3", 0), ("v4", 1)]);
    }

    #[test]
    fn text_round_trip() {
        let m = Manifest::parse(OK, "/data").unwrap();
        assert_eq!(Manifest::parse(&m.to_text(), "/data").unwrap(), m);
    }

    #[test]
    fn label_out_of_range() {
        let text = OK.replace("v2,1,", "v2,5,");
        assert!(matches!(Manifest::parse(&text, ""), Err(Error::Integrity(_))));
    }

    #[test]
    fn duplicate_key() {
        let text = format!("{OK}v1,0,split1,train,spatial,gp,s/other.dovf\n");
        let err = Manifest::parse(&text, "").unwrap_err();
        assert!(matches!(err, Error::Integrity(_)));
        assert!(err.to_string().contains("v1"));
    }

    #[test]
    fn same_video_other_stream_is_fine() {
        let text = format!("{OK}v1,0,split1,train,temporal,gp,t/v1.dovf\n");
        assert!(Manifest::parse(&text, "").is_ok());
    }

    #[test]
    fn train_test_overlap() {
        let text = format!("{OK}v1,0,split1,test,temporal,gp,t/v1.dovf\n");
        assert!(matches!(Manifest::parse(&text, ""), Err(Error::Integrity(_))));
    }

    #[test]
    fn undeclared_split() {
        let text = OK.replace("v4,1,split1", "v4,1,split9");
        assert!(matches!(Manifest::parse(&text, ""), Err(Error::Integrity(_))));
    }

    #[test]
    fn parse_error_has_line_number() {
        let text = OK.replace("v3,0,split1,test,spatial,gp,s/v3.dovf", "v3,0,split1,test");
        match Manifest::parse(&text, "") {
            Err(Error::Format { line, .. }) => assert_eq!(line, Some(5)),
            other => panic!("expected format error, got {other:?}"),
        }
        let text = OK.replace("v2,1,split1,train,spatial", "v2,1,split1,train,depth");
        match Manifest::parse(&text, "") {
            Err(Error::Format { line, .. }) => assert_eq!(line, Some(4)),
            other => panic!("expected format error, got {other:?}"),
        }
    }

    #[test]
    fn missing_classes_header() {
        let text: String = OK.lines().skip(1).map(|l| format!("{l}\n")).collect();
        assert!(matches!(Manifest::parse(&text, ""), Err(Error::Format { .. })));
    }

    /// Every constructed key collision, bad label and bad split on a small manifest is rejected.
    #[test]
    fn exhaustive_small_violations() {
        let base = Manifest::parse(OK, "").unwrap();
        for i in 0..base.records.len() {
            for j in 0..base.records.len() {
                if i == j {
                    continue;
                }
                let mut m = base.clone();
                m.records[i].video_id = m.records[j].video_id.clone();
                assert!(m.validate().is_err(), "collision {i}<-{j} accepted");
            }
            for bad_label in [2usize, 3, 100] {
                let mut m = base.clone();
                m.records[i].label = bad_label;
                assert!(m.validate().is_err());
            }
            let mut m = base.clone();
            m.records[i].split = "nope".into();
            assert!(m.validate().is_err());
        }
    }
}
