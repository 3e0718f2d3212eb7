use std::collections::{BTreeMap, HashSet};
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{merge_names, Detection, Detections, ObjectNameList, SOURCE_COCO, SOURCE_FIXTURE, SOURCE_VG};
use crate::{Error, Result};

/// One JSONL line of the detection cache.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CacheRecord {
    pub sample_id: String,
    pub source: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub threshold: Option<f64>,
    pub detections: Vec<Detection>,
}

impl CacheRecord {
    pub fn from_detections(d: &Detections, threshold: f64) -> Self {
        CacheRecord {
            sample_id: d.sample_id.clone(),
            source: d.source.clone(),
            threshold: Some(threshold),
            detections: d.detections.clone(),
        }
    }

    pub fn key(&self) -> CacheKey {
        CacheKey::new(&self.sample_id, &self.source, self.threshold.unwrap_or(f64::NAN))
    }

    pub fn into_detections(self) -> Detections {
        Detections::new(self.sample_id, self.source, self.detections)
    }
}

/// Records are keyed by sample, adapter and threshold.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct CacheKey {
    pub sample_id: String,
    pub source: String,
    threshold_bits: u64,
}

impl CacheKey {
    pub fn new(sample_id: &str, source: &str, threshold: f64) -> Self {
        CacheKey {
            sample_id: sample_id.to_string(),
            source: source.to_string(),
            threshold_bits: threshold.to_bits(),
        }
    }
}

/// Reads every record; a malformed line is an error naming the line.
pub fn read_cache(path: &Path) -> Result<Vec<CacheRecord>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: CacheRecord = serde_json::from_str(&line).map_err(|e| Error::MalformedRow {
            row: i + 1,
            message: format!("{}: {e}", path.display()),
        })?;
        out.push(rec);
    }
    Ok(out)
}

/// Append-only single writer over the cache file.
pub struct CacheWriter {
    path: PathBuf,
    out: BufWriter<File>,
    seen: HashSet<CacheKey>,
}

impl CacheWriter {
    pub fn open(path: &Path) -> Result<Self> {
        let seen = if path.exists() {
            read_cache(path)?.iter().map(CacheRecord::key).collect()
        } else {
            HashSet::new()
        };
        let file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(path)
            .map_err(|e| Error::io(path, e))?;
        Ok(CacheWriter {
            path: path.to_path_buf(),
            out: BufWriter::new(file),
            seen,
        })
    }

    pub fn contains(&self, key: &CacheKey) -> bool {
        self.seen.contains(key)
    }

    /// Returns `false` without writing when the key is already cached.
    pub fn append(&mut self, record: &CacheRecord) -> Result<bool> {
        if !self.seen.insert(record.key()) {
            return Ok(false);
        }
        serde_json::to_writer(&mut self.out, record)?;
        self.out.write_all(b"\n").map_err(|e| Error::io(&self.path, e))?;
        Ok(true)
    }

    pub fn flush(&mut self) -> Result<()> {
        self.out.flush().map_err(|e| Error::io(&self.path, e))
    }
}

impl Drop for CacheWriter {
    fn drop(&mut self) {
        let _ = self.out.flush();
    }
}

const SOURCE_ORDER: [&str; 3] = [SOURCE_COCO, SOURCE_VG, SOURCE_FIXTURE];

fn source_rank(source: &str) -> (usize, &str) {
    let rank = SOURCE_ORDER.iter().position(|s| *s == source).unwrap_or(SOURCE_ORDER.len());
    (rank, source)
}

/// Detections of every sample grouped by source, built from cache records.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct DetectionIndex {
    samples: BTreeMap<String, BTreeMap<String, Detections>>,
}

impl DetectionIndex {
    /// When a (sample, source) pair was cached under several thresholds, the
    /// one in `preferred` for that source wins, otherwise the last record.
    pub fn from_records(records: Vec<CacheRecord>, preferred: &BTreeMap<String, f64>) -> Self {
        let mut samples: BTreeMap<String, BTreeMap<String, (Option<f64>, Detections)>> = BTreeMap::new();
        for rec in records {
            let threshold = rec.threshold;
            let want = preferred.get(&rec.source).copied();
            let slot = samples.entry(rec.sample_id.clone()).or_default();
            let replace = match slot.get(&rec.source) {
                None => true,
                Some((old, _)) => !(want.is_some() && *old == want && threshold != want),
            };
            if replace {
                slot.insert(rec.source.clone(), (threshold, rec.into_detections()));
            }
        }
        DetectionIndex {
            samples: samples
                .into_iter()
                .map(|(id, by_src)| (id, by_src.into_iter().map(|(s, (_, d))| (s, d)).collect()))
                .collect(),
        }
    }

    pub fn load(path: &Path, preferred: &BTreeMap<String, f64>) -> Result<Self> {
        Ok(Self::from_records(read_cache(path)?, preferred))
    }

    pub fn insert(&mut self, d: Detections) {
        self.samples
            .entry(d.sample_id.clone())
            .or_default()
            .insert(d.source.clone(), d);
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn contains(&self, sample_id: &str) -> bool {
        self.samples.contains_key(sample_id)
    }

    pub fn sample_ids(&self) -> impl Iterator<Item = &str> {
        self.samples.keys().map(String::as_str)
    }

    pub fn get(&self, sample_id: &str, source: &str) -> Option<&Detections> {
        self.samples.get(sample_id).and_then(|m| m.get(source))
    }

    /// Per-source detections of one sample, in merge order.
    pub fn sources(&self, sample_id: &str) -> Vec<&Detections> {
        let mut v: Vec<&Detections> = self
            .samples
            .get(sample_id)
            .map(|m| m.values().collect())
            .unwrap_or_default();
        v.sort_by(|a, b| source_rank(&a.source).cmp(&source_rank(&b.source)));
        v
    }

    /// Source that defines single-object membership: `coco` when the index
    /// holds any COCO record, else the fixture detector standing in for it.
    pub fn primary_source(&self) -> &'static str {
        let has_coco = self.samples.values().any(|m| m.contains_key(SOURCE_COCO));
        if has_coco {
            SOURCE_COCO
        } else {
            SOURCE_FIXTURE
        }
    }

    /// All names of a sample: COCO, then VG, then any other source.
    pub fn merged_names(&self, sample_id: &str) -> Result<ObjectNameList> {
        if !self.contains(sample_id) {
            return Err(Error::MissingDetections(sample_id.to_string()));
        }
        Ok(merge_names(self.sources(sample_id)))
    }

    /// Names from the primary source only.
    pub fn primary_names(&self, sample_id: &str) -> Result<ObjectNameList> {
        if !self.contains(sample_id) {
            return Err(Error::MissingDetections(sample_id.to_string()));
        }
        Ok(merge_names(self.get(sample_id, self.primary_source())))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(id: &str, src: &str, thr: f64, names: &[&str]) -> CacheRecord {
        CacheRecord {
            sample_id: id.into(),
            source: src.into(),
            threshold: Some(thr),
            detections: names.iter().map(|n| Detection::new(*n, 0.9, [1.0, 2.0, 3.0, 4.0])).collect(),
        }
    }

    #[test]
    fn writer_appends_and_dedups() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("cache.jsonl");
        {
            let mut w = CacheWriter::open(&p).unwrap();
            assert!(w.append(&rec("a", "coco", 0.7, &["cat"])).unwrap());
            assert!(!w.append(&rec("a", "coco", 0.7, &["dog"])).unwrap());
            assert!(w.append(&rec("a", "coco", 0.5, &["dog"])).unwrap());
        }
        {
            let mut w = CacheWriter::open(&p).unwrap();
            assert!(w.contains(&CacheKey::new("a", "coco", 0.7)));
            assert!(w.append(&rec("b", "vg", 0.5, &[])).unwrap());
        }
        let all = read_cache(&p).unwrap();
        assert_eq!(all.len(), 3);
        let line = std::fs::read_to_string(&p).unwrap();
        let first: serde_json::Value = serde_json::from_str(line.lines().next().unwrap()).unwrap();
        assert_eq!(first["detections"][0]["box"], serde_json::json!([1.0, 2.0, 3.0, 4.0]));
        assert_eq!(first["sample_id"], "a");
        assert_eq!(first["source"], "coco");
    }

    #[test]
    fn index_prefers_configured_threshold() {
        let records = vec![rec("a", "coco", 0.7, &["cat"]), rec("a", "coco", 0.5, &["cat", "dog"])];
        let mut pref = BTreeMap::new();
        let idx = DetectionIndex::from_records(records.clone(), &pref);
        assert_eq!(idx.get("a", "coco").unwrap().len(), 2);
        pref.insert("coco".to_string(), 0.7);
        let idx = DetectionIndex::from_records(records, &pref);
        assert_eq!(idx.get("a", "coco").unwrap().len(), 1);
    }

    #[test]
    fn merged_names_follow_source_order() {
        let idx = DetectionIndex::from_records(
            vec![rec("a", "vg", 0.5, &["grass"]), rec("a", "coco", 0.7, &["dog"])],
            &BTreeMap::new(),
        );
        assert_eq!(idx.merged_names("a").unwrap().as_slice(), &["dog", "grass"]);
        assert_eq!(idx.primary_names("a").unwrap().as_slice(), &["dog"]);
        assert!(matches!(idx.merged_names("zz"), Err(Error::MissingDetections(_))));
    }

    #[test]
    fn malformed_line_is_error() {
        let f = tempfile::NamedTempFile::new().unwrap();
        std::fs::write(f.path(), "{\"sample_id\":\"a\",\"source\":\"coco\",\"detections\":[]}\nnot json\n").unwrap();
        assert!(matches!(read_cache(f.path()), Err(Error::MalformedRow { row: 2, .. })));
    }
}
