//! Object detection adapters, the JSONL detection cache, name merging and
//! object-count statistics.

mod adapter;
mod batch;
mod cache;
mod stats;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

pub use adapter::{
    detect_objects, load_image, Detector, ExternalDetector, FixtureDetector, LabelSpace, COCO_CLASSES,
    DEFAULT_COCO_THRESHOLD, DEFAULT_FIXTURE_THRESHOLD, DEFAULT_VG_THRESHOLD, VG_LABEL_SPACE_SIZE,
};
pub use batch::{detect_dataset, DetectSummary};
pub use cache::{read_cache, CacheKey, CacheRecord, CacheWriter, DetectionIndex};
pub use stats::{histogram_csv, object_count_histogram, single_object_subset, Histogram, SourceFilter};

pub const SOURCE_COCO: &str = "coco";
pub const SOURCE_VG: &str = "vg";
pub const SOURCE_FIXTURE: &str = "fixture";

/// One detected object.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Detection {
    pub name: String,
    pub confidence: f64,
    /// `[x, y, w, h]` in pixels.
    #[serde(rename = "box")]
    pub bbox: [f64; 4],
    #[serde(skip)]
    pub source: String,
}

impl Detection {
    pub fn new(name: impl Into<String>, confidence: f64, bbox: [f64; 4]) -> Self {
        Detection {
            name: name.into(),
            confidence,
            bbox,
            source: String::new(),
        }
    }

    pub(crate) fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.confidence) {
            return Err(Error::InvalidArgument(format!(
                "confidence {} of {:?} outside [0, 1]",
                self.confidence, self.name
            )));
        }
        if self.bbox[2] < 0.0 || self.bbox[3] < 0.0 {
            return Err(Error::InvalidArgument(format!("negative box size for {:?}", self.name)));
        }
        Ok(())
    }
}

/// Everything one detector emitted for one sample, in detector order.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Detections {
    pub sample_id: String,
    pub source: String,
    pub detections: Vec<Detection>,
}

impl Detections {
    pub fn new(sample_id: impl Into<String>, source: impl Into<String>, detections: Vec<Detection>) -> Self {
        let source = source.into();
        let detections = detections
            .into_iter()
            .map(|mut d| {
                d.source = source.clone();
                d
            })
            .collect();
        Detections {
            sample_id: sample_id.into(),
            source,
            detections,
        }
    }

    pub fn len(&self) -> usize {
        self.detections.len()
    }

    pub fn is_empty(&self) -> bool {
        self.detections.is_empty()
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.detections.iter().map(|d| d.name.as_str())
    }
}

/// Object names in merge order; duplicates are kept.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ObjectNameList(Vec<String>);

impl ObjectNameList {
    pub fn new(names: Vec<String>) -> Self {
        ObjectNameList(names)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &str> {
        self.0.iter().map(String::as_str)
    }

    pub fn as_slice(&self) -> &[String] {
        &self.0
    }
}

/// COCO names first, then Visual Genome names, all lowercased.
pub fn merge_detections(coco: &Detections, vg: &Detections) -> Result<ObjectNameList> {
    if coco.sample_id != vg.sample_id {
        return Err(Error::InvalidArgument(format!(
            "cannot merge detections of {:?} with {:?}",
            coco.sample_id, vg.sample_id
        )));
    }
    Ok(merge_names([coco, vg]))
}

pub(crate) fn merge_names<'a>(parts: impl IntoIterator<Item = &'a Detections>) -> ObjectNameList {
    ObjectNameList(
        parts
            .into_iter()
            .flat_map(|d| d.names().map(str::to_lowercase))
            .collect(),
    )
}
