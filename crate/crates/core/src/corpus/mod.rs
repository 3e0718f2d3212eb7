//! Dataset ingestion: manifests, joint labels, language filtering, splits and
//! label statistics.

mod joint;
mod language;
mod manifest;
mod split;

use std::collections::HashSet;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

pub use joint::{derive_joint_labels, JointPolicy};
pub use language::{filter_english_text, DictionaryCoverage, LanguagePredicate};
pub use manifest::{load_manifest, write_manifest, ManifestFormat, MANIFEST_HEADER};
pub use split::{split_train_test, SplitOptions};

/// One of the three sentiment classes.
///
/// The declaration order is the class order used by models and confusion
/// matrices: positive, negative, neutral.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Sentiment {
    Positive,
    Negative,
    Neutral,
}

impl Sentiment {
    pub const ALL: [Sentiment; 3] = [Sentiment::Positive, Sentiment::Negative, Sentiment::Neutral];

    /// Class index in model / confusion-matrix order.
    pub fn index(self) -> usize {
        match self {
            Sentiment::Positive => 0,
            Sentiment::Negative => 1,
            Sentiment::Neutral => 2,
        }
    }

    pub fn from_index(index: usize) -> Option<Sentiment> {
        Sentiment::ALL.get(index).copied()
    }

    /// Ordinal code used for the signed-rank test: negative=0, neutral=1,
    /// positive=2.
    pub fn ordinal_code(self) -> i64 {
        match self {
            Sentiment::Negative => 0,
            Sentiment::Neutral => 1,
            Sentiment::Positive => 2,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Sentiment::Positive => "positive",
            Sentiment::Negative => "negative",
            Sentiment::Neutral => "neutral",
        }
    }

    pub fn is_polar(self) -> bool {
        self != Sentiment::Neutral
    }
}

impl fmt::Display for Sentiment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Sentiment {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "positive" => Ok(Sentiment::Positive),
            "negative" => Ok(Sentiment::Negative),
            "neutral" => Ok(Sentiment::Neutral),
            _ => Err(Error::UnknownLabel(s.to_string())),
        }
    }
}

/// Which label column a computation reads.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LabelKind {
    Image,
    Text,
    Joint,
}

impl LabelKind {
    pub fn as_str(self) -> &'static str {
        match self {
            LabelKind::Image => "image_label",
            LabelKind::Text => "text_label",
            LabelKind::Joint => "joint_label",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Sample {
    pub id: String,
    pub image_ref: Option<String>,
    pub text: String,
    pub image_label: Option<Sentiment>,
    pub text_label: Option<Sentiment>,
    pub joint_label: Option<Sentiment>,
}

impl Sample {
    pub fn new(id: impl Into<String>, text: impl Into<String>) -> Self {
        Sample {
            id: id.into(),
            image_ref: None,
            text: text.into(),
            image_label: None,
            text_label: None,
            joint_label: None,
        }
    }

    pub fn label(&self, kind: LabelKind) -> Option<Sentiment> {
        match kind {
            LabelKind::Image => self.image_label,
            LabelKind::Text => self.text_label,
            LabelKind::Joint => self.joint_label,
        }
    }
}

/// An ordered collection of samples with unique ids.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Dataset {
    pub name: String,
    samples: Vec<Sample>,
}

impl Dataset {
    pub fn new(name: impl Into<String>, samples: Vec<Sample>) -> Result<Self> {
        let mut seen = HashSet::with_capacity(samples.len());
        for s in &samples {
            if !seen.insert(s.id.as_str()) {
                return Err(Error::DuplicateId(s.id.clone()));
            }
        }
        Ok(Dataset {
            name: name.into(),
            samples,
        })
    }

    pub fn empty(name: impl Into<String>) -> Self {
        Dataset {
            name: name.into(),
            samples: Vec::new(),
        }
    }

    pub fn samples(&self) -> &[Sample] {
        &self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn ids(&self) -> Vec<&str> {
        self.samples.iter().map(|s| s.id.as_str()).collect()
    }

    pub fn get(&self, id: &str) -> Option<&Sample> {
        self.samples.iter().find(|s| s.id == id)
    }

    /// Keeps the samples for which `keep` is true, preserving order.
    pub fn filtered(&self, mut keep: impl FnMut(&Sample) -> bool) -> Dataset {
        Dataset {
            name: self.name.clone(),
            samples: self.samples.iter().filter(|s| keep(s)).cloned().collect(),
        }
    }

    /// Samples carrying a non-null label of the given kind.
    pub fn with_label(&self, kind: LabelKind) -> Dataset {
        self.filtered(|s| s.label(kind).is_some())
    }

    pub(crate) fn from_parts_unchecked(name: String, samples: Vec<Sample>) -> Dataset {
        Dataset { name, samples }
    }
}

/// Positive / negative / neutral counts for one label column.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelCounts {
    pub positive: usize,
    pub negative: usize,
    pub neutral: usize,
    pub total: usize,
}

impl LabelCounts {
    fn add(&mut self, label: Sentiment) {
        match label {
            Sentiment::Positive => self.positive += 1,
            Sentiment::Negative => self.negative += 1,
            Sentiment::Neutral => self.neutral += 1,
        }
        self.total += 1;
    }

    pub fn as_triple(&self) -> (usize, usize, usize) {
        (self.positive, self.negative, self.neutral)
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelStats {
    pub samples: usize,
    pub image: LabelCounts,
    pub text: LabelCounts,
    pub joint: LabelCounts,
}

impl LabelStats {
    pub fn counts(&self, kind: LabelKind) -> &LabelCounts {
        match kind {
            LabelKind::Image => &self.image,
            LabelKind::Text => &self.text,
            LabelKind::Joint => &self.joint,
        }
    }
}

/// Exact per-label counts for every modality.
pub fn summarize(d: &Dataset) -> LabelStats {
    let mut stats = LabelStats {
        samples: d.len(),
        ..LabelStats::default()
    };
    for s in d.samples() {
        if let Some(l) = s.image_label {
            stats.image.add(l);
        }
        if let Some(l) = s.text_label {
            stats.text.add(l);
        }
        if let Some(l) = s.joint_label {
            stats.joint.add(l);
        }
    }
    stats
}
