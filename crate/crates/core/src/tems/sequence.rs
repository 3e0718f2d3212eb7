use serde::{Deserialize, Serialize};

use super::clean::normalize_object_name;
use super::tokenize::TokenSeq;
use super::clean::clean_text;
use super::tokenize::{tokenize, TokenizeScheme};
use crate::corpus::Dataset;
use crate::detect::{DetectionIndex, ObjectNameList};
use crate::{Error, Result};

/// Token budgets for plain text and for text + object names.
///
/// The fused budget is always `text_max + max_objects`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LengthPolicy {
    pub text_max: usize,
    pub max_objects: usize,
}

impl LengthPolicy {
    pub const SIMPSON: LengthPolicy = LengthPolicy {
        text_max: 55,
        max_objects: 20,
    };
    pub const MVSA: LengthPolicy = LengthPolicy {
        text_max: 21,
        max_objects: 20,
    };

    pub fn new(text_max: usize, max_objects: usize) -> Result<Self> {
        if text_max == 0 {
            return Err(Error::InvalidArgument("text_max must be positive".into()));
        }
        Ok(LengthPolicy {
            text_max,
            max_objects,
        })
    }

    pub fn tems_max(&self) -> usize {
        self.text_max + self.max_objects
    }
}

/// Caption tokens followed by detected object names.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TemsSequence {
    pub text_part: TokenSeq,
    pub object_part: TokenSeq,
    pub combined: TokenSeq,
}

/// Truncates the text to `text_max`, appends at most `max_objects` names in
/// merge order.
pub fn build_tems(text_tokens: &TokenSeq, names: &ObjectNameList, policy: &LengthPolicy) -> TemsSequence {
    let text_part = text_tokens.truncated(policy.text_max);
    let object_tokens: Vec<String> = names
        .iter()
        .map(normalize_object_name)
        .filter(|n| !n.is_empty())
        .take(policy.max_objects)
        .collect();
    let object_part = TokenSeq::new(object_tokens).expect("normalized names contain no whitespace");
    let combined = text_part.concat(&object_part);
    TemsSequence {
        text_part,
        object_part,
        combined,
    }
}

/// One line of a TEMS export.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TemsRecord {
    pub sample_id: String,
    pub text_tokens: Vec<String>,
    pub object_names: Vec<String>,
    pub combined: Vec<String>,
}

/// Builds the fused sequence of every sample from its cleaned caption and
/// the merged detector names.
pub fn tems_records(d: &Dataset, idx: &DetectionIndex, policy: &LengthPolicy) -> Result<Vec<TemsRecord>> {
    d.samples()
        .iter()
        .map(|s| {
            let toks = tokenize(&clean_text(&s.text), &TokenizeScheme::Whitespace);
            let t = build_tems(&toks, &idx.merged_names(&s.id)?, policy);
            Ok(TemsRecord {
                sample_id: s.id.clone(),
                text_tokens: t.text_part.into(),
                object_names: t.object_part.into(),
                combined: t.combined.into(),
            })
        })
        .collect()
}
