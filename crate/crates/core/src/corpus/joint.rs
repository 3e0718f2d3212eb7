use serde::{Deserialize, Serialize};

use super::{Dataset, Sentiment};
use crate::{Error, Result};

/// How a joint label is assigned to an image–text pair.
///
/// Both policies drop pairs with opposing polar labels. They differ on
/// neutral–polar pairs: `StrictEqual` drops them, `KeepPolar` keeps the
/// polar side.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum JointPolicy {
    #[default]
    StrictEqual,
    KeepPolar,
}

impl JointPolicy {
    pub fn joint(self, image: Sentiment, text: Sentiment) -> Option<Sentiment> {
        if image == text {
            return Some(image);
        }
        if image.is_polar() && text.is_polar() {
            return None;
        }
        match self {
            JointPolicy::StrictEqual => None,
            JointPolicy::KeepPolar => Some(if image.is_polar() { image } else { text }),
        }
    }
}

impl std::str::FromStr for JointPolicy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "strict_equal" => Ok(JointPolicy::StrictEqual),
            "keep_polar" => Ok(JointPolicy::KeepPolar),
            other => Err(Error::InvalidArgument(format!("unknown joint policy {other:?}"))),
        }
    }
}

/// Assigns joint labels from the image and text labels, dropping samples the
/// policy rejects. Existing joint labels are overwritten.
pub fn derive_joint_labels(d: &Dataset, policy: JointPolicy) -> Result<Dataset> {
    let mut out = Vec::with_capacity(d.len());
    for s in d.samples() {
        let image = s.image_label.ok_or_else(|| Error::MissingLabel {
            id: s.id.clone(),
            what: "image_label",
        })?;
        let text = s.text_label.ok_or_else(|| Error::MissingLabel {
            id: s.id.clone(),
            what: "text_label",
        })?;
        if let Some(joint) = policy.joint(image, text) {
            let mut kept = s.clone();
            kept.joint_label = Some(joint);
            out.push(kept);
        }
    }
    Ok(Dataset::from_parts_unchecked(d.name.clone(), out))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::fixtures::sample;
    use proptest::prelude::*;
    use Sentiment::*;

    fn pair(id: &str, image: Sentiment, text: Sentiment) -> crate::corpus::Sample {
        sample(id, "t", Some(image), Some(text), None)
    }

    #[test]
    fn opposing_polar_pairs_removed() {
        let d = Dataset::new("d", vec![pair("1", Positive, Negative), pair("2", Negative, Positive)]).unwrap();
        for policy in [JointPolicy::StrictEqual, JointPolicy::KeepPolar] {
            assert!(derive_joint_labels(&d, policy).unwrap().is_empty());
        }
    }

    #[test]
    fn agreeing_pair_kept() {
        let d = Dataset::new("d", vec![pair("1", Positive, Positive)]).unwrap();
        let out = derive_joint_labels(&d, JointPolicy::StrictEqual).unwrap();
        assert_eq!(out.samples()[0].joint_label, Some(Positive));
    }

    #[test]
    fn neutral_polar_depends_on_policy() {
        let d = Dataset::new("d", vec![pair("1", Neutral, Positive)]).unwrap();
        assert!(derive_joint_labels(&d, JointPolicy::StrictEqual).unwrap().is_empty());
        let kp = derive_joint_labels(&d, JointPolicy::KeepPolar).unwrap();
        assert_eq!(kp.samples()[0].joint_label, Some(Positive));
    }

    #[test]
    fn missing_modality_label_names_sample() {
        let d = Dataset::new("d", vec![sample("x7", "t", Some(Positive), None, None)]).unwrap();
        let err = derive_joint_labels(&d, JointPolicy::StrictEqual).unwrap_err();
        assert!(err.to_string().contains("x7"));
    }

    fn sentiment() -> impl Strategy<Value = Sentiment> {
        prop::sample::select(Sentiment::ALL.to_vec())
    }

    proptest! {
        #[test]
        fn never_keeps_opposing_polar(labels in prop::collection::vec((sentiment(), sentiment()), 0..60),
                                      keep_polar in any::<bool>()) {
            let samples = labels.iter().enumerate()
                .map(|(i, (a, b))| pair(&i.to_string(), *a, *b)).collect();
            let d = Dataset::new("d", samples).unwrap();
            let policy = if keep_polar { JointPolicy::KeepPolar } else { JointPolicy::StrictEqual };
            let out = derive_joint_labels(&d, policy).unwrap();
            prop_assert!(out.len() <= d.len());
            for s in out.samples() {
                let (i, t) = (s.image_label.unwrap(), s.text_label.unwrap());
                prop_assert!(!(i.is_polar() && t.is_polar() && i != t));
                if policy == JointPolicy::StrictEqual {
                    prop_assert_eq!(i, t);
                    prop_assert_eq!(s.joint_label, Some(i));
                }
            }
        }
    }
}
