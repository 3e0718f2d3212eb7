use std::collections::HashMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::tokenize::TokenSeq;
use crate::{Error, Result};

pub const PAD_TOKEN: &str = "[PAD]";
pub const UNK_TOKEN: &str = "[UNK]";

/// Token ↔ index mapping. Index 0 is always padding.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Vocabulary {
    tokens: Vec<String>,
    index: HashMap<String, usize>,
    unk: usize,
    id: String,
}

impl Vocabulary {
    /// `tokens[0]` must be the padding token and the list must contain the
    /// unknown token.
    pub fn from_tokens(tokens: Vec<String>) -> Result<Self> {
        if tokens.first().map(String::as_str) != Some(PAD_TOKEN) {
            return Err(Error::InvalidArgument(format!("vocabulary must start with {PAD_TOKEN}")));
        }
        let mut index = HashMap::with_capacity(tokens.len());
        for (i, t) in tokens.iter().enumerate() {
            if index.insert(t.clone(), i).is_some() {
                return Err(Error::InvalidArgument(format!("duplicate vocabulary token {t:?}")));
            }
        }
        let unk = *index
            .get(UNK_TOKEN)
            .ok_or_else(|| Error::InvalidArgument(format!("vocabulary lacks {UNK_TOKEN}")))?;
        let mut h = Sha256::new();
        for t in &tokens {
            h.update(t.as_bytes());
            h.update(b"\n");
        }
        let id = hex::encode(&h.finalize()[..8]);
        Ok(Vocabulary {
            tokens,
            index,
            unk,
            id,
        })
    }

    /// Builds from training sequences: specials first, then tokens seen at
    /// least `min_count` times by descending frequency, ties alphabetical.
    pub fn build<'a>(seqs: impl IntoIterator<Item = &'a TokenSeq>, min_count: usize) -> Self {
        let mut counts: HashMap<&str, usize> = HashMap::new();
        for s in seqs {
            for t in s.iter() {
                *counts.entry(t).or_default() += 1;
            }
        }
        let mut ranked: Vec<(&str, usize)> = counts
            .into_iter()
            .filter(|(t, c)| *c >= min_count.max(1) && *t != PAD_TOKEN && *t != UNK_TOKEN)
            .collect();
        ranked.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(b.0)));
        let tokens = [PAD_TOKEN, UNK_TOKEN]
            .into_iter()
            .chain(ranked.into_iter().map(|(t, _)| t))
            .map(str::to_string)
            .collect();
        Vocabulary::from_tokens(tokens).expect("specials are present and tokens unique")
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Vocabulary::from_tokens(text.lines().map(|l| l.trim_end_matches('\r').to_string()).collect())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut text = self.tokens.join("\n");
        text.push('\n');
        fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn pad_index(&self) -> usize {
        0
    }

    pub fn unk_index(&self) -> usize {
        self.unk
    }

    /// Short content digest identifying this vocabulary.
    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn index_of(&self, token: &str) -> usize {
        self.index.get(token).copied().unwrap_or(self.unk)
    }

    pub fn contains(&self, token: &str) -> bool {
        self.index.contains_key(token)
    }

    pub fn token(&self, index: usize) -> Option<&str> {
        self.tokens.get(index).map(String::as_str)
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }
}

/// Fixed-length index encoding with a tail of zeros.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct EncodedSeq {
    pub indices: Vec<usize>,
    pub attention_mask: Vec<u8>,
    pub vocab_id: String,
}

impl EncodedSeq {
    /// Number of real (unpadded) tokens.
    pub fn real_len(&self) -> usize {
        self.attention_mask.iter().filter(|&&m| m == 1).count()
    }

    pub fn max_len(&self) -> usize {
        self.indices.len()
    }
}

/// Maps the first `max_len` tokens to indices and pads the rest with 0.
pub fn encode_pad(tokens: &TokenSeq, max_len: usize, vocab: &Vocabulary) -> EncodedSeq {
    let mut indices = vec![vocab.pad_index(); max_len];
    let mut attention_mask = vec![0u8; max_len];
    for (slot, t) in tokens.iter().take(max_len).enumerate() {
        indices[slot] = vocab.index_of(t);
        attention_mask[slot] = 1;
    }
    EncodedSeq {
        indices,
        attention_mask,
        vocab_id: vocab.id().to_string(),
    }
}

/// Inverse of [`encode_pad`] for in-vocabulary tokens.
pub fn decode(encoded: &EncodedSeq, vocab: &Vocabulary) -> Vec<String> {
    encoded
        .indices
        .iter()
        .zip(&encoded.attention_mask)
        .filter(|(_, &m)| m == 1)
        .map(|(&i, _)| vocab.token(i).unwrap_or(UNK_TOKEN).to_string())
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn seq(v: &[&str]) -> TokenSeq {
        TokenSeq::new(v.iter().map(|s| s.to_string()).collect()).unwrap()
    }

    #[test]
    fn build_orders_by_frequency() {
        let a = seq(&["b", "a", "b", "c"]);
        let v = Vocabulary::build([&a], 1);
        assert_eq!(v.tokens(), &["[PAD]", "[UNK]", "b", "a", "c"]);
        assert_eq!(v.index_of("zzz"), v.unk_index());
    }

    #[test]
    fn short_sequence_padded() {
        let v = Vocabulary::build([&seq(&["x", "y", "z"])], 1);
        let e = encode_pad(&seq(&["x", "y", "z"]), 55, &v);
        assert_eq!(e.indices.len(), 55);
        assert!(e.indices[3..].iter().all(|&i| i == 0));
        assert_eq!(e.attention_mask.iter().map(|&m| m as usize).sum::<usize>(), 3);
    }

    #[test]
    fn long_sequence_truncated() {
        let toks: Vec<String> = (0..60).map(|i| format!("t{i}")).collect();
        let s = TokenSeq::new(toks.clone()).unwrap();
        let v = Vocabulary::build([&s], 1);
        let e = encode_pad(&s, 55, &v);
        assert_eq!(decode(&e, &v), toks[..55].to_vec());
        assert_eq!(e.real_len(), 55);
    }

    #[test]
    fn vocab_file_requires_specials() {
        assert!(Vocabulary::from_tokens(vec!["a".into()]).is_err());
        assert!(Vocabulary::from_tokens(vec![PAD_TOKEN.into()]).is_err());
        let dir = tempfile::tempdir().unwrap();
        let v = Vocabulary::build([&seq(&["q"])], 1);
        let p = dir.path().join("vocab.txt");
        v.save(&p).unwrap();
        assert_eq!(Vocabulary::from_file(&p).unwrap(), v);
    }

    proptest! {
        #[test]
        fn decode_inverts_encode(words in prop::collection::vec("[a-z]{1,5}", 0..80), max_len in 1usize..90) {
            let s = TokenSeq::new(words.clone()).unwrap();
            let v = Vocabulary::build([&s], 1);
            let e = encode_pad(&s, max_len, &v);
            prop_assert_eq!(e.indices.len(), max_len);
            let real = e.real_len();
            prop_assert!(e.attention_mask[..real].iter().all(|&m| m == 1));
            prop_assert!(e.indices[real..].iter().all(|&i| i == 0));
            prop_assert!(e.indices[..real].iter().all(|&i| i != 0));
            let n = words.len().min(max_len);
            prop_assert_eq!(decode(&e, &v), words[..n].to_vec());
        }
    }
}
