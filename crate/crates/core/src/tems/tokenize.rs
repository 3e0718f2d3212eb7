use std::collections::HashMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// An ordered list of non-empty tokens without whitespace.
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "Vec<String>", into = "Vec<String>")]
pub struct TokenSeq(Vec<String>);

impl TokenSeq {
    pub fn new(tokens: Vec<String>) -> Result<Self> {
        if let Some(bad) = tokens
            .iter()
            .find(|t| t.is_empty() || t.chars().any(char::is_whitespace))
        {
            return Err(Error::InvalidArgument(format!("invalid token {bad:?}")));
        }
        Ok(TokenSeq(tokens))
    }

    pub fn empty() -> Self {
        TokenSeq(Vec::new())
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn tokens(&self) -> &[String] {
        &self.0
    }

    pub fn iter(&self) -> impl Iterator<Item = &str> {
        self.0.iter().map(String::as_str)
    }

    pub fn join(&self, sep: &str) -> String {
        self.0.join(sep)
    }

    pub(crate) fn truncated(&self, max: usize) -> TokenSeq {
        TokenSeq(self.0.iter().take(max).cloned().collect())
    }

    pub(crate) fn concat(&self, other: &TokenSeq) -> TokenSeq {
        TokenSeq(self.0.iter().chain(other.0.iter()).cloned().collect())
    }
}

impl TryFrom<Vec<String>> for TokenSeq {
    type Error = Error;

    fn try_from(v: Vec<String>) -> Result<Self> {
        TokenSeq::new(v)
    }
}

impl From<TokenSeq> for Vec<String> {
    fn from(t: TokenSeq) -> Self {
        t.0
    }
}

/// Subword tokenizer of a pretrained encoder.
pub trait SubwordTokenizer {
    fn tokenize(&self, text: &str) -> Vec<String>;
}

pub enum TokenizeScheme<'a> {
    Whitespace,
    WordPiece(&'a dyn SubwordTokenizer),
}

pub fn tokenize(cleaned: &str, scheme: &TokenizeScheme<'_>) -> TokenSeq {
    match scheme {
        TokenizeScheme::Whitespace => {
            TokenSeq(cleaned.split_whitespace().map(str::to_string).collect())
        }
        TokenizeScheme::WordPiece(wp) => TokenSeq(
            wp.tokenize(cleaned)
                .into_iter()
                .filter(|t| !t.is_empty() && !t.chars().any(char::is_whitespace))
                .collect(),
        ),
    }
}

/// Greedy longest-match-first WordPiece over a BERT-style `vocab.txt`.
#[derive(Clone, Debug)]
pub struct WordPiece {
    vocab: HashMap<String, usize>,
    unk: String,
    max_chars_per_word: usize,
}

impl WordPiece {
    pub fn new(tokens: impl IntoIterator<Item = String>) -> Self {
        WordPiece {
            vocab: tokens.into_iter().enumerate().map(|(i, t)| (t, i)).collect(),
            unk: "[UNK]".to_string(),
            max_chars_per_word: 100,
        }
    }

    /// One token per line.
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(WordPiece::new(text.lines().map(|l| l.trim_end_matches('\r').to_string())))
    }

    fn split_word(&self, word: &str, out: &mut Vec<String>) {
        let chars: Vec<char> = word.chars().collect();
        if chars.len() > self.max_chars_per_word {
            out.push(self.unk.clone());
            return;
        }
        let mut pieces = Vec::new();
        let mut start = 0;
        while start < chars.len() {
            let mut end = chars.len();
            let mut found = None;
            while start < end {
                let mut piece: String = chars[start..end].iter().collect();
                if start > 0 {
                    piece.insert_str(0, "##");
                }
                if self.vocab.contains_key(&piece) {
                    found = Some(piece);
                    break;
                }
                end -= 1;
            }
            match found {
                Some(p) => {
                    pieces.push(p);
                    start = end;
                }
                None => {
                    out.push(self.unk.clone());
                    return;
                }
            }
        }
        out.extend(pieces);
    }
}

impl SubwordTokenizer for WordPiece {
    fn tokenize(&self, text: &str) -> Vec<String> {
        let mut out = Vec::new();
        for word in text.split_whitespace() {
            // Punctuation splits words, as in BERT's basic tokenizer.
            let mut current = String::new();
            for c in word.chars() {
                if c.is_ascii_punctuation() {
                    if !current.is_empty() {
                        self.split_word(&current, &mut out);
                        current.clear();
                    }
                    self.split_word(&c.to_string(), &mut out);
                } else {
                    current.push(c);
                }
            }
            if !current.is_empty() {
                self.split_word(&current, &mut out);
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn words(v: &[&str]) -> Vec<String> {
        v.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn whitespace_split() {
        let t = tokenize("the bucket list bora bora", &TokenizeScheme::Whitespace);
        assert_eq!(t.tokens(), words(&["the", "bucket", "list", "bora", "bora"]).as_slice());
        assert!(tokenize("", &TokenizeScheme::Whitespace).is_empty());
    }

    #[test]
    fn wordpiece_greedy() {
        let wp = WordPiece::new(words(&["[PAD]", "[UNK]", "bora", "##bora", "buck", "##et", "the", "'"]));
        let t = tokenize("the bucket borabora xyz don't", &TokenizeScheme::WordPiece(&wp));
        assert_eq!(
            t.tokens(),
            words(&["the", "buck", "##et", "bora", "##bora", "[UNK]", "[UNK]", "'", "[UNK]"]).as_slice()
        );
    }

    #[test]
    fn token_seq_rejects_whitespace() {
        assert!(TokenSeq::new(words(&["a b"])).is_err());
        assert!(TokenSeq::new(words(&[""])).is_err());
        assert!(serde_json::from_str::<TokenSeq>(r#"["ok","not ok"]"#).is_err());
    }

    proptest! {
        #[test]
        fn join_round_trips(tokens in prop::collection::vec("[a-z0-9']{1,8}", 0..20)) {
            let cleaned = tokens.join(" ");
            let t = tokenize(&cleaned, &TokenizeScheme::Whitespace);
            prop_assert_eq!(t.join(" "), cleaned);
        }
    }
}
