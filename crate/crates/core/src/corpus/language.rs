use std::collections::HashSet;
use std::sync::OnceLock;

use super::Dataset;
use crate::tems::clean_text;
use crate::Result;

/// Decides whether a text is English. Injected into [`filter_english_text`].
pub trait LanguagePredicate {
    fn is_english(&self, text: &str) -> Result<bool>;
}

impl<F> LanguagePredicate for F
where
    F: Fn(&str) -> bool,
{
    fn is_english(&self, text: &str) -> Result<bool> {
        Ok(self(text))
    }
}

/// Dictionary-coverage heuristic: the text must be (almost) pure ASCII and at
/// least `threshold` of its cleaned tokens must be common English words.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DictionaryCoverage {
    pub threshold: f64,
    /// Maximum share of non-ASCII alphabetic characters.
    pub max_non_ascii: f64,
}

impl Default for DictionaryCoverage {
    fn default() -> Self {
        DictionaryCoverage {
            threshold: 0.2,
            max_non_ascii: 0.1,
        }
    }
}

const COMMON_WORDS: &str = "\
a about above after again against all almost alone along already also always am among an and another any \
anyone anything are around as ask at away back bad be beautiful because become been before being believe \
below best better between big both boy bring brother but buy by call came can car care carry change child \
children city come could country day dead did die different do does doing done down during each early earth \
eat end enough even ever every everyone everything eye face fact family far father feel few find fire first \
follow food for forever free friend from full fun game gave get girl give go god going good got great group \
grow had half hand happen happy hard has hate have he head hear heart help her here him his hold home hope \
hour house how i if important in into is it its just keep kid kill kind know land last late learn leave left \
less let life light like line little live long look lose love made make man many may me mean men might mind \
miss moment money more morning most mother move much must my name need never new news next nice night no \
not nothing now of off often old on once one only open or other our out over own part people person place \
play please point power put rather read ready real really remember right run said same save saw say school \
see seem she should show side since small so some someone something sometimes soon start state still stop \
story such sun sure take talk tell than thank that the their them then there these they thing think this \
those though through time to today together told too took top toward true try turn two under until up upon \
us use very wait walk want war was watch water way we week well went were what when where which while who \
whole why will with without woman women word work world would year yes yet you young your \
belong bucket list dream travel vacation beach trip summer winter sky tree sea ocean island peace hope \
police government president vote election protest violence racism freedom justice support stand fight \
strong together solidarity welcome proud sad angry sorry thanks morning tonight weekend birthday party";

fn dictionary() -> &'static HashSet<&'static str> {
    static WORDS: OnceLock<HashSet<&'static str>> = OnceLock::new();
    WORDS.get_or_init(|| COMMON_WORDS.split_whitespace().collect())
}

fn known(word: &str) -> bool {
    let dict = dictionary();
    if dict.contains(word) {
        return true;
    }
    let stems = [
        word.strip_suffix("ies").map(|w| format!("{w}y")),
        word.strip_suffix("es").map(str::to_string),
        word.strip_suffix('s').map(str::to_string),
        word.strip_suffix("ed").map(str::to_string),
        word.strip_suffix("ing").map(str::to_string),
        word.strip_suffix("ly").map(str::to_string),
        word.strip_suffix("'s").map(str::to_string),
    ];
    stems.into_iter().flatten().any(|w| dict.contains(w.as_str()))
}

impl LanguagePredicate for DictionaryCoverage {
    fn is_english(&self, text: &str) -> Result<bool> {
        let letters: Vec<char> = text.chars().filter(|c| c.is_alphabetic()).collect();
        if letters.is_empty() {
            return Ok(false);
        }
        let non_ascii = letters.iter().filter(|c| !c.is_ascii()).count();
        if non_ascii as f64 / letters.len() as f64 > self.max_non_ascii {
            return Ok(false);
        }
        let cleaned = clean_text(text);
        let tokens: Vec<&str> = cleaned.split_whitespace().collect();
        if tokens.is_empty() {
            return Ok(false);
        }
        let hits = tokens.iter().filter(|t| known(t)).count();
        Ok(hits as f64 / tokens.len() as f64 >= self.threshold)
    }
}

/// Drops samples with empty or non-English text.
pub fn filter_english_text(d: &Dataset, lang_id: &dyn LanguagePredicate) -> Dataset {
    d.filtered(|s| {
        if s.text.trim().is_empty() {
            return false;
        }
        match lang_id.is_english(&s.text) {
            Ok(keep) => keep,
            Err(e) => {
                log::warn!("language predicate failed on sample {}: {e}; dropping", s.id);
                false
            }
        }
    })
}
