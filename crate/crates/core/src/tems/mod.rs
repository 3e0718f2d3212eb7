//! Text cleaning, tokenization and construction of the fused text + object
//! name sequences fed to the text models.

mod clean;
mod embed;
mod sequence;
mod tokenize;
mod vocab;

pub use clean::{clean_text, normalize_object_name};
pub use embed::{load_embeddings, OOV_INIT_RANGE};
pub use sequence::{build_tems, tems_records, LengthPolicy, TemsRecord, TemsSequence};
pub use tokenize::{tokenize, SubwordTokenizer, TokenSeq, TokenizeScheme, WordPiece};
pub use vocab::{decode, encode_pad, EncodedSeq, Vocabulary, PAD_TOKEN, UNK_TOKEN};
