//! Cross-language information retrieval by query translation.
//!
//! Source-language queries are mapped into the target language through a
//! linear projection between monolingual word-embedding spaces, names are
//! transliterated and matched against an entity list, translations may be
//! blended with a bilingual dictionary or an external translator, and the
//! resulting weighted queries are ranked against an inverted index with
//! classic TF-IDF scoring and evaluated with trec_eval-style metrics.

pub mod embedding;
pub mod evaluation;
pub mod hybrid;
pub mod pipeline;
pub mod projection;
pub mod retrieval;
pub mod stopwords;
pub mod testbed;
pub mod translation;
pub mod transliteration;

pub use embedding::{cosine, CbowConfig, EmbeddingStore};
pub use projection::{learn_projection, ProjectionMatrix, TranslationLexicon};
pub use stopwords::Stoplist;
pub use translation::{Method, Query, TermClass, Translator, WeightedQuery};
