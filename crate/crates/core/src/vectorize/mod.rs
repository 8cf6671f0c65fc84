//! Author and topic vector spaces, LSA and cosine overlap.

pub mod lsa;
pub mod overlap;
pub mod phrases;
pub mod sparse;
pub mod tfidf;

pub use lsa::{fit_lsa, FittedOn, LsaConfig, LsaModel};
pub use overlap::{clamp_overlap, cosine, cosine_overlap, pair_key, weekly_overlap_series, OverlapSeries};
pub use phrases::{detect_phrases, tokenize, Document, PhraseConfig, PhraseVocabulary};
pub use sparse::{build_author_matrix, FeatureSpace, RowNormalization, SparseCountMatrix};
pub use tfidf::build_tfidf;
