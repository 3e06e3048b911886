//! Annotation data model, the paired image/JSON corpus layout, and a
//! lossless, byte-stable JSON codec.

mod error;
mod json;
mod scan;
mod types;

pub use error::{SchemaError, Violation};
pub use json::{
    parse_record, parse_record_for, round_to, serialize_record, FEATURE_DECIMALS,
    PROPORTION_DECIMALS, PROPORTION_SUM_TOLERANCE,
};
pub use scan::{scan_corpus, CorpusEntry, CorpusScan, Orphan, OrphanKind, ScanError, IMAGE_EXTENSIONS};
pub use types::{
    AnnotationRecord, ColorName, ColorProportion, EmotionLabel, Gender, HsvSummary, ModelVad,
    PersonRecord, StructuralFeatures, UnknownEmotion, VadVector,
};
