//! Classification, characterization and identity resolution.
//!
//! An asset is first classified from answers to attribute questions, then
//! characterized into a class-specific feature vector, and finally resolved to
//! an existing [`Identity`] or minted as a new one.

mod characterize;
mod classify;
mod hash;
mod registry;

pub use characterize::{characterize, Feature, FeatureDef, FeatureSchema, FeatureVector, Observation, SchemaRegistry};
pub use classify::{classify, AnswerLevel, AttributeAnswer, ClassCatalog, ClassEntry, ClassPosterior, Question};
pub use hash::{bin_index, cells_digest, physical_hash, PhysicalHash, DEFAULT_QUANTIZATION_FACTOR};
pub use registry::{Identity, IdentityId, IdentityRegistry, Resolution, ResolutionKind, DEFAULT_MATCH_THRESHOLD};

/// Posterior mass the top class needs before an asset is allowed to mint.
pub const DEFAULT_MIN_CONFIDENCE: f64 = 0.5;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum IdentificationError {
    #[error("unknown question id `{0}`")]
    UnknownQuestion(String),
    #[error("unrecognised answer `{0}`")]
    UnknownAnswer(String),
    #[error("class catalog is empty")]
    EmptyCatalog,
    #[error("invalid catalog: {0}")]
    InvalidCatalog(String),
    #[error("no feature schema registered for class `{0}`")]
    UnknownClass(String),
    #[error("observation is missing channel `{0}`")]
    MissingChannel(String),
    #[error("feature `{name}` = {value} outside [{min}, {max}]")]
    OutOfRange { name: String, value: f64, min: f64, max: f64 },
    #[error("quantization factor must be positive, got {0}")]
    BadQuantization(f64),
    #[error("match threshold must be positive, got {0}")]
    BadThreshold(f64),
    #[error("top class `{label}` has posterior {posterior:.3}, below the minimum confidence {min:.3}")]
    LowConfidence { label: String, posterior: f64, min: f64 },
    #[error("identity registry unavailable: {0}")]
    Storage(String),
}

/// Returns the top class if its posterior reaches `min_confidence`.
pub fn confident_class(posterior: &ClassPosterior, min_confidence: f64) -> Result<&str, IdentificationError> {
    let (label, p) = posterior.top();
    if p >= min_confidence {
        Ok(label)
    } else {
        Err(IdentificationError::LowConfidence {
            label: label.to_string(),
            posterior: p,
            min: min_confidence,
        })
    }
}
