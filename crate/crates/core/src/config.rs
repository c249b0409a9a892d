//! Loading class catalogs, feature schemas and generalized proxy models from
//! TOML.
//!
//! ```toml
//! questions = [{ id = "hard", text = "Is it hard?" }]
//!
//! [[classes]]
//! label = "key"
//! likelihoods = [0.95]
//!
//! [[schemas]]
//! class = "key"
//! features = [{ name = "wear_index", unit = "1", sigma = 0.05, min = 0.0, max = 1.0 }]
//!
//! [[models]]
//! class = "key"
//! states = [{ name = "wear_index", unit = "1" }]
//! channels = ["wear_index"]
//! a = [[1.0]]
//! c = [[1.0]]
//! q = [[1e-6]]
//! r = [[2.5e-3]]
//! prior_mean = [0.1]
//! prior_cov = [[0.1]]
//! qod = { wear_index = 0.03 }
//! ```

use std::collections::BTreeMap;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::Deserialize;

use crate::identification::{
    AttributeAnswer, ClassCatalog, ClassEntry, FeatureDef, FeatureSchema, IdentificationError, Observation,
    Question, SchemaRegistry,
};
use crate::proxy::{GeneralizedModel, ModelRegistry, ProxyError, QualityOfData, StateSpaceModel, StateVar};

/// The catalog shipped with the crate.
pub const BUNDLED_CATALOG: &str = include_str!("../data/catalog.toml");

/// The seventeen-answer key transcript matching the bundled catalog.
pub const KEY_TRANSCRIPT: &str = include_str!("../data/key_transcript.txt");

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("parse error: {0}")]
    Parse(String),
    #[error("line {line}: {message}")]
    Line { line: usize, message: String },
    #[error(transparent)]
    Identification(#[from] IdentificationError),
    #[error("model for `{class}`: {source}")]
    Model {
        class: String,
        #[source]
        source: ProxyError,
    },
    #[error("quality bounds: {0}")]
    Qod(ProxyError),
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    #[serde(default)]
    questions: Vec<Question>,
    #[serde(default)]
    classes: Vec<ClassEntry>,
    #[serde(default)]
    schemas: Vec<RawSchema>,
    #[serde(default)]
    models: Vec<RawModel>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSchema {
    class: String,
    features: Vec<FeatureDef>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawModel {
    class: String,
    states: Vec<StateVar>,
    channels: Vec<String>,
    a: Vec<Vec<f64>>,
    c: Vec<Vec<f64>>,
    q: Vec<Vec<f64>>,
    r: Vec<Vec<f64>>,
    prior_mean: Vec<f64>,
    prior_cov: Vec<Vec<f64>>,
    qod: BTreeMap<String, f64>,
}

fn matrix(class: &str, name: &str, rows: &[Vec<f64>]) -> Result<DMatrix<f64>, ConfigError> {
    let ncols = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|r| r.len() != ncols) {
        return Err(ConfigError::Model {
            class: class.to_string(),
            source: ProxyError::InvalidModel(format!("matrix `{name}` has ragged rows")),
        });
    }
    Ok(DMatrix::from_row_iterator(rows.len(), ncols, rows.iter().flatten().copied()))
}

impl RawModel {
    fn build(self) -> Result<GeneralizedModel, ConfigError> {
        let class = self.class.clone();
        let model = StateSpaceModel {
            a: matrix(&class, "a", &self.a)?,
            c: matrix(&class, "c", &self.c)?,
            q: matrix(&class, "q", &self.q)?,
            r: matrix(&class, "r", &self.r)?,
            states: self.states,
            channels: self.channels,
        };
        let wrap = |source| ConfigError::Model {
            class: class.clone(),
            source,
        };
        model.validate().map_err(wrap)?;
        let default_qod = QualityOfData::from_named(&model, &self.qod).map_err(wrap)?;
        let g = GeneralizedModel {
            class_label: self.class.clone(),
            prior_mean: DVector::from_vec(self.prior_mean),
            prior_cov: matrix(&class, "prior_cov", &self.prior_cov)?,
            model,
            default_qod,
        };
        g.validate().map_err(wrap)?;
        Ok(g)
    }
}

/// Everything the identification and proxy layers need to know about the
/// asset classes in play.
#[derive(Debug, Clone)]
pub struct Config {
    pub catalog: ClassCatalog,
    pub schemas: SchemaRegistry,
    pub models: ModelRegistry,
}

impl Config {
    pub fn from_toml_str(text: &str) -> Result<Self, ConfigError> {
        let raw: RawConfig = toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))?;
        if raw.classes.is_empty() {
            return Err(IdentificationError::EmptyCatalog.into());
        }
        let catalog = ClassCatalog::new(raw.questions, raw.classes)?;
        let mut schemas = SchemaRegistry::new();
        for s in raw.schemas {
            if catalog.classes().iter().all(|c| c.label != s.class) {
                return Err(IdentificationError::InvalidCatalog(format!(
                    "schema for `{}`, which is not a catalog class",
                    s.class
                ))
                .into());
            }
            schemas.register(FeatureSchema {
                class_label: s.class,
                features: s.features,
            })?;
        }
        let mut models = ModelRegistry::new();
        for m in raw.models {
            let g = m.build()?;
            let class = g.class_label.clone();
            models.register(g).map_err(|source| ConfigError::Model { class, source })?;
        }
        Ok(Config {
            catalog,
            schemas,
            models,
        })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, ConfigError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_toml_str(&text)
    }

    pub fn bundled() -> Self {
        Self::from_toml_str(BUNDLED_CATALOG).expect("bundled catalog is valid")
    }
}

/// Parses an answers file, one answer per line.
///
/// A line is either `<question text>? <answer>` or `<question id> = <answer>`.
/// Blank lines and lines starting with `#` are ignored.
pub fn parse_answers(text: &str, catalog: &ClassCatalog) -> Result<Vec<AttributeAnswer>, ConfigError> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let at = |message: String| ConfigError::Line { line: i + 1, message };
        let (key, answer) = if let Some(pos) = line.rfind('?') {
            (&line[..=pos], &line[pos + 1..])
        } else if let Some((k, v)) = line.split_once('=') {
            (k.trim(), v)
        } else {
            return Err(at("expected `<question>? <answer>` or `<id> = <answer>`".into()));
        };
        let question = catalog
            .find_question(key)
            .ok_or_else(|| at(IdentificationError::UnknownQuestion(key.to_string()).to_string()))?;
        let level = answer.parse().map_err(|e: IdentificationError| at(e.to_string()))?;
        out.push(AttributeAnswer::new(question.id.clone(), level));
    }
    Ok(out)
}

/// A scan to identify: an optional class label and the raw channel values.
///
/// ```toml
/// class = "key"
/// [channels]
/// cut_depth_1 = 2.0
/// ```
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObservationFile {
    #[serde(default)]
    pub class: Option<String>,
    pub channels: BTreeMap<String, f64>,
}

impl ObservationFile {
    pub fn from_toml_str(text: &str) -> Result<Self, ConfigError> {
        toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))
    }

    pub fn observation(&self) -> Observation {
        self.channels.iter().map(|(k, v)| (k.as_str(), *v)).collect()
    }
}

/// Parses `state = max_stddev` lines (TOML) into bounds for `model`.
pub fn parse_qod(text: &str, model: &StateSpaceModel) -> Result<QualityOfData, ConfigError> {
    let bounds: BTreeMap<String, f64> = toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))?;
    QualityOfData::from_named(model, &bounds).map_err(ConfigError::Qod)
}
