use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::IdentificationError;

/// One channel of a class feature schema.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureDef {
    pub name: String,
    pub unit: String,
    /// Measurement noise standard deviation, in `unit`.
    pub sigma: f64,
    pub min: f64,
    pub max: f64,
}

/// Fixed, ordered feature layout for one asset class.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureSchema {
    pub class_label: String,
    pub features: Vec<FeatureDef>,
}

impl FeatureSchema {
    pub fn validate(&self) -> Result<(), IdentificationError> {
        let bad = |msg: String| Err(IdentificationError::InvalidCatalog(msg));
        if self.features.is_empty() {
            return bad(format!("schema `{}` has no features", self.class_label));
        }
        let mut names = std::collections::HashSet::new();
        for f in &self.features {
            if !names.insert(f.name.as_str()) {
                return bad(format!("schema `{}` repeats feature `{}`", self.class_label, f.name));
            }
            if !(f.sigma > 0.0 && f.sigma.is_finite()) {
                return bad(format!("feature `{}` needs a positive sigma", f.name));
            }
            if f.min.is_nan() || f.max.is_nan() || f.min > f.max {
                return bad(format!("feature `{}` has min > max", f.name));
            }
        }
        Ok(())
    }

    /// The built-in key schema: five cut depths, wear and material score.
    pub fn builtin_key() -> Self {
        let mut features: Vec<FeatureDef> = (1..=5)
            .map(|i| FeatureDef {
                name: format!("cut_depth_{i}"),
                unit: "mm".into(),
                sigma: 0.05,
                min: 0.0,
                max: 10.0,
            })
            .collect();
        features.push(FeatureDef {
            name: "wear_index".into(),
            unit: "1".into(),
            sigma: 0.05,
            min: 0.0,
            max: 1.0,
        });
        features.push(FeatureDef {
            name: "material_score".into(),
            unit: "1".into(),
            sigma: 0.05,
            min: 0.0,
            max: 1.0,
        });
        FeatureSchema {
            class_label: "key".into(),
            features,
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct SchemaRegistry {
    schemas: BTreeMap<String, FeatureSchema>,
}

impl SchemaRegistry {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn register(&mut self, schema: FeatureSchema) -> Result<(), IdentificationError> {
        schema.validate()?;
        self.schemas.insert(schema.class_label.clone(), schema);
        Ok(())
    }

    pub fn get(&self, class_label: &str) -> Option<&FeatureSchema> {
        self.schemas.get(class_label)
    }

    pub fn labels(&self) -> impl Iterator<Item = &str> {
        self.schemas.keys().map(String::as_str)
    }
}

/// A raw sensor reading: named channels with real values.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    pub channels: BTreeMap<String, f64>,
}

impl Observation {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with(mut self, channel: &str, value: f64) -> Self {
        self.channels.insert(channel.to_string(), value);
        self
    }
}

impl<S: Into<String>> FromIterator<(S, f64)> for Observation {
    fn from_iter<I: IntoIterator<Item = (S, f64)>>(iter: I) -> Self {
        Observation {
            channels: iter.into_iter().map(|(k, v)| (k.into(), v)).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Feature {
    pub name: String,
    pub value: f64,
    pub unit: String,
    pub noise_sigma: f64,
}

/// Class-specific measurements in schema order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector {
    pub class_label: String,
    pub features: Vec<Feature>,
}

impl FeatureVector {
    pub fn values(&self) -> impl Iterator<Item = f64> + '_ {
        self.features.iter().map(|f| f.value)
    }

    pub fn get(&self, name: &str) -> Option<f64> {
        self.features.iter().find(|f| f.name == name).map(|f| f.value)
    }

    /// Sigma-normalised Euclidean distance. `None` if the vectors are not
    /// comparable (different class or layout).
    pub fn distance(&self, other: &FeatureVector) -> Option<f64> {
        if self.class_label != other.class_label || self.features.len() != other.features.len() {
            return None;
        }
        let mut acc = 0.0;
        for (a, b) in self.features.iter().zip(&other.features) {
            if a.name != b.name {
                return None;
            }
            let z = (a.value - b.value) / a.noise_sigma;
            acc += z * z;
        }
        Some(acc.sqrt())
    }
}

/// Projects an observation onto the class schema.
pub fn characterize(
    schemas: &SchemaRegistry,
    class_label: &str,
    observation: &Observation,
) -> Result<FeatureVector, IdentificationError> {
    let schema = schemas
        .get(class_label)
        .ok_or_else(|| IdentificationError::UnknownClass(class_label.to_string()))?;
    let features = schema
        .features
        .iter()
        .map(|def| {
            let value = *observation
                .channels
                .get(&def.name)
                .ok_or_else(|| IdentificationError::MissingChannel(def.name.clone()))?;
            if !value.is_finite() || value < def.min || value > def.max {
                return Err(IdentificationError::OutOfRange {
                    name: def.name.clone(),
                    value,
                    min: def.min,
                    max: def.max,
                });
            }
            Ok(Feature {
                name: def.name.clone(),
                value,
                unit: def.unit.clone(),
                noise_sigma: def.sigma,
            })
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(FeatureVector {
        class_label: class_label.to_string(),
        features,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn registry() -> SchemaRegistry {
        let mut r = SchemaRegistry::new();
        r.register(FeatureSchema::builtin_key()).unwrap();
        r
    }

    fn key_obs(wear: f64) -> Observation {
        Observation::new()
            .with("material_score", 0.9)
            .with("cut_depth_3", 1.0)
            .with("wear_index", wear)
            .with("cut_depth_1", 2.0)
            .with("cut_depth_5", 2.5)
            .with("cut_depth_2", 3.5)
            .with("cut_depth_4", 4.0)
    }

    #[test]
    fn key_in_schema_order() {
        let fv = characterize(&registry(), "key", &key_obs(0.10)).unwrap();
        let values: Vec<f64> = fv.values().collect();
        assert_eq!(values, vec![2.0, 3.5, 1.0, 4.0, 2.5, 0.10, 0.9]);
        let names: Vec<&str> = fv.features.iter().map(|f| f.name.as_str()).collect();
        assert_eq!(names[..2], ["cut_depth_1", "cut_depth_2"]);
        assert_eq!(names[5..], ["wear_index", "material_score"]);
        assert_eq!(fv.features[0].unit, "mm");
    }

    #[test]
    fn worn_twin_differs_only_in_wear() {
        let fresh = characterize(&registry(), "key", &key_obs(0.10)).unwrap();
        let worn = characterize(&registry(), "key", &key_obs(0.65)).unwrap();
        assert_eq!(fresh.features[..5], worn.features[..5]);
        assert_ne!(fresh.get("wear_index"), worn.get("wear_index"));
        assert_eq!(fresh.get("material_score"), worn.get("material_score"));
    }

    #[test]
    fn missing_and_out_of_range() {
        let mut obs = key_obs(0.1);
        obs.channels.remove("wear_index");
        assert_eq!(
            characterize(&registry(), "key", &obs).unwrap_err(),
            IdentificationError::MissingChannel("wear_index".into())
        );
        let obs = key_obs(1.5);
        assert!(matches!(
            characterize(&registry(), "key", &obs),
            Err(IdentificationError::OutOfRange { .. })
        ));
        let obs = key_obs(f64::NAN);
        assert!(matches!(
            characterize(&registry(), "key", &obs),
            Err(IdentificationError::OutOfRange { .. })
        ));
        assert_eq!(
            characterize(&registry(), "lock", &key_obs(0.1)).unwrap_err(),
            IdentificationError::UnknownClass("lock".into())
        );
    }

    #[test]
    fn schema_rejects_zero_sigma() {
        let mut s = FeatureSchema::builtin_key();
        s.features[0].sigma = 0.0;
        assert!(SchemaRegistry::new().register(s).is_err());
    }
}
