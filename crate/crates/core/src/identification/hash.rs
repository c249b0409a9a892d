use serde::{Deserialize, Serialize};

use super::{FeatureVector, IdentificationError};
use crate::digest::{Digest, DigestBuilder};

/// Default bin width in units of each feature's noise sigma.
pub const DEFAULT_QUANTIZATION_FACTOR: f64 = 6.0;

/// Quantized fingerprint of a feature vector.
///
/// Each feature is binned at `quantization_factor * noise_sigma`; the digest
/// covers only the class label and the bin indices, so small re-scan noise
/// that stays inside a bin leaves it unchanged.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhysicalHash {
    pub class_label: String,
    pub quantized_cells: Vec<i64>,
    pub raw_features: FeatureVector,
    pub digest: Digest,
}

pub fn bin_index(value: f64, bin_width: f64) -> i64 {
    (value / bin_width).floor() as i64
}

pub fn cells_digest(class_label: &str, cells: &[i64]) -> Digest {
    let mut b = DigestBuilder::new("physical-hash");
    b.str(class_label).u64(cells.len() as u64);
    for &c in cells {
        b.i64(c);
    }
    b.finish()
}

pub fn physical_hash(fv: &FeatureVector, quantization_factor: f64) -> Result<PhysicalHash, IdentificationError> {
    if !(quantization_factor > 0.0 && quantization_factor.is_finite()) {
        return Err(IdentificationError::BadQuantization(quantization_factor));
    }
    let quantized_cells: Vec<i64> = fv
        .features
        .iter()
        .map(|f| bin_index(f.value, quantization_factor * f.noise_sigma))
        .collect();
    let digest = cells_digest(&fv.class_label, &quantized_cells);
    Ok(PhysicalHash {
        class_label: fv.class_label.clone(),
        quantized_cells,
        raw_features: fv.clone(),
        digest,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::identification::Feature;

    fn fv(values: &[(f64, f64)]) -> FeatureVector {
        FeatureVector {
            class_label: "key".into(),
            features: values
                .iter()
                .enumerate()
                .map(|(i, &(value, noise_sigma))| Feature {
                    name: format!("f{i}"),
                    value,
                    unit: "mm".into(),
                    noise_sigma,
                })
                .collect(),
        }
    }

    #[test]
    fn bin_arithmetic() {
        let h = physical_hash(&fv(&[(2.0, 0.1)]), 4.0).unwrap();
        assert_eq!(h.quantized_cells, vec![5]);
        let h = physical_hash(&fv(&[(2.1, 0.1)]), 4.0).unwrap();
        assert_eq!(h.quantized_cells, vec![5]);
        let h = physical_hash(&fv(&[(-0.1, 0.1)]), 4.0).unwrap();
        assert_eq!(h.quantized_cells, vec![-1]);
    }

    #[test]
    fn stable_inside_bins() {
        let a = physical_hash(&fv(&[(2.1, 0.1), (0.9, 0.05)]), 4.0).unwrap();
        let b = physical_hash(&fv(&[(2.25, 0.1), (0.85, 0.05)]), 4.0).unwrap();
        assert_eq!(a.quantized_cells, b.quantized_cells);
        assert_eq!(a.digest, b.digest);
    }

    #[test]
    fn class_label_is_hashed() {
        let a = physical_hash(&fv(&[(2.1, 0.1)]), 4.0).unwrap();
        let mut other = fv(&[(2.1, 0.1)]);
        other.class_label = "pen".into();
        let b = physical_hash(&other, 4.0).unwrap();
        assert_eq!(a.quantized_cells, b.quantized_cells);
        assert_ne!(a.digest, b.digest);
    }

    #[test]
    fn rejects_bad_factor() {
        for q in [0.0, -1.0, f64::NAN, f64::INFINITY] {
            assert!(matches!(
                physical_hash(&fv(&[(1.0, 0.1)]), q),
                Err(IdentificationError::BadQuantization(_))
            ));
        }
    }
}
