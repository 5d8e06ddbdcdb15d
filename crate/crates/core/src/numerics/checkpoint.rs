use serde::{Deserialize, Serialize};

use super::{NumericsError, ParamRegistry, Tensor};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TensorRecord {
    pub name: String,
    pub rows: usize,
    pub cols: usize,
    /// Row-major.
    pub values: Vec<f64>,
}

/// Named tensors plus the hash of the configuration that produced them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamCheckpoint {
    pub config_hash: String,
    pub tensors: Vec<TensorRecord>,
}

impl ParamCheckpoint {
    pub fn from_registry(registry: &ParamRegistry, config_hash: impl Into<String>) -> Self {
        Self {
            config_hash: config_hash.into(),
            tensors: registry
                .iter()
                .map(|(name, t)| TensorRecord {
                    name: name.to_string(),
                    rows: t.rows(),
                    cols: t.cols(),
                    values: t.data().to_vec(),
                })
                .collect(),
        }
    }

    pub fn to_registry(&self) -> Result<ParamRegistry, NumericsError> {
        let mut reg = ParamRegistry::new();
        for rec in &self.tensors {
            if rec.values.iter().any(|v| !v.is_finite()) {
                return Err(NumericsError::Checkpoint(format!(
                    "tensor `{}` holds a non-finite value",
                    rec.name
                )));
            }
            reg.insert(
                rec.name.clone(),
                Tensor::new(rec.rows, rec.cols, rec.values.clone())?,
            )?;
        }
        Ok(reg)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("checkpoint serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, NumericsError> {
        serde_json::from_str(text).map_err(|e| NumericsError::Checkpoint(e.to_string()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    proptest! {
        #[test]
        fn json_round_trip_is_bit_exact(
            vals in proptest::collection::vec(proptest::num::f64::NORMAL | proptest::num::f64::SUBNORMAL | proptest::num::f64::ZERO, 1..64)
        ) {
            let mut reg = ParamRegistry::new();
            reg.insert("w", Tensor::new(1, vals.len(), vals.clone()).unwrap()).unwrap();
            let ckpt = ParamCheckpoint::from_registry(&reg, "abc");
            let back = ParamCheckpoint::from_json(&ckpt.to_json()).unwrap();
            let restored = back.to_registry().unwrap();
            let got = restored.get("w").unwrap().data();
            for (a, b) in got.iter().zip(&vals) {
                prop_assert_eq!(a.to_bits(), b.to_bits());
            }
            prop_assert_eq!(back.config_hash, "abc");
        }
    }

    #[test]
    fn rejects_bad_shape() {
        let ckpt = ParamCheckpoint {
            config_hash: String::new(),
            tensors: vec![TensorRecord {
                name: "w".into(),
                rows: 2,
                cols: 2,
                values: vec![0.0; 3],
            }],
        };
        assert!(ckpt.to_registry().is_err());
    }
}
