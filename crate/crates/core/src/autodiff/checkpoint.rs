//! Parameter serialization: an ordered list of `(name, shape, row-major values)`
//! tagged with the engine version. Values are written as shortest
//! round-trip decimals, so save/load is bit-exact.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::graph::{Param, ParamStore};
use super::tensor::Tensor;
use crate::error::{Error, Result};

pub const ENGINE_TAG: &str = "mvts-autodiff";
pub const ENGINE_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParamRecord {
    pub name: String,
    pub shape: Vec<usize>,
    pub values: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParamSet {
    pub engine: String,
    pub engine_version: u32,
    pub params: Vec<ParamRecord>,
}

impl ParamSet {
    pub fn from_store(store: &ParamStore) -> Self {
        Self {
            engine: ENGINE_TAG.into(),
            engine_version: ENGINE_VERSION,
            params: store
                .params()
                .iter()
                .map(|p| ParamRecord {
                    name: p.name.clone(),
                    shape: p.value.shape().to_vec(),
                    values: p.value.data().to_vec(),
                })
                .collect(),
        }
    }

    /// Overwrites the values of `store`; names and shapes must match.
    pub fn load_into(&self, store: &mut ParamStore) -> Result<()> {
        if self.engine != ENGINE_TAG || self.engine_version != ENGINE_VERSION {
            return Err(Error::Checkpoint(format!(
                "unsupported engine {} v{}",
                self.engine, self.engine_version
            )));
        }
        let params = self
            .params
            .iter()
            .map(|r| {
                let value = Tensor::new(r.shape.clone(), r.values.clone())
                    .map_err(|e| Error::Checkpoint(format!("parameter '{}': {e}", r.name)))?;
                Ok(Param {
                    name: r.name.clone(),
                    grad: vec![0.0; value.len()],
                    value,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        store.load_values(&params)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, serde_json::to_vec(self)?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = fs::read(path)?;
        serde_json::from_slice(&bytes).map_err(|e| Error::Checkpoint(format!("{}: {e}", path.display())))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    proptest! {
        #[test]
        fn roundtrip_is_bit_exact(values in prop::collection::vec(any::<f64>().prop_filter("finite", |v| v.is_finite()), 1..64)) {
            let mut store = ParamStore::new();
            store.add("w", Tensor::new(vec![values.len()], values.clone()).unwrap()).unwrap();
            let dir = tempfile::tempdir().unwrap();
            let path = dir.path().join("p.json");
            ParamSet::from_store(&store).save(&path).unwrap();

            let mut fresh = ParamStore::new();
            fresh.add("w", Tensor::zeros(&[values.len()])).unwrap();
            ParamSet::load(&path).unwrap().load_into(&mut fresh).unwrap();
            for (a, b) in fresh.get(0).value.data().iter().zip(&values) {
                prop_assert_eq!(a.to_bits(), b.to_bits());
            }
        }
    }

    #[test]
    fn layout_mismatch_rejected() {
        let mut a = ParamStore::new();
        a.add("w", Tensor::zeros(&[2, 2])).unwrap();
        let mut b = ParamStore::new();
        b.add("w", Tensor::zeros(&[4])).unwrap();
        assert!(ParamSet::from_store(&a).load_into(&mut b).is_err());
    }

    #[test]
    fn corrupt_file_is_checkpoint_error() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("p.json");
        fs::write(&path, b"{\"engine\": ").unwrap();
        assert!(matches!(ParamSet::load(&path), Err(Error::Checkpoint(_))));
    }
}
