//! Named parameter storage and the on-disk checkpoint format.
//!
//! A checkpoint is a JSON manifest listing `{name, shape, offset}` per tensor plus a
//! single blob of little-endian `f32` values. Parameters are kept at `f32` precision
//! in memory (see [`ParamStore::round_to_f32`]) so a save/load cycle is bit-exact.

use std::collections::HashMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{NumError, Result};
use crate::tape::{Gradients, Tape, Var};
use crate::tensor::Tensor;

pub const MANIFEST_FILE: &str = "manifest.json";
pub const BLOB_FILE: &str = "params.bin";

#[derive(Clone, Debug)]
struct Entry {
    name: String,
    tensor: Tensor,
    trainable: bool,
}

/// Ordered collection of named tensors.
#[derive(Clone, Debug, Default)]
pub struct ParamStore {
    entries: Vec<Entry>,
    index: HashMap<String, usize>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, name: impl Into<String>, tensor: Tensor) {
        let name = name.into();
        if let Some(&i) = self.index.get(&name) {
            self.entries[i].tensor = tensor;
            return;
        }
        self.index.insert(name.clone(), self.entries.len());
        self.entries.push(Entry { name, tensor, trainable: true });
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.entries.iter().map(|e| e.name.as_str())
    }

    pub fn get(&self, name: &str) -> Result<&Tensor> {
        self.index
            .get(name)
            .map(|&i| &self.entries[i].tensor)
            .ok_or_else(|| NumError::UnknownParam(name.to_string()))
    }

    pub fn get_mut(&mut self, name: &str) -> Result<&mut Tensor> {
        let i = *self
            .index
            .get(name)
            .ok_or_else(|| NumError::UnknownParam(name.to_string()))?;
        Ok(&mut self.entries[i].tensor)
    }

    pub fn set_trainable(&mut self, name: &str, trainable: bool) -> Result<()> {
        let i = *self
            .index
            .get(name)
            .ok_or_else(|| NumError::UnknownParam(name.to_string()))?;
        self.entries[i].trainable = trainable;
        Ok(())
    }

    pub fn is_trainable(&self, name: &str) -> bool {
        self.index.get(name).is_some_and(|&i| self.entries[i].trainable)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor)> {
        self.entries.iter().map(|e| (e.name.as_str(), &e.tensor))
    }

    /// Mutable access in store order, with each entry's trainable flag.
    pub fn iter_mut(&mut self) -> impl Iterator<Item = (&str, &mut Tensor, bool)> {
        self.entries.iter_mut().map(|e| (e.name.as_str(), &mut e.tensor, e.trainable))
    }

    pub fn num_scalars(&self) -> usize {
        self.entries.iter().map(|e| e.tensor.len()).sum()
    }

    /// Borrows every parameter into `tape`. Frozen parameters do not require grad.
    pub fn bind<'a>(&'a self, tape: &mut Tape<'a>) -> Result<Bound> {
        let mut vars = Vec::with_capacity(self.entries.len());
        for e in &self.entries {
            vars.push(tape.borrowed(&e.tensor, e.trainable)?);
        }
        Ok(Bound { vars, index: self.index.clone() })
    }

    /// Rounds every value to the nearest `f32`.
    pub fn round_to_f32(&mut self) {
        for e in &mut self.entries {
            for v in e.tensor.data_mut() {
                *v = f64::from(*v as f32);
            }
        }
    }

    /// Writes `manifest.json` and `params.bin` into `dir`.
    pub fn save(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir)?;
        let mut blob = Vec::with_capacity(self.num_scalars() * 4);
        let mut tensors = Vec::with_capacity(self.entries.len());
        for e in &self.entries {
            tensors.push(ManifestEntry {
                name: e.name.clone(),
                shape: e.tensor.shape().to_vec(),
                offset: blob.len() as u64,
                trainable: e.trainable,
            });
            for &v in e.tensor.data() {
                blob.extend_from_slice(&(v as f32).to_le_bytes());
            }
        }
        let manifest = Manifest {
            blob: BLOB_FILE.to_string(),
            dtype: "f32-le".to_string(),
            tensors,
        };
        fs::write(dir.join(MANIFEST_FILE), serde_json::to_vec_pretty(&manifest)?)?;
        fs::write(dir.join(BLOB_FILE), blob)?;
        Ok(())
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let manifest: Manifest = serde_json::from_slice(&fs::read(dir.join(MANIFEST_FILE))?)?;
        if manifest.dtype != "f32-le" {
            return Err(NumError::Checkpoint(format!("unsupported dtype {}", manifest.dtype)));
        }
        let blob = fs::read(dir.join(&manifest.blob))?;
        let mut store = ParamStore::new();
        for t in manifest.tensors {
            let n: usize = t.shape.iter().product();
            let start = t.offset as usize;
            let end = start + 4 * n;
            if end > blob.len() {
                return Err(NumError::Checkpoint(format!(
                    "tensor {} spans bytes {start}..{end} but blob has {}",
                    t.name,
                    blob.len()
                )));
            }
            let data = blob[start..end]
                .chunks_exact(4)
                .map(|c| f64::from(f32::from_le_bytes([c[0], c[1], c[2], c[3]])))
                .collect();
            store.insert(t.name.clone(), Tensor::new(t.shape, data)?);
            store.set_trainable(&t.name, t.trainable)?;
        }
        Ok(store)
    }
}

#[derive(Serialize, Deserialize)]
struct Manifest {
    blob: String,
    dtype: String,
    tensors: Vec<ManifestEntry>,
}

#[derive(Serialize, Deserialize)]
struct ManifestEntry {
    name: String,
    shape: Vec<usize>,
    /// Byte offset into the blob.
    offset: u64,
    #[serde(default = "yes")]
    trainable: bool,
}

fn yes() -> bool {
    true
}

/// Tape handles for the parameters of a [`ParamStore`].
#[derive(Clone, Debug)]
pub struct Bound {
    vars: Vec<Var>,
    index: HashMap<String, usize>,
}

impl Bound {
    pub fn var(&self, name: &str) -> Result<Var> {
        self.index
            .get(name)
            .map(|&i| self.vars[i])
            .ok_or_else(|| NumError::UnknownParam(name.to_string()))
    }

    /// Per-parameter gradients in store order; frozen or unused parameters get zeros.
    pub fn collect(&self, store: &ParamStore, grads: &Gradients) -> Vec<Tensor> {
        self.vars
            .iter()
            .zip(&store.entries)
            .map(|(v, e)| grads.get(*v).unwrap_or_else(|| Tensor::zeros(e.tensor.shape())))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::SplitMix64;

    #[test]
    fn checkpoint_round_trip_is_bit_exact() {
        let mut rng = SplitMix64::new(3);
        let mut store = ParamStore::new();
        store.insert("a", Tensor::randn(&[3, 4], 1.0, &mut rng));
        store.insert("b", Tensor::randn(&[5], 0.1, &mut rng));
        store.set_trainable("b", false).unwrap();
        store.round_to_f32();

        let dir = tempfile::tempdir().unwrap();
        store.save(dir.path()).unwrap();
        let back = ParamStore::load(dir.path()).unwrap();
        for ((n1, t1), (n2, t2)) in store.iter().zip(back.iter()) {
            assert_eq!(n1, n2);
            assert_eq!(t1.shape(), t2.shape());
            let b1: Vec<u64> = t1.data().iter().map(|v| v.to_bits()).collect();
            let b2: Vec<u64> = t2.data().iter().map(|v| v.to_bits()).collect();
            assert_eq!(b1, b2);
        }
        assert!(!back.is_trainable("b"));

        let blob = std::fs::read(dir.path().join(BLOB_FILE)).unwrap();
        assert_eq!(blob.len(), (12 + 5) * 4);
    }

    #[test]
    fn truncated_blob_is_reported() {
        let mut store = ParamStore::new();
        store.insert("a", Tensor::zeros(&[8]));
        let dir = tempfile::tempdir().unwrap();
        store.save(dir.path()).unwrap();
        std::fs::write(dir.path().join(BLOB_FILE), [0u8; 8]).unwrap();
        assert!(matches!(ParamStore::load(dir.path()), Err(NumError::Checkpoint(_))));
    }
}
