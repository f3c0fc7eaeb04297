use std::collections::HashMap;

use crate::error::{Result, TensorError};
use crate::tensor::Tensor;

/// Gradients keyed by parameter name.
pub type GradStore = HashMap<String, Tensor>;

/// Named, ordered parameter tensors of one network, tagged with the digest of
/// the configuration they were built for.
#[derive(Clone, Debug, PartialEq)]
pub struct ParamStore {
    digest: [u8; 32],
    entries: Vec<(String, Tensor)>,
    index: HashMap<String, usize>,
}

impl ParamStore {
    pub fn new(digest: [u8; 32]) -> Self {
        ParamStore {
            digest,
            entries: Vec::new(),
            index: HashMap::new(),
        }
    }

    pub fn digest(&self) -> &[u8; 32] {
        &self.digest
    }

    pub fn insert(&mut self, name: impl Into<String>, tensor: Tensor) -> Result<()> {
        let name = name.into();
        if self.index.contains_key(&name) {
            return Err(TensorError::DuplicateParam(name));
        }
        self.index.insert(name.clone(), self.entries.len());
        self.entries.push((name, tensor));
        Ok(())
    }

    pub fn get(&self, name: &str) -> Result<&Tensor> {
        self.index
            .get(name)
            .map(|&i| &self.entries[i].1)
            .ok_or_else(|| TensorError::UnknownParam(name.to_string()))
    }

    pub fn get_mut(&mut self, name: &str) -> Result<&mut Tensor> {
        match self.index.get(name) {
            Some(&i) => Ok(&mut self.entries[i].1),
            None => Err(TensorError::UnknownParam(name.to_string())),
        }
    }

    pub fn contains(&self, name: &str) -> bool {
        self.index.contains_key(name)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor)> {
        self.entries.iter().map(|(n, t)| (n.as_str(), t))
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = (&str, &mut Tensor)> {
        self.entries.iter_mut().map(|(n, t)| (n.as_str(), t))
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.entries.iter().map(|(n, _)| n.as_str())
    }

    pub fn param_count(&self) -> usize {
        self.entries.iter().map(|(_, t)| t.numel()).sum()
    }

    /// Entries whose names start with `prefix`, in order, with the same digest.
    pub fn subset(&self, prefix: &str) -> ParamStore {
        let mut out = ParamStore::new(self.digest);
        for (name, t) in self.iter().filter(|(n, _)| n.starts_with(prefix)) {
            out.insert(name, t.clone()).expect("names are unique");
        }
        out
    }

    /// Appends every entry of `other`. Digests must agree.
    pub fn extend(&mut self, other: &ParamStore) -> Result<()> {
        if other.digest != self.digest {
            return Err(TensorError::Incompatible("config digests differ".into()));
        }
        for (name, t) in other.iter() {
            self.insert(name, t.clone())?;
        }
        Ok(())
    }

    /// Ok when both stores list the same names in the same order with equal
    /// shapes; otherwise names the first mismatch.
    pub fn check_compatible(&self, other: &ParamStore) -> Result<()> {
        if self.len() != other.len() {
            return Err(TensorError::Incompatible(format!(
                "{} tensors vs {}",
                self.len(),
                other.len()
            )));
        }
        for ((na, ta), (nb, tb)) in self.iter().zip(other.iter()) {
            if na != nb {
                return Err(TensorError::Incompatible(format!("tensor `{na}` vs `{nb}`")));
            }
            if ta.shape() != tb.shape() {
                return Err(TensorError::Incompatible(format!(
                    "tensor `{na}` has shape {:?} vs {:?}",
                    ta.shape(),
                    tb.shape()
                )));
            }
        }
        Ok(())
    }

    /// Bitwise equality of every tensor, `-0.0 != +0.0`.
    pub fn bit_identical(&self, other: &ParamStore) -> bool {
        self.check_compatible(other).is_ok()
            && self.iter().zip(other.iter()).all(|((_, a), (_, b))| {
                a.data()
                    .iter()
                    .zip(b.data())
                    .all(|(x, y)| x.to_bits() == y.to_bits())
            })
    }
}
