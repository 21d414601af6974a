use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

/// Flat parameter or gradient vector.
///
/// Every network in the crate stores its weights as one `ParamVector`, and every gradient
/// has the same length and layout as the parameters it belongs to.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ParamVector(Vec<f64>);

impl ParamVector {
    pub fn zeros(len: usize) -> Self {
        ParamVector(vec![0.0; len])
    }

    pub fn from_vec(values: Vec<f64>) -> Self {
        ParamVector(values)
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|v| v.is_finite())
    }

    pub fn dot(&self, other: &ParamVector) -> f64 {
        debug_assert_eq!(self.len(), other.len());
        self.0.iter().zip(&other.0).map(|(a, b)| a * b).sum()
    }

    pub fn norm_sq(&self) -> f64 {
        self.0.iter().map(|v| v * v).sum()
    }

    pub fn norm(&self) -> f64 {
        self.norm_sq().sqrt()
    }

    pub fn scaled(&self, factor: f64) -> ParamVector {
        ParamVector(self.0.iter().map(|v| v * factor).collect())
    }

    /// `self + factor * other`, elementwise.
    pub fn add_scaled(&self, other: &ParamVector, factor: f64) -> Result<ParamVector> {
        check_len(self, other)?;
        Ok(ParamVector(
            self.0.iter().zip(&other.0).map(|(a, b)| a + factor * b).collect(),
        ))
    }

    pub fn add_scaled_in_place(&mut self, other: &ParamVector, factor: f64) -> Result<()> {
        check_len(self, other)?;
        for (a, b) in self.0.iter_mut().zip(&other.0) {
            *a += factor * b;
        }
        Ok(())
    }

    /// One gradient step: `params - step * grad`.
    ///
    /// Fails on a length mismatch or if the result is not finite.
    pub fn axpy_update(&self, grad: &ParamVector, step: f64) -> Result<ParamVector> {
        check_len(self, grad)?;
        let out: Vec<f64> = self.0.iter().zip(&grad.0).map(|(p, g)| p - step * g).collect();
        if out.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numeric("parameter update produced a non-finite value".into()));
        }
        Ok(ParamVector(out))
    }

    /// Concatenate two vectors (used to embed base and residual parameters in one space).
    pub fn concat(&self, other: &ParamVector) -> ParamVector {
        let mut v = self.0.clone();
        v.extend_from_slice(&other.0);
        ParamVector(v)
    }

    /// SHA-256 of the little-endian bit patterns, hex encoded.
    pub fn digest(&self) -> String {
        let mut h = Sha256::new();
        for v in &self.0 {
            h.update(v.to_bits().to_le_bytes());
        }
        h.finalize().iter().map(|b| format!("{b:02x}")).collect()
    }
}

fn check_len(a: &ParamVector, b: &ParamVector) -> Result<()> {
    if a.len() != b.len() {
        return Err(Error::Shape(format!(
            "parameter length mismatch: {} vs {}",
            a.len(),
            b.len()
        )));
    }
    Ok(())
}
