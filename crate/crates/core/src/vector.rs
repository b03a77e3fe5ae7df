use std::ops::Index;

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Dense real vector of the model dimension. Entries are always finite.
#[derive(Clone, Debug, PartialEq)]
pub struct Vector<S> {
    values: Vec<S>,
}

impl<S: Scalar> Vector<S> {
    pub fn new(values: Vec<S>) -> Result<Self> {
        if values.iter().any(|v| !v.is_finite_value()) {
            return Err(Error::NonFinite("vector"));
        }
        Ok(Self { values })
    }

    pub fn zeros(dim: usize) -> Self {
        Self {
            values: vec![S::zero(); dim],
        }
    }

    /// Skips the finiteness check; callers guarantee it.
    pub(crate) fn from_vec_unchecked(values: Vec<S>) -> Self {
        Self { values }
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn as_slice(&self) -> &[S] {
        &self.values
    }

    pub(crate) fn as_mut_slice(&mut self) -> &mut [S] {
        &mut self.values
    }

    pub fn into_vec(self) -> Vec<S> {
        self.values
    }

    pub fn is_zero(&self) -> bool {
        self.values.iter().all(|v| v.is_zero())
    }

    pub(crate) fn check_dim(&self, other: &Self) -> Result<()> {
        if self.dim() != other.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                found: other.dim(),
            });
        }
        Ok(())
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        self.check_dim(other)?;
        Ok(self.zip_with(other, |a, b| a.clone() + b.clone()))
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.check_dim(other)?;
        Ok(self.zip_with(other, |a, b| a.clone() - b.clone()))
    }

    pub fn add_assign(&mut self, other: &Self) -> Result<()> {
        self.check_dim(other)?;
        for (a, b) in self.values.iter_mut().zip(&other.values) {
            *a = a.clone() + b.clone();
        }
        Ok(())
    }

    pub fn sub_assign(&mut self, other: &Self) -> Result<()> {
        self.check_dim(other)?;
        for (a, b) in self.values.iter_mut().zip(&other.values) {
            *a = a.clone() - b.clone();
        }
        Ok(())
    }

    pub fn scale(&self, factor: &S) -> Self {
        Self::from_vec_unchecked(self.values.iter().map(|v| v.clone() * factor.clone()).collect())
    }

    pub fn dot(&self, other: &Self) -> Result<S> {
        self.check_dim(other)?;
        Ok(self
            .values
            .iter()
            .zip(&other.values)
            .fold(S::zero(), |acc, (a, b)| acc + a.clone() * b.clone()))
    }

    pub fn norm_sq(&self) -> S {
        self.values.iter().fold(S::zero(), |acc, v| acc + v.clone() * v.clone())
    }

    pub fn to_f64(&self) -> Vec<f64> {
        self.values.iter().map(Scalar::to_f64_lossy).collect()
    }

    fn zip_with(&self, other: &Self, f: impl Fn(&S, &S) -> S) -> Self {
        Self::from_vec_unchecked(self.values.iter().zip(&other.values).map(|(a, b)| f(a, b)).collect())
    }
}

impl<S> Index<usize> for Vector<S> {
    type Output = S;

    fn index(&self, i: usize) -> &S {
        &self.values[i]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_non_finite() {
        assert!(Vector::new(vec![1.0, f64::NAN]).is_err());
        assert!(Vector::new(vec![f64::INFINITY]).is_err());
        assert!(Vector::new(vec![1.0, 2.0]).is_ok());
    }

    #[test]
    fn dimension_mismatch_is_an_error() {
        let a = Vector::new(vec![1.0, 2.0]).unwrap();
        let b = Vector::new(vec![1.0]).unwrap();
        assert!(matches!(
            a.add(&b),
            Err(Error::DimensionMismatch { expected: 2, found: 1 })
        ));
    }
}
