//! Top-k sparsification with per-worker error feedback.
//!
//! `k = ceil(delta * d)` coordinates of largest magnitude are kept; among
//! equal magnitudes the lowest index wins. Selection is a partial select
//! (`select_nth_unstable_by`) under a total order, so the kept set does not
//! depend on the selection algorithm.

use std::cmp::Ordering;

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::vector::Vector;

/// Fraction of coordinates transmitted, in `(0, 1]`.
#[derive(Clone, Debug, PartialEq, PartialOrd)]
pub struct CompressionRatio<S>(S);

impl<S: Scalar> CompressionRatio<S> {
    pub fn new(delta: S) -> Result<Self> {
        if !delta.is_finite_value() || delta <= S::zero() || delta > S::one() {
            return Err(Error::InvalidRatio(delta.to_string()));
        }
        Ok(Self(delta))
    }

    pub fn one() -> Self {
        Self(S::one())
    }

    pub fn value(&self) -> &S {
        &self.0
    }

    pub fn into_inner(self) -> S {
        self.0
    }

    pub fn is_one(&self) -> bool {
        self.0.is_one()
    }

    /// Number of coordinates kept for a vector of dimension `dim`.
    pub fn kept_count(&self, dim: usize) -> usize {
        if dim == 0 {
            return 0;
        }
        let k = (self.0.clone() * S::from_usize_exact(dim))
            .ceil_snap()
            .to_usize()
            .unwrap_or(dim);
        k.clamp(1, dim)
    }
}

impl CompressionRatio<f64> {
    /// Smallest ratio that still sends one coordinate of a `dim`-vector.
    pub fn floor_for_dim(dim: usize) -> Result<Self> {
        if dim == 0 {
            return Err(crate::error::invalid("dim", "must be at least 1"));
        }
        Self::new(1.0 / dim as f64)
    }
}

/// Sparse representation of a compressed update, used for size accounting.
#[derive(Clone, Debug, PartialEq)]
pub struct SparseUpdate<S> {
    dim: usize,
    indices: Vec<usize>,
    values: Vec<S>,
}

impl<S: Scalar> SparseUpdate<S> {
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn nnz(&self) -> usize {
        self.indices.len()
    }

    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    pub fn values(&self) -> &[S] {
        &self.values
    }

    /// Payload size if every kept value costs `bits_per_value` bits.
    pub fn payload_bits(&self, bits_per_value: u32) -> u64 {
        self.nnz() as u64 * u64::from(bits_per_value)
    }

    pub fn to_dense(&self) -> Vector<S> {
        let mut out = vec![S::zero(); self.dim];
        for (&i, v) in self.indices.iter().zip(&self.values) {
            out[i] = v.clone();
        }
        Vector::from_vec_unchecked(out)
    }
}

fn by_magnitude_then_index<S: Scalar>(values: &[S]) -> impl Fn(&usize, &usize) -> Ordering + '_ {
    move |&a, &b| {
        values[b]
            .abs()
            .partial_cmp(&values[a].abs())
            .expect("vector entries are finite")
            .then(a.cmp(&b))
    }
}

/// Kept coordinates of `v`, as a sparse update with ascending indices.
pub fn top_k_sparse<S: Scalar, R: Scalar>(v: &Vector<S>, delta: &CompressionRatio<R>) -> SparseUpdate<S> {
    let dim = v.dim();
    let k = delta.kept_count(dim);
    let values = v.as_slice();
    let mut order: Vec<usize> = (0..dim).collect();
    if k < dim {
        order.select_nth_unstable_by(k - 1, by_magnitude_then_index(values));
        order.truncate(k);
        order.sort_unstable();
    }
    let kept = order.iter().map(|&i| values[i].clone()).collect();
    SparseUpdate {
        dim,
        indices: order,
        values: kept,
    }
}

/// Dense Top-k: `v` on the kept coordinates and zero elsewhere.
pub fn top_k<S: Scalar, R: Scalar>(v: &Vector<S>, delta: &CompressionRatio<R>) -> Vector<S> {
    if delta.kept_count(v.dim()) == v.dim() {
        return v.clone();
    }
    top_k_sparse(v, delta).to_dense()
}

/// Per-worker error-feedback residual, starting at zero.
#[derive(Clone, Debug, PartialEq)]
pub struct ErrorState<S> {
    residual: Vector<S>,
}

impl<S: Scalar> ErrorState<S> {
    pub fn zeros(dim: usize) -> Self {
        Self {
            residual: Vector::zeros(dim),
        }
    }

    pub fn from_residual(residual: Vector<S>) -> Self {
        Self { residual }
    }

    pub fn residual(&self) -> &Vector<S> {
        &self.residual
    }

    pub fn dim(&self) -> usize {
        self.residual.dim()
    }

    /// Compresses `g + e`, keeps what was not sent, and returns the sparse update.
    pub fn compress<R: Scalar>(&mut self, g: &Vector<S>, delta: &CompressionRatio<R>) -> Result<SparseUpdate<S>> {
        let corrected = g.add(&self.residual)?;
        let update = top_k_sparse(&corrected, delta);
        let mut rest = corrected.into_vec();
        for &i in update.indices() {
            rest[i] = S::zero();
        }
        self.residual = Vector::from_vec_unchecked(rest);
        Ok(update)
    }
}

/// One error-feedback compression step: returns the dense update and the next state.
pub fn ef_compress<S: Scalar, R: Scalar>(
    g: &Vector<S>,
    e: &ErrorState<S>,
    delta: &CompressionRatio<R>,
) -> Result<(Vector<S>, ErrorState<S>)> {
    let mut next = e.clone();
    let update = next.compress(g, delta)?;
    Ok((update.to_dense(), next))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scalar::ratio;

    fn v(x: &[f64]) -> Vector<f64> {
        Vector::new(x.to_vec()).unwrap()
    }

    fn r(x: f64) -> CompressionRatio<f64> {
        CompressionRatio::new(x).unwrap()
    }

    #[test]
    fn ratio_bounds() {
        assert!(CompressionRatio::new(0.0).is_err());
        assert!(CompressionRatio::new(-0.5).is_err());
        assert!(CompressionRatio::new(1.5).is_err());
        assert!(CompressionRatio::new(f64::NAN).is_err());
        assert!(CompressionRatio::new(1.0).is_ok());
        assert_eq!(r(1e-9).kept_count(7), 1);
        assert_eq!(r(0.1).kept_count(30), 3);
        assert_eq!(r(2.0 / 3.0).kept_count(3), 2);
        assert_eq!(CompressionRatio::new(ratio(2, 3)).unwrap().kept_count(3), 2);
    }

    // Reference: try every k-subset and keep the one with the largest
    // magnitude sum, lowest lexicographic index set on ties.
    fn brute_force_mask(values: &[f64], k: usize) -> Vec<usize> {
        let d = values.len();
        let mut best: Option<(f64, Vec<usize>)> = None;
        for mask in 0u32..(1 << d) {
            if mask.count_ones() as usize != k {
                continue;
            }
            let idx: Vec<usize> = (0..d).filter(|i| mask & (1 << i) != 0).collect();
            let mass: f64 = idx.iter().map(|&i| values[i].abs()).sum();
            let better = match &best {
                None => true,
                Some((m, b)) => mass > *m || (mass == *m && idx < *b),
            };
            if better {
                best = Some((mass, idx));
            }
        }
        best.unwrap().1
    }

    #[test]
    fn top_k_examples() {
        assert_eq!(brute_force_mask(&[3.0, -1.0, 2.0], 2), vec![0, 2]);
        assert_eq!(top_k(&v(&[3.0, -1.0, 2.0]), &r(2.0 / 3.0)), v(&[3.0, 0.0, 2.0]));

        let x = v(&[0.3, -7.0, 1e-3, 4.0]);
        assert_eq!(top_k(&x, &r(1.0)), x);

        assert_eq!(brute_force_mask(&[5.0, -5.0, 0.0, 0.0], 1), vec![0]);
        assert_eq!(top_k(&v(&[5.0, -5.0, 0.0, 0.0]), &r(0.25)), v(&[5.0, 0.0, 0.0, 0.0]));
    }

    #[test]
    fn ef_compress_examples() {
        let (u, e) = ef_compress(&v(&[1.0, 0.0]), &ErrorState::zeros(2), &r(1.0)).unwrap();
        assert_eq!(u, v(&[1.0, 0.0]));
        assert_eq!(e.residual(), &v(&[0.0, 0.0]));

        let (u, e) = ef_compress(&v(&[3.0, -1.0, 2.0]), &ErrorState::zeros(3), &r(2.0 / 3.0)).unwrap();
        assert_eq!(u, v(&[3.0, 0.0, 2.0]));
        assert_eq!(e.residual(), &v(&[0.0, -1.0, 0.0]));

        let prior = ErrorState::from_residual(v(&[0.0, -1.0, 0.0]));
        let (u, e) = ef_compress(&v(&[0.0, 0.0, 0.0]), &prior, &r(1.0 / 3.0)).unwrap();
        assert_eq!(u, v(&[0.0, -1.0, 0.0]));
        assert_eq!(e.residual(), &v(&[0.0, 0.0, 0.0]));
    }

    #[test]
    fn ef_compress_dimension_mismatch() {
        let err = ef_compress(&v(&[1.0, 2.0]), &ErrorState::zeros(3), &r(0.5)).unwrap_err();
        assert!(matches!(err, Error::DimensionMismatch { .. }));
    }

    #[test]
    fn sparse_accounting() {
        let s = top_k_sparse(&v(&[0.0, 9.0, -3.0, 1.0]), &r(0.5));
        assert_eq!(s.indices(), &[1, 2]);
        assert_eq!(s.values(), &[9.0, -3.0]);
        assert_eq!(s.payload_bits(32), 64);
        assert_eq!(s.to_dense(), v(&[0.0, 9.0, -3.0, 0.0]));
    }
}
