//! Dense sample storage: one column per sample.

use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// `count` samples of dimension `dim`, stored as a `dim × count` column-major
/// matrix so each sample is a contiguous slice.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleMatrix {
    data: DMatrix<f64>,
}

impl SampleMatrix {
    /// Wraps a `dim × count` matrix, rejecting empty or non-finite input.
    pub fn new(data: DMatrix<f64>) -> Result<Self> {
        if data.nrows() == 0 || data.ncols() == 0 {
            return Err(Error::InvalidData(format!(
                "sample matrix must be non-empty, got {}x{}",
                data.nrows(),
                data.ncols()
            )));
        }
        if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
            let (row, col) = (pos % data.nrows(), pos / data.nrows());
            return Err(Error::InvalidData(format!(
                "non-finite value at coordinate {row} of sample {col}"
            )));
        }
        Ok(Self { data })
    }

    /// Builds from a flat column-major buffer (`dim` values per sample).
    pub fn from_columns(dim: usize, values: Vec<f64>) -> Result<Self> {
        if dim == 0 || !values.len().is_multiple_of(dim) {
            return Err(Error::InvalidData(format!(
                "buffer of length {} does not hold whole samples of dimension {dim}",
                values.len()
            )));
        }
        let count = values.len() / dim;
        Self::new(DMatrix::from_vec(dim, count, values))
    }

    /// Builds from a list of samples, each a row of `dim` values.
    pub fn from_samples<S: AsRef<[f64]>>(samples: &[S]) -> Result<Self> {
        let dim = samples.first().map(|s| s.as_ref().len()).unwrap_or(0);
        let mut values = Vec::with_capacity(dim * samples.len());
        for (i, s) in samples.iter().enumerate() {
            let s = s.as_ref();
            if s.len() != dim {
                return Err(Error::InvalidData(format!(
                    "sample {i} has {} coordinates, expected {dim}",
                    s.len()
                )));
            }
            values.extend_from_slice(s);
        }
        Self::from_columns(dim, values)
    }

    pub fn dim(&self) -> usize {
        self.data.nrows()
    }

    pub fn count(&self) -> usize {
        self.data.ncols()
    }

    /// Sample `i` as a slice of length `dim`.
    pub fn sample(&self, i: usize) -> &[f64] {
        let d = self.dim();
        &self.data.as_slice()[i * d..(i + 1) * d]
    }

    pub fn samples(&self) -> impl ExactSizeIterator<Item = &[f64]> + '_ {
        self.data.as_slice().chunks_exact(self.dim())
    }

    /// Flat column-major view of all samples.
    pub fn as_slice(&self) -> &[f64] {
        self.data.as_slice()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.data
    }

    pub fn into_matrix(self) -> DMatrix<f64> {
        self.data
    }

    /// Samples at `indices`, in that order.
    pub fn select(&self, indices: &[usize]) -> Result<Self> {
        let d = self.dim();
        let mut values = Vec::with_capacity(d * indices.len());
        for &i in indices {
            if i >= self.count() {
                return Err(Error::InvalidConfig(format!(
                    "sample index {i} out of range for {} samples",
                    self.count()
                )));
            }
            values.extend_from_slice(self.sample(i));
        }
        Self::from_columns(d, values)
    }

    /// Stacks `self` on top of `other` sample by sample: the result has
    /// dimension `self.dim() + other.dim()`.
    pub fn stack(&self, other: &SampleMatrix) -> Result<Self> {
        if self.count() != other.count() {
            return Err(Error::InvalidData(format!(
                "cannot pair {} samples with {} samples",
                self.count(),
                other.count()
            )));
        }
        let d = self.dim() + other.dim();
        let mut values = Vec::with_capacity(d * self.count());
        for (a, b) in self.samples().zip(other.samples()) {
            values.extend_from_slice(a);
            values.extend_from_slice(b);
        }
        Self::from_columns(d, values)
    }

    /// Concatenates the samples of several matrices of equal dimension.
    pub fn concat(parts: &[&SampleMatrix]) -> Result<Self> {
        let dim = parts
            .first()
            .map(|p| p.dim())
            .ok_or_else(|| Error::InvalidData("nothing to concatenate".into()))?;
        let mut values = Vec::new();
        for p in parts {
            if p.dim() != dim {
                return Err(Error::InvalidData(format!(
                    "dimension mismatch: {} vs {dim}",
                    p.dim()
                )));
            }
            values.extend_from_slice(p.as_slice());
        }
        Self::from_columns(dim, values)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_non_finite_and_empty() {
        assert!(SampleMatrix::from_samples(&[[1.0, f64::NAN]]).is_err());
        assert!(SampleMatrix::from_samples(&[[f64::INFINITY]]).is_err());
        assert!(SampleMatrix::from_columns(2, vec![]).is_err());
        assert!(SampleMatrix::from_samples(&[vec![1.0], vec![1.0, 2.0]]).is_err());
    }

    #[test]
    fn samples_are_columns() {
        let m = SampleMatrix::from_samples(&[[1.0, 2.0], [3.0, 4.0], [5.0, 6.0]]).unwrap();
        assert_eq!((m.dim(), m.count()), (2, 3));
        assert_eq!(m.sample(1), &[3.0, 4.0]);
        assert_eq!(m.matrix()[(1, 2)], 6.0);
        let s = m.select(&[2, 0]).unwrap();
        assert_eq!(s.sample(0), &[5.0, 6.0]);
        assert!(m.select(&[3]).is_err());
    }

    #[test]
    fn stack_puts_first_argument_on_top() {
        let a = SampleMatrix::from_samples(&[[1.0], [2.0]]).unwrap();
        let b = SampleMatrix::from_samples(&[[10.0, 11.0], [20.0, 21.0]]).unwrap();
        let s = a.stack(&b).unwrap();
        assert_eq!(s.dim(), 3);
        assert_eq!(s.sample(1), &[2.0, 20.0, 21.0]);
        let short = SampleMatrix::from_samples(&[[1.0]]).unwrap();
        assert!(short.stack(&b).is_err());
    }
}
