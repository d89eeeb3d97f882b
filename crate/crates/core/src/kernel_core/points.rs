use crate::error::{CfmeError, Result};

/// A set of points of common dimension, stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct PointSet {
    dim: usize,
    coords: Vec<f64>,
}

impl PointSet {
    pub fn new(dim: usize, coords: Vec<f64>) -> Result<Self> {
        if dim == 0 {
            return Err(CfmeError::input("point dimension must be at least 1"));
        }
        if !coords.len().is_multiple_of(dim) {
            return Err(CfmeError::input(format!(
                "{} coordinates do not split into points of dimension {}",
                coords.len(),
                dim
            )));
        }
        Ok(Self { dim, coords })
    }

    pub fn empty(dim: usize) -> Self {
        Self {
            dim: dim.max(1),
            coords: Vec::new(),
        }
    }

    /// One-dimensional points.
    pub fn from_scalars(values: &[f64]) -> Self {
        Self {
            dim: 1,
            coords: values.to_vec(),
        }
    }

    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        let dim = match rows.first() {
            Some(r) => r.as_ref().len(),
            None => {
                return Err(CfmeError::input(
                    "cannot infer dimension of an empty row list",
                ))
            }
        };
        let mut coords = Vec::with_capacity(dim * rows.len());
        for row in rows {
            let row = row.as_ref();
            if row.len() != dim {
                return Err(CfmeError::input("rows have inconsistent dimension"));
            }
            coords.extend_from_slice(row);
        }
        Self::new(dim, coords)
    }

    /// Pairs `(a[i], b[i])` as two-dimensional points.
    pub fn from_columns(a: &[f64], b: &[f64]) -> Result<Self> {
        if a.len() != b.len() {
            return Err(CfmeError::input("column lengths differ"));
        }
        let coords = a.iter().zip(b).flat_map(|(&x, &y)| [x, y]).collect();
        Self::new(2, coords)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.coords.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.coords.is_empty()
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.coords[i * self.dim..(i + 1) * self.dim]
    }

    pub fn iter(&self) -> impl ExactSizeIterator<Item = &[f64]> + '_ {
        self.coords.chunks_exact(self.dim)
    }

    pub fn coords(&self) -> &[f64] {
        &self.coords
    }

    /// Values of coordinate `d` across all points.
    pub fn column(&self, d: usize) -> Vec<f64> {
        self.iter().map(|p| p[d]).collect()
    }

    /// Rows of `self` followed by rows of `other`.
    pub fn concat(&self, other: &PointSet) -> Result<PointSet> {
        if self.dim != other.dim {
            return Err(CfmeError::input(
                "cannot concatenate point sets of different dimension",
            ));
        }
        let mut coords = self.coords.clone();
        coords.extend_from_slice(&other.coords);
        Ok(Self {
            dim: self.dim,
            coords,
        })
    }

    /// Every point shifted by the same offset vector.
    pub fn translated(&self, offset: &[f64]) -> Result<PointSet> {
        if offset.len() != self.dim {
            return Err(CfmeError::input("offset dimension mismatch"));
        }
        let coords = self
            .coords
            .iter()
            .enumerate()
            .map(|(i, &c)| c + offset[i % self.dim])
            .collect();
        Ok(Self {
            dim: self.dim,
            coords,
        })
    }

    pub fn select(&self, indices: &[usize]) -> PointSet {
        let mut coords = Vec::with_capacity(indices.len() * self.dim);
        for &i in indices {
            coords.extend_from_slice(self.point(i));
        }
        Self {
            dim: self.dim,
            coords,
        }
    }
}
