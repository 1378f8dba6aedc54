//! Dense 2D/3D scalar volumes and binary masks.
//!
//! Storage is row-major with the last axis fastest, so a 3D coordinate is
//! written `(z, y, x)` and maps to `(z * ny + y) * nx + x`. Internally every
//! shape is also viewed as 3D by padding a leading axis of length 1, which
//! lets neighbourhood and cube code handle both dimensionalities uniformly.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Per-axis voxel counts of a 2D or 3D grid.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Shape {
    dims: Vec<usize>,
}

impl Shape {
    pub fn new(dims: &[usize]) -> Result<Self> {
        if !(2..=3).contains(&dims.len()) || dims.contains(&0) {
            return Err(Error::InvalidShape(dims.to_vec()));
        }
        dims.iter()
            .try_fold(1usize, |acc, &d| acc.checked_mul(d))
            .ok_or_else(|| Error::InvalidShape(dims.to_vec()))?;
        Ok(Self {
            dims: dims.to_vec(),
        })
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn ndim(&self) -> usize {
        self.dims.len()
    }

    pub fn len(&self) -> usize {
        self.dims.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// The shape viewed as `[nz, ny, nx]`, with `nz = 1` for 2D shapes.
    pub fn dims3(&self) -> [usize; 3] {
        match self.dims.as_slice() {
            [y, x] => [1, *y, *x],
            [z, y, x] => [*z, *y, *x],
            _ => unreachable!("shape invariant"),
        }
    }

    pub fn index(&self, coords: &[usize]) -> Option<usize> {
        if coords.len() != self.dims.len() {
            return None;
        }
        let mut flat = 0usize;
        for (&c, &d) in coords.iter().zip(&self.dims) {
            if c >= d {
                return None;
            }
            flat = flat * d + c;
        }
        Some(flat)
    }

    pub fn coords(&self, mut index: usize) -> Vec<usize> {
        let mut out = vec![0; self.dims.len()];
        for (slot, &d) in out.iter_mut().zip(&self.dims).rev() {
            *slot = index % d;
            index /= d;
        }
        out
    }

    pub(crate) fn coords3(&self, index: usize) -> [usize; 3] {
        let [_, ny, nx] = self.dims3();
        [index / (ny * nx), (index / nx) % ny, index % nx]
    }

    pub(crate) fn index3(&self, [z, y, x]: [usize; 3]) -> usize {
        let [_, ny, nx] = self.dims3();
        (z * ny + y) * nx + x
    }

    pub fn ensure_same(&self, other: &Shape) -> Result<()> {
        if self != other {
            return Err(Error::ShapeMismatch {
                left: self.dims.clone(),
                right: other.dims.clone(),
            });
        }
        Ok(())
    }
}

/// A dense scalar field, e.g. a soft prediction or a gradient.
#[derive(Debug, Clone, PartialEq)]
pub struct Volume {
    shape: Shape,
    data: Vec<f64>,
}

impl Volume {
    pub fn new(shape: Shape, data: Vec<f64>) -> Result<Self> {
        if data.len() != shape.len() {
            return Err(Error::LengthMismatch {
                expected: shape.len(),
                actual: data.len(),
            });
        }
        Ok(Self { shape, data })
    }

    pub fn zeros(shape: Shape) -> Self {
        let data = vec![0.0; shape.len()];
        Self { shape, data }
    }

    pub fn filled(shape: Shape, value: f64) -> Self {
        let data = vec![value; shape.len()];
        Self { shape, data }
    }

    pub fn from_fn(shape: Shape, mut f: impl FnMut(usize) -> f64) -> Self {
        let data = (0..shape.len()).map(&mut f).collect();
        Self { shape, data }
    }

    pub fn shape(&self) -> &Shape {
        &self.shape
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn get(&self, coords: &[usize]) -> Option<f64> {
        self.shape.index(coords).map(|i| self.data[i])
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Volume {
        Volume {
            shape: self.shape.clone(),
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    /// Returns a copy with voxel `index` replaced.
    pub fn with_value(&self, index: usize, value: f64) -> Volume {
        let mut out = self.clone();
        out.data[index] = value;
        out
    }
}

/// A `{0, 1}` foreground mask.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BinaryMask {
    shape: Shape,
    data: Vec<u8>,
}

impl BinaryMask {
    pub fn new(shape: Shape, data: Vec<u8>) -> Result<Self> {
        if data.len() != shape.len() {
            return Err(Error::LengthMismatch {
                expected: shape.len(),
                actual: data.len(),
            });
        }
        if let Some(&bad) = data.iter().find(|&&v| v > 1) {
            return Err(Error::InvalidMaskValue(bad));
        }
        Ok(Self { shape, data })
    }

    pub fn zeros(shape: Shape) -> Self {
        let data = vec![0; shape.len()];
        Self { shape, data }
    }

    pub fn from_indices(shape: Shape, indices: &[usize]) -> Result<Self> {
        let mut data = vec![0u8; shape.len()];
        for &i in indices {
            let len = data.len();
            *data
                .get_mut(i)
                .ok_or(Error::IndexOutOfRange { index: i, len })? = 1;
        }
        Ok(Self { shape, data })
    }

    pub fn shape(&self) -> &Shape {
        &self.shape
    }

    pub fn data(&self) -> &[u8] {
        &self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn is_set(&self, index: usize) -> bool {
        self.data[index] != 0
    }

    pub fn count(&self) -> usize {
        self.data.iter().filter(|&&v| v != 0).count()
    }

    /// Sorted flat indices of foreground voxels.
    pub fn foreground(&self) -> Vec<usize> {
        self.data
            .iter()
            .enumerate()
            .filter_map(|(i, &v)| (v != 0).then_some(i))
            .collect()
    }

    /// Lifts the mask into a `{0.0, 1.0}` volume.
    pub fn to_volume(&self) -> Volume {
        Volume {
            shape: self.shape.clone(),
            data: self.data.iter().map(|&v| f64::from(v)).collect(),
        }
    }

    pub(crate) fn set(&mut self, index: usize, value: bool) {
        self.data[index] = u8::from(value);
    }
}

/// Binarizes `volume` with a strict `> tau` comparison.
pub fn threshold(volume: &Volume, tau: f64) -> Result<BinaryMask> {
    if !(tau > 0.0 && tau < 1.0) {
        return Err(Error::InvalidThreshold(tau));
    }
    Ok(BinaryMask {
        shape: volume.shape.clone(),
        data: volume.data.iter().map(|&v| u8::from(v > tau)).collect(),
    })
}
