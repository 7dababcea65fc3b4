//! Dense 3D volumes and the voxel-level operations shared by every pipeline
//! stage.
//!
//! Data is stored x-fastest: the linear index of voxel `(x, y, z)` is
//! `x + nx * (y + ny * z)`. Component labels and file layouts depend on this
//! order, so it is never permuted.

use alloc::collections::VecDeque;
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::stats;

/// Element types that may be stored in a [`Grid`].
pub trait Voxel: Copy + PartialEq {
    fn is_valid(&self) -> bool {
        true
    }
}

impl Voxel for f64 {
    fn is_valid(&self) -> bool {
        self.is_finite()
    }
}

impl Voxel for bool {}
impl Voxel for u8 {}

/// A dense `nx * ny * nz` grid with physical voxel spacing in millimetres.
#[derive(Clone, Debug, PartialEq)]
pub struct Grid<T> {
    dims: [usize; 3],
    spacing: [f64; 3],
    data: Vec<T>,
}

/// Scalar volume (probabilities, flip-probabilities, intensities, scores).
pub type Volume3D = Grid<f64>;
/// Binary region mask.
pub type Mask3D = Grid<bool>;
/// Integer label map, e.g. BraTS labels `{0, 1, 2, 4}`.
pub type LabelMap = Grid<u8>;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Axis {
    X,
    Y,
    Z,
}

impl Axis {
    pub const ALL: [Axis; 3] = [Axis::X, Axis::Y, Axis::Z];

    pub fn index(self) -> usize {
        match self {
            Axis::X => 0,
            Axis::Y => 1,
            Axis::Z => 2,
        }
    }
}

/// Neighbourhood used to decide whether two foreground voxels touch.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Connectivity {
    /// Shared face.
    Face6,
    /// Shared face or edge.
    Edge18,
    /// Shared face, edge or corner.
    #[default]
    Corner26,
}

impl Connectivity {
    /// Neighbour offsets, in a fixed order.
    pub fn offsets(self) -> Vec<[isize; 3]> {
        let max_nonzero = match self {
            Connectivity::Face6 => 1,
            Connectivity::Edge18 => 2,
            Connectivity::Corner26 => 3,
        };
        let mut out = Vec::with_capacity(26);
        for dz in -1isize..=1 {
            for dy in -1isize..=1 {
                for dx in -1isize..=1 {
                    let nonzero = (dx != 0) as usize + (dy != 0) as usize + (dz != 0) as usize;
                    if nonzero >= 1 && nonzero <= max_nonzero {
                        out.push([dx, dy, dz]);
                    }
                }
            }
        }
        out
    }
}

fn validate_geometry(dims: [usize; 3], spacing: [f64; 3]) -> Result<usize> {
    if dims.contains(&0) {
        return Err(Error::InvalidDims(dims));
    }
    if spacing.iter().any(|s| !s.is_finite() || *s <= 0.0) {
        return Err(Error::InvalidSpacing(spacing));
    }
    dims[0]
        .checked_mul(dims[1])
        .and_then(|v| v.checked_mul(dims[2]))
        .ok_or(Error::InvalidDims(dims))
}

impl<T: Voxel> Grid<T> {
    /// Unit-spacing grid.
    pub fn new(dims: [usize; 3], data: Vec<T>) -> Result<Self> {
        Self::from_parts(dims, [1.0; 3], data)
    }

    pub fn from_parts(dims: [usize; 3], spacing: [f64; 3], data: Vec<T>) -> Result<Self> {
        let n = validate_geometry(dims, spacing)?;
        if data.len() != n {
            return Err(Error::LengthMismatch {
                dims,
                len: data.len(),
            });
        }
        if let Some(i) = data.iter().position(|v| !v.is_valid()) {
            return Err(Error::NonFinite(i));
        }
        Ok(Self {
            dims,
            spacing,
            data,
        })
    }

    pub fn filled(dims: [usize; 3], value: T) -> Result<Self> {
        let n = validate_geometry(dims, [1.0; 3])?;
        Self::new(dims, vec![value; n])
    }

    /// Caller guarantees the invariants (length, validity).
    pub(crate) fn from_raw(dims: [usize; 3], spacing: [f64; 3], data: Vec<T>) -> Self {
        debug_assert_eq!(data.len(), dims[0] * dims[1] * dims[2]);
        Self {
            dims,
            spacing,
            data,
        }
    }

    pub fn with_spacing(mut self, spacing: [f64; 3]) -> Result<Self> {
        validate_geometry(self.dims, spacing)?;
        self.spacing = spacing;
        Ok(self)
    }

    pub fn dims(&self) -> [usize; 3] {
        self.dims
    }

    pub fn spacing(&self) -> [f64; 3] {
        self.spacing
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn into_data(self) -> Vec<T> {
        self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    /// Always false: dims are positive.
    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    #[inline]
    pub fn index(&self, x: usize, y: usize, z: usize) -> usize {
        x + self.dims[0] * (y + self.dims[1] * z)
    }

    #[inline]
    pub fn coords(&self, i: usize) -> [usize; 3] {
        let [nx, ny, _] = self.dims;
        [i % nx, (i / nx) % ny, i / (nx * ny)]
    }

    pub fn get(&self, x: usize, y: usize, z: usize) -> T {
        self.data[self.index(x, y, z)]
    }

    /// Same grid geometry, new contents. Fails if `f` produces an invalid
    /// value (non-finite for `f64`).
    pub fn map<U: Voxel>(&self, f: impl Fn(T) -> U) -> Result<Grid<U>> {
        let data: Vec<U> = self.data.iter().map(|&v| f(v)).collect();
        if let Some(i) = data.iter().position(|v| !v.is_valid()) {
            return Err(Error::NonFinite(i));
        }
        Ok(Grid::from_raw(self.dims, self.spacing, data))
    }

    pub fn ensure_same_dims<U>(&self, other: &Grid<U>) -> Result<()> {
        if self.dims != other.dims {
            return Err(Error::DimensionMismatch {
                left: self.dims,
                right: other.dims,
            });
        }
        Ok(())
    }

    /// Mirror the data along `axis`. Applying the same flip twice restores
    /// the input exactly.
    pub fn flip(&self, axis: Axis) -> Self {
        let [nx, ny, nz] = self.dims;
        let mut out = Vec::with_capacity(self.data.len());
        for z in 0..nz {
            for y in 0..ny {
                for x in 0..nx {
                    let (sx, sy, sz) = match axis {
                        Axis::X => (nx - 1 - x, y, z),
                        Axis::Y => (x, ny - 1 - y, z),
                        Axis::Z => (x, y, nz - 1 - z),
                    };
                    out.push(self.data[self.index(sx, sy, sz)]);
                }
            }
        }
        Self::from_raw(self.dims, self.spacing, out)
    }
}

impl Mask3D {
    pub fn empty_like<U>(other: &Grid<U>) -> Self {
        Self::from_raw(other.dims, other.spacing, vec![false; other.data.len()])
    }

    pub fn count(&self) -> usize {
        self.data.iter().filter(|&&b| b).count()
    }

    pub fn any(&self) -> bool {
        self.data.iter().any(|&b| b)
    }

    pub fn and(&self, other: &Mask3D) -> Result<Mask3D> {
        self.ensure_same_dims(other)?;
        let data = self.data.iter().zip(&other.data).map(|(&a, &b)| a && b).collect();
        Ok(Self::from_raw(self.dims, self.spacing, data))
    }

    pub fn is_subset_of(&self, other: &Mask3D) -> bool {
        self.dims == other.dims && self.data.iter().zip(&other.data).all(|(&a, &b)| !a || b)
    }
}

/// Result of [`standardize_nonzero`].
#[derive(Clone, Debug, PartialEq)]
pub struct Standardized {
    pub volume: Volume3D,
    pub mean: f64,
    pub std_dev: f64,
    /// Nonzero voxels had zero spread and were all mapped to 0.
    pub degenerate: bool,
}

/// Standardize the nonzero voxels of `v` to zero mean and unit population
/// standard deviation. Zero voxels are background and stay 0.
pub fn standardize_nonzero(v: &Volume3D) -> Result<Standardized> {
    let values: Vec<f64> = v.data.iter().copied().filter(|&x| x != 0.0).collect();
    if values.is_empty() {
        return Err(Error::NoForeground);
    }
    let mean = stats::mean(&values);
    let std_dev = stats::population_std(&values, mean);
    let degenerate = std_dev <= 0.0;
    let data = v
        .data
        .iter()
        .map(|&x| {
            if x == 0.0 || degenerate {
                0.0
            } else {
                (x - mean) / std_dev
            }
        })
        .collect();
    Ok(Standardized {
        volume: Volume3D::from_raw(v.dims, v.spacing, data),
        mean,
        std_dev,
        degenerate,
    })
}

/// Connected-component labeling of a mask.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ComponentLabeling {
    dims: [usize; 3],
    /// 0 is background, components are `1..=count`.
    pub labels: Vec<u32>,
    /// `sizes[k - 1]` is the voxel count of label `k`.
    pub sizes: Vec<usize>,
}

impl ComponentLabeling {
    pub fn dims(&self) -> [usize; 3] {
        self.dims
    }

    pub fn component_count(&self) -> usize {
        self.sizes.len()
    }

    pub fn size_of(&self, label: u32) -> Option<usize> {
        (label as usize).checked_sub(1).and_then(|k| self.sizes.get(k)).copied()
    }
}

/// Label the maximal connected foreground sets of `m`. Labels are assigned in
/// linear scan order: the component containing the first foreground voxel
/// gets label 1, and so on.
pub fn connected_components(m: &Mask3D, connectivity: Connectivity) -> ComponentLabeling {
    let [nx, ny, nz] = m.dims;
    let offsets = connectivity.offsets();
    let mut labels = vec![0u32; m.data.len()];
    let mut sizes = Vec::new();
    let mut queue = VecDeque::new();

    for start in 0..m.data.len() {
        if !m.data[start] || labels[start] != 0 {
            continue;
        }
        let label = sizes.len() as u32 + 1;
        labels[start] = label;
        queue.push_back(start);
        let mut size = 0usize;
        while let Some(i) = queue.pop_front() {
            size += 1;
            let [x, y, z] = m.coords(i);
            for d in &offsets {
                let (xx, yy, zz) = (x as isize + d[0], y as isize + d[1], z as isize + d[2]);
                if xx < 0 || yy < 0 || zz < 0 {
                    continue;
                }
                let (xx, yy, zz) = (xx as usize, yy as usize, zz as usize);
                if xx >= nx || yy >= ny || zz >= nz {
                    continue;
                }
                let j = m.index(xx, yy, zz);
                if m.data[j] && labels[j] == 0 {
                    labels[j] = label;
                    queue.push_back(j);
                }
            }
        }
        sizes.push(size);
    }

    ComponentLabeling {
        dims: m.dims,
        labels,
        sizes,
    }
}

/// Delete every component with fewer than `min_size` voxels.
pub fn remove_small_components(m: &Mask3D, min_size: usize, connectivity: Connectivity) -> Mask3D {
    if min_size <= 1 {
        return m.clone();
    }
    let cc = connected_components(m, connectivity);
    let data = cc
        .labels
        .iter()
        .map(|&l| l != 0 && cc.sizes[l as usize - 1] >= min_size)
        .collect();
    Mask3D::from_raw(m.dims, m.spacing, data)
}
