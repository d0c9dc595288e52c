//! Voxel-grid geometry and binary masks.
//!
//! Voxels are stored x-fastest (the on-disk NIfTI order): the linear index of
//! `(x, y, z)` is `x + nx * (y + ny * z)`.

use serde::{Deserialize, Serialize};

use crate::error::GeometryError;

/// Relative tolerance used when comparing the spacing of two grids.
pub const SPACING_RTOL: f64 = 1e-3;

/// Grid dimensions (voxels per axis) and physical spacing (mm per voxel).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Geometry {
    pub dims: [usize; 3],
    pub spacing: [f64; 3],
}

impl Geometry {
    pub fn new(dims: [usize; 3], spacing: [f64; 3]) -> Result<Self, GeometryError> {
        for (axis, &d) in dims.iter().enumerate() {
            if d == 0 {
                return Err(GeometryError::ZeroDim { axis });
            }
        }
        for (axis, &s) in spacing.iter().enumerate() {
            if !(s.is_finite() && s > 0.0) {
                return Err(GeometryError::BadSpacing { axis, value: s });
            }
        }
        Ok(Geometry { dims, spacing })
    }

    /// Unit-spacing geometry. Panics on a zero dimension.
    pub fn isotropic(dims: [usize; 3]) -> Self {
        Geometry::new(dims, [1.0; 3]).expect("valid dims")
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.dims[0] * self.dims[1] * self.dims[2]
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    #[inline]
    pub fn index(&self, [x, y, z]: [usize; 3]) -> usize {
        x + self.dims[0] * (y + self.dims[1] * z)
    }

    #[inline]
    pub fn coords(&self, index: usize) -> [usize; 3] {
        let x = index % self.dims[0];
        let rest = index / self.dims[0];
        [x, rest % self.dims[1], rest / self.dims[1]]
    }

    #[inline]
    pub fn contains(&self, p: [i64; 3]) -> bool {
        (0..3).all(|a| p[a] >= 0 && (p[a] as usize) < self.dims[a])
    }

    /// Physical extent of the grid diagonal in mm.
    pub fn diagonal_mm(&self) -> f64 {
        (0..3)
            .map(|a| {
                let extent = self.dims[a] as f64 * self.spacing[a];
                extent * extent
            })
            .sum::<f64>()
            .sqrt()
    }

    /// Dims must agree exactly and spacing within [`SPACING_RTOL`].
    pub fn check_compatible(&self, other: &Geometry) -> Result<(), GeometryError> {
        if self.dims != other.dims {
            return Err(GeometryError::DimsMismatch {
                left: self.dims,
                right: other.dims,
            });
        }
        for axis in 0..3 {
            let (a, b) = (self.spacing[axis], other.spacing[axis]);
            if (a - b).abs() > SPACING_RTOL * a.abs().max(b.abs()) {
                return Err(GeometryError::SpacingMismatch {
                    left: self.spacing,
                    right: other.spacing,
                });
            }
        }
        Ok(())
    }
}

/// Inclusive axis-aligned box in voxel coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BoundingBox {
    pub min: [usize; 3],
    pub max: [usize; 3],
}

impl BoundingBox {
    pub fn point(p: [usize; 3]) -> Self {
        BoundingBox { min: p, max: p }
    }

    pub fn include(&mut self, p: [usize; 3]) {
        for a in 0..3 {
            self.min[a] = self.min[a].min(p[a]);
            self.max[a] = self.max[a].max(p[a]);
        }
    }

    pub fn union(&self, other: &BoundingBox) -> BoundingBox {
        let mut out = *self;
        out.include(other.min);
        out.include(other.max);
        out
    }

    /// Grow by `margin` voxels on every side, clipped to the grid.
    pub fn padded(&self, margin: usize, dims: [usize; 3]) -> BoundingBox {
        let mut out = *self;
        for a in 0..3 {
            out.min[a] = self.min[a].saturating_sub(margin);
            out.max[a] = (self.max[a] + margin).min(dims[a] - 1);
        }
        out
    }

    pub fn extent(&self) -> [usize; 3] {
        [
            self.max[0] - self.min[0] + 1,
            self.max[1] - self.min[1] + 1,
            self.max[2] - self.min[2] + 1,
        ]
    }
}

/// One boolean per voxel: `true` is foreground.
#[derive(Debug, Clone, PartialEq)]
pub struct BinaryMask {
    geometry: Geometry,
    bits: Vec<bool>,
}

impl BinaryMask {
    pub fn empty(geometry: Geometry) -> Self {
        BinaryMask {
            geometry,
            bits: vec![false; geometry.len()],
        }
    }

    pub fn from_bits(geometry: Geometry, bits: Vec<bool>) -> Result<Self, GeometryError> {
        if bits.len() != geometry.len() {
            return Err(GeometryError::LengthMismatch {
                expected: geometry.len(),
                actual: bits.len(),
            });
        }
        Ok(BinaryMask { geometry, bits })
    }

    /// Mask with exactly the listed linear indices set.
    pub fn from_indices(geometry: Geometry, indices: impl IntoIterator<Item = usize>) -> Self {
        let mut mask = BinaryMask::empty(geometry);
        for i in indices {
            mask.bits[i] = true;
        }
        mask
    }

    pub fn from_coords(geometry: Geometry, coords: impl IntoIterator<Item = [usize; 3]>) -> Self {
        let mut mask = BinaryMask::empty(geometry);
        for c in coords {
            let i = geometry.index(c);
            mask.bits[i] = true;
        }
        mask
    }

    #[inline]
    pub fn geometry(&self) -> &Geometry {
        &self.geometry
    }

    #[inline]
    pub fn dims(&self) -> [usize; 3] {
        self.geometry.dims
    }

    #[inline]
    pub fn spacing(&self) -> [f64; 3] {
        self.geometry.spacing
    }

    #[inline]
    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    #[inline]
    pub fn get(&self, index: usize) -> bool {
        self.bits[index]
    }

    #[inline]
    pub fn get_at(&self, c: [usize; 3]) -> bool {
        self.bits[self.geometry.index(c)]
    }

    pub fn set(&mut self, index: usize, value: bool) {
        self.bits[index] = value;
    }

    pub fn set_at(&mut self, c: [usize; 3], value: bool) {
        let i = self.geometry.index(c);
        self.bits[i] = value;
    }

    pub fn count(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    pub fn is_blank(&self) -> bool {
        !self.bits.iter().any(|&b| b)
    }

    /// Linear indices of foreground voxels in ascending order.
    pub fn foreground(&self) -> impl Iterator<Item = usize> + '_ {
        self.bits
            .iter()
            .enumerate()
            .filter_map(|(i, &b)| b.then_some(i))
    }

    pub fn bounding_box(&self) -> Option<BoundingBox> {
        let mut it = self.foreground();
        let first = it.next()?;
        let mut bbox = BoundingBox::point(self.geometry.coords(first));
        for i in it {
            bbox.include(self.geometry.coords(i));
        }
        Some(bbox)
    }

    pub fn union_with(&mut self, other: &BinaryMask) {
        for (a, &b) in self.bits.iter_mut().zip(&other.bits) {
            *a |= b;
        }
    }

    pub fn intersection_count(&self, other: &BinaryMask) -> usize {
        self.bits
            .iter()
            .zip(&other.bits)
            .filter(|(&a, &b)| a && b)
            .count()
    }

    /// True when every foreground voxel of `self` is foreground in `other`.
    pub fn is_subset_of(&self, other: &BinaryMask) -> bool {
        self.bits.iter().zip(&other.bits).all(|(&a, &b)| !a || b)
    }

    /// Copy of the sub-grid covered by `bbox`. Spacing is kept.
    pub fn crop(&self, bbox: &BoundingBox) -> BinaryMask {
        let extent = bbox.extent();
        let geometry = Geometry {
            dims: extent,
            spacing: self.geometry.spacing,
        };
        let mut bits = Vec::with_capacity(geometry.len());
        for z in bbox.min[2]..=bbox.max[2] {
            for y in bbox.min[1]..=bbox.max[1] {
                let row = self.geometry.index([bbox.min[0], y, z]);
                bits.extend_from_slice(&self.bits[row..row + extent[0]]);
            }
        }
        BinaryMask { geometry, bits }
    }
}
