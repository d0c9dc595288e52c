//! Exact Euclidean distance transform on anisotropic grids and the surface
//! distances built on it.
//!
//! The transform is the separable lower-envelope method: squared distances
//! are propagated one axis at a time, each 1D pass computing the lower
//! envelope of parabolas rooted at the sample positions `q * spacing`.
//! Coordinates are voxel centers (`index * spacing`).

use crate::error::VolumeError;
use crate::mask::{BinaryMask, Geometry};
use crate::volume::morphology::surface_mask;

/// Distance in mm from every voxel to the nearest source voxel.
#[derive(Debug, Clone, PartialEq)]
pub struct DistanceField {
    geometry: Geometry,
    values: Vec<f64>,
}

impl DistanceField {
    pub fn geometry(&self) -> &Geometry {
        &self.geometry
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn get(&self, index: usize) -> f64 {
        self.values[index]
    }

    pub fn get_at(&self, c: [usize; 3]) -> f64 {
        self.values[self.geometry.index(c)]
    }
}

/// Scratch buffers for one 1D pass, reused across lines.
struct Envelope {
    f: Vec<f64>,
    out: Vec<f64>,
    roots: Vec<usize>,
    bounds: Vec<f64>,
}

impl Envelope {
    fn new(n: usize) -> Self {
        Envelope {
            f: vec![0.0; n],
            out: vec![0.0; n],
            roots: vec![0; n],
            bounds: vec![0.0; n + 1],
        }
    }

    /// `out[q] = min_p (x_q - x_p)^2 + f[p]` with `x_q = q * h`. Infinite
    /// entries of `f` contribute no parabola.
    fn run(&mut self, n: usize, h: f64) {
        let f = &self.f[..n];
        let Some(first) = f.iter().position(|v| v.is_finite()) else {
            self.out[..n].fill(f64::INFINITY);
            return;
        };
        let pos = |q: usize| q as f64 * h;
        let meet = |p: usize, q: usize| {
            let (xp, xq) = (pos(p), pos(q));
            ((f[q] + xq * xq) - (f[p] + xp * xp)) / (2.0 * (xq - xp))
        };

        let mut k = 0usize;
        self.roots[0] = first;
        self.bounds[0] = f64::NEG_INFINITY;
        self.bounds[1] = f64::INFINITY;
        for q in first + 1..n {
            if !f[q].is_finite() {
                continue;
            }
            let mut s = meet(self.roots[k], q);
            while s <= self.bounds[k] {
                k -= 1;
                s = meet(self.roots[k], q);
            }
            k += 1;
            self.roots[k] = q;
            self.bounds[k] = s;
            self.bounds[k + 1] = f64::INFINITY;
        }

        k = 0;
        for q in 0..n {
            let x = pos(q);
            while self.bounds[k + 1] < x {
                k += 1;
            }
            let p = self.roots[k];
            let d = x - pos(p);
            self.out[q] = d * d + f[p];
        }
    }
}

/// Squared distances (mm²) to the nearest source voxel; infinite everywhere
/// when the source is empty.
fn squared_distance_transform(source: &BinaryMask) -> Vec<f64> {
    let g = *source.geometry();
    let mut sq: Vec<f64> = source
        .bits()
        .iter()
        .map(|&b| if b { 0.0 } else { f64::INFINITY })
        .collect();

    let [nx, ny, nz] = g.dims;
    let strides = [1, nx, nx * ny];
    let mut env = Envelope::new(*g.dims.iter().max().unwrap());
    for axis in 0..3 {
        let n = g.dims[axis];
        if n == 1 {
            continue;
        }
        let stride = strides[axis];
        let h = g.spacing[axis];
        // line starts: every voxel whose coordinate along `axis` is 0
        let other: Vec<usize> = (0..3).filter(|&a| a != axis).collect();
        for j in 0..g.dims[other[1]] {
            for i in 0..g.dims[other[0]] {
                let start = i * strides[other[0]] + j * strides[other[1]];
                for q in 0..n {
                    env.f[q] = sq[start + q * stride];
                }
                env.run(n, h);
                for q in 0..n {
                    sq[start + q * stride] = env.out[q];
                }
            }
        }
    }
    debug_assert_eq!(sq.len(), nx * ny * nz);
    sq
}

pub fn distance_field(source: &BinaryMask) -> Result<DistanceField, VolumeError> {
    if source.is_blank() {
        return Err(VolumeError::EmptySource);
    }
    let values = squared_distance_transform(source)
        .into_iter()
        .map(f64::sqrt)
        .collect();
    Ok(DistanceField {
        geometry: *source.geometry(),
        values,
    })
}

/// Surface-to-surface distances in both directions, `(a→b, b→a)`.
///
/// Both masks are cropped to their joint bounding box grown by one voxel,
/// which leaves every surface test and every nearest-surface distance
/// unchanged while keeping the transforms small for localized lesions.
pub(crate) fn surface_distances_both(
    a: &BinaryMask,
    b: &BinaryMask,
) -> Result<(Vec<f64>, Vec<f64>), VolumeError> {
    a.geometry().check_compatible(b.geometry())?;
    let (Some(ba), Some(bb)) = (a.bounding_box(), b.bounding_box()) else {
        return Err(VolumeError::EmptyOperand);
    };
    let window = ba.union(&bb).padded(1, a.dims());
    let sa = surface_mask(&a.crop(&window));
    let sb = surface_mask(&b.crop(&window));
    let to_b = distance_field(&sb)?;
    let to_a = distance_field(&sa)?;
    let ab = sa.foreground().map(|i| to_b.get(i)).collect();
    let ba = sb.foreground().map(|i| to_a.get(i)).collect();
    Ok((ab, ba))
}

/// For every surface voxel of `from` (in scan order), the distance in mm to
/// the nearest surface voxel of `to`.
pub fn directed_surface_distances(
    from: &BinaryMask,
    to: &BinaryMask,
) -> Result<Vec<f64>, VolumeError> {
    from.geometry().check_compatible(to.geometry())?;
    let (Some(bf), Some(bt)) = (from.bounding_box(), to.bounding_box()) else {
        return Err(VolumeError::EmptyOperand);
    };
    let window = bf.union(&bt).padded(1, from.dims());
    let sf = surface_mask(&from.crop(&window));
    let st = surface_mask(&to.crop(&window));
    let field = distance_field(&st)?;
    Ok(sf.foreground().map(|i| field.get(i)).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn three_four_five() {
        let g = Geometry::isotropic([8, 8, 2]);
        let m = BinaryMask::from_coords(g, [[0, 0, 0]]);
        let f = distance_field(&m).unwrap();
        assert_eq!(f.get_at([3, 4, 0]), 5.0);
        assert_eq!(f.get_at([0, 0, 0]), 0.0);
    }

    #[test]
    fn anisotropic_offset() {
        let g = Geometry::new([8, 8, 2], [2.0, 1.0, 1.0]).unwrap();
        let m = BinaryMask::from_coords(g, [[0, 0, 0]]);
        let f = distance_field(&m).unwrap();
        assert!((f.get_at([3, 4, 0]) - 52f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn empty_source_is_an_error() {
        let m = BinaryMask::empty(Geometry::isotropic([3, 3, 3]));
        assert_eq!(distance_field(&m), Err(VolumeError::EmptySource));
    }

    #[test]
    fn identical_masks_have_zero_distances() {
        let g = Geometry::isotropic([6, 6, 6]);
        let m = BinaryMask::from_coords(g, [[1, 1, 1], [2, 1, 1], [2, 2, 1], [3, 3, 3]]);
        let d = directed_surface_distances(&m, &m).unwrap();
        assert_eq!(d.len(), 4);
        assert!(d.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn two_voxels_three_apart() {
        let g = Geometry::isotropic([8, 3, 3]);
        let a = BinaryMask::from_coords(g, [[1, 1, 1]]);
        let b = BinaryMask::from_coords(g, [[4, 1, 1]]);
        assert_eq!(directed_surface_distances(&a, &b).unwrap(), vec![3.0]);
    }

    #[test]
    fn empty_operand_is_an_error() {
        let g = Geometry::isotropic([3, 3, 3]);
        let a = BinaryMask::from_coords(g, [[1, 1, 1]]);
        let e = BinaryMask::empty(g);
        assert_eq!(
            directed_surface_distances(&a, &e),
            Err(VolumeError::EmptyOperand)
        );
        assert_eq!(
            directed_surface_distances(&e, &a),
            Err(VolumeError::EmptyOperand)
        );
    }
}
