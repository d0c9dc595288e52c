//! Synthetic reference/prediction pairs with known lesion outcomes.
//!
//! Lesions are spheres or boxes placed in voxel coordinates. A sphere covers
//! every voxel whose center lies within `radius_mm` of the sphere center in
//! physical space; a box covers `center ± half_extents` inclusive. A lesion
//! may appear in the reference, the prediction, or both, with the prediction
//! copy shifted by `offset` voxels.
//!
//! A lesion's outcome is *forced* when its footprint (reference and
//! prediction copies together) is at Chebyshev distance ≥ 4 from every other
//! footprint: the 3×3×3 dilations then never touch, so no grouping or
//! matching can involve another lesion.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::PhantomError;
use crate::mask::{BinaryMask, Geometry};
use crate::metrics::DEFAULT_MIN_LESION_VOXELS;
use crate::nifti::LabelVolume;

/// Minimum Chebyshev gap between footprints for independent lesions.
pub const SEPARATION: i64 = 4;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "shape", rename_all = "lowercase")]
pub enum Shape {
    Sphere { radius_mm: f64 },
    Box { half_extents: [usize; 3] },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Presence {
    Reference,
    Prediction,
    Both,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LesionSpec {
    #[serde(flatten)]
    pub shape: Shape,
    pub center: [usize; 3],
    pub present_in: Presence,
    #[serde(default)]
    pub offset: [i64; 3],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhantomSpec {
    pub dims: [usize; 3],
    pub spacing: [f64; 3],
    #[serde(default)]
    pub seed: u64,
    pub lesions: Vec<LesionSpec>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Expected {
    TP,
    FN,
    FP,
    /// Reference copy is below the size threshold; a prediction copy, if
    /// any, is then a false positive.
    #[serde(rename = "excluded")]
    Excluded,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestLesion {
    pub index: usize,
    pub present_in: Presence,
    pub reference_voxels: usize,
    pub prediction_voxels: usize,
    pub forced: bool,
    /// Set only when `forced`.
    pub expected: Option<Expected>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ExpectedCounts {
    #[serde(rename = "L")]
    pub lesions: usize,
    #[serde(rename = "TP")]
    pub tp: usize,
    #[serde(rename = "FN")]
    pub fn_: usize,
    #[serde(rename = "FP")]
    pub fp: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub dims: [usize; 3],
    pub spacing: [f64; 3],
    pub seed: u64,
    pub diagonal_mm: f64,
    pub min_lesion_voxels: usize,
    pub match_mode: String,
    pub lesions: Vec<ManifestLesion>,
    /// Case-level counts, present when every lesion is forced.
    pub expected_counts: Option<ExpectedCounts>,
}

#[derive(Debug, Clone)]
pub struct Phantom {
    pub reference: LabelVolume,
    pub prediction: LabelVolume,
    pub manifest: Manifest,
}

impl Phantom {
    pub fn reference_mask(&self) -> BinaryMask {
        self.reference.binarize()
    }

    pub fn prediction_mask(&self) -> BinaryMask {
        self.prediction.binarize()
    }
}

type P = [i64; 3];

fn rasterize(shape: &Shape, center: P, spacing: [f64; 3]) -> Result<Vec<P>, ()> {
    let mut out = Vec::new();
    match *shape {
        Shape::Sphere { radius_mm } => {
            if !(radius_mm > 0.0 && radius_mm.is_finite()) {
                return Err(());
            }
            let reach: Vec<i64> = spacing.iter().map(|s| (radius_mm / s).floor() as i64).collect();
            for dz in -reach[2]..=reach[2] {
                for dy in -reach[1]..=reach[1] {
                    for dx in -reach[0]..=reach[0] {
                        let (px, py, pz) = (
                            dx as f64 * spacing[0],
                            dy as f64 * spacing[1],
                            dz as f64 * spacing[2],
                        );
                        if px * px + py * py + pz * pz <= radius_mm * radius_mm {
                            out.push([center[0] + dx, center[1] + dy, center[2] + dz]);
                        }
                    }
                }
            }
        }
        Shape::Box { half_extents: h } => {
            let h = [h[0] as i64, h[1] as i64, h[2] as i64];
            for dz in -h[2]..=h[2] {
                for dy in -h[1]..=h[1] {
                    for dx in -h[0]..=h[0] {
                        out.push([center[0] + dx, center[1] + dy, center[2] + dz]);
                    }
                }
            }
        }
    }
    Ok(out)
}

struct Placed {
    reference: Vec<P>,
    prediction: Vec<P>,
}

impl Placed {
    fn footprint(&self) -> impl Iterator<Item = &P> {
        self.reference.iter().chain(&self.prediction)
    }
}

fn place(spec: &PhantomSpec) -> Result<Vec<Placed>, PhantomError> {
    let g = Geometry::new(spec.dims, spec.spacing)?;
    spec.lesions
        .iter()
        .enumerate()
        .map(|(index, l)| {
            let c = [l.center[0] as i64, l.center[1] as i64, l.center[2] as i64];
            let base = rasterize(&l.shape, c, spec.spacing).map_err(|_| PhantomError::BadSize { index })?;
            let shifted: Vec<P> = base
                .iter()
                .map(|p| [p[0] + l.offset[0], p[1] + l.offset[1], p[2] + l.offset[2]])
                .collect();
            let (reference, prediction) = match l.present_in {
                Presence::Reference => (base, Vec::new()),
                Presence::Prediction => (Vec::new(), shifted),
                Presence::Both => (base, shifted),
            };
            let placed = Placed {
                reference,
                prediction,
            };
            if placed.footprint().any(|&p| !g.contains(p)) {
                return Err(PhantomError::OutOfBounds { index });
            }
            Ok(placed)
        })
        .collect()
}

fn bounds(a: &[P]) -> (P, P) {
    let mut lo = [i64::MAX; 3];
    let mut hi = [i64::MIN; 3];
    for p in a {
        for i in 0..3 {
            lo[i] = lo[i].min(p[i]);
            hi[i] = hi[i].max(p[i]);
        }
    }
    (lo, hi)
}

/// True when every voxel of `a` is at Chebyshev distance >= SEPARATION from
/// every voxel of `b`.
fn separated(a: &[P], b: &[P]) -> bool {
    if a.is_empty() || b.is_empty() {
        return true;
    }
    let ((alo, ahi), (blo, bhi)) = (bounds(a), bounds(b));
    let box_gap = (0..3)
        .map(|i| (blo[i] - ahi[i]).max(alo[i] - bhi[i]))
        .max()
        .unwrap();
    if box_gap >= SEPARATION {
        return true;
    }
    a.iter().all(|p| {
        b.iter()
            .all(|q| (0..3).map(|i| (p[i] - q[i]).abs()).max().unwrap() >= SEPARATION)
    })
}

fn footprint_vec(p: &Placed) -> Vec<P> {
    p.footprint().copied().collect()
}

pub fn generate(spec: &PhantomSpec) -> Result<Phantom, PhantomError> {
    let g = Geometry::new(spec.dims, spec.spacing)?;
    let placed = place(spec)?;
    let threshold = DEFAULT_MIN_LESION_VOXELS;

    let mut reference = BinaryMask::empty(g);
    let mut prediction = BinaryMask::empty(g);
    let as_idx = |p: &P| [p[0] as usize, p[1] as usize, p[2] as usize];
    for l in &placed {
        for p in &l.reference {
            reference.set_at(as_idx(p), true);
        }
        for p in &l.prediction {
            prediction.set_at(as_idx(p), true);
        }
    }

    let footprints: Vec<Vec<P>> = placed.iter().map(footprint_vec).collect();
    let mut lesions = Vec::with_capacity(placed.len());
    let mut counts = ExpectedCounts::default();
    let mut all_forced = true;
    for (i, l) in placed.iter().enumerate() {
        let forced = (0..placed.len())
            .filter(|&j| j != i)
            .all(|j| separated(&footprints[i], &footprints[j]));
        let ref_n = l.reference.len();
        let pred_n = l.prediction.len();
        let expected = forced.then(|| {
            let overlap = l.reference.iter().any(|p| l.prediction.contains(p));
            match spec.lesions[i].present_in {
                Presence::Prediction => {
                    counts.fp += 1;
                    Expected::FP
                }
                _ if ref_n < threshold => {
                    if pred_n > 0 {
                        counts.fp += 1;
                    }
                    Expected::Excluded
                }
                Presence::Reference => {
                    counts.lesions += 1;
                    counts.fn_ += 1;
                    Expected::FN
                }
                Presence::Both if overlap => {
                    counts.lesions += 1;
                    counts.tp += 1;
                    Expected::TP
                }
                Presence::Both => {
                    counts.lesions += 1;
                    counts.fn_ += 1;
                    counts.fp += 1;
                    Expected::FN
                }
            }
        });
        all_forced &= forced;
        lesions.push(ManifestLesion {
            index: i,
            present_in: spec.lesions[i].present_in,
            reference_voxels: ref_n,
            prediction_voxels: pred_n,
            forced,
            expected,
        });
    }

    Ok(Phantom {
        reference: LabelVolume::from_mask(&reference),
        prediction: LabelVolume::from_mask(&prediction),
        manifest: Manifest {
            dims: spec.dims,
            spacing: spec.spacing,
            seed: spec.seed,
            diagonal_mm: g.diagonal_mm(),
            min_lesion_voxels: threshold,
            match_mode: "undilated".to_string(),
            lesions,
            expected_counts: all_forced.then_some(counts),
        },
    })
}

/// Knobs for [`PhantomSpec::random`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RandomPhantom {
    pub min_dim: usize,
    pub max_dim: usize,
    pub max_lesions: usize,
    /// Probability that a lesion is placed without the separation guarantee.
    pub crowding: f64,
}

impl Default for RandomPhantom {
    fn default() -> Self {
        RandomPhantom {
            min_dim: 14,
            max_dim: 24,
            max_lesions: 4,
            crowding: 0.0,
        }
    }
}

const SPACINGS: [f64; 6] = [0.5, 0.75, 0.9375, 1.0, 1.25, 2.0];

fn random_shape(rng: &mut ChaCha8Rng, spacing: [f64; 3]) -> Shape {
    if rng.gen_bool(0.5) {
        let min_s = spacing.iter().copied().fold(f64::INFINITY, f64::min);
        Shape::Sphere {
            radius_mm: rng.gen_range(1.5..4.0) * min_s,
        }
    } else {
        Shape::Box {
            half_extents: [rng.gen_range(1..=3), rng.gen_range(1..=3), rng.gen_range(1..=3)],
        }
    }
}

impl PhantomSpec {
    /// A seeded random spec; the same seed always yields the same spec.
    pub fn random(seed: u64, cfg: &RandomPhantom) -> PhantomSpec {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let dims = [
            rng.gen_range(cfg.min_dim..=cfg.max_dim),
            rng.gen_range(cfg.min_dim..=cfg.max_dim),
            rng.gen_range(cfg.min_dim..=cfg.max_dim),
        ];
        let spacing = [
            SPACINGS[rng.gen_range(0..SPACINGS.len())],
            SPACINGS[rng.gen_range(0..SPACINGS.len())],
            SPACINGS[rng.gen_range(0..SPACINGS.len())],
        ];
        let wanted = rng.gen_range(1..=cfg.max_lesions.max(1));
        let mut spec = PhantomSpec {
            dims,
            spacing,
            seed,
            lesions: Vec::new(),
        };
        let mut placed_footprints: Vec<Vec<P>> = Vec::new();
        let mut attempts = 0;
        while spec.lesions.len() < wanted && attempts < 200 {
            attempts += 1;
            let shape = random_shape(&mut rng, spacing);
            let present_in = match rng.gen_range(0..10) {
                0..=5 => Presence::Both,
                6 | 7 => Presence::Reference,
                _ => Presence::Prediction,
            };
            let offset = if present_in == Presence::Both && rng.gen_bool(0.5) {
                [rng.gen_range(-2..=2), rng.gen_range(-2..=2), rng.gen_range(-2..=2)]
            } else {
                [0, 0, 0]
            };
            let center = [
                rng.gen_range(0..dims[0]),
                rng.gen_range(0..dims[1]),
                rng.gen_range(0..dims[2]),
            ];
            let candidate = LesionSpec {
                shape,
                center,
                present_in,
                offset,
            };
            let mut trial = spec.clone();
            trial.lesions = vec![candidate.clone()];
            let Ok(mut placed) = place(&trial) else {
                continue;
            };
            let fp = footprint_vec(&placed.pop().unwrap());
            let crowd = rng.gen_bool(cfg.crowding.clamp(0.0, 1.0));
            if !crowd && placed_footprints.iter().any(|o| !separated(o, &fp)) {
                continue;
            }
            placed_footprints.push(fp);
            spec.lesions.push(candidate);
        }
        spec
    }

    /// Copy with `count` extra prediction-only boxes, each at least
    /// [`SEPARATION`] away from every existing footprint. `None` if they do
    /// not fit.
    pub fn with_spurious(&self, count: usize, seed: u64) -> Option<PhantomSpec> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut out = self.clone();
        let mut footprints: Vec<Vec<P>> = place(self).ok()?.iter().map(footprint_vec).collect();
        let mut added = 0;
        let mut attempts = 0;
        while added < count {
            attempts += 1;
            if attempts > 500 {
                return None;
            }
            let h = [rng.gen_range(0..=1), rng.gen_range(0..=1), rng.gen_range(0..=1)];
            let center = [
                rng.gen_range(0..self.dims[0]),
                rng.gen_range(0..self.dims[1]),
                rng.gen_range(0..self.dims[2]),
            ];
            let lesion = LesionSpec {
                shape: Shape::Box { half_extents: h },
                center,
                present_in: Presence::Prediction,
                offset: [0, 0, 0],
            };
            let mut trial = self.clone();
            trial.lesions = vec![lesion.clone()];
            let Ok(mut placed) = place(&trial) else {
                continue;
            };
            let fp = footprint_vec(&placed.pop().unwrap());
            if footprints.iter().any(|o| !separated(o, &fp)) {
                continue;
            }
            footprints.push(fp);
            out.lesions.push(lesion);
            added += 1;
        }
        Some(out)
    }
}
