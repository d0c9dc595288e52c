//! Brute-force reference implementations.
//!
//! Every function here is written from the definitions alone (flood fills,
//! neighborhood scans, all-pairs distances, hash-set arithmetic) and shares no
//! code with the fast paths in [`crate::volume`] and [`crate::metrics`]. They
//! are quadratic and capped at [`ORACLE_MAX_VOXELS`] (32³); at that size a
//! full case runs in well under a second in release builds.

use std::collections::{BTreeMap, HashSet, VecDeque};

use crate::mask::{BinaryMask, BoundingBox, Geometry};
use crate::metrics::{CaseMetrics, Classification, EvalOptions, LesionScore, MatchMode, PercentileMethod};
use crate::volume::{Component, LesionSet};

pub const ORACLE_MAX_VOXELS: usize = 32 * 32 * 32;

type P = [i64; 3];

fn check_size(g: &Geometry) {
    assert!(
        g.len() <= ORACLE_MAX_VOXELS,
        "oracle grids are capped at {ORACLE_MAX_VOXELS} voxels, got {:?}",
        g.dims
    );
}

fn points(mask: &BinaryMask) -> Vec<P> {
    let [nx, ny, nz] = mask.dims();
    let mut out = Vec::new();
    for z in 0..nz {
        for y in 0..ny {
            for x in 0..nx {
                if mask.get_at([x, y, z]) {
                    out.push([x as i64, y as i64, z as i64]);
                }
            }
        }
    }
    out
}

fn at(mask: &BinaryMask, p: P) -> bool {
    mask.geometry().contains(p) && mask.get_at([p[0] as usize, p[1] as usize, p[2] as usize])
}

fn chebyshev(a: P, b: P) -> i64 {
    (0..3).map(|i| (a[i] - b[i]).abs()).max().unwrap()
}

fn euclid(a: P, b: P, spacing: [f64; 3]) -> f64 {
    let mut s = 0.0;
    for i in 0..3 {
        let d = (a[i] - b[i]) as f64 * spacing[i];
        s += d * d;
    }
    s.sqrt()
}

/// Voxel is set iff some foreground voxel lies within Chebyshev distance 1.
pub fn oracle_dilate(mask: &BinaryMask) -> BinaryMask {
    check_size(mask.geometry());
    let fg = points(mask);
    let g = *mask.geometry();
    let mut out = BinaryMask::empty(g);
    for z in 0..g.dims[2] {
        for y in 0..g.dims[1] {
            for x in 0..g.dims[0] {
                let p = [x as i64, y as i64, z as i64];
                if fg.iter().any(|&q| chebyshev(p, q) <= 1) {
                    out.set_at([x, y, z], true);
                }
            }
        }
    }
    out
}

/// Breadth-first flood fill over 26-neighbors, seeds taken in scan order.
pub fn oracle_components(mask: &BinaryMask) -> LesionSet {
    check_size(mask.geometry());
    let g = *mask.geometry();
    let mut labels = vec![0u32; g.len()];
    let mut components = Vec::new();
    for seed in points(mask) {
        let seed_idx = g.index([seed[0] as usize, seed[1] as usize, seed[2] as usize]);
        if labels[seed_idx] != 0 {
            continue;
        }
        let id = components.len() as u32 + 1;
        let mut voxels = Vec::new();
        let mut queue = VecDeque::from([seed]);
        labels[seed_idx] = id;
        while let Some(p) = queue.pop_front() {
            voxels.push(g.index([p[0] as usize, p[1] as usize, p[2] as usize]));
            for dz in -1..=1 {
                for dy in -1..=1 {
                    for dx in -1..=1 {
                        let q = [p[0] + dx, p[1] + dy, p[2] + dz];
                        if q == p || !at(mask, q) {
                            continue;
                        }
                        let qi = g.index([q[0] as usize, q[1] as usize, q[2] as usize]);
                        if labels[qi] == 0 {
                            labels[qi] = id;
                            queue.push_back(q);
                        }
                    }
                }
            }
        }
        voxels.sort_unstable();
        let mut bbox = BoundingBox::point(g.coords(voxels[0]));
        for &v in &voxels {
            bbox.include(g.coords(v));
        }
        components.push(Component { id, voxels, bbox });
    }
    LesionSet::from_parts(g, labels, components)
}

/// Per-voxel minimum over all source voxels.
pub fn oracle_distance_field(source: &BinaryMask) -> Vec<f64> {
    check_size(source.geometry());
    let g = *source.geometry();
    let src = points(source);
    assert!(!src.is_empty(), "empty source");
    (0..g.len())
        .map(|i| {
            let c = g.coords(i);
            let p = [c[0] as i64, c[1] as i64, c[2] as i64];
            src.iter()
                .map(|&q| euclid(p, q, g.spacing))
                .fold(f64::INFINITY, f64::min)
        })
        .collect()
}

/// Foreground voxels with a face neighbor that is background or off-grid.
pub fn oracle_surface(mask: &BinaryMask) -> Vec<P> {
    const FACES: [P; 6] = [[1, 0, 0], [-1, 0, 0], [0, 1, 0], [0, -1, 0], [0, 0, 1], [0, 0, -1]];
    points(mask)
        .into_iter()
        .filter(|&p| {
            FACES
                .iter()
                .any(|f| !at(mask, [p[0] + f[0], p[1] + f[1], p[2] + f[2]]))
        })
        .collect()
}

pub fn oracle_directed_distances(from: &BinaryMask, to: &BinaryMask) -> Vec<f64> {
    check_size(from.geometry());
    let spacing = from.spacing();
    let target = oracle_surface(to);
    oracle_surface(from)
        .into_iter()
        .map(|p| {
            target
                .iter()
                .map(|&q| euclid(p, q, spacing))
                .fold(f64::INFINITY, f64::min)
        })
        .collect()
}

/// Nineteen-twentieths quantile of the pooled distances.
fn oracle_p95(mut pooled: Vec<f64>, method: PercentileMethod) -> f64 {
    pooled.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = pooled.len();
    match method {
        PercentileMethod::Linear => {
            let num = 19 * (n - 1);
            let (k, r) = (num / 20, num % 20);
            if r == 0 {
                pooled[k]
            } else {
                let w = r as f64 / 20.0;
                (1.0 - w) * pooled[k] + w * pooled[k + 1]
            }
        }
        PercentileMethod::NearestRank => {
            // smallest k with k / n >= 0.95
            let k = (1..=n).find(|&k| 20 * k >= 19 * n).unwrap();
            pooled[k - 1]
        }
    }
}

pub fn oracle_hd95(a: &BinaryMask, b: &BinaryMask, method: PercentileMethod) -> f64 {
    assert!(a.count() > 0 && b.count() > 0, "empty operand");
    let mut pooled = oracle_directed_distances(a, b);
    pooled.extend(oracle_directed_distances(b, a));
    oracle_p95(pooled, method)
}

/// Lesions from dilation + flood fill, keyed by dilated component, holding
/// original voxel coordinates.
fn oracle_lesions(mask: &BinaryMask) -> Vec<HashSet<P>> {
    let grouped = oracle_components(&oracle_dilate(mask));
    let g = *mask.geometry();
    // BTreeMap keyed by first original voxel keeps scan order
    let mut by_group: BTreeMap<u32, (usize, HashSet<P>)> = BTreeMap::new();
    for p in points(mask) {
        let i = g.index([p[0] as usize, p[1] as usize, p[2] as usize]);
        let group = grouped.labels()[i];
        by_group
            .entry(group)
            .or_insert_with(|| (i, HashSet::new()))
            .1
            .insert(p);
    }
    let mut lesions: Vec<(usize, HashSet<P>)> = by_group.into_values().collect();
    lesions.sort_by_key(|(first, _)| *first);
    lesions.into_iter().map(|(_, s)| s).collect()
}

fn grow(set: &HashSet<P>) -> HashSet<P> {
    let mut out = HashSet::new();
    for p in set {
        for dz in -1..=1 {
            for dy in -1..=1 {
                for dx in -1..=1 {
                    out.insert([p[0] + dx, p[1] + dy, p[2] + dz]);
                }
            }
        }
    }
    out
}

fn to_mask(g: Geometry, set: &HashSet<P>) -> BinaryMask {
    BinaryMask::from_coords(g, set.iter().map(|p| [p[0] as usize, p[1] as usize, p[2] as usize]))
}

/// End-to-end case score from oracle primitives and set arithmetic.
/// Returns `None` when no reference lesion survives the size filter.
pub fn oracle_score_case(
    reference: &BinaryMask,
    prediction: &BinaryMask,
    options: &EvalOptions,
) -> Option<CaseMetrics> {
    let g = *reference.geometry();
    check_size(&g);
    let refs: Vec<(u32, HashSet<P>)> = oracle_lesions(reference)
        .into_iter()
        .enumerate()
        .map(|(i, s)| (i as u32 + 1, s))
        .filter(|(_, s)| s.len() >= options.min_lesion_voxels)
        .collect();
    if refs.is_empty() {
        return None;
    }
    let preds: Vec<HashSet<P>> = oracle_lesions(prediction);

    let overlaps = |r: &HashSet<P>, p: &HashSet<P>| match options.match_mode {
        MatchMode::Undilated => r.iter().any(|v| p.contains(v)),
        MatchMode::Dilated => {
            let gp = grow(p);
            grow(r).iter().any(|v| gp.contains(v))
        }
    };

    let diagonal = ((g.dims[0] as f64 * g.spacing[0]).powi(2)
        + (g.dims[1] as f64 * g.spacing[1]).powi(2)
        + (g.dims[2] as f64 * g.spacing[2]).powi(2))
    .sqrt();

    let mut used = vec![false; preds.len()];
    let mut per_lesion = Vec::new();
    for (id, r) in &refs {
        let matched: Vec<usize> = (0..preds.len()).filter(|&j| overlaps(r, &preds[j])).collect();
        for &j in &matched {
            used[j] = true;
        }
        let (classification, dice, hd) = if matched.is_empty() {
            (Classification::FN, 0.0, diagonal)
        } else {
            let union: HashSet<P> = matched.iter().flat_map(|&j| preds[j].iter().copied()).collect();
            let inter = r.intersection(&union).count();
            let dice = 2.0 * inter as f64 / (r.len() + union.len()) as f64;
            let hd = oracle_hd95(&to_mask(g, r), &to_mask(g, &union), options.percentile);
            (Classification::TP, dice, hd)
        };
        per_lesion.push(LesionScore {
            lesion_id: *id,
            classification,
            reference_voxels: r.len(),
            matched_prediction_ids: matched.iter().map(|&j| j as u32 + 1).collect(),
            dice,
            hd95: hd,
        });
    }
    let l = per_lesion.len();
    let tp = per_lesion
        .iter()
        .filter(|s| s.classification == Classification::TP)
        .count();
    Some(CaseMetrics {
        lesionwise_dsc: per_lesion.iter().map(|s| s.dice).sum::<f64>() / l as f64,
        lesionwise_hd95: per_lesion.iter().map(|s| s.hd95).sum::<f64>() / l as f64,
        lesions: l,
        tp,
        fn_: l - tp,
        fp: used.iter().filter(|&&u| !u).count(),
        diagonal_mm: diagonal,
        per_lesion,
    })
}
