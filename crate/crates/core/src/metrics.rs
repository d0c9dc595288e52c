//! Case-level lesion-wise scoring.
//!
//! A case is scored per retained reference lesion: matched lesions get the
//! Dice and 95th-percentile surface distance between the reference lesion and
//! the union of every predicted lesion touching it; missed lesions get Dice 0
//! and the physical image diagonal. Both aggregates are plain means over the
//! retained reference lesions, so unmatched predicted lesions never move the
//! score.
//!
//! Lesions are grouped on a once-dilated mask, but every count, overlap test
//! and metric uses the original (undilated) voxels.

use std::collections::BTreeSet;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::MetricError;
use crate::mask::{BinaryMask, BoundingBox, Geometry};
use crate::volume::{self, Component, LesionSet};

/// Reference lesions below this many voxels are not evaluated.
pub const DEFAULT_MIN_LESION_VOXELS: usize = 50;
/// The Hausdorff percentile, in percent.
pub const HD_PERCENTILE: u32 = 95;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
pub enum PercentileMethod {
    /// Linear interpolation between order statistics at `p * (n - 1)`.
    #[default]
    #[serde(rename = "interp")]
    Linear,
    /// The `ceil(p * n)`-th smallest value.
    #[serde(rename = "nearest")]
    NearestRank,
}

impl PercentileMethod {
    pub fn as_str(self) -> &'static str {
        match self {
            PercentileMethod::Linear => "interp",
            PercentileMethod::NearestRank => "nearest",
        }
    }
}

/// Which voxels the reference/prediction overlap test looks at.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
pub enum MatchMode {
    #[default]
    #[serde(rename = "undilated")]
    Undilated,
    #[serde(rename = "dilated")]
    Dilated,
}

impl MatchMode {
    pub fn as_str(self) -> &'static str {
        match self {
            MatchMode::Undilated => "undilated",
            MatchMode::Dilated => "dilated",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct EvalOptions {
    pub min_lesion_voxels: usize,
    pub percentile: PercentileMethod,
    pub match_mode: MatchMode,
}

impl Default for EvalOptions {
    fn default() -> Self {
        EvalOptions {
            min_lesion_voxels: DEFAULT_MIN_LESION_VOXELS,
            percentile: PercentileMethod::Linear,
            match_mode: MatchMode::Undilated,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Classification {
    TP,
    FN,
}

pub fn dice(a: &BinaryMask, b: &BinaryMask) -> Result<f64, MetricError> {
    a.geometry().check_compatible(b.geometry())?;
    let (na, nb) = (a.count(), b.count());
    if na + nb == 0 {
        return Err(MetricError::EmptyDice);
    }
    Ok(dice_from_counts(a.intersection_count(b), na, nb))
}

fn dice_from_counts(overlap: usize, na: usize, nb: usize) -> f64 {
    2.0 * overlap as f64 / (na + nb) as f64
}

/// `percent`-th percentile of `values`, which are sorted in place.
pub fn percentile(values: &mut [f64], percent: u32, method: PercentileMethod) -> f64 {
    assert!(!values.is_empty(), "percentile of an empty sample");
    assert!(percent <= 100);
    values.sort_by(f64::total_cmp);
    let n = values.len();
    match method {
        PercentileMethod::Linear => {
            let scaled = percent as usize * (n - 1);
            let lo = scaled / 100;
            let frac = (scaled % 100) as f64 / 100.0;
            if frac == 0.0 {
                values[lo]
            } else {
                values[lo] + frac * (values[lo + 1] - values[lo])
            }
        }
        PercentileMethod::NearestRank => {
            let rank = (percent as usize * n).div_ceil(100).max(1);
            values[rank - 1]
        }
    }
}

/// 95th percentile of the pooled surface distances in both directions.
pub fn hd95(a: &BinaryMask, b: &BinaryMask) -> Result<f64, MetricError> {
    hd95_with(a, b, PercentileMethod::Linear)
}

pub fn hd95_with(a: &BinaryMask, b: &BinaryMask, method: PercentileMethod) -> Result<f64, MetricError> {
    a.geometry().check_compatible(b.geometry())?;
    if a.is_blank() || b.is_blank() {
        return Err(MetricError::EmptyHd95);
    }
    let (mut ab, ba) = volume::surface_distances_both(a, b).map_err(|_| MetricError::EmptyHd95)?;
    ab.extend(ba);
    Ok(percentile(&mut ab, HD_PERCENTILE, method))
}

pub fn image_diagonal(geometry: &Geometry) -> f64 {
    geometry.diagonal_mm()
}

/// Distinct lesions: components of the once-dilated mask, restricted back to
/// the original voxels. Ids follow first encounter of an original voxel in
/// scan order.
pub fn identify_lesions(mask: &BinaryMask) -> LesionSet {
    let g = *mask.geometry();
    let grouped = volume::connected_components(&volume::dilate_once(mask));
    let dilated_labels = grouped.labels();

    let mut renumber = vec![0u32; grouped.len() + 1];
    let mut labels = vec![0u32; g.len()];
    let mut components: Vec<Component> = Vec::new();
    for i in mask.foreground() {
        let d = dilated_labels[i] as usize;
        if renumber[d] == 0 {
            components.push(Component {
                id: components.len() as u32 + 1,
                voxels: Vec::new(),
                bbox: BoundingBox::point(g.coords(i)),
            });
            renumber[d] = components.len() as u32;
        }
        let id = renumber[d];
        labels[i] = id;
        let c = &mut components[id as usize - 1];
        c.voxels.push(i);
        c.bbox.include(g.coords(i));
    }
    LesionSet::from_parts(g, labels, components)
}

/// Drop reference lesions with fewer than `threshold` voxels.
pub fn filter_small_reference_lesions(lesions: &LesionSet, threshold: usize) -> LesionSet {
    lesions.retain(|c| c.voxel_count() >= threshold)
}

#[derive(Debug, Clone, PartialEq)]
pub struct LesionPairing {
    pub reference_id: u32,
    pub matched_prediction_ids: Vec<u32>,
    pub classification: Classification,
}

impl LesionPairing {
    /// The reference lesion's mask and the union of its matched predicted
    /// lesions (empty for a miss).
    pub fn masks(&self, reference: &LesionSet, prediction: &LesionSet) -> (BinaryMask, BinaryMask) {
        let g = *reference.geometry();
        let r = reference
            .component_mask(self.reference_id)
            .unwrap_or_else(|| BinaryMask::empty(g));
        let p = BinaryMask::from_indices(
            g,
            self.matched_prediction_ids
                .iter()
                .filter_map(|&id| prediction.get(id))
                .flat_map(|c| c.voxels.iter().copied()),
        );
        (r, p)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MatchResult {
    pub pairings: Vec<LesionPairing>,
    pub false_positive_ids: Vec<u32>,
}

impl MatchResult {
    /// Number of evaluated reference lesions.
    pub fn lesion_count(&self) -> usize {
        self.pairings.len()
    }

    pub fn true_positives(&self) -> usize {
        self.pairings
            .iter()
            .filter(|p| p.classification == Classification::TP)
            .count()
    }

    pub fn false_negatives(&self) -> usize {
        self.lesion_count() - self.true_positives()
    }

    pub fn false_positives(&self) -> usize {
        self.false_positive_ids.len()
    }
}

/// Per-voxel lesion id over each lesion's 3×3×3 neighborhood. Lesions of one
/// set never share a dilated voxel, so the map is well defined.
fn dilated_label_map(set: &LesionSet) -> Vec<u32> {
    let g = *set.geometry();
    let mut out = vec![0u32; g.len()];
    for c in set.components() {
        for &v in &c.voxels {
            let [x, y, z] = g.coords(v);
            for nz in z.saturating_sub(1)..=(z + 1).min(g.dims[2] - 1) {
                for ny in y.saturating_sub(1)..=(y + 1).min(g.dims[1] - 1) {
                    for nx in x.saturating_sub(1)..=(x + 1).min(g.dims[0] - 1) {
                        out[g.index([nx, ny, nz])] = c.id;
                    }
                }
            }
        }
    }
    out
}

pub fn match_lesions(
    reference: &LesionSet,
    prediction: &LesionSet,
    mode: MatchMode,
) -> Result<MatchResult, MetricError> {
    reference.geometry().check_compatible(prediction.geometry())?;

    let mut pairs: BTreeSet<(u32, u32)> = BTreeSet::new();
    match mode {
        MatchMode::Undilated => {
            let pred_labels = prediction.labels();
            for c in reference.components() {
                for &v in &c.voxels {
                    let p = pred_labels[v];
                    if p != 0 {
                        pairs.insert((c.id, p));
                    }
                }
            }
        }
        MatchMode::Dilated => {
            let r = dilated_label_map(reference);
            let p = dilated_label_map(prediction);
            for (&a, &b) in r.iter().zip(&p) {
                if a != 0 && b != 0 {
                    pairs.insert((a, b));
                }
            }
        }
    }

    let mut matched_any: BTreeSet<u32> = BTreeSet::new();
    let pairings = reference
        .components()
        .iter()
        .map(|c| {
            let matched: Vec<u32> = pairs
                .range((c.id, 0)..=(c.id, u32::MAX))
                .map(|&(_, p)| p)
                .collect();
            matched_any.extend(&matched);
            LesionPairing {
                reference_id: c.id,
                classification: if matched.is_empty() {
                    Classification::FN
                } else {
                    Classification::TP
                },
                matched_prediction_ids: matched,
            }
        })
        .collect();
    let false_positive_ids = prediction
        .components()
        .iter()
        .map(|c| c.id)
        .filter(|id| !matched_any.contains(id))
        .collect();

    Ok(MatchResult {
        pairings,
        false_positive_ids,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LesionScore {
    pub lesion_id: u32,
    pub classification: Classification,
    pub reference_voxels: usize,
    pub matched_prediction_ids: Vec<u32>,
    pub dice: f64,
    pub hd95: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaseMetrics {
    #[serde(rename = "dsc")]
    pub lesionwise_dsc: f64,
    #[serde(rename = "hd95")]
    pub lesionwise_hd95: f64,
    #[serde(rename = "L")]
    pub lesions: usize,
    #[serde(rename = "TP")]
    pub tp: usize,
    #[serde(rename = "FN")]
    pub fn_: usize,
    #[serde(rename = "FP")]
    pub fp: usize,
    pub diagonal_mm: f64,
    pub per_lesion: Vec<LesionScore>,
}

/// Reference-side work of a case, reusable across several predictions.
#[derive(Debug, Clone)]
pub struct PreparedReference {
    geometry: Geometry,
    lesions: LesionSet,
    options: EvalOptions,
}

impl PreparedReference {
    pub fn new(reference: &BinaryMask, options: &EvalOptions) -> Result<Self, MetricError> {
        let lesions =
            filter_small_reference_lesions(&identify_lesions(reference), options.min_lesion_voxels);
        if lesions.is_empty() {
            return Err(MetricError::NoReferenceLesions);
        }
        Ok(PreparedReference {
            geometry: *reference.geometry(),
            lesions,
            options: *options,
        })
    }

    pub fn lesions(&self) -> &LesionSet {
        &self.lesions
    }

    pub fn geometry(&self) -> &Geometry {
        &self.geometry
    }

    pub fn score(&self, prediction: &BinaryMask) -> Result<CaseMetrics, MetricError> {
        self.geometry.check_compatible(prediction.geometry())?;
        let predicted = identify_lesions(prediction);
        let matched = match_lesions(&self.lesions, &predicted, self.options.match_mode)?;
        let diagonal = image_diagonal(&self.geometry);

        let per_lesion: Vec<LesionScore> = matched
            .pairings
            .par_iter()
            .map(|p| self.score_lesion(p, &predicted, diagonal))
            .collect::<Result<_, _>>()?;

        let l = per_lesion.len();
        let dsc_sum: f64 = per_lesion.iter().map(|s| s.dice).sum();
        let hd_sum: f64 = per_lesion.iter().map(|s| s.hd95).sum();
        Ok(CaseMetrics {
            lesionwise_dsc: dsc_sum / l as f64,
            lesionwise_hd95: hd_sum / l as f64,
            lesions: l,
            tp: matched.true_positives(),
            fn_: matched.false_negatives(),
            fp: matched.false_positives(),
            diagonal_mm: diagonal,
            per_lesion,
        })
    }

    fn score_lesion(
        &self,
        pairing: &LesionPairing,
        predicted: &LesionSet,
        diagonal: f64,
    ) -> Result<LesionScore, MetricError> {
        let reference = self
            .lesions
            .get(pairing.reference_id)
            .expect("pairing refers to a retained lesion");
        let base = LesionScore {
            lesion_id: pairing.reference_id,
            classification: pairing.classification,
            reference_voxels: reference.voxel_count(),
            matched_prediction_ids: pairing.matched_prediction_ids.clone(),
            dice: 0.0,
            hd95: diagonal,
        };
        if pairing.classification == Classification::FN {
            return Ok(base);
        }

        let matched: Vec<&Component> = pairing
            .matched_prediction_ids
            .iter()
            .map(|&id| predicted.get(id).expect("matched id exists"))
            .collect();
        let pred_labels = predicted.labels();
        let overlap = reference
            .voxels
            .iter()
            .filter(|&&v| pairing.matched_prediction_ids.contains(&pred_labels[v]))
            .count();
        let pred_count: usize = matched.iter().map(|c| c.voxel_count()).sum();
        let dice = dice_from_counts(overlap, reference.voxel_count(), pred_count);

        let window = matched
            .iter()
            .fold(reference.bbox, |acc, c| acc.union(&c.bbox))
            .padded(1, self.geometry.dims);
        let ref_crop = crop_voxels(&self.geometry, &window, reference.voxels.iter().copied());
        let pred_crop = crop_voxels(
            &self.geometry,
            &window,
            matched.iter().flat_map(|c| c.voxels.iter().copied()),
        );
        let hd = hd95_with(&ref_crop, &pred_crop, self.options.percentile)?;

        Ok(LesionScore {
            dice,
            hd95: hd,
            ..base
        })
    }
}

/// Mask over `window` with the given full-grid voxels set.
fn crop_voxels(
    geometry: &Geometry,
    window: &BoundingBox,
    voxels: impl Iterator<Item = usize>,
) -> BinaryMask {
    let local = Geometry {
        dims: window.extent(),
        spacing: geometry.spacing,
    };
    let mut mask = BinaryMask::empty(local);
    for v in voxels {
        let c = geometry.coords(v);
        mask.set_at(
            [c[0] - window.min[0], c[1] - window.min[1], c[2] - window.min[2]],
            true,
        );
    }
    mask
}

/// Lesion-wise Dice and 95HD of one case.
pub fn score_case(
    reference: &BinaryMask,
    prediction: &BinaryMask,
    options: &EvalOptions,
) -> Result<CaseMetrics, MetricError> {
    reference.geometry().check_compatible(prediction.geometry())?;
    PreparedReference::new(reference, options)?.score(prediction)
}
