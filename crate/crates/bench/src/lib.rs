//! Shared fixtures for the criterion benches.

use lesioneval::phantom::{generate, LesionSpec, Presence, PhantomSpec, Shape};
use lesioneval::BinaryMask;

/// A clinical-sized grid (240×240×155, 0.9375×0.9375×1.2 mm) with three
/// spherical lesions; the prediction shifts each by one voxel and misses the
/// smallest.
pub fn clinical_case() -> (BinaryMask, BinaryMask) {
    let lesion = |center, radius_mm, present_in, offset| LesionSpec {
        shape: Shape::Sphere { radius_mm },
        center,
        present_in,
        offset,
    };
    let spec = PhantomSpec {
        dims: [240, 240, 155],
        spacing: [0.9375, 0.9375, 1.2],
        seed: 0,
        lesions: vec![
            lesion([80, 90, 70], 18.0, Presence::Both, [1, 0, 0]),
            lesion([160, 150, 80], 10.0, Presence::Both, [0, 1, 1]),
            lesion([120, 60, 40], 5.0, Presence::Reference, [0, 0, 0]),
        ],
    };
    let ph = generate(&spec).expect("fixture fits the grid");
    (ph.reference_mask(), ph.prediction_mask())
}
