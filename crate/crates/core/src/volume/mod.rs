//! Voxel-grid primitives the lesion metrics are built on: 26-connected
//! components, 3×3×3 dilation, face-connected surfaces and exact anisotropic
//! distance transforms.

mod components;
mod distance;
mod morphology;

pub use components::{connected_components, Component, LesionSet};
pub use distance::{directed_surface_distances, distance_field, DistanceField};
pub(crate) use distance::surface_distances_both;
pub use morphology::{dilate_once, surface_mask, surface_voxels};
