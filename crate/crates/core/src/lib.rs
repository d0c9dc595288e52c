//! Lesion-wise segmentation scoring.
//!
//! Reads native-resolution label volumes, groups each mask into distinct
//! lesions (one 3×3×3 dilation followed by 26-connected labeling), matches
//! reference lesions to predicted ones, and scores each case with a
//! lesion-wise Dice and 95th-percentile Hausdorff distance. Missed lesions
//! score Dice 0 and the image diagonal as their distance; unmatched
//! predictions are ignored. Per-case ranks across teams are combined into a
//! composite score for leaderboards.
//!
//! The [`oracle`] module holds slow, independently written reference versions
//! of every primitive and [`phantom`] generates synthetic cases with known
//! answers; together they back the test suites.

pub mod batch;
pub mod error;
pub mod mask;
pub mod metrics;
pub mod nifti;
pub mod oracle;
pub mod phantom;
pub mod ranking;
pub mod report;
pub mod volume;

pub use error::{GeometryError, MetricError, NiftiError, PhantomError, RankingError, VolumeError};
pub use mask::{BinaryMask, BoundingBox, Geometry};
pub use metrics::{
    dice, hd95, image_diagonal, score_case, CaseMetrics, EvalOptions, LesionScore, MatchMode,
    MatchResult, PercentileMethod,
};
pub use nifti::{read_volume, read_volume_file, write_volume, write_volume_file, LabelVolume};
pub use ranking::{brats_scores, per_case_ranks, summary_stats, Direction, Leaderboard, MetricTable, SummaryStats};
pub use volume::{connected_components, dilate_once, distance_field, LesionSet};
