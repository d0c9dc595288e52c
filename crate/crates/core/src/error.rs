use std::io;

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("dimension {axis} is zero")]
    ZeroDim { axis: usize },
    #[error("spacing along axis {axis} must be positive and finite, got {value}")]
    BadSpacing { axis: usize, value: f64 },
    #[error("voxel buffer has {actual} entries, geometry needs {expected}")]
    LengthMismatch { expected: usize, actual: usize },
    #[error("geometry mismatch: dims {left:?} vs {right:?}")]
    DimsMismatch { left: [usize; 3], right: [usize; 3] },
    #[error("geometry mismatch: spacing {left:?} vs {right:?}")]
    SpacingMismatch { left: [f64; 3], right: [f64; 3] },
}

/// Parse and write failures for NIfTI-1 files. Each variant names the
/// offending header field.
#[derive(Debug, Error)]
pub enum NiftiError {
    #[error("i/o error: {0}")]
    Io(#[from] io::Error),
    #[error("corrupt gzip stream: {0}")]
    Gzip(String),
    #[error("file too short for a NIfTI-1 header ({0} bytes, need 348)")]
    TooShort(usize),
    #[error("bad sizeof_hdr: expected 348, got {0}")]
    HeaderLength(i32),
    #[error("bad magic {0:?}: expected \"n+1\\0\"")]
    BadMagic([u8; 4]),
    #[error("unsupported datatype code {0}")]
    UnsupportedDatatype(i16),
    #[error("unsupported dim[0] = {0}: need a 3D volume")]
    Dimensionality(i16),
    #[error("invalid dim[{axis}] = {value}")]
    InvalidDim { axis: usize, value: i16 },
    #[error("invalid pixdim[{axis}] = {value}")]
    InvalidSpacing { axis: usize, value: f32 },
    #[error("invalid vox_offset {0}")]
    VoxOffset(f32),
    #[error("truncated data section: expected {expected} bytes, found {actual}")]
    Truncated { expected: usize, actual: usize },
    #[error("voxel data does not match datatype or dims: {0}")]
    Data(String),
}

impl NiftiError {
    /// Stable short name used in reports.
    pub fn kind(&self) -> &'static str {
        match self {
            NiftiError::Io(_) => "io",
            NiftiError::Gzip(_) => "gzip",
            NiftiError::TooShort(_) => "too_short",
            NiftiError::HeaderLength(_) => "sizeof_hdr",
            NiftiError::BadMagic(_) => "magic",
            NiftiError::UnsupportedDatatype(_) => "datatype",
            NiftiError::Dimensionality(_) => "dim0",
            NiftiError::InvalidDim { .. } => "dim",
            NiftiError::InvalidSpacing { .. } => "pixdim",
            NiftiError::VoxOffset(_) => "vox_offset",
            NiftiError::Truncated { .. } => "truncated",
            NiftiError::Data(_) => "data",
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum VolumeError {
    #[error("empty distance source")]
    EmptySource,
    #[error("empty surface-distance operand")]
    EmptyOperand,
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MetricError {
    #[error("undefined dice on empty pair")]
    EmptyDice,
    #[error("undefined hd95 on empty mask")]
    EmptyHd95,
    #[error("no evaluable reference lesions")]
    NoReferenceLesions,
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

impl MetricError {
    pub fn kind(&self) -> &'static str {
        match self {
            MetricError::EmptyDice => "empty_dice",
            MetricError::EmptyHd95 => "empty_hd95",
            MetricError::NoReferenceLesions => "no_reference_lesions",
            MetricError::Geometry(_) => "geometry_mismatch",
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RankingError {
    #[error("empty metric table")]
    EmptyTable,
    #[error("summary of an empty list")]
    EmptyList,
    #[error("metric table is not rectangular: {0}")]
    Shape(String),
    #[error("invalid metric value for team {team}, case {case}: {reason}")]
    InvalidValue {
        team: String,
        case: String,
        reason: &'static str,
    },
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PhantomError {
    #[error("lesion {index} does not fit in the grid")]
    OutOfBounds { index: usize },
    #[error("lesion {index} has a non-positive size")]
    BadSize { index: usize },
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}
