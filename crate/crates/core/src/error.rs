use alloc::string::String;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("dimension mismatch: {left:?} vs {right:?}")]
    DimensionMismatch { left: [usize; 3], right: [usize; 3] },
    #[error("data length {len} does not match dims {dims:?}")]
    LengthMismatch { dims: [usize; 3], len: usize },
    #[error("dims must be positive, got {0:?}")]
    InvalidDims([usize; 3]),
    #[error("spacing must be finite and strictly positive, got {0:?}")]
    InvalidSpacing([f64; 3]),
    #[error("non-finite value at voxel {0}")]
    NonFinite(usize),
    #[error("value {value} at voxel {index} outside [{min}, {max}]")]
    OutOfRange {
        index: usize,
        value: f64,
        min: f64,
        max: f64,
    },
    #[error("no foreground intensities")]
    NoForeground,
    #[error("ensemble requires at least one prediction")]
    EmptyEnsemble,
    #[error("prediction count {count} is not a multiple of the augmentation group size {group}")]
    RaggedFlipGroups { count: usize, group: usize },
    #[error("exactly one mask is empty; Hausdorff distance undefined")]
    OneMaskEmpty,
    #[error("empty input: {0}")]
    EmptyInput(&'static str),
    #[error("need at least {needed} records, got {got}")]
    InsufficientData { needed: usize, got: usize },
    #[error("invalid record {case_id}: {reason}")]
    InvalidRecord { case_id: String, reason: &'static str },
    #[error("record {0} has no survival time")]
    MissingTarget(String),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("phantom sphere for {region} does not fit inside the volume")]
    PhantomOutOfBounds { region: &'static str },
}
