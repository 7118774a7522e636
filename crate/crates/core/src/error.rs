use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum GeometryError {
    #[error("camera rig has no views")]
    EmptyRig,
    #[error("view {0}: {1}")]
    View(usize, Box<GeometryError>),
    #[error("focal lengths must be positive (fx={fx}, fy={fy})")]
    FocalLength { fx: f64, fy: f64 },
    #[error("rotation is not orthonormal")]
    NotOrthonormal,
    #[error("rotation has determinant {0}, expected +1")]
    Reflection(f64),
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
    #[error("empty feature map ({feat_h}x{feat_w}, downsample {downsample})")]
    EmptyFeatureMap {
        feat_h: usize,
        feat_w: usize,
        downsample: usize,
    },
    #[error("depth range {start}..{end} step {step} yields no bins")]
    DepthRange { start: f64, end: f64, step: f64 },
    #[error("voxel grid needs positive sizes and non-zero dims")]
    DegenerateGrid,
    #[error("voxel grid {0:?} exceeds 32-bit flat indices")]
    GridTooLarge([usize; 3]),
    #[error("voxel index map has {actual} entries, expected {expected}")]
    IndexMapLength { expected: usize, actual: usize },
    #[error("voxel index {value} at position {position} is outside the grid")]
    IndexOutOfGrid { position: usize, value: u32 },
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum PlanError {
    #[error("{0} frustum points do not fit 32-bit plan indices")]
    TooManyPoints(usize),
    #[error("malformed plan: {0}")]
    Invalid(String),
}

/// Failures decoding a serialized plan. Each corruption mode is distinct.
#[derive(Debug, Error, PartialEq, Eq)]
pub enum CodecError {
    #[error("bad magic {0:?}, expected \"BVP2\"")]
    BadMagic([u8; 4]),
    #[error("unsupported plan version {found} (expected {expected})")]
    VersionMismatch { found: u16, expected: u16 },
    #[error("unknown flat-order tag {0}")]
    UnknownOrder(u8),
    #[error("digest mismatch: header {stored:#018x}, content {computed:#018x}")]
    DigestMismatch { stored: u64, computed: u64 },
    #[error("truncated plan stream: need {needed} bytes, have {available}")]
    Truncated { needed: usize, available: usize },
    #[error("{0} trailing bytes after plan")]
    TrailingBytes(usize),
    #[error(transparent)]
    Plan(#[from] PlanError),
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum KernelError {
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("plan does not match inputs: {0}")]
    PlanMismatch(String),
    #[error("failed to allocate {bytes} bytes for {what}")]
    Allocation { what: &'static str, bytes: u64 },
    #[error("byte count overflows 63 bits")]
    Overflow,
}

#[derive(Debug, Error, PartialEq)]
pub enum ConfigError {
    #[error("line {line}: {message}")]
    Syntax { line: usize, message: String },
    #[error("[{section}] missing key `{key}`")]
    MissingKey { section: String, key: String },
    #[error("missing [{0}] section")]
    MissingSection(&'static str),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}
