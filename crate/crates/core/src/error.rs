use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{op}: shape mismatch: {detail}")]
    Shape { op: &'static str, detail: String },

    #[error("{op}: degenerate dimension {dim} (need at least {min})")]
    DegenerateDimension {
        op: &'static str,
        dim: usize,
        min: usize,
    },

    #[error("{op}: non-finite value encountered")]
    NonFinite { op: &'static str },

    #[error("{op}: value outside domain: {detail}")]
    Domain { op: &'static str, detail: String },

    #[error("{op}: index {index} out of range for length {len}")]
    IndexOutOfRange {
        op: &'static str,
        index: usize,
        len: usize,
    },

    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("{op}: result exceeds 64-bit range")]
    Overflow { op: &'static str },

    #[error("{op}: expected at least {min} inputs, got {got}")]
    Arity {
        op: &'static str,
        min: usize,
        got: usize,
    },

    #[error("dataset error: {0}")]
    Dataset(String),

    #[error("label `{0}` is not a valid class id (allowed: 1..=19 except 12)")]
    LabelDomain(String),

    #[error("duplicate id `{0}`")]
    DuplicateId(String),

    #[error("prediction {index} has no labels set")]
    EmptyPrediction { index: usize },

    #[error("bad magic: expected {expected:?}, found {found:?}")]
    BadMagic { expected: [u8; 4], found: [u8; 4] },

    #[error("unsupported format version {found} (expected {expected})")]
    UnsupportedVersion { found: u32, expected: u32 },

    #[error("truncated file: expected {expected} bytes, got {actual}")]
    Truncated { expected: u64, actual: u64 },

    #[error("trailing data: expected {expected} bytes, got {actual}")]
    TrailingBytes { expected: u64, actual: u64 },

    #[error("checksum mismatch: stored {stored:#010x}, computed {computed:#010x}")]
    Checksum { stored: u32, computed: u32 },

    #[error("unknown model kind code {0}")]
    UnknownKind(u32),

    #[error("model kind mismatch: expected {expected}, file holds {found}")]
    KindMismatch { expected: String, found: String },

    #[error("malformed input: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn shape(op: &'static str, detail: impl Into<String>) -> Self {
        Error::Shape {
            op,
            detail: detail.into(),
        }
    }

    pub(crate) fn domain(op: &'static str, detail: impl Into<String>) -> Self {
        Error::Domain {
            op,
            detail: detail.into(),
        }
    }

    /// True for failures caused by numerics rather than by inputs or files.
    pub fn is_numeric(&self) -> bool {
        matches!(self, Error::NonFinite { .. } | Error::Overflow { .. })
    }
}
