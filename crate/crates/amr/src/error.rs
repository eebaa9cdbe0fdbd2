use thiserror::Error;

/// Coarse classification used by callers (e.g. the CLI) to map failures to
/// exit codes: usage errors, data errors, and numeric degeneracies.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    Usage,
    Data,
    Degenerate,
}

#[derive(Debug, Error)]
pub enum AmrError {
    #[error("{path}:{line}: {message}")]
    Parse {
        path: String,
        line: usize,
        message: String,
    },

    #[error("{path}: {count} NODATA cell(s) present; rasters must be fully observed")]
    NodataPresent { path: String, count: usize },

    #[error("{path}: {count} non-finite value(s) in raster")]
    NonFinite { path: String, count: usize },

    #[error("duplicate intervention point id `{0}`")]
    DuplicateId(String),

    #[error("point `{id}`: assignment value {value} is not 0 or 1")]
    BadBinary { id: String, value: String },

    #[error("no cell lies at distance {distance} from any intervention point")]
    AllRingsEmpty { distance: f64 },

    #[error("all rows missing at distance {distance}")]
    NoUsableRows { distance: f64 },

    #[error("degenerate arm at distance {distance}: n1={n1}, n0={n0}")]
    DegenerateArm { distance: f64, n1: usize, n0: usize },

    #[error("singular design matrix: n1={n1} of {n}")]
    SingularDesign { n1: usize, n: usize },

    #[error("singular weighted fit at target distance {target} (bandwidth too small?)")]
    SingularFit { target: f64 },

    #[error("enumeration over {n} units exceeds the limit of {max}")]
    TooLarge { n: usize, max: usize },

    #[error("gave up after {attempts} consecutive degenerate assignment redraws")]
    RedrawExhausted { attempts: usize },

    #[error("{0}")]
    InvalidInput(String),

    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl AmrError {
    pub fn kind(&self) -> ErrorKind {
        match self {
            AmrError::Parse { .. }
            | AmrError::NodataPresent { .. }
            | AmrError::NonFinite { .. }
            | AmrError::DuplicateId(_)
            | AmrError::BadBinary { .. }
            | AmrError::Io { .. } => ErrorKind::Data,
            AmrError::AllRingsEmpty { .. }
            | AmrError::NoUsableRows { .. }
            | AmrError::DegenerateArm { .. }
            | AmrError::SingularDesign { .. }
            | AmrError::SingularFit { .. }
            | AmrError::RedrawExhausted { .. } => ErrorKind::Degenerate,
            AmrError::TooLarge { .. } | AmrError::InvalidInput(_) => ErrorKind::Usage,
        }
    }
}

pub type Result<T> = std::result::Result<T, AmrError>;
