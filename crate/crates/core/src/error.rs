use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("rational input: expansion terminated after {terms} term(s)")]
    RationalInput { terms: usize },
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("non-finite sample at index {index}")]
    NonFinite { index: usize },
    #[error("bandwidth overflow: {needed} modes requested, cap is {cap}")]
    BandwidthOverflow { needed: usize, cap: usize },
    #[error("singular matrix function: min |det| = {min_det:e}")]
    SingularMatrix { min_det: f64 },
    #[error("not near a rotation: min det(A - Q(A)) = {min_det:e}")]
    NotNearRotation { min_det: f64 },
    #[error("degenerate norm in interpolation ratio")]
    DegenerateNorm,
    #[error("rotation number did not converge: spread {spread:e} across initial conditions")]
    NonConvergent { spread: f64 },
    #[error("matrix logarithm series diverges: |Y|_0 = {norm}")]
    LogDiverges { norm: f64 },
    #[error("resonant angle: min |R_2phi - Id| = {min:e} below floor {floor:e}")]
    ResonantAngle { min: f64, floor: f64 },
    #[error("inner conjugation stagnated at iteration {iteration} (|G| = {norm:e})")]
    NoContraction { iteration: usize, norm: f64 },
    #[error("precondition failed: {what} (measured {measured:e}, bound {bound:e})")]
    Precondition { what: String, measured: f64, bound: f64 },
    #[error("nonzero degree {degree} is not supported here")]
    NonzeroDegree { degree: i64 },
    #[error("pass {pass}: {source}")]
    InPass {
        pass: usize,
        #[source]
        source: Box<Error>,
    },
    #[error("serialization: {0}")]
    Serde(String),
}

impl Error {
    pub(crate) fn in_pass(self, pass: usize) -> Error {
        Error::InPass { pass, source: Box::new(self) }
    }

    /// Strips pass tags and returns the innermost error.
    pub fn root(&self) -> &Error {
        match self {
            Error::InPass { source, .. } => source.root(),
            e => e,
        }
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Serde(e.to_string())
    }
}
