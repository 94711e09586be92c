use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid table spec: {0}")]
    InvalidSpec(String),
    #[error("degenerate cap: meeting angle {angle:e} rad is a cusp")]
    DegenerateCap { angle: f64 },
    #[error("boundary not closed: gap {gap:e} between piece {piece} and its successor")]
    NotClosed { piece: usize, gap: f64 },
    #[error("arc length {r} outside [0, {length}] on piece {piece}")]
    OutOfRange { piece: usize, r: f64, length: f64 },
    #[error("operation not defined on piece kind {0}")]
    UnsupportedPiece(&'static str),
    #[error("point is not on the boundary (distance {0:e})")]
    OffBoundary(f64),

    #[error("ray left the table without a collision")]
    NoCollision,
    #[error("collision within {distance:e} of a piece junction")]
    CornerHit { distance: f64 },
    #[error("collision refinement did not converge (residual {residual:e})")]
    SolverStall { residual: f64 },
    #[error("grazing collision, |cos phi| = {cos_phi:e}")]
    GrazingDiscard { cos_phi: f64 },
    #[error("flight angle too flat for the window formula (cos = {0:e})")]
    AngleTooFlat(f64),

    #[error("excursion exceeded {0} collisions")]
    ExcursionTooLong(usize),
    #[error("excursion never entered the window")]
    NotAWindowExcursion,
    #[error("split indices undefined: {0}")]
    Undefined(&'static str),
    #[error("no contracting direction found: {0}")]
    NoContractionFound(String),
    #[error("pair members landed in different cells ({0} vs {1})")]
    CellMismatch(i64, i64),

    #[error("observable {0} is not defined on this space")]
    ObservableUndefined(String),
    #[error("insufficient tail: {0}")]
    InsufficientTail(String),
    #[error("insufficient data: {0}")]
    InsufficientData(String),
    #[error("cell {0} not reached within the sampling budget")]
    CellUnreachable(i64),
    #[error("only {found} excursions with n >= {n_min} (wanted {wanted})")]
    InsufficientExcursions { found: usize, wanted: usize, n_min: i64 },
    #[error("bad argument: {0}")]
    BadArgument(String),

    #[error("io: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl Error {
    /// Errors that mark a single trajectory as unusable rather than a broken run.
    pub fn is_discard(&self) -> bool {
        matches!(
            self,
            Error::CornerHit { .. }
                | Error::GrazingDiscard { .. }
                | Error::ExcursionTooLong(_)
                | Error::SolverStall { .. }
        )
    }
}
