use alloc::string::String;
use alloc::vec::Vec;

pub type Result<T> = core::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("undefined distance: the set is empty")]
    EmptySet,

    #[error("empty section at t = {t}")]
    EmptySection { t: f64 },

    #[error("singular point at t = {t}: evaluation on a vortex trajectory")]
    SingularPoint { t: f64 },

    #[error("distance floor breached: d_S = {distance} < {floor}")]
    DistanceFloor { distance: f64, floor: f64 },

    #[error("Hölder check failed: |Z({t1}) - Z({t2})| = {gap} > {bound} at base point {index}")]
    HolderViolation {
        t1: f64,
        t2: f64,
        index: usize,
        gap: f64,
        bound: f64,
    },

    #[error("degenerate ladder: {0}")]
    DegenerateLadder(String),

    #[error("point budget exceeded: {requested} points > {budget}")]
    PointBudget { requested: usize, budget: usize },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("test function support overlaps {} singular-contaminated nodes", .nodes.len())]
    ContaminatedSupport { nodes: Vec<(usize, usize)> },

    #[error("non-finite value in quadrature at t = {t}")]
    NonFinite { t: f64 },
}

pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Error {
    Error::InvalidParameter {
        name,
        reason: reason.into(),
    }
}
