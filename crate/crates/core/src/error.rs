use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid dimension: {0}")]
    InvalidDimension(String),

    #[error("invalid circuit parameters: {0}")]
    InvalidParams(String),

    #[error("invalid coherence times for {element}: T2 = {t2} ns exceeds 2*T1 = {} ns", 2.0 * t1)]
    InvalidCoherence { element: &'static str, t1: f64, t2: f64 },

    #[error("resonance singularity: denominator vanishes at delta = {delta} GHz")]
    ResonanceSingularity { delta: f64 },

    #[error("no sign change of the effective coupling on [{lo}, {hi}] GHz")]
    NoRoot { lo: f64, hi: f64 },

    #[error("invalid interval [{lo}, {hi}]: {reason}")]
    InvalidInterval { lo: f64, hi: f64, reason: String },

    #[error("invalid state: {0}")]
    InvalidState(String),

    #[error("negative collapse rate {0}")]
    NegativeRate(f64),

    #[error("rotating frame is not compatible with the generator: {0}")]
    InvalidFrame(String),

    #[error("integration failed at t = {t} ns: {reason}")]
    Integration { t: f64, reason: String },

    #[error("invalid pulse schedule: {0}")]
    InvalidSchedule(String),

    #[error("unknown coupler state tag `{0}` (expected 0 or 1)")]
    UnknownCouplerState(String),

    #[error("oscillation fit failed after {iterations} iterations (residual rms {residual_rms:.3e})")]
    FitFailure {
        iterations: usize,
        residual_rms: f64,
        residuals: Vec<f64>,
    },

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("incomplete tomography data: {0}")]
    IncompleteData(String),

    #[error("linear inversion is rank deficient (rank {rank} of {expected})")]
    RankDeficient { rank: usize, expected: usize },

    #[error("process matrix convention mismatch: traces {0} and {1}")]
    ConventionMismatch(f64, f64),

    #[error("singular matrix: {0}")]
    SingularMatrix(String),

    #[error("frame construction failed: {0}")]
    Frame(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
