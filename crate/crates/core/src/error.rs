use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("fixed-point iteration did not converge after {iterations} iterations (last relative change {last_change:e})")]
    FixedPointDiverged { iterations: usize, last_change: f64 },

    #[error("unbounded amplitude: oscillating solution exists but the Kerr coefficient is zero")]
    UnboundedAmplitude,

    #[error("time step too large: rate*dt = {rate_dt:.3} exceeds {limit}")]
    StepTooLarge { rate_dt: f64, limit: f64 },

    #[error("integration produced a non-finite state at t = {t_s:e} s (x = {x}, y = {y})")]
    NonFinite { t_s: f64, x: f64, y: f64 },

    #[error("no oscillation transition found within the pump grid")]
    NoTransition,

    #[error("no finite threshold at this detuning (denominator {denominator:e})")]
    NoFiniteThreshold { denominator: f64 },

    #[error("threshold bracket not found in [{p_min:e}, {p_max:e}] W")]
    BracketNotFound { p_min: f64, p_max: f64 },

    #[error("invalid pulse sequence: {0}")]
    Sequence(String),

    #[error("no finite optimum: dark-count probability is zero, E(N) increases monotonically")]
    NoFiniteOptimum,

    #[error("underdetermined fit: {0}")]
    Underdetermined(String),

    #[error("fit did not converge: {0}")]
    FitDiverged(String),

    #[error("no transition in data range: {0}")]
    NoTransitionInData(String),

    #[error("data are not monotone in energy: {0}")]
    NotMonotone(String),

    #[error("frequency grids differ: {0}")]
    GridMismatch(String),

    #[error("resonance outside the measured span: {0}")]
    ResonanceOutsideSpan(String),

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
