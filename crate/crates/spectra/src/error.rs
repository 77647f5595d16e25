use thiserror::Error;

/// Errors shared across the library.
#[derive(Debug, Error)]
pub enum SpectraError {
    #[error("inadmissible word: transition {from}->{to} forbidden at index {index}")]
    InadmissibleWord { index: usize, from: u8, to: u8 },

    #[error("word of length {len} too short: need at least {need} symbols")]
    WordTooShort { len: usize, need: usize },

    #[error("enumeration budget exceeded: {requested} words requested, budget is {budget}")]
    BudgetExceeded { requested: f64, budget: u64 },

    #[error("transition matrix is not primitive (no power up to {checked} has all entries positive)")]
    NotPrimitive { checked: usize },

    #[error("bridge table entry ({from},{to}) is invalid: {reason}")]
    BadBridge { from: u8, to: u8, reason: String },

    #[error("cocycle value table incomplete: no value for admissible word {word:?}")]
    MissingCocycleValue { word: String },

    #[error("power iteration did not converge within {max_iters} iterations (tol {tol:e})")]
    PowerIterationDiverged { max_iters: usize, tol: f64 },

    #[error("no measures with exponent of the requested sign: phi range [{min:.6}, {max:.6}]")]
    EmptyRestrictionClass { min: f64, max: f64 },

    #[error("grid entirely outside the transform domain [{lo:.6}, {hi:.6}]")]
    GridOutsideDomain { lo: f64, hi: f64 },

    #[error("degenerate word length m = 0")]
    DegenerateLength,

    #[error(
        "exponent window is empty for alpha={alpha:.6}: K0={k0:.6} too small, minimal feasible K0 is {suggested:.6}"
    )]
    EmptyWindow { alpha: f64, k0: f64, suggested: f64 },

    #[error("schedule infeasible: inequality {inequality} violated at level {level}: {detail}")]
    ScheduleInfeasible {
        inequality: &'static str,
        level: usize,
        detail: String,
    },

    #[error("epsilon sequence must be strictly decreasing and positive")]
    BadEpsilonSequence,

    #[error("family budget exceeded: level {level} needs {needed} members, budget {budget} (enable sub-sampling)")]
    FamilyBudgetExceeded {
        level: usize,
        needed: f64,
        budget: u64,
    },

    #[error("cylinder depth {depth} exceeds stored word length {len}")]
    DepthExceedsLength { depth: usize, len: usize },

    #[error("empty support")]
    EmptySupport,

    #[error("n-range [{lo}, {hi}] exceeds available word length {len}")]
    RangeTooLong { lo: usize, hi: usize, len: usize },

    #[error("audit failed, no certificate: worst margin {margin:.6} at n = {at_n}")]
    AuditFailed { margin: f64, at_n: usize },

    #[error("unsupported configuration: {0}")]
    Unsupported(String),

    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, SpectraError>;
