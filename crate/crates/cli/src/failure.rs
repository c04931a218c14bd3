use cavc::CavcError;
use std::fmt;

/// A failed command together with its exit code.
#[derive(Debug)]
pub enum Failure {
    /// Unreadable or invalid input: exit 2.
    Input(String),
    /// A solver, budget or internal failure: exit 3.
    Solver(String),
    /// Some scenarios of a suite failed: exit 4.
    Partial(String),
    /// A verification battery failed: exit 5.
    Verification(String),
}

impl Failure {
    pub fn code(&self) -> u8 {
        match self {
            Failure::Input(_) => 2,
            Failure::Solver(_) => 3,
            Failure::Partial(_) => 4,
            Failure::Verification(_) => 5,
        }
    }

    /// Maps a library error raised while computing, not while reading input.
    pub fn from_run(e: CavcError) -> Self {
        if is_input_error(&e) {
            Failure::Input(e.to_string())
        } else {
            Failure::Solver(e.to_string())
        }
    }
}

pub fn is_input_error(e: &CavcError) -> bool {
    match e {
        CavcError::Trial { source, .. } => is_input_error(source),
        CavcError::InvalidDistribution(_)
        | CavcError::ModelMismatch(_)
        | CavcError::NotStochastic { .. }
        | CavcError::EntryOutOfRange { .. }
        | CavcError::LengthMismatch { .. }
        | CavcError::SymbolOutOfRange { .. }
        | CavcError::Unrealizable { .. }
        | CavcError::InfeasibleWitness { .. }
        | CavcError::Parse(_)
        | CavcError::Config(_) => true,
        CavcError::OverlappingAxes(_)
        | CavcError::NonConvergence { .. }
        | CavcError::BudgetExceeded { .. }
        | CavcError::Inconsistent(_) => false,
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Failure::Input(m) => write!(f, "input error: {m}"),
            Failure::Solver(m) => write!(f, "solver error: {m}"),
            Failure::Partial(m) => write!(f, "partial failure: {m}"),
            Failure::Verification(m) => write!(f, "verification failed: {m}"),
        }
    }
}

pub type CliResult<T> = std::result::Result<T, Failure>;
