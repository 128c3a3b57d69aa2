use alloc::string::String;

use thiserror::Error;

use crate::ledger::BellLedger;

#[derive(Debug, Clone, Error)]
pub enum Error {
    #[error("state vector has zero norm")]
    ZeroState,

    #[error("invalid party system: {0}")]
    InvalidSystem(String),

    #[error("amplitude count {found} does not match total dimension {expected}")]
    LengthMismatch { expected: usize, found: usize },

    #[error("state is not normalized (norm {norm})")]
    NotNormalized { norm: f64 },

    #[error("invalid permutation of {parties} parties")]
    InvalidPermutation { parties: usize },

    #[error("invalid party subset: {0}")]
    InvalidSubset(String),

    #[error("party systems do not match")]
    SystemMismatch,

    #[error("precondition violated: {0}")]
    PreconditionViolated(String),

    #[error("protocol invalid: {0}")]
    ProtocolInvalid(String),

    #[error("simulation check failed: {0}")]
    VerificationFailed(String),

    #[error("no all-entangled measurement basis after {attempts} rotation attempts")]
    BasisSearchExhausted { attempts: usize },

    #[error("source Schmidt vector does not majorize-convert to the target")]
    NotTransformable,

    #[error("Bell-pair yield is zero; batch more copies")]
    YieldZero,

    #[error("insufficient entanglement between {a} and {b}: need {needed}, have {available}")]
    InsufficientEntanglement {
        a: String,
        b: String,
        needed: u64,
        available: u64,
    },

    #[error("copy budget of {copies} exhausted before a merge plan became feasible (ledger: {ledger})")]
    BudgetExhausted { copies: usize, ledger: BellLedger },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

pub type Result<T> = core::result::Result<T, Error>;
