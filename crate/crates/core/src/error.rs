use thiserror::Error;

/// Errors produced while building, mapping or simulating a workload.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid config `{field}`: {reason}")]
    InvalidField { field: String, reason: String },

    #[error("malformed config: {0}")]
    Parse(#[from] serde_json::Error),

    #[error("unknown preset `{0}`")]
    UnknownPreset(String),

    #[error("{what} capacity exceeded by {overflow_bytes} bytes")]
    Capacity { what: String, overflow_bytes: u64 },

    #[error("mapping error: {0}")]
    Mapping(String),

    #[error("endurance violation: KV block {block} would be written to RRAM a second time")]
    Endurance { block: u32 },

    #[error("deadlock: kernel {waiting} still waits on {blocked_on}")]
    Deadlock { waiting: u32, blocked_on: u32 },

    #[error("tier {tier} out of range (chiplet has {tiers} tiers)")]
    TierOutOfRange { tier: usize, tiers: usize },

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("non-finite value produced in {0}")]
    NonFinite(&'static str),

    #[error("empty report")]
    EmptyReport,

    #[error("plan does not match graph: {0}")]
    PlanMismatch(String),
}

impl Error {
    pub(crate) fn field(field: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::InvalidField {
            field: field.into(),
            reason: reason.into(),
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
