use thiserror::Error;

/// Errors raised by the simulator and solvers.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// An argument outside the mathematical domain of an operation.
    #[error("domain error: {0}")]
    Domain(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    /// A remaining trajectory longer than the UAV can still fly.
    #[error("horizon infeasible for UAV {uav} at slot {slot}: {remaining:.6} m left, at most {reachable:.6} m reachable")]
    HorizonInfeasible {
        uav: usize,
        slot: usize,
        remaining: f64,
        reachable: f64,
    },

    /// U2U transmitters exist but no UAV qualified for U2I, so nobody can relay.
    #[error("categorization failed: {0} U2U UAV(s) but no U2I relay")]
    NoRelay(usize),

    /// A matrix breaks one of the allocation constraints, e.g.
    /// `subchannel_exclusive`, `row_chi_max`, `binary`.
    #[error("constraint ({constraint}) violated: {detail}")]
    ConstraintViolation {
        constraint: &'static str,
        detail: String,
    },

    /// Shapes of matrices or instances do not agree.
    #[error("shape mismatch: {0}")]
    Shape(String),

    /// An operation received input that breaks its documented contract.
    #[error("contract violation: {0}")]
    Contract(String),

    /// No allocation the request procedure can find lets `link` reach the
    /// minimum rate.
    #[error("U2U link {link} cannot reach the minimum rate")]
    U2uInfeasible { link: usize },

    #[error("U2U link {link} has no assigned subchannel")]
    NoChannel { link: usize },

    #[error("{slot_context}: {source}")]
    Slot {
        slot_context: String,
        #[source]
        source: Box<Error>,
    },

    #[error("i/o error: {0}")]
    Io(String),
}

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    /// Wraps the error with the slot it happened in.
    pub fn in_slot(self, slot: usize) -> Self {
        Error::Slot {
            slot_context: format!("slot {slot}"),
            source: Box::new(self),
        }
    }

    /// True for errors that make a run impossible to continue as configured.
    pub fn is_infeasibility(&self) -> bool {
        match self {
            Error::HorizonInfeasible { .. } | Error::NoRelay(_) | Error::U2uInfeasible { .. } => true,
            Error::Slot { source, .. } => source.is_infeasibility(),
            _ => false,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
