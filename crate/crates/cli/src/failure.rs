//! Exit-code contract.
//!
//! Failure classes partition the exit codes so CI suites can assert on
//! behavior rather than message text:
//! 1 input error, 3 scientific negative, 4 singularity or numeric
//! breakdown, 5 resolution failure.

use hjflow_core::flow::FlowError;
use hjflow_core::quantum::QuantumError;

#[derive(Debug)]
pub struct Failure {
    pub code: i32,
    pub message: String,
}

impl Failure {
    pub fn input(message: impl Into<String>) -> Self {
        Failure {
            code: 1,
            message: message.into(),
        }
    }

    pub fn scientific(message: impl Into<String>) -> Self {
        Failure {
            code: 3,
            message: message.into(),
        }
    }

    pub fn singularity(message: impl Into<String>) -> Self {
        Failure {
            code: 4,
            message: message.into(),
        }
    }

    pub fn resolution(message: impl Into<String>) -> Self {
        Failure {
            code: 5,
            message: message.into(),
        }
    }
}

impl From<FlowError> for Failure {
    fn from(e: FlowError) -> Self {
        match &e {
            FlowError::Singularity { .. } | FlowError::NonFinite { .. } => {
                Failure::singularity(e.to_string())
            }
            _ => Failure::input(e.to_string()),
        }
    }
}

impl From<QuantumError> for Failure {
    fn from(e: QuantumError) -> Self {
        match &e {
            QuantumError::KernelResolution { .. }
            | QuantumError::UnderResolved(_)
            | QuantumError::BoundaryMass { .. }
            | QuantumError::NotNormalized(_) => Failure::resolution(e.to_string()),
            QuantumError::NonFinite(_) => Failure::singularity(e.to_string()),
            _ => Failure::input(e.to_string()),
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::input(e.to_string())
    }
}
