use spncs_core::certify::CertifyError;
use spncs_core::hybridsim::SimError;
use spncs_core::ltimodel::ModelError;
use spncs_core::mati::MatiError;
use spncs_core::numerics::NumericsError;
use spncs_core::scheduler::ScheduleError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("scenario error: {0}")]
    Schema(String),
    #[error("infeasible: {0}")]
    Constraint(String),
    #[error("numerical guard: {0}")]
    Numerical(String),
    #[error("i/o error: {0}")]
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Io(_) => 1,
            CliError::Schema(_) => 2,
            CliError::Constraint(_) => 3,
            CliError::Numerical(_) => 4,
        }
    }

    /// Prefixes the message with grid coordinates.
    pub fn at(self, where_: &str) -> Self {
        match self {
            CliError::Schema(m) => CliError::Schema(format!("{where_}: {m}")),
            CliError::Constraint(m) => CliError::Constraint(format!("{where_}: {m}")),
            CliError::Numerical(m) => CliError::Numerical(format!("{where_}: {m}")),
            CliError::Io(m) => CliError::Io(format!("{where_}: {m}")),
        }
    }
}

pub type Result<T> = std::result::Result<T, CliError>;

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e.to_string())
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::Schema(e.to_string())
    }
}

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> Self {
        CliError::Schema(format!("trajectory csv: {e}"))
    }
}

impl From<NumericsError> for CliError {
    fn from(e: NumericsError) -> Self {
        match e {
            NumericsError::DimensionMismatch { .. } | NumericsError::BadShape { .. } | NumericsError::NotSquare(..) => {
                CliError::Schema(e.to_string())
            }
            _ => CliError::Numerical(e.to_string()),
        }
    }
}

impl From<ModelError> for CliError {
    fn from(e: ModelError) -> Self {
        match e {
            ModelError::Shape { .. } => CliError::Schema(e.to_string()),
            ModelError::SingularA33 { .. } => CliError::Numerical(e.to_string()),
            ModelError::Numerics(n) => n.into(),
        }
    }
}

impl From<MatiError> for CliError {
    fn from(e: MatiError) -> Self {
        CliError::Schema(e.to_string())
    }
}

impl From<ScheduleError> for CliError {
    fn from(e: ScheduleError) -> Self {
        match e {
            ScheduleError::Config(_) => CliError::Schema(e.to_string()),
            _ => CliError::Constraint(e.to_string()),
        }
    }
}

impl From<CertifyError> for CliError {
    fn from(e: CertifyError) -> Self {
        match e {
            CertifyError::Invalid(_) => CliError::Schema(e.to_string()),
            CertifyError::Constraint(_) | CertifyError::LmiInfeasible { .. } => CliError::Constraint(e.to_string()),
            CertifyError::Numerics(n) => n.into(),
            CertifyError::Mati(m) => m.into(),
        }
    }
}

impl From<SimError> for CliError {
    fn from(e: SimError) -> Self {
        match e {
            SimError::Schedule(s) => s.into(),
            SimError::Stiffness { .. } | SimError::StepUnderflow { .. } | SimError::NonFinite { .. } => {
                CliError::Numerical(e.to_string())
            }
            SimError::JumpSet { .. } => CliError::Constraint(e.to_string()),
            _ => CliError::Schema(e.to_string()),
        }
    }
}
