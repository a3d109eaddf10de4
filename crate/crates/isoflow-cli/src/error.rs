//! CLI errors mapped onto process exit codes: 0 ok, 1 config/other,
//! 2 empty surface, 3 gradient check failure.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Config(String),
    #[error("no zero crossing: the field does not change sign on the grid")]
    EmptySurface,
    #[error("gradient check failed: {0}")]
    Gradcheck(String),
    #[error("{0}")]
    Other(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 1,
            CliError::EmptySurface => 2,
            CliError::Gradcheck(_) => 3,
            CliError::Other(_) => 1,
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Other(format!("io error: {e}"))
    }
}

impl From<isoflow::mesher::MesherError> for CliError {
    fn from(e: isoflow::mesher::MesherError) -> Self {
        match e {
            isoflow::mesher::MesherError::EmptySurface => CliError::EmptySurface,
            other => CliError::Other(other.to_string()),
        }
    }
}

impl From<isoflow::optim::OptimError> for CliError {
    fn from(e: isoflow::optim::OptimError) -> Self {
        match e {
            isoflow::optim::OptimError::EmptySurface => CliError::EmptySurface,
            isoflow::optim::OptimError::Mesher(m) => m.into(),
            other => CliError::Other(other.to_string()),
        }
    }
}

impl From<isoflow::losses::LossError> for CliError {
    fn from(e: isoflow::losses::LossError) -> Self {
        CliError::Other(e.to_string())
    }
}

impl From<isoflow::mlp::MlpError> for CliError {
    fn from(e: isoflow::mlp::MlpError) -> Self {
        match e {
            isoflow::mlp::MlpError::EmptySurface => CliError::EmptySurface,
            other => CliError::Other(other.to_string()),
        }
    }
}

impl From<isoflow::field::FieldError> for CliError {
    fn from(e: isoflow::field::FieldError) -> Self {
        CliError::Other(e.to_string())
    }
}

impl From<isoflow::diffiso::DiffisoError> for CliError {
    fn from(e: isoflow::diffiso::DiffisoError) -> Self {
        CliError::Other(e.to_string())
    }
}

impl From<isoflow::mesher::MeshIoError> for CliError {
    fn from(e: isoflow::mesher::MeshIoError) -> Self {
        CliError::Other(e.to_string())
    }
}
