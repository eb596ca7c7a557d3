use mallm_gan_core::evaluation::EvalError;
use mallm_gan_core::generator::GenerateError;
use mallm_gan_core::llm::LlmError;
use mallm_gan_core::table::TableError;
use mallm_gan_core::trainer::TrainError;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("provider: {0}")]
    Provider(String),
    #[error("{0}")]
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Provider(_) => 3,
            CliError::Runtime(_) => 4,
        }
    }

    pub fn io(what: &str, e: std::io::Error) -> Self {
        CliError::Runtime(format!("{what}: {e}"))
    }
}

impl From<TableError> for CliError {
    fn from(e: TableError) -> Self {
        match e {
            TableError::Io { .. } | TableError::Csv(_) | TableError::Schema(_) | TableError::Value { .. } => {
                CliError::Usage(e.to_string())
            }
            other => CliError::Runtime(other.to_string()),
        }
    }
}

impl From<LlmError> for CliError {
    fn from(e: LlmError) -> Self {
        match e {
            LlmError::InvalidRequest(_) => CliError::Usage(e.to_string()),
            LlmError::Mock(_) => CliError::Runtime(e.to_string()),
            other => CliError::Provider(other.to_string()),
        }
    }
}

impl From<GenerateError> for CliError {
    fn from(e: GenerateError) -> Self {
        match e {
            GenerateError::Provider(p) => p.into(),
            GenerateError::AllChunksFailed(_) | GenerateError::Exhausted { .. } => CliError::Provider(e.to_string()),
            other => CliError::Runtime(other.to_string()),
        }
    }
}

impl From<TrainError> for CliError {
    fn from(e: TrainError) -> Self {
        match e {
            TrainError::Config(m) => CliError::Usage(format!("invalid configuration: {m}")),
            TrainError::Provider(p) => p.into(),
            TrainError::Generate(g) => g.into(),
            // Skips come from generator or optimizer calls that kept failing.
            TrainError::Aborted { .. } => CliError::Provider(e.to_string()),
            other => CliError::Runtime(other.to_string()),
        }
    }
}

impl From<EvalError> for CliError {
    fn from(e: EvalError) -> Self {
        match e {
            EvalError::Io(io) => CliError::io("writing report", io),
            other => CliError::Usage(other.to_string()),
        }
    }
}
