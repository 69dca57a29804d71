use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{path}: {source}")]
    MatrixFile {
        path: String,
        source: hjsvd::io::IoError,
    },
    #[error("{path}: {source}")]
    File {
        path: String,
        source: std::io::Error,
    },
    #[error(transparent)]
    Strategy(#[from] hjsvd::strategy::StrategyError),
    #[error(transparent)]
    Driver(#[from] hjsvd::driver::DriverError),
    #[error(transparent)]
    Dist(#[from] hjsvd::distsim::DistError),
    #[error(transparent)]
    Testgen(#[from] hjsvd::testgen::TestgenError),
    #[error(transparent)]
    Survey(#[from] hjsvd::rotation::SurveyError),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_)
            | CliError::Driver(hjsvd::driver::DriverError::Config(_))
            | CliError::Dist(hjsvd::distsim::DistError::Config(_)) => 2,
            CliError::MatrixFile { .. } | CliError::File { .. } => 4,
            _ => 3,
        }
    }
}

pub fn read_file(path: &std::path::Path) -> Result<String, CliError> {
    std::fs::read_to_string(path).map_err(|source| CliError::File {
        path: path.display().to_string(),
        source,
    })
}

pub fn write_file(path: &std::path::Path, contents: &[u8]) -> Result<(), CliError> {
    std::fs::write(path, contents).map_err(|source| CliError::File {
        path: path.display().to_string(),
        source,
    })
}
