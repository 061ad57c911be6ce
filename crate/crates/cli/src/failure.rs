use std::fmt;
use std::path::{Path, PathBuf};

use loadcast::evaluation::EvalError;
use loadcast::featsel::FeatselError;
use loadcast::features::FeatureError;
use loadcast::ingest::IngestError;
use loadcast::neural::NeuralError;
use loadcast::sequences::SequenceError;
use loadcast::training::TrainError;

/// A failed subcommand, mapped onto the process exit code.
#[derive(Debug)]
pub enum Failure {
    /// Exit 2.
    Args(String),
    /// Exit 3.
    Missing(PathBuf),
    /// Exit 4.
    Numeric(String),
    /// Exit 1.
    Other(String),
}

impl Failure {
    pub fn code(&self) -> i32 {
        match self {
            Failure::Args(_) => 2,
            Failure::Missing(_) => 3,
            Failure::Numeric(_) => 4,
            Failure::Other(_) => 1,
        }
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Failure::Args(m) => write!(f, "invalid arguments: {m}"),
            Failure::Missing(p) => write!(f, "missing input: {}", p.display()),
            Failure::Numeric(m) => write!(f, "numeric failure: {m}"),
            Failure::Other(m) => f.write_str(m),
        }
    }
}

/// Fails with exit code 3 unless every path exists.
pub fn require<'a>(paths: impl IntoIterator<Item = &'a Path>) -> Result<(), Failure> {
    for p in paths {
        if !p.exists() {
            return Err(Failure::Missing(p.to_path_buf()));
        }
    }
    Ok(())
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Other(e.to_string())
    }
}

impl From<csv::Error> for Failure {
    fn from(e: csv::Error) -> Self {
        Failure::Other(e.to_string())
    }
}

impl From<serde_json::Error> for Failure {
    fn from(e: serde_json::Error) -> Self {
        Failure::Other(e.to_string())
    }
}

impl From<IngestError> for Failure {
    fn from(e: IngestError) -> Self {
        match e {
            IngestError::InvalidConfig(m) => Failure::Args(m),
            e => Failure::Other(e.to_string()),
        }
    }
}

impl From<FeatureError> for Failure {
    fn from(e: FeatureError) -> Self {
        Failure::Other(e.to_string())
    }
}

impl From<SequenceError> for Failure {
    fn from(e: SequenceError) -> Self {
        match e {
            SequenceError::InvalidWindow(_) | SequenceError::InvalidRatios(_) | SequenceError::UnknownFeature(_) => {
                Failure::Args(e.to_string())
            }
            e => Failure::Other(e.to_string()),
        }
    }
}

impl From<FeatselError> for Failure {
    fn from(e: FeatselError) -> Self {
        match e {
            FeatselError::InvalidConfig(m) => Failure::Args(m),
            FeatselError::Sequence(s) => s.into(),
            e => Failure::Other(e.to_string()),
        }
    }
}

impl From<NeuralError> for Failure {
    fn from(e: NeuralError) -> Self {
        match e {
            NeuralError::NonFinite => Failure::Numeric(e.to_string()),
            NeuralError::IllegalSpec(m) => Failure::Args(m),
            e => Failure::Other(e.to_string()),
        }
    }
}

impl From<TrainError> for Failure {
    fn from(e: TrainError) -> Self {
        match e {
            TrainError::DivergenceDetected { .. } => Failure::Numeric(e.to_string()),
            TrainError::InvalidConfig(m) => Failure::Args(m),
            TrainError::Neural(n) => n.into(),
            TrainError::Sequence(s) => s.into(),
            e => Failure::Other(e.to_string()),
        }
    }
}

impl From<EvalError> for Failure {
    fn from(e: EvalError) -> Self {
        match e {
            EvalError::SingularSystem | EvalError::ZeroNaive => Failure::Numeric(e.to_string()),
            EvalError::UnknownModel(_) => Failure::Args(e.to_string()),
            EvalError::Train(t) => t.into(),
            EvalError::Neural(n) => n.into(),
            e => Failure::Other(e.to_string()),
        }
    }
}
