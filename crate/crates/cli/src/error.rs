use std::fmt;

use loskit::eval::EvalError;
use loskit::features::FeatureError;
use loskit::learn::LearnError;
use loskit::model::LoadError;
use loskit::synth::SynthError;

/// Exit status 1 marks bad input or configuration, 2 a failure while working.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CliError {
    pub exit: u8,
    pub code: &'static str,
    pub message: String,
}

impl CliError {
    pub fn validation(code: &'static str, message: impl Into<String>) -> Self {
        Self { exit: 1, code, message: message.into() }
    }

    pub fn runtime(code: &'static str, message: impl Into<String>) -> Self {
        Self { exit: 2, code, message: message.into() }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "ERROR {}: {}", self.code, self.message)
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::runtime("Io", e.to_string())
    }
}

impl From<EvalError> for CliError {
    fn from(e: EvalError) -> Self {
        let code = match &e {
            EvalError::EmptyRole { .. } => "EmptyRole",
            EvalError::ConfigInvalid(_) => "ConfigInvalid",
            EvalError::Feature(_) => "FeatureError",
            EvalError::Learn(_) => "LearnError",
            _ => "EvalError",
        };
        match e {
            EvalError::EmptyRole { .. } | EvalError::ConfigInvalid(_) => CliError::validation(code, e.to_string()),
            _ => CliError::runtime(code, e.to_string()),
        }
    }
}

impl From<FeatureError> for CliError {
    fn from(e: FeatureError) -> Self {
        match e {
            FeatureError::UnknownMethod(_) => CliError::validation("UnknownMethod", e.to_string()),
            FeatureError::ConfigInvalid(_) => CliError::validation("ConfigInvalid", e.to_string()),
            FeatureError::MissingTable(_) => CliError::validation("MissingTable", e.to_string()),
            FeatureError::NoTrainRows => CliError::validation("EmptyRole", e.to_string()),
            FeatureError::Format(_) => CliError::validation("BadInput", e.to_string()),
            FeatureError::Io(_) => CliError::runtime("Io", e.to_string()),
            _ => CliError::runtime("FeatureError", e.to_string()),
        }
    }
}

impl From<LearnError> for CliError {
    fn from(e: LearnError) -> Self {
        match e {
            LearnError::ConfigInvalid(_) => CliError::validation("ConfigInvalid", e.to_string()),
            LearnError::SchemaMismatch { .. } => CliError::validation("SchemaMismatch", e.to_string()),
            LearnError::Format(_) => CliError::validation("BadInput", e.to_string()),
            _ => CliError::runtime("LearnError", e.to_string()),
        }
    }
}

impl From<LoadError> for CliError {
    fn from(e: LoadError) -> Self {
        CliError::validation("BadInput", e.to_string())
    }
}

impl From<SynthError> for CliError {
    fn from(e: SynthError) -> Self {
        match e {
            SynthError::ConfigInvalid(_) => CliError::validation("ConfigInvalid", e.to_string()),
            _ => CliError::runtime("SynthError", e.to_string()),
        }
    }
}
