use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::config::RunConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Status {
    Pass,
    Fail,
    Skipped,
}

/// A quantity the verdict cites: the stage passes only if `value ≤ tolerance`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Residual {
    pub name: String,
    pub value: f64,
    pub tolerance: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub argmax: Option<Vec<f64>>,
}

impl Residual {
    pub fn new(name: &str, value: f64, tolerance: f64, argmax: Option<Vec<f64>>) -> Self {
        Self {
            name: name.into(),
            value,
            tolerance,
            argmax,
        }
    }

    pub fn holds(&self) -> bool {
        self.value <= self.tolerance
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageVerdict {
    pub name: String,
    pub status: Status,
    pub residuals: Vec<Residual>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub witness: Option<Value>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub notices: Vec<String>,
    #[serde(default, skip_serializing_if = "Value::is_null")]
    pub data: Value,
}

impl StageVerdict {
    pub fn new(name: &str) -> Self {
        Self {
            name: name.into(),
            status: Status::Pass,
            residuals: Vec::new(),
            witness: None,
            notices: Vec::new(),
            data: Value::Null,
        }
    }

    pub fn skipped(name: &str, reason: impl Into<String>) -> Self {
        Self {
            status: Status::Skipped,
            notices: vec![reason.into()],
            ..Self::new(name)
        }
    }

    /// A stage whose computation could not be completed.
    pub fn failed(name: &str, reason: impl Into<String>) -> Self {
        Self {
            status: Status::Fail,
            notices: vec![reason.into()],
            ..Self::new(name)
        }
    }

    pub fn push(&mut self, r: Residual) {
        self.residuals.push(r);
    }

    /// Settles the status from the residuals unless already failed or skipped.
    pub fn settle(mut self) -> Self {
        if self.status == Status::Pass && !self.residuals.iter().all(Residual::holds) {
            self.status = Status::Fail;
        }
        self
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metadata {
    pub toolkit_version: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub command: String,
    pub status: Status,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub first_failure: Option<String>,
    pub stages: Vec<StageVerdict>,
    /// Files written next to the report, relative to the output directory.
    pub files: Vec<String>,
    pub config: RunConfig,
    pub metadata: Metadata,
}

impl Report {
    pub fn new(command: &str, config: &RunConfig, stages: Vec<StageVerdict>, files: Vec<String>) -> Self {
        let first_failure = stages.iter().find(|s| s.status == Status::Fail).map(|s| s.name.clone());
        Self {
            command: command.into(),
            status: if first_failure.is_some() { Status::Fail } else { Status::Pass },
            first_failure,
            stages,
            files,
            config: config.clone(),
            metadata: Metadata {
                toolkit_version: env!("CARGO_PKG_VERSION").into(),
            },
        }
    }

    pub fn passed(&self) -> bool {
        self.status == Status::Pass
    }

    pub fn stage(&self, name: &str) -> Option<&StageVerdict> {
        self.stages.iter().find(|s| s.name == name)
    }

    /// Every passing stage's residuals satisfy their tolerances.
    pub fn is_self_consistent(&self) -> bool {
        self.stages
            .iter()
            .filter(|s| s.status == Status::Pass)
            .all(|s| s.residuals.iter().all(Residual::holds))
    }
}
