use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use renewal_core::passage::PerturbedWalkModel;
use renewal_core::trial::{GKind, StaggeredExponentialModel};
use renewal_core::verification::{EventPredicate, DEFAULT_Q};

use crate::error::CliError;

/// Experiment selected by the subcommand.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentKind {
    Simulate,
    Constants,
    VerifyThm1,
    VerifyThm3,
    VerifyThm4,
    DiagLemma1,
    DiagLemma3,
    ExampleFwci,
    ExampleRst,
}

impl ExperimentKind {
    pub fn name(self) -> &'static str {
        match self {
            Self::Simulate => "simulate",
            Self::Constants => "constants",
            Self::VerifyThm1 => "verify-thm1",
            Self::VerifyThm3 => "verify-thm3",
            Self::VerifyThm4 => "verify-thm4",
            Self::DiagLemma1 => "diag-lemma1",
            Self::DiagLemma3 => "diag-lemma3",
            Self::ExampleFwci => "example-fwci",
            Self::ExampleRst => "example-rst",
        }
    }

    fn needs_walk(self) -> bool {
        !matches!(self, Self::ExampleFwci | Self::ExampleRst)
    }
}

fn default_reps() -> usize {
    10_000
}

fn default_q() -> f64 {
    DEFAULT_Q
}

fn default_epsilon() -> f64 {
    0.5
}

fn default_b() -> f64 {
    0.5
}

fn default_h() -> f64 {
    0.2
}

fn default_c() -> f64 {
    1.96
}

fn default_alpha() -> f64 {
    0.04
}

fn default_predicate() -> EventPredicate {
    EventPredicate::Always
}

/// Everything needed to reproduce one experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Set by the subcommand when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kind: Option<ExperimentKind>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_reps")]
    pub reps: usize,
    /// Backward-functional replications; defaults to `reps`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub backward_reps: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub backward_depth: Option<usize>,
    /// Level for single-level experiments.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub a: Option<f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub a_grid: Vec<f64>,
    #[serde(default = "default_b")]
    pub b: f64,
    /// Threshold on `ζ_n`; defaults to the median of its limit law.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub y: Option<f64>,
    #[serde(default = "default_predicate")]
    pub predicate: EventPredicate,
    #[serde(default = "default_q")]
    pub q: f64,
    #[serde(default = "default_epsilon")]
    pub epsilon: f64,
    /// Fixed-width interval half-width.
    #[serde(default = "default_h")]
    pub h: f64,
    /// Normal percentile of the fixed-width interval.
    #[serde(default = "default_c")]
    pub c: f64,
    /// Target size when the repeated test's boundary is calibrated.
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub horizon: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub calibration_reps: Option<usize>,
    /// Output directory; `--out` takes precedence.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model: Option<PerturbedWalkModel>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trial: Option<StaggeredExponentialModel>,
}

impl ExperimentConfig {
    /// A config with every optional field at its default.
    pub fn new(kind: ExperimentKind) -> Self {
        Self {
            kind: Some(kind),
            seed: 0,
            reps: default_reps(),
            backward_reps: None,
            backward_depth: None,
            a: None,
            a_grid: Vec::new(),
            b: default_b(),
            y: None,
            predicate: default_predicate(),
            q: default_q(),
            epsilon: default_epsilon(),
            h: default_h(),
            c: default_c(),
            alpha: default_alpha(),
            horizon: None,
            calibration_reps: None,
            output: None,
            model: None,
            trial: None,
        }
    }

    pub fn from_toml(text: &str) -> Result<Self, CliError> {
        let de = toml::Deserializer::new(text);
        serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            CliError::Usage(format!("at `{path}`: {}", e.into_inner().message().trim()))
        })
    }

    pub fn from_path(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serialises")
    }

    pub fn kind(&self) -> Result<ExperimentKind, CliError> {
        self.kind.ok_or_else(|| CliError::Usage("experiment kind not set".into()))
    }

    pub fn backward_reps(&self) -> usize {
        self.backward_reps.unwrap_or(self.reps)
    }

    pub fn walk_model(&self) -> Result<&PerturbedWalkModel, CliError> {
        self.model.as_ref().ok_or_else(|| CliError::Usage("missing `model` table".into()))
    }

    pub fn trial_model(&self) -> Result<&StaggeredExponentialModel, CliError> {
        self.trial.as_ref().ok_or_else(|| CliError::Usage("missing `trial` table".into()))
    }

    /// Level for single-level experiments: `a`, else the last grid point.
    pub fn level(&self) -> Result<f64, CliError> {
        self.a
            .or_else(|| self.a_grid.last().copied())
            .ok_or_else(|| CliError::Usage("set `a` (or `a_grid`)".into()))
    }

    /// Grid for multi-level experiments: `a_grid`, else `[a]`.
    pub fn grid(&self) -> Result<Vec<f64>, CliError> {
        if !self.a_grid.is_empty() {
            Ok(self.a_grid.clone())
        } else {
            self.a.map(|a| vec![a]).ok_or_else(|| CliError::Usage("set `a_grid` (or `a`)".into()))
        }
    }

    /// Checks every parameter the experiment will read, before sampling.
    pub fn validate(&self) -> Result<(), CliError> {
        let usage = |field: &str, msg: String| Err(CliError::Usage(format!("at `{field}`: {msg}")));
        let kind = self.kind()?;
        if self.reps < 2 {
            return usage("reps", format!("need at least 2, got {}", self.reps));
        }
        if self.backward_reps() < 2 {
            return usage("backward_reps", "need at least 2".into());
        }
        if self.backward_depth == Some(0) {
            return usage("backward_depth", "must be >= 1".into());
        }
        for (i, a) in self.a.iter().chain(&self.a_grid).enumerate() {
            if !(*a > 0.0 && a.is_finite()) {
                let field = if self.a.is_some() && i == 0 { "a".to_string() } else { "a_grid".to_string() };
                return usage(&field, format!("levels must be finite and > 0, got {a}"));
            }
        }
        if kind.needs_walk() {
            let model = self.walk_model()?;
            model.validate().map_err(|e| CliError::Usage(format!("at `model`: {e}")))?;
        }
        match kind {
            ExperimentKind::Simulate | ExperimentKind::VerifyThm3 | ExperimentKind::VerifyThm1 => {
                self.level()?;
            }
            ExperimentKind::VerifyThm4 | ExperimentKind::DiagLemma1 | ExperimentKind::DiagLemma3 => {
                self.grid()?;
            }
            _ => {}
        }
        if kind == ExperimentKind::VerifyThm1 && !(self.b > 0.0) {
            return usage("b", format!("must be > 0, got {}", self.b));
        }
        if matches!(kind, ExperimentKind::DiagLemma1 | ExperimentKind::DiagLemma3) && !(self.q > 1.0 / 3.0 && self.q < 0.5) {
            return usage("q", format!("must lie in (1/3, 1/2), got {}", self.q));
        }
        if kind == ExperimentKind::DiagLemma3 && !(self.epsilon > 0.0) {
            return usage("epsilon", format!("must be > 0, got {}", self.epsilon));
        }
        if matches!(kind, ExperimentKind::ExampleFwci | ExperimentKind::ExampleRst) {
            let trial = self.trial_model()?;
            trial.validate().map_err(|e| CliError::Usage(format!("at `trial`: {e}")))?;
            let want = if kind == ExperimentKind::ExampleFwci { GKind::FixedWidthCi } else { GKind::RepeatedLrt };
            if trial.g != want {
                return usage("trial.g", format!("{} needs {want:?}", kind.name()));
            }
        }
        if kind == ExperimentKind::ExampleFwci && !(self.h > 0.0 && self.c > 0.0) {
            return usage("h", "h and c must be > 0".into());
        }
        if kind == ExperimentKind::ExampleRst {
            if self.horizon.is_none_or(|h| h == 0) {
                return usage("horizon", "example-rst needs a positive horizon".into());
            }
            if self.a.is_none() && !(self.alpha > 0.0 && self.alpha < 1.0) {
                return usage("alpha", format!("must lie in (0, 1), got {}", self.alpha));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unknown_field_reports_path() {
        let err = ExperimentConfig::from_toml("reps = 10\n[model]\nincrement_law = { kind = \"exponential\", rate = 1.0 }\nbogus = 1\n")
            .unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("model"), "{msg}");
    }

    #[test]
    fn validation_names_the_field() {
        let mut c = ExperimentConfig::new(ExperimentKind::DiagLemma1);
        c.model = Some(PerturbedWalkModel::tm1());
        c.a_grid = vec![50.0];
        c.q = 0.6;
        assert!(c.validate().unwrap_err().to_string().contains("`q`"));
    }
}
