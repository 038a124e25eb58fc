//! Strict experiment configuration. Every object rejects unknown keys, and
//! parse errors carry the line, column and field path of the offending value.

use std::collections::BTreeSet;
use std::fmt;
use std::path::PathBuf;

use raretail::large_deviations::CountingProcess;
use raretail::mc::Budget;
use raretail::rare_sets::RareSetSpec;
use raretail::risk_engine::RiskModel;
use raretail::scalar_laws::ScalarLaw;
use raretail::vector_laws::VectorLaw;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub workers: Option<usize>,
    /// Replications per work chunk; results depend on it, so it is part of
    /// the experiment rather than an override.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub chunk: Option<u64>,
    /// Default budget for entries without their own.
    #[serde(default = "default_budget")]
    pub budget: Budget,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out_dir: Option<PathBuf>,
    pub experiments: Vec<ExperimentEntry>,
}

fn default_budget() -> Budget {
    Budget::crude(100_000)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentEntry {
    pub name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub budget: Option<Budget>,
    pub experiment: Experiment,
}

/// Either explicit values or a probability level to solve for.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum XSpec {
    Values(Vec<f64>),
    Target(f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Experiment {
    ClassDiag {
        law: ScalarLaw,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        grid: Option<Vec<f64>>,
    },
    Maxsum {
        law1: VectorLaw,
        law2: VectorLaw,
        set: RareSetSpec,
        x_grid: Vec<f64>,
    },
    Nfold {
        law: VectorLaw,
        set: RareSetSpec,
        n: usize,
        x_grid: Vec<f64>,
    },
    Kesten {
        law: VectorLaw,
        set: RareSetSpec,
        c: f64,
        n_max: usize,
        x_grid: Vec<f64>,
        /// Rerun at this multiple of the budget and compare the sups.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        stability_factor: Option<f64>,
        #[serde(default = "tol_kesten")]
        tol: f64,
    },
    /// `x` targets are levels of `P[X ∈ xA]`.
    StoppedSum {
        law: VectorLaw,
        tau: ScalarLaw,
        set: RareSetSpec,
        x: XSpec,
        #[serde(default = "tol_sbj")]
        tol: f64,
    },
    PldFixed {
        law: VectorLaw,
        set: RareSetSpec,
        n_list: Vec<u64>,
        x_mults: Vec<f64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        gamma: Option<f64>,
        #[serde(default = "tol_surface")]
        tol: f64,
    },
    PldRandom {
        law: VectorLaw,
        arrivals: CountingProcess,
        set: RareSetSpec,
        t_list: Vec<f64>,
        x_mults: Vec<f64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        gamma: Option<f64>,
        #[serde(default = "tol_random_surface")]
        tol: f64,
        /// Fixed-n surface expected to coincide cell by cell.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        compare_fixed_n: Option<Vec<u64>>,
    },
    /// `x` targets are levels of the integral asymptote.
    Entrance {
        model: RiskModel,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        set: Option<RareSetSpec>,
        x: XSpec,
        t_list: Vec<f64>,
        #[serde(default = "tol_entrance")]
        tol: f64,
    },
    Ruin {
        model: RiskModel,
        x: XSpec,
        t_list: Vec<f64>,
        #[serde(default = "tol_entrance")]
        tol: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        coupling_paths: Option<u64>,
    },
    Assumption62 {
        model: RiskModel,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        set: Option<RareSetSpec>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        c: Option<f64>,
        t_star: f64,
        #[serde(default = "default_n_cap")]
        n_cap: usize,
    },
    WeightedUniformity {
        law: VectorLaw,
        set: RareSetSpec,
        n: usize,
        a: f64,
        b: f64,
        c_samples: usize,
        x_grid: Vec<f64>,
    },
    /// Membership through the projection against the defining inequalities.
    ProjectionCheck {
        pairs: u64,
        dim: usize,
        #[serde(default = "default_delta")]
        delta: f64,
    },
    /// Crude against splitting on shifted events, the zero-hit bound and a
    /// rerun comparison.
    EngineCheck { events: usize, p: f64 },
}

fn tol_kesten() -> f64 {
    0.10
}

fn tol_sbj() -> f64 {
    0.20
}

fn tol_surface() -> f64 {
    0.15
}

fn tol_random_surface() -> f64 {
    0.20
}

fn tol_entrance() -> f64 {
    0.25
}

fn default_n_cap() -> usize {
    100
}

fn default_delta() -> f64 {
    1e-4
}

impl Experiment {
    pub fn kind(&self) -> &'static str {
        match self {
            Self::ClassDiag { .. } => "class_diag",
            Self::Maxsum { .. } => "maxsum",
            Self::Nfold { .. } => "nfold",
            Self::Kesten { .. } => "kesten",
            Self::StoppedSum { .. } => "stopped_sum",
            Self::PldFixed { .. } => "pld_fixed",
            Self::PldRandom { .. } => "pld_random",
            Self::Entrance { .. } => "entrance",
            Self::Ruin { .. } => "ruin",
            Self::Assumption62 { .. } => "assumption62",
            Self::WeightedUniformity { .. } => "weighted_uniformity",
            Self::ProjectionCheck { .. } => "projection_check",
            Self::EngineCheck { .. } => "engine_check",
        }
    }
}

/// A config that failed to parse or violates a structural rule.
#[derive(Debug, Clone, PartialEq)]
pub struct SchemaError {
    pub line: usize,
    pub column: usize,
    pub path: String,
    pub message: String,
}

impl fmt::Display for SchemaError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.line > 0 {
            write!(f, "line {}, column {}: ", self.line, self.column)?;
        }
        if !self.path.is_empty() && self.path != "." {
            write!(f, "at `{}`: ", self.path)?;
        }
        f.write_str(&self.message)
    }
}

impl std::error::Error for SchemaError {}

fn structural(path: impl Into<String>, message: impl Into<String>) -> SchemaError {
    SchemaError {
        line: 0,
        column: 0,
        path: path.into(),
        message: message.into(),
    }
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> Result<Self, SchemaError> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let cfg: Self = serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            let inner = e.into_inner();
            SchemaError {
                line: inner.line(),
                column: inner.column(),
                path,
                message: strip_position(&inner),
            }
        })?;
        cfg.check_structure()?;
        Ok(cfg)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    fn check_structure(&self) -> Result<(), SchemaError> {
        if self.experiments.is_empty() {
            return Err(structural("experiments", "experiment list is empty"));
        }
        let mut seen = BTreeSet::new();
        for (i, e) in self.experiments.iter().enumerate() {
            if e.name.trim().is_empty() {
                return Err(structural(
                    format!("experiments[{i}].name"),
                    "name is empty",
                ));
            }
            if !seen.insert(e.name.as_str()) {
                return Err(structural(
                    format!("experiments[{i}].name"),
                    format!("duplicate name `{}`", e.name),
                ));
            }
        }
        if self.workers == Some(0) {
            return Err(structural("workers", "workers must be at least 1"));
        }
        if self.chunk == Some(0) {
            return Err(structural("chunk", "chunk must be at least 1"));
        }
        Ok(())
    }
}

/// serde_json appends " at line L column C"; the position is reported
/// separately.
fn strip_position(e: &serde_json::Error) -> String {
    let s = e.to_string();
    match s.rfind(" at line ") {
        Some(i) => s[..i].to_string(),
        None => s,
    }
}
