//! Run configuration: one TOML document with every field defaulted.

use std::f64::consts::PI;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sfq_core::model::ModelError;
use sfq_core::optimizer::{GateSpec, IntRange, OptimizerSettings};
use sfq_core::schedule::STANDARD_CLOCK_MULTIPLES;
use sfq_core::{CircuitParams, CoherenceRates, Coupling};

use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    #[default]
    Csv,
    Json,
}

impl std::str::FromStr for Format {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "csv" => Ok(Format::Csv),
            "json" => Ok(Format::Json),
            other => Err(format!("unknown format `{other}` (expected csv or json)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CoherenceConfig {
    pub t1_us: f64,
    pub t2_us: f64,
}

impl Default for CoherenceConfig {
    fn default() -> Self {
        Self {
            t1_us: CoherenceRates::DEFAULT_T1_NS / 1e3,
            t2_us: CoherenceRates::DEFAULT_T2_NS / 1e3,
        }
    }
}

impl CoherenceConfig {
    pub fn rates(&self) -> Result<CoherenceRates, ModelError> {
        CoherenceRates::from_t1_t2(self.t1_us * 1e3, self.t2_us * 1e3)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GateConfig {
    pub coupling: Coupling,
    /// Defaults to 0.15 (inductive) or 0.03 (capacitive) when absent.
    pub theta_kick: Option<f64>,
    pub theta_targ: f64,
    pub clock_multiples: Vec<u32>,
    pub n_range: IntRange,
    pub r_range: IntRange,
}

impl Default for GateConfig {
    fn default() -> Self {
        Self {
            coupling: Coupling::Inductive,
            theta_kick: None,
            theta_targ: PI,
            clock_multiples: STANDARD_CLOCK_MULTIPLES.to_vec(),
            n_range: IntRange(1, 6),
            r_range: IntRange(1, 5),
        }
    }
}

impl GateConfig {
    pub fn spec(&self) -> GateSpec {
        GateSpec {
            coupling: self.coupling,
            theta_kick: self.theta_kick.unwrap_or(GateSpec::default_kick(self.coupling)),
            theta_targ: self.theta_targ,
            clock_multiples: self.clock_multiples.clone(),
            n_range: self.n_range,
            r_range: self.r_range,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepConfig {
    /// Kick angles for `sweep kick`; coupling-dependent defaults when absent.
    pub kick_angles: Option<Vec<f64>>,
    /// Target angles for `sweep target`; five points up to π when absent.
    pub target_angles: Option<Vec<f64>>,
}

impl SweepConfig {
    pub fn kick_values(&self, coupling: Coupling) -> Vec<f64> {
        self.kick_angles.clone().unwrap_or_else(|| match coupling {
            Coupling::Inductive => vec![0.05, 0.1, 0.15, 0.2, 0.25],
            Coupling::Capacitive => vec![0.01, 0.02, 0.03, 0.04, 0.05],
        })
    }

    pub fn target_values(&self) -> Vec<f64> {
        self.target_angles
            .clone()
            .unwrap_or_else(|| (1..=5).map(|k| k as f64 * PI / 5.0).collect())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputConfig {
    pub dir: PathBuf,
    pub format: Format,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self {
            dir: PathBuf::from("results"),
            format: Format::Csv,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub circuit: CircuitParams,
    pub coherence: CoherenceConfig,
    pub gate: GateConfig,
    pub sweep: SweepConfig,
    pub output: OutputConfig,
    pub seed: u64,
    pub trial_budget: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            circuit: CircuitParams::default(),
            coherence: CoherenceConfig::default(),
            gate: GateConfig::default(),
            sweep: SweepConfig::default(),
            output: OutputConfig::default(),
            seed: 0,
            trial_budget: OptimizerSettings::default().trial_budget,
        }
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self, CliError> {
        toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        Self::from_toml(&text).map_err(|e| match e {
            CliError::Config(msg) => CliError::Config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    pub fn settings(&self) -> OptimizerSettings {
        OptimizerSettings {
            seed: self.seed,
            trial_budget: self.trial_budget,
            ..OptimizerSettings::default()
        }
    }

    /// Checks everything that can be checked without running the model.
    pub fn validate(&self) -> Result<(), CliError> {
        self.circuit.validate().map_err(|e| CliError::Config(e.to_string()))?;
        self.coherence.rates().map_err(|e| CliError::Config(e.to_string()))?;
        self.gate.spec().validate().map_err(|e| CliError::Config(e.to_string()))?;
        if self.trial_budget == 0 {
            return Err(CliError::Config("`trial_budget` must be positive".into()));
        }
        Ok(())
    }
}
