use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::wakeup::{GbrtParams, DEFAULT_ACTIVATION_ROUND, DEFAULT_OVERSAMPLE, DEFAULT_THRESHOLD};

/// Everything a run needs, read from one TOML file. Relative paths are
/// resolved against the file's directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub input_path: PathBuf,
    pub output_dir: PathBuf,
    pub seed: u64,
    pub roster: RosterConfig,
    pub wake: WakeConfig,
    pub gbrt: GbrtParams,
    pub strategies: StrategyToggles,
    pub ftl_regularizer: f64,
    pub fixed_share_alpha: f64,
    /// Upper bound on the BOA learning rates.
    pub eta_max: f64,
    pub kalman: KalmanConfig,
    /// Log SHAP attributions of every classifier prediction.
    pub shap: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RosterConfig {
    /// Specialists woken when the aggregation is expected to run too hot.
    pub cold: Vec<String>,
    /// Specialists woken when it is expected to run too cold.
    pub warm: Vec<String>,
    /// Ensemble quantile experts feeding the spread features.
    pub ensemble: Vec<String>,
    /// Expert tracked by the Kalman feature, first available wins.
    pub kalman_experts: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WakeConfig {
    pub threshold: f64,
    pub activation_round: usize,
    pub oversample: u32,
    /// Retrain every this many rounds once active.
    pub retrain_stride: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StrategyToggles {
    pub boa: bool,
    pub boa_sleeping: bool,
    pub ftl: bool,
    pub ftl_regularized: bool,
    pub fixed_share: bool,
    pub oracle_class: bool,
    pub oracle_expert: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct KalmanConfig {
    pub process_noise: f64,
    pub observation_noise: f64,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            input_path: PathBuf::from("input.csv"),
            output_dir: PathBuf::from("out"),
            seed: 0,
            roster: RosterConfig::default(),
            wake: WakeConfig::default(),
            gbrt: GbrtParams::default(),
            strategies: StrategyToggles::default(),
            ftl_regularizer: 0.0025,
            fixed_share_alpha: 0.01,
            eta_max: 1.0,
            kalman: KalmanConfig::default(),
            shap: true,
        }
    }
}

impl Default for RosterConfig {
    fn default() -> Self {
        let s = |v: &[&str]| v.iter().map(|x| x.to_string()).collect();
        Self {
            cold: s(&["Q10", "Q30"]),
            warm: s(&["Q70", "Q90"]),
            ensemble: s(&["Q10", "Q30", "Q50", "Q70", "Q90"]),
            kalman_experts: s(&["mos.aro", "mos.arp"]),
        }
    }
}

impl Default for WakeConfig {
    fn default() -> Self {
        Self {
            threshold: DEFAULT_THRESHOLD,
            activation_round: DEFAULT_ACTIVATION_ROUND,
            oversample: DEFAULT_OVERSAMPLE,
            retrain_stride: 1,
        }
    }
}

impl Default for StrategyToggles {
    fn default() -> Self {
        Self {
            boa: true,
            boa_sleeping: true,
            ftl: true,
            ftl_regularized: true,
            fixed_share: true,
            oracle_class: true,
            oracle_expert: true,
        }
    }
}

impl Default for KalmanConfig {
    fn default() -> Self {
        Self { process_noise: 0.01, observation_noise: 1.0 }
    }
}

impl RunConfig {
    pub fn from_toml_str(s: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(s).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg = Self::from_toml_str(&text)?;
        let base = path.parent().unwrap_or(Path::new("."));
        if cfg.input_path.is_relative() {
            cfg.input_path = base.join(&cfg.input_path);
        }
        if cfg.output_dir.is_relative() {
            cfg.output_dir = base.join(&cfg.output_dir);
        }
        Ok(cfg)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string_pretty(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        let w = &self.wake;
        if !(w.threshold > 0.0 && w.threshold.is_finite()) {
            return Err(Error::param("wake.threshold", format!("must be positive, got {}", w.threshold)));
        }
        if w.activation_round == 0 {
            return Err(Error::param("wake.activation_round", "must be at least 1"));
        }
        if w.oversample == 0 {
            return Err(Error::param("wake.oversample", "must be at least 1"));
        }
        if w.retrain_stride == 0 {
            return Err(Error::param("wake.retrain_stride", "must be at least 1"));
        }
        self.gbrt.validate()?;
        if !(self.ftl_regularizer >= 0.0 && self.ftl_regularizer.is_finite()) {
            return Err(Error::param("ftl_regularizer", format!("{}", self.ftl_regularizer)));
        }
        if !(0.0..=1.0).contains(&self.fixed_share_alpha) {
            return Err(Error::param("fixed_share_alpha", format!("{} outside [0, 1]", self.fixed_share_alpha)));
        }
        if !(self.eta_max > 0.0 && self.eta_max.is_finite()) {
            return Err(Error::param("eta_max", format!("{}", self.eta_max)));
        }
        if let Some(n) = self.roster.cold.iter().find(|c| self.roster.warm.contains(c)) {
            return Err(Error::Config(format!("expert {n} is listed as both cold and warm")));
        }
        if !(self.kalman.process_noise >= 0.0) || !(self.kalman.observation_noise > 0.0) {
            return Err(Error::param("kalman", "process noise ≥ 0 and observation noise > 0 required"));
        }
        Ok(())
    }

    /// The classifier is only trained when some strategy consumes it.
    pub fn needs_classifier(&self) -> bool {
        let s = &self.strategies;
        s.boa_sleeping || s.ftl || s.ftl_regularized
    }
}
