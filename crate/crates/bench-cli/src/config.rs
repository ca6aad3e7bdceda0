//! Experiment configuration: the JSON schema, validation, and the
//! `BENCH_SEED` environment override.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};
use snvrg::objectives::{make_problem, Objective, ProblemSpec};

pub const ALGORITHM_NAMES: &[&str] = &["snvrg", "snvrg-pl", "gd", "sgd", "svrg", "scsg"];

/// One optimizer entry. `hyperparameters` is a flat numeric map whose keys
/// depend on the algorithm; anything omitted falls back to a documented
/// default (for `snvrg`/`snvrg-pl` in paper mode, the derived batch and
/// epoch counts).
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct AlgorithmSpec {
    pub name: String,
    /// Artifact directory name; defaults to `name`. Needed when the same
    /// algorithm appears twice with different settings.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<String>,
    /// `paper` derives analysis-grade constants; `practical` keeps the loop
    /// structure but takes scaled constants from the hyperparameters.
    #[serde(default = "default_mode")]
    pub mode: String,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub hyperparameters: BTreeMap<String, f64>,
}

fn default_mode() -> String {
    "paper".into()
}

fn default_log_every() -> u64 {
    1
}

impl AlgorithmSpec {
    pub fn label(&self) -> &str {
        self.label.as_deref().unwrap_or(&self.name)
    }

    pub fn paper_mode(&self) -> bool {
        self.mode == "paper"
    }

    pub fn hyper(&self, key: &str) -> Option<f64> {
        self.hyperparameters.get(key).copied()
    }

    /// A hyperparameter that must be a nonnegative integer count.
    pub fn count_hyper(&self, key: &str) -> Result<Option<u64>> {
        match self.hyper(key) {
            None => Ok(None),
            Some(v) => {
                if !v.is_finite() || v < 0.0 || v.fract() != 0.0 || v > u64::MAX as f64 {
                    bail!("algorithm '{}': {key} must be a nonnegative integer, got {v}", self.label());
                }
                Ok(Some(v as u64))
            }
        }
    }
}

/// One experiment: a problem instance, the optimizers to race on it, and
/// the measurement setup. Serialized as a single JSON document.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub problem: ProblemSpec,
    pub algorithms: Vec<AlgorithmSpec>,
    /// Target accuracy: gradient norm for stationarity runs, suboptimality
    /// for restarted runs.
    pub epsilon: f64,
    pub seeds: Vec<u64>,
    /// Counted-evaluation cap per run; unset means unlimited.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eval_budget: Option<u64>,
    /// Iterations (or epochs, for epoch-structured methods) between probes.
    #[serde(default = "default_log_every")]
    pub log_every: u64,
    /// Where artifacts go; `--output` on the command line overrides this.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        let config: ExperimentConfig = serde_json::from_str(&text)
            .with_context(|| format!("parsing config {}", path.display()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        if self.algorithms.is_empty() {
            bail!("config lists no algorithms");
        }
        let problem = make_problem(&self.problem)
            .map_err(|e| anyhow::anyhow!("problem spec rejected: {e}"))?;
        for alg in &self.algorithms {
            if !ALGORITHM_NAMES.contains(&alg.name.as_str()) {
                bail!(
                    "unknown algorithm '{}' (expected one of {})",
                    alg.name,
                    ALGORITHM_NAMES.join(", ")
                );
            }
            if alg.mode != "paper" && alg.mode != "practical" {
                bail!(
                    "algorithm '{}': mode must be 'paper' or 'practical', got '{}'",
                    alg.label(),
                    alg.mode
                );
            }
            if alg.name == "snvrg-pl" && problem.gradient_dominance().is_none() {
                bail!(
                    "algorithm '{}' needs a gradient-dominated problem; '{}' provides no dominance constant",
                    alg.label(),
                    self.problem.family
                );
            }
        }
        let mut labels: Vec<&str> = self.algorithms.iter().map(|a| a.label()).collect();
        labels.sort_unstable();
        if let Some(dup) = labels.windows(2).find(|w| w[0] == w[1]) {
            bail!("algorithm label '{}' appears twice; set 'label' on repeated entries", dup[0]);
        }
        if self.seeds.is_empty() {
            bail!("config needs at least one seed");
        }
        if !(self.epsilon > 0.0 && self.epsilon.is_finite()) {
            bail!("epsilon must be positive and finite, got {}", self.epsilon);
        }
        if self.log_every == 0 {
            bail!("log_every must be at least 1");
        }
        Ok(())
    }

    /// Replaces the seed list with `BENCH_SEED` (comma-separated) when the
    /// variable is set.
    pub fn apply_seed_override(&mut self) -> Result<()> {
        match std::env::var("BENCH_SEED") {
            Ok(raw) => {
                self.seeds = parse_seed_list(&raw)?;
                Ok(())
            }
            Err(std::env::VarError::NotPresent) => Ok(()),
            Err(e) => bail!("BENCH_SEED is not valid unicode: {e}"),
        }
    }
}

pub fn parse_seed_list(raw: &str) -> Result<Vec<u64>> {
    raw.split(',')
        .map(|s| {
            s.trim()
                .parse::<u64>()
                .with_context(|| format!("BENCH_SEED entry '{}' is not an unsigned integer", s.trim()))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn minimal_json() -> serde_json::Value {
        serde_json::json!({
            "problem": {"family": "pl-quadratic", "n": 16, "d": 2, "seed": 1},
            "algorithms": [{"name": "gd"}],
            "epsilon": 1e-3,
            "seeds": [1, 2]
        })
    }

    #[test]
    fn minimal_config_parses_with_defaults() {
        let config: ExperimentConfig = serde_json::from_value(minimal_json()).unwrap();
        config.validate().unwrap();
        assert_eq!(config.log_every, 1);
        assert!(config.eval_budget.is_none());
        assert!(config.algorithms[0].paper_mode());
        assert_eq!(config.algorithms[0].label(), "gd");
    }

    #[test]
    fn unknown_algorithm_is_rejected() {
        let mut v = minimal_json();
        v["algorithms"][0]["name"] = "adam".into();
        let config: ExperimentConfig = serde_json::from_value(v).unwrap();
        let err = config.validate().unwrap_err().to_string();
        assert!(err.contains("unknown algorithm 'adam'"), "{err}");
    }

    #[test]
    fn unknown_field_is_rejected_at_parse_time() {
        let mut v = minimal_json();
        v["epsilonn"] = 0.1.into();
        assert!(serde_json::from_value::<ExperimentConfig>(v).is_err());
    }

    #[test]
    fn duplicate_labels_are_rejected() {
        let mut v = minimal_json();
        v["algorithms"] = serde_json::json!([{"name": "gd"}, {"name": "gd"}]);
        let config: ExperimentConfig = serde_json::from_value(v).unwrap();
        assert!(config.validate().unwrap_err().to_string().contains("label 'gd' appears twice"));
        let mut v2 = minimal_json();
        v2["algorithms"] =
            serde_json::json!([{"name": "gd"}, {"name": "gd", "label": "gd-tuned"}]);
        let config2: ExperimentConfig = serde_json::from_value(v2).unwrap();
        config2.validate().unwrap();
    }

    #[test]
    fn restarted_method_requires_dominance_metadata() {
        let mut v = minimal_json();
        v["problem"]["family"] = "nonconvex-logistic".into();
        v["algorithms"] = serde_json::json!([{"name": "snvrg-pl"}]);
        let config: ExperimentConfig = serde_json::from_value(v).unwrap();
        assert!(config.validate().unwrap_err().to_string().contains("gradient-dominated"));
    }

    #[test]
    fn seed_list_parsing() {
        assert_eq!(parse_seed_list("1,2, 30").unwrap(), vec![1, 2, 30]);
        assert!(parse_seed_list("").is_err());
        assert!(parse_seed_list("1,x").is_err());
    }

    #[test]
    fn count_hyper_rejects_fractions() {
        let alg = AlgorithmSpec {
            name: "gd".into(),
            label: None,
            mode: "paper".into(),
            hyperparameters: [("steps".to_string(), 2.5)].into_iter().collect(),
        };
        assert!(alg.count_hyper("steps").is_err());
        assert_eq!(alg.count_hyper("missing").unwrap(), None);
    }
}
