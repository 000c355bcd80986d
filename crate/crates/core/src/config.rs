//! JSON configuration shared by all CLI subcommands.

use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::augment::{AugStrategy, LlmClientConfig};
use crate::rouge::{RougeConfig, RougeVariant};
use crate::simgraph::{PoolMode, PruneConfig, StopRule};
use crate::trainloop::LoopConfig;

#[derive(Debug, Error, PartialEq)]
pub enum ConfigError {
    #[error("config: {0}")]
    Json(String),
    #[error("config: {path}: {message}")]
    Invalid { path: &'static str, message: String },
}

fn invalid(path: &'static str, message: impl Into<String>) -> ConfigError {
    ConfigError::Invalid {
        path,
        message: message.into(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopRuleName {
    AllEdgesRemoved,
    #[default]
    MaxEvalDegree,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RougeSection {
    pub variant: RougeVariant,
    pub threshold: f64,
}

impl Default for RougeSection {
    fn default() -> Self {
        RougeSection {
            variant: RougeVariant::LcsOverMax,
            threshold: 0.3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PruneSection {
    pub stop_rule: StopRuleName,
    pub max_degree: i64,
    pub pool_mode: PoolMode,
}

impl Default for PruneSection {
    fn default() -> Self {
        PruneSection {
            stop_rule: StopRuleName::MaxEvalDegree,
            max_degree: 5,
            pool_mode: PoolMode::PerSide,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OpenSetSection {
    pub known_ratio: f64,
    pub seeds: Vec<u64>,
}

impl Default for OpenSetSection {
    fn default() -> Self {
        OpenSetSection {
            known_ratio: 0.25,
            seeds: (0..10).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AugmentSection {
    /// `f4`, `f10`, `wp10`, or any `f<k>` / `wp<k>`.
    pub strategy: String,
    /// Overrides the paraphrase count implied by `strategy`.
    pub k: Option<usize>,
    pub endpoint: String,
    pub model: String,
    pub temperature: f64,
    pub cache_dir: PathBuf,
    pub auth_env: Option<String>,
    pub timeout_secs: u64,
    pub max_retries: usize,
    pub max_in_flight: usize,
}

impl Default for AugmentSection {
    fn default() -> Self {
        let llm = LlmClientConfig::default();
        AugmentSection {
            strategy: "f10".to_string(),
            k: None,
            endpoint: llm.endpoint,
            model: llm.model,
            temperature: llm.temperature,
            cache_dir: PathBuf::from(".paraphrase-cache"),
            auth_env: llm.auth_env,
            timeout_secs: llm.timeout_secs,
            max_retries: llm.max_retries,
            max_in_flight: llm.max_in_flight,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LoopSection {
    pub max_rounds: i64,
}

impl Default for LoopSection {
    fn default() -> Self {
        LoopSection { max_rounds: 10 }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CliConfig {
    pub rouge: RougeSection,
    pub prune: PruneSection,
    pub openset: OpenSetSection,
    pub augment: AugmentSection,
    #[serde(rename = "loop")]
    pub train_loop: LoopSection,
}

/// Decodes a JSON config, filling defaults and rejecting unknown keys.
pub fn parse_config(bytes: &[u8]) -> Result<CliConfig, ConfigError> {
    let config: CliConfig = serde_json::from_slice(bytes).map_err(|e| ConfigError::Json(e.to_string()))?;
    config.validate()?;
    Ok(config)
}

impl CliConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        if !(self.rouge.threshold > 0.0 && self.rouge.threshold <= 1.0) {
            return Err(invalid("rouge.threshold", "must lie in (0, 1]"));
        }
        if self.prune.max_degree < 0 || self.prune.max_degree > u32::MAX as i64 {
            return Err(invalid("prune.max_degree", "must be a non-negative integer"));
        }
        if !(self.openset.known_ratio > 0.0 && self.openset.known_ratio <= 1.0) {
            return Err(invalid("openset.known_ratio", "must lie in (0, 1]"));
        }
        self.strategy()?;
        if self.augment.k == Some(0) {
            return Err(invalid("augment.k", "must be at least 1"));
        }
        if self.augment.max_in_flight == 0 {
            return Err(invalid("augment.max_in_flight", "must be at least 1"));
        }
        if !self.augment.temperature.is_finite() || self.augment.temperature < 0.0 {
            return Err(invalid("augment.temperature", "must be a non-negative number"));
        }
        if self.train_loop.max_rounds < 1 {
            return Err(invalid("loop.max_rounds", "must be at least 1"));
        }
        Ok(())
    }

    /// Checks constraints that only apply to the `run` subcommand.
    pub fn validate_for_run(&self) -> Result<(), ConfigError> {
        if self.openset.seeds.is_empty() {
            return Err(invalid("openset.seeds", "must not be empty"));
        }
        Ok(())
    }

    pub fn rouge_config(&self) -> RougeConfig {
        RougeConfig {
            variant: self.rouge.variant,
            threshold: self.rouge.threshold,
        }
    }

    pub fn prune_config(&self) -> PruneConfig {
        let stop_rule = match self.prune.stop_rule {
            StopRuleName::AllEdgesRemoved => StopRule::AllEdgesRemoved,
            StopRuleName::MaxEvalDegree => StopRule::MaxEvalDegree {
                limit: self.prune.max_degree.clamp(0, u32::MAX as i64) as u32,
            },
        };
        PruneConfig {
            rouge: self.rouge_config(),
            stop_rule,
            pool_mode: self.prune.pool_mode,
        }
    }

    pub fn strategy(&self) -> Result<AugStrategy, ConfigError> {
        let base: AugStrategy = self
            .augment
            .strategy
            .parse()
            .map_err(|e: String| invalid("augment.strategy", e))?;
        Ok(match self.augment.k {
            Some(k) => base.with_k(k),
            None => base,
        })
    }

    pub fn llm_config(&self) -> LlmClientConfig {
        LlmClientConfig {
            endpoint: self.augment.endpoint.clone(),
            model: self.augment.model.clone(),
            temperature: self.augment.temperature,
            timeout_secs: self.augment.timeout_secs,
            max_retries: self.augment.max_retries,
            max_in_flight: self.augment.max_in_flight,
            auth_env: self.augment.auth_env.clone(),
            ..LlmClientConfig::default()
        }
    }

    pub fn loop_config(&self) -> Result<LoopConfig, ConfigError> {
        Ok(LoopConfig {
            strategy: self.strategy()?,
            max_rounds: self.train_loop.max_rounds as usize,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_object_gives_defaults() {
        let c = parse_config(b"{}").unwrap();
        assert_eq!(c, CliConfig::default());
        assert_eq!(c.rouge.variant, RougeVariant::LcsOverMax);
        assert_eq!(c.rouge.threshold, 0.3);
        assert_eq!(c.prune_config().stop_rule, StopRule::MaxEvalDegree { limit: 5 });
        assert_eq!(c.openset.seeds, (0..10).collect::<Vec<u64>>());
        assert_eq!(
            c.loop_config().unwrap(),
            LoopConfig {
                strategy: AugStrategy::F10,
                max_rounds: 10
            }
        );
    }

    #[test]
    fn threshold_override() {
        let c = parse_config(br#"{"rouge":{"threshold":0.2}}"#).unwrap();
        assert_eq!(c.rouge_config().threshold, 0.2);
        assert_eq!(c.rouge_config().variant, RougeVariant::LcsOverMax);
    }

    #[test]
    fn negative_degree_names_field() {
        let err = parse_config(br#"{"prune":{"max_degree":-1}}"#).unwrap_err();
        assert!(matches!(
            err,
            ConfigError::Invalid {
                path: "prune.max_degree",
                ..
            }
        ));
        assert!(err.to_string().contains("prune.max_degree"));
    }

    #[test]
    fn rejects_unknown_keys_and_bad_json() {
        assert!(matches!(
            parse_config(br#"{"rouge":{"treshold":0.2}}"#),
            Err(ConfigError::Json(_))
        ));
        assert!(matches!(parse_config(br#"{"extra":1}"#), Err(ConfigError::Json(_))));
        assert!(matches!(parse_config(b"{"), Err(ConfigError::Json(_))));
    }

    #[test]
    fn other_constraints() {
        let bad = |s: &str| match parse_config(s.as_bytes()) {
            Err(ConfigError::Invalid { path, .. }) => path,
            other => panic!("{s}: {other:?}"),
        };
        assert_eq!(bad(r#"{"rouge":{"threshold":0}}"#), "rouge.threshold");
        assert_eq!(bad(r#"{"openset":{"known_ratio":1.5}}"#), "openset.known_ratio");
        assert_eq!(bad(r#"{"augment":{"strategy":"g7"}}"#), "augment.strategy");
        assert_eq!(bad(r#"{"loop":{"max_rounds":0}}"#), "loop.max_rounds");
        let c = parse_config(br#"{"openset":{"seeds":[]}}"#).unwrap();
        assert!(c.validate_for_run().is_err());
    }

    #[test]
    fn strategy_and_k() {
        let c = parse_config(br#"{"augment":{"strategy":"wp10","k":3}}"#).unwrap();
        assert_eq!(c.strategy().unwrap(), AugStrategy::WrongPredK { k: 3 });
        let c = parse_config(br#"{"prune":{"stop_rule":"all_edges_removed"},"rouge":{"variant":"lcs_f1"}}"#).unwrap();
        assert_eq!(c.prune_config().stop_rule, StopRule::AllEdgesRemoved);
        assert_eq!(c.rouge.variant, RougeVariant::LcsF1);
    }
}
