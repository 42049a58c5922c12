use std::fmt;
use std::path::{Path, PathBuf};

use clap::ValueEnum;
use espd_core::envs::{EnvConfig, EnvKind};
use espd_core::es::EsConfig;
use espd_core::espd::TrainConfig;
use espd_core::fht::SimConfig;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    TrainEspd,
    TrainEs,
    FhtGrid,
    Eval,
    AblateSigma,
    AblateHorizon,
    AblateEvalNoise,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::TrainEspd => "train-espd",
            Command::TrainEs => "train-es",
            Command::FhtGrid => "fht-grid",
            Command::Eval => "eval",
            Command::AblateSigma => "ablate-sigma",
            Command::AblateHorizon => "ablate-horizon",
            Command::AblateEvalNoise => "ablate-eval-noise",
        }
    }

    fn needs_env(self) -> bool {
        self != Command::FhtGrid
    }

    fn is_sweep(self) -> bool {
        matches!(
            self,
            Command::AblateSigma | Command::AblateHorizon | Command::AblateEvalNoise
        )
    }

    fn default_sweep(self) -> Vec<f64> {
        match self {
            Command::AblateSigma => vec![0.5, 1.0, 2.0],
            Command::AblateHorizon => vec![1.0, 2.0, 4.0, 8.0],
            Command::AblateEvalNoise => vec![0.0, 0.25, 0.5, 1.0, 2.0],
            _ => Vec::new(),
        }
    }
}

impl fmt::Display for Command {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read {}: {message}", path.display())]
    Io { path: PathBuf, message: String },
    #[error("parse error at `{field}`: {message}")]
    Parse { field: String, message: String },
    #[error("invalid `{field}`: {message}")]
    Invalid { field: String, message: String },
}

impl ConfigError {
    fn invalid(field: impl Into<String>, message: impl Into<String>) -> Self {
        ConfigError::Invalid {
            field: field.into(),
            message: message.into(),
        }
    }

    /// Dotted path of the offending field, when known.
    pub fn field(&self) -> Option<&str> {
        match self {
            ConfigError::Io { .. } => None,
            ConfigError::Parse { field, .. } | ConfigError::Invalid { field, .. } => Some(field),
        }
    }
}

/// `env` section as written by users; unset fields take the variant's
/// defaults.
#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct EnvSection {
    variant: EnvKind,
    dim: Option<usize>,
    box_extent: Option<f64>,
    max_action: Option<f64>,
    goal_radius: Option<f64>,
    episode_horizon: Option<usize>,
    link_lengths: Option<[f64; 2]>,
}

impl EnvSection {
    fn resolve(self) -> EnvConfig {
        let mut cfg = EnvConfig::defaults_for(self.variant);
        macro_rules! take {
            ($($f:ident),*) => { $( if let Some(v) = self.$f { cfg.$f = v; } )* };
        }
        take!(dim, box_extent, max_action, goal_radius, episode_horizon, link_lengths);
        cfg
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSection {
    pub values: Vec<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    command: Option<Command>,
    env: Option<EnvSection>,
    #[serde(default)]
    train: TrainConfig,
    #[serde(default)]
    es: EsConfig,
    #[serde(default)]
    sim: SimConfig,
    sweep: Option<SweepSection>,
    seeds: Option<Vec<u64>>,
    output_dir: Option<PathBuf>,
    checkpoint: Option<PathBuf>,
}

/// A parsed, defaulted and validated experiment description.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunConfig {
    pub command: Command,
    pub env: EnvConfig,
    pub train: TrainConfig,
    pub es: EsConfig,
    pub sim: SimConfig,
    pub sweep: SweepSection,
    pub seeds: Vec<u64>,
    pub output_dir: PathBuf,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub checkpoint: Option<PathBuf>,
}

/// Reads and validates a JSON config file. `command` overrides (or supplies)
/// the file's `command` field; the two must agree when both are present.
pub fn load_config(path: &Path, command: Option<Command>) -> Result<RunConfig, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|e| ConfigError::Io {
        path: path.to_path_buf(),
        message: e.to_string(),
    })?;
    let mut cfg = parse_config_with(&text, command)?;
    if let Some(ck) = cfg.checkpoint.as_mut() {
        if ck.is_relative() {
            if let Some(dir) = path.parent() {
                *ck = dir.join(&*ck);
            }
        }
    }
    Ok(cfg)
}

pub fn parse_config(text: &str) -> Result<RunConfig, ConfigError> {
    parse_config_with(text, None)
}

fn parse_config_with(text: &str, command: Option<Command>) -> Result<RunConfig, ConfigError> {
    let de = &mut serde_json::Deserializer::from_str(text);
    let raw: RawConfig = serde_path_to_error::deserialize(de).map_err(|e| ConfigError::Parse {
        field: e.path().to_string(),
        message: e.inner().to_string(),
    })?;

    let command = match (raw.command, command) {
        (Some(a), Some(b)) if a != b => {
            return Err(ConfigError::invalid(
                "command",
                format!("config says {a} but {b} was requested"),
            ))
        }
        (Some(c), _) | (None, Some(c)) => c,
        (None, None) => return Err(ConfigError::invalid("command", "missing")),
    };

    let env = match raw.env {
        Some(section) => section.resolve(),
        None if command.needs_env() => {
            return Err(ConfigError::invalid("env", format!("required by {command}")))
        }
        None => EnvConfig::point_nav(),
    };

    let sweep = match raw.sweep {
        Some(s) => s,
        None => SweepSection {
            values: command.default_sweep(),
        },
    };

    let cfg = RunConfig {
        command,
        train: raw.train.resolved(&env),
        env,
        es: raw.es,
        sim: raw.sim,
        sweep,
        seeds: raw.seeds.unwrap_or_else(|| vec![1]),
        output_dir: raw.output_dir.unwrap_or_else(|| PathBuf::from("results")),
        checkpoint: raw.checkpoint,
    };
    cfg.validate()?;
    Ok(cfg)
}

impl RunConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.seeds.is_empty() {
            return Err(ConfigError::invalid("seeds", "must not be empty"));
        }
        let cmd = self.command;
        if cmd.needs_env() {
            self.env
                .check()
                .map_err(|(f, why)| ConfigError::invalid(format!("env.{f}"), why))?;
        }
        if matches!(
            cmd,
            Command::TrainEspd | Command::TrainEs | Command::Eval
        ) || cmd.is_sweep()
        {
            self.train
                .check(&self.env)
                .map_err(|(f, why)| ConfigError::invalid(format!("train.{f}"), why))?;
        }
        if cmd == Command::TrainEs {
            self.es
                .check()
                .map_err(|(f, why)| ConfigError::invalid(format!("es.{f}"), why))?;
        }
        if cmd == Command::FhtGrid {
            self.sim
                .check()
                .map_err(|(f, why)| ConfigError::invalid(format!("sim.{f}"), why))?;
        }
        if cmd == Command::Eval && self.checkpoint.is_none() {
            return Err(ConfigError::invalid("checkpoint", "required by eval"));
        }
        if cmd.is_sweep() {
            if self.sweep.values.is_empty() {
                return Err(ConfigError::invalid("sweep.values", "must not be empty"));
            }
            for (i, v) in self.sweep.values.iter().enumerate() {
                let field = format!("sweep.values[{i}]");
                if !(v.is_finite() && *v >= 0.0) {
                    return Err(ConfigError::invalid(field, "must be finite and >= 0"));
                }
                if cmd == Command::AblateHorizon {
                    let t = self.train.episode_length_for(&self.env) as f64;
                    if v.fract() != 0.0 || *v < 1.0 || *v > t {
                        return Err(ConfigError::invalid(
                            field,
                            format!("horizon must be an integer in 1..={t}"),
                        ));
                    }
                }
            }
        }
        Ok(())
    }

    /// Canonical JSON with every default spelled out. Reloading it yields an
    /// identical config.
    pub fn to_canonical_json(&self) -> String {
        let value = serde_json::to_value(self).expect("config serializes");
        serde_json::to_string_pretty(&value).expect("value serializes")
    }

    /// Stable short digest of the experiment definition. Seeds and the output
    /// directory are not part of it: they name files, not experiments.
    pub fn config_hash(&self) -> String {
        let mut value = serde_json::to_value(self).expect("config serializes");
        if let Some(obj) = value.as_object_mut() {
            obj.remove("seeds");
            obj.remove("output_dir");
        }
        let canonical = serde_json::to_string(&value).expect("value serializes");
        let digest = Sha256::digest(canonical.as_bytes());
        digest.iter().take(6).map(|b| format!("{b:02x}")).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_config_gets_defaults() {
        let cfg = parse_config(r#"{"command":"train-espd","env":{"variant":"point_nav"}}"#).unwrap();
        assert_eq!(cfg.env, EnvConfig::point_nav());
        assert_eq!(cfg.train.horizon, 8);
        assert_eq!(cfg.train.sigma, 1.0);
        assert_eq!(cfg.train.episode_length, Some(50));
        assert_eq!(cfg.train.eval_sigma, Some(0.5));
        assert_eq!(cfg.train.batch_size, 128);
        assert_eq!(cfg.es.population_size, 64);
        assert_eq!(cfg.sim.horizon, 100);
        assert_eq!(cfg.seeds, vec![1]);
    }

    #[test]
    fn zero_horizon_names_field() {
        let err = parse_config(
            r#"{"command":"train-espd","env":{"variant":"point_nav"},"train":{"horizon":0}}"#,
        )
        .unwrap_err();
        assert_eq!(err.field(), Some("train.horizon"));
    }

    #[test]
    fn unknown_keys_rejected_with_path() {
        let err = parse_config(
            r#"{"command":"train-espd","env":{"variant":"point_nav"},"train":{"horizn":3}}"#,
        )
        .unwrap_err();
        assert!(matches!(err, ConfigError::Parse { .. }));
        assert_eq!(err.field(), Some("train.horizn"));
        assert!(parse_config(r#"{"command":"fht-grid","extra":1}"#).is_err());
    }

    #[test]
    fn canonical_roundtrip() {
        let cfg = parse_config(
            r#"{"command":"ablate-sigma","env":{"variant":"planar_arm","goal_radius":0.1},"seeds":[3,4]}"#,
        )
        .unwrap();
        let again = parse_config(&cfg.to_canonical_json()).unwrap();
        assert_eq!(cfg, again);
        assert_eq!(cfg.config_hash(), again.config_hash());
    }

    #[test]
    fn env_required_except_for_fht() {
        let err = parse_config(r#"{"command":"train-es"}"#).unwrap_err();
        assert_eq!(err.field(), Some("env"));
        assert!(parse_config(r#"{"command":"fht-grid"}"#).is_ok());
    }

    #[test]
    fn command_conflict_and_override() {
        let text = r#"{"command":"fht-grid"}"#;
        assert!(parse_config_with(text, Some(Command::TrainEs)).is_err());
        let cfg = parse_config_with(r#"{"sim":{"horizon":5}}"#, Some(Command::FhtGrid)).unwrap();
        assert_eq!(cfg.command, Command::FhtGrid);
        assert_eq!(parse_config("{}").unwrap_err().field(), Some("command"));
    }

    #[test]
    fn sweep_values_validated() {
        let err = parse_config(
            r#"{"command":"ablate-horizon","env":{"variant":"point_nav"},"sweep":{"values":[1,2.5]}}"#,
        )
        .unwrap_err();
        assert_eq!(err.field(), Some("sweep.values[1]"));
        let cfg = parse_config(r#"{"command":"ablate-horizon","env":{"variant":"point_nav"}}"#).unwrap();
        assert_eq!(cfg.sweep.values, vec![1.0, 2.0, 4.0, 8.0]);
    }

    #[test]
    fn eval_needs_checkpoint() {
        let err = parse_config(r#"{"command":"eval","env":{"variant":"point_nav"}}"#).unwrap_err();
        assert_eq!(err.field(), Some("checkpoint"));
    }

    #[test]
    fn hash_ignores_seeds_and_output() {
        let a = parse_config(r#"{"command":"fht-grid","seeds":[1]}"#).unwrap();
        let b = parse_config(r#"{"command":"fht-grid","seeds":[2,3],"output_dir":"x"}"#).unwrap();
        let c = parse_config(r#"{"command":"fht-grid","sim":{"bias_scale":0.5}}"#).unwrap();
        assert_eq!(a.config_hash(), b.config_hash());
        assert_ne!(a.config_hash(), c.config_hash());
        assert_eq!(a.config_hash().len(), 12);
    }
}
