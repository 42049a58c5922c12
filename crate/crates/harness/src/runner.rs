use std::fs;
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use espd_core::envs::Env;
use espd_core::es::{es_train, EsConfig, EvalSettings};
use espd_core::espd::{evaluate, train, Policy};
use espd_core::fht::{success_grid, SuccessGrid};
use espd_core::numkit::{MlpParams, SeededRng};
use espd_core::record::{final_success, to_csv, EpisodeRecord};
use serde_json::json;

use crate::config::{Command, RunConfig};

/// Evaluation draws from this stream of the run seed, as the trainer does.
const STREAM_EVAL: u64 = 4;

pub const SUMMARY_HEADER: &str = "variant,config_hash,seeds,final_success_mean,final_success_std";

#[derive(Debug, thiserror::Error)]
pub enum RunError {
    #[error("cannot write {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

/// Outcome of one (variant, seed) run.
#[derive(Debug, Clone)]
pub struct RunRecord {
    pub variant: String,
    pub config_hash: String,
    pub seed: u64,
    pub rows: Vec<EpisodeRecord>,
    pub final_success: Option<f64>,
    /// Informational only; never written to any output file.
    pub duration: Duration,
    pub artifacts: Vec<PathBuf>,
}

#[derive(Debug, Clone)]
pub struct SeedFailure {
    pub variant: String,
    pub config_hash: String,
    pub seed: u64,
    pub message: String,
}

#[derive(Debug, Clone)]
pub struct RunReport {
    pub config_hash: String,
    pub records: Vec<RunRecord>,
    pub summary: PathBuf,
    pub meta: PathBuf,
    /// Set when a seed failed and the remaining runs were skipped.
    pub failure: Option<SeedFailure>,
    pub manifest: Option<PathBuf>,
}

/// One cell of a sweep: a fully specified single-run config.
#[derive(Debug, Clone)]
pub struct Variant {
    pub label: String,
    pub config: RunConfig,
    pub hash: String,
}

/// Expands sweep commands into one `train-espd` config per swept value;
/// other commands yield a single variant.
pub fn variants(cfg: &RunConfig) -> Vec<Variant> {
    let single = |label: String, config: RunConfig| {
        let hash = config.config_hash();
        Variant { label, config, hash }
    };
    let sweep = |label: &str, apply: &dyn Fn(&mut RunConfig, f64)| {
        cfg.sweep
            .values
            .iter()
            .map(|&v| {
                let mut c = cfg.clone();
                c.command = Command::TrainEspd;
                c.sweep.values.clear();
                apply(&mut c, v);
                single(format!("{label}={v}"), c)
            })
            .collect()
    };
    match cfg.command {
        Command::AblateSigma => sweep("sigma", &|c, v| c.train.sigma = v),
        Command::AblateHorizon => sweep("horizon", &|c, v| c.train.horizon = v as usize),
        Command::AblateEvalNoise => sweep("eval_sigma", &|c, v| c.train.eval_sigma = Some(v)),
        cmd => vec![single(cmd.name().to_string(), cfg.clone())],
    }
}

/// Runs every (variant, seed) pair in order and writes per-run files, the
/// summary and the metadata into `cfg.output_dir`.
pub fn run(cfg: &RunConfig) -> Result<RunReport, RunError> {
    let dir = &cfg.output_dir;
    fs::create_dir_all(dir).map_err(|source| RunError::Io {
        path: dir.clone(),
        source,
    })?;
    let hash = cfg.config_hash();
    let variants = variants(cfg);
    let meta = dir.join(format!("meta_{hash}.json"));
    write_atomic(&meta, &meta_json(cfg, &hash, &variants))?;

    let mut records = Vec::new();
    let mut failure = None;
    'outer: for v in &variants {
        for &seed in &cfg.seeds {
            match run_one(v, seed, dir) {
                Ok(Ok(rec)) => records.push(rec),
                Ok(Err(message)) => {
                    failure = Some(SeedFailure {
                        variant: v.label.clone(),
                        config_hash: v.hash.clone(),
                        seed,
                        message,
                    });
                    break 'outer;
                }
                Err(e) => return Err(e),
            }
        }
    }

    let summary = dir.join(format!("summary_{hash}.csv"));
    write_atomic(&summary, &summary_csv(&variants, &records))?;
    let manifest = match &failure {
        Some(f) => {
            let path = dir.join(format!("manifest_{hash}.json"));
            write_atomic(&path, &manifest_json(&hash, &records, f))?;
            Some(path)
        }
        None => None,
    };
    Ok(RunReport {
        config_hash: hash,
        records,
        summary,
        meta,
        failure,
        manifest,
    })
}

/// Outer error: output could not be written. Inner error: the run itself
/// failed, which aborts the sweep.
fn run_one(v: &Variant, seed: u64, dir: &Path) -> Result<Result<RunRecord, String>, RunError> {
    let cfg = &v.config;
    let start = Instant::now();
    let mut artifacts = Vec::new();
    let rows = match cfg.command {
        Command::FhtGrid => {
            let sim = espd_core::fht::SimConfig { seed, ..cfg.sim.clone() };
            let grid = match success_grid(&sim) {
                Ok(g) => g,
                Err(e) => return Ok(Err(e.to_string())),
            };
            let csv = dir.join(format!("fht_{}_{seed}.csv", v.hash));
            write_atomic(&csv, &grid.to_csv())?;
            let sidecar = dir.join(format!("fht_{}_{seed}.json", v.hash));
            write_atomic(&sidecar, &grid_json(&grid))?;
            artifacts.extend([csv, sidecar]);
            Vec::new()
        }
        Command::Eval => match eval_checkpoint(cfg, seed) {
            Ok(rate) => vec![EpisodeRecord {
                eval_success: Some(rate),
                ..Default::default()
            }],
            Err(e) => return Ok(Err(e)),
        },
        Command::TrainEs => {
            let es = EsConfig { seed, ..cfg.es.clone() };
            let eval = EvalSettings {
                sigma: cfg.train.eval_sigma_for(&cfg.env),
                episodes: cfg.train.eval_episodes,
            };
            match es_train(&cfg.env, &es, eval) {
                Ok(out) => {
                    artifacts.push(write_policy(dir, &v.hash, seed, out.policy.net())?);
                    out.log
                }
                Err(e) => return Ok(Err(e.to_string())),
            }
        }
        _ => match train(&cfg.env, &cfg.train, seed) {
            Ok(out) => {
                artifacts.push(write_policy(dir, &v.hash, seed, out.policy.net())?);
                out.log
            }
            Err(e) => return Ok(Err(e.to_string())),
        },
    };
    if cfg.command != Command::FhtGrid {
        let csv = dir.join(format!("run_{}_{seed}.csv", v.hash));
        write_atomic(&csv, &to_csv(&rows))?;
        artifacts.insert(0, csv);
    }
    Ok(Ok(RunRecord {
        variant: v.label.clone(),
        config_hash: v.hash.clone(),
        seed,
        final_success: final_success(&rows),
        rows,
        duration: start.elapsed(),
        artifacts,
    }))
}

fn eval_checkpoint(cfg: &RunConfig, seed: u64) -> Result<f64, String> {
    let path = cfg.checkpoint.as_ref().ok_or("no checkpoint configured")?;
    let text = fs::read_to_string(path).map_err(|e| format!("cannot read {}: {e}", path.display()))?;
    let net = MlpParams::from_json(&text).map_err(|e| format!("{}: {e}", path.display()))?;
    let mut env = Env::new(cfg.env.clone()).map_err(|e| e.to_string())?;
    let (want_in, want_out) = (
        cfg.env.state_dim() + cfg.env.goal_dim(),
        cfg.env.action_dim(),
    );
    if net.input_dim() != want_in || net.output_dim() != want_out {
        return Err(format!(
            "checkpoint maps {} -> {} but the environment needs {want_in} -> {want_out}",
            net.input_dim(),
            net.output_dim()
        ));
    }
    let policy = Policy::new(net, env.input_scale());
    let mut rng = SeededRng::derive(seed, STREAM_EVAL);
    evaluate(
        &mut env,
        &policy,
        cfg.train.eval_sigma_for(&cfg.env),
        cfg.train.eval_episodes,
        &mut rng,
    )
    .map_err(|e| e.to_string())
}

fn write_policy(dir: &Path, hash: &str, seed: u64, net: &MlpParams) -> Result<PathBuf, RunError> {
    let path = dir.join(format!("policy_{hash}_{seed}.json"));
    write_atomic(&path, &net.to_json())?;
    Ok(path)
}

fn summary_csv(variants: &[Variant], records: &[RunRecord]) -> String {
    let mut out = String::from(SUMMARY_HEADER);
    out.push('\n');
    for v in variants {
        let runs: Vec<&RunRecord> = records.iter().filter(|r| r.config_hash == v.hash).collect();
        if runs.is_empty() {
            continue;
        }
        let seeds: Vec<String> = runs.iter().map(|r| r.seed.to_string()).collect();
        let rates: Vec<f64> = runs.iter().filter_map(|r| r.final_success).collect();
        let (mean, std) = if rates.len() == runs.len() {
            let (m, s) = mean_std(&rates);
            (m.to_string(), s.to_string())
        } else {
            (String::new(), String::new())
        };
        out.push_str(&format!("{},{},{},{mean},{std}\n", v.label, v.hash, seeds.join(";")));
    }
    out
}

/// Mean and sample standard deviation (0 for a single value).
fn mean_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

fn meta_json(cfg: &RunConfig, hash: &str, variants: &[Variant]) -> String {
    let value = json!({
        "config_hash": hash,
        "config": serde_json::to_value(cfg).expect("config serializes"),
        "variants": variants
            .iter()
            .map(|v| json!({ "label": v.label, "config_hash": v.hash }))
            .collect::<Vec<_>>(),
        "build": {
            "package": env!("CARGO_PKG_NAME"),
            "version": env!("CARGO_PKG_VERSION"),
            "debug_assertions": cfg!(debug_assertions),
        },
    });
    pretty(&value)
}

fn manifest_json(hash: &str, records: &[RunRecord], failure: &SeedFailure) -> String {
    let completed: Vec<_> = records
        .iter()
        .map(|r| {
            json!({
                "variant": r.variant,
                "config_hash": r.config_hash,
                "seed": r.seed,
                "final_success": r.final_success,
                "artifacts": r.artifacts.iter().map(|p| file_name(p)).collect::<Vec<_>>(),
            })
        })
        .collect();
    pretty(&json!({
        "config_hash": hash,
        "status": "partial",
        "completed": completed,
        "failed": {
            "variant": failure.variant,
            "config_hash": failure.config_hash,
            "seed": failure.seed,
            "error": failure.message,
        },
    }))
}

fn grid_json(grid: &SuccessGrid) -> String {
    let mut cells = Vec::new();
    for (i, e) in grid.epsilons.iter().enumerate() {
        for (j, s) in grid.sigmas.iter().enumerate() {
            let c = grid.cell(i, j);
            cells.push(json!({
                "epsilon": e,
                "sigma": s,
                "episodes": c.episodes,
                "hits": c.hits,
                "success_rate": c.success_rate(),
                "std_error": c.std_error(),
                "mean_fht": c.mean_fht,
            }));
        }
    }
    pretty(&json!({ "cells": cells }))
}

fn pretty(value: &serde_json::Value) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("value serializes");
    s.push('\n');
    s
}

fn file_name(p: &Path) -> String {
    p.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default()
}

/// Writes through a temporary sibling and renames it into place.
fn write_atomic(path: &Path, contents: &str) -> Result<(), RunError> {
    let tmp = path.with_extension("tmp");
    let io = |source| RunError::Io {
        path: path.to_path_buf(),
        source,
    };
    fs::write(&tmp, contents).map_err(io)?;
    fs::rename(&tmp, path).map_err(io)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::parse_config;

    #[test]
    fn sweep_expands_per_value() {
        let cfg = parse_config(r#"{"command":"ablate-horizon","env":{"variant":"point_nav"}}"#).unwrap();
        let vs = variants(&cfg);
        assert_eq!(vs.len(), 4);
        assert_eq!(vs[0].label, "horizon=1");
        assert_eq!(vs[3].config.train.horizon, 8);
        let base = parse_config(r#"{"command":"train-espd","env":{"variant":"point_nav"}}"#).unwrap();
        // K = 8 is the default, so that cell is the plain training run.
        assert_eq!(vs[3].hash, base.config_hash());
        let hashes: std::collections::BTreeSet<_> = vs.iter().map(|v| &v.hash).collect();
        assert_eq!(hashes.len(), 4);
    }

    #[test]
    fn mean_std_values() {
        assert_eq!(mean_std(&[0.5]), (0.5, 0.0));
        let (m, s) = mean_std(&[1.0, 2.0, 3.0]);
        assert_eq!(m, 2.0);
        assert!((s - 1.0).abs() < 1e-15);
    }
}
