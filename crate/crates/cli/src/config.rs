//! Run configuration files and their merge with command-line flags.

use std::path::{Path, PathBuf};

use semshift::config::Language;
use semshift::detect::{Metric, Strategy};
use semshift::ranking::Grouping;
use semshift::xlingual::Pairing;
use serde::Deserialize;

use crate::Failure;

/// Paths a run may refer to. Relative paths are resolved against the
/// directory of the config file.
#[derive(Clone, Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Paths {
    pub store_t0: Option<PathBuf>,
    pub store_t1: Option<PathBuf>,
    pub l2_store_t0: Option<PathBuf>,
    pub l2_store_t1: Option<PathBuf>,
    pub words: Option<PathBuf>,
    pub gold: Option<PathBuf>,
    pub pred: Option<PathBuf>,
    pub dev: Option<PathBuf>,
    pub out: Option<PathBuf>,
}

/// Everything a `--config` file may set. Unset fields fall back to the
/// language preset; flags given on the command line win over the file.
#[derive(Clone, Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub language: Option<Language>,
    pub language_l2: Option<Language>,
    pub t0_sc: Option<f64>,
    pub t1_sc: Option<f64>,
    pub t_sc_detect: Option<f64>,
    pub t_cs: Option<f64>,
    pub k: Option<usize>,
    pub t0_low: Option<usize>,
    pub t1_low: Option<usize>,
    pub min_tokens: Option<usize>,
    pub metric: Option<Metric>,
    pub strategy: Option<Strategy>,
    pub pairing: Option<Pairing>,
    pub grouping: Option<Grouping>,
    pub threads: Option<usize>,
    pub seed: Option<u64>,
    pub paths: Paths,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, Failure> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Failure::usage(format!("cannot read config {}: {e}", path.display())))?;
        let mut cfg: RunConfig = serde_json::from_str(&text)
            .map_err(|e| Failure::usage(format!("invalid config {}: {e}", path.display())))?;
        let base = path.parent().unwrap_or_else(|| Path::new("."));
        let p = &mut cfg.paths;
        for slot in [
            &mut p.store_t0,
            &mut p.store_t1,
            &mut p.l2_store_t0,
            &mut p.l2_store_t1,
            &mut p.words,
            &mut p.gold,
            &mut p.pred,
            &mut p.dev,
            &mut p.out,
        ] {
            if let Some(rel) = slot.as_ref().filter(|q| q.is_relative()) {
                *slot = Some(base.join(rel));
            }
        }
        Ok(cfg)
    }
}

/// Flag value if given, else the config value.
pub fn pick<T: Clone>(flag: &Option<T>, file: &Option<T>) -> Option<T> {
    flag.clone().or_else(|| file.clone())
}

/// Like [`pick`] but the value is mandatory.
pub fn require<T: Clone>(flag: &Option<T>, file: &Option<T>, name: &str) -> Result<T, Failure> {
    pick(flag, file).ok_or_else(|| Failure::usage(format!("missing required argument --{name}")))
}

pub fn parse_pairing(s: &str) -> Result<Pairing, String> {
    match s {
        "greedy" => Ok(Pairing::Greedy),
        "optimal" => Ok(Pairing::Optimal),
        other => Err(format!("unknown pairing `{other}` (greedy, optimal)")),
    }
}

pub fn parse_grouping(s: &str) -> Result<Grouping, String> {
    match s {
        "single_link" | "single-link" => Ok(Grouping::SingleLink),
        "clique" => Ok(Grouping::Clique),
        other => Err(format!("unknown grouping `{other}` (single-link, clique)")),
    }
}
