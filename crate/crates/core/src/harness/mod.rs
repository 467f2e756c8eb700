//! File formats and batch runners for experiments.

mod config;
mod csv;
mod pgm;

use std::path::PathBuf;

use thiserror::Error;

use crate::attack::{attack_fp, AttackTrace, FpAttackConfig, FpConfigError, FpOracle};
use crate::generate::random_template;
use crate::matcher::MatchParams;
use crate::model::{MinutiaeTemplate, Seed};
use crate::par;

pub use config::{ConfigError, ExperimentConfig, ATTACK_NAMES, KEYS};
pub use csv::{export_report_csv, export_trace_csv, report_csv, trace_csv, REPORT_HEADER, TRACE_HEADER};
pub use pgm::{decode_pgm, encode_pgm, read_pgm, write_pgm, PgmError};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("storage failure at {path}: {source}")]
    StorageFailure {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

/// `count` seeded enrollment templates; target `i` comes from `seed.derive(i)`.
pub fn random_targets(seed: Seed, count: usize, n: usize, dims: (u32, u32)) -> Vec<MinutiaeTemplate> {
    par::map_range(count, |i| random_template(seed.derive(i as u64), n, dims.0, dims.1))
}

/// Attacks every target independently, target `i` with `seeds[i]`. Runs in
/// parallel when enabled; the traces equal those of one-by-one runs.
pub fn attack_fp_targets(
    targets: &[MinutiaeTemplate],
    params: MatchParams,
    cfg: &FpAttackConfig,
    dims: (u32, u32),
    seeds: &[Seed],
) -> Result<Vec<(MinutiaeTemplate, AttackTrace)>, FpConfigError> {
    assert_eq!(targets.len(), seeds.len(), "one seed per target");
    cfg.validate()?;
    let jobs: Vec<(&MinutiaeTemplate, Seed)> = targets.iter().zip(seeds.iter().copied()).collect();
    par::map(&jobs, |&(t, s)| attack_fp(&mut FpOracle::new(t.clone(), params), cfg, dims, s))
        .into_iter()
        .collect()
}
