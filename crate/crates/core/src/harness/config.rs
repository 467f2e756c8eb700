//! `key=value` experiment configuration with dotted keys and `#` comments.

use std::collections::HashSet;
use std::fmt::Write as _;
use std::path::PathBuf;
use std::str::FromStr;

use thiserror::Error;

use crate::analysis::{ExtractParams, MIN_EXTRACT_SIDE};
use crate::attack::{FaceAttackConfig, FpAttackConfig, TimingAttackConfig};
use crate::defense::{AttackKind, DefensePolicy, Scenario};
use crate::face::MIN_FACE_SIDE;
use crate::model::{Seed, MAX_MINUTIAE};
use crate::sidechannel::TimingModel;
use crate::synthesis::SynthesisParams;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ConfigError {
    #[error("line {line}: expected key=value, got {text:?}")]
    Syntax { line: usize, text: String },
    #[error("line {line}: unknown key {key:?}")]
    UnknownKey { line: usize, key: String },
    #[error("line {line}: {key} given twice")]
    DuplicateKey { line: usize, key: String },
    #[error("line {line}: {key} = {value:?} does not parse")]
    BadValue { line: usize, key: String, value: String },
    #[error("{key}: {reason}")]
    OutOfRange { key: &'static str, reason: String },
}

/// The attack names `eval.attacks` understands.
pub const ATTACK_NAMES: [&str; 3] = ["fingerprint", "timing", "face"];

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub seed: Seed,
    /// Trials per (attack, policy) cell.
    pub trials: usize,
    pub output_dir: PathBuf,
    pub scenario: Scenario,
    pub synthesis: SynthesisParams,
    pub extract: ExtractParams,
    pub fp_attack: FpAttackConfig,
    pub face_attack: FaceAttackConfig,
    pub calibration_probes: usize,
    pub timing: TimingModel,
    pub attacks: Vec<String>,
    pub policies: Vec<DefensePolicy>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            seed: Seed(1),
            trials: 20,
            output_dir: PathBuf::from("out"),
            scenario: Scenario::default(),
            synthesis: SynthesisParams::default(),
            extract: ExtractParams::default(),
            fp_attack: FpAttackConfig::default(),
            face_attack: FaceAttackConfig::default(),
            calibration_probes: TimingAttackConfig::default().calibration_probes,
            timing: TimingModel::default(),
            attacks: vec!["fingerprint".into()],
            policies: vec![DefensePolicy::FULL],
        }
    }
}

/// Every accepted key, in the order [`ExperimentConfig::to_text`] writes them.
pub const KEYS: &[&str] = &[
    "seed",
    "trials",
    "output_dir",
    "match.dist_tol",
    "match.angle_tol",
    "match.tau",
    "target.minutiae",
    "target.width",
    "target.height",
    "synth.ridge_period",
    "synth.prototype_size",
    "synth.growth_iters_max",
    "synth.noise_dots",
    "synth.dot_radius_min",
    "synth.dot_radius_max",
    "synth.smoothing",
    "synth.margin",
    "extract.resolution",
    "extract.cell",
    "extract.border",
    "extract.merge",
    "extract.foreground_std",
    "extract.trace_len",
    "attack.fp.population",
    "attack.fp.init_min",
    "attack.fp.init_max",
    "attack.fp.weight_perturb",
    "attack.fp.weight_add",
    "attack.fp.weight_delete",
    "attack.fp.perturb_radius",
    "attack.fp.perturb_angle",
    "attack.fp.budget",
    "attack.fp.stall_limit",
    "attack.fp.max_moves",
    "attack.fp.relocate",
    "attack.fp.max_minutiae",
    "attack.face.steps",
    "attack.face.i_max",
    "attack.face.stall_limit",
    "attack.timing.calibration_probes",
    "timing.base",
    "timing.per_candidate",
    "timing.noise_sd",
    "timing.constant_time",
    "face.width",
    "face.height",
    "face.db_size",
    "face.k",
    "face.tau",
    "eval.attacks",
    "eval.policies",
];

fn num<T: FromStr>(v: &str) -> Option<T> {
    v.parse().ok()
}

fn real(v: &str) -> Option<f64> {
    v.parse::<f64>().ok().filter(|x| x.is_finite())
}

fn list(v: &str) -> impl Iterator<Item = &str> {
    v.split(',').map(str::trim).filter(|s| !s.is_empty())
}

impl ExperimentConfig {
    /// Parses and validates. Keys not given keep their defaults.
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut cfg = ExperimentConfig::default();
        let mut seen = HashSet::new();
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let content = raw.split_once('#').map_or(raw, |(c, _)| c).trim();
            if content.is_empty() {
                continue;
            }
            let Some((key, value)) = content.split_once('=') else {
                return Err(ConfigError::Syntax {
                    line,
                    text: raw.to_string(),
                });
            };
            let (key, value) = (key.trim(), value.trim());
            if !KEYS.contains(&key) {
                return Err(ConfigError::UnknownKey {
                    line,
                    key: key.to_string(),
                });
            }
            if !seen.insert(key.to_string()) {
                return Err(ConfigError::DuplicateKey {
                    line,
                    key: key.to_string(),
                });
            }
            cfg.set(key, value).ok_or_else(|| ConfigError::BadValue {
                line,
                key: key.to_string(),
                value: value.to_string(),
            })?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    /// Applies one value; `None` when it does not parse as the key's type.
    pub fn set(&mut self, key: &str, v: &str) -> Option<()> {
        let sc = &mut self.scenario;
        let fp = &mut self.fp_attack;
        match key {
            "seed" => self.seed = Seed(num(v)?),
            "trials" => self.trials = num(v)?,
            "output_dir" => self.output_dir = PathBuf::from(v),
            "match.dist_tol" => sc.match_params.dist_tol = real(v)?,
            "match.angle_tol" => sc.match_params.angle_tol = real(v)?,
            "match.tau" => sc.match_params.tau = real(v)?,
            "target.minutiae" => sc.target_minutiae = num(v)?,
            "target.width" => sc.fp_dims.0 = num(v)?,
            "target.height" => sc.fp_dims.1 = num(v)?,
            "synth.ridge_period" => self.synthesis.ridge_period = real(v)?,
            "synth.prototype_size" => self.synthesis.prototype_size = num(v)?,
            "synth.growth_iters_max" => self.synthesis.growth_iters_max = num(v)?,
            "synth.noise_dots" => self.synthesis.noise_dots = real(v)?,
            "synth.dot_radius_min" => self.synthesis.dot_radius.0 = real(v)?,
            "synth.dot_radius_max" => self.synthesis.dot_radius.1 = real(v)?,
            "synth.smoothing" => self.synthesis.smoothing = num(v)?,
            "synth.margin" => self.synthesis.margin = real(v)?,
            "extract.resolution" => self.extract.resolution = num(v)?,
            "extract.cell" => self.extract.cell = num(v)?,
            "extract.border" => self.extract.border = real(v)?,
            "extract.merge" => self.extract.merge = real(v)?,
            "extract.foreground_std" => self.extract.foreground_std = real(v)?,
            "extract.trace_len" => self.extract.trace_len = num(v)?,
            "attack.fp.population" => fp.population = num(v)?,
            "attack.fp.init_min" => fp.minutiae_init.0 = num(v)?,
            "attack.fp.init_max" => fp.minutiae_init.1 = num(v)?,
            "attack.fp.weight_perturb" => fp.weights.perturb = real(v)?,
            "attack.fp.weight_add" => fp.weights.add = real(v)?,
            "attack.fp.weight_delete" => fp.weights.delete = real(v)?,
            "attack.fp.perturb_radius" => fp.perturb_radius = real(v)?,
            "attack.fp.perturb_angle" => fp.perturb_angle = real(v)?,
            "attack.fp.budget" => fp.max_oracle_calls = num(v)?,
            "attack.fp.stall_limit" => fp.stall_limit = num(v)?,
            "attack.fp.max_moves" => fp.max_moves = num(v)?,
            "attack.fp.relocate" => fp.relocate = real(v)?,
            "attack.fp.max_minutiae" => fp.max_minutiae = num(v)?,
            "attack.face.steps" => self.face_attack.steps = list(v).map(real).collect::<Option<_>>()?,
            "attack.face.i_max" => self.face_attack.i_max = num(v)?,
            "attack.face.stall_limit" => self.face_attack.stall_limit = num(v)?,
            "attack.timing.calibration_probes" => self.calibration_probes = num(v)?,
            "timing.base" => self.timing.base = num(v)?,
            "timing.per_candidate" => self.timing.per_candidate = num(v)?,
            "timing.noise_sd" => self.timing.noise_sd = real(v)?,
            "timing.constant_time" => self.timing.constant_time = num(v)?,
            "face.width" => sc.face_dims.0 = num(v)?,
            "face.height" => sc.face_dims.1 = num(v)?,
            "face.db_size" => sc.face_db_size = num(v)?,
            "face.k" => sc.face_k = num(v)?,
            "face.tau" => sc.face_tau = real(v)?,
            "eval.attacks" => self.attacks = list(v).map(String::from).collect(),
            "eval.policies" => self.policies = list(v).map(|p| p.parse().ok()).collect::<Option<_>>()?,
            _ => return None,
        }
        Some(())
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        fn check(ok: bool, key: &'static str, reason: impl Into<String>) -> Result<(), ConfigError> {
            if ok {
                Ok(())
            } else {
                Err(ConfigError::OutOfRange {
                    key,
                    reason: reason.into(),
                })
            }
        }
        let range = |key: &'static str, e: &dyn std::fmt::Display| ConfigError::OutOfRange {
            key,
            reason: e.to_string(),
        };
        let sc = &self.scenario;
        check(self.trials >= 1, "trials", "at least one trial")?;
        sc.match_params.validate().map_err(|e| range("match", &e))?;
        check(
            (1..=MAX_MINUTIAE).contains(&sc.target_minutiae),
            "target.minutiae",
            "must lie in 1..=65535",
        )?;
        let side = MIN_EXTRACT_SIDE as u32..=u16::MAX as u32;
        check(
            side.contains(&sc.fp_dims.0) && side.contains(&sc.fp_dims.1),
            "target",
            "width and height must lie in 32..=65535",
        )?;
        self.synthesis.validate().map_err(|e| range("synth", &e))?;
        let ex = &self.extract;
        check(
            (1..=u16::MAX as u32).contains(&ex.resolution),
            "extract.resolution",
            "must lie in 1..=65535",
        )?;
        check(ex.cell >= 2, "extract.cell", "must be at least 2")?;
        check(
            ex.border >= 0.0 && ex.merge >= 0.0 && ex.foreground_std >= 0.0,
            "extract",
            "border, merge and foreground_std must be nonnegative",
        )?;
        check(ex.trace_len >= 1, "extract.trace_len", "must be at least 1")?;
        self.fp_attack.validate().map_err(|e| range("attack.fp", &e))?;
        check(
            self.face_attack.is_valid(),
            "attack.face.steps",
            "need a positive and a negative step",
        )?;
        check(self.face_attack.stall_limit >= 1, "attack.face.stall_limit", "must be at least 1")?;
        self.timing.validate().map_err(|e| range("timing", &e))?;
        let (fw, fh) = sc.face_dims;
        check(
            fw >= MIN_FACE_SIDE && fh >= MIN_FACE_SIDE && fw * fh <= 1 << 20,
            "face",
            "width and height must be at least 16 with at most 2^20 pixels",
        )?;
        check(
            (2..=4096).contains(&sc.face_db_size),
            "face.db_size",
            "must lie in 2..=4096",
        )?;
        check(
            sc.face_k >= 1 && sc.face_k < sc.face_db_size,
            "face.k",
            "must lie in 1..db_size",
        )?;
        check((0.0..=1.0).contains(&sc.face_tau), "face.tau", "must lie in [0, 1]")?;
        check(
            !self.attacks.is_empty() && self.attacks.iter().all(|a| ATTACK_NAMES.contains(&a.as_str())),
            "eval.attacks",
            "a nonempty subset of fingerprint, timing, face",
        )?;
        check(!self.policies.is_empty(), "eval.policies", "at least one policy")?;
        for p in &self.policies {
            p.validate().map_err(|e| range("eval.policies", &e))?;
        }
        Ok(())
    }

    pub fn timing_attack(&self) -> TimingAttackConfig {
        TimingAttackConfig {
            fp: self.fp_attack.clone(),
            calibration_probes: self.calibration_probes,
        }
    }

    pub fn attack_kinds(&self) -> Vec<AttackKind> {
        self.attacks
            .iter()
            .map(|a| match a.as_str() {
                "fingerprint" => AttackKind::Fingerprint(self.fp_attack.clone()),
                "timing" => AttackKind::Timing(self.timing_attack(), self.timing),
                _ => AttackKind::Face(self.face_attack.clone()),
            })
            .collect()
    }

    /// Every key with its current value; parses back to an equal config.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for key in KEYS {
            let _ = writeln!(out, "{key}={}", self.get(key));
        }
        out
    }

    fn get(&self, key: &str) -> String {
        let sc = &self.scenario;
        let fp = &self.fp_attack;
        let join = |v: Vec<String>| v.join(",");
        match key {
            "seed" => self.seed.0.to_string(),
            "trials" => self.trials.to_string(),
            "output_dir" => self.output_dir.display().to_string(),
            "match.dist_tol" => sc.match_params.dist_tol.to_string(),
            "match.angle_tol" => sc.match_params.angle_tol.to_string(),
            "match.tau" => sc.match_params.tau.to_string(),
            "target.minutiae" => sc.target_minutiae.to_string(),
            "target.width" => sc.fp_dims.0.to_string(),
            "target.height" => sc.fp_dims.1.to_string(),
            "synth.ridge_period" => self.synthesis.ridge_period.to_string(),
            "synth.prototype_size" => self.synthesis.prototype_size.to_string(),
            "synth.growth_iters_max" => self.synthesis.growth_iters_max.to_string(),
            "synth.noise_dots" => self.synthesis.noise_dots.to_string(),
            "synth.dot_radius_min" => self.synthesis.dot_radius.0.to_string(),
            "synth.dot_radius_max" => self.synthesis.dot_radius.1.to_string(),
            "synth.smoothing" => self.synthesis.smoothing.to_string(),
            "synth.margin" => self.synthesis.margin.to_string(),
            "extract.resolution" => self.extract.resolution.to_string(),
            "extract.cell" => self.extract.cell.to_string(),
            "extract.border" => self.extract.border.to_string(),
            "extract.merge" => self.extract.merge.to_string(),
            "extract.foreground_std" => self.extract.foreground_std.to_string(),
            "extract.trace_len" => self.extract.trace_len.to_string(),
            "attack.fp.population" => fp.population.to_string(),
            "attack.fp.init_min" => fp.minutiae_init.0.to_string(),
            "attack.fp.init_max" => fp.minutiae_init.1.to_string(),
            "attack.fp.weight_perturb" => fp.weights.perturb.to_string(),
            "attack.fp.weight_add" => fp.weights.add.to_string(),
            "attack.fp.weight_delete" => fp.weights.delete.to_string(),
            "attack.fp.perturb_radius" => fp.perturb_radius.to_string(),
            "attack.fp.perturb_angle" => fp.perturb_angle.to_string(),
            "attack.fp.budget" => fp.max_oracle_calls.to_string(),
            "attack.fp.stall_limit" => fp.stall_limit.to_string(),
            "attack.fp.max_moves" => fp.max_moves.to_string(),
            "attack.fp.relocate" => fp.relocate.to_string(),
            "attack.fp.max_minutiae" => fp.max_minutiae.to_string(),
            "attack.face.steps" => join(self.face_attack.steps.iter().map(f64::to_string).collect()),
            "attack.face.i_max" => self.face_attack.i_max.to_string(),
            "attack.face.stall_limit" => self.face_attack.stall_limit.to_string(),
            "attack.timing.calibration_probes" => self.calibration_probes.to_string(),
            "timing.base" => self.timing.base.to_string(),
            "timing.per_candidate" => self.timing.per_candidate.to_string(),
            "timing.noise_sd" => self.timing.noise_sd.to_string(),
            "timing.constant_time" => self.timing.constant_time.to_string(),
            "face.width" => sc.face_dims.0.to_string(),
            "face.height" => sc.face_dims.1.to_string(),
            "face.db_size" => sc.face_db_size.to_string(),
            "face.k" => sc.face_k.to_string(),
            "face.tau" => sc.face_tau.to_string(),
            "eval.attacks" => self.attacks.join(","),
            "eval.policies" => join(self.policies.iter().map(|p| p.to_string()).collect()),
            _ => unreachable!("key list and getter agree"),
        }
    }
}
