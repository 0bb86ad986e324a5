//! Experiment configuration: TOML file, command-line overrides, defaults.
//!
//! Precedence is flags > file > defaults. The config hash covers every field
//! that can change a result; `output_dir` and `workers` are excluded.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{LabError, Result};
use crate::ldp::FlowKind;
use crate::records::Format;
use crate::resonance::{ResonanceQuery, KEY_SUM_MAX_CUTOFF};

/// Environment variable holding the default output root.
pub const OUTPUT_ROOT_ENV: &str = "NLSLAB_OUTPUT_ROOT";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Subcommand {
    SampleLdp,
    RateCurve,
    CompareApp,
    ResonanceSums,
    ChaosStat,
    HyperCheck,
    EvolveOne,
}

impl Subcommand {
    pub const ALL: [Subcommand; 7] = [
        Subcommand::SampleLdp,
        Subcommand::RateCurve,
        Subcommand::CompareApp,
        Subcommand::ResonanceSums,
        Subcommand::ChaosStat,
        Subcommand::HyperCheck,
        Subcommand::EvolveOne,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Subcommand::SampleLdp => "sample-ldp",
            Subcommand::RateCurve => "rate-curve",
            Subcommand::CompareApp => "compare-app",
            Subcommand::ResonanceSums => "resonance-sums",
            Subcommand::ChaosStat => "chaos-stat",
            Subcommand::HyperCheck => "hyper-check",
            Subcommand::EvolveOne => "evolve-one",
        }
    }
}

impl fmt::Display for Subcommand {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Subcommand {
    type Err = LabError;

    fn from_str(s: &str) -> Result<Self> {
        Subcommand::ALL
            .into_iter()
            .find(|c| c.as_str() == s)
            .ok_or_else(|| LabError::config(format!("unknown subcommand '{s}'")))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub epsilon: f64,
    pub eps_list: Vec<f64>,
    pub theta: f64,
    /// Threshold; when absent it is tuned on a pilot ensemble to `target_p`.
    pub z0: Option<f64>,
    pub target_p: f64,
    pub pilot_samples: usize,
    pub cutoff: usize,
    pub oversample: usize,
    pub dt: f64,
    pub horizon_multiplier: f64,
    /// Time spacing of closed-form sup grids; default `min(0.05, 1/(4N))`.
    pub time_step: Option<f64>,
    /// Observe a single `(t, x)` instead of the space-time grid.
    pub point: Option<[f64; 2]>,
    pub s: f64,
    pub delta5: f64,
    pub samples: usize,
    pub master_seed: u64,
    pub flow: FlowKind,
    pub format: Format,
    /// Snapshot stride for `evolve-one` and `compare-app`.
    pub stride: usize,
    /// Seeds per `ε` for the Gronwall monitor in `compare-app`.
    pub gronwall_seeds: usize,
    pub key_cutoff: i64,
    pub key_s: f64,
    pub key_k_list: Vec<i64>,
    pub chaos_n: i64,
    pub chaos_dyads: [u32; 3],
    pub chaos_tau: Vec<f64>,
    pub hyper_order: usize,
    /// Diagonal coefficients `c_n^k` on `|n| ≤ hyper_modes`.
    pub hyper_modes: usize,
    pub hyper_lambdas: Vec<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub workers: Option<usize>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            epsilon: 0.125,
            eps_list: vec![0.25, 0.125, 0.0625],
            theta: 0.25,
            z0: None,
            target_p: 0.01,
            pilot_samples: 10_000,
            cutoff: 32,
            oversample: 4,
            dt: 1e-2,
            horizon_multiplier: 1.0,
            time_step: None,
            point: None,
            s: 0.625,
            delta5: 0.05,
            samples: 1000,
            master_seed: 0,
            flow: FlowKind::Modified,
            format: Format::Csv,
            stride: 10,
            gronwall_seeds: 10,
            key_cutoff: 2048,
            key_s: 0.6,
            key_k_list: vec![8, 16, 32, 64, 128, 256, 512],
            chaos_n: 4,
            chaos_dyads: [4, 4, 4],
            chaos_tau: vec![0.0, 1.0],
            hyper_order: 1,
            hyper_modes: 0,
            hyper_lambdas: (1..=12).map(|i| 0.25 * i as f64).collect(),
            output_dir: None,
            workers: None,
        }
    }
}

/// Values given on the command line; `None` leaves the file/default value.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Overrides {
    pub epsilon: Option<f64>,
    pub eps_list: Option<Vec<f64>>,
    pub theta: Option<f64>,
    pub z0: Option<f64>,
    pub cutoff: Option<usize>,
    pub samples: Option<usize>,
    pub master_seed: Option<u64>,
    pub flow: Option<FlowKind>,
    pub dt: Option<f64>,
    pub s: Option<f64>,
    pub format: Option<Format>,
    pub output_dir: Option<PathBuf>,
    pub workers: Option<usize>,
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| LabError::config(format!("config file: {e}")))
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| LabError::io(path, e))?;
        Self::from_toml_str(&text)
    }

    /// Defaults, then the file (if any), then the flags.
    pub fn load(file: Option<&Path>, overrides: &Overrides) -> Result<Self> {
        let mut cfg = match file {
            Some(p) => Self::from_file(p)?,
            None => Self::default(),
        };
        cfg.apply(overrides);
        Ok(cfg)
    }

    pub fn apply(&mut self, o: &Overrides) {
        macro_rules! set {
            ($($f:ident),*) => { $( if let Some(v) = &o.$f { self.$f = v.clone(); } )* };
        }
        set!(
            epsilon,
            eps_list,
            theta,
            cutoff,
            samples,
            master_seed,
            flow,
            dt,
            s,
            format
        );
        if o.z0.is_some() {
            self.z0 = o.z0;
        }
        if o.output_dir.is_some() {
            self.output_dir = o.output_dir.clone();
        }
        if o.workers.is_some() {
            self.workers = o.workers;
        }
    }

    /// First 16 hex digits of SHA-256 over the result-relevant fields.
    pub fn config_hash(&self) -> String {
        let canonical = ExperimentConfig {
            output_dir: None,
            workers: None,
            ..self.clone()
        };
        let json = serde_json::to_string(&canonical).expect("config serializes");
        Sha256::digest(json.as_bytes())
            .iter()
            .take(8)
            .map(|b| format!("{b:02x}"))
            .collect()
    }

    /// JSON of the result-relevant fields, as stored next to the outputs.
    pub fn canonical_json(&self) -> String {
        let canonical = ExperimentConfig {
            output_dir: None,
            workers: None,
            ..self.clone()
        };
        serde_json::to_string_pretty(&canonical).expect("config serializes")
    }

    /// `output_dir`, else `$NLSLAB_OUTPUT_ROOT/<subcommand>`, else `nlslab-out/<subcommand>`.
    pub fn resolve_output_dir(&self, sub: Subcommand) -> PathBuf {
        if let Some(d) = &self.output_dir {
            return d.clone();
        }
        let root = std::env::var_os(OUTPUT_ROOT_ENV)
            .map(PathBuf::from)
            .unwrap_or_else(|| PathBuf::from("nlslab-out"));
        root.join(sub.as_str())
    }

    /// Checks every precondition `sub` relies on.
    pub fn validate_for(&self, sub: Subcommand) -> Result<()> {
        let bad = |msg: String| Err(LabError::config(msg));
        let positive = |name: &str, v: f64| -> Result<()> {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(LabError::config(format!("{name} must be > 0, got {v}")))
            }
        };
        positive("theta", self.theta)?;
        positive("dt", self.dt)?;
        if self.cutoff < 1 {
            return bad("cutoff must be >= 1".into());
        }
        if self.oversample < 1 {
            return bad("oversample must be >= 1".into());
        }
        if self.samples < 1 {
            return bad("samples must be >= 1".into());
        }
        if self.stride < 1 {
            return bad("stride must be >= 1".into());
        }
        if let Some(z0) = self.z0 {
            if !(z0 >= 0.0 && z0.is_finite()) {
                return bad(format!("z0 must be >= 0, got {z0}"));
            }
        }
        if let Some(0) = self.workers {
            return bad("workers must be >= 1".into());
        }
        match sub {
            Subcommand::SampleLdp => {
                positive("epsilon", self.epsilon)?;
                self.check_tuning()?;
            }
            Subcommand::RateCurve => {
                if self.eps_list.len() < 3 {
                    return bad("rate-curve needs eps_list with at least three values".into());
                }
                for &e in &self.eps_list {
                    positive("eps_list entry", e)?;
                }
                if self.samples < crate::ldp::MIN_TAIL_SAMPLES {
                    return bad(format!(
                        "rate-curve needs samples >= {}, got {}",
                        crate::ldp::MIN_TAIL_SAMPLES,
                        self.samples
                    ));
                }
                self.check_tuning()?;
            }
            Subcommand::CompareApp => {
                if self.eps_list.is_empty() || self.eps_list.iter().any(|e| e.is_nan() || *e < 0.0)
                {
                    return bad("compare-app needs a non-empty eps_list of values >= 0".into());
                }
                if self.samples < crate::ldp::MIN_SCALING_SEEDS {
                    return bad(format!(
                        "compare-app needs samples >= {}, got {}",
                        crate::ldp::MIN_SCALING_SEEDS,
                        self.samples
                    ));
                }
            }
            Subcommand::ResonanceSums => {
                if !(0..=KEY_SUM_MAX_CUTOFF).contains(&self.key_cutoff) {
                    return bad(format!(
                        "key_cutoff must be in [0, {KEY_SUM_MAX_CUTOFF}], got {}",
                        self.key_cutoff
                    ));
                }
                if self.key_k_list.is_empty() {
                    return bad("key_k_list is empty".into());
                }
                ResonanceQuery {
                    k: 0,
                    cutoff: self.key_cutoff,
                    s: self.key_s,
                    theta: self.theta,
                    delta5: self.delta5,
                }
                .validate()?;
            }
            Subcommand::ChaosStat => {
                if self.chaos_tau.is_empty() || self.chaos_tau.iter().any(|t| !t.is_finite()) {
                    return bad("chaos_tau must be a non-empty list of finite times".into());
                }
                if !(self.epsilon >= 0.0 && self.epsilon.is_finite()) {
                    return bad(format!("epsilon must be >= 0, got {}", self.epsilon));
                }
                if self.samples < 2 {
                    return bad("chaos-stat needs at least two draws".into());
                }
            }
            Subcommand::HyperCheck => {
                if !(1..=3).contains(&self.hyper_order) {
                    return bad(format!(
                        "hyper_order must be 1, 2 or 3, got {}",
                        self.hyper_order
                    ));
                }
                if self.hyper_lambdas.is_empty() {
                    return bad("hyper_lambdas is empty".into());
                }
                if self.samples < crate::ldp::MIN_HYPER_SAMPLES {
                    return bad(format!(
                        "hyper-check needs samples >= {}, got {}",
                        crate::ldp::MIN_HYPER_SAMPLES,
                        self.samples
                    ));
                }
            }
            Subcommand::EvolveOne => {
                if !(self.epsilon >= 0.0 && self.epsilon.is_finite()) {
                    return bad(format!("epsilon must be >= 0, got {}", self.epsilon));
                }
                if !(self.horizon_multiplier >= 0.0 && self.horizon_multiplier.is_finite()) {
                    return bad("horizon_multiplier must be >= 0".into());
                }
            }
        }
        Ok(())
    }

    fn check_tuning(&self) -> Result<()> {
        if self.z0.is_none() {
            let k = (self.target_p * self.pilot_samples as f64).round();
            if !(self.target_p > 0.0 && self.target_p < 1.0) || k < 10.0 {
                return Err(LabError::config(format!(
                    "z0 not given and target_p = {} cannot be tuned with {} pilot samples",
                    self.target_p, self.pilot_samples
                )));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn precedence_flags_over_file_over_defaults() {
        let file = ExperimentConfig::from_toml_str("theta = 0.3\nsamples = 77\n").unwrap();
        assert_eq!(file.theta, 0.3);
        assert_eq!(file.cutoff, ExperimentConfig::default().cutoff);
        let mut cfg = file;
        cfg.apply(&Overrides {
            samples: Some(5),
            ..Default::default()
        });
        assert_eq!((cfg.theta, cfg.samples), (0.3, 5));
    }

    #[test]
    fn unknown_keys_rejected() {
        assert!(matches!(
            ExperimentConfig::from_toml_str("thetta = 0.3"),
            Err(LabError::Config(_))
        ));
    }

    #[test]
    fn hash_ignores_workers_and_output() {
        let a = ExperimentConfig::default();
        let b = ExperimentConfig {
            workers: Some(3),
            output_dir: Some("x".into()),
            ..a.clone()
        };
        assert_eq!(a.config_hash(), b.config_hash());
        let c = ExperimentConfig {
            master_seed: 1,
            ..a.clone()
        };
        assert_ne!(a.config_hash(), c.config_hash());
        assert_eq!(a.config_hash().len(), 16);
    }

    #[test]
    fn validation_names_constraint() {
        let cfg = ExperimentConfig {
            theta: -1.0,
            ..Default::default()
        };
        let err = cfg.validate_for(Subcommand::EvolveOne).unwrap_err();
        assert!(err.to_string().contains("theta"));
        let cfg = ExperimentConfig {
            eps_list: vec![0.1, 0.05],
            ..Default::default()
        };
        assert!(cfg.validate_for(Subcommand::RateCurve).is_err());
    }

    #[test]
    fn subcommand_names_round_trip() {
        for s in Subcommand::ALL {
            assert_eq!(s.as_str().parse::<Subcommand>().unwrap(), s);
        }
    }
}
