//! Tail probabilities of sup-norms, rate curves and the supporting monitors.
//!
//! Probabilities are estimated by plain Monte-Carlo over seeded draws. Every
//! draw index `i` uses `derive_seed(master, "draw", i)`, so the linear,
//! modified and nonlinear flows see the same initial data.

mod hyper;
mod scaling;
mod sup;

pub use hyper::{
    hyper_tail_check, log_tail_slope, CoeffSpec, HyperPoint, HyperReport, MIN_HYPER_SAMPLES,
};
pub use scaling::{
    error_scaling_study, gronwall_monitor, GronwallReport, ScalingConfig, ScalingRow, ScalingStudy,
    MIN_SCALING_SEEDS,
};
pub use sup::{
    mc_sup_tail, rate_curve, reference_rate, sample_sup_statistics, tail_from_sups, tune_z0,
    RateCurve, RatePoint, Sampling, TailConfig, MIN_TAIL_SAMPLES,
};

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};

/// Two-sided 95% normal quantile.
pub const Z95: f64 = 1.959963984540054;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FlowKind {
    Linear,
    Modified,
    Nonlinear,
}

impl FlowKind {
    pub const ALL: [FlowKind; 3] = [FlowKind::Linear, FlowKind::Modified, FlowKind::Nonlinear];

    pub fn as_str(self) -> &'static str {
        match self {
            FlowKind::Linear => "linear",
            FlowKind::Modified => "modified",
            FlowKind::Nonlinear => "nonlinear",
        }
    }
}

impl fmt::Display for FlowKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for FlowKind {
    type Err = LabError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "linear" => Ok(FlowKind::Linear),
            "modified" => Ok(FlowKind::Modified),
            "nonlinear" => Ok(FlowKind::Nonlinear),
            _ => Err(LabError::config(format!(
                "unknown flow '{s}' (expected linear, modified or nonlinear)"
            ))),
        }
    }
}

/// Wilson score interval at 95%.
pub fn wilson_interval(hits: u64, trials: u64) -> (f64, f64) {
    if trials == 0 {
        return (0.0, 1.0);
    }
    let n = trials as f64;
    let p = hits as f64 / n;
    let z2 = Z95 * Z95;
    let denom = 1.0 + z2 / n;
    let center = (p + z2 / (2.0 * n)) / denom;
    let half = Z95 * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt() / denom;
    (
        (center - half).max(0.0).min(p),
        (center + half).min(1.0).max(p),
    )
}

/// `e^{-r²/σ²}`, the exceedance law of a complex Gaussian of variance `σ²`.
pub fn exact_pointwise_tail(r: f64, sigma2: f64) -> Result<f64> {
    if !(sigma2 > 0.0 && sigma2.is_finite()) {
        return Err(LabError::config(format!(
            "sigma2 must be > 0, got {sigma2}"
        )));
    }
    if r.is_nan() || r < 0.0 {
        return Err(LabError::config(format!("r must be >= 0, got {r}")));
    }
    Ok((-r * r / sigma2).exp())
}

/// Monte-Carlo estimate of `P(sup |u| > z₀ ε^{-1/2})`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TailEstimate {
    pub flow: FlowKind,
    pub epsilon: f64,
    pub z0: f64,
    /// `z₀ ε^{-1/2}`
    pub threshold: f64,
    pub trials: u64,
    pub hits: u64,
    pub p_hat: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    /// `−ε ln p̂`; `+inf` when censored.
    pub rate: f64,
    /// `−ε ln ci_high`, or `ε ln trials` when censored.
    pub rate_low: f64,
    /// `−ε ln ci_low`.
    pub rate_high: f64,
    /// No exceedance observed.
    pub censored: bool,
}

impl TailEstimate {
    pub fn from_counts(
        flow: FlowKind,
        epsilon: f64,
        z0: f64,
        hits: u64,
        trials: u64,
    ) -> Result<Self> {
        if trials == 0 || hits > trials {
            return Err(LabError::contract(format!(
                "invalid counts: {hits} hits out of {trials} trials"
            )));
        }
        let p_hat = hits as f64 / trials as f64;
        let (ci_low, ci_high) = wilson_interval(hits, trials);
        let rate_of = |p: f64| 0.0 - epsilon * p.ln();
        let censored = hits == 0;
        Ok(TailEstimate {
            flow,
            epsilon,
            z0,
            threshold: z0 / epsilon.sqrt(),
            trials,
            hits,
            p_hat,
            ci_low,
            ci_high,
            rate: if censored {
                f64::INFINITY
            } else {
                rate_of(p_hat)
            },
            rate_low: if censored {
                epsilon * (trials as f64).ln()
            } else {
                rate_of(ci_high)
            },
            rate_high: rate_of(ci_low),
            censored,
        })
    }

    /// Pools two estimates of the same quantity.
    pub fn merge(&self, other: &TailEstimate) -> Result<Self> {
        if self.flow != other.flow || self.epsilon != other.epsilon || self.z0 != other.z0 {
            return Err(LabError::contract(
                "cannot merge estimates of different quantities",
            ));
        }
        TailEstimate::from_counts(
            self.flow,
            self.epsilon,
            self.z0,
            self.hits + other.hits,
            self.trials + other.trials,
        )
    }
}

fn median(values: &mut [f64]) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    values.sort_by(f64::total_cmp);
    let m = values.len();
    if m % 2 == 1 {
        values[m / 2]
    } else {
        0.5 * (values[m / 2 - 1] + values[m / 2])
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_tail_examples() {
        let s2: f64 = 2.7;
        assert!((exact_pointwise_tail(s2.sqrt(), s2).unwrap() - (-1.0f64).exp()).abs() < 1e-15);
        assert_eq!(exact_pointwise_tail(0.0, s2).unwrap(), 1.0);
        assert!(exact_pointwise_tail(1.0, 0.0).is_err());
        assert!(exact_pointwise_tail(-1.0, 1.0).is_err());
    }

    #[test]
    fn wilson_brackets_estimate() {
        for (h, n) in [(0, 10), (1, 10), (5, 10), (10, 10), (37, 100_000)] {
            let (lo, hi) = wilson_interval(h, n);
            let p = h as f64 / n as f64;
            assert!(lo <= p && p <= hi && 0.0 <= lo && hi <= 1.0, "{h}/{n}");
        }
        let (lo, hi) = wilson_interval(50, 100);
        assert!((lo - 0.4038).abs() < 1e-4 && (hi - 0.5962).abs() < 1e-4);
    }

    #[test]
    fn censored_estimate() {
        let t = TailEstimate::from_counts(FlowKind::Linear, 0.1, 1.0, 0, 1000).unwrap();
        assert!(t.censored && t.rate.is_infinite());
        assert!((t.rate_low - 0.1 * 1000f64.ln()).abs() < 1e-15);
        let full = TailEstimate::from_counts(FlowKind::Linear, 0.1, 0.0, 1000, 1000).unwrap();
        assert_eq!(full.rate, 0.0);
        assert!(full.rate.is_sign_positive());
    }

    #[test]
    fn merge_adds_counts() {
        let a = TailEstimate::from_counts(FlowKind::Modified, 0.1, 1.0, 3, 100).unwrap();
        let b = TailEstimate::from_counts(FlowKind::Modified, 0.1, 1.0, 5, 300).unwrap();
        let m = a.merge(&b).unwrap();
        assert_eq!((m.hits, m.trials), (8, 400));
        let c = TailEstimate::from_counts(FlowKind::Linear, 0.1, 1.0, 5, 300).unwrap();
        assert!(a.merge(&c).is_err());
    }

    #[test]
    fn flow_kind_parses() {
        for f in FlowKind::ALL {
            assert_eq!(f.as_str().parse::<FlowKind>().unwrap(), f);
        }
        assert!("quadratic".parse::<FlowKind>().is_err());
    }

    #[test]
    fn median_even_and_odd() {
        assert_eq!(median(&mut [3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(&mut [4.0, 1.0, 2.0, 3.0]), 2.5);
    }
}
