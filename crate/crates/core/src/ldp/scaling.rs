//! How far the nonlinear flow drifts from the modified linear flow.

use std::f64::consts::PI;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::median;
use crate::error::{LabError, Result};
use crate::modified::{error_trajectory, AppFlow};
use crate::random_data::make_initial_data;
use crate::seed::{derive_seed, labels};
use crate::solver::{evolve, SolverConfig, Trajectory};
use crate::spectral::LatticeSpec;

/// Smallest number of seeds per `ε` accepted by [`error_scaling_study`].
pub const MIN_SCALING_SEEDS: usize = 50;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScalingConfig {
    pub theta: f64,
    pub cutoff: usize,
    /// Physical grid; `None` uses `4(2N + 1)`.
    pub grid: Option<usize>,
    pub dt: f64,
    /// `T_ε = c_T / ε` (`c_T` itself when `ε = 0`).
    pub horizon_multiplier: f64,
    pub record_stride: usize,
    pub master_seed: u64,
    /// Margin `δ` in the normalizations `ε^{1/2−δ}` and `ε^{−1/2+δ}`.
    pub delta: f64,
}

impl ScalingConfig {
    pub fn new(theta: f64, cutoff: usize) -> Self {
        ScalingConfig {
            theta,
            cutoff,
            grid: None,
            dt: SolverConfig::DEFAULT_DT,
            horizon_multiplier: 1.0,
            record_stride: 1,
            master_seed: 0,
            delta: 0.1,
        }
    }

    pub fn lattice(&self) -> Result<LatticeSpec> {
        match self.grid {
            Some(m) => LatticeSpec::with_grid(self.cutoff, m),
            None => LatticeSpec::new(self.cutoff, LatticeSpec::DEFAULT_OVERSAMPLE),
        }
    }

    pub fn solver(&self, epsilon: f64) -> Result<SolverConfig> {
        let horizon = if epsilon > 0.0 {
            self.horizon_multiplier / epsilon
        } else {
            self.horizon_multiplier
        };
        let cfg = SolverConfig::new(epsilon, self.lattice()?)
            .with_dt(self.dt)
            .with_horizon(horizon)
            .with_stride(self.record_stride);
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScalingRow {
    pub epsilon: f64,
    pub seeds: usize,
    /// Runs excluded because the solver aborted.
    pub aborted: usize,
    /// Median over seeds of `max_t ‖u − u_app‖_{H^s}`.
    pub median: f64,
    /// `median / ε^{1/2−δ}`
    pub ratio_bootstrap: f64,
    /// `median / ε^{−1/2+δ}`
    pub ratio_error_control: f64,
    /// Fraction of runs whose maximum is attained at `t > 0`.
    pub max_after_start: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScalingStudy {
    pub s: f64,
    pub rows: Vec<ScalingRow>,
    /// `ratio_bootstrap` does not grow as `ε` decreases.
    pub ratio_non_increasing: bool,
    pub ratios_finite: bool,
}

/// Median running-max `H^s` error between the nonlinear and modified flows for each `ε`.
pub fn error_scaling_study(
    eps_list: &[f64],
    samples: usize,
    s: f64,
    cfg: &ScalingConfig,
) -> Result<ScalingStudy> {
    if samples < MIN_SCALING_SEEDS {
        return Err(LabError::config(format!(
            "scaling study needs at least {MIN_SCALING_SEEDS} seeds per epsilon, got {samples}"
        )));
    }
    if eps_list.is_empty() {
        return Err(LabError::config("empty epsilon list"));
    }
    let mut rows = Vec::with_capacity(eps_list.len());
    for &epsilon in eps_list {
        let solver = cfg.solver(epsilon)?;
        let runs: Vec<Result<(f64, bool)>> = (0..samples as u64)
            .into_par_iter()
            .map(|i| {
                let seed = derive_seed(cfg.master_seed, labels::DRAW, i);
                let draw = make_initial_data(cfg.theta, cfg.cutoff, seed)?;
                let traj = evolve(draw.field(), &solver)?;
                let flow = AppFlow::new(draw, epsilon)?;
                let errs = error_trajectory(&traj, &flow, s)?;
                let last = errs.last().expect("non-empty trajectory");
                let after_start = errs.iter().skip(1).any(|e| e.err_hs == last.running_max);
                Ok((last.running_max, after_start))
            })
            .collect();
        let mut maxima = Vec::with_capacity(samples);
        let mut after = 0usize;
        let mut aborted = 0usize;
        for r in runs {
            match r {
                Ok((m, a)) => {
                    maxima.push(m);
                    after += a as usize;
                }
                Err(LabError::NonFinite { .. } | LabError::BlowUp { .. }) => aborted += 1,
                Err(e) => return Err(e),
            }
        }
        let kept = maxima.len();
        let med = median(&mut maxima);
        rows.push(ScalingRow {
            epsilon,
            seeds: samples,
            aborted,
            median: med,
            ratio_bootstrap: med / epsilon.powf(0.5 - cfg.delta),
            ratio_error_control: med / epsilon.powf(-0.5 + cfg.delta),
            max_after_start: if kept > 0 {
                after as f64 / kept as f64
            } else {
                f64::NAN
            },
        });
    }
    let mut by_eps: Vec<&ScalingRow> = rows.iter().collect();
    by_eps.sort_by(|a, b| b.epsilon.total_cmp(&a.epsilon));
    let ratios_finite = rows.iter().all(|r| r.ratio_bootstrap.is_finite());
    let ratio_non_increasing = ratios_finite
        && by_eps
            .windows(2)
            .all(|w| w[1].ratio_bootstrap <= w[0].ratio_bootstrap);
    Ok(ScalingStudy {
        s,
        rows,
        ratio_non_increasing,
        ratios_finite,
    })
}

/// Fitted Gronwall constant, or `None` when the bound is vacuous (`ε = 0` or `B ≡ 0`).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GronwallReport {
    pub epsilon: f64,
    pub c_star: Option<f64>,
    /// Time at which `C*` is attained.
    pub t_star: f64,
    /// `A` at the first snapshot.
    pub a_offset: f64,
}

impl GronwallReport {
    pub fn is_active(&self) -> bool {
        self.c_star.is_some()
    }
}

const GRONWALL_GUARD: f64 = 1e-12;

/// `C* = max_t [A(t) − A(0)] / (ε² · 2πμ · B(t) + guard)`, with
/// `A(t) = ‖u − u_app‖_{H^s}` and `B(t) = ∫₀ᵗ A` (trapezoidal on the snapshots).
pub fn gronwall_monitor(
    nl: &Trajectory,
    flow: &AppFlow,
    s: f64,
    epsilon: f64,
) -> Result<GronwallReport> {
    if epsilon != flow.epsilon {
        return Err(LabError::contract(format!(
            "monitor epsilon {epsilon} differs from flow epsilon {}",
            flow.epsilon
        )));
    }
    let errs = error_trajectory(nl, flow, s)?;
    let a_offset = errs[0].err_hs;
    let inactive = GronwallReport {
        epsilon,
        c_star: None,
        t_star: 0.0,
        a_offset,
    };
    if epsilon == 0.0 {
        return Ok(inactive);
    }
    let mut b = 0.0;
    let mut any_b = false;
    let mut best: Option<(f64, f64)> = None;
    let weight = epsilon * epsilon * 2.0 * PI * flow.mu;
    for w in errs.windows(2) {
        b += 0.5 * (w[0].err_hs + w[1].err_hs) * (w[1].t - w[0].t);
        any_b |= b > 0.0;
        let c = (w[1].err_hs - a_offset) / (weight * b + GRONWALL_GUARD);
        if best.is_none_or(|(v, _)| c > v) {
            best = Some((c, w[1].t));
        }
    }
    match best {
        Some((c, t)) if any_b => Ok(GronwallReport {
            epsilon,
            c_star: Some(c),
            t_star: t,
            a_offset,
        }),
        _ => Ok(inactive),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_epsilon_is_inactive() {
        let draw = make_initial_data(0.25, 8, 1).unwrap();
        let solver = ScalingConfig::new(0.25, 8).solver(0.0).unwrap();
        let traj = evolve(draw.field(), &solver).unwrap();
        let flow = AppFlow::new(draw, 0.0).unwrap();
        let rep = gronwall_monitor(&traj, &flow, 0.625, 0.0).unwrap();
        assert!(!rep.is_active());
    }

    #[test]
    fn gronwall_is_deterministic() {
        let cfg = ScalingConfig {
            dt: 0.02,
            ..ScalingConfig::new(0.25, 16)
        };
        let run = || {
            let draw = make_initial_data(0.25, 16, 11).unwrap();
            let traj = evolve(draw.field(), &cfg.solver(0.1).unwrap()).unwrap();
            gronwall_monitor(&traj, &AppFlow::new(draw, 0.1).unwrap(), 0.625, 0.1).unwrap()
        };
        let (a, b) = (run(), run());
        let c = a.c_star.unwrap();
        assert!(c.is_finite());
        assert_eq!(c.to_bits(), b.c_star.unwrap().to_bits());
    }

    #[test]
    fn zero_epsilon_errors_vanish() {
        let cfg = ScalingConfig {
            horizon_multiplier: 2.0,
            ..ScalingConfig::new(0.25, 16)
        };
        let st = error_scaling_study(&[0.0], 50, 0.625, &cfg).unwrap();
        assert!(st.rows[0].median < 1e-12);
    }

    #[test]
    fn too_few_seeds() {
        let cfg = ScalingConfig::new(0.25, 8);
        assert!(matches!(
            error_scaling_study(&[0.1], 49, 0.6, &cfg),
            Err(LabError::Config(_))
        ));
    }
}
