//! Sup-norm sampling of the three flows and the resulting tail estimates.
//!
//! The closed-form flows (linear and modified) are evaluated on a uniform
//! time grid of spacing at most `min(0.05, 1/(4N))`, advancing each mode by a
//! fixed phase per time step and resynchronising from the exact phase every
//! [`RESYNC`] steps. The nonlinear flow is sampled at solver snapshots of the
//! same spacing (rounded to a multiple of `dt`). All sups are grid maxima and
//! therefore lower bounds for the continuum sup.

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{FlowKind, TailEstimate};
use crate::error::{LabError, Result};
use crate::modified::AppFlow;
use crate::random_data::{make_initial_data, truncated_variance};
use crate::seed::{derive_seed, labels};
use crate::solver::{SolverConfig, SplitStepper, BLOWUP_SUP};
use crate::spectral::{GridTransform, LatticeSpec, SpectralField};

/// Smallest ensemble accepted by [`mc_sup_tail`].
pub const MIN_TAIL_SAMPLES: usize = 1000;

const RESYNC: usize = 64;

/// Where the flow is observed.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Sampling {
    /// Time grid on `[0, T_ε]` times the spatial lattice.
    Grid,
    /// A single space-time point.
    Point { t: f64, x: f64 },
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TailConfig {
    pub epsilon: f64,
    pub theta: f64,
    pub z0: f64,
    pub cutoff: usize,
    pub oversample: usize,
    /// `T_ε = c_T / ε`
    pub horizon_multiplier: f64,
    pub samples: usize,
    pub master_seed: u64,
    pub sampling: Sampling,
    /// Overrides the default time spacing `min(0.05, 1/(4N))`.
    pub time_step: Option<f64>,
    pub solver_dt: f64,
}

impl TailConfig {
    pub fn new(epsilon: f64, theta: f64, cutoff: usize) -> Self {
        TailConfig {
            epsilon,
            theta,
            z0: 1.0,
            cutoff,
            oversample: LatticeSpec::DEFAULT_OVERSAMPLE,
            horizon_multiplier: 1.0,
            samples: 10_000,
            master_seed: 0,
            sampling: Sampling::Grid,
            time_step: None,
            solver_dt: SolverConfig::DEFAULT_DT,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon > 0.0 && self.epsilon.is_finite()) {
            return Err(LabError::config(format!(
                "epsilon must be > 0, got {}",
                self.epsilon
            )));
        }
        if !(self.theta > 0.0 && self.theta.is_finite()) {
            return Err(LabError::config(format!(
                "theta must be > 0, got {}",
                self.theta
            )));
        }
        if !(self.z0 >= 0.0 && self.z0.is_finite()) {
            return Err(LabError::config(format!(
                "z0 must be >= 0, got {}",
                self.z0
            )));
        }
        if self.cutoff < 1 {
            return Err(LabError::config("cutoff must be >= 1"));
        }
        if self.oversample < 1 {
            return Err(LabError::config("oversample must be >= 1"));
        }
        if !(self.horizon_multiplier >= 0.0 && self.horizon_multiplier.is_finite()) {
            return Err(LabError::config(format!(
                "horizon multiplier must be >= 0, got {}",
                self.horizon_multiplier
            )));
        }
        if self.samples < 1 {
            return Err(LabError::config("samples must be >= 1"));
        }
        if let Some(h) = self.time_step {
            if !(h > 0.0 && h.is_finite()) {
                return Err(LabError::config(format!("time step must be > 0, got {h}")));
            }
        }
        if !(self.solver_dt > 0.0 && self.solver_dt.is_finite()) {
            return Err(LabError::config(format!(
                "solver dt must be > 0, got {}",
                self.solver_dt
            )));
        }
        if let Sampling::Point { t, x } = self.sampling {
            if !(t >= 0.0 && t.is_finite() && x.is_finite()) {
                return Err(LabError::config(format!(
                    "invalid sampling point ({t}, {x})"
                )));
            }
        }
        Ok(())
    }

    pub fn horizon(&self) -> f64 {
        self.horizon_multiplier / self.epsilon
    }

    pub fn threshold(&self) -> f64 {
        self.z0 / self.epsilon.sqrt()
    }

    pub fn lattice(&self) -> Result<LatticeSpec> {
        LatticeSpec::new(self.cutoff, self.oversample)
    }

    /// `(J, h)`: the closed-form flows are sampled at `j h`, `j = 0..=J`, `J h = T`.
    pub fn time_grid(&self) -> (usize, f64) {
        let h_max = self
            .time_step
            .unwrap_or_else(|| 0.05f64.min(0.25 / self.cutoff as f64));
        let horizon = self.horizon();
        if horizon == 0.0 {
            return (0, 0.0);
        }
        let steps = (horizon / h_max - 1e-9).ceil().max(1.0) as usize;
        (steps, horizon / steps as f64)
    }

    fn solver_config(&self) -> Result<SolverConfig> {
        let horizon = match self.sampling {
            Sampling::Grid => self.horizon(),
            Sampling::Point { t, .. } => t,
        };
        let cfg = SolverConfig::new(self.epsilon, self.lattice()?)
            .with_dt(self.solver_dt)
            .with_horizon(horizon);
        cfg.validate()?;
        Ok(cfg)
    }
}

/// Per-thread buffers for closed-form grid sups.
struct GridSampler {
    transform: GridTransform,
    samples: Vec<Complex64>,
    amps: Vec<Complex64>,
    step: Vec<Complex64>,
}

impl GridSampler {
    fn new(grid: usize) -> Self {
        GridSampler {
            transform: GridTransform::new(grid),
            samples: vec![Complex64::ZERO; grid],
            amps: Vec::new(),
            step: Vec::new(),
        }
    }

    fn sup(&mut self, a0: &[Complex64], freqs: &[f64], steps: usize, h: f64) -> f64 {
        self.amps.clear();
        self.amps.extend_from_slice(a0);
        self.step.clear();
        self.step
            .extend(freqs.iter().map(|w| Complex64::from_polar(1.0, w * h)));
        let mut best = 0.0f64;
        for j in 0..=steps {
            if j > 0 {
                if j % RESYNC == 0 {
                    let t = j as f64 * h;
                    for ((a, b), w) in self.amps.iter_mut().zip(a0).zip(freqs) {
                        *a = b * Complex64::from_polar(1.0, w * t);
                    }
                } else {
                    for (a, s) in self.amps.iter_mut().zip(&self.step) {
                        *a *= s;
                    }
                }
            }
            self.transform
                .synthesize_slice(&self.amps, &mut self.samples);
            best = self
                .samples
                .iter()
                .map(|z| z.norm_sqr())
                .fold(best, f64::max);
        }
        best.sqrt()
    }
}

fn point_value(amps: &[Complex64], freqs: &[f64], t: f64, x: f64) -> f64 {
    let c = (amps.len() / 2) as i64;
    amps.iter()
        .zip(freqs)
        .zip(-c..=c)
        .map(|((a, w), n)| a * Complex64::from_polar(1.0, n as f64 * x + w * t))
        .sum::<Complex64>()
        .norm()
}

fn field_at_point(field: &SpectralField, x: f64) -> f64 {
    field
        .modes()
        .map(|(n, a)| a * Complex64::from_polar(1.0, n as f64 * x))
        .sum::<Complex64>()
        .norm()
}

fn closed_form_frequencies(
    flow: FlowKind,
    field: &SpectralField,
    draw_flow: Option<&AppFlow>,
) -> Vec<f64> {
    match (flow, draw_flow) {
        (FlowKind::Modified, Some(app)) => app.frequencies(),
        _ => field.modes().map(|(n, _)| -((n * n) as f64)).collect(),
    }
}

fn nonlinear_sup(stepper: &mut SplitStepper, field: &SpectralField, stride: usize) -> Result<f64> {
    let mut state = stepper.embed(field)?;
    let steps = stepper.config().steps();
    let dt = stepper.config().dt;
    let mut best = stepper.diagnostics(&state).sup;
    for i in 1..=steps {
        stepper.step_in_place(state.amplitudes_mut());
        if i % stride == 0 || i == steps {
            let t = i as f64 * dt;
            if !state.is_finite() {
                return Err(LabError::NonFinite {
                    t,
                    detail: "solver state became non-finite".into(),
                });
            }
            let sup = stepper.diagnostics(&state).sup;
            if sup > BLOWUP_SUP {
                return Err(LabError::BlowUp { t, sup });
            }
            best = best.max(sup);
        }
    }
    Ok(best)
}

fn nonlinear_point(stepper: &mut SplitStepper, field: &SpectralField, x: f64) -> Result<f64> {
    let mut state = stepper.embed(field)?;
    let steps = stepper.config().steps();
    for _ in 0..steps {
        stepper.step_in_place(state.amplitudes_mut());
    }
    if !state.is_finite() {
        return Err(LabError::NonFinite {
            t: steps as f64 * stepper.config().dt,
            detail: "solver state became non-finite".into(),
        });
    }
    Ok(field_at_point(&state, x))
}

enum Worker {
    Closed(GridSampler),
    Solver(Box<SplitStepper>),
}

/// The observed statistic (grid sup or point modulus) for draws `0..cfg.samples`
/// of stream `label`, in index order.
pub fn sample_sup_statistics(flow: FlowKind, cfg: &TailConfig, label: &str) -> Result<Vec<f64>> {
    cfg.validate()?;
    let lattice = cfg.lattice()?;
    let (steps, h) = cfg.time_grid();
    let solver = match flow {
        FlowKind::Nonlinear => Some(cfg.solver_config()?),
        _ => None,
    };
    let stride = ((h / cfg.solver_dt).round() as usize).max(1);
    (0..cfg.samples as u64)
        .into_par_iter()
        .map_init(
            || match solver {
                Some(s) => Worker::Solver(Box::new(SplitStepper::new(s).expect("validated"))),
                None => Worker::Closed(GridSampler::new(lattice.grid)),
            },
            |worker, i| {
                let seed = derive_seed(cfg.master_seed, label, i);
                let draw = make_initial_data(cfg.theta, cfg.cutoff, seed)?;
                match worker {
                    Worker::Solver(stepper) => match cfg.sampling {
                        Sampling::Grid => nonlinear_sup(stepper, draw.field(), stride),
                        Sampling::Point { x, .. } => nonlinear_point(stepper, draw.field(), x),
                    },
                    Worker::Closed(sampler) => {
                        let app = match flow {
                            FlowKind::Modified => Some(AppFlow::new(draw.clone(), cfg.epsilon)?),
                            _ => None,
                        };
                        let freqs = closed_form_frequencies(flow, draw.field(), app.as_ref());
                        let a0 = draw.field().amplitudes();
                        Ok(match cfg.sampling {
                            Sampling::Grid => sampler.sup(a0, &freqs, steps, h),
                            Sampling::Point { t, x } => point_value(a0, &freqs, t, x),
                        })
                    }
                }
            },
        )
        .collect()
}

/// Counts `stats > z₀ ε^{-1/2}`.
pub fn tail_from_sups(
    flow: FlowKind,
    epsilon: f64,
    z0: f64,
    stats: &[f64],
) -> Result<TailEstimate> {
    let threshold = z0 / epsilon.sqrt();
    let hits = stats.iter().filter(|&&s| s > threshold).count();
    TailEstimate::from_counts(flow, epsilon, z0, hits as u64, stats.len() as u64)
}

/// `P(sup |flow| > z₀ ε^{-1/2})` over `cfg.samples` draws.
pub fn mc_sup_tail(flow: FlowKind, cfg: &TailConfig) -> Result<TailEstimate> {
    if cfg.samples < MIN_TAIL_SAMPLES {
        return Err(LabError::config(format!(
            "tail estimates need at least {MIN_TAIL_SAMPLES} samples, got {}",
            cfg.samples
        )));
    }
    let stats = sample_sup_statistics(flow, cfg, labels::DRAW)?;
    tail_from_sups(flow, cfg.epsilon, cfg.z0, &stats)
}

/// Picks `z₀` so that a pilot ensemble (stream "pilot") exceeds it with frequency `target_p`.
pub fn tune_z0(
    flow: FlowKind,
    cfg: &TailConfig,
    target_p: f64,
    pilot_samples: usize,
) -> Result<f64> {
    if !(target_p > 0.0 && target_p < 1.0) {
        return Err(LabError::config(format!(
            "target probability must be in (0, 1), got {target_p}"
        )));
    }
    let k = (target_p * pilot_samples as f64).round() as usize;
    if k < 10 || k >= pilot_samples {
        return Err(LabError::config(format!(
            "{pilot_samples} pilot samples cannot resolve p = {target_p}"
        )));
    }
    let pilot = TailConfig {
        samples: pilot_samples,
        ..*cfg
    };
    let mut stats = sample_sup_statistics(flow, &pilot, labels::PILOT)?;
    stats.sort_by(f64::total_cmp);
    Ok(stats[pilot_samples - k - 1] * cfg.epsilon.sqrt())
}

/// `z₀² / σ²_N`.
pub fn reference_rate(z0: f64, theta: f64, cutoff: usize) -> Result<f64> {
    Ok(z0 * z0 / truncated_variance(theta, cutoff)?.sigma2)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RatePoint {
    pub epsilon: f64,
    pub z0: f64,
    pub estimate: TailEstimate,
    /// `rate − reference`; NaN when censored.
    pub gap: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RateCurve {
    pub flow: FlowKind,
    pub z0: f64,
    pub sigma2: f64,
    /// Variance discarded by the truncation.
    pub truncation_tail: f64,
    /// `z₀² / σ²_N`
    pub reference: f64,
    /// Ordered by strictly decreasing `ε`.
    pub points: Vec<RatePoint>,
    pub censored: bool,
    /// `|gap|` is non-increasing as `ε` decreases (false if any point is censored).
    pub gap_shrinks: bool,
}

impl RateCurve {
    /// `|gap| / reference` at the smallest `ε`.
    pub fn final_gap_fraction(&self) -> f64 {
        self.points
            .last()
            .map_or(f64::NAN, |p| p.gap.abs() / self.reference)
    }

    /// `|gap|` at the smallest `ε` does not exceed `|gap|` at the largest.
    pub fn gap_not_larger_than_first(&self) -> bool {
        match (self.points.first(), self.points.last()) {
            (Some(a), Some(b)) => b.gap.abs() <= a.gap.abs(),
            _ => false,
        }
    }
}

/// Tail estimates at fixed `z₀` along a geometric sequence of `ε`.
pub fn rate_curve(
    flow: FlowKind,
    eps_list: &[f64],
    z0: f64,
    cfg: &TailConfig,
) -> Result<RateCurve> {
    if eps_list.len() < 3 {
        return Err(LabError::config(
            "a rate curve needs at least three epsilon values",
        ));
    }
    if eps_list.iter().any(|e| !(*e > 0.0 && e.is_finite())) {
        return Err(LabError::config("epsilon values must be positive"));
    }
    if eps_list.windows(2).any(|w| w[1] >= w[0]) {
        return Err(LabError::config(
            "epsilon values must be strictly decreasing",
        ));
    }
    let q = eps_list[1] / eps_list[0];
    if eps_list
        .windows(2)
        .any(|w| ((w[1] / w[0]) / q - 1.0).abs() > 1e-6)
    {
        return Err(LabError::config(
            "epsilon values must be geometrically spaced",
        ));
    }
    let var = truncated_variance(cfg.theta, cfg.cutoff)?;
    let reference = z0 * z0 / var.sigma2;
    let points = eps_list
        .iter()
        .map(|&epsilon| {
            let estimate = mc_sup_tail(
                flow,
                &TailConfig {
                    epsilon,
                    z0,
                    ..*cfg
                },
            )?;
            let gap = if estimate.censored {
                f64::NAN
            } else {
                estimate.rate - reference
            };
            Ok(RatePoint {
                epsilon,
                z0,
                estimate,
                gap,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let censored = points.iter().any(|p| p.estimate.censored);
    let gap_shrinks = !censored && points.windows(2).all(|w| w[1].gap.abs() <= w[0].gap.abs());
    Ok(RateCurve {
        flow,
        z0,
        sigma2: var.sigma2,
        truncation_tail: var.tail_bound,
        reference,
        points,
        censored,
        gap_shrinks,
    })
}
