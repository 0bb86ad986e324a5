//! Time integration of `i u_t + Δu = ε² |u|² u` on the torus.
//!
//! [`evolve`] uses Strang splitting: exact linear half steps in Fourier space
//! around an exact pointwise phase rotation `u ↦ u e^{-iε²dt|u|²}` in physical
//! space. Two variants of the nonlinear substep exist, see [`Projection`].
//!
//! [`galerkin_reference_evolve`] integrates the gauged mode system
//! `i ∂_t w_k = −ε²|w_k|²w_k + ε² Σ_{R_k} w_{k₁} w̄_{k₂} w_{k₃} e^{−itΩ}`
//! with classical RK4 and serves as an independent reference at small cutoff.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};
use crate::resonance::omega;
use crate::spectral::{mass_gauge, GridTransform, LatticeSpec, SpectralField};

/// Abort threshold on the grid sup-norm.
pub const BLOWUP_SUP: f64 = 1e6;

/// Largest cutoff accepted by the Galerkin reference integrator.
pub const GALERKIN_MAX_CUTOFF: usize = 16;

/// How the nonlinear substep is brought back to a spectral state.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum Projection {
    /// The state lives on every mode the (odd) solver grid resolves. Discrete
    /// mass is conserved to rounding and the splitting is second order.
    #[default]
    FullGrid,
    /// After each phase rotation the state is projected back to `|n| ≤ N`.
    /// Tracks the Galerkin truncation closely but leaks mass at `O(ε⁴dt²)`
    /// per step, which makes the scheme first order.
    Window,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    pub epsilon: f64,
    pub dt: f64,
    pub horizon: f64,
    pub record_stride: usize,
    pub lattice: LatticeSpec,
    pub projection: Projection,
}

impl SolverConfig {
    pub const DEFAULT_DT: f64 = 1e-2;

    /// Defaults: `dt = 10⁻²`, horizon `T = 1/ε` (or 1 when `ε = 0`), every step recorded.
    pub fn new(epsilon: f64, lattice: LatticeSpec) -> Self {
        let horizon = if epsilon > 0.0 { 1.0 / epsilon } else { 1.0 };
        SolverConfig {
            epsilon,
            dt: Self::DEFAULT_DT,
            horizon,
            record_stride: 1,
            lattice,
            projection: Projection::FullGrid,
        }
    }

    pub fn with_dt(mut self, dt: f64) -> Self {
        self.dt = dt;
        self
    }

    pub fn with_horizon(mut self, horizon: f64) -> Self {
        self.horizon = horizon;
        self
    }

    /// `T = c_T / ε`.
    pub fn with_horizon_multiplier(mut self, c_t: f64) -> Self {
        self.horizon = c_t / self.epsilon;
        self
    }

    pub fn with_stride(mut self, stride: usize) -> Self {
        self.record_stride = stride;
        self
    }

    pub fn with_projection(mut self, projection: Projection) -> Self {
        self.projection = projection;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon >= 0.0 && self.epsilon.is_finite()) {
            return Err(LabError::config(format!(
                "epsilon must be >= 0, got {}",
                self.epsilon
            )));
        }
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(LabError::config(format!("dt must be > 0, got {}", self.dt)));
        }
        if !(self.horizon >= 0.0 && self.horizon.is_finite()) {
            return Err(LabError::config(format!(
                "horizon must be finite and >= 0, got {}",
                self.horizon
            )));
        }
        if self.record_stride == 0 {
            return Err(LabError::config("record_stride must be >= 1"));
        }
        Ok(())
    }

    /// Number of steps; the final time `steps · dt` is within `dt/2` of the horizon.
    pub fn steps(&self) -> usize {
        (self.horizon / self.dt).round() as usize
    }

    /// Grid used by the split-step integrator.
    pub fn solver_grid(&self) -> usize {
        match self.projection {
            Projection::Window => self.lattice.grid,
            // odd so that the full grid is a symmetric mode lattice
            Projection::FullGrid => self.lattice.grid | 1,
        }
    }

    /// Cutoff of the integrator's state.
    pub fn state_cutoff(&self) -> usize {
        match self.projection {
            Projection::Window => self.lattice.cutoff,
            Projection::FullGrid => (self.solver_grid() - 1) / 2,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    pub mass: f64,
    pub hamiltonian: f64,
    pub sup: f64,
}

/// Snapshots of one flow with per-snapshot diagnostics.
#[derive(Clone, Debug)]
pub struct Trajectory {
    pub epsilon: f64,
    pub times: Vec<f64>,
    pub states: Vec<SpectralField>,
    pub diagnostics: Vec<Diagnostics>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn initial(&self) -> &SpectralField {
        &self.states[0]
    }

    pub fn last(&self) -> &SpectralField {
        self.states
            .last()
            .expect("trajectory has at least one snapshot")
    }

    /// `max_t |μ(t)/μ(0) − 1|`.
    pub fn max_mass_drift(&self) -> f64 {
        relative_drift(self.diagnostics.iter().map(|d| d.mass))
    }

    /// `max_t |H(t)/H(0) − 1|`.
    pub fn max_hamiltonian_drift(&self) -> f64 {
        relative_drift(self.diagnostics.iter().map(|d| d.hamiltonian))
    }

    pub fn max_sup(&self) -> f64 {
        self.diagnostics.iter().map(|d| d.sup).fold(0.0, f64::max)
    }
}

fn relative_drift(mut values: impl Iterator<Item = f64>) -> f64 {
    let Some(v0) = values.next() else { return 0.0 };
    if v0 == 0.0 {
        return 0.0;
    }
    values.map(|v| (v / v0 - 1.0).abs()).fold(0.0, f64::max)
}

/// Split-step integrator with cached plans and buffers.
pub struct SplitStepper {
    cfg: SolverConfig,
    transform: GridTransform,
    half_linear: Vec<Complex64>,
    samples: Vec<Complex64>,
    cutoff: usize,
}

impl SplitStepper {
    pub fn new(cfg: SolverConfig) -> Result<Self> {
        cfg.validate()?;
        let grid = cfg.solver_grid();
        let cutoff = cfg.state_cutoff();
        let c = cutoff as i64;
        let half_linear = (-c..=c)
            .map(|n| Complex64::from_polar(1.0, -((n * n) as f64) * cfg.dt * 0.5))
            .collect();
        Ok(SplitStepper {
            cfg,
            transform: GridTransform::new(grid),
            half_linear,
            samples: vec![Complex64::ZERO; grid],
            cutoff,
        })
    }

    pub fn config(&self) -> &SolverConfig {
        &self.cfg
    }

    /// Cutoff of the states this stepper produces.
    pub fn cutoff(&self) -> usize {
        self.cutoff
    }

    /// Lifts a field onto the stepper's mode lattice.
    pub fn embed(&self, field: &SpectralField) -> Result<SpectralField> {
        if field.cutoff() > self.cutoff {
            return Err(LabError::contract(format!(
                "state cutoff {} exceeds solver cutoff {}",
                field.cutoff(),
                self.cutoff
            )));
        }
        Ok(field.resized(self.cutoff))
    }

    /// Advances `amps` (laid out on the stepper's lattice) by one step.
    pub fn step_in_place(&mut self, amps: &mut [Complex64]) {
        debug_assert_eq!(amps.len(), 2 * self.cutoff + 1);
        for (a, p) in amps.iter_mut().zip(&self.half_linear) {
            *a *= p;
        }
        let k = self.cfg.epsilon * self.cfg.epsilon * self.cfg.dt;
        if k != 0.0 {
            self.transform.synthesize_slice(amps, &mut self.samples);
            for z in self.samples.iter_mut() {
                *z *= Complex64::from_polar(1.0, -k * z.norm_sqr());
            }
            self.transform.analyze_slice(&mut self.samples, amps);
        }
        for (a, p) in amps.iter_mut().zip(&self.half_linear) {
            *a *= p;
        }
    }

    /// Mass, Hamiltonian and grid sup of a state on this stepper's grid.
    pub fn diagnostics(&mut self, field: &SpectralField) -> Diagnostics {
        self.transform.synthesize(field, &mut self.samples);
        let grid = self.samples.len() as f64;
        let (quartic, sup2) = self.samples.iter().fold((0.0, 0.0f64), |(q, s), z| {
            let a = z.norm_sqr();
            (q + a * a, s.max(a))
        });
        let kinetic: f64 = field
            .modes()
            .map(|(n, a)| (n * n) as f64 * a.norm_sqr())
            .sum();
        let eps2 = self.cfg.epsilon * self.cfg.epsilon;
        Diagnostics {
            mass: mass_gauge(field),
            hamiltonian: kinetic + 0.5 * eps2 * quartic / grid,
            sup: sup2.sqrt(),
        }
    }
}

/// One Strang step: half linear, pointwise phase, half linear.
pub fn strang_step(state: &SpectralField, cfg: &SolverConfig) -> Result<SpectralField> {
    if !state.is_finite() {
        return Err(LabError::NonFinite {
            t: f64::NAN,
            detail: "input state has non-finite amplitudes".into(),
        });
    }
    let mut stepper = SplitStepper::new(*cfg)?;
    let mut out = stepper.embed(state)?;
    stepper.step_in_place(out.amplitudes_mut());
    if !out.is_finite() {
        return Err(LabError::NonFinite {
            t: cfg.dt,
            detail: "step produced non-finite amplitudes".into(),
        });
    }
    Ok(out)
}

/// Repeated Strang steps from `u0` up to the configured horizon.
pub fn evolve(u0: &SpectralField, cfg: &SolverConfig) -> Result<Trajectory> {
    let mut stepper = SplitStepper::new(*cfg)?;
    let mut state = stepper.embed(u0)?;
    if !state.is_finite() {
        return Err(LabError::NonFinite {
            t: 0.0,
            detail: "initial data has non-finite amplitudes".into(),
        });
    }
    let steps = cfg.steps();
    let mut traj = Trajectory {
        epsilon: cfg.epsilon,
        times: vec![0.0],
        diagnostics: vec![stepper.diagnostics(&state)],
        states: vec![state.clone()],
    };
    for i in 1..=steps {
        stepper.step_in_place(state.amplitudes_mut());
        if i % cfg.record_stride == 0 || i == steps {
            let t = i as f64 * cfg.dt;
            if !state.is_finite() {
                return Err(LabError::NonFinite {
                    t,
                    detail: "solver state became non-finite".into(),
                });
            }
            let d = stepper.diagnostics(&state);
            if d.sup > BLOWUP_SUP {
                return Err(LabError::BlowUp { t, sup: d.sup });
            }
            traj.times.push(t);
            traj.diagnostics.push(d);
            traj.states.push(state.clone());
        }
    }
    Ok(traj)
}

/// `w_k = e^{i t (2ε²μ + k²)} û(t, k)`.
pub fn gauge_to_interaction(
    state: &SpectralField,
    t: f64,
    mu: f64,
    epsilon: f64,
) -> Result<SpectralField> {
    let rate = gauge_rate(mu, epsilon)?;
    Ok(state.map_modes(|k, u| u * Complex64::from_polar(1.0, t * (rate + (k * k) as f64))))
}

/// Inverse of [`gauge_to_interaction`].
pub fn gauge_from_interaction(
    w: &SpectralField,
    t: f64,
    mu: f64,
    epsilon: f64,
) -> Result<SpectralField> {
    let rate = gauge_rate(mu, epsilon)?;
    Ok(w.map_modes(|k, a| a * Complex64::from_polar(1.0, -t * (rate + (k * k) as f64))))
}

fn gauge_rate(mu: f64, epsilon: f64) -> Result<f64> {
    if !(mu >= 0.0 && mu.is_finite()) {
        return Err(LabError::config(format!(
            "gauge constant must be >= 0, got {mu}"
        )));
    }
    Ok(2.0 * epsilon * epsilon * mu)
}

/// Non-resonant triples `(k₁, k₂, k₃)` with `k₁ − k₂ + k₃ = k` inside `[-N, N]`.
struct ResonantSet {
    cutoff: i64,
    /// per output mode: (index k₁, index k₂, index k₃, Ω)
    triples: Vec<Vec<(usize, usize, usize, i64)>>,
    max_omega: i64,
}

impl ResonantSet {
    fn new(cutoff: usize) -> Self {
        let c = cutoff as i64;
        let idx = |n: i64| (n + c) as usize;
        let mut max_omega = 0;
        let triples = (-c..=c)
            .map(|k| {
                let mut v = Vec::new();
                for k1 in -c..=c {
                    for k2 in -c..=c {
                        let k3 = k - k1 + k2;
                        if k3.abs() > c || k2 == k1 || k2 == k3 {
                            continue;
                        }
                        let om = omega(k1, k2, k3, k);
                        max_omega = max_omega.max(om.abs());
                        v.push((idx(k1), idx(k2), idx(k3), om));
                    }
                }
                v
            })
            .collect();
        ResonantSet {
            cutoff: c,
            triples,
            max_omega,
        }
    }

    /// `dw/dt` at time `t`.
    fn rhs(
        &self,
        t: f64,
        eps2: f64,
        w: &[Complex64],
        out: &mut [Complex64],
        phases: &mut [Complex64],
    ) {
        for (j, p) in phases.iter_mut().enumerate() {
            let om = j as i64 - self.max_omega;
            *p = Complex64::from_polar(1.0, -t * om as f64);
        }
        for (k, row) in self.triples.iter().enumerate() {
            let mut acc = Complex64::ZERO;
            for &(a, b, c, om) in row {
                acc += w[a] * w[b].conj() * w[c] * phases[(om + self.max_omega) as usize];
            }
            let diag = w[k].norm_sqr() * w[k];
            // i ∂_t w = −ε²|w|²w + ε² Σ  ⇒  ∂_t w = i ε² |w|² w − i ε² Σ
            out[k] = Complex64::i() * eps2 * (diag - acc);
        }
        debug_assert_eq!(w.len() as i64, 2 * self.cutoff + 1);
    }
}

/// RK4 integration of the gauged Galerkin system, un-gauged to `u` at each snapshot.
pub fn galerkin_reference_evolve(u0: &SpectralField, cfg: &SolverConfig) -> Result<Trajectory> {
    cfg.validate()?;
    let cutoff = cfg.lattice.cutoff;
    if cutoff > GALERKIN_MAX_CUTOFF {
        return Err(LabError::config(format!(
            "Galerkin reference is O(N³) per step; cutoff {cutoff} exceeds {GALERKIN_MAX_CUTOFF}"
        )));
    }
    if u0.cutoff() > cutoff {
        return Err(LabError::contract(format!(
            "initial cutoff {} exceeds lattice cutoff {cutoff}",
            u0.cutoff()
        )));
    }
    let u0 = u0.resized(cutoff);
    let mu = mass_gauge(&u0);
    let eps = cfg.epsilon;
    let eps2 = eps * eps;
    let set = ResonantSet::new(cutoff);
    let len = 2 * cutoff + 1;
    let mut phases = vec![Complex64::ZERO; (2 * set.max_omega + 1) as usize];
    let mut w: Vec<Complex64> = u0.amplitudes().to_vec();
    let (mut k1, mut k2, mut k3, mut k4, mut tmp) = (
        vec![Complex64::ZERO; len],
        vec![Complex64::ZERO; len],
        vec![Complex64::ZERO; len],
        vec![Complex64::ZERO; len],
        vec![Complex64::ZERO; len],
    );

    // diagnostics on the configured lattice, reusing the split-step machinery
    let diag_cfg = SolverConfig {
        projection: Projection::Window,
        ..*cfg
    };
    let mut diag = SplitStepper::new(diag_cfg)?;

    let dt = cfg.dt;
    let steps = cfg.steps();
    let mut traj = Trajectory {
        epsilon: eps,
        times: vec![0.0],
        diagnostics: vec![diag.diagnostics(&u0)],
        states: vec![u0.clone()],
    };
    for i in 1..=steps {
        let t = (i - 1) as f64 * dt;
        set.rhs(t, eps2, &w, &mut k1, &mut phases);
        axpy(&w, 0.5 * dt, &k1, &mut tmp);
        set.rhs(t + 0.5 * dt, eps2, &tmp, &mut k2, &mut phases);
        axpy(&w, 0.5 * dt, &k2, &mut tmp);
        set.rhs(t + 0.5 * dt, eps2, &tmp, &mut k3, &mut phases);
        axpy(&w, dt, &k3, &mut tmp);
        set.rhs(t + dt, eps2, &tmp, &mut k4, &mut phases);
        for j in 0..len {
            w[j] += dt / 6.0 * (k1[j] + 2.0 * k2[j] + 2.0 * k3[j] + k4[j]);
        }
        if i % cfg.record_stride == 0 || i == steps {
            let t = i as f64 * dt;
            let wf = SpectralField::from_amplitudes(w.clone())?;
            let u = gauge_from_interaction(&wf, t, mu, eps)?;
            if !u.is_finite() {
                return Err(LabError::NonFinite {
                    t,
                    detail: "Galerkin reference became non-finite".into(),
                });
            }
            traj.times.push(t);
            traj.diagnostics.push(diag.diagnostics(&u));
            traj.states.push(u);
        }
    }
    Ok(traj)
}

fn axpy(x: &[Complex64], a: f64, y: &[Complex64], out: &mut [Complex64]) {
    for ((o, xi), yi) in out.iter_mut().zip(x).zip(y) {
        *o = xi + yi * a;
    }
}
