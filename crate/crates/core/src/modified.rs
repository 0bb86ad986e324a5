//! The modified linear flow
//! `u_app(t) = e^{-2itε²μ} Σ c_n g_n e^{inx} e^{itε²c_n²|g_n|² − itn²}`
//! and its distance to the nonlinear flow.
//!
//! Each mode only rotates, so `|û_app(n)(t)| = c_n |g_n|` for every `t`.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};
use crate::random_data::GaussianDraw;
use crate::solver::Trajectory;
use crate::spectral::{
    apply_trilinear, cubic_convolution, mass_gauge, sobolev_norm, SpectralField, Trilinear,
};

#[derive(Clone, Debug)]
pub struct AppFlow {
    pub draw: GaussianDraw,
    pub epsilon: f64,
    /// `μ = Σ |c_n g_n|²`
    pub mu: f64,
    /// `ρ_n = ε² c_n² |g_n|²`, laid out `-N..=N`
    pub rates: Vec<f64>,
}

impl AppFlow {
    pub fn new(draw: GaussianDraw, epsilon: f64) -> Result<Self> {
        if !(epsilon >= 0.0 && epsilon.is_finite()) {
            return Err(LabError::config(format!(
                "epsilon must be >= 0, got {epsilon}"
            )));
        }
        let mu = mass_gauge(draw.field());
        let eps2 = epsilon * epsilon;
        let rates = draw
            .field()
            .amplitudes()
            .iter()
            .map(|a| eps2 * a.norm_sqr())
            .collect();
        Ok(AppFlow {
            draw,
            epsilon,
            mu,
            rates,
        })
    }

    pub fn cutoff(&self) -> usize {
        self.draw.cutoff
    }

    /// Angular frequency of mode `n` in `u_app`: `ρ_n − n² − 2ε²μ`.
    pub fn frequencies(&self) -> Vec<f64> {
        let c = self.cutoff() as i64;
        let gauge = 2.0 * self.epsilon * self.epsilon * self.mu;
        (-c..=c)
            .zip(&self.rates)
            .map(|(n, r)| r - (n * n) as f64 - gauge)
            .collect()
    }

    /// `u_app(t)`.
    pub fn at(&self, t: f64) -> SpectralField {
        let freqs = self.frequencies();
        let amps = self
            .draw
            .field()
            .amplitudes()
            .iter()
            .zip(&freqs)
            .map(|(a, w)| a * Complex64::from_polar(1.0, t * w))
            .collect();
        SpectralField::from_amplitudes(amps).expect("odd-length lattice")
    }

    /// Interaction-picture modes `a_k(t) = c_k g_k e^{itρ_k}` in closed form.
    pub fn interaction_modes(&self, t: f64) -> SpectralField {
        let amps = self
            .draw
            .field()
            .amplitudes()
            .iter()
            .zip(&self.rates)
            .map(|(a, r)| a * Complex64::from_polar(1.0, t * r))
            .collect();
        SpectralField::from_amplitudes(amps).expect("odd-length lattice")
    }
}

pub fn u_app_at(flow: &AppFlow, t: f64) -> SpectralField {
    flow.at(t)
}

/// Which equation the residual is measured against.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum ResidualForm {
    /// `i∂_t u + Δu + ε²𝒩₂(u) − 2ε²μu`, which `u_app` solves exactly.
    Gauged,
    /// `i∂_t u + Δu − ε²|u|²u`, the full cubic equation; leaves `−ε²𝒩₁(u_app)`.
    FullCubic,
}

/// `‖R(t)‖_{L²}` (coefficient norm) with `∂_t` by centered differences of step `dt_fd`.
pub fn app_residual(flow: &AppFlow, t: f64, dt_fd: f64) -> Result<f64> {
    app_residual_with(ResidualForm::Gauged, flow, t, dt_fd)
}

pub fn app_residual_with(form: ResidualForm, flow: &AppFlow, t: f64, dt_fd: f64) -> Result<f64> {
    if !(dt_fd > 0.0 && dt_fd.is_finite()) {
        return Err(LabError::config(format!(
            "finite-difference step must be > 0, got {dt_fd}"
        )));
    }
    let u = flow.at(t);
    let plus = flow.at(t + dt_fd);
    let minus = flow.at(t - dt_fd);
    let eps2 = flow.epsilon * flow.epsilon;
    let linear = u.map_modes(|n, a| {
        let dudt = (plus.get(n) - minus.get(n)) / (2.0 * dt_fd);
        Complex64::i() * dudt - (n * n) as f64 * a
    });
    let residual = match form {
        ResidualForm::Gauged => {
            let n2 = apply_trilinear(Trilinear::N2, &u, &u, &u)?;
            linear.map_modes(|n, r| r + eps2 * n2.get(n) - 2.0 * eps2 * flow.mu * u.get(n))
        }
        ResidualForm::FullCubic => {
            let cubic = cubic_convolution(&u, &u, &u)?;
            let lin = linear.resized(cubic.cutoff());
            lin.map_modes(|n, r| r - eps2 * cubic.get(n))
        }
    };
    Ok(sobolev_norm(&residual, 0.0))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ErrorPoint {
    pub t: f64,
    pub err_hs: f64,
    pub running_max: f64,
}

/// `‖u(t) − u_app(t)‖_{H^s}` on the snapshot times of `nl`, with its running maximum.
pub fn error_trajectory(nl: &Trajectory, flow: &AppFlow, s: f64) -> Result<Vec<ErrorPoint>> {
    if nl.epsilon != flow.epsilon {
        return Err(LabError::contract(format!(
            "trajectory epsilon {} differs from flow epsilon {}",
            nl.epsilon, flow.epsilon
        )));
    }
    if nl.is_empty() || nl.initial().max_abs_diff(flow.draw.field()) != 0.0 {
        return Err(LabError::contract(
            "trajectory does not start from the flow's initial data",
        ));
    }
    let mut running = 0.0f64;
    Ok(nl
        .times
        .iter()
        .zip(&nl.states)
        .map(|(&t, u)| {
            let err = sobolev_norm(&u.difference(&flow.at(t)), s);
            running = running.max(err);
            ErrorPoint {
                t,
                err_hs: err,
                running_max: running,
            }
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::random_data::make_initial_data;
    use crate::solver::{evolve, gauge_to_interaction, SolverConfig};
    use crate::spectral::LatticeSpec;

    fn flow(eps: f64, n: usize, seed: u64) -> AppFlow {
        AppFlow::new(make_initial_data(0.25, n, seed).unwrap(), eps).unwrap()
    }

    #[test]
    fn initial_time_is_initial_data() {
        let f = flow(0.3, 8, 1);
        assert_eq!(&f.at(0.0), f.draw.field());
    }

    #[test]
    fn zero_epsilon_is_free_flow() {
        let f = flow(0.0, 8, 2);
        let t = 0.77;
        let free = f
            .draw
            .field()
            .map_modes(|n, a| a * Complex64::from_polar(1.0, -((n * n) as f64) * t));
        assert!(f.at(t).max_abs_diff(&free) < 1e-15);
    }

    #[test]
    fn modulus_is_constant() {
        let f = flow(0.2, 16, 3);
        for t in [0.1, 1.0, 5.0, 17.3] {
            let u = f.at(t);
            for (n, a) in u.modes() {
                let want = f.draw.field().get(n).norm();
                assert!((a.norm() - want).abs() <= 1e-15 * want.max(1.0));
            }
        }
    }

    #[test]
    fn interaction_picture_matches_closed_form() {
        let f = flow(0.3, 8, 4);
        for t in [0.5, 2.0] {
            let w = gauge_to_interaction(&f.at(t), t, f.mu, f.epsilon).unwrap();
            assert!(w.max_abs_diff(&f.interaction_modes(t)) < 1e-12);
        }
    }

    #[test]
    fn residual_zero_epsilon_is_fd_error() {
        let f = flow(0.0, 4, 5);
        let r1 = app_residual(&f, 0.3, 1e-3).unwrap();
        let r2 = app_residual(&f, 0.3, 2e-3).unwrap();
        assert!(r1 < 1e-3);
        assert!((r2 / r1 - 4.0).abs() < 0.1);
    }

    #[test]
    fn full_cubic_residual_does_not_vanish() {
        let f = flow(0.3, 4, 6);
        let a = app_residual_with(ResidualForm::FullCubic, &f, 0.4, 1e-4).unwrap();
        let b = app_residual_with(ResidualForm::FullCubic, &f, 0.4, 5e-5).unwrap();
        let gauged = app_residual(&f, 0.4, 5e-5).unwrap();
        assert!(a > 1e-3 && (a - b).abs() < 1e-3 * a);
        assert!(gauged < 1e-4 * a);
    }

    #[test]
    fn error_trajectory_starts_at_zero() {
        let draw = make_initial_data(0.25, 8, 7).unwrap();
        let f = AppFlow::new(draw.clone(), 0.2).unwrap();
        let cfg = SolverConfig::new(0.2, LatticeSpec::new(8, 4).unwrap()).with_horizon(1.0);
        let traj = evolve(draw.field(), &cfg).unwrap();
        let errs = error_trajectory(&traj, &f, 0.6).unwrap();
        assert_eq!(errs[0].err_hs, 0.0);
        assert!(errs
            .windows(2)
            .all(|w| w[1].running_max >= w[0].running_max));
        assert!(errs.last().unwrap().running_max > 0.0);
    }

    #[test]
    fn error_trajectory_checks_inputs() {
        let draw = make_initial_data(0.25, 4, 8).unwrap();
        let cfg = SolverConfig::new(0.2, LatticeSpec::new(4, 4).unwrap()).with_horizon(0.1);
        let traj = evolve(draw.field(), &cfg).unwrap();
        let wrong_eps = AppFlow::new(draw, 0.1).unwrap();
        assert!(matches!(
            error_trajectory(&traj, &wrong_eps, 0.6),
            Err(LabError::Contract(_))
        ));
        let other = AppFlow::new(make_initial_data(0.25, 4, 9).unwrap(), 0.2).unwrap();
        assert!(matches!(
            error_trajectory(&traj, &other, 0.6),
            Err(LabError::Contract(_))
        ));
    }
}
