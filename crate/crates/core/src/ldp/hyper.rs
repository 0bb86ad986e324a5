//! Tails of Gaussian polynomials `F_k = Σ c_{n₁…n_k} g_{n₁}⋯g_{n_k}`.
//!
//! The `L²` norm is exact: for holomorphic monomials
//! `E[Π g_n^{m_n} · conj(Π g_n^{m'_n})] = δ_{m m'} Π m_n!`, so terms are grouped
//! by multiset and each group contributes `|Σ c|² Π m_n!`.

use std::collections::BTreeMap;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{wilson_interval, Z95};
use crate::error::{LabError, Result};
use crate::random_data::ModeStreams;
use crate::resonance::fit_power_law;
use crate::seed::{derive_seed, labels};

/// Smallest ensemble accepted by [`hyper_tail_check`].
pub const MIN_HYPER_SAMPLES: usize = 100_000;

/// Probability estimates with fewer hits are treated as noise.
const RESOLVED_HITS: u64 = 30;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CoeffSpec {
    pub order: usize,
    pub terms: Vec<(Vec<i64>, Complex64)>,
}

impl CoeffSpec {
    pub fn new(order: usize, terms: Vec<(Vec<i64>, Complex64)>) -> Result<Self> {
        if !(1..=3).contains(&order) {
            return Err(LabError::config(format!(
                "order must be 1, 2 or 3, got {order}"
            )));
        }
        if let Some((idx, _)) = terms.iter().find(|(idx, _)| idx.len() != order) {
            return Err(LabError::config(format!(
                "index tuple {idx:?} does not have {order} entries"
            )));
        }
        if terms
            .iter()
            .any(|(_, c)| !(c.re.is_finite() && c.im.is_finite()))
        {
            return Err(LabError::config("coefficients must be finite"));
        }
        let spec = CoeffSpec { order, terms };
        if spec.l2_norm() == 0.0 {
            return Err(LabError::config("all coefficients vanish"));
        }
        Ok(spec)
    }

    /// `c_{n…n} = coeffs[n]` on the diagonal.
    pub fn diagonal(order: usize, coeffs: &[(i64, f64)]) -> Result<Self> {
        CoeffSpec::new(
            order,
            coeffs
                .iter()
                .map(|&(n, c)| (vec![n; order], Complex64::new(c, 0.0)))
                .collect(),
        )
    }

    pub fn scaled(&self, factor: f64) -> Result<Self> {
        CoeffSpec::new(
            self.order,
            self.terms
                .iter()
                .map(|(i, c)| (i.clone(), c * factor))
                .collect(),
        )
    }

    /// `‖F_k‖_{L²}`.
    pub fn l2_norm(&self) -> f64 {
        let mut groups: BTreeMap<Vec<i64>, Complex64> = BTreeMap::new();
        for (idx, c) in &self.terms {
            let mut key = idx.clone();
            key.sort_unstable();
            *groups.entry(key).or_default() += c;
        }
        groups
            .iter()
            .map(|(key, c)| {
                let mut weight = 1.0;
                let mut run = 1.0;
                for w in key.windows(2) {
                    if w[0] == w[1] {
                        run += 1.0;
                        weight *= run;
                    } else {
                        run = 1.0;
                    }
                }
                c.norm_sqr() * weight
            })
            .sum::<f64>()
            .sqrt()
    }

    /// Distinct modes, sorted.
    pub fn modes(&self) -> Vec<i64> {
        let mut m: Vec<i64> = self
            .terms
            .iter()
            .flat_map(|(i, _)| i.iter().copied())
            .collect();
        m.sort_unstable();
        m.dedup();
        m
    }

    pub fn evaluate(&self, g: impl Fn(i64) -> Complex64) -> Complex64 {
        self.terms
            .iter()
            .map(|(idx, c)| idx.iter().fold(*c, |acc, &n| acc * g(n)))
            .sum()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HyperPoint {
    pub lambda: f64,
    pub trials: u64,
    pub hits: u64,
    pub p_hat: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    /// At least 30 hits.
    pub resolved: bool,
    /// `e^{−C λ^{2/k}}` with the fitted `C`.
    pub bound: f64,
    /// `ci_low ≤ e^{−(C − 1.96 σ_C) λ^{2/k}}`.
    pub holds: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HyperReport {
    pub order: usize,
    pub samples: usize,
    pub l2_norm: f64,
    pub points: Vec<HyperPoint>,
    pub fitted_c: f64,
    /// Standard error of `fitted_c` from the binomial noise of the fit points.
    pub c_std_error: f64,
    pub fit_points: usize,
    /// Every resolved point holds.
    pub bound_holds: bool,
}

/// Estimates `P(|F_k| > λ ‖F_k‖_{L²})` on `lambda_grid` and fits `C` in `e^{−Cλ^{2/k}}`.
///
/// The fit is a least-squares line through the origin of `−ln p̂` against
/// `λ^{2/k}`, restricted to resolved points within two decades of the
/// smallest resolved probability. A point violates the bound only if its
/// Wilson interval lies above the bound even after `C` is lowered by 1.96
/// standard errors of the fit.
pub fn hyper_tail_check(
    spec: &CoeffSpec,
    lambda_grid: &[f64],
    samples: usize,
    seed: u64,
) -> Result<HyperReport> {
    if samples < MIN_HYPER_SAMPLES {
        return Err(LabError::config(format!(
            "hypercontractivity check needs at least {MIN_HYPER_SAMPLES} samples, got {samples}"
        )));
    }
    if lambda_grid.is_empty() || lambda_grid.iter().any(|l| !(*l > 0.0 && l.is_finite())) {
        return Err(LabError::config(
            "lambda grid must be non-empty and positive",
        ));
    }
    let norm = spec.l2_norm();
    let modes = spec.modes();
    let values: Vec<f64> = (0..samples as u64)
        .into_par_iter()
        .map(|i| {
            let streams = ModeStreams::new(derive_seed(seed, labels::HYPER, i));
            let g: Vec<Complex64> = modes.iter().map(|&n| streams.gaussian(n)).collect();
            let lookup = |n: i64| g[modes.binary_search(&n).expect("known mode")];
            spec.evaluate(lookup).norm() / norm
        })
        .collect();
    let trials = samples as u64;
    let mut points: Vec<HyperPoint> = lambda_grid
        .iter()
        .map(|&lambda| {
            let hits = values.iter().filter(|&&v| v > lambda).count() as u64;
            let (ci_low, ci_high) = wilson_interval(hits, trials);
            HyperPoint {
                lambda,
                trials,
                hits,
                p_hat: hits as f64 / trials as f64,
                ci_low,
                ci_high,
                resolved: hits >= RESOLVED_HITS && hits < trials,
                bound: f64::NAN,
                holds: true,
            }
        })
        .collect();
    let exponent = 2.0 / spec.order as f64;
    let p_min = points
        .iter()
        .filter(|p| p.resolved)
        .map(|p| p.p_hat)
        .fold(f64::INFINITY, f64::min);
    // (x, y, var y) with var(−ln p̂) ≈ (1 − p)/(n p)
    let fit: Vec<(f64, f64, f64)> = points
        .iter()
        .filter(|p| p.resolved && p.p_hat <= 100.0 * p_min)
        .map(|p| {
            let var = (1.0 - p.p_hat) / (trials as f64 * p.p_hat);
            (p.lambda.powf(exponent), -p.p_hat.ln(), var)
        })
        .collect();
    if fit.len() < 2 {
        return Err(LabError::contract(format!(
            "only {} resolved tail points; extend the lambda grid or add samples",
            fit.len()
        )));
    }
    let sxy: f64 = fit.iter().map(|(x, y, _)| x * y).sum();
    let sxx: f64 = fit.iter().map(|(x, _, _)| x * x).sum();
    let fitted_c = sxy / sxx;
    let c_std_error = fit.iter().map(|(x, _, v)| x * x * v).sum::<f64>().sqrt() / sxx;
    let c_low = fitted_c - Z95 * c_std_error;
    for p in &mut points {
        let x = p.lambda.powf(exponent);
        p.bound = (-fitted_c * x).exp();
        p.holds = !p.resolved || p.ci_low <= (-c_low * x).exp();
    }
    Ok(HyperReport {
        order: spec.order,
        samples,
        l2_norm: norm,
        bound_holds: points.iter().all(|p| p.holds),
        fit_points: fit.len(),
        fitted_c,
        c_std_error,
        points,
    })
}

/// Slope of `ln(−ln p̂)` against `ln λ` over resolved points with `λ ∈ [lo, hi]`.
pub fn log_tail_slope(points: &[HyperPoint], lo: f64, hi: f64) -> Result<f64> {
    let pts: Vec<(f64, f64)> = points
        .iter()
        .filter(|p| p.resolved && p.lambda >= lo && p.lambda <= hi)
        .map(|p| (p.lambda, -p.p_hat.ln()))
        .collect();
    Ok(fit_power_law(&pts)?.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn norm_uses_multiset_factorials() {
        let one = |i: Vec<i64>| (i, Complex64::new(1.0, 0.0));
        // E|g³|² = 3!
        let s = CoeffSpec::new(3, vec![one(vec![2, 2, 2])]).unwrap();
        assert!((s.l2_norm() - 6f64.sqrt()).abs() < 1e-15);
        // g₀g₁ + g₁g₀ = 2 g₀g₁
        let s = CoeffSpec::new(2, vec![one(vec![0, 1]), one(vec![1, 0])]).unwrap();
        assert!((s.l2_norm() - 2.0).abs() < 1e-15);
        // E|g₀²g₁|² = 2
        let s = CoeffSpec::new(3, vec![one(vec![0, 1, 0])]).unwrap();
        assert!((s.l2_norm() - 2f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn degenerate_rejected() {
        assert!(CoeffSpec::diagonal(2, &[(0, 0.0), (1, 0.0)]).is_err());
        assert!(CoeffSpec::diagonal(4, &[(0, 1.0)]).is_err());
        assert!(CoeffSpec::new(2, vec![(vec![0], Complex64::new(1.0, 0.0))]).is_err());
    }

    #[test]
    fn single_coefficient_is_rayleigh() {
        let spec = CoeffSpec::diagonal(1, &[(3, 0.4)]).unwrap();
        let grid: Vec<f64> = (1..=12).map(|i| 0.25 * i as f64).collect();
        let rep = hyper_tail_check(&spec, &grid, 100_000, 5).unwrap();
        assert!((rep.fitted_c - 1.0).abs() < 0.05, "{}", rep.fitted_c);
        assert!(rep.bound_holds, "{rep:#?}");
    }

    #[test]
    fn normalized_tail_is_scale_invariant() {
        let spec = CoeffSpec::diagonal(2, &[(0, 1.0), (1, 0.5)]).unwrap();
        let grid = [0.5, 1.0, 1.5, 2.0, 2.5, 3.0];
        let a = hyper_tail_check(&spec, &grid, 100_000, 9).unwrap();
        let b = hyper_tail_check(&spec.scaled(7.0).unwrap(), &grid, 100_000, 9).unwrap();
        for (p, q) in a.points.iter().zip(&b.points) {
            assert!(p.hits.abs_diff(q.hits) <= 1);
        }
    }

    #[test]
    fn small_ensembles_rejected() {
        let spec = CoeffSpec::diagonal(1, &[(0, 1.0)]).unwrap();
        assert!(hyper_tail_check(&spec, &[1.0], 10, 0).is_err());
    }
}
