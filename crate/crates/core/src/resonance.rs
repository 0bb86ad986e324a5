//! Resonance factor, restricted sums over the convolution plane and the
//! trilinear Gaussian chaos statistic on dyadic shells.
//!
//! On `k = k₁ − k₂ + k₃` the factor `Ω = k₁² − k₂² + k₃² − k²` equals
//! `2 (k₁ − k₂)(k₂ − k₃)`, so `Ω ≠ 0` exactly when `k₂ ∉ {k₁, k₃}`.

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};
use crate::random_data::{coefficient, make_initial_data, GaussianDraw};
use crate::spectral::bracket;

/// Largest summation cutoff accepted by [`key_sum`].
pub const KEY_SUM_MAX_CUTOFF: i64 = 4096;

/// `k₁² − k₂² + k₃² − k²`.
#[inline]
pub fn omega(k1: i64, k2: i64, k3: i64, k: i64) -> i64 {
    k1 * k1 - k2 * k2 + k3 * k3 - k * k
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResonanceQuery {
    pub k: i64,
    pub cutoff: i64,
    pub s: f64,
    pub theta: f64,
    pub delta5: f64,
}

impl ResonanceQuery {
    /// `s = 0.6, θ = 0.25, δ₅ = 0.05`.
    pub fn with_defaults(k: i64, cutoff: i64) -> Self {
        ResonanceQuery {
            k,
            cutoff,
            s: 0.6,
            theta: 0.25,
            delta5: 0.05,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.cutoff < 0 || self.cutoff > KEY_SUM_MAX_CUTOFF {
            return Err(LabError::config(format!(
                "summation cutoff must lie in [0, {KEY_SUM_MAX_CUTOFF}], got {}",
                self.cutoff
            )));
        }
        if !(self.s > 0.5 && self.s < 0.5 + self.theta) {
            return Err(LabError::config(format!(
                "need 1/2 < s < 1/2 + θ, got s = {}, θ = {}",
                self.s, self.theta
            )));
        }
        if !(self.delta5 >= 0.0 && self.delta5 < self.theta) {
            return Err(LabError::config(format!(
                "need 0 <= δ₅ < θ, got δ₅ = {}",
                self.delta5
            )));
        }
        Ok(())
    }
}

/// Which of the two weighted sums to evaluate.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum KeyVariant {
    /// weights `⟨k₁⟩^{-s} ⟨k₂⟩^{-s} ⟨k₃⟩^{-(θ-δ₅)}`
    One,
    /// weights `⟨k₁⟩^{-s} ⟨k₃⟩^{-s} ⟨k₂⟩^{-(θ-δ₅)}`
    Two,
}

impl KeyVariant {
    pub fn index(self) -> u8 {
        match self {
            KeyVariant::One => 1,
            KeyVariant::Two => 2,
        }
    }
}

/// `Σ_{R_k, |k_i| ≤ K} w(k₁, k₂, k₃) / |Ω|`.
///
/// `k₃` is determined by `(k₁, k₂)`; rows are summed sequentially and then
/// combined pairwise so the result does not depend on scheduling.
pub fn key_sum(variant: KeyVariant, q: &ResonanceQuery) -> Result<f64> {
    q.validate()?;
    let big = q.cutoff;
    let k = q.k;
    let table = |p: f64| -> Vec<f64> { (-big..=big).map(|n| bracket(n).powf(-p)).collect() };
    let ws = table(q.s);
    let wt = table(q.theta - q.delta5);
    let at = |n: i64| (n + big) as usize;

    let rows: Vec<f64> = (-big..=big)
        .map(|k1| {
            // k₁ = k forces k₂ = k₃ on the whole row
            if k1 == k {
                return 0.0;
            }
            let lo = (-big).max(-big - k + k1);
            let hi = big.min(big - k + k1);
            let scale = 1.0 / (2 * (k1 - k).abs()) as f64;
            let mut acc = 0.0;
            for k2 in lo..=hi {
                if k2 == k1 {
                    continue;
                }
                let k3 = k - k1 + k2;
                let w = match variant {
                    KeyVariant::One => ws[at(k2)] * wt[at(k3)],
                    KeyVariant::Two => ws[at(k3)] * wt[at(k2)],
                };
                acc += w / (k1 - k2).abs() as f64;
            }
            acc * scale * ws[at(k1)]
        })
        .collect();
    Ok(pairwise_sum(&rows))
}

/// Order-stable pairwise summation.
pub fn pairwise_sum(v: &[f64]) -> f64 {
    if v.len() <= 16 {
        return v.iter().sum();
    }
    let (a, b) = v.split_at(v.len() / 2);
    pairwise_sum(a) + pairwise_sum(b)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SlopeFit {
    pub slope: f64,
    pub intercept: f64,
    /// RMS residual of the log-log fit.
    pub residual: f64,
    /// `(k, key_sum)` pairs used in the fit.
    pub points: Vec<(i64, f64)>,
}

/// Least-squares line through `(ln x, ln y)`.
pub fn fit_power_law(points: &[(f64, f64)]) -> Result<(f64, f64, f64)> {
    if points.len() < 2 {
        return Err(LabError::config("need at least two points for a fit"));
    }
    if points.iter().any(|&(x, y)| !(x > 0.0 && y > 0.0)) {
        return Err(LabError::contract("power-law fit needs positive data"));
    }
    let logs: Vec<(f64, f64)> = points.iter().map(|&(x, y)| (x.ln(), y.ln())).collect();
    let n = logs.len() as f64;
    let mx = logs.iter().map(|p| p.0).sum::<f64>() / n;
    let my = logs.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = logs.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = logs.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    if sxx == 0.0 {
        return Err(LabError::config("fit abscissae are all equal"));
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let rms = (logs
        .iter()
        .map(|p| (p.1 - intercept - slope * p.0).powi(2))
        .sum::<f64>()
        / n)
        .sqrt();
    Ok((slope, intercept, rms))
}

/// Fits `ln key_sum(k) ≈ a + slope · ln⟨k⟩` over `k_list` at summation cutoff `cutoff`.
pub fn decay_slope_fit(
    variant: KeyVariant,
    template: &ResonanceQuery,
    k_list: &[i64],
    cutoff: i64,
) -> Result<SlopeFit> {
    let lo = *k_list
        .iter()
        .min()
        .ok_or_else(|| LabError::config("empty k list"))?;
    let hi = *k_list.iter().max().unwrap();
    if lo < 8 || 4 * hi > cutoff {
        return Err(LabError::config(format!(
            "k values must lie in [8, K/4] = [8, {}], got [{lo}, {hi}]",
            cutoff / 4
        )));
    }
    if ((hi as f64) / (lo as f64)).log2() < 3.0 {
        return Err(LabError::config(
            "k list must span at least four dyadic scales",
        ));
    }
    let sums: Vec<(i64, f64)> = k_list
        .par_iter()
        .map(|&k| {
            let q = ResonanceQuery {
                k,
                cutoff,
                ..*template
            };
            key_sum(variant, &q).map(|v| (k, v))
        })
        .collect::<Result<_>>()?;
    let pts: Vec<(f64, f64)> = sums.iter().map(|&(k, v)| (bracket(k), v)).collect();
    let (slope, intercept, residual) = fit_power_law(&pts)?;
    Ok(SlopeFit {
        slope,
        intercept,
        residual,
        points: sums,
    })
}

/// Slack `δ₃ = −slope − (s + 1/2)` left by a fitted decay exponent.
pub fn measured_delta3(fit: &SlopeFit, s: f64) -> f64 {
    -fit.slope - (s + 0.5)
}

/// The side conditions on `δ₃, δ₄, δ₅` used by the decay bounds, evaluated at
/// the given values. A `δ₄` exists iff `δ₅ < 1/2 + θ − s`.
pub fn parameter_constraints(
    s: f64,
    theta: f64,
    delta3: f64,
    delta5: f64,
) -> Vec<(&'static str, bool)> {
    vec![
        ("delta3 > 0", delta3 > 0.0),
        ("0 < delta5 < theta", 0.0 < delta5 && delta5 < theta),
        ("delta5 < 1/4", delta5 < 0.25),
        ("delta3 < s - 1/2", delta3 < s - 0.5),
        (
            "delta3 + delta5 < 1/2 + theta - s",
            delta3 + delta5 < 0.5 + theta - s,
        ),
        (
            "delta3 + delta5 < s - 1/2 + theta",
            delta3 + delta5 < s - 0.5 + theta,
        ),
        (
            "delta5 <= delta4 < 1/2 + theta - s",
            delta5 < 0.5 + theta - s,
        ),
    ]
}

/// Dyadic shell: `{|k| ≤ 1}` for `N = 1`, `{N ≤ |k| < 2N}` for `N ≥ 2`.
pub fn dyadic_shell(n: u32) -> Result<Vec<i64>> {
    if n == 0 || !n.is_power_of_two() {
        return Err(LabError::config(format!("shell size {n} is not dyadic")));
    }
    let n = n as i64;
    let lo = if n == 1 { 0 } else { n };
    Ok((lo..2 * n)
        .flat_map(|m| if m == 0 { vec![0] } else { vec![-m, m] })
        .collect())
}

/// The admissible triples `S_n` on a choice of dyadic shells.
#[derive(Clone, Debug, PartialEq)]
pub struct ShellTriples {
    pub n: i64,
    pub dyads: (u32, u32, u32),
    /// `(n₁, n₂, n₃, Ω)`
    pub triples: Vec<(i64, i64, i64, i64)>,
}

impl ShellTriples {
    pub fn new(n: i64, dyads: (u32, u32, u32)) -> Result<Self> {
        let (s1, s2, s3) = (
            dyadic_shell(dyads.0)?,
            dyadic_shell(dyads.1)?,
            dyadic_shell(dyads.2)?,
        );
        let mut triples = Vec::new();
        for &n1 in &s1 {
            for &n2 in &s2 {
                let n3 = n - n1 + n2;
                if n2 == n1 || n2 == n3 || !s3.contains(&n3) {
                    continue;
                }
                triples.push((n1, n2, n3, omega(n1, n2, n3, n)));
            }
        }
        Ok(ShellTriples { n, dyads, triples })
    }

    /// Largest `|n_i|` touched by the shells.
    pub fn reach(&self) -> usize {
        let d = self.dyads.0.max(self.dyads.1).max(self.dyads.2) as usize;
        if d == 1 {
            1
        } else {
            2 * d - 1
        }
    }

    /// `2 Σ_{S_n} Π ⟨n_i⟩^{-1-2θ}`.
    pub fn second_moment_reference(&self, theta: f64) -> f64 {
        2.0 * self
            .triples
            .iter()
            .map(|&(a, b, c, _)| (weight(theta, a) * weight(theta, b) * weight(theta, c)).powi(2))
            .sum::<f64>()
    }
}

#[inline]
fn weight(theta: f64, n: i64) -> f64 {
    coefficient(theta, n)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChaosSup {
    pub sup: f64,
    pub argmax_tau: f64,
    pub triples: usize,
}

fn check_reach(shells: &ShellTriples, draw: &GaussianDraw) -> Result<()> {
    if shells.reach() > draw.cutoff {
        return Err(LabError::contract(format!(
            "shells reach |n| = {} beyond draw cutoff {}",
            shells.reach(),
            draw.cutoff
        )));
    }
    Ok(())
}

/// `F(τ)` on one draw for each `τ` in `taus`.
pub fn chaos_values(
    shells: &ShellTriples,
    draw: &GaussianDraw,
    epsilon: f64,
    taus: &[f64],
) -> Result<Vec<Complex64>> {
    check_reach(shells, draw)?;
    let theta = draw.theta;
    let eps2 = epsilon * epsilon;
    Ok(taus
        .iter()
        .map(|&tau| {
            let h = |m: i64| {
                let g = draw.gaussian(m);
                let c = coefficient(theta, m);
                g * Complex64::from_polar(1.0, tau * eps2 * c * c * g.norm_sqr())
            };
            shells
                .triples
                .iter()
                .map(|&(a, b, c, om)| {
                    let w = weight(theta, a) * weight(theta, b) * weight(theta, c);
                    h(a) * h(b).conj() * h(c) * w * Complex64::from_polar(1.0, -tau * om as f64)
                })
                .sum()
        })
        .collect())
}

/// `sup_τ |F_{n,N₁,N₂,N₃,ε}(τ)|` over `tau_grid`.
pub fn chaos_statistic(
    n: i64,
    dyads: (u32, u32, u32),
    draw: &GaussianDraw,
    epsilon: f64,
    tau_grid: &[f64],
) -> Result<ChaosSup> {
    let shells = ShellTriples::new(n, dyads)?;
    check_reach(&shells, draw)?;
    if shells.triples.is_empty() || tau_grid.is_empty() {
        return Ok(ChaosSup {
            sup: 0.0,
            argmax_tau: tau_grid.first().copied().unwrap_or(0.0),
            triples: shells.triples.len(),
        });
    }
    let vals = chaos_values(&shells, draw, epsilon, tau_grid)?;
    let (i, sup) =
        vals.iter()
            .map(|z| z.norm())
            .enumerate()
            .fold(
                (0, f64::NEG_INFINITY),
                |acc, (i, v)| if v > acc.1 { (i, v) } else { acc },
            );
    Ok(ChaosSup {
        sup,
        argmax_tau: tau_grid[i],
        triples: shells.triples.len(),
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChaosMoment {
    pub draws: usize,
    pub tau: f64,
    pub sample_mean: f64,
    pub std_error: f64,
    /// `2 Σ_{S_n} Π ⟨n_i⟩^{-1-2θ}`
    pub reference: f64,
    pub relative_error: f64,
}

/// Monte-Carlo estimate of `E|F(τ)|²` over draws seeded by `seed_of(i)`.
pub fn chaos_second_moment(
    n: i64,
    dyads: (u32, u32, u32),
    theta: f64,
    epsilon: f64,
    tau: f64,
    draws: usize,
    seed_of: impl Fn(usize) -> u64 + Sync,
) -> Result<ChaosMoment> {
    let shells = ShellTriples::new(n, dyads)?;
    let cutoff = shells.reach();
    let values: Vec<f64> = (0..draws)
        .into_par_iter()
        .map(|i| {
            let draw = make_initial_data(theta, cutoff, seed_of(i))?;
            Ok(chaos_values(&shells, &draw, epsilon, &[tau])?[0].norm_sqr())
        })
        .collect::<Result<_>>()?;
    let m = values.len() as f64;
    let mean = pairwise_sum(&values) / m;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (m - 1.0);
    let reference = shells.second_moment_reference(theta);
    Ok(ChaosMoment {
        draws,
        tau,
        sample_mean: mean,
        std_error: (var / m).sqrt(),
        reference,
        relative_error: if reference > 0.0 {
            (mean / reference - 1.0).abs()
        } else {
            0.0
        },
    })
}
