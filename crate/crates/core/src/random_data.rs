//! Random initial data `u₀ = Σ c_n g_n e^{inx}` with `c_n = ⟨n⟩^{-(1/2+θ)}`.
//!
//! `g_n` are standard complex Gaussians with `E|g|² = 1` (real and imaginary
//! parts independent `N(0, 1/2)`), so `P(|g| > λ) = e^{-λ²}`.
//!
//! Each mode has its own ChaCha stream keyed by `(seed, n)`: the value of
//! `g_n` for a given seed does not depend on the cutoff or on the order in
//! which modes are generated.

use std::f64::consts::{FRAC_1_SQRT_2, PI};

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};
use crate::spectral::{bracket, SpectralField};

/// `c_n = ⟨n⟩^{-(1/2+θ)}`.
#[inline]
pub fn coefficient(theta: f64, n: i64) -> f64 {
    bracket(n).powf(-(0.5 + theta))
}

/// Maps a signed mode index onto a stream id (zig-zag).
#[inline]
fn stream_id(n: i64) -> u64 {
    ((n << 1) ^ (n >> 63)) as u64
}

/// One standard complex Gaussian drawn from `rng`.
#[inline]
pub fn complex_gaussian<R: Rng + ?Sized>(rng: &mut R) -> Complex64 {
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    Complex64::new(re * FRAC_1_SQRT_2, im * FRAC_1_SQRT_2)
}

/// Counter-based source of per-mode Gaussians for a fixed seed.
#[derive(Clone, Debug)]
pub struct ModeStreams {
    base: ChaCha8Rng,
}

impl ModeStreams {
    pub fn new(seed: u64) -> Self {
        ModeStreams {
            base: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    /// A fresh generator positioned at the start of stream `label`.
    pub fn stream(&self, label: u64) -> ChaCha8Rng {
        let mut rng = self.base.clone();
        rng.set_stream(label);
        rng
    }

    /// `g_n` for this seed.
    pub fn gaussian(&self, n: i64) -> Complex64 {
        complex_gaussian(&mut self.stream(stream_id(n)))
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct DrawHeader {
    pub seed: u64,
    pub theta: f64,
    pub cutoff: usize,
}

/// A seeded realization of `{g_n}` and the initial datum `û₀(n) = c_n g_n`.
#[derive(Clone, Debug)]
pub struct GaussianDraw {
    pub seed: u64,
    pub theta: f64,
    pub cutoff: usize,
    gaussians: SpectralField,
    field: SpectralField,
}

impl GaussianDraw {
    /// `g_n` laid out over `-N..=N`.
    pub fn gaussians(&self) -> &SpectralField {
        &self.gaussians
    }

    pub fn gaussian(&self, n: i64) -> Complex64 {
        self.gaussians.get(n)
    }

    /// The initial datum `u₀`.
    pub fn field(&self) -> &SpectralField {
        &self.field
    }

    pub fn header(&self) -> DrawHeader {
        DrawHeader {
            seed: self.seed,
            theta: self.theta,
            cutoff: self.cutoff,
        }
    }

    /// `{"header": {seed, theta, cutoff}, "field": {cutoff, modes}}`.
    pub fn to_json(&self) -> String {
        serde_json::json!({ "header": self.header(), "field": &self.field }).to_string()
    }

    /// Regenerates the draw from the header and checks it against the stored field.
    pub fn from_json(s: &str) -> Result<Self> {
        #[derive(Deserialize)]
        struct Repr {
            header: DrawHeader,
            field: SpectralField,
        }
        let repr: Repr = serde_json::from_str(s)?;
        let draw = make_initial_data(repr.header.theta, repr.header.cutoff, repr.header.seed)?;
        if draw.field != repr.field {
            return Err(LabError::contract(
                "stored field does not match regeneration from its header",
            ));
        }
        Ok(draw)
    }
}

pub fn make_initial_data(theta: f64, cutoff: usize, seed: u64) -> Result<GaussianDraw> {
    if !(theta > 0.0 && theta.is_finite()) {
        return Err(LabError::config(format!("theta must be > 0, got {theta}")));
    }
    if cutoff < 1 {
        return Err(LabError::config("cutoff must be >= 1"));
    }
    let streams = ModeStreams::new(seed);
    let gaussians = SpectralField::from_fn(cutoff, |n| streams.gaussian(n));
    let field = gaussians.map_modes(|n, g| g * coefficient(theta, n));
    Ok(GaussianDraw {
        seed,
        theta,
        cutoff,
        gaussians,
        field,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TruncatedVariance {
    /// `σ²_N = Σ_{|n|≤N} ⟨n⟩^{-(1+2θ)}`.
    pub sigma2: f64,
    /// Estimate `N^{-2θ}/θ` of the discarded tail.
    pub tail_bound: f64,
}

pub fn truncated_variance(theta: f64, cutoff: usize) -> Result<TruncatedVariance> {
    if !(theta > 0.0 && theta.is_finite()) {
        return Err(LabError::config(format!("theta must be > 0, got {theta}")));
    }
    let mut sigma2 = 1.0;
    // smallest terms first
    for n in (1..=cutoff as i64).rev() {
        sigma2 += 2.0 * coefficient(theta, n).powi(2);
    }
    let tail_bound = if cutoff == 0 {
        f64::INFINITY
    } else {
        (cutoff as f64).powf(-2.0 * theta) / theta
    };
    Ok(TruncatedVariance { sigma2, tail_bound })
}

/// Phase applied to `η` in the invariance check.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum PhaseMap {
    /// `η e^{i t |η|²}`: law-preserving.
    ModulusSquared,
    /// `η e^{i t Re η}`: keeps `|η|` but couples phase to modulus.
    RealPart,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct KsResult {
    pub statistic: f64,
    pub p_value: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PhaseInvarianceReport {
    pub samples: usize,
    pub t: f64,
    pub map: PhaseMap,
    pub ks_real: KsResult,
    pub ks_imag: KsResult,
    pub ks_modulus: KsResult,
    /// Largest Rayleigh statistic `n |R̄|²` of the phase within modulus bins.
    pub phase_dependence_z: f64,
    /// Bonferroni-corrected p-value of `phase_dependence_z`.
    pub phase_dependence_p: f64,
    pub significance: f64,
    pub marginals_pass: bool,
    pub phase_independent: bool,
}

impl PhaseInvarianceReport {
    pub fn passed(&self) -> bool {
        self.marginals_pass && self.phase_independent
    }
}

const PHASE_BINS: usize = 10;

/// Checks that `η ↦ η e^{i t |η|²}` preserves the standard complex Gaussian law.
pub fn phase_invariance_stat(samples: usize, t: f64, seed: u64) -> Result<PhaseInvarianceReport> {
    phase_invariance_stat_with(PhaseMap::ModulusSquared, samples, t, seed)
}

pub fn phase_invariance_stat_with(
    map: PhaseMap,
    samples: usize,
    t: f64,
    seed: u64,
) -> Result<PhaseInvarianceReport> {
    if samples < 10_000 {
        return Err(LabError::config(format!(
            "phase invariance needs >= 10000 samples, got {samples}"
        )));
    }
    let streams = ModeStreams::new(seed);
    let mut src = streams.stream(0);
    let mut reference = streams.stream(1);
    let mapped: Vec<Complex64> = (0..samples)
        .map(|_| {
            let eta = complex_gaussian(&mut src);
            let phase = match map {
                PhaseMap::ModulusSquared => t * eta.norm_sqr(),
                PhaseMap::RealPart => t * eta.re,
            };
            eta * Complex64::from_polar(1.0, phase)
        })
        .collect();
    let fresh: Vec<Complex64> = (0..samples)
        .map(|_| complex_gaussian(&mut reference))
        .collect();

    let pick = |v: &[Complex64], f: fn(&Complex64) -> f64| v.iter().map(f).collect::<Vec<_>>();
    let ks_real = ks_two_sample(&pick(&mapped, |z| z.re), &pick(&fresh, |z| z.re));
    let ks_imag = ks_two_sample(&pick(&mapped, |z| z.im), &pick(&fresh, |z| z.im));
    let ks_modulus = ks_two_sample(&pick(&mapped, |z| z.norm()), &pick(&fresh, |z| z.norm()));

    let (z, p) = phase_modulus_dependence(&mapped);
    let significance = 1e-3;
    let marginals_pass = [ks_real, ks_imag, ks_modulus]
        .iter()
        .all(|r| r.p_value > significance);
    Ok(PhaseInvarianceReport {
        samples,
        t,
        map,
        ks_real,
        ks_imag,
        ks_modulus,
        phase_dependence_z: z,
        phase_dependence_p: p,
        significance,
        marginals_pass,
        phase_independent: p > significance,
    })
}

/// Rayleigh test for uniform phase inside each modulus-quantile bin.
fn phase_modulus_dependence(z: &[Complex64]) -> (f64, f64) {
    let mut sorted: Vec<Complex64> = z.to_vec();
    sorted.sort_by(|a, b| a.norm().total_cmp(&b.norm()));
    let per_bin = sorted.len() / PHASE_BINS;
    let mut max_z: f64 = 0.0;
    for chunk in sorted.chunks(per_bin).take(PHASE_BINS) {
        let resultant: Complex64 = chunk
            .iter()
            .map(|w| Complex64::from_polar(1.0, w.arg()))
            .sum();
        let n = chunk.len() as f64;
        max_z = max_z.max(resultant.norm_sqr() / n);
    }
    let p = (PHASE_BINS as f64 * (-max_z).exp()).min(1.0);
    (max_z, p)
}

/// Two-sample Kolmogorov–Smirnov statistic with its asymptotic p-value.
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> KsResult {
    let mut a = a.to_vec();
    let mut b = b.to_vec();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j) = (0usize, 0usize);
    let mut d: f64 = 0.0;
    while i < a.len() && j < b.len() {
        let x = a[i].min(b[j]);
        while i < a.len() && a[i] <= x {
            i += 1;
        }
        while j < b.len() && b[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / na - j as f64 / nb).abs());
    }
    let ne = na * nb / (na + nb);
    let lambda = (ne.sqrt() + 0.12 + 0.11 / ne.sqrt()) * d;
    KsResult {
        statistic: d,
        p_value: kolmogorov_q(lambda),
    }
}

/// `Q_KS(λ) = 2 Σ_{k≥1} (-1)^{k-1} e^{-2k²λ²}`.
fn kolmogorov_q(lambda: f64) -> f64 {
    if lambda < 1e-3 {
        return 1.0;
    }
    if lambda < 1.18 {
        // small-λ form avoids the alternating series' slow convergence
        let y = (-PI * PI / (8.0 * lambda * lambda)).exp();
        let s = (2.0 * PI).sqrt() / lambda * (y + y.powi(9) + y.powi(25) + y.powi(49));
        return (1.0 - s).clamp(0.0, 1.0);
    }
    let mut sum = 0.0;
    let mut sign = 1.0;
    for k in 1..=100 {
        let k = k as f64;
        let term = (-2.0 * k * k * lambda * lambda).exp();
        sum += sign * term;
        if term < 1e-16 {
            break;
        }
        sign = -sign;
    }
    (2.0 * sum).clamp(0.0, 1.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn deterministic_regeneration() {
        let a = make_initial_data(0.25, 16, 42).unwrap();
        let b = make_initial_data(0.25, 16, 42).unwrap();
        assert_eq!(a.field(), b.field());
        assert_eq!(a.gaussians(), b.gaussians());
    }

    #[test]
    fn modes_do_not_depend_on_cutoff() {
        let small = make_initial_data(0.25, 4, 7).unwrap();
        let large = make_initial_data(0.25, 32, 7).unwrap();
        for n in -4..=4 {
            assert_eq!(small.gaussian(n), large.gaussian(n));
        }
    }

    #[test]
    fn rejects_nonpositive_theta() {
        assert!(matches!(
            make_initial_data(0.0, 4, 1),
            Err(LabError::Config(_))
        ));
        assert!(matches!(
            make_initial_data(-0.1, 4, 1),
            Err(LabError::Config(_))
        ));
        assert!(matches!(
            truncated_variance(0.0, 4),
            Err(LabError::Config(_))
        ));
    }

    #[test]
    fn coefficients_are_positive_and_decaying() {
        let d = make_initial_data(0.3, 8, 3).unwrap();
        for n in -8..=8i64 {
            let c = coefficient(0.3, n);
            assert!(c > 0.0 && c <= 1.0);
            assert!((d.field().get(n) - d.gaussian(n) * c).norm() < 1e-15);
        }
    }

    #[test]
    fn truncated_variance_examples() {
        let v = truncated_variance(0.25, 2).unwrap().sigma2;
        let hand = 1.0 + 2.0 * 2f64.powf(-0.75) + 2.0 * 5f64.powf(-0.75);
        assert!((v - hand).abs() < 1e-14);
        assert!((v - 2.7874).abs() < 1e-4);
        assert_eq!(truncated_variance(0.7, 0).unwrap().sigma2, 1.0);
        let s64 = truncated_variance(0.25, 64).unwrap().sigma2;
        let s128 = truncated_variance(0.25, 128).unwrap().sigma2;
        assert!(s128 > s64 && s128 - s64 < 0.1 * s64);
    }

    #[test]
    fn json_roundtrip_verifies_header() {
        let d = make_initial_data(0.25, 6, 99).unwrap();
        let back = GaussianDraw::from_json(&d.to_json()).unwrap();
        assert_eq!(back.field(), d.field());
        let tampered = d.to_json().replace("\"seed\":99", "\"seed\":98");
        assert!(GaussianDraw::from_json(&tampered).is_err());
    }

    #[test]
    fn ks_identical_samples() {
        let v: Vec<f64> = (0..1000).map(|i| i as f64).collect();
        let r = ks_two_sample(&v, &v);
        assert_eq!(r.statistic, 0.0);
        assert_eq!(r.p_value, 1.0);
    }

    #[test]
    fn ks_shifted_samples_detected() {
        let a: Vec<f64> = (0..2000).map(|i| i as f64 / 2000.0).collect();
        let b: Vec<f64> = a.iter().map(|x| x + 0.2).collect();
        let r = ks_two_sample(&a, &b);
        assert!((r.statistic - 0.2).abs() < 1e-3);
        assert!(r.p_value < 1e-10);
    }

    #[test]
    fn kolmogorov_series_branches_agree() {
        // both branches evaluated near the switch point
        let lo = {
            let l: f64 = 1.18;
            let y = (-PI * PI / (8.0 * l * l)).exp();
            1.0 - (2.0 * PI).sqrt() / l * (y + y.powi(9) + y.powi(25))
        };
        assert!((lo - kolmogorov_q(1.18)).abs() < 1e-6);
    }

    #[test]
    fn phase_invariance_identity_map() {
        let r = phase_invariance_stat(20_000, 0.0, 5).unwrap();
        assert!(r.passed(), "{r:?}");
    }

    #[test]
    fn phase_invariance_needs_samples() {
        assert!(phase_invariance_stat(100, 1.0, 1).is_err());
    }
}
