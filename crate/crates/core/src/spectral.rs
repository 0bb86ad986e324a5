//! Truncated Fourier fields on the torus `[0, 2π)`.
//!
//! A field is `u(x) = Σ_{|n| ≤ N} û(n) e^{inx}`. With this normalization
//! `(1/2π) ∫ |u|² = Σ |û(n)|²`, which is the gauge constant used throughout
//! the crate.

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{LabError, Result};

/// Japanese bracket `⟨n⟩ = (1 + n²)^{1/2}`.
#[inline]
pub fn bracket(n: i64) -> f64 {
    let n = n as f64;
    (1.0 + n * n).sqrt()
}

/// Complex amplitudes on the symmetric lattice `-N..=N`.
#[derive(Clone, PartialEq)]
pub struct SpectralField {
    cutoff: usize,
    amps: Vec<Complex64>,
}

impl fmt::Debug for SpectralField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("SpectralField")
            .field("cutoff", &self.cutoff)
            .field(
                "nonzero",
                &self.amps.iter().filter(|a| **a != Complex64::ZERO).count(),
            )
            .finish()
    }
}

impl SpectralField {
    pub fn zeros(cutoff: usize) -> Self {
        SpectralField {
            cutoff,
            amps: vec![Complex64::ZERO; 2 * cutoff + 1],
        }
    }

    /// Builds a field by evaluating `f(n)` for every `|n| ≤ cutoff`.
    pub fn from_fn(cutoff: usize, mut f: impl FnMut(i64) -> Complex64) -> Self {
        let c = cutoff as i64;
        SpectralField {
            cutoff,
            amps: (-c..=c).map(&mut f).collect(),
        }
    }

    /// Builds a field from sparse `(n, û(n))` pairs. Later duplicates overwrite earlier ones.
    pub fn from_modes(cutoff: usize, modes: &[(i64, Complex64)]) -> Result<Self> {
        let mut field = SpectralField::zeros(cutoff);
        for &(n, v) in modes {
            if n.unsigned_abs() as usize > cutoff {
                return Err(LabError::config(format!(
                    "mode {n} outside cutoff {cutoff}"
                )));
            }
            if !(v.re.is_finite() && v.im.is_finite()) {
                return Err(LabError::config(format!(
                    "mode {n} has non-finite amplitude"
                )));
            }
            field.set(n, v);
        }
        Ok(field)
    }

    /// Wraps an amplitude vector laid out as `n = -N ..= N`.
    pub fn from_amplitudes(amps: Vec<Complex64>) -> Result<Self> {
        if amps.len().is_multiple_of(2) {
            return Err(LabError::contract(format!(
                "amplitude vector has even length {}",
                amps.len()
            )));
        }
        Ok(SpectralField {
            cutoff: (amps.len() - 1) / 2,
            amps,
        })
    }

    #[inline]
    pub fn cutoff(&self) -> usize {
        self.cutoff
    }

    /// Amplitude of mode `n`; zero outside the lattice.
    #[inline]
    pub fn get(&self, n: i64) -> Complex64 {
        if n.unsigned_abs() as usize > self.cutoff {
            Complex64::ZERO
        } else {
            self.amps[(n + self.cutoff as i64) as usize]
        }
    }

    /// Sets mode `n`. Panics if `|n| > cutoff`.
    #[inline]
    pub fn set(&mut self, n: i64, v: Complex64) {
        assert!(
            n.unsigned_abs() as usize <= self.cutoff,
            "mode {n} outside cutoff {}",
            self.cutoff
        );
        self.amps[(n + self.cutoff as i64) as usize] = v;
    }

    /// Amplitudes in lattice order `n = -N ..= N`.
    #[inline]
    pub fn amplitudes(&self) -> &[Complex64] {
        &self.amps
    }

    #[inline]
    pub fn amplitudes_mut(&mut self) -> &mut [Complex64] {
        &mut self.amps
    }

    /// Iterates `(n, û(n))` over the full lattice.
    pub fn modes(&self) -> impl Iterator<Item = (i64, Complex64)> + '_ {
        let c = self.cutoff as i64;
        (-c..=c).zip(self.amps.iter().copied())
    }

    /// Zero-extends or truncates to a new cutoff.
    pub fn resized(&self, cutoff: usize) -> SpectralField {
        SpectralField::from_fn(cutoff, |n| self.get(n))
    }

    pub fn is_finite(&self) -> bool {
        self.amps
            .iter()
            .all(|a| a.re.is_finite() && a.im.is_finite())
    }

    /// Mode-wise difference on the larger of the two lattices.
    pub fn difference(&self, other: &SpectralField) -> SpectralField {
        let cutoff = self.cutoff.max(other.cutoff);
        SpectralField::from_fn(cutoff, |n| self.get(n) - other.get(n))
    }

    /// Largest mode-wise modulus of `self - other`.
    pub fn max_abs_diff(&self, other: &SpectralField) -> f64 {
        let cutoff = self.cutoff.max(other.cutoff) as i64;
        (-cutoff..=cutoff)
            .map(|n| (self.get(n) - other.get(n)).norm())
            .fold(0.0, f64::max)
    }

    /// Multiplies mode `n` by `phase(n)`.
    pub fn map_modes(&self, mut f: impl FnMut(i64, Complex64) -> Complex64) -> SpectralField {
        SpectralField::from_fn(self.cutoff, |n| f(n, self.get(n)))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("field serialization is infallible")
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }
}

#[derive(Serialize, Deserialize)]
struct FieldRepr {
    cutoff: usize,
    modes: Vec<(i64, f64, f64)>,
}

impl Serialize for SpectralField {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        FieldRepr {
            cutoff: self.cutoff,
            modes: self.modes().map(|(n, a)| (n, a.re, a.im)).collect(),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for SpectralField {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let repr = FieldRepr::deserialize(d)?;
        let modes: Vec<_> = repr
            .modes
            .iter()
            .map(|&(n, re, im)| (n, Complex64::new(re, im)))
            .collect();
        SpectralField::from_modes(repr.cutoff, &modes).map_err(serde::de::Error::custom)
    }
}

/// Discretization of the torus: a data cutoff `N` and `M` equispaced grid points.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LatticeSpec {
    pub cutoff: usize,
    pub grid: usize,
}

impl LatticeSpec {
    /// Default oversampling of the physical grid relative to `2N + 1`.
    pub const DEFAULT_OVERSAMPLE: usize = 4;

    /// `M = oversample · (2N + 1)`.
    pub fn new(cutoff: usize, oversample: usize) -> Result<Self> {
        if oversample == 0 {
            return Err(LabError::config("oversample factor must be positive"));
        }
        LatticeSpec::with_grid(cutoff, oversample * (2 * cutoff + 1))
    }

    pub fn with_grid(cutoff: usize, grid: usize) -> Result<Self> {
        if grid < 2 * cutoff + 1 {
            return Err(LabError::config(format!(
                "grid of {grid} points cannot resolve cutoff {cutoff} (need M >= {})",
                2 * cutoff + 1
            )));
        }
        Ok(LatticeSpec { cutoff, grid })
    }

    pub fn spacing(&self) -> f64 {
        2.0 * PI / self.grid as f64
    }

    pub fn oversample(&self) -> f64 {
        self.grid as f64 / (2 * self.cutoff + 1) as f64
    }

    /// Largest cutoff the grid can represent without aliasing.
    pub fn capacity(&self) -> usize {
        (self.grid - 1) / 2
    }

    pub fn point(&self, j: usize) -> f64 {
        self.spacing() * j as f64
    }
}

/// Cached FFT plans for one grid size.
///
/// `synthesize` maps modes to samples `u_j = Σ û(n) e^{i n x_j}`; `analyze`
/// is its inverse restricted to a symmetric window of modes.
#[derive(Clone)]
pub struct GridTransform {
    grid: usize,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
    scratch: Vec<Complex64>,
}

impl fmt::Debug for GridTransform {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("GridTransform")
            .field("grid", &self.grid)
            .finish()
    }
}

impl GridTransform {
    pub fn new(grid: usize) -> Self {
        assert!(grid > 0, "grid must be non-empty");
        let mut planner = FftPlanner::new();
        let forward = planner.plan_fft_forward(grid);
        let inverse = planner.plan_fft_inverse(grid);
        let len = forward
            .get_inplace_scratch_len()
            .max(inverse.get_inplace_scratch_len());
        GridTransform {
            grid,
            forward,
            inverse,
            scratch: vec![Complex64::ZERO; len],
        }
    }

    #[inline]
    pub fn grid(&self) -> usize {
        self.grid
    }

    /// Samples the modes `amps` (laid out `-N..=N`) onto `out` (length M).
    pub fn synthesize_slice(&mut self, amps: &[Complex64], out: &mut [Complex64]) {
        let m = self.grid;
        let cutoff = (amps.len() - 1) / 2;
        debug_assert!(2 * cutoff < m, "cutoff {cutoff} aliases on grid {m}");
        debug_assert_eq!(out.len(), m);
        out.fill(Complex64::ZERO);
        for (i, &a) in amps.iter().enumerate() {
            let n = i as i64 - cutoff as i64;
            out[n.rem_euclid(m as i64) as usize] = a;
        }
        self.inverse.process_with_scratch(out, &mut self.scratch);
    }

    pub fn synthesize(&mut self, field: &SpectralField, out: &mut [Complex64]) {
        self.synthesize_slice(field.amplitudes(), out);
    }

    /// Projects samples onto modes `|n| ≤ cutoff`, writing into `amps`. Destroys `samples`.
    pub fn analyze_slice(&mut self, samples: &mut [Complex64], amps: &mut [Complex64]) {
        let m = self.grid;
        let cutoff = (amps.len() - 1) / 2;
        debug_assert!(2 * cutoff < m);
        self.forward
            .process_with_scratch(samples, &mut self.scratch);
        let scale = 1.0 / m as f64;
        for (i, a) in amps.iter_mut().enumerate() {
            let n = i as i64 - cutoff as i64;
            *a = samples[n.rem_euclid(m as i64) as usize] * scale;
        }
    }

    pub fn analyze(&mut self, samples: &mut [Complex64], cutoff: usize) -> SpectralField {
        let mut field = SpectralField::zeros(cutoff);
        self.analyze_slice(samples, field.amplitudes_mut());
        field
    }
}

/// Samples `u(x_j)`, `x_j = 2πj/M`, by inverse FFT.
pub fn evaluate_physical(field: &SpectralField, lattice: &LatticeSpec) -> Result<Vec<Complex64>> {
    if field.cutoff() > lattice.capacity() {
        return Err(LabError::config(format!(
            "field cutoff {} exceeds capacity {} of a {}-point grid",
            field.cutoff(),
            lattice.capacity(),
            lattice.grid
        )));
    }
    let mut out = vec![Complex64::ZERO; lattice.grid];
    GridTransform::new(lattice.grid).synthesize(field, &mut out);
    Ok(out)
}

/// `(Σ ⟨n⟩^{2s} |û(n)|²)^{1/2}`.
pub fn sobolev_norm(field: &SpectralField, s: f64) -> f64 {
    field
        .modes()
        .map(|(n, a)| bracket(n).powf(2.0 * s) * a.norm_sqr())
        .sum::<f64>()
        .sqrt()
}

/// `μ = Σ |û(n)|² = (1/2π) ‖u‖²_{L²}`.
pub fn mass_gauge(field: &SpectralField) -> f64 {
    field.amplitudes().iter().map(|a| a.norm_sqr()).sum()
}

/// Grid maximum of `|u|` and the envelope `max · (1 + πN/M)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SupNorm {
    pub grid_max: f64,
    pub envelope: f64,
}

pub fn sup_norm(field: &SpectralField, lattice: &LatticeSpec) -> Result<SupNorm> {
    let samples = evaluate_physical(field, lattice)?;
    let grid_max = samples
        .iter()
        .map(|z| z.norm_sqr())
        .fold(0.0, f64::max)
        .sqrt();
    Ok(SupNorm {
        grid_max,
        envelope: grid_max * (1.0 + PI * field.cutoff() as f64 / lattice.grid as f64),
    })
}

/// Which piece of the cubic nonlinearity to apply.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Trilinear {
    /// Off-diagonal triples `n₁ − n₂ + n₃ = k`, `n₂ ∉ {n₁, n₃}`.
    N1,
    /// Diagonal `f̂₁(n) conj(f̂₂(n)) f̂₃(n)`.
    N2,
}

/// Full cubic convolution `Σ_{n₁−n₂+n₃=k} f̂₁(n₁) conj(f̂₂(n₂)) f̂₃(n₃)`, output cutoff `3N`.
///
/// Computed exactly on a `6N + 1` point grid; the product has bandwidth `3N`
/// so no alias lands inside the output window.
pub fn cubic_convolution(
    f1: &SpectralField,
    f2: &SpectralField,
    f3: &SpectralField,
) -> Result<SpectralField> {
    let cutoff = shared_cutoff(f1, f2, f3)?;
    let grid = 6 * cutoff + 1;
    let mut tr = GridTransform::new(grid);
    let mut p1 = vec![Complex64::ZERO; grid];
    let mut p2 = vec![Complex64::ZERO; grid];
    let mut p3 = vec![Complex64::ZERO; grid];
    tr.synthesize(f1, &mut p1);
    tr.synthesize(f2, &mut p2);
    tr.synthesize(f3, &mut p3);
    for ((a, b), c) in p1.iter_mut().zip(&p2).zip(&p3) {
        *a = *a * b.conj() * c;
    }
    Ok(tr.analyze(&mut p1, 3 * cutoff))
}

/// `𝒩₁` or `𝒩₂` applied to `(f₁, f₂, f₃)`.
///
/// `N2` keeps the input cutoff. `N1` is returned at cutoff `3N`, obtained as the
/// full cubic convolution minus the `n₂ = n₁` and `n₂ = n₃` families plus the
/// doubly-removed diagonal.
pub fn apply_trilinear(
    kind: Trilinear,
    f1: &SpectralField,
    f2: &SpectralField,
    f3: &SpectralField,
) -> Result<SpectralField> {
    let cutoff = shared_cutoff(f1, f2, f3)?;
    let diag = SpectralField::from_fn(cutoff, |n| f1.get(n) * f2.get(n).conj() * f3.get(n));
    match kind {
        Trilinear::N2 => Ok(diag),
        Trilinear::N1 => {
            let full = cubic_convolution(f1, f2, f3)?;
            let p12: Complex64 = f1
                .amplitudes()
                .iter()
                .zip(f2.amplitudes())
                .map(|(a, b)| a * b.conj())
                .sum();
            let p32: Complex64 = f3
                .amplitudes()
                .iter()
                .zip(f2.amplitudes())
                .map(|(a, b)| a * b.conj())
                .sum();
            Ok(full.map_modes(|k, c| c - p12 * f3.get(k) - p32 * f1.get(k) + diag.get(k)))
        }
    }
}

fn shared_cutoff(f1: &SpectralField, f2: &SpectralField, f3: &SpectralField) -> Result<usize> {
    let c = f1.cutoff();
    if f2.cutoff() != c || f3.cutoff() != c {
        return Err(LabError::contract(format!(
            "trilinear inputs have cutoffs {}, {}, {}",
            c,
            f2.cutoff(),
            f3.cutoff()
        )));
    }
    Ok(c)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn constant_field_is_constant() {
        let f = SpectralField::from_modes(3, &[(0, c(1.5, -0.5))]).unwrap();
        let lat = LatticeSpec::new(3, 4).unwrap();
        for z in evaluate_physical(&f, &lat).unwrap() {
            assert!((z - c(1.5, -0.5)).norm() < 1e-14);
        }
    }

    #[test]
    fn pure_phase_on_eight_points() {
        let f = SpectralField::from_modes(1, &[(1, c(1.0, 0.0))]).unwrap();
        let lat = LatticeSpec::with_grid(1, 8).unwrap();
        let s = evaluate_physical(&f, &lat).unwrap();
        for (j, z) in s.iter().enumerate() {
            let expect = Complex64::from_polar(1.0, 2.0 * PI * j as f64 / 8.0);
            assert!((z - expect).norm() < 1e-15, "j={j}");
        }
    }

    #[test]
    fn lattice_too_small_is_config_error() {
        assert!(matches!(
            LatticeSpec::with_grid(4, 8),
            Err(LabError::Config(_))
        ));
        let f = SpectralField::zeros(5);
        let lat = LatticeSpec::with_grid(2, 8).unwrap();
        assert!(matches!(
            evaluate_physical(&f, &lat),
            Err(LabError::Config(_))
        ));
    }

    #[test]
    fn sobolev_examples() {
        let f = SpectralField::from_modes(2, &[(1, c(1.0, 0.0))]).unwrap();
        assert!((sobolev_norm(&f, 0.6) - 2f64.powf(0.3)).abs() < 1e-15);
        let g = SpectralField::from_modes(2, &[(0, c(3.0, 0.0)), (2, c(0.0, 4.0))]).unwrap();
        assert!((sobolev_norm(&g, 1.0) - 89f64.sqrt()).abs() < 1e-13);
        assert!((sobolev_norm(&g, 0.0) - 5.0).abs() < 1e-15);
    }

    #[test]
    fn sup_examples() {
        let f = SpectralField::from_modes(1, &[(1, c(1.0, 0.0))]).unwrap();
        for m in [3, 5, 8, 13] {
            let s = sup_norm(&f, &LatticeSpec::with_grid(1, m).unwrap()).unwrap();
            assert!((s.grid_max - 1.0).abs() < 1e-15);
            assert!(s.envelope >= s.grid_max);
        }
        let g = SpectralField::from_modes(1, &[(0, c(1.0, 0.0)), (1, c(1.0, 0.0))]).unwrap();
        let s = sup_norm(&g, &LatticeSpec::new(1, 4).unwrap()).unwrap();
        assert!((s.grid_max - 2.0).abs() < 1e-14);
    }

    #[test]
    fn mass_examples() {
        let f = SpectralField::from_modes(1, &[(0, c(1.0, 0.0)), (1, c(0.0, 2.0))]).unwrap();
        assert_eq!(mass_gauge(&f), 5.0);
        assert_eq!(mass_gauge(&SpectralField::zeros(4)), 0.0);
    }

    #[test]
    fn single_mode_trilinear() {
        let a = c(0.7, -1.1);
        let f = SpectralField::from_modes(3, &[(2, a)]).unwrap();
        let n2 = apply_trilinear(Trilinear::N2, &f, &f, &f).unwrap();
        assert!((n2.get(2) - a.norm_sqr() * a).norm() < 1e-15);
        let n1 = apply_trilinear(Trilinear::N1, &f, &f, &f).unwrap();
        assert!(n1.amplitudes().iter().all(|z| z.norm() < 1e-14));
    }

    #[test]
    fn single_admissible_triple() {
        let f1 = SpectralField::from_modes(1, &[(1, c(0.5, 0.25))]).unwrap();
        let f2 = SpectralField::from_modes(1, &[(0, c(-1.0, 2.0))]).unwrap();
        let n1 = apply_trilinear(Trilinear::N1, &f1, &f2, &f1).unwrap();
        let expect = f1.get(1) * f2.get(0).conj() * f1.get(1);
        assert_eq!(n1.cutoff(), 3);
        for (k, v) in n1.modes() {
            let want = if k == 2 { expect } else { Complex64::ZERO };
            assert!((v - want).norm() < 1e-14, "k={k}");
        }
    }

    #[test]
    fn mismatched_cutoffs_rejected() {
        let a = SpectralField::zeros(2);
        let b = SpectralField::zeros(3);
        assert!(matches!(
            apply_trilinear(Trilinear::N1, &a, &b, &a),
            Err(LabError::Contract(_))
        ));
    }

    #[test]
    fn json_rejects_out_of_range_mode() {
        let bad = r#"{"cutoff":1,"modes":[[2,1.0,0.0]]}"#;
        assert!(SpectralField::from_json(bad).is_err());
    }
}
