use num_complex::Complex64;

use nlslab::ldp::wilson_interval;
use nlslab::random_data::{make_initial_data, truncated_variance};
use nlslab::seed::{derive_seed, labels};
use nlslab::solver::{
    evolve, galerkin_reference_evolve, gauge_to_interaction, strang_step, Projection, SolverConfig,
};
use nlslab::spectral::{mass_gauge, sobolev_norm, LatticeSpec, SpectralField};

const DRAWS: u64 = 100_000;

fn draws(cutoff: usize) -> impl Iterator<Item = SpectralField> {
    (0..DRAWS).map(move |i| {
        make_initial_data(0.25, cutoff, derive_seed(3, labels::DRAW, i))
            .unwrap()
            .gaussians()
            .clone()
    })
}

fn mean_and_se(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

#[test]
fn gaussian_moments() {
    let g: Vec<SpectralField> = draws(5).collect();
    let abs2: Vec<f64> = g.iter().map(|f| f.get(5).norm_sqr()).collect();
    let (m, se) = mean_and_se(&abs2);
    assert!((m - 1.0).abs() <= 3.0 * se, "E|g_5|^2 = {m} +- {se}");

    for n in [-5, 0, 3] {
        let re: Vec<f64> = g.iter().map(|f| f.get(n).re).collect();
        let im: Vec<f64> = g.iter().map(|f| f.get(n).im).collect();
        for xs in [&re, &im] {
            let (m, se) = mean_and_se(xs);
            assert!(m.abs() <= 4.0 * se);
            let sq: Vec<f64> = xs.iter().map(|x| x * x).collect();
            let (v, se) = mean_and_se(&sq);
            assert!((v - 0.5).abs() <= 4.0 * se, "var {v}");
        }
    }

    let hits = g.iter().filter(|f| f.get(0).norm() > 1.0).count() as u64;
    let (lo, hi) = wilson_interval(hits, DRAWS);
    let p = hits as f64 / DRAWS as f64;
    assert!(
        (p - (-1.0f64).exp()).abs() <= 3.0 * (hi - lo),
        "P(|g_0|>1) = {p}"
    );

    let bound = 4.0 / (DRAWS as f64).sqrt();
    for (a, b) in [(0, 1), (-2, 2), (4, 5)] {
        let c: Complex64 = g
            .iter()
            .map(|f| f.get(a) * f.get(b).conj())
            .sum::<Complex64>()
            / DRAWS as f64;
        assert!(c.norm() < bound, "corr({a},{b}) = {c}");
    }
}

#[test]
fn expected_mass_is_truncated_variance() {
    let cutoff = 6;
    let masses: Vec<f64> = (0..20_000u64)
        .map(|i| {
            mass_gauge(
                make_initial_data(0.25, cutoff, derive_seed(4, labels::DRAW, i))
                    .unwrap()
                    .field(),
            )
        })
        .collect();
    let (m, se) = mean_and_se(&masses);
    let sigma2 = truncated_variance(0.25, cutoff).unwrap().sigma2;
    assert!((m - sigma2).abs() <= 4.0 * se, "{m} vs {sigma2}");
}

fn small_data(cutoff: usize, seed: u64) -> SpectralField {
    make_initial_data(0.25, cutoff, seed)
        .unwrap()
        .field()
        .clone()
}

#[test]
fn windowed_split_step_tracks_galerkin() {
    let u0 = small_data(4, 21);
    let lattice = LatticeSpec::new(4, 4).unwrap();
    let cfg = SolverConfig::new(0.1, lattice)
        .with_horizon(1.0)
        .with_dt(1e-3);
    let split = evolve(&u0, &cfg.with_projection(Projection::Window)).unwrap();
    let reference = galerkin_reference_evolve(&u0, &cfg).unwrap();
    let diff = split.last().resized(4).difference(reference.last());
    assert!(
        sobolev_norm(&diff, 0.6) <= 1e-6,
        "{:e}",
        sobolev_norm(&diff, 0.6)
    );
}

#[test]
fn galerkin_is_fourth_order() {
    let u0 = small_data(2, 22);
    let lattice = LatticeSpec::new(2, 4).unwrap();
    let base = SolverConfig::new(0.2, lattice).with_horizon(1.0);
    let run = |dt: f64| {
        galerkin_reference_evolve(&u0, &base.with_dt(dt))
            .unwrap()
            .last()
            .clone()
    };
    let exact = run(1e-4);
    let e1 = run(0.1).max_abs_diff(&exact);
    let e2 = run(0.05).max_abs_diff(&exact);
    let ratio = e1 / e2;
    assert!((12.0..=20.0).contains(&ratio), "ratio {ratio}");
}

/// RK4 on the interaction-picture mode system of the truncated equation.
fn rk4_interaction(w0: &SpectralField, eps: f64, t_end: f64, steps: usize) -> SpectralField {
    let c = w0.cutoff() as i64;
    let rhs = |t: f64, w: &SpectralField| {
        SpectralField::from_fn(w.cutoff(), |k| {
            let mut acc = -w.get(k).norm_sqr() * w.get(k);
            for k1 in -c..=c {
                for k2 in -c..=c {
                    let k3 = k - k1 + k2;
                    if k3.abs() > c || k2 == k1 || k2 == k3 {
                        continue;
                    }
                    let omega = (k1 * k1 - k2 * k2 + k3 * k3 - k * k) as f64;
                    acc += w.get(k1)
                        * w.get(k2).conj()
                        * w.get(k3)
                        * Complex64::from_polar(1.0, -t * omega);
                }
            }
            Complex64::new(0.0, -eps * eps) * acc
        })
    };
    let axpy = |w: &SpectralField, d: &SpectralField, h: f64| w.map_modes(|n, a| a + d.get(n) * h);
    let h = t_end / steps as f64;
    let mut w = w0.clone();
    for i in 0..steps {
        let t = i as f64 * h;
        let k1 = rhs(t, &w);
        let k2 = rhs(t + h / 2.0, &axpy(&w, &k1, h / 2.0));
        let k3 = rhs(t + h / 2.0, &axpy(&w, &k2, h / 2.0));
        let k4 = rhs(t + h, &axpy(&w, &k3, h));
        w = w.map_modes(|n, a| {
            a + (k1.get(n) + 2.0 * k2.get(n) + 2.0 * k3.get(n) + k4.get(n)) * (h / 6.0)
        });
    }
    w
}

#[test]
fn one_step_matches_interaction_rk4() {
    let u0 = small_data(2, 23);
    let eps = 0.3;
    let dt = 1e-3;
    let cfg = SolverConfig::new(eps, LatticeSpec::new(2, 4).unwrap())
        .with_dt(dt)
        .with_projection(Projection::Window);
    let stepped = strang_step(&u0, &cfg).unwrap().resized(2);
    let mu = mass_gauge(&u0);
    let w_split = gauge_to_interaction(&stepped, dt, mu, eps).unwrap();
    let w_rk = rk4_interaction(&u0, eps, dt, 100);
    assert!(
        w_split.max_abs_diff(&w_rk) <= 1e-6,
        "{:e}",
        w_split.max_abs_diff(&w_rk)
    );
}
