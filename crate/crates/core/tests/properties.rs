use std::collections::HashSet;

use num_complex::Complex64;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use nlslab::random_data::make_initial_data;
use nlslab::seed::{derive_seed, labels};
use nlslab::spectral::{
    evaluate_physical, mass_gauge, sobolev_norm, sup_norm, LatticeSpec, SpectralField,
};

fn field_strategy() -> impl Strategy<Value = SpectralField> {
    (0usize..12).prop_flat_map(|cutoff| {
        prop::collection::vec((-10.0f64..10.0, -10.0f64..10.0), 2 * cutoff + 1).prop_map(move |v| {
            SpectralField::from_amplitudes(
                v.into_iter().map(|(a, b)| Complex64::new(a, b)).collect(),
            )
            .unwrap()
        })
    })
}

proptest! {
    #[test]
    fn parseval(f in field_strategy(), over in 2usize..6) {
        let lattice = LatticeSpec::new(f.cutoff(), over).unwrap();
        let u = evaluate_physical(&f, &lattice).unwrap();
        let mean = u.iter().map(|z| z.norm_sqr()).sum::<f64>() / u.len() as f64;
        let mu = mass_gauge(&f);
        prop_assert!((mean - mu).abs() <= 1e-10 * mu.max(1.0));
    }

    #[test]
    fn sobolev_norm_monotone_in_s(f in field_strategy(), s in -2.0f64..2.0, ds in 0.0f64..1.0) {
        prop_assert!(sobolev_norm(&f, s) <= sobolev_norm(&f, s + ds) * (1.0 + 1e-12));
        prop_assert!((sobolev_norm(&f, 0.0).powi(2) - mass_gauge(&f)).abs() <= 1e-9 * mass_gauge(&f).max(1.0));
    }

    #[test]
    fn sup_between_rms_and_l1(f in field_strategy()) {
        let lattice = LatticeSpec::new(f.cutoff(), 4).unwrap();
        let sup = sup_norm(&f, &lattice).unwrap();
        let l1: f64 = f.amplitudes().iter().map(|a| a.norm()).sum();
        let rms = mass_gauge(&f).sqrt();
        prop_assert!(sup.grid_max <= l1 * (1.0 + 1e-12) + 1e-12);
        prop_assert!(sup.grid_max >= rms * (1.0 - 1e-12));
        prop_assert!(sup.envelope >= sup.grid_max);
    }

    #[test]
    fn field_json_is_exact(f in field_strategy()) {
        let back = SpectralField::from_json(&f.to_json()).unwrap();
        prop_assert_eq!(back, f);
    }

    #[test]
    fn draws_are_reproducible(seed in any::<u64>(), cutoff in 1usize..16) {
        let a = make_initial_data(0.25, cutoff, seed).unwrap();
        let b = make_initial_data(0.25, cutoff, seed).unwrap();
        prop_assert_eq!(a.field(), b.field());
    }
}

#[test]
fn seed_index_never_collides() {
    let mut rng = ChaCha8Rng::seed_from_u64(0xC0FFEE);
    let mut seen = HashSet::with_capacity(2_000_000);
    for _ in 0..1_000_000 {
        let m: u64 = rng.random();
        let a = derive_seed(m, "mc", 0);
        let b = derive_seed(m, "mc", 1);
        assert_ne!(a, b, "collision for master seed {m}");
        seen.insert(a);
        seen.insert(b);
    }
    assert_eq!(seen.len(), 2_000_000);
}

#[test]
fn labels_separate_streams() {
    let all = [
        labels::DRAW,
        labels::PILOT,
        labels::CHAOS,
        labels::HYPER,
        labels::PHASE,
    ];
    let seeds: HashSet<u64> = all.iter().map(|l| derive_seed(7, l, 0)).collect();
    assert_eq!(seeds.len(), all.len());
}
