use ldsmdl::datagen::{
    narma_generate, preprocess_center_trim, random_stable_lds, sample_inverse_wishart,
    sample_inverse_wishart_with, NarmaOrder, NarmaSpec, RandomLdsConfig,
};
use ldsmdl::model::spectral_radius;
use nalgebra::DMatrix;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use statrs::distribution::{ContinuousCDF, InverseGamma};

#[test]
fn inverse_wishart_mean() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let n = 100_000;
    let mut acc = DMatrix::zeros(2, 2);
    for _ in 0..n {
        acc += sample_inverse_wishart_with(2, 5, &mut rng).unwrap();
    }
    let mean = acc / n as f64;
    // I / (dof - dim - 1)
    let expect = DMatrix::identity(2, 2) * 0.5;
    assert!((mean - expect).amax() < 0.02);
}

#[test]
fn scalar_inverse_wishart_is_inverse_gamma() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let n = 100_000;
    let mut xs: Vec<f64> = (0..n)
        .map(|_| sample_inverse_wishart_with(1, 3, &mut rng).unwrap()[(0, 0)])
        .collect();
    xs.sort_by(f64::total_cmp);
    let dist = InverseGamma::new(1.5, 0.5).unwrap();
    let ks = xs
        .iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = dist.cdf(x);
            (f - i as f64 / n as f64).abs().max(((i + 1) as f64 / n as f64 - f).abs())
        })
        .fold(0.0f64, f64::max);
    assert!(ks < 0.02, "Kolmogorov distance {ks}");
}

#[test]
fn narma_sequences_are_finite_and_reproducible() {
    for order in [NarmaOrder::Ten, NarmaOrder::Twenty, NarmaOrder::Thirty] {
        let spec = NarmaSpec::new(order, 1000, 11);
        let a = narma_generate(&spec).unwrap();
        assert_eq!(a.len(), 1000);
        assert_eq!(a, narma_generate(&spec).unwrap());
        let trimmed = preprocess_center_trim(&a, (-0.5, 0.5)).unwrap();
        assert!(trimmed.y.iter().all(|v| v.abs() <= 0.5));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn generated_systems_are_valid_and_stable(seed in any::<u64>(), d in 1usize..=8, m in 1usize..=3) {
        let p = random_stable_lds(&RandomLdsConfig::new(d, m, seed)).unwrap();
        p.validate().unwrap();
        prop_assert!(spectral_radius(&p.a).unwrap() < 1.0);
        prop_assert_eq!(&p, &random_stable_lds(&RandomLdsConfig::new(d, m, seed)).unwrap());
    }

    #[test]
    fn inverse_wishart_bit_reproducible(seed in any::<u64>(), dim in 1usize..=5) {
        prop_assert_eq!(sample_inverse_wishart(dim, dim + 2, seed).unwrap(), sample_inverse_wishart(dim, dim + 2, seed).unwrap());
    }

    #[test]
    fn narma_prefix_agrees(seed in any::<u64>(), a in 31usize..200, b in 31usize..200) {
        let x = narma_generate(&NarmaSpec::new(NarmaOrder::Thirty, a, seed)).unwrap();
        let y = narma_generate(&NarmaSpec::new(NarmaOrder::Thirty, b, seed)).unwrap();
        let k = a.min(b);
        prop_assert_eq!(x.y.rows(0, k), y.y.rows(0, k));
    }
}
