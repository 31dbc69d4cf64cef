use std::f64::consts::PI;

use nalgebra::DMatrix;
use proptest::prelude::*;
use rand::Rng;
use scoredim_core::baselines::{local_pca_estimate, mle_estimate, ppca_estimate};
use scoredim_core::manifolds::{gen_spaghetti, gen_sphere, random_isometry, Dataset};
use scoredim_core::rng;

#[test]
fn mle_on_ten_sphere_slightly_underestimates() {
    let data = gen_sphere(10, 100, 5000, 1.0, 0).unwrap();
    let est = mle_estimate(&data, 5).unwrap();
    assert!((9.0..=10.2).contains(&est), "{est}");
}

#[test]
fn local_pca_sees_the_embedding_frame_of_a_sphere() {
    let data = gen_sphere(10, 100, 3000, 1.0, 0).unwrap();
    assert_eq!(local_pca_estimate(&data, 20).unwrap().estimate, 11);
}

#[test]
fn ppca_overstates_the_spaghetti_line() {
    let data = gen_spaghetti(2000, 100, (0.0, PI), 0).unwrap();
    assert!(ppca_estimate(&data).unwrap().dimension >= 90);
}

#[test]
fn mle_finds_the_curve_dimension() {
    let data = gen_spaghetti(2000, 100, (0.0, PI), 0).unwrap();
    let est = mle_estimate(&data, 5).unwrap();
    assert!((est - 1.0).abs() < 0.1, "{est}");
}

fn small_sphere(seed: u64) -> Dataset {
    gen_sphere(3, 8, 300, 1.0, seed).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn mle_is_scale_invariant(seed in 0u64..1000, c in 0.01f64..100.0) {
        let data = small_sphere(seed);
        let mut scaled = data.clone();
        scaled.points *= c;
        let (a, b) = (mle_estimate(&data, 6).unwrap(), mle_estimate(&scaled, 6).unwrap());
        prop_assert!((a - b).abs() <= 1e-9 * a);
    }

    #[test]
    fn mle_ignores_row_order(seed in 0u64..1000, shift in 1usize..299) {
        let data = small_sphere(seed);
        let rows: Vec<usize> = (0..300).map(|i| (i + shift) % 300).collect();
        let mut permuted = data.clone();
        permuted.points = data.points.select_rows(rows.iter());
        let (a, b) = (mle_estimate(&data, 6).unwrap(), mle_estimate(&permuted, 6).unwrap());
        prop_assert!((a - b).abs() <= 1e-9 * a);
    }

    #[test]
    fn ppca_is_rotation_invariant(seed in 0u64..1000) {
        let data = small_sphere(seed);
        let q: DMatrix<f64> = random_isometry(8, 8, seed + 1).unwrap().matrix().clone();
        let mut rotated = data.clone();
        rotated.points = &data.points * q;
        prop_assert_eq!(ppca_estimate(&data).unwrap().dimension, ppca_estimate(&rotated).unwrap().dimension);
    }

    #[test]
    fn local_pca_on_planes_is_exact(seed in 0u64..1000, k in 1usize..5) {
        let q = random_isometry(k, 9, seed).unwrap();
        let mut r = rng::stream(seed, 7);
        let coords = DMatrix::from_fn(400, k, |_, _| r.random::<f64>());
        let data = Dataset::new(q.embed_rows(&coords), Some(k), "plane", seed, Default::default()).unwrap();
        prop_assert_eq!(local_pca_estimate(&data, 40).unwrap().estimate, k);
    }
}
