use std::collections::BTreeMap;

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use super::{random_isometry_with, Dataset, EmbeddingMap, STREAM_EMBED, STREAM_NOISE, STREAM_POINTS};
use crate::error::{Error, Result};
use crate::rng;

fn check_sphere_dims(k: usize, d: usize, n: usize) -> Result<()> {
    if k == 0 || k >= d {
        return Err(Error::Dimension(format!(
            "sphere dimension k={k} must satisfy 1 <= k <= d-1 with d={d}"
        )));
    }
    if n == 0 {
        return Err(Error::Parameter("n must be at least 1".into()));
    }
    Ok(())
}

fn params(pairs: &[(&str, f64)]) -> BTreeMap<String, f64> {
    pairs.iter().map(|(k, v)| (k.to_string(), *v)).collect()
}

/// `n` uniform points on the radius-`r` sphere in ℝ^{dim}, row-major.
fn uniform_sphere_rows<R: Rng + ?Sized>(rng: &mut R, dim: usize, n: usize, radius: f64) -> Vec<f64> {
    let mut out = Vec::with_capacity(n * dim);
    let mut row = vec![0.0; dim];
    for _ in 0..n {
        let norm = loop {
            rng::fill_standard_normal(rng, &mut row);
            let norm = row.iter().map(|v| v * v).sum::<f64>().sqrt();
            if norm > 1e-300 {
                break norm;
            }
        };
        out.extend(row.iter().map(|v| radius * v / norm));
    }
    out
}

/// The isometry used by [`gen_sphere`] (and the other sphere generators) for `seed`.
pub fn sphere_embedding(k: usize, d: usize, seed: u64) -> Result<EmbeddingMap> {
    let mut r = rng::stream(seed, STREAM_EMBED);
    random_isometry_with(k + 1, d, &mut r)
}

/// Uniform samples on a radius-`radius` k-sphere, isometrically embedded in ℝ^d.
pub fn gen_sphere(k: usize, d: usize, n: usize, radius: f64, seed: u64) -> Result<Dataset> {
    check_sphere_dims(k, d, n)?;
    if !(radius > 0.0 && radius.is_finite()) {
        return Err(Error::Parameter(format!("radius must be positive, got {radius}")));
    }
    let mut r = rng::stream(seed, STREAM_POINTS);
    let local = DMatrix::from_row_slice(n, k + 1, &uniform_sphere_rows(&mut r, k + 1, n, radius));
    let emb = sphere_embedding(k, d, seed)?;
    Dataset::new(
        emb.embed_rows(&local),
        Some(k),
        "sphere",
        seed,
        params(&[("k", k as f64), ("d", d as f64), ("n", n as f64), ("radius", radius)]),
    )
}

/// Hyperspherical coordinates → point on the unit sphere in ℝ^{len+1}:
/// x₁ = cos θ₁, x_i = sin θ₁ ⋯ sin θ_{i−1} cos θ_i, x_{k+1} = sin θ₁ ⋯ sin θ_k.
pub fn hyperspherical_to_cartesian(angles: &[f64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(angles.len() + 1);
    let mut sin_prod = 1.0;
    for &a in angles {
        out.push(sin_prod * a.cos());
        sin_prod *= a.sin();
    }
    out.push(sin_prod);
    out
}

/// Unit k-sphere sampled through Gaussian hyperspherical angles θ ~ N(0, α·I_k).
/// Small `alpha` concentrates mass around the pole x₁ = 1.
pub fn gen_nonuniform_sphere(k: usize, d: usize, n: usize, alpha: f64, seed: u64) -> Result<Dataset> {
    check_sphere_dims(k, d, n)?;
    if !(alpha > 0.0 && alpha.is_finite()) {
        return Err(Error::Parameter(format!("alpha must be positive, got {alpha}")));
    }
    let angle = Normal::new(0.0, alpha.sqrt()).map_err(|e| Error::Parameter(e.to_string()))?;
    let mut r = rng::stream(seed, STREAM_POINTS);
    let mut rows = Vec::with_capacity(n * (k + 1));
    let mut theta = vec![0.0; k];
    for _ in 0..n {
        for a in theta.iter_mut() {
            *a = angle.sample(&mut r);
        }
        rows.extend(hyperspherical_to_cartesian(&theta));
    }
    let local = DMatrix::from_row_slice(n, k + 1, &rows);
    let emb = sphere_embedding(k, d, seed)?;
    Dataset::new(
        emb.embed_rows(&local),
        Some(k),
        "nonuniform_sphere",
        seed,
        params(&[("k", k as f64), ("d", d as f64), ("n", n as f64), ("alpha", alpha)]),
    )
}

/// Unit k-sphere plus isotropic ambient Gaussian noise of standard deviation `noise_sigma`.
pub fn gen_noisy_sphere(k: usize, d: usize, n: usize, noise_sigma: f64, seed: u64) -> Result<Dataset> {
    if !(noise_sigma >= 0.0 && noise_sigma.is_finite()) {
        return Err(Error::Parameter(format!("noise_sigma must be >= 0, got {noise_sigma}")));
    }
    let mut ds = gen_sphere(k, d, n, 1.0, seed)?;
    if noise_sigma > 0.0 {
        let mut r = rng::stream(seed, STREAM_NOISE);
        for i in 0..n {
            for j in 0..d {
                let z: f64 = r.sample(StandardNormal);
                ds.points[(i, j)] += noise_sigma * z;
            }
        }
    }
    ds.generator_tag = "noisy_sphere".into();
    ds.params.remove("radius");
    ds.params.insert("noise_sigma".into(), noise_sigma);
    Ok(ds)
}

/// The curve t ↦ (sin t, sin 2t, …, sin d·t) with t uniform on `t_range`.
pub fn gen_spaghetti(n: usize, d: usize, t_range: (f64, f64), seed: u64) -> Result<Dataset> {
    let (lo, hi) = t_range;
    if !(lo.is_finite() && hi.is_finite() && hi > lo) {
        return Err(Error::Parameter(format!("empty parameter range [{lo}, {hi})")));
    }
    if d < 2 {
        return Err(Error::Dimension("spaghetti curve needs d >= 2".into()));
    }
    if n == 0 {
        return Err(Error::Parameter("n must be at least 1".into()));
    }
    let mut r = rng::stream(seed, STREAM_POINTS);
    let mut rows = Vec::with_capacity(n * d);
    for _ in 0..n {
        let t = r.random_range(lo..hi);
        rows.extend((1..=d).map(|j| (j as f64 * t).sin()));
    }
    Dataset::new(
        DMatrix::from_row_slice(n, d, &rows),
        Some(1),
        "spaghetti",
        seed,
        params(&[("n", n as f64), ("d", d as f64), ("t_lo", lo), ("t_hi", hi)]),
    )
}

/// Two concentric spheres of different dimension and radius, each with its
/// own random isometry into a shared ambient space.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct UnionOfSpheres {
    pub k1: usize,
    pub r1: f64,
    pub k2: usize,
    pub r2: f64,
    pub d: usize,
    pub n_each: usize,
}

impl Default for UnionOfSpheres {
    fn default() -> Self {
        Self {
            k1: 10,
            r1: 1.0,
            k2: 30,
            r2: 0.25,
            d: 100,
            n_each: 2500,
        }
    }
}

/// Embeddings of the two components of [`gen_union_spheres`].
pub fn union_embeddings(spec: &UnionOfSpheres, seed: u64) -> Result<(EmbeddingMap, EmbeddingMap)> {
    let mut r1 = rng::stream(seed, STREAM_EMBED);
    let mut r2 = rng::stream(seed, STREAM_EMBED + 1);
    Ok((
        random_isometry_with(spec.k1 + 1, spec.d, &mut r1)?,
        random_isometry_with(spec.k2 + 1, spec.d, &mut r2)?,
    ))
}

pub fn gen_union_spheres(spec: &UnionOfSpheres, seed: u64) -> Result<Dataset> {
    check_sphere_dims(spec.k1, spec.d, spec.n_each)?;
    check_sphere_dims(spec.k2, spec.d, spec.n_each)?;
    for r in [spec.r1, spec.r2] {
        if !(r > 0.0 && r.is_finite()) {
            return Err(Error::Parameter(format!("radius must be positive, got {r}")));
        }
    }
    let (e1, e2) = union_embeddings(spec, seed)?;
    let n = spec.n_each;
    let mut rng1 = rng::stream(seed, STREAM_POINTS);
    let mut rng2 = rng::stream(seed, STREAM_POINTS + 1);
    let a = e1.embed_rows(&DMatrix::from_row_slice(
        n,
        spec.k1 + 1,
        &uniform_sphere_rows(&mut rng1, spec.k1 + 1, n, spec.r1),
    ));
    let b = e2.embed_rows(&DMatrix::from_row_slice(
        n,
        spec.k2 + 1,
        &uniform_sphere_rows(&mut rng2, spec.k2 + 1, n, spec.r2),
    ));
    let mut points = DMatrix::zeros(2 * n, spec.d);
    points.rows_mut(0, n).copy_from(&a);
    points.rows_mut(n, n).copy_from(&b);
    let labels = (0..2 * n).map(|i| u32::from(i >= n)).collect();
    Dataset::new(
        points,
        None,
        "union_spheres",
        seed,
        params(&[
            ("k1", spec.k1 as f64),
            ("r1", spec.r1),
            ("k2", spec.k2 as f64),
            ("r2", spec.r2),
            ("d", spec.d as f64),
            ("n_each", n as f64),
        ]),
    )?
    .with_labels(labels)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{center_rows, numerical_rank};

    #[test]
    fn sphere_rows_have_radius_norm() {
        let ds = gen_sphere(10, 100, 200, 1.0, 3).unwrap();
        for i in 0..ds.len() {
            assert!((ds.points.row(i).norm() - 1.0).abs() < 1e-9);
        }
        assert_eq!(ds.true_dim, Some(10));
    }

    #[test]
    fn sphere_centered_rank_is_k_plus_one() {
        let ds = gen_sphere(10, 100, 5000, 1.0, 11).unwrap();
        assert_eq!(numerical_rank(&center_rows(&ds.points), 1e-8).unwrap(), 11);
    }

    #[test]
    fn sphere_regeneration_bit_identical() {
        let a = gen_sphere(1, 3, 4, 1.0, 42).unwrap();
        let b = gen_sphere(1, 3, 4, 1.0, 42).unwrap();
        assert_eq!(a.points.as_slice(), b.points.as_slice());
    }

    #[test]
    fn sphere_rejects_k_at_ambient() {
        assert!(matches!(gen_sphere(100, 100, 5, 1.0, 0), Err(Error::Dimension(_))));
    }

    #[test]
    fn spaghetti_rows_bounded_and_zero_at_origin() {
        let ds = gen_spaghetti(300, 100, (0.0, std::f64::consts::TAU), 1).unwrap();
        assert!(ds.points.iter().all(|v| (-1.0..=1.0).contains(v)));
        let z = gen_spaghetti(3, 10, (0.0, 1e-300), 1).unwrap();
        assert!(z.points.iter().all(|v| v.abs() < 1e-250));
    }

    #[test]
    fn spaghetti_is_not_low_rank() {
        let ds = gen_spaghetti(2000, 100, (0.0, std::f64::consts::TAU), 2).unwrap();
        assert!(numerical_rank(&center_rows(&ds.points), 1e-8).unwrap() > 90);
    }

    #[test]
    fn spaghetti_rejects_empty_range() {
        assert!(matches!(gen_spaghetti(5, 10, (1.0, 1.0), 0), Err(Error::Parameter(_))));
    }

    #[test]
    fn union_norms_and_counts() {
        let spec = UnionOfSpheres { n_each: 50, ..Default::default() };
        let ds = gen_union_spheres(&spec, 4).unwrap();
        assert_eq!(ds.len(), 100);
        let labels = ds.labels.as_ref().unwrap();
        for i in 0..ds.len() {
            let want = if labels[i] == 0 { 1.0 } else { 0.25 };
            assert!((ds.points.row(i).norm() - want).abs() < 1e-9);
        }
        assert_eq!(ds.true_dim, None);
    }

    #[test]
    fn hyperspherical_map_is_unit_norm() {
        let p = hyperspherical_to_cartesian(&[0.3, -2.0, 1.1, 5.0]);
        assert_eq!(p.len(), 5);
        assert!((p.iter().map(|v| v * v).sum::<f64>() - 1.0).abs() < 1e-12);
        assert_eq!(hyperspherical_to_cartesian(&[0.0, 0.0]), vec![1.0, 0.0, 0.0]);
    }

    #[test]
    fn nonuniform_rows_unit_norm() {
        let ds = gen_nonuniform_sphere(10, 100, 300, 0.5, 8).unwrap();
        for i in 0..ds.len() {
            assert!((ds.points.row(i).norm() - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn nonuniform_concentration_decreases_with_alpha() {
        // Mean resultant length ‖mean of unit rows‖ is a concentration statistic.
        let mrl = |alpha: f64| {
            let ds = gen_nonuniform_sphere(10, 100, 4000, alpha, 21).unwrap();
            (ds.points.row_sum() / ds.len() as f64).norm()
        };
        let (a, b, c) = (mrl(0.25), mrl(1.0), mrl(4.0));
        assert!(a > b && b > c, "{a} {b} {c}");
    }

    #[test]
    fn noisy_sphere_zero_noise_matches_sphere() {
        let a = gen_noisy_sphere(5, 20, 30, 0.0, 6).unwrap();
        let b = gen_sphere(5, 20, 30, 1.0, 6).unwrap();
        assert_eq!(a.points, b.points);
    }

    #[test]
    fn noisy_sphere_norm_deviation_grows() {
        let dev = |s: f64| {
            let ds = gen_noisy_sphere(25, 100, 2000, s, 3).unwrap();
            (0..ds.len()).map(|i| (ds.points.row(i).norm() - 1.0).abs()).sum::<f64>() / ds.len() as f64
        };
        let (a, b, c) = (dev(0.0), dev(0.05), dev(0.1));
        assert!(a < 1e-12 && a < b && b < c);
    }
}
