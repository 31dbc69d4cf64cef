use nalgebra::{DMatrix, DVector};
use rand::RngCore;

use super::{LogDensity, ManifoldFrame};
use crate::diffusion::NoiseSchedule;
use crate::error::{Error, Result};
use crate::field::{check_dim, ScoreField};
use crate::linalg;
use crate::manifolds::{Dataset, EmbeddingMap};
use crate::rng;

/// Data N(0, UUᵀ) on the span of orthonormal U (d×k). Diffusion gives
/// N(0, UUᵀ + σ²I), whose score is −(x − UUᵀx)/σ² − UUᵀx/(1 + σ²).
#[derive(Debug, Clone)]
pub struct SubspaceOracle {
    basis: EmbeddingMap,
    schedule: NoiseSchedule,
}

impl SubspaceOracle {
    pub fn new(basis: EmbeddingMap, schedule: NoiseSchedule) -> Result<Self> {
        schedule.validate()?;
        if basis.source_dim() >= basis.target_dim() {
            return Err(Error::Dimension(format!(
                "subspace dimension {} must be below ambient {}",
                basis.source_dim(),
                basis.target_dim()
            )));
        }
        Ok(Self { basis, schedule })
    }

    /// U given as a raw matrix; non-orthonormal columns are a configuration error.
    pub fn from_matrix(u: DMatrix<f64>, schedule: NoiseSchedule) -> Result<Self> {
        Self::new(EmbeddingMap::from_matrix(u)?, schedule)
    }

    pub fn basis(&self) -> &EmbeddingMap {
        &self.basis
    }

    pub fn intrinsic_dim(&self) -> usize {
        self.basis.source_dim()
    }

    /// `n` samples of the undiffused data distribution.
    pub fn sample(&self, n: usize, seed: u64) -> Result<Dataset> {
        let k = self.intrinsic_dim();
        let mut r = rng::stream(seed, 0);
        let coords = DMatrix::from_vec(n, k, rng::standard_normal_vec(&mut r, n * k));
        Dataset::new(
            self.basis.embed_rows(&coords),
            Some(k),
            "subspace_gaussian",
            seed,
            [("k".to_string(), k as f64), ("d".to_string(), self.basis.target_dim() as f64)].into(),
        )
    }

    /// Frame at the orthogonal projection of `x` onto the subspace.
    pub fn frame(&self, x: &DVector<f64>) -> Result<ManifoldFrame> {
        let u = self.basis.matrix();
        ManifoldFrame::new(self.basis.project(x), u.clone(), linalg::orthonormal_complement(u))
    }
}

pub fn subspace_score(basis: &EmbeddingMap, x: &DVector<f64>, schedule: &NoiseSchedule, t: f64) -> Result<DVector<f64>> {
    check_dim(x, basis.target_dim())?;
    let s2 = schedule.sigma_at(t)?.powi(2);
    let tangent = basis.project(x);
    Ok(-(x - &tangent) / s2 - tangent / (1.0 + s2))
}

impl ScoreField for SubspaceOracle {
    fn ambient_dim(&self) -> usize {
        self.basis.target_dim()
    }

    fn score(&self, x: &DVector<f64>, t: f64, _noise: &mut dyn RngCore) -> Result<DVector<f64>> {
        subspace_score(&self.basis, x, &self.schedule, t)
    }
}

impl LogDensity for SubspaceOracle {
    fn log_density(&self, x: &DVector<f64>, t: f64) -> Result<f64> {
        check_dim(x, self.ambient_dim())?;
        let s2 = self.schedule.sigma_at(t)?.powi(2);
        let (d, k) = (self.ambient_dim() as f64, self.intrinsic_dim() as f64);
        let tangent = self.basis.project(x);
        let quad = (x - &tangent).norm_squared() / s2 + tangent.norm_squared() / (1.0 + s2);
        let log_det = (d - k) * s2.ln() + k * (1.0 + s2).ln();
        Ok(-0.5 * (quad + log_det + d * (2.0 * std::f64::consts::PI).ln()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::manifolds::random_isometry;
    use crate::oracle::testing::gradient_mismatch;

    fn oracle(k: usize, d: usize) -> SubspaceOracle {
        SubspaceOracle::new(random_isometry(k, d, 4).unwrap(), NoiseSchedule::default()).unwrap()
    }

    #[test]
    fn tangent_points_shrink_by_one_plus_variance() {
        let o = oracle(3, 8);
        let s = NoiseSchedule::default();
        let t = s.time_for_sigma(1.0).unwrap();
        let x = o.basis().embed(&DVector::from_vec(vec![1.0, -2.0, 0.5]));
        assert!((o.score_at(&x, t).unwrap() + &x / 2.0).amax() < 1e-9);
    }

    #[test]
    fn normal_points_point_at_the_subspace() {
        let o = oracle(3, 8);
        let s = NoiseSchedule::default();
        let t = 0.35;
        let sig2 = s.sigma_at(t).unwrap().powi(2);
        let mut r = rng::stream(5, 0);
        let g = DVector::from_vec(rng::standard_normal_vec(&mut r, 8));
        let x = &g - o.basis().project(&g);
        assert!((o.score_at(&x, t).unwrap() + &x / sig2).amax() < 1e-9 * x.amax() / sig2);
    }

    #[test]
    fn matches_finite_differences_of_the_gaussian_density() {
        let o = oracle(4, 20);
        let mut r = rng::stream(6, 0);
        for trial in 0..100 {
            let x = DVector::from_vec(rng::standard_normal_vec(&mut r, 20));
            let t = 0.2 + 0.007 * trial as f64;
            assert!(gradient_mismatch(&o, &x, t, 1e-5) < 1e-6);
        }
    }

    #[test]
    fn rejects_non_orthonormal_basis() {
        let u = DMatrix::from_element(5, 2, 1.0);
        assert!(matches!(SubspaceOracle::from_matrix(u, NoiseSchedule::default()), Err(Error::Config(_))));
    }

    #[test]
    fn samples_lie_in_the_subspace() {
        let o = oracle(3, 8);
        let data = o.sample(50, 1).unwrap();
        assert_eq!(data.true_dim, Some(3));
        for i in 0..50 {
            let x = data.row(i);
            assert!((o.basis().project(&x) - &x).amax() < 1e-12);
        }
    }
}
