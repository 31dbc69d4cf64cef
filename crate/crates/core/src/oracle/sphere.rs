use nalgebra::{DMatrix, DVector};
use rand::RngCore;

use super::bessel::{bessel_ratio, log_mean_exp_cos};
use super::{LogDensity, ManifoldFrame};
use crate::diffusion::NoiseSchedule;
use crate::error::{Error, Result};
use crate::field::{check_dim, ScoreField};
use crate::linalg;
use crate::manifolds::{sphere_embedding, union_embeddings, EmbeddingMap, UnionOfSpheres};

/// Exact diffused score of the uniform distribution on a radius-ρ k-sphere
/// spanned by the columns of Q (d×(k+1)), optionally pre-convolved with
/// isotropic noise of variance `noise_var`.
///
/// Writing a = Qᵀx and κ = ρ‖a‖/σ², the density is proportional to
/// exp(−‖x‖²/2σ²)·E_u[exp(κ⟨â, u⟩)], so the score is
/// −x/σ² + ρ·A(κ)·Qâ/σ² with A = I_{ν+1}/I_ν and ν = (k − 1)/2.
#[derive(Debug, Clone)]
pub struct SphereOracle {
    embedding: EmbeddingMap,
    radius: f64,
    noise_var: f64,
    schedule: NoiseSchedule,
}

impl SphereOracle {
    pub fn new(embedding: EmbeddingMap, radius: f64, schedule: NoiseSchedule) -> Result<Self> {
        schedule.validate()?;
        if embedding.source_dim() < 2 || embedding.source_dim() > embedding.target_dim() {
            return Err(Error::Dimension(format!(
                "sphere needs 2 <= k+1 <= d, got k+1={} and d={}",
                embedding.source_dim(),
                embedding.target_dim()
            )));
        }
        if !(radius > 0.0 && radius.is_finite()) {
            return Err(Error::Parameter(format!("radius must be positive, got {radius}")));
        }
        Ok(Self { embedding, radius, noise_var: 0.0, schedule })
    }

    /// The oracle for the sphere produced by `gen_sphere(k, d, _, radius, seed)`.
    pub fn for_generated(k: usize, d: usize, radius: f64, seed: u64, schedule: NoiseSchedule) -> Result<Self> {
        Self::new(sphere_embedding(k, d, seed)?, radius, schedule)
    }

    /// Data noise of standard deviation `sigma` added before diffusion.
    pub fn with_data_noise(mut self, sigma: f64) -> Result<Self> {
        if !(sigma >= 0.0 && sigma.is_finite()) {
            return Err(Error::Parameter(format!("noise sigma must be >= 0, got {sigma}")));
        }
        self.noise_var = sigma * sigma;
        Ok(self)
    }

    pub fn intrinsic_dim(&self) -> usize {
        self.embedding.source_dim() - 1
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }

    pub fn embedding(&self) -> &EmbeddingMap {
        &self.embedding
    }

    fn nu(&self) -> f64 {
        (self.intrinsic_dim() as f64 - 1.0) / 2.0
    }

    fn variance(&self, t: f64) -> Result<f64> {
        Ok(self.schedule.sigma_at(t)?.powi(2) + self.noise_var)
    }

    /// Frame at the nearest sphere point ρ·Qâ. The normal space holds the
    /// radial direction and the complement of the sphere's span.
    pub fn frame(&self, x: &DVector<f64>) -> Result<ManifoldFrame> {
        let a = self.embedding.coordinates(x);
        let r = a.norm();
        if r == 0.0 {
            return Err(Error::Undefined("projection onto the sphere is not unique at its centre".into()));
        }
        let a_hat = a / r;
        let m = self.embedding.source_dim();
        let within = linalg::orthonormal_complement(&DMatrix::from_column_slice(m, 1, a_hat.as_slice()));
        let q = self.embedding.matrix();
        let radial = q * &a_hat;
        let outside = linalg::orthonormal_complement(q);
        let d = self.embedding.target_dim();
        let mut normal = DMatrix::zeros(d, 1 + outside.ncols());
        normal.set_column(0, &radial);
        normal.columns_mut(1, outside.ncols()).copy_from(&outside);
        ManifoldFrame::new(&radial * self.radius, q * within, normal)
    }
}

impl ScoreField for SphereOracle {
    fn ambient_dim(&self) -> usize {
        self.embedding.target_dim()
    }

    fn score(&self, x: &DVector<f64>, t: f64, _noise: &mut dyn RngCore) -> Result<DVector<f64>> {
        check_dim(x, self.ambient_dim())?;
        let var = self.variance(t)?;
        let a = self.embedding.coordinates(x);
        let r = a.norm();
        let mut s = -x / var;
        if r > 0.0 {
            let kappa = self.radius * r / var;
            let pull = self.radius * bessel_ratio(self.nu(), kappa) / (var * r);
            s += self.embedding.embed(&a) * pull;
        }
        Ok(s)
    }
}

impl LogDensity for SphereOracle {
    fn log_density(&self, x: &DVector<f64>, t: f64) -> Result<f64> {
        check_dim(x, self.ambient_dim())?;
        let var = self.variance(t)?;
        let kappa = self.radius * self.embedding.coordinates(x).norm() / var;
        let d = self.ambient_dim() as f64;
        Ok(-(x.norm_squared() + self.radius * self.radius) / (2.0 * var) + log_mean_exp_cos(self.nu(), kappa)
            - 0.5 * d * (2.0 * std::f64::consts::PI * var).ln())
    }
}

/// Weighted mixture of exact oracles: the score is the posterior-weighted
/// average of component scores.
#[derive(Debug, Clone)]
pub struct MixtureOracle<O> {
    components: Vec<O>,
    log_weights: Vec<f64>,
}

impl<O: LogDensity> MixtureOracle<O> {
    pub fn new(components: Vec<O>, weights: &[f64]) -> Result<Self> {
        if components.is_empty() || components.len() != weights.len() {
            return Err(Error::Dimension("mixture needs one weight per component".into()));
        }
        let d = components[0].ambient_dim();
        if components.iter().any(|c| c.ambient_dim() != d) {
            return Err(Error::Dimension("mixture components differ in dimension".into()));
        }
        if weights.iter().any(|w| !(*w > 0.0 && w.is_finite())) {
            return Err(Error::Parameter("mixture weights must be positive".into()));
        }
        let total: f64 = weights.iter().sum();
        Ok(Self { components, log_weights: weights.iter().map(|w| (w / total).ln()).collect() })
    }

    pub fn components(&self) -> &[O] {
        &self.components
    }

    /// Posterior component probabilities at `x`.
    pub fn responsibilities(&self, x: &DVector<f64>, t: f64) -> Result<Vec<f64>> {
        let logs = self
            .components
            .iter()
            .zip(&self.log_weights)
            .map(|(c, lw)| Ok(lw + c.log_density(x, t)?))
            .collect::<Result<Vec<f64>>>()?;
        let max = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let w: Vec<f64> = logs.iter().map(|l| (l - max).exp()).collect();
        let z: f64 = w.iter().sum();
        Ok(w.into_iter().map(|v| v / z).collect())
    }
}

impl<O: LogDensity> ScoreField for MixtureOracle<O> {
    fn ambient_dim(&self) -> usize {
        self.components[0].ambient_dim()
    }

    fn score(&self, x: &DVector<f64>, t: f64, noise: &mut dyn RngCore) -> Result<DVector<f64>> {
        let resp = self.responsibilities(x, t)?;
        let mut s = DVector::zeros(x.len());
        for (c, w) in self.components.iter().zip(resp) {
            if w > 0.0 {
                s.axpy(w, &c.score(x, t, noise)?, 1.0);
            }
        }
        Ok(s)
    }
}

impl<O: LogDensity> LogDensity for MixtureOracle<O> {
    fn log_density(&self, x: &DVector<f64>, t: f64) -> Result<f64> {
        let logs = self
            .components
            .iter()
            .zip(&self.log_weights)
            .map(|(c, lw)| Ok(lw + c.log_density(x, t)?))
            .collect::<Result<Vec<f64>>>()?;
        let max = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        Ok(max + logs.iter().map(|l| (l - max).exp()).sum::<f64>().ln())
    }
}

/// Exact oracle of the two-sphere union produced by `gen_union_spheres`.
pub fn union_oracle(spec: &UnionOfSpheres, seed: u64, schedule: NoiseSchedule) -> Result<MixtureOracle<SphereOracle>> {
    let (e1, e2) = union_embeddings(spec, seed)?;
    MixtureOracle::new(
        vec![SphereOracle::new(e1, spec.r1, schedule)?, SphereOracle::new(e2, spec.r2, schedule)?],
        &[1.0, 1.0],
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::manifolds::gen_sphere;
    use crate::oracle::testing::gradient_mismatch;
    use crate::oracle::EmpiricalOracle;
    use crate::rng;

    #[test]
    fn matches_finite_differences_across_noise_levels() {
        let s = NoiseSchedule::default();
        let mut r = rng::stream(2, 0);
        for &(k, d) in &[(1usize, 3usize), (4, 9), (10, 30)] {
            let o = SphereOracle::for_generated(k, d, 1.3, 5, s).unwrap();
            for trial in 0..30 {
                let x = DVector::from_vec(rng::standard_normal_vec(&mut r, d)) * (0.5 / (d as f64).sqrt())
                    + o.embedding().embed(&DVector::from_fn(k + 1, |i, _| if i == 0 { 1.3 } else { 0.0 }));
                let t = 0.25 + 0.025 * trial as f64;
                let m = gradient_mismatch(&o, &x, t, 1e-6);
                assert!(m < 1e-5, "k={k} t={t}: mismatch {m}");
            }
        }
    }

    #[test]
    fn close_to_the_sphere_the_score_points_at_it() {
        let s = NoiseSchedule::default();
        let o = SphereOracle::for_generated(10, 40, 1.0, 1, s).unwrap();
        let data = gen_sphere(10, 40, 3, 1.0, 1).unwrap();
        let x = data.row(0) * 1.1;
        let t = s.time_for_sigma(0.02).unwrap();
        let score = o.score_at(&x, t).unwrap();
        let target = data.row(0) - &x;
        assert!(score.dot(&target) / (score.norm() * target.norm()) > 0.999);
    }

    #[test]
    fn agrees_with_a_large_empirical_mixture_at_moderate_noise() {
        // At σ = 1 the empirical mixture of 20k sphere samples is smooth enough
        // to approximate the exact score.
        let s = NoiseSchedule::default();
        let data = gen_sphere(2, 5, 20_000, 1.0, 3).unwrap();
        let exact = SphereOracle::for_generated(2, 5, 1.0, 3, s).unwrap();
        let empirical = EmpiricalOracle::new(&data, s).unwrap();
        let t = s.time_for_sigma(1.0).unwrap();
        let x = data.row(7) * 1.2;
        let a = exact.score_at(&x, t).unwrap();
        let b = empirical.score_at(&x, t).unwrap();
        assert!((&a - &b).norm() < 0.05 * a.norm());
    }

    #[test]
    fn data_noise_adds_to_the_diffusion_variance() {
        let s = NoiseSchedule::default();
        let base = SphereOracle::for_generated(3, 8, 1.0, 2, s).unwrap();
        let noisy = base.clone().with_data_noise(0.3).unwrap();
        let t = 0.2;
        let sig = s.sigma_at(t).unwrap();
        let t_eff = s.time_for_sigma((sig * sig + 0.09).sqrt()).unwrap();
        let x = DVector::from_fn(8, |i, _| 0.1 * i as f64);
        assert!((noisy.score_at(&x, t).unwrap() - base.score_at(&x, t_eff).unwrap()).amax() < 1e-9);
    }

    #[test]
    fn frame_is_complete_and_based_on_the_sphere() {
        let s = NoiseSchedule::default();
        let o = SphereOracle::for_generated(4, 9, 2.0, 1, s).unwrap();
        let x = DVector::from_fn(9, |i, _| 0.3 + 0.1 * i as f64);
        let f = o.frame(&x).unwrap();
        assert_eq!(f.tangent.ncols(), 4);
        assert!((f.base_point.norm() - 2.0).abs() < 1e-12);
    }

    #[test]
    fn union_oracle_follows_the_nearer_component() {
        let s = NoiseSchedule::default();
        let spec = UnionOfSpheres { d: 50, n_each: 10, ..Default::default() };
        let o = union_oracle(&spec, 4, s).unwrap();
        let t = s.time_for_sigma(0.02).unwrap();
        let on_small = o.components()[1].frame(&o.components()[1].embedding().embed(&DVector::from_fn(31, |i, _| {
            if i == 0 { 0.25 } else { 0.0 }
        })))
        .unwrap()
        .base_point;
        let resp = o.responsibilities(&on_small, t).unwrap();
        assert!(resp[1] > 0.999);
        let mut r = rng::stream(1, 0);
        let x = &on_small + DVector::from_vec(rng::standard_normal_vec(&mut r, 50)) * 0.05;
        assert!(gradient_mismatch(&o, &x, 0.3, 1e-6) < 1e-5);
    }
}
