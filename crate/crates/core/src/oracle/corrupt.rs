use nalgebra::{DMatrix, DVector};
use rand::{Rng, RngCore};

use crate::diffusion::NoiseSchedule;
use crate::error::{Error, Result};
use crate::field::ScoreField;
use crate::manifolds::Dataset;
use crate::rng;

/// E‖e‖ for e ~ N(0, I_d): √2·Γ((d+1)/2)/Γ(d/2).
pub fn expected_gaussian_norm(d: usize) -> f64 {
    let d = d as f64;
    std::f64::consts::SQRT_2 * (libm::lgamma((d + 1.0) / 2.0) - libm::lgamma(d / 2.0)).exp()
}

/// `count` draws of x₀ + σ(t₀)z with x₀ a uniformly chosen dataset row,
/// one per column.
pub fn reference_points(data: &Dataset, schedule: &NoiseSchedule, t0: f64, count: usize, seed: u64) -> Result<DMatrix<f64>> {
    if data.is_empty() || count == 0 {
        return Err(Error::Parameter("reference sample needs data and a positive count".into()));
    }
    let sigma = schedule.sigma_at(t0)?;
    let d = data.ambient_dim();
    let mut r = rng::stream(seed, 0);
    let mut out = DMatrix::zeros(d, count);
    for j in 0..count {
        let i = r.random_range(0..data.len());
        for c in 0..d {
            out[(c, j)] = data.points[(i, c)] + sigma * r.sample::<f64, _>(rand_distr::StandardNormal);
        }
    }
    Ok(out)
}

/// A score field with isotropic Gaussian noise added to every evaluation.
#[derive(Debug, Clone)]
pub struct CorruptedField<F> {
    inner: F,
    ratio: f64,
    noise_sigma: f64,
    mean_score_norm: f64,
}

impl<F> CorruptedField<F> {
    pub fn inner(&self) -> &F {
        &self.inner
    }

    pub fn ratio(&self) -> f64 {
        self.ratio
    }

    /// Per-coordinate standard deviation of the added noise.
    pub fn noise_sigma(&self) -> f64 {
        self.noise_sigma
    }

    /// Monte-Carlo mean of ‖field(x, t₀)‖ used for calibration.
    pub fn mean_score_norm(&self) -> f64 {
        self.mean_score_norm
    }
}

/// Wraps `field` so that E‖e‖ / E‖field(x, t₀)‖ = `ratio`, the denominator
/// being averaged over the columns of `reference`.
pub fn corrupt_score<F: ScoreField>(
    field: F,
    ratio: f64,
    reference: &DMatrix<f64>,
    t0: f64,
    seed: u64,
) -> Result<CorruptedField<F>> {
    if !(ratio >= 0.0 && ratio.is_finite()) {
        return Err(Error::Parameter(format!("noise ratio must be >= 0, got {ratio}")));
    }
    if reference.ncols() == 0 {
        return Err(Error::Parameter("empty reference sample".into()));
    }
    let scores = field.score_columns(reference, t0, &mut rng::stream(seed, 0))?;
    let mean_score_norm = scores.column_iter().map(|c| c.norm()).sum::<f64>() / scores.ncols() as f64;
    let noise_sigma = ratio * mean_score_norm / expected_gaussian_norm(field.ambient_dim());
    Ok(CorruptedField { inner: field, ratio, noise_sigma, mean_score_norm })
}

impl<F: ScoreField> ScoreField for CorruptedField<F> {
    fn ambient_dim(&self) -> usize {
        self.inner.ambient_dim()
    }

    fn score(&self, x: &DVector<f64>, t: f64, noise: &mut dyn RngCore) -> Result<DVector<f64>> {
        let mut s = self.inner.score(x, t, noise)?;
        if self.noise_sigma > 0.0 {
            for v in s.iter_mut() {
                *v += self.noise_sigma * noise.sample::<f64, _>(rand_distr::StandardNormal);
            }
        }
        Ok(s)
    }

    fn score_columns(&self, points: &DMatrix<f64>, t: f64, noise: &mut dyn RngCore) -> Result<DMatrix<f64>> {
        let mut s = self.inner.score_columns(points, t, noise)?;
        if self.noise_sigma > 0.0 {
            for v in s.iter_mut() {
                *v += self.noise_sigma * noise.sample::<f64, _>(rand_distr::StandardNormal);
            }
        }
        Ok(s)
    }
}
