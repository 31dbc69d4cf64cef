//! Variance-exploding SDE: geometric noise schedule, Gaussian transition
//! kernel and its score.
//!
//! σ(t) = σ_min·(σ_max/σ_min)^{t/T}, so g²(t) = dσ²/dt = 2σ²(t)·ln(σ_max/σ_min)/T.

use nalgebra::DVector;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NoiseSchedule {
    pub sigma_min: f64,
    pub sigma_max: f64,
    pub horizon: f64,
}

impl Default for NoiseSchedule {
    fn default() -> Self {
        Self {
            sigma_min: 0.01,
            sigma_max: 4.0,
            horizon: 1.0,
        }
    }
}

impl NoiseSchedule {
    pub fn new(sigma_min: f64, sigma_max: f64, horizon: f64) -> Result<Self> {
        let s = Self {
            sigma_min,
            sigma_max,
            horizon,
        };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.sigma_min > 0.0 && self.sigma_min.is_finite()) {
            return Err(Error::Parameter(format!("sigma_min must be positive, got {}", self.sigma_min)));
        }
        if !(self.sigma_max > self.sigma_min && self.sigma_max.is_finite()) {
            return Err(Error::Parameter(format!(
                "sigma_max ({}) must exceed sigma_min ({})",
                self.sigma_max, self.sigma_min
            )));
        }
        if !(self.horizon > 0.0 && self.horizon.is_finite()) {
            return Err(Error::Parameter(format!("horizon must be positive, got {}", self.horizon)));
        }
        Ok(())
    }

    /// ln(σ_max/σ_min).
    pub fn log_ratio(&self) -> f64 {
        (self.sigma_max / self.sigma_min).ln()
    }

    fn check_time(&self, t: f64) -> Result<()> {
        if (0.0..=self.horizon).contains(&t) {
            Ok(())
        } else {
            Err(Error::Domain {
                t,
                lo: 0.0,
                hi: self.horizon,
            })
        }
    }

    pub fn sigma_at(&self, t: f64) -> Result<f64> {
        self.check_time(t)?;
        Ok(self.sigma_unchecked(t))
    }

    pub(crate) fn sigma_unchecked(&self, t: f64) -> f64 {
        self.sigma_min * (self.log_ratio() * t / self.horizon).exp()
    }

    pub fn g_squared_at(&self, t: f64) -> Result<f64> {
        let s = self.sigma_at(t)?;
        Ok(2.0 * s * s * self.log_ratio() / self.horizon)
    }

    /// Inverse of [`sigma_at`](Self::sigma_at).
    pub fn time_for_sigma(&self, sigma: f64) -> Result<f64> {
        if !(sigma >= self.sigma_min && sigma <= self.sigma_max) {
            return Err(Error::Parameter(format!(
                "sigma {sigma} outside [{}, {}]",
                self.sigma_min, self.sigma_max
            )));
        }
        let t = self.horizon * (sigma / self.sigma_min).ln() / self.log_ratio();
        Ok(t.clamp(0.0, self.horizon))
    }

    /// Default evaluation time of the estimator: σ(t₀) = 2σ_min.
    pub fn default_t0(&self) -> f64 {
        self.time_for_sigma((2.0 * self.sigma_min).min(self.sigma_max))
            .expect("2·sigma_min clamped into range")
    }
}

/// x₀ + σ(t)·z with z ~ N(0, I).
pub fn perturb<R: Rng + ?Sized>(
    x0: &DVector<f64>,
    schedule: &NoiseSchedule,
    t: f64,
    rng: &mut R,
) -> Result<DVector<f64>> {
    let sigma = schedule.sigma_at(t)?;
    let z = rng::standard_normal_vec(rng, x0.len());
    Ok(x0 + DVector::from_vec(z) * sigma)
}

/// Score of the transition kernel: ∇ ln N(x_t | x₀, σ²I) = (x₀ − x_t)/σ².
pub fn kernel_score(
    x_t: &DVector<f64>,
    x0: &DVector<f64>,
    schedule: &NoiseSchedule,
    t: f64,
) -> Result<DVector<f64>> {
    if x_t.len() != x0.len() {
        return Err(Error::Dimension(format!("x_t has {} entries, x0 has {}", x_t.len(), x0.len())));
    }
    let sigma = schedule.sigma_at(t)?;
    Ok((x0 - x_t) / (sigma * sigma))
}
