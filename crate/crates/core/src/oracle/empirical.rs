use nalgebra::{DMatrix, DVector};
use rand::RngCore;

use super::LogDensity;
use crate::diffusion::NoiseSchedule;
use crate::error::{Error, Result};
use crate::field::{check_dim, ScoreField};
use crate::manifolds::Dataset;

/// Exact score of the Gaussian mixture obtained by diffusing the empirical
/// distribution of a dataset: p_t(x) = Σᵢ wᵢ N(x | yᵢ, σ²I).
#[derive(Debug, Clone)]
pub struct EmpiricalOracle {
    /// One data point per column.
    points: DMatrix<f64>,
    log_weights: Option<Vec<f64>>,
    schedule: NoiseSchedule,
}

impl EmpiricalOracle {
    pub fn new(data: &Dataset, schedule: NoiseSchedule) -> Result<Self> {
        schedule.validate()?;
        Ok(Self { points: data.points.transpose(), log_weights: None, schedule })
    }

    /// Non-uniform mixture weights, one positive value per row (normalised here).
    pub fn with_weights(mut self, weights: &[f64]) -> Result<Self> {
        if weights.len() != self.points.ncols() {
            return Err(Error::Dimension(format!(
                "{} weights for {} points",
                weights.len(),
                self.points.ncols()
            )));
        }
        if weights.iter().any(|w| !(*w > 0.0 && w.is_finite())) {
            return Err(Error::Parameter("mixture weights must be positive and finite".into()));
        }
        let total: f64 = weights.iter().sum();
        self.log_weights = Some(weights.iter().map(|w| (w / total).ln()).collect());
        Ok(self)
    }

    pub fn len(&self) -> usize {
        self.points.ncols()
    }

    pub fn is_empty(&self) -> bool {
        self.points.ncols() == 0
    }

    /// Log-sum-exp over components; returns (posterior mean of y, log p).
    fn posterior(&self, x: &DVector<f64>, sigma: f64) -> (DVector<f64>, f64) {
        let n = self.points.ncols();
        let inv = 1.0 / (2.0 * sigma * sigma);
        let logits: Vec<f64> = (0..n)
            .map(|i| {
                let sq = self.points.column(i).iter().zip(x.iter()).map(|(y, v)| (y - v) * (y - v)).sum::<f64>();
                let lw = self.log_weights.as_ref().map_or(-(n as f64).ln(), |w| w[i]);
                lw - sq * inv
            })
            .collect();
        let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut mean = DVector::zeros(x.len());
        let mut z = 0.0;
        for (i, l) in logits.iter().enumerate() {
            let w = (l - max).exp();
            if w > 0.0 {
                mean.axpy(w, &self.points.column(i), 1.0);
                z += w;
            }
        }
        let d = x.len() as f64;
        let log_p = max + z.ln() - 0.5 * d * (2.0 * std::f64::consts::PI * sigma * sigma).ln();
        (mean / z, log_p)
    }
}

impl ScoreField for EmpiricalOracle {
    fn ambient_dim(&self) -> usize {
        self.points.nrows()
    }

    fn score(&self, x: &DVector<f64>, t: f64, _noise: &mut dyn RngCore) -> Result<DVector<f64>> {
        check_dim(x, self.ambient_dim())?;
        let sigma = self.schedule.sigma_at(t)?;
        let (mean, _) = self.posterior(x, sigma);
        Ok((mean - x) / (sigma * sigma))
    }
}

impl LogDensity for EmpiricalOracle {
    fn log_density(&self, x: &DVector<f64>, t: f64) -> Result<f64> {
        check_dim(x, self.ambient_dim())?;
        let sigma = self.schedule.sigma_at(t)?;
        Ok(self.posterior(x, sigma).1)
    }
}

/// One-off evaluation of the empirical mixture score.
pub fn empirical_score(data: &Dataset, x: &DVector<f64>, schedule: &NoiseSchedule, t: f64) -> Result<DVector<f64>> {
    EmpiricalOracle::new(data, *schedule)?.score_at(x, t)
}
