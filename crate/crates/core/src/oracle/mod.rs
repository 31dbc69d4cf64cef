//! Training-free score fields with known log-densities, and the geometric
//! measurements used to check how scores align with a manifold.

mod bessel;
mod corrupt;
mod empirical;
mod frame;
mod sphere;
mod subspace;

use nalgebra::DVector;

use crate::error::Result;
use crate::field::ScoreField;

pub use bessel::{bessel_ratio, log_mean_exp_cos};
pub use corrupt::{corrupt_score, expected_gaussian_norm, reference_points, CorruptedField};
pub use empirical::{empirical_score, EmpiricalOracle};
pub use frame::{cosine_to_projection, tangent_normal_ratio, ManifoldFrame, TangentNormalRatio};
pub use sphere::{union_oracle, MixtureOracle, SphereOracle};
pub use subspace::{subspace_score, SubspaceOracle};

/// A score field that also knows the log-density it is the gradient of.
pub trait LogDensity: ScoreField {
    fn log_density(&self, x: &DVector<f64>, t: f64) -> Result<f64>;
}

/// Central finite-difference gradient of `f` at `x`.
pub fn finite_difference_gradient(f: impl Fn(&DVector<f64>) -> f64, x: &DVector<f64>, h: f64) -> DVector<f64> {
    let mut g = DVector::zeros(x.len());
    let mut xp = x.clone();
    for i in 0..x.len() {
        let x0 = xp[i];
        xp[i] = x0 + h;
        let up = f(&xp);
        xp[i] = x0 - h;
        let down = f(&xp);
        xp[i] = x0;
        g[i] = (up - down) / (2.0 * h);
    }
    g
}

#[cfg(test)]
pub(crate) mod testing {
    use super::*;

    /// Largest relative deviation between the oracle score and finite
    /// differences of its log-density at `x`.
    pub fn gradient_mismatch<O: LogDensity>(oracle: &O, x: &DVector<f64>, t: f64, h: f64) -> f64 {
        let s = oracle.score_at(x, t).unwrap();
        let fd = finite_difference_gradient(|y| oracle.log_density(y, t).unwrap(), x, h);
        (&s - &fd).norm() / s.norm().max(fd.norm())
    }
}
