//! The common interface of everything that can be evaluated as a score
//! ∇ₓ ln p_t(x): trained networks, exact oracles and noise-corrupting wrappers.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::RngCore;

use crate::error::{Error, Result};
use crate::rng;

pub trait ScoreField: Send + Sync {
    fn ambient_dim(&self) -> usize;

    /// Score at `x` and time `t`. Stochastic fields draw from `noise`;
    /// deterministic fields ignore it.
    fn score(&self, x: &DVector<f64>, t: f64, noise: &mut dyn RngCore) -> Result<DVector<f64>>;

    /// Scores of every column of a d×K matrix, returned as d×K.
    fn score_columns(&self, points: &DMatrix<f64>, t: f64, noise: &mut dyn RngCore) -> Result<DMatrix<f64>> {
        let d = self.ambient_dim();
        if points.nrows() != d {
            return Err(Error::Dimension(format!("points have {} rows, field expects {d}", points.nrows())));
        }
        let mut out = DMatrix::zeros(d, points.ncols());
        for (j, col) in points.column_iter().enumerate() {
            let s = self.score(&col.into_owned(), t, noise)?;
            out.set_column(j, &s);
        }
        Ok(out)
    }

    /// Convenience evaluation with a fixed noise stream.
    fn score_at(&self, x: &DVector<f64>, t: f64) -> Result<DVector<f64>> {
        self.score(x, t, &mut rng::stream(0, 0))
    }
}

impl<F: ScoreField + ?Sized> ScoreField for &F {
    fn ambient_dim(&self) -> usize {
        (**self).ambient_dim()
    }
    fn score(&self, x: &DVector<f64>, t: f64, noise: &mut dyn RngCore) -> Result<DVector<f64>> {
        (**self).score(x, t, noise)
    }
    fn score_columns(&self, points: &DMatrix<f64>, t: f64, noise: &mut dyn RngCore) -> Result<DMatrix<f64>> {
        (**self).score_columns(points, t, noise)
    }
}

impl<F: ScoreField + ?Sized> ScoreField for Box<F> {
    fn ambient_dim(&self) -> usize {
        (**self).ambient_dim()
    }
    fn score(&self, x: &DVector<f64>, t: f64, noise: &mut dyn RngCore) -> Result<DVector<f64>> {
        (**self).score(x, t, noise)
    }
    fn score_columns(&self, points: &DMatrix<f64>, t: f64, noise: &mut dyn RngCore) -> Result<DMatrix<f64>> {
        (**self).score_columns(points, t, noise)
    }
}

impl<F: ScoreField + ?Sized> ScoreField for Arc<F> {
    fn ambient_dim(&self) -> usize {
        (**self).ambient_dim()
    }
    fn score(&self, x: &DVector<f64>, t: f64, noise: &mut dyn RngCore) -> Result<DVector<f64>> {
        (**self).score(x, t, noise)
    }
    fn score_columns(&self, points: &DMatrix<f64>, t: f64, noise: &mut dyn RngCore) -> Result<DMatrix<f64>> {
        (**self).score_columns(points, t, noise)
    }
}

pub(crate) fn check_dim(x: &DVector<f64>, d: usize) -> Result<()> {
    if x.len() == d {
        Ok(())
    } else {
        Err(Error::Dimension(format!("point has {} entries, field expects {d}", x.len())))
    }
}
