use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::field::ScoreField;

/// Orthonormal tangent and normal bases at a base point π(x) of a manifold.
#[derive(Debug, Clone, PartialEq)]
pub struct ManifoldFrame {
    pub base_point: DVector<f64>,
    /// d×k
    pub tangent: DMatrix<f64>,
    /// d×(d−k)
    pub normal: DMatrix<f64>,
}

impl ManifoldFrame {
    /// Checks that [tangent | normal] is an orthonormal basis of ℝ^d.
    pub fn new(base_point: DVector<f64>, tangent: DMatrix<f64>, normal: DMatrix<f64>) -> Result<Self> {
        let d = base_point.len();
        if tangent.nrows() != d || normal.nrows() != d || tangent.ncols() + normal.ncols() != d {
            return Err(Error::Dimension(format!(
                "frame blocks {:?} and {:?} do not complete ℝ^{d}",
                tangent.shape(),
                normal.shape()
            )));
        }
        let mut full = DMatrix::zeros(d, d);
        full.columns_mut(0, tangent.ncols()).copy_from(&tangent);
        full.columns_mut(tangent.ncols(), normal.ncols()).copy_from(&normal);
        let err = (full.tr_mul(&full) - DMatrix::identity(d, d)).amax();
        if err > 1e-10 {
            return Err(Error::Config(format!("frame is not orthonormal (deviation {err:.2e})")));
        }
        Ok(Self { base_point, tangent, normal })
    }

    pub fn intrinsic_dim(&self) -> usize {
        self.tangent.ncols()
    }

    pub fn tangent_part(&self, v: &DVector<f64>) -> DVector<f64> {
        &self.tangent * self.tangent.tr_mul(v)
    }

    pub fn normal_part(&self, v: &DVector<f64>) -> DVector<f64> {
        &self.normal * self.normal.tr_mul(v)
    }
}

/// Cosine between the score at `x` and the direction from `x` to its
/// projection π(x).
pub fn cosine_to_projection<F: ScoreField + ?Sized>(
    field: &F,
    x: &DVector<f64>,
    frame: &ManifoldFrame,
    t: f64,
) -> Result<f64> {
    let to_base = &frame.base_point - x;
    let dist = to_base.norm();
    if dist <= 1e-12 * x.norm().max(1.0) {
        return Err(Error::Undefined("x lies on the manifold, no projection direction".into()));
    }
    let s = field.score_at(x, t)?;
    let norm = s.norm();
    if norm == 0.0 {
        return Err(Error::Undefined("zero score vector".into()));
    }
    Ok(s.dot(&to_base) / (norm * dist))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TangentNormalRatio {
    /// ‖T s‖/‖N s‖, or +∞ when the normal part vanishes.
    pub value: f64,
    pub normal_vanished: bool,
}

/// Ratio of the tangent and normal components of the score at `x`.
pub fn tangent_normal_ratio<F: ScoreField + ?Sized>(
    field: &F,
    x: &DVector<f64>,
    frame: &ManifoldFrame,
    t: f64,
) -> Result<TangentNormalRatio> {
    let s = field.score_at(x, t)?;
    let tn = frame.tangent.tr_mul(&s).norm();
    let nn = frame.normal.tr_mul(&s).norm();
    Ok(if nn == 0.0 {
        TangentNormalRatio { value: f64::INFINITY, normal_vanished: true }
    } else {
        TangentNormalRatio { value: tn / nn, normal_vanished: false }
    })
}
