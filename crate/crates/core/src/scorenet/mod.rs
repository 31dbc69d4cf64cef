//! Time-conditioned MLP score network trained by denoising score matching
//! with likelihood weighting λ(t) = g²(t).
//!
//! The network sees `[(x − c)/√(σ² + s²), ln σ]`, where `c` and `s` are the
//! data mean and RMS spread, and its raw output `F` is read as a noise
//! prediction: s_θ(x, t) = −F(x, t)/σ(t).

mod checkpoint;
mod mlp;
mod train;

use nalgebra::DVector;
use rand::{Rng, RngCore};

use crate::diffusion::NoiseSchedule;
use crate::error::{Error, Result};
use crate::field::{check_dim, ScoreField};
use crate::manifolds::Dataset;

pub use checkpoint::{load_checkpoint, save_checkpoint, CheckpointManifest};
pub use mlp::{Mlp, Scalar, Workspace};
pub use train::{dsm_loss, dsm_loss_and_grad, loss_for_scores, train, DsmBatch, TrainConfig, TrainState};

pub const ACTIVATION: &str = "swish";

/// Network parameters plus the fixed input normalisation.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreNet<T> {
    pub mlp: Mlp<T>,
    pub input_center: Vec<f64>,
    pub input_scale: f64,
}

impl<T: Scalar> ScoreNet<T> {
    /// Fresh network for ambient dimension `d` with the given hidden widths.
    pub fn new<R: Rng + ?Sized>(d: usize, hidden: &[usize], rng: &mut R) -> Result<Self> {
        if d == 0 {
            return Err(Error::Config("ambient dimension must be positive".into()));
        }
        let mut widths = Vec::with_capacity(hidden.len() + 2);
        widths.push(d + 1);
        widths.extend_from_slice(hidden);
        widths.push(d);
        Ok(Self {
            mlp: Mlp::new(&widths, rng)?,
            input_center: vec![0.0; d],
            input_scale: 1.0,
        })
    }

    /// Sets the input normalisation to the dataset's column means and RMS spread.
    pub fn normalized_for(mut self, data: &Dataset) -> Result<Self> {
        let d = self.ambient_dim();
        if data.ambient_dim() != d {
            return Err(Error::Dimension(format!(
                "dataset has dimension {}, network expects {d}",
                data.ambient_dim()
            )));
        }
        let n = data.len() as f64;
        let center: Vec<f64> = (0..d).map(|j| data.points.column(j).sum() / n).collect();
        let mut ss = 0.0;
        for j in 0..d {
            ss += data.points.column(j).iter().map(|v| (v - center[j]).powi(2)).sum::<f64>();
        }
        let scale = (ss / (n * d as f64)).sqrt();
        self.input_center = center;
        self.input_scale = if scale > 0.0 { scale } else { 1.0 };
        Ok(self)
    }

    pub fn ambient_dim(&self) -> usize {
        self.mlp.output_dim()
    }

    pub fn check(&self) -> Result<()> {
        let d = self.ambient_dim();
        if self.mlp.input_dim() != d + 1 || self.input_center.len() != d {
            return Err(Error::Config(format!(
                "widths {:?} inconsistent with ambient dimension {d}",
                self.mlp.widths()
            )));
        }
        Ok(())
    }

    pub fn convert<U: Scalar>(&self) -> ScoreNet<U> {
        ScoreNet {
            mlp: self.mlp.convert(),
            input_center: self.input_center.clone(),
            input_scale: self.input_scale,
        }
    }

    pub(crate) fn build_input(&self, xs: &[f64], sigmas: &[f64]) -> Vec<T> {
        let d = self.ambient_dim();
        let mut input = Vec::with_capacity(sigmas.len() * (d + 1));
        for (x, &sigma) in xs.chunks_exact(d).zip(sigmas) {
            let c_in = 1.0 / (sigma * sigma + self.input_scale * self.input_scale).sqrt();
            input.extend(x.iter().zip(&self.input_center).map(|(v, c)| T::cast_from((v - c) * c_in)));
            input.push(T::cast_from(sigma.ln()));
        }
        input
    }

    /// Scores of a row-major batch of points, each with its own σ.
    pub fn scores_batch(&self, xs: &[f64], sigmas: &[f64], ws: &mut Workspace<T>) -> Result<Vec<f64>> {
        self.check()?;
        let d = self.ambient_dim();
        if xs.len() != sigmas.len() * d {
            return Err(Error::Dimension(format!(
                "{} values do not form {} rows of width {d}",
                xs.len(),
                sigmas.len()
            )));
        }
        let input = self.build_input(xs, sigmas);
        let out = self.mlp.forward(&input, sigmas.len(), ws)?;
        let mut scores = Vec::with_capacity(out.len());
        for (row, &sigma) in out.chunks_exact(d).zip(sigmas) {
            scores.extend(row.iter().map(|f| -f.as_f64() / sigma));
        }
        Ok(scores)
    }

    /// s_θ(x, t).
    pub fn forward(&self, x: &DVector<f64>, t: f64, schedule: &NoiseSchedule) -> Result<DVector<f64>> {
        check_dim(x, self.ambient_dim())?;
        let sigma = schedule.sigma_at(t)?;
        let mut ws = Workspace::default();
        Ok(DVector::from_vec(self.scores_batch(x.as_slice(), &[sigma], &mut ws)?))
    }
}

/// A trained network exposed through [`ScoreField`].
#[derive(Debug, Clone)]
pub struct NetworkField<T> {
    net: ScoreNet<T>,
    schedule: NoiseSchedule,
}

impl<T: Scalar> NetworkField<T> {
    pub fn net(&self) -> &ScoreNet<T> {
        &self.net
    }

    pub fn schedule(&self) -> &NoiseSchedule {
        &self.schedule
    }
}

/// Wraps (EMA) parameters as a score field.
pub fn as_score_field<T: Scalar>(params: ScoreNet<T>, schedule: NoiseSchedule) -> Result<NetworkField<T>> {
    params.check()?;
    schedule.validate()?;
    Ok(NetworkField { net: params, schedule })
}

impl<T: Scalar> ScoreField for NetworkField<T> {
    fn ambient_dim(&self) -> usize {
        self.net.ambient_dim()
    }

    fn score(&self, x: &DVector<f64>, t: f64, _noise: &mut dyn RngCore) -> Result<DVector<f64>> {
        self.net.forward(x, t, &self.schedule)
    }

    fn score_columns(
        &self,
        points: &nalgebra::DMatrix<f64>,
        t: f64,
        _noise: &mut dyn RngCore,
    ) -> Result<nalgebra::DMatrix<f64>> {
        let d = self.ambient_dim();
        if points.nrows() != d {
            return Err(Error::Dimension(format!("points have {} rows, field expects {d}", points.nrows())));
        }
        let sigma = self.schedule.sigma_at(t)?;
        let k = points.ncols();
        // Column-major d×K storage is exactly K row-major points.
        let mut ws = Workspace::default();
        let scores = self.net.scores_batch(points.as_slice(), &vec![sigma; k], &mut ws)?;
        Ok(nalgebra::DMatrix::from_vec(d, k, scores))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::manifolds::gen_sphere;
    use crate::rng;

    fn small_net() -> ScoreNet<f64> {
        ScoreNet::new(6, &[16, 16], &mut rng::stream(1, 0)).unwrap()
    }

    #[test]
    fn zero_output_layer_gives_zero_score() {
        let mut net = small_net();
        net.mlp.zero_output_layer();
        let s = NoiseSchedule::default();
        let x = DVector::from_vec(rng::standard_normal_vec(&mut rng::stream(2, 0), 6));
        assert_eq!(net.forward(&x, 0.3, &s).unwrap(), DVector::zeros(6));
    }

    #[test]
    fn forward_is_deterministic() {
        let net = small_net();
        let s = NoiseSchedule::default();
        let x = DVector::from_vec(rng::standard_normal_vec(&mut rng::stream(2, 0), 6));
        assert_eq!(net.forward(&x, 0.3, &s).unwrap(), net.forward(&x, 0.3, &s).unwrap());
    }

    #[test]
    fn perturbing_a_hidden_weight_changes_output() {
        let mut net = small_net();
        let s = NoiseSchedule::default();
        let x = DVector::from_vec(rng::standard_normal_vec(&mut rng::stream(2, 0), 6));
        let before = net.forward(&x, 0.3, &s).unwrap();
        let (w, _) = net.mlp.layer_offsets(1);
        net.mlp.params_mut()[w + 3] += 0.5;
        assert_ne!(before, net.forward(&x, 0.3, &s).unwrap());
    }

    #[test]
    fn forward_rejects_bad_inputs() {
        let net = small_net();
        let s = NoiseSchedule::default();
        assert!(net.forward(&DVector::zeros(5), 0.3, &s).is_err());
        assert!(net.forward(&DVector::zeros(6), 1.3, &s).is_err());
    }

    #[test]
    fn field_matches_forward_bitwise() {
        let net = small_net();
        let s = NoiseSchedule::default();
        let field = as_score_field(net.clone(), s).unwrap();
        let x = DVector::from_vec(rng::standard_normal_vec(&mut rng::stream(9, 0), 6));
        assert_eq!(field.score_at(&x, 0.2).unwrap(), net.forward(&x, 0.2, &s).unwrap());
    }

    #[test]
    fn batched_field_matches_pointwise() {
        let field = as_score_field(small_net(), NoiseSchedule::default()).unwrap();
        let pts = nalgebra::DMatrix::from_vec(6, 24, rng::standard_normal_vec(&mut rng::stream(3, 0), 144));
        let batch = field.score_columns(&pts, 0.1, &mut rng::stream(0, 0)).unwrap();
        assert!(batch.iter().all(|v| v.is_finite()));
        for j in 0..24 {
            let single = field.score_at(&pts.column(j).into_owned(), 0.1).unwrap();
            assert!((single - batch.column(j)).amax() < 1e-10);
        }
    }

    #[test]
    fn normalisation_uses_data_spread() {
        let ds = gen_sphere(3, 6, 500, 2.0, 1).unwrap();
        let net = small_net().normalized_for(&ds).unwrap();
        // Unit-radius-2 sphere in 4 of 6 coordinates: mean square per entry ≈ 4/6.
        assert!((net.input_scale - (4.0f64 / 6.0).sqrt()).abs() < 0.1);
    }
}
