//! Denoising score matching, Adam and the EMA shadow.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{Scalar, ScoreNet, Workspace};
use crate::diffusion::NoiseSchedule;
use crate::error::{Error, Result};
use crate::manifolds::Dataset;
use crate::rng;

/// Loss magnitude treated as divergence.
pub const DIVERGENCE_LOSS: f64 = 1e6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub learning_rate: f64,
    /// Linear warm-up length in steps.
    pub warmup_steps: u64,
    /// Cosine decay of the learning rate down to this fraction of its peak
    /// at `steps`; 1 keeps it constant.
    pub final_lr_fraction: f64,
    pub ema_decay: f64,
    pub batch_size: usize,
    pub steps: u64,
    pub seed: u64,
    pub schedule: NoiseSchedule,
    /// Training times are drawn uniformly on [t_min, T].
    pub t_min: f64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_eps: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            warmup_steps: 200,
            final_lr_fraction: 0.05,
            ema_decay: 0.999,
            batch_size: 128,
            steps: 20_000,
            seed: 0,
            schedule: NoiseSchedule::default(),
            t_min: 1e-3,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_eps: 1e-8,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        self.schedule.validate()?;
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad("learning_rate must be positive");
        }
        if !(0.0..=1.0).contains(&self.ema_decay) {
            return bad("ema_decay must lie in [0, 1]");
        }
        if !(self.final_lr_fraction > 0.0 && self.final_lr_fraction <= 1.0) {
            return bad("final_lr_fraction must lie in (0, 1]");
        }
        if self.batch_size == 0 {
            return bad("batch_size must be positive");
        }
        if !(0.0..self.schedule.horizon).contains(&self.t_min) {
            return bad("t_min must lie in [0, T)");
        }
        if !(0.0..1.0).contains(&self.adam_beta1) || !(0.0..1.0).contains(&self.adam_beta2) || self.adam_eps <= 0.0 {
            return bad("invalid Adam hyperparameters");
        }
        Ok(())
    }

    /// Learning rate used for the update that completes step `step + 1`.
    pub fn learning_rate_at(&self, step: u64) -> f64 {
        let mut lr = self.learning_rate;
        if step < self.warmup_steps {
            lr *= (step + 1) as f64 / self.warmup_steps as f64;
        }
        if self.final_lr_fraction < 1.0 && self.steps > 0 {
            let p = (step as f64 / self.steps as f64).min(1.0);
            let f = self.final_lr_fraction;
            lr *= f + (1.0 - f) * 0.5 * (1.0 + (std::f64::consts::PI * p).cos());
        }
        lr
    }
}

/// Row-major minibatch of clean points, perturbed points and times.
#[derive(Debug, Clone, PartialEq)]
pub struct DsmBatch {
    pub dim: usize,
    pub x0: Vec<f64>,
    pub x_t: Vec<f64>,
    pub t: Vec<f64>,
}

impl DsmBatch {
    pub fn new(dim: usize, x0: Vec<f64>, x_t: Vec<f64>, t: Vec<f64>) -> Result<Self> {
        if dim == 0 || x0.len() != t.len() * dim || x_t.len() != x0.len() {
            return Err(Error::Dimension(format!(
                "batch buffers ({}, {}) do not hold {} rows of width {dim}",
                x0.len(),
                x_t.len(),
                t.len()
            )));
        }
        Ok(Self { dim, x0, x_t, t })
    }

    /// Draws rows uniformly with replacement, t ~ U[t_min, T] and x_t = x₀ + σ(t)z.
    pub fn sample<R: Rng + ?Sized>(
        data: &Dataset,
        schedule: &NoiseSchedule,
        t_min: f64,
        size: usize,
        rng: &mut R,
    ) -> Result<Self> {
        if data.is_empty() {
            return Err(Error::Parameter("cannot train on an empty dataset".into()));
        }
        let d = data.ambient_dim();
        let mut x0 = Vec::with_capacity(size * d);
        let mut x_t = Vec::with_capacity(size * d);
        let mut t = Vec::with_capacity(size);
        let mut z = vec![0.0; d];
        for _ in 0..size {
            let i = rng.random_range(0..data.len());
            let ti = rng.random_range(t_min..=schedule.horizon);
            let sigma = schedule.sigma_at(ti)?;
            rng::fill_standard_normal(rng, &mut z);
            for (j, zj) in z.iter().enumerate() {
                let v = data.points[(i, j)];
                x0.push(v);
                x_t.push(v + sigma * zj);
            }
            t.push(ti);
        }
        Ok(Self { dim: d, x0, x_t, t })
    }

    pub fn len(&self) -> usize {
        self.t.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t.is_empty()
    }
}

/// Mean of ½·g²(t)·‖(x₀ − x_t)/σ² − s_θ(x_t, t)‖² over the batch.
pub fn dsm_loss<T: Scalar>(net: &ScoreNet<T>, schedule: &NoiseSchedule, batch: &DsmBatch) -> Result<f64> {
    let mut ws = Workspace::default();
    evaluate(net, schedule, batch, &mut ws, false).map(|(loss, _)| loss)
}

/// Loss and its gradient with respect to the network parameters.
pub fn dsm_loss_and_grad<T: Scalar>(
    net: &ScoreNet<T>,
    schedule: &NoiseSchedule,
    batch: &DsmBatch,
    ws: &mut Workspace<T>,
    grad: &mut [T],
) -> Result<f64> {
    let (loss, d_out) = evaluate(net, schedule, batch, ws, true)?;
    net.mlp.backward(ws, &d_out, grad)?;
    Ok(loss)
}

/// The same objective evaluated on explicit score values (row-major, one row
/// per batch element).
pub fn loss_for_scores(schedule: &NoiseSchedule, batch: &DsmBatch, scores: &[f64]) -> Result<f64> {
    let d = batch.dim;
    if scores.len() != batch.x0.len() || batch.is_empty() {
        return Err(Error::Dimension("scores do not match the batch".into()));
    }
    let mut total = 0.0;
    for (row, s_row) in scores.chunks_exact(d).enumerate() {
        let t = batch.t[row];
        let sigma = schedule.sigma_at(t)?;
        let mut sq = 0.0;
        for j in 0..d {
            let r = (batch.x0[row * d + j] - batch.x_t[row * d + j]) / (sigma * sigma) - s_row[j];
            sq += r * r;
        }
        total += 0.5 * schedule.g_squared_at(t)? * sq;
    }
    Ok(total / batch.len() as f64)
}

fn evaluate<T: Scalar>(
    net: &ScoreNet<T>,
    schedule: &NoiseSchedule,
    batch: &DsmBatch,
    ws: &mut Workspace<T>,
    want_grad: bool,
) -> Result<(f64, Vec<T>)> {
    net.check()?;
    let d = net.ambient_dim();
    if batch.dim != d {
        return Err(Error::Dimension(format!("batch width {} but network dimension {d}", batch.dim)));
    }
    if batch.is_empty() {
        return Err(Error::Parameter("empty batch".into()));
    }
    let b = batch.len();
    let mut sigmas = Vec::with_capacity(b);
    let mut weights = Vec::with_capacity(b);
    for &t in &batch.t {
        sigmas.push(schedule.sigma_at(t)?);
        weights.push(schedule.g_squared_at(t)?);
    }
    let input = net.build_input(&batch.x_t, &sigmas);
    let out = net.mlp.forward(&input, b, ws)?;
    let mut total = 0.0;
    let mut d_out = if want_grad { Vec::with_capacity(out.len()) } else { Vec::new() };
    for (row, f_row) in out.chunks_exact(d).enumerate() {
        let sigma = sigmas[row];
        let inv_var = 1.0 / (sigma * sigma);
        let x0 = &batch.x0[row * d..(row + 1) * d];
        let xt = &batch.x_t[row * d..(row + 1) * d];
        let mut sq = 0.0;
        for j in 0..d {
            let f = f_row[j].as_f64();
            if !f.is_finite() {
                return Err(Error::Numeric(format!("non-finite network output in batch row {row}")));
            }
            // residual = target − s_θ with s_θ = −F/σ
            let r = (x0[j] - xt[j]) * inv_var + f / sigma;
            sq += r * r;
            if want_grad {
                d_out.push(T::cast_from(weights[row] * r / (sigma * b as f64)));
            }
        }
        total += 0.5 * weights[row] * sq;
    }
    Ok((total / b as f64, d_out))
}

/// Raw parameters, EMA shadow, Adam moments and the loss trace.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainState<T> {
    pub net: ScoreNet<T>,
    pub ema: ScoreNet<T>,
    pub adam_m: Vec<T>,
    pub adam_v: Vec<T>,
    pub step: u64,
    pub loss_trace: Vec<f64>,
}

impl<T: Scalar> TrainState<T> {
    pub fn new(init: ScoreNet<T>) -> Self {
        let n = init.mlp.params().len();
        Self {
            ema: init.clone(),
            net: init,
            adam_m: vec![T::zero(); n],
            adam_v: vec![T::zero(); n],
            step: 0,
            loss_trace: Vec::new(),
        }
    }

    /// Trains until `config.steps`. Step `s` always draws from stream
    /// (seed, s), so a resumed run reproduces an uninterrupted one.
    pub fn run(&mut self, data: &Dataset, config: &TrainConfig) -> Result<()> {
        self.run_until(data, config, config.steps, |_, _| {})
    }

    /// Trains up to step `until` (at most `config.steps`), calling
    /// `progress(step, loss)` after every step.
    pub fn run_until<F: FnMut(u64, f64)>(
        &mut self,
        data: &Dataset,
        config: &TrainConfig,
        until: u64,
        mut progress: F,
    ) -> Result<()> {
        config.validate()?;
        self.net.check()?;
        if data.ambient_dim() != self.net.ambient_dim() {
            return Err(Error::Dimension(format!(
                "dataset dimension {} but network dimension {}",
                data.ambient_dim(),
                self.net.ambient_dim()
            )));
        }
        let n = self.net.mlp.params().len();
        if self.adam_m.len() != n || self.adam_v.len() != n || self.ema.mlp.params().len() != n {
            return Err(Error::Config("optimizer state does not match the network".into()));
        }
        let seed = rng::derive_seed(config.seed, "train");
        let mut ws = Workspace::default();
        let mut grad = vec![T::zero(); n];
        while self.step < until.min(config.steps) {
            let mut r = rng::stream(seed, self.step);
            let batch = DsmBatch::sample(data, &config.schedule, config.t_min, config.batch_size, &mut r)?;
            let loss = match dsm_loss_and_grad(&self.net, &config.schedule, &batch, &mut ws, &mut grad) {
                Ok(l) => l,
                Err(Error::Numeric(_)) => f64::NAN,
                Err(e) => return Err(e),
            };
            self.loss_trace.push(loss);
            if !loss.is_finite() || loss > DIVERGENCE_LOSS {
                return Err(self.diverged(loss));
            }
            self.apply_update(&grad, config);
            self.step += 1;
            if !self.net.mlp.params().iter().all(|p| p.is_finite()) {
                return Err(self.diverged(f64::NAN));
            }
            progress(self.step, loss);
        }
        Ok(())
    }

    fn diverged(&self, loss: f64) -> Error {
        Error::Diverged { step: self.step, loss, trace: self.loss_trace.clone() }
    }

    fn apply_update(&mut self, grad: &[T], config: &TrainConfig) {
        let t = (self.step + 1) as i32;
        let (b1, b2) = (config.adam_beta1, config.adam_beta2);
        let c1 = 1.0 - b1.powi(t);
        let c2 = 1.0 - b2.powi(t);
        let step_size = T::cast_from(config.learning_rate_at(self.step) / c1);
        let inv_c2 = T::cast_from(1.0 / c2);
        let eps = T::cast_from(config.adam_eps);
        let (b1, b2) = (T::cast_from(b1), T::cast_from(b2));
        let (one_b1, one_b2) = (T::one() - b1, T::one() - b2);
        let decay = T::cast_from(config.ema_decay);
        let keep = T::cast_from(1.0 - config.ema_decay);
        let params = self.net.mlp.params_mut();
        let ema = self.ema.mlp.params_mut();
        for i in 0..params.len() {
            let g = grad[i];
            let m = b1 * self.adam_m[i] + one_b1 * g;
            let v = b2 * self.adam_v[i] + one_b2 * g * g;
            self.adam_m[i] = m;
            self.adam_v[i] = v;
            params[i] = params[i] - step_size * m / ((v * inv_c2).sqrt() + eps);
            ema[i] = decay * ema[i] + keep * params[i];
        }
    }
}

/// Trains `init` on `data`; returns raw and EMA parameters with the loss trace.
pub fn train<T: Scalar>(data: &Dataset, init: ScoreNet<T>, config: &TrainConfig) -> Result<TrainState<T>> {
    let mut state = TrainState::new(init);
    state.run(data, config)?;
    Ok(state)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diffusion::kernel_score;
    use crate::manifolds::gen_sphere;
    use nalgebra::DVector;

    fn tiny_batch(d: usize, b: usize, seed: u64) -> DsmBatch {
        let data = gen_sphere(2, d, 16, 1.0, seed).unwrap();
        DsmBatch::sample(&data, &NoiseSchedule::default(), 0.05, b, &mut rng::stream(seed, 1)).unwrap()
    }

    #[test]
    fn zero_network_loss_matches_direct_sum() {
        let s = NoiseSchedule::default();
        let mut net: ScoreNet<f64> = ScoreNet::new(4, &[8], &mut rng::stream(1, 0)).unwrap();
        net.mlp.zero_output_layer();
        let batch = tiny_batch(4, 6, 2);
        let mut expected = 0.0;
        for i in 0..batch.len() {
            let t = batch.t[i];
            let sig = s.sigma_at(t).unwrap();
            let sq: f64 = (0..4).map(|j| (batch.x0[i * 4 + j] - batch.x_t[i * 4 + j]).powi(2)).sum();
            expected += 0.5 * s.g_squared_at(t).unwrap() * sq / sig.powi(4);
        }
        expected /= batch.len() as f64;
        let loss = dsm_loss(&net, &s, &batch).unwrap();
        assert!((loss - expected).abs() <= 1e-12 * expected);
    }

    #[test]
    fn loss_vanishes_at_kernel_scores_and_matches_network_path() {
        let s = NoiseSchedule::default();
        let batch = tiny_batch(3, 5, 4);
        let mut exact = Vec::new();
        for i in 0..batch.len() {
            let xt = DVector::from_column_slice(&batch.x_t[i * 3..i * 3 + 3]);
            let x0 = DVector::from_column_slice(&batch.x0[i * 3..i * 3 + 3]);
            exact.extend(kernel_score(&xt, &x0, &s, batch.t[i]).unwrap().iter());
        }
        assert_eq!(loss_for_scores(&s, &batch, &exact).unwrap(), 0.0);

        let net: ScoreNet<f64> = ScoreNet::new(3, &[4], &mut rng::stream(1, 0)).unwrap();
        let sigmas: Vec<f64> = batch.t.iter().map(|&t| s.sigma_at(t).unwrap()).collect();
        let scores = net.scores_batch(&batch.x_t, &sigmas, &mut Workspace::default()).unwrap();
        let direct = loss_for_scores(&s, &batch, &scores).unwrap();
        let loss = dsm_loss(&net, &s, &batch).unwrap();
        assert!(loss > 0.0);
        assert!((loss - direct).abs() <= 1e-10 * direct);
    }

    #[test]
    fn loss_ignores_batch_order() {
        let s = NoiseSchedule::default();
        let net: ScoreNet<f64> = ScoreNet::new(4, &[8], &mut rng::stream(1, 0)).unwrap();
        let batch = tiny_batch(4, 5, 3);
        let order = [3usize, 0, 4, 1, 2];
        let mut x0 = Vec::new();
        let mut xt = Vec::new();
        let mut t = Vec::new();
        for &i in &order {
            x0.extend_from_slice(&batch.x0[i * 4..i * 4 + 4]);
            xt.extend_from_slice(&batch.x_t[i * 4..i * 4 + 4]);
            t.push(batch.t[i]);
        }
        let shuffled = DsmBatch::new(4, x0, xt, t).unwrap();
        let a = dsm_loss(&net, &s, &batch).unwrap();
        let b = dsm_loss(&net, &s, &shuffled).unwrap();
        assert!((a - b).abs() <= 1e-12 * a);
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let s = NoiseSchedule::default();
        let net: ScoreNet<f64> = ScoreNet::new(3, &[8, 8], &mut rng::stream(5, 0)).unwrap();
        let batch = tiny_batch(3, 4, 6);
        let mut ws = Workspace::default();
        let mut grad = vec![0.0; net.mlp.params().len()];
        dsm_loss_and_grad(&net, &s, &batch, &mut ws, &mut grad).unwrap();
        let h = 1e-6;
        let mut worst: f64 = 0.0;
        for i in 0..grad.len() {
            let mut plus = net.clone();
            plus.mlp.params_mut()[i] += h;
            let mut minus = net.clone();
            minus.mlp.params_mut()[i] -= h;
            let fd = (dsm_loss(&plus, &s, &batch).unwrap() - dsm_loss(&minus, &s, &batch).unwrap()) / (2.0 * h);
            let rel = (fd - grad[i]).abs() / fd.abs().max(grad[i].abs()).max(1e-3);
            worst = worst.max(rel);
        }
        assert!(worst < 1e-4, "worst relative gradient error {worst}");
    }

    fn small_config(steps: u64, decay: f64) -> TrainConfig {
        TrainConfig { steps, ema_decay: decay, batch_size: 8, warmup_steps: 0, seed: 3, ..Default::default() }
    }

    #[test]
    fn zero_ema_decay_tracks_raw_params() {
        let data = gen_sphere(2, 5, 50, 1.0, 1).unwrap();
        let init: ScoreNet<f64> = ScoreNet::new(5, &[8], &mut rng::stream(1, 0)).unwrap();
        let mut st = TrainState::new(init);
        let cfg = small_config(5, 0.0);
        st.run(&data, &cfg).unwrap();
        assert_eq!(st.net, st.ema);
    }

    #[test]
    fn unit_ema_decay_keeps_init() {
        let data = gen_sphere(2, 5, 50, 1.0, 1).unwrap();
        let init: ScoreNet<f64> = ScoreNet::new(5, &[8], &mut rng::stream(1, 0)).unwrap();
        let st = train(&data, init.clone(), &small_config(5, 1.0)).unwrap();
        assert_eq!(st.ema, init);
        assert_ne!(st.net, init);
    }

    #[test]
    fn ema_stays_within_hull_of_history() {
        let data = gen_sphere(2, 5, 50, 1.0, 1).unwrap();
        let init: ScoreNet<f64> = ScoreNet::new(5, &[8], &mut rng::stream(1, 0)).unwrap();
        let cfg = small_config(20, 0.7);
        let mut st = TrainState::new(init.clone());
        let mut lo: Vec<f64> = init.mlp.params().to_vec();
        let mut hi = lo.clone();
        for step in 1..=20 {
            st.run_until(&data, &cfg, step, |_, _| {}).unwrap();
            for (i, &p) in st.net.mlp.params().iter().enumerate() {
                lo[i] = lo[i].min(p);
                hi[i] = hi[i].max(p);
            }
            for (i, &e) in st.ema.mlp.params().iter().enumerate() {
                assert!(e >= lo[i] - 1e-12 && e <= hi[i] + 1e-12);
            }
        }
    }

    #[test]
    fn training_is_deterministic_and_resumable() {
        let data = gen_sphere(2, 5, 50, 1.0, 1).unwrap();
        let init: ScoreNet<f32> = ScoreNet::new(5, &[16], &mut rng::stream(1, 0)).unwrap();
        let cfg = small_config(30, 0.9);
        let a = train(&data, init.clone(), &cfg).unwrap();
        let b = train(&data, init.clone(), &cfg).unwrap();
        assert_eq!(a.loss_trace, b.loss_trace);
        let mut c = TrainState::new(init);
        c.run_until(&data, &cfg, 12, |_, _| {}).unwrap();
        assert_eq!(c.step, 12);
        c.run(&data, &cfg).unwrap();
        assert!(a == c, "resumed run differs from an uninterrupted one");
    }

    #[test]
    fn divergence_is_reported_with_trace() {
        let data = gen_sphere(2, 5, 50, 1.0, 1).unwrap();
        let init: ScoreNet<f64> = ScoreNet::new(5, &[8], &mut rng::stream(1, 0)).unwrap();
        let cfg = TrainConfig { learning_rate: 1e12, ..small_config(50, 0.9) };
        match train(&data, init, &cfg) {
            Err(Error::Diverged { trace, .. }) => assert!(!trace.is_empty()),
            other => panic!("expected divergence, got {other:?}"),
        }
    }

    #[test]
    fn config_validation() {
        assert!(TrainConfig::default().validate().is_ok());
        assert!(TrainConfig { learning_rate: 0.0, ..Default::default() }.validate().is_err());
        assert!(TrainConfig { ema_decay: 1.5, ..Default::default() }.validate().is_err());
        assert!(TrainConfig { batch_size: 0, ..Default::default() }.validate().is_err());
    }
}
