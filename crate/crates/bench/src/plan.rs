//! Serializable experiment plans and their execution.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use scoredim_core::baselines::{local_pca_estimate, mle_estimate, ppca_estimate};
use scoredim_core::estimator::{estimate_dataset, write_spectra_csv, EstimateReport, EstimatorConfig};
use scoredim_core::manifolds::{
    gen_blob_images, gen_noisy_sphere, gen_nonuniform_sphere, gen_spaghetti, gen_sphere, gen_squares_images,
    gen_union_spheres, random_isometry, UnionOfSpheres,
};
use scoredim_core::oracle::{corrupt_score, reference_points, union_oracle, EmpiricalOracle, SphereOracle, SubspaceOracle};
use scoredim_core::scorenet::{as_score_field, load_checkpoint, save_checkpoint, ScoreNet, TrainConfig, TrainState};
use scoredim_core::{rng, Dataset, Error, NoiseSchedule, Result, ScoreField};

use crate::plot::{export_spectrum_plot, PlotOptions};

fn one() -> f64 {
    1.0
}

/// Which generator produces the plan's dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "manifold", rename_all = "snake_case", deny_unknown_fields)]
pub enum DatasetSpec {
    Sphere {
        k: usize,
        d: usize,
        n: usize,
        #[serde(default = "one")]
        radius: f64,
    },
    NonuniformSphere { k: usize, d: usize, n: usize, alpha: f64 },
    NoisySphere { k: usize, d: usize, n: usize, noise_sigma: f64 },
    Spaghetti { d: usize, n: usize, t_lo: f64, t_hi: f64 },
    Union(UnionOfSpheres),
    Squares { k: usize, side: usize, n: usize },
    Blobs { k: usize, side: usize, n: usize },
    /// Standard Gaussian on a random k-dimensional linear subspace.
    SubspaceGaussian { k: usize, d: usize, n: usize },
}

impl DatasetSpec {
    pub fn generate(&self, seed: u64) -> Result<Dataset> {
        match *self {
            DatasetSpec::Sphere { k, d, n, radius } => gen_sphere(k, d, n, radius, seed),
            DatasetSpec::NonuniformSphere { k, d, n, alpha } => gen_nonuniform_sphere(k, d, n, alpha, seed),
            DatasetSpec::NoisySphere { k, d, n, noise_sigma } => gen_noisy_sphere(k, d, n, noise_sigma, seed),
            DatasetSpec::Spaghetti { d, n, t_lo, t_hi } => gen_spaghetti(n, d, (t_lo, t_hi), seed),
            DatasetSpec::Union(ref spec) => gen_union_spheres(spec, seed),
            DatasetSpec::Squares { k, side, n } => gen_squares_images(k, side, n, seed),
            DatasetSpec::Blobs { k, side, n } => gen_blob_images(k, side, n, seed),
            DatasetSpec::SubspaceGaussian { k, d, n } => {
                SubspaceOracle::new(random_isometry(k, d, seed)?, NoiseSchedule::default())?.sample(n, seed)
            }
        }
    }

    /// Recovers the spec from a generated dataset's tag and parameters, so a
    /// saved dataset can be paired with its closed-form score.
    pub fn from_dataset(data: &Dataset) -> Option<Self> {
        let p = |key: &str| data.param(key);
        let u = |key: &str| p(key).map(|v| v as usize);
        Some(match data.generator_tag.as_str() {
            "sphere" => DatasetSpec::Sphere { k: u("k")?, d: u("d")?, n: u("n")?, radius: p("radius")? },
            "nonuniform_sphere" => DatasetSpec::NonuniformSphere { k: u("k")?, d: u("d")?, n: u("n")?, alpha: p("alpha")? },
            "noisy_sphere" => {
                DatasetSpec::NoisySphere { k: u("k")?, d: u("d")?, n: u("n")?, noise_sigma: p("noise_sigma")? }
            }
            "spaghetti" => DatasetSpec::Spaghetti { d: u("d")?, n: u("n")?, t_lo: p("t_lo")?, t_hi: p("t_hi")? },
            "union_spheres" => DatasetSpec::Union(UnionOfSpheres {
                k1: u("k1")?,
                r1: p("r1")?,
                k2: u("k2")?,
                r2: p("r2")?,
                d: u("d")?,
                n_each: u("n_each")?,
            }),
            "squares" => DatasetSpec::Squares { k: u("k")?, side: u("side")?, n: u("n")? },
            "blobs" => DatasetSpec::Blobs { k: u("k")?, side: u("side")?, n: u("n")? },
            "subspace_gaussian" => DatasetSpec::SubspaceGaussian { k: u("k")?, d: u("d")?, n: data.len() },
            _ => return None,
        })
    }

    /// Generator name as used in plan files.
    pub fn kind(&self) -> &'static str {
        match self {
            DatasetSpec::Sphere { .. } => "sphere",
            DatasetSpec::NonuniformSphere { .. } => "nonuniform_sphere",
            DatasetSpec::NoisySphere { .. } => "noisy_sphere",
            DatasetSpec::Spaghetti { .. } => "spaghetti",
            DatasetSpec::Union(_) => "union",
            DatasetSpec::Squares { .. } => "squares",
            DatasetSpec::Blobs { .. } => "blobs",
            DatasetSpec::SubspaceGaussian { .. } => "subspace_gaussian",
        }
    }
}

/// Where the scores come from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum FieldSpec {
    /// A score network trained on the dataset.
    Trained {
        hidden: Vec<usize>,
        #[serde(default)]
        train: TrainConfig,
    },
    /// Exact score of the Gaussian mixture centred on the dataset points.
    Empirical,
    /// Closed-form score of a subspace Gaussian dataset.
    Subspace,
    /// Closed-form score of the generating sphere or union of spheres.
    Exact,
    /// Another field plus isotropic noise of relative size `ratio`.
    Corrupted {
        ratio: f64,
        inner: Box<FieldSpec>,
        #[serde(default = "default_reference_points")]
        reference_points: usize,
    },
}

fn default_reference_points() -> usize {
    1000
}

impl FieldSpec {
    pub fn needs_training(&self) -> bool {
        match self {
            FieldSpec::Trained { .. } => true,
            FieldSpec::Corrupted { inner, .. } => inner.needs_training(),
            _ => false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "snake_case", deny_unknown_fields)]
pub enum BaselineSpec {
    Mle { m: usize },
    LocalPca { neighborhood_size: usize },
    Ppca,
}

impl BaselineSpec {
    /// Column label in tables and reports.
    pub fn label(&self) -> String {
        match self {
            BaselineSpec::Mle { m } => format!("mle_m{m}"),
            BaselineSpec::LocalPca { .. } => "local_pca".into(),
            BaselineSpec::Ppca => "ppca".into(),
        }
    }

    /// Whether the result is a dimension count rather than a real estimate.
    pub fn is_integer(&self) -> bool {
        !matches!(self, BaselineSpec::Mle { .. })
    }

    pub fn run(&self, data: &Dataset) -> Result<f64> {
        match *self {
            BaselineSpec::Mle { m } => mle_estimate(data, m),
            BaselineSpec::LocalPca { neighborhood_size } => {
                local_pca_estimate(data, neighborhood_size).map(|r| r.estimate as f64)
            }
            BaselineSpec::Ppca => ppca_estimate(data).map(|r| r.dimension as f64),
        }
    }
}

/// The standard baseline set: MLE at m = 5 and 20, Local PCA and PPCA.
pub fn standard_baselines() -> Vec<BaselineSpec> {
    vec![
        BaselineSpec::Mle { m: 5 },
        BaselineSpec::Mle { m: 20 },
        BaselineSpec::LocalPca { neighborhood_size: 20 },
        BaselineSpec::Ppca,
    ]
}

/// One dataset, one score field, one estimator configuration and a list of
/// baselines. Every random choice derives from `seed`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentPlan {
    pub name: String,
    #[serde(default)]
    pub seed: u64,
    pub dataset: DatasetSpec,
    /// `None` runs the baselines only.
    #[serde(default)]
    pub field: Option<FieldSpec>,
    #[serde(default)]
    pub schedule: NoiseSchedule,
    /// Evaluation noise level; overrides `estimator.t0` when set.
    #[serde(default)]
    pub sigma_t0: Option<f64>,
    #[serde(default)]
    pub estimator: EstimatorConfig,
    #[serde(default)]
    pub baselines: Vec<BaselineSpec>,
}

impl ExperimentPlan {
    pub fn new(name: impl Into<String>, seed: u64, dataset: DatasetSpec) -> Self {
        Self {
            name: name.into(),
            seed,
            dataset,
            field: None,
            schedule: NoiseSchedule::default(),
            sigma_t0: None,
            estimator: EstimatorConfig::default(),
            baselines: Vec::new(),
        }
    }

    pub fn with_field(mut self, field: FieldSpec) -> Self {
        self.field = Some(field);
        self
    }

    pub fn with_sigma_t0(mut self, sigma: f64) -> Self {
        self.sigma_t0 = Some(sigma);
        self
    }

    pub fn with_base_points(mut self, j: usize) -> Self {
        self.estimator.base_points = j;
        self
    }

    pub fn with_baselines(mut self, baselines: Vec<BaselineSpec>) -> Self {
        self.baselines = baselines;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.name.is_empty() || self.name.contains(['/', '\\']) || self.name.starts_with('.') {
            return Err(Error::Config(format!("plan name {:?} is not a valid directory name", self.name)));
        }
        self.schedule.validate()?;
        if let Some(s) = self.sigma_t0 {
            self.schedule.time_for_sigma(s)?;
        }
        if let Some(FieldSpec::Trained { train, .. }) = &self.field {
            train.validate()?;
        }
        Ok(())
    }

    /// Estimator settings with the plan seed and evaluation time filled in.
    pub fn resolved_estimator(&self) -> Result<EstimatorConfig> {
        let mut cfg = self.estimator.clone();
        cfg.seed = self.seed;
        if let Some(s) = self.sigma_t0 {
            cfg.t0 = Some(self.schedule.time_for_sigma(s)?);
        }
        Ok(cfg)
    }

    pub fn t0(&self) -> Result<f64> {
        Ok(self.resolved_estimator()?.resolve_t0(&self.schedule))
    }
}

#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    /// Root for `<plan name>/…` outputs; nothing is written when `None`.
    pub out_dir: Option<PathBuf>,
    /// Skip the diffusion estimate for plans whose field needs training.
    pub skip_training: bool,
    /// Reuse a finished checkpoint found in the output directory.
    pub reuse_checkpoints: bool,
}

/// Everything one plan produced. Failures are kept as messages so that a
/// table can show them without aborting.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PlanOutcome {
    pub name: String,
    pub dataset: String,
    pub true_dim: Option<usize>,
    pub report: Option<EstimateReport>,
    pub diffusion_error: Option<String>,
    pub baselines: BTreeMap<String, std::result::Result<f64, String>>,
}

impl PlanOutcome {
    pub fn estimate(&self) -> Option<usize> {
        self.report.as_ref().map(|r| r.aggregate)
    }
}

fn checkpoint_path(dir: &Path, plan: &ExperimentPlan) -> PathBuf {
    dir.join("checkpoints").join(format!("{}.json", plan.name))
}

/// Trains (or reloads) the network for a `Trained` field.
fn trained_field(
    plan: &ExperimentPlan,
    data: &Dataset,
    hidden: &[usize],
    train: &TrainConfig,
    opts: &RunOptions,
) -> Result<Box<dyn ScoreField>> {
    let mut config = train.clone();
    config.seed = plan.seed;
    config.schedule = plan.schedule;
    let ckpt = opts.out_dir.as_ref().map(|d| checkpoint_path(&d.join(&plan.name), plan));
    if opts.reuse_checkpoints {
        if let Some(path) = ckpt.as_ref().filter(|p| p.exists()) {
            let (state, manifest) = load_checkpoint::<f32>(path)?;
            if state.step == config.steps && manifest.seed == config.seed && manifest.schedule == config.schedule {
                log::info!("{}: reusing checkpoint {}", plan.name, path.display());
                return Ok(Box::new(as_score_field(state.ema, plan.schedule)?));
            }
        }
    }
    let init = ScoreNet::<f32>::new(data.ambient_dim(), hidden, &mut rng::stream(rng::derive_seed(plan.seed, "init"), 0))?
        .normalized_for(data)?;
    let mut state = TrainState::new(init);
    let log_every = (config.steps / 10).max(1);
    let name = plan.name.clone();
    let result = state.run_until(data, &config, config.steps, |step, loss| {
        if step % log_every == 0 {
            log::info!("{name}: step {step} loss {loss:.4}");
        }
    });
    if let Some(path) = &ckpt {
        fs::create_dir_all(path.parent().expect("checkpoint dir")).map_err(|e| io_error(path, e))?;
        if let Err(Error::Diverged { trace, .. }) = &result {
            write_loss_trace(trace, &path.with_extension("loss.csv"))?;
        }
    }
    result?;
    if let Some(path) = &ckpt {
        save_checkpoint(path, &state, &plan.schedule, plan.seed)?;
        write_loss_trace(&state.loss_trace, &path.with_extension("loss.csv"))?;
    }
    Ok(Box::new(as_score_field(state.ema, plan.schedule)?))
}

pub(crate) fn io_error(path: &Path, e: std::io::Error) -> Error {
    Error::Io { path: path.to_path_buf(), source: e }
}

/// One `step,loss` line per training step.
pub fn write_loss_trace(trace: &[f64], path: &Path) -> Result<()> {
    let mut out = String::from("step,loss\n");
    for (i, l) in trace.iter().enumerate() {
        out.push_str(&format!("{},{l:e}\n", i + 1));
    }
    fs::write(path, out).map_err(|e| io_error(path, e))
}

/// Builds the score field a plan asks for.
pub fn build_field(
    plan: &ExperimentPlan,
    spec: &FieldSpec,
    data: &Dataset,
    opts: &RunOptions,
) -> Result<Box<dyn ScoreField>> {
    let schedule = plan.schedule;
    Ok(match spec {
        FieldSpec::Trained { hidden, train } => trained_field(plan, data, hidden, train, opts)?,
        FieldSpec::Empirical => Box::new(EmpiricalOracle::new(data, schedule)?),
        FieldSpec::Subspace => match plan.dataset {
            DatasetSpec::SubspaceGaussian { k, d, .. } => {
                Box::new(SubspaceOracle::new(random_isometry(k, d, plan.seed)?, schedule)?)
            }
            _ => return Err(Error::Config("the subspace field needs a subspace_gaussian dataset".into())),
        },
        FieldSpec::Exact => match plan.dataset {
            DatasetSpec::Sphere { k, d, radius, .. } => {
                Box::new(SphereOracle::for_generated(k, d, radius, plan.seed, schedule)?)
            }
            DatasetSpec::NoisySphere { k, d, noise_sigma, .. } => {
                Box::new(SphereOracle::for_generated(k, d, 1.0, plan.seed, schedule)?.with_data_noise(noise_sigma)?)
            }
            DatasetSpec::Union(ref spec) => Box::new(union_oracle(spec, plan.seed, schedule)?),
            DatasetSpec::SubspaceGaussian { k, d, .. } => {
                Box::new(SubspaceOracle::new(random_isometry(k, d, plan.seed)?, schedule)?)
            }
            _ => {
                return Err(Error::Config(format!(
                    "no closed-form score for the {} dataset",
                    plan.dataset.kind()
                )))
            }
        },
        FieldSpec::Corrupted { ratio, inner, reference_points: count } => {
            let inner = build_field(plan, inner, data, opts)?;
            let t0 = plan.t0()?;
            let seed = rng::derive_seed(plan.seed, "corrupt");
            let reference = reference_points(data, &schedule, t0, *count, seed)?;
            Box::new(corrupt_score(inner, *ratio, &reference, t0, seed)?)
        }
    })
}

/// Generates the dataset, runs the diffusion estimator (if a field is
/// given) and every baseline, and writes `report.json` plus spectra when an
/// output directory is set.
pub fn run_plan(plan: &ExperimentPlan, opts: &RunOptions) -> Result<PlanOutcome> {
    plan.validate()?;
    let data = plan.dataset.generate(plan.seed)?;
    let mut outcome = PlanOutcome {
        name: plan.name.clone(),
        dataset: plan.dataset.kind().into(),
        true_dim: data.true_dim,
        report: None,
        diffusion_error: None,
        baselines: BTreeMap::new(),
    };
    for b in &plan.baselines {
        let res = b.run(&data).map_err(|e| e.to_string());
        if let Err(e) = &res {
            log::warn!("{}: {} failed: {e}", plan.name, b.label());
        }
        outcome.baselines.insert(b.label(), res);
    }
    if let Some(spec) = plan.field.as_ref().filter(|f| !(opts.skip_training && f.needs_training())) {
        let estimate = build_field(plan, spec, &data, opts)
            .and_then(|field| estimate_dataset(field.as_ref(), &data, &plan.schedule, &plan.resolved_estimator()?));
        match estimate {
            Ok(mut report) => {
                report.baselines =
                    outcome.baselines.iter().filter_map(|(k, v)| v.as_ref().ok().map(|v| (k.clone(), *v))).collect();
                outcome.report = Some(report);
            }
            Err(e) => {
                log::warn!("{}: diffusion estimate failed: {e}", plan.name);
                outcome.diffusion_error = Some(e.to_string());
            }
        }
    }
    if let Some(root) = &opts.out_dir {
        write_outcome(&root.join(&plan.name), &outcome)?;
    }
    Ok(outcome)
}

fn write_outcome(dir: &Path, outcome: &PlanOutcome) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| io_error(dir, e))?;
    let path = dir.join("report.json");
    let json = serde_json::to_string_pretty(outcome).map_err(|e| Error::Format { path: path.clone(), reason: e.to_string() })?;
    fs::write(&path, json + "\n").map_err(|e| io_error(&path, e))?;
    if let Some(report) = outcome.report.as_ref().filter(|r| !r.spectra.is_empty()) {
        let spectra = dir.join("spectra");
        fs::create_dir_all(&spectra).map_err(|e| io_error(&spectra, e))?;
        write_spectra_csv(&report.spectra, &spectra.join("spectra.csv"))?;
        export_spectrum_plot(
            &report.spectra,
            &spectra.join("spectra_normalized.svg"),
            &PlotOptions { normalized: true, log_scale: true, title: outcome.name.clone() },
        )?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn subspace_plan(k: usize) -> ExperimentPlan {
        ExperimentPlan::new("sub", 3, DatasetSpec::SubspaceGaussian { k, d: 20, n: 200 })
            .with_field(FieldSpec::Subspace)
            .with_sigma_t0(0.02)
            .with_base_points(5)
    }

    #[test]
    fn subspace_plan_recovers_k() {
        let out = run_plan(&subspace_plan(4), &RunOptions::default()).unwrap();
        assert_eq!(out.estimate(), Some(4));
        assert!(out.diffusion_error.is_none());
    }

    #[test]
    fn plan_round_trips_through_json() {
        let mut plan = subspace_plan(2).with_baselines(standard_baselines());
        plan.field = Some(FieldSpec::Corrupted {
            ratio: 0.3,
            inner: Box::new(FieldSpec::Trained { hidden: vec![8], train: TrainConfig::default() }),
            reference_points: 10,
        });
        let text = serde_json::to_string(&plan).unwrap();
        assert_eq!(serde_json::from_str::<ExperimentPlan>(&text).unwrap(), plan);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let text = r#"{"name":"x","dataset":{"manifold":"sphere","k":2,"d":5,"n":10,"colour":1}}"#;
        assert!(serde_json::from_str::<ExperimentPlan>(text).is_err());
    }

    #[test]
    fn mismatched_field_is_reported_not_fatal() {
        let plan = ExperimentPlan::new("bad", 0, DatasetSpec::Squares { k: 3, side: 8, n: 50 })
            .with_field(FieldSpec::Exact)
            .with_baselines(vec![BaselineSpec::Ppca]);
        let out = run_plan(&plan, &RunOptions::default()).unwrap();
        assert!(out.diffusion_error.is_some());
        assert_eq!(out.baselines["ppca"], Ok(3.0));
    }

    #[test]
    fn skip_training_leaves_the_estimate_empty() {
        let plan = ExperimentPlan::new("t", 0, DatasetSpec::Sphere { k: 1, d: 3, n: 50, radius: 1.0 })
            .with_field(FieldSpec::Trained { hidden: vec![4], train: TrainConfig::default() });
        let out = run_plan(&plan, &RunOptions { skip_training: true, ..Default::default() }).unwrap();
        assert!(out.report.is_none() && out.diffusion_error.is_none());
    }

    #[test]
    fn exact_sphere_field_matches_generated_data() {
        let plan = ExperimentPlan::new("s", 5, DatasetSpec::Sphere { k: 3, d: 12, n: 100, radius: 1.0 })
            .with_field(FieldSpec::Exact)
            .with_sigma_t0(0.02)
            .with_base_points(5);
        assert_eq!(run_plan(&plan, &RunOptions::default()).unwrap().estimate(), Some(3));
    }

    #[test]
    fn specs_are_recovered_from_generated_data() {
        let specs = [
            DatasetSpec::Sphere { k: 2, d: 5, n: 10, radius: 1.5 },
            DatasetSpec::NonuniformSphere { k: 2, d: 5, n: 10, alpha: 0.5 },
            DatasetSpec::NoisySphere { k: 2, d: 5, n: 10, noise_sigma: 0.1 },
            DatasetSpec::Spaghetti { d: 5, n: 10, t_lo: 0.0, t_hi: 2.0 },
            DatasetSpec::Union(UnionOfSpheres { k1: 1, k2: 2, d: 5, n_each: 5, ..Default::default() }),
            DatasetSpec::Squares { k: 2, side: 6, n: 10 },
            DatasetSpec::Blobs { k: 2, side: 6, n: 10 },
            DatasetSpec::SubspaceGaussian { k: 2, d: 5, n: 10 },
        ];
        for spec in specs {
            let data = spec.generate(4).unwrap();
            assert_eq!(DatasetSpec::from_dataset(&data), Some(spec));
        }
    }

    #[test]
    fn invalid_names_are_rejected() {
        let mut plan = subspace_plan(1);
        plan.name = "../up".into();
        assert!(matches!(plan.validate(), Err(Error::Config(_))));
    }
}
