//! The default experiment suite and its runner.

use std::path::Path;

use serde::{Deserialize, Serialize};

use scoredim_core::manifolds::UnionOfSpheres;
use scoredim_core::scorenet::TrainConfig;
use scoredim_core::{Error, NoiseSchedule, Result};

use crate::plan::{build_field, standard_baselines, BaselineSpec, DatasetSpec, ExperimentPlan, FieldSpec, RunOptions};
use crate::robustness::{run_noise_robustness, Density, run_nonuniform_robustness, run_offmanifold_robustness, Sweep};
use crate::table::{run_table_benchmark, ComparisonTable, Table};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Profile {
    /// Tiny networks and datasets; checks the plumbing in seconds.
    Smoke,
    /// 3×512 networks, 5000 points, 16×16 images.
    #[default]
    Desk,
    /// 5×2048 networks and 32×32 images.
    Full,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepPlan<L> {
    pub plan: ExperimentPlan,
    pub levels: Vec<L>,
}

/// A full benchmark: the comparison table plus the three robustness studies.
/// Absent sections are skipped.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Suite {
    #[serde(default)]
    pub table: Vec<ExperimentPlan>,
    #[serde(default)]
    pub nonuniform: Option<SweepPlan<Density>>,
    /// Noise-to-score ratios applied to the plan's field.
    #[serde(default)]
    pub noise: Option<SweepPlan<f64>>,
    /// Data noise levels.
    #[serde(default)]
    pub offmanifold: Option<SweepPlan<f64>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Section {
    Table,
    Nonuniform,
    Noise,
    Offmanifold,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SuiteResult {
    pub table: Option<ComparisonTable>,
    pub nonuniform: Option<Table>,
    pub noise: Option<Sweep>,
    pub offmanifold: Option<Sweep>,
}

struct Scale {
    hidden: Vec<usize>,
    steps: u64,
    n: usize,
    side: usize,
    base_points: usize,
}

impl Profile {
    fn scale(self) -> Scale {
        match self {
            Profile::Smoke => Scale { hidden: vec![32, 32], steps: 200, n: 400, side: 8, base_points: 4 },
            Profile::Desk => Scale { hidden: vec![512; 3], steps: 20_000, n: 5000, side: 16, base_points: 50 },
            Profile::Full => Scale { hidden: vec![2048; 5], steps: 200_000, n: 10_000, side: 32, base_points: 50 },
        }
    }
}

fn trained(scale: &Scale, steps: u64) -> FieldSpec {
    FieldSpec::Trained { hidden: scale.hidden.clone(), train: TrainConfig { steps, ..TrainConfig::default() } }
}

/// Dataset used for the spaghetti rows: half a period of the curve, where
/// centring leaves the coordinates correlated.
pub fn spaghetti_dataset(n: usize) -> DatasetSpec {
    DatasetSpec::Spaghetti { d: 100, n, t_lo: 0.0, t_hi: std::f64::consts::PI }
}

/// Evaluation noise level for the spaghetti line.
pub const SPAGHETTI_SIGMA_T0: f64 = 0.1;
/// Training steps for the spaghetti line relative to the other datasets.
pub const SPAGHETTI_STEP_FACTOR: u64 = 1;

/// Noise schedule for the union line. The small sphere needs a finer
/// evaluation scale than the default schedule reaches.
pub const UNION_SCHEDULE: NoiseSchedule = NoiseSchedule { sigma_min: 0.005, sigma_max: 4.0, horizon: 1.0 };
/// Evaluation noise level for the union line.
pub const UNION_SIGMA_T0: f64 = 0.01;

/// The default suite for a profile. Every generator appears at least once.
pub fn default_suite(profile: Profile, seed: u64) -> Suite {
    let s = profile.scale();
    let d = if profile == Profile::Smoke { 20 } else { 100 };
    let (k_small, k_big, k_noise) = if profile == Profile::Smoke { (3, 8, 5) } else { (10, 50, 25) };
    let base = |name: &str, dataset: DatasetSpec| {
        ExperimentPlan::new(name, seed, dataset).with_base_points(s.base_points).with_baselines(standard_baselines())
    };
    let sphere = |k: usize| DatasetSpec::Sphere { k, d, n: s.n, radius: 1.0 };
    let union = UnionOfSpheres { d, n_each: s.n / 2, ..UnionOfSpheres::default() };
    let union = if profile == Profile::Smoke { UnionOfSpheres { k1: 2, k2: 6, ..union } } else { union };
    let table = vec![
        base("subspace", DatasetSpec::SubspaceGaussian { k: k_small, d, n: s.n })
            .with_field(FieldSpec::Subspace)
            .with_sigma_t0(0.02),
        base(&format!("{k_small}-sphere"), sphere(k_small)).with_field(trained(&s, s.steps)),
        base(&format!("{k_big}-sphere"), sphere(k_big)).with_field(trained(&s, s.steps)),
        base("spaghetti", spaghetti_dataset(s.n))
            .with_field(trained(&s, s.steps * SPAGHETTI_STEP_FACTOR))
            .with_sigma_t0(SPAGHETTI_SIGMA_T0),
        ExperimentPlan { schedule: UNION_SCHEDULE, ..base("union", DatasetSpec::Union(union)) }
            .with_field(trained(&s, s.steps))
            .with_sigma_t0(UNION_SIGMA_T0)
            .with_base_points(4 * s.base_points),
        base("squares", DatasetSpec::Squares { k: k_small, side: s.side, n: s.n }).with_field(trained(&s, s.steps)),
        base("blobs", DatasetSpec::Blobs { k: k_small, side: s.side, n: s.n }).with_field(trained(&s, s.steps)),
    ];
    let nonuniform = SweepPlan {
        plan: base("nonuniform", sphere(k_small)).with_field(trained(&s, s.steps)),
        levels: vec![Density::Uniform, Density::Alpha(1.0), Density::Alpha(0.75), Density::Alpha(0.5)],
    };
    let noise = SweepPlan {
        plan: ExperimentPlan::new("noise", seed, sphere(k_noise))
            .with_field(FieldSpec::Exact)
            .with_sigma_t0(0.02)
            .with_base_points(s.base_points.min(10)),
        levels: vec![0.0, 0.1, 0.3, 0.5, 1.0, 2.0],
    };
    let offmanifold = SweepPlan {
        plan: ExperimentPlan::new("offmanifold", seed, DatasetSpec::NoisySphere { k: k_noise, d, n: s.n, noise_sigma: 0.0 })
            .with_field(FieldSpec::Exact)
            .with_sigma_t0(0.02)
            .with_base_points(s.base_points.min(10)),
        levels: vec![0.0, 0.005, 0.01, 0.02, 0.05, 0.1, 0.2],
    };
    Suite { table, nonuniform: Some(nonuniform), noise: Some(noise), offmanifold: Some(offmanifold) }
}

impl Suite {
    /// Generator kinds the suite touches.
    pub fn dataset_kinds(&self) -> Vec<&'static str> {
        let mut kinds: Vec<&'static str> = self.table.iter().map(|p| p.dataset.kind()).collect();
        if self.nonuniform.as_ref().is_some_and(|s| s.levels.iter().any(|l| matches!(l, Density::Alpha(_)))) {
            kinds.push("nonuniform_sphere");
        }
        if let Some(s) = &self.noise {
            kinds.push(s.plan.dataset.kind());
        }
        if self.offmanifold.is_some() {
            kinds.push("noisy_sphere");
        }
        kinds.sort_unstable();
        kinds.dedup();
        kinds
    }

    /// Restricts every plan to baselines only.
    pub fn baselines_only(&self) -> Suite {
        let strip = |p: &ExperimentPlan| ExperimentPlan { field: None, ..p.clone() };
        Suite { table: self.table.iter().map(strip).collect(), nonuniform: self.nonuniform.clone(), noise: None, offmanifold: None }
    }

    pub fn baseline_labels(&self) -> Vec<String> {
        self.table.iter().flat_map(|p| &p.baselines).map(BaselineSpec::label).collect()
    }
}

/// Runs the requested sections (all when `only` is empty). Results go
/// under `opts.out_dir` as `table/`, `<nonuniform plan>/`, and so on.
pub fn run_suite(suite: &Suite, only: &[Section], opts: &RunOptions) -> Result<SuiteResult> {
    let wants = |s: Section| only.is_empty() || only.contains(&s);
    let sub = |name: &str| RunOptions { out_dir: opts.out_dir.as_ref().map(|d| d.join(name)), ..opts.clone() };
    let mut out = SuiteResult { table: None, nonuniform: None, noise: None, offmanifold: None };
    if wants(Section::Table) && !suite.table.is_empty() {
        out.table = Some(run_table_benchmark(&suite.table, &sub("table"))?);
    }
    if let Some(s) = suite.nonuniform.as_ref().filter(|_| wants(Section::Nonuniform)) {
        out.nonuniform = Some(run_nonuniform_robustness(&s.plan, &s.levels, opts)?.0);
    }
    if let Some(s) = suite.noise.as_ref().filter(|_| wants(Section::Noise)) {
        let field_spec = s.plan.field.as_ref().ok_or_else(|| Error::Config("the noise sweep needs a score field".into()))?;
        if !(opts.skip_training && field_spec.needs_training()) {
            let data = s.plan.dataset.generate(s.plan.seed)?;
            let field = build_field(&s.plan, field_spec, &data, &sub(&s.plan.name))?;
            let sweep = run_noise_robustness(&field, &data, &s.plan, &s.levels)?;
            if let Some(dir) = &opts.out_dir {
                sweep.write(&dir.join(&s.plan.name))?;
            }
            out.noise = Some(sweep);
        }
    }
    if let Some(s) = suite.offmanifold.as_ref().filter(|_| wants(Section::Offmanifold)) {
        if !(opts.skip_training && s.plan.field.as_ref().is_some_and(FieldSpec::needs_training)) {
            out.offmanifold = Some(run_offmanifold_robustness(&s.plan, &s.levels, opts)?);
        }
    }
    if let Some(dir) = &opts.out_dir {
        write_json(&dir.join("suite.json"), suite)?;
    }
    Ok(out)
}

pub(crate) fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent).map_err(|e| crate::plan::io_error(parent, e))?;
    }
    let json = serde_json::to_string_pretty(value)
        .map_err(|e| Error::Format { path: path.to_path_buf(), reason: e.to_string() })?;
    std::fs::write(path, json + "\n").map_err(|e| crate::plan::io_error(path, e))
}
