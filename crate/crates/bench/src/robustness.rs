//! Robustness sweeps: noisy scores, non-uniform sampling densities and data
//! pushed off the manifold.

use std::path::Path;

use serde::{Deserialize, Serialize};

use scoredim_core::estimator::{estimate_dataset, EstimateReport, Spectrum};
use scoredim_core::oracle::{corrupt_score, reference_points};
use scoredim_core::{rng, Dataset, Error, Result, ScoreField};

use crate::plan::{io_error, DatasetSpec, ExperimentPlan, RunOptions};
use crate::table::{comparison_table, run_plans, Cell, ComparisonTable, Table};

/// A spectrum has no dominant drop when its largest gap is less than this
/// multiple of the runner-up.
pub const DOMINANCE_RATIO: f64 = 2.0;
/// Reference sample size for calibrating score noise.
pub const NOISE_REFERENCE_POINTS: usize = 1000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub level: f64,
    pub aggregate: usize,
    pub mode: usize,
    pub mean_normalized_gap: f64,
    /// Fraction of base points whose spectrum has no dominant drop.
    pub flat_fraction: f64,
    /// Set when most base points have no dominant drop.
    pub no_dominant_gap: bool,
}

/// Largest consecutive gap over the runner-up, ignoring s₁ − s₂ (which
/// tracks the mean score rather than the normal space). Infinite when only
/// one gap is non-zero.
pub fn gap_dominance(spectrum: &Spectrum) -> f64 {
    let mut gaps: Vec<f64> = spectrum.singular_values.windows(2).skip(1).map(|w| w[0] - w[1]).collect();
    gaps.sort_by(|a, b| b.total_cmp(a));
    match gaps.as_slice() {
        [a, b, ..] if *b > 0.0 => a / b,
        [a, ..] if *a > 0.0 => f64::INFINITY,
        _ => 0.0,
    }
}

impl SweepRow {
    fn from_report(level: f64, report: &EstimateReport) -> Self {
        let gaps: Vec<f64> = report.points.iter().map(|p| p.normalized_gap).collect();
        let mean = gaps.iter().sum::<f64>() / gaps.len() as f64;
        let flat = report.spectra.iter().filter(|s| gap_dominance(s) < DOMINANCE_RATIO).count();
        let flat_fraction = if report.spectra.is_empty() { 0.0 } else { flat as f64 / report.spectra.len() as f64 };
        SweepRow {
            level,
            aggregate: report.aggregate,
            mode: report.mode().unwrap_or(0),
            mean_normalized_gap: mean,
            flat_fraction,
            no_dominant_gap: flat_fraction > 0.5,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Sweep {
    /// Name of the swept quantity.
    pub parameter: String,
    pub rows: Vec<SweepRow>,
    #[serde(skip)]
    pub reports: Vec<EstimateReport>,
}

impl Sweep {
    /// First level whose spectra show no dominant gap.
    pub fn breakdown_level(&self) -> Option<f64> {
        self.rows.iter().find(|r| r.no_dominant_gap).map(|r| r.level)
    }

    pub fn table(&self) -> Table {
        Table {
            header: vec![
                self.parameter.clone(),
                "aggregate".into(),
                "mode".into(),
                "mean_normalized_gap".into(),
                "flat_fraction".into(),
                "no_dominant_gap".into(),
            ],
            rows: self
                .rows
                .iter()
                .map(|r| {
                    vec![
                        Cell::Text(format!("{}", r.level)),
                        Cell::Int(r.aggregate),
                        Cell::Int(r.mode),
                        Cell::Text(format!("{:.6}", r.mean_normalized_gap)),
                        Cell::Text(format!("{:.3}", r.flat_fraction)),
                        Cell::Text(r.no_dominant_gap.to_string()),
                    ]
                })
                .collect(),
        }
    }

    /// Table files plus one spectrum CSV and SVG per level.
    pub fn write(&self, dir: &Path) -> Result<()> {
        self.table().write(dir)?;
        let spectra = dir.join("spectra");
        std::fs::create_dir_all(&spectra).map_err(|e| io_error(&spectra, e))?;
        for (row, report) in self.rows.iter().zip(&self.reports) {
            if report.spectra.is_empty() {
                continue;
            }
            let path = spectra.join(format!("{}_{}.svg", self.parameter, row.level));
            let opts = crate::plot::PlotOptions {
                normalized: true,
                log_scale: true,
                title: format!("{} = {}", self.parameter, row.level),
            };
            crate::plot::export_spectrum_plot(&report.spectra, &path, &opts)?;
        }
        Ok(())
    }
}

fn check_ascending(levels: &[f64], what: &str) -> Result<()> {
    if levels.is_empty() || levels.windows(2).any(|w| !(w[0] < w[1])) || levels.iter().any(|v| !(*v >= 0.0)) {
        return Err(Error::Parameter(format!("{what} grid must be non-empty, non-negative and strictly ascending")));
    }
    Ok(())
}

/// Estimates with `base` corrupted at each noise-to-score ratio. The noise
/// calibration sample is shared across ratios; the estimator settings come
/// from `plan`.
pub fn run_noise_robustness<F: ScoreField>(
    base: &F,
    data: &Dataset,
    plan: &ExperimentPlan,
    ratios: &[f64],
) -> Result<Sweep> {
    check_ascending(ratios, "ratio")?;
    let t0 = plan.t0()?;
    let seed = rng::derive_seed(plan.seed, "corrupt");
    let reference = reference_points(data, &plan.schedule, t0, NOISE_REFERENCE_POINTS, seed)?;
    let config = plan.resolved_estimator()?;
    let mut sweep = Sweep { parameter: "ratio".into(), rows: Vec::new(), reports: Vec::new() };
    for &r in ratios {
        let field = corrupt_score(base, r, &reference, t0, seed)?;
        let report = estimate_dataset(&field, data, &plan.schedule, &config)?;
        log::info!("ratio {r}: aggregate {} histogram {:?}", report.aggregate, report.histogram);
        sweep.rows.push(SweepRow::from_report(r, &report));
        sweep.reports.push(report);
    }
    Ok(sweep)
}

/// Sampling density of a sphere: uniform, or the non-uniform sampler with
/// the given alpha. Written `"uniform"` or `{ alpha = 0.5 }` in plan files.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Density {
    Uniform,
    Alpha(f64),
}

/// One column per sampling density, one row per method. `template` must use
/// a sphere or non-uniform sphere dataset.
pub fn run_nonuniform_robustness(
    template: &ExperimentPlan,
    alphas: &[Density],
    opts: &RunOptions,
) -> Result<(Table, ComparisonTable)> {
    let (k, d, n) = match template.dataset {
        DatasetSpec::Sphere { k, d, n, .. } | DatasetSpec::NonuniformSphere { k, d, n, .. } => (k, d, n),
        _ => return Err(Error::Config("the non-uniform sweep needs a sphere dataset".into())),
    };
    if alphas.is_empty() {
        return Err(Error::Parameter("empty alpha grid".into()));
    }
    let plans: Vec<ExperimentPlan> = alphas
        .iter()
        .map(|a| {
            let mut p = template.clone();
            match a {
                Density::Uniform => {
                    p.name = "uniform".into();
                    p.dataset = DatasetSpec::Sphere { k, d, n, radius: 1.0 };
                }
                Density::Alpha(alpha) => {
                    p.name = format!("alpha={alpha}");
                    p.dataset = DatasetSpec::NonuniformSphere { k, d, n, alpha: *alpha };
                }
            }
            p
        })
        .collect();
    let sub = RunOptions { out_dir: opts.out_dir.as_ref().map(|d| d.join(&template.name)), ..opts.clone() };
    let results = run_plans(&plans, &sub)?;
    let rows = comparison_table(&plans, &results);
    let table = rows.transposed("method");
    if let Some(dir) = &sub.out_dir {
        table.write(dir)?;
    }
    Ok((table, ComparisonTable { table: rows, outcomes: results.into_iter().filter_map(|r| r.ok()).collect() }))
}

/// Estimates on spheres with Gaussian data noise of each given level. The
/// template's dataset must be a (noisy) sphere; its field is rebuilt per level.
pub fn run_offmanifold_robustness(template: &ExperimentPlan, levels: &[f64], opts: &RunOptions) -> Result<Sweep> {
    check_ascending(levels, "noise")?;
    let (k, d, n) = match template.dataset {
        DatasetSpec::Sphere { k, d, n, .. } | DatasetSpec::NoisySphere { k, d, n, .. } => (k, d, n),
        _ => return Err(Error::Config("the off-manifold sweep needs a sphere dataset".into())),
    };
    if template.field.is_none() {
        return Err(Error::Config("the off-manifold sweep needs a score field".into()));
    }
    let plans: Vec<ExperimentPlan> = levels
        .iter()
        .map(|&s| {
            let mut p = template.clone();
            p.name = format!("noise={s}");
            p.dataset = DatasetSpec::NoisySphere { k, d, n, noise_sigma: s };
            p
        })
        .collect();
    let sub = RunOptions { out_dir: opts.out_dir.as_ref().map(|d| d.join(&template.name)), ..opts.clone() };
    let results = run_plans(&plans, &sub)?;
    let mut sweep = Sweep { parameter: "noise".into(), rows: Vec::new(), reports: Vec::new() };
    for (level, res) in levels.iter().zip(results) {
        let outcome = res.map_err(Error::Numeric)?;
        match (outcome.report, outcome.diffusion_error) {
            (Some(report), _) => {
                sweep.rows.push(SweepRow::from_report(*level, &report));
                sweep.reports.push(report);
            }
            (None, e) => {
                return Err(Error::Numeric(format!(
                    "noise {level}: {}",
                    e.unwrap_or_else(|| "no estimate (training skipped)".into())
                )))
            }
        }
    }
    if let Some(dir) = &sub.out_dir {
        sweep.write(dir)?;
    }
    Ok(sweep)
}
