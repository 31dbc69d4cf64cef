//! The spectral estimator: diffuse a base point, evaluate scores, take the
//! singular values of the score matrix and read the dimension off the
//! largest gap.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rand::seq::index;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::diffusion::NoiseSchedule;
use crate::error::{Error, Result};
use crate::field::ScoreField;
use crate::linalg;
use crate::manifolds::Dataset;
use crate::rng;

/// Default number of score samples per ambient dimension.
pub const SAMPLES_PER_DIM: usize = 4;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Spectrum {
    /// Descending, length d.
    pub singular_values: Vec<f64>,
    pub base_point: Option<usize>,
    pub t0: Option<f64>,
    /// Number of score columns K.
    pub samples: usize,
}

impl Spectrum {
    pub fn dim(&self) -> usize {
        self.singular_values.len()
    }

    /// Singular values divided by the largest one.
    pub fn normalized(&self) -> Vec<f64> {
        let s1 = self.singular_values.first().copied().unwrap_or(0.0);
        if s1 > 0.0 {
            self.singular_values.iter().map(|s| s / s1).collect()
        } else {
            self.singular_values.clone()
        }
    }

    /// Largest consecutive difference as (1-based index i, s_i − s_{i+1}),
    /// ties going to the smallest i.
    pub fn largest_gap(&self) -> Option<(usize, f64)> {
        let mut best: Option<(usize, f64)> = None;
        for (i, w) in self.singular_values.windows(2).enumerate() {
            let g = w[0] - w[1];
            if best.map_or(true, |(_, b)| g > b) {
                best = Some((i + 1, g));
            }
        }
        best
    }

    /// Largest gap relative to s₁ (0 for an all-zero spectrum).
    pub fn normalized_gap(&self) -> f64 {
        match (self.largest_gap(), self.singular_values.first()) {
            (Some((_, g)), Some(&s1)) if s1 > 0.0 => g / s1,
            _ => 0.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PointEstimate {
    pub k_hat: usize,
    /// 1-based index i of the largest drop s_i − s_{i+1}.
    pub gap_index: usize,
    pub gap_size: f64,
}

/// Scores at `samples` points x₀ + σ(t₀)zᵢ, as a d×K matrix.
pub fn collect_scores<F, R>(
    field: &F,
    x0: &DVector<f64>,
    schedule: &NoiseSchedule,
    t0: f64,
    samples: usize,
    rng: &mut R,
) -> Result<DMatrix<f64>>
where
    F: ScoreField + ?Sized,
    R: Rng,
{
    let d = field.ambient_dim();
    if x0.len() != d {
        return Err(Error::Dimension(format!("base point has {} entries, field expects {d}", x0.len())));
    }
    if samples < d {
        return Err(Error::Parameter(format!("need at least d={d} samples, got {samples}")));
    }
    if t0 <= 0.0 {
        return Err(Error::Parameter(format!(
            "evaluation time must be positive; sigma_t0 must exceed sigma_min = {}",
            schedule.sigma_min
        )));
    }
    let sigma = schedule.sigma_at(t0)?;
    let mut z = rng::standard_normal_vec(rng, d * samples);
    for (i, v) in z.iter_mut().enumerate() {
        *v = x0[i % d] + sigma * *v;
    }
    let points = DMatrix::from_vec(d, samples, z);
    let scores = field.score_columns(&points, t0, rng)?;
    if scores.shape() != (d, samples) {
        return Err(Error::Dimension(format!("field returned a {:?} score matrix", scores.shape())));
    }
    if let Some(column) = scores.column_iter().position(|c| c.iter().any(|v| !v.is_finite())) {
        return Err(Error::NonFiniteScore { column });
    }
    Ok(scores)
}

/// Descending singular values of a score matrix, zero-padded to its row count.
pub fn spectrum_of(scores: &DMatrix<f64>) -> Result<Spectrum> {
    let mut values = linalg::singular_values(scores)?;
    values.resize(scores.nrows(), 0.0);
    Ok(Spectrum { singular_values: values, base_point: None, t0: None, samples: scores.ncols() })
}

/// k̂ = d − argmax_i (s_i − s_{i+1}).
pub fn estimate_from_spectrum(spectrum: &Spectrum) -> Result<PointEstimate> {
    let d = spectrum.dim();
    if d < 2 {
        return Err(Error::Dimension(format!("need at least two singular values, got {d}")));
    }
    match spectrum.largest_gap() {
        Some((i, g)) if g > 0.0 => Ok(PointEstimate { k_hat: d - i, gap_index: i, gap_size: g }),
        _ => Err(Error::DegenerateSpectrum { len: d }),
    }
}

pub fn estimate_at_point<F, R>(
    field: &F,
    x0: &DVector<f64>,
    schedule: &NoiseSchedule,
    t0: f64,
    samples: usize,
    rng: &mut R,
) -> Result<(PointEstimate, Spectrum)>
where
    F: ScoreField + ?Sized,
    R: Rng,
{
    let scores = collect_scores(field, x0, schedule, t0, samples, rng)?;
    let mut spectrum = spectrum_of(&scores)?;
    spectrum.t0 = Some(t0);
    Ok((estimate_from_spectrum(&spectrum)?, spectrum))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EstimatorConfig {
    /// Evaluation time; defaults to the time where σ = 2σ_min.
    pub t0: Option<f64>,
    /// Score samples K per base point; defaults to 4d.
    pub samples: Option<usize>,
    /// Number of base points J.
    pub base_points: usize,
    pub keep_spectra: bool,
    pub seed: u64,
}

impl Default for EstimatorConfig {
    fn default() -> Self {
        Self { t0: None, samples: None, base_points: 50, keep_spectra: true, seed: 0 }
    }
}

impl EstimatorConfig {
    pub fn resolve_t0(&self, schedule: &NoiseSchedule) -> f64 {
        self.t0.unwrap_or_else(|| schedule.default_t0())
    }

    pub fn resolve_samples(&self, d: usize) -> usize {
        self.samples.unwrap_or(SAMPLES_PER_DIM * d)
    }
}

/// Resolved settings echoed into every report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResolvedEstimator {
    pub t0: f64,
    pub sigma_t0: f64,
    pub samples: usize,
    pub base_points: usize,
    pub seed: u64,
    pub schedule: NoiseSchedule,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointRecord {
    /// Row of the dataset used as base point.
    pub row: usize,
    pub k_hat: usize,
    pub gap_index: usize,
    pub gap_size: f64,
    pub normalized_gap: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimateReport {
    pub config: ResolvedEstimator,
    pub dataset: String,
    pub true_dim: Option<usize>,
    pub points: Vec<PointRecord>,
    pub histogram: BTreeMap<usize, usize>,
    /// Maximum of the per-point estimates.
    pub aggregate: usize,
    #[serde(default)]
    pub baselines: BTreeMap<String, f64>,
    #[serde(skip)]
    pub spectra: Vec<Spectrum>,
}

impl EstimateReport {
    pub fn estimates(&self) -> Vec<usize> {
        self.points.iter().map(|p| p.k_hat).collect()
    }

    /// Most frequent estimate, ties to the larger value.
    pub fn mode(&self) -> Option<usize> {
        self.histogram.iter().max_by_key(|(k, c)| (**c, **k)).map(|(k, _)| *k)
    }

    pub fn write_json(&self, path: &Path) -> Result<()> {
        let json = serde_json::to_string_pretty(self).map_err(|e| Error::format(path, e.to_string()))?;
        fs::write(path, json + "\n").map_err(|e| Error::io(path, e))
    }
}

/// Runs the point estimator at J base points drawn without replacement and
/// aggregates by the maximum. Base point j uses its own random stream, so the
/// result does not depend on the thread count.
pub fn estimate_dataset<F>(
    field: &F,
    data: &Dataset,
    schedule: &NoiseSchedule,
    config: &EstimatorConfig,
) -> Result<EstimateReport>
where
    F: ScoreField + ?Sized,
{
    let d = data.ambient_dim();
    if field.ambient_dim() != d {
        return Err(Error::Dimension(format!(
            "field dimension {} but dataset dimension {d}",
            field.ambient_dim()
        )));
    }
    let j = config.base_points;
    if j == 0 || j > data.len() {
        return Err(Error::Parameter(format!("cannot draw {j} base points from {} rows", data.len())));
    }
    let t0 = config.resolve_t0(schedule);
    let samples = config.resolve_samples(d);
    let seed = rng::derive_seed(config.seed, "estimate");
    let rows = index::sample(&mut rng::stream(seed, 0), data.len(), j).into_vec();
    let results: Vec<(PointEstimate, Spectrum)> = rows
        .par_iter()
        .enumerate()
        .map(|(i, &row)| {
            let mut r = rng::stream(seed, 1 + i as u64);
            let (est, mut spec) = estimate_at_point(field, &data.row(row), schedule, t0, samples, &mut r)?;
            spec.base_point = Some(row);
            Ok((est, spec))
        })
        .collect::<Result<_>>()?;
    let mut histogram = BTreeMap::new();
    let mut points = Vec::with_capacity(j);
    for (&row, (est, spec)) in rows.iter().zip(&results) {
        *histogram.entry(est.k_hat).or_insert(0) += 1;
        points.push(PointRecord {
            row,
            k_hat: est.k_hat,
            gap_index: est.gap_index,
            gap_size: est.gap_size,
            normalized_gap: spec.normalized_gap(),
        });
    }
    let aggregate = points.iter().map(|p| p.k_hat).max().expect("at least one base point");
    Ok(EstimateReport {
        config: ResolvedEstimator {
            t0,
            sigma_t0: schedule.sigma_at(t0)?,
            samples,
            base_points: j,
            seed: config.seed,
            schedule: *schedule,
        },
        dataset: data.generator_tag.clone(),
        true_dim: data.true_dim,
        points,
        histogram,
        aggregate,
        baselines: BTreeMap::new(),
        spectra: if config.keep_spectra { results.into_iter().map(|(_, s)| s).collect() } else { Vec::new() },
    })
}

/// CSV with columns `point_index,rank,s,s_over_s1`.
pub fn write_spectra_csv(spectra: &[Spectrum], path: &Path) -> Result<()> {
    let mut out = String::from("point_index,rank,s,s_over_s1\n");
    for (p, spec) in spectra.iter().enumerate() {
        let idx = spec.base_point.unwrap_or(p);
        for (i, (s, n)) in spec.singular_values.iter().zip(spec.normalized()).enumerate() {
            out.push_str(&format!("{idx},{},{s:e},{n:e}\n", i + 1));
        }
    }
    let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(out.as_bytes()).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::RngCore;

    fn spectrum(values: &[f64]) -> Spectrum {
        Spectrum { singular_values: values.to_vec(), base_point: None, t0: None, samples: values.len() }
    }

    #[test]
    fn gap_rule_examples() {
        let e = estimate_from_spectrum(&spectrum(&[5.0, 4.0, 3.0, 0.1, 0.05])).unwrap();
        assert_eq!((e.gap_index, e.k_hat), (3, 2));
        let e = estimate_from_spectrum(&spectrum(&[9.0, 1.0, 1.0, 1.0])).unwrap();
        assert_eq!((e.gap_index, e.k_hat), (1, 3));
    }

    #[test]
    fn ties_go_to_the_larger_estimate() {
        let e = estimate_from_spectrum(&spectrum(&[3.0, 2.0, 1.0, 0.0])).unwrap();
        assert_eq!(e.k_hat, 3);
    }

    #[test]
    fn flat_spectrum_is_degenerate() {
        assert!(matches!(
            estimate_from_spectrum(&spectrum(&[2.0, 2.0, 2.0])),
            Err(Error::DegenerateSpectrum { len: 3 })
        ));
        assert!(estimate_from_spectrum(&spectrum(&[1.0])).is_err());
    }

    #[test]
    fn spectrum_of_pads_and_sorts() {
        let mut m = DMatrix::zeros(3, 2);
        m[(0, 0)] = 1.0;
        m[(1, 1)] = 3.0;
        let s = spectrum_of(&m).unwrap();
        assert_eq!(s.singular_values.len(), 3);
        assert!((s.singular_values[0] - 3.0).abs() < 1e-12);
        assert!((s.singular_values[1] - 1.0).abs() < 1e-12);
        assert_eq!(s.singular_values[2], 0.0);
    }

    #[test]
    fn orthogonal_columns_give_column_norms() {
        let m = DMatrix::from_diagonal(&DVector::from_vec(vec![4.0, 2.0, 0.5]));
        let s = spectrum_of(&m).unwrap();
        for (a, b) in s.singular_values.iter().zip([4.0, 2.0, 0.5]) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    struct Constant(DVector<f64>);

    impl ScoreField for Constant {
        fn ambient_dim(&self) -> usize {
            self.0.len()
        }
        fn score(&self, _: &DVector<f64>, _: f64, _: &mut dyn RngCore) -> Result<DVector<f64>> {
            Ok(self.0.clone())
        }
    }

    #[test]
    fn constant_field_gives_rank_one() {
        let f = Constant(DVector::from_vec(vec![1.0, -2.0, 0.5, 3.0]));
        let s = NoiseSchedule::default();
        let m = collect_scores(&f, &DVector::zeros(4), &s, 0.1, 16, &mut rng::stream(1, 0)).unwrap();
        assert_eq!(m.shape(), (4, 16));
        assert!(m.column_iter().all(|c| c == f.0));
        assert_eq!(linalg::numerical_rank(&m, 1e-10).unwrap(), 1);
    }

    #[test]
    fn collect_scores_checks_preconditions() {
        let f = Constant(DVector::zeros(4));
        let s = NoiseSchedule::default();
        let mut r = rng::stream(1, 0);
        assert!(collect_scores(&f, &DVector::zeros(4), &s, 0.1, 3, &mut r).is_err());
        let err = collect_scores(&f, &DVector::zeros(4), &s, 0.0, 8, &mut r).unwrap_err();
        assert!(err.to_string().contains("sigma_min"), "{err}");
        assert!(collect_scores(&f, &DVector::zeros(3), &s, 0.1, 8, &mut r).is_err());
    }

    struct NanField;

    impl ScoreField for NanField {
        fn ambient_dim(&self) -> usize {
            2
        }
        fn score(&self, x: &DVector<f64>, _: f64, _: &mut dyn RngCore) -> Result<DVector<f64>> {
            Ok(if x[0] > 0.0 { DVector::from_vec(vec![f64::NAN, 0.0]) } else { x.clone() })
        }
    }

    #[test]
    fn non_finite_columns_are_reported() {
        let s = NoiseSchedule::default();
        let err = collect_scores(&NanField, &DVector::zeros(2), &s, 0.5, 8, &mut rng::stream(1, 0)).unwrap_err();
        assert!(matches!(err, Error::NonFiniteScore { .. }));
    }

    #[test]
    fn spectra_csv_lists_every_value() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("s.csv");
        write_spectra_csv(&[spectrum(&[2.0, 1.0]), spectrum(&[4.0, 1.0])], &path).unwrap();
        let text = fs::read_to_string(&path).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 5);
        assert_eq!(lines[4], "1,2,1e0,2.5e-1");
    }
}
