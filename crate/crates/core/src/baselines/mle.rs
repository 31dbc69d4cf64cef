use serde::{Deserialize, Serialize};

use super::knn::{dedup_rows, knn_table};
use crate::error::{Error, Result};
use crate::manifolds::Dataset;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MleAggregation {
    /// Average the per-point inverse estimates, then invert.
    #[default]
    InverseAverage,
    /// Average the per-point estimates.
    Average,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MleResult {
    pub estimate: f64,
    pub m: usize,
    pub aggregation: MleAggregation,
    pub duplicates_dropped: usize,
}

/// (1/(m−1)) Σ_{j<m} ln(T_m/T_j) for ascending neighbour distances T_1..T_m;
/// its reciprocal is the point's dimension estimate.
pub fn mle_point_inverse(distances: &[f64]) -> f64 {
    let m = distances.len();
    let tm = distances[m - 1];
    distances[..m - 1].iter().map(|tj| (tm / tj).ln()).sum::<f64>() / (m - 1) as f64
}

pub fn mle_estimate(data: &Dataset, m: usize) -> Result<f64> {
    mle_estimate_with(data, m, MleAggregation::InverseAverage).map(|r| r.estimate)
}

pub fn mle_estimate_with(data: &Dataset, m: usize, aggregation: MleAggregation) -> Result<MleResult> {
    if m < 2 {
        return Err(Error::Parameter(format!("MLE needs m >= 2, got {m}")));
    }
    let (points, duplicates_dropped) = dedup_rows(&data.points);
    if duplicates_dropped > 0 {
        log::warn!("MLE: dropped {duplicates_dropped} duplicate rows");
    }
    if points.nrows() <= m {
        return Err(Error::Parameter(format!("MLE needs more than m={m} distinct points, got {}", points.nrows())));
    }
    let table = knn_table(&points, m)?;
    let inv: Vec<f64> = table.distances.iter().map(|d| mle_point_inverse(d)).collect();
    let n = inv.len() as f64;
    let estimate = match aggregation {
        MleAggregation::InverseAverage => n / inv.iter().sum::<f64>(),
        MleAggregation::Average => inv.iter().map(|v| 1.0 / v).sum::<f64>() / n,
    };
    Ok(MleResult { estimate, m, aggregation, duplicates_dropped })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::manifolds::gen_sphere;
    use nalgebra::DMatrix;

    #[test]
    fn unit_log_ratio_gives_one() {
        assert!((1.0 / mle_point_inverse(&[1.0, std::f64::consts::E]) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn scale_invariant() {
        let data = gen_sphere(3, 6, 400, 1.0, 2).unwrap();
        let mut scaled = data.clone();
        scaled.points *= 7.5;
        let a = mle_estimate(&data, 5).unwrap();
        let b = mle_estimate(&scaled, 5).unwrap();
        assert!((a - b).abs() < 1e-9 * a);
    }

    #[test]
    fn recovers_a_plane() {
        let n = 2000;
        let mut pts = DMatrix::zeros(n, 4);
        let mut r = crate::rng::stream(1, 0);
        for i in 0..n {
            pts[(i, 0)] = rand::Rng::random::<f64>(&mut r);
            pts[(i, 2)] = rand::Rng::random::<f64>(&mut r);
        }
        let data = Dataset::new(pts, Some(2), "plane", 1, Default::default()).unwrap();
        let est = mle_estimate(&data, 10).unwrap();
        assert!((est - 2.0).abs() < 0.2, "{est}");
    }

    #[test]
    fn duplicates_are_dropped_and_counted() {
        let mut data = gen_sphere(2, 4, 100, 1.0, 3).unwrap();
        let row = data.points.row(0).into_owned();
        data.points.row_mut(1).copy_from(&row);
        let res = mle_estimate_with(&data, 5, MleAggregation::Average).unwrap();
        assert_eq!(res.duplicates_dropped, 1);
        assert!(res.estimate.is_finite());
    }
}
