use std::collections::HashSet;

use nalgebra::DMatrix;
use rayon::prelude::*;

use crate::error::{Error, Result};

const BLOCK: usize = 128;
/// Extra candidates re-ranked with exact distances after the Gram-matrix pass.
const SLACK: usize = 8;

/// For every row: distances and indices of its `m` nearest other rows,
/// ascending.
#[derive(Debug, Clone, PartialEq)]
pub struct NeighborTable {
    pub m: usize,
    pub distances: Vec<Vec<f64>>,
    pub indices: Vec<Vec<usize>>,
}

impl NeighborTable {
    pub fn len(&self) -> usize {
        self.distances.len()
    }

    pub fn is_empty(&self) -> bool {
        self.distances.is_empty()
    }
}

/// Rows with duplicates removed (first occurrence kept) and the number dropped.
pub fn dedup_rows(points: &DMatrix<f64>) -> (DMatrix<f64>, usize) {
    let mut seen = HashSet::new();
    let keep: Vec<usize> = (0..points.nrows())
        .filter(|&i| seen.insert(points.row(i).iter().map(|v| v.to_bits()).collect::<Vec<u64>>()))
        .collect();
    let dropped = points.nrows() - keep.len();
    (points.select_rows(keep.iter()), dropped)
}

fn exact_dist(points: &DMatrix<f64>, i: usize, j: usize) -> f64 {
    points.row(i).iter().zip(points.row(j).iter()).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt()
}

/// Exact m-nearest-neighbour distances of every row of an N×d matrix
/// (self excluded). Candidates come from blocked Gram products and are
/// re-ranked with directly computed distances.
pub fn knn_table(points: &DMatrix<f64>, m: usize) -> Result<NeighborTable> {
    let n = points.nrows();
    if m == 0 || m >= n {
        return Err(Error::Parameter(format!("need 1 <= m < N, got m={m} with N={n}")));
    }
    let sq: Vec<f64> = (0..n).map(|i| points.row(i).norm_squared()).collect();
    let cand = (m + SLACK).min(n - 1);
    let rows: Vec<(Vec<f64>, Vec<usize>)> = (0..n.div_ceil(BLOCK))
        .into_par_iter()
        .flat_map_iter(|b| {
            let lo = b * BLOCK;
            let hi = (lo + BLOCK).min(n);
            let gram = points.rows(lo, hi - lo) * points.transpose();
            let sq = &sq;
            (lo..hi).map(move |i| {
                let g = gram.row(i - lo);
                let mut approx: Vec<(f64, usize)> =
                    (0..n).filter(|&j| j != i).map(|j| (sq[i] + sq[j] - 2.0 * g[j], j)).collect();
                approx.select_nth_unstable_by(cand - 1, |a, b| a.0.total_cmp(&b.0));
                approx.truncate(cand);
                let mut exact: Vec<(f64, usize)> = approx.iter().map(|&(_, j)| (exact_dist(points, i, j), j)).collect();
                exact.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
                exact.truncate(m);
                exact.into_iter().unzip()
            })
        })
        .collect();
    let (distances, indices) = rows.into_iter().unzip();
    Ok(NeighborTable { m, distances, indices })
}
