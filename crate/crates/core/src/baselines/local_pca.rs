use std::collections::BTreeMap;

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::knn::knn_table;
use crate::error::{Error, Result};
use crate::linalg;
use crate::manifolds::Dataset;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LocalPcaResult {
    /// Most frequent local dimension (ties to the larger value).
    pub estimate: usize,
    pub neighborhood_size: usize,
    pub histogram: BTreeMap<usize, usize>,
}

/// Local dimension from the singular values of a centred neighbourhood:
/// the number of values before the largest drop (ties to the larger count).
fn local_dimension(values: &[f64]) -> usize {
    let mut best = (1, f64::NEG_INFINITY);
    for (i, w) in values.windows(2).enumerate() {
        let g = w[0] - w[1];
        if g >= best.1 {
            best = (i + 1, g);
        }
    }
    best.0
}

/// Each point plus its `neighborhood_size` nearest neighbours is centred and
/// its local dimension read from the largest singular-value gap; the dataset
/// estimate is the mode.
pub fn local_pca_estimate(data: &Dataset, neighborhood_size: usize) -> Result<LocalPcaResult> {
    if neighborhood_size < 2 {
        return Err(Error::Parameter(format!("neighbourhood size must be at least 2, got {neighborhood_size}")));
    }
    let table = knn_table(&data.points, neighborhood_size)?;
    let d = data.ambient_dim();
    let dims: Vec<usize> = table
        .indices
        .par_iter()
        .enumerate()
        .map(|(i, nb)| {
            let rows: Vec<usize> = std::iter::once(i).chain(nb.iter().copied()).collect();
            let local: DMatrix<f64> = linalg::center_rows(&data.points.select_rows(rows.iter()));
            let mut s = linalg::singular_values(&local)?;
            // A centred block of m+1 rows has rank at most m.
            s.truncate(neighborhood_size.min(d));
            Ok(local_dimension(&s))
        })
        .collect::<Result<_>>()?;
    let mut histogram = BTreeMap::new();
    for k in dims {
        *histogram.entry(k).or_insert(0) += 1;
    }
    let estimate = histogram.iter().max_by_key(|(k, c)| (**c, **k)).map(|(k, _)| *k).expect("non-empty dataset");
    Ok(LocalPcaResult { estimate, neighborhood_size, histogram })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;
    use rand::Rng;

    fn plane(k: usize, d: usize, n: usize) -> Dataset {
        let mut r = rng::stream(9, 0);
        let q = crate::manifolds::random_isometry(k, d, 2).unwrap();
        let coords = DMatrix::from_fn(n, k, |_, _| r.random::<f64>());
        Dataset::new(q.embed_rows(&coords), Some(k), "plane", 0, Default::default()).unwrap()
    }

    #[test]
    fn exact_plane_gives_its_dimension() {
        let data = plane(2, 5, 400);
        assert_eq!(local_pca_estimate(&data, 10).unwrap().estimate, 2);
    }

    #[test]
    fn exact_planes_for_several_neighbourhood_sizes() {
        let data = plane(3, 8, 600);
        for size in [15, 30, 60] {
            assert_eq!(local_pca_estimate(&data, size).unwrap().estimate, 3, "size {size}");
        }
    }

    #[test]
    fn rejects_tiny_neighbourhoods() {
        assert!(local_pca_estimate(&plane(2, 5, 50), 1).is_err());
    }

    #[test]
    fn gap_rule_counts_leading_values() {
        assert_eq!(local_dimension(&[5.0, 4.0, 0.1, 0.05]), 2);
        assert_eq!(local_dimension(&[3.0, 2.0, 1.0]), 2);
    }
}
