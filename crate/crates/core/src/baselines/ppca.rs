use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg;
use crate::manifolds::Dataset;

/// Eigenvalues below this fraction of the largest are treated as zero.
pub const EIGEN_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PpcaResult {
    pub dimension: usize,
    /// Log-evidence per candidate rank 1..d−1 (index r − 1).
    pub log_evidence: Vec<f64>,
    /// Fewer samples than dimensions; the spectrum is rank deficient.
    pub underdetermined: bool,
}

fn lgamma(x: f64) -> f64 {
    libm::lgamma(x)
}

/// Laplace-approximated log-evidence (Minka, 2000) of a rank-`rank`
/// probabilistic PCA model for a descending covariance spectrum from `n`
/// samples.
pub fn ppca_log_evidence(spectrum: &[f64], rank: usize, n: usize) -> f64 {
    let d = spectrum.len();
    debug_assert!(rank >= 1 && rank < d);
    let floor = EIGEN_FLOOR * spectrum[0];
    if spectrum[rank - 1] <= floor {
        return f64::NEG_INFINITY;
    }
    let nf = n as f64;
    let (df, kf) = (d as f64, rank as f64);
    let pi = std::f64::consts::PI;
    let mut pu = -kf * 2f64.ln();
    for i in 1..=rank {
        let a = (df - i as f64 + 1.0) / 2.0;
        pu += lgamma(a) - pi.ln() * a;
    }
    let pl = -spectrum[..rank].iter().map(|l| l.ln()).sum::<f64>() * nf / 2.0;
    let v = (spectrum[rank..].iter().sum::<f64>() / (df - kf)).max(floor);
    let pv = -v.ln() * nf * (df - kf) / 2.0;
    let m = df * kf - kf * (kf + 1.0) / 2.0;
    let pp = (2.0 * pi).ln() * (m + kf) / 2.0;
    let mut pa = 0.0;
    for i in 0..rank {
        for j in i + 1..d {
            let lj = if j < rank { spectrum[j] } else { v };
            pa += ((spectrum[i] - spectrum[j]) * (1.0 / lj - 1.0 / spectrum[i])).ln() + nf.ln();
        }
    }
    pu + pl + pv + pp - pa / 2.0 - kf * nf.ln() / 2.0
}

/// Evidence-maximising latent dimension over ranks 1..d−1, from the
/// eigenvalues of the sample covariance of the raw coordinates.
pub fn ppca_estimate(data: &Dataset) -> Result<PpcaResult> {
    let (n, d) = data.points.shape();
    if d < 2 || n < 2 {
        return Err(Error::Dimension(format!("PPCA needs d >= 2 and N >= 2, got d={d}, N={n}")));
    }
    let underdetermined = n <= d;
    if underdetermined {
        log::warn!("PPCA with N={n} <= d={d}: spectrum is rank deficient");
    }
    let centered = linalg::center_rows(&data.points);
    let mut spectrum: Vec<f64> =
        linalg::singular_values(&centered)?.iter().map(|s| s * s / (n as f64 - 1.0)).collect();
    spectrum.resize(d, 0.0);
    if spectrum[0] <= 0.0 {
        return Err(Error::DegenerateSpectrum { len: d });
    }
    let log_evidence: Vec<f64> = (1..d).map(|r| ppca_log_evidence(&spectrum, r, n)).collect();
    let dimension = log_evidence
        .iter()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |best, (i, &l)| if l > best.1 { (i, l) } else { best })
        .0
        + 1;
    Ok(PpcaResult { dimension, log_evidence, underdetermined })
}
