//! Synthetic image manifolds on a `side × side` canvas, flattened row-major
//! into ℝ^{side²}.

use std::collections::BTreeMap;

use nalgebra::DMatrix;
use rand::Rng;

use super::{Dataset, STREAM_LAYOUT, STREAM_POINTS};
use crate::error::{Error, Result};
use crate::rng;

const SQUARE_SIDES: [usize; 2] = [3, 5];
const MAX_PLACEMENT_ATTEMPTS: usize = 10_000;

/// Fixed square positions shared by every image of a squares dataset.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SquareLayout {
    pub side: usize,
    /// (top row, left column, edge length) per square.
    pub squares: Vec<(usize, usize, usize)>,
}

impl SquareLayout {
    pub fn mask(&self, j: usize) -> Vec<usize> {
        let (r0, c0, e) = self.squares[j];
        let mut px = Vec::with_capacity(e * e);
        for r in r0..r0 + e {
            for c in c0..c0 + e {
                px.push(r * self.side + c);
            }
        }
        px
    }

    fn coverage(&self) -> Vec<u32> {
        let mut cov = vec![0u32; self.side * self.side];
        for j in 0..self.squares.len() {
            for p in self.mask(j) {
                cov[p] += 1;
            }
        }
        cov
    }

    /// Every square owns at least one pixel no other square touches, which
    /// makes the masks linearly independent.
    fn all_have_private_pixel(&self) -> bool {
        let cov = self.coverage();
        (0..self.squares.len()).all(|j| self.mask(j).into_iter().any(|p| cov[p] == 1))
    }
}

fn check_canvas(k: usize, side: usize, n: usize) -> Result<()> {
    if k == 0 {
        return Err(Error::Parameter("need at least one square/blob".into()));
    }
    if side < SQUARE_SIDES[0] {
        return Err(Error::Parameter(format!("canvas side {side} is smaller than a square")));
    }
    if k >= side * side {
        return Err(Error::Dimension(format!(
            "k={k} must be below the pixel count {}",
            side * side
        )));
    }
    if n == 0 {
        return Err(Error::Parameter("n must be at least 1".into()));
    }
    Ok(())
}

/// Rejection-samples `k` squares (edge 3 or 5, fully inside the canvas, overlaps
/// allowed) until each keeps a private pixel.
pub fn square_layout(k: usize, side: usize, seed: u64) -> Result<SquareLayout> {
    check_canvas(k, side, 1)?;
    let mut r = rng::stream(seed, STREAM_LAYOUT);
    let mut layout = SquareLayout {
        side,
        squares: Vec::with_capacity(k),
    };
    let sizes: Vec<usize> = SQUARE_SIDES.iter().copied().filter(|&e| e <= side).collect();
    for _ in 0..k {
        let mut placed = false;
        for _ in 0..MAX_PLACEMENT_ATTEMPTS {
            let e = sizes[r.random_range(0..sizes.len())];
            let cand = (r.random_range(0..=side - e), r.random_range(0..=side - e), e);
            layout.squares.push(cand);
            if layout.all_have_private_pixel() {
                placed = true;
                break;
            }
            layout.squares.pop();
        }
        if !placed {
            return Err(Error::Parameter(format!(
                "cannot place {k} distinguishable squares on a {side}x{side} canvas"
            )));
        }
    }
    Ok(layout)
}

/// k squares at fixed positions; each image draws one brightness U(0,1) per
/// square and sums overlapping squares.
pub fn gen_squares_images(k: usize, side: usize, n: usize, seed: u64) -> Result<Dataset> {
    check_canvas(k, side, n)?;
    let layout = square_layout(k, side, seed)?;
    let masks: Vec<Vec<usize>> = (0..k).map(|j| layout.mask(j)).collect();
    let d = side * side;
    let mut r = rng::stream(seed, STREAM_POINTS);
    let mut rows = vec![0.0; n * d];
    for img in rows.chunks_mut(d) {
        for mask in &masks {
            let b: f64 = r.random();
            for &p in mask {
                img[p] += b;
            }
        }
    }
    Dataset::new(
        DMatrix::from_row_slice(n, d, &rows),
        Some(k),
        "squares",
        seed,
        image_params(k, side, n),
    )
}

/// Fixed blob centres, at least one pixel apart.
pub fn blob_centres(k: usize, side: usize, seed: u64) -> Result<Vec<(f64, f64)>> {
    check_canvas(k, side, 1)?;
    let mut r = rng::stream(seed, STREAM_LAYOUT);
    let hi = (side - 1) as f64;
    let mut centres: Vec<(f64, f64)> = Vec::with_capacity(k);
    for _ in 0..k {
        let mut placed = false;
        for _ in 0..MAX_PLACEMENT_ATTEMPTS {
            let c = (r.random_range(0.0..=hi), r.random_range(0.0..=hi));
            if centres
                .iter()
                .all(|p| (p.0 - c.0).powi(2) + (p.1 - c.1).powi(2) >= 1.0)
            {
                centres.push(c);
                placed = true;
                break;
            }
        }
        if !placed {
            return Err(Error::Parameter(format!(
                "cannot place {k} separated blobs on a {side}x{side} canvas"
            )));
        }
    }
    Ok(centres)
}

/// k isotropic Gaussian blobs at fixed centres; each image draws a standard
/// deviation U(1,5) per blob. Pixel value of a blob is exp(−r²/2s²)/s², i.e.
/// 2π times the bivariate normal density.
pub fn gen_blob_images(k: usize, side: usize, n: usize, seed: u64) -> Result<Dataset> {
    check_canvas(k, side, n)?;
    let centres = blob_centres(k, side, seed)?;
    let d = side * side;
    let mut r = rng::stream(seed, STREAM_POINTS);
    let mut rows = Vec::with_capacity(n * d);
    let mut stds = vec![0.0; k];
    for _ in 0..n {
        for s in stds.iter_mut() {
            *s = r.random_range(1.0..=5.0);
        }
        rows.extend(render_blob_image(&centres, &stds, side));
    }
    Dataset::new(
        DMatrix::from_row_slice(n, d, &rows),
        Some(k),
        "blobs",
        seed,
        image_params(k, side, n),
    )
}

/// Sum of blobs with the given centres and standard deviations.
pub fn render_blob_image(centres: &[(f64, f64)], stds: &[f64], side: usize) -> Vec<f64> {
    let mut img = vec![0.0; side * side];
    for (&(cr, cc), &s) in centres.iter().zip(stds) {
        let inv2s2 = 0.5 / (s * s);
        for (p, v) in img.iter_mut().enumerate() {
            let (pr, pc) = ((p / side) as f64, (p % side) as f64);
            let r2 = (pr - cr).powi(2) + (pc - cc).powi(2);
            *v += (-r2 * inv2s2).exp() / (s * s);
        }
    }
    img
}

fn image_params(k: usize, side: usize, n: usize) -> BTreeMap<String, f64> {
    [("k", k as f64), ("side", side as f64), ("n", n as f64)]
        .iter()
        .map(|(a, b)| (a.to_string(), *b))
        .collect()
}
