//! Seeded generators for the synthetic data manifolds: embedded spheres,
//! the spaghetti curve, unions of spheres, non-uniform and noisy spheres,
//! and the squares / Gaussian-blob image manifolds.
//!
//! Every generator is a pure function of its parameters and seed.

mod generators;
mod images;
mod io;

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use rand::Rng;

use crate::error::{Error, Result};
use crate::linalg;
use crate::rng;

pub use generators::{
    gen_noisy_sphere, gen_nonuniform_sphere, gen_spaghetti, gen_sphere, gen_union_spheres,
    hyperspherical_to_cartesian, sphere_embedding, union_embeddings, UnionOfSpheres,
};
pub use images::{
    blob_centres, gen_blob_images, gen_squares_images, render_blob_image, square_layout, SquareLayout,
};
pub use io::DatasetMeta;

pub(crate) const STREAM_POINTS: u64 = 0x10;
pub(crate) const STREAM_EMBED: u64 = 0x20;
pub(crate) const STREAM_NOISE: u64 = 0x30;
pub(crate) const STREAM_LAYOUT: u64 = 0x40;

/// N×d point matrix plus generator metadata.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    /// One point per row.
    pub points: DMatrix<f64>,
    pub true_dim: Option<usize>,
    pub generator_tag: String,
    pub seed: u64,
    pub params: BTreeMap<String, f64>,
    /// Per-row component labels for mixtures (union of spheres).
    pub labels: Option<Vec<u32>>,
}

impl Dataset {
    pub fn new(
        points: DMatrix<f64>,
        true_dim: Option<usize>,
        generator_tag: impl Into<String>,
        seed: u64,
        params: BTreeMap<String, f64>,
    ) -> Result<Self> {
        let d = points.ncols();
        if points.nrows() == 0 || d == 0 {
            return Err(Error::Dimension("dataset must have at least one row and column".into()));
        }
        if points.iter().any(|v| !v.is_finite()) {
            return Err(Error::Parameter("dataset contains non-finite values".into()));
        }
        if let Some(k) = true_dim {
            if k >= d {
                return Err(Error::Dimension(format!(
                    "true dimension {k} must be below ambient dimension {d}"
                )));
            }
        }
        Ok(Self {
            points,
            true_dim,
            generator_tag: generator_tag.into(),
            seed,
            params,
            labels: None,
        })
    }

    pub fn with_labels(mut self, labels: Vec<u32>) -> Result<Self> {
        if labels.len() != self.len() {
            return Err(Error::Dimension(format!(
                "{} labels for {} rows",
                labels.len(),
                self.len()
            )));
        }
        self.labels = Some(labels);
        Ok(self)
    }

    pub fn len(&self) -> usize {
        self.points.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.points.nrows() == 0
    }

    pub fn ambient_dim(&self) -> usize {
        self.points.ncols()
    }

    pub fn row(&self, i: usize) -> DVector<f64> {
        self.points.row(i).transpose()
    }

    pub fn param(&self, key: &str) -> Option<f64> {
        self.params.get(key).copied()
    }
}

/// Linear isometry ℝ^k' → ℝ^d given by a d×k' matrix with orthonormal columns.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingMap {
    q: DMatrix<f64>,
}

impl EmbeddingMap {
    /// Wraps `q`, checking orthonormality of its columns.
    pub fn from_matrix(q: DMatrix<f64>) -> Result<Self> {
        if q.ncols() > q.nrows() {
            return Err(Error::Dimension(format!(
                "embedding source dimension {} exceeds target dimension {}",
                q.ncols(),
                q.nrows()
            )));
        }
        let gram = q.transpose() * &q;
        let err = (gram - DMatrix::identity(q.ncols(), q.ncols())).amax();
        if err > 1e-8 {
            return Err(Error::Config(format!(
                "embedding columns are not orthonormal (max deviation {err:.3e})"
            )));
        }
        Ok(Self { q })
    }

    /// Embedding onto the first `source_dim` coordinate axes.
    pub fn coordinate(source_dim: usize, target_dim: usize) -> Result<Self> {
        if source_dim > target_dim {
            return Err(Error::Dimension(format!(
                "source dimension {source_dim} exceeds target dimension {target_dim}"
            )));
        }
        let mut q = DMatrix::zeros(target_dim, source_dim);
        for j in 0..source_dim {
            q[(j, j)] = 1.0;
        }
        Ok(Self { q })
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.q
    }

    pub fn source_dim(&self) -> usize {
        self.q.ncols()
    }

    pub fn target_dim(&self) -> usize {
        self.q.nrows()
    }

    pub fn embed(&self, u: &DVector<f64>) -> DVector<f64> {
        &self.q * u
    }

    /// Embeds every row of an N×k' matrix, returning N×d.
    pub fn embed_rows(&self, rows: &DMatrix<f64>) -> DMatrix<f64> {
        rows * self.q.transpose()
    }

    /// Coordinates of `x` in the embedded frame (Qᵀx).
    pub fn coordinates(&self, x: &DVector<f64>) -> DVector<f64> {
        self.q.tr_mul(x)
    }

    /// Orthogonal projection of `x` onto the embedded subspace (QQᵀx).
    pub fn project(&self, x: &DVector<f64>) -> DVector<f64> {
        &self.q * self.q.tr_mul(x)
    }
}

/// Random isometric embedding: the sign-fixed Q factor of a Gaussian
/// `target_dim × source_dim` matrix.
pub fn random_isometry(source_dim: usize, target_dim: usize, seed: u64) -> Result<EmbeddingMap> {
    let mut rng = rng::stream(seed, STREAM_EMBED);
    random_isometry_with(source_dim, target_dim, &mut rng)
}

pub(crate) fn random_isometry_with<R: Rng + ?Sized>(
    source_dim: usize,
    target_dim: usize,
    rng: &mut R,
) -> Result<EmbeddingMap> {
    if source_dim == 0 || source_dim > target_dim {
        return Err(Error::Dimension(format!(
            "isometry needs 1 <= source_dim <= target_dim, got {source_dim} and {target_dim}"
        )));
    }
    let mut a = DMatrix::zeros(target_dim, source_dim);
    rng::fill_standard_normal(rng, a.as_mut_slice());
    Ok(EmbeddingMap {
        q: linalg::qr_sign_fixed(a),
    })
}
