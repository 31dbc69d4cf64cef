//! Dataset files: a row-major little-endian f64 blob plus a JSON sidecar.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::Dataset;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetMeta {
    pub n: usize,
    pub d: usize,
    pub true_dim: Option<usize>,
    pub generator_tag: String,
    pub seed: u64,
    pub params: BTreeMap<String, f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub labels: Option<Vec<u32>>,
}

impl Dataset {
    pub fn meta(&self) -> DatasetMeta {
        DatasetMeta {
            n: self.len(),
            d: self.ambient_dim(),
            true_dim: self.true_dim,
            generator_tag: self.generator_tag.clone(),
            seed: self.seed,
            params: self.params.clone(),
            labels: self.labels.clone(),
        }
    }

    /// Sidecar path for a binary dataset file (`x.bin` → `x.json`).
    pub fn sidecar_path(bin: &Path) -> PathBuf {
        bin.with_extension("json")
    }

    /// Writes the binary blob to `bin` and the sidecar next to it.
    pub fn save(&self, bin: &Path) -> Result<()> {
        let (n, d) = self.points.shape();
        let mut bytes = Vec::with_capacity(n * d * 8);
        for i in 0..n {
            for j in 0..d {
                bytes.extend_from_slice(&self.points[(i, j)].to_le_bytes());
            }
        }
        fs::write(bin, bytes).map_err(|e| Error::io(bin, e))?;
        let side = Self::sidecar_path(bin);
        let json = serde_json::to_string_pretty(&self.meta())
            .map_err(|e| Error::format(&side, e.to_string()))?;
        fs::write(&side, json + "\n").map_err(|e| Error::io(&side, e))
    }

    pub fn load(bin: &Path) -> Result<Self> {
        let side = Self::sidecar_path(bin);
        let text = fs::read_to_string(&side).map_err(|e| Error::io(&side, e))?;
        let meta: DatasetMeta =
            serde_json::from_str(&text).map_err(|e| Error::format(&side, e.to_string()))?;
        let bytes = fs::read(bin).map_err(|e| Error::io(bin, e))?;
        if bytes.len() != meta.n * meta.d * 8 {
            return Err(Error::format(
                bin,
                format!("expected {} bytes for {}x{} f64, found {}", meta.n * meta.d * 8, meta.n, meta.d, bytes.len()),
            ));
        }
        let values: Vec<f64> = bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
            .collect();
        let ds = Dataset::new(
            DMatrix::from_row_slice(meta.n, meta.d, &values),
            meta.true_dim,
            meta.generator_tag,
            meta.seed,
            meta.params,
        )?;
        match meta.labels {
            Some(l) => ds.with_labels(l),
            None => Ok(ds),
        }
    }

    /// CSV export with header `x0,…,x{d-1}` (plus `label` when present).
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = std::io::BufWriter::new(file);
        let d = self.ambient_dim();
        let mut header: Vec<String> = (0..d).map(|j| format!("x{j}")).collect();
        if self.labels.is_some() {
            header.push("label".into());
        }
        let io = |e| Error::io(path, e);
        writeln!(w, "{}", header.join(",")).map_err(io)?;
        for i in 0..self.len() {
            let mut fields: Vec<String> = self.points.row(i).iter().map(|v| format!("{v:e}")).collect();
            if let Some(l) = &self.labels {
                fields.push(l[i].to_string());
            }
            writeln!(w, "{}", fields.join(",")).map_err(io)?;
        }
        w.flush().map_err(io)
    }
}
