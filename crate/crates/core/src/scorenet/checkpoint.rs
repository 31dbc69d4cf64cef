//! Checkpoints: a JSON manifest next to a little-endian f64 blob.
//!
//! The blob holds, in order, the raw parameters, the EMA parameters, the
//! Adam first and second moments (each in [`Mlp`](super::Mlp) parameter
//! order), the input centre and the loss trace. The manifest records the
//! section offsets and the SHA-256 of the blob, checked on load.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{Mlp, Scalar, ScoreNet, TrainState, ACTIVATION};
use crate::diffusion::NoiseSchedule;
use crate::error::{Error, Result};

pub const FORMAT: &str = "scoredim-checkpoint/1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Section {
    pub name: String,
    /// Offset and length in f64 elements.
    pub offset: usize,
    pub len: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CheckpointManifest {
    pub format: String,
    pub widths: Vec<usize>,
    pub activation: String,
    pub precision: String,
    pub schedule: NoiseSchedule,
    pub step: u64,
    pub seed: u64,
    pub input_scale: f64,
    pub sections: Vec<Section>,
    pub blob_sha256: String,
}

impl CheckpointManifest {
    pub fn blob_path(manifest: &Path) -> PathBuf {
        manifest.with_extension("bin")
    }

    fn section(&self, name: &str) -> Option<&Section> {
        self.sections.iter().find(|s| s.name == name)
    }
}

const SECTIONS: [&str; 6] = ["params", "ema", "adam_m", "adam_v", "input_center", "loss_trace"];

/// Writes `path` (manifest) and its `.bin` blob.
pub fn save_checkpoint<T: Scalar>(
    path: &Path,
    state: &TrainState<T>,
    schedule: &NoiseSchedule,
    seed: u64,
) -> Result<CheckpointManifest> {
    let to64 = |v: &[T]| v.iter().map(|x| x.as_f64()).collect::<Vec<f64>>();
    let parts: [Vec<f64>; 6] = [
        to64(state.net.mlp.params()),
        to64(state.ema.mlp.params()),
        to64(&state.adam_m),
        to64(&state.adam_v),
        state.net.input_center.clone(),
        state.loss_trace.clone(),
    ];
    let mut bytes = Vec::with_capacity(parts.iter().map(|p| p.len() * 8).sum());
    let mut sections = Vec::with_capacity(parts.len());
    let mut offset = 0;
    for (name, part) in SECTIONS.iter().zip(&parts) {
        sections.push(Section { name: name.to_string(), offset, len: part.len() });
        offset += part.len();
        for v in part {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
    }
    let manifest = CheckpointManifest {
        format: FORMAT.into(),
        widths: state.net.mlp.widths().to_vec(),
        activation: ACTIVATION.into(),
        precision: T::NAME.into(),
        schedule: *schedule,
        step: state.step,
        seed,
        input_scale: state.net.input_scale,
        sections,
        blob_sha256: hex::encode(Sha256::digest(&bytes)),
    };
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let blob = CheckpointManifest::blob_path(path);
    fs::write(&blob, &bytes).map_err(|e| Error::io(&blob, e))?;
    let json = serde_json::to_string_pretty(&manifest).map_err(|e| Error::format(path, e.to_string()))?;
    fs::write(path, json + "\n").map_err(|e| Error::io(path, e))?;
    Ok(manifest)
}

/// Reads a checkpoint, verifying the blob hash and the section layout.
pub fn load_checkpoint<T: Scalar>(path: &Path) -> Result<(TrainState<T>, CheckpointManifest)> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let manifest: CheckpointManifest =
        serde_json::from_str(&text).map_err(|e| Error::format(path, e.to_string()))?;
    if manifest.format != FORMAT {
        return Err(Error::format(path, format!("unsupported format {:?}", manifest.format)));
    }
    if manifest.activation != ACTIVATION {
        return Err(Error::format(path, format!("unsupported activation {:?}", manifest.activation)));
    }
    manifest.schedule.validate()?;
    let blob = CheckpointManifest::blob_path(path);
    let bytes = fs::read(&blob).map_err(|e| Error::io(&blob, e))?;
    if hex::encode(Sha256::digest(&bytes)) != manifest.blob_sha256 {
        return Err(Error::format(&blob, "blob hash does not match the manifest"));
    }
    if bytes.len() % 8 != 0 {
        return Err(Error::format(&blob, "blob length is not a multiple of 8"));
    }
    let values: Vec<f64> =
        bytes.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk"))).collect();
    let n_params = Mlp::<T>::count_params(&manifest.widths);
    let d = *manifest.widths.last().ok_or_else(|| Error::format(path, "empty widths"))?;
    let get = |name: &str, expected: Option<usize>| -> Result<&[f64]> {
        let s = manifest.section(name).ok_or_else(|| Error::format(path, format!("missing section {name}")))?;
        if expected.is_some_and(|e| e != s.len) || s.offset + s.len > values.len() {
            return Err(Error::format(path, format!("section {name} has an invalid extent")));
        }
        Ok(&values[s.offset..s.offset + s.len])
    };
    let from64 = |v: &[f64]| v.iter().map(|&x| T::cast_from(x)).collect::<Vec<T>>();
    let net_with = |params: &[f64]| -> Result<ScoreNet<T>> {
        let net = ScoreNet {
            mlp: Mlp::from_params(&manifest.widths, from64(params))?,
            input_center: get("input_center", Some(d))?.to_vec(),
            input_scale: manifest.input_scale,
        };
        net.check()?;
        Ok(net)
    };
    let state = TrainState {
        net: net_with(get("params", Some(n_params))?)?,
        ema: net_with(get("ema", Some(n_params))?)?,
        adam_m: from64(get("adam_m", Some(n_params))?),
        adam_v: from64(get("adam_v", Some(n_params))?),
        step: manifest.step,
        loss_trace: get("loss_trace", None)?.to_vec(),
    };
    Ok((state, manifest))
}
