//! Versioned JSON model archives. Weights are stored as decimal text with
//! shortest round-trip formatting, so `load(save(m))` reproduces every f64
//! bit for bit while the file stays diffable.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Matrix, NetworkModel};

pub const ARCHIVE_FORMAT_VERSION: u32 = 1;

/// On-disk form of a (possibly trained) network plus its provenance.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ModelArchive {
    pub format_version: u32,
    pub layer_sizes: Vec<usize>,
    pub tau_ms: f64,
    pub v_th_model: f64,
    /// Per non-input layer, the weight matrix as rows.
    pub weights: Vec<Vec<Vec<f64>>>,
    /// Free-form training provenance: config, dataset tag, seeds, metrics.
    pub provenance: serde_json::Value,
}

impl ModelArchive {
    pub fn from_model(model: &NetworkModel, provenance: serde_json::Value) -> Self {
        ModelArchive {
            format_version: ARCHIVE_FORMAT_VERSION,
            layer_sizes: model.layer_sizes.clone(),
            tau_ms: model.tau,
            v_th_model: model.v_th_model,
            weights: model
                .weights
                .iter()
                .map(|w| (0..w.rows).map(|i| w.row(i).to_vec()).collect())
                .collect(),
            provenance,
        }
    }

    /// Rebuild the in-memory model, checking shapes layer by layer.
    pub fn to_model(&self) -> Result<NetworkModel> {
        if self.layer_sizes.len() < 2 {
            return Err(Error::Archive(format!(
                "layer_sizes {:?} does not describe a network",
                self.layer_sizes
            )));
        }
        if self.weights.len() != self.layer_sizes.len() - 1 {
            return Err(Error::Archive(format!(
                "expected {} weight matrices, found {}",
                self.layer_sizes.len() - 1,
                self.weights.len()
            )));
        }
        let mut weights = Vec::with_capacity(self.weights.len());
        for (l, rows) in self.weights.iter().enumerate() {
            let expect = (self.layer_sizes[l + 1], self.layer_sizes[l]);
            let m = Matrix::from_rows(rows.clone())
                .map_err(|e| Error::Archive(format!("layer {}: {e}", l + 1)))?;
            if (m.rows, m.cols) != expect {
                return Err(Error::Archive(format!(
                    "layer {} has shape ({}, {}), expected ({}, {})",
                    l + 1,
                    m.rows,
                    m.cols,
                    expect.0,
                    expect.1
                )));
            }
            weights.push(m);
        }
        let model = NetworkModel {
            layer_sizes: self.layer_sizes.clone(),
            weights,
            v_th_model: self.v_th_model,
            tau: self.tau_ms,
        };
        model.validate()?;
        Ok(model)
    }
}

pub fn save_model(path: &Path, archive: &ModelArchive) -> Result<()> {
    let mut text = serde_json::to_string_pretty(archive)?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

pub fn load_model(path: &Path) -> Result<ModelArchive> {
    let text = fs::read_to_string(path)?;
    let value: serde_json::Value = serde_json::from_str(&text)?;
    let version = value
        .get("format_version")
        .and_then(|v| v.as_u64())
        .ok_or_else(|| Error::Archive("missing format_version".into()))?;
    if version != ARCHIVE_FORMAT_VERSION as u64 {
        return Err(Error::ArchiveVersion {
            found: version as u32,
            expected: ARCHIVE_FORMAT_VERSION,
        });
    }
    Ok(serde_json::from_value(value)?)
}
