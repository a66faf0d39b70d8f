//! Sweep reports as CSV (`method,dim,depth,accuracy`) or JSON.
//!
//! CSV output keeps the table itself to header plus rows; its metadata goes to
//! a `<path>.meta.json` sidecar. JSON carries both in one document.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Autoencoder,
    /// Best autoencoder depth for the row's dimension.
    AutoencoderBest,
    Pca,
    /// HOG features fed to the classifier unreduced.
    #[serde(rename = "none")]
    Identity,
}

impl Method {
    pub fn as_str(self) -> &'static str {
        match self {
            Method::Autoencoder => "autoencoder",
            Method::AutoencoderBest => "autoencoder_best",
            Method::Pca => "pca",
            Method::Identity => "none",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub method: Method,
    pub dim: usize,
    /// Encoder depth; absent for PCA.
    pub depth: Option<usize>,
    pub accuracy: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ReportMetadata {
    /// `dimension_sweep`, `depth_sweep` or `pipeline`.
    pub kind: String,
    pub seed: u64,
    pub config_hash: String,
    /// Effective configuration, one entry per key.
    pub config: BTreeMap<String, String>,
    pub classes: Vec<String>,
    pub train_samples: usize,
    pub test_samples: usize,
    /// Grid cells that could not be built, with the reason.
    pub skipped: Vec<String>,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct SweepReport {
    pub rows: Vec<ReportRow>,
    pub metadata: ReportMetadata,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Csv,
    Json,
}

impl FromStr for ReportFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(ReportFormat::Csv),
            "json" => Ok(ReportFormat::Json),
            other => Err(Error::invalid(format!(
                "unknown report format {other:?} (csv, json)"
            ))),
        }
    }
}

impl ReportFormat {
    /// Picks JSON for a `.json` extension, CSV otherwise.
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some("json") => ReportFormat::Json,
            _ => ReportFormat::Csv,
        }
    }
}

impl SweepReport {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("method,dim,depth,accuracy\n");
        for r in &self.rows {
            let depth = r.depth.map(|d| d.to_string()).unwrap_or_default();
            writeln!(
                out,
                "{},{},{},{:.4}",
                r.method.as_str(),
                r.dim,
                depth,
                r.accuracy
            )
            .expect("string write");
        }
        out
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::invalid(format!("report json: {e}")))
    }

    pub fn find(&self, method: Method, dim: usize, depth: Option<usize>) -> Option<&ReportRow> {
        self.rows.iter().find(|r| {
            r.method == method
                && r.dim == dim
                && (method == Method::AutoencoderBest || r.depth == depth)
        })
    }
}

/// Sidecar metadata path used for CSV reports.
pub fn metadata_path(path: &Path) -> PathBuf {
    let mut name = path.as_os_str().to_owned();
    name.push(".meta.json");
    PathBuf::from(name)
}

/// Writes `r` to `path`; CSV reports also write [`metadata_path`].
pub fn emit_report(r: &SweepReport, path: &Path, format: ReportFormat) -> Result<()> {
    match format {
        ReportFormat::Json => std::fs::write(path, r.to_json()).map_err(|e| Error::io(path, e)),
        ReportFormat::Csv => {
            std::fs::write(path, r.to_csv()).map_err(|e| Error::io(path, e))?;
            let meta = metadata_path(path);
            let mut text = serde_json::to_string_pretty(&r.metadata).expect("metadata serializes");
            text.push('\n');
            std::fs::write(&meta, text).map_err(|e| Error::io(&meta, e))
        }
    }
}
