//! Flat `key = value` experiment configuration.
//!
//! One setting per line, `#` starts a comment, keys use dotted section
//! prefixes (`ae.beta = 3.0`). Lists are comma separated. Unknown keys are
//! rejected. [`ExperimentConfig::to_text`] writes every key in sorted order
//! and is what the config hash is computed from.

use std::collections::BTreeMap;
use std::fmt::Display;
use std::path::Path;
use std::str::FromStr;

use sha2::{Digest, Sha256};

use crate::autoencoder::AeHyper;
use crate::error::{Error, Result};
use crate::hog::HogConfig;
use crate::svm::{KernelConfig, KernelKind};

use super::Preprocess;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReducerKind {
    Autoencoder,
    Pca,
    Identity,
}

impl ReducerKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ReducerKind::Autoencoder => "autoencoder",
            ReducerKind::Pca => "pca",
            ReducerKind::Identity => "none",
        }
    }
}

impl FromStr for ReducerKind {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "autoencoder" | "ae" => Ok(ReducerKind::Autoencoder),
            "pca" => Ok(ReducerKind::Pca),
            "none" => Ok(ReducerKind::Identity),
            other => Err(format!(
                "unknown reducer {other:?} (autoencoder, pca, none)"
            )),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub image: Preprocess,
    pub hog: HogConfig,
    /// Pretraining hyperparameters; the seed is derived from `seed`.
    pub ae: AeHyper,
    pub finetune_epochs: usize,
    pub svm: KernelConfig,
    pub dims: Vec<usize>,
    pub depths: Vec<usize>,
    /// Widths of the hidden layers placed before the bottleneck.
    pub depth_widths: Vec<usize>,
    pub split_fraction: f64,
    pub train_peaks: usize,
    pub test_peaks: usize,
    /// Reducer, bottleneck and depth for a single `pipeline` run.
    pub method: ReducerKind,
    pub dim: usize,
    pub depth: usize,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            seed: 0,
            image: Preprocess::default(),
            hog: HogConfig::default(),
            ae: AeHyper::default(),
            finetune_epochs: 400,
            svm: KernelConfig::default(),
            dims: vec![10, 20, 40, 60, 80, 100, 200, 300, 400, 500],
            depths: vec![1, 2, 3, 4, 5],
            depth_widths: vec![500, 400, 300, 200],
            split_fraction: 0.8,
            train_peaks: 5,
            test_peaks: 1,
            method: ReducerKind::Autoencoder,
            dim: 60,
            depth: 4,
        }
    }
}

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T>
where
    T::Err: Display,
{
    value
        .parse()
        .map_err(|e| Error::Config(format!("{key}: cannot parse {value:?}: {e}")))
}

fn parse_list(key: &str, value: &str) -> Result<Vec<usize>> {
    value.split(',').map(|s| parse(key, s.trim())).collect()
}

fn join(v: &[usize]) -> String {
    v.iter()
        .map(ToString::to_string)
        .collect::<Vec<_>>()
        .join(",")
}

fn parse_bool(key: &str, value: &str) -> Result<bool> {
    match value {
        "true" | "1" | "yes" => Ok(true),
        "false" | "0" | "no" => Ok(false),
        _ => Err(Error::Config(format!(
            "{key}: expected true/false, got {value:?}"
        ))),
    }
}

impl ExperimentConfig {
    pub fn keys() -> &'static [&'static str] {
        &[
            "ae.batch_size",
            "ae.beta",
            "ae.epochs",
            "ae.finetune_epochs",
            "ae.lambda",
            "ae.learning_rate",
            "ae.momentum",
            "ae.rho",
            "depth_widths",
            "depths",
            "dims",
            "hog.bins",
            "hog.block_cells",
            "hog.block_stride",
            "hog.cell_size",
            "hog.norm_epsilon",
            "hog.signed",
            "image.crop",
            "image.height",
            "image.width",
            "pipeline.depth",
            "pipeline.dim",
            "pipeline.method",
            "seed",
            "split_fraction",
            "svm.c",
            "svm.gamma",
            "svm.kernel",
            "svm.max_passes",
            "svm.tol",
            "test_peaks",
            "train_peaks",
        ]
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let v = value.trim();
        match key.trim() {
            "seed" => self.seed = parse(key, v)?,
            "split_fraction" => self.split_fraction = parse(key, v)?,
            "train_peaks" => self.train_peaks = parse(key, v)?,
            "test_peaks" => self.test_peaks = parse(key, v)?,
            "dims" => self.dims = parse_list(key, v)?,
            "depths" => self.depths = parse_list(key, v)?,
            "depth_widths" => {
                self.depth_widths = if v.is_empty() {
                    Vec::new()
                } else {
                    parse_list(key, v)?
                }
            }
            "image.width" => self.image.width = parse(key, v)?,
            "image.height" => self.image.height = parse(key, v)?,
            "image.crop" => {
                self.image.crop = if v == "none" {
                    None
                } else {
                    let (w, h) = v.split_once('x').ok_or_else(|| {
                        Error::Config(format!("{key}: expected WxH or none, got {v:?}"))
                    })?;
                    Some((parse(key, w)?, parse(key, h)?))
                }
            }
            "hog.cell_size" => self.hog.cell_size = parse(key, v)?,
            "hog.block_cells" => self.hog.block_cells = parse(key, v)?,
            "hog.block_stride" => self.hog.block_stride = parse(key, v)?,
            "hog.bins" => self.hog.bins = parse(key, v)?,
            "hog.signed" => self.hog.signed = parse_bool(key, v)?,
            "hog.norm_epsilon" => self.hog.norm_epsilon = parse(key, v)?,
            "ae.lambda" => self.ae.lambda = parse(key, v)?,
            "ae.beta" => self.ae.beta = parse(key, v)?,
            "ae.rho" => self.ae.rho = parse(key, v)?,
            "ae.learning_rate" => self.ae.learning_rate = parse(key, v)?,
            "ae.momentum" => self.ae.momentum = parse(key, v)?,
            "ae.batch_size" => {
                self.ae.batch_size = if v == "full" {
                    None
                } else {
                    Some(parse(key, v)?)
                }
            }
            "ae.epochs" => self.ae.epochs = parse(key, v)?,
            "ae.finetune_epochs" => self.finetune_epochs = parse(key, v)?,
            "svm.kernel" => {
                self.svm.kind = match v {
                    "gaussian" => KernelKind::Gaussian,
                    "linear" => KernelKind::Linear,
                    _ => {
                        return Err(Error::Config(format!(
                            "{key}: expected gaussian or linear, got {v:?}"
                        )))
                    }
                }
            }
            "svm.gamma" => {
                self.svm.gamma = if v == "auto" {
                    None
                } else {
                    Some(parse(key, v)?)
                }
            }
            "svm.c" => self.svm.c = parse(key, v)?,
            "svm.tol" => self.svm.tol = parse(key, v)?,
            "svm.max_passes" => self.svm.max_passes = parse(key, v)?,
            "pipeline.method" => {
                self.method = v
                    .parse()
                    .map_err(|e| Error::Config(format!("{key}: {e}")))?
            }
            "pipeline.dim" => self.dim = parse(key, v)?,
            "pipeline.depth" => self.depth = parse(key, v)?,
            other => return Err(Error::Config(format!("unknown key {other:?}"))),
        }
        Ok(())
    }

    pub fn get(&self, key: &str) -> Option<String> {
        Some(match key {
            "seed" => self.seed.to_string(),
            "split_fraction" => self.split_fraction.to_string(),
            "train_peaks" => self.train_peaks.to_string(),
            "test_peaks" => self.test_peaks.to_string(),
            "dims" => join(&self.dims),
            "depths" => join(&self.depths),
            "depth_widths" => join(&self.depth_widths),
            "image.width" => self.image.width.to_string(),
            "image.height" => self.image.height.to_string(),
            "image.crop" => match self.image.crop {
                None => "none".into(),
                Some((w, h)) => format!("{w}x{h}"),
            },
            "hog.cell_size" => self.hog.cell_size.to_string(),
            "hog.block_cells" => self.hog.block_cells.to_string(),
            "hog.block_stride" => self.hog.block_stride.to_string(),
            "hog.bins" => self.hog.bins.to_string(),
            "hog.signed" => self.hog.signed.to_string(),
            "hog.norm_epsilon" => self.hog.norm_epsilon.to_string(),
            "ae.lambda" => self.ae.lambda.to_string(),
            "ae.beta" => self.ae.beta.to_string(),
            "ae.rho" => self.ae.rho.to_string(),
            "ae.learning_rate" => self.ae.learning_rate.to_string(),
            "ae.momentum" => self.ae.momentum.to_string(),
            "ae.batch_size" => self
                .ae
                .batch_size
                .map_or_else(|| "full".into(), |b| b.to_string()),
            "ae.epochs" => self.ae.epochs.to_string(),
            "ae.finetune_epochs" => self.finetune_epochs.to_string(),
            "svm.kernel" => match self.svm.kind {
                KernelKind::Gaussian => "gaussian".into(),
                KernelKind::Linear => "linear".into(),
            },
            "svm.gamma" => self
                .svm
                .gamma
                .map_or_else(|| "auto".into(), |g| g.to_string()),
            "svm.c" => self.svm.c.to_string(),
            "svm.tol" => self.svm.tol.to_string(),
            "svm.max_passes" => self.svm.max_passes.to_string(),
            "pipeline.method" => self.method.as_str().into(),
            "pipeline.dim" => self.dim.to_string(),
            "pipeline.depth" => self.depth.to_string(),
            _ => return None,
        })
    }

    pub fn parse_text(text: &str) -> Result<Self> {
        let mut cfg = ExperimentConfig::default();
        cfg.apply_text(text)?;
        Ok(cfg)
    }

    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| {
                Error::Config(format!(
                    "line {}: expected key = value, got {line:?}",
                    i + 1
                ))
            })?;
            self.set(k, v)
                .map_err(|e| Error::Config(format!("line {}: {}", i + 1, strip_prefix(&e))))?;
        }
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse_text(&text)
            .map_err(|e| Error::Config(format!("{}: {}", path.display(), strip_prefix(&e))))
    }

    /// Applies `key=value` overrides in order.
    pub fn apply_overrides<S: AsRef<str>>(&mut self, overrides: &[S]) -> Result<()> {
        for o in overrides {
            let o = o.as_ref();
            let (k, v) = o
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("override {o:?} is not key=value")))?;
            self.set(k, v)?;
        }
        Ok(())
    }

    pub fn to_map(&self) -> BTreeMap<String, String> {
        Self::keys()
            .iter()
            .map(|k| (k.to_string(), self.get(k).expect("listed key")))
            .collect()
    }

    /// Canonical text: every key, sorted, `key = value` per line.
    pub fn to_text(&self) -> String {
        self.to_map()
            .iter()
            .map(|(k, v)| format!("{k} = {v}\n"))
            .collect()
    }

    /// SHA-256 of [`Self::to_text`], hex encoded.
    pub fn hash(&self) -> String {
        hex::encode(Sha256::digest(self.to_text().as_bytes()))
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::Config(m));
        if !(self.split_fraction > 0.0 && self.split_fraction < 1.0) {
            return fail(format!(
                "split_fraction {} not in (0, 1)",
                self.split_fraction
            ));
        }
        if self.dims.is_empty() || self.dims.contains(&0) {
            return fail(format!(
                "dims must be non-empty and all >= 1, got {:?}",
                self.dims
            ));
        }
        if self.depths.is_empty() || self.depths.iter().any(|&d| !(1..=5).contains(&d)) {
            return fail(format!("depths must lie in 1..=5, got {:?}", self.depths));
        }
        if let Some(&d) = self
            .depths
            .iter()
            .find(|&&d| d > self.depth_widths.len() + 1)
        {
            return fail(format!(
                "depth {d} needs {} entries in depth_widths, have {:?}",
                d - 1,
                self.depth_widths
            ));
        }
        if self.train_peaks == 0 || self.test_peaks == 0 {
            return fail("train_peaks and test_peaks must be >= 1".into());
        }
        if self.image.width == 0 || self.image.height == 0 {
            return fail("image size must be at least 1x1".into());
        }
        if !(1..=5).contains(&self.depth)
            || self.depth > self.depth_widths.len() + 1
            || self.dim == 0
        {
            return fail(format!(
                "pipeline.depth {} / pipeline.dim {} out of range",
                self.depth, self.dim
            ));
        }
        self.hog
            .validate()
            .map_err(|e| Error::Config(strip_prefix(&e)))?;
        self.svm
            .validate()
            .map_err(|e| Error::Config(strip_prefix(&e)))?;
        self.ae
            .validate()
            .map_err(|e| Error::Config(strip_prefix(&e)))?;
        Ok(())
    }
}

fn strip_prefix(e: &Error) -> String {
    match e {
        Error::Config(m) | Error::InvalidArgument(m) => m.clone(),
        other => other.to_string(),
    }
}

/// Encoder widths for a stack of `depth` hidden layers ending in `dim`: the
/// first `depth − 1` entries of `prefix`, then `dim`.
pub fn widths_for(dim: usize, depth: usize, prefix: &[usize]) -> Result<Vec<usize>> {
    if depth == 0 || depth > prefix.len() + 1 {
        return Err(Error::invalid(format!(
            "depth {depth} needs {} prefix widths, have {prefix:?}",
            depth.saturating_sub(1)
        )));
    }
    Ok(prefix[..depth - 1].iter().copied().chain([dim]).collect())
}
