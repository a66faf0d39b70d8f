//! Dimension and depth sweeps plus single-configuration training.
//!
//! Seeds are derived from the experiment seed: the split uses `[1]`, greedy
//! pretraining `[2]` (then the layer index), fine-tuning `[3, dim, depth]` and
//! the classifier `[4, method, dim, depth]`. Greedy layers depend only on the
//! widths above them, so stacks sharing a width prefix share pretrained
//! layers; each layer is trained once per sweep.

use std::collections::HashMap;

use crate::autoencoder::{
    check_widths, fine_tune, train_layer, AeHyper, AeLayer, StackedAutoencoder,
};
use crate::error::{Error, Result};
use crate::linalg::{derive_seed, FeatureMatrix};
use crate::pca::pca_fit;
use crate::svm::ova_train;

use super::config::{widths_for, ExperimentConfig, ReducerKind};
use super::manifest::{select_peaks, split, Manifest};
use super::report::{Method, ReportMetadata, ReportRow, SweepReport};
use super::{label_ids, manifest_features, Classifier, ModelBundle, Reducer};

/// Split, peak-selected and HOG-encoded data for one experiment.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub train: Manifest,
    pub test: Manifest,
    pub train_x: FeatureMatrix,
    pub train_y: Vec<usize>,
    pub test_x: FeatureMatrix,
    pub test_y: Vec<usize>,
    pub class_names: Vec<String>,
    pub warnings: Vec<String>,
}

pub fn prepare(cfg: &ExperimentConfig, m: &Manifest) -> Result<Prepared> {
    cfg.validate()?;
    if m.is_empty() {
        return Err(Error::invalid("manifest has no entries"));
    }
    let s = split(m, cfg.split_fraction, derive_seed(cfg.seed, &[1]))?;
    let train = select_peaks(&s.train, cfg.train_peaks);
    let test = select_peaks(&s.test, cfg.test_peaks);
    if test.is_empty() {
        return Err(Error::invalid(
            "the split left no test sequences; every label needs at least two sequences",
        ));
    }
    let class_names = m.labels();
    log::info!(
        "loading {} training and {} test images",
        train.len(),
        test.len()
    );
    let train_x = manifest_features(&train, &cfg.image, &cfg.hog)?;
    let test_x = manifest_features(&test, &cfg.image, &cfg.hog)?;
    Ok(Prepared {
        train_y: label_ids(&train, &class_names)?,
        test_y: label_ids(&test, &class_names)?,
        train,
        test,
        train_x,
        test_x,
        class_names,
        warnings: s.warnings,
    })
}

fn method_code(kind: ReducerKind) -> u64 {
    match kind {
        ReducerKind::Autoencoder => 0,
        ReducerKind::Pca => 1,
        ReducerKind::Identity => 2,
    }
}

/// Greedy layers keyed by the widths up to and including the layer, with the
/// layer's output on the training data.
struct PretrainCache<'a> {
    data: &'a FeatureMatrix,
    hyper: AeHyper,
    layers: HashMap<Vec<usize>, (AeLayer, FeatureMatrix)>,
}

impl<'a> PretrainCache<'a> {
    fn new(data: &'a FeatureMatrix, cfg: &ExperimentConfig) -> Self {
        PretrainCache {
            data,
            hyper: AeHyper {
                seed: derive_seed(cfg.seed, &[2]),
                ..cfg.ae
            },
            layers: HashMap::new(),
        }
    }

    fn stack(&mut self, widths: &[usize]) -> Result<StackedAutoencoder> {
        check_widths(self.data.cols(), widths)?;
        for i in 0..widths.len() {
            let key = widths[..=i].to_vec();
            if self.layers.contains_key(&key) {
                continue;
            }
            let input = if i == 0 {
                self.data
            } else {
                &self.layers[&widths[..i]].1
            };
            log::info!(
                "pretraining layer {} ({} -> {})",
                i + 1,
                input.cols(),
                widths[i]
            );
            let trained = train_layer(input, widths[i], &self.hyper.for_layer(i))?;
            let out = trained.layer.encoder.forward(input)?;
            self.layers.insert(key, (trained.layer, out));
        }
        let layers = (0..widths.len())
            .map(|i| self.layers[&widths[..=i]].0.clone())
            .collect();
        StackedAutoencoder::from_layers(layers)
    }
}

fn autoencoder(
    cfg: &ExperimentConfig,
    cache: &mut PretrainCache,
    dim: usize,
    depth: usize,
) -> Result<StackedAutoencoder> {
    let widths = widths_for(dim, depth, &cfg.depth_widths)?;
    let stack = cache.stack(&widths)?;
    if cfg.finetune_epochs == 0 {
        return Ok(stack);
    }
    let h = AeHyper {
        epochs: cfg.finetune_epochs,
        seed: derive_seed(cfg.seed, &[3, dim as u64, depth as u64]),
        ..cfg.ae
    };
    log::info!("fine-tuning {widths:?}");
    Ok(fine_tune(&stack, cache.data, &h)?.stack)
}

/// Reason a stack cannot be built for this input width, if any.
fn ae_infeasible(cfg: &ExperimentConfig, input: usize, dim: usize, depth: usize) -> Option<String> {
    let widths = match widths_for(dim, depth, &cfg.depth_widths) {
        Ok(w) => w,
        Err(e) => return Some(e.to_string()),
    };
    check_widths(input, &widths)
        .err()
        .map(|_| format!("autoencoder dim {dim} depth {depth}: widths {widths:?} do not strictly decrease from {input}"))
}

fn pca_limit(prep: &Prepared) -> usize {
    (prep.train_x.rows() - 1).min(prep.train_x.cols())
}

fn classify(
    cfg: &ExperimentConfig,
    prep: &Prepared,
    reducer: &Reducer,
    seed: u64,
) -> Result<(Classifier, f64)> {
    let ztr = reducer.reduce(&prep.train_x)?;
    let zte = reducer.reduce(&prep.test_x)?;
    let svm = ova_train(&ztr, &prep.train_y, &cfg.svm, seed)?;
    let classifier = Classifier {
        svm,
        class_names: prep.class_names.clone(),
    };
    let predicted = classifier.predict(&zte)?;
    let correct = predicted
        .iter()
        .zip(&prep.test_y)
        .filter(|(p, t)| p == t)
        .count();
    Ok((classifier, correct as f64 / prep.test_y.len() as f64))
}

fn svm_seed(cfg: &ExperimentConfig, kind: ReducerKind, dim: usize, depth: usize) -> u64 {
    derive_seed(cfg.seed, &[4, method_code(kind), dim as u64, depth as u64])
}

fn metadata(
    cfg: &ExperimentConfig,
    kind: &str,
    prep: &Prepared,
    skipped: Vec<String>,
) -> ReportMetadata {
    for s in &skipped {
        log::warn!("skipping {s}");
    }
    ReportMetadata {
        kind: kind.into(),
        seed: cfg.seed,
        config_hash: cfg.hash(),
        config: cfg.to_map(),
        classes: prep.class_names.clone(),
        train_samples: prep.train_x.rows(),
        test_samples: prep.test_x.rows(),
        skipped,
        warnings: prep.warnings.clone(),
    }
}

/// Per dimension: a PCA row, one autoencoder row per depth and the best
/// autoencoder depth (lowest depth on ties). Cells that cannot be built for
/// the data at hand are listed in the metadata instead.
pub fn run_dimension_sweep(cfg: &ExperimentConfig, m: &Manifest) -> Result<SweepReport> {
    let prep = prepare(cfg, m)?;
    run_dimension_sweep_prepared(cfg, &prep)
}

pub fn run_dimension_sweep_prepared(
    cfg: &ExperimentConfig,
    prep: &Prepared,
) -> Result<SweepReport> {
    let input = prep.train_x.cols();
    let limit = pca_limit(prep);
    let mut skipped = Vec::new();
    let pca_k = cfg.dims.iter().copied().filter(|&d| d <= limit).max();
    let pca_full = pca_k.map(|k| pca_fit(&prep.train_x, k)).transpose()?;
    let mut cache = PretrainCache::new(&prep.train_x, cfg);
    let mut rows = Vec::new();
    for &dim in &cfg.dims {
        match &pca_full {
            Some(full) if dim <= limit => {
                let reducer = Reducer::Pca(full.truncate(dim)?);
                let (_, acc) =
                    classify(cfg, prep, &reducer, svm_seed(cfg, ReducerKind::Pca, dim, 0))?;
                log::info!("pca dim {dim}: accuracy {acc:.4}");
                rows.push(ReportRow {
                    method: Method::Pca,
                    dim,
                    depth: None,
                    accuracy: acc,
                });
            }
            _ => skipped.push(format!(
                "pca dim {dim}: at most {limit} components for this training set"
            )),
        }
        let mut best: Option<(usize, f64)> = None;
        for &depth in &cfg.depths {
            if let Some(reason) = ae_infeasible(cfg, input, dim, depth) {
                skipped.push(reason);
                continue;
            }
            let stack = autoencoder(cfg, &mut cache, dim, depth)?;
            let reducer = Reducer::Autoencoder(stack);
            let (_, acc) = classify(
                cfg,
                prep,
                &reducer,
                svm_seed(cfg, ReducerKind::Autoencoder, dim, depth),
            )?;
            log::info!("autoencoder dim {dim} depth {depth}: accuracy {acc:.4}");
            rows.push(ReportRow {
                method: Method::Autoencoder,
                dim,
                depth: Some(depth),
                accuracy: acc,
            });
            if best.is_none_or(|(_, b)| acc > b) {
                best = Some((depth, acc));
            }
        }
        if let Some((depth, accuracy)) = best {
            rows.push(ReportRow {
                method: Method::AutoencoderBest,
                dim,
                depth: Some(depth),
                accuracy,
            });
        }
    }
    Ok(SweepReport {
        rows,
        metadata: metadata(cfg, "dimension_sweep", prep, skipped),
    })
}

/// Full autoencoder `dim × depth` accuracy grid.
pub fn run_depth_sweep(cfg: &ExperimentConfig, m: &Manifest) -> Result<SweepReport> {
    let prep = prepare(cfg, m)?;
    let input = prep.train_x.cols();
    let mut skipped = Vec::new();
    let mut cache = PretrainCache::new(&prep.train_x, cfg);
    let mut rows = Vec::new();
    for &dim in &cfg.dims {
        for &depth in &cfg.depths {
            if let Some(reason) = ae_infeasible(cfg, input, dim, depth) {
                skipped.push(reason);
                continue;
            }
            let reducer = Reducer::Autoencoder(autoencoder(cfg, &mut cache, dim, depth)?);
            let (_, acc) = classify(
                cfg,
                &prep,
                &reducer,
                svm_seed(cfg, ReducerKind::Autoencoder, dim, depth),
            )?;
            log::info!("autoencoder dim {dim} depth {depth}: accuracy {acc:.4}");
            rows.push(ReportRow {
                method: Method::Autoencoder,
                dim,
                depth: Some(depth),
                accuracy: acc,
            });
        }
    }
    Ok(SweepReport {
        rows,
        metadata: metadata(cfg, "depth_sweep", &prep, skipped),
    })
}

/// Result of training the single configuration named by `pipeline.*`.
#[derive(Debug, Clone)]
pub struct PipelineRun {
    pub bundle: ModelBundle,
    pub accuracy: f64,
    pub report: SweepReport,
}

/// Reducer fitted to the training features for `cfg.method`, `cfg.dim` and
/// `cfg.depth`.
pub fn fit_reducer(cfg: &ExperimentConfig, train_x: &FeatureMatrix) -> Result<Reducer> {
    cfg.validate()?;
    Ok(match cfg.method {
        ReducerKind::Identity => Reducer::Identity,
        ReducerKind::Pca => Reducer::Pca(pca_fit(train_x, cfg.dim)?),
        ReducerKind::Autoencoder => {
            let mut cache = PretrainCache::new(train_x, cfg);
            Reducer::Autoencoder(autoencoder(cfg, &mut cache, cfg.dim, cfg.depth)?)
        }
    })
}

pub fn train_pipeline(cfg: &ExperimentConfig, m: &Manifest) -> Result<PipelineRun> {
    let prep = prepare(cfg, m)?;
    train_pipeline_prepared(cfg, &prep)
}

pub fn train_pipeline_prepared(cfg: &ExperimentConfig, prep: &Prepared) -> Result<PipelineRun> {
    let reducer = fit_reducer(cfg, &prep.train_x)?;
    let (dim, depth) = match cfg.method {
        ReducerKind::Identity => (prep.train_x.cols(), 0),
        ReducerKind::Pca => (cfg.dim, 0),
        ReducerKind::Autoencoder => (cfg.dim, cfg.depth),
    };
    let (classifier, accuracy) =
        classify(cfg, prep, &reducer, svm_seed(cfg, cfg.method, dim, depth))?;
    log::info!(
        "{} dim {dim}: test accuracy {accuracy:.4}",
        cfg.method.as_str()
    );
    let row = ReportRow {
        method: match cfg.method {
            ReducerKind::Pca => Method::Pca,
            ReducerKind::Autoencoder => Method::Autoencoder,
            ReducerKind::Identity => Method::Identity,
        },
        dim,
        depth: (cfg.method == ReducerKind::Autoencoder).then_some(depth),
        accuracy,
    };
    Ok(PipelineRun {
        bundle: ModelBundle {
            preprocess: cfg.image,
            hog: cfg.hog,
            reducer,
            classifier,
        },
        accuracy,
        report: SweepReport {
            rows: vec![row],
            metadata: metadata(cfg, "pipeline", prep, Vec::new()),
        },
    })
}
