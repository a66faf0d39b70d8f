//! Dataset ingestion, experiment sweeps, reports and model persistence.

pub mod config;
pub mod manifest;
pub mod model_io;
pub mod report;
pub mod sweep;
pub mod synth;

use serde::{Deserialize, Serialize};

use crate::autoencoder::{encode, StackedAutoencoder};
use crate::error::{Error, Result};
use crate::hog::{hog_matrix, HogConfig};
use crate::imageio::{center_crop, read_pgm, resize_bilinear, GrayImage};
use crate::linalg::FeatureMatrix;
use crate::pca::{pca_project, PcaModel};
use crate::svm::{ova_predict, MulticlassSvm};

pub use config::{widths_for, ExperimentConfig, ReducerKind};
pub use manifest::{
    load_manifest, parse_manifest, select_peaks, split, Manifest, ManifestEntry, Split,
};
pub use model_io::{load_artifact, load_model, save_artifact, save_model, Artifact};
pub use report::{emit_report, Method, ReportFormat, ReportMetadata, ReportRow, SweepReport};
pub use sweep::{prepare, run_depth_sweep, run_dimension_sweep, train_pipeline, Prepared};

/// Optional centre crop followed by a bilinear resize.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Preprocess {
    pub width: usize,
    pub height: usize,
    pub crop: Option<(usize, usize)>,
}

impl Default for Preprocess {
    fn default() -> Self {
        Preprocess {
            width: 128,
            height: 128,
            crop: None,
        }
    }
}

impl Preprocess {
    pub fn apply(&self, img: &GrayImage) -> Result<GrayImage> {
        let cropped = match self.crop {
            Some((w, h)) => center_crop(img, w, h)?,
            None => img.clone(),
        };
        if cropped.width() == self.width && cropped.height() == self.height {
            Ok(cropped)
        } else {
            resize_bilinear(&cropped, self.width, self.height)
        }
    }
}

/// Reads and preprocesses every image of `m`, in manifest order.
pub fn load_images(m: &Manifest, pre: &Preprocess) -> Result<Vec<GrayImage>> {
    m.entries
        .iter()
        .map(|e| {
            let img = read_pgm(&e.path)?;
            pre.apply(&img)
                .map_err(|err| Error::invalid(format!("{}: {err}", e.path.display())))
        })
        .collect()
}

/// HOG feature matrix of the images listed in `m`.
pub fn manifest_features(m: &Manifest, pre: &Preprocess, hog: &HogConfig) -> Result<FeatureMatrix> {
    if m.is_empty() {
        return Err(Error::invalid("manifest has no entries"));
    }
    hog_matrix(&load_images(m, pre)?, hog)
}

/// Class index of each entry's label within `class_names`.
pub fn label_ids(m: &Manifest, class_names: &[String]) -> Result<Vec<usize>> {
    m.entries
        .iter()
        .map(|e| {
            class_names
                .iter()
                .position(|c| *c == e.label)
                .ok_or_else(|| Error::invalid(format!("label {:?} is not a known class", e.label)))
        })
        .collect()
}

/// The dimension-reduction stage between HOG and the classifier.
#[derive(Debug, Clone, PartialEq)]
pub enum Reducer {
    Identity,
    Pca(PcaModel),
    Autoencoder(StackedAutoencoder),
}

impl Reducer {
    pub fn kind(&self) -> ReducerKind {
        match self {
            Reducer::Identity => ReducerKind::Identity,
            Reducer::Pca(_) => ReducerKind::Pca,
            Reducer::Autoencoder(_) => ReducerKind::Autoencoder,
        }
    }

    pub fn reduce(&self, x: &FeatureMatrix) -> Result<FeatureMatrix> {
        match self {
            Reducer::Identity => Ok(x.clone()),
            Reducer::Pca(m) => pca_project(m, x),
            Reducer::Autoencoder(s) => encode(s, x),
        }
    }
}

/// A multiclass SVM together with the names of its class indices.
#[derive(Debug, Clone, PartialEq)]
pub struct Classifier {
    pub svm: MulticlassSvm,
    pub class_names: Vec<String>,
}

impl Classifier {
    pub fn predict(&self, x: &FeatureMatrix) -> Result<Vec<usize>> {
        x.row_iter()
            .map(|row| ova_predict(&self.svm, row))
            .collect()
    }
}

/// Everything needed to go from an image file to a predicted label.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelBundle {
    pub preprocess: Preprocess,
    pub hog: HogConfig,
    pub reducer: Reducer,
    pub classifier: Classifier,
}

impl ModelBundle {
    /// Predicted class names for HOG feature rows.
    pub fn predict_features(&self, x: &FeatureMatrix) -> Result<Vec<String>> {
        let z = self.reducer.reduce(x)?;
        Ok(self
            .classifier
            .predict(&z)?
            .into_iter()
            .map(|c| self.classifier.class_names[c].clone())
            .collect())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub accuracy: f64,
    pub correct: usize,
    pub total: usize,
    pub warnings: Vec<String>,
}

/// Top-1 agreement of predictions with the labels in `truth`.
pub fn score(predicted: &[String], truth: &[String], known: &[String]) -> Result<Evaluation> {
    if truth.is_empty() {
        return Err(Error::invalid("cannot evaluate on an empty test set"));
    }
    let mut warnings = Vec::new();
    let mut unknown: Vec<&String> = truth.iter().filter(|t| !known.contains(t)).collect();
    unknown.sort();
    unknown.dedup();
    for u in unknown {
        warnings.push(format!(
            "test label {u:?} is absent from the model; its samples count as wrong"
        ));
    }
    let correct = predicted.iter().zip(truth).filter(|(p, t)| p == t).count();
    Ok(Evaluation {
        accuracy: correct as f64 / truth.len() as f64,
        correct,
        total: truth.len(),
        warnings,
    })
}

/// Fraction of `test` entries whose predicted label matches the manifest.
pub fn evaluate(bundle: &ModelBundle, test: &Manifest) -> Result<Evaluation> {
    if test.is_empty() {
        return Err(Error::invalid("cannot evaluate on an empty test set"));
    }
    let x = manifest_features(test, &bundle.preprocess, &bundle.hog)?;
    let predicted = bundle.predict_features(&x)?;
    let truth: Vec<String> = test.entries.iter().map(|e| e.label.clone()).collect();
    let eval = score(&predicted, &truth, &bundle.classifier.class_names)?;
    for w in &eval.warnings {
        log::warn!("{w}");
    }
    Ok(eval)
}
