//! Binary model container.
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! "FERM"            magic
//! u32               format version (1)
//! u32               metadata entry count, then per entry: key, value
//! u32               tensor count, then per tensor:
//!                     name, u32 ndim, ndim × u64 dims, f64 values (row-major)
//! u32               CRC-32 (IEEE) of every preceding byte
//! ```
//!
//! Strings are a u32 byte length followed by UTF-8 bytes.

use std::collections::BTreeMap;
use std::path::Path;

use crate::autoencoder::{AeLayer, Dense, StackedAutoencoder};
use crate::error::{Error, Result};
use crate::hog::HogConfig;
use crate::linalg::{FeatureMatrix, Matrix};
use crate::pca::PcaModel;
use crate::svm::{BinarySvm, KernelConfig, KernelKind, MulticlassSvm};

use super::{Classifier, ModelBundle, Preprocess, Reducer};

pub const MAGIC: &[u8; 4] = b"FERM";
pub const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    pub name: String,
    pub shape: Vec<usize>,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Container {
    pub metadata: BTreeMap<String, String>,
    pub tensors: Vec<Tensor>,
}

fn put_u32(out: &mut Vec<u8>, v: u32) {
    out.extend_from_slice(&v.to_le_bytes());
}

fn put_str(out: &mut Vec<u8>, s: &str) {
    put_u32(out, s.len() as u32);
    out.extend_from_slice(s.as_bytes());
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| Error::Model("truncated container".into()))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(
            self.take(4)?.try_into().expect("4 bytes"),
        ))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(
            self.take(8)?.try_into().expect("8 bytes"),
        ))
    }

    fn string(&mut self) -> Result<String> {
        let n = self.u32()? as usize;
        String::from_utf8(self.take(n)?.to_vec())
            .map_err(|_| Error::Model("string is not UTF-8".into()))
    }
}

impl Container {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        put_u32(&mut out, VERSION);
        put_u32(&mut out, self.metadata.len() as u32);
        for (k, v) in &self.metadata {
            put_str(&mut out, k);
            put_str(&mut out, v);
        }
        put_u32(&mut out, self.tensors.len() as u32);
        for t in &self.tensors {
            put_str(&mut out, &t.name);
            put_u32(&mut out, t.shape.len() as u32);
            for &d in &t.shape {
                out.extend_from_slice(&(d as u64).to_le_bytes());
            }
            for v in &t.values {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        let crc = crc32fast::hash(&out);
        put_u32(&mut out, crc);
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < 4 + 4 + 4 + 4 + 4 {
            return Err(Error::Model(
                "file too short to be a model container".into(),
            ));
        }
        let (body, tail) = bytes.split_at(bytes.len() - 4);
        let stored = u32::from_le_bytes(tail.try_into().expect("4 bytes"));
        let actual = crc32fast::hash(body);
        if stored != actual {
            return Err(Error::Model(format!(
                "checksum mismatch (stored {stored:08x}, computed {actual:08x})"
            )));
        }
        let mut r = Reader {
            bytes: body,
            pos: 0,
        };
        if r.take(4)? != MAGIC {
            return Err(Error::Model("bad magic, not a model container".into()));
        }
        let version = r.u32()?;
        if version != VERSION {
            return Err(Error::Model(format!(
                "unsupported format version {version} (this build reads version {VERSION})"
            )));
        }
        let mut metadata = BTreeMap::new();
        for _ in 0..r.u32()? {
            let k = r.string()?;
            let v = r.string()?;
            metadata.insert(k, v);
        }
        let count = r.u32()?;
        let mut tensors = Vec::new();
        for _ in 0..count {
            let name = r.string()?;
            let ndim = r.u32()? as usize;
            let mut shape = Vec::with_capacity(ndim.min(8));
            for _ in 0..ndim {
                shape.push(r.u64()? as usize);
            }
            let len = shape
                .iter()
                .try_fold(1usize, |a, &d| a.checked_mul(d))
                .ok_or_else(|| Error::Model(format!("tensor {name:?} is too large")))?;
            let raw = r.take(
                len.checked_mul(8)
                    .ok_or_else(|| Error::Model("tensor too large".into()))?,
            )?;
            let values = raw
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
                .collect();
            tensors.push(Tensor {
                name,
                shape,
                values,
            });
        }
        if r.pos != body.len() {
            return Err(Error::Model("trailing bytes after tensors".into()));
        }
        Ok(Container { metadata, tensors })
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn read(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes).map_err(|e| match e {
            Error::Model(m) => Error::Model(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    fn set(&mut self, key: &str, value: impl ToString) {
        self.metadata.insert(key.to_string(), value.to_string());
    }

    fn meta(&self, key: &str) -> Result<&str> {
        self.metadata
            .get(key)
            .map(String::as_str)
            .ok_or_else(|| Error::Model(format!("missing metadata {key:?}")))
    }

    fn meta_parse<T: std::str::FromStr>(&self, key: &str) -> Result<T> {
        let v = self.meta(key)?;
        v.parse()
            .map_err(|_| Error::Model(format!("metadata {key:?} has invalid value {v:?}")))
    }

    fn push_vec(&mut self, name: String, v: &[f64]) {
        self.tensors.push(Tensor {
            name,
            shape: vec![v.len()],
            values: v.to_vec(),
        });
    }

    fn push_matrix(&mut self, name: String, m: &Matrix) {
        self.tensors.push(Tensor {
            name,
            shape: vec![m.rows(), m.cols()],
            values: m.as_slice().to_vec(),
        });
    }

    pub fn tensor(&self, name: &str) -> Result<&Tensor> {
        self.tensors
            .iter()
            .find(|t| t.name == name)
            .ok_or_else(|| Error::Model(format!("missing tensor {name:?}")))
    }

    fn vector(&self, name: &str) -> Result<Vec<f64>> {
        let t = self.tensor(name)?;
        if t.shape.len() != 1 {
            return Err(Error::Model(format!(
                "tensor {name:?} should be 1-D, has shape {:?}",
                t.shape
            )));
        }
        Ok(t.values.clone())
    }

    fn matrix(&self, name: &str) -> Result<Matrix> {
        let t = self.tensor(name)?;
        match t.shape[..] {
            [r, c] => Matrix::new(r, c, t.values.clone())
                .map_err(|e| Error::Model(format!("tensor {name:?}: {e}"))),
            _ => Err(Error::Model(format!(
                "tensor {name:?} should be 2-D, has shape {:?}",
                t.shape
            ))),
        }
    }
}

/// Feature rows with the label and source path of each row.
#[derive(Debug, Clone, PartialEq)]
pub struct LabelledFeatures {
    pub features: FeatureMatrix,
    pub labels: Vec<String>,
    pub paths: Vec<String>,
}

/// Anything the command-line stages pass between each other.
#[derive(Debug, Clone, PartialEq)]
pub enum Artifact {
    Features(LabelledFeatures),
    Reducer(Reducer),
    Classifier(Classifier),
    Bundle(Box<ModelBundle>),
}

fn strings_to_json(v: &[String]) -> String {
    serde_json::to_string(v).expect("strings serialize")
}

fn strings_from_json(c: &Container, key: &str) -> Result<Vec<String>> {
    serde_json::from_str(c.meta(key)?).map_err(|e| Error::Model(format!("metadata {key:?}: {e}")))
}

fn put_reducer(c: &mut Container, r: &Reducer) {
    c.set("reducer", r.kind().as_str());
    match r {
        Reducer::Identity => {}
        Reducer::Pca(m) => {
            c.push_vec("pca.mean".into(), &m.mean);
            c.push_matrix("pca.components".into(), &m.components);
            c.push_vec("pca.eigenvalues".into(), &m.eigenvalues);
        }
        Reducer::Autoencoder(s) => {
            c.set("ae.depth", s.depth());
            for (i, l) in s.layers().iter().enumerate() {
                c.push_matrix(format!("ae.{i}.enc.w"), &l.encoder.w);
                c.push_vec(format!("ae.{i}.enc.b"), &l.encoder.b);
                c.push_matrix(format!("ae.{i}.dec.w"), &l.decoder.w);
                c.push_vec(format!("ae.{i}.dec.b"), &l.decoder.b);
            }
        }
    }
}

fn get_reducer(c: &Container) -> Result<Reducer> {
    let wrap = |e: Error| Error::Model(e.to_string());
    match c.meta("reducer")? {
        "none" => Ok(Reducer::Identity),
        "pca" => Ok(Reducer::Pca(
            PcaModel::new(
                c.vector("pca.mean")?,
                c.matrix("pca.components")?,
                c.vector("pca.eigenvalues")?,
            )
            .map_err(wrap)?,
        )),
        "autoencoder" => {
            let depth: usize = c.meta_parse("ae.depth")?;
            let layers = (0..depth)
                .map(|i| {
                    let enc = Dense {
                        w: c.matrix(&format!("ae.{i}.enc.w"))?,
                        b: c.vector(&format!("ae.{i}.enc.b"))?,
                    };
                    let dec = Dense {
                        w: c.matrix(&format!("ae.{i}.dec.w"))?,
                        b: c.vector(&format!("ae.{i}.dec.b"))?,
                    };
                    AeLayer::from_parts(enc, dec).map_err(wrap)
                })
                .collect::<Result<Vec<_>>>()?;
            Ok(Reducer::Autoencoder(
                StackedAutoencoder::from_layers(layers).map_err(wrap)?,
            ))
        }
        other => Err(Error::Model(format!("unknown reducer {other:?}"))),
    }
}

fn put_kernel(c: &mut Container, prefix: &str, k: &KernelConfig) {
    c.set(
        &format!("{prefix}.kind"),
        match k.kind {
            KernelKind::Gaussian => "gaussian",
            KernelKind::Linear => "linear",
        },
    );
    c.set(
        &format!("{prefix}.gamma"),
        k.gamma
            .map_or_else(|| "auto".to_string(), |g| g.to_string()),
    );
    c.set(&format!("{prefix}.c"), k.c);
    c.set(&format!("{prefix}.tol"), k.tol);
    c.set(&format!("{prefix}.max_passes"), k.max_passes);
}

fn get_kernel(c: &Container, prefix: &str) -> Result<KernelConfig> {
    let kind = match c.meta(&format!("{prefix}.kind"))? {
        "gaussian" => KernelKind::Gaussian,
        "linear" => KernelKind::Linear,
        other => return Err(Error::Model(format!("unknown kernel {other:?}"))),
    };
    let gamma_key = format!("{prefix}.gamma");
    let gamma = match c.meta(&gamma_key)? {
        "auto" => None,
        _ => Some(c.meta_parse(&gamma_key)?),
    };
    Ok(KernelConfig {
        kind,
        gamma,
        c: c.meta_parse(&format!("{prefix}.c"))?,
        tol: c.meta_parse(&format!("{prefix}.tol"))?,
        max_passes: c.meta_parse(&format!("{prefix}.max_passes"))?,
    })
}

fn put_classifier(c: &mut Container, k: &Classifier) {
    c.set("class_names", strings_to_json(&k.class_names));
    c.set("svm.machines", k.svm.machines.len());
    let classes: Vec<f64> = k.svm.classes.iter().map(|&x| x as f64).collect();
    c.push_vec("svm.classes".into(), &classes);
    for (i, m) in k.svm.machines.iter().enumerate() {
        put_kernel(c, &format!("svm.{i}.kernel"), &m.kernel);
        c.push_matrix(format!("svm.{i}.support_vectors"), &m.support_vectors);
        c.push_vec(format!("svm.{i}.dual_coeffs"), &m.dual_coeffs);
        c.push_vec(format!("svm.{i}.bias"), &[m.bias]);
    }
}

fn get_classifier(c: &Container) -> Result<Classifier> {
    let class_names = strings_from_json(c, "class_names")?;
    let n: usize = c.meta_parse("svm.machines")?;
    let classes: Vec<usize> = c
        .vector("svm.classes")?
        .into_iter()
        .map(|x| x as usize)
        .collect();
    if classes.len() != n || classes.iter().any(|&k| k >= class_names.len()) {
        return Err(Error::Model("svm class table is inconsistent".into()));
    }
    let machines = (0..n)
        .map(|i| {
            let bias = c.vector(&format!("svm.{i}.bias"))?;
            let [bias] = bias[..] else {
                return Err(Error::Model(format!("svm.{i}.bias must hold one value")));
            };
            let support_vectors = c.matrix(&format!("svm.{i}.support_vectors"))?;
            let dual_coeffs = c.vector(&format!("svm.{i}.dual_coeffs"))?;
            if dual_coeffs.len() != support_vectors.rows() {
                return Err(Error::Model(format!("svm.{i}: coefficient count mismatch")));
            }
            Ok(BinarySvm {
                support_vectors,
                dual_coeffs,
                bias,
                kernel: get_kernel(c, &format!("svm.{i}.kernel"))?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Classifier {
        svm: MulticlassSvm { classes, machines },
        class_names,
    })
}

fn put_front_end(c: &mut Container, p: &Preprocess, h: &HogConfig) {
    c.set("image.width", p.width);
    c.set("image.height", p.height);
    c.set(
        "image.crop",
        p.crop
            .map_or_else(|| "none".to_string(), |(w, h)| format!("{w}x{h}")),
    );
    c.set("hog.cell_size", h.cell_size);
    c.set("hog.block_cells", h.block_cells);
    c.set("hog.block_stride", h.block_stride);
    c.set("hog.bins", h.bins);
    c.set("hog.signed", h.signed);
    c.set("hog.norm_epsilon", h.norm_epsilon);
}

fn get_front_end(c: &Container) -> Result<(Preprocess, HogConfig)> {
    let crop = match c.meta("image.crop")? {
        "none" => None,
        v => {
            let bad = || Error::Model(format!("metadata image.crop has invalid value {v:?}"));
            let (w, h) = v.split_once('x').ok_or_else(bad)?;
            Some((w.parse().map_err(|_| bad())?, h.parse().map_err(|_| bad())?))
        }
    };
    let pre = Preprocess {
        width: c.meta_parse("image.width")?,
        height: c.meta_parse("image.height")?,
        crop,
    };
    let hog = HogConfig {
        cell_size: c.meta_parse("hog.cell_size")?,
        block_cells: c.meta_parse("hog.block_cells")?,
        block_stride: c.meta_parse("hog.block_stride")?,
        bins: c.meta_parse("hog.bins")?,
        signed: c.meta_parse("hog.signed")?,
        norm_epsilon: c.meta_parse("hog.norm_epsilon")?,
    };
    Ok((pre, hog))
}

impl Artifact {
    pub fn kind(&self) -> &'static str {
        match self {
            Artifact::Features(_) => "features",
            Artifact::Reducer(_) => "reducer",
            Artifact::Classifier(_) => "classifier",
            Artifact::Bundle(_) => "bundle",
        }
    }

    pub fn to_container(&self) -> Container {
        let mut c = Container::default();
        c.set("kind", self.kind());
        match self {
            Artifact::Features(f) => {
                c.set("labels", strings_to_json(&f.labels));
                c.set("paths", strings_to_json(&f.paths));
                c.push_matrix("features".into(), &f.features);
            }
            Artifact::Reducer(r) => put_reducer(&mut c, r),
            Artifact::Classifier(k) => put_classifier(&mut c, k),
            Artifact::Bundle(b) => {
                put_front_end(&mut c, &b.preprocess, &b.hog);
                put_reducer(&mut c, &b.reducer);
                put_classifier(&mut c, &b.classifier);
            }
        }
        c
    }

    pub fn from_container(c: &Container) -> Result<Self> {
        Ok(match c.meta("kind")? {
            "features" => {
                let features = c.matrix("features")?;
                let labels = strings_from_json(c, "labels")?;
                let paths = strings_from_json(c, "paths")?;
                if labels.len() != features.rows() || paths.len() != features.rows() {
                    return Err(Error::Model("feature rows and labels disagree".into()));
                }
                Artifact::Features(LabelledFeatures {
                    features,
                    labels,
                    paths,
                })
            }
            "reducer" => Artifact::Reducer(get_reducer(c)?),
            "classifier" => Artifact::Classifier(get_classifier(c)?),
            "bundle" => {
                let (preprocess, hog) = get_front_end(c)?;
                Artifact::Bundle(Box::new(ModelBundle {
                    preprocess,
                    hog,
                    reducer: get_reducer(c)?,
                    classifier: get_classifier(c)?,
                }))
            }
            other => return Err(Error::Model(format!("unknown artifact kind {other:?}"))),
        })
    }
}

pub fn save_artifact(a: &Artifact, path: &Path) -> Result<()> {
    a.to_container().write(path)
}

pub fn load_artifact(path: &Path) -> Result<Artifact> {
    Artifact::from_container(&Container::read(path)?)
}

pub fn save_model(bundle: &ModelBundle, path: &Path) -> Result<()> {
    save_artifact(&Artifact::Bundle(Box::new(bundle.clone())), path)
}

pub fn load_model(path: &Path) -> Result<ModelBundle> {
    match load_artifact(path)? {
        Artifact::Bundle(b) => Ok(*b),
        other => Err(Error::Model(format!(
            "{}: expected a model bundle, found {}",
            path.display(),
            other.kind()
        ))),
    }
}
