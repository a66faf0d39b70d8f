//! The `fer` command line.
//!
//! Exit codes: 0 success, 1 usage error, 2 data or validation error,
//! 3 numerical failure.

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use fer_core::hog::hog_matrix;
use fer_core::linalg::derive_seed;
use fer_core::pipeline::config::ReducerKind;
use fer_core::pipeline::model_io::LabelledFeatures;
use fer_core::pipeline::sweep::fit_reducer;
use fer_core::pipeline::synth::{write_dataset, SynthConfig};
use fer_core::pipeline::{
    emit_report, evaluate, load_artifact, load_images, load_manifest, prepare, run_depth_sweep,
    run_dimension_sweep, save_artifact, save_model, select_peaks, split, sweep, Artifact,
    Classifier, ExperimentConfig, Manifest, ReportFormat, SweepReport,
};
use fer_core::svm::ova_train;
use fer_core::{Error, Result};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_DATA: i32 = 2;
pub const EXIT_NUMERICAL: i32 = 3;

#[derive(Debug, Parser)]
#[command(
    name = "fer",
    version,
    about = "HOG + sparse autoencoder + SVM expression recognition toolkit"
)]
struct Cli {
    /// Only print warnings and errors.
    #[arg(short, long, global = true)]
    quiet: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Args)]
struct Common {
    /// Experiment config file (flat `key = value`).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override a config key; repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    /// Experiment seed (overrides the config).
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads for feature extraction.
    #[arg(long)]
    threads: Option<usize>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum FormatArg {
    Csv,
    Json,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Subset {
    All,
    Train,
    Test,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Compute HOG features for the images of a manifest.
    ExtractHog {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        manifest: PathBuf,
        /// Which entries to use: all of them, or the peak frames of one side of the split.
        #[arg(long, value_enum, default_value = "all")]
        subset: Subset,
        #[arg(long)]
        out: PathBuf,
    },
    /// Pretrain and fine-tune a stacked autoencoder (`pipeline.dim`, `pipeline.depth`).
    TrainAe {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        features: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Fit PCA with `pipeline.dim` components.
    TrainPca {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        features: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Apply a trained reducer to a features file.
    Reduce {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        features: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train a one-vs-all SVM on a features file.
    TrainSvm {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        features: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Accuracy of a model bundle on a manifest; printed to standard output.
    Evaluate {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        manifest: PathBuf,
    },
    /// Accuracy against reduced dimension for PCA and every autoencoder depth.
    SweepDims {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Report format; defaults to the output extension.
        #[arg(long, value_enum)]
        format: Option<FormatArg>,
    },
    /// Autoencoder accuracy over the dimension × depth grid.
    SweepDepth {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_enum)]
        format: Option<FormatArg>,
    },
    /// Train the configured pipeline end to end and save the model bundle.
    Pipeline {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        manifest: PathBuf,
        /// Model bundle output.
        #[arg(long)]
        out: PathBuf,
        /// Optional one-row report.
        #[arg(long)]
        report: Option<PathBuf>,
        #[arg(long, value_enum)]
        format: Option<FormatArg>,
    },
    /// Write the synthetic oriented-texture dataset and its manifest.
    Synth {
        /// Output directory.
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 6)]
        classes: usize,
        #[arg(long, default_value_t = 10)]
        sequences: usize,
        #[arg(long, default_value_t = 6)]
        frames: usize,
        #[arg(long, default_value_t = 64)]
        size: usize,
        #[arg(long, default_value_t = 12.0)]
        noise: f64,
    },
}

impl Common {
    fn config(&self) -> Result<ExperimentConfig> {
        let mut cfg = match &self.config {
            Some(p) => ExperimentConfig::load(p)?,
            None => ExperimentConfig::default(),
        };
        cfg.apply_overrides(&self.overrides)?;
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

fn format_for(arg: Option<FormatArg>, path: &Path) -> ReportFormat {
    match arg {
        Some(FormatArg::Csv) => ReportFormat::Csv,
        Some(FormatArg::Json) => ReportFormat::Json,
        None => ReportFormat::from_path(path),
    }
}

fn features_of(path: &Path) -> Result<LabelledFeatures> {
    match load_artifact(path)? {
        Artifact::Features(f) => Ok(f),
        other => Err(Error::Model(format!(
            "{}: expected a features file, found {}",
            path.display(),
            other.kind()
        ))),
    }
}

fn sorted_labels(labels: &[String]) -> Vec<String> {
    let mut l = labels.to_vec();
    l.sort();
    l.dedup();
    l
}

fn subset(cfg: &ExperimentConfig, m: &Manifest, which: Subset) -> Result<Manifest> {
    Ok(match which {
        Subset::All => m.clone(),
        Subset::Train => select_peaks(
            &split(m, cfg.split_fraction, derive_seed(cfg.seed, &[1]))?.train,
            cfg.train_peaks,
        ),
        Subset::Test => select_peaks(
            &split(m, cfg.split_fraction, derive_seed(cfg.seed, &[1]))?.test,
            cfg.test_peaks,
        ),
    })
}

fn with_threads<T: Send>(threads: Option<usize>, f: impl FnOnce() -> T + Send) -> Result<T> {
    match threads {
        None => Ok(f()),
        Some(0) => Err(Error::Config("--threads must be >= 1".into())),
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
            Ok(pool.install(f))
        }
    }
}

fn write_report(r: &SweepReport, out: &Path, format: Option<FormatArg>) -> Result<()> {
    emit_report(r, out, format_for(format, out))?;
    log::info!("wrote {}", out.display());
    Ok(())
}

fn execute(command: Command) -> Result<()> {
    match command {
        Command::ExtractHog {
            common,
            manifest,
            subset: which,
            out,
        } => {
            let cfg = common.config()?;
            let m = subset(&cfg, &load_manifest(&manifest)?, which)?;
            if m.is_empty() {
                return Err(Error::InvalidArgument(
                    "selected subset has no entries".into(),
                ));
            }
            let images = load_images(&m, &cfg.image)?;
            let features = with_threads(common.threads, || hog_matrix(&images, &cfg.hog))??;
            log::info!("{} x {} HOG features", features.rows(), features.cols());
            save_artifact(
                &Artifact::Features(LabelledFeatures {
                    features,
                    labels: m.entries.iter().map(|e| e.label.clone()).collect(),
                    paths: m
                        .entries
                        .iter()
                        .map(|e| e.path.display().to_string())
                        .collect(),
                }),
                &out,
            )
        }
        Command::TrainAe {
            common,
            features,
            out,
        } => train_reducer(&common, ReducerKind::Autoencoder, &features, &out),
        Command::TrainPca {
            common,
            features,
            out,
        } => train_reducer(&common, ReducerKind::Pca, &features, &out),
        Command::Reduce {
            common: _,
            model,
            features,
            out,
        } => {
            let reducer = match load_artifact(&model)? {
                Artifact::Reducer(r) => r,
                Artifact::Bundle(b) => b.reducer,
                other => {
                    return Err(Error::Model(format!(
                        "{}: expected a reducer, found {}",
                        model.display(),
                        other.kind()
                    )))
                }
            };
            let f = features_of(&features)?;
            let reduced = reducer.reduce(&f.features)?;
            save_artifact(
                &Artifact::Features(LabelledFeatures {
                    features: reduced,
                    ..f
                }),
                &out,
            )
        }
        Command::TrainSvm {
            common,
            features,
            out,
        } => {
            let cfg = common.config()?;
            let f = features_of(&features)?;
            let class_names = sorted_labels(&f.labels);
            let y: Vec<usize> = f
                .labels
                .iter()
                .map(|l| {
                    class_names
                        .binary_search(l)
                        .expect("label from the same list")
                })
                .collect();
            let svm = ova_train(&f.features, &y, &cfg.svm, derive_seed(cfg.seed, &[4]))?;
            save_artifact(&Artifact::Classifier(Classifier { svm, class_names }), &out)
        }
        Command::Evaluate {
            common: _,
            model,
            manifest,
        } => {
            let bundle = fer_core::pipeline::load_model(&model)?;
            let m = load_manifest(&manifest)?;
            let e = evaluate(&bundle, &m)?;
            println!("accuracy {:.4} ({}/{})", e.accuracy, e.correct, e.total);
            Ok(())
        }
        Command::SweepDims {
            common,
            manifest,
            out,
            format,
        } => {
            let cfg = common.config()?;
            let m = load_manifest(&manifest)?;
            let r = with_threads(common.threads, || run_dimension_sweep(&cfg, &m))??;
            write_report(&r, &out, format)
        }
        Command::SweepDepth {
            common,
            manifest,
            out,
            format,
        } => {
            let cfg = common.config()?;
            let m = load_manifest(&manifest)?;
            let r = with_threads(common.threads, || run_depth_sweep(&cfg, &m))??;
            write_report(&r, &out, format)
        }
        Command::Pipeline {
            common,
            manifest,
            out,
            report,
            format,
        } => {
            let cfg = common.config()?;
            let m = load_manifest(&manifest)?;
            let prep = with_threads(common.threads, || prepare(&cfg, &m))??;
            let run = sweep::train_pipeline_prepared(&cfg, &prep)?;
            save_model(&run.bundle, &out)?;
            println!("accuracy {:.4}", run.accuracy);
            if let Some(path) = report {
                write_report(&run.report, &path, format)?;
            }
            Ok(())
        }
        Command::Synth {
            out,
            seed,
            classes,
            sequences,
            frames,
            size,
            noise,
        } => {
            let cfg = SynthConfig {
                classes,
                sequences_per_class: sequences,
                frames_per_sequence: frames,
                size,
                noise,
                seed,
            };
            std::fs::create_dir_all(&out).map_err(|e| Error::Io {
                path: out.clone(),
                source: e,
            })?;
            let m = write_dataset(&out, &cfg)?;
            log::info!(
                "wrote {} images and {}",
                m.len(),
                out.join("manifest.csv").display()
            );
            Ok(())
        }
    }
}

fn train_reducer(common: &Common, kind: ReducerKind, features: &Path, out: &Path) -> Result<()> {
    let mut cfg = common.config()?;
    cfg.method = kind;
    let f = features_of(features)?;
    let reducer = with_threads(common.threads, || fit_reducer(&cfg, &f.features))??;
    save_artifact(&Artifact::Reducer(reducer), out)
}

/// Parses `argv` (including the program name) and runs the command.
pub fn run<I, S>(argv: I) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    let level = if cli.quiet { "warn" } else { "info" };
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .format_timestamp(None)
        .try_init();
    match execute(cli.command) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_numerical() {
                EXIT_NUMERICAL
            } else {
                EXIT_DATA
            }
        }
    }
}
