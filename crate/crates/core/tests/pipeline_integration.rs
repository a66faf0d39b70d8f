use std::collections::HashSet;
use std::sync::OnceLock;

use fer_core::pipeline::model_io::Container;
use fer_core::pipeline::synth::{write_dataset, SynthConfig, CLASS_NAMES};
use fer_core::pipeline::{
    evaluate, load_artifact, load_manifest, load_model, prepare, run_depth_sweep,
    run_dimension_sweep, save_model, split, train_pipeline, Artifact, ExperimentConfig, Manifest,
    ManifestEntry, Method, ReducerKind,
};

struct Fixture {
    _dir: tempfile::TempDir,
    manifest: Manifest,
}

fn fixture() -> &'static Fixture {
    static F: OnceLock<Fixture> = OnceLock::new();
    F.get_or_init(|| {
        let dir = tempfile::tempdir().unwrap();
        let synth = SynthConfig {
            sequences_per_class: 5,
            size: 64,
            seed: 11,
            ..SynthConfig::default()
        };
        write_dataset(dir.path(), &synth).unwrap();
        let manifest = load_manifest(&dir.path().join("manifest.csv")).unwrap();
        Fixture {
            _dir: dir,
            manifest,
        }
    })
}

fn small_config() -> ExperimentConfig {
    let mut cfg = ExperimentConfig::default();
    for (k, v) in [
        ("seed", "3"),
        ("image.width", "64"),
        ("image.height", "64"),
        ("dims", "5, 10"),
        ("depths", "1, 2"),
        ("depth_widths", "200, 100, 50, 25"),
        ("ae.epochs", "100"),
        ("ae.finetune_epochs", "100"),
        ("pipeline.dim", "10"),
        ("pipeline.depth", "2"),
    ] {
        cfg.set(k, v).unwrap();
    }
    cfg
}

#[test]
fn split_never_leaks_sequences() {
    let m = &fixture().manifest;
    for seed in 0..10 {
        let s = split(m, 0.8, seed).unwrap();
        let train: HashSet<_> = s.train.entries.iter().map(|e| &e.sequence_id).collect();
        let test: HashSet<_> = s.test.entries.iter().map(|e| &e.sequence_id).collect();
        assert!(train.is_disjoint(&test));
        assert_eq!(train.len() + test.len(), 6 * 5);
        assert_eq!(test.len(), 6, "one test sequence per label at 5 sequences");
        assert_eq!(s.train, split(m, 0.8, seed).unwrap().train);
    }
}

#[test]
fn prepared_data_uses_peak_frames() {
    let cfg = small_config();
    let p = prepare(&cfg, &fixture().manifest).unwrap();
    let mut names: Vec<String> = CLASS_NAMES.iter().map(|s| s.to_string()).collect();
    names.sort();
    assert_eq!(p.class_names, names);
    assert_eq!(p.train.len(), 6 * 4 * 5);
    assert_eq!(p.test.len(), 6);
    assert!(p.test.entries.iter().all(|e| e.frame_index == 5));
    assert!(p.train.entries.iter().all(|e| e.frame_index >= 1));
    assert_eq!(p.train_x.rows(), p.train_y.len());
    assert_eq!(p.test_x.cols(), cfg.hog.descriptor_len(64, 64).unwrap());
}

#[test]
fn sweeps_cover_the_grid_and_beat_chance() {
    let cfg = small_config();
    let m = &fixture().manifest;
    let dims = run_dimension_sweep(&cfg, m).unwrap();
    assert_eq!(
        dims.rows.len(),
        cfg.dims.len() * (1 + cfg.depths.len()) + cfg.dims.len()
    );
    for &dim in &cfg.dims {
        let pca = dims.find(Method::Pca, dim, None).unwrap();
        assert!(pca.accuracy > 1.0 / 6.0, "PCA dim {dim}: {}", pca.accuracy);
        let best = dims
            .rows
            .iter()
            .find(|r| r.method == Method::AutoencoderBest && r.dim == dim)
            .unwrap();
        assert!(best.accuracy > 1.0 / 6.0, "AE dim {dim}: {}", best.accuracy);
        let per_depth: Vec<f64> = cfg
            .depths
            .iter()
            .map(|&d| {
                dims.find(Method::Autoencoder, dim, Some(d))
                    .unwrap()
                    .accuracy
            })
            .collect();
        assert_eq!(
            best.accuracy,
            per_depth.iter().copied().fold(f64::MIN, f64::max)
        );
    }
    assert_eq!(
        dims.metadata.config.get("seed").map(String::as_str),
        Some("3")
    );
    assert_eq!(dims.metadata.config_hash, cfg.hash());

    let depth = run_depth_sweep(&cfg, m).unwrap();
    assert_eq!(depth.rows.len(), cfg.dims.len() * cfg.depths.len());
    for &dim in &cfg.dims {
        for &d in &cfg.depths {
            let a = depth
                .find(Method::Autoencoder, dim, Some(d))
                .unwrap()
                .accuracy;
            let b = dims
                .find(Method::Autoencoder, dim, Some(d))
                .unwrap()
                .accuracy;
            assert_eq!(a, b, "dim {dim} depth {d}");
        }
    }
}

#[test]
fn trained_model_round_trips_and_fits_its_training_frames() {
    let m = &fixture().manifest;
    for method in [
        ReducerKind::Autoencoder,
        ReducerKind::Pca,
        ReducerKind::Identity,
    ] {
        let mut cfg = small_config();
        cfg.method = method;
        // A closer fit than the sweeps need.
        cfg.ae.epochs = 400;
        cfg.finetune_epochs = 400;
        let run = train_pipeline(&cfg, m).unwrap();
        let prep = prepare(&cfg, m).unwrap();
        let own = evaluate(&run.bundle, &prep.train).unwrap();
        assert!(
            own.accuracy >= 0.99,
            "{method:?} on its training frames: {}",
            own.accuracy
        );

        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.ferm");
        save_model(&run.bundle, &path).unwrap();
        let back = load_model(&path).unwrap();
        assert_eq!(
            evaluate(&back, &prep.test).unwrap(),
            evaluate(&run.bundle, &prep.test).unwrap()
        );
        let bytes = std::fs::read(&path).unwrap();
        assert_eq!(
            Artifact::Bundle(Box::new(back)).to_container().to_bytes(),
            bytes
        );
        assert!(matches!(load_artifact(&path).unwrap(), Artifact::Bundle(_)));
        assert_eq!(Container::from_bytes(&bytes).unwrap().to_bytes(), bytes);
    }
}

#[test]
fn evaluation_counts_wrong_labels() {
    let mut cfg = small_config();
    cfg.method = ReducerKind::Pca;
    let m = &fixture().manifest;
    let run = train_pipeline(&cfg, m).unwrap();
    let prep = prepare(&cfg, m).unwrap();
    let names = &prep.class_names;
    let relabelled = Manifest::new(
        prep.test
            .entries
            .iter()
            .map(|e| {
                let i = names.iter().position(|n| n == &e.label).unwrap();
                ManifestEntry {
                    label: names[(i + 1) % names.len()].clone(),
                    ..e.clone()
                }
            })
            .collect(),
    )
    .unwrap();
    let right = evaluate(&run.bundle, &prep.test).unwrap();
    let wrong = evaluate(&run.bundle, &relabelled).unwrap();
    assert_eq!(right.accuracy, 1.0);
    assert_eq!(
        (wrong.accuracy, wrong.correct, wrong.total),
        (0.0, 0, prep.test.len())
    );

    let stranger = Manifest::new(vec![ManifestEntry {
        label: "contempt".into(),
        ..prep.test.entries[0].clone()
    }])
    .unwrap();
    let e = evaluate(&run.bundle, &stranger).unwrap();
    assert_eq!(e.accuracy, 0.0);
    assert_eq!(e.warnings.len(), 1);
}

#[test]
fn missing_image_aborts_with_its_path() {
    let m = &fixture().manifest;
    let mut entries = m.entries.clone();
    let peak = entries.iter().position(|e| e.frame_index == 5).unwrap();
    entries[peak].path = "/definitely/not/here.pgm".into();
    let broken = Manifest::new(entries).unwrap();
    let err = run_dimension_sweep(&small_config(), &broken).unwrap_err();
    assert!(
        err.to_string().contains("/definitely/not/here.pgm"),
        "{err}"
    );
}
