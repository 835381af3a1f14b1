use lrp_core::classifiers::{LstmConfig, MlpConfig};
use lrp_core::lrp::RelevanceMatrix;
use lrp_core::stats::FeatureSource;
use lrp_core::Matrix;
use lrp_pipeline::dataset::{write_dataset, LabeledMatrix};
use lrp_pipeline::detect::{run_detect, run_sweep, DetectOptions, Method};
use lrp_pipeline::figures::{figure_csv, FigureKind, FigureOptions};
use lrp_pipeline::synth::{synth_corpus, SynthSpec};
use lrp_pipeline::utest::{run_utest, UtestOptions};
use sha2::{Digest, Sha256};

fn separated(seed: u64) -> Vec<LabeledMatrix> {
    synth_corpus(&SynthSpec {
        seed,
        ..Default::default()
    })
    .unwrap()
}

fn constant_corpus(n: usize, hallucinated: usize) -> Vec<LabeledMatrix> {
    (0..n)
        .map(|i| LabeledMatrix {
            id: format!("c{i}"),
            matrix: RelevanceMatrix::new(Matrix::filled(5, 7, 0.3)).unwrap(),
            label: i % (n / hallucinated) == 0 && i / (n / hallucinated) < hallucinated,
        })
        .collect()
}

fn csv_rows(csv: &str) -> Vec<Vec<String>> {
    csv.lines()
        .skip(1)
        .map(|l| l.split(',').map(str::to_owned).collect())
        .collect()
}

#[test]
fn synthetic_dataset_files_are_reproducible() {
    let spec = SynthSpec {
        n_samples: 20,
        ..Default::default()
    };
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    write_dataset(a.path(), &synth_corpus(&spec).unwrap()).unwrap();
    write_dataset(b.path(), &synth_corpus(&spec).unwrap()).unwrap();
    let digest = |dir: &std::path::Path| {
        let mut names: Vec<_> = std::fs::read_dir(dir)
            .unwrap()
            .map(|e| e.unwrap().path())
            .collect();
        names.sort();
        let mut h = Sha256::new();
        for p in names {
            h.update(p.file_name().unwrap().to_string_lossy().as_bytes());
            h.update(std::fs::read(p).unwrap());
        }
        h.finalize()
    };
    assert_eq!(digest(a.path()), digest(b.path()));
}

#[test]
fn threshold_detector_separates_shifted_classes() {
    let report = run_detect(&separated(1), &DetectOptions::default()).unwrap();
    assert!(report.cv.pooled.f1 > 0.9, "{}", report.to_text());
    assert_eq!(report.cv.pooled.total(), 500);
    let csv = report.to_csv();
    assert_eq!(csv.lines().count(), 1 + 5 + 1);
    assert!(csv.lines().last().unwrap().starts_with("pooled,500,"));
}

#[test]
fn uninformative_features_give_the_majority_rate() {
    let items = constant_corpus(50, 10);
    assert_eq!(items.iter().filter(|s| s.label).count(), 10);
    let methods = [
        DetectOptions {
            method: Method::Threshold,
            ..Default::default()
        },
        DetectOptions {
            method: Method::Svm,
            ..Default::default()
        },
        DetectOptions {
            method: Method::Mlp,
            mlp: MlpConfig {
                hidden: 4,
                epochs: 200,
                lr: 0.5,
            },
            ..Default::default()
        },
        DetectOptions {
            method: Method::Lstm,
            star_shape: (3, 4),
            lstm: LstmConfig {
                hidden: 4,
                layers: 1,
                epochs: 20,
                lr: 0.05,
                ..Default::default()
            },
            ..Default::default()
        },
    ];
    for options in &methods {
        let report = run_detect(&items, options).unwrap();
        assert_eq!(report.cv.pooled.accuracy, 0.8, "{}", report.to_text());
        assert_eq!(report.cv.pooled.tp + report.cv.pooled.fp, 0);
    }
}

#[test]
fn test_fold_labels_do_not_reach_the_model() {
    let mut items = synth_corpus(&SynthSpec {
        n_samples: 60,
        delta: 0.02,
        ..Default::default()
    })
    .unwrap();
    let options = DetectOptions {
        method: Method::Svm,
        l_new: 20,
        ..Default::default()
    };
    let before = run_detect(&items, &options).unwrap();
    let fold = &before.cv.folds[0];
    for &i in &fold.test_indices {
        items[i].label = !items[i].label;
    }
    let after = run_detect(&items, &options).unwrap();
    assert_eq!(after.cv.folds[0].test_indices, fold.test_indices);
    assert_eq!(after.cv.folds[0].predictions, fold.predictions);
    // Other folds trained on the flipped labels and may change.
    assert_ne!(after.cv.folds[1..], before.cv.folds[1..]);
}

#[test]
fn utest_detects_a_three_sigma_shift() {
    let report = run_utest(
        &separated(2),
        &UtestOptions {
            seed: 3,
            ..Default::default()
        },
    )
    .unwrap();
    assert_eq!(report.rows.len(), 2);
    for row in &report.rows {
        assert!(row.median_p < 0.05, "{row:?}");
        assert!(row.mean_hallucinated < row.mean_normal);
    }
    let again = run_utest(
        &separated(2),
        &UtestOptions {
            seed: 3,
            ..Default::default()
        },
    )
    .unwrap();
    assert_eq!(report, again);
}

#[test]
fn utest_is_calibrated_without_a_shift() {
    let accepted = (0..20)
        .filter(|&seed| {
            let items = synth_corpus(&SynthSpec {
                delta: 0.0,
                seed,
                ..Default::default()
            })
            .unwrap();
            let options = UtestOptions {
                seed,
                statistics: vec![FeatureSource::Response],
                ..Default::default()
            };
            run_utest(&items, &options).unwrap().rows[0].median_p > 0.05
        })
        .count();
    assert!(accepted >= 16, "{accepted}/20");
}

#[test]
fn utest_requires_enough_samples_per_class() {
    let items = synth_corpus(&SynthSpec {
        n_samples: 100,
        ..Default::default()
    })
    .unwrap();
    assert!(run_utest(&items, &UtestOptions::default()).is_err());
}

#[test]
fn sweep_auc_tracks_the_shift() {
    let grid = Default::default();
    let strong = run_sweep(&separated(4), FeatureSource::Response, 100, &grid).unwrap();
    assert!(strong.auc > 0.95, "{}", strong.auc);
    assert_eq!(strong.rows.len(), 101);
    let none = synth_corpus(&SynthSpec {
        delta: 0.0,
        seed: 4,
        ..Default::default()
    })
    .unwrap();
    let flat = run_sweep(&none, FeatureSource::Response, 100, &grid).unwrap();
    assert!((flat.auc - 0.5).abs() < 0.1, "{}", flat.auc);
}

#[test]
fn box_plot_of_single_samples_is_degenerate() {
    let items = synth_corpus(&SynthSpec {
        n_samples: 2,
        ..Default::default()
    })
    .unwrap();
    let rows = csv_rows(&figure_csv(FigureKind::Box, &items, &FigureOptions::default()).unwrap());
    assert_eq!(rows.len(), 4);
    for r in &rows {
        assert_eq!(r[2], "1");
        assert_eq!(r[3], r[5]);
        assert_eq!(r[5], r[7]);
    }
}

#[test]
fn line_figure_has_one_row_per_position_and_class() {
    let items = synth_corpus(&SynthSpec {
        n_samples: 10,
        shape: (7, 30),
        ..Default::default()
    })
    .unwrap();
    let rows = csv_rows(&figure_csv(FigureKind::Line, &items, &FigureOptions::default()).unwrap());
    for class in ["hallucinated", "normal"] {
        let positions: Vec<usize> = rows
            .iter()
            .filter(|r| r[1] == class)
            .map(|r| r[0].parse().unwrap())
            .collect();
        assert_eq!(positions, (0..100).collect::<Vec<_>>());
    }
}

#[test]
fn heatmap_shows_the_shift_cellwise() {
    let options = FigureOptions {
        heatmap_shape: (10, 20),
        ..Default::default()
    };
    let rows = csv_rows(&figure_csv(FigureKind::Heatmap, &separated(5), &options).unwrap());
    assert_eq!(rows.len(), 2 * 200);
    let value = |class: &str| -> Vec<f64> {
        rows.iter()
            .filter(|r| r[0] == class)
            .map(|r| r[3].parse().unwrap())
            .collect()
    };
    let (h, n) = (value("hallucinated"), value("normal"));
    let lower = h.iter().zip(&n).filter(|(a, b)| a < b).count();
    assert!(lower as f64 >= 0.95 * 200.0, "{lower}");
}
