use std::path::Path;
use std::process::{Command, Output};

fn lrp(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_lrp"))
        .args(args)
        .env("RUST_LOG", "off")
        .output()
        .unwrap()
}

fn code(args: &[&str]) -> i32 {
    lrp(args).status.code().unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn synthetic_workflow_succeeds() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    assert_eq!(
        code(&[
            "synth",
            "--n",
            "60",
            "--shape",
            "6x12",
            "--seed",
            "2",
            "--out",
            s(&data)
        ]),
        0
    );
    let manifest = data.join("manifest.csv");
    let m = s(&manifest);
    let report = dir.path().join("thr");
    let out = lrp(&[
        "detect",
        "--manifest",
        m,
        "--l-new",
        "20",
        "--out",
        s(&report),
    ]);
    assert_eq!(out.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&out.stdout).contains("pooled"));
    assert!(dir.path().join("thr.csv").exists() && dir.path().join("thr.txt").exists());

    let sweep = dir.path().join("sweep.csv");
    assert_eq!(code(&["sweep", "--manifest", m, "--out", s(&sweep)]), 0);
    assert_eq!(
        std::fs::read_to_string(&sweep).unwrap().lines().count(),
        102
    );

    let utest = dir.path().join("u.csv");
    assert_eq!(
        code(&[
            "utest",
            "--manifest",
            m,
            "--n",
            "20",
            "--iters",
            "10",
            "--out",
            s(&utest)
        ]),
        0
    );
    assert_eq!(std::fs::read_to_string(&utest).unwrap().lines().count(), 3);

    for kind in ["box", "line", "heatmap"] {
        let fig = dir.path().join(format!("{kind}.csv"));
        assert_eq!(
            code(&[
                "figures",
                "--manifest",
                m,
                "--kind",
                kind,
                "--heatmap-shape",
                "4x6",
                "--out",
                s(&fig)
            ]),
            0
        );
        assert!(std::fs::metadata(&fig).unwrap().len() > 0);
    }
}

#[test]
fn partial_relevance_run_exits_with_one() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = dir.path().join("c.jsonl");
    let long = "z".repeat(80);
    std::fs::write(
        &corpus,
        format!(
            "{}\n{}\n",
            r#"{"id":"ok","context":"ab","question":"q","template":"{C}|{Q}","response":"yes","label":false}"#,
            format_args!(r#"{{"id":"big","context":"{long}","question":"q","template":"{{C}}|{{Q}}","response":"no","label":true}}"#),
        ),
    )
    .unwrap();
    let params = dir.path().join("model.bin");
    let small = [
        "--layers",
        "1",
        "--heads",
        "1",
        "--d-model",
        "8",
        "--d-ff",
        "16",
        "--max-seq-len",
        "32",
    ];
    let mut init = vec!["init-params", "--out", s(&params)];
    init.extend(small);
    assert_eq!(code(&init), 0);

    let out = dir.path().join("rel");
    assert_eq!(
        code(&[
            "relevance",
            "--corpus",
            s(&corpus),
            "--params",
            s(&params),
            "--out",
            s(&out)
        ]),
        1
    );
    let manifest = std::fs::read_to_string(out.join("manifest.csv")).unwrap();
    assert_eq!(manifest.lines().count(), 2);
    assert!(manifest.lines().nth(1).unwrap().starts_with("ok,"));
}

#[test]
fn matrix_conversion_roundtrips() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("m.csv");
    std::fs::write(&csv, "0.5,-1,2\n0,0.25,3\n").unwrap();
    let bin = dir.path().join("m.lrpm");
    assert_eq!(
        code(&["export-matrix", "--input", s(&csv), "--out", s(&bin)]),
        0
    );
    let out = lrp(&["import-matrix", "--input", s(&bin)]);
    assert_eq!(out.status.code(), Some(0));
    assert_eq!(String::from_utf8_lossy(&out.stdout), "0.5,-1,2\n0,0.25,3\n");
}

#[test]
fn usage_and_input_errors_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(code(&["--help"]), 0);
    assert_eq!(code(&["detect"]), 2);
    assert_eq!(
        code(&[
            "detect",
            "--manifest",
            "x.csv",
            "--method",
            "tree",
            "--out",
            "r"
        ]),
        2
    );
    let missing = dir.path().join("none.jsonl");
    assert_eq!(
        code(&["relevance", "--corpus", s(&missing), "--out", s(dir.path())]),
        2
    );
    let ragged = dir.path().join("r.csv");
    std::fs::write(&ragged, "1,2\n3\n").unwrap();
    assert_eq!(
        code(&[
            "export-matrix",
            "--input",
            s(&ragged),
            "--out",
            s(&dir.path().join("r.lrpm"))
        ]),
        2
    );
}
