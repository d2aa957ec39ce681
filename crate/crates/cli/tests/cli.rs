use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use lesiondet::candidates::CandidateReport;
use lesiondet::volume::mha::encode_mha;
use lesiondet::{
    extract_candidates, read_mha, write_mha, ExtractionParams, Geometry, ProbabilityMap,
};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_lesiondet"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("spawn lesiondet")
}

fn fixtures() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/tests/fixtures")
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn sample_map(dir: &Path) -> (PathBuf, ProbabilityMap) {
    let g = Geometry::new([9, 7, 5], [0.8, 0.8, 2.5], [-3.0, 4.0, 10.0]).unwrap();
    let values: Vec<f32> = (0..g.num_voxels())
        .map(|i| {
            let c = g.voxel_index(i);
            let d1 = (c[0] as f32 - 2.0).powi(2)
                + (c[1] as f32 - 2.0).powi(2)
                + (c[2] as f32 - 2.0).powi(2);
            let d2 = (c[0] as f32 - 7.0).powi(2)
                + (c[1] as f32 - 5.0).powi(2)
                + (c[2] as f32 - 1.0).powi(2);
            (0.9 * (-d1 / 3.0).exp()).max(0.6 * (-d2 / 2.0).exp())
        })
        .collect();
    let map = ProbabilityMap::from_values(g, values).unwrap();
    let path = dir.join("case7.mha");
    write_mha(map.volume(), &path).unwrap();
    (path, map)
}

#[test]
fn no_arguments_is_a_usage_error() {
    let out = run(&[]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("Usage"));
    assert_eq!(run(&["--help"]).status.code(), Some(0));
    assert_eq!(run(&["extract", "--bogus"]).status.code(), Some(1));
}

#[test]
fn extract_equals_library_call() {
    let dir = tempfile::tempdir().unwrap();
    let (prob, map) = sample_map(dir.path());
    let det = dir.path().join("det.mha");
    let json = dir.path().join("cand.json");
    let out = run(&[
        "extract",
        "--prob",
        s(&prob),
        "--alpha",
        "0.066667",
        "--out-det",
        s(&det),
        "--out-json",
        s(&json),
        "--min-voxels",
        "1",
    ]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );

    let params = ExtractionParams {
        min_voxels: 1,
        ..ExtractionParams::adaptive(0.066667)
    };
    let lib = extract_candidates(&map, &params).unwrap();
    assert_eq!(
        std::fs::read(&det).unwrap(),
        encode_mha(lib.detection_map.volume())
    );
    let report: CandidateReport = serde_json::from_slice(&std::fs::read(&json).unwrap()).unwrap();
    assert_eq!(report, CandidateReport::new("case7", params, &lib));
    assert!(report.candidates.len() >= 2);

    let score = run(&["score", "--det", s(&det)]);
    assert!(score.status.success());
    assert_eq!(
        String::from_utf8_lossy(&score.stdout).trim(),
        lib.detection_map.max().to_string()
    );
}

#[test]
fn invalid_flags_write_nothing() {
    let dir = tempfile::tempdir().unwrap();
    let (prob, _) = sample_map(dir.path());
    let det = dir.path().join("det.mha");
    let out = run(&[
        "extract",
        "--prob",
        s(&prob),
        "--alpha",
        "1.5",
        "--out-det",
        s(&det),
    ]);
    assert_eq!(out.status.code(), Some(1));
    assert!(!det.exists());
    let both = run(&[
        "extract",
        "--prob",
        s(&prob),
        "--alpha",
        "0.1",
        "--tau",
        "0.4",
        "--out-det",
        s(&det),
    ]);
    assert_eq!(both.status.code(), Some(1));
    let bad_margin = run(&[
        "crop",
        "--mask",
        "m",
        "--image",
        "i",
        "--margin",
        "1,2",
        "--out",
        "o",
        "--out-box",
        "b",
    ]);
    assert_eq!(bad_margin.status.code(), Some(1));
}

#[test]
fn data_errors_exit_two_without_output() {
    let dir = tempfile::tempdir().unwrap();
    let det = dir.path().join("det.mha");
    let missing = run(&[
        "extract",
        "--prob",
        "/nonexistent.mha",
        "--tau",
        "0.4",
        "--out-det",
        s(&det),
    ]);
    assert_eq!(missing.status.code(), Some(2));
    assert!(!det.exists());

    let garbage = dir.path().join("garbage.mha");
    std::fs::write(&garbage, b"ObjectType = Image\nCompressedData = True\n").unwrap();
    let out = run(&["score", "--det", s(&garbage)]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("unsupported: compressed data"));
}

#[test]
fn crop_then_uncrop_restores_box_contents() {
    let dir = tempfile::tempdir().unwrap();
    let case = fixtures().join("pipeline/case01");
    let (img, bx, back) = (
        dir.path().join("img.mha"),
        dir.path().join("box.json"),
        dir.path().join("back.mha"),
    );
    let out = run(&[
        "crop",
        "--mask",
        s(&case.join("mask.mha")),
        "--image",
        s(&case.join("image.mha")),
        "--margin",
        "6,6,6",
        "--out",
        s(&img),
        "--out-box",
        s(&bx),
    ]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    assert!(run(&[
        "uncrop",
        "--det",
        s(&img),
        "--box",
        s(&bx),
        "--out",
        s(&back)
    ])
    .status
    .success());
    let full = read_mha(case.join("image.mha")).unwrap();
    let restored = read_mha(&back).unwrap();
    let cropped = read_mha(&img).unwrap();
    assert_eq!(restored.geometry(), full.geometry());
    let g = full.geometry();
    let nonzero_inside = (0..g.num_voxels())
        .filter(|&i| restored.data().get_f64(i) != 0.0)
        .all(|i| restored.data().get_f64(i) == full.data().get_f64(i));
    assert!(nonzero_inside);
    assert!(cropped.len() < full.len());
}

/// Runs the fixture pipeline through the binary and returns the eval
/// report and sweep CSV bytes.
fn pipeline(work: &Path, threads: &str) -> (Vec<u8>, Vec<u8>) {
    let root = fixtures().join("pipeline");
    let index = std::fs::read_to_string(root.join("cases.csv")).unwrap();
    let mut manifest = Vec::new();
    let mut folds: std::collections::BTreeMap<String, Vec<serde_json::Value>> = Default::default();
    let alpha = (1.0f64 / 15.0).to_string();
    for line in index.lines().skip(1) {
        let f: Vec<&str> = line.split(',').collect();
        let (id, label, fold) = (f[0], f[1], f[2]);
        let dir = root.join(id);
        let p = |name: &str| work.join(format!("{id}_{name}"));
        let steps: [Vec<String>; 5] = [
            vec![
                "crop".into(),
                "--mask".into(),
                s(&dir.join("mask.mha")).into(),
                "--image".into(),
                s(&dir.join("image.mha")).into(),
                "--margin".into(),
                "6,6,6".into(),
                "--out".into(),
                s(&p("img.mha")).into(),
                "--out-box".into(),
                s(&p("box.json")).into(),
            ],
            vec![
                "ensemble".into(),
                "--out".into(),
                s(&p("prob.mha")).into(),
                s(&dir.join("model_a.mha")).into(),
                s(&dir.join("model_b.mha")).into(),
            ],
            vec![
                "extract".into(),
                "--prob".into(),
                s(&p("prob.mha")).into(),
                "--alpha".into(),
                alpha.clone(),
                "--out-det".into(),
                s(&p("det.mha")).into(),
            ],
            vec![
                "uncrop".into(),
                "--det".into(),
                s(&p("det.mha")).into(),
                "--box".into(),
                s(&p("box.json")).into(),
                "--out".into(),
                s(&p("fulldet.mha")).into(),
            ],
            vec![
                "uncrop".into(),
                "--det".into(),
                s(&p("prob.mha")).into(),
                "--box".into(),
                s(&p("box.json")).into(),
                "--out".into(),
                s(&p("fullprob.mha")).into(),
            ],
        ];
        for step in &steps {
            let out = bin()
                .args(["--quiet", "--threads", threads])
                .args(step)
                .output()
                .unwrap();
            assert!(
                out.status.success(),
                "{step:?}: {}",
                String::from_utf8_lossy(&out.stderr)
            );
        }
        let gt = s(&dir.join("gt.mha")).to_string();
        manifest.push(serde_json::json!({"case_id": id, "label": label, "detection": s(&p("fulldet.mha")), "gt": gt}));
        folds.entry(fold.to_string()).or_default().push(
            serde_json::json!({"case_id": id, "label": label, "probability": s(&p("fullprob.mha")), "gt": gt}),
        );
    }
    let manifest_path = work.join("manifest.json");
    std::fs::write(&manifest_path, serde_json::to_string(&manifest).unwrap()).unwrap();
    let mut fold_paths = serde_json::Map::new();
    for (fold, entries) in &folds {
        let p = work.join(format!("fold{fold}.json"));
        std::fs::write(&p, serde_json::to_string(entries).unwrap()).unwrap();
        fold_paths.insert(fold.clone(), s(&p).into());
    }
    let config = work.join("sweep.json");
    std::fs::write(
        &config,
        serde_json::json!({"folds": fold_paths}).to_string(),
    )
    .unwrap();

    let report = work.join("report.json");
    let csv = work.join("sweep.csv");
    let svg = work.join("sweep.svg");
    let eval = run(&[
        "--threads",
        threads,
        "eval",
        "--manifest",
        s(&manifest_path),
        "--out",
        s(&report),
        "--per-case",
        s(&work.join("per_case.csv")),
    ]);
    assert!(
        eval.status.success(),
        "{}",
        String::from_utf8_lossy(&eval.stderr)
    );
    let sweep = run(&[
        "--threads",
        threads,
        "sweep",
        "--config",
        s(&config),
        "--out-csv",
        s(&csv),
        "--out-svg",
        s(&svg),
    ]);
    assert!(
        sweep.status.success(),
        "{}",
        String::from_utf8_lossy(&sweep.stderr)
    );
    let svg_text = std::fs::read_to_string(&svg).unwrap();
    assert_eq!(svg_text.matches("<polyline").count(), 2 * folds.len());
    (
        std::fs::read(&report).unwrap(),
        std::fs::read(&csv).unwrap(),
    )
}

#[test]
fn pipeline_matches_goldens_for_any_thread_count() {
    let expected = fixtures().join("pipeline/expected");
    let one = tempfile::tempdir().unwrap();
    let four = tempfile::tempdir().unwrap();
    let (report1, csv1) = pipeline(one.path(), "1");
    let (report4, csv4) = pipeline(four.path(), "4");
    assert_eq!(report1, report4);
    assert_eq!(csv1, csv4);
    assert_eq!(
        report1,
        std::fs::read(expected.join("report.json")).unwrap()
    );
    assert_eq!(csv1, std::fs::read(expected.join("sweep.csv")).unwrap());
    assert_eq!(
        std::fs::read(one.path().join("per_case.csv")).unwrap(),
        std::fs::read(expected.join("per_case.csv")).unwrap()
    );
}

#[test]
fn split_matches_golden() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("split.json");
    let res = run(&[
        "-q",
        "split",
        "--cases",
        s(&fixtures().join("split/cases.csv")),
        "--out",
        s(&out),
    ]);
    assert!(
        res.status.success(),
        "{}",
        String::from_utf8_lossy(&res.stderr)
    );
    assert_eq!(
        std::fs::read(&out).unwrap(),
        std::fs::read(fixtures().join("split/expected_k5_seed42.json")).unwrap()
    );
    assert_eq!(
        run(&[
            "split",
            "--cases",
            "x.csv",
            "--folds",
            "1",
            "--out",
            s(&out)
        ])
        .status
        .code(),
        Some(1)
    );
}
