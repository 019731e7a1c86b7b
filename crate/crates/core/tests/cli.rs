use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use cutremain::dataset::{
    build_small_subset, parse_csv, ImageSize, ManifestDocument, Split, SubsetParams,
};
use cutremain::ImageTensor;
use serde_json::Value;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_cutremain"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn ok_json(args: &[&str]) -> Value {
    let out = run(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    serde_json::from_slice(&out.stdout).expect("json report")
}

fn failure(args: &[&str]) -> Value {
    let out = run(args);
    assert!(!out.status.success(), "{args:?} unexpectedly succeeded");
    let stderr = String::from_utf8(out.stderr).unwrap();
    assert_eq!(stderr.trim_end().lines().count(), 1, "{stderr}");
    serde_json::from_str(stderr.trim_end()).expect("json error line")
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// `n` 24x20 grayscale PNGs with one or two boxes each, plus a CSV index.
fn fixture(dir: &Path, n: usize) -> (PathBuf, PathBuf) {
    let images = dir.join("images");
    std::fs::create_dir_all(&images).unwrap();
    let mut csv = String::from("path,label,cx,cy,w,h\n");
    for i in 0..n {
        let values: Vec<f32> = (0..24 * 20)
            .map(|p| ((p * 7 + i * 11) % 256) as f32 / 255.0)
            .collect();
        ImageTensor::new(24, 20, 1, values)
            .unwrap()
            .save_png(images.join(format!("img{i}.png")), false)
            .unwrap();
        let label = if i % 2 == 0 { "normal" } else { "lesion" };
        csv.push_str(&format!("img{i}.png,{label},{},10,4,3\n", 6 + i % 10));
        if i % 3 == 0 {
            csv.push_str(&format!("img{i}.png,{label},18,5,2,2\n"));
        }
    }
    let csv_path = dir.join("boxes.csv");
    std::fs::write(&csv_path, csv).unwrap();
    (images, csv_path)
}

fn ingest(dir: &Path, n: usize) -> (PathBuf, PathBuf) {
    let (images, csv) = fixture(dir, n);
    let out = dir.join("ingest");
    ok_json(&[
        "ingest",
        "--csv",
        s(&csv),
        "--images",
        s(&images),
        "--out",
        s(&out),
    ]);
    (images, out.join("manifest.json"))
}

#[test]
fn ingest_csv_merges_rows() {
    let dir = tempfile::tempdir().unwrap();
    let (images, csv) = fixture(dir.path(), 6);
    let out = dir.path().join("m");
    let report = ok_json(&[
        "ingest",
        "--csv",
        s(&csv),
        "--images",
        s(&images),
        "--out",
        s(&out),
    ]);
    let oracle = parse_csv(
        &std::fs::read_to_string(&csv).unwrap(),
        Split::Train,
        |_| Ok(ImageSize::new(24, 20, 1)),
    )
    .unwrap();
    assert_eq!(report["result"]["images"], 6);
    assert_eq!(report["result"]["boxes"], oracle.box_count());
    assert_eq!(report["result"]["boxes"], 8);
    assert_eq!(report["result"]["classes"], 2);
    let doc = ManifestDocument::read(&out.join("manifest.json")).unwrap();
    assert_eq!(doc.manifest, oracle);
    assert!(out.join("config.json").exists());
    assert!(out.join("report.json").exists());
}

#[test]
fn ingest_split_halves() {
    let dir = tempfile::tempdir().unwrap();
    let (images, csv) = fixture(dir.path(), 3);
    let report = ok_json(&[
        "ingest",
        "--csv",
        s(&csv),
        "--images",
        s(&images),
        "--split-halves",
        "--empty-half",
        "negative",
    ]);
    assert_eq!(report["result"]["images"], 6);
}

#[test]
fn ingest_malformed_coco_names_byte_offset() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.json");
    std::fs::write(&path, "{\"images\": [}").unwrap();
    let err = failure(&["ingest", "--coco", s(&path)]);
    assert_eq!(err["error"]["kind"], "parse");
    assert!(
        err["error"]["message"]
            .as_str()
            .unwrap()
            .contains("byte 12"),
        "{err}"
    );
}

#[test]
fn ingest_coco() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("coco.json");
    std::fs::write(
        &path,
        r#"{"images":[{"id":1,"file_name":"a.png","width":100,"height":50},
                      {"id":2,"file_name":"b.png","width":100,"height":50}],
            "annotations":[{"id":1,"image_id":1,"category_id":3,"bbox":[10,10,4,4]}],
            "categories":[{"id":3,"name":"cat"},{"id":1,"name":"dog"}]}"#,
    )
    .unwrap();
    let r = ok_json(&["ingest", "--coco", s(&path)]);
    assert_eq!(r["result"]["images"], 2);
    assert_eq!(r["result"]["boxes"], 1);
    assert_eq!(r["result"]["unannotated"], serde_json::json!(["2"]));
}

#[test]
fn subset_matches_library_and_echoes_threshold() {
    let dir = tempfile::tempdir().unwrap();
    let (_, manifest) = ingest(dir.path(), 8);
    let out = dir.path().join("sub");
    let r = ok_json(&[
        "subset",
        "--manifest",
        s(&manifest),
        "--threshold",
        "0.02",
        "--out",
        s(&out),
    ]);
    let doc = ManifestDocument::read(&manifest).unwrap();
    let params = SubsetParams {
        threshold: 0.02,
        categories: None,
    };
    let (expected, report) = build_small_subset(&doc.manifest, &params).unwrap();
    assert_eq!(r["result"]["threshold"], 0.02);
    assert_eq!(r["result"]["report"]["kept"], report.kept);
    assert!(report.kept > 0 && !report.dropped_large.is_empty());
    let written = ManifestDocument::read(&out.join("manifest.json")).unwrap();
    assert_eq!(written.manifest, expected);
    assert_eq!(written.header.params["threshold"], 0.02);

    let all = ok_json(&["subset", "--manifest", s(&manifest), "--threshold", "1.0"]);
    assert_eq!(all["result"]["report"]["kept"], 8);
}

#[test]
fn augment_single_sample_writes_nine_pngs() {
    let dir = tempfile::tempdir().unwrap();
    let (images, manifest) = ingest(dir.path(), 1);
    let out = dir.path().join("aug");
    let r = ok_json(&[
        "augment",
        "--manifest",
        s(&manifest),
        "--images",
        s(&images),
        "--out",
        s(&out),
    ]);
    assert_eq!(r["result"]["images_written"], 9);
    let pngs = std::fs::read_dir(out.join("images")).unwrap().count();
    assert_eq!(pngs, 9);
    let records = std::fs::read_to_string(out.join("records.jsonl")).unwrap();
    assert_eq!(records.lines().count(), 9);
    let first: Value = serde_json::from_str(records.lines().next().unwrap()).unwrap();
    assert_eq!(first["op"], "cut-and-remain");
    assert_eq!(first["provenance"]["method"], "cut-and-remain");
}

#[test]
fn augment_is_reproducible_across_runs_and_jobs() {
    let dir = tempfile::tempdir().unwrap();
    let (images, manifest) = ingest(dir.path(), 6);
    for method in ["cut-and-remain", "sup-mixup", "sup-cutout", "sup-cutmix"] {
        let digest = |name: &str, jobs: &str| {
            let out = dir.path().join(format!("{method}-{name}"));
            let r = ok_json(&[
                "augment",
                "--manifest",
                s(&manifest),
                "--images",
                s(&images),
                "--method",
                method,
                "--seed",
                "42",
                "--jobs",
                jobs,
                "--out",
                s(&out),
            ]);
            r["result"]["digest"].as_str().unwrap().to_string()
        };
        let a = digest("a", "1");
        assert_eq!(a, digest("b", "4"), "{method}");
        assert_eq!(a.len(), 64);
    }
}

#[test]
fn augment_mixup_needs_two_samples() {
    let dir = tempfile::tempdir().unwrap();
    let (images, manifest) = ingest(dir.path(), 1);
    let err = failure(&[
        "augment",
        "--manifest",
        s(&manifest),
        "--images",
        s(&images),
        "--method",
        "sup-mixup",
        "--out",
        s(&dir.path().join("x")),
    ]);
    assert_eq!(err["error"]["kind"], "pairing");
}

#[test]
fn compose_counts_and_determinism() {
    let dir = tempfile::tempdir().unwrap();
    let (_, manifest) = ingest(dir.path(), 10);
    let compose = |name: &str, seed: &str| {
        let out = dir.path().join(name);
        let r = ok_json(&[
            "compose",
            "--manifest",
            s(&manifest),
            "--gamma",
            "0.5",
            "--seed",
            seed,
            "--out",
            s(&out),
        ]);
        (r, std::fs::read_to_string(out.join("batch.jsonl")).unwrap())
    };
    let (r1, text1) = compose("c1", "9");
    let (r2, text2) = compose("c2", "9");
    let (r3, _) = compose("c3", "10");
    assert_eq!(r1["result"]["entries"], 55);
    assert_eq!(text1.lines().count(), 56);
    assert_eq!(text1, text2);
    assert_eq!(r1["result"]["digest"], r2["result"]["digest"]);
    assert_ne!(r1["result"]["digest"], r3["result"]["digest"]);
}

#[test]
fn eval_perfect_predictions() {
    let dir = tempfile::tempdir().unwrap();
    let preds = dir.path().join("p.csv");
    let labels = dir.path().join("l.csv");
    std::fs::write(
        &preds,
        "id,a,b,c\nx,0.9,0.1,0.8\ny,0.2,0.7,0.3\nz,0.6,0.4,0.1\n",
    )
    .unwrap();
    std::fs::write(&labels, "id,a,b,c\nz,1,0,0\ny,0,1,0\nx,1,0,1\n").unwrap();
    let r = ok_json(&["eval", "--predictions", s(&preds), "--labels", s(&labels)]);
    let m = &r["result"]["metrics"];
    for key in ["map", "cf1", "of1"] {
        assert_eq!(m[key], 1.0, "{key}");
    }
    assert_eq!(r["result"]["input_digest"].as_str().unwrap().len(), 64);

    let csv = run(&[
        "eval",
        "--predictions",
        s(&preds),
        "--labels",
        s(&labels),
        "--format",
        "csv",
    ]);
    let text = String::from_utf8(csv.stdout).unwrap();
    assert!(text.starts_with("key,value\n"));
    assert!(text.contains("result.metrics.of1,1.0"), "{text}");
}

#[test]
fn eval_binary_column() {
    let dir = tempfile::tempdir().unwrap();
    let preds = dir.path().join("p.csv");
    let labels = dir.path().join("l.csv");
    std::fs::write(&preds, "id,lesion\na,0.1\nb,0.4\nc,0.35\nd,0.8\n").unwrap();
    std::fs::write(&labels, "id,lesion\na,0\nb,0\nc,1\nd,1\n").unwrap();
    let r = ok_json(&["eval", "--predictions", s(&preds), "--labels", s(&labels)]);
    assert_eq!(r["result"]["metrics"]["auc_roc"], 0.75);
}

#[test]
fn similarity_report() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.csv");
    let b = dir.path().join("b.csv");
    std::fs::write(&a, "id,f0,f1\np,1,0\nq,0,1\n").unwrap();
    std::fs::write(&b, "id,f0,f1\nq,0,6\np,4,0\n").unwrap();
    let r = ok_json(&["similarity", "--original", s(&a), "--augmented", s(&b)]);
    assert_eq!(r["result"]["euclidean"]["mean"], 4.0);
    assert_eq!(r["result"]["euclidean"]["std"], 1.0);
    assert_eq!(r["result"]["cosine"]["mean"], 0.0);
}

#[test]
fn probe_report_shape() {
    let r = ok_json(&[
        "probe",
        "--seeds",
        "5",
        "--train-size",
        "40",
        "--test-size",
        "40",
        "--epochs",
        "2",
    ]);
    let per_seed = r["result"]["per_seed"].as_array().unwrap();
    assert_eq!(per_seed.len(), 5);
    let cells = per_seed
        .iter()
        .flat_map(|o| [&o["baseline_auc"], &o["cut_and_remain_auc"]])
        .filter(|v| v.is_f64())
        .count();
    assert_eq!(cells, 10);
    assert!(r["result"]["mean_difference"].is_f64());
}

#[test]
fn help_documents_every_flag_and_unknown_flags_fail() {
    for cmd in [
        "ingest",
        "subset",
        "augment",
        "compose",
        "eval",
        "similarity",
        "probe",
    ] {
        let out = run(&[cmd, "--help"]);
        assert!(out.status.success());
        let help = String::from_utf8(out.stdout).unwrap();
        let lines: Vec<&str> = help.lines().collect();
        for (i, line) in lines.iter().enumerate() {
            let t = line.trim_start();
            if t.starts_with("--") && !t.starts_with("--help") {
                let inline = t.split("  ").filter(|p| !p.trim().is_empty()).count() > 1;
                let below = lines
                    .get(i + 1)
                    .is_some_and(|n| !n.trim().is_empty() && !n.trim_start().starts_with('-'));
                assert!(inline || below, "{cmd}: undocumented {t}");
            }
        }
        assert!(!run(&[cmd, "--no-such-flag"]).status.success());
    }
}

#[test]
fn inputs_are_not_modified() {
    let dir = tempfile::tempdir().unwrap();
    let (images, manifest) = ingest(dir.path(), 3);
    let before = std::fs::read(&manifest).unwrap();
    let png_before = std::fs::read(images.join("img0.png")).unwrap();
    ok_json(&[
        "augment",
        "--manifest",
        s(&manifest),
        "--images",
        s(&images),
        "--out",
        s(&dir.path().join("o")),
    ]);
    assert_eq!(std::fs::read(&manifest).unwrap(), before);
    assert_eq!(std::fs::read(images.join("img0.png")).unwrap(), png_before);
}
