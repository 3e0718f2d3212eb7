use std::path::Path;
use std::process::{Command, Output};

use temsa_core::synth::{write_synthetic_corpus, SynthOptions};

fn temsa(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_temsa"))
        .args(args)
        .env_remove("TEMSA_CACHE_DIR")
        .output()
        .expect("spawn temsa")
}

fn ok(args: &[&str]) -> String {
    let out = temsa(args);
    assert!(
        out.status.success(),
        "temsa {args:?} failed:\n{}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn end_to_end_pipeline() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let c = write_synthetic_corpus(d, &SynthOptions::new(60, 11)).unwrap();

    let prepared = d.join("prepared.csv");
    let summary = ok(&[
        "prepare",
        "--manifest",
        s(&c.manifest),
        "--dataset-name",
        "synth",
        "--joint-policy",
        "keep_polar",
        "--out",
        s(&prepared),
    ]);
    assert!(summary.contains("\"samples\""), "{summary}");
    assert!(prepared.exists());

    let cache = d.join("detections.jsonl");
    let det = ok(&["detect", "--manifest", s(&c.manifest), "--adapter", "fixture", "--threshold", "0.5", "--cache", s(&cache)]);
    assert!(det.contains("60 written"), "{det}");
    let again = ok(&["detect", "--manifest", s(&c.manifest), "--adapter", "fixture", "--threshold", "0.5", "--cache", s(&cache)]);
    assert!(again.contains("60 already cached"), "{again}");

    let csv = ok(&["objstats", "--cache", s(&cache), "--label", "synth"]);
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines.len(), 2);
    assert!(lines[0].starts_with("Number of Identified Objects,0,1"));
    assert!(lines[1].starts_with("synth,"));

    let tems = d.join("tems.jsonl");
    ok(&["build-tems", "--manifest", s(&c.manifest), "--cache", s(&cache), "--dataset", "simpson", "--out", s(&tems)]);
    let text = std::fs::read_to_string(&tems).unwrap();
    assert_eq!(text.lines().count(), 60);
    let first: serde_json::Value = serde_json::from_str(text.lines().next().unwrap()).unwrap();
    for key in ["sample_id", "text_tokens", "object_names", "combined"] {
        assert!(first.get(key).is_some(), "missing {key}");
    }

    let cfg = d.join("exp.toml");
    std::fs::write(
        &cfg,
        format!(
            "manifest = \"{}\"\ndetections = \"{}\"\noutput_dir = \"{}\"\nepochs = 2\nembed_dim = 16\nhead_hidden = 32\n",
            s(&c.manifest),
            s(&cache),
            s(&d.join("runs"))
        ),
    )
    .unwrap();

    let ckpt = d.join("ckpt");
    ok(&["train", "--experiment", "3", "--model", "bilstm", "--config", s(&cfg), "--out", s(&ckpt)]);
    let rec3 = d.join("exp3.json");
    let ev = ok(&["evaluate", "--checkpoint", s(&ckpt), "--split", "test", "--out", s(&rec3)]);
    assert!(ev.contains("exp3"), "{ev}");

    let ckpt2 = d.join("ckpt2");
    ok(&["train", "--experiment", "2", "--model", "bilstm", "--config", s(&cfg), "--out", s(&ckpt2), "--set", "epochs=1"]);
    let rec2 = d.join("exp2.json");
    ok(&["evaluate", "--checkpoint", s(&ckpt2), "--out", s(&rec2)]);

    let plots = d.join("plots");
    let report = d.join("report.json");
    let cmp = ok(&["compare", "--reports", s(&rec2), s(&rec3), "--plots", s(&plots), "--out", s(&report)]);
    assert!(cmp.contains("exp2/bilstm vs exp3/bilstm"), "{cmp}");
    assert!(report.exists() && report.with_extension("csv").exists());
    assert_eq!(std::fs::read_dir(&plots).unwrap().count(), 2);

    let cfg2 = d.join("exp2.toml");
    std::fs::write(&cfg2, std::fs::read_to_string(&cfg).unwrap() + "experiment = 2\n").unwrap();
    let run = ok(&["run", "--config", s(&cfg), s(&cfg2), "--parallel", "--set", "epochs=1"]);
    assert_eq!(run.lines().filter(|l| l.contains("record.json")).count(), 2, "{run}");
}

#[test]
fn errors_are_reported() {
    let dir = tempfile::tempdir().unwrap();
    let c = write_synthetic_corpus(dir.path(), &SynthOptions::new(5, 1)).unwrap();
    let cache = dir.path().join("c.jsonl");
    let out = temsa(&["detect", "--manifest", s(&c.manifest), "--adapter", "coco", "--cache", s(&cache)]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("TEMSA_CACHE_DIR"));

    let cfg = dir.path().join("bad.toml");
    std::fs::write(&cfg, format!("manifest = \"{}\"\nno_such_key = 1\n", s(&c.manifest))).unwrap();
    let out = temsa(&["run", "--config", s(&cfg)]);
    assert!(!out.status.success());

    let out = temsa(&["compare", "--reports", s(&dir.path().join("missing.json"))]);
    assert!(!out.status.success());
}
