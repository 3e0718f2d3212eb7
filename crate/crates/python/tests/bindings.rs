use pyo3::ffi::c_str;
use pyo3::prelude::*;
use pyo3::types::{PyDict, PyModule};

fn with_module(code: &std::ffi::CStr) {
    Python::attach(|py| {
        let m = PyModule::new(py, "temsa").unwrap();
        temsa::register(&m).unwrap();
        py.import("sys").unwrap().getattr("modules").unwrap().set_item("temsa", &m).unwrap();
        let globals = PyDict::new(py);
        if let Err(e) = py.run(code, Some(&globals), None) {
            e.print(py);
            panic!("python snippet failed");
        }
    });
}

#[test]
fn text_helpers() {
    with_module(c_str!(
        r#"
import temsa
assert temsa.tokenize("Good MORNING!!") == ["good", "morning"]
seq = temsa.build_tems("a b c d", ["dog", "green grass"], text_max=2, max_objects=1)
assert seq == ["a", "b", "dog"], seq
"#
    ));
}

#[test]
fn metrics_and_wilcoxon() {
    with_module(c_str!(
        r#"
import temsa
m = temsa.evaluate_predictions(["positive", "negative", "neutral"], ["positive", "negative", "positive"])
assert abs(m["accuracy"] - 2 / 3) < 1e-12
r = temsa.wilcoxon([1.0, 2.0, 3.0], [0.0, 0.0, 0.0])
assert r["p_value"] == 0.25 and not r["significant"]
try:
    temsa.wilcoxon([1.0], [1.0])
    raise AssertionError("expected TemsaError")
except temsa.TemsaError as e:
    assert "differences" in str(e)
"#
    ));
}

#[test]
fn experiment_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let code = format!(
        r#"
import os, temsa
d = {dir:?}
manifest = temsa.write_synthetic_corpus(d, samples=40, seed=5)
cache = os.path.join(d, "det.jsonl")
assert temsa.detect_fixture(manifest, cache)[0] == 40
counts, pct = temsa.object_histogram(cache)
assert sum(counts) == 40 and abs(sum(pct) - 100) < 1e-9
cfg = temsa.ExperimentConfig(manifest, detections=cache, output_dir=os.path.join(d, "runs"), epochs="1", embed_dim="8", head_hidden="8")
cfg.validate()
rec = temsa.run_experiment(cfg)
assert rec["experiment"] == 3
assert 0.0 <= rec["metrics"]["accuracy"] <= 1.0
path = os.path.join(cfg.run_dir, "record.json")
assert temsa.load_record(path)["predictions"] == rec["predictions"]
rep = temsa.compare_records([path], plots_dir=os.path.join(d, "plots"))
assert len(rep["rows"]) == 1
assert len(os.listdir(os.path.join(d, "plots"))) == 2
"#,
        dir = dir.path().to_str().unwrap()
    );
    with_module(&std::ffi::CString::new(code).unwrap());
}
