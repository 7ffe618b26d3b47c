use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

fn blecte(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_blecte"))
        .current_dir(dir)
        .env_remove("BLECTE_OUT_DIR")
        .args(args)
        .output()
        .expect("spawn blecte")
}

fn ok(dir: &Path, args: &[&str]) -> String {
    let out = blecte(dir, args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn short_sim(dir: &Path, out: &str, extra: &[&str]) {
    let mut args = vec![
        "simulate", "--out", out, "--scenario", "continuous", "--sweep", "-30:30", "--speed", "15",
    ];
    args.extend_from_slice(extra);
    ok(dir, &args);
}

fn run_pipeline(dir: &Path, data: &str, out: &str, algo: &str) {
    ok(dir, &["ingest", "--dataset", data, "--out", out]);
    ok(dir, &["label", "--out", out]);
    ok(dir, &["estimate", "--out", out, "--algo", algo]);
    ok(dir, &["evaluate", "--out", out]);
}

/// Every file under `root`, keyed by relative path.
fn snapshot(root: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    fn walk(root: &Path, dir: &Path, acc: &mut BTreeMap<PathBuf, Vec<u8>>) {
        for e in fs::read_dir(dir).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                walk(root, &p, acc);
            } else {
                acc.insert(p.strip_prefix(root).unwrap().to_path_buf(), fs::read(&p).unwrap());
            }
        }
    }
    let mut acc = BTreeMap::new();
    walk(root, root, &mut acc);
    acc
}

#[test]
fn bad_enum_value_is_a_usage_error() {
    let t = TempDir::new().unwrap();
    let out = blecte(t.path(), &["estimate", "--algo", "bogus"]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("bogus") && err.contains("ti"), "{err}");
}

#[test]
fn zero_jobs_is_a_usage_error() {
    let t = TempDir::new().unwrap();
    assert_eq!(blecte(t.path(), &["--jobs", "0", "report"]).status.code(), Some(2));
}

#[test]
fn data_errors_exit_one_with_json() {
    let t = TempDir::new().unwrap();
    let out = blecte(t.path(), &["evaluate", "--out", "empty"]);
    assert_eq!(out.status.code(), Some(1));
    let v: serde_json::Value = serde_json::from_slice(&out.stderr).unwrap();
    assert_eq!(v["error"], "NoExperiments");
    assert!(v["message"].is_string());

    fs::create_dir(t.path().join("ds")).unwrap();
    fs::write(t.path().join("ds/conversion.json"), "{\"a\": {\"signal\": \"s.json\", \"gt\": ").unwrap();
    let out = blecte(t.path(), &["ingest", "--dataset", "ds"]);
    assert_eq!(out.status.code(), Some(1));
    let v: serde_json::Value = serde_json::from_slice(&out.stderr).unwrap();
    assert_eq!(v["error"], "MalformedJson");
    assert!(v["path"].as_str().unwrap().ends_with("conversion.json"));
}

#[test]
fn corrupt_signal_file_names_the_file() {
    let t = TempDir::new().unwrap();
    short_sim(t.path(), "data", &[]);
    let signal = t.path().join("data/continuous-1100mm-clear/signal.json");
    let mut bytes = fs::read(&signal).unwrap();
    bytes.truncate(bytes.len() / 2);
    fs::write(&signal, bytes).unwrap();
    let out = blecte(t.path(), &["ingest", "--dataset", "data", "--out", "run"]);
    assert_eq!(out.status.code(), Some(1));
    let v: serde_json::Value = serde_json::from_slice(&out.stderr).unwrap();
    assert!(v["path"].as_str().unwrap().ends_with("signal.json"), "{v}");
}

#[test]
fn smoke_pipeline_ti() {
    let t = TempDir::new().unwrap();
    short_sim(t.path(), "data", &["--seed", "5"]);
    run_pipeline(t.path(), "data", "run", "ti");
    let exp = t.path().join("run/continuous-1100mm-clear");
    for f in ["packets.jsonl", "gt.jsonl", "labeled.jsonl", "estimates.csv", "report.json", "cdf.csv"] {
        assert!(exp.join(f).is_file(), "missing {f}");
    }
    let report: serde_json::Value = serde_json::from_slice(&fs::read(exp.join("report.json")).unwrap()).unwrap();
    assert_eq!(report["algorithm"], "ti");
    let mae = report["mae"].as_f64().unwrap();
    assert!(mae < 3.0, "TI MAE {mae}");
    assert!(report["count"].as_u64().unwrap() > 10);
    let mut r = csv::Reader::from_path(t.path().join("run/evaluation.csv")).unwrap();
    assert_eq!(
        r.headers().unwrap().iter().collect::<Vec<_>>(),
        ["experiment", "mae", "range_mae", "moving_avg_mae", "rmse", "count"]
    );
    assert_eq!(r.records().count(), 1);
}

#[test]
fn report_matrix_has_one_row_per_height() {
    let t = TempDir::new().unwrap();
    for h in ["900", "1100", "1300"] {
        short_sim(t.path(), "data", &["--height", h]);
        short_sim(t.path(), "data", &["--height", h, "--obstacle", "-10:10:15"]);
    }
    run_pipeline(t.path(), "data", "run", "pdoa");
    ok(t.path(), &["report", "--out", "run"]);
    let mut r = csv::Reader::from_path(t.path().join("run/table2.csv")).unwrap();
    let header = r.headers().unwrap().clone();
    assert_eq!(header.len(), 7);
    assert_eq!(&header[0], "height_mm");
    let rows: Vec<csv::StringRecord> = r.records().map(Result::unwrap).collect();
    assert_eq!(rows.len(), 3);
    let heights: Vec<&str> = rows.iter().map(|r| &r[0]).collect();
    assert_eq!(heights, ["900", "1100", "1300"]);
    for row in &rows {
        for cell in row.iter().skip(1) {
            assert!(cell.parse::<f64>().unwrap() >= 0.0, "{cell}");
        }
    }
}

#[test]
fn reruns_are_byte_identical() {
    let t = TempDir::new().unwrap();
    for run in ["a", "b"] {
        let data = format!("data-{run}");
        let out = format!("run-{run}");
        short_sim(t.path(), &data, &["--seed", "9", "--cfo", "20000"]);
        run_pipeline(t.path(), &data, &out, "music");
    }
    let a = snapshot(&t.path().join("run-a"));
    let mut b = snapshot(&t.path().join("run-b"));
    // experiment.json records the source paths, which differ by directory
    for (k, v) in &a {
        let w = b.remove(k).unwrap_or_else(|| panic!("{} missing in second run", k.display()));
        if k.ends_with("experiment.json") {
            continue;
        }
        assert!(v == &w, "{} differs", k.display());
    }
    assert!(b.is_empty());
}

#[test]
fn inputs_are_not_modified() {
    let t = TempDir::new().unwrap();
    short_sim(t.path(), "data", &[]);
    let before = snapshot(&t.path().join("data"));
    run_pipeline(t.path(), "data", "run", "ti");
    assert_eq!(snapshot(&t.path().join("data")), before);
}

#[test]
fn range_models_on_rss_world() {
    let t = TempDir::new().unwrap();
    fs::write(
        t.path().join("world.toml"),
        "seed = 11\n[simulate]\nsegments = 120\npackets_per_segment = 1200\n",
    )
    .unwrap();
    ok(t.path(), &["--config", "world.toml", "simulate", "--out", "data", "--scenario", "rss-world"]);
    let input = "data/rss-world/observations.jsonl";
    let mut mae = BTreeMap::new();
    for m in ["ll", "chill", "gpr"] {
        ok(t.path(), &["range", "fit", "--out", "r", "--model", m, "--input", input, "--train-size", "300"]);
        ok(t.path(), &["range", "eval", "--out", "r", "--model", m]);
        let mut rd = csv::Reader::from_path(t.path().join(format!("r/range/eval_{m}.csv"))).unwrap();
        let row = rd.records().next().unwrap().unwrap();
        assert_eq!(&row[0], m);
        mae.insert(m, row[1].parse::<f64>().unwrap());
    }
    assert!(mae["gpr"] < mae["chill"] && mae["chill"] < mae["ll"], "{mae:?}");

    // refitting on different rows invalidates the other saved models
    fs::write(t.path().join("short.jsonl"), {
        let text = fs::read_to_string(t.path().join(input)).unwrap();
        text.lines().take(40_000).map(|l| format!("{l}\n")).collect::<String>()
    })
    .unwrap();
    ok(t.path(), &["range", "fit", "--out", "r", "--model", "ll", "--input", "short.jsonl", "--train-size", "50"]);
    let out = blecte(t.path(), &["range", "eval", "--out", "r", "--model", "gpr"]);
    assert_eq!(out.status.code(), Some(1));
    let v: serde_json::Value = serde_json::from_slice(&out.stderr).unwrap();
    assert_eq!(v["error"], "StaleModel");
}

#[test]
fn range_fit_reads_labeled_experiments() {
    let t = TempDir::new().unwrap();
    // slow enough to collect a few hundred packets
    ok(t.path(), &["simulate", "--out", "data", "--scenario", "continuous", "--sweep", "-30:30", "--speed", "1"]);
    ok(t.path(), &["ingest", "--dataset", "data", "--out", "run"]);
    ok(t.path(), &["label", "--out", "run"]);
    let msg = ok(t.path(), &["range", "fit", "--out", "run", "--model", "chill", "--train-size", "2", "--mean-timestep", "0.15"]);
    assert!(msg.contains("rows from"), "{msg}");
    let meta: serde_json::Value =
        serde_json::from_slice(&fs::read(t.path().join("run/range/rows.json")).unwrap()).unwrap();
    assert_eq!(meta["mean_timestep"], 0.15);
    assert!(meta["stats"]["rows"].as_u64().unwrap_or(0) >= 3, "{meta}");
}

#[test]
fn flags_override_config_and_env_sets_out() {
    let t = TempDir::new().unwrap();
    fs::write(
        t.path().join("cfg.toml"),
        "[simulate]\nscenario = \"continuous\"\nsweep = [-20.0, 20.0]\nspeed = 20.0\nheight = 1300.0\n",
    )
    .unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_blecte"))
        .current_dir(t.path())
        .env("BLECTE_OUT_DIR", "from-env")
        .args(["--config", "cfg.toml", "simulate", "--height", "700"])
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let dir = t.path().join("from-env/continuous-700mm-clear");
    assert!(dir.join("signal.json").is_file());
    let sc: serde_json::Value = serde_json::from_slice(&fs::read(dir.join("scenario.json")).unwrap()).unwrap();
    assert_eq!(sc["config"]["tag_height"], 700.0);
    assert_eq!(sc["config"]["speed_deg_s"], 20.0);

    // --out beats the environment
    let out = Command::new(env!("CARGO_BIN_EXE_blecte"))
        .current_dir(t.path())
        .env("BLECTE_OUT_DIR", "from-env")
        .args(["--config", "cfg.toml", "--out", "explicit", "simulate"])
        .output()
        .unwrap();
    assert!(out.status.success());
    assert!(t.path().join("explicit/continuous-1300mm-clear/signal.json").is_file());

    fs::write(t.path().join("bad.toml"), "[estimate]\nalgorithm = \"ti\"\n").unwrap();
    assert_eq!(blecte(t.path(), &["--config", "bad.toml", "report"]).status.code(), Some(2));
    fs::write(t.path().join("bad2.toml"), "[estimate]\nalgo = \"nope\"\n").unwrap();
    short_sim(t.path(), "data", &[]);
    ok(t.path(), &["ingest", "--dataset", "data", "--out", "run"]);
    ok(t.path(), &["label", "--out", "run"]);
    assert_eq!(
        blecte(t.path(), &["--config", "bad2.toml", "estimate", "--out", "run"]).status.code(),
        Some(2)
    );
}
