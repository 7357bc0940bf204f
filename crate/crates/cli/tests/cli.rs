use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;

use asse_cli::document::SurrogateDocument;
use asse_cli::pipeline::{cmd_eval, cmd_run, cmd_sweep, BASELINE_ABSENT, FAILED_MARKER};
use asse_cli::{ExperimentConfig, StageError};
use asse_core::analytics::Method;
use asse_core::sse::evaluate_sse;
use asse_core::uncertainty::{sample_qmc, to_physical, SampleMatrix, Space};

fn case_path() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data/case9.m")
}

fn small_config(methods: &str) -> ExperimentConfig {
    let text = format!(
        r#"
case = {case:?}
n_ed = 24
n_val = 200
validation_skip = 256
methods = [{methods}]
responses = ["Pg_1", "Qg_2", "objective"]
workers = 2

[[inputs]]
name = "wind_speed"
role = {{ kind = "wind" }}
distribution = {{ kind = "weibull", scale = 11.153, shape = 3.289 }}

[[inputs]]
name = "irradiance"
role = {{ kind = "irradiance" }}
distribution = {{ kind = "beta", a = 1.7, b = 0.74 }}

[[inputs]]
name = "load_bus5"
role = {{ kind = "load", bus = 5 }}
distribution = {{ kind = "gaussian", mean = 90.0, std_dev = 4.5 }}

[pce]
degrees = [0, 1, 2, 3]
q_norms = [0.5, 0.75]

[sweep]
n_ed = {{ start = 24, stop = 24, step = 5 }}
"#,
        case = case_path().to_string_lossy()
    );
    ExperimentConfig::from_toml(&text).unwrap()
}

fn line_count(path: &Path) -> usize {
    fs::read_to_string(path).unwrap().lines().count()
}

fn read_csv(path: &Path) -> Vec<Vec<String>> {
    fs::read_to_string(path)
        .unwrap()
        .lines()
        .map(|l| l.split(',').map(String::from).collect())
        .collect()
}

#[test]
fn run_writes_every_artifact() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run");
    cmd_run(&small_config(r#""MC", "ASSE", "SPCE""#), &out).unwrap();
    for name in ["design.csv", "validation.csv", "summary.csv", "comparison.csv", "cdf.csv", "pdf.csv", "manifest.toml"] {
        assert!(out.join(name).exists(), "{name}");
    }
    assert!(!out.join(FAILED_MARKER).exists());
    assert_eq!(line_count(&out.join("design.csv")), 25);
    assert_eq!(line_count(&out.join("validation.csv")), 201);
    assert!(out.join("surrogates/ASSE_objective.json").exists());
    assert!(out.join("surrogates/SPCE_Qg_2.json").exists());

    let design = read_csv(&out.join("design.csv"));
    assert_eq!(&design[0][..5], ["sample_id", "zeta_1", "zeta_2", "zeta_3", "status"]);
    assert_eq!(design[0].last().unwrap(), "objective");

    let manifest: toml::Table = fs::read_to_string(out.join("manifest.toml")).unwrap().parse().unwrap();
    assert_eq!(manifest["status"].as_str(), Some("ok"));
    let stages = manifest["stages"].as_table().unwrap();
    let sum: f64 = stages.values().map(|v| v.as_float().unwrap()).sum();
    let total = manifest["total_s"].as_float().unwrap();
    assert!(sum <= total * 1.01 + 1e-3 && sum >= total * 0.9 - 1e-2, "{sum} vs {total}");
    assert!(stages["validation"].as_float().unwrap() >= stages["fit"].as_float().unwrap());

    let summary = read_csv(&out.join("summary.csv"));
    assert_eq!(summary.len(), 1 + 3 * 3);
    for row in &summary[1..] {
        if row[0] != "MC" {
            let e: f64 = row.last().unwrap().parse().unwrap();
            assert!(e.is_finite() && e >= 0.0);
        }
    }
}

#[test]
fn identical_configs_give_identical_csvs() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(r#""MC", "ASSE", "SPCE""#);
    let mut other = cfg.clone();
    other.workers = 1;
    cmd_run(&cfg, &dir.path().join("a")).unwrap();
    cmd_run(&other, &dir.path().join("b")).unwrap();
    for name in ["design.csv", "validation.csv", "summary.csv", "comparison.csv", "cdf.csv", "pdf.csv"] {
        assert_eq!(
            fs::read(dir.path().join("a").join(name)).unwrap(),
            fs::read(dir.path().join("b").join(name)).unwrap(),
            "{name}"
        );
    }
}

#[test]
fn without_monte_carlo_the_baseline_is_marked_absent() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("asse");
    cmd_run(&small_config(r#""ASSE""#), &out).unwrap();
    let validation = read_csv(&out.join("validation.csv"));
    assert!(!validation[0].iter().any(|h| h.starts_with("MC_") || h == "status"));
    let summary = read_csv(&out.join("summary.csv"));
    assert_eq!(summary.len(), 4);
    assert!(summary[1..].iter().all(|r| r[0] == "ASSE" && r.last().unwrap() == BASELINE_ABSENT));
    assert!(!out.join("comparison.csv").exists());
}

#[test]
fn singleton_sweep_matches_run() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(r#""MC", "ASSE", "SPCE""#);
    cmd_run(&cfg, &dir.path().join("run")).unwrap();
    cmd_sweep(&cfg, &dir.path().join("sweep")).unwrap();
    let summary = read_csv(&dir.path().join("run/summary.csv"));
    let sweep = read_csv(&dir.path().join("sweep/sweep.csv"));
    assert_eq!(sweep[0], ["method", "n_ed", "e_val_Pg_1", "e_val_Qg_2", "e_val_objective"]);
    assert_eq!(sweep.len(), 3);
    for row in &sweep[1..] {
        assert_eq!(row[1], "24");
        for (k, resp) in ["Pg_1", "Qg_2", "objective"].iter().enumerate() {
            let from_run = summary
                .iter()
                .find(|r| r[0] == row[0] && r[1] == *resp)
                .unwrap()
                .last()
                .unwrap();
            assert_eq!(&row[2 + k], from_run);
        }
    }
}

#[test]
fn stage_failures_leave_a_marker() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = small_config(r#""ASSE""#);
    cfg.responses.push("Pg_9".into());
    let err = cmd_run(&cfg, dir.path()).unwrap_err();
    let stage = err.downcast_ref::<StageError>().expect("stage-tagged error");
    assert_eq!(stage.stage, "config");
    assert!(err.to_string().contains("Pg_9"));
    let marker = fs::read_to_string(dir.path().join(FAILED_MARKER)).unwrap();
    assert!(marker.contains("stage = \"config\""));
}

#[test]
fn config_rejects_overlapping_validation_and_unknown_buses() {
    let mut cfg = small_config(r#""ASSE""#);
    cfg.validation_skip = 10;
    assert!(cfg.validate().unwrap_err().to_string().contains("overlaps"));
    let mut cfg = small_config(r#""ASSE""#);
    cfg.inputs[2].role = asse_core::grid::InputRole::Load { bus: 42 };
    assert!(cfg.validate().unwrap_err().to_string().contains("bus 42"));
    let mut cfg = small_config(r#""ASSE""#);
    cfg.n_val = 3;
    assert!(cfg.validate().is_err());
}

#[test]
fn shipped_config_parses() {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/case9_reproduction.toml");
    let cfg = ExperimentConfig::load(&path).unwrap();
    let (case, responses) = cfg.validate().unwrap();
    assert_eq!(case.buses.len(), 9);
    assert_eq!(responses.len(), 6);
    assert_eq!((cfg.n_ed, cfg.n_val), (60, 10_000));
    assert_eq!(cfg.sweep_values().unwrap().len(), 43);
    assert_eq!(cfg.methods, [Method::MonteCarlo, Method::Asse, Method::Spce]);
}

fn fitted(dir: &Path) -> PathBuf {
    let out = dir.join("fit");
    cmd_run(&small_config(r#""ASSE""#), &out).unwrap();
    out.join("surrogates/ASSE_objective.json")
}

fn write_points(path: &Path, pts: &SampleMatrix) {
    let mut s = String::from("wind_speed,irradiance,load_bus5\n");
    for r in pts.rows() {
        s += &r.iter().map(|v| format!("{v}")).collect::<Vec<_>>().join(",");
        s.push('\n');
    }
    fs::write(path, s).unwrap();
}

#[test]
fn eval_reproduces_in_process_predictions() {
    let dir = tempfile::tempdir().unwrap();
    let doc_path = fitted(dir.path());
    let doc = SurrogateDocument::read(&doc_path).unwrap();
    let rv = doc.tree.random_vector.clone().unwrap();
    let u = sample_qmc(50, 3, 3000).unwrap();
    let x = to_physical(&u, &rv).unwrap();
    let direct = evaluate_sse(&doc.tree, &u).unwrap();

    for (pts, space) in [(&u, Space::Unit), (&x, Space::Physical)] {
        let points = dir.path().join("points.csv");
        let preds = dir.path().join("preds.csv");
        write_points(&points, pts);
        assert_eq!(cmd_eval(&doc_path, &points, space, Some(&preds)).unwrap(), 50);
        let rows = read_csv(&preds);
        assert_eq!(rows[0], ["row", "objective"]);
        for (row, want) in rows[1..].iter().zip(&direct) {
            let got: f64 = row[1].parse().unwrap();
            assert!((got - want).abs() <= 1e-12 * want.abs().max(1.0), "{got} vs {want}");
        }
    }
}

#[test]
fn eval_handles_empty_and_malformed_points() {
    let dir = tempfile::tempdir().unwrap();
    let doc_path = fitted(dir.path());
    let empty = dir.path().join("empty.csv");
    let preds = dir.path().join("preds.csv");
    fs::write(&empty, "").unwrap();
    assert_eq!(cmd_eval(&doc_path, &empty, Space::Unit, Some(&preds)).unwrap(), 0);
    assert_eq!(fs::read_to_string(&preds).unwrap(), "row,objective\n");

    let bad = dir.path().join("bad.csv");
    fs::write(&bad, "a,b,c\n0.1,0.2,0.3\n0.4,oops,0.6\n").unwrap();
    let err = cmd_eval(&doc_path, &bad, Space::Unit, Some(&preds)).unwrap_err();
    assert!(format!("{err:#}").contains("line 3"), "{err:#}");

    fs::write(&bad, "a,b,c\n0.1,0.2\n").unwrap();
    let err = cmd_eval(&doc_path, &bad, Space::Unit, Some(&preds)).unwrap_err();
    assert!(format!("{err:#}").contains("line 2"), "{err:#}");
}

#[test]
fn newer_document_versions_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let doc_path = fitted(dir.path());
    let text = fs::read_to_string(&doc_path).unwrap().replacen("\"version\": 1", "\"version\": 2", 1);
    let err = SurrogateDocument::from_json(&text).unwrap_err();
    assert!(err.to_string().contains("version 2"), "{err}");
    assert!(err.to_string().contains("upgrade"));
    let doc = SurrogateDocument::read(&doc_path).unwrap();
    assert_eq!(SurrogateDocument::from_json(&doc.to_json().unwrap()).unwrap(), doc);
}

#[test]
fn binary_parses_cases_and_reports_errors() {
    let bin = env!("CARGO_BIN_EXE_asse");
    let ok = Command::new(bin).arg("parse-case").arg(case_path()).output().unwrap();
    assert!(ok.status.success());
    let stdout = String::from_utf8_lossy(&ok.stdout);
    assert!(stdout.contains("buses       9"), "{stdout}");

    let dir = tempfile::tempdir().unwrap();
    let broken = dir.path().join("broken.m");
    fs::write(&broken, "function mpc = broken\n").unwrap();
    let bad = Command::new(bin).arg("parse-case").arg(&broken).output().unwrap();
    assert!(!bad.status.success());
    assert!(String::from_utf8_lossy(&bad.stderr).contains("missing baseMVA"));

    let no_out = Command::new(bin)
        .args(["run", "--config"])
        .arg(Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/case9_reproduction.toml"))
        .args(["--methods", "ASSE,bogus"])
        .output()
        .unwrap();
    assert!(!no_out.status.success());
}
