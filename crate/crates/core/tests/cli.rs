use std::fs;
use std::path::Path;
use std::process::Command;

use bopp::cli::{summarize, ExperimentConfig};

fn bopp() -> Command {
    Command::new(env!("CARGO_BIN_EXE_bopp"))
}

fn write_config(dir: &Path, out: &Path, extra: &str) -> std::path::PathBuf {
    let path = dir.join("experiment.toml");
    fs::write(
        &path,
        format!(
            r#"seed = 11
repeats = 2
budget = 4
output_dir = "{}"
algorithms = ["ucb", "ucb-pp0001"]
{extra}
[objective]
name = "dropwave"

[model]
fit_starts = 2
fit_iterations = 10
direct_evaluations = 60
"#,
            out.display()
        ),
    )
    .unwrap();
    path
}

fn strip_ms(csv: &str) -> String {
    csv.lines()
        .map(|l| l.rsplit_once(',').map_or(l, |(head, _)| head).to_string())
        .collect::<Vec<_>>()
        .join("\n")
}

#[test]
fn run_writes_complete_results() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("out");
    let config = write_config(tmp.path(), &out, "");
    let status = bopp().arg("run").arg("--config").arg(&config).output().unwrap().status;
    assert!(status.success());
    for file in ["config.toml", "iterations.csv", "initial.csv", "summary.csv", "summary.txt", "curves.csv"] {
        assert!(out.join(file).exists(), "{file} missing");
    }

    // shared initial design within a repeat
    let mut reader = csv::Reader::from_path(out.join("initial.csv")).unwrap();
    let rows: Vec<csv::StringRecord> = reader.records().map(|r| r.unwrap()).collect();
    assert_eq!(rows.len(), 2 * 2 * 5);
    for repeat in ["0", "1"] {
        let of = |alg: &str| -> Vec<Vec<String>> {
            rows.iter()
                .filter(|r| &r[0] == alg && &r[1] == repeat)
                .map(|r| r.iter().skip(2).map(String::from).collect())
                .collect()
        };
        assert_eq!(of("ucb"), of("ucb-pp0001"));
    }

    // summary agrees with the per-iteration file
    let mut reader = csv::Reader::from_path(out.join("iterations.csv")).unwrap();
    let header = reader.headers().unwrap().clone();
    assert_eq!(
        header.iter().collect::<Vec<_>>(),
        ["algorithm", "repeat", "iter", "x0", "x1", "y", "simple_regret", "cumulative_regret", "delta_v", "beta", "info_gain", "ms"]
    );
    let finals: Vec<f64> = reader
        .records()
        .map(|r| r.unwrap())
        .filter(|r| &r[0] == "ucb" && &r[2] == "4")
        .map(|r| r[6].parse().unwrap())
        .collect();
    let mean = finals.iter().sum::<f64>() / 2.0;
    let summary = summarize(&out).unwrap();
    let row = summary.rows.iter().find(|r| r.algorithm == "ucb").unwrap();
    assert!((row.mean - mean).abs() < 1e-12);
    for c in &summary.curves {
        assert_eq!(c.band, c.std / 4.0);
    }

    // resolved config round-trips
    let echoed = ExperimentConfig::from_toml(&fs::read_to_string(out.join("config.toml")).unwrap()).unwrap();
    assert_eq!(echoed.repeats, 2);
    assert_eq!(echoed.algorithms.len(), 2);
    assert_eq!(echoed.noise_variance, 1e-4);
}

#[test]
fn rerun_is_identical_except_time() {
    let tmp = tempfile::tempdir().unwrap();
    let a = tmp.path().join("a");
    let b = tmp.path().join("b");
    let config = write_config(tmp.path(), &a, "jobs = 2");
    assert!(bopp().arg("run").arg("--config").arg(&config).output().unwrap().status.success());
    assert!(bopp()
        .args(["run", "--jobs", "1", "--config"])
        .arg(&config)
        .arg("--out")
        .arg(&b)
        .output()
        .unwrap()
        .status
        .success());
    let read = |d: &Path, f: &str| fs::read_to_string(d.join(f)).unwrap();
    assert_eq!(strip_ms(&read(&a, "iterations.csv")), strip_ms(&read(&b, "iterations.csv")));
    assert_eq!(read(&a, "initial.csv"), read(&b, "initial.csv"));
    assert_eq!(read(&a, "summary.csv"), read(&b, "summary.csv"));
}

#[test]
fn ragged_results_are_rejected() {
    let tmp = tempfile::tempdir().unwrap();
    fs::write(
        tmp.path().join("iterations.csv"),
        "algorithm,repeat,iter,x0,y,simple_regret,cumulative_regret,delta_v,beta,info_gain,ms\n\
         ucb,0,1,0.1,0.5,0.2,0.2,0,1,0.1,1\n\
         ucb,0,2,0.1,0.5,0.1,0.3,0,1,0.1,1\n\
         ucb,1,1,0.1,0.5,0.3,0.3,0,1,0.1,1\n",
    )
    .unwrap();
    let err = summarize(tmp.path()).unwrap_err().to_string();
    assert!(err.contains("(ucb, 1, 2)"), "{err}");
    let status = bopp().arg("summarize").arg(tmp.path()).output().unwrap().status;
    assert!(!status.success());
}

#[test]
fn summary_statistics() {
    let tmp = tempfile::tempdir().unwrap();
    fs::write(
        tmp.path().join("iterations.csv"),
        "algorithm,repeat,iter,x0,y,simple_regret,cumulative_regret,delta_v,beta,info_gain,ms\n\
         ei,0,1,0.1,0.5,0.1,0.1,0,,0.1,1\n\
         ei,1,1,0.1,0.5,0.3,0.3,0,,0.1,1\n\
         pi,0,1,0.1,0.5,0.4,0.4,0,,0.1,1\n",
    )
    .unwrap();
    assert!(summarize(tmp.path()).is_err());
    fs::write(
        tmp.path().join("iterations.csv"),
        "algorithm,repeat,iter,x0,y,simple_regret,cumulative_regret,delta_v,beta,info_gain,ms\n\
         ei,0,1,0.1,0.5,0.1,0.1,0,,0.1,1\n\
         ei,1,1,0.1,0.5,0.3,0.3,0,,0.1,1\n",
    )
    .unwrap();
    let s = summarize(tmp.path()).unwrap();
    assert!((s.rows[0].mean - 0.2).abs() < 1e-15);
    assert!((s.rows[0].std - 0.1414).abs() < 1e-4);
    assert!(!s.rows[0].single_repeat);
    let text = fs::read_to_string(tmp.path().join("summary.txt")).unwrap();
    assert!(text.contains("0.2000 ± 0.1414"));
}

#[test]
fn single_repeat_is_flagged() {
    let tmp = tempfile::tempdir().unwrap();
    fs::write(
        tmp.path().join("iterations.csv"),
        "algorithm,repeat,iter,x0,y,simple_regret,cumulative_regret,delta_v,beta,info_gain,ms\n\
         ei,0,1,0.1,0.5,0.25,0.25,0,,0.1,1\n",
    )
    .unwrap();
    let s = summarize(tmp.path()).unwrap();
    assert_eq!(s.rows[0].std, 0.0);
    assert!(s.rows[0].single_repeat);
}

#[test]
fn external_objective_run_reports_best_value() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("ext");
    let path = tmp.path().join("ext.toml");
    fs::write(
        &path,
        format!(
            r#"repeats = 1
budget = 3
initial_points = 2
output_dir = "{}"
algorithms = ["ei"]
[objective]
command = "awk '{{ print -($1 - 0.3) * ($1 - 0.3) }}'"
lower = [0.0]
upper = [1.0]
name = "parabola"
[model]
fit_starts = 1
fit_iterations = 5
direct_evaluations = 30
"#,
            out.display()
        ),
    )
    .unwrap();
    let status = bopp().arg("run").arg("--config").arg(&path).output().unwrap().status;
    assert!(status.success());
    let s = summarize(&out).unwrap();
    assert_eq!(s.rows[0].metric, "best_y");
    assert_eq!(s.rows[0].objective, "parabola");
    assert!(s.rows[0].mean <= 0.0);
}

#[test]
fn output_directory_from_environment() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("env-out");
    let status = bopp()
        .args(["run", "--objective", "griewank", "--algorithm", "pi", "--repeats", "1", "--budget", "1"])
        .env("BOPP_OUT_DIR", &out)
        .output()
        .unwrap()
        .status;
    assert!(status.success());
    assert!(out.join("iterations.csv").exists());
}

#[test]
fn verify_passes_and_detects_fault() {
    let tmp = tempfile::tempdir().unwrap();
    let good = bopp()
        .args(["verify", "--instances", "40", "--out"])
        .arg(tmp.path().join("good"))
        .output()
        .unwrap()
        .status;
    assert!(good.success());
    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(tmp.path().join("good/verify.json")).unwrap()).unwrap();
    let checks = report["checks"].as_array().unwrap();
    assert!(checks.iter().all(|c| c["max_error"].is_number()));
    assert!(checks.iter().any(|c| c["check"] == "variance_reduction"));

    let bad = bopp()
        .args(["verify", "--instances", "40", "--inject-fault", "--out"])
        .arg(tmp.path().join("bad"))
        .output()
        .unwrap()
        .status;
    assert!(!bad.success());
}

#[test]
fn list_objectives_and_unknown_names() {
    let out = bopp().arg("list-objectives").output().unwrap();
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    for name in ["dropwave", "griewank", "hart6", "rastrigin"] {
        assert!(text.contains(name));
    }
    let out = bopp().args(["run", "--objective", "sphere"]).output().unwrap();
    assert!(!out.status.success());
    assert!(String::from_utf8(out.stderr).unwrap().contains("rastrigin"));
}
