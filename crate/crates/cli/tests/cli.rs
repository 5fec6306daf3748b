use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

const RAMP_RUN: &str = r#"
seed = 7
[problem]
family = "smooth"
dim = 1
shape = "ramp"
[learner]
budget = 100
[evaluation]
num_eval = 2000
"#;

const RAMP_SWEEP: &str = r#"
seed = 3
threads = 2
[problem]
family = "smooth"
dim = 1
shape = "ramp"
center_jitter = 0.2
[learner]
budgets = [512, 1024, 2048]
[evaluation]
num_eval = 2000
replicates = 2
bootstrap = 50
"#;

fn csal(dir: &Path, sub: &str, config: &str, extra: &[&str]) -> (Output, PathBuf) {
    let cfg = dir.join(format!("{sub}.toml"));
    fs::write(&cfg, config).unwrap();
    let out = dir.join(format!("out-{sub}-{}", extra.join("_").replace(['-', '/'], "")));
    let output = Command::new(env!("CARGO_BIN_EXE_csal"))
        .arg(sub)
        .arg("--config")
        .arg(&cfg)
        .arg("--out")
        .arg(&out)
        .args(extra)
        .output()
        .unwrap();
    (output, out)
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn run_trace_has_one_row_per_query() {
    let tmp = TempDir::new().unwrap();
    let (o, out) = csal(tmp.path(), "run", RAMP_RUN, &[]);
    assert!(o.status.success(), "{}", stderr(&o));
    let mut rdr = csv::Reader::from_path(out.join("trace.csv")).unwrap();
    let headers = rdr.headers().unwrap().clone();
    assert_eq!(
        headers.iter().collect::<Vec<_>>(),
        ["t", "budget_used", "action", "depth", "index", "unclassified", "classified", "max_depth"]
    );
    let rows: Vec<csv::StringRecord> = rdr.records().map(Result::unwrap).collect();
    let queries = rows.iter().filter(|r| &r[2] == "query" || &r[2] == "classify-cell").count();
    assert_eq!(queries, 100);
    assert_eq!(rows.last().unwrap()[1].parse::<u64>().unwrap(), 100);
    let report: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("report.json")).unwrap()).unwrap();
    assert_eq!(report["queries_total"], 100);
    assert_eq!(report["steps"].as_u64().unwrap() as usize, rows.len());
    assert_eq!(report["termination"], "budget-exhausted");
}

#[test]
fn run_is_byte_identical_and_seed_override_matters() {
    let tmp = TempDir::new().unwrap();
    let (a, out_a) = csal(tmp.path(), "run", RAMP_RUN, &[]);
    let cfg = tmp.path().join("again.toml");
    fs::write(&cfg, RAMP_RUN).unwrap();
    let out_b = tmp.path().join("again");
    let b = Command::new(env!("CARGO_BIN_EXE_csal"))
        .args(["run", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(&out_b)
        .output()
        .unwrap();
    assert!(a.status.success() && b.status.success());
    for f in ["trace.csv", "report.json"] {
        assert_eq!(fs::read(out_a.join(f)).unwrap(), fs::read(out_b.join(f)).unwrap(), "{f}");
    }
    let bern = RAMP_RUN.replace("budget = 100", "budget = 100\nnoise = \"bernoulli\"");
    let (c, out_c) = csal(tmp.path(), "run", &bern, &["--seed", "8"]);
    let (d, out_d) = csal(tmp.path(), "run", &bern, &["--seed", "9"]);
    assert!(c.status.success() && d.status.success());
    assert_ne!(fs::read(out_c.join("report.json")).unwrap(), fs::read(out_d.join("report.json")).unwrap());
}

#[test]
fn non_increasing_budgets_exit_2() {
    let tmp = TempDir::new().unwrap();
    let bad = RAMP_SWEEP.replace("[512, 1024, 2048]", "[512, 2048, 1024]");
    for sub in ["run", "sweep"] {
        let (o, _) = csal(tmp.path(), sub, &bad, &[]);
        assert_eq!(o.status.code(), Some(2), "{sub}: {}", stderr(&o));
        assert!(stderr(&o).contains("budgets"), "{}", stderr(&o));
    }
}

#[test]
fn config_errors_exit_2() {
    let tmp = TempDir::new().unwrap();
    let cases = [
        (RAMP_RUN.replace("seed = 7", ""), "seed"),
        (RAMP_RUN.replace("\"ramp\"", "\"zigzag\""), "zigzag"),
        (RAMP_RUN.replace("dim = 1", "dim = 1\nflat_widht = 0.1"), "problem.flat_widht"),
        (RAMP_RUN.replace("budget = 100", "budget = 100\nalpha = 2.0"), "learner.alpha"),
        (RAMP_RUN.replace("budget = 100", "budget = 100\nnoise = \"gaussian\""), "gaussian"),
        ("seed = [".to_string(), "TOML"),
    ];
    for (cfg, needle) in cases {
        let (o, _) = csal(tmp.path(), "run", &cfg, &[]);
        assert_eq!(o.status.code(), Some(2), "{needle}: {}", stderr(&o));
        assert!(stderr(&o).contains(needle), "{needle}: {}", stderr(&o));
    }
    let (o, _) = csal(tmp.path(), "run", &RAMP_RUN.replace("budget = 100", ""), &[]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("learner.budget"));
}

#[test]
fn sweep_rows_and_determinism() {
    let tmp = TempDir::new().unwrap();
    let (a, out_a) = csal(tmp.path(), "sweep", RAMP_SWEEP, &[]);
    assert!(a.status.success(), "{}", stderr(&a));
    let mut rdr = csv::Reader::from_path(out_a.join("sweep.csv")).unwrap();
    assert_eq!(
        rdr.headers().unwrap().iter().collect::<Vec<_>>(),
        [
            "learner",
            "budget",
            "replicate",
            "seed",
            "excess_risk",
            "max_depth",
            "classified_mass",
            "queries_total",
            "queries_per_label"
        ]
    );
    let rows: Vec<csv::StringRecord> = rdr.records().map(Result::unwrap).collect();
    assert_eq!(rows.len(), 12);
    assert_eq!(rows.iter().filter(|r| &r[0] == "active").count(), 6);
    assert!(rows.iter().all(|r| r[8].split(';').count() == 2));

    let report: serde_json::Value = serde_json::from_str(&fs::read_to_string(out_a.join("report.json")).unwrap()).unwrap();
    assert_eq!(report["tau"], 0.0);
    assert_eq!(report["regimes"].as_array().unwrap().len(), 3);
    assert!(report["regimes"].as_array().unwrap().iter().all(|r| r["regime"] == "tau<tau0"));

    // thread count does not change a byte
    let (b, out_b) = csal(tmp.path(), "sweep", RAMP_SWEEP, &["--threads", "1"]);
    assert!(b.status.success());
    for f in ["sweep.csv", "report.json"] {
        assert_eq!(fs::read(out_a.join(f)).unwrap(), fs::read(out_b.join(f)).unwrap(), "{f}");
    }
}

#[test]
fn flat_region_sweep_reports_regime() {
    let tmp = TempDir::new().unwrap();
    let flat = RAMP_SWEEP.replace("center_jitter = 0.2", "center_jitter = 0.2\nflat_width = 0.3");
    let (o, out) = csal(tmp.path(), "sweep", &flat, &[]);
    assert!(o.status.success(), "{}", stderr(&o));
    let report: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("report.json")).unwrap()).unwrap();
    assert!((report["tau"].as_f64().unwrap() - 0.3).abs() < 1e-12);
    for r in report["regimes"].as_array().unwrap() {
        let n = r["budget"].as_f64().unwrap();
        let t0 = (f64::ln(2.0 * n.powi(3) * 2.0) / n).sqrt();
        assert!((r["tau0"].as_f64().unwrap() - t0).abs() < 1e-12);
        assert_eq!(r["regime"], "tau>=tau0");
    }
}

#[test]
fn validate_exit_codes() {
    let tmp = TempDir::new().unwrap();
    let hard = "seed = 1\n[problem]\nfamily = \"hard-instance\"\n";
    let (o, out) = csal(tmp.path(), "validate", hard, &[]);
    let text = String::from_utf8_lossy(&o.stdout);
    assert!(o.status.success(), "{text}{}", stderr(&o));
    assert!(text.contains("holder") && !text.contains("FAIL"), "{text}");
    assert!(out.join("validate.json").exists());

    // c2 = 1/L with L = 2 is far above the 1/(12L) limit
    let (o, _) = csal(tmp.path(), "validate", &format!("{hard}c2 = 0.5\n"), &[]);
    assert_eq!(o.status.code(), Some(3), "{}", String::from_utf8_lossy(&o.stdout));
    assert!(String::from_utf8_lossy(&o.stdout).contains("holder"));

    let (o, _) = csal(tmp.path(), "validate", RAMP_RUN, &[]);
    let text = String::from_utf8_lossy(&o.stdout);
    assert!(o.status.success(), "{text}");
    assert!(text.lines().any(|l| l.starts_with("margin ") && l.contains("PASS")), "{text}");
}
