use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

use proxci::discrete::{CategoricalLaw, LawDims, LawFile};

fn proxci(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_proxci")).args(args).current_dir(cwd).output().expect("binary runs")
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn simulate(dir: &Path, name: &str, n: usize, seed: u64, extra: &[&str]) -> String {
    let (n, seed) = (n.to_string(), seed.to_string());
    let mut args = vec!["simulate", "--n", &n, "--seed", &seed, "--output", name];
    args.extend_from_slice(extra);
    let out = proxci(&args, dir);
    assert!(out.status.success(), "{}", stderr(&out));
    fs::read_to_string(dir.join(name)).unwrap()
}

#[test]
fn simulate_writes_requested_rows_and_echoes_truth() {
    let dir = TempDir::new().unwrap();
    let out = proxci(&["simulate", "--n", "100", "--seed", "7", "--output", "d.csv"], dir.path());
    assert!(out.status.success());
    let csv = fs::read_to_string(dir.path().join("d.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("Y,A,X1,X2,Z1,W1"));
    assert_eq!(lines.count(), 100);
    let echo: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert!((echo["psi_true"].as_f64().unwrap() - 2.0).abs() < 1e-12);
    assert!(echo["t_z"].is_number());
}

#[test]
fn simulate_from_config_file() {
    let dir = TempDir::new().unwrap();
    let mut cfg: Value =
        serde_json::from_str(&fs::read_to_string(concat!(env!("CARGO_MANIFEST_DIR"), "/../../configs/sim_default.json")).unwrap())
            .unwrap();
    cfg["n"] = 100.into();
    cfg["seed"] = 7.into();
    fs::write(dir.path().join("cfg.json"), cfg.to_string()).unwrap();
    // Config values win over the flags.
    let csv = simulate(dir.path(), "c.csv", 5, 1, &["--config", "cfg.json"]);
    assert_eq!(csv.lines().count(), 101);
    assert_eq!(csv, simulate(dir.path(), "f.csv", 100, 7, &[]));
}

#[test]
fn simulate_is_deterministic() {
    let dir = TempDir::new().unwrap();
    let a = simulate(dir.path(), "a.csv", 50, 3, &[]);
    let b = simulate(dir.path(), "b.csv", 50, 3, &[]);
    assert_eq!(a, b);
    assert_ne!(a, simulate(dir.path(), "c.csv", 50, 4, &[]));
}

#[test]
fn with_latent_appends_u_column() {
    let dir = TempDir::new().unwrap();
    let csv = simulate(dir.path(), "u.csv", 10, 7, &["--with-latent"]);
    assert_eq!(csv.lines().next(), Some("Y,A,X1,X2,Z1,W1,U"));
    assert!(csv.lines().skip(1).all(|l| l.split(',').count() == 7));
}

#[test]
fn mc_rejects_zero_replications() {
    let dir = TempDir::new().unwrap();
    let out = proxci(&["mc", "--reps", "0"], dir.path());
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("reps"));
}

#[test]
fn mc_rejects_unknown_scenario() {
    let dir = TempDir::new().unwrap();
    let out = proxci(&["mc", "--scenario", "S9", "--reps", "2"], dir.path());
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn mc_emits_both_tables_independent_of_workers() {
    let dir = TempDir::new().unwrap();
    let run = |workers: &str| {
        let out = proxci(
            &["mc", "--scenario", "S1", "--reps", "8", "--n", "400", "--format", "csv", "--workers", workers],
            dir.path(),
        );
        assert!(out.status.success(), "{}", stderr(&out));
        String::from_utf8(out.stdout).unwrap()
    };
    let one = run("1");
    assert_eq!(one, run("3"));
    let lines: Vec<&str> = one.lines().collect();
    assert_eq!(lines[0], "scenario,metric,DR,POR,PIPW,PDR");
    assert!(lines[1].starts_with("S1,Bias,") && lines[4].starts_with("S1,Coverage,"));
}

#[test]
fn estimate_recovers_simulated_effect() {
    let dir = TempDir::new().unwrap();
    simulate(dir.path(), "s1.csv", 2000, 11, &[]);
    let out = proxci(&["estimate", "--input", "s1.csv", "--json", "--output", "r.json"], dir.path());
    assert!(out.status.success(), "{}", stderr(&out));
    let reports: Vec<Value> = serde_json::from_slice(&out.stdout).unwrap();
    let saved: Vec<Value> = serde_json::from_str(&fs::read_to_string(dir.path().join("r.json")).unwrap()).unwrap();
    assert_eq!(reports, saved);
    let names: Vec<&str> = reports.iter().map(|r| r["estimator"].as_str().unwrap()).collect();
    assert_eq!(names, ["DR", "POR", "PIPW", "PDR"]);
    for r in &reports {
        let keys: Vec<&str> = r.as_object().unwrap().keys().map(String::as_str).collect();
        for key in ["estimator", "estimate", "std_err", "ci_low", "ci_high", "n", "solver_meta"] {
            assert!(keys.contains(&key), "missing {key}");
        }
        assert_eq!(r["n"], 2000);
    }
    for r in &reports[1..] {
        let est = r["estimate"].as_f64().unwrap();
        let se = r["std_err"].as_f64().unwrap();
        assert!((est - 2.0).abs() < 4.0 * se, "{r}");
        assert!(r["ci_low"].as_f64().unwrap() < est && est < r["ci_high"].as_f64().unwrap());
    }
}

#[test]
fn estimate_with_config_interactions_and_att() {
    let dir = TempDir::new().unwrap();
    simulate(dir.path(), "s1.csv", 3000, 12, &[]);
    let config = serde_json::json!({
        "input": "s1.csv",
        "roles": {"y": "Y", "a": "A", "x": ["X1", "X2"], "z": ["Z1"], "w": ["W1"]},
        "layouts": {"h_interactions": ["W1", "X1"], "q_interactions": ["Z1", "X1"]},
        "estimators": ["POR", "PDR"]
    });
    fs::write(dir.path().join("a.json"), config.to_string()).unwrap();
    let out = proxci(&["estimate", "--config", "a.json", "--json"], dir.path());
    assert!(out.status.success(), "{}", stderr(&out));
    let reports: Vec<Value> = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(reports.len(), 2);
    for r in &reports {
        assert!((r["estimate"].as_f64().unwrap() - 2.0).abs() < 0.5, "{r}");
    }

    let out = proxci(&["estimate", "--input", "s1.csv", "--target", "att"], dir.path());
    assert!(out.status.success(), "{}", stderr(&out));
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.contains("ATT_OR") && text.contains("ATT_IPW") && text.contains("ATT_DR"));

    let out = proxci(&["estimate", "--input", "s1.csv", "--estimators", "ATT_DR"], dir.path());
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn estimate_names_missing_column() {
    let dir = TempDir::new().unwrap();
    simulate(dir.path(), "s.csv", 100, 1, &[]);
    let out = proxci(&["estimate", "--input", "s.csv", "--x", "X1,X2", "--z", "Z1", "--w", "W7"], dir.path());
    assert_eq!(out.status.code(), Some(3));
    assert!(stderr(&out).contains("missing column `W7`"), "{}", stderr(&out));
}

#[test]
fn estimate_rejects_non_binary_treatment() {
    let dir = TempDir::new().unwrap();
    fs::write(dir.path().join("bad.csv"), "Y,A,X1,Z1,W1\n1,0,0,0,0\n2,2,1,1,1\n").unwrap();
    let out = proxci(&["estimate", "--input", "bad.csv"], dir.path());
    assert_eq!(out.status.code(), Some(3));
    assert!(stderr(&out).contains("non-binary"));
}

#[test]
fn estimate_reports_solver_failure() {
    let dir = TempDir::new().unwrap();
    // W is a copy of X1, so the outcome-bridge Gram matrix is singular.
    let mut csv = String::from("Y,A,X1,Z1,W1\n");
    for i in 0..60 {
        let x = (i % 7) as f64;
        csv.push_str(&format!("{},{},{x},{},{x}\n", i % 5, i % 2, (i * 3 % 11) as f64));
    }
    fs::write(dir.path().join("s.csv"), csv).unwrap();
    let out = proxci(&["estimate", "--input", "s.csv", "--estimators", "POR"], dir.path());
    assert_eq!(out.status.code(), Some(4), "{}", stderr(&out));
}

#[test]
fn diagnose_reports_partial_correlations() {
    let dir = TempDir::new().unwrap();
    simulate(dir.path(), "s.csv", 1000, 2, &[]);
    let out = proxci(&["diagnose", "--input", "s.csv"], dir.path());
    assert!(out.status.success(), "{}", stderr(&out));
    let report: Value = serde_json::from_slice(&out.stdout).unwrap();
    let pair = &report["partial_correlations"]["pairs"][0];
    assert_eq!(pair["z"], "Z1");
    assert!(pair["p_value"].as_f64().unwrap() < 1e-6);
    assert!(report["moment_conditioning"]["outcome_gram"].as_f64().unwrap() > 1.0);
}

fn write_law(dir: &Path, name: &str, law: &CategoricalLaw) {
    fs::write(dir.join(name), serde_json::to_string(&LawFile::from_latent(law)).unwrap()).unwrap();
}

/// Two-level confounder with informative proxies.
fn structured_law() -> CategoricalLaw {
    let p_u = |x: usize, u: usize| [[0.6, 0.4], [0.3, 0.7]][x][u];
    let p_a = |u: usize, a: usize| if a == 1 { [0.3, 0.7][u] } else { [0.7, 0.3][u] };
    let p_z = |u: usize, a: usize, z: usize| if z == u { 0.8 - 0.1 * a as f64 } else { 0.2 + 0.1 * a as f64 };
    let p_w = |u: usize, w: usize| if w == u { 0.75 } else { 0.25 };
    let p_y = |u: usize, a: usize, x: usize, y: usize| {
        let p1 = 0.2 + 0.3 * a as f64 + 0.2 * u as f64 + 0.1 * x as f64;
        if y == 1 { p1 } else { 1.0 - p1 }
    };
    CategoricalLaw::from_fn(LawDims::new(2, 2, 2, 2, 2), vec![0.0, 1.0], |u, x, w, z, a, y| {
        0.5 * p_u(x, u) * p_a(u, a) * p_z(u, a, z) * p_w(u, w) * p_y(u, a, x, y)
    })
    .unwrap()
}

#[test]
fn identify_discrete_matches_oracle() {
    let dir = TempDir::new().unwrap();
    write_law(dir.path(), "law.json", &structured_law());
    let out = proxci(&["identify-discrete", "--law", "law.json", "--oracle"], dir.path());
    assert!(out.status.success(), "{}", stderr(&out));
    let report: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert!(report["max_oracle_deviation"].as_f64().unwrap() < 1e-8, "{report}");
    assert_eq!(report["y0"].as_array().unwrap().len(), 2);
    let ate = report["ate"].as_f64().unwrap();
    assert!((ate - 0.3).abs() < 1e-8, "{ate}");
}

#[test]
fn identify_discrete_without_latent_rejects_oracle() {
    let dir = TempDir::new().unwrap();
    let mut file = LawFile::from_latent(&structured_law());
    let law = structured_law().observable();
    file.axes.u = None;
    file.probabilities = law.probabilities().to_vec();
    fs::write(dir.path().join("obs.json"), serde_json::to_string(&file).unwrap()).unwrap();
    let ok = proxci(&["identify-discrete", "--law", "obs.json"], dir.path());
    assert!(ok.status.success(), "{}", stderr(&ok));
    let out = proxci(&["identify-discrete", "--law", "obs.json", "--oracle"], dir.path());
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn rank_deficient_law_is_a_completeness_failure() {
    let dir = TempDir::new().unwrap();
    // Proxies independent of each other: P(z | w, a, x) has rank one.
    let law = CategoricalLaw::from_fn(LawDims::new(1, 1, 2, 2, 2), vec![0.0, 1.0], |_, _, w, z, a, y| {
        (1.0 + w as f64) * (2.0 + z as f64) * (1.0 + a as f64) * (1.0 + y as f64)
    })
    .unwrap();
    write_law(dir.path(), "flat.json", &law);
    let out = proxci(&["identify-discrete", "--law", "flat.json"], dir.path());
    assert_eq!(out.status.code(), Some(5));
    assert!(stderr(&out).contains("completeness failure"), "{}", stderr(&out));
}
