use std::path::Path;
use std::process::Command;

use nonlocal_fronts::cli::RunManifest;
use tempfile::TempDir;

const HOMOGENEOUS: &str = r#"
[medium]
period = 1.0
a0 = "1"
b = "1"

[kernel]
shape = "quartic"
radius = 0.5
q = 64

[grid]
n = 128
"#;

const PERIODIC: &str = r#"
[medium]
a0 = "1 0.4 0"
b = "1"

[kernel]
radius = 0.5
q = 16

[grid]
n = 32
"#;

fn run(command: &str, config: &str, dir: &Path, extra: &[&str]) -> (i32, RunManifest) {
    let path = dir.join("run.toml");
    std::fs::write(&path, config).unwrap();
    let status = Command::new(env!("CARGO_BIN_EXE_nlfront"))
        .arg(command)
        .arg("--config")
        .arg(&path)
        .arg("--out-dir")
        .arg(dir)
        .args(["--log-level", "error"])
        .args(extra)
        .status()
        .unwrap();
    (status.code().unwrap(), RunManifest::read(dir).unwrap())
}

fn without_clock(mut m: RunManifest) -> RunManifest {
    m.started = 0.0;
    m.wall_clock_s = 0.0;
    m
}

/// Fine scan of the tilted quadrature sum, independent of the library.
fn oracle_speed(radius: f64, q: usize) -> f64 {
    let nodes: Vec<f64> = (0..q)
        .map(|j| radius * (-1.0 + (2 * j + 1) as f64 / q as f64))
        .collect();
    let raw: Vec<f64> = nodes.iter().map(|s| (1.0 - (s / radius).powi(2)).powi(2)).collect();
    let total: f64 = raw.iter().sum();
    let (lo, hi, points) = (0.05f64, 50.0f64, 20_000);
    (0..points)
        .map(|i| {
            let mu = lo * (hi / lo).powf(i as f64 / (points - 1) as f64);
            nodes
                .iter()
                .zip(&raw)
                .map(|(s, w)| w / total * (-mu * s).exp())
                .sum::<f64>()
                / mu
        })
        .fold(f64::INFINITY, f64::min)
}

#[test]
fn speed_matches_the_fine_scan() {
    let dir = TempDir::new().unwrap();
    let (code, m) = run("speed", HOMOGENEOUS, dir.path(), &[]);
    assert_eq!(code, 0, "{:?}", m.error);
    let c_star = m.results["c_star"].as_f64().unwrap();
    let oracle = oracle_speed(0.5, 64);
    assert!((c_star - oracle).abs() <= 1e-6, "{c_star} vs {oracle}");
    let json: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("speed.json")).unwrap()).unwrap();
    assert_eq!(json["c_star"].as_f64().unwrap(), c_star);
    assert!(json["curve"].as_array().unwrap().len() >= 32);
    assert_eq!(m.artifacts, vec!["speed.json"]);
}

#[test]
fn weak_h3_is_a_warning() {
    let dir = TempDir::new().unwrap();
    let config = PERIODIC.replace("a0 = \"1 0.4 0\"", "a0 = \"1 0.75 0\"");
    let (code, m) = run("hypotheses", &config, dir.path(), &[]);
    assert_eq!(code, 0);
    let h = &m.results["hypotheses"];
    assert_eq!(h["h3_sufficient"], serde_json::json!(false));
    assert!((h["a0_oscillation"].as_f64().unwrap() - 1.5).abs() < 1e-12);
    assert!(m.warnings.iter().any(|w| w.contains("H3")));
    assert!(m.checks.values().all(|ok| *ok));
}

#[test]
fn stable_zero_fails_the_hypotheses() {
    let dir = TempDir::new().unwrap();
    let config = PERIODIC.replace("a0 = \"1 0.4 0\"", "a0 = \"-0.5 0.2 0\"");
    let (code, m) = run("hypotheses", &config, dir.path(), &[]);
    assert_eq!(code, 2);
    assert!(!m.checks["h2"]);
    assert!(m.error.unwrap().contains("h2"));
    let (code, _) = run("speed", &config, dir.path(), &[]);
    assert_eq!(code, 2);
}

#[test]
fn subcritical_wave_speed_exits_3() {
    let dir = TempDir::new().unwrap();
    let config = format!("{PERIODIC}\n[experiment]\nc_multiplier = 0.9\n");
    let (code, m) = run("wave", &config, dir.path(), &[]);
    assert_eq!(code, 3);
    assert_eq!(m.exit_code, 3);
    assert!(m.error.unwrap().contains("no subcritical decay rate"));
    assert!(m.results.contains_key("c_star"));
}

#[test]
fn config_errors_exit_1_with_the_reason() {
    let dir = TempDir::new().unwrap();
    let config = format!("{PERIODIC}\n[experiment]\ndiffusivity = 1.0\n");
    let (code, m) = run("speed", &config, dir.path(), &[]);
    assert_eq!(code, 1);
    assert!(m.config.is_none());
    assert!(m.error.unwrap().contains("diffusivity"));

    let config = PERIODIC.replace("radius = 0.5", "radius = 0.01");
    let (code, m) = run("eig", &config, dir.path(), &[]);
    assert_eq!(code, 1);
    assert!(m.error.unwrap().contains("kernel support below grid spacing"));
}

#[test]
fn eig_csv_is_deterministic() {
    let (a, b) = (TempDir::new().unwrap(), TempDir::new().unwrap());
    let config = format!("{PERIODIC}\n[experiment]\neig_points = 11\neig_mu_max = 5\n");
    let (ca, ma) = run("eig", &config, a.path(), &["--threads", "1"]);
    let (cb, mb) = run("eig", &config, b.path(), &["--threads", "2"]);
    assert_eq!((ca, cb), (0, 0));
    let csv_a = std::fs::read_to_string(a.path().join("eig.csv")).unwrap();
    let csv_b = std::fs::read_to_string(b.path().join("eig.csv")).unwrap();
    assert_eq!(csv_a, csv_b);
    assert_eq!(without_clock(ma.clone()), without_clock(mb));

    let mut lines = csv_a.lines();
    assert_eq!(lines.next(), Some("mu,lambda0,residual,iters,min_phi,max_phi"));
    let rows: Vec<&str> = lines.collect();
    assert_eq!(rows.len(), 11);
    let first: Vec<&str> = rows[0].split(',').collect();
    // 17 significant digits.
    assert_eq!(first[1].split('e').next().unwrap().replace(['.', '-'], "").len(), 17);

    let text = std::fs::read_to_string(a.path().join("manifest.json")).unwrap();
    assert_eq!(RunManifest::from_json(&text).unwrap(), ma);
}

#[test]
fn wave_artifacts_are_reproducible() {
    let (a, b) = (TempDir::new().unwrap(), TempDir::new().unwrap());
    let (ca, ma) = run("wave", PERIODIC, a.path(), &["--threads", "1"]);
    let (cb, mb) = run("wave", PERIODIC, b.path(), &["--threads", "2"]);
    assert_eq!((ca, cb), (0, 0), "{:?}", ma.error);
    let csv_a = std::fs::read(a.path().join("profiles.csv")).unwrap();
    assert_eq!(csv_a, std::fs::read(b.path().join("profiles.csv")).unwrap());
    assert_eq!(without_clock(ma.clone()), without_clock(mb));
    assert!(String::from_utf8_lossy(&csv_a).starts_with("eta,phase,psi\n"));
    for key in ["c", "mu", "mu1", "lambda_mu", "lambda_mu1", "d0", "d1", "d2", "b", "M", "L"] {
        assert!(ma.results["constants"].get(key).is_some(), "missing {key}");
    }
    assert!(ma.results["gap"].as_f64().unwrap() <= 1e-6);
    assert!(ma.results.contains_key("mu_hat"));
    assert!(ma.checks.values().all(|ok| *ok), "{:?}", ma.checks);
}

#[test]
fn both_directions_are_supported() {
    let dir = TempDir::new().unwrap();
    let skewed = PERIODIC.replace("a0 = \"1 0.4 0\"", "a0 = \"1 0.3 0.2 0.1 0.1\"");
    let (code, fwd) = run("speed", &skewed, dir.path(), &[]);
    assert_eq!(code, 0);
    let back_config = format!("{skewed}\n[experiment]\nxi = -1\n");
    let (code, back) = run("speed", &back_config, dir.path(), &[]);
    assert_eq!(code, 0);
    let (cf, cb) = (
        fwd.results["c_star"].as_f64().unwrap(),
        back.results["c_star"].as_f64().unwrap(),
    );
    // Symmetric kernels give equal speeds in both directions.
    assert!((cf - cb).abs() <= 1e-9, "{cf} vs {cb}");

    let (code, wave) = run("wave", &back_config, dir.path(), &[]);
    assert_eq!(code, 0, "{:?}", wave.error);
    assert_eq!(wave.results["xi"].as_f64(), Some(-1.0));
}
