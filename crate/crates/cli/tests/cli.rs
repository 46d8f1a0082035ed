use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

/// xorshift noise in [-0.5, 0.5); keeps the fixtures free of an RNG dependency.
struct Noise(u64);

impl Noise {
    fn next(&mut self) -> f64 {
        self.0 ^= self.0 << 13;
        self.0 ^= self.0 >> 7;
        self.0 ^= self.0 << 17;
        (self.0 >> 11) as f64 / (1u64 << 53) as f64 - 0.5
    }
}

fn quarter(t: usize) -> String {
    format!("{}-Q{}", 2000 + t / 4, t % 4 + 1)
}

/// Single station, three variables, 80 quarters of a stable VAR(1).
fn station_csv(dir: &Path) -> PathBuf {
    let mut noise = Noise(0x9e37_79b9_7f4a_7c15);
    let (mut p, mut temp, mut g) = (0.0, 0.0, 0.0);
    let mut s = String::from("station,date,variable,value\n");
    for t in 0..80 {
        let season = (t as f64 * std::f64::consts::FRAC_PI_2).sin();
        p = 0.3 * p + 2.0 * season + noise.next();
        temp = 0.5 * temp + 0.2 * p + noise.next();
        g = 0.6 * g - 0.3 * p + 0.2 * temp + noise.next();
        for (name, v) in [("precipitation", 100.0 + 10.0 * p), ("temperature", 28.0 + temp), ("gwl", 20.0 + g)] {
            writeln!(s, "Patiyapura,{},{name},{v:.6}", quarter(t)).unwrap();
        }
    }
    let path = dir.join("station.csv");
    fs::write(&path, s).unwrap();
    path
}

/// Three stations: A and B share a common signal, C is unrelated.
fn network_csv(dir: &Path) -> PathBuf {
    let mut noise = Noise(42);
    let mut s = String::from("station,date,variable,value,latitude,longitude\n");
    for t in 0..60 {
        let common = noise.next() * 4.0;
        let rows = [("A", 20.0 + common + 0.1 * noise.next(), 22.1), ("B", 15.0 + common, 22.2), ("C", 10.0 + noise.next(), 22.3)];
        for (name, v, lat) in rows {
            writeln!(s, "{name},{},gwl,{v:.6},{lat},73.1", quarter(t)).unwrap();
        }
    }
    let path = dir.join("net.csv");
    fs::write(&path, s).unwrap();
    path
}

fn gwts(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_gwts"))
        .args(args)
        .current_dir(dir)
        .env_remove("GWTS_SEED")
        .output()
        .unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn fitted() -> TempDir {
    let dir = TempDir::new().unwrap();
    let input = station_csv(dir.path());
    let o = gwts(dir.path(), &["fit", "--input", input.to_str().unwrap(), "--lag", "1", "--out", "out"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    dir
}

fn json(path: impl AsRef<Path>) -> serde_json::Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn pipeline_writes_every_artifact() {
    let dir = fitted();
    let d = dir.path();
    for args in [
        vec!["diagnose", "--out", "out"],
        vec!["structural", "--out", "out", "--boot", "10", "--seed", "1"],
        vec!["shelflife", "--input", "station.csv", "--lag", "1", "--out", "sl"],
    ] {
        let o = gwts(d, &args);
        assert_eq!(code(&o), 0, "{args:?}: {}", stderr(&o));
    }
    for f in [
        "out/var_model.json",
        "out/lag_selection.csv",
        "out/fit_summary.json",
        "out/diagnostics.json",
        "out/efp.csv",
        "out/efp.svg",
        "out/granger.json",
        "out/irf.csv",
        "out/irf.svg",
        "out/fevd.csv",
        "out/fevd.svg",
        "sl/ape.csv",
        "sl/shelf_life.json",
        "sl/plot.svg",
    ] {
        assert!(d.join(f).is_file(), "missing {f}");
    }
    assert_eq!(json(d.join("out/fit_summary.json"))["p"], 1);
}

#[test]
fn usage_errors_exit_2_and_runtime_errors_exit_1() {
    let dir = TempDir::new().unwrap();
    let d = dir.path();
    let input = station_csv(d);
    let input = input.to_str().unwrap();

    assert_eq!(code(&gwts(d, &["fit", "--input", input, "--lag", "0"])), 2);
    assert_eq!(code(&gwts(d, &["fit", "--input", input, "--lag", "2", "--auto-lag"])), 2);
    assert_eq!(code(&gwts(d, &["fit", "--input", input, "--holdout", "1.5"])), 2);
    assert_eq!(code(&gwts(d, &["no-such-command"])), 2);
    assert_eq!(code(&gwts(d, &["--help"])), 0);

    let o = gwts(d, &["fit", "--input", "absent.csv"]);
    assert_eq!(code(&o), 1);
    assert!(stderr(&o).contains("absent.csv"), "{}", stderr(&o));

    let o = gwts(d, &["diagnose", "--out", "nothing-here"]);
    assert_eq!(code(&o), 1);
    assert!(stderr(&o).contains("gwts fit"), "{}", stderr(&o));
}

#[test]
fn bootstrap_needs_a_seed_and_is_reproducible() {
    let dir = fitted();
    let d = dir.path();
    let o = gwts(d, &["structural", "--out", "out", "--boot", "20"]);
    assert_eq!(code(&o), 2, "{}", stderr(&o));
    assert!(stderr(&o).contains("seed"));

    let run = |seed: &str| {
        let o = gwts(d, &["structural", "--out", "out", "--boot", "20", "--seed", seed]);
        assert_eq!(code(&o), 0, "{}", stderr(&o));
        fs::read(d.join("out/irf.csv")).unwrap()
    };
    let first = run("7");
    assert_eq!(first, run("7"));
    assert_ne!(first, run("8"));

    let o = Command::new(env!("CARGO_BIN_EXE_gwts"))
        .args(["structural", "--out", "out", "--boot", "20"])
        .current_dir(d)
        .env("GWTS_SEED", "7")
        .output()
        .unwrap();
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert_eq!(fs::read(d.join("out/irf.csv")).unwrap(), first);
}

#[test]
fn flags_override_config_which_overrides_defaults() {
    let dir = fitted();
    let d = dir.path();
    fs::write(d.join("gwts.toml"), "[diagnose]\nalpha = 0.10\nout = \"out\"\n").unwrap();

    assert_eq!(code(&gwts(d, &["--config", "gwts.toml", "diagnose"])), 0);
    assert_eq!(json(d.join("out/diagnostics.json"))["alpha"], 0.1);

    assert_eq!(code(&gwts(d, &["--config", "gwts.toml", "diagnose", "--alpha", "0.01"])), 0);
    assert_eq!(json(d.join("out/diagnostics.json"))["alpha"], 0.01);

    assert_eq!(code(&gwts(d, &["diagnose", "--out", "out"])), 0);
    assert_eq!(json(d.join("out/diagnostics.json"))["alpha"], 0.05);

    fs::write(d.join("bad.toml"), "[diagnose]\nalpha = \"high\"\n").unwrap();
    assert_eq!(code(&gwts(d, &["--config", "bad.toml", "diagnose", "--out", "out"])), 2);
}

#[test]
fn cdd_network_and_empty_edge_set() {
    let dir = TempDir::new().unwrap();
    let d = dir.path();
    let input = network_csv(d);
    let input = input.to_str().unwrap();

    let o = gwts(d, &["cdd", "--input", input, "--threshold", "0.5", "--out", "net"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let edges = fs::read_to_string(d.join("net/edges.csv")).unwrap();
    assert!(edges.lines().skip(1).any(|l| l.contains('A') && l.contains('B')), "{edges}");
    assert!(!edges.lines().skip(1).any(|l| l.contains('C')), "{edges}");
    assert!(d.join("net/network.geojson").is_file());

    let o = gwts(d, &["cdd", "--input", input, "--threshold", "1.5", "--out", "none"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert_eq!(fs::read_to_string(d.join("none/edges.csv")).unwrap().lines().count(), 1);

    assert_eq!(code(&gwts(d, &["cdd", "--input", input, "--threshold", "-1"])), 2);
}

#[test]
fn reproduce_names_missing_fixtures() {
    let dir = TempDir::new().unwrap();
    let o = gwts(dir.path(), &["reproduce", "--fixtures", "fx"]);
    assert_eq!(code(&o), 1);
    let err = stderr(&o);
    assert!(err.contains("patiyapura.csv") && err.contains("fetch_fixtures.sh"), "{err}");
}
