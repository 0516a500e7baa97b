use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use gpsys_cli::config::{ExperimentConfig, InitialKind};
use proptest::prelude::*;

fn configs() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn gpsys(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_gpsys")).args(args).output().expect("binary runs")
}

fn run_config(config: &Path, out: &Path, cmd: &str, extra: &[&str]) -> Output {
    let mut args = vec!["--config", config.to_str().unwrap(), "--out", out.to_str().unwrap(), cmd];
    args.extend_from_slice(extra);
    gpsys(&args)
}

fn write(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p
}

fn json(path: &Path) -> serde_json::Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

const SCALAR: &str = "seed = 3\n\n[system]\nspace_dim = 1\nr = 1.0\ncoupling = [[1.0]]\n";

#[test]
fn ode_config_blows_up_at_one_half() {
    let tmp = tempfile::tempdir().unwrap();
    let out = run_config(&configs().join("ode_scalar.toml"), tmp.path(), "simulate", &[]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let rate = json(&tmp.path().join("rate.json"));
    assert_eq!(rate["outcome"], "blow_up");
    assert!((rate["t_est"].as_f64().unwrap() - 0.5).abs() < 5e-3);
    assert!((rate["rate"]["exponent"].as_f64().unwrap() - 0.5).abs() < 1e-2);
    let csv = fs::read_to_string(tmp.path().join("trajectory.csv")).unwrap();
    assert!(csv.starts_with("t,sup_norm,dt\n"));
}

#[test]
fn zero_data_reports_no_blow_up() {
    let tmp = tempfile::tempdir().unwrap();
    let out = run_config(&configs().join("zero.toml"), tmp.path(), "simulate", &[]);
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).contains("no-blow-up-detected"));
    assert_eq!(json(&tmp.path().join("rate.json"))["outcome"], "no_blow_up");
}

#[test]
fn zero_rescaled_run_passes_trivially() {
    let tmp = tempfile::tempdir().unwrap();
    let out = run_config(&configs().join("zero.toml"), tmp.path(), "rescaled", &[]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(json(&tmp.path().join("monitor.json"))["passed"], true);
}

#[test]
fn supercritical_rate_request_is_rejected_with_line() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write(tmp.path(), "c.toml", "[system]\nspace_dim = 3\nr = 2.5\ncoupling = [[1.0]]\n");
    let out = run_config(&cfg, tmp.path(), "simulate", &[]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("c.toml:3: [system] r"), "{err}");
    assert!(err.contains("subcritical"), "{err}");
}

#[test]
fn asymmetric_coupling_is_rejected() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write(
        tmp.path(),
        "c.toml",
        "[system]\nspace_dim = 1\nr = 1.0\ncoupling = [[1.0, 0.3], [0.2, 1.0]]\n",
    );
    let out = run_config(&cfg, tmp.path(), "verify", &[]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains(":4: [system] coupling") && err.contains("symmetric"), "{err}");
}

#[test]
fn bad_grid_and_unknown_key_are_located() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write(tmp.path(), "c.toml", &format!("{SCALAR}\n[grid]\nhalf_extent = 4.0\npoints = 20\n"));
    let out = run_config(&cfg, tmp.path(), "simulate", &[]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("c.toml:10: [grid] points"));

    let cfg = write(tmp.path(), "d.toml", &format!("{SCALAR}\n[grid]\npionts = 21\n"));
    let out = run_config(&cfg, tmp.path(), "simulate", &[]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("line 9") && err.contains("pionts"), "{err}");
}

#[test]
fn radii_must_fit_the_grid() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write(tmp.path(), "c.toml", &format!("{SCALAR}\n[monitors]\ncutoff_radii = [6.0]\n"));
    let out = run_config(&cfg, tmp.path(), "rescaled", &[]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("c.toml:9: [monitors] cutoff_radii"));
}

#[test]
fn single_resolution_is_inconclusive_but_succeeds() {
    let tmp = tempfile::tempdir().unwrap();
    let text = fs::read_to_string(configs().join("benchmark_m1.toml"))
        .unwrap()
        .replace("resolutions = [101, 201]", "resolutions = [101]");
    let cfg = write(tmp.path(), "c.toml", &text);
    let out = run_config(&cfg, tmp.path(), "verify", &[]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(String::from_utf8_lossy(&out.stdout).contains("inconclusive"));
    let doc = json(&tmp.path().join("verify.json"));
    assert_eq!(doc["convergence_inconclusive"], true);
    assert!(doc["convergence"][0]["ratio"].is_null());
}

#[test]
fn failing_bar_exits_with_verification_code() {
    let tmp = tempfile::tempdir().unwrap();
    let text = fs::read_to_string(configs().join("benchmark_m1.toml"))
        .unwrap()
        .replace("ds_factor = 0.2", "ds_factor = 0.2\nmin_ratio = 100.0");
    let cfg = write(tmp.path(), "c.toml", &text);
    let out = run_config(&cfg, tmp.path(), "verify", &[]);
    assert_eq!(out.status.code(), Some(4), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(String::from_utf8_lossy(&out.stderr).contains("convergence"));
}

#[test]
fn exponents_from_flags() {
    let out = gpsys(&["exponents", "--p", "3", "--q", "2"]);
    assert_eq!(out.status.code(), Some(0));
    let doc: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert!((doc["schedule"]["lambda_q"].as_f64().unwrap() - 10.0 / 3.0).abs() < 1e-15);
    assert_eq!(doc["lambda_searched"], true);

    let out = gpsys(&["exponents", "--p", "3", "--q", "1.5"]);
    assert_eq!(out.status.code(), Some(2));

    let tmp = tempfile::tempdir().unwrap();
    let out = gpsys(&["--out", tmp.path().to_str().unwrap(), "exponents", "--p", "3", "--q", "2", "--q-target", "3", "--r-target", "1"]);
    assert_eq!(out.status.code(), Some(0));
    let doc = json(&tmp.path().join("schedule.json"));
    assert_eq!(doc["chain"]["m"], 5);
    assert_eq!(doc["chain"]["exact_radius_ratio"], "1024");
}

#[test]
fn missing_config_is_a_validation_error() {
    assert_eq!(gpsys(&["simulate"]).status.code(), Some(2));
    assert_eq!(gpsys(&["--config", "/nonexistent/x.toml", "simulate"]).status.code(), Some(2));
    assert_eq!(gpsys(&["--threads", "0", "exponents", "--p", "3", "--q", "2"]).status.code(), Some(2));
}

fn dir_bytes(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<(String, Vec<u8>)> = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for entry in fs::read_dir(&d).unwrap() {
            let p = entry.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                files.push((p.strip_prefix(dir).unwrap().display().to_string(), fs::read(&p).unwrap()));
            }
        }
    }
    files.sort();
    files
}

#[test]
fn report_is_byte_reproducible_across_thread_counts() {
    let tmp = tempfile::tempdir().unwrap();
    let text = fs::read_to_string(configs().join("benchmark_m2_ones.toml"))
        .unwrap()
        .replace("s_max = 5.0", "s_max = 2.0")
        .replace("seed = 7", "seed = 7\n\n[grid]\nhalf_extent = 8.0\npoints = 129\n\n[outputs]\nsnapshot_every = 200");
    let cfg = write(tmp.path(), "c.toml", &text);
    let a = tmp.path().join("a");
    let b = tmp.path().join("b");
    let ra = run_config(&cfg, &a, "report", &["--threads", "1"]);
    let rb = run_config(&cfg, &b, "report", &[]);
    assert_eq!(ra.status.code(), Some(0), "{}", String::from_utf8_lossy(&ra.stderr));
    assert_eq!(rb.status.code(), Some(0));
    let fa = dir_bytes(&a);
    let fb = dir_bytes(&b);
    let names: Vec<&str> = fa.iter().map(|f| f.0.as_str()).collect();
    for expected in ["trajectory.csv", "rate.json", "energy.csv", "monitor.json", "verify.json", "schedule.json", "summary.json", "snapshots.csv"] {
        assert!(names.contains(&expected), "missing {expected}: {names:?}");
    }
    assert!(names.iter().any(|n| n.starts_with("snapshots/")));
    assert_eq!(fa, fb);
}

#[test]
fn snapshot_files_read_back_as_initial_data() {
    let tmp = tempfile::tempdir().unwrap();
    let text = format!("{SCALAR}\n[grid]\nhalf_extent = 4.0\npoints = 33\n\n[initial]\nkind = \"gaussian\"\nvalues = [3.0]\n\n[outputs]\nsnapshot_every = 50\n");
    let cfg = write(tmp.path(), "c.toml", &text);
    let out = run_config(&cfg, &tmp.path().join("o"), "simulate", &[]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let text = format!(
        "{SCALAR}\n[grid]\nhalf_extent = 4.0\npoints = 33\n\n[initial]\nkind = \"file\"\npath = \"o/snapshots/snapshot_00000.csv\"\n"
    );
    let cfg = write(tmp.path(), "d.toml", &text);
    let out = run_config(&cfg, &tmp.path().join("p"), "simulate", &[]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(
        fs::read(tmp.path().join("o/trajectory.csv")).unwrap(),
        fs::read(tmp.path().join("p/trajectory.csv")).unwrap()
    );
}

#[test]
fn shipped_configs_validate_and_round_trip() {
    for entry in fs::read_dir(configs()).unwrap() {
        let path = entry.unwrap().path();
        let source = fs::read_to_string(&path).unwrap();
        let cfg = ExperimentConfig::from_toml(&source).unwrap();
        cfg.validate(&source, "x", path.parent()).unwrap();
        let text = cfg.to_toml();
        let again = ExperimentConfig::from_toml(&text).unwrap();
        assert_eq!(cfg, again, "{}", path.display());
        assert_eq!(text, again.to_toml());
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn config_round_trip(
        seed in any::<u64>(),
        r in 0.05f64..4.0,
        m in 1usize..4,
        points in 8usize..200,
        half in 1.0f64..40.0,
        values in proptest::collection::vec(-5.0f64..5.0, 1..4),
        qs in proptest::collection::vec(2.0f64..4.0, 0..3),
        dt in proptest::option::of(1e-6f64..1e-2),
    ) {
        let mut cfg = ExperimentConfig::from_toml("[system]\nspace_dim = 1\nr = 1.0\ncoupling = [[1.0]]\n").unwrap();
        cfg.seed = seed;
        cfg.system.r = r;
        cfg.system.coupling = vec![vec![1.0; m]; m];
        cfg.grid.points = 2 * points + 1;
        cfg.grid.half_extent = half;
        cfg.initial.kind = InitialKind::Constant;
        cfg.initial.values = values;
        cfg.monitors.q = qs;
        cfg.solver.dt_init = dt;
        let once = ExperimentConfig::from_toml(&cfg.to_toml()).unwrap();
        prop_assert_eq!(&once, &cfg);
        prop_assert_eq!(once.to_toml(), cfg.to_toml());
    }
}
