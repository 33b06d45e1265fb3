use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn mckv(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mckv"))
        .current_dir(dir)
        .args(args)
        .output()
        .unwrap()
}

fn read_csv(path: &Path) -> (Vec<String>, Vec<Vec<f64>>) {
    let text = std::fs::read_to_string(path).unwrap();
    assert!(!text.contains('\r'));
    let mut lines = text.lines();
    let header = lines.next().unwrap().split(',').map(String::from).collect();
    let rows = lines
        .map(|l| l.split(',').map(|v| v.parse().unwrap()).collect())
        .collect();
    (header, rows)
}

fn meta(path: &Path) -> Value {
    let mut p = path.as_os_str().to_owned();
    p.push(".meta.json");
    serde_json::from_str(&std::fs::read_to_string(p).unwrap()).unwrap()
}

fn g0(t: f64, z: f64) -> f64 {
    z / (2.0 * std::f64::consts::PI * t.powi(3)).sqrt() * (-z * z / (2.0 * t)).exp()
}

#[test]
fn solve_without_feedback_matches_closed_form() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("s.csv");
    let o = mckv(dir.path(), &["solve", "--alpha", "0", "--z", "0.5", "--t-end", "1", "--steps", "1000", "--output", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0));
    let (header, rows) = read_csv(&out);
    assert_eq!(header, ["t", "nu", "g", "L"]);
    assert_eq!(rows.len(), 1000);
    assert!((rows[0][0] - 1e-3).abs() < 1e-15 && (rows[999][0] - 1.0).abs() < 1e-12);
    let worst = rows.iter().map(|r| (r[2] - g0(r[0], 0.5)).abs()).fold(0.0, f64::max);
    assert!(worst < 5e-3, "{worst}");
    let m = meta(&out);
    assert_eq!(m["command"], "solve");
    assert!(m["blow_up"].is_null());
    assert_eq!(m["rows"], 1000);
    assert!(m["wall_time_s"].as_f64().unwrap() >= 0.0);
    assert!(m["workers"].as_u64().unwrap() >= 1);
}

#[test]
fn blow_up_exits_two_and_keeps_truncated_data() {
    let dir = tempfile::tempdir().unwrap();
    let o = mckv(dir.path(), &["solve", "--alpha", "1", "--z", "0.5", "--t-end", "1", "--steps", "1000"]);
    assert_eq!(o.status.code(), Some(2));
    let out = dir.path().join("mckv-solve.csv");
    let (_, rows) = read_csv(&out);
    let m = meta(&out);
    let t = m["blow_up"]["time"].as_f64().unwrap();
    assert!((0.05..=0.2).contains(&t), "{t}");
    assert_eq!(rows.len() as u64 + 1, m["blow_up"]["node"].as_u64().unwrap());
}

#[test]
fn output_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let args = ["particles", "--alpha", "0.4", "--particles", "5000", "--steps", "100", "--seed", "9"];
    let mut bytes = Vec::new();
    for name in ["a.csv", "b.csv"] {
        let mut a = args.to_vec();
        a.extend(["--output", name]);
        assert_eq!(mckv(dir.path(), &a).status.code(), Some(0));
        bytes.push(std::fs::read(dir.path().join(name)).unwrap());
    }
    assert_eq!(bytes[0], bytes[1]);
    let (header, rows) = read_csv(&dir.path().join("a.csv"));
    assert_eq!(header, ["t", "L_hat", "stderr"]);
    assert_eq!(rows.len(), 100);
}

#[test]
fn compare_lines_up_solver_and_particles() {
    let dir = tempfile::tempdir().unwrap();
    let o = mckv(dir.path(), &["compare", "--alpha", "0.5", "--particles", "100000", "--steps", "1000", "--seed", "5"]);
    assert_eq!(o.status.code(), Some(0));
    let (header, rows) = read_csv(&dir.path().join("mckv-compare.csv"));
    assert_eq!(header, ["t", "L", "L_hat", "stderr"]);
    assert_eq!(rows.len(), 1000);
    // the binomial stderr understates the feedback-amplified noise and the
    // lagged scheme trails the solver by O(dt), so allow a wider band
    let last = &rows[999];
    assert!((last[1] - last[2]).abs() <= 5.0 * last[3], "{last:?}");
}

#[test]
fn perturb_density_moments_and_calibration() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    assert_eq!(mckv(d, &["perturb", "--alpha", "0.2", "--steps", "200"]).status.code(), Some(0));
    let (h, rows) = read_csv(&d.join("mckv-perturb.csv"));
    assert_eq!((h.len(), rows.len()), (4, 200));
    assert!(rows.windows(2).all(|w| w[1][3] >= w[0][3]));

    let o = mckv(d, &["perturb", "--alpha", "0.2", "--steps", "200", "--rescale", "0.66", "--output", "r.csv"]);
    assert_eq!(o.status.code(), Some(0));
    let (_, rows) = read_csv(&d.join("r.csv"));
    assert!((rows[199][3] - 0.66).abs() < 1e-12);
    assert_eq!(meta(&d.join("r.csv"))["results"]["rescaled"], true);

    let o = mckv(d, &["density", "--alpha", "0", "--steps", "500", "--t-slice", "0.5", "--x-points", "50"]);
    assert_eq!(o.status.code(), Some(0));
    let (h, rows) = read_csv(&d.join("mckv-density.csv"));
    assert_eq!((h, rows.len()), (vec!["x".to_string(), "p".to_string()], 50));
    assert!(rows[0][1].abs() < 1e-6);

    assert_eq!(mckv(d, &["moments", "--alpha", "0"]).status.code(), Some(0));
    let (h, rows) = read_csv(&d.join("mckv-moments.csv"));
    assert_eq!(h, ["alpha", "T", "mass", "cond_mean", "cond_var"]);
    assert!((rows[0][2] - 0.617_075_077_451_973_8).abs() < 1e-3);
    assert!((rows[0][3] - 0.320_538_885_184_032).abs() < 1e-3);

    assert_eq!(mckv(d, &["calibrate-alpha", "--interbank-fraction", "eu"]).status.code(), Some(0));
    let (_, rows) = read_csv(&d.join("mckv-calibrate-alpha.csv"));
    assert!((rows[0][5] - 0.365_384_615_384_615_4).abs() < 1e-12);
}

#[test]
fn convergence_and_identity_check() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    assert_eq!(mckv(d, &["convergence", "--alpha", "0.5", "--steps", "100"]).status.code(), Some(0));
    let (_, rows) = read_csv(&d.join("mckv-convergence.csv"));
    assert_eq!(rows.iter().map(|r| r[0]).collect::<Vec<_>>(), [100.0, 200.0, 400.0]);
    assert!(meta(&d.join("mckv-convergence.csv"))["results"]["order_g"].is_number());

    assert_eq!(mckv(d, &["lemma1-check", "--alpha", "0.5", "--steps", "10"]).status.code(), Some(0));
    let gap = meta(&d.join("mckv-lemma1-check.csv"))["results"]["max_abs_gap"].as_f64().unwrap();
    assert!(gap < 1e-6, "{gap}");
}

#[test]
fn config_file_and_flag_precedence() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("run.cfg"), "# study\nalpha=0.3\nsteps=50\noutput=cfg.csv\n").unwrap();
    let o = mckv(dir.path(), &["solve", "--config", "run.cfg", "--steps", "40"]);
    assert_eq!(o.status.code(), Some(0));
    let m = meta(&dir.path().join("cfg.csv"));
    assert_eq!(m["inputs"]["alpha"], 0.3);
    assert_eq!(m["inputs"]["steps"], 40);
}

#[test]
fn input_errors_exit_one() {
    let dir = tempfile::tempdir().unwrap();
    for args in [
        &["solve", "--z", "-1"][..],
        &["solve", "--bogus"],
        &["launch"],
        &["solve", "--config", "missing.cfg"],
        &["solve", "--steps", "10", "--output", "no/such/dir/x.csv"],
        &["calibrate-alpha", "--recovery", "0.1"],
    ] {
        let o = mckv(dir.path(), args);
        assert_eq!(o.status.code(), Some(1), "{args:?}");
        assert!(!o.stderr.is_empty());
    }
    assert_eq!(mckv(dir.path(), &["--help"]).status.code(), Some(0));
}
