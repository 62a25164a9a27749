use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use wavemap::matching::{glue_at_cone, ExteriorChoice, GlobalProfile};
use wavemap::segment_solver::PicardConfig;

fn wavemap(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_wavemap"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn solve_small(dir: &Path, name: &str) -> PathBuf {
    let o = wavemap(dir, &["solve", "--d0", "0.01", "--q1", "0.02", "--out", name]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    dir.join(name)
}

fn read_json(p: &Path) -> serde_json::Value {
    serde_json::from_str(&std::fs::read_to_string(p).unwrap()).unwrap()
}

fn read_csv(p: &Path) -> (Vec<String>, Vec<Vec<f64>>) {
    let text = std::fs::read_to_string(p).unwrap();
    let mut lines = text.lines();
    let header = lines.next().unwrap().split(',').map(String::from).collect();
    let rows = lines
        .map(|l| l.split(',').map(|s| s.parse().unwrap()).collect())
        .collect();
    (header, rows)
}

#[test]
fn zero_data_gives_zero_profile() {
    let dir = tempfile::tempdir().unwrap();
    let o = wavemap(dir.path(), &["solve", "--d0", "0", "--q1", "0", "--out", "z.json"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let v = read_json(&dir.path().join("z.json"));
    assert_eq!(v["schema"], 1);
    for seg in v["segments"].as_array().unwrap() {
        for q in seg["Q"].as_array().unwrap() {
            assert_eq!(q.as_f64().unwrap(), 0.0);
        }
    }
}

#[test]
fn small_archive_is_continuous() {
    let dir = tempfile::tempdir().unwrap();
    let p = solve_small(dir.path(), "s.json");
    let v = read_json(&p);
    assert!(v["continuity_residual"].as_f64().unwrap().abs() <= 1e-8);
    assert_eq!(v["inputs"]["exterior"]["mode"], "small");
    assert_eq!(v["segments"].as_array().unwrap().len(), 4);
}

#[test]
fn large_mode_summary() {
    let dir = tempfile::tempdir().unwrap();
    let o = wavemap(
        dir.path(),
        &["solve", "--d0", "0.01", "--mode", "large", "--d1t", "100", "--out", "l.json"],
    );
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let out = String::from_utf8(o.stdout).unwrap();
    let max_q: f64 = out
        .split("max|Q|")
        .nth(1)
        .and_then(|s| s.split_whitespace().next())
        .unwrap()
        .parse()
        .unwrap();
    assert!((3.0..=30.0).contains(&max_q), "{out}");
}

#[test]
fn usage_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    for args in [
        &["solve", "--d0", "abc", "--out", "x.json"][..],
        &["solve", "--out", "x.json"],
        &["solve", "--d0", "0.01", "--d1t", "5", "--out", "x.json"],
        &["solve", "--d0", "0.01", "--mode", "large", "--d1t", "0.5", "--out", "x.json"],
        &["solve", "--d0", "0.01", "--mode", "medium", "--out", "x.json"],
        &["solve", "--d0", "5", "--out", "x.json"],
        &["basis", "--table", "interior", "--a-min", "0.5", "--a-max", "1.5"],
        &["no-such-command"],
    ] {
        let o = wavemap(d, args);
        assert_eq!(code(&o), 2, "{args:?}: {}", stderr(&o));
    }
    assert!(!d.join("x.json").exists());

    std::fs::write(d.join("bad.json"), "{ not json").unwrap();
    let o = wavemap(d, &["profile-csv", "--in", "bad.json"]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("malformed"));

    let p = solve_small(d, "s.json");
    let mut v = read_json(&p);
    v["schema"] = 99.into();
    std::fs::write(d.join("future.json"), v.to_string()).unwrap();
    let o = wavemap(d, &["profile-csv", "--in", "future.json"]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("schema"));

    let o = wavemap(d, &["profile-csv", "--in", "missing.json"]);
    assert_eq!(code(&o), 2);
}

#[test]
fn profile_csv_rows_and_residual() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    solve_small(d, "s.json");
    let o = wavemap(d, &["profile-csv", "--in", "s.json", "--samples", "200", "--out", "p.csv"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let (header, rows) = read_csv(&d.join("p.csv"));
    assert_eq!(header, ["a", "Q", "Qprime", "ode_residual"]);
    assert_eq!(rows.len(), 200);
    assert!(rows.windows(2).all(|w| w[0][0] < w[1][0]));
    for r in &rows {
        assert!(r[3].abs() < 1e-6, "residual {} at a = {}", r[3], r[0]);
    }

    solve_zero(d);
    let o = wavemap(d, &["profile-csv", "--in", "z.json", "--samples", "50", "--out", "zp.csv"]);
    assert_eq!(code(&o), 0);
    let (_, rows) = read_csv(&d.join("zp.csv"));
    assert!(rows.iter().all(|r| r[1] == 0.0 && r[2] == 0.0 && r[3] == 0.0));
}

fn solve_zero(d: &Path) {
    let o = wavemap(d, &["solve", "--d0", "0", "--out", "z.json"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
}

#[test]
fn archive_round_trips_bit_exactly() {
    let dir = tempfile::tempdir().unwrap();
    let p = solve_small(dir.path(), "s.json");
    let v = read_json(&p);
    let stored: GlobalProfile = serde_json::from_value(v["profile"].clone()).unwrap();
    let fresh = glue_at_cone(0.01, ExteriorChoice::Small { q1: 0.02 }, &PicardConfig::default()).unwrap();
    assert_eq!(stored, fresh);
    for a in [1e-3, 0.3, 0.9, 0.999, 1.001, 2.0, 50.0, 900.0] {
        let (q0, p0) = stored.evaluate(a).unwrap();
        let (q1, p1) = fresh.evaluate(a).unwrap();
        assert_eq!(q0.to_bits(), q1.to_bits());
        assert_eq!(p0.to_bits(), p1.to_bits());
    }
    // the flat segment tables agree with the embedded profile
    let seg0 = &v["segments"][0];
    let nodes: Vec<f64> = serde_json::from_value(seg0["nodes"].clone()).unwrap();
    let q: Vec<f64> = serde_json::from_value(seg0["Q"].clone()).unwrap();
    assert_eq!(nodes, fresh.segments[0].nodes());
    assert_eq!(q, fresh.segments[0].q_values());
}

#[test]
fn residual_scan_outputs_and_fd_guard() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    solve_small(d, "s.json");
    let o = wavemap(
        d,
        &["residual-scan", "--in", "s.json", "--t-min", "50", "--t-max", "400", "--t-steps", "5", "--out", "r.csv"],
    );
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let (header, rows) = read_csv(&d.join("r.csv"));
    assert_eq!(header, ["t", "l2", "strip_sup"]);
    assert_eq!(rows.len(), 5);
    assert!(rows.iter().all(|r| r[1] > 0.0 && r[2] > 0.0));
    let side = read_json(&d.join("r.json"));
    assert_eq!(side["schema"], 1);
    let l2 = side["l2_exponent"].as_f64().unwrap();
    assert!(l2 < 0.0, "{side}");

    let o = wavemap(
        d,
        &["residual-scan", "--in", "s.json", "--method", "fd", "--fd-step", "0.5", "--out", "f.csv"],
    );
    assert_eq!(code(&o), 3, "{}", stderr(&o));
}

#[test]
fn basis_tables() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    for table in ["interior", "exterior"] {
        let out = format!("{table}.csv");
        let o = wavemap(d, &["basis", "--table", table, "--samples", "21", "--out", &out]);
        assert_eq!(code(&o), 0, "{}", stderr(&o));
        let (header, rows) = read_csv(&d.join(&out));
        assert_eq!(header, ["a", "phi1", "phi2", "wronskian_check"]);
        assert_eq!(rows.len(), 21);
        assert!(rows.iter().all(|r| r[3].abs() < 1e-6), "{table}");
    }
    // phi1(1/2) = 3
    let (_, rows) = read_csv(&d.join("interior.csv"));
    let mid = rows.iter().find(|r| (r[0] - 0.5).abs() < 1e-12).unwrap();
    assert!((mid[1] - 3.0).abs() < 1e-12);
}

#[test]
fn runs_are_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let a = std::fs::read(solve_small(d, "a.json")).unwrap();
    let b = std::fs::read(solve_small(d, "b.json")).unwrap();
    assert_eq!(a, b);
    for (threads, out) in [("1", "r1.csv"), ("4", "r4.csv")] {
        let o = wavemap(
            d,
            &["--threads", threads, "residual-scan", "--in", "a.json", "--t-steps", "4", "--out", out],
        );
        assert_eq!(code(&o), 0, "{}", stderr(&o));
    }
    assert_eq!(std::fs::read(d.join("r1.csv")).unwrap(), std::fs::read(d.join("r4.csv")).unwrap());
}

#[test]
fn config_file_precedence() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    solve_small(d, "flags.json");
    std::fs::write(d.join("run.cfg"), "# small profile\nd0 = 0.01\nq1 = 0.02\nout = cfg.json\n").unwrap();
    let o = wavemap(d, &["--config", "run.cfg", "solve"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert_eq!(std::fs::read(d.join("flags.json")).unwrap(), std::fs::read(d.join("cfg.json")).unwrap());

    // a flag beats the file
    let o = wavemap(d, &["--config", "run.cfg", "solve", "--q1", "0", "--out", "over.json"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let v = read_json(&d.join("over.json"));
    assert_eq!(v["inputs"]["exterior"]["q1"].as_f64().unwrap(), 0.0);

    std::fs::write(d.join("bad.cfg"), "d0 0.01\n").unwrap();
    let o = wavemap(d, &["--config", "bad.cfg", "solve"]);
    assert_eq!(code(&o), 2);
}

#[test]
fn short_evolution() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    solve_small(d, "s.json");
    let o = wavemap(
        d,
        &[
            "evolve", "--in", "s.json", "--T", "50", "--delta1", "1e-3", "--horizon-factor", "1.2",
            "--cells", "1024", "--records", "10", "--out", "ev.csv",
        ],
    );
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let (header, rows) = read_csv(&d.join("ev.csv"));
    assert_eq!(header, ["t", "sup_eps", "energy_eps", "energy_total"]);
    assert!(rows.len() >= 10);
    assert_eq!(rows[0][0], 50.0);
    assert!((rows[0][2] - 1e-3).abs() < 1e-9);
    let side = read_json(&d.join("ev.json"));
    assert!(side["report"]["blowup"].is_null());

    // residual at T dominating the perturbation is rejected up front
    let o = wavemap(
        d,
        &["evolve", "--in", "s.json", "--T", "20", "--delta1", "1e-3", "--cells", "1024", "--out", "bad.csv"],
    );
    assert_eq!(code(&o), 2);
    assert!(!d.join("bad.csv").exists());
}

#[test]
fn critnorm_runs_and_guards_aliasing() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let o = wavemap(d, &["solve", "--d0", "0.01", "--q1", "0.02", "--a-max", "1e7", "--out", "w.json"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let o = wavemap(d, &["critnorm", "--in", "w.json", "--T", "50", "--kmin-decades", "3", "--out", "cn.csv"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let (header, rows) = read_csv(&d.join("cn.csv"));
    assert_eq!(header, ["k_min", "N2"]);
    assert!(rows.len() > 4);
    // the norm grows as the cutoff goes down
    assert!(rows.first().unwrap()[1] > rows.last().unwrap()[1]);
    let side = read_json(&d.join("cn.json"));
    assert!(side["report"]["slope"].as_f64().unwrap() > 0.0);

    let o = wavemap(d, &["critnorm", "--in", "w.json", "--h", "5", "--out", "x.csv"]);
    assert_eq!(code(&o), 3);
    assert!(stderr(&o).contains("aliasing"));
}
