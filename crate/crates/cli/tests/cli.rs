use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_chillmpc"))
}

fn data(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data").join(name)
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn short_cycle(dir: &Path, speed: f64, duration: f64) -> PathBuf {
    let p = dir.join(format!("cycle_{speed}.csv"));
    fs::write(&p, format!("time_s,speed_kmh\n0,{speed}\n{duration},{speed}\n")).unwrap();
    p
}

fn json(path: &Path) -> serde_json::Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn identify_recovers_generator_coefficients() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("fit.json");
    let o = run(&["identify", "--data", data("synthetic_id.csv").to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    let v = json(&out);
    let truth = [-0.084, -0.487, -1.121, -1.730, 0.729, 0.690, -11.457];
    for (i, t) in truth.iter().enumerate() {
        let got = v["params"][format!("gamma{}", i + 1)].as_f64().unwrap();
        assert!(((got - t) / t).abs() < 1e-6, "gamma{}: {got} vs {t}", i + 1);
    }
    assert!(v["validation"]["rmse_devap"].as_f64().unwrap() < 1e-9);
}

#[test]
fn identify_empty_file_fails_with_line() {
    let dir = tempfile::tempdir().unwrap();
    let empty = dir.path().join("empty.csv");
    fs::write(&empty, "").unwrap();
    let o = run(&["identify", "--data", empty.to_str().unwrap(), "--out", dir.path().join("f.json").to_str().unwrap()]);
    assert!(!o.status.success());
    assert!(stderr(&o).contains(":1:"), "{}", stderr(&o));
    assert!(!dir.path().join("f.json").exists());
}

#[test]
fn identify_unexcited_blower_names_gamma3() {
    let dir = tempfile::tempdir().unwrap();
    let text = fs::read_to_string(data("synthetic_id.csv")).unwrap();
    let mut lines = text.lines();
    let mut out = String::from(lines.next().unwrap());
    out.push('\n');
    for l in lines {
        let mut f: Vec<&str> = l.split(',').collect();
        f[7] = "0";
        out.push_str(&f.join(","));
        out.push('\n');
    }
    let p = dir.path().join("flat.csv");
    fs::write(&p, out).unwrap();
    let o = run(&["identify", "--data", p.to_str().unwrap(), "--out", dir.path().join("f.json").to_str().unwrap()]);
    assert!(!o.status.success());
    assert!(stderr(&o).contains("gamma3"), "{}", stderr(&o));
}

#[test]
fn simulate_writes_log_and_report() {
    let dir = tempfile::tempdir().unwrap();
    let cycle = short_cycle(dir.path(), 40.0, 150.0);
    let out = dir.path().join("run");
    let o = run(&[
        "simulate",
        "--config",
        data("default_config.json").to_str().unwrap(),
        "--cycle",
        cycle.to_str().unwrap(),
        "--beta",
        "constant",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let log = fs::read_to_string(out.join("step_log.csv")).unwrap();
    assert_eq!(
        log.lines().next().unwrap(),
        "time_s,speed_kmh,t_evap_c,w_bl_kgps,dw_bl_kgps,t_evap_targ_c,t_cab_c,t_discharge_c,cop,beta,\
         p_dacp_w,p_dacp_targ_w,p_comp_w,p_edf_w,solve_time_s,solver_status"
    );
    assert_eq!(log.lines().count(), 1 + 50);
    let rep = json(&out.join("energy_report.json"));
    for k in ["e_dace_kj", "e_comp_kj", "e_edf_kj", "e_tot_kj", "deltas_vs_baseline_pct"] {
        assert!(rep.get(k).is_some(), "missing {k}");
    }
    let stdout = String::from_utf8_lossy(&o.stdout);
    assert!(stdout.contains("E_tot=") && stdout.contains("max_tracking_error="), "{stdout}");
}

#[test]
fn simulate_is_byte_reproducible_and_seeded() {
    let dir = tempfile::tempdir().unwrap();
    let cycle = short_cycle(dir.path(), 20.0, 60.0);
    let go = |name: &str| {
        let out = dir.path().join(name);
        let o = run(&[
            "--seed",
            "7",
            "simulate",
            "--config",
            data("default_config.json").to_str().unwrap(),
            "--cycle",
            cycle.to_str().unwrap(),
            "--beta",
            "speed",
            "--out",
            out.to_str().unwrap(),
        ]);
        assert!(o.status.success(), "{}", stderr(&o));
        fs::read(out.join("step_log.csv")).unwrap()
    };
    assert_eq!(go("a"), go("b"));
}

#[test]
fn simulate_missing_cycle_fails() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&[
        "simulate",
        "--config",
        data("default_config.json").to_str().unwrap(),
        "--cycle",
        dir.path().join("nope.csv").to_str().unwrap(),
        "--beta",
        "constant",
        "--out",
        dir.path().join("o").to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("nope.csv"));
}

#[test]
fn simulate_rejects_target_gap() {
    let dir = tempfile::tempdir().unwrap();
    let cycle = short_cycle(dir.path(), 20.0, 90.0);
    let tp = dir.path().join("t.csv");
    fs::write(&tp, "time_s,p_dacp_targ_w,t_evap_max_c\n0,2000,10\n30,1800,10\n").unwrap();
    let o = run(&[
        "simulate",
        "--config",
        data("default_config.json").to_str().unwrap(),
        "--cycle",
        cycle.to_str().unwrap(),
        "--targets",
        tp.to_str().unwrap(),
        "--beta",
        "constant",
        "--out",
        dir.path().join("o").to_str().unwrap(),
    ]);
    assert!(!o.status.success());
    assert!(stderr(&o).contains("coverage"), "{}", stderr(&o));
}

#[test]
fn config_with_unknown_key_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.json");
    fs::write(&cfg, r#"{"schema_version": 1, "extra": true}"#).unwrap();
    let cycle = short_cycle(dir.path(), 0.0, 30.0);
    let o = run(&[
        "simulate",
        "--config",
        cfg.to_str().unwrap(),
        "--cycle",
        cycle.to_str().unwrap(),
        "--beta",
        "constant",
        "--out",
        dir.path().join("o").to_str().unwrap(),
    ]);
    assert!(!o.status.success());
    assert!(stderr(&o).contains("extra"), "{}", stderr(&o));
}

fn short_config(dir: &Path, duration: f64) -> PathBuf {
    let mut v = json(&data("default_config.json"));
    v["sweep_duration_s"] = serde_json::json!(duration);
    let p = dir.join("short.json");
    fs::write(&p, serde_json::to_string(&v).unwrap()).unwrap();
    p
}

#[test]
fn sweep_single_value_and_range() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = short_config(dir.path(), 90.0);
    let one = dir.path().join("one");
    let o = run(&["sweep", "--config", cfg.to_str().unwrap(), "--speeds", "50", "--out", one.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    let csv = fs::read_to_string(one.join("sweep.csv")).unwrap();
    assert_eq!(csv.lines().count(), 2);
    assert!(one.join("energy_report_50kmh.json").exists());

    let many = dir.path().join("many");
    let o = run(&["sweep", "--config", cfg.to_str().unwrap(), "--speeds", "0:30:90", "--out", many.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    let e: Vec<f64> = fs::read_to_string(many.join("sweep.csv"))
        .unwrap()
        .lines()
        .skip(1)
        .map(|l| l.split(',').nth(4).unwrap().parse().unwrap())
        .collect();
    assert_eq!(e.len(), 4);
    assert!(e.windows(2).all(|w| w[1] <= w[0]), "{e:?}");
}

#[test]
fn sweep_empty_range_fails() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&[
        "sweep",
        "--config",
        data("default_config.json").to_str().unwrap(),
        "--speeds",
        "90:10:0",
        "--out",
        dir.path().join("o").to_str().unwrap(),
    ]);
    assert!(!o.status.success());
    assert!(stderr(&o).contains("empty"));
}

#[test]
fn compare_emits_three_rows() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("cmp");
    let o = run(&[
        "compare",
        "--config",
        data("default_config.json").to_str().unwrap(),
        "--cycle",
        data("sc03_like.csv").to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let rows = json(&out.join("comparison.json"));
    let rows = rows.as_array().unwrap();
    let names: Vec<&str> = rows.iter().map(|r| r["scenario"].as_str().unwrap()).collect();
    assert_eq!(names, ["baseline", "constant_beta", "speed_beta"]);
    let e = |i: usize, k: &str| rows[i][k].as_f64().unwrap();
    assert!(e(1, "e_tot_kj") < e(0, "e_tot_kj"));
    assert!(e(2, "e_tot_kj") < e(0, "e_tot_kj"));
    assert!(e(2, "e_comp_kj") < e(1, "e_comp_kj"));
    assert!(e(2, "e_dace_kj") <= 1.03 * e(1, "e_dace_kj"));
    assert_eq!(fs::read_to_string(out.join("comparison.csv")).unwrap().lines().count(), 4);
    for n in names {
        assert!(out.join(format!("step_log_{n}.csv")).exists());
    }
}

#[test]
fn compare_to_unwritable_path_fails() {
    let dir = tempfile::tempdir().unwrap();
    let blocker = dir.path().join("file");
    fs::write(&blocker, "x").unwrap();
    let cycle = short_cycle(dir.path(), 10.0, 30.0);
    let o = run(&[
        "compare",
        "--config",
        data("default_config.json").to_str().unwrap(),
        "--cycle",
        cycle.to_str().unwrap(),
        "--out",
        blocker.join("sub").to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("output directory"), "{}", stderr(&o));
}
