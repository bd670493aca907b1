use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};

use chillmpc_core::config::RunConfig;
use chillmpc_core::io::{csv_string, fmt_f64, write_atomic};
use chillmpc_core::sim::{
    compare, energy_report, run_closed_loop, sweep_constant_speed, BetaMode, BetaSchedule,
};
use chillmpc_core::sysid::{fit_params, read_dataset, records_from_samples, split_train_validation, validate};

#[derive(Parser)]
#[command(name = "chillmpc", version, about = "Cooling-power tracking NMPC for vehicle A/C")]
struct Cli {
    /// Seed of every random stream; overrides the config's scenario seed.
    #[arg(long, global = true, default_value_t = 42)]
    seed: u64,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Clone, Copy, ValueEnum)]
enum BetaArg {
    Constant,
    Speed,
}

#[derive(Subcommand)]
enum Cmd {
    /// Fit model coefficients to a logged dataset.
    Identify {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run one closed-loop scenario.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        cycle: PathBuf,
        #[arg(long)]
        targets: Option<PathBuf>,
        #[arg(long, value_enum)]
        beta: BetaArg,
        #[arg(long)]
        out: PathBuf,
    },
    /// Constant-speed energy sweep.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        /// `start:step:stop` (inclusive), a comma list, or a single value, km/h.
        #[arg(long)]
        speeds: String,
        #[arg(long)]
        out: PathBuf,
    },
    /// Baseline PI vs constant-β vs speed-dependent-β on one cycle.
    Compare {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        cycle: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

/// Exit status when runs completed but some solves fell back to fail-safe.
const EXIT_FAIL_SAFE: u8 = 2;

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(0) => ExitCode::SUCCESS,
        Ok(n) => {
            eprintln!("warning: {n} step(s) used the fail-safe input");
            ExitCode::from(EXIT_FAIL_SAFE)
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

/// Returns the number of fail-safe steps across all runs.
fn run(cli: Cli) -> Result<usize> {
    match cli.cmd {
        Cmd::Identify { data, out } => identify(&data, &out).map(|_| 0),
        Cmd::Simulate {
            config,
            cycle,
            targets,
            beta,
            out,
        } => simulate(cli.seed, &config, &cycle, targets.as_deref(), beta, &out),
        Cmd::Sweep { config, speeds, out } => sweep(cli.seed, &config, &speeds, &out),
        Cmd::Compare { config, cycle, out } => compare_cmd(cli.seed, &config, &cycle, &out),
    }
}

fn load_config(path: &Path, seed: u64) -> Result<RunConfig> {
    let mut cfg = RunConfig::load(path).with_context(|| format!("loading config {}", path.display()))?;
    cfg.scenario.seed = seed;
    Ok(cfg)
}

fn out_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating output directory {}", dir.display()))
}

fn write(path: &Path, text: &str) -> Result<()> {
    write_atomic(path, text.as_bytes()).with_context(|| format!("writing {}", path.display()))
}

fn identify(data: &Path, out: &Path) -> Result<()> {
    let samples = read_dataset(data)?;
    let records = records_from_samples(&samples);
    let (train, val) = split_train_validation(&records);
    let fit = fit_params(train)?;
    let score = if val.is_empty() { None } else { Some(validate(&fit.params, val)?) };
    let doc = serde_json::json!({
        "params": fit.params,
        "rmse_devap": fit.rmse_devap,
        "rmse_tdis": fit.rmse_tdis,
        "condition_number": fit.condition_number,
        "n_train": train.len(),
        "n_validation": val.len(),
        "validation": score.map(|s| serde_json::json!({
            "rmse_devap": s.rmse_devap,
            "rmse_tdis": s.rmse_tdis,
        })),
    });
    write(out, &serde_json::to_string_pretty(&doc)?)?;
    let g = fit.params.gamma();
    println!(
        "gamma = [{}]  rmse_devap={:.3e} rmse_tdis={:.3e}",
        g.map(|v| format!("{v:.6}")).join(", "),
        fit.rmse_devap,
        fit.rmse_tdis
    );
    Ok(())
}

fn simulate(
    seed: u64,
    config: &Path,
    cycle: &Path,
    targets: Option<&Path>,
    beta: BetaArg,
    out: &Path,
) -> Result<usize> {
    let cfg = load_config(config, seed)?;
    let cycle = cfg.cycle(Some(cycle))?;
    let tp = cfg.targets(targets, cycle.start() + cycle.duration())?;
    let sched = match beta {
        BetaArg::Constant => BetaSchedule::constant(),
        BetaArg::Speed => cfg.beta.with_mode(BetaMode::SpeedDependent),
    };
    let log = run_closed_loop(&cfg.plant, &cfg.model, &cfg.mpc, &cycle, &tp, &sched, &cfg.scenario)?;
    out_dir(out)?;
    write(&out.join("step_log.csv"), &log.to_csv(cfg.scenario.log_solve_time))?;
    if log.is_empty() {
        println!("empty drive cycle: no steps simulated");
        return Ok(0);
    }
    let rep = energy_report(&log, None)?;
    write(&out.join("energy_report.json"), &rep.to_json())?;
    println!(
        "E_tot={:.2} kJ  max_solve_time={:.4} s  max_tracking_error={:.3}%  fail_safe={}",
        rep.e_tot_kj,
        log.max_solve_time(),
        100.0 * log.max_tracking_error(cfg.scenario.transient_s),
        log.fail_safe_count()
    );
    Ok(log.fail_safe_count())
}

fn parse_speeds(s: &str) -> Result<Vec<f64>> {
    let num = |t: &str| -> Result<f64> {
        let v: f64 = t.trim().parse().with_context(|| format!("bad speed `{t}`"))?;
        if !(v.is_finite() && v >= 0.0) {
            bail!("speed must be finite and >= 0, got {v}");
        }
        Ok(v)
    };
    let parts: Vec<&str> = s.split(':').collect();
    let speeds = match parts.as_slice() {
        [a, step, b] => {
            let (a, step, b) = (num(a)?, num(step)?, num(b)?);
            if !(step > 0.0) {
                bail!("range step must be > 0");
            }
            let n = ((b - a) / step + 1e-9).floor();
            if n < 0.0 {
                bail!("empty speed range `{s}`");
            }
            (0..=n as usize).map(|i| a + i as f64 * step).collect()
        }
        [single] => single
            .split(',')
            .filter(|t| !t.trim().is_empty())
            .map(num)
            .collect::<Result<Vec<_>>>()?,
        _ => bail!("speeds must be `start:step:stop`, a comma list or a single value"),
    };
    if speeds.is_empty() {
        bail!("empty speed range `{s}`");
    }
    Ok(speeds)
}

fn sweep(seed: u64, config: &Path, speeds: &str, out: &Path) -> Result<usize> {
    let speeds = parse_speeds(speeds)?;
    let cfg = load_config(config, seed)?;
    let tp = cfg.targets(None, cfg.sweep_duration_s)?;
    let points = sweep_constant_speed(&cfg.plant, &cfg.model, &cfg.mpc, &speeds, &tp, &cfg.scenario)?;
    out_dir(out)?;
    let mut rows = Vec::new();
    for p in &points {
        let name = format!("energy_report_{}kmh.json", fmt_f64(p.speed_kmh));
        write(&out.join(name), &p.report.to_json())?;
        rows.push(vec![
            fmt_f64(p.speed_kmh),
            fmt_f64(p.report.e_dace_kj),
            fmt_f64(p.report.e_comp_kj),
            fmt_f64(p.report.e_edf_kj),
            fmt_f64(p.report.e_tot_kj),
            fmt_f64(p.max_tracking_error),
        ]);
        println!("v={:>6} km/h  E_tot={:.2} kJ", fmt_f64(p.speed_kmh), p.report.e_tot_kj);
    }
    let header = ["speed_kmh", "e_dace_kj", "e_comp_kj", "e_edf_kj", "e_tot_kj", "max_tracking_error"];
    write(&out.join("sweep.csv"), &csv_string(&header, &rows))?;
    write(&out.join("sweep.json"), &serde_json::to_string_pretty(&points)?)?;
    if let (Some(first), Some(last)) = (points.first(), points.last()) {
        if points.len() > 1 {
            println!(
                "E_tot({})/E_tot({}) = {:.4}",
                fmt_f64(last.speed_kmh),
                fmt_f64(first.speed_kmh),
                last.report.e_tot_kj / first.report.e_tot_kj
            );
        }
    }
    Ok(points.iter().map(|p| p.fail_safe_steps).sum())
}

fn compare_cmd(seed: u64, config: &Path, cycle: &Path, out: &Path) -> Result<usize> {
    let cfg = load_config(config, seed)?;
    let cycle = cfg.cycle(Some(cycle))?;
    let tp = cfg.targets(None, cycle.start() + cycle.duration())?;
    let rows = compare(
        &cfg.plant,
        &cfg.model,
        &cfg.mpc,
        &cfg.baseline,
        &cycle,
        &tp,
        &cfg.beta,
        &cfg.scenario,
    )?;
    out_dir(out)?;
    let mut csv_rows = Vec::new();
    let mut json_rows = Vec::new();
    println!(
        "{:<14} {:>10} {:>10} {:>10} {:>10} {:>8}",
        "scenario", "E_DACE kJ", "E_comp kJ", "E_EDF kJ", "E_tot kJ", "dE_tot %"
    );
    for r in &rows {
        let d = r.report.deltas_vs_baseline_pct.expect("compare fills deltas");
        let name = r.scenario.as_str();
        write(&out.join(format!("step_log_{name}.csv")), &r.log.to_csv(cfg.scenario.log_solve_time))?;
        csv_rows.push(
            [
                r.report.e_dace_kj,
                r.report.e_comp_kj,
                r.report.e_edf_kj,
                r.report.e_tot_kj,
                d.e_dace,
                d.e_comp,
                d.e_edf,
                d.e_tot,
                r.max_tracking_error,
                r.final_t_cab,
            ]
            .iter()
            .fold(vec![name.to_owned()], |mut v, x| {
                v.push(fmt_f64(*x));
                v
            }),
        );
        json_rows.push(serde_json::json!({
            "scenario": name,
            "e_dace_kj": r.report.e_dace_kj,
            "e_comp_kj": r.report.e_comp_kj,
            "e_edf_kj": r.report.e_edf_kj,
            "e_tot_kj": r.report.e_tot_kj,
            "deltas_vs_baseline_pct": d,
            "max_tracking_error": r.max_tracking_error,
            "final_t_cab_c": r.final_t_cab,
        }));
        println!(
            "{:<14} {:>10.1} {:>10.1} {:>10.1} {:>10.1} {:>8.2}",
            name, r.report.e_dace_kj, r.report.e_comp_kj, r.report.e_edf_kj, r.report.e_tot_kj, d.e_tot
        );
    }
    let header = [
        "scenario",
        "e_dace_kj",
        "e_comp_kj",
        "e_edf_kj",
        "e_tot_kj",
        "d_e_dace_pct",
        "d_e_comp_pct",
        "d_e_edf_pct",
        "d_e_tot_pct",
        "max_tracking_error",
        "final_t_cab_c",
    ];
    write(&out.join("comparison.csv"), &csv_string(&header, &csv_rows))?;
    write(&out.join("comparison.json"), &serde_json::to_string_pretty(&json_rows)?)?;
    Ok(rows.iter().map(|r| r.log.fail_safe_count()).sum())
}
