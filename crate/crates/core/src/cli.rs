//! Command-line front end.

use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path as FsPath, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::config::{Experiment, ExperimentConfig};
use crate::error::{Error, Result};
use crate::harness::{
    estimate_moments, galerkin_convergence_study, mean_and_stderr, pathwise_stability_study, run_ensemble,
    slobodeckij_time_seminorm, time_convergence_study,
};
use crate::solver::{fmt, simulate_path};

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAILURE: i32 = 1;
pub const EXIT_VALIDATION: i32 = 2;
pub const EXIT_NUMERICAL: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "fracspde", version, about = "Galerkin experiments for the stochastic fractional p-Laplace equation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Admissibility report for the configured coefficients.
    CheckHypotheses(Common),
    /// One path, written to path.csv.
    Simulate(Common),
    /// Moment estimates across initial-data scales, written to moments.csv.
    Moments(Common),
    /// Galerkin and time refinement studies.
    Converge(Common),
    /// Paired runs from perturbed initial data, written to stability.csv.
    Uniqueness(Common),
    /// Run the built-in property checks.
    Selftest(SelftestArgs),
}

#[derive(Debug, Args)]
struct Common {
    #[arg(long)]
    config: PathBuf,
    #[arg(long, default_value = ".")]
    out: PathBuf,
    /// Worker threads; 0 uses all cores.
    #[arg(long, default_value_t = 0)]
    threads: usize,
    /// Overrides solver.master_seed.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Debug, Args)]
struct SelftestArgs {
    #[arg(long, default_value_t = 0)]
    threads: usize,
    #[arg(long)]
    out: Option<PathBuf>,
}

fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Numerical(_) | Error::State(_) => EXIT_NUMERICAL,
        Error::Io(_) | Error::Csv(_) => EXIT_FAILURE,
        _ => EXIT_VALIDATION,
    }
}

pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_VALIDATION } else { EXIT_OK };
        }
    };
    let threads = match &cli.command {
        Command::Selftest(a) => a.threads,
        Command::CheckHypotheses(c)
        | Command::Simulate(c)
        | Command::Moments(c)
        | Command::Converge(c)
        | Command::Uniqueness(c) => c.threads,
    };
    let pool = match rayon::ThreadPoolBuilder::new().num_threads(threads).build() {
        Ok(p) => p,
        Err(e) => {
            eprintln!("error: cannot start thread pool: {e}");
            return EXIT_FAILURE;
        }
    };
    match pool.install(|| run(cli.command)) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

fn load(c: &Common) -> Result<Experiment> {
    let mut cfg = ExperimentConfig::from_path(&c.config)?;
    if let Some(seed) = c.seed {
        cfg.solver.master_seed = seed;
    }
    cfg.build()
}

fn create_out(dir: &FsPath) -> Result<()> {
    fs::create_dir_all(dir)?;
    Ok(())
}

fn write_with_header(
    dir: &FsPath,
    name: &str,
    exp: &Experiment,
    body: impl FnOnce(&mut Vec<u8>) -> Result<()>,
) -> Result<()> {
    let mut buf = exp.config.header_text().into_bytes();
    body(&mut buf)?;
    fs::write(dir.join(name), buf)?;
    Ok(())
}

fn diverged_too_often(exp: &Experiment, diverged: usize, total: usize) -> bool {
    total > 0 && diverged as f64 / total as f64 > exp.config.harness.max_diverged_fraction
}

fn run(command: Command) -> Result<i32> {
    match command {
        Command::CheckHypotheses(c) => check_hypotheses(&c),
        Command::Simulate(c) => simulate(&c),
        Command::Moments(c) => moments(&c),
        Command::Converge(c) => converge(&c),
        Command::Uniqueness(c) => uniqueness(&c),
        Command::Selftest(a) => selftest(&a),
    }
}

fn check_hypotheses(c: &Common) -> Result<i32> {
    let exp = load(c)?;
    let report = exp.admissibility()?;
    let text = report.render();
    create_out(&c.out)?;
    write_with_header(&c.out, "report.txt", &exp, |b| {
        b.extend_from_slice(text.as_bytes());
        Ok(())
    })?;
    print!("{text}");
    Ok(EXIT_OK)
}

fn warn_if_inadmissible(exp: &Experiment) {
    match exp.admissibility() {
        Ok(r) if r.passed() => {}
        Ok(r) => {
            eprintln!("WARNING: configuration is outside the admissible set (theorem {})", r.theorem);
            for v in r.violations() {
                eprintln!("WARNING:   violated: {v}");
            }
            eprintln!("WARNING: the conditions are sufficient, not necessary; running anyway");
        }
        Err(e) => eprintln!("WARNING: admissibility could not be assessed: {e}"),
    }
}

fn simulate(c: &Common) -> Result<i32> {
    let exp = load(c)?;
    warn_if_inadmissible(&exp);
    let path = simulate_path(&exp.setup, &exp.solver, &exp.x0, 0)?;
    create_out(&c.out)?;
    let header = exp.config.header();
    let mut buf = Vec::new();
    path.write_csv(&mut buf, &header)?;
    fs::write(c.out.join("path.csv"), buf)?;
    let last = path.len() - 1;
    println!("steps: {last}");
    println!("final l2_norm: {}", fmt(path.l2_norm[last]));
    println!("stopped_at: {}", path.stopped_at.map_or("none".into(), |k| k.to_string()));
    if let Some(k) = path.diverged_at {
        eprintln!("error: path diverged at step {k}");
        return Ok(EXIT_NUMERICAL);
    }
    Ok(EXIT_OK)
}

fn moments(c: &Common) -> Result<i32> {
    let exp = load(c)?;
    let h = &exp.config.harness;
    let adm = exp.admissibility()?;
    let report = estimate_moments(
        &exp.setup,
        &exp.solver,
        &exp.shape,
        &h.x_scales,
        &h.p_values,
        h.n_paths,
        adm.p_max,
        h.flag_factor,
    )?;
    create_out(&c.out)?;
    write_with_header(&c.out, "moments.csv", &exp, |b| report.write_csv(b))?;
    let mut out = std::io::stdout().lock();
    writeln!(out, "p_max: {}", fmt(report.p_max))?;
    for &p in &report.p_values {
        let spread = report.affinity_spread(p);
        let flag = if spread < report.flag_factor { "ok" } else { "FLAGGED" };
        writeln!(out, "p = {p}: affinity spread {} ({flag})", fmt(spread))?;
    }
    let total = report.n_paths * report.x_scales.len() * report.p_values.len();
    if diverged_too_often(&exp, report.n_diverged(), total) {
        eprintln!("error: {} of {total} path evaluations diverged", report.n_diverged());
        return Ok(EXIT_NUMERICAL);
    }
    Ok(EXIT_OK)
}

fn converge(c: &Common) -> Result<i32> {
    let exp = load(c)?;
    let h = &exp.config.harness;
    let gal = galerkin_convergence_study(&exp.setup, &exp.solver, &exp.x0, &h.mode_ladder, h.n_paths)?;
    let time = if h.dt_ladder.is_empty() {
        None
    } else {
        Some(time_convergence_study(&exp.setup, &exp.solver, &exp.x0, &h.dt_ladder, h.n_paths)?)
    };
    let paths = run_ensemble(&exp.setup, &exp.solver, &exp.x0, h.n_paths)?;
    let mut semis = Vec::new();
    for p in paths.iter().filter(|p| p.diverged_at.is_none() && p.len() >= 2) {
        semis.push(slobodeckij_time_seminorm(p, h.sigma)?.norm());
    }
    let (sm, se) = mean_and_stderr(&semis);

    create_out(&c.out)?;
    write_with_header(&c.out, "convergence.csv", &exp, |b| gal.write_csv(b))?;
    if let Some(t) = &time {
        write_with_header(&c.out, "time_convergence.csv", &exp, |b| t.write_csv(b))?;
    }
    let mut summary = String::new();
    summary.push_str(&format!("galerkin.monotone = {}\n", gal.monotone));
    summary.push_str(&format!("galerkin.triangle_ok = {}\n", gal.triangle_ok));
    summary.push_str(&format!("galerkin.end_to_end_gap = {}\n", fmt(gal.end_to_end_gap)));
    if let Some(t) = &time {
        summary.push_str(&format!("time.slope = {}\n", fmt(t.slope)));
    }
    summary.push_str(&format!("slobodeckij.sigma = {}\n", fmt(h.sigma)));
    summary.push_str(&format!("slobodeckij.mean_norm = {}\n", fmt(sm)));
    summary.push_str(&format!("slobodeckij.std_err = {}\n", fmt(se)));
    write_with_header(&c.out, "report.txt", &exp, |b| {
        b.extend_from_slice(summary.as_bytes());
        Ok(())
    })?;
    print!("{summary}");
    if !gal.monotone {
        eprintln!("warning: Galerkin gaps are not strictly decreasing");
    }
    let diverged = gal.n_diverged + time.as_ref().map_or(0, |t| t.n_diverged);
    if diverged_too_often(&exp, diverged, h.n_paths) {
        eprintln!("error: {diverged} paths diverged");
        return Ok(EXIT_NUMERICAL);
    }
    Ok(EXIT_OK)
}

fn uniqueness(c: &Common) -> Result<i32> {
    let exp = load(c)?;
    let h = &exp.config.harness;
    let n = h.n_paths;
    let same = pathwise_stability_study(&exp.setup, &exp.solver, &exp.x0, &exp.x0, n, h.stability_tolerance)?;
    let pert = exp.perturbed_initial();
    let report = pathwise_stability_study(&exp.setup, &exp.solver, &exp.x0, &pert, n, h.stability_tolerance)?;
    create_out(&c.out)?;
    write_with_header(&c.out, "stability.csv", &exp, |b| report.write_csv(b))?;
    let summary = format!(
        "identical_initial_data.bitwise_identical = {}\nperturbed.fraction_within_gronwall = {}\nperturbed.all_nonincreasing = {}\n",
        same.all_identical(),
        fmt(report.fraction_within()),
        report.all_nonincreasing()
    );
    write_with_header(&c.out, "report.txt", &exp, |b| {
        b.extend_from_slice(summary.as_bytes());
        Ok(())
    })?;
    print!("{summary}");
    if !same.all_identical() {
        eprintln!("error: identical inputs produced different paths");
        return Ok(EXIT_NUMERICAL);
    }
    let diverged = report.paths.iter().filter(|p| p.diverged).count();
    if diverged_too_often(&exp, diverged, n) {
        eprintln!("error: {diverged} path pairs diverged");
        return Ok(EXIT_NUMERICAL);
    }
    Ok(EXIT_OK)
}

fn selftest(a: &SelftestArgs) -> Result<i32> {
    let results = crate::selftest::run_all();
    let mut text = String::new();
    for r in &results {
        text.push_str(&format!("{} {}: {}\n", if r.passed { "PASS" } else { "FAIL" }, r.name, r.detail));
    }
    if let Some(dir) = &a.out {
        create_out(dir)?;
        fs::write(dir.join("selftest.txt"), &text)?;
    }
    print!("{text}");
    Ok(if results.iter().all(|r| r.passed) { EXIT_OK } else { EXIT_NUMERICAL })
}
