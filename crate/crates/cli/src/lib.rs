//! Experiment driver for the particle path scheme.

pub mod config;

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use clap::Parser;
use particle_path::analysis::{temporal_modulus_check, StudySpec};
use particle_path::io::{load_trajectory, sample_constant, sample_linear, save_trajectory, write_columns};
use particle_path::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

pub use config::{ExperimentConfig, Mode};

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_INVARIANT: i32 = 3;
pub const EXIT_RUNTIME: i32 = 4;

pub type CliResult<T> = std::result::Result<T, CliError>;

pub const TRAJECTORY_FILE: &str = "trajectory.csv";
pub const EVENTS_FILE: &str = "events.json";

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("invariant failure: {0}")]
    Invariant(String),
    #[error("runtime failure: {0}")]
    Runtime(#[from] Error),
    #[error("runtime failure: {error}; state written to {}", dump.display())]
    RuntimeWithDump { error: Error, dump: PathBuf },
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => EXIT_CONFIG,
            CliError::Invariant(_) | CliError::Runtime(Error::AuditFailed { .. }) => EXIT_INVARIANT,
            CliError::Runtime(_) | CliError::RuntimeWithDump { .. } => EXIT_RUNTIME,
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "ppath", about = "Particle path scheme experiments")]
struct Args {
    /// Experiment config (TOML).
    config: PathBuf,
    /// Overrides `mode`.
    #[arg(long)]
    mode: Option<String>,
    /// Overrides `out`.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Overrides any field, e.g. `--set placement.n=201`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

/// Parses `argv` (program name first), runs the selected mode and returns
/// the process exit status.
pub fn run_cli<I, S>(argv: I) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<std::ffi::OsString> + Clone,
{
    let args = match Args::try_parse_from(argv) {
        Ok(a) => a,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
        }
    };
    match load_config(&args).and_then(|(cfg, base)| execute(&cfg, &base)) {
        Ok(report) => {
            print!("{report}");
            EXIT_OK
        }
        Err(e) => {
            eprintln!("{e}");
            e.exit_code()
        }
    }
}

fn load_config(args: &Args) -> CliResult<(ExperimentConfig, PathBuf)> {
    let text = fs::read_to_string(&args.config)
        .map_err(|e| CliError::Config(format!("{}: {e}", args.config.display())))?;
    let mut table: toml::Table = text
        .parse()
        .map_err(|e| CliError::Config(format!("{}: {e}", args.config.display())))?;
    if let Some(m) = &args.mode {
        table.insert("mode".into(), toml::Value::String(m.clone()));
    }
    if let Some(o) = &args.out {
        table.insert("out".into(), toml::Value::String(o.display().to_string()));
    }
    for s in &args.set {
        config::apply_override(&mut table, s)?;
    }
    let cfg = ExperimentConfig::from_table(table)?;
    let base = args.config.parent().map(Path::to_path_buf).unwrap_or_default();
    Ok((cfg, base))
}

/// Runs the configured mode; data files go to `cfg.out` and the returned
/// text is the human-readable summary.
pub fn execute(cfg: &ExperimentConfig, base: &Path) -> CliResult<String> {
    let data = cfg.initial_data(base)?;
    let model = cfg.flux_model(base)?;
    let model = model
        .restricted_to(data.sup_u0())
        .map_err(|e| CliError::Config(format!("flux: {e}")))?;
    fs::create_dir_all(&cfg.out).map_err(Error::from)?;
    match cfg.mode {
        Mode::Simulate => simulate(cfg, &model, &data),
        Mode::Convergence => convergence(cfg, &model, &data),
        Mode::Audit => audit(cfg, &model),
        Mode::FtlCheck => ftl_check(cfg, &model, &data),
    }
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> CliResult<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(Error::from)?;
    text.push('\n');
    fs::write(path, text).map_err(Error::from)?;
    Ok(())
}

fn write_text(path: &Path, text: &str) -> CliResult<()> {
    fs::write(path, text).map_err(Error::from)?;
    Ok(())
}

/// Writes the offending state next to the other outputs.
fn dump_failure(out: &Path, e: Error) -> CliError {
    if let Error::NonFinite { snapshot, .. } = &e {
        let path = out.join("failure_snapshot.csv");
        let mut text = String::from("x_left,x_right,v\n");
        for (i, w) in snapshot.positions().windows(2).enumerate() {
            let _ = writeln!(text, "{},{},{}", w[0], w[1], snapshot.densities()[i]);
        }
        if fs::write(&path, text).is_ok() {
            return CliError::RuntimeWithDump { error: e, dump: path };
        }
    }
    CliError::Runtime(e)
}

fn simulate(cfg: &ExperimentConfig, model: &FluxModel, data: &InitialData) -> CliResult<String> {
    let n = cfg.placement.n.expect("validated");
    let xs = place_particles(data, n, cfg.placement())?;
    let state = cell_average(data, &xs)?;
    let tr = run(model, &state, cfg.t_final, &cfg.controls()).map_err(|e| dump_failure(&cfg.out, e))?;
    save_trajectory(&tr, &cfg.out.join(TRAJECTORY_FILE), &cfg.out.join(EVENTS_FILE))?;
    let audit = invariant_audit(model, &tr)?;
    write_json(&cfg.out.join("audit.json"), &audit)?;

    let m0 = state.total_mass();
    let discarded: f64 = tr.events.iter().map(|e| e.discarded_mass).sum();
    let drift = tr.final_state().total_mass() + discarded - m0;
    let tv0 = state.total_variation();
    let tv_max = tr.snapshots.iter().map(|s| s.state.total_variation()).fold(0.0, f64::max);

    if let Some(samples) = cfg.samples {
        let (lo, hi) = cfg.window.unwrap_or(data.support_hint());
        let last = tr.final_state();
        let v = sample_constant(&reconstruct_v(last), lo, hi, samples)?;
        let a = sample_linear(&build_A(model, last)?, lo, hi, samples)?;
        write_columns(["x", "v"], &v, fs::File::create(cfg.out.join("final_v.csv")).map_err(Error::from)?)?;
        write_columns(["x", "A"], &a, fs::File::create(cfg.out.join("final_A.csv")).map_err(Error::from)?)?;
    }

    let mut s = String::new();
    let _ = writeln!(s, "mode: simulate");
    let _ = writeln!(s, "flux: {}", model.name());
    let _ = writeln!(s, "data: {}", data.label);
    let _ = writeln!(s, "particles: {n}");
    let _ = writeln!(s, "final time: {}", tr.final_time);
    let _ = writeln!(s, "steps: {}", tr.steps);
    let _ = writeln!(s, "snapshots: {}", tr.snapshots.len());
    let _ = writeln!(s, "collision events: {}", tr.events.len());
    let _ = writeln!(s, "mass drift: {drift:e}");
    let _ = writeln!(s, "tv margin: {:e} (tolerance {:e})", tv0 - tv_max, particle_path::analysis::TV_TOL);
    let _ = writeln!(s, "audit: {}", if audit.passed() { "pass" } else { "FAIL" });
    for f in audit.failures() {
        let _ = writeln!(s, "  {f}");
    }
    write_text(&cfg.out.join("summary.txt"), &s)?;
    if !audit.passed() {
        return Err(CliError::Invariant(audit.failures().join("; ")));
    }
    Ok(s)
}

/// Exact solution for the configured problem, when one is known.
fn exact_solution(cfg: &ExperimentConfig, model: &FluxModel) -> CliResult<ExactSolution> {
    use config::{DataSpec, FluxSpec};
    let base = Path::new("");
    match (&cfg.flux, &cfg.data) {
        (FluxSpec::Burgers, DataSpec::PaperExample) => Ok(burgers_paper_example()),
        (FluxSpec::Linear { speed }, _) => Ok(ExactSolution::Translated {
            data: cfg.initial_data(base)?,
            speed: *speed,
        }),
        (_, DataSpec::Riemann { u_l, u_r, x0 }) => {
            riemann_exact(model, *u_l, *u_r, *x0).map_err(|e| CliError::Config(format!("data: {e}")))
        }
        _ => Err(CliError::Config(
            "mode: convergence needs an exact solution (paper_example with burgers, riemann data, or linear flux)".into(),
        )),
    }
}

fn convergence(cfg: &ExperimentConfig, model: &FluxModel, data: &InitialData) -> CliResult<String> {
    let exact = exact_solution(cfg, model)?;
    let spec = StudySpec {
        model: model.clone(),
        data: data.clone(),
        exact,
        t_final: cfg.t_final,
        window: cfg.window.unwrap_or(data.support_hint()),
        placement: cfg.placement(),
        controls: cfg.controls(),
        particle_counts: cfg.placement.n_list.clone().expect("validated"),
    };
    let study = convergence_study(&spec, Parallelism::Parallel)?;
    let mut csv = String::from("dx,error,bound,slope_so_far\n");
    for row in study.table() {
        let slope = row.slope_so_far.map(|s| s.to_string()).unwrap_or_default();
        let _ = writeln!(csv, "{},{},{},{slope}", row.dx, row.error, row.bound);
    }
    write_text(&cfg.out.join("convergence.csv"), &csv)?;
    write_json(&cfg.out.join("rate.json"), &study)?;

    let mut s = String::new();
    let _ = writeln!(s, "mode: convergence");
    let _ = writeln!(s, "{:>12} {:>12} {:>12} {:>8}", "dx", "error", "bound", "slope");
    for row in study.table() {
        let slope = row.slope_so_far.map(|p| format!("{p:.3}")).unwrap_or_else(|| "-".into());
        let _ = writeln!(s, "{:>12.4e} {:>12.4e} {:>12.4e} {slope:>8}", row.dx, row.error, row.bound);
    }
    match study.fit.slope {
        Some(p) => {
            let _ = writeln!(s, "slope: {p:.4}");
        }
        None => {
            let _ = writeln!(s, "slope: none (errors at noise floor)");
        }
    }
    Ok(s)
}

fn audit(cfg: &ExperimentConfig, model: &FluxModel) -> CliResult<String> {
    let tr = load_trajectory(&cfg.out.join(TRAJECTORY_FILE), &cfg.out.join(EVENTS_FILE))?;
    let model = model.restricted_to(tr.initial_state().max_density().max(f64::MIN_POSITIVE))?;
    let report = invariant_audit(&model, &tr)?;
    let modulus = temporal_modulus_check(&model, &tr)?;
    #[derive(Serialize)]
    struct Out<'a> {
        audit: &'a AuditReport,
        temporal_modulus: &'a particle_path::analysis::TemporalModulus,
    }
    write_json(
        &cfg.out.join("audit.json"),
        &Out {
            audit: &report,
            temporal_modulus: &modulus,
        },
    )?;
    let mut s = String::new();
    let _ = writeln!(s, "mode: audit");
    let _ = writeln!(s, "snapshots: {}", tr.snapshots.len());
    for c in &report.checks {
        let status = if c.passed { "pass" } else { "FAIL" };
        let _ = writeln!(s, "{status} {}: worst margin {:e}", c.name, c.worst_margin);
    }
    let status = if modulus.passed { "pass" } else { "FAIL" };
    let _ = writeln!(s, "{status} temporal_modulus: worst ratio {:.4}", modulus.worst_ratio);
    if !report.passed() || !modulus.passed {
        print!("{s}");
        let mut failures = report.failures();
        if !modulus.passed {
            failures.push(format!("temporal_modulus: worst ratio {}", modulus.worst_ratio));
        }
        return Err(CliError::Invariant(failures.join("; ")));
    }
    Ok(s)
}

#[derive(Debug, Serialize)]
struct FtlReport {
    flux: String,
    pairs: usize,
    seed: u64,
    max_deviation: f64,
    tol: f64,
    passed: bool,
}

fn ftl_check(cfg: &ExperimentConfig, model: &FluxModel, data: &InitialData) -> CliResult<String> {
    let cap = if model.working_max().is_finite() {
        model.working_max()
    } else {
        data.sup_u0()
    };
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.ftl.seed);
    let pairs: Vec<(f64, f64)> = (0..cfg.ftl.pairs)
        .map(|_| (rng.gen_range(0.0..=cap), rng.gen_range(0.0..=cap)))
        .collect();
    let dev = ftl_coincidence_check(model, &pairs).map_err(|e| match e {
        Error::Precondition(m) => CliError::Config(format!("flux: {m}")),
        other => CliError::Runtime(other),
    })?;
    let report = FtlReport {
        flux: model.name().into(),
        pairs: pairs.len(),
        seed: cfg.ftl.seed,
        max_deviation: dev,
        tol: cfg.ftl.tol,
        passed: dev <= cfg.ftl.tol,
    };
    write_json(&cfg.out.join("ftl.json"), &report)?;
    let s = format!(
        "mode: ftl-check\npairs: {}\nmax deviation: {dev:e}\ntolerance: {:e}\nresult: {}\n",
        report.pairs,
        report.tol,
        if report.passed { "pass" } else { "FAIL" }
    );
    if !report.passed {
        print!("{s}");
        return Err(CliError::Invariant(format!("follow-the-leader deviation {dev:e} exceeds {:e}", report.tol)));
    }
    Ok(s)
}
