//! Command-line front end.
//!
//! Every subcommand resolves a [`RunConfig`] (file < environment < flags),
//! runs its analysis, writes CSVs, plots and a `<command>.summary.json` into
//! the output directory, and echoes the resolved configuration as
//! `<command>.config.toml`.
//!
//! Exit codes: 0 when every check passed, 1 when a check failed, 2 for
//! usage and configuration errors, 3 for runtime failures.

use std::ffi::OsString;
use std::path::PathBuf;
use std::sync::Mutex;

use clap::{Args, Parser, Subcommand};
use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::analysis::{
    self, closed_loop, control_report, convergence_sweep_with, electromagnetic_limit, imaginary_axis_asymptote,
    rayleigh_damping, richardson, spectrum, stability_check, SweepRow, DEFAULT_RANK_TOL,
};
use crate::config::{parse_n_list, parse_scheme_list, CommandDefaults, ConfigFile, InitialState, RunConfig, RunSection};
use crate::error::{Error, Result};
use crate::fem::element_matrices;
use crate::io::{self, Check, OutDir, RunSummary};
use crate::mfem::q_matrix_report;
use crate::model::{Scheme, StateSpaceModel, Variant};
use crate::simulation::{
    default_dt, integrate, run_snapshot_protocol, Input, IntegrationSpec, Snapshot, SnapshotProtocol, Trajectory,
};

pub const EXIT_OK: i32 = 0;
pub const EXIT_CHECK_FAILED: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_RUNTIME: i32 = 3;

/// Longest trajectory CSV, in rows; longer runs are subsampled by a fixed stride.
const MAX_ROWS: usize = 20_000;

#[derive(Debug, Parser)]
#[command(name = "piezolab", version, about = "FEM / MFEM piezoelectric beam laboratory")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Build models and write them as matrix-market files.
    Assemble(Flags),
    /// Full open-loop spectrum with residuals.
    Spectrum(Flags),
    /// First four eigenfrequencies over a list of orders.
    Sweep(Flags),
    /// Kalman and Brockett rank tests, staircase form.
    Control(Flags),
    /// Open-loop time integration.
    Simulate(Flags),
    /// Open-loop excitation, snapshot, then collocated feedback.
    Closedloop(Flags),
    /// Regenerate plots from the CSVs in the output directory and collect summaries.
    Report(Flags),
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Assemble(_) => "assemble",
            Command::Spectrum(_) => "spectrum",
            Command::Sweep(_) => "sweep",
            Command::Control(_) => "control",
            Command::Simulate(_) => "simulate",
            Command::Closedloop(_) => "closedloop",
            Command::Report(_) => "report",
        }
    }

    fn flags(&self) -> &Flags {
        match self {
            Command::Assemble(f)
            | Command::Spectrum(f)
            | Command::Sweep(f)
            | Command::Control(f)
            | Command::Simulate(f)
            | Command::Closedloop(f)
            | Command::Report(f) => f,
        }
    }

    fn defaults(&self) -> CommandDefaults {
        let both = vec![Scheme::Fem, Scheme::Mfem];
        match self {
            Command::Sweep(_) => CommandDefaults { schemes: both, n: vec![12, 16, 20, 24, 28, 32, 36, 40, 100] },
            Command::Control(_) => CommandDefaults { schemes: both, n: vec![1, 2] },
            Command::Closedloop(_) | Command::Report(_) => CommandDefaults { schemes: both, n: vec![20] },
            _ => CommandDefaults { schemes: vec![Scheme::Fem], n: vec![20] },
        }
    }
}

/// Flags shared by every subcommand. Each may also be set through the
/// `PIEZOLAB_*` environment variable named in its help.
#[derive(Debug, Clone, Default, Args)]
pub struct Flags {
    /// fem, mfem, a comma list, or `both`.
    #[arg(long, env = "PIEZOLAB_SCHEME")]
    pub scheme: Option<String>,
    /// Orders: `20`, `12,16,20` or `12..40:4`.
    #[arg(long, env = "PIEZOLAB_N")]
    pub n: Option<String>,
    /// standard or paper.
    #[arg(long, env = "PIEZOLAB_VARIANT")]
    pub variant: Option<String>,
    /// Collocated feedback gain κ.
    #[arg(long, env = "PIEZOLAB_GAIN")]
    pub gain: Option<f64>,
    /// Time step; defaults to min(1e-2, 0.05·2π/max Im λ).
    #[arg(long, env = "PIEZOLAB_DT")]
    pub dt: Option<f64>,
    /// End time of the run.
    #[arg(long = "t-end", env = "PIEZOLAB_T_END")]
    pub t_end: Option<f64>,
    /// Snapshot time for `closedloop`.
    #[arg(long = "snapshot-t", env = "PIEZOLAB_SNAPSHOT_T")]
    pub snapshot_t: Option<f64>,
    /// TOML config file.
    #[arg(long, env = "PIEZOLAB_CONFIG")]
    pub config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, env = "PIEZOLAB_OUT")]
    pub out: Option<PathBuf>,
    /// Seed for randomised initial states.
    #[arg(long, env = "PIEZOLAB_SEED")]
    pub seed: Option<u64>,
    /// Initial state for `simulate`.
    #[arg(long, value_enum, env = "PIEZOLAB_INITIAL")]
    pub initial: Option<InitialState>,
}

impl Flags {
    fn overrides(&self) -> Result<RunSection> {
        let cfg_err = |key: &str, e: Error| Error::Config { key: key.into(), message: e.to_string() };
        Ok(RunSection {
            scheme: self.scheme.as_deref().map(parse_scheme_list).transpose().map_err(|e| cfg_err("--scheme", e))?,
            n: self.n.as_deref().map(parse_n_list).transpose().map_err(|e| cfg_err("--n", e))?,
            variant: self.variant.as_deref().map(str::parse::<Variant>).transpose().map_err(|e| cfg_err("--variant", e))?,
            gain: self.gain,
            dt: self.dt,
            t_end: self.t_end,
            snapshot_t: self.snapshot_t,
            out: self.out.clone(),
            seed: self.seed,
            initial: self.initial,
        })
    }
}

/// Loads the config file named by the flags, if any, and applies the overrides.
pub fn resolve_config(command: &Command) -> Result<RunConfig> {
    let flags = command.flags();
    let file = match &flags.config {
        Some(p) => ConfigFile::load(p)?,
        None => ConfigFile::default(),
    };
    RunConfig::resolve(&file, &flags.overrides()?, &command.defaults(), flags.config.clone())
}

/// Parses arguments, runs the command and returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    match execute(&cli.command) {
        Ok(summary) => {
            if summary.all_pass {
                EXIT_OK
            } else {
                EXIT_CHECK_FAILED
            }
        }
        Err(e @ Error::Config { .. }) => {
            eprintln!("error: {e}");
            EXIT_CONFIG
        }
        Err(e) => {
            eprintln!("error: {e}");
            EXIT_RUNTIME
        }
    }
}

/// Runs one command and writes its outputs; returns the summary.
pub fn execute(command: &Command) -> Result<RunSummary> {
    let cfg = resolve_config(command)?;
    let name = command.name();
    let mut out = OutDir::new(&cfg.out)?;
    let mut summary = RunSummary::new(name, cfg.seed);
    out.write(&format!("{name}.config.toml"), &cfg.to_toml()?)?;
    match command {
        Command::Assemble(_) => cmd_assemble(&cfg, &mut out, &mut summary)?,
        Command::Spectrum(_) => cmd_spectrum(&cfg, &mut out, &mut summary)?,
        Command::Sweep(_) => cmd_sweep(&cfg, &mut out, &mut summary)?,
        Command::Control(_) => cmd_control(&cfg, &mut out, &mut summary)?,
        Command::Simulate(_) => cmd_simulate(&cfg, &mut out, &mut summary)?,
        Command::Closedloop(_) => cmd_closedloop(&cfg, &mut out, &mut summary)?,
        Command::Report(_) => cmd_report(&cfg, &mut out, &mut summary)?,
    }
    for c in &summary.checks {
        println!("{} {} = {:e} (threshold {:e})", if c.pass { "PASS" } else { "FAIL" }, c.name, c.value, c.threshold);
    }
    summary.outputs = out.written.clone();
    summary.outputs.push(format!("{name}.summary.json"));
    out.write(&format!("{name}.summary.json"), &summary.to_json()?)?;
    Ok(summary)
}

fn models(cfg: &RunConfig) -> impl Iterator<Item = (Scheme, usize)> + '_ {
    cfg.schemes.iter().flat_map(move |&s| cfg.n.iter().map(move |&n| (s, n)))
}

fn build(cfg: &RunConfig, scheme: Scheme, n: usize) -> Result<StateSpaceModel> {
    analysis::assemble(&cfg.params()?, scheme, n, cfg.variant)
}

fn say(summary: &mut RunSummary, line: String) {
    println!("{line}");
    summary.message(line);
}

fn cmd_assemble(cfg: &RunConfig, out: &mut OutDir, summary: &mut RunSummary) -> Result<()> {
    let params = cfg.params()?;
    for (scheme, n) in models(cfg) {
        let model = build(cfg, scheme, n)?;
        let label = model.label();
        out.write(&format!("model_{label}.mtx"), &io::model_to_text(&model)?)?;
        let skew = model.skewness_residual();
        match cfg.variant {
            Variant::Standard => summary.check(Check::at_most(format!("{label} skewness"), skew, 1e-10)),
            Variant::Paper => summary.info(format!("{label} skewness"), skew),
        }
        if scheme == Scheme::Fem && cfg.variant == Variant::Paper {
            let em = element_matrices(n, &params, Variant::Paper)?;
            out.write(&format!("elements_{label}.txt"), &io::element_matrices_text(&em))?;
        }
        say(summary, format!("{label}: n = {}, hash {}", model.dim(), model.provenance()));
    }
    if cfg.schemes.contains(&Scheme::Mfem) {
        let rep = q_matrix_report(&params)?;
        out.write("q_matrix_report.txt", &io::q_report_text(&rep))?;
        summary.check(Check::flag("Q positive definite", rep.positive_definite));
        summary.check(Check::flag("Q matches unambiguous printed entries", rep.unambiguous_all_match()));
    }
    Ok(())
}

fn cmd_spectrum(cfg: &RunConfig, out: &mut OutDir, summary: &mut RunSummary) -> Result<()> {
    for (scheme, n) in models(cfg) {
        let model = build(cfg, scheme, n)?;
        let label = model.label();
        let rep = spectrum(&model)?;
        let name = format!("spectrum_{label}.csv");
        out.write_csv_with_plots(&name, &format!("spectrum {label}"), &io::spectrum_csv(&rep)?)?;
        summary.check(Check::at_most(format!("{label} eigen residual"), rep.max_residual(), 1e-9));
        summary.check(Check::flag(format!("{label} conjugate pairs"), rep.conjugate_symmetric()));
        let re_rel = rep.max_abs_re() / rep.spectral_radius;
        match cfg.variant {
            Variant::Standard => {
                summary.check(Check::at_most(format!("{label} max |Re|/rho"), re_rel, 1e-8));
                summary.check(Check::at_most(format!("{label} skewness"), model.skewness_residual(), 1e-10));
            }
            Variant::Paper => summary.info(format!("{label} max |Re|/rho"), re_rel),
        }
        summary.info(format!("{label} zero eigenvalues"), rep.zero_count() as f64);
        let modes = rep.first_modes(4);
        for (k, im) in modes.iter().enumerate() {
            summary.info(format!("{label} Im lambda_{}", k + 1), *im);
        }
        let text: Vec<String> = modes.iter().map(|v| format!("{v:.4}")).collect();
        say(summary, format!("{label}: Im λ_1..4 = {}", text.join(", ")));
    }
    Ok(())
}

fn cmd_sweep(cfg: &RunConfig, out: &mut OutDir, summary: &mut RunSummary) -> Result<()> {
    let params = cfg.params()?;
    let items = Mutex::new(Vec::new());
    let root = out.root.clone();
    let rows = convergence_sweep_with(&cfg.schemes, &cfg.n, cfg.variant, &params, |rows: &[SweepRow]| {
        let Some(first) = rows.first() else { return Ok(()) };
        let name = format!("sweep_items/{}_{}_N{}.csv", first.scheme, first.variant, first.n);
        io::write_atomic(&root.join(&name), io::sweep_csv(rows)?.as_bytes())?;
        items.lock().expect("sweep item list").push(name);
        Ok(())
    })?;
    let mut items = items.into_inner().expect("sweep item list");
    items.sort();
    out.written.extend(items);
    out.write_csv_with_plots("sweep.csv", "convergence of Im λ_k", &io::sweep_csv(&rows)?)?;

    let value = |s: Scheme, n: usize, k: usize| rows.iter().find(|r| r.scheme == s && r.n == n && r.k == k).map(|r| r.im_lambda);
    let mut ns = cfg.n.clone();
    ns.sort_unstable();
    ns.dedup();
    for &scheme in &cfg.schemes {
        for k in 1..=4 {
            let col: Vec<f64> = ns.iter().filter_map(|&n| value(scheme, n, k)).collect();
            if col.len() >= 2 {
                let monotone = col.windows(2).all(|w| w[1] < w[0]);
                summary.check(Check::flag(format!("{scheme} k={k} decreasing in N"), monotone));
            }
            if ns.len() >= 2 {
                let (n1, n2) = (ns[ns.len() - 2], ns[ns.len() - 1]);
                if let (Some(l1), Some(l2)) = (value(scheme, n1, k), value(scheme, n2, k)) {
                    let extrapolated = richardson(n1, l1, n2, l2);
                    let limit = electromagnetic_limit(&params, k);
                    summary.info(format!("{scheme} k={k} extrapolated"), extrapolated);
                    summary.info(format!("{scheme} k={k} rel. diff to wave limit"), (extrapolated - limit).abs() / limit);
                }
            }
        }
    }
    if cfg.schemes.contains(&Scheme::Fem) && cfg.schemes.contains(&Scheme::Mfem) {
        let mut above = true;
        for &n in &ns {
            for k in 1..=4 {
                if let (Some(f), Some(m)) = (value(Scheme::Fem, n, k), value(Scheme::Mfem, n, k)) {
                    above &= m >= f;
                }
            }
        }
        summary.check(Check::flag("MFEM >= FEM for every (N, k)", above));
    }
    for r in rows.iter().filter(|r| r.k == 1) {
        let line: Vec<String> = (1..=4).filter_map(|k| value(r.scheme, r.n, k)).map(|v| format!("{v:.4}")).collect();
        say(summary, format!("{} N={:>3}: {}", r.scheme, r.n, line.join("  ")));
    }
    Ok(())
}

fn cmd_control(cfg: &RunConfig, out: &mut OutDir, summary: &mut RunSummary) -> Result<()> {
    let mut reports = vec![];
    for (scheme, n) in models(cfg) {
        let model = build(cfg, scheme, n)?;
        let label = model.label();
        let rep = control_report(&model, DEFAULT_RANK_TOL)?;
        let json = serde_json::to_string_pretty(&rep).map_err(|e| Error::Parse(e.to_string()))?;
        out.write(&format!("control_{label}.json"), &(json + "\n"))?;
        say(
            summary,
            format!(
                "{scheme} N={n}: kalman_rank={} brockett={} (n = {}, blocks {:?})",
                rep.kalman_rank,
                if rep.brockett_pass { "pass" } else { "fail" },
                rep.n,
                rep.staircase_block_sizes
            ),
        );
        summary.check(Check::at_least(format!("{label} kalman rank / n"), rep.kalman_rank as f64 / rep.n as f64, 1.0));
        summary.check(Check::flag(format!("{label} brockett rank = n"), rep.brockett_pass));
        summary.check(Check::flag(format!("{label} rank stable under tol x10 and /10"), rep.rank_stable));
        summary.info(format!("{label} kalman sv gap"), rep.sv_gap);
        reports.push(rep);
    }
    out.write_csv_with_plots("control.csv", "controllability", &io::control_csv(&reports)?)?;
    Ok(())
}

/// Seeded random state with unit energy, drawn uniformly in balanced coordinates.
pub fn random_initial_state(model: &StateSpaceModel, seed: u64) -> Result<DVector<f64>> {
    let bal = model.balancing()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let y = DVector::from_fn(model.dim(), |_, _| rng.gen_range(-1.0..1.0));
    let x = bal.backward(&y);
    let h = model.hamiltonian(&x);
    Ok(x / h.sqrt().max(f64::MIN_POSITIVE))
}

fn stride_for(t0: f64, t_end: f64, dt: f64) -> usize {
    let steps = ((t_end - t0) / dt).round() as usize;
    steps.div_ceil(MAX_ROWS).max(1)
}

fn energy_checks(summary: &mut RunSummary, label: &str, traj: &Trajectory) {
    summary.check(Check::at_most(format!("{label} per-step energy balance"), traj.diagnostics.max_balance_residual, 1e-8));
}

fn cmd_simulate(cfg: &RunConfig, out: &mut OutDir, summary: &mut RunSummary) -> Result<()> {
    let t_end = cfg.t_end.unwrap_or(100.0);
    for (scheme, n) in models(cfg) {
        let model = build(cfg, scheme, n)?;
        let label = model.label();
        let dt = match cfg.dt {
            Some(dt) => dt,
            None => default_dt(&model)?,
        };
        let (input, x0) = match cfg.initial {
            InitialState::Rest => (Input::default_burst(), DVector::zeros(model.dim())),
            InitialState::Random => (Input::Zero, random_initial_state(&model, cfg.seed)?),
        };
        let spec = IntegrationSpec::new(0.0, t_end, dt).recording_every(stride_for(0.0, t_end, dt));
        let traj = integrate(&model, &input, &x0, spec)?;
        out.write_csv_with_plots(&format!("trajectory_{label}.csv"), &label, &io::trajectory_csv(&traj)?)?;
        energy_checks(summary, &label, &traj);
        if cfg.initial == InitialState::Random && cfg.variant == Variant::Standard {
            summary.check(Check::at_most(format!("{label} energy drift"), traj.diagnostics.energy_drift, 1e-10));
        } else {
            summary.info(format!("{label} energy drift"), traj.diagnostics.energy_drift);
        }
        summary.info(format!("{label} dt"), dt);
        say(summary, format!("{label}: {} steps, dt = {dt:e}, final H = {:e}", traj.diagnostics.steps, traj.energy.last().unwrap()));
    }
    Ok(())
}

fn cmd_closedloop(cfg: &RunConfig, out: &mut OutDir, summary: &mut RunSummary) -> Result<()> {
    let t_end = cfg.t_end.unwrap_or(cfg.snapshot_t + 1000.0);
    if t_end <= cfg.snapshot_t {
        return Err(Error::Config {
            key: "t_end".into(),
            message: format!("{t_end} must exceed the snapshot time {}", cfg.snapshot_t),
        });
    }
    for (scheme, n) in models(cfg) {
        let model = build(cfg, scheme, n)?;
        let label = model.label();
        let dt = cfg.dt.unwrap_or(SnapshotProtocol::default().dt);
        let protocol = SnapshotProtocol {
            t_snapshot: cfg.snapshot_t,
            t_closed: t_end - cfg.snapshot_t,
            dt,
            gain: cfg.gain,
            record_every: stride_for(0.0, t_end, dt),
            ..SnapshotProtocol::default()
        };
        let run = run_snapshot_protocol(&model, &protocol)?;
        let snap_text = run.snapshot.to_text();
        out.write(&format!("snapshot_{label}.txt"), &snap_text)?;
        let reloaded = Snapshot::from_text(&snap_text)?;
        summary.check(Check::flag(format!("{label} snapshot round trip is bitwise"), reloaded == run.snapshot));
        out.write_csv_with_plots(&format!("trajectory_open_{label}.csv"), &format!("{label} open loop"), &io::trajectory_csv(&run.open_loop)?)?;
        out.write_csv_with_plots(
            &format!("trajectory_closed_{label}.csv"),
            &format!("{label} closed loop"),
            &io::trajectory_csv(&run.closed_loop)?,
        )?;
        let (rv, rw) = run.envelope_ratios();
        summary.check(Check::flag(format!("{label} closed-loop energy non-increasing"), run.closed_loop.energy_monotone(1e-9)));
        summary.check(Check::at_most(format!("{label} v(l) envelope last/first"), rv, 0.1));
        summary.check(Check::at_most(format!("{label} w(l) envelope last/first"), rw, 0.1));
        energy_checks(summary, &format!("{label} closed"), &run.closed_loop);

        let cl = closed_loop(&model, cfg.gain)?;
        let rep = spectrum(&cl)?;
        out.write_csv_with_plots(&format!("spectrum_closed_{label}.csv"), &format!("closed loop {label}"), &io::spectrum_csv(&rep)?)?;
        let stab = stability_check(&cl, &rep);
        summary.check(Check::at_most(format!("{label} closed-loop max Re/rho"), stab.max_re / stab.spectral_radius, 1e-8));
        summary.check(Check::at_most(format!("{label} dissipation identity"), stab.dissipation_residual, 1e-8));
        let damping = rayleigh_damping(&cl)?;
        summary.check(Check::flag(format!("{label} every mode damped (C v resolved)"), damping.strictly_negative));
        summary.info(format!("{label} max Rayleigh Re"), damping.max_re);
        let asym = imaginary_axis_asymptote(&rep);
        summary.check(Check::flag(format!("{label} high modes approach the imaginary axis"), asym.holds));
        summary.info(format!("{label} snapshot time"), run.snapshot.t);
        say(summary, format!("{label}: snapshot at t = {}, envelope ratios v {rv:.3e}, w {rw:.3e}", run.snapshot.t));
    }
    Ok(())
}

fn cmd_report(cfg: &RunConfig, out: &mut OutDir, summary: &mut RunSummary) -> Result<()> {
    let mut entries: Vec<PathBuf> = std::fs::read_dir(&out.root)?.filter_map(|e| e.ok().map(|e| e.path())).collect();
    entries.sort();
    for path in &entries {
        let Some(file) = path.file_name().and_then(|f| f.to_str()) else { continue };
        if file.ends_with(".csv") {
            let text = std::fs::read_to_string(path)?;
            if crate::plot::kind_of(&crate::plot::Table::parse(&text)?).is_some() {
                let stem = file.trim_end_matches(".csv");
                for (suffix, svg) in crate::plot::from_csv(stem, &text)? {
                    out.write(&format!("{stem}{suffix}.svg"), &svg)?;
                }
            }
        } else if let Some(cmd) = file.strip_suffix(".summary.json") {
            if cmd == "report" {
                continue;
            }
            let prior = RunSummary::from_json(&std::fs::read_to_string(path)?)?;
            for c in prior.checks {
                summary.check(Check { name: format!("{cmd}: {}", c.name), ..c });
            }
        }
    }
    let rep = q_matrix_report(&cfg.params()?)?;
    out.write("q_matrix_report.txt", &io::q_report_text(&rep))?;
    summary.check(Check::flag("Q positive definite", rep.positive_definite));
    summary.check(Check::flag("Q matches unambiguous printed entries", rep.unambiguous_all_match()));
    Ok(())
}
