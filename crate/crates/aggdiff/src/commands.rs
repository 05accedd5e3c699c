//! The subcommands of the `aggdiff` binary.

use std::io::Write;
use std::path::Path;

use aggdiff_core::evolve::characteristic_time;
use aggdiff_core::functionals::energy_report;
use aggdiff_core::{
    classify, hls_sharp_constant, hypothesis_check, run, solve_extremal_with, Error, Exponents, ExtremalOptions,
    ExtremalProfile, ModelParams, Outcome, RadialField, RadialGrid, ReducedKernel, SimConfig, Thresholds,
};
use serde::Serialize;

use crate::battery::{Battery, BatteryOptions, Scale};
use crate::config::{InitialData, RunConfig, SelftestScale};
use crate::error::CliError;
use crate::experiments::{dichotomy_horizon, run_dichotomy, threshold_setup, DichotomySummary, ThresholdSetup};
use crate::io::{field_csv, trace_csv, write_json, write_text};

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Command {
    /// Check the parameter regime and print the derived exponents.
    Validate,
    /// Compute the extremal profile and the optimal constant.
    Extremal,
    /// Compute x_*, g(x_*) and the threshold profile.
    Thresholds,
    /// Classify the configured initial data.
    Classify,
    /// Classify and evolve multiples of the threshold profile.
    Dichotomy,
    /// Evolve the configured initial data.
    Evolve,
    /// Run the self-test battery.
    Selftest,
}

type CmdResult = Result<(), CliError>;

pub fn execute(command: Command, cfg: &RunConfig, out: &Path, stdout: &mut dyn Write) -> CmdResult {
    match command {
        Command::Validate => validate(cfg, stdout),
        Command::Extremal => extremal(cfg, out, stdout),
        Command::Thresholds => thresholds(cfg, out, stdout),
        Command::Classify => classify_cmd(cfg, out, stdout),
        Command::Dichotomy => dichotomy(cfg, out, stdout),
        Command::Evolve => evolve(cfg, out, stdout),
        Command::Selftest => selftest(cfg, out, stdout),
    }
}

fn validate(cfg: &RunConfig, stdout: &mut dyn Write) -> CmdResult {
    cfg.params.validate()?;
    let e = cfg.params.exponents();
    let rows = [
        ("d", f64::from(e.d)),
        ("s", e.s),
        ("m", e.m),
        ("eps", cfg.params.eps),
        ("lambda", e.lambda),
        ("p", e.p),
        ("a", e.a),
        ("a0", e.a0),
        ("b0", e.b0),
        ("beta", e.beta),
        ("c_ds", e.c_ds),
        ("hls_constant", hls_sharp_constant(e.d, e.lambda)?),
        ("virial_coefficient", e.virial_coefficient()),
    ];
    for (name, value) in rows {
        writeln!(stdout, "{name:<20} {value:.12}")?;
    }
    Ok(())
}

#[derive(Serialize)]
struct ExtremalSidecar {
    cstar: f64,
    support_radius: f64,
    el_residual: f64,
    iterations: usize,
    converged: bool,
    params: ModelParams,
    n: usize,
    r_max: f64,
    options: ExtremalOptions,
}

impl ExtremalSidecar {
    fn new(p: &ExtremalProfile, opts: &ExtremalOptions) -> Self {
        let g = p.w.grid();
        ExtremalSidecar {
            cstar: p.cstar,
            support_radius: p.support_radius,
            el_residual: p.el_residual,
            iterations: p.iterations,
            converged: p.converged,
            params: p.params,
            n: g.n(),
            r_max: g.r_max(),
            options: *opts,
        }
    }
}

fn write_extremal(p: &ExtremalProfile, opts: &ExtremalOptions, out: &Path) -> std::io::Result<()> {
    write_text(&out.join("profile.csv"), &field_csv(&p.w, "w"))?;
    write_json(&out.join("extremal.json"), &ExtremalSidecar::new(p, opts))
}

fn extremal(cfg: &RunConfig, out: &Path, stdout: &mut dyn Write) -> CmdResult {
    cfg.params.validate()?;
    let grid = RadialGrid::new(cfg.n, cfg.r_max)?;
    let kernel = ReducedKernel::for_params(&grid, &cfg.params)?;
    match solve_extremal_with(&cfg.params, &grid, &kernel, &cfg.extremal) {
        Ok(p) => {
            write_extremal(&p, &cfg.extremal, out)?;
            writeln!(stdout, "cstar {:.12} after {} iterations, residual {:.3e}", p.cstar, p.iterations, p.el_residual)?;
            Ok(())
        }
        Err(Error::NoConvergence { max_iter, best }) => {
            write_extremal(&best, &cfg.extremal, out)?;
            Err(Error::NoConvergence { max_iter, best }.into())
        }
        Err(e) => Err(e.into()),
    }
}

fn setup(cfg: &RunConfig) -> Result<ThresholdSetup, CliError> {
    cfg.params.validate()?;
    Ok(threshold_setup(&cfg.params, cfg.n, cfg.r_max, &cfg.extremal, cfg.padding)?)
}

#[derive(Serialize)]
struct ThresholdSidecar {
    #[serde(flatten)]
    thresholds: Thresholds,
    characteristic_time: f64,
    profile_cells: usize,
    profile_r_max: f64,
}

fn thresholds(cfg: &RunConfig, out: &Path, stdout: &mut dyn Write) -> CmdResult {
    let s = setup(cfg)?;
    write_extremal(&s.extremal, &cfg.extremal, out)?;
    write_text(&out.join("threshold_profile.csv"), &field_csv(&s.profile, "u"))?;
    let sidecar = ThresholdSidecar {
        thresholds: s.thresholds,
        characteristic_time: characteristic_time(&s.profile, &s.exps)?,
        profile_cells: s.profile.grid().n(),
        profile_r_max: s.profile.grid().r_max(),
    };
    write_json(&out.join("thresholds.json"), &sidecar)?;
    let t = s.thresholds;
    writeln!(stdout, "cstar {:.12}  x_star {:.12}  g(x_star) {:.12}", t.cstar, t.x_star, t.g_at_xstar)?;
    Ok(())
}

/// The configured initial data, its kernel, and the threshold setup when
/// the data were built from it.
fn initial_data(cfg: &RunConfig, s: Option<&ThresholdSetup>) -> Result<(RadialField, ReducedKernel), CliError> {
    let profile_from = |shape: &dyn Fn(f64) -> f64| -> Result<(RadialField, ReducedKernel), CliError> {
        let grid = RadialGrid::new(cfg.n, cfg.r_max)?;
        let u = RadialField::from_cell_averages(grid, shape)?;
        Ok((u, ReducedKernel::for_params(&grid, &cfg.params)?))
    };
    let q = 1.0 / (cfg.params.m - 1.0);
    match cfg.initial {
        InitialData::Gaussian { amplitude, width } => profile_from(&|r| amplitude * (-(r / width).powi(2)).exp()),
        InitialData::Bump { amplitude, width } => {
            profile_from(&|r| amplitude * (1.0 - (r / width).powi(2)).max(0.0).powf(q))
        }
        InitialData::Threshold { kappa } => {
            let s = s.expect("threshold data needs the threshold setup");
            Ok((s.profile.scaled(kappa)?, s.kernel.clone()))
        }
    }
}

fn classify_cmd(cfg: &RunConfig, out: &Path, stdout: &mut dyn Write) -> CmdResult {
    let s = setup(cfg)?;
    let (u0, kernel) = initial_data(cfg, Some(&s))?;
    let c = classify(&u0, &s.thresholds, &s.exps, &kernel, cfg.classify_tol)?;
    write_json(&out.join("classification.json"), &c)?;
    write_json(&out.join("energy_report.json"), &energy_report(&u0, &s.exps, &kernel)?)?;
    write_text(&out.join("initial.csv"), &field_csv(&u0, "u"))?;
    writeln!(stdout, "{:?}: product/x_star {:.9}, energy margin {:.3e}", c.verdict, c.product / c.x_star, c.margins.energy)?;
    let hyp = hypothesis_check(&u0, &s.exps);
    if hyp.touches_boundary {
        writeln!(stdout, "warning: initial data reach the outer boundary layer")?;
    }
    Ok(())
}

#[derive(Serialize)]
struct TraceFooter<'a> {
    outcome: Outcome,
    steps: usize,
    dissipated: f64,
    mass_drift: f64,
    max_energy_increase: f64,
    max_linf: f64,
    truncation_warning: bool,
    note: Option<&'a str>,
    params: ModelParams,
    n: usize,
    r_max: f64,
    sim: SimConfig,
}

fn write_trace(trace: &aggdiff_core::SimTrace, params: &ModelParams, sim: &SimConfig, out: &Path, stem: &str) -> std::io::Result<()> {
    write_text(&out.join(format!("{stem}.csv")), &trace_csv(trace))?;
    let g = trace.final_state.grid();
    let footer = TraceFooter {
        outcome: trace.outcome,
        steps: trace.steps,
        dissipated: trace.dissipated,
        mass_drift: trace.mass_drift(),
        max_energy_increase: trace.max_energy_increase(),
        max_linf: trace.max_linf(),
        truncation_warning: trace.truncation_warning,
        note: trace.note.as_deref(),
        params: *params,
        n: g.n(),
        r_max: g.r_max(),
        sim: *sim,
    };
    write_json(&out.join(format!("{stem}.json")), &footer)
}

fn horizon(cfg: &RunConfig, u0: &RadialField, exps: &Exponents) -> Result<SimConfig, CliError> {
    let mut sim = cfg.sim;
    if !cfg.t_end_given {
        sim.t_end = cfg.t_end_factor * characteristic_time(u0, exps)?;
    }
    Ok(sim)
}

fn evolve(cfg: &RunConfig, out: &Path, stdout: &mut dyn Write) -> CmdResult {
    cfg.params.validate()?;
    let s = match cfg.initial {
        InitialData::Threshold { .. } => Some(setup(cfg)?),
        _ => None,
    };
    let exps = cfg.params.exponents();
    let (u0, kernel) = initial_data(cfg, s.as_ref())?;
    let sim = horizon(cfg, &u0, &exps)?;
    let trace = run(&u0, &kernel, &exps, &sim)?;
    write_trace(&trace, &cfg.params, &sim, out, "trace")?;
    write_text(&out.join("final.csv"), &field_csv(&trace.final_state, "u"))?;
    write_json(&out.join("energy_initial.json"), &energy_report(&u0, &exps, &kernel)?)?;
    write_json(&out.join("energy_final.json"), &energy_report(&trace.final_state, &exps, &kernel)?)?;
    writeln!(stdout, "{:?} after {} steps (t_end {:.6})", trace.outcome, trace.steps, sim.t_end)?;
    if let Some(note) = &trace.note {
        writeln!(stdout, "note: {note}")?;
    }
    Ok(())
}

#[derive(Serialize)]
struct DichotomyReport {
    cstar: f64,
    x_star: f64,
    g_at_xstar: f64,
    t_end: f64,
    rows: Vec<DichotomySummary>,
    all_consistent: bool,
}

fn dichotomy(cfg: &RunConfig, out: &Path, stdout: &mut dyn Write) -> CmdResult {
    let s = setup(cfg)?;
    let mut sim = cfg.sim;
    sim.t_end = dichotomy_horizon(&s, &cfg.sim, (!cfg.t_end_given).then_some(cfg.t_end_factor))?;
    let rows = run_dichotomy(&s, &cfg.kappas, &sim, cfg.classify_tol)?;
    for row in &rows {
        write_trace(&row.trace, &cfg.params, &sim, out, &format!("trace_kappa_{}", row.kappa))?;
        let flag = if row.consistent { "" } else { "  MISMATCH" };
        writeln!(stdout, "kappa {}: {:?} / {:?}{flag}", row.kappa, row.classification.verdict, row.trace.outcome)?;
    }
    let report = DichotomyReport {
        cstar: s.thresholds.cstar,
        x_star: s.thresholds.x_star,
        g_at_xstar: s.thresholds.g_at_xstar,
        t_end: sim.t_end,
        rows: rows.iter().map(|r| r.summary()).collect(),
        all_consistent: rows.iter().all(|r| r.consistent),
    };
    write_json(&out.join("summary.json"), &report)?;
    let bad: Vec<String> = rows.iter().filter(|r| !r.consistent).map(|r| r.kappa.to_string()).collect();
    if bad.is_empty() {
        Ok(())
    } else {
        Err(CliError::Mismatch(format!("kappa {}", bad.join(", "))))
    }
}

fn selftest(cfg: &RunConfig, out: &Path, stdout: &mut dyn Write) -> CmdResult {
    let scale = match cfg.selftest_scale {
        SelftestScale::Quick => Scale::Quick,
        SelftestScale::Full => Scale::Full,
    };
    let mut battery = Battery::new(BatteryOptions { scale, seed: cfg.seed, corrupt_kernel: cfg.corrupt_kernel });
    let mut io_error = None;
    let checks = battery.run_all(|c| {
        let mark = if c.passed { "PASS" } else { "FAIL" };
        if let Err(e) = writeln!(stdout, "{mark} {:>2} {}: {}", c.criterion, c.name, c.detail) {
            io_error.get_or_insert(e);
        }
    });
    if let Some(e) = io_error {
        return Err(e.into());
    }
    write_json(&out.join("selftest.json"), &checks)?;
    let failed: Vec<String> = checks.iter().filter(|c| !c.passed).map(|c| format!("{} ({})", c.criterion, c.name)).collect();
    if failed.is_empty() {
        Ok(())
    } else {
        Err(CliError::Selftest(failed.join(", ")))
    }
}
