//! `hjlab`: seeded experiment runs for stochastically forced Hamilton-Jacobi
//! equations. Every subcommand writes CSV tables plus a JSON sidecar.

use std::fs::File;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use hjlab::config::ExperimentConfig;
use hjlab::env::{sample_environment_tagged, VectorField, DEFAULT_TAG};
use hjlab::hj::{fd_transformed_solve, hopf_lax_solve, HopfLaxOptions, SolutionField};
use hjlab::homog::{
    default_lambda, effective_hamiltonian, enhancement_gap, estimate_lbar, homog_convergence, regularity_tails,
    scaling_study, tent_upper_bound, ConvergenceOptions, EffectiveTable, EstimatorLattice, ScalingOptions,
    TailsOptions, CONVERGENCE_TAG, LBAR_TAG, SCALING_TAG, TAILS_TAG, TENT_TAG,
};
use hjlab::invariants::{check_invariants, INVARIANT_TAG};
use hjlab::optimizer::{descent_refine, dp_lagrangian_adaptive};
use hjlab::oracle::{psi_mean_samples, psi_vs_dp, PsiDpOptions, PSI_TAG};
use hjlab::report::{fmt, RunWriter, SeedProvenance};
use hjlab::stats;
use hjlab::Error;
use serde_json::{json, Value};

const OUT_ENV: &str = "HJLAB_OUT";
const EXIT_RUNTIME: u8 = 1;
const EXIT_VALIDATION: u8 = 2;
const EXIT_INVARIANT: u8 = 3;
const EXIT_USAGE: u8 = 64;

#[derive(Parser)]
#[command(name = "hjlab", version, about = "Experiments for stochastically forced Hamilton-Jacobi equations")]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Global {
    /// JSON experiment config; defaults to the `single-mode` preset.
    #[arg(long, global = true, conflicts_with = "preset")]
    config: Option<PathBuf>,
    /// Named preset: single-mode, constant, zero, quartic.
    #[arg(long, global = true)]
    preset: Option<String>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory (else config `output`, else $HJLAB_OUT, else ./hjlab-out).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads; results do not depend on it.
    #[arg(long, global = true)]
    workers: Option<usize>,
    /// Config override `key.path=value` (repeatable, applied in order).
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Sample one environment and tabulate f on a grid and B on its time grid.
    SampleEnv {
        #[arg(long, default_value_t = 0)]
        index: u64,
        #[arg(long, default_value_t = 8.0)]
        horizon: f64,
        /// Half-width of the tabulation box.
        #[arg(long, default_value_t = 4.0)]
        extent: f64,
        #[arg(long, default_value_t = 0.0625)]
        spacing: f64,
    },
    /// Lattice minimization of the action between two space-time points.
    Lagrangian {
        #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
        x: Vec<f64>,
        #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
        y: Vec<f64>,
        #[arg(long, default_value_t = 0.0)]
        s: f64,
        #[arg(long, default_value_t = 1.0)]
        t: f64,
        #[arg(long, default_value_t = 0)]
        index: u64,
        /// Descent iterations after the lattice sweep (0 = none).
        #[arg(long, default_value_t = 0)]
        descent: usize,
    },
    /// Solve the scaled equation for one realization.
    SolveHj {
        #[arg(long, value_enum, default_value_t = SolveMethod::Hl)]
        method: SolveMethod,
        #[arg(long)]
        eps: Option<f64>,
        #[arg(long)]
        theta: Option<f64>,
        #[arg(long, value_delimiter = ',', default_value = "1")]
        times: Vec<f64>,
        #[arg(long, default_value_t = 0)]
        index: u64,
        /// Extra viscosity for the finite-difference scheme.
        #[arg(long)]
        dissipation: Option<f64>,
    },
    /// Estimate L-bar on the schedule velocities and H-bar on the momentum grid.
    Effective {
        #[arg(long)]
        samples: Option<usize>,
        /// Also run the convergence diagnostic on the config probes.
        #[arg(long)]
        convergence: bool,
    },
    /// Enhancement gap on the momentum grid and the tent certificate at v = 0.
    Enhancement {
        /// Reuse an effective table instead of estimating one.
        #[arg(long)]
        table: Option<PathBuf>,
    },
    /// Median of u at a probe across theta and eps.
    Scaling {
        #[arg(long)]
        samples: Option<usize>,
        /// H-bar solution at the probe, for the critical exponent.
        #[arg(long, allow_negative_numbers = true)]
        reference: Option<f64>,
    },
    /// Tails of the Hoelder seminorm of the fluctuation.
    Tails {
        #[arg(long)]
        samples: Option<usize>,
    },
    /// Monte Carlo mean of psi / T for the linear-field fixture.
    OraclePsi {
        #[arg(long = "T")]
        horizon: Option<f64>,
        #[arg(long)]
        samples: Option<usize>,
        /// Also compare the lattice optimizer on this many realizations (T = 1).
        #[arg(long)]
        compare_dp: Option<usize>,
    },
    /// Duality, convexity, sub-additivity and dominance checks.
    CheckInvariants,
}

#[derive(Clone, Copy, ValueEnum)]
enum SolveMethod {
    Hl,
    Fd,
}

enum Failure {
    Core(Error),
    Invariant(Vec<String>),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Failure {
        Failure::Core(e)
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion => ExitCode::SUCCESS,
                _ => ExitCode::from(EXIT_USAGE),
            };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Invariant(failed)) => {
            for f in &failed {
                eprintln!("invariant failed: {f}");
            }
            ExitCode::from(EXIT_INVARIANT)
        }
        Err(Failure::Core(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(match e {
                Error::Io(_) | Error::Csv(_) => EXIT_RUNTIME,
                Error::Invariant(_) => EXIT_INVARIANT,
                _ => EXIT_VALIDATION,
            })
        }
    }
}

/// Subcommand flags expressed as config overrides, so the sidecar echoes them.
fn flag_overrides(cmd: &Command, base: &ExperimentConfig) -> Vec<String> {
    let mut o = Vec::new();
    match cmd {
        Command::Effective { samples: Some(n), .. } => o.push(format!("schedule.samples={n}")),
        Command::Scaling { samples: Some(n), .. } => o.push(format!("scaling.samples={n}")),
        Command::Tails { samples: Some(n) } => o.push(format!("tails.samples={n}")),
        Command::OraclePsi { horizon, samples, .. } => {
            if base.psi.is_none() {
                o.push(r#"psi={"horizon":1,"samples":20000}"#.into());
            }
            if let Some(t) = horizon {
                o.push(format!("psi.horizon={t}"));
            }
            if let Some(n) = samples {
                o.push(format!("psi.samples={n}"));
            }
        }
        _ => {}
    }
    o
}

fn load_config(g: &Global, cmd: &Command) -> Result<ExperimentConfig, Error> {
    let base = match (&g.config, &g.preset) {
        (Some(path), _) => {
            let text = std::fs::read_to_string(path)?;
            ExperimentConfig::from_json_with_overrides(&text, &[])?
        }
        (None, name) => {
            let name = name.as_deref().unwrap_or("single-mode");
            ExperimentConfig::lookup(name).ok_or_else(|| Error::Config(format!("unknown preset {name:?}")))?
        }
    };
    let mut overrides = flag_overrides(cmd, &base);
    overrides.extend(g.overrides.iter().cloned());
    if let Some(seed) = g.seed {
        overrides.push(format!("seed={seed}"));
    }
    base.with_overrides(&overrides)
}

fn out_dir(g: &Global, cfg: &ExperimentConfig) -> PathBuf {
    g.out
        .clone()
        .or_else(|| cfg.output.as_ref().map(PathBuf::from))
        .or_else(|| std::env::var_os(OUT_ENV).map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("hjlab-out"))
}

fn run(cli: Cli) -> Result<(), Failure> {
    let g = &cli.global;
    if let Some(n) = g.workers {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n.max(1))
            .build_global()
            .map_err(|e| Error::Parameter(format!("worker pool: {e}")))?;
    }
    let cfg = load_config(g, &cli.command)?;
    let dir = out_dir(g, &cfg);
    let echo: Value = serde_json::from_str(&cfg.to_json()?).map_err(Error::from)?;
    let seeds = |tags: &[&str]| SeedProvenance {
        master_seed: cfg.seed,
        tags: tags.iter().map(|t| t.to_string()).collect(),
    };
    match &cli.command {
        Command::SampleEnv { index, horizon, extent, spacing } => {
            let mut w = RunWriter::new(&dir, "sample-env")?;
            let summary = sample_env(&mut w, &cfg, *index, *horizon, *extent, *spacing)?;
            w.finish(echo, seeds(&[DEFAULT_TAG]), summary)?;
        }
        Command::Lagrangian { x, y, s, t, index, descent } => {
            let mut w = RunWriter::new(&dir, "lagrangian")?;
            let summary = lagrangian(&mut w, &cfg, x, y, *s, *t, *index, *descent)?;
            w.finish(echo, seeds(&[DEFAULT_TAG]), summary)?;
        }
        Command::SolveHj { method, eps, theta, times, index, dissipation } => {
            let mut w = RunWriter::new(&dir, "solve-hj")?;
            let summary = solve_hj(&mut w, &cfg, *method, *eps, *theta, times, *index, *dissipation)?;
            w.finish(echo, seeds(&[DEFAULT_TAG]), summary)?;
        }
        Command::Effective { convergence, .. } => {
            let mut w = RunWriter::new(&dir, "effective")?;
            let summary = effective(&mut w, &cfg, *convergence)?;
            w.finish(echo, seeds(&[LBAR_TAG, CONVERGENCE_TAG]), summary)?;
        }
        Command::Enhancement { table } => {
            let mut w = RunWriter::new(&dir, "enhancement")?;
            let summary = enhancement(&mut w, &cfg, table.as_deref())?;
            w.finish(echo, seeds(&[LBAR_TAG, TENT_TAG]), summary)?;
        }
        Command::Scaling { reference, .. } => {
            let mut w = RunWriter::new(&dir, "scaling")?;
            let summary = scaling(&mut w, &cfg, *reference)?;
            w.finish(echo, seeds(&[SCALING_TAG]), summary)?;
        }
        Command::Tails { .. } => {
            let mut w = RunWriter::new(&dir, "tails")?;
            let summary = tails(&mut w, &cfg)?;
            w.finish(echo, seeds(&[TAILS_TAG]), summary)?;
        }
        Command::OraclePsi { compare_dp, .. } => {
            let mut w = RunWriter::new(&dir, "oracle-psi")?;
            let summary = oracle_psi(&mut w, &cfg, *compare_dp)?;
            w.finish(echo, seeds(&[PSI_TAG]), summary)?;
        }
        Command::CheckInvariants => {
            let mut w = RunWriter::new(&dir, "check-invariants")?;
            let report = check_invariants(&cfg)?;
            let rows: Vec<Vec<String>> = report
                .checks
                .iter()
                .map(|c| vec![c.name.clone(), (c.passed as u8).to_string(), c.detail.clone()])
                .collect();
            w.write_rows("invariants.csv", &["check", "passed", "detail"], &rows)?;
            let failed: Vec<String> = report.failures().iter().map(|c| format!("{}: {}", c.name, c.detail)).collect();
            let summary = json!({ "passed": report.passed(), "violations": failed });
            w.finish(echo, seeds(&[INVARIANT_TAG, LBAR_TAG]), summary)?;
            if !failed.is_empty() {
                return Err(Failure::Invariant(failed));
            }
        }
    }
    Ok(())
}

fn sample_env(
    w: &mut RunWriter,
    cfg: &ExperimentConfig,
    index: u64,
    horizon: f64,
    extent: f64,
    spacing: f64,
) -> Result<Value, Error> {
    if !(spacing > 0.0) || !(extent > 0.0) {
        return Err(Error::Parameter("extent and spacing must be positive".into()));
    }
    let env = sample_environment_tagged(&cfg.field, horizon, cfg.path_dt, cfg.seed, DEFAULT_TAG, index)?;
    let d = cfg.field.dimension;
    let m = cfg.field.channels;
    let n = (2.0 * extent / spacing).round() as usize + 1;
    let axis: Vec<f64> = (0..n).map(|i| -extent + i as f64 * spacing).collect();
    let points: Vec<Vec<f64>> = match d {
        1 => axis.iter().map(|x| vec![*x]).collect(),
        2 => axis.iter().flat_map(|x| axis.iter().map(move |y| vec![*x, *y])).collect(),
        _ => return Err(Error::Parameter("sample-env tabulates d = 1, 2 only".into())),
    };
    let mut header: Vec<String> = (1..=d).map(|a| format!("x{a}")).collect();
    header.extend((1..=m).map(|c| format!("f{c}")));
    let mut buf = vec![0.0; m];
    let rows: Vec<Vec<String>> = points
        .iter()
        .map(|x| {
            env.field.value(x, &mut buf);
            x.iter().chain(&buf).map(|v| fmt(*v)).collect()
        })
        .collect();
    let header_ref: Vec<&str> = header.iter().map(String::as_str).collect();
    w.write_rows("field.csv", &header_ref, &rows)?;
    let mut header: Vec<String> = vec!["k".into(), "t".into()];
    header.extend((1..=m).map(|c| format!("b{c}")));
    let rows: Vec<Vec<String>> = (0..=env.path.steps())
        .map(|k| {
            let mut r = vec![k.to_string(), fmt(k as f64 * env.path.dt())];
            r.extend(env.path.node(k).iter().map(|v| fmt(*v)));
            r
        })
        .collect();
    let header_ref: Vec<&str> = header.iter().map(String::as_str).collect();
    w.write_rows("path.csv", &header_ref, &rows)?;
    Ok(json!({ "index": index, "phases": env.field.phases(), "horizon": env.path.horizon() }))
}

#[allow(clippy::too_many_arguments)]
fn lagrangian(
    w: &mut RunWriter,
    cfg: &ExperimentConfig,
    x: &[f64],
    y: &[f64],
    s: f64,
    t: f64,
    index: u64,
    descent: usize,
) -> Result<Value, Error> {
    let d = cfg.field.dimension;
    let x = if x.is_empty() { vec![0.0; d] } else { x.to_vec() };
    let y = if y.is_empty() { vec![0.0; d] } else { y.to_vec() };
    let env = sample_environment_tagged(&cfg.field, t, cfg.path_dt, cfg.seed, DEFAULT_TAG, index)?;
    let forcing = env.forcing();
    let mut est = dp_lagrangian_adaptive(&x, &y, s, t, &forcing, &cfg.hamiltonian, &cfg.lattice)?;
    if descent > 0 {
        est = descent_refine(&est, &forcing, &cfg.hamiltonian, descent)?;
    }
    w.warn_all(est.warnings.iter().cloned());
    w.write_with("minimizer.csv", |buf| est.minimizer.write_csv(buf))?;
    let b = &est.breakdown;
    w.write_rows(
        "lagrangian.csv",
        &["value", "lattice_value", "kinetic", "forcing", "method"],
        &[vec![
            fmt(est.value),
            fmt(est.lattice_value),
            fmt(b.kinetic),
            fmt(b.forcing),
            serde_json::to_value(est.method)?.as_str().unwrap_or_default().to_string(),
        ]],
    )?;
    Ok(json!({ "value": est.value, "index": index }))
}

#[allow(clippy::too_many_arguments)]
fn solve_hj(
    w: &mut RunWriter,
    cfg: &ExperimentConfig,
    method: SolveMethod,
    eps: Option<f64>,
    theta: Option<f64>,
    times: &[f64],
    index: u64,
    dissipation: Option<f64>,
) -> Result<Value, Error> {
    let eps = eps.or_else(|| cfg.eps_list.first().copied()).unwrap_or(1.0);
    let theta = theta.unwrap_or(0.5);
    let mut times = times.to_vec();
    times.sort_by(f64::total_cmp);
    let t_max = times.last().copied().unwrap_or(0.0);
    let env =
        sample_environment_tagged(&cfg.field, (t_max / eps).max(cfg.path_dt), cfg.path_dt, cfg.seed, DEFAULT_TAG, index)?;
    let sol: SolutionField = match method {
        SolveMethod::Hl => {
            let hl = &cfg.hopf_lax;
            let opts = HopfLaxOptions {
                resolution: hl.resolution.clone(),
                lower: hl.lower.clone(),
                upper: hl.upper.clone(),
                radius: Some(hl.radius),
                c_hat: 2.0,
                stride: hl.stride,
            };
            hopf_lax_solve(&cfg.initial, &env.forcing(), &cfg.hamiltonian, eps, theta, &opts, &times)?
        }
        SolveMethod::Fd => {
            let fd = cfg.fd.as_ref().ok_or_else(|| Error::Config("solve-hj --method fd needs an `fd` section".into()))?;
            fd_transformed_solve(
                &cfg.initial,
                &env.forcing(),
                &cfg.hamiltonian,
                eps,
                theta,
                &fd.grid,
                fd.cfl,
                &times,
                dissipation,
            )?
        }
    };
    w.warn_all(sol.warnings.iter().cloned());
    w.write_with("solution.csv", |buf| sol.write_csv(buf))?;
    Ok(json!({ "method": sol.method, "eps": eps, "theta": theta, "index": index, "points": sol.points.len() }))
}

fn estimator(cfg: &ExperimentConfig) -> EstimatorLattice {
    EstimatorLattice { lattice: cfg.lattice.clone(), path_dt: cfg.path_dt }
}

fn estimate_table(w: &mut RunWriter, cfg: &ExperimentConfig) -> Result<EffectiveTable, Error> {
    let est = estimator(cfg);
    let mut estimates = Vec::new();
    let mut rows = Vec::new();
    for v in &cfg.schedule.velocities {
        let e = estimate_lbar(v, &cfg.schedule, &cfg.field, &cfg.hamiltonian, &est, cfg.seed)?;
        w.warn_all(e.warnings.iter().cloned());
        for r in &e.table {
            let mut row: Vec<String> = v.iter().map(|x| fmt(*x)).collect();
            row.extend([r.horizon, r.mean, r.std_dev, r.se, r.touched_fraction].map(fmt));
            rows.push(row);
        }
        estimates.push(e);
    }
    let d = cfg.field.dimension;
    let mut header: Vec<String> = (1..=d).map(|a| format!("v{a}")).collect();
    header.extend(["horizon", "mean", "std_dev", "se", "touched_fraction"].map(String::from));
    let header_ref: Vec<&str> = header.iter().map(String::as_str).collect();
    w.write_rows("lbar_horizons.csv", &header_ref, &rows)?;
    let table = effective_hamiltonian(&EffectiveTable::from_estimates(&estimates)?, &cfg.p_grid)?;
    if table.truncated.iter().any(|t| *t) {
        w.warn("H-bar maximizer reached the edge of the velocity grid");
    }
    w.write_with("effective.csv", |buf| table.write_csv(buf))?;
    Ok(table)
}

fn effective(w: &mut RunWriter, cfg: &ExperimentConfig, convergence: bool) -> Result<Value, Error> {
    let table = estimate_table(w, cfg)?;
    let mut summary = json!({
        "lbar": table.lbar,
        "hbar": table.hbar,
        "convexity_violations": table.convexity_violations().len(),
        "duality_gap": table.duality_gap(),
    });
    if convergence {
        let opts = ConvergenceOptions {
            probes: cfg.probes.clone(),
            eps_list: cfg.eps_list.clone(),
            samples: cfg.schedule.samples,
            lattice: cfg.lattice.clone(),
            path_dt: cfg.path_dt,
        };
        let rep = homog_convergence(&opts, &table, &cfg.field, &cfg.hamiltonian, cfg.seed)?;
        let rows: Vec<Vec<String>> = rep.rows.iter().map(|r| vec![fmt(r.eps), fmt(r.mean), fmt(r.se)]).collect();
        w.write_rows("convergence.csv", &["eps", "mean_abs_error", "se"], &rows)?;
        if !rep.decreasing {
            w.warn("homogenization error is not decreasing in eps");
        }
        summary["convergence_decreasing"] = json!(rep.decreasing);
    }
    Ok(summary)
}

fn enhancement(w: &mut RunWriter, cfg: &ExperimentConfig, table: Option<&Path>) -> Result<Value, Error> {
    let table = match table {
        Some(path) => {
            let t = EffectiveTable::read_csv(File::open(path)?)?;
            effective_hamiltonian(&t, &cfg.p_grid)?
        }
        None => estimate_table(w, cfg)?,
    };
    let lambda = default_lambda(&cfg.field);
    let mut rows = Vec::new();
    let mut positive = true;
    for p in &cfg.p_grid {
        let g = enhancement_gap(p, &table, &cfg.field, &cfg.hamiltonian, lambda)?;
        positive &= g.gap_lower > 0.0;
        if g.truncated {
            w.warn(format!("H-bar({p:?}) maximizer reached the velocity grid edge"));
        }
        let mut row: Vec<String> = p.iter().map(|x| fmt(*x)).collect();
        row.extend([g.hbar, g.hbar_lower, g.h, g.gap, g.gap_lower, g.expression].map(fmt));
        row.push((g.truncated as u8).to_string());
        rows.push(row);
    }
    let d = cfg.field.dimension;
    let mut header: Vec<String> = (1..=d).map(|a| format!("p{a}")).collect();
    header.extend(["hbar", "hbar_lower", "h", "gap", "gap_lower", "expression", "truncated"].map(String::from));
    let header_ref: Vec<&str> = header.iter().map(String::as_str).collect();
    w.write_rows("gap.csv", &header_ref, &rows)?;
    let mut summary = json!({ "gap_positive": positive });
    if let Some(tent) = &cfg.tent {
        let v = vec![0.0; d];
        let c = tent_upper_bound(&v, tent, &cfg.field, &cfg.hamiltonian, cfg.seed)?;
        let mut row: Vec<String> = c.v.iter().map(|x| fmt(*x)).collect();
        row.extend([c.m, c.delta].map(fmt));
        row.extend([c.blocks, c.samples].map(|n| n.to_string()));
        row.extend([c.mean, c.se, c.upper, c.reference, c.gap].map(fmt));
        let mut header: Vec<String> = (1..=d).map(|a| format!("v{a}")).collect();
        header.extend(
            ["m", "delta", "blocks", "samples", "mean", "se", "upper", "reference", "gap"].map(String::from),
        );
        let header_ref: Vec<&str> = header.iter().map(String::as_str).collect();
        w.write_rows("tent.csv", &header_ref, &[row])?;
        summary["tent_certified"] = json!(c.upper < c.reference);
    } else {
        w.warn("no `tent` section; tent certificate skipped");
    }
    Ok(summary)
}

fn scaling(w: &mut RunWriter, cfg: &ExperimentConfig, reference: Option<f64>) -> Result<Value, Error> {
    let sec = cfg.scaling.as_ref().ok_or_else(|| Error::Config("scaling needs a `scaling` section".into()))?;
    let opts = ScalingOptions {
        thetas: cfg.theta_list.clone(),
        eps_list: cfg.eps_list.clone(),
        x: sec.x.clone(),
        t: sec.t,
        u0: cfg.initial.clone(),
        resolution: cfg.hopf_lax.resolution.clone(),
        radius: cfg.hopf_lax.radius,
        samples: sec.samples,
        path_dt: cfg.path_dt,
        reference,
    };
    let rep = scaling_study(&opts, &cfg.field, &cfg.hamiltonian, cfg.seed)?;
    w.warn_all(rep.warnings.iter().cloned());
    let rows: Vec<Vec<String>> = rep
        .rows
        .iter()
        .map(|r| {
            vec![
                fmt(r.theta),
                fmt(r.eps),
                fmt(r.median),
                fmt(r.median_se),
                fmt(r.noiseless_distance),
                r.reference_distance.map(fmt).unwrap_or_default(),
            ]
        })
        .collect();
    w.write_rows(
        "scaling.csv",
        &["theta", "eps", "median", "median_se", "noiseless_distance", "reference_distance"],
        &rows,
    )?;
    for c in rep.classes.iter().filter(|c| !c.holds) {
        w.warn(format!("theta = {}: expected regime \"{}\" not observed", c.theta, c.regime));
    }
    Ok(json!({ "noiseless": rep.noiseless, "classes": rep.classes }))
}

fn tails(w: &mut RunWriter, cfg: &ExperimentConfig) -> Result<Value, Error> {
    let sec = cfg.tails.as_ref().ok_or_else(|| Error::Config("tails needs a `tails` section".into()))?;
    let opts = TailsOptions {
        eps_list: cfg.eps_list.clone(),
        r: sec.r,
        samples: sec.samples,
        u0: cfg.initial.clone(),
        resolution: cfg.hopf_lax.resolution.clone(),
        radius: cfg.hopf_lax.radius,
        spacing: sec.spacing,
        times: sec.times.clone(),
        path_dt: cfg.path_dt,
        theta_reg: sec.theta_reg,
    };
    let rep = regularity_tails(&opts, &cfg.field, &cfg.hamiltonian, cfg.seed)?;
    w.warn_all(rep.warnings.iter().cloned());
    let rows: Vec<Vec<String>> = rep
        .rows
        .iter()
        .flat_map(|r| {
            rep.lambdas.iter().zip(&r.survival).map(move |(l, s)| vec![fmt(r.eps), fmt(*l), fmt(*s)])
        })
        .collect();
    w.write_rows("tails.csv", &["eps", "lambda", "survival"], &rows)?;
    let rows: Vec<Vec<String>> =
        rep.rows.iter().map(|r| vec![fmt(r.eps), fmt(r.median), fmt(r.median_se)]).collect();
    w.write_rows("seminorm_medians.csv", &["eps", "median", "median_se"], &rows)?;
    Ok(json!({ "alpha": rep.alpha, "beta": rep.beta, "slope": rep.slope }))
}

fn oracle_psi(w: &mut RunWriter, cfg: &ExperimentConfig, compare_dp: Option<usize>) -> Result<Value, Error> {
    let sec = cfg.psi.as_ref().ok_or_else(|| Error::Config("oracle-psi needs a `psi` section".into()))?;
    let xs = psi_mean_samples(sec.horizon, sec.path_steps, sec.samples, cfg.seed)?;
    let rows: Vec<Vec<String>> = xs.iter().enumerate().map(|(i, x)| vec![i.to_string(), fmt(*x)]).collect();
    w.write_rows("psi.csv", &["realization", "psi_over_t"], &rows)?;
    let stats::Summary { mean, se, .. } = stats::Summary::of(&xs);
    let expected = -sec.horizon / 12.0;
    let within = (mean - expected).abs() <= 3.0 * se + 1e-3;
    if !within {
        w.warn(format!("mean {mean} is outside 3 SE + 1e-3 of {expected}"));
    }
    let mut summary = json!({ "mean": mean, "se": se, "expected": expected, "within_band": within });
    if let Some(n) = compare_dp {
        let rep = psi_vs_dp(&PsiDpOptions::standard(), n, cfg.seed)?;
        let rows: Vec<Vec<String>> = rep
            .rows
            .iter()
            .map(|r| {
                vec![
                    r.realization.to_string(),
                    fmt(r.psi_closed_form),
                    fmt(r.dp_value),
                    fmt(r.relative_error),
                    (r.excluded as u8).to_string(),
                ]
            })
            .collect();
        w.write_rows(
            "psi_vs_dp.csv",
            &["realization", "psi_closed_form", "dp_value", "relative_error", "excluded_flag"],
            &rows,
        )?;
        if rep.excluded > 0 {
            w.warn(format!("{} realizations excluded: minimizer touched the lattice box", rep.excluded));
        }
        summary["fraction_within_5pct"] = json!(rep.fraction_within);
    }
    Ok(summary)
}
