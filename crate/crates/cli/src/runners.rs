//! One runner per experiment. Every runner fans its grid out over a rayon
//! pool, collects results in grid order, and writes CSV data plus a JSON
//! manifest.

use std::path::{Path, PathBuf};
use std::time::Instant;

use cavity_core::models::{
    josephson_liouvillian, micromaser_liouvillian, two_cavity_liouvillian, JosephsonParams, MicromaserParams,
    TwoCavityParams,
};
use cavity_core::observables::{
    fano, fidelity_fock, g2_tau, g2_zero, mean_n, noise_averaged_psd, psd, wigner, FrequencyGrid, NoiseAverage,
    NoiseQuadrature, PsdWindow, SpectrumResult, WignerGridSpec,
};
use cavity_core::semiclassical::{bifurcation_scan, eom_rhs, ScState};
use cavity_core::solvers::{
    steady_state_converged_with, steady_state_with, CutoffPolicy, SteadyStateOptions, SteadyStateResult,
};
use cavity_core::special::{find_root, laguerre_assoc1};
use cavity_core::{DensityMatrix, Superoperator};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;
use serde_json::json;

use crate::config::{Experiment, ExperimentConfig, QuadratureKind, RunSettings, WignerState};
use crate::error::CliError;
use crate::output::{fmt_f64, write_json, CsvTable, PointRecord, RunManifest, SpotCheck};

/// Command-line overrides applied on top of the config file.
#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    pub out_dir: Option<PathBuf>,
    pub workers: Option<usize>,
    pub seed_cutoff: Option<usize>,
}

/// Environment variable consulted when neither `--out` nor `output.dir`
/// names an output directory.
pub const OUT_DIR_ENV: &str = "SIMULATE_OUT_DIR";
const DEFAULT_OUT_DIR: &str = "results";

#[derive(Debug, Clone)]
pub struct RunSummary {
    pub experiment: Experiment,
    pub files: Vec<PathBuf>,
    pub manifest: PathBuf,
    pub points: usize,
    pub failures: usize,
}

/// Runs one experiment end to end.
pub fn run(experiment: Experiment, mut config: ExperimentConfig, opts: &RunOptions) -> Result<RunSummary, CliError> {
    if let Some(w) = opts.workers {
        config.run.workers = Some(w);
    }
    if let Some(c) = opts.seed_cutoff {
        config.run.seed_cutoff = c;
        config.run.max_cutoff = config.run.max_cutoff.max(c);
    }
    let out_dir = opts
        .out_dir
        .clone()
        .or_else(|| config.output.dir.clone())
        .or_else(|| std::env::var_os(OUT_DIR_ENV).map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from(DEFAULT_OUT_DIR));
    config.output.dir = Some(out_dir.clone());
    config.validate(experiment)?;
    std::fs::create_dir_all(&out_dir).map_err(|source| CliError::Io {
        path: out_dir.display().to_string(),
        source,
    })?;

    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(w) = config.run.workers {
        builder = builder.num_threads(w);
    }
    let pool = builder
        .build()
        .map_err(|e| CliError::Config(format!("cannot start worker pool: {e}")))?;

    let ctx = Context {
        dir: out_dir,
        stem: config
            .output
            .prefix
            .clone()
            .unwrap_or_else(|| experiment.name().to_string()),
        config: config.clone(),
        started: Instant::now(),
    };
    let outcome = pool.install(|| match experiment {
        Experiment::SweepPhi => run_sweep_phi(&ctx),
        Experiment::SweepDelta0 => run_sweep_delta0(&ctx),
        Experiment::Fidelity => run_fidelity(&ctx),
        Experiment::Wigner => run_wigner(&ctx),
        Experiment::Psd => run_psd(&ctx),
        Experiment::G2 => run_g2(&ctx),
        Experiment::Semiclassical => run_semiclassical(&ctx),
    })?;

    let manifest_path = ctx.path("manifest.json");
    let failures = outcome.points.iter().filter(|p| p.status != "ok").count();
    let manifest = RunManifest {
        experiment: experiment.name().to_string(),
        library_version: cavity_core::VERSION.to_string(),
        config,
        files: outcome
            .files
            .iter()
            .map(|p| p.file_name().unwrap_or_default().to_string_lossy().into_owned())
            .collect(),
        points: outcome.points.clone(),
        spot_checks: outcome.spot_checks,
        failures,
        notes: outcome.notes,
        wall_clock_seconds: ctx.started.elapsed().as_secs_f64(),
    };
    write_json(&manifest_path, &manifest)?;
    Ok(RunSummary {
        experiment,
        files: outcome.files,
        manifest: manifest_path,
        points: outcome.points.len(),
        failures,
    })
}

struct Context {
    dir: PathBuf,
    stem: String,
    config: ExperimentConfig,
    started: Instant,
}

impl Context {
    fn path(&self, suffix: &str) -> PathBuf {
        self.dir.join(format!("{}.{suffix}", self.stem))
    }

    fn run(&self) -> &RunSettings {
        &self.config.run
    }

    fn policy(&self) -> CutoffPolicy {
        CutoffPolicy {
            seed: self.run().seed_cutoff,
            max: self.run().max_cutoff,
            tail_tol: self.run().tail_tol,
        }
    }

    fn solver_options(&self) -> SteadyStateOptions {
        SteadyStateOptions {
            residual_tol: self.run().residual_tol,
            ..SteadyStateOptions::default()
        }
    }

    fn solve_auto<F>(&self, build: F) -> cavity_core::Result<SteadyStateResult>
    where
        F: Fn(usize) -> cavity_core::Result<Superoperator>,
    {
        steady_state_converged_with(build, &self.policy(), &self.solver_options())
    }
}

#[derive(Default)]
struct Outcome {
    files: Vec<PathBuf>,
    points: Vec<PointRecord>,
    spot_checks: Vec<SpotCheck>,
    notes: serde_json::Value,
}

fn record(index: usize, parameter: f64, solved: &Result<SteadyStateResult, String>) -> PointRecord {
    match solved {
        Ok(ss) => PointRecord {
            index,
            parameter,
            cutoffs: ss.cutoffs.clone(),
            residual: ss.residual,
            tail_population: ss.tail_population,
            status: "ok".into(),
        },
        Err(msg) => PointRecord {
            index,
            parameter,
            cutoffs: Vec::new(),
            residual: f64::NAN,
            tail_population: f64::NAN,
            status: msg.clone(),
        },
    }
}

fn or_nan(v: cavity_core::Result<f64>) -> f64 {
    v.unwrap_or(f64::NAN)
}

/// Predicted trap location: the matrix element out of `n_max` vanishes.
#[derive(Debug, Clone, Serialize)]
struct Trap {
    n_max: usize,
    parameter: f64,
}

/// Zeros of `sin(phi sqrt(n_max + 1))` inside `[lo, hi]`.
fn micromaser_traps(lo: f64, hi: f64) -> Vec<Trap> {
    let mut traps = Vec::new();
    for n_max in 0..10usize {
        let root = ((n_max + 1) as f64).sqrt();
        let mut m = 1;
        loop {
            let phi = m as f64 * std::f64::consts::PI / root;
            if phi > hi {
                break;
            }
            if phi >= lo {
                traps.push(Trap { n_max, parameter: phi });
            }
            m += 1;
        }
    }
    traps.sort_by(|a, b| a.parameter.total_cmp(&b.parameter));
    traps
}

/// `Delta_0 = sqrt(x)` for the zeros `x` of `L^1_{n_max}` inside `[lo, hi]`.
fn josephson_traps(lo: f64, hi: f64) -> Vec<Trap> {
    let mut traps = Vec::new();
    let x_hi = hi * hi;
    for n_max in 1..10usize {
        let f = |x: f64| laguerre_assoc1(n_max, x);
        let steps = 4000;
        let h = x_hi / steps as f64;
        for k in 0..steps {
            let (a, b) = (k as f64 * h, (k + 1) as f64 * h);
            if f(a) * f(b) < 0.0 {
                if let Some(x) = find_root(f, a, b, 1e-14) {
                    let d = x.sqrt();
                    if d >= lo && d <= hi {
                        traps.push(Trap { n_max, parameter: d });
                    }
                }
            }
        }
    }
    traps.sort_by(|a, b| a.parameter.total_cmp(&b.parameter));
    traps
}

/// Parameters at which `values` has a strict interior local minimum.
fn local_minima(params: &[f64], values: &[f64]) -> Vec<f64> {
    (1..values.len().saturating_sub(1))
        .filter(|&i| values[i] < values[i - 1] && values[i] < values[i + 1])
        .map(|i| params[i])
        .collect()
}

fn spot_check<F>(ctx: &Context, rows: &[Result<SteadyStateResult, String>], build: F) -> Vec<SpotCheck>
where
    F: Fn(usize, usize) -> cavity_core::Result<Superoperator> + Sync,
{
    let ok: Vec<usize> = rows
        .iter()
        .enumerate()
        .filter(|(_, r)| r.is_ok())
        .map(|(i, _)| i)
        .collect();
    let count = ctx.run().spot_checks.min(ok.len());
    if count == 0 {
        return Vec::new();
    }
    let mut rng = ChaCha8Rng::seed_from_u64(ctx.run().spot_check_seed);
    let mut picked: Vec<usize> = rand::seq::index::sample(&mut rng, ok.len(), count)
        .into_iter()
        .map(|k| ok[k])
        .collect();
    picked.sort_unstable();
    let opts = ctx.solver_options();
    picked
        .par_iter()
        .map(|&row| {
            let ss = rows[row].as_ref().expect("picked rows solved");
            let cutoff = ss.cutoff_used();
            let doubled = 2 * cutoff;
            let n = mean_n(&ss.state);
            let n2 = build(row, doubled)
                .and_then(|l| steady_state_with(&l, &opts))
                .map(|r| mean_n(&r.state))
                .unwrap_or(f64::NAN);
            let change = (n2 - n).abs() / n.abs().max(1e-12);
            SpotCheck {
                row,
                cutoff,
                doubled_cutoff: doubled,
                mean_n: n,
                mean_n_doubled: n2,
                relative_change: change,
                passed: change < ctx.run().spot_check_tol,
            }
        })
        .collect()
}

/// Shared body of the two steady-state sweeps.
fn run_sweep<F>(ctx: &Context, label: &str, params: Vec<f64>, traps: Vec<Trap>, build: F) -> Result<Outcome, CliError>
where
    F: Fn(f64, usize) -> cavity_core::Result<Superoperator> + Sync,
{
    let rows: Vec<Result<SteadyStateResult, String>> = params
        .par_iter()
        .map(|&v| {
            ctx.solve_auto(|c| build(v, c))
                .map_err(|e| format!("{label} = {v}: {e}"))
        })
        .collect();
    let spot = spot_check(ctx, &rows, |row, c| build(params[row], c));
    let mut points: Vec<PointRecord> = rows.iter().enumerate().map(|(i, r)| record(i, params[i], r)).collect();
    for s in spot.iter().filter(|s| !s.passed) {
        points[s.row].status = format!(
            "spot check failed: <n> changed by {:e} at cutoff {}",
            s.relative_change, s.doubled_cutoff
        );
    }

    let mut table = CsvTable::new(&[
        "parameter",
        "mean_n",
        "fano",
        "g2_zero",
        "fidelity_fock1",
        "cutoff",
        "residual",
        "status",
    ]);
    table.comment(format!("experiment: {}", ctx.stem));
    table.comment(format!("parameter: {label}"));
    table.comment("units: rates in gamma, hbar = gamma = 1");
    table.comment("mean_n = <a^dagger a>; fano = var(n)/<n>; g2_zero = <n(n-1)>/<n>^2; fidelity_fock1 = <1|rho|1>");
    table.comment(format!(
        "cutoff: raised until the top two Fock levels hold < {:e}",
        ctx.run().tail_tol
    ));
    let mut mean = Vec::with_capacity(params.len());
    for (i, r) in rows.iter().enumerate() {
        let v = params[i];
        match r {
            Ok(ss) => {
                let rho = &ss.state;
                let n = mean_n(rho);
                mean.push(n);
                table.push(vec![
                    fmt_f64(v),
                    fmt_f64(n),
                    fmt_f64(or_nan(fano(rho))),
                    fmt_f64(or_nan(g2_zero(rho))),
                    fmt_f64(or_nan(fidelity_fock(rho, 1))),
                    ss.cutoff_used().to_string(),
                    fmt_f64(ss.residual),
                    points[i].status.clone(),
                ]);
            }
            Err(msg) => {
                mean.push(f64::NAN);
                let nan = fmt_f64(f64::NAN);
                table.push(vec![
                    fmt_f64(v),
                    nan.clone(),
                    nan.clone(),
                    nan.clone(),
                    nan.clone(),
                    String::new(),
                    nan,
                    msg.clone(),
                ]);
            }
        }
    }
    let csv_path = ctx.path("csv");
    table.write(&csv_path)?;

    let traps_path = ctx.path("traps.json");
    let minima = local_minima(&params, &mean);
    write_json(
        &traps_path,
        &json!({
            "parameter": label,
            "predicted": traps,
            "observed_minima": minima,
        }),
    )?;
    Ok(Outcome {
        files: vec![csv_path, traps_path],
        points,
        spot_checks: spot,
        notes: json!({ "observed_minima": minima }),
    })
}

fn run_sweep_phi(ctx: &Context) -> Result<Outcome, CliError> {
    let c = &ctx.config.sweep_phi;
    let params = c.rabi_angle.values();
    let traps = micromaser_traps(c.rabi_angle.min, c.rabi_angle.max);
    let pump = c.pump_ratio;
    run_sweep(ctx, "rabi_angle", params, traps, move |phi, cutoff| {
        micromaser_liouvillian(&MicromaserParams::new(pump, phi, cutoff)?)
    })
}

fn run_sweep_delta0(ctx: &Context) -> Result<Outcome, CliError> {
    let c = &ctx.config.sweep_delta0;
    let params = c.delta0.values();
    let traps = josephson_traps(c.delta0.min, c.delta0.max);
    let (ej, det) = (c.ej_star_ratio, c.detuning);
    run_sweep(ctx, "delta0", params, traps, move |d0, cutoff| {
        josephson_liouvillian(&JosephsonParams::new(ej, d0, cutoff)?.with_detuning(det))
    })
}

fn two_cavity_reduced(
    ej: f64,
    delta0: f64,
    gamma_aux: f64,
    cutoffs: (usize, usize),
    opts: &SteadyStateOptions,
) -> cavity_core::Result<(DensityMatrix, SteadyStateResult)> {
    let p = TwoCavityParams::new(ej, delta0, delta0, gamma_aux, cutoffs.0, cutoffs.1)?;
    let ss = steady_state_with(&two_cavity_liouvillian(&p)?, opts)?;
    Ok((ss.state.partial_trace(p.dims(), 0)?, ss))
}

fn run_fidelity(ctx: &Context) -> Result<Outcome, CliError> {
    let c = &ctx.config.fidelity;
    let drives = c.drive.values();
    let opts = ctx.solver_options();
    struct Row {
        micromaser: Result<SteadyStateResult, String>,
        josephson: Result<SteadyStateResult, String>,
        two: Option<Result<(DensityMatrix, SteadyStateResult), String>>,
    }
    let rows: Vec<Row> = drives
        .par_iter()
        .map(|&drive| Row {
            micromaser: ctx
                .solve_auto(|k| micromaser_liouvillian(&MicromaserParams::new(drive, c.rabi_angle, k)?))
                .map_err(|e| format!("micromaser at drive {drive}: {e}")),
            josephson: ctx
                .solve_auto(|k| josephson_liouvillian(&JosephsonParams::new(drive, c.delta0, k)?))
                .map_err(|e| format!("josephson at drive {drive}: {e}")),
            two: c.two_cavity.then(|| {
                two_cavity_reduced(drive, c.delta0, c.gamma_aux, (c.cutoff_primary, c.cutoff_aux), &opts)
                    .map_err(|e| format!("two-cavity at drive {drive}: {e}"))
            }),
        })
        .collect();

    let mut table = CsvTable::new(&[
        "drive",
        "micromaser_fidelity",
        "micromaser_mean_n",
        "josephson_fidelity",
        "josephson_mean_n",
        "two_cavity_fidelity",
        "two_cavity_mean_n",
        "status",
    ]);
    table.comment("fidelity = <1|rho|1> against drive (N/gamma for the micromaser, E_J^*/(hbar gamma) otherwise)");
    table.comment(format!(
        "micromaser rabi_angle = {}; josephson delta0 = {}; two-cavity gamma_aux = {} gamma, cutoffs {} x {}",
        c.rabi_angle, c.delta0, c.gamma_aux, c.cutoff_primary, c.cutoff_aux
    ));
    let mut points = Vec::new();
    let stats = |r: &Result<SteadyStateResult, String>| match r {
        Ok(ss) => (or_nan(fidelity_fock(&ss.state, 1)), mean_n(&ss.state)),
        Err(_) => (f64::NAN, f64::NAN),
    };
    for (i, (drive, row)) in drives.iter().zip(&rows).enumerate() {
        let (fm, nm) = stats(&row.micromaser);
        let (fj, nj) = stats(&row.josephson);
        let (ft, nt) = match &row.two {
            Some(Ok((reduced, _))) => (or_nan(fidelity_fock(reduced, 1)), mean_n(reduced)),
            _ => (f64::NAN, f64::NAN),
        };
        let mut errors: Vec<String> = Vec::new();
        for r in [&row.micromaser, &row.josephson] {
            if let Err(e) = r {
                errors.push(e.clone());
            }
        }
        if let Some(Err(e)) = &row.two {
            errors.push(e.clone());
        }
        let status = if errors.is_empty() {
            "ok".to_string()
        } else {
            errors.join("; ")
        };
        let mut rec = record(i, *drive, &row.josephson);
        rec.status = status.clone();
        if let Some(Ok((_, ss))) = &row.two {
            rec.tail_population = rec.tail_population.max(ss.tail_population);
        }
        points.push(rec);
        table.push(vec![
            fmt_f64(*drive),
            fmt_f64(fm),
            fmt_f64(nm),
            fmt_f64(fj),
            fmt_f64(nj),
            fmt_f64(ft),
            fmt_f64(nt),
            status,
        ]);
    }
    let csv_path = ctx.path("csv");
    table.write(&csv_path)?;
    let two_tail = rows
        .iter()
        .filter_map(|r| match &r.two {
            Some(Ok((_, ss))) => Some(ss.tail_population),
            _ => None,
        })
        .fold(0.0, f64::max);
    Ok(Outcome {
        files: vec![csv_path],
        points,
        spot_checks: Vec::new(),
        notes: json!({ "two_cavity_max_tail_population": two_tail }),
    })
}

fn run_wigner(ctx: &Context) -> Result<Outcome, CliError> {
    let c = &ctx.config.wigner;
    let opts = ctx.solver_options();
    let (rho, record_ss) = match &c.state {
        WignerState::Micromaser { pump_ratio, rabi_angle } => {
            let ss = ctx
                .solve_auto(|k| micromaser_liouvillian(&MicromaserParams::new(*pump_ratio, *rabi_angle, k)?))
                .map_err(|e| CliError::numerical("micromaser steady state", e))?;
            (ss.state.clone(), ss)
        }
        WignerState::Josephson { ej_star_ratio, delta0 } => {
            let ss = ctx
                .solve_auto(|k| josephson_liouvillian(&JosephsonParams::new(*ej_star_ratio, *delta0, k)?))
                .map_err(|e| CliError::numerical("josephson steady state", e))?;
            (ss.state.clone(), ss)
        }
        WignerState::TwoCavity {
            ej_star_ratio,
            delta0,
            gamma_aux,
            cutoff_primary,
            cutoff_aux,
        } => two_cavity_reduced(
            *ej_star_ratio,
            *delta0,
            *gamma_aux,
            (*cutoff_primary, *cutoff_aux),
            &opts,
        )
        .map_err(|e| CliError::numerical("two-cavity steady state", e))?,
    };
    let spec = WignerGridSpec {
        x_min: c.x.min,
        x_max: c.x.max,
        x_points: c.x.points,
        p_min: c.p.min,
        p_max: c.p.max,
        p_points: c.p.points,
    };
    let grid = wigner(&rho, &spec).map_err(|e| CliError::numerical("Wigner grid", e))?;
    let mut table = CsvTable::new(&["x", "p", "w"]);
    table.comment("W(x, p) with alpha = (x + i p)/sqrt(2), normalized to integrate to one (vacuum peak 1/pi)");
    table.comment(format!("state: {:?}", c.state));
    table.comment(format!(
        "integral = {}; min = {}; max = {}",
        fmt_f64(grid.integral()),
        fmt_f64(grid.min()),
        fmt_f64(grid.max())
    ));
    for (j, p) in grid.p_axis.iter().enumerate() {
        for (i, x) in grid.x_axis.iter().enumerate() {
            table.push(vec![fmt_f64(*x), fmt_f64(*p), fmt_f64(grid.values[(i, j)])]);
        }
    }
    let csv_path = ctx.path("csv");
    table.write(&csv_path)?;
    Ok(Outcome {
        files: vec![csv_path],
        points: vec![record(0, 0.0, &Ok(record_ss))],
        spot_checks: Vec::new(),
        notes: json!({
            "integral": grid.integral(),
            "min": grid.min(),
            "max": grid.max(),
            "mean_n": mean_n(&rho),
            "fidelity_fock1": or_nan(fidelity_fock(&rho, 1)),
        }),
    })
}

fn maxima_summary(s: &SpectrumResult) -> Vec<f64> {
    s.local_maxima(0.05).into_iter().map(|i| s.frequencies[i]).collect()
}

fn run_psd(ctx: &Context) -> Result<Outcome, CliError> {
    let c = &ctx.config.psd;
    let base =
        JosephsonParams::new(c.ej_star_ratio, c.delta0, 2).map_err(|e| CliError::numerical("psd parameters", e))?;
    let ss = match c.cutoff {
        Some(k) => steady_state_with(
            &josephson_liouvillian(&base.with_cutoff(k)).map_err(|e| CliError::numerical("psd Liouvillian", e))?,
            &ctx.solver_options(),
        ),
        None => ctx.solve_auto(|k| josephson_liouvillian(&base.with_cutoff(k))),
    }
    .map_err(|e| CliError::numerical("psd steady state", e))?;
    let p = base.with_cutoff(ss.cutoff_used());
    let l = josephson_liouvillian(&p).map_err(|e| CliError::numerical("psd Liouvillian", e))?;
    let window = PsdWindow {
        t_max: c.window,
        points: c.window_points,
        decay_rate: 0.0,
    };
    let grid = FrequencyGrid::new(c.frequency.min, c.frequency.max, c.frequency.points)
        .map_err(|e| CliError::numerical("frequency grid", e))?;
    let single = psd(&l, &ss.state, &window, &grid).map_err(|e| CliError::numerical("spectrum at zero detuning", e))?;
    let averaged = if c.noise_width > 0.0 {
        let rule = match c.quadrature {
            QuadratureKind::Uniform => NoiseQuadrature::Uniform {
                half_nodes: c.nodes,
                max_half_nodes: c.max_nodes,
            },
            QuadratureKind::GaussHermite => NoiseQuadrature::GaussHermite { nodes: c.nodes },
        };
        let noise = NoiseAverage {
            width: c.noise_width,
            rule,
            check_convergence: true,
        };
        Some(
            noise_averaged_psd(&p, &noise, &window, &grid)
                .map_err(|e| CliError::numerical("noise-averaged spectrum", e))?,
        )
    } else {
        None
    };

    let single_n = single.normalized();
    let avg_n = averaged.as_ref().map(|a| a.normalized());
    let mut table = CsvTable::new(&["omega", "psd", "psd_normalized", "averaged_psd", "averaged_normalized"]);
    table.comment("S(omega) = Re int_0^inf exp(i omega tau) <a^dagger(tau) a(0)> dtau, omega measured from the cavity frequency in gamma");
    table.comment("the coherent line pi |<a>|^2 delta(omega) occupies one bin of height pi |<a>|^2 / d_omega");
    table.comment(format!(
        "ej_star_ratio = {}; delta0 = {}; cutoff = {}; noise standard deviation = {}",
        c.ej_star_ratio, c.delta0, p.cutoff, c.noise_width
    ));
    for (k, w) in single.frequencies.iter().enumerate() {
        let (a, an) = match (&averaged, &avg_n) {
            (Some(a), Some(an)) => (a.psd[k], an.psd[k]),
            _ => (f64::NAN, f64::NAN),
        };
        table.push(vec![
            fmt_f64(*w),
            fmt_f64(single.psd[k]),
            fmt_f64(single_n.psd[k]),
            fmt_f64(a),
            fmt_f64(an),
        ]);
    }
    let csv_path = ctx.path("csv");
    table.write(&csv_path)?;
    Ok(Outcome {
        files: vec![csv_path],
        points: vec![record(0, c.ej_star_ratio, &Ok(ss))],
        spot_checks: Vec::new(),
        notes: json!({
            "maxima_above_5_percent": maxima_summary(&single),
            "averaged_maxima_above_5_percent": averaged.as_ref().map(maxima_summary),
            "mean_n": single.mean_n,
            "coherent_power": single.coherent_power,
        }),
    })
}

fn run_g2(ctx: &Context) -> Result<Outcome, CliError> {
    let c = &ctx.config.g2;
    let taus = c.tau.values();
    // steady state, g2(tau) samples, g2(0)
    type CaseResult = Result<(SteadyStateResult, Vec<f64>, f64), String>;
    let results: Vec<CaseResult> = c
        .cases
        .par_iter()
        .map(|case| {
            let base = JosephsonParams::new(case.ej_star_ratio, case.delta0, 2).map_err(|e| e.to_string())?;
            let ss = ctx
                .solve_auto(|k| josephson_liouvillian(&base.with_cutoff(k)))
                .map_err(|e| e.to_string())?;
            let l = josephson_liouvillian(&base.with_cutoff(ss.cutoff_used())).map_err(|e| e.to_string())?;
            let trace = g2_tau(&l, &ss.state, &taus).map_err(|e| e.to_string())?;
            let g0 = g2_zero(&ss.state).map_err(|e| e.to_string())?;
            Ok((ss, trace.values.iter().map(|v| v.re).collect(), g0))
        })
        .collect();
    let mut files = Vec::new();
    let mut points = Vec::new();
    let mut summary = Vec::new();
    for (k, (case, r)) in c.cases.iter().zip(results).enumerate() {
        match r {
            Ok((ss, g2, g0)) => {
                let mut table = CsvTable::new(&["tau", "g2"]);
                table.comment("g2(tau) = <a^dagger a^dagger(tau) a(tau) a> / <n>^2, tau in 1/gamma");
                table.comment(format!(
                    "ej_star_ratio = {}; delta0 = {}; cutoff = {}; g2_zero = {}",
                    case.ej_star_ratio,
                    case.delta0,
                    ss.cutoff_used(),
                    fmt_f64(g0)
                ));
                for (t, g) in taus.iter().zip(&g2) {
                    table.push(vec![fmt_f64(*t), fmt_f64(*g)]);
                }
                let path = ctx.path(&format!("{k}.csv"));
                table.write(&path)?;
                files.push(path);
                summary.push(json!({ "case": k, "g2_zero": g0, "g2_last": g2.last() }));
                points.push(record(k, case.delta0, &Ok(ss)));
            }
            Err(msg) => {
                let msg = format!("case {k}: {msg}");
                points.push(record(k, case.delta0, &Err(msg)));
            }
        }
    }
    Ok(Outcome {
        files,
        points,
        spot_checks: Vec::new(),
        notes: json!({ "cases": summary }),
    })
}

fn run_semiclassical(ctx: &Context) -> Result<Outcome, CliError> {
    let c = &ctx.config.semiclassical;
    let drives = c.ej_star_ratio.values();
    let base =
        JosephsonParams::new(drives[0], c.delta0, 2).map_err(|e| CliError::numerical("semiclassical parameters", e))?;
    let scan = bifurcation_scan(&base, &drives).map_err(|e| CliError::numerical("bifurcation scan", e))?;
    let quantum: Vec<Option<Result<SteadyStateResult, String>>> = drives
        .par_iter()
        .map(|&e| {
            c.quantum_comparison.then(|| {
                let p = JosephsonParams {
                    ej_star_ratio: e,
                    ..base
                };
                ctx.solve_auto(|k| josephson_liouvillian(&p.with_cutoff(k)))
                    .map_err(|err| format!("quantum <n> at drive {e}: {err}"))
            })
        })
        .collect();

    let mut table = CsvTable::new(&[
        "ej_star_ratio",
        "amplitude",
        "phase",
        "photon_number",
        "kind",
        "stable",
        "rhs_norm",
        "quantum_mean_n",
    ]);
    table.comment("fixed points of the mean-field amplitude A and phase; photon_number = A^2");
    table.comment(format!("delta0 = {}", c.delta0));
    table.comment(match scan.threshold {
        Some(t) => format!("threshold drive = {}", fmt_f64(t)),
        None => "threshold drive: not crossed on this grid".to_string(),
    });
    for row in &scan.rows {
        let p = JosephsonParams {
            ej_star_ratio: row.ej_star_ratio,
            ..base
        };
        let (dphi, da) = eom_rhs(&ScState::new(row.amplitude, row.phase), &p);
        let idx = drives
            .iter()
            .position(|d| *d == row.ej_star_ratio)
            .expect("rows come from the grid");
        let qn = match &quantum[idx] {
            Some(Ok(ss)) => mean_n(&ss.state),
            _ => f64::NAN,
        };
        table.push(vec![
            fmt_f64(row.ej_star_ratio),
            fmt_f64(row.amplitude),
            fmt_f64(row.phase),
            fmt_f64(row.amplitude * row.amplitude),
            row.kind.label().to_string(),
            row.stable.to_string(),
            fmt_f64(dphi.hypot(da)),
            fmt_f64(qn),
        ]);
    }
    let csv_path = ctx.path("csv");
    table.write(&csv_path)?;
    let points = drives
        .iter()
        .enumerate()
        .map(|(i, e)| match &quantum[i] {
            Some(r) => record(i, *e, r),
            None => PointRecord {
                index: i,
                parameter: *e,
                cutoffs: Vec::new(),
                residual: 0.0,
                tail_population: 0.0,
                status: "ok".into(),
            },
        })
        .collect();
    Ok(Outcome {
        files: vec![csv_path],
        points,
        spot_checks: Vec::new(),
        notes: json!({ "threshold": scan.threshold }),
    })
}

/// Convenience for tests and scripts: parse, validate and run.
pub fn run_file(experiment: Experiment, config: &Path, opts: &RunOptions) -> Result<RunSummary, CliError> {
    run(experiment, ExperimentConfig::load(config)?, opts)
}
