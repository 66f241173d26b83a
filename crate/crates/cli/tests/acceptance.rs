//! End-to-end acceptance run. Prints one `[PASS]`/`[FAIL]` line per criterion
//! with the measured numbers, then exits nonzero if any criterion outside
//! `KNOWN_DEVIATIONS` failed (or if a known deviation starts passing, so the
//! list cannot go stale).
//!
//! Reference values are computed here independently of the library: the
//! micromaser detailed-balance product, Laguerre roots by bisection of the
//! three-term recurrence, Bessel functions by power series.

use std::f64::consts::{PI, SQRT_2};
use std::fs;
use std::path::Path;
use std::time::Instant;

use cavity_cli::{run, Experiment, ExperimentConfig, RunOptions};
use cavity_core::fock::{coherent_amplitudes, fock_state};
use cavity_core::models::{
    josephson_liouvillian, micromaser_liouvillian, two_cavity_liouvillian, JosephsonParams, MicromaserParams,
    TwoCavityParams,
};
use cavity_core::observables::{
    fano, fidelity_pure, g2_tau, g2_zero, mean_n, noise_averaged_psd, wigner, wigner_point, FrequencyGrid,
    NoiseAverage, PsdWindow, SpectrumResult, WignerGridSpec,
};
use cavity_core::semiclassical::{bifurcation_scan, eom_rhs, FixedPointKind};
use cavity_core::solvers::{steady_state, steady_state_converged, CutoffPolicy};
use cavity_core::{DensityMatrix, C64};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Criteria that fail with the current numerics; the analysis is in the
/// README under "Known deviations".
const KNOWN_DEVIATIONS: [usize; 3] = [2, 3, 8];

struct Verdict {
    passed: bool,
    detail: String,
}

impl Verdict {
    fn new(passed: bool, detail: impl Into<String>) -> Self {
        Self {
            passed,
            detail: detail.into(),
        }
    }
}

type Check<'a> = Box<dyn FnOnce(&mut Ledger) -> Verdict + 'a>;

/// Every state produced along the way, for the Fano identity check.
#[derive(Default)]
struct Ledger {
    states: Vec<DensityMatrix>,
}

impl Ledger {
    fn keep(&mut self, rho: &DensityMatrix) {
        self.states.push(rho.clone());
    }

    /// Largest violation of `F = 1 + <n>(g2(0) - 1)` over states with `<n> > 0`.
    fn fano_identity_error(&self) -> f64 {
        self.states
            .iter()
            .filter_map(|rho| {
                let n = mean_n(rho);
                let (f, g) = (fano(rho).ok()?, g2_zero(rho).ok()?);
                Some((f - (1.0 + n * (g - 1.0))).abs())
            })
            .fold(0.0, f64::max)
    }
}

fn main() {
    let scratch = tempfile::tempdir().expect("temporary directory");
    let mut ledger = Ledger::default();
    let mut failures = Vec::new();
    let start = Instant::now();

    let criteria: Vec<(usize, &str, Check)> = vec![
        (
            1,
            "micromaser steady state matches the detailed-balance product",
            Box::new(micromaser_oracle),
        ),
        (
            2,
            "micromaser trap dips",
            Box::new(|_: &mut Ledger| micromaser_dips(scratch.path())),
        ),
        (
            3,
            "josephson trap dips",
            Box::new(|_: &mut Ledger| josephson_dips(scratch.path())),
        ),
        (
            4,
            "trapped states stay below two photons",
            Box::new(trapping_truncation),
        ),
        (
            5,
            "fidelity limits",
            Box::new(|l: &mut Ledger| fidelity_limits(l, scratch.path())),
        ),
        (6, "weak nonlinearity gives a coherent state", Box::new(linear_limit)),
        (7, "antibunching and the Fano identity", Box::new(correlations)),
        (8, "noise-averaged spectrum", Box::new(spectrum)),
        (9, "semiclassical bifurcation", Box::new(bifurcation)),
        (10, "wigner functions", Box::new(wigner_suite)),
    ];

    for (id, title, check) in criteria {
        let t = Instant::now();
        let verdict = check(&mut ledger);
        let tag = if verdict.passed { "PASS" } else { "FAIL" };
        let known = KNOWN_DEVIATIONS.contains(&id);
        let note = match (verdict.passed, known) {
            (false, true) => " (known deviation)",
            (true, true) => " (listed as a known deviation but passed)",
            _ => "",
        };
        println!(
            "[{tag}] {id:>2}. {title}{note}: {} [{:.1} s]",
            verdict.detail,
            t.elapsed().as_secs_f64()
        );
        if verdict.passed == known {
            failures.push(id);
        }
    }
    println!("total {:.1} s", start.elapsed().as_secs_f64());
    if !failures.is_empty() {
        eprintln!("unexpected outcome for criteria {failures:?}");
        std::process::exit(1);
    }
}

// ---------------------------------------------------------------------------
// independent references

/// Detailed balance for gain `N sin^2(phi sqrt(n))` on `n-1 -> n` and loss `n`
/// on `n -> n-1`, normalized on levels `0..=cutoff`.
fn micromaser_product(pump: f64, phi: f64, cutoff: usize) -> Vec<f64> {
    let mut p = vec![1.0];
    for n in 1..=cutoff {
        let prev = p[n - 1];
        p.push(prev * pump * (phi * (n as f64).sqrt()).sin().powi(2) / n as f64);
    }
    let total: f64 = p.iter().sum();
    p.iter().map(|v| v / total).collect()
}

/// Generalized Laguerre `L_n^(1)(x)` from the three-term recurrence.
fn laguerre1(n: usize, x: f64) -> f64 {
    let (mut prev, mut cur) = (1.0, 2.0 - x);
    if n == 0 {
        return prev;
    }
    for k in 1..n {
        let k = k as f64;
        let next = ((2.0 * k + 2.0 - x) * cur - (k + 1.0) * prev) / (k + 1.0);
        prev = cur;
        cur = next;
    }
    cur
}

/// Smallest positive root of `L_n^(1)`, bracketed on a fine scan.
fn smallest_laguerre_root(n: usize) -> f64 {
    let step = 1e-3;
    let mut lo = step;
    while laguerre1(n, lo).signum() == laguerre1(n, lo + step).signum() {
        lo += step;
    }
    let mut hi = lo + step;
    for _ in 0..80 {
        let mid = 0.5 * (lo + hi);
        if laguerre1(n, lo).signum() == laguerre1(n, mid).signum() {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Bessel `J_n(x)` by its power series (fine for the `|x| < 10` used here).
fn bessel_series(n: u32, x: f64) -> f64 {
    let half = 0.5 * x;
    let mut term = half.powi(n as i32) / (1..=n).map(f64::from).product::<f64>();
    let mut sum = term;
    for k in 1..60 {
        let k = f64::from(k);
        term *= -half * half / (k * (k + f64::from(n)));
        sum += term;
    }
    sum
}

fn bessel_j1_derivative(x: f64) -> f64 {
    0.5 * (bessel_series(0, x) - bessel_series(2, x))
}

fn population_from(rho: &DensityMatrix, level: usize) -> f64 {
    rho.populations().iter().skip(level).sum()
}

fn auto_josephson(ej: f64, delta0: f64) -> cavity_core::solvers::SteadyStateResult {
    let policy = CutoffPolicy {
        seed: 10,
        max: 200,
        tail_tol: 1e-8,
    };
    steady_state_converged(
        |k| josephson_liouvillian(&JosephsonParams::new(ej, delta0, k)?),
        &policy,
    )
    .unwrap_or_else(|e| panic!("steady state at E={ej}, delta0={delta0}: {e}"))
}

fn run_default(experiment: Experiment, out: &Path) -> ExperimentConfig {
    let config = ExperimentConfig::default();
    let opts = RunOptions {
        out_dir: Some(out.to_path_buf()),
        ..RunOptions::default()
    };
    let summary = run(experiment, config.clone(), &opts).unwrap_or_else(|e| panic!("{experiment}: {e}"));
    assert_eq!(summary.failures, 0, "{experiment} had failing points");
    config
}

fn observed_minima(out: &Path, stem: &str) -> Vec<f64> {
    let text = fs::read_to_string(out.join(format!("{stem}.traps.json"))).expect("trap sidecar");
    let json: serde_json::Value = serde_json::from_str(&text).expect("valid json");
    json["observed_minima"]
        .as_array()
        .expect("minima list")
        .iter()
        .map(|v| v.as_f64().expect("number"))
        .collect()
}

fn csv_rows(path: &Path) -> (Vec<String>, Vec<Vec<String>>) {
    let text = fs::read_to_string(path).expect("csv output");
    let body: String = text
        .lines()
        .filter(|l| !l.starts_with('#'))
        .map(|l| format!("{l}\n"))
        .collect();
    let mut reader = csv::Reader::from_reader(body.as_bytes());
    let header = reader.headers().expect("header").iter().map(String::from).collect();
    let rows = reader
        .records()
        .map(|r| r.expect("record").iter().map(String::from).collect())
        .collect();
    (header, rows)
}

/// For each target, the nearest observed minimum and whether it lies within
/// `resolution` (plus rounding slack).
fn match_dips(targets: &[(&str, f64)], minima: &[f64], resolution: f64) -> (bool, String) {
    let mut all = true;
    let parts: Vec<String> = targets
        .iter()
        .map(|&(label, target)| {
            let nearest = minima
                .iter()
                .copied()
                .min_by(|a, b| (a - target).abs().total_cmp(&(b - target).abs()))
                .unwrap_or(f64::NAN);
            let ok = (nearest - target).abs() <= resolution + 1e-9;
            all &= ok;
            format!("{label}={target:.4} -> {nearest:.3}{}", if ok { "" } else { " (off)" })
        })
        .collect();
    (all, parts.join(", "))
}

// ---------------------------------------------------------------------------
// criteria

fn micromaser_oracle(ledger: &mut Ledger) -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let cutoff = 60;
    let t = Instant::now();
    let (mut diag, mut off) = (0.0f64, 0.0f64);
    for _ in 0..20 {
        let phi = rng.random_range(0.05..4.0);
        let p = MicromaserParams::new(10.0, phi, cutoff).unwrap();
        let ss = steady_state(&micromaser_liouvillian(&p).unwrap()).unwrap();
        let reference = micromaser_product(10.0, phi, cutoff);
        for (got, want) in ss.state.populations().iter().zip(&reference) {
            diag = diag.max((got - want).abs());
        }
        off = off.max(ss.state.max_offdiagonal());
        ledger.keep(&ss.state);
    }
    let secs = t.elapsed().as_secs_f64();
    Verdict::new(
        diag < 1e-10 && off < 1e-10 && secs < 10.0,
        format!("20 angles at cutoff {cutoff}: max |dp| = {diag:.1e}, max off-diagonal = {off:.1e}, {secs:.2} s"),
    )
}

fn micromaser_dips(scratch: &Path) -> Verdict {
    let out = scratch.join("sweep-phi");
    let config = run_default(Experiment::SweepPhi, &out);
    let step = (config.sweep_phi.rabi_angle.max - config.sweep_phi.rabi_angle.min)
        / (config.sweep_phi.rabi_angle.points - 1) as f64;
    let targets = [
        ("pi", PI),
        ("pi/sqrt2", PI / SQRT_2),
        ("pi/sqrt3", PI / 3f64.sqrt()),
        ("pi/2", PI / 2.0),
    ];
    let (ok, detail) = match_dips(&targets, &observed_minima(&out, "sweep-phi"), step);
    Verdict::new(ok, format!("step {step:.3}; {detail}"))
}

fn josephson_dips(scratch: &Path) -> Verdict {
    let out = scratch.join("sweep-delta0");
    let config = run_default(Experiment::SweepDelta0, &out);
    let c = &config.sweep_delta0;
    let step = (c.delta0.max - c.delta0.min) / (c.delta0.points - 1) as f64;
    let roots: Vec<f64> = (1..=3).map(|n| smallest_laguerre_root(n).sqrt()).collect();
    let targets = [("N=1", roots[0]), ("N=2", roots[1]), ("N=3", roots[2])];
    let minima = observed_minima(&out, "sweep-delta0");
    let (ok, detail) = match_dips(&targets, &minima, step);
    // A vacuum trap would leave the dip with almost all weight in |0>.
    let vacuum_weight = minima
        .iter()
        .map(|&d| {
            let ss = auto_josephson(c.ej_star_ratio, d);
            ss.state.populations()[0]
        })
        .fold(0.0, f64::max);
    Verdict::new(
        ok && vacuum_weight < 0.9,
        format!("step {step:.3}; {detail}; largest p0 at a dip = {vacuum_weight:.3}"),
    )
}

fn trapping_truncation(ledger: &mut Ledger) -> Verdict {
    let mut worst = 0.0f64;
    for ej in [1.0, 5.0, 20.0, 100.0] {
        let ss = steady_state(&josephson_liouvillian(&JosephsonParams::new(ej, SQRT_2, 12).unwrap()).unwrap()).unwrap();
        worst = worst.max(population_from(&ss.state, 2));
        ledger.keep(&ss.state);
    }
    let mut worst_mm = 0.0f64;
    for pump in [10.0, 20.0, 100.0] {
        let p = MicromaserParams::new(pump, PI / SQRT_2, 20).unwrap();
        let ss = steady_state(&micromaser_liouvillian(&p).unwrap()).unwrap();
        worst_mm = worst_mm.max(population_from(&ss.state, 2));
        ledger.keep(&ss.state);
    }
    Verdict::new(
        worst < 1e-8 && worst_mm < 1e-8,
        format!("P(n>=2): josephson {worst:.1e}, micromaser {worst_mm:.1e}"),
    )
}

fn fidelity_limits(ledger: &mut Ledger, scratch: &Path) -> Verdict {
    let out = scratch.join("fidelity");
    run_default(Experiment::Fidelity, &out);
    let (header, rows) = csv_rows(&out.join("fidelity.csv"));
    let col = |name: &str| header.iter().position(|h| h == name).expect(name);
    let value = |row: &Vec<String>, name: &str| row[col(name)].parse::<f64>().expect("number");
    let drives: Vec<f64> = rows.iter().map(|r| value(r, "drive")).collect();
    let single: Vec<f64> = rows.iter().map(|r| value(r, "josephson_fidelity")).collect();
    let two: Vec<f64> = rows.iter().map(|r| value(r, "two_cavity_fidelity")).collect();
    let micromaser: Vec<f64> = rows.iter().map(|r| value(r, "micromaser_fidelity")).collect();

    let monotone = single.windows(2).all(|w| w[1] >= w[0] - 1e-12);
    let bounded = single.iter().all(|&f| f <= 0.5 + 1e-12);
    let at_100 = single[drives.iter().position(|&d| d == 100.0).expect("drive 100 on the grid")];
    let two_wins = drives
        .iter()
        .zip(single.iter().zip(&two))
        .filter(|(d, _)| **d > 5.0)
        .all(|(_, (s, t))| t > s);
    let margin = drives
        .iter()
        .zip(single.iter().zip(&two))
        .filter(|(d, _)| **d > 5.0)
        .map(|(_, (s, t))| t - s)
        .fold(f64::INFINITY, f64::min);
    let mm_min = drives
        .iter()
        .zip(&micromaser)
        .filter(|(d, _)| **d >= 10.0)
        .map(|(_, f)| *f)
        .fold(f64::INFINITY, f64::min);

    // Two-level detailed balance at phi = pi/sqrt2: p1/p0 = N sin^2(phi).
    let ratio = 10.0 * (PI / SQRT_2).sin().powi(2);
    let expected_n = ratio / (1.0 + ratio);
    let mm =
        steady_state(&micromaser_liouvillian(&MicromaserParams::new(10.0, PI / SQRT_2, 20).unwrap()).unwrap()).unwrap();
    ledger.keep(&mm.state);
    let n10 = mean_n(&mm.state);

    Verdict::new(
        monotone && bounded && at_100 >= 0.49 && mm_min > 0.5 && (n10 - expected_n).abs() < 1e-9 && two_wins,
        format!(
            "single-cavity monotone={monotone}, max {:.4}, F(100) = {at_100:.4}; micromaser min F (N>=10) = {mm_min:.4}, \
             <n>(N=10) = {n10:.4} vs {expected_n:.4}; two-cavity minus single above drive 5 >= {margin:.3}",
            single.iter().copied().fold(0.0, f64::max)
        ),
    )
}

fn linear_limit(ledger: &mut Ledger) -> Verdict {
    let p = JosephsonParams::new(10.0, 0.05, 20).unwrap();
    let ss = steady_state(&josephson_liouvillian(&p).unwrap()).unwrap();
    ledger.keep(&ss.state);
    let amplitudes = coherent_amplitudes(p.space().unwrap(), C64::new(0.5, 0.0)).unwrap();
    let f = fidelity_pure(&ss.state, &amplitudes).unwrap();
    Verdict::new(f > 0.999, format!("F(|0.5>) = {f:.6}, <n> = {:.4}", mean_n(&ss.state)))
}

fn correlations(ledger: &mut Ledger) -> Verdict {
    let p = JosephsonParams::new(20.0, SQRT_2, 12).unwrap();
    let l = josephson_liouvillian(&p).unwrap();
    let ss = steady_state(&l).unwrap();
    ledger.keep(&ss.state);
    let g0 = g2_zero(&ss.state).unwrap();
    let trace = g2_tau(&l, &ss.state, &[0.0, 20.0]).unwrap();
    let g20 = trace.values[1].re;

    let other = auto_josephson(20.0, 1.0);
    ledger.keep(&other.state);
    let identity = ledger.fano_identity_error();
    Verdict::new(
        g0.abs() < 1e-8 && (g20 - 1.0).abs() < 1e-3 && identity < 1e-12,
        format!(
            "g2(0) = {g0:.1e}, g2(20) = {g20:.6}, Fano identity error {identity:.1e} over {} states",
            ledger.states.len()
        ),
    )
}

fn maxima_summary(s: &SpectrumResult) -> (usize, String) {
    let peak = s.psd.iter().copied().fold(0.0, f64::max);
    let maxima = s.local_maxima(0.05);
    let listed: Vec<String> = s
        .local_maxima(0.001)
        .iter()
        .map(|&i| format!("{:.2}@{:.1}%", s.frequencies[i], 100.0 * s.psd[i] / peak))
        .collect();
    (maxima.len(), listed.join(" "))
}

fn spectrum(_: &mut Ledger) -> Verdict {
    let grid = FrequencyGrid::new(-40.0, 40.0, 1601).unwrap();
    let window = PsdWindow::default();
    let noise = NoiseAverage::new(0.1);

    let strong = JosephsonParams::new(20.0, 1.0, 14).unwrap();
    let s = noise_averaged_psd(&strong, &noise, &window, &grid).expect("strong-drive spectrum");
    let (strong_count, strong_list) = maxima_summary(&s);

    let weak_cutoff = auto_josephson(2.0, 1.0).cutoff_used();
    let weak = JosephsonParams::new(2.0, 1.0, weak_cutoff).unwrap();
    let w = noise_averaged_psd(&weak, &noise, &window, &grid).expect("weak-drive spectrum");
    let (weak_count, _) = maxima_summary(&w);

    Verdict::new(
        strong_count == 3 && weak_count == 1,
        format!(
            "E=20, sigma=0.1: {strong_count} maxima above 5% (maxima above 0.1%: {strong_list}); E=2: {weak_count} maximum"
        ),
    )
}

fn bifurcation(ledger: &mut Ledger) -> Verdict {
    let delta0 = 0.1;
    let base = JosephsonParams::new(10.0, delta0, 10).unwrap();
    let drives: Vec<f64> = (0..40).map(|k| 10.0 + k as f64 * 390.0 / 39.0).collect();
    let scan = bifurcation_scan(&base, &drives).expect("scan");
    let Some(threshold) = scan.threshold else {
        return Verdict::new(false, "no threshold in 10..400");
    };
    let mut rhs_max = 0.0f64;
    let mut locked_ok = true;
    for row in &scan.rows {
        let p = JosephsonParams {
            ej_star_ratio: row.ej_star_ratio,
            ..base
        };
        let (da, dphi) = eom_rhs(&cavity_core::semiclassical::ScState::new(row.amplitude, row.phase), &p);
        rhs_max = rhs_max.max(da.hypot(dphi));
        if row.stable {
            locked_ok &= match row.kind {
                FixedPointKind::PhaseLocked => row.ej_star_ratio < threshold && row.phase.sin().abs() < 1e-9,
                FixedPointKind::AmplitudeLocked => {
                    row.ej_star_ratio > threshold && bessel_j1_derivative(2.0 * delta0 * row.amplitude).abs() < 1e-9
                }
            };
        }
    }

    let mut worst = 0.0f64;
    let mut compared = Vec::new();
    for ej in [35.0, 40.0, 60.0, 80.0, 100.0] {
        let p = JosephsonParams {
            ej_star_ratio: ej,
            ..base
        };
        let fp = cavity_core::semiclassical::find_fixed_points(&p)
            .expect("fixed points")
            .into_iter()
            .find(|f| f.stable)
            .expect("a stable point");
        let ss = auto_josephson(ej, delta0);
        ledger.keep(&ss.state);
        let n = mean_n(&ss.state);
        if n >= 10.0 {
            let a2 = fp.state.photon_number();
            let rel = (a2 - n).abs() / n;
            worst = worst.max(rel);
            compared.push(format!("E={ej}: A^2 {a2:.2} vs <n> {n:.2}"));
        }
    }
    Verdict::new(
        locked_ok && rhs_max < 1e-9 && worst < 0.15 && !compared.is_empty(),
        format!(
            "threshold E = {threshold:.4}, branch conditions hold = {locked_ok}, max |rhs| = {rhs_max:.1e}; {} (worst {:.2}%)",
            compared.join(", "),
            100.0 * worst
        ),
    )
}

fn wigner_suite(_: &mut Ledger) -> Verdict {
    let space = cavity_core::FockSpace::new(10).unwrap();
    let vacuum = fock_state(space, 0).unwrap();
    let one = fock_state(space, 1).unwrap();
    let w_vac = wigner_point(&vacuum, 0.0, 0.0);
    let w_one = wigner_point(&one, 0.0, 0.0);
    let grid = WignerGridSpec::square(5.0, 201);
    let norm = wigner(&one, &grid).unwrap().integral();

    let two = TwoCavityParams::new(100.0, SQRT_2, SQRT_2, 100.0, 7, 7).unwrap();
    let ss = steady_state(&two_cavity_liouvillian(&two).unwrap()).unwrap();
    let reduced = ss.state.partial_trace(two.dims(), 0).unwrap();
    let w_two = wigner_point(&reduced, 0.0, 0.0);

    let single =
        steady_state(&josephson_liouvillian(&JosephsonParams::new(100.0, SQRT_2, 12).unwrap()).unwrap()).unwrap();
    let single_grid = wigner(&single.state, &grid).unwrap();
    let single_min = single_grid.min();

    let ok = (w_vac - 1.0 / PI).abs() < 1e-6
        && (w_one + 1.0 / PI).abs() < 1e-6
        && (norm - 1.0).abs() < 1e-3
        && (single_grid.integral() - 1.0).abs() < 1e-3
        && w_two < 0.0
        && single_min > -1e-6;
    Verdict::new(
        ok,
        format!(
            "W_vac(0) = {w_vac:.8}, W_1(0) = {w_one:.8}, integral {norm:.6}; two-cavity W(0) = {w_two:.4}; \
             single-cavity min W = {single_min:.2e}"
        ),
    )
}
