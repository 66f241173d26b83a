//! TOML experiment configuration.
//!
//! A config file holds an optional `[run]` and `[output]` table plus one
//! table per experiment, named after the subcommand (`[sweep-phi]`,
//! `[psd]`, ...). Tables that are absent take their defaults; unknown keys
//! anywhere are rejected.

use std::f64::consts::{PI, SQRT_2};
use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::CliError;

/// The seven experiment kinds, one per subcommand.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Experiment {
    SweepPhi,
    SweepDelta0,
    Fidelity,
    Wigner,
    Psd,
    G2,
    Semiclassical,
}

impl Experiment {
    pub const ALL: [Experiment; 7] = [
        Experiment::SweepPhi,
        Experiment::SweepDelta0,
        Experiment::Fidelity,
        Experiment::Wigner,
        Experiment::Psd,
        Experiment::G2,
        Experiment::Semiclassical,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Experiment::SweepPhi => "sweep-phi",
            Experiment::SweepDelta0 => "sweep-delta0",
            Experiment::Fidelity => "fidelity",
            Experiment::Wigner => "wigner",
            Experiment::Psd => "psd",
            Experiment::G2 => "g2",
            Experiment::Semiclassical => "semiclassical",
        }
    }
}

impl fmt::Display for Experiment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Uniform grid `min, min + h, ..., max` with `points` entries.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Grid {
    pub min: f64,
    pub max: f64,
    pub points: usize,
}

impl Grid {
    pub fn new(min: f64, max: f64, points: usize) -> Self {
        Self { min, max, points }
    }

    pub fn values(&self) -> Vec<f64> {
        if self.points == 1 {
            return vec![self.min];
        }
        let h = (self.max - self.min) / (self.points - 1) as f64;
        (0..self.points).map(|k| self.min + k as f64 * h).collect()
    }

    fn validate(&self, what: &str) -> Result<(), CliError> {
        if self.points == 0 {
            return Err(CliError::Config(format!("{what}: grid has no points")));
        }
        if !self.min.is_finite() || !self.max.is_finite() {
            return Err(CliError::Config(format!("{what}: grid bounds must be finite")));
        }
        if self.points > 1 && self.max <= self.min {
            return Err(CliError::Config(format!("{what}: grid must be increasing (max > min)")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunSettings {
    /// Thread count; `None` uses every available core.
    pub workers: Option<usize>,
    /// First cutoff tried by the automatic truncation.
    pub seed_cutoff: usize,
    pub max_cutoff: usize,
    /// Accepted population of the top two Fock levels.
    pub tail_tol: f64,
    /// Accepted steady-state residual `max |L rho|`.
    pub residual_tol: f64,
    /// Rows re-solved at twice the cutoff after a sweep.
    pub spot_checks: usize,
    pub spot_check_seed: u64,
    /// Accepted relative change of `<n>` in a spot check.
    pub spot_check_tol: f64,
}

impl Default for RunSettings {
    fn default() -> Self {
        Self {
            workers: None,
            seed_cutoff: 10,
            max_cutoff: 160,
            tail_tol: 1e-8,
            residual_tol: 1e-9,
            spot_checks: 5,
            spot_check_seed: 20_240_601,
            spot_check_tol: 1e-6,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputSettings {
    pub dir: Option<PathBuf>,
    /// File stem; defaults to the experiment name.
    pub prefix: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepPhi {
    pub pump_ratio: f64,
    pub rabi_angle: Grid,
}

impl Default for SweepPhi {
    fn default() -> Self {
        Self {
            pump_ratio: 10.0,
            rabi_angle: Grid::new(0.005, 4.0, 800),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepDelta0 {
    pub ej_star_ratio: f64,
    pub detuning: f64,
    pub delta0: Grid,
}

impl Default for SweepDelta0 {
    fn default() -> Self {
        Self {
            ej_star_ratio: 20.0,
            detuning: 0.0,
            delta0: Grid::new(0.005, 2.2, 440),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Fidelity {
    /// Shared drive axis: `N/gamma` for the micromaser, `E_J^*/(hbar gamma)`
    /// for the Josephson curves.
    pub drive: Grid,
    pub rabi_angle: f64,
    pub delta0: f64,
    pub two_cavity: bool,
    pub gamma_aux: f64,
    pub cutoff_primary: usize,
    pub cutoff_aux: usize,
}

impl Default for Fidelity {
    fn default() -> Self {
        Self {
            drive: Grid::new(1.0, 100.0, 100),
            rabi_angle: PI / SQRT_2,
            delta0: SQRT_2,
            two_cavity: true,
            gamma_aux: 100.0,
            cutoff_primary: 7,
            cutoff_aux: 7,
        }
    }
}

/// State whose Wigner function is sampled.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "kebab-case", deny_unknown_fields)]
pub enum WignerState {
    Micromaser {
        pump_ratio: f64,
        rabi_angle: f64,
    },
    Josephson {
        ej_star_ratio: f64,
        delta0: f64,
    },
    /// Reduced state of the primary cavity.
    TwoCavity {
        ej_star_ratio: f64,
        delta0: f64,
        gamma_aux: f64,
        cutoff_primary: usize,
        cutoff_aux: usize,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Wigner {
    pub state: WignerState,
    pub x: Grid,
    pub p: Grid,
}

impl Default for Wigner {
    fn default() -> Self {
        Self {
            state: WignerState::Josephson {
                ej_star_ratio: 100.0,
                delta0: SQRT_2,
            },
            x: Grid::new(-5.0, 5.0, 201),
            p: Grid::new(-5.0, 5.0, 201),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum QuadratureKind {
    Uniform,
    GaussHermite,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Psd {
    pub ej_star_ratio: f64,
    pub delta0: f64,
    /// Standard deviation of the static detuning; zero skips the average.
    pub noise_width: f64,
    pub frequency: Grid,
    pub window: f64,
    pub window_points: usize,
    pub quadrature: QuadratureKind,
    /// Initial half-width (uniform) or order (Gauss–Hermite).
    pub nodes: usize,
    /// Refinement limit of the uniform rule.
    pub max_nodes: usize,
    /// Fixed cutoff; automatic when absent.
    pub cutoff: Option<usize>,
}

impl Default for Psd {
    fn default() -> Self {
        Self {
            ej_star_ratio: 20.0,
            delta0: 1.0,
            noise_width: 0.1,
            frequency: Grid::new(-40.0, 40.0, 1601),
            window: 200.0,
            window_points: 16384,
            quadrature: QuadratureKind::Uniform,
            nodes: 30,
            max_nodes: 480,
            cutoff: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct G2Case {
    pub ej_star_ratio: f64,
    pub delta0: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct G2 {
    pub cases: Vec<G2Case>,
    pub tau: Grid,
}

impl Default for G2 {
    fn default() -> Self {
        Self {
            cases: vec![
                G2Case {
                    ej_star_ratio: 20.0,
                    delta0: SQRT_2,
                },
                G2Case {
                    ej_star_ratio: 20.0,
                    delta0: 1.0,
                },
            ],
            tau: Grid::new(0.0, 20.0, 401),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Semiclassical {
    pub delta0: f64,
    pub ej_star_ratio: Grid,
    /// Quantum `<n>` is computed alongside when true.
    pub quantum_comparison: bool,
}

impl Default for Semiclassical {
    fn default() -> Self {
        Self {
            delta0: 0.1,
            ej_star_ratio: Grid::new(10.0, 400.0, 40),
            quantum_comparison: false,
        }
    }
}

/// Parsed configuration file.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields, rename_all = "kebab-case")]
pub struct ExperimentConfig {
    pub run: RunSettings,
    pub output: OutputSettings,
    pub sweep_phi: SweepPhi,
    pub sweep_delta0: SweepDelta0,
    pub fidelity: Fidelity,
    pub wigner: Wigner,
    pub psd: Psd,
    pub g2: G2,
    pub semiclassical: Semiclassical,
}

fn positive(value: f64, what: &str) -> Result<(), CliError> {
    if value.is_finite() && value > 0.0 {
        Ok(())
    } else {
        Err(CliError::Config(format!(
            "{what} must be a finite positive number, got {value}"
        )))
    }
}

fn non_negative(value: f64, what: &str) -> Result<(), CliError> {
    if value.is_finite() && value >= 0.0 {
        Ok(())
    } else {
        Err(CliError::Config(format!("{what} must be finite and >= 0, got {value}")))
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self, CliError> {
        toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    /// Checks the shared settings and the table of `experiment`.
    pub fn validate(&self, experiment: Experiment) -> Result<(), CliError> {
        let run = &self.run;
        if run.workers == Some(0) {
            return Err(CliError::Config("run.workers must be >= 1".into()));
        }
        if run.seed_cutoff < 2 || run.max_cutoff < run.seed_cutoff {
            return Err(CliError::Config("need 2 <= run.seed_cutoff <= run.max_cutoff".into()));
        }
        positive(run.tail_tol, "run.tail_tol")?;
        positive(run.residual_tol, "run.residual_tol")?;
        positive(run.spot_check_tol, "run.spot_check_tol")?;
        match experiment {
            Experiment::SweepPhi => {
                let c = &self.sweep_phi;
                positive(c.pump_ratio, "sweep-phi.pump_ratio")?;
                c.rabi_angle.validate("sweep-phi.rabi_angle")?;
                if c.rabi_angle.min <= 0.0 {
                    return Err(CliError::Config("sweep-phi.rabi_angle must be > 0".into()));
                }
            }
            Experiment::SweepDelta0 => {
                let c = &self.sweep_delta0;
                non_negative(c.ej_star_ratio, "sweep-delta0.ej_star_ratio")?;
                if !c.detuning.is_finite() {
                    return Err(CliError::Config("sweep-delta0.detuning must be finite".into()));
                }
                c.delta0.validate("sweep-delta0.delta0")?;
                if c.delta0.min <= 0.0 {
                    return Err(CliError::Config("sweep-delta0.delta0 must be > 0".into()));
                }
            }
            Experiment::Fidelity => {
                let c = &self.fidelity;
                c.drive.validate("fidelity.drive")?;
                if c.drive.min <= 0.0 {
                    return Err(CliError::Config("fidelity.drive must be > 0".into()));
                }
                positive(c.rabi_angle, "fidelity.rabi_angle")?;
                positive(c.delta0, "fidelity.delta0")?;
                positive(c.gamma_aux, "fidelity.gamma_aux")?;
                if c.cutoff_primary == 0 || c.cutoff_aux == 0 {
                    return Err(CliError::Config("fidelity cutoffs must be >= 1".into()));
                }
            }
            Experiment::Wigner => {
                let c = &self.wigner;
                match &c.state {
                    WignerState::Micromaser { pump_ratio, rabi_angle } => {
                        positive(*pump_ratio, "wigner.pump_ratio")?;
                        positive(*rabi_angle, "wigner.rabi_angle")?;
                    }
                    WignerState::Josephson { ej_star_ratio, delta0 } => {
                        non_negative(*ej_star_ratio, "wigner.ej_star_ratio")?;
                        positive(*delta0, "wigner.delta0")?;
                    }
                    WignerState::TwoCavity {
                        ej_star_ratio,
                        delta0,
                        gamma_aux,
                        cutoff_primary,
                        cutoff_aux,
                    } => {
                        non_negative(*ej_star_ratio, "wigner.ej_star_ratio")?;
                        positive(*delta0, "wigner.delta0")?;
                        positive(*gamma_aux, "wigner.gamma_aux")?;
                        if *cutoff_primary == 0 || *cutoff_aux == 0 {
                            return Err(CliError::Config("wigner cutoffs must be >= 1".into()));
                        }
                    }
                }
                c.x.validate("wigner.x")?;
                c.p.validate("wigner.p")?;
                if c.x.points < 2 || c.p.points < 2 {
                    return Err(CliError::Config("wigner grids need at least 2 points".into()));
                }
            }
            Experiment::Psd => {
                let c = &self.psd;
                non_negative(c.ej_star_ratio, "psd.ej_star_ratio")?;
                positive(c.delta0, "psd.delta0")?;
                non_negative(c.noise_width, "psd.noise_width")?;
                c.frequency.validate("psd.frequency")?;
                if c.frequency.points < 3 {
                    return Err(CliError::Config("psd.frequency needs at least 3 points".into()));
                }
                positive(c.window, "psd.window")?;
                if c.nodes == 0 || (c.quadrature == QuadratureKind::Uniform && c.max_nodes < c.nodes) {
                    return Err(CliError::Config("need 1 <= psd.nodes <= psd.max_nodes".into()));
                }
                if c.cutoff == Some(0) {
                    return Err(CliError::Config("psd.cutoff must be >= 1".into()));
                }
            }
            Experiment::G2 => {
                let c = &self.g2;
                if c.cases.is_empty() {
                    return Err(CliError::Config("g2.cases is empty".into()));
                }
                for case in &c.cases {
                    non_negative(case.ej_star_ratio, "g2.cases.ej_star_ratio")?;
                    positive(case.delta0, "g2.cases.delta0")?;
                }
                c.tau.validate("g2.tau")?;
                if c.tau.min < 0.0 {
                    return Err(CliError::Config("g2.tau must be >= 0".into()));
                }
            }
            Experiment::Semiclassical => {
                let c = &self.semiclassical;
                positive(c.delta0, "semiclassical.delta0")?;
                c.ej_star_ratio.validate("semiclassical.ej_star_ratio")?;
                non_negative(c.ej_star_ratio.min, "semiclassical.ej_star_ratio")?;
            }
        }
        Ok(())
    }
}
