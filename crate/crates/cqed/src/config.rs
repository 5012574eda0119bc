//! Declarative experiment configuration.
//!
//! Configs are TOML with all frequencies given as ν/2π in MHz and all times
//! in µs; loading converts to the crate's internal angular units (rad/µs).
//! Unknown keys are rejected so typos fail closed.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::CqedError;
use crate::params::{DriveSpec, Envelope, SystemParams, TWO_PI};
use crate::trajectories::HomodyneConfig;

pub const SCHEMA_VERSION: u32 = 1;

/// Model tier selected for a run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    /// Bare master equation in the exact dressed basis.
    Full,
    /// Second-order dispersive master equation.
    Dispersive,
    /// Reduced qubit model with nonlinear pointer states.
    ReducedNonlinear,
    /// Reduced qubit model, linear (λ → 0 dissipation, no Kerr terms).
    ReducedLinear,
    /// Homodyne trajectories of the full cavity–qubit state.
    QteFull,
    /// Homodyne trajectories of the reduced qubit.
    QteReduced,
}

impl ModelKind {
    pub fn tag(&self) -> &'static str {
        match self {
            ModelKind::Full => "full",
            ModelKind::Dispersive => "dispersive",
            ModelKind::ReducedNonlinear => "reduced_nonlinear",
            ModelKind::ReducedLinear => "reduced_linear",
            ModelKind::QteFull => "qte_full",
            ModelKind::QteReduced => "qte_reduced",
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemSection {
    pub omega_r_over_2pi_mhz: f64,
    pub omega_a_over_2pi_mhz: f64,
    pub g_over_2pi_mhz: f64,
    pub kappa_over_2pi_mhz: f64,
    pub gamma_1_over_2pi_mhz: f64,
    pub gamma_phi_over_2pi_mhz: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum EnvelopeSection {
    #[default]
    Constant,
    TanhRamp {
        mu1_us: f64,
        sigma_us: f64,
    },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DriveSection {
    pub amplitude_over_2pi_mhz: f64,
    pub frequency_over_2pi_mhz: f64,
    #[serde(default)]
    pub phase_rad: f64,
    #[serde(default)]
    pub envelope: EnvelopeSection,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitialQubit {
    Ground,
    Excited,
    PlusX,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitialCavity {
    Vacuum,
    /// Pointer steady state of the initial qubit branch.
    Steady,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSection {
    pub model: ModelKind,
    pub duration_us: f64,
    pub sample_points: usize,
    #[serde(default = "default_qubit")]
    pub initial_qubit: InitialQubit,
    #[serde(default = "default_cavity")]
    pub initial_cavity: InitialCavity,
    /// Fock levels; omitted → sized automatically from the pointer fields.
    #[serde(default)]
    pub fock_levels: Option<usize>,
    #[serde(default)]
    pub seed: u64,
}

fn default_qubit() -> InitialQubit {
    InitialQubit::Excited
}
fn default_cavity() -> InitialCavity {
    InitialCavity::Vacuum
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HomodyneSection {
    /// Local-oscillator phase; omitted → the back-action-free optimum.
    #[serde(default)]
    pub phi_rad: Option<f64>,
    pub eta: f64,
    pub dt_us: f64,
    pub n_traj: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSection {
    /// Only "drive_amplitude_over_2pi_mhz" is supported.
    pub parameter: String,
    #[serde(default)]
    pub values: Option<Vec<f64>>,
    #[serde(default)]
    pub start: Option<f64>,
    #[serde(default)]
    pub stop: Option<f64>,
    #[serde(default)]
    pub points: Option<usize>,
}

impl SweepSection {
    pub fn axis(&self) -> Result<Vec<f64>, CqedError> {
        if self.parameter != "drive_amplitude_over_2pi_mhz" {
            return Err(CqedError::Config(format!(
                "unsupported sweep parameter '{}'",
                self.parameter
            )));
        }
        let axis = match (&self.values, self.start, self.stop, self.points) {
            (Some(v), None, None, None) => v.clone(),
            (None, Some(a), Some(b), Some(n)) if n >= 2 && b > a => (0..n)
                .map(|i| a + (b - a) * i as f64 / (n - 1) as f64)
                .collect(),
            _ => {
                return Err(CqedError::Config(
                    "sweep needs either `values` or `start`/`stop`/`points` (points >= 2)".into(),
                ))
            }
        };
        if axis.windows(2).any(|w| w[1] <= w[0]) {
            return Err(CqedError::Config(
                "sweep values must be strictly increasing".into(),
            ));
        }
        Ok(axis)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CompareSection {
    pub model_a: ModelKind,
    pub model_b: ModelKind,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub schema_version: u32,
    /// Experiment name used as the artifact file prefix.
    pub name: String,
    pub system: SystemSection,
    #[serde(default)]
    pub drive: Vec<DriveSection>,
    pub run: RunSection,
    #[serde(default)]
    pub homodyne: Option<HomodyneSection>,
    #[serde(default)]
    pub sweep: Option<SweepSection>,
    #[serde(default)]
    pub compare: Option<CompareSection>,
}

impl ExperimentConfig {
    pub fn from_str(text: &str) -> Result<Self, CqedError> {
        let cfg: ExperimentConfig =
            toml::from_str(text).map_err(|e| CqedError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_path(path: &Path) -> Result<Self, CqedError> {
        let text = std::fs::read_to_string(path)?;
        Self::from_str(&text)
    }

    pub fn validate(&self) -> Result<(), CqedError> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(CqedError::Config(format!(
                "schema_version {} unsupported (expected {SCHEMA_VERSION})",
                self.schema_version
            )));
        }
        if self.name.is_empty()
            || !self
                .name
                .chars()
                .all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '-')
        {
            return Err(CqedError::Config(
                "name must be non-empty and filesystem-safe ([A-Za-z0-9_-])".into(),
            ));
        }
        self.system_params()?; // field-level validation
        if !(self.run.duration_us > 0.0) {
            return Err(CqedError::Config("run.duration_us must be positive".into()));
        }
        if self.run.sample_points < 2 {
            return Err(CqedError::Config("run.sample_points must be >= 2".into()));
        }
        let needs_homodyne =
            matches!(self.run.model, ModelKind::QteFull | ModelKind::QteReduced);
        if needs_homodyne && self.homodyne.is_none() {
            return Err(CqedError::Config(
                "trajectory models require a [homodyne] section".into(),
            ));
        }
        if let Some(h) = &self.homodyne {
            // Phase is resolved later; validate the rest with a placeholder.
            HomodyneConfig {
                phi: h.phi_rad.unwrap_or(0.0),
                eta: h.eta,
                dt: h.dt_us,
                seed: self.run.seed,
                n_traj: h.n_traj,
            }
            .validate()
            .map_err(|e| CqedError::Config(e.to_string()))?;
        }
        if let Some(s) = &self.sweep {
            s.axis()?;
        }
        Ok(())
    }

    /// Convert the MHz/µs inputs to internal angular units and validate.
    pub fn system_params(&self) -> Result<SystemParams, CqedError> {
        let s = &self.system;
        let drives = self
            .drive
            .iter()
            .map(|d| DriveSpec {
                amplitude_peak: TWO_PI * d.amplitude_over_2pi_mhz,
                frequency: TWO_PI * d.frequency_over_2pi_mhz,
                phase: d.phase_rad,
                envelope: match &d.envelope {
                    EnvelopeSection::Constant => Envelope::Constant,
                    EnvelopeSection::TanhRamp { mu1_us, sigma_us } => Envelope::TanhRamp {
                        mu1: *mu1_us,
                        sigma: *sigma_us,
                    },
                },
            })
            .collect();
        let sys = SystemParams {
            omega_r: TWO_PI * s.omega_r_over_2pi_mhz,
            omega_a: TWO_PI * s.omega_a_over_2pi_mhz,
            g: TWO_PI * s.g_over_2pi_mhz,
            kappa: TWO_PI * s.kappa_over_2pi_mhz,
            gamma_1: TWO_PI * s.gamma_1_over_2pi_mhz,
            gamma_phi: TWO_PI * s.gamma_phi_over_2pi_mhz,
            drives,
            spectral_overrides: None,
        };
        sys.validate().map_err(|e| CqedError::Config(e.to_string()))?;
        Ok(sys)
    }

    /// Uniform output grid [0, duration] with `sample_points` samples.
    pub fn time_grid(&self) -> Vec<f64> {
        let n = self.run.sample_points;
        (0..n)
            .map(|i| self.run.duration_us * i as f64 / (n - 1) as f64)
            .collect()
    }
}

/// Derived dispersive quantities reported in manifests and by `validate`.
#[derive(Debug, Clone, Serialize)]
pub struct DerivedQuantities {
    pub lambda: f64,
    pub chi_over_2pi_mhz: f64,
    pub zeta_over_2pi_mhz: f64,
    pub n_crit: f64,
    pub n_kappa: f64,
}

impl DerivedQuantities {
    pub fn from_system(sys: &SystemParams) -> Self {
        let p = sys.dispersive();
        DerivedQuantities {
            lambda: p.lambda,
            chi_over_2pi_mhz: p.chi / TWO_PI,
            zeta_over_2pi_mhz: p.zeta / TWO_PI,
            n_crit: p.n_crit,
            n_kappa: p.n_kappa,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const GOOD: &str = r#"
schema_version = 1
name = "demo"

[system]
omega_r_over_2pi_mhz = 5000.0
omega_a_over_2pi_mhz = 7000.0
g_over_2pi_mhz = 50.0
kappa_over_2pi_mhz = 2.5
gamma_1_over_2pi_mhz = 0.1
gamma_phi_over_2pi_mhz = 0.3

[[drive]]
amplitude_over_2pi_mhz = 10.0
frequency_over_2pi_mhz = 5000.0

[run]
model = "dispersive"
duration_us = 2.0
sample_points = 201
"#;

    #[test]
    fn parses_and_converts_units() {
        let cfg = ExperimentConfig::from_str(GOOD).unwrap();
        let sys = cfg.system_params().unwrap();
        assert!((sys.g - TWO_PI * 50.0).abs() < 1e-12);
        let d = DerivedQuantities::from_system(&sys);
        assert!((d.lambda - 0.025).abs() < 1e-12);
        assert!((d.n_crit - 400.0).abs() < 1e-9);
        assert!((d.n_kappa - 3200.0).abs() < 1.0);
        assert!((d.chi_over_2pi_mhz - 1.2492).abs() < 1e-3);
        let grid = cfg.time_grid();
        assert_eq!(grid.len(), 201);
        assert!((grid[200] - 2.0).abs() < 1e-12);
    }

    #[test]
    fn unknown_keys_fail_closed() {
        let bad = GOOD.replace("[run]", "[run]\nbogus_knob = 3\n");
        // toml places the key under [run]; parsing must fail.
        assert!(ExperimentConfig::from_str(&bad.replace("bogus_knob = 3\n", ""))
            .is_ok());
        assert!(ExperimentConfig::from_str(&bad).is_err());
    }

    #[test]
    fn negative_rate_is_named_in_the_error() {
        let bad = GOOD.replace("kappa_over_2pi_mhz = 2.5", "kappa_over_2pi_mhz = -2.5");
        let err = ExperimentConfig::from_str(&bad).unwrap_err().to_string();
        assert!(err.contains("kappa"), "error was: {err}");
    }

    #[test]
    fn trajectory_model_requires_homodyne_section() {
        let bad = GOOD.replace("model = \"dispersive\"", "model = \"qte_reduced\"");
        assert!(ExperimentConfig::from_str(&bad).is_err());
        let good = format!("{bad}\n[homodyne]\neta = 1.0\ndt_us = 1e-4\nn_traj = 4\n");
        assert!(ExperimentConfig::from_str(&good).is_ok());
    }

    #[test]
    fn sweep_axis_forms() {
        let mut s = SweepSection {
            parameter: "drive_amplitude_over_2pi_mhz".into(),
            values: Some(vec![0.0, 5.0, 10.0]),
            start: None,
            stop: None,
            points: None,
        };
        assert_eq!(s.axis().unwrap(), vec![0.0, 5.0, 10.0]);
        s.values = None;
        s.start = Some(0.0);
        s.stop = Some(20.0);
        s.points = Some(21);
        let axis = s.axis().unwrap();
        assert_eq!(axis.len(), 21);
        assert!((axis[1] - 1.0).abs() < 1e-12);
        s.points = None;
        assert!(s.axis().is_err());
        s.parameter = "kappa".into();
        assert!(s.axis().is_err());
    }

    #[test]
    fn schema_version_is_pinned() {
        let bad = GOOD.replace("schema_version = 1", "schema_version = 2");
        assert!(ExperimentConfig::from_str(&bad).is_err());
    }
}
