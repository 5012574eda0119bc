//! Physical system parameters, drives, and effective bath rates.
//!
//! All frequencies and rates are stored internally as *angular* frequencies in
//! rad/µs. Configuration files accept ν/2π in MHz (the usual reporting
//! convention) and convert on load; 1 MHz of ν/2π is 2π rad/µs.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::dispersive::DispersiveParams;
use crate::error::CqedError;

pub const TWO_PI: f64 = std::f64::consts::TAU;

/// Drive envelope shapes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Envelope {
    /// ε(t) = ε_m for all t.
    Constant,
    /// ε(t) = 0.5 ε_m (tanh[(t − μ₁)/σ] + 1); times in µs.
    TanhRamp { mu1: f64, sigma: f64 },
    /// Piecewise-linear user table of (t in µs, fraction of ε_m).
    Table(Vec<(f64, f64)>),
}

/// A single coherent drive on the resonator input.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DriveSpec {
    /// Peak amplitude ε_m, rad/µs.
    pub amplitude_peak: f64,
    /// Drive frequency ω_m, rad/µs.
    pub frequency: f64,
    /// Carrier phase, rad.
    pub phase: f64,
    pub envelope: Envelope,
}

impl DriveSpec {
    /// Complex amplitude ε_m(t) e^{iφ} at time t (µs).
    pub fn amplitude(&self, t: f64) -> Complex64 {
        let env = match &self.envelope {
            Envelope::Constant => 1.0,
            Envelope::TanhRamp { mu1, sigma } => 0.5 * (((t - mu1) / sigma).tanh() + 1.0),
            Envelope::Table(points) => interp_table(points, t),
        };
        Complex64::from_polar(self.amplitude_peak * env, self.phase)
    }

    pub fn validate(&self) -> Result<(), CqedError> {
        if self.amplitude_peak < 0.0 {
            return Err(CqedError::InvalidInput(
                "drive amplitude_peak must be >= 0".into(),
            ));
        }
        if let Envelope::TanhRamp { sigma, .. } = self.envelope {
            if sigma <= 0.0 {
                return Err(CqedError::InvalidInput("tanh ramp sigma must be > 0".into()));
            }
        }
        Ok(())
    }
}

fn interp_table(points: &[(f64, f64)], t: f64) -> f64 {
    match points {
        [] => 0.0,
        [single] => single.1,
        _ => {
            if t <= points[0].0 {
                return points[0].1;
            }
            for w in points.windows(2) {
                if t <= w[1].0 {
                    let f = (t - w[0].0) / (w[1].0 - w[0].0);
                    return w[0].1 + f * (w[1].1 - w[0].1);
                }
            }
            points.last().unwrap().1
        }
    }
}

/// Explicit spectral-density values replacing the white-noise defaults for
/// the rates probed away from the carrier frequencies.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct SpectralOverrides {
    /// Photon-channel rate at the qubit frequency (defaults to λ²κ), rad/µs.
    pub gamma_kappa: Option<f64>,
    /// Qubit-channel rate at the resonator frequency (defaults to λ²γ₁), rad/µs.
    pub kappa_gamma: Option<f64>,
    /// Dephasing-channel rate at +Δ (defaults to 2λ²γ_φ), rad/µs.
    pub gamma_plus_delta: Option<f64>,
    /// Dephasing-channel rate at −Δ (defaults to 2λ²γ_φ), rad/µs.
    pub gamma_minus_delta: Option<f64>,
}

/// All physical frequencies and rates of the driven, damped qubit–resonator
/// system, in rad/µs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SystemParams {
    pub omega_r: f64,
    pub omega_a: f64,
    pub g: f64,
    pub kappa: f64,
    pub gamma_1: f64,
    pub gamma_phi: f64,
    pub drives: Vec<DriveSpec>,
    pub spectral_overrides: Option<SpectralOverrides>,
}

impl SystemParams {
    pub fn delta(&self) -> f64 {
        self.omega_a - self.omega_r
    }

    pub fn dispersive(&self) -> DispersiveParams {
        DispersiveParams::new(self.g, self.delta(), self.kappa)
    }

    /// The measurement drive. All shipped experiments use a single drive.
    pub fn measurement_drive(&self) -> Option<&DriveSpec> {
        self.drives.first()
    }

    pub fn validate(&self) -> Result<(), CqedError> {
        for (name, v) in [
            ("kappa", self.kappa),
            ("gamma_1", self.gamma_1),
            ("gamma_phi", self.gamma_phi),
        ] {
            if v < 0.0 {
                return Err(CqedError::InvalidInput(format!("{name} must be >= 0, got {v}")));
            }
        }
        if self.delta() == 0.0 {
            return Err(CqedError::InvalidInput(
                "qubit-resonator detuning must be nonzero".into(),
            ));
        }
        let lambda = self.dispersive().lambda;
        if lambda.abs() > 0.25 {
            return Err(CqedError::InvalidInput(format!(
                "|g/Delta| = {:.3} is outside the dispersive regime (|lambda| <= 0.25)",
                lambda.abs()
            )));
        }
        if let Some(ov) = &self.spectral_overrides {
            for (name, v) in [
                ("gamma_kappa", ov.gamma_kappa),
                ("kappa_gamma", ov.kappa_gamma),
                ("gamma_plus_delta", ov.gamma_plus_delta),
                ("gamma_minus_delta", ov.gamma_minus_delta),
            ] {
                if let Some(v) = v {
                    if v < 0.0 {
                        return Err(CqedError::InvalidInput(format!(
                            "spectral override {name} must be >= 0, got {v}"
                        )));
                    }
                }
            }
        }
        for d in &self.drives {
            d.validate()?;
        }
        Ok(())
    }

    /// Regime warnings (dispersive-parameter magnitude); photon-number
    /// warnings live with the pointer solver where n is known.
    pub fn regime_warnings(&self) -> Vec<String> {
        let mut w = Vec::new();
        let lam = self.dispersive().lambda.abs();
        if lam > 0.1 {
            w.push(format!(
                "lambda = g/Delta = {lam:.4} > 0.1: dispersive expansion is marginal"
            ));
        }
        w
    }

    /// Effective rate set of the dispersive-frame master equation.
    ///
    /// Without overrides the white-noise defaults apply:
    /// γ_κ = λ²κ, κ_γ = λ²γ₁, γ_±Δ = 2λ²γ_φ.
    pub fn rate_set(&self) -> Result<RateSet, CqedError> {
        self.validate()?;
        let l2 = self.dispersive().lambda.powi(2);
        let ov = self.spectral_overrides.unwrap_or_default();
        Ok(RateSet {
            kappa: self.kappa,
            gamma_kappa: ov.gamma_kappa.unwrap_or(l2 * self.kappa),
            gamma: self.gamma_1,
            kappa_gamma: ov.kappa_gamma.unwrap_or(l2 * self.gamma_1),
            gamma_phi: self.gamma_phi,
            gamma_plus_delta: ov.gamma_plus_delta.unwrap_or(2.0 * l2 * self.gamma_phi),
            gamma_minus_delta: ov.gamma_minus_delta.unwrap_or(2.0 * l2 * self.gamma_phi),
        })
    }
}

/// Reference parameter set used by the shipped experiments and most tests:
/// g/2π = 50 MHz, Δ/2π = 2 GHz (ω_r/2π = 5 GHz, ω_a/2π = 7 GHz),
/// κ/2π = 2.5 MHz, γ₁/2π = 0.1 MHz, with a resonant constant drive of the
/// given amplitude and the given pure-dephasing rate (both MHz of ν/2π).
pub fn reference_params(eps_mhz: f64, gamma_phi_mhz: f64) -> SystemParams {
    SystemParams {
        omega_r: TWO_PI * 5000.0,
        omega_a: TWO_PI * 7000.0,
        g: TWO_PI * 50.0,
        kappa: TWO_PI * 2.5,
        gamma_1: TWO_PI * 0.1,
        gamma_phi: TWO_PI * gamma_phi_mhz,
        drives: vec![DriveSpec {
            amplitude_peak: TWO_PI * eps_mhz,
            frequency: TWO_PI * 5000.0,
            phase: 0.0,
            envelope: Envelope::Constant,
        }],
        spectral_overrides: None,
    }
}

/// The seven effective rates entering the dispersive-frame master equation,
/// rad/µs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RateSet {
    pub kappa: f64,
    pub gamma_kappa: f64,
    pub gamma: f64,
    pub kappa_gamma: f64,
    pub gamma_phi: f64,
    pub gamma_plus_delta: f64,
    pub gamma_minus_delta: f64,
}
