//! Dense operator algebra on the truncated qubit ⊗ Fock Hilbert space.
//!
//! Basis ordering is fixed for the whole crate (and for golden files):
//! qubit index outer (g = 0, e = 1), Fock index inner, so a basis ket
//! |s, n⟩ lives at combined index `s·N + n` with `N` the Fock truncation.
//!
//! Conventions: σ_z = |e⟩⟨e| − |g⟩⟨g| (so ⟨σ_z⟩ = −1 on the ground state),
//! σ_− = |g⟩⟨e|, a|n⟩ = √n |n−1⟩, I_± = a†σ_− ± aσ_+, N_q = a†a + Π_e.

use nalgebra::{DMatrix, Matrix2};
use num_complex::Complex64;
use std::str::FromStr;

use crate::error::CqedError;

pub type C64 = Complex64;
pub type QubitState = Matrix2<Complex64>;

pub const ZERO: C64 = C64::new(0.0, 0.0);
pub const ONE: C64 = C64::new(1.0, 0.0);
pub const I: C64 = C64::new(0.0, 1.0);

/// Truncated Hilbert-space dimensions: two qubit levels times `fock_levels`
/// Fock states.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct HilbertDims {
    fock_levels: usize,
}

impl HilbertDims {
    pub fn new(fock_levels: usize) -> Result<Self, CqedError> {
        if fock_levels < 2 {
            return Err(CqedError::InvalidInput(format!(
                "fock_levels must be >= 2, got {fock_levels}"
            )));
        }
        Ok(Self { fock_levels })
    }

    pub fn fock_levels(&self) -> usize {
        self.fock_levels
    }

    pub fn total_dim(&self) -> usize {
        2 * self.fock_levels
    }

    /// Combined index of |s, n⟩ with s ∈ {0 = g, 1 = e}.
    pub fn index(&self, s: usize, n: usize) -> usize {
        debug_assert!(s < 2 && n < self.fock_levels);
        s * self.fock_levels + n
    }

    /// Inverse of [`Self::index`]: combined index → (s, n).
    pub fn split(&self, i: usize) -> (usize, usize) {
        (i / self.fock_levels, i % self.fock_levels)
    }
}

/// Complex matrix on the truncated space. Units are context dependent:
/// rad/µs for Hamiltonians, dimensionless for states and collapse operators.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseOperator {
    pub dims: HilbertDims,
    pub m: DMatrix<Complex64>,
}

/// Elementary operators constructible on the truncated space.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ElementaryOp {
    A,
    ADag,
    NPhoton,
    SigmaMinus,
    SigmaPlus,
    SigmaZ,
    SigmaX,
    SigmaY,
    IPlus,
    IMinus,
    NQ,
    PiE,
    PiG,
    Identity,
}

impl FromStr for ElementaryOp {
    type Err = CqedError;

    fn from_str(s: &str) -> Result<Self, CqedError> {
        Ok(match s {
            "a" => Self::A,
            "a_dag" => Self::ADag,
            "n_photon" => Self::NPhoton,
            "sigma_minus" => Self::SigmaMinus,
            "sigma_plus" => Self::SigmaPlus,
            "sigma_z" => Self::SigmaZ,
            "sigma_x" => Self::SigmaX,
            "sigma_y" => Self::SigmaY,
            "I_plus" => Self::IPlus,
            "I_minus" => Self::IMinus,
            "N_q" => Self::NQ,
            "Pi_e" => Self::PiE,
            "Pi_g" => Self::PiG,
            "identity" => Self::Identity,
            other => {
                return Err(CqedError::InvalidInput(format!(
                    "unknown elementary operator name: {other:?}"
                )))
            }
        })
    }
}

/// Build an elementary operator as a qubit ⊗ Fock tensor product.
pub fn build_elementary(dims: HilbertDims, which: ElementaryOp) -> DenseOperator {
    let nf = dims.fock_levels();
    let d = dims.total_dim();
    let mut m = DMatrix::<Complex64>::zeros(d, d);

    let mut set = |s_out: usize, n_out: usize, s_in: usize, n_in: usize, v: C64| {
        m[(dims.index(s_out, n_out), dims.index(s_in, n_in))] += v;
    };

    match which {
        ElementaryOp::A => {
            for s in 0..2 {
                for n in 1..nf {
                    set(s, n - 1, s, n, C64::new((n as f64).sqrt(), 0.0));
                }
            }
        }
        ElementaryOp::ADag => {
            for s in 0..2 {
                for n in 0..nf - 1 {
                    set(s, n + 1, s, n, C64::new(((n + 1) as f64).sqrt(), 0.0));
                }
            }
        }
        ElementaryOp::NPhoton => {
            for s in 0..2 {
                for n in 0..nf {
                    set(s, n, s, n, C64::new(n as f64, 0.0));
                }
            }
        }
        ElementaryOp::SigmaMinus => {
            for n in 0..nf {
                set(0, n, 1, n, ONE);
            }
        }
        ElementaryOp::SigmaPlus => {
            for n in 0..nf {
                set(1, n, 0, n, ONE);
            }
        }
        ElementaryOp::SigmaZ => {
            for n in 0..nf {
                set(0, n, 0, n, -ONE);
                set(1, n, 1, n, ONE);
            }
        }
        ElementaryOp::SigmaX => {
            for n in 0..nf {
                set(0, n, 1, n, ONE);
                set(1, n, 0, n, ONE);
            }
        }
        ElementaryOp::SigmaY => {
            for n in 0..nf {
                // σ_y = i|g⟩⟨e| − i|e⟩⟨g| (so that σ_x σ_y = iσ_z with g = index 0).
                set(0, n, 1, n, I);
                set(1, n, 0, n, -I);
            }
        }
        ElementaryOp::IPlus | ElementaryOp::IMinus => {
            // I_± = a†σ_− ± aσ_+
            let sign = if which == ElementaryOp::IPlus { ONE } else { -ONE };
            for n in 0..nf - 1 {
                // a†σ_− : |g, n+1⟩⟨e, n|
                set(0, n + 1, 1, n, C64::new(((n + 1) as f64).sqrt(), 0.0));
                // aσ_+  : |e, n⟩⟨g, n+1|
                set(1, n, 0, n + 1, sign * C64::new(((n + 1) as f64).sqrt(), 0.0));
            }
        }
        ElementaryOp::NQ => {
            for n in 0..nf {
                set(0, n, 0, n, C64::new(n as f64, 0.0));
                set(1, n, 1, n, C64::new(n as f64 + 1.0, 0.0));
            }
        }
        ElementaryOp::PiE => {
            for n in 0..nf {
                set(1, n, 1, n, ONE);
            }
        }
        ElementaryOp::PiG => {
            for n in 0..nf {
                set(0, n, 0, n, ONE);
            }
        }
        ElementaryOp::Identity => {
            for i in 0..d {
                m[(i, i)] = ONE;
            }
        }
    }

    DenseOperator { dims, m }
}

/// Parse-and-build variant of [`build_elementary`] for name-driven callers.
pub fn build_elementary_named(dims: HilbertDims, which: &str) -> Result<DenseOperator, CqedError> {
    Ok(build_elementary(dims, which.parse()?))
}

impl DenseOperator {
    pub fn zeros(dims: HilbertDims) -> Self {
        let d = dims.total_dim();
        Self { dims, m: DMatrix::zeros(d, d) }
    }

    pub fn identity(dims: HilbertDims) -> Self {
        build_elementary(dims, ElementaryOp::Identity)
    }

    pub fn dagger(&self) -> Self {
        Self { dims: self.dims, m: self.m.adjoint() }
    }

    pub fn trace(&self) -> C64 {
        self.m.diagonal().sum()
    }

    pub fn mul(&self, other: &Self) -> Self {
        Self { dims: self.dims, m: &self.m * &other.m }
    }

    pub fn add_scaled(&mut self, s: C64, other: &Self) {
        self.m += other.m.scale(1.0) * s;
    }

    pub fn expectation(&self, rho: &Self) -> C64 {
        // Tr[O ρ]
        let mut acc = ZERO;
        let d = self.dims.total_dim();
        for i in 0..d {
            for k in 0..d {
                acc += self.m[(i, k)] * rho.m[(k, i)];
            }
        }
        acc
    }

    /// Spectral (operator) norm via the largest eigenvalue of A†A.
    pub fn spectral_norm(&self) -> f64 {
        let ata = self.m.adjoint() * &self.m;
        let eig = ata.symmetric_eigen();
        eig.eigenvalues.iter().cloned().fold(0.0_f64, f64::max).max(0.0).sqrt()
    }

    /// Frobenius norm.
    pub fn frobenius_norm(&self) -> f64 {
        self.m.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
    }

    /// Eigenvalues assuming the operator is Hermitian, ascending order.
    pub fn hermitian_eigenvalues(&self) -> Vec<f64> {
        let eig = self.m.clone().symmetric_eigen();
        let mut vals: Vec<f64> = eig.eigenvalues.iter().cloned().collect();
        vals.sort_by(|a, b| a.partial_cmp(b).unwrap());
        vals
    }

    /// ρ ← (ρ + ρ†)/2
    pub fn hermitize(&mut self) {
        let adj = self.m.adjoint();
        self.m += adj;
        self.m.scale_mut(0.5);
    }

    /// Density-matrix sanity checks: Hermitian to 1e-10, unit trace to 1e-9,
    /// eigenvalues ≥ −1e-8.
    pub fn check_density_matrix(&self) -> Result<(), CqedError> {
        let herm_dev = (&self.m - self.m.adjoint()).norm();
        if herm_dev > 1e-10 * (1.0 + self.frobenius_norm()) {
            return Err(CqedError::InvalidState(format!(
                "density matrix not Hermitian: deviation {herm_dev:.3e}"
            )));
        }
        let tr = self.trace();
        if (tr.re - 1.0).abs() > 1e-9 || tr.im.abs() > 1e-9 {
            return Err(CqedError::InvalidState(format!(
                "density matrix trace {tr} != 1"
            )));
        }
        let min_eig = self
            .hermitian_eigenvalues()
            .first()
            .cloned()
            .unwrap_or(0.0);
        if min_eig < -1e-8 {
            return Err(CqedError::InvalidState(format!(
                "density matrix has eigenvalue {min_eig:.3e} < -1e-8"
            )));
        }
        Ok(())
    }
}

/// Pure product state |s⟩ ⊗ |ψ_fock⟩ as a density matrix.
pub fn product_state(dims: HilbertDims, qubit: &QubitState, fock_amps: &[C64]) -> DenseOperator {
    let nf = dims.fock_levels();
    assert!(fock_amps.len() <= nf);
    let d = dims.total_dim();
    let mut m = DMatrix::<Complex64>::zeros(d, d);
    for s1 in 0..2 {
        for s2 in 0..2 {
            for (n1, &a1) in fock_amps.iter().enumerate() {
                for (n2, &a2) in fock_amps.iter().enumerate() {
                    m[(dims.index(s1, n1), dims.index(s2, n2))] =
                        qubit[(s1, s2)] * a1 * a2.conj();
                }
            }
        }
    }
    DenseOperator { dims, m }
}

/// Normalized coherent-state amplitudes ⟨n|α⟩ on the truncation.
pub fn coherent_amplitudes(dims: HilbertDims, alpha: C64) -> Vec<C64> {
    let nf = dims.fock_levels();
    let mut amps = vec![ZERO; nf];
    // ⟨n|α⟩ = e^{−|α|²/2} αⁿ/√(n!), built by recurrence to avoid overflow.
    let mut cur = C64::new((-alpha.norm_sqr() / 2.0).exp(), 0.0);
    amps[0] = cur;
    for n in 1..nf {
        cur *= alpha / C64::new((n as f64).sqrt(), 0.0);
        amps[n] = cur;
    }
    amps
}

/// Lindblad dissipator D[L]ρ = (2LρL† − L†Lρ − ρL†L)/2.
pub fn dissipator(l: &DenseOperator, rho: &DenseOperator) -> Result<DenseOperator, CqedError> {
    if l.dims != rho.dims {
        return Err(CqedError::DimensionMismatch);
    }
    let ldag = l.m.adjoint();
    let ldl = &ldag * &l.m;
    let mut out = &l.m * &rho.m * &ldag;
    out -= (&ldl * &rho.m + &rho.m * &ldl).scale(0.5);
    Ok(DenseOperator { dims: rho.dims, m: out })
}

/// Trace over the resonator: Tr_r(ρ) → 2×2 qubit density matrix.
pub fn partial_trace_resonator(rho: &DenseOperator) -> QubitState {
    let dims = rho.dims;
    let nf = dims.fock_levels();
    let mut q = QubitState::zeros();
    for s1 in 0..2 {
        for s2 in 0..2 {
            let mut acc = ZERO;
            for n in 0..nf {
                acc += rho.m[(dims.index(s1, n), dims.index(s2, n))];
            }
            q[(s1, s2)] = acc;
        }
    }
    q
}

/// Embed a 2×2 qubit state as qubit ⊗ |0⟩⟨0|.
pub fn embed_qubit_state(dims: HilbertDims, q: &QubitState) -> DenseOperator {
    product_state(dims, q, &[ONE])
}

/// Displacement operator D(α) = exp(αa† − α*a).
///
/// Rejected when |α|² > fock_levels/4, where the truncated matrix exponential
/// stops being a faithful displacement.
pub fn displacement(dims: HilbertDims, alpha: C64) -> Result<DenseOperator, CqedError> {
    if alpha.norm_sqr() > dims.fock_levels() as f64 / 4.0 {
        return Err(CqedError::TruncationOverflow(format!(
            "displacement |alpha|^2 = {:.3} exceeds fock_levels/4 = {:.3}",
            alpha.norm_sqr(),
            dims.fock_levels() as f64 / 4.0
        )));
    }
    let a = build_elementary(dims, ElementaryOp::A);
    let adag = build_elementary(dims, ElementaryOp::ADag);
    let gen = adag.m.scale(1.0) * alpha - a.m.scale(1.0) * alpha.conj();
    Ok(DenseOperator { dims, m: expm(&gen) })
}

/// Matrix exponential by scaling and squaring with a Taylor kernel.
pub fn expm(m: &DMatrix<Complex64>) -> DMatrix<Complex64> {
    let norm = m.iter().map(|z| z.norm()).fold(0.0_f64, f64::max) * m.nrows() as f64;
    let s = if norm > 0.5 {
        (norm / 0.5).log2().ceil() as u32
    } else {
        0
    };
    let scaled = m.scale(1.0 / (1u64 << s) as f64);
    let d = m.nrows();
    let mut result = DMatrix::<Complex64>::identity(d, d);
    let mut term = DMatrix::<Complex64>::identity(d, d);
    for k in 1..=18u64 {
        term = (&term * &scaled).scale(1.0 / k as f64);
        result += &term;
    }
    for _ in 0..s {
        result = &result * &result;
    }
    result
}

/// Bloch vector (⟨σ_x⟩, ⟨σ_y⟩, ⟨σ_z⟩) of a qubit density matrix.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct BlochVector {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl BlochVector {
    pub fn from_density(q: &QubitState) -> Self {
        // With g = index 0, e = index 1 and σ_z = diag(−1, 1):
        // ⟨σ_x⟩ = 2 Re ρ_eg, ⟨σ_y⟩ = 2 Im ρ_eg, ⟨σ_z⟩ = ρ_ee − ρ_gg.
        let rho_eg = q[(1, 0)];
        Self {
            x: 2.0 * rho_eg.re,
            y: 2.0 * rho_eg.im,
            z: (q[(1, 1)] - q[(0, 0)]).re,
        }
    }

    pub fn norm(&self) -> f64 {
        (self.x * self.x + self.y * self.y + self.z * self.z).sqrt()
    }

    pub fn distance(&self, other: &BlochVector) -> f64 {
        let dx = self.x - other.x;
        let dy = self.y - other.y;
        let dz = self.z - other.z;
        (dx * dx + dy * dy + dz * dz).sqrt()
    }
}

/// Trace distance between two qubit states as the geometric Bloch-vector
/// distance √Σ(⟨σ_i⟩₁ − ⟨σ_i⟩₂)², which ranges from 0 to 2.
pub fn trace_distance_bloch(rho1: &QubitState, rho2: &QubitState) -> f64 {
    BlochVector::from_density(rho1).distance(&BlochVector::from_density(rho2))
}
