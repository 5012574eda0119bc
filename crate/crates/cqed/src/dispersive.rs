//! Exact diagonalizing transformation of the qubit–resonator Hamiltonian and
//! the dressed operator expansions derived from it.
//!
//! The transformation D = exp(−Λ(N_q) I_−) with
//! Λ(N_q) = −arctan(2λ√N_q)/(2√N_q) rotates each two-dimensional
//! total-excitation eigenspace span{|e,m−1⟩, |g,m⟩} by the mixing angle
//! φ_m = arctan(2λ√m)/2, turning the qubit–resonator coupling into the
//! photon-number-dependent diagonal shift
//! −(Δ/2)(1 − √(1+4λ²N_q))σ_z. All closed forms here are exact in λ;
//! truncated series carry their order in the function documentation.

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::Serialize;
use std::str::FromStr;

use crate::error::CqedError;
use crate::operators::{build_elementary, DenseOperator, ElementaryOp, HilbertDims, C64, ONE};
use crate::params::SystemParams;

/// Derived dispersive-regime parameters (angular units, rad/µs).
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DispersiveParams {
    /// λ = g/Δ.
    pub lambda: f64,
    /// Lamb/Stark shift coefficient χ = g²(1−λ²)/Δ.
    pub chi: f64,
    /// Cavity-nonlinearity (squeezing) coefficient ζ = −g⁴/Δ³.
    pub zeta: f64,
    /// Critical photon number n_crit = Δ²/4g² = 1/(4λ²).
    pub n_crit: f64,
    /// Photon scale n_κ = κ/|ζ| beyond which the coherent-pointer picture
    /// breaks down.
    pub n_kappa: f64,
    /// Qubit–resonator detuning Δ = ω_a − ω_r.
    pub delta: f64,
}

impl DispersiveParams {
    pub fn new(g: f64, delta: f64, kappa: f64) -> Self {
        let lambda = g / delta;
        let l2 = lambda * lambda;
        let zeta = -g.powi(4) / delta.powi(3);
        Self {
            lambda,
            chi: g * g * (1.0 - l2) / delta,
            zeta,
            n_crit: 1.0 / (4.0 * l2),
            n_kappa: kappa / zeta.abs(),
            delta,
        }
    }

    /// Convenience constructor from (λ, Δ, κ) with g = λΔ.
    pub fn from_lambda(lambda: f64, delta: f64, kappa: f64) -> Self {
        Self::new(lambda * delta, delta, kappa)
    }
}

/// Λ(n) = −arctan(2λ√n)/(2√n), continuous at n = 0 with limit −λ.
pub fn lambda_of_nq(n: f64, lambda: f64) -> f64 {
    assert!(n >= 0.0, "lambda_of_nq requires n >= 0");
    if n == 0.0 {
        -lambda
    } else {
        let r = n.sqrt();
        -(2.0 * lambda * r).atan() / (2.0 * r)
    }
}

/// Rotation angle of the m-th total-excitation doublet,
/// φ_m = arctan(2λ√m)/2 = −Λ(m)√m.
pub fn mixing_angle(lambda: f64, m: usize) -> f64 {
    (2.0 * lambda * (m as f64).sqrt()).atan() / 2.0
}

/// The diagonalizing unitary D = exp(−Λ(N_q) I_−), built analytically block
/// by block: each doublet (|e,m−1⟩, |g,m⟩) is rotated by φ_m, while |g,0⟩
/// and the truncation-edge orphan |e,N−1⟩ are left untouched (the truncated
/// generator annihilates them, so this equals the matrix exponential of the
/// truncated generator exactly).
pub fn dispersive_unitary(dims: HilbertDims, p: &DispersiveParams) -> DenseOperator {
    let nf = dims.fock_levels();
    let mut out = DenseOperator::identity(dims);
    for m in 1..nf {
        let phi = mixing_angle(p.lambda, m);
        let (c, s) = (C64::new(phi.cos(), 0.0), C64::new(phi.sin(), 0.0));
        let ie = dims.index(1, m - 1);
        let ig = dims.index(0, m);
        out.m[(ie, ie)] = c;
        out.m[(ig, ie)] = s;
        out.m[(ie, ig)] = -s;
        out.m[(ig, ig)] = c;
    }
    out
}

/// Energy of the dressed level that connects adiabatically to |s, n⟩,
/// i.e. the diagonal of [`exact_dispersive_hamiltonian`]:
/// E(g,n) = nω_r − ω_a/2 + (Δ/2)(1 − √(1+4λ²n)),
/// E(e,n) = nω_r + ω_a/2 − (Δ/2)(1 − √(1+4λ²(n+1))).
pub fn dressed_energy(sys: &SystemParams, s: usize, n: usize) -> f64 {
    let delta = sys.delta();
    let lambda = sys.g / delta;
    let omega_r = sys.omega_r;
    let nq = (n + s) as f64;
    let root = (1.0 + 4.0 * lambda * lambda * nq).sqrt();
    let shift = 0.5 * delta * (1.0 - root);
    match s {
        0 => n as f64 * omega_r - 0.5 * sys.omega_a + shift,
        1 => n as f64 * omega_r + 0.5 * sys.omega_a - shift,
        _ => panic!("qubit index must be 0 or 1"),
    }
}

/// The exactly diagonalized system Hamiltonian
/// H = ω_r a†a + ω_a σ_z/2 − (Δ/2)(1 − √(1+4λ²N_q))σ_z (rad/µs).
pub fn exact_dispersive_hamiltonian(dims: HilbertDims, sys: &SystemParams) -> DenseOperator {
    let mut out = DenseOperator::zeros(dims);
    for s in 0..2 {
        for n in 0..dims.fock_levels() {
            let i = dims.index(s, n);
            out.m[(i, i)] = C64::new(dressed_energy(sys, s, n), 0.0);
        }
    }
    out
}

/// D†OD for a given unitary D; dimensions must match.
pub fn transform_operator(d: &DenseOperator, o: &DenseOperator) -> Result<DenseOperator, CqedError> {
    if d.dims != o.dims {
        return Err(CqedError::DimensionMismatch);
    }
    Ok(DenseOperator {
        dims: o.dims,
        m: d.m.adjoint() * &o.m * &d.m,
    })
}

/// Diagonal matrix of f(N_q) for scalar f.
fn diag_of_nq(dims: HilbertDims, f: impl Fn(f64) -> f64) -> DMatrix<Complex64> {
    let dd = dims.total_dim();
    DMatrix::from_fn(dd, dd, |i, j| {
        if i == j {
            let (s, n) = dims.split(i);
            C64::new(f((n + s) as f64), 0.0)
        } else {
            C64::new(0.0, 0.0)
        }
    })
}

/// σ_z under D, exact closed form:
/// σ_z/√(1+4λ²N_q) − 2λ I_+/√(1+4λ²N_q).
pub fn sigma_z_dressed(dims: HilbertDims, lambda: f64) -> DenseOperator {
    let f = diag_of_nq(dims, |nq| 1.0 / (1.0 + 4.0 * lambda * lambda * nq).sqrt());
    let sz = build_elementary(dims, ElementaryOp::SigmaZ);
    let ip = build_elementary(dims, ElementaryOp::IPlus);
    DenseOperator {
        dims,
        m: &sz.m * &f - (&f * &ip.m).scale(2.0 * lambda),
    }
}

/// a†a under D, exact closed form:
/// a†a + σ_z/2 + (λI_+ − σ_z/2)/√(1+4λ²N_q).
pub fn n_dressed(dims: HilbertDims, lambda: f64) -> DenseOperator {
    let f = diag_of_nq(dims, |nq| 1.0 / (1.0 + 4.0 * lambda * lambda * nq).sqrt());
    let nph = build_elementary(dims, ElementaryOp::NPhoton);
    let sz = build_elementary(dims, ElementaryOp::SigmaZ);
    let ip = build_elementary(dims, ElementaryOp::IPlus);
    let inner = ip.m.scale(lambda) - sz.m.scale(0.5);
    DenseOperator {
        dims,
        m: &nph.m + sz.m.scale(0.5) + inner * f,
    }
}

/// Second-order polynomial truncation of [`sigma_z_dressed`]
/// (1/√(1+4λ²N_q) → 1 − 2λ²N_q); error O(λ⁴).
pub fn sigma_z_dressed_quadratic(dims: HilbertDims, lambda: f64) -> DenseOperator {
    let f = diag_of_nq(dims, |nq| 1.0 - 2.0 * lambda * lambda * nq);
    let sz = build_elementary(dims, ElementaryOp::SigmaZ);
    let ip = build_elementary(dims, ElementaryOp::IPlus);
    DenseOperator {
        dims,
        m: &sz.m * &f - (&f * &ip.m).scale(2.0 * lambda),
    }
}

/// Second-order polynomial truncation of [`n_dressed`]; error O(λ⁴).
pub fn n_dressed_quadratic(dims: HilbertDims, lambda: f64) -> DenseOperator {
    let f = diag_of_nq(dims, |nq| 1.0 - 2.0 * lambda * lambda * nq);
    let nph = build_elementary(dims, ElementaryOp::NPhoton);
    let sz = build_elementary(dims, ElementaryOp::SigmaZ);
    let ip = build_elementary(dims, ElementaryOp::IPlus);
    let inner = ip.m.scale(lambda) - sz.m.scale(0.5);
    DenseOperator {
        dims,
        m: &nph.m + sz.m.scale(0.5) + inner * f,
    }
}

/// a under D, series to O(λ³) (error O(λ⁴)):
/// a(1 + λ²σ_z/2) + λ[1 − 3λ²(a†a + ½)]σ_− + λ³a²σ_+.
pub fn a_dressed_series(dims: HilbertDims, lambda: f64) -> DenseOperator {
    let a = build_elementary(dims, ElementaryOp::A);
    let sz = build_elementary(dims, ElementaryOp::SigmaZ);
    let sm = build_elementary(dims, ElementaryOp::SigmaMinus);
    let sp = build_elementary(dims, ElementaryOp::SigmaPlus);
    let nph = build_elementary(dims, ElementaryOp::NPhoton);
    let id = DenseOperator::identity(dims);
    let l2 = lambda * lambda;
    let qubit_weight = &id.m + sz.m.scale(0.5 * l2);
    let photon_weight = &id.m - (nph.m + id.m.scale(0.5)).scale(3.0 * l2);
    DenseOperator {
        dims,
        m: &a.m * qubit_weight
            + (photon_weight * &sm.m).scale(lambda)
            + (&a.m * &a.m * &sp.m).scale(lambda.powi(3)),
    }
}

/// σ_− under D, series to O(λ²) (error O(λ³)):
/// σ_−[1 − λ²(a†a + ½)] + λaσ_z − λ²a²σ_+.
pub fn sigma_minus_dressed_series(dims: HilbertDims, lambda: f64) -> DenseOperator {
    let a = build_elementary(dims, ElementaryOp::A);
    let sz = build_elementary(dims, ElementaryOp::SigmaZ);
    let sm = build_elementary(dims, ElementaryOp::SigmaMinus);
    let sp = build_elementary(dims, ElementaryOp::SigmaPlus);
    let nph = build_elementary(dims, ElementaryOp::NPhoton);
    let id = DenseOperator::identity(dims);
    let l2 = lambda * lambda;
    let photon_weight = &id.m - (nph.m + id.m.scale(0.5)).scale(l2);
    DenseOperator {
        dims,
        m: &sm.m * photon_weight + (&a.m * &sz.m).scale(lambda)
            - (&a.m * &a.m * &sp.m).scale(l2),
    }
}

/// System Hamiltonian expanded to third order in λ (rad/µs):
/// (ω_r + ζ)a†a + [ω_a + 2χ(a†a + ½)]σ_z/2 + ζ(a†a)²σ_z.
pub fn hamiltonian_third_order(dims: HilbertDims, sys: &SystemParams) -> DenseOperator {
    let p = sys.dispersive();
    let nph = build_elementary(dims, ElementaryOp::NPhoton);
    let sz = build_elementary(dims, ElementaryOp::SigmaZ);
    let id = DenseOperator::identity(dims);
    let qubit_freq = id.m.scale(sys.omega_a) + (&nph.m + id.m.scale(0.5)).scale(2.0 * p.chi);
    DenseOperator {
        dims,
        m: nph.m.scale(sys.omega_r + p.zeta)
            + (qubit_freq * &sz.m).scale(0.5)
            + (&nph.m * &nph.m * &sz.m).scale(p.zeta),
    }
}

/// Drive Hamiltonian under D at complex co-rotating amplitude ε (the carrier
/// e^{−iωt} stripped; callers working in the lab frame reinsert it):
/// εa†(1 + λ²σ_z/2) + ελ[1 − 3λ²(a†a + ½)]σ_+ + h.c.
pub fn drive_hamiltonian_dressed(dims: HilbertDims, lambda: f64, eps: C64) -> DenseOperator {
    let a = build_elementary(dims, ElementaryOp::A);
    let sz = build_elementary(dims, ElementaryOp::SigmaZ);
    let sp = build_elementary(dims, ElementaryOp::SigmaPlus);
    let nph = build_elementary(dims, ElementaryOp::NPhoton);
    let id = DenseOperator::identity(dims);
    let l2 = lambda * lambda;
    let cavity = (a.m.adjoint() * (&id.m + sz.m.scale(0.5 * l2))) * eps;
    let qubit = ((&id.m - (&nph.m + id.m.scale(0.5)).scale(3.0 * l2)) * &sp.m) * (eps * lambda);
    let half = cavity + qubit;
    DenseOperator {
        dims,
        m: &half + half.adjoint(),
    }
}

/// Selector for the dressed-operator expansions.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SeriesOp {
    /// Exact closed form of σ_z under D.
    SigmaZD,
    /// Exact closed form of a†a under D.
    ND,
    /// a under D to O(λ³).
    AD,
    /// σ_− under D to O(λ²).
    SigmaMinusD,
    /// System Hamiltonian to third order in λ.
    HsD3,
    /// Drive Hamiltonian under D (co-rotating amplitudes at time t).
    HdD,
}

impl FromStr for SeriesOp {
    type Err = CqedError;

    fn from_str(s: &str) -> Result<Self, CqedError> {
        Ok(match s {
            "sigma_z_D" => Self::SigmaZD,
            "n_D" => Self::ND,
            "a_D" => Self::AD,
            "sigma_minus_D" => Self::SigmaMinusD,
            "H_s_D3" => Self::HsD3,
            "H_d_D" => Self::HdD,
            other => {
                return Err(CqedError::InvalidInput(format!(
                    "unknown series operator selector: {other:?}"
                )))
            }
        })
    }
}

/// Build the selected dressed operator. `t` (µs) only affects `HdD`, whose
/// drive amplitudes are evaluated with their envelopes at time t.
pub fn series_operator(
    dims: HilbertDims,
    which: SeriesOp,
    sys: &SystemParams,
    t: f64,
) -> DenseOperator {
    let lambda = sys.dispersive().lambda;
    match which {
        SeriesOp::SigmaZD => sigma_z_dressed(dims, lambda),
        SeriesOp::ND => n_dressed(dims, lambda),
        SeriesOp::AD => a_dressed_series(dims, lambda),
        SeriesOp::SigmaMinusD => sigma_minus_dressed_series(dims, lambda),
        SeriesOp::HsD3 => hamiltonian_third_order(dims, sys),
        SeriesOp::HdD => {
            let mut out = DenseOperator::zeros(dims);
            for d in &sys.drives {
                out.add_scaled(ONE, &drive_hamiltonian_dressed(dims, lambda, d.amplitude(t)));
            }
            out
        }
    }
}

/// Lamb and ac-Stark shifts of the qubit transition frequency at photon
/// number n, exact and polynomial forms (rad/µs).
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LambStarkShifts {
    /// δ_L = −(Δ/2)(1 − √(1+4λ²)), exact.
    pub delta_l: f64,
    /// δ_S(n) = (Δ/2)(√(1+4λ²(n+1)) + √(1+4λ²n) − 1 − √(1+4λ²)), exact.
    pub delta_s: f64,
    /// δ_L ≈ χ; error O(λ⁶)Δ.
    pub delta_l_series: f64,
    /// δ_S(n) ≈ 2χn + 2ζn² (the transition-frequency shift consistent with
    /// the third-order Hamiltonian); error O(λ⁶ n³)Δ.
    pub delta_s_series: f64,
}

pub fn lamb_stark_shifts(p: &DispersiveParams, n: usize) -> LambStarkShifts {
    let l2 = p.lambda * p.lambda;
    let nf = n as f64;
    let root = |m: f64| (1.0 + 4.0 * l2 * m).sqrt();
    LambStarkShifts {
        delta_l: -0.5 * p.delta * (1.0 - root(1.0)),
        // Grouped so that both differences vanish exactly at n = 0.
        delta_s: 0.5 * p.delta * ((root(nf + 1.0) - root(1.0)) + (root(nf) - 1.0)),
        delta_l_series: p.chi,
        delta_s_series: 2.0 * p.chi * nf + 2.0 * p.zeta * nf * nf,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::operators::{expm, ZERO};
    use crate::params::{DriveSpec, Envelope, TWO_PI};
    use approx::assert_relative_eq;

    fn dims(n: usize) -> HilbertDims {
        HilbertDims::new(n).unwrap()
    }

    fn test_system(g_mhz: f64, eps_mhz: f64) -> SystemParams {
        SystemParams {
            omega_r: TWO_PI * 5000.0,
            omega_a: TWO_PI * 7000.0,
            g: TWO_PI * g_mhz,
            kappa: TWO_PI * 2.5,
            gamma_1: TWO_PI * 0.1,
            gamma_phi: TWO_PI * 0.3,
            drives: vec![DriveSpec {
                amplitude_peak: TWO_PI * eps_mhz,
                frequency: TWO_PI * 5000.0,
                phase: 0.0,
                envelope: Envelope::Constant,
            }],
            spectral_overrides: None,
        }
    }

    /// Bare Jaynes–Cummings Hamiltonian on the truncation.
    fn jc_hamiltonian(d: HilbertDims, sys: &SystemParams) -> DenseOperator {
        let nph = build_elementary(d, ElementaryOp::NPhoton);
        let sz = build_elementary(d, ElementaryOp::SigmaZ);
        let ip = build_elementary(d, ElementaryOp::IPlus);
        DenseOperator {
            dims: d,
            m: nph.m.scale(sys.omega_r) + sz.m.scale(0.5 * sys.omega_a) + ip.m.scale(sys.g),
        }
    }

    /// Spectral norm of the submatrix with both Fock indices < N − guard.
    fn interior_spectral_norm(m: &DMatrix<Complex64>, d: HilbertDims, guard: usize) -> f64 {
        let keep = d.fock_levels() - guard;
        let idx: Vec<usize> = (0..2)
            .flat_map(|s| (0..keep).map(move |n| d.index(s, n)))
            .collect();
        let sub = DMatrix::from_fn(idx.len(), idx.len(), |i, j| m[(idx[i], idx[j])]);
        let ata = sub.adjoint() * &sub;
        ata.symmetric_eigen()
            .eigenvalues
            .iter()
            .cloned()
            .fold(0.0_f64, f64::max)
            .max(0.0)
            .sqrt()
    }

    #[test]
    fn lambda_of_nq_limits_and_special_value() {
        assert_eq!(lambda_of_nq(0.0, 0.025), -0.025);
        // At n = n_crit = 400 with λ = 0.025, 2λ√n = 1 so Λ = −arctan(1)/40.
        assert_relative_eq!(
            lambda_of_nq(400.0, 0.025),
            -std::f64::consts::PI / 160.0,
            epsilon = 1e-15
        );
        // −2√n·Λ(n) = arctan(2λ√n) ∈ (0, π/2) for n > 0.
        for n in [0.5_f64, 1.0, 17.0, 4096.0] {
            let v = -2.0 * n.sqrt() * lambda_of_nq(n, 0.025);
            assert!(v > 0.0 && v < std::f64::consts::FRAC_PI_2);
        }
    }

    #[test]
    fn unitary_is_identity_at_zero_coupling() {
        let d = dims(12);
        let p = DispersiveParams::from_lambda(0.0, 1.0, 0.1);
        let u = dispersive_unitary(d, &p);
        assert!((&u.m - DenseOperator::identity(d).m).norm() < 1e-15);
    }

    #[test]
    fn unitary_is_unitary() {
        let d = dims(30);
        let p = DispersiveParams::from_lambda(0.025, 1.0, 0.1);
        let u = dispersive_unitary(d, &p);
        let prod = u.m.adjoint() * &u.m;
        assert!((prod - DenseOperator::identity(d).m).norm() < 1e-10);
    }

    #[test]
    fn unitary_matches_matrix_exponential_of_generator() {
        // D built block-analytically equals expm(−Λ(N_q)I_−) on the whole
        // truncated space, including the edge orphan |e, N−1⟩.
        let d = dims(12);
        let lambda = 0.1;
        let p = DispersiveParams::from_lambda(lambda, 1.0, 0.1);
        let im = build_elementary(d, ElementaryOp::IMinus);
        let lam = diag_of_nq(d, |nq| lambda_of_nq(nq, lambda));
        let gen = -(lam * &im.m);
        let oracle = expm(&gen);
        assert!((dispersive_unitary(d, &p).m - oracle).norm() < 1e-12);
    }

    #[test]
    fn conjugated_hamiltonian_is_diagonal_and_matches_closed_form() {
        let d = dims(25);
        let sys = test_system(200.0, 0.0); // λ = 0.1, well off-perturbative
        let p = sys.dispersive();
        let u = dispersive_unitary(d, &p);
        let hd = transform_operator(&u, &jc_hamiltonian(d, &sys)).unwrap();
        let closed = exact_dispersive_hamiltonian(d, &sys);
        let scale = interior_spectral_norm(&jc_hamiltonian(d, &sys).m, d, 2);

        // Off-diagonal part vanishes on the interior subspace.
        let mut off = hd.m.clone();
        off.set_diagonal(&nalgebra::DVector::from_element(d.total_dim(), ZERO));
        assert!(interior_spectral_norm(&off, d, 2) < 1e-9 * scale);
        // Diagonal agrees with the closed-form dressed energies.
        assert!(interior_spectral_norm(&(&hd.m - &closed.m), d, 2) < 1e-9 * scale);
    }

    #[test]
    fn dressed_energies_match_block_eigenvalues() {
        let d = dims(20);
        let sys = test_system(200.0, 0.0);
        let h = jc_hamiltonian(d, &sys);
        for m in 1..d.fock_levels() - 1 {
            let ie = d.index(1, m - 1);
            let ig = d.index(0, m);
            let block = nalgebra::Matrix2::new(h.m[(ie, ie)], h.m[(ie, ig)], h.m[(ig, ie)], h.m[(ig, ig)]);
            let mut eigs: Vec<f64> = block.symmetric_eigen().eigenvalues.iter().cloned().collect();
            eigs.sort_by(|a, b| a.partial_cmp(b).unwrap());
            let mut expect = vec![dressed_energy(&sys, 1, m - 1), dressed_energy(&sys, 0, m)];
            expect.sort_by(|a, b| a.partial_cmp(b).unwrap());
            for (got, want) in eigs.iter().zip(&expect) {
                assert_relative_eq!(got, want, epsilon = 1e-9 * sys.omega_a);
            }
        }
        // Uncoupled levels.
        assert_relative_eq!(dressed_energy(&sys, 0, 0), -0.5 * sys.omega_a, epsilon = 1e-12);
    }

    #[test]
    fn transform_rejects_dimension_mismatch_and_preserves_spectrum() {
        let d = dims(8);
        let sys = test_system(50.0, 0.0);
        let u = dispersive_unitary(d, &sys.dispersive());
        let u_small = dispersive_unitary(dims(6), &sys.dispersive());
        let h = jc_hamiltonian(d, &sys);
        assert!(transform_operator(&u_small, &h).is_err());

        let transformed = transform_operator(&u, &h).unwrap();
        let e1 = h.hermitian_eigenvalues();
        let e2 = transformed.hermitian_eigenvalues();
        for (a, b) in e1.iter().zip(&e2) {
            assert_relative_eq!(a, b, epsilon = 1e-9 * sys.omega_a);
        }
    }

    #[test]
    fn identity_is_invariant_under_transform() {
        let d = dims(10);
        let sys = test_system(50.0, 0.0);
        let u = dispersive_unitary(d, &sys.dispersive());
        let id = DenseOperator::identity(d);
        let out = transform_operator(&u, &id).unwrap();
        assert!((out.m - id.m).norm() < 1e-12);
    }

    #[test]
    fn closed_form_dressed_operators_equal_exact_conjugation() {
        // σ_z and a†a transform to the printed closed forms *exactly*; the
        // only discrepancy allowed is the truncation edge.
        let d = dims(24);
        let lambda = 0.1;
        let p = DispersiveParams::from_lambda(lambda, 1.0, 0.1);
        let u = dispersive_unitary(d, &p);
        for (op, closed) in [
            (ElementaryOp::SigmaZ, sigma_z_dressed(d, lambda)),
            (ElementaryOp::NPhoton, n_dressed(d, lambda)),
        ] {
            let exact = transform_operator(&u, &build_elementary(d, op)).unwrap();
            assert!(interior_spectral_norm(&(exact.m - closed.m), d, 2) < 1e-11);
        }
    }

    /// Interior error of a series operator against exact conjugation.
    fn series_error(d: HilbertDims, lambda: f64, op: ElementaryOp, series: &DenseOperator) -> f64 {
        let p = DispersiveParams::from_lambda(lambda, 1.0, 0.1);
        let u = dispersive_unitary(d, &p);
        let exact = transform_operator(&u, &build_elementary(d, op)).unwrap();
        interior_spectral_norm(&(&exact.m - &series.m), d, 3)
    }

    #[test]
    fn series_errors_shrink_at_their_stated_order() {
        let d = dims(24);
        let (l1, l2) = (0.08, 0.04);
        // O(λ⁴) families: factor ≥ 12 per halving (¾ of the asymptotic 16).
        let quartic: [(ElementaryOp, fn(HilbertDims, f64) -> DenseOperator); 3] = [
            (ElementaryOp::SigmaZ, sigma_z_dressed_quadratic),
            (ElementaryOp::NPhoton, n_dressed_quadratic),
            (ElementaryOp::A, a_dressed_series),
        ];
        for (op, build) in quartic {
            let e1 = series_error(d, l1, op, &build(d, l1));
            let e2 = series_error(d, l2, op, &build(d, l2));
            assert!(
                e1 / e2 >= 12.0,
                "O(lambda^4) scaling violated for {op:?}: {e1:.3e}/{e2:.3e}"
            );
        }
        // σ_− series is one order lower: factor ≥ 6 (¾ of 8).
        let e1 = series_error(d, l1, ElementaryOp::SigmaMinus, &sigma_minus_dressed_series(d, l1));
        let e2 = series_error(d, l2, ElementaryOp::SigmaMinus, &sigma_minus_dressed_series(d, l2));
        assert!(e1 / e2 >= 6.0, "O(lambda^3) scaling violated: {e1:.3e}/{e2:.3e}");
    }

    #[test]
    fn series_selector_dispatch_and_rejection() {
        let d = dims(8);
        let sys = test_system(50.0, 0.0);
        assert!("sigma_q_D".parse::<SeriesOp>().is_err());
        let sz: SeriesOp = "sigma_z_D".parse().unwrap();
        let got = series_operator(d, sz, &sys, 0.0);
        // λ → 0 degenerates to bare σ_z.
        let mut sys0 = sys.clone();
        sys0.g = 0.0;
        let bare = series_operator(d, sz, &sys0, 0.0);
        assert!((bare.m - build_elementary(d, ElementaryOp::SigmaZ).m).norm() < 1e-15);
        assert!(got.m.norm() > 0.0);
    }

    #[test]
    fn third_order_hamiltonian_transition_frequencies() {
        let d = dims(10);
        let sys = test_system(50.0, 0.0);
        let p = sys.dispersive();
        let h = hamiltonian_third_order(d, &sys);
        for n in 0..=5 {
            let diff = (h.m[(d.index(1, n), d.index(1, n))] - h.m[(d.index(0, n), d.index(0, n))]).re;
            let want = sys.omega_a + 2.0 * p.chi * (n as f64 + 0.5) + 2.0 * p.zeta * (n as f64).powi(2);
            assert_relative_eq!(diff, want, epsilon = 1e-9);
        }
    }

    #[test]
    fn drive_amplitude_depends_on_qubit_state() {
        let d = dims(10);
        let sys = test_system(50.0, 10.0);
        let lambda = sys.dispersive().lambda;
        let h = series_operator(d, SeriesOp::HdD, &sys, 0.0);
        let n = 3;
        let up_e = h.m[(d.index(1, n + 1), d.index(1, n))].re;
        let up_g = h.m[(d.index(0, n + 1), d.index(0, n))].re;
        let ratio = up_e / up_g;
        let want = (1.0 + lambda * lambda / 2.0) / (1.0 - lambda * lambda / 2.0);
        assert_relative_eq!(ratio, want, epsilon = 1e-12);
        // λ = 0.025 → ratio ≈ 1.000625.
        assert_relative_eq!(want, 1.000_625, epsilon = 2e-7);
        // Hermiticity.
        assert!((&h.m - h.m.adjoint()).norm() < 1e-12);
    }

    #[test]
    fn lamb_stark_values_and_order() {
        let sys = test_system(50.0, 0.0);
        let p = sys.dispersive();
        let s0 = lamb_stark_shifts(&p, 0);
        assert_eq!(s0.delta_s, 0.0);
        // δ_L/2π ≈ χ/2π = 1.2492 MHz.
        assert_relative_eq!(s0.delta_l / TWO_PI, 1.2492, epsilon = 1e-3);
        assert_relative_eq!(s0.delta_l, p.chi, max_relative = 1e-5);

        // λ-halving shrinks the series error by ≥ 28× (O(λ⁵) bound; the
        // actual even-order error shrinks ~64×).
        let shrink = |f: &dyn Fn(&DispersiveParams) -> f64| {
            let p1 = DispersiveParams::from_lambda(0.05, p.delta, sys.kappa);
            let p2 = DispersiveParams::from_lambda(0.025, p.delta, sys.kappa);
            f(&p1) / f(&p2)
        };
        let lamb_err = |q: &DispersiveParams| {
            let s = lamb_stark_shifts(q, 0);
            (s.delta_l - s.delta_l_series).abs()
        };
        let stark_err = |q: &DispersiveParams| {
            let s = lamb_stark_shifts(q, 5);
            (s.delta_s - s.delta_s_series).abs()
        };
        assert!(shrink(&lamb_err) >= 28.0);
        assert!(shrink(&stark_err) >= 28.0);
    }

    #[test]
    fn derived_parameters_are_consistent() {
        let p = DispersiveParams::new(TWO_PI * 50.0, TWO_PI * 2000.0, TWO_PI * 2.5);
        assert_relative_eq!(p.lambda, 0.025, epsilon = 1e-15);
        assert_relative_eq!(p.n_crit, 400.0, max_relative = 1e-12);
        assert_relative_eq!(p.n_crit, 1.0 / (4.0 * p.lambda * p.lambda), max_relative = 1e-12);
        assert_relative_eq!(p.chi / TWO_PI, 1.2492, epsilon = 1e-3);
        assert_relative_eq!(p.n_kappa, 3200.0, max_relative = 1e-3);
        assert!(p.zeta < 0.0);
    }
}
