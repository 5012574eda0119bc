//! Shifted-diagonal ("banded") operator kernels for the master-equation hot
//! loops.
//!
//! Every operator entering the production Liouvillians is supported on a
//! handful of shifted diagonals of the combined basis index i = s·N + n
//! (see [`crate::operators`] for the ordering). Storing only those
//! diagonals turns each Hamiltonian/collapse application into O(d²·bands)
//! elementwise work per right-hand-side evaluation instead of O(d³) dense
//! products. Dense matrices remain the carrier everywhere outside the
//! integrator loops.

use num_complex::Complex64;

use crate::error::CqedError;
use crate::operators::{DenseOperator, HilbertDims};

type C64 = Complex64;
const ZERO: C64 = C64::new(0.0, 0.0);

/// One shifted diagonal: element (j + delta, j) = coeff[j]. `coeff` has the
/// full dimension; entries whose row index falls outside [0, dim) must be
/// zero and are never read.
#[derive(Debug, Clone, PartialEq)]
pub struct ShiftedBand {
    pub delta: isize,
    pub coeff: Vec<C64>,
}

/// An operator stored as a sum of shifted diagonals, sorted by shift.
#[derive(Debug, Clone, PartialEq)]
pub struct BandOp {
    pub dim: usize,
    pub bands: Vec<ShiftedBand>,
}

fn in_range(dim: usize, j: usize, delta: isize) -> bool {
    let r = j as isize + delta;
    r >= 0 && (r as usize) < dim
}

impl BandOp {
    pub fn zeros(dim: usize) -> Self {
        Self { dim, bands: Vec::new() }
    }

    pub fn identity(dim: usize) -> Self {
        Self {
            dim,
            bands: vec![ShiftedBand { delta: 0, coeff: vec![C64::new(1.0, 0.0); dim] }],
        }
    }

    /// Build from (row, col, value) triplets, bucketing by row − col.
    pub fn from_triplets(dim: usize, triplets: &[(usize, usize, C64)]) -> Self {
        let mut out = Self::zeros(dim);
        for &(r, c, v) in triplets {
            assert!(r < dim && c < dim, "triplet out of range");
            if v == ZERO {
                continue;
            }
            let delta = r as isize - c as isize;
            out.band_mut(delta)[c] += v;
        }
        out.prune();
        out
    }

    /// Convert a dense operator, rejecting it if anything lives outside the
    /// requested shifts (guards against silent structure violations when
    /// extracting dressed operators).
    pub fn from_dense(
        op: &DenseOperator,
        allowed_shifts: &[isize],
        tol: f64,
    ) -> Result<Self, CqedError> {
        let dim = op.dims.total_dim();
        let mut out = Self::zeros(dim);
        for c in 0..dim {
            for r in 0..dim {
                let v = op.m[(r, c)];
                if v.norm() <= tol {
                    continue;
                }
                let delta = r as isize - c as isize;
                if !allowed_shifts.contains(&delta) {
                    return Err(CqedError::InvalidInput(format!(
                        "element ({r}, {c}) = {v} outside allowed shifts {allowed_shifts:?}"
                    )));
                }
                out.band_mut(delta)[c] = v;
            }
        }
        out.prune();
        Ok(out)
    }

    /// Mutable access to the coefficient vector of a shift, inserting an
    /// empty band when absent (kept sorted by shift).
    pub fn band_mut(&mut self, delta: isize) -> &mut Vec<C64> {
        let pos = match self.bands.binary_search_by_key(&delta, |b| b.delta) {
            Ok(p) => p,
            Err(p) => {
                self.bands.insert(p, ShiftedBand { delta, coeff: vec![ZERO; self.dim] });
                p
            }
        };
        &mut self.bands[pos].coeff
    }

    pub fn band(&self, delta: isize) -> Option<&ShiftedBand> {
        self.bands
            .binary_search_by_key(&delta, |b| b.delta)
            .ok()
            .map(|p| &self.bands[p])
    }

    /// Single-shift sub-operator (zero operator when the shift is absent).
    pub fn select(&self, delta: isize) -> Self {
        match self.band(delta) {
            Some(b) => Self { dim: self.dim, bands: vec![b.clone()] },
            None => Self::zeros(self.dim),
        }
    }

    /// Drop all-zero bands.
    pub fn prune(&mut self) {
        self.bands.retain(|b| b.coeff.iter().any(|v| *v != ZERO));
    }

    pub fn to_dense(&self, dims: HilbertDims) -> DenseOperator {
        assert_eq!(dims.total_dim(), self.dim);
        let mut out = DenseOperator::zeros(dims);
        for b in &self.bands {
            for j in 0..self.dim {
                if in_range(self.dim, j, b.delta) {
                    out.m[((j as isize + b.delta) as usize, j)] += b.coeff[j];
                }
            }
        }
        out
    }

    /// Hermitian adjoint: band δ with coeff[j] becomes band −δ with
    /// coeff'[j'] = conj(coeff[j' − δ]).
    pub fn dagger(&self) -> Self {
        let mut out = Self::zeros(self.dim);
        for b in &self.bands {
            let tgt = out.band_mut(-b.delta);
            for j in 0..self.dim {
                if in_range(self.dim, j, b.delta) {
                    let jp = (j as isize + b.delta) as usize;
                    tgt[jp] = b.coeff[j].conj();
                }
            }
        }
        out.prune();
        out
    }

    pub fn scale(&self, s: C64) -> Self {
        let mut out = self.clone();
        for b in &mut out.bands {
            for v in &mut b.coeff {
                *v *= s;
            }
        }
        out.prune();
        out
    }

    pub fn add(&self, other: &Self) -> Self {
        assert_eq!(self.dim, other.dim);
        let mut out = self.clone();
        for b in &other.bands {
            let tgt = out.band_mut(b.delta);
            for j in 0..self.dim {
                tgt[j] += b.coeff[j];
            }
        }
        out.prune();
        out
    }

    /// Operator product self·other: shifts add, coefficients multiply with a
    /// row offset: (AB)[j+δ₁+δ₂, j] += A[j+δ₂+δ₁, j+δ₂]·B[j+δ₂, j].
    pub fn mul(&self, other: &Self) -> Self {
        assert_eq!(self.dim, other.dim);
        let mut out = Self::zeros(self.dim);
        for b1 in &self.bands {
            for b2 in &other.bands {
                let delta = b1.delta + b2.delta;
                let tgt = out.band_mut(delta);
                for j in 0..self.dim {
                    if in_range(self.dim, j, b2.delta) && in_range(self.dim, j, delta) {
                        let k = (j as isize + b2.delta) as usize;
                        tgt[j] += b1.coeff[k] * b2.coeff[j];
                    }
                }
            }
        }
        out.prune();
        out
    }

    /// out += s·(A·X) for a square d×d matrix X stored column-major in a
    /// flat slice: per column, each band adds a row-shifted,
    /// coefficient-weighted copy.
    pub fn apply_left_into(&self, s: C64, x: &[C64], out: &mut [C64]) {
        let d = self.dim;
        debug_assert_eq!(x.len(), d * d);
        debug_assert_eq!(out.len(), d * d);
        for b in &self.bands {
            let (lo, hi) = band_col_range(d, b.delta);
            for col in 0..d {
                let xc = &x[col * d..(col + 1) * d];
                let oc = &mut out[col * d..(col + 1) * d];
                for j in lo..hi {
                    let r = (j as isize + b.delta) as usize;
                    oc[r] += s * b.coeff[j] * xc[j];
                }
            }
        }
    }

    /// out += s·(X·A†): (XA†)[i, j+δ] = X[i, j]·conj(coeff[j]) for each
    /// band δ of A — source column j feeds output column j+δ.
    pub fn apply_right_dagger_into(&self, s: C64, x: &[C64], out: &mut [C64]) {
        let d = self.dim;
        debug_assert_eq!(x.len(), d * d);
        debug_assert_eq!(out.len(), d * d);
        for b in &self.bands {
            let (lo, hi) = band_col_range(d, b.delta);
            for src in lo..hi {
                let j = (src as isize + b.delta) as usize;
                let w = s * b.coeff[src].conj();
                let xc = &x[src * d..(src + 1) * d];
                let oc = &mut out[j * d..(j + 1) * d];
                for i in 0..d {
                    oc[i] += w * xc[i];
                }
            }
        }
    }

    /// out += s·(A·X·A†): fully elementwise in the band representation,
    /// out[i+δ₁, j+δ₂] += s·coeff₁[i]·conj(coeff₂[j])·X[i, j] over all band
    /// pairs (δ₁, δ₂).
    pub fn sandwich_into(&self, s: C64, x: &[C64], out: &mut [C64]) {
        let d = self.dim;
        debug_assert_eq!(x.len(), d * d);
        debug_assert_eq!(out.len(), d * d);
        for b1 in &self.bands {
            let (r1, r2) = band_col_range(d, b1.delta);
            for b2 in &self.bands {
                let (c1, c2) = band_col_range(d, b2.delta);
                for j in c1..c2 {
                    let jp = (j as isize + b2.delta) as usize;
                    let w = s * b2.coeff[j].conj();
                    let xc = &x[j * d..(j + 1) * d];
                    let oc = &mut out[jp * d..(jp + 1) * d];
                    for i in r1..r2 {
                        let ip = (i as isize + b1.delta) as usize;
                        oc[ip] += w * b1.coeff[i] * xc[i];
                    }
                }
            }
        }
    }

    /// A†A as a band operator (used for the no-jump drift K).
    pub fn dagger_mul_self(&self) -> Self {
        self.dagger().mul(self)
    }

    /// Tr[A·X] for a square column-major X: Σ_δ Σ_j coeff[j]·X[j, j+δ].
    pub fn expectation(&self, x: &[C64]) -> C64 {
        let d = self.dim;
        debug_assert_eq!(x.len(), d * d);
        let mut acc = ZERO;
        for b in &self.bands {
            let (lo, hi) = band_col_range(d, b.delta);
            for j in lo..hi {
                let jp = (j as isize + b.delta) as usize;
                acc += b.coeff[j] * x[jp * d + j];
            }
        }
        acc
    }
}

/// Column range [lo, hi) for which row j + delta stays inside [0, dim).
fn band_col_range(dim: usize, delta: isize) -> (usize, usize) {
    let lo = (-delta).max(0) as usize;
    let hi = (dim as isize).min(dim as isize - delta).max(0) as usize;
    (lo.min(dim), hi)
}
