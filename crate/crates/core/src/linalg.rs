//! Small symmetric-matrix helpers used throughout: the unique PSD square
//! root, its pseudo-inverse, and symmetry/PSD checks.
//!
//! Everything here works on the eigendecomposition of the symmetrized input.
//! The symmetric square root (rather than a Cholesky factor) is used because
//! it is unique, which makes results reproducible and makes permutation
//! conjugation commute with the root exactly.

use nalgebra::allocator::Allocator;
use nalgebra::{Const, DMatrix, DefaultAllocator, DimDiff, DimSub, SMatrix, U1};

use crate::error::Error;
use crate::Result;

/// Relative eigenvalue threshold below which a direction is treated as
/// outside the range of a PSD matrix.
pub const RANK_TOL: f64 = 1e-10;

/// Relative threshold for tolerated negative eigenvalues in a nominally PSD
/// matrix.
pub const NEG_EIG_TOL: f64 = 1e-8;

/// Absolute tolerance on `max |A - A'|` before an input is rejected as
/// non-symmetric.
pub const SYM_TOL: f64 = 1e-8;

pub fn symmetrize<const N: usize>(m: &SMatrix<f64, N, N>) -> SMatrix<f64, N, N> {
    (m + m.transpose()) * 0.5
}

pub fn max_asymmetry<const N: usize>(m: &SMatrix<f64, N, N>) -> f64 {
    let mut worst = 0.0f64;
    for i in 0..N {
        for j in (i + 1)..N {
            worst = worst.max((m[(i, j)] - m[(j, i)]).abs());
        }
    }
    worst
}

/// Eigendecomposition-backed functions of a symmetric PSD matrix.
///
/// Checks symmetry and near-PSD-ness once, then exposes the square root, the
/// pseudo-inverse square root, and the range projector, all sharing the same
/// eigenvalue clamping and rank decisions.
pub struct PsdDecomposition<const N: usize> {
    eigvals: [f64; N],
    eigvecs: SMatrix<f64, N, N>,
    rank_cut: f64,
}

impl<const N: usize> PsdDecomposition<N>
where
    Const<N>: DimSub<U1>,
    DefaultAllocator: Allocator<DimDiff<Const<N>, U1>>,
{
    /// Decompose a symmetric PSD matrix.
    ///
    /// Rejects inputs whose asymmetry exceeds [`SYM_TOL`] or whose smallest
    /// eigenvalue is below `-NEG_EIG_TOL * trace`. Slightly negative
    /// eigenvalues within that tolerance are clamped to zero.
    pub fn new(m: &SMatrix<f64, N, N>) -> Result<Self> {
        if m.iter().any(|v| !v.is_finite()) {
            return Err(Error::non_finite("PSD matrix input"));
        }
        let asym = max_asymmetry(m);
        if asym > SYM_TOL {
            return Err(Error::NotSymmetric {
                max_asymmetry: asym,
            });
        }
        let sym = symmetrize(m);
        let trace = sym.trace().max(0.0);
        let eig = sym.symmetric_eigen();
        let mut eigvals = [0.0f64; N];
        for (dst, src) in eigvals.iter_mut().zip(eig.eigenvalues.iter()) {
            *dst = *src;
        }
        let min_eig = eigvals.iter().cloned().fold(f64::INFINITY, f64::min);
        if min_eig < -NEG_EIG_TOL * trace {
            return Err(Error::NotPsd {
                min_eigenvalue: min_eig,
            });
        }
        for v in eigvals.iter_mut() {
            if *v < 0.0 {
                *v = 0.0;
            }
        }
        Ok(PsdDecomposition {
            eigvals,
            eigvecs: eig.eigenvectors,
            rank_cut: RANK_TOL * trace,
        })
    }

    /// Whether every eigenvalue clears the rank threshold.
    pub fn is_nonsingular(&self) -> bool {
        self.eigvals.iter().all(|&v| v > self.rank_cut)
    }

    fn apply(&self, f: impl Fn(f64) -> f64) -> SMatrix<f64, N, N> {
        let mut d = self.eigvecs;
        d.fill(0.0);
        for i in 0..N {
            d[(i, i)] = f(self.eigvals[i]);
        }
        self.eigvecs * d * self.eigvecs.transpose()
    }

    /// The unique symmetric PSD square root.
    pub fn sqrt(&self) -> SMatrix<f64, N, N> {
        self.apply(f64::sqrt)
    }

    /// Inverse of the square root on the range; zero on the null space.
    pub fn inv_sqrt_pseudo(&self) -> SMatrix<f64, N, N> {
        let cut = self.rank_cut;
        self.apply(|v| if v > cut { 1.0 / v.sqrt() } else { 0.0 })
    }

    /// Orthogonal projector onto the range.
    pub fn range_projector(&self) -> SMatrix<f64, N, N> {
        let cut = self.rank_cut;
        self.apply(|v| if v > cut { 1.0 } else { 0.0 })
    }
}

/// Smallest eigenvalue of the symmetrized matrix; used by PSD assertions.
pub fn min_symmetric_eigenvalue<const N: usize>(m: &SMatrix<f64, N, N>) -> f64
where
    Const<N>: DimSub<U1>,
    DefaultAllocator: Allocator<DimDiff<Const<N>, U1>>,
{
    symmetrize(m)
        .symmetric_eigen()
        .eigenvalues
        .iter()
        .cloned()
        .fold(f64::INFINITY, f64::min)
}

/// Moore-Penrose pseudo-inverse of a symmetric PSD matrix of runtime size.
pub fn sym_pseudo_inverse(m: &DMatrix<f64>) -> DMatrix<f64> {
    let n = m.nrows();
    let sym = (m + m.transpose()) * 0.5;
    let trace: f64 = sym.diagonal().iter().sum::<f64>().max(0.0);
    let cut = RANK_TOL * trace;
    let eig = sym.symmetric_eigen();
    let mut d = DMatrix::<f64>::zeros(n, n);
    for i in 0..n {
        let v = eig.eigenvalues[i];
        d[(i, i)] = if v > cut { 1.0 / v } else { 0.0 };
    }
    &eig.eigenvectors * d * eig.eigenvectors.transpose()
}
