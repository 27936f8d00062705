//! Small dense Hermitian routines: dominant eigenpair by power iteration and
//! a Cholesky-based positive-definite solve.

use num_complex::Complex64;

use crate::{CMatrix, CVector, Error, Result};

const EIG_TOL: f64 = 1e-12;
const EIG_MAX_ITER: usize = 10_000;

/// A square complex matrix equal to its conjugate transpose.
#[derive(Debug, Clone, PartialEq)]
pub struct HermitianMatrix(CMatrix);

impl HermitianMatrix {
    /// Symmetrizes `a` as `(a + aᴴ) / 2`. Rejects non-square input and
    /// input that is visibly not Hermitian (asymmetry above 1e-10 relative).
    pub fn new(a: CMatrix) -> Result<Self> {
        if a.nrows() != a.ncols() {
            return Err(Error::InvalidArgument(format!(
                "Hermitian matrix must be square, got {}x{}",
                a.nrows(),
                a.ncols()
            )));
        }
        let adj = a.adjoint();
        let asym = (&a - &adj).norm();
        if asym > 1e-10 * (1.0 + a.norm()) {
            return Err(Error::InvalidArgument(format!("matrix is not Hermitian (asymmetry {asym:e})")));
        }
        Ok(Self((a + adj).scale(0.5)))
    }

    pub fn identity(n: usize) -> Self {
        Self(CMatrix::identity(n, n))
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.0
    }

    pub fn into_matrix(self) -> CMatrix {
        self.0
    }
}

/// An eigenvalue with its unit-norm eigenvector.
#[derive(Debug, Clone)]
pub struct EigPair {
    pub value: f64,
    pub vector: CVector,
}

/// Power iteration on `a + shift·I` from `start`, stopping once
/// `‖a v − λ v‖ ≤ tol·‖a‖`.
fn power_iteration(a: &CMatrix, shift: f64, start: CVector, scale: f64) -> Result<Option<EigPair>> {
    let mut v = start;
    let norm = v.norm();
    if norm == 0.0 {
        return Ok(None);
    }
    v.unscale_mut(norm);
    let mut residual = f64::INFINITY;
    for _ in 0..EIG_MAX_ITER {
        let av = a * &v;
        let lambda = v.dotc(&av).re;
        residual = (&av - v.scale(lambda)).norm();
        if residual <= EIG_TOL * scale {
            return Ok(Some(EigPair { value: lambda, vector: v }));
        }
        let mut next = av + v.scale(shift);
        let nn = next.norm();
        if nn == 0.0 {
            // Start vector lies in the null space of the shifted matrix.
            return Ok(Some(EigPair { value: lambda, vector: v }));
        }
        next.unscale_mut(nn);
        v = next;
    }
    Err(Error::NoConvergence { iterations: EIG_MAX_ITER, residual })
}

fn irregular_start(n: usize) -> CVector {
    CVector::from_iterator(
        n,
        (0..n).map(|i| Complex64::from_polar(1.0 + 0.37 * i as f64, 0.618_033_988_7 * (i * i + 1) as f64)),
    )
}

/// The two largest eigenpairs, by power iteration plus one deflation.
///
/// The first run starts from the normalized all-ones vector. The second run
/// works on `a` with `v₁` deflated; if it turns up a larger eigenvalue (the all-ones
/// start happened to be orthogonal to the dominant eigenvector) the pairs
/// are swapped.
pub fn top_two_eigpairs(a: &HermitianMatrix) -> Result<(EigPair, Option<EigPair>)> {
    let m = a.matrix();
    let n = a.dim();
    if n == 0 {
        return Err(Error::InvalidArgument("empty matrix".into()));
    }
    let scale = m.norm().max(f64::MIN_POSITIVE);
    // Shift by the most negative Gershgorin bound so power iteration finds the
    // algebraically largest eigenvalue, not the largest in magnitude.
    let shift = (0..n)
        .map(|i| {
            let off: f64 = (0..n).filter(|&j| j != i).map(|j| m[(i, j)].norm()).sum();
            m[(i, i)].re - off
        })
        .fold(f64::INFINITY, f64::min)
        .min(0.0)
        .abs();
    let ones = CVector::from_element(n, Complex64::new(1.0, 0.0));
    let first = power_iteration(m, shift, ones, scale)?.expect("all-ones start is nonzero");
    if n == 1 {
        return Ok((first, None));
    }
    // Move the found eigenvalue down to the Gershgorin floor so that after
    // shifting it sits at 0 and cannot dominate.
    let push = first.value + shift;
    let deflated = m - (&first.vector * first.vector.adjoint()).scale(push);
    let mut start = irregular_start(n);
    let proj = first.vector.dotc(&start);
    start -= &first.vector * proj;
    let second = power_iteration(&deflated, shift, start, scale)?;
    match second {
        Some(s) if s.value > first.value + EIG_TOL * scale => {
            // The deflated run found the true top pair; `first` is now the runner-up.
            Ok((s, Some(first)))
        }
        other => Ok((first, other)),
    }
}

/// Largest eigenvalue of a Hermitian matrix and a unit eigenvector.
pub fn top_eigpair(a: &HermitianMatrix) -> Result<EigPair> {
    top_two_eigpairs(a).map(|(top, _)| top)
}

/// Lower-triangular Cholesky factor `L` with `A = L Lᴴ`.
pub fn cholesky(a: &HermitianMatrix) -> Result<CMatrix> {
    let m = a.matrix();
    let n = a.dim();
    let mut l = CMatrix::zeros(n, n);
    for j in 0..n {
        let mut d = m[(j, j)].re;
        for k in 0..j {
            d -= l[(j, k)].norm_sqr();
        }
        if !d.is_finite() || d <= 0.0 {
            return Err(Error::NotPositiveDefinite { pivot: j, value: d });
        }
        let d = d.sqrt();
        l[(j, j)] = Complex64::new(d, 0.0);
        for i in (j + 1)..n {
            let mut s = m[(i, j)];
            for k in 0..j {
                s -= l[(i, k)] * l[(j, k)].conj();
            }
            l[(i, j)] = s / d;
        }
    }
    Ok(l)
}

/// Solves `A X = B` for Hermitian positive-definite `A`.
pub fn hpd_solve(a: &HermitianMatrix, b: &CMatrix) -> Result<CMatrix> {
    let n = a.dim();
    if b.nrows() != n {
        return Err(Error::InvalidArgument(format!(
            "right-hand side has {} rows, expected {n}",
            b.nrows()
        )));
    }
    let l = cholesky(a)?;
    let mut x = b.clone();
    for col in 0..x.ncols() {
        // L y = b
        for i in 0..n {
            let mut s = x[(i, col)];
            for k in 0..i {
                s -= l[(i, k)] * x[(k, col)];
            }
            x[(i, col)] = s / l[(i, i)];
        }
        // Lᴴ x = y
        for i in (0..n).rev() {
            let mut s = x[(i, col)];
            for k in (i + 1)..n {
                s -= l[(k, i)].conj() * x[(k, col)];
            }
            x[(i, col)] = s / l[(i, i)];
        }
    }
    Ok(x)
}
