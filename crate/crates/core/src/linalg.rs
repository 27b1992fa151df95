//! Dense complex-matrix primitives.
//!
//! Every rank or equality decision in the crate goes through a [`Tolerance`]:
//! ranks use a relative singular-value cutoff, equalities an absolute
//! operator-norm cutoff.

use faer::{Mat, MatRef, Side};
use nalgebra::DMatrix;
use num_complex::Complex;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type C64 = Complex<f64>;
pub type CMatrix = DMatrix<C64>;

pub const ZERO: C64 = C64::new(0.0, 0.0);
pub const ONE: C64 = C64::new(1.0, 0.0);
pub const I: C64 = C64::new(0.0, 1.0);

/// Numerical tolerance policy.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Tolerance {
    /// Relative singular-value cutoff for rank decisions.
    pub rank_rel: f64,
    /// Absolute operator-norm cutoff for equality and idempotence checks.
    pub eq_abs: f64,
}

impl Default for Tolerance {
    fn default() -> Self {
        Self {
            rank_rel: 1e-9,
            eq_abs: 1e-8,
        }
    }
}

impl Tolerance {
    pub fn new(rank_rel: f64, eq_abs: f64) -> Result<Self> {
        let ok = |x: f64| x > 0.0 && x < 1e-3;
        if !ok(rank_rel) || !ok(eq_abs) {
            return Err(Error::InvalidInput(format!(
                "tolerances must lie in (0, 1e-3): rank_rel={rank_rel}, eq_abs={eq_abs}"
            )));
        }
        Ok(Self { rank_rel, eq_abs })
    }
}

pub fn check_finite(a: &CMatrix) -> Result<()> {
    if a.nrows() == 0 || a.ncols() == 0 {
        return Err(Error::InvalidInput(format!(
            "matrix dimensions must be positive, got {}x{}",
            a.nrows(),
            a.ncols()
        )));
    }
    if a.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
        return Err(Error::InvalidInput("matrix has non-finite entries".into()));
    }
    Ok(())
}

/// Largest singular value. Empty matrices are rejected.
pub fn operator_norm(a: &CMatrix) -> Result<f64> {
    check_finite(a)?;
    Ok(norm(a))
}

/// Operator norm without input validation; empty matrices have norm 0.
pub(crate) fn norm(a: &CMatrix) -> f64 {
    if a.is_empty() || a.iter().all(|z| *z == ZERO) {
        return 0.0;
    }
    let s = to_faer(a)
        .singular_values()
        .expect("singular values of a finite matrix");
    s.into_iter().fold(0.0, f64::max)
}

fn to_faer(a: &CMatrix) -> Mat<C64> {
    Mat::from_fn(a.nrows(), a.ncols(), |i, j| a[(i, j)])
}

fn from_faer(m: MatRef<'_, C64>) -> CMatrix {
    CMatrix::from_fn(m.nrows(), m.ncols(), |i, j| m[(i, j)])
}

/// Thin SVD sorted by decreasing singular value: `(u, sigma, v)` with
/// `a = u diag(sigma) v*`.
fn svd_sorted(a: &CMatrix) -> (CMatrix, Vec<f64>, CMatrix) {
    let svd = to_faer(a).thin_svd().expect("svd of a finite matrix");
    let s = svd.S().column_vector();
    let sigma: Vec<f64> = (0..s.nrows()).map(|i| s[i].re).collect();
    (from_faer(svd.U()), sigma, from_faer(svd.V()))
}

fn numerical_rank(sigma: &[f64], rows: usize, cols: usize, tol: &Tolerance) -> usize {
    let smax = sigma.first().copied().unwrap_or(0.0);
    if smax == 0.0 {
        return 0;
    }
    let cut = tol.rank_rel * smax * rows.max(cols) as f64;
    sigma.iter().take_while(|&&s| s > cut).count()
}

/// Polar decomposition `x = v |x|` with `v` a partial isometry that vanishes
/// on the kernel of `|x|`.
pub fn polar_decompose(x: &CMatrix, tol: &Tolerance) -> Result<(CMatrix, CMatrix)> {
    check_finite(x)?;
    let (u, sigma, w) = svd_sorted(x);
    let rank = numerical_rank(&sigma, x.nrows(), x.ncols(), tol);
    let v = u.columns(0, rank) * w.columns(0, rank).adjoint();
    let s = CMatrix::from_diagonal(&nalgebra::DVector::from_iterator(
        sigma.len(),
        sigma.iter().map(|&s| C64::new(s, 0.0)),
    ));
    let absx = &w * s * w.adjoint();
    Ok((v, hermitian_part(&absx)))
}

/// Orthonormal basis (as columns) of the column space of `a`.
pub fn range_basis(a: &CMatrix, tol: &Tolerance) -> CMatrix {
    let (u, sigma, _) = svd_sorted(a);
    let rank = numerical_rank(&sigma, a.nrows(), a.ncols(), tol);
    u.columns(0, rank).into_owned()
}

/// Orthogonal projection onto the column space of `a`.
pub fn range_projection(a: &CMatrix, tol: &Tolerance) -> Result<CMatrix> {
    check_finite(a)?;
    Ok(projector(&range_basis(a, tol), a.nrows()))
}

/// `w w*` for a matrix with orthonormal columns; `n` fixes the size when `w`
/// has no columns.
pub fn projector(w: &CMatrix, n: usize) -> CMatrix {
    if w.ncols() == 0 {
        return CMatrix::zeros(n, n);
    }
    hermitian_part(&(w * w.adjoint()))
}

/// Eigendecomposition of the hermitian part of `a`, eigenvalues ascending.
pub fn hermitian_eigh(a: &CMatrix) -> (Vec<f64>, CMatrix) {
    let eig = to_faer(&hermitian_part(a))
        .self_adjoint_eigen(Side::Lower)
        .expect("eigendecomposition of a finite hermitian matrix");
    let s = eig.S().column_vector();
    let values = (0..s.nrows()).map(|i| s[i].re).collect();
    (values, from_faer(eig.U()))
}

/// Columns of the eigenbasis of `a` whose eigenvalues satisfy `keep`.
pub fn eigen_columns(a: &CMatrix, keep: impl Fn(f64) -> bool) -> CMatrix {
    let (values, vectors) = hermitian_eigh(a);
    let idx: Vec<usize> = (0..values.len()).filter(|&i| keep(values[i])).collect();
    CMatrix::from_fn(a.nrows(), idx.len(), |r, c| vectors[(r, idx[c])])
}

/// Positive semidefinite square root.
pub fn hermitian_sqrt(a: &CMatrix, tol: &Tolerance) -> Result<CMatrix> {
    check_finite(a)?;
    if a.nrows() != a.ncols() {
        return Err(Error::InvalidInput("square root of a non-square matrix".into()));
    }
    let skew = norm(&(a - a.adjoint()));
    if skew > tol.eq_abs {
        return Err(Error::InvalidInput(format!(
            "matrix is not hermitian (skew part {skew:.3e})"
        )));
    }
    let (values, vectors) = hermitian_eigh(a);
    let lmax = values.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
    if let Some(&lmin) = values.first() {
        if lmin < -tol.eq_abs {
            return Err(Error::InvalidInput(format!(
                "matrix has negative eigenvalue {lmin:.3e}"
            )));
        }
    }
    // roundoff-level eigenvalues would otherwise turn into ~1e-8 garbage
    let floor = 64.0 * f64::EPSILON * lmax * a.nrows() as f64;
    let roots: Vec<C64> = values
        .iter()
        .map(|&v| C64::new(if v > floor { v.sqrt() } else { 0.0 }, 0.0))
        .collect();
    let d = CMatrix::from_diagonal(&nalgebra::DVector::from_vec(roots));
    Ok(hermitian_part(&(&vectors * d * vectors.adjoint())))
}

pub fn hermitian_part(a: &CMatrix) -> CMatrix {
    (a + a.adjoint()).scale(0.5)
}

/// Entrywise complex conjugate.
pub fn conjugate(a: &CMatrix) -> CMatrix {
    a.map(|z| z.conj())
}

/// Unitary whose leading columns are the (orthonormal) columns of `w`.
pub fn complete_basis(w: &CMatrix, n: usize) -> CMatrix {
    let r = w.ncols();
    if r == n {
        return w.clone();
    }
    let comp = CMatrix::identity(n, n) - projector(w, n);
    let rest = eigen_columns(&comp, |l| l > 0.5);
    let mut out = CMatrix::zeros(n, n);
    if r > 0 {
        out.columns_mut(0, r).copy_from(w);
    }
    out.columns_mut(r, n - r).copy_from(&rest);
    out
}

pub fn is_close(a: &CMatrix, b: &CMatrix, tol: f64) -> bool {
    a.shape() == b.shape() && norm(&(a - b)) <= tol
}


#[cfg(test)]
mod props {
    use super::*;
    use proptest::prelude::*;

    fn cmatrix(max: usize) -> impl Strategy<Value = CMatrix> {
        (1..=max, 1..=max).prop_flat_map(|(r, c)| {
            proptest::collection::vec((-1.0..1.0f64, -1.0..1.0f64), r * c).prop_map(move |v| {
                CMatrix::from_row_iterator(r, c, v.into_iter().map(|(a, b)| C64::new(a, b)))
            })
        })
    }

    proptest! {
        #[test]
        fn norm_of_adjoint(a in cmatrix(6)) {
            let lhs = operator_norm(&a).unwrap();
            let rhs = operator_norm(&a.adjoint()).unwrap();
            prop_assert!((lhs - rhs).abs() <= 1e-10);
        }

        #[test]
        fn polar_invariants(a in cmatrix(6)) {
            let tol = Tolerance::default();
            let (v, absx) = polar_decompose(&a, &tol).unwrap();
            let scale = norm(&a).max(1.0);
            prop_assert!(norm(&(&a - &v * &absx)) <= 10.0 * tol.eq_abs * scale);
            prop_assert!(norm(&(&v * v.adjoint() * &a - &a)) <= 10.0 * tol.eq_abs * scale);
            let init = range_projection(&absx, &tol).unwrap();
            prop_assert!(norm(&(v.adjoint() * &v - init)) <= tol.eq_abs);
        }

        #[test]
        fn range_projection_invariants(a in cmatrix(6)) {
            let tol = Tolerance::default();
            let p = range_projection(&a, &tol).unwrap();
            prop_assert!(norm(&(&p * &p - &p)) <= tol.eq_abs);
            prop_assert!(norm(&(&p - p.adjoint())) <= tol.eq_abs);
            prop_assert!(norm(&(&p * &a - &a)) <= 10.0 * tol.eq_abs * norm(&a).max(1.0));
        }

        #[test]
        fn sqrt_squares_back(a in cmatrix(6)) {
            let tol = Tolerance::default();
            let psd = &a * a.adjoint();
            let b = hermitian_sqrt(&psd, &tol).unwrap();
            prop_assert!(norm(&(&b * &b - &psd)) <= 10.0 * tol.eq_abs * norm(&psd).max(1.0));
        }
    }
}
