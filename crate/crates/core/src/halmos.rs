//! Canonical form of a pair of projections.
//!
//! Any two projections `p`, `q` split the space into the four corners
//! `p∧q`, `p∧q⊥`, `p⊥∧q`, `p⊥∧q⊥` and a generic part `e1 + e2`, where a
//! partial isometry `v` identifies `e2` with `e1`. On the generic part
//! `p = [[1, 0], [0, 0]]` and `q = [[a², ab], [ba, b²]]` with commuting,
//! injective positive `a`, `b` satisfying `a² + b² = e1`; the spectrum of `a`
//! is the cosines of the principal angles.

use std::f64::consts::FRAC_PI_2;

use crate::algebra::{meet, validate_projection, AlgebraShape, Operator, Projection};
use crate::error::{Error, Result};
use crate::linalg::{self, CMatrix, Tolerance};

/// Angles closer than this to 0 or π/2 belong to the corners, not the
/// generic part.
pub const ANGLE_TOL: f64 = 1e-7;

#[derive(Debug, Clone, PartialEq)]
pub struct HalmosData {
    pub p_and_q: Projection,
    pub p_and_qperp: Projection,
    pub pperp_and_q: Projection,
    pub pperp_and_qperp: Projection,
    pub e1: Projection,
    pub e2: Projection,
    /// Partial isometry with `v v* = e1`, `v* v = e2`.
    pub v: Operator,
    pub a: Operator,
    pub b: Operator,
    /// Principal angles of the generic part, ascending, inside (0, π/2).
    pub angles: Vec<f64>,
}

fn blockwise(shape: &AlgebraShape, f: impl Fn(usize) -> Result<CMatrix>) -> Result<Operator> {
    let blocks = (0..shape.num_blocks()).map(f).collect::<Result<Vec<_>>>()?;
    Operator::new(shape.clone(), blocks)
}

/// Square root of `m` compressed to the span of the orthonormal columns `w`.
fn compressed_sqrt(m: &CMatrix, w: &CMatrix, tol: &Tolerance) -> Result<CMatrix> {
    let n = m.nrows();
    if w.ncols() == 0 {
        return Ok(CMatrix::zeros(n, n));
    }
    let c = w.adjoint() * m * w;
    let root = linalg::hermitian_sqrt(&c, tol)?;
    Ok(linalg::hermitian_part(&(w * root * w.adjoint())))
}

fn check_residual(what: &str, residual: f64, tol: &Tolerance) -> Result<()> {
    if residual > 100.0 * tol.eq_abs {
        return Err(Error::InvariantViolation(format!(
            "{what} residual {residual:.3e}"
        )));
    }
    Ok(())
}

pub fn halmos_decompose(p: &Projection, q: &Projection, tol: &Tolerance) -> Result<HalmosData> {
    p.op().check_shape(q.op())?;
    let shape = p.shape();
    let pc = p.complement();
    let qc = q.complement();

    // corners first, so polar errors never leak into them
    let p_and_q = meet(p, q, tol)?;
    let p_and_qperp = meet(p, &qc, tol)?;
    let pperp_and_q = meet(&pc, q, tol)?;
    let pperp_and_qperp = meet(&pc, &qc, tol)?;

    let e1 = validate_projection(&(&(p.op() - p_and_q.op()) - p_and_qperp.op()), tol)?;
    let e2 = validate_projection(&(&(pc.op() - pperp_and_q.op()) - pperp_and_qperp.op()), tol)?;
    if e1.ranks() != e2.ranks() {
        return Err(Error::InvariantViolation(format!(
            "generic parts have ranks {:?} and {:?}",
            e1.ranks(),
            e2.ranks()
        )));
    }

    let q_generic = &(q.op() - p_and_q.op()) - pperp_and_q.op();
    let bases: Vec<CMatrix> = (0..shape.num_blocks()).map(|i| e1.basis(i)).collect();
    // polar part computed between the two bases so that roundoff in an
    // empty generic part cannot masquerade as rank
    let v = blockwise(shape, |i| {
        let (w1, w2) = (&bases[i], e2.basis(i));
        let n = shape.dim(i);
        if w1.ncols() == 0 {
            return Ok(CMatrix::zeros(n, n));
        }
        let x = w1.adjoint() * q_generic.block(i) * &w2;
        let (vc, _) = linalg::polar_decompose(&x, tol)?;
        Ok(w1 * vc * w2.adjoint())
    })?;

    let a_sq = &(e1.op() * &q_generic) * e1.op();
    let b_sq = &(&v * &q_generic) * &v.adjoint();
    let a = blockwise(shape, |i| compressed_sqrt(a_sq.block(i), &bases[i], tol))?;
    let mut b = blockwise(shape, |i| compressed_sqrt(b_sq.block(i), &bases[i], tol))?;

    if (&(&(&a * &a) + &(&b * &b)) - e1.op()).norm() > tol.eq_abs {
        let rest = e1.op() - &(&a * &a);
        b = blockwise(shape, |i| compressed_sqrt(rest.block(i), &bases[i], tol))?;
    }

    let angles = generic_angles(&a, &bases);
    let h = HalmosData {
        p_and_q,
        p_and_qperp,
        pperp_and_q,
        pperp_and_qperp,
        e1,
        e2,
        v,
        a,
        b,
        angles,
    };
    check_invariants(&h, tol)?;
    let (_, q_rec) = halmos_reconstruct(&h, tol)?;
    check_residual("reconstruction of q", (q_rec.op() - q.op()).norm(), tol)?;
    Ok(h)
}

fn check_invariants(h: &HalmosData, tol: &Tolerance) -> Result<()> {
    let v = &h.v;
    check_residual("v v* = e1", (&(v * &v.adjoint()) - h.e1.op()).norm(), tol)?;
    check_residual("v* v = e2", (&(&v.adjoint() * v) - h.e2.op()).norm(), tol)?;
    let sum = &(&h.a * &h.a) + &(&h.b * &h.b);
    check_residual("a² + b² = e1", (&sum - h.e1.op()).norm(), tol)?;
    check_residual("ab = ba", (&(&h.a * &h.b) - &(&h.b * &h.a)).norm(), tol)?;
    Ok(())
}

fn generic_angles(a: &Operator, bases: &[CMatrix]) -> Vec<f64> {
    let mut angles: Vec<f64> = a
        .blocks()
        .iter()
        .zip(bases)
        .filter(|(_, w)| w.ncols() > 0)
        .flat_map(|(blk, w)| {
            let (values, _) = linalg::hermitian_eigh(&(w.adjoint() * blk * w));
            values.into_iter().map(|c| c.clamp(0.0, 1.0).acos())
        })
        .filter(|&t| t > ANGLE_TOL && t < FRAC_PI_2 - ANGLE_TOL)
        .collect();
    angles.sort_by(f64::total_cmp);
    angles
}

/// Rebuild `(p, q)` from the canonical data.
pub fn halmos_reconstruct(h: &HalmosData, tol: &Tolerance) -> Result<(Projection, Projection)> {
    let p = &(h.p_and_qperp.op() + h.p_and_q.op()) + h.e1.op();
    let (a, b, v) = (&h.a, &h.b, &h.v);
    let vt = v.adjoint();
    let generic = &(&(a * a) + &(&(a * b) * v)) + &(&(&(&vt * b) * a) + &(&(&vt * &(b * b)) * v));
    let q = &(h.pperp_and_q.op() + h.p_and_q.op()) + &generic;
    Ok((validate_projection(&p, tol)?, validate_projection(&q, tol)?))
}

pub fn principal_angles(h: &HalmosData) -> Vec<f64> {
    h.angles.clone()
}

/// `‖p - q‖` read off the canonical form: 1 if an off-diagonal corner is
/// present, otherwise `‖b‖ = sin` of the largest principal angle.
pub fn distance_via_halmos(h: &HalmosData) -> f64 {
    if !h.p_and_qperp.is_zero() || !h.pperp_and_q.is_zero() {
        1.0
    } else {
        h.b.norm()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::algebra::{distance, GrassmannSignature};
    use crate::linalg::C64;
    use crate::sampling::{haar_unitary, random_projection};
    use std::f64::consts::{FRAC_PI_3, FRAC_PI_4, FRAC_PI_6};

    fn tol() -> Tolerance {
        Tolerance::default()
    }

    fn real_proj(n: usize, data: &[f64]) -> Projection {
        let b = CMatrix::from_row_iterator(n, n, data.iter().map(|&x| C64::new(x, 0.0)));
        let op = Operator::new(AlgebraShape::new(vec![n]).unwrap(), vec![b]).unwrap();
        validate_projection(&op, &tol()).unwrap()
    }

    fn quarter_pair() -> (Projection, Projection) {
        (
            real_proj(2, &[1.0, 0.0, 0.0, 0.0]),
            real_proj(2, &[0.5, 0.5, 0.5, 0.5]),
        )
    }

    #[test]
    fn equal_projections() {
        let p = real_proj(2, &[0.5, 0.5, 0.5, 0.5]);
        let h = halmos_decompose(&p, &p, &tol()).unwrap();
        assert!(h.e1.is_zero() && h.e2.is_zero());
        assert!(h.p_and_q.op().is_close(p.op(), 1e-12));
        assert!(h.angles.is_empty());
        assert_eq!(distance_via_halmos(&h), 0.0);
    }

    #[test]
    fn quarter_turn_pair() {
        let (p, q) = quarter_pair();
        let h = halmos_decompose(&p, &q, &tol()).unwrap();
        assert!(h.p_and_q.is_zero() && h.p_and_qperp.is_zero());
        assert!(h.pperp_and_q.is_zero() && h.pperp_and_qperp.is_zero());
        assert!(h.e1.op().is_close(p.op(), 1e-12));
        assert!(h.e2.op().is_close(p.complement().op(), 1e-12));
        let v = Operator::new(
            p.shape().clone(),
            vec![CMatrix::from_row_slice(2, 2, &[linalg::ZERO, linalg::ONE, linalg::ZERO, linalg::ZERO])],
        )
        .unwrap();
        assert!(h.v.is_close(&v, 1e-12));
        let half_e1 = p.op().scale_re(0.5);
        assert!((&h.a * &h.a).is_close(&half_e1, 1e-12));
        assert!((&h.b * &h.b).is_close(&half_e1, 1e-12));
        assert_eq!(h.angles.len(), 1);
        assert!((h.angles[0] - FRAC_PI_4).abs() < 1e-12);
        assert!((distance_via_halmos(&h) - 0.5_f64.sqrt()).abs() < 1e-12);

        let (p2, q2) = halmos_reconstruct(&h, &tol()).unwrap();
        assert!(p2.op().is_close(p.op(), 1e-12));
        assert!(q2.op().is_close(q.op(), 1e-12));
    }

    #[test]
    fn orthogonal_pair() {
        let p = real_proj(2, &[1.0, 0.0, 0.0, 0.0]);
        let q = real_proj(2, &[0.0, 0.0, 0.0, 1.0]);
        let h = halmos_decompose(&p, &q, &tol()).unwrap();
        assert!(h.p_and_qperp.op().is_close(p.op(), 1e-12));
        assert!(h.pperp_and_q.op().is_close(q.op(), 1e-12));
        assert!(h.e1.is_zero() && h.e2.is_zero());
        assert_eq!(distance_via_halmos(&h), 1.0);
        // commuting case: q = p∧q + p⊥∧q
        let (_, q2) = halmos_reconstruct(&h, &tol()).unwrap();
        assert!(q2.op().is_close(&(h.p_and_q.op() + h.pperp_and_q.op()), 1e-12));
    }

    /// Block-diagonal embedding of rank-one planar pairs at angles `thetas`
    /// inside `M_{2m}`: p = span{e_1,..,e_m}, q rotated by θ_j in plane j.
    fn rotated_pair(thetas: &[f64]) -> (Projection, Projection) {
        let m = thetas.len();
        let n = 2 * m;
        let mut p = CMatrix::zeros(n, n);
        let mut q = CMatrix::zeros(n, n);
        for (j, &t) in thetas.iter().enumerate() {
            p[(j, j)] = linalg::ONE;
            let (c, s) = (t.cos(), t.sin());
            let (x, y) = (j, m + j);
            q[(x, x)] = C64::new(c * c, 0.0);
            q[(x, y)] = C64::new(c * s, 0.0);
            q[(y, x)] = C64::new(c * s, 0.0);
            q[(y, y)] = C64::new(s * s, 0.0);
        }
        let shape = AlgebraShape::new(vec![n]).unwrap();
        let mk = |b| validate_projection(&Operator::new(shape.clone(), vec![b]).unwrap(), &tol()).unwrap();
        (mk(p), mk(q))
    }

    #[test]
    fn two_plane_angles() {
        let (p, q) = rotated_pair(&[FRAC_PI_3, FRAC_PI_6]);
        let h = halmos_decompose(&p, &q, &tol()).unwrap();
        let angles = principal_angles(&h);
        assert_eq!(angles.len(), 2);
        assert!((angles[0] - FRAC_PI_6).abs() < 1e-10);
        assert!((angles[1] - FRAC_PI_3).abs() < 1e-10);
        assert!((distance_via_halmos(&h) - FRAC_PI_3.sin()).abs() < 1e-10);
    }

    #[test]
    fn empty_generic_part_has_no_angles() {
        let (p, q) = rotated_pair(&[0.0, FRAC_PI_2]);
        let h = halmos_decompose(&p, &q, &tol()).unwrap();
        assert!(h.e1.is_zero());
        assert!(principal_angles(&h).is_empty());
    }

    #[test]
    fn random_pairs_round_trip_and_resolve_identity() {
        let shape = AlgebraShape::new(vec![5, 3, 4]).unwrap();
        for seed in 0..30u64 {
            let sp = GrassmannSignature::new(shape.clone(), vec![2, 1, (seed % 5) as usize]).unwrap();
            let sq = GrassmannSignature::new(shape.clone(), vec![3, 1, 2]).unwrap();
            let p = random_projection(&sp, seed);
            let q = random_projection(&sq, 1000 + seed);
            let h = halmos_decompose(&p, &q, &tol()).unwrap();
            let (p2, q2) = halmos_reconstruct(&h, &tol()).unwrap();
            assert!(p2.op().is_close(p.op(), 1e-8));
            assert!(q2.op().is_close(q.op(), 1e-8));
            let total = [
                &h.p_and_q,
                &h.p_and_qperp,
                &h.pperp_and_q,
                &h.pperp_and_qperp,
                &h.e1,
                &h.e2,
            ]
            .iter()
            .fold(Operator::zero(&shape), |acc, x| &acc + x.op());
            assert!(total.is_close(&Operator::identity(&shape), 1e-8));
            let d = distance(&p, &q).unwrap();
            assert!((distance_via_halmos(&h) - d).abs() < 1e-8);
        }
    }

    #[test]
    fn angles_are_unitarily_invariant() {
        let shape = AlgebraShape::new(vec![6]).unwrap();
        let sig = GrassmannSignature::new(shape.clone(), vec![2]).unwrap();
        for seed in 0..10u64 {
            let p = random_projection(&sig, seed);
            let q = random_projection(&sig, seed + 50);
            let u = Operator::new(shape.clone(), vec![haar_unitary(6, seed + 99)]).unwrap();
            let conj = |x: &Projection| {
                validate_projection(&(&(&u * x.op()) * &u.adjoint()), &tol()).unwrap()
            };
            let h1 = halmos_decompose(&p, &q, &tol()).unwrap();
            let h2 = halmos_decompose(&conj(&p), &conj(&q), &tol()).unwrap();
            assert_eq!(h1.angles.len(), h2.angles.len());
            for (a, b) in h1.angles.iter().zip(&h2.angles) {
                assert!((a - b).abs() < 1e-7);
            }
        }
    }

    #[test]
    fn shape_mismatch_is_rejected() {
        let p = real_proj(2, &[1.0, 0.0, 0.0, 0.0]);
        let q = real_proj(1, &[1.0]);
        assert!(matches!(
            halmos_decompose(&p, &q, &tol()),
            Err(Error::ShapeMismatch { .. })
        ));
    }
}

#[cfg(test)]
mod props {
    use super::*;
    use crate::algebra::{distance, GrassmannSignature};
    use crate::sampling::random_projection;
    use proptest::prelude::*;

    fn pair() -> impl Strategy<Value = (Projection, Projection)> {
        prop::collection::vec((1usize..=12, 0.0f64..1.0, 0.0f64..1.0), 1..=3)
            .prop_flat_map(|blocks| {
                let dims: Vec<usize> = blocks.iter().map(|b| b.0).collect();
                let rank = |n: usize, x: f64| ((n + 1) as f64 * x) as usize;
                let kp: Vec<usize> = blocks.iter().map(|&(n, x, _)| rank(n, x)).collect();
                let kq: Vec<usize> = blocks.iter().map(|&(n, _, y)| rank(n, y)).collect();
                (Just((dims, kp, kq)), any::<u64>())
            })
            .prop_map(|((dims, kp, kq), seed)| {
                let shape = AlgebraShape::new(dims).unwrap();
                let sp = GrassmannSignature::new(shape.clone(), kp).unwrap();
                let sq = GrassmannSignature::new(shape, kq).unwrap();
                (random_projection(&sp, seed), random_projection(&sq, seed ^ 0x5eed))
            })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(500))]

        #[test]
        fn round_trip_resolution_and_distance((p, q) in pair()) {
            let tol = Tolerance::default();
            let h = halmos_decompose(&p, &q, &tol).unwrap();
            let (p2, q2) = halmos_reconstruct(&h, &tol).unwrap();
            prop_assert!((p2.op() - p.op()).norm() <= 1e-8);
            prop_assert!((q2.op() - q.op()).norm() <= 1e-8);
            let sum = &(&h.a * &h.a) + &(&h.b * &h.b);
            prop_assert!((&sum - h.e1.op()).norm() <= 1e-8);
            let parts = [&h.p_and_q, &h.p_and_qperp, &h.pperp_and_q, &h.pperp_and_qperp, &h.e1, &h.e2];
            let total = parts.iter().fold(Operator::zero(p.shape()), |acc, x| &acc + x.op());
            prop_assert!((&total - &Operator::identity(p.shape())).norm() <= 1e-8);
            let d = distance(&p, &q).unwrap();
            prop_assert!((distance_via_halmos(&h) - d).abs() <= 1e-8);
            prop_assert!(h.angles.iter().all(|&t| t > 0.0 && t < FRAC_PI_2));
        }
    }
}
