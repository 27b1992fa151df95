//! Midpoint sets, unit-speed geodesics and the relations △ and ♯.
//!
//! For orthogonal `e`, `f` with a partial isometry `v` (`vv* = e`,
//! `v*v = f`), every projection at distance `1/√2` from both is
//! `(e + uv + v*u* + f)/2` for a unitary `u` of the corner `eMe`, and the
//! path `cos²θ e + cosθ sinθ (uv + v*u*) + sin²θ f` joins `e` to `f` with
//! `‖γ(θ₁) − γ(θ₂)‖ = sin|θ₁ − θ₂|`. Blocks where the complements are
//! orthogonal instead are handled by complementing.

use std::f64::consts::{FRAC_1_SQRT_2, FRAC_PI_2, FRAC_PI_8};

use rand::Rng;

use crate::algebra::{
    meet, mv_compare, partial_isometry, validate_projection, AlgebraShape, CentralProjection,
    MvRelation, Operator, Projection,
};
use crate::error::{Error, Result};
use crate::halmos::halmos_decompose;
use crate::linalg::{CMatrix, Tolerance, C64, I};
use crate::sampling::haar_unitary_with;

/// Tolerance on the distance `1/√2` for midpoint membership, and on the
/// metric identity of certified paths.
pub const MIDPOINT_TOL: f64 = 1e-8;

/// Largest block count for the exhaustive central-mask search.
pub const MAX_TRIANGLE_BLOCKS: usize = 16;

/// Rotation of an equivalent pair `p1 ∼ q1` by a small angle `φ(θ)` that
/// vanishes at `0`, `π/4` and `π/2`; added to a path it yields a second
/// path with the same endpoints and midpoint.
#[derive(Debug, Clone, PartialEq)]
pub struct Excursion {
    pub p1: Projection,
    pub q1: Projection,
    /// `w w* = p1`, `w* w = q1`.
    pub w: Operator,
}

impl Excursion {
    fn angle(theta: f64) -> f64 {
        (4.0 * theta).sin() / 4.0
    }

    fn delta(&self, theta: f64) -> Operator {
        let phi = Self::angle(theta);
        let (c, s) = (phi.cos(), phi.sin());
        let rotated = &(&self.p1.op().scale_re(c * c) + &(&self.w + &self.w.adjoint()).scale_re(c * s))
            + &self.q1.op().scale_re(s * s);
        &rotated - self.p1.op()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GeodesicFrame {
    pub e: Projection,
    pub f: Projection,
    pub v: Operator,
    /// Unitary of the corner `eMe`.
    pub u: Operator,
    /// Part of the path held constant, orthogonal to `e + f`.
    pub fixed: Operator,
    /// Blocks on which the path is `1 − γ`; there `e`, `f` are the
    /// complements of the endpoints.
    pub complement: Vec<bool>,
    pub excursion: Option<Excursion>,
}

impl GeodesicFrame {
    /// Frame for orthogonal `e`, `f` with no fixed part.
    pub fn orthogonal(e: Projection, f: Projection, v: Operator, u: Operator, tol: &Tolerance) -> Result<Self> {
        let b = e.shape().num_blocks();
        let fixed = Operator::zero(e.shape());
        let frame = GeodesicFrame { e, f, v, u, fixed, complement: vec![false; b], excursion: None };
        frame.check(tol)?;
        Ok(frame)
    }

    pub fn shape(&self) -> &AlgebraShape {
        self.e.shape()
    }

    pub fn check(&self, tol: &Tolerance) -> Result<()> {
        check_orthogonal_frame(&self.e, &self.f, &self.v, tol)?;
        check_corner_unitary(&self.u, &self.e, tol).map_err(Error::InvariantViolation)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TriangleWitness {
    pub r: CentralProjection,
}

fn residual(a: &Operator, b: &Operator) -> f64 {
    (a - b).norm()
}

fn check_orthogonal_frame(e: &Projection, f: &Projection, v: &Operator, tol: &Tolerance) -> Result<()> {
    e.op().check_shape(f.op())?;
    e.op().check_shape(v)?;
    if !e.is_orthogonal(f, tol) {
        return Err(Error::Precondition("endpoints are not orthogonal".into()));
    }
    if residual(&(v * &v.adjoint()), e.op()) > tol.eq_abs
        || residual(&(&v.adjoint() * v), f.op()) > tol.eq_abs
    {
        return Err(Error::Precondition("v does not carry e onto f".into()));
    }
    Ok(())
}

fn check_corner_unitary(u: &Operator, e: &Projection, tol: &Tolerance) -> std::result::Result<(), String> {
    if u.shape() != e.shape() {
        return Err("unitary has the wrong shape".into());
    }
    let ut = u.adjoint();
    let in_corner = residual(&(&(e.op() * u) * e.op()), u) <= tol.eq_abs;
    if !in_corner
        || residual(&(u * &ut), e.op()) > tol.eq_abs
        || residual(&(&ut * u), e.op()) > tol.eq_abs
    {
        return Err("u is not a unitary of the corner".into());
    }
    Ok(())
}

/// Membership in `m(p, q)`: distance `1/√2` from both endpoints.
pub fn is_midpoint(e: &Projection, p: &Projection, q: &Projection) -> Result<bool> {
    e.op().check_shape(p.op())?;
    e.op().check_shape(q.op())?;
    if e.ranks() != p.ranks() || e.ranks() != q.ranks() {
        return Err(Error::SignatureMismatch(format!(
            "ranks {:?}, {:?}, {:?}",
            e.ranks(),
            p.ranks(),
            q.ranks()
        )));
    }
    let dp = (e.op() - p.op()).norm();
    let dq = (e.op() - q.op()).norm();
    Ok((dp - FRAC_1_SQRT_2).abs() <= MIDPOINT_TOL && (dq - FRAC_1_SQRT_2).abs() <= MIDPOINT_TOL)
}

pub fn midpoint_from_unitary(
    p: &Projection,
    q: &Projection,
    v: &Operator,
    u: &Operator,
    tol: &Tolerance,
) -> Result<Projection> {
    check_orthogonal_frame(p, q, v, tol)?;
    check_corner_unitary(u, p, tol).map_err(Error::Precondition)?;
    let uv = u * v;
    let sum = &(&(p.op() + &uv) + &uv.adjoint()) + q.op();
    validate_projection(&sum.scale_re(0.5), tol)
}

/// Inverse of [`midpoint_from_unitary`]: `u = 2 p e v*`.
pub fn unitary_from_midpoint(
    p: &Projection,
    q: &Projection,
    v: &Operator,
    e: &Projection,
    tol: &Tolerance,
) -> Result<Operator> {
    check_orthogonal_frame(p, q, v, tol)?;
    if !is_midpoint(e, p, q)? {
        return Err(Error::NotMidpoint("distance to an endpoint differs from 1/√2".into()));
    }
    let span = p.op() + q.op();
    if residual(&(&span * e.op()), e.op()) > tol.eq_abs {
        return Err(Error::NotMidpoint("not dominated by p + q".into()));
    }
    let u = (&(p.op() * e.op()) * &v.adjoint()).scale_re(2.0);
    check_corner_unitary(&u, p, tol).map_err(Error::NotMidpoint)?;
    Ok(u)
}

pub fn geodesic_eval(frame: &GeodesicFrame, theta: f64, tol: &Tolerance) -> Result<Projection> {
    if !theta.is_finite() || !(0.0..=FRAC_PI_2).contains(&theta) {
        return Err(Error::InvalidInput(format!("θ = {theta} outside [0, π/2]")));
    }
    let (c, s) = (theta.cos(), theta.sin());
    let uv = &frame.u * &frame.v;
    let mut op = &(&frame.e.op().scale_re(c * c) + &(&uv + &uv.adjoint()).scale_re(c * s))
        + &frame.f.op().scale_re(s * s);
    op = &op + &frame.fixed;
    if let Some(x) = &frame.excursion {
        op = &op + &x.delta(theta);
    }
    let op = op.map_blocks(|i, b| {
        if frame.complement[i] {
            CMatrix::identity(b.nrows(), b.nrows()) - b
        } else {
            b.clone()
        }
    });
    validate_projection(&op, tol)
}

/// Check `γ(0) = p`, `γ(π/4) = p0`, `γ(π/2) = q` and the metric identity on
/// a 9-point grid.
fn certify(frame: &GeodesicFrame, p: &Projection, q: &Projection, p0: &Projection, tol: &Tolerance) -> Result<()> {
    let grid: Vec<f64> = (0..9).map(|k| k as f64 * FRAC_PI_2 / 8.0).collect();
    let points = grid
        .iter()
        .map(|&t| geodesic_eval(frame, t, tol))
        .collect::<Result<Vec<_>>>()?;
    for (name, got, want) in [("γ(0)", &points[0], p), ("γ(π/4)", &points[4], p0), ("γ(π/2)", &points[8], q)] {
        let r = residual(got.op(), want.op());
        if r > MIDPOINT_TOL {
            return Err(Error::InvariantViolation(format!("{name} misses by {r:.3e}")));
        }
    }
    for i in 0..grid.len() {
        for j in i + 1..grid.len() {
            let d = residual(points[i].op(), points[j].op());
            let want = (grid[j] - grid[i]).sin();
            if (d - want).abs() > MIDPOINT_TOL {
                return Err(Error::InvariantViolation(format!(
                    "metric identity fails at ({:.4}, {:.4}): {d} vs {want}",
                    grid[i], grid[j]
                )));
            }
        }
    }
    Ok(())
}

/// Endpoints of the orthogonal problem on each block: the projections
/// themselves where `mask` is set, their complements elsewhere.
fn oriented(p: &Projection, mask: &[bool]) -> Projection {
    let flip: Vec<bool> = mask.iter().map(|m| !m).collect();
    p.complement_on(&flip)
}

/// The unique path from `p` to `q` through the midpoint `p0`.
pub fn geodesic_through(p: &Projection, q: &Projection, p0: &Projection, tol: &Tolerance) -> Result<GeodesicFrame> {
    let witness = triangle_relation(p, q, tol)?.ok_or(Error::NotTriangle)?;
    if !is_midpoint(p0, p, q)? {
        return Err(Error::NotMidpoint("distance to an endpoint differs from 1/√2".into()));
    }
    let mask = witness.r.mask();
    let e = oriented(p, mask);
    let f = oriented(q, mask);
    let m = oriented(p0, mask);
    let v = partial_isometry(&e, &f)?;
    let u = unitary_from_midpoint(&e, &f, &v, &m, tol)?;
    let frame = GeodesicFrame {
        fixed: Operator::zero(p.shape()),
        complement: mask.iter().map(|m| !m).collect(),
        excursion: None,
        e,
        f,
        v,
        u,
    };
    certify(&frame, p, q, p0, tol)?;
    Ok(frame)
}

/// Search central masks for `r` with `pr ⊥ qr` and `p⊥r⊥ ⊥ q⊥r⊥`. Masks
/// are tried in lexicographic order with `true` before `false`, block 0
/// most significant, so the all-true mask comes first.
pub fn triangle_relation(p: &Projection, q: &Projection, tol: &Tolerance) -> Result<Option<TriangleWitness>> {
    p.op().check_shape(q.op())?;
    let b = p.shape().num_blocks();
    if b > MAX_TRIANGLE_BLOCKS {
        return Err(Error::Capacity(format!(
            "{b} blocks exceed the mask search limit of {MAX_TRIANGLE_BLOCKS}"
        )));
    }
    let (pc, qc) = (p.complement(), q.complement());
    let orth: Vec<bool> = (0..b).map(|i| (p.block(i) * q.block(i)).norm() <= tol.eq_abs).collect();
    let co_orth: Vec<bool> = (0..b).map(|i| (pc.block(i) * qc.block(i)).norm() <= tol.eq_abs).collect();
    let full = (1u32 << b) - 1;
    for k in 0..=full {
        let bits = full - k;
        let mask: Vec<bool> = (0..b).map(|i| bits >> (b - 1 - i) & 1 == 1).collect();
        if (0..b).all(|i| if mask[i] { orth[i] } else { co_orth[i] }) {
            return Ok(Some(TriangleWitness { r: CentralProjection::new(p.shape().clone(), mask)? }));
        }
    }
    Ok(None)
}

/// `p1 ♯ p2`: `p1 ⊥ p2` and `p1 ≺ 1 − p1 − p2`.
pub fn sharp_relation(p1: &Projection, p2: &Projection, tol: &Tolerance) -> Result<bool> {
    p1.op().check_shape(p2.op())?;
    if !p1.is_orthogonal(p2, tol) {
        return Ok(false);
    }
    let rest = validate_projection(&(&Operator::identity(p1.shape()) - &(p1.op() + p2.op())), tol)?;
    Ok(matches!(mv_compare(p1, &rest)?, MvRelation::Less | MvRelation::Equivalent))
}

/// Two distinct unit-speed paths from `p` to `q` through
/// `p0 = (p∧q⊥ + v + v* + p⊥∧q)/2 + p∧q`, for commuting `p`, `q` and
/// equivalent `p1 ≤ p∧q`, `q1 ≤ p⊥∧q⊥`.
pub fn nonuniqueness_witness(
    p: &Projection,
    q: &Projection,
    p1: &Projection,
    q1: &Projection,
    tol: &Tolerance,
) -> Result<(GeodesicFrame, GeodesicFrame)> {
    for x in [q, p1, q1] {
        p.op().check_shape(x.op())?;
    }
    if residual(&(p.op() * q.op()), &(q.op() * p.op())) > tol.eq_abs {
        return Err(Error::Precondition("p and q do not commute".into()));
    }
    let (pc, qc) = (p.complement(), q.complement());
    let p_and_q = meet(p, q, tol)?;
    let p_and_qc = meet(p, &qc, tol)?;
    let pc_and_q = meet(&pc, q, tol)?;
    let pc_and_qc = meet(&pc, &qc, tol)?;
    if p1.is_zero() || q1.is_zero() {
        return Err(Error::Precondition("p1 and q1 must be nonzero".into()));
    }
    if !p1.is_below(&p_and_q, tol) || !q1.is_below(&pc_and_qc, tol) {
        return Err(Error::Precondition("need p1 ≤ p∧q and q1 ≤ p⊥∧q⊥".into()));
    }
    if mv_compare(p1, q1)? != MvRelation::Equivalent {
        return Err(Error::Precondition("p1 and q1 are not equivalent".into()));
    }
    if mv_compare(&p_and_qc, &pc_and_q)? != MvRelation::Equivalent {
        return Err(Error::Precondition("p∧q⊥ and p⊥∧q are not equivalent".into()));
    }
    let v = partial_isometry(&p_and_qc, &pc_and_q)?;
    let p0_op = &(&(&(p_and_qc.op() + &v) + &v.adjoint()) + pc_and_q.op()).scale_re(0.5) + p_and_q.op();
    let p0 = validate_projection(&p0_op, tol)?;

    let first = GeodesicFrame {
        u: p_and_qc.op().clone(),
        fixed: p_and_q.op().clone(),
        complement: vec![false; p.shape().num_blocks()],
        excursion: None,
        e: p_and_qc,
        f: pc_and_q,
        v,
    };
    let mut second = first.clone();
    second.excursion = Some(Excursion { w: partial_isometry(p1, q1)?, p1: p1.clone(), q1: q1.clone() });
    certify(&first, p, q, &p0, tol)?;
    certify(&second, p, q, &p0, tol)?;
    let gap = residual(
        geodesic_eval(&first, FRAC_PI_8, tol)?.op(),
        geodesic_eval(&second, FRAC_PI_8, tol)?.op(),
    );
    if gap <= 1e-3 {
        return Err(Error::InvariantViolation(format!("paths separate by only {gap:.3e}")));
    }
    Ok((first, second))
}

/// For `‖p1 − p2‖ < 1` of equal signature, projections `e`, `f` with
/// `p1, p2 ∈ m(e, f)`; per block either `e ⊥ f` or `e⊥ ⊥ f⊥`.
pub fn close_pair_frame(p1: &Projection, p2: &Projection, tol: &Tolerance) -> Result<(Projection, Projection)> {
    p1.op().check_shape(p2.op())?;
    if p1.ranks() != p2.ranks() {
        return Err(Error::SignatureMismatch(format!("ranks {:?} vs {:?}", p1.ranks(), p2.ranks())));
    }
    let d = (p1.op() - p2.op()).norm();
    if d >= 1.0 - tol.eq_abs {
        return Err(Error::Precondition(format!("‖p1 − p2‖ = {d} is not below 1")));
    }
    let direct = halmos_decompose(p1, p2, tol)?;
    let dual = halmos_decompose(&p1.complement(), &p2.complement(), tol)?;
    let shape = p1.shape();
    let mut e_blocks = Vec::new();
    let mut f_blocks = Vec::new();
    for i in 0..shape.num_blocks() {
        let small = direct.p_and_q.ranks()[i] <= direct.pperp_and_qperp.ranks()[i];
        let h = if small { &direct } else { &dual };
        let n = shape.dim(i);
        let top = h.p_and_q.basis(i);
        let bottom = h.pperp_and_qperp.basis(i);
        let k = top.ncols();
        let w = if k == 0 { CMatrix::zeros(n, n) } else { &top * bottom.columns(0, k).adjoint() };
        let ww = w.adjoint() * &w;
        let vg = h.v.block(i);
        let base = h.p_and_q.block(i) + &ww + h.e1.block(i) + h.e2.block(i);
        let twist = (vg - vg.adjoint()) * I;
        let half = C64::new(0.5, 0.0);
        let mut e = (&base + &w + w.adjoint() + &twist) * half;
        let mut f = (&base - &w - w.adjoint() - &twist) * half;
        if !small {
            let id = CMatrix::identity(n, n);
            e = &id - e;
            f = &id - f;
        }
        e_blocks.push(e);
        f_blocks.push(f);
    }
    let e = validate_projection(&Operator::new(shape.clone(), e_blocks)?, tol)?;
    let f = validate_projection(&Operator::new(shape.clone(), f_blocks)?, tol)?;
    Ok((e, f))
}

/// Haar-random unitary of the corner `eMe`.
pub fn random_corner_unitary<R: Rng + ?Sized>(e: &Projection, rng: &mut R) -> Operator {
    let blocks = (0..e.shape().num_blocks())
        .map(|i| {
            let w = e.basis(i);
            let n = e.shape().dim(i);
            if w.ncols() == 0 {
                CMatrix::zeros(n, n)
            } else {
                &w * haar_unitary_with(w.ncols(), rng) * w.adjoint()
            }
        })
        .collect();
    Operator::new(e.shape().clone(), blocks).expect("blocks follow the shape")
}

/// `count` midpoints of `p`, `q` from Haar-random corner unitaries.
pub fn sample_midpoints<R: Rng + ?Sized>(
    p: &Projection,
    q: &Projection,
    count: usize,
    rng: &mut R,
    tol: &Tolerance,
) -> Result<Vec<Projection>> {
    let witness = triangle_relation(p, q, tol)?.ok_or(Error::NotTriangle)?;
    let mask = witness.r.mask();
    let e = oriented(p, mask);
    let f = oriented(q, mask);
    let v = partial_isometry(&e, &f)?;
    (0..count)
        .map(|_| {
            let u = random_corner_unitary(&e, rng);
            Ok(oriented(&midpoint_from_unitary(&e, &f, &v, &u, tol)?, mask))
        })
        .collect()
}

/// Corner unitary read back from an interior point of the path:
/// `u = e γ(θ) v* / (cosθ sinθ)` on the oriented blocks.
pub fn unitary_at(frame: &GeodesicFrame, point: &Projection, theta: f64) -> Operator {
    let m = oriented(point, &frame.complement.iter().map(|c| !c).collect::<Vec<_>>());
    let scale = 1.0 / (theta.cos() * theta.sin());
    (&(frame.e.op() * m.op()) * &frame.v.adjoint()).scale_re(scale)
}


#[cfg(test)]
mod props {
    use super::*;
    use crate::algebra::GrassmannSignature;
    use rand::Rng;
    use crate::sampling::{random_projection_with, rng_from_seed};
    use proptest::prelude::*;

    /// Random pair in the triangle relation: per block either `p ⊥ q` or
    /// `p⊥ ⊥ q⊥`, with equal signatures.
    fn triangle_pair(seed: u64, dims: &[(usize, bool)]) -> (Projection, Projection) {
        let mut rng = rng_from_seed(seed);
        let shape = AlgebraShape::new(dims.iter().map(|d| d.0).collect()).unwrap();
        let mut pb = Vec::new();
        let mut qb = Vec::new();
        for &(n, orth) in dims {
            let k = 1 + rng.random_range(0..n / 2);
            let u = haar_unitary_with(n, &mut rng);
            let a = u.columns(0, k).into_owned();
            let b = u.columns(k, k).into_owned();
            let (mut x, mut y) = (crate::linalg::projector(&a, n), crate::linalg::projector(&b, n));
            if !orth {
                x = CMatrix::identity(n, n) - x;
                y = CMatrix::identity(n, n) - y;
            }
            pb.push(x);
            qb.push(y);
        }
        let t = Tolerance::default();
        let p = validate_projection(&Operator::new(shape.clone(), pb).unwrap(), &t).unwrap();
        let q = validate_projection(&Operator::new(shape, qb).unwrap(), &t).unwrap();
        (p, q)
    }

    fn dims() -> impl Strategy<Value = Vec<(usize, bool)>> {
        prop::collection::vec((2usize..=7, any::<bool>()), 1..=3)
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(40))]

        #[test]
        fn metric_identity_on_random_frames(seed in any::<u64>(), dims in dims(), thetas in prop::collection::vec((0.0..FRAC_PI_2, 0.0..FRAC_PI_2), 100)) {
            let t = Tolerance::default();
            let (p, q) = triangle_pair(seed, &dims);
            let mut rng = rng_from_seed(seed ^ 1);
            let m = sample_midpoints(&p, &q, 1, &mut rng, &t).unwrap().remove(0);
            let frame = geodesic_through(&p, &q, &m, &t).unwrap();
            for (a, b) in thetas {
                let d = (geodesic_eval(&frame, a, &t).unwrap().op() - geodesic_eval(&frame, b, &t).unwrap().op()).norm();
                prop_assert!((d - (a - b).abs().sin()).abs() <= 1e-8);
            }
        }

        #[test]
        fn midpoint_bijection(seed in any::<u64>(), dims in dims()) {
            let t = Tolerance::default();
            let (p, q) = triangle_pair(seed, &dims.iter().map(|d| (d.0, true)).collect::<Vec<_>>());
            let v = partial_isometry(&p, &q).unwrap();
            let mut rng = rng_from_seed(seed ^ 2);
            let u = random_corner_unitary(&p, &mut rng);
            let m = midpoint_from_unitary(&p, &q, &v, &u, &t).unwrap();
            prop_assert!(is_midpoint(&m, &p, &q).unwrap());
            prop_assert!(m.is_below(&validate_projection(&(p.op() + q.op()), &t).unwrap(), &t));
            let back = unitary_from_midpoint(&p, &q, &v, &m, &t).unwrap();
            prop_assert!((&back - &u).norm() <= 1e-9);
            let again = midpoint_from_unitary(&p, &q, &v, &back, &t).unwrap();
            prop_assert!((again.op() - m.op()).norm() <= 1e-9);
        }

        #[test]
        fn triangle_iff_unique_frames(seed in any::<u64>(), dims in dims(), scramble in any::<bool>()) {
            let t = Tolerance::default();
            let (p, mut q) = triangle_pair(seed, &dims);
            if scramble {
                q = random_projection_with(&GrassmannSignature::new(q.shape().clone(), q.ranks().to_vec()).unwrap(), &mut rng_from_seed(seed ^ 3));
            }
            let mut rng = rng_from_seed(seed ^ 4);
            match triangle_relation(&p, &q, &t).unwrap() {
                Some(_) => {
                    for m in sample_midpoints(&p, &q, 10, &mut rng, &t).unwrap() {
                        let frame = geodesic_through(&p, &q, &m, &t).unwrap();
                        let g = geodesic_eval(&frame, FRAC_PI_8, &t).unwrap();
                        prop_assert!((&unitary_at(&frame, &g, FRAC_PI_8) - &frame.u).norm() <= 1e-8);
                    }
                }
                None => {
                    prop_assert!(matches!(geodesic_through(&p, &q, &p, &t), Err(Error::NotTriangle)));
                }
            }
        }
    }
}
