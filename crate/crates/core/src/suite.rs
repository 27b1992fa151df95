//! The acceptance suite: eight seeded property checks shared by the
//! `acceptance` test target and `projlat selftest`.
//!
//! Trials run in parallel, each from its own generator seeded with
//! `seed + trial index`, so results do not depend on scheduling.

use std::f64::consts::{FRAC_1_SQRT_2, FRAC_PI_2, FRAC_PI_8};
use std::fmt;

use rand::Rng;
use rayon::prelude::*;

use crate::algebra::{distance, partial_isometry, validate_projection, AlgebraShape, GrassmannSignature, Operator, Projection};
use crate::error::{Error, Result};
use crate::halmos::{distance_via_halmos, halmos_decompose, halmos_reconstruct};
use crate::linalg::{CMatrix, Tolerance};
use crate::paths::{
    geodesic_eval, geodesic_through, is_midpoint, midpoint_from_unitary, nonuniqueness_witness,
    random_corner_unitary, sample_midpoints, triangle_relation, unitary_from_midpoint,
};
use crate::sampling::{haar_unitary_with, random_projection_with, rng_from_seed, SeededRng};
use crate::symmetry::{
    apply_factorization, factorize, induce_oracle, random_factorization, t1_eval, t2_eval,
    verify_factorization, FACTOR_TOL,
};

#[derive(Debug, Clone, Copy)]
pub struct SuiteConfig {
    pub seed: u64,
    /// Upper bound on trials per criterion; `None` runs the full counts.
    pub trials: Option<usize>,
    pub tol: Tolerance,
}

impl Default for SuiteConfig {
    fn default() -> Self {
        Self { seed: 0, trials: None, tol: Tolerance::default() }
    }
}

impl SuiteConfig {
    fn count(&self, full: usize) -> usize {
        self.trials.map_or(full, |t| t.min(full))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CriterionReport {
    pub id: u8,
    pub name: &'static str,
    pub trials: usize,
    pub failures: usize,
    pub max_residual: f64,
    pub threshold: f64,
    /// First error met, if any trial errored.
    pub note: Option<String>,
}

impl CriterionReport {
    pub fn pass(&self) -> bool {
        self.failures == 0 && self.trials > 0
    }
}

impl fmt::Display for CriterionReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "criterion {} {}: {} trials={} failures={} max_residual={:.3e} threshold={:.0e}",
            self.id,
            self.name,
            if self.pass() { "PASS" } else { "FAIL" },
            self.trials,
            self.failures,
            self.max_residual,
            self.threshold
        )?;
        if let Some(note) = &self.note {
            write!(f, " note=\"{note}\"")?;
        }
        Ok(())
    }
}

/// One trial's worst residual, whether it met its own conditions, and the
/// error it hit, if any.
struct Trial {
    residual: f64,
    ok: bool,
    error: Option<String>,
}

impl Trial {
    fn measured(residual: f64, threshold: f64) -> Self {
        Trial { residual, ok: residual <= threshold, error: None }
    }
}

fn run(
    id: u8,
    name: &'static str,
    threshold: f64,
    cfg: &SuiteConfig,
    full: usize,
    trial: impl Fn(&mut SeededRng, usize) -> Result<Trial> + Sync,
) -> CriterionReport {
    let n = cfg.count(full);
    let outcomes: Vec<Trial> = (0..n)
        .into_par_iter()
        .map(|i| {
            let mut rng = rng_from_seed(cfg.seed.wrapping_add(i as u64));
            trial(&mut rng, i).unwrap_or_else(|e| Trial {
                residual: f64::INFINITY,
                ok: false,
                error: Some(format!("trial {i}: {e}")),
            })
        })
        .collect();
    CriterionReport {
        id,
        name,
        trials: n,
        failures: outcomes.iter().filter(|t| !t.ok).count(),
        max_residual: outcomes.iter().map(|t| t.residual).fold(0.0, f64::max),
        threshold,
        note: outcomes.iter().find_map(|t| t.error.clone()),
    }
}

fn signature(rng: &mut SeededRng, dims: Vec<usize>, proper: bool) -> GrassmannSignature {
    let ranks = dims
        .iter()
        .map(|&n| if proper { rng.random_range(1..n) } else { rng.random_range(0..=n) })
        .collect();
    GrassmannSignature::new(AlgebraShape::new(dims).expect("positive dims"), ranks).expect("ranks fit")
}

fn random_dims(rng: &mut SeededRng, lo: usize, hi: usize) -> Vec<usize> {
    let b = rng.random_range(1..=3);
    (0..b).map(|_| rng.random_range(lo..=hi)).collect()
}

/// Pair of projections with independent random signatures.
fn random_pair(rng: &mut SeededRng) -> (Projection, Projection) {
    let dims = random_dims(rng, 1, 12);
    let sp = signature(rng, dims.clone(), false);
    let sq = signature(rng, dims, false);
    (random_projection_with(&sp, rng), random_projection_with(&sq, rng))
}

/// Pair of equal signature with `p ⊥ q` on the blocks where `orth` is set
/// and `p⊥ ⊥ q⊥` elsewhere.
fn triangle_pair(rng: &mut SeededRng, dims: &[usize], orth: &[bool], tol: &Tolerance) -> Result<(Projection, Projection)> {
    let shape = AlgebraShape::new(dims.to_vec())?;
    let mut pb = Vec::new();
    let mut qb = Vec::new();
    for (&n, &o) in dims.iter().zip(orth) {
        let k = rng.random_range(1..=n / 2);
        let u = haar_unitary_with(n, rng);
        let mut x = crate::linalg::projector(&u.columns(0, k).into_owned(), n);
        let mut y = crate::linalg::projector(&u.columns(k, k).into_owned(), n);
        if !o {
            x = CMatrix::identity(n, n) - x;
            y = CMatrix::identity(n, n) - y;
        }
        pb.push(x);
        qb.push(y);
    }
    Ok((
        validate_projection(&Operator::new(shape.clone(), pb)?, tol)?,
        validate_projection(&Operator::new(shape, qb)?, tol)?,
    ))
}

pub fn halmos_round_trip(cfg: &SuiteConfig) -> CriterionReport {
    run(1, "halmos-round-trip", 1e-8, cfg, 500, |rng, _| {
        let (p, q) = random_pair(rng);
        let h = halmos_decompose(&p, &q, &cfg.tol)?;
        let (p2, q2) = halmos_reconstruct(&h, &cfg.tol)?;
        let rec = (p2.op() - p.op()).norm().max((q2.op() - q.op()).norm());
        let ab = (&(&(&h.a * &h.a) + &(&h.b * &h.b)) - h.e1.op()).norm();
        let parts = [&h.p_and_q, &h.p_and_qperp, &h.pperp_and_q, &h.pperp_and_qperp, &h.e1, &h.e2];
        let total = parts.iter().fold(Operator::zero(p.shape()), |acc, x| &acc + x.op());
        let res = (&total - &Operator::identity(p.shape())).norm();
        Ok(Trial::measured(rec.max(ab).max(res), 1e-8))
    })
}

pub fn distance_formula(cfg: &SuiteConfig) -> CriterionReport {
    run(2, "distance-formula", 1e-8, cfg, 500, |rng, _| {
        let (p, q) = random_pair(rng);
        let h = halmos_decompose(&p, &q, &cfg.tol)?;
        Ok(Trial::measured((distance_via_halmos(&h) - distance(&p, &q)?).abs(), 1e-8))
    })
}

pub fn geodesic_metric(cfg: &SuiteConfig) -> CriterionReport {
    run(3, "geodesic-metric-identity", 1e-8, cfg, 100, |rng, _| {
        let dims = random_dims(rng, 2, 8);
        let orth: Vec<bool> = dims.iter().map(|_| rng.random_bool(0.5)).collect();
        let (p, q) = triangle_pair(rng, &dims, &orth, &cfg.tol)?;
        let p0 = sample_midpoints(&p, &q, 1, rng, &cfg.tol)?.remove(0);
        let frame = geodesic_through(&p, &q, &p0, &cfg.tol)?;
        let mut worst: f64 = 0.0;
        for _ in 0..100 {
            let (a, b) = (rng.random_range(0.0..=FRAC_PI_2), rng.random_range(0.0..=FRAC_PI_2));
            let d = (geodesic_eval(&frame, a, &cfg.tol)?.op() - geodesic_eval(&frame, b, &cfg.tol)?.op()).norm();
            worst = worst.max((d - (a - b).abs().sin()).abs());
        }
        Ok(Trial::measured(worst, 1e-8))
    })
}

pub fn midpoint_bijection(cfg: &SuiteConfig) -> CriterionReport {
    run(4, "midpoint-bijection", 1e-9, cfg, 200, |rng, _| {
        let dims = random_dims(rng, 2, 8);
        let orth = vec![true; dims.len()];
        let (p, q) = triangle_pair(rng, &dims, &orth, &cfg.tol)?;
        let v = partial_isometry(&p, &q)?;
        let u = random_corner_unitary(&p, rng);
        let m = midpoint_from_unitary(&p, &q, &v, &u, &cfg.tol)?;
        let back = unitary_from_midpoint(&p, &q, &v, &m, &cfg.tol)?;
        let round = (&back - &u).norm();
        let on_sphere = is_midpoint(&m, &p, &q)?;
        let off = ((m.op() - p.op()).norm() - FRAC_1_SQRT_2).abs().max(((m.op() - q.op()).norm() - FRAC_1_SQRT_2).abs());
        Ok(Trial { residual: round, ok: round <= 1e-9 && on_sphere && off <= 1e-8, error: None })
    })
}

pub fn triangle_in_factors(cfg: &SuiteConfig) -> CriterionReport {
    let tol = cfg.tol;
    let mut report = run(5, "triangle-characterization", 1e-3, cfg, 200, |rng, i| {
        let n = rng.random_range(2..=8);
        let (p, q) = match i % 3 {
            0 | 1 => triangle_pair(rng, &[n], &[i % 3 == 0], &tol)?,
            _ => {
                let shape = AlgebraShape::new(vec![n])?;
                let (k, l) = (rng.random_range(0..=n), rng.random_range(0..=n));
                let sp = GrassmannSignature::new(shape.clone(), vec![k])?;
                let sq = GrassmannSignature::new(shape, vec![l])?;
                (random_projection_with(&sp, rng), random_projection_with(&sq, rng))
            }
        };
        let orth = (p.op() * q.op()).norm() <= tol.eq_abs;
        let co = (p.complement().op() * q.complement().op()).norm() <= tol.eq_abs;
        let found = triangle_relation(&p, &q, &tol)?.is_some();
        Ok(Trial { residual: 0.0, ok: found == (orth || co), error: None })
    });
    // non-uniqueness witnesses: the documented M_4 pair in a random basis
    let witnesses = run(5, "", 1e-3, cfg, 20, |rng, _| {
        let n = rng.random_range(4..=8);
        let u = haar_unitary_with(n, rng);
        let shape = AlgebraShape::new(vec![n])?;
        let span = |cols: &[usize]| {
            let w = CMatrix::from_fn(n, cols.len(), |r, c| u[(r, cols[c])]);
            Projection::from_bases(&shape, &[w])
        };
        let (p, q, p1, q1) = (span(&[0, 1]), span(&[1, 2]), span(&[1]), span(&[3]));
        let (a, b) = nonuniqueness_witness(&p, &q, &p1, &q1, &tol)?;
        let gap = (geodesic_eval(&a, FRAC_PI_8, &tol)?.op() - geodesic_eval(&b, FRAC_PI_8, &tol)?.op()).norm();
        Ok(Trial { residual: 0.0, ok: gap > 1e-3, error: None })
    });
    report.trials += witnesses.trials;
    report.failures += witnesses.failures;
    report.note = report.note.or(witnesses.note);
    report
}

fn factorization_dims(rng: &mut SeededRng) -> Vec<usize> {
    let bounds = [8, 6, 4];
    let b = rng.random_range(1..=3);
    let mut dims: Vec<usize> = Vec::with_capacity(b);
    for i in 0..b {
        // repeat an earlier size now and then so that blocks can be permuted
        let reuse = dims.iter().copied().filter(|&d| d <= bounds[i]).collect::<Vec<_>>();
        if !reuse.is_empty() && rng.random_bool(0.5) {
            dims.push(reuse[rng.random_range(0..reuse.len())]);
        } else {
            dims.push(rng.random_range(2..=bounds[i]));
        }
    }
    dims
}

pub fn main_theorem_round_trip(cfg: &SuiteConfig) -> CriterionReport {
    run(6, "normal-form-round-trip", FACTOR_TOL, cfg, 50, |rng, i| {
        let dims = factorization_dims(rng);
        let sig = signature(rng, dims, true);
        let f = random_factorization(sig.shape(), false, rng);
        let mut oracle = induce_oracle(&f, &sig, &cfg.tol)?;
        let rec = factorize(&mut oracle, &cfg.tol)?;
        let report = verify_factorization(&mut oracle, &rec.factorization, 200, cfg.seed.wrapping_add(i as u64), &cfg.tol)?;
        Ok(Trial::measured(report.max_residual, FACTOR_TOL))
    })
}

/// Spectral chunks of `p` are evaluated with `p0` of rank `k`; commuting
/// probes need `rank(p3 p4) ≤ n − k`, which is always possible when
/// `3k ≤ 2n`.
fn extension_signature(rng: &mut SeededRng) -> GrassmannSignature {
    let dims = random_dims(rng, 2, 6);
    let ranks = dims.iter().map(|&n| rng.random_range(1..=(2 * n / 3).min(n - 1))).collect();
    GrassmannSignature::new(AlgebraShape::new(dims).expect("positive dims"), ranks).expect("ranks fit")
}

/// Commuting `p3`, `p4` in the Grassmann space together with
/// `f ∼ p3 p4`, `f ≤ p3⊥`.
fn commuting_probe(rng: &mut SeededRng, sig: &GrassmannSignature) -> [Projection; 4] {
    let shape = sig.shape();
    let mut b3 = Vec::new();
    let mut b4 = Vec::new();
    let mut be = Vec::new();
    let mut bf = Vec::new();
    for (&n, &k) in shape.dims().iter().zip(sig.ranks()) {
        let u = haar_unitary_with(n, rng);
        let lo = (2 * k).saturating_sub(n);
        let overlap = rng.random_range(lo..=k.min(n - k));
        // columns: [0, k) = p3, [k - overlap, 2k - overlap) = p4
        let cols = |range: std::ops::Range<usize>| u.columns(range.start, range.len()).into_owned();
        b3.push(cols(0..k));
        b4.push(cols(k - overlap..2 * k - overlap));
        be.push(cols(k - overlap..k));
        // f: outside p3 ∨ p4 first, then inside p4 − p3
        let mut idx: Vec<usize> = (2 * k - overlap..n).collect();
        idx.extend(k..2 * k - overlap);
        bf.push(CMatrix::from_fn(n, overlap, |r, c| u[(r, idx[c])]));
    }
    [b3, b4, be, bf].map(|b| Projection::from_bases(shape, &b))
}

fn orthogonal_full_pair(rng: &mut SeededRng, shape: &AlgebraShape) -> (Projection, Projection) {
    let mut a = Vec::new();
    let mut b = Vec::new();
    for &n in shape.dims() {
        let u = haar_unitary_with(n, rng);
        let s = rng.random_range(0..=n);
        let t = rng.random_range(s..=n);
        a.push(u.columns(0, s).into_owned());
        b.push(u.columns(s, t - s).into_owned());
    }
    (Projection::from_bases(shape, &a), Projection::from_bases(shape, &b))
}

pub fn extension_correctness(cfg: &SuiteConfig) -> CriterionReport {
    let probes = cfg.count(100);
    run(7, "lattice-extension", FACTOR_TOL, cfg, 20, |rng, _| {
        let tol = &cfg.tol;
        let sig = extension_signature(rng);
        let f = random_factorization(sig.shape(), true, rng);
        let mut oracle = induce_oracle(&f, &sig, tol)?;
        let mut worst: f64 = 0.0;
        for _ in 0..probes {
            let any = signature(rng, sig.shape().dims().to_vec(), false);
            let p = random_projection_with(&any, rng);
            let got = t2_eval(&mut oracle, &p, tol)?;
            worst = worst.max((got.op() - apply_factorization(&f, &p, tol)?.op()).norm());
        }
        for _ in 0..probes {
            let (p, q) = orthogonal_full_pair(rng, sig.shape());
            let (tp, tq) = (t2_eval(&mut oracle, &p, tol)?, t2_eval(&mut oracle, &q, tol)?);
            worst = worst.max((tp.op() * tq.op()).norm());
        }
        for _ in 0..probes {
            let [p3, p4, e, fr] = commuting_probe(rng, &sig);
            let t1 = t1_eval(&mut oracle, &e, &p3, &fr, tol)?;
            let prod = oracle.query(&p3)?.op() * oracle.query(&p4)?.op();
            worst = worst.max((t1.op() - &prod).norm());
        }
        Ok(Trial::measured(worst, FACTOR_TOL))
    })
}

/// All `(N, k, keep)` with `2 ≤ N ≤ 8`, `0 < k < N`, `2k ≠ N`.
fn rank_bookkeeping_cases() -> Vec<(usize, usize, bool)> {
    let mut cases = Vec::new();
    for n in 2..=8 {
        for k in (1..n).filter(|&k| 2 * k != n) {
            for keep in [false, true] {
                cases.push((n, k, keep));
            }
        }
    }
    cases
}

pub fn rank_bookkeeping(cfg: &SuiteConfig) -> CriterionReport {
    let cases = rank_bookkeeping_cases();
    run(8, "complement-rank-bookkeeping", FACTOR_TOL, cfg, cases.len(), |rng, i| {
        let tol = &cfg.tol;
        let (n, k, keep) = cases[i];
        let shape = AlgebraShape::new(vec![n])?;
        let mut f = random_factorization(&shape, true, rng);
        if !keep {
            f = crate::symmetry::Factorization::new(
                f.block_maps().to_vec(),
                crate::algebra::CentralProjection::none(&shape),
                tol,
            )?;
        }
        let sig = GrassmannSignature::new(shape.clone(), vec![k])?;
        let mut forward = induce_oracle(&f, &sig, tol)?;
        let image_rank = forward.target().ranks()[0];
        let fwd = factorize(&mut forward, tol)?;
        let dual_sig = forward.target().clone();
        let mut backward = induce_oracle(&f.inverse(), &dual_sig, tol)?;
        let bwd = factorize(&mut backward, tol)?;
        let (s1, s2) = (fwd.factorization.r().mask()[0], bwd.factorization.r().mask()[0]);
        let r1 = verify_factorization(&mut forward, &fwd.factorization, 50, i as u64, tol)?;
        let r2 = verify_factorization(&mut backward, &bwd.factorization, 50, i as u64, tol)?;
        let ranks_ok = image_rank == if keep { k } else { n - k } && backward.target().ranks()[0] == k;
        let flags_ok = s1 == keep && s2 == keep;
        let residual = r1.max_residual.max(r2.max_residual);
        if !ranks_ok || !flags_ok {
            return Err(Error::InvariantViolation(format!(
                "N={n} k={k}: image rank {image_rank}, flags ({s1}, {s2}), expected {keep}"
            )));
        }
        Ok(Trial::measured(residual, FACTOR_TOL))
    })
}

/// Run all eight criteria in order.
pub fn run_all(cfg: &SuiteConfig) -> Vec<CriterionReport> {
    vec![
        halmos_round_trip(cfg),
        distance_formula(cfg),
        geodesic_metric(cfg),
        midpoint_bijection(cfg),
        triangle_in_factors(cfg),
        main_theorem_round_trip(cfg),
        extension_correctness(cfg),
        rank_bookkeeping(cfg),
    ]
}
