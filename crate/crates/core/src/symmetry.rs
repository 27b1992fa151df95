//! Surjective isometries between Grassmann spaces in normal form
//! `T(p) = J(p) r + J(1 − p)(1 − r)`, where `J` permutes blocks of equal
//! size and acts on each by `x ↦ u x u*` or `x ↦ u x̄ u*`.
//!
//! [`factorize`] recovers such a form from black-box queries; [`t1_eval`]
//! and [`t2_eval`] evaluate the extension of an orthogonality-preserving
//! map to the whole projection lattice.

use std::collections::HashSet;
use std::fs;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::algebra::{
    join, mv_compare, validate_projection, AlgebraShape, CentralProjection, GrassmannSignature,
    MvRelation, Operator, Projection,
};
use crate::error::{Error, Result};
use crate::linalg::{self, CMatrix, Tolerance, C64, I};
use crate::sampling::{haar_unitary_with, random_projection_with, rng_from_seed};

/// Residual below which a recovered or supplied normal form is accepted.
pub const FACTOR_TOL: f64 = 1e-7;

/// Fixed seed for the random consistency probes of [`factorize`] and the
/// alternative choices of [`t2_eval`]; keeps the probe set a function of the
/// source signature alone.
const PROBE_SEED: u64 = 0x0b5e_55ed;

/// Random full-space checks issued per block during recovery.
const BLOCK_CHECKS: usize = 4;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlockSymmetry {
    pub target_block: usize,
    pub antilinear: bool,
    #[serde(with = "matrix_repr")]
    pub u: CMatrix,
}

impl BlockSymmetry {
    /// `u x u*`, or `u x̄ u*` when antilinear.
    pub fn apply(&self, x: &CMatrix) -> CMatrix {
        let x = if self.antilinear { linalg::conjugate(x) } else { x.clone() };
        linalg::hermitian_part(&(&self.u * x * self.u.adjoint()))
    }
}

mod matrix_repr {
    use super::{CMatrix, C64};
    use serde::{de::Error as _, Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(m: &CMatrix, s: S) -> Result<S::Ok, S::Error> {
        let rows: Vec<Vec<[f64; 2]>> = (0..m.nrows())
            .map(|r| (0..m.ncols()).map(|c| [m[(r, c)].re, m[(r, c)].im]).collect())
            .collect();
        rows.serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<CMatrix, D::Error> {
        let rows = Vec::<Vec<[f64; 2]>>::deserialize(d)?;
        let n = rows.len();
        if n == 0 || rows.iter().any(|r| r.len() != n) {
            return Err(D::Error::custom("matrix must be square and nonempty"));
        }
        let entries = rows.into_iter().flatten().map(|[re, im]| C64::new(re, im));
        Ok(CMatrix::from_row_iterator(n, n, entries))
    }
}

/// Normal form `T(p) = J(p) r + J(p⊥) r⊥`; `r` lives on the target shape.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "FactorizationRepr", into = "FactorizationRepr")]
pub struct Factorization {
    block_maps: Vec<BlockSymmetry>,
    r: CentralProjection,
}

#[derive(Serialize, Deserialize)]
struct FactorizationRepr {
    target_shape: AlgebraShape,
    block_maps: Vec<BlockSymmetry>,
    r: Vec<bool>,
}

impl TryFrom<FactorizationRepr> for Factorization {
    type Error = Error;
    fn try_from(x: FactorizationRepr) -> Result<Self> {
        let r = CentralProjection::new(x.target_shape, x.r)?;
        Factorization::new(x.block_maps, r, &Tolerance::default())
    }
}

impl From<Factorization> for FactorizationRepr {
    fn from(f: Factorization) -> Self {
        FactorizationRepr {
            target_shape: f.r.shape().clone(),
            r: f.r.mask().to_vec(),
            block_maps: f.block_maps,
        }
    }
}

impl Factorization {
    pub fn new(block_maps: Vec<BlockSymmetry>, r: CentralProjection, tol: &Tolerance) -> Result<Self> {
        let b = r.shape().num_blocks();
        if block_maps.len() != b {
            return Err(Error::InvalidInput(format!(
                "{} block maps for {b} target blocks",
                block_maps.len()
            )));
        }
        let targets: HashSet<usize> = block_maps.iter().map(|m| m.target_block).collect();
        if targets.len() != b || targets.iter().any(|&t| t >= b) {
            return Err(Error::InvalidInput("targets are not a permutation of the blocks".into()));
        }
        for (i, m) in block_maps.iter().enumerate() {
            let n = r.shape().dim(m.target_block);
            if m.u.nrows() != n || m.u.ncols() != n {
                return Err(Error::InvalidInput(format!(
                    "block {i}: conjugator is {}x{}, target block has size {n}",
                    m.u.nrows(),
                    m.u.ncols()
                )));
            }
            linalg::check_finite(&m.u)?;
            let defect = linalg::norm(&(m.u.adjoint() * &m.u - CMatrix::identity(n, n)));
            if defect > tol.eq_abs {
                return Err(Error::InvalidInput(format!(
                    "block {i}: conjugator is not unitary (defect {defect:.3e})"
                )));
            }
        }
        Ok(Self { block_maps, r })
    }

    pub fn identity(shape: &AlgebraShape) -> Self {
        let block_maps = shape
            .dims()
            .iter()
            .enumerate()
            .map(|(i, &n)| BlockSymmetry { target_block: i, antilinear: false, u: CMatrix::identity(n, n) })
            .collect();
        Self { block_maps, r: CentralProjection::all(shape) }
    }

    pub fn block_maps(&self) -> &[BlockSymmetry] {
        &self.block_maps
    }

    pub fn r(&self) -> &CentralProjection {
        &self.r
    }

    pub fn source_shape(&self) -> AlgebraShape {
        AlgebraShape::new(self.block_maps.iter().map(|m| m.u.ncols()).collect())
            .expect("block maps are nonempty and square")
    }

    pub fn target_shape(&self) -> &AlgebraShape {
        self.r.shape()
    }

    /// Complement flag of the target block fed by source block `i`.
    pub fn keeps(&self, i: usize) -> bool {
        self.r.mask()[self.block_maps[i].target_block]
    }

    /// Image signature of `sig`: `k_i` where `r` is set, `n_i − k_i` elsewhere.
    pub fn image_signature(&self, sig: &GrassmannSignature) -> Result<GrassmannSignature> {
        if sig.shape() != &self.source_shape() {
            return Err(Error::ShapeMismatch {
                left: sig.shape().dims().to_vec(),
                right: self.source_shape().dims().to_vec(),
            });
        }
        let mut ranks = vec![0; self.block_maps.len()];
        for (i, m) in self.block_maps.iter().enumerate() {
            let (n, k) = (sig.shape().dim(i), sig.ranks()[i]);
            ranks[m.target_block] = if self.keeps(i) { k } else { n - k };
        }
        GrassmannSignature::new(self.target_shape().clone(), ranks)
    }

    /// The inverse map, again in normal form.
    pub fn inverse(&self) -> Factorization {
        let source = self.source_shape();
        let b = self.block_maps.len();
        let mut maps: Vec<Option<BlockSymmetry>> = vec![None; b];
        let mut mask = vec![false; b];
        for (i, m) in self.block_maps.iter().enumerate() {
            let u = if m.antilinear { m.u.transpose() } else { m.u.adjoint() };
            mask[i] = self.keeps(i);
            maps[m.target_block] = Some(BlockSymmetry { target_block: i, antilinear: m.antilinear, u });
        }
        Factorization {
            block_maps: maps.into_iter().map(|m| m.expect("targets form a permutation")).collect(),
            r: CentralProjection::new(source, mask).expect("mask matches the source shape"),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("factorization serialization is infallible")
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }
}

/// `x ↦ J(x) r + J(x⊥) r⊥` on any projection of the source algebra.
pub fn apply_factorization(f: &Factorization, p: &Projection, tol: &Tolerance) -> Result<Projection> {
    let source = f.source_shape();
    if p.shape() != &source {
        return Err(Error::ShapeMismatch { left: p.shape().dims().to_vec(), right: source.dims().to_vec() });
    }
    let mut blocks = vec![CMatrix::zeros(0, 0); f.block_maps.len()];
    for (i, m) in f.block_maps.iter().enumerate() {
        let j = m.apply(p.block(i));
        blocks[m.target_block] = if f.keeps(i) {
            j
        } else {
            CMatrix::identity(j.nrows(), j.nrows()) - j
        };
    }
    validate_projection(&Operator::new(f.target_shape().clone(), blocks)?, tol)
}

/// Rotate `u` by a global phase so that the first nonzero entry of its first
/// column is real and positive.
pub fn canonical_phase(u: &CMatrix) -> CMatrix {
    let scale = u.column(0).iter().map(|z| z.norm()).fold(0.0, f64::max);
    match u.column(0).iter().find(|z| z.norm() > 1e-6 * scale.max(1e-300)) {
        Some(z) => u * (z.conj() / z.norm()),
        None => u.clone(),
    }
}

/// A uniformly random normal form on `shape`: blocks are permuted among
/// those of equal size, each block gets a Haar conjugator and a random
/// (anti)linearity, and `r` is random unless `keep_all` is set.
pub fn random_factorization<R: Rng + ?Sized>(shape: &AlgebraShape, keep_all: bool, rng: &mut R) -> Factorization {
    let b = shape.num_blocks();
    let mut targets: Vec<usize> = (0..b).collect();
    let mut sizes: Vec<usize> = shape.dims().to_vec();
    sizes.sort_unstable();
    sizes.dedup();
    for n in sizes {
        let group: Vec<usize> = (0..b).filter(|&i| shape.dim(i) == n).collect();
        let mut shuffled = group.clone();
        shuffled.shuffle(rng);
        for (from, to) in group.into_iter().zip(shuffled) {
            targets[from] = to;
        }
    }
    let block_maps = (0..b)
        .map(|i| BlockSymmetry {
            target_block: targets[i],
            antilinear: rng.random_bool(0.5),
            u: haar_unitary_with(shape.dim(i), rng),
        })
        .collect();
    let mask = (0..b).map(|_| keep_all || rng.random_bool(0.5)).collect();
    Factorization { block_maps, r: CentralProjection::new(shape.clone(), mask).expect("mask matches") }
}

type Query = Box<dyn FnMut(&Projection) -> Result<Projection> + Send>;

/// Black-box map between Grassmann spaces. Queries are sequential; every
/// call is counted, and [`factorize`] refuses to exceed the call budget.
pub struct MapOracle {
    source: GrassmannSignature,
    target: GrassmannSignature,
    query: Query,
    budget: usize,
    calls: usize,
}

impl std::fmt::Debug for MapOracle {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("MapOracle")
            .field("source", &self.source)
            .field("target", &self.target)
            .field("budget", &self.budget)
            .field("calls", &self.calls)
            .finish()
    }
}

impl MapOracle {
    pub fn new(
        source: GrassmannSignature,
        target: GrassmannSignature,
        query: impl FnMut(&Projection) -> Result<Projection> + Send + 'static,
    ) -> Self {
        let budget = Self::default_budget(source.shape());
        Self { source, target, query: Box::new(query), budget, calls: 0 }
    }

    /// `10 (B + Σ n_i²)`.
    pub fn default_budget(shape: &AlgebraShape) -> usize {
        10 * (shape.num_blocks() + shape.dims().iter().map(|n| n * n).sum::<usize>())
    }

    pub fn with_budget(mut self, budget: usize) -> Self {
        self.budget = budget;
        self
    }

    pub fn source(&self) -> &GrassmannSignature {
        &self.source
    }

    pub fn target(&self) -> &GrassmannSignature {
        &self.target
    }

    pub fn budget(&self) -> usize {
        self.budget
    }

    pub fn calls(&self) -> usize {
        self.calls
    }

    pub fn query(&mut self, p: &Projection) -> Result<Projection> {
        if !self.source.contains(p) {
            return Err(Error::SignatureMismatch(format!(
                "query has ranks {:?}, oracle expects {}",
                p.ranks(),
                self.source
            )));
        }
        self.calls += 1;
        let out = (self.query)(p)?;
        if !self.target.contains(&out) {
            return Err(Error::InconsistentOracle(format!(
                "answer has ranks {:?}, expected {}",
                out.ranks(),
                self.target
            )));
        }
        Ok(out)
    }
}

pub fn induce_oracle(f: &Factorization, sig: &GrassmannSignature, tol: &Tolerance) -> Result<MapOracle> {
    let target = f.image_signature(sig)?;
    let (f, tol) = (f.clone(), *tol);
    Ok(MapOracle::new(sig.clone(), target, move |p| apply_factorization(&f, p, &tol)))
}

/// File name stem used for the `n`-th probe of a recorded oracle.
pub fn probe_name(n: usize) -> String {
    format!("probe-{n:05}")
}

/// Oracle answering from `<name>.in.json` / `<name>.out.json` pairs in `dir`.
/// A query that matches no stored input fails with a missing-probe error
/// carrying the query as JSON.
pub fn file_oracle(dir: &Path, tol: &Tolerance) -> Result<MapOracle> {
    let mut inputs: Vec<PathBuf> = fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.to_string_lossy().ends_with(".in.json"))
        .collect();
    inputs.sort();
    if inputs.is_empty() {
        return Err(Error::InvalidInput(format!("no probe pairs in {}", dir.display())));
    }
    let mut pairs = Vec::with_capacity(inputs.len());
    for path in inputs {
        let out_path = PathBuf::from(path.to_string_lossy().replace(".in.json", ".out.json"));
        let load = |p: &Path| -> Result<Projection> {
            let op = Operator::from_json(&fs::read_to_string(p)?)?;
            validate_projection(&op, tol)
                .map_err(|e| Error::InvalidInput(format!("{}: {e}", p.display())))
        };
        pairs.push((load(&path)?, load(&out_path)?));
    }
    let source = pairs[0].0.signature();
    let target = pairs[0].1.signature();
    if pairs.iter().any(|(a, b)| a.signature() != source || b.signature() != target) {
        return Err(Error::InvalidInput("probe pairs mix several signatures".into()));
    }
    Ok(MapOracle::new(source, target, move |p: &Projection| {
        pairs
            .iter()
            .find(|(a, _)| (a.op() - p.op()).norm() <= 1e-9)
            .map(|(_, b)| b.clone())
            .ok_or_else(|| Error::MissingProbe(p.to_json()))
    }))
}

/// Outcome of [`factorize`].
#[derive(Debug, Clone)]
pub struct Recovery {
    pub factorization: Factorization,
    /// Target blocks on which the opposite complement flag also certifies
    /// a normal form (possible only when `k = n/2`).
    pub alternatives: Vec<usize>,
    pub calls: usize,
}

struct Prober<'a> {
    oracle: &'a mut MapOracle,
    used: usize,
    tol: Tolerance,
}

impl Prober<'_> {
    fn ask(&mut self, p: &Projection) -> Result<Projection> {
        if self.used >= self.oracle.budget {
            return Err(Error::BudgetExceeded { budget: self.oracle.budget });
        }
        self.used += 1;
        self.oracle.query(p)
    }
}

fn inconsistent(msg: impl Into<String>) -> Error {
    Error::InconsistentOracle(msg.into())
}

/// `base` with block `i` replaced by the projection `x`.
fn with_block(base: &Projection, i: usize, x: CMatrix, tol: &Tolerance) -> Result<Projection> {
    let mut blocks = base.op().blocks().to_vec();
    blocks[i] = x;
    validate_projection(&Operator::new(base.shape().clone(), blocks)?, tol)
}

fn unit(n: usize, entries: &[(usize, C64)]) -> nalgebra::DVector<C64> {
    let mut v = nalgebra::DVector::zeros(n);
    for &(i, z) in entries {
        v[i] = z;
    }
    let norm = v.norm();
    v / C64::new(norm, 0.0)
}

/// Recovery of one source block against a fixed target block and flag.
struct BlockProblem<'a> {
    base: &'a Projection,
    source: usize,
    target: usize,
    keep: bool,
}

impl BlockProblem<'_> {
    /// `J` applied to a rank-`k` block projection, read off one query.
    fn image(&self, prober: &mut Prober<'_>, x: CMatrix) -> Result<CMatrix> {
        let tol = prober.tol;
        let out = prober.ask(&with_block(self.base, self.source, x, &tol)?)?;
        let y = out.block(self.target).clone();
        Ok(if self.keep { y } else { CMatrix::identity(y.nrows(), y.nrows()) - y })
    }

    /// `J` on projections of rank `κ = min(k, n − k)`.
    fn image_small(&self, prober: &mut Prober<'_>, x: CMatrix) -> Result<CMatrix> {
        let n = x.nrows();
        let k = self.base.ranks()[self.source];
        if 2 * k <= n {
            self.image(prober, x)
        } else {
            let id = CMatrix::identity(n, n);
            Ok(&id - self.image(prober, &id - x)?)
        }
    }

    /// Unit vector spanning `J([x])`.
    fn line(&self, prober: &mut Prober<'_>, x: &nalgebra::DVector<C64>) -> Result<nalgebra::DVector<C64>> {
        let n = x.len();
        let k = self.base.ranks()[self.source];
        let kappa = k.min(n - k);
        let tol = prober.tol;
        let image = if kappa == 1 {
            self.image_small(prober, x * x.adjoint())?
        } else {
            let free: Vec<usize> = (0..n).filter(|&i| x[i].norm() == 0.0).collect();
            let span = |tail: &[usize]| {
                let mut w = CMatrix::zeros(n, tail.len() + 1);
                w.set_column(0, x);
                for (c, &i) in tail.iter().enumerate() {
                    w[(i, c + 1)] = linalg::ONE;
                }
                linalg::projector(&w, n)
            };
            let a = self.image_small(prober, span(&free[..kappa - 1]))?;
            let b = self.image_small(prober, span(&free[kappa - 1..2 * kappa - 2]))?;
            let both = linalg::eigen_columns(&(a + b), |l| (l - 2.0).abs() < tol.eq_abs);
            linalg::projector(&both, n)
        };
        let cols = linalg::eigen_columns(&image, |l| l > 0.5);
        if cols.ncols() != 1 {
            return Err(inconsistent(format!(
                "image of a line in block {} has rank {}",
                self.source,
                cols.ncols()
            )));
        }
        Ok(cols.column(0).into_owned())
    }

    fn solve(&self, prober: &mut Prober<'_>) -> Result<BlockSymmetry> {
        let n = self.base.shape().dim(self.source);
        let one = linalg::ONE;
        let ys = (0..n)
            .map(|m| self.line(prober, &unit(n, &[(m, one)])))
            .collect::<Result<Vec<_>>>()?;
        let mut u = CMatrix::zeros(n, n);
        u.set_column(0, &ys[0]);
        for m in 1..n {
            let z = self.line(prober, &unit(n, &[(0, one), (m, one)]))?;
            let (a, b) = (ys[0].dotc(&z), ys[m].dotc(&z));
            if a.norm() < 0.1 || b.norm() < 0.1 {
                return Err(inconsistent(format!("phase probe {m} of block {} is degenerate", self.source)));
            }
            let c = b / a;
            u.set_column(m, &(&ys[m] * (c / c.norm())));
        }
        let w = self.line(prober, &unit(n, &[(0, one), (1, I)]))?;
        let s = C64::new(std::f64::consts::FRAC_1_SQRT_2, 0.0);
        let lin = (u.column(0) + u.column(1) * I) * s;
        let anti = (u.column(0) - u.column(1) * I) * s;
        let (sl, sa) = (lin.dotc(&w).norm(), anti.dotc(&w).norm());
        if sl.max(sa) < 1.0 - 1e-6 {
            return Err(inconsistent(format!("block {} is neither linear nor antilinear", self.source)));
        }
        let defect = linalg::norm(&(u.adjoint() * &u - CMatrix::identity(n, n)));
        if defect > FACTOR_TOL {
            return Err(inconsistent(format!("recovered conjugator of block {} is not unitary", self.source)));
        }
        let sym = BlockSymmetry { target_block: self.target, antilinear: sa > sl, u: canonical_phase(&u) };
        self.check(prober, &sym)?;
        Ok(sym)
    }

    fn check(&self, prober: &mut Prober<'_>, sym: &BlockSymmetry) -> Result<()> {
        let n = self.base.shape().dim(self.source);
        let k = self.base.ranks()[self.source];
        let sig = GrassmannSignature::new(AlgebraShape::new(vec![n])?, vec![k])?;
        let mut rng = rng_from_seed(PROBE_SEED ^ (self.source as u64 + 1));
        for _ in 0..BLOCK_CHECKS {
            let x = random_projection_with(&sig, &mut rng).block(0).clone();
            let got = self.image(prober, x.clone())?;
            if linalg::norm(&(got - sym.apply(&x))) > FACTOR_TOL {
                return Err(inconsistent(format!("block {} fails a random check", self.source)));
            }
        }
        Ok(())
    }
}

/// Recover a normal form for `oracle` from at most its call budget of
/// queries. The source signature must be proper.
pub fn factorize(oracle: &mut MapOracle, tol: &Tolerance) -> Result<Recovery> {
    let source = oracle.source.clone();
    let target = oracle.target.clone();
    if !source.is_proper() {
        return Err(Error::Precondition(format!("source {source} is not proper")));
    }
    let b = source.shape().num_blocks();
    if target.shape().num_blocks() != b {
        return Err(inconsistent("source and target have different block counts"));
    }
    let mut prober = Prober { oracle, used: 0, tol: *tol };
    let base = source.standard();
    let base_image = prober.ask(&base)?;

    // block permutation: move one block to a distant projection at a time
    let mut targets = vec![0; b];
    for i in 0..b {
        let (n, k) = (source.shape().dim(i), source.ranks()[i]);
        let shifted = CMatrix::from_fn(n, n, |r, c| if r == c && r >= 1 && r <= k { linalg::ONE } else { linalg::ZERO });
        let out = prober.ask(&with_block(&base, i, shifted, tol)?)?;
        let moved: Vec<usize> = (0..b)
            .filter(|&j| linalg::norm(&(out.block(j) - base_image.block(j))) > 0.5)
            .collect();
        match moved[..] {
            [j] if target.shape().dim(j) == n => targets[i] = j,
            _ => return Err(inconsistent(format!("moving source block {i} changed target blocks {moved:?}"))),
        }
    }
    if targets.iter().collect::<HashSet<_>>().len() != b {
        return Err(inconsistent("source blocks do not map to distinct target blocks"));
    }

    let mut maps = Vec::with_capacity(b);
    let mut mask = vec![true; b];
    let mut alternatives = Vec::new();
    for i in 0..b {
        let j = targets[i];
        let (n, k, kt) = (source.shape().dim(i), source.ranks()[i], target.ranks()[j]);
        let flags: Vec<bool> = [true, false]
            .into_iter()
            .filter(|&keep| kt == if keep { k } else { n - k })
            .collect();
        if flags.is_empty() {
            return Err(inconsistent(format!("rank {k} in block {i} cannot map to rank {kt}")));
        }
        let mut found = None;
        let mut last_err = None;
        for keep in flags {
            let problem = BlockProblem { base: &base, source: i, target: j, keep };
            match problem.solve(&mut prober) {
                Ok(sym) if found.is_none() => found = Some((keep, sym)),
                Ok(_) => alternatives.push(j),
                Err(e @ Error::InconsistentOracle(_)) => last_err = Some(e),
                Err(e) => return Err(e),
            }
        }
        let (keep, sym) = match found {
            Some(x) => x,
            None => return Err(last_err.unwrap_or_else(|| inconsistent("no normal form"))),
        };
        mask[j] = keep;
        maps.push(sym);
    }
    let r = CentralProjection::new(target.shape().clone(), mask)?;
    let factorization = Factorization::new(maps, r, tol)?;

    let mut rng = rng_from_seed(PROBE_SEED);
    for _ in 0..2 {
        let p = random_projection_with(&source, &mut rng);
        let want = prober.ask(&p)?;
        let got = apply_factorization(&factorization, &p, tol)?;
        if (want.op() - got.op()).norm() > FACTOR_TOL {
            return Err(inconsistent("assembled normal form fails a random check"));
        }
    }
    Ok(Recovery { factorization, alternatives, calls: prober.used })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VerifyReport {
    pub max_residual: f64,
    pub pass: bool,
}

/// Compare `oracle` with `f` on `trials` Haar-random source projections.
pub fn verify_factorization(
    oracle: &mut MapOracle,
    f: &Factorization,
    trials: usize,
    seed: u64,
    tol: &Tolerance,
) -> Result<VerifyReport> {
    let source = oracle.source.clone();
    let mut rng = rng_from_seed(seed);
    let mut max_residual: f64 = 0.0;
    for _ in 0..trials {
        let p = random_projection_with(&source, &mut rng);
        let want = oracle.query(&p)?;
        let got = apply_factorization(f, &p, tol)?;
        max_residual = max_residual.max((want.op() - got.op()).norm());
    }
    Ok(VerifyReport { max_residual, pass: max_residual <= FACTOR_TOL })
}

/// `T₁(e) = T(p0) − T(p0) T((p0 − e) + f)` for `e ≤ p0`, `f ∼ e`, `f ≤ p0⊥`.
pub fn t1_eval(
    oracle: &mut MapOracle,
    e: &Projection,
    p0: &Projection,
    f: &Projection,
    tol: &Tolerance,
) -> Result<Projection> {
    if !e.is_below(p0, tol) {
        return Err(Error::Precondition("e is not below p0".into()));
    }
    if !f.is_orthogonal(p0, tol) {
        return Err(Error::Precondition("f is not orthogonal to p0".into()));
    }
    if mv_compare(e, f)? != MvRelation::Equivalent {
        return Err(Error::Precondition("e and f are not equivalent".into()));
    }
    let swapped = validate_projection(&(&(p0.op() - e.op()) + f.op()), tol)?;
    let a = oracle.query(p0)?;
    let b = oracle.query(&swapped)?;
    validate_projection(&(a.op() - &(a.op() * b.op())), tol)
        .map_err(|e| inconsistent(format!("T₁ value is not a projection ({e})")))
}

/// The two admissible `(p0, f)` choices used for a chunk with orthonormal
/// columns `w_i` per block.
fn chunk_frames(
    chunk: &[CMatrix],
    sig: &GrassmannSignature,
    rng: &mut impl Rng,
) -> Vec<(Projection, Projection)> {
    let shape = sig.shape();
    let mut frames = Vec::new();
    for mix in [false, true] {
        let mut p0 = Vec::new();
        let mut f = Vec::new();
        for (i, w) in chunk.iter().enumerate() {
            let (n, k, e) = (shape.dim(i), sig.ranks()[i], w.ncols());
            let full = linalg::complete_basis(w, n);
            let mut rest = full.columns(e, n - e).into_owned();
            if mix {
                rest = rest * haar_unitary_with(n - e, rng);
            }
            let mut top = CMatrix::zeros(n, k);
            top.columns_mut(0, e).copy_from(w);
            top.columns_mut(e, k - e).copy_from(&rest.columns(0, k - e));
            p0.push(top);
            f.push(rest.columns(k - e, e).into_owned());
        }
        frames.push((Projection::from_bases(shape, &p0), Projection::from_bases(shape, &f)));
    }
    frames
}

/// Orthoisomorphism extending `oracle` to an arbitrary projection `p` of the
/// source algebra, as the join of `T₁` over chunks of a spectral basis of
/// `p`. Each chunk is evaluated with two independent choices of `(p0, f)`;
/// disagreement means the oracle is not orthogonality-preserving.
pub fn t2_eval(oracle: &mut MapOracle, p: &Projection, tol: &Tolerance) -> Result<Projection> {
    let sig = oracle.source.clone();
    if p.shape() != sig.shape() {
        return Err(Error::ShapeMismatch { left: p.shape().dims().to_vec(), right: sig.shape().dims().to_vec() });
    }
    if !sig.is_proper() {
        return Err(Error::Precondition(format!("source {sig} is not proper")));
    }
    let shape = sig.shape().clone();
    let b = shape.num_blocks();
    let bases: Vec<CMatrix> = (0..b).map(|i| p.basis(i)).collect();
    let width: Vec<usize> = (0..b).map(|i| sig.ranks()[i].min(shape.dim(i) - sig.ranks()[i])).collect();
    let chunks = (0..b).map(|i| bases[i].ncols().div_ceil(width[i])).max().unwrap_or(0);

    let mut rng = rng_from_seed(PROBE_SEED);
    let mut acc = Projection::zero(oracle.target.shape());
    for c in 0..chunks {
        let chunk: Vec<CMatrix> = (0..b)
            .map(|i| {
                let start = (c * width[i]).min(bases[i].ncols());
                let end = ((c + 1) * width[i]).min(bases[i].ncols());
                bases[i].columns(start, end - start).into_owned()
            })
            .collect();
        let e = Projection::from_bases(&shape, &chunk);
        let mut values = Vec::new();
        for (p0, f) in chunk_frames(&chunk, &sig, &mut rng) {
            values.push(t1_eval(oracle, &e, &p0, &f, tol)?);
        }
        if (values[0].op() - values[1].op()).norm() > FACTOR_TOL {
            return Err(inconsistent("T₁ depends on the choice of (p0, f)"));
        }
        acc = join(&acc, &values[0], tol)?;
    }
    Ok(acc)
}
