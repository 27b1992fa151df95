//! Finite-dimensional von Neumann algebras as direct sums of full matrix
//! blocks, and their projection lattices.

use std::fmt;
use std::ops::{Add, Mul, Neg, Sub};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, CMatrix, Tolerance, C64};

/// Block dimensions `(n_1, ..., n_B)` of `M_{n_1} ⊕ ... ⊕ M_{n_B}`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "Vec<usize>", into = "Vec<usize>")]
pub struct AlgebraShape(Vec<usize>);

impl AlgebraShape {
    pub fn new(dims: Vec<usize>) -> Result<Self> {
        if dims.is_empty() || dims.contains(&0) {
            return Err(Error::InvalidInput(format!(
                "algebra shape needs at least one block and positive dimensions, got {dims:?}"
            )));
        }
        Ok(Self(dims))
    }

    pub fn dims(&self) -> &[usize] {
        &self.0
    }

    pub fn num_blocks(&self) -> usize {
        self.0.len()
    }

    pub fn dim(&self, block: usize) -> usize {
        self.0[block]
    }

    /// Shape of the sub-algebra cut down by a block mask, `None` when empty.
    pub fn restrict(&self, mask: &[bool]) -> Option<AlgebraShape> {
        let dims: Vec<usize> = self
            .0
            .iter()
            .zip(mask)
            .filter(|(_, &m)| m)
            .map(|(&d, _)| d)
            .collect();
        (!dims.is_empty()).then_some(AlgebraShape(dims))
    }

    fn ensure_same(&self, other: &AlgebraShape) -> Result<()> {
        if self != other {
            return Err(Error::ShapeMismatch {
                left: self.0.clone(),
                right: other.0.clone(),
            });
        }
        Ok(())
    }
}

impl TryFrom<Vec<usize>> for AlgebraShape {
    type Error = Error;
    fn try_from(dims: Vec<usize>) -> Result<Self> {
        Self::new(dims)
    }
}

impl From<AlgebraShape> for Vec<usize> {
    fn from(s: AlgebraShape) -> Self {
        s.0
    }
}

impl fmt::Display for AlgebraShape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.0.iter().map(|d| d.to_string()).collect();
        write!(f, "({})", parts.join(","))
    }
}

/// Block-diagonal element of the algebra.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "OperatorRepr", into = "OperatorRepr")]
pub struct Operator {
    shape: AlgebraShape,
    blocks: Vec<CMatrix>,
}

impl Operator {
    pub fn new(shape: AlgebraShape, blocks: Vec<CMatrix>) -> Result<Self> {
        if blocks.len() != shape.num_blocks() {
            return Err(Error::InvalidInput(format!(
                "expected {} blocks, got {}",
                shape.num_blocks(),
                blocks.len()
            )));
        }
        for (i, (b, &n)) in blocks.iter().zip(shape.dims()).enumerate() {
            if b.nrows() != n || b.ncols() != n {
                return Err(Error::InvalidInput(format!(
                    "block {i} is {}x{}, expected {n}x{n}",
                    b.nrows(),
                    b.ncols()
                )));
            }
            linalg::check_finite(b)?;
        }
        Ok(Self { shape, blocks })
    }

    pub(crate) fn from_blocks_unchecked(shape: AlgebraShape, blocks: Vec<CMatrix>) -> Self {
        debug_assert_eq!(blocks.len(), shape.num_blocks());
        Self { shape, blocks }
    }

    pub fn zero(shape: &AlgebraShape) -> Self {
        let blocks = shape.dims().iter().map(|&n| CMatrix::zeros(n, n)).collect();
        Self::from_blocks_unchecked(shape.clone(), blocks)
    }

    pub fn identity(shape: &AlgebraShape) -> Self {
        let blocks = shape.dims().iter().map(|&n| CMatrix::identity(n, n)).collect();
        Self::from_blocks_unchecked(shape.clone(), blocks)
    }

    pub fn shape(&self) -> &AlgebraShape {
        &self.shape
    }

    pub fn blocks(&self) -> &[CMatrix] {
        &self.blocks
    }

    pub fn block(&self, i: usize) -> &CMatrix {
        &self.blocks[i]
    }

    pub fn into_blocks(self) -> Vec<CMatrix> {
        self.blocks
    }

    pub fn map_blocks(&self, f: impl Fn(usize, &CMatrix) -> CMatrix) -> Operator {
        let blocks = self.blocks.iter().enumerate().map(|(i, b)| f(i, b)).collect();
        Self::from_blocks_unchecked(self.shape.clone(), blocks)
    }

    pub fn adjoint(&self) -> Operator {
        self.map_blocks(|_, b| b.adjoint())
    }

    /// Entrywise complex conjugate.
    pub fn conj(&self) -> Operator {
        self.map_blocks(|_, b| linalg::conjugate(b))
    }

    pub fn scale(&self, c: C64) -> Operator {
        self.map_blocks(|_, b| b * c)
    }

    pub fn scale_re(&self, c: f64) -> Operator {
        self.map_blocks(|_, b| b.scale(c))
    }

    /// Operator norm: the maximum over blocks.
    pub fn norm(&self) -> f64 {
        self.blocks.iter().map(linalg::norm).fold(0.0, f64::max)
    }

    pub fn hermitian_part(&self) -> Operator {
        self.map_blocks(|_, b| linalg::hermitian_part(b))
    }

    pub fn is_close(&self, other: &Operator, tol: f64) -> bool {
        self.shape == other.shape && (self - other).norm() <= tol
    }

    /// Cut down to the blocks selected by `mask`.
    pub fn restrict(&self, mask: &[bool]) -> Option<Operator> {
        let shape = self.shape.restrict(mask)?;
        let blocks = self
            .blocks
            .iter()
            .zip(mask)
            .filter(|(_, &m)| m)
            .map(|(b, _)| b.clone())
            .collect();
        Some(Self::from_blocks_unchecked(shape, blocks))
    }

    pub fn check_shape(&self, other: &Operator) -> Result<()> {
        self.shape.ensure_same(&other.shape)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("operator serialization is infallible")
    }

    pub fn from_json(s: &str) -> Result<Operator> {
        Ok(serde_json::from_str(s)?)
    }
}

macro_rules! blockwise_binop {
    ($tr:ident, $method:ident, $op:tt) => {
        impl<'a> $tr<&'a Operator> for &'a Operator {
            type Output = Operator;
            fn $method(self, rhs: &'a Operator) -> Operator {
                assert_eq!(self.shape, rhs.shape, "operator shape mismatch");
                let blocks = self
                    .blocks
                    .iter()
                    .zip(&rhs.blocks)
                    .map(|(a, b)| a $op b)
                    .collect();
                Operator::from_blocks_unchecked(self.shape.clone(), blocks)
            }
        }
    };
}

blockwise_binop!(Add, add, +);
blockwise_binop!(Sub, sub, -);
blockwise_binop!(Mul, mul, *);

impl Neg for &Operator {
    type Output = Operator;
    fn neg(self) -> Operator {
        self.map_blocks(|_, b| -b)
    }
}

/// Wire format: `{"shape": [n1, ...], "blocks": [[[[re, im], ...], ...], ...]}`.
#[derive(Serialize, Deserialize)]
struct OperatorRepr {
    shape: Vec<usize>,
    blocks: Vec<Vec<Vec<[f64; 2]>>>,
}

impl TryFrom<OperatorRepr> for Operator {
    type Error = Error;
    fn try_from(r: OperatorRepr) -> Result<Self> {
        let shape = AlgebraShape::new(r.shape)?;
        if r.blocks.len() != shape.num_blocks() {
            return Err(Error::InvalidInput(format!(
                "expected {} blocks, got {}",
                shape.num_blocks(),
                r.blocks.len()
            )));
        }
        let mut blocks = Vec::with_capacity(r.blocks.len());
        for (i, (rows, &n)) in r.blocks.into_iter().zip(shape.dims()).enumerate() {
            if rows.len() != n || rows.iter().any(|row| row.len() != n) {
                return Err(Error::InvalidInput(format!("block {i} is not {n}x{n}")));
            }
            let entries = rows.into_iter().flatten().map(|[re, im]| C64::new(re, im));
            blocks.push(CMatrix::from_row_iterator(n, n, entries));
        }
        Operator::new(shape, blocks)
    }
}

impl From<Operator> for OperatorRepr {
    fn from(op: Operator) -> Self {
        let blocks = op
            .blocks
            .iter()
            .map(|b| {
                (0..b.nrows())
                    .map(|r| (0..b.ncols()).map(|c| [b[(r, c)].re, b[(r, c)].im]).collect())
                    .collect()
            })
            .collect();
        OperatorRepr {
            shape: op.shape.0,
            blocks,
        }
    }
}

/// A self-adjoint idempotent together with its per-block ranks.
#[derive(Debug, Clone, PartialEq)]
pub struct Projection {
    op: Operator,
    ranks: Vec<usize>,
}

impl Projection {
    pub fn op(&self) -> &Operator {
        &self.op
    }

    pub fn into_op(self) -> Operator {
        self.op
    }

    pub fn ranks(&self) -> &[usize] {
        &self.ranks
    }

    pub fn shape(&self) -> &AlgebraShape {
        self.op.shape()
    }

    pub fn block(&self, i: usize) -> &CMatrix {
        self.op.block(i)
    }

    pub fn is_zero(&self) -> bool {
        self.ranks.iter().all(|&r| r == 0)
    }

    pub fn zero(shape: &AlgebraShape) -> Self {
        Self {
            op: Operator::zero(shape),
            ranks: vec![0; shape.num_blocks()],
        }
    }

    pub fn identity(shape: &AlgebraShape) -> Self {
        Self {
            op: Operator::identity(shape),
            ranks: shape.dims().to_vec(),
        }
    }

    /// `1 - p`.
    pub fn complement(&self) -> Projection {
        self.complement_on(&vec![true; self.ranks.len()])
    }

    /// Replace block `i` by its complement wherever `mask[i]` is set.
    pub fn complement_on(&self, mask: &[bool]) -> Projection {
        let op = self.op.map_blocks(|i, b| {
            if mask[i] {
                CMatrix::identity(b.nrows(), b.nrows()) - b
            } else {
                b.clone()
            }
        });
        let ranks = (0..self.ranks.len())
            .map(|i| if mask[i] { self.shape().dim(i) - self.ranks[i] } else { self.ranks[i] })
            .collect();
        Projection { op, ranks }
    }

    /// Projection whose block `i` is `w_i w_i*` for orthonormal columns `w_i`.
    pub fn from_bases(shape: &AlgebraShape, bases: &[CMatrix]) -> Projection {
        let blocks = bases
            .iter()
            .zip(shape.dims())
            .map(|(w, &n)| linalg::projector(w, n))
            .collect();
        Projection {
            op: Operator::from_blocks_unchecked(shape.clone(), blocks),
            ranks: bases.iter().map(|w| w.ncols()).collect(),
        }
    }

    /// Orthonormal basis of the range of block `i`.
    pub fn basis(&self, i: usize) -> CMatrix {
        linalg::eigen_columns(self.op.block(i), |l| l > 0.5)
    }

    pub fn signature(&self) -> GrassmannSignature {
        GrassmannSignature {
            shape: self.shape().clone(),
            ranks: self.ranks.clone(),
        }
    }

    /// `p ≤ q`, i.e. `q p = p`.
    pub fn is_below(&self, other: &Projection, tol: &Tolerance) -> bool {
        self.shape() == other.shape() && (&other.op * &self.op).is_close(&self.op, tol.eq_abs)
    }

    pub fn is_orthogonal(&self, other: &Projection, tol: &Tolerance) -> bool {
        self.shape() == other.shape() && (&self.op * &other.op).norm() <= tol.eq_abs
    }

    pub fn restrict(&self, mask: &[bool]) -> Option<Projection> {
        let op = self.op.restrict(mask)?;
        let ranks = self
            .ranks
            .iter()
            .zip(mask)
            .filter(|(_, &m)| m)
            .map(|(&r, _)| r)
            .collect();
        Some(Projection { op, ranks })
    }

    pub fn to_json(&self) -> String {
        self.op.to_json()
    }
}

/// Symmetrize `op` and check idempotence; ranks count eigenvalues above 1/2.
pub fn validate_projection(op: &Operator, tol: &Tolerance) -> Result<Projection> {
    let sym = op.hermitian_part();
    let skew = (op - &sym).norm();
    if skew > tol.eq_abs {
        return Err(Error::InvalidProjection(format!(
            "not hermitian (skew part {skew:.3e})"
        )));
    }
    let idem = (&(&sym * &sym) - &sym).norm();
    if idem > tol.eq_abs {
        return Err(Error::InvalidProjection(format!(
            "not idempotent (residual {idem:.3e})"
        )));
    }
    let ranks = sym
        .blocks()
        .iter()
        .map(|b| {
            let (values, _) = linalg::hermitian_eigh(b);
            values.iter().filter(|&&l| l > 0.5).count()
        })
        .collect();
    Ok(Projection { op: sym, ranks })
}

/// Spectral projection of `p + q` at eigenvalue 2, blockwise.
pub fn meet(p: &Projection, q: &Projection, tol: &Tolerance) -> Result<Projection> {
    p.op.check_shape(&q.op)?;
    let bases: Vec<CMatrix> = p
        .op
        .blocks()
        .iter()
        .zip(q.op.blocks())
        .map(|(a, b)| linalg::eigen_columns(&(a + b), |l| (l - 2.0).abs() < tol.eq_abs))
        .collect();
    Ok(Projection::from_bases(p.shape(), &bases))
}

/// `p ∨ q = 1 - (p⊥ ∧ q⊥)`.
pub fn join(p: &Projection, q: &Projection, tol: &Tolerance) -> Result<Projection> {
    Ok(meet(&p.complement(), &q.complement(), tol)?.complement())
}

/// Central projection of a block-diagonal algebra: an indicator per block.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CentralProjection {
    shape: AlgebraShape,
    mask: Vec<bool>,
}

impl CentralProjection {
    pub fn new(shape: AlgebraShape, mask: Vec<bool>) -> Result<Self> {
        if mask.len() != shape.num_blocks() {
            return Err(Error::InvalidInput(format!(
                "mask has {} entries for {} blocks",
                mask.len(),
                shape.num_blocks()
            )));
        }
        Ok(Self { shape, mask })
    }

    pub fn all(shape: &AlgebraShape) -> Self {
        Self {
            shape: shape.clone(),
            mask: vec![true; shape.num_blocks()],
        }
    }

    pub fn none(shape: &AlgebraShape) -> Self {
        Self {
            shape: shape.clone(),
            mask: vec![false; shape.num_blocks()],
        }
    }

    pub fn shape(&self) -> &AlgebraShape {
        &self.shape
    }

    pub fn mask(&self) -> &[bool] {
        &self.mask
    }

    pub fn complement(&self) -> Self {
        Self {
            shape: self.shape.clone(),
            mask: self.mask.iter().map(|m| !m).collect(),
        }
    }

    pub fn to_projection(&self) -> Projection {
        let blocks = self
            .shape
            .dims()
            .iter()
            .zip(&self.mask)
            .map(|(&n, &m)| if m { CMatrix::identity(n, n) } else { CMatrix::zeros(n, n) })
            .collect();
        let ranks = self
            .shape
            .dims()
            .iter()
            .zip(&self.mask)
            .map(|(&n, &m)| if m { n } else { 0 })
            .collect();
        Projection {
            op: Operator::from_blocks_unchecked(self.shape.clone(), blocks),
            ranks,
        }
    }

    /// Mask rendered as a string of `0`/`1`, one character per block.
    pub fn mask_string(&self) -> String {
        self.mask.iter().map(|&m| if m { '1' } else { '0' }).collect()
    }
}

/// Smallest central projection dominating `p`.
pub fn central_support(p: &Projection) -> CentralProjection {
    CentralProjection {
        shape: p.shape().clone(),
        mask: p.ranks.iter().map(|&r| r > 0).collect(),
    }
}

/// Murray–von Neumann comparison outcome.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MvRelation {
    Less,
    Equivalent,
    Greater,
    Incomparable,
}

pub fn mv_compare(p: &Projection, q: &Projection) -> Result<MvRelation> {
    p.op.check_shape(&q.op)?;
    let le = p.ranks.iter().zip(&q.ranks).all(|(a, b)| a <= b);
    let ge = p.ranks.iter().zip(&q.ranks).all(|(a, b)| a >= b);
    Ok(match (le, ge) {
        (true, true) => MvRelation::Equivalent,
        (true, false) => MvRelation::Less,
        (false, true) => MvRelation::Greater,
        (false, false) => MvRelation::Incomparable,
    })
}

/// A partial isometry `v` with `v v* = p` and `v* v ≤ q`, built from spectral
/// bases. Requires `p ≺ q` blockwise.
pub fn partial_isometry(p: &Projection, q: &Projection) -> Result<Operator> {
    p.op.check_shape(&q.op)?;
    if p.ranks.iter().zip(&q.ranks).any(|(a, b)| a > b) {
        return Err(Error::Precondition(format!(
            "no partial isometry: ranks {:?} exceed {:?}",
            p.ranks, q.ranks
        )));
    }
    let blocks = (0..p.shape().num_blocks())
        .map(|i| {
            let x = p.basis(i);
            let y = q.basis(i);
            let r = x.ncols();
            let n = p.shape().dim(i);
            if r == 0 {
                CMatrix::zeros(n, n)
            } else {
                &x * y.columns(0, r).adjoint()
            }
        })
        .collect();
    Ok(Operator::from_blocks_unchecked(p.shape().clone(), blocks))
}

/// Per-block ranks `k_i` labelling a connected component of the projection
/// lattice.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct GrassmannSignature {
    shape: AlgebraShape,
    ranks: Vec<usize>,
}

impl GrassmannSignature {
    pub fn new(shape: AlgebraShape, ranks: Vec<usize>) -> Result<Self> {
        if ranks.len() != shape.num_blocks() {
            return Err(Error::InvalidInput(format!(
                "signature has {} ranks for {} blocks",
                ranks.len(),
                shape.num_blocks()
            )));
        }
        if let Some(i) = (0..ranks.len()).find(|&i| ranks[i] > shape.dim(i)) {
            return Err(Error::InvalidInput(format!(
                "rank {} exceeds block dimension {} in block {i}",
                ranks[i],
                shape.dim(i)
            )));
        }
        Ok(Self { shape, ranks })
    }

    pub fn shape(&self) -> &AlgebraShape {
        &self.shape
    }

    pub fn ranks(&self) -> &[usize] {
        &self.ranks
    }

    /// `0 < k_i < n_i` in every block.
    pub fn is_proper(&self) -> bool {
        self.ranks
            .iter()
            .zip(self.shape.dims())
            .all(|(&k, &n)| k > 0 && k < n)
    }

    /// Signature of the complements.
    pub fn dual(&self) -> GrassmannSignature {
        GrassmannSignature {
            shape: self.shape.clone(),
            ranks: self
                .ranks
                .iter()
                .zip(self.shape.dims())
                .map(|(k, n)| n - k)
                .collect(),
        }
    }

    pub fn contains(&self, p: &Projection) -> bool {
        p.shape() == &self.shape && p.ranks == self.ranks
    }

    /// Standard representative: the first `k_i` coordinate vectors per block.
    pub fn standard(&self) -> Projection {
        let blocks = self
            .shape
            .dims()
            .iter()
            .zip(&self.ranks)
            .map(|(&n, &k)| {
                CMatrix::from_fn(n, n, |r, c| {
                    if r == c && r < k {
                        linalg::ONE
                    } else {
                        linalg::ZERO
                    }
                })
            })
            .collect();
        Projection {
            op: Operator::from_blocks_unchecked(self.shape.clone(), blocks),
            ranks: self.ranks.clone(),
        }
    }
}

impl fmt::Display for GrassmannSignature {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let k: Vec<String> = self.ranks.iter().map(|d| d.to_string()).collect();
        write!(f, "Gr[{}; {}]", k.join(","), self.shape)
    }
}

/// Result of cutting a Grassmann space down to its proper part.
#[derive(Debug, Clone, PartialEq)]
pub struct Properized {
    /// `z(p) z(p⊥)`: blocks with `0 < k_i < n_i`.
    pub r: CentralProjection,
    /// Signature on the masked sub-algebra; `None` when no block survives.
    pub restricted: Option<GrassmannSignature>,
}

impl Properized {
    pub fn is_degenerate(&self) -> bool {
        self.restricted.is_none()
    }
}

pub fn properize(sig: &GrassmannSignature) -> Properized {
    let mask: Vec<bool> = sig
        .ranks
        .iter()
        .zip(sig.shape.dims())
        .map(|(&k, &n)| k > 0 && k < n)
        .collect();
    let restricted = sig.shape.restrict(&mask).map(|shape| GrassmannSignature {
        shape,
        ranks: sig
            .ranks
            .iter()
            .zip(&mask)
            .filter(|(_, &m)| m)
            .map(|(&k, _)| k)
            .collect(),
    });
    Properized {
        r: CentralProjection {
            shape: sig.shape.clone(),
            mask,
        },
        restricted,
    }
}

/// `‖p - q‖`.
pub fn distance(p: &Projection, q: &Projection) -> Result<f64> {
    p.op.check_shape(&q.op)?;
    Ok((&p.op - &q.op).norm())
}
