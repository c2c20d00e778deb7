//! Finite-dimensional von Neumann algebras `A = ⊕ᵢ M_{nᵢ}`, their elements,
//! the center (one scalar per block) and the lattice of two-sided ideals
//! (sub-sums over subsets of blocks).

use std::fmt;
use std::ops::{Add, Mul, Sub};

use serde::{Deserialize, Serialize};

use crate::numerics::{self, eigh_hermitian, CMatrix, C64};
use crate::{Error, Result};

/// Default cap on the number of blocks for which all `2^B` ideals are enumerated.
pub const IDEAL_ENUMERATION_CAP: usize = 20;

/// Block dimensions `n₁, …, n_B` of `⊕ᵢ M_{nᵢ}`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "AlgebraFile", into = "AlgebraFile")]
pub struct AlgebraSpec {
    blocks: Vec<usize>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct AlgebraFile {
    blocks: Vec<usize>,
}

impl TryFrom<AlgebraFile> for AlgebraSpec {
    type Error = Error;
    fn try_from(f: AlgebraFile) -> Result<Self> {
        AlgebraSpec::new(f.blocks)
    }
}

impl From<AlgebraSpec> for AlgebraFile {
    fn from(a: AlgebraSpec) -> Self {
        AlgebraFile { blocks: a.blocks }
    }
}

impl AlgebraSpec {
    /// Validates block dimensions: at least one block, every dimension ≥ 1.
    pub fn new(block_dims: Vec<usize>) -> Result<Self> {
        if block_dims.is_empty() {
            return Err(Error::InvalidAlgebra("at least one block is required".into()));
        }
        if block_dims.iter().any(|&n| n < 1) {
            return Err(Error::InvalidAlgebra("block dimension must be ≥ 1".into()));
        }
        Ok(Self { blocks: block_dims })
    }

    pub fn block_dims(&self) -> &[usize] {
        &self.blocks
    }

    pub fn num_blocks(&self) -> usize {
        self.blocks.len()
    }

    pub fn block_dim(&self, i: usize) -> usize {
        self.blocks[i]
    }

    /// `Σ nᵢ²`, the complex dimension of the algebra.
    pub fn total_dim(&self) -> usize {
        self.blocks.iter().map(|n| n * n).sum()
    }

    pub fn center_dim(&self) -> usize {
        self.blocks.len()
    }

    /// `Σ nᵢ`, the dimension of the canonical multiplicity-one representation.
    pub fn representation_dim(&self) -> usize {
        self.blocks.iter().sum()
    }

    pub fn is_abelian(&self) -> bool {
        self.blocks.iter().all(|&n| n == 1)
    }

    pub(crate) fn check_same(&self, other: &AlgebraSpec) -> Result<()> {
        if self == other {
            Ok(())
        } else {
            Err(Error::AlgebraMismatch { left: self.blocks.clone(), right: other.blocks.clone() })
        }
    }

    /// Matrix units `e_{kl}` of every block, as elements of the algebra.
    pub fn matrix_units(&self) -> impl Iterator<Item = (usize, usize, usize, Element)> + '_ {
        self.blocks.iter().enumerate().flat_map(move |(i, &n)| {
            (0..n).flat_map(move |k| (0..n).map(move |l| (i, k, l, Element::matrix_unit(self, i, k, l))))
        })
    }
}

impl fmt::Display for AlgebraSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.blocks.iter().map(|n| format!("M{n}")).collect();
        write!(f, "{}", parts.join(" ⊕ "))
    }
}

/// An element `x = ⊕ᵢ xᵢ` of the algebra.
#[derive(Debug, Clone, PartialEq)]
pub struct Element {
    algebra: AlgebraSpec,
    blocks: Vec<CMatrix>,
}

impl Element {
    pub fn new(algebra: &AlgebraSpec, blocks: Vec<CMatrix>) -> Result<Self> {
        if blocks.len() != algebra.num_blocks() {
            return Err(Error::Shape(format!(
                "{} blocks given for an algebra with {}",
                blocks.len(),
                algebra.num_blocks()
            )));
        }
        for (i, (b, &n)) in blocks.iter().zip(algebra.block_dims()).enumerate() {
            if b.nrows() != n || b.ncols() != n {
                return Err(Error::Shape(format!("block {i} is {}x{}, expected {n}x{n}", b.nrows(), b.ncols())));
            }
        }
        Ok(Self { algebra: algebra.clone(), blocks })
    }

    pub fn zeros(algebra: &AlgebraSpec) -> Self {
        Self::from_fn(algebra, |_, n| CMatrix::zeros(n, n))
    }

    pub fn identity(algebra: &AlgebraSpec) -> Self {
        Self::from_fn(algebra, |_, n| CMatrix::identity(n, n))
    }

    pub fn from_fn(algebra: &AlgebraSpec, mut f: impl FnMut(usize, usize) -> CMatrix) -> Self {
        let blocks = algebra.block_dims().iter().enumerate().map(|(i, &n)| f(i, n)).collect();
        Self { algebra: algebra.clone(), blocks }
    }

    /// Matrix unit `e_{kl}` placed in block `i`.
    pub fn matrix_unit(algebra: &AlgebraSpec, i: usize, k: usize, l: usize) -> Self {
        Self::from_fn(algebra, |j, n| if j == i { numerics::matrix_unit(n, k, l) } else { CMatrix::zeros(n, n) })
    }

    pub fn algebra(&self) -> &AlgebraSpec {
        &self.algebra
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

    pub fn adjoint(&self) -> Self {
        self.map_blocks(|_, b| b.adjoint())
    }

    pub fn scale(&self, s: C64) -> Self {
        self.map_blocks(|_, b| b * s)
    }

    pub fn map_blocks(&self, mut f: impl FnMut(usize, &CMatrix) -> CMatrix) -> Self {
        let blocks = self.blocks.iter().enumerate().map(|(i, b)| f(i, b)).collect();
        Self { algebra: self.algebra.clone(), blocks }
    }

    /// Operator norm: the largest singular value over all blocks.
    pub fn norm(&self) -> f64 {
        self.blocks.iter().map(numerics::operator_norm).fold(0.0, f64::max)
    }

    /// Largest entry modulus over all blocks.
    pub fn max_abs(&self) -> f64 {
        self.blocks.iter().map(numerics::max_abs).fold(0.0, f64::max)
    }

    pub fn hermitian_residual(&self) -> f64 {
        self.blocks.iter().map(numerics::hermitian_residual).fold(0.0, f64::max)
    }

    pub fn is_hermitian(&self, tol: f64) -> bool {
        self.hermitian_residual() <= tol * self.max_abs().max(1.0)
    }

    /// Smallest eigenvalue over all blocks (hermitian elements only).
    pub fn min_eigenvalue(&self) -> Result<f64> {
        let mut m = f64::INFINITY;
        for b in &self.blocks {
            m = m.min(eigh_hermitian(b)?.min());
        }
        Ok(m)
    }

    pub fn is_positive(&self, tol: f64) -> bool {
        self.is_hermitian(tol) && self.min_eigenvalue().map(|m| m >= -tol * self.max_abs().max(1.0)).unwrap_or(false)
    }

    pub fn is_projection(&self, tol: f64) -> bool {
        self.is_hermitian(tol) && (&(self * self) - self).max_abs() <= tol * self.max_abs().max(1.0)
    }

    /// `n ≥ 1` block-diagonal dense matrix acting on `⊕ ℂ^{nᵢ}`.
    pub fn to_dense(&self) -> CMatrix {
        let d = self.algebra.representation_dim();
        let mut out = CMatrix::zeros(d, d);
        let mut offset = 0;
        for b in &self.blocks {
            let n = b.nrows();
            out.view_mut((offset, offset), (n, n)).copy_from(b);
            offset += n;
        }
        out
    }

    pub fn distance(&self, other: &Element) -> f64 {
        (self - other).norm()
    }
}

impl<'a> Add<&'a Element> for &'a Element {
    type Output = Element;
    fn add(self, rhs: &'a Element) -> Element {
        assert_eq!(self.algebra, rhs.algebra, "algebra mismatch in Element addition");
        self.map_blocks(|i, b| b + &rhs.blocks[i])
    }
}

impl<'a> Sub<&'a Element> for &'a Element {
    type Output = Element;
    fn sub(self, rhs: &'a Element) -> Element {
        assert_eq!(self.algebra, rhs.algebra, "algebra mismatch in Element subtraction");
        self.map_blocks(|i, b| b - &rhs.blocks[i])
    }
}

impl<'a> Mul<&'a Element> for &'a Element {
    type Output = Element;
    fn mul(self, rhs: &'a Element) -> Element {
        assert_eq!(self.algebra, rhs.algebra, "algebra mismatch in Element product");
        self.map_blocks(|i, b| b * &rhs.blocks[i])
    }
}

/// A central element `⊕ᵢ cᵢ·1_{nᵢ}`, stored as one scalar per block.
#[derive(Debug, Clone, PartialEq)]
pub struct CenterElement {
    algebra: AlgebraSpec,
    values: Vec<C64>,
}

impl CenterElement {
    pub fn new(algebra: &AlgebraSpec, values: Vec<C64>) -> Result<Self> {
        if values.len() != algebra.num_blocks() {
            return Err(Error::Shape(format!("{} central values for {} blocks", values.len(), algebra.num_blocks())));
        }
        Ok(Self { algebra: algebra.clone(), values })
    }

    pub fn from_real(algebra: &AlgebraSpec, values: &[f64]) -> Result<Self> {
        Self::new(algebra, values.iter().map(|&v| C64::new(v, 0.0)).collect())
    }

    pub fn zeros(algebra: &AlgebraSpec) -> Self {
        Self { algebra: algebra.clone(), values: vec![C64::new(0.0, 0.0); algebra.num_blocks()] }
    }

    pub fn ones(algebra: &AlgebraSpec) -> Self {
        Self { algebra: algebra.clone(), values: vec![C64::new(1.0, 0.0); algebra.num_blocks()] }
    }

    /// Indicator of a block subset.
    pub fn indicator(algebra: &AlgebraSpec, support: &[usize]) -> Self {
        let mut c = Self::zeros(algebra);
        for &i in support {
            c.values[i] = C64::new(1.0, 0.0);
        }
        c
    }

    pub fn algebra(&self) -> &AlgebraSpec {
        &self.algebra
    }

    pub fn values(&self) -> &[C64] {
        &self.values
    }

    pub fn value(&self, i: usize) -> C64 {
        self.values[i]
    }

    /// Real parts of the block values.
    pub fn real_values(&self) -> Vec<f64> {
        self.values.iter().map(|z| z.re).collect()
    }

    pub fn is_positive(&self, tol: f64) -> bool {
        self.values.iter().all(|z| z.im.abs() <= tol && z.re >= -tol)
    }

    pub fn to_element(&self) -> Element {
        Element::from_fn(&self.algebra, |i, n| CMatrix::identity(n, n) * self.values[i])
    }

    pub fn max_abs_diff(&self, other: &CenterElement) -> f64 {
        self.values.iter().zip(&other.values).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max)
    }
}

/// The central carrier of a positive element and its per-block spectral bounds.
#[derive(Debug, Clone, PartialEq)]
pub struct CentralCarrier {
    /// Smallest central `c` with `h ≤ c·1`: block value `‖hᵢ‖`.
    pub carrier: CenterElement,
    /// `(mᵢ, Mᵢ)`: smallest and largest eigenvalue of each block.
    pub spectral_bounds: Vec<(f64, f64)>,
}

/// Central carrier of a positive element, computed exactly per block.
pub fn central_carrier(h: &Element, tol: f64) -> Result<CentralCarrier> {
    if !h.is_hermitian(tol) {
        return Err(Error::NotHermitian { residual: h.hermitian_residual() });
    }
    let mut values = Vec::with_capacity(h.blocks.len());
    let mut bounds = Vec::with_capacity(h.blocks.len());
    let scale = h.max_abs().max(1.0);
    for b in &h.blocks {
        let e = eigh_hermitian(b)?;
        if e.min() < -tol * scale {
            return Err(Error::NotPositive { min_eigenvalue: e.min() });
        }
        let (m, big_m) = (e.min().max(0.0), e.max().max(0.0));
        values.push(C64::new(big_m, 0.0));
        bounds.push((m, big_m));
    }
    Ok(CentralCarrier { carrier: CenterElement::new(h.algebra(), values)?, spectral_bounds: bounds })
}

/// A closed two-sided ideal: all elements vanishing outside the block support.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Ideal {
    algebra: AlgebraSpec,
    support: Vec<usize>,
}

impl Ideal {
    pub fn new(algebra: &AlgebraSpec, mut support: Vec<usize>) -> Result<Self> {
        support.sort_unstable();
        support.dedup();
        if let Some(&bad) = support.iter().find(|&&i| i >= algebra.num_blocks()) {
            return Err(Error::InvalidArgument(format!(
                "ideal support block {bad} out of range for {} blocks",
                algebra.num_blocks()
            )));
        }
        Ok(Self { algebra: algebra.clone(), support })
    }

    pub fn zero(algebra: &AlgebraSpec) -> Self {
        Self { algebra: algebra.clone(), support: vec![] }
    }

    pub fn whole(algebra: &AlgebraSpec) -> Self {
        Self { algebra: algebra.clone(), support: (0..algebra.num_blocks()).collect() }
    }

    pub fn from_mask(algebra: &AlgebraSpec, mask: u64) -> Self {
        let support = (0..algebra.num_blocks()).filter(|&i| mask >> i & 1 == 1).collect();
        Self { algebra: algebra.clone(), support }
    }

    pub fn algebra(&self) -> &AlgebraSpec {
        &self.algebra
    }

    pub fn support(&self) -> &[usize] {
        &self.support
    }

    pub fn contains_block(&self, i: usize) -> bool {
        self.support.binary_search(&i).is_ok()
    }

    pub fn is_zero(&self) -> bool {
        self.support.is_empty()
    }

    /// Membership: every block outside the support vanishes (entrywise within `tol`).
    pub fn contains(&self, x: &Element, tol: f64) -> bool {
        x.algebra() == &self.algebra
            && x.blocks().iter().enumerate().all(|(i, b)| self.contains_block(i) || numerics::max_abs(b) <= tol)
    }

    /// Central projection onto the support blocks.
    pub fn central_projection(&self) -> CenterElement {
        CenterElement::indicator(&self.algebra, &self.support)
    }

    /// Compression of an element to the ideal.
    pub fn restrict(&self, x: &Element) -> Element {
        x.map_blocks(|i, b| if self.contains_block(i) { b.clone() } else { CMatrix::zeros(b.nrows(), b.ncols()) })
    }

    pub fn is_subset_of(&self, other: &Ideal) -> bool {
        self.support.iter().all(|&i| other.contains_block(i))
    }

    pub fn intersection(&self, other: &Ideal) -> Ideal {
        let support = self.support.iter().copied().filter(|&i| other.contains_block(i)).collect();
        Ideal { algebra: self.algebra.clone(), support }
    }
}

impl fmt::Display for Ideal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.support.iter().map(|i| i.to_string()).collect();
        write!(f, "{{{}}}", parts.join(","))
    }
}

/// All ideals of the algebra, its maximal ideals, and the strong radical.
#[derive(Debug, Clone)]
pub struct IdealLattice {
    pub ideals: Vec<Ideal>,
    pub maximal: Vec<Ideal>,
    pub strong_radical: Ideal,
}

/// Enumerates all `2^B` ideals (by bitmask order) when `B ≤ cap`.
///
/// Maximal ideals are the complements of singletons; the strong radical is
/// their intersection, which is always the zero ideal here.
pub fn enumerate_ideals(algebra: &AlgebraSpec, cap: usize) -> Result<IdealLattice> {
    let b = algebra.num_blocks();
    if b > cap || b >= 64 {
        return Err(Error::IdealLatticeTooLarge { blocks: b, cap });
    }
    let ideals = (0..1u64 << b).map(|mask| Ideal::from_mask(algebra, mask)).collect();
    let maximal = maximal_ideals(algebra);
    let strong_radical = strong_radical(algebra);
    Ok(IdealLattice { ideals, maximal, strong_radical })
}

/// The `B` maximal ideals `M_t`, each omitting exactly block `t`.
pub fn maximal_ideals(algebra: &AlgebraSpec) -> Vec<Ideal> {
    let b = algebra.num_blocks();
    (0..b).map(|t| Ideal { algebra: algebra.clone(), support: (0..b).filter(|&i| i != t).collect() }).collect()
}

/// Intersection of all maximal ideals.
pub fn strong_radical(algebra: &AlgebraSpec) -> Ideal {
    maximal_ideals(algebra).iter().fold(Ideal::whole(algebra), |acc, m| acc.intersection(m))
}
