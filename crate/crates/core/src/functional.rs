//! Hermitian functionals `ω(x) = Σᵢ tr(Dᵢ·xᵢ)` given by one density per block.

use crate::algebra::{AlgebraSpec, CenterElement, Element, Ideal};
use crate::numerics::{self, eigh_hermitian, CMatrix, C64};
use crate::{Error, Result};

/// Hermiticity tolerance applied when a functional is constructed or loaded.
pub const HERMITIAN_LOAD_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub struct Functional {
    algebra: AlgebraSpec,
    densities: Vec<CMatrix>,
}

impl Functional {
    /// Builds a functional from block densities, which must be hermitian within
    /// [`HERMITIAN_LOAD_TOL`]; the stored densities are their hermitian parts.
    pub fn new(algebra: &AlgebraSpec, densities: Vec<CMatrix>) -> Result<Self> {
        let checked = Element::new(algebra, densities)?;
        let residual = checked.hermitian_residual();
        if residual > HERMITIAN_LOAD_TOL * checked.max_abs().max(1.0) {
            return Err(Error::NotHermitian { residual });
        }
        let densities = checked.into_blocks().iter().map(numerics::hermitian_part).collect();
        Ok(Self { algebra: algebra.clone(), densities })
    }

    pub fn zeros(algebra: &AlgebraSpec) -> Self {
        Self {
            algebra: algebra.clone(),
            densities: algebra.block_dims().iter().map(|&n| CMatrix::zeros(n, n)).collect(),
        }
    }

    /// The functional `x ↦ Σᵢ wᵢ·tr(xᵢ)/nᵢ`.
    pub fn tracial(algebra: &AlgebraSpec, weights: &[f64]) -> Result<Self> {
        if weights.len() != algebra.num_blocks() {
            return Err(Error::Shape("one weight per block expected".into()));
        }
        let densities = algebra
            .block_dims()
            .iter()
            .zip(weights)
            .map(|(&n, &w)| CMatrix::identity(n, n).scale(w / n as f64))
            .collect();
        Ok(Self { algebra: algebra.clone(), densities })
    }

    pub fn algebra(&self) -> &AlgebraSpec {
        &self.algebra
    }

    pub fn densities(&self) -> &[CMatrix] {
        &self.densities
    }

    pub fn density(&self, i: usize) -> &CMatrix {
        &self.densities[i]
    }

    pub fn evaluate(&self, x: &Element) -> Result<C64> {
        self.algebra.check_same(x.algebra())?;
        Ok(self.densities.iter().zip(x.blocks()).map(|(d, b)| numerics::trace_product(d, b)).sum())
    }

    /// `ω(1)`.
    pub fn mass(&self) -> f64 {
        self.block_masses().iter().sum()
    }

    /// `tr(Dᵢ)` for each block.
    pub fn block_masses(&self) -> Vec<f64> {
        self.densities.iter().map(|d| numerics::trace(d).re).collect()
    }

    /// `‖Dᵢ‖₁` for each block.
    pub fn block_trace_norms(&self) -> Result<Vec<f64>> {
        self.densities.iter().map(numerics::trace_norm).collect()
    }

    /// `‖ω‖ = Σᵢ ‖Dᵢ‖₁`.
    pub fn norm(&self) -> Result<f64> {
        Ok(self.block_trace_norms()?.iter().sum())
    }

    pub fn min_eigenvalue(&self) -> Result<f64> {
        let mut m = f64::INFINITY;
        for d in &self.densities {
            m = m.min(eigh_hermitian(d)?.min());
        }
        Ok(m)
    }

    /// Every density PSD up to `tol·max(1, max|D|)`.
    pub fn is_positive(&self, tol: f64) -> Result<bool> {
        let scale = self.densities.iter().map(numerics::max_abs).fold(1.0, f64::max);
        Ok(self.min_eigenvalue()? >= -tol * scale)
    }

    pub fn is_state(&self, tol: f64) -> Result<bool> {
        Ok(self.is_positive(tol)? && (self.mass() - 1.0).abs() <= tol)
    }

    pub(crate) fn require_positive(&self, tol: f64) -> Result<()> {
        if self.is_positive(tol)? {
            Ok(())
        } else {
            Err(Error::NotPositive { min_eigenvalue: self.min_eigenvalue()? })
        }
    }

    pub(crate) fn require_state(&self, tol: f64) -> Result<()> {
        self.require_positive(tol).map_err(|e| Error::NotState(format!("functional is not positive: {e}")))?;
        let m = self.mass();
        if (m - 1.0).abs() > tol {
            return Err(Error::NotState(format!("total mass {m} differs from 1")));
        }
        Ok(())
    }

    /// `ω|Z`: the block masses as a central element.
    pub fn restrict_to_center(&self) -> CenterElement {
        CenterElement::from_real(&self.algebra, &self.block_masses()).expect("one mass per block")
    }

    /// Splits every density into its positive and negative spectral parts.
    pub fn jordan_decompose(&self) -> Result<JordanPair> {
        let mut pos = Vec::with_capacity(self.densities.len());
        let mut neg = Vec::with_capacity(self.densities.len());
        for d in &self.densities {
            let e = eigh_hermitian(d)?;
            pos.push(e.recompose_with(|v| v.max(0.0)));
            neg.push(e.recompose_with(|v| (-v).max(0.0)));
        }
        Ok(JordanPair {
            positive_part: Functional { algebra: self.algebra.clone(), densities: pos },
            negative_part: Functional { algebra: self.algebra.clone(), densities: neg },
        })
    }

    /// Range projection of each density; eigenvalues at most `tol·‖Dᵢ‖` count as zero.
    pub fn support_projection(&self, tol: f64) -> Result<Element> {
        self.require_positive(tol)?;
        let mut blocks = Vec::with_capacity(self.densities.len());
        for d in &self.densities {
            let e = eigh_hermitian(d)?;
            let cutoff = tol * e.max().abs();
            if e.max() <= 0.0 {
                blocks.push(CMatrix::zeros(d.nrows(), d.ncols()));
            } else {
                blocks.push(e.recompose_with(|v| if v > cutoff { 1.0 } else { 0.0 }));
            }
        }
        Element::new(&self.algebra, blocks)
    }

    /// `‖ω|J‖ = Σ_{i∈J} ‖Dᵢ‖₁`.
    pub fn ideal_norm(&self, ideal: &Ideal) -> Result<f64> {
        self.algebra.check_same(ideal.algebra())?;
        let mut s = 0.0;
        for &i in ideal.support() {
            s += numerics::trace_norm(&self.densities[i])?;
        }
        Ok(s)
    }

    /// `‖cω‖ = Σᵢ cᵢ·‖Dᵢ‖₁` for positive central `c`.
    pub fn weighted_norm(&self, c: &CenterElement, tol: f64) -> Result<f64> {
        self.algebra.check_same(c.algebra())?;
        if !c.is_positive(tol) {
            return Err(Error::InvalidArgument("central weight must be positive".into()));
        }
        let norms = self.block_trace_norms()?;
        Ok(c.values().iter().zip(norms).map(|(w, n)| w.re.max(0.0) * n).sum())
    }

    /// `(cω)(x) = ω(c·x)` for central `c`.
    pub fn central_multiply(&self, c: &CenterElement) -> Result<Functional> {
        self.algebra.check_same(c.algebra())?;
        let densities = self.densities.iter().zip(c.values()).map(|(d, &w)| d * w).collect();
        Functional::new(&self.algebra, densities)
    }

    /// Factors a positive functional as `ω = (ω|Z) ∘ module_map`.
    ///
    /// On blocks of zero mass the module map is zero, so its unit image is the
    /// central support projection of `ω|Z`.
    pub fn central_decompose(&self, tol: f64) -> Result<CentralDecomposition> {
        self.require_positive(tol)?;
        let masses = self.block_masses();
        let weights = self
            .densities
            .iter()
            .zip(&masses)
            .map(|(d, &m)| if m > 0.0 { d.scale(1.0 / m) } else { CMatrix::zeros(d.nrows(), d.ncols()) })
            .collect();
        let module_map = CenterModuleMap::new(&self.algebra, weights)?;
        let unit_image = module_map.apply(&Element::identity(&self.algebra))?;
        Ok(CentralDecomposition { center_restriction: self.restrict_to_center(), module_map, unit_image })
    }

    pub fn add(&self, other: &Functional) -> Result<Functional> {
        self.algebra.check_same(&other.algebra)?;
        let densities = self.densities.iter().zip(&other.densities).map(|(a, b)| a + b).collect();
        Ok(Functional { algebra: self.algebra.clone(), densities })
    }

    pub fn sub(&self, other: &Functional) -> Result<Functional> {
        self.algebra.check_same(&other.algebra)?;
        let densities = self.densities.iter().zip(&other.densities).map(|(a, b)| a - b).collect();
        Ok(Functional { algebra: self.algebra.clone(), densities })
    }

    pub fn scale(&self, s: f64) -> Functional {
        Functional { algebra: self.algebra.clone(), densities: self.densities.iter().map(|d| d.scale(s)).collect() }
    }

    /// `‖ω − ρ‖`.
    pub fn distance(&self, other: &Functional) -> Result<f64> {
        self.sub(other)?.norm()
    }

    /// Largest entrywise density difference.
    pub fn max_abs_diff(&self, other: &Functional) -> Result<f64> {
        self.algebra.check_same(&other.algebra)?;
        Ok(self.densities.iter().zip(&other.densities).map(|(a, b)| numerics::max_abs(&(a - b))).fold(0.0, f64::max))
    }
}

/// Jordan decomposition `ω = ω₊ − ω₋` with orthogonal supports.
#[derive(Debug, Clone, PartialEq)]
pub struct JordanPair {
    pub positive_part: Functional,
    pub negative_part: Functional,
}

impl JordanPair {
    /// `ω₊(1) + ω₋(1)`, which equals `‖ω‖`.
    pub fn total_mass(&self) -> f64 {
        self.positive_part.mass() + self.negative_part.mass()
    }

    pub fn reconstruct(&self) -> Functional {
        self.positive_part.sub(&self.negative_part).expect("parts share an algebra")
    }
}

/// A positive center-valued module map `x ↦ (tr(Wᵢ·xᵢ))ᵢ`.
#[derive(Debug, Clone, PartialEq)]
pub struct CenterModuleMap {
    algebra: AlgebraSpec,
    weights: Vec<CMatrix>,
}

impl CenterModuleMap {
    pub fn new(algebra: &AlgebraSpec, weights: Vec<CMatrix>) -> Result<Self> {
        let weights = Element::new(algebra, weights)?.into_blocks();
        Ok(Self { algebra: algebra.clone(), weights })
    }

    /// Normalized block trace `x ↦ (tr(xᵢ)/nᵢ)ᵢ`.
    pub fn normalized_trace(algebra: &AlgebraSpec) -> Self {
        let weights = algebra.block_dims().iter().map(|&n| CMatrix::identity(n, n).scale(1.0 / n as f64)).collect();
        Self { algebra: algebra.clone(), weights }
    }

    pub fn algebra(&self) -> &AlgebraSpec {
        &self.algebra
    }

    pub fn weight(&self, i: usize) -> &CMatrix {
        &self.weights[i]
    }

    /// Replaces the weight of block `i`.
    pub fn with_weight(mut self, i: usize, w: CMatrix) -> Result<Self> {
        let n = self.algebra.block_dim(i);
        if w.nrows() != n || w.ncols() != n {
            return Err(Error::Shape(format!("weight for block {i} must be {n}x{n}")));
        }
        self.weights[i] = w;
        Ok(self)
    }

    pub fn apply(&self, x: &Element) -> Result<CenterElement> {
        self.algebra.check_same(x.algebra())?;
        let values = self.weights.iter().zip(x.blocks()).map(|(w, b)| numerics::trace_product(w, b)).collect();
        CenterElement::new(&self.algebra, values)
    }

    /// Value of block `i` at a single block matrix.
    pub fn apply_block(&self, i: usize, b: &CMatrix) -> C64 {
        numerics::trace_product(&self.weights[i], b)
    }
}

/// `ω = (ω|Z) ∘ module_map` with `module_map(1)` the support of `ω|Z`.
#[derive(Debug, Clone, PartialEq)]
pub struct CentralDecomposition {
    pub center_restriction: CenterElement,
    pub module_map: CenterModuleMap,
    pub unit_image: CenterElement,
}

impl CentralDecomposition {
    /// `(ω|Z)(module_map(x))`.
    pub fn reconstruct(&self, x: &Element) -> Result<C64> {
        let z = self.module_map.apply(x)?;
        Ok(self.center_restriction.values().iter().zip(z.values()).map(|(m, v)| m * v).sum())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64) -> C64 {
        C64::new(re, 0.0)
    }

    fn diag(vals: &[f64]) -> CMatrix {
        CMatrix::from_diagonal(&nalgebra::DVector::from_iterator(vals.len(), vals.iter().map(|&v| c(v))))
    }

    fn m2() -> AlgebraSpec {
        AlgebraSpec::new(vec![2]).unwrap()
    }

    #[test]
    fn evaluate_examples() {
        let a = m2();
        let w = Functional::new(&a, vec![diag(&[0.5, 0.5])]).unwrap();
        assert!((w.evaluate(&Element::identity(&a)).unwrap() - c(1.0)).norm() < 1e-15);
        let h = Functional::new(&a, vec![diag(&[0.5, -0.5])]).unwrap();
        let x = Element::new(&a, vec![diag(&[1.0, -1.0])]).unwrap();
        assert!((h.evaluate(&x).unwrap() - c(1.0)).norm() < 1e-15);
        assert_eq!(h.evaluate(&Element::zeros(&a)).unwrap(), c(0.0));
        let other = AlgebraSpec::new(vec![1]).unwrap();
        assert!(h.evaluate(&Element::identity(&other)).is_err());
    }

    #[test]
    fn rejects_non_hermitian_density() {
        let mut d = diag(&[0.5, 0.5]);
        d[(0, 1)] = c(0.1);
        assert!(matches!(Functional::new(&m2(), vec![d]), Err(Error::NotHermitian { .. })));
    }

    #[test]
    fn jordan_examples() {
        let a = m2();
        let w = Functional::new(&a, vec![diag(&[0.75, -0.25])]).unwrap();
        let j = w.jordan_decompose().unwrap();
        assert!(j.positive_part.max_abs_diff(&Functional::new(&a, vec![diag(&[0.75, 0.0])]).unwrap()).unwrap() < 1e-15);
        assert!(j.negative_part.max_abs_diff(&Functional::new(&a, vec![diag(&[0.0, 0.25])]).unwrap()).unwrap() < 1e-15);
        assert!((w.norm().unwrap() - 1.0).abs() < 1e-15);

        // eigenvalues ±0.5
        let off = Functional::new(&a, vec![CMatrix::from_row_slice(2, 2, &[c(0.0), c(0.5), c(0.5), c(0.0)])]).unwrap();
        let j = off.jordan_decompose().unwrap();
        assert!((j.positive_part.mass() - 0.5).abs() < 1e-14);
        assert!((j.negative_part.mass() - 0.5).abs() < 1e-14);

        let p = Functional::new(&a, vec![diag(&[0.3, 0.7])]).unwrap();
        assert!(p.jordan_decompose().unwrap().negative_part.norm().unwrap() < 1e-15);
    }

    #[test]
    fn support_projection_examples() {
        let a = AlgebraSpec::new(vec![2, 1]).unwrap();
        let w = Functional::new(&a, vec![diag(&[1.0, 0.0]), diag(&[0.0])]).unwrap();
        let p = w.support_projection(1e-9).unwrap();
        assert_eq!(p.block(0), &diag(&[1.0, 0.0]));
        assert_eq!(p.block(1), &diag(&[0.0]));
        let full = Functional::new(&a, vec![diag(&[0.2, 0.3]), diag(&[0.5])]).unwrap();
        assert!(full.support_projection(1e-9).unwrap().distance(&Element::identity(&a)) < 1e-14);
        let neg = Functional::new(&a, vec![diag(&[1.0, -1.0]), diag(&[0.0])]).unwrap();
        assert!(neg.support_projection(1e-9).is_err());
    }

    #[test]
    fn center_restriction_and_ideal_norms() {
        let a = AlgebraSpec::new(vec![2, 1]).unwrap();
        let w = Functional::new(&a, vec![diag(&[0.3, 0.3]), diag(&[0.4])]).unwrap();
        let mu = w.restrict_to_center().real_values();
        assert!((mu[0] - 0.6).abs() < 1e-15 && (mu[1] - 0.4).abs() < 1e-15);
        let j1 = Ideal::new(&a, vec![0]).unwrap();
        assert!((w.ideal_norm(&j1).unwrap() - 0.6).abs() < 1e-15);
        assert_eq!(w.ideal_norm(&Ideal::zero(&a)).unwrap(), 0.0);

        let h = Functional::new(&m2(), vec![diag(&[0.5, -0.5])]).unwrap();
        assert_eq!(h.restrict_to_center().real_values(), vec![0.0]);
        assert!((h.ideal_norm(&Ideal::whole(&m2())).unwrap() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn weighted_norm_examples() {
        let a = AlgebraSpec::new(vec![2, 2]).unwrap();
        let w = Functional::new(&a, vec![diag(&[0.5, -0.5]), diag(&[0.1, 0.7])]).unwrap();
        let ones = CenterElement::ones(&a);
        assert!((w.weighted_norm(&ones, 1e-12).unwrap() - w.norm().unwrap()).abs() < 1e-15);
        let ind = CenterElement::indicator(&a, &[1]);
        let j = Ideal::new(&a, vec![1]).unwrap();
        assert!((w.weighted_norm(&ind, 1e-12).unwrap() - w.ideal_norm(&j).unwrap()).abs() < 1e-15);
        let c2 = CenterElement::from_real(&a, &[2.0, 0.0]).unwrap();
        assert!((w.weighted_norm(&c2, 1e-12).unwrap() - 2.0).abs() < 1e-15);
        let bad = CenterElement::from_real(&a, &[-1.0, 0.0]).unwrap();
        assert!(w.weighted_norm(&bad, 1e-12).is_err());
    }

    #[test]
    fn central_decompose_examples() {
        let a = AlgebraSpec::new(vec![2, 1]).unwrap();
        let w = Functional::new(&a, vec![diag(&[0.25, 0.25]), diag(&[0.5])]).unwrap();
        let cd = w.central_decompose(1e-9).unwrap();
        assert_eq!(cd.center_restriction.real_values(), vec![0.5, 0.5]);
        for (_, _, _, x) in a.matrix_units() {
            let lhs = w.evaluate(&x).unwrap();
            assert!((cd.reconstruct(&x).unwrap() - lhs).norm() < 1e-15);
            // block 1 value is half the block trace
            let v = cd.module_map.apply(&x).unwrap().value(0);
            assert!((v - numerics::trace(x.block(0)) * 0.5).norm() < 1e-15);
        }

        // tracial state: normalized block trace
        let t = Functional::tracial(&a, &[0.3, 0.7]).unwrap();
        let cd = t.central_decompose(1e-9).unwrap();
        assert_eq!(cd.module_map, CenterModuleMap::normalized_trace(&a));

        let lop = Functional::new(&a, vec![diag(&[0.5, 0.5]), diag(&[0.0])]).unwrap();
        assert_eq!(lop.central_decompose(1e-9).unwrap().unit_image.real_values(), vec![1.0, 0.0]);
    }
}
