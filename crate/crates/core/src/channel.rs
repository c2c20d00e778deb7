//! Elementary completely positive maps `x ↦ Σⱼ aⱼ*·x·aⱼ` and block Choi matrices.
//!
//! Choi convention: for block `i` of size `n`, `Cᵢ = Σⱼ vec(aⱼ)·vec(aⱼ)*` with
//! column stacking `vec(a)[k + n·p] = a[k, p]`. Equivalently
//! `C[k' + n·q, k + n·p] = φ(e_{kk'})[p, q]`, and unitality reads
//! `Σ_k C[k + n·q, k + n·p] = δ_pq`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::algebra::{AlgebraSpec, Element};
use crate::functional::Functional;
use crate::numerics::{self, eigh_hermitian, CMatrix, C64};
use crate::{Error, Result};

/// Eigenvalue floor used when normalizing random Kraus families.
pub const NORMALIZATION_FLOOR: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq)]
pub struct KrausMap {
    algebra: AlgebraSpec,
    kraus: Vec<Element>,
}

impl KrausMap {
    pub fn new(algebra: &AlgebraSpec, kraus: Vec<Element>) -> Result<Self> {
        for a in &kraus {
            algebra.check_same(a.algebra())?;
        }
        Ok(Self { algebra: algebra.clone(), kraus })
    }

    pub fn identity(algebra: &AlgebraSpec) -> Self {
        Self { algebra: algebra.clone(), kraus: vec![Element::identity(algebra)] }
    }

    pub fn algebra(&self) -> &AlgebraSpec {
        &self.algebra
    }

    pub fn kraus(&self) -> &[Element] {
        &self.kraus
    }

    pub fn len(&self) -> usize {
        self.kraus.len()
    }

    pub fn is_empty(&self) -> bool {
        self.kraus.is_empty()
    }

    /// `Σⱼ aⱼ*·x·aⱼ`.
    pub fn apply(&self, x: &Element) -> Result<Element> {
        self.algebra.check_same(x.algebra())?;
        let mut blocks: Vec<CMatrix> = x.blocks().iter().map(|b| CMatrix::zeros(b.nrows(), b.ncols())).collect();
        for a in &self.kraus {
            for (i, out) in blocks.iter_mut().enumerate() {
                let ai = a.block(i);
                *out += ai.adjoint() * x.block(i) * ai;
            }
        }
        Element::new(&self.algebra, blocks)
    }

    /// Predual action `Dᵢ ↦ Σⱼ a_{j,i}·Dᵢ·a_{j,i}*`, so that
    /// `predual_apply(ω)(x) = ω(apply(x))`.
    pub fn predual_apply(&self, omega: &Functional) -> Result<Functional> {
        self.algebra.check_same(omega.algebra())?;
        let mut blocks: Vec<CMatrix> = omega.densities().iter().map(|d| CMatrix::zeros(d.nrows(), d.ncols())).collect();
        for a in &self.kraus {
            for (i, out) in blocks.iter_mut().enumerate() {
                let ai = a.block(i);
                *out += ai * omega.density(i) * ai.adjoint();
            }
        }
        let blocks = blocks.iter().map(numerics::hermitian_part).collect();
        Functional::new(&self.algebra, blocks)
    }

    /// `Σⱼ aⱼ*·aⱼ`.
    pub fn unit_image(&self) -> Element {
        let mut s = Element::zeros(&self.algebra);
        for a in &self.kraus {
            s = &s + &(&a.adjoint() * a);
        }
        s
    }

    /// `‖Σⱼ aⱼ*aⱼ − 1‖` in operator norm.
    pub fn unitality_defect(&self) -> f64 {
        (&self.unit_image() - &Element::identity(&self.algebra)).norm()
    }

    pub fn is_unital(&self, tol: f64) -> bool {
        self.unitality_defect() <= tol
    }

    pub fn choi(&self) -> ModuleMapChoi {
        let choi_blocks = self
            .algebra
            .block_dims()
            .iter()
            .enumerate()
            .map(|(i, &n)| {
                let mut c = CMatrix::zeros(n * n, n * n);
                for a in &self.kraus {
                    let v = numerics::vec_columns(a.block(i));
                    c += &v * v.adjoint();
                }
                c
            })
            .collect();
        ModuleMapChoi { algebra: self.algebra.clone(), choi_blocks }
    }

    /// Appends `√(1 − Σ aⱼ*aⱼ)` to a subunital family.
    pub fn unitalize(&self, tol: f64) -> Result<KrausMap> {
        let defect = &Element::identity(&self.algebra) - &self.unit_image();
        let min = defect.min_eigenvalue()?;
        if min < -tol {
            return Err(Error::Precondition(format!(
                "Kraus family is not subunital: 1 − Σa*a has eigenvalue {min:.3e}"
            )));
        }
        let mut blocks = Vec::with_capacity(self.algebra.num_blocks());
        for b in defect.blocks() {
            blocks.push(numerics::sqrt_psd(&numerics::hermitian_part(b))?);
        }
        let mut kraus = self.kraus.clone();
        kraus.push(Element::new(&self.algebra, blocks)?);
        Ok(KrausMap { algebra: self.algebra.clone(), kraus })
    }

    /// Composition `x ↦ self(other(x))`, i.e. Kraus operators `bₖ·aⱼ`.
    pub fn compose(&self, other: &KrausMap) -> Result<KrausMap> {
        self.algebra.check_same(&other.algebra)?;
        let mut kraus = Vec::with_capacity(self.len() * other.len());
        for b in &other.kraus {
            for a in &self.kraus {
                kraus.push(b * a);
            }
        }
        Ok(KrausMap { algebra: self.algebra.clone(), kraus })
    }
}

/// A block-preserving map `φ = ⊕ᵢ φᵢ` given by one Choi matrix per block.
#[derive(Debug, Clone, PartialEq)]
pub struct ModuleMapChoi {
    algebra: AlgebraSpec,
    choi_blocks: Vec<CMatrix>,
}

impl ModuleMapChoi {
    /// Validates shapes `nᵢ²×nᵢ²` and hermiticity within `1e-9` (relative).
    pub fn new(algebra: &AlgebraSpec, choi_blocks: Vec<CMatrix>) -> Result<Self> {
        if choi_blocks.len() != algebra.num_blocks() {
            return Err(Error::Shape(format!(
                "{} Choi blocks for an algebra with {} blocks",
                choi_blocks.len(),
                algebra.num_blocks()
            )));
        }
        let mut blocks = Vec::with_capacity(choi_blocks.len());
        for (i, (c, &n)) in choi_blocks.into_iter().zip(algebra.block_dims()).enumerate() {
            if c.nrows() != n * n || c.ncols() != n * n {
                return Err(Error::Shape(format!(
                    "Choi block {i} is {}x{}, expected {}x{}",
                    c.nrows(),
                    c.ncols(),
                    n * n,
                    n * n
                )));
            }
            let residual = numerics::hermitian_residual(&c);
            if residual > 1e-9 * numerics::max_abs(&c).max(1.0) {
                return Err(Error::NotHermitian { residual });
            }
            blocks.push(numerics::hermitian_part(&c));
        }
        Ok(Self { algebra: algebra.clone(), choi_blocks: blocks })
    }

    /// Choi matrix of a block-preserving linear map given by its action.
    pub fn from_action(algebra: &AlgebraSpec, mut phi: impl FnMut(&Element) -> Result<Element>) -> Result<Self> {
        let mut blocks: Vec<CMatrix> = algebra.block_dims().iter().map(|&n| CMatrix::zeros(n * n, n * n)).collect();
        for (i, k, kp, e) in algebra.matrix_units() {
            let n = algebra.block_dim(i);
            let image = phi(&e)?;
            algebra.check_same(image.algebra())?;
            let y = image.block(i);
            for p in 0..n {
                for q in 0..n {
                    blocks[i][(kp + n * q, k + n * p)] = y[(p, q)];
                }
            }
        }
        Self::new(algebra, blocks)
    }

    pub fn algebra(&self) -> &AlgebraSpec {
        &self.algebra
    }

    pub fn choi_blocks(&self) -> &[CMatrix] {
        &self.choi_blocks
    }

    pub fn min_eigenvalue(&self) -> Result<f64> {
        let mut m = f64::INFINITY;
        for c in &self.choi_blocks {
            m = m.min(eigh_hermitian(c)?.min());
        }
        Ok(m)
    }

    /// Every Choi block PSD within `tol`.
    pub fn is_completely_positive(&self, tol: f64) -> Result<bool> {
        Ok(self.min_eigenvalue()? >= -tol)
    }

    /// Per-block partial trace over the output factor.
    pub fn unit_image(&self) -> Element {
        Element::from_fn(&self.algebra, |i, n| {
            let c = &self.choi_blocks[i];
            CMatrix::from_fn(n, n, |p, q| (0..n).map(|k| c[(k + n * q, k + n * p)]).sum())
        })
    }

    /// `‖φ(1) − 1‖` in operator norm.
    pub fn unitality_defect(&self) -> f64 {
        (&self.unit_image() - &Element::identity(&self.algebra)).norm()
    }

    pub fn is_unital(&self, tol: f64) -> bool {
        self.unitality_defect() <= tol
    }

    /// `φ(x)[p, q] = Σ_{k,k'} x[k, k']·C[k' + n·q, k + n·p]`.
    pub fn apply(&self, x: &Element) -> Result<Element> {
        self.algebra.check_same(x.algebra())?;
        let blocks = x
            .blocks()
            .iter()
            .zip(&self.choi_blocks)
            .map(|(xb, c)| {
                let n = xb.nrows();
                CMatrix::from_fn(n, n, |p, q| {
                    let mut s = C64::new(0.0, 0.0);
                    for k in 0..n {
                        for kp in 0..n {
                            s += xb[(k, kp)] * c[(kp + n * q, k + n * p)];
                        }
                    }
                    s
                })
            })
            .collect();
        Element::new(&self.algebra, blocks)
    }

    /// Largest entrywise difference between Choi blocks.
    pub fn max_abs_diff(&self, other: &ModuleMapChoi) -> Result<f64> {
        self.algebra.check_same(&other.algebra)?;
        Ok(self
            .choi_blocks
            .iter()
            .zip(&other.choi_blocks)
            .map(|(a, b)| numerics::max_abs(&(a - b)))
            .fold(0.0, f64::max))
    }

    pub fn to_kraus(&self, eps: f64) -> Result<KrausMap> {
        kraus_from_choi(self, eps)
    }
}

/// Spectral Kraus extraction: each eigenpair `(λ, v)` of `Cᵢ` with `λ > eps`
/// gives the block `√λ·unvec(v)`. Blocks with fewer terms are padded with zeros.
pub fn kraus_from_choi(choi: &ModuleMapChoi, eps: f64) -> Result<KrausMap> {
    let algebra = choi.algebra();
    let mut per_block: Vec<Vec<CMatrix>> = Vec::with_capacity(algebra.num_blocks());
    for (i, c) in choi.choi_blocks().iter().enumerate() {
        let n = algebra.block_dim(i);
        let e = eigh_hermitian(c)?;
        if e.min() < -eps {
            return Err(Error::NotCompletelyPositive { block: i, eigenvalue: e.min() });
        }
        let mut terms = Vec::new();
        for (k, &lambda) in e.values.iter().enumerate() {
            if lambda <= eps {
                break;
            }
            let v: Vec<C64> = e.vector(k).iter().map(|z| z * lambda.sqrt()).collect();
            terms.push(numerics::unvec_columns(&v, n));
        }
        per_block.push(terms);
    }
    let count = per_block.iter().map(Vec::len).max().unwrap_or(0);
    let kraus = (0..count)
        .map(|j| Element::from_fn(algebra, |i, n| per_block[i].get(j).cloned().unwrap_or_else(|| CMatrix::zeros(n, n))))
        .collect();
    KrausMap::new(algebra, kraus)
}

/// Complex matrix with independent standard normal real and imaginary parts.
pub(crate) fn random_matrix<R: Rng + ?Sized>(rows: usize, cols: usize, rng: &mut R) -> CMatrix {
    CMatrix::from_fn(rows, cols, |_, _| C64::new(rng.sample(StandardNormal), rng.sample(StandardNormal)))
}

/// Random unital elementary map with `k` Kraus operators, deterministic per seed.
pub fn random_elementary(algebra: &AlgebraSpec, k: usize, seed: u64) -> Result<KrausMap> {
    random_elementary_with(algebra, k, &mut ChaCha8Rng::seed_from_u64(seed))
}

/// [`random_elementary`] drawing from a caller-supplied generator.
///
/// Draws Gaussian blocks `aⱼ` and right-multiplies by `s^{-1/2}` with
/// `s = Σ aⱼ*aⱼ`, eigenvalues of `s` floored at [`NORMALIZATION_FLOOR`].
pub fn random_elementary_with<R: Rng + ?Sized>(algebra: &AlgebraSpec, k: usize, rng: &mut R) -> Result<KrausMap> {
    if k < 1 {
        return Err(Error::InvalidArgument("at least one Kraus operator is required".into()));
    }
    let raw: Vec<Element> = (0..k).map(|_| Element::from_fn(algebra, |_, n| random_matrix(n, n, rng))).collect();
    // second pass removes the rounding left by ill-conditioned `s`
    let once = normalize(algebra, &raw)?;
    KrausMap::new(algebra, normalize(algebra, &once)?)
}

fn normalize(algebra: &AlgebraSpec, kraus: &[Element]) -> Result<Vec<Element>> {
    let mut s = Element::zeros(algebra);
    for a in kraus {
        s = &s + &(&a.adjoint() * a);
    }
    let mut norm_blocks = Vec::with_capacity(algebra.num_blocks());
    for b in s.blocks() {
        norm_blocks.push(numerics::inv_sqrt_floor(&numerics::hermitian_part(b), NORMALIZATION_FLOOR)?);
    }
    let norm = Element::new(algebra, norm_blocks)?;
    Ok(kraus.iter().map(|a| a * &norm).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64) -> C64 {
        C64::new(re, 0.0)
    }

    fn m2() -> AlgebraSpec {
        AlgebraSpec::new(vec![2]).unwrap()
    }

    fn unit(a: &AlgebraSpec, k: usize, l: usize) -> Element {
        Element::matrix_unit(a, 0, k, l)
    }

    fn sample_x(a: &AlgebraSpec) -> Element {
        Element::new(a, vec![CMatrix::from_row_slice(2, 2, &[c(1.5), C64::new(0.2, 0.3), c(-0.7), c(2.5)])]).unwrap()
    }

    #[test]
    fn unitary_conjugation_and_identity() {
        let a = m2();
        let u = Element::new(&a, vec![CMatrix::from_row_slice(2, 2, &[c(0.0), c(1.0), c(1.0), c(0.0)])]).unwrap();
        let phi = KrausMap::new(&a, vec![u.clone()]).unwrap();
        assert_eq!(phi.apply(&Element::identity(&a)).unwrap(), Element::identity(&a));
        let x = sample_x(&a);
        assert!(phi.apply(&x).unwrap().distance(&(&(&u.adjoint() * &x) * &u)) < 1e-15);

        let h = Element::identity(&a).scale(c(std::f64::consts::FRAC_1_SQRT_2));
        let avg = KrausMap::new(&a, vec![h.clone(), h]).unwrap();
        assert!(avg.apply(&x).unwrap().distance(&x) < 1e-14);
        assert!(avg.is_unital(1e-12));
    }

    #[test]
    fn matrix_unit_families() {
        let a = m2();
        let x = sample_x(&a);
        // {e11, e21}: e11*xe11 + e12·x·e21 = diag(x11 + x22, 0)
        let phi = KrausMap::new(&a, vec![unit(&a, 0, 0), unit(&a, 1, 0)]).unwrap();
        let y = phi.apply(&x).unwrap();
        let want = CMatrix::from_row_slice(2, 2, &[c(4.0), c(0.0), c(0.0), c(0.0)]);
        assert!(numerics::max_abs(&(y.block(0) - want)) < 1e-15);
        assert!(!phi.is_unital(1e-9));
        // {e11, e12}: unital, x ↦ diag(x11, x11)
        let phi = KrausMap::new(&a, vec![unit(&a, 0, 0), unit(&a, 0, 1)]).unwrap();
        let y = phi.apply(&x).unwrap();
        let want = CMatrix::from_row_slice(2, 2, &[c(1.5), c(0.0), c(0.0), c(1.5)]);
        assert!(numerics::max_abs(&(y.block(0) - want)) < 1e-15);
        assert!(phi.is_unital(1e-12));
    }

    #[test]
    fn replacement_map_sends_states_to_fixed_state() {
        // x ↦ tr(σx)·1 with σ = diag(0.3, 0.7): Kraus √σ_k·e_{kl}
        let a = m2();
        let sigma = [0.3f64, 0.7];
        let mut kraus = Vec::new();
        for (k, s) in sigma.iter().enumerate() {
            for l in 0..2 {
                kraus.push(unit(&a, k, l).scale(c(s.sqrt())));
            }
        }
        let phi = KrausMap::new(&a, kraus).unwrap();
        assert!(phi.is_unital(1e-12));
        let omega = Functional::new(
            &a,
            vec![CMatrix::from_row_slice(2, 2, &[c(0.6), C64::new(0.1, 0.2), C64::new(0.1, -0.2), c(0.4)])],
        )
        .unwrap();
        let out = phi.predual_apply(&omega).unwrap();
        let want = Functional::new(&a, vec![CMatrix::from_row_slice(2, 2, &[c(0.3), c(0.0), c(0.0), c(0.7)])]).unwrap();
        assert!(out.max_abs_diff(&want).unwrap() < 1e-15);
        let x = sample_x(&a);
        let lhs = out.evaluate(&x).unwrap();
        let rhs = omega.evaluate(&phi.apply(&x).unwrap()).unwrap();
        assert!((lhs - rhs).norm() < 1e-14);
    }

    #[test]
    fn choi_examples() {
        for n in 1..=4 {
            let a = AlgebraSpec::new(vec![n]).unwrap();
            let choi = KrausMap::identity(&a).choi();
            let e = eigh_hermitian(&choi.choi_blocks()[0]).unwrap();
            assert!((e.max() - n as f64).abs() < 1e-12);
            assert!(e.values[1..].iter().all(|v| v.abs() < 1e-12));
            let k = choi.to_kraus(1e-9).unwrap();
            assert_eq!(k.len(), 1);
            assert!(k.kraus()[0].distance(&Element::identity(&a)) < 1e-10);
        }
        // x ↦ tr(x)/2·1 on M2 has Choi I/2
        let a = m2();
        let mut kraus = Vec::new();
        for k in 0..2 {
            for l in 0..2 {
                kraus.push(unit(&a, k, l).scale(c(0.5f64.sqrt())));
            }
        }
        let choi = KrausMap::new(&a, kraus).unwrap().choi();
        assert!(numerics::max_abs(&(&choi.choi_blocks()[0] - CMatrix::identity(4, 4).scale(0.5))) < 1e-15);
        assert!(choi.is_unital(1e-12));
        let zero = KrausMap::new(&a, vec![]).unwrap().choi();
        assert_eq!(numerics::max_abs(&zero.choi_blocks()[0]), 0.0);
    }

    #[test]
    fn choi_apply_matches_kraus_apply() {
        let a = AlgebraSpec::new(vec![2, 3]).unwrap();
        let phi = random_elementary(&a, 3, 11).unwrap();
        let choi = phi.choi();
        let rebuilt = ModuleMapChoi::from_action(&a, |x| phi.apply(x)).unwrap();
        assert!(choi.max_abs_diff(&rebuilt).unwrap() < 1e-12);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let x = Element::from_fn(&a, |_, n| random_matrix(n, n, &mut rng));
        assert!(choi.apply(&x).unwrap().distance(&phi.apply(&x).unwrap()) < 1e-12);
        assert!(choi.unitality_defect() < 1e-9);
    }

    #[test]
    fn kraus_from_choi_rejects_negative_eigenvalue() {
        let a = m2();
        let mut c0 = CMatrix::identity(4, 4).scale(0.5);
        c0[(3, 3)] = c(-0.1);
        let choi = ModuleMapChoi::new(&a, vec![c0]).unwrap();
        assert!(matches!(choi.to_kraus(1e-9), Err(Error::NotCompletelyPositive { block: 0, .. })));
        assert!(!choi.is_completely_positive(1e-9).unwrap());
    }

    #[test]
    fn random_elementary_properties() {
        let a = AlgebraSpec::new(vec![2, 3, 1]).unwrap();
        let p = random_elementary(&a, 3, 7).unwrap();
        assert_eq!(p, random_elementary(&a, 3, 7).unwrap());
        assert!(p.is_unital(1e-9));
        assert!(random_elementary(&a, 0, 7).is_err());
        // a single unital Kraus operator is unitary on each block
        let u = random_elementary(&a, 1, 3).unwrap();
        let a0 = &u.kraus()[0];
        let aa = a0 * &a0.adjoint();
        assert!(aa.distance(&Element::identity(&a)) < 1e-9);
    }

    #[test]
    fn unitalize_closes_subunital_family() {
        let a = AlgebraSpec::new(vec![2, 2]).unwrap();
        let phi = random_elementary(&a, 2, 1).unwrap();
        let sub = KrausMap::new(&a, phi.kraus().iter().map(|k| k.scale(c(0.8))).collect()).unwrap();
        assert!(!sub.is_unital(1e-9));
        assert!(sub.unitalize(1e-12).unwrap().is_unital(1e-9));
        let sup = KrausMap::new(&a, phi.kraus().iter().map(|k| k.scale(c(1.2))).collect()).unwrap();
        assert!(sup.unitalize(1e-12).is_err());
    }
}
