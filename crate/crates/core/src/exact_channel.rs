//! Exact reachability `ρ = ω∘φ` through the GNS representation of `ω`.
//!
//! For a state `ω` with block densities `Dᵢ = Σ_k λ_k e_k e_k*` (rank `rᵢ`) the
//! GNS space is `⊕ᵢ ℂ^{nᵢ} ⊗ ℂ^{rᵢ}` with index `a·rᵢ + k`, the algebra acts as
//! `xᵢ ⊗ I_{rᵢ}`, the cyclic vector is `ξᵢ[a·rᵢ + k] = √λ_k·e_k[a]`, and the
//! commutant is `⊕ᵢ I_{nᵢ} ⊗ M_{rᵢ}`.
//!
//! `ρ` is reachable exactly iff there is a density `T` on the GNS space with
//! `tr(T·π(x)) = ρ(x)` on the algebra and `tr(T·y) = ⟨yξ, ξ⟩` on the commutant.
//! Both families are block diagonal, so `T` may be taken block diagonal.
//! A channel is read off from a purification `η` of `T` through the partial
//! isometry `u(yξ) = (y ⊗ I_k)·η`.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::algebra::{AlgebraSpec, Element, Ideal};
use crate::channel::KrausMap;
use crate::functional::Functional;
use crate::numerics::{
    self, dykstra_feasibility, eigh_hermitian, AffineConstraint, CMatrix, FeasibilityOptions, FeasibilityOutcome,
    FeasibilityProblem, Infeasibility, C64,
};
use crate::reachability::Verdict;
use crate::{Error, Result, Tolerances};

/// Residual the extension density is refined to before purification.
pub const EXTENSION_REFINE_TOL: f64 = 1e-12;

/// Largest `‖u_j − a_j ⊗ I‖` accepted when pulling Kraus blocks back to the algebra.
pub const INTERTWINING_TOL: f64 = 1e-6;

#[derive(Debug, Clone)]
pub struct GnsData {
    source: AlgebraSpec,
    block_ranks: Vec<usize>,
    offsets: Vec<usize>,
    carrier_dim: usize,
    /// `n×r` matrices with columns `√λ_k·e_k`.
    amplitudes: Vec<CMatrix>,
    cyclic_vector: DVector<C64>,
    kernel_ideal: Ideal,
}

/// GNS data of a state; eigenvalues at most `tol.eig·‖Dᵢ‖` count as zero.
pub fn gns(omega: &Functional, tol: &Tolerances) -> Result<GnsData> {
    omega.require_state(tol.eig)?;
    let algebra = omega.algebra().clone();
    let mut block_ranks = Vec::with_capacity(algebra.num_blocks());
    let mut amplitudes = Vec::with_capacity(algebra.num_blocks());
    for d in omega.densities() {
        let n = d.nrows();
        let e = eigh_hermitian(d)?;
        let cutoff = tol.eig * e.max().abs();
        let r = if e.max() > 0.0 { e.values.iter().filter(|&&v| v > cutoff).count() } else { 0 };
        let mut m = CMatrix::zeros(n, r);
        for k in 0..r {
            m.set_column(k, &(e.vector(k) * C64::new(e.values[k].sqrt(), 0.0)));
        }
        block_ranks.push(r);
        amplitudes.push(m);
    }
    let mut offsets = Vec::with_capacity(block_ranks.len());
    let mut carrier_dim = 0;
    for (i, &r) in block_ranks.iter().enumerate() {
        offsets.push(carrier_dim);
        carrier_dim += algebra.block_dim(i) * r;
    }
    let mut cyclic_vector = DVector::zeros(carrier_dim);
    for (i, m) in amplitudes.iter().enumerate() {
        let r = block_ranks[i];
        for a in 0..m.nrows() {
            for k in 0..r {
                cyclic_vector[offsets[i] + a * r + k] = m[(a, k)];
            }
        }
    }
    let kernel: Vec<usize> = (0..block_ranks.len()).filter(|&i| block_ranks[i] == 0).collect();
    let kernel_ideal = Ideal::new(&algebra, kernel)?;
    Ok(GnsData { source: algebra, block_ranks, offsets, carrier_dim, amplitudes, cyclic_vector, kernel_ideal })
}

impl GnsData {
    pub fn source(&self) -> &AlgebraSpec {
        &self.source
    }

    pub fn block_ranks(&self) -> &[usize] {
        &self.block_ranks
    }

    pub fn carrier_dim(&self) -> usize {
        self.carrier_dim
    }

    pub fn cyclic_vector(&self) -> &DVector<C64> {
        &self.cyclic_vector
    }

    /// Blocks with `rᵢ = 0`: the kernel of the representation.
    pub fn kernel_ideal(&self) -> &Ideal {
        &self.kernel_ideal
    }

    /// `nᵢ·rᵢ`.
    pub fn block_carrier_dim(&self, i: usize) -> usize {
        self.source.block_dim(i) * self.block_ranks[i]
    }

    /// Blocks present in the carrier.
    pub fn carrier_blocks(&self) -> Vec<usize> {
        (0..self.block_ranks.len()).filter(|&i| self.block_ranks[i] > 0).collect()
    }

    /// `xᵢ ⊗ I_{rᵢ}`.
    pub fn represent_block(&self, i: usize, x: &CMatrix) -> CMatrix {
        x.kronecker(&CMatrix::identity(self.block_ranks[i], self.block_ranks[i]))
    }

    /// `π(x)` on the whole carrier.
    pub fn represent(&self, x: &Element) -> Result<CMatrix> {
        self.source.check_same(x.algebra())?;
        let mut out = CMatrix::zeros(self.carrier_dim, self.carrier_dim);
        for i in self.carrier_blocks() {
            let o = self.offsets[i];
            let d = self.block_carrier_dim(i);
            out.view_mut((o, o), (d, d)).copy_from(&self.represent_block(i, x.block(i)));
        }
        Ok(out)
    }

    /// `I_{nᵢ} ⊗ E_{kl}` on block `i` of the carrier.
    pub fn commutant_unit_block(&self, i: usize, k: usize, l: usize) -> CMatrix {
        let n = self.source.block_dim(i);
        CMatrix::identity(n, n).kronecker(&numerics::matrix_unit(self.block_ranks[i], k, l))
    }

    /// Basis `{I ⊗ E_{kl}}` of the commutant, embedded in the whole carrier.
    pub fn commutant_basis(&self) -> Vec<CMatrix> {
        let mut out = Vec::new();
        for i in self.carrier_blocks() {
            let (o, d, r) = (self.offsets[i], self.block_carrier_dim(i), self.block_ranks[i]);
            for k in 0..r {
                for l in 0..r {
                    let mut y = CMatrix::zeros(self.carrier_dim, self.carrier_dim);
                    y.view_mut((o, o), (d, d)).copy_from(&self.commutant_unit_block(i, k, l));
                    out.push(y);
                }
            }
        }
        out
    }

    /// Cyclic-vector part on block `i`.
    pub fn cyclic_block(&self, i: usize) -> DVector<C64> {
        self.cyclic_vector.rows(self.offsets[i], self.block_carrier_dim(i)).into_owned()
    }

    /// `⟨π(x)ξ, ξ⟩`.
    pub fn vector_state(&self, x: &Element) -> Result<C64> {
        let px = self.represent(x)?;
        Ok((self.cyclic_vector.adjoint() * px * &self.cyclic_vector)[(0, 0)])
    }

    /// `⟨yξ, ξ⟩` for `y = I ⊗ E_{kl}` on block `i`, which is `λ_k·δ_kl`.
    pub fn commutant_expectation(&self, i: usize, k: usize, l: usize) -> C64 {
        let m = &self.amplitudes[i];
        (m.column(k).adjoint() * m.column(l))[(0, 0)]
    }

    /// Dimension of `span{π(x)ξ}` over the matrix units.
    pub fn cyclic_rank(&self) -> Result<usize> {
        let vectors: Vec<DVector<C64>> = self
            .source
            .matrix_units()
            .map(|(_, _, _, x)| self.represent(&x).map(|p| p * &self.cyclic_vector))
            .collect::<Result<_>>()?;
        if vectors.is_empty() || self.carrier_dim == 0 {
            return Ok(0);
        }
        let m = CMatrix::from_columns(&vectors);
        let gram = m.adjoint() * &m;
        let e = eigh_hermitian(&numerics::hermitian_part(&gram))?;
        let cutoff = 1e-10 * e.max().max(f64::MIN_POSITIVE);
        Ok(e.values.iter().filter(|&&v| v > cutoff).count())
    }

    /// Largest `‖π(x)·y − y·π(x)‖` over matrix units `x` and commutant units `y`.
    pub fn commutant_residual(&self) -> Result<f64> {
        let mut worst: f64 = 0.0;
        for i in self.carrier_blocks() {
            let r = self.block_ranks[i];
            for (bi, a, b, _) in self.source.matrix_units() {
                if bi != i {
                    continue;
                }
                let n = self.source.block_dim(i);
                let px = self.represent_block(i, &numerics::matrix_unit(n, a, b));
                for k in 0..r {
                    for l in 0..r {
                        let y = self.commutant_unit_block(i, k, l);
                        worst = worst.max(numerics::max_abs(&(&px * &y - &y * &px)));
                    }
                }
            }
        }
        Ok(worst)
    }
}

/// A density `T = ⊕ᵢ Tᵢ` on the GNS carrier extending `ρ` and agreeing with the
/// vector state on the commutant.
#[derive(Debug, Clone)]
pub struct ExtensionCertificate {
    /// `Tᵢ` of size `nᵢ·rᵢ` for each block (`0×0` on the kernel).
    pub blocks: Vec<CMatrix>,
    /// Largest `|tr(T·π(x)) − ρ(x)|` over matrix units.
    pub algebra_residual: f64,
    /// Largest `|tr(T·y) − ⟨yξ, ξ⟩|` over commutant units.
    pub commutant_residual: f64,
    pub min_eigenvalue: f64,
    pub iterations: usize,
}

impl ExtensionCertificate {
    /// `T` on the whole carrier.
    pub fn density(&self, gns: &GnsData) -> CMatrix {
        let mut out = CMatrix::zeros(gns.carrier_dim, gns.carrier_dim);
        for i in gns.carrier_blocks() {
            let (o, d) = (gns.offsets[i], gns.block_carrier_dim(i));
            out.view_mut((o, o), (d, d)).copy_from(&self.blocks[i]);
        }
        out
    }

    pub fn trace(&self) -> f64 {
        self.blocks.iter().map(|b| numerics::trace(b).re).sum()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ExtensionInfeasibility {
    /// `ρ` does not annihilate the kernel of the GNS representation.
    KernelViolation { ideal: Vec<usize>, mass: f64 },
    /// The affine constraints are inconsistent.
    Algebraic { defect: f64 },
    /// Alternating projections stalled.
    Plateau { residual: f64, iterations: usize },
}

#[derive(Debug, Clone)]
pub enum ExtensionOutcome {
    Feasible(ExtensionCertificate),
    Infeasible(ExtensionInfeasibility),
    Indeterminate { residual: f64, iterations: usize },
}

impl ExtensionOutcome {
    pub fn verdict(&self) -> Verdict {
        match self {
            Self::Feasible(_) => Verdict::Yes,
            Self::Infeasible(_) => Verdict::No,
            Self::Indeterminate { .. } => Verdict::Indeterminate,
        }
    }

    pub fn certificate(&self) -> Option<&ExtensionCertificate> {
        match self {
            Self::Feasible(c) => Some(c),
            _ => None,
        }
    }

    pub fn explanation(&self) -> String {
        match self {
            Self::Feasible(c) => format!(
                "extension density found: algebra residual {:.2e}, commutant residual {:.2e}",
                c.algebra_residual, c.commutant_residual
            ),
            Self::Infeasible(ExtensionInfeasibility::KernelViolation { ideal, mass }) => format!(
                "ρ does not annihilate the kernel of the GNS representation of ω (blocks {:?}, mass {mass:.3e})",
                ideal.iter().map(|i| i + 1).collect::<Vec<_>>()
            ),
            Self::Infeasible(ExtensionInfeasibility::Algebraic { defect }) => {
                format!("the extension constraints are inconsistent (defect {defect:.3e})")
            }
            Self::Infeasible(ExtensionInfeasibility::Plateau { residual, iterations }) => {
                format!("no positive extension: residual stalled at {residual:.3e} after {iterations} iterations")
            }
            Self::Indeterminate { residual, iterations } => {
                format!("undecided after {iterations} iterations (residual {residual:.3e})")
            }
        }
    }
}

pub fn extension_feasible(omega: &Functional, rho: &Functional, tol: &Tolerances) -> Result<ExtensionOutcome> {
    let g = gns(omega, tol)?;
    extension_feasible_with(&g, rho, tol)
}

/// Extension problem for a precomputed GNS representation.
pub fn extension_feasible_with(gns: &GnsData, rho: &Functional, tol: &Tolerances) -> Result<ExtensionOutcome> {
    let algebra = gns.source();
    algebra.check_same(rho.algebra())?;
    rho.require_state(tol.eig)?;
    let mass = rho.ideal_norm(gns.kernel_ideal())?;
    if mass > tol.dec * rho.norm()?.max(1.0) {
        return Ok(ExtensionOutcome::Infeasible(ExtensionInfeasibility::KernelViolation {
            ideal: gns.kernel_ideal().support().to_vec(),
            mass,
        }));
    }

    let blocks = gns.carrier_blocks();
    let mut constraints = Vec::new();
    for (slot, &i) in blocks.iter().enumerate() {
        let n = algebra.block_dim(i);
        let r = gns.block_ranks[i];
        let dens = rho.density(i);
        for a in 0..n {
            for b in 0..n {
                // tr(T·(e_ab ⊗ I)) = ρ(e_ab) = R[b, a]
                let op = gns.represent_block(i, &numerics::matrix_unit(n, a, b));
                constraints.extend(AffineConstraint::complex(slot, &op, dens[(b, a)]));
            }
        }
        for k in 0..r {
            for l in 0..r {
                let op = gns.commutant_unit_block(i, k, l);
                constraints.extend(AffineConstraint::complex(slot, &op, gns.commutant_expectation(i, k, l)));
            }
        }
    }
    let sizes: Vec<usize> = blocks.iter().map(|&i| gns.block_carrier_dim(i)).collect();
    let options = FeasibilityOptions::from_tolerances(tol).refined(EXTENSION_REFINE_TOL);
    let problem = FeasibilityProblem::new(sizes, constraints, options)?;
    Ok(match dykstra_feasibility(&problem)? {
        FeasibilityOutcome::Feasible(p) => {
            let mut out: Vec<CMatrix> = (0..algebra.num_blocks()).map(|_| CMatrix::zeros(0, 0)).collect();
            for (slot, &i) in blocks.iter().enumerate() {
                out[i] = numerics::hermitian_part(&p.point.blocks[slot]);
            }
            let mut cert = ExtensionCertificate {
                blocks: out,
                algebra_residual: 0.0,
                commutant_residual: 0.0,
                min_eigenvalue: p.min_eigenvalue,
                iterations: p.iterations,
            };
            let (ra, rc) = extension_residuals(gns, rho, &cert)?;
            cert.algebra_residual = ra;
            cert.commutant_residual = rc;
            ExtensionOutcome::Feasible(cert)
        }
        FeasibilityOutcome::Infeasible(Infeasibility::Algebraic { defect, .. }) => {
            ExtensionOutcome::Infeasible(ExtensionInfeasibility::Algebraic { defect })
        }
        FeasibilityOutcome::Infeasible(Infeasibility::Plateau { residual, iterations }) => {
            ExtensionOutcome::Infeasible(ExtensionInfeasibility::Plateau { residual, iterations })
        }
        FeasibilityOutcome::Indeterminate { residual, iterations } => {
            ExtensionOutcome::Indeterminate { residual, iterations }
        }
    })
}

/// Constraint residuals of a certificate, recomputed on the whole carrier.
pub fn extension_residuals(gns: &GnsData, rho: &Functional, cert: &ExtensionCertificate) -> Result<(f64, f64)> {
    let t = cert.density(gns);
    let mut ra: f64 = 0.0;
    for (_, _, _, x) in gns.source().matrix_units() {
        let lhs = numerics::trace_product(&t, &gns.represent(&x)?);
        ra = ra.max((lhs - rho.evaluate(&x)?).norm());
    }
    let mut rc: f64 = 0.0;
    let xi = gns.cyclic_vector();
    for y in gns.commutant_basis() {
        let lhs = numerics::trace_product(&t, &y);
        let rhs = (xi.adjoint() * &y * xi)[(0, 0)];
        rc = rc.max((lhs - rhs).norm());
    }
    Ok((ra, rc))
}

/// Diagnostics of the channel construction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExactChannelReport {
    /// `‖Σ aⱼ*aⱼ − 1‖`.
    pub unitality_defect: f64,
    /// `‖Σ aⱼ*aⱼ − supp ω‖` before the final normalization.
    pub purification_defect: f64,
    /// Largest `|ω(φ(e)) − ρ(e)|` over matrix units `e`.
    pub composition_error: f64,
    /// `‖u*u − P‖` with `P` the projection onto `[commutant·ξ]`.
    pub isometry_residual: f64,
    /// `‖uξ − η‖`.
    pub purification_residual: f64,
    /// Largest `‖u_j − a_j ⊗ I‖`.
    pub intertwining_residual: f64,
    /// Residuals of the extension density.
    pub extension_algebra_residual: f64,
    pub extension_commutant_residual: f64,
    /// `rank(Tᵢ)` per block.
    pub purification_ranks: Vec<usize>,
    pub kraus_count: usize,
}

#[derive(Debug, Clone)]
pub struct ExactChannel {
    pub kraus: KrausMap,
    pub report: ExactChannelReport,
}

/// Runs the extension problem and, when feasible, builds a channel `φ` with
/// Kraus operators in the algebra and `ω∘φ = ρ`.
pub fn construct_exact_channel(omega: &Functional, rho: &Functional, tol: &Tolerances) -> Result<ExactChannel> {
    let g = gns(omega, tol)?;
    let outcome = extension_feasible_with(&g, rho, tol)?;
    let cert = outcome
        .certificate()
        .ok_or_else(|| Error::Precondition(format!("no extension certificate: {}", outcome.explanation())))?;
    build_channel(omega, rho, &g, cert, tol)
}

/// Purification step for a given extension certificate.
pub fn build_channel(
    omega: &Functional,
    rho: &Functional,
    gns: &GnsData,
    cert: &ExtensionCertificate,
    tol: &Tolerances,
) -> Result<ExactChannel> {
    let algebra = gns.source().clone();
    let support = omega.support_projection(tol.eig)?;
    let mut per_block: Vec<Vec<CMatrix>> = vec![Vec::new(); algebra.num_blocks()];
    let mut ranks = vec![0; algebra.num_blocks()];
    let (mut iso, mut pur, mut inter): (f64, f64, f64) = (0.0, 0.0, 0.0);

    for i in gns.carrier_blocks() {
        let n = algebra.block_dim(i);
        let r = gns.block_ranks[i];
        let dim = n * r;
        let xi = gns.cyclic_block(i);

        // purification η = (√μ_j t_j)_j of Tᵢ
        let e = eigh_hermitian(&cert.blocks[i])?;
        let cutoff = 1e-14 * e.max().abs().max(f64::MIN_POSITIVE);
        let k = e.values.iter().filter(|&&v| v > cutoff).count();
        ranks[i] = k;
        if k == 0 {
            continue;
        }
        let mut eta = DVector::<C64>::zeros(k * dim);
        for j in 0..k {
            let t = e.vector(j) * C64::new(e.values[j].sqrt(), 0.0);
            eta.rows_mut(j * dim, dim).copy_from(&t);
        }

        // V = [y_α ξ], W = [(y_α ⊗ I_k) η] over commutant units y_α
        let mut vcols = Vec::with_capacity(r * r);
        let mut wcols = Vec::with_capacity(r * r);
        for kk in 0..r {
            for l in 0..r {
                let y = gns.commutant_unit_block(i, kk, l);
                vcols.push(&y * &xi);
                let mut w = DVector::<C64>::zeros(k * dim);
                for j in 0..k {
                    let part = &y * eta.rows(j * dim, dim);
                    w.rows_mut(j * dim, dim).copy_from(&part);
                }
                wcols.push(w);
            }
        }
        let v = CMatrix::from_columns(&vcols);
        let w = CMatrix::from_columns(&wcols);
        let gram = numerics::hermitian_part(&(v.adjoint() * &v));
        let ge = eigh_hermitian(&gram)?;
        let gcut = 1e-12 * ge.max().max(f64::MIN_POSITIVE);
        let gram_inv = ge.recompose_with(|x| if x > gcut { 1.0 / x } else { 0.0 });
        let u = &w * gram_inv * v.adjoint();

        // checks: u*u = P, uξ = η
        let proj = &v * ge.recompose_with(|x| if x > gcut { 1.0 / x } else { 0.0 }) * v.adjoint();
        iso = iso.max(numerics::max_abs(&(u.adjoint() * &u - &proj)));
        pur = pur.max((&u * &xi - &eta).iter().fold(0.0, |m, z| m.max(z.norm())));

        for j in 0..k {
            let uj = u.rows(j * dim, dim).into_owned();
            let mut a = CMatrix::zeros(n, n);
            for p in 0..n {
                for q in 0..n {
                    let s: C64 = (0..r).map(|m| uj[(p * r + m, q * r + m)]).sum();
                    a[(p, q)] = s / r as f64;
                }
            }
            inter = inter.max(numerics::max_abs(&(&uj - gns.represent_block(i, &a))));
            per_block[i].push(a * support.block(i));
        }
    }
    if inter > INTERTWINING_TOL {
        return Err(Error::Numerical(format!(
            "purification inconsistent: intertwining residual {inter:.3e} exceeds {INTERTWINING_TOL:.0e}"
        )));
    }

    // Σ a*a equals the support projection up to the extension residual; pin it exactly
    let mut raw_defect: f64 = 0.0;
    for (i, blocks) in per_block.iter_mut().enumerate() {
        if blocks.is_empty() {
            continue;
        }
        let n = algebra.block_dim(i);
        let s = numerics::hermitian_part(&blocks.iter().fold(CMatrix::zeros(n, n), |acc, a| acc + a.adjoint() * a));
        raw_defect = raw_defect.max(numerics::operator_norm(&(&s - support.block(i))));
        let norm = numerics::spectral_map(&s, |x| if x > 0.5 { 1.0 / x.sqrt() } else { 0.0 })?;
        for a in blocks.iter_mut() {
            *a = &*a * &norm;
        }
    }

    let count = per_block.iter().map(Vec::len).max().unwrap_or(0);
    let mut kraus: Vec<Element> = (0..count)
        .map(|j| {
            Element::from_fn(&algebra, |i, n| per_block[i].get(j).cloned().unwrap_or_else(|| CMatrix::zeros(n, n)))
        })
        .collect();
    let complement = &Element::identity(&algebra) - &support;
    if complement.max_abs() > 0.0 {
        kraus.push(complement);
    }
    let kraus = KrausMap::new(&algebra, kraus)?;

    let mut comp: f64 = 0.0;
    for (_, _, _, x) in algebra.matrix_units() {
        let lhs = omega.evaluate(&kraus.apply(&x)?)?;
        comp = comp.max((lhs - rho.evaluate(&x)?).norm());
    }
    let report = ExactChannelReport {
        unitality_defect: kraus.unitality_defect(),
        purification_defect: raw_defect,
        composition_error: comp,
        isometry_residual: iso,
        purification_residual: pur,
        intertwining_residual: inter,
        extension_algebra_residual: cert.algebra_residual,
        extension_commutant_residual: cert.commutant_residual,
        purification_ranks: ranks,
        kraus_count: kraus.len(),
    };
    Ok(ExactChannel { kraus, report })
}
