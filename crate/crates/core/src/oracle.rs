//! Independent validators for the closed-form decisions, and seeded random instances.
//!
//! The oracles solve the defining feasibility problems directly with
//! [`dykstra_feasibility`] and share nothing with [`crate::reachability`]
//! beyond the data types.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::algebra::{AlgebraSpec, Element, Ideal};
use crate::channel::{random_matrix, ModuleMapChoi};
use crate::functional::Functional;
use crate::numerics::{
    self, dykstra_feasibility, eigh_hermitian, AffineConstraint, CMatrix, FeasibilityOptions, FeasibilityOutcome,
    FeasibilityProblem, Infeasibility, C64,
};
use crate::reachability::Verdict;
use crate::{Error, Result, Tolerances};

/// Residual the oracles refine feasible points to.
pub const ORACLE_REFINE_TOL: f64 = 1e-10;

#[derive(Debug, Clone)]
pub struct OracleReport {
    pub verdict: Verdict,
    /// Constraint residual of the returned point, the stalled residual, or the
    /// algebraic defect, depending on the outcome.
    pub residual: f64,
    pub iterations: usize,
    /// The feasible map found by [`choi_membership_oracle`].
    pub choi: Option<ModuleMapChoi>,
    /// `(ρ₁, ρ₂)` found by [`decomposition_oracle`].
    pub split: Option<(Functional, Functional)>,
    pub detail: String,
}

fn report_from(outcome: &FeasibilityOutcome) -> OracleReport {
    let (verdict, residual, iterations, detail) = match outcome {
        FeasibilityOutcome::Feasible(p) => {
            (Verdict::Yes, p.residual, p.iterations, format!("feasible point, min eigenvalue {:.3e}", p.min_eigenvalue))
        }
        FeasibilityOutcome::Infeasible(Infeasibility::Algebraic { defect, .. }) => {
            (Verdict::No, *defect, 0, "affine constraints are inconsistent".to_string())
        }
        FeasibilityOutcome::Infeasible(Infeasibility::Plateau { residual, iterations }) => {
            (Verdict::No, *residual, *iterations, "alternating projections stalled above the plateau".to_string())
        }
        FeasibilityOutcome::Indeterminate { residual, iterations } => (
            Verdict::Indeterminate,
            *residual,
            *iterations,
            "iteration budget exhausted between the feasibility and plateau thresholds".to_string(),
        ),
    };
    OracleReport { verdict, residual, iterations, choi: None, split: None, detail }
}

/// `E_{ab}` of size `n`, as the operator with `tr(E_{ab}·X) = X[b, a]`.
fn unit(n: usize, a: usize, b: usize) -> CMatrix {
    numerics::matrix_unit(n, a, b)
}

/// Searches for a unital completely positive block-preserving map `φ` with
/// `ω∘φ = ρ`, over one Choi variable per block.
///
/// Constraints per block of size `n` (Choi index `k + n·p`):
/// unitality `Σ_k C[k + n·q, k + n·p] = δ_pq`, and composition
/// `Σ_{p,q} D^ω[q, p]·C[k' + n·q, k + n·p] = D^ρ[k', k]` for every `(k, k')`.
pub fn choi_membership_oracle(omega: &Functional, rho: &Functional, tol: &Tolerances) -> Result<OracleReport> {
    let problem = choi_membership_problem(omega, rho, tol)?;
    let outcome = dykstra_feasibility(&problem)?;
    let mut report = report_from(&outcome);
    if let FeasibilityOutcome::Feasible(p) = outcome {
        report.choi =
            Some(ModuleMapChoi::new(omega.algebra(), p.point.blocks.iter().map(numerics::hermitian_part).collect())?);
    }
    Ok(report)
}

/// The feasibility system solved by [`choi_membership_oracle`].
pub fn choi_membership_problem(omega: &Functional, rho: &Functional, tol: &Tolerances) -> Result<FeasibilityProblem> {
    omega.algebra().check_same(rho.algebra())?;
    let algebra = omega.algebra();
    let mut constraints = Vec::new();
    for (i, &n) in algebra.block_dims().iter().enumerate() {
        let nn = n * n;
        for p in 0..n {
            for q in 0..n {
                let mut f = CMatrix::zeros(nn, nn);
                for k in 0..n {
                    f += unit(nn, k + n * p, k + n * q);
                }
                let target = if p == q { C64::new(1.0, 0.0) } else { C64::new(0.0, 0.0) };
                constraints.extend(AffineConstraint::complex(i, &f, target));
            }
        }
        let d = omega.density(i);
        let r = rho.density(i);
        for k in 0..n {
            for kp in 0..n {
                let mut f = CMatrix::zeros(nn, nn);
                for p in 0..n {
                    for q in 0..n {
                        f[(k + n * p, kp + n * q)] += d[(q, p)];
                    }
                }
                constraints.extend(AffineConstraint::complex(i, &f, r[(kp, k)]));
            }
        }
        // ⟨Dᵀ ⊗ P, C⟩ = tr(P·D^ρ) = 0 for the kernel projector P of D^ρ; redundant,
        // but when Dᵀ ⊗ P is semidefinite it lets the solver work on the face
        if let Some(p) = kernel_projector(r)? {
            let face = CMatrix::from_fn(nn, nn, |a, b| d[(b / n, a / n)] * p[(a % n, b % n)]);
            constraints.push(AffineConstraint::single(i, numerics::hermitian_part(&face), 0.0));
        }
    }
    let sizes: Vec<usize> = algebra.block_dims().iter().map(|n| n * n).collect();
    let options = FeasibilityOptions::from_tolerances(tol).refined(ORACLE_REFINE_TOL);
    FeasibilityProblem::new(sizes, constraints, options)
}

/// Relative eigenvalue size treated as an exact kernel of a density.
const KERNEL_TOL: f64 = 1e-12;

fn kernel_projector(d: &CMatrix) -> Result<Option<CMatrix>> {
    let e = numerics::eigh_hermitian(d)?;
    let cut = KERNEL_TOL * e.max().abs().max(e.min().abs()).max(1.0);
    let p = e.recompose_with(|v| if v.abs() <= cut { 1.0 } else { 0.0 });
    Ok((numerics::max_abs(&p) > 0.0).then_some(p))
}

/// Searches for positive `ρ₁`, `ρ₂` with `ρ = ρ₁ − ρ₂`, `ρ₁(1) = ω₊(1)`,
/// `ρ₂(1) = ω₋(1)` and `‖ρ₁|J‖ ≤ ‖ω₊|J‖`, `‖ρ₂|J‖ ≤ ‖ω₋|J‖` for every nonzero
/// ideal `J`, with one scalar slack block per ideal inequality.
pub fn decomposition_oracle(omega: &Functional, rho: &Functional, tol: &Tolerances) -> Result<OracleReport> {
    omega.algebra().check_same(rho.algebra())?;
    let algebra = omega.algebra();
    let b = algebra.num_blocks();
    if b > 16 {
        return Err(Error::IdealLatticeTooLarge { blocks: b, cap: 16 });
    }
    let jordan = omega.jordan_decompose()?;
    let parts = [&jordan.positive_part, &jordan.negative_part];
    // blocks: X1_0..X1_{B-1}, X2_0..X2_{B-1}, then slacks
    let mut sizes: Vec<usize> = algebra.block_dims().to_vec();
    sizes.extend_from_slice(algebra.block_dims());
    let mut constraints = Vec::new();
    for (i, &n) in algebra.block_dims().iter().enumerate() {
        let r = rho.density(i);
        for a in 0..n {
            for c in 0..n {
                let e = unit(n, c, a);
                let target = r[(a, c)];
                let eh = e.adjoint();
                let re = (&e + &eh).scale(0.5);
                let im = (&e - &eh) * C64::new(0.0, -0.5);
                for (op, t) in [(re, target.re), (im, target.im)] {
                    if numerics::max_abs(&op) > 0.0 || t != 0.0 {
                        constraints.push(AffineConstraint::new(vec![(i, op.clone()), (b + i, -op)], t));
                    }
                }
            }
        }
    }
    for (s, part) in parts.iter().enumerate() {
        let terms = (0..b).map(|i| (s * b + i, numerics::identity(algebra.block_dim(i)))).collect();
        constraints.push(AffineConstraint::new(terms, part.mass()));
        let masses = part.block_masses();
        for mask in 1u64..(1 << b) {
            let slack = sizes.len();
            sizes.push(1);
            let ideal = Ideal::from_mask(algebra, mask);
            let mut terms: Vec<(usize, CMatrix)> =
                ideal.support().iter().map(|&i| (s * b + i, numerics::identity(algebra.block_dim(i)))).collect();
            terms.push((slack, numerics::identity(1)));
            let bound = ideal.support().iter().map(|&i| masses[i]).sum();
            constraints.push(AffineConstraint::new(terms, bound));
        }
    }
    let options = FeasibilityOptions::from_tolerances(tol).refined(ORACLE_REFINE_TOL);
    let problem = FeasibilityProblem::new(sizes, constraints, options)?;
    let outcome = dykstra_feasibility(&problem)?;
    let mut report = report_from(&outcome);
    if let FeasibilityOutcome::Feasible(p) = outcome {
        let take = |offset: usize| -> Result<Functional> {
            Functional::new(algebra, (0..b).map(|i| numerics::hermitian_part(&p.point.blocks[offset + i])).collect())
        };
        report.split = Some((take(0)?, take(b)?));
    }
    Ok(report)
}

/// Spectral sign `V·sign(Λ)·V*` (zero eigenvalues map to 1).
fn sign_element(d: &CMatrix) -> Result<CMatrix> {
    Ok(eigh_hermitian(d)?.recompose_with(|v| if v < 0.0 { -1.0 } else { 1.0 }))
}

/// Haar-like unitary: eigenvectors of a random hermitian matrix.
fn random_unitary<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Result<CMatrix> {
    let g = random_matrix(n, n, rng);
    Ok(eigh_hermitian(&numerics::hermitian_part(&g))?.vectors)
}

/// Lower bound for `‖ω|J‖ = sup{|ω(x)| : x ∈ J, ‖x‖ ≤ 1}` by direct search over
/// structured contractions (the unit and spectral signs on `J`) and `samples`
/// random unitaries and contractions supported in `J`.
pub fn variational_ideal_norm(omega: &Functional, ideal: &Ideal, samples: usize, seed: u64) -> Result<f64> {
    omega.algebra().check_same(ideal.algebra())?;
    let algebra = omega.algebra();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let on_ideal = |f: &mut dyn FnMut(usize, usize) -> Result<CMatrix>| -> Result<Element> {
        let mut blocks = Vec::with_capacity(algebra.num_blocks());
        for (i, &n) in algebra.block_dims().iter().enumerate() {
            blocks.push(if ideal.contains_block(i) { f(i, n)? } else { CMatrix::zeros(n, n) });
        }
        Element::new(algebra, blocks)
    };
    let mut best: f64 = 0.0;
    let mut consider = |x: Element| -> Result<()> {
        best = best.max(omega.evaluate(&x)?.norm());
        Ok(())
    };
    consider(on_ideal(&mut |_, n| Ok(CMatrix::identity(n, n)))?)?;
    consider(on_ideal(&mut |i, _| sign_element(omega.density(i)))?)?;
    for _ in 0..samples {
        consider(on_ideal(&mut |_, n| random_unitary(n, &mut rng))?)?;
        consider(on_ideal(&mut |_, n| {
            let g = random_matrix(n, n, &mut rng);
            let norm = numerics::operator_norm(&g);
            Ok(if norm > 0.0 { g.scale(1.0 / norm) } else { g })
        })?)?;
    }
    Ok(best)
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct StateOptions {
    /// Prescribed `ω|Z`: nonnegative, summing to 1.
    pub center: Option<Vec<f64>>,
    /// Upper bound on the rank of every block density.
    pub max_rank: Option<usize>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct HermitianOptions {
    /// Prescribed `tr Dᵢ`.
    pub traces: Option<Vec<f64>>,
    /// Prescribed `‖Dᵢ‖₁`; requires `traces`.
    pub trace_norms: Option<Vec<f64>>,
}

pub fn random_state(algebra: &AlgebraSpec, seed: u64, options: &StateOptions) -> Result<Functional> {
    random_state_with(algebra, &mut ChaCha8Rng::seed_from_u64(seed), options)
}

/// Random state `Dᵢ ∝ GᵢGᵢ*` with Gaussian `Gᵢ` of random rank.
pub fn random_state_with<R: Rng + ?Sized>(
    algebra: &AlgebraSpec,
    rng: &mut R,
    options: &StateOptions,
) -> Result<Functional> {
    let b = algebra.num_blocks();
    let masses = match &options.center {
        Some(c) => {
            if c.len() != b {
                return Err(Error::InvalidArgument(format!("{} center values for {b} blocks", c.len())));
            }
            if c.iter().any(|&v| v.is_nan() || v < 0.0) || (c.iter().sum::<f64>() - 1.0).abs() > 1e-12 {
                return Err(Error::InvalidArgument("center restriction must be nonnegative with sum 1".into()));
            }
            c.clone()
        }
        None => {
            let w: Vec<f64> = (0..b).map(|_| rng.random_range(0.05..1.0)).collect();
            let s: f64 = w.iter().sum();
            w.iter().map(|v| v / s).collect()
        }
    };
    if options.max_rank == Some(0) {
        return Err(Error::InvalidArgument("max_rank must be at least 1".into()));
    }
    let mut densities = Vec::with_capacity(b);
    for (i, &n) in algebra.block_dims().iter().enumerate() {
        let cap = options.max_rank.unwrap_or(n).min(n);
        let rank = rng.random_range(1..=cap);
        let g = random_matrix(n, rank, rng);
        let d = &g * g.adjoint();
        let t = numerics::trace(&d).re;
        densities.push(numerics::hermitian_part(&d.scale(masses[i] / t)));
    }
    Functional::new(algebra, densities)
}

pub fn random_hermitian(algebra: &AlgebraSpec, seed: u64, options: &HermitianOptions) -> Result<Functional> {
    random_hermitian_with(algebra, &mut ChaCha8Rng::seed_from_u64(seed), options)
}

/// Random hermitian functional `Dᵢ = Uᵢ·diag(λ)·Uᵢ*`.
///
/// With prescribed trace `t` and trace norm `N` the positive and negative
/// eigenvalues carry masses `(N + t)/2` and `(N − t)/2`.
pub fn random_hermitian_with<R: Rng + ?Sized>(
    algebra: &AlgebraSpec,
    rng: &mut R,
    options: &HermitianOptions,
) -> Result<Functional> {
    let b = algebra.num_blocks();
    for v in [&options.traces, &options.trace_norms].into_iter().flatten() {
        if v.len() != b {
            return Err(Error::InvalidArgument(format!("{} prescribed values for {b} blocks", v.len())));
        }
    }
    if options.trace_norms.is_some() && options.traces.is_none() {
        return Err(Error::InvalidArgument("prescribed trace norms require prescribed traces".into()));
    }
    let mut densities = Vec::with_capacity(b);
    for (i, &n) in algebra.block_dims().iter().enumerate() {
        let eigenvalues = match (&options.traces, &options.trace_norms) {
            (Some(t), Some(norms)) => split_eigenvalues(n, t[i], norms[i], rng)?,
            (Some(t), None) => {
                let extra = if n == 1 { 0.0 } else { rng.random_range(0.0..1.0) };
                split_eigenvalues(n, t[i], t[i].abs() + extra, rng)?
            }
            _ => (0..n).map(|_| rng.random_range(-1.0..1.0)).collect(),
        };
        let u = random_unitary(n, rng)?;
        let lam =
            CMatrix::from_diagonal(&nalgebra::DVector::from_iterator(n, eigenvalues.iter().map(|&v| C64::new(v, 0.0))));
        densities.push(numerics::hermitian_part(&(&u * lam * u.adjoint())));
    }
    Functional::new(algebra, densities)
}

/// Eigenvalues of an `n×n` hermitian block with trace `t` and trace norm `norm`.
fn split_eigenvalues<R: Rng + ?Sized>(n: usize, t: f64, norm: f64, rng: &mut R) -> Result<Vec<f64>> {
    if norm.is_nan() || norm < t.abs() - 1e-12 {
        return Err(Error::InvalidArgument(format!("trace norm {norm} is below |trace| = {}", t.abs())));
    }
    let pos = ((norm + t) / 2.0).max(0.0);
    let neg = ((norm - t) / 2.0).max(0.0);
    if n == 1 {
        if pos > 1e-12 && neg > 1e-12 {
            return Err(Error::InvalidArgument(format!("a 1x1 block cannot have trace {t} and trace norm {norm}")));
        }
        return Ok(vec![pos - neg]);
    }
    let (n_pos, n_neg) = match (pos > 0.0, neg > 0.0) {
        (true, true) => {
            let k = rng.random_range(1..n);
            (k, n - k)
        }
        (true, false) => (rng.random_range(1..=n), 0),
        (false, true) => (0, rng.random_range(1..=n)),
        (false, false) => (0, 0),
    };
    let mut out = spread(pos, n_pos, rng);
    out.extend(spread(neg, n_neg, rng).into_iter().map(|v| -v));
    out.resize(n, 0.0);
    Ok(out)
}

/// `k` positive weights summing to `mass`.
fn spread<R: Rng + ?Sized>(mass: f64, k: usize, rng: &mut R) -> Vec<f64> {
    if k == 0 {
        return Vec::new();
    }
    let w: Vec<f64> = (0..k).map(|_| rng.random_range(0.1..1.0)).collect();
    let s: f64 = w.iter().sum();
    w.iter().map(|v| mass * v / s).collect()
}

/// Random element with Gaussian blocks.
pub fn random_element<R: Rng + ?Sized>(algebra: &AlgebraSpec, rng: &mut R) -> Element {
    Element::from_fn(algebra, |_, n| random_matrix(n, n, rng))
}

/// Random algebra with `1..=max_blocks` blocks of dimension `1..=max_dim`.
pub fn random_algebra<R: Rng + ?Sized>(max_blocks: usize, max_dim: usize, rng: &mut R) -> AlgebraSpec {
    let b = rng.random_range(1..=max_blocks.max(1));
    AlgebraSpec::new((0..b).map(|_| rng.random_range(1..=max_dim.max(1))).collect()).expect("dimensions are positive")
}
