use super::{eigh_hermitian, hermitian_residual, CMatrix, C64};
use crate::{Error, Result, Tolerances};

/// Block-diagonal hermitian matrix; the variable of a [`FeasibilityProblem`].
#[derive(Debug, Clone, PartialEq)]
pub struct BlockMatrix {
    pub blocks: Vec<CMatrix>,
}

impl BlockMatrix {
    pub fn zeros(sizes: &[usize]) -> Self {
        Self { blocks: sizes.iter().map(|&n| CMatrix::zeros(n, n)).collect() }
    }

    pub fn sizes(&self) -> Vec<usize> {
        self.blocks.iter().map(|b| b.nrows()).collect()
    }

    pub fn frobenius(&self) -> f64 {
        self.blocks.iter().map(|b| b.iter().map(|z| z.norm_sqr()).sum::<f64>()).sum::<f64>().sqrt()
    }

    fn sub(&self, other: &Self) -> Self {
        Self { blocks: self.blocks.iter().zip(&other.blocks).map(|(a, b)| a - b).collect() }
    }

    fn add(&self, other: &Self) -> Self {
        Self { blocks: self.blocks.iter().zip(&other.blocks).map(|(a, b)| a + b).collect() }
    }
}

/// One real affine constraint `Σ_b Re tr(A_b·X_b) = target` with hermitian `A_b`.
#[derive(Debug, Clone)]
pub struct AffineConstraint {
    pub terms: Vec<(usize, CMatrix)>,
    pub target: f64,
}

impl AffineConstraint {
    pub fn new(terms: Vec<(usize, CMatrix)>, target: f64) -> Self {
        Self { terms, target }
    }

    pub fn single(block: usize, operator: CMatrix, target: f64) -> Self {
        Self { terms: vec![(block, operator)], target }
    }

    /// Splits the complex condition `tr(F·X_b) = target` on hermitian `X_b` into
    /// its real and imaginary parts. A part whose operator vanishes is kept only
    /// when its target is nonzero, so the inconsistency stays visible.
    pub fn complex(block: usize, f: &CMatrix, target: C64) -> Vec<Self> {
        let fa = f.adjoint();
        let re = (f + &fa).scale(0.5);
        let im = (f - &fa) * C64::new(0.0, -0.5);
        let mut out = Vec::with_capacity(2);
        for (op, t) in [(re, target.re), (im, target.im)] {
            if super::max_abs(&op) > 0.0 || t != 0.0 {
                out.push(Self::single(block, op, t));
            }
        }
        out
    }

    pub fn evaluate(&self, x: &BlockMatrix) -> f64 {
        self.terms.iter().map(|(b, a)| re_trace_product(a, &x.blocks[*b])).sum()
    }

    fn inner(&self, other: &Self) -> f64 {
        let mut s = 0.0;
        for (b, a) in &self.terms {
            for (c, o) in &other.terms {
                if b == c {
                    s += re_trace_product(a, o);
                }
            }
        }
        s
    }
}

fn re_trace_product(a: &CMatrix, b: &CMatrix) -> f64 {
    let n = a.nrows();
    let mut s = 0.0;
    for i in 0..n {
        for k in 0..n {
            let x = a[(i, k)];
            if x.re != 0.0 || x.im != 0.0 {
                s += (x * b[(k, i)]).re;
            }
        }
    }
    s
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FeasibilityOptions {
    /// Constraint residual accepted for a feasible point (ε_feas).
    pub tol: f64,
    /// Residual above which a stalled run is declared infeasible.
    pub plateau: f64,
    pub max_iter: usize,
    /// Once feasible at `tol`, keep iterating (up to another `max_iter`) towards this residual.
    pub refine_tol: Option<f64>,
    pub scheme: ProjectionScheme,
}

/// How the two projections are combined.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ProjectionScheme {
    /// Reflect-average iteration `z ← z + P_L(2P_K z − z) − P_K z`; much faster
    /// than plain alternation when the intersection is thin.
    #[default]
    DouglasRachford,
    /// Alternating projections with a correction term on the cone step.
    Dykstra,
}

impl FeasibilityOptions {
    pub fn from_tolerances(tol: &Tolerances) -> Self {
        Self {
            tol: tol.feas,
            plateau: tol.plateau,
            max_iter: tol.max_iter,
            refine_tol: None,
            scheme: ProjectionScheme::default(),
        }
    }

    pub fn refined(mut self, target: f64) -> Self {
        self.refine_tol = Some(target.min(self.tol));
        self
    }

    pub fn with_scheme(mut self, scheme: ProjectionScheme) -> Self {
        self.scheme = scheme;
        self
    }
}

impl Default for FeasibilityOptions {
    fn default() -> Self {
        Self::from_tolerances(&Tolerances::default())
    }
}

/// Find `X = ⊕_b X_b` with every `X_b ⪰ 0` and all affine constraints satisfied.
#[derive(Debug, Clone)]
pub struct FeasibilityProblem {
    block_sizes: Vec<usize>,
    constraints: Vec<AffineConstraint>,
    options: FeasibilityOptions,
}

impl FeasibilityProblem {
    pub fn new(
        block_sizes: Vec<usize>,
        constraints: Vec<AffineConstraint>,
        options: FeasibilityOptions,
    ) -> Result<Self> {
        if constraints.is_empty() {
            return Err(Error::InvalidArgument("feasibility problem without constraints".into()));
        }
        if block_sizes.is_empty() {
            return Err(Error::InvalidArgument("feasibility problem without blocks".into()));
        }
        for (k, c) in constraints.iter().enumerate() {
            for (b, a) in &c.terms {
                let size = *block_sizes
                    .get(*b)
                    .ok_or_else(|| Error::InvalidArgument(format!("constraint {k} references block {b}")))?;
                if a.nrows() != size || a.ncols() != size {
                    return Err(Error::Shape(format!(
                        "constraint {k} block {b}: {}x{} operator for size {size}",
                        a.nrows(),
                        a.ncols()
                    )));
                }
                let residual = hermitian_residual(a);
                if residual > 1e-12 * super::max_abs(a).max(1.0) {
                    return Err(Error::NotHermitian { residual });
                }
            }
        }
        Ok(Self { block_sizes, constraints, options })
    }

    pub fn dimension(&self) -> usize {
        self.block_sizes.iter().sum()
    }

    pub fn block_sizes(&self) -> &[usize] {
        &self.block_sizes
    }

    pub fn constraints(&self) -> &[AffineConstraint] {
        &self.constraints
    }

    pub fn options(&self) -> FeasibilityOptions {
        self.options
    }

    /// Largest absolute constraint violation at `x`.
    pub fn residual(&self, x: &BlockMatrix) -> f64 {
        self.constraints.iter().map(|c| (c.evaluate(x) - c.target).abs()).fold(0.0, f64::max)
    }
}

#[derive(Debug, Clone)]
pub struct FeasiblePoint {
    pub point: BlockMatrix,
    pub residual: f64,
    pub min_eigenvalue: f64,
    pub iterations: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Infeasibility {
    /// Some combination `y` has `Σ y_k A_k = 0` but `Σ y_k b_k = defect > 0`.
    Algebraic { combination: Vec<f64>, defect: f64 },
    /// Alternating projections stalled with the given constraint residual.
    Plateau { residual: f64, iterations: usize },
}

#[derive(Debug, Clone)]
pub enum FeasibilityOutcome {
    Feasible(FeasiblePoint),
    Infeasible(Infeasibility),
    Indeterminate { residual: f64, iterations: usize },
}

impl FeasibilityOutcome {
    pub fn is_feasible(&self) -> bool {
        matches!(self, Self::Feasible(_))
    }

    pub fn is_infeasible(&self) -> bool {
        matches!(self, Self::Infeasible(_))
    }
}

const PLATEAU_WINDOW: usize = 500;
const PLATEAU_RELATIVE_PROGRESS: f64 = 1e-3;
const RESTART_PATIENCE: usize = 5;
const FROZEN_STEP: f64 = 1e-11;

/// Orthogonal projection onto the affine constraint set through a
/// pseudo-inverse of the constraint Gram matrix.
struct AffineProjector<'a> {
    constraints: &'a [AffineConstraint],
    gram_pinv: Vec<Vec<f64>>,
    targets: Vec<f64>,
}

impl<'a> AffineProjector<'a> {
    fn build(problem: &'a FeasibilityProblem) -> Result<std::result::Result<Self, Infeasibility>> {
        let cs = &problem.constraints;
        let m = cs.len();
        let mut gram = CMatrix::zeros(m, m);
        for i in 0..m {
            for j in i..m {
                let g = cs[i].inner(&cs[j]);
                gram[(i, j)] = C64::new(g, 0.0);
                gram[(j, i)] = C64::new(g, 0.0);
            }
        }
        let e = eigh_hermitian(&gram)?;
        let cutoff = 1e-12 * e.max().max(f64::MIN_POSITIVE);
        let mut pinv = vec![vec![0.0; m]; m];
        let mut range = vec![vec![0.0; m]; m];
        for (k, &lambda) in e.values.iter().enumerate() {
            if lambda <= cutoff {
                continue;
            }
            for i in 0..m {
                let vi = e.vectors[(i, k)].re;
                for j in 0..m {
                    let vj = e.vectors[(j, k)].re;
                    pinv[i][j] += vi * vj / lambda;
                    range[i][j] += vi * vj;
                }
            }
        }
        let b: Vec<f64> = cs.iter().map(|c| c.target).collect();
        let projected: Vec<f64> = (0..m).map(|i| (0..m).map(|j| range[i][j] * b[j]).sum()).collect();
        let diff: Vec<f64> = b.iter().zip(&projected).map(|(x, y)| x - y).collect();
        let defect = diff.iter().map(|d| d * d).sum::<f64>().sqrt();
        let scale = b.iter().fold(1.0f64, |a, x| a.max(x.abs()));
        if defect > 1e-2 * problem.options.tol * scale {
            let combination = diff.iter().map(|d| d / defect).collect();
            return Ok(Err(Infeasibility::Algebraic { combination, defect }));
        }
        Ok(Ok(Self { constraints: cs, gram_pinv: pinv, targets: projected }))
    }

    fn project(&self, x: &BlockMatrix) -> BlockMatrix {
        let m = self.constraints.len();
        let r: Vec<f64> = self.constraints.iter().zip(&self.targets).map(|(c, t)| c.evaluate(x) - t).collect();
        let z: Vec<f64> = (0..m).map(|i| (0..m).map(|j| self.gram_pinv[i][j] * r[j]).sum()).collect();
        let mut out = x.clone();
        for (c, &zk) in self.constraints.iter().zip(&z) {
            if zk == 0.0 {
                continue;
            }
            for (b, a) in &c.terms {
                out.blocks[*b] -= a.scale(zk);
            }
        }
        out
    }
}

fn project_psd_blocks(x: &BlockMatrix) -> Result<(BlockMatrix, f64)> {
    let mut min_eig = f64::INFINITY;
    let mut blocks = Vec::with_capacity(x.blocks.len());
    for b in &x.blocks {
        if b.nrows() == 1 {
            let v = b[(0, 0)].re.max(0.0);
            min_eig = min_eig.min(v);
            blocks.push(CMatrix::from_element(1, 1, C64::new(v, 0.0)));
            continue;
        }
        let e = eigh_hermitian(b)?;
        min_eig = min_eig.min(e.min().max(0.0));
        blocks.push(e.recompose_with(|v| v.max(0.0)));
    }
    Ok((BlockMatrix { blocks }, min_eig))
}

fn min_eigenvalue(x: &BlockMatrix) -> Result<f64> {
    let mut m = f64::INFINITY;
    for b in &x.blocks {
        m = m.min(eigh_hermitian(b)?.min());
    }
    Ok(m)
}

/// Projection-based feasibility search between the PSD cone and the affine set.
///
/// The affine projection is exact (closed form through the Gram pseudo-inverse).
/// The cone iterate is the candidate: it is accepted when it violates every
/// constraint by at most `tol`. If the affine projection of the accepted point
/// is also PSD, that point (exact constraints) is returned instead. A run whose
/// best residual stops improving above `plateau` is reported infeasible.
///
/// Before iterating, every single-block constraint `⟨A, X_b⟩ = 0` with
/// semidefinite `A` confines `X_b` to `ker A`; the search then runs on the
/// compressed blocks `V*X_bV` and the result is lifted back.
pub fn dykstra_feasibility(problem: &FeasibilityProblem) -> Result<FeasibilityOutcome> {
    let bases = face_bases(problem)?;
    if bases.iter().all(Option::is_none) {
        return search(problem);
    }
    let reduced = compress(problem, &bases);
    Ok(match search(&reduced)? {
        FeasibilityOutcome::Feasible(p) => {
            let point = BlockMatrix {
                blocks: p
                    .point
                    .blocks
                    .iter()
                    .zip(&bases)
                    .map(|(z, v)| match v {
                        Some(v) => v * z * v.adjoint(),
                        None => z.clone(),
                    })
                    .collect(),
            };
            let residual = problem.residual(&point);
            let min_eigenvalue = p.min_eigenvalue.min(if bases.iter().flatten().any(|v| v.ncols() < v.nrows()) {
                0.0
            } else {
                f64::INFINITY
            });
            FeasibilityOutcome::Feasible(FeasiblePoint { point, residual, min_eigenvalue, iterations: p.iterations })
        }
        other => other,
    })
}

/// Relative size below which an eigenvalue of a face operator counts as zero.
const FACE_KERNEL_TOL: f64 = 1e-10;

/// Orthonormal bases of the faces forced by zero-target semidefinite constraints
/// (`None` where a block is unrestricted).
fn face_bases(problem: &FeasibilityProblem) -> Result<Vec<Option<CMatrix>>> {
    let mut bases: Vec<Option<CMatrix>> = vec![None; problem.block_sizes.len()];
    for c in &problem.constraints {
        if c.target != 0.0 || c.terms.len() != 1 {
            continue;
        }
        let (b, a) = &c.terms[0];
        let e = eigh_hermitian(a)?;
        let scale = e.max().abs().max(e.min().abs());
        if scale == 0.0 || (e.min() < -FACE_KERNEL_TOL * scale && e.max() > FACE_KERNEL_TOL * scale) {
            continue;
        }
        let current = bases[*b].clone().unwrap_or_else(|| CMatrix::identity(a.nrows(), a.nrows()));
        let local = eigh_hermitian(&super::hermitian_part(&(current.adjoint() * a * &current)))?;
        let kernel: Vec<usize> =
            (0..local.dim()).filter(|&k| local.values[k].abs() <= FACE_KERNEL_TOL * scale).collect();
        if kernel.len() == local.dim() {
            continue;
        }
        let mut w = CMatrix::zeros(local.dim(), kernel.len());
        for (col, &k) in kernel.iter().enumerate() {
            w.set_column(col, &local.vectors.column(k));
        }
        bases[*b] = Some(current * w);
    }
    Ok(bases)
}

fn compress(problem: &FeasibilityProblem, bases: &[Option<CMatrix>]) -> FeasibilityProblem {
    let block_sizes =
        problem.block_sizes.iter().zip(bases).map(|(&n, v)| v.as_ref().map_or(n, |v| v.ncols())).collect();
    let constraints = problem
        .constraints
        .iter()
        .map(|c| AffineConstraint {
            terms: c
                .terms
                .iter()
                .map(|(b, a)| {
                    let op = match &bases[*b] {
                        Some(v) => super::hermitian_part(&(v.adjoint() * a * v)),
                        None => a.clone(),
                    };
                    (*b, op)
                })
                .collect(),
            target: c.target,
        })
        .collect();
    FeasibilityProblem { block_sizes, constraints, options: problem.options }
}

fn search(problem: &FeasibilityProblem) -> Result<FeasibilityOutcome> {
    let opts = problem.options;
    let projector = match AffineProjector::build(problem)? {
        Ok(p) => p,
        Err(cert) => return Ok(FeasibilityOutcome::Infeasible(cert)),
    };

    let zero = BlockMatrix::zeros(&problem.block_sizes);
    let mut x = projector.project(&zero);
    let mut correction = zero;
    let mut history: Vec<f64> = Vec::with_capacity(opts.max_iter.min(1 << 16));
    let mut feasible_at: Option<usize> = None;
    let mut best: Option<(BlockMatrix, f64, f64)> = None;
    let (mut previous_y, mut frozen): (Option<BlockMatrix>, usize) = (None, 0);
    let budget = opts.max_iter * if opts.refine_tol.is_some() { 2 } else { 1 };

    for it in 1..=budget {
        let (y, min_eig) = match opts.scheme {
            ProjectionScheme::DouglasRachford => {
                // x is the governing sequence z
                let (y, min_eig) = project_psd_blocks(&x)?;
                let reflected = projector.project(&y.add(&y).sub(&x));
                x = x.add(&reflected).sub(&y);
                (y, min_eig)
            }
            ProjectionScheme::Dykstra => {
                let w = x.add(&correction);
                let (y, min_eig) = project_psd_blocks(&w)?;
                correction = w.sub(&y);
                x = projector.project(&y);
                (y, min_eig)
            }
        };
        let residual = problem.residual(&y);
        if opts.scheme == ProjectionScheme::DouglasRachford {
            // a frozen cone iterate means z is drifting inside the normal cone; restart from it
            let moved = previous_y.as_ref().map_or(f64::INFINITY, |p: &BlockMatrix| y.sub(p).frobenius());
            frozen = if moved <= FROZEN_STEP * y.frobenius().max(1.0) { frozen + 1 } else { 0 };
            if frozen >= RESTART_PATIENCE {
                x = y.clone();
                frozen = 0;
            }
            previous_y = Some(y.clone());
        }

        if residual <= opts.tol {
            let improved = best.as_ref().is_none_or(|(_, r, _)| residual < *r);
            if improved {
                best = Some((y.clone(), residual, min_eig));
            }
            let at = *feasible_at.get_or_insert(it);
            let done = match opts.refine_tol {
                None => true,
                Some(target) => residual <= target || it >= at + opts.max_iter,
            };
            if done {
                let (point, residual, min_eig) = best.take().expect("recorded above");
                return Ok(FeasibilityOutcome::Feasible(polish(problem, &projector, point, residual, min_eig, it)?));
            }
            continue;
        }
        if feasible_at.is_some() {
            continue;
        }

        // the Douglas–Rachford residual is not monotone, so stalls are judged on the running best
        let best_so_far = history.last().map_or(residual, |b: &f64| b.min(residual));
        history.push(best_so_far);
        if it >= 2 * PLATEAU_WINDOW && best_so_far > opts.plateau {
            // compare against the running best at half the iteration count
            let before = history[it / 2 - 1];
            if before - best_so_far < PLATEAU_RELATIVE_PROGRESS * best_so_far {
                return Ok(FeasibilityOutcome::Infeasible(Infeasibility::Plateau {
                    residual: best_so_far,
                    iterations: it,
                }));
            }
        }
        if it >= opts.max_iter {
            return Ok(if best_so_far > opts.plateau {
                FeasibilityOutcome::Infeasible(Infeasibility::Plateau { residual: best_so_far, iterations: it })
            } else {
                FeasibilityOutcome::Indeterminate { residual: best_so_far, iterations: it }
            });
        }
    }
    let (point, residual, min_eig) = best.expect("refinement only runs after a feasible iterate");
    Ok(FeasibilityOutcome::Feasible(polish(problem, &projector, point, residual, min_eig, budget)?))
}

fn polish(
    problem: &FeasibilityProblem,
    projector: &AffineProjector<'_>,
    point: BlockMatrix,
    residual: f64,
    min_eig: f64,
    iterations: usize,
) -> Result<FeasiblePoint> {
    let exact = projector.project(&point);
    let exact_min = min_eigenvalue(&exact)?;
    if exact_min >= 0.0 {
        let r = problem.residual(&exact);
        if r <= residual {
            return Ok(FeasiblePoint { point: exact, residual: r, min_eigenvalue: exact_min, iterations });
        }
    }
    Ok(FeasiblePoint { point, residual, min_eigenvalue: min_eig, iterations })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::matrix_unit;

    fn c(re: f64) -> C64 {
        C64::new(re, 0.0)
    }

    fn opts() -> FeasibilityOptions {
        FeasibilityOptions::default()
    }

    #[test]
    fn trace_and_diagonal_balance_is_feasible() {
        let tr = CMatrix::identity(2, 2);
        let bal = CMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![c(1.0), c(-1.0)]));
        let p = FeasibilityProblem::new(
            vec![2],
            vec![AffineConstraint::single(0, tr, 1.0), AffineConstraint::single(0, bal, 0.0)],
            opts(),
        )
        .unwrap();
        match dykstra_feasibility(&p).unwrap() {
            FeasibilityOutcome::Feasible(pt) => {
                assert!(pt.residual <= 1e-7);
                assert!(pt.min_eigenvalue >= -1e-7);
                let x = &pt.point.blocks[0];
                assert!((x[(0, 0)] - c(0.5)).norm() < 1e-6);
            }
            other => panic!("expected feasible, got {other:?}"),
        }
    }

    #[test]
    fn both_schemes_find_the_balanced_point() {
        let tr = CMatrix::identity(2, 2);
        let bal = CMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![c(1.0), c(-1.0)]));
        for scheme in [ProjectionScheme::DouglasRachford, ProjectionScheme::Dykstra] {
            let p = FeasibilityProblem::new(
                vec![2],
                vec![AffineConstraint::single(0, tr.clone(), 1.0), AffineConstraint::single(0, bal.clone(), 0.0)],
                opts().with_scheme(scheme),
            )
            .unwrap();
            assert!(matches!(dykstra_feasibility(&p).unwrap(), FeasibilityOutcome::Feasible(_)), "{scheme:?}");
        }
    }

    #[test]
    fn contradictory_traces_are_algebraically_infeasible() {
        let tr = CMatrix::identity(2, 2);
        let p = FeasibilityProblem::new(
            vec![2],
            vec![AffineConstraint::single(0, tr.clone(), 1.0), AffineConstraint::single(0, tr, 2.0)],
            opts(),
        )
        .unwrap();
        match dykstra_feasibility(&p).unwrap() {
            FeasibilityOutcome::Infeasible(Infeasibility::Algebraic { combination, defect }) => {
                assert!(defect > 0.1);
                // y₁·1 + y₂·2 ≠ 0 while y₁ + y₂ = 0
                assert!((combination[0] + combination[1]).abs() < 1e-9);
            }
            other => panic!("expected algebraic infeasibility, got {other:?}"),
        }
    }

    #[test]
    fn large_off_diagonal_is_infeasible() {
        // X₁₂ = 0.7 needs X₁₁X₂₂ ≥ 0.49, but X₁₁X₂₂ ≤ 1/4 at unit trace.
        let mut constraints = vec![AffineConstraint::single(0, CMatrix::identity(2, 2), 1.0)];
        constraints.extend(AffineConstraint::complex(0, &matrix_unit(2, 1, 0), c(0.7)));
        let p = FeasibilityProblem::new(vec![2], constraints, opts()).unwrap();
        match dykstra_feasibility(&p).unwrap() {
            FeasibilityOutcome::Infeasible(Infeasibility::Plateau { residual, .. }) => {
                assert!(residual > 1e-5);
            }
            other => panic!("expected plateau infeasibility, got {other:?}"),
        }
    }

    #[test]
    fn strictly_feasible_instances_are_found() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(9);
        for _ in 0..20 {
            let n = 3;
            let g = CMatrix::from_fn(n, n, |_, _| C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)));
            let x0 = &g * g.adjoint() + CMatrix::identity(n, n).scale(0.1);
            let mut constraints = Vec::new();
            for _ in 0..4 {
                let h =
                    CMatrix::from_fn(n, n, |_, _| C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)));
                let h = (&h + h.adjoint()).scale(0.5);
                let t = re_trace_product(&h, &x0);
                constraints.push(AffineConstraint::single(0, h, t));
            }
            let p = FeasibilityProblem::new(vec![n], constraints, opts()).unwrap();
            let out = dykstra_feasibility(&p).unwrap();
            assert!(out.is_feasible(), "{out:?}");
        }
    }

    #[test]
    fn rejects_empty_constraint_list() {
        assert!(FeasibilityProblem::new(vec![2], vec![], opts()).is_err());
    }
}
