//! Seeded property suites run by the acceptance tests and by `ucp selftest`.
//!
//! Each suite draws from its own generator derived from the run seed, so suites
//! are independent of each other and of execution order.

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::algebra::{AlgebraSpec, Element, Ideal};
use crate::channel::{kraus_from_choi, random_elementary_with};
use crate::exact_channel::{construct_exact_channel, extension_feasible};
use crate::functional::Functional;
use crate::oracle::{
    choi_membership_oracle, random_algebra, random_element, random_hermitian_with, random_state_with,
    variational_ideal_norm, HermitianOptions, StateOptions,
};
use crate::reachability::{
    build_transport_map, check_hermitian_reachable, check_hermitian_reachable_general, check_more_mixed,
    check_state_reachable, composition_error, derive_central_scalings, is_maximally_mixed, split_residual, Verdict,
};
use crate::{Result, Tolerances};

/// Largest number of blocks in generated algebras.
pub const MAX_BLOCKS: usize = 3;
/// Largest block dimension in generated algebras.
pub const MAX_DIM: usize = 4;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CriterionResult {
    pub id: u8,
    pub name: String,
    pub passed: bool,
    pub cases: usize,
    pub failures: usize,
    /// The suite's headline measurement (largest residual, or disagreement count).
    pub worst: f64,
    pub detail: String,
    #[serde(skip)]
    pub elapsed_ms: u128,
}

impl CriterionResult {
    pub fn line(&self) -> String {
        format!(
            "criterion {} [{}] {}: {} cases, {} failures, worst {:.3e} ({} ms) - {}",
            self.id,
            if self.passed { "PASS" } else { "FAIL" },
            self.name,
            self.cases,
            self.failures,
            self.worst,
            self.elapsed_ms,
            self.detail
        )
    }
}

pub const CRITERIA: [(u8, &str); 7] = [
    (1, "transport map construction"),
    (2, "positive/state criteria versus Choi oracle"),
    (3, "central-weight versus Jordan-split criteria"),
    (4, "exact channel pipeline"),
    (5, "Jordan and central-scaling identities"),
    (6, "maximal mixedness and state symmetry"),
    (7, "oracle integrity"),
];

fn rng_for(seed: u64, id: u8) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed ^ (0x9e37_79b9_7f4a_7c15u64.wrapping_mul(id as u64 + 1)))
}

pub fn run_criterion(id: u8, seed: u64) -> Result<CriterionResult> {
    let start = Instant::now();
    let tol = Tolerances::default();
    let mut rng = rng_for(seed, id);
    let mut r = match id {
        1 => transport_suite(&mut rng, &tol)?,
        2 => state_oracle_suite(&mut rng, &tol)?,
        3 => condition_equivalence_suite(&mut rng, &tol)?,
        4 => exact_channel_suite(&mut rng, &tol)?,
        5 => scaling_suite(&mut rng, &tol)?,
        6 => maximal_mixing_suite(&mut rng, &tol)?,
        7 => oracle_integrity_suite(&mut rng, &tol)?,
        _ => return Err(crate::Error::InvalidArgument(format!("unknown criterion {id}"))),
    };
    r.elapsed_ms = start.elapsed().as_millis();
    Ok(r)
}

/// Runs suites 1–7 concurrently; results are in criterion order.
pub fn run_all(seed: u64) -> Result<Vec<CriterionResult>> {
    std::thread::scope(|s| {
        let handles: Vec<_> = CRITERIA.iter().map(|&(id, _)| s.spawn(move || run_criterion(id, seed))).collect();
        handles.into_iter().map(|h| h.join().expect("suite thread panicked")).collect()
    })
}

/// Failure count plus a description of the first failing case.
#[derive(Default)]
struct Failures {
    count: usize,
    first: Option<String>,
}

impl Failures {
    fn record(&mut self, describe: impl FnOnce() -> String) {
        self.count += 1;
        if self.first.is_none() {
            self.first = Some(describe());
        }
    }
}

fn result(id: u8, cases: usize, failures: Failures, worst: f64, mut detail: String) -> CriterionResult {
    if let Some(first) = failures.first {
        detail.push_str("; first failure: ");
        detail.push_str(&first);
    }
    CriterionResult {
        id,
        name: CRITERIA[id as usize - 1].1.to_string(),
        passed: failures.count == 0 && cases > 0,
        cases,
        failures: failures.count,
        worst,
        detail,
        elapsed_ms: 0,
    }
}

fn dims(f: &Functional) -> String {
    f.algebra().to_string()
}

/// Hermitian `ω` and a `ρ` reachable from it: either the predual image under a
/// random unital map, or a random functional with the same block traces and
/// trace norms scaled down by a random factor.
pub fn reachable_hermitian_pair<R: Rng + ?Sized>(rng: &mut R) -> Result<(Functional, Functional)> {
    let algebra = random_algebra(MAX_BLOCKS, MAX_DIM, rng);
    let omega = random_hermitian_with(&algebra, rng, &HermitianOptions::default())?;
    let rho = if rng.random_bool(0.5) {
        let k = rng.random_range(1..=3);
        random_elementary_with(&algebra, k, rng)?.predual_apply(&omega)?
    } else {
        let traces = omega.block_masses();
        let norms = omega
            .block_trace_norms()?
            .iter()
            .zip(&traces)
            .enumerate()
            .map(|(i, (&n, &t))| {
                if algebra.block_dim(i) == 1 {
                    t.abs()
                } else {
                    t.abs() + rng.random_range(0.0..1.0) * (n - t.abs()).max(0.0)
                }
            })
            .collect();
        random_hermitian_with(&algebra, rng, &HermitianOptions { traces: Some(traces), trace_norms: Some(norms) })?
    };
    Ok((omega, rho))
}

/// A hermitian pair with equal block traces and unrelated trace norms, so that
/// both verdicts occur.
fn mixed_hermitian_pair<R: Rng + ?Sized>(rng: &mut R) -> Result<(Functional, Functional)> {
    let algebra = random_algebra(MAX_BLOCKS, MAX_DIM, rng);
    let omega = random_hermitian_with(&algebra, rng, &HermitianOptions::default())?;
    let traces = omega.block_masses();
    let norms = traces
        .iter()
        .enumerate()
        .map(|(i, t)| if algebra.block_dim(i) == 1 { t.abs() } else { t.abs() + rng.random_range(0.0..1.5) })
        .collect();
    let rho =
        random_hermitian_with(&algebra, rng, &HermitianOptions { traces: Some(traces), trace_norms: Some(norms) })?;
    Ok((omega, rho))
}

fn random_center<R: Rng + ?Sized>(b: usize, allow_zero: bool, rng: &mut R) -> Vec<f64> {
    let mut w: Vec<f64> = (0..b).map(|_| rng.random_range(0.05..1.0)).collect();
    if allow_zero && b > 1 && rng.random_bool(0.3) {
        w[rng.random_range(0..b)] = 0.0;
    }
    let s: f64 = w.iter().sum();
    w.iter().map(|v| v / s).collect()
}

fn random_state_on<R: Rng + ?Sized>(
    algebra: &AlgebraSpec,
    center: Option<Vec<f64>>,
    rng: &mut R,
) -> Result<Functional> {
    let max_rank = if rng.random_bool(0.3) { Some(1) } else { None };
    random_state_with(algebra, rng, &StateOptions { center, max_rank })
}

fn samples<R: Rng + ?Sized>(algebra: &AlgebraSpec, count: usize, rng: &mut R) -> Vec<Element> {
    (0..count).map(|_| random_element(algebra, rng)).collect()
}

fn transport_suite(rng: &mut ChaCha8Rng, tol: &Tolerances) -> Result<CriterionResult> {
    let mut failures = Failures::default();
    let (mut worst_unit, mut worst_cp, mut worst_comp) = (0.0f64, 0.0f64, 0.0f64);
    let cases = 200;
    for _ in 0..cases {
        let (omega, rho) = reachable_hermitian_pair(rng)?;
        let algebra = omega.algebra().clone();
        let psi = match build_transport_map(&omega, &rho, tol) {
            Ok(p) => p,
            Err(e) => {
                failures.record(|| format!("{} transport not built: {e}", dims(&omega)));
                continue;
            }
        };
        let unit = psi.apply(&Element::identity(&algebra))?.distance(&Element::identity(&algebra));
        let min_eig = psi.choi()?.min_eigenvalue()?;
        let xs = samples(&algebra, 50, rng);
        let comp = composition_error(&omega, &rho, |x| psi.apply(x), &xs)?;
        worst_unit = worst_unit.max(unit);
        worst_cp = worst_cp.max(-min_eig);
        worst_comp = worst_comp.max(comp);
        if unit > 1e-9 || min_eig < -1e-9 || comp > 1e-8 {
            failures.record(|| {
                format!("{} unit {unit:.1e}, min eigenvalue {min_eig:.1e}, composition {comp:.1e}", dims(&omega))
            });
        }
    }
    Ok(result(
        1,
        cases,
        failures,
        worst_comp,
        format!("‖ψ(1)−1‖ ≤ {worst_unit:.1e}, Choi min eigenvalue ≥ {:.1e}, composition ≤ {worst_comp:.1e}", -worst_cp),
    ))
}

fn state_oracle_suite(rng: &mut ChaCha8Rng, tol: &Tolerances) -> Result<CriterionResult> {
    let target = 100;
    let mut failures = Failures::default();
    let (mut kept, mut skipped, mut yes) = (0, 0, 0);
    while kept < target {
        let algebra = random_algebra(MAX_BLOCKS, MAX_DIM, rng);
        let b = algebra.num_blocks();
        let omega = random_state_on(&algebra, Some(random_center(b, false, rng)), rng)?;
        let center = if rng.random_bool(0.5) { omega.block_masses() } else { random_center(b, false, rng) };
        let rho = random_state_on(&algebra, Some(center), rng)?;
        let state = check_state_reachable(&omega, &rho, tol)?;
        if !(state.verdict == Verdict::Yes || state.margin.abs() >= 1e-8) {
            skipped += 1;
            continue;
        }
        kept += 1;
        let mixed = check_more_mixed(&omega, &rho, tol)?;
        let oracle = choi_membership_oracle(&omega, &rho, tol)?;
        if state.verdict == Verdict::Yes {
            yes += 1;
        }
        if mixed.verdict != state.verdict || oracle.verdict != state.verdict {
            failures.record(|| {
                format!(
                    "{} state {} (margin {:.1e}), more-mixed {}, oracle {} (residual {:.1e} after {} iterations)",
                    dims(&omega),
                    state.verdict.as_str(),
                    state.margin,
                    mixed.verdict.as_str(),
                    oracle.verdict.as_str(),
                    oracle.residual,
                    oracle.iterations
                )
            });
        }
    }
    let disagreements = failures.count as f64;
    Ok(result(
        2,
        kept,
        failures,
        disagreements,
        format!("{yes} reachable and {} unreachable pairs, {skipped} skipped inside |margin| < 1e-8", kept - yes),
    ))
}

fn condition_equivalence_suite(rng: &mut ChaCha8Rng, tol: &Tolerances) -> Result<CriterionResult> {
    let cases = 200;
    let mut failures = Failures::default();
    let (mut banded, mut yes, mut worst) = (0, 0, 0.0f64);
    for c in 0..cases {
        let (omega, rho) = if c % 2 == 0 { reachable_hermitian_pair(rng)? } else { mixed_hermitian_pair(rng)? };
        let a = check_hermitian_reachable(&omega, &rho, tol)?;
        let b = check_hermitian_reachable_general(&omega, &rho, tol)?;
        if a.verdict == Verdict::Indeterminate || b.decision.verdict == Verdict::Indeterminate {
            banded += 1;
            continue;
        }
        if a.verdict != b.decision.verdict {
            failures.record(|| {
                format!(
                    "{} central-weight {} versus split {}",
                    dims(&omega),
                    a.verdict.as_str(),
                    b.decision.verdict.as_str()
                )
            });
            continue;
        }
        if b.decision.verdict == Verdict::Yes {
            yes += 1;
            let r = match &b.witnesses {
                Some(w) => split_residual(&omega, &rho, w)?,
                None => f64::INFINITY,
            };
            worst = worst.max(r);
            if r > 1e-9 {
                failures.record(|| format!("{} split witness residual {r:.1e}", dims(&omega)));
            }
        }
    }
    Ok(result(
        3,
        cases,
        failures,
        worst,
        format!("{yes} yes / {} no, {banded} inside a band; witness residual ≤ {worst:.1e}", cases - yes - banded),
    ))
}

fn exact_channel_suite(rng: &mut ChaCha8Rng, tol: &Tolerances) -> Result<CriterionResult> {
    let feasible = 50;
    let mut failures = Failures::default();
    let (mut worst_unit, mut worst_comp, mut worst_raw) = (0.0f64, 0.0f64, 0.0f64);
    for _ in 0..feasible {
        let algebra = random_algebra(MAX_BLOCKS, MAX_DIM, rng);
        let center = random_center(algebra.num_blocks(), true, rng);
        let omega = random_state_on(&algebra, Some(center.clone()), rng)?;
        let rho = random_state_on(&algebra, Some(center), rng)?;
        match construct_exact_channel(&omega, &rho, tol) {
            Ok(ch) => {
                let xs = samples(&algebra, 20, rng);
                let comp =
                    composition_error(&omega, &rho, |x| ch.kraus.apply(x), &xs)?.max(ch.report.composition_error);
                let unit = ch.report.unitality_defect;
                worst_unit = worst_unit.max(unit);
                worst_raw = worst_raw.max(ch.report.purification_defect);
                worst_comp = worst_comp.max(comp);
                if unit > 1e-8 || comp > 1e-7 {
                    failures.record(|| format!("{} unitality {unit:.1e}, composition {comp:.1e}", dims(&omega)));
                }
            }
            Err(e) => failures.record(|| format!("{} channel not built: {e}", dims(&omega))),
        }
    }
    // verdict agreement, reachable and unreachable pairs
    let (mut compared, mut disagreements) = (0, 0usize);
    for c in 0..2 * feasible {
        let algebra = random_algebra(MAX_BLOCKS, MAX_DIM, rng);
        let b = algebra.num_blocks();
        let omega = random_state_on(&algebra, Some(random_center(b, true, rng)), rng)?;
        let center = if c % 2 == 0 { omega.block_masses() } else { random_center(b, true, rng) };
        let rho = random_state_on(&algebra, Some(center), rng)?;
        let state = check_state_reachable(&omega, &rho, tol)?;
        if state.verdict != Verdict::Yes && state.margin.abs() < 1e-7 {
            continue;
        }
        compared += 1;
        let ext = extension_feasible(&omega, &rho, tol)?;
        if ext.verdict() != state.verdict {
            disagreements += 1;
            failures.record(|| {
                format!(
                    "{} state {} (margin {:.1e}) but extension {}: {}",
                    dims(&omega),
                    state.verdict.as_str(),
                    state.margin,
                    ext.verdict().as_str(),
                    ext.explanation()
                )
            });
        }
    }
    Ok(result(
        4,
        feasible + compared,
        failures,
        worst_comp,
        format!(
            "{feasible} channels: ‖Σa*a−1‖ ≤ {worst_unit:.1e} ({worst_raw:.1e} before normalization), \
             composition ≤ {worst_comp:.1e}; \
             {disagreements} verdict disagreements on {compared} pairs"
        ),
    ))
}

fn scaling_suite(rng: &mut ChaCha8Rng, tol: &Tolerances) -> Result<CriterionResult> {
    let cases = 200;
    let mut failures = Failures::default();
    let (mut worst_norm, mut worst_id, mut checked) = (0.0f64, 0.0f64, 0);
    for _ in 0..cases {
        let (omega, rho) = reachable_hermitian_pair(rng)?;
        let j = omega.jordan_decompose()?;
        let gap = (omega.norm()? - j.total_mass()).abs();
        worst_norm = worst_norm.max(gap);
        if gap > 1e-10 {
            failures.record(|| format!("{} ‖ω‖ − ω₊(1) − ω₋(1) = {gap:.1e}", dims(&omega)));
        }
        if !check_hermitian_reachable(&omega, &rho, tol)?.is_yes() {
            continue;
        }
        checked += 1;
        let s = derive_central_scalings(&omega, &rho, tol)?;
        let res = s.identity_residuals(&omega, &rho)?;
        let m = res.iter().copied().fold(0.0, f64::max);
        worst_id = worst_id.max(m);
        if m > 1e-10 {
            failures.record(|| format!("{} scaling identity residuals {res:?}", dims(&omega)));
        }
    }
    Ok(result(
        5,
        cases,
        failures,
        worst_norm.max(worst_id),
        format!("norm additivity ≤ {worst_norm:.1e}; scaling identities ≤ {worst_id:.1e} on {checked} pairs"),
    ))
}

fn maximal_mixing_suite(rng: &mut ChaCha8Rng, tol: &Tolerances) -> Result<CriterionResult> {
    let cases = 100;
    let mut failures = Failures::default();
    let mut states = Vec::with_capacity(cases);
    let mut tracial = 0;
    for c in 0..cases {
        let algebra = random_algebra(MAX_BLOCKS, MAX_DIM, rng);
        let omega = if c % 4 == 0 {
            tracial += 1;
            Functional::tracial(&algebra, &random_center(algebra.num_blocks(), false, rng))?
        } else {
            random_state_on(&algebra, Some(random_center(algebra.num_blocks(), true, rng)), rng)?
        };
        let zero_blocks: Vec<usize> = (0..algebra.num_blocks()).filter(|&i| omega.block_masses()[i] == 0.0).collect();
        let kernel = Ideal::new(&algebra, zero_blocks)?;
        let plain = is_maximally_mixed(&omega, None, tol)?;
        if !plain.is_yes() {
            failures.record(|| format!("{} not maximally mixed: {}", dims(&omega), plain.explanation));
        }
        if !kernel.is_zero() {
            let relative = is_maximally_mixed(&omega, Some(&kernel), tol)?;
            if !relative.is_yes() {
                failures.record(|| {
                    format!("{} not maximally mixed modulo {kernel}: {}", dims(&omega), relative.explanation)
                });
            }
        }
        states.push(omega);
    }
    let mut pairs = 0;
    for (i, omega) in states.iter().enumerate() {
        let partners = [
            random_state_on(omega.algebra(), Some(omega.block_masses()), rng)?,
            random_state_on(omega.algebra(), None, rng)?,
            states[(i + 1) % states.len()].clone(),
        ];
        for rho in partners.iter().filter(|r| r.algebra() == omega.algebra()) {
            pairs += 1;
            let forward = check_state_reachable(omega, rho, tol)?.verdict;
            let backward = check_state_reachable(rho, omega, tol)?.verdict;
            if forward != backward {
                failures.record(|| {
                    format!("{} forward {} but backward {}", dims(omega), forward.as_str(), backward.as_str())
                });
            }
        }
    }
    Ok(result(
        6,
        cases,
        failures,
        0.0,
        format!("{cases} states ({tracial} tracial) maximally mixed; symmetry on {pairs} pairs"),
    ))
}

fn oracle_integrity_suite(rng: &mut ChaCha8Rng, tol: &Tolerances) -> Result<CriterionResult> {
    let mut failures = Failures::default();
    let (mut worst_norm, mut worst_rt) = (0.0f64, 0.0f64);
    for _ in 0..500 {
        let algebra = random_algebra(MAX_BLOCKS, MAX_DIM, rng);
        let omega = random_hermitian_with(&algebra, rng, &HermitianOptions::default())?;
        let mask = rng.random_range(0..1u64 << algebra.num_blocks());
        let ideal = Ideal::from_mask(&algebra, mask);
        let v = variational_ideal_norm(&omega, &ideal, 4, rng.random())?;
        let gap = (v - omega.ideal_norm(&ideal)?).abs();
        worst_norm = worst_norm.max(gap);
        if gap > 1e-9 {
            failures.record(|| format!("{} ideal {ideal}: variational gap {gap:.1e}", dims(&omega)));
        }
    }
    for _ in 0..100 {
        let algebra = random_algebra(MAX_BLOCKS, MAX_DIM, rng);
        let k = rng.random_range(1..=4);
        let choi = random_elementary_with(&algebra, k, rng)?.choi();
        let back = kraus_from_choi(&choi, tol.eig)?.choi();
        let gap = choi.max_abs_diff(&back)?;
        worst_rt = worst_rt.max(gap);
        if gap > 1e-9 {
            failures.record(|| format!("{algebra} with {k} Kraus operators: roundtrip {gap:.1e}"));
        }
    }
    Ok(result(
        7,
        600,
        failures,
        worst_norm.max(worst_rt),
        format!("ideal-norm gap ≤ {worst_norm:.1e} on 500 pairs; Kraus/Choi roundtrip ≤ {worst_rt:.1e} on 100 maps"),
    ))
}
