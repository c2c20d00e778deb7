//! Decision procedures for the mixing preorder and the explicit transport map.
//!
//! Every check reduces its quantifiers ("for every ideal", "for every positive
//! central weight") to per-block inequalities. A decision records the largest
//! violation `v` of its conditions and reports `margin = −v`. With
//! `η = dec·max(‖ω‖, ‖ρ‖, 1)` the verdict is
//!
//! - `yes` when `v ≤ η/1000` (conditions hold up to round-off),
//! - `indeterminate` when `η/1000 < v < η`,
//! - `no` when `v ≥ η`.

use serde::{Deserialize, Serialize};

use crate::algebra::{AlgebraSpec, CenterElement, Element, Ideal, IDEAL_ENUMERATION_CAP};
use crate::channel::{KrausMap, ModuleMapChoi};
use crate::functional::{CenterModuleMap, Functional};
use crate::numerics::CMatrix;
use crate::{Error, Result, Tolerances};

/// Ratio between the decision band `η` and the round-off band for "yes".
pub const EXACT_BAND_RATIO: f64 = 1e-3;

/// Block masses at most this multiple of the scale count as zero when forming supports.
pub const MASS_FLOOR: f64 = 1e-12;

pub const CRITERION_POSITIVE: &str =
    "ideal-norm criterion for positive functionals: ρ(1) = ω(1) and ‖ρ|J‖ ≤ ‖ω|J‖ for every ideal J";
pub const CRITERION_STATE: &str = "center criterion for states: ρ|Z = ω|Z";
pub const CRITERION_HERMITIAN: &str =
    "central-weight criterion for hermitian functionals: ρ|Z = ω|Z and ‖cρ‖ ≤ ‖cω‖ for every c ∈ Z₊";
pub const CRITERION_JORDAN_SPLIT: &str = "Jordan-split criterion: ρ = ρ₁ − ρ₂ with ρ₁, ρ₂ ≥ 0, ρ₁(1) = ω₊(1), \
     ρ₂(1) = ω₋(1), ‖ρ₁|J‖ ≤ ‖ω₊|J‖ and ‖ρ₂|J‖ ≤ ‖ω₋|J‖ for every ideal J";
pub const CRITERION_MAXIMALLY_MIXED: &str = "maximal mixedness: ω(J_A) = 0 for the strong radical J_A, \
     and every primitive ideal containing J_A is maximal";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    Yes,
    No,
    Indeterminate,
}

impl Verdict {
    /// `0` yes, `1` no, `2` indeterminate.
    pub fn exit_code(self) -> i32 {
        match self {
            Verdict::Yes => 0,
            Verdict::No => 1,
            Verdict::Indeterminate => 2,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Verdict::Yes => "yes",
            Verdict::No => "no",
            Verdict::Indeterminate => "indeterminate",
        }
    }
}

impl std::fmt::Display for Verdict {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Evidence attached to a decision. Block indices are 0-based.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Certificate {
    /// `ρ(1) ≠ ω(1)`.
    MassMismatch { omega: f64, rho: f64 },
    /// `‖ρ|J‖ > ‖ω|J‖` for the ideal with the given block support.
    ViolatedIdeal { ideal: Vec<usize>, omega_norm: f64, rho_norm: f64 },
    /// `ρ|Z ≠ ω|Z` at one block.
    CenterMismatch { block: usize, omega: f64, rho: f64 },
    /// `‖ρᵢ‖₁ > ‖ωᵢ‖₁`: the indicator of block `i` is a violated central weight.
    TraceNormViolation { block: usize, omega_norm: f64, rho_norm: f64 },
    /// `tr(ρᵢ)± > tr(ωᵢ)±` for the positive or negative Jordan part.
    JordanMassViolation { block: usize, part: JordanPart, omega: f64, rho: f64 },
    /// Equal center restrictions.
    CenterMatch { center: Vec<f64> },
    /// Per-block masses and trace norms satisfying the conditions.
    BlockBounds { center: Vec<f64>, omega_norms: Vec<f64>, rho_norms: Vec<f64> },
    /// Central scalings and the Jordan masses of the witnesses `ρ₁`, `ρ₂`.
    SplitWitness { c_plus: Vec<f64>, c_minus: Vec<f64>, rho1_masses: Vec<f64>, rho2_masses: Vec<f64> },
    /// The strong radical of the (quotient) algebra and the mass of `ω` on it.
    StrongRadical { quotient_blocks: Vec<usize>, radical: Vec<usize>, mass: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum JordanPart {
    Positive,
    Negative,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Decision {
    pub verdict: Verdict,
    /// Signed distance to the decision boundary: minus the largest violation.
    pub margin: f64,
    pub certificate: Option<Certificate>,
    pub explanation: String,
    pub theorem: String,
}

impl Decision {
    pub fn is_yes(&self) -> bool {
        self.verdict == Verdict::Yes
    }

    pub fn is_no(&self) -> bool {
        self.verdict == Verdict::No
    }
}

/// `η = dec·max(‖ω‖, ‖ρ‖, 1)`.
pub fn decision_band(omega: &Functional, rho: &Functional, tol: &Tolerances) -> Result<f64> {
    Ok(tol.dec * omega.norm()?.max(rho.norm()?).max(1.0))
}

/// Verdict for a largest violation `v` against the band `η`.
pub fn classify(v: f64, band: f64) -> Verdict {
    if v <= EXACT_BAND_RATIO * band {
        Verdict::Yes
    } else if v < band {
        Verdict::Indeterminate
    } else {
        Verdict::No
    }
}

/// Tracks the largest violation and the certificate that produced it.
struct Violations {
    worst: f64,
    certificate: Option<Certificate>,
}

impl Violations {
    fn new() -> Self {
        Self { worst: f64::NEG_INFINITY, certificate: None }
    }

    fn consider(&mut self, v: f64, certificate: impl FnOnce() -> Certificate) {
        if v > self.worst {
            self.worst = v;
            self.certificate = Some(certificate());
        }
    }

    fn decide(self, band: f64, on_yes: Certificate, theorem: &str, yes: &str, no: &str) -> Decision {
        let v = self.worst.max(f64::MIN);
        let verdict = classify(v, band);
        let (certificate, explanation) = match verdict {
            Verdict::Yes => (Some(on_yes), yes.to_string()),
            Verdict::No => (self.certificate, no.to_string()),
            Verdict::Indeterminate => (
                self.certificate,
                format!("largest violation {v:.3e} lies inside the indeterminate band (η = {band:.3e})"),
            ),
        };
        Decision { verdict, margin: -v, certificate, explanation, theorem: theorem.to_string() }
    }
}

fn check_pair(omega: &Functional, rho: &Functional) -> Result<()> {
    omega.algebra().check_same(rho.algebra())
}

/// Largest `‖ρ|J‖ − ‖ω|J‖` over all ideals, by enumerating block subsets.
///
/// Returns the violation and the maximizing support (0-based).
pub fn ideal_excess_enumerated(omega_norms: &[f64], rho_norms: &[f64]) -> Result<(f64, Vec<usize>)> {
    let b = omega_norms.len();
    if b > IDEAL_ENUMERATION_CAP {
        return Err(Error::IdealLatticeTooLarge { blocks: b, cap: IDEAL_ENUMERATION_CAP });
    }
    let diffs: Vec<f64> = rho_norms.iter().zip(omega_norms).map(|(r, w)| r - w).collect();
    let count = 1usize << b;
    let mut sums = vec![0.0; count];
    let (mut best, mut best_mask) = (0.0, 0usize);
    for mask in 1..count {
        let low = mask.trailing_zeros() as usize;
        sums[mask] = sums[mask & (mask - 1)] + diffs[low];
        if sums[mask] > best {
            best = sums[mask];
            best_mask = mask;
        }
    }
    Ok((best, (0..b).filter(|i| best_mask >> i & 1 == 1).collect()))
}

/// Closed form of [`ideal_excess_enumerated`]: the positive block excesses summed.
pub fn ideal_excess_closed_form(omega_norms: &[f64], rho_norms: &[f64]) -> (f64, Vec<usize>) {
    let mut total = 0.0;
    let mut support = Vec::new();
    for (i, (r, w)) in rho_norms.iter().zip(omega_norms).enumerate() {
        if r - w > 0.0 {
            total += r - w;
            support.push(i);
        }
    }
    (total, support)
}

/// Reachability between positive functionals.
///
/// The ideal inequalities are checked over the full lattice when the algebra
/// has at most [`IDEAL_ENUMERATION_CAP`] blocks, and in closed form otherwise.
pub fn check_more_mixed(omega: &Functional, rho: &Functional, tol: &Tolerances) -> Result<Decision> {
    check_pair(omega, rho)?;
    omega.require_positive(tol.eig)?;
    rho.require_positive(tol.eig)?;
    let band = decision_band(omega, rho, tol)?;
    let wn = omega.block_masses();
    let rn = rho.block_masses();
    let (excess, support) = if wn.len() <= IDEAL_ENUMERATION_CAP {
        ideal_excess_enumerated(&wn, &rn)?
    } else {
        ideal_excess_closed_form(&wn, &rn)
    };

    let mut viol = Violations::new();
    let (wm, rm) = (omega.mass(), rho.mass());
    viol.consider((rm - wm).abs(), || Certificate::MassMismatch { omega: wm, rho: rm });
    viol.consider(excess, || {
        let omega_norm = support.iter().map(|&i| wn[i]).sum();
        let rho_norm = support.iter().map(|&i| rn[i]).sum();
        Certificate::ViolatedIdeal { ideal: support.clone(), omega_norm, rho_norm }
    });
    let no = match &viol.certificate {
        Some(Certificate::ViolatedIdeal { ideal, omega_norm, rho_norm }) => format!(
            "‖ρ|J‖ = {rho_norm:.6} exceeds ‖ω|J‖ = {omega_norm:.6} for the ideal J on blocks {}",
            Ideal::new(omega.algebra(), ideal.clone()).map(|j| j.to_string()).unwrap_or_default()
        ),
        _ => format!("total masses differ: ρ(1) = {rm:.6}, ω(1) = {wm:.6}"),
    };
    Ok(viol.decide(
        band,
        Certificate::BlockBounds { center: wn.clone(), omega_norms: wn.clone(), rho_norms: rn.clone() },
        CRITERION_POSITIVE,
        "equal total mass and ‖ρ|J‖ ≤ ‖ω|J‖ on every ideal",
        &no,
    ))
}

/// Reachability between states: equal center restrictions.
pub fn check_state_reachable(omega: &Functional, rho: &Functional, tol: &Tolerances) -> Result<Decision> {
    check_pair(omega, rho)?;
    omega.require_state(tol.eig)?;
    rho.require_state(tol.eig)?;
    let band = decision_band(omega, rho, tol)?;
    let wz = omega.block_masses();
    let rz = rho.block_masses();
    let mut viol = Violations::new();
    for (i, (&w, &r)) in wz.iter().zip(&rz).enumerate() {
        viol.consider((r - w).abs(), || Certificate::CenterMismatch { block: i, omega: w, rho: r });
    }
    let no = match &viol.certificate {
        Some(Certificate::CenterMismatch { block, omega, rho }) => {
            format!("ρ|Z ≠ ω|Z at block {}: ρ = {rho:.6}, ω = {omega:.6}", block + 1)
        }
        _ => String::new(),
    };
    Ok(viol.decide(
        band,
        Certificate::CenterMatch { center: wz },
        CRITERION_STATE,
        "ρ|Z = ω|Z: the states agree on the center",
        &no,
    ))
}

/// Reachability between hermitian functionals: per block, equal traces and
/// `‖ρᵢ‖₁ ≤ ‖ωᵢ‖₁` (the weighted norm is linear in the central weight).
pub fn check_hermitian_reachable(omega: &Functional, rho: &Functional, tol: &Tolerances) -> Result<Decision> {
    check_pair(omega, rho)?;
    let band = decision_band(omega, rho, tol)?;
    let wz = omega.block_masses();
    let rz = rho.block_masses();
    let wn = omega.block_trace_norms()?;
    let rn = rho.block_trace_norms()?;
    let mut viol = Violations::new();
    for i in 0..wz.len() {
        viol.consider((rz[i] - wz[i]).abs(), || Certificate::CenterMismatch { block: i, omega: wz[i], rho: rz[i] });
        viol.consider(rn[i] - wn[i], || Certificate::TraceNormViolation {
            block: i,
            omega_norm: wn[i],
            rho_norm: rn[i],
        });
    }
    let no = match &viol.certificate {
        Some(Certificate::CenterMismatch { block, omega, rho }) => {
            format!("ρ|Z ≠ ω|Z at block {}: ρ = {rho:.6}, ω = {omega:.6}", block + 1)
        }
        Some(Certificate::TraceNormViolation { block, omega_norm, rho_norm }) => {
            format!("‖cρ‖ = {rho_norm:.6} exceeds ‖cω‖ = {omega_norm:.6} for c the unit of block {}", block + 1)
        }
        _ => String::new(),
    };
    Ok(viol.decide(
        band,
        Certificate::BlockBounds { center: wz, omega_norms: wn, rho_norms: rn },
        CRITERION_HERMITIAN,
        "ρ|Z = ω|Z and ‖ρᵢ‖₁ ≤ ‖ωᵢ‖₁ on every block, hence ‖cρ‖ ≤ ‖cω‖ for all c ∈ Z₊",
        &no,
    ))
}

/// Positive functionals `ρ₁`, `ρ₂` with `ρ = ρ₁ − ρ₂`.
#[derive(Debug, Clone, PartialEq)]
pub struct SplitWitnesses {
    pub rho1: Functional,
    pub rho2: Functional,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SplitDecision {
    pub decision: Decision,
    pub witnesses: Option<SplitWitnesses>,
}

/// Reachability through a Jordan split of `ρ`.
///
/// Per block the split exists iff `tr(ρᵢ)₊ ≤ tr(ωᵢ)₊`, `tr(ρᵢ)₋ ≤ tr(ωᵢ)₋` and
/// `tr ρᵢ = tr ωᵢ`. The witnesses are `ρ₁ = ρ₊ + s`, `ρ₂ = ρ₋ + s` where `sᵢ` is
/// the density of `ω₊` on block `i` rescaled to the mass deficit
/// `tr(ωᵢ)₊ − tr(ρᵢ)₊`; other fillers work equally well.
pub fn check_hermitian_reachable_general(
    omega: &Functional,
    rho: &Functional,
    tol: &Tolerances,
) -> Result<SplitDecision> {
    check_pair(omega, rho)?;
    let band = decision_band(omega, rho, tol)?;
    let wj = omega.jordan_decompose()?;
    let rj = rho.jordan_decompose()?;
    let (wp, wm) = (wj.positive_part.block_masses(), wj.negative_part.block_masses());
    let (rp, rm) = (rj.positive_part.block_masses(), rj.negative_part.block_masses());
    let wz = omega.block_masses();
    let rz = rho.block_masses();

    let mut viol = Violations::new();
    for i in 0..wz.len() {
        viol.consider((rz[i] - wz[i]).abs(), || Certificate::CenterMismatch { block: i, omega: wz[i], rho: rz[i] });
        viol.consider(rp[i] - wp[i], || Certificate::JordanMassViolation {
            block: i,
            part: JordanPart::Positive,
            omega: wp[i],
            rho: rp[i],
        });
        viol.consider(rm[i] - wm[i], || Certificate::JordanMassViolation {
            block: i,
            part: JordanPart::Negative,
            omega: wm[i],
            rho: rm[i],
        });
    }
    let verdict = classify(viol.worst, band);

    let witnesses = if verdict == Verdict::Yes {
        let algebra = omega.algebra();
        let mut filler = Vec::with_capacity(wz.len());
        for i in 0..wz.len() {
            let n = algebra.block_dim(i);
            let deficit = (wp[i] - rp[i]).max(0.0);
            if wp[i] > 0.0 && deficit > 0.0 {
                filler.push(wj.positive_part.density(i).scale(deficit / wp[i]));
            } else {
                filler.push(CMatrix::zeros(n, n));
            }
        }
        let s = Functional::new(algebra, filler)?;
        Some(SplitWitnesses { rho1: rj.positive_part.add(&s)?, rho2: rj.negative_part.add(&s)? })
    } else {
        None
    };

    let scalings = scalings_from_masses(omega.algebra(), &wp, &wm, &rp, &rm, band / tol.dec)?;
    let yes_certificate = match &witnesses {
        Some(w) => Certificate::SplitWitness {
            c_plus: scalings.c_plus.real_values(),
            c_minus: scalings.c_minus.real_values(),
            rho1_masses: w.rho1.block_masses(),
            rho2_masses: w.rho2.block_masses(),
        },
        None => Certificate::CenterMatch { center: wz.clone() },
    };
    let no = match &viol.certificate {
        Some(Certificate::CenterMismatch { block, omega, rho }) => {
            format!("ρ|Z ≠ ω|Z at block {}: ρ = {rho:.6}, ω = {omega:.6}", block + 1)
        }
        Some(Certificate::JordanMassViolation { block, part, omega, rho }) => {
            let sign = if *part == JordanPart::Positive { "+" } else { "−" };
            format!(
                "ρ{sign}(1) = {rho:.6} exceeds ω{sign}(1) = {omega:.6} on block {}, so no split of ρ fits under ω{sign}",
                block + 1
            )
        }
        _ => String::new(),
    };
    let decision = viol.decide(
        band,
        yes_certificate,
        CRITERION_JORDAN_SPLIT,
        "ρ = ρ₁ − ρ₂ with ρ₁ = ρ₊ + s, ρ₂ = ρ₋ + s matching the Jordan masses of ω block by block",
        &no,
    );
    Ok(SplitDecision { decision, witnesses })
}

/// Largest violation of the split conditions by `(ρ₁, ρ₂)` over all ideals:
/// positivity, `ρ = ρ₁ − ρ₂`, the two total masses and the ideal-norm bounds.
pub fn split_residual(omega: &Functional, rho: &Functional, w: &SplitWitnesses) -> Result<f64> {
    check_pair(omega, rho)?;
    let wj = omega.jordan_decompose()?;
    let mut r: f64 = 0.0;
    r = r.max(-w.rho1.min_eigenvalue()?).max(-w.rho2.min_eigenvalue()?);
    r = r.max(w.rho1.sub(&w.rho2)?.max_abs_diff(rho)?);
    r = r.max((w.rho1.mass() - wj.positive_part.mass()).abs());
    r = r.max((w.rho2.mass() - wj.negative_part.mass()).abs());
    let (e1, _) = ideal_excess_enumerated(&wj.positive_part.block_masses(), &w.rho1.block_trace_norms()?)?;
    let (e2, _) = ideal_excess_enumerated(&wj.negative_part.block_masses(), &w.rho2.block_trace_norms()?)?;
    Ok(r.max(e1).max(e2))
}

/// Central scalings relating the Jordan parts of `ω` and `ρ`.
#[derive(Debug, Clone, PartialEq)]
pub struct CentralScalings {
    pub c_plus: CenterElement,
    pub c_minus: CenterElement,
    /// Support of `ω₊|Z`.
    pub p_plus_central: CenterElement,
    /// Support of `ω₋|Z`.
    pub p_minus_central: CenterElement,
}

impl CentralScalings {
    /// Residuals of `ρ₊|Z = c₊·ω₊|Z`, `ρ₋|Z = c₋·ω₋|Z` and
    /// `(p⁺ − c₊)·ω₊|Z = (p⁻ − c₋)·ω₋|Z`, each the largest entrywise gap.
    pub fn identity_residuals(&self, omega: &Functional, rho: &Functional) -> Result<[f64; 3]> {
        let wj = omega.jordan_decompose()?;
        let rj = rho.jordan_decompose()?;
        let (wp, wm) = (wj.positive_part.block_masses(), wj.negative_part.block_masses());
        let (rp, rm) = (rj.positive_part.block_masses(), rj.negative_part.block_masses());
        let (cp, cm) = (self.c_plus.real_values(), self.c_minus.real_values());
        let (pp, pm) = (self.p_plus_central.real_values(), self.p_minus_central.real_values());
        let mut res = [0.0f64; 3];
        for i in 0..wp.len() {
            res[0] = res[0].max((rp[i] - cp[i] * wp[i]).abs());
            res[1] = res[1].max((rm[i] - cm[i] * wm[i]).abs());
            res[2] = res[2].max(((pp[i] - cp[i]) * wp[i] - (pm[i] - cm[i]) * wm[i]).abs());
        }
        Ok(res)
    }
}

fn scalings_from_masses(
    algebra: &AlgebraSpec,
    wp: &[f64],
    wm: &[f64],
    rp: &[f64],
    rm: &[f64],
    scale: f64,
) -> Result<CentralScalings> {
    let floor = MASS_FLOOR * scale;
    let support = |m: &[f64]| -> Vec<f64> { m.iter().map(|&v| if v > floor { 1.0 } else { 0.0 }).collect() };
    let ratio = |r: &[f64], w: &[f64]| -> Vec<f64> {
        r.iter().zip(w).map(|(&r, &w)| if w > floor { (r / w).clamp(0.0, 1.0) } else { 0.0 }).collect()
    };
    Ok(CentralScalings {
        c_plus: CenterElement::from_real(algebra, &ratio(rp, wp))?,
        c_minus: CenterElement::from_real(algebra, &ratio(rm, wm))?,
        p_plus_central: CenterElement::from_real(algebra, &support(wp))?,
        p_minus_central: CenterElement::from_real(algebra, &support(wm))?,
    })
}

fn require_reachable(omega: &Functional, rho: &Functional, tol: &Tolerances) -> Result<()> {
    let d = check_hermitian_reachable(omega, rho, tol)?;
    if d.is_yes() {
        Ok(())
    } else {
        Err(Error::Precondition(format!(
            "ρ is not reachable from ω (ρ|Z = ω|Z with ‖cρ‖ ≤ ‖cω‖ fails, verdict {}): {}",
            d.verdict, d.explanation
        )))
    }
}

/// `c₊ = ρ₊|Z / ω₊|Z` and `c₋ = ρ₋|Z / ω₋|Z` on the supports, `0` elsewhere.
pub fn derive_central_scalings(omega: &Functional, rho: &Functional, tol: &Tolerances) -> Result<CentralScalings> {
    require_reachable(omega, rho, tol)?;
    let wj = omega.jordan_decompose()?;
    let rj = rho.jordan_decompose()?;
    let scale = omega.norm()?.max(rho.norm()?).max(1.0);
    scalings_from_masses(
        omega.algebra(),
        &wj.positive_part.block_masses(),
        &wj.negative_part.block_masses(),
        &rj.positive_part.block_masses(),
        &rj.negative_part.block_masses(),
        scale,
    )
}

/// The unital completely positive module map
/// `ψ(x) = c₊·p₊·ρ_Z⁺(x) + (1 − c₊·p₊)·(ρ_Z⁻(x) + (1 − p⁻)·θ(x))`
/// with `ω∘ψ = ρ`.
///
/// `p₊` is the support projection of `ω₊`, `ρ_Z^±` the center-valued maps of
/// the central decompositions of `ρ±`, `p⁻` the support of `ω₋|Z` and `θ` the
/// normalized block trace. On blocks where `p⁻ = 1` but `ρ₋` has no mass,
/// `ρ_Z⁻` is completed by `θ` so that `ψ(1) = 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct TransportMap {
    pub scalings: CentralScalings,
    pub p_plus: Element,
    /// `ρ_Z⁺`.
    pub plus_map: CenterModuleMap,
    /// `ρ_Z⁻ + (1 − p⁻)·θ`, with the completion above.
    pub minus_map: CenterModuleMap,
}

impl TransportMap {
    pub fn algebra(&self) -> &AlgebraSpec {
        self.p_plus.algebra()
    }

    pub fn apply(&self, x: &Element) -> Result<Element> {
        let algebra = self.algebra().clone();
        algebra.check_same(x.algebra())?;
        let f = self.plus_map.apply(x)?;
        let g = self.minus_map.apply(x)?;
        let cp = self.scalings.c_plus.values();
        let blocks = (0..algebra.num_blocks())
            .map(|i| {
                let n = algebra.block_dim(i);
                let cpp = self.p_plus.block(i) * cp[i];
                let rest = CMatrix::identity(n, n) - &cpp;
                cpp * f.value(i) + rest * g.value(i)
            })
            .collect();
        Element::new(&algebra, blocks)
    }

    pub fn choi(&self) -> Result<ModuleMapChoi> {
        ModuleMapChoi::from_action(self.algebra(), |x| self.apply(x))
    }

    pub fn kraus(&self, eps: f64) -> Result<KrausMap> {
        self.choi()?.to_kraus(eps)
    }
}

/// Builds the transport map for a reachable pair.
pub fn build_transport_map(omega: &Functional, rho: &Functional, tol: &Tolerances) -> Result<TransportMap> {
    let scalings = derive_central_scalings(omega, rho, tol)?;
    let algebra = omega.algebra();
    let wj = omega.jordan_decompose()?;
    let rj = rho.jordan_decompose()?;
    let p_plus = wj.positive_part.support_projection(tol.eig)?;

    let plus_map = rj.positive_part.central_decompose(tol.eig)?.module_map;
    let rho_minus = rj.negative_part.central_decompose(tol.eig)?;
    let theta = CenterModuleMap::normalized_trace(algebra);
    let p_minus = scalings.p_minus_central.real_values();
    let mut minus_map = rho_minus.module_map.clone();
    for (i, &pm) in p_minus.iter().enumerate() {
        let has_mass = rho_minus.unit_image.value(i).re > 0.5;
        if pm == 0.0 || !has_mass {
            // off the support of ω₋|Z only θ remains; on it, θ completes a massless ρ₋
            minus_map = minus_map.with_weight(i, theta.weight(i).clone())?;
        }
    }
    Ok(TransportMap { scalings, p_plus, plus_map, minus_map })
}

/// Maximal mixedness of a state, optionally on the quotient by an ideal `K`
/// on which `ω` vanishes.
///
/// The strong radical of a finite-dimensional algebra is zero, so every state
/// annihilates it, and the primitive spectrum is Hausdorff: every state is
/// maximally mixed. The decision reports that chain.
pub fn is_maximally_mixed(omega: &Functional, kernel: Option<&Ideal>, tol: &Tolerances) -> Result<Decision> {
    omega.require_state(tol.eig)?;
    let algebra = omega.algebra();
    let band = tol.dec * omega.norm()?.max(1.0);
    let quotient_blocks: Vec<usize> = match kernel {
        Some(k) => {
            algebra.check_same(k.algebra())?;
            let mass = omega.ideal_norm(k)?;
            if mass > band {
                return Err(Error::Precondition(format!("ω does not vanish on the ideal {k}: ‖ω|K‖ = {mass:.3e}")));
            }
            (0..algebra.num_blocks()).filter(|&i| !k.contains_block(i)).collect()
        }
        None => (0..algebra.num_blocks()).collect(),
    };
    if quotient_blocks.is_empty() {
        return Err(Error::Precondition("the quotient by K is the zero algebra".into()));
    }
    let dims: Vec<usize> = quotient_blocks.iter().map(|&i| algebra.block_dim(i)).collect();
    let quotient = AlgebraSpec::new(dims)?;
    let densities = quotient_blocks.iter().map(|&i| omega.density(i).clone()).collect();
    let on_quotient = Functional::new(&quotient, densities)?;
    let radical = crate::algebra::strong_radical(&quotient);
    let mass = on_quotient.ideal_norm(&radical)?;
    let radical_blocks: Vec<usize> = radical.support().iter().map(|&i| quotient_blocks[i]).collect();

    let mut viol = Violations::new();
    viol.consider(mass, || Certificate::StrongRadical {
        quotient_blocks: quotient_blocks.clone(),
        radical: radical_blocks.clone(),
        mass,
    });
    let on = if kernel.is_some() { "the quotient A/K" } else { "A" };
    let yes = format!(
        "the strong radical of {on} = {quotient} is {radical} and ω vanishes on it; \
         every primitive ideal of a finite-dimensional algebra is maximal, so ω is maximally mixed"
    );
    Ok(viol.decide(
        band,
        Certificate::StrongRadical { quotient_blocks, radical: radical_blocks, mass },
        CRITERION_MAXIMALLY_MIXED,
        &yes,
        "ω does not vanish on the strong radical",
    ))
}

/// `max |ω(ψ(x)) − ρ(x)|` over the supplied elements, each divided by `‖x‖`.
pub fn composition_error(
    omega: &Functional,
    rho: &Functional,
    map: impl Fn(&Element) -> Result<Element>,
    samples: &[Element],
) -> Result<f64> {
    let mut worst: f64 = 0.0;
    for x in samples {
        let norm = x.norm();
        if norm == 0.0 {
            continue;
        }
        let lhs = omega.evaluate(&map(x)?)?;
        let rhs = rho.evaluate(x)?;
        worst = worst.max((lhs - rhs).norm() / norm);
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::{self, C64};

    fn diag(vals: &[f64]) -> CMatrix {
        CMatrix::from_diagonal(&nalgebra::DVector::from_iterator(vals.len(), vals.iter().map(|&v| C64::new(v, 0.0))))
    }

    fn f(a: &AlgebraSpec, blocks: &[&[f64]]) -> Functional {
        Functional::new(a, blocks.iter().map(|b| diag(b)).collect()).unwrap()
    }

    fn tol() -> Tolerances {
        Tolerances::default()
    }

    #[test]
    fn more_mixed_examples() {
        let a = AlgebraSpec::new(vec![2, 2]).unwrap();
        let w = f(&a, &[&[0.3, 0.2], &[0.1, 0.4]]);
        let r = f(&a, &[&[0.25, 0.25], &[0.5, 0.0]]);
        assert!(check_more_mixed(&w, &r, &tol()).unwrap().is_yes());

        let r = f(&a, &[&[0.3, 0.3], &[0.2, 0.2]]);
        let d = check_more_mixed(&w, &r, &tol()).unwrap();
        assert!(d.is_no());
        match d.certificate {
            Some(Certificate::ViolatedIdeal { ideal, omega_norm, rho_norm }) => {
                assert_eq!(ideal, vec![0]);
                assert!(rho_norm > omega_norm);
            }
            other => panic!("unexpected certificate {other:?}"),
        }
        assert!((d.margin + 0.1).abs() < 1e-12);

        let m3 = AlgebraSpec::new(vec![3]).unwrap();
        let w = f(&m3, &[&[1.0, 0.0, 0.0]]);
        let r = f(&m3, &[&[0.2, 0.3, 0.5]]);
        assert!(check_more_mixed(&w, &r, &tol()).unwrap().is_yes());
        assert!(check_more_mixed(&r, &w, &tol()).unwrap().is_yes());
    }

    #[test]
    fn more_mixed_rejects_non_positive() {
        let a = AlgebraSpec::new(vec![2]).unwrap();
        let w = f(&a, &[&[0.5, -0.5]]);
        assert!(check_more_mixed(&w, &w, &tol()).is_err());
    }

    #[test]
    fn excess_closed_form_matches_enumeration() {
        let cases: [(&[f64], &[f64]); 3] =
            [(&[0.5, 0.5], &[0.6, 0.4]), (&[0.1, 0.2, 0.3, 0.4], &[0.2, 0.1, 0.35, 0.35]), (&[0.25; 4], &[0.25; 4])];
        for (w, r) in cases {
            let (e1, s1) = ideal_excess_enumerated(w, r).unwrap();
            let (e2, s2) = ideal_excess_closed_form(w, r);
            assert!((e1 - e2).abs() < 1e-15);
            if e1 > 0.0 {
                assert_eq!(s1, s2);
            }
        }
    }

    #[test]
    fn state_reachability_examples() {
        let a = AlgebraSpec::new(vec![2, 1]).unwrap();
        let w = f(&a, &[&[0.5, 0.1], &[0.4]]);
        let r = f(&a, &[&[0.3, 0.3], &[0.4]]);
        let d = check_state_reachable(&w, &r, &tol()).unwrap();
        assert!(d.is_yes());
        assert_eq!(d.theorem, CRITERION_STATE);
        assert!(check_state_reachable(&w, &w, &tol()).unwrap().is_yes());

        let ab = AlgebraSpec::new(vec![1, 1]).unwrap();
        let w = f(&ab, &[&[0.4], &[0.6]]);
        let r = f(&ab, &[&[0.5], &[0.5]]);
        let d = check_state_reachable(&w, &r, &tol()).unwrap();
        assert!(d.is_no());
        assert!(matches!(d.certificate, Some(Certificate::CenterMismatch { .. })));

        let not_state = f(&ab, &[&[0.4], &[0.4]]);
        assert!(check_state_reachable(&not_state, &r, &tol()).is_err());
    }

    #[test]
    fn indeterminate_band() {
        let ab = AlgebraSpec::new(vec![1, 1]).unwrap();
        let w = f(&ab, &[&[0.5], &[0.5]]);
        let r = f(&ab, &[&[0.5 + 5e-10], &[0.5 - 5e-10]]);
        let d = check_state_reachable(&w, &r, &tol()).unwrap();
        assert_eq!(d.verdict, Verdict::Indeterminate);
        assert!(d.margin.abs() < 1e-9);
        let r = f(&ab, &[&[0.5 + 2e-9], &[0.5 - 2e-9]]);
        assert!(check_state_reachable(&w, &r, &tol()).unwrap().is_no());
    }

    #[test]
    fn hermitian_reachability_examples() {
        let a = AlgebraSpec::new(vec![2]).unwrap();
        let w = f(&a, &[&[0.5, -0.5]]);
        let r = f(&a, &[&[0.25, -0.25]]);
        assert!(check_hermitian_reachable(&w, &w, &tol()).unwrap().is_yes());
        assert!(check_hermitian_reachable(&w, &r, &tol()).unwrap().is_yes());
        let psi = build_transport_map(&w, &r, &tol()).unwrap();
        let x = Element::new(&a, vec![diag(&[1.0, -1.0])]).unwrap();
        let lhs = w.evaluate(&psi.apply(&x).unwrap()).unwrap();
        assert!((lhs - r.evaluate(&x).unwrap()).norm() < 1e-12);

        let w = f(&a, &[&[0.5, 0.5]]);
        let r = f(&a, &[&[1.25, -0.25]]);
        let d = check_hermitian_reachable(&w, &r, &tol()).unwrap();
        assert!(d.is_no());
        assert!(matches!(d.certificate, Some(Certificate::TraceNormViolation { block: 0, .. })));
    }

    #[test]
    fn general_split_examples() {
        let a = AlgebraSpec::new(vec![2, 2]).unwrap();
        let w = f(&a, &[&[0.5, -0.1], &[0.3, -0.2]]);
        let s = check_hermitian_reachable_general(&w, &w, &tol()).unwrap();
        assert!(s.decision.is_yes());
        let wit = s.witnesses.unwrap();
        let j = w.jordan_decompose().unwrap();
        assert!(wit.rho1.max_abs_diff(&j.positive_part).unwrap() < 1e-15);
        assert!(wit.rho2.max_abs_diff(&j.negative_part).unwrap() < 1e-15);

        let r = f(&a, &[&[0.2, 0.2], &[0.05, 0.05]]);
        let s = check_hermitian_reachable_general(&w, &r, &tol()).unwrap();
        assert!(s.decision.is_yes());
        assert!(split_residual(&w, &r, s.witnesses.as_ref().unwrap()).unwrap() < 1e-12);

        // positive ω: agrees with the ideal-norm criterion
        let wp = f(&a, &[&[0.3, 0.2], &[0.4, 0.1]]);
        for r in [f(&a, &[&[0.25, 0.25], &[0.5, 0.0]]), f(&a, &[&[0.6, -0.1], &[0.5, 0.0]])] {
            let g = check_hermitian_reachable_general(&wp, &r, &tol()).unwrap().decision.verdict;
            let h = check_hermitian_reachable(&wp, &r, &tol()).unwrap().verdict;
            assert_eq!(g, h);
            if r.is_positive(1e-12).unwrap() {
                assert_eq!(g, check_more_mixed(&wp, &r, &tol()).unwrap().verdict);
            }
        }
    }

    #[test]
    fn central_scalings_example() {
        let a = AlgebraSpec::new(vec![2, 2]).unwrap();
        let w = f(&a, &[&[0.25, 0.25], &[0.25, -0.25]]);
        let r = f(&a, &[&[0.5, 0.0], &[0.1, -0.1]]);
        let s = derive_central_scalings(&w, &r, &tol()).unwrap();
        let cp = s.c_plus.real_values();
        let cm = s.c_minus.real_values();
        assert!((cp[0] - 1.0).abs() < 1e-12 && (cp[1] - 0.4).abs() < 1e-12);
        assert!((cm[1] - 0.4).abs() < 1e-12);
        assert_eq!(s.p_minus_central.real_values(), vec![0.0, 1.0]);
        let res = s.identity_residuals(&w, &r).unwrap();
        assert!(res.iter().all(|&v| v < 1e-12));
        // (p⁺ − c₊)·ω₊|Z = (0, 0.15)
        let wp = w.jordan_decompose().unwrap().positive_part.block_masses();
        assert!(((1.0 - cp[1]) * wp[1] - 0.15).abs() < 1e-12);

        let same = derive_central_scalings(&w, &w, &tol()).unwrap();
        assert_eq!(same.c_plus, same.p_plus_central);
        assert_eq!(same.c_minus, same.p_minus_central);

        let pos = f(&a, &[&[0.5, 0.0], &[0.25, 0.25]]);
        let s = derive_central_scalings(&pos, &pos, &tol()).unwrap();
        assert_eq!(s.c_minus.real_values(), vec![0.0, 0.0]);
        assert_eq!(s.p_minus_central.real_values(), vec![0.0, 0.0]);
    }

    #[test]
    fn transport_pure_to_mixed() {
        let a = AlgebraSpec::new(vec![2]).unwrap();
        let w = f(&a, &[&[1.0, 0.0]]);
        let r = f(&a, &[&[0.5, 0.5]]);
        let psi = build_transport_map(&w, &r, &tol()).unwrap();
        assert!(psi.apply(&Element::identity(&a)).unwrap().distance(&Element::identity(&a)) < 1e-12);
        let choi = psi.choi().unwrap();
        assert!(choi.is_completely_positive(1e-9).unwrap());
        for (_, _, _, x) in a.matrix_units() {
            let got = w.evaluate(&psi.apply(&x).unwrap()).unwrap();
            assert!((got - r.evaluate(&x).unwrap()).norm() < 1e-12);
            // ψ(x) = tr(D_ρ x)·p₊ + (1 − p₊)·θ(x)
            let p = diag(&[1.0, 0.0]);
            let q = diag(&[0.0, 1.0]);
            let want = p * r.evaluate(&x).unwrap() + q * (numerics::trace(x.block(0)) * 0.5);
            assert!(numerics::max_abs(&(psi.apply(&x).unwrap().block(0) - want)) < 1e-12);
        }
        let k = psi.kraus(1e-9).unwrap();
        assert!(k.is_unital(1e-9));
    }

    #[test]
    fn transport_stays_unital_when_negative_part_of_rho_vanishes() {
        let a = AlgebraSpec::new(vec![2]).unwrap();
        let w = f(&a, &[&[0.75, -0.25]]);
        let r = f(&a, &[&[0.5, 0.0]]);
        let psi = build_transport_map(&w, &r, &tol()).unwrap();
        assert!(psi.apply(&Element::identity(&a)).unwrap().distance(&Element::identity(&a)) < 1e-12);
        for (_, _, _, x) in a.matrix_units() {
            let got = w.evaluate(&psi.apply(&x).unwrap()).unwrap();
            assert!((got - r.evaluate(&x).unwrap()).norm() < 1e-12);
        }
    }

    #[test]
    fn transport_rejects_unreachable_pair() {
        let a = AlgebraSpec::new(vec![1, 1]).unwrap();
        let w = f(&a, &[&[0.5], &[0.5]]);
        let r = f(&a, &[&[0.7], &[0.3]]);
        assert!(matches!(build_transport_map(&w, &r, &tol()), Err(Error::Precondition(_))));
    }

    #[test]
    fn maximally_mixed_examples() {
        let a = AlgebraSpec::new(vec![2, 3]).unwrap();
        let w = f(&a, &[&[0.2, 0.1], &[0.3, 0.3, 0.1]]);
        let d = is_maximally_mixed(&w, None, &tol()).unwrap();
        assert!(d.is_yes());
        assert!(d.explanation.contains("strong radical"));
        let t = Functional::tracial(&a, &[0.5, 0.5]).unwrap();
        assert!(is_maximally_mixed(&t, None, &tol()).unwrap().is_yes());

        let only_first = f(&a, &[&[0.5, 0.5], &[0.0, 0.0, 0.0]]);
        let k = Ideal::new(&a, vec![1]).unwrap();
        let d = is_maximally_mixed(&only_first, Some(&k), &tol()).unwrap();
        assert!(d.is_yes());
        match d.certificate {
            Some(Certificate::StrongRadical { quotient_blocks, .. }) => assert_eq!(quotient_blocks, vec![0]),
            other => panic!("unexpected certificate {other:?}"),
        }
        assert!(is_maximally_mixed(&w, Some(&k), &tol()).is_err());
    }

    #[test]
    fn decision_serializes() {
        let a = AlgebraSpec::new(vec![1, 1]).unwrap();
        let w = f(&a, &[&[0.5], &[0.5]]);
        let d = check_state_reachable(&w, &w, &tol()).unwrap();
        let s = serde_json::to_string(&d).unwrap();
        assert!(s.contains("\"verdict\":\"yes\""));
        let back: Decision = serde_json::from_str(&s).unwrap();
        assert_eq!(back, d);
    }
}
