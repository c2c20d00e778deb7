use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde_json::Value;

use ucp_core::acceptance;
use ucp_core::algebra::enumerate_ideals;
use ucp_core::exact_channel::{build_channel, extension_feasible_with, gns};
use ucp_core::io;
use ucp_core::oracle::{choi_membership_oracle, random_element};
use ucp_core::reachability::{
    build_transport_map, check_hermitian_reachable, check_hermitian_reachable_general, check_more_mixed,
    check_state_reachable, composition_error, derive_central_scalings, is_maximally_mixed, split_residual,
};
use ucp_core::report::{
    IdealNormRow, Inputs, JordanRow, OracleSummary, Outcome, ReachCheck, Report, ScalingSummary, SplitSummary,
    TransportVerification,
};
use ucp_core::{AlgebraSpec, Decision, Element, Functional, Ideal, KrausMap, Tolerances, Verdict};

use crate::{ChannelForm, CheckArg, Cli, Command, Common};

/// Largest block count for which `ideal-norms` lists every ideal.
const IDEAL_TABLE_CAP: usize = 20;
/// Random elements added to the matrix units when verifying a transport map.
const TRANSPORT_SAMPLES: usize = 50;

/// Runs one subcommand and returns its exit code.
pub fn run(cli: &Cli) -> anyhow::Result<i32> {
    let common = &cli.common;
    let tol = common.tolerances()?;
    let algebra = common.algebra.as_deref().map(io::load_algebra).transpose()?;
    let ctx = Session { common, tol, algebra };

    let (name, inputs, outcome) = match &cli.command {
        Command::Reach { omega, rho, check } => ctx.reach(omega, rho, *check)?,
        Command::Transport { omega, rho, kraus_out } => ctx.transport(omega, rho, kraus_out.as_deref())?,
        Command::ExactChannel { omega, rho, kraus_out } => ctx.exact_channel(omega, rho, kraus_out.as_deref())?,
        Command::Jordan { omega, rho } => ctx.jordan(omega, rho.as_deref())?,
        Command::IdealNorms { omega, rho } => ctx.ideal_norms(omega, rho.as_deref())?,
        Command::Maxmix { omega, kernel } => ctx.maxmix(omega, kernel.as_deref())?,
        Command::Oracle { report, omega, rho } => ctx.oracle(report, omega.as_deref(), rho.as_deref())?,
        Command::Selftest => ctx.selftest()?,
        Command::Convert { channel, to } => return ctx.convert(channel, *to),
    };
    let report = Report::new(name, common.seed, tol, inputs, outcome);
    emit(common.out.as_deref(), &serde_json::to_value(&report)?)?;
    Ok(report.exit_code)
}

fn emit(out: Option<&Path>, value: &Value) -> anyhow::Result<()> {
    match out {
        Some(path) => io::write_json_atomic(path, value).with_context(|| format!("writing {}", path.display())),
        None => {
            let mut stdout = std::io::stdout().lock();
            serde_json::to_writer_pretty(&mut stdout, value)?;
            writeln!(stdout)?;
            Ok(())
        }
    }
}

struct Session<'a> {
    common: &'a Common,
    tol: Tolerances,
    algebra: Option<AlgebraSpec>,
}

type Run = (&'static str, Inputs, Outcome);

impl Session<'_> {
    fn load(&self, path: &Path) -> anyhow::Result<Functional> {
        let f = io::load_functional(path)?;
        self.check_algebra(f.algebra(), path)?;
        Ok(f)
    }

    fn check_algebra(&self, found: &AlgebraSpec, path: &Path) -> anyhow::Result<()> {
        if let Some(a) = &self.algebra {
            if a != found {
                bail!(
                    "{}: algebra {:?} does not match --algebra {:?}",
                    path.display(),
                    found.block_dims(),
                    a.block_dims()
                );
            }
        }
        Ok(())
    }

    fn load_pair(&self, omega: &Path, rho: &Path) -> anyhow::Result<(Functional, Functional)> {
        let w = self.load(omega)?;
        let r = self.load(rho)?;
        if w.algebra() != r.algebra() {
            bail!(
                "ω and ρ live on different algebras: {:?} vs {:?}",
                w.algebra().block_dims(),
                r.algebra().block_dims()
            );
        }
        Ok((w, r))
    }

    fn inputs(&self, omega: &Functional, rho: Option<&Functional>) -> Inputs {
        Inputs {
            omega: Some(io::functional_to_value(omega)),
            rho: rho.map(io::functional_to_value),
            algebra: self.algebra.as_ref().map(io::algebra_to_value),
            kernel: None,
        }
    }

    fn oracle_summary(
        &self,
        omega: &Functional,
        rho: &Functional,
        against: Verdict,
    ) -> anyhow::Result<Option<OracleSummary>> {
        if !self.common.with_oracle {
            return Ok(None);
        }
        let report = choi_membership_oracle(omega, rho, &self.tol)?;
        Ok(Some(OracleSummary::compare(&report, against)))
    }

    fn reach(&self, omega: &Path, rho: &Path, check: CheckArg) -> anyhow::Result<Run> {
        let (w, r) = self.load_pair(omega, rho)?;
        let check = resolve_check(&w, &r, check, &self.tol)?;
        let (decision, split) = decide(&w, &r, check, &self.tol)?;
        let oracle = self.oracle_summary(&w, &r, decision.verdict)?;
        Ok(("reach", self.inputs(&w, Some(&r)), Outcome::Reach { check, decision, split, oracle }))
    }

    fn transport(&self, omega: &Path, rho: &Path, kraus_out: Option<&Path>) -> anyhow::Result<Run> {
        let (w, r) = self.load_pair(omega, rho)?;
        let inputs = self.inputs(&w, Some(&r));
        let decision = check_hermitian_reachable(&w, &r, &self.tol)?;
        if !decision.is_yes() {
            let outcome = Outcome::Transport { decision, kraus_file: None, verification: None, oracle: None };
            return Ok(("transport", inputs, outcome));
        }
        let map = build_transport_map(&w, &r, &self.tol)?;
        let choi = map.choi()?;
        let kraus = choi.to_kraus(self.tol.eig)?;
        let samples = verification_samples(w.algebra(), self.common.seed);
        let verification = TransportVerification {
            unitality_defect: kraus.unitality_defect(),
            choi_min_eigenvalue: choi.min_eigenvalue()?,
            composition_error: composition_error(&w, &r, |x| map.apply(x), &samples)?,
            samples: samples.len(),
            kraus_count: kraus.len(),
        };
        let kraus_file = self.write_kraus(&kraus, kraus_out, "transport")?;
        let oracle = self.oracle_summary(&w, &r, decision.verdict)?;
        Ok(("transport", inputs, Outcome::Transport { decision, kraus_file, verification: Some(verification), oracle }))
    }

    fn exact_channel(&self, omega: &Path, rho: &Path, kraus_out: Option<&Path>) -> anyhow::Result<Run> {
        let (w, r) = self.load_pair(omega, rho)?;
        for (name, f) in [("ω", &w), ("ρ", &r)] {
            if !f.is_state(self.tol.eig)? {
                bail!("{name} is not a state; exact-channel needs two states");
            }
        }
        let g = gns(&w, &self.tol)?;
        let ext = extension_feasible_with(&g, &r, &self.tol)?;
        let verdict = ext.verdict();
        let explanation = ext.explanation();
        let (channel, kraus_file) = match ext.certificate() {
            Some(cert) => {
                let built = build_channel(&w, &r, &g, cert, &self.tol)?;
                let file = self.write_kraus(&built.kraus, kraus_out, "channel")?;
                (Some(built.report), file)
            }
            None => (None, None),
        };
        let outcome = Outcome::ExactChannel { verdict, explanation, channel, kraus_file };
        Ok(("exact-channel", self.inputs(&w, Some(&r)), outcome))
    }

    /// Writes Kraus operators to `explicit`, or next to `--out` as `<stem>.<suffix>.json`.
    fn write_kraus(&self, kraus: &KrausMap, explicit: Option<&Path>, suffix: &str) -> anyhow::Result<Option<String>> {
        let path: Option<PathBuf> = match (explicit, self.common.out.as_deref()) {
            (Some(p), _) => Some(p.to_path_buf()),
            (None, Some(out)) => {
                let stem = out.file_stem().and_then(|s| s.to_str()).unwrap_or("report");
                Some(out.with_file_name(format!("{stem}.{suffix}.json")))
            }
            (None, None) => None,
        };
        let Some(path) = path else { return Ok(None) };
        io::write_json_atomic(&path, &io::kraus_to_value(kraus))
            .with_context(|| format!("writing {}", path.display()))?;
        Ok(Some(path.display().to_string()))
    }

    fn jordan(&self, omega: &Path, rho: Option<&Path>) -> anyhow::Result<Run> {
        let (w, r) = match rho {
            Some(rho) => {
                let (w, r) = self.load_pair(omega, rho)?;
                (w, Some(r))
            }
            None => (self.load(omega)?, None),
        };
        let parts = w.jordan_decompose()?;
        let plus = parts.positive_part.block_masses();
        let minus = parts.negative_part.block_masses();
        let norms = w.block_trace_norms()?;
        let blocks = w
            .block_masses()
            .into_iter()
            .enumerate()
            .map(|(i, trace)| JordanRow {
                block: i,
                trace,
                positive_mass: plus[i],
                negative_mass: minus[i],
                trace_norm: norms[i],
            })
            .collect();
        let scalings = match &r {
            Some(r) => {
                let s = derive_central_scalings(&w, r, &self.tol)?;
                Some(ScalingSummary {
                    residuals: s.identity_residuals(&w, r)?,
                    c_plus: s.c_plus.real_values(),
                    c_minus: s.c_minus.real_values(),
                    p_plus: s.p_plus_central.real_values(),
                    p_minus: s.p_minus_central.real_values(),
                })
            }
            None => None,
        };
        let outcome = Outcome::Jordan {
            norm: w.norm()?,
            positive_mass: parts.positive_part.mass(),
            negative_mass: parts.negative_part.mass(),
            blocks,
            scalings,
        };
        Ok(("jordan", self.inputs(&w, r.as_ref()), outcome))
    }

    fn ideal_norms(&self, omega: &Path, rho: Option<&Path>) -> anyhow::Result<Run> {
        let (w, r) = match rho {
            Some(rho) => {
                let (w, r) = self.load_pair(omega, rho)?;
                (w, Some(r))
            }
            None => (self.load(omega)?, None),
        };
        let lattice = enumerate_ideals(w.algebra(), IDEAL_TABLE_CAP)?;
        let rows = lattice
            .ideals
            .iter()
            .map(|j| {
                Ok(IdealNormRow {
                    ideal: j.support().to_vec(),
                    omega: w.ideal_norm(j)?,
                    rho: r.as_ref().map(|r| r.ideal_norm(j)).transpose()?,
                })
            })
            .collect::<ucp_core::Result<Vec<_>>>()?;
        Ok(("ideal-norms", self.inputs(&w, r.as_ref()), Outcome::IdealNorms { rows }))
    }

    fn maxmix(&self, omega: &Path, kernel: Option<&[usize]>) -> anyhow::Result<Run> {
        let w = self.load(omega)?;
        let ideal = kernel.map(|k| Ideal::new(w.algebra(), k.to_vec())).transpose()?;
        let decision = is_maximally_mixed(&w, ideal.as_ref(), &self.tol)?;
        let mut inputs = self.inputs(&w, None);
        inputs.kernel = ideal.map(|j| j.support().to_vec());
        Ok(("maxmix", inputs, Outcome::MaxMix { decision }))
    }

    fn oracle(&self, report: &Path, omega: Option<&Path>, rho: Option<&Path>) -> anyhow::Result<Run> {
        let value = io::read_json(report)?;
        let (w, r, recorded, check) = if value.get("schema").is_some() {
            let saved: Report =
                serde_json::from_value(value).with_context(|| format!("{}: not a valid report", report.display()))?;
            let (check, decision) = saved.outcome.reach_decision().with_context(|| {
                format!("{}: `{}` reports carry no reachability decision", report.display(), saved.command)
            })?;
            let verdict = decision.verdict;
            let (w, r) = match (omega, rho) {
                (Some(o), Some(p)) => self.load_pair(o, p)?,
                _ => embedded_pair(&saved.inputs, report)?,
            };
            (w, r, verdict, check)
        } else {
            let decision: Decision = serde_json::from_value(value)
                .with_context(|| format!("{}: neither a report nor a decision", report.display()))?;
            let (Some(o), Some(p)) = (omega, rho) else {
                bail!("{}: a bare decision needs --omega and --rho", report.display());
            };
            let (w, r) = self.load_pair(o, p)?;
            let check = resolve_check(&w, &r, CheckArg::Auto, &self.tol)?;
            (w, r, decision.verdict, check)
        };
        let oracle = choi_membership_oracle(&w, &r, &self.tol)?;
        let summary = OracleSummary::compare(&oracle, recorded);
        Ok(("oracle", self.inputs(&w, Some(&r)), Outcome::OracleCheck { check, recorded, oracle: summary }))
    }

    fn selftest(&self) -> anyhow::Result<Run> {
        let criteria = acceptance::run_all(self.common.seed)?;
        for c in &criteria {
            eprintln!("{}", c.line());
        }
        let passed = criteria.iter().all(|c| c.passed);
        eprintln!("selftest {}", if passed { "passed" } else { "FAILED" });
        Ok(("selftest", Inputs::default(), Outcome::SelfTest { passed, criteria }))
    }

    fn convert(&self, channel: &Path, to: ChannelForm) -> anyhow::Result<i32> {
        let file = io::load_channel(channel)?;
        self.check_algebra(file.algebra(), channel)?;
        let value = match to {
            ChannelForm::Kraus => io::kraus_to_value(&file.kraus(self.tol.eig)?),
            ChannelForm::Choi => io::choi_to_value(&file.choi()),
        };
        emit(self.common.out.as_deref(), &value)?;
        Ok(0)
    }
}

fn embedded_pair(inputs: &Inputs, report: &Path) -> anyhow::Result<(Functional, Functional)> {
    let (Some(w), Some(r)) = (&inputs.omega, &inputs.rho) else {
        bail!("{}: report has no embedded ω and ρ; pass --omega and --rho", report.display());
    };
    let w = io::parse_functional(w, "inputs.omega")?;
    let r = io::parse_functional(r, "inputs.rho")?;
    if w.algebra() != r.algebra() {
        bail!("{}: embedded ω and ρ live on different algebras", report.display());
    }
    Ok((w, r))
}

/// `auto`: states use the center criterion, positive functionals the ideal-norm
/// criterion, anything else the hermitian one.
fn resolve_check(w: &Functional, r: &Functional, check: CheckArg, tol: &Tolerances) -> anyhow::Result<ReachCheck> {
    Ok(match check {
        CheckArg::Positive => ReachCheck::Positive,
        CheckArg::State => ReachCheck::State,
        CheckArg::Hermitian => ReachCheck::Hermitian,
        CheckArg::Auto => {
            if w.is_state(tol.eig)? && r.is_state(tol.eig)? {
                ReachCheck::State
            } else if w.is_positive(tol.eig)? && r.is_positive(tol.eig)? {
                ReachCheck::Positive
            } else {
                ReachCheck::Hermitian
            }
        }
    })
}

fn decide(
    w: &Functional,
    r: &Functional,
    check: ReachCheck,
    tol: &Tolerances,
) -> anyhow::Result<(Decision, Option<SplitSummary>)> {
    Ok(match check {
        ReachCheck::Positive => (check_more_mixed(w, r, tol)?, None),
        ReachCheck::State => (check_state_reachable(w, r, tol)?, None),
        ReachCheck::Hermitian => {
            let decision = check_hermitian_reachable(w, r, tol)?;
            let split = check_hermitian_reachable_general(w, r, tol)?;
            let residual = split.witnesses.as_ref().map(|s| split_residual(w, r, s)).transpose()?;
            let summary = SplitSummary {
                rho1: split.witnesses.as_ref().map(|s| io::functional_to_value(&s.rho1)),
                rho2: split.witnesses.as_ref().map(|s| io::functional_to_value(&s.rho2)),
                witness_residual: residual,
                decision: split.decision,
            };
            (decision, Some(summary))
        }
    })
}

/// Matrix units followed by seeded random elements.
fn verification_samples(algebra: &AlgebraSpec, seed: u64) -> Vec<Element> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    algebra
        .matrix_units()
        .map(|(_, _, _, e)| e)
        .chain((0..TRANSPORT_SAMPLES).map(|_| random_element(algebra, &mut rng)))
        .collect()
}
