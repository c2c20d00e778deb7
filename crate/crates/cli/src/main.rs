//! `ucp`: decide and construct unital completely positive transformations
//! between functionals on finite-dimensional von Neumann algebras.
//!
//! Exit codes: 0 yes/success, 1 no, 2 indeterminate, 3 error.

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use ucp_core::Tolerances;

#[derive(Parser, Debug)]
#[command(name = "ucp", version, about = "Reachability of states and hermitian functionals under unital CP maps")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Args, Debug, Clone)]
pub struct Common {
    /// Eigenvalue cutoff for positivity, supports and ranks.
    #[arg(long, global = true, allow_negative_numbers = true)]
    pub tol_eig: Option<f64>,
    /// Constraint residual accepted by the feasibility solver.
    #[arg(long, global = true, allow_negative_numbers = true)]
    pub tol_feas: Option<f64>,
    /// Decision tolerance, scaled by max(‖ω‖, ‖ρ‖, 1).
    #[arg(long, global = true, allow_negative_numbers = true)]
    pub tol_dec: Option<f64>,
    /// Seed for every random draw.
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    /// Report path; without it the report is printed to stdout.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Cross-check the verdict with the Choi-feasibility oracle.
    #[arg(long, global = true)]
    pub with_oracle: bool,
    /// Algebra file the inputs must live on.
    #[arg(long, global = true)]
    pub algebra: Option<PathBuf>,
}

impl Common {
    pub fn tolerances(&self) -> anyhow::Result<Tolerances> {
        let mut t = Tolerances::default();
        if let Some(v) = self.tol_eig {
            t.eig = v;
        }
        if let Some(v) = self.tol_feas {
            t.feas = v;
        }
        if let Some(v) = self.tol_dec {
            t.dec = v;
        }
        t.validate()?;
        Ok(t)
    }
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Decide whether ρ = ω∘φ for some unital CP map φ.
    Reach {
        #[arg(long)]
        omega: PathBuf,
        #[arg(long)]
        rho: PathBuf,
        /// Criterion to apply; `auto` picks from the inputs.
        #[arg(long, value_enum, default_value_t = CheckArg::Auto)]
        check: CheckArg,
    },
    /// Build the explicit transport map for a reachable hermitian pair.
    Transport {
        #[arg(long)]
        omega: PathBuf,
        #[arg(long)]
        rho: PathBuf,
        /// Where to write the Kraus operators (default: next to --out).
        #[arg(long)]
        kraus_out: Option<PathBuf>,
    },
    /// Build a channel with Kraus operators in the algebra mapping state ω to ρ.
    ExactChannel {
        #[arg(long)]
        omega: PathBuf,
        #[arg(long)]
        rho: PathBuf,
        #[arg(long)]
        kraus_out: Option<PathBuf>,
    },
    /// Jordan decomposition of ω, and central scalings when ρ is given.
    Jordan {
        #[arg(long)]
        omega: PathBuf,
        #[arg(long)]
        rho: Option<PathBuf>,
    },
    /// ‖ω|J‖ (and ‖ρ|J‖) for every ideal J.
    IdealNorms {
        #[arg(long)]
        omega: PathBuf,
        #[arg(long)]
        rho: Option<PathBuf>,
    },
    /// Maximal mixedness of a state, optionally modulo a kernel ideal.
    Maxmix {
        #[arg(long)]
        omega: PathBuf,
        /// Kernel ideal as comma-separated 0-based block indices.
        #[arg(long, value_delimiter = ',')]
        kernel: Option<Vec<usize>>,
    },
    /// Re-validate a saved reach or transport report with the Choi oracle.
    Oracle {
        report: PathBuf,
        /// Inputs for a bare decision file without embedded inputs.
        #[arg(long)]
        omega: Option<PathBuf>,
        #[arg(long)]
        rho: Option<PathBuf>,
    },
    /// Run the seeded property suites.
    Selftest,
    /// Convert a channel file between Kraus and Choi form.
    Convert {
        #[arg(long)]
        channel: PathBuf,
        #[arg(long, value_enum)]
        to: ChannelForm,
    },
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq)]
pub enum CheckArg {
    Auto,
    Positive,
    State,
    Hermitian,
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq)]
pub enum ChannelForm {
    Kraus,
    Choi,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            // usage errors must not collide with the verdict codes
            return ExitCode::from(if e.use_stderr() { 3 } else { 0 });
        }
    };
    match commands::run(&cli) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(3)
        }
    }
}
