//! Front end for the `ballmodel` command-line tool: argument types, input
//! files, reports and one function per subcommand.
//!
//! Exit codes: 0 when every check passes, 1 when a check fails (the report
//! names it), 2 for unreadable input or bad usage.

pub mod commands;
pub mod io;
pub mod report;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Parser, Debug)]
#[command(name = "ballmodel", version, about = "Colligations, Agler decompositions and row-contraction models")]
pub struct Cli {
    #[command(subcommand)]
    pub group: Group,
}

#[derive(Subcommand, Debug)]
pub enum Group {
    /// Transfer-function evaluation.
    Realize {
        #[command(subcommand)]
        cmd: RealizeCmd,
    },
    /// Structural checks.
    Check {
        #[command(subcommand)]
        cmd: CheckCmd,
    },
    /// Agler decomposition checks.
    Agler {
        #[command(subcommand)]
        cmd: AglerCmd,
    },
    /// Functional-model checks.
    Model {
        #[command(subcommand)]
        cmd: ModelCmd,
    },
    /// Row-contraction invariants.
    Rowc {
        #[command(subcommand)]
        cmd: RowcCmd,
    },
    /// Worked examples.
    Example {
        #[command(subcommand)]
        cmd: ExampleCmd,
    },
}

#[derive(Subcommand, Debug)]
pub enum RealizeCmd {
    /// Evaluate S(z) = D + C (I - Z A)^{-1} Z B at points.
    Eval(PointArgs),
}

#[derive(Subcommand, Debug)]
pub enum CheckCmd {
    /// Contractivity, (weak) isometry flags, observability and controllability.
    Colligation(FileArgs),
}

#[derive(Subcommand, Debug)]
pub enum AglerCmd {
    /// Verify the Agler identity and the isometry V at seeded sample pairs.
    Verify(SampleArgs),
    /// Model subspaces D, R, their complements and the compression X.
    Defects(OrderArgs),
}

#[derive(Subcommand, Debug)]
pub enum ModelCmd {
    /// Coefficient-level checks of a functional-model colligation.
    Verify(ModelArgs),
}

#[derive(Subcommand, Debug)]
pub enum RowcCmd {
    /// Characteristic function values (and Taylor coefficients with --order).
    Charfunc(PointArgs),
    /// Purity, c.n.c., strongly c.c. and c.c. classification.
    Classify(FileArgs),
    /// Noncommutative and expanded moments with consistency residuals.
    Moments(OrderArgs),
    /// Search for a unitary W with W T_i W^* = R_i.
    Equiv(PairArgs),
    /// Compare characteristic triples (theta, K, X).
    TripleEquiv(PairArgs),
}

#[derive(Subcommand, Debug)]
pub enum ExampleCmd {
    /// The row contraction [l1 l2] on C with |l1|^2 + |l2|^2 = 1.
    Spherical(SphericalArgs),
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Json,
    Text,
}

#[derive(Args, Debug, Clone)]
pub struct Common {
    #[arg(long, value_enum, default_value_t = Format::Json)]
    pub format: Format,
    /// Threshold on identity residuals.
    #[arg(long, default_value_t = 1e-9)]
    pub tol: f64,
    /// Relative singular-value cutoff for rank decisions.
    #[arg(long, default_value_t = 1e-10)]
    pub rank_tol: f64,
}

#[derive(Args, Debug, Clone)]
pub struct FileArgs {
    #[arg(long)]
    pub file: PathBuf,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Args, Debug, Clone)]
pub struct PointArgs {
    #[arg(long)]
    pub file: PathBuf,
    /// Inline points (`0.3,0.1+0.2i;0,0.5`) or a JSON file of points.
    #[arg(long)]
    pub points: String,
    #[arg(long)]
    pub order: Option<usize>,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Args, Debug, Clone)]
pub struct SampleArgs {
    #[arg(long)]
    pub file: PathBuf,
    #[arg(long, default_value_t = 100)]
    pub samples: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Args, Debug, Clone)]
pub struct OrderArgs {
    #[arg(long)]
    pub file: PathBuf,
    #[arg(long)]
    pub order: Option<usize>,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
pub enum Kind {
    Cfm,
    Dcfm,
    Tcfm,
}

#[derive(Args, Debug, Clone)]
pub struct ModelArgs {
    #[arg(long)]
    pub file: PathBuf,
    #[arg(long, value_enum, default_value_t = Kind::Tcfm)]
    pub kind: Kind,
    #[arg(long)]
    pub order: Option<usize>,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Args, Debug, Clone)]
pub struct PairArgs {
    #[arg(long)]
    pub a: PathBuf,
    #[arg(long)]
    pub b: PathBuf,
    #[arg(long, default_value_t = 8)]
    pub restarts: usize,
    /// Word length for the moment comparison.
    #[arg(long, default_value_t = 4)]
    pub order: usize,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Args, Debug, Clone)]
pub struct SphericalArgs {
    /// `l1,l2`, each real or complex (`0.6,0.8i`).
    #[arg(long, allow_hyphen_values = true)]
    pub lambda: String,
    #[arg(long, default_value_t = 50)]
    pub samples: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[command(flatten)]
    pub common: Common,
}

/// Runs a parsed command line, printing the report.
pub fn run(cli: &Cli) -> ExitCode {
    let (common, outcome) = match &cli.group {
        Group::Realize { cmd: RealizeCmd::Eval(a) } => (&a.common, commands::realize_eval(a)),
        Group::Check { cmd: CheckCmd::Colligation(a) } => (&a.common, commands::check_colligation(a)),
        Group::Agler { cmd: AglerCmd::Verify(a) } => (&a.common, commands::agler_verify(a)),
        Group::Agler { cmd: AglerCmd::Defects(a) } => (&a.common, commands::agler_defects(a)),
        Group::Model { cmd: ModelCmd::Verify(a) } => (&a.common, commands::model_verify(a)),
        Group::Rowc { cmd: RowcCmd::Charfunc(a) } => (&a.common, commands::rowc_charfunc(a)),
        Group::Rowc { cmd: RowcCmd::Classify(a) } => (&a.common, commands::rowc_classify(a)),
        Group::Rowc { cmd: RowcCmd::Moments(a) } => (&a.common, commands::rowc_moments(a)),
        Group::Rowc { cmd: RowcCmd::Equiv(a) } => (&a.common, commands::rowc_equiv(a)),
        Group::Rowc { cmd: RowcCmd::TripleEquiv(a) } => (&a.common, commands::rowc_triple_equiv(a)),
        Group::Example { cmd: ExampleCmd::Spherical(a) } => (&a.common, commands::example_spherical(a)),
    };
    match outcome {
        Ok(report) => {
            let text = match common.format {
                Format::Json => report.to_json() + "\n",
                Format::Text => report.to_text(),
            };
            print!("{text}");
            if report.passed {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(1)
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
