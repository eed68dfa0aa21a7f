//! monotone-lab CLI
//!
//! Runs scenario files and one-off checks, writing JSON or CSV reports.

use std::collections::BTreeMap;
use std::panic::{self, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};
use monolab::harness::{
    self, BrMode, ClassKind, FnDesc, OpDesc, ProbeSpec, Report, Scenario, SetDesc, TailProbe, Task, SCHEMA_VERSION,
};
use monolab::{DualPair, NormTag};
use serde::de::DeserializeOwned;

const EXIT_CONFIG: u8 = 2;
const EXIT_PANIC: u8 = 3;
const EXIT_IO: u8 = 1;

#[derive(Parser)]
#[command(name = "monotone-lab", version)]
#[command(about = "Quasidensity, Fitzpatrick and Brondsted-Rockafellar checks for monotone operators")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run every task of a scenario file
    Run {
        scenario: PathBuf,
        #[command(flatten)]
        out: OutArgs,
    },
    /// Quasidensity gap at probe points, optionally with a fuzz set
    Gap {
        #[command(flatten)]
        op: OpArgs,
        #[command(flatten)]
        probes: ProbeArgs,
        /// Dual fuzz set descriptor (replaces each probe's x*)
        #[arg(long, conflicts_with = "primal_fuzz")]
        dual_fuzz: Option<String>,
        /// Primal fuzz set descriptor (replaces each probe's x)
        #[arg(long)]
        primal_fuzz: Option<String>,
        #[command(flatten)]
        common: CommonArgs,
        #[command(flatten)]
        out: OutArgs,
    },
    /// Fitzpatrick function, its conjugate and extension membership
    Fitz {
        #[command(flatten)]
        op: OpArgs,
        #[command(flatten)]
        probes: ProbeArgs,
        /// Membership tolerance
        #[arg(long, default_value_t = 1e-6)]
        tol: f64,
        #[command(flatten)]
        common: CommonArgs,
        #[command(flatten)]
        out: OutArgs,
    },
    /// Windowed maximality, NI and strong-maximality checks
    Classify {
        #[command(flatten)]
        op: OpArgs,
        #[arg(long, value_enum)]
        class: ClassArg,
        /// Window or fuzz set descriptor
        #[arg(long)]
        set: Option<String>,
        /// Primal probe (JSON array); w** for ni
        #[arg(long, default_value = "[]")]
        w: String,
        /// Dual probe (JSON array); w* for ni
        #[arg(long, default_value = "[]")]
        wstar: String,
        #[command(flatten)]
        common: CommonArgs,
        #[command(flatten)]
        out: OutArgs,
    },
    /// Brondsted-Rockafellar procedures on a convex function
    Br {
        #[command(flatten)]
        space: SpaceArgs,
        #[arg(long, value_enum)]
        mode: ModeArg,
        /// Function descriptor (JSON or @file)
        #[arg(long)]
        function: String,
        /// Starting point for mode point
        #[arg(long, default_value = "[]")]
        u: String,
        #[arg(long, default_value_t = 1.0)]
        alpha: f64,
        #[arg(long, default_value_t = 0.1)]
        beta: f64,
        /// Tolerance for modes van and witness
        #[arg(long, default_value_t = 1e-6)]
        eps: f64,
        /// Probe x for mode witness
        #[arg(long, default_value = "[]")]
        x: String,
        /// Probe x* for mode witness
        #[arg(long, default_value = "[]")]
        xstar: String,
        #[command(flatten)]
        common: CommonArgs,
        #[command(flatten)]
        out: OutArgs,
    },
    /// Gap upper bounds of the l1/l_inf tail truncations
    Tail {
        /// Dimensions, comma separated
        #[arg(long, value_delimiter = ',', default_value = "1,2,4,8,16")]
        n: Vec<usize>,
        /// Fixed probe x (zero-padded per n); defaults to the all-ones probe
        #[arg(long, requires = "probe_xstar")]
        probe_x: Option<String>,
        #[arg(long, requires = "probe_x")]
        probe_xstar: Option<String>,
        #[command(flatten)]
        common: CommonArgs,
        #[command(flatten)]
        out: OutArgs,
    },
}

#[derive(Args)]
struct SpaceArgs {
    #[arg(long, default_value_t = 1)]
    dim: usize,
    #[arg(long, value_enum, default_value_t = NormArg::L2)]
    norm: NormArg,
}

#[derive(Args)]
struct OpArgs {
    #[command(flatten)]
    space: SpaceArgs,
    /// Operator descriptor (JSON or @file)
    #[arg(long)]
    operator: String,
}

#[derive(Args)]
struct ProbeArgs {
    /// Probe pairs as JSON `[[x, x*], ...]`
    #[arg(long, conflicts_with = "probes")]
    probe: Option<String>,
    /// Number of seeded random probes
    #[arg(long, default_value_t = 10)]
    probes: usize,
}

#[derive(Args)]
struct CommonArgs {
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 128)]
    budget: usize,
    #[arg(long, default_value_t = 1e-6)]
    eta: f64,
}

#[derive(Args)]
struct OutArgs {
    /// Write the report here instead of stdout
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Format::Json)]
    format: Format,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Json,
    Csv,
}

#[derive(Clone, Copy, ValueEnum)]
enum NormArg {
    L1,
    L2,
    Linf,
}

#[derive(Clone, Copy, ValueEnum)]
enum ClassArg {
    Fpv,
    Fp,
    Ni,
    StrongmaxDual,
    StrongmaxPrimal,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Point,
    Corollary,
    Van,
    Witness,
}

impl SpaceArgs {
    fn pair(&self) -> anyhow::Result<DualPair> {
        let norm = match self.norm {
            NormArg::L1 => NormTag::L1,
            NormArg::L2 => NormTag::L2,
            NormArg::Linf => NormTag::LInf,
        };
        Ok(DualPair::new(self.dim, norm)?)
    }
}

impl ProbeArgs {
    fn spec(&self) -> anyhow::Result<ProbeSpec> {
        Ok(match &self.probe {
            Some(text) => ProbeSpec::Points(descriptor(text, "--probe")?),
            None => ProbeSpec::Random { count: self.probes },
        })
    }
}

/// Parses a JSON descriptor given inline or as `@path`.
fn descriptor<T: DeserializeOwned>(text: &str, flag: &str) -> anyhow::Result<T> {
    let body = match text.strip_prefix('@') {
        Some(path) => std::fs::read_to_string(path).with_context(|| format!("{flag}: cannot read {path}"))?,
        None => text.to_string(),
    };
    serde_json::from_str(&body).map_err(|e| anyhow!("{flag}: {e}"))
}

fn single(space: DualPair, op: Option<&str>, task: Task) -> anyhow::Result<Scenario> {
    let mut operators = BTreeMap::new();
    if let Some(text) = op {
        operators.insert("S".to_string(), descriptor::<OpDesc>(text, "--operator")?);
    }
    Ok(Scenario {
        schema: SCHEMA_VERSION,
        name: task.kind().to_string(),
        space,
        operators,
        tasks: vec![task],
    })
}

fn scenario(cmd: &Command) -> anyhow::Result<Scenario> {
    let op_name = || "S".to_string();
    match cmd {
        Command::Run { scenario, .. } => Ok(Scenario::load(scenario)?),
        Command::Gap {
            op,
            probes,
            dual_fuzz,
            primal_fuzz,
            common,
            ..
        } => single(
            op.space.pair()?,
            Some(&op.operator),
            Task::Gap {
                operator: op_name(),
                probes: probes.spec()?,
                eta: common.eta,
                seed: common.seed,
                budget: common.budget,
                dual_fuzz: dual_fuzz
                    .as_deref()
                    .map(|t| descriptor::<SetDesc>(t, "--dual-fuzz"))
                    .transpose()?,
                primal_fuzz: primal_fuzz
                    .as_deref()
                    .map(|t| descriptor::<SetDesc>(t, "--primal-fuzz"))
                    .transpose()?,
            },
        ),
        Command::Fitz {
            op,
            probes,
            tol,
            common,
            ..
        } => single(
            op.space.pair()?,
            Some(&op.operator),
            Task::Fitz {
                operator: op_name(),
                probes: probes.spec()?,
                seed: common.seed,
                budget: common.budget,
                tol: *tol,
            },
        ),
        Command::Classify {
            op,
            class,
            set,
            w,
            wstar,
            common,
            ..
        } => single(
            op.space.pair()?,
            Some(&op.operator),
            Task::Classify {
                operator: op_name(),
                class: match class {
                    ClassArg::Fpv => ClassKind::Fpv,
                    ClassArg::Fp => ClassKind::Fp,
                    ClassArg::Ni => ClassKind::Ni,
                    ClassArg::StrongmaxDual => ClassKind::StrongmaxDual,
                    ClassArg::StrongmaxPrimal => ClassKind::StrongmaxPrimal,
                },
                set: set.as_deref().map(|t| descriptor::<SetDesc>(t, "--set")).transpose()?,
                w: descriptor(w, "--w")?,
                wstar: descriptor(wstar, "--wstar")?,
                seed: common.seed,
                budget: common.budget,
            },
        ),
        Command::Br {
            space,
            mode,
            function,
            u,
            alpha,
            beta,
            eps,
            x,
            xstar,
            common,
            ..
        } => single(
            space.pair()?,
            None,
            Task::Br {
                mode: match mode {
                    ModeArg::Point => BrMode::Point,
                    ModeArg::Corollary => BrMode::Corollary,
                    ModeArg::Van => BrMode::Van,
                    ModeArg::Witness => BrMode::Witness,
                },
                function: descriptor::<FnDesc>(function, "--function")?,
                u: descriptor(u, "--u")?,
                alpha: *alpha,
                beta: *beta,
                eps: *eps,
                x: descriptor(x, "--x")?,
                xstar: descriptor(xstar, "--xstar")?,
                seed: common.seed,
            },
        ),
        Command::Tail {
            n,
            probe_x,
            probe_xstar,
            common,
            ..
        } => {
            let probe = match (probe_x, probe_xstar) {
                (Some(x), Some(xs)) => TailProbe::Fixed {
                    x: descriptor(x, "--probe-x")?,
                    xstar: descriptor(xs, "--probe-xstar")?,
                },
                _ => TailProbe::AllOnes,
            };
            single(
                DualPair::l1_linf(n.iter().copied().max().unwrap_or(1).max(1)),
                None,
                Task::TailExperiment {
                    n_list: n.clone(),
                    probe,
                    seed: common.seed,
                },
            )
        }
    }
}

fn out_args(cmd: &Command) -> &OutArgs {
    match cmd {
        Command::Run { out, .. }
        | Command::Gap { out, .. }
        | Command::Fitz { out, .. }
        | Command::Classify { out, .. }
        | Command::Br { out, .. }
        | Command::Tail { out, .. } => out,
    }
}

fn write_report(report: &Report, out: &OutArgs) -> anyhow::Result<()> {
    let text = match out.format {
        Format::Json => report.to_json() + "\n",
        Format::Csv => report.to_csv()?,
    };
    match &out.out {
        Some(path) => write_file(path, &text),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn write_file(path: &Path, text: &str) -> anyhow::Result<()> {
    std::fs::write(path, text).with_context(|| format!("cannot write {}", path.display()))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let sc = match scenario(&cli.command) {
        Ok(sc) => sc,
        Err(e) => {
            eprintln!("error: {e:#}");
            return ExitCode::from(EXIT_CONFIG);
        }
    };
    let report = match panic::catch_unwind(AssertUnwindSafe(|| harness::run(&sc))) {
        Ok(Ok(r)) => r,
        Ok(Err(e)) => {
            eprintln!("error: {e}");
            return ExitCode::from(EXIT_CONFIG);
        }
        Err(_) => {
            eprintln!("error: internal solver panic");
            return ExitCode::from(EXIT_PANIC);
        }
    };
    if let Err(e) = write_report(&report, out_args(&cli.command)) {
        eprintln!("error: {e:#}");
        return ExitCode::from(EXIT_IO);
    }
    ExitCode::SUCCESS
}
