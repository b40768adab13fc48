//! Command line front end for the fermode library.
//!
//! Exit codes: 0 success, 1 input error, 2 invariant violation,
//! 3 regression mismatch against the built-in expected verdicts.

use std::io::Read;
use std::process::ExitCode;

use anyhow::{anyhow, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};

use fermode::entanglement::{full_report, SsrEofBudget};
use fermode::fock::car_residual;
use fermode::mapping::{
    consistent_mapping_search_jobs, single_mode_partitions, MappingVerdict, SparsityPattern,
};
use fermode::states::{ChargePattern, DensityOperator};
use fermode::textio::{
    emit_entanglement_report, emit_mapping_report, format_matrix, parse_state, REPORT_SCHEMA,
};
use fermode::trace::{inside_out_partial_trace, oracle_partial_trace, ModePartition};

const EXIT_INPUT: u8 = 1;
const EXIT_INVARIANT: u8 = 2;
const EXIT_REGRESSION: u8 = 3;

#[derive(Parser)]
#[command(name = "fermode", version, about = "Fermionic mode entanglement toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Write the report here instead of stdout.
    #[arg(long, global = true)]
    out: Option<std::path::PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Verify the anticommutation relations on an n-mode space.
    CarCheck {
        /// Number of modes (1..=8).
        n: usize,
        /// Largest acceptable residual.
        #[arg(long, default_value_t = 1e-12)]
        tol: f64,
    },
    /// Reduce a state to a subset of its modes with the fermionic
    /// partial trace, cross-checked against the consistency-condition
    /// solve.
    Reduce {
        /// State document path, or '-' for stdin.
        #[arg(long)]
        input: String,
        /// Comma-separated list of mode labels to keep, e.g. "1,3".
        #[arg(long, value_delimiter = ',')]
        modes_keep: Vec<usize>,
        /// Tolerance for the oracle cross-check.
        #[arg(long, default_value_t = 1e-10)]
        tol: f64,
    },
    /// Run one of the built-in mapping-search experiments and compare
    /// the verdict against the expected result.
    Demo {
        name: DemoName,
        /// Worker threads for the assignment enumeration; the output is
        /// identical for every value.
        #[arg(long, default_value_t = 1)]
        jobs: usize,
    },
    /// Evaluate entanglement measures of a state across a partition.
    Measure {
        /// State document path, or '-' for stdin.
        #[arg(long)]
        input: String,
        /// Comma-separated list of mode labels to keep.
        #[arg(long, value_delimiter = ',')]
        modes_keep: Vec<usize>,
        /// Seed for the SSR entanglement-of-formation search.
        #[arg(long, default_value_t = 7)]
        seed: u64,
        /// Restarts for the SSR EoF search.
        #[arg(long, default_value_t = 32)]
        ssr_restarts: usize,
        /// Iterations per restart for the SSR EoF search.
        #[arg(long, default_value_t = 500)]
        ssr_iterations: usize,
        /// Worker threads for the mapping search.
        #[arg(long, default_value_t = 1)]
        jobs: usize,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum DemoName {
    /// Two modes, every coherence allowed.
    TwoModeFree,
    /// Two modes under the equal-charge superselection rule.
    TwoModeSsr,
    /// Three modes under the equal-charge superselection rule.
    ThreeModeSsr,
}

fn read_input(path: &str) -> Result<String> {
    if path == "-" {
        let mut text = String::new();
        std::io::stdin()
            .read_to_string(&mut text)
            .context("reading stdin")?;
        Ok(text)
    } else {
        std::fs::read_to_string(path).with_context(|| format!("reading {path}"))
    }
}

fn load_state(path: &str) -> Result<(DensityOperator, Option<ChargePattern>)> {
    let text = read_input(path)?;
    let doc = parse_state(&text).map_err(|e| anyhow!("{e}"))?;
    let rho = doc.assemble().map_err(|e| anyhow!("{e}"))?;
    Ok((rho, doc.charges))
}

fn partition_from_keep(n_modes: usize, keep: &[usize]) -> Result<ModePartition> {
    if keep.is_empty() {
        return Err(anyhow!("--modes-keep must list at least one mode"));
    }
    ModePartition::keep(n_modes, keep).map_err(|e| anyhow!("{e}"))
}

fn write_report(out: &Option<std::path::PathBuf>, report: &str) -> Result<()> {
    match out {
        Some(path) => std::fs::write(path, report).with_context(|| format!("writing {path:?}")),
        None => {
            print!("{report}");
            Ok(())
        }
    }
}

fn cmd_car_check(n: usize, tol: f64, out: &Option<std::path::PathBuf>) -> Result<u8> {
    if !(1..=8).contains(&n) {
        return Err(anyhow!("mode count {n} outside the supported range 1..=8"));
    }
    let residual = car_residual(n).map_err(|e| anyhow!("{e}"))?;
    let ok = residual <= tol;
    let report = format!(
        "schema = {REPORT_SCHEMA}\nkind = car-check\nmodes = {n}\nmax_residual = {residual:.3e}\ntolerance = {tol:.3e}\nok = {ok}\n"
    );
    write_report(out, &report)?;
    Ok(if ok { 0 } else { EXIT_INVARIANT })
}

fn cmd_reduce(
    input: &str,
    keep: &[usize],
    tol: f64,
    out: &Option<std::path::PathBuf>,
) -> Result<u8> {
    let (rho, _) = load_state(input)?;
    let p = partition_from_keep(rho.n_modes(), keep)?;
    let reduced = inside_out_partial_trace(&rho, &p).map_err(|e| anyhow!("{e}"))?;
    let oracle = oracle_partial_trace(&rho, &p).map_err(|e| anyhow!("{e}"))?;
    let residual = reduced.matrix().max_abs_diff(oracle.matrix());
    let ok = residual <= tol;
    let report = format!(
        "schema = {REPORT_SCHEMA}\nkind = reduce\npartition.kept = {:?}\npartition.traced = {:?}\noracle_residual = {residual:.3e}\nok = {ok}\nmatrix:\n{}",
        p.kept(),
        p.traced(),
        format_matrix(reduced.matrix())
    );
    write_report(out, &report)?;
    Ok(if ok { 0 } else { EXIT_INVARIANT })
}

fn demo_verdict(name: DemoName, jobs: usize) -> (MappingVerdict, bool) {
    match name {
        DemoName::TwoModeFree => (
            consistent_mapping_search_jobs(
                2,
                &SparsityPattern::unrestricted(2),
                &single_mode_partitions(2),
                jobs,
            ),
            false,
        ),
        DemoName::TwoModeSsr => (
            consistent_mapping_search_jobs(
                2,
                &SparsityPattern::from_charges(&ChargePattern::equal(2)),
                &single_mode_partitions(2),
                jobs,
            ),
            true,
        ),
        DemoName::ThreeModeSsr => (
            consistent_mapping_search_jobs(
                3,
                &SparsityPattern::from_charges(&ChargePattern::equal(3)),
                &single_mode_partitions(3),
                jobs,
            ),
            false,
        ),
    }
}

fn cmd_demo(name: DemoName, jobs: usize, out: &Option<std::path::PathBuf>) -> Result<u8> {
    let (verdict, expected) = demo_verdict(name, jobs);
    let mut report = emit_mapping_report(&verdict);
    report.push_str(&format!(
        "expected_exists = {expected}\nmatches_expected = {}\n",
        verdict.exists == expected
    ));
    write_report(out, &report)?;
    Ok(if verdict.exists == expected {
        0
    } else {
        EXIT_REGRESSION
    })
}

fn cmd_measure(
    input: &str,
    keep: &[usize],
    seed: u64,
    ssr_restarts: usize,
    ssr_iterations: usize,
    jobs: usize,
    out: &Option<std::path::PathBuf>,
) -> Result<u8> {
    let (rho, charges) = load_state(input)?;
    let p = partition_from_keep(rho.n_modes(), keep)?;
    let pattern = match &charges {
        Some(charges) => SparsityPattern::from_charges(charges),
        None => SparsityPattern::unrestricted(rho.n_modes()),
    };
    let verdict = consistent_mapping_search_jobs(
        rho.n_modes(),
        &pattern,
        &single_mode_partitions(rho.n_modes()),
        jobs,
    );
    let budget = SsrEofBudget {
        restarts: ssr_restarts,
        iterations: ssr_iterations,
        seed,
    };
    let report = full_report(&rho, &p, &verdict, charges.as_ref(), &budget)
        .map_err(|e| anyhow!("{e}"))?;
    write_report(out, &emit_entanglement_report(&report))?;
    Ok(0)
}

fn run(cli: Cli) -> Result<u8> {
    match cli.command {
        Command::CarCheck { n, tol } => cmd_car_check(n, tol, &cli.out),
        Command::Reduce {
            ref input,
            ref modes_keep,
            tol,
        } => cmd_reduce(input, modes_keep, tol, &cli.out),
        Command::Demo { name, jobs } => cmd_demo(name, jobs, &cli.out),
        Command::Measure {
            ref input,
            ref modes_keep,
            seed,
            ssr_restarts,
            ssr_iterations,
            jobs,
        } => cmd_measure(
            input,
            modes_keep,
            seed,
            ssr_restarts,
            ssr_iterations,
            jobs,
            &cli.out,
        ),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if e.use_stderr() => {
            eprintln!("{e}");
            return ExitCode::from(EXIT_INPUT);
        }
        Err(e) => {
            // --help / --version
            print!("{e}");
            return ExitCode::SUCCESS;
        }
    };
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(EXIT_INPUT)
        }
    }
}
