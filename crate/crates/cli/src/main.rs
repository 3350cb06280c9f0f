//! `adsbqp` command line.
//!
//! Exit codes: 0 when every requested run succeeded, 1 when a method failed
//! or the scenario is infeasible (outputs are still written), 2 for usage,
//! scenario or I/O errors.

use std::path::PathBuf;
use std::process::ExitCode;

use adsbqp::config::{self, Scenario};
use adsbqp::experiment::{self, CompareOutcome, RunManifest};
use adsbqp::Method;
use clap::{Args, Parser, Subcommand};

#[derive(Parser)]
#[command(name = "adsbqp", version, about = "Joint antenna selection and power allocation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve with one method and print the selection.
    Run {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value = "AD-SBQP")]
        method: Method,
    },
    /// Run several methods on the same channel draw and tabulate them.
    Compare {
        #[command(flatten)]
        common: Common,
        /// Comma-separated method names.
        #[arg(long, value_delimiter = ',', default_value = "AD-SBQP,AD-SPen,AD-NSPen")]
        methods: Vec<Method>,
    },
    /// Exhaustive search over all selections (small instances only).
    Enumerate {
        #[command(flatten)]
        common: Common,
    },
}

#[derive(Args)]
struct Common {
    /// Scenario file; defaults apply to missing keys.
    #[arg(long)]
    scenario: Option<PathBuf>,
    /// Seeds as `7`, `0,3,5` or `0..5`. Overrides the scenario's seed.
    #[arg(long)]
    seed: Option<String>,
    #[arg(long, default_value = "out")]
    out: PathBuf,
    #[arg(long)]
    max_ad_iter: Option<usize>,
    #[arg(long)]
    eps_comp: Option<f64>,
    /// Record wall times (outputs are then no longer reproducible).
    #[arg(long)]
    timing: bool,
}

fn parse_seeds(spec: &str) -> Result<Vec<u64>, String> {
    if let Some((a, b)) = spec.split_once("..") {
        let lo: u64 = a.trim().parse().map_err(|_| format!("bad seed range `{spec}`"))?;
        let hi: u64 = b.trim().parse().map_err(|_| format!("bad seed range `{spec}`"))?;
        if lo >= hi {
            return Err(format!("empty seed range `{spec}`"));
        }
        return Ok((lo..hi).collect());
    }
    spec.split(',')
        .map(|s| s.trim().parse().map_err(|_| format!("bad seed `{s}`")))
        .collect()
}

fn manifest(common: &Common, methods: Vec<Method>) -> Result<RunManifest, String> {
    let mut scenario = match &common.scenario {
        Some(path) => config::load_scenario(path).map_err(|e| format!("{}: {e}", path.display()))?,
        None => Scenario::default(),
    };
    if let Some(n) = common.max_ad_iter {
        scenario.solver.max_ad_iter = n;
    }
    if let Some(eps) = common.eps_comp {
        scenario.solver.bqp.eps_comp = eps;
    }
    scenario.solver.timing = common.timing;
    scenario.validate().map_err(|e| e.to_string())?;
    let seeds = match &common.seed {
        Some(spec) => parse_seeds(spec)?,
        None => vec![scenario.channel.seed],
    };
    Ok(RunManifest {
        scenario_path: common.scenario.clone(),
        scenario,
        methods,
        seeds,
        out_dir: common.out.clone(),
    })
}

fn report(outcome: &CompareOutcome, selections: bool) {
    for seed in &outcome.seeds {
        println!("seed {} ({})", seed.seed, seed.dir.display());
        for row in seed.rows() {
            println!(
                "  {:<9} objective {:.9}  |phi| {:.3e}  iterations {:>3}  selected {:>4}  {}",
                row.method, row.objective, row.complementarity, row.iterations, row.n_selected, row.status
            );
        }
        if selections {
            if let Some(prob) = &seed.problem {
                for m in &seed.methods {
                    print!("{}", experiment::emit_selection_report(m.method.name(), &m.solution, prob).render());
                }
            }
        }
        for failure in &seed.failures {
            eprintln!("  failed: {failure}");
        }
    }
}

fn execute(common: &Common, methods: Vec<Method>, selections: bool) -> ExitCode {
    let manifest = match manifest(common, methods) {
        Ok(m) => m,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    };
    match experiment::run_compare(&manifest) {
        Ok(outcome) => {
            report(&outcome, selections);
            if outcome.all_succeeded() {
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

fn main() -> ExitCode {
    let cli = Cli::parse();
    match cli.command {
        Command::Run { common, method } => execute(&common, vec![method], true),
        Command::Compare { common, methods } => execute(&common, methods, false),
        Command::Enumerate { common } => execute(&common, vec![Method::Enum], true),
    }
}
