use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use mfeq::bilevel::optimize_params;
use mfeq::equilibrium::find_equilibrium;
use mfeq::report::{
    equilibrium_csv, read_param_box, read_reference_csv, solve_summary, write_json, write_text,
    SweepEntry,
};
use mfeq::scenario::parse_scenario;
use mfeq::{Result, Scenario};

#[derive(Parser)]
#[command(name = "mfeq", about = "Mean-field traffic equilibrium solver", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct CommonArgs {
    /// Scenario JSON document.
    #[arg(long)]
    scenario: PathBuf,
    /// Output directory.
    #[arg(long, default_value = "./out")]
    output: PathBuf,
    /// Override the solver residual tolerance.
    #[arg(long)]
    tol: Option<f64>,
    /// Override the iteration cap.
    #[arg(long)]
    max_iter: Option<usize>,
    /// Override the damping factor.
    #[arg(long)]
    damping: Option<f64>,
    /// Reserved; the solver has no stochastic components.
    #[arg(long, hide = true)]
    seed_unused: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// Compute one equilibrium and export the trajectory.
    Solve(CommonArgs),
    /// Search a congestion-parameter box for the best fit to a reference.
    Bilevel {
        #[command(flatten)]
        common: CommonArgs,
        /// Reference trajectory (equilibrium CSV).
        #[arg(long)]
        reference: PathBuf,
        /// Parameter box and budget JSON.
        #[arg(long)]
        param_box: PathBuf,
    },
    /// Repeat solve over a list of beta values.
    Sweep {
        #[command(flatten)]
        common: CommonArgs,
        /// Comma-separated beta values.
        #[arg(long, value_delimiter = ',', required = true)]
        betas: Vec<f64>,
    },
}

fn load_scenario(common: &CommonArgs) -> Result<Scenario> {
    let mut scenario = parse_scenario(&common.scenario)?;
    if let Some(tol) = common.tol {
        scenario.solver.tol = tol;
    }
    if let Some(max_iter) = common.max_iter {
        scenario.solver.max_iter = max_iter;
    }
    if let Some(damping) = common.damping {
        scenario.solver.damping = damping;
    }
    Ok(scenario)
}

/// Exit 0 when converged, 2 otherwise; outputs are written either way.
fn cmd_solve(common: &CommonArgs) -> Result<u8> {
    let scenario = load_scenario(common)?;
    let result = find_equilibrium(&scenario)?;
    write_text(
        common.output.join("equilibrium.csv"),
        &equilibrium_csv(&result, &scenario),
    )?;
    write_json(common.output.join("summary.json"), &solve_summary(&result))?;
    Ok(if result.converged { 0 } else { 2 })
}

fn cmd_bilevel(common: &CommonArgs, reference: &PathBuf, param_box: &PathBuf) -> Result<u8> {
    let scenario = load_scenario(common)?;
    let reference = read_reference_csv(reference, &scenario)?;
    let box_file = read_param_box(param_box)?;
    let result = optimize_params(
        &box_file.bounds(),
        &reference,
        &scenario,
        box_file.search(),
    )?;
    write_json(common.output.join("bilevel.json"), &result)?;

    let best = scenario.with_congestion(mfeq::value::CongestionParams {
        alpha_prime: result.best_alpha_prime,
        alpha_second: result.best_alpha_second,
    });
    let equilibrium = find_equilibrium(&best)?;
    write_text(
        common.output.join("best_equilibrium.csv"),
        &equilibrium_csv(&equilibrium, &best),
    )?;
    Ok(if equilibrium.converged { 0 } else { 2 })
}

fn cmd_sweep(common: &CommonArgs, betas: &[f64]) -> Result<u8> {
    let base = load_scenario(common)?;
    let mut index = Vec::with_capacity(betas.len());
    let mut all_converged = true;
    for (i, &beta) in betas.iter().enumerate() {
        if beta < 0.0 {
            return Err(mfeq::Error::Validation {
                rule: format!("sweep beta {beta} must be nonnegative"),
            });
        }
        let mut scenario = base.clone();
        scenario.beta = beta;
        let result = find_equilibrium(&scenario)?;
        let name = format!("beta_{i:03}.csv");
        write_text(
            common.output.join(&name),
            &equilibrium_csv(&result, &scenario),
        )?;
        all_converged &= result.converged;
        index.push(SweepEntry {
            beta,
            csv: name,
            converged: result.converged,
            iterations: result.iterations,
        });
    }
    write_json(common.output.join("index.json"), &index)?;
    Ok(if all_converged { 0 } else { 2 })
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match &cli.command {
        Command::Solve(common) => cmd_solve(common),
        Command::Bilevel {
            common,
            reference,
            param_box,
        } => cmd_bilevel(common, reference, param_box),
        Command::Sweep { common, betas } => cmd_sweep(common, betas),
    };
    match outcome {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
