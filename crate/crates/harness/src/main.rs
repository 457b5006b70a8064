use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use stochrep::{experiment_catalog, load_config, run, run_suite, HarnessError, RunOptions, SuiteOptions};

#[derive(Parser)]
#[command(name = "stochrep", version, about = "Monte Carlo checks of stochastic integral representations")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Override the master seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Override the primary path count.
    #[arg(long, global = true)]
    paths: Option<usize>,
    /// Output directory.
    #[arg(long, global = true, env = "STOCHREP_OUT", default_value = "stochrep-out")]
    out: PathBuf,
    /// Fail on unresolved-hit rates above the flag_rate tolerance.
    #[arg(long, global = true)]
    strict: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Run one experiment config.
    Run { config: PathBuf },
    /// Run every config in a directory and aggregate the verdicts.
    Suite {
        dir: PathBuf,
        /// Rerun the suite and compare every emitted sample byte.
        #[arg(long)]
        check_reproducible: bool,
    },
    /// List experiments with the claims they test.
    List,
}

fn fail(e: HarnessError) -> ExitCode {
    eprintln!("error: {e}");
    ExitCode::from(e.exit_code() as u8)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let opts = RunOptions {
        seed: cli.seed,
        paths: cli.paths,
        strict: cli.strict,
    };
    match cli.command {
        Command::List => {
            for (exp, criteria) in experiment_catalog() {
                println!("{exp}");
                for (id, anchor) in criteria {
                    println!("    {:<24} {anchor}", id.as_str());
                }
            }
            ExitCode::SUCCESS
        }
        Command::Run { config } => {
            let cfg = match load_config(&config) {
                Ok(c) => c,
                Err(e) => return fail(e),
            };
            match run(&cfg, &cli.out, opts) {
                Ok(report) => {
                    for c in &report.criteria {
                        println!("{} {}", if c.pass { "PASS" } else { "FAIL" }, c.id);
                    }
                    if report.pass {
                        ExitCode::SUCCESS
                    } else {
                        for f in report.failures() {
                            eprintln!("{f}");
                        }
                        ExitCode::from(1)
                    }
                }
                Err(e) => fail(e),
            }
        }
        Command::Suite { dir, check_reproducible } => {
            let sopts = SuiteOptions {
                run: opts,
                check_reproducible,
                runtime_limit_seconds: None,
            };
            match run_suite(&dir, &cli.out, sopts) {
                Ok(suite) => {
                    print!("{}", suite.table_text());
                    if suite.pass {
                        ExitCode::SUCCESS
                    } else {
                        for m in suite.members.iter().filter(|m| !m.pass) {
                            for f in &m.failures {
                                eprintln!("{}: {f}", m.name);
                            }
                        }
                        if let Some(r) = &suite.reproducibility {
                            for n in r.differing_samples.iter().chain(&r.differing_reports) {
                                eprintln!("{n}: criterion reproducibility failed: output differs on rerun");
                            }
                        }
                        ExitCode::from(1)
                    }
                }
                Err(e) => fail(e),
            }
        }
    }
}
