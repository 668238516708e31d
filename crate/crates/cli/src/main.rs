use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use log::info;
use serde_json::json;

use scobb::bench::{format_table, run_benchmark, to_csv, Algo, BenchConfig};
use scobb::cutplane::{run_cutplane, CutPlaneOptions};
use scobb::generator::{generate_instance, GeneratorSettings};
use scobb::io::{load_instance, save_instance, to_canonical_json, InstanceFile, Provenance};
use scobb::liquidation::{check_assumptions, check_optimality_activity, shock_capacity};
use scobb::lowerbound::RelaxationKind;
use scobb::oracle::brute_force_oracle;
use scobb::sco::{find_feasible_point, run_sco, DcInstance, ScoOptions};
use scobb::scobb::{run_scobb, Progress, ScobbOptions};
use scobb::subsolvers::{SolveStatus, StatusKind};

#[derive(Parser)]
#[command(name = "scobb", version, about = "Global solver for nonconvex QCQPs")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum SolveAlgo {
    Cutplane,
    Sco,
    Scobb,
}

#[derive(Clone, Copy, ValueEnum)]
enum Bounder {
    Mccormick,
    Secant,
}

#[derive(Clone, Copy, ValueEnum)]
enum BenchAlgo {
    Sco,
    Scobb,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a seeded liquidation instance.
    Generate {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 1)]
        m: usize,
        #[arg(long, default_value_t = 0.3)]
        pi: f64,
        #[arg(long, default_value_t = 0.8)]
        delta_frac: f64,
        #[arg(long, default_value_t = 18.0)]
        rho1: f64,
        #[arg(long, default_value_t = 18.0)]
        rho2: f64,
        /// Draw gamma/lambda in [1.5, 2.5] so that the quadratics are indefinite.
        #[arg(long)]
        nonconvex: bool,
        /// Output file (stdout when omitted).
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Solve an instance file and print a JSON report.
    Solve {
        instance: PathBuf,
        #[arg(long, value_enum, default_value = "scobb")]
        algo: SolveAlgo,
        #[arg(long, default_value_t = 1e-6)]
        eps: f64,
        #[arg(long, default_value_t = 200_000)]
        max_nodes: usize,
        /// Wall-clock limit in seconds.
        #[arg(long)]
        time_limit: Option<f64>,
        #[arg(long, default_value_t = 1)]
        threads: usize,
        #[arg(long, value_enum, default_value = "mccormick")]
        bounder: Bounder,
        /// Omit timings so that reruns print identical reports.
        #[arg(long)]
        deterministic: bool,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Exhaustive grid search (at most 4 variables).
    Oracle {
        instance: PathBuf,
        #[arg(long, default_value_t = 1e-3)]
        resolution: f64,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Seed-averaged comparison of SCO and SCOBB.
    Bench {
        #[arg(long, value_delimiter = ',', default_values_t = [10usize, 20])]
        ms: Vec<usize>,
        #[arg(long, default_value_t = 5)]
        seeds: usize,
        #[arg(long, default_value_t = 0)]
        seed_base: u64,
        #[arg(long, default_value_t = 0.3)]
        pi: f64,
        #[arg(long, default_value_t = 0.8)]
        delta_frac: f64,
        #[arg(long, default_value_t = 18.0)]
        rho: f64,
        #[arg(long, default_value_t = 1e-6)]
        eps: f64,
        #[arg(long, value_enum, value_delimiter = ',', default_values = ["sco", "scobb"])]
        algos: Vec<BenchAlgo>,
        #[arg(long, default_value_t = 200_000)]
        max_nodes: usize,
        #[arg(long, default_value_t = 1)]
        threads: usize,
        #[arg(long)]
        nonconvex: bool,
        #[arg(long)]
        deterministic: bool,
        /// CSV destination (printed after the table when omitted).
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Check the standing assumptions of a liquidation instance and, unless
    /// disabled, solve it and report whether the second leverage cap binds.
    Check {
        instance: PathBuf,
        #[arg(long)]
        no_solve: bool,
        #[arg(long, default_value_t = 1e-6)]
        eps: f64,
    },
}

fn status_code(status: &SolveStatus) -> u8 {
    match status.kind {
        StatusKind::Optimal => 0,
        StatusKind::IterLimit => 2,
        StatusKind::Infeasible => 3,
        StatusKind::NumericalFailure => 1,
    }
}

fn emit(text: &str, output: Option<&PathBuf>) -> Result<()> {
    match output {
        Some(path) => std::fs::write(path, text).with_context(|| format!("writing {}", path.display())),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn progress_logger() -> impl FnMut(&Progress) {
    move |p: &Progress| {
        if p.nodes_processed % 100 == 0 {
            info!(
                "nodes {} open {} upper {:.10e} lower {:.10e}",
                p.nodes_processed, p.open_nodes, p.upper, p.lower
            );
        }
    }
}

fn run(cli: Cli) -> Result<u8> {
    match cli.command {
        Command::Generate {
            seed,
            m,
            pi,
            delta_frac,
            rho1,
            rho2,
            nonconvex,
            output,
        } => {
            let settings = if nonconvex {
                GeneratorSettings::nonconvex(m, pi, delta_frac, rho1, rho2)
            } else {
                GeneratorSettings::new(m, pi, delta_frac, rho1, rho2)
            };
            let p = generate_instance(seed, &settings)?;
            let file = InstanceFile::from_liquidation(p, Some(Provenance { seed, settings }));
            match output {
                Some(path) => save_instance(&path, &file)?,
                None => print!("{}", to_canonical_json(&file)?),
            }
            Ok(0)
        }
        Command::Solve {
            instance,
            algo,
            eps,
            max_nodes,
            time_limit,
            threads,
            bounder,
            deterministic,
            output,
        } => {
            let file = load_instance(&instance)?;
            let dc = DcInstance::new(file.qcqp()?)?;
            let liq = file.liquidation.as_ref();
            let sco_opts = ScoOptions::with_eps(eps);
            let (report, status) = match algo {
                SolveAlgo::Cutplane => {
                    let p = liq.ok_or_else(|| anyhow!("cutplane needs a liquidation instance"))?;
                    let res = run_cutplane(p, &CutPlaneOptions::default())?;
                    let status = res.status.clone();
                    (serde_json::to_value(&res)?, status)
                }
                SolveAlgo::Sco => {
                    let start = match liq {
                        Some(p) => run_cutplane(p, &CutPlaneOptions::default())?.feasible_point,
                        None => find_feasible_point(&dc, &sco_opts)?,
                    };
                    let Some(y0) = start else {
                        let status = SolveStatus::new(StatusKind::Infeasible, "no feasible starting point found");
                        return finish_solve(json!({ "status": status }), &status, output.as_ref());
                    };
                    let res = run_sco(&dc, &y0, &sco_opts)?;
                    let activity = liq.and_then(|p| check_optimality_activity(p, &res.y, 1e-6).ok());
                    let status = res.trace.status.clone();
                    let value = json!({
                        "y": res.y,
                        "value": res.value,
                        "iterations": res.iterations(),
                        "status": status,
                        "activity": activity,
                    });
                    (value, status)
                }
                SolveAlgo::Scobb => {
                    let opts = ScobbOptions {
                        eps,
                        max_nodes,
                        time_limit,
                        threads,
                        bounder: match bounder {
                            Bounder::Mccormick => RelaxationKind::McCormick,
                            Bounder::Secant => RelaxationKind::Secant,
                        },
                        sco: sco_opts,
                        ..Default::default()
                    };
                    let mut cb = progress_logger();
                    let mut rep = run_scobb(&dc, liq, &opts, Some(&mut cb))?;
                    if deterministic {
                        rep.wall_time = 0.0;
                    }
                    let status = rep.status.clone();
                    (serde_json::to_value(&rep)?, status)
                }
            };
            finish_solve(report, &status, output.as_ref())
        }
        Command::Oracle {
            instance,
            resolution,
            output,
        } => {
            let file = load_instance(&instance)?;
            let res = brute_force_oracle(&file.qcqp()?, resolution)?;
            emit(&to_canonical_json(&res)?, output.as_ref())?;
            Ok(0)
        }
        Command::Bench {
            ms,
            seeds,
            seed_base,
            pi,
            delta_frac,
            rho,
            eps,
            algos,
            max_nodes,
            threads,
            nonconvex,
            deterministic,
            csv,
        } => {
            let cfg = BenchConfig {
                ms,
                seeds,
                seed_base,
                pi,
                delta_frac,
                rho1: rho,
                rho2: rho,
                eps,
                algos: algos
                    .into_iter()
                    .map(|a| match a {
                        BenchAlgo::Sco => Algo::Sco,
                        BenchAlgo::Scobb => Algo::Scobb,
                    })
                    .collect(),
                deterministic,
                max_nodes,
                threads,
                nonconvex,
            };
            let rep = run_benchmark(&cfg)?;
            for r in rep.records.iter().filter(|r| r.error.is_some()) {
                log::warn!(
                    "m={} seed={} {}: {}",
                    r.m,
                    r.seed,
                    r.algo.name(),
                    r.error.as_deref().unwrap_or_default()
                );
            }
            print!("{}", format_table(&rep.rows));
            let text = to_csv(&rep.rows);
            match csv {
                Some(path) => std::fs::write(&path, text).with_context(|| format!("writing {}", path.display()))?,
                None => print!("\n{text}"),
            }
            Ok(0)
        }
        Command::Check {
            instance,
            no_solve,
            eps,
        } => {
            let file = load_instance(&instance)?;
            let Some(p) = file.liquidation.as_ref() else {
                bail!("check needs a liquidation instance");
            };
            let assumptions = check_assumptions(p);
            let capacity = shock_capacity(p).map_err(|e| e.to_string());
            let mut out = json!({
                "assumptions": assumptions,
                "all_hold": assumptions.all_hold(),
                "shock_capacity": match &capacity {
                    Ok(c) => serde_json::to_value(c)?,
                    Err(e) => json!({ "error": e }),
                },
            });
            let mut code = if assumptions.all_hold() { 0 } else { 1 };
            if !no_solve {
                let dc = DcInstance::new(file.qcqp()?)?;
                let opts = ScobbOptions {
                    eps,
                    sco: ScoOptions::with_eps(eps),
                    ..Default::default()
                };
                let rep = run_scobb(&dc, Some(p), &opts, None)?;
                out["solution"] = json!({
                    "status": rep.status,
                    "value": rep.upper,
                    "gap": rep.gap,
                    "activity": rep.activity,
                });
                if code == 0 {
                    code = status_code(&rep.status);
                }
            }
            print!("{}", to_canonical_json(&out)?);
            Ok(code)
        }
    }
}

fn finish_solve(report: serde_json::Value, status: &SolveStatus, output: Option<&PathBuf>) -> Result<u8> {
    emit(&to_canonical_json(&report)?, output)?;
    if !status.is_optimal() {
        eprintln!("status: {status}");
    }
    Ok(status_code(status))
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("QCQP_LOG", "warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
