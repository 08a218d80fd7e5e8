//! `mvlab`: seeded, reproducible experiments on matrix-vector query
//! complexity. Subcommands cover the experiment harness (`bench`), direct
//! polynomial-approximation sweeps (`polyapprox`), hard-instance metadata
//! (`instance`), the distinguishing game (`game`), trace estimation
//! (`trace`), and sphere-concentration Monte Carlo (`sphere`).

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

use mvlab_core::experiments::{self, ExperimentConfig, ExperimentId};
use mvlab_core::instances::{self, inverse_pipeline, PairBacking, SpectrumLayout};
use mvlab_core::polyapprox::{
    best_uniform_approx, min_error_inverse_split, split_lower_bound, DiscreteDomain,
};
use mvlab_core::probes::{
    distinguish_game, sphere_props_montecarlo, trace_inverse_via_solver, AlwaysGuessA,
    DenseTraceThreshold, DistinguishAlgorithm, TraceEstimateThreshold,
};
use mvlab_core::rng::{derive_seed, trial_rng};
use mvlab_core::solvers::cgne;

#[derive(Parser)]
#[command(
    name = "mvlab",
    about = "numerical laboratory for matrix-vector query complexity",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum OutFormat {
    Csv,
    Json,
}

#[derive(Subcommand)]
enum Command {
    /// Run a seeded experiment (E1..E9 or `all`) and write
    /// E{k}_results.csv, E{k}_summary.json, E{k}_plot.txt.
    Bench(BenchArgs),
    /// Best uniform approximation of 1/x on the split interval.
    Polyapprox(PolyArgs),
    /// Construct a hard instance and print its metadata (never a matrix).
    Instance(InstanceArgs),
    /// Play the distinguishing game on an indistinguishable pair.
    Game(GameArgs),
    /// Trace-inverse estimation trials on a split-spectrum system.
    Trace(TraceArgs),
    /// Sphere-concentration Monte Carlo frequencies.
    Sphere(SphereArgs),
}

#[derive(Args)]
struct BenchArgs {
    /// Experiment id: E1..E9, or `all`.
    experiment: String,
    /// Flat key=value parameter file overriding the experiment defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Master seed; every output row carries its derived trial seed.
    #[arg(long, default_value_t = 20260808)]
    seed: u64,
    /// Output directory.
    #[arg(long, default_value = "mvlab_out")]
    out: PathBuf,
}

#[derive(Args)]
struct PolyArgs {
    #[arg(long)]
    kappa: f64,
    /// Highest degree to sweep (inclusive, from 0).
    #[arg(long)]
    degree: usize,
    /// Grid points per interval component.
    #[arg(long, default_value_t = 5000)]
    grid: usize,
    #[arg(long, value_enum, default_value_t = OutFormat::Csv)]
    out: OutFormat,
}

#[derive(Args)]
struct InstanceArgs {
    /// pair | orthogonal | split | outliers
    #[arg(long)]
    kind: String,
    #[arg(long)]
    n: usize,
    #[arg(long, default_value_t = 4.0)]
    kappa: f64,
    /// Pipeline degree (pair) or outlier count (outliers).
    #[arg(long, default_value_t = 5)]
    t: usize,
    #[arg(long, default_value_t = 0.1)]
    eta: f64,
    #[arg(long, default_value_t = 20260808)]
    seed: u64,
    #[arg(long, value_enum, default_value_t = OutFormat::Json)]
    out: OutFormat,
}

#[derive(Args)]
struct GameArgs {
    /// baseline | dense | estimate
    #[arg(long, default_value = "estimate")]
    algorithm: String,
    #[arg(long, default_value_t = 4.0)]
    kappa: f64,
    #[arg(long, default_value_t = 3)]
    t: usize,
    #[arg(long, default_value_t = 0.1)]
    eta: f64,
    #[arg(long, default_value_t = 400)]
    n: usize,
    #[arg(long, default_value_t = 200)]
    trials: u64,
    #[arg(long, default_value_t = 20260808)]
    seed: u64,
    #[arg(long, value_enum, default_value_t = OutFormat::Csv)]
    out: OutFormat,
}

#[derive(Args)]
struct TraceArgs {
    #[arg(long, default_value_t = 300)]
    n: usize,
    #[arg(long, default_value_t = 4.0)]
    kappa: f64,
    /// Probes per estimate.
    #[arg(long, default_value_t = 1)]
    k: usize,
    #[arg(long, default_value_t = 100)]
    trials: u64,
    #[arg(long, default_value_t = 20260808)]
    seed: u64,
    #[arg(long, value_enum, default_value_t = OutFormat::Csv)]
    out: OutFormat,
}

#[derive(Args)]
struct SphereArgs {
    #[arg(long, default_value_t = 100)]
    n: usize,
    #[arg(long, default_value_t = 1.0)]
    radius: f64,
    #[arg(long, default_value_t = 100000)]
    trials: usize,
    #[arg(long, default_value_t = 20260808)]
    seed: u64,
}

fn main() {
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Bench(args) => bench(args),
        Command::Polyapprox(args) => polyapprox(args),
        Command::Instance(args) => instance(args),
        Command::Game(args) => game(args),
        Command::Trace(args) => trace(args),
        Command::Sphere(args) => sphere(args),
    };
    if let Err(message) = outcome {
        eprintln!("error: {message}");
        std::process::exit(1);
    }
}

fn bench(args: BenchArgs) -> Result<(), String> {
    let ids: Vec<ExperimentId> = if args.experiment.eq_ignore_ascii_case("all") {
        ExperimentId::ALL.to_vec()
    } else {
        vec![args.experiment.parse()?]
    };
    let params_text = match &args.config {
        Some(path) => std::fs::read_to_string(path).map_err(|e| e.to_string())?,
        None => String::new(),
    };
    for id in ids {
        let config = ExperimentConfig::new(id, args.seed)
            .with_params_text(&params_text)
            .map_err(|e| e.to_string())?;
        eprintln!("running {} ({})", id.name(), id.description());
        let output = experiments::run(&config).map_err(|e| e.to_string())?;
        output.write_to(&args.out).map_err(|e| e.to_string())?;
        eprintln!(
            "wrote {0}/{1}_results.csv, {1}_summary.json, {1}_plot.txt",
            args.out.display(),
            id.name()
        );
    }
    Ok(())
}

fn polyapprox(args: PolyArgs) -> Result<(), String> {
    let mut rows = Vec::new();
    for t in 0..=args.degree {
        let result = min_error_inverse_split(args.kappa, t, args.grid.max(10 * (t + 2)))
            .map_err(|e| e.to_string())?;
        let lower = split_lower_bound(args.kappa, t).map_err(|e| e.to_string())?;
        // lifted upper envelope via the odd-part reduction
        let lifted = if t == 0 {
            1.0
        } else {
            let qd = (t - 1) / 2;
            let ydom = DiscreteDomain::interval(1.0, args.kappa * args.kappa, args.grid)
                .map_err(|e| e.to_string())?;
            let yv = ydom.evaluate(|y| 1.0 / y);
            let q = best_uniform_approx(&ydom, &yv, qd).map_err(|e| e.to_string())?;
            DiscreteDomain::split_interval(args.kappa, args.grid)
                .map_err(|e| e.to_string())?
                .points()
                .iter()
                .map(|&x| (x * q.polynomial.evaluate(x * x) - 1.0 / x).abs())
                .fold(0.0f64, f64::max)
        };
        rows.push((
            args.kappa,
            t,
            result.error,
            lower,
            lifted,
            result.witnesses.len(),
        ));
    }
    match args.out {
        OutFormat::Csv => {
            println!("kappa,t,E_t,lower_bound,lifted_upper,witness_count");
            for (kappa, t, e, lower, lifted, w) in rows {
                println!("{kappa},{t},{e},{lower},{lifted},{w}");
            }
        }
        OutFormat::Json => {
            let objects: Vec<serde_json::Value> = rows
                .iter()
                .map(|(kappa, t, e, lower, lifted, w)| {
                    serde_json::json!({
                        "kappa": kappa, "t": t, "E_t": e,
                        "lower_bound": lower, "lifted_upper": lifted,
                        "witness_count": w,
                    })
                })
                .collect();
            println!("{}", serde_json::to_string_pretty(&objects).unwrap());
        }
    }
    Ok(())
}

fn instance(args: InstanceArgs) -> Result<(), String> {
    let value = match args.kind.as_str() {
        "pair" => {
            let grid = (10 * (args.t + 2)).max(600);
            let pipe = inverse_pipeline(
                args.kappa,
                args.t,
                args.eta,
                args.n,
                grid,
                args.seed,
                PairBacking::Rotated,
            )
            .map_err(|e| e.to_string())?;
            let report = pipe.weights.invariant_report();
            serde_json::json!({
                "kind": "pair",
                "pair": pipe.pair,
                "nodes": pipe.nodes,
                "weights": pipe.weights,
                "invariants": report,
            })
        }
        "orthogonal" => {
            let (oracle, b) =
                instances::orthogonal_system(args.n, args.seed).map_err(|e| e.to_string())?;
            serde_json::json!({
                "kind": "orthogonal",
                "n": oracle.dimension(),
                "mode": "one-sided",
                "condition_number": 1.0,
                "rhs": b,
                "seed": args.seed,
            })
        }
        "split" | "outliers" => {
            let layout = if args.kind == "split" {
                SpectrumLayout::LogLinear
            } else {
                SpectrumLayout::Outliers {
                    count: args.t,
                    inner_kappa: args.eta.max(1.0),
                }
            };
            let eigs = instances::split_spectrum_eigenvalues(args.n, args.kappa, layout)
                .map_err(|e| e.to_string())?;
            let max = eigs.iter().fold(0.0f64, |a, &x| a.max(x.abs()));
            let min = eigs.iter().fold(f64::INFINITY, |a, &x| a.min(x.abs()));
            serde_json::json!({
                "kind": args.kind,
                "n": args.n,
                "kappa": args.kappa,
                "layout": layout,
                "seed": args.seed,
                "condition_number": max / min,
                "extreme_eigenvalues": [min, max],
            })
        }
        other => return Err(format!("unknown instance kind '{other}'")),
    };
    println!("{}", serde_json::to_string_pretty(&value).unwrap());
    Ok(())
}

fn game(args: GameArgs) -> Result<(), String> {
    let grid = (10 * (args.t + 2)).max(600);
    let pipe = inverse_pipeline(
        args.kappa,
        args.t,
        args.eta,
        args.n,
        grid,
        args.seed,
        PairBacking::Rotated,
    )
    .map_err(|e| e.to_string())?;
    let mut baseline = AlwaysGuessA;
    let mut dense = DenseTraceThreshold;
    let mut estimate = TraceEstimateThreshold {
        probes: 1,
        budget: 10_000,
    };
    let algorithm: &mut dyn DistinguishAlgorithm = match args.algorithm.as_str() {
        "baseline" => &mut baseline,
        "dense" => &mut dense,
        "estimate" => &mut estimate,
        other => return Err(format!("unknown algorithm '{other}'")),
    };
    let result = distinguish_game(
        &pipe.nodes,
        &pipe.multiplicities,
        &pipe.multiplicities_tilde,
        PairBacking::Rotated,
        algorithm,
        args.trials,
        args.seed,
    )
    .map_err(|e| e.to_string())?;
    match args.out {
        OutFormat::Csv => {
            println!("trial_id,seed,guess,truth,matvecs,correct");
            for row in &result.rows {
                println!(
                    "{},{},{},{},{},{}",
                    row.trial, row.seed, row.guess, row.truth, row.matvecs, row.correct
                );
            }
            eprintln!(
                "success {}/{} = {:.4} (95% Wilson [{:.4}, {:.4}]), voided {}",
                result.successes,
                result.trials,
                result.success_probability,
                result.wilson.low,
                result.wilson.high,
                result.voided
            );
        }
        OutFormat::Json => println!("{}", serde_json::to_string_pretty(&result).unwrap()),
    }
    Ok(())
}

fn trace(args: TraceArgs) -> Result<(), String> {
    let system =
        instances::split_spectrum_matrix(args.n, args.kappa, SpectrumLayout::LogLinear, args.seed)
            .map_err(|e| e.to_string())?;
    let true_trace: f64 = system.eigenvalues.iter().map(|&l| 1.0 / l).sum();
    let frob: f64 = system
        .eigenvalues
        .iter()
        .map(|&l| 1.0 / (l * l))
        .sum::<f64>()
        .sqrt();
    let tol = 1.0 / args.n as f64;
    let mut rows = Vec::new();
    for trial in 0..args.trials {
        let seed = derive_seed(args.seed, trial);
        let mut rng = trial_rng(seed, 0);
        let mut oracle = system.oracle.clone();
        let est = trace_inverse_via_solver(&mut oracle, args.k, &mut rng, |o, b| {
            Ok(cgne(o, b, tol, 50 * args.n)?.solution)
        })
        .map_err(|e| e.to_string())?;
        let error = (est.estimate - true_trace).abs();
        rows.push((trial, seed, est.estimate, error, error <= 5.0 * frob));
    }
    let failures = rows.iter().filter(|r| !r.4).count();
    match args.out {
        OutFormat::Csv => {
            println!("trial_id,seed,estimate,abs_error,within_5frob");
            for (t, s, e, err, ok) in &rows {
                println!("{t},{s},{e},{err},{ok}");
            }
            eprintln!(
                "true trace {true_trace:.6}, ||A^-1||_F {frob:.6}, failures {failures}/{}",
                args.trials
            );
        }
        OutFormat::Json => {
            let value = serde_json::json!({
                "true_trace": true_trace,
                "frobenius": frob,
                "failures": failures,
                "trials": args.trials,
                "rows": rows.iter().map(|(t, s, e, err, ok)| serde_json::json!({
                    "trial": t, "seed": s, "estimate": e, "abs_error": err, "ok": ok,
                })).collect::<Vec<_>>(),
            });
            println!("{}", serde_json::to_string_pretty(&value).unwrap());
        }
    }
    Ok(())
}

fn sphere(args: SphereArgs) -> Result<(), String> {
    let mut rng = trial_rng(args.seed, 0);
    let freqs = sphere_props_montecarlo(args.n, args.radius, args.trials, &mut rng);
    println!("{}", serde_json::to_string_pretty(&freqs).unwrap());
    Ok(())
}
