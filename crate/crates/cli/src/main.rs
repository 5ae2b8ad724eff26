use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Duration;

use clap::{Parser, Subcommand, ValueEnum};
use nnrange::bench::{format_summary, random_network, run_benchmark, summarize, write_csv, BenchConfig};
use nnrange::oracle::exact_range;
use nnrange::search::{
    adversarial_search, argmax, certify_label, estimate_range, find_lower_bound, find_upper_bound, BoundSearch,
    Certification, SearchParams, SearchStatus,
};
use nnrange::{Network, Polyhedron, Simplex, ThresholdSense};
use serde_json::{json, Value};

#[derive(Parser)]
#[command(name = "nnrange", version, about = "Output range analysis for ReLU networks")]
struct Cli {
    /// Worker threads for parallel stages.
    #[arg(long, global = true, env = "NNRANGE_WORKERS")]
    workers: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Mode {
    Upper,
    Lower,
    Both,
}

#[derive(Subcommand)]
enum Command {
    /// Bound one output over the input set.
    Range {
        #[arg(long)]
        network: PathBuf,
        /// Polyhedron file; defaults to [-1, 1]^n.
        #[arg(long)]
        poly: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        output: usize,
        #[arg(long, default_value_t = 1e-3)]
        delta: f64,
        #[arg(long, value_enum, default_value_t = Mode::Both)]
        mode: Mode,
        #[arg(long, default_value_t = 4)]
        restarts: usize,
        /// Seconds per bound.
        #[arg(long)]
        time_limit: Option<f64>,
        /// Write the final upper-bound MILP in LP-like text.
        #[arg(long)]
        dump_milp: Option<PathBuf>,
    },
    /// Check that every input in the set is classified as `label`.
    Certify {
        #[arg(long)]
        network: PathBuf,
        #[arg(long)]
        poly: Option<PathBuf>,
        #[arg(long)]
        label: usize,
        #[arg(long, default_value_t = 1e-3)]
        delta: f64,
    },
    /// Look for an input whose classification differs from `label`.
    Adversarial {
        #[arg(long)]
        network: PathBuf,
        #[arg(long)]
        poly: Option<PathBuf>,
        #[arg(long)]
        label: usize,
        #[arg(long, default_value_t = 4)]
        restarts: usize,
    },
    /// Run benchmark configs over [-1, 1]^n.
    Bench {
        /// JSON array of configs.
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Generate a random single-output network.
    Gen {
        #[arg(long)]
        n: usize,
        #[arg(long)]
        k: usize,
        #[arg(long = "N")]
        neurons: usize,
        #[arg(long)]
        s: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 0)]
        instance: u64,
        /// Defaults to stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Exact range by activation-pattern enumeration (small networks only).
    Oracle {
        #[arg(long)]
        network: PathBuf,
        #[arg(long)]
        poly: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        output: usize,
    },
}

enum Failure {
    Input(String),
    NotTight,
}

impl From<nnrange::Error> for Failure {
    fn from(e: nnrange::Error) -> Self {
        Failure::Input(e.to_string())
    }
}

type Outcome = Result<(), Failure>;

fn read(path: &Path) -> Result<String, Failure> {
    fs::read_to_string(path).map_err(|e| Failure::Input(format!("cannot read {}: {e}", path.display())))
}

fn load_net(path: &Path) -> Result<Network, Failure> {
    Network::from_json_str(&read(path)?).map_err(|e| Failure::Input(format!("{}: {e}", path.display())))
}

fn load_poly(path: Option<&Path>, net: &Network) -> Result<Polyhedron, Failure> {
    let poly = match path {
        None => return Ok(Polyhedron::hypercube(net.input_dim(), -1.0, 1.0)),
        Some(p) => Polyhedron::from_json_str(&read(p)?).map_err(|e| Failure::Input(format!("{}: {e}", p.display())))?,
    };
    if poly.dim() != net.input_dim() {
        return Err(Failure::Input(format!(
            "dimension mismatch: network has {} inputs but the polyhedron has dimension {}",
            net.input_dim(),
            poly.dim()
        )));
    }
    Ok(poly)
}

fn emit(value: &Value) {
    println!("{value}");
}

fn check_positive(name: &str, v: f64) -> Outcome {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Failure::Input(format!("--{name} must be a positive number, got {v}")))
    }
}

fn one_sided(output: usize, delta: f64, search: &BoundSearch, upper: bool) -> Value {
    let iterations = json!({
        "upper_rounds": if upper { search.rounds() } else { 0 },
        "lower_rounds": if upper { 0 } else { search.rounds() },
        "local_steps": search.local_steps,
        "milp_nodes": search.milp.nodes,
        "lp_solves": search.milp.lp_solves,
        "milp_seconds": search.milp.seconds,
    });
    let (bound, arg) = (json!(search.bound), json!(search.point));
    json!({
        "output": output,
        "lower": if upper { Value::Null } else { bound.clone() },
        "upper": if upper { bound } else { Value::Null },
        "delta": delta,
        "status": search.status,
        "iterations": iterations,
        "arg_upper": if upper { arg.clone() } else { Value::Null },
        "arg_lower": if upper { Value::Null } else { arg },
    })
}

#[allow(clippy::too_many_arguments)]
fn range(
    network: &Path,
    poly: Option<&Path>,
    output: usize,
    delta: f64,
    mode: Mode,
    restarts: usize,
    time_limit: Option<f64>,
    dump_milp: Option<&Path>,
) -> Outcome {
    check_positive("delta", delta)?;
    if let Some(t) = time_limit {
        check_positive("time-limit", t)?;
    }
    let net = load_net(network)?;
    let set = load_poly(poly, &net)?;
    if output >= net.output_dim() {
        return Err(Failure::Input(format!(
            "--output {output} out of range: network has {} outputs",
            net.output_dim()
        )));
    }
    let params = SearchParams {
        restarts,
        time_limit: time_limit.map(Duration::from_secs_f64),
        ..SearchParams::with_delta(delta)
    };
    let (record, status, upper) = match mode {
        Mode::Both => {
            let r = estimate_range(&net, &set, output, &params, &Simplex)?;
            (r.to_json(), r.status, Some(r.upper))
        }
        Mode::Upper | Mode::Lower => {
            let single = net.select_output(output)?;
            let is_upper = mode == Mode::Upper;
            let s = if is_upper {
                find_upper_bound(&single, &set, &params, &Simplex)?
            } else {
                find_lower_bound(&single, &set, &params, &Simplex)?
            };
            (one_sided(output, delta, &s, is_upper), s.status, is_upper.then_some(s.bound))
        }
    };
    if let Some(path) = dump_milp {
        let single = net.select_output(output)?;
        let threshold = upper.unwrap_or(0.0);
        let problem = nnrange::encode_network(&single, &set, threshold, ThresholdSense::AtLeast, &Simplex)?;
        fs::write(path, problem.to_lp_format())
            .map_err(|e| Failure::Input(format!("cannot write {}: {e}", path.display())))?;
    }
    emit(&record);
    if status == SearchStatus::Tight {
        Ok(())
    } else {
        log::warn!("range not tight: {status:?}");
        Err(Failure::NotTight)
    }
}

fn certify(network: &Path, poly: Option<&Path>, label: usize, delta: f64) -> Outcome {
    check_positive("delta", delta)?;
    let net = load_net(network)?;
    let set = load_poly(poly, &net)?;
    let (verdict, ranges) = certify_label(&net, &set, label, &SearchParams::with_delta(delta), &Simplex)?;
    let ranges: Vec<Value> = ranges.iter().map(|r| r.to_json()).collect();
    let (name, detail) = match &verdict {
        Certification::Certified => ("certified", Value::Null),
        Certification::Counterexample(x) => {
            let outputs = net.forward(x)?.outputs;
            ("counterexample", json!({"input": x, "outputs": outputs, "predicted": argmax(&outputs)}))
        }
        Certification::Undetermined { overlapping } => ("undetermined", json!({"overlapping": overlapping})),
    };
    emit(&json!({"label": label, "verdict": name, "detail": detail, "ranges": ranges}));
    match verdict {
        Certification::Undetermined { .. } => Err(Failure::NotTight),
        _ => Ok(()),
    }
}

fn adversarial(network: &Path, poly: Option<&Path>, label: usize, restarts: usize) -> Outcome {
    let net = load_net(network)?;
    let set = load_poly(poly, &net)?;
    let params = SearchParams {
        restarts,
        ..SearchParams::default()
    };
    let record = match adversarial_search(&net, &set, label, &params, &Simplex)? {
        Some(x) => {
            let outputs = net.forward(&x)?.outputs;
            json!({"label": label, "found": true, "input": x, "outputs": outputs, "predicted": argmax(&outputs)})
        }
        None => json!({"label": label, "found": false}),
    };
    emit(&record);
    Ok(())
}

fn bench(config: &Path, out: &Path) -> Outcome {
    let text = read(config)?;
    let cfgs: Vec<BenchConfig> = serde_json::from_str(&text)
        .map_err(|e| Failure::Input(format!("{}: expected a JSON array of configs: {e}", config.display())))?;
    let records = run_benchmark(&cfgs, &Simplex, |r| {
        log::info!("config {} instance {}: {:?} in {:.3}s", r.config_id, r.instance, r.status, r.seconds);
    })?;
    let file = fs::File::create(out).map_err(|e| Failure::Input(format!("cannot write {}: {e}", out.display())))?;
    write_csv(&records, file).map_err(|e| Failure::Input(format!("cannot write {}: {e}", out.display())))?;
    eprint!("{}", format_summary(&summarize(&cfgs, &records)));
    Ok(())
}

fn gen(n: usize, k: usize, neurons: usize, s: f64, seed: u64, instance: u64, out: Option<&Path>) -> Outcome {
    let cfg = BenchConfig::new(n, k, neurons, s, 1, seed);
    cfg.validate()?;
    let text = random_network(n, &vec![neurons; k], 1, s, seed, instance).to_json_string();
    match out {
        Some(path) => {
            fs::write(path, text).map_err(|e| Failure::Input(format!("cannot write {}: {e}", path.display())))?
        }
        None => {
            let mut stdout = std::io::stdout();
            let _ = writeln!(stdout, "{text}");
        }
    }
    Ok(())
}

fn oracle(network: &Path, poly: Option<&Path>, output: usize) -> Outcome {
    let net = load_net(network)?;
    let set = load_poly(poly, &net)?;
    let r = exact_range(&net, &set, output, &Simplex)?;
    emit(&json!({
        "output": output,
        "lower": r.lower,
        "upper": r.upper,
        "arg_lower": r.arg_lower,
        "arg_upper": r.arg_upper,
        "cells": r.cells,
    }));
    Ok(())
}

fn run(cli: Cli) -> Outcome {
    if let Some(w) = cli.workers {
        if w == 0 {
            return Err(Failure::Input("--workers must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(w)
            .build_global()
            .map_err(|e| Failure::Input(format!("cannot start worker pool: {e}")))?;
    }
    match cli.command {
        Command::Range {
            network,
            poly,
            output,
            delta,
            mode,
            restarts,
            time_limit,
            dump_milp,
        } => range(
            &network,
            poly.as_deref(),
            output,
            delta,
            mode,
            restarts,
            time_limit,
            dump_milp.as_deref(),
        ),
        Command::Certify {
            network,
            poly,
            label,
            delta,
        } => certify(&network, poly.as_deref(), label, delta),
        Command::Adversarial {
            network,
            poly,
            label,
            restarts,
        } => adversarial(&network, poly.as_deref(), label, restarts),
        Command::Bench { config, out } => bench(&config, &out),
        Command::Gen {
            n,
            k,
            neurons,
            s,
            seed,
            instance,
            out,
        } => gen(n, k, neurons, s, seed, instance, out.as_deref()),
        Command::Oracle { network, poly, output } => oracle(&network, poly.as_deref(), output),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::NotTight) => ExitCode::from(1),
        Err(Failure::Input(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}
