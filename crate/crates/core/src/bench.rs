//! Random network benchmarks.
//!
//! Networks are drawn from ChaCha8 with the configured seed, one stream per
//! instance (`set_stream(instance)`), so any instance can be regenerated on
//! its own. For every weight and bias, in layer order, row-major weights
//! first: a coin `U[0,1) < s` decides whether the entry is nonzero, and a
//! nonzero entry is drawn from `U[-1,1]`.

use std::fmt::Write as _;
use std::io::Write;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lp::LpSolver;
use crate::network::{Layer, Network};
use crate::polytope::Polyhedron;
use crate::search::{estimate_range, SearchParams, SearchStatus};

fn default_delta() -> f64 {
    1e-3
}

fn default_time_limit() -> f64 {
    60.0
}

/// One row of the benchmark table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchConfig {
    /// Inputs.
    pub n: usize,
    /// Hidden layers.
    pub k: usize,
    /// Neurons per hidden layer.
    #[serde(rename = "N")]
    pub neurons: usize,
    /// Fraction of nonzero entries.
    pub s: f64,
    pub count: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_delta")]
    pub delta: f64,
    /// Per-instance limit in seconds.
    #[serde(default = "default_time_limit")]
    pub time_limit: f64,
}

impl BenchConfig {
    pub fn new(n: usize, k: usize, neurons: usize, s: f64, count: usize, seed: u64) -> Self {
        Self {
            n,
            k,
            neurons,
            s,
            count,
            seed,
            delta: default_delta(),
            time_limit: default_time_limit(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n == 0 || self.k == 0 || self.neurons == 0 {
            return Err(Error::InvalidArgument("n, k and N must be positive".into()));
        }
        if !(0.0..=1.0).contains(&self.s) {
            return Err(Error::InvalidArgument(format!("sparsity {} outside [0, 1]", self.s)));
        }
        if !(self.delta > 0.0) || !(self.time_limit > 0.0) {
            return Err(Error::InvalidArgument("delta and time_limit must be positive".into()));
        }
        Ok(())
    }
}

/// Random network with the given hidden widths and output count.
pub fn random_network(inputs: usize, hidden: &[usize], outputs: usize, s: f64, seed: u64, instance: u64) -> Network {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(instance);
    let draw = |rng: &mut ChaCha8Rng| {
        if rng.gen::<f64>() < s {
            rng.gen_range(-1.0..=1.0)
        } else {
            0.0
        }
    };
    let mut width = inputs;
    let mut layers = Vec::with_capacity(hidden.len() + 1);
    for (i, &rows) in hidden.iter().chain(std::iter::once(&outputs)).enumerate() {
        let weights = (0..rows)
            .map(|_| (0..width).map(|_| draw(&mut rng)).collect())
            .collect();
        let bias = (0..rows).map(|_| draw(&mut rng)).collect();
        layers.push(Layer::new(weights, bias, i < hidden.len()));
        width = rows;
    }
    Network::new(inputs, layers).expect("generated network is well formed")
}

/// Instance `instance` of `cfg`: `k` hidden layers of `N` neurons, one output.
pub fn gen_random_network(cfg: &BenchConfig, instance: u64) -> Network {
    random_network(cfg.n, &vec![cfg.neurons; cfg.k], 1, cfg.s, cfg.seed, instance)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum BenchStatus {
    Tight,
    TimeLimit,
    NodeLimit,
    Error,
}

impl From<SearchStatus> for BenchStatus {
    fn from(s: SearchStatus) -> Self {
        match s {
            SearchStatus::Tight => BenchStatus::Tight,
            SearchStatus::TimeLimit => BenchStatus::TimeLimit,
            SearchStatus::NodeLimit => BenchStatus::NodeLimit,
        }
    }
}

/// One CSV line.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenchRecord {
    pub config_id: usize,
    pub n: usize,
    pub k: usize,
    #[serde(rename = "N")]
    pub neurons: usize,
    pub s: f64,
    pub instance: u64,
    pub status: BenchStatus,
    pub lower: f64,
    pub upper: f64,
    pub seconds: f64,
    pub rounds: usize,
    pub milp_nodes: u64,
}

fn run_instance(config_id: usize, cfg: &BenchConfig, instance: u64, lp: &dyn LpSolver) -> BenchRecord {
    let net = gen_random_network(cfg, instance);
    let cube = Polyhedron::hypercube(cfg.n, -1.0, 1.0);
    let params = SearchParams {
        time_limit: Some(Duration::from_secs_f64(cfg.time_limit)),
        seed: cfg.seed ^ instance,
        ..SearchParams::with_delta(cfg.delta)
    };
    let started = Instant::now();
    let result = estimate_range(&net, &cube, 0, &params, lp);
    let seconds = started.elapsed().as_secs_f64();
    let mut record = BenchRecord {
        config_id,
        n: cfg.n,
        k: cfg.k,
        neurons: cfg.neurons,
        s: cfg.s,
        instance,
        status: BenchStatus::Error,
        lower: f64::NAN,
        upper: f64::NAN,
        seconds,
        rounds: 0,
        milp_nodes: 0,
    };
    match result {
        Ok(r) => {
            record.status = r.status.into();
            record.lower = r.lower;
            record.upper = r.upper;
            record.rounds = r.upper_search.rounds() + r.lower_search.rounds();
            record.milp_nodes = r.milp_stats().nodes;
        }
        Err(e) => log::warn!("config {config_id} instance {instance}: {e}"),
    }
    record
}

/// Runs every instance of every config over `[-1, 1]^n`. Instances of one
/// config run concurrently; `sink` sees records in (config, instance) order
/// as each config completes. Per-instance failures become `Error` records.
pub fn run_benchmark(
    cfgs: &[BenchConfig],
    lp: &dyn LpSolver,
    mut sink: impl FnMut(&BenchRecord),
) -> Result<Vec<BenchRecord>> {
    for cfg in cfgs {
        cfg.validate()?;
    }
    let mut all = Vec::new();
    for (id, cfg) in cfgs.iter().enumerate() {
        let records: Vec<BenchRecord> = (0..cfg.count as u64)
            .into_par_iter()
            .map(|i| run_instance(id, cfg, i, lp))
            .collect();
        for r in &records {
            sink(r);
        }
        all.extend(records);
    }
    Ok(all)
}

pub const CSV_HEADER: &str = "config_id,n,k,N,s,instance,status,lower,upper,seconds,rounds,milp_nodes";

/// Writes records as CSV with [`CSV_HEADER`].
pub fn write_csv<W: Write>(records: &[BenchRecord], sink: W) -> std::io::Result<()> {
    let mut w = csv::Writer::from_writer(sink);
    if records.is_empty() {
        w.write_record(CSV_HEADER.split(','))?;
    }
    for r in records {
        w.serialize(r)?;
    }
    w.flush()
}

/// Per-config summary in the shape of the classic results table.
#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub config: BenchConfig,
    pub solved: usize,
    pub time: (f64, f64, f64),
    pub rounds: (f64, usize, usize),
}

pub fn summarize(cfgs: &[BenchConfig], records: &[BenchRecord]) -> Vec<SummaryRow> {
    cfgs.iter()
        .enumerate()
        .map(|(id, cfg)| {
            let solved: Vec<&BenchRecord> = records
                .iter()
                .filter(|r| r.config_id == id && r.status == BenchStatus::Tight)
                .collect();
            let count = solved.len();
            let (mut t_sum, mut t_min, mut t_max) = (0.0, f64::INFINITY, 0.0f64);
            let (mut r_sum, mut r_min, mut r_max) = (0usize, usize::MAX, 0usize);
            for r in &solved {
                t_sum += r.seconds;
                t_min = t_min.min(r.seconds);
                t_max = t_max.max(r.seconds);
                r_sum += r.rounds;
                r_min = r_min.min(r.rounds);
                r_max = r_max.max(r.rounds);
            }
            let avg = |s: f64| if count == 0 { f64::NAN } else { s / count as f64 };
            SummaryRow {
                config: cfg.clone(),
                solved: count,
                time: (avg(t_sum), if count == 0 { f64::NAN } else { t_min }, t_max),
                rounds: (avg(r_sum as f64), if count == 0 { 0 } else { r_min }, r_max),
            }
        })
        .collect()
}

/// Aligned text table: n k N s | Nc | T avg/min/max | rounds avg/min/max.
pub fn format_summary(rows: &[SummaryRow]) -> String {
    let mut s = String::new();
    let _ = writeln!(
        s,
        "{:>3} {:>2} {:>4} {:>5} | {:>8} | {:>9} {:>9} {:>9} | {:>7} {:>5} {:>5}",
        "n", "k", "N", "s", "Nc", "T avg", "T min", "T max", "it avg", "min", "max"
    );
    for r in rows {
        let c = &r.config;
        let _ = writeln!(
            s,
            "{:>3} {:>2} {:>4} {:>5} | {:>8} | {:>9.3} {:>9.3} {:>9.3} | {:>7.1} {:>5} {:>5}",
            c.n,
            c.k,
            c.neurons,
            c.s,
            format!("{}/{}", r.solved, c.count),
            r.time.0,
            r.time.1,
            r.time.2,
            r.rounds.0,
            r.rounds.1,
            r.rounds.2
        );
    }
    s
}
