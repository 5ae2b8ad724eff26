//! Range estimation by alternating local and global search.
//!
//! Local search repeatedly maximizes the network's (locally affine) gradient
//! direction over the closure of the current activation region intersected
//! with the input set; each step is one LP. When it stalls at value `u`, the
//! global search asks the MILP for a point reaching `u + δ`. A witness restarts
//! the local search; infeasibility proves `u + δ` is an upper bound.
//!
//! Lower bounds run the same loop on `−F`, with the MILP encoding the
//! `F(x) ≤ threshold` query directly.

use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{check_dim, Error, Result};
use crate::lp::{LpSolver, Sense};
use crate::milp::{solve_feasibility, Feasibility, MilpStats, NetworkEncoder, SolveLimits, ThresholdSense};
use crate::network::{dot, Network};
use crate::polytope::Polyhedron;

/// Tuning knobs for the search loop.
#[derive(Debug, Clone, PartialEq)]
pub struct SearchParams {
    pub delta: f64,
    pub max_local_iters: usize,
    pub min_improvement: f64,
    pub min_step_norm: f64,
    pub restarts: usize,
    pub time_limit: Option<Duration>,
    pub node_limit: u64,
    /// Seed for the perturbed restart points.
    pub seed: u64,
}

impl Default for SearchParams {
    fn default() -> Self {
        Self::with_delta(1e-3)
    }
}

impl SearchParams {
    pub fn with_delta(delta: f64) -> Self {
        Self {
            delta,
            max_local_iters: 1000,
            min_improvement: delta / 10.0,
            min_step_norm: 1e-9,
            restarts: 4,
            time_limit: None,
            node_limit: crate::milp::DEFAULT_NODE_LIMIT,
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.delta > 0.0 && self.delta.is_finite()) {
            return Err(Error::InvalidArgument(format!("delta must be positive, got {}", self.delta)));
        }
        if self.restarts == 0 {
            return Err(Error::InvalidArgument("restarts must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum SearchStatus {
    Tight,
    TimeLimit,
    NodeLimit,
}

impl SearchStatus {
    fn worst(self, other: SearchStatus) -> SearchStatus {
        match (self, other) {
            (SearchStatus::Tight, s) | (s, SearchStatus::Tight) => s,
            (SearchStatus::TimeLimit, _) | (_, SearchStatus::TimeLimit) => SearchStatus::TimeLimit,
            _ => SearchStatus::NodeLimit,
        }
    }
}

/// Outcome of one bound computation.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundSearch {
    /// The bound: `u` for upper, `ℓ` for lower.
    pub bound: f64,
    /// Best point found; its value is within `δ` of `bound` when tight.
    pub point: Vec<f64>,
    pub value: f64,
    /// Network value at the initial interior sample.
    pub initial_value: f64,
    /// Every global-search threshold, in order, in the search's own direction
    /// (negated for lower bounds, so the sequence always increases).
    pub thresholds: Vec<f64>,
    pub local_steps: usize,
    pub milp: MilpStats,
    pub status: SearchStatus,
}

impl BoundSearch {
    pub fn rounds(&self) -> usize {
        self.thresholds.len()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RangeResult {
    pub output: usize,
    pub lower: f64,
    pub upper: f64,
    pub delta: f64,
    pub arg_lower: Vec<f64>,
    pub arg_upper: Vec<f64>,
    pub upper_search: BoundSearch,
    pub lower_search: BoundSearch,
    pub status: SearchStatus,
}

#[derive(Serialize)]
struct IterationsRecord {
    upper_rounds: usize,
    lower_rounds: usize,
    local_steps: usize,
    milp_nodes: u64,
    lp_solves: u64,
    milp_seconds: f64,
}

#[derive(Serialize)]
struct RangeRecord<'a> {
    output: usize,
    lower: f64,
    upper: f64,
    delta: f64,
    status: SearchStatus,
    iterations: IterationsRecord,
    arg_upper: &'a [f64],
    arg_lower: &'a [f64],
}

impl RangeResult {
    pub fn local_steps(&self) -> usize {
        self.upper_search.local_steps + self.lower_search.local_steps
    }

    pub fn milp_stats(&self) -> MilpStats {
        let mut s = self.upper_search.milp;
        s.absorb(&self.lower_search.milp);
        s
    }

    /// Machine-readable result record.
    pub fn to_json(&self) -> serde_json::Value {
        let milp = self.milp_stats();
        serde_json::to_value(RangeRecord {
            output: self.output,
            lower: self.lower,
            upper: self.upper,
            delta: self.delta,
            status: self.status,
            iterations: IterationsRecord {
                upper_rounds: self.upper_search.rounds(),
                lower_rounds: self.lower_search.rounds(),
                local_steps: self.local_steps(),
                milp_nodes: milp.nodes,
                lp_solves: milp.lp_solves,
                milp_seconds: milp.seconds,
            },
            arg_upper: &self.arg_upper,
            arg_lower: &self.arg_lower,
        })
        .expect("range record serializes")
    }
}

/// Input-space polyhedron of points sharing `x`'s activation pattern.
/// Active neurons give `pre ≥ 0` rows, inactive ones strict `pre < 0` rows.
pub fn locally_active_region(net: &Network, x: &[f64]) -> Result<Polyhedron> {
    let pattern = net.activation_pattern(x)?;
    let maps = net.preactivation_maps(pattern.layers())?;
    let mut region = Polyhedron::whole_space(net.input_dim());
    for (layer_maps, mask) in maps.iter().zip(pattern.layers()) {
        for (map, &active) in layer_maps.iter().zip(mask) {
            if active {
                // c·x + d ≥ 0  ⇔  −c·x ≤ d
                region.push(map.coeffs.iter().map(|c| -c).collect(), map.offset, false);
            } else {
                region.push(map.coeffs.clone(), -map.offset, true);
            }
        }
    }
    Ok(region)
}

fn norm(v: &[f64]) -> f64 {
    dot(v, v).sqrt()
}

/// One LP step: maximize `∇F(x)·y` over the closed activation region of `x`
/// intersected with `input_set`. Never returns a worse point than `x`.
pub fn local_step(net: &Network, x: &[f64], input_set: &Polyhedron, lp: &dyn LpSolver) -> Result<(Vec<f64>, f64)> {
    let value = net.eval(x, 0)?;
    let grad = net.gradient(x, 0)?;
    if grad.iter().all(|&g| g == 0.0) {
        return Ok((x.to_vec(), value));
    }
    let region = locally_active_region(net, x)?.intersect(&input_set.closure())?;
    let prog = region.to_lp(0).with_objective(Sense::Maximize, grad);
    let out = lp.solve(&prog)?;
    if !out.is_optimal() {
        return Ok((x.to_vec(), value));
    }
    let next_value = net.eval(&out.point, 0)?;
    if next_value >= value {
        Ok((out.point, next_value))
    } else {
        Ok((x.to_vec(), value))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LocalResult {
    pub point: Vec<f64>,
    pub value: f64,
    pub steps: usize,
}

/// Projected-gradient ascent by LP steps until the gain or the step length
/// falls below the thresholds in `params`, or the iteration cap is hit.
pub fn local_search(
    net: &Network,
    x0: &[f64],
    input_set: &Polyhedron,
    params: &SearchParams,
    lp: &dyn LpSolver,
) -> Result<LocalResult> {
    check_dim("local search start", net.input_dim(), x0.len())?;
    let mut x = x0.to_vec();
    let mut value = net.eval(&x, 0)?;
    let mut steps = 0;
    while steps < params.max_local_iters {
        let (next, next_value) = local_step(net, &x, input_set, lp)?;
        steps += 1;
        let gain = next_value - value;
        let moved = norm(&next.iter().zip(&x).map(|(a, b)| a - b).collect::<Vec<_>>());
        if next_value > value {
            x = next;
            value = next_value;
        }
        if gain < params.min_improvement || moved < params.min_step_norm {
            break;
        }
    }
    Ok(LocalResult { point: x, value, steps })
}

/// Interior starting points: the Chebyshev center followed by
/// `restarts − 1` random box points projected onto the input set.
pub fn restart_points(input_set: &Polyhedron, params: &SearchParams, lp: &dyn LpSolver) -> Result<Vec<Vec<f64>>> {
    let center = input_set.closure().interior_sample(lp)?;
    let mut points = vec![center];
    if params.restarts > 1 {
        let bx = input_set.closure().bounding_box(lp)?;
        let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
        for _ in 1..params.restarts {
            let target: Vec<f64> = bx
                .lo
                .iter()
                .zip(&bx.hi)
                .map(|(&l, &h)| if h > l { rng.gen_range(l..=h) } else { l })
                .collect();
            points.push(input_set.closure().project_inf(&target, lp)?);
        }
    }
    Ok(points)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Goal {
    Max,
    Min,
}

fn find_bound(
    net: &Network,
    input_set: &Polyhedron,
    params: &SearchParams,
    lp: &dyn LpSolver,
    goal: Goal,
) -> Result<BoundSearch> {
    params.validate()?;
    check_dim("input set", net.input_dim(), input_set.dim())?;
    if net.output_dim() != 1 {
        return Err(Error::InvalidArgument(
            "bound search needs a single-output network; use estimate_range".into(),
        ));
    }
    let started = Instant::now();
    let deadline = params.time_limit.map(|t| started + t);
    // The loop always maximizes `objective = sign · F`.
    let (objective, sign) = match goal {
        Goal::Max => (net.clone(), 1.0),
        Goal::Min => (net.negated(), -1.0),
    };
    let starts = restart_points(input_set, params, lp)?;
    let initial_value = objective.eval(&starts[0], 0)?;
    let locals = starts
        .par_iter()
        .map(|s| local_search(&objective, s, input_set, params, lp))
        .collect::<Result<Vec<_>>>()?;
    let mut local_steps: usize = locals.iter().map(|l| l.steps).sum();
    let best = locals
        .into_iter()
        .reduce(|a, b| if b.value > a.value { b } else { a })
        .expect("at least one restart");
    let (mut x, mut u) = (best.point, best.value);

    let encoder = NetworkEncoder::new(net, input_set, lp)?;
    let mut thresholds: Vec<f64> = Vec::new();
    let mut milp = MilpStats::default();
    let limits = SolveLimits {
        node_limit: params.node_limit,
        deadline,
    };
    let finish = |x: Vec<f64>, u: f64, thresholds: Vec<f64>, local_steps, milp, status| {
        let bound = thresholds.last().copied().unwrap_or(u + params.delta);
        BoundSearch {
            bound: sign * bound,
            value: sign * u,
            point: x,
            initial_value: sign * initial_value,
            thresholds,
            local_steps,
            milp,
            status,
        }
    };
    loop {
        if deadline.is_some_and(|d| Instant::now() >= d) {
            return Ok(finish(x, u, thresholds, local_steps, milp, SearchStatus::TimeLimit));
        }
        // Thresholds increase by at least δ even if a witness lands a hair
        // below the previous one.
        let floor = thresholds.last().map_or(u, |&t| u.max(t));
        let threshold = floor + params.delta;
        thresholds.push(threshold);
        let problem = match goal {
            Goal::Max => encoder.encode(threshold, ThresholdSense::AtLeast),
            Goal::Min => encoder.encode(-threshold, ThresholdSense::AtMost),
        };
        let verdict = match solve_feasibility(&problem, Some(&x), lp, limits) {
            Ok(v) => v,
            Err(Error::NodeLimitExceeded(_)) => {
                return Ok(finish(x, u, thresholds, local_steps, milp, SearchStatus::NodeLimit))
            }
            Err(Error::TimeLimitExceeded) => {
                return Ok(finish(x, u, thresholds, local_steps, milp, SearchStatus::TimeLimit))
            }
            Err(e) => return Err(e),
        };
        milp.absorb(&verdict.stats);
        match verdict.status {
            Feasibility::Infeasible => {
                // Report the point achieving the value the last threshold was built from.
                return Ok(finish(x, u, thresholds, local_steps, milp, SearchStatus::Tight));
            }
            Feasibility::Feasible { input, .. } => {
                let local = local_search(&objective, &input, input_set, params, lp)?;
                local_steps += local.steps;
                x = local.point;
                u = local.value;
            }
        }
    }
}

/// Upper bound `u` with `u* ≤ u ≤ u* + δ` for a single-output network.
pub fn find_upper_bound(net: &Network, input_set: &Polyhedron, params: &SearchParams, lp: &dyn LpSolver) -> Result<BoundSearch> {
    find_bound(net, input_set, params, lp, Goal::Max)
}

/// Lower bound `ℓ` with `ℓ* − δ ≤ ℓ ≤ ℓ*` for a single-output network.
pub fn find_lower_bound(net: &Network, input_set: &Polyhedron, params: &SearchParams, lp: &dyn LpSolver) -> Result<BoundSearch> {
    find_bound(net, input_set, params, lp, Goal::Min)
}

/// Both bounds of output `output_index`, computed concurrently.
pub fn estimate_range(
    net: &Network,
    input_set: &Polyhedron,
    output_index: usize,
    params: &SearchParams,
    lp: &dyn LpSolver,
) -> Result<RangeResult> {
    let single = net.select_output(output_index)?;
    check_dim("input set", net.input_dim(), input_set.dim())?;
    let (upper, lower) = rayon::join(
        || find_upper_bound(&single, input_set, params, lp),
        || find_lower_bound(&single, input_set, params, lp),
    );
    let (upper, lower) = (upper?, lower?);
    Ok(RangeResult {
        output: output_index,
        lower: lower.bound,
        upper: upper.bound,
        delta: params.delta,
        arg_lower: lower.point.clone(),
        arg_upper: upper.point.clone(),
        status: upper.status.worst(lower.status),
        upper_search: upper,
        lower_search: lower,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub enum Certification {
    /// Every input in the set is classified as the label.
    Certified,
    /// An input in the set whose top output is a different label.
    Counterexample(Vec<f64>),
    /// Ranges overlap for these labels and no counterexample was found.
    Undetermined { overlapping: Vec<usize> },
}

/// Index of the largest output, first index on ties.
pub fn argmax(values: &[f64]) -> usize {
    values
        .iter()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |(bi, bv), (i, &v)| if v > bv { (i, v) } else { (bi, bv) })
        .0
}

/// Checks whether `label` is the only possible classification over
/// `input_set`: certified when the label's lower bound exceeds every other
/// output's upper bound; otherwise falls back to [`adversarial_search`].
pub fn certify_label(
    net: &Network,
    input_set: &Polyhedron,
    label: usize,
    params: &SearchParams,
    lp: &dyn LpSolver,
) -> Result<(Certification, Vec<RangeResult>)> {
    let k = net.output_dim();
    if k < 2 {
        return Err(Error::InvalidArgument("certification needs at least two outputs".into()));
    }
    if label >= k {
        return Err(Error::InvalidArgument(format!("label {label} out of range for {k} outputs")));
    }
    let ranges = (0..k)
        .into_par_iter()
        .map(|i| estimate_range(net, input_set, i, params, lp))
        .collect::<Result<Vec<_>>>()?;
    let own = &ranges[label];
    let overlapping: Vec<usize> = ranges
        .iter()
        .filter(|r| r.output != label)
        .filter(|r| {
            own.lower_search.status != SearchStatus::Tight
                || r.upper_search.status != SearchStatus::Tight
                || own.lower <= r.upper
        })
        .map(|r| r.output)
        .collect();
    if overlapping.is_empty() {
        return Ok((Certification::Certified, ranges));
    }
    let verdict = match adversarial_search(net, input_set, label, params, lp)? {
        Some(x) => Certification::Counterexample(x),
        None => Certification::Undetermined { overlapping },
    };
    Ok((verdict, ranges))
}

/// Local search for an input classified differently from `source_label`.
///
/// Ascends the margin `l_k − l_source` of the current best competitor `k`,
/// re-selecting the competitor after every step. Incomplete by design.
pub fn adversarial_search(
    net: &Network,
    input_set: &Polyhedron,
    source_label: usize,
    params: &SearchParams,
    lp: &dyn LpSolver,
) -> Result<Option<Vec<f64>>> {
    let k = net.output_dim();
    if source_label >= k {
        return Err(Error::InvalidArgument(format!(
            "label {source_label} out of range for {k} outputs"
        )));
    }
    if k < 2 {
        return Ok(None);
    }
    let flipped = |x: &[f64]| -> Result<Option<usize>> {
        let out = net.forward(x)?.outputs;
        let best = (0..k)
            .filter(|&i| i != source_label)
            .max_by(|&a, &b| out[a].total_cmp(&out[b]).then(b.cmp(&a)))
            .expect("k >= 2");
        Ok(if out[best] > out[source_label] { None } else { Some(best) })
    };
    for start in restart_points(input_set, params, lp)? {
        let mut x = start;
        let mut competitor = match flipped(&x)? {
            None => return Ok(Some(x)),
            Some(c) => c,
        };
        for _ in 0..params.max_local_iters {
            let margin = net.output_difference(competitor, source_label)?;
            let before = margin.eval(&x, 0)?;
            let (next, after) = local_step(&margin, &x, input_set, lp)?;
            let progressed = after > before + 1e-12;
            x = next;
            match flipped(&x)? {
                None => return Ok(Some(x)),
                Some(c) if c != competitor => competitor = c,
                Some(_) if !progressed => break,
                Some(_) => {}
            }
        }
    }
    Ok(None)
}
