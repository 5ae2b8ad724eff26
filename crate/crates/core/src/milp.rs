//! Big-M MILP encoding of a ReLU network and a depth-first branch-and-bound
//! feasibility solver over the activation binaries.
//!
//! For hidden neuron `z = max(0, a)` with `a = w·z_prev + b` the encoding
//! adds a binary `t` and the rows
//!
//! ```text
//! z ≥ a,   z ≤ a + M t,   z ≥ 0,   z ≤ M (1 − t)
//! ```
//!
//! so `t = 0` selects the affine branch and `t = 1` the zero branch.

use std::fmt::Write as _;
use std::ops::Range;
use std::time::{Duration, Instant};

use log::debug;

use crate::error::{Error, Result};
use crate::lp::{LinearProgram, LpSolver, LpStatus, Relation};
use crate::network::Network;
use crate::polytope::{Box, Polyhedron};

pub const INTEGRALITY_TOL: f64 = 1e-6;
pub const DEFAULT_NODE_LIMIT: u64 = 1_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ThresholdSense {
    /// `F(x) ≥ threshold`.
    AtLeast,
    /// `F(x) ≤ threshold`.
    AtMost,
}

/// Per hidden layer, per neuron big-M constants from interval arithmetic over
/// `input_box`, padded by 5% and floored at 1.
pub fn estimate_big_m(net: &Network, input_box: &Box) -> Vec<Vec<f64>> {
    preactivation_intervals(net, input_box)
        .into_iter()
        .map(|layer| {
            layer
                .into_iter()
                .map(|(lo, hi)| (1.05 * lo.abs().max(hi.abs())).max(1.0))
                .collect()
        })
        .collect()
}

/// Interval bounds on every hidden pre-activation over `input_box`.
pub fn preactivation_intervals(net: &Network, input_box: &Box) -> Vec<Vec<(f64, f64)>> {
    let mut lo = input_box.lo.clone();
    let mut hi = input_box.hi.clone();
    let mut out = Vec::new();
    for layer in net.hidden_layers() {
        let intervals: Vec<(f64, f64)> = layer
            .weights
            .iter()
            .zip(&layer.bias)
            .map(|(row, &b)| {
                let (mut l, mut h) = (b, b);
                for ((&w, &zl), &zh) in row.iter().zip(&lo).zip(&hi) {
                    if w >= 0.0 {
                        l += w * zl;
                        h += w * zh;
                    } else {
                        l += w * zh;
                        h += w * zl;
                    }
                }
                (l, h)
            })
            .collect();
        lo = intervals.iter().map(|&(l, _)| l.max(0.0)).collect();
        hi = intervals.iter().map(|&(_, h)| h.max(0.0)).collect();
        out.push(intervals);
    }
    out
}

/// A feasibility MILP: an LP relaxation plus the set of 0/1 variables.
#[derive(Debug, Clone)]
pub struct MilpProblem {
    relaxation: LinearProgram,
    binaries: Vec<usize>,
    inputs: Range<usize>,
    output: Option<usize>,
    big_m: Vec<Vec<f64>>,
    network: Option<Network>,
    threshold: Option<(f64, ThresholdSense)>,
}

impl MilpProblem {
    /// A generic problem; every variable in `binaries` must be restricted
    /// to `{0, 1}`. Bounds of those variables are set to `[0, 1]`.
    pub fn from_parts(mut relaxation: LinearProgram, binaries: Vec<usize>, inputs: Range<usize>) -> Self {
        for &b in &binaries {
            relaxation.set_bounds(b, 0.0, 1.0);
        }
        Self {
            relaxation,
            binaries,
            inputs,
            output: None,
            big_m: Vec::new(),
            network: None,
            threshold: None,
        }
    }

    pub fn relaxation(&self) -> &LinearProgram {
        &self.relaxation
    }

    pub fn binaries(&self) -> &[usize] {
        &self.binaries
    }

    pub fn input_vars(&self) -> Range<usize> {
        self.inputs.clone()
    }

    pub fn output_var(&self) -> Option<usize> {
        self.output
    }

    pub fn big_m(&self) -> &[Vec<f64>] {
        &self.big_m
    }

    pub fn threshold(&self) -> Option<(f64, ThresholdSense)> {
        self.threshold
    }

    /// LP-format-like text dump for cross-checking with external solvers.
    pub fn to_lp_format(&self) -> String {
        let lp = &self.relaxation;
        let mut s = String::from("feasibility\nsubject to\n");
        for (i, c) in lp.constraints.iter().enumerate() {
            let _ = write!(s, " c{i}:");
            for (j, &a) in c.coeffs.iter().enumerate() {
                if a != 0.0 {
                    let _ = write!(s, " {} {a} v{j}", if a < 0.0 { "-" } else { "+" }.trim_end());
                }
            }
            let rel = match c.rel {
                Relation::Le => "<=",
                Relation::Ge => ">=",
                Relation::Eq => "=",
            };
            let _ = writeln!(s, " {rel} {}", c.rhs);
        }
        s.push_str("bounds\n");
        for (j, &(lo, hi)) in lp.bounds.iter().enumerate() {
            let _ = writeln!(s, " {lo} <= v{j} <= {hi}");
        }
        s.push_str("binary\n");
        for b in &self.binaries {
            let _ = write!(s, " v{b}");
        }
        s.push_str("\nend\n");
        s
    }
}

/// Reusable encoding of one network over one input set; only the output
/// threshold changes between global-search rounds.
#[derive(Debug, Clone)]
pub struct NetworkEncoder {
    network: Network,
    input_set: Polyhedron,
    big_m: Vec<Vec<f64>>,
}

impl NetworkEncoder {
    pub fn new(net: &Network, input_set: &Polyhedron, lp: &dyn LpSolver) -> Result<Self> {
        if net.output_dim() != 1 {
            return Err(Error::InvalidArgument(format!(
                "MILP encoding needs a single-output network, got {} outputs",
                net.output_dim()
            )));
        }
        crate::error::check_dim("input set", net.input_dim(), input_set.dim())?;
        let bx = input_set.closure().bounding_box(lp)?;
        Ok(Self {
            network: net.clone(),
            input_set: input_set.closure(),
            big_m: estimate_big_m(net, &bx),
        })
    }

    pub fn big_m(&self) -> &[Vec<f64>] {
        &self.big_m
    }

    pub fn encode(&self, threshold: f64, sense: ThresholdSense) -> MilpProblem {
        let net = &self.network;
        let n = net.input_dim();
        let h = net.hidden_count();
        let nvars = n + 2 * h + 1;
        let z0 = n;
        let t0 = n + h;
        let y = n + 2 * h;
        let mut lp = LinearProgram::new(nvars);
        for (a, b, _) in self.input_set.rows() {
            let mut row = a.to_vec();
            row.resize(nvars, 0.0);
            lp.add_le(row, b);
        }
        let mut binaries = Vec::with_capacity(h);
        let mut prev: Range<usize> = 0..n;
        let mut neuron = 0;
        for (layer, ms) in net.hidden_layers().iter().zip(&self.big_m) {
            let start = z0 + neuron;
            for ((w_row, &b), &m) in layer.weights.iter().zip(&layer.bias).zip(ms) {
                let z = z0 + neuron;
                let t = t0 + neuron;
                let mut pre = vec![0.0; nvars];
                for (v, &w) in prev.clone().zip(w_row) {
                    pre[v] = -w;
                }
                // z − w·prev ≥ b
                let mut r = pre.clone();
                r[z] = 1.0;
                lp.add_ge(r.clone(), b);
                // z − w·prev − M t ≤ b
                r[t] = -m;
                lp.add_le(r, b);
                // z ≥ 0
                let mut r = vec![0.0; nvars];
                r[z] = 1.0;
                lp.add_ge(r.clone(), 0.0);
                // z + M t ≤ M
                r[t] = m;
                lp.add_le(r, m);
                lp.set_bounds(t, 0.0, 1.0);
                binaries.push(t);
                neuron += 1;
            }
            prev = start..z0 + neuron;
        }
        let out = net.output_layer();
        let mut r = vec![0.0; nvars];
        for (v, &w) in prev.zip(&out.weights[0]) {
            r[v] = -w;
        }
        r[y] = 1.0;
        lp.add_eq(r, out.bias[0]);
        let mut r = vec![0.0; nvars];
        r[y] = 1.0;
        match sense {
            ThresholdSense::AtLeast => lp.add_ge(r, threshold),
            ThresholdSense::AtMost => lp.add_le(r, threshold),
        }
        MilpProblem {
            relaxation: lp,
            binaries,
            inputs: 0..n,
            output: Some(y),
            big_m: self.big_m.clone(),
            network: Some(net.clone()),
            threshold: Some((threshold, sense)),
        }
    }
}

/// Encodes `∃x ∈ closure(P): F(x) ≥ threshold` (or `≤`) for a single-output network.
pub fn encode_network(
    net: &Network,
    input_set: &Polyhedron,
    threshold: f64,
    sense: ThresholdSense,
    lp: &dyn LpSolver,
) -> Result<MilpProblem> {
    Ok(NetworkEncoder::new(net, input_set, lp)?.encode(threshold, sense))
}

#[derive(Debug, Clone, Copy)]
pub struct SolveLimits {
    pub node_limit: u64,
    pub deadline: Option<Instant>,
}

impl Default for SolveLimits {
    fn default() -> Self {
        Self {
            node_limit: DEFAULT_NODE_LIMIT,
            deadline: None,
        }
    }
}

impl SolveLimits {
    pub fn with_time_limit(mut self, limit: Duration) -> Self {
        self.deadline = Some(Instant::now() + limit);
        self
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct MilpStats {
    pub nodes: u64,
    pub lp_solves: u64,
    pub seconds: f64,
}

impl MilpStats {
    pub fn absorb(&mut self, other: &MilpStats) {
        self.nodes += other.nodes;
        self.lp_solves += other.lp_solves;
        self.seconds += other.seconds;
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Feasibility {
    Feasible {
        /// Full variable vector with integral binaries.
        solution: Vec<f64>,
        /// The input part of `solution`.
        input: Vec<f64>,
        /// Network output at `input` (or the output variable for generic problems).
        value: f64,
    },
    Infeasible,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeasibilityVerdict {
    pub status: Feasibility,
    pub stats: MilpStats,
}

impl FeasibilityVerdict {
    pub fn is_feasible(&self) -> bool {
        matches!(self.status, Feasibility::Feasible { .. })
    }
}

struct Search<'a> {
    problem: &'a MilpProblem,
    lp: &'a dyn LpSolver,
    limits: SolveLimits,
    stats: MilpStats,
}

impl Search<'_> {
    fn solve_with(&mut self, fixed: &[Option<bool>]) -> Result<Option<Vec<f64>>> {
        let mut prog = self.problem.relaxation.clone();
        for (&b, f) in self.problem.binaries.iter().zip(fixed) {
            if let Some(v) = f {
                let v = if *v { 1.0 } else { 0.0 };
                prog.set_bounds(b, v, v);
            }
        }
        self.stats.lp_solves += 1;
        let out = self.lp.solve(&prog)?;
        Ok(match out.status {
            LpStatus::Optimal => Some(out.point),
            _ => None,
        })
    }

    fn check_limits(&self) -> Result<()> {
        if self.stats.nodes > self.limits.node_limit {
            return Err(Error::NodeLimitExceeded(self.limits.node_limit));
        }
        if let Some(d) = self.limits.deadline {
            if Instant::now() >= d {
                return Err(Error::TimeLimitExceeded);
            }
        }
        Ok(())
    }

    /// Fixes every binary to the given values and re-solves.
    fn verify(&mut self, values: Vec<bool>) -> Result<Option<Feasibility>> {
        let fixed: Vec<Option<bool>> = values.into_iter().map(Some).collect();
        let Some(point) = self.solve_with(&fixed)? else {
            return Ok(None);
        };
        let input = point[self.problem.inputs.clone()].to_vec();
        let value = match (&self.problem.network, self.problem.output) {
            (Some(net), _) => net.eval(&input, 0)?,
            (None, Some(y)) => point[y],
            (None, None) => f64::NAN,
        };
        Ok(Some(Feasibility::Feasible {
            solution: point,
            input,
            value,
        }))
    }

    /// Binary values realizing the network's own activation pattern at `x`
    /// (`t = 1` is the zero branch).
    fn pattern_binaries(&self, x: &[f64]) -> Option<Vec<bool>> {
        let net = self.problem.network.as_ref()?;
        let pattern = net.activation_pattern(x).ok()?;
        Some(pattern.flat().map(|active| !active).collect())
    }

    /// If the network already meets the threshold at `x`, certify it by
    /// fixing the binaries to its activation pattern.
    fn try_point(&mut self, x: &[f64]) -> Result<Option<Feasibility>> {
        let (Some(net), Some((thr, sense))) = (&self.problem.network, self.problem.threshold) else {
            return Ok(None);
        };
        let value = net.eval(x, 0)?;
        let meets = match sense {
            ThresholdSense::AtLeast => value >= thr,
            ThresholdSense::AtMost => value <= thr,
        };
        if !meets {
            return Ok(None);
        }
        match self.pattern_binaries(x) {
            Some(bits) => self.verify(bits),
            None => Ok(None),
        }
    }
}

/// Depth-first branch and bound on the binaries with most-fractional
/// branching. Returns `Infeasible` after a single LP when the root
/// relaxation is infeasible.
pub fn solve_feasibility(
    problem: &MilpProblem,
    incumbent_hint: Option<&[f64]>,
    lp: &dyn LpSolver,
    limits: SolveLimits,
) -> Result<FeasibilityVerdict> {
    let started = Instant::now();
    let mut search = Search {
        problem,
        lp,
        limits,
        stats: MilpStats::default(),
    };
    let status = run_search(&mut search, incumbent_hint);
    search.stats.seconds = started.elapsed().as_secs_f64();
    debug!(
        "milp: {} nodes, {} LPs, {:.3}s",
        search.stats.nodes, search.stats.lp_solves, search.stats.seconds
    );
    Ok(FeasibilityVerdict {
        status: status?,
        stats: search.stats,
    })
}

fn run_search(search: &mut Search<'_>, hint: Option<&[f64]>) -> Result<Feasibility> {
    let nb = search.problem.binaries.len();
    search.stats.nodes = 1;
    let Some(root) = search.solve_with(&vec![None; nb])? else {
        return Ok(Feasibility::Infeasible);
    };
    if let Some(h) = hint {
        if h.len() == search.problem.inputs.len() {
            if let Some(found) = search.try_point(h)? {
                return Ok(found);
            }
        }
    }
    let mut stack: Vec<(Vec<Option<bool>>, Option<Vec<f64>>)> = vec![(vec![None; nb], Some(root))];
    while let Some((fixed, solved)) = stack.pop() {
        let point = match solved {
            Some(p) => p,
            None => {
                search.stats.nodes += 1;
                search.check_limits()?;
                match search.solve_with(&fixed)? {
                    Some(p) => p,
                    None => continue,
                }
            }
        };
        let x = &point[search.problem.inputs.clone()];
        if let Some(found) = search.try_point(x)? {
            return Ok(found);
        }
        let mut branch: Option<(usize, f64)> = None;
        let mut best = INTEGRALITY_TOL;
        for (k, &b) in search.problem.binaries.iter().enumerate() {
            if fixed[k].is_some() {
                continue;
            }
            let v = point[b];
            let frac = v.min(1.0 - v);
            if frac > best {
                best = frac;
                branch = Some((k, v));
            }
        }
        match branch {
            None => {
                let bits = search
                    .problem
                    .binaries
                    .iter()
                    .map(|&b| point[b] > 0.5)
                    .collect();
                if let Some(found) = search.verify(bits)? {
                    return Ok(found);
                }
            }
            Some((k, v)) => {
                let first = v >= 0.5;
                for value in [!first, first] {
                    let mut child = fixed.clone();
                    child[k] = Some(value);
                    stack.push((child, None));
                }
            }
        }
    }
    Ok(Feasibility::Infeasible)
}
