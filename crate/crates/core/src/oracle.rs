//! Exact and sampled reference ranges for small networks.
//!
//! [`enumerate_cells`] splits the input set into activation-pattern cells,
//! neuron by neuron, dropping any partial pattern whose closed region misses
//! the input set. On each cell the network is one affine map, so the exact
//! range is a max/min over one LP per cell. The work is exponential in the
//! number of hidden neurons and capped at [`MAX_ORACLE_NEURONS`].

use rayon::prelude::*;

use crate::error::{check_dim, Error, Result};
use crate::lp::{LpSolver, Sense};
use crate::milp::{preactivation_intervals, solve_feasibility, Feasibility, NetworkEncoder, SolveLimits, ThresholdSense};
use crate::network::{ActivationPattern, AffineMap, Network};
use crate::polytope::Polyhedron;

pub const MAX_ORACLE_NEURONS: usize = 20;

/// A feasible activation pattern with its input region and affine maps.
#[derive(Debug, Clone, PartialEq)]
pub struct PatternCell {
    pub pattern: ActivationPattern,
    /// Input-space rows (`≥ 0` active, strict `< 0` inactive), without the input set.
    pub region: Polyhedron,
    /// One map per network output.
    pub maps: Vec<AffineMap>,
    pub feasible: bool,
}

impl PatternCell {
    /// Debug text: pattern bits, then one line per output map.
    pub fn describe(&self) -> String {
        let bits: String = self
            .pattern
            .layers()
            .iter()
            .map(|l| l.iter().map(|&a| if a { '1' } else { '0' }).collect::<String>())
            .collect::<Vec<_>>()
            .join("|");
        let mut s = format!("cell {bits} ({} rows)\n", self.region.num_rows());
        for (i, m) in self.maps.iter().enumerate() {
            s.push_str(&format!("  out{i} = {:?} · x + {}\n", m.coeffs, m.offset));
        }
        s
    }
}

fn closed_feasible(region: &Polyhedron, input_set: &Polyhedron, lp: &dyn LpSolver) -> Result<bool> {
    let prog = region.intersect(input_set)?.to_lp(0);
    Ok(lp.feasible_point(&prog)?.is_optimal())
}

/// All activation patterns whose closed region meets the closed input set.
pub fn enumerate_cells(net: &Network, input_set: &Polyhedron, lp: &dyn LpSolver) -> Result<Vec<PatternCell>> {
    check_dim("input set", net.input_dim(), input_set.dim())?;
    let hidden = net.hidden_count();
    if hidden > MAX_ORACLE_NEURONS {
        return Err(Error::TooLarge {
            hidden,
            limit: MAX_ORACLE_NEURONS,
        });
    }
    let closed = input_set.closure();
    if !closed_feasible(&Polyhedron::whole_space(net.input_dim()), &closed, lp)? {
        return Ok(Vec::new());
    }
    let widths = net.hidden_widths();
    let nest = |bits: &[bool]| -> Vec<Vec<bool>> {
        let mut out = Vec::new();
        let mut rest = bits;
        for &w in &widths {
            if rest.is_empty() {
                break;
            }
            let take = w.min(rest.len());
            out.push(rest[..take].to_vec());
            rest = &rest[take..];
        }
        out
    };
    let mut cells = Vec::new();
    // Depth-first over flat on/off assignments in layer order.
    let mut stack: Vec<(Vec<bool>, Polyhedron)> = vec![(Vec::new(), Polyhedron::whole_space(net.input_dim()))];
    while let Some((bits, region)) = stack.pop() {
        if bits.len() == hidden {
            let pattern = ActivationPattern(nest(&bits));
            let maps = (0..net.output_dim())
                .map(|i| net.affine_restriction(&pattern, i))
                .collect::<Result<Vec<_>>>()?;
            cells.push(PatternCell {
                pattern,
                region,
                maps,
                feasible: true,
            });
            continue;
        }
        let (mut layer, mut neuron) = (0, bits.len());
        while neuron >= widths[layer] {
            neuron -= widths[layer];
            layer += 1;
        }
        let complete = nest(&bits[..bits.len() - neuron]);
        let maps = net.preactivation_maps(&complete)?;
        let pre = &maps[layer][neuron];
        // Inactive pushed first so the active branch is explored first.
        for active in [false, true] {
            let mut r = region.clone();
            if active {
                r.push(pre.coeffs.iter().map(|c| -c).collect(), pre.offset, false);
            } else {
                r.push(pre.coeffs.clone(), -pre.offset, true);
            }
            if closed_feasible(&r.closure(), &closed, lp)? {
                let mut child = bits.clone();
                child.push(active);
                stack.push((child, r));
            }
        }
    }
    cells.sort_by(|a, b| a.pattern.cmp(&b.pattern));
    Ok(cells)
}

/// Exact extrema of one output over the input set.
#[derive(Debug, Clone, PartialEq)]
pub struct ExactRange {
    pub lower: f64,
    pub upper: f64,
    pub arg_lower: Vec<f64>,
    pub arg_upper: Vec<f64>,
    pub cells: usize,
}

/// Exact range of output `output` by one LP maximization and minimization per cell.
pub fn exact_range(net: &Network, input_set: &Polyhedron, output: usize, lp: &dyn LpSolver) -> Result<ExactRange> {
    if output >= net.output_dim() {
        return Err(Error::InvalidArgument(format!("output index {output} out of range")));
    }
    let cells = enumerate_cells(net, input_set, lp)?;
    if cells.is_empty() {
        return Err(Error::InfeasibleSet);
    }
    let closed = input_set.closure();
    let extrema = cells
        .par_iter()
        .map(|cell| -> Result<[(f64, Vec<f64>); 2]> {
            let map = &cell.maps[output];
            let base = cell.region.closure().intersect(&closed)?.to_lp(0);
            let mut res = [(0.0, Vec::new()), (0.0, Vec::new())];
            for (slot, sense) in res.iter_mut().zip([Sense::Minimize, Sense::Maximize]) {
                let out = lp.solve(&base.clone().with_objective(sense, map.coeffs.clone()))?;
                if !out.is_optimal() {
                    return Err(Error::NumericFailure(format!("cell LP returned {:?}", out.status)));
                }
                *slot = (map.eval(&out.point), out.point);
            }
            Ok(res)
        })
        .collect::<Result<Vec<_>>>()?;
    let mut lower = (f64::INFINITY, Vec::new());
    let mut upper = (f64::NEG_INFINITY, Vec::new());
    for [lo, hi] in extrema {
        if lo.0 < lower.0 {
            lower = lo;
        }
        if hi.0 > upper.0 {
            upper = hi;
        }
    }
    Ok(ExactRange {
        lower: lower.0,
        upper: upper.0,
        arg_lower: lower.1,
        arg_upper: upper.1,
        cells: cells.len(),
    })
}

/// Min and max of output `output` over an axis grid of the input set's
/// bounding box, keeping only grid points inside the set. An inner
/// approximation of the true range.
pub fn grid_range(
    net: &Network,
    input_set: &Polyhedron,
    points_per_dim: usize,
    output: usize,
    lp: &dyn LpSolver,
) -> Result<(f64, f64)> {
    let d = net.input_dim();
    check_dim("input set", d, input_set.dim())?;
    if d > 4 {
        return Err(Error::InvalidArgument(format!("grid oracle supports at most 4 inputs, got {d}")));
    }
    if points_per_dim < 2 {
        return Err(Error::InvalidArgument("grid needs at least 2 points per dimension".into()));
    }
    let bx = input_set.closure().bounding_box(lp)?;
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    let total = points_per_dim.pow(d as u32);
    let mut x = vec![0.0; d];
    for idx in 0..total {
        let mut rem = idx;
        for (j, v) in x.iter_mut().enumerate() {
            let k = rem % points_per_dim;
            rem /= points_per_dim;
            let t = k as f64 / (points_per_dim - 1) as f64;
            *v = bx.lo[j] + t * (bx.hi[j] - bx.lo[j]);
        }
        if !input_set.contains(&x, 0.0)? {
            continue;
        }
        let y = net.eval(&x, output)?;
        lo = lo.min(y);
        hi = hi.max(y);
    }
    if lo > hi {
        return Err(Error::EmptyGrid);
    }
    Ok((lo, hi))
}

/// Interval-arithmetic bounds on a single-output network over a box.
pub fn output_interval(net: &Network, bx: &crate::polytope::Box) -> (f64, f64) {
    let last = preactivation_intervals(net, bx).pop();
    let (lo, hi): (Vec<f64>, Vec<f64>) = match last {
        Some(iv) => iv.iter().map(|&(l, h)| (l.max(0.0), h.max(0.0))).unzip(),
        None => (bx.lo.clone(), bx.hi.clone()),
    };
    let out = net.output_layer();
    let (mut l, mut h) = (out.bias[0], out.bias[0]);
    for ((&w, zl), zh) in out.weights[0].iter().zip(&lo).zip(&hi) {
        if w >= 0.0 {
            l += w * zl;
            h += w * zh;
        } else {
            l += w * zh;
            h += w * zl;
        }
    }
    (l, h)
}

/// Range of a single-output network by bisecting MILP feasibility queries
/// until each bracket is at most `delta` wide. Returns `(ℓ, u)` with
/// `ℓ* − δ ≤ ℓ ≤ ℓ*` and `u* ≤ u ≤ u* + δ`.
pub fn monolithic_milp_range(
    net: &Network,
    input_set: &Polyhedron,
    delta: f64,
    limits: SolveLimits,
    lp: &dyn LpSolver,
) -> Result<(f64, f64)> {
    let hidden = net.hidden_count();
    if hidden > MAX_ORACLE_NEURONS {
        return Err(Error::TooLarge {
            hidden,
            limit: MAX_ORACLE_NEURONS,
        });
    }
    if !(delta > 0.0) {
        return Err(Error::InvalidArgument("delta must be positive".into()));
    }
    let encoder = NetworkEncoder::new(net, input_set, lp)?;
    let bx = input_set.closure().bounding_box(lp)?;
    let (ia_lo, ia_hi) = output_interval(net, &bx);
    let center = input_set.closure().interior_sample(lp)?;
    let seen = net.eval(&center, 0)?;

    // Upper: `achieved` is attained by some input, `refuted` is known infeasible.
    let (mut achieved, mut refuted) = (seen, ia_hi + delta);
    while refuted - achieved > delta {
        let mid = 0.5 * (achieved + refuted);
        let v = solve_feasibility(&encoder.encode(mid, ThresholdSense::AtLeast), None, lp, limits)?;
        match v.status {
            Feasibility::Feasible { value, .. } => achieved = value.max(mid),
            Feasibility::Infeasible => refuted = mid,
        }
    }
    let upper = refuted;

    let (mut achieved, mut refuted) = (seen, ia_lo - delta);
    while achieved - refuted > delta {
        let mid = 0.5 * (achieved + refuted);
        let v = solve_feasibility(&encoder.encode(mid, ThresholdSense::AtMost), None, lp, limits)?;
        match v.status {
            Feasibility::Feasible { value, .. } => achieved = value.min(mid),
            Feasibility::Infeasible => refuted = mid,
        }
    }
    Ok((refuted, upper))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bench::random_network;
    use crate::lp::Simplex;
    use crate::network::fixtures::sr_example;
    use crate::network::Layer;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn unit_square() -> Polyhedron {
        Polyhedron::hypercube(2, 0.0, 1.0)
    }

    #[test]
    fn sr_example_has_four_cells() {
        let cells = enumerate_cells(&sr_example(), &unit_square(), &Simplex).unwrap();
        assert_eq!(cells.len(), 4);
        let on_on = cells
            .iter()
            .find(|c| c.pattern == ActivationPattern(vec![vec![true, true]]))
            .unwrap();
        assert!((on_on.maps[0].coeffs[0] - 0.5).abs() < 1e-15);
        assert!((on_on.maps[0].coeffs[1] - 0.1).abs() < 1e-15);
        assert!(on_on.describe().contains("cell 11"));
    }

    #[test]
    fn sr_exact_range() {
        let r = exact_range(&sr_example(), &unit_square(), 0, &Simplex).unwrap();
        assert!((r.upper - 0.3).abs() < 1e-12);
        assert!((r.arg_upper[0] - 1.0).abs() < 1e-9 && (r.arg_upper[1] - 1.0).abs() < 1e-9);
        assert!(r.lower.abs() < 1e-12);
    }

    #[test]
    fn forced_active_has_one_cell() {
        let net = Network::new(
            2,
            vec![
                Layer::new(vec![vec![1.0, -0.5], vec![0.3, 0.7]], vec![5.0, 4.0], true),
                Layer::new(vec![vec![0.4, -1.1]], vec![0.2], false),
            ],
        )
        .unwrap();
        let cells = enumerate_cells(&net, &unit_square(), &Simplex).unwrap();
        assert_eq!(cells.len(), 1);
        let r = exact_range(&net, &unit_square(), 0, &Simplex).unwrap();
        assert!((r.upper - (0.07 - 2.2)).abs() < 1e-12);
        assert!((r.lower - (-0.97 - 2.2)).abs() < 1e-12);
    }

    #[test]
    fn cell_maps_match_forward_at_centers() {
        let p = Polyhedron::hypercube(2, -1.0, 1.0);
        for inst in 0..10 {
            let net = random_network(2, &[3], 1, 1.0, 12, inst);
            for cell in enumerate_cells(&net, &p, &Simplex).unwrap() {
                let region = cell.region.closure().intersect(&p).unwrap();
                if let Ok((c, r)) = region.chebyshev_ball(&Simplex) {
                    if r > 1e-9 {
                        assert_eq!(net.activation_pattern(&c).unwrap(), cell.pattern);
                        assert!((cell.maps[0].eval(&c) - net.eval(&c, 0).unwrap()).abs() < 1e-9);
                    }
                }
            }
        }
    }

    #[test]
    fn cells_cover_the_input_set() {
        let p = Polyhedron::hypercube(2, -1.0, 1.0);
        let net = random_network(2, &[4, 3], 1, 1.0, 5, 0);
        let cells = enumerate_cells(&net, &p, &Simplex).unwrap();
        assert!(cells.len() <= 1 << 7);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..10_000 {
            let x = [rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)];
            let owners: Vec<&PatternCell> = cells.iter().filter(|c| c.region.contains(&x, 0.0).unwrap()).collect();
            assert_eq!(owners.len(), 1);
            assert_eq!(owners[0].pattern, net.activation_pattern(&x).unwrap());
        }
    }

    #[test]
    fn too_many_neurons() {
        let net = random_network(2, &[11, 10], 1, 1.0, 1, 0);
        assert!(matches!(
            enumerate_cells(&net, &unit_square(), &Simplex),
            Err(Error::TooLarge { hidden: 21, limit: 20 })
        ));
    }

    #[test]
    fn grid_is_inner_approximation() {
        let (lo, hi) = grid_range(&sr_example(), &unit_square(), 101, 0, &Simplex).unwrap();
        assert!(hi <= 0.3 + 1e-12 && hi >= 0.3 - 0.01);
        assert!(lo >= -1e-12);
        let p = Polyhedron::hypercube(2, -1.0, 1.0);
        for inst in 0..10 {
            let net = random_network(2, &[4, 4], 1, 0.7, 44, inst);
            let exact = exact_range(&net, &p, 0, &Simplex).unwrap();
            let (gl, gh) = grid_range(&net, &p, 41, 0, &Simplex).unwrap();
            assert!(exact.lower <= gl + 1e-12 && gh <= exact.upper + 1e-12);
        }
    }

    #[test]
    fn grid_of_constant_and_errors() {
        let net = Network::new(
            2,
            vec![
                Layer::new(vec![vec![0.0, 0.0]], vec![1.0], true),
                Layer::new(vec![vec![0.0]], vec![4.5], false),
            ],
        )
        .unwrap();
        assert_eq!(grid_range(&net, &unit_square(), 5, 0, &Simplex).unwrap(), (4.5, 4.5));
        // Diamond |x − 0.5| + |y − 0.5| ≤ 0.1: a 2×2 grid only hits its box corners.
        let mut diamond = Polyhedron::whole_space(2);
        for (a, b) in [(1.0, 1.0), (1.0, -1.0), (-1.0, 1.0), (-1.0, -1.0)] {
            diamond.push(vec![a, b], 0.1 + 0.5 * (a + b), false);
        }
        assert_eq!(grid_range(&net, &diamond, 2, 0, &Simplex), Err(Error::EmptyGrid));
    }

    #[test]
    fn monolithic_matches_exact() {
        let delta = 1e-3;
        let (lo, hi) = monolithic_milp_range(&sr_example(), &unit_square(), delta, SolveLimits::default(), &Simplex).unwrap();
        assert!(hi >= 0.3 - 1e-9 && hi <= 0.3 + delta + 1e-9, "{hi}");
        assert!(lo <= 1e-9 && lo >= -delta - 1e-9, "{lo}");
        let p = Polyhedron::hypercube(2, -1.0, 1.0);
        for inst in 0..5 {
            let net = random_network(2, &[4, 3], 1, 1.0, 8, inst);
            let exact = exact_range(&net, &p, 0, &Simplex).unwrap();
            let (lo, hi) = monolithic_milp_range(&net, &p, delta, SolveLimits::default(), &Simplex).unwrap();
            assert!(hi >= exact.upper - 1e-6 && hi <= exact.upper + delta + 1e-6);
            assert!(lo <= exact.lower + 1e-6 && lo >= exact.lower - delta - 1e-6);
        }
    }
}
