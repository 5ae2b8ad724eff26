//! Dense bounded-variable primal simplex.
//!
//! Every row `a·x {≤,≥,=} b` gets a slack `s` with `a·x + s = b` and a sign
//! restriction on `s`; rows whose slack cannot absorb the starting residual
//! also get an artificial variable. Phase 1 drives the artificials to zero,
//! phase 2 optimizes the real objective. The artificial columns are kept for
//! the whole solve: they carry `B⁻¹`, which gives the duals used for the
//! infeasibility certificate.

use log::trace;

use crate::error::{Error, Result};

pub const FEASIBILITY_TOL: f64 = 1e-9;
pub const OPTIMALITY_TOL: f64 = 1e-9;
const PIVOT_TOL: f64 = 1e-9;
const ITERATION_CAP: u64 = 1_000_000;
const BLAND_AFTER: u32 = 500;
const REFACTOR_EVERY: u32 = 100;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sense {
    Maximize,
    Minimize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Relation {
    Le,
    Ge,
    Eq,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Constraint {
    pub coeffs: Vec<f64>,
    pub rel: Relation,
    pub rhs: f64,
}

impl Constraint {
    pub fn activity(&self, x: &[f64]) -> f64 {
        self.coeffs.iter().zip(x).map(|(a, v)| a * v).sum()
    }

    /// Amount by which `x` violates this row (zero when satisfied).
    pub fn violation(&self, x: &[f64]) -> f64 {
        let act = self.activity(x);
        match self.rel {
            Relation::Le => (act - self.rhs).max(0.0),
            Relation::Ge => (self.rhs - act).max(0.0),
            Relation::Eq => (act - self.rhs).abs(),
        }
    }
}

/// `optimize c·x` subject to linear rows and per-variable bounds.
///
/// Variables are free unless bounded with [`LinearProgram::set_bounds`].
#[derive(Debug, Clone, PartialEq)]
pub struct LinearProgram {
    pub objective: Vec<f64>,
    pub sense: Sense,
    pub constraints: Vec<Constraint>,
    pub bounds: Vec<(f64, f64)>,
}

impl LinearProgram {
    /// A feasibility problem over `num_vars` free variables.
    pub fn new(num_vars: usize) -> Self {
        Self {
            objective: vec![0.0; num_vars],
            sense: Sense::Minimize,
            constraints: Vec::new(),
            bounds: vec![(f64::NEG_INFINITY, f64::INFINITY); num_vars],
        }
    }

    pub fn num_vars(&self) -> usize {
        self.objective.len()
    }

    pub fn with_objective(mut self, sense: Sense, objective: Vec<f64>) -> Self {
        self.sense = sense;
        self.objective = objective;
        self
    }

    pub fn set_bounds(&mut self, var: usize, lo: f64, hi: f64) {
        self.bounds[var] = (lo, hi);
    }

    pub fn add(&mut self, coeffs: Vec<f64>, rel: Relation, rhs: f64) {
        self.constraints.push(Constraint { coeffs, rel, rhs });
    }

    pub fn add_le(&mut self, coeffs: Vec<f64>, rhs: f64) {
        self.add(coeffs, Relation::Le, rhs);
    }

    pub fn add_ge(&mut self, coeffs: Vec<f64>, rhs: f64) {
        self.add(coeffs, Relation::Ge, rhs);
    }

    pub fn add_eq(&mut self, coeffs: Vec<f64>, rhs: f64) {
        self.add(coeffs, Relation::Eq, rhs);
    }

    fn validate(&self) -> Result<()> {
        let n = self.num_vars();
        if self.bounds.len() != n {
            return Err(Error::InvalidArgument(format!(
                "LP has {} bounds for {n} variables",
                self.bounds.len()
            )));
        }
        for (i, c) in self.constraints.iter().enumerate() {
            if c.coeffs.len() != n {
                return Err(Error::DimensionMismatch {
                    what: format!("LP row {i}"),
                    expected: n,
                    found: c.coeffs.len(),
                });
            }
            if !c.rhs.is_finite() || c.coeffs.iter().any(|v| !v.is_finite()) {
                return Err(Error::InvalidArgument(format!("LP row {i} is not finite")));
            }
        }
        if self.objective.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("LP objective is not finite".into()));
        }
        for (j, &(lo, hi)) in self.bounds.iter().enumerate() {
            if lo.is_nan() || hi.is_nan() || lo == f64::INFINITY || hi == f64::NEG_INFINITY {
                return Err(Error::InvalidArgument(format!("bad bounds on variable {j}")));
            }
        }
        Ok(())
    }

    /// Largest row or bound violation of `x`.
    pub fn max_violation(&self, x: &[f64]) -> f64 {
        let rows = self.constraints.iter().map(|c| c.violation(x));
        let bounds = self
            .bounds
            .iter()
            .zip(x)
            .map(|(&(lo, hi), &v)| (lo - v).max(v - hi).max(0.0));
        rows.chain(bounds).fold(0.0, f64::max)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LpStatus {
    Optimal,
    Infeasible,
    Unbounded,
}

/// Proof that a system has no solution.
///
/// Row `i` contributes `row_multipliers[i] · (a_i·x − b_i)`, with the
/// multiplier `≥ 0` for `≤` rows, `≤ 0` for `≥` rows and free for equalities.
/// Bounds contribute `lower[j]·(lo_j − x_j)` and `upper[j]·(x_j − hi_j)` with
/// nonnegative multipliers. The combination cancels every `x_j` and leaves a
/// negative constant, so every feasible `x` would satisfy `0 ≤ (negative)`.
#[derive(Debug, Clone, PartialEq)]
pub struct FarkasCertificate {
    pub row_multipliers: Vec<f64>,
    pub lower_bound_multipliers: Vec<f64>,
    pub upper_bound_multipliers: Vec<f64>,
}

impl FarkasCertificate {
    /// Returns the combined right-hand side (negative for a valid proof) if
    /// the sign conditions hold and the `x` coefficients cancel to `tol`.
    pub fn check(&self, lp: &LinearProgram, tol: f64) -> Option<f64> {
        let n = lp.num_vars();
        let mut combo = vec![0.0; n];
        let mut rhs = 0.0;
        for (c, &y) in lp.constraints.iter().zip(&self.row_multipliers) {
            let ok = match c.rel {
                Relation::Le => y >= 0.0,
                Relation::Ge => y <= 0.0,
                Relation::Eq => true,
            };
            if !ok {
                return None;
            }
            for (acc, a) in combo.iter_mut().zip(&c.coeffs) {
                *acc += y * a;
            }
            rhs += y * c.rhs;
        }
        for j in 0..n {
            let (lo, hi) = lp.bounds[j];
            let (ml, mu) = (self.lower_bound_multipliers[j], self.upper_bound_multipliers[j]);
            if ml < 0.0 || mu < 0.0 {
                return None;
            }
            if ml > 0.0 {
                if !lo.is_finite() {
                    return None;
                }
                combo[j] -= ml;
                rhs -= ml * lo;
            }
            if mu > 0.0 {
                if !hi.is_finite() {
                    return None;
                }
                combo[j] += mu;
                rhs += mu * hi;
            }
        }
        if combo.iter().all(|v| v.abs() <= tol) {
            Some(rhs)
        } else {
            None
        }
    }

    /// True when this is a valid proof of infeasibility at tolerance `tol`.
    pub fn verify(&self, lp: &LinearProgram, tol: f64) -> bool {
        matches!(self.check(lp, tol), Some(r) if r < -tol)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LpOutcome {
    pub status: LpStatus,
    /// Primal point when `Optimal`; empty otherwise.
    pub point: Vec<f64>,
    pub objective_value: f64,
    pub iterations: u64,
    /// Present when `Infeasible`.
    pub certificate: Option<FarkasCertificate>,
}

impl LpOutcome {
    pub fn is_optimal(&self) -> bool {
        self.status == LpStatus::Optimal
    }
}

/// Anything that can solve a [`LinearProgram`]. The built-in implementation
/// is [`Simplex`]; external engines can be plugged in through this trait.
pub trait LpSolver: Send + Sync {
    fn solve(&self, lp: &LinearProgram) -> Result<LpOutcome>;

    /// Any point satisfying the rows and bounds.
    fn feasible_point(&self, lp: &LinearProgram) -> Result<LpOutcome> {
        let mut feas = lp.clone();
        feas.objective = vec![0.0; lp.num_vars()];
        feas.sense = Sense::Minimize;
        self.solve(&feas)
    }
}

/// The built-in dense simplex.
#[derive(Debug, Clone, Copy, Default)]
pub struct Simplex;

impl LpSolver for Simplex {
    fn solve(&self, lp: &LinearProgram) -> Result<LpOutcome> {
        lp.validate()?;
        Tableau::new(lp).run(lp)
    }
}

/// Solve with the built-in simplex.
pub fn solve(lp: &LinearProgram) -> Result<LpOutcome> {
    Simplex.solve(lp)
}

pub fn feasible_point(lp: &LinearProgram) -> Result<LpOutcome> {
    Simplex.feasible_point(lp)
}

enum PhaseEnd {
    Optimal,
    Unbounded,
}

struct Tableau {
    m: usize,
    n: usize,
    /// Original rows `[A | I | D]` plus rhs; used for refactorization.
    orig: Vec<Vec<f64>>,
    rhs: Vec<f64>,
    art_sign: Vec<f64>,
    /// `B⁻¹ [A | I | D]`.
    t: Vec<Vec<f64>>,
    lo: Vec<f64>,
    hi: Vec<f64>,
    x: Vec<f64>,
    basis: Vec<usize>,
    is_basic: Vec<bool>,
    iterations: u64,
    scale: f64,
}

impl Tableau {
    fn new(lp: &LinearProgram) -> Self {
        let n = lp.num_vars();
        let m = lp.constraints.len();
        let nt = n + 2 * m;
        let mut lo = vec![0.0; nt];
        let mut hi = vec![0.0; nt];
        let mut x = vec![0.0; nt];
        for j in 0..n {
            let (l, h) = lp.bounds[j];
            lo[j] = l;
            hi[j] = h;
            x[j] = if l.is_finite() {
                l
            } else if h.is_finite() {
                h
            } else {
                0.0
            };
        }
        let scale = lp
            .constraints
            .iter()
            .map(|c| c.rhs.abs())
            .fold(1.0, f64::max);
        let mut orig = vec![vec![0.0; nt]; m];
        let mut art_sign = vec![1.0; m];
        let mut basis = vec![0; m];
        let mut is_basic = vec![false; nt];
        let mut rhs = vec![0.0; m];
        for (i, c) in lp.constraints.iter().enumerate() {
            let s = n + i;
            let a = n + m + i;
            let (sl, sh) = match c.rel {
                Relation::Le => (0.0, f64::INFINITY),
                Relation::Ge => (f64::NEG_INFINITY, 0.0),
                Relation::Eq => (0.0, 0.0),
            };
            lo[s] = sl;
            hi[s] = sh;
            let r = c.rhs - c.activity(&x[..n]);
            rhs[i] = c.rhs;
            orig[i][..n].copy_from_slice(&c.coeffs);
            orig[i][s] = 1.0;
            if r >= sl - FEASIBILITY_TOL && r <= sh + FEASIBILITY_TOL {
                basis[i] = s;
                x[s] = r;
                hi[a] = 0.0;
            } else {
                art_sign[i] = if r >= 0.0 { 1.0 } else { -1.0 };
                basis[i] = a;
                x[a] = r.abs();
                x[s] = 0.0;
                hi[a] = f64::INFINITY;
            }
            orig[i][a] = art_sign[i];
            is_basic[basis[i]] = true;
        }
        let t = orig
            .iter()
            .zip(&basis)
            .map(|(row, &b)| {
                let d = row[b];
                row.iter().map(|v| v / d).collect()
            })
            .collect();
        Self {
            m,
            n,
            orig,
            rhs,
            art_sign,
            t,
            lo,
            hi,
            x,
            basis,
            is_basic,
            iterations: 0,
            scale,
        }
    }

    fn nt(&self) -> usize {
        self.n + 2 * self.m
    }

    fn run(mut self, lp: &LinearProgram) -> Result<LpOutcome> {
        let (n, m) = (self.n, self.m);
        let mut phase1 = vec![0.0; self.nt()];
        let mut need_phase1 = false;
        for i in 0..m {
            if self.hi[n + m + i] > 0.0 {
                phase1[n + m + i] = 1.0;
                need_phase1 = true;
            }
        }
        if need_phase1 {
            // Minimizing a sum of nonnegative variables is never unbounded.
            self.optimize(&phase1)?;
            self.refactor()?;
            let infeas: f64 = (0..m).map(|i| self.x[n + m + i]).sum();
            trace!("phase 1 residual {infeas:e} after {} iterations", self.iterations);
            if infeas > FEASIBILITY_TOL * self.scale {
                let certificate = self.certificate(&phase1, lp);
                return Ok(LpOutcome {
                    status: LpStatus::Infeasible,
                    point: Vec::new(),
                    objective_value: f64::NAN,
                    iterations: self.iterations,
                    certificate: Some(certificate),
                });
            }
            for i in 0..m {
                let a = n + m + i;
                self.hi[a] = 0.0;
                if !self.is_basic[a] {
                    self.x[a] = 0.0;
                }
            }
        }
        let sign = match lp.sense {
            Sense::Minimize => 1.0,
            Sense::Maximize => -1.0,
        };
        let mut cost = vec![0.0; self.nt()];
        for (c, o) in cost.iter_mut().zip(&lp.objective) {
            *c = sign * o;
        }
        let end = if lp.objective.iter().all(|&c| c == 0.0) {
            PhaseEnd::Optimal
        } else {
            self.optimize(&cost)?
        };
        if let PhaseEnd::Unbounded = end {
            return Ok(LpOutcome {
                status: LpStatus::Unbounded,
                point: Vec::new(),
                objective_value: sign * f64::NEG_INFINITY,
                iterations: self.iterations,
                certificate: None,
            });
        }
        self.refactor()?;
        let mut point = self.x[..n].to_vec();
        for (v, &(l, h)) in point.iter_mut().zip(&lp.bounds) {
            *v = v.clamp(l, h);
        }
        let objective_value = lp.objective.iter().zip(&point).map(|(c, v)| c * v).sum();
        Ok(LpOutcome {
            status: LpStatus::Optimal,
            point,
            objective_value,
            iterations: self.iterations,
            certificate: None,
        })
    }

    fn reduced_costs(&self, cost: &[f64]) -> Vec<f64> {
        let mut d = cost.to_vec();
        for (row, &b) in self.t.iter().zip(&self.basis) {
            let cb = cost[b];
            if cb != 0.0 {
                for (dj, tij) in d.iter_mut().zip(row) {
                    *dj -= cb * tij;
                }
            }
        }
        d
    }

    fn objective(&self, cost: &[f64]) -> f64 {
        cost.iter().zip(&self.x).map(|(c, v)| c * v).sum()
    }

    /// Minimizes `cost` from the current basic solution.
    fn optimize(&mut self, cost: &[f64]) -> Result<PhaseEnd> {
        let nt = self.nt();
        let mut stalled: u32 = 0;
        let mut since_refactor: u32 = 0;
        loop {
            self.iterations += 1;
            if self.iterations > ITERATION_CAP {
                return Err(Error::NumericFailure(format!(
                    "simplex exceeded {ITERATION_CAP} iterations"
                )));
            }
            if since_refactor >= REFACTOR_EVERY {
                self.refactor()?;
                since_refactor = 0;
            }
            let bland = stalled >= BLAND_AFTER;
            let d = self.reduced_costs(cost);

            // Pricing: Dantzig, or smallest eligible index under Bland.
            let mut entering: Option<(usize, f64)> = None;
            let mut best = 0.0;
            for j in 0..nt {
                if self.is_basic[j] {
                    continue;
                }
                let dir = if d[j] < -OPTIMALITY_TOL && self.x[j] < self.hi[j] {
                    1.0
                } else if d[j] > OPTIMALITY_TOL && self.x[j] > self.lo[j] {
                    -1.0
                } else {
                    continue;
                };
                if bland {
                    entering = Some((j, dir));
                    break;
                }
                if d[j].abs() > best {
                    best = d[j].abs();
                    entering = Some((j, dir));
                }
            }
            let Some((j, dir)) = entering else {
                return Ok(PhaseEnd::Optimal);
            };

            // Harris two-pass ratio test.
            let mut theta_max = f64::INFINITY;
            for i in 0..self.m {
                let alpha = dir * self.t[i][j];
                let b = self.basis[i];
                if alpha > PIVOT_TOL && self.lo[b].is_finite() {
                    theta_max = theta_max.min((self.x[b] - self.lo[b] + FEASIBILITY_TOL) / alpha);
                } else if alpha < -PIVOT_TOL && self.hi[b].is_finite() {
                    theta_max = theta_max.min((self.hi[b] - self.x[b] + FEASIBILITY_TOL) / -alpha);
                }
            }
            let flip = self.hi[j] - self.lo[j];
            let mut leave: Option<usize> = None;
            if theta_max.is_finite() {
                let mut best_alpha = 0.0;
                for i in 0..self.m {
                    let alpha = dir * self.t[i][j];
                    let b = self.basis[i];
                    let ratio = if alpha > PIVOT_TOL && self.lo[b].is_finite() {
                        (self.x[b] - self.lo[b]) / alpha
                    } else if alpha < -PIVOT_TOL && self.hi[b].is_finite() {
                        (self.hi[b] - self.x[b]) / -alpha
                    } else {
                        continue;
                    };
                    if ratio > theta_max {
                        continue;
                    }
                    let better = match leave {
                        None => true,
                        Some(r) if bland => b < self.basis[r],
                        Some(_) => alpha.abs() > best_alpha,
                    };
                    if better {
                        best_alpha = alpha.abs();
                        leave = Some(i);
                    }
                }
            }
            let obj_before = self.objective(cost);
            match leave {
                Some(r) if flip > self.step_to(r, j, dir) => {
                    self.pivot(r, j, dir);
                    since_refactor += 1;
                }
                _ if flip.is_finite() => {
                    self.move_nonbasic(j, dir * flip);
                    self.x[j] = if dir > 0.0 { self.hi[j] } else { self.lo[j] };
                }
                _ => return Ok(PhaseEnd::Unbounded),
            }
            if self.objective(cost) < obj_before - 1e-12 * (1.0 + obj_before.abs()) {
                stalled = 0;
            } else {
                stalled = stalled.saturating_add(1);
            }
        }
    }

    fn step_to(&self, r: usize, j: usize, dir: f64) -> f64 {
        let alpha = dir * self.t[r][j];
        let b = self.basis[r];
        let ratio = if alpha > 0.0 {
            (self.x[b] - self.lo[b]) / alpha
        } else {
            (self.hi[b] - self.x[b]) / -alpha
        };
        ratio.max(0.0)
    }

    /// Shifts nonbasic `j` by `delta`, updating basic values.
    fn move_nonbasic(&mut self, j: usize, delta: f64) {
        self.x[j] += delta;
        for i in 0..self.m {
            let b = self.basis[i];
            self.x[b] -= self.t[i][j] * delta;
        }
    }

    fn pivot(&mut self, r: usize, j: usize, dir: f64) {
        let theta = self.step_to(r, j, dir);
        let leaving = self.basis[r];
        let alpha = dir * self.t[r][j];
        self.move_nonbasic(j, dir * theta);
        self.x[leaving] = if alpha > 0.0 { self.lo[leaving] } else { self.hi[leaving] };

        let p = self.t[r][j];
        let pivot_row: Vec<f64> = self.t[r].iter().map(|v| v / p).collect();
        for (i, row) in self.t.iter_mut().enumerate() {
            if i == r {
                continue;
            }
            let f = row[j];
            if f != 0.0 {
                for (v, pr) in row.iter_mut().zip(&pivot_row) {
                    *v -= f * pr;
                }
                row[j] = 0.0;
            }
        }
        self.t[r] = pivot_row;
        self.t[r][j] = 1.0;
        self.is_basic[leaving] = false;
        self.is_basic[j] = true;
        self.basis[r] = j;
    }

    /// Rebuilds `B⁻¹[A|I|D]` and the basic values from the original rows.
    fn refactor(&mut self) -> Result<()> {
        let m = self.m;
        let nt = self.nt();
        let mut work: Vec<Vec<f64>> = self
            .orig
            .iter()
            .zip(&self.rhs)
            .map(|(row, &b)| {
                let mut r = row.clone();
                r.push(b);
                r
            })
            .collect();
        let cols = self.basis.clone();
        let mut assigned = vec![false; m];
        let mut new_basis = vec![0; m];
        for &col in &cols {
            let (mut best_row, mut best) = (usize::MAX, 0.0);
            for (i, row) in work.iter().enumerate() {
                if !assigned[i] && row[col].abs() > best {
                    best = row[col].abs();
                    best_row = i;
                }
            }
            if best < 1e-12 {
                return Err(Error::NumericFailure("singular basis during refactorization".into()));
            }
            let r = best_row;
            assigned[r] = true;
            new_basis[r] = col;
            let p = work[r][col];
            work[r].iter_mut().for_each(|v| *v /= p);
            let pivot_row = work[r].clone();
            for (i, row) in work.iter_mut().enumerate() {
                if i != r {
                    let f = row[col];
                    if f != 0.0 {
                        for (v, pr) in row.iter_mut().zip(&pivot_row) {
                            *v -= f * pr;
                        }
                        row[col] = 0.0;
                    }
                }
            }
        }
        self.basis = new_basis;
        for i in 0..m {
            let mut v = work[i][nt];
            for j in 0..nt {
                if !self.is_basic[j] && self.x[j] != 0.0 {
                    v -= work[i][j] * self.x[j];
                }
            }
            self.x[self.basis[i]] = v;
            work[i].truncate(nt);
        }
        self.t = work;
        Ok(())
    }

    /// Farkas multipliers from the phase-1 duals `y = c_Bᵀ B⁻¹`.
    fn certificate(&self, phase1: &[f64], lp: &LinearProgram) -> FarkasCertificate {
        let (n, m) = (self.n, self.m);
        let mut y = vec![0.0; m];
        for (row, &b) in self.t.iter().zip(&self.basis) {
            let cb = phase1[b];
            if cb != 0.0 {
                for (i, yi) in y.iter_mut().enumerate() {
                    *yi += cb * row[n + m + i] / self.art_sign[i];
                }
            }
        }
        let row_multipliers: Vec<f64> = lp
            .constraints
            .iter()
            .zip(&y)
            .map(|(c, &yi)| {
                let lam = -yi;
                match c.rel {
                    Relation::Le => lam.max(0.0),
                    Relation::Ge => lam.min(0.0),
                    Relation::Eq => lam,
                }
            })
            .collect();
        let mut lower = vec![0.0; n];
        let mut upper = vec![0.0; n];
        for j in 0..n {
            let d: f64 = lp
                .constraints
                .iter()
                .zip(&row_multipliers)
                .map(|(c, l)| l * c.coeffs[j])
                .sum();
            if d > 0.0 && lp.bounds[j].0.is_finite() {
                lower[j] = d;
            } else if d < 0.0 && lp.bounds[j].1.is_finite() {
                upper[j] = -d;
            }
        }
        FarkasCertificate {
            row_multipliers,
            lower_bound_multipliers: lower,
            upper_bound_multipliers: upper,
        }
    }
}
