//! Convex polyhedra `{x : A x ≤ b}` with optional strict rows.
//!
//! Strictness only matters for membership tests on activation regions; every
//! LP built from a polyhedron uses its closure.

use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::lp::{LinearProgram, LpSolver, LpStatus, Sense};
use crate::network::dot;

#[derive(Debug, Clone, PartialEq)]
pub struct Polyhedron {
    dim: usize,
    a: Vec<Vec<f64>>,
    b: Vec<f64>,
    strict: Vec<bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Box {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

impl Box {
    pub fn dim(&self) -> usize {
        self.lo.len()
    }

    pub fn contains(&self, x: &[f64], tol: f64) -> bool {
        x.iter()
            .zip(self.lo.iter().zip(&self.hi))
            .all(|(v, (l, h))| *v >= l - tol && *v <= h + tol)
    }
}

impl Polyhedron {
    pub fn new(dim: usize, a: Vec<Vec<f64>>, b: Vec<f64>, strict: Vec<bool>) -> Result<Self> {
        check_dim("polyhedron rhs length", a.len(), b.len())?;
        check_dim("polyhedron strict flags", a.len(), strict.len())?;
        for (i, row) in a.iter().enumerate() {
            check_dim(&format!("polyhedron row {i}"), dim, row.len())?;
        }
        if a.iter().flatten().chain(&b).any(|v| !v.is_finite()) {
            return Err(Error::InvalidPolyhedron("non-finite entries".into()));
        }
        Ok(Self { dim, a, b, strict })
    }

    /// All of `ℝ^dim`.
    pub fn whole_space(dim: usize) -> Self {
        Self {
            dim,
            a: Vec::new(),
            b: Vec::new(),
            strict: Vec::new(),
        }
    }

    /// The box `lo ≤ x ≤ hi` as `2·dim` rows.
    pub fn from_box(lo: &[f64], hi: &[f64]) -> Result<Self> {
        check_dim("box bounds", lo.len(), hi.len())?;
        let d = lo.len();
        let mut p = Self::whole_space(d);
        for j in 0..d {
            if lo[j] > hi[j] {
                return Err(Error::InvalidPolyhedron(format!("box has lo > hi on axis {j}")));
            }
            let mut e = vec![0.0; d];
            e[j] = 1.0;
            p.push(e.clone(), hi[j], false);
            e[j] = -1.0;
            p.push(e, -lo[j], false);
        }
        Ok(p)
    }

    pub fn hypercube(dim: usize, lo: f64, hi: f64) -> Self {
        Self::from_box(&vec![lo; dim], &vec![hi; dim]).expect("valid cube")
    }

    pub fn push(&mut self, row: Vec<f64>, rhs: f64, strict: bool) {
        assert_eq!(row.len(), self.dim, "row length must match dimension");
        self.a.push(row);
        self.b.push(rhs);
        self.strict.push(strict);
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn num_rows(&self) -> usize {
        self.a.len()
    }

    pub fn rows(&self) -> impl Iterator<Item = (&[f64], f64, bool)> {
        self.a
            .iter()
            .zip(&self.b)
            .zip(&self.strict)
            .map(|((a, b), s)| (a.as_slice(), *b, *s))
    }

    pub fn matrix(&self) -> &[Vec<f64>] {
        &self.a
    }

    pub fn rhs(&self) -> &[f64] {
        &self.b
    }

    pub fn strict_flags(&self) -> &[bool] {
        &self.strict
    }

    pub fn contains(&self, x: &[f64], tol: f64) -> Result<bool> {
        check_dim("point", self.dim, x.len())?;
        Ok(self.rows().all(|(a, b, strict)| {
            let act = dot(a, x);
            if strict {
                act < b + tol
            } else {
                act <= b + tol
            }
        }))
    }

    /// `min_i (b_i − A_i·x)`; positive iff `x` is interior to every row.
    pub fn min_slack(&self, x: &[f64]) -> f64 {
        self.rows()
            .map(|(a, b, _)| b - dot(a, x))
            .fold(f64::INFINITY, f64::min)
    }

    pub fn closure(&self) -> Self {
        Self {
            strict: vec![false; self.strict.len()],
            ..self.clone()
        }
    }

    pub fn intersect(&self, other: &Polyhedron) -> Result<Self> {
        check_dim("polyhedron intersection", self.dim, other.dim)?;
        let mut out = self.clone();
        out.a.extend(other.a.iter().cloned());
        out.b.extend(other.b.iter().copied());
        out.strict.extend(other.strict.iter().copied());
        Ok(out)
    }

    /// LP over the closure with variables `x` (plus `extra` trailing free
    /// variables with zero coefficients in the polyhedron rows).
    pub fn to_lp(&self, extra: usize) -> LinearProgram {
        let mut lp = LinearProgram::new(self.dim + extra);
        for (a, b, _) in self.rows() {
            let mut row = a.to_vec();
            row.resize(self.dim + extra, 0.0);
            lp.add_le(row, b);
        }
        lp
    }

    pub fn bounding_box(&self, lp: &dyn LpSolver) -> Result<Box> {
        let d = self.dim;
        let mut lo = vec![0.0; d];
        let mut hi = vec![0.0; d];
        for j in 0..d {
            for (sense, slot) in [(Sense::Minimize, &mut lo), (Sense::Maximize, &mut hi)] {
                let mut obj = vec![0.0; d];
                obj[j] = 1.0;
                let prog = self.to_lp(0).with_objective(sense, obj);
                let out = lp.solve(&prog)?;
                match out.status {
                    LpStatus::Optimal => slot[j] = out.objective_value,
                    LpStatus::Infeasible => return Err(Error::InfeasibleSet),
                    LpStatus::Unbounded => return Err(Error::UnboundedSet),
                }
            }
        }
        Ok(Box { lo, hi })
    }

    /// Center and radius of the largest inscribed ball of the closure.
    pub fn chebyshev_ball(&self, lp: &dyn LpSolver) -> Result<(Vec<f64>, f64)> {
        let d = self.dim;
        let mut prog = LinearProgram::new(d + 1);
        for (a, b, _) in self.rows() {
            let norm = dot(a, a).sqrt();
            let mut row = a.to_vec();
            row.push(norm);
            prog.add_le(row, b);
        }
        prog.set_bounds(d, 0.0, f64::INFINITY);
        let mut obj = vec![0.0; d + 1];
        obj[d] = 1.0;
        let out = lp.solve(&prog.with_objective(Sense::Maximize, obj))?;
        match out.status {
            LpStatus::Optimal => {
                let r = out.point[d];
                Ok((out.point[..d].to_vec(), r))
            }
            LpStatus::Infeasible => Err(Error::InfeasibleSet),
            LpStatus::Unbounded => Err(Error::UnboundedSet),
        }
    }

    /// Chebyshev center; fails with `DegenerateSet` when there is no interior.
    pub fn interior_sample(&self, lp: &dyn LpSolver) -> Result<Vec<f64>> {
        let (center, radius) = self.chebyshev_ball(lp)?;
        if radius <= 1e-12 {
            return Err(Error::DegenerateSet { radius });
        }
        Ok(center)
    }

    /// Point of the closure nearest to `target` in the ∞-norm.
    pub fn project_inf(&self, target: &[f64], lp: &dyn LpSolver) -> Result<Vec<f64>> {
        check_dim("projection target", self.dim, target.len())?;
        let d = self.dim;
        let mut prog = self.to_lp(1);
        for j in 0..d {
            let mut row = vec![0.0; d + 1];
            row[j] = 1.0;
            row[d] = -1.0;
            prog.add_le(row.clone(), target[j]);
            row[j] = -1.0;
            prog.add_le(row, -target[j]);
        }
        let mut obj = vec![0.0; d + 1];
        obj[d] = 1.0;
        let out = lp.solve(&prog.with_objective(Sense::Minimize, obj))?;
        match out.status {
            LpStatus::Optimal => Ok(out.point[..d].to_vec()),
            LpStatus::Infeasible => Err(Error::InfeasibleSet),
            LpStatus::Unbounded => Err(Error::NumericFailure("projection LP unbounded".into())),
        }
    }
}

#[derive(Serialize, Deserialize)]
struct PolyFile {
    #[serde(rename = "A")]
    a: Vec<Vec<f64>>,
    b: Vec<f64>,
    #[serde(default)]
    strict: Option<Vec<bool>>,
}

impl Polyhedron {
    pub fn from_json_str(s: &str) -> Result<Self> {
        let f: PolyFile = serde_json::from_str(s).map_err(|e| Error::Parse {
            context: format!("line {}, column {}", e.line(), e.column()),
            message: e.to_string(),
        })?;
        let dim = f.a.first().map(Vec::len).ok_or_else(|| {
            Error::InvalidPolyhedron("polyhedron file needs at least one row".into())
        })?;
        let strict = f.strict.unwrap_or_else(|| vec![false; f.a.len()]);
        Self::new(dim, f.a, f.b, strict)
    }

    pub fn to_json_string(&self) -> String {
        let f = PolyFile {
            a: self.a.clone(),
            b: self.b.clone(),
            strict: Some(self.strict.clone()),
        };
        serde_json::to_string(&f).expect("polyhedron serializes")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lp::Simplex;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn triangle() -> Polyhedron {
        Polyhedron::new(
            2,
            vec![vec![-1.0, 0.0], vec![0.0, -1.0], vec![1.0, 1.0]],
            vec![0.0, 0.0, 1.0],
            vec![false; 3],
        )
        .unwrap()
    }

    /// `{x − y > 0, x + y − 1 > 0}` written as `A x < b`.
    fn sr3() -> Polyhedron {
        Polyhedron::new(
            2,
            vec![vec![-1.0, 1.0], vec![-1.0, -1.0]],
            vec![0.0, -1.0],
            vec![true, true],
        )
        .unwrap()
    }

    #[test]
    fn contains_cases() {
        let cube = Polyhedron::hypercube(2, -1.0, 1.0);
        assert!(cube.contains(&[0.0, 0.0], 0.0).unwrap());
        assert!(!cube.contains(&[1.0000001, 0.0], 1e-9).unwrap());
        let region = sr3().intersect(&Polyhedron::hypercube(2, 0.0, 1.0)).unwrap();
        assert!(region.contains(&[0.8, 0.6], 0.0).unwrap());
        assert!(!region.contains(&[0.2, 0.6], 0.0).unwrap());
        assert!(cube.contains(&[0.0], 0.0).is_err());
    }

    #[test]
    fn strict_rows_exclude_boundary() {
        let p = sr3();
        assert!(!p.contains(&[0.5, 0.5], 0.0).unwrap());
        assert!(p.closure().contains(&[0.5, 0.5], 0.0).unwrap());
    }

    #[test]
    fn closure_is_idempotent() {
        let c = sr3().closure();
        assert!(c.strict_flags().iter().all(|s| !s));
        assert_eq!(c.matrix(), sr3().matrix());
        assert_eq!(c.closure(), c);
        let closed = triangle();
        assert_eq!(closed.closure(), closed);
    }

    #[test]
    fn intersect_with_whole_space_and_intervals() {
        let t = triangle();
        let i = t.intersect(&Polyhedron::whole_space(2)).unwrap();
        assert_eq!(i, t);
        let a = Polyhedron::from_box(&[0.0], &[1.0]).unwrap();
        let b = Polyhedron::from_box(&[0.5], &[2.0]).unwrap();
        let ab = a.intersect(&b).unwrap();
        assert!(ab.contains(&[0.7], 0.0).unwrap());
        assert!(!ab.contains(&[0.3], 0.0).unwrap());
        assert!(a.intersect(&t).is_err());
    }

    #[test]
    fn bounding_boxes() {
        let cube = Polyhedron::hypercube(3, -1.0, 1.0);
        let bx = cube.bounding_box(&Simplex).unwrap();
        assert_eq!(bx.lo, vec![-1.0; 3]);
        assert_eq!(bx.hi, vec![1.0; 3]);

        let bx = triangle().bounding_box(&Simplex).unwrap();
        for j in 0..2 {
            assert!(bx.lo[j].abs() <= 1e-9 && (bx.hi[j] - 1.0).abs() <= 1e-9);
        }

        let mut simplex = Polyhedron::whole_space(3);
        simplex.push(vec![1.0; 3], 1.0, false);
        simplex.push(vec![-1.0; 3], -1.0, false);
        for j in 0..3 {
            let mut e = vec![0.0; 3];
            e[j] = -1.0;
            simplex.push(e, 0.0, false);
        }
        let bx = simplex.bounding_box(&Simplex).unwrap();
        // Vertices are the unit vectors.
        for j in 0..3 {
            assert!(bx.lo[j].abs() <= 1e-9 && (bx.hi[j] - 1.0).abs() <= 1e-9, "{bx:?}");
        }
    }

    #[test]
    fn bounding_box_errors() {
        let mut half = Polyhedron::whole_space(1);
        half.push(vec![1.0], 0.0, false);
        assert_eq!(half.bounding_box(&Simplex), Err(Error::UnboundedSet));
        let mut empty = half.clone();
        empty.push(vec![-1.0], -1.0, false);
        assert_eq!(empty.bounding_box(&Simplex), Err(Error::InfeasibleSet));
    }

    #[test]
    fn bounding_box_contains_samples() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut p = Polyhedron::hypercube(2, -1.0, 1.0);
        p.push(vec![1.0, 2.0], 0.5, false);
        p.push(vec![-2.0, 1.0], 0.7, false);
        let bx = p.bounding_box(&Simplex).unwrap();
        let mut hits = 0;
        while hits < 10_000 {
            let x = [rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)];
            if p.contains(&x, 0.0).unwrap() {
                hits += 1;
                assert!(bx.contains(&x, 1e-9));
            }
        }
    }

    #[test]
    fn chebyshev_centers() {
        let c = Polyhedron::hypercube(2, -1.0, 1.0).interior_sample(&Simplex).unwrap();
        assert!(c.iter().all(|v| v.abs() <= 1e-9));

        let seg = Polyhedron::from_box(&[0.0], &[2.0]).unwrap();
        assert!((seg.interior_sample(&Simplex).unwrap()[0] - 1.0).abs() <= 1e-9);

        let (c, r) = triangle().chebyshev_ball(&Simplex).unwrap();
        let expected = (2.0 - 2f64.sqrt()) / 2.0;
        assert!((r - expected).abs() <= 1e-9);
        assert!((c[0] - expected).abs() <= 1e-9 && (c[1] - expected).abs() <= 1e-9);
        assert!(triangle().min_slack(&c) > 0.0);
    }

    #[test]
    fn flat_sets_are_degenerate() {
        let mut p = Polyhedron::hypercube(2, 0.0, 1.0);
        p.push(vec![1.0, -1.0], 0.0, false);
        p.push(vec![-1.0, 1.0], 0.0, false);
        assert!(matches!(p.interior_sample(&Simplex), Err(Error::DegenerateSet { .. })));
    }

    #[test]
    fn projection_lands_inside() {
        let t = triangle();
        let p = t.project_inf(&[2.0, 2.0], &Simplex).unwrap();
        assert!(t.contains(&p, 1e-9).unwrap());
        assert!((p[0] - 0.5).abs() < 1e-9 && (p[1] - 0.5).abs() < 1e-9);
    }

    #[test]
    fn file_round_trip_and_default_strictness() {
        let p = Polyhedron::from_json_str(r#"{"A": [[1, 0], [-1, 0]], "b": [1, 1]}"#).unwrap();
        assert_eq!(p.strict_flags(), &[false, false]);
        assert_eq!(Polyhedron::from_json_str(&sr3().to_json_string()).unwrap(), sr3());
        assert!(Polyhedron::from_json_str(r#"{"A": [[1, 0]], "b": [1, 2]}"#).is_err());
    }
}
