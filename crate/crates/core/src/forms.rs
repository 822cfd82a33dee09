//! Galerkin discretization of the pencil form
//!
//! ```text
//! t_λ[y] = ∫ p |y'|² + ∫ (q - λ r) |y|² + V₁₁ |y(0)|² + V₂₂ |y(1)|²
//! ```
//!
//! in the piecewise-linear hat basis. Every coefficient knot is a mesh
//! node, so element integrals of the polynomial densities are exact and
//! atoms act on single diagonal entries. Essential endpoints are imposed
//! by deleting the corresponding row and column.
//!
//! Counting negative directions of these matrices (Sylvester's law) gives
//! the discrete counterpart of the index of the form, on the whole space or
//! on functions supported in `[0, x]`.

use std::io::{self, Write};

use thiserror::Error;

use crate::linalg::{inertia, negative_count, Inertia, SymBandMatrix, DEFAULT_PIVOT_TOL};
use crate::poly;
use crate::problem::{DistributionalCoefficient, Problem};

/// Two coordinates closer than this are the same node.
const NODE_TOL: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FormError {
    #[error("mesh has no node at x = {location}")]
    MeshMismatch { location: f64 },
    #[error("invalid mesh: {0}")]
    BadMesh(String),
    #[error("mode {n} requested from a space of dimension {dim}")]
    NoSuchMode { n: usize, dim: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Mesh {
    nodes: Vec<f64>,
}

impl Mesh {
    pub fn new(nodes: Vec<f64>) -> Result<Self, FormError> {
        if nodes.len() < 2 || nodes[0] != 0.0 || *nodes.last().unwrap() != 1.0 {
            return Err(FormError::BadMesh("nodes must start at 0 and end at 1".into()));
        }
        if nodes.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(FormError::BadMesh("nodes must be strictly increasing".into()));
        }
        Ok(Self { nodes })
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    /// Number of elements.
    pub fn elements(&self) -> usize {
        self.nodes.len() - 1
    }

    pub fn node_index(&self, x: f64) -> Option<usize> {
        let i = self.nodes.partition_point(|&v| v < x - NODE_TOL);
        (i < self.nodes.len() && (self.nodes[i] - x).abs() <= NODE_TOL).then_some(i)
    }

    /// Every element split in half.
    pub fn refined(&self) -> Self {
        let mut nodes = Vec::with_capacity(2 * self.nodes.len() - 1);
        for w in self.nodes.windows(2) {
            nodes.push(w[0]);
            nodes.push(0.5 * (w[0] + w[1]));
        }
        nodes.push(1.0);
        Self { nodes }
    }

    /// The mesh with `x` inserted (unchanged if already a node).
    pub fn with_node(&self, x: f64) -> Result<Self, FormError> {
        if !(0.0..=1.0).contains(&x) {
            return Err(FormError::BadMesh(format!("x = {x} outside [0, 1]")));
        }
        if self.node_index(x).is_some() {
            return Ok(self.clone());
        }
        let mut nodes = self.nodes.clone();
        nodes.insert(nodes.partition_point(|&v| v < x), x);
        Ok(Self { nodes })
    }
}

/// Quasi-uniform mesh with spacing at most `1/(n+1)`, containing every
/// coefficient knot and atom.
pub fn build_mesh(problem: &Problem, n: usize) -> Mesh {
    let target = (n.max(2) + 1) as f64;
    let mut nodes = vec![0.0];
    for w in problem.knots().windows(2) {
        let (a, b) = (w[0], w[1]);
        let pieces = (((b - a) * target) - 1e-9).ceil().max(1.0) as usize;
        for k in 1..pieces {
            nodes.push(a + (b - a) * k as f64 / pieces as f64);
        }
        nodes.push(b);
    }
    Mesh { nodes }
}

/// Assembled matrices over all mesh nodes. Accessors return the versions
/// with essential endpoints removed.
#[derive(Debug, Clone, PartialEq)]
pub struct FormSet {
    mesh: Mesh,
    mp: SymBandMatrix,
    mmass: SymBandMatrix,
    mq: SymBandMatrix,
    mr: SymBandMatrix,
    mv: SymBandMatrix,
    first: usize,
    end: usize,
}

pub fn assemble(problem: &Problem, mesh: &Mesh) -> Result<FormSet, FormError> {
    let n = mesh.nodes.len();
    let mut mp = SymBandMatrix::zeros(n, 1);
    let mut mmass = SymBandMatrix::zeros(n, 1);
    let mut mv = SymBandMatrix::zeros(n, 1);
    for (e, w) in mesh.nodes.windows(2).enumerate() {
        let h = w[1] - w[0];
        let p = problem.p().eval(0.5 * (w[0] + w[1]));
        add_element(&mut mp, e, [p / h, -p / h, p / h]);
        add_element(&mut mmass, e, [h / 3.0, h / 6.0, h / 3.0]);
    }
    let mq = density_matrix(problem.q(), mesh)?;
    let mr = density_matrix(problem.r(), mesh)?;
    let bc = problem.bc();
    mv.add(0, 0, bc.v_left());
    mv.add(n - 1, n - 1, bc.v_right());
    let first = usize::from(bc.essential_left());
    let end = n - usize::from(bc.essential_right());
    Ok(FormSet { mesh: mesh.clone(), mp, mmass, mq, mr, mv, first, end })
}

fn add_element(m: &mut SymBandMatrix, e: usize, [a, b, c]: [f64; 3]) {
    m.add(e, e, a);
    m.add(e + 1, e, b);
    m.add(e + 1, e + 1, c);
}

/// `∫ c φᵢ φⱼ` for a density-plus-atoms coefficient.
fn density_matrix(c: &DistributionalCoefficient, mesh: &Mesh) -> Result<SymBandMatrix, FormError> {
    // three-point Gauss rule on [0, 1]; exact up to degree five
    let g = (0.6f64).sqrt();
    let xs = [0.5 * (1.0 - g), 0.5, 0.5 * (1.0 + g)];
    let ws = [5.0 / 18.0, 8.0 / 18.0, 5.0 / 18.0];
    let n = mesh.nodes.len();
    let mut m = SymBandMatrix::zeros(n, 1);
    for (e, w) in mesh.nodes.windows(2).enumerate() {
        let h = w[1] - w[0];
        let local = c.density.local_at(w[0]);
        let mut k = [0.0; 3];
        for (&s, &wt) in xs.iter().zip(&ws) {
            let f = poly::eval(&local, s * h) * wt * h;
            k[0] += f * (1.0 - s) * (1.0 - s);
            k[1] += f * s * (1.0 - s);
            k[2] += f * s * s;
        }
        add_element(&mut m, e, k);
    }
    for atom in &c.atoms {
        let i = mesh.node_index(atom.location).ok_or(FormError::MeshMismatch { location: atom.location })?;
        m.add(i, i, atom.weight);
    }
    Ok(m)
}

impl FormSet {
    pub fn mesh(&self) -> &Mesh {
        &self.mesh
    }

    /// Number of free degrees of freedom.
    pub fn dim(&self) -> usize {
        self.end - self.first
    }

    fn free(&self, m: &SymBandMatrix) -> SymBandMatrix {
        m.principal(self.first, self.end)
    }

    /// `∫ p |y'|²`
    pub fn stiffness(&self) -> SymBandMatrix {
        self.free(&self.mp)
    }

    /// `∫ |y|²`
    pub fn mass(&self) -> SymBandMatrix {
        self.free(&self.mmass)
    }

    /// `∫ q |y|²`
    pub fn potential(&self) -> SymBandMatrix {
        self.free(&self.mq)
    }

    /// `∫ r |y|²`
    pub fn weight(&self) -> SymBandMatrix {
        self.free(&self.mr)
    }

    /// `V₁₁ |y(0)|² + V₂₂ |y(1)|²`
    pub fn boundary(&self) -> SymBandMatrix {
        self.free(&self.mv)
    }

    /// `P = ∫ p |y'|² + ∫ |y|²`, positive definite.
    pub fn energy(&self) -> SymBandMatrix {
        self.free(&self.mp.axpy(1.0, &self.mmass))
    }

    fn full_pencil(&self, lambda: f64) -> SymBandMatrix {
        self.mp.axpy(1.0, &self.mq).axpy(1.0, &self.mv).axpy(-lambda, &self.mr)
    }

    /// `A(λ) = Mp + Mq + MV - λ Mr`.
    pub fn pencil(&self, lambda: f64) -> SymBandMatrix {
        self.free(&self.full_pencil(lambda))
    }

    /// Inertia of `A(λ)`.
    pub fn inertia(&self, lambda: f64) -> Inertia {
        inertia(&self.pencil(lambda), DEFAULT_PIVOT_TOL)
    }

    /// Number of negative eigenvalues of `A(λ)`.
    pub fn negative_count(&self, lambda: f64) -> usize {
        negative_count(&self.pencil(lambda))
    }

    /// Inertia of the form on functions supported in `[0, x]` that vanish
    /// at `x`, keeping the left boundary handling. `x` must be a node.
    pub fn restricted_inertia(&self, lambda: f64, x: f64) -> Result<Inertia, FormError> {
        let j = self.mesh.node_index(x).ok_or(FormError::MeshMismatch { location: x })?;
        let m = self.full_pencil(lambda).principal(self.first, j.max(self.first));
        Ok(inertia(&m, DEFAULT_PIVOT_TOL))
    }

    /// `Λₙ(λ)`: the `n`-th smallest `Λ` with `A(λ) v = Λ P v`, by bisection
    /// on the negative count of `A(λ) - t P`.
    pub fn eigencurve(&self, lambda: f64, n: usize) -> Result<f64, FormError> {
        if n == 0 || n > self.dim() {
            return Err(FormError::NoSuchMode { n, dim: self.dim() });
        }
        let a = self.pencil(lambda);
        let b = self.energy();
        let below = |t: f64| negative_count(&a.axpy(-t, &b)) < n;
        let (mut lo, mut hi) = (-1.0, 1.0);
        while !below(lo) {
            hi = lo;
            lo *= 2.0;
        }
        while below(hi) {
            lo = hi;
            hi *= 2.0;
        }
        while hi - lo > 1e-13 * (1.0 + lo.abs().max(hi.abs())) {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            if below(mid) {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        Ok(0.5 * (lo + hi))
    }

    /// Discrete eigenvalue `n` counted outward from the positivity point
    /// `xi` (`n > 0` to the right, `n < 0` to the left): the point where
    /// the negative count of `A(λ)` reaches `|n|`. Searches outward from
    /// `hint`; `None` if the count never reaches `|n|` within `horizon`
    /// of `xi`.
    pub fn eigenvalue(&self, xi: f64, n: i64, hint: f64, horizon: f64) -> Option<f64> {
        let target = n.unsigned_abs() as usize;
        if n == 0 || target > self.dim() {
            return None;
        }
        let side = n.signum() as f64;
        // distance d from xi; count(d) is nondecreasing in d
        let reached = |d: f64| self.negative_count(xi + side * d) >= target;
        let mut hi = ((hint - xi) * side).max(1e-3);
        let mut lo = 0.0;
        while !reached(hi) {
            lo = hi;
            hi *= 2.0;
            if hi > horizon {
                return None;
            }
        }
        while reached(lo) && lo > 0.0 {
            hi = lo;
            lo *= 0.5;
            if lo < 1e-12 {
                lo = 0.0;
            }
        }
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if hi - lo <= 1e-13 * (xi + side * hi).abs().max(1.0) || mid <= lo || mid >= hi {
                break;
            }
            if reached(mid) {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        Some(xi + side * 0.5 * (lo + hi))
    }
}

/// Discretizations on a mesh and on its uniform refinement. Discrete
/// eigenvalues converge like `h²`, so the pair gives a Richardson estimate.
#[derive(Debug, Clone, PartialEq)]
pub struct FormPair {
    pub coarse: FormSet,
    pub fine: FormSet,
}

impl FormPair {
    pub fn new(problem: &Problem, mesh: &Mesh) -> Result<Self, FormError> {
        Ok(Self { coarse: assemble(problem, mesh)?, fine: assemble(problem, &mesh.refined())? })
    }

    /// `(coarse, extrapolated)` estimates of eigenvalue `n`; see
    /// [`FormSet::eigenvalue`].
    pub fn eigenvalue(&self, xi: f64, n: i64, hint: f64, horizon: f64) -> Option<(f64, f64)> {
        let c = self.coarse.eigenvalue(xi, n, hint, horizon)?;
        let f = self.fine.eigenvalue(xi, n, c, horizon)?;
        Some((c, (4.0 * f - c) / 3.0))
    }
}

/// Assembles on `mesh` refined by `x` and returns the restricted inertia.
pub fn restricted_inertia(problem: &Problem, mesh: &Mesh, lambda: f64, x: f64) -> Result<Inertia, FormError> {
    let mesh = mesh.with_node(x)?;
    assemble(problem, &mesh)?.restricted_inertia(lambda, x)
}

pub fn pencil_matrix(forms: &FormSet, lambda: f64) -> SymBandMatrix {
    forms.pencil(lambda)
}

pub fn eigencurve(problem: &Problem, mesh: &Mesh, lambda: f64, n: usize) -> Result<f64, FormError> {
    assemble(problem, mesh)?.eigencurve(lambda, n)
}

/// Writes rows of an inertia scan as CSV; `label` names the first column.
pub fn write_inertia_csv<W: Write>(mut w: W, label: &str, rows: &[(f64, Inertia)]) -> io::Result<()> {
    writeln!(w, "{label},negative,zero,positive")?;
    for (v, i) in rows {
        writeln!(w, "{v},{},{},{}", i.negative, i.zero, i.positive)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problem::{BoundaryAngles, PiecewiseConstant, PiecewisePoly};
    use std::f64::consts::PI;

    fn classical() -> Problem {
        Problem::classical(BoundaryAngles::dirichlet())
    }

    fn delta() -> Problem {
        Problem::new(
            PiecewiseConstant::constant(1.0),
            DistributionalCoefficient::zero().with_atom(0.5, -10.0),
            DistributionalCoefficient::constant(1.0),
            BoundaryAngles::dirichlet(),
        )
        .unwrap()
    }

    #[test]
    fn mesh_contains_knots() {
        let m = build_mesh(&classical(), 3);
        assert_eq!(m.nodes(), &[0.0, 0.25, 0.5, 0.75, 1.0]);
        let p = Problem::new(
            PiecewiseConstant::new(vec![0.0, 0.3, 1.0], vec![1.0, 2.0]),
            DistributionalCoefficient::zero().with_atom(0.5, 1.0),
            DistributionalCoefficient::constant(1.0),
            BoundaryAngles::dirichlet(),
        )
        .unwrap();
        let m = build_mesh(&p, 2);
        assert!(m.node_index(0.3).is_some() && m.node_index(0.5).is_some());
        assert!(m.nodes().windows(2).all(|w| w[1] > w[0]));
        assert!(m.elements() >= 3);
        assert!(Mesh::new(vec![0.0, 0.5, 0.5, 1.0]).is_err());
    }

    #[test]
    fn element_matrices_on_uniform_mesh() {
        let p = Problem::classical(BoundaryAngles::neumann());
        let mesh = build_mesh(&p, 9);
        let h = 0.1;
        let f = assemble(&p, &mesh).unwrap();
        let (mp, mr) = (f.stiffness(), f.weight());
        assert!((mp.get(4, 4) - 2.0 / h).abs() < 1e-10);
        assert!((mp.get(5, 4) + 1.0 / h).abs() < 1e-10);
        assert!((mr.get(4, 4) - 4.0 * h / 6.0).abs() < 1e-14);
        assert!((mr.get(5, 4) - h / 6.0).abs() < 1e-14);
        assert!((mr.get(0, 0) - 2.0 * h / 6.0).abs() < 1e-14);
    }

    #[test]
    fn atom_lands_on_its_node() {
        let p = delta();
        let mesh = build_mesh(&p, 3);
        let f = assemble(&p, &mesh).unwrap();
        // node 1/2 is index 1 after removing the Dirichlet node 0
        let mq = f.potential();
        assert_eq!(mq.get(1, 1), -10.0);
        assert_eq!(mq.get(0, 0), 0.0);
        assert_eq!(mq.get(1, 0), 0.0);
        let coarse = Mesh::new(vec![0.0, 0.4, 1.0]).unwrap();
        assert_eq!(assemble(&p, &coarse), Err(FormError::MeshMismatch { location: 0.5 }));
    }

    #[test]
    fn quadratic_density_is_exact() {
        // ∫ x² φᵢ φⱼ against a fine midpoint rule
        let q = DistributionalCoefficient::from_density(PiecewisePoly::new(vec![0.0, 1.0], vec![vec![0.0, 0.0, 1.0]]));
        let p = Problem::new(PiecewiseConstant::constant(1.0), q, DistributionalCoefficient::constant(1.0), BoundaryAngles::neumann()).unwrap();
        let mesh = Mesh::new(vec![0.0, 0.3, 1.0]).unwrap();
        let m = assemble(&p, &mesh).unwrap().potential();
        let k = 200_000;
        let (mut a11, mut a21) = (0.0, 0.0);
        for i in 0..k {
            let x = 0.3 + 0.7 * (i as f64 + 0.5) / k as f64;
            let (l, r) = ((1.0 - x) / 0.7, (x - 0.3) / 0.7);
            a11 += x * x * l * l * 0.7 / k as f64;
            a21 += x * x * l * r * 0.7 / k as f64;
        }
        let left_part: f64 = (0..k).map(|i| {
            let x = 0.3 * (i as f64 + 0.5) / k as f64;
            x * x * (x / 0.3).powi(2) * 0.3 / k as f64
        }).sum();
        assert!((m.get(1, 1) - (a11 + left_part)).abs() < 1e-9);
        assert!((m.get(2, 1) - a21).abs() < 1e-9);
    }

    #[test]
    fn pencil_is_linear() {
        let f = assemble(&delta(), &build_mesh(&delta(), 20)).unwrap();
        let (a, b, c) = (f.pencil(-3.0), f.pencil(7.0), f.pencil(2.0));
        let sum = a.axpy(1.0, &b);
        for i in 0..f.dim() {
            for j in i.saturating_sub(1)..=i {
                assert!((sum.get(i, j) - 2.0 * c.get(i, j)).abs() < 1e-9);
            }
        }
        assert_eq!(f.pencil(0.0), f.stiffness().axpy(1.0, &f.potential()).axpy(1.0, &f.boundary()));
    }

    #[test]
    fn inertia_counts_classical_eigenvalues() {
        let p = classical();
        let f = assemble(&p, &build_mesh(&p, 400)).unwrap();
        assert_eq!(f.inertia(2.5 * PI * PI).negative, 1);
        assert_eq!(f.inertia(-1.0).negative, 0);
        assert_eq!(f.inertia(20.0 * PI * PI).negative, 4);
    }

    #[test]
    fn restricted_counts_conjugate_points() {
        let p = classical();
        let mesh = build_mesh(&p, 399);
        let f = assemble(&p, &mesh).unwrap();
        let lambda = 4.0 * PI * PI;
        assert_eq!(f.restricted_inertia(lambda, 0.75).unwrap().negative, 1);
        let small = f.restricted_inertia(lambda, 0.25).unwrap();
        assert_eq!((small.negative, small.zero), (0, 0));
        assert_eq!(f.restricted_inertia(PI * PI * 1.01, 1.0).unwrap().negative, 1);
        assert_eq!(restricted_inertia(&p, &mesh, lambda, 0.7531).unwrap().negative, 1);
    }

    #[test]
    fn eigencurves_vanish_at_eigenvalues() {
        let p = classical();
        let f = assemble(&p, &build_mesh(&p, 400)).unwrap();
        let l2 = f.eigenvalue(0.0, 2, 30.0, 1e6).unwrap();
        assert!((l2 - 4.0 * PI * PI).abs() / (4.0 * PI * PI) < 1e-4);
        assert!(f.eigencurve(l2, 2).unwrap().abs() < 1e-9);
        assert!(f.eigencurve(-50.0, 1).unwrap() > 0.0);
        for lambda in [-10.0, 5.0, 60.0] {
            let curves: Vec<f64> = (1..=5).map(|n| f.eigencurve(lambda, n).unwrap()).collect();
            assert!(curves.windows(2).all(|w| w[0] <= w[1]));
        }
        assert!(f.eigencurve(0.0, 0).is_err());
    }

    #[test]
    fn robin_end_enters_boundary_matrix() {
        let p = Problem::classical(BoundaryAngles::new(PI / 2.0, PI / 2.0));
        let f = assemble(&p, &build_mesh(&p, 10)).unwrap();
        let mv = f.boundary();
        assert!((mv.get(0, 0) + 1.0).abs() < 1e-15);
        assert!((mv.get(f.dim() - 1, f.dim() - 1) + 1.0).abs() < 1e-15);
        assert_eq!(f.dim(), 12);
    }

    #[test]
    fn extrapolation_improves_agreement() {
        let p = classical();
        let pair = FormPair::new(&p, &build_mesh(&p, 50)).unwrap();
        let exact = 9.0 * PI * PI;
        let (coarse, extra) = pair.eigenvalue(0.0, 3, 80.0, 1e6).unwrap();
        assert!(coarse > exact);
        assert!((extra - exact).abs() < 0.05 * (coarse - exact));
        assert_eq!(pair.fine.mesh().elements(), 2 * pair.coarse.mesh().elements());
    }

    #[test]
    fn csv_layout() {
        let mut out = Vec::new();
        let i = Inertia { negative: 1, zero: 0, positive: 3 };
        write_inertia_csv(&mut out, "x", &[(0.5, i)]).unwrap();
        assert_eq!(String::from_utf8(out).unwrap(), "x,negative,zero,positive\n0.5,1,0,3\n");
    }
}
