//! Coefficients, boundary data and the problem container.
//!
//! The equation is `-(p y')' + (q - λ r) y = 0` on `[0, 1]`, where `p` is
//! piecewise constant and uniformly positive, and `q`, `r` are
//! distributional coefficients: a piecewise quadratic density plus a finite
//! set of point masses. Boundary conditions are encoded by one angle per
//! endpoint, `U = diag(e^{iθ₀}, e^{iθ₁})`.

use std::f64::consts::PI;

use thiserror::Error;

use crate::poly;

/// Highest polynomial degree accepted for coefficient densities.
pub const MAX_DENSITY_DEGREE: usize = 2;

/// Angles with `|θ|` below this are snapped to the essential condition.
const ANGLE_SNAP: f64 = 1e-14;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ProblemError {
    #[error("`p` must be uniformly positive: value {value} on [{left}, {right}]")]
    NonPositiveP { value: f64, left: f64, right: f64 },
    #[error("weight `r` vanishes identically")]
    ZeroWeight,
    #[error("malformed grid in `{field}`: {reason}")]
    BadGrid { field: String, reason: String },
    #[error("atom in `{field}` at x = {location} must lie strictly inside (0, 1)")]
    BadAtom { field: String, location: f64 },
    #[error("`{field}`: density polynomial has degree {degree}, at most {MAX_DENSITY_DEGREE} supported")]
    BadDegree { field: String, degree: usize },
    #[error("`{field}` is not a finite number")]
    NotFinite { field: String },
    #[error("x = {0} lies outside [0, 1]")]
    OutOfDomain(f64),
}

/// Piecewise constant function on `[0, 1]`; used for `p`.
#[derive(Debug, Clone, PartialEq)]
pub struct PiecewiseConstant {
    pub breakpoints: Vec<f64>,
    pub values: Vec<f64>,
}

impl PiecewiseConstant {
    pub fn constant(value: f64) -> Self {
        Self { breakpoints: vec![0.0, 1.0], values: vec![value] }
    }

    pub fn new(breakpoints: Vec<f64>, values: Vec<f64>) -> Self {
        Self { breakpoints, values }
    }

    /// Right-continuous evaluation (left limit at `x = 1`).
    pub fn eval(&self, x: f64) -> f64 {
        self.values[piece_index(&self.breakpoints, x, Side::Right)]
    }

    pub fn min_value(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }
}

/// Piecewise polynomial on `[0, 1]`. Piece `i` covers
/// `[breakpoints[i], breakpoints[i+1])` and is evaluated in the local
/// coordinate `s = x - breakpoints[i]`, ascending powers.
#[derive(Debug, Clone, PartialEq)]
pub struct PiecewisePoly {
    pub breakpoints: Vec<f64>,
    pub polys: Vec<Vec<f64>>,
}

impl PiecewisePoly {
    pub fn constant(value: f64) -> Self {
        Self { breakpoints: vec![0.0, 1.0], polys: vec![vec![value]] }
    }

    pub fn new(breakpoints: Vec<f64>, polys: Vec<Vec<f64>>) -> Self {
        Self { breakpoints, polys }
    }

    /// Piecewise constant density with the given values.
    pub fn steps(breakpoints: Vec<f64>, values: Vec<f64>) -> Self {
        Self { breakpoints, polys: values.into_iter().map(|v| vec![v]).collect() }
    }

    pub fn eval(&self, x: f64, side: Side) -> f64 {
        let i = piece_index(&self.breakpoints, x, side);
        poly::eval(&self.polys[i], x - self.breakpoints[i])
    }

    /// Coefficients of the piece containing `[a, ...)` re-centred at `a`.
    pub(crate) fn local_at(&self, a: f64) -> Vec<f64> {
        let i = piece_index(&self.breakpoints, a, Side::Right);
        poly::shift(&self.polys[i], a - self.breakpoints[i])
    }

    pub fn integral(&self) -> f64 {
        self.polys
            .iter()
            .zip(self.breakpoints.windows(2))
            .map(|(c, w)| poly::integral(c, w[1] - w[0]))
            .sum()
    }

    fn is_zero(&self) -> bool {
        self.polys.iter().all(|c| c.iter().all(|&v| v == 0.0))
    }

    fn map_coeffs(&self, f: impl Fn(f64) -> f64) -> Self {
        Self {
            breakpoints: self.breakpoints.clone(),
            polys: self.polys.iter().map(|c| c.iter().map(|&v| f(v)).collect()).collect(),
        }
    }

    fn reflected(&self) -> Self {
        let n = self.polys.len();
        let mut breakpoints: Vec<f64> = self.breakpoints.iter().rev().map(|&b| 1.0 - b).collect();
        breakpoints[0] = 0.0;
        breakpoints[n] = 1.0;
        let polys = (0..n)
            .rev()
            .map(|i| {
                let h = self.breakpoints[i + 1] - self.breakpoints[i];
                poly::reflect(&self.polys[i], h)
            })
            .collect();
        Self { breakpoints, polys }
    }
}

/// A point mass `weight · δ(x - location)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Atom {
    pub location: f64,
    pub weight: f64,
}

/// A real coefficient in `W₂⁻¹[0,1]`: piecewise polynomial density plus atoms.
#[derive(Debug, Clone, PartialEq)]
pub struct DistributionalCoefficient {
    pub density: PiecewisePoly,
    pub atoms: Vec<Atom>,
}

impl DistributionalCoefficient {
    pub fn zero() -> Self {
        Self::constant(0.0)
    }

    pub fn constant(value: f64) -> Self {
        Self { density: PiecewisePoly::constant(value), atoms: Vec::new() }
    }

    pub fn from_density(density: PiecewisePoly) -> Self {
        Self { density, atoms: Vec::new() }
    }

    pub fn with_atom(mut self, location: f64, weight: f64) -> Self {
        self.atoms.push(Atom { location, weight });
        self
    }

    /// Total mass: integral of the density plus all atom weights.
    pub fn total(&self) -> f64 {
        self.density.integral() + self.atoms.iter().map(|a| a.weight).sum::<f64>()
    }

    pub fn is_zero(&self) -> bool {
        self.density.is_zero() && self.atoms.is_empty()
    }

    /// `self + scale · other`, on the union grid.
    pub fn combine(&self, scale: f64, other: &Self) -> Self {
        let grid = merge_sorted(&self.density.breakpoints, &other.density.breakpoints);
        let polys = grid
            .windows(2)
            .map(|w| {
                let a = self.density.local_at(w[0]);
                let b = other.density.local_at(w[0]);
                poly::trim(poly::axpy(&a, scale, &b))
            })
            .collect();
        let mut atoms = self.atoms.clone();
        atoms.extend(other.atoms.iter().map(|a| Atom { location: a.location, weight: scale * a.weight }));
        Self { density: PiecewisePoly { breakpoints: grid, polys }, atoms: normalize_atoms(atoms) }
    }

    fn scaled(&self, c: f64) -> Self {
        Self {
            density: self.density.map_coeffs(|v| c * v),
            atoms: self.atoms.iter().map(|a| Atom { location: a.location, weight: c * a.weight }).collect(),
        }
    }

    fn reflected(&self) -> Self {
        let mut atoms: Vec<Atom> =
            self.atoms.iter().map(|a| Atom { location: 1.0 - a.location, weight: a.weight }).collect();
        atoms.sort_by(|a, b| a.location.total_cmp(&b.location));
        Self { density: self.density.reflected(), atoms }
    }

    fn normalized(&self, field: &str) -> Result<Self, ProblemError> {
        for (i, c) in self.density.polys.iter().enumerate() {
            if c.iter().any(|v| !v.is_finite()) {
                return Err(ProblemError::NotFinite { field: format!("{field}.density.polys[{i}]") });
            }
        }
        let polys: Vec<Vec<f64>> = self.density.polys.iter().cloned().map(poly::trim).collect();
        for c in &polys {
            if c.len() > MAX_DENSITY_DEGREE + 1 {
                return Err(ProblemError::BadDegree { field: format!("{field}.density"), degree: c.len() - 1 });
            }
        }
        let (breakpoints, polys) =
            normalize_grid(&format!("{field}.density"), &self.density.breakpoints, polys)?;
        for a in &self.atoms {
            if !a.location.is_finite() || !a.weight.is_finite() {
                return Err(ProblemError::NotFinite { field: format!("{field}.atoms") });
            }
            if a.location <= 0.0 || a.location >= 1.0 {
                return Err(ProblemError::BadAtom { field: field.to_string(), location: a.location });
            }
        }
        Ok(Self {
            density: PiecewisePoly { breakpoints, polys },
            atoms: normalize_atoms(self.atoms.clone()),
        })
    }
}

/// Boundary angles; `U = diag(e^{iθ₀}, e^{iθ₁})`, both in `(-π, π]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundaryAngles {
    pub theta0: f64,
    pub theta1: f64,
}

impl BoundaryAngles {
    pub fn new(theta0: f64, theta1: f64) -> Self {
        Self { theta0, theta1 }
    }

    pub fn dirichlet() -> Self {
        Self::new(0.0, 0.0)
    }

    pub fn neumann() -> Self {
        Self::new(PI, PI)
    }

    pub fn essential_left(&self) -> bool {
        self.theta0 == 0.0
    }

    pub fn essential_right(&self) -> bool {
        self.theta1 == 0.0
    }

    /// `V₁₁`
    pub fn v_left(&self) -> f64 {
        boundary_coefficient(self.theta0)
    }

    /// `V₂₂`
    pub fn v_right(&self) -> f64 {
        boundary_coefficient(self.theta1)
    }

    pub fn swapped(&self) -> Self {
        Self::new(self.theta1, self.theta0)
    }

    /// Angles whose boundary coefficients are `c V₁₁`, `c V₂₂`; essential
    /// ends stay essential.
    pub fn scaled(&self, c: f64) -> Self {
        let scale = |theta: f64| {
            if theta == 0.0 {
                0.0
            } else {
                let t = 2.0 * f64::atan2(1.0, -c * boundary_coefficient(theta));
                if t > PI { t - 2.0 * PI } else { t }
            }
        };
        Self::new(scale(self.theta0), scale(self.theta1))
    }

    fn normalized(&self) -> Result<Self, ProblemError> {
        Ok(Self::new(wrap_angle(self.theta0, "bc.theta0")?, wrap_angle(self.theta1, "bc.theta1")?))
    }
}

/// `-cot(θ/2)` for `θ ≠ 0`, zero for the essential condition.
pub fn boundary_coefficient(theta: f64) -> f64 {
    if theta == 0.0 || theta == PI {
        0.0
    } else {
        let half = 0.5 * theta;
        -half.cos() / half.sin()
    }
}

fn wrap_angle(theta: f64, field: &str) -> Result<f64, ProblemError> {
    if !theta.is_finite() {
        return Err(ProblemError::NotFinite { field: field.to_string() });
    }
    let two_pi = 2.0 * PI;
    let mut t = theta.rem_euclid(two_pi);
    if t > PI {
        t -= two_pi;
    }
    if t.abs() < ANGLE_SNAP || (two_pi - t).abs() < ANGLE_SNAP {
        t = 0.0;
    }
    if (t + PI).abs() < ANGLE_SNAP {
        t = PI;
    }
    Ok(t)
}

/// A validated problem. Construct with [`Problem::new`].
#[derive(Debug, Clone, PartialEq)]
pub struct Problem {
    p: PiecewiseConstant,
    q: DistributionalCoefficient,
    r: DistributionalCoefficient,
    bc: BoundaryAngles,
}

impl Problem {
    /// Validates and normalizes the raw data: zero-width pieces are
    /// dropped, atoms are sorted and coincident atoms merged.
    pub fn new(
        p: PiecewiseConstant,
        q: DistributionalCoefficient,
        r: DistributionalCoefficient,
        bc: BoundaryAngles,
    ) -> Result<Self, ProblemError> {
        if p.values.iter().any(|v| !v.is_finite()) {
            return Err(ProblemError::NotFinite { field: "p.values".into() });
        }
        let (breakpoints, values) = normalize_grid("p", &p.breakpoints, p.values.clone())?;
        for (v, w) in values.iter().zip(breakpoints.windows(2)) {
            if *v <= 0.0 {
                return Err(ProblemError::NonPositiveP { value: *v, left: w[0], right: w[1] });
            }
        }
        let q = q.normalized("q")?;
        let r = r.normalized("r")?;
        if r.is_zero() {
            return Err(ProblemError::ZeroWeight);
        }
        Ok(Self { p: PiecewiseConstant { breakpoints, values }, q, r, bc: bc.normalized()? })
    }

    /// `p ≡ 1`, `q ≡ 0`, `r ≡ 1` with the given boundary angles.
    pub fn classical(bc: BoundaryAngles) -> Self {
        Self {
            p: PiecewiseConstant::constant(1.0),
            q: DistributionalCoefficient::zero(),
            r: DistributionalCoefficient::constant(1.0),
            bc,
        }
    }

    pub fn p(&self) -> &PiecewiseConstant {
        &self.p
    }

    pub fn q(&self) -> &DistributionalCoefficient {
        &self.q
    }

    pub fn r(&self) -> &DistributionalCoefficient {
        &self.r
    }

    pub fn bc(&self) -> BoundaryAngles {
        self.bc
    }

    /// Every point where some coefficient changes form: breakpoints of
    /// `p`, `q`, `r` and all atom locations. Includes 0 and 1.
    pub fn knots(&self) -> Vec<f64> {
        let mut all: Vec<f64> = self
            .p
            .breakpoints
            .iter()
            .chain(&self.q.density.breakpoints)
            .chain(&self.r.density.breakpoints)
            .copied()
            .chain(self.q.atoms.iter().chain(&self.r.atoms).map(|a| a.location))
            .collect();
        all.sort_by(f64::total_cmp);
        all.dedup();
        all
    }

    /// Atom locations of `q` and `r`, sorted and deduplicated.
    pub fn atom_locations(&self) -> Vec<f64> {
        let mut all: Vec<f64> = self.q.atoms.iter().chain(&self.r.atoms).map(|a| a.location).collect();
        all.sort_by(f64::total_cmp);
        all.dedup();
        all
    }

    /// `(c p, c q, c r)` with the boundary coefficients also multiplied by
    /// `c`, so the whole form scales; the spectrum is unchanged for `c > 0`.
    pub fn scaled(&self, c: f64) -> Self {
        Self {
            p: PiecewiseConstant { breakpoints: self.p.breakpoints.clone(), values: self.p.values.iter().map(|v| c * v).collect() },
            q: self.q.scaled(c),
            r: self.r.scaled(c),
            bc: self.bc.scaled(c),
        }
    }

    /// `q ↦ q + c r`; eigenvalues move by `+c`.
    pub fn shifted(&self, c: f64) -> Self {
        Self { q: self.q.combine(c, &self.r), ..self.clone() }
    }

    /// `x ↦ 1 - x` with the boundary angles swapped.
    pub fn mirrored(&self) -> Self {
        let n = self.p.values.len();
        let mut breakpoints: Vec<f64> = self.p.breakpoints.iter().rev().map(|&b| 1.0 - b).collect();
        breakpoints[0] = 0.0;
        breakpoints[n] = 1.0;
        Self {
            p: PiecewiseConstant { breakpoints, values: self.p.values.iter().rev().copied().collect() },
            q: self.q.reflected(),
            r: self.r.reflected(),
            bc: self.bc.swapped(),
        }
    }

    /// `r ↦ -r`; eigenvalues are negated.
    pub fn negated_weight(&self) -> Self {
        Self { r: self.r.scaled(-1.0), ..self.clone() }
    }

    /// Returns the problem with different boundary angles.
    pub fn with_bc(&self, bc: BoundaryAngles) -> Result<Self, ProblemError> {
        Ok(Self { bc: bc.normalized()?, ..self.clone() })
    }

    /// True when `r` is nonnegative with support equal to `[0, 1]`
    /// (density checked at piece ends and midpoints, atoms nonnegative).
    pub fn weight_is_nonnegative(&self) -> bool {
        let d = &self.r.density;
        let density_ok = d.polys.iter().zip(d.breakpoints.windows(2)).all(|(c, w)| {
            let h = w[1] - w[0];
            [0.0, 0.5 * h, h].iter().all(|&s| poly::eval(c, s) >= 0.0)
        });
        density_ok && self.r.atoms.iter().all(|a| a.weight >= 0.0)
    }
}

/// Which one-sided limit to take at a discontinuity.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    Left,
    Right,
}

/// Index of the piece used to evaluate at `x` from the given side.
pub(crate) fn piece_index(breakpoints: &[f64], x: f64, side: Side) -> usize {
    let n = breakpoints.len() - 1;
    let i = match side {
        // last i with breakpoints[i] <= x
        Side::Right => breakpoints.partition_point(|&b| b <= x).saturating_sub(1),
        // first i with x <= breakpoints[i+1]
        Side::Left => breakpoints[1..].partition_point(|&b| b < x),
    };
    i.min(n - 1)
}

fn normalize_grid<T>(field: &str, breakpoints: &[f64], values: Vec<T>) -> Result<(Vec<f64>, Vec<T>), ProblemError> {
    let bad = |reason: String| ProblemError::BadGrid { field: field.to_string(), reason };
    if breakpoints.len() < 2 {
        return Err(bad("need at least two breakpoints".into()));
    }
    if values.len() + 1 != breakpoints.len() {
        return Err(bad(format!("{} breakpoints but {} pieces", breakpoints.len(), values.len())));
    }
    if breakpoints.iter().any(|b| !b.is_finite()) {
        return Err(bad("breakpoints must be finite".into()));
    }
    if breakpoints[0] != 0.0 || *breakpoints.last().unwrap() != 1.0 {
        return Err(bad("breakpoints must start at 0 and end at 1".into()));
    }
    if let Some(w) = breakpoints.windows(2).find(|w| w[1] < w[0]) {
        return Err(bad(format!("breakpoints decrease from {} to {}", w[0], w[1])));
    }
    let mut out_b = vec![0.0];
    let mut out_v = Vec::with_capacity(values.len());
    for (w, v) in breakpoints.windows(2).zip(values) {
        if w[1] > w[0] {
            out_b.push(w[1]);
            out_v.push(v);
        }
    }
    Ok((out_b, out_v))
}

fn normalize_atoms(mut atoms: Vec<Atom>) -> Vec<Atom> {
    atoms.sort_by(|a, b| a.location.total_cmp(&b.location));
    let mut out: Vec<Atom> = Vec::with_capacity(atoms.len());
    for a in atoms {
        match out.last_mut() {
            Some(last) if last.location == a.location => last.weight += a.weight,
            _ => out.push(a),
        }
    }
    out.retain(|a| a.weight != 0.0);
    out
}

fn merge_sorted(a: &[f64], b: &[f64]) -> Vec<f64> {
    let mut all: Vec<f64> = a.iter().chain(b).copied().collect();
    all.sort_by(f64::total_cmp);
    all.dedup();
    all
}
