//! Antiderivative of the distribution `q - λ r`.
//!
//! For real `λ` the pairing of `q - λ r` with a test function `y` equals
//! `-∫ ω y' dx + ω₁ y(1)`, where `ω` is the antiderivative normalized by
//! `ω(0) = 0` and `ω₁ = ω(1)`. Between knots `ω` is a cubic; at each atom
//! it jumps by the atom weight of `q - λ r`. Values at a jump location are
//! right-continuous.

use crate::poly;
use crate::problem::{piece_index, DistributionalCoefficient, ProblemError, Side};

#[derive(Debug, Clone, PartialEq)]
pub struct OmegaFunction {
    knots: Vec<f64>,
    /// Local cubic per knot interval, valid on `[knots[i], knots[i+1])`.
    pieces: Vec<[f64; 4]>,
    jumps: Vec<(f64, f64)>,
    omega1: f64,
}

/// Builds `ω` for `q - λ r`.
pub fn build_omega(q: &DistributionalCoefficient, r: &DistributionalCoefficient, lambda: f64) -> OmegaFunction {
    let mut knots: Vec<f64> = q
        .density
        .breakpoints
        .iter()
        .chain(&r.density.breakpoints)
        .copied()
        .chain(q.atoms.iter().chain(&r.atoms).map(|a| a.location))
        .collect();
    knots.sort_by(f64::total_cmp);
    knots.dedup();

    let jump_at = |x: f64| -> Option<f64> {
        let wq: f64 = q.atoms.iter().filter(|a| a.location == x).map(|a| a.weight).sum();
        let wr: f64 = r.atoms.iter().filter(|a| a.location == x).map(|a| a.weight).sum();
        let hit = q.atoms.iter().chain(&r.atoms).any(|a| a.location == x);
        hit.then_some(wq - lambda * wr)
    };

    let mut pieces = Vec::with_capacity(knots.len() - 1);
    let mut jumps = Vec::new();
    let mut value = 0.0;
    for w in knots.windows(2) {
        let (a, b) = (w[0], w[1]);
        if let Some(j) = jump_at(a) {
            value += j;
            jumps.push((a, j));
        }
        let density = poly::axpy(&q.density.local_at(a), -lambda, &r.density.local_at(a));
        let mut anti = poly::antiderivative(&density);
        anti[0] = value;
        let mut c = [0.0; 4];
        for (dst, src) in c.iter_mut().zip(&anti) {
            *dst = *src;
        }
        value = poly::eval(&c, b - a);
        pieces.push(c);
    }
    OmegaFunction { knots, pieces, jumps, omega1: value }
}

impl OmegaFunction {
    /// One-sided value at `x ∈ [0, 1]`. At `x = 0` both sides return 0, at
    /// `x = 1` both sides return `ω₁`.
    pub fn eval(&self, x: f64, side: Side) -> Result<f64, ProblemError> {
        if !(0.0..=1.0).contains(&x) {
            return Err(ProblemError::OutOfDomain(x));
        }
        if x == 0.0 {
            return Ok(0.0);
        }
        if x == 1.0 {
            return Ok(self.omega1);
        }
        let i = piece_index(&self.knots, x, side);
        Ok(poly::eval(&self.pieces[i], x - self.knots[i]))
    }

    pub fn omega1(&self) -> f64 {
        self.omega1
    }

    pub fn knots(&self) -> &[f64] {
        &self.knots
    }

    /// `(location, jump size)` for every atom location.
    pub fn jumps(&self) -> &[(f64, f64)] {
        &self.jumps
    }

    /// The cubic of the piece containing `[a, ...)`, re-centred at `a`.
    pub(crate) fn local_at(&self, a: f64) -> [f64; 4] {
        let i = piece_index(&self.knots, a, Side::Right);
        let shifted = poly::shift(&self.pieces[i], a - self.knots[i]);
        let mut c = [0.0; 4];
        c.copy_from_slice(&shifted);
        c
    }

    /// `(left, right, local cubic)` for each smooth piece.
    pub fn pieces(&self) -> impl Iterator<Item = (f64, f64, &[f64; 4])> + '_ {
        self.knots.windows(2).zip(&self.pieces).map(|(w, c)| (w[0], w[1], c))
    }
}

/// Free-function form of [`OmegaFunction::eval`].
pub fn eval_omega(w: &OmegaFunction, x: f64, side: Side) -> Result<f64, ProblemError> {
    w.eval(x, side)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problem::PiecewisePoly;

    #[test]
    fn linear_omega_for_constant_weight() {
        let q = DistributionalCoefficient::zero();
        let r = DistributionalCoefficient::constant(1.0);
        let w = build_omega(&q, &r, 4.0);
        assert_eq!(w.omega1(), -4.0);
        assert!((w.eval(0.25, Side::Left).unwrap() + 1.0).abs() < 1e-15);
        assert!((w.eval(0.25, Side::Right).unwrap() + 1.0).abs() < 1e-15);
        // oracle: midpoint quadrature of the density -4 on [0, x]
        let n = 1000;
        let quad: f64 = (0..n).map(|_| -4.0 / n as f64 * 0.6).sum();
        assert!((w.eval(0.6, Side::Right).unwrap() - quad).abs() < 1e-12);
    }

    #[test]
    fn step_omega_for_point_mass() {
        let q = DistributionalCoefficient::zero().with_atom(0.5, -10.0);
        let r = DistributionalCoefficient::constant(1.0);
        let w = build_omega(&q, &r, 0.0);
        assert_eq!(w.eval(0.5, Side::Left).unwrap(), 0.0);
        assert_eq!(w.eval(0.5, Side::Right).unwrap(), -10.0);
        assert_eq!(w.eval(0.3, Side::Right).unwrap(), 0.0);
        assert_eq!(w.eval(0.8, Side::Left).unwrap(), -10.0);
        assert_eq!(w.omega1(), -10.0);
        assert_eq!(w.jumps(), &[(0.5, -10.0)]);
    }

    #[test]
    fn zero_lambda_kills_weight_atom() {
        let q = DistributionalCoefficient::zero();
        let r = DistributionalCoefficient::from_density(PiecewisePoly::constant(0.0)).with_atom(0.5, 1.0);
        let w = build_omega(&q, &r, 0.0);
        assert_eq!(w.omega1(), 0.0);
        for &x in &[0.1, 0.5, 0.9] {
            assert_eq!(w.eval(x, Side::Left).unwrap(), 0.0);
            assert_eq!(w.eval(x, Side::Right).unwrap(), 0.0);
        }
    }

    #[test]
    fn origin_is_normalized() {
        let q = DistributionalCoefficient::constant(3.0).with_atom(0.2, 1.0);
        let r = DistributionalCoefficient::constant(-1.0);
        let w = build_omega(&q, &r, 2.5);
        assert_eq!(w.eval(0.0, Side::Right).unwrap(), 0.0);
        assert!(matches!(w.eval(1.5, Side::Right), Err(ProblemError::OutOfDomain(_))));
        assert!(matches!(w.eval(-0.1, Side::Left), Err(ProblemError::OutOfDomain(_))));
    }

    #[test]
    fn quadratic_density_integrates_exactly() {
        // density x^2 on [0,1] -> omega = x^3/3
        let q = DistributionalCoefficient::from_density(PiecewisePoly::new(
            vec![0.0, 0.3, 1.0],
            vec![vec![0.0, 0.0, 1.0], vec![0.09, 0.6, 1.0]],
        ));
        let r = DistributionalCoefficient::constant(1.0);
        let w = build_omega(&q, &r, 0.0);
        for &x in &[0.1, 0.3, 0.65, 1.0] {
            assert!((w.eval(x, Side::Right).unwrap() - x * x * x / 3.0).abs() < 1e-15);
        }
    }
}
