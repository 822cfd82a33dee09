//! Shooting on the regularized first-order system
//!
//! ```text
//! Y₁' = (ω Y₁ + Y₂) / p,      Y₂' = -ω (ω Y₁ + Y₂) / p,
//! ```
//!
//! with `Y₁ = y` and `Y₂ = p y' - ω y` the quasi-derivative. Both
//! components are continuous across atoms (the jump of `p y'` is absorbed by
//! the jump of `ω`), so the integrator only needs mandatory nodes at every
//! coefficient knot. Between knots the system is smooth and is advanced by
//! an embedded Dormand–Prince 5(4) pair.
//!
//! The Prüfer angle `θ = atan2(Y₁, Y₂)` satisfies `θ' = (p y')² / (p |Y|²)`,
//! so it is nondecreasing; each accepted step checks this, and every zero
//! of `Y₁` is checked to be simple. Violations are counted globally and
//! reported as errors.

use std::f64::consts::PI;
use std::io::{self, Write};
use std::sync::atomic::{AtomicU64, Ordering};

use thiserror::Error;

use crate::omega::{build_omega, OmegaFunction};
use crate::problem::{BoundaryAngles, Problem};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ShootConfig {
    /// Relative local error tolerance, measured against `|Y|`.
    pub rtol: f64,
    pub atol: f64,
    /// `|Y₁| ≤ endpoint_tol · max |Y|` at the far endpoint declares a zero
    /// there.
    pub endpoint_tol: f64,
    /// Bisection tolerance for zero locations.
    pub zero_tol: f64,
    pub max_steps: usize,
    /// Rescale `Y` to unit norm once `|Y|` leaves `[1/t, t]`.
    pub renorm_threshold: f64,
}

impl Default for ShootConfig {
    fn default() -> Self {
        Self {
            rtol: 1e-10,
            atol: 1e-12,
            endpoint_tol: 1e-8,
            zero_tol: 1e-10,
            max_steps: 5_000_000,
            renorm_threshold: 1e6,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Invariant {
    PruferMonotone,
    NonVanishingState,
    SimpleZero,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ShootError {
    #[error("step size underflow at t = {t} (λ = {lambda})")]
    StepFailure { t: f64, lambda: f64 },
    #[error("step budget of {max_steps} exhausted at t = {t} (λ = {lambda})")]
    TooManySteps { t: f64, lambda: f64, max_steps: usize },
    #[error("invariant {kind:?} violated at t = {t} (λ = {lambda}): {detail}")]
    InvariantViolation { kind: Invariant, t: f64, lambda: f64, detail: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    /// From `t = 0` with the left boundary condition.
    Forward,
    /// From `t = 1` with the right boundary condition.
    Backward,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Zero {
    pub location: f64,
    /// `Y₁` has opposite signs on either side of the bracketing interval.
    pub sign_change: bool,
    /// `|Y₂| / |Y|` at the zero; 1 for a simple zero.
    pub slope: f64,
}

/// Trajectory of one shooting run, stored in ascending `t`.
///
/// `y1`, `y2` share one global scale: the true solution is
/// `exp(log_scale)` times the stored values.
#[derive(Debug, Clone, PartialEq)]
pub struct ShootResult {
    pub lambda: f64,
    pub direction: Direction,
    pub nodes: Vec<f64>,
    pub y1: Vec<f64>,
    pub y2: Vec<f64>,
    /// `atan2(Y₁, Y₂)`, unwrapped; nondecreasing in `t`.
    pub prufer: Vec<f64>,
    /// Zeros of `Y₁` strictly inside `(0, 1)`.
    pub zeros: Vec<Zero>,
    /// The far endpoint is a zero of `Y₁` within `endpoint_tol`.
    pub endpoint_zero: bool,
    pub omega1: f64,
    pub log_scale: f64,
    /// Boundary mismatch at the far endpoint, in true scale.
    pub residual: f64,
    /// Per step: `Y₁'` at both ends, in stored scale.
    slopes: Vec<(f64, f64)>,
}

impl ShootResult {
    /// Prüfer angle of `(y, p y')` at `t = 1`, on the branch of the stored
    /// angle. Only meaningful for forward runs.
    pub fn terminal_angle(&self) -> f64 {
        let n = self.nodes.len() - 1;
        let (a, b) = (self.y1[n], self.y2[n]);
        let theta = self.prufer[n];
        let r = half_turn(a.atan2(b));
        let k = ((theta - r) / PI).round();
        k * PI + half_turn(a.atan2(b + self.omega1 * a))
    }

    /// Terminal state `(Y₁, Y₂)` at the far endpoint, scaled to unit norm.
    pub fn terminal_state(&self) -> (f64, f64) {
        let i = match self.direction {
            Direction::Forward => self.nodes.len() - 1,
            Direction::Backward => 0,
        };
        let (a, b) = (self.y1[i], self.y2[i]);
        let n = a.hypot(b);
        (a / n, b / n)
    }

    pub fn zero_locations(&self) -> Vec<f64> {
        self.zeros.iter().map(|z| z.location).collect()
    }

    /// Cubic Hermite interpolant of `Y₁` in stored scale.
    pub fn y1_at(&self, t: f64) -> f64 {
        let i = self.nodes.partition_point(|&x| x <= t).clamp(1, self.nodes.len() - 1) - 1;
        let (t0, t1) = (self.nodes[i], self.nodes[i + 1]);
        let h = t1 - t0;
        if h == 0.0 {
            return self.y1[i];
        }
        let s = ((t - t0) / h).clamp(0.0, 1.0);
        let (d0, d1) = self.slopes[i];
        let h00 = (1.0 + 2.0 * s) * (1.0 - s) * (1.0 - s);
        let h10 = s * (1.0 - s) * (1.0 - s);
        let h01 = s * s * (3.0 - 2.0 * s);
        let h11 = s * s * (s - 1.0);
        h00 * self.y1[i] + h10 * h * d0 + h01 * self.y1[i + 1] + h11 * h * d1
    }

    /// Scales the stored trajectory to `max |Y₁| = 1` with the first
    /// non-negligible value positive.
    pub fn normalize(&mut self) {
        let m = self.y1.iter().fold(0.0, |m: f64, v| m.max(v.abs()));
        if m == 0.0 || !m.is_finite() {
            return;
        }
        let first = self.y1.iter().find(|v| v.abs() > 1e-8 * m).copied().unwrap_or(1.0);
        let s = first.signum() / m;
        for v in self.y1.iter_mut().chain(self.y2.iter_mut()) {
            *v *= s;
        }
        for d in &mut self.slopes {
            d.0 *= s;
            d.1 *= s;
        }
        self.log_scale -= s.abs().ln();
        self.residual *= s.signum();
    }

    /// CSV with columns `t,Y1,Y2,theta`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "t,Y1,Y2,theta")?;
        for i in 0..self.nodes.len() {
            writeln!(w, "{},{},{},{}", self.nodes[i], self.y1[i], self.y2[i], self.prufer[i])?;
        }
        Ok(())
    }
}

/// Global tallies of the per-step invariant checks.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct InvariantCounters {
    pub steps_checked: u64,
    pub zeros_checked: u64,
    pub violations: u64,
}

static STEPS_CHECKED: AtomicU64 = AtomicU64::new(0);
static ZEROS_CHECKED: AtomicU64 = AtomicU64::new(0);
static VIOLATIONS: AtomicU64 = AtomicU64::new(0);

pub fn invariant_counters() -> InvariantCounters {
    InvariantCounters {
        steps_checked: STEPS_CHECKED.load(Ordering::Relaxed),
        zeros_checked: ZEROS_CHECKED.load(Ordering::Relaxed),
        violations: VIOLATIONS.load(Ordering::Relaxed),
    }
}

/// Unique-up-to-scale real solution of the left boundary condition.
pub fn initial_state(bc: &BoundaryAngles) -> (f64, f64) {
    if bc.essential_left() {
        (0.0, 1.0)
    } else {
        (1.0, bc.v_left())
    }
}

/// Starting state at `t = 1` for backward shooting. The condition there
/// reads `Y₂(1) + ω₁ Y₁(1) = -V₂₂ Y₁(1)`.
pub fn terminal_state(bc: &BoundaryAngles, omega1: f64) -> (f64, f64) {
    if bc.essential_right() {
        (0.0, -1.0)
    } else {
        (1.0, -bc.v_right() - omega1)
    }
}

/// Mismatch of the right boundary condition; vanishes exactly at
/// eigenvalues.
pub fn boundary_residual(y1: f64, y2: f64, omega1: f64, bc: &BoundaryAngles) -> f64 {
    if bc.essential_right() {
        y1
    } else {
        y2 + omega1 * y1 + bc.v_right() * y1
    }
}

/// Mismatch of the left boundary condition (`ω(0) = 0`).
pub fn left_residual(y1: f64, y2: f64, bc: &BoundaryAngles) -> f64 {
    if bc.essential_left() {
        y1
    } else {
        y2 - bc.v_left() * y1
    }
}

/// Target angle `β ∈ (0, π]` of `(y, p y')` at `t = 1`.
pub fn right_target_angle(bc: &BoundaryAngles) -> f64 {
    if bc.essential_right() {
        PI
    } else {
        1f64.atan2(-bc.v_right())
    }
}

/// Number of negative directions of the pencil at this `λ`, read off the
/// terminal Prüfer angle: `#{k ≥ 0 : β + kπ < ψ(1)}`.
pub fn index_count(result: &ShootResult, bc: &BoundaryAngles) -> usize {
    let excess = (result.terminal_angle() - right_target_angle(bc)) / PI;
    if excess > 0.0 {
        excess.ceil() as usize
    } else {
        0
    }
}

/// Number of interior zeros of `Y₁`.
pub fn prufer_count(result: &ShootResult) -> usize {
    result.zeros.len()
}

pub fn integrate(problem: &Problem, lambda: f64, cfg: &ShootConfig) -> Result<ShootResult, ShootError> {
    shoot(problem, lambda, Direction::Forward, cfg)
}

/// Points in `(0, 1]` conjugate to 0: interior zeros of the left solution,
/// plus 1 when `Y₁(1)` vanishes.
pub fn conjugate_points(problem: &Problem, lambda: f64, cfg: &ShootConfig) -> Result<Vec<f64>, ShootError> {
    let res = shoot(problem, lambda, Direction::Forward, cfg)?;
    let mut pts = res.zero_locations();
    if res.endpoint_zero {
        pts.push(1.0);
    }
    Ok(pts)
}

/// Points in `[0, 1)` conjugate to 1, from the right solution.
pub fn right_conjugate_points(problem: &Problem, lambda: f64, cfg: &ShootConfig) -> Result<Vec<f64>, ShootError> {
    let res = shoot(problem, lambda, Direction::Backward, cfg)?;
    let mut pts = res.zero_locations();
    if res.endpoint_zero {
        pts.insert(0, 0.0);
    }
    Ok(pts)
}

/// Eigenfunction at an (approximate) eigenvalue, assembled from a forward
/// run on `[0, t_m]` and a backward run on `[t_m, 1]`, scaled to agree at
/// `t_m`. Each run is then only used where the solution does not decay in
/// its direction of integration, which keeps spurious growing modes out of
/// regions where the eigenfunction is exponentially small. `t_m` maximizes
/// the product of the two solution norms, i.e. sits near the peak of the
/// eigenfunction.
pub fn eigenfunction(problem: &Problem, lambda: f64, cfg: &ShootConfig) -> Result<ShootResult, ShootError> {
    let fwd = shoot(problem, lambda, Direction::Forward, cfg)?;
    let bwd = shoot(problem, lambda, Direction::Backward, cfg)?;
    let Some(t_m) = matching_point(&fwd, &bwd) else {
        return Ok(fwd);
    };
    let left = shoot_span(problem, lambda, Direction::Forward, t_m, cfg)?;
    let right = shoot_span(problem, lambda, Direction::Backward, t_m, cfg)?;
    Ok(splice(left, right, &fwd, cfg))
}

fn log_norms(r: &ShootResult) -> Vec<f64> {
    r.y1.iter().zip(&r.y2).map(|(a, b)| a.hypot(*b).ln() + r.log_scale).collect()
}

fn matching_point(fwd: &ShootResult, bwd: &ShootResult) -> Option<f64> {
    let lf = log_norms(fwd);
    let lb = log_norms(bwd);
    let interp = |t: f64| {
        let i = bwd.nodes.partition_point(|&x| x <= t).clamp(1, bwd.nodes.len() - 1) - 1;
        let (t0, t1) = (bwd.nodes[i], bwd.nodes[i + 1]);
        let s = if t1 > t0 { (t - t0) / (t1 - t0) } else { 0.0 };
        lb[i] + s * (lb[i + 1] - lb[i])
    };
    let last = fwd.nodes.len() - 1;
    (1..last)
        // keep away from zeros of Y₁ so the splice point is not a zero
        .filter(|&i| fwd.y1[i].abs() >= 0.1 * fwd.y1[i].hypot(fwd.y2[i]))
        .map(|i| (fwd.nodes[i], lf[i] + interp(fwd.nodes[i])))
        .max_by(|a, b| a.1.total_cmp(&b.1))
        .map(|(t, _)| t)
}

fn splice(left: ShootResult, right: ShootResult, full: &ShootResult, cfg: &ShootConfig) -> ShootResult {
    let n = left.nodes.len() - 1;
    let (fl, br) = ([left.y1[n], left.y2[n]], [right.y1[0], right.y2[0]]);
    // right values in units of the left stored scale
    let c = (fl[0] * br[0] + fl[1] * br[1]) / (br[0] * br[0] + br[1] * br[1]);
    let offset = PI * ((left.prufer[n] - right.prufer[0]) / PI).round();
    let mut out = left;
    out.nodes.extend_from_slice(&right.nodes[1..]);
    out.y1.extend(right.y1[1..].iter().map(|v| c * v));
    out.y2.extend(right.y2[1..].iter().map(|v| c * v));
    out.prufer.extend(right.prufer[1..].iter().map(|a| a + offset));
    out.slopes.extend(right.slopes.iter().map(|(a, b)| (c * a, c * b)));
    out.zeros.extend(right.zeros.iter().copied());
    let peak = out.y1.iter().zip(&out.y2).fold(0.0, |m: f64, (a, b)| m.max(a.hypot(*b)));
    out.endpoint_zero = out.y1.last().unwrap().abs() <= cfg.endpoint_tol * peak;
    out.residual = full.residual;
    out.omega1 = full.omega1;
    out
}

/// One smooth stretch: constant `p`, cubic `ω(a + s)`.
#[derive(Debug, Clone, Copy)]
struct Segment {
    a: f64,
    b: f64,
    p: f64,
    omega: [f64; 4],
}

impl Segment {
    #[inline]
    fn rhs(&self, t: f64, y: [f64; 2]) -> [f64; 2] {
        let s = t - self.a;
        let c = &self.omega;
        let w = ((c[3] * s + c[2]) * s + c[1]) * s + c[0];
        let u = (w * y[0] + y[1]) / self.p;
        [u, -w * u]
    }
}

fn segments(problem: &Problem, omega: &OmegaFunction) -> Vec<Segment> {
    let mut knots: Vec<f64> = omega.knots().iter().chain(&problem.p().breakpoints).copied().collect();
    knots.sort_by(f64::total_cmp);
    knots.dedup();
    knots
        .windows(2)
        .map(|w| {
            let mid = 0.5 * (w[0] + w[1]);
            Segment { a: w[0], b: w[1], p: problem.p().eval(mid), omega: omega.local_at(w[0]) }
        })
        .collect()
}

// Dormand–Prince 5(4) tableau
const C: [f64; 7] = [0.0, 1.0 / 5.0, 3.0 / 10.0, 4.0 / 5.0, 8.0 / 9.0, 1.0, 1.0];
const A: [[f64; 6]; 7] = [
    [0.0; 6],
    [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0, 0.0, 0.0],
    [9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0, 0.0],
    [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0],
];
const E: [f64; 7] = [
    71.0 / 57600.0,
    0.0,
    -71.0 / 16695.0,
    71.0 / 1920.0,
    -17253.0 / 339200.0,
    22.0 / 525.0,
    -1.0 / 40.0,
];

/// Index of the half-turn `[kπ, (k+1)π)` containing `2π·wraps + raw`.
/// Decided by the sign of `Y₁`, since `raw` may round onto `±π`.
fn half_turns(wraps: i64, raw: f64, y1: f64) -> i64 {
    let part = if y1 < 0.0 || (y1 == 0.0 && raw < 0.0) {
        -1
    } else if y1 == 0.0 && raw >= PI {
        1
    } else {
        0
    };
    2 * wraps + part
}

struct Step {
    y: [f64; 2],
    err: f64,
    d_start: f64,
    d_end: f64,
}

fn dopri_step(seg: &Segment, t: f64, y: [f64; 2], h: f64) -> Step {
    let mut k = [[0.0; 2]; 7];
    k[0] = seg.rhs(t, y);
    for i in 1..7 {
        let mut yi = y;
        for (j, kj) in k.iter().enumerate().take(i) {
            yi[0] += h * A[i][j] * kj[0];
            yi[1] += h * A[i][j] * kj[1];
        }
        k[i] = seg.rhs(t + C[i] * h, yi);
    }
    // the 7th stage is evaluated at the 5th-order solution
    let mut y5 = y;
    for j in 0..6 {
        y5[0] += h * A[6][j] * k[j][0];
        y5[1] += h * A[6][j] * k[j][1];
    }
    let mut e = [0.0; 2];
    for (j, kj) in k.iter().enumerate() {
        e[0] += h * E[j] * kj[0];
        e[1] += h * E[j] * kj[1];
    }
    Step { y: y5, err: e[0].hypot(e[1]), d_start: k[0][0], d_end: k[6][0] }
}

/// Reduces an angle to `[0, π)`.
#[inline]
fn half_turn(a: f64) -> f64 {
    let r = a.rem_euclid(PI);
    if r >= PI {
        0.0
    } else {
        r.max(0.0)
    }
}

/// Integrates over `[0, 1]` in the given direction.
///
/// The tracked angle is that of `(Y₁, ±Y₂)`, sign chosen so it is
/// nondecreasing in integration order; it starts in `[0, π)` and every
/// completed half-turn marks a zero of `Y₁`.
pub fn shoot(problem: &Problem, lambda: f64, direction: Direction, cfg: &ShootConfig) -> Result<ShootResult, ShootError> {
    let stop = match direction {
        Direction::Forward => 1.0,
        Direction::Backward => 0.0,
    };
    shoot_span(problem, lambda, direction, stop, cfg)
}

/// As [`shoot`], but stops at `stop` instead of the far endpoint.
fn shoot_span(
    problem: &Problem,
    lambda: f64,
    direction: Direction,
    stop: f64,
    cfg: &ShootConfig,
) -> Result<ShootResult, ShootError> {
    let omega = build_omega(problem.q(), problem.r(), lambda);
    let bc = problem.bc();
    let mut segs: Vec<Segment> = segments(problem, &omega)
        .into_iter()
        .filter_map(|mut seg| match direction {
            Direction::Forward if seg.a < stop => {
                seg.b = seg.b.min(stop);
                Some(seg)
            }
            Direction::Backward if seg.b > stop => {
                if seg.a < stop {
                    seg.a = stop;
                    seg.omega = omega.local_at(stop);
                }
                Some(seg)
            }
            _ => None,
        })
        .collect();
    let (dir, start) = match direction {
        Direction::Forward => (1.0, initial_state(&bc)),
        Direction::Backward => {
            segs.reverse();
            (-1.0, terminal_state(&bc, omega.omega1()))
        }
    };
    let t_start = if dir > 0.0 { 0.0 } else { 1.0 };

    let violation = |kind: Invariant, t: f64, detail: String| {
        VIOLATIONS.fetch_add(1, Ordering::Relaxed);
        ShootError::InvariantViolation { kind, t, lambda, detail }
    };

    let mut y = [start.0, start.1];
    let mut log_scale = 0.0;
    let n0 = y[0].hypot(y[1]);
    y = [y[0] / n0, y[1] / n0];
    log_scale += n0.ln();

    let raw = |y: [f64; 2]| y[0].atan2(dir * y[1]);
    let mut raw_prev = raw(y);
    let mut wraps: i64 = 0;
    let angle_of = |wraps: i64, raw: f64| 2.0 * PI * wraps as f64 + raw;

    let mut nodes = vec![t_start];
    let mut ys = vec![(y, log_scale)];
    let mut angles = vec![angle_of(wraps, raw_prev)];
    let mut slopes: Vec<(f64, f64, f64)> = Vec::new();
    let mut zeros: Vec<Zero> = Vec::new();

    let mut h_abs: f64 = 1e-2;
    let mut steps = 0usize;
    let mut accepted = 0u64;
    let mut t = t_start;
    for seg in &segs {
        let end = if dir > 0.0 { seg.b } else { seg.a };
        t = if dir > 0.0 { seg.a } else { seg.b };
        while (end - t) * dir > 0.0 {
            steps += 1;
            if steps > cfg.max_steps {
                return Err(ShootError::TooManySteps { t, lambda, max_steps: cfg.max_steps });
            }
            let remaining = (end - t).abs();
            let last = h_abs >= remaining;
            let h = dir * if last { remaining } else { h_abs };
            let step = dopri_step(seg, t, y, h);
            let ny = step.y[0].hypot(step.y[1]);
            let scale = cfg.atol + cfg.rtol * ny.max(y[0].hypot(y[1]));
            let err = step.err / scale;
            if !err.is_finite() || err > 1.0 {
                let fac = if err.is_finite() { (0.9 * err.powf(-0.2)).max(0.2) } else { 0.2 };
                h_abs = h.abs() * fac;
                if h_abs < 1e-14 {
                    return Err(ShootError::StepFailure { t, lambda });
                }
                continue;
            }
            let t_new = if last { end } else { t + h };
            if !(ny > 0.0) || !ny.is_finite() {
                return Err(violation(Invariant::NonVanishingState, t_new, format!("|Y| = {ny}")));
            }
            // the angle mod 2π is exact; steps turning by more than π are
            // split so the number of turns stays unambiguous
            let raw_new = raw(step.y);
            let mut advance = (raw_new - raw_prev).rem_euclid(2.0 * PI);
            if advance > 1.75 * PI {
                advance -= 2.0 * PI;
            }
            if advance > PI {
                h_abs = h.abs() * 0.5;
                if h_abs < 1e-14 {
                    return Err(ShootError::StepFailure { t, lambda });
                }
                continue;
            }
            let slack = 10.0 * (cfg.rtol + cfg.atol / ny.min(1.0));
            if advance < -slack {
                return Err(violation(
                    Invariant::PruferMonotone,
                    t_new,
                    format!("angle decreased by {:e}", -advance),
                ));
            }
            let new_wraps = wraps + ((raw_prev + advance - raw_new) / (2.0 * PI)).round() as i64;
            if half_turns(new_wraps, raw_new, step.y[0]) > half_turns(wraps, raw_prev, y[0]) {
                let z = locate_zero(seg, t, y, h, cfg.zero_tol);
                ZEROS_CHECKED.fetch_add(1, Ordering::Relaxed);
                if z.slope < 0.5 || !z.sign_change {
                    return Err(violation(
                        Invariant::SimpleZero,
                        z.location,
                        format!("slope {} sign change {}", z.slope, z.sign_change),
                    ));
                }
                zeros.push(z);
            }
            wraps = new_wraps;
            raw_prev = raw_new;
            accepted += 1;
            slopes.push((step.d_start, step.d_end, log_scale));
            y = step.y;
            t = t_new;
            nodes.push(t);
            ys.push((y, log_scale));
            angles.push(angle_of(wraps, raw_prev));
            if ny > cfg.renorm_threshold || ny < 1.0 / cfg.renorm_threshold {
                y = [y[0] / ny, y[1] / ny];
                log_scale += ny.ln();
            }
            if !last {
                h_abs = h.abs() * (0.9 * err.max(1e-10).powf(-0.2)).clamp(0.2, 5.0);
            }
        }
    }
    STEPS_CHECKED.fetch_add(accepted, Ordering::Relaxed);

    let t_end = t;
    let max_log = ys.iter().map(|(_, l)| *l).fold(f64::NEG_INFINITY, f64::max);
    let mut y1: Vec<f64> = ys.iter().map(|(v, l)| v[0] * (l - max_log).exp()).collect();
    let mut y2: Vec<f64> = ys.iter().map(|(v, l)| v[1] * (l - max_log).exp()).collect();
    let mut steps_d: Vec<(f64, f64)> =
        slopes.iter().map(|(a, b, l)| (a * (l - max_log).exp(), b * (l - max_log).exp())).collect();

    let (ye, le) = *ys.last().unwrap();
    // measured against the largest |Y| on the path, which sets the error scale
    let peak = y1.iter().zip(&y2).fold(0.0, |m: f64, (a, b)| m.max(a.hypot(*b)));
    let endpoint_zero = y1.last().unwrap().abs() <= cfg.endpoint_tol * peak;
    if endpoint_zero {
        // a crossing this close to the endpoint is the endpoint zero itself
        zeros.retain(|z| (z.location - t_end).abs() > 1e-6);
    }
    let true_end = |v: f64| v * le.exp();
    let residual = match direction {
        Direction::Forward => boundary_residual(true_end(ye[0]), true_end(ye[1]), omega.omega1(), &bc),
        Direction::Backward => left_residual(true_end(ye[0]), true_end(ye[1]), &bc),
    };

    let mut prufer = angles;
    if direction == Direction::Backward {
        nodes.reverse();
        y1.reverse();
        y2.reverse();
        steps_d.reverse();
        steps_d.iter_mut().for_each(|d| *d = (d.1, d.0));
        prufer.reverse();
        // tracked angle was that of (Y₁, -Y₂)
        prufer.iter_mut().for_each(|a| *a = PI - *a);
        zeros.reverse();
    }

    Ok(ShootResult {
        lambda,
        direction,
        nodes,
        y1,
        y2,
        prufer,
        zeros,
        endpoint_zero,
        omega1: omega.omega1(),
        log_scale: max_log,
        residual,
        slopes: steps_d,
    })
}

fn locate_zero(seg: &Segment, t: f64, y: [f64; 2], h: f64, tol: f64) -> Zero {
    let full = dopri_step(seg, t, y, h).y;
    let (mut lo, mut hi) = (0.0, h.abs());
    let (mut f_lo, mut f_hi) = (y[0], full[0]);
    let mut state_hi = full;
    if f_lo == 0.0 {
        hi = 0.0;
        state_hi = y;
    } else if f_hi == 0.0 {
        lo = hi;
    } else {
        while hi - lo > tol {
            let mid = 0.5 * (lo + hi);
            let s = dopri_step(seg, t, y, h.signum() * mid).y;
            if s[0] == 0.0 {
                lo = mid;
                hi = mid;
                state_hi = s;
                f_hi = 0.0;
                break;
            }
            if (s[0] < 0.0) == (f_lo < 0.0) {
                lo = mid;
                f_lo = s[0];
            } else {
                hi = mid;
                f_hi = s[0];
                state_hi = s;
            }
        }
    }
    let sign_change = f_lo * f_hi < 0.0 || (f_hi == 0.0 && y[0] * full[0] <= 0.0);
    let n = state_hi[0].hypot(state_hi[1]);
    Zero { location: t + h.signum() * 0.5 * (lo + hi), sign_change, slope: state_hi[1].abs() / n }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problem::{DistributionalCoefficient, PiecewiseConstant};

    fn cfg() -> ShootConfig {
        ShootConfig::default()
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
    fn initial_states() {
        assert_eq!(initial_state(&BoundaryAngles::new(0.0, 0.0)), (0.0, 1.0));
        assert_eq!(initial_state(&BoundaryAngles::new(PI, 0.0)), (1.0, 0.0));
        let (a, b) = initial_state(&BoundaryAngles::new(PI / 2.0, 0.0));
        assert_eq!(a, 1.0);
        assert!((b + 1.0).abs() < 1e-15);
        // (U - 1) Y₂ + i (U + 1) Y₁ = 0 with U = e^{iπ/2} = i
        let (re, im) = (-b - a, b + a);
        assert!(re.abs() < 1e-15 && im.abs() < 1e-15);
    }

    #[test]
    fn classical_first_eigenvalue_has_vanishing_residual() {
        let p = Problem::classical(BoundaryAngles::dirichlet());
        let res = integrate(&p, PI * PI, &cfg()).unwrap();
        let (y1, y2) = res.terminal_state();
        assert!(y1.abs() < 1e-8, "Y1(1)/|Y| = {y1}");
        assert!(y2 < 0.0);
        assert!(res.zeros.is_empty());
        assert!(res.endpoint_zero);
    }

    #[test]
    fn linear_solution_at_zero_lambda() {
        let p = Problem::classical(BoundaryAngles::dirichlet());
        let res = integrate(&p, 0.0, &cfg()).unwrap();
        assert!((res.residual - 1.0).abs() < 1e-12);
        for (t, y) in res.nodes.iter().zip(&res.y1) {
            assert!((y * res.log_scale.exp() - t).abs() < 1e-12);
        }
    }

    #[test]
    fn point_mass_breaks_slope() {
        // y = t on [0, 1/2], slope -4 after; y(1) = -3/2, zero at 5/8
        let res = integrate(&delta(), 0.0, &cfg()).unwrap();
        assert!((res.residual + 1.5).abs() < 1e-10);
        assert_eq!(res.zeros.len(), 1);
        assert!((res.zeros[0].location - 0.625).abs() < 1e-9);
        let s = res.log_scale.exp();
        assert!((res.y1_at(0.75) * s + 0.5).abs() < 1e-9);
        assert!((res.y1_at(0.25) * s - 0.25).abs() < 1e-9);
    }

    #[test]
    fn zero_counts() {
        let c = cfg();
        let dir = Problem::classical(BoundaryAngles::dirichlet());
        let res = integrate(&dir, 9.0 * PI * PI, &c).unwrap();
        assert_eq!(prufer_count(&res), 2);
        let z = res.zero_locations();
        assert!((z[0] - 1.0 / 3.0).abs() < 1e-8 && (z[1] - 2.0 / 3.0).abs() < 1e-8);
        assert_eq!(prufer_count(&integrate(&dir, -500.0, &c).unwrap()), 0);
        let neu = Problem::classical(BoundaryAngles::neumann());
        let res = integrate(&neu, PI * PI, &c).unwrap();
        assert_eq!(prufer_count(&res), 1);
        assert!((res.zeros[0].location - 0.5).abs() < 1e-8);
    }

    #[test]
    fn neumann_constant_solution() {
        let neu = Problem::classical(BoundaryAngles::neumann());
        let res = integrate(&neu, 0.0, &cfg()).unwrap();
        assert_eq!(res.residual, 0.0);
        assert!(res.y1.iter().all(|&v| v == 1.0));
    }

    #[test]
    fn conjugate_point_sets() {
        let c = cfg();
        let dir = Problem::classical(BoundaryAngles::dirichlet());
        let pts = conjugate_points(&dir, 4.0 * PI * PI, &c).unwrap();
        assert_eq!(pts.len(), 2);
        assert!((pts[0] - 0.5).abs() < 1e-9 && pts[1] == 1.0);
        assert!(conjugate_points(&dir, -3.0, &c).unwrap().is_empty());
        let right = right_conjugate_points(&dir, 4.0 * PI * PI, &c).unwrap();
        assert_eq!(right.len(), 2);
        assert!(right[0] == 0.0 && (right[1] - 0.5).abs() < 1e-9);
        assert!(right_conjugate_points(&dir, -3.0, &c).unwrap().is_empty());
        let pts = conjugate_points(&delta(), 0.0, &c).unwrap();
        assert_eq!(pts.len(), 1);
        assert!((pts[0] - 0.625).abs() < 1e-9);
    }

    #[test]
    fn residual_conventions() {
        let c = cfg();
        let dir = Problem::classical(BoundaryAngles::dirichlet());
        assert!(integrate(&dir, PI * PI, &c).unwrap().residual.abs() < 1e-8);
        assert!((integrate(&dir, 0.0, &c).unwrap().residual - 1.0).abs() < 1e-12);
    }

    #[test]
    fn prufer_is_monotone_and_index_counts() {
        let c = cfg();
        let dir = Problem::classical(BoundaryAngles::dirichlet());
        for lambda in [-50.0, 5.0, 2.5 * PI * PI, 30.0, 400.0] {
            let res = integrate(&dir, lambda, &c).unwrap();
            assert!(res.prufer.windows(2).all(|w| w[1] >= w[0] - 1e-9));
            let expected = (1..20).filter(|n| ((*n as f64) * PI).powi(2) < lambda).count();
            assert_eq!(index_count(&res, &dir.bc()), expected, "λ = {lambda}");
        }
    }

    #[test]
    fn backward_prufer_is_monotone_in_t() {
        let p = Problem::classical(BoundaryAngles::new(PI / 3.0, -PI / 2.0));
        let res = shoot(&p, 123.0, Direction::Backward, &cfg()).unwrap();
        assert!(res.nodes.windows(2).all(|w| w[1] > w[0]));
        assert!(res.prufer.windows(2).all(|w| w[1] >= w[0] - 1e-9));
    }

    #[test]
    fn large_growth_is_renormalized() {
        let p = Problem::classical(BoundaryAngles::neumann());
        let res = integrate(&p, -1e5, &cfg()).unwrap();
        assert!(res.log_scale > 100.0);
        assert!(res.y1.iter().all(|v| v.is_finite()));
        assert!(res.zeros.is_empty());
        assert!(res.residual > 0.0);
    }
}
