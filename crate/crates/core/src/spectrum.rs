//! Eigenvalues on both sides of a positivity point.
//!
//! At a point `ξ` where the pencil form is positive definite, the number
//! of negative directions `N(λ)` of the form is a step function that
//! grows by one at every eigenvalue as `λ` moves away from `ξ` in either
//! direction. Eigenvalues are indexed outward: `λ₁ < λ₂ < …` to the right
//! of `ξ` and `λ₋₁ > λ₋₂ > …` to the left. The `n`-th eigenfunction has
//! exactly `|n| - 1` interior zeros.
//!
//! `N(λ)` is read from the shooting angle; every refined eigenvalue is
//! cross-checked against the discrete pencil.

use std::io::{self, Write};

use thiserror::Error;

use crate::forms::{assemble, build_mesh, FormError, FormPair, FormSet};
use crate::linalg::Inertia;
use crate::par;
use crate::problem::Problem;
use crate::shooting::{eigenfunction, index_count, integrate, prufer_count, ShootConfig, ShootError, ShootResult};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpectrumConfig {
    pub shoot: ShootConfig,
    /// Interior node target of the discretization used for certificates,
    /// inertia checks and the second eigenvalue estimate.
    pub mesh_n: usize,
    /// Eigenvalues requested on each side of `ξ`.
    pub n_max: usize,
    /// Relative bisection tolerance, measured against `max(1, |λ|)`.
    pub eig_rtol: f64,
    /// A side is declared terminated if no further eigenvalue appears
    /// within this distance of `ξ`.
    pub horizon: f64,
    /// Largest `|ξ|` tried by [`find_positivity_shift`].
    pub xi_cap: f64,
    /// Shooting and discrete eigenvalues agree when their difference is
    /// below `agreement_rtol · max(1, |λ|)`.
    pub agreement_rtol: f64,
    pub parallel: bool,
}

impl Default for SpectrumConfig {
    fn default() -> Self {
        Self {
            shoot: ShootConfig::default(),
            mesh_n: 400,
            n_max: 5,
            eig_rtol: 1e-10,
            horizon: 1e5,
            xi_cap: 1e9,
            agreement_rtol: 1e-3,
            parallel: true,
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SpectrumError {
    #[error("no positivity point found with |ξ| ≤ {cap}")]
    NoPositivityFound { cap: f64 },
    #[error("the form is not positive at ξ = {xi}")]
    NotPositive { xi: f64 },
    #[error("could not isolate eigenvalue {n}: {reason}")]
    Isolation { n: i64, reason: String },
    #[error(transparent)]
    Shoot(#[from] ShootError),
    #[error(transparent)]
    Form(#[from] FormError),
}

/// Evidence that the form is positive definite at `xi`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PositivityCertificate {
    pub xi: f64,
    /// Inertia of the discrete pencil at `xi`.
    pub fem: Inertia,
    /// Interior zeros of the shooting solution at `xi`; `None` if the
    /// discrete check already failed.
    pub zeros: Option<usize>,
    pub residual: Option<f64>,
    pub passed: bool,
}

/// Checks positivity at `xi` with both methods: the discrete pencil must
/// be positive definite, and the shooting solution must have no interior
/// zero and a positive boundary residual (the sign it has as `λ → -∞`).
pub fn check_positivity(problem: &Problem, xi: f64, cfg: &SpectrumConfig) -> Result<PositivityCertificate, SpectrumError> {
    let forms = assemble(problem, &build_mesh(problem, cfg.mesh_n))?;
    check_positivity_with(problem, &forms, xi, cfg)
}

fn check_positivity_with(
    problem: &Problem,
    forms: &FormSet,
    xi: f64,
    cfg: &SpectrumConfig,
) -> Result<PositivityCertificate, SpectrumError> {
    let fem = forms.inertia(xi);
    if !fem.is_positive_definite() {
        return Ok(PositivityCertificate { xi, fem, zeros: None, residual: None, passed: false });
    }
    let res = integrate(problem, xi, &cfg.shoot)?;
    let zeros = prufer_count(&res);
    let passed = zeros == 0 && res.residual > 0.0 && index_count(&res, &problem.bc()) == 0;
    Ok(PositivityCertificate { xi, fem, zeros: Some(zeros), residual: Some(res.residual), passed })
}

/// Tries `ξ = -1, -2, -4, …` and returns the first certified point.
pub fn find_positivity_shift(problem: &Problem, cfg: &SpectrumConfig) -> Result<PositivityCertificate, SpectrumError> {
    let forms = assemble(problem, &build_mesh(problem, cfg.mesh_n))?;
    let mut xi: f64 = -1.0;
    while xi.abs() <= cfg.xi_cap {
        let cert = check_positivity_with(problem, &forms, xi, cfg)?;
        if cert.passed {
            return Ok(cert);
        }
        xi *= 2.0;
    }
    Err(SpectrumError::NoPositivityFound { cap: cfg.xi_cap })
}

/// Number of negative directions of the form at `λ`, from shooting.
pub fn count_at(problem: &Problem, lambda: f64, cfg: &ShootConfig) -> Result<usize, ShootError> {
    Ok(index_count(&integrate(problem, lambda, cfg)?, &problem.bc()))
}

/// `[lo, hi]` containing eigenvalue `n` and no other.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Bracket {
    pub n: i64,
    pub lo: f64,
    pub hi: f64,
}

impl Bracket {
    /// The end closer to `ξ`, where the count is `|n| - 1`.
    pub fn inner(&self) -> f64 {
        if self.n > 0 {
            self.lo
        } else {
            self.hi
        }
    }

    pub fn outer(&self) -> f64 {
        if self.n > 0 {
            self.hi
        } else {
            self.lo
        }
    }
}

/// Brackets found on one side of `ξ`.
#[derive(Debug, Clone, PartialEq)]
pub struct SideBrackets {
    pub brackets: Vec<Bracket>,
    /// The sequence stopped before `n_max` within the horizon.
    pub terminated: bool,
}

/// Scans outward from `xi` on the side `sign` (`+1` or `-1`) until
/// `n_max` eigenvalues are bracketed or the horizon is reached. The count
/// is exactly `|n| - 1` at the inner end and `|n|` at the outer end of
/// every bracket.
pub fn bracket_side(problem: &Problem, xi: f64, sign: i64, cfg: &SpectrumConfig) -> Result<SideBrackets, SpectrumError> {
    let s = sign.signum() as f64;
    let count = |d: f64| count_at(problem, xi + s * d, &cfg.shoot);
    let base = (xi.abs() / 10.0).max(1.0);
    let to_bracket = |d_in: f64, d_out: f64, n: usize| {
        let (a, b) = (xi + s * d_in, xi + s * d_out);
        Bracket { n: sign * n as i64, lo: a.min(b), hi: a.max(b) }
    };
    let mut out = Vec::new();
    let mut inner = 0.0;
    for n in 1..=cfg.n_max {
        let mut step = base;
        let mut outer;
        loop {
            outer = inner + step;
            if outer > cfg.horizon {
                return Ok(SideBrackets { brackets: out, terminated: true });
            }
            if count(outer)? >= n {
                break;
            }
            step *= 2.0;
        }
        // pull the outer end in until exactly one eigenvalue remains
        let mut c_out = count(outer)?;
        let mut low = inner;
        let mut guard = 0;
        while c_out > n {
            let mid = 0.5 * (low + outer);
            let c = count(mid)?;
            if c >= n {
                outer = mid;
                c_out = c;
            } else {
                low = mid;
            }
            guard += 1;
            if guard > 200 {
                return Err(SpectrumError::Isolation { n: sign * n as i64, reason: "eigenvalues not separated".into() });
            }
        }
        out.push(to_bracket(inner, outer, n));
        inner = outer;
    }
    Ok(SideBrackets { brackets: out, terminated: false })
}

/// Brackets for `n = ±1 … ±n_max`, negative side first.
pub fn bracket_eigenvalues(problem: &Problem, xi: f64, cfg: &SpectrumConfig) -> Result<[SideBrackets; 2], SpectrumError> {
    let sides = par::map(&[-1i64, 1], cfg.parallel, |&sign| bracket_side(problem, xi, sign, cfg));
    let mut it = sides.into_iter();
    Ok([it.next().unwrap()?, it.next().unwrap()?])
}

#[derive(Debug, Clone, PartialEq)]
pub struct EigenvalueRecord {
    pub index: i64,
    pub lambda: f64,
    /// Normalized to `max |y| = 1`, first nonzero value positive.
    pub eigenfunction: ShootResult,
    pub zero_count: usize,
    /// Negative count of the discrete pencil at `lambda`.
    pub inertia_at_lambda: usize,
    /// Discrete eigenvalue with the same index, if found.
    pub fem_lambda: Option<f64>,
    /// Richardson extrapolation from the mesh and its refinement; this is
    /// what the agreement flag compares against.
    pub fem_extrapolated: Option<f64>,
    pub method_agreement: bool,
}

/// Bisection on the sign of the boundary residual, falling back to the
/// count when the ends of the bracket share a sign.
pub fn refine_eigenvalue(
    problem: &Problem,
    bracket: Bracket,
    xi: f64,
    forms: &FormPair,
    cfg: &SpectrumConfig,
) -> Result<EigenvalueRecord, SpectrumError> {
    let target = bracket.n.unsigned_abs() as usize;
    let residual = |l: f64| integrate(problem, l, &cfg.shoot).map(|r| r.residual);
    let (mut lo, mut hi) = (bracket.lo, bracket.hi);
    let done = |lo: f64, hi: f64| hi - lo <= cfg.eig_rtol * lo.abs().max(hi.abs()).max(1.0);
    let mut r_lo = residual(lo)?;
    let mut r_hi = residual(hi)?;
    let mut shrinks = 0;
    while !done(lo, hi) {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if r_lo.signum() == r_hi.signum() {
            // no sign change: shrink with the count, which is exact
            shrinks += 1;
            if shrinks > 200 {
                return Err(SpectrumError::Isolation { n: bracket.n, reason: "tangential residual root".into() });
            }
            let c = count_at(problem, mid, &cfg.shoot)?;
            let mid_is_outer = c >= target;
            if mid_is_outer == (bracket.n > 0) {
                hi = mid;
                r_hi = residual(hi)?;
            } else {
                lo = mid;
                r_lo = residual(lo)?;
            }
            continue;
        }
        let r = residual(mid)?;
        if r == 0.0 {
            lo = mid;
            hi = mid;
            break;
        }
        if r.signum() == r_lo.signum() {
            lo = mid;
            r_lo = r;
        } else {
            hi = mid;
            r_hi = r;
        }
    }
    // one regula falsi step on the final bracket
    let lambda = if lo < hi && r_lo.signum() != r_hi.signum() && r_lo.is_finite() && r_hi.is_finite() {
        (lo - r_lo * (hi - lo) / (r_hi - r_lo)).clamp(lo, hi)
    } else {
        0.5 * (lo + hi)
    };
    let mut eigenfunction = eigenfunction(problem, lambda, &cfg.shoot)?;
    eigenfunction.normalize();
    let zero_count = prufer_count(&eigenfunction);
    let inertia_at_lambda = forms.coarse.inertia(lambda).negative;
    let estimate = forms.eigenvalue(xi, bracket.n, bracket.outer(), 4.0 * cfg.horizon.max((lambda - xi).abs()));
    let fem_lambda = estimate.map(|e| e.0);
    let fem_extrapolated = estimate.map(|e| e.1);
    let method_agreement =
        fem_extrapolated.is_some_and(|f| (f - lambda).abs() <= cfg.agreement_rtol * lambda.abs().max(1.0));
    Ok(EigenvalueRecord {
        index: bracket.n,
        lambda,
        eigenfunction,
        zero_count,
        inertia_at_lambda,
        fem_lambda,
        fem_extrapolated,
        method_agreement,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpectrumReport {
    pub xi: f64,
    pub certificate: PositivityCertificate,
    /// Sorted by `lambda`.
    pub records: Vec<EigenvalueRecord>,
    pub left_terminated: bool,
    pub right_terminated: bool,
}

impl SpectrumReport {
    pub fn record(&self, n: i64) -> Option<&EigenvalueRecord> {
        self.records.iter().find(|r| r.index == n)
    }

    pub fn lambdas(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.lambda).collect()
    }

    /// Records on the side of `sign`, ordered by `|n|`.
    pub fn side(&self, sign: i64) -> Vec<&EigenvalueRecord> {
        let mut v: Vec<_> = self.records.iter().filter(|r| r.index.signum() == sign.signum()).collect();
        v.sort_by_key(|r| r.index.abs());
        v
    }

    /// CSV with columns `n,lambda,zero_count,inertia,method_agreement`,
    /// preceded by a `# xi=` header line.
    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "# xi={}", self.xi)?;
        writeln!(w, "n,lambda,zero_count,inertia,method_agreement")?;
        for r in &self.records {
            writeln!(w, "{},{},{},{},{}", r.index, r.lambda, r.zero_count, r.inertia_at_lambda, r.method_agreement)?;
        }
        Ok(())
    }

    pub fn write_text<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "positivity point xi = {}", self.xi)?;
        for r in &self.records {
            let fem = r.fem_lambda.map_or("-".to_string(), |f| format!("{f:.10e}"));
            writeln!(
                w,
                "n = {:>4}  lambda = {:>22.15e}  zeros = {:>3}  inertia = {:>3}  fem = {}  agree = {}",
                r.index, r.lambda, r.zero_count, r.inertia_at_lambda, fem, r.method_agreement
            )?;
        }
        if self.left_terminated {
            writeln!(w, "left sequence terminated within the scan horizon")?;
        }
        if self.right_terminated {
            writeln!(w, "right sequence terminated within the scan horizon")?;
        }
        Ok(())
    }
}

/// CSV with columns `t,y,quasi_derivative` for a normalized eigenfunction.
pub fn write_eigenfunction_csv<W: Write>(record: &EigenvalueRecord, mut w: W) -> io::Result<()> {
    let f = &record.eigenfunction;
    writeln!(w, "t,y,quasi_derivative")?;
    for i in 0..f.nodes.len() {
        writeln!(w, "{},{},{}", f.nodes[i], f.y1[i], f.y2[i])?;
    }
    Ok(())
}

/// Full pipeline: positivity point (given or searched), bracketing, and
/// parallel refinement.
pub fn solve(problem: &Problem, xi: Option<f64>, cfg: &SpectrumConfig) -> Result<SpectrumReport, SpectrumError> {
    let forms = FormPair::new(problem, &build_mesh(problem, cfg.mesh_n))?;
    let certificate = match xi {
        Some(x) => {
            let c = check_positivity_with(problem, &forms.coarse, x, cfg)?;
            if !c.passed {
                return Err(SpectrumError::NotPositive { xi: x });
            }
            c
        }
        None => find_positivity_shift(problem, cfg)?,
    };
    let xi = certificate.xi;
    let [left, right] = bracket_eigenvalues(problem, xi, cfg)?;
    let all: Vec<Bracket> = left.brackets.iter().chain(&right.brackets).copied().collect();
    let refined = par::map(&all, cfg.parallel, |b| refine_eigenvalue(problem, *b, xi, &forms, cfg));
    let mut records = refined.into_iter().collect::<Result<Vec<_>, _>>()?;
    records.sort_by(|a, b| a.lambda.total_cmp(&b.lambda));
    Ok(SpectrumReport {
        xi,
        certificate,
        records,
        left_terminated: left.terminated,
        right_terminated: right.terminated,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CheckKind {
    ZeroCount,
    SignChange,
    Inertia,
    Side,
    Ordering,
    Interlacing,
    MethodAgreement,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub kind: CheckKind,
    pub index: i64,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct VerificationReport {
    pub checks: Vec<Check>,
}

impl VerificationReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn failures(&self) -> impl Iterator<Item = &Check> {
        self.checks.iter().filter(|c| !c.passed)
    }

    pub fn kind_passed(&self, kind: CheckKind) -> bool {
        self.checks.iter().filter(|c| c.kind == kind).all(|c| c.passed)
    }

    pub fn write_text<W: Write>(&self, mut w: W) -> io::Result<()> {
        for c in &self.checks {
            let tag = if c.passed { "PASS" } else { "FAIL" };
            writeln!(w, "[{tag}] {:?} n={}: {}", c.kind, c.index, c.detail)?;
        }
        let total = self.checks.len();
        let failed = self.failures().count();
        writeln!(w, "{} of {} checks passed", total - failed, total)
    }
}

/// Checks zero counts, sign changes, the index formula, ordering and
/// interlacing of consecutive eigenfunctions on each side.
pub fn verify_oscillation(report: &SpectrumReport, eig_rtol: f64) -> VerificationReport {
    let mut checks = Vec::new();
    let mut push = |kind, index, passed, detail: String| checks.push(Check { kind, index, passed, detail });
    for r in &report.records {
        let expected = r.index.unsigned_abs() as usize - 1;
        let zeros = r.eigenfunction.zero_locations();
        push(CheckKind::ZeroCount, r.index, r.zero_count == expected && zeros.len() == expected,
            format!("{} zeros, expected {expected}", zeros.len()));
        let bad: Vec<f64> = r.eigenfunction.zeros.iter().filter(|z| !z.sign_change).map(|z| z.location).collect();
        push(CheckKind::SignChange, r.index, bad.is_empty(), format!("zeros without sign change: {bad:?}"));
        push(CheckKind::Inertia, r.index, r.inertia_at_lambda == expected,
            format!("inertia {}, expected {expected}", r.inertia_at_lambda));
        let side_ok = (r.lambda - report.xi).signum() as i64 == r.index.signum();
        push(CheckKind::Side, r.index, side_ok, format!("lambda {} vs xi {}", r.lambda, report.xi));
        push(CheckKind::MethodAgreement, r.index, r.method_agreement,
            format!("shooting {} discrete {:?} extrapolated {:?}", r.lambda, r.fem_lambda, r.fem_extrapolated));
    }
    for w in report.records.windows(2) {
        let (a, b) = (w[0].lambda, w[1].lambda);
        let gap = 10.0 * eig_rtol * a.abs().max(b.abs()).max(1.0);
        push(CheckKind::Ordering, w[1].index, b - a > gap, format!("{a} < {b}"));
    }
    for sign in [-1, 1] {
        let side = report.side(sign);
        for w in side.windows(2) {
            let (lower, upper) = (w[0], w[1]);
            let missing = interlacing_gaps(&lower.eigenfunction.zero_locations(), &upper.eigenfunction.zero_locations());
            push(CheckKind::Interlacing, upper.index, missing.is_empty(),
                if missing.is_empty() {
                    format!("zeros of y_{} separate those of y_{}", upper.index, lower.index)
                } else {
                    format!("no zero of y_{} in {missing:?}", upper.index)
                });
        }
    }
    VerificationReport { checks }
}

/// Intervals between consecutive points of `{0} ∪ zeros ∪ {1}` that
/// contain no point of `next`.
pub fn interlacing_gaps(zeros: &[f64], next: &[f64]) -> Vec<(f64, f64)> {
    let mut cuts = vec![0.0];
    cuts.extend_from_slice(zeros);
    cuts.push(1.0);
    cuts.windows(2)
        .filter(|w| !next.iter().any(|&z| w[0] < z && z < w[1]))
        .map(|w| (w[0], w[1]))
        .collect()
}
