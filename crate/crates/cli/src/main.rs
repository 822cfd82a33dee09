//! `slosc`: spectra, inertia scans and oscillation checks for
//! Sturm–Liouville problems read from JSON files.

use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::str::FromStr;

use clap::{Args, Parser, Subcommand, ValueEnum};

use slosc::forms::{assemble, build_mesh, write_inertia_csv, Mesh};
use slosc::schema::parse_problem;
use slosc::shooting::{conjugate_points, ShootConfig};
use slosc::spectrum::{solve, verify_oscillation, write_eigenfunction_csv, SpectrumConfig};
use slosc::{par, Problem};

const EXIT_VERIFY: u8 = 1;
const EXIT_INPUT: u8 = 2;
const EXIT_NUMERIC: u8 = 3;

#[derive(Parser, Debug)]
#[command(name = "slosc", version, about = "Oscillation and spectral analysis of Sturm-Liouville problems")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Eigenvalues on both sides of the positivity point.
    Solve(Common),
    /// Negative/zero/positive counts over a λ grid, or over x at fixed λ.
    Inertia(Common),
    /// Points conjugate to 0 at a fixed λ.
    Conjugate(Common),
    /// Discrete eigencurves Λ₁..Λₙ over a λ grid.
    Eigencurves(Common),
    /// Solve, then check zero counts, index formula and interlacing.
    Verify(Common),
}

#[derive(Args, Debug, Clone)]
struct Common {
    /// Problem file (JSON).
    problem: PathBuf,
    #[arg(long, default_value_t = 5)]
    n_max: usize,
    /// Positivity point, or `auto` to search for one.
    #[arg(long, default_value = "auto")]
    xi: Xi,
    #[arg(long, default_value_t = 400)]
    mesh_n: usize,
    /// Relative local tolerance of the ODE integrator.
    #[arg(long, default_value_t = 1e-10)]
    tol_ode: f64,
    /// Relative eigenvalue bisection tolerance.
    #[arg(long, default_value_t = 1e-10)]
    tol_eig: f64,
    #[arg(long, default_value_t = -10.0, allow_negative_numbers = true)]
    lambda_min: f64,
    #[arg(long, default_value_t = 100.0, allow_negative_numbers = true)]
    lambda_max: f64,
    #[arg(long, default_value_t = 111)]
    lambda_steps: usize,
    /// Fixed λ for `conjugate` and for x-scans with `inertia`.
    #[arg(long, allow_negative_numbers = true)]
    lambda: Option<f64>,
    /// Number of x grid points for `inertia --lambda`.
    #[arg(long, default_value_t = 100)]
    x_steps: usize,
    /// Write one `t,y,quasi_derivative` file per eigenfunction here.
    #[arg(long)]
    eigenfunction_dir: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Format::Csv)]
    format: Format,
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Xi {
    Auto,
    Value(f64),
}

impl FromStr for Xi {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s.eq_ignore_ascii_case("auto") {
            return Ok(Xi::Auto);
        }
        match s.parse::<f64>() {
            Ok(v) if v.is_finite() => Ok(Xi::Value(v)),
            _ => Err(format!("expected `auto` or a finite number, got `{s}`")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Csv,
    Text,
}

/// Validated settings for one invocation.
#[derive(Debug, Clone)]
struct RunConfig {
    common: Common,
    spectrum: SpectrumConfig,
}

enum Failure {
    Input(String),
    Numeric(String),
    Verify,
}

impl RunConfig {
    fn new(common: Common) -> Result<Self, Failure> {
        let c = &common;
        if c.n_max < 1 {
            return Err(Failure::Input("--n-max must be at least 1".into()));
        }
        if c.mesh_n < 8 {
            return Err(Failure::Input("--mesh-n must be at least 8".into()));
        }
        for (name, v) in [("--tol-ode", c.tol_ode), ("--tol-eig", c.tol_eig)] {
            if !(v > 0.0 && v < 1.0) {
                return Err(Failure::Input(format!("{name} must lie in (0, 1)")));
            }
        }
        if !(c.lambda_min.is_finite() && c.lambda_max.is_finite() && c.lambda_min <= c.lambda_max) {
            return Err(Failure::Input("--lambda-min must not exceed --lambda-max".into()));
        }
        if c.lambda_steps < 1 || c.x_steps < 1 {
            return Err(Failure::Input("grid sizes must be positive".into()));
        }
        let shoot = ShootConfig { rtol: c.tol_ode, atol: c.tol_ode * 1e-2, ..ShootConfig::default() };
        let spectrum =
            SpectrumConfig { shoot, mesh_n: c.mesh_n, n_max: c.n_max, eig_rtol: c.tol_eig, ..SpectrumConfig::default() };
        Ok(Self { common, spectrum })
    }

    fn xi(&self) -> Option<f64> {
        match self.common.xi {
            Xi::Auto => None,
            Xi::Value(v) => Some(v),
        }
    }

    fn lambda_grid(&self) -> Vec<f64> {
        let c = &self.common;
        if c.lambda_steps == 1 {
            return vec![c.lambda_min];
        }
        let h = (c.lambda_max - c.lambda_min) / (c.lambda_steps - 1) as f64;
        (0..c.lambda_steps).map(|i| if i + 1 == c.lambda_steps { c.lambda_max } else { c.lambda_min + h * i as f64 }).collect()
    }

    fn fixed_lambda(&self) -> Result<f64, Failure> {
        self.common
            .lambda
            .filter(|l| l.is_finite())
            .ok_or_else(|| Failure::Input("this command needs --lambda".into()))
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    par::init_threads();
    let (name, common) = match cli.command {
        Command::Solve(c) => ("solve", c),
        Command::Inertia(c) => ("inertia", c),
        Command::Conjugate(c) => ("conjugate", c),
        Command::Eigencurves(c) => ("eigencurves", c),
        Command::Verify(c) => ("verify", c),
    };
    match RunConfig::new(common).and_then(|cfg| run(name, &cfg)) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Verify) => ExitCode::from(EXIT_VERIFY),
        Err(Failure::Input(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(EXIT_INPUT)
        }
        Err(Failure::Numeric(msg)) => {
            eprintln!("numerical failure: {msg}");
            ExitCode::from(EXIT_NUMERIC)
        }
    }
}

fn numeric(e: impl std::fmt::Display) -> Failure {
    Failure::Numeric(e.to_string())
}

fn load(path: &Path) -> Result<Problem, Failure> {
    let text = fs::read_to_string(path).map_err(|e| Failure::Input(format!("{}: {e}", path.display())))?;
    parse_problem(&text).map_err(|e| Failure::Input(format!("{}: {e}", path.display())))
}

fn run(name: &str, cfg: &RunConfig) -> Result<(), Failure> {
    let problem = load(&cfg.common.problem)?;
    let mut buf = Vec::new();
    let status = match name {
        "solve" => cmd_solve(&problem, cfg, &mut buf),
        "inertia" => cmd_inertia(&problem, cfg, &mut buf),
        "conjugate" => cmd_conjugate(&problem, cfg, &mut buf),
        "eigencurves" => cmd_eigencurves(&problem, cfg, &mut buf),
        _ => cmd_verify(&problem, cfg, &mut buf),
    };
    // a failed verification still writes its report
    if let Err(Failure::Input(_) | Failure::Numeric(_)) = status {
        return status;
    }
    emit(cfg, &buf)?;
    status
}

fn emit(cfg: &RunConfig, bytes: &[u8]) -> Result<(), Failure> {
    match &cfg.common.out {
        Some(path) => fs::write(path, bytes).map_err(|e| Failure::Input(format!("{}: {e}", path.display()))),
        None => io::stdout().write_all(bytes).map_err(numeric),
    }
}

fn io_err(e: io::Error) -> Failure {
    Failure::Numeric(e.to_string())
}

fn cmd_solve(problem: &Problem, cfg: &RunConfig, out: &mut Vec<u8>) -> Result<(), Failure> {
    let report = solve(problem, cfg.xi(), &cfg.spectrum).map_err(numeric)?;
    match cfg.common.format {
        Format::Csv => report.write_csv(&mut *out).map_err(io_err)?,
        Format::Text => report.write_text(&mut *out).map_err(io_err)?,
    }
    if let Some(dir) = &cfg.common.eigenfunction_dir {
        fs::create_dir_all(dir).map_err(|e| Failure::Input(format!("{}: {e}", dir.display())))?;
        for r in &report.records {
            let path = dir.join(format!("eigenfunction_{}.csv", r.index));
            let mut bytes = Vec::new();
            write_eigenfunction_csv(r, &mut bytes).map_err(io_err)?;
            fs::write(&path, bytes).map_err(|e| Failure::Input(format!("{}: {e}", path.display())))?;
        }
    }
    Ok(())
}

fn write_table(out: &mut Vec<u8>, format: Format, header: &[String], rows: &[Vec<String>]) -> Result<(), Failure> {
    let sep = match format {
        Format::Csv => ",",
        Format::Text => "  ",
    };
    if format == Format::Text {
        let widths: Vec<usize> = (0..header.len())
            .map(|j| rows.iter().map(|r| r[j].len()).chain([header[j].len()]).max().unwrap_or(0))
            .collect();
        let pad = |cells: &[String]| {
            cells.iter().zip(&widths).map(|(c, w)| format!("{c:>w$}")).collect::<Vec<_>>().join(sep)
        };
        writeln!(out, "{}", pad(header)).map_err(io_err)?;
        for r in rows {
            writeln!(out, "{}", pad(r)).map_err(io_err)?;
        }
    } else {
        writeln!(out, "{}", header.join(sep)).map_err(io_err)?;
        for r in rows {
            writeln!(out, "{}", r.join(sep)).map_err(io_err)?;
        }
    }
    Ok(())
}

fn cmd_inertia(problem: &Problem, cfg: &RunConfig, out: &mut Vec<u8>) -> Result<(), Failure> {
    let mut mesh = build_mesh(problem, cfg.common.mesh_n);
    let parallel = cfg.spectrum.parallel;
    let (label, rows) = match cfg.common.lambda {
        Some(lambda) if lambda.is_finite() => {
            let n = cfg.common.x_steps;
            let xs: Vec<f64> = (1..=n).map(|k| k as f64 / n as f64).collect();
            for &x in &xs {
                mesh = mesh.with_node(x).map_err(numeric)?;
            }
            let forms = assemble(problem, &mesh).map_err(numeric)?;
            writeln!(out, "# lambda={lambda}").map_err(io_err)?;
            let rows = par::map(&xs, parallel, |&x| forms.restricted_inertia(lambda, x).map(|i| (x, i)));
            ("x", rows.into_iter().collect::<Result<Vec<_>, _>>().map_err(numeric)?)
        }
        Some(_) => return Err(Failure::Input("--lambda must be finite".into())),
        None => {
            let forms = assemble(problem, &mesh).map_err(numeric)?;
            let grid = cfg.lambda_grid();
            ("lambda", par::map(&grid, parallel, |&l| (l, forms.inertia(l))))
        }
    };
    match cfg.common.format {
        Format::Csv => write_inertia_csv(&mut *out, label, &rows).map_err(io_err),
        Format::Text => {
            let header = [label, "negative", "zero", "positive"].map(String::from);
            let cells: Vec<Vec<String>> = rows
                .iter()
                .map(|(v, i)| vec![v.to_string(), i.negative.to_string(), i.zero.to_string(), i.positive.to_string()])
                .collect();
            write_table(out, Format::Text, &header, &cells)
        }
    }
}

fn cmd_conjugate(problem: &Problem, cfg: &RunConfig, out: &mut Vec<u8>) -> Result<(), Failure> {
    let lambda = cfg.fixed_lambda()?;
    let points = conjugate_points(problem, lambda, &cfg.spectrum.shoot).map_err(numeric)?;
    writeln!(out, "# lambda={lambda}").map_err(io_err)?;
    let rows: Vec<Vec<String>> = points.iter().map(|x| vec![x.to_string()]).collect();
    write_table(out, cfg.common.format, &["x".to_string()], &rows)
}

fn cmd_eigencurves(problem: &Problem, cfg: &RunConfig, out: &mut Vec<u8>) -> Result<(), Failure> {
    let mesh: Mesh = build_mesh(problem, cfg.common.mesh_n);
    let forms = assemble(problem, &mesh).map_err(numeric)?;
    let n = cfg.common.n_max;
    let grid = cfg.lambda_grid();
    let rows = par::map(&grid, cfg.spectrum.parallel, |&l| {
        (1..=n).map(|k| forms.eigencurve(l, k)).collect::<Result<Vec<f64>, _>>().map(|v| (l, v))
    });
    let rows = rows.into_iter().collect::<Result<Vec<_>, _>>().map_err(numeric)?;
    let mut header = vec!["lambda".to_string()];
    header.extend((1..=n).map(|k| format!("Lambda_{k}")));
    let cells: Vec<Vec<String>> = rows
        .iter()
        .map(|(l, v)| std::iter::once(l.to_string()).chain(v.iter().map(|x| x.to_string())).collect())
        .collect();
    write_table(out, cfg.common.format, &header, &cells)
}

fn cmd_verify(problem: &Problem, cfg: &RunConfig, out: &mut Vec<u8>) -> Result<(), Failure> {
    let report = solve(problem, cfg.xi(), &cfg.spectrum).map_err(numeric)?;
    let verification = verify_oscillation(&report, cfg.spectrum.eig_rtol);
    writeln!(out, "# xi={}", report.xi).map_err(io_err)?;
    match cfg.common.format {
        Format::Text => verification.write_text(&mut *out).map_err(io_err)?,
        Format::Csv => {
            writeln!(out, "check,n,passed,detail").map_err(io_err)?;
            for c in &verification.checks {
                let detail = c.detail.replace('"', "'");
                writeln!(out, "{:?},{},{},\"{detail}\"", c.kind, c.index, c.passed).map_err(io_err)?;
            }
        }
    }
    if verification.passed() {
        Ok(())
    } else {
        Err(Failure::Verify)
    }
}
