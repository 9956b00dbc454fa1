use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use holofill::barrier::{
    convexifier_echo, hessian_min_eigen, laplacian_sign_check, trapping_check, Barrier, Concavifier, Convexifier,
    SampleGrid,
};
use holofill::circle::{BoundaryFunction, HilbertNormalization};
use holofill::disk::{
    boundary_equation_residual, continue_in_t, derivative_bound_check, solve_disk, HolomorphicDisk, SolverConfig,
};
use holofill::foliation::{build_foliation, leaf_through_point, FoliationOptions};
use holofill::motion::{extend_motion, HolomorphicMotionSpec, MotionConfig};
use holofill::torus::{TorusFamily, TorusFamilySpec};
use holofill::Error;
use num_complex::Complex64;
use serde::Serialize;
use serde_json::{json, Value};

/// Fill graphical tori with holomorphic disks and extend holomorphic motions.
#[derive(Debug, Parser)]
#[command(name = "holofill", version)]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct Global {
    /// Boundary grid size N (power of two >= 16).
    #[arg(long, global = true, default_value_t = 256)]
    grid: usize,
    /// Newton tolerance on sup|F(λ, g) − t|.
    #[arg(long, global = true, default_value_t = 1e-10)]
    tol: f64,
    /// Write the main output here; CSV data goes next to it with a `.csv` extension.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Emit JSON on stdout (default).
    #[arg(long, global = true, conflicts_with = "csv")]
    json: bool,
    /// Emit the CSV plot data on stdout instead of JSON.
    #[arg(long, global = true)]
    csv: bool,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Validate a torus spec and print its report.
    ValidateTorus { spec: PathBuf },
    /// Solve one disk with trace on Γ^t.
    SolveDisk {
        spec: PathBuf,
        #[arg(long)]
        t: f64,
        /// Seed boundary: `{"n": N, "samples": [[re, im], ...]}` or a bare sample array.
        #[arg(long)]
        seed: Option<PathBuf>,
    },
    /// Continue a leaf from level `from` to `to`; emits JSON lines.
    Continue {
        spec: PathBuf,
        #[arg(long)]
        from: f64,
        #[arg(long)]
        to: f64,
        /// Seed angle ξ of the starting constant `√from·e^{iξ}`.
        #[arg(long, default_value_t = 0.0)]
        anchor: f64,
    },
    /// Build the foliation of Γ^t.
    Foliate {
        spec: PathBuf,
        #[arg(long, default_value_t = 1.0)]
        t: f64,
        #[arg(long, default_value_t = 32)]
        leaves: usize,
        #[arg(long, default_value_t = 1e-3)]
        alpha_min: f64,
    },
    /// Find the leaf whose disk passes through (0, w0).
    LeafThrough {
        spec: PathBuf,
        #[arg(long, value_parser = parse_complex, allow_hyphen_values = true)]
        point: Complex64,
        #[arg(long, default_value_t = 16)]
        leaves: usize,
    },
    /// Check the plurisubharmonic barriers and trap supplied disks.
    VerifyBarriers {
        spec: PathBuf,
        #[arg(long, default_value_t = 0.01)]
        eps: f64,
        /// JSON lines of disks (as written by `continue`).
        #[arg(long)]
        disks: Option<PathBuf>,
        #[arg(long, default_value_t = 0.5)]
        kappa: f64,
        #[arg(long, default_value_t = 1.0)]
        beta: f64,
    },
    /// Extend a finite holomorphic motion to one more point.
    ExtendMotion {
        motion: PathBuf,
        #[arg(long, value_parser = parse_complex, allow_hyphen_values = true)]
        new: Complex64,
        #[arg(long)]
        r0: Option<f64>,
        #[arg(long, default_value_t = 16)]
        leaves: usize,
    },
    /// Run a quick end-to-end check.
    SelfTest,
}

fn parse_complex(s: &str) -> Result<Complex64, String> {
    let (re, im) = s.split_once(',').ok_or_else(|| format!("expected re,im but got `{s}`"))?;
    let re: f64 = re.trim().parse().map_err(|e| format!("bad real part: {e}"))?;
    let im: f64 = im.trim().parse().map_err(|e| format!("bad imaginary part: {e}"))?;
    Ok(Complex64::new(re, im))
}

enum Failure {
    Input(String),
    Certificate(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        if e.is_input_error() {
            Failure::Input(e.to_string())
        } else {
            Failure::Certificate(e.to_string())
        }
    }
}

type CliResult<T> = Result<T, Failure>;

/// Main output plus optional CSV, and the certificate verdict.
struct Output {
    json: String,
    csv: Option<String>,
    failed: Option<String>,
}

impl Output {
    fn json(value: &impl Serialize) -> Self {
        Self {
            json: to_json(value),
            csv: None,
            failed: None,
        }
    }
}

fn to_json(value: &impl Serialize) -> String {
    serde_json::to_string_pretty(value).expect("output serialises") + "\n"
}

fn read(path: &Path) -> CliResult<String> {
    fs::read_to_string(path).map_err(|e| Failure::Input(format!("{}: {e}", path.display())))
}

fn load_family(path: &Path) -> CliResult<TorusFamily> {
    let spec = TorusFamilySpec::from_json(&read(path)?)?;
    Ok(TorusFamily::new(spec)?)
}

fn load_seed(path: &Path) -> CliResult<BoundaryFunction> {
    let text = read(path)?;
    let value: Value = serde_json::from_str(&text).map_err(|e| Failure::Input(e.to_string()))?;
    let parsed = if value.is_array() {
        serde_json::from_value::<Vec<Complex64>>(value)
            .map_err(|e| e.to_string())
            .and_then(|s| BoundaryFunction::from_samples(s).map_err(|e| e.to_string()))
    } else {
        serde_json::from_value::<BoundaryFunction>(value).map_err(|e| e.to_string())
    };
    parsed.map_err(|e| Failure::Input(format!("seed {}: {e}", path.display())))
}

fn solver(global: &Global) -> CliResult<SolverConfig> {
    let cfg = SolverConfig {
        tol: global.tol,
        ..Default::default()
    };
    cfg.validate()?;
    Ok(cfg)
}

fn disk_report(family: &TorusFamily, disk: &HolomorphicDisk) -> CliResult<Value> {
    Ok(json!({
        "disk": disk,
        "derivative_sup": disk.derivative_sup(),
        "boundary_equation_residual": boundary_equation_residual(family, disk)?,
    }))
}

fn validate_torus(spec: &Path) -> CliResult<Output> {
    let spec = TorusFamilySpec::from_json(&read(spec)?)?;
    let report = TorusFamily::validate_spec(&spec);
    let failed = (!report.passed).then(|| format!("torus rejected: {}", report.failures.join("; ")));
    Ok(Output {
        failed,
        ..Output::json(&report)
    })
}

fn solve(global: &Global, spec: &Path, t: f64, seed: Option<&Path>) -> CliResult<Output> {
    let family = load_family(spec)?;
    let cfg = solver(global)?;
    let g0 = match seed {
        Some(p) => load_seed(p)?,
        None => {
            if !(t > 0.0) {
                return Err(Failure::Input(format!("level t = {t} must be positive")));
            }
            BoundaryFunction::constant(global.grid, Complex64::new(t.sqrt(), 0.0))?
        }
    };
    let disk = solve_disk(&family, t, &g0, &cfg)?;
    Ok(Output::json(&disk_report(&family, &disk)?))
}

fn continue_cmd(global: &Global, spec: &Path, from: f64, to: f64, anchor: f64) -> CliResult<Output> {
    let family = load_family(spec)?;
    let cfg = solver(global)?;
    if !(from > 0.0) || !(to > 0.0) {
        return Err(Failure::Input("levels must be positive".into()));
    }
    let seed = BoundaryFunction::constant(global.grid, Complex64::from_polar(from.sqrt(), anchor))?;
    let start = solve_disk(&family, from, &seed, &cfg)?;
    let path = continue_in_t(&family, &start, to, &cfg)?;
    let mut lines = String::new();
    for disk in &path {
        lines.push_str(&serde_json::to_string(disk).expect("disk serialises"));
        lines.push('\n');
    }
    let report = derivative_bound_check(&path)?;
    let failed = (!report.passed).then(|| {
        format!(
            "derivative bound: max {:.3e} > {} × median {:.3e}",
            report.max, report.bound_factor, report.median
        )
    });
    Ok(Output {
        json: lines,
        csv: None,
        failed,
    })
}

fn foliate(global: &Global, spec: &Path, t: f64, leaves: usize, alpha_min: f64) -> CliResult<Output> {
    let family = load_family(spec)?;
    let cfg = solver(global)?;
    let options = FoliationOptions {
        leaves,
        grid: global.grid,
        alpha_min,
    };
    let fol = build_foliation(&family, t, &options, &cfg)?;
    let bad: Vec<String> = fol
        .seed_record
        .iter()
        .filter(|r| !r.derivative.passed)
        .map(|r| format!("ξ = {:.4}", r.anchor))
        .collect();
    let failed = (!bad.is_empty()).then(|| format!("derivative bound violated on leaves {}", bad.join(", ")));
    Ok(Output {
        json: to_json(&fol),
        csv: Some(fol.to_csv()),
        failed,
    })
}

fn leaf_through(global: &Global, spec: &Path, point: Complex64, leaves: usize) -> CliResult<Output> {
    let family = load_family(spec)?;
    let cfg = solver(global)?;
    let loc = leaf_through_point(&family, point, leaves, global.grid, &cfg)?;
    Ok(Output::json(&json!({
        "level": loc.level,
        "anchor": loc.anchor,
        "target_error": loc.target_error,
        "leaf": loc.leaf,
    })))
}

fn read_disks(path: &Path) -> CliResult<Vec<HolomorphicDisk>> {
    read(path)?
        .lines()
        .filter(|l| !l.trim().is_empty())
        .enumerate()
        .map(|(i, l)| {
            serde_json::from_str(l).map_err(|e| Failure::Input(format!("{} line {}: {e}", path.display(), i + 1)))
        })
        .collect()
}

fn verify_barriers(spec: &Path, eps: f64, disks: Option<&Path>, kappa: f64, beta: f64) -> CliResult<Output> {
    let family = load_family(spec)?;
    let grid = SampleGrid::default();
    let convexifier = Convexifier { kappa };
    let concavifier = Concavifier::Exp { beta };
    let omega = Barrier::omega(eps, convexifier);
    let sigma = Barrier::sigma(eps, 1.0, concavifier);
    let h_omega = hessian_min_eigen(&omega, &family, &grid)?;
    let h_sigma = hessian_min_eigen(&sigma, &family, &grid)?;
    let lap_phi = laplacian_sign_check(&Barrier::phi(convexifier), &family, &grid)?;
    let lap_psi = laplacian_sign_check(&Barrier::psi(1.0, concavifier), &family, &grid)?;
    let echo = convexifier_echo(convexifier, &family, &grid)?;
    let mut trapping = Vec::new();
    if let Some(p) = disks {
        for disk in read_disks(p)? {
            trapping.push(json!({
                "level": disk.level,
                "omega": trapping_check(&disk, &omega, &family)?,
                "sigma": trapping_check(&disk, &sigma, &family)?,
            }));
        }
    }
    let mut failures = Vec::new();
    if !(h_omega.min_eigenvalue > 0.0) {
        failures.push("ω_ε not strictly plurisubharmonic".to_string());
    }
    if !(h_sigma.min_eigenvalue > 0.0) {
        failures.push("σ_ε not strictly plurisubharmonic".to_string());
    }
    if !lap_phi.passed || !lap_psi.passed {
        failures.push("Laplacian sign check failed".to_string());
    }
    if !(echo.max_relative_error < 1e-4) {
        failures.push(format!("convexifier identity echo {:.3e}", echo.max_relative_error));
    }
    for (i, t) in trapping.iter().enumerate() {
        for key in ["omega", "sigma"] {
            let ok = t[key]["passed"].as_bool() == Some(true) && t[key]["hopf_margin"].as_f64().is_some_and(|m| m > 0.0);
            if !ok {
                failures.push(format!("disk {i} escapes the {key} barrier"));
            }
        }
    }
    let out = json!({
        "eps": eps,
        "hessian_omega": h_omega,
        "hessian_sigma": h_sigma,
        "laplacian_phi": lap_phi,
        "laplacian_psi": lap_psi,
        "convexifier_echo": echo,
        "trapping": trapping,
        "passed": failures.is_empty(),
    });
    Ok(Output {
        failed: (!failures.is_empty()).then(|| failures.join("; ")),
        ..Output::json(&out)
    })
}

fn extend(global: &Global, motion: &Path, new: Complex64, r0: Option<f64>, leaves: usize) -> CliResult<Output> {
    let mut spec = HolomorphicMotionSpec::from_json(&read(motion)?)?;
    if let Some(r0) = r0 {
        spec.r0 = r0;
    }
    let cfg = MotionConfig {
        grid: global.grid,
        leaves,
        solver: solver(global)?,
        ..Default::default()
    };
    let ext = extend_motion(&spec, new, &cfg)?;
    let c = &ext.certificates;
    let failed = if !(c.base_point_error < 1e-7) {
        Some(format!("base point error {:.3e}", c.base_point_error))
    } else if !(c.injectivity_margin > 0.0) {
        Some("extended trajectory meets a data trajectory".to_string())
    } else {
        None
    };
    Ok(Output {
        json: to_json(&ext),
        csv: Some(ext.to_csv()),
        failed,
    })
}

fn self_test() -> CliResult<Output> {
    let mut checks = Vec::new();
    let mut push = |name: &str, value: f64, bound: f64| {
        checks.push(json!({"check": name, "value": value, "bound": bound, "passed": value < bound}));
    };
    let u = BoundaryFunction::from_real_fn(64, |t| (3.0 * t).cos())?;
    let h = u.hilbert_transform(HilbertNormalization::Center);
    let err = h.angles().zip(h.samples()).map(|(t, z)| (z.re - (3.0 * t).sin()).abs()).fold(0.0, f64::max);
    push("hilbert_cos3", err, 1e-12);

    let standard = TorusFamily::new(TorusFamilySpec::standard())?;
    let cfg = SolverConfig::default();
    let seed = BoundaryFunction::from_modes(64, &[(0, Complex64::new(0.8, 0.3)), (2, Complex64::new(0.05, 0.0))])?;
    let disk = solve_disk(&standard, 1.0, &seed, &cfg)?;
    let mean = disk.boundary.mean();
    let spread = disk.boundary.samples().iter().fold(0.0_f64, |m, z| m.max((z - mean).norm()));
    push("standard_leaf_constancy", spread, 1e-9);

    let bumpy = TorusFamily::new(TorusFamilySpec::bumpy(0.1))?;
    let options = FoliationOptions {
        leaves: 8,
        grid: 64,
        ..Default::default()
    };
    let fol = build_foliation(&bumpy, 1.0, &options, &cfg)?;
    push("foliation_trace_residual", fol.leaves.iter().map(|d| d.trace_residual).fold(0.0, f64::max), 1e-10);
    push("foliation_negative_margin", -fol.disjointness_margin, 0.0);

    let rejected = TorusFamily::new(TorusFamilySpec::bumpy(2.0)).is_err();
    push("rejects_nonpositive_profile", if rejected { 0.0 } else { 1.0 }, 0.5);
    let winding = BoundaryFunction::from_fn(64, |t| Complex64::from_polar(1.0, t))?;
    let caught = matches!(solve_disk(&standard, 1.0, &winding, &cfg), Err(Error::NonzeroWinding { .. }));
    push("rejects_winding_seed", if caught { 0.0 } else { 1.0 }, 0.5);

    let passed = checks.iter().all(|c| c["passed"] == json!(true));
    let failed = (!passed).then(|| "self-test check failed".to_string());
    Ok(Output {
        failed,
        ..Output::json(&json!({"checks": checks, "passed": passed}))
    })
}

fn dispatch(cli: &Cli) -> CliResult<Output> {
    let g = &cli.global;
    match &cli.command {
        Command::ValidateTorus { spec } => validate_torus(spec),
        Command::SolveDisk { spec, t, seed } => solve(g, spec, *t, seed.as_deref()),
        Command::Continue { spec, from, to, anchor } => continue_cmd(g, spec, *from, *to, *anchor),
        Command::Foliate {
            spec,
            t,
            leaves,
            alpha_min,
        } => foliate(g, spec, *t, *leaves, *alpha_min),
        Command::LeafThrough { spec, point, leaves } => leaf_through(g, spec, *point, *leaves),
        Command::VerifyBarriers {
            spec,
            eps,
            disks,
            kappa,
            beta,
        } => verify_barriers(spec, *eps, disks.as_deref(), *kappa, *beta),
        Command::ExtendMotion { motion, new, r0, leaves } => extend(g, motion, *new, *r0, *leaves),
        Command::SelfTest => self_test(),
    }
}

fn emit(global: &Global, out: &Output) -> io::Result<()> {
    match &global.out {
        Some(path) => {
            fs::write(path, &out.json)?;
            if let Some(csv) = &out.csv {
                fs::write(path.with_extension("csv"), csv)?;
            }
            Ok(())
        }
        None => {
            let text = match (&out.csv, global.csv) {
                (Some(csv), true) => csv,
                _ => &out.json,
            };
            io::stdout().lock().write_all(text.as_bytes())
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    if let Some(k) = cli.global.threads {
        if k == 0 {
            eprintln!("error: --threads must be at least 1");
            return ExitCode::from(1);
        }
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(k).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(1);
        }
    }
    match dispatch(&cli) {
        Ok(out) => {
            if let Err(e) = emit(&cli.global, &out) {
                eprintln!("error: {e}");
                return ExitCode::from(1);
            }
            match out.failed {
                Some(reason) => {
                    eprintln!("certificate failed: {reason}");
                    ExitCode::from(2)
                }
                None => ExitCode::SUCCESS,
            }
        }
        Err(Failure::Input(msg)) => {
            eprintln!("input error: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Certificate(msg)) => {
            eprintln!("certificate failed: {msg}");
            ExitCode::from(2)
        }
    }
}
