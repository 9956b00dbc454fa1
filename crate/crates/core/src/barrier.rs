//! Plurisubharmonic barriers around the torus family and their numerical checks.
//!
//! `Δ` below is the Euclidean Laplacian `∂²_x + ∂²_y` in `w`; the complex
//! Hessian is the Levi matrix of `∂∂̄` derivatives, so its `ww̄` entry is `Δ/4`.

use std::f64::consts::TAU;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::disk::HolomorphicDisk;
use crate::error::{Error, Result};
use crate::torus::{smooth_step, TorusFamily};

/// Second-derivative stencil step.
pub const FD_STEP: f64 = 1e-4;

/// Radial step of the outward difference quotient at `|λ| = 1`.
pub const HOPF_STEP: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BarrierKind {
    Phi,
    Psi,
    OmegaEps,
    SigmaEps,
}

/// `ρ(x) = x + κ(x² − x)`: increasing and convex on `[0, ∞)` for `κ ∈ [0, 1)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Convexifier {
    pub kappa: f64,
}

impl Convexifier {
    pub fn identity() -> Self {
        Self { kappa: 0.0 }
    }

    /// `(ρ, ρ′, ρ″)`.
    pub fn eval(&self, x: f64) -> (f64, f64, f64) {
        let k = self.kappa;
        (x + k * (x * x - x), 1.0 + k * (2.0 * x - 1.0), 2.0 * k)
    }
}

impl Default for Convexifier {
    fn default() -> Self {
        Self { kappa: 0.5 }
    }
}

/// Increasing concave `ρ̃` with `ρ̃(−∞) = −∞`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Concavifier {
    /// `ρ̃(x) = x`.
    Identity,
    /// `ρ̃(x) = 1 + (1 − e^{−βx})/β`, so `ρ̃(0) = 1`.
    Exp { beta: f64 },
}

impl Concavifier {
    pub fn eval(&self, x: f64) -> (f64, f64, f64) {
        match *self {
            Concavifier::Identity => (x, 1.0, 0.0),
            Concavifier::Exp { beta } => {
                let e = (-beta * x).exp();
                (1.0 + (1.0 - e) / beta, e, -beta * e)
            }
        }
    }
}

impl Default for Concavifier {
    fn default() -> Self {
        Concavifier::Exp { beta: 1.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Barrier {
    pub kind: BarrierKind,
    pub convexifier: Convexifier,
    pub concavifier: Concavifier,
    /// Scale `c` of `ψ`.
    pub scale: f64,
    pub eps: f64,
}

impl Barrier {
    pub fn phi(convexifier: Convexifier) -> Self {
        Self {
            kind: BarrierKind::Phi,
            convexifier,
            concavifier: Concavifier::default(),
            scale: 1.0,
            eps: 1.0,
        }
    }

    pub fn psi(scale: f64, concavifier: Concavifier) -> Self {
        Self {
            kind: BarrierKind::Psi,
            convexifier: Convexifier::default(),
            concavifier,
            scale,
            eps: 1.0,
        }
    }

    pub fn omega(eps: f64, convexifier: Convexifier) -> Self {
        Self {
            kind: BarrierKind::OmegaEps,
            eps,
            ..Self::phi(convexifier)
        }
    }

    pub fn sigma(eps: f64, scale: f64, concavifier: Concavifier) -> Self {
        Self {
            kind: BarrierKind::SigmaEps,
            eps,
            ..Self::psi(scale, concavifier)
        }
    }

    fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.convexifier.kappa) {
            return Err(Error::InvalidInput(format!("κ = {} not in [0, 1)", self.convexifier.kappa)));
        }
        if let Concavifier::Exp { beta } = self.concavifier {
            if !(beta > 0.0) {
                return Err(Error::InvalidInput("β must be positive".into()));
            }
        }
        if !(self.eps > 0.0) || !(self.scale > 0.0) {
            return Err(Error::InvalidInput("ε and c must be positive".into()));
        }
        Ok(())
    }

    /// `ψ`-value of the trace of a level-`t` disk.
    pub fn psi_level(&self, t: f64) -> f64 {
        self.scale * self.concavifier.eval(t.ln()).0
    }

    /// The sublevel bound a disk with trace on `Γ^t` must respect.
    pub fn trapping_bound(&self, t: f64) -> Result<f64> {
        match self.kind {
            BarrierKind::OmegaEps => Ok(1.0_f64.max(self.convexifier.eval(t).0)),
            BarrierKind::SigmaEps => Ok(-self.psi_level(t)),
            _ => Err(Error::InvalidInput("trapping needs an ω_ε or σ_ε barrier".into())),
        }
    }

    fn value(&self, family: &TorusFamily, lambda: Complex64, w: Complex64) -> Result<f64> {
        let pull = (lambda.norm_sqr() - 1.0) / self.eps;
        match self.kind {
            BarrierKind::Phi => Ok(self.convexifier.eval(extended_level(family, lambda, w)?).0),
            BarrierKind::OmegaEps => Ok(pull + self.convexifier.eval(extended_level(family, lambda, w)?).0),
            BarrierKind::Psi => self.psi_value(family, lambda, w),
            BarrierKind::SigmaEps => Ok(pull - self.psi_value(family, lambda, w)?),
        }
    }

    fn psi_value(&self, family: &TorusFamily, lambda: Complex64, w: Complex64) -> Result<f64> {
        if w.norm() == 0.0 {
            return Err(Error::ZeroSection);
        }
        Ok(self.scale * self.concavifier.eval(extended_level(family, lambda, w)?.ln()).0)
    }
}

/// `F` extended to the solid torus: `level(λ/|λ|, w)` for `|λ| >= ½`, `|w|²`
/// for `|λ| <= ¼`, blended smoothly in between.
pub fn extended_level(family: &TorusFamily, lambda: Complex64, w: Complex64) -> Result<f64> {
    let m = lambda.norm();
    if w.norm() == 0.0 {
        return Ok(0.0);
    }
    let flat = w.norm_sqr();
    if m <= 0.25 {
        return Ok(flat);
    }
    let level = family.level(lambda / m, w)?;
    let (chi, _) = smooth_step(4.0 * (m - 0.25));
    Ok(chi * level + (1.0 - chi) * flat)
}

pub fn evaluate_barrier(barrier: &Barrier, family: &TorusFamily, lambda: Complex64, w: Complex64) -> Result<f64> {
    barrier.validate()?;
    if lambda.norm() > 1.0 + 1e-12 {
        return Err(Error::OutOfRange(format!("|λ| = {} > 1", lambda.norm())));
    }
    barrier.value(family, lambda, w)
}

/// Sample points `(λ, w)`: polar grids in both variables.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleGrid {
    pub lambda_radii: Vec<f64>,
    pub lambda_angles: usize,
    pub w_radii: Vec<f64>,
    pub w_angles: usize,
}

impl Default for SampleGrid {
    fn default() -> Self {
        Self {
            lambda_radii: vec![0.0, 0.3, 0.6, 0.9, 1.0],
            lambda_angles: 8,
            w_radii: vec![0.1, 0.3, 0.6, 0.9, 1.05],
            w_angles: 12,
        }
    }
}

impl SampleGrid {
    pub fn points(&self) -> Vec<(Complex64, Complex64)> {
        let mut out = Vec::new();
        for &r in &self.lambda_radii {
            let na = if r == 0.0 { 1 } else { self.lambda_angles };
            for a in 0..na {
                let lambda = Complex64::from_polar(r, TAU * (a as f64 + 0.25) / na as f64);
                for &s in &self.w_radii {
                    for b in 0..self.w_angles {
                        out.push((lambda, Complex64::from_polar(s, TAU * (b as f64 + 0.5) / self.w_angles as f64)));
                    }
                }
            }
        }
        out
    }
}

/// Euclidean Laplacian in `w` by the 5-point stencil.
fn laplacian_w(f: &impl Fn(Complex64) -> Result<f64>, w: Complex64, h: f64) -> Result<f64> {
    let c = f(w)?;
    let ih = Complex64::new(0.0, h);
    Ok((f(w + h)? + f(w - h)? + f(w + ih)? + f(w - ih)? - 4.0 * c) / (h * h))
}

fn gradient_w(f: &impl Fn(Complex64) -> Result<f64>, w: Complex64, h: f64) -> Result<(f64, f64)> {
    let ih = Complex64::new(0.0, h);
    Ok(((f(w + h)? - f(w - h)?) / (2.0 * h), (f(w + ih)? - f(w - ih)?) / (2.0 * h)))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LaplacianReport {
    pub kind: BarrierKind,
    pub min_laplacian: f64,
    pub max_laplacian: f64,
    /// `(λ, w)` attaining the worst margin.
    pub worst_lambda: [f64; 2],
    pub worst_w: [f64; 2],
    /// Largest relative change between steps `h` and `h/2`.
    pub step_consistency: f64,
    pub passed: bool,
}

/// `Δφ > 0` (phi) or `Δψ < 0` (psi) on every grid point.
pub fn laplacian_sign_check(barrier: &Barrier, family: &TorusFamily, grid: &SampleGrid) -> Result<LaplacianReport> {
    barrier.validate()?;
    let sign = match barrier.kind {
        BarrierKind::Phi => 1.0,
        BarrierKind::Psi => -1.0,
        _ => return Err(Error::InvalidInput("Laplacian check applies to phi or psi".into())),
    };
    let mut rep = LaplacianReport {
        kind: barrier.kind,
        min_laplacian: f64::INFINITY,
        max_laplacian: f64::NEG_INFINITY,
        worst_lambda: [0.0; 2],
        worst_w: [0.0; 2],
        step_consistency: 0.0,
        passed: false,
    };
    let mut worst = f64::INFINITY;
    for (lambda, w) in grid.points() {
        let f = |z: Complex64| barrier.value(family, lambda, z);
        let l1 = laplacian_w(&f, w, FD_STEP)?;
        let l2 = laplacian_w(&f, w, 0.5 * FD_STEP)?;
        rep.step_consistency = rep.step_consistency.max((l1 - l2).abs() / l1.abs().max(1e-12));
        rep.min_laplacian = rep.min_laplacian.min(l1);
        rep.max_laplacian = rep.max_laplacian.max(l1);
        if sign * l1 < worst {
            worst = sign * l1;
            rep.worst_lambda = [lambda.re, lambda.im];
            rep.worst_w = [w.re, w.im];
        }
    }
    rep.passed = worst > 0.0;
    Ok(rep)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EchoReport {
    pub max_relative_error: f64,
    pub points: usize,
}

/// Compares `∂∂̄(ρ∘F) = ¼Δ(ρ∘F)` with `¼ρ″|∇F|² + ¼ρ′ΔF`, all by finite differences.
pub fn convexifier_echo(convexifier: Convexifier, family: &TorusFamily, grid: &SampleGrid) -> Result<EchoReport> {
    let barrier = Barrier::phi(convexifier);
    barrier.validate()?;
    let mut worst = 0.0_f64;
    let pts = grid.points();
    for &(lambda, w) in &pts {
        let phi = |z: Complex64| barrier.value(family, lambda, z);
        let f = |z: Complex64| extended_level(family, lambda, z);
        let lhs = 0.25 * laplacian_w(&phi, w, FD_STEP)?;
        let (fx, fy) = gradient_w(&f, w, FD_STEP)?;
        let (_, d1, d2) = convexifier.eval(f(w)?);
        let rhs = 0.25 * d2 * (fx * fx + fy * fy) + 0.25 * d1 * laplacian_w(&f, w, FD_STEP)?;
        worst = worst.max((lhs - rhs).abs() / lhs.abs().max(1e-12));
    }
    Ok(EchoReport {
        max_relative_error: worst,
        points: pts.len(),
    })
}

/// Levi matrix `[[u_λλ̄, u_λw̄], [u_wλ̄, u_ww̄]]` of `u` at `(λ, w)`.
pub fn complex_hessian(
    u: &impl Fn(Complex64, Complex64) -> Result<f64>,
    lambda: Complex64,
    w: Complex64,
    h: f64,
) -> Result<[[Complex64; 2]; 2]> {
    let e = [
        (Complex64::new(h, 0.0), Complex64::new(0.0, 0.0)),
        (Complex64::new(0.0, h), Complex64::new(0.0, 0.0)),
        (Complex64::new(0.0, 0.0), Complex64::new(h, 0.0)),
        (Complex64::new(0.0, 0.0), Complex64::new(0.0, h)),
    ];
    let at = |a: f64, i: usize, b: f64, j: usize| u(lambda + a * e[i].0 + b * e[j].0, w + a * e[i].1 + b * e[j].1);
    let c = u(lambda, w)?;
    let mut d = [[0.0; 4]; 4];
    for i in 0..4 {
        d[i][i] = (at(1.0, i, 0.0, i)? + at(-1.0, i, 0.0, i)? - 2.0 * c) / (h * h);
        for j in i + 1..4 {
            let v = (at(1.0, i, 1.0, j)? - at(1.0, i, -1.0, j)? - at(-1.0, i, 1.0, j)? + at(-1.0, i, -1.0, j)?)
                / (4.0 * h * h);
            d[i][j] = v;
            d[j][i] = v;
        }
    }
    // Coordinates: λ = x₁ + iy₁ (0, 1), w = x₂ + iy₂ (2, 3).
    let ll = 0.25 * (d[0][0] + d[1][1]);
    let ww = 0.25 * (d[2][2] + d[3][3]);
    let lw = Complex64::new(0.25 * (d[0][2] + d[1][3]), 0.25 * (d[1][2] - d[0][3]));
    Ok([[Complex64::new(ll, 0.0), lw], [lw.conj(), Complex64::new(ww, 0.0)]])
}

/// Eigenvalues of a Hermitian 2×2 matrix, ascending.
pub fn hermitian_eigenvalues(m: &[[Complex64; 2]; 2]) -> [f64; 2] {
    let (a, d) = (m[0][0].re, m[1][1].re);
    let mean = 0.5 * (a + d);
    let rad = (0.25 * (a - d) * (a - d) + m[0][1].norm_sqr()).sqrt();
    [mean - rad, mean + rad]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HessianReport {
    pub kind: BarrierKind,
    pub eps: f64,
    pub min_eigenvalue: f64,
    pub worst_lambda: [f64; 2],
    pub worst_w: [f64; 2],
    pub max_off_diagonal: f64,
}

/// Minimum Levi-matrix eigenvalue of `ω_ε` or `σ_ε` over the grid.
pub fn hessian_min_eigen(barrier: &Barrier, family: &TorusFamily, grid: &SampleGrid) -> Result<HessianReport> {
    barrier.validate()?;
    if !matches!(barrier.kind, BarrierKind::OmegaEps | BarrierKind::SigmaEps) {
        return Err(Error::InvalidInput("Hessian check applies to ω_ε or σ_ε".into()));
    }
    let u = |l: Complex64, w: Complex64| barrier.value(family, l, w);
    let mut rep = HessianReport {
        kind: barrier.kind,
        eps: barrier.eps,
        min_eigenvalue: f64::INFINITY,
        worst_lambda: [0.0; 2],
        worst_w: [0.0; 2],
        max_off_diagonal: 0.0,
    };
    for (lambda, w) in grid.points() {
        let m = complex_hessian(&u, lambda, w, FD_STEP)?;
        let ev = hermitian_eigenvalues(&m)[0];
        rep.max_off_diagonal = rep.max_off_diagonal.max(m[0][1].norm());
        if ev < rep.min_eigenvalue {
            rep.min_eigenvalue = ev;
            rep.worst_lambda = [lambda.re, lambda.im];
            rep.worst_w = [w.re, w.im];
        }
    }
    Ok(rep)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrappingReport {
    pub kind: BarrierKind,
    pub eps: f64,
    pub bound: f64,
    pub max_interior: f64,
    pub max_boundary: f64,
    /// Minimum outward radial difference quotient at `|λ| = 1`.
    pub hopf_margin: f64,
    pub passed: bool,
}

pub const TRAPPING_TOL: f64 = 1e-9;

/// `barrier∘g` stays below its boundary bound with a positive outward slope.
pub fn trapping_check(disk: &HolomorphicDisk, barrier: &Barrier, family: &TorusFamily) -> Result<TrappingReport> {
    trapping_check_grid(disk, barrier, family, 32, 32)
}

pub fn trapping_check_grid(
    disk: &HolomorphicDisk,
    barrier: &Barrier,
    family: &TorusFamily,
    radii: usize,
    angles: usize,
) -> Result<TrappingReport> {
    barrier.validate()?;
    let bound = barrier.trapping_bound(disk.level)?;
    let along = |z: Complex64| barrier.value(family, z, disk.eval(z));
    let mut max_interior = f64::NEG_INFINITY;
    for k in 0..radii {
        let r = k as f64 / radii as f64;
        let na = if k == 0 { 1 } else { angles };
        for j in 0..na {
            max_interior = max_interior.max(along(Complex64::from_polar(r, TAU * j as f64 / na as f64))?);
        }
    }
    let mut max_boundary = f64::NEG_INFINITY;
    let mut hopf = f64::INFINITY;
    for (j, theta) in disk.boundary.angles().enumerate() {
        let lambda = Complex64::from_polar(1.0, theta);
        let edge = barrier.value(family, lambda, disk.boundary.samples()[j])?;
        let inside = along(lambda * (1.0 - HOPF_STEP))?;
        max_boundary = max_boundary.max(edge);
        hopf = hopf.min((edge - inside) / HOPF_STEP);
    }
    let passed = max_interior <= bound + TRAPPING_TOL && max_boundary <= bound + TRAPPING_TOL && hopf > 0.0;
    Ok(TrappingReport {
        kind: barrier.kind,
        eps: barrier.eps,
        bound,
        max_interior,
        max_boundary,
        hopf_margin: hopf,
        passed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::circle::BoundaryFunction;
    use crate::disk::SolverConfig;
    use crate::foliation::leaf_path;
    use crate::torus::TorusFamilySpec;

    fn standard() -> TorusFamily {
        TorusFamily::new(TorusFamilySpec::standard()).unwrap()
    }

    fn small_grid() -> SampleGrid {
        SampleGrid {
            lambda_radii: vec![0.0, 0.4, 1.0],
            lambda_angles: 4,
            w_radii: vec![0.2, 0.7, 1.1],
            w_angles: 6,
        }
    }

    #[test]
    fn barrier_examples() {
        let fam = standard();
        let w = Complex64::new(0.3, 0.4);
        let phi = Barrier::phi(Convexifier::identity());
        assert!((evaluate_barrier(&phi, &fam, Complex64::new(0.5, 0.1), w).unwrap() - 0.25).abs() < 1e-15);
        let omega = Barrier::omega(0.01, Convexifier::default());
        let v = evaluate_barrier(&omega, &fam, Complex64::new(1.0, 0.0), Complex64::from_polar(1.0, 0.7)).unwrap();
        assert!((v - 1.0).abs() < 1e-14);
        let psi = Barrier::psi(1.0, Concavifier::default());
        let a = evaluate_barrier(&psi, &fam, Complex64::new(0.0, 0.0), Complex64::new(1e-3, 0.0)).unwrap();
        let b = evaluate_barrier(&psi, &fam, Complex64::new(0.0, 0.0), Complex64::new(1e-6, 0.0)).unwrap();
        assert!(b < a && b < -1e5);
        assert!(matches!(
            evaluate_barrier(&psi, &fam, Complex64::new(0.0, 0.0), Complex64::new(0.0, 0.0)),
            Err(Error::ZeroSection)
        ));
    }

    #[test]
    fn collar_exactness() {
        let fam = TorusFamily::new(TorusFamilySpec::twisted(0.1)).unwrap();
        let phi = Barrier::phi(Convexifier::identity());
        let psi = Barrier::psi(2.0, Concavifier::default());
        let w = Complex64::from_polar(0.85 * fam.eps().sqrt(), 1.0);
        for &r in &[0.0, 0.3, 0.8, 1.0] {
            let l = Complex64::from_polar(r, 0.4);
            assert_eq!(evaluate_barrier(&phi, &fam, l, w).unwrap(), w.norm_sqr());
            let expected = 2.0 * Concavifier::default().eval(w.norm_sqr().ln()).0;
            assert_eq!(evaluate_barrier(&psi, &fam, l, w).unwrap(), expected);
        }
    }

    #[test]
    fn standard_laplacians_match_closed_forms() {
        let fam = standard();
        let rep = laplacian_sign_check(&Barrier::phi(Convexifier::identity()), &fam, &small_grid()).unwrap();
        assert!(rep.passed);
        assert!((rep.min_laplacian - 4.0).abs() < 1e-6 && (rep.max_laplacian - 4.0).abs() < 1e-6);

        // ψ = ln|w|²: harmonic, so the sign check must fail.
        let flat = laplacian_sign_check(&Barrier::psi(1.0, Concavifier::Identity), &fam, &small_grid()).unwrap();
        assert!(flat.max_laplacian.abs() < 1e-5 && !flat.passed);

        // Δ(1 + (1 − |w|^{−2})) = −4/|w|⁴.
        let psi = Barrier::psi(1.0, Concavifier::Exp { beta: 1.0 });
        for &(l, w) in &[(0.0, Complex64::new(0.5, 0.2)), (0.9, Complex64::new(-0.1, 0.8))] {
            let f = |z: Complex64| psi.value(&fam, Complex64::new(l, 0.0), z);
            let lap = laplacian_w(&f, w, FD_STEP).unwrap();
            let exact = -4.0 / w.norm_sqr().powi(2);
            assert!((lap - exact).abs() / exact.abs() < 1e-6);
        }
    }

    #[test]
    fn convexifier_echo_on_bumpy_torus() {
        let fam = TorusFamily::new(TorusFamilySpec::bumpy(0.1)).unwrap();
        let rep = convexifier_echo(Convexifier::default(), &fam, &small_grid()).unwrap();
        assert!(rep.max_relative_error < 1e-4, "{rep:?}");
    }

    #[test]
    fn hessian_block_structure() {
        let fam = standard();
        let eps = 0.01;
        let omega = Barrier::omega(eps, Convexifier::identity());
        let u = |l: Complex64, w: Complex64| omega.value(&fam, l, w);
        let m = complex_hessian(&u, Complex64::new(0.0, 0.8), Complex64::new(0.6, 0.2), FD_STEP).unwrap();
        // ω = (|λ|² − 1)/ε + |w|²: Levi matrix diag(1/ε, 1).
        assert!((m[0][0].re - 1.0 / eps).abs() < 1e-3);
        assert!((m[1][1].re - 1.0).abs() < 1e-6);
        assert!(m[0][1].norm() < 1e-6);
        let rep = hessian_min_eigen(&omega, &fam, &small_grid()).unwrap();
        assert!((rep.min_eigenvalue - 1.0).abs() < 1e-5);
    }

    #[test]
    fn trapping_examples() {
        let fam = standard();
        let cfg = SolverConfig::default();
        let eps = 0.01;
        let omega = Barrier::omega(eps, Convexifier::identity());
        let c = Complex64::from_polar(0.8, 1.0);
        let disk = HolomorphicDisk::certify(&fam, 0.64, BoundaryFunction::constant(64, c).unwrap(), &cfg).unwrap();
        let rep = trapping_check(&disk, &omega, &fam).unwrap();
        assert!(rep.passed);
        assert!((rep.max_boundary - 0.64).abs() < 1e-12);
        // (1/ε)((1 − h)² − 1) difference quotient: 2/ε − h/ε.
        assert!((rep.hopf_margin - (2.0 - HOPF_STEP) / eps).abs() < 1e-6);

        let leaf = leaf_path(&TorusFamily::new(TorusFamilySpec::bumpy(0.1)).unwrap(), 0.3, 64, 1.0, &cfg)
            .unwrap()
            .pop()
            .unwrap();
        let bumpy = TorusFamily::new(TorusFamilySpec::bumpy(0.1)).unwrap();
        let ok = trapping_check(&leaf, &Barrier::omega(eps, Convexifier::default()), &bumpy).unwrap();
        assert!(ok.passed, "{ok:?}");
        let sigma = trapping_check(&leaf, &Barrier::sigma(eps, 1.0, Concavifier::default()), &bumpy).unwrap();
        assert!(sigma.passed, "{sigma:?}");

        let mut outside = leaf.clone();
        outside.boundary = outside.boundary.map(|z| 1.2 * z);
        let bad = trapping_check(&outside, &Barrier::omega(eps, Convexifier::default()), &bumpy).unwrap();
        assert!(!bad.passed);
    }
}
