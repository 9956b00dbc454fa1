//! Finite holomorphic motions: extension to one more point through the filling.
//!
//! The motion is normalized so `a₁ = 0` stays fixed, its radial velocity is
//! extended to all of `ℂ`, circles around 0 are flowed out to `|λ| = r₀`, and
//! the resulting tori are filled. The leaf through the new point over
//! `λ = 0` is its extended trajectory.

use std::f64::consts::{PI, TAU};

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::circle::{winding_number_of, BoundaryFunction};
use crate::disk::SolverConfig;
use crate::error::{Error, Result};
use crate::foliation::FoliationLadder;
use crate::parallel::map_indexed;
use crate::torus::{Ramp, TabulatedProfile, TorusFamily, ValidationGrid};

pub const DEFAULT_R0: f64 = 0.9;
pub const COLLISION_TOL: f64 = 1e-9;
pub const MODULI_TOL: f64 = 1e-6;
/// Kernel width `σ` as a multiple of the minimum site separation.
pub const KERNEL_WIDTH: f64 = 1.0;

fn default_r0() -> f64 {
    DEFAULT_R0
}

/// Points `a_i` with trajectories `f(λ, a_i) = a_i + Σ_{k≥1} c_{i,k} λ^k`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HolomorphicMotionSpec {
    pub points: Vec<Complex64>,
    /// `trajectories[i][k − 1] = c_{i,k}`.
    pub trajectories: Vec<Vec<Complex64>>,
    #[serde(default = "default_r0")]
    pub r0: f64,
}

impl HolomorphicMotionSpec {
    pub fn from_json(text: &str) -> Result<Self> {
        let spec: Self = serde_json::from_str(text).map_err(|e| Error::InvalidInput(e.to_string()))?;
        spec.check_shape()?;
        Ok(spec)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("spec serialises")
    }

    /// Every point moves by `a ↦ a·(1 + Σ c_k λ^k)`.
    pub fn scaling(points: &[Complex64], factor: &[Complex64], r0: f64) -> Self {
        Self {
            points: points.to_vec(),
            trajectories: points.iter().map(|&a| factor.iter().map(|&c| a * c).collect()).collect(),
            r0,
        }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// `f(λ, a_i)`.
    pub fn position(&self, i: usize, lambda: Complex64) -> Complex64 {
        let mut acc = Complex64::new(0.0, 0.0);
        for &c in self.trajectories[i].iter().rev() {
            acc = (acc + c) * lambda;
        }
        self.points[i] + acc
    }

    /// `∂f/∂λ(λ, a_i)`.
    pub fn lambda_derivative(&self, i: usize, lambda: Complex64) -> Complex64 {
        let mut acc = Complex64::new(0.0, 0.0);
        for (k, &c) in self.trajectories[i].iter().enumerate().rev() {
            acc = acc * lambda + c * (k + 1) as f64;
        }
        acc
    }

    fn check_shape(&self) -> Result<()> {
        if self.points.is_empty() {
            return Err(Error::InvalidInput("motion needs at least one point".into()));
        }
        if self.points.len() != self.trajectories.len() {
            return Err(Error::InvalidInput(format!(
                "{} points but {} trajectories",
                self.points.len(),
                self.trajectories.len()
            )));
        }
        if !(self.r0 > 0.0 && self.r0 < 1.0) {
            return Err(Error::InvalidInput(format!("r0 = {} must lie in (0, 1)", self.r0)));
        }
        let finite = |z: &Complex64| z.re.is_finite() && z.im.is_finite();
        if !self.points.iter().all(finite) || !self.trajectories.iter().flatten().all(finite) {
            return Err(Error::InvalidInput("non-finite motion data".into()));
        }
        Ok(())
    }

    /// Shape checks plus injectivity on `|λ| <= r₀`: a polar grid and a
    /// zero count of each pairwise difference.
    pub fn validate(&self) -> Result<()> {
        self.check_shape()?;
        let n = self.len();
        let check = |lambda: Complex64| -> Result<()> {
            let pos: Vec<Complex64> = (0..n).map(|i| self.position(i, lambda)).collect();
            for i in 0..n {
                for j in i + 1..n {
                    let d = (pos[i] - pos[j]).norm();
                    if d < COLLISION_TOL {
                        return Err(Error::PointsCollide {
                            distance: d,
                            lambda_re: lambda.re,
                            lambda_im: lambda.im,
                        });
                    }
                }
            }
            Ok(())
        };
        check(Complex64::new(0.0, 0.0))?;
        for k in 1..=16 {
            let r = self.r0 * k as f64 / 16.0;
            for a in 0..64 {
                check(Complex64::from_polar(r, TAU * a as f64 / 64.0))?;
            }
        }
        // Argument principle: f_i − f_j has no zero inside |λ| < r₀.
        let deg = self.trajectories.iter().map(Vec::len).max().unwrap_or(0);
        let m = (16 * deg).max(256);
        let circle: Vec<Complex64> = (0..m).map(|a| Complex64::from_polar(self.r0, TAU * a as f64 / m as f64)).collect();
        for i in 0..n {
            for j in i + 1..n {
                let diff: Vec<Complex64> = circle.iter().map(|&l| self.position(i, l) - self.position(j, l)).collect();
                let winding = winding_number_of(&diff, PI / 2.0).map_err(|e| {
                    Error::InvalidInput(format!("cannot certify injectivity of a_{} and a_{}: {e}", i + 1, j + 1))
                })?;
                if winding != 0 {
                    let (at, d) = (1..=64)
                        .flat_map(|k| (0..64).map(move |a| Complex64::from_polar(self.r0 * k as f64 / 64.0, TAU * a as f64 / 64.0)))
                        .map(|l| (l, (self.position(i, l) - self.position(j, l)).norm()))
                        .min_by(|a, b| a.1.total_cmp(&b.1))
                        .expect("grid");
                    return Err(Error::PointsCollide {
                        distance: d,
                        lambda_re: at.re,
                        lambda_im: at.im,
                    });
                }
            }
        }
        Ok(())
    }

    fn scaled(&self, factor: f64) -> Self {
        Self {
            points: self.points.iter().map(|p| p * factor).collect(),
            trajectories: self
                .trajectories
                .iter()
                .map(|c| c.iter().map(|z| z * factor).collect())
                .collect(),
            r0: self.r0,
        }
    }
}

/// Maps normalized positions back: `w ↦ w + f(λ, a₁)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Denormalizer {
    pub base: Complex64,
    pub coeffs: Vec<Complex64>,
}

impl Denormalizer {
    pub fn shift(&self, lambda: Complex64) -> Complex64 {
        let mut acc = Complex64::new(0.0, 0.0);
        for &c in self.coeffs.iter().rev() {
            acc = (acc + c) * lambda;
        }
        self.base + acc
    }

    pub fn apply(&self, lambda: Complex64, w: Complex64) -> Complex64 {
        w + self.shift(lambda)
    }
}

/// Subtracts the trajectory of `a₁` from every point.
pub fn normalize_motion(spec: &HolomorphicMotionSpec) -> (HolomorphicMotionSpec, Denormalizer) {
    let base = spec.points[0];
    let base_c = &spec.trajectories[0];
    let deg = spec.trajectories.iter().map(Vec::len).max().unwrap_or(0);
    let coeff = |c: &[Complex64], k: usize| c.get(k).copied().unwrap_or_default();
    let trajectories = spec
        .trajectories
        .iter()
        .map(|c| {
            let mut out: Vec<Complex64> = (0..deg).map(|k| coeff(c, k) - coeff(base_c, k)).collect();
            while out.last().is_some_and(|z| z.norm() == 0.0) {
                out.pop();
            }
            out
        })
        .collect();
    (
        HolomorphicMotionSpec {
            points: spec.points.iter().map(|p| p - base).collect(),
            trajectories,
            r0: spec.r0,
        },
        Denormalizer {
            base,
            coeffs: base_c.clone(),
        },
    )
}

/// `v(w) = αw + τ(w) Σ c_j φ(|w − p_j|)` with the inverse multiquadric `φ(d) = (1 + (d/σ)²)^{−1/2}` and
/// `τ(w) = |w|²/(|w|² + σ²)`.
#[derive(Debug, Clone, PartialEq)]
pub struct VelocityField {
    pub alpha: Complex64,
    pub sites: Vec<Complex64>,
    pub coeffs: Vec<Complex64>,
    pub sigma: f64,
}

impl VelocityField {
    pub fn eval(&self, w: Complex64) -> Complex64 {
        let mut acc = self.alpha * w;
        if self.sites.is_empty() {
            return acc;
        }
        let s2 = self.sigma * self.sigma;
        let taper = w.norm_sqr() / (w.norm_sqr() + s2);
        let mut rbf = Complex64::new(0.0, 0.0);
        for (p, c) in self.sites.iter().zip(&self.coeffs) {
            rbf += c * kernel(w - p, s2);
        }
        acc += taper * rbf;
        acc
    }

    /// Upper bound on the Lipschitz constant over `ℂ`.
    pub fn lipschitz(&self) -> f64 {
        // sup|∇τ| = 9/(8√3σ), sup|∇φ| = 2/(3√3σ).
        let r3 = 3f64.sqrt();
        let slope = (9.0 / (8.0 * r3) + 2.0 / (3.0 * r3)) / self.sigma;
        self.alpha.norm() + self.coeffs.iter().map(|c| c.norm()).sum::<f64>() * slope
    }
}

fn kernel(d: Complex64, s2: f64) -> f64 {
    1.0 / (1.0 + d.norm_sqr() / s2).sqrt()
}

/// Velocity field at `λ = r e^{iθ}` interpolating `∂f/∂r` at the nonzero
/// normalized points.
pub fn build_velocity_field(spec: &HolomorphicMotionSpec, r: f64, theta: f64) -> Result<VelocityField> {
    let lambda = Complex64::from_polar(r, theta);
    let dir = Complex64::from_polar(1.0, theta);
    let mut sites = Vec::new();
    let mut vel = Vec::new();
    for i in 0..spec.len() {
        if spec.points[i].norm() == 0.0 && spec.trajectories[i].iter().all(|c| c.norm() == 0.0) {
            continue;
        }
        sites.push(spec.position(i, lambda));
        vel.push(dir * spec.lambda_derivative(i, lambda));
    }
    let mut min_dist = f64::INFINITY;
    for (i, p) in sites.iter().enumerate() {
        min_dist = min_dist.min(p.norm());
        for q in &sites[i + 1..] {
            min_dist = min_dist.min((p - q).norm());
        }
    }
    if sites.is_empty() {
        return Ok(VelocityField {
            alpha: Complex64::new(0.0, 0.0),
            sites,
            coeffs: Vec::new(),
            sigma: 1.0,
        });
    }
    if min_dist < COLLISION_TOL {
        return Err(Error::PointsCollide {
            distance: min_dist,
            lambda_re: lambda.re,
            lambda_im: lambda.im,
        });
    }
    let sigma = KERNEL_WIDTH * min_dist;
    let num: Complex64 = sites.iter().zip(&vel).map(|(p, v)| v * p.conj()).sum();
    let den: f64 = sites.iter().map(|p| p.norm_sqr()).sum();
    let alpha = num / den;
    let s2 = sigma * sigma;
    let n = sites.len();
    let a = DMatrix::from_fn(n, n, |i, j| kernel(sites[i] - sites[j], s2));
    let rhs: Vec<Complex64> = sites
        .iter()
        .zip(&vel)
        .map(|(p, v)| (v - alpha * p) * (p.norm_sqr() + s2) / p.norm_sqr())
        .collect();
    let chol = a
        .cholesky()
        .ok_or_else(|| Error::IntegrationFailure("RBF system not positive definite".into()))?;
    let re = chol.solve(&DVector::from_iterator(n, rhs.iter().map(|z| z.re)));
    let im = chol.solve(&DVector::from_iterator(n, rhs.iter().map(|z| z.im)));
    let coeffs = (0..n).map(|i| Complex64::new(re[i], im[i])).collect();
    Ok(VelocityField {
        alpha,
        sites,
        coeffs,
        sigma,
    })
}

fn rk4_step(spec: &HolomorphicMotionSpec, theta: f64, r: f64, h: f64, y: &[Complex64]) -> Result<Vec<Complex64>> {
    let f0 = build_velocity_field(spec, r, theta)?;
    let fm = build_velocity_field(spec, r + 0.5 * h, theta)?;
    let f1 = build_velocity_field(spec, r + h, theta)?;
    Ok(y.iter()
        .map(|&w| {
            let k1 = f0.eval(w);
            let k2 = fm.eval(w + 0.5 * h * k1);
            let k3 = fm.eval(w + 0.5 * h * k2);
            let k4 = f1.eval(w + h * k3);
            w + h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        })
        .collect())
}

/// Flows a batch of points along `dw/dr = v_θ(r, w)` from `r = 0` to `r_end`
/// with shared adaptive steps (step doubling, Richardson-corrected).
pub fn flow_batch(
    spec: &HolomorphicMotionSpec,
    theta: f64,
    r_end: f64,
    y0: &[Complex64],
    tol: f64,
    mut record: Option<&mut Vec<(f64, Vec<Complex64>)>>,
) -> Result<Vec<Complex64>> {
    let mut y = y0.to_vec();
    let mut r = 0.0;
    let mut h = r_end / 8.0;
    if let Some(rec) = record.as_deref_mut() {
        rec.push((0.0, y.clone()));
    }
    while r < r_end {
        h = h.min(r_end - r);
        let full = rk4_step(spec, theta, r, h, &y)?;
        let half = rk4_step(spec, theta, r, 0.5 * h, &y)?;
        let half = rk4_step(spec, theta, r + 0.5 * h, 0.5 * h, &half)?;
        let scale = 1.0 + y.iter().fold(0.0_f64, |m, z| m.max(z.norm()));
        let err = full.iter().zip(&half).fold(0.0_f64, |m, (a, b)| m.max((a - b).norm())) / 15.0;
        let factor = if err == 0.0 { 2.0 } else { (0.9 * (tol * scale / err).powf(0.2)).clamp(0.2, 2.0) };
        if err <= tol * scale {
            y = half.iter().zip(&full).map(|(b, a)| b + (b - a) / 15.0).collect();
            r = if r_end - r <= h { r_end } else { r + h };
            if let Some(rec) = record.as_deref_mut() {
                rec.push((r, y.clone()));
            }
        }
        h *= factor;
        if h < 1e-12 * r_end {
            return Err(Error::IntegrationFailure(format!("step underflow at r = {r}")));
        }
    }
    Ok(y)
}

pub const ODE_TOL: f64 = 1e-12;

/// Trajectory `r ↦ G(re^{iθ}, w0)` at the accepted steps in `[0, r₀]`.
pub fn integrate_motion(spec: &HolomorphicMotionSpec, w0: Complex64, theta: f64) -> Result<Vec<(f64, Complex64)>> {
    let mut rec = Vec::new();
    flow_batch(spec, theta, spec.r0, &[w0], ODE_TOL, Some(&mut rec))?;
    Ok(rec.into_iter().map(|(r, y)| (r, y[0])).collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MotionConfig {
    pub theta_samples: usize,
    pub psi_samples: usize,
    pub u_nodes: usize,
    /// Largest level of the generated family.
    pub t_max: f64,
    /// Level of the outermost point after scaling.
    pub top_level: f64,
    pub ode_tol: f64,
    pub leaves: usize,
    pub grid: usize,
    pub coincidence_tol: f64,
    pub solver: SolverConfig,
}

impl Default for MotionConfig {
    fn default() -> Self {
        Self {
            theta_samples: 64,
            psi_samples: 64,
            u_nodes: 24,
            t_max: 0.8,
            top_level: 0.45,
            ode_tol: ODE_TOL,
            leaves: 16,
            grid: 256,
            coincidence_tol: 1e-6,
            solver: SolverConfig::default(),
        }
    }
}

/// Tori `C^t_λ = G(λ, {|w|² = t})` over `|λ| = r₀`, in coordinates `w/scale`, `μ = λ/r₀`.
#[derive(Debug, Clone)]
pub struct MotionTori {
    pub family: TorusFamily,
    pub scale: f64,
    pub r0: f64,
    /// Scaled level of each normalized point (0 for `a₁`).
    pub levels: Vec<f64>,
    pub lipschitz: f64,
}

/// `|Z|` at uniform angles `2πk/m` for a star-shaped closed curve `Z(ψ)` sampled at uniform `ψ`.
fn radial_resample(z: &[Complex64], m: usize) -> std::result::Result<Vec<f64>, ()> {
    let zf = BoundaryFunction::from_samples(z.to_vec()).map_err(|_| ())?;
    let dz = zf.theta_derivative();
    let n = z.len();
    if z.iter().zip(dz.samples()).any(|(a, b)| !((b / a).im > 0.0)) {
        return Err(());
    }
    if zf.winding_number_with(PI / 2.0).map_err(|_| ())? != 1 {
        return Err(());
    }
    let step = TAU / n as f64;
    (0..m)
        .map(|k| {
            let target = Complex64::from_polar(1.0, TAU * k as f64 / m as f64);
            let (j, _) = z
                .iter()
                .map(|w| (w * target.conj()).arg().abs())
                .enumerate()
                .min_by(|a, b| a.1.total_cmp(&b.1))
                .expect("samples");
            let mut psi = j as f64 * step;
            for _ in 0..30 {
                let w = zf.eval_at(psi);
                let f = (w * target.conj()).arg();
                let d = (dz.eval_at(psi) / w).im;
                let next = psi - (f / d).clamp(-step, step);
                if (next - psi).abs() < 1e-15 {
                    psi = next;
                    break;
                }
                psi = next;
            }
            Ok(zf.eval_at(psi).norm())
        })
        .collect()
}

pub fn build_motion_tori(spec: &HolomorphicMotionSpec, extra: &[Complex64], config: &MotionConfig) -> Result<MotionTori> {
    spec.validate()?;
    if spec.points[0].norm() != 0.0 || spec.trajectories[0].iter().any(|c| c.norm() != 0.0) {
        return Err(Error::InvalidInput("motion must be normalized (a₁ = 0 fixed)".into()));
    }
    let moduli: Vec<f64> = spec.points.iter().chain(extra).map(|p| p.norm()).collect();
    let biggest = moduli.iter().cloned().fold(0.0, f64::max);
    let scale = if biggest > 0.0 { biggest / config.top_level.sqrt() } else { 1.0 };
    for i in 1..spec.len() {
        for j in i + 1..spec.len() {
            if ((moduli[i] - moduli[j]) / scale).abs() < MODULI_TOL {
                return Err(Error::ModuliCollision { first: i, second: j });
            }
        }
    }
    let levels: Vec<f64> = spec.points.iter().map(|p| (p.norm() / scale).powi(2)).collect();
    let t_low = moduli
        .iter()
        .filter(|&&m| m > 0.0)
        .map(|m| (m / scale).powi(2))
        .fold(config.top_level, f64::min);
    let full = 0.5 * t_low;
    let eps = (full / 32.0).min(0.05);
    let scaled = spec.scaled(1.0 / scale);
    let (u_lo, u_hi) = (eps.sqrt(), config.t_max.sqrt());
    let us = TabulatedProfile::u_nodes(u_lo, u_hi, config.u_nodes);
    let np = config.psi_samples;
    let starts: Vec<Complex64> = us
        .iter()
        .flat_map(|&u| (0..np).map(move |j| Complex64::from_polar(u, TAU * j as f64 / np as f64)))
        .collect();
    let nt = config.theta_samples;
    let slices = map_indexed(config.solver.execution, nt, |a| -> Result<Vec<Vec<f64>>> {
        let theta = TAU * a as f64 / nt as f64;
        let pushed = flow_batch(&scaled, theta, spec.r0, &starts, config.ode_tol, None)?;
        us.iter()
            .enumerate()
            .map(|(l, &u)| {
                let ring = &pushed[l * np..(l + 1) * np];
                let radii = radial_resample(ring, np).map_err(|_| Error::StarShapeViolation {
                    lambda_angle: theta,
                    level: u * u,
                })?;
                Ok(radii.into_iter().map(|r| r / u).collect())
            })
            .collect()
    });
    let values = slices.into_iter().collect::<Result<Vec<_>>>()?;
    let profile = TabulatedProfile::from_samples(u_lo, u_hi, &values, config.grid)?;
    let family = TorusFamily::from_tabulated(profile, Ramp::Log { eps, full }, config.t_max, ValidationGrid::default())?;
    let mut lipschitz = 0.0_f64;
    for k in 0..=8 {
        for a in 0..8 {
            let f = build_velocity_field(&scaled, spec.r0 * k as f64 / 8.0, TAU * a as f64 / 8.0)?;
            lipschitz = lipschitz.max(f.lipschitz());
        }
    }
    Ok(MotionTori {
        family,
        scale,
        r0: spec.r0,
        levels,
        lipschitz,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MotionCertificates {
    /// `|f̃(0, a_new) − a_new|`.
    pub base_point_error: f64,
    /// Per data point: sup over the boundary grid of `|leaf − f(λ, a_i)|`.
    pub coincidence_errors: Vec<f64>,
    pub holomorphy_residual: f64,
    /// `min |f̃(λ, a_new) − f(λ, a_i)|` over the boundary grid.
    pub injectivity_margin: f64,
    pub lipschitz: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MotionExtension {
    pub a_new: Complex64,
    pub r0: f64,
    pub scale: f64,
    pub level: f64,
    pub anchor: f64,
    /// `f̃(r₀e^{iθ_j}, a_new)` on the uniform grid.
    pub trajectory: Vec<Complex64>,
    pub certificates: MotionCertificates,
    leaf: BoundaryFunction,
    denormalizer: Denormalizer,
}

impl MotionExtension {
    /// `f̃(λ, a_new)` for `|λ| <= r₀`.
    pub fn eval(&self, lambda: Complex64) -> Result<Complex64> {
        if lambda.norm() > self.r0 * (1.0 + 1e-12) {
            return Err(Error::OutOfRange(format!("|λ| = {} > r0 = {}", lambda.norm(), self.r0)));
        }
        let g = self.leaf.eval_holomorphic(lambda / self.r0);
        Ok(self.denormalizer.apply(lambda, self.scale * g))
    }

    pub fn lambda_grid(&self) -> Vec<Complex64> {
        let n = self.trajectory.len();
        (0..n)
            .map(|j| Complex64::from_polar(self.r0, TAU * j as f64 / n as f64))
            .collect()
    }

    /// Taylor coefficients `c_k` (`k >= 1`) of the trajectory, truncated where
    /// the leaf spectrum falls below `floor`.
    pub fn as_trajectory(&self, floor: f64) -> Vec<Complex64> {
        let n = self.leaf.len() as i64;
        let mut top = 0;
        for k in 1..n / 2 {
            if self.leaf.coeff(k).norm() > floor {
                top = k;
            }
        }
        let mut out: Vec<Complex64> = (1..=top)
            .map(|k| self.scale * self.leaf.coeff(k) / self.r0.powi(k as i32))
            .collect();
        for (k, c) in self.denormalizer.coeffs.iter().enumerate() {
            if k >= out.len() {
                out.resize(k + 1, Complex64::new(0.0, 0.0));
            }
            out[k] += c;
        }
        out
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("theta,lambda_re,lambda_im,re,im\n");
        for (j, (l, z)) in self.lambda_grid().iter().zip(&self.trajectory).enumerate() {
            let theta = TAU * j as f64 / self.trajectory.len() as f64;
            out.push_str(&format!("{theta},{},{},{},{}\n", l.re, l.im, z.re, z.im));
        }
        out
    }
}

pub fn extend_motion(spec: &HolomorphicMotionSpec, a_new: Complex64, config: &MotionConfig) -> Result<MotionExtension> {
    spec.validate()?;
    if let Some(i) = spec.points.iter().position(|p| (p - a_new).norm() < COLLISION_TOL) {
        return Err(Error::InvalidInput(format!("new point coincides with a_{}", i + 1)));
    }
    let (norm, denorm) = normalize_motion(spec);
    let w_new = a_new - spec.points[0];
    let tori = build_motion_tori(&norm, &[w_new], config)?;
    let s = tori.scale;
    let ladder = FoliationLadder::build(&tori.family, config.leaves, config.grid, &config.solver)?;
    let loc = ladder.locate(w_new / s)?;
    let n = config.grid;
    let lambdas: Vec<Complex64> = (0..n)
        .map(|j| Complex64::from_polar(spec.r0, TAU * j as f64 / n as f64))
        .collect();
    let mut coincidence = vec![0.0; spec.len()];
    for i in 1..spec.len() {
        let li = ladder.locate(norm.points[i] / s)?;
        coincidence[i] = li
            .leaf
            .boundary
            .samples()
            .iter()
            .zip(&lambdas)
            .map(|(g, &l)| (s * g - norm.position(i, l)).norm())
            .fold(0.0, f64::max);
    }
    let trajectory: Vec<Complex64> = loc
        .leaf
        .boundary
        .samples()
        .iter()
        .zip(&lambdas)
        .map(|(g, &l)| denorm.apply(l, s * g))
        .collect();
    let holomorphy_residual = BoundaryFunction::from_samples(trajectory.clone())?.holomorphy_residual();
    let mut injectivity_margin = f64::INFINITY;
    for (z, &l) in trajectory.iter().zip(&lambdas) {
        for i in 0..spec.len() {
            injectivity_margin = injectivity_margin.min((z - spec.position(i, l)).norm());
        }
    }
    let certificates = MotionCertificates {
        base_point_error: s * (loc.leaf.center() - w_new / s).norm(),
        coincidence_errors: coincidence.clone(),
        holomorphy_residual,
        injectivity_margin,
        lipschitz: tori.lipschitz,
    };
    if coincidence.iter().any(|&e| !(e < config.coincidence_tol)) {
        let list: Vec<String> = coincidence
            .iter()
            .enumerate()
            .map(|(i, e)| format!("a_{}: {e:.3e}", i + 1))
            .collect();
        return Err(Error::CoincidenceCheckFailed(list.join(", ")));
    }
    Ok(MotionExtension {
        a_new,
        r0: spec.r0,
        scale: s,
        level: loc.level,
        anchor: loc.anchor,
        trajectory,
        certificates,
        leaf: loc.leaf.boundary,
        denormalizer: denorm,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepEntry {
    pub r0: f64,
    pub base_point_error: f64,
    /// `f̃(λ_k, a_new)` at the shared probe points.
    pub probe_values: Vec<Complex64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepReport {
    pub probes: Vec<Complex64>,
    pub entries: Vec<SweepEntry>,
    /// Largest pairwise disagreement at the probe points.
    pub spread: f64,
}

/// Extends at several `r₀` and compares the trajectories on a common inner circle.
pub fn r0_sweep(spec: &HolomorphicMotionSpec, a_new: Complex64, radii: &[f64], config: &MotionConfig) -> Result<SweepReport> {
    let inner = 0.5 * radii.iter().cloned().fold(1.0, f64::min);
    let probes: Vec<Complex64> = (0..8).map(|k| Complex64::from_polar(inner, TAU * k as f64 / 8.0)).collect();
    let mut entries = Vec::new();
    for &r0 in radii {
        let mut s = spec.clone();
        s.r0 = r0;
        let ext = extend_motion(&s, a_new, config)?;
        entries.push(SweepEntry {
            r0,
            base_point_error: ext.certificates.base_point_error,
            probe_values: probes.iter().map(|&l| ext.eval(l)).collect::<Result<_>>()?,
        });
    }
    let mut spread = 0.0_f64;
    for a in 0..entries.len() {
        for b in a + 1..entries.len() {
            for (x, y) in entries[a].probe_values.iter().zip(&entries[b].probe_values) {
                spread = spread.max((x - y).norm());
            }
        }
    }
    Ok(SweepReport { probes, entries, spread })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn two_point() -> HolomorphicMotionSpec {
        HolomorphicMotionSpec {
            points: vec![c(0.0, 0.0), c(1.0, 0.5)],
            trajectories: vec![vec![], vec![c(0.3, 0.1), c(0.0, 0.05)]],
            r0: 0.9,
        }
    }

    #[test]
    fn normalization_examples() {
        let (n, d) = normalize_motion(&two_point());
        assert_eq!(n, two_point());
        assert_eq!(d.shift(c(0.3, 0.2)), c(0.0, 0.0));

        let spec = HolomorphicMotionSpec {
            points: vec![c(1.0, 1.0), c(2.0, 0.0)],
            trajectories: vec![vec![], vec![c(1.0, 0.0)]],
            r0: 0.9,
        };
        let (n, d) = normalize_motion(&spec);
        assert_eq!(n.points, vec![c(0.0, 0.0), c(1.0, -1.0)]);
        let l = c(0.2, -0.4);
        assert_eq!(n.position(1, l), c(1.0, -1.0) + l);
        assert!((d.apply(l, n.position(1, l)) - spec.position(1, l)).norm() < 1e-15);
    }

    #[test]
    fn json_round_trip() {
        let spec = two_point();
        assert_eq!(HolomorphicMotionSpec::from_json(&spec.to_json()).unwrap(), spec);
        let parsed = HolomorphicMotionSpec::from_json(r#"{"points": [[0,0],[1,0]], "trajectories": [[], [[0.1,0]]]}"#).unwrap();
        assert_eq!(parsed.r0, DEFAULT_R0);
        assert!(HolomorphicMotionSpec::from_json(r#"{"points": [[0,0]], "trajectories": []}"#).is_err());
    }

    #[test]
    fn crossing_trajectories_are_rejected() {
        // a₂(λ) = 1 − λ/0.45 hits a₁ = 0 at λ = 0.45.
        let spec = HolomorphicMotionSpec {
            points: vec![c(0.0, 0.0), c(1.0, 0.0)],
            trajectories: vec![vec![], vec![c(-1.0 / 0.45, 0.0)]],
            r0: 0.9,
        };
        assert!(matches!(spec.validate(), Err(Error::PointsCollide { .. })));
    }

    #[test]
    fn off_grid_crossing_is_rejected() {
        // 1 − 2λ vanishes at λ = ½, between the polar grid radii.
        let spec = HolomorphicMotionSpec {
            points: vec![c(0.0, 0.0), c(1.0, 0.0)],
            trajectories: vec![vec![], vec![c(-2.0, 0.0)]],
            r0: 0.9,
        };
        match spec.validate() {
            Err(Error::PointsCollide { lambda_re, lambda_im, .. }) => {
                assert!((c(lambda_re, lambda_im) - 0.5).norm() < 0.05);
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn velocity_field_examples() {
        let single = HolomorphicMotionSpec {
            points: vec![c(0.0, 0.0)],
            trajectories: vec![vec![]],
            r0: 0.9,
        };
        let f = build_velocity_field(&single, 0.5, 1.0).unwrap();
        assert_eq!(f.eval(c(0.3, 0.7)), c(0.0, 0.0));

        let spec = HolomorphicMotionSpec {
            points: vec![c(0.0, 0.0), c(1.0, 0.0), c(0.0, 2.0)],
            trajectories: vec![vec![], vec![c(0.2, 0.1)], vec![c(-0.1, 0.3), c(0.05, 0.0)]],
            r0: 0.9,
        };
        let (r, th) = (0.4, 2.2);
        let f = build_velocity_field(&spec, r, th).unwrap();
        let l = Complex64::from_polar(r, th);
        for i in 1..3 {
            let exact = Complex64::from_polar(1.0, th) * spec.lambda_derivative(i, l);
            assert!((f.eval(spec.position(i, l)) - exact).norm() < 1e-12);
        }
        assert_eq!(f.eval(c(0.0, 0.0)), c(0.0, 0.0));
    }

    #[test]
    fn velocity_field_midpoint_by_hand() {
        // Sites p = ±1 (σ = min(1, 1, 2) = 1), velocities ±i·0.1 at λ = 0.
        let spec = HolomorphicMotionSpec {
            points: vec![c(0.0, 0.0), c(1.0, 0.0), c(-1.0, 0.0)],
            trajectories: vec![vec![], vec![c(0.0, 0.1)], vec![c(0.0, 0.1)]],
            r0: 0.9,
        };
        let f = build_velocity_field(&spec, 0.0, 0.0).unwrap();
        // α = (0.1i − 0.1i)/2 = 0; residuals d = 0.1i at both sites.
        assert!(f.alpha.norm() < 1e-15);
        let s2 = 1.0;
        let phi = |d2: f64| 1.0 / (1.0 + d2 / s2).sqrt();
        let tau = |w2: f64| w2 / (w2 + s2);
        // Symmetric system: c·(φ(0) + φ(4)) = d/τ(1).
        let coef = 0.1 / tau(1.0) / (phi(0.0) + phi(4.0));
        let w = c(0.0, 0.5);
        let expected = c(0.0, tau(0.25) * coef * 2.0 * phi(1.25));
        assert!((f.eval(w) - expected).norm() < 1e-14);
    }

    #[test]
    fn data_sites_follow_their_series() {
        let spec = HolomorphicMotionSpec {
            points: vec![c(0.0, 0.0), c(1.0, 0.0), c(0.0, 2.0)],
            trajectories: vec![vec![], vec![c(0.2, 0.1)], vec![c(-0.1, 0.3), c(0.05, 0.0)]],
            r0: 0.9,
        };
        let th = 0.7;
        for i in 0..3 {
            let traj = integrate_motion(&spec, spec.points[i], th).unwrap();
            let (r, w) = *traj.last().unwrap();
            assert!((r - 0.9).abs() < 1e-15);
            assert!((w - spec.position(i, Complex64::from_polar(0.9, th))).norm() < 1e-8);
        }
        let zero = integrate_motion(&spec, c(0.0, 0.0), th).unwrap();
        assert!(zero.iter().all(|(_, w)| w.norm() == 0.0));
    }

    #[test]
    fn scaling_motion_pushes_circles_to_circles() {
        let spec = HolomorphicMotionSpec::scaling(&[c(0.0, 0.0), c(0.7, 0.0), c(0.0, -1.3)], &[c(0.1, 0.0)], 0.9);
        let cfg = MotionConfig {
            theta_samples: 16,
            psi_samples: 32,
            u_nodes: 12,
            ..Default::default()
        };
        let tori = build_motion_tori(&spec, &[], &cfg).unwrap();
        for &(phi, psi, t) in &[(0.3, 1.0, 0.3), (2.0, 4.0, 0.6), (5.0, 0.1, 0.2)] {
            let mu = Complex64::from_polar(1.0, phi);
            let r = tori.family.radius(mu, psi, t).unwrap().r;
            let expected = t.sqrt() * (1.0 + 0.1 * 0.9 * mu).norm();
            assert!((r - expected).abs() < 1e-6, "{r} vs {expected}");
        }
        let lvl = (0.7 / tori.scale).powi(2);
        assert!((tori.levels[1] - lvl).abs() < 1e-15);
    }

    #[test]
    fn equal_moduli_are_rejected() {
        let spec = HolomorphicMotionSpec::scaling(&[c(0.0, 0.0), c(1.0, 0.0), c(0.0, 1.0)], &[], 0.9);
        assert!(matches!(
            build_motion_tori(&spec, &[], &MotionConfig::default()),
            Err(Error::ModuliCollision { first: 1, second: 2 })
        ));
    }

    #[test]
    fn identity_motion_extends_by_constants() {
        let spec = HolomorphicMotionSpec::scaling(&[c(1.0, 0.0), c(0.0, 2.0)], &[], 0.9);
        let cfg = MotionConfig {
            theta_samples: 8,
            psi_samples: 16,
            u_nodes: 8,
            leaves: 8,
            grid: 64,
            ..Default::default()
        };
        let ext = extend_motion(&spec, c(-1.0, 0.0), &cfg).unwrap();
        assert!(ext.trajectory.iter().all(|z| (z - c(-1.0, 0.0)).norm() < 1e-8));
        assert!(ext.certificates.base_point_error < 1e-7);
        assert!(matches!(extend_motion(&spec, c(1.0, 0.0), &cfg), Err(Error::InvalidInput(_))));
    }
}
