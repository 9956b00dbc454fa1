//! Holomorphic disks with trace on a single torus `Γ^t`.
//!
//! The unknown is the boundary function `g` of a holomorphic graph
//! `w = g(λ)`. One Newton step linearizes `F(λ, g(λ)) = t` around `g`:
//! with `F_w∘g = e^{a + ib}` and the holomorphic multiplier
//! `X = e^{Hb − ib}`, the product `F_w X = e^{a + Hb}` is real and positive,
//! so the correction `δg = (δu + iHδu)·X` changes `F` by `2e^{a+Hb}δu`.

use std::f64::consts::TAU;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::circle::{check_grid, BoundaryFunction, HilbertNormalization};
use crate::error::{Error, Result};
use crate::parallel::Execution;
use crate::torus::{Fiber, TorusFamily};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverConfig {
    /// Target for `sup|F(λ, g) − t|`.
    pub tol: f64,
    pub max_iter: usize,
    /// Initial damping in `(0, 1]`.
    pub damping: f64,
    pub t_step: f64,
    pub min_step: f64,
    pub holo_tol: f64,
    /// `LeafHitZero` threshold for the interior modulus.
    pub zero_floor: f64,
    pub interior_radii: usize,
    pub interior_angles: usize,
    pub execution: Execution,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            tol: 1e-10,
            max_iter: 50,
            damping: 1.0,
            t_step: 0.02,
            min_step: 1e-5,
            holo_tol: 1e-9,
            zero_floor: 1e-8,
            interior_radii: 32,
            interior_angles: 32,
            execution: Execution::Parallel,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [self.tol, self.t_step, self.min_step, self.holo_tol, self.zero_floor];
        if positive.iter().any(|&x| !(x > 0.0)) || self.max_iter == 0 {
            return Err(Error::InvalidInput("solver tolerances and steps must be positive".into()));
        }
        if !(self.damping > 0.0 && self.damping <= 1.0) {
            return Err(Error::InvalidInput(format!("damping {} not in (0, 1]", self.damping)));
        }
        if self.interior_radii == 0 || self.interior_angles == 0 {
            return Err(Error::InvalidInput("interior grid must be nonempty".into()));
        }
        Ok(())
    }
}

/// A certified leaf: holomorphic `g` whose trace lies on `Γ^t`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HolomorphicDisk {
    pub boundary: BoundaryFunction,
    pub level: f64,
    pub trace_residual: f64,
    pub holo_residual: f64,
    pub min_modulus: f64,
    pub iterations: usize,
    /// Merit value before each Newton step, then at the accepted iterate.
    pub residual_history: Vec<f64>,
}

impl HolomorphicDisk {
    pub fn len(&self) -> usize {
        self.boundary.len()
    }

    pub fn is_empty(&self) -> bool {
        self.boundary.is_empty()
    }

    /// Interior value `g(z)`, `|z| <= 1`.
    pub fn eval(&self, z: Complex64) -> Complex64 {
        self.boundary.eval_holomorphic(z)
    }

    pub fn center(&self) -> Complex64 {
        self.boundary.coeff(0)
    }

    /// Value at `λ = 1`.
    pub fn anchor_value(&self) -> Complex64 {
        self.boundary.samples()[0]
    }

    /// `dg/dθ = iλ g′(λ)` on the boundary grid.
    pub fn theta_derivative(&self) -> BoundaryFunction {
        self.boundary.theta_derivative()
    }

    /// `sup |g′|` over the boundary.
    pub fn derivative_sup(&self) -> f64 {
        self.theta_derivative().max_abs()
    }

    /// Rebuilds the certificates of a boundary function claimed to solve level `t`.
    pub fn certify(family: &TorusFamily, level: f64, boundary: BoundaryFunction, config: &SolverConfig) -> Result<Self> {
        let op = TraceOperator::new(family, boundary.len())?;
        let resid = op.residual(&boundary, level)?;
        let mut disk = Self {
            boundary,
            level,
            trace_residual: sup(&resid),
            holo_residual: 0.0,
            min_modulus: 0.0,
            iterations: 0,
            residual_history: Vec::new(),
        };
        disk.fill_certificates(config)?;
        Ok(disk)
    }

    fn fill_certificates(&mut self, config: &SolverConfig) -> Result<()> {
        self.holo_residual = self.boundary.holomorphy_residual();
        if self.holo_residual >= config.holo_tol {
            return Err(Error::NotHolomorphic {
                residual: self.holo_residual,
                tolerance: config.holo_tol,
            });
        }
        let winding = self.boundary.winding_number()?;
        if winding != 0 {
            return Err(Error::NonzeroWinding { winding });
        }
        self.min_modulus = interior_min_modulus(&self.boundary, config.interior_radii, config.interior_angles);
        if self.min_modulus < config.zero_floor {
            return Err(Error::LeafHitZero {
                min_modulus: self.min_modulus,
            });
        }
        Ok(())
    }
}

/// `min |g|` over the polar grid `r = k/R` (`k = 0..=R`) × `A` angles.
pub fn interior_min_modulus(g: &BoundaryFunction, radii: usize, angles: usize) -> f64 {
    let mut best = g.coeff(0).norm();
    for k in 1..=radii {
        let r = k as f64 / radii as f64;
        for j in 0..angles {
            let z = Complex64::from_polar(r, TAU * j as f64 / angles as f64);
            best = best.min(g.eval_holomorphic(z).norm());
        }
    }
    best.min(g.min_abs())
}

fn sup(v: &[f64]) -> f64 {
    v.iter().fold(0.0_f64, |m, x| m.max(x.abs()))
}

/// The trace map `g ↦ F(λ, g(λ)) − t` on a fixed boundary grid.
pub struct TraceOperator<'a> {
    fibers: Vec<Fiber<'a>>,
}

/// Pieces of one linearization.
pub struct Linearization {
    /// Correction for the trace equation alone.
    pub direction: BoundaryFunction,
    /// Holomorphic multiplier `X`; `iX` spans the kernel of the differential.
    pub multiplier: BoundaryFunction,
    pub gradient_at_one: Complex64,
}

impl<'a> TraceOperator<'a> {
    pub fn new(family: &'a TorusFamily, n: usize) -> Result<Self> {
        check_grid(n)?;
        Ok(Self {
            fibers: family.fibers(n),
        })
    }

    pub fn len(&self) -> usize {
        self.fibers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.fibers.is_empty()
    }

    pub fn residual(&self, g: &BoundaryFunction, t: f64) -> Result<Vec<f64>> {
        if g.len() != self.fibers.len() {
            return Err(Error::InvalidInput(format!(
                "boundary has {} samples, operator grid has {}",
                g.len(),
                self.fibers.len()
            )));
        }
        self.fibers
            .iter()
            .zip(g.samples())
            .map(|(f, &w)| Ok(f.level(w)? - t))
            .collect()
    }

    pub fn gradients(&self, g: &BoundaryFunction) -> Result<BoundaryFunction> {
        let fw = self
            .fibers
            .iter()
            .zip(g.samples())
            .map(|(f, &w)| f.gradient_w(w))
            .collect::<Result<Vec<_>>>()?;
        BoundaryFunction::from_samples(fw)
    }

    pub fn linearize(&self, g: &BoundaryFunction, resid: &[f64]) -> Result<Linearization> {
        let fw = self.gradients(g)?;
        let (a, b) = fw.log_branch()?;
        let hb = b.hilbert_transform(HilbertNormalization::Center);
        let n = g.len();
        let mut x = Vec::with_capacity(n);
        let mut du = Vec::with_capacity(n);
        for j in 0..n {
            let (aj, bj, hbj) = (a.samples()[j].re, b.samples()[j].re, hb.samples()[j].re);
            x.push(Complex64::from_polar((hbj).exp(), -bj));
            du.push(Complex64::new(-resid[j] / (2.0 * (aj + hbj).exp()), 0.0));
        }
        let x = BoundaryFunction::from_samples(x)?;
        let w = BoundaryFunction::from_samples(du)?.analytic_completion(HilbertNormalization::AtOne);
        let direction = w.zip_with(&x, |p, q| p * q).holomorphic_part();
        Ok(Linearization {
            direction,
            multiplier: x,
            gradient_at_one: fw.samples()[0],
        })
    }
}

/// One undamped Newton step; returns the new boundary and `sup|R|` at `g`.
pub fn newton_step(family: &TorusFamily, t: f64, g: &BoundaryFunction) -> Result<(BoundaryFunction, f64)> {
    let op = TraceOperator::new(family, g.len())?;
    let resid = op.residual(g, t)?;
    let lin = op.linearize(g, &resid)?;
    let next = g.zip_with(&lin.direction, |a, b| a + b);
    Ok((next, sup(&resid)))
}

/// Solves `F(λ, g) = t` from the seed `g0`. The seed is first projected onto
/// nonnegative frequencies.
pub fn solve_disk(family: &TorusFamily, t: f64, g0: &BoundaryFunction, config: &SolverConfig) -> Result<HolomorphicDisk> {
    solve_inner(family, t, g0, None, config)
}

/// As [`solve_disk`] but also pins `g(1) = anchor` (a point of `C^t_1`).
pub fn solve_disk_anchored(
    family: &TorusFamily,
    t: f64,
    g0: &BoundaryFunction,
    anchor: Complex64,
    config: &SolverConfig,
) -> Result<HolomorphicDisk> {
    solve_inner(family, t, g0, Some(anchor), config)
}

fn check_seed(g0: &BoundaryFunction) -> Result<()> {
    check_grid(g0.len())?;
    let winding = g0.winding_number()?;
    if winding != 0 {
        return Err(Error::NonzeroWinding { winding });
    }
    Ok(())
}

fn solve_inner(
    family: &TorusFamily,
    t: f64,
    g0: &BoundaryFunction,
    anchor: Option<Complex64>,
    config: &SolverConfig,
) -> Result<HolomorphicDisk> {
    config.validate()?;
    if !(t > 0.0) {
        return Err(Error::OutOfRange(format!("level t = {t} must be positive")));
    }
    check_seed(g0)?;
    let op = TraceOperator::new(family, g0.len())?;
    let mut g = g0.holomorphic_part();
    let mut resid = op.residual(&g, t)?;
    let mut history = Vec::new();
    let anchor_err = |g: &BoundaryFunction| anchor.map_or(0.0, |p| (g.samples()[0] - p).norm());
    let mut fw1 = 0.0;
    let mut merit = sup(&resid);
    let mut iterations = 0;
    loop {
        let done = sup(&resid) < config.tol && anchor_err(&g) < config.tol;
        history.push(merit);
        if done {
            break;
        }
        if iterations == config.max_iter {
            return Err(Error::NoConvergence {
                iterations,
                residual: merit,
            });
        }
        iterations += 1;
        let lin = op.linearize(&g, &resid)?;
        let mut direction = lin.direction;
        if let Some(p) = anchor {
            let x1 = lin.multiplier.samples()[0];
            let kappa = ((p - g.samples()[0]) / x1).im;
            let kernel = lin.multiplier.map(|x| Complex64::new(0.0, kappa) * x).holomorphic_part();
            direction = direction.zip_with(&kernel, |a, b| a + b);
            fw1 = 2.0 * lin.gradient_at_one.norm();
            merit = sup(&resid) + fw1 * anchor_err(&g);
        }
        let mut damping = config.damping;
        loop {
            let trial = g.zip_with(&direction, |a, b| a + damping * b);
            if let Ok(r) = op.residual(&trial, t) {
                let m = sup(&r) + fw1 * anchor_err(&trial);
                if m < merit {
                    g = trial;
                    resid = r;
                    merit = m;
                    break;
                }
            }
            damping *= 0.5;
            if damping < 1e-4 {
                return Err(Error::NoConvergence {
                    iterations,
                    residual: merit,
                });
            }
        }
    }
    let mut disk = HolomorphicDisk {
        trace_residual: sup(&resid),
        boundary: g,
        level: t,
        holo_residual: 0.0,
        min_modulus: 0.0,
        iterations,
        residual_history: history,
    };
    disk.fill_certificates(config)?;
    Ok(disk)
}

/// Marches a leaf from its level to `t1`, re-solving from the previous
/// boundary. The returned path starts with `leaf`.
pub fn continue_in_t(family: &TorusFamily, leaf: &HolomorphicDisk, t1: f64, config: &SolverConfig) -> Result<Vec<HolomorphicDisk>> {
    config.validate()?;
    if !(t1 > 0.0) {
        return Err(Error::OutOfRange(format!("target level {t1} must be positive")));
    }
    let mut path = vec![leaf.clone()];
    let mut t = leaf.level;
    let dir = if t1 >= t { 1.0 } else { -1.0 };
    let mut h = config.t_step;
    while (t1 - t) * dir > 1e-14 {
        let step = h.min((t1 - t) * dir);
        let next_t = if step == (t1 - t) * dir { t1 } else { t + dir * step };
        let prev = path.last().expect("path is nonempty");
        match solve_disk(family, next_t, &prev.boundary, config) {
            Ok(disk) => {
                t = next_t;
                path.push(disk);
                h = (2.0 * h).min(config.t_step);
            }
            Err(e) if e.is_input_error() => return Err(e),
            Err(_) => {
                h *= 0.5;
                if h < config.min_step {
                    return Err(Error::ContinuationStuck { last_t: t });
                }
            }
        }
    }
    Ok(path)
}

/// `sup_θ |d/dθ F(e^{iθ}, g(e^{iθ}))|` by the chain rule
/// `2Re(iλF_λ) + 2Re(F_w · dg/dθ)`.
pub fn boundary_equation_residual(family: &TorusFamily, disk: &HolomorphicDisk) -> Result<f64> {
    let g = &disk.boundary;
    let dg = g.theta_derivative();
    let mut worst = 0.0_f64;
    for (j, theta) in g.angles().enumerate() {
        let lambda = Complex64::from_polar(1.0, theta);
        let (fw, fl) = family.gradients(lambda, g.samples()[j])?;
        let d = 2.0 * (Complex64::i() * lambda * fl).re + 2.0 * (fw * dg.samples()[j]).re;
        worst = worst.max(d.abs());
    }
    Ok(worst)
}

pub const DEFAULT_BOUND_FACTOR: f64 = 10.0;

/// Sups below this count as an identically constant leaf.
pub const DERIVATIVE_FLOOR: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DerivativeReport {
    pub sups: Vec<f64>,
    pub max: f64,
    pub median: f64,
    pub bound_factor: f64,
    pub passed: bool,
}

pub fn derivative_bound_check(path: &[HolomorphicDisk]) -> Result<DerivativeReport> {
    derivative_bound_check_with(path, DEFAULT_BOUND_FACTOR)
}

pub fn derivative_bound_check_with(path: &[HolomorphicDisk], bound_factor: f64) -> Result<DerivativeReport> {
    if path.is_empty() {
        return Err(Error::InvalidInput("empty continuation path".into()));
    }
    let sups: Vec<f64> = path.iter().map(HolomorphicDisk::derivative_sup).collect();
    let max = sups.iter().cloned().fold(0.0, f64::max);
    let mut sorted = sups.clone();
    sorted.sort_by(f64::total_cmp);
    let k = sorted.len();
    let median = if k % 2 == 1 {
        sorted[k / 2]
    } else {
        0.5 * (sorted[k / 2 - 1] + sorted[k / 2])
    };
    let passed = max < DERIVATIVE_FLOOR || max <= bound_factor * median;
    Ok(DerivativeReport {
        sups,
        max,
        median,
        bound_factor,
        passed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::torus::TorusFamilySpec;
    use std::f64::consts::PI;

    fn standard() -> TorusFamily {
        TorusFamily::new(TorusFamilySpec::standard()).unwrap()
    }

    fn bumpy() -> TorusFamily {
        TorusFamily::new(TorusFamilySpec::bumpy(0.1)).unwrap()
    }

    fn constant(c: Complex64) -> BoundaryFunction {
        BoundaryFunction::constant(64, c).unwrap()
    }

    #[test]
    fn exact_solution_is_fixed() {
        let g = constant(Complex64::new(0.5, 0.0));
        let (next, r) = newton_step(&standard(), 0.25, &g).unwrap();
        assert!(r < 1e-15);
        assert!(next.sup_distance(&g) < 1e-15);
    }

    #[test]
    fn radial_step_on_circles() {
        // F = |w|²: R = 0.16 − 0.25, F_w X = |g| = 0.4, so g moves by −R/(2·0.4).
        let g = constant(Complex64::new(0.4, 0.0));
        let fam = standard();
        let (next, r0) = newton_step(&fam, 0.25, &g).unwrap();
        assert!((r0 - 0.09).abs() < 1e-12);
        let expected = 0.4 + 0.09 / 0.8;
        for z in next.samples() {
            assert!((z - Complex64::new(expected, 0.0)).norm() < 1e-9);
        }
        let (_, r1) = newton_step(&fam, 0.25, &next).unwrap();
        assert!(r1 < r0);
    }

    #[test]
    fn constant_seed_on_standard_torus() {
        let c = Complex64::from_polar(0.3, PI / 4.0);
        let disk = solve_disk(&standard(), 0.09, &constant(c), &SolverConfig::default()).unwrap();
        assert!(disk.boundary.sup_distance(&constant(c)) < 1e-12);
        assert!(disk.trace_residual < 1e-10);
    }

    #[test]
    fn off_level_seed_projects_along_the_normal() {
        let seed = Complex64::new(0.2, 0.1);
        let disk = solve_disk(&standard(), 0.09, &constant(seed), &SolverConfig::default()).unwrap();
        let expected = seed / seed.norm() * 0.3;
        assert!(disk.boundary.sup_distance(&constant(expected)) < 1e-10);
    }

    #[test]
    fn winding_seed_is_rejected() {
        let g = BoundaryFunction::from_fn(64, |th| Complex64::from_polar(0.5, th)).unwrap();
        assert!(matches!(
            solve_disk(&standard(), 0.25, &g, &SolverConfig::default()),
            Err(Error::NonzeroWinding { winding: 1 })
        ));
    }

    fn bumpy_leaf(n: usize, xi: f64) -> HolomorphicDisk {
        let fam = bumpy();
        let eps = fam.eps();
        let seed = HolomorphicDisk::certify(
            &fam,
            eps,
            BoundaryFunction::constant(n, Complex64::from_polar(eps.sqrt(), xi)).unwrap(),
            &SolverConfig::default(),
        )
        .unwrap();
        continue_in_t(&fam, &seed, 1.0, &SolverConfig::default())
            .unwrap()
            .pop()
            .unwrap()
    }

    #[test]
    fn bumpy_leaf_certificates() {
        let leaf = bumpy_leaf(128, 0.7);
        assert!((leaf.level - 1.0).abs() < 1e-15);
        assert!(leaf.trace_residual < 1e-10);
        assert!(leaf.holo_residual < 1e-9);
        assert!(leaf.min_modulus > 0.5);
        assert!(boundary_equation_residual(&bumpy(), &leaf).unwrap() < 1e-6);
    }

    #[test]
    fn quadratic_convergence_on_bumpy_torus() {
        let fam = bumpy();
        let leaf = bumpy_leaf(128, 0.3);
        // Perturb radially and watch the Newton residuals.
        let seed = leaf.boundary.map(|z| z * 1.02);
        let mut g = seed;
        let mut res = Vec::new();
        for _ in 0..6 {
            let (next, r) = newton_step(&fam, 1.0, &g).unwrap();
            res.push(r);
            g = next;
        }
        let tail: Vec<f64> = res.iter().cloned().filter(|&r| r > 1e-13).collect();
        assert!(tail.len() >= 3, "{res:?}");
        let k = tail.len();
        let order = (tail[k - 1] / tail[k - 2]).ln() / (tail[k - 2] / tail[k - 3]).ln();
        assert!(order >= 1.8, "order {order} from {res:?}");
    }

    #[test]
    fn grid_refinement_keeps_trace_residual() {
        let fam = bumpy();
        let leaf = bumpy_leaf(128, 1.9);
        let fine = leaf.boundary.resample(256).unwrap();
        let op = TraceOperator::new(&fam, 256).unwrap();
        let r = sup(&op.residual(&fine, 1.0).unwrap());
        assert!(r < 10.0 * leaf.trace_residual.max(1e-13), "{r} vs {}", leaf.trace_residual);
    }

    #[test]
    fn perturbed_disk_residual_is_linear() {
        let fam = bumpy();
        let leaf = bumpy_leaf(128, 2.5);
        let bump = |s: f64| {
            let mut d = leaf.clone();
            d.boundary = leaf
                .boundary
                .zip_with(&BoundaryFunction::from_modes(128, &[(2, Complex64::new(s, 0.0))]).unwrap(), |a, b| a + b);
            boundary_equation_residual(&fam, &d).unwrap()
        };
        let (r1, r2) = (bump(1e-3), bump(2e-3));
        assert!(r1 > 1e-4);
        assert!((r2 / r1 - 2.0).abs() < 0.05);
    }

    #[test]
    fn anchored_solve_hits_the_anchor() {
        let fam = bumpy();
        let leaf = bumpy_leaf(128, 0.0);
        let p = fam.curve_point(Complex64::new(1.0, 0.0), 0.05, 1.0).unwrap();
        let d = solve_disk_anchored(&fam, 1.0, &leaf.boundary, p, &SolverConfig::default()).unwrap();
        assert!((d.anchor_value() - p).norm() < 1e-10);
        assert!(d.trace_residual < 1e-10);
    }

    #[test]
    fn standard_path_is_constant() {
        let fam = standard();
        let eps = fam.eps();
        let xi = 1.234;
        let seed = HolomorphicDisk::certify(
            &fam,
            eps,
            constant(Complex64::from_polar(eps.sqrt(), xi)),
            &SolverConfig::default(),
        )
        .unwrap();
        let path = continue_in_t(&fam, &seed, 1.0, &SolverConfig::default()).unwrap();
        for d in &path {
            assert!(d.boundary.sup_distance(&constant(d.center())) < 1e-12);
            assert!(d.boundary.sup_distance(&constant(Complex64::from_polar(d.level.sqrt(), xi))) < 1e-9);
        }
        let rep = derivative_bound_check(&path).unwrap();
        assert!(rep.passed);
        assert!(rep.max < 1e-9);
    }

    #[test]
    fn derivative_report_flags_blow_up() {
        let mut leaf = bumpy_leaf(64, 0.0);
        let calm = leaf.clone();
        leaf.boundary = leaf
            .boundary
            .zip_with(&BoundaryFunction::from_modes(64, &[(5, Complex64::new(0.5, 0.0))]).unwrap(), |a, b| a + b);
        let rep = derivative_bound_check(&[calm.clone(), calm.clone(), calm, leaf]).unwrap();
        assert!(!rep.passed);
    }
}
