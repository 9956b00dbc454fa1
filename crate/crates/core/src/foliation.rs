//! Foliations of `Γ^t` by leaves continued from the standard collar.

use std::f64::consts::{PI, TAU};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::circle::{winding_number_of, BoundaryFunction};
use crate::disk::{
    continue_in_t, derivative_bound_check, solve_disk, solve_disk_anchored, DerivativeReport, HolomorphicDisk,
    SolverConfig,
};
use crate::error::{Error, Result};
use crate::parallel::map_indexed;
use crate::torus::TorusFamily;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FoliationOptions {
    pub leaves: usize,
    pub grid: usize,
    /// Minimum accepted transversality angle in radians.
    pub alpha_min: f64,
}

impl Default for FoliationOptions {
    fn default() -> Self {
        Self {
            leaves: 32,
            grid: 256,
            alpha_min: 1e-3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedRecord {
    pub anchor: f64,
    pub steps: usize,
    pub newton_iterations: usize,
    pub derivative: DerivativeReport,
}

#[derive(Debug, Clone, Serialize)]
pub struct Foliation {
    #[serde(skip)]
    family: TorusFamily,
    pub level: f64,
    /// Seed angles `ξ_m`.
    pub anchors: Vec<f64>,
    pub leaves: Vec<HolomorphicDisk>,
    pub seed_record: Vec<SeedRecord>,
    pub disjointness_margin: f64,
    pub transversality_angle: f64,
}

/// Anchor angles `ξ_m = 2πm/M`.
pub fn anchor_angles(m: usize) -> Vec<f64> {
    (0..m).map(|j| TAU * j as f64 / m as f64).collect()
}

fn collar_seed(family: &TorusFamily, xi: f64, n: usize, config: &SolverConfig) -> Result<HolomorphicDisk> {
    let eps = family.eps();
    let g = BoundaryFunction::constant(n, Complex64::from_polar(eps.sqrt(), xi))?;
    HolomorphicDisk::certify(family, eps, g, config)
}

/// Continuation path of the leaf seeded at `√ε·e^{iξ}`.
pub fn leaf_path(family: &TorusFamily, xi: f64, n: usize, t_target: f64, config: &SolverConfig) -> Result<Vec<HolomorphicDisk>> {
    let seed = collar_seed(family, xi, n, config)?;
    continue_in_t(family, &seed, t_target, config)
}

pub fn build_foliation(
    family: &TorusFamily,
    t_target: f64,
    options: &FoliationOptions,
    config: &SolverConfig,
) -> Result<Foliation> {
    if options.leaves < 8 {
        return Err(Error::InvalidInput(format!("need at least 8 leaves, got {}", options.leaves)));
    }
    config.validate()?;
    let anchors = anchor_angles(options.leaves);
    let results = map_indexed(config.execution, anchors.len(), |m| {
        let path = leaf_path(family, anchors[m], options.grid, t_target, config)?;
        let record = SeedRecord {
            anchor: anchors[m],
            steps: path.len() - 1,
            newton_iterations: path.iter().map(|d| d.iterations).sum(),
            derivative: derivative_bound_check(&path)?,
        };
        Ok((path.pop_last(), record))
    });
    let mut leaves = Vec::with_capacity(anchors.len());
    let mut records = Vec::with_capacity(anchors.len());
    for (m, r) in results.into_iter().enumerate() {
        let (leaf, record) = r.map_err(|e: Error| {
            if e.is_input_error() {
                e
            } else {
                Error::LeafFailed {
                    leaf: m,
                    source: Box::new(e),
                }
            }
        })?;
        leaves.push(leaf);
        records.push(record);
    }
    let mut fol = Foliation::from_leaves(family, t_target, anchors, leaves, options.alpha_min, config)?;
    fol.seed_record = records;
    Ok(fol)
}

trait PopLast<T> {
    fn pop_last(self) -> T;
}

impl<T> PopLast<T> for Vec<T> {
    fn pop_last(mut self) -> T {
        self.pop().expect("nonempty")
    }
}

impl Foliation {
    /// Assembles leaves at a common level and runs the structural checks.
    pub fn from_leaves(
        family: &TorusFamily,
        level: f64,
        anchors: Vec<f64>,
        leaves: Vec<HolomorphicDisk>,
        alpha_min: f64,
        config: &SolverConfig,
    ) -> Result<Self> {
        if leaves.is_empty() || leaves.len() != anchors.len() {
            return Err(Error::InvalidInput("leaves and anchors must be nonempty and match".into()));
        }
        let mut fol = Self {
            family: family.clone(),
            level,
            anchors,
            leaves,
            seed_record: Vec::new(),
            disjointness_margin: 0.0,
            transversality_angle: 0.0,
        };
        fol.disjointness_margin = disjointness_check(&fol, config);
        if !(fol.disjointness_margin > 0.0) {
            return Err(Error::FoliationDegenerate(format!(
                "leaves intersect: disjointness margin {:.3e}",
                fol.disjointness_margin
            )));
        }
        fol.transversality_angle = transversality_angle(&fol)?;
        if fol.transversality_angle < alpha_min {
            return Err(Error::FoliationDegenerate(format!(
                "trace tangent to a fiber: angle {:.3e} < {alpha_min:.1e}",
                fol.transversality_angle
            )));
        }
        Ok(fol)
    }

    pub fn family(&self) -> &TorusFamily {
        &self.family
    }

    pub fn len(&self) -> usize {
        self.leaves.len()
    }

    pub fn is_empty(&self) -> bool {
        self.leaves.is_empty()
    }

    /// Rows `ξ,θ,re,im` for every leaf boundary sample.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("xi,theta,re,im\n");
        for (xi, leaf) in self.anchors.iter().zip(&self.leaves) {
            for (theta, z) in leaf.boundary.angles().zip(leaf.boundary.samples()) {
                out.push_str(&format!("{xi},{theta},{},{}\n", z.re, z.im));
            }
        }
        out
    }
}

/// `min |g_ξ(λ) − g_η(λ)|` over interior and boundary samples and all pairs.
pub fn disjointness_check(foliation: &Foliation, config: &SolverConfig) -> f64 {
    let leaves = &foliation.leaves;
    let n = leaves[0].len();
    let mut points: Vec<Complex64> = (0..n)
        .map(|j| Complex64::from_polar(1.0, TAU * j as f64 / n as f64))
        .collect();
    points.push(Complex64::new(0.0, 0.0));
    for k in 1..config.interior_radii {
        let r = k as f64 / config.interior_radii as f64;
        for j in 0..config.interior_angles {
            points.push(Complex64::from_polar(r, TAU * j as f64 / config.interior_angles as f64));
        }
    }
    let values: Vec<Vec<Complex64>> = leaves
        .iter()
        .map(|leaf| {
            let mut v: Vec<Complex64> = leaf.boundary.samples().to_vec();
            v.extend(points[n..].iter().map(|&z| leaf.eval(z)));
            v
        })
        .collect();
    let mut margin = f64::INFINITY;
    for p in 0..points.len() {
        for a in 0..values.len() {
            for b in a + 1..values.len() {
                margin = margin.min((values[a][p] - values[b][p]).norm());
            }
        }
    }
    margin
}

/// Minimum angle in `ℝ⁴` between `(iλ, dg/dθ)` and the fiber tangent `(0, ∂_ψ)`.
pub fn transversality_angle(foliation: &Foliation) -> Result<f64> {
    let family = &foliation.family;
    let mut best = PI / 2.0;
    for leaf in &foliation.leaves {
        let dg = leaf.theta_derivative();
        for (j, theta) in leaf.boundary.angles().enumerate() {
            let lambda = Complex64::from_polar(1.0, theta);
            let fiber = family.fiber(lambda);
            let w = leaf.boundary.samples()[j];
            let eta = fiber.fiber_tangent(w.arg(), foliation.level)?;
            let tw = dg.samples()[j];
            let dot = (tw.conj() * eta).re.abs();
            let norms = (1.0 + tw.norm_sqr()).sqrt() * eta.norm();
            best = best.min((dot / norms).clamp(0.0, 1.0).acos());
        }
    }
    Ok(best)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FiberCoverReport {
    pub max_level_residual: f64,
    pub monotone: bool,
}

/// Checks that at every `λ` the leaf values lie on `C^t_λ` in cyclic order.
pub fn fiber_cover_check(foliation: &Foliation) -> Result<FiberCoverReport> {
    let n = foliation.leaves[0].len();
    let mut max_res = 0.0_f64;
    let mut monotone = true;
    for j in 0..n {
        let lambda = Complex64::from_polar(1.0, TAU * j as f64 / n as f64);
        let fiber = foliation.family.fiber(lambda);
        let mut total = 0.0;
        let vals: Vec<Complex64> = foliation.leaves.iter().map(|l| l.boundary.samples()[j]).collect();
        for (m, &w) in vals.iter().enumerate() {
            max_res = max_res.max((fiber.level(w)? - foliation.level).abs());
            let next = vals[(m + 1) % vals.len()];
            let step = (next / w).arg().rem_euclid(TAU);
            if step <= 0.0 {
                monotone = false;
            }
            total += step;
        }
        if (total - TAU).abs() > 1e-6 {
            monotone = false;
        }
    }
    Ok(FiberCoverReport {
        max_level_residual: max_res,
        monotone,
    })
}

/// Re-solves from a perturbed seed, re-anchors at `leaf(1)` and returns
/// `sup |g − h|`.
pub fn uniqueness_probe(family: &TorusFamily, leaf: &HolomorphicDisk, scale: f64, config: &SolverConfig) -> Result<f64> {
    let n = leaf.len();
    let bump = BoundaryFunction::from_modes(n, &[(1, Complex64::new(scale, 0.0)), (2, Complex64::new(0.0, -0.5 * scale))])?;
    let seed = leaf.boundary.zip_with(&bump, |g, b| g * (1.0 + b));
    let h = solve_disk(family, leaf.level, &seed, config)?;
    let h = solve_disk_anchored(family, leaf.level, &h.boundary, leaf.anchor_value(), config)?;
    Ok(h.boundary.sup_distance(&leaf.boundary))
}

pub const LADDER_SPACING: f64 = 0.05;
pub const TARGET_TOL: f64 = 1e-8;

/// Leaves at a ladder of levels, reused for several point searches.
pub struct FoliationLadder<'a> {
    family: &'a TorusFamily,
    config: SolverConfig,
    anchors: Vec<f64>,
    levels: Vec<f64>,
    /// `[level][leaf]`.
    boundaries: Vec<Vec<BoundaryFunction>>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LeafLocation {
    pub level: f64,
    /// `arg leaf(1)`.
    pub anchor: f64,
    pub leaf: HolomorphicDisk,
    pub target_error: f64,
}

impl<'a> FoliationLadder<'a> {
    pub fn build(family: &'a TorusFamily, leaves: usize, grid: usize, config: &SolverConfig) -> Result<Self> {
        config.validate()?;
        if leaves < 8 {
            return Err(Error::InvalidInput(format!("need at least 8 leaves, got {leaves}")));
        }
        let eps = family.eps();
        let mut levels = vec![eps];
        let mut t = eps;
        while t + LADDER_SPACING < family.t_max() - 1e-9 {
            t += LADDER_SPACING;
            levels.push(t);
        }
        if family.t_max() > eps {
            levels.push(family.t_max());
        }
        let anchors = anchor_angles(leaves);
        let per_leaf = map_indexed(config.execution, leaves, |m| -> Result<Vec<BoundaryFunction>> {
            let mut disk = collar_seed(family, anchors[m], grid, config)?;
            let mut out = vec![disk.boundary.clone()];
            for &lvl in &levels[1..] {
                disk = continue_in_t(family, &disk, lvl, config)?.pop_last();
                out.push(disk.boundary.clone());
            }
            Ok(out)
        });
        let mut boundaries = vec![Vec::with_capacity(leaves); levels.len()];
        for (m, r) in per_leaf.into_iter().enumerate() {
            let path = r.map_err(|e| Error::LeafFailed {
                leaf: m,
                source: Box::new(e),
            })?;
            for (k, b) in path.into_iter().enumerate() {
                boundaries[k].push(b);
            }
        }
        Ok(Self {
            family,
            config: *config,
            anchors,
            levels,
            boundaries,
        })
    }

    pub fn levels(&self) -> &[f64] {
        &self.levels
    }

    fn encloses(boundaries: &[BoundaryFunction], w0: Complex64) -> bool {
        let pts: Vec<Complex64> = boundaries.iter().map(|b| b.coeff(0) - w0).collect();
        matches!(winding_number_of(&pts, PI), Ok(1))
    }

    fn advance(&self, from: &[BoundaryFunction], t_from: f64, t_to: f64) -> Result<Vec<BoundaryFunction>> {
        let family = self.family;
        let config = &self.config;
        map_indexed(config.execution, from.len(), |m| {
            let d = solve_disk(family, t_from, &from[m], config)?;
            Ok(continue_in_t(family, &d, t_to, config)?.pop_last().boundary)
        })
        .into_iter()
        .collect()
    }

    /// The leaf through `w0` over `λ = 0`.
    pub fn locate(&self, w0: Complex64) -> Result<LeafLocation> {
        if w0.norm() == 0.0 || !w0.norm().is_finite() {
            return Err(Error::InvalidInput("target point must be finite and nonzero".into()));
        }
        let n = self.boundaries[0][0].len();
        let eps = self.family.eps();
        if w0.norm_sqr() <= eps {
            let leaf = HolomorphicDisk::certify(self.family, w0.norm_sqr(), BoundaryFunction::constant(n, w0)?, &self.config)?;
            return Ok(LeafLocation {
                level: w0.norm_sqr(),
                anchor: w0.arg(),
                target_error: 0.0,
                leaf,
            });
        }
        let hi = (1..self.levels.len())
            .find(|&k| Self::encloses(&self.boundaries[k], w0))
            .ok_or(Error::PointNotEnclosed { re: w0.re, im: w0.im })?;
        let (mut t_lo, mut t_hi) = (self.levels[hi - 1], self.levels[hi]);
        let mut lo_b = self.boundaries[hi - 1].clone();
        let mut hi_b = self.boundaries[hi].clone();
        for _ in 0..3 {
            let t_mid = 0.5 * (t_lo + t_hi);
            let mid = self.advance(&lo_b, t_lo, t_mid)?;
            if Self::encloses(&mid, w0) {
                t_hi = t_mid;
                hi_b = mid;
            } else {
                t_lo = t_mid;
                lo_b = mid;
            }
        }
        let m = (0..hi_b.len())
            .min_by(|&a, &b| {
                (hi_b[a].coeff(0) - w0)
                    .norm()
                    .total_cmp(&(hi_b[b].coeff(0) - w0).norm())
            })
            .expect("ladder has leaves");
        let t0 = 0.5 * (t_lo + t_hi);
        let seed = solve_disk(self.family, t0, &hi_b[m], &self.config)?;
        self.newton_2d(w0, t0, seed.anchor_value().arg(), seed.boundary)
    }

    fn anchored(&self, t: f64, psi: f64, seed: &BoundaryFunction) -> Result<HolomorphicDisk> {
        let p = self.family.curve_point(Complex64::new(1.0, 0.0), psi, t)?;
        solve_disk_anchored(self.family, t, seed, p, &self.config)
    }

    fn newton_2d(&self, w0: Complex64, mut t: f64, mut psi: f64, seed: BoundaryFunction) -> Result<LeafLocation> {
        let mut leaf = self.anchored(t, psi, &seed)?;
        let mut err = leaf.center() - w0;
        let h = 1e-6;
        for _ in 0..30 {
            if err.norm() < 0.01 * TARGET_TOL {
                break;
            }
            let dt = (self.anchored(t + h, psi, &leaf.boundary)?.center() - leaf.center()) / h;
            let dp = (self.anchored(t, psi + h, &leaf.boundary)?.center() - leaf.center()) / h;
            let det = dt.re * dp.im - dt.im * dp.re;
            if det.abs() < 1e-14 {
                return Err(Error::FoliationDegenerate("singular Jacobian in the leaf search".into()));
            }
            let mut st = -(dp.im * err.re - dp.re * err.im) / det;
            let mut sp = -(-dt.im * err.re + dt.re * err.im) / det;
            let limit = (st.abs() / 0.05).max(sp.abs() / 0.3).max(1.0);
            st /= limit;
            sp /= limit;
            let mut accepted = false;
            for _ in 0..6 {
                let tt = t + st;
                if tt > 0.0 && tt <= self.family.t_max() {
                    if let Ok(trial) = self.anchored(tt, psi + sp, &leaf.boundary) {
                        let e = trial.center() - w0;
                        if e.norm() < err.norm() {
                            t = tt;
                            psi += sp;
                            leaf = trial;
                            err = e;
                            accepted = true;
                            break;
                        }
                    }
                }
                st *= 0.5;
                sp *= 0.5;
            }
            if !accepted {
                break;
            }
        }
        if err.norm() >= TARGET_TOL {
            return Err(Error::TargetToleranceMissed {
                error: err.norm(),
                tolerance: TARGET_TOL,
            });
        }
        Ok(LeafLocation {
            level: t,
            anchor: leaf.anchor_value().arg(),
            target_error: err.norm(),
            leaf,
        })
    }

    pub fn anchors(&self) -> &[f64] {
        &self.anchors
    }
}

/// One-shot search for the leaf through `w0`.
pub fn leaf_through_point(family: &TorusFamily, w0: Complex64, leaves: usize, grid: usize, config: &SolverConfig) -> Result<LeafLocation> {
    if w0.norm() == 0.0 {
        return Err(Error::InvalidInput("target point w0 = 0 lies on the zero section".into()));
    }
    FoliationLadder::build(family, leaves, grid, config)?.locate(w0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::torus::TorusFamilySpec;

    fn opts(m: usize, n: usize) -> FoliationOptions {
        FoliationOptions {
            leaves: m,
            grid: n,
            ..Default::default()
        }
    }

    #[test]
    fn standard_foliation_is_constant() {
        let fam = TorusFamily::new(TorusFamilySpec::standard()).unwrap();
        let cfg = SolverConfig::default();
        let fol = build_foliation(&fam, 1.0, &opts(16, 64), &cfg).unwrap();
        for (xi, leaf) in fol.anchors.iter().zip(&fol.leaves) {
            let c = Complex64::from_polar(1.0, *xi);
            assert!(leaf.boundary.samples().iter().all(|z| (z - c).norm() < 1e-9));
        }
        let expected = 2.0 * (PI / 16.0).sin();
        assert!((fol.disjointness_margin - expected).abs() < 1e-8);
        assert!((fol.transversality_angle - PI / 2.0).abs() < 1e-9);
    }

    #[test]
    fn duplicated_anchor_is_degenerate() {
        let fam = TorusFamily::new(TorusFamilySpec::standard()).unwrap();
        let cfg = SolverConfig::default();
        let leaf = leaf_path(&fam, 0.5, 64, 0.5, &cfg).unwrap().pop_last();
        let other = leaf_path(&fam, 2.5, 64, 0.5, &cfg).unwrap().pop_last();
        let res = Foliation::from_leaves(&fam, 0.5, vec![0.5, 0.5, 2.5], vec![leaf.clone(), leaf, other], 1e-3, &cfg);
        assert!(matches!(res, Err(Error::FoliationDegenerate(_))));
    }

    #[test]
    fn tangent_leaf_is_degenerate() {
        // At θ = 0 the trace of 0.7 + 0.5λ²⁰ runs along the fiber with speed 10.
        let fam = TorusFamily::new(TorusFamilySpec::standard()).unwrap();
        let cfg = SolverConfig::default();
        let steep = BoundaryFunction::from_modes(64, &[(0, Complex64::new(0.7, 0.0)), (20, Complex64::new(0.5, 0.0))]).unwrap();
        let disk = HolomorphicDisk {
            level: 0.49,
            trace_residual: 0.0,
            holo_residual: 0.0,
            min_modulus: 0.6,
            iterations: 0,
            residual_history: vec![],
            boundary: steep,
        };
        let res = Foliation::from_leaves(&fam, 0.49, vec![0.0], vec![disk], 0.2, &cfg);
        assert!(matches!(res, Err(Error::FoliationDegenerate(_))));
    }

    #[test]
    fn bumpy_foliation_covers_fibers() {
        let fam = TorusFamily::new(TorusFamilySpec::bumpy(0.1)).unwrap();
        let cfg = SolverConfig::default();
        let fol = build_foliation(&fam, 1.0, &opts(8, 64), &cfg).unwrap();
        assert!(fol.disjointness_margin > 0.0);
        let cover = fiber_cover_check(&fol).unwrap();
        assert!(cover.monotone);
        assert!(cover.max_level_residual < 1e-10);
        assert!(fol.seed_record.iter().all(|r| r.derivative.passed));
    }

    #[test]
    fn levels_nest() {
        let fam = TorusFamily::new(TorusFamilySpec::twisted(0.1)).unwrap();
        let cfg = SolverConfig::default();
        let inner = build_foliation(&fam, 0.5, &opts(8, 64), &cfg).unwrap();
        let outer = build_foliation(&fam, 0.8, &opts(8, 64), &cfg).unwrap();
        let curve: Vec<Complex64> = outer.leaves.iter().map(|l| l.center()).collect();
        for leaf in &inner.leaves {
            let pts: Vec<Complex64> = curve.iter().map(|c| c - leaf.center()).collect();
            assert_eq!(winding_number_of(&pts, PI).unwrap(), 1);
        }
    }

    #[test]
    fn standard_point_search_is_closed_form() {
        let fam = TorusFamily::new(TorusFamilySpec::standard()).unwrap();
        let cfg = SolverConfig::default();
        let w0 = Complex64::from_polar(0.5, PI / 3.0);
        let loc = leaf_through_point(&fam, w0, 8, 64, &cfg).unwrap();
        assert!((loc.level - 0.25).abs() < 1e-8);
        assert!((loc.anchor - PI / 3.0).abs() < 1e-8);
        assert!(loc.leaf.boundary.samples().iter().all(|z| (z - w0).norm() < 1e-8));
        assert!(matches!(
            leaf_through_point(&fam, Complex64::new(0.0, 0.0), 8, 64, &cfg),
            Err(Error::InvalidInput(_))
        ));
        assert!(matches!(
            leaf_through_point(&fam, Complex64::new(3.0, 0.0), 8, 64, &cfg),
            Err(Error::PointNotEnclosed { .. })
        ));
    }

    #[test]
    fn collar_point_search() {
        let fam = TorusFamily::new(TorusFamilySpec::twisted(0.1)).unwrap();
        let w0 = Complex64::new(0.1, -0.1);
        let loc = leaf_through_point(&fam, w0, 8, 64, &SolverConfig::default()).unwrap();
        assert_eq!(loc.level, w0.norm_sqr());
        assert_eq!(loc.target_error, 0.0);
    }

    #[test]
    fn bumpy_point_search_certifies() {
        let fam = TorusFamily::new(TorusFamilySpec::bumpy(0.1)).unwrap();
        let w0 = Complex64::new(0.0, 0.8);
        let loc = leaf_through_point(&fam, w0, 8, 64, &SolverConfig::default()).unwrap();
        assert!((loc.leaf.center() - w0).norm() < 1e-8);
        assert!(loc.leaf.trace_residual < 1e-10);
    }

    #[test]
    fn uniqueness_and_negative_control() {
        let fam = TorusFamily::new(TorusFamilySpec::twisted(0.1)).unwrap();
        let cfg = SolverConfig::default();
        let a = leaf_path(&fam, 0.0, 64, 1.0, &cfg).unwrap().pop_last();
        let b = leaf_path(&fam, PI, 64, 1.0, &cfg).unwrap().pop_last();
        assert!(uniqueness_probe(&fam, &a, 1e-2, &cfg).unwrap() < 1e-7);
        assert!(a.boundary.sup_distance(&b.boundary) > 1.0);
    }
}
