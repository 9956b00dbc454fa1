//! Smooth families of star-shaped graphical tori `Γ^t` over the unit circle.
//!
//! Every fiber `C^t_λ` is the radial graph `ψ ↦ r(λ, ψ, t) e^{iψ}` with
//!
//! ```text
//! r(λ, ψ, t) = √t · (1 + s(t) (ρ(λ, ψ, √t) − 1))
//! ```
//!
//! where `s` is a C^∞ ramp vanishing for `t <= ε` (so the fibers are the
//! standard circles `|w|² = t` there) and `ρ` is either a double Fourier
//! series `r₁(λ, ψ)` (torus specs read from JSON) or a tabulated profile
//! (tori generated by flowing circles with a motion). The defining function
//! `F(λ, w)` inverts `r` in `t` by a safeguarded Newton iteration.

use std::collections::{BTreeMap, HashMap};
use std::f64::consts::{PI, TAU};
use std::sync::{Arc, Mutex};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::circle::winding_number_of;
use crate::error::{Error, Result};

pub const DEFAULT_EPS: f64 = 0.05;
pub const DEFAULT_T_MAX: f64 = 1.0;

/// Threshold below which `F_w` is treated as vanishing.
pub const GRADIENT_FLOOR: f64 = 1e-8;

const FD_STEP: f64 = 1e-5;
const MAX_SLICE_MODES: usize = 128;

/// One term `Re(c · e^{i(k_λ arg λ + k_ψ ψ)})` of the radial profile `r₁`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProfileTerm {
    pub k_lambda: i32,
    pub k_psi: i32,
    pub coeff: Complex64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FourierProfile {
    terms: Vec<ProfileTerm>,
}

impl FourierProfile {
    pub fn new(mut terms: Vec<ProfileTerm>) -> Self {
        terms.sort_by_key(|t| (t.k_lambda, t.k_psi));
        Self { terms }
    }

    /// `(k_λ, k_ψ, Re c, Im c)` tuples.
    pub fn from_tuples(terms: &[(i32, i32, f64, f64)]) -> Self {
        Self::new(
            terms
                .iter()
                .map(|&(k_lambda, k_psi, re, im)| ProfileTerm {
                    k_lambda,
                    k_psi,
                    coeff: Complex64::new(re, im),
                })
                .collect(),
        )
    }

    pub fn terms(&self) -> &[ProfileTerm] {
        &self.terms
    }

    pub fn eval(&self, lambda_angle: f64, psi: f64) -> f64 {
        self.terms
            .iter()
            .map(|t| {
                (t.coeff
                    * Complex64::from_polar(1.0, t.k_lambda as f64 * lambda_angle + t.k_psi as f64 * psi))
                    .re
            })
            .sum()
    }

    /// Terms grouped by `k_ψ` after fixing `arg λ`.
    fn restrict(&self, lambda_angle: f64) -> Vec<(f64, Complex64)> {
        let mut by_k: BTreeMap<i32, Complex64> = BTreeMap::new();
        for t in &self.terms {
            *by_k.entry(t.k_psi).or_default() += t.coeff * Complex64::from_polar(1.0, t.k_lambda as f64 * lambda_angle);
        }
        by_k.into_iter().map(|(k, c)| (k as f64, c)).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ValidationGrid {
    pub n_lambda: usize,
    pub n_psi: usize,
    pub n_t: usize,
}

impl Default for ValidationGrid {
    fn default() -> Self {
        Self {
            n_lambda: 16,
            n_psi: 64,
            n_t: 40,
        }
    }
}

/// The t = 1 radial profile `r₁` plus the collar parameter.
#[derive(Debug, Clone, PartialEq)]
pub struct TorusFamilySpec {
    pub profile: FourierProfile,
    pub eps: f64,
    pub t_max: f64,
    pub validation: ValidationGrid,
}

impl TorusFamilySpec {
    pub fn new(profile: FourierProfile) -> Self {
        Self {
            profile,
            eps: DEFAULT_EPS,
            t_max: DEFAULT_T_MAX,
            validation: ValidationGrid::default(),
        }
    }

    /// `r₁ ≡ 1`.
    pub fn standard() -> Self {
        Self::new(FourierProfile::from_tuples(&[(0, 0, 1.0, 0.0)]))
    }

    /// `r₁ = 1 + amp·cos ψ`.
    pub fn bumpy(amp: f64) -> Self {
        Self::new(FourierProfile::from_tuples(&[(0, 0, 1.0, 0.0), (0, 1, amp, 0.0)]))
    }

    /// `r₁ = 1 + amp·cos(ψ − arg λ)`.
    pub fn twisted(amp: f64) -> Self {
        Self::new(FourierProfile::from_tuples(&[(0, 0, 1.0, 0.0), (-1, 1, amp, 0.0)]))
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let repr: SpecRepr = serde_json::from_str(text).map_err(|e| Error::InvalidInput(e.to_string()))?;
        let mut terms = Vec::new();
        for (key, [re, im]) in &repr.profile {
            let (a, b) = key
                .split_once(',')
                .ok_or_else(|| Error::InvalidInput(format!("profile key {key:?} is not \"k_lambda,k_psi\"")))?;
            let parse = |s: &str| {
                s.trim()
                    .trim_matches(|c| c == '(' || c == ')')
                    .parse::<i32>()
                    .map_err(|e| Error::InvalidInput(format!("profile key {key:?}: {e}")))
            };
            terms.push(ProfileTerm {
                k_lambda: parse(a)?,
                k_psi: parse(b)?,
                coeff: Complex64::new(*re, *im),
            });
        }
        let spec = Self {
            profile: FourierProfile::new(terms),
            eps: repr.eps,
            t_max: repr.t_max,
            validation: repr.validation,
        };
        if !(spec.eps > 0.0 && spec.eps < 1.0) {
            return Err(Error::InvalidInput(format!("eps = {} must lie in (0, 1)", spec.eps)));
        }
        if spec.t_max <= spec.eps {
            return Err(Error::InvalidInput("t_max must exceed eps".into()));
        }
        Ok(spec)
    }

    pub fn to_json(&self) -> String {
        let profile = self
            .profile
            .terms
            .iter()
            .map(|t| (format!("{},{}", t.k_lambda, t.k_psi), [t.coeff.re, t.coeff.im]))
            .collect();
        serde_json::to_string_pretty(&SpecRepr {
            profile,
            eps: self.eps,
            t_max: self.t_max,
            validation: self.validation,
        })
        .expect("spec serialises")
    }
}

fn default_eps() -> f64 {
    DEFAULT_EPS
}
fn default_t_max() -> f64 {
    DEFAULT_T_MAX
}

#[derive(Serialize, Deserialize)]
struct SpecRepr {
    profile: BTreeMap<String, [f64; 2]>,
    #[serde(default = "default_eps")]
    eps: f64,
    #[serde(default = "default_t_max")]
    t_max: f64,
    #[serde(default)]
    validation: ValidationGrid,
}

/// `σ(x) = h(x) / (h(x) + h(1−x))`, `h(x) = e^{−1/x}`: C^∞, 0 below 0, 1 above 1.
pub(crate) fn smooth_step(x: f64) -> (f64, f64) {
    if x <= 0.0 {
        return (0.0, 0.0);
    }
    if x >= 1.0 {
        return (1.0, 0.0);
    }
    let h = |y: f64| (-1.0 / y).exp();
    let (a, b) = (h(x), h(1.0 - x));
    let (da, db) = (a / (x * x), b / ((1.0 - x) * (1.0 - x)));
    let den = a + b;
    (a / den, (da * b + a * db) / (den * den))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Ramp {
    /// `s(t) = σ((t − ε)/(1 − ε))`.
    Linear { eps: f64 },
    /// `s(t) = σ(ln(t/ε) / ln(full/ε))`.
    Log { eps: f64, full: f64 },
}

impl Ramp {
    pub fn eps(&self) -> f64 {
        match *self {
            Ramp::Linear { eps } | Ramp::Log { eps, .. } => eps,
        }
    }

    /// `(s(t), s'(t))`.
    pub fn eval(&self, t: f64) -> (f64, f64) {
        match *self {
            Ramp::Linear { eps } => {
                let (s, ds) = smooth_step((t - eps) / (1.0 - eps));
                (s, ds / (1.0 - eps))
            }
            Ramp::Log { eps, full } => {
                if t <= eps {
                    return (0.0, 0.0);
                }
                let span = (full / eps).ln();
                let (s, ds) = smooth_step((t / eps).ln() / span);
                (s, ds / (t * span))
            }
        }
    }
}

/// Chebyshev (in `u = √t`) × Fourier (in `arg λ`, `ψ`) table of `ρ`.
#[derive(Debug)]
pub struct TabulatedProfile {
    u_lo: f64,
    u_hi: f64,
    n_theta: usize,
    /// `[m][kθ][kψ]` for `m < n_cheb`, `kθ` in FFT order, `0 <= kψ < k_psi_len`.
    spectrum: Vec<Complex64>,
    n_cheb: usize,
    k_theta: Vec<i64>,
    k_psi_len: usize,
    cache_n: usize,
    cache: Vec<Arc<ProfileSlice>>,
    /// Off-grid slices keyed by the bits of `φ`.
    memo: Mutex<HashMap<u64, Arc<ProfileSlice>>>,
}

const MEMO_LIMIT: usize = 8192;

/// A tabulated profile restricted to one `λ`.
#[derive(Debug)]
pub struct ProfileSlice {
    u_lo: f64,
    u_hi: f64,
    n_cheb: usize,
    k_len: usize,
    /// `[m][k]`, already weighted (×2 for `k > 0`).
    coeffs: Vec<Complex64>,
}

impl TabulatedProfile {
    /// Chebyshev–Gauss nodes in `u` for a table with `n_u` levels.
    pub fn u_nodes(u_lo: f64, u_hi: f64, n_u: usize) -> Vec<f64> {
        (0..n_u)
            .map(|l| {
                let x = (PI * (l as f64 + 0.5) / n_u as f64).cos();
                0.5 * (u_lo + u_hi) + 0.5 * (u_hi - u_lo) * x
            })
            .collect()
    }

    /// `values[a][l][j]` = `ρ(θ_a, ψ_j, u_l)` with `θ_a = 2πa/n_theta`,
    /// `ψ_j = 2πj/n_psi` and `u_l` from [`Self::u_nodes`].
    pub fn from_samples(u_lo: f64, u_hi: f64, values: &[Vec<Vec<f64>>], cache_n: usize) -> Result<Self> {
        let n_theta = values.len();
        let n_u = values.first().map_or(0, Vec::len);
        let n_psi = values.first().and_then(|v| v.first()).map_or(0, Vec::len);
        if n_theta < 4 || n_u < 2 || n_psi < 4 {
            return Err(Error::InvalidInput("tabulated profile too small".into()));
        }
        if n_psi > 2 * MAX_SLICE_MODES {
            return Err(Error::InvalidInput(format!("at most {} ψ samples", 2 * MAX_SLICE_MODES)));
        }
        // Chebyshev coefficients along u.
        let mut cheb = vec![vec![vec![0.0; n_psi]; n_theta]; n_u];
        for a in 0..n_theta {
            for j in 0..n_psi {
                for (m, plane) in cheb.iter_mut().enumerate() {
                    let mut acc = 0.0;
                    for l in 0..n_u {
                        acc += values[a][l][j] * (m as f64 * PI * (l as f64 + 0.5) / n_u as f64).cos();
                    }
                    let w = if m == 0 { 1.0 } else { 2.0 };
                    plane[a][j] = w * acc / n_u as f64;
                }
            }
        }
        let half_t = n_theta / 2;
        let half_p = n_psi / 2;
        let k_theta: Vec<i64> = (0..n_theta)
            .map(|a| crate::circle::frequency(a, n_theta))
            .filter(|&k| k.abs() < half_t as i64)
            .collect();
        let mut spectrum = Vec::with_capacity(n_u * k_theta.len() * half_p);
        for plane in &cheb {
            for &kt in &k_theta {
                for kp in 0..half_p {
                    let mut acc = Complex64::new(0.0, 0.0);
                    for (a, row) in plane.iter().enumerate() {
                        let th = TAU * a as f64 / n_theta as f64;
                        for (j, &v) in row.iter().enumerate() {
                            let ps = TAU * j as f64 / n_psi as f64;
                            acc += v * Complex64::from_polar(1.0, -(kt as f64 * th + kp as f64 * ps));
                        }
                    }
                    spectrum.push(acc / (n_theta * n_psi) as f64);
                }
            }
        }
        // Trim negligible Chebyshev and ψ modes.
        let scale = spectrum.iter().fold(0.0_f64, |m, c| m.max(c.norm())).max(1.0);
        let floor = 1e-14 * scale;
        let kt_len = k_theta.len();
        let idx = |m: usize, a: usize, k: usize| (m * kt_len + a) * half_p + k;
        let mut n_cheb = 1;
        let mut k_psi_len = 1;
        for m in 0..n_u {
            for a in 0..kt_len {
                for k in 0..half_p {
                    if spectrum[idx(m, a, k)].norm() > floor {
                        n_cheb = n_cheb.max(m + 1);
                        k_psi_len = k_psi_len.max(k + 1);
                    }
                }
            }
        }
        let mut trimmed = Vec::with_capacity(n_cheb * kt_len * k_psi_len);
        for m in 0..n_cheb {
            for a in 0..kt_len {
                for k in 0..k_psi_len {
                    trimmed.push(spectrum[idx(m, a, k)]);
                }
            }
        }
        let mut out = Self {
            u_lo,
            u_hi,
            n_theta,
            spectrum: trimmed,
            n_cheb,
            k_theta,
            k_psi_len,
            cache_n: 0,
            cache: Vec::new(),
            memo: Mutex::new(HashMap::new()),
        };
        if cache_n > 0 {
            out.cache = (0..cache_n)
                .map(|j| Arc::new(out.compute_slice(TAU * j as f64 / cache_n as f64)))
                .collect();
            out.cache_n = cache_n;
        }
        Ok(out)
    }

    pub fn n_theta(&self) -> usize {
        self.n_theta
    }

    fn compute_slice(&self, phi: f64) -> ProfileSlice {
        let kt_len = self.k_theta.len();
        let phases: Vec<Complex64> = self
            .k_theta
            .iter()
            .map(|&k| Complex64::from_polar(1.0, k as f64 * phi))
            .collect();
        let mut coeffs = Vec::with_capacity(self.n_cheb * self.k_psi_len);
        for m in 0..self.n_cheb {
            for k in 0..self.k_psi_len {
                let mut acc = Complex64::new(0.0, 0.0);
                for (a, ph) in phases.iter().enumerate() {
                    acc += self.spectrum[(m * kt_len + a) * self.k_psi_len + k] * ph;
                }
                coeffs.push(if k == 0 { acc } else { 2.0 * acc });
            }
        }
        ProfileSlice {
            u_lo: self.u_lo,
            u_hi: self.u_hi,
            n_cheb: self.n_cheb,
            k_len: self.k_psi_len,
            coeffs,
        }
    }

    fn slice(&self, phi: f64) -> Arc<ProfileSlice> {
        if self.cache_n > 0 {
            let pos = phi.rem_euclid(TAU) * self.cache_n as f64 / TAU;
            let j = pos.round();
            if (pos - j).abs() < 1e-9 {
                return self.cache[(j as usize) % self.cache_n].clone();
            }
        }
        let key = phi.to_bits();
        if let Some(hit) = self.memo.lock().expect("memo lock").get(&key) {
            return hit.clone();
        }
        let slice = Arc::new(self.compute_slice(phi));
        let mut memo = self.memo.lock().expect("memo lock");
        if memo.len() >= MEMO_LIMIT {
            memo.clear();
        }
        memo.insert(key, slice.clone());
        slice
    }

    /// Direct evaluation (slow path, used for checks).
    pub fn eval(&self, phi: f64, psi: f64, u: f64) -> f64 {
        self.compute_slice(phi).eval(psi, u).0
    }
}

impl ProfileSlice {
    /// `(ρ, ∂ρ/∂u, ∂ρ/∂ψ)`.
    fn eval(&self, psi: f64, u: f64) -> (f64, f64, f64) {
        let half = 0.5 * (self.u_hi - self.u_lo);
        let mut x = (u - 0.5 * (self.u_lo + self.u_hi)) / half;
        let clamped = !(-1.0..=1.0).contains(&x);
        x = x.clamp(-1.0, 1.0);
        let step = Complex64::from_polar(1.0, psi);
        let mut e = Complex64::new(1.0, 0.0);
        let mut basis = [Complex64::new(0.0, 0.0); MAX_SLICE_MODES];
        let k_len = self.k_len;
        for b in basis.iter_mut().take(k_len) {
            *b = e;
            e *= step;
        }
        // T_m and T_m' by the three-term recurrence.
        let (mut t0, mut t1) = (1.0, x);
        let (mut d0, mut d1) = (0.0, 1.0);
        let mut rho = 0.0;
        let mut rho_x = 0.0;
        let mut rho_psi = 0.0;
        for m in 0..self.n_cheb {
            let (tm, dtm) = match m {
                0 => (1.0, 0.0),
                1 => (x, 1.0),
                _ => {
                    let t2 = 2.0 * x * t1 - t0;
                    let d2 = 2.0 * t1 + 2.0 * x * d1 - d0;
                    (t0, t1, d0, d1) = (t1, t2, d1, d2);
                    (t2, d2)
                }
            };
            let row = &self.coeffs[m * self.k_len..m * self.k_len + k_len];
            let mut val = Complex64::new(0.0, 0.0);
            let mut dval = Complex64::new(0.0, 0.0);
            for (k, (c, b)) in row.iter().zip(&basis[..k_len]).enumerate() {
                let term = c * b;
                val += term;
                dval += term * k as f64;
            }
            rho += tm * val.re;
            rho_x += dtm * val.re;
            rho_psi += tm * (-dval.im);
        }
        let rho_u = if clamped { 0.0 } else { rho_x / half };
        (rho, rho_u, rho_psi)
    }
}

#[derive(Debug, Clone)]
enum Shape {
    Fourier(FourierProfile),
    Tabulated(Arc<TabulatedProfile>),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RadialSample {
    pub r: f64,
    pub dr_dt: f64,
    pub dr_dpsi: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub passed: bool,
    pub min_radius: f64,
    pub min_dr_dt: f64,
    pub min_grad_w: f64,
    pub collar_max_deviation: f64,
    pub winding_failures: usize,
    pub failures: Vec<String>,
    pub grid: ValidationGrid,
}

/// A validated, immutable family of graphical tori.
#[derive(Debug, Clone)]
pub struct TorusFamily {
    shape: Shape,
    ramp: Ramp,
    t_max: f64,
    spec: Option<TorusFamilySpec>,
    report: ValidationReport,
}

impl TorusFamily {
    pub fn new(spec: TorusFamilySpec) -> Result<Self> {
        let mut fam = Self {
            shape: Shape::Fourier(spec.profile.clone()),
            ramp: Ramp::Linear { eps: spec.eps },
            t_max: spec.t_max,
            report: ValidationReport::empty(spec.validation),
            spec: Some(spec.clone()),
        };
        fam.report = fam.validate(spec.validation);
        fam.into_validated()
    }

    /// Runs the structural checks without failing.
    pub fn validate_spec(spec: &TorusFamilySpec) -> ValidationReport {
        let fam = Self {
            shape: Shape::Fourier(spec.profile.clone()),
            ramp: Ramp::Linear { eps: spec.eps },
            t_max: spec.t_max,
            report: ValidationReport::empty(spec.validation),
            spec: Some(spec.clone()),
        };
        fam.validate(spec.validation)
    }

    pub fn from_tabulated(profile: TabulatedProfile, ramp: Ramp, t_max: f64, grid: ValidationGrid) -> Result<Self> {
        let mut fam = Self {
            shape: Shape::Tabulated(Arc::new(profile)),
            ramp,
            t_max,
            spec: None,
            report: ValidationReport::empty(grid),
        };
        fam.report = fam.validate(grid);
        fam.into_validated()
    }

    fn into_validated(self) -> Result<Self> {
        if self.report.passed {
            Ok(self)
        } else {
            Err(Error::InvalidFamily(self.report.failures.join("; ")))
        }
    }

    pub fn eps(&self) -> f64 {
        self.ramp.eps()
    }

    pub fn t_max(&self) -> f64 {
        self.t_max
    }

    pub fn ramp(&self) -> Ramp {
        self.ramp
    }

    pub fn spec(&self) -> Option<&TorusFamilySpec> {
        self.spec.as_ref()
    }

    pub fn report(&self) -> &ValidationReport {
        &self.report
    }

    /// Whether the fibers do not depend on `λ`.
    pub fn is_lambda_independent(&self) -> bool {
        match &self.shape {
            Shape::Fourier(p) => p.terms.iter().all(|t| t.k_lambda == 0 || t.coeff.norm() == 0.0),
            Shape::Tabulated(_) => false,
        }
    }

    pub fn fiber(&self, lambda: Complex64) -> Fiber<'_> {
        let phi = lambda.arg();
        let kind = match &self.shape {
            Shape::Fourier(p) => FiberKind::Fourier(p.restrict(phi)),
            Shape::Tabulated(t) => FiberKind::Tabulated(t.slice(phi)),
        };
        Fiber {
            family: self,
            lambda: Complex64::from_polar(1.0, phi),
            kind,
        }
    }

    /// Fibers over the `n`-point boundary grid.
    pub fn fibers(&self, n: usize) -> Vec<Fiber<'_>> {
        (0..n)
            .map(|j| self.fiber(Complex64::from_polar(1.0, TAU * j as f64 / n as f64)))
            .collect()
    }

    fn check_unit(lambda: Complex64) -> Result<()> {
        if (lambda.norm() - 1.0).abs() > 1e-9 {
            return Err(Error::OutOfRange(format!("|λ| = {} but the torus lives over |λ| = 1", lambda.norm())));
        }
        Ok(())
    }

    pub fn curve_point(&self, lambda: Complex64, psi: f64, t: f64) -> Result<Complex64> {
        Self::check_unit(lambda)?;
        self.fiber(lambda).curve_point(psi, t)
    }

    pub fn radius(&self, lambda: Complex64, psi: f64, t: f64) -> Result<RadialSample> {
        Self::check_unit(lambda)?;
        self.fiber(lambda).radius(psi, t)
    }

    /// The defining function `F(λ, w)`.
    pub fn level(&self, lambda: Complex64, w: Complex64) -> Result<f64> {
        self.fiber(lambda).level(w)
    }

    /// Wirtinger derivatives `(F_w, F_λ)` by central differences.
    ///
    /// `F` is extended off the circle as a function of `arg λ` only, so
    /// `F_λ = −i ∂_φF / (2λ)` at `|λ| = 1`.
    pub fn gradients(&self, lambda: Complex64, w: Complex64) -> Result<(Complex64, Complex64)> {
        let fiber = self.fiber(lambda);
        let fw = fiber.gradient_w(w)?;
        let fl = self.lambda_derivative(lambda, w)?;
        Ok((fw, fl))
    }

    pub(crate) fn lambda_derivative(&self, lambda: Complex64, w: Complex64) -> Result<Complex64> {
        let lam = lambda / lambda.norm();
        let rot = Complex64::from_polar(1.0, FD_STEP);
        let fp = self.level(lam * rot, w)?;
        let fm = self.level(lam / rot, w)?;
        let dphi = (fp - fm) / (2.0 * FD_STEP);
        Ok(Complex64::new(0.0, -1.0) * dphi / (2.0 * lam))
    }

    fn validate(&self, grid: ValidationGrid) -> ValidationReport {
        let eps = self.eps();
        let mut rep = ValidationReport::empty(grid);
        rep.min_radius = f64::INFINITY;
        rep.min_dr_dt = f64::INFINITY;
        rep.min_grad_w = f64::INFINITY;
        let mut levels: Vec<f64> = (1..=4).map(|i| eps * i as f64 / 4.0).collect();
        levels.extend((1..=grid.n_t).map(|i| self.t_max * i as f64 / grid.n_t as f64));
        let mut grad_checked = true;
        for a in 0..grid.n_lambda {
            let fiber = self.fiber(Complex64::from_polar(1.0, TAU * a as f64 / grid.n_lambda as f64));
            for &t in &levels {
                let mut pts = Vec::with_capacity(grid.n_psi);
                for j in 0..grid.n_psi {
                    let psi = TAU * j as f64 / grid.n_psi as f64;
                    let rs = match fiber.radius(psi, t) {
                        Ok(rs) => rs,
                        Err(_) => continue,
                    };
                    rep.min_radius = rep.min_radius.min(rs.r);
                    rep.min_dr_dt = rep.min_dr_dt.min(rs.dr_dt);
                    if t <= eps {
                        rep.collar_max_deviation = rep.collar_max_deviation.max((rs.r - t.sqrt()).abs());
                    }
                    pts.push(Complex64::from_polar(rs.r, psi));
                }
                if winding_number_of(&pts, PI / 2.0).map_or(true, |w| w != 1) {
                    rep.winding_failures += 1;
                }
            }
        }
        if rep.min_radius <= 0.0 {
            rep.failures
                .push(format!("radial profile not positive (min r = {:.4})", rep.min_radius));
            grad_checked = false;
        }
        if rep.min_dr_dt <= 0.0 {
            rep.failures.push(format!(
                "fibers not monotone in t (min dr/dt = {:.4}); levels would not foliate C \\ {{0}}",
                rep.min_dr_dt
            ));
            grad_checked = false;
        }
        if rep.winding_failures > 0 {
            rep.failures
                .push(format!("{} fibers without winding number 1 about 0", rep.winding_failures));
        }
        if rep.collar_max_deviation > 1e-14 {
            rep.failures.push(format!(
                "collar condition |w|^2 = t violated by {:.3e}",
                rep.collar_max_deviation
            ));
        }
        if grad_checked {
            for a in 0..grid.n_lambda {
                let fiber = self.fiber(Complex64::from_polar(1.0, TAU * a as f64 / grid.n_lambda as f64));
                for &t in levels.iter().step_by(4) {
                    for j in (0..grid.n_psi).step_by(4) {
                        let psi = TAU * j as f64 / grid.n_psi as f64;
                        let g = fiber
                            .curve_point(psi, t)
                            .and_then(|w| fiber.gradient_w(w))
                            .map_or(0.0, |g| g.norm());
                        rep.min_grad_w = rep.min_grad_w.min(g);
                    }
                }
            }
            if rep.min_grad_w < GRADIENT_FLOOR {
                rep.failures
                    .push(format!("degenerate gradient: min |F_w| = {:.3e}", rep.min_grad_w));
            }
        } else {
            rep.min_grad_w = 0.0;
        }
        rep.passed = rep.failures.is_empty();
        rep
    }
}

impl ValidationReport {
    fn empty(grid: ValidationGrid) -> Self {
        Self {
            passed: false,
            min_radius: 0.0,
            min_dr_dt: 0.0,
            min_grad_w: 0.0,
            collar_max_deviation: 0.0,
            winding_failures: 0,
            failures: Vec::new(),
            grid,
        }
    }
}

#[derive(Debug, Clone)]
enum FiberKind {
    Fourier(Vec<(f64, Complex64)>),
    Tabulated(Arc<ProfileSlice>),
}

/// The family restricted to one boundary point `λ`.
#[derive(Debug, Clone)]
pub struct Fiber<'a> {
    family: &'a TorusFamily,
    lambda: Complex64,
    kind: FiberKind,
}

impl<'a> Fiber<'a> {
    pub fn lambda(&self) -> Complex64 {
        self.lambda
    }

    pub fn family(&self) -> &'a TorusFamily {
        self.family
    }

    fn profile(&self, psi: f64, u: f64) -> (f64, f64, f64) {
        match &self.kind {
            FiberKind::Fourier(terms) => {
                let mut rho = 0.0;
                let mut rho_psi = 0.0;
                for &(k, c) in terms {
                    let z = c * Complex64::from_polar(1.0, k * psi);
                    rho += z.re;
                    rho_psi -= k * z.im;
                }
                (rho, 0.0, rho_psi)
            }
            FiberKind::Tabulated(slice) => slice.eval(psi, u),
        }
    }

    /// `(r, ∂r/∂u, ∂r/∂ψ)` at `u = √t`.
    fn radial_u(&self, psi: f64, u: f64) -> (f64, f64, f64) {
        let t = u * u;
        let (s, ds_dt) = self.family.ramp.eval(t);
        if s == 0.0 && ds_dt == 0.0 {
            return (u, 1.0, 0.0);
        }
        let (rho, rho_u, rho_psi) = self.profile(psi, u);
        let base = 1.0 + s * (rho - 1.0);
        let r = u * base;
        let dr_du = base + u * (2.0 * u * ds_dt * (rho - 1.0) + s * rho_u);
        (r, dr_du, u * s * rho_psi)
    }

    pub fn radius(&self, psi: f64, t: f64) -> Result<RadialSample> {
        if !(t > 0.0) {
            return Err(Error::OutOfRange(format!("level t = {t} must be positive")));
        }
        let u = t.sqrt();
        let (r, dr_du, dr_dpsi) = self.radial_u(psi, u);
        Ok(RadialSample {
            r,
            dr_dt: dr_du / (2.0 * u),
            dr_dpsi,
        })
    }

    pub fn curve_point(&self, psi: f64, t: f64) -> Result<Complex64> {
        Ok(Complex64::from_polar(self.radius(psi, t)?.r, psi))
    }

    /// Tangent `∂_ψ` of the fiber curve at angle `ψ`.
    pub fn fiber_tangent(&self, psi: f64, t: f64) -> Result<Complex64> {
        let rs = self.radius(psi, t)?;
        Ok(Complex64::new(rs.dr_dpsi, rs.r) * Complex64::from_polar(1.0, psi))
    }

    pub fn level(&self, w: Complex64) -> Result<f64> {
        let m = w.norm();
        if m == 0.0 {
            return Err(Error::ZeroSection);
        }
        if !m.is_finite() {
            return Err(Error::OutOfRange("non-finite point".into()));
        }
        let eps = self.family.eps();
        if w.norm_sqr() <= eps {
            return Ok(w.norm_sqr());
        }
        let psi = w.arg();
        let mut lo = eps.sqrt();
        let mut hi = (2.0 * lo).max(1.5 * m);
        let mut expand = 0;
        while self.radial_u(psi, hi).0 < m {
            lo = hi;
            hi *= 2.0;
            expand += 1;
            if expand > 80 {
                return Err(Error::OutOfRange(format!("no level found for |w| = {m}")));
            }
        }
        let (r1, _, _) = self.radial_u(psi, m);
        let mut u = if r1 > 0.0 { m * m / r1 } else { 0.5 * (lo + hi) };
        if !(u > lo && u < hi) {
            u = 0.5 * (lo + hi);
        }
        for _ in 0..200 {
            let (r, dr, _) = self.radial_u(psi, u);
            let f = r - m;
            if f > 0.0 {
                hi = u;
            } else {
                lo = u;
            }
            if f.abs() <= 2.0 * f64::EPSILON * m {
                break;
            }
            let mut next = u - f / dr;
            if !(next > lo && next < hi) || !dr.is_finite() || dr <= 0.0 {
                next = 0.5 * (lo + hi);
            }
            if (next - u).abs() <= 2.0 * f64::EPSILON * u || hi - lo <= 4.0 * f64::EPSILON * u {
                u = next;
                break;
            }
            u = next;
        }
        Ok(u * u)
    }

    /// `F_w = ½(F_x − iF_y)` by central differences with `h = 1e−5·max(1, |w|)`.
    pub fn gradient_w(&self, w: Complex64) -> Result<Complex64> {
        let h = FD_STEP * w.norm().max(1.0);
        let g = if w.norm() <= 2.0 * h {
            // Collar: F = |w|² exactly on the stencil.
            w.conj()
        } else {
            let fx = (self.level(w + h)? - self.level(w - h)?) / (2.0 * h);
            let ih = Complex64::new(0.0, h);
            let fy = (self.level(w + ih)? - self.level(w - ih)?) / (2.0 * h);
            Complex64::new(0.5 * fx, -0.5 * fy)
        };
        if g.norm() < GRADIENT_FLOOR {
            return Err(Error::DegenerateGradient { magnitude: g.norm() });
        }
        Ok(g)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn lam(phi: f64) -> Complex64 {
        Complex64::from_polar(1.0, phi)
    }

    #[test]
    fn curve_point_examples() {
        let fam = TorusFamily::new(TorusFamilySpec::bumpy(0.2)).unwrap();
        let eps = fam.eps();
        let w = fam.curve_point(lam(1.3), 0.0, eps / 2.0).unwrap();
        assert!((w - Complex64::new((eps / 2.0).sqrt(), 0.0)).norm() < 1e-15);
        let w = fam.curve_point(lam(0.0), 0.0, 1.0).unwrap();
        assert!((w - Complex64::new(1.2, 0.0)).norm() < 1e-14);
        assert!(matches!(fam.curve_point(lam(0.0), 0.0, 0.0), Err(Error::OutOfRange(_))));

        let std = TorusFamily::new(TorusFamilySpec::standard()).unwrap();
        for &(phi, psi, t) in &[(0.3, 2.0, 0.7), (5.0, -1.0, 0.01), (1.0, 0.5, 1.0)] {
            let w = std.curve_point(lam(phi), psi, t).unwrap();
            assert!((w - Complex64::from_polar(t.sqrt(), psi)).norm() < 1e-15);
        }
    }

    #[test]
    fn level_examples() {
        let std = TorusFamily::new(TorusFamilySpec::standard()).unwrap();
        assert!((std.level(lam(0.4), Complex64::from_polar(0.5, 2.2)).unwrap() - 0.25).abs() < 1e-15);
        let bumpy = TorusFamily::new(TorusFamilySpec::bumpy(0.2)).unwrap();
        let eps = bumpy.eps();
        let w = Complex64::from_polar((eps / 2.0).sqrt(), 1.0);
        assert!((bumpy.level(lam(2.0), w).unwrap() - eps / 2.0).abs() < 1e-16);
        assert!((bumpy.level(lam(0.0), Complex64::new(1.2, 0.0)).unwrap() - 1.0).abs() < 1e-13);
        assert!(matches!(bumpy.level(lam(0.0), Complex64::new(0.0, 0.0)), Err(Error::ZeroSection)));
    }

    #[test]
    fn level_residual_is_tight() {
        let fam = TorusFamily::new(TorusFamilySpec::twisted(0.1)).unwrap();
        let fiber = fam.fiber(lam(0.77));
        for &w in &[Complex64::new(0.6, 0.5), Complex64::new(-1.1, 0.1), Complex64::new(0.0, -0.35)] {
            let t = fiber.level(w).unwrap();
            let r = fiber.radius(w.arg(), t).unwrap().r;
            assert!((r - w.norm()).abs() < 1e-12);
        }
    }

    #[test]
    fn gradient_examples() {
        let std = TorusFamily::new(TorusFamilySpec::standard()).unwrap();
        let w = Complex64::new(0.4, -0.7);
        let (fw, fl) = std.gradients(lam(1.0), w).unwrap();
        assert!((fw - w.conj()).norm() < 1e-9);
        assert!(fl.norm() < 1e-9);

        let twisted = TorusFamily::new(TorusFamilySpec::twisted(0.1)).unwrap();
        let w = Complex64::from_polar(0.9 * twisted.eps().sqrt(), 0.4);
        let (fw, fl) = twisted.gradients(lam(2.5), w).unwrap();
        assert!((fw - w.conj()).norm() < 1e-9);
        assert!(fl.norm() < 1e-9);
    }

    #[test]
    fn gradient_richardson_consistency() {
        let fam = TorusFamily::new(TorusFamilySpec::bumpy(0.2)).unwrap();
        let fiber = fam.fiber(lam(0.0));
        let w = Complex64::new(1.2, 0.0);
        let fw = fiber.gradient_w(w).unwrap();
        // Same stencil with half the step.
        let h = 0.5e-5 * 1.2;
        let fx = (fiber.level(w + h).unwrap() - fiber.level(w - h).unwrap()) / (2.0 * h);
        let ih = Complex64::new(0.0, h);
        let fy = (fiber.level(w + ih).unwrap() - fiber.level(w - ih).unwrap()) / (2.0 * h);
        let half = Complex64::new(0.5 * fx, -0.5 * fy);
        assert!((fw - half).norm() / fw.norm() < 1e-6);
        // At ψ = 0 the gradient points along the real axis: F_w = ∂F/∂|w| / 2.
        assert!(fw.im.abs() < 1e-8);
    }

    #[test]
    fn validation_examples() {
        let rep = TorusFamily::validate_spec(&TorusFamilySpec::standard());
        assert!(rep.passed, "{:?}", rep.failures);
        assert!((rep.min_dr_dt - 0.5).abs() < 1e-12);
        assert!(TorusFamily::validate_spec(&TorusFamilySpec::bumpy(0.2)).passed);
        let bad = TorusFamily::validate_spec(&TorusFamilySpec::bumpy(2.0));
        assert!(!bad.passed);
        assert!(bad.min_radius < 0.0);
        assert!(matches!(
            TorusFamily::new(TorusFamilySpec::bumpy(2.0)),
            Err(Error::InvalidFamily(_))
        ));
    }

    #[test]
    fn spec_json_round_trip() {
        let spec = TorusFamilySpec::twisted(0.1);
        let back = TorusFamilySpec::from_json(&spec.to_json()).unwrap();
        assert_eq!(spec, back);
        let parsed = TorusFamilySpec::from_json(r#"{"profile": {"(0, 0)": [1, 0], "(0, 1)": [0.1, 0]}, "eps": 0.05}"#)
            .unwrap();
        assert_eq!(parsed.profile, TorusFamilySpec::bumpy(0.1).profile);
        assert!(TorusFamilySpec::from_json(r#"{"profile": {"x": [1, 0]}}"#).is_err());
        assert!(TorusFamilySpec::from_json(r#"{"profile": {}, "eps": 2.0}"#).is_err());
    }

    #[test]
    fn smooth_step_derivative_matches_fd() {
        for &x in &[0.1, 0.3, 0.5, 0.77, 0.95] {
            let h = 1e-6;
            let fd = (smooth_step(x + h).0 - smooth_step(x - h).0) / (2.0 * h);
            assert!((fd - smooth_step(x).1).abs() < 1e-7);
        }
    }

    #[test]
    fn tabulated_reproduces_smooth_profile() {
        let f = |phi: f64, psi: f64, u: f64| 1.0 + 0.05 * (psi - phi).cos() + 0.02 * u * (2.0 * psi).sin();
        let (u_lo, u_hi, n_u) = (0.1, 1.0, 12);
        let us = TabulatedProfile::u_nodes(u_lo, u_hi, n_u);
        let values: Vec<Vec<Vec<f64>>> = (0..16)
            .map(|a| {
                let phi = TAU * a as f64 / 16.0;
                us.iter()
                    .map(|&u| (0..16).map(|j| f(phi, TAU * j as f64 / 16.0, u)).collect())
                    .collect()
            })
            .collect();
        let tab = TabulatedProfile::from_samples(u_lo, u_hi, &values, 8).unwrap();
        for &(phi, psi, u) in &[(0.3, 1.1, 0.5), (2.0, 4.0, 0.95), (TAU / 8.0, 0.2, 0.2)] {
            let slice = tab.slice(phi);
            let (rho, rho_u, rho_psi) = slice.eval(psi, u);
            assert!((rho - f(phi, psi, u)).abs() < 1e-12);
            assert!((rho_u - 0.02 * (2.0 * psi).sin()).abs() < 1e-10);
            let d_psi = -0.05 * (psi - phi).sin() + 0.04 * u * (2.0 * psi).cos();
            assert!((rho_psi - d_psi).abs() < 1e-10);
        }
    }

    proptest! {
        #[test]
        fn level_inverts_curve_point(phi in 0.0..TAU, psi in 0.0..TAU, t in 0.001..1.0f64, which in 0usize..3) {
            let spec = [TorusFamilySpec::standard(), TorusFamilySpec::bumpy(0.2), TorusFamilySpec::twisted(0.1)][which].clone();
            let fam = TorusFamily::new(spec).unwrap();
            let w = fam.curve_point(lam(phi), psi, t).unwrap();
            prop_assert!((fam.level(lam(phi), w).unwrap() - t).abs() < 1e-10);
        }

        #[test]
        fn fibers_nest_and_wind_once(phi in 0.0..TAU, t1 in 0.01..0.99f64, dt in 0.001..0.5f64) {
            let fam = TorusFamily::new(TorusFamilySpec::twisted(0.1)).unwrap();
            let fiber = fam.fiber(lam(phi));
            let t2 = t1 + dt;
            let mut pts = Vec::new();
            for j in 0..64 {
                let psi = TAU * j as f64 / 64.0;
                let r1 = fiber.radius(psi, t1).unwrap().r;
                let r2 = fiber.radius(psi, t2).unwrap().r;
                prop_assert!(r1 < r2);
                pts.push(Complex64::from_polar(r1, psi));
            }
            prop_assert_eq!(winding_number_of(&pts, PI / 2.0).unwrap(), 1);
        }

        #[test]
        fn collar_is_exact(phi in 0.0..TAU, psi in 0.0..TAU, frac in 0.01..0.9f64) {
            let fam = TorusFamily::new(TorusFamilySpec::twisted(0.1)).unwrap();
            let w = Complex64::from_polar(frac * fam.eps().sqrt(), psi);
            prop_assert_eq!(fam.level(lam(phi), w).unwrap(), w.norm_sqr());
            let (fw, fl) = fam.gradients(lam(phi), w).unwrap();
            prop_assert!((fw - w.conj()).norm() < 1e-9);
            prop_assert!(fl.norm() < 1e-9);
        }
    }
}
