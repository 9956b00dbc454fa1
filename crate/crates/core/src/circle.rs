//! Spectral primitives on the unit circle.
//!
//! A [`BoundaryFunction`] stores `N` samples at `θ_j = 2πj/N` together with a
//! lazily computed Fourier view `c_k`, `k ∈ [-N/2, N/2)`, normalised so that
//! `u(θ) = Σ c_k e^{ikθ}`. All operators here are Fourier multipliers or
//! sample-wise maps, so everything is exact for band-limited data.
//!
//! The Nyquist mode `k = -N/2` is aliased with `k = +N/2` on the grid; it is
//! treated as neither holomorphic nor antiholomorphic. Multipliers that are odd
//! in `k` (Hilbert transform, differentiation) annihilate it.

use std::cell::RefCell;
use std::f64::consts::{PI, TAU};
use std::sync::{Arc, OnceLock};

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_GRID: usize = 256;

/// Default tolerance on [`BoundaryFunction::holomorphy_residual`] for interior evaluation.
pub const HOLOMORPHY_TOL: f64 = 1e-8;

/// Largest accepted phase increment between consecutive samples.
pub const MAX_PHASE_STEP: f64 = PI / 2.0;

thread_local! {
    static PLANNER: RefCell<FftPlanner<f64>> = RefCell::new(FftPlanner::new());
}

fn fft_forward(n: usize) -> Arc<dyn Fft<f64>> {
    PLANNER.with(|p| p.borrow_mut().plan_fft_forward(n))
}

fn fft_inverse(n: usize) -> Arc<dyn Fft<f64>> {
    PLANNER.with(|p| p.borrow_mut().plan_fft_inverse(n))
}

/// Frequency of FFT bin `j` on an `n`-point grid.
#[inline]
pub fn frequency(j: usize, n: usize) -> i64 {
    if j < n / 2 {
        j as i64
    } else {
        j as i64 - n as i64
    }
}

#[inline]
pub fn grid_angle(j: usize, n: usize) -> f64 {
    TAU * j as f64 / n as f64
}

pub fn check_grid(n: usize) -> Result<()> {
    if n >= 16 && n.is_power_of_two() {
        Ok(())
    } else {
        Err(Error::BadGridSize(n))
    }
}

/// Which constant the harmonic conjugate carries.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HilbertNormalization {
    /// Conjugate vanishes at the disk centre (zero mean).
    Center,
    /// Conjugate vanishes at the boundary point λ = 1.
    AtOne,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HolderEstimate {
    pub alpha: f64,
    pub c0: f64,
    pub c1: f64,
    pub seminorm: f64,
}

impl HolderEstimate {
    /// The three-term `C^{1,α}` norm.
    pub fn total(&self) -> f64 {
        self.c0 + self.c1 + self.seminorm
    }
}

#[derive(Debug)]
pub struct BoundaryFunction {
    samples: Vec<Complex64>,
    coeffs: OnceLock<Vec<Complex64>>,
}

impl Clone for BoundaryFunction {
    fn clone(&self) -> Self {
        let coeffs = OnceLock::new();
        if let Some(c) = self.coeffs.get() {
            let _ = coeffs.set(c.clone());
        }
        Self {
            samples: self.samples.clone(),
            coeffs,
        }
    }
}

impl PartialEq for BoundaryFunction {
    fn eq(&self, other: &Self) -> bool {
        self.samples == other.samples
    }
}

impl BoundaryFunction {
    pub fn from_samples(samples: Vec<Complex64>) -> Result<Self> {
        check_grid(samples.len())?;
        Ok(Self {
            samples,
            coeffs: OnceLock::new(),
        })
    }

    pub fn from_fn(n: usize, f: impl Fn(f64) -> Complex64) -> Result<Self> {
        check_grid(n)?;
        Self::from_samples((0..n).map(|j| f(grid_angle(j, n))).collect())
    }

    pub fn from_real_fn(n: usize, f: impl Fn(f64) -> f64) -> Result<Self> {
        Self::from_fn(n, |th| Complex64::new(f(th), 0.0))
    }

    pub fn constant(n: usize, c: Complex64) -> Result<Self> {
        Self::from_fn(n, |_| c)
    }

    /// Builds a function from Fourier coefficients in FFT bin order.
    pub fn from_coeffs(coeffs: Vec<Complex64>) -> Result<Self> {
        let n = coeffs.len();
        check_grid(n)?;
        let mut buf = coeffs.clone();
        fft_inverse(n).process(&mut buf);
        let out = Self {
            samples: buf,
            coeffs: OnceLock::new(),
        };
        let _ = out.coeffs.set(coeffs);
        Ok(out)
    }

    /// Trigonometric polynomial `Σ c_k e^{ikθ}` sampled on `n` points.
    pub fn from_modes(n: usize, modes: &[(i64, Complex64)]) -> Result<Self> {
        check_grid(n)?;
        let mut c = vec![Complex64::new(0.0, 0.0); n];
        for &(k, v) in modes {
            if k < -(n as i64) / 2 || k >= n as i64 / 2 {
                return Err(Error::OutOfRange(format!("mode {k} outside grid of size {n}")));
            }
            c[k.rem_euclid(n as i64) as usize] += v;
        }
        Self::from_coeffs(c)
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    #[inline]
    pub fn samples(&self) -> &[Complex64] {
        &self.samples
    }

    pub fn into_samples(self) -> Vec<Complex64> {
        self.samples
    }

    pub fn angles(&self) -> impl Iterator<Item = f64> + '_ {
        let n = self.len();
        (0..n).map(move |j| grid_angle(j, n))
    }

    /// Fourier coefficients in FFT bin order (`c_k` at index `k mod N`).
    pub fn coeffs(&self) -> &[Complex64] {
        self.coeffs.get_or_init(|| {
            let n = self.samples.len();
            let mut buf = self.samples.clone();
            fft_forward(n).process(&mut buf);
            let scale = 1.0 / n as f64;
            buf.iter_mut().for_each(|c| *c *= scale);
            buf
        })
    }

    pub fn coeff(&self, k: i64) -> Complex64 {
        let n = self.len() as i64;
        if k < -n / 2 || k >= n / 2 {
            return Complex64::new(0.0, 0.0);
        }
        self.coeffs()[k.rem_euclid(n) as usize]
    }

    pub fn real_part(&self) -> Self {
        self.map(|z| Complex64::new(z.re, 0.0))
    }

    pub fn imag_part(&self) -> Self {
        self.map(|z| Complex64::new(z.im, 0.0))
    }

    pub fn map(&self, f: impl Fn(Complex64) -> Complex64) -> Self {
        Self {
            samples: self.samples.iter().map(|&z| f(z)).collect(),
            coeffs: OnceLock::new(),
        }
    }

    pub fn zip_with(&self, other: &Self, f: impl Fn(Complex64, Complex64) -> Complex64) -> Self {
        assert_eq!(self.len(), other.len(), "grid mismatch");
        Self {
            samples: self
                .samples
                .iter()
                .zip(&other.samples)
                .map(|(&a, &b)| f(a, b))
                .collect(),
            coeffs: OnceLock::new(),
        }
    }

    pub fn max_abs(&self) -> f64 {
        self.samples.iter().fold(0.0_f64, |m, z| m.max(z.norm()))
    }

    pub fn min_abs(&self) -> f64 {
        self.samples.iter().fold(f64::INFINITY, |m, z| m.min(z.norm()))
    }

    pub fn mean(&self) -> Complex64 {
        self.coeff(0)
    }

    /// Sup-norm distance on the shared grid.
    pub fn sup_distance(&self, other: &Self) -> f64 {
        assert_eq!(self.len(), other.len(), "grid mismatch");
        self.samples
            .iter()
            .zip(&other.samples)
            .fold(0.0_f64, |m, (a, b)| m.max((a - b).norm()))
    }

    fn with_multiplier(&self, m: impl Fn(i64) -> Complex64) -> Self {
        let n = self.len();
        let coeffs: Vec<Complex64> = self
            .coeffs()
            .iter()
            .enumerate()
            .map(|(j, &c)| c * m(frequency(j, n)))
            .collect();
        Self::from_coeffs(coeffs).expect("grid already validated")
    }

    /// Harmonic conjugate of the real part of `self`: multiplier `-i·sign(k)`.
    ///
    /// Only the real part of the input is used.
    pub fn hilbert_transform(&self, normalization: HilbertNormalization) -> Self {
        let n = self.len() as i64;
        let re = self.real_part();
        let conj = re.with_multiplier(|k| {
            if k == 0 || k == -n / 2 {
                Complex64::new(0.0, 0.0)
            } else if k > 0 {
                Complex64::new(0.0, -1.0)
            } else {
                Complex64::new(0.0, 1.0)
            }
        });
        let shift = match normalization {
            HilbertNormalization::Center => 0.0,
            HilbertNormalization::AtOne => conj.samples[0].re,
        };
        conj.map(|z| Complex64::new(z.re - shift, 0.0))
    }

    /// `u + iHu` for the real part `u` of `self`; extends holomorphically.
    pub fn analytic_completion(&self, normalization: HilbertNormalization) -> Self {
        let h = self.hilbert_transform(normalization);
        self.zip_with(&h, |u, hu| Complex64::new(u.re, hu.re))
    }

    /// Relative ℓ² energy in strictly negative frequencies `-N/2 < k < 0`.
    pub fn holomorphy_residual(&self) -> f64 {
        let n = self.len();
        let mut neg = 0.0;
        let mut total = 0.0;
        for (j, c) in self.coeffs().iter().enumerate() {
            let e = c.norm_sqr();
            total += e;
            let k = frequency(j, n);
            if k < 0 && k != -(n as i64) / 2 {
                neg += e;
            }
        }
        if total == 0.0 {
            0.0
        } else {
            (neg / total).sqrt()
        }
    }

    /// Projection onto frequencies `0 <= k < N/2`.
    pub fn holomorphic_part(&self) -> Self {
        self.with_multiplier(|k| {
            if k >= 0 {
                Complex64::new(1.0, 0.0)
            } else {
                Complex64::new(0.0, 0.0)
            }
        })
    }

    /// `Σ_{k>=0} c_k z^k` for `|z| < 1`, after checking the holomorphy certificate.
    pub fn holomorphic_extension(&self, z: Complex64) -> Result<Complex64> {
        self.holomorphic_extension_with_tol(z, HOLOMORPHY_TOL)
    }

    pub fn holomorphic_extension_with_tol(&self, z: Complex64, tol: f64) -> Result<Complex64> {
        if z.norm() >= 1.0 {
            return Err(Error::OutOfRange(format!("|z| = {} is not inside the unit disk", z.norm())));
        }
        let residual = self.holomorphy_residual();
        if residual > tol {
            return Err(Error::NotHolomorphic {
                residual,
                tolerance: tol,
            });
        }
        Ok(self.eval_holomorphic(z))
    }

    /// Horner evaluation of the nonnegative-frequency part; no certificate check.
    pub fn eval_holomorphic(&self, z: Complex64) -> Complex64 {
        let c = self.coeffs();
        let half = self.len() / 2;
        c[..half]
            .iter()
            .rev()
            .fold(Complex64::new(0.0, 0.0), |acc, &ck| acc * z + ck)
    }

    /// Spectral derivative in θ (multiplier `ik`, Nyquist dropped).
    pub fn theta_derivative(&self) -> Self {
        let n = self.len() as i64;
        self.with_multiplier(|k| {
            if k == -n / 2 {
                Complex64::new(0.0, 0.0)
            } else {
                Complex64::new(0.0, k as f64)
            }
        })
    }

    /// Trigonometric interpolation onto a grid of size `m`.
    pub fn resample(&self, m: usize) -> Result<Self> {
        check_grid(m)?;
        let n = self.len();
        let mut out = vec![Complex64::new(0.0, 0.0); m];
        let c = self.coeffs();
        let lim = (n.min(m) / 2) as i64;
        for (j, &ck) in c.iter().enumerate() {
            let k = frequency(j, n);
            if k > -lim && k < lim {
                out[k.rem_euclid(m as i64) as usize] += ck;
            } else if k == -lim {
                // Nyquist of the coarser grid: split symmetrically when refining.
                if m > n {
                    out[(m as i64 - lim) as usize] += ck * 0.5;
                    out[lim as usize] += ck * 0.5;
                } else {
                    out[(m as i64 - lim) as usize] += ck;
                }
            }
        }
        Self::from_coeffs(out)
    }

    /// Evaluate the trigonometric interpolant at an arbitrary angle.
    pub fn eval_at(&self, theta: f64) -> Complex64 {
        let n = self.len();
        let c = self.coeffs();
        let mut acc = Complex64::new(0.0, 0.0);
        for (j, &ck) in c.iter().enumerate() {
            let k = frequency(j, n);
            if k == -(n as i64) / 2 {
                acc += ck * (k as f64 * theta).cos();
            } else {
                acc += ck * Complex64::from_polar(1.0, k as f64 * theta);
            }
        }
        acc
    }

    pub fn winding_number(&self) -> Result<i64> {
        winding_number_of(&self.samples, MAX_PHASE_STEP)
    }

    pub fn winding_number_with(&self, max_step: f64) -> Result<i64> {
        winding_number_of(&self.samples, max_step)
    }

    /// Writes the curve as `e^{a + ib}` with `b` the continuous argument.
    pub fn log_branch(&self) -> Result<(Self, Self)> {
        let w = self.winding_number()?;
        if w != 0 {
            return Err(Error::NonzeroWinding { winding: w });
        }
        let n = self.len();
        let mut a = Vec::with_capacity(n);
        let mut b = Vec::with_capacity(n);
        let mut arg = self.samples[0].arg();
        for j in 0..n {
            let z = self.samples[j];
            if j > 0 {
                arg += (z / self.samples[j - 1]).arg();
            }
            a.push(Complex64::new(z.norm().ln(), 0.0));
            b.push(Complex64::new(arg, 0.0));
        }
        Ok((Self::from_samples(a)?, Self::from_samples(b)?))
    }

    /// Discrete `C^{1,α}` norm: sup, sup of θ-derivative, and α-Hölder seminorm
    /// of the derivative over all sample pairs (strided above 512 samples).
    pub fn holder_norm(&self, alpha: f64) -> Result<HolderEstimate> {
        if !(alpha > 0.0 && alpha < 1.0) {
            return Err(Error::OutOfRange(format!("Hölder exponent {alpha} not in (0,1)")));
        }
        let d = self.theta_derivative();
        let n = self.len();
        let stride = (n / 512).max(1);
        let pts: Vec<(f64, Complex64)> = (0..n)
            .step_by(stride)
            .map(|j| (grid_angle(j, n), d.samples[j]))
            .collect();
        let mut seminorm = 0.0_f64;
        for (i, &(x, dx)) in pts.iter().enumerate() {
            for &(y, dy) in &pts[i + 1..] {
                let sep = (x - y).abs();
                let dist = sep.min(TAU - sep);
                seminorm = seminorm.max((dx - dy).norm() / dist.powf(alpha));
            }
        }
        Ok(HolderEstimate {
            alpha,
            c0: self.max_abs(),
            c1: d.max_abs(),
            seminorm,
        })
    }
}

/// Winding number about 0 of a closed polygon given by its vertices.
pub fn winding_number_of(points: &[Complex64], max_step: f64) -> Result<i64> {
    if let Some(index) = points.iter().position(|z| z.norm() == 0.0 || !z.is_finite()) {
        return Err(Error::CurveThroughZero { index });
    }
    let n = points.len();
    let mut total = 0.0;
    for j in 0..n {
        let inc = (points[(j + 1) % n] / points[j]).arg();
        if inc.abs() >= max_step {
            return Err(Error::Undersampled {
                index: j,
                increment: inc,
                limit: max_step,
            });
        }
        total += inc;
    }
    Ok((total / TAU).round() as i64)
}

#[derive(Serialize, Deserialize)]
struct BoundaryFunctionRepr {
    n: usize,
    samples: Vec<[f64; 2]>,
}

impl Serialize for BoundaryFunction {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        BoundaryFunctionRepr {
            n: self.len(),
            samples: self.samples.iter().map(|z| [z.re, z.im]).collect(),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for BoundaryFunction {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let repr = BoundaryFunctionRepr::deserialize(d)?;
        if repr.samples.len() != repr.n {
            return Err(serde::de::Error::custom(format!(
                "n = {} but {} samples given",
                repr.n,
                repr.samples.len()
            )));
        }
        let samples = repr
            .samples
            .into_iter()
            .map(|[re, im]| Complex64::new(re, im))
            .collect();
        BoundaryFunction::from_samples(samples).map_err(serde::de::Error::custom)
    }
}
