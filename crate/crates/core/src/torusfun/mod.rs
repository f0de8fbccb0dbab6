//! Band-limited real functions on `𝕋 = ℝ/ℤ`.
//!
//! A [`TorusFn`] stores the Fourier coefficients `ĉ(l)` for `l = 0..=N`;
//! negative modes are the conjugates, so the function is real by
//! construction. Samples on the default grid are cached on first use.

mod matfn;
mod norms;

use std::cell::RefCell;
use std::f64::consts::{PI, TAU};
use std::sync::{Arc, OnceLock};

use num_bigint::BigUint;
use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::arithmetic::mul_mod1;
use crate::error::{Error, Result};

pub use matfn::{rotation_mat, rotation_mat_capped, MatFn};
pub use norms::{NormEstimate, NormLedger};

/// Default cap on the bandwidth reached by adaptive pointwise maps.
pub const DEFAULT_MODE_CAP: usize = 1 << 14;
/// Relative tail size at which an adaptive pointwise map is accepted.
pub const ADAPTIVE_TAIL_TOL: f64 = 1e-13;

thread_local! {
    static PLANNER: RefCell<FftPlanner<f64>> = RefCell::new(FftPlanner::new());
}

fn plan(m: usize, inverse: bool) -> Arc<dyn Fft<f64>> {
    PLANNER.with(|p| {
        let mut p = p.borrow_mut();
        if inverse {
            p.plan_fft_inverse(m)
        } else {
            p.plan_fft_forward(m)
        }
    })
}

/// Values `f(j/m)`, `j = 0..m`, of the real function with coefficients
/// `coeffs` (modes are folded, so any `m ≥ 1` is exact).
fn synthesize(coeffs: &[Complex64], m: usize) -> Vec<f64> {
    let mut buf = vec![Complex64::new(0.0, 0.0); m];
    for (l, c) in coeffs.iter().enumerate() {
        buf[l % m] += c;
        if l > 0 {
            buf[(m - l % m) % m] += c.conj();
        }
    }
    plan(m, true).process(&mut buf);
    buf.into_iter().map(|z| z.re).collect()
}

/// Forward transform normalised so that `out[l] = ĉ(l)`.
fn analyze(samples: &[f64]) -> Vec<Complex64> {
    let m = samples.len();
    let mut buf: Vec<Complex64> = samples.iter().map(|&x| Complex64::new(x, 0.0)).collect();
    plan(m, false).process(&mut buf);
    let inv = 1.0 / m as f64;
    for z in &mut buf {
        *z *= inv;
    }
    buf
}

/// Power-of-two grid size `≥ max(lower, 8)`.
pub fn grid_size_at_least(lower: usize) -> usize {
    lower.max(8).next_power_of_two()
}

/// `e^{2πiθ}` for `θ` in turns.
fn cis(turns: f64) -> Complex64 {
    let (s, c) = (TAU * turns).sin_cos();
    Complex64::new(c, s)
}

/// `θ mod 1` reduced to `(-1/2, 1/2]`.
fn centered(theta: f64) -> f64 {
    let t = theta - theta.round();
    if t <= -0.5 {
        t + 1.0
    } else {
        t
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SmallDivisorWarning {
    pub mode: usize,
    /// `|e^{2πilα} − 1|`
    pub modulus: f64,
}

#[derive(Debug, Clone)]
pub struct TorusFn {
    coeffs: Vec<Complex64>,
    grid: OnceLock<Vec<f64>>,
}

impl PartialEq for TorusFn {
    fn eq(&self, other: &Self) -> bool {
        self.coeffs == other.coeffs
    }
}

impl TorusFn {
    /// Builds from `ĉ(0..=N)`; the imaginary part of `ĉ(0)` is dropped.
    pub fn from_coeffs(mut coeffs: Vec<Complex64>) -> Self {
        if coeffs.is_empty() {
            coeffs.push(Complex64::new(0.0, 0.0));
        }
        coeffs[0].im = 0.0;
        TorusFn { coeffs, grid: OnceLock::new() }
    }

    pub fn constant(c: f64) -> Self {
        Self::from_coeffs(vec![Complex64::new(c, 0.0)])
    }

    pub fn zero() -> Self {
        Self::constant(0.0)
    }

    /// `a cos(2πlx) + b sin(2πlx)`.
    pub fn mode(l: usize, a: f64, b: f64) -> Self {
        let mut c = vec![Complex64::new(0.0, 0.0); l + 1];
        if l == 0 {
            c[0] = Complex64::new(a, 0.0);
        } else {
            c[l] = Complex64::new(a / 2.0, -b / 2.0);
        }
        Self::from_coeffs(c)
    }

    /// Forward transform of uniform samples `f(j/m)`.
    ///
    /// The bandwidth is `m/2 − 1`, or `m/2` when the Nyquist coefficient is
    /// not negligible (it is then split evenly between `±m/2`).
    pub fn from_samples(samples: &[f64]) -> Result<Self> {
        let m = samples.len();
        if m < 8 {
            return Err(Error::InvalidInput(format!("need at least 8 samples, got {m}")));
        }
        if let Some(i) = samples.iter().position(|x| !x.is_finite()) {
            return Err(Error::NonFinite { index: i });
        }
        let spec = analyze(samples);
        let half = m / 2;
        let mut coeffs: Vec<Complex64> = spec[..half].to_vec();
        if m.is_multiple_of(2) {
            let scale = spec.iter().map(|z| z.norm()).fold(0.0, f64::max);
            let nyq = spec[half];
            if nyq.norm() > 1e-15 * scale.max(f64::MIN_POSITIVE) {
                coeffs.push(Complex64::new(nyq.re / 2.0, 0.0));
            }
        } else {
            coeffs.push(spec[half]);
        }
        Ok(Self::from_coeffs(coeffs))
    }

    /// Fits the band `0..=bandwidth` from samples on a grid finer than
    /// `2·bandwidth + 1`; higher modes are discarded.
    pub fn from_samples_band(samples: &[f64], bandwidth: usize) -> Result<Self> {
        let m = samples.len();
        if m < 2 * bandwidth + 1 {
            return Err(Error::InvalidInput(format!("{m} samples cannot resolve bandwidth {bandwidth}")));
        }
        if let Some(i) = samples.iter().position(|x| !x.is_finite()) {
            return Err(Error::NonFinite { index: i });
        }
        let spec = analyze(samples);
        Ok(Self::from_coeffs(spec[..=bandwidth].to_vec()))
    }

    pub fn bandwidth(&self) -> usize {
        self.coeffs.len() - 1
    }

    pub fn coeffs(&self) -> &[Complex64] {
        &self.coeffs
    }

    /// `ĉ(l)` for any integer `l` (zero outside the band).
    pub fn coeff(&self, l: i64) -> Complex64 {
        let k = l.unsigned_abs() as usize;
        match self.coeffs.get(k) {
            Some(c) if l >= 0 => *c,
            Some(c) => c.conj(),
            None => Complex64::new(0.0, 0.0),
        }
    }

    pub fn mean(&self) -> f64 {
        self.coeffs[0].re
    }

    /// `Σ_l |ĉ(l)|` over all `l ∈ [−N, N]`; bounds the sup norm.
    pub fn wiener_norm(&self) -> f64 {
        self.coeffs[0].norm() + 2.0 * self.coeffs[1..].iter().map(|c| c.norm()).sum::<f64>()
    }

    /// Largest coefficient modulus.
    pub fn coeff_max(&self) -> f64 {
        self.coeffs.iter().map(|c| c.norm()).fold(0.0, f64::max)
    }

    /// Size of the cached grid: a power of two `≥ 4N + 4`.
    pub fn grid_size(&self) -> usize {
        grid_size_at_least(4 * self.bandwidth() + 4)
    }

    /// Cached samples on the default grid.
    pub fn grid(&self) -> &[f64] {
        self.grid.get_or_init(|| synthesize(&self.coeffs, self.grid_size()))
    }

    /// Samples `f(j/m)`.
    pub fn samples(&self, m: usize) -> Vec<f64> {
        if m == self.grid_size() {
            self.grid().to_vec()
        } else {
            synthesize(&self.coeffs, m)
        }
    }

    pub fn evaluate(&self, x: f64) -> f64 {
        self.eval_derivs::<1>(x)[0]
    }

    /// `[f, f', …]` at `x` (first `K` derivatives including order 0).
    pub fn eval_derivs<const K: usize>(&self, x: f64) -> [f64; K] {
        let mut out = [0.0; K];
        out[0] = self.coeffs[0].re;
        let xr = x - x.floor();
        let w = cis(xr);
        let mut z = Complex64::new(1.0, 0.0);
        for (l, c) in self.coeffs.iter().enumerate().skip(1) {
            z = if l % 32 == 0 { cis(mul_mod1(&BigUint::from(l), xr)) } else { z * w };
            let mut term = c * z;
            let step = Complex64::new(0.0, TAU * l as f64);
            for o in out.iter_mut() {
                *o += 2.0 * term.re;
                term *= step;
            }
        }
        out
    }

    pub fn derivative(&self, k: u32) -> TorusFn {
        if k == 0 {
            return self.clone();
        }
        let coeffs =
            self.coeffs.iter().enumerate().map(|(l, c)| c * Complex64::new(0.0, TAU * l as f64).powu(k)).collect();
        Self::from_coeffs(coeffs)
    }

    /// `T_a f = Σ_{|l|≤a} ĉ(l) e^{2πilx}`.
    pub fn truncate(&self, a: f64) -> TorusFn {
        let keep = if a < 0.0 { 0 } else { (a.floor() as usize).min(self.bandwidth()) };
        let mut c = self.coeffs[..=keep].to_vec();
        if a < 0.0 {
            c[0] = Complex64::new(0.0, 0.0);
        }
        Self::from_coeffs(c)
    }

    /// `R_a f = Σ_{|l|>a} ĉ(l) e^{2πilx}`.
    pub fn rest(&self, a: f64) -> TorusFn {
        let mut c = self.coeffs.clone();
        let keep = if a < 0.0 { None } else { Some(a.floor() as usize) };
        if let Some(k) = keep {
            for z in c.iter_mut().take(k + 1) {
                *z = Complex64::new(0.0, 0.0);
            }
        }
        Self::from_coeffs(c).trimmed(0.0)
    }

    /// Drops trailing coefficients with modulus `≤ tol`.
    pub fn trimmed(mut self, tol: f64) -> TorusFn {
        while self.coeffs.len() > 1 && self.coeffs.last().unwrap().norm() <= tol {
            self.coeffs.pop();
        }
        self.grid = OnceLock::new();
        self
    }

    /// Zeroes every coefficient with modulus below `tol`, then trims.
    /// Returns the function and the number of coefficients removed.
    pub fn chop(&self, tol: f64) -> (TorusFn, usize) {
        let mut dropped = 0;
        let c: Vec<Complex64> = self
            .coeffs
            .iter()
            .map(|z| {
                if z.norm() < tol && z.norm() > 0.0 {
                    dropped += 1;
                    Complex64::new(0.0, 0.0)
                } else {
                    *z
                }
            })
            .collect();
        (Self::from_coeffs(c).trimmed(0.0), dropped)
    }

    /// `f(x + β)`.
    pub fn translate(&self, beta: f64) -> TorusFn {
        self.phase_map(|l| cis(l_times(l, beta)))
    }

    /// `f(x + nα)` with the phase `l·n·α mod 1` formed from the exact `n`.
    pub fn translate_mult(&self, alpha: f64, n: &BigUint) -> TorusFn {
        self.phase_map(|l| cis(mul_mod1(&(n * l), alpha)))
    }

    /// `f(x + β) − f(x)`, with `e^{2πilβ} − 1 = 2i sin(πlβ) e^{iπlβ}`.
    pub fn shift_difference(&self, beta: f64) -> TorusFn {
        self.phase_map(|l| {
            let t = centered(l_times(l, beta));
            Complex64::new(0.0, 2.0 * (PI * t).sin()) * cis(t / 2.0)
        })
    }

    /// [`Self::shift_difference`] with `β = nα`.
    pub fn shift_difference_mult(&self, alpha: f64, n: &BigUint) -> TorusFn {
        self.phase_map(|l| {
            let t = centered(mul_mod1(&(n * l), alpha));
            Complex64::new(0.0, 2.0 * (PI * t).sin()) * cis(t / 2.0)
        })
    }

    fn phase_map(&self, factor: impl Fn(usize) -> Complex64) -> TorusFn {
        let mut c = self.coeffs.clone();
        for (l, z) in c.iter_mut().enumerate() {
            *z *= factor(l);
        }
        Self::from_coeffs(c)
    }

    /// `S_n f(x) = Σ_{h<n} f(x + hα)`, computed mode by mode.
    pub fn birkhoff_sum(&self, alpha: f64, n: &BigUint) -> (TorusFn, Vec<SmallDivisorWarning>) {
        let nf = n.to_string().parse::<f64>().unwrap_or(f64::INFINITY);
        let mut warnings = Vec::new();
        let mut c = self.coeffs.clone();
        c[0] *= nf;
        for (l, z) in c.iter_mut().enumerate().skip(1) {
            let t1 = centered(mul_mod1(&BigUint::from(l), alpha));
            let modulus = 2.0 * (PI * t1).sin().abs();
            if modulus < 1e-14 {
                warnings.push(SmallDivisorWarning { mode: l, modulus });
            }
            if t1 == 0.0 {
                *z *= nf;
                continue;
            }
            let tn = centered(mul_mod1(&(n * l), alpha));
            let ratio = (PI * tn).sin() / (PI * t1).sin();
            *z *= cis((tn - t1) / 2.0) * ratio;
        }
        (Self::from_coeffs(c), warnings)
    }

    pub fn add(&self, other: &TorusFn) -> TorusFn {
        let n = self.coeffs.len().max(other.coeffs.len());
        let c = (0..n)
            .map(|l| self.coeffs.get(l).copied().unwrap_or_default() + other.coeffs.get(l).copied().unwrap_or_default())
            .collect();
        Self::from_coeffs(c)
    }

    pub fn sub(&self, other: &TorusFn) -> TorusFn {
        self.add(&other.scale(-1.0))
    }

    pub fn scale(&self, s: f64) -> TorusFn {
        Self::from_coeffs(self.coeffs.iter().map(|c| c * s).collect())
    }

    pub fn add_constant(&self, s: f64) -> TorusFn {
        let mut c = self.coeffs.clone();
        c[0].re += s;
        Self::from_coeffs(c)
    }

    /// Exact product (bandwidth `N_f + N_g`), trimmed at roundoff level.
    pub fn mul(&self, other: &TorusFn) -> TorusFn {
        let bw = self.bandwidth() + other.bandwidth();
        let m = grid_size_at_least(2 * bw + 2);
        let (a, b) = (self.samples(m), other.samples(m));
        let prod: Vec<f64> = a.iter().zip(&b).map(|(x, y)| x * y).collect();
        let spec = analyze(&prod);
        let tol = 1e-17 * self.wiener_norm() * other.wiener_norm();
        Self::from_coeffs(spec[..=bw].to_vec()).trimmed(tol)
    }

    /// Applies `g` pointwise; see [`map_pointwise`].
    pub fn map(&self, g: impl Fn(f64) -> f64 + Sync, cap: usize) -> Result<TorusFn> {
        let mut out = map_pointwise(&[self], 1, self.bandwidth(), cap, 0.0, |x, y| y[0] = g(x[0]))?;
        Ok(out.pop().unwrap())
    }

    /// Largest `|f|` on an `m`-point grid.
    pub fn grid_max_abs(&self, m: usize) -> f64 {
        self.samples(m).iter().fold(0.0, |a, x| a.max(x.abs()))
    }

    /// `|D^b f|₀ / (‖f‖_a^{1−λ} ‖f‖_c^λ)` with `λ = (b − a)/(c − a)`.
    pub fn interpolation_ratio(&self, a: u32, b: u32, c: u32) -> Result<f64> {
        if !(a < b && b < c) {
            return Err(Error::InvalidInput(format!("need a < b < c, got {a}, {b}, {c}")));
        }
        let top = self.derivative(b).sup_norm();
        if self.coeffs.iter().skip(1).all(|z| z.norm() == 0.0) {
            return Err(Error::DegenerateNorm);
        }
        let lambda = (b - a) as f64 / (c - a) as f64;
        let den = self.cr_norm(a).powf(1.0 - lambda) * self.cr_norm(c).powf(lambda);
        if den < 1e-300 {
            return Err(Error::DegenerateNorm);
        }
        Ok(top / den)
    }
}

fn l_times(l: usize, beta: f64) -> f64 {
    if beta >= 0.0 {
        mul_mod1(&BigUint::from(l), beta)
    } else {
        let r = mul_mod1(&BigUint::from(l), -beta);
        if r == 0.0 {
            0.0
        } else {
            1.0 - r
        }
    }
}

/// Applies a pointwise map `R^k → R^outputs` to band-limited inputs.
///
/// The map is evaluated on a grid of size `≥ 4B + 4`; the candidate
/// bandwidth `B` doubles until every output's coefficients above `B/2`
/// fall below [`ADAPTIVE_TAIL_TOL`] times `max(own max, abs_scale)`.
pub fn map_pointwise<F>(
    inputs: &[&TorusFn],
    outputs: usize,
    start: usize,
    cap: usize,
    abs_scale: f64,
    g: F,
) -> Result<Vec<TorusFn>>
where
    F: Fn(&[f64], &mut [f64]) + Sync,
{
    let mut b = start.max(inputs.iter().map(|f| f.bandwidth()).max().unwrap_or(0)).max(4);
    loop {
        let m = grid_size_at_least(4 * b + 4);
        let samples: Vec<Vec<f64>> = inputs.iter().map(|f| f.samples(m)).collect();
        let mut cols = vec![vec![0.0; m]; outputs];
        let mut xin = vec![0.0; inputs.len()];
        let mut yout = vec![0.0; outputs];
        for j in 0..m {
            for (k, s) in samples.iter().enumerate() {
                xin[k] = s[j];
            }
            g(&xin, &mut yout);
            for (o, col) in cols.iter_mut().enumerate() {
                col[j] = yout[o];
            }
        }
        let mut done = true;
        let mut specs = Vec::with_capacity(outputs);
        for (o, col) in cols.iter().enumerate() {
            if let Some(i) = col.iter().position(|x| !x.is_finite()) {
                return Err(Error::NonFinite { index: o * m + i });
            }
            let spec = analyze(col);
            let half = m / 2;
            let own = spec[..half].iter().map(|z| z.norm()).fold(0.0, f64::max);
            let tail = spec[b / 2 + 1..half].iter().map(|z| z.norm()).fold(0.0, f64::max);
            if tail > ADAPTIVE_TAIL_TOL * own.max(abs_scale) {
                done = false;
            }
            specs.push((spec, own.max(abs_scale)));
        }
        if done {
            return Ok(specs
                .into_iter()
                .map(|(spec, scale)| TorusFn::from_coeffs(spec[..m / 2].to_vec()).trimmed(1e-16 * scale))
                .collect());
        }
        if 2 * b > cap {
            return Err(Error::BandwidthOverflow { needed: 2 * b, cap });
        }
        b *= 2;
    }
}

#[derive(Serialize, Deserialize)]
struct TorusFnRepr {
    bandwidth: usize,
    coefficients: Vec<[f64; 2]>,
}

impl Serialize for TorusFn {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        TorusFnRepr { bandwidth: self.bandwidth(), coefficients: self.coeffs.iter().map(|c| [c.re, c.im]).collect() }
            .serialize(s)
    }
}

impl<'de> Deserialize<'de> for TorusFn {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        use serde::de::Error as _;
        let r = TorusFnRepr::deserialize(d)?;
        if r.coefficients.len() != r.bandwidth + 1 {
            return Err(D::Error::custom(format!(
                "expected {} coefficients, got {}",
                r.bandwidth + 1,
                r.coefficients.len()
            )));
        }
        if r.coefficients.iter().flatten().any(|x| !x.is_finite()) {
            return Err(D::Error::custom("non-finite coefficient"));
        }
        let c0 = r.coefficients[0];
        if c0[1].abs() > 1e-15 * c0[0].abs().max(1.0) {
            return Err(D::Error::custom("mean coefficient must be real"));
        }
        Ok(TorusFn::from_coeffs(r.coefficients.into_iter().map(|[a, b]| Complex64::new(a, b)).collect()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_samples() {
        let f = TorusFn::from_samples(&[1.0; 16]).unwrap();
        assert!((f.coeff(0).re - 1.0).abs() < 1e-15);
        assert!(f.coeffs()[1..].iter().all(|c| c.norm() < 1e-16));
    }

    #[test]
    fn cosine_samples() {
        let s: Vec<f64> = (0..16).map(|j| (TAU * j as f64 / 16.0).cos()).collect();
        let f = TorusFn::from_samples(&s).unwrap();
        assert!((f.coeff(1) - Complex64::new(0.5, 0.0)).norm() < 1e-15);
        assert!((f.coeff(-1) - Complex64::new(0.5, 0.0)).norm() < 1e-15);
        for l in 2..=f.bandwidth() as i64 {
            assert!(f.coeff(l).norm() <= 1e-15);
        }
        assert_eq!(f.bandwidth(), 7);
    }

    #[test]
    fn evaluate_matches_grid() {
        let f =
            TorusFn::from_coeffs(vec![Complex64::new(0.3, 0.0), Complex64::new(0.1, -0.2), Complex64::new(0.0, 0.05)]);
        let m = f.grid_size();
        for (j, v) in f.grid().iter().enumerate() {
            assert!((f.evaluate(j as f64 / m as f64) - v).abs() < 1e-14);
        }
    }

    #[test]
    fn derivative_of_sine() {
        let f = TorusFn::mode(1, 0.0, 1.0);
        let d = f.derivative(1);
        let expect = TorusFn::mode(1, TAU, 0.0);
        assert!((d.coeff(1) - expect.coeff(1)).norm() < 1e-14);
        assert_eq!(f.derivative(0), f);
    }

    #[test]
    fn truncate_and_rest() {
        let f = TorusFn::mode(1, 1.0, 0.0).add(&TorusFn::mode(2, 1.0, 0.0));
        assert_eq!(f.truncate(1.0).trimmed(0.0), TorusFn::mode(1, 1.0, 0.0));
        assert_eq!(f.rest(5.0), TorusFn::zero());
        assert_eq!(f.truncate(1.0).add(&f.rest(1.0)), f);
    }

    #[test]
    fn birkhoff_trivial() {
        let c = TorusFn::constant(2.0);
        let (s, _) = c.birkhoff_sum(0.3, &BigUint::from(7u32));
        assert_eq!(s.mean(), 14.0);
        let f = TorusFn::mode(3, 0.4, -0.1);
        let (s1, _) = f.birkhoff_sum(0.3819, &BigUint::from(1u32));
        for l in 0..=3 {
            assert!((s1.coeff(l) - f.coeff(l)).norm() < 1e-16);
        }
    }

    #[test]
    fn json_roundtrip_and_rejects() {
        let f = TorusFn::mode(2, 0.5, 0.25).add_constant(1.0);
        let s = serde_json::to_string(&f).unwrap();
        let g: TorusFn = serde_json::from_str(&s).unwrap();
        assert_eq!(f, g);
        assert!(serde_json::from_str::<TorusFn>(r#"{"bandwidth":1,"coefficients":[[1,0.5],[0,0]]}"#).is_err());
        assert!(serde_json::from_str::<TorusFn>(r#"{"bandwidth":2,"coefficients":[[1,0]]}"#).is_err());
    }

    #[test]
    fn adaptive_map_of_cos() {
        let phi = TorusFn::mode(1, 0.3, 0.0);
        let g = phi.map(|x| (TAU * x).cos(), DEFAULT_MODE_CAP).unwrap();
        for j in 0..50 {
            let x = j as f64 / 50.0 + 0.001;
            assert!((g.evaluate(x) - (TAU * phi.evaluate(x)).cos()).abs() < 1e-13);
        }
        let steep = TorusFn::mode(1, 400.0, 0.0);
        assert!(matches!(steep.map(|x| (TAU * x).cos(), 64), Err(Error::BandwidthOverflow { .. })));
    }
}
