//! Quasi-periodic `SL(2,ℝ)` cocycles `(x, y) ↦ (x + α, A(x) y)`.

use std::f64::consts::TAU;

use num_bigint::BigUint;
use num_traits::{One, ToPrimitive, Zero};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::arithmetic::mul_mod1;
use crate::error::{Error, Result};
use crate::mat2::Mat2;
use crate::torusfun::{grid_size_at_least, rotation_mat, MatFn, NormLedger, TorusFn, DEFAULT_MODE_CAP};

/// Tolerance on `|det A − 1|` accepted by [`Cocycle::new`].
pub const DET_TOL: f64 = 1e-10;
/// Per-product chop used while iterating.
pub const ITERATE_CHOP: f64 = 1e-15;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Cocycle {
    pub alpha: f64,
    pub a: MatFn,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum IterateMode {
    Splitting,
    Naive,
}

/// `A = R_{φ + d·x} + F`, where `d` is the degree of the angle.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecomposedCocycle {
    pub alpha: f64,
    pub phi: TorusFn,
    pub degree: i64,
    pub f: MatFn,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RotationNumberEstimate {
    pub rho: f64,
    pub error_bound: f64,
    pub orbit_length: u64,
    /// Degree removed before estimation.
    pub degree: i64,
    pub per_initial_condition: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RotationOpts {
    pub min_log2_len: u32,
    pub max_log2_len: u32,
    pub tol: f64,
    pub initial_conditions: usize,
    pub spread_limit: f64,
    pub lift_grid: usize,
}

impl Default for RotationOpts {
    fn default() -> Self {
        RotationOpts {
            min_log2_len: 12,
            max_log2_len: 20,
            tol: 1e-10,
            initial_conditions: 8,
            spread_limit: 1e-3,
            lift_grid: 4096,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct IteratedDefect {
    pub n: String,
    pub xi: MatFn,
    pub norms: NormLedger,
}

/// `R_{d·x}` as an exact trig polynomial.
pub fn winding_rotation(d: i64) -> MatFn {
    if d == 0 {
        return MatFn::identity();
    }
    let k = d.unsigned_abs() as usize;
    let s = d.signum() as f64;
    let c = TorusFn::mode(k, 1.0, 0.0);
    let sn = TorusFn::mode(k, 0.0, s);
    MatFn::new([[c.clone(), sn.scale(-1.0)], [sn, c]])
}

/// `‖θ‖`-style reduction to `(−1/2, 1/2]`.
fn centered(t: f64) -> f64 {
    let r = t - t.round();
    if r <= -0.5 {
        r + 1.0
    } else {
        r
    }
}

/// Principal angles of the conformal part of `A` on an `m`-grid, lifted
/// continuously. Returns the lift and the degree.
fn lift_angles(a: &MatFn, m: usize) -> Result<(Vec<f64>, i64)> {
    let s = a.samples(m);
    let mut lift = Vec::with_capacity(m + 1);
    let mut prev = 0.0;
    for (j, x) in s.iter().enumerate() {
        let (ca, cb) = x.conformal_ab();
        let d = ca * ca + cb * cb;
        if d <= 1e-10 {
            return Err(Error::NotNearRotation { min_det: d });
        }
        let p = x.conformal_angle();
        let v = if j == 0 { p - p.floor() } else { prev + centered(p - prev) };
        lift.push(v);
        prev = v;
    }
    let p0 = s[0].conformal_angle();
    let end = prev + centered(p0 - prev);
    let degree = (end - lift[0]).round() as i64;
    Ok((lift, degree))
}

impl Cocycle {
    /// Checks `|det A − 1| ≤` [`DET_TOL`] on a grid.
    pub fn new(alpha: f64, a: MatFn) -> Result<Self> {
        if !(alpha.is_finite()) {
            return Err(Error::InvalidInput("alpha must be finite".into()));
        }
        let m = grid_size_at_least(8 * (a.bandwidth() + 1));
        let defect = a.det_defect(m);
        if !(defect <= DET_TOL) {
            return Err(Error::InvalidInput(format!("det A deviates from 1 by {defect:.3e}")));
        }
        Ok(Cocycle { alpha, a })
    }

    pub fn new_unchecked(alpha: f64, a: MatFn) -> Self {
        Cocycle { alpha, a }
    }

    /// `A(x) = [[E − v(x), −1], [1, 0]]`.
    pub fn schrodinger(v: &TorusFn, e: f64, alpha: f64) -> Self {
        let top = v.scale(-1.0).add_constant(e);
        let a = MatFn::new([[top, TorusFn::constant(-1.0)], [TorusFn::constant(1.0), TorusFn::zero()]]);
        Cocycle { alpha, a }
    }

    /// Schrödinger cocycle with `v(x) = 2λ cos(2πx)`.
    pub fn almost_mathieu(lambda: f64, e: f64, alpha: f64) -> Self {
        Self::schrodinger(&TorusFn::mode(1, 2.0 * lambda, 0.0), e, alpha)
    }

    /// `A^{(n)}(x) = A(x + (n−1)α) ··· A(x)`.
    pub fn iterate(&self, n: &BigUint) -> Result<MatFn> {
        self.iterate_with(n, IterateMode::Splitting)
    }

    pub fn iterate_with(&self, n: &BigUint, mode: IterateMode) -> Result<MatFn> {
        if n.is_zero() {
            return Err(Error::InvalidInput("iterate needs n >= 1".into()));
        }
        let chop = |m: MatFn| m.chop(ITERATE_CHOP).0;
        match mode {
            IterateMode::Naive => {
                let steps = n.to_u64().ok_or_else(|| Error::InvalidInput("naive iteration needs n < 2^64".into()))?;
                let mut p = self.a.clone();
                for j in 1..steps {
                    let aj = self.a.translate_mult(self.alpha, &BigUint::from(j));
                    p = chop(aj.mul(&p));
                    self.check_band(&p)?;
                }
                Ok(p)
            }
            IterateMode::Splitting => {
                let mut p = self.a.clone();
                let mut m = BigUint::one();
                for bit in (0..n.bits() - 1).rev() {
                    // A^{(2m)}(x) = A^{(m)}(x + mα) A^{(m)}(x)
                    p = chop(p.translate_mult(self.alpha, &m).mul(&p));
                    m <<= 1u32;
                    if n.bit(bit) {
                        p = chop(self.a.translate_mult(self.alpha, &m).mul(&p));
                        m += 1u32;
                    }
                    self.check_band(&p)?;
                }
                Ok(p)
            }
        }
    }

    fn check_band(&self, p: &MatFn) -> Result<()> {
        if p.bandwidth() > DEFAULT_MODE_CAP {
            return Err(Error::BandwidthOverflow { needed: p.bandwidth(), cap: DEFAULT_MODE_CAP });
        }
        Ok(())
    }

    /// `A^{(n)}(x)` by direct pointwise multiplication.
    pub fn iterate_at(&self, x: f64, n: u64) -> Mat2 {
        let mut p = Mat2::IDENTITY;
        for j in 0..n {
            let xj = x + mul_mod1(&BigUint::from(j), self.alpha);
            p = self.a.eval(xj) * p;
        }
        p
    }

    /// Splits `A` into `R_{φ + d·x}` (the normalised conformal part) and `F`.
    pub fn decompose(&self) -> Result<DecomposedCocycle> {
        let conf = self.a.conformal_part();
        let (ca, cb) = (conf.entry(0, 0).clone(), conf.entry(0, 1).clone());
        let m = grid_size_at_least((4 * self.a.bandwidth() + 4).max(256));
        let (lift, degree) = lift_angles(&self.a, m)?;
        // reference lift on the grid, made periodic
        let periodic: Vec<f64> =
            lift.iter().enumerate().map(|(j, v)| v - degree as f64 * j as f64 / m as f64).collect();
        let reference = TorusFn::from_samples_band(&periodic, m / 4)?;
        let wind_c = TorusFn::mode(degree.unsigned_abs() as usize, 1.0, 0.0);
        let wind_s = TorusFn::mode(degree.unsigned_abs() as usize, 0.0, degree.signum() as f64);
        let inputs = [&ca, &cb, &wind_c, &wind_s, &reference];
        let mut out = crate::torusfun::map_pointwise(&inputs, 1, m / 4, DEFAULT_MODE_CAP, 1.0, |x, y| {
            let (a, b, c, s, r) = (x[0], x[1], x[2], x[3], x[4]);
            // angle of (a − ib)·e^{−2πi d x}, relative to the reference
            let ang = (-b).atan2(a) / TAU;
            let wang = if degree == 0 { 0.0 } else { s.atan2(c) / TAU };
            y[0] = r + centered(ang - wang - r);
        })?;
        let mut phi = out.pop().unwrap();
        let shift = phi.evaluate(0.0).floor();
        if shift != 0.0 {
            phi = phi.add_constant(-shift);
        }
        let rot = rotation_mat(&phi)?.mul(&winding_rotation(degree));
        let f = self.a.sub(&rot);
        Ok(DecomposedCocycle { alpha: self.alpha, phi, degree, f })
    }

    /// Fibered rotation number by weighted Birkhoff averaging of the
    /// projective angle increments.
    pub fn rotation_number(&self, opts: &RotationOpts) -> Result<RotationNumberEstimate> {
        let m = grid_size_at_least(opts.lift_grid.max(8 * (self.a.bandwidth() + 1)));
        let (lift, degree) = lift_angles(&self.a, m)?;
        let table: Vec<f64> = lift.iter().enumerate().map(|(j, v)| v - degree as f64 * j as f64 / m as f64).collect();
        let k = opts.initial_conditions.max(1);
        let runs: Vec<(f64, f64, u64)> =
            (0..k).into_par_iter().map(|i| self.rotation_run(i, k, &table, degree, opts)).collect();
        let reference = runs[0].0;
        let rel: Vec<f64> = runs.iter().map(|r| reference + centered(r.0 - reference)).collect();
        let mean = rel.iter().sum::<f64>() / k as f64;
        let spread = rel.iter().fold(0.0f64, |a, r| a.max((r - mean).abs()));
        let delta = runs.iter().fold(0.0f64, |a, r| a.max(r.1));
        let orbit_length = runs.iter().map(|r| r.2).max().unwrap_or(0);
        if spread > opts.spread_limit {
            return Err(Error::NonConvergent { spread });
        }
        Ok(RotationNumberEstimate {
            rho: mean - mean.floor(),
            error_bound: spread.max(delta).max(1e-14),
            orbit_length,
            degree,
            per_initial_condition: rel.iter().map(|r| r - r.floor()).collect(),
        })
    }

    /// One orbit; returns (estimate, last change, length used).
    fn rotation_run(&self, i: usize, k: usize, table: &[f64], degree: i64, opts: &RotationOpts) -> (f64, f64, u64) {
        let m = table.len();
        let mut x = (i as f64 + 0.5) / k as f64;
        let ang = TAU * (i as f64 + 0.25) / k as f64;
        let mut v = [ang.cos(), ang.sin()];
        let mut incs: Vec<f64> = Vec::new();
        let mut prev_est: Option<f64> = None;
        let mut last = (0.0, f64::INFINITY, 0u64);
        for p in opts.min_log2_len..=opts.max_log2_len.max(opts.min_log2_len) {
            let len = 1usize << p;
            while incs.len() < len {
                let mut a = self.a.eval(x);
                if degree != 0 {
                    a = Mat2::rotation(-(degree as f64) * x) * a;
                }
                let j = ((x * m as f64).round() as usize) % m;
                let phi_p = a.conformal_angle();
                let phi = table[j] + centered(phi_p - table[j]);
                let s = Mat2::rotation(-phi_p) * a;
                let w = s.apply(v);
                let cross = v[0] * w[1] - v[1] * w[0];
                let dot = v[0] * w[0] + v[1] * w[1];
                incs.push(phi + cross.atan2(dot) / TAU);
                let w2 = Mat2::rotation(phi_p).apply(w);
                let n = w2[0].hypot(w2[1]);
                v = [w2[0] / n, w2[1] / n];
                x += self.alpha;
                x -= x.floor();
            }
            let est = weighted_average(&incs[..len]);
            let delta = prev_est.map_or(f64::INFINITY, |q: f64| (est - q).abs());
            last = (est, delta, len as u64);
            if delta < opts.tol {
                break;
            }
            prev_est = Some(est);
        }
        last
    }

    /// Top Lyapunov exponent averaged over 8 phases, `len` steps each after
    /// a burn-in.
    pub fn lyapunov(&self, len: usize) -> Result<f64> {
        if len < 100 {
            return Err(Error::InvalidInput("lyapunov needs L >= 100".into()));
        }
        let burn = (len / 10).min(1000);
        let vals: Vec<f64> = (0..8)
            .into_par_iter()
            .map(|i| {
                let mut x = (i as f64 + 0.3) / 8.0;
                let mut v = [0.6f64, 0.8];
                let mut acc = 0.0;
                for step in 0..burn + len {
                    let w = self.a.eval(x).apply(v);
                    let n = w[0].hypot(w[1]);
                    if step >= burn {
                        acc += n.ln();
                    }
                    v = [w[0] / n, w[1] / n];
                    x += self.alpha;
                    x -= x.floor();
                }
                acc / len as f64
            })
            .collect();
        Ok(vals.iter().sum::<f64>() / vals.len() as f64)
    }
}

/// `Σ w(j/L) θ_j / Σ w(j/L)` with `w(t) = exp(−1/(t(1−t)))`.
pub fn weighted_average(values: &[f64]) -> f64 {
    let l = values.len() as f64;
    let (mut num, mut den, mut cn, mut cd) = (0.0f64, 0.0f64, 0.0f64, 0.0f64);
    for (j, v) in values.iter().enumerate() {
        let t = (j as f64 + 0.5) / l;
        let w = (-1.0 / (t * (1.0 - t))).exp();
        // compensated sums
        let y = w * v - cn;
        let s = num + y;
        cn = (s - num) - y;
        num = s;
        let y = w - cd;
        let s = den + y;
        cd = (s - den) - y;
        den = s;
    }
    num / den
}

impl DecomposedCocycle {
    /// `R_{φ + d·x} + F`.
    pub fn reconstitute(&self) -> Result<Cocycle> {
        let rot = rotation_mat(&self.phi)?.mul(&winding_rotation(self.degree));
        Ok(Cocycle::new_unchecked(self.alpha, rot.add(&self.f)))
    }

    /// `ξ = A^{(n)} − R_{S_n φ}`.
    pub fn iterated_defect(&self, n: &BigUint) -> Result<IteratedDefect> {
        if self.degree != 0 {
            return Err(Error::NonzeroDegree { degree: self.degree });
        }
        let an = self.reconstitute()?.iterate(n)?;
        let (s, _) = self.phi.birkhoff_sum(self.alpha, n);
        let xi = an.sub(&rotation_mat(&s)?);
        let norms = xi.ledger(format!("xi_{n}"), &[0, 1]);
        Ok(IteratedDefect { n: n.to_string(), xi, norms })
    }
}

/// `Q(M) = (M + JMJ)/2`.
pub fn q_project(m: &MatFn) -> MatFn {
    m.q_project()
}
