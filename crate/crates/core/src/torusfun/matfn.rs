//! 2×2 matrix-valued maps on the circle.

use num_bigint::BigUint;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::norms::NormLedger;
use super::{analyze, cis, grid_size_at_least, map_pointwise, TorusFn, DEFAULT_MODE_CAP};
use crate::arithmetic::mul_mod1;
use crate::error::{Error, Result};
use crate::mat2::Mat2;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatFn {
    pub entries: [[TorusFn; 2]; 2],
}

impl MatFn {
    pub fn new(entries: [[TorusFn; 2]; 2]) -> Self {
        MatFn { entries }
    }

    pub fn constant(m: Mat2) -> Self {
        let c = |i: usize, j: usize| TorusFn::constant(m.0[i][j]);
        MatFn::new([[c(0, 0), c(0, 1)], [c(1, 0), c(1, 1)]])
    }

    pub fn identity() -> Self {
        Self::constant(Mat2::IDENTITY)
    }

    pub fn zero() -> Self {
        Self::constant(Mat2::ZERO)
    }

    pub fn entry(&self, i: usize, j: usize) -> &TorusFn {
        &self.entries[i][j]
    }

    fn map_entries(&self, f: impl Fn(&TorusFn) -> TorusFn) -> MatFn {
        let e = &self.entries;
        MatFn::new([[f(&e[0][0]), f(&e[0][1])], [f(&e[1][0]), f(&e[1][1])]])
    }

    fn zip_entries(&self, o: &MatFn, f: impl Fn(&TorusFn, &TorusFn) -> TorusFn) -> MatFn {
        let (a, b) = (&self.entries, &o.entries);
        MatFn::new([[f(&a[0][0], &b[0][0]), f(&a[0][1], &b[0][1])], [f(&a[1][0], &b[1][0]), f(&a[1][1], &b[1][1])]])
    }

    pub fn bandwidth(&self) -> usize {
        self.entries.iter().flatten().map(|f| f.bandwidth()).max().unwrap()
    }

    /// Mean matrix `∫ M`.
    pub fn mean(&self) -> Mat2 {
        let e = &self.entries;
        Mat2::new(e[0][0].mean(), e[0][1].mean(), e[1][0].mean(), e[1][1].mean())
    }

    pub fn eval(&self, x: f64) -> Mat2 {
        let e = &self.entries;
        let n = self.bandwidth();
        let mut out = [e[0][0].mean(), e[0][1].mean(), e[1][0].mean(), e[1][1].mean()];
        if n == 0 {
            return Mat2::new(out[0], out[1], out[2], out[3]);
        }
        let xr = x - x.floor();
        let w = cis(xr);
        let mut z = Complex64::new(1.0, 0.0);
        for l in 1..=n {
            z = if l % 32 == 0 { cis(mul_mod1(&BigUint::from(l), xr)) } else { z * w };
            for (o, f) in out.iter_mut().zip(e.iter().flatten()) {
                if let Some(c) = f.coeffs().get(l) {
                    *o += 2.0 * (c.re * z.re - c.im * z.im);
                }
            }
        }
        Mat2::new(out[0], out[1], out[2], out[3])
    }

    /// `M(j/m)`, `j = 0..m`.
    pub fn samples(&self, m: usize) -> Vec<Mat2> {
        let s: Vec<Vec<f64>> = self.entries.iter().flatten().map(|f| f.samples(m)).collect();
        (0..m).map(|j| Mat2::new(s[0][j], s[1][j], s[2][j], s[3][j])).collect()
    }

    /// Band `0..=bandwidth` of the map sampled at `j/m`.
    pub fn from_samples_band(samples: &[Mat2], bandwidth: usize) -> Result<Self> {
        let col = |i: usize, j: usize| -> Result<TorusFn> {
            let v: Vec<f64> = samples.iter().map(|m| m.0[i][j]).collect();
            TorusFn::from_samples_band(&v, bandwidth)
        };
        Ok(MatFn::new([[col(0, 0)?, col(0, 1)?], [col(1, 0)?, col(1, 1)?]]))
    }

    /// Applies a pointwise matrix map with adaptive bandwidth.
    pub fn map_pointwise(
        inputs: &[&MatFn],
        cap: usize,
        abs_scale: f64,
        g: impl Fn(&[Mat2]) -> Mat2 + Sync,
    ) -> Result<MatFn> {
        let flat: Vec<&TorusFn> = inputs.iter().flat_map(|m| m.entries.iter().flatten()).collect();
        let k = inputs.len();
        let start = inputs.iter().map(|m| m.bandwidth()).max().unwrap_or(0);
        let out = map_pointwise(&flat, 4, start, cap, abs_scale, |x, y| {
            let ms: Vec<Mat2> = (0..k).map(|i| Mat2::new(x[4 * i], x[4 * i + 1], x[4 * i + 2], x[4 * i + 3])).collect();
            let r = g(&ms);
            y.copy_from_slice(&[r.0[0][0], r.0[0][1], r.0[1][0], r.0[1][1]]);
        })?;
        let mut it = out.into_iter();
        let mut next = || it.next().unwrap();
        Ok(MatFn::new([[next(), next()], [next(), next()]]))
    }

    pub fn add(&self, o: &MatFn) -> MatFn {
        self.zip_entries(o, |a, b| a.add(b))
    }

    pub fn sub(&self, o: &MatFn) -> MatFn {
        self.zip_entries(o, |a, b| a.sub(b))
    }

    pub fn scale(&self, s: f64) -> MatFn {
        self.map_entries(|f| f.scale(s))
    }

    pub fn add_const(&self, m: Mat2) -> MatFn {
        self.add(&MatFn::constant(m))
    }

    /// `C · M` for a constant `C`.
    pub fn left_const(&self, c: Mat2) -> MatFn {
        let e = &self.entries;
        let row = |i: usize, j: usize| e[0][j].scale(c.0[i][0]).add(&e[1][j].scale(c.0[i][1]));
        MatFn::new([[row(0, 0), row(0, 1)], [row(1, 0), row(1, 1)]])
    }

    /// `M · C` for a constant `C`.
    pub fn right_const(&self, c: Mat2) -> MatFn {
        let e = &self.entries;
        let col = |i: usize, j: usize| e[i][0].scale(c.0[0][j]).add(&e[i][1].scale(c.0[1][j]));
        MatFn::new([[col(0, 0), col(0, 1)], [col(1, 0), col(1, 1)]])
    }

    /// Exact product (bandwidth `N_A + N_B`), trimmed at roundoff level.
    pub fn mul(&self, o: &MatFn) -> MatFn {
        let bw = self.bandwidth() + o.bandwidth();
        let m = grid_size_at_least(2 * bw + 2);
        let (a, b) = (self.samples(m), o.samples(m));
        let p: Vec<Mat2> = a.iter().zip(&b).map(|(x, y)| *x * *y).collect();
        let scale = self.wiener_scale() * o.wiener_scale();
        let col = |i: usize, j: usize| {
            let v: Vec<f64> = p.iter().map(|q| q.0[i][j]).collect();
            let spec = analyze(&v);
            TorusFn::from_coeffs(spec[..=bw].to_vec()).trimmed(1e-17 * scale)
        };
        MatFn::new([[col(0, 0), col(0, 1)], [col(1, 0), col(1, 1)]])
    }

    fn wiener_scale(&self) -> f64 {
        self.entries.iter().flatten().map(|f| f.wiener_norm()).fold(0.0, f64::max)
    }

    pub fn det(&self) -> TorusFn {
        let e = &self.entries;
        e[0][0].mul(&e[1][1]).sub(&e[0][1].mul(&e[1][0]))
    }

    pub fn trace(&self) -> TorusFn {
        self.entries[0][0].add(&self.entries[1][1])
    }

    pub fn adjugate(&self) -> MatFn {
        let e = &self.entries;
        MatFn::new([[e[1][1].clone(), e[0][1].scale(-1.0)], [e[1][0].scale(-1.0), e[0][0].clone()]])
    }

    /// `max |det M − 1|` on an `m`-point grid.
    pub fn det_defect(&self, m: usize) -> f64 {
        self.samples(m).iter().fold(0.0, |a, x| a.max((x.det() - 1.0).abs()))
    }

    /// Inverse: the adjugate when `det ≡ 1` to `1e−10` on the grid, otherwise
    /// `adj/det` by an adaptive pointwise map.
    pub fn inverse(&self) -> Result<MatFn> {
        let m = grid_size_at_least(4 * (2 * self.bandwidth()) + 4);
        let dets: Vec<f64> = self.samples(m).iter().map(|x| x.det()).collect();
        let min_det = dets.iter().fold(f64::INFINITY, |a, d| a.min(d.abs()));
        if min_det < 1e-8 {
            return Err(Error::SingularMatrix { min_det });
        }
        if dets.iter().all(|d| (d - 1.0).abs() <= 1e-10) {
            return Ok(self.adjugate());
        }
        MatFn::map_pointwise(&[self], DEFAULT_MODE_CAP, 0.0, |x| x[0].adjugate().scale(1.0 / x[0].det()))
    }

    /// `M(x + β)`.
    pub fn translate(&self, beta: f64) -> MatFn {
        self.map_entries(|f| f.translate(beta))
    }

    /// `M(x + nα)`.
    pub fn translate_mult(&self, alpha: f64, n: &BigUint) -> MatFn {
        self.map_entries(|f| f.translate_mult(alpha, n))
    }

    /// `M(x + β) − M(x)`.
    pub fn shift_difference(&self, beta: f64) -> MatFn {
        self.map_entries(|f| f.shift_difference(beta))
    }

    /// `M(x + nα) − M(x)`.
    pub fn shift_difference_mult(&self, alpha: f64, n: &BigUint) -> MatFn {
        self.map_entries(|f| f.shift_difference_mult(alpha, n))
    }

    pub fn derivative(&self, k: u32) -> MatFn {
        self.map_entries(|f| f.derivative(k))
    }

    pub fn truncate(&self, a: f64) -> MatFn {
        self.map_entries(|f| f.truncate(a))
    }

    /// Anti-conformal part `Q(M) = (M + JMJ)/2`, exact in coefficients.
    pub fn q_project(&self) -> MatFn {
        let e = &self.entries;
        let p = e[0][0].sub(&e[1][1]).scale(0.5);
        let q = e[0][1].add(&e[1][0]).scale(0.5);
        MatFn::new([[p.clone(), q.clone()], [q, p.scale(-1.0)]])
    }

    /// Conformal part `M − Q(M) = [[a, b], [−b, a]]`.
    pub fn conformal_part(&self) -> MatFn {
        let e = &self.entries;
        let a = e[0][0].add(&e[1][1]).scale(0.5);
        let b = e[0][1].sub(&e[1][0]).scale(0.5);
        MatFn::new([[a.clone(), b.clone()], [b.scale(-1.0), a]])
    }

    /// Zeroes coefficients below `tol` in every entry.
    pub fn chop(&self, tol: f64) -> (MatFn, usize) {
        let mut dropped = 0;
        let e = &self.entries;
        let mut c = |f: &TorusFn| {
            let (g, d) = f.chop(tol);
            dropped += d;
            g
        };
        let out = MatFn::new([[c(&e[0][0]), c(&e[0][1])], [c(&e[1][0]), c(&e[1][1])]]);
        (out, dropped)
    }

    /// `Σ_{ij} M_ij²` as an exact trig polynomial.
    fn frobenius_sq(&self) -> TorusFn {
        self.entries.iter().flatten().map(|f| f.mul(f)).fold(TorusFn::zero(), |a, b| a.add(&b))
    }

    /// `sup_x ‖M(x)‖_F`.
    pub fn sup_norm(&self) -> f64 {
        self.frobenius_sq().sup_norm().max(0.0).sqrt()
    }

    /// `‖M‖_k = Σ_{j≤k} sup_x ‖D^j M(x)‖_F`.
    pub fn cr_norm(&self, k: u32) -> f64 {
        (0..=k).map(|j| self.derivative(j).sup_norm()).sum()
    }

    pub fn ledger(&self, id: impl Into<String>, orders: &[u32]) -> NormLedger {
        NormLedger::from_sup_norms(id, orders, |j| self.derivative(j).sup_norm())
    }

    /// `max_j ‖M(j/m) − N(j/m)‖_F`.
    pub fn grid_distance(&self, o: &MatFn, m: usize) -> f64 {
        self.samples(m).iter().zip(o.samples(m)).fold(0.0, |a, (x, y)| a.max(x.max_abs_diff(&y)))
    }

    /// All coefficients of all entries, for exact comparisons.
    pub fn coeff_vectors(&self) -> [Vec<Complex64>; 4] {
        let e = &self.entries;
        [e[0][0].coeffs().to_vec(), e[0][1].coeffs().to_vec(), e[1][0].coeffs().to_vec(), e[1][1].coeffs().to_vec()]
    }
}

/// `R_φ(x)` with entries built pointwise and bandwidth grown adaptively.
pub fn rotation_mat(phi: &TorusFn) -> Result<MatFn> {
    rotation_mat_capped(phi, DEFAULT_MODE_CAP)
}

pub fn rotation_mat_capped(phi: &TorusFn, cap: usize) -> Result<MatFn> {
    let whole = phi.mean().round();
    let reduced;
    let phi = if whole != 0.0 {
        reduced = phi.add_constant(-whole);
        &reduced
    } else {
        phi
    };
    if phi.bandwidth() == 0 || phi.coeffs()[1..].iter().all(|c| c.norm() == 0.0) {
        return Ok(MatFn::constant(Mat2::rotation(phi.mean())));
    }
    let cs = map_pointwise(&[phi], 2, phi.bandwidth(), cap, 1.0, |x, y| {
        let (s, c) = (std::f64::consts::TAU * x[0]).sin_cos();
        y[0] = c;
        y[1] = s;
    })?;
    let (c, s) = (cs[0].clone(), cs[1].clone());
    Ok(MatFn::new([[c.clone(), s.scale(-1.0)], [s, c]]))
}
