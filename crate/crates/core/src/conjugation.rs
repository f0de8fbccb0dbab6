//! Pointwise elliptic conjugation and the repeated pass over an iterated
//! cocycle `Ā = R_φ̄ + F̄`.
//!
//! The elliptic step works point by point: at each `x` the defect `F` and
//! the deviation `D = B − Id` are kept as small quantities so that relative
//! precision survives when they are far below machine epsilon.

use std::f64::consts::PI;

use num_bigint::BigUint;
use num_traits::ToPrimitive;
use serde::{Deserialize, Serialize};

use crate::arithmetic::mul_mod1;
use crate::error::{Error, Result};
use crate::mat2::Mat2;
use crate::torusfun::{
    grid_size_at_least, map_pointwise, rotation_mat_capped, MatFn, NormLedger, TorusFn, DEFAULT_MODE_CAP,
};

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct EllipticOpts {
    pub inner_tol: f64,
    pub max_inner: usize,
    pub ellipticity_floor: f64,
    /// Smallness ratio: `‖F̄‖₀ < ε·min{1, ellipticity}`.
    pub epsilon: f64,
    pub check_smallness: bool,
    pub record_internals: bool,
    pub cap: usize,
    /// Below this `‖G‖` a stalled inner iteration counts as converged.
    pub noise_floor: f64,
}

impl Default for EllipticOpts {
    fn default() -> Self {
        EllipticOpts {
            inner_tol: 1e-14,
            max_inner: 40,
            ellipticity_floor: 1e-6,
            epsilon: 0.05,
            check_smallness: true,
            record_internals: false,
            cap: DEFAULT_MODE_CAP,
            noise_floor: ROUNDOFF_FLOOR,
        }
    }
}

/// Quantities of the first inner iteration, as functions on the circle.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EllipticStepInternals {
    pub y: MatFn,
    pub g: MatFn,
    pub x_comp: TorusFn,
    pub y_comp: TorusFn,
    pub z_comp: TorusFn,
    pub v: MatFn,
    pub theta: TorusFn,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EllipticTrace {
    pub n_label: usize,
    /// Number of `(v, θ)` updates applied.
    pub iterations: usize,
    /// `max_x ‖G_k(x)‖` for each computed `G_k`.
    pub g_norms: Vec<f64>,
    /// `min_x ‖R_{2φ̄(x)} − Id‖`.
    pub ellipticity_min: f64,
    /// `max_x ‖(R_{2φ̄(x)} − Id)⁻¹‖`.
    pub inverse_norm_max: f64,
    pub y_norm: f64,
    pub f_norm: f64,
    /// Largest pointwise residual of `vR − Rv + ḠR = 0`.
    pub linear_residual_max: f64,
    /// `max_x ‖B Ā B⁻¹ − R_{φ₁}‖` on the diagnostic grid.
    pub defect: f64,
    pub grid: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EllipticResult {
    /// `B₁ = Id + d`.
    pub b: MatFn,
    pub d: MatFn,
    pub phi: TorusFn,
    /// `B₁ Ā B₁⁻¹ − R_{φ₁}`.
    pub residual: MatFn,
    pub trace: EllipticTrace,
    pub internals: Option<EllipticStepInternals>,
}

/// `log(Id + Y)` by its power series.
fn log_series(y: Mat2) -> Mat2 {
    let first = y.frobenius();
    let mut sum = Mat2::ZERO;
    let mut pow = y;
    for h in 1..400 {
        let term = pow.scale(if h % 2 == 1 { 1.0 } else { -1.0 } / h as f64);
        sum = sum + term;
        if term.frobenius() <= 1e-17 * first {
            break;
        }
        pow = pow * y;
    }
    sum
}

/// `sinh(s)/s`.
fn sinhc(s: f64) -> f64 {
    if s < 1e-4 {
        1.0 + s * s / 6.0 * (1.0 + s * s / 20.0)
    } else {
        s.sinh() / s
    }
}

/// Pointwise state `B(R_φ̄ + F̄)B⁻¹ = R_θ + f`, `B = Id + d`.
#[derive(Debug, Clone, Copy)]
struct Point {
    theta: f64,
    f: Mat2,
    d: Mat2,
}

struct StepInfo {
    y: Mat2,
    g: Mat2,
    xyz: [f64; 3],
    v: Mat2,
    linear_residual: f64,
}

impl Point {
    fn g(&self) -> (Mat2, Mat2) {
        let y = self.f * Mat2::rotation(-self.theta);
        (y, log_series(y))
    }

    /// One `(v, θ)` update.
    fn update(&mut self) -> StepInfo {
        let (y, g) = self.g();
        let x = (g.0[0][0] - g.0[1][1]) / 2.0;
        let yy = (g.0[0][1] + g.0[1][0]) / 2.0;
        let z = (g.0[1][0] - g.0[0][1]) / (4.0 * PI);
        // (R_{2θ} − Id) is conformal; its inverse is explicit
        let m = -Mat2::id_minus_rotation(2.0 * self.theta);
        let [xt, yt] = m.inverse().map(|mi| mi.apply([x, yy])).unwrap_or([f64::NAN, f64::NAN]);
        let v = Mat2::new(xt, yt, yt, -xt);
        let r = Mat2::rotation(self.theta);
        let gbar = Mat2::new(x, yy, yy, -x);
        let linear_residual = (v * r - r * v + gbar * r).frobenius();
        let s = xt.hypot(yt);
        let sh = (s / 2.0).sinh();
        let c = 2.0 * sh * sh;
        let k = sinhc(s);
        let w = Mat2::new(c, 0.0, 0.0, c) + v.scale(k);
        let wp = Mat2::new(c, 0.0, 0.0, c) - v.scale(k);
        let ipw = Mat2::IDENTITY + w;
        let ipwp = Mat2::IDENTITY + wp;
        self.f = w * r + r * wp + w * r * wp + r * Mat2::id_minus_rotation(z) + ipw * self.f * ipwp;
        self.d = w + self.d + w * self.d;
        self.theta += z;
        StepInfo { y, g, xyz: [x, yy, z], v, linear_residual }
    }
}

/// Default for [`EllipticOpts::noise_floor`].
pub const ROUNDOFF_FLOOR: f64 = 1e3 * f64::EPSILON;

fn ellipticity(phi: f64) -> f64 {
    2.0 * (2.0 * PI * phi).sin().abs()
}

/// Conjugates `Ā = R_φ̄ + F̄` pointwise to `R_{φ₁}` (up to `residual`).
pub fn elliptic_reduce(
    phi_bar: &TorusFn,
    f_bar: &MatFn,
    n_label: usize,
    opts: &EllipticOpts,
) -> Result<EllipticResult> {
    let bw = phi_bar.bandwidth().max(f_bar.bandwidth());
    let m = grid_size_at_least(8 * (bw + 1)).max(64);
    let phis = phi_bar.samples(m);
    let fs = f_bar.samples(m);
    let ell: Vec<f64> = phis.iter().map(|&p| ellipticity(p)).collect();
    let ellipticity_min = ell.iter().copied().fold(f64::INFINITY, f64::min);
    let f_norm = fs.iter().fold(0.0f64, |a, x| a.max(x.frobenius()));
    let mut trace = EllipticTrace {
        n_label,
        iterations: 0,
        g_norms: Vec::new(),
        ellipticity_min,
        inverse_norm_max: 1.0 / ellipticity_min,
        y_norm: f_norm,
        f_norm,
        linear_residual_max: 0.0,
        defect: 0.0,
        grid: m,
    };
    if ellipticity_min < opts.ellipticity_floor {
        return Err(Error::ResonantAngle { min: ellipticity_min, floor: opts.ellipticity_floor });
    }
    if opts.check_smallness {
        let bound = opts.epsilon * ellipticity_min.min(1.0);
        if !(f_norm < bound) {
            return Err(Error::Precondition {
                what: "|F|_0 < eps*min(1, ellipticity)".into(),
                measured: f_norm,
                bound,
            });
        }
    }
    if f_norm >= 0.5 {
        return Err(Error::LogDiverges { norm: f_norm });
    }
    // lockstep pass on the diagnostic grid
    let mut pts: Vec<Point> = phis.iter().zip(&fs).map(|(&theta, &f)| Point { theta, f, d: Mat2::ZERO }).collect();
    let mut internals = None;
    let mut stalls = 0;
    loop {
        let gn = pts.iter().fold(0.0f64, |a, p| a.max(p.g().1.frobenius()));
        if let Some(&prev) = trace.g_norms.last() {
            if gn > 0.9 * prev && gn >= opts.inner_tol {
                if gn < opts.noise_floor {
                    trace.g_norms.push(gn);
                    break;
                }
                stalls += 1;
                if stalls >= 3 {
                    return Err(Error::NoContraction { iteration: trace.iterations, norm: gn });
                }
            } else {
                stalls = 0;
            }
        }
        trace.g_norms.push(gn);
        if gn == 0.0 || (gn < opts.inner_tol && trace.iterations > 0) || trace.iterations >= opts.max_inner {
            break;
        }
        let ymax = pts.iter().fold(0.0f64, |a, p| a.max(p.g().0.frobenius()));
        if ymax >= 0.5 {
            return Err(Error::LogDiverges { norm: ymax });
        }
        let first = trace.iterations == 0;
        let mut infos = Vec::with_capacity(if first { m } else { 0 });
        for p in pts.iter_mut() {
            let theta = p.theta;
            let info = p.update();
            trace.linear_residual_max = trace.linear_residual_max.max(info.linear_residual);
            if first && opts.record_internals {
                infos.push((theta, info));
            }
        }
        if first && opts.record_internals {
            internals = Some(internals_from(&infos, m)?);
        }
        trace.iterations += 1;
    }
    trace.defect = pts.iter().fold(0.0f64, |a, p| a.max(p.f.frobenius()));
    if trace.iterations == 0 {
        return Ok(EllipticResult {
            b: MatFn::identity(),
            d: MatFn::zero(),
            phi: phi_bar.clone(),
            residual: f_bar.clone(),
            trace,
            internals,
        });
    }
    let k = trace.iterations;
    let out = map_pointwise(
        &[phi_bar, f_bar.entry(0, 0), f_bar.entry(0, 1), f_bar.entry(1, 0), f_bar.entry(1, 1)],
        9,
        bw,
        opts.cap,
        1.0,
        |x, y| {
            let mut p = Point { theta: x[0], f: Mat2::new(x[1], x[2], x[3], x[4]), d: Mat2::ZERO };
            for _ in 0..k {
                p.update();
            }
            y[..4].copy_from_slice(&[p.d.0[0][0], p.d.0[0][1], p.d.0[1][0], p.d.0[1][1]]);
            y[4] = p.theta - x[0];
            y[5..].copy_from_slice(&[p.f.0[0][0], p.f.0[0][1], p.f.0[1][0], p.f.0[1][1]]);
        },
    )?;
    let mut it = out.into_iter();
    let mut next = || it.next().unwrap();
    let d = MatFn::new([[next(), next()], [next(), next()]]);
    let dtheta = next();
    let residual = MatFn::new([[next(), next()], [next(), next()]]);
    Ok(EllipticResult { b: d.add_const(Mat2::IDENTITY), d, phi: phi_bar.add(&dtheta), residual, trace, internals })
}

fn internals_from(infos: &[(f64, StepInfo)], m: usize) -> Result<EllipticStepInternals> {
    let band = m / 4;
    let scalar = |f: &dyn Fn(&(f64, StepInfo)) -> f64| -> Result<TorusFn> {
        let v: Vec<f64> = infos.iter().map(f).collect();
        TorusFn::from_samples_band(&v, band)
    };
    let mat = |f: &dyn Fn(&(f64, StepInfo)) -> Mat2| -> Result<MatFn> {
        let v: Vec<Mat2> = infos.iter().map(f).collect();
        MatFn::from_samples_band(&v, band)
    };
    Ok(EllipticStepInternals {
        y: mat(&|i| i.1.y)?,
        g: mat(&|i| i.1.g)?,
        x_comp: scalar(&|i| i.1.xyz[0])?,
        y_comp: scalar(&|i| i.1.xyz[1])?,
        z_comp: scalar(&|i| i.1.xyz[2])?,
        v: mat(&|i| i.1.v)?,
        theta: scalar(&|i| i.0)?,
    })
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct CheapTrickOpts {
    pub r0: usize,
    pub floor_tol: f64,
    /// `C` in `‖(R_{2φ̄} − Id)⁻¹‖₀ ≤ C n²`.
    pub rf_constant: f64,
    pub enforce_preconditions: bool,
    /// Coefficients of each new defect below this fraction of its largest
    /// coefficient are dropped.
    pub chop_rel: f64,
    pub elliptic: EllipticOpts,
}

impl Default for CheapTrickOpts {
    fn default() -> Self {
        CheapTrickOpts {
            r0: 3,
            floor_tol: 1e-15,
            rf_constant: 10.0,
            enforce_preconditions: true,
            chop_rel: 1e-15,
            elliptic: EllipticOpts::default(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PassRecord {
    pub pass: usize,
    pub norm0: f64,
    pub norm1: f64,
    pub inner_iters: usize,
    pub ellipticity_min: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CheapTrickResult {
    /// Composed conjugacy `B̃ = Id + d`.
    pub b: MatFn,
    pub d: MatFn,
    /// `B̄ − Id` of the last pass alone.
    pub last_d: MatFn,
    /// `B̃ − Id` of the passes before the last one.
    pub prior_d: MatFn,
    pub phi: TorusFn,
    pub f: MatFn,
    pub passes: usize,
    pub early_exit: bool,
    pub per_pass: Vec<PassRecord>,
    pub per_pass_norms: Vec<NormLedger>,
    /// Largest disagreement between the defect as carried and the direct
    /// `B̃(x+qα) Ā(x) B̃(x)⁻¹ − R_φ̃(x)` on a grid, over all passes.
    pub route_check_max: f64,
    pub rf_measured: f64,
}

fn chop_rel(m: &MatFn, rel: f64) -> MatFn {
    let top = m.entries.iter().flatten().map(|f| f.coeff_max()).fold(0.0, f64::max);
    m.chop(rel * top).0
}

/// Up to `r0 + 1` elliptic passes, each followed by forming the new defect
/// of `B̄_k(x + qα) Ā(x) B̄_k(x)⁻¹`.
pub fn cheap_trick(
    alpha: f64,
    q: &BigUint,
    n_label: usize,
    phi_bar: &TorusFn,
    f_bar: &MatFn,
    opts: &CheapTrickOpts,
) -> Result<CheapTrickResult> {
    let m = grid_size_at_least(8 * (phi_bar.bandwidth().max(f_bar.bandwidth()) + 1)).max(64);
    let ell_min = phi_bar.samples(m).iter().fold(f64::INFINITY, |a, &p| a.min(ellipticity(p)));
    let rf_measured = 1.0 / ell_min;
    if opts.enforce_preconditions {
        let n = n_label.max(1) as f64;
        let bound = opts.rf_constant * n * n;
        if !(rf_measured <= bound) {
            return Err(Error::Precondition {
                what: "|(R_2phi - Id)^-1|_0 <= C n^2".into(),
                measured: rf_measured,
                bound,
            });
        }
        let f0 = f_bar.sup_norm();
        let qf = q.to_f64().unwrap_or(f64::INFINITY);
        if !(f0 * qf < 1.0) {
            return Err(Error::Precondition { what: "|F|_0 < 1/q_n".into(), measured: f0, bound: 1.0 / qf });
        }
    }
    let a_bar = rotation_mat_capped(phi_bar, opts.elliptic.cap)?.add(f_bar);
    let beta = mul_mod1(q, alpha);
    let mut phi = phi_bar.clone();
    let mut f = f_bar.clone();
    let mut dbar = MatFn::zero();
    let mut last_d = MatFn::zero();
    let mut prior_d = MatFn::zero();
    let mut per_pass = Vec::new();
    let mut per_pass_norms = Vec::new();
    let mut route_check_max = 0.0f64;
    let mut early_exit = false;
    let mut passes = 0;
    for pass in 1..=opts.r0 + 1 {
        if f.sup_norm() < opts.floor_tol {
            early_exit = true;
            break;
        }
        let er = elliptic_reduce(&phi, &f, n_label, &opts.elliptic).map_err(|e| e.in_pass(pass))?;
        let current = rotation_mat_capped(&phi, opts.elliptic.cap)?.add(&f);
        let binv = er.d.adjugate().add_const(Mat2::IDENTITY);
        let delta = er.d.shift_difference_mult(alpha, q);
        let f_new = delta.mul(&current).mul(&binv).add(&er.residual);
        f = chop_rel(&f_new, opts.chop_rel);
        prior_d = dbar.clone();
        last_d = er.d.clone();
        dbar = er.d.add(&dbar).add(&er.d.mul(&dbar));
        dbar = chop_rel(&dbar, opts.chop_rel);
        phi = er.phi;
        passes = pass;
        let ledger = f.ledger(format!("F_{pass}"), &[0, 1]);
        per_pass.push(PassRecord {
            pass,
            norm0: ledger.get(0).unwrap(),
            norm1: ledger.get(1).unwrap(),
            inner_iters: er.trace.iterations,
            ellipticity_min: er.trace.ellipticity_min,
        });
        per_pass_norms.push(ledger);
        route_check_max = route_check_max.max(route_check(&a_bar, &dbar, &phi, &f, beta, 128));
    }
    if passes == 0 && !early_exit {
        early_exit = true;
    }
    Ok(CheapTrickResult {
        b: dbar.add_const(Mat2::IDENTITY),
        d: dbar,
        last_d,
        prior_d,
        phi,
        f,
        passes,
        early_exit,
        per_pass,
        per_pass_norms,
        route_check_max,
        rf_measured,
    })
}

/// Pointwise `‖(B̄(x+β) Ā(x) B̄(x)⁻¹ − R_φ(x)) − F(x)‖` maximised over a grid.
fn route_check(a_bar: &MatFn, dbar: &MatFn, phi: &TorusFn, f: &MatFn, beta: f64, m: usize) -> f64 {
    (0..m)
        .map(|j| {
            let x = j as f64 / m as f64;
            let b = dbar.eval(x) + Mat2::IDENTITY;
            let bs = dbar.eval(x + beta) + Mat2::IDENTITY;
            let direct = bs * a_bar.eval(x) * b.adjugate() - Mat2::rotation(phi.evaluate(x));
            direct.max_abs_diff(&f.eval(x))
        })
        .fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;

    /// `e^{G} R_φ − R_φ` for a symmetric traceless `G` of size `~eps`.
    fn sl2_defect(phi: &TorusFn, eps: f64) -> MatFn {
        let g1 = TorusFn::mode(1, eps, 0.3 * eps).add_constant(0.5 * eps);
        let g2 = TorusFn::mode(2, 0.4 * eps, -eps).add_constant(-0.2 * eps);
        let g = MatFn::new([[g1.clone(), g2.clone()], [g2, g1.scale(-1.0)]]);
        let r = crate::torusfun::rotation_mat(phi).unwrap();
        MatFn::map_pointwise(&[&g, &r], DEFAULT_MODE_CAP, eps, |m| {
            let (g, r) = (m[0], m[1]);
            let s = g.0[0][0].hypot(g.0[0][1]);
            let sh = (s / 2.0).sinh();
            let w = Mat2::new(2.0 * sh * sh, 0.0, 0.0, 2.0 * sh * sh) + g.scale(sinhc(s));
            w * r
        })
        .unwrap()
    }

    #[test]
    fn zero_defect_is_trivial() {
        let phi = TorusFn::mode(1, 0.02, 0.0).add_constant(0.2);
        let r = elliptic_reduce(&phi, &MatFn::zero(), 0, &EllipticOpts::default()).unwrap();
        assert_eq!(r.phi, phi);
        assert_eq!(r.b, MatFn::identity());
        assert_eq!(r.trace.iterations, 0);
    }

    #[test]
    fn constant_matrix_eigen_angle() {
        let g = Mat2::new(0.6e-4, 0.8e-4, 0.8e-4, -0.6e-4);
        // e^G for symmetric traceless G
        let s = 1e-4f64;
        let eg = Mat2::new(s.cosh(), 0.0, 0.0, s.cosh()) + g.scale(s.sinh() / s);
        let a = eg * Mat2::rotation(0.2);
        let phi = TorusFn::constant(0.2);
        let f = MatFn::constant(a - Mat2::rotation(0.2));
        let r = elliptic_reduce(&phi, &f, 0, &EllipticOpts::default()).unwrap();
        let p1 = r.phi.mean();
        assert!(((2.0 * PI * p1).cos() - a.trace() / 2.0).abs() < 1e-12);
        assert!(r.phi.coeffs()[1..].iter().all(|c| c.norm() < 1e-13));
        assert!(r.trace.linear_residual_max < 1e-12);
    }

    #[test]
    fn resonant_angle_rejected() {
        let phi = TorusFn::constant(0.5);
        let f = MatFn::constant(Mat2::new(1e-6, 0.0, 0.0, -1e-6));
        assert!(matches!(elliptic_reduce(&phi, &f, 0, &EllipticOpts::default()), Err(Error::ResonantAngle { .. })));
    }

    #[test]
    fn cheap_trick_trivial_and_count() {
        let phi = TorusFn::constant(0.3);
        let q = BigUint::from(5u32);
        let r = cheap_trick(0.618, &q, 1, &phi, &MatFn::zero(), &CheapTrickOpts::default()).unwrap();
        assert_eq!(r.b, MatFn::identity());
        assert!(r.early_exit);
        let f = sl2_defect(&phi, 1e-4);
        let opts = CheapTrickOpts { r0: 0, ..Default::default() };
        let r = cheap_trick(0.618, &q, 1, &phi, &f, &opts).unwrap();
        assert_eq!(r.passes, 1);
        assert_eq!(r.per_pass.len(), 1);
        assert!(r.route_check_max < 1e-12, "{}", r.route_check_max);
    }
}
