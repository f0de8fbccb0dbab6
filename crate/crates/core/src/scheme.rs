//! The rotations-reducibility loop: cheap-trick passes on the iterated
//! cocycle `A_h^{(q_{n_h})}`, then a return to frequency `α`.

use num_bigint::BigUint;
use num_traits::ToPrimitive;
use serde::{Deserialize, Serialize};

use crate::arithmetic::{
    check_resonance, expand, mul_mod1, select_subsequence, ConvergentTable, Frequency, ResonanceReport, Subsequence,
};
use crate::cocycle::{Cocycle, RotationNumberEstimate, RotationOpts};
use crate::conjugation::{cheap_trick, CheapTrickOpts, EllipticOpts, ROUNDOFF_FLOOR};
use crate::error::{Error, Result};
use crate::mat2::Mat2;
use crate::torusfun::{grid_size_at_least, rotation_mat_capped, MatFn, NormLedger, TorusFn, DEFAULT_MODE_CAP};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SchemeConfig {
    /// Resonance threshold `ε` in `‖2q_{n_h}ρ‖ ≥ ε/n_h²`.
    pub epsilon: f64,
    pub r0: usize,
    pub max_steps: usize,
    /// Stop once `‖F_h‖₁` is at or below this.
    pub target_norm: f64,
    /// `C` in `‖(R_{2φ̄} − Id)⁻¹‖₀ ≤ C n²`.
    pub ellipticity_c: f64,
    pub det_tol: f64,
    pub inner_tol: f64,
    pub reconstruction_tol: f64,
    /// Absolute chop applied to `F_h` and to the accumulated conjugacy.
    pub chop_tol: f64,
    pub mode_cap: usize,
    /// Smallness ratio of the pointwise elliptic step.
    pub elliptic_epsilon: f64,
    pub norm_orders: Vec<u32>,
    pub go_back_diagnostics: bool,
    pub max_terms: usize,
    pub rotation: RotationOpts,
}

impl Default for SchemeConfig {
    fn default() -> Self {
        SchemeConfig {
            epsilon: 0.01,
            r0: 3,
            max_steps: 12,
            target_norm: 1e-10,
            ellipticity_c: 10.0,
            det_tol: 1e-10,
            inner_tol: 1e-14,
            reconstruction_tol: 1e-9,
            chop_tol: 1e-15,
            mode_cap: DEFAULT_MODE_CAP,
            elliptic_epsilon: 0.05,
            norm_orders: vec![0, 1, 5],
            go_back_diagnostics: false,
            max_terms: 60,
            rotation: RotationOpts::default(),
        }
    }
}

impl SchemeConfig {
    pub fn validate(&self) -> Result<()> {
        let pos = [
            self.epsilon,
            self.target_norm,
            self.ellipticity_c,
            self.det_tol,
            self.inner_tol,
            self.reconstruction_tol,
            self.chop_tol,
            self.elliptic_epsilon,
        ];
        if pos.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
            return Err(Error::InvalidInput("scheme tolerances must be positive".into()));
        }
        if self.max_steps == 0 || self.mode_cap == 0 || self.max_terms < 2 {
            return Err(Error::InvalidInput("max_steps, mode_cap must be positive and max_terms >= 2".into()));
        }
        if !self.norm_orders.contains(&1) {
            return Err(Error::InvalidInput("norm_orders must contain 1".into()));
        }
        Ok(())
    }

    /// Options for the passes at `q`; roundoff in `A^{(q)}` grows like `q ε`.
    fn cheap_trick_opts(&self, q: &BigUint) -> CheapTrickOpts {
        let floor = (4.0 * q_as_f64(q) * f64::EPSILON).max(ROUNDOFF_FLOOR);
        CheapTrickOpts {
            r0: self.r0,
            rf_constant: self.ellipticity_c,
            floor_tol: floor,
            elliptic: EllipticOpts {
                inner_tol: self.inner_tol,
                epsilon: self.elliptic_epsilon,
                cap: self.mode_cap,
                noise_floor: floor,
                ..EllipticOpts::default()
            },
            ..CheapTrickOpts::default()
        }
    }

    fn high_order(&self) -> u32 {
        self.norm_orders.iter().copied().max().unwrap_or(1)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SchemeOutcome {
    Converged,
    ResonanceBlocked,
    PreconditionFailed,
    BudgetExhausted,
    NumericalFailure,
}

impl SchemeOutcome {
    pub fn as_str(&self) -> &'static str {
        match self {
            SchemeOutcome::Converged => "Converged",
            SchemeOutcome::ResonanceBlocked => "ResonanceBlocked",
            SchemeOutcome::PreconditionFailed => "PreconditionFailed",
            SchemeOutcome::BudgetExhausted => "BudgetExhausted",
            SchemeOutcome::NumericalFailure => "NumericalFailure",
        }
    }

    /// Outcome that an error raised inside a step stands for.
    pub fn from_error(e: &Error) -> SchemeOutcome {
        match e.root() {
            Error::ResonantAngle { .. } => SchemeOutcome::ResonanceBlocked,
            Error::Precondition { .. }
            | Error::NotNearRotation { .. }
            | Error::LogDiverges { .. }
            | Error::NonzeroDegree { .. }
            | Error::RationalInput { .. }
            | Error::InvalidInput(_) => SchemeOutcome::PreconditionFailed,
            _ => SchemeOutcome::NumericalFailure,
        }
    }
}

/// `A_h = R_{φ_h} + F_h = B_cum(x+α) A₀(x) B_cum(x)⁻¹`, where `A₀` is the
/// input after the constant normalisation.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SchemeState {
    pub h: usize,
    pub phi: TorusFn,
    pub f: MatFn,
    pub b_cum: MatFn,
    pub ledger: NormLedger,
    pub resonances: Vec<ResonanceReport>,
}

/// One trace line.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub h: usize,
    pub n_h: Option<usize>,
    pub q_nh: Option<String>,
    pub resonance_value: Option<f64>,
    pub norm0: f64,
    pub norm1: f64,
    pub norm_high: f64,
    pub bandwidth: usize,
    pub outcome_so_far: String,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub passes: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub message: Option<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GoBackDiagnostics {
    pub h: usize,
    /// `Q(Ã)`
    pub l: MatFn,
    /// `Q(Ã(x+qα) − Ã(x))`
    pub l1: MatFn,
    pub j1: MatFn,
    pub j2: MatFn,
    pub j3: MatFn,
    /// `max_x ‖J₁+J₂+J₃ − (R_{φ̃(x+α)}Ã − ÃR_{φ̃})‖`
    pub j_identity_residual: f64,
    /// `max_x ‖R_{φ_{h+1}}·√det(Ã−L) − (Ã−L)‖`
    pub go_back_residual: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StepOutput {
    pub state: SchemeState,
    pub passes: usize,
    pub route_check_max: f64,
    pub invariant_error: f64,
    pub chopped: usize,
    pub diagnostics: Option<GoBackDiagnostics>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SchemeReport {
    pub outcome: SchemeOutcome,
    /// `‖F_h‖₁` of the last state reached.
    pub final_defect: f64,
    /// `verify_conjugacy(B, c, φ)` for the returned pair.
    pub verified_defect: f64,
    pub target_norm: f64,
    pub steps_used: usize,
    pub trace: Vec<StepRecord>,
    /// Conjugacy for the input cocycle, `B_scheme · C`.
    pub b: Option<MatFn>,
    pub phi: Option<TorusFn>,
    /// Constant normalisation `C` applied before the loop.
    pub normalization: Mat2,
    /// `|B_scheme − Id|₀` (Frobenius, sup over a grid).
    pub b_scheme_deviation: f64,
    pub rho: Option<RotationNumberEstimate>,
    pub rho_recheck: Option<f64>,
    pub invariant_errors: Vec<f64>,
    pub diagnostics: Vec<GoBackDiagnostics>,
    pub error: Option<String>,
}

/// Constant `C` with `C M C⁻¹` a rotation, for elliptic `M ∈ SL(2,R)`;
/// the identity when `M` is already a rotation or not elliptic.
pub fn normalizing_conjugacy(m: Mat2) -> Mat2 {
    if m.anti_conformal().frobenius() <= 1e-15 * m.frobenius() {
        return Mat2::IDENTITY;
    }
    let det = m.det();
    if !(det > 0.0) {
        return Mat2::IDENTITY;
    }
    let m = m.scale(1.0 / det.sqrt());
    let half = m.trace() / 2.0;
    let c = m.0[1][0];
    if half.abs() >= 1.0 || c == 0.0 {
        return Mat2::IDENTITY;
    }
    let s = (1.0 - half * half).sqrt() * c.signum();
    let (a, cos) = (m.0[0][0], half);
    // columns of P = C⁻¹ satisfy M P = P R_θ
    let p = Mat2::new(1.0, (a - cos) / s, 0.0, c / s);
    let norm = (c / s).sqrt();
    p.scale(1.0 / norm).adjugate()
}

/// Sup of `‖B(x+α)A(x)B(x)⁻¹ − R_{φ(x)}‖_F` over a 4×-oversampled grid,
/// evaluated point by point.
pub fn verify_conjugacy(b: &MatFn, c: &Cocycle, phi: &TorusFn) -> f64 {
    let band = b.bandwidth().max(c.a.bandwidth()).max(phi.bandwidth());
    let m = 4 * grid_size_at_least(2 * band + 2).max(64);
    (0..m)
        .map(|j| {
            let x = j as f64 / m as f64;
            let bx = b.eval(x);
            let inv = bx.inverse().unwrap_or(Mat2::new(f64::NAN, 0.0, 0.0, f64::NAN));
            let r = b.eval(x + c.alpha) * c.a.eval(x) * inv - Mat2::rotation(phi.evaluate(x));
            r.frobenius()
        })
        .fold(0.0, |a: f64, v| if v.is_nan() { f64::INFINITY } else { a.max(v) })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ClosenessCase {
    /// Some `q_k` with `q_k² < q_n < q_k⁴`.
    Window,
    /// `q_{n+1} > q_n²`.
    Jump,
    Both,
    Neither,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BirkhoffCloseness {
    pub n: usize,
    pub q: String,
    pub value: f64,
    pub case: ClosenessCase,
}

/// `|S_{q_n}φ − q_n φ̂(0)|₀`, with the growth case `q_n` falls in.
pub fn birkhoff_closeness(phi: &TorusFn, alpha: f64, table: &ConvergentTable, n: usize) -> BirkhoffCloseness {
    let q = table.q(n).clone();
    let centered = phi.add_constant(-phi.mean());
    let value = if centered.bandwidth() == 0 { 0.0 } else { centered.birkhoff_sum(alpha, &q).0.sup_norm() };
    let window = (0..n).any(|k| {
        let sq = table.q(k) * table.q(k);
        sq < q && q < &sq * &sq
    });
    let jump = n + 1 < table.count() && table.q(n + 1) > &(&q * &q);
    let case = match (window, jump) {
        (true, true) => ClosenessCase::Both,
        (true, false) => ClosenessCase::Window,
        (false, true) => ClosenessCase::Jump,
        (false, false) => ClosenessCase::Neither,
    };
    BirkhoffCloseness { n, q: q.to_string(), value, case }
}

fn state_ledger(f: &MatFn, h: usize, cfg: &SchemeConfig) -> NormLedger {
    f.ledger(format!("F_{h}"), &cfg.norm_orders)
}

/// Pointwise `‖B(x+α)A₀(x)B(x)⁻¹ − R_φ(x) − F(x)‖` on a grid.
fn invariant_error(a0: &Cocycle, b: &MatFn, phi: &TorusFn, f: &MatFn) -> f64 {
    let m = 128;
    (0..m)
        .map(|j| {
            let x = j as f64 / m as f64;
            let direct = b.eval(x + a0.alpha) * a0.a.eval(x) * b.eval(x).adjugate();
            (direct - Mat2::rotation(phi.evaluate(x)) - f.eval(x)).frobenius()
        })
        .fold(0.0, f64::max)
}

/// One step at `h`: iterate to `q = q_{n_h}`, run the cheap trick, return
/// to frequency `α`. `a0` is the normalised input used for the invariant.
pub fn reduce_step(state: &SchemeState, a0: &Cocycle, sub: &Subsequence, cfg: &SchemeConfig) -> Result<StepOutput> {
    let h = state.h;
    let alpha = a0.alpha;
    let (n, q) = (sub.indices[h], &sub.q_values[h]);
    let rot = rotation_mat_capped(&state.phi, cfg.mode_cap)?;
    let a_h = Cocycle::new_unchecked(alpha, rot.add(&state.f));
    // iterated pair at q
    let an = a_h.iterate(q)?;
    let (phi_bar, _) = state.phi.birkhoff_sum(alpha, q);
    let xi = an.sub(&rotation_mat_capped(&phi_bar, cfg.mode_cap)?);
    let ct = cheap_trick(alpha, q, n, &phi_bar, &xi, &cfg.cheap_trick_opts(q))?;
    // go back to α
    let b_h = ct.b.clone();
    let binv = b_h.adjugate();
    let a_tilde = b_h.translate(alpha).mul(&a_h.a).mul(&binv);
    let dec = Cocycle::new_unchecked(alpha, a_tilde.clone()).decompose()?;
    if dec.degree != 0 {
        return Err(Error::NonzeroDegree { degree: dec.degree });
    }
    let (f_next, chopped) = dec.f.chop(cfg.chop_tol);
    let phi_next = dec.phi.trimmed(cfg.chop_tol);
    let b_cum = b_h.mul(&state.b_cum).chop(cfg.chop_tol).0;
    let inv_err = invariant_error(a0, &b_cum, &phi_next, &f_next);
    if !(inv_err <= cfg.reconstruction_tol) {
        return Err(Error::Precondition {
            what: "state invariant B(x+a) A0 B^-1 = R_phi + F".into(),
            measured: inv_err,
            bound: cfg.reconstruction_tol,
        });
    }
    let diagnostics = if cfg.go_back_diagnostics {
        Some(go_back_diagnostics(h, alpha, q, &a_h.a, &an, &a_tilde, &phi_next, &ct))
    } else {
        None
    };
    let ledger = state_ledger(&f_next, h + 1, cfg);
    Ok(StepOutput {
        state: SchemeState { h: h + 1, phi: phi_next, f: f_next, b_cum, ledger, resonances: state.resonances.clone() },
        passes: ct.passes,
        route_check_max: ct.route_check_max,
        invariant_error: inv_err,
        chopped,
        diagnostics,
    })
}

#[allow(clippy::too_many_arguments)]
fn go_back_diagnostics(
    h: usize,
    alpha: f64,
    q: &BigUint,
    a_h: &MatFn,
    an: &MatFn,
    a_tilde: &MatFn,
    phi_next: &TorusFn,
    ct: &crate::conjugation::CheapTrickResult,
) -> GoBackDiagnostics {
    let l = a_tilde.q_project();
    let at_q = a_tilde.translate_mult(alpha, q);
    let l1 = at_q.sub(a_tilde).q_project();
    let id = Mat2::IDENTITY;
    let bbar = ct.last_d.add_const(id);
    let btil = ct.prior_d.add_const(id);
    let b_h = ct.b.clone();
    let binv = b_h.adjugate();
    let rot = rotation_mat_capped(&ct.phi, DEFAULT_MODE_CAP).unwrap_or_else(|_| MatFn::identity());
    let t = rot.add(&ct.f);
    let beta = mul_mod1(q, alpha);
    let a_hq = a_h.translate(beta);
    let binv_q = binv.translate(beta);
    let j1 = bbar
        .translate(alpha)
        .sub(&bbar.translate(alpha + beta))
        .mul(&btil.translate(beta + alpha))
        .mul(&a_hq)
        .mul(&binv_q)
        .mul(&t);
    let j2 = at_q.sub(a_tilde).mul(&t);
    let j3 = a_tilde.mul(&bbar.translate(beta).sub(&bbar)).mul(&btil.translate(beta)).mul(an).mul(&binv);
    let m = grid_size_at_least(4 * (j1.bandwidth().max(j3.bandwidth()) + 1)).min(1 << 12);
    let j_identity_residual = (0..m)
        .map(|k| {
            let x = k as f64 / m as f64;
            let at = a_tilde.eval(x);
            let lhs = Mat2::rotation(ct.phi.evaluate(x + alpha)) * at - at * Mat2::rotation(ct.phi.evaluate(x));
            (j1.eval(x) + j2.eval(x) + j3.eval(x) - lhs).frobenius()
        })
        .fold(0.0, f64::max);
    let go_back_residual = (0..m)
        .map(|k| {
            let x = k as f64 / m as f64;
            let c = a_tilde.eval(x) - l.eval(x);
            (Mat2::rotation(phi_next.evaluate(x)).scale(c.det().sqrt()) - c).frobenius()
        })
        .fold(0.0, f64::max);
    GoBackDiagnostics { h, l, l1, j1, j2, j3, j_identity_residual, go_back_residual }
}

fn empty_report(cfg: &SchemeConfig) -> SchemeReport {
    SchemeReport {
        outcome: SchemeOutcome::NumericalFailure,
        final_defect: f64::INFINITY,
        verified_defect: f64::INFINITY,
        target_norm: cfg.target_norm,
        steps_used: 0,
        trace: Vec::new(),
        b: None,
        phi: None,
        normalization: Mat2::IDENTITY,
        b_scheme_deviation: 0.0,
        rho: None,
        rho_recheck: None,
        invariant_errors: Vec::new(),
        diagnostics: Vec::new(),
        error: None,
    }
}

/// Runs the loop with the frequency's own exact expansion.
pub fn rotations_reduce_with(c: &Cocycle, freq: &Frequency, cfg: &SchemeConfig) -> SchemeReport {
    let mut report = empty_report(cfg);
    let fail = |mut r: SchemeReport, e: Error| {
        r.outcome = SchemeOutcome::from_error(&e);
        r.error = Some(e.to_string());
        r
    };
    if let Err(e) = cfg.validate() {
        return fail(report, e);
    }
    let sub = match expand(freq, cfg.max_terms, None).and_then(|t| select_subsequence(&t)) {
        Ok(s) => s,
        Err(e) => return fail(report, e),
    };
    let cmat = normalizing_conjugacy(c.a.mean());
    report.normalization = cmat;
    let a0 = Cocycle::new_unchecked(c.alpha, c.a.left_const(cmat).right_const(cmat.adjugate()));
    let dec = match a0.decompose() {
        Ok(d) if d.degree == 0 => d,
        Ok(d) => return fail(report, Error::NonzeroDegree { degree: d.degree }),
        Err(e) => return fail(report, e),
    };
    let mut state = SchemeState {
        h: 0,
        ledger: state_ledger(&dec.f, 0, cfg),
        phi: dec.phi,
        f: dec.f,
        b_cum: MatFn::identity(),
        resonances: Vec::new(),
    };
    let mut rho: Option<RotationNumberEstimate> = None;
    let hi = cfg.high_order();
    loop {
        let h = state.h;
        let norm1 = state.ledger.get(1).unwrap_or(f64::INFINITY);
        let mut rec = StepRecord {
            h,
            n_h: sub.indices.get(h).copied(),
            q_nh: sub.q_values.get(h).map(|q| q.to_string()),
            resonance_value: None,
            norm0: state.ledger.get(0).unwrap_or_else(|| state.f.sup_norm()),
            norm1,
            norm_high: state.ledger.get(hi).unwrap_or(norm1),
            bandwidth: state.phi.bandwidth().max(state.f.bandwidth()),
            outcome_so_far: "Running".into(),
            passes: None,
            message: None,
        };
        report.final_defect = norm1;
        let stop = if norm1 <= cfg.target_norm {
            Some(SchemeOutcome::Converged)
        } else if h >= cfg.max_steps || h >= sub.len() {
            Some(SchemeOutcome::BudgetExhausted)
        } else {
            None
        };
        if let Some(o) = stop {
            rec.outcome_so_far = o.as_str().into();
            report.trace.push(rec);
            report.outcome = o;
            break;
        }
        if rho.is_none() {
            match c.rotation_number(&cfg.rotation) {
                Ok(r) => rho = Some(r),
                Err(e) => {
                    report.outcome = SchemeOutcome::from_error(&e);
                    rec.outcome_so_far = report.outcome.as_str().into();
                    rec.message = Some(e.to_string());
                    report.error = Some(e.to_string());
                    report.trace.push(rec);
                    break;
                }
            }
            report.rho = rho.clone();
        }
        let rho_v = rho.as_ref().unwrap().rho;
        let res = check_resonance(rho_v, h, sub.indices[h], &sub.q_values[h], cfg.epsilon);
        rec.resonance_value = Some(res.value);
        let passed = res.passed;
        state.resonances.push(res);
        if !passed {
            rec.outcome_so_far = SchemeOutcome::ResonanceBlocked.as_str().into();
            report.trace.push(rec);
            report.outcome = SchemeOutcome::ResonanceBlocked;
            break;
        }
        let out = match reduce_step(&state, &a0, &sub, cfg) {
            Ok(o) => o,
            Err(e) => {
                let e = Error::InPass { pass: h, source: Box::new(e) };
                report.outcome = SchemeOutcome::from_error(&e);
                rec.outcome_so_far = report.outcome.as_str().into();
                rec.message = Some(e.root().to_string());
                report.error = Some(format!("step {h}: {}", e.root()));
                report.trace.push(rec);
                break;
            }
        };
        rec.passes = Some(out.passes);
        report.trace.push(rec);
        report.steps_used += 1;
        report.invariant_errors.push(out.invariant_error);
        if let Some(d) = out.diagnostics {
            report.diagnostics.push(d);
        }
        state = out.state;
        if h == 0 && state.ledger.get(1).unwrap_or(0.0) > cfg.target_norm {
            let r0 = rho.as_ref().unwrap();
            let recheck = rotation_mat_capped(&state.phi, cfg.mode_cap)
                .and_then(|r| Cocycle::new_unchecked(c.alpha, r.add(&state.f)).rotation_number(&cfg.rotation));
            match recheck {
                Ok(r1) => {
                    report.rho_recheck = Some(r1.rho);
                    let diff = (r1.rho - r0.rho) - (r1.rho - r0.rho).round();
                    let tol = 10.0 * (r0.error_bound + r1.error_bound);
                    if diff.abs() > tol {
                        report.outcome = SchemeOutcome::NumericalFailure;
                        report.error = Some(format!("rotation number changed by {diff:e} under conjugation"));
                        break;
                    }
                }
                Err(e) => {
                    report.outcome = SchemeOutcome::from_error(&e);
                    report.error = Some(e.to_string());
                    break;
                }
            }
        }
    }
    let b = state.b_cum.right_const(cmat);
    report.b_scheme_deviation = state.b_cum.add_const(Mat2::IDENTITY.scale(-1.0)).sup_norm();
    report.verified_defect = verify_conjugacy(&b, c, &state.phi);
    if report.outcome == SchemeOutcome::Converged {
        report.b = Some(b);
        report.phi = Some(state.phi);
    }
    report
}

/// Runs the loop for `c`, expanding `c.alpha` from its binary value.
pub fn rotations_reduce(c: &Cocycle, cfg: &SchemeConfig) -> SchemeReport {
    match Frequency::from_f64(c.alpha) {
        Ok(freq) => rotations_reduce_with(c, &freq, cfg),
        Err(e) => {
            let mut r = empty_report(cfg);
            r.outcome = SchemeOutcome::from_error(&e);
            r.error = Some(e.to_string());
            r
        }
    }
}

/// `q_{n_h}` as a float, for logging.
pub fn q_as_f64(q: &BigUint) -> f64 {
    q.to_f64().unwrap_or(f64::INFINITY)
}
