//! Continued fractions of the base frequency.
//!
//! The frequency is carried as an exact rational bracket `[lo, hi]` around
//! its floating value, so that partial quotients are produced exactly and
//! the expansion stops as soon as the bracket straddles a rational
//! ([`StopReason::PrecisionExhausted`]). Denominators are big integers.

use num_bigint::{BigInt, BigUint, Sign};
use num_integer::Integer;
use num_traits::{One, Signed, ToPrimitive, Zero};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Distance to the nearest integer, `‖x‖ = inf_p |x - p|`.
pub fn dist_to_integer(x: f64) -> f64 {
    let r = x - x.round();
    r.abs().min(0.5)
}

/// `n·x mod 1` in `[0, 1)` for a big integer `n`, without forming `n·x`.
///
/// `n` is split into 32-bit limbs; `frac(2^{32i} x)` is exact in binary
/// floating point and each limb product is split with an FMA.
pub fn mul_mod1(n: &BigUint, x: f64) -> f64 {
    let mut xi = x - x.floor();
    if xi >= 1.0 {
        xi = 0.0;
    }
    let mut acc = 0.0f64;
    for limb in n.iter_u32_digits() {
        if limb != 0 && xi != 0.0 {
            let d = limb as f64;
            let p = d * xi;
            let e = d.mul_add(xi, -p);
            acc += (p - p.floor()) + e;
            acc -= acc.floor();
        }
        let shifted = xi * 4_294_967_296.0;
        xi = shifted - shifted.floor();
    }
    if acc >= 1.0 {
        acc -= 1.0;
    }
    acc
}

/// Signed variant of [`mul_mod1`].
pub fn mul_mod1_i64(n: i64, x: f64) -> f64 {
    let r = mul_mod1(&BigUint::from(n.unsigned_abs()), x);
    if n < 0 && r != 0.0 {
        1.0 - r
    } else {
        r
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
struct Ratio {
    num: BigInt,
    den: BigInt,
}

impl Ratio {
    fn new(num: BigInt, den: BigInt) -> Self {
        let (num, den) = if den.is_negative() { (-num, -den) } else { (num, den) };
        let g = num.gcd(&den);
        if g.is_zero() || g.is_one() {
            Ratio { num, den }
        } else {
            Ratio { num: num / &g, den: den / &g }
        }
    }

    fn from_f64(x: f64) -> Self {
        // x = m · 2^e exactly
        let bits = x.to_bits();
        let exp = ((bits >> 52) & 0x7ff) as i64;
        let frac = bits & ((1u64 << 52) - 1);
        let (m, e) = if exp == 0 { (frac, -1074) } else { (frac | (1u64 << 52), exp - 1075) };
        let sign = if x < 0.0 { -1 } else { 1 };
        let m = BigInt::from(m) * sign;
        if e >= 0 {
            Ratio::new(m << e as usize, BigInt::one())
        } else {
            Ratio::new(m, BigInt::one() << (-e) as usize)
        }
    }

    fn to_f64(&self) -> f64 {
        // scale so the quotient keeps 64 significant bits
        let nb = self.num.bits() as i64;
        let db = self.den.bits() as i64;
        let shift = 64 - (nb - db);
        let q = if shift >= 0 {
            (&self.num << shift as usize) / &self.den
        } else {
            &self.num / (&self.den << (-shift) as usize)
        };
        q.to_f64().unwrap_or(f64::NAN) * 2f64.powi(-(shift as i32))
    }
}

/// An irrational frequency given by a floating value and an exact bracket.
#[derive(Debug, Clone)]
pub struct Frequency {
    value: f64,
    lo: Ratio,
    hi: Ratio,
    label: String,
}

impl Frequency {
    /// Treats `x` as known to half an ulp.
    pub fn from_f64(x: f64) -> Result<Self> {
        if !(x > 0.0 && x < 1.0) {
            return Err(Error::InvalidInput(format!("alpha must lie in (0,1), got {x}")));
        }
        let below = f64::from_bits(x.to_bits() - 1);
        let above = f64::from_bits(x.to_bits() + 1);
        let mid = |a: f64, b: f64| {
            let ra = Ratio::from_f64(a);
            let rb = Ratio::from_f64(b);
            Ratio::new(&ra.num * &rb.den + &rb.num * &ra.den, &ra.den * &rb.den * 2)
        };
        Ok(Frequency { value: x, lo: mid(below, x), hi: mid(x, above), label: format!("{x}") })
    }

    /// Exact rational from a decimal literal such as `0.1415926535`.
    pub fn from_decimal_str(s: &str) -> Result<Self> {
        let t = s.trim();
        let bad = || Error::InvalidInput(format!("not a decimal in (0,1): {s}"));
        let (int_part, frac_part) = t.split_once('.').unwrap_or((t, ""));
        if !int_part.chars().all(|c| c.is_ascii_digit())
            || !frac_part.chars().all(|c| c.is_ascii_digit())
            || (int_part.is_empty() && frac_part.is_empty())
        {
            return Err(bad());
        }
        let digits = format!("{int_part}{frac_part}");
        let num: BigInt = digits.parse().map_err(|_| bad())?;
        let den = num_traits::pow(BigInt::from(10), frac_part.len());
        let r = Ratio::new(num, den);
        if r.num <= BigInt::zero() || r.num >= r.den {
            return Err(bad());
        }
        Ok(Frequency { value: r.to_f64(), lo: r.clone(), hi: r, label: t.to_string() })
    }

    /// `(√5 − 1)/2`, bracketed by consecutive Fibonacci ratios.
    pub fn golden() -> Self {
        let (mut a, mut b) = (BigInt::one(), BigInt::one());
        for _ in 0..400 {
            let c = &a + &b;
            a = b;
            b = c;
        }
        let c = &a + &b;
        // a/b and b/c bracket the golden mean from opposite sides
        let r1 = Ratio::new(a.clone(), b.clone());
        let r2 = Ratio::new(b, c);
        let (lo, hi) = if r1.num.clone() * &r2.den < r2.num.clone() * &r1.den { (r1, r2) } else { (r2, r1) };
        Frequency { value: (5f64.sqrt() - 1.0) / 2.0, lo, hi, label: "golden".into() }
    }

    /// `π − 3` to 100 decimals.
    pub fn pi_minus_3() -> Self {
        const DIGITS: &str =
            "1415926535897932384626433832795028841971693993751058209749445923078164062862089986280348253421170679";
        let den = num_traits::pow(BigInt::from(10), DIGITS.len());
        let d: BigInt = DIGITS.parse().expect("digits");
        Frequency {
            value: std::f64::consts::PI - 3.0,
            lo: Ratio::new(&d - 1, den.clone()),
            hi: Ratio::new(d + 1, den),
            label: "pi-3".into(),
        }
    }

    /// Truncated Liouville number `Σ_{j=1}^{k} 10^{-j!}` (an exact rational).
    pub fn liouville(k: u32) -> Result<Self> {
        if !(1..=6).contains(&k) {
            return Err(Error::InvalidInput(format!("liouville(k) needs 1 <= k <= 6, got {k}")));
        }
        let top: usize = (1..=k as usize).product();
        let den = num_traits::pow(BigInt::from(10), top);
        let mut num = BigInt::zero();
        let mut fact = 1usize;
        for j in 1..=k as usize {
            fact *= j;
            num += num_traits::pow(BigInt::from(10), top - fact);
        }
        let r = Ratio::new(num, den);
        Ok(Frequency { value: r.to_f64(), lo: r.clone(), hi: r, label: format!("liouville({k})") })
    }

    pub fn value(&self) -> f64 {
        self.value
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn is_exact_rational(&self) -> bool {
        self.lo == self.hi
    }

    /// An exact rational inside the bracket, used for exact checks.
    fn reference(&self) -> (BigInt, BigInt) {
        (self.lo.num.clone(), self.lo.den.clone())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum StopReason {
    MaxTerms,
    QCap,
    PrecisionExhausted,
    ExactRational,
}

/// Continued-fraction expansion with exact convergent denominators.
#[derive(Debug, Clone)]
pub struct ConvergentTable {
    pub alpha: f64,
    /// `a_1, a_2, …` (so `partial_quotients[n-1] = a_n`).
    pub partial_quotients: Vec<BigUint>,
    /// `q_0 = 1, q_1, …`
    pub denominators: Vec<BigUint>,
    /// `p_0 = 0, p_1, …`
    pub numerators: Vec<BigUint>,
    pub stop: StopReason,
    reference: (BigInt, BigInt),
}

impl ConvergentTable {
    pub fn count(&self) -> usize {
        self.denominators.len()
    }

    pub fn q(&self, n: usize) -> &BigUint {
        &self.denominators[n]
    }

    pub fn precision_exhausted(&self) -> bool {
        self.stop == StopReason::PrecisionExhausted
    }

    /// Exact `‖kα‖` on the reference rational, as `(num, den)` with
    /// `num/den ∈ [0, 1/2]`.
    fn dist_exact(&self, k: &BigUint) -> (BigInt, BigInt) {
        let (p, q) = &self.reference;
        let r = (BigInt::from(k.clone()) * p).mod_floor(q);
        let other = q - &r;
        (if r < other { r } else { other }, q.clone())
    }

    /// Checks `‖kα‖ ≥ ‖q_{n-1}α‖` for `1 ≤ k < q_n`: exhaustively when
    /// `q_n ≤ exhaustive_limit`, otherwise on `samples` pseudo-random `k`
    /// plus the multiples of `q_{n-1}` and their neighbours.
    pub fn check_best_approximation(&self, n: usize, exhaustive_limit: u64, samples: usize) -> bool {
        if n == 0 || n >= self.count() {
            return true;
        }
        let qn = &self.denominators[n];
        let (target, _) = self.dist_exact(&self.denominators[n - 1]);
        let ok = |k: &BigUint| self.dist_exact(k).0 >= target;
        match qn.to_u64() {
            Some(q) if q <= exhaustive_limit => (1..q).all(|k| ok(&BigUint::from(k))),
            _ => {
                let span = qn - 1u32;
                if span.is_zero() {
                    return true;
                }
                let mut state: u64 = 0x9E37_79B9_7F4A_7C15;
                let mut cands: Vec<BigUint> = Vec::with_capacity(samples + 16);
                for _ in 0..samples {
                    state = state.wrapping_mul(6_364_136_223_846_793_005).wrapping_add(1_442_695_040_888_963_407);
                    let wide = (BigUint::from(state) << 64u32) | BigUint::from(state.rotate_left(17));
                    cands.push(wide % &span + 1u32);
                }
                let prev = &self.denominators[n - 1];
                for j in 1u32..=8 {
                    let m = prev * j;
                    for c in [m.clone(), m.clone() + 1u32, m.clone() + 2u32] {
                        if !c.is_zero() && &c < qn {
                            cands.push(c);
                        }
                    }
                    if m > 1u32.into() && &(m.clone() - 1u32) < qn {
                        cands.push(m - 1u32);
                    }
                }
                cands.iter().all(ok)
            }
        }
    }

    /// Checks `1/(q_{k+1}+q_k) < |q_k α - p_k| < 1/q_{k+1}` exactly
    /// (this is `‖q_k α‖` for `k ≥ 1`).
    pub fn check_sandwich(&self, k: usize) -> bool {
        if k + 1 >= self.count() {
            return true;
        }
        if self.stop == StopReason::ExactRational && k + 2 == self.count() {
            // α = p_{k+1}/q_{k+1}: the upper bound is attained
            return true;
        }
        let qk = BigInt::from(self.denominators[k].clone());
        let qk1 = BigInt::from(self.denominators[k + 1].clone());
        let (p, q) = &self.reference;
        let pk = BigInt::from(self.numerators[k].clone());
        let num = (&qk * p - &pk * q).abs();
        let den = q.clone();
        let lower = &num * (&qk1 + &qk) > den;
        let upper = &num * &qk1 < den;
        lower && upper
    }
}

/// Continued-fraction expansion of `alpha`.
pub fn expand(alpha: &Frequency, max_terms: usize, q_cap: Option<&BigUint>) -> Result<ConvergentTable> {
    if max_terms == 0 {
        return Err(Error::InvalidInput("max_terms must be >= 1".into()));
    }
    let mut ends = [(alpha.lo.num.clone(), alpha.lo.den.clone()), (alpha.hi.num.clone(), alpha.hi.den.clone())];
    for (n, d) in &ends {
        if n.sign() != Sign::Plus || n >= d {
            return Err(Error::InvalidInput("alpha bracket must lie in (0,1)".into()));
        }
    }
    let mut a_list = Vec::new();
    let mut q = vec![BigUint::one()];
    let mut p = vec![BigUint::zero()];
    let (mut q_prev, mut p_prev) = (BigUint::zero(), BigUint::one());
    let stop;
    loop {
        if q.len() >= max_terms {
            stop = StopReason::MaxTerms;
            break;
        }
        let zero = [ends[0].0.is_zero(), ends[1].0.is_zero()];
        if zero[0] && zero[1] {
            stop = StopReason::ExactRational;
            break;
        }
        if zero[0] != zero[1] {
            stop = StopReason::PrecisionExhausted;
            break;
        }
        // invert the residual fraction and take integer parts
        let mut digits = [BigInt::zero(), BigInt::zero()];
        let mut next = ends.clone();
        for (i, (num, den)) in ends.iter().enumerate() {
            let (a, r) = den.div_mod_floor(num);
            digits[i] = a;
            next[i] = (r, num.clone());
        }
        if digits[0] != digits[1] {
            stop = StopReason::PrecisionExhausted;
            break;
        }
        let a = digits[0].to_biguint().expect("positive quotient");
        let qn = &a * q.last().unwrap() + &q_prev;
        if let Some(cap) = q_cap {
            if &qn > cap {
                stop = StopReason::QCap;
                break;
            }
        }
        let pn = &a * p.last().unwrap() + &p_prev;
        q_prev = q.last().unwrap().clone();
        p_prev = p.last().unwrap().clone();
        q.push(qn);
        p.push(pn);
        a_list.push(a);
        ends = next;
    }
    if a_list.len() < 2 && matches!(stop, StopReason::ExactRational | StopReason::PrecisionExhausted) {
        return Err(Error::RationalInput { terms: a_list.len() });
    }
    Ok(ConvergentTable {
        alpha: alpha.value(),
        partial_quotients: a_list,
        denominators: q,
        numerators: p,
        stop,
        reference: alpha.reference(),
    })
}

/// Convenience wrapper treating an `f64` as known to half an ulp.
pub fn expand_f64(alpha: f64, max_terms: usize) -> Result<ConvergentTable> {
    expand(&Frequency::from_f64(alpha)?, max_terms, None)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SubsequenceEnd {
    /// The table ran out before `n_{h+1}` could be decided.
    Exhausted,
    /// The table is an exact rational expansion and every index was decided.
    Complete,
}

/// The convergent subsequence `q_{n_h}` that drives the reduction.
#[derive(Debug, Clone)]
pub struct Subsequence {
    pub indices: Vec<usize>,
    pub q_values: Vec<BigUint>,
    /// `s_h = ∏_{l≤h} q_{n_l}`
    pub s_values: Vec<BigUint>,
    pub end: SubsequenceEnd,
    pub diagnostics: Vec<String>,
}

impl Subsequence {
    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    /// `q_{n_{h+1}} ≤ q_{n_h+1}^4` and `s_h^6 ≤ q_{n_{h+1}}^12` for every
    /// stored `h` with a successor.
    pub fn check_growth_bounds(&self, table: &ConvergentTable) -> bool {
        (0..self.len().saturating_sub(1)).all(|h| {
            let next = &self.q_values[h + 1];
            let base = table.q(self.indices[h] + 1);
            let cap = num_traits::pow(base.clone(), 4);
            next <= &cap && num_traits::pow(self.s_values[h].clone(), 6) <= num_traits::pow(next.clone(), 12)
        })
    }
}

/// Selects `n_0 = 0, n_1, …`: `n_{h+1}` is the smallest `k` with
/// `q_{n_h+1}^2 ≤ q_k < q_{n_h+1}^4`, or else `max{k : q_k ≤ q_{n_h+1}^2}`.
pub fn select_subsequence(table: &ConvergentTable) -> Result<Subsequence> {
    if table.count() < 2 {
        return Err(Error::InvalidInput("need at least 2 convergents".into()));
    }
    let q = &table.denominators;
    let complete = table.stop == StopReason::ExactRational;
    let mut indices = vec![0usize];
    let mut diagnostics = Vec::new();
    let end = loop {
        let nh = *indices.last().unwrap();
        if nh + 1 >= q.len() {
            break if complete { SubsequenceEnd::Complete } else { SubsequenceEnd::Exhausted };
        }
        let base = &q[nh + 1];
        let sq = base * base;
        let fourth = &sq * &sq;
        if let Some(k) = (0..q.len()).find(|&k| q[k] >= sq && q[k] < fourth) {
            indices.push(k);
            continue;
        }
        let last = q.last().unwrap();
        if !(complete || last >= &fourth) {
            break SubsequenceEnd::Exhausted;
        }
        let mut k = (0..q.len()).rev().find(|&k| q[k] <= sq).unwrap_or(0);
        if k <= nh {
            diagnostics.push(format!("h={}: max index {k} does not advance past n_h={nh}", indices.len() - 1));
            k = nh + 1;
        }
        indices.push(k);
    };
    let q_values: Vec<BigUint> = indices.iter().map(|&k| q[k].clone()).collect();
    let mut s_values = Vec::with_capacity(q_values.len());
    let mut s = BigUint::one();
    for qv in &q_values {
        s *= qv;
        s_values.push(s.clone());
    }
    Ok(Subsequence { indices, q_values, s_values, end, diagnostics })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ResonanceReport {
    pub h: usize,
    pub n: usize,
    /// `q_{n_h}` as a decimal string.
    pub q: String,
    pub rho: f64,
    /// `‖2 q_{n_h} ρ‖`
    pub value: f64,
    pub threshold: f64,
    pub passed: bool,
}

/// Threshold `ε / n_h²`, with `ε` itself when `n_h = 0`.
pub fn resonance_threshold(epsilon: f64, n: usize) -> f64 {
    if n == 0 {
        epsilon
    } else {
        epsilon / (n as f64 * n as f64)
    }
}

pub fn check_resonance(rho: f64, h: usize, n: usize, q: &BigUint, epsilon: f64) -> ResonanceReport {
    let value = dist_to_integer(mul_mod1(&(q * 2u32), rho));
    let threshold = resonance_threshold(epsilon, n);
    ResonanceReport { h, n, q: q.to_string(), rho, value, threshold, passed: value >= threshold }
}

/// One report per stored `h`.
pub fn check_resonances(rho: f64, sub: &Subsequence, epsilon: f64) -> Vec<ResonanceReport> {
    sub.indices
        .iter()
        .zip(&sub.q_values)
        .enumerate()
        .map(|(h, (&n, q))| check_resonance(rho, h, n, q, epsilon))
        .collect()
}
