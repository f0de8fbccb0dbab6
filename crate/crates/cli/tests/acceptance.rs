//! Acceptance suite: one PASS/FAIL line per criterion, non-zero exit on any failure.

use std::f64::consts::TAU;
use std::time::{Duration, Instant};

use cocycle_reduce::{cmd_sweep, EnergyGrid, PotentialSpec, RunConfig};
use cocycle_reduce_core::arithmetic::{dist_to_integer, expand, mul_mod1, select_subsequence};
use cocycle_reduce_core::cocycle::{q_project, IterateMode, RotationOpts};
use cocycle_reduce_core::conjugation::{cheap_trick, elliptic_reduce, CheapTrickOpts, EllipticOpts};
use cocycle_reduce_core::scheme::rotations_reduce_with;
use cocycle_reduce_core::torusfun::{rotation_mat, DEFAULT_MODE_CAP};
use cocycle_reduce_core::{Cocycle, Frequency, Mat2, MatFn, SchemeConfig, SchemeOutcome, TorusFn};
use num_bigint::{BigInt, BigUint};
use num_integer::Integer;
use num_traits::{One, ToPrimitive, Zero};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const GOLDEN: f64 = 0.6180339887498949;
const PI_DIGITS: &str =
    "1415926535897932384626433832795028841971693993751058209749445923078164062862089986280348253421170679";
/// Almost Mathieu `λ = 10⁻³` at `ρ = 0.23`, found by bisection on ρ.
const DESK_E: f64 = 0.25066592506454166;
/// Elliptic quadratic-contraction constant; measured 2.83 on these instances.
const PINNED_K: f64 = 12.0;

type Check = Result<String, String>;
type Criterion = (&'static str, fn() -> Check, Duration);

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn random_fn(rng: &mut ChaCha8Rng, modes: usize, amp: f64) -> TorusFn {
    (0..=modes).fold(TorusFn::zero(), |acc, l| {
        let damp = amp / (1.0 + l as f64).powi(2);
        acc.add(&TorusFn::mode(l, damp * rng.gen_range(-1.0..1.0), damp * rng.gen_range(-1.0..1.0)))
    })
}

fn random_trig(rng: &mut ChaCha8Rng) -> (Vec<f64>, Vec<f64>) {
    let n = rng.gen_range(1..12);
    ((0..n).map(|_| rng.gen_range(-1.0..1.0)).collect(), (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect())
}

fn direct(a: &[f64], b: &[f64], x: f64) -> f64 {
    a.iter()
        .zip(b)
        .enumerate()
        .map(
            |(l, (al, bl))| {
                if l == 0 {
                    *al
                } else {
                    al * (TAU * l as f64 * x).cos() + bl * (TAU * l as f64 * x).sin()
                }
            },
        )
        .sum()
}

/// `x + hα mod 1` with the product split exactly.
fn orbit_point(x: f64, h: u64) -> f64 {
    let hf = h as f64;
    let p = hf * GOLDEN;
    let e = hf.mul_add(GOLDEN, -p);
    let t = (p - p.floor()) + e + x;
    t - t.floor()
}

fn build(a: &[f64], b: &[f64]) -> TorusFn {
    a.iter().zip(b).enumerate().fold(TorusFn::zero(), |acc, (l, (al, bl))| acc.add(&TorusFn::mode(l, *al, *bl)))
}

fn exp_sym(g: Mat2) -> Mat2 {
    let s = g.0[0][0].hypot(g.0[0][1]);
    let k = if s == 0.0 { 1.0 } else { s.sinh() / s };
    Mat2::new(s.cosh(), 0.0, 0.0, s.cosh()) + g.scale(k)
}

/// `e^{G} R_φ − R_φ` scaled to `‖·‖₀ ≈ size`.
fn sl2_defect(rng: &mut ChaCha8Rng, phi: &TorusFn, size: f64) -> MatFn {
    let g1 = random_fn(rng, 3, 1.0);
    let g2 = random_fn(rng, 3, 1.0);
    let r = rotation_mat(phi).unwrap();
    let make = |eps: f64| {
        let g = MatFn::new([[g1.scale(eps), g2.scale(eps)], [g2.scale(eps), g1.scale(-eps)]]);
        MatFn::map_pointwise(&[&g, &r], DEFAULT_MODE_CAP, 1.0, |m| exp_sym(m[0]) * m[1] - m[1]).unwrap()
    };
    let first = make(size);
    make(size * size / first.sup_norm())
}

fn random_angle(rng: &mut ChaCha8Rng, min_ellipticity: f64) -> TorusFn {
    loop {
        let phi = random_fn(rng, 2, 0.01).add_constant(rng.gen_range(0.0..1.0));
        if phi.samples(512).iter().all(|p| 2.0 * (TAU * p).sin().abs() >= min_ellipticity) {
            return phi;
        }
    }
}

fn euclid(mut num: BigInt, mut den: BigInt, terms: usize) -> Vec<BigInt> {
    let mut out = Vec::new();
    while out.len() < terms && !num.is_zero() {
        let (a, r) = den.div_mod_floor(&num);
        out.push(a);
        den = num;
        num = r;
    }
    out
}

fn criterion_1() -> Check {
    for freq in [Frequency::golden(), Frequency::pi_minus_3()] {
        let t = expand(&freq, 22, None).map_err(|e| e.to_string())?;
        for n in 0..20 {
            ensure(t.check_best_approximation(n, 100_000, 200), || format!("{} best n={n}", freq.label()))?;
            ensure(t.check_sandwich(n), || format!("{} sandwich n={n}", freq.label()))?;
        }
    }
    // independent Euclid on the 100-digit fraction
    let den = num_traits::pow(BigInt::from(10), PI_DIGITS.len());
    let a = euclid(PI_DIGITS.parse().unwrap(), den, 20);
    let t = expand(&Frequency::pi_minus_3(), 21, None).map_err(|e| e.to_string())?;
    let (mut q, mut prev) = (BigInt::one(), BigInt::zero());
    for (k, ak) in a.iter().enumerate() {
        let next = ak * &q + &prev;
        prev = std::mem::replace(&mut q, next);
        ensure(BigInt::from(t.q(k + 1).clone()) == q, || format!("pi-3 q_{}", k + 1))?;
    }
    let sub = select_subsequence(&expand(&Frequency::golden(), 60, None).unwrap()).unwrap();
    ensure(sub.indices[..4] == [0, 1, 4, 10], || format!("golden subsequence {:?}", sub.indices))?;
    Ok(format!("golden subsequence {:?}", &sub.indices[..4]))
}

fn criterion_2() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut worst_b = 0.0f64;
    for _ in 0..50 {
        let (a, b) = random_trig(&mut rng);
        let n = rng.gen_range(1u64..=200);
        let f = build(&a, &b);
        let (s, _) = f.birkhoff_sum(GOLDEN, &BigUint::from(n));
        for j in 0..256 {
            let x = j as f64 / 256.0;
            let d: f64 = (0..n).map(|h| direct(&a, &b, orbit_point(x, h))).sum();
            worst_b = worst_b.max((s.evaluate(x) - d).abs());
        }
        let cut = rng.gen_range(-1.0..12.0);
        let back = f.truncate(cut).add(&f.rest(cut));
        ensure(back.coeffs()[..=f.bandwidth()] == f.coeffs()[..], || format!("truncate+rest at {cut}"))?;
    }
    ensure(worst_b <= 1e-11, || format!("birkhoff {worst_b:e}"))?;
    let mut worst_d = 0.0f64;
    for _ in 0..20 {
        let (a, b) = random_trig(&mut rng);
        let f = build(&a, &b);
        let d = f.derivative(1);
        let scale = d.sup_norm().max(1e-300);
        // 8th-order central stencil
        let (h, w) = (1e-3, [4.0 / 5.0, -1.0 / 5.0, 4.0 / 105.0, -1.0 / 280.0]);
        for j in 0..64 {
            let x = (j as f64 + 0.3) / 64.0;
            let fd: f64 = (1..=4)
                .map(|k| w[k - 1] * (direct(&a, &b, x + k as f64 * h) - direct(&a, &b, x - k as f64 * h)))
                .sum::<f64>()
                / h;
            worst_d = worst_d.max((d.evaluate(x) - fd).abs() / scale);
        }
    }
    ensure(worst_d <= 1e-6, || format!("derivative rel {worst_d:e}"))?;
    Ok(format!("birkhoff {worst_b:.1e}, derivative rel {worst_d:.1e}"))
}

fn criterion_3() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let (mut k_max, mut defect, mut linear_residual, mut iters) = (0.0f64, 0.0f64, 0.0f64, 0usize);
    for i in 0..100 {
        let phi = random_angle(&mut rng, 0.1);
        let f = sl2_defect(&mut rng, &phi, 1e-5);
        let r = elliptic_reduce(&phi, &f, 0, &EllipticOpts::default()).map_err(|e| format!("instance {i}: {e}"))?;
        defect = defect.max(r.trace.defect);
        linear_residual = linear_residual.max(r.trace.linear_residual_max);
        iters = iters.max(r.trace.iterations);
        for w in r.trace.g_norms.windows(2) {
            if w[1] > 1e-13 {
                k_max = k_max.max(w[1] / (w[0] * w[0]));
            }
        }
    }
    ensure(defect <= 1e-12 && linear_residual <= 1e-12 && iters <= 8, || {
        format!("defect {defect:e} linear residual {linear_residual:e} iters {iters}")
    })?;
    ensure(k_max <= PINNED_K, || format!("K {k_max:.3} > {PINNED_K}"))?;
    Ok(format!("defect {defect:.1e}, linear residual {linear_residual:.1e}, iters ≤ {iters}, K = {k_max:.3}"))
}

fn criterion_4() -> Check {
    let freq = Frequency::liouville(4).unwrap();
    let table = expand(&freq, 20, None).unwrap();
    let n = (0..table.count()).find(|&k| table.q(k) == &BigUint::from(100u32)).ok_or("no q = 100")?;
    let q = table.q(n).clone();
    let q_next = table.q(n + 1).to_f64().unwrap();
    ensure(q_next > 50.0 * 100.0, || "q_{n+1} is not a jump".into())?;
    let bound = 1e3 / q_next;
    ensure(dist_to_integer(mul_mod1(&q, freq.value())) < 1.0 / q_next, || "‖qα‖".into())?;
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut worst = 0.0f64;
    for i in 0..10 {
        let phi = random_angle(&mut rng, 0.2);
        let f = sl2_defect(&mut rng, &phi, 1e-6);
        let r = cheap_trick(freq.value(), &q, n, &phi, &f, &CheapTrickOpts::default())
            .map_err(|e| format!("instance {i}: {e}"))?;
        let mut prev = f.sup_norm();
        for p in &r.per_pass {
            if prev > 1e-12 {
                worst = worst.max(p.norm0 / prev);
            }
            prev = p.norm0;
        }
    }
    ensure(worst <= bound, || format!("factor {worst:e} > {bound:e}"))?;
    Ok(format!("worst factor {worst:.2e} ≤ {bound:.2e}"))
}

fn sturm_count(lambda: f64, x: f64, e: f64, sites: usize) -> usize {
    let (mut neg, mut d) = (0, 0.0f64);
    for n in 0..sites {
        let v = 2.0 * lambda * (TAU * (x + n as f64 * GOLDEN)).cos();
        d = v - e - if n == 0 { 0.0 } else { 1.0 / d };
        if d == 0.0 {
            d = 1e-300;
        }
        neg += usize::from(d < 0.0);
    }
    neg
}

fn criterion_5() -> Check {
    let mut worst = 0.0f64;
    for k in 0..=20 {
        let e = -1.95 + 3.9 * k as f64 / 20.0;
        let r = Cocycle::almost_mathieu(0.0, e, GOLDEN)
            .rotation_number(&RotationOpts::default())
            .map_err(|e| e.to_string())?;
        worst = worst.max((r.rho - (e / 2.0).acos() / TAU).abs());
    }
    ensure(worst <= 1e-8, || format!("free case {worst:e}"))?;
    let r = Cocycle::almost_mathieu(0.2, 0.0, GOLDEN)
        .rotation_number(&RotationOpts::default())
        .map_err(|e| e.to_string())?;
    let ids = (0..8).map(|k| sturm_count(0.2, k as f64 / 8.0, 0.0, 2048) as f64 / 2048.0).sum::<f64>() / 8.0;
    let diff = (1.0 - 2.0 * r.rho - ids).abs();
    ensure(diff <= 2e-3, || format!("IDS diff {diff:e}"))?;
    Ok(format!("free {worst:.1e}, IDS diff {diff:.1e}"))
}

fn criterion_6() -> Check {
    let c = Cocycle::almost_mathieu(1e-3, DESK_E, GOLDEN);
    let r = rotations_reduce_with(&c, &Frequency::golden(), &SchemeConfig::default());
    ensure(r.outcome == SchemeOutcome::Converged, || format!("{:?}: {:?}", r.outcome, r.error))?;
    let (b, phi) = (r.b.as_ref().unwrap(), r.phi.as_ref().unwrap());
    // grid evaluation of B(x+α)A(x)B(x)⁻¹ − R_φ(x)
    let defect = (0..1024)
        .map(|j| {
            let x = (j as f64 + 0.5) / 1024.0;
            let lhs = b.eval(x + GOLDEN) * c.a.eval(x) * b.eval(x).inverse().unwrap();
            (lhs - Mat2::rotation(phi.evaluate(x))).frobenius()
        })
        .fold(0.0, f64::max);
    ensure(defect <= 1e-8 && r.verified_defect <= 1e-8, || format!("defect {defect:e} / {:e}", r.verified_defect))?;
    ensure(r.b_scheme_deviation <= 0.01, || format!("|B - Id| {:e}", r.b_scheme_deviation))?;
    ensure(r.steps_used <= 12, || format!("{} steps", r.steps_used))?;
    Ok(format!("E = {DESK_E}, {} steps, defect {defect:.1e}, |B - Id| {:.1e}", r.steps_used, r.b_scheme_deviation))
}

fn criterion_7() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let mut worst = 0.0f64;
    let grid = 32;
    for _ in 0..1000 {
        let e: Vec<TorusFn> = (0..8).map(|_| random_fn(&mut rng, 4, 1.0)).collect();
        let m = MatFn::new([[e[0].clone(), e[1].clone()], [e[2].clone(), e[3].clone()]]);
        let n = MatFn::new([[e[4].clone(), e[5].clone()], [e[6].clone(), e[7].clone()]]);
        let s = rng.gen_range(-3.0..3.0);
        let r = Mat2::rotation(rng.gen_range(0.0..1.0));
        let qm = q_project(&m);
        let lin = q_project(&m.add(&n.scale(s))).grid_distance(&qm.add(&q_project(&n).scale(s)), grid);
        let idem = q_project(&qm).grid_distance(&qm, grid);
        let equiv = q_project(&m.left_const(r)).grid_distance(&qm.left_const(r), grid);
        let conf = m
            .sub(&qm)
            .samples(grid)
            .iter()
            .map(|c| (c.0[0][0] - c.0[1][1]).abs().max((c.0[0][1] + c.0[1][0]).abs()))
            .fold(0.0, f64::max);
        worst = worst.max(lin).max(idem).max(equiv).max(conf);
    }
    ensure(worst <= 1e-13, || format!("{worst:e}"))?;
    Ok(format!("worst {worst:.1e} over 1000"))
}

fn criterion_8() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut worst = 0.0f64;
    for _ in 0..3 {
        let u = random_fn(&mut rng, 3, 0.01).add_constant(0.0);
        let w = random_fn(&mut rng, 3, 0.01).add_constant(rng.gen_range(0.05..0.45));
        let shear = MatFn::new([[TorusFn::constant(1.0), u], [TorusFn::zero(), TorusFn::constant(1.0)]]);
        let c = Cocycle::new(GOLDEN, shear.mul(&rotation_mat(&w).unwrap())).map_err(|e| e.to_string())?;
        for n in [2u64, 17, 100, 377, 1000] {
            let nb = BigUint::from(n);
            let s = c.iterate_with(&nb, IterateMode::Splitting).map_err(|e| e.to_string())?;
            let v = c.iterate_with(&nb, IterateMode::Naive).map_err(|e| e.to_string())?;
            worst = worst.max(s.grid_distance(&v, 4 * (s.bandwidth().max(v.bandwidth()) + 1)));
        }
    }
    ensure(worst <= 1e-10, || format!("{worst:e}"))?;
    Ok(format!("worst {worst:.1e}"))
}

fn criterion_9() -> Check {
    let base = RunConfig {
        potential: PotentialSpec::AlmostMathieu { lambda: 0.0 },
        energies: Some(EnergyGrid { start: -2.5, end: 2.5, count: 51 }),
        ..Default::default()
    };
    let run = |w: usize| cmd_sweep(&RunConfig { threads: Some(w), ..base.clone() }).map_err(|e| e.to_string());
    let one = run(1)?;
    let eight = run(8)?;
    ensure(one.csv == eight.csv, || "CSV differs between widths 1 and 8".into())?;
    for r in &one.rows {
        if r.e.abs() < 1.9 {
            ensure(r.scheme_outcome == SchemeOutcome::Converged && r.steps_used == 0, || {
                format!("E = {}: {:?} after {} steps", r.e, r.scheme_outcome, r.steps_used)
            })?;
        }
        if r.e.abs() > 2.1 {
            ensure(r.class == "nuh-candidate", || format!("E = {}: {}", r.e, r.class))?;
        }
    }
    Ok(format!("{} rows, identical CSV", one.rows.len()))
}

fn main() {
    let criteria: [Criterion; 9] = [
        ("1 continued fractions", criterion_1, Duration::from_secs(1)),
        ("2 spectral calculus", criterion_2, Duration::from_secs(5)),
        ("3 elliptic conjugation", criterion_3, Duration::from_secs(30)),
        ("4 cheap-trick contraction", criterion_4, Duration::from_secs(60)),
        ("5 rotation number", criterion_5, Duration::from_secs(60)),
        ("6 end-to-end reduction", criterion_6, Duration::from_secs(120)),
        ("7 conformal algebra", criterion_7, Duration::from_secs(5)),
        ("8 iteration consistency", criterion_8, Duration::from_secs(30)),
        ("9 sweep determinism", criterion_9, Duration::from_secs(120)),
    ];
    let mut failed = 0;
    for (name, f, limit) in criteria {
        let start = Instant::now();
        let res = f();
        let took = start.elapsed();
        let res = res.and_then(|msg| {
            if took <= limit {
                Ok(msg)
            } else {
                Err(format!("{msg}; runtime {took:.2?} over {limit:?}"))
            }
        });
        match res {
            Ok(msg) => println!("PASS criterion {name} ({took:.2?}): {msg}"),
            Err(msg) => {
                failed += 1;
                println!("FAIL criterion {name} ({took:.2?}): {msg}");
            }
        }
    }
    if failed > 0 {
        println!("{failed} criteria failed");
        std::process::exit(1);
    }
}
