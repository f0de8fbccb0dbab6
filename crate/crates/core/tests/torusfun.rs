use std::f64::consts::TAU;

use cocycle_reduce_core::cocycle::q_project;
use cocycle_reduce_core::torusfun::{rotation_mat, NormLedger};
use cocycle_reduce_core::{Mat2, MatFn, TorusFn};
use num_bigint::BigUint;
use num_complex::Complex64;
use proptest::prelude::*;

/// Direct evaluation of `a_0 + Σ a_l cos 2πlx + b_l sin 2πlx`.
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
fn orbit_point(x: f64, alpha: f64, h: u64) -> f64 {
    let hf = h as f64;
    let p = hf * alpha;
    let e = hf.mul_add(alpha, -p);
    let t = (p - p.floor()) + e + x;
    t - t.floor()
}

fn build(a: &[f64], b: &[f64]) -> TorusFn {
    a.iter().zip(b).enumerate().fold(TorusFn::zero(), |acc, (l, (al, bl))| acc.add(&TorusFn::mode(l, *al, *bl)))
}

fn trig() -> impl Strategy<Value = (Vec<f64>, Vec<f64>)> {
    (1usize..12).prop_flat_map(|n| (prop::collection::vec(-1.0f64..1.0, n), prop::collection::vec(-1.0f64..1.0, n)))
}

fn small_mat() -> impl Strategy<Value = MatFn> {
    prop::collection::vec((trig(),), 4).prop_map(|v| {
        let f: Vec<TorusFn> = v.iter().map(|((a, b),)| build(a, b).scale(0.1)).collect();
        MatFn::new([[f[0].clone(), f[1].clone()], [f[2].clone(), f[3].clone()]])
    })
}

fn frob(m: Mat2) -> f64 {
    m.frobenius()
}

#[test]
fn mode_convention() {
    let f = TorusFn::mode(3, 0.5, -2.0);
    for x in [0.0, 0.1, 0.37, 0.9] {
        let expect = 0.5 * (TAU * 3.0 * x).cos() - 2.0 * (TAU * 3.0 * x).sin();
        assert!((f.evaluate(x) - expect).abs() < 1e-14);
    }
    assert_eq!(f.bandwidth(), 3);
    assert_eq!(f.coeff(-3), f.coeff(3).conj());
}

#[test]
fn chop_counts_dropped_modes() {
    let f = TorusFn::from_coeffs(vec![
        Complex64::new(1.0, 0.0),
        Complex64::new(1e-18, 0.0),
        Complex64::new(0.2, 0.1),
        Complex64::new(0.0, 1e-17),
    ]);
    let (g, dropped) = f.chop(1e-15);
    assert_eq!(dropped, 2);
    assert_eq!(g.bandwidth(), 2);
}

#[test]
fn rotation_mat_is_pointwise_rotation() {
    let phi = TorusFn::constant(0.2).add(&TorusFn::mode(2, 0.03, 0.01));
    let r = rotation_mat(&phi).unwrap();
    for j in 0..50 {
        let x = j as f64 / 50.0 + 0.003;
        let d = r.eval(x).max_abs_diff(&Mat2::rotation(phi.evaluate(x)));
        assert!(d < 1e-13, "x={x} d={d}");
    }
}

#[test]
fn norm_ledger_orders() {
    let f = TorusFn::mode(4, 1.0, 0.0);
    let l = NormLedger::for_fn("f", &f, &[0, 1, 2]);
    assert!((l.get(0).unwrap() - 1.0).abs() < 1e-12);
    assert!((l.get(1).unwrap() - (1.0 + TAU * 4.0)).abs() < 1e-9);
    assert!(l.is_monotone());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn evaluation_matches_direct_sum((a, b) in trig(), x in 0.0f64..1.0) {
        let f = build(&a, &b);
        prop_assert!((f.evaluate(x) - direct(&a, &b, x)).abs() < 1e-12);
    }

    #[test]
    fn samples_round_trip((a, b) in trig()) {
        let f = build(&a, &b);
        let g = TorusFn::from_samples(&f.samples(64)).unwrap();
        for j in 0..37 {
            let x = j as f64 / 37.0;
            prop_assert!((f.evaluate(x) - g.evaluate(x)).abs() < 1e-12);
        }
    }

    #[test]
    fn birkhoff_sum_matches_direct((a, b) in trig(), n in 1u64..400, x in 0.0f64..1.0) {
        let alpha = (5f64.sqrt() - 1.0) / 2.0;
        let f = build(&a, &b);
        let (s, _) = f.birkhoff_sum(alpha, &BigUint::from(n));
        let direct_sum: f64 = (0..n).map(|h| direct(&a, &b, orbit_point(x, alpha, h))).sum();
        prop_assert!((s.evaluate(x) - direct_sum).abs() < 1e-11, "{} vs {}", s.evaluate(x), direct_sum);
    }

    #[test]
    fn derivative_matches_finite_difference((a, b) in trig(), x in 0.0f64..1.0) {
        let f = build(&a, &b);
        let h = 1e-5;
        let fd = (direct(&a, &b, x + h) - direct(&a, &b, x - h)) / (2.0 * h);
        let d = f.derivative(1).evaluate(x);
        prop_assert!((d - fd).abs() < 1e-6 * (1.0 + d.abs()), "{} vs {}", d, fd);
        let fd2 = (direct(&a, &b, x + 1e-4) - 2.0 * direct(&a, &b, x) + direct(&a, &b, x - 1e-4)) / 1e-8;
        let d2 = f.derivative(2).evaluate(x);
        prop_assert!((d2 - fd2).abs() < 1e-3 * (1.0 + d2.abs()), "{} vs {}", d2, fd2);
    }

    #[test]
    fn truncate_plus_rest_is_identity((a, b) in trig(), cut in -1.0f64..14.0) {
        let f = build(&a, &b);
        let back = f.truncate(cut).add(&f.rest(cut));
        for l in 0..=f.bandwidth() as i64 {
            prop_assert!((back.coeff(l) - f.coeff(l)).norm() < 1e-15);
        }
    }

    #[test]
    fn translate_shifts_argument((a, b) in trig(), beta in -2.0f64..2.0, x in 0.0f64..1.0) {
        let f = build(&a, &b);
        prop_assert!((f.translate(beta).evaluate(x) - direct(&a, &b, x + beta)).abs() < 1e-11);
        let d = f.shift_difference(beta).evaluate(x);
        prop_assert!((d - (direct(&a, &b, x + beta) - direct(&a, &b, x))).abs() < 1e-11);
    }

    #[test]
    fn product_is_pointwise((a, b) in trig(), (c, d) in trig(), x in 0.0f64..1.0) {
        let p = build(&a, &b).mul(&build(&c, &d));
        prop_assert!((p.evaluate(x) - direct(&a, &b, x) * direct(&c, &d, x)).abs() < 1e-11);
    }

    #[test]
    fn sup_norm_bounds((a, b) in trig()) {
        let f = build(&a, &b);
        let dense = (0..4096).map(|j| direct(&a, &b, j as f64 / 4096.0).abs()).fold(0.0, f64::max);
        let s = f.sup_norm();
        prop_assert!(s >= dense - 1e-12);
        prop_assert!(s <= f.wiener_norm() + 1e-12);
        prop_assert!(s <= dense * (1.0 + 1e-3) + 1e-12);
    }

    #[test]
    fn q_is_linear_and_idempotent(m in small_mat(), n in small_mat(), s in -3.0f64..3.0) {
        let lhs = q_project(&m.add(&n.scale(s)));
        let rhs = q_project(&m).add(&q_project(&n).scale(s));
        prop_assert!(lhs.grid_distance(&rhs, 64) < 1e-13);
        let qq = q_project(&q_project(&m));
        prop_assert!(qq.grid_distance(&q_project(&m), 64) < 1e-13);
    }

    #[test]
    fn q_complement_is_conformal(m in small_mat(), x in 0.0f64..1.0) {
        let c = m.sub(&q_project(&m)).eval(x);
        // conformal: [[a, −b], [b, a]]
        prop_assert!((c.0[0][0] - c.0[1][1]).abs() < 1e-14);
        prop_assert!((c.0[0][1] + c.0[1][0]).abs() < 1e-14);
        let qm = q_project(&m).eval(x);
        prop_assert!(frob(qm) <= frob(m.eval(x)) + 1e-14);
    }

    #[test]
    fn q_commutes_with_rotations(m in small_mat(), theta in 0.0f64..1.0) {
        let r = Mat2::rotation(theta);
        let left = q_project(&m.left_const(r));
        let right = q_project(&m.right_const(r));
        prop_assert!(left.grid_distance(&q_project(&m).left_const(r), 64) < 1e-13);
        prop_assert!(right.grid_distance(&q_project(&m).right_const(r), 64) < 1e-13);
    }

    #[test]
    fn matfn_inverse_of_sl2((a, b) in trig(), t in -1.0f64..1.0, x in 0.0f64..1.0) {
        // [[1, u], [0, 1]]·[[1, 0], [t, 1]] has det 1
        let u = build(&a, &b).scale(0.3);
        let upper = MatFn::new([[TorusFn::constant(1.0), u], [TorusFn::zero(), TorusFn::constant(1.0)]]);
        let lower = MatFn::constant(Mat2::new(1.0, 0.0, t, 1.0));
        let m = upper.mul(&lower);
        prop_assert!(m.det_defect(64) < 1e-13);
        let id = m.mul(&m.inverse().unwrap()).eval(x);
        prop_assert!(id.max_abs_diff(&Mat2::IDENTITY) < 1e-12);
    }
}
