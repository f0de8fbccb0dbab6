//! Plain 2×2 real matrices used for pointwise work on grids and orbits.

use std::f64::consts::TAU;
use std::ops::{Add, Mul, Neg, Sub};

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Mat2(pub [[f64; 2]; 2]);

impl Mat2 {
    pub const IDENTITY: Mat2 = Mat2([[1.0, 0.0], [0.0, 1.0]]);
    pub const ZERO: Mat2 = Mat2([[0.0, 0.0], [0.0, 0.0]]);
    /// The quarter turn `J = [[0, -1], [1, 0]]`.
    pub const J: Mat2 = Mat2([[0.0, -1.0], [1.0, 0.0]]);

    pub fn new(a: f64, b: f64, c: f64, d: f64) -> Self {
        Mat2([[a, b], [c, d]])
    }

    /// Rotation by `turns` full turns (angle `2π·turns`).
    pub fn rotation(turns: f64) -> Self {
        let (s, c) = (TAU * turns).sin_cos();
        Mat2([[c, -s], [s, c]])
    }

    /// `Id - R_turns`, accurate for small angles.
    pub fn id_minus_rotation(turns: f64) -> Self {
        let half = std::f64::consts::PI * turns;
        let one_minus_cos = 2.0 * half.sin() * half.sin();
        let s = (TAU * turns).sin();
        Mat2([[one_minus_cos, s], [-s, one_minus_cos]])
    }

    pub fn det(&self) -> f64 {
        let m = &self.0;
        m[0][0] * m[1][1] - m[0][1] * m[1][0]
    }

    pub fn trace(&self) -> f64 {
        self.0[0][0] + self.0[1][1]
    }

    /// Adjugate; equals the inverse when `det = 1`.
    pub fn adjugate(&self) -> Self {
        let m = &self.0;
        Mat2([[m[1][1], -m[0][1]], [-m[1][0], m[0][0]]])
    }

    pub fn inverse(&self) -> Option<Self> {
        let d = self.det();
        if d == 0.0 || !d.is_finite() {
            return None;
        }
        Some(self.adjugate().scale(1.0 / d))
    }

    pub fn scale(&self, s: f64) -> Self {
        let m = &self.0;
        Mat2([[m[0][0] * s, m[0][1] * s], [m[1][0] * s, m[1][1] * s]])
    }

    pub fn frobenius(&self) -> f64 {
        let m = &self.0;
        (m[0][0] * m[0][0] + m[0][1] * m[0][1] + m[1][0] * m[1][0] + m[1][1] * m[1][1]).sqrt()
    }

    /// Operator (spectral) norm.
    pub fn op_norm(&self) -> f64 {
        let m = &self.0;
        let c = (m[0][0] + m[1][1]).hypot(m[0][1] - m[1][0]);
        let a = (m[0][0] - m[1][1]).hypot(m[0][1] + m[1][0]);
        (c + a) / 2.0
    }

    /// Anti-conformal part `Q(M) = (M + J M J) / 2`.
    pub fn anti_conformal(&self) -> Self {
        let m = &self.0;
        let p = (m[0][0] - m[1][1]) / 2.0;
        let q = (m[0][1] + m[1][0]) / 2.0;
        Mat2([[p, q], [q, -p]])
    }

    /// Conformal part `M - Q(M) = [[a, b], [-b, a]]`, returned as `(a, b)`.
    pub fn conformal_ab(&self) -> (f64, f64) {
        let m = &self.0;
        ((m[0][0] + m[1][1]) / 2.0, (m[0][1] - m[1][0]) / 2.0)
    }

    /// Principal angle (in turns, `(-1/2, 1/2]`) of the conformal part.
    pub fn conformal_angle(&self) -> f64 {
        let (a, b) = self.conformal_ab();
        (-b).atan2(a) / TAU
    }

    pub fn apply(&self, v: [f64; 2]) -> [f64; 2] {
        let m = &self.0;
        [m[0][0] * v[0] + m[0][1] * v[1], m[1][0] * v[0] + m[1][1] * v[1]]
    }

    pub fn max_abs_diff(&self, other: &Mat2) -> f64 {
        (*self - *other).frobenius()
    }
}

impl Add for Mat2 {
    type Output = Mat2;
    fn add(self, o: Mat2) -> Mat2 {
        let (a, b) = (self.0, o.0);
        Mat2([[a[0][0] + b[0][0], a[0][1] + b[0][1]], [a[1][0] + b[1][0], a[1][1] + b[1][1]]])
    }
}

impl Sub for Mat2 {
    type Output = Mat2;
    fn sub(self, o: Mat2) -> Mat2 {
        let (a, b) = (self.0, o.0);
        Mat2([[a[0][0] - b[0][0], a[0][1] - b[0][1]], [a[1][0] - b[1][0], a[1][1] - b[1][1]]])
    }
}

impl Neg for Mat2 {
    type Output = Mat2;
    fn neg(self) -> Mat2 {
        self.scale(-1.0)
    }
}

impl Mul for Mat2 {
    type Output = Mat2;
    fn mul(self, o: Mat2) -> Mat2 {
        let (a, b) = (self.0, o.0);
        Mat2([
            [a[0][0] * b[0][0] + a[0][1] * b[1][0], a[0][0] * b[0][1] + a[0][1] * b[1][1]],
            [a[1][0] * b[0][0] + a[1][1] * b[1][0], a[1][0] * b[0][1] + a[1][1] * b[1][1]],
        ])
    }
}
