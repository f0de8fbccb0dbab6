//! Sup norms and `C^k` norms `‖f‖_k = Σ_{h≤k} |D^h f|₀`.

use std::collections::BTreeMap;
use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use super::{grid_size_at_least, TorusFn};

/// A numerical norm with a certified lower bound and an upper bound from
/// the second-order Bernstein estimate on the finest grid used.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NormEstimate {
    pub value: f64,
    pub upper: f64,
    /// Size of the finest grid used.
    pub grid: usize,
}

const CANDIDATES: usize = 8;
const MAX_REFINE_GRID: usize = 1 << 20;

impl TorusFn {
    fn refine_max(&self, samples: &[f64]) -> f64 {
        let m = samples.len();
        let gm = samples.iter().fold(0.0f64, |a, x| a.max(x.abs()));
        if self.bandwidth() == 0 || gm == 0.0 {
            return gm;
        }
        let mut peaks: Vec<(f64, usize)> = (0..m)
            .filter(|&j| {
                let v = samples[j].abs();
                v >= samples[(j + m - 1) % m].abs() && v >= samples[(j + 1) % m].abs()
            })
            .map(|j| (samples[j].abs(), j))
            .collect();
        peaks.sort_by(|a, b| b.0.total_cmp(&a.0));
        peaks.truncate(CANDIDATES);
        let h = 1.0 / m as f64;
        let mut best = gm;
        for &(_, j) in &peaks {
            let x0 = j as f64 * h;
            let mut x = x0;
            for _ in 0..12 {
                let [_, d1, d2] = self.eval_derivs::<3>(x);
                if d2 == 0.0 {
                    break;
                }
                let step = (d1 / d2).clamp(-h, h);
                x -= step;
                if (x - x0).abs() > 2.0 * h {
                    x = x0;
                    break;
                }
                if step.abs() < 1e-16 {
                    break;
                }
            }
            best = best.max(self.evaluate(x).abs());
        }
        best
    }

    /// `|f|₀` from a grid of `≥ 8(N+1)` points refined by Newton steps
    /// at the largest local maxima.
    pub fn sup_norm(&self) -> f64 {
        let m = grid_size_at_least(8 * (self.bandwidth() + 1));
        self.refine_max(&self.samples(m))
    }

    /// `|f|₀` with an upper bound, doubling the grid until the bounds agree
    /// to `rel_tol` or the grid reaches `2^20` points.
    pub fn sup_estimate(&self, rel_tol: f64) -> NormEstimate {
        let n = self.bandwidth() as f64;
        let mut m = grid_size_at_least(8 * (self.bandwidth() + 1));
        loop {
            let s = self.samples(m);
            let gm = s.iter().fold(0.0f64, |a, x| a.max(x.abs()));
            let value = self.refine_max(&s);
            let r = PI * n / m as f64;
            let upper = (gm / (1.0 - r * r / 2.0)).max(value);
            if upper - value <= rel_tol * upper || m >= MAX_REFINE_GRID {
                return NormEstimate { value, upper, grid: m };
            }
            m *= 2;
        }
    }

    /// `‖f‖_k = Σ_{h=0}^{k} |D^h f|₀`.
    pub fn cr_norm(&self, k: u32) -> f64 {
        (0..=k).map(|h| self.derivative(h).sup_norm()).sum()
    }

    pub fn cr_norm_estimate(&self, k: u32, rel_tol: f64) -> NormEstimate {
        (0..=k).map(|h| self.derivative(h).sup_estimate(rel_tol)).fold(
            NormEstimate { value: 0.0, upper: 0.0, grid: 0 },
            |a, e| NormEstimate { value: a.value + e.value, upper: a.upper + e.upper, grid: a.grid.max(e.grid) },
        )
    }
}

/// `‖f‖_k` for a set of orders, tagged with an identifier.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormLedger {
    pub id: String,
    pub values: BTreeMap<u32, f64>,
}

impl NormLedger {
    pub fn new(id: impl Into<String>) -> Self {
        NormLedger { id: id.into(), values: BTreeMap::new() }
    }

    /// Fills the ledger from the per-order sup norms `|D^h f|₀`.
    pub fn from_sup_norms(id: impl Into<String>, orders: &[u32], sup: impl Fn(u32) -> f64) -> Self {
        let top = orders.iter().copied().max().unwrap_or(0);
        let parts: Vec<f64> = (0..=top).map(&sup).collect();
        let mut ledger = Self::new(id);
        for &k in orders {
            ledger.values.insert(k, parts[..=k as usize].iter().sum());
        }
        ledger
    }

    pub fn for_fn(id: impl Into<String>, f: &TorusFn, orders: &[u32]) -> Self {
        Self::from_sup_norms(id, orders, |h| f.derivative(h).sup_norm())
    }

    pub fn get(&self, k: u32) -> Option<f64> {
        self.values.get(&k).copied()
    }

    pub fn is_monotone(&self) -> bool {
        self.values.values().zip(self.values.values().skip(1)).all(|(a, b)| a <= b)
    }
}
