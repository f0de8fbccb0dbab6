//! Subcommand implementations for the `cocycle-reduce` binary.

use std::fmt::Write as _;
use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use cocycle_reduce_core::arithmetic::{expand, select_subsequence, Frequency, StopReason};
use cocycle_reduce_core::cocycle::RotationOpts;
use cocycle_reduce_core::scheme::{rotations_reduce_with, SchemeConfig, SchemeOutcome, SchemeReport};
use cocycle_reduce_core::{Cocycle, Error, MatFn, TorusFn};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub const CSV_HEADER: &str = "E,rho,rho_err,lyapunov,outcome,final_defect,steps,class";
pub const THREADS_ENV: &str = "COCYCLE_REDUCE_THREADS";

/// Exit codes keyed to outcomes.
pub fn exit_code(outcome: SchemeOutcome) -> i32 {
    match outcome {
        SchemeOutcome::Converged => 0,
        SchemeOutcome::ResonanceBlocked => 3,
        SchemeOutcome::PreconditionFailed => 4,
        SchemeOutcome::BudgetExhausted => 5,
        SchemeOutcome::NumericalFailure => 6,
    }
}

pub const EXIT_INPUT: i32 = 2;

/// `"golden"`, `"pi-3"`, `"liouville(k)"` or a decimal literal.
pub fn parse_alpha(spec: &str) -> std::result::Result<Frequency, Error> {
    let s = spec.trim();
    match s {
        "golden" => return Ok(Frequency::golden()),
        "pi-3" | "pi_minus_3" => return Ok(Frequency::pi_minus_3()),
        _ => {}
    }
    if let Some(k) = s.strip_prefix("liouville(").and_then(|r| r.strip_suffix(')')) {
        let k: u32 = k.trim().parse().map_err(|_| Error::InvalidInput(format!("bad liouville order in {s:?}")))?;
        return Frequency::liouville(k);
    }
    Frequency::from_decimal_str(s)
}

/// Potential `v`: either `2λ cos(2πx)` or a real Fourier list
/// `v(x) = Σ_l a_l cos(2πlx) + b_l sin(2πlx)` given as `[[a_0, 0], [a_1, b_1], …]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PotentialSpec {
    AlmostMathieu { lambda: f64 },
    Fourier { coefficients: Vec<[f64; 2]> },
}

impl Default for PotentialSpec {
    fn default() -> Self {
        PotentialSpec::AlmostMathieu { lambda: 1e-3 }
    }
}

impl PotentialSpec {
    pub fn to_fn(&self) -> Result<TorusFn> {
        let v = match self {
            PotentialSpec::AlmostMathieu { lambda } => TorusFn::mode(1, 2.0 * lambda, 0.0),
            PotentialSpec::Fourier { coefficients } => {
                let mut v = TorusFn::zero();
                for (l, &[a, b]) in coefficients.iter().enumerate() {
                    v = if l == 0 { v.add_constant(a) } else { v.add(&TorusFn::mode(l, a, b)) };
                }
                v
            }
        };
        if v.coeffs().iter().any(|c| !c.re.is_finite() || !c.im.is_finite()) {
            bail!("potential coefficients must be finite");
        }
        Ok(v)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnergyGrid {
    pub start: f64,
    pub end: f64,
    pub count: usize,
}

impl EnergyGrid {
    pub fn points(&self) -> Vec<f64> {
        match self.count {
            0 => vec![],
            1 => vec![self.start],
            n => (0..n).map(|i| self.start + (self.end - self.start) * i as f64 / (n - 1) as f64).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub alpha: String,
    pub potential: PotentialSpec,
    pub energy: f64,
    pub energies: Option<EnergyGrid>,
    pub scheme: SchemeConfig,
    /// Orbit length for Lyapunov estimates.
    pub lyapunov_len: usize,
    pub threads: Option<usize>,
    pub trace_out: Option<PathBuf>,
    pub bundle_out: Option<PathBuf>,
    pub csv_out: Option<PathBuf>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            alpha: "golden".into(),
            potential: PotentialSpec::default(),
            energy: 0.0,
            energies: None,
            scheme: SchemeConfig::default(),
            lyapunov_len: 20_000,
            threads: None,
            trace_out: None,
            bundle_out: None,
            csv_out: None,
        }
    }
}

impl RunConfig {
    pub fn from_json(s: &str) -> Result<Self> {
        serde_json::from_str(s).context("parsing run config")
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn frequency(&self) -> std::result::Result<Frequency, Error> {
        parse_alpha(&self.alpha)
    }

    pub fn cocycle(&self, freq: &Frequency, e: f64) -> Result<Cocycle> {
        Ok(Cocycle::schrodinger(&self.potential.to_fn()?, e, freq.value()))
    }

    /// Pool width: env override, then config, then 1.
    pub fn width(&self) -> usize {
        std::env::var(THREADS_ENV).ok().and_then(|v| v.parse().ok()).or(self.threads).unwrap_or(1).max(1)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CfRow {
    pub n: usize,
    /// `a_n` (empty for n = 0).
    pub a: String,
    pub p: String,
    pub q: String,
    pub in_subsequence: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CfOutput {
    pub alpha: String,
    pub value: f64,
    pub stop: StopReason,
    pub rows: Vec<CfRow>,
    pub subsequence: Vec<usize>,
}

pub fn cmd_cf(alpha: &str, n: usize) -> std::result::Result<CfOutput, Error> {
    let freq = parse_alpha(alpha)?;
    let table = expand(&freq, n.max(2), None)?;
    let sub = select_subsequence(&table)?;
    let rows = (0..table.count())
        .map(|k| CfRow {
            n: k,
            a: if k == 0 { String::new() } else { table.partial_quotients[k - 1].to_string() },
            p: table.numerators[k].to_string(),
            q: table.denominators[k].to_string(),
            in_subsequence: sub.indices.contains(&k),
        })
        .collect();
    Ok(CfOutput { alpha: alpha.to_string(), value: freq.value(), stop: table.stop, rows, subsequence: sub.indices })
}

pub fn format_cf(out: &CfOutput) -> String {
    let mut s =
        format!("alpha = {} ({})\n{:>4} {:>10} {:>24} {:>24}\n", out.alpha, out.value, "n", "a_n", "p_n", "q_n");
    for r in &out.rows {
        let mark = if r.in_subsequence { " *" } else { "" };
        let _ = writeln!(s, "{:>4} {:>10} {:>24} {:>24}{}", r.n, r.a, r.p, r.q, mark);
    }
    let _ = writeln!(s, "stop: {:?}; subsequence n_h: {:?}", out.stop, out.subsequence);
    s
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RotnumOutput {
    pub rho: f64,
    pub err: f64,
    pub orbit_length: u64,
}

pub fn cmd_rotnum(cfg: &RunConfig) -> Result<RotnumOutput> {
    let freq = cfg.frequency()?;
    let c = cfg.cocycle(&freq, cfg.energy)?;
    let r = c.rotation_number(&cfg.scheme.rotation)?;
    Ok(RotnumOutput { rho: r.rho, err: r.error_bound, orbit_length: r.orbit_length })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ResultBundle {
    #[serde(rename = "B")]
    pub b: Option<MatFn>,
    pub phi: Option<TorusFn>,
    pub report: SchemeReport,
}

pub struct ReduceOutput {
    pub trace: String,
    pub bundle: ResultBundle,
    pub exit_code: i32,
}

pub fn cmd_reduce(cfg: &RunConfig) -> Result<ReduceOutput> {
    let freq = cfg.frequency()?;
    let c = cfg.cocycle(&freq, cfg.energy)?;
    let mut report = rotations_reduce_with(&c, &freq, &cfg.scheme);
    let mut trace = String::new();
    for rec in &report.trace {
        trace.push_str(&serde_json::to_string(rec)?);
        trace.push('\n');
    }
    let exit_code = exit_code(report.outcome);
    let (b, phi) = (report.b.take(), report.phi.take());
    Ok(ReduceOutput { trace, bundle: ResultBundle { b, phi, report }, exit_code })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRecord {
    #[serde(rename = "E")]
    pub e: f64,
    pub rho: f64,
    pub rho_err: f64,
    pub lyapunov: f64,
    pub scheme_outcome: SchemeOutcome,
    pub final_defect: f64,
    pub steps_used: usize,
    pub class: String,
}

fn run_row(cfg: &RunConfig, freq: &Frequency, v: &TorusFn, e: f64) -> SweepRecord {
    let c = Cocycle::schrodinger(v, e, freq.value());
    let report = rotations_reduce_with(&c, freq, &cfg.scheme);
    let (rho, rho_err) = match &report.rho {
        Some(r) => (r.rho, r.error_bound),
        None => match c.rotation_number(&cfg.scheme.rotation) {
            Ok(r) => (r.rho, r.error_bound),
            Err(_) => (f64::NAN, f64::NAN),
        },
    };
    let rho = if rho.is_finite() { rho - rho.floor() } else { rho };
    SweepRecord {
        e,
        rho,
        rho_err,
        lyapunov: c.lyapunov(cfg.lyapunov_len).unwrap_or(f64::NAN),
        scheme_outcome: report.outcome,
        final_defect: report.final_defect,
        steps_used: report.steps_used,
        class: String::new(),
    }
}

/// `"ac-candidate"` for Converged, `"nuh-candidate"` above three times the
/// noise floor, `"undecided"` otherwise.
pub fn classify(r: &SweepRecord, noise_floor: f64) -> &'static str {
    if r.scheme_outcome == SchemeOutcome::Converged {
        "ac-candidate"
    } else if r.lyapunov > 3.0 * noise_floor {
        "nuh-candidate"
    } else {
        "undecided"
    }
}

pub struct SweepOutput {
    pub rows: Vec<SweepRecord>,
    pub noise_floor: f64,
    pub csv: String,
}

/// Largest Lyapunov estimate of the free (`v = 0`) cocycle over the in-band
/// energies of the grid; this is the finite-orbit noise level.
pub fn noise_floor(cfg: &RunConfig, freq: &Frequency, energies: &[f64]) -> f64 {
    energies
        .par_iter()
        .filter(|e| e.abs() < 1.9)
        .map(|&e| Cocycle::schrodinger(&TorusFn::zero(), e, freq.value()).lyapunov(cfg.lyapunov_len).unwrap_or(0.0))
        .reduce(|| 0.0, f64::max)
        .max(1e-6)
}

pub fn cmd_sweep(cfg: &RunConfig) -> Result<SweepOutput> {
    let freq = cfg.frequency()?;
    let v = cfg.potential.to_fn()?;
    let energies = match &cfg.energies {
        Some(g) => g.points(),
        None => vec![cfg.energy],
    };
    if energies.iter().any(|e| !e.is_finite()) {
        bail!("energy grid must be finite");
    }
    let pool = rayon::ThreadPoolBuilder::new().num_threads(cfg.width()).build()?;
    let (floor, mut rows) = pool.install(|| {
        let floor = noise_floor(cfg, &freq, &energies);
        let rows: Vec<SweepRecord> = energies.par_iter().map(|&e| run_row(cfg, &freq, &v, e)).collect();
        (floor, rows)
    });
    for r in rows.iter_mut() {
        r.class = classify(r, floor).to_string();
    }
    let csv = to_csv(&rows);
    Ok(SweepOutput { rows, noise_floor: floor, csv })
}

pub fn to_csv(rows: &[SweepRecord]) -> String {
    let mut s = String::from(CSV_HEADER);
    s.push('\n');
    for r in rows {
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{},{}",
            r.e,
            r.rho,
            r.rho_err,
            r.lyapunov,
            r.scheme_outcome.as_str(),
            r.final_defect,
            r.steps_used,
            r.class
        );
    }
    s
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SelftestCheck {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

/// Quick end-to-end checks of the installed binary.
pub fn selftest() -> Vec<SelftestCheck> {
    let mut out = Vec::new();
    let mut check = |name: &str, passed: bool, detail: String| {
        out.push(SelftestCheck { name: name.into(), passed, detail });
    };
    match cmd_cf("golden", 12) {
        Ok(cf) => {
            let qs: Vec<String> = cf.rows.iter().map(|r| r.q.clone()).collect();
            let mut fib = vec![1u64, 1];
            while fib.len() < qs.len() {
                fib.push(fib[fib.len() - 1] + fib[fib.len() - 2]);
            }
            let ok = qs.iter().zip(&fib).all(|(q, f)| *q == f.to_string());
            check("cf golden is Fibonacci", ok, format!("{qs:?}"));
        }
        Err(e) => check("cf golden is Fibonacci", false, e.to_string()),
    }
    check("cf 0.5 is rational", matches!(cmd_cf("0.5", 12), Err(Error::RationalInput { .. })), String::new());
    let free = RunConfig {
        potential: PotentialSpec::Fourier { coefficients: vec![] },
        energy: 1.0,
        scheme: SchemeConfig { rotation: RotationOpts::default(), ..SchemeConfig::default() },
        ..RunConfig::default()
    };
    match cmd_rotnum(&free) {
        Ok(r) => check("rotnum v=0 E=1", (r.rho - 1.0 / 6.0).abs() < 1e-8, format!("rho = {}", r.rho)),
        Err(e) => check("rotnum v=0 E=1", false, e.to_string()),
    }
    match cmd_reduce(&free) {
        Ok(r) => check(
            "reduce constant elliptic",
            r.exit_code == 0 && r.bundle.report.steps_used == 0,
            format!("{:?}", r.bundle.report.outcome),
        ),
        Err(e) => check("reduce constant elliptic", false, e.to_string()),
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn alpha_presets() {
        assert_eq!(parse_alpha("golden").unwrap().value(), Frequency::golden().value());
        assert!(parse_alpha("liouville(3)").is_ok());
        assert!(parse_alpha("liouville(x)").is_err());
        assert!((parse_alpha("0.1415926535").unwrap().value() - 0.1415926535).abs() < 1e-16);
    }

    #[test]
    fn grid_points() {
        let g = EnergyGrid { start: -1.0, end: 1.0, count: 5 };
        assert_eq!(g.points(), vec![-1.0, -0.5, 0.0, 0.5, 1.0]);
    }

    #[test]
    fn exit_codes() {
        assert_eq!(exit_code(SchemeOutcome::Converged), 0);
        assert_eq!(exit_code(SchemeOutcome::ResonanceBlocked), 3);
        assert_eq!(exit_code(SchemeOutcome::NumericalFailure), 6);
    }
}
