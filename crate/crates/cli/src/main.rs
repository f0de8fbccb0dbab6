use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use cocycle_reduce::{
    cmd_cf, cmd_reduce, cmd_rotnum, cmd_sweep, format_cf, selftest, PotentialSpec, RunConfig, EXIT_INPUT,
};
use cocycle_reduce_core::Error;

#[derive(Parser)]
#[command(name = "cocycle-reduce", version, about = "Rotations-reduction of quasi-periodic SL(2,R) cocycles")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Args, Clone)]
struct Common {
    /// JSON run configuration.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output path (JSON bundle for `reduce`, CSV for `sweep`, JSON otherwise).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Frequency: `golden`, `pi-3`, `liouville(k)` or a decimal literal.
    #[arg(long)]
    alpha: Option<String>,
    /// Almost Mathieu coupling, `v(x) = 2λ cos 2πx`.
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    energy: Option<f64>,
}

impl Common {
    fn load(&self) -> Result<RunConfig> {
        let mut cfg = match &self.config {
            Some(p) => {
                RunConfig::from_json(&std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?)?
            }
            None => RunConfig::default(),
        };
        if let Some(a) = &self.alpha {
            cfg.alpha = a.clone();
        }
        if let Some(l) = self.lambda {
            cfg.potential = PotentialSpec::AlmostMathieu { lambda: l };
        }
        if let Some(e) = self.energy {
            cfg.energy = e;
        }
        Ok(cfg)
    }
}

#[derive(Subcommand)]
enum Cmd {
    /// Continued-fraction table and the driving subsequence.
    Cf {
        #[arg(long, default_value = "golden")]
        alpha: String,
        #[arg(short = 'n', default_value_t = 20)]
        n: usize,
        /// Print JSON instead of a table.
        #[arg(long)]
        json: bool,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Fibered rotation number of the Schrödinger cocycle.
    Rotnum(Common),
    /// Run the reduction; NDJSON trace on stdout (or `trace_out`), bundle to `--out`.
    Reduce(Common),
    /// Energy sweep with classification, CSV output.
    Sweep(Common),
    /// Quick internal checks.
    Selftest,
}

fn write_or_print(path: Option<&Path>, text: &str) -> Result<()> {
    match path {
        Some(p) => std::fs::write(p, text).with_context(|| format!("writing {}", p.display())),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn input_error_code(e: &anyhow::Error) -> u8 {
    match e.downcast_ref::<Error>() {
        Some(Error::RationalInput { .. }) | Some(Error::InvalidInput(_)) | None => EXIT_INPUT as u8,
        Some(_) => 6,
    }
}

fn run(cli: Cli) -> Result<u8> {
    match cli.cmd {
        Cmd::Cf { alpha, n, json, out } => match cmd_cf(&alpha, n) {
            Ok(t) => {
                let text = if json { serde_json::to_string_pretty(&t)? + "\n" } else { format_cf(&t) };
                write_or_print(out.as_deref(), &text)?;
                Ok(0)
            }
            Err(e @ Error::RationalInput { .. }) => {
                eprintln!("{e}");
                Ok(EXIT_INPUT as u8)
            }
            Err(e) => Err(e.into()),
        },
        Cmd::Rotnum(c) => {
            let cfg = c.load()?;
            let r = cmd_rotnum(&cfg)?;
            write_or_print(c.out.as_deref(), &(serde_json::to_string(&r)? + "\n"))?;
            Ok(0)
        }
        Cmd::Reduce(c) => {
            let cfg = c.load()?;
            let r = cmd_reduce(&cfg)?;
            write_or_print(cfg.trace_out.as_deref(), &r.trace)?;
            let bundle = serde_json::to_string(&r.bundle)?;
            let out = c.out.or(cfg.bundle_out);
            if let Some(p) = out {
                std::fs::write(&p, bundle).with_context(|| format!("writing {}", p.display()))?;
            }
            if let Some(e) = &r.bundle.report.error {
                eprintln!("{:?}: {e}", r.bundle.report.outcome);
            }
            Ok(r.exit_code as u8)
        }
        Cmd::Sweep(c) => {
            let cfg = c.load()?;
            let s = cmd_sweep(&cfg)?;
            eprintln!("lyapunov noise floor {:e}", s.noise_floor);
            write_or_print(c.out.as_deref().or(cfg.csv_out.as_deref()), &s.csv)?;
            Ok(0)
        }
        Cmd::Selftest => {
            let checks = selftest();
            let mut failed = 0;
            for ch in &checks {
                println!("{} {} {}", if ch.passed { "PASS" } else { "FAIL" }, ch.name, ch.detail);
                failed += usize::from(!ch.passed);
            }
            Ok(if failed == 0 { 0 } else { 1 })
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(input_error_code(&e))
        }
    }
}
