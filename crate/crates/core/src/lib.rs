//! Rotations-reducibility for close-to-constant quasi-periodic `SL(2,R)`
//! cocycles over a single irrational frequency.
//!
//! The crate is organised bottom-up:
//!
//! * [`arithmetic`]: continued fractions of the frequency, the convergent
//!   subsequence that drives the reduction, and resonance checks.
//! * [`torusfun`]: band-limited real functions on the circle ([`TorusFn`]) and
//!   2×2 matrix-valued maps ([`MatFn`]).
//! * [`cocycle`]: cocycle construction, iteration, rotation/defect splitting,
//!   fibered rotation number and Lyapunov exponent.
//! * [`conjugation`]: the pointwise elliptic conjugation and the repeated
//!   pass over an iterated cocycle that gains a factor `‖q_n α‖` per pass.
//! * [`scheme`]: the full reduction loop along the convergent subsequence.

pub mod arithmetic;
pub mod cocycle;
pub mod conjugation;
pub mod error;
pub mod mat2;
pub mod scheme;
pub mod torusfun;

pub use arithmetic::{ConvergentTable, Frequency, Subsequence};
pub use cocycle::{Cocycle, DecomposedCocycle};
pub use error::{Error, Result};
pub use mat2::Mat2;
pub use scheme::{SchemeConfig, SchemeOutcome, SchemeReport};
pub use torusfun::{MatFn, TorusFn};
