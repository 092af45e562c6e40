//! Non-Hermitian quantum evolution in the three-Hilbert-space picture and
//! bilinear control on top of it.
//!
//! * [`linalg`]: dense complex primitives (eigensystems, `exp`, square roots).
//! * [`dyson`]: time-dependent Dyson maps, metrics and Coriolis terms.
//! * [`metric`]: metric operators for quasi-Hermitian Hamiltonians.
//! * [`evolution`]: RK4 propagation of kets, dual kets and metrics.
//! * [`control`]: bilinear systems, controllability, fidelity and optimization.
//! * [`config`] and [`run`]: scenario files and the `thsq` command line.
// `!(x > 0.0)` is used deliberately so that NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod control;
pub mod dyson;
pub mod error;
pub mod evolution;
pub mod field;
pub mod linalg;
pub mod metric;
pub mod run;

pub use error::{Result, ThsError};
pub use linalg::{CMatrix, CVector, C64};
