//! Restricted-memory quasi-Newton bundle method for minimizing locally
//! Lipschitz, possibly nonconvex and nonsmooth functions on Riemannian
//! manifolds.
//!
//! The solver only needs a black-box oracle returning `f(x)` and one
//! Riemannian subgradient (see [`Problem`]). Tangent vectors and operators
//! live in intrinsic orthonormal coordinates (see [`geometry`]).
//!
//! ```
//! use rqnbm_core::{problems::MaxQ, solver::{run, SolverConfig, Termination}};
//!
//! let prob = MaxQ::new(4);
//! let cfg = SolverConfig { eps: 4e-7, ..SolverConfig::default() };
//! let result = run(&prob, prob.start(), cfg).unwrap();
//! assert_eq!(result.termination, Termination::Converged);
//! assert!(result.w_final <= 4e-7);
//! assert!(result.f_opt <= 1e-6);
//! ```

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod geometry;
pub mod linesearch;
pub mod operator;
pub mod problems;
pub mod qp3;
pub mod solver;
pub mod trace;

pub use error::{Error, Result};
pub use geometry::{Manifold, Point, Tangent, TransportMap};
pub use linesearch::{LineSearchParams, LineSearchResult, StepKind};
pub use operator::{QuasiNewtonVectors, SpdOperator};
pub use problems::{Evaluation, MaxQ, Obb, ObbInstance, Problem};
pub use qp3::{solve_simplex_qp, Qp3Input, Qp3Solution};
pub use solver::{BundleState, RunResult, Solver, SolverConfig, Termination, UpdateMode};
pub use trace::{IterationRecord, UpdateKind};
