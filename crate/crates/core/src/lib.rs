//! Joint transmit-antenna selection and power allocation for multi-user MISO
//! downlinks.
//!
//! The crate solves the *economic sum rate* problem
//!
//! ```text
//!     minimize    sum_i ( sum_j p_ij x_i + p_rf x_i )
//!     subject to  R(P, x) >= r_th
//!                 sum_j p_ij <= p_th          for every antenna i
//!                 p_ij >= 0,  x in {0, 1}^N
//! ```
//!
//! with an alternating-direction scheme: power allocation at fixed switches
//! ([`ad::ad1`], a log-barrier NLP solve) alternates with a sequential Boolean
//! QP step over the switches ([`ad::build_ad2_subproblem`] +
//! [`bqp::solve_bqp`]). The Boolean step keeps its QP convex by linearizing the
//! complementarity penalty `x'(1 - x)` instead of adding it exactly.
//!
//! All subsolvers are implemented here: a dense primal-dual interior-point QP
//! solver ([`qp`]) and a log-barrier Newton solver for smooth inequality
//! constrained problems ([`nlp`]). Two penalty baselines and an exhaustive
//! enumeration oracle live in [`baselines`]; [`experiment`] drives seeded runs
//! and writes traces.

// `!(a > b)` is used on purpose wherever NaN must take the failing branch.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod ad;
pub mod baselines;
pub mod bqp;
pub mod channel;
pub mod config;
pub mod experiment;
pub mod nlp;
pub mod qp;
pub mod rate;

mod error;
mod newton;

pub use ad::{AdConfig, AdRecord, AdStatus, AdTrace, Solution};
pub use baselines::{Method, MethodReport};
pub use bqp::{BqpConfig, BqpStatus, BqpTrace};
pub use channel::{ChannelMatrix, RateThreshold, ScenarioConfig};
pub use error::{Error, Result};
pub use nlp::{NlpOptions, NlpSolution, NlpStatus};
pub use qp::{QpProblem, QpSolution, QpStatus};
pub use rate::{EsrProblem, PowerAllocation, SwitchVector};

/// Library version recorded in run manifests.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
