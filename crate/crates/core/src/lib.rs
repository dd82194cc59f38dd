//! Large-deviations toolkit for the RS/GI/1 transitory queue.
//!
//! `n` jobs arrive at the order statistics of i.i.d. epochs on `[0, 1]`,
//! bring i.i.d. service requirements scaled by `1/n`, and are served by a
//! single work-conserving server. The crate covers
//!
//! * simulation of arrival, service, offered-load and workload paths
//!   ([`queue`]), with the reflection map and the fluid limit;
//! * pointwise rate functions for the order-statistics process, the service
//!   partial sums and the offered load ([`rate`]);
//! * discretised sample-path rate functionals and the workload rate
//!   ([`path`]);
//! * exact binomial oracles, naive and importance-sampled Monte Carlo, and
//!   empirical decay-rate checks ([`rare`]);
//! * the critical time-scale for buffer exceedance ([`bandwidth`]).

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bandwidth;
pub mod error;
pub mod optim;
pub mod path;
pub mod queue;
pub mod rare;
pub mod rate;
pub mod stochastic;

pub use error::{Error, Result};
pub use stochastic::{ArrivalKind, ArrivalModel, OrderStatMethod, RngSpec, ServiceKind, ServiceModel};
