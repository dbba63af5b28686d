//! Stochastic state-reduction trajectories over graphs of superposition
//! components.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod acceptance;
pub mod current;
pub mod ensemble;
pub mod graph;
pub mod reduction;
pub mod scenario;
pub mod trajectory;
