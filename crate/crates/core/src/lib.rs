//! Discretized time-frequency model of the trilinear `biest` operator.
//!
//! Modules build on each other bottom-up: exact geometry ([`grid`]),
//! tile combinatorics ([`tiles`]), sampled wave packets ([`packets`]),
//! the size and energy functionals ([`functionals`]), the greedy tree
//! selection ([`decomp`]), symbol decomposition ([`whitney`]) and the
//! model forms with their experiments ([`forms`]).

pub mod exact;
pub mod grid;
pub mod tiles;
pub mod packets;
pub mod functionals;
pub mod decomp;
pub mod whitney;
pub mod forms;
