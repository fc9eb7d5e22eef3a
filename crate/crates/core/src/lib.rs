//! Stochastic dynamic economic dispatch with storage (SDED-S).
//!
//! The crate builds a two-stage stochastic economic dispatch over a DC
//! network as one extensive-form MILP: first-stage generator/battery
//! dispatch against forecasts, plus probability-weighted recourse
//! (regulation, battery redispatch, curtailment) for every scenario.
//!
//! Pipeline: [`grid`] loads and transforms the power-system case,
//! [`scenarios`] turns percentile forecasts into a weighted scenario
//! set, [`formulation`] assembles the MILP and verifies solutions,
//! [`milp`] solves it (in-tree simplex + branch-and-bound, or an
//! external backend via MPS), and [`experiments`] runs the BESS-size ×
//! wind-penetration sweeps. [`cli`] wires the pieces into reproducible
//! config-driven runs.

#![allow(clippy::neg_cmp_op_on_partial_ord)] // negated comparisons reject NaN

pub mod cli;
pub mod experiments;
pub mod formulation;
pub mod grid;
pub mod milp;
pub mod scenarios;
