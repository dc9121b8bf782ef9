//! Semi-open queueing networks with backordering.
//!
//! A fixed pool of `N` resources (node 0) serves a Poisson stream of
//! customers; each admitted customer takes one resource through an inner
//! network of `J` nodes. Customers finding the pool empty wait in an external
//! FCFS queue. The crate computes stability limits, throughputs and idle
//! probabilities exactly, approximates the external queue through a Norton
//! reduction of the inner network, and sizes robot fleets for robotic mobile
//! fulfilment systems.

// Node ids double as vector indices throughout.
#![allow(clippy::needless_range_loop)]

pub mod error;
pub mod gnsolver;
pub mod instances;
pub mod netmodel;
pub mod oracle;
pub mod reduced;
pub mod report;
pub mod rmfs;
pub mod sim;
pub mod soqn;

pub use error::{Error, Result};
pub use gnsolver::{mva_closed, norm_constants, th0_profile, MvaResult, NormConstantTable};
pub use netmodel::{
    solve_traffic, stability_routing, Discipline, InnerNode, RateFunction, RoutingMatrix, SoqnModel, TrafficSolution,
    ValidatedModel,
};
pub use rmfs::{build_rmfs_model, RmfsParams, RmfsRecord, RmfsSizer, SizingReport};
pub use soqn::{adjust_lambda_lc, is_stable, lambda_bo_max, AdjustmentResult, StabilityVerdict};
