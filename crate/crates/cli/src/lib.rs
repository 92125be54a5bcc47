//! Config-driven experiment runner for penalty-method reflected diffusions.
//!
//! One JSON file describes an experiment: domain, coefficients, reflection
//! field, penalty family and n-grid, integrator and reference settings, the
//! diagnostics battery and the output location. The three commands are
//! [`commands::certify`], [`commands::converge`] and [`commands::paths`].

pub mod commands;
pub mod config;
pub mod experiment;
pub mod output;
