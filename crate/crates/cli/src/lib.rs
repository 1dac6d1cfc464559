//! Experiment driver for the classification pipeline in `fafcnn-core`.
//!
//! The binary exposes one subcommand per experiment step (prepare, train,
//! eval, sweep, ablate, heatmap, audit). Everything is configured through an
//! optional TOML or JSON file plus command-line overrides; see
//! [`config::resolve`] for the precedence rules.

pub mod commands;
pub mod config;
pub mod variants;
