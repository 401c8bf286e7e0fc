//! Toolkit for scene-grounded code generation experiments with Unity goal
//! patterns: extract a runtime-evidence IR from scene YAML, render prompt
//! configurations from shared templates, drive a generation backend, compile
//! the result under a watchdog, classify compiler errors, and aggregate the
//! outcomes into reports.

pub mod backend;
pub mod cli;
pub mod extract;
pub mod harness;
pub mod ir;
pub mod metrics;
pub mod prompt;
pub mod records;
pub mod runner;
pub mod scene;
pub mod taxonomy;
