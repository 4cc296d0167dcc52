//! Online strategic classification on manipulation graphs.
//!
//! Agents sit at nodes of a directed manipulation graph and may report any
//! out-neighbor to obtain a positive label. This crate computes the strategic
//! Littlestone dimension of finite hypothesis classes, implements the
//! optimal deterministic learner (SSOA) and the expert-based agnostic
//! learners, constructs worst-case adversaries, and runs the repeated game.

pub mod adversary;
pub mod agnostic;
pub mod dimension;
pub mod error;
pub mod graph;
pub mod hypothesis;
pub mod learners;
pub mod mask;
pub mod protocol;

pub use error::{Error, Result};
pub use graph::{GraphClass, ManipulationGraph, NodeId};
pub use hypothesis::{HypothesisClass, Label, Labeling, Observation, TieBreak, VersionSpace};
