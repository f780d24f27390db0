//! Hierarchical Bayesian inverse planning for gridworld agents.
//!
//! An observer watches an agent over several trials, infers its goal
//! preferences and efficiency, and rates how plausible a final test trial is.

pub mod episodes;
pub mod gridworld;
pub mod harness;
pub mod inference;
pub mod planner;
pub mod surprise;
