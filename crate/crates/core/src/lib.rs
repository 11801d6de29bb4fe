//! Traffic-rule driven test generation for automated driving systems.
//!
//! The pipeline turns a natural-language traffic rule into a functional
//! scenario document ([`dsl`]) through a staged chat-completion protocol
//! ([`rule_parser`]), compiles that document onto a lane-level map
//! ([`map`], [`scenario`]), runs the result in a fixed-step kinematic
//! simulator against an agent ([`sim`]) and checks the trace for rule
//! violations, collisions and timeouts ([`monitor`]). [`metrics`] holds the
//! parsing-accuracy and inter-rater agreement arithmetic.

pub mod dsl;
pub mod geometry;
pub mod map;
pub mod metrics;
pub mod monitor;
pub mod rule_parser;
pub mod scenario;
pub mod sim;
