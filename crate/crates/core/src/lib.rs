//! Dual averaging under delayed, asynchronous and multi-agent feedback.
//!
//! The crate simulates online convex optimization where the feedback of each
//! round reaches the learner (or each agent of a network) after an arbitrary
//! delay, and checks the resulting regret against closed-form bounds.
//!
//! * [`geometry`]: regularizers, mirror maps and norm pairs.
//! * [`losses`]: loss oracles and sequences.
//! * [`schedule`]: timelines, availability sets and delay measures.
//! * [`dda`]: delayed dual averaging with its learning-rate policies.
//! * [`decentralized`]: many simultaneously active agents.
//! * [`optimistic`]: the optimistic variant and adversarial sequences.
//! * [`harness`]: scenario files, reports and experiment suites.

pub mod bounds;
pub mod dda;
pub mod decentralized;
pub mod error;
pub mod geometry;
pub mod harness;
pub mod losses;
pub mod optimistic;
pub mod rng;
pub mod schedule;

pub use error::{Error, Result};
