//! MiniStone: a two-stage card game engine together with the self-play
//! training stack built around it.

pub mod engine;
pub mod evalharness;
pub mod learner;
pub mod matchsvc;
pub mod obsact;
pub mod osfp;
pub mod pipeline;
pub mod policy;
pub mod testkit;
