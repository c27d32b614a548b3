//! Cost-sensitive deep learning: SOSR regression networks, cost-aware
//! auto-encoder pre-training, and the experiment harness around them.

pub mod cost;
pub mod data;
pub mod eval;
pub mod experiment;
pub mod linalg;
pub mod losses;
pub mod nn;
pub mod par;
pub mod pretrain;
pub mod rng;
pub mod train;
