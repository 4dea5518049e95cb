//! Two-keyframe motion in-betweening with a pair of autoregressive
//! conditional VAEs (one rolling forward from the start pose, one rolling
//! backward from the end pose) whose outputs are stitched in the middle of
//! the transition.

pub mod error;
pub mod bvh;
pub mod cache;
pub mod motion;
pub mod slerp;
pub mod stitcher;
pub mod dataset;
pub mod losses;
pub mod metrics;
pub mod nn;
pub mod plot;
pub mod scvae;
pub mod tensor;
pub mod trainer;

pub use error::{Error, Result};
