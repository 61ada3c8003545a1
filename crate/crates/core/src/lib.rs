//! Planning and simulation for device-edge co-inference.
//!
//! A DNN is modelled as an ordered layer profile that can be cut at any
//! boundary: the prefix runs on a constrained device, the intermediate
//! feature crosses a link, and the suffix runs on an edge server. The crate
//! prunes the on-device prefix with magnitude-based structured channel
//! pruning, shrinks the transmitted feature with a linear reducer plus a
//! learned scalar codebook, models AWGN / BSC / fixed-rate links, and
//! searches (split, sparsity, codec) grids for latency-optimal deployments.

pub mod channel;
pub mod codec;
pub mod error;
pub mod planner;
pub mod profile;
pub mod pruning;
pub mod rng;
pub mod tensor_io;

pub use error::{Error, Result};
