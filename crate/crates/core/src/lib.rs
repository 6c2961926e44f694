//! Worst-case performance estimation for fixed-step first-order methods on
//! smooth convex functions.
pub mod bounds;
pub mod error;
pub mod minors;
pub mod pep;
pub mod schedule;
pub mod sdp;
pub mod simulate;
pub mod stepopt;

pub use error::{Error, Result};
