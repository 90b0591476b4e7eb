//! Multi-party secure inference over Shamir secret shares.

pub mod codec;
pub mod field;
pub mod layers;
pub mod model;
pub mod protocol;
pub mod sss;
