//! Secure layer operations, mask generation, scheduling and communication estimates.

mod comm;
mod kernels;
mod masks;
mod ops;
mod schedule;

pub use comm::{comm_estimate, estimate_op, estimate_schedule, CommEstimate};
pub use kernels::Geometry;
pub use masks::{
    additive_mask_range, gen_additive_mask, gen_multiplicative_mask, pool_block_index,
    AdditiveMask, MultiplicativeMask, ADDITIVE_MASK_LIMIT,
};
pub use ops::{apply_nonlinear, sss_linear, sss_nonlinear, sss_truncation};
pub use schedule::{
    plan_schedule, truncated_mask_max, OpKind, Ordering, PoolOp, Schedule, ScheduledOp,
    ACTIVATION_BITS,
};

use thiserror::Error;

use crate::field::FieldError;
use crate::model::ModelError;

#[derive(Debug, Error)]
pub enum LayerError {
    #[error("unsupported: {0}")]
    Unsupported(String),
    #[error("empty mask space: {0}")]
    EmptyMaskSpace(String),
    #[error("shape error: {0}")]
    Shape(String),
    #[error(transparent)]
    Field(#[from] FieldError),
    #[error(transparent)]
    Model(#[from] ModelError),
}
