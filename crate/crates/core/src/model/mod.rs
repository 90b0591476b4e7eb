//! Quantized tensors, the model container, the plaintext reference engine and share files.

mod graph;
mod plaintext;
mod reference;
mod shares;
mod tensor;

pub use graph::{
    Layer, LayerSpec, LinearKind, LinearLayer, ModelGraph, Skeleton, MAX_BIAS_MAGNITUDE,
};
pub use plaintext::{
    block_sums, plaintext_infer, plaintext_run, plaintext_trace, round_half_up_div, PlaintextTrace,
};
pub use reference::{
    reference_avgpool_model, reference_lenet, FloatLayer, FloatModel, REFERENCE_INPUT_SCALE,
    REFERENCE_WEIGHT_SCALE,
};
pub use shares::{share_model, LinearShares, PartyModelShares};
pub use tensor::{argmax_i64, quantize, QuantizedTensor, QUANT_MAX};

use thiserror::Error;

use crate::codec::CodecError;
use crate::sss::SssError;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("shape error: {0}")]
    Shape(String),
    #[error("invalid model: {0}")]
    Invalid(String),
    #[error("unsupported layer sequence: {0}")]
    Unsupported(String),
    #[error("activation {0} leaves the 16-bit range")]
    ActivationOverflow(i64),
    #[error("accumulation fan-in {fan_in} exceeds the 2^13 budget")]
    FanIn { fan_in: usize },
    #[error(transparent)]
    Codec(#[from] CodecError),
    #[error(transparent)]
    Sss(#[from] SssError),
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
}
