//! Bit-level coding: arithmetic coder, program prior, container format,
//! DEFLATE cost oracle and probability-model compression.

pub mod arith;
pub mod bits;
pub mod container;
pub mod deflate;
pub mod lm;
pub mod program;

pub use bits::Bitstream;
pub use container::{
    compress_container, container_overhead_bits, decompress_container, ContainerError,
};
pub use deflate::{deflate_compress, deflate_cost, deflate_decompress, DEFLATE_LEVEL};
pub use lm::{
    lm_compress, lm_decompress, model_information, AdaptiveContextModel, ExternalLogProbModel,
    ProbabilityModel, LM_HEADER_BITS,
};
pub use program::{decode_program, encode_program, program_bit_cost, CostError, PriorCostModel};

/// Failure to decode any of the codec's stream formats.
#[derive(Clone, Debug, PartialEq, Eq, thiserror::Error)]
pub enum DecodeError {
    #[error("empty stream")]
    Empty,
    #[error("stream is truncated")]
    Truncated,
    #[error("corrupt stream: {0}")]
    Corrupt(String),
    #[error("bad header: {0}")]
    BadHeader(String),
    #[error("stream was produced by a different model (expected fingerprint {expected:08x}, found {found:08x})")]
    ModelMismatch { expected: u32, found: u32 },
}
