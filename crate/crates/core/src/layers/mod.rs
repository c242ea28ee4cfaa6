//! Forward and backward passes for every layer of the taggers.
//!
//! Backprop is written by hand per layer. Each `*_backward` accumulates
//! parameter gradients into a caller-owned zeroed parameter set of the same
//! shape, and returns gradients with respect to its inputs.

mod crf;
mod dense;
mod embedding;
mod lstm;

pub use crf::{
    crf_log_partition, crf_nll_backward, crf_score, crf_viterbi, CrfGrad, CrfParams,
};
pub use dense::{dense_backward, dense_forward, DenseParams, SeqScores};
pub use embedding::{cue_embed, embed, embed_backward, EmbeddingParams, SparseColumns};
pub use lstm::{
    bilstm_backward, bilstm_forward, lstm_backward, lstm_forward, BiLstmCache, Gate,
    LstmCache, LstmInputGrads, LstmParams, StepCache, GATES,
};

use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum LayerError {
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("index {index} out of range for vocabulary of size {size}")]
    IndexOutOfRange { index: usize, size: usize },
    #[error("label {label} out of range for {num_labels} labels")]
    LabelOutOfRange { label: usize, num_labels: usize },
    #[error("sequence length mismatch: {0} inputs vs {1} auxiliary inputs")]
    AuxLength(usize, usize),
    #[error("auxiliary inputs must be given iff the cell has cue weights")]
    AuxPresence,
    #[error("empty sequence")]
    Empty,
}
