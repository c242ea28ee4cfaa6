use std::collections::BTreeMap;

use rand::Rng;

use super::LayerError;
use crate::numerics::Mat;

/// Token embedding matrix of shape `d × v`, one column per vocabulary entry.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingParams {
    pub matrix: Mat,
    pub trainable: bool,
    pub oov_index: usize,
}

impl EmbeddingParams {
    pub fn zeros(dim: usize, vocab_size: usize, oov_index: usize, trainable: bool) -> Self {
        EmbeddingParams {
            matrix: Mat::zeros(dim, vocab_size),
            trainable,
            oov_index,
        }
    }

    /// Uniform on `[-sqrt(3/d), sqrt(3/d)]` (unit expected squared norm), OOV column zero.
    pub fn random<R: Rng + ?Sized>(
        dim: usize,
        vocab_size: usize,
        oov_index: usize,
        trainable: bool,
        rng: &mut R,
    ) -> Self {
        let bound = (3.0 / dim.max(1) as f64).sqrt();
        let mut matrix = Mat::uniform(dim, vocab_size, bound, rng);
        if oov_index < vocab_size {
            matrix.set_column(oov_index, &vec![0.0; dim]);
        }
        EmbeddingParams {
            matrix,
            trainable,
            oov_index,
        }
    }

    pub fn dim(&self) -> usize {
        self.matrix.rows()
    }

    pub fn vocab_size(&self) -> usize {
        self.matrix.cols()
    }
}

pub fn embed(params: &EmbeddingParams, token_indices: &[usize]) -> Result<Vec<Vec<f64>>, LayerError> {
    let v = params.vocab_size();
    token_indices
        .iter()
        .map(|&ix| {
            if ix >= v {
                Err(LayerError::IndexOutOfRange { index: ix, size: v })
            } else {
                Ok(params.matrix.column(ix))
            }
        })
        .collect()
}

/// Per-column embedding gradients, ordered by column index.
pub type SparseColumns = BTreeMap<usize, Vec<f64>>;

/// Scatter upstream gradients back onto the embedding columns they came from.
/// The OOV column is pinned at zero and receives no gradient.
pub fn embed_backward(
    params: &EmbeddingParams,
    token_indices: &[usize],
    upstream: &[Vec<f64>],
    grads: &mut SparseColumns,
) -> Result<(), LayerError> {
    if token_indices.len() != upstream.len() {
        return Err(LayerError::Dimension(format!(
            "{} tokens but {} upstream gradients",
            token_indices.len(),
            upstream.len()
        )));
    }
    let d = params.dim();
    for (&ix, g) in token_indices.iter().zip(upstream) {
        if g.len() != d {
            return Err(LayerError::Dimension(format!(
                "upstream gradient of length {} for embedding dim {d}",
                g.len()
            )));
        }
        if ix == params.oov_index {
            continue;
        }
        let col = grads.entry(ix).or_insert_with(|| vec![0.0; d]);
        for (c, v) in col.iter_mut().zip(g) {
            *c += v;
        }
    }
    Ok(())
}

/// All-ones `d`-vector for a cue token, all-zeros otherwise.
pub fn cue_embed(cue_bit: u8, d: usize) -> Vec<f64> {
    debug_assert!(cue_bit <= 1);
    vec![if cue_bit == 0 { 0.0 } else { 1.0 }; d]
}

#[cfg(test)]
mod tests {
    use super::*;

    fn one_hot(d: usize, v: usize) -> EmbeddingParams {
        let mut p = EmbeddingParams::zeros(d, v, 0, false);
        for c in 1..v.min(d + 1) {
            p.matrix.set(c - 1, c, 1.0);
        }
        p
    }

    #[test]
    fn oov_is_zero_vector() {
        let mut rng = rand::thread_rng();
        let p = EmbeddingParams::random(5, 4, 0, true, &mut rng);
        assert_eq!(embed(&p, &[0]).unwrap()[0], vec![0.0; 5]);
    }

    #[test]
    fn one_hot_lookup_and_repeats() {
        let p = one_hot(3, 4);
        let out = embed(&p, &[2, 3, 2]).unwrap();
        assert_eq!(out[0], vec![0.0, 1.0, 0.0]);
        assert_eq!(out[1], vec![0.0, 0.0, 1.0]);
        assert_eq!(out[0], out[2]);
    }

    #[test]
    fn out_of_range_index_is_an_error() {
        let p = one_hot(3, 4);
        assert_eq!(
            embed(&p, &[4]),
            Err(LayerError::IndexOutOfRange { index: 4, size: 4 })
        );
    }

    #[test]
    fn cue_embedding() {
        assert_eq!(cue_embed(1, 3), vec![1.0; 3]);
        assert_eq!(cue_embed(0, 3), vec![0.0; 3]);
        assert_eq!(cue_embed(1, 200).iter().sum::<f64>(), 200.0);
    }

    #[test]
    fn backward_scatters_and_skips_oov() {
        let p = one_hot(2, 4);
        let mut g = SparseColumns::new();
        embed_backward(&p, &[1, 0, 1], &[vec![1.0, 2.0], vec![5.0, 5.0], vec![0.5, 0.5]], &mut g)
            .unwrap();
        assert_eq!(g.len(), 1);
        assert_eq!(g[&1], vec![1.5, 2.5]);
    }
}
