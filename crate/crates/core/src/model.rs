//! The sequence taggers: embedding → (optional BiLSTM) → dense scores →
//! softmax or CRF head, with a single analytic backward pass.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use thiserror::Error;

use crate::labeling::{CueTag, ScopeTag, Tag};
use crate::layers::{
    bilstm_backward, bilstm_forward, crf_nll_backward, crf_viterbi, cue_embed, dense_backward,
    dense_forward, embed, embed_backward, BiLstmCache, CrfParams, DenseParams, EmbeddingParams,
    LayerError, LstmParams, SeqScores, SparseColumns,
};
use crate::numerics::{add_slices, argmax, softmax_probs, Mat};

/// Probabilities below this are clamped before taking the log.
pub const PROB_FLOOR: f64 = 1e-12;

#[derive(Debug, Error, PartialEq)]
pub enum ModelError {
    #[error(transparent)]
    Layer(#[from] LayerError),
    #[error("scope tagging needs a cue vector of the sentence length ({expected}), got {found}")]
    CueVector { expected: usize, found: usize },
    #[error("{labels} gold labels for a sequence of {tokens} tokens")]
    GoldLength { labels: usize, tokens: usize },
    #[error("embedding has dimension {found}, model expects {expected}")]
    EmbeddingShape { expected: usize, found: usize },
    #[error("empty sequence")]
    Empty,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Task {
    Cue,
    Scope,
}

impl Task {
    pub fn num_labels(self) -> usize {
        match self {
            Task::Cue => CueTag::ALL.len(),
            Task::Scope => ScopeTag::ALL.len(),
        }
    }

    pub fn label_names(self) -> Vec<&'static str> {
        match self {
            Task::Cue => CueTag::ALL.iter().map(|t| t.as_str()).collect(),
            Task::Scope => ScopeTag::ALL.iter().map(|t| t.as_str()).collect(),
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Task::Cue => "cue",
            Task::Scope => "scope",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Encoder {
    /// Embeddings straight into the dense head.
    Embedding,
    BiLstm,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Head {
    Softmax,
    Crf,
}

macro_rules! text_enum {
    ($t:ty { $($v:ident => $s:literal),+ }) => {
        impl fmt::Display for $t {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(match self { $(Self::$v => $s),+ })
            }
        }

        impl FromStr for $t {
            type Err = String;

            fn from_str(s: &str) -> Result<Self, String> {
                match s {
                    $($s => Ok(Self::$v),)+
                    other => Err(format!("unknown value {other:?}")),
                }
            }
        }
    };
}

text_enum!(Task { Cue => "cue", Scope => "scope" });
text_enum!(Encoder { Embedding => "embedding", BiLstm => "bilstm" });
text_enum!(Head { Softmax => "softmax", Crf => "crf" });

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ModelSpec {
    pub task: Task,
    pub encoder: Encoder,
    pub head: Head,
    /// Embedding dimension `d`.
    pub dim: usize,
    /// LSTM units per direction `U`.
    pub units: usize,
}

impl ModelSpec {
    pub fn num_labels(&self) -> usize {
        self.task.num_labels()
    }

    /// Scope taggers take the cue vector as a second LSTM input.
    pub fn two_input(&self) -> bool {
        self.task == Task::Scope
    }

    fn dense_width(&self) -> usize {
        match self.encoder {
            Encoder::Embedding => self.dim,
            Encoder::BiLstm => 2 * self.units,
        }
    }
}

/// Every trainable tensor except the embedding matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    pub forward: Option<LstmParams>,
    pub backward: Option<LstmParams>,
    pub dense: DenseParams,
    pub crf: Option<CrfParams>,
}

impl Network {
    pub fn random<R: Rng + ?Sized>(spec: &ModelSpec, rng: &mut R) -> Self {
        let (forward, backward) = match spec.encoder {
            Encoder::BiLstm => (
                Some(LstmParams::random(spec.units, spec.dim, spec.two_input(), rng)),
                Some(LstmParams::random(spec.units, spec.dim, spec.two_input(), rng)),
            ),
            Encoder::Embedding => (None, None),
        };
        Network {
            forward,
            backward,
            dense: DenseParams::random(spec.num_labels(), spec.dense_width(), rng),
            crf: (spec.head == Head::Crf).then(|| CrfParams::zeros(spec.num_labels())),
        }
    }

    pub fn zeros(spec: &ModelSpec) -> Self {
        let lstm = || (spec.encoder == Encoder::BiLstm)
            .then(|| LstmParams::zeros(spec.units, spec.dim, spec.two_input()));
        Network {
            forward: lstm(),
            backward: lstm(),
            dense: DenseParams::zeros(spec.num_labels(), spec.dense_width()),
            crf: (spec.head == Head::Crf).then(|| CrfParams::zeros(spec.num_labels())),
        }
    }

    pub fn zeros_like(&self) -> Self {
        Network {
            forward: self.forward.as_ref().map(LstmParams::zeros_like),
            backward: self.backward.as_ref().map(LstmParams::zeros_like),
            dense: DenseParams::zeros(self.dense.num_labels(), self.dense.input_width()),
            crf: self.crf.as_ref().map(|c| CrfParams::zeros(c.num_labels())),
        }
    }

    /// `(name, rows, cols, data)` for every tensor, in a fixed order.
    pub fn named_tensors(&self) -> Vec<(String, usize, usize, &[f64])> {
        let mut out = Vec::new();
        for (prefix, lstm) in [("forward", &self.forward), ("backward", &self.backward)] {
            if let Some(p) = lstm {
                for (name, r, c, s) in p.named_slices() {
                    out.push((format!("{prefix}.{name}"), r, c, s));
                }
            }
        }
        let w = &self.dense.weights;
        out.push(("dense.w".into(), w.rows(), w.cols(), w.data()));
        out.push(("dense.b".into(), 1, self.dense.bias.len(), &self.dense.bias[..]));
        if let Some(crf) = &self.crf {
            let t = &crf.transitions;
            out.push(("crf.transitions".into(), t.rows(), t.cols(), t.data()));
        }
        out
    }

    pub fn slices(&self) -> Vec<&[f64]> {
        self.named_tensors().into_iter().map(|t| t.3).collect()
    }

    /// Mutable views in [`Network::named_tensors`] order.
    pub fn slices_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out = Vec::new();
        if let Some(p) = self.forward.as_mut() {
            out.extend(p.slices_mut());
        }
        if let Some(p) = self.backward.as_mut() {
            out.extend(p.slices_mut());
        }
        out.extend(self.dense.slices_mut());
        if let Some(c) = self.crf.as_mut() {
            out.push(c.transitions.data_mut());
        }
        out
    }

    pub fn add_assign(&mut self, other: &Network) {
        for (a, b) in self.slices_mut().into_iter().zip(other.slices()) {
            add_slices(a, b);
        }
    }

    pub fn scale(&mut self, factor: f64) {
        for s in self.slices_mut() {
            s.iter_mut().for_each(|v| *v *= factor);
        }
    }

    pub fn is_finite(&self) -> bool {
        self.slices().iter().all(|s| s.iter().all(|v| v.is_finite()))
    }
}

/// Gradients of a loss with respect to every parameter of a [`Tagger`].
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub embedding: SparseColumns,
    pub net: Network,
}

impl Gradients {
    pub fn zeros_for(tagger: &Tagger) -> Self {
        Gradients {
            embedding: SparseColumns::new(),
            net: tagger.net.zeros_like(),
        }
    }

    pub fn add_assign(&mut self, other: &Gradients) {
        self.net.add_assign(&other.net);
        for (col, g) in &other.embedding {
            let dst = self
                .embedding
                .entry(*col)
                .or_insert_with(|| vec![0.0; g.len()]);
            add_slices(dst, g);
        }
    }

    pub fn scale(&mut self, factor: f64) {
        self.net.scale(factor);
        for g in self.embedding.values_mut() {
            g.iter_mut().for_each(|v| *v *= factor);
        }
    }

    /// Dense row-major `d × v` embedding gradient.
    pub fn dense_embedding(&self, dim: usize, vocab_size: usize) -> Vec<f64> {
        let mut out = vec![0.0; dim * vocab_size];
        for (&col, g) in &self.embedding {
            for (r, v) in g.iter().enumerate() {
                out[r * vocab_size + col] = *v;
            }
        }
        out
    }

    pub fn is_finite(&self) -> bool {
        self.net.is_finite() && self.embedding.values().all(|g| g.iter().all(|v| v.is_finite()))
    }
}

/// One padded training or evaluation sequence. Real positions form a prefix
/// marked by `mask`; everything the model computes uses that prefix only.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Example {
    pub tokens: Vec<usize>,
    /// Cue bits; empty for cue tagging.
    pub cue: Vec<u8>,
    pub labels: Vec<usize>,
    pub mask: Vec<bool>,
}

impl Example {
    pub fn len(&self) -> usize {
        self.mask.iter().take_while(|&&m| m).count()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn tokens(&self) -> &[usize] {
        &self.tokens[..self.len()]
    }

    pub fn cue(&self) -> &[u8] {
        let n = self.len().min(self.cue.len());
        &self.cue[..n]
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels[..self.len()]
    }
}

struct ForwardCache {
    embedded: Vec<Vec<f64>>,
    encoded: Option<(Vec<Vec<f64>>, BiLstmCache)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Tagger {
    pub spec: ModelSpec,
    pub embedding: EmbeddingParams,
    pub net: Network,
}

impl Tagger {
    pub fn new<R: Rng + ?Sized>(
        spec: ModelSpec,
        embedding: EmbeddingParams,
        rng: &mut R,
    ) -> Result<Self, ModelError> {
        if embedding.dim() != spec.dim {
            return Err(ModelError::EmbeddingShape {
                expected: spec.dim,
                found: embedding.dim(),
            });
        }
        Ok(Tagger {
            net: Network::random(&spec, rng),
            spec,
            embedding,
        })
    }

    fn aux_inputs(&self, tokens: &[usize], cue: &[u8]) -> Result<Option<Vec<Vec<f64>>>, ModelError> {
        if !self.spec.two_input() {
            return Ok(None);
        }
        if cue.len() != tokens.len() {
            return Err(ModelError::CueVector {
                expected: tokens.len(),
                found: cue.len(),
            });
        }
        Ok(Some(cue.iter().map(|&b| cue_embed(b, self.spec.dim)).collect()))
    }

    fn forward(&self, tokens: &[usize], cue: &[u8]) -> Result<(SeqScores, ForwardCache), ModelError> {
        if tokens.is_empty() {
            return Err(ModelError::Empty);
        }
        let embedded = embed(&self.embedding, tokens)?;
        let aux = self.aux_inputs(tokens, cue)?;
        let encoded = match (&self.net.forward, &self.net.backward) {
            (Some(f), Some(b)) => Some(bilstm_forward(f, b, &embedded, aux.as_deref())?),
            _ => None,
        };
        let head_in = encoded.as_ref().map_or(&embedded, |(h, _)| h);
        let scores = dense_forward(&self.net.dense, head_in)?;
        Ok((scores, ForwardCache { embedded, encoded }))
    }

    /// Per-token label scores for an unpadded sequence.
    pub fn scores(&self, tokens: &[usize], cue: &[u8]) -> Result<SeqScores, ModelError> {
        Ok(self.forward(tokens, cue)?.0)
    }

    /// Label indices: per-token argmax for softmax, Viterbi path for CRF.
    pub fn predict(&self, tokens: &[usize], cue: &[u8]) -> Result<Vec<usize>, ModelError> {
        let scores = self.scores(tokens, cue)?;
        Ok(match &self.net.crf {
            Some(crf) => crf_viterbi(&scores, crf)?.0,
            None => (0..scores.len()).map(|k| argmax(&scores.at(k))).collect(),
        })
    }

    /// Summed loss over the real positions of `ex` (token NLLs for softmax,
    /// sequence NLL for CRF) and the number of positions.
    pub fn loss(&self, ex: &Example) -> Result<(f64, usize), ModelError> {
        let (scores, _) = self.forward(ex.tokens(), ex.cue())?;
        let gold = self.check_gold(ex)?;
        let loss = match &self.net.crf {
            Some(crf) => crf_nll_backward(&scores, crf, gold)?.nll,
            None => (0..scores.len())
                .map(|k| -softmax_probs(&scores.at(k))[gold[k]].max(PROB_FLOOR).ln())
                .sum(),
        };
        Ok((loss, gold.len()))
    }

    fn check_gold<'a>(&self, ex: &'a Example) -> Result<&'a [usize], ModelError> {
        let gold = ex.labels();
        if gold.len() != ex.len() {
            return Err(ModelError::GoldLength {
                labels: gold.len(),
                tokens: ex.len(),
            });
        }
        let l = self.spec.num_labels();
        if let Some(&label) = gold.iter().find(|&&g| g >= l) {
            return Err(LayerError::LabelOutOfRange {
                label,
                num_labels: l,
            }
            .into());
        }
        Ok(gold)
    }

    /// Loss as in [`Tagger::loss`] together with its exact gradient.
    pub fn loss_and_grad(&self, ex: &Example) -> Result<(f64, usize, Gradients), ModelError> {
        let tokens = ex.tokens();
        let (scores, cache) = self.forward(tokens, ex.cue())?;
        let gold = self.check_gold(ex)?;
        let mut grads = Gradients::zeros_for(self);
        let n = gold.len();
        let (loss, d_scores) = match &self.net.crf {
            Some(crf) => {
                let g = crf_nll_backward(&scores, crf, gold)?;
                if let Some(gc) = grads.net.crf.as_mut() {
                    gc.transitions.add_assign(&g.d_transitions);
                }
                (g.nll, g.d_scores)
            }
            None => {
                let mut d = Mat::zeros(self.spec.num_labels(), n);
                let mut loss = 0.0;
                for (k, &g) in gold.iter().enumerate() {
                    let p = softmax_probs(&scores.at(k));
                    loss -= p[g].max(PROB_FLOOR).ln();
                    for (j, pj) in p.iter().enumerate() {
                        d.set(j, k, pj - if j == g { 1.0 } else { 0.0 });
                    }
                }
                (loss, d)
            }
        };
        let head_in = cache.encoded.as_ref().map_or(&cache.embedded, |(h, _)| h);
        let d_head_in = dense_backward(&self.net.dense, head_in, &d_scores, &mut grads.net.dense)?;
        let d_embedded = match (&cache.encoded, &self.net.forward, &self.net.backward) {
            (Some((_, bicache)), Some(f), Some(b)) => {
                let gf = grads.net.forward.as_mut().expect("shape mirrors params");
                let gb = grads.net.backward.as_mut().expect("shape mirrors params");
                bilstm_backward(f, b, bicache, &d_head_in, gf, gb)?
            }
            _ => d_head_in,
        };
        if self.embedding.trainable {
            embed_backward(&self.embedding, tokens, &d_embedded, &mut grads.embedding)?;
        }
        Ok((loss, n, grads))
    }

    /// Trainable parameters flattened in a fixed order: the embedding matrix
    /// (when trainable) followed by the network tensors.
    pub fn flat_params(&self) -> Vec<f64> {
        let mut out = Vec::new();
        if self.embedding.trainable {
            out.extend_from_slice(self.embedding.matrix.data());
        }
        for s in self.net.slices() {
            out.extend_from_slice(s);
        }
        out
    }

    pub fn set_flat_params(&mut self, flat: &[f64]) {
        let mut off = 0;
        if self.embedding.trainable {
            let data = self.embedding.matrix.data_mut();
            data.copy_from_slice(&flat[..data.len()]);
            off = data.len();
        }
        for s in self.net.slices_mut() {
            let len = s.len();
            s.copy_from_slice(&flat[off..off + len]);
            off += len;
        }
        assert_eq!(off, flat.len(), "flat parameter length");
    }

    /// Gradients flattened to match [`Tagger::flat_params`].
    pub fn flatten_grads(&self, grads: &Gradients) -> Vec<f64> {
        let mut out = Vec::new();
        if self.embedding.trainable {
            out.extend(grads.dense_embedding(self.embedding.dim(), self.embedding.vocab_size()));
        }
        for s in grads.net.slices() {
            out.extend_from_slice(s);
        }
        out
    }
}
