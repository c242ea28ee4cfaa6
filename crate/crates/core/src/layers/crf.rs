//! Linear-chain CRF over `L` labels with explicit start and end states.
//!
//! The transition matrix is `(L+2) × (L+2)`: rows/columns `0..L` are real
//! labels, `L` is start and `L+1` is end. Only `T[start, j]`, `T[i, j]` and
//! `T[i, end]` take part in a path score.

use super::{LayerError, SeqScores};
use crate::numerics::{logsumexp, Mat};

#[derive(Debug, Clone, PartialEq)]
pub struct CrfParams {
    pub transitions: Mat,
}

impl CrfParams {
    pub fn zeros(num_labels: usize) -> Self {
        CrfParams {
            transitions: Mat::zeros(num_labels + 2, num_labels + 2),
        }
    }

    pub fn from_matrix(transitions: Mat) -> Result<Self, LayerError> {
        if transitions.rows() != transitions.cols() || transitions.rows() < 3 {
            return Err(LayerError::Dimension(format!(
                "transition matrix must be square with at least one label, got {:?}",
                transitions.shape()
            )));
        }
        Ok(CrfParams { transitions })
    }

    pub fn num_labels(&self) -> usize {
        self.transitions.rows() - 2
    }

    pub fn start(&self) -> usize {
        self.num_labels()
    }

    pub fn end(&self) -> usize {
        self.num_labels() + 1
    }

    #[inline]
    fn t(&self, from: usize, to: usize) -> f64 {
        self.transitions.get(from, to)
    }
}

fn check_shapes(scores: &SeqScores, crf: &CrfParams) -> Result<(), LayerError> {
    if scores.num_labels() != crf.num_labels() {
        return Err(LayerError::Dimension(format!(
            "{} emission labels vs {} transition labels",
            scores.num_labels(),
            crf.num_labels()
        )));
    }
    Ok(())
}

fn check_labels(labels: &[usize], scores: &SeqScores) -> Result<(), LayerError> {
    if labels.len() != scores.len() {
        return Err(LayerError::Dimension(format!(
            "{} labels for a sequence of length {}",
            labels.len(),
            scores.len()
        )));
    }
    let l = scores.num_labels();
    match labels.iter().find(|&&p| p >= l) {
        Some(&label) => Err(LayerError::LabelOutOfRange {
            label,
            num_labels: l,
        }),
        None => Ok(()),
    }
}

/// Global path score: emissions plus start, inner and end transitions.
pub fn crf_score(scores: &SeqScores, crf: &CrfParams, labels: &[usize]) -> Result<f64, LayerError> {
    check_shapes(scores, crf)?;
    check_labels(labels, scores)?;
    let n = labels.len();
    let mut s = crf.t(crf.start(), labels[0]);
    for (k, &p) in labels.iter().enumerate() {
        s += scores.get(p, k);
        if k + 1 < n {
            s += crf.t(p, labels[k + 1]);
        }
    }
    s += crf.t(labels[n - 1], crf.end());
    Ok(s)
}

/// Forward log-messages `alpha[k][j]`: log-sum of all prefixes ending in `j` at `k`.
fn forward_messages(scores: &SeqScores, crf: &CrfParams) -> Vec<Vec<f64>> {
    let l = crf.num_labels();
    let n = scores.len();
    let mut alpha = Vec::with_capacity(n);
    alpha.push(
        (0..l)
            .map(|j| crf.t(crf.start(), j) + scores.get(j, 0))
            .collect::<Vec<_>>(),
    );
    let mut buf = vec![0.0; l];
    for k in 1..n {
        let prev = &alpha[k - 1];
        let cur: Vec<f64> = (0..l)
            .map(|j| {
                for (i, b) in buf.iter_mut().enumerate() {
                    *b = prev[i] + crf.t(i, j);
                }
                logsumexp(&buf) + scores.get(j, k)
            })
            .collect();
        alpha.push(cur);
    }
    alpha
}

/// Backward log-messages `beta[k][i]`: log-sum of all suffixes after label `i` at `k`.
fn backward_messages(scores: &SeqScores, crf: &CrfParams) -> Vec<Vec<f64>> {
    let l = crf.num_labels();
    let n = scores.len();
    let mut beta = vec![Vec::new(); n];
    beta[n - 1] = (0..l).map(|i| crf.t(i, crf.end())).collect();
    let mut buf = vec![0.0; l];
    for k in (0..n - 1).rev() {
        let next = beta[k + 1].clone();
        beta[k] = (0..l)
            .map(|i| {
                for (j, b) in buf.iter_mut().enumerate() {
                    *b = crf.t(i, j) + scores.get(j, k + 1) + next[j];
                }
                logsumexp(&buf)
            })
            .collect();
    }
    beta
}

fn log_partition_from(alpha: &[Vec<f64>], crf: &CrfParams) -> f64 {
    let last = alpha.last().expect("non-empty sequence");
    let ends: Vec<f64> = last
        .iter()
        .enumerate()
        .map(|(j, a)| a + crf.t(j, crf.end()))
        .collect();
    logsumexp(&ends)
}

/// `log Σ_paths exp(score)` by the forward algorithm.
pub fn crf_log_partition(scores: &SeqScores, crf: &CrfParams) -> Result<f64, LayerError> {
    check_shapes(scores, crf)?;
    let alpha = forward_messages(scores, crf);
    Ok(log_partition_from(&alpha, crf))
}

/// Best labeling and its score. Ties go to the lowest label index at every
/// backtracking step.
pub fn crf_viterbi(scores: &SeqScores, crf: &CrfParams) -> Result<(Vec<usize>, f64), LayerError> {
    check_shapes(scores, crf)?;
    let l = crf.num_labels();
    let n = scores.len();
    let mut delta: Vec<f64> = (0..l)
        .map(|j| crf.t(crf.start(), j) + scores.get(j, 0))
        .collect();
    let mut back: Vec<Vec<usize>> = Vec::with_capacity(n);
    for k in 1..n {
        let mut next = vec![0.0; l];
        let mut ptr = vec![0; l];
        for j in 0..l {
            let mut best_i = 0;
            let mut best = delta[0] + crf.t(0, j);
            for (i, d) in delta.iter().enumerate().skip(1) {
                let cand = d + crf.t(i, j);
                if cand > best {
                    best = cand;
                    best_i = i;
                }
            }
            next[j] = best + scores.get(j, k);
            ptr[j] = best_i;
        }
        back.push(ptr);
        delta = next;
    }
    let mut last = 0;
    let mut best = delta[0] + crf.t(0, crf.end());
    for (j, d) in delta.iter().enumerate().skip(1) {
        let cand = d + crf.t(j, crf.end());
        if cand > best {
            best = cand;
            last = j;
        }
    }
    let mut path = vec![last; n];
    for k in (1..n).rev() {
        path[k - 1] = back[k - 1][path[k]];
    }
    Ok((path, best))
}

#[derive(Debug, Clone)]
pub struct CrfGrad {
    pub nll: f64,
    /// `dNLL/dY`, `L × n`.
    pub d_scores: Mat,
    /// `dNLL/dT`, `(L+2) × (L+2)`.
    pub d_transitions: Mat,
}

/// Negative log-likelihood `logZ - S(gold)` and its gradients, using
/// forward-backward marginals.
pub fn crf_nll_backward(
    scores: &SeqScores,
    crf: &CrfParams,
    gold: &[usize],
) -> Result<CrfGrad, LayerError> {
    let gold_score = crf_score(scores, crf, gold)?;
    let l = crf.num_labels();
    let n = scores.len();
    let alpha = forward_messages(scores, crf);
    let beta = backward_messages(scores, crf);
    let log_z = log_partition_from(&alpha, crf);

    let mut d_scores = Mat::zeros(l, n);
    let mut d_t = Mat::zeros(l + 2, l + 2);
    for k in 0..n {
        for j in 0..l {
            let marginal = (alpha[k][j] + beta[k][j] - log_z).exp();
            d_scores.set(j, k, marginal);
            if k == 0 {
                d_t.add_at(crf.start(), j, marginal);
            }
            if k == n - 1 {
                d_t.add_at(j, crf.end(), marginal);
            }
        }
        if k + 1 < n {
            for i in 0..l {
                for j in 0..l {
                    let pair = (alpha[k][i] + crf.t(i, j) + scores.get(j, k + 1) + beta[k + 1][j]
                        - log_z)
                        .exp();
                    d_t.add_at(i, j, pair);
                }
            }
        }
    }
    for (k, &g) in gold.iter().enumerate() {
        d_scores.add_at(g, k, -1.0);
        if k + 1 < n {
            d_t.add_at(g, gold[k + 1], -1.0);
        }
    }
    d_t.add_at(crf.start(), gold[0], -1.0);
    d_t.add_at(gold[n - 1], crf.end(), -1.0);

    Ok(CrfGrad {
        nll: (log_z - gold_score).max(0.0),
        d_scores,
        d_transitions: d_t,
    })
}
