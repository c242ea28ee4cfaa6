//! Losses, Adam, learning-rate schedule, early stopping and the training loop.

use log::info;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use thiserror::Error;

use crate::evaluation::TokenConfusion;
use crate::layers::{crf_log_partition, crf_score, CrfParams, LayerError, SeqScores};
use crate::model::{Example, Gradients, ModelError, Tagger, PROB_FLOOR};

pub const ADAM_BETA1: f64 = 0.9;
pub const ADAM_BETA2: f64 = 0.999;
pub const ADAM_EPS: f64 = 1e-8;

#[derive(Debug, Error)]
pub enum TrainError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("invalid training config: {0}")]
    Config(String),
    #[error("empty training set")]
    EmptyTrainingSet,
    #[error("non-finite gradient at step {step}, coordinate {index}")]
    NonFiniteGradient { step: u64, index: usize },
    #[error("training diverged in epoch {epoch}: {reason}")]
    Diverged {
        epoch: usize,
        reason: String,
        history: TrainHistory,
    },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DecaySchedule {
    /// `lr0 · factor^floor(epoch / every)`.
    Step { every: usize, factor: f64 },
    Constant,
}

impl Default for DecaySchedule {
    fn default() -> Self {
        DecaySchedule::Step {
            every: 10,
            factor: 0.5,
        }
    }
}

impl DecaySchedule {
    /// Learning rate for a 0-based epoch.
    pub fn rate(&self, epoch: usize, lr0: f64) -> f64 {
        match *self {
            DecaySchedule::Step { every, factor } => {
                lr0 * factor.powi((epoch / every.max(1)) as i32)
            }
            DecaySchedule::Constant => lr0,
        }
    }
}

/// Halves the rate every 10 epochs.
pub fn step_decay(epoch: usize, lr0: f64) -> f64 {
    DecaySchedule::default().rate(epoch, lr0)
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr0: f64,
    pub decay: DecaySchedule,
    pub early_stopping: bool,
    pub patience: usize,
    pub seed: u64,
    pub dim: usize,
    pub units: usize,
    pub embeddings_trainable: bool,
    pub max_len: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 30,
            batch_size: 32,
            lr0: 0.001,
            decay: DecaySchedule::default(),
            early_stopping: false,
            patience: 2,
            seed: 0,
            dim: 200,
            units: 200,
            embeddings_trainable: false,
            max_len: 100,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        let positive = [
            ("epochs", self.epochs),
            ("batch_size", self.batch_size),
            ("patience", self.patience),
            ("dim", self.dim),
            ("units", self.units),
            ("max_len", self.max_len),
        ];
        if let Some((name, _)) = positive.iter().find(|(_, v)| *v == 0) {
            return Err(TrainError::Config(format!("{name} must be positive")));
        }
        if !(self.lr0 > 0.0 && self.lr0.is_finite()) {
            return Err(TrainError::Config(format!("lr0 must be positive, got {}", self.lr0)));
        }
        if let DecaySchedule::Step { every, factor } = self.decay {
            if every == 0 || !(factor > 0.0 && factor <= 1.0) {
                return Err(TrainError::Config(format!(
                    "bad step decay: every {every}, factor {factor}"
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub step: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl AdamState {
    pub fn new(len: usize) -> Self {
        AdamState {
            m: vec![0.0; len],
            v: vec![0.0; len],
            step: 0,
            beta1: ADAM_BETA1,
            beta2: ADAM_BETA2,
            eps: ADAM_EPS,
        }
    }
}

/// One bias-corrected Adam update. Parameters are left untouched if any
/// gradient entry is non-finite.
pub fn adam_step(
    params: &mut [f64],
    grads: &[f64],
    state: &mut AdamState,
    lr: f64,
) -> Result<(), TrainError> {
    assert_eq!(params.len(), grads.len(), "parameter/gradient length");
    assert_eq!(params.len(), state.m.len(), "parameter/state length");
    if let Some(index) = grads.iter().position(|g| !g.is_finite()) {
        return Err(TrainError::NonFiniteGradient {
            step: state.step + 1,
            index,
        });
    }
    state.step += 1;
    let t = state.step as i32;
    let c1 = 1.0 - state.beta1.powi(t);
    let c2 = 1.0 - state.beta2.powi(t);
    for i in 0..params.len() {
        let g = grads[i];
        state.m[i] = state.beta1 * state.m[i] + (1.0 - state.beta1) * g;
        state.v[i] = state.beta2 * state.v[i] + (1.0 - state.beta2) * g * g;
        let m_hat = state.m[i] / c1;
        let v_hat = state.v[i] / c2;
        params[i] -= lr * m_hat / (v_hat.sqrt() + state.eps);
    }
    Ok(())
}

/// Mean negative log-probability of the gold labels over unmasked positions.
/// The flag is set when a probability had to be clamped.
pub fn token_nll(probs: &[Vec<f64>], gold: &[usize], mask: &[bool]) -> (f64, bool) {
    let mut sum = 0.0;
    let mut count = 0usize;
    let mut clamped = false;
    for ((p, &g), &m) in probs.iter().zip(gold).zip(mask) {
        if !m {
            continue;
        }
        let mut pg = p[g];
        if pg < PROB_FLOOR {
            pg = PROB_FLOOR;
            clamped = true;
        }
        sum -= pg.ln();
        count += 1;
    }
    if count == 0 {
        return (0.0, clamped);
    }
    (sum / count as f64, clamped)
}

/// `logZ − S(gold)`, floored at zero against rounding.
pub fn crf_nll(scores: &SeqScores, crf: &CrfParams, gold: &[usize]) -> Result<f64, LayerError> {
    let s = crf_score(scores, crf, gold)?;
    Ok((crf_log_partition(scores, crf)? - s).max(0.0))
}

/// Tracks the best validation score; `NaN` never counts as an improvement.
#[derive(Debug, Clone, PartialEq)]
pub struct EarlyStopping {
    pub patience: usize,
    pub best: Option<f64>,
    pub best_epoch: Option<usize>,
    pub bad_epochs: usize,
}

impl EarlyStopping {
    pub fn new(patience: usize) -> Self {
        EarlyStopping {
            patience,
            best: None,
            best_epoch: None,
            bad_epochs: 0,
        }
    }

    /// Records an epoch's score; returns whether it is the new best.
    pub fn observe(&mut self, epoch: usize, score: f64) -> bool {
        let better = match self.best {
            None => true,
            Some(b) => score > b || (b.is_nan() && !score.is_nan()),
        };
        if better {
            self.best = Some(score);
            self.best_epoch = Some(epoch);
            self.bad_epochs = 0;
        } else {
            self.bad_epochs += 1;
        }
        better
    }

    pub fn should_stop(&self) -> bool {
        self.bad_epochs >= self.patience
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpochRecord {
    /// 1-based.
    pub epoch: usize,
    /// Mean per-token loss over the epoch.
    pub train_loss: f64,
    /// Binary token F1 (percent) on the validation set; NaN if undefined.
    pub val_f1: f64,
    pub lr: f64,
}

impl EpochRecord {
    pub fn log_line(&self) -> String {
        format!(
            "epoch {} loss {:.6} val_f1 {} lr {}",
            self.epoch,
            self.train_loss,
            crate::evaluation::pct(self.val_f1),
            self.lr
        )
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainHistory {
    pub epochs: Vec<EpochRecord>,
    pub stopped_early: bool,
    /// 1-based epoch whose parameters were kept.
    pub best_epoch: Option<usize>,
}

impl TrainHistory {
    pub fn render(&self) -> String {
        let mut s: String = self.epochs.iter().map(|e| e.log_line() + "\n").collect();
        if self.stopped_early {
            s.push_str("stopped early\n");
        }
        if let Some(b) = self.best_epoch {
            s.push_str(&format!("kept epoch {b}\n"));
        }
        s
    }
}

/// Binary token F1 of the tagger's predictions (label 0 is the outside class).
pub fn token_f1(tagger: &Tagger, examples: &[Example]) -> Result<f64, ModelError> {
    let preds: Vec<Vec<usize>> = examples
        .par_iter()
        .map(|ex| tagger.predict(ex.tokens(), ex.cue()))
        .collect::<Result<_, _>>()?;
    let mut c = TokenConfusion::default();
    for (ex, p) in examples.iter().zip(&preds) {
        for (&g, &q) in ex.labels().iter().zip(p) {
            c.add(q != 0, g != 0);
        }
    }
    Ok(c.f1())
}

/// Fraction of real positions labelled correctly.
pub fn token_accuracy(tagger: &Tagger, examples: &[Example]) -> Result<f64, ModelError> {
    let mut right = 0usize;
    let mut total = 0usize;
    for ex in examples {
        let p = tagger.predict(ex.tokens(), ex.cue())?;
        right += p.iter().zip(ex.labels()).filter(|(a, b)| a == b).count();
        total += p.len();
    }
    Ok(right as f64 / total.max(1) as f64)
}

/// Summed loss, token count and summed gradient over a batch. Per-example
/// work runs in parallel; the reduction is in batch order.
pub fn batch_gradient(
    tagger: &Tagger,
    batch: &[&Example],
) -> Result<(f64, usize, Gradients), ModelError> {
    let parts: Vec<(f64, usize, Gradients)> = batch
        .par_iter()
        .map(|ex| tagger.loss_and_grad(ex))
        .collect::<Result<_, _>>()?;
    let mut total = Gradients::zeros_for(tagger);
    let mut loss = 0.0;
    let mut tokens = 0;
    for (l, n, g) in &parts {
        loss += l;
        tokens += n;
        total.add_assign(g);
    }
    Ok((loss, tokens, total))
}

/// Trains in place. With early stopping the best-validation parameters are
/// restored; otherwise the final parameters are kept.
pub fn train(
    tagger: &mut Tagger,
    train_set: &[Example],
    validation: &[Example],
    cfg: &TrainConfig,
) -> Result<TrainHistory, TrainError> {
    cfg.validate()?;
    let train_set: Vec<&Example> = train_set.iter().filter(|e| !e.is_empty()).collect();
    if train_set.is_empty() {
        return Err(TrainError::EmptyTrainingSet);
    }
    let use_early_stop = cfg.early_stopping && !validation.is_empty();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut params = tagger.flat_params();
    let mut adam = AdamState::new(params.len());
    let mut history = TrainHistory::default();
    let mut stopper = EarlyStopping::new(cfg.patience);
    let mut best_params: Option<Vec<f64>> = None;
    let mut order: Vec<usize> = (0..train_set.len()).collect();

    for epoch in 0..cfg.epochs {
        let lr = cfg.decay.rate(epoch, cfg.lr0);
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        let mut epoch_tokens = 0usize;
        for chunk in order.chunks(cfg.batch_size) {
            let batch: Vec<&Example> = chunk.iter().map(|&i| train_set[i]).collect();
            let (loss, tokens, mut grads) = batch_gradient(tagger, &batch)?;
            if !loss.is_finite() {
                return Err(TrainError::Diverged {
                    epoch: epoch + 1,
                    reason: format!("batch loss {loss}"),
                    history,
                });
            }
            grads.scale(1.0 / tokens as f64);
            let flat = tagger.flatten_grads(&grads);
            if let Err(e) = adam_step(&mut params, &flat, &mut adam, lr) {
                return Err(TrainError::Diverged {
                    epoch: epoch + 1,
                    reason: e.to_string(),
                    history,
                });
            }
            tagger.set_flat_params(&params);
            epoch_loss += loss;
            epoch_tokens += tokens;
        }
        let val_f1 = if validation.is_empty() {
            f64::NAN
        } else {
            token_f1(tagger, validation)?
        };
        let record = EpochRecord {
            epoch: epoch + 1,
            train_loss: epoch_loss / epoch_tokens.max(1) as f64,
            val_f1,
            lr,
        };
        info!("{}", record.log_line());
        history.epochs.push(record);

        let improved = stopper.observe(epoch + 1, val_f1);
        if use_early_stop {
            if improved {
                best_params = Some(params.clone());
            }
            if stopper.should_stop() {
                history.stopped_early = true;
                break;
            }
        }
    }

    if let Some(best) = best_params {
        tagger.set_flat_params(&best);
        history.best_epoch = stopper.best_epoch;
    } else {
        history.best_epoch = Some(history.epochs.len());
    }
    Ok(history)
}
