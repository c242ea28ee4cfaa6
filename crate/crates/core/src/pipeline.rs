//! End-to-end commands: corpus → models → training → evaluation.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::fs;
use std::io::{self, BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use log::info;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::checkpoint::{Checkpoint, CheckpointError};
use crate::corpus::{
    build_vocab, group_sentences, load_embedding_file, parse_column_file, read_column_file,
    split_dataset, tokenize, write_blocks, ColumnBlock, CorpusError, CorpusStats,
    NegationInstance, SentenceGroup, Vocabulary,
};
use crate::dataset::{cue_example, encode_for_inference, scope_example};
use crate::evaluation::{
    build_task2_testset, comparison_table, cue_table, scope_table, CueInput, CueReport, EvalError,
    ScopeReport, ScopeRow, Task2TestSet,
};
use crate::labeling::{cue_vector, postprocess, tags_to_string, CueTag, ScopeTag, Tag};
use crate::layers::EmbeddingParams;
use crate::model::{Encoder, Head, ModelError, ModelSpec, Tagger, Task};
use crate::training::{train, DecaySchedule, TrainConfig, TrainError, TrainHistory};

/// Overrides the output root from the config file.
pub const OUT_ENV: &str = "NEGSCOPE_OUT";

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("config: {0}")]
    Config(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error(transparent)]
    Checkpoint(#[from] CheckpointError),
    #[error(transparent)]
    Train(#[from] TrainError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error("empty Task-2 training set: the training split has no negation instances")]
    EmptyTask2,
    #[error("{0}")]
    Mismatch(String),
}

impl PipelineError {
    /// 2 for usage and configuration problems, 1 for everything else.
    pub fn exit_code(&self) -> i32 {
        match self {
            PipelineError::Config(_) => 2,
            _ => 1,
        }
    }
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> PipelineError + '_ {
    move |source| PipelineError::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn write_file(path: &Path, contents: &str) -> Result<(), PipelineError> {
    fs::write(path, contents).map_err(io_err(path))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum CueVariant {
    /// Frozen embeddings + softmax.
    Baseline,
    /// Trainable embeddings + softmax.
    EmbTrain,
    BiLstm,
    EmbCrf,
    BiLstmCrf,
}

impl CueVariant {
    pub const ALL: [CueVariant; 5] = [
        CueVariant::Baseline,
        CueVariant::EmbTrain,
        CueVariant::BiLstm,
        CueVariant::EmbCrf,
        CueVariant::BiLstmCrf,
    ];

    pub fn name(self) -> &'static str {
        match self {
            CueVariant::Baseline => "baseline",
            CueVariant::EmbTrain => "emb-train",
            CueVariant::BiLstm => "bilstm",
            CueVariant::EmbCrf => "emb-crf",
            CueVariant::BiLstmCrf => "bilstm-crf",
        }
    }

    pub fn encoder(self) -> Encoder {
        match self {
            CueVariant::BiLstm | CueVariant::BiLstmCrf => Encoder::BiLstm,
            _ => Encoder::Embedding,
        }
    }

    pub fn head(self) -> Head {
        match self {
            CueVariant::EmbCrf | CueVariant::BiLstmCrf => Head::Crf,
            _ => Head::Softmax,
        }
    }

    pub fn embeddings_trainable(self) -> bool {
        self != CueVariant::Baseline
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum ScopeVariant {
    BiLstm,
    BiLstmCrf,
    /// The `bilstm` model followed by the post-processor.
    BiLstmPost,
}

impl ScopeVariant {
    pub const ALL: [ScopeVariant; 3] = [
        ScopeVariant::BiLstm,
        ScopeVariant::BiLstmCrf,
        ScopeVariant::BiLstmPost,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ScopeVariant::BiLstm => "bilstm",
            ScopeVariant::BiLstmCrf => "bilstm-crf",
            ScopeVariant::BiLstmPost => "bilstm-post",
        }
    }

    pub fn head(self) -> Head {
        match self {
            ScopeVariant::BiLstmCrf => Head::Crf,
            _ => Head::Softmax,
        }
    }

    /// Name of the trained network this variant uses.
    pub fn model_name(self) -> &'static str {
        match self {
            ScopeVariant::BiLstmCrf => "bilstm-crf",
            _ => "bilstm",
        }
    }

    pub fn postprocess(self) -> bool {
        self == ScopeVariant::BiLstmPost
    }
}

macro_rules! named_from_str {
    ($t:ty) => {
        impl FromStr for $t {
            type Err = String;

            fn from_str(s: &str) -> Result<Self, String> {
                <$t>::ALL
                    .iter()
                    .copied()
                    .find(|v| v.name() == s)
                    .ok_or_else(|| {
                        let names: Vec<&str> = <$t>::ALL.iter().map(|v| v.name()).collect();
                        format!("unknown variant {s:?} (expected one of {})", names.join(", "))
                    })
            }
        }
    };
}

named_from_str!(CueVariant);
named_from_str!(ScopeVariant);

/// Where Task-2 evaluation takes its cue inputs from.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum CueSource {
    Gold,
    Checkpoint(PathBuf),
}

/// Per-task training settings as they appear in the config file.
#[derive(Debug, Clone, PartialEq)]
pub struct TaskSettings {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr0: f64,
    pub decay: DecaySchedule,
    pub early_stopping: bool,
    pub patience: usize,
    pub units: usize,
    /// `None` picks the default for the variant.
    pub embeddings_trainable: Option<bool>,
}

impl TaskSettings {
    fn defaults(early_stopping: bool) -> Self {
        let t = TrainConfig::default();
        TaskSettings {
            epochs: t.epochs,
            batch_size: t.batch_size,
            lr0: t.lr0,
            decay: t.decay,
            early_stopping,
            patience: t.patience,
            units: t.units,
            embeddings_trainable: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub corpus: Option<PathBuf>,
    pub embeddings: Option<PathBuf>,
    pub out: PathBuf,
    pub seed: u64,
    pub dim: usize,
    pub max_len: usize,
    pub split: (f64, f64, f64),
    pub cue_variants: Vec<CueVariant>,
    pub scope_variants: Vec<ScopeVariant>,
    pub cue: TaskSettings,
    pub scope: TaskSettings,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            corpus: None,
            embeddings: None,
            out: PathBuf::from("runs"),
            seed: 0,
            dim: 200,
            max_len: 100,
            split: (0.70, 0.15, 0.15),
            cue_variants: CueVariant::ALL.to_vec(),
            scope_variants: ScopeVariant::ALL.to_vec(),
            cue: TaskSettings::defaults(true),
            scope: TaskSettings::defaults(false),
        }
    }
}

fn parse_value<T: FromStr>(key: &str, value: &str) -> Result<T, PipelineError> {
    value
        .parse()
        .map_err(|_| PipelineError::Config(format!("bad value for {key}: {value:?}")))
}

fn parse_list<T: FromStr<Err = String>>(key: &str, value: &str) -> Result<Vec<T>, PipelineError> {
    let mut out: Vec<T> = Vec::new();
    for part in value.split(',').map(str::trim).filter(|p| !p.is_empty()) {
        out.push(part.parse().map_err(|e| PipelineError::Config(format!("{key}: {e}")))?);
    }
    if out.is_empty() {
        return Err(PipelineError::Config(format!("{key} is empty")));
    }
    Ok(out)
}

fn parse_decay(key: &str, value: &str) -> Result<DecaySchedule, PipelineError> {
    if value == "none" {
        return Ok(DecaySchedule::Constant);
    }
    let parts: Vec<&str> = value.split(':').collect();
    match parts.as_slice() {
        ["step", every, factor] => Ok(DecaySchedule::Step {
            every: parse_value(key, every)?,
            factor: parse_value(key, factor)?,
        }),
        _ => Err(PipelineError::Config(format!(
            "{key}: expected none or step:<every>:<factor>, got {value:?}"
        ))),
    }
}

fn render_decay(d: &DecaySchedule) -> String {
    match d {
        DecaySchedule::Constant => "none".into(),
        DecaySchedule::Step { every, factor } => format!("step:{every}:{factor}"),
    }
}

fn parse_trainable(key: &str, value: &str) -> Result<Option<bool>, PipelineError> {
    match value {
        "auto" => Ok(None),
        v => parse_value(key, v).map(Some),
    }
}

impl TaskSettings {
    fn set(&mut self, key: &str, field: &str, value: &str) -> Result<(), PipelineError> {
        match field {
            "epochs" => self.epochs = parse_value(key, value)?,
            "batch_size" => self.batch_size = parse_value(key, value)?,
            "lr0" => self.lr0 = parse_value(key, value)?,
            "decay" => self.decay = parse_decay(key, value)?,
            "early_stopping" => self.early_stopping = parse_value(key, value)?,
            "patience" => self.patience = parse_value(key, value)?,
            "units" => self.units = parse_value(key, value)?,
            "embeddings_trainable" => self.embeddings_trainable = parse_trainable(key, value)?,
            _ => return Err(PipelineError::Config(format!("unknown key {key:?}"))),
        }
        Ok(())
    }

    fn render(&self, prefix: &str, out: &mut String) {
        let _ = writeln!(out, "{prefix}.epochs = {}", self.epochs);
        let _ = writeln!(out, "{prefix}.batch_size = {}", self.batch_size);
        let _ = writeln!(out, "{prefix}.lr0 = {}", self.lr0);
        let _ = writeln!(out, "{prefix}.decay = {}", render_decay(&self.decay));
        let _ = writeln!(out, "{prefix}.early_stopping = {}", self.early_stopping);
        let _ = writeln!(out, "{prefix}.patience = {}", self.patience);
        let _ = writeln!(out, "{prefix}.units = {}", self.units);
        let trainable = self
            .embeddings_trainable
            .map_or("auto".to_string(), |b| b.to_string());
        let _ = writeln!(out, "{prefix}.embeddings_trainable = {trainable}");
    }
}

impl ExperimentConfig {
    /// Sets one documented key.
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), PipelineError> {
        let path = |v: &str| (!v.is_empty()).then(|| PathBuf::from(v));
        match key {
            "corpus" => self.corpus = path(value),
            "embeddings" => self.embeddings = path(value),
            "out" => self.out = PathBuf::from(value),
            "seed" => self.seed = parse_value(key, value)?,
            "dim" => self.dim = parse_value(key, value)?,
            "max_len" => self.max_len = parse_value(key, value)?,
            "split" => {
                let parts: Vec<f64> = value
                    .split(',')
                    .map(|p| parse_value(key, p.trim()))
                    .collect::<Result<_, _>>()?;
                let [a, b, c] = parts[..] else {
                    return Err(PipelineError::Config(format!("split needs three ratios, got {value:?}")));
                };
                self.split = (a, b, c);
            }
            "cue.variants" => self.cue_variants = parse_list(key, value)?,
            "scope.variants" => self.scope_variants = parse_list(key, value)?,
            _ => match key.split_once('.') {
                Some(("cue", field)) => self.cue.set(key, field, value)?,
                Some(("scope", field)) => self.scope.set(key, field, value)?,
                _ => return Err(PipelineError::Config(format!("unknown key {key:?}"))),
            },
        }
        Ok(())
    }

    /// Flat `key = value` lines; `#` starts a comment.
    pub fn parse(text: &str) -> Result<Self, PipelineError> {
        let mut cfg = ExperimentConfig::default();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| {
                PipelineError::Config(format!("line {}: expected key = value", i + 1))
            })?;
            cfg.set(k.trim(), v.trim())
                .map_err(|e| PipelineError::Config(format!("line {}: {e}", i + 1)))?;
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, PipelineError> {
        let text = fs::read_to_string(path)
            .map_err(|e| PipelineError::Config(format!("{}: {e}", path.display())))?;
        Self::parse(&text)
    }

    /// The resolved configuration in the same format [`ExperimentConfig::parse`] reads.
    pub fn render(&self) -> String {
        let p = |o: &Option<PathBuf>| o.as_ref().map_or(String::new(), |p| p.display().to_string());
        let mut s = String::new();
        let _ = writeln!(s, "corpus = {}", p(&self.corpus));
        let _ = writeln!(s, "embeddings = {}", p(&self.embeddings));
        let _ = writeln!(s, "out = {}", self.out.display());
        let _ = writeln!(s, "seed = {}", self.seed);
        let _ = writeln!(s, "dim = {}", self.dim);
        let _ = writeln!(s, "max_len = {}", self.max_len);
        let _ = writeln!(s, "split = {},{},{}", self.split.0, self.split.1, self.split.2);
        let names = |v: Vec<&str>| v.join(",");
        let _ = writeln!(s, "cue.variants = {}", names(self.cue_variants.iter().map(|v| v.name()).collect()));
        let _ = writeln!(
            s,
            "scope.variants = {}",
            names(self.scope_variants.iter().map(|v| v.name()).collect())
        );
        self.cue.render("cue", &mut s);
        self.scope.render("scope", &mut s);
        s
    }

    pub fn validate(&self) -> Result<(), PipelineError> {
        if self.corpus.is_none() {
            return Err(PipelineError::Config("no corpus given".into()));
        }
        for (name, v) in [("dim", self.dim), ("max_len", self.max_len)] {
            if v == 0 {
                return Err(PipelineError::Config(format!("{name} must be positive")));
            }
        }
        for kind in ["cue", "scope"] {
            self.train_config(kind, false, 0)
                .validate()
                .map_err(|e| PipelineError::Config(format!("{kind}: {e}")))?;
        }
        Ok(())
    }

    fn train_config(&self, kind: &str, trainable: bool, seed: u64) -> TrainConfig {
        let s = if kind == "cue" { &self.cue } else { &self.scope };
        TrainConfig {
            epochs: s.epochs,
            batch_size: s.batch_size,
            lr0: s.lr0,
            decay: s.decay,
            early_stopping: s.early_stopping,
            patience: s.patience,
            seed,
            dim: self.dim,
            units: s.units,
            embeddings_trainable: trainable,
            max_len: self.max_len,
        }
    }

    fn corpus_path(&self) -> Result<&Path, PipelineError> {
        self.corpus
            .as_deref()
            .ok_or_else(|| PipelineError::Config("no corpus given".into()))
    }
}

/// A stable per-purpose seed derived from the run seed.
pub fn derive_seed(seed: u64, purpose: &str) -> u64 {
    let mut h = Sha256::new();
    h.update(seed.to_le_bytes());
    h.update(purpose.as_bytes());
    let d = h.finalize();
    u64::from_le_bytes(d[..8].try_into().expect("8 bytes"))
}

/// Everything a command wrote.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RunArtifacts {
    pub dir: PathBuf,
    pub checkpoints: Vec<PathBuf>,
    pub predictions: Vec<PathBuf>,
    pub reports: Vec<PathBuf>,
    pub log: Option<PathBuf>,
    pub config: Option<PathBuf>,
    /// Contents of the main key-value report.
    pub report: String,
}

/// Corpus, split and vocabulary shared by all commands that train.
pub struct PreparedData {
    pub instances: Vec<NegationInstance>,
    pub stats: CorpusStats,
    pub train: Vec<SentenceGroup>,
    pub validation: Vec<SentenceGroup>,
    pub test: Vec<SentenceGroup>,
    pub vocab: Vocabulary,
}

impl PreparedData {
    pub fn load(cfg: &ExperimentConfig) -> Result<Self, PipelineError> {
        let raw = parse_column_file(cfg.corpus_path()?)?;
        if raw.is_empty() {
            return Err(CorpusError::Empty.into());
        }
        let vocab = build_vocab(&raw)?;
        let found = match &cfg.embeddings {
            Some(p) => Some(load_embedding_file(p, &vocab, Some(cfg.dim), false)?.found),
            None => None,
        };
        let stats = CorpusStats::compute(&raw, cfg.max_len, found.as_deref().map(|f| (&vocab, f)));
        let instances: Vec<NegationInstance> =
            raw.iter().map(|i| i.truncated(cfg.max_len)).collect();
        let groups = group_sentences(&instances);
        let split = split_dataset(&groups, cfg.split, cfg.seed)?;
        Ok(PreparedData {
            instances,
            stats,
            train: split.train,
            validation: split.validation,
            test: split.test,
            vocab,
        })
    }

    fn render_summary(&self) -> String {
        let mut s = String::from("[corpus]\n");
        s.push_str(&self.stats.render());
        let _ = writeln!(
            s,
            "\n[split]\ntrain_sentences = {}\nvalidation_sentences = {}\ntest_sentences = {}\nvocabulary = {}",
            self.train.len(),
            self.validation.len(),
            self.test.len(),
            self.vocab.len()
        );
        s
    }
}

fn instances_of(groups: &[SentenceGroup]) -> Vec<NegationInstance> {
    groups.iter().flat_map(|g| g.instances.iter().cloned()).collect()
}

fn negation_instances(groups: &[SentenceGroup]) -> Vec<NegationInstance> {
    instances_of(groups)
        .into_iter()
        .filter(|i| i.annotation.is_negation())
        .collect()
}

fn embedding_for(
    cfg: &ExperimentConfig,
    vocab: &Vocabulary,
    trainable: bool,
    rng: &mut ChaCha8Rng,
) -> Result<EmbeddingParams, PipelineError> {
    match &cfg.embeddings {
        Some(p) => Ok(load_embedding_file(p, vocab, Some(cfg.dim), trainable)?.params),
        None => Ok(EmbeddingParams::random(
            cfg.dim,
            vocab.len(),
            vocab.oov_index(),
            trainable,
            rng,
        )),
    }
}

/// Output directory, created if missing.
fn prepare_out(cfg: &ExperimentConfig) -> Result<PathBuf, PipelineError> {
    let dir = cfg.out.clone();
    fs::create_dir_all(dir.join("predictions")).map_err(io_err(&dir))?;
    Ok(dir)
}

struct RunLog {
    text: String,
}

impl RunLog {
    fn new() -> Self {
        RunLog { text: String::new() }
    }

    fn line(&mut self, s: impl AsRef<str>) {
        info!("{}", s.as_ref());
        self.text.push_str(s.as_ref());
        self.text.push('\n');
    }

    fn history(&mut self, title: &str, decoding: &str, h: &TrainHistory) {
        self.line(format!("== {title} (decoding = {decoding}) =="));
        for l in h.render().lines() {
            self.line(l);
        }
    }
}

fn decoding_name(head: Head) -> &'static str {
    match head {
        Head::Crf => "viterbi",
        Head::Softmax => "argmax",
    }
}

pub fn predict_cue(tagger: &Tagger, tokens: &[usize]) -> Result<Vec<CueTag>, ModelError> {
    if tokens.is_empty() {
        return Ok(Vec::new());
    }
    Ok(tagger
        .predict(tokens, &[])?
        .into_iter()
        .map(|i| CueTag::from_index(i).expect("label within alphabet"))
        .collect())
}

pub fn predict_scope(
    tagger: &Tagger,
    tokens: &[usize],
    cue: &[u8],
    post: bool,
) -> Result<Vec<ScopeTag>, ModelError> {
    let raw: Vec<ScopeTag> = tagger
        .predict(tokens, cue)?
        .into_iter()
        .map(|i| ScopeTag::from_index(i).expect("label within alphabet"))
        .collect();
    if post && cue.contains(&1) {
        Ok(postprocess(&raw, cue).expect("cue vector has a cue and matching length"))
    } else {
        Ok(raw)
    }
}

fn group_block(g: &SentenceGroup, cue: Vec<CueTag>) -> ColumnBlock {
    ColumnBlock {
        id: Some(g.sentence().source_id.clone()),
        tokens: g.sentence().tokens.clone(),
        cue,
        scope: None,
        line: 0,
    }
}

fn save_blocks(path: &Path, blocks: &[ColumnBlock]) -> Result<(), PipelineError> {
    let f = fs::File::create(path).map_err(io_err(path))?;
    let mut w = io::BufWriter::new(f);
    write_blocks(&mut w, blocks).map_err(io_err(path))?;
    w.flush().map_err(io_err(path))
}

struct CueOutcomeRun {
    variant: CueVariant,
    validation: CueReport,
    test: CueReport,
    test_predictions: Vec<Vec<CueTag>>,
}

fn cue_predictions(tagger: &Tagger, groups: &[SentenceGroup], vocab: &Vocabulary) -> Result<Vec<Vec<CueTag>>, ModelError> {
    groups
        .iter()
        .map(|g| predict_cue(tagger, &vocab.encode(&g.sentence().tokens)))
        .collect()
}

fn cue_report(pred: &[Vec<CueTag>], groups: &[SentenceGroup]) -> Result<CueReport, EvalError> {
    let gold: Vec<Vec<CueTag>> = groups.iter().map(|g| g.cue_tags()).collect();
    CueReport::compute(pred, &gold)
}

fn train_cue_variants(
    cfg: &ExperimentConfig,
    data: &PreparedData,
    dir: &Path,
    log: &mut RunLog,
    arts: &mut RunArtifacts,
) -> Result<Vec<CueOutcomeRun>, PipelineError> {
    let train_ex: Vec<_> = data.train.iter().map(|g| cue_example(g, &data.vocab, cfg.max_len)).collect();
    let val_ex: Vec<_> = data
        .validation
        .iter()
        .map(|g| cue_example(g, &data.vocab, cfg.max_len))
        .collect();
    let mut runs = Vec::new();
    for &variant in &cfg.cue_variants {
        let trainable = cfg.cue.embeddings_trainable.unwrap_or(variant.embeddings_trainable());
        let tc = cfg.train_config("cue", trainable, derive_seed(cfg.seed, &format!("cue-train-{}", variant.name())));
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, &format!("cue-init-{}", variant.name())));
        let spec = ModelSpec {
            task: Task::Cue,
            encoder: variant.encoder(),
            head: variant.head(),
            dim: cfg.dim,
            units: tc.units,
        };
        let emb = embedding_for(cfg, &data.vocab, trainable, &mut rng)?;
        let mut tagger = Tagger::new(spec, emb, &mut rng)?;
        let history = train(&mut tagger, &train_ex, &val_ex, &tc)?;
        log.history(&format!("cue {}", variant.name()), decoding_name(spec.head), &history);

        let val_pred = cue_predictions(&tagger, &data.validation, &data.vocab)?;
        let test_pred = cue_predictions(&tagger, &data.test, &data.vocab)?;
        let ck = dir.join(format!("cue-{}.ckpt", variant.name()));
        Checkpoint {
            tagger,
            vocab_hash: data.vocab.hash(),
        }
        .save(&ck)?;
        arts.checkpoints.push(ck);

        let pred_path = dir.join("predictions").join(format!("cue-{}.test.tsv", variant.name()));
        let blocks: Vec<ColumnBlock> = data
            .test
            .iter()
            .zip(&test_pred)
            .map(|(g, p)| group_block(g, p.clone()))
            .collect();
        save_blocks(&pred_path, &blocks)?;
        arts.predictions.push(pred_path);

        runs.push(CueOutcomeRun {
            variant,
            validation: cue_report(&val_pred, &data.validation)?,
            test: cue_report(&test_pred, &data.test)?,
            test_predictions: test_pred,
        });
    }
    let gold_path = dir.join("predictions").join("cue.test.gold.tsv");
    let gold: Vec<ColumnBlock> = data.test.iter().map(|g| group_block(g, g.cue_tags())).collect();
    save_blocks(&gold_path, &gold)?;
    Ok(runs)
}

/// Highest validation F1; NaN ranks last and ties keep the earlier variant.
fn best_cue_run(runs: &[CueOutcomeRun]) -> Option<&CueOutcomeRun> {
    let key = |r: &CueOutcomeRun| {
        let f = r.validation.token.f1;
        if f.is_nan() {
            f64::NEG_INFINITY
        } else {
            f
        }
    };
    runs.iter().fold(None, |best, r| match best {
        Some(b) if key(b) >= key(r) => Some(b),
        _ => Some(r),
    })
}

fn render_cue_section(out: &mut String, runs: &[CueOutcomeRun]) {
    for r in runs {
        let _ = writeln!(out, "\n[cue {} validation]", r.variant.name());
        out.push_str(&r.validation.render());
        let _ = writeln!(out, "\n[cue {} test]", r.variant.name());
        out.push_str(&r.test.render());
    }
}

fn finish(
    dir: &Path,
    cfg: &ExperimentConfig,
    log: RunLog,
    data: &PreparedData,
    report: String,
    tables: &[(&str, String)],
    arts: &mut RunArtifacts,
) -> Result<(), PipelineError> {
    let cfg_path = dir.join("config.txt");
    write_file(&cfg_path, &cfg.render())?;
    arts.config = Some(cfg_path);
    let vocab_path = dir.join("vocab.txt");
    let mut buf = Vec::new();
    data.vocab.write(&mut buf).map_err(io_err(&vocab_path))?;
    fs::write(&vocab_path, buf).map_err(io_err(&vocab_path))?;
    let log_path = dir.join("train.log");
    write_file(&log_path, &log.text)?;
    arts.log = Some(log_path);
    let report_path = dir.join("report.txt");
    write_file(&report_path, &report)?;
    arts.reports.push(report_path);
    for (name, table) in tables {
        let p = dir.join(name);
        write_file(&p, table)?;
        arts.reports.push(p);
    }
    arts.dir = dir.to_path_buf();
    arts.report = report;
    Ok(())
}

/// Trains every configured cue variant with early stopping and reports on
/// the validation and test splits.
pub fn cmd_train_cue(cfg: &ExperimentConfig) -> Result<RunArtifacts, PipelineError> {
    cfg.validate()?;
    let data = PreparedData::load(cfg)?;
    let dir = prepare_out(cfg)?;
    let mut log = RunLog::new();
    let mut arts = RunArtifacts::default();
    let runs = train_cue_variants(cfg, &data, &dir, &mut log, &mut arts)?;
    let mut report = data.render_summary();
    render_cue_section(&mut report, &runs);
    if let Some(best) = best_cue_run(&runs) {
        let _ = writeln!(report, "\nselected_cue_model = {}", best.variant.name());
    }
    let rows: Vec<(String, CueReport)> =
        runs.iter().map(|r| (r.variant.name().to_string(), r.test)).collect();
    finish(&dir, cfg, log, &data, report, &[("cue.tsv", cue_table(&rows))], &mut arts)?;
    Ok(arts)
}

fn train_scope_models(
    cfg: &ExperimentConfig,
    data: &PreparedData,
    dir: &Path,
    log: &mut RunLog,
    arts: &mut RunArtifacts,
) -> Result<Vec<(&'static str, Tagger)>, PipelineError> {
    let train_inst = negation_instances(&data.train);
    if train_inst.is_empty() {
        return Err(PipelineError::EmptyTask2);
    }
    let train_ex: Vec<_> = train_inst.iter().map(|i| scope_example(i, &data.vocab, cfg.max_len)).collect();
    let val_ex: Vec<_> = negation_instances(&data.validation)
        .iter()
        .map(|i| scope_example(i, &data.vocab, cfg.max_len))
        .collect();
    let trainable = cfg.scope.embeddings_trainable.unwrap_or(cfg.embeddings.is_none());
    let mut models: Vec<(&'static str, Head)> = Vec::new();
    for v in &cfg.scope_variants {
        if !models.iter().any(|(n, _)| *n == v.model_name()) {
            models.push((v.model_name(), v.head()));
        }
    }
    let mut out = Vec::new();
    for (name, head) in models {
        let tc = cfg.train_config("scope", trainable, derive_seed(cfg.seed, &format!("scope-train-{name}")));
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, &format!("scope-init-{name}")));
        let spec = ModelSpec {
            task: Task::Scope,
            encoder: Encoder::BiLstm,
            head,
            dim: cfg.dim,
            units: tc.units,
        };
        let emb = embedding_for(cfg, &data.vocab, trainable, &mut rng)?;
        let mut tagger = Tagger::new(spec, emb, &mut rng)?;
        let history = train(&mut tagger, &train_ex, &val_ex, &tc)?;
        log.history(&format!("scope {name}"), decoding_name(head), &history);
        let ck = dir.join(format!("scope-{name}.ckpt"));
        Checkpoint {
            tagger: tagger.clone(),
            vocab_hash: data.vocab.hash(),
        }
        .save(&ck)?;
        arts.checkpoints.push(ck);
        out.push((name, tagger));
    }
    Ok(out)
}

fn task2_block(inst: &NegationInstance, cue: &[u8], scope: Vec<ScopeTag>) -> ColumnBlock {
    ColumnBlock {
        id: Some(inst.sentence.source_id.clone()),
        tokens: inst.sentence.tokens.clone(),
        cue: cue_tags_from_vector(cue),
        scope: Some(scope),
        line: 0,
    }
}

/// `C`/`MC` tags for a binary cue vector, by the labeling-scheme run rule.
fn cue_tags_from_vector(cue: &[u8]) -> Vec<CueTag> {
    let on = |k: usize| cue.get(k).copied().unwrap_or(0) == 1;
    (0..cue.len())
        .map(|k| {
            if !on(k) {
                CueTag::NC
            } else if (k > 0 && on(k - 1)) || on(k + 1) {
                CueTag::MC
            } else {
                CueTag::C
            }
        })
        .collect()
}

struct ScopeEval<'a> {
    set: &'a Task2TestSet,
    instances: &'a [NegationInstance],
    vocab: &'a Vocabulary,
}

impl ScopeEval<'_> {
    fn run(
        &self,
        tagger: &Tagger,
        variant: ScopeVariant,
        input: CueInput,
        dir: &Path,
        arts: &mut RunArtifacts,
    ) -> Result<ScopeRow, PipelineError> {
        let preds = self.set.predictions(input, |item, cue| {
            let tokens = self.vocab.encode(&self.instances[item.instance].sentence.tokens);
            predict_scope(tagger, &tokens, cue, variant.postprocess())
        })?;
        let gold = self.set.gold_scopes();
        let report = ScopeReport::compute(&preds, &gold)?;
        let blocks: Vec<ColumnBlock> = self
            .set
            .items
            .iter()
            .zip(preds)
            .map(|(item, p)| {
                let cue = match input {
                    CueInput::Gold => &item.gold_cue,
                    CueInput::Predicted => &item.pred_cue,
                };
                task2_block(&self.instances[item.instance], cue, p)
            })
            .collect();
        let path = dir
            .join("predictions")
            .join(format!("scope-{}.{}.tsv", variant.name(), input.as_str()));
        save_blocks(&path, &blocks)?;
        arts.predictions.push(path);
        Ok(ScopeRow {
            model: variant.name().to_string(),
            input,
            report,
        })
    }

    fn save_gold(&self, dir: &Path) -> Result<(), PipelineError> {
        let blocks: Vec<ColumnBlock> = self
            .set
            .items
            .iter()
            .map(|item| task2_block(&self.instances[item.instance], &item.gold_cue, item.gold_scope.clone()))
            .collect();
        save_blocks(&dir.join("predictions").join("scope.test.gold.tsv"), &blocks)
    }
}

fn render_task2(out: &mut String, set: &Task2TestSet, cue_model: &str) {
    let _ = writeln!(
        out,
        "\n[task2 test set]\ncue_model = {cue_model}\ntp = {}\nfn = {}\nfp = {}\ntn = {}\ninstances = {}",
        set.tp,
        set.fn_,
        set.fp,
        set.tn,
        set.items.len()
    );
}

fn render_scope_rows(out: &mut String, rows: &[ScopeRow]) {
    for r in rows {
        let _ = writeln!(out, "\n[scope {} {}]", r.model, r.input.as_str());
        out.push_str(&r.report.render());
    }
}

fn predicted_cues_per_instance(
    groups: &[SentenceGroup],
    per_group: &[Vec<CueTag>],
) -> Vec<Vec<CueTag>> {
    groups
        .iter()
        .zip(per_group)
        .flat_map(|(g, p)| std::iter::repeat(p.clone()).take(g.instances.len()))
        .collect()
}

/// Trains the configured scope models on gold cues and evaluates them on the
/// Task-2 test set with the cue input taken from `source`.
pub fn cmd_train_scope(cfg: &ExperimentConfig, source: &CueSource) -> Result<RunArtifacts, PipelineError> {
    cfg.validate()?;
    let data = PreparedData::load(cfg)?;
    let cue_model = match source {
        CueSource::Gold => None,
        CueSource::Checkpoint(p) => {
            let ck = Checkpoint::load(p)?;
            ck.check_vocab(&data.vocab.hash())?;
            if ck.tagger.spec.task != Task::Cue {
                return Err(PipelineError::Mismatch(format!(
                    "{} is not a cue detection checkpoint",
                    p.display()
                )));
            }
            Some(ck.tagger)
        }
    };
    let dir = prepare_out(cfg)?;
    let mut log = RunLog::new();
    let mut arts = RunArtifacts::default();
    let models = train_scope_models(cfg, &data, &dir, &mut log, &mut arts)?;

    let test_inst = instances_of(&data.test);
    let (predicted, input, cue_name) = match &cue_model {
        None => (
            test_inst.iter().map(|i| i.cue_tags()).collect::<Vec<_>>(),
            CueInput::Gold,
            "gold",
        ),
        Some(t) => {
            let per_group = cue_predictions(t, &data.test, &data.vocab)?;
            let per_inst = predicted_cues_per_instance(&data.test, &per_group);
            for (inst, p) in test_inst.iter().zip(&per_inst) {
                log.line(format!(
                    "predicted cues {}: {}",
                    inst.sentence.source_id,
                    tags_to_string(p)
                ));
            }
            (per_inst, CueInput::Predicted, "checkpoint")
        }
    };
    let set = build_task2_testset(&test_inst, &predicted)?;
    let eval = ScopeEval {
        set: &set,
        instances: &test_inst,
        vocab: &data.vocab,
    };
    eval.save_gold(&dir)?;
    let mut rows = Vec::new();
    for &v in &cfg.scope_variants {
        let tagger = &models.iter().find(|(n, _)| *n == v.model_name()).expect("trained").1;
        rows.push(eval.run(tagger, v, input, &dir, &mut arts)?);
    }
    let mut report = data.render_summary();
    render_task2(&mut report, &set, cue_name);
    render_scope_rows(&mut report, &rows);
    finish(&dir, cfg, log, &data, report, &[("scope.tsv", scope_table(&rows))], &mut arts)?;
    Ok(arts)
}

/// Cue models, best-cue selection, scope models, and the gold versus
/// predicted cue-input comparison on one shared test set.
pub fn cmd_experiment(cfg: &ExperimentConfig) -> Result<RunArtifacts, PipelineError> {
    cfg.validate()?;
    let data = PreparedData::load(cfg)?;
    let dir = prepare_out(cfg)?;
    let mut log = RunLog::new();
    let mut arts = RunArtifacts::default();
    let cue_runs = train_cue_variants(cfg, &data, &dir, &mut log, &mut arts)?;
    let best = best_cue_run(&cue_runs).expect("at least one cue variant");
    log.line(format!("selected cue model: {}", best.variant.name()));
    let models = train_scope_models(cfg, &data, &dir, &mut log, &mut arts)?;

    let test_inst = instances_of(&data.test);
    let predicted = predicted_cues_per_instance(&data.test, &best.test_predictions);
    let set = build_task2_testset(&test_inst, &predicted)?;
    let eval = ScopeEval {
        set: &set,
        instances: &test_inst,
        vocab: &data.vocab,
    };
    eval.save_gold(&dir)?;
    let mut rows = Vec::new();
    for &v in &cfg.scope_variants {
        let tagger = &models.iter().find(|(n, _)| *n == v.model_name()).expect("trained").1;
        for input in [CueInput::Gold, CueInput::Predicted] {
            rows.push(eval.run(tagger, v, input, &dir, &mut arts)?);
        }
    }
    // Both conditions are scored on the same items by construction; the
    // check guards the bookkeeping.
    let ids: BTreeSet<usize> = set.items.iter().map(|i| i.instance).collect();
    let same = ids.len() == set.items.len();
    log.line(format!("gold and predicted conditions share {} test instances: {same}", ids.len()));

    let mut report = data.render_summary();
    render_cue_section(&mut report, &cue_runs);
    let _ = writeln!(report, "\nselected_cue_model = {}", best.variant.name());
    render_task2(&mut report, &set, best.variant.name());
    let _ = writeln!(report, "same_instance_set = {same}");
    render_scope_rows(&mut report, &rows);
    let cue_rows: Vec<(String, CueReport)> =
        cue_runs.iter().map(|r| (r.variant.name().to_string(), r.test)).collect();
    finish(
        &dir,
        cfg,
        log,
        &data,
        report,
        &[
            ("cue.tsv", cue_table(&cue_rows)),
            ("scope.tsv", scope_table(&rows)),
            ("comparison.tsv", comparison_table(&rows)),
        ],
        &mut arts,
    )?;
    Ok(arts)
}

/// How `cmd_predict` reads its input.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InputFormat {
    /// One sentence per line, tokenized by [`tokenize`].
    Raw,
    /// Token in the first tab-separated column; blank lines end sentences.
    /// A second column, if present, is read as gold cue tags.
    Columns,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PredictOptions {
    pub cue_model: Option<PathBuf>,
    pub scope_model: Option<PathBuf>,
    /// Defaults to `vocab.txt` next to the first checkpoint.
    pub vocab: Option<PathBuf>,
    pub input: PathBuf,
    pub format: InputFormat,
    pub postprocess: bool,
    pub max_len: usize,
}

struct InputSentence {
    id: String,
    tokens: Vec<String>,
    cue: Option<Vec<CueTag>>,
}

fn read_predict_input(path: &Path, format: InputFormat) -> Result<Vec<InputSentence>, PipelineError> {
    let f = fs::File::open(path).map_err(io_err(path))?;
    let mut out = Vec::new();
    let mut cur: Option<InputSentence> = None;
    let mut pending_id: Option<String> = None;
    for (i, line) in BufReader::new(f).lines().enumerate() {
        let line = line.map_err(io_err(path))?;
        match format {
            InputFormat::Raw => {
                let tokens = tokenize(&line);
                if tokens.is_empty() {
                    continue;
                }
                info!("tokenized line {}: {}", i + 1, tokens.join(" "));
                out.push(InputSentence {
                    id: format!("line{}", i + 1),
                    tokens,
                    cue: None,
                });
            }
            InputFormat::Columns => {
                if line.trim().is_empty() {
                    out.extend(cur.take());
                    continue;
                }
                if line.starts_with('#') && !line.contains('\t') {
                    if let Some(v) = line[1..].trim().strip_prefix("id =") {
                        pending_id = Some(v.trim().to_string());
                    }
                    continue;
                }
                let mut fields = line.split('\t');
                let token = fields.next().unwrap_or_default().to_string();
                let cue = match fields.next() {
                    Some(c) => Some(c.parse::<CueTag>().map_err(|e| CorpusError::Annotation {
                        line: i + 1,
                        source: e,
                    })?),
                    None => None,
                };
                let n = out.len();
                let s = cur.get_or_insert_with(|| InputSentence {
                    id: pending_id.take().unwrap_or_else(|| format!("s{n}")),
                    tokens: Vec::new(),
                    cue: cue.map(|_| Vec::new()),
                });
                s.tokens.push(token);
                match (&mut s.cue, cue) {
                    (Some(v), Some(c)) => v.push(c),
                    _ => s.cue = None,
                }
            }
        }
    }
    out.extend(cur.take());
    Ok(out)
}

fn load_vocab(path: &Path) -> Result<Vocabulary, PipelineError> {
    let f = fs::File::open(path).map_err(io_err(path))?;
    Ok(Vocabulary::read(BufReader::new(f))?)
}

fn load_tagger(path: &Path, task: Task, vocab: &Vocabulary) -> Result<Tagger, PipelineError> {
    let ck = Checkpoint::load(path)?;
    ck.check_vocab(&vocab.hash())?;
    if ck.tagger.spec.task != task {
        return Err(PipelineError::Mismatch(format!(
            "{} holds a {} model, expected {}",
            path.display(),
            ck.tagger.spec.task,
            task
        )));
    }
    Ok(ck.tagger)
}

/// Tags the input with the given models and writes column-format predictions.
/// Without a cue model, cue tags come from the input's second column.
pub fn cmd_predict<W: Write>(opts: &PredictOptions, mut out: W) -> Result<usize, PipelineError> {
    let first = opts
        .cue_model
        .as_ref()
        .or(opts.scope_model.as_ref())
        .ok_or_else(|| PipelineError::Config("predict needs --cue-model and/or --scope-model".into()))?;
    let vocab_path = opts
        .vocab
        .clone()
        .unwrap_or_else(|| first.parent().unwrap_or(Path::new(".")).join("vocab.txt"));
    let vocab = load_vocab(&vocab_path)?;
    let cue_tagger = opts.cue_model.as_ref().map(|p| load_tagger(p, Task::Cue, &vocab)).transpose()?;
    let scope_tagger = opts
        .scope_model
        .as_ref()
        .map(|p| load_tagger(p, Task::Scope, &vocab))
        .transpose()?;
    let sentences = read_predict_input(&opts.input, opts.format)?;
    let mut blocks = Vec::with_capacity(sentences.len());
    for s in sentences {
        let ix = encode_for_inference(&s.tokens, &vocab, opts.max_len);
        let mut tokens = s.tokens;
        tokens.truncate(ix.len());
        let cue = match (&cue_tagger, s.cue) {
            (Some(t), _) => predict_cue(t, &ix)?,
            (None, Some(mut c)) => {
                c.truncate(ix.len());
                c
            }
            (None, None) => {
                return Err(PipelineError::Config(format!(
                    "sentence {}: no cue model and no cue column",
                    s.id
                )))
            }
        };
        let scope = match &scope_tagger {
            Some(t) => {
                let cv = cue_vector(&cue);
                Some(if cv.contains(&1) {
                    predict_scope(t, &ix, &cv, opts.postprocess)?
                } else {
                    vec![ScopeTag::O; ix.len()]
                })
            }
            None => None,
        };
        blocks.push(ColumnBlock {
            id: Some(s.id),
            tokens,
            cue,
            scope,
            line: 0,
        });
    }
    write_blocks(&mut out, &blocks).map_err(io_err(Path::new("<output>")))?;
    Ok(blocks.len())
}

/// Compares a prediction file against a gold file, block by block.
pub fn cmd_evaluate(pred_path: &Path, gold_path: &Path) -> Result<String, PipelineError> {
    let pred = read_column_file(pred_path)?;
    let gold = read_column_file(gold_path)?;
    if pred.len() != gold.len() {
        let first = pred.len().min(gold.len());
        return Err(PipelineError::Mismatch(format!(
            "{} predicted instances for {} gold instances; first unmatched is #{}",
            pred.len(),
            gold.len(),
            first + 1
        )));
    }
    for (i, (p, g)) in pred.iter().zip(&gold).enumerate() {
        if p.tokens != g.tokens || p.id != g.id {
            return Err(PipelineError::Mismatch(format!(
                "instance #{} ({}) differs between prediction and gold",
                i + 1,
                g.id.as_deref().unwrap_or("no id")
            )));
        }
    }
    let pc: Vec<Vec<CueTag>> = pred.iter().map(|b| b.cue.clone()).collect();
    let gc: Vec<Vec<CueTag>> = gold.iter().map(|b| b.cue.clone()).collect();
    let mut s = String::from("[cue]\n");
    s.push_str(&CueReport::compute(&pc, &gc)?.render());
    let scopes = |v: &[ColumnBlock]| v.iter().map(|b| b.scope.clone()).collect::<Option<Vec<_>>>();
    if let (Some(ps), Some(gs)) = (scopes(&pred), scopes(&gold)) {
        s.push_str("\n[scope]\n");
        s.push_str(&ScopeReport::compute(&ps, &gs)?.render());
    }
    Ok(s)
}
