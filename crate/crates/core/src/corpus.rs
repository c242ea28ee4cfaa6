//! Corpus ingestion: the three-column vertical format, a rule tokenizer,
//! vocabulary construction, text embedding files, padding and splitting.
//!
//! Column format (UTF-8), one token per line:
//!
//! ```text
//! # id = abstract-17.s3
//! It	NC	O
//! had	NC	O
//! no	C	C
//! effect	NC	A
//! ```
//!
//! A blank line ends an instance. A line starting with `#` and containing no
//! tab is instance metadata; `# id = <value>` names the instance. Prediction
//! files may omit the scope column.

use std::collections::HashMap;
use std::fs::File;
use std::io::{self, BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::labeling::{
    annotation_from_tags, derive_cue_tags, derive_scope_tags, AnnotationError, CueTag,
    NegationAnnotation, ScopeTag,
};
use crate::layers::EmbeddingParams;
use crate::numerics::Mat;

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("line {line}: {source}")]
    Annotation {
        line: usize,
        #[source]
        source: AnnotationError,
    },
    #[error("embedding file line {line}: {msg}")]
    Embedding { line: usize, msg: String },
    #[error("embedding dimension {found} does not match configured dimension {expected}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("split needs at least 3 items, got {0}")]
    TooFewItems(usize),
    #[error("split ratios must be non-negative and sum to 1, got {0:?}")]
    BadRatios((f64, f64, f64)),
    #[error("empty corpus")]
    Empty,
}

impl CorpusError {
    pub fn io(path: &Path, source: io::Error) -> Self {
        CorpusError::Io {
            path: path.to_path_buf(),
            source,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Sentence {
    pub tokens: Vec<String>,
    pub source_id: String,
}

impl Sentence {
    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }
}

/// One sentence paired with one negation; a sentence with two cues appears twice.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NegationInstance {
    pub sentence: Sentence,
    pub annotation: NegationAnnotation,
}

impl NegationInstance {
    pub fn len(&self) -> usize {
        self.sentence.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sentence.is_empty()
    }

    pub fn cue_tags(&self) -> Vec<CueTag> {
        derive_cue_tags(&self.annotation, self.len()).expect("validated at construction")
    }

    pub fn scope_tags(&self) -> Vec<ScopeTag> {
        derive_scope_tags(&self.annotation, self.len()).expect("validated at construction")
    }

    /// Cuts the sentence at `max_len` tokens. Cue tokens past the cut are
    /// dropped and the scope is clipped; a negation whose first cue token is
    /// cut off becomes an assertion.
    pub fn truncated(&self, max_len: usize) -> NegationInstance {
        if self.len() <= max_len {
            return self.clone();
        }
        let tokens = self.sentence.tokens[..max_len].to_vec();
        let cue: Vec<usize> = self
            .annotation
            .cue
            .iter()
            .copied()
            .filter(|&c| c < max_len)
            .collect();
        let annotation = if cue.first() != self.annotation.cue.first() {
            NegationAnnotation::empty()
        } else {
            let scope = self
                .annotation
                .scope
                .and_then(|(l, r)| (l < max_len).then_some((l, r.min(max_len - 1))));
            NegationAnnotation::new(cue, scope)
        };
        NegationInstance {
            sentence: Sentence {
                tokens,
                source_id: self.sentence.source_id.clone(),
            },
            annotation,
        }
    }
}

/// One block of a column file, read without checking the labeling scheme.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ColumnBlock {
    pub id: Option<String>,
    pub tokens: Vec<String>,
    pub cue: Vec<CueTag>,
    pub scope: Option<Vec<ScopeTag>>,
    /// 1-based line of the first token.
    pub line: usize,
}

pub fn read_column_blocks<R: BufRead>(reader: R) -> Result<Vec<ColumnBlock>, CorpusError> {
    let mut blocks = Vec::new();
    let mut cur: Option<ColumnBlock> = None;
    let mut pending_id: Option<String> = None;
    let mut width = 0;
    for (i, line) in reader.lines().enumerate() {
        let lineno = i + 1;
        let line = line.map_err(|e| CorpusError::Parse {
            line: lineno,
            msg: e.to_string(),
        })?;
        let line = line.trim_end_matches(['\r', '\n']);
        if line.trim().is_empty() {
            if let Some(b) = cur.take() {
                blocks.push(b);
            }
            continue;
        }
        if line.starts_with('#') && !line.contains('\t') {
            if cur.is_some() {
                return Err(CorpusError::Parse {
                    line: lineno,
                    msg: "metadata line inside an instance".into(),
                });
            }
            if let Some(v) = line[1..].trim().strip_prefix("id =") {
                pending_id = Some(v.trim().to_string());
            }
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        if !(2..=3).contains(&fields.len()) {
            return Err(CorpusError::Parse {
                line: lineno,
                msg: format!("expected 2 or 3 tab-separated columns, found {}", fields.len()),
            });
        }
        let token = fields[0];
        if token.is_empty() || token.chars().any(char::is_whitespace) {
            return Err(CorpusError::Parse {
                line: lineno,
                msg: format!("bad token {token:?}"),
            });
        }
        let tag_err = |source| CorpusError::Annotation {
            line: lineno,
            source,
        };
        let cue: CueTag = fields[1].parse().map_err(tag_err)?;
        let scope: Option<ScopeTag> = match fields.get(2) {
            Some(s) => Some(s.parse().map_err(tag_err)?),
            None => None,
        };
        let block = cur.get_or_insert_with(|| {
            width = fields.len();
            ColumnBlock {
                id: pending_id.take(),
                tokens: Vec::new(),
                cue: Vec::new(),
                scope: scope.map(|_| Vec::new()),
                line: lineno,
            }
        });
        if fields.len() != width {
            return Err(CorpusError::Parse {
                line: lineno,
                msg: format!("column count changed from {width} to {}", fields.len()),
            });
        }
        block.tokens.push(token.to_string());
        block.cue.push(cue);
        if let (Some(v), Some(s)) = (block.scope.as_mut(), scope) {
            v.push(s);
        }
    }
    if let Some(b) = cur.take() {
        blocks.push(b);
    }
    Ok(blocks)
}

fn block_to_instance(block: ColumnBlock, ordinal: usize) -> Result<NegationInstance, CorpusError> {
    let annotation = annotation_from_tags(&block.cue, block.scope.as_deref()).map_err(|source| {
        CorpusError::Annotation {
            line: block.line,
            source,
        }
    })?;
    Ok(NegationInstance {
        sentence: Sentence {
            tokens: block.tokens,
            source_id: block.id.unwrap_or_else(|| format!("s{ordinal}")),
        },
        annotation,
    })
}

/// Parses gold data, validating every block against the labeling scheme.
pub fn parse_columns<R: BufRead>(reader: R) -> Result<Vec<NegationInstance>, CorpusError> {
    read_column_blocks(reader)?
        .into_iter()
        .enumerate()
        .map(|(i, b)| block_to_instance(b, i))
        .collect()
}

pub fn parse_column_file(path: &Path) -> Result<Vec<NegationInstance>, CorpusError> {
    let file = File::open(path).map_err(|e| CorpusError::io(path, e))?;
    parse_columns(BufReader::new(file))
}

pub fn read_column_file(path: &Path) -> Result<Vec<ColumnBlock>, CorpusError> {
    let file = File::open(path).map_err(|e| CorpusError::io(path, e))?;
    read_column_blocks(BufReader::new(file))
}

pub fn write_blocks<W: Write>(mut w: W, blocks: &[ColumnBlock]) -> io::Result<()> {
    for (i, b) in blocks.iter().enumerate() {
        if i > 0 {
            writeln!(w)?;
        }
        if let Some(id) = &b.id {
            writeln!(w, "# id = {id}")?;
        }
        for k in 0..b.tokens.len() {
            write!(w, "{}\t{}", b.tokens[k], b.cue[k])?;
            if let Some(s) = &b.scope {
                write!(w, "\t{}", s[k])?;
            }
            writeln!(w)?;
        }
    }
    Ok(())
}

pub fn instance_block(inst: &NegationInstance) -> ColumnBlock {
    ColumnBlock {
        id: Some(inst.sentence.source_id.clone()),
        tokens: inst.sentence.tokens.clone(),
        cue: inst.cue_tags(),
        scope: Some(inst.scope_tags()),
        line: 0,
    }
}

pub fn write_instances<W: Write>(w: W, instances: &[NegationInstance]) -> io::Result<()> {
    let blocks: Vec<ColumnBlock> = instances.iter().map(instance_block).collect();
    write_blocks(w, &blocks)
}

const LEADING: &[char] = &['(', '[', '{', '"', '\''];
const TRAILING: &[char] = &['.', ',', ';', ':', '!', '?', ')', ']', '}', '"', '\''];

fn closer_is_matched(body: &str, closer: char) -> bool {
    let opener = match closer {
        ')' => '(',
        ']' => '[',
        '}' => '{',
        _ => return false,
    };
    body.chars().filter(|&c| c == opener).count() >= body.chars().filter(|&c| c == closer).count()
}

/// Whitespace split, then leading and trailing punctuation peeled off into
/// single-character tokens. A closing bracket stays attached when the rest of
/// the chunk opens it, so `CD4(+)` and `E2F-1/DP1` survive whole.
pub fn tokenize(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    for chunk in text.split_whitespace() {
        let mut body = chunk;
        let mut lead = Vec::new();
        while let Some(c) = body.chars().next() {
            if LEADING.contains(&c) && body.len() > c.len_utf8() {
                lead.push(c.to_string());
                body = &body[c.len_utf8()..];
            } else {
                break;
            }
        }
        let mut trail = Vec::new();
        while let Some(c) = body.chars().last() {
            if body.len() == c.len_utf8() {
                break;
            }
            let keep = matches!(c, ')' | ']' | '}') && closer_is_matched(body, c);
            if TRAILING.contains(&c) && !keep {
                trail.push(c.to_string());
                body = &body[..body.len() - c.len_utf8()];
            } else {
                break;
            }
        }
        out.extend(lead);
        out.push(body.to_string());
        out.extend(trail.into_iter().rev());
    }
    out
}

pub const OOV_TOKEN: &str = "<oov>";

/// Token → index map; index 0 is reserved for out-of-vocabulary tokens.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocabulary {
    tokens: Vec<String>,
    index: HashMap<String, usize>,
}

impl Vocabulary {
    pub const OOV_INDEX: usize = 0;

    pub fn from_tokens<I, S>(tokens: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let mut v = Vocabulary {
            tokens: vec![OOV_TOKEN.to_string()],
            index: HashMap::new(),
        };
        for t in tokens {
            let t = t.as_ref();
            if !v.index.contains_key(t) {
                v.index.insert(t.to_string(), v.tokens.len());
                v.tokens.push(t.to_string());
            }
        }
        v
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn oov_index(&self) -> usize {
        Self::OOV_INDEX
    }

    pub fn lookup(&self, token: &str) -> usize {
        self.index.get(token).copied().unwrap_or(Self::OOV_INDEX)
    }

    pub fn contains(&self, token: &str) -> bool {
        self.index.contains_key(token)
    }

    pub fn token(&self, ix: usize) -> Option<&str> {
        self.tokens.get(ix).map(String::as_str)
    }

    pub fn encode(&self, tokens: &[String]) -> Vec<usize> {
        tokens.iter().map(|t| self.lookup(t)).collect()
    }

    /// Hex SHA-256 of the index-ordered token list.
    pub fn hash(&self) -> String {
        let mut h = Sha256::new();
        for t in &self.tokens {
            h.update(t.as_bytes());
            h.update(b"\n");
        }
        h.finalize().iter().map(|b| format!("{b:02x}")).collect()
    }

    /// One token per line in index order; line 1 is the OOV placeholder.
    pub fn write<W: Write>(&self, mut w: W) -> io::Result<()> {
        for t in &self.tokens {
            writeln!(w, "{t}")?;
        }
        Ok(())
    }

    pub fn read<R: BufRead>(reader: R) -> Result<Self, CorpusError> {
        let mut lines = reader.lines();
        match lines.next() {
            Some(Ok(first)) if first == OOV_TOKEN => {}
            _ => {
                return Err(CorpusError::Parse {
                    line: 1,
                    msg: format!("vocabulary must start with {OOV_TOKEN}"),
                })
            }
        }
        let mut tokens = Vec::new();
        for (i, l) in lines.enumerate() {
            let l = l.map_err(|e| CorpusError::Parse {
                line: i + 2,
                msg: e.to_string(),
            })?;
            tokens.push(l);
        }
        let v = Vocabulary::from_tokens(&tokens);
        if v.len() != tokens.len() + 1 {
            return Err(CorpusError::Parse {
                line: 0,
                msg: "duplicate vocabulary entries".into(),
            });
        }
        Ok(v)
    }
}

/// Distinct tokens in first-occurrence order, case-sensitive.
pub fn build_vocab(instances: &[NegationInstance]) -> Result<Vocabulary, CorpusError> {
    if instances.is_empty() {
        return Err(CorpusError::Empty);
    }
    Ok(Vocabulary::from_tokens(
        instances.iter().flat_map(|i| i.sentence.tokens.iter()),
    ))
}

#[derive(Debug, Clone)]
pub struct LoadedEmbeddings {
    pub params: EmbeddingParams,
    /// `found[ix]` is true when vocabulary entry `ix` had a vector in the file.
    pub found: Vec<bool>,
}

impl LoadedEmbeddings {
    /// Fraction of vocabulary types (OOV slot excluded) missing from the file.
    pub fn oov_type_rate(&self) -> f64 {
        let total = self.found.len().saturating_sub(1);
        if total == 0 {
            return 0.0;
        }
        let missing = self.found.iter().skip(1).filter(|&&f| !f).count();
        missing as f64 / total as f64
    }
}

/// Reads `<count> <d>` then `token v_1 .. v_d` lines. Vocabulary entries not
/// in the file, and the OOV slot, keep zero vectors.
pub fn load_embeddings<R: BufRead>(
    reader: R,
    vocab: &Vocabulary,
    expected_dim: Option<usize>,
    trainable: bool,
) -> Result<LoadedEmbeddings, CorpusError> {
    let mut lines = reader.lines();
    let header = lines
        .next()
        .ok_or(CorpusError::Embedding {
            line: 1,
            msg: "missing header".into(),
        })?
        .map_err(|e| CorpusError::Embedding {
            line: 1,
            msg: e.to_string(),
        })?;
    let head: Vec<&str> = header.split_whitespace().collect();
    let parse_count = |s: &str| {
        s.parse::<usize>().map_err(|_| CorpusError::Embedding {
            line: 1,
            msg: format!("bad header {header:?}"),
        })
    };
    if head.len() != 2 {
        return Err(CorpusError::Embedding {
            line: 1,
            msg: format!("header must be \"<count> <dim>\", got {header:?}"),
        });
    }
    let count = parse_count(head[0])?;
    let dim = parse_count(head[1])?;
    if let Some(expected) = expected_dim {
        if expected != dim {
            return Err(CorpusError::DimensionMismatch {
                expected,
                found: dim,
            });
        }
    }
    let mut params = EmbeddingParams::zeros(dim, vocab.len(), vocab.oov_index(), trainable);
    let mut found = vec![false; vocab.len()];
    let mut rows = 0;
    for (i, line) in lines.enumerate() {
        let lineno = i + 2;
        let line = line.map_err(|e| CorpusError::Embedding {
            line: lineno,
            msg: e.to_string(),
        })?;
        if line.trim().is_empty() {
            continue;
        }
        rows += 1;
        let mut parts = line.split_whitespace();
        let token = parts.next().expect("non-empty line");
        let values: Result<Vec<f64>, _> = parts.map(str::parse::<f64>).collect();
        let values = values.map_err(|e| CorpusError::Embedding {
            line: lineno,
            msg: e.to_string(),
        })?;
        if values.len() != dim {
            return Err(CorpusError::Embedding {
                line: lineno,
                msg: format!("{} components, expected {dim}", values.len()),
            });
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(CorpusError::Embedding {
                line: lineno,
                msg: "non-finite component".into(),
            });
        }
        let ix = vocab.lookup(token);
        if ix != vocab.oov_index() && !found[ix] {
            params.matrix.set_column(ix, &values);
            found[ix] = true;
        }
    }
    if rows != count {
        return Err(CorpusError::Embedding {
            line: 1,
            msg: format!("header announces {count} vectors, file has {rows}"),
        });
    }
    Ok(LoadedEmbeddings { params, found })
}

pub fn load_embedding_file(
    path: &Path,
    vocab: &Vocabulary,
    expected_dim: Option<usize>,
    trainable: bool,
) -> Result<LoadedEmbeddings, CorpusError> {
    let file = File::open(path).map_err(|e| CorpusError::io(path, e))?;
    load_embeddings(BufReader::new(file), vocab, expected_dim, trainable)
}

/// Writes a matrix in the embedding text format, skipping the OOV slot.
pub fn write_embeddings<W: Write>(mut w: W, vocab: &Vocabulary, matrix: &Mat) -> io::Result<()> {
    writeln!(w, "{} {}", vocab.len() - 1, matrix.rows())?;
    for ix in 1..vocab.len() {
        write!(w, "{}", vocab.token(ix).unwrap_or_default())?;
        for v in matrix.column(ix) {
            write!(w, " {v}")?;
        }
        writeln!(w)?;
    }
    Ok(())
}

/// Cuts `seq` at `max_len` or right-pads it with `pad`; the mask marks real positions.
pub fn pad_truncate<T: Copy>(seq: &[T], max_len: usize, pad: T) -> (Vec<T>, Vec<bool>) {
    let kept = seq.len().min(max_len);
    let mut out = Vec::with_capacity(max_len);
    out.extend_from_slice(&seq[..kept]);
    out.resize(max_len, pad);
    let mask = (0..max_len).map(|k| k < kept).collect();
    (out, mask)
}

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetSplit<T> {
    pub train: Vec<T>,
    pub validation: Vec<T>,
    pub test: Vec<T>,
    pub seed: u64,
}

/// Largest-remainder allocation of `total` items by `ratios`; ties go to
/// the earlier part.
pub fn split_sizes(total: usize, ratios: [f64; 3]) -> [usize; 3] {
    let exact: Vec<f64> = ratios.iter().map(|r| r * total as f64).collect();
    let mut sizes = [0usize; 3];
    for i in 0..3 {
        sizes[i] = exact[i].floor() as usize;
    }
    let mut rest = total - sizes.iter().sum::<usize>();
    let mut order: Vec<usize> = (0..3).collect();
    order.sort_by(|&a, &b| {
        let fa = exact[a] - exact[a].floor();
        let fb = exact[b] - exact[b].floor();
        fb.partial_cmp(&fa).unwrap_or(std::cmp::Ordering::Equal).then(a.cmp(&b))
    });
    for &i in order.iter().cycle() {
        if rest == 0 {
            break;
        }
        sizes[i] += 1;
        rest -= 1;
    }
    sizes
}

/// Seeded shuffle, then contiguous train/validation/test assignment.
pub fn split_dataset<T: Clone>(
    items: &[T],
    ratios: (f64, f64, f64),
    seed: u64,
) -> Result<DatasetSplit<T>, CorpusError> {
    if items.len() < 3 {
        return Err(CorpusError::TooFewItems(items.len()));
    }
    let r = [ratios.0, ratios.1, ratios.2];
    if r.iter().any(|&x| !(0.0..=1.0).contains(&x)) || (r.iter().sum::<f64>() - 1.0).abs() > 1e-9
    {
        return Err(CorpusError::BadRatios(ratios));
    }
    let mut order: Vec<usize> = (0..items.len()).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let [a, b, _] = split_sizes(items.len(), r);
    let pick = |ix: &[usize]| ix.iter().map(|&i| items[i].clone()).collect::<Vec<T>>();
    Ok(DatasetSplit {
        train: pick(&order[..a]),
        validation: pick(&order[a..a + b]),
        test: pick(&order[a + b..]),
        seed,
    })
}

/// All instances of one sentence (one per negation, or a single assertion).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SentenceGroup {
    pub instances: Vec<NegationInstance>,
}

impl SentenceGroup {
    pub fn sentence(&self) -> &Sentence {
        &self.instances[0].sentence
    }

    /// Sentence-level cue tags: the union of every instance's cues.
    pub fn cue_tags(&self) -> Vec<CueTag> {
        let mut cue: Vec<usize> = self
            .instances
            .iter()
            .flat_map(|i| i.annotation.cue.iter().copied())
            .collect();
        cue.sort_unstable();
        cue.dedup();
        derive_cue_tags(&NegationAnnotation::new(cue, None), self.sentence().len())
            .expect("cue positions come from validated instances")
    }

    pub fn has_negation(&self) -> bool {
        self.instances.iter().any(|i| i.annotation.is_negation())
    }
}

/// Groups instances by `(source_id, tokens)` in first-occurrence order.
pub fn group_sentences(instances: &[NegationInstance]) -> Vec<SentenceGroup> {
    let mut groups: Vec<SentenceGroup> = Vec::new();
    let mut seen: HashMap<(&str, &[String]), usize> = HashMap::new();
    for inst in instances {
        let key = (inst.sentence.source_id.as_str(), inst.sentence.tokens.as_slice());
        match seen.get(&key) {
            Some(&g) => groups[g].instances.push(inst.clone()),
            None => {
                seen.insert(key, groups.len());
                groups.push(SentenceGroup {
                    instances: vec![inst.clone()],
                });
            }
        }
    }
    groups
}

#[derive(Debug, Clone, PartialEq)]
pub struct CorpusStats {
    pub sentences: usize,
    pub instances: usize,
    pub negation_instances: usize,
    pub tokens: usize,
    pub truncated_sentences: usize,
    /// Token-level OOV rate against an embedding file, when one was loaded.
    pub oov_token_rate: Option<f64>,
}

impl CorpusStats {
    /// Negation instances per sentence, in percent.
    pub fn negation_pct(&self) -> f64 {
        100.0 * self.negation_instances as f64 / self.sentences.max(1) as f64
    }

    pub fn compute(
        instances: &[NegationInstance],
        max_len: usize,
        vocab_and_found: Option<(&Vocabulary, &[bool])>,
    ) -> Self {
        let groups = group_sentences(instances);
        let tokens: usize = groups.iter().map(|g| g.sentence().len()).sum();
        let oov_token_rate = vocab_and_found.map(|(vocab, found)| {
            let missing = groups
                .iter()
                .flat_map(|g| g.sentence().tokens.iter())
                .filter(|t| !found[vocab.lookup(t)])
                .count();
            missing as f64 / tokens.max(1) as f64
        });
        CorpusStats {
            sentences: groups.len(),
            instances: instances.len(),
            negation_instances: instances.iter().filter(|i| i.annotation.is_negation()).count(),
            tokens,
            truncated_sentences: groups.iter().filter(|g| g.sentence().len() > max_len).count(),
            oov_token_rate,
        }
    }

    pub fn render(&self) -> String {
        let mut s = format!(
            "sentences = {}\ninstances = {}\nnegation_instances = {}\nnegation_pct = {:.2}\ntokens = {}\ntruncated_sentences = {}\n",
            self.sentences,
            self.instances,
            self.negation_instances,
            self.negation_pct(),
            self.tokens,
            self.truncated_sentences
        );
        if let Some(r) = self.oov_token_rate {
            s.push_str(&format!("oov_token_pct = {:.2}\n", 100.0 * r));
        }
        s
    }
}
