//! Plain-text model checkpoints.
//!
//! ```text
//! negscope-checkpoint v1
//! task scope
//! encoder bilstm
//! head crf
//! labels O B C A
//! dim 200
//! units 200
//! vocab_size 17801
//! vocab_hash <sha256 hex>
//! embeddings_trainable false
//! tensor embedding 200 17801
//! <one line per row, space-separated values>
//! tensor forward.w_e.i 200 200
//! ...
//! end
//! ```
//!
//! Values use Rust's shortest round-trip formatting, so a save/load cycle is
//! bit-exact. Tensor order is fixed: `embedding`, then the network tensors in
//! [`Network::named_tensors`] order.

use std::fs;
use std::io::{self, BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::layers::EmbeddingParams;
use crate::model::{Encoder, Head, ModelSpec, Network, Tagger, Task};
use crate::numerics::Mat;

pub const MAGIC: &str = "negscope-checkpoint v1";

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("checkpoint line {line}: {msg}")]
    Format { line: usize, msg: String },
    #[error("vocabulary hash mismatch: checkpoint has {checkpoint}, vocabulary has {vocab}")]
    VocabMismatch { checkpoint: String, vocab: String },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub tagger: Tagger,
    pub vocab_hash: String,
}

impl Checkpoint {
    pub fn check_vocab(&self, vocab_hash: &str) -> Result<(), CheckpointError> {
        if self.vocab_hash != vocab_hash {
            return Err(CheckpointError::VocabMismatch {
                checkpoint: self.vocab_hash.clone(),
                vocab: vocab_hash.to_string(),
            });
        }
        Ok(())
    }

    pub fn write<W: Write>(&self, mut w: W) -> io::Result<()> {
        let t = &self.tagger;
        let spec = &t.spec;
        writeln!(w, "{MAGIC}")?;
        writeln!(w, "task {}", spec.task)?;
        writeln!(w, "encoder {}", spec.encoder)?;
        writeln!(w, "head {}", spec.head)?;
        writeln!(w, "labels {}", spec.task.label_names().join(" "))?;
        writeln!(w, "dim {}", spec.dim)?;
        writeln!(w, "units {}", spec.units)?;
        writeln!(w, "vocab_size {}", t.embedding.vocab_size())?;
        writeln!(w, "vocab_hash {}", self.vocab_hash)?;
        writeln!(w, "embeddings_trainable {}", t.embedding.trainable)?;
        let m = &t.embedding.matrix;
        write_tensor(&mut w, "embedding", m.rows(), m.cols(), m.data())?;
        for (name, r, c, data) in t.net.named_tensors() {
            write_tensor(&mut w, &name, r, c, data)?;
        }
        writeln!(w, "end")
    }

    pub fn save(&self, path: &Path) -> Result<(), CheckpointError> {
        let io_err = |source| CheckpointError::Io {
            path: path.to_path_buf(),
            source,
        };
        let mut w = BufWriter::new(fs::File::create(path).map_err(io_err)?);
        self.write(&mut w).map_err(io_err)?;
        w.flush().map_err(io_err)
    }

    pub fn read<R: BufRead>(reader: R) -> Result<Self, CheckpointError> {
        let mut lines = Lines::new(reader);
        let magic = lines.next_line()?;
        if magic != MAGIC {
            return Err(lines.err(format!("expected {MAGIC:?}, found {magic:?}")));
        }
        let task: Task = lines.field("task")?;
        let encoder: Encoder = lines.field("encoder")?;
        let head: Head = lines.field("head")?;
        let labels: String = lines.field("labels")?;
        if labels.split(' ').ne(task.label_names()) {
            return Err(lines.err(format!("labels {labels:?} do not match task {task}")));
        }
        let dim: usize = lines.field("dim")?;
        let units: usize = lines.field("units")?;
        let vocab_size: usize = lines.field("vocab_size")?;
        let vocab_hash: String = lines.field("vocab_hash")?;
        let trainable: bool = lines.field("embeddings_trainable")?;
        let spec = ModelSpec {
            task,
            encoder,
            head,
            dim,
            units,
        };

        let matrix = lines.tensor("embedding", dim, vocab_size)?;
        let mut net = Network::zeros(&spec);
        let expected: Vec<(String, usize, usize)> = net
            .named_tensors()
            .into_iter()
            .map(|(n, r, c, _)| (n, r, c))
            .collect();
        for ((name, r, c), dst) in expected.into_iter().zip(net.slices_mut()) {
            dst.copy_from_slice(lines.tensor(&name, r, c)?.data());
        }
        let end = lines.next_line()?;
        if end != "end" {
            return Err(lines.err(format!("expected end, found {end:?}")));
        }
        let embedding = EmbeddingParams {
            matrix,
            trainable,
            oov_index: 0,
        };
        Ok(Checkpoint {
            tagger: Tagger {
                spec,
                embedding,
                net,
            },
            vocab_hash,
        })
    }

    pub fn load(path: &Path) -> Result<Self, CheckpointError> {
        let f = fs::File::open(path).map_err(|source| CheckpointError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::read(BufReader::new(f)).map_err(|e| match e {
            CheckpointError::Io { source, .. } => CheckpointError::Io {
                path: path.to_path_buf(),
                source,
            },
            other => other,
        })
    }
}

fn write_tensor<W: Write>(w: &mut W, name: &str, rows: usize, cols: usize, data: &[f64]) -> io::Result<()> {
    writeln!(w, "tensor {name} {rows} {cols}")?;
    for row in data.chunks(cols.max(1)) {
        let mut first = true;
        for v in row {
            if !first {
                w.write_all(b" ")?;
            }
            first = false;
            write!(w, "{v}")?;
        }
        writeln!(w)?;
    }
    Ok(())
}

struct Lines<R> {
    inner: io::Lines<R>,
    line: usize,
}

impl<R: BufRead> Lines<R> {
    fn new(r: R) -> Self {
        Lines {
            inner: r.lines(),
            line: 0,
        }
    }

    fn err(&self, msg: String) -> CheckpointError {
        CheckpointError::Format {
            line: self.line,
            msg,
        }
    }

    fn next_line(&mut self) -> Result<String, CheckpointError> {
        self.line += 1;
        match self.inner.next() {
            Some(Ok(l)) => Ok(l),
            Some(Err(source)) => Err(CheckpointError::Io {
                path: PathBuf::new(),
                source,
            }),
            None => Err(self.err("unexpected end of file".into())),
        }
    }

    fn field<T: std::str::FromStr>(&mut self, key: &str) -> Result<T, CheckpointError> {
        let l = self.next_line()?;
        let value = l
            .strip_prefix(key)
            .and_then(|rest| rest.strip_prefix(' '))
            .ok_or_else(|| self.err(format!("expected {key:?}, found {l:?}")))?;
        value
            .parse()
            .map_err(|_| self.err(format!("bad value for {key}: {value:?}")))
    }

    fn tensor(&mut self, name: &str, rows: usize, cols: usize) -> Result<Mat, CheckpointError> {
        let header = self.next_line()?;
        let want = format!("tensor {name} {rows} {cols}");
        if header != want {
            return Err(self.err(format!("expected {want:?}, found {header:?}")));
        }
        let mut data = Vec::with_capacity(rows * cols);
        for _ in 0..rows {
            let l = self.next_line()?;
            let before = data.len();
            for tok in l.split(' ').filter(|t| !t.is_empty()) {
                let v: f64 = tok
                    .parse()
                    .map_err(|_| self.err(format!("bad number {tok:?} in {name}")))?;
                if !v.is_finite() {
                    return Err(self.err(format!("non-finite value in {name}")));
                }
                data.push(v);
            }
            if data.len() - before != cols {
                return Err(self.err(format!(
                    "{name}: row has {} values, expected {cols}",
                    data.len() - before
                )));
            }
        }
        Mat::from_vec(rows, cols, data).map_err(|e| self.err(e.to_string()))
    }
}
