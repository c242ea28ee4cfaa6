//! Cue and scope tag alphabets, conversion between annotations and tag
//! sequences, scope geometry helpers, and the scope smoother.

use std::fmt;
use std::str::FromStr;

use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum AnnotationError {
    #[error("token index {index} out of bounds for sentence of length {len}")]
    OutOfBounds { index: usize, len: usize },
    #[error("cue token {0} lies outside the scope")]
    CueOutsideScope(usize),
    #[error("scope without a cue")]
    ScopeWithoutCue,
    #[error("unknown tag {0:?}")]
    UnknownTag(String),
    #[error("cue tags {found} do not follow the labeling scheme (expected {expected})")]
    BadCueTags { found: String, expected: String },
    #[error("scope tags {0} do not follow the O* B* C A* O* pattern")]
    BadScopePattern(String),
    #[error("scope C tag at {found} but first cue token is at {expected}")]
    MisplacedScopeCue { found: usize, expected: usize },
    #[error("cue vector has no cue bit set")]
    NoCue,
    #[error("length mismatch: {0} vs {1}")]
    Length(usize, usize),
}

/// Common surface of the two tag alphabets.
pub trait Tag: Copy + Eq + fmt::Debug + fmt::Display + FromStr + 'static {
    const ALL: &'static [Self];

    fn index(self) -> usize;

    fn from_index(ix: usize) -> Option<Self> {
        Self::ALL.get(ix).copied()
    }

    fn as_str(self) -> &'static str;

    /// Tags counted as positive by the token-level metrics.
    fn is_positive(self) -> bool;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum CueTag {
    NC,
    C,
    MC,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ScopeTag {
    O,
    B,
    C,
    A,
}

impl Tag for CueTag {
    const ALL: &'static [Self] = &[CueTag::NC, CueTag::C, CueTag::MC];

    fn index(self) -> usize {
        self as usize
    }

    fn as_str(self) -> &'static str {
        match self {
            CueTag::NC => "NC",
            CueTag::C => "C",
            CueTag::MC => "MC",
        }
    }

    fn is_positive(self) -> bool {
        self != CueTag::NC
    }
}

impl Tag for ScopeTag {
    const ALL: &'static [Self] = &[ScopeTag::O, ScopeTag::B, ScopeTag::C, ScopeTag::A];

    fn index(self) -> usize {
        self as usize
    }

    fn as_str(self) -> &'static str {
        match self {
            ScopeTag::O => "O",
            ScopeTag::B => "B",
            ScopeTag::C => "C",
            ScopeTag::A => "A",
        }
    }

    fn is_positive(self) -> bool {
        self != ScopeTag::O
    }
}

macro_rules! tag_text {
    ($t:ty) => {
        impl fmt::Display for $t {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(self.as_str())
            }
        }

        impl FromStr for $t {
            type Err = AnnotationError;

            fn from_str(s: &str) -> Result<Self, Self::Err> {
                <$t as Tag>::ALL
                    .iter()
                    .copied()
                    .find(|t| t.as_str() == s)
                    .ok_or_else(|| AnnotationError::UnknownTag(s.to_string()))
            }
        }
    };
}

tag_text!(CueTag);
tag_text!(ScopeTag);

pub fn tags_to_string<T: Tag>(tags: &[T]) -> String {
    tags.iter().map(|t| t.as_str()).collect::<Vec<_>>().join(" ")
}

/// One negation: its cue tokens and the inclusive scope span.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct NegationAnnotation {
    /// Sorted, deduplicated token positions.
    pub cue: Vec<usize>,
    pub scope: Option<(usize, usize)>,
}

impl NegationAnnotation {
    pub fn new(mut cue: Vec<usize>, scope: Option<(usize, usize)>) -> Self {
        cue.sort_unstable();
        cue.dedup();
        NegationAnnotation { cue, scope }
    }

    /// An assertion sentence: no cue, no scope.
    pub fn empty() -> Self {
        Self::default()
    }

    pub fn is_negation(&self) -> bool {
        !self.cue.is_empty()
    }

    pub fn validate(&self, n: usize) -> Result<(), AnnotationError> {
        if let Some(&index) = self.cue.iter().find(|&&c| c >= n) {
            return Err(AnnotationError::OutOfBounds { index, len: n });
        }
        if let Some((l, r)) = self.scope {
            if l > r || r >= n {
                return Err(AnnotationError::OutOfBounds {
                    index: r.max(l),
                    len: n,
                });
            }
            if self.cue.is_empty() {
                return Err(AnnotationError::ScopeWithoutCue);
            }
            if let Some(&c) = self.cue.iter().find(|&&c| c < l || c > r) {
                return Err(AnnotationError::CueOutsideScope(c));
            }
        }
        Ok(())
    }
}

/// Runs of ≥2 adjacent cue tokens are `MC`; every other cue token is `C`.
pub fn derive_cue_tags(ann: &NegationAnnotation, n: usize) -> Result<Vec<CueTag>, AnnotationError> {
    if let Some(&index) = ann.cue.iter().find(|&&c| c >= n) {
        return Err(AnnotationError::OutOfBounds { index, len: n });
    }
    let mut is_cue = vec![false; n];
    for &c in &ann.cue {
        is_cue[c] = true;
    }
    Ok((0..n)
        .map(|k| {
            if !is_cue[k] {
                CueTag::NC
            } else if (k > 0 && is_cue[k - 1]) || (k + 1 < n && is_cue[k + 1]) {
                CueTag::MC
            } else {
                CueTag::C
            }
        })
        .collect())
}

pub fn derive_scope_tags(
    ann: &NegationAnnotation,
    n: usize,
) -> Result<Vec<ScopeTag>, AnnotationError> {
    ann.validate(n)?;
    let mut tags = vec![ScopeTag::O; n];
    if let Some((l, r)) = ann.scope {
        let first_cue = ann.cue[0];
        for (k, t) in tags.iter_mut().enumerate().take(r + 1).skip(l) {
            *t = match k.cmp(&first_cue) {
                std::cmp::Ordering::Less => ScopeTag::B,
                std::cmp::Ordering::Equal => ScopeTag::C,
                std::cmp::Ordering::Greater => ScopeTag::A,
            };
        }
    }
    Ok(tags)
}

/// Rebuilds the annotation behind a gold cue/scope tag pair, rejecting tag
/// sequences the labeling scheme could not have produced.
pub fn annotation_from_tags(
    cue_tags: &[CueTag],
    scope_tags: Option<&[ScopeTag]>,
) -> Result<NegationAnnotation, AnnotationError> {
    let n = cue_tags.len();
    let cue: Vec<usize> = (0..n).filter(|&k| cue_tags[k] != CueTag::NC).collect();
    let mut ann = NegationAnnotation::new(cue, None);
    let expected = derive_cue_tags(&ann, n)?;
    if expected != cue_tags {
        return Err(AnnotationError::BadCueTags {
            found: tags_to_string(cue_tags),
            expected: tags_to_string(&expected),
        });
    }
    if let Some(scope) = scope_tags {
        if scope.len() != n {
            return Err(AnnotationError::Length(n, scope.len()));
        }
        if let Some(bounds) = scope_bounds(scope) {
            if !valid_gold_pattern(scope) {
                return Err(AnnotationError::BadScopePattern(tags_to_string(scope)));
            }
            let Some(&first) = ann.cue.first() else {
                return Err(AnnotationError::ScopeWithoutCue);
            };
            let c_pos = scope.iter().position(|&t| t == ScopeTag::C).unwrap_or(0);
            if c_pos != first {
                return Err(AnnotationError::MisplacedScopeCue {
                    found: c_pos,
                    expected: first,
                });
            }
            ann.scope = Some(bounds);
            ann.validate(n)?;
        }
    }
    Ok(ann)
}

/// 1 where the tag is a cue (`C` or `MC`), else 0.
pub fn cue_vector(tags: &[CueTag]) -> Vec<u8> {
    tags.iter().map(|t| u8::from(t.is_positive())).collect()
}

/// Leftmost and rightmost in-scope positions.
pub fn scope_bounds(tags: &[ScopeTag]) -> Option<(usize, usize)> {
    let left = tags.iter().position(|t| t.is_positive())?;
    let right = tags.iter().rposition(|t| t.is_positive())?;
    Some((left, right))
}

/// No O tag between the scope bounds. Vacuously true without any in-scope tag.
pub fn is_continuous(tags: &[ScopeTag]) -> bool {
    match scope_bounds(tags) {
        Some((l, r)) => tags[l..=r].iter().all(|t| t.is_positive()),
        None => true,
    }
}

/// Matches `O* B* C A* O*`.
pub fn valid_gold_pattern(tags: &[ScopeTag]) -> bool {
    // 0: leading O, 1: B run, 2: after C (A run), 3: trailing O
    let mut state = 0;
    for &t in tags {
        state = match (state, t) {
            (0, ScopeTag::O) => 0,
            (0 | 1, ScopeTag::B) => 1,
            (0 | 1, ScopeTag::C) => 2,
            (2, ScopeTag::A) => 2,
            (2 | 3, ScopeTag::O) => 3,
            _ => return false,
        };
    }
    state >= 2
}

/// Forces one continuous scope around the cue.
///
/// Cue tokens, and everything between the first and last cue token, are put
/// in scope. Starting from the run that contains the first cue token, a
/// neighbouring in-scope run is absorbed when the gap of O tokens separating
/// it is no longer than the run itself; the left side is scanned first, then
/// the right, each until a run is rejected or the sentence ends. Tokens
/// outside the final block become O, and the block is relabelled B/C/A
/// around the first cue token.
pub fn postprocess(pred: &[ScopeTag], cue: &[u8]) -> Result<Vec<ScopeTag>, AnnotationError> {
    if pred.len() != cue.len() {
        return Err(AnnotationError::Length(pred.len(), cue.len()));
    }
    let first = cue.iter().position(|&b| b != 0).ok_or(AnnotationError::NoCue)?;
    let last = cue.iter().rposition(|&b| b != 0).unwrap_or(first);
    let n = pred.len();
    let mut inside: Vec<bool> = pred.iter().map(|t| t.is_positive()).collect();
    inside[first..=last].iter_mut().for_each(|x| *x = true);

    let mut lo = first;
    while lo > 0 && inside[lo - 1] {
        lo -= 1;
    }
    let mut hi = first;
    while hi + 1 < n && inside[hi + 1] {
        hi += 1;
    }

    // left
    loop {
        let Some(run_end) = (0..lo).rev().find(|&j| inside[j]) else {
            break;
        };
        let gap = lo - run_end - 1;
        let mut run_start = run_end;
        while run_start > 0 && inside[run_start - 1] {
            run_start -= 1;
        }
        if gap <= run_end - run_start + 1 {
            lo = run_start;
        } else {
            break;
        }
    }
    // right
    loop {
        let Some(run_start) = (hi + 1..n).find(|&j| inside[j]) else {
            break;
        };
        let gap = run_start - hi - 1;
        let mut run_end = run_start;
        while run_end + 1 < n && inside[run_end + 1] {
            run_end += 1;
        }
        if gap <= run_end - run_start + 1 {
            hi = run_end;
        } else {
            break;
        }
    }

    Ok((0..n)
        .map(|k| {
            if k < lo || k > hi {
                ScopeTag::O
            } else if k < first {
                ScopeTag::B
            } else if k == first {
                ScopeTag::C
            } else {
                ScopeTag::A
            }
        })
        .collect())
}
