//! A small generated corpus with learnable cue and scope patterns, used for
//! smoke tests and the bundled toy data.
//!
//! Sentences are one or two clauses. A negated clause carries one of the cue
//! words; its scope runs from the cue to the end of the clause, and also covers
//! the clause subject when the cue is `not`.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::corpus::{NegationInstance, Sentence};
use crate::labeling::NegationAnnotation;

const SUBJECTS: &[&str] = &["cells", "patients", "mice", "samples", "tumors"];
const VERBS: &[&str] = &["showed", "induced", "affected", "reduced", "altered", "expressed"];
const OBJECTS: &[&str] = &["binding", "activity", "levels", "expression", "growth", "signal"];
const MODIFIERS: &[&str] = &["significant", "detectable", "marked", "any"];
const PREPS: &[&str] = &["in", "of", "after"];
const SINGLE_CUES: &[&str] = &["no", "not", "without", "lacked"];

/// Every token the generator can emit.
pub fn vocabulary() -> Vec<&'static str> {
    let mut v: Vec<&str> = Vec::new();
    for list in [SUBJECTS, VERBS, OBJECTS, MODIFIERS, PREPS, SINGLE_CUES] {
        v.extend_from_slice(list);
    }
    v.extend(["neither", "nor", "but", "and", ",", "."]);
    v
}

struct Clause {
    tokens: Vec<String>,
    cue: Vec<usize>,
    scope: Option<(usize, usize)>,
}

fn pick<'a, R: Rng>(rng: &mut R, list: &[&'a str]) -> &'a str {
    list.choose(rng).copied().expect("non-empty word list")
}

fn object_phrase<R: Rng>(rng: &mut R, out: &mut Vec<String>) {
    if rng.gen_bool(0.4) {
        out.push(pick(rng, MODIFIERS).into());
    }
    out.push(pick(rng, OBJECTS).into());
    if rng.gen_bool(0.3) {
        out.push(pick(rng, PREPS).into());
        out.push(pick(rng, SUBJECTS).into());
    }
}

fn clause<R: Rng>(rng: &mut R, negated: bool) -> Clause {
    let mut t: Vec<String> = vec![pick(rng, SUBJECTS).into()];
    if !negated {
        t.push(pick(rng, VERBS).into());
        object_phrase(rng, &mut t);
        return Clause {
            tokens: t,
            cue: vec![],
            scope: None,
        };
    }
    match rng.gen_range(0..5) {
        // subject not verb object: the subject is in scope
        0 => {
            t.push("not".into());
            t.push(pick(rng, VERBS).into());
            object_phrase(rng, &mut t);
            let end = t.len() - 1;
            Clause {
                tokens: t,
                cue: vec![1],
                scope: Some((0, end)),
            }
        }
        // subject verb neither X nor Y
        1 => {
            t.push(pick(rng, VERBS).into());
            let start = t.len();
            t.push("neither".into());
            t.push(pick(rng, OBJECTS).into());
            let nor = t.len();
            t.push("nor".into());
            t.push(pick(rng, OBJECTS).into());
            let end = t.len() - 1;
            Clause {
                tokens: t,
                cue: vec![start, nor],
                scope: Some((start, end)),
            }
        }
        _ => {
            t.push(pick(rng, VERBS).into());
            let start = t.len();
            let cue = pick(rng, &["no", "without", "lacked"]);
            t.push(cue.into());
            object_phrase(rng, &mut t);
            let end = t.len() - 1;
            Clause {
                tokens: t,
                cue: vec![start],
                scope: Some((start, end)),
            }
        }
    }
}

/// `n` sentences; roughly `negation_rate` of them contain a negated clause,
/// and a few contain two (giving two instances of one sentence).
pub fn generate(n: usize, negation_rate: f64, seed: u64) -> Vec<NegationInstance> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::new();
    for s in 0..n {
        let two = rng.gen_bool(0.3);
        let neg = rng.gen_bool(negation_rate);
        let neg_second = two && neg && rng.gen_bool(0.25);
        let first_negated = neg && (!two || rng.gen_bool(0.5));
        let mut clauses = vec![clause(&mut rng, first_negated)];
        if two {
            let negated = neg_second || (neg && !first_negated);
            clauses.push(clause(&mut rng, negated));
        }
        let mut tokens: Vec<String> = Vec::new();
        let mut annotations = Vec::new();
        for (i, c) in clauses.into_iter().enumerate() {
            if i > 0 {
                tokens.push(",".into());
                tokens.push(pick(&mut rng, &["but", "and"]).into());
            }
            let off = tokens.len();
            if !c.cue.is_empty() {
                annotations.push(NegationAnnotation::new(
                    c.cue.iter().map(|k| k + off).collect(),
                    c.scope.map(|(l, r)| (l + off, r + off)),
                ));
            }
            tokens.extend(c.tokens);
        }
        tokens.push(".".into());
        if annotations.is_empty() {
            annotations.push(NegationAnnotation::empty());
        }
        let sentence = Sentence {
            tokens,
            source_id: format!("syn{s}"),
        };
        for annotation in annotations {
            out.push(NegationInstance {
                sentence: sentence.clone(),
                annotation,
            });
        }
    }
    out
}
