//! Converts BioScope XML into the column format.
//!
//!     cargo run --example bioscope_to_columns -- abstracts.xml > abstracts.tsv
//!
//! Each `<sentence>` becomes one block per negation cue (cue elements sharing
//! a `ref` form one discontinuous cue, scoped by the `<xcope>` with that id),
//! or a single all-NC/all-O block without negation. Speculation cues are
//! dropped. Annotations that fail validation are skipped with a warning.

use std::collections::BTreeMap;
use std::io::{self, BufWriter};
use std::ops::Range;

use quick_xml::events::{BytesStart, Event};
use quick_xml::Reader;

use negscope::corpus::{tokenize, write_instances, NegationInstance, Sentence};
use negscope::labeling::NegationAnnotation;

type Error = Box<dyn std::error::Error>;

enum Open {
    Scope { id: String, start: usize },
    Cue { negation: bool, reference: String, start: usize },
    Other,
}

#[derive(Default)]
struct SentenceMarkup {
    id: String,
    text: String,
    scopes: BTreeMap<String, Range<usize>>,
    cues: BTreeMap<String, Vec<Range<usize>>>,
}

fn attr(e: &BytesStart, name: &str) -> Result<Option<String>, Error> {
    Ok(match e.try_get_attribute(name)? {
        Some(a) => Some(a.unescape_value()?.into_owned()),
        None => None,
    })
}

/// Byte span of every token, found by scanning forward through the text.
fn token_spans(text: &str, tokens: &[String]) -> Result<Vec<Range<usize>>, Error> {
    let mut at = 0;
    let mut out = Vec::with_capacity(tokens.len());
    for t in tokens {
        let k = text[at..].find(t.as_str()).ok_or_else(|| format!("token {t:?} not in {text:?}"))?;
        out.push(at + k..at + k + t.len());
        at += k + t.len();
    }
    Ok(out)
}

fn covered(spans: &[Range<usize>], r: &Range<usize>) -> Vec<usize> {
    (0..spans.len())
        .filter(|&k| spans[k].start < r.end && r.start < spans[k].end)
        .collect()
}

fn instances(m: SentenceMarkup) -> Result<Vec<NegationInstance>, Error> {
    let tokens = tokenize(&m.text);
    let spans = token_spans(&m.text, &tokens)?;
    let sentence = Sentence {
        tokens,
        source_id: m.id.clone(),
    };
    let mut out = Vec::new();
    for (reference, parts) in &m.cues {
        let mut cue: Vec<usize> = parts.iter().flat_map(|r| covered(&spans, r)).collect();
        cue.sort_unstable();
        cue.dedup();
        let scope = m.scopes.get(reference).and_then(|r| {
            let ix = covered(&spans, r);
            Some((*ix.first()?, *ix.last()?))
        });
        let annotation = NegationAnnotation::new(cue, scope);
        match annotation.validate(sentence.len()) {
            Ok(()) => out.push(NegationInstance {
                sentence: sentence.clone(),
                annotation,
            }),
            Err(e) => eprintln!("warning: {} cue {reference}: {e}", m.id),
        }
    }
    if out.is_empty() {
        out.push(NegationInstance {
            sentence,
            annotation: NegationAnnotation::empty(),
        });
    }
    Ok(out)
}

fn convert(xml: &str) -> Result<Vec<NegationInstance>, Error> {
    let mut reader = Reader::from_str(xml);
    let mut out = Vec::new();
    let mut current: Option<SentenceMarkup> = None;
    let mut stack: Vec<Open> = Vec::new();
    loop {
        match reader.read_event()? {
            Event::Start(e) => {
                let name = e.name();
                if name.as_ref() == b"sentence" {
                    current = Some(SentenceMarkup {
                        id: attr(&e, "id")?.unwrap_or_default(),
                        ..SentenceMarkup::default()
                    });
                    continue;
                }
                let Some(m) = current.as_ref() else { continue };
                let start = m.text.len();
                stack.push(match name.as_ref() {
                    b"xcope" => Open::Scope {
                        id: attr(&e, "id")?.unwrap_or_default(),
                        start,
                    },
                    b"cue" => Open::Cue {
                        negation: attr(&e, "type")?.as_deref() == Some("negation"),
                        reference: attr(&e, "ref")?.unwrap_or_default(),
                        start,
                    },
                    _ => Open::Other,
                });
            }
            Event::Text(t) => {
                if let Some(m) = current.as_mut() {
                    m.text.push_str(&t.unescape()?);
                }
            }
            Event::CData(t) => {
                if let Some(m) = current.as_mut() {
                    m.text.push_str(&String::from_utf8_lossy(&t));
                }
            }
            Event::End(e) => {
                if e.name().as_ref() == b"sentence" {
                    if let Some(m) = current.take() {
                        out.extend(instances(m)?);
                    }
                    stack.clear();
                    continue;
                }
                let Some(m) = current.as_mut() else { continue };
                let end = m.text.len();
                match stack.pop() {
                    Some(Open::Scope { id, start }) => {
                        m.scopes.insert(id, start..end);
                    }
                    Some(Open::Cue {
                        negation: true,
                        reference,
                        start,
                    }) => m.cues.entry(reference).or_default().push(start..end),
                    _ => {}
                }
            }
            Event::Eof => break,
            _ => {}
        }
    }
    Ok(out)
}

fn main() -> Result<(), Error> {
    let path = std::env::args().nth(1).ok_or("usage: bioscope_to_columns <file.xml>")?;
    let xml = std::fs::read_to_string(&path)?;
    let instances = convert(&xml)?;
    write_instances(BufWriter::new(io::stdout().lock()), &instances)?;
    Ok(())
}
