//! Turning annotated sentences into padded model inputs.

use crate::corpus::{pad_truncate, NegationInstance, SentenceGroup, Vocabulary};
use crate::labeling::{cue_vector, Tag};
use crate::model::Example;

fn example(tokens: Vec<usize>, cue: Vec<u8>, labels: Vec<usize>, max_len: usize) -> Example {
    let (tokens, mask) = pad_truncate(&tokens, max_len, Vocabulary::OOV_INDEX);
    let (labels, _) = pad_truncate(&labels, max_len, 0);
    let cue = if cue.is_empty() {
        cue
    } else {
        pad_truncate(&cue, max_len, 0).0
    };
    Example {
        tokens,
        cue,
        labels,
        mask,
    }
}

/// Task-1 example for a sentence: labels are the union of its cues.
pub fn cue_example(group: &SentenceGroup, vocab: &Vocabulary, max_len: usize) -> Example {
    let tokens = vocab.encode(&group.sentence().tokens);
    let labels = group.cue_tags().iter().map(|t| t.index()).collect();
    example(tokens, Vec::new(), labels, max_len)
}

/// Task-2 example with the instance's gold cue vector as the second input.
pub fn scope_example(inst: &NegationInstance, vocab: &Vocabulary, max_len: usize) -> Example {
    let tokens = vocab.encode(&inst.sentence.tokens);
    let cue = cue_vector(&inst.cue_tags());
    let labels = inst.scope_tags().iter().map(|t| t.index()).collect();
    example(tokens, cue, labels, max_len)
}

/// Encodes raw tokens for inference, cut at `max_len`.
pub fn encode_for_inference(tokens: &[String], vocab: &Vocabulary, max_len: usize) -> Vec<usize> {
    let mut ix = vocab.encode(tokens);
    ix.truncate(max_len);
    ix
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{group_sentences, parse_columns};

    const TWINS: &str = "# id = a\nneither\tC\tC\nX\tNC\tA\nnor\tC\tA\nY\tNC\tA\n\n# id = b\nplain\tNC\tO\n";

    #[test]
    fn examples_are_padded_with_masks() {
        let inst = parse_columns(TWINS.as_bytes()).unwrap();
        let vocab = crate::corpus::build_vocab(&inst).unwrap();
        let ex = scope_example(&inst[0], &vocab, 6);
        assert_eq!(ex.len(), 4);
        assert_eq!(ex.cue, vec![1, 0, 1, 0, 0, 0]);
        assert_eq!(ex.labels, vec![2, 3, 3, 3, 0, 0]);
        assert_eq!(ex.mask, vec![true, true, true, true, false, false]);
        let short = scope_example(&inst[0], &vocab, 3);
        assert_eq!(short.labels, vec![2, 3, 3]);

        let groups = group_sentences(&inst);
        let cue = cue_example(&groups[0], &vocab, 5);
        assert_eq!(cue.labels, vec![1, 0, 1, 0, 0]);
        assert!(cue.cue.is_empty());
    }
}
