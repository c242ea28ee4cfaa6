//! Gold versus predicted cue inputs on the shared Task-2 test set.

use negscope::corpus::{group_sentences, NegationInstance};
use negscope::evaluation::{build_task2_testset, CueInput, CueOutcome, ScopeReport, Task2Item};
use negscope::labeling::{CueTag, ScopeTag};
use negscope::synthetic;

/// Stand-in scope model: marks the cue as C and the token after it as A.
fn toy_model(item: &Task2Item, cue: &[u8]) -> Result<Vec<ScopeTag>, ()> {
    let mut out = vec![ScopeTag::O; item.gold_scope.len()];
    if let Some(k) = cue.iter().position(|&b| b == 1) {
        out[k] = ScopeTag::C;
        if k + 1 < out.len() {
            out[k + 1] = ScopeTag::A;
        }
    }
    Ok(out)
}

/// Each instance gets the union of cues over its sentence, as a cue model
/// tagging whole sentences would produce.
fn sentence_level(instances: &[NegationInstance], flip: impl Fn(usize) -> bool) -> Vec<Vec<CueTag>> {
    let groups = group_sentences(instances);
    let mut out = Vec::new();
    for (g, group) in groups.iter().enumerate() {
        let tags = if flip(g) {
            vec![CueTag::NC; group.sentence().len()]
        } else {
            group.cue_tags()
        };
        for _ in &group.instances {
            out.push(tags.clone());
        }
    }
    out
}

#[test]
fn perfect_cues_make_both_conditions_identical() {
    let inst = synthetic::generate(120, 0.5, 3);
    let pred = inst.iter().map(|i| i.cue_tags()).collect::<Vec<_>>();
    let set = build_task2_testset(&inst, &pred).unwrap();
    assert_eq!(set.fn_, 0);
    assert_eq!(set.fp, 0);
    let gold = set.predictions(CueInput::Gold, toy_model).unwrap();
    let predicted = set.predictions(CueInput::Predicted, toy_model).unwrap();
    assert_eq!(gold, predicted);
    let truth = set.gold_scopes();
    assert_eq!(
        format!("{:?}", ScopeReport::compute(&gold, &truth).unwrap()),
        format!("{:?}", ScopeReport::compute(&predicted, &truth).unwrap())
    );
}

#[test]
fn silent_cue_model_scores_zero_recall_on_missed_sentences() {
    let inst = synthetic::generate(120, 0.5, 4);
    let pred: Vec<Vec<CueTag>> = inst.iter().map(|i| vec![CueTag::NC; i.len()]).collect();
    let set = build_task2_testset(&inst, &pred).unwrap();
    assert_eq!(set.tp + set.fp, 0);
    assert_eq!(set.fn_, set.items.len());
    let predicted = set.predictions(CueInput::Predicted, toy_model).unwrap();
    let report = ScopeReport::compute(&predicted, &set.gold_scopes()).unwrap();
    assert_eq!(report.token.recall, 0.0);
    let gold = set.predictions(CueInput::Gold, toy_model).unwrap();
    assert!(ScopeReport::compute(&gold, &set.gold_scopes()).unwrap().token.recall > 0.0);
}

#[test]
fn instance_set_is_shared_and_partitioned() {
    let inst = synthetic::generate(200, 0.5, 5);
    // miss every third negated sentence
    let pred = sentence_level(&inst, |g| g % 3 == 0);
    let set = build_task2_testset(&inst, &pred).unwrap();
    assert_eq!(set.total(), inst.len());
    assert_eq!(set.items.len(), set.tp + set.fn_ + set.fp);
    assert!(set.fn_ > 0 && set.tp > 0);
    // both conditions score the same items
    let g = set.predictions(CueInput::Gold, toy_model).unwrap();
    let p = set.predictions(CueInput::Predicted, toy_model).unwrap();
    assert_eq!(g.len(), p.len());
    for (item, (pg, pp)) in set.items.iter().zip(g.iter().zip(&p)) {
        match item.outcome {
            CueOutcome::Fn => {
                assert!(pp.iter().all(|&t| t == ScopeTag::O));
                assert!(pg.contains(&ScopeTag::C));
            }
            CueOutcome::Tp => assert!(pp.contains(&ScopeTag::C)),
            CueOutcome::Fp => assert!(item.gold_scope.iter().all(|&t| t == ScopeTag::O)),
            CueOutcome::Tn => unreachable!("true negatives are not scored"),
        }
    }
}

#[test]
fn twin_instances_share_the_sentence_prediction() {
    let inst = synthetic::generate(300, 0.8, 6);
    let pred = sentence_level(&inst, |_| false);
    let set = build_task2_testset(&inst, &pred).unwrap();
    let twins = set
        .items
        .windows(2)
        .filter(|w| inst[w[0].instance].sentence == inst[w[1].instance].sentence)
        .inspect(|w| {
            assert_eq!(w[0].pred_cue, w[1].pred_cue);
            assert_ne!(w[0].gold_cue, w[1].gold_cue);
            assert_ne!(w[0].gold_scope, w[1].gold_scope);
        })
        .count();
    assert!(twins > 0);
}
