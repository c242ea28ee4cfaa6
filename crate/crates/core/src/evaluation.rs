//! Token-level and sequence-level metrics for both tasks, and the shared
//! Task-2 test set used to compare gold and predicted cue inputs.

use std::fmt::Write as _;

use thiserror::Error;

use crate::corpus::NegationInstance;
use crate::labeling::{cue_vector, is_continuous, CueTag, ScopeTag, Tag};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum EvalError {
    #[error("{what}: {pred} predicted sequences for {gold} gold sequences")]
    Count {
        what: &'static str,
        pred: usize,
        gold: usize,
    },
    #[error("sequence {index}: predicted length {pred}, gold length {gold}")]
    Length {
        index: usize,
        pred: usize,
        gold: usize,
    },
    #[error("sequence {index}: mask length {mask} does not match sequence length {len}")]
    Mask {
        index: usize,
        mask: usize,
        len: usize,
    },
}

/// Binary counts with the positive class being any non-outside tag.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct TokenConfusion {
    pub tp: usize,
    pub fp: usize,
    pub fn_: usize,
    pub tn: usize,
}

impl TokenConfusion {
    pub fn add(&mut self, pred_positive: bool, gold_positive: bool) {
        match (pred_positive, gold_positive) {
            (true, true) => self.tp += 1,
            (true, false) => self.fp += 1,
            (false, true) => self.fn_ += 1,
            (false, false) => self.tn += 1,
        }
    }

    pub fn merge(&mut self, other: &TokenConfusion) {
        self.tp += other.tp;
        self.fp += other.fp;
        self.fn_ += other.fn_;
        self.tn += other.tn;
    }

    pub fn total(&self) -> usize {
        self.tp + self.fp + self.fn_ + self.tn
    }

    /// Percent; NaN without positive predictions.
    pub fn precision(&self) -> f64 {
        ratio(self.tp, self.tp + self.fp)
    }

    /// Percent; NaN without positive gold tokens.
    pub fn recall(&self) -> f64 {
        ratio(self.tp, self.tp + self.fn_)
    }

    /// Percent; NaN if precision or recall is.
    pub fn f1(&self) -> f64 {
        let (p, r) = (self.precision(), self.recall());
        if p.is_nan() || r.is_nan() {
            f64::NAN
        } else if p + r == 0.0 {
            0.0
        } else {
            2.0 * p * r / (p + r)
        }
    }

    pub fn metrics(&self) -> TokenMetrics {
        TokenMetrics {
            confusion: *self,
            precision: self.precision(),
            recall: self.recall(),
            f1: self.f1(),
        }
    }
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        f64::NAN
    } else {
        100.0 * num as f64 / den as f64
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TokenMetrics {
    pub confusion: TokenConfusion,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

fn check_counts<A, B>(what: &'static str, pred: &[A], gold: &[B]) -> Result<(), EvalError> {
    if pred.len() != gold.len() {
        return Err(EvalError::Count {
            what,
            pred: pred.len(),
            gold: gold.len(),
        });
    }
    Ok(())
}

/// Confusion over label sequences; positions with a false mask are skipped.
pub fn token_confusion<T: Tag>(
    pred: &[Vec<T>],
    gold: &[Vec<T>],
    masks: Option<&[Vec<bool>]>,
) -> Result<TokenConfusion, EvalError> {
    check_counts("token metrics", pred, gold)?;
    if let Some(m) = masks {
        check_counts("masks", m, gold)?;
    }
    let mut c = TokenConfusion::default();
    for (index, (p, g)) in pred.iter().zip(gold).enumerate() {
        if p.len() != g.len() {
            return Err(EvalError::Length {
                index,
                pred: p.len(),
                gold: g.len(),
            });
        }
        let mask = masks.map(|m| &m[index]);
        if let Some(m) = mask {
            if m.len() != g.len() {
                return Err(EvalError::Mask {
                    index,
                    mask: m.len(),
                    len: g.len(),
                });
            }
        }
        for k in 0..g.len() {
            if mask.map_or(true, |m| m[k]) {
                c.add(p[k].is_positive(), g[k].is_positive());
            }
        }
    }
    Ok(c)
}

/// Positive class `{C, MC}`.
pub fn cue_token_metrics(
    pred: &[Vec<CueTag>],
    gold: &[Vec<CueTag>],
    masks: Option<&[Vec<bool>]>,
) -> Result<TokenMetrics, EvalError> {
    Ok(token_confusion(pred, gold, masks)?.metrics())
}

/// Positive class `{B, C, A}`.
pub fn scope_token_metrics(
    pred: &[Vec<ScopeTag>],
    gold: &[Vec<ScopeTag>],
    masks: Option<&[Vec<bool>]>,
) -> Result<TokenMetrics, EvalError> {
    Ok(token_confusion(pred, gold, masks)?.metrics())
}

/// Share of sentences with a gold cue whose cue tags are all predicted exactly.
pub fn pecm(pred: &[Vec<CueTag>], gold: &[Vec<CueTag>]) -> Result<f64, EvalError> {
    check_counts("PECM", pred, gold)?;
    let mut den = 0;
    let mut num = 0;
    for (p, g) in pred.iter().zip(gold) {
        if g.iter().any(|t| t.is_positive()) {
            den += 1;
            num += usize::from(p == g);
        }
    }
    Ok(ratio(num, den))
}

/// Share of gold scopes whose in-scope token set is predicted exactly.
pub fn pcs(pred: &[Vec<ScopeTag>], gold: &[Vec<ScopeTag>]) -> Result<f64, EvalError> {
    check_counts("PCS", pred, gold)?;
    let mut den = 0;
    let mut num = 0;
    for (index, (p, g)) in pred.iter().zip(gold).enumerate() {
        if p.len() != g.len() {
            return Err(EvalError::Length {
                index,
                pred: p.len(),
                gold: g.len(),
            });
        }
        if g.iter().any(|t| t.is_positive()) {
            den += 1;
            num += usize::from(p.iter().zip(g).all(|(a, b)| a.is_positive() == b.is_positive()));
        }
    }
    Ok(ratio(num, den))
}

/// Share of non-empty scope predictions without gaps.
pub fn pcp(pred: &[Vec<ScopeTag>]) -> f64 {
    let nonempty = pred.iter().filter(|p| p.iter().any(|t| t.is_positive()));
    let (num, den) = nonempty.fold((0, 0), |(n, d), p| (n + usize::from(is_continuous(p)), d + 1));
    ratio(num, den)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CueReport {
    pub token: TokenMetrics,
    pub pecm: f64,
}

impl CueReport {
    pub fn compute(pred: &[Vec<CueTag>], gold: &[Vec<CueTag>]) -> Result<Self, EvalError> {
        Ok(CueReport {
            token: cue_token_metrics(pred, gold, None)?,
            pecm: pecm(pred, gold)?,
        })
    }

    pub fn render(&self) -> String {
        let mut s = render_token(&self.token);
        let _ = writeln!(s, "pecm = {}", pct(self.pecm));
        s
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScopeReport {
    pub token: TokenMetrics,
    pub pcs: f64,
    pub pcp: f64,
}

impl ScopeReport {
    pub fn compute(pred: &[Vec<ScopeTag>], gold: &[Vec<ScopeTag>]) -> Result<Self, EvalError> {
        Ok(ScopeReport {
            token: scope_token_metrics(pred, gold, None)?,
            pcs: pcs(pred, gold)?,
            pcp: pcp(pred),
        })
    }

    pub fn render(&self) -> String {
        let mut s = render_token(&self.token);
        let _ = writeln!(s, "pcs = {}", pct(self.pcs));
        let _ = writeln!(s, "pcp = {}", pct(self.pcp));
        s
    }
}

/// Two decimals; NaN stays `NaN`.
pub fn pct(v: f64) -> String {
    if v.is_nan() {
        "NaN".into()
    } else {
        format!("{v:.2}")
    }
}

fn render_token(m: &TokenMetrics) -> String {
    let c = &m.confusion;
    format!(
        "tp = {}\nfp = {}\nfn = {}\ntn = {}\nprecision = {}\nrecall = {}\nf1 = {}\n",
        c.tp,
        c.fp,
        c.fn_,
        c.tn,
        pct(m.precision),
        pct(m.recall),
        pct(m.f1)
    )
}

/// Task-1 outcome for one instance.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum CueOutcome {
    Tp,
    Fn,
    Fp,
    Tn,
}

impl CueOutcome {
    pub fn classify(gold_negation: bool, predicted_negation: bool) -> Self {
        match (gold_negation, predicted_negation) {
            (true, true) => CueOutcome::Tp,
            (true, false) => CueOutcome::Fn,
            (false, true) => CueOutcome::Fp,
            (false, false) => CueOutcome::Tn,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            CueOutcome::Tp => "tp",
            CueOutcome::Fn => "fn",
            CueOutcome::Fp => "fp",
            CueOutcome::Tn => "tn",
        }
    }
}

/// Which cue vector the scope model receives.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum CueInput {
    Gold,
    Predicted,
}

impl CueInput {
    pub fn as_str(self) -> &'static str {
        match self {
            CueInput::Gold => "gold",
            CueInput::Predicted => "predicted",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Task2Item {
    /// Index into the instance list the set was built from.
    pub instance: usize,
    pub outcome: CueOutcome,
    pub gold_cue: Vec<u8>,
    pub pred_cue: Vec<u8>,
    pub gold_scope: Vec<ScopeTag>,
}

impl Task2Item {
    /// The cue vector fed to the scope model under `input`, or `None` when the
    /// sentence counts as an assertion there and gets an empty scope.
    pub fn cue_for(&self, input: CueInput) -> Option<&[u8]> {
        let v = match input {
            CueInput::Gold => &self.gold_cue,
            CueInput::Predicted => &self.pred_cue,
        };
        v.contains(&1).then_some(&v[..])
    }
}

/// The `tp ∪ fn ∪ fp` instances, plus counts of every outcome.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Task2TestSet {
    pub items: Vec<Task2Item>,
    pub tp: usize,
    pub fn_: usize,
    pub fp: usize,
    pub tn: usize,
}

impl Task2TestSet {
    pub fn total(&self) -> usize {
        self.tp + self.fn_ + self.fp + self.tn
    }

    pub fn gold_scopes(&self) -> Vec<Vec<ScopeTag>> {
        self.items.iter().map(|i| i.gold_scope.clone()).collect()
    }

    /// Scope predictions for every item under `input`. `predict` is called
    /// with `(item, cue vector)` for items that have a cue under `input`; the
    /// rest get all-O.
    pub fn predictions<F, E>(&self, input: CueInput, mut predict: F) -> Result<Vec<Vec<ScopeTag>>, E>
    where
        F: FnMut(&Task2Item, &[u8]) -> Result<Vec<ScopeTag>, E>,
    {
        self.items
            .iter()
            .map(|item| match item.cue_for(input) {
                Some(cue) => predict(item, cue),
                None => Ok(vec![ScopeTag::O; item.gold_scope.len()]),
            })
            .collect()
    }
}

/// Splits instances by Task-1 outcome and keeps `tp ∪ fn ∪ fp`.
/// `predicted_cues[i]` is the cue model's output on instance `i`'s sentence.
pub fn build_task2_testset(
    instances: &[NegationInstance],
    predicted_cues: &[Vec<CueTag>],
) -> Result<Task2TestSet, EvalError> {
    check_counts("cue predictions", predicted_cues, instances)?;
    let mut set = Task2TestSet {
        items: Vec::new(),
        tp: 0,
        fn_: 0,
        fp: 0,
        tn: 0,
    };
    for (index, (inst, pred)) in instances.iter().zip(predicted_cues).enumerate() {
        if pred.len() != inst.len() {
            return Err(EvalError::Length {
                index,
                pred: pred.len(),
                gold: inst.len(),
            });
        }
        let gold_cue = cue_vector(&inst.cue_tags());
        let pred_cue = cue_vector(pred);
        let outcome = CueOutcome::classify(gold_cue.contains(&1), pred_cue.contains(&1));
        match outcome {
            CueOutcome::Tp => set.tp += 1,
            CueOutcome::Fn => set.fn_ += 1,
            CueOutcome::Fp => set.fp += 1,
            CueOutcome::Tn => {
                set.tn += 1;
                continue;
            }
        }
        set.items.push(Task2Item {
            instance: index,
            outcome,
            gold_cue,
            pred_cue,
            gold_scope: inst.scope_tags(),
        });
    }
    Ok(set)
}

/// One row of the scope comparison: a scope variant under one cue input.
#[derive(Debug, Clone, PartialEq)]
pub struct ScopeRow {
    pub model: String,
    pub input: CueInput,
    pub report: ScopeReport,
}

/// Cue rows as `model precision recall f1 pecm`.
pub fn cue_table(rows: &[(String, CueReport)]) -> String {
    let mut s = String::from("model\tprecision\trecall\tf1\tpecm\n");
    for (model, r) in rows {
        let _ = writeln!(
            s,
            "{model}\t{}\t{}\t{}\t{}",
            pct(r.token.precision),
            pct(r.token.recall),
            pct(r.token.f1),
            pct(r.pecm)
        );
    }
    s
}

/// Scope rows as `model input precision recall f1 pcs pcp`.
pub fn scope_table(rows: &[ScopeRow]) -> String {
    let mut s = String::from("model\tinput\tprecision\trecall\tf1\tpcs\tpcp\n");
    for row in rows {
        let r = &row.report;
        let _ = writeln!(
            s,
            "{}\t{}\t{}\t{}\t{}\t{}\t{}",
            row.model,
            row.input.as_str(),
            pct(r.token.precision),
            pct(r.token.recall),
            pct(r.token.f1),
            pct(r.pcs),
            pct(r.pcp)
        );
    }
    s
}

/// Gold versus predicted F1 per model, with `gold − predicted`.
pub fn comparison_table(rows: &[ScopeRow]) -> String {
    let mut s = String::from("model\tgold_f1\tpredicted_f1\tdifference\n");
    let mut models: Vec<&str> = Vec::new();
    for r in rows {
        if !models.contains(&r.model.as_str()) {
            models.push(&r.model);
        }
    }
    for m in models {
        let f1 = |input| {
            rows.iter()
                .find(|r| r.model == m && r.input == input)
                .map_or(f64::NAN, |r| r.report.token.f1)
        };
        let (g, p) = (f1(CueInput::Gold), f1(CueInput::Predicted));
        let _ = writeln!(s, "{m}\t{}\t{}\t{}", pct(g), pct(p), pct(g - p));
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::Sentence;
    use crate::labeling::NegationAnnotation;
    use CueTag::{C, MC, NC};
    use ScopeTag::{A, B, O};

    #[test]
    fn cue_metrics_examples() {
        let gold = vec![vec![NC, NC, C, NC, NC, NC]];
        let m = cue_token_metrics(&gold, &gold, None).unwrap();
        assert_eq!((m.precision, m.recall, m.f1), (100.0, 100.0, 100.0));

        let none = vec![vec![NC; 6]];
        let m = cue_token_metrics(&none, &gold, None).unwrap();
        assert!(m.precision.is_nan());
        assert_eq!(m.recall, 0.0);
        assert!(m.f1.is_nan());

        let two = vec![vec![NC, NC, C, NC, NC, C]];
        let m = cue_token_metrics(&two, &gold, None).unwrap();
        assert_eq!((m.confusion.tp, m.confusion.fp, m.confusion.fn_), (1, 1, 0));
        assert_eq!(m.precision, 50.0);
        assert_eq!(m.recall, 100.0);
        assert!((m.f1 - 200.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn pecm_examples() {
        let gold = vec![vec![NC, C], vec![C, NC], vec![NC, NC]];
        assert_eq!(pecm(&gold, &gold).unwrap(), 100.0);
        let half = vec![vec![NC, C], vec![NC, NC], vec![C, C]];
        assert_eq!(pecm(&half, &gold).unwrap(), 50.0);
        let mc = vec![vec![MC, MC]];
        assert_eq!(pecm(&mc, &[vec![C, C]]).unwrap(), 0.0);
    }

    #[test]
    fn scope_metrics_examples() {
        let gold = vec![vec![O, O, ScopeTag::C, A, A, A, A, O]];
        let m = scope_token_metrics(&gold, &gold, None).unwrap();
        assert_eq!(m.f1, 100.0);
        let short = vec![vec![O, O, ScopeTag::C, A, A, A, O, O]];
        let m = scope_token_metrics(&short, &gold, None).unwrap();
        assert_eq!((m.precision, m.recall), (100.0, 80.0));
        assert!((m.f1 - 800.0 / 9.0).abs() < 1e-12);
        let empty = vec![vec![O; 8]];
        let m = scope_token_metrics(&empty, &gold, None).unwrap();
        assert!(m.precision.is_nan());
        assert_eq!(m.recall, 0.0);
    }

    #[test]
    fn pcs_ignores_sub_labels() {
        let gold = vec![vec![O, ScopeTag::C, A, O]];
        assert_eq!(pcs(&[vec![O, A, ScopeTag::C, O]], &gold).unwrap(), 100.0);
        assert_eq!(pcs(&[vec![O, ScopeTag::C, O, O]], &gold).unwrap(), 0.0);
        assert!(pcs(&[vec![O]], &[vec![O]]).unwrap().is_nan());
    }

    #[test]
    fn pcp_examples() {
        assert_eq!(pcp(&[vec![O, ScopeTag::C, O, A, O]]), 0.0);
        assert_eq!(pcp(&[vec![O, ScopeTag::C, O, A, O], vec![O; 5], vec![B, ScopeTag::C]]), 50.0);
        assert!(pcp(&[vec![O; 3]]).is_nan());
    }

    #[test]
    fn masks_skip_padding() {
        let gold = vec![vec![NC, C, C, C]];
        let pred = vec![vec![NC, C, NC, NC]];
        let mask = vec![vec![true, true, false, false]];
        let m = cue_token_metrics(&pred, &gold, Some(&mask)).unwrap();
        assert_eq!(m.confusion.total(), 2);
        assert_eq!(m.f1, 100.0);
    }

    fn inst(n: usize, cue: Vec<usize>, scope: Option<(usize, usize)>) -> NegationInstance {
        NegationInstance {
            sentence: Sentence {
                tokens: (0..n).map(|k| format!("w{k}")).collect(),
                source_id: "s".into(),
            },
            annotation: NegationAnnotation::new(cue, scope),
        }
    }

    #[test]
    fn task2_testset_partitions() {
        let instances = vec![
            inst(3, vec![1], Some((0, 2))),
            inst(3, vec![0], Some((0, 1))),
            inst(3, vec![], None),
            inst(3, vec![], None),
        ];
        let preds = vec![vec![NC, C, NC], vec![NC; 3], vec![C, NC, NC], vec![NC; 3]];
        let set = build_task2_testset(&instances, &preds).unwrap();
        assert_eq!((set.tp, set.fn_, set.fp, set.tn), (1, 1, 1, 1));
        assert_eq!(set.total(), 4);
        let outcomes: Vec<_> = set.items.iter().map(|i| i.outcome).collect();
        assert_eq!(outcomes, [CueOutcome::Tp, CueOutcome::Fn, CueOutcome::Fp]);

        let all_a = |_: &Task2Item, cue: &[u8]| -> Result<_, ()> {
            Ok(cue.iter().map(|_| A).collect::<Vec<_>>())
        };
        let pred = set.predictions(CueInput::Predicted, all_a).unwrap();
        assert_eq!(pred[1], vec![O; 3], "fn item gets an empty scope");
        let gold = set.predictions(CueInput::Gold, all_a).unwrap();
        assert_eq!(gold[2], vec![O; 3], "fp item has no gold cue");

        assert!(build_task2_testset(&instances, &preds[..3]).is_err());
    }

    #[test]
    fn comparison_difference_column() {
        let rep = |f1| ScopeReport {
            token: TokenMetrics {
                confusion: TokenConfusion::default(),
                precision: f1,
                recall: f1,
                f1,
            },
            pcs: 0.0,
            pcp: 0.0,
        };
        let rows = vec![
            ScopeRow {
                model: "bilstm".into(),
                input: CueInput::Gold,
                report: rep(90.25),
            },
            ScopeRow {
                model: "bilstm".into(),
                input: CueInput::Predicted,
                report: rep(83.90),
            },
        ];
        let t = comparison_table(&rows);
        assert_eq!(t.lines().nth(1).unwrap(), "bilstm\t90.25\t83.90\t6.35");
    }
}
