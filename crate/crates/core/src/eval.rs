//! Word error rate and occurrence-level entity precision/recall/F1.
//!
//! Both metrics work on whole words: tokens are joined with the continuation
//! marker before alignment. An entity is scored through the word alignment,
//! so a correct name in the wrong place does not count.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::vocab::{group_words, match_names, Span, Word};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum EditOp {
    Match { r: usize, h: usize },
    Sub { r: usize, h: usize },
    Del { r: usize },
    Ins { h: usize },
}

/// Minimum-edit alignment with unit costs. On the backtrace from the end,
/// ties prefer match, then substitution, then deletion, then insertion.
pub fn word_align<S: AsRef<str>, T: AsRef<str>>(reference: &[S], hyp: &[T]) -> Vec<EditOp> {
    let (n, m) = (reference.len(), hyp.len());
    let same = |i: usize, j: usize| reference[i].as_ref() == hyp[j].as_ref();
    let mut d = vec![vec![0usize; m + 1]; n + 1];
    for (i, row) in d.iter_mut().enumerate() {
        row[0] = i;
    }
    for (j, cell) in d[0].iter_mut().enumerate() {
        *cell = j;
    }
    for i in 1..=n {
        for j in 1..=m {
            let diag = d[i - 1][j - 1] + usize::from(!same(i - 1, j - 1));
            d[i][j] = diag.min(d[i - 1][j] + 1).min(d[i][j - 1] + 1);
        }
    }
    let mut ops = Vec::with_capacity(n.max(m));
    let (mut i, mut j) = (n, m);
    while i > 0 || j > 0 {
        if i > 0 && j > 0 && same(i - 1, j - 1) && d[i][j] == d[i - 1][j - 1] {
            ops.push(EditOp::Match { r: i - 1, h: j - 1 });
            i -= 1;
            j -= 1;
        } else if i > 0 && j > 0 && d[i][j] == d[i - 1][j - 1] + 1 {
            ops.push(EditOp::Sub { r: i - 1, h: j - 1 });
            i -= 1;
            j -= 1;
        } else if i > 0 && d[i][j] == d[i - 1][j] + 1 {
            ops.push(EditOp::Del { r: i - 1 });
            i -= 1;
        } else {
            ops.push(EditOp::Ins { h: j - 1 });
            j -= 1;
        }
    }
    ops.reverse();
    ops
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct EditCounts {
    pub hits: usize,
    pub substitutions: usize,
    pub deletions: usize,
    pub insertions: usize,
}

impl EditCounts {
    pub fn from_ops(ops: &[EditOp]) -> Self {
        let mut c = Self::default();
        for op in ops {
            match op {
                EditOp::Match { .. } => c.hits += 1,
                EditOp::Sub { .. } => c.substitutions += 1,
                EditOp::Del { .. } => c.deletions += 1,
                EditOp::Ins { .. } => c.insertions += 1,
            }
        }
        c
    }

    pub fn errors(&self) -> usize {
        self.substitutions + self.deletions + self.insertions
    }

    pub fn ref_len(&self) -> usize {
        self.hits + self.substitutions + self.deletions
    }

    fn add(&mut self, o: &Self) {
        self.hits += o.hits;
        self.substitutions += o.substitutions;
        self.deletions += o.deletions;
        self.insertions += o.insertions;
    }

    pub fn wer(&self) -> f64 {
        self.errors() as f64 / self.ref_len().max(1) as f64
    }
}

/// A tagged reference utterance, as token strings.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Reference {
    pub tokens: Vec<String>,
    pub entity_spans: Vec<Span>,
}

/// A decoded utterance. `name_spans` is present for class-based decodes.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Decoded {
    pub tokens: Vec<String>,
    pub name_spans: Option<Vec<Span>>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EntityMode {
    /// Entities are the decoder's own name spans.
    Spans,
    /// Entities are exact occurrences of listed names in the output tokens.
    Match,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct EntityCounts {
    pub reference: usize,
    pub hypothesized: usize,
    /// Hypothesized entities that land on an identical reference entity.
    pub correct: usize,
    /// Reference entities whose words are all aligned as matches.
    pub recalled: usize,
}

impl EntityCounts {
    fn add(&mut self, o: &Self) {
        self.reference += o.reference;
        self.hypothesized += o.hypothesized;
        self.correct += o.correct;
        self.recalled += o.recalled;
    }

    pub fn precision(&self) -> f64 {
        ratio(self.correct, self.hypothesized)
    }

    pub fn recall(&self) -> f64 {
        ratio(self.recalled, self.reference)
    }

    pub fn f1(&self) -> f64 {
        let (p, r) = (self.precision(), self.recall());
        if p + r == 0.0 {
            0.0
        } else {
            2.0 * p * r / (p + r)
        }
    }

    /// No entity on either side, or nothing to divide by.
    pub fn degenerate(&self) -> bool {
        self.reference == 0 || self.hypothesized == 0
    }
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct UttReport {
    pub utt: usize,
    pub ref_words: usize,
    #[serde(flatten)]
    pub edits: EditCounts,
    pub wer: f64,
    #[serde(flatten)]
    pub entities: EntityCounts,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub wer: f64,
    pub ref_words: usize,
    #[serde(flatten)]
    pub edits: EditCounts,
    pub entity_precision: f64,
    pub entity_recall: f64,
    pub entity_f1: f64,
    pub reference_entities: usize,
    pub hypothesized_entities: usize,
    pub correct_entities: usize,
    pub recalled_entities: usize,
    /// Set when precision or recall had a zero denominator.
    pub entity_degenerate: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub per_utt: Option<Vec<UttReport>>,
}

fn word_texts(words: &[Word]) -> Vec<&str> {
    words.iter().map(|w| w.text.as_str()).collect()
}

/// Word index range covering a token span.
fn word_range(words: &[Word], (start, end): Span) -> Option<(usize, usize)> {
    let first = words.iter().position(|w| w.tokens.contains(&start))?;
    let last = words.iter().position(|w| w.tokens.contains(&(end - 1)))?;
    Some((first, last + 1))
}

/// Corpus WER: edit operations and reference lengths pooled over utterances.
pub fn wer<S: AsRef<str>>(refs: &[Vec<S>], hyps: &[Vec<S>]) -> Result<EditCounts> {
    if refs.len() != hyps.len() {
        return Err(Error::Pairing {
            refs: refs.len(),
            hyps: hyps.len(),
        });
    }
    let mut total = EditCounts::default();
    for (r, h) in refs.iter().zip(hyps) {
        let rw = group_words(r);
        let hw = group_words(h);
        total.add(&EditCounts::from_ops(&word_align(
            &word_texts(&rw),
            &word_texts(&hw),
        )));
    }
    Ok(total)
}

fn hyp_entities(hyp: &Decoded, names: &[Vec<String>], mode: EntityMode) -> Result<Vec<Span>> {
    match mode {
        EntityMode::Spans => hyp.name_spans.clone().ok_or(Error::EntityMode),
        EntityMode::Match => Ok(match_names(&hyp.tokens, names)
            .into_iter()
            .map(|(span, _)| span)
            .collect()),
    }
}

fn score_utterance(
    reference: &Reference,
    hyp: &Decoded,
    names: &[Vec<String>],
    mode: EntityMode,
) -> Result<(EditCounts, EntityCounts)> {
    let rw = group_words(&reference.tokens);
    let hw = group_words(&hyp.tokens);
    let ops = word_align(&word_texts(&rw), &word_texts(&hw));
    let edits = EditCounts::from_ops(&ops);

    // Reference word -> hyp word on a match; hyp word -> reference word on a
    // match or substitution.
    let mut ref_matched = vec![false; rw.len()];
    let mut hyp_to_ref = vec![None; hw.len()];
    for op in &ops {
        match *op {
            EditOp::Match { r, h } => {
                ref_matched[r] = true;
                hyp_to_ref[h] = Some(r);
            }
            EditOp::Sub { r, h } => hyp_to_ref[h] = Some(r),
            _ => {}
        }
    }

    let ref_ranges: Vec<(usize, usize)> = reference
        .entity_spans
        .iter()
        .filter_map(|&s| word_range(&rw, s))
        .collect();
    let mut counts = EntityCounts {
        reference: reference.entity_spans.len(),
        ..Default::default()
    };
    counts.recalled = ref_ranges
        .iter()
        .filter(|&&(a, b)| (a..b).all(|r| ref_matched[r]))
        .count();

    let spans = hyp_entities(hyp, names, mode)?;
    counts.hypothesized = spans.len();
    for span in spans {
        let Some((c, d)) = word_range(&hw, span) else {
            continue;
        };
        let mapped: Option<Vec<usize>> = (c..d).map(|h| hyp_to_ref[h]).collect();
        let Some(mapped) = mapped else { continue };
        let contiguous = mapped.windows(2).all(|w| w[1] == w[0] + 1);
        if !contiguous {
            continue;
        }
        let (a, b) = (mapped[0], mapped[mapped.len() - 1] + 1);
        let hit = reference
            .entity_spans
            .iter()
            .zip(&ref_ranges)
            .any(|(&(s, e), &range)| {
                range == (a, b) && reference.tokens[s..e] == hyp.tokens[span.0..span.1]
            });
        if hit {
            counts.correct += 1;
        }
    }
    Ok((edits, counts))
}

/// Entity precision/recall/F1 pooled over the corpus.
pub fn entity_prf(
    refs: &[Reference],
    hyps: &[Decoded],
    names: &[Vec<String>],
    mode: EntityMode,
) -> Result<EntityCounts> {
    Ok(evaluate(refs, hyps, names, mode, false)?.entity_counts())
}

pub fn evaluate(
    refs: &[Reference],
    hyps: &[Decoded],
    names: &[Vec<String>],
    mode: EntityMode,
    per_utt: bool,
) -> Result<EvalReport> {
    if refs.len() != hyps.len() {
        return Err(Error::Pairing {
            refs: refs.len(),
            hyps: hyps.len(),
        });
    }
    let mut edits = EditCounts::default();
    let mut entities = EntityCounts::default();
    let mut rows = Vec::new();
    for (utt, (r, h)) in refs.iter().zip(hyps).enumerate() {
        let (e, c) = score_utterance(r, h, names, mode)?;
        edits.add(&e);
        entities.add(&c);
        if per_utt {
            rows.push(UttReport {
                utt,
                ref_words: e.ref_len(),
                edits: e,
                wer: e.wer(),
                entities: c,
            });
        }
    }
    Ok(EvalReport {
        wer: edits.wer(),
        ref_words: edits.ref_len(),
        edits,
        entity_precision: entities.precision(),
        entity_recall: entities.recall(),
        entity_f1: entities.f1(),
        reference_entities: entities.reference,
        hypothesized_entities: entities.hypothesized,
        correct_entities: entities.correct,
        recalled_entities: entities.recalled,
        entity_degenerate: entities.degenerate(),
        per_utt: per_utt.then_some(rows),
    })
}

impl EvalReport {
    pub fn entity_counts(&self) -> EntityCounts {
        EntityCounts {
            reference: self.reference_entities,
            hypothesized: self.hypothesized_entities,
            correct: self.correct_entities,
            recalled: self.recalled_entities,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn toks(s: &str) -> Vec<String> {
        s.split_whitespace().map(str::to_string).collect()
    }

    #[test]
    fn identical_is_all_matches() {
        let r = toks("i will call john");
        let ops = word_align(&r, &r);
        assert!(ops.iter().all(|o| matches!(o, EditOp::Match { .. })));
        assert_eq!(EditCounts::from_ops(&ops).errors(), 0);
    }

    #[test]
    fn one_substitution() {
        let r = toks("i will call loretta lynn");
        let h = toks("i will call loretta flynn");
        let c = EditCounts::from_ops(&word_align(&r, &h));
        assert_eq!(
            (c.hits, c.substitutions, c.deletions, c.insertions),
            (4, 1, 0, 0)
        );
        assert_eq!(c.wer(), 0.2);
        assert_eq!(wer(&[r], &[h]).unwrap().wer(), 0.2);
    }

    #[test]
    fn all_deleted() {
        let ops = word_align(&toks("a b"), &Vec::<String>::new());
        assert_eq!(ops, vec![EditOp::Del { r: 0 }, EditOp::Del { r: 1 }]);
    }

    #[test]
    fn tie_breaking_prefers_substitution_over_indels() {
        // "a b" vs "b c": cost 2 either as two substitutions or del+ins.
        let ops = word_align(&toks("a b"), &toks("b c"));
        assert_eq!(EditCounts::from_ops(&ops).errors(), 2);
        assert_eq!(ops.last(), Some(&EditOp::Sub { r: 1, h: 1 }));
    }

    #[test]
    fn pooled_wer() {
        let refs = vec![toks("a b c d e"), toks("a b c d e")];
        let hyps = vec![toks("a b c d e"), toks("a b x d e")];
        assert_eq!(wer(&refs, &refs).unwrap().wer(), 0.0);
        assert!((wer(&refs, &hyps).unwrap().wer() - 0.1).abs() < 1e-15);
        assert!(matches!(wer(&refs, &hyps[..1]), Err(Error::Pairing { .. })));
    }

    #[test]
    fn insertions_can_push_wer_above_one() {
        let c = wer(&[toks("a")], &[toks("b c d")]).unwrap();
        assert_eq!(c.wer(), 3.0);
    }

    #[test]
    fn subword_tokens_are_scored_as_words() {
        let r = toks("call Lo _retta");
        let h = toks("call Lo _reta");
        let c = wer(&[r], &[h]).unwrap();
        assert_eq!((c.ref_len(), c.substitutions), (2, 1));
    }

    fn reference(s: &str, spans: Vec<Span>) -> Reference {
        Reference {
            tokens: toks(s),
            entity_spans: spans,
        }
    }

    fn decoded(s: &str, spans: Vec<Span>) -> Decoded {
        Decoded {
            tokens: toks(s),
            name_spans: Some(spans),
        }
    }

    #[test]
    fn perfect_entities() {
        let r = vec![reference("call john and mary", vec![(1, 2), (3, 4)])];
        let h = vec![decoded("call john and mary", vec![(1, 2), (3, 4)])];
        let c = entity_prf(&r, &h, &[], EntityMode::Spans).unwrap();
        assert_eq!((c.precision(), c.recall(), c.f1()), (1.0, 1.0, 1.0));
    }

    #[test]
    fn half_right_half_hallucinated() {
        // Two reference names; the hypothesis gets john, misses mary (word
        // "marry") and tags "and" as a name.
        let r = vec![reference("call john and mary", vec![(1, 2), (3, 4)])];
        let h = vec![decoded("call john and marry", vec![(1, 2), (2, 3)])];
        let c = entity_prf(&r, &h, &[], EntityMode::Spans).unwrap();
        assert_eq!(
            (c.reference, c.hypothesized, c.correct, c.recalled),
            (2, 2, 1, 1)
        );
        assert_eq!((c.precision(), c.recall(), c.f1()), (0.5, 0.5, 0.5));
    }

    #[test]
    fn no_entities_is_degenerate() {
        let r = vec![reference("a b", vec![])];
        let h = vec![decoded("a b", vec![])];
        let report = evaluate(&r, &h, &[], EntityMode::Spans, true).unwrap();
        assert_eq!(report.entity_precision, 0.0);
        assert_eq!(report.entity_recall, 0.0);
        assert_eq!(report.entity_f1, 0.0);
        assert!(report.entity_degenerate);
        assert_eq!(report.per_utt.as_ref().unwrap().len(), 1);
    }

    #[test]
    fn misplaced_name_is_not_correct() {
        let r = vec![reference("john called mary", vec![(0, 1), (2, 3)])];
        let h = vec![decoded("mary called john", vec![(0, 1), (2, 3)])];
        let c = entity_prf(&r, &h, &[], EntityMode::Spans).unwrap();
        assert_eq!((c.correct, c.recalled), (0, 0));
    }

    #[test]
    fn spans_mode_needs_spans() {
        let r = vec![reference("a", vec![])];
        let h = vec![Decoded {
            tokens: toks("a"),
            name_spans: None,
        }];
        assert!(matches!(
            entity_prf(&r, &h, &[], EntityMode::Spans),
            Err(Error::EntityMode)
        ));
        assert!(entity_prf(&r, &h, &[], EntityMode::Match).is_ok());
    }

    #[test]
    fn match_mode_finds_listed_names() {
        let names = vec![toks("Lo _retta"), toks("mary")];
        let r = vec![reference("call Lo _retta and mary", vec![(1, 3), (4, 5)])];
        let h = vec![Decoded {
            tokens: toks("call Lo _retta and mary"),
            name_spans: None,
        }];
        let c = entity_prf(&r, &h, &names, EntityMode::Match).unwrap();
        assert_eq!((c.hypothesized, c.correct, c.recalled), (2, 2, 2));
    }

    const WORDS: [&str; 6] = ["a", "b", "c", "n1", "n2", "_x"];

    fn corpus() -> impl Strategy<Value = Vec<(Vec<usize>, Vec<usize>)>> {
        let utt = prop::collection::vec(0usize..6, 0..8);
        prop::collection::vec((utt.clone(), utt), 1..6)
    }

    fn build(words: &[usize], names: &[Vec<String>]) -> (Reference, Decoded) {
        let mut tokens: Vec<String> = words.iter().map(|&w| WORDS[w].to_string()).collect();
        if tokens.first().is_some_and(|t| t.starts_with('_')) {
            tokens[0] = "a".into();
        }
        let spans: Vec<Span> = match_names(&tokens, names)
            .into_iter()
            .map(|(s, _)| s)
            .collect();
        (
            Reference {
                tokens: tokens.clone(),
                entity_spans: spans.clone(),
            },
            Decoded {
                tokens,
                name_spans: Some(spans),
            },
        )
    }

    fn name_list() -> Vec<Vec<String>> {
        vec![toks("n1"), toks("n2 _x")]
    }

    proptest! {
        #[test]
        fn perfect_hypotheses_score_perfectly(c in corpus()) {
            let names = name_list();
            let (refs, hyps): (Vec<_>, Vec<_>) = c.iter().map(|(r, _)| build(r, &names)).unzip();
            let report = evaluate(&refs, &hyps, &names, EntityMode::Spans, false).unwrap();
            prop_assert_eq!(report.wer, 0.0);
            if report.reference_entities > 0 {
                prop_assert_eq!(report.entity_f1, 1.0);
            }
        }

        #[test]
        fn utterance_order_does_not_matter(c in corpus(), rot in 0usize..6) {
            let names = name_list();
            let refs: Vec<_> = c.iter().map(|(r, _)| build(r, &names).0).collect();
            let hyps: Vec<_> = c.iter().map(|(_, h)| build(h, &names).1).collect();
            let a = entity_prf(&refs, &hyps, &names, EntityMode::Spans).unwrap();
            let k = rot % refs.len();
            let mut r2 = refs.clone();
            let mut h2 = hyps.clone();
            r2.rotate_left(k);
            h2.rotate_left(k);
            r2.reverse();
            h2.reverse();
            let b = entity_prf(&r2, &h2, &names, EntityMode::Spans).unwrap();
            prop_assert_eq!(a, b);
        }

        #[test]
        fn spans_and_match_agree_on_exact_tagging(c in corpus()) {
            // Hypothesis spans are exactly the name-list occurrences, so the
            // two ways of finding hypothesized entities coincide.
            let names = name_list();
            let refs: Vec<_> = c.iter().map(|(r, _)| build(r, &names).0).collect();
            let hyps: Vec<_> = c.iter().map(|(_, h)| build(h, &names).1).collect();
            let spans = entity_prf(&refs, &hyps, &names, EntityMode::Spans).unwrap();
            let matched = entity_prf(&refs, &hyps, &names, EntityMode::Match).unwrap();
            prop_assert_eq!(spans, matched);
        }
    }
}
