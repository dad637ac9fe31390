#![allow(dead_code)]

use std::collections::HashMap;
use std::hash::Hash;
use std::sync::Mutex;

use cfnt::decoder::{
    cfnt_beam_search_with, CfntOptions, DecodeConfig, Hypothesis, PruneRecord, Status,
};
use cfnt::lattice::{alignments, Step};
use cfnt::name_trie::{NameTrie, TrieCursor};
use cfnt::scoring::{
    cfnt_name_logits, fnt_vocab_logits, log_emit_distribution, log_sum_exp, BlankScorer,
    BlankTable, EncoderScores, LanguageModel, NgramLm,
};
use cfnt::vocab::TokenId;

/// Counters for the name-closure and S0-retention checks, shared by every
/// class-based decode in a test binary.
#[derive(Debug, Default, Clone, Copy)]
pub struct Closure {
    pub decodes: usize,
    pub snapshots: usize,
    pub s0_violations: usize,
    pub spans: usize,
    pub span_violations: usize,
}

pub static CLOSURE: Mutex<Closure> = Mutex::new(Closure {
    decodes: 0,
    snapshots: 0,
    s0_violations: 0,
    spans: 0,
    span_violations: 0,
});

pub fn closure() -> Closure {
    *CLOSURE.lock().unwrap()
}

/// Every name span spells the name it claims and that name is in the trie.
pub fn record_spans(hyps: &[Hypothesis], trie: &NameTrie) {
    let mut c = CLOSURE.lock().unwrap();
    for h in hyps {
        for s in &h.name_spans {
            c.spans += 1;
            let tokens = &h.tokens[s.start..s.end];
            let ok = trie
                .names()
                .get(s.name)
                .is_some_and(|n| n.as_slice() == tokens)
                && trie.lookup(tokens).is_some()
                && h.statuses[s.start] == Status::S1
                && h.statuses[s.start + 1..s.end]
                    .iter()
                    .all(|&st| st == Status::S2);
            if !ok {
                c.span_violations += 1;
            }
        }
    }
}

/// Class-based beam search with the pruning trace checked for S0 retention.
pub fn cfnt_checked<L: LanguageModel, B: BlankScorer>(
    enc: &EncoderScores,
    blank: &B,
    lm: &L,
    trie: &NameTrie,
    cfg: &DecodeConfig,
) -> Vec<Hypothesis> {
    let mut trace: Vec<PruneRecord> = Vec::new();
    let hyps = cfnt_beam_search_with(
        enc,
        blank,
        lm,
        trie,
        cfg,
        CfntOptions {
            prior: None,
            trace: Some(&mut trace),
        },
    )
    .expect("decode");
    {
        let mut c = CLOSURE.lock().unwrap();
        c.decodes += 1;
        c.snapshots += trace.len();
        c.s0_violations += trace.iter().filter(|r| r.s0 == 0).count();
    }
    record_spans(&hyps, trie);
    hyps
}

/// Unigram model from linear probabilities.
pub fn unigram(probs: Vec<f64>, class: bool) -> NgramLm {
    let v = probs.len() - usize::from(class);
    NgramLm::new(1, v, class, [(vec![], probs)]).unwrap()
}

/// Class bigram over `v` surface tokens plus `@name`; `rows[0]` is the
/// sentence-start row, `rows[1 + i]` follows inventory entry `i`.
pub fn bigram(v: usize, class: bool, rows: Vec<Vec<f64>>) -> NgramLm {
    let mut out = vec![(vec![None], rows[0].clone())];
    for (i, r) in rows[1..].iter().enumerate() {
        out.push((vec![Some(i)], r.clone()));
    }
    NgramLm::new(2, v, class, out).unwrap()
}

/// Per-prefix decoder state for a fixed `(Y, statuses)` labeling.
struct PrefixState<LS, BS> {
    lm: LS,
    blank: BS,
    cursor: Option<TrieCursor>,
}

/// Why a labeling cannot be produced by the class-based search.
#[derive(Debug, PartialEq, Eq)]
pub enum Labeling {
    /// Reachable and ends outside the class or on a complete name.
    Complete,
    /// Reachable but ends inside the class on a strict prefix of a name.
    Incomplete,
    Illegal,
}

/// Exact log-probability of `(tokens, statuses)` under the class-based
/// emission model, summed over every alignment by explicit enumeration.
pub fn cfnt_labeling_logprob<L: LanguageModel, B: BlankScorer>(
    enc: &EncoderScores,
    blank: &B,
    lm: &L,
    trie: &NameTrie,
    tokens: &[TokenId],
    statuses: &[Status],
) -> (Labeling, f64) {
    let v = enc.vocab_size();
    let class = lm.class_index().unwrap();
    let mut states = vec![PrefixState {
        lm: lm.initial_state(),
        blank: blank.initial_state(),
        cursor: None,
    }];
    // Index into the 2V+1 distribution for each emitted label.
    let mut index = Vec::with_capacity(tokens.len());
    for (&tok, &st) in tokens.iter().zip(statuses) {
        let prev = states.last().unwrap();
        let next = match (st, prev.cursor) {
            (Status::S0, None) => {
                index.push(1 + tok);
                PrefixState {
                    lm: lm.advance(&prev.lm, tok),
                    blank: blank.advance(&prev.blank, tok),
                    cursor: None,
                }
            }
            (Status::S3, Some(c)) if trie.is_accepting(c).is_some() => {
                index.push(1 + tok);
                let exit = lm.advance(&prev.lm, class);
                PrefixState {
                    lm: lm.advance(&exit, tok),
                    blank: blank.advance(&prev.blank, tok),
                    cursor: None,
                }
            }
            (Status::S1, None) | (Status::S2, Some(_)) => {
                let from = prev.cursor.unwrap_or_else(|| trie.root());
                let Some(c) = trie.step(from, tok) else {
                    return (Labeling::Illegal, f64::NEG_INFINITY);
                };
                index.push(1 + v + tok);
                PrefixState {
                    lm: prev.lm.clone(),
                    blank: blank.advance(&prev.blank, tok),
                    cursor: Some(c),
                }
            }
            _ => return (Labeling::Illegal, f64::NEG_INFINITY),
        };
        states.push(next);
    }

    let dist = |t: usize, u: usize| {
        let s = &states[u];
        node_distribution(enc, t, blank, lm, Some(trie), &s.lm, &s.blank, s.cursor)
    };

    let frames = enc.frames();
    let table: Vec<Vec<Vec<f64>>> = (0..frames)
        .map(|t| (0..=tokens.len()).map(|u| dist(t, u)).collect())
        .collect();
    let mut terms = Vec::new();
    for a in alignments(frames, tokens) {
        let (mut t, mut u, mut lp) = (0, 0, 0.0);
        for step in &a.0 {
            match step {
                Step::Blank => {
                    lp += table[t][u][0];
                    t += 1;
                }
                Step::Emit(_) => {
                    lp += table[t][u][index[u]];
                    u += 1;
                }
            }
        }
        terms.push(lp);
    }
    let status = match states.last().unwrap().cursor {
        Some(c) if trie.is_accepting(c).is_none() => Labeling::Incomplete,
        _ => Labeling::Complete,
    };
    (status, log_sum_exp(&terms))
}

/// Emission log-distribution at one lattice node, built the way the search
/// builds it. Without a trie this is the plain `V + 1` distribution.
#[allow(clippy::too_many_arguments)]
pub fn node_distribution<L: LanguageModel, B: BlankScorer>(
    enc: &EncoderScores,
    t: usize,
    blank: &B,
    lm: &L,
    trie: Option<&NameTrie>,
    lm_state: &L::State,
    blank_state: &B::State,
    cursor: Option<TrieCursor>,
) -> Vec<f64> {
    let v = enc.vocab_size();
    let b = blank.logit(t, blank_state);
    let Some(trie) = trie else {
        let voc = fnt_vocab_logits(enc, t, lm, lm_state).unwrap();
        return log_emit_distribution(b, &voc, &[]).unwrap();
    };
    let (voc, name) = match cursor {
        None => {
            let voc = fnt_vocab_logits(enc, t, lm, lm_state).unwrap();
            let entry = cfnt_name_logits(enc, t, lm, lm_state, true).unwrap();
            (voc, masked(&entry, trie, trie.root(), v))
        }
        Some(c) => {
            let voc = match trie.is_accepting(c) {
                Some(_) => {
                    let exit = lm.advance(lm_state, lm.class_index().unwrap());
                    fnt_vocab_logits(enc, t, lm, &exit).unwrap()
                }
                None => vec![f64::NEG_INFINITY; v],
            };
            let cont = cfnt_name_logits(enc, t, lm, lm_state, false).unwrap();
            (voc, masked(&cont, trie, c, v))
        }
    };
    log_emit_distribution(b, &voc, &name).unwrap()
}

/// Total probability of each output length `0..=max_u`, summed over every
/// label sequence (and status labeling, with a trie) by dynamic programming
/// over distinct decoder states.
pub fn length_mass<L, B>(
    enc: &EncoderScores,
    blank: &B,
    lm: &L,
    trie: Option<&NameTrie>,
    max_u: usize,
) -> Vec<f64>
where
    L: LanguageModel,
    B: BlankScorer,
    L::State: Hash + Eq,
    B::State: Hash + Eq,
{
    type Layer<LS, BS> = HashMap<(LS, BS, Option<TrieCursor>), f64>;
    let v = enc.vocab_size();
    let add = |layer: &mut Layer<L::State, B::State>, key, lp: f64| {
        let slot = layer.entry(key).or_insert(f64::NEG_INFINITY);
        *slot = log_sum_exp(&[*slot, lp]);
    };
    let mut frame: Vec<Layer<L::State, B::State>> = vec![HashMap::new(); max_u + 1];
    frame[0].insert((lm.initial_state(), blank.initial_state(), None), 0.0);
    let mut end = vec![f64::NEG_INFINITY; max_u + 1];
    for t in 0..enc.frames() {
        let mut next: Vec<Layer<L::State, B::State>> = vec![HashMap::new(); max_u + 1];
        for u in 0..=max_u {
            let layer = std::mem::take(&mut frame[u]);
            for ((ls, bs, cursor), a) in layer {
                let d = node_distribution(enc, t, blank, lm, trie, &ls, &bs, cursor);
                if t + 1 == enc.frames() {
                    end[u] = log_sum_exp(&[end[u], a + d[0]]);
                } else {
                    add(&mut next[u], (ls.clone(), bs.clone(), cursor), a + d[0]);
                }
                if u == max_u {
                    continue;
                }
                for w in 0..v {
                    if d[1 + w] > f64::NEG_INFINITY {
                        let from = match (trie, cursor) {
                            (Some(_), Some(_)) => lm.advance(&ls, lm.class_index().unwrap()),
                            _ => ls.clone(),
                        };
                        let key = (lm.advance(&from, w), blank.advance(&bs, w), None);
                        add(&mut frame[u + 1], key, a + d[1 + w]);
                    }
                    if let Some(trie) = trie {
                        if d[1 + v + w] > f64::NEG_INFINITY {
                            let c = trie.step(cursor.unwrap_or_else(|| trie.root()), w).unwrap();
                            let key = (ls.clone(), blank.advance(&bs, w), Some(c));
                            add(&mut frame[u + 1], key, a + d[1 + v + w]);
                        }
                    }
                }
            }
        }
        frame = next;
    }
    end.into_iter().map(f64::exp).collect()
}

fn masked(logits: &[f64], trie: &NameTrie, c: TrieCursor, v: usize) -> Vec<f64> {
    let mut out = vec![f64::NEG_INFINITY; v];
    for tok in trie.allowed_tokens(c) {
        out[tok] = logits[tok];
    }
    out
}

/// All token sequences of exactly length `u` over `0..v`.
pub fn sequences(v: usize, u: usize) -> Vec<Vec<TokenId>> {
    let mut out = vec![Vec::new()];
    for _ in 0..u {
        out = out
            .into_iter()
            .flat_map(|p| {
                (0..v).map(move |t| {
                    let mut n = p.clone();
                    n.push(t);
                    n
                })
            })
            .collect();
    }
    out
}

/// All legal status sequences of length `u`.
pub fn status_sequences(u: usize) -> Vec<Vec<Status>> {
    use Status::*;
    let mut out = vec![Vec::new()];
    for _ in 0..u {
        out = out
            .into_iter()
            .flat_map(|p: Vec<Status>| {
                [S0, S1, S2, S3].into_iter().filter_map(move |s| {
                    Status::legal_after(p.last().copied(), s).then(|| {
                        let mut n = p.clone();
                        n.push(s);
                        n
                    })
                })
            })
            .collect();
    }
    out
}

/// Name-fork instance: names `{[J], [J, _son]}` with encoder evidence for
/// `_son` on the second frame. Tokens: `c = 0`, `J = 1`, `_son = 2`.
pub fn nested_fork() -> (EncoderScores, BlankTable, NgramLm, NameTrie) {
    let lm = bigram(
        3,
        true,
        vec![
            vec![0.5, 0.05, 0.05, 0.4],
            vec![0.49, 0.01, 0.49, 0.01],
            vec![0.25; 4],
            vec![0.25; 4],
            vec![0.01, 0.97, 0.01, 0.01],
        ],
    );
    let enc = EncoderScores::new(vec![vec![5.0, 5.0, -5.0], vec![5.0, -5.0, 5.0]]).unwrap();
    let blank =
        BlankTable::new(0, vec![vec![-10.0, 10.0, 10.0], vec![-10.0, -10.0, 10.0]]).unwrap();
    let trie = NameTrie::from_names(&[vec![1], vec![1, 2]]).unwrap();
    (enc, blank, lm, trie)
}

/// Greedy trap: the only name is `[J, _son]`; `J` enters the class on the
/// first frame but nothing supports `_son` afterwards. The utterance is
/// `c c`.
pub fn greedy_trap() -> (EncoderScores, BlankTable, NgramLm, NameTrie) {
    let lm = unigram(vec![0.3, 0.05, 0.05, 0.6], true);
    let enc = EncoderScores::new(vec![vec![5.0, 5.0, -5.0], vec![5.0, -5.0, -5.0]]).unwrap();
    let blank = BlankTable::new(0, vec![vec![-10.0, 10.0, 10.0], vec![-10.0, 0.0, 10.0]]).unwrap();
    let trie = NameTrie::from_names(&[vec![1, 2]]).unwrap();
    (enc, blank, lm, trie)
}
