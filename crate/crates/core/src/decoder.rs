//! Greedy and beam-search decoding for factorized transducers, including the
//! class-based search whose hypotheses move through four statuses:
//!
//! * `S0` the token is outside the name class and so was the previous one;
//! * `S1` the token enters the name class;
//! * `S2` the token stays inside the name class;
//! * `S3` the token is outside the class and the previous one was inside.
//!
//! Inside the class only tokens allowed by the name trie can be emitted, the
//! vocabulary-predictor state is frozen, and `@name` is consumed once when the
//! hypothesis leaves the class. The blank predictor sees every surface token.
//!
//! The search is frame synchronous. At each frame the active hypotheses are
//! expanded repeatedly; a blank extension finishes the frame, a token
//! extension stays on it. After every expansion round the finished and active
//! candidates are pruned together, so with a beam of one the search reduces
//! to greedy decoding. Candidates sharing tokens and statuses are merged by
//! log-sum-exp.

use std::cmp::Ordering;
use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::name_trie::{NameTrie, TrieCursor};
use crate::scoring::{
    cfnt_name_logits, fnt_vocab_logits, log_add_exp, log_emit_distribution, BlankScorer,
    EncoderScores, LanguageModel, NamePrior,
};
use crate::vocab::TokenId;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Status {
    S0,
    S1,
    S2,
    S3,
}

impl Status {
    pub fn in_class(self) -> bool {
        matches!(self, Status::S1 | Status::S2)
    }

    /// Whether `next` may follow `prev` (`None` at the start of a sequence).
    pub fn legal_after(prev: Option<Status>, next: Status) -> bool {
        let prev_inside = prev.is_some_and(Status::in_class);
        match next {
            Status::S0 | Status::S1 => !prev_inside,
            Status::S2 | Status::S3 => prev_inside,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Status::S0 => "S0",
            Status::S1 => "S1",
            Status::S2 => "S2",
            Status::S3 => "S3",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "S0" => Some(Status::S0),
            "S1" => Some(Status::S1),
            "S2" => Some(Status::S2),
            "S3" => Some(Status::S3),
            _ => None,
        }
    }
}

/// Every transition in `statuses` is legal.
pub fn statuses_legal(statuses: &[Status]) -> bool {
    let mut prev = None;
    for &s in statuses {
        if !Status::legal_after(prev, s) {
            return false;
        }
        prev = Some(s);
    }
    true
}

/// A completed name occurrence: tokens `[start, end)` spell name `name`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct NameSpan {
    pub start: usize,
    pub end: usize,
    pub name: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Hypothesis {
    pub tokens: Vec<TokenId>,
    pub statuses: Vec<Status>,
    pub score: f64,
    /// Set while the last status is `S1` or `S2`.
    pub cursor: Option<TrieCursor>,
    pub name_spans: Vec<NameSpan>,
}

impl Hypothesis {
    fn empty() -> Self {
        Self {
            tokens: Vec::new(),
            statuses: Vec::new(),
            score: 0.0,
            cursor: None,
            name_spans: Vec::new(),
        }
    }

    pub fn last_status(&self) -> Option<Status> {
        self.statuses.last().copied()
    }

    pub fn in_class(&self) -> bool {
        self.last_status().is_some_and(Status::in_class)
    }

    /// Outside the class with an `S0` (or no) last token.
    pub fn is_s0(&self) -> bool {
        matches!(self.last_status(), None | Some(Status::S0))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct DecodeConfig {
    pub beam_size: usize,
    pub dynamic_beam: bool,
    /// Extra slots reserved for in-class hypotheses when `dynamic_beam` is set.
    pub in_class_budget: usize,
    pub max_symbols_per_frame: usize,
}

impl DecodeConfig {
    pub fn new(beam_size: usize) -> Self {
        Self {
            beam_size,
            dynamic_beam: false,
            in_class_budget: beam_size,
            max_symbols_per_frame: 8,
        }
    }

    pub fn with_dynamic_beam(mut self, on: bool) -> Self {
        self.dynamic_beam = on;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.beam_size == 0 {
            return Err(Error::Config("beam_size must be at least 1".into()));
        }
        Ok(())
    }
}

impl Default for DecodeConfig {
    fn default() -> Self {
        Self::new(5)
    }
}

/// Statistics of one pruning step.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct PruneRecord {
    pub frame: usize,
    pub round: usize,
    pub kept: usize,
    pub s0: usize,
    pub in_class: usize,
}

#[derive(Clone, Debug)]
struct Beam<LS, BS> {
    hyp: Hypothesis,
    lm_state: LS,
    blank_state: BS,
    /// Blank already emitted on the current frame.
    done: bool,
}

type Key = (Vec<TokenId>, Vec<Status>, bool);

fn key_of<LS, BS>(b: &Beam<LS, BS>) -> Key {
    (b.hyp.tokens.clone(), b.hyp.statuses.clone(), b.done)
}

/// Pruning order: higher score, then fewer tokens, then smaller token ids.
fn rank<LS, BS>(a: &Beam<LS, BS>, b: &Beam<LS, BS>) -> Ordering {
    b.hyp
        .score
        .total_cmp(&a.hyp.score)
        .then(a.hyp.tokens.len().cmp(&b.hyp.tokens.len()))
        .then_with(|| a.hyp.tokens.cmp(&b.hyp.tokens))
        .then_with(|| a.hyp.statuses.cmp(&b.hyp.statuses))
        .then(a.done.cmp(&b.done))
}

fn rank_hyp(a: &Hypothesis, b: &Hypothesis) -> Ordering {
    b.score
        .total_cmp(&a.score)
        .then(a.tokens.len().cmp(&b.tokens.len()))
        .then_with(|| a.tokens.cmp(&b.tokens))
        .then_with(|| a.statuses.cmp(&b.statuses))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Block {
    Voc,
    Name,
}

#[derive(Clone, Copy, Debug)]
struct Outcome {
    score: f64,
    block: Block,
    token: TokenId,
}

struct Search<'a, L: LanguageModel, B: BlankScorer> {
    enc: &'a EncoderScores,
    blank: &'a B,
    lm: &'a L,
    /// `None` decodes the plain factorized model over `V + 1` outputs.
    trie: Option<&'a NameTrie>,
    prior: &'a NamePrior,
    cfg: &'a DecodeConfig,
    retain_s0: bool,
    drop_incomplete: bool,
    trace: Option<&'a mut Vec<PruneRecord>>,
}

impl<'a, L: LanguageModel, B: BlankScorer> Search<'a, L, B> {
    fn check(&self) -> Result<()> {
        self.cfg.validate()?;
        if self.enc.vocab_size() != self.lm.surface_size() {
            return Err(Error::Model(format!(
                "encoder has {} tokens, language model {}",
                self.enc.vocab_size(),
                self.lm.surface_size()
            )));
        }
        if self.trie.is_some() && !self.lm.has_class() {
            return Err(Error::Inventory("@name".into()));
        }
        Ok(())
    }

    fn run(mut self) -> Result<Vec<Hypothesis>> {
        self.check()?;
        let mut frame_beam = vec![Beam {
            hyp: Hypothesis::empty(),
            lm_state: self.lm.initial_state(),
            blank_state: self.blank.initial_state(),
            done: false,
        }];
        for t in 0..self.enc.frames() {
            frame_beam = self.advance_frame(t, frame_beam)?;
            for b in &mut frame_beam {
                b.done = false;
            }
        }
        self.finalize(frame_beam)
    }

    fn advance_frame(
        &mut self,
        t: usize,
        frame_beam: Vec<Beam<L::State, B::State>>,
    ) -> Result<Vec<Beam<L::State, B::State>>> {
        let mut active = frame_beam;
        let mut done: Vec<Beam<L::State, B::State>> = Vec::new();
        for round in 0..=self.cfg.max_symbols_per_frame {
            let allow_tokens = round < self.cfg.max_symbols_per_frame;
            let mut pool = Pool::new(std::mem::take(&mut done));
            for parent in &active {
                self.expand(t, parent, allow_tokens, &mut pool)?;
            }
            let kept = self.prune(pool.into_vec());
            self.record(t, round, &kept);
            let (d, a): (Vec<_>, Vec<_>) = kept.into_iter().partition(|b| b.done);
            done = d;
            active = a;
            if active.is_empty() {
                break;
            }
        }
        Ok(done)
    }

    fn record(&mut self, frame: usize, round: usize, kept: &[Beam<L::State, B::State>]) {
        if let Some(trace) = self.trace.as_deref_mut() {
            trace.push(PruneRecord {
                frame,
                round,
                kept: kept.len(),
                s0: kept.iter().filter(|b| b.hyp.is_s0()).count(),
                in_class: kept.iter().filter(|b| b.hyp.in_class()).count(),
            });
        }
    }

    /// Per-parent candidate limit: nothing ranked below this within one
    /// parent's outcomes of the same kind can survive pruning.
    fn per_parent_limit(&self) -> usize {
        self.cfg.beam_size.max(self.cfg.in_class_budget) + 1
    }

    fn expand(
        &self,
        t: usize,
        parent: &Beam<L::State, B::State>,
        allow_tokens: bool,
        pool: &mut Pool<L::State, B::State>,
    ) -> Result<()> {
        let blank_logit = self.blank.logit(t, &parent.blank_state);
        let inside = parent.hyp.cursor;
        let ninf = f64::NEG_INFINITY;

        // Linguistic state used by the vocabulary block: after leaving the
        // class the predictor first consumes `@name`.
        let exit_state = match (self.trie, inside) {
            (Some(_), Some(_)) => {
                let class = self.lm.class_index().expect("checked in Search::check");
                Some(self.lm.advance(&parent.lm_state, class))
            }
            _ => None,
        };

        let dist = match self.trie {
            None => {
                let voc = fnt_vocab_logits(self.enc, t, self.lm, &parent.lm_state)?;
                log_emit_distribution(blank_logit, &voc, &[])?
            }
            Some(trie) => {
                let v = self.enc.vocab_size();
                let (voc, name) = match inside {
                    None => {
                        let voc = fnt_vocab_logits(self.enc, t, self.lm, &parent.lm_state)?;
                        let entry = cfnt_name_logits(self.enc, t, self.lm, &parent.lm_state, true)?;
                        (voc, mask(&entry, trie.allowed_tokens(trie.root()), v))
                    }
                    Some(cursor) => {
                        let voc = match trie.is_accepting(cursor) {
                            Some(_) => fnt_vocab_logits(
                                self.enc,
                                t,
                                self.lm,
                                exit_state.as_ref().expect("inside implies exit state"),
                            )?,
                            None => vec![ninf; v],
                        };
                        let cont = cfnt_name_logits(self.enc, t, self.lm, &parent.lm_state, false)?;
                        (voc, mask(&cont, trie.allowed_tokens(cursor), v))
                    }
                };
                log_emit_distribution(blank_logit, &voc, &name)?
            }
        };

        let mut blank_ext = Beam {
            hyp: parent.hyp.clone(),
            lm_state: parent.lm_state.clone(),
            blank_state: parent.blank_state.clone(),
            done: true,
        };
        blank_ext.hyp.score += dist[0];
        pool.push(blank_ext);

        if !allow_tokens {
            return Ok(());
        }
        let v = self.enc.vocab_size();
        let mut voc_out = Vec::new();
        let mut name_out = Vec::new();
        for (i, &lp) in dist.iter().enumerate().skip(1) {
            if lp == ninf {
                continue;
            }
            let (block, token) = if i <= v {
                (Block::Voc, i - 1)
            } else {
                (Block::Name, i - 1 - v)
            };
            let out = Outcome {
                score: parent.hyp.score + lp,
                block,
                token,
            };
            match block {
                Block::Voc => voc_out.push(out),
                Block::Name => name_out.push(out),
            }
        }
        let limit = self.per_parent_limit();
        for mut outs in [voc_out, name_out] {
            outs.sort_by(|a, b| b.score.total_cmp(&a.score).then(a.token.cmp(&b.token)));
            outs.truncate(limit);
            for out in outs {
                pool.push(self.extend(parent, out, exit_state.as_ref())?);
            }
        }
        Ok(())
    }

    fn extend(
        &self,
        parent: &Beam<L::State, B::State>,
        out: Outcome,
        exit_state: Option<&L::State>,
    ) -> Result<Beam<L::State, B::State>> {
        let mut hyp = parent.hyp.clone();
        let mut lm_state = parent.lm_state.clone();
        let was_inside = hyp.cursor.is_some();
        let mut prior = 0.0;
        let status = match out.block {
            Block::Voc => {
                if was_inside {
                    let trie = self.trie.expect("inside implies a trie");
                    prior = self.close_name(trie, &mut hyp)?;
                    lm_state = exit_state.expect("inside implies exit state").clone();
                }
                lm_state = self.lm.advance(&lm_state, out.token);
                if was_inside {
                    Status::S3
                } else {
                    Status::S0
                }
            }
            Block::Name => {
                let trie = self.trie.expect("name block requires a trie");
                let from = hyp.cursor.unwrap_or_else(|| trie.root());
                hyp.cursor = Some(
                    trie.step(from, out.token)
                        .expect("masked to allowed tokens"),
                );
                if was_inside {
                    Status::S2
                } else {
                    Status::S1
                }
            }
        };
        hyp.score = if self.prior.is_enabled() {
            out.score + prior
        } else {
            out.score
        };
        hyp.tokens.push(out.token);
        hyp.statuses.push(status);
        Ok(Beam {
            hyp,
            lm_state,
            blank_state: self.blank.advance(&parent.blank_state, out.token),
            done: false,
        })
    }

    /// Records the completed name at the end of `hyp` and leaves the class.
    /// Returns the name's prior log-probability.
    fn close_name(&self, trie: &NameTrie, hyp: &mut Hypothesis) -> Result<f64> {
        let cursor = hyp.cursor.take().expect("closing requires a cursor");
        let name = trie
            .is_accepting(cursor)
            .expect("exit only from accepting cursors");
        let end = hyp.tokens.len();
        let start = end - cursor.depth();
        let prior = self.prior.log_prior(&hyp.tokens[start..end])?;
        hyp.name_spans.push(NameSpan { start, end, name });
        Ok(prior)
    }

    fn prune(&self, mut pool: Vec<Beam<L::State, B::State>>) -> Vec<Beam<L::State, B::State>> {
        pool.sort_by(rank);
        let beam = self.cfg.beam_size;
        let mut keep = vec![false; pool.len()];
        if self.cfg.dynamic_beam && self.trie.is_some() {
            let (mut outside, mut inside) = (0, 0);
            for (i, b) in pool.iter().enumerate() {
                if b.hyp.in_class() {
                    if inside < self.cfg.in_class_budget {
                        keep[i] = true;
                        inside += 1;
                    }
                } else if outside < beam {
                    keep[i] = true;
                    outside += 1;
                }
            }
        } else {
            keep.iter_mut().take(beam).for_each(|k| *k = true);
        }
        if self.retain_s0 && self.trie.is_some() {
            let has_s0 = pool.iter().zip(&keep).any(|(b, &k)| k && b.hyp.is_s0());
            if !has_s0 {
                if let Some(i) = pool.iter().position(|b| b.hyp.is_s0()) {
                    keep[i] = true;
                }
            }
        }
        pool.into_iter()
            .zip(keep)
            .filter_map(|(b, k)| k.then_some(b))
            .collect()
    }

    fn finalize(&self, beams: Vec<Beam<L::State, B::State>>) -> Result<Vec<Hypothesis>> {
        let mut out = Vec::with_capacity(beams.len());
        for b in beams {
            let mut hyp = b.hyp;
            if let (Some(trie), Some(cursor)) = (self.trie, hyp.cursor) {
                if trie.is_accepting(cursor).is_some() {
                    let prior = self.close_name(trie, &mut hyp)?;
                    if self.prior.is_enabled() {
                        hyp.score += prior;
                    }
                } else if self.drop_incomplete {
                    continue;
                }
            }
            out.push(hyp);
        }
        out.sort_by(rank_hyp);
        out.truncate(self.cfg.beam_size);
        Ok(out)
    }
}

fn mask(logits: &[f64], allowed: impl Iterator<Item = TokenId>, v: usize) -> Vec<f64> {
    let mut out = vec![f64::NEG_INFINITY; v];
    for tok in allowed {
        out[tok] = logits[tok];
    }
    out
}

/// Candidate pool with log-sum-exp merging on `(tokens, statuses, done)`.
struct Pool<LS, BS> {
    beams: Vec<Beam<LS, BS>>,
    index: HashMap<Key, usize>,
}

impl<LS, BS> Pool<LS, BS> {
    fn new(seed: Vec<Beam<LS, BS>>) -> Self {
        let mut pool = Self {
            beams: Vec::with_capacity(seed.len()),
            index: HashMap::new(),
        };
        for b in seed {
            pool.push(b);
        }
        pool
    }

    fn push(&mut self, beam: Beam<LS, BS>) {
        let key = key_of(&beam);
        match self.index.get(&key) {
            Some(&i) => {
                let merged = &mut self.beams[i].hyp.score;
                *merged = log_add_exp(*merged, beam.hyp.score);
            }
            None => {
                self.index.insert(key, self.beams.len());
                self.beams.push(beam);
            }
        }
    }

    fn into_vec(self) -> Vec<Beam<LS, BS>> {
        self.beams
    }
}

/// Frame-synchronous greedy decoding over the `V + 1` outputs: emit the
/// argmax until blank wins (or the per-frame cap is hit), then move on.
pub fn fnt_greedy<L: LanguageModel, B: BlankScorer>(
    enc: &EncoderScores,
    blank: &B,
    lm: &L,
    max_symbols_per_frame: usize,
) -> Result<Hypothesis> {
    if enc.vocab_size() != lm.surface_size() {
        return Err(Error::Model(
            "encoder and language model disagree on V".into(),
        ));
    }
    let mut hyp = Hypothesis::empty();
    let mut lm_state = lm.initial_state();
    let mut blank_state = blank.initial_state();
    for t in 0..enc.frames() {
        let mut emitted = 0;
        loop {
            let voc = fnt_vocab_logits(enc, t, lm, &lm_state)?;
            let dist = log_emit_distribution(blank.logit(t, &blank_state), &voc, &[])?;
            let mut best = 0;
            if emitted < max_symbols_per_frame {
                for (i, &lp) in dist.iter().enumerate() {
                    if lp > dist[best] {
                        best = i;
                    }
                }
            }
            hyp.score += dist[best];
            if best == 0 {
                break;
            }
            let tok = best - 1;
            hyp.tokens.push(tok);
            hyp.statuses.push(Status::S0);
            lm_state = lm.advance(&lm_state, tok);
            blank_state = blank.advance(&blank_state, tok);
            emitted += 1;
        }
    }
    Ok(hyp)
}

/// Beam search over the `V + 1` outputs; n-best sorted by merged score.
pub fn fnt_beam_search<L: LanguageModel, B: BlankScorer>(
    enc: &EncoderScores,
    blank: &B,
    lm: &L,
    cfg: &DecodeConfig,
) -> Result<Vec<Hypothesis>> {
    Search {
        enc,
        blank,
        lm,
        trie: None,
        prior: &NamePrior::disabled(),
        cfg,
        retain_s0: false,
        drop_incomplete: false,
        trace: None,
    }
    .run()
}

/// Options of the class-based beam search beyond [`DecodeConfig`].
#[derive(Debug, Default)]
pub struct CfntOptions<'a> {
    pub prior: Option<&'a NamePrior>,
    pub trace: Option<&'a mut Vec<PruneRecord>>,
}

/// Beam search over the `2V + 1` outputs with the name trie constraint.
pub fn cfnt_beam_search<L: LanguageModel, B: BlankScorer>(
    enc: &EncoderScores,
    blank: &B,
    class_lm: &L,
    trie: &NameTrie,
    cfg: &DecodeConfig,
) -> Result<Vec<Hypothesis>> {
    cfnt_beam_search_with(enc, blank, class_lm, trie, cfg, CfntOptions::default())
}

pub fn cfnt_beam_search_with<L: LanguageModel, B: BlankScorer>(
    enc: &EncoderScores,
    blank: &B,
    class_lm: &L,
    trie: &NameTrie,
    cfg: &DecodeConfig,
    opts: CfntOptions<'_>,
) -> Result<Vec<Hypothesis>> {
    let disabled = NamePrior::disabled();
    Search {
        enc,
        blank,
        lm: class_lm,
        trie: Some(trie),
        prior: opts.prior.unwrap_or(&disabled),
        cfg,
        retain_s0: true,
        drop_incomplete: true,
        trace: opts.trace,
    }
    .run()
}

/// Single-beam class-based search without the `S0` retention rule. The
/// hypothesis is returned even when it ends inside the class.
pub fn cfnt_greedy<L: LanguageModel, B: BlankScorer>(
    enc: &EncoderScores,
    blank: &B,
    class_lm: &L,
    trie: &NameTrie,
    max_symbols_per_frame: usize,
) -> Result<Hypothesis> {
    let cfg = DecodeConfig {
        max_symbols_per_frame,
        ..DecodeConfig::new(1)
    };
    let disabled = NamePrior::disabled();
    let mut out = Search {
        enc,
        blank,
        lm: class_lm,
        trie: Some(trie),
        prior: &disabled,
        cfg: &cfg,
        retain_s0: false,
        drop_incomplete: false,
        trace: None,
    }
    .run()?;
    Ok(out.remove(0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scoring::{BlankTable, NgramLm};

    #[test]
    fn status_transitions() {
        use Status::*;
        assert!(statuses_legal(&[S0, S1, S2, S3, S0, S1, S3, S1]));
        assert!(!statuses_legal(&[S2]));
        assert!(!statuses_legal(&[S3]));
        assert!(!statuses_legal(&[S1, S0]));
        assert!(!statuses_legal(&[S1, S1]));
        assert!(!statuses_legal(&[S0, S2]));
        assert!(statuses_legal(&[]));
    }

    fn unigram(probs: Vec<f64>, class: bool) -> NgramLm {
        let v = probs.len() - usize::from(class);
        NgramLm::new(1, v, class, [(vec![], probs)]).unwrap()
    }

    #[test]
    fn blank_dominant_gives_empty_output() {
        let enc = EncoderScores::new(vec![vec![0.0, 0.0]; 3]).unwrap();
        let blank = BlankTable::constant(3, 10.0);
        let lm = unigram(vec![0.5, 0.5], false);
        let hyp = fnt_greedy(&enc, &blank, &lm, 8).unwrap();
        assert!(hyp.tokens.is_empty());
    }

    #[test]
    fn greedy_picks_dominant_token_then_blank() {
        // Token a dominates frame 0 before any emission; blank afterwards.
        let enc = EncoderScores::new(vec![vec![5.0, 0.0], vec![0.0, 0.0]]).unwrap();
        let blank = BlankTable::new(0, vec![vec![0.0, 10.0], vec![10.0, 10.0]]).unwrap();
        let lm = unigram(vec![0.5, 0.5], false);
        let hyp = fnt_greedy(&enc, &blank, &lm, 8).unwrap();
        assert_eq!(hyp.tokens, vec![0]);
        let beam = fnt_beam_search(&enc, &blank, &lm, &DecodeConfig::new(1)).unwrap();
        assert_eq!(beam[0].tokens, vec![0]);
        assert_eq!(beam[0].score, hyp.score);
    }

    #[test]
    fn symbol_cap_forces_blank() {
        let enc = EncoderScores::new(vec![vec![10.0]]).unwrap();
        let blank = BlankTable::constant(1, -10.0);
        let lm = unigram(vec![1.0], false);
        let hyp = fnt_greedy(&enc, &blank, &lm, 3).unwrap();
        assert_eq!(hyp.tokens, vec![0, 0, 0]);
        let cfg = DecodeConfig {
            max_symbols_per_frame: 3,
            ..DecodeConfig::new(4)
        };
        // Every ending pays the same forced blank, so the wider search
        // prefers stopping before the emissions that cost a little.
        let beam = fnt_beam_search(&enc, &blank, &lm, &cfg).unwrap();
        assert!(beam[0].score >= hyp.score);
        assert!(beam.iter().all(|h| h.tokens.len() <= 3));
    }

    #[test]
    fn zero_beam_rejected() {
        let enc = EncoderScores::new(vec![vec![0.0]]).unwrap();
        let blank = BlankTable::constant(1, 0.0);
        let lm = unigram(vec![1.0], false);
        assert!(fnt_beam_search(&enc, &blank, &lm, &DecodeConfig::new(0)).is_err());
    }

    #[test]
    fn merging_sums_alignments() {
        // T=2, V=1, every node uniform over {blank, a}, cap of one symbol per
        // frame. Y=[a] is reached by emitting at t=0 or at t=1; both paths
        // end in one entry whose probability is the sum 2 * (1/2)^3.
        let enc = EncoderScores::new(vec![vec![0.0]; 2]).unwrap();
        let blank = BlankTable::constant(2, 0.0);
        let lm = unigram(vec![1.0], false);
        let cfg = DecodeConfig {
            max_symbols_per_frame: 1,
            ..DecodeConfig::new(8)
        };
        let out = fnt_beam_search(&enc, &blank, &lm, &cfg).unwrap();
        let one = out.iter().find(|h| h.tokens == vec![0]).unwrap();
        assert!((one.score - (2.0 * 0.125f64).ln()).abs() < 1e-12);
        let n = out.iter().filter(|h| h.tokens == vec![0]).count();
        assert_eq!(n, 1);
    }

    #[test]
    fn class_search_requires_class_model() {
        let enc = EncoderScores::new(vec![vec![0.0]]).unwrap();
        let blank = BlankTable::constant(1, 0.0);
        let lm = unigram(vec![1.0], false);
        let trie = NameTrie::empty();
        assert!(matches!(
            cfnt_beam_search(&enc, &blank, &lm, &trie, &DecodeConfig::default()),
            Err(Error::Inventory(_))
        ));
    }
}
