//! Score providers and logit composition.
//!
//! A factorized transducer scores a vocabulary token as the language-model
//! log-probability plus the encoder logit for that token. The class-based
//! variant adds a second block of logits for tokens emitted inside the name
//! class, whose linguistic term comes from `P(@name | history)` instead of the
//! token itself. Blank is scored by a separate predictor.

use std::borrow::Cow;
use std::collections::HashMap;
use std::fmt;

use crate::error::{Error, Result};
use crate::vocab::TokenId;

/// `log(exp(a) + exp(b))`, exact for infinite arguments.
pub fn log_add_exp(a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY {
        return b;
    }
    if b == f64::NEG_INFINITY {
        return a;
    }
    let (hi, lo) = if a >= b { (a, b) } else { (b, a) };
    hi + (lo - hi).exp().ln_1p()
}

pub fn log_sum_exp(xs: &[f64]) -> f64 {
    let max = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + xs.iter().map(|&x| (x - max).exp()).sum::<f64>().ln()
}

/// Log-softmax. Entries equal to `-inf` stay `-inf` and contribute an exact
/// zero to the normalizer, so masking never perturbs the live entries.
pub fn log_softmax(logits: &[f64]) -> Result<Vec<f64>> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return Err(Error::DegenerateDistribution);
    }
    let sum: f64 = logits.iter().map(|&z| (z - max).exp()).sum();
    let lse = max + sum.ln();
    Ok(logits.iter().map(|&z| z - lse).collect())
}

/// Per-utterance encoder logits, `T x V`.
#[derive(Clone, Debug, PartialEq)]
pub struct EncoderScores {
    vocab_size: usize,
    logits: Vec<f64>,
}

impl EncoderScores {
    pub fn new(rows: Vec<Vec<f64>>) -> Result<Self> {
        let Some(first) = rows.first() else {
            return Err(Error::EmptyInput);
        };
        let vocab_size = first.len();
        if vocab_size == 0 {
            return Err(Error::Model("encoder rows are empty".into()));
        }
        let mut logits = Vec::with_capacity(rows.len() * vocab_size);
        for (t, row) in rows.iter().enumerate() {
            if row.len() != vocab_size {
                return Err(Error::Model(format!(
                    "encoder row {t} has {} entries, expected {vocab_size}",
                    row.len()
                )));
            }
            if let Some(z) = row.iter().find(|z| !z.is_finite()) {
                return Err(Error::Model(format!(
                    "non-finite encoder logit {z} at frame {t}"
                )));
            }
            logits.extend_from_slice(row);
        }
        Ok(Self { vocab_size, logits })
    }

    pub fn frames(&self) -> usize {
        self.logits.len() / self.vocab_size
    }

    pub fn vocab_size(&self) -> usize {
        self.vocab_size
    }

    pub fn row(&self, t: usize) -> Result<&[f64]> {
        if t >= self.frames() {
            return Err(Error::FrameRange {
                frame: t,
                frames: self.frames(),
            });
        }
        Ok(&self.logits[t * self.vocab_size..(t + 1) * self.vocab_size])
    }

    pub fn rows(&self) -> Vec<Vec<f64>> {
        self.logits
            .chunks(self.vocab_size)
            .map(<[f64]>::to_vec)
            .collect()
    }
}

/// A vocabulary predictor.
///
/// The inventory is the `V` surface tokens, followed by `@name` at index `V`
/// for class-based models. `log_probs` must be normalized over the inventory.
pub trait LanguageModel: Send + Sync {
    type State: Clone + fmt::Debug + Send + Sync;

    fn surface_size(&self) -> usize;

    fn has_class(&self) -> bool;

    fn inventory_size(&self) -> usize {
        self.surface_size() + usize::from(self.has_class())
    }

    fn class_index(&self) -> Option<usize> {
        self.has_class().then(|| self.surface_size())
    }

    fn initial_state(&self) -> Self::State;

    fn log_probs(&self, state: &Self::State) -> Cow<'_, [f64]>;

    fn advance(&self, state: &Self::State, token: usize) -> Self::State;

    /// End-of-sequence log-probability, for models that define one. Only
    /// sequence scoring consults it; frame-synchronous decoding never does.
    fn eos_log_prob(&self, _state: &Self::State) -> Option<f64> {
        None
    }
}

/// The blank predictor: a blank logit per `(frame, state)`, with the state
/// advanced by every emitted surface token.
pub trait BlankScorer: Send + Sync {
    type State: Clone + fmt::Debug + Send + Sync;

    fn initial_state(&self) -> Self::State;

    fn advance(&self, state: &Self::State, token: TokenId) -> Self::State;

    fn logit(&self, frame: usize, state: &Self::State) -> f64;
}

const BOS: u32 = u32::MAX;

/// Dense n-gram table without backoff. Every reachable context carries a full
/// distribution over the inventory.
#[derive(Clone, Debug, PartialEq)]
pub struct NgramLm {
    order: usize,
    surface_size: usize,
    has_class: bool,
    table: HashMap<Vec<u32>, Vec<f64>>,
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct NgramState(Vec<u32>);

/// One context position: `None` is the sentence-start padding.
pub type NgramContext = Vec<Option<usize>>;

impl NgramLm {
    /// Builds the table from linear-domain probabilities.
    pub fn new(
        order: usize,
        surface_size: usize,
        has_class: bool,
        rows: impl IntoIterator<Item = (NgramContext, Vec<f64>)>,
    ) -> Result<Self> {
        if order == 0 {
            return Err(Error::Model("n-gram order must be at least 1".into()));
        }
        let inventory = surface_size + usize::from(has_class);
        let mut table = HashMap::new();
        for (ctx, probs) in rows {
            if ctx.len() != order - 1 {
                return Err(Error::Model(format!(
                    "context of length {} in an order-{order} model",
                    ctx.len()
                )));
            }
            if probs.len() != inventory {
                return Err(Error::Model(format!(
                    "distribution of size {} for inventory {inventory}",
                    probs.len()
                )));
            }
            let key = encode_context(&ctx, inventory)?;
            if probs.iter().any(|p| !(0.0..=1.0).contains(p)) {
                return Err(Error::Model(format!(
                    "probability out of range in context {ctx:?}"
                )));
            }
            let total: f64 = probs.iter().sum();
            if (total - 1.0).abs() > 1e-9 {
                return Err(Error::Model(format!(
                    "context {ctx:?} sums to {total}, expected 1"
                )));
            }
            let logs = probs.iter().map(|p| p.ln()).collect();
            if table.insert(key, logs).is_some() {
                return Err(Error::Model(format!("duplicate context {ctx:?}")));
            }
        }
        let lm = Self {
            order,
            surface_size,
            has_class,
            table,
        };
        lm.check_complete()?;
        Ok(lm)
    }

    fn check_complete(&self) -> Result<()> {
        let inventory = self.inventory_size() as u32;
        let width = self.order - 1;
        for pad in 0..=width {
            let free = width - pad;
            let count = (inventory as usize).pow(free as u32);
            for mut code in 0..count {
                let mut key = vec![BOS; pad];
                let mut tail = vec![0u32; free];
                for slot in tail.iter_mut().rev() {
                    *slot = (code % inventory as usize) as u32;
                    code /= inventory as usize;
                }
                key.extend(tail);
                if !self.table.contains_key(&key) {
                    return Err(Error::Model(format!("missing n-gram context {key:?}")));
                }
            }
        }
        Ok(())
    }

    pub fn order(&self) -> usize {
        self.order
    }

    /// Rows in a stable order: contexts sorted, sentence start first.
    pub fn rows(&self) -> Vec<(NgramContext, Vec<f64>)> {
        let mut keys: Vec<&Vec<u32>> = self.table.keys().collect();
        keys.sort_by_key(|k| k.iter().map(|&c| c.wrapping_add(1)).collect::<Vec<_>>());
        keys.into_iter()
            .map(|k| {
                let ctx = k
                    .iter()
                    .map(|&c| (c != BOS).then_some(c as usize))
                    .collect();
                let probs = self.table[k].iter().map(|l| l.exp()).collect();
                (ctx, probs)
            })
            .collect()
    }
}

fn encode_context(ctx: &[Option<usize>], inventory: usize) -> Result<Vec<u32>> {
    let mut seen_token = false;
    ctx.iter()
        .map(|c| match c {
            None if seen_token => Err(Error::Model("sentence start after a token".into())),
            None => Ok(BOS),
            Some(t) if *t < inventory => {
                seen_token = true;
                Ok(*t as u32)
            }
            Some(t) => Err(Error::Inventory(t.to_string())),
        })
        .collect()
}

impl LanguageModel for NgramLm {
    type State = NgramState;

    fn surface_size(&self) -> usize {
        self.surface_size
    }

    fn has_class(&self) -> bool {
        self.has_class
    }

    fn initial_state(&self) -> NgramState {
        NgramState(vec![BOS; self.order - 1])
    }

    fn log_probs(&self, state: &NgramState) -> Cow<'_, [f64]> {
        Cow::Borrowed(&self.table[&state.0])
    }

    fn advance(&self, state: &NgramState, token: usize) -> NgramState {
        let mut ctx = state.0.clone();
        if !ctx.is_empty() {
            ctx.remove(0);
            ctx.push(token as u32);
        }
        NgramState(ctx)
    }
}

/// Single-layer tanh recurrent language model with a softmax output layer.
#[derive(Clone, Debug, PartialEq)]
pub struct RnnLm {
    surface_size: usize,
    has_class: bool,
    hidden: usize,
    /// `hidden x inventory`, column `x` is the input embedding of token `x`.
    w_in: Vec<Vec<f64>>,
    w_hh: Vec<Vec<f64>>,
    b_h: Vec<f64>,
    /// `inventory x hidden`.
    w_out: Vec<Vec<f64>>,
    b_out: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RnnState {
    hidden: Vec<f64>,
    log_probs: Vec<f64>,
}

impl RnnState {
    pub fn hidden(&self) -> &[f64] {
        &self.hidden
    }
}

#[derive(Clone, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct RnnWeights {
    pub hidden: usize,
    pub w_in: Vec<Vec<f64>>,
    pub w_hh: Vec<Vec<f64>>,
    pub b_h: Vec<f64>,
    pub w_out: Vec<Vec<f64>>,
    pub b_out: Vec<f64>,
}

fn check_matrix(name: &str, m: &[Vec<f64>], rows: usize, cols: usize) -> Result<()> {
    if m.len() != rows || m.iter().any(|r| r.len() != cols) {
        return Err(Error::Model(format!("{name} must be {rows}x{cols}")));
    }
    if m.iter().flatten().any(|x| !x.is_finite()) {
        return Err(Error::Model(format!("{name} has non-finite weights")));
    }
    Ok(())
}

impl RnnLm {
    pub fn new(surface_size: usize, has_class: bool, w: RnnWeights) -> Result<Self> {
        let inventory = surface_size + usize::from(has_class);
        let h = w.hidden;
        check_matrix("w_in", &w.w_in, h, inventory)?;
        check_matrix("w_hh", &w.w_hh, h, h)?;
        check_matrix("b_h", std::slice::from_ref(&w.b_h), 1, h)?;
        check_matrix("w_out", &w.w_out, inventory, h)?;
        check_matrix("b_out", std::slice::from_ref(&w.b_out), 1, inventory)?;
        Ok(Self {
            surface_size,
            has_class,
            hidden: h,
            w_in: w.w_in,
            w_hh: w.w_hh,
            b_h: w.b_h,
            w_out: w.w_out,
            b_out: w.b_out,
        })
    }

    pub fn weights(&self) -> RnnWeights {
        RnnWeights {
            hidden: self.hidden,
            w_in: self.w_in.clone(),
            w_hh: self.w_hh.clone(),
            b_h: self.b_h.clone(),
            w_out: self.w_out.clone(),
            b_out: self.b_out.clone(),
        }
    }

    pub fn hidden_size(&self) -> usize {
        self.hidden
    }

    fn state_from_hidden(&self, hidden: Vec<f64>) -> RnnState {
        let logits: Vec<f64> = self
            .w_out
            .iter()
            .zip(&self.b_out)
            .map(|(row, b)| b + dot(row, &hidden))
            .collect();
        let log_probs = log_softmax(&logits).expect("finite weights give finite logits");
        RnnState { hidden, log_probs }
    }

    pub fn step_hidden(&self, hidden: &[f64], token: usize) -> Vec<f64> {
        (0..self.hidden)
            .map(|i| (self.w_in[i][token] + dot(&self.w_hh[i], hidden) + self.b_h[i]).tanh())
            .collect()
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

impl LanguageModel for RnnLm {
    type State = RnnState;

    fn surface_size(&self) -> usize {
        self.surface_size
    }

    fn has_class(&self) -> bool {
        self.has_class
    }

    fn initial_state(&self) -> RnnState {
        self.state_from_hidden(vec![0.0; self.hidden])
    }

    fn log_probs(&self, state: &RnnState) -> Cow<'_, [f64]> {
        Cow::Owned(state.log_probs.clone())
    }

    fn advance(&self, state: &RnnState, token: usize) -> RnnState {
        self.state_from_hidden(self.step_hidden(&state.hidden, token))
    }
}

/// Either toy language model, as loaded from `model.json`.
#[derive(Clone, Debug, PartialEq)]
pub enum AnyLm {
    Ngram(NgramLm),
    Rnn(RnnLm),
}

#[derive(Clone, Debug, PartialEq)]
pub enum AnyLmState {
    Ngram(NgramState),
    Rnn(RnnState),
}

impl LanguageModel for AnyLm {
    type State = AnyLmState;

    fn surface_size(&self) -> usize {
        match self {
            AnyLm::Ngram(m) => m.surface_size(),
            AnyLm::Rnn(m) => m.surface_size(),
        }
    }

    fn has_class(&self) -> bool {
        match self {
            AnyLm::Ngram(m) => m.has_class(),
            AnyLm::Rnn(m) => m.has_class(),
        }
    }

    fn initial_state(&self) -> AnyLmState {
        match self {
            AnyLm::Ngram(m) => AnyLmState::Ngram(m.initial_state()),
            AnyLm::Rnn(m) => AnyLmState::Rnn(m.initial_state()),
        }
    }

    fn log_probs(&self, state: &AnyLmState) -> Cow<'_, [f64]> {
        match (self, state) {
            (AnyLm::Ngram(m), AnyLmState::Ngram(s)) => m.log_probs(s),
            (AnyLm::Rnn(m), AnyLmState::Rnn(s)) => m.log_probs(s),
            _ => unreachable!("state from a different model"),
        }
    }

    fn advance(&self, state: &AnyLmState, token: usize) -> AnyLmState {
        match (self, state) {
            (AnyLm::Ngram(m), AnyLmState::Ngram(s)) => AnyLmState::Ngram(m.advance(s, token)),
            (AnyLm::Rnn(m), AnyLmState::Rnn(s)) => AnyLmState::Rnn(m.advance(s, token)),
            _ => unreachable!("state from a different model"),
        }
    }
}

/// Blank predictor backed by a `T x B` table. The state is hashed into one of
/// `B` buckets: with `context == 0` the bucket is the number of emitted tokens
/// (capped at `B - 1`), otherwise it is a hash of the last `context` tokens.
#[derive(Clone, Debug, PartialEq)]
pub struct BlankTable {
    context: usize,
    table: Vec<Vec<f64>>,
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct BlankHistory {
    len: usize,
    recent: Vec<TokenId>,
}

impl BlankTable {
    pub fn new(context: usize, table: Vec<Vec<f64>>) -> Result<Self> {
        let buckets = table.first().map_or(0, Vec::len);
        if table.is_empty() || buckets == 0 {
            return Err(Error::Model("blank table must be non-empty".into()));
        }
        check_matrix("blank_table", &table, table.len(), buckets)?;
        Ok(Self { context, table })
    }

    /// A table with a single constant logit per frame.
    pub fn constant(frames: usize, logit: f64) -> Self {
        Self {
            context: 0,
            table: vec![vec![logit]; frames],
        }
    }

    pub fn frames(&self) -> usize {
        self.table.len()
    }

    pub fn buckets(&self) -> usize {
        self.table[0].len()
    }

    pub fn table_value(&self, frame: usize, bucket: usize) -> f64 {
        self.table[frame][bucket]
    }

    pub fn table(&self) -> &[Vec<f64>] {
        &self.table
    }

    pub fn bucket(&self, state: &BlankHistory) -> usize {
        let buckets = self.buckets();
        if self.context == 0 {
            return state.len.min(buckets - 1);
        }
        // FNV-1a over the trailing token ids.
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        for &tok in &state.recent {
            for byte in (tok as u64).to_le_bytes() {
                h ^= u64::from(byte);
                h = h.wrapping_mul(0x0100_0000_01b3);
            }
        }
        (h % buckets as u64) as usize
    }
}

impl BlankScorer for BlankTable {
    type State = BlankHistory;

    fn initial_state(&self) -> BlankHistory {
        BlankHistory {
            len: 0,
            recent: Vec::new(),
        }
    }

    fn advance(&self, state: &BlankHistory, token: TokenId) -> BlankHistory {
        let mut recent = state.recent.clone();
        if self.context > 0 {
            if recent.len() == self.context {
                recent.remove(0);
            }
            recent.push(token);
        }
        BlankHistory {
            len: state.len + 1,
            recent,
        }
    }

    fn logit(&self, frame: usize, state: &BlankHistory) -> f64 {
        self.table[frame][self.bucket(state)]
    }
}

/// Blank predictor sharing the recurrent network: a linear head over the
/// hidden state plus a per-frame bias.
#[derive(Clone, Debug)]
pub struct RecurrentBlank<'a> {
    net: &'a RnnLm,
    head: &'a [f64],
    bias: f64,
    frame_bias: Vec<f64>,
}

impl<'a> RecurrentBlank<'a> {
    pub fn new(net: &'a RnnLm, head: &'a [f64], bias: f64, frame_bias: Vec<f64>) -> Result<Self> {
        if head.len() != net.hidden_size() {
            return Err(Error::Model("blank head does not match hidden size".into()));
        }
        Ok(Self {
            net,
            head,
            bias,
            frame_bias,
        })
    }
}

impl BlankScorer for RecurrentBlank<'_> {
    type State = Vec<f64>;

    fn initial_state(&self) -> Vec<f64> {
        vec![0.0; self.net.hidden_size()]
    }

    fn advance(&self, state: &Vec<f64>, token: TokenId) -> Vec<f64> {
        self.net.step_hidden(state, token)
    }

    fn logit(&self, frame: usize, state: &Vec<f64>) -> f64 {
        dot(self.head, state) + self.bias + self.frame_bias[frame]
    }
}

/// Either toy blank predictor.
#[derive(Clone, Debug)]
pub enum AnyBlank<'a> {
    Table(BlankTable),
    Recurrent(RecurrentBlank<'a>),
}

#[derive(Clone, Debug, PartialEq)]
pub enum AnyBlankState {
    Table(BlankHistory),
    Recurrent(Vec<f64>),
}

impl BlankScorer for AnyBlank<'_> {
    type State = AnyBlankState;

    fn initial_state(&self) -> AnyBlankState {
        match self {
            AnyBlank::Table(b) => AnyBlankState::Table(b.initial_state()),
            AnyBlank::Recurrent(b) => AnyBlankState::Recurrent(b.initial_state()),
        }
    }

    fn advance(&self, state: &AnyBlankState, token: TokenId) -> AnyBlankState {
        match (self, state) {
            (AnyBlank::Table(b), AnyBlankState::Table(s)) => {
                AnyBlankState::Table(b.advance(s, token))
            }
            (AnyBlank::Recurrent(b), AnyBlankState::Recurrent(s)) => {
                AnyBlankState::Recurrent(b.advance(s, token))
            }
            _ => unreachable!("state from a different blank predictor"),
        }
    }

    fn logit(&self, frame: usize, state: &AnyBlankState) -> f64 {
        match (self, state) {
            (AnyBlank::Table(b), AnyBlankState::Table(s)) => b.logit(frame, s),
            (AnyBlank::Recurrent(b), AnyBlankState::Recurrent(s)) => b.logit(frame, s),
            _ => unreachable!("state from a different blank predictor"),
        }
    }
}

/// Optional `log P(name | @name)`, keyed by the name's tokens.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct NamePrior {
    log_priors: Option<HashMap<Vec<TokenId>, f64>>,
}

impl NamePrior {
    pub fn disabled() -> Self {
        Self::default()
    }

    pub fn new(log_priors: HashMap<Vec<TokenId>, f64>) -> Result<Self> {
        let mass: f64 = log_priors.values().map(|l| l.exp()).sum();
        if mass > 1.0 + 1e-9 || log_priors.values().any(|l| l.is_nan()) {
            return Err(Error::Config(format!("name priors sum to {mass} > 1")));
        }
        Ok(Self {
            log_priors: Some(log_priors),
        })
    }

    /// Uniform prior over the distinct names.
    pub fn uniform(names: &[Vec<TokenId>]) -> Result<Self> {
        let distinct: std::collections::HashSet<&Vec<TokenId>> = names.iter().collect();
        let lp = -(distinct.len() as f64).ln();
        Self::new(distinct.into_iter().map(|n| (n.clone(), lp)).collect())
    }

    pub fn is_enabled(&self) -> bool {
        self.log_priors.is_some()
    }

    pub fn log_prior(&self, name: &[TokenId]) -> Result<f64> {
        match &self.log_priors {
            None => Ok(0.0),
            Some(map) => map
                .get(name)
                .copied()
                .ok_or_else(|| Error::MissingPrior(name.to_vec())),
        }
    }
}

/// Vocabulary logits: `log P_LM(w | state) + z_enc(w | t)` for
/// each surface token `w`. For a class model the `@name` entry is ignored.
pub fn fnt_vocab_logits<L: LanguageModel>(
    enc: &EncoderScores,
    t: usize,
    lm: &L,
    state: &L::State,
) -> Result<Vec<f64>> {
    let row = enc.row(t)?;
    let lp = lm.log_probs(state);
    Ok(row.iter().zip(lp.iter()).map(|(z, l)| l + z).collect())
}

/// In-class logits. On entry (first token of a name) the class log-probability
/// `log P(@name | state)` is added to every encoder logit; continuation tokens
/// carry the encoder logit alone.
pub fn cfnt_name_logits<L: LanguageModel>(
    enc: &EncoderScores,
    t: usize,
    class_lm: &L,
    state: &L::State,
    entry: bool,
) -> Result<Vec<f64>> {
    let class = class_lm
        .class_index()
        .ok_or_else(|| Error::Inventory("@name".into()))?;
    let row = enc.row(t)?;
    if !entry {
        return Ok(row.to_vec());
    }
    let class_lp = class_lm.log_probs(state)[class];
    Ok(row.iter().map(|z| class_lp + z).collect())
}

/// Layout of the `2V+1` output distribution: blank, `V` vocabulary entries,
/// then `V` in-class entries.
pub fn concat_logits(blank: f64, voc: &[f64], name: &[f64]) -> Vec<f64> {
    let mut all = Vec::with_capacity(1 + voc.len() + name.len());
    all.push(blank);
    all.extend_from_slice(voc);
    all.extend_from_slice(name);
    all
}

/// Log of the emission distribution over `[blank, voc.., name..]`.
pub fn log_emit_distribution(blank: f64, voc: &[f64], name: &[f64]) -> Result<Vec<f64>> {
    log_softmax(&concat_logits(blank, voc, name))
}

/// Emission probabilities over `[blank, voc.., name..]`; masked (`-inf`)
/// entries come out as exactly zero.
pub fn emit_distribution(blank: f64, voc: &[f64], name: &[f64]) -> Result<Vec<f64>> {
    Ok(log_emit_distribution(blank, voc, name)?
        .into_iter()
        .map(f64::exp)
        .collect())
}

/// FNT emission log-probabilities at one lattice node: index 0 is blank,
/// index `1 + w` is surface token `w`.
pub fn fnt_log_emissions<L: LanguageModel, B: BlankScorer>(
    enc: &EncoderScores,
    t: usize,
    blank: &B,
    blank_state: &B::State,
    lm: &L,
    lm_state: &L::State,
) -> Result<Vec<f64>> {
    let voc = fnt_vocab_logits(enc, t, lm, lm_state)?;
    log_emit_distribution(blank.logit(t, blank_state), &voc, &[])
}

/// Walks the model from its initial state over `context` (surface tokens).
pub fn lm_state_after<L: LanguageModel>(lm: &L, context: &[usize]) -> Result<L::State> {
    let mut state = lm.initial_state();
    for &tok in context {
        if tok >= lm.inventory_size() {
            return Err(Error::Inventory(tok.to_string()));
        }
        state = lm.advance(&state, tok);
    }
    Ok(state)
}

/// `log P(@name | context) + log P(name | @name)`.
pub fn class_factored_logprob<L: LanguageModel>(
    context: &[TokenId],
    name: &[TokenId],
    class_lm: &L,
    prior: &NamePrior,
) -> Result<f64> {
    let class = class_lm
        .class_index()
        .ok_or_else(|| Error::Inventory("@name".into()))?;
    let state = lm_state_after(class_lm, context)?;
    let class_lp = class_lm.log_probs(&state)[class];
    Ok(class_lp + prior.log_prior(name)?)
}

/// Sum of stepwise log-probabilities from the initial state, plus the
/// end-of-sequence term when the model defines one. Tokens are inventory
/// indices, so class-tagged sequences may contain `@name`.
pub fn lm_sequence_logprob<L: LanguageModel>(lm: &L, seq: &[usize]) -> Result<f64> {
    let mut state = lm.initial_state();
    let mut total = 0.0;
    for &tok in seq {
        if tok >= lm.inventory_size() {
            return Err(Error::Inventory(tok.to_string()));
        }
        total += lm.log_probs(&state)[tok];
        state = lm.advance(&state, tok);
    }
    if let Some(eos) = lm.eos_log_prob(&state) {
        total += eos;
    }
    Ok(total)
}
