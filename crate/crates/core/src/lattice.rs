//! Transducer alignment lattice: sequence log-likelihood by the forward
//! recursion, an explicit-enumeration oracle, and the factorized loss.
//!
//! Node `(t, u)` means `u` labels have been emitted and frame `t` is current.
//! Emitting label `u + 1` stays on frame `t`; blank moves to `t + 1`. Every
//! alignment ends with the blank that leaves frame `T - 1`, so a label
//! sequence of length `U` has `C(T + U - 1, U)` alignments.

use crate::error::{Error, Result};
use crate::scoring::{
    fnt_log_emissions, lm_sequence_logprob, log_add_exp, log_sum_exp, BlankScorer, EncoderScores,
    LanguageModel,
};
use crate::vocab::TokenId;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Step {
    Blank,
    Emit(TokenId),
}

/// An interleaving of `T` blanks and `U` emissions.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Alignment(pub Vec<Step>);

impl Alignment {
    /// Strips blanks.
    pub fn labels(&self) -> Vec<TokenId> {
        self.0
            .iter()
            .filter_map(|s| match s {
                Step::Emit(tok) => Some(*tok),
                Step::Blank => None,
            })
            .collect()
    }
}

/// All alignments of `labels` over `frames` frames.
pub fn alignments(frames: usize, labels: &[TokenId]) -> Vec<Alignment> {
    fn go(
        frames_left: usize,
        labels: &[TokenId],
        prefix: &mut Vec<Step>,
        out: &mut Vec<Alignment>,
    ) {
        if frames_left == 1 && labels.is_empty() {
            prefix.push(Step::Blank);
            out.push(Alignment(prefix.clone()));
            prefix.pop();
            return;
        }
        if let Some((&first, rest)) = labels.split_first() {
            prefix.push(Step::Emit(first));
            go(frames_left, rest, prefix, out);
            prefix.pop();
        }
        if frames_left > 1 {
            prefix.push(Step::Blank);
            go(frames_left - 1, labels, prefix, out);
            prefix.pop();
        }
    }
    let mut out = Vec::new();
    if frames > 0 {
        go(frames, labels, &mut Vec::new(), &mut out);
    }
    out
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LossConfig {
    pub lambda_f: f64,
}

impl LossConfig {
    pub fn new(lambda_f: f64) -> Result<Self> {
        if !(lambda_f >= 0.0 && lambda_f.is_finite()) {
            return Err(Error::Config(format!(
                "lambda_f must be >= 0, got {lambda_f}"
            )));
        }
        Ok(Self { lambda_f })
    }
}

impl Default for LossConfig {
    fn default() -> Self {
        Self { lambda_f: 0.1 }
    }
}

fn check_labels<L: LanguageModel>(enc: &EncoderScores, lm: &L, labels: &[TokenId]) -> Result<()> {
    let size = enc.vocab_size().min(lm.surface_size());
    match labels.iter().find(|&&tok| tok >= size) {
        Some(&index) => Err(Error::TokenRange { index, size }),
        None => Ok(()),
    }
}

/// Emission log-probabilities for every `(t, u)` node, indexed `[t][u]`.
fn node_emissions<L: LanguageModel, B: BlankScorer>(
    enc: &EncoderScores,
    blank: &B,
    lm: &L,
    labels: &[TokenId],
) -> Result<Vec<Vec<Vec<f64>>>> {
    let mut lm_states = vec![lm.initial_state()];
    let mut blank_states = vec![blank.initial_state()];
    for &tok in labels {
        lm_states.push(lm.advance(lm_states.last().unwrap(), tok));
        blank_states.push(blank.advance(blank_states.last().unwrap(), tok));
    }
    (0..enc.frames())
        .map(|t| {
            (0..=labels.len())
                .map(|u| fnt_log_emissions(enc, t, blank, &blank_states[u], lm, &lm_states[u]))
                .collect()
        })
        .collect()
}

/// `log P(Y | x)`, summed over all alignments by the forward recursion.
pub fn forward_logprob<L: LanguageModel, B: BlankScorer>(
    enc: &EncoderScores,
    blank: &B,
    lm: &L,
    labels: &[TokenId],
) -> Result<f64> {
    let frames = enc.frames();
    if frames == 0 {
        return Err(Error::EmptyInput);
    }
    check_labels(enc, lm, labels)?;
    let emis = node_emissions(enc, blank, lm, labels)?;
    let u_len = labels.len();
    let mut alpha = vec![vec![f64::NEG_INFINITY; u_len + 1]; frames];
    for t in 0..frames {
        for u in 0..=u_len {
            let mut a = if t == 0 && u == 0 {
                0.0
            } else {
                f64::NEG_INFINITY
            };
            if t > 0 {
                a = log_add_exp(a, alpha[t - 1][u] + emis[t - 1][u][0]);
            }
            if u > 0 {
                a = log_add_exp(a, alpha[t][u - 1] + emis[t][u - 1][1 + labels[u - 1]]);
            }
            alpha[t][u] = a;
        }
    }
    Ok(alpha[frames - 1][u_len] + emis[frames - 1][u_len][0])
}

pub const ORACLE_MAX_STEPS: usize = 16;

/// The same quantity as [`forward_logprob`], by enumerating every alignment
/// and multiplying its stepwise probabilities.
pub fn brute_force_logprob<L: LanguageModel, B: BlankScorer>(
    enc: &EncoderScores,
    blank: &B,
    lm: &L,
    labels: &[TokenId],
) -> Result<f64> {
    let frames = enc.frames();
    if frames == 0 {
        return Err(Error::EmptyInput);
    }
    if frames + labels.len() > ORACLE_MAX_STEPS {
        return Err(Error::OracleScale(frames + labels.len()));
    }
    check_labels(enc, lm, labels)?;
    let mut terms = Vec::new();
    for alignment in alignments(frames, labels) {
        let mut lm_state = lm.initial_state();
        let mut blank_state = blank.initial_state();
        let mut t = 0;
        let mut logp = 0.0;
        for step in &alignment.0 {
            let dist = fnt_log_emissions(enc, t, blank, &blank_state, lm, &lm_state)?;
            match *step {
                Step::Blank => {
                    logp += dist[0];
                    t += 1;
                }
                Step::Emit(tok) => {
                    logp += dist[1 + tok];
                    lm_state = lm.advance(&lm_state, tok);
                    blank_state = blank.advance(&blank_state, tok);
                }
            }
        }
        terms.push(logp);
    }
    Ok(log_sum_exp(&terms))
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LossTerms {
    /// `-log P(Y | x)`.
    pub transducer: f64,
    /// `log P_LM(Y)`.
    pub lm_logprob: f64,
    /// `transducer - lambda_f * lm_logprob`.
    pub total: f64,
}

pub fn fnt_loss_terms<L: LanguageModel, B: BlankScorer>(
    enc: &EncoderScores,
    blank: &B,
    lm: &L,
    labels: &[TokenId],
    cfg: &LossConfig,
) -> Result<LossTerms> {
    let transducer = -forward_logprob(enc, blank, lm, labels)?;
    let lm_logprob = lm_sequence_logprob(lm, labels)?;
    Ok(LossTerms {
        transducer,
        lm_logprob,
        total: transducer - cfg.lambda_f * lm_logprob,
    })
}

/// Factorized transducer loss: transducer loss minus the weighted LM
/// log-likelihood of the labels.
pub fn fnt_loss<L: LanguageModel, B: BlankScorer>(
    enc: &EncoderScores,
    blank: &B,
    lm: &L,
    labels: &[TokenId],
    cfg: &LossConfig,
) -> Result<f64> {
    fnt_loss_terms(enc, blank, lm, labels, cfg).map(|t| t.total)
}
