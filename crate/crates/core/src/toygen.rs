//! Seeded toy instances: a vocabulary, a name list, a class bigram model and
//! a surface bigram model estimated from generated text, and a tagged test
//! corpus with matching encoder and blank scores.
//!
//! Names are an initial piece followed by continuation pieces and mostly
//! appear after a small set of trigger words. On a name token's frame the
//! encoder also gives a frequent common word a logit slightly below the true
//! one, so a decoder that relies on the surface model tends to pick the
//! common word.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io::ScoredUtterance;
use crate::lattice::{brute_force_logprob, forward_logprob};
use crate::scoring::{BlankTable, EncoderScores, LanguageModel, NgramContext, NgramLm};
use crate::vocab::{match_names, NameList, TaggedSentence, TokenId, TokenSeq, Vocabulary};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GenSpec {
    /// Number of surface tokens.
    pub vocab_size: usize,
    pub t_range: (usize, usize),
    pub u_range: (usize, usize),
    pub n_names: usize,
    pub name_len: (usize, usize),
    /// Multiplier on `@name` counts in the class model.
    pub class_bias: f64,
    pub utterances: usize,
    pub lm_sentences: usize,
    /// Weight of the original stream relative to the tagged stream in the
    /// class model's counts.
    pub mix_ratio: f64,
    /// Fraction of sentences that contain a name.
    pub name_rate: f64,
    /// Range of the gap between a name token's logit and its confuser's.
    pub confusion: (f64, f64),
    pub target_logit: f64,
    pub noise: f64,
    pub blank_low: f64,
    pub blank_high: f64,
    pub smoothing: f64,
}

impl Default for GenSpec {
    fn default() -> Self {
        Self {
            vocab_size: 64,
            t_range: (6, 14),
            u_range: (4, 10),
            n_names: 24,
            name_len: (1, 3),
            class_bias: 4.0,
            utterances: 240,
            lm_sentences: 2000,
            mix_ratio: 1.0,
            name_rate: 0.6,
            confusion: (0.0, 2.0),
            target_logit: 12.0,
            noise: 1.0,
            blank_low: -8.0,
            blank_high: 10.0,
            smoothing: 0.05,
        }
    }
}

struct Layout {
    common: usize,
    initials: usize,
    continuations: usize,
    triggers: usize,
}

impl GenSpec {
    fn layout(&self) -> Layout {
        let v = self.vocab_size;
        let initials = (v / 4).max(2);
        let continuations = (v / 6).max(1);
        let common = v.saturating_sub(initials + continuations);
        Layout {
            common,
            initials,
            continuations,
            triggers: (common / 8).max(1),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::GenSpec(m.to_string()));
        let ordered = |r: (usize, usize)| r.0 <= r.1;
        if !ordered(self.t_range) || !ordered(self.u_range) || !ordered(self.name_len) {
            return bad("ranges must have min <= max");
        }
        if self.t_range.0 == 0 || self.name_len.0 == 0 {
            return bad("frame count and name length must be at least 1");
        }
        if self.name_len.1 > self.u_range.1 {
            return Err(Error::GenSpec(format!(
                "names of up to {} tokens do not fit utterances of at most {} tokens",
                self.name_len.1, self.u_range.1
            )));
        }
        if self.t_range.1 < self.u_range.1 {
            return bad("t_range max must be at least u_range max (one token per frame)");
        }
        let layout = self.layout();
        if layout.common < 4 {
            return bad("vocab_size too small: need at least 4 common words");
        }
        if self.n_names == 0 && self.name_rate > 0.0 {
            return bad("name_rate > 0 needs at least one name");
        }
        if self.name_len.0 > 1 && layout.continuations == 0 {
            return bad("multi-token names need continuation pieces");
        }
        let mut possible = 0f64;
        for len in self.name_len.0..=self.name_len.1 {
            possible += layout.initials as f64 * (layout.continuations as f64).powi(len as i32 - 1);
        }
        if (self.n_names as f64) > possible {
            return Err(Error::GenSpec(format!(
                "only {possible} distinct names are possible, {} requested",
                self.n_names
            )));
        }
        let unit = |x: f64| (0.0..=1.0).contains(&x);
        if !unit(self.name_rate) || self.class_bias < 0.0 || self.mix_ratio < 0.0 {
            return bad("name_rate must be in [0, 1]; class_bias and mix_ratio >= 0");
        }
        if self.smoothing <= 0.0 || self.noise < 0.0 || self.confusion.0 > self.confusion.1 {
            return bad("smoothing must be > 0, noise >= 0, confusion ordered");
        }
        Ok(())
    }
}

const COMMON_WORDS: [&str; 40] = [
    "call", "with", "to", "the", "and", "a", "is", "i", "you", "it", "of", "in", "that", "we",
    "for", "on", "was", "have", "be", "this", "not", "are", "at", "but", "they", "so", "from",
    "what", "can", "my", "all", "one", "there", "will", "do", "if", "about", "just", "know", "up",
];
const ONSETS: [&str; 12] = ["K", "L", "M", "N", "R", "S", "T", "D", "B", "J", "V", "Z"];
const VOWELS: [&str; 5] = ["a", "o", "i", "e", "u"];
const CODAS: [&str; 8] = ["n", "r", "tt", "l", "s", "m", "nd", "k"];

fn common_word(i: usize) -> String {
    COMMON_WORDS
        .get(i)
        .map_or_else(|| format!("w{i}"), |w| w.to_string())
}

fn initial_piece(i: usize) -> String {
    let base = format!(
        "{}{}",
        ONSETS[i % ONSETS.len()],
        VOWELS[(i / ONSETS.len()) % VOWELS.len()]
    );
    match i / (ONSETS.len() * VOWELS.len()) {
        0 => base,
        k => format!("{base}{k}"),
    }
}

fn continuation_piece(i: usize) -> String {
    let base = format!(
        "_{}{}",
        VOWELS[i % VOWELS.len()],
        CODAS[(i / VOWELS.len()) % CODAS.len()]
    );
    match i / (VOWELS.len() * CODAS.len()) {
        0 => base,
        k => format!("{base}{k}"),
    }
}

/// Tagging result for one sentence.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TaggedPair {
    pub original: TaggedSentence,
    /// The sentence with every tagged span replaced by `class_id`.
    pub tagged: TokenSeq,
}

/// Exact-match tagging of name occurrences (longest match, left to right).
pub fn tag_corpus(corpus: &[TokenSeq], names: &NameList, class_id: TokenId) -> Vec<TaggedPair> {
    corpus
        .iter()
        .map(|seq| {
            let spans: Vec<(usize, usize)> = match_names(seq, names.names())
                .into_iter()
                .map(|(s, _)| s)
                .collect();
            let mut tagged = Vec::with_capacity(seq.len());
            let mut at = 0;
            for &(s, e) in &spans {
                tagged.extend_from_slice(&seq[at..s]);
                tagged.push(class_id);
                at = e;
            }
            tagged.extend_from_slice(&seq[at..]);
            TaggedPair {
                original: TaggedSentence::new(seq.clone(), spans)
                    .expect("matches are sorted and disjoint"),
                tagged,
            }
        })
        .collect()
}

#[derive(Clone, Debug)]
pub struct Instance {
    pub spec: GenSpec,
    pub seed: u64,
    pub vocab: Vocabulary,
    pub names: NameList,
    /// Bigram over the surface tokens plus `@name`.
    pub class_lm: NgramLm,
    /// Bigram over the surface tokens, trained on untagged text.
    pub word_lm: NgramLm,
    pub corpus: Vec<TaggedSentence>,
    pub scores: Vec<ScoredUtterance>,
    /// LM training text, tagged and original.
    pub lm_text: Vec<TaggedPair>,
    /// Token ids whose encoder logit sits just below a name token's.
    pub confusers: Vec<Option<TokenId>>,
}

struct Grammar<'a> {
    spec: &'a GenSpec,
    layout: Layout,
    names: &'a [TokenSeq],
    zipf: Vec<f64>,
}

impl Grammar<'_> {
    fn common<R: Rng>(&self, rng: &mut R) -> TokenId {
        let x: f64 = rng.gen::<f64>() * self.zipf.last().copied().unwrap_or(1.0);
        self.zipf
            .iter()
            .position(|&c| x < c)
            .unwrap_or(self.zipf.len() - 1)
    }

    fn sentence<R: Rng>(&self, rng: &mut R) -> TokenSeq {
        let (lo, hi) = self.spec.u_range;
        let len = rng.gen_range(lo..=hi);
        let mut seq: TokenSeq = (0..len).map(|_| self.common(rng)).collect();
        if self.names.is_empty() || !rng.gen_bool(self.spec.name_rate) {
            return seq;
        }
        let name = self.names.choose(rng).expect("non-empty");
        if name.len() > len {
            return seq;
        }
        let pos = rng.gen_range(0..=len - name.len());
        if pos > 0 {
            seq[pos - 1] = rng.gen_range(0..self.layout.triggers);
        }
        seq.splice(pos..pos + name.len(), name.iter().copied());
        seq
    }
}

fn bigram(
    inventory: usize,
    surface: usize,
    has_class: bool,
    counts: &[Vec<f64>],
    start: &[f64],
    k: f64,
) -> Result<NgramLm> {
    let row = |c: &[f64]| {
        let total: f64 = c.iter().sum::<f64>() + k * inventory as f64;
        c.iter().map(|x| (x + k) / total).collect::<Vec<f64>>()
    };
    let mut rows: Vec<(NgramContext, Vec<f64>)> = vec![(vec![None], row(start))];
    rows.extend(
        counts
            .iter()
            .enumerate()
            .map(|(i, c)| (vec![Some(i)], row(c))),
    );
    NgramLm::new(2, surface, has_class, rows)
}

fn count_into(
    seq: &[TokenId],
    counts: &mut [Vec<f64>],
    start: &mut [f64],
    w: f64,
    class: Option<(TokenId, f64)>,
) {
    let mut prev: Option<TokenId> = None;
    for &tok in seq {
        let mut weight = w;
        if let Some((id, bias)) = class {
            if tok == id {
                weight *= bias;
            }
        }
        match prev {
            None => start[tok] += weight,
            Some(p) => counts[p][tok] += weight,
        }
        prev = Some(tok);
    }
}

pub fn gen_instance(seed: u64, spec: &GenSpec) -> Result<Instance> {
    spec.validate()?;
    let layout = spec.layout();
    let mut tokens: Vec<String> = (0..layout.common).map(common_word).collect();
    tokens.extend((0..layout.initials).map(initial_piece));
    tokens.extend((0..layout.continuations).map(continuation_piece));
    let vocab = Vocabulary::new(tokens)?;
    let v = vocab.len();
    let initial_ids: Vec<TokenId> = (layout.common..layout.common + layout.initials).collect();
    let cont_ids: Vec<TokenId> = (layout.common + layout.initials..v).collect();

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut names: Vec<TokenSeq> = Vec::with_capacity(spec.n_names);
    while names.len() < spec.n_names {
        let len = rng.gen_range(spec.name_len.0..=spec.name_len.1);
        let mut name = vec![*initial_ids.choose(&mut rng).expect("initials")];
        for _ in 1..len {
            name.push(*cont_ids.choose(&mut rng).expect("continuations"));
        }
        if !names.contains(&name) {
            names.push(name);
        }
    }
    let name_list = NameList::new(names.clone())?;

    let mut cum = 0.0;
    let zipf: Vec<f64> = (0..layout.common)
        .map(|r| {
            cum += 1.0 / (r as f64 + 1.0);
            cum
        })
        .collect();
    let grammar = Grammar {
        spec,
        layout,
        names: &names,
        zipf,
    };

    // Each name piece is shadowed by one of the most frequent common words.
    let frequent = (grammar.layout.common / 2).max(1);
    let confusers: Vec<Option<TokenId>> = (0..v)
        .map(|t| (t >= grammar.layout.common).then(|| rng.gen_range(0..frequent)))
        .collect();

    let mut lm_rng = ChaCha8Rng::seed_from_u64(seed);
    lm_rng.set_stream(1);
    let lm_sentences: Vec<TokenSeq> = (0..spec.lm_sentences)
        .map(|_| grammar.sentence(&mut lm_rng))
        .collect();
    let class_id = vocab.class_id();
    let lm_text = tag_corpus(&lm_sentences, &name_list, class_id);

    let k = spec.smoothing;
    let mut word_counts = vec![vec![0.0; v]; v];
    let mut word_start = vec![0.0; v];
    let mut class_counts = vec![vec![0.0; v + 1]; v + 1];
    let mut class_start = vec![0.0; v + 1];
    for pair in &lm_text {
        count_into(
            &pair.original.tokens,
            &mut word_counts,
            &mut word_start,
            1.0,
            None,
        );
        count_into(
            &pair.tagged,
            &mut class_counts,
            &mut class_start,
            1.0,
            Some((class_id, spec.class_bias)),
        );
        count_into(
            &pair.original.tokens,
            &mut class_counts,
            &mut class_start,
            spec.mix_ratio,
            None,
        );
    }
    let word_lm = bigram(v, v, false, &word_counts, &word_start, k)?;
    let class_lm = bigram(v + 1, v, true, &class_counts, &class_start, k)?;

    let mut corpus = Vec::with_capacity(spec.utterances);
    let mut scores = Vec::with_capacity(spec.utterances);
    for i in 0..spec.utterances {
        let mut urng = ChaCha8Rng::seed_from_u64(seed);
        urng.set_stream(2 + i as u64);
        let seq = grammar.sentence(&mut urng);
        let pair = tag_corpus(std::slice::from_ref(&seq), &name_list, class_id).remove(0);
        scores.push(utterance_scores(spec, &seq, &confusers, v, &mut urng)?);
        corpus.push(pair.original);
    }

    Ok(Instance {
        spec: spec.clone(),
        seed,
        vocab,
        names: name_list,
        class_lm,
        word_lm,
        corpus,
        scores,
        lm_text,
        confusers,
    })
}

fn utterance_scores<R: Rng>(
    spec: &GenSpec,
    seq: &[TokenId],
    confusers: &[Option<TokenId>],
    v: usize,
    rng: &mut R,
) -> Result<ScoredUtterance> {
    let u = seq.len();
    let frames = rng.gen_range(spec.t_range.0.max(u).max(1)..=spec.t_range.1.max(u).max(1));
    let mut slots: Vec<usize> = rand::seq::index::sample(rng, frames, u).into_vec();
    slots.sort_unstable();

    let noise = Normal::new(0.0, spec.noise).map_err(|e| Error::GenSpec(e.to_string()))?;
    let jitter = Normal::new(0.0, spec.noise * 0.25).map_err(|e| Error::GenSpec(e.to_string()))?;
    let mut logits: Vec<Vec<f64>> = (0..frames)
        .map(|_| (0..v).map(|_| noise.sample(rng)).collect())
        .collect();
    for (&tok, &t) in seq.iter().zip(&slots) {
        let target = spec.target_logit + jitter.sample(rng);
        logits[t][tok] = target;
        if let Some(c) = confusers[tok] {
            logits[t][c] = target - rng.gen_range(spec.confusion.0..=spec.confusion.1);
        }
    }

    let buckets = spec.u_range.1 + 1;
    let mut due = 0;
    let blank_table: Vec<Vec<f64>> = (0..frames)
        .map(|t| {
            due += slots.iter().filter(|&&s| s == t).count();
            (0..buckets)
                .map(|b| {
                    let base = if b < due {
                        spec.blank_low
                    } else {
                        spec.blank_high
                    };
                    base + jitter.sample(rng)
                })
                .collect()
        })
        .collect();
    Ok(ScoredUtterance {
        enc: EncoderScores::new(logits)?,
        blank_table: Some(blank_table),
    })
}

/// A small random problem for the exact oracles: random encoder logits, a
/// random dense bigram, a random history-hashed blank table and a random
/// label sequence.
#[derive(Clone, Debug)]
pub struct TinyInstance {
    pub enc: EncoderScores,
    pub blank: BlankTable,
    pub lm: NgramLm,
    pub labels: TokenSeq,
}

pub fn tiny_instance<R: Rng>(
    rng: &mut R,
    frames: usize,
    labels: usize,
    v: usize,
    with_class: bool,
) -> Result<TinyInstance> {
    let spread = Normal::new(0.0, 1.5).map_err(|e| Error::GenSpec(e.to_string()))?;
    let enc = EncoderScores::new(
        (0..frames)
            .map(|_| (0..v).map(|_| spread.sample(rng)).collect())
            .collect(),
    )?;
    let blank = BlankTable::new(
        1,
        (0..frames)
            .map(|_| (0..3).map(|_| spread.sample(rng)).collect())
            .collect(),
    )?;
    let inventory = v + usize::from(with_class);
    let mut dist = || {
        let w: Vec<f64> = (0..inventory).map(|_| spread.sample(rng).exp()).collect();
        let total: f64 = w.iter().sum();
        w.into_iter().map(|x| x / total).collect::<Vec<f64>>()
    };
    let mut rows: Vec<(NgramContext, Vec<f64>)> = vec![(vec![None], dist())];
    for c in 0..inventory {
        rows.push((vec![Some(c)], dist()));
    }
    let lm = NgramLm::new(2, v, with_class, rows)?;
    let labels = (0..labels).map(|_| rng.gen_range(0..v)).collect();
    Ok(TinyInstance {
        enc,
        blank,
        lm,
        labels,
    })
}

/// One forward-versus-enumeration comparison.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct OracleTrial {
    pub seed: u64,
    pub frames: usize,
    pub labels: usize,
    pub vocab: usize,
    pub forward: f64,
    pub brute_force: f64,
}

impl OracleTrial {
    pub fn abs_diff(&self) -> f64 {
        if self.forward == self.brute_force {
            0.0
        } else {
            (self.forward - self.brute_force).abs()
        }
    }
}

fn trial_rng(seed: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(7);
    rng
}

/// Random tiny instance with `T <= max_t`, `U <= max_u`, `2 <= V <= max_v`.
pub fn oracle_trial(seed: u64, max_t: usize, max_u: usize, max_v: usize) -> Result<OracleTrial> {
    if max_t == 0 || max_v == 0 {
        return Err(Error::Config("max_t and max_v must be at least 1".into()));
    }
    let mut rng = trial_rng(seed);
    let frames = rng.gen_range(1..=max_t);
    let u = rng.gen_range(0..=max_u);
    let v = rng.gen_range(max_v.min(2)..=max_v);
    let inst = tiny_instance(&mut rng, frames, u, v, false)?;
    compare(seed, &inst.enc, &inst.blank, &inst.lm, &inst.labels)
}

/// Like [`oracle_trial`] but with a given language model; encoder scores,
/// blank table and labels are random.
pub fn oracle_trial_with<L: LanguageModel>(
    seed: u64,
    max_t: usize,
    max_u: usize,
    lm: &L,
) -> Result<OracleTrial> {
    if max_t == 0 {
        return Err(Error::Config("max_t must be at least 1".into()));
    }
    let mut rng = trial_rng(seed);
    let frames = rng.gen_range(1..=max_t);
    let u = rng.gen_range(0..=max_u);
    let inst = tiny_instance(&mut rng, frames, u, lm.surface_size(), false)?;
    compare(seed, &inst.enc, &inst.blank, lm, &inst.labels)
}

fn compare<L: LanguageModel>(
    seed: u64,
    enc: &EncoderScores,
    blank: &BlankTable,
    lm: &L,
    labels: &[TokenId],
) -> Result<OracleTrial> {
    Ok(OracleTrial {
        seed,
        frames: enc.frames(),
        labels: labels.len(),
        vocab: enc.vocab_size(),
        forward: forward_logprob(enc, blank, lm, labels)?,
        brute_force: brute_force_logprob(enc, blank, lm, labels)?,
    })
}
