//! Readers and writers for the on-disk formats: `model.json`, `scores.jsonl`,
//! `refs.jsonl` and decode output lines.
//!
//! Files that depend on token ids carry the vocabulary content hash
//! (`model.json` as a field, `scores.jsonl` in a header line) so that id skew
//! between files is caught at load time.

use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::decoder::{Hypothesis, Status};
use crate::error::{Error, Result};
use crate::eval::{Decoded, Reference};
use crate::scoring::{
    AnyBlank, AnyLm, BlankTable, EncoderScores, LanguageModel, NgramContext, NgramLm,
    RecurrentBlank, RnnLm, RnnWeights,
};
use crate::vocab::{TaggedSentence, Vocabulary, CLASS_TAG};

pub const BOS_TAG: &str = "<s>";

fn parse_err(path: &str, line: usize, msg: impl ToString) -> Error {
    Error::Parse {
        path: path.to_string(),
        line,
        msg: msg.to_string(),
    }
}

pub fn check_hash(expected: &str, found: Option<&str>) -> Result<()> {
    match found {
        Some(found) if found != expected => Err(Error::VocabHash {
            expected: expected.to_string(),
            found: found.to_string(),
        }),
        _ => Ok(()),
    }
}

/// How the blank logit is produced for a model.
#[derive(Clone, Debug, PartialEq)]
pub enum BlankSpec {
    /// Per-utterance `T x B` table from the scores file, bucketed by history.
    Table { context: usize },
    /// Linear head over the recurrent hidden state plus a per-frame bias
    /// taken from the first column of the utterance's blank table.
    Recurrent { head: Vec<f64>, bias: f64 },
}

/// A vocabulary predictor together with its blank predictor configuration.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelBundle {
    pub vocab_hash: Option<String>,
    pub lm: AnyLm,
    pub blank: BlankSpec,
}

#[derive(Serialize, Deserialize)]
struct RnnDims {
    hidden: usize,
    inventory: usize,
}

#[derive(Serialize, Deserialize)]
struct RnnSection {
    dims: RnnDims,
    w_in: Vec<Vec<f64>>,
    w_hh: Vec<Vec<f64>>,
    b_h: Vec<f64>,
    w_out: Vec<Vec<f64>>,
    b_out: Vec<f64>,
    blank_w: Vec<f64>,
    blank_b: f64,
}

impl ModelBundle {
    pub fn load(path: impl AsRef<Path>, vocab: &Vocabulary) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)?;
        Self::parse(&text, vocab).map_err(|e| match e {
            Error::Json(j) => parse_err(&path.display().to_string(), j.line(), j),
            other => other,
        })
    }

    pub fn parse(text: &str, vocab: &Vocabulary) -> Result<Self> {
        let v: Value = serde_json::from_str(text)?;
        let field = |k: &str| {
            v.get(k)
                .ok_or_else(|| Error::Model(format!("missing field {k:?}")))
        };
        let vocab_hash = v
            .get("vocab_hash")
            .and_then(Value::as_str)
            .map(str::to_string);
        check_hash(&vocab.content_hash(), vocab_hash.as_deref())?;
        let size = field("vocab_size")?
            .as_u64()
            .ok_or_else(|| Error::Model("vocab_size must be an integer".into()))?
            as usize;
        if size != vocab.len() {
            return Err(Error::Model(format!(
                "model vocab_size {size} does not match vocabulary of {}",
                vocab.len()
            )));
        }
        let has_class = v.get("class_lm").and_then(Value::as_bool).unwrap_or(false);
        match field("type")?.as_str() {
            Some("ngram") => {
                let ng = field("ngram")?;
                let order = ng
                    .get("order")
                    .and_then(Value::as_u64)
                    .ok_or_else(|| Error::Model("ngram.order missing".into()))?
                    as usize;
                let entries = ng
                    .get("entries")
                    .and_then(Value::as_array)
                    .ok_or_else(|| Error::Model("ngram.entries missing".into()))?;
                let lm = ngram_from_entries(order, has_class, entries, vocab)?;
                let context = v
                    .get("blank")
                    .and_then(|b| b.get("context"))
                    .and_then(Value::as_u64)
                    .unwrap_or(0) as usize;
                Ok(Self {
                    vocab_hash,
                    lm: AnyLm::Ngram(lm),
                    blank: BlankSpec::Table { context },
                })
            }
            Some("rnn") => {
                let sec: RnnSection = serde_json::from_value(field("rnn")?.clone())?;
                let inventory = size + usize::from(has_class);
                if sec.dims.inventory != inventory {
                    return Err(Error::Model(format!(
                        "rnn inventory {} does not match {inventory}",
                        sec.dims.inventory
                    )));
                }
                let lm = RnnLm::new(
                    size,
                    has_class,
                    RnnWeights {
                        hidden: sec.dims.hidden,
                        w_in: sec.w_in,
                        w_hh: sec.w_hh,
                        b_h: sec.b_h,
                        w_out: sec.w_out,
                        b_out: sec.b_out,
                    },
                )?;
                if sec.blank_w.len() != sec.dims.hidden {
                    return Err(Error::Model("blank_w does not match hidden size".into()));
                }
                Ok(Self {
                    vocab_hash,
                    lm: AnyLm::Rnn(lm),
                    blank: BlankSpec::Recurrent {
                        head: sec.blank_w,
                        bias: sec.blank_b,
                    },
                })
            }
            other => Err(Error::Model(format!("unknown model type {other:?}"))),
        }
    }

    pub fn to_json_string(&self, vocab: &Vocabulary) -> Result<String> {
        let mut obj = serde_json::Map::new();
        obj.insert("vocab_hash".into(), json!(vocab.content_hash()));
        obj.insert("vocab_size".into(), json!(self.lm.surface_size()));
        obj.insert("class_lm".into(), json!(self.lm.has_class()));
        match (&self.lm, &self.blank) {
            (AnyLm::Ngram(lm), BlankSpec::Table { context }) => {
                obj.insert("type".into(), json!("ngram"));
                let mut entries = Vec::new();
                for (ctx, probs) in lm.rows() {
                    let ctx_names = ctx
                        .iter()
                        .map(|c| inventory_name(*c, vocab))
                        .collect::<Result<Vec<_>>>()?;
                    for (tok, p) in probs.iter().enumerate() {
                        let mut e: Vec<Value> = ctx_names.iter().map(|s| json!(s)).collect();
                        e.push(json!(inventory_name(Some(tok), vocab)?));
                        e.push(json!(p));
                        entries.push(Value::Array(e));
                    }
                }
                obj.insert(
                    "ngram".into(),
                    json!({"order": lm.order(), "entries": entries}),
                );
                obj.insert("blank".into(), json!({ "context": context }));
            }
            (AnyLm::Rnn(lm), BlankSpec::Recurrent { head, bias }) => {
                obj.insert("type".into(), json!("rnn"));
                let w = lm.weights();
                let sec = RnnSection {
                    dims: RnnDims {
                        hidden: w.hidden,
                        inventory: lm.inventory_size(),
                    },
                    w_in: w.w_in,
                    w_hh: w.w_hh,
                    b_h: w.b_h,
                    w_out: w.w_out,
                    b_out: w.b_out,
                    blank_w: head.clone(),
                    blank_b: *bias,
                };
                obj.insert("rnn".into(), serde_json::to_value(sec)?);
            }
            _ => {
                return Err(Error::Model(
                    "blank predictor does not fit the model type".into(),
                ))
            }
        }
        let mut s = serde_json::to_string(&Value::Object(obj))?;
        s.push('\n');
        Ok(s)
    }

    /// The blank predictor for one utterance.
    pub fn blank_for<'a>(&'a self, utt: &ScoredUtterance) -> Result<AnyBlank<'a>> {
        let frames = utt.enc.frames();
        match &self.blank {
            BlankSpec::Table { context } => match &utt.blank_table {
                None => Ok(AnyBlank::Table(BlankTable::constant(frames, 0.0))),
                Some(table) => {
                    if table.len() != frames {
                        return Err(Error::Model(format!(
                            "blank table has {} frames, scores have {frames}",
                            table.len()
                        )));
                    }
                    Ok(AnyBlank::Table(BlankTable::new(*context, table.clone())?))
                }
            },
            BlankSpec::Recurrent { head, bias } => {
                let AnyLm::Rnn(net) = &self.lm else {
                    return Err(Error::Model("recurrent blank needs an rnn model".into()));
                };
                let frame_bias = match &utt.blank_table {
                    None => vec![0.0; frames],
                    Some(table) if table.len() == frames => table
                        .iter()
                        .map(|r| r.first().copied().unwrap_or(0.0))
                        .collect(),
                    Some(table) => {
                        return Err(Error::Model(format!(
                            "blank table has {} frames, scores have {frames}",
                            table.len()
                        )))
                    }
                };
                Ok(AnyBlank::Recurrent(RecurrentBlank::new(
                    net, head, *bias, frame_bias,
                )?))
            }
        }
    }
}

fn inventory_name(tok: Option<usize>, vocab: &Vocabulary) -> Result<String> {
    match tok {
        None => Ok(BOS_TAG.to_string()),
        Some(t) if t == vocab.class_id() => Ok(CLASS_TAG.to_string()),
        Some(t) => vocab.token(t).map(str::to_string),
    }
}

fn inventory_id(name: &str, vocab: &Vocabulary, has_class: bool) -> Result<Option<usize>> {
    match name {
        BOS_TAG => Ok(None),
        CLASS_TAG if has_class => Ok(Some(vocab.class_id())),
        _ => vocab
            .id(name)
            .map(Some)
            .ok_or_else(|| Error::Inventory(name.to_string())),
    }
}

fn ngram_from_entries(
    order: usize,
    has_class: bool,
    entries: &[Value],
    vocab: &Vocabulary,
) -> Result<NgramLm> {
    let inventory = vocab.len() + usize::from(has_class);
    let mut rows: Vec<(NgramContext, Vec<f64>)> = Vec::new();
    let mut index = std::collections::HashMap::new();
    for e in entries {
        let parts = e
            .as_array()
            .filter(|a| a.len() == order + 1)
            .ok_or_else(|| {
                Error::Model(format!("n-gram entry {e} must have {} items", order + 1))
            })?;
        let names: Vec<&str> = parts[..order]
            .iter()
            .map(|p| {
                p.as_str()
                    .ok_or_else(|| Error::Model(format!("bad token in {e}")))
            })
            .collect::<Result<_>>()?;
        let prob = parts[order]
            .as_f64()
            .ok_or_else(|| Error::Model(format!("bad probability in {e}")))?;
        let ctx = names[..order - 1]
            .iter()
            .map(|n| inventory_id(n, vocab, has_class))
            .collect::<Result<NgramContext>>()?;
        let tok = inventory_id(names[order - 1], vocab, has_class)?
            .ok_or_else(|| Error::Model(format!("{BOS_TAG} cannot be predicted")))?;
        let row = *index.entry(ctx.clone()).or_insert_with(|| {
            rows.push((ctx, vec![0.0; inventory]));
            rows.len() - 1
        });
        rows[row].1[tok] = prob;
    }
    NgramLm::new(order, vocab.len(), has_class, rows)
}

/// One utterance of precomputed scores.
#[derive(Clone, Debug, PartialEq)]
pub struct ScoredUtterance {
    pub enc: EncoderScores,
    pub blank_table: Option<Vec<Vec<f64>>>,
}

#[derive(Serialize, Deserialize)]
struct ScoresLine {
    #[serde(rename = "T")]
    frames: usize,
    logits: Vec<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    blank_table: Option<Vec<Vec<f64>>>,
}

#[derive(Serialize, Deserialize)]
struct ScoresHeader {
    vocab_hash: String,
    vocab_size: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ScoresFile {
    pub vocab_hash: Option<String>,
    pub utterances: Vec<ScoredUtterance>,
}

impl ScoresFile {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        Self::parse_named(&std::fs::read_to_string(path)?, &path.display().to_string())
    }

    pub fn parse(text: &str) -> Result<Self> {
        Self::parse_named(text, "<scores>")
    }

    fn parse_named(text: &str, name: &str) -> Result<Self> {
        let mut vocab_hash = None;
        let mut utterances = Vec::new();
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let v: Value = serde_json::from_str(line).map_err(|e| parse_err(name, i + 1, e))?;
            if i == 0 && v.get("logits").is_none() {
                let h: ScoresHeader =
                    serde_json::from_value(v).map_err(|e| parse_err(name, i + 1, e))?;
                vocab_hash = Some(h.vocab_hash);
                continue;
            }
            let s: ScoresLine = serde_json::from_value(v).map_err(|e| parse_err(name, i + 1, e))?;
            if s.frames != s.logits.len() {
                return Err(parse_err(
                    name,
                    i + 1,
                    format!("T = {} but {} logit rows", s.frames, s.logits.len()),
                ));
            }
            let enc = EncoderScores::new(s.logits).map_err(|e| parse_err(name, i + 1, e))?;
            utterances.push(ScoredUtterance {
                enc,
                blank_table: s.blank_table,
            });
        }
        Ok(Self {
            vocab_hash,
            utterances,
        })
    }

    /// Checks the header hash and the logit width against `vocab`.
    pub fn check(&self, vocab: &Vocabulary) -> Result<()> {
        check_hash(&vocab.content_hash(), self.vocab_hash.as_deref())?;
        match self
            .utterances
            .iter()
            .find(|u| u.enc.vocab_size() != vocab.len())
        {
            Some(u) => Err(Error::Model(format!(
                "scores have width {}, vocabulary has {} tokens",
                u.enc.vocab_size(),
                vocab.len()
            ))),
            None => Ok(()),
        }
    }

    pub fn to_file_string(vocab: &Vocabulary, utterances: &[ScoredUtterance]) -> Result<String> {
        let mut out = serde_json::to_string(&ScoresHeader {
            vocab_hash: vocab.content_hash(),
            vocab_size: vocab.len(),
        })?;
        out.push('\n');
        for u in utterances {
            out.push_str(&serde_json::to_string(&ScoresLine {
                frames: u.enc.frames(),
                logits: u.enc.rows(),
                blank_table: u.blank_table.clone(),
            })?);
            out.push('\n');
        }
        Ok(out)
    }
}

fn read_jsonl<T: for<'de> Deserialize<'de>>(text: &str, name: &str) -> Result<Vec<T>> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| serde_json::from_str(l).map_err(|e| parse_err(name, i + 1, e)))
        .collect()
}

pub fn parse_refs(text: &str) -> Result<Vec<Reference>> {
    read_jsonl(text, "<refs>")
}

pub fn load_refs(path: impl AsRef<Path>) -> Result<Vec<Reference>> {
    let path = path.as_ref();
    read_jsonl(&std::fs::read_to_string(path)?, &path.display().to_string())
}

pub fn refs_to_string(vocab: &Vocabulary, corpus: &[TaggedSentence]) -> Result<String> {
    let mut out = String::new();
    for s in corpus {
        out.push_str(&serde_json::to_string(&Reference {
            tokens: vocab.strings(&s.tokens)?,
            entity_spans: s.entity_spans.clone(),
        })?);
        out.push('\n');
    }
    Ok(out)
}

/// One n-best entry of a decode run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DecodeLine {
    pub utt: usize,
    pub rank: usize,
    pub tokens: Vec<String>,
    pub statuses: Vec<Status>,
    pub score: f64,
    pub name_spans: Vec<(usize, usize, usize)>,
}

impl DecodeLine {
    pub fn new(utt: usize, rank: usize, hyp: &Hypothesis, vocab: &Vocabulary) -> Result<Self> {
        Ok(Self {
            utt,
            rank,
            tokens: vocab.strings(&hyp.tokens)?,
            statuses: hyp.statuses.clone(),
            score: hyp.score,
            name_spans: hyp
                .name_spans
                .iter()
                .map(|s| (s.start, s.end, s.name))
                .collect(),
        })
    }
}

/// Reads decode output and keeps the best entry of each utterance, in
/// utterance order. Utterances with no entry decode to nothing.
pub fn load_hyps(path: impl AsRef<Path>) -> Result<Vec<Decoded>> {
    let path = path.as_ref();
    parse_hyps_named(&std::fs::read_to_string(path)?, &path.display().to_string())
}

pub fn parse_hyps(text: &str) -> Result<Vec<Decoded>> {
    parse_hyps_named(text, "<hyps>")
}

fn parse_hyps_named(text: &str, name: &str) -> Result<Vec<Decoded>> {
    let lines: Vec<DecodeLine> = read_jsonl(text, name)?;
    let count = lines.iter().map(|l| l.utt + 1).max().unwrap_or(0);
    let mut best: Vec<Option<&DecodeLine>> = vec![None; count];
    for l in &lines {
        let slot = &mut best[l.utt];
        if slot.is_none_or(|b| l.rank < b.rank) {
            *slot = Some(l);
        }
    }
    Ok(best
        .into_iter()
        .map(|l| match l {
            Some(l) => Decoded {
                tokens: l.tokens.clone(),
                name_spans: Some(l.name_spans.iter().map(|&(s, e, _)| (s, e)).collect()),
            },
            None => Decoded {
                tokens: Vec::new(),
                name_spans: Some(Vec::new()),
            },
        })
        .collect())
}
