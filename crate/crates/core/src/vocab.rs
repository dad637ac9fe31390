//! Token inventories, token sequences, tagged references and name lists.
//!
//! Surface tokens use a continuation-marker convention: a token that begins
//! with `_` attaches to the preceding token without a space, every other token
//! starts a new word. `["Lo", "_retta", "Ly", "_n", "_n"]` therefore reads as
//! `"Lo_retta Ly_n_n"`.

use std::collections::HashMap;
use std::ops::Range;
use std::path::Path;

use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

pub type TokenId = usize;

/// A sequence of surface token ids.
pub type TokenSeq = Vec<TokenId>;

pub const CONTINUATION: char = '_';
pub const CLASS_TAG: &str = "@name";
pub const BLANK_TAG: &str = "<blank>";

pub fn is_continuation(token: &str) -> bool {
    token.starts_with(CONTINUATION)
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Vocabulary {
    tokens: Vec<String>,
    index: HashMap<String, TokenId>,
}

impl Vocabulary {
    pub fn new<S: Into<String>>(tokens: impl IntoIterator<Item = S>) -> Result<Self> {
        let tokens: Vec<String> = tokens.into_iter().map(Into::into).collect();
        if tokens.is_empty() {
            return Err(Error::Vocabulary("vocabulary is empty".into()));
        }
        let mut index = HashMap::with_capacity(tokens.len());
        for (id, tok) in tokens.iter().enumerate() {
            if tok.is_empty() || tok.chars().any(char::is_whitespace) {
                return Err(Error::Vocabulary(format!(
                    "token {id} ({tok:?}) is empty or contains whitespace"
                )));
            }
            if tok == CLASS_TAG || tok == BLANK_TAG {
                return Err(Error::Vocabulary(format!("{tok} is a reserved symbol")));
            }
            if index.insert(tok.clone(), id).is_some() {
                return Err(Error::Vocabulary(format!("duplicate token {tok:?}")));
            }
        }
        Ok(Self { tokens, index })
    }

    /// Parses `vocab.txt`: one token per line, line number is the token id.
    pub fn parse(text: &str) -> Result<Self> {
        Self::new(text.lines().map(str::trim_end).filter(|l| !l.is_empty()))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    pub fn to_file_string(&self) -> String {
        let mut out = self.tokens.join("\n");
        out.push('\n');
        out
    }

    /// Number of surface tokens (V), excluding blank and the class tag.
    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    /// Index of `@name`, the first id past the surface range.
    pub fn class_id(&self) -> TokenId {
        self.tokens.len()
    }

    pub fn blank_id(&self) -> TokenId {
        self.tokens.len() + 1
    }

    pub fn id(&self, token: &str) -> Option<TokenId> {
        self.index.get(token).copied()
    }

    pub fn token(&self, id: TokenId) -> Result<&str> {
        self.tokens
            .get(id)
            .map(String::as_str)
            .ok_or(Error::TokenRange {
                index: id,
                size: self.tokens.len(),
            })
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    /// Short content hash used to detect id skew between files.
    pub fn content_hash(&self) -> String {
        let mut hasher = Sha256::new();
        for tok in &self.tokens {
            hasher.update(tok.as_bytes());
            hasher.update(b"\n");
        }
        hex(&hasher.finalize()[..8])
    }

    pub fn check_seq(&self, seq: &[TokenId]) -> Result<()> {
        match seq.iter().find(|&&id| id >= self.len()) {
            Some(&index) => Err(Error::TokenRange {
                index,
                size: self.len(),
            }),
            None => Ok(()),
        }
    }

    /// Greedy longest-match tokenization.
    ///
    /// Each whitespace-separated word is cut into segments at every `_`
    /// (the marker stays with the following segment). Starting from the
    /// first segment, the longest run of consecutive segments that forms a
    /// vocabulary token is taken. Matches never end inside a segment, so
    /// `surface` always reproduces the word.
    pub fn tokenize(&self, text: &str) -> Result<TokenSeq> {
        let mut out = Vec::new();
        for word in text.split_whitespace() {
            self.tokenize_word(word, &mut out)?;
        }
        Ok(out)
    }

    fn tokenize_word(&self, word: &str, out: &mut TokenSeq) -> Result<()> {
        if word.starts_with(CONTINUATION) {
            return Err(Error::Tokenize {
                word: word.to_string(),
                offending: CONTINUATION,
            });
        }
        let mut bounds: Vec<usize> = word
            .char_indices()
            .filter(|&(i, c)| i > 0 && c == CONTINUATION)
            .map(|(i, _)| i)
            .collect();
        bounds.insert(0, 0);
        bounds.push(word.len());

        let mut at = 0;
        while at + 1 < bounds.len() {
            let start = bounds[at];
            let matched = (at + 1..bounds.len())
                .rev()
                .find_map(|end| self.id(&word[start..bounds[end]]).map(|id| (end, id)));
            match matched {
                Some((end, id)) => {
                    out.push(id);
                    at = end;
                }
                None => {
                    let segment = &word[start..bounds[at + 1]];
                    return Err(Error::Tokenize {
                        word: word.to_string(),
                        offending: self.offending_char(segment),
                    });
                }
            }
        }
        Ok(())
    }

    // First character of `segment` that no token continues with.
    fn offending_char(&self, segment: &str) -> char {
        let mut last = segment.chars().next().unwrap_or(CONTINUATION);
        for (i, c) in segment.char_indices() {
            let prefix = &segment[..i + c.len_utf8()];
            if !self.tokens.iter().any(|t| t.starts_with(prefix)) {
                return c;
            }
            last = c;
        }
        last
    }

    /// Inverse of [`Vocabulary::tokenize`].
    pub fn surface(&self, seq: &[TokenId]) -> Result<String> {
        let toks = seq
            .iter()
            .map(|&id| self.token(id))
            .collect::<Result<Vec<_>>>()?;
        Ok(join_surface(&toks))
    }

    pub fn strings(&self, seq: &[TokenId]) -> Result<Vec<String>> {
        seq.iter()
            .map(|&id| self.token(id).map(str::to_string))
            .collect()
    }

    pub fn ids<S: AsRef<str>>(&self, toks: &[S]) -> Result<TokenSeq> {
        toks.iter()
            .map(|t| {
                self.id(t.as_ref())
                    .ok_or_else(|| Error::Vocabulary(format!("unknown token {:?}", t.as_ref())))
            })
            .collect()
    }
}

pub fn join_surface<S: AsRef<str>>(toks: &[S]) -> String {
    let mut out = String::new();
    for (i, tok) in toks.iter().enumerate() {
        let tok = tok.as_ref();
        if i > 0 && !is_continuation(tok) {
            out.push(' ');
        }
        out.push_str(tok);
    }
    out
}

/// A detokenized word and the token range it came from.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Word {
    pub text: String,
    pub tokens: Range<usize>,
}

/// Groups tokens into words using the continuation marker.
pub fn group_words<S: AsRef<str>>(toks: &[S]) -> Vec<Word> {
    let mut words: Vec<Word> = Vec::new();
    for (i, tok) in toks.iter().enumerate() {
        let tok = tok.as_ref();
        match words.last_mut() {
            Some(w) if is_continuation(tok) => {
                w.text.push_str(tok);
                w.tokens.end = i + 1;
            }
            _ => words.push(Word {
                text: tok.to_string(),
                tokens: i..i + 1,
            }),
        }
    }
    words
}

/// Half-open token range `[start, end)`.
pub type Span = (usize, usize);

/// Exact-match name occurrences, scanning left to right and preferring the
/// longest name at each position. Returns `(span, name index)` pairs; the
/// index is the first listed name with those tokens.
pub fn match_names<T: PartialEq>(tokens: &[T], names: &[Vec<T>]) -> Vec<(Span, usize)> {
    let mut out = Vec::new();
    let mut i = 0;
    while i < tokens.len() {
        let best = names
            .iter()
            .enumerate()
            .filter(|(_, n)| !n.is_empty() && tokens[i..].starts_with(n))
            .fold(None::<(usize, usize)>, |best, (k, n)| match best {
                Some((_, len)) if len >= n.len() => best,
                _ => Some((k, n.len())),
            });
        match best {
            Some((k, len)) => {
                out.push(((i, i + len), k));
                i += len;
            }
            None => i += 1,
        }
    }
    out
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TaggedSentence {
    pub tokens: TokenSeq,
    pub entity_spans: Vec<Span>,
}

impl TaggedSentence {
    pub fn new(tokens: TokenSeq, entity_spans: Vec<Span>) -> Result<Self> {
        let len = tokens.len();
        let mut prev_end = 0;
        for &(start, end) in &entity_spans {
            if start >= end || end > len || start < prev_end {
                return Err(Error::Span { start, end, len });
            }
            prev_end = end;
        }
        Ok(Self {
            tokens,
            entity_spans,
        })
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct NameList {
    names: Vec<TokenSeq>,
}

impl NameList {
    pub fn new(names: Vec<TokenSeq>) -> Result<Self> {
        if let Some(i) = names.iter().position(Vec::is_empty) {
            return Err(Error::EmptyName(i + 1));
        }
        Ok(Self { names })
    }

    /// Parses `names.txt`, one entity per line, tokenized with `vocab`.
    pub fn parse(text: &str, vocab: &Vocabulary) -> Result<Self> {
        let mut names = Vec::new();
        for (i, line) in text.lines().enumerate() {
            let seq = vocab.tokenize(line)?;
            if seq.is_empty() {
                return Err(Error::EmptyName(i + 1));
            }
            names.push(seq);
        }
        Ok(Self { names })
    }

    pub fn load(path: impl AsRef<Path>, vocab: &Vocabulary) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?, vocab)
    }

    pub fn to_file_string(&self, vocab: &Vocabulary) -> Result<String> {
        let mut out = String::new();
        for name in &self.names {
            out.push_str(&vocab.surface(name)?);
            out.push('\n');
        }
        Ok(out)
    }

    pub fn names(&self) -> &[TokenSeq] {
        &self.names
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }
}

pub(crate) fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

pub fn content_hash(bytes: &[u8]) -> String {
    hex(&Sha256::digest(bytes))
}
