//! Token-level prefix trie over a name list.

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::vocab::{NameList, TokenId};

#[derive(Clone, Debug, Default, PartialEq, Eq)]
struct Node {
    children: BTreeMap<TokenId, usize>,
    name: Option<usize>,
}

/// Prefix trie keyed by surface token ids. Accepting nodes carry the index
/// of the name (first occurrence in the list) they complete.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct NameTrie {
    nodes: Vec<Node>,
    names: Vec<Vec<TokenId>>,
}

/// Position inside the trie after consuming `depth` tokens.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct TrieCursor {
    node: usize,
    depth: usize,
}

impl TrieCursor {
    pub fn depth(&self) -> usize {
        self.depth
    }
}

impl NameTrie {
    pub fn empty() -> Self {
        Self {
            nodes: vec![Node::default()],
            names: Vec::new(),
        }
    }

    pub fn build(names: &NameList) -> Result<Self> {
        Self::from_names(names.names())
    }

    pub fn from_names(names: &[Vec<TokenId>]) -> Result<Self> {
        let mut trie = Self::empty();
        for (i, name) in names.iter().enumerate() {
            if name.is_empty() {
                return Err(Error::EmptyName(i + 1));
            }
            let mut node = 0;
            for &tok in name {
                let next = trie.nodes.len();
                node = *trie.nodes[node].children.entry(tok).or_insert(next);
                if node == next {
                    trie.nodes.push(Node::default());
                }
            }
            if trie.nodes[node].name.is_none() {
                trie.nodes[node].name = Some(i);
            }
            trie.names.push(name.clone());
        }
        Ok(trie)
    }

    pub fn root(&self) -> TrieCursor {
        TrieCursor { node: 0, depth: 0 }
    }

    pub fn is_empty(&self) -> bool {
        self.nodes[0].children.is_empty()
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    /// The name list the trie was built from, duplicates included.
    pub fn names(&self) -> &[Vec<TokenId>] {
        &self.names
    }

    pub fn step(&self, cursor: TrieCursor, token: TokenId) -> Option<TrieCursor> {
        self.nodes[cursor.node]
            .children
            .get(&token)
            .map(|&node| TrieCursor {
                node,
                depth: cursor.depth + 1,
            })
    }

    /// Tokens that may follow `cursor`, in ascending id order.
    pub fn allowed_tokens(&self, cursor: TrieCursor) -> impl Iterator<Item = TokenId> + '_ {
        self.nodes[cursor.node].children.keys().copied()
    }

    pub fn has_children(&self, cursor: TrieCursor) -> bool {
        !self.nodes[cursor.node].children.is_empty()
    }

    /// `Some(name index)` when the consumed tokens spell a complete name.
    pub fn is_accepting(&self, cursor: TrieCursor) -> Option<usize> {
        self.nodes[cursor.node].name
    }

    /// Name index of `tokens` if it is exactly a listed name.
    pub fn lookup(&self, tokens: &[TokenId]) -> Option<usize> {
        let mut cursor = self.root();
        for &tok in tokens {
            cursor = self.step(cursor, tok)?;
        }
        self.is_accepting(cursor)
    }

    /// Every accepted token sequence, in lexicographic order.
    pub fn accepted(&self) -> Vec<Vec<TokenId>> {
        let mut out = Vec::new();
        let mut stack = vec![(0usize, Vec::new())];
        while let Some((node, prefix)) = stack.pop() {
            if self.nodes[node].name.is_some() {
                out.push(prefix.clone());
            }
            for (&tok, &child) in self.nodes[node].children.iter().rev() {
                let mut next = prefix.clone();
                next.push(tok);
                stack.push((child, next));
            }
        }
        out
    }
}
