//! Edge words: finite admissible paths in the graph of a system.
//!
//! Forward words `σ_1 … σ_n` index the cylinders `_1[e_1, …, e_n]`; past words
//! `σ_m … σ_0` feed the coding map. Both are written as edge ids joined by `.`.

use std::fmt;

use crate::error::{Error, Result};
use crate::model::{EdgeId, MarkovSystem, VertexId};

/// A nonempty sequence of edges with `i(e_{j+1}) = t(e_j)` throughout.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Word(Vec<EdgeId>);

impl Word {
    pub fn new(sys: &MarkovSystem, edges: Vec<EdgeId>) -> Result<Self> {
        if edges.is_empty() {
            return Err(Error::InadmissibleWord("empty word".into()));
        }
        if let Some(e) = edges.iter().find(|e| e.0 >= sys.edges().len()) {
            return Err(Error::InadmissibleWord(format!("edge index {} out of range", e.0)));
        }
        if let Some(pair) = edges
            .windows(2)
            .find(|p| sys.edge(p[0]).target != sys.edge(p[1]).source)
        {
            return Err(Error::InadmissibleWord(format!(
                "{} cannot follow {}",
                sys.edge(pair[1]).id,
                sys.edge(pair[0]).id
            )));
        }
        Ok(Word(edges))
    }

    /// Builds a word that the caller already knows to be admissible.
    pub(crate) fn from_admissible(edges: Vec<EdgeId>) -> Self {
        debug_assert!(!edges.is_empty());
        Word(edges)
    }

    /// Parses `e1.e2.e2`.
    pub fn parse(sys: &MarkovSystem, text: &str) -> Result<Self> {
        let edges = text
            .trim()
            .split('.')
            .map(|id| sys.edge_by_name(id.trim()).ok_or_else(|| Error::UnknownEdge(id.to_string())))
            .collect::<Result<Vec<_>>>()?;
        Word::new(sys, edges)
    }

    pub fn edges(&self) -> &[EdgeId] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn first_vertex(&self, sys: &MarkovSystem) -> VertexId {
        sys.edge(self.0[0]).source
    }

    pub fn last_vertex(&self, sys: &MarkovSystem) -> VertexId {
        sys.edge(*self.0.last().unwrap()).target
    }

    /// Sub-word `[start, start + len)`.
    pub fn slice(&self, start: usize, len: usize) -> Word {
        Word(self.0[start..start + len].to_vec())
    }

    /// `self` followed by `e`, if admissible.
    pub fn extended(&self, sys: &MarkovSystem, e: EdgeId) -> Option<Word> {
        (self.last_vertex(sys) == sys.edge(e).source).then(|| {
            let mut edges = self.0.clone();
            edges.push(e);
            Word(edges)
        })
    }

    pub fn display<'a>(&'a self, sys: &'a MarkovSystem) -> WordDisplay<'a> {
        WordDisplay { word: self, sys }
    }

    pub fn to_string_in(&self, sys: &MarkovSystem) -> String {
        self.display(sys).to_string()
    }
}

pub struct WordDisplay<'a> {
    word: &'a Word,
    sys: &'a MarkovSystem,
}

impl fmt::Display for WordDisplay<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, e) in self.word.0.iter().enumerate() {
            if i > 0 {
                f.write_str(".")?;
            }
            f.write_str(&self.sys.edge(*e).id)?;
        }
        Ok(())
    }
}

/// A finite past `σ_m … σ_0`, stored oldest first; `depth = |m|`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct PastWord(Word);

impl PastWord {
    pub fn new(word: Word) -> Self {
        PastWord(word)
    }

    pub fn parse(sys: &MarkovSystem, text: &str) -> Result<Self> {
        Word::parse(sys, text).map(PastWord)
    }

    pub fn word(&self) -> &Word {
        &self.0
    }

    /// `|m|` for the oldest coordinate `m`.
    pub fn depth(&self) -> usize {
        self.0.len() - 1
    }

    /// The edge at coordinate `j` for `m <= j <= 0`.
    pub fn at(&self, j: i64) -> EdgeId {
        let idx = self.depth() as i64 + j;
        self.0.edges()[idx as usize]
    }

    /// The vertex `t(σ_0) = i(σ_1)` in which the coding point lies.
    pub fn present_vertex(&self, sys: &MarkovSystem) -> VertexId {
        self.0.last_vertex(sys)
    }
}
