//! Linguistically annotated sentences as produced by the NLP front end.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use serde::{Deserialize, Serialize};

/// 1-based token position within a sentence. `0` is reserved for the
/// artificial root of the dependency graph.
pub type TokenIndex = u32;

/// A hyperlink to a Wikipedia page, attached to every token of its anchor.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct WikiLink {
    pub begin: u32,
    pub end: u32,
    pub anchor: String,
    pub target: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Token {
    pub index: TokenIndex,
    pub surface: String,
    pub lemma: String,
    pub pos: String,
    pub ner: String,
    pub begin: u32,
    pub end: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub link: Option<WikiLink>,
}

impl Token {
    pub fn is_location(&self) -> bool {
        self.ner == "LOCATION"
    }

    pub fn is_typed(&self) -> bool {
        self.ner != "O"
    }

    /// Penn tag prefix test, e.g. `pos_is("NN")` matches NN, NNS, NNP, NNPS.
    pub fn pos_is(&self, prefix: &str) -> bool {
        self.pos.starts_with(prefix)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct DependencyEdge {
    pub gov: TokenIndex,
    pub dep: TokenIndex,
    pub label: String,
}

/// Typed dependency graph over the tokens of one sentence.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct DependencyGraph {
    edges: Vec<DependencyEdge>,
    children: HashMap<TokenIndex, Vec<usize>>,
    parent: HashMap<TokenIndex, usize>,
}

impl DependencyGraph {
    pub fn new(mut edges: Vec<DependencyEdge>) -> Self {
        edges.sort();
        edges.dedup();
        let mut children: HashMap<TokenIndex, Vec<usize>> = HashMap::new();
        let mut parent = HashMap::new();
        for (i, e) in edges.iter().enumerate() {
            children.entry(e.gov).or_default().push(i);
            parent.entry(e.dep).or_insert(i);
        }
        for list in children.values_mut() {
            list.sort_by_key(|&i| edges[i].dep);
        }
        DependencyGraph {
            edges,
            children,
            parent,
        }
    }

    pub fn edges(&self) -> &[DependencyEdge] {
        &self.edges
    }

    /// Children of `gov` as `(dependent, label)`, in token order.
    pub fn children(&self, gov: TokenIndex) -> impl Iterator<Item = (TokenIndex, &str)> + '_ {
        self.children
            .get(&gov)
            .into_iter()
            .flatten()
            .map(move |&i| (self.edges[i].dep, self.edges[i].label.as_str()))
    }

    /// Governor and label of the incoming edge of `dep`, if any.
    pub fn governor(&self, dep: TokenIndex) -> Option<(TokenIndex, &str)> {
        self.parent
            .get(&dep)
            .map(|&i| (self.edges[i].gov, self.edges[i].label.as_str()))
    }

    pub fn is_attached(&self, token: TokenIndex) -> bool {
        self.parent.contains_key(&token)
    }

    /// Number of edges between `token` and the root; `None` when detached.
    pub fn depth(&self, token: TokenIndex) -> Option<usize> {
        let mut depth = 0;
        let mut cur = token;
        while cur != 0 {
            let (gov, _) = self.governor(cur)?;
            cur = gov;
            depth += 1;
            if depth > self.edges.len() {
                return None;
            }
        }
        Some(depth)
    }

    /// `token` and every descendant reachable without crossing an edge whose
    /// label is in `excluded`.
    pub fn subtree(&self, token: TokenIndex, excluded: &[&str]) -> BTreeSet<TokenIndex> {
        let mut out = BTreeSet::new();
        let mut stack = vec![token];
        while let Some(t) = stack.pop() {
            if !out.insert(t) {
                continue;
            }
            for (child, label) in self.children(t) {
                if !excluded.contains(&label) {
                    stack.push(child);
                }
            }
        }
        out
    }

    pub fn has_edge_between(&self, a: TokenIndex, b: TokenIndex, label: &str) -> bool {
        self.edges
            .iter()
            .any(|e| e.label == label && ((e.gov == a && e.dep == b) || (e.gov == b && e.dep == a)))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum TimexType {
    Date,
    Time,
    Duration,
    Set,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TemporalExpression {
    pub first_token: TokenIndex,
    pub last_token: TokenIndex,
    #[serde(rename = "type")]
    pub timex_type: TimexType,
    pub value: String,
    pub xml: String,
}

impl TemporalExpression {
    pub fn contains(&self, token: TokenIndex) -> bool {
        (self.first_token..=self.last_token).contains(&token)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AnnotatedSentence {
    pub article_id: u64,
    pub sentence_number: u32,
    /// Page title of the owning article, when the front end supplies it.
    pub article_title: Option<String>,
    pub tokens: Vec<Token>,
    pub depgraph: DependencyGraph,
    pub temporal_expressions: Vec<TemporalExpression>,
}

impl AnnotatedSentence {
    /// Token lookup; tokens are stored densely so that `tokens[i - 1].index == i`.
    pub fn token(&self, index: TokenIndex) -> Option<&Token> {
        let i = (index as usize).checked_sub(1)?;
        self.tokens.get(i).filter(|t| t.index == index)
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn surface(&self, index: TokenIndex) -> &str {
        self.token(index).map(|t| t.surface.as_str()).unwrap_or("")
    }

    /// Index of the temporal expression covering `token`.
    pub fn timex_at(&self, token: TokenIndex) -> Option<usize> {
        self.temporal_expressions.iter().position(|t| t.contains(token))
    }

    /// Token → temporal expression position, for tokens inside any span.
    pub fn temporal_index(&self) -> BTreeMap<TokenIndex, usize> {
        let mut map = BTreeMap::new();
        for (i, tx) in self.temporal_expressions.iter().enumerate() {
            for t in tx.first_token..=tx.last_token {
                map.entry(t).or_insert(i);
            }
        }
        map
    }

    pub fn location_index(&self) -> BTreeSet<TokenIndex> {
        self.tokens
            .iter()
            .filter(|t| t.is_location())
            .map(|t| t.index)
            .collect()
    }

    /// The maximal run of consecutive tokens sharing the non-`O` NER label of
    /// `token`, or `None` for untyped tokens.
    pub fn ner_run(&self, token: TokenIndex) -> Option<(TokenIndex, TokenIndex)> {
        let tok = self.token(token)?;
        if !tok.is_typed() {
            return None;
        }
        let same = |i: TokenIndex| self.token(i).is_some_and(|t| t.ner == tok.ner);
        let mut first = token;
        while first > 1 && same(first - 1) {
            first -= 1;
        }
        let mut last = token;
        while same(last + 1) {
            last += 1;
        }
        Some((first, last))
    }

    /// All maximal typed runs in the sentence.
    pub fn ner_runs(&self) -> Vec<(TokenIndex, TokenIndex)> {
        let mut runs = Vec::new();
        let mut i = 1;
        while (i as usize) <= self.tokens.len() {
            match self.ner_run(i) {
                Some((first, last)) => {
                    runs.push((first, last));
                    i = last + 1;
                }
                None => i += 1,
            }
        }
        runs
    }

    /// Distinct links in the sentence together with the tokens carrying them.
    pub fn link_anchors(&self) -> Vec<(&WikiLink, BTreeSet<TokenIndex>)> {
        let mut out: Vec<(&WikiLink, BTreeSet<TokenIndex>)> = Vec::new();
        for tok in &self.tokens {
            if let Some(link) = &tok.link {
                match out.iter_mut().find(|(l, _)| *l == link) {
                    Some((_, set)) => {
                        set.insert(tok.index);
                    }
                    None => out.push((link, BTreeSet::from([tok.index]))),
                }
            }
        }
        out
    }
}
