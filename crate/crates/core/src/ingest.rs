//! Reading the annotated-document interchange format, first-phrase
//! self-linking, and redirect resolution for link targets.

use std::collections::{HashMap, HashSet};
use std::fmt;
use std::io::{self, BufRead, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::sentence::{
    AnnotatedSentence, DependencyEdge, DependencyGraph, TemporalExpression, Token, TokenIndex,
    WikiLink,
};
use crate::triple::{self, ExtractionRecord, RecordError};

/// Whether malformed input aborts the run or is skipped and counted.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Strictness {
    #[default]
    Strict,
    Lenient,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ReasonCode {
    InvalidJson,
    UnknownKind,
    MalformedSentence,
    TokenSequence,
    InvalidSpan,
    OverlappingSpans,
    InvalidLink,
    DanglingDependency,
    RootCount,
    DuplicateDependent,
    DependencyCycle,
    TimexOutOfRange,
    OrphanExtraction,
    InvalidExtraction,
    InvalidLabel,
    MalformedLine,
}

impl ReasonCode {
    pub fn message(self) -> &'static str {
        match self {
            ReasonCode::InvalidJson => "invalid json",
            ReasonCode::UnknownKind => "unknown kind",
            ReasonCode::MalformedSentence => "malformed sentence object",
            ReasonCode::TokenSequence => "token indices are not 1..n in order",
            ReasonCode::InvalidSpan => "token span is empty or inverted",
            ReasonCode::OverlappingSpans => "overlapping token spans",
            ReasonCode::InvalidLink => "link does not cover its token",
            ReasonCode::DanglingDependency => "dangling dependency endpoint",
            ReasonCode::RootCount => "dependency graph needs exactly one root edge",
            ReasonCode::DuplicateDependent => "token is a dependent of several edges",
            ReasonCode::DependencyCycle => "dependency cycle",
            ReasonCode::TimexOutOfRange => "temporal expression outside the sentence",
            ReasonCode::OrphanExtraction => "extraction does not follow its sentence",
            ReasonCode::InvalidExtraction => "invalid extraction",
            ReasonCode::InvalidLabel => "label must be 0 or 1",
            ReasonCode::MalformedLine => "malformed line",
        }
    }
}

impl fmt::Display for ReasonCode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.message())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("line {line}: {reason}{}", if detail.is_empty() { String::new() } else { format!(": {detail}") })]
pub struct IngestError {
    pub line: usize,
    pub reason: ReasonCode,
    pub detail: String,
}

impl IngestError {
    pub(crate) fn new(line: usize, reason: ReasonCode, detail: impl Into<String>) -> Self {
        IngestError {
            line,
            reason,
            detail: detail.into(),
        }
    }
}

#[derive(Debug, Error)]
pub enum ReadError {
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error(transparent)]
    Format(#[from] IngestError),
}

#[derive(Serialize, Deserialize)]
struct SentenceWire {
    article_id: u64,
    sentence_number: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    article_title: Option<String>,
    tokens: Vec<Token>,
    deps: Vec<DependencyEdge>,
    #[serde(default)]
    timex: Vec<TemporalExpression>,
}

#[derive(Serialize)]
struct SentenceOut<'a> {
    kind: &'static str,
    article_id: u64,
    sentence_number: u32,
    #[serde(skip_serializing_if = "Option::is_none")]
    article_title: Option<&'a str>,
    tokens: &'a [Token],
    deps: &'a [DependencyEdge],
    timex: &'a [TemporalExpression],
}

pub fn serialize_sentence(sentence: &AnnotatedSentence) -> String {
    let out = SentenceOut {
        kind: "sentence",
        article_id: sentence.article_id,
        sentence_number: sentence.sentence_number,
        article_title: sentence.article_title.as_deref(),
        tokens: &sentence.tokens,
        deps: sentence.depgraph.edges(),
        timex: &sentence.temporal_expressions,
    };
    serde_json::to_string(&out).expect("sentence serialization cannot fail")
}

/// Writes a sentence line followed by one line per record.
pub fn write_group<W: Write>(
    out: &mut W,
    sentence: &AnnotatedSentence,
    records: &[ExtractionRecord],
) -> io::Result<()> {
    writeln!(out, "{}", serialize_sentence(sentence))?;
    for r in records {
        writeln!(out, "{}", triple::serialize(r))?;
    }
    Ok(())
}

/// Checks the structural invariants of a sentence.
pub fn validate_sentence(s: &AnnotatedSentence) -> Result<(), (ReasonCode, String)> {
    let n = s.tokens.len() as TokenIndex;
    for (pos, tok) in s.tokens.iter().enumerate() {
        if tok.index as usize != pos + 1 {
            return Err((ReasonCode::TokenSequence, format!("token {} at position {}", tok.index, pos + 1)));
        }
        if tok.begin >= tok.end {
            return Err((ReasonCode::InvalidSpan, format!("token {}", tok.index)));
        }
        if let Some(link) = &tok.link {
            if link.begin >= link.end || link.begin > tok.begin || link.end < tok.end {
                return Err((ReasonCode::InvalidLink, format!("token {}", tok.index)));
            }
        }
    }
    let mut spans: Vec<(u32, u32)> = s.tokens.iter().map(|t| (t.begin, t.end)).collect();
    spans.sort_unstable();
    if spans.windows(2).any(|w| w[0].1 > w[1].0) {
        return Err((ReasonCode::OverlappingSpans, String::new()));
    }

    let mut roots = 0;
    let mut seen = HashSet::new();
    for e in s.depgraph.edges() {
        if e.dep == 0 || e.dep > n || e.gov > n {
            return Err((
                ReasonCode::DanglingDependency,
                format!("{}({}, {}) in a {n}-token sentence", e.label, e.gov, e.dep),
            ));
        }
        if e.gov == 0 {
            roots += 1;
        }
        if !seen.insert(e.dep) {
            return Err((ReasonCode::DuplicateDependent, format!("token {}", e.dep)));
        }
    }
    if !s.tokens.is_empty() && roots != 1 {
        return Err((ReasonCode::RootCount, format!("{roots} root edges")));
    }
    for e in s.depgraph.edges() {
        let mut cur = e.dep;
        let mut steps = 0;
        while let Some((gov, _)) = s.depgraph.governor(cur) {
            if gov == 0 {
                break;
            }
            cur = gov;
            steps += 1;
            if steps > n {
                return Err((ReasonCode::DependencyCycle, format!("through token {}", e.dep)));
            }
        }
    }
    for tx in &s.temporal_expressions {
        if tx.first_token == 0 || tx.first_token > tx.last_token || tx.last_token > n {
            return Err((
                ReasonCode::TimexOutOfRange,
                format!("[{}, {}]", tx.first_token, tx.last_token),
            ));
        }
    }
    Ok(())
}

/// A sentence with the extractions that follow it in the stream.
#[derive(Debug, Clone, PartialEq)]
pub struct SentenceGroup {
    pub sentence: AnnotatedSentence,
    pub records: Vec<ExtractionRecord>,
    /// Optional correctness label per record (training data only).
    pub labels: Vec<Option<bool>>,
}

enum LineItem {
    Sentence(AnnotatedSentence),
    Extraction(Box<ExtractionRecord>, Option<bool>),
}

fn parse_line(line: &str, line_no: usize) -> Result<LineItem, IngestError> {
    let mut value: serde_json::Value = serde_json::from_str(line)
        .map_err(|e| IngestError::new(line_no, ReasonCode::InvalidJson, e.to_string()))?;
    let kind = value
        .get("kind")
        .and_then(|k| k.as_str())
        .map(str::to_owned)
        .ok_or_else(|| IngestError::new(line_no, ReasonCode::UnknownKind, "missing kind"))?;
    match kind.as_str() {
        "sentence" => {
            let wire: SentenceWire = serde_json::from_value(value)
                .map_err(|e| IngestError::new(line_no, ReasonCode::MalformedSentence, e.to_string()))?;
            let sentence = AnnotatedSentence {
                article_id: wire.article_id,
                sentence_number: wire.sentence_number,
                article_title: wire.article_title,
                tokens: wire.tokens,
                depgraph: DependencyGraph::new(wire.deps),
                temporal_expressions: wire.timex,
            };
            validate_sentence(&sentence).map_err(|(r, d)| IngestError::new(line_no, r, d))?;
            Ok(LineItem::Sentence(sentence))
        }
        triple::TRIPLE_KIND | triple::EXTRACTION_KIND => {
            let label = match value.as_object_mut().and_then(|o| o.remove("label")) {
                None | Some(serde_json::Value::Null) => None,
                Some(v) => Some(match (v.as_u64(), v.as_bool()) {
                    (Some(0), _) | (_, Some(false)) => false,
                    (Some(1), _) | (_, Some(true)) => true,
                    _ => return Err(IngestError::new(line_no, ReasonCode::InvalidLabel, v.to_string())),
                }),
            };
            if let Some(o) = value.as_object_mut() {
                // audit fields of reject streams
                o.remove("reason");
                o.remove("stage");
            }
            let record = triple::from_value(value).map_err(|e| {
                let reason = match e {
                    RecordError::UnknownKind(_) => ReasonCode::UnknownKind,
                    _ => ReasonCode::InvalidExtraction,
                };
                IngestError::new(line_no, reason, e.to_string())
            })?;
            Ok(LineItem::Extraction(Box::new(record), label))
        }
        other => Err(IngestError::new(line_no, ReasonCode::UnknownKind, other)),
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct IngestStats {
    pub lines: usize,
    pub sentences: usize,
    pub extractions: usize,
    pub rejected: usize,
    #[serde(skip)]
    pub rejects: Vec<IngestError>,
}

/// Streaming reader yielding sentence groups in file order.
pub struct DocumentReader<R> {
    lines: io::Lines<R>,
    line_no: usize,
    strictness: Strictness,
    pending: Option<SentenceGroup>,
    finished: bool,
    stats: IngestStats,
}

impl<R: BufRead> DocumentReader<R> {
    pub fn new(reader: R, strictness: Strictness) -> Self {
        DocumentReader {
            lines: reader.lines(),
            line_no: 0,
            strictness,
            pending: None,
            finished: false,
            stats: IngestStats::default(),
        }
    }

    pub fn stats(&self) -> &IngestStats {
        &self.stats
    }

    pub fn into_stats(self) -> IngestStats {
        self.stats
    }

    fn handle_line(&mut self, line: &str) -> Result<Option<SentenceGroup>, IngestError> {
        match parse_line(line, self.line_no)? {
            LineItem::Sentence(sentence) => {
                self.stats.sentences += 1;
                let next = SentenceGroup {
                    sentence,
                    records: Vec::new(),
                    labels: Vec::new(),
                };
                Ok(self.pending.replace(next))
            }
            LineItem::Extraction(record, label) => {
                let group = match self.pending.as_mut() {
                    Some(g)
                        if g.sentence.article_id == record.article_id
                            && g.sentence.sentence_number == record.sentence_number =>
                    {
                        g
                    }
                    _ => {
                        return Err(IngestError::new(
                            self.line_no,
                            ReasonCode::OrphanExtraction,
                            format!("article {} sentence {}", record.article_id, record.sentence_number),
                        ))
                    }
                };
                record
                    .check_against(&group.sentence)
                    .map_err(|e| IngestError::new(self.line_no, ReasonCode::InvalidExtraction, e.to_string()))?;
                self.stats.extractions += 1;
                group.records.push(*record);
                group.labels.push(label);
                Ok(None)
            }
        }
    }
}

impl<R: BufRead> Iterator for DocumentReader<R> {
    type Item = Result<SentenceGroup, ReadError>;

    fn next(&mut self) -> Option<Self::Item> {
        if self.finished {
            return None;
        }
        loop {
            let line = match self.lines.next() {
                None => {
                    self.finished = true;
                    return self.pending.take().map(Ok);
                }
                Some(Err(e)) => {
                    self.finished = true;
                    return Some(Err(e.into()));
                }
                Some(Ok(line)) => line,
            };
            self.line_no += 1;
            if line.trim().is_empty() {
                continue;
            }
            self.stats.lines += 1;
            match self.handle_line(&line) {
                Ok(Some(done)) => return Some(Ok(done)),
                Ok(None) => {}
                Err(e) => match self.strictness {
                    Strictness::Strict => {
                        self.finished = true;
                        return Some(Err(e.into()));
                    }
                    Strictness::Lenient => {
                        log::warn!("skipping {e}");
                        self.stats.rejected += 1;
                        self.stats.rejects.push(e);
                    }
                },
            }
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParsedDocument {
    pub groups: Vec<SentenceGroup>,
    pub stats: IngestStats,
}

/// Reads a whole interchange stream.
pub fn parse_document<R: BufRead>(reader: R, strictness: Strictness) -> Result<ParsedDocument, ReadError> {
    let mut doc = DocumentReader::new(reader, strictness);
    let mut groups = Vec::new();
    for g in doc.by_ref() {
        groups.push(g?);
    }
    Ok(ParsedDocument {
        groups,
        stats: doc.into_stats(),
    })
}

pub fn parse_str(input: &str, strictness: Strictness) -> Result<ParsedDocument, ReadError> {
    parse_document(input.as_bytes(), strictness)
}

/// Location of a phrase linked by [`self_link_first_phrase`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SelfLink {
    pub sentence: usize,
    pub first: TokenIndex,
    pub last: TokenIndex,
}

/// Links the earliest unlinked token run whose space-joined surface equals
/// `page_title` (underscores read as spaces) to the article's own page.
pub fn self_link_first_phrase(sentences: &mut [AnnotatedSentence], page_title: &str) -> Option<SelfLink> {
    let title = normalize_title(page_title);
    if title.is_empty() {
        return None;
    }
    let (si, start, end) = sentences.iter().enumerate().find_map(|(si, s)| {
        (0..s.tokens.len()).find_map(|start| match_at(&s.tokens, start, &title).map(|end| (si, start, end)))
    })?;
    let tokens = &mut sentences[si].tokens;
    let anchor = tokens[start..=end]
        .iter()
        .map(|t| t.surface.as_str())
        .collect::<Vec<_>>()
        .join(" ");
    let link = WikiLink {
        begin: tokens[start].begin,
        end: tokens[end].end,
        anchor,
        target: page_title.to_string(),
    };
    for tok in &mut tokens[start..=end] {
        tok.link = Some(link.clone());
    }
    Some(SelfLink {
        sentence: si,
        first: tokens[start].index,
        last: tokens[end].index,
    })
}

fn match_at(tokens: &[Token], start: usize, title: &str) -> Option<usize> {
    let mut joined = String::new();
    for (end, tok) in tokens.iter().enumerate().skip(start) {
        if tok.link.is_some() {
            return None;
        }
        if end > start {
            joined.push(' ');
        }
        joined.push_str(&tok.surface);
        if joined == title {
            return Some(end);
        }
        if !title.starts_with(&joined) {
            return None;
        }
    }
    None
}

pub fn normalize_title(title: &str) -> String {
    title.replace('_', " ")
}

/// Longest redirect chain followed before giving up.
pub const MAX_REDIRECT_HOPS: usize = 16;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("redirect cycle starting at {0:?}")]
pub struct RedirectCycle(pub String);

/// Page-title redirect table.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct RedirectMap {
    map: HashMap<String, String>,
}

impl RedirectMap {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, source: impl Into<String>, target: impl Into<String>) {
        self.map.insert(source.into(), target.into());
    }

    pub fn len(&self) -> usize {
        self.map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }

    fn lookup(&self, title: &str) -> Option<&str> {
        self.map
            .get(title)
            .or_else(|| self.map.get(&title.replace(' ', "_")))
            .map(String::as_str)
    }

    /// Reads `source<TAB>target` lines.
    pub fn from_tsv<R: BufRead>(reader: R, strictness: Strictness) -> Result<(Self, Vec<IngestError>), ReadError> {
        let mut map = RedirectMap::new();
        let mut rejects = Vec::new();
        for (i, line) in reader.lines().enumerate() {
            let line = line?;
            if line.is_empty() {
                continue;
            }
            let mut cols = line.split('\t');
            match (cols.next(), cols.next(), cols.next()) {
                (Some(s), Some(t), None) if !s.is_empty() && !t.is_empty() => map.insert(s, t),
                _ => {
                    let e = IngestError::new(i + 1, ReasonCode::MalformedLine, "expected source<TAB>target");
                    match strictness {
                        Strictness::Strict => return Err(e.into()),
                        Strictness::Lenient => rejects.push(e),
                    }
                }
            }
        }
        Ok((map, rejects))
    }
}

/// Follows redirects from `target` to a fixed point.
pub fn canonicalize_link(target: &str, redirects: &RedirectMap) -> Result<String, RedirectCycle> {
    let mut cur = target;
    for _ in 0..MAX_REDIRECT_HOPS {
        match redirects.lookup(cur) {
            Some(next) => cur = next,
            None => return Ok(cur.to_string()),
        }
    }
    match redirects.lookup(cur) {
        Some(_) => Err(RedirectCycle(target.to_string())),
        None => Ok(cur.to_string()),
    }
}

/// Set of Wikipedia page titles, compared after underscore→space
/// normalization.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct TitleSet {
    titles: HashSet<String>,
}

impl TitleSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, title: &str) {
        self.titles.insert(normalize_title(title));
    }

    pub fn contains(&self, phrase: &str) -> bool {
        self.titles.contains(&normalize_title(phrase))
    }

    pub fn len(&self) -> usize {
        self.titles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.titles.is_empty()
    }

    pub fn from_reader<R: BufRead>(reader: R) -> io::Result<Self> {
        let mut set = TitleSet::new();
        for line in reader.lines() {
            let line = line?;
            let title = line.trim_end_matches('\r');
            if !title.is_empty() {
                set.insert(title);
            }
        }
        Ok(set)
    }
}

impl<'a> FromIterator<&'a str> for TitleSet {
    fn from_iter<I: IntoIterator<Item = &'a str>>(iter: I) -> Self {
        let mut set = TitleSet::new();
        for t in iter {
            set.insert(t);
        }
        set
    }
}
