//! The extraction record: n-ary constituents, the minimized triple, its
//! semantic annotations and provenance, plus the line format used for both
//! input extractions and output triples.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

use crate::sentence::{AnnotatedSentence, TimexType, TokenIndex};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    Subject,
    Relation,
    Object,
    Argument,
}

/// One position of a constituent: a sentence token or a quantity placeholder
/// such as `Q_1` whose tokens live in the record's quantity table.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Slot {
    Token(TokenIndex),
    Quantity(String),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Constituent {
    pub role: Role,
    pub slots: Vec<Slot>,
}

impl Constituent {
    pub fn new(role: Role, slots: Vec<Slot>) -> Self {
        Constituent { role, slots }
    }

    pub fn empty(role: Role) -> Self {
        Constituent::new(role, Vec::new())
    }

    pub fn from_tokens(role: Role, tokens: impl IntoIterator<Item = TokenIndex>) -> Self {
        Constituent::new(role, tokens.into_iter().map(Slot::Token).collect())
    }

    pub fn is_empty(&self) -> bool {
        self.slots.is_empty()
    }

    pub fn len(&self) -> usize {
        self.slots.len()
    }

    pub fn tokens(&self) -> impl Iterator<Item = TokenIndex> + '_ {
        self.slots.iter().filter_map(|s| match s {
            Slot::Token(t) => Some(*t),
            Slot::Quantity(_) => None,
        })
    }

    pub fn markers(&self) -> impl Iterator<Item = &str> + '_ {
        self.slots.iter().filter_map(|s| match s {
            Slot::Quantity(q) => Some(q.as_str()),
            Slot::Token(_) => None,
        })
    }

    pub fn token_set(&self) -> BTreeSet<TokenIndex> {
        self.tokens().collect()
    }

    pub fn contains(&self, token: TokenIndex) -> bool {
        self.slots.contains(&Slot::Token(token))
    }

    pub fn remove_tokens(&mut self, tokens: &BTreeSet<TokenIndex>) {
        self.slots
            .retain(|s| !matches!(s, Slot::Token(t) if tokens.contains(t)));
    }

    /// Inserts `token` before the first token slot with a larger index, so
    /// that token slots stay strictly increasing.
    pub fn insert_token(&mut self, token: TokenIndex) {
        if self.contains(token) {
            return;
        }
        let pos = self
            .slots
            .iter()
            .position(|s| matches!(s, Slot::Token(t) if *t > token))
            .unwrap_or(self.slots.len());
        self.slots.insert(pos, Slot::Token(token));
    }

    fn tokens_increasing(&self) -> bool {
        let toks: Vec<_> = self.tokens().collect();
        toks.windows(2).all(|w| w[0] < w[1])
    }
}

impl Serialize for Constituent {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        self.slots.serialize(serializer)
    }
}

fn constituent_with<'de, D: Deserializer<'de>>(de: D, role: Role) -> Result<Constituent, D::Error> {
    Ok(Constituent::new(role, Vec::<Slot>::deserialize(de)?))
}

fn de_subject<'de, D: Deserializer<'de>>(de: D) -> Result<Constituent, D::Error> {
    constituent_with(de, Role::Subject)
}

fn de_relation<'de, D: Deserializer<'de>>(de: D) -> Result<Constituent, D::Error> {
    constituent_with(de, Role::Relation)
}

fn de_object<'de, D: Deserializer<'de>>(de: D) -> Result<Constituent, D::Error> {
    constituent_with(de, Role::Object)
}

fn de_arguments<'de, D: Deserializer<'de>>(de: D) -> Result<Vec<Constituent>, D::Error> {
    Ok(Vec::<Vec<Slot>>::deserialize(de)?
        .into_iter()
        .map(|slots| Constituent::new(Role::Argument, slots))
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ClauseType {
    Sv,
    Sva,
    Svc,
    Svo,
    Svoo,
    Svoa,
    Svoc,
}

impl ClauseType {
    pub const ALL: [ClauseType; 7] = [
        ClauseType::Sv,
        ClauseType::Sva,
        ClauseType::Svc,
        ClauseType::Svo,
        ClauseType::Svoo,
        ClauseType::Svoa,
        ClauseType::Svoc,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ClauseType::Sv => "SV",
            ClauseType::Sva => "SVA",
            ClauseType::Svc => "SVC",
            ClauseType::Svo => "SVO",
            ClauseType::Svoo => "SVOO",
            ClauseType::Svoa => "SVOA",
            ClauseType::Svoc => "SVOC",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        ClauseType::ALL.into_iter().find(|c| c.as_str() == s)
    }
}

/// ClausIE clause type or the tag of an implicit extraction pattern.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ExtractionType {
    Clause(ClauseType),
    Implicit(String),
}

impl ExtractionType {
    pub fn is_sv(&self) -> bool {
        matches!(self, ExtractionType::Clause(ClauseType::Sv))
    }

    pub fn as_str(&self) -> &str {
        match self {
            ExtractionType::Clause(c) => c.as_str(),
            ExtractionType::Implicit(tag) => tag,
        }
    }
}

impl From<ClauseType> for ExtractionType {
    fn from(c: ClauseType) -> Self {
        ExtractionType::Clause(c)
    }
}

impl fmt::Display for ExtractionType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl Serialize for ExtractionType {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(self.as_str())
    }
}

impl<'de> Deserialize<'de> for ExtractionType {
    fn deserialize<D: Deserializer<'de>>(de: D) -> Result<Self, D::Error> {
        let s = String::deserialize(de)?;
        if s.is_empty() {
            return Err(serde::de::Error::custom("empty extraction type"));
        }
        Ok(match ClauseType::parse(&s) {
            Some(c) => ExtractionType::Clause(c),
            None => ExtractionType::Implicit(s),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NaryExtraction {
    #[serde(deserialize_with = "de_subject")]
    pub subject: Constituent,
    #[serde(deserialize_with = "de_relation")]
    pub relation: Constituent,
    #[serde(deserialize_with = "de_arguments")]
    pub arguments: Vec<Constituent>,
    pub clause_type: ExtractionType,
}

impl NaryExtraction {
    /// Number of constituents, counting subject and relation.
    pub fn arity(&self) -> usize {
        2 + self.arguments.len()
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Polarity {
    #[default]
    Positive,
    Negative,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Modality {
    #[default]
    Certainty,
    Possibility,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Attribution {
    pub phrase: Vec<TokenIndex>,
    pub predicate: String,
    #[serde(default)]
    pub polarity: Polarity,
    #[serde(default)]
    pub modality: Modality,
    #[serde(default)]
    pub spate: Vec<SpaTeAnnotation>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Quantity {
    pub marker: String,
    pub tokens: Vec<TokenIndex>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SpaTeKind {
    TemporalTriple,
    TemporalArgument,
    SpatialTriple,
    SpatialArgument,
    TemporalReference,
    SpatialReference,
}

impl SpaTeKind {
    pub fn is_temporal(self) -> bool {
        matches!(
            self,
            SpaTeKind::TemporalTriple | SpaTeKind::TemporalArgument | SpaTeKind::TemporalReference
        )
    }

    pub fn is_spatial(self) -> bool {
        !self.is_temporal()
    }

    pub fn is_argument(self) -> bool {
        matches!(self, SpaTeKind::TemporalArgument | SpaTeKind::SpatialArgument)
    }

    pub fn is_triple(self) -> bool {
        matches!(self, SpaTeKind::TemporalTriple | SpaTeKind::SpatialTriple)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Target {
    WholeTriple,
    Subject,
    Object,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TimexPayload {
    #[serde(rename = "type")]
    pub timex_type: TimexType,
    pub value: String,
    pub xml: String,
}

/// A spatial or temporal qualifier on a whole triple, on one argument, or
/// marking an argument as a spatial/temporal reference.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SpaTeAnnotation {
    pub kind: SpaTeKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub predicate: Option<String>,
    pub core_words: Vec<TokenIndex>,
    #[serde(default)]
    pub pre_modifiers: Vec<TokenIndex>,
    #[serde(default)]
    pub post_modifiers: Vec<TokenIndex>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub timex: Option<TimexPayload>,
    pub target: Target,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub head_word: Option<TokenIndex>,
}

impl SpaTeAnnotation {
    /// Core words plus modifiers.
    pub fn tokens(&self) -> BTreeSet<TokenIndex> {
        self.core_words
            .iter()
            .chain(&self.pre_modifiers)
            .chain(&self.post_modifiers)
            .copied()
            .collect()
    }

    fn check(&self) -> Result<(), RecordError> {
        if self.core_words.is_empty() {
            return Err(RecordError::Annotation("empty core words"));
        }
        if self.kind.is_temporal() != self.timex.is_some() {
            return Err(RecordError::Annotation(
                "temporal annotations need a timex payload, spatial ones none",
            ));
        }
        if self.kind.is_argument() != self.head_word.is_some() {
            return Err(RecordError::Annotation(
                "only argument annotations carry a modified head word",
            ));
        }
        let target_ok = match self.kind {
            SpaTeKind::TemporalTriple | SpaTeKind::SpatialTriple => self.target == Target::WholeTriple,
            _ => self.target != Target::WholeTriple,
        };
        if !target_ok {
            return Err(RecordError::Annotation("annotation target does not match its kind"));
        }
        Ok(())
    }
}

/// Signals computed by the upstream extractor that cannot be recovered from
/// the sentence alone. All default to `false` when absent.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(default)]
pub struct ExtractorFlags {
    pub in_minie_d: bool,
    pub in_minie_a: bool,
    pub dropped_all_optional_adverbials: bool,
    pub dropped_all_optional_prepositions: bool,
    pub processed_conjunction_subject: bool,
    pub processed_conjunction_relation: bool,
    pub processed_conjunction_object: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExtractionRecord {
    pub article_id: u64,
    pub sentence_number: u32,
    pub extraction_index: u32,
    pub nary: NaryExtraction,
    #[serde(deserialize_with = "de_subject")]
    pub subject: Constituent,
    #[serde(deserialize_with = "de_relation")]
    pub relation: Constituent,
    #[serde(deserialize_with = "de_object")]
    pub object: Constituent,
    #[serde(default)]
    pub polarity: Polarity,
    #[serde(default)]
    pub negative_words: Vec<TokenIndex>,
    #[serde(default)]
    pub modality: Modality,
    #[serde(default)]
    pub modality_words: Vec<TokenIndex>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub attribution: Option<Attribution>,
    #[serde(default)]
    pub quantities: Vec<Quantity>,
    #[serde(default)]
    pub dropped_words: Vec<TokenIndex>,
    pub extraction_type: ExtractionType,
    #[serde(default)]
    pub spate: Vec<SpaTeAnnotation>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub confidence: Option<f64>,
    #[serde(default)]
    pub canonical_links: BTreeMap<String, String>,
    #[serde(default)]
    pub flags: ExtractorFlags,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum RecordError {
    #[error("invalid json: {0}")]
    Json(String),
    #[error("unknown kind {0:?}")]
    UnknownKind(String),
    #[error("missing kind field")]
    MissingKind,
    #[error("empty {0}")]
    EmptyConstituent(&'static str),
    #[error("object is empty but extraction type is {0}")]
    EmptyObject(String),
    #[error("token indices of {0} are not strictly increasing")]
    TokenOrder(&'static str),
    #[error("quantity marker {0:?} has no entry in the quantity table")]
    MissingQuantity(String),
    #[error("confidence {0} outside [0, 1]")]
    ConfidenceRange(f64),
    #[error("SV clause with arguments")]
    SvWithArguments,
    #[error("empty attribution phrase")]
    EmptyAttribution,
    #[error("invalid annotation: {0}")]
    Annotation(&'static str),
    #[error("token {0} does not exist in the owning sentence")]
    UnknownToken(TokenIndex),
}

/// Record kinds accepted by [`deserialize`]; "extraction" is the input
/// spelling of the same schema.
pub const TRIPLE_KIND: &str = "triple";
pub const EXTRACTION_KIND: &str = "extraction";

#[derive(Serialize)]
struct Envelope<'a> {
    kind: &'a str,
    #[serde(flatten)]
    record: &'a ExtractionRecord,
}

impl ExtractionRecord {
    /// Provenance key used for output ordering.
    pub fn key(&self) -> (u64, u32, u32) {
        (self.article_id, self.sentence_number, self.extraction_index)
    }

    pub fn constituents(&self) -> [&Constituent; 3] {
        [&self.subject, &self.relation, &self.object]
    }

    /// Sentence tokens of subject, relation and object.
    pub fn triple_tokens(&self) -> BTreeSet<TokenIndex> {
        self.constituents()
            .into_iter()
            .flat_map(|c| c.tokens())
            .collect()
    }

    pub fn quantity(&self, marker: &str) -> Option<&Quantity> {
        self.quantities.iter().find(|q| q.marker == marker)
    }

    pub fn has_temporal(&self) -> bool {
        self.spate.iter().any(|a| a.kind.is_temporal())
    }

    pub fn has_spatial(&self) -> bool {
        self.spate.iter().any(|a| a.kind.is_spatial())
    }

    /// Checks the type invariants of the record in isolation.
    pub fn validate(&self) -> Result<(), RecordError> {
        if self.subject.is_empty() {
            return Err(RecordError::EmptyConstituent("subject"));
        }
        if self.relation.is_empty() {
            return Err(RecordError::EmptyConstituent("relation"));
        }
        if self.object.is_empty() && !self.extraction_type.is_sv() {
            return Err(RecordError::EmptyObject(self.extraction_type.to_string()));
        }
        if self.nary.clause_type.is_sv() && !self.nary.arguments.is_empty() {
            return Err(RecordError::SvWithArguments);
        }
        let named = [
            (&self.subject, "subject"),
            (&self.relation, "relation"),
            (&self.object, "object"),
            (&self.nary.subject, "n-ary subject"),
            (&self.nary.relation, "n-ary relation"),
        ];
        let args = self.nary.arguments.iter().map(|a| (a, "n-ary argument"));
        for (c, name) in named.into_iter().chain(args) {
            if !c.tokens_increasing() {
                return Err(RecordError::TokenOrder(name));
            }
            for m in c.markers() {
                if self.quantity(m).is_none() {
                    return Err(RecordError::MissingQuantity(m.to_string()));
                }
            }
        }
        if let Some(c) = self.confidence {
            if !(0.0..=1.0).contains(&c) {
                return Err(RecordError::ConfidenceRange(c));
            }
        }
        if let Some(attr) = &self.attribution {
            if attr.phrase.is_empty() {
                return Err(RecordError::EmptyAttribution);
            }
            for a in &attr.spate {
                a.check()?;
            }
        }
        for a in &self.spate {
            a.check()?;
        }
        Ok(())
    }

    /// Every token index mentioned anywhere in the record.
    pub fn referenced_tokens(&self) -> BTreeSet<TokenIndex> {
        let mut out = self.triple_tokens();
        out.extend(self.nary.subject.tokens());
        out.extend(self.nary.relation.tokens());
        out.extend(self.nary.arguments.iter().flat_map(|a| a.tokens()));
        out.extend(&self.negative_words);
        out.extend(&self.modality_words);
        out.extend(&self.dropped_words);
        out.extend(self.quantities.iter().flat_map(|q| q.tokens.iter().copied()));
        let spate = self.spate.iter().chain(self.attribution.iter().flat_map(|a| &a.spate));
        for a in spate {
            out.extend(a.tokens());
            out.extend(a.head_word);
        }
        if let Some(attr) = &self.attribution {
            out.extend(&attr.phrase);
        }
        out
    }

    /// Checks that every referenced token exists in `sentence`.
    pub fn check_against(&self, sentence: &AnnotatedSentence) -> Result<(), RecordError> {
        match self
            .referenced_tokens()
            .into_iter()
            .find(|&t| sentence.token(t).is_none())
        {
            Some(t) => Err(RecordError::UnknownToken(t)),
            None => Ok(()),
        }
    }
}

/// Serializes a record as one output line (without the trailing newline).
/// Key order is fixed, so the output is byte-deterministic.
pub fn serialize(record: &ExtractionRecord) -> String {
    serialize_as(record, TRIPLE_KIND)
}

pub(crate) fn serialize_as(record: &ExtractionRecord, kind: &str) -> String {
    serde_json::to_string(&Envelope { kind, record }).expect("record serialization cannot fail")
}

/// Parses one "triple" (or "extraction") line and validates the record.
pub fn deserialize(line: &str) -> Result<ExtractionRecord, RecordError> {
    let value: serde_json::Value =
        serde_json::from_str(line).map_err(|e| RecordError::Json(e.to_string()))?;
    from_value(value)
}

pub(crate) fn from_value(mut value: serde_json::Value) -> Result<ExtractionRecord, RecordError> {
    let obj = value
        .as_object_mut()
        .ok_or_else(|| RecordError::Json("expected a JSON object".into()))?;
    match obj.remove("kind") {
        Some(serde_json::Value::String(k)) if k == TRIPLE_KIND || k == EXTRACTION_KIND => {}
        Some(serde_json::Value::String(k)) => return Err(RecordError::UnknownKind(k)),
        Some(other) => return Err(RecordError::UnknownKind(other.to_string())),
        None => return Err(RecordError::MissingKind),
    }
    let record: ExtractionRecord =
        serde_json::from_value(value).map_err(|e| RecordError::Json(e.to_string()))?;
    record.validate()?;
    Ok(record)
}

/// Space-joined lemmas of the relation tokens, quantity markers excluded.
pub fn lemmatized_relation(record: &ExtractionRecord, sentence: &AnnotatedSentence) -> String {
    let lemmas: Vec<&str> = record
        .relation
        .tokens()
        .filter_map(|t| sentence.token(t))
        .map(|t| t.lemma.as_str())
        .collect();
    lemmas.join(" ")
}

/// Space-joined surface form of a constituent; quantity markers are rendered
/// verbatim.
pub fn surface(constituent: &Constituent, sentence: &AnnotatedSentence) -> String {
    let words: Vec<&str> = constituent
        .slots
        .iter()
        .map(|s| match s {
            Slot::Token(t) => sentence.surface(*t),
            Slot::Quantity(q) => q.as_str(),
        })
        .collect();
    words.join(" ")
}
