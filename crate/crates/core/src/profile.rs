//! Corpus statistics over a stream of triples.
//!
//! All running state is integral (lengths are counted exactly, confidences
//! are accumulated in fixed point), so merging shard accumulators yields the
//! same report as a single pass, bit for bit, in any order.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::io::BufRead;

use serde::{Deserialize, Serialize};

use crate::ingest::{IngestError, ReadError, ReasonCode};
use crate::postprocess::dominant_ner;
use crate::sentence::AnnotatedSentence;
use crate::triple::{lemmatized_relation, ExtractionRecord, Modality, Polarity};

/// Fixed-point resolution for confidence moments.
const CONFIDENCE_SCALE: f64 = 1e9;

/// Label used for the object type of triples without an object.
pub const NO_OBJECT: &str = "NONE";

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
struct Moments {
    n: u64,
    sum: u128,
    sum_sq: u128,
}

impl Moments {
    fn add(&mut self, v: u64) {
        self.n += 1;
        self.sum += v as u128;
        self.sum_sq += (v as u128) * (v as u128);
    }

    fn merge(&mut self, o: &Moments) {
        self.n += o.n;
        self.sum += o.sum;
        self.sum_sq += o.sum_sq;
    }

    fn finish(&self, unit: f64) -> MeanStd {
        if self.n == 0 {
            return MeanStd::default();
        }
        let n = self.n as f64;
        // n² · variance as an exact integer
        let spread = (self.n as u128) * self.sum_sq - self.sum * self.sum;
        MeanStd {
            mean: self.sum as f64 / n / unit,
            std: (spread as f64).sqrt() / n / unit,
            defined: true,
        }
    }
}

/// Mean and population standard deviation. `defined` is false when no
/// values were observed; mean and std are then 0.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct MeanStd {
    pub mean: f64,
    pub std: f64,
    pub defined: bool,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct CountFraction {
    pub count: u64,
    pub fraction: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SemanticCounts {
    pub any_semantic_annotation: CountFraction,
    pub negative_polarity: CountFraction,
    pub possibility_modality: CountFraction,
    pub quantities: CountFraction,
    pub attribution: CountFraction,
    pub time: CountFraction,
    pub space: CountFraction,
    pub space_or_time: CountFraction,
    pub space_and_time: CountFraction,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Lengths {
    pub triple: MeanStd,
    pub subject: MeanStd,
    pub relation: MeanStd,
    pub object: MeanStd,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PairTyping {
    pub both: u64,
    pub one: u64,
    pub none: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RelationCount {
    pub relation: String,
    pub count: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TypePairRelations {
    pub subject_type: String,
    pub object_type: String,
    pub total: u64,
    pub top: Vec<RelationCount>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusReport {
    pub total_triples: u64,
    pub semantic: SemanticCounts,
    pub lengths: Lengths,
    pub confidence: MeanStd,
    pub scored_triples: u64,
    pub ner_histogram: BTreeMap<String, u64>,
    pub argument_typing: PairTyping,
    pub relations_by_type_pair: Vec<TypePairRelations>,
}

/// Exact relation counts keyed by (lemmatized relation, subject type,
/// object type).
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct RelationFrequencies {
    pub counts: BTreeMap<(String, String, String), u64>,
}

impl RelationFrequencies {
    pub fn add(&mut self, record: &ExtractionRecord, sentence: &AnnotatedSentence) {
        let (st, ot) = type_pair(record, sentence);
        *self
            .counts
            .entry((lemmatized_relation(record, sentence), st, ot))
            .or_insert(0) += 1;
    }

    pub fn merge(&mut self, other: &RelationFrequencies) {
        for (k, v) in &other.counts {
            *self.counts.entry(k.clone()).or_insert(0) += v;
        }
    }

    /// Counts summed over type pairs.
    pub fn by_relation(&self) -> BTreeMap<String, u64> {
        let mut out = BTreeMap::new();
        for ((rel, _, _), n) in &self.counts {
            *out.entry(rel.clone()).or_insert(0) += n;
        }
        out
    }

    /// Reads `relation<TAB>subject_type<TAB>object_type<TAB>count` lines.
    pub fn from_tsv<R: BufRead>(reader: R) -> Result<Self, ReadError> {
        let mut out = RelationFrequencies::default();
        for (i, line) in reader.lines().enumerate() {
            let line = line?;
            if line.is_empty() {
                continue;
            }
            let cols: Vec<&str> = line.trim_end_matches('\r').split('\t').collect();
            let n = match cols.as_slice() {
                [_, _, _, n] => n.parse::<u64>().ok(),
                _ => None,
            };
            let Some(n) = n else {
                return Err(IngestError::new(i + 1, ReasonCode::MalformedLine, "expected relation, two types and a count").into());
            };
            *out.counts
                .entry((cols[0].to_string(), cols[1].to_string(), cols[2].to_string()))
                .or_insert(0) += n;
        }
        Ok(out)
    }

    pub fn to_tsv(&self) -> String {
        let mut out = String::new();
        for ((rel, st, ot), n) in &self.counts {
            let _ = writeln!(out, "{rel}\t{st}\t{ot}\t{n}");
        }
        out
    }
}

pub fn relation_frequencies<'a>(
    items: impl IntoIterator<Item = (&'a ExtractionRecord, &'a AnnotatedSentence)>,
) -> RelationFrequencies {
    let mut f = RelationFrequencies::default();
    for (r, s) in items {
        f.add(r, s);
    }
    f
}

/// Dominant NER of subject and object; triples without an object get
/// [`NO_OBJECT`].
pub fn type_pair(record: &ExtractionRecord, sentence: &AnnotatedSentence) -> (String, String) {
    let st = dominant_ner(&record.subject, sentence).unwrap_or("O").to_string();
    let ot = if record.object.is_empty() {
        NO_OBJECT.to_string()
    } else {
        dominant_ner(&record.object, sentence).unwrap_or("O").to_string()
    };
    (st, ot)
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ProfileAccumulator {
    total: u64,
    any: u64,
    negative: u64,
    possibility: u64,
    quantities: u64,
    attribution: u64,
    time: u64,
    space: u64,
    space_or_time: u64,
    space_and_time: u64,
    triple_len: Moments,
    subject_len: Moments,
    relation_len: Moments,
    object_len: Moments,
    confidence: Moments,
    ner: BTreeMap<String, u64>,
    typing: (u64, u64, u64),
    relations: RelationFrequencies,
}

impl ProfileAccumulator {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, record: &ExtractionRecord, sentence: &AnnotatedSentence) {
        self.total += 1;
        let negative = record.polarity == Polarity::Negative;
        let possibility = record.modality == Modality::Possibility;
        let quantities = !record.quantities.is_empty();
        let attribution = record.attribution.is_some();
        let time = record.has_temporal();
        let space = record.has_spatial();
        self.negative += u64::from(negative);
        self.possibility += u64::from(possibility);
        self.quantities += u64::from(quantities);
        self.attribution += u64::from(attribution);
        self.time += u64::from(time);
        self.space += u64::from(space);
        self.space_or_time += u64::from(time || space);
        self.space_and_time += u64::from(time && space);
        self.any += u64::from(negative || possibility || quantities || attribution || time || space);

        let (s, r, o) = (record.subject.len() as u64, record.relation.len() as u64, record.object.len() as u64);
        self.triple_len.add(s + r + o);
        self.subject_len.add(s);
        self.relation_len.add(r);
        self.object_len.add(o);
        if let Some(c) = record.confidence {
            self.confidence.add((c.clamp(0.0, 1.0) * CONFIDENCE_SCALE).round() as u64);
        }

        let (st, ot) = type_pair(record, sentence);
        *self.ner.entry(st.clone()).or_insert(0) += 1;
        if !record.object.is_empty() {
            *self.ner.entry(ot.clone()).or_insert(0) += 1;
            match (st != "O", ot != "O") {
                (true, true) => self.typing.0 += 1,
                (false, false) => self.typing.2 += 1,
                _ => self.typing.1 += 1,
            }
        }
        self.relations.add(record, sentence);
    }

    pub fn merge(&mut self, o: &ProfileAccumulator) {
        self.total += o.total;
        self.any += o.any;
        self.negative += o.negative;
        self.possibility += o.possibility;
        self.quantities += o.quantities;
        self.attribution += o.attribution;
        self.time += o.time;
        self.space += o.space;
        self.space_or_time += o.space_or_time;
        self.space_and_time += o.space_and_time;
        self.triple_len.merge(&o.triple_len);
        self.subject_len.merge(&o.subject_len);
        self.relation_len.merge(&o.relation_len);
        self.object_len.merge(&o.object_len);
        self.confidence.merge(&o.confidence);
        for (k, v) in &o.ner {
            *self.ner.entry(k.clone()).or_insert(0) += v;
        }
        self.typing.0 += o.typing.0;
        self.typing.1 += o.typing.1;
        self.typing.2 += o.typing.2;
        self.relations.merge(&o.relations);
    }

    pub fn relation_frequencies(&self) -> &RelationFrequencies {
        &self.relations
    }

    pub fn finish(&self, top_k: usize) -> CorpusReport {
        let cf = |count: u64| CountFraction {
            count,
            fraction: if self.total == 0 { 0.0 } else { count as f64 / self.total as f64 },
        };
        let mut pairs: BTreeMap<(String, String), Vec<RelationCount>> = BTreeMap::new();
        for ((rel, st, ot), n) in &self.relations.counts {
            pairs
                .entry((st.clone(), ot.clone()))
                .or_default()
                .push(RelationCount { relation: rel.clone(), count: *n });
        }
        let relations_by_type_pair = pairs
            .into_iter()
            .map(|((subject_type, object_type), mut rels)| {
                let total = rels.iter().map(|r| r.count).sum();
                rels.sort_by(|a, b| b.count.cmp(&a.count).then_with(|| a.relation.cmp(&b.relation)));
                rels.truncate(top_k);
                TypePairRelations { subject_type, object_type, total, top: rels }
            })
            .collect();
        CorpusReport {
            total_triples: self.total,
            semantic: SemanticCounts {
                any_semantic_annotation: cf(self.any),
                negative_polarity: cf(self.negative),
                possibility_modality: cf(self.possibility),
                quantities: cf(self.quantities),
                attribution: cf(self.attribution),
                time: cf(self.time),
                space: cf(self.space),
                space_or_time: cf(self.space_or_time),
                space_and_time: cf(self.space_and_time),
            },
            lengths: Lengths {
                triple: self.triple_len.finish(1.0),
                subject: self.subject_len.finish(1.0),
                relation: self.relation_len.finish(1.0),
                object: self.object_len.finish(1.0),
            },
            confidence: self.confidence.finish(CONFIDENCE_SCALE),
            scored_triples: self.confidence.n,
            ner_histogram: self.ner.clone(),
            argument_typing: PairTyping {
                both: self.typing.0,
                one: self.typing.1,
                none: self.typing.2,
            },
            relations_by_type_pair,
        }
    }
}

pub fn profile<'a>(
    items: impl IntoIterator<Item = (&'a ExtractionRecord, &'a AnnotatedSentence)>,
    top_k: usize,
) -> CorpusReport {
    let mut acc = ProfileAccumulator::new();
    for (r, s) in items {
        acc.add(r, s);
    }
    acc.finish(top_k)
}

impl CorpusReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes") + "\n"
    }

    /// Plain-text rendering with one row per metric.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "{:<34}{:>12}", "Total triples", self.total_triples);
        let _ = writeln!(out);
        let _ = writeln!(out, "{:<34}{:>12}{:>10}", "Triples with semantic annotations", "count", "%");
        let s = &self.semantic;
        for (name, c) in [
            ("any", &s.any_semantic_annotation),
            ("negative polarity", &s.negative_polarity),
            ("possibility modality", &s.possibility_modality),
            ("quantities", &s.quantities),
            ("attribution", &s.attribution),
            ("time", &s.time),
            ("space", &s.space),
            ("space or time", &s.space_or_time),
            ("space and time", &s.space_and_time),
        ] {
            let _ = writeln!(out, "  {:<32}{:>12}{:>10.2}", name, c.count, c.fraction * 100.0);
        }
        let _ = writeln!(out);
        let _ = writeln!(out, "Triple length in tokens (mean ± std)");
        let l = &self.lengths;
        for (name, m) in [("triple", &l.triple), ("subject", &l.subject), ("relation", &l.relation), ("object", &l.object)] {
            let _ = writeln!(out, "  {:<32}{:>8.2} ± {:<8.2}", name, m.mean, m.std);
        }
        let _ = writeln!(
            out,
            "  {:<32}{:>8.2} ± {:<8.2}({} scored)",
            "confidence", self.confidence.mean, self.confidence.std, self.scored_triples
        );
        let _ = writeln!(out);
        let _ = writeln!(out, "NER types of arguments");
        for (ty, n) in &self.ner_histogram {
            let _ = writeln!(out, "  {:<32}{:>12}", ty, n);
        }
        let t = &self.argument_typing;
        let _ = writeln!(out);
        let _ = writeln!(out, "Argument pairs typed: both {} / one {} / none {}", t.both, t.one, t.none);
        let _ = writeln!(out);
        let _ = writeln!(out, "Most frequent relations per type pair");
        for p in &self.relations_by_type_pair {
            let _ = writeln!(out, "  {} - {} ({})", p.subject_type, p.object_type, p.total);
            for r in &p.top {
                let _ = writeln!(out, "    {:<30}{:>12}", r.relation, r.count);
            }
        }
        out
    }
}
