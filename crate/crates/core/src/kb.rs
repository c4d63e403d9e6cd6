//! Alignment of linked triples with knowledge-base facts.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::io::BufRead;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ingest::{IngestError, ReadError, ReasonCode, Strictness};
use crate::sentence::{AnnotatedSentence, TimexType};
use crate::tier::exact_link;
use crate::triple::{lemmatized_relation, Constituent, ExtractionRecord, SpaTeKind, Target};

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct KbTriple {
    pub subject: String,
    pub relation: String,
    pub object: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    Forward,
    Reverse,
}

impl Direction {
    pub fn flip(self) -> Self {
        match self {
            Direction::Forward => Direction::Reverse,
            Direction::Reverse => Direction::Forward,
        }
    }
}

type PairMap = BTreeMap<(String, String), BTreeSet<String>>;

/// Deduplicated KB triples indexed by entity pair in both directions.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct KbIndex {
    forward: PairMap,
    reverse: PairMap,
    dates: BTreeMap<String, BTreeSet<(String, String)>>,
    len: usize,
}

/// `-?YYYY`, optionally followed by `-MM` and `-DD`; unknown parts may be
/// written `##`.
pub fn is_date_literal(s: &str) -> bool {
    let s = s.strip_prefix('-').unwrap_or(s);
    let mut parts = s.split('-');
    let year = parts.next().unwrap_or("");
    if year.is_empty() || year.len() > 4 || !year.bytes().all(|b| b.is_ascii_digit()) {
        return false;
    }
    let mut n = 0;
    for part in parts {
        n += 1;
        if n > 2 || !(part == "##" || (part.len() == 2 && part.bytes().all(|b| b.is_ascii_digit()))) {
            return false;
        }
    }
    true
}

impl KbIndex {
    pub fn new() -> Self {
        Self::default()
    }

    /// Adds a triple; returns false for a duplicate.
    pub fn insert(&mut self, t: KbTriple) -> bool {
        let fresh = self
            .forward
            .entry((t.subject.clone(), t.object.clone()))
            .or_default()
            .insert(t.relation.clone());
        if fresh {
            self.reverse
                .entry((t.object.clone(), t.subject.clone()))
                .or_default()
                .insert(t.relation.clone());
            if is_date_literal(&t.object) {
                self.dates.entry(t.subject).or_default().insert((t.relation, t.object));
            }
            self.len += 1;
        }
        fresh
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    /// Relations of triples `(s, r, o)`.
    pub fn forward(&self, s: &str, o: &str) -> Option<&BTreeSet<String>> {
        self.forward.get(&(s.to_string(), o.to_string()))
    }

    /// Relations of triples `(o, r, s)`, looked up from `s`'s side.
    pub fn reverse(&self, s: &str, o: &str) -> Option<&BTreeSet<String>> {
        self.reverse.get(&(s.to_string(), o.to_string()))
    }

    pub fn has_date_fact(&self, subject: &str) -> bool {
        self.dates.contains_key(subject)
    }

    pub fn date_facts(&self, subject: &str) -> Option<&BTreeSet<(String, String)>> {
        self.dates.get(subject)
    }

    pub fn triples(&self) -> impl Iterator<Item = KbTriple> + '_ {
        self.forward.iter().flat_map(|((s, o), rels)| {
            rels.iter().map(move |r| KbTriple {
                subject: s.clone(),
                relation: r.clone(),
                object: o.clone(),
            })
        })
    }

    /// Index of the KB with every triple reversed.
    pub fn transposed(&self) -> KbIndex {
        let mut out = KbIndex::new();
        for t in self.triples() {
            out.insert(KbTriple {
                subject: t.object,
                relation: t.relation,
                object: t.subject,
            });
        }
        out
    }

    pub fn extend_from(&mut self, other: &KbIndex) {
        for t in other.triples() {
            self.insert(t);
        }
    }
}

fn tsv_fields<const N: usize>(line: &str) -> Option<[&str; N]> {
    let cols: Vec<&str> = line.trim_end_matches('\r').split('\t').collect();
    let arr: [&str; N] = cols.try_into().ok()?;
    arr.iter().all(|c| !c.is_empty()).then_some(arr)
}

/// Reads `subject<TAB>relation<TAB>object` lines.
pub fn load_kb<R: BufRead>(reader: R, strictness: Strictness) -> Result<(KbIndex, Vec<IngestError>), ReadError> {
    let mut index = KbIndex::new();
    let mut rejects = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.is_empty() {
            continue;
        }
        match tsv_fields::<3>(&line) {
            Some([s, r, o]) => {
                index.insert(KbTriple {
                    subject: s.into(),
                    relation: r.into(),
                    object: o.into(),
                });
            }
            None => {
                let e = IngestError::new(i + 1, ReasonCode::MalformedLine, "expected subject<TAB>relation<TAB>object");
                match strictness {
                    Strictness::Strict => return Err(e.into()),
                    Strictness::Lenient => rejects.push(e),
                }
            }
        }
    }
    Ok((index, rejects))
}

/// Meta-facts keyed by the KB triple they qualify.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct MetaFacts {
    facts: BTreeMap<KbTriple, BTreeSet<(String, String)>>,
}

impl MetaFacts {
    pub fn insert(&mut self, triple: KbTriple, predicate: String, value: String) {
        self.facts.entry(triple).or_default().insert((predicate, value));
    }

    pub fn get(&self, triple: &KbTriple) -> Option<&BTreeSet<(String, String)>> {
        self.facts.get(triple)
    }

    pub fn len(&self) -> usize {
        self.facts.values().map(BTreeSet::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.facts.is_empty()
    }
}

/// Reads `subject<TAB>relation<TAB>object<TAB>meta_predicate<TAB>meta_value`.
pub fn load_meta_facts<R: BufRead>(reader: R, strictness: Strictness) -> Result<(MetaFacts, Vec<IngestError>), ReadError> {
    let mut meta = MetaFacts::default();
    let mut rejects = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.is_empty() {
            continue;
        }
        match tsv_fields::<5>(&line) {
            Some([s, r, o, p, v]) => meta.insert(
                KbTriple {
                    subject: s.into(),
                    relation: r.into(),
                    object: o.into(),
                },
                p.into(),
                v.into(),
            ),
            None => {
                let e = IngestError::new(i + 1, ReasonCode::MalformedLine, "expected five tab-separated fields");
                match strictness {
                    Strictness::Strict => return Err(e.into()),
                    Strictness::Lenient => rejects.push(e),
                }
            }
        }
    }
    Ok((meta, rejects))
}

/// KB relations connecting `s` and `o` in either direction.
pub fn kb_hit(index: &KbIndex, s: &str, o: &str) -> BTreeSet<(String, Direction)> {
    let mut out = BTreeSet::new();
    for r in index.forward(s, o).into_iter().flatten() {
        out.insert((r.clone(), Direction::Forward));
    }
    for r in index.reverse(s, o).into_iter().flatten() {
        out.insert((r.clone(), Direction::Reverse));
    }
    out
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum KbError {
    #[error("record {0}/{1}/{2} does not have both arguments linked")]
    Unlinked(u64, u32, u32),
}

/// Entity id of an argument: the canonical target of the link covering
/// exactly its tokens, with spaces written as underscores.
pub fn argument_entity(record: &ExtractionRecord, constituent: &Constituent, sentence: &AnnotatedSentence) -> Option<String> {
    let link = exact_link(sentence, &constituent.token_set())?;
    let canonical = record.canonical_links.get(&link.target).unwrap_or(&link.target);
    Some(canonical.replace(' ', "_"))
}

/// Whether the record's object is marked as a DATE temporal reference.
pub fn has_date_object(record: &ExtractionRecord) -> bool {
    record.spate.iter().any(|a| {
        a.kind == SpaTeKind::TemporalReference
            && a.target == Target::Object
            && a.timex.as_ref().is_some_and(|t| t.timex_type == TimexType::Date)
    })
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
struct RelationTally {
    frequency: u64,
    hits: u64,
    aligned: BTreeMap<String, u64>,
}

/// Mergeable alignment state for one KB.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct AlignAccumulator {
    linked: u64,
    hit_records: u64,
    relations: BTreeMap<String, RelationTally>,
    date_candidates: u64,
    date_hits: u64,
    meta_records: u64,
    meta_temporal: u64,
    meta_spatial: u64,
}

impl AlignAccumulator {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add_linked(
        &mut self,
        index: &KbIndex,
        meta: Option<&MetaFacts>,
        relation: &str,
        subject: &str,
        object: &str,
        record: &ExtractionRecord,
    ) {
        self.linked += 1;
        let hits = kb_hit(index, subject, object);
        let tally = self.relations.entry(relation.to_string()).or_default();
        tally.frequency += 1;
        if hits.is_empty() {
            return;
        }
        self.hit_records += 1;
        tally.hits += 1;
        for (r, _) in &hits {
            *tally.aligned.entry(r.clone()).or_insert(0) += 1;
        }
        if let Some(meta) = meta {
            let mut any = false;
            let mut temporal = false;
            let mut spatial = false;
            for (r, dir) in &hits {
                let (s, o) = match dir {
                    Direction::Forward => (subject, object),
                    Direction::Reverse => (object, subject),
                };
                let key = KbTriple {
                    subject: s.into(),
                    relation: r.clone(),
                    object: o.into(),
                };
                for (_, value) in meta.get(&key).into_iter().flatten() {
                    any = true;
                    if is_date_literal(value) {
                        temporal |= record.has_temporal();
                    } else {
                        spatial |= record.has_spatial();
                    }
                }
            }
            self.meta_records += u64::from(any);
            self.meta_temporal += u64::from(temporal);
            self.meta_spatial += u64::from(spatial);
        }
    }

    pub fn add_date_candidate(&mut self, index: &KbIndex, subject: &str) {
        self.date_candidates += 1;
        self.date_hits += u64::from(index.has_date_fact(subject));
    }

    pub fn merge(&mut self, o: &AlignAccumulator) {
        self.linked += o.linked;
        self.hit_records += o.hit_records;
        for (rel, t) in &o.relations {
            let mine = self.relations.entry(rel.clone()).or_default();
            mine.frequency += t.frequency;
            mine.hits += t.hits;
            for (r, n) in &t.aligned {
                *mine.aligned.entry(r.clone()).or_insert(0) += n;
            }
        }
        self.date_candidates += o.date_candidates;
        self.date_hits += o.date_hits;
        self.meta_records += o.meta_records;
        self.meta_temporal += o.meta_temporal;
        self.meta_spatial += o.meta_spatial;
    }

    pub fn finish(&self, kb: &str, top_k: usize) -> KbSection {
        let ratio = |a: u64, b: u64| if b == 0 { 0.0 } else { a as f64 / b as f64 };
        let mut relations: Vec<RelationAlignment> = self
            .relations
            .iter()
            .map(|(rel, t)| {
                let mut top: Vec<AlignedRelation> = t
                    .aligned
                    .iter()
                    .map(|(r, n)| AlignedRelation { relation: r.clone(), count: *n })
                    .collect();
                top.sort_by(|a, b| b.count.cmp(&a.count).then_with(|| a.relation.cmp(&b.relation)));
                top.truncate(top_k);
                RelationAlignment {
                    relation: rel.clone(),
                    frequency: t.frequency,
                    kb_hits: t.hits,
                    hit_percentage: 100.0 * ratio(t.hits, t.frequency),
                    distinct_kb_relations: t.aligned.len() as u64,
                    top_kb_relations: top,
                }
            })
            .collect();
        relations.sort_by(|a, b| b.frequency.cmp(&a.frequency).then_with(|| a.relation.cmp(&b.relation)));
        KbSection {
            kb: kb.to_string(),
            linked_triples: self.linked,
            kb_hit_triples: self.hit_records,
            hit_fraction: ratio(self.hit_records, self.linked),
            relations,
            date_hits: DateHits {
                candidates: self.date_candidates,
                hits: self.date_hits,
                fraction: ratio(self.date_hits, self.date_candidates),
            },
            meta_facts: MetaFactHits {
                records: self.meta_records,
                temporal: self.meta_temporal,
                spatial: self.meta_spatial,
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AlignedRelation {
    pub relation: String,
    pub count: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RelationAlignment {
    pub relation: String,
    pub frequency: u64,
    pub kb_hits: u64,
    pub hit_percentage: f64,
    pub distinct_kb_relations: u64,
    pub top_kb_relations: Vec<AlignedRelation>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DateHits {
    pub candidates: u64,
    pub hits: u64,
    pub fraction: f64,
}

/// Linked triples whose KB hit carries a meta-fact; `temporal` and
/// `spatial` further require a matching annotation on the triple.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MetaFactHits {
    pub records: u64,
    pub temporal: u64,
    pub spatial: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KbSection {
    pub kb: String,
    pub linked_triples: u64,
    pub kb_hit_triples: u64,
    pub hit_fraction: f64,
    pub relations: Vec<RelationAlignment>,
    pub date_hits: DateHits,
    pub meta_facts: MetaFactHits,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlignmentReport {
    pub sections: Vec<KbSection>,
}

pub const UNION_SECTION: &str = "union";

/// A loaded KB with its display name.
#[derive(Debug, Clone)]
pub struct NamedKb {
    pub name: String,
    pub index: KbIndex,
}

/// Resolved entities of one linked record.
pub struct LinkedTriple<'a> {
    pub record: &'a ExtractionRecord,
    pub relation: String,
    pub subject: String,
    pub object: String,
}

pub fn resolve_linked<'a>(record: &'a ExtractionRecord, sentence: &AnnotatedSentence) -> Result<LinkedTriple<'a>, KbError> {
    let unlinked = || KbError::Unlinked(record.article_id, record.sentence_number, record.extraction_index);
    Ok(LinkedTriple {
        record,
        relation: lemmatized_relation(record, sentence),
        subject: argument_entity(record, &record.subject, sentence).ok_or_else(unlinked)?,
        object: argument_entity(record, &record.object, sentence).ok_or_else(unlinked)?,
    })
}

/// Alignment of a linked stream against a single KB.
pub fn align<'a>(
    linked: impl IntoIterator<Item = (&'a ExtractionRecord, &'a AnnotatedSentence)>,
    index: &KbIndex,
    top_k: usize,
) -> Result<KbSection, KbError> {
    let mut acc = AlignAccumulator::new();
    for (r, s) in linked {
        let t = resolve_linked(r, s)?;
        acc.add_linked(index, None, &t.relation, &t.subject, &t.object, r);
    }
    Ok(acc.finish("kb", top_k))
}

/// Date-fact hits among records with a linked subject and a DATE object.
/// Returns (candidates, hits).
pub fn date_hits<'a>(
    records: impl IntoIterator<Item = (&'a ExtractionRecord, &'a AnnotatedSentence)>,
    index: &KbIndex,
) -> (u64, u64) {
    let mut acc = AlignAccumulator::new();
    for (r, s) in records {
        if has_date_object(r) {
            if let Some(subject) = argument_entity(r, &r.subject, s) {
                acc.add_date_candidate(index, &subject);
            }
        }
    }
    (acc.date_candidates, acc.date_hits)
}

/// Full report: one section per KB, then the union of all KBs.
/// `linked` must contain only records with both arguments linked;
/// `all` is scanned for date-object candidates.
pub fn alignment_report<'a>(
    kbs: &[NamedKb],
    meta: Option<&MetaFacts>,
    linked: &[(&'a ExtractionRecord, &'a AnnotatedSentence)],
    all: &[(&'a ExtractionRecord, &'a AnnotatedSentence)],
    top_k: usize,
) -> Result<AlignmentReport, KbError> {
    let mut union = KbIndex::new();
    for kb in kbs {
        union.extend_from(&kb.index);
    }
    let resolved: Vec<LinkedTriple<'a>> = linked
        .iter()
        .map(|(r, s)| resolve_linked(r, s))
        .collect::<Result<_, _>>()?;
    let date_subjects: Vec<String> = all
        .iter()
        .filter(|(r, _)| has_date_object(r))
        .filter_map(|(r, s)| argument_entity(r, &r.subject, s))
        .collect();
    let section = |name: &str, index: &KbIndex| {
        let mut acc = AlignAccumulator::new();
        for t in &resolved {
            acc.add_linked(index, meta, &t.relation, &t.subject, &t.object, t.record);
        }
        for s in &date_subjects {
            acc.add_date_candidate(index, s);
        }
        acc.finish(name, top_k)
    };
    let mut sections: Vec<KbSection> = kbs.iter().map(|kb| section(&kb.name, &kb.index)).collect();
    sections.push(section(UNION_SECTION, &union));
    Ok(AlignmentReport { sections })
}

impl AlignmentReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes") + "\n"
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for s in &self.sections {
            let _ = writeln!(out, "== {} ==", s.kb);
            let _ = writeln!(
                out,
                "linked triples {}  KB hits {} ({:.2}%)",
                s.linked_triples,
                s.kb_hit_triples,
                s.hit_fraction * 100.0
            );
            let _ = writeln!(
                out,
                "date objects {}  date hits {} ({:.2}%)",
                s.date_hits.candidates,
                s.date_hits.hits,
                s.date_hits.fraction * 100.0
            );
            let _ = writeln!(
                out,
                "meta-fact hits {}  temporal {}  spatial {}",
                s.meta_facts.records, s.meta_facts.temporal, s.meta_facts.spatial
            );
            let _ = writeln!(
                out,
                "{:<28}{:>10}{:>16}{:>14}  top aligned KB relations",
                "open relation", "freq", "# KB hits", "# distinct"
            );
            for r in &s.relations {
                let top: Vec<String> = r
                    .top_kb_relations
                    .iter()
                    .map(|a| format!("{} ({})", a.relation, a.count))
                    .collect();
                let _ = writeln!(
                    out,
                    "{:<28}{:>10}{:>9} ({:>4.1}%){:>14}  {}",
                    r.relation,
                    r.frequency,
                    r.kb_hits,
                    r.hit_percentage,
                    r.distinct_kb_relations,
                    top.join(", ")
                );
            }
            let _ = writeln!(out);
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(s: &str, r: &str, o: &str) -> KbTriple {
        KbTriple {
            subject: s.into(),
            relation: r.into(),
            object: o.into(),
        }
    }

    #[test]
    fn date_literals() {
        for ok in ["1918-01-17", "1918", "-44", "1918-##-##", "2003-05"] {
            assert!(is_date_literal(ok), "{ok}");
        }
        for bad in ["", "19180", "1918-1-17", "Actress", "1918-01-17-01", "x1918"] {
            assert!(!is_date_literal(bad), "{bad}");
        }
    }

    #[test]
    fn forward_and_reverse_hits() {
        let mut idx = KbIndex::new();
        idx.insert(t("Claudia_Hiersche", "occupation", "Actress"));
        idx.insert(t("Can-Can_(musical)", "musicBy", "Cole_Porter"));
        assert_eq!(
            kb_hit(&idx, "Claudia_Hiersche", "Actress"),
            BTreeSet::from([("occupation".to_string(), Direction::Forward)])
        );
        assert_eq!(
            kb_hit(&idx, "Cole_Porter", "Can-Can_(musical)"),
            BTreeSet::from([("musicBy".to_string(), Direction::Reverse)])
        );
        assert!(kb_hit(&idx, "Cole_Porter", "Actress").is_empty());
    }

    #[test]
    fn load_dedups_and_reports_line_numbers() {
        let text = "a\tr\tb\na\tr\tb\nc\tr\t1999-##-##\n";
        let (idx, rej) = load_kb(text.as_bytes(), Strictness::Strict).unwrap();
        assert_eq!(idx.len(), 2);
        assert!(rej.is_empty());
        assert!(idx.has_date_fact("c"));
        let err = load_kb("a\tr\tb\nbroken\n".as_bytes(), Strictness::Strict).unwrap_err();
        assert!(err.to_string().starts_with("line 2:"), "{err}");
        let (idx, rej) = load_kb("a\tr\tb\nbroken\n".as_bytes(), Strictness::Lenient).unwrap();
        assert_eq!((idx.len(), rej.len()), (1, 1));
        assert!(load_kb("".as_bytes(), Strictness::Strict).unwrap().0.is_empty());
    }

    #[test]
    fn transpose_swaps_directions() {
        let mut idx = KbIndex::new();
        idx.insert(t("a", "r", "b"));
        idx.insert(t("b", "q", "a"));
        let tr = idx.transposed();
        let flipped: BTreeSet<_> = kb_hit(&idx, "a", "b").into_iter().map(|(r, d)| (r, d.flip())).collect();
        assert_eq!(flipped, kb_hit(&idx, "b", "a"));
        assert_eq!(flipped, kb_hit(&tr, "a", "b"));
        assert_eq!(kb_hit(&idx, "a", "b"), kb_hit(&tr, "b", "a"));
    }
}
