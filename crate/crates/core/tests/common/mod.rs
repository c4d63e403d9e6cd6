//! Builders and random generators shared by the integration tests.
#![allow(dead_code)]

use std::collections::BTreeMap;

use oie_corpus::ingest::validate_sentence;
use oie_corpus::sentence::{DependencyEdge, DependencyGraph, TemporalExpression, TimexType, Token, WikiLink};
use oie_corpus::triple::{
    Attribution, ClauseType, Constituent, ExtractionRecord, ExtractionType, ExtractorFlags, Modality, NaryExtraction,
    Polarity, Quantity, Role, Slot, SpaTeAnnotation, SpaTeKind, Target, TimexPayload,
};
use oie_corpus::AnnotatedSentence;
use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Builds a sentence from whitespace-separated token specs
/// `surface|POS|NER|lemma`; NER defaults to `O`, lemma to the lowercased
/// surface.
pub struct SentenceBuilder {
    s: AnnotatedSentence,
    edges: Vec<DependencyEdge>,
}

impl SentenceBuilder {
    pub fn new(article_id: u64, sentence_number: u32, layout: &str) -> Self {
        let mut begin = 0;
        let tokens = layout
            .split_whitespace()
            .enumerate()
            .map(|(i, item)| {
                let mut parts = item.split('|');
                let surface = parts.next().unwrap().to_string();
                let pos = parts.next().unwrap_or("NN").to_string();
                let ner = parts.next().unwrap_or("O").to_string();
                let lemma = parts.next().map(str::to_string).unwrap_or_else(|| surface.to_lowercase());
                let t = Token {
                    index: i as u32 + 1,
                    end: begin + surface.chars().count() as u32,
                    surface,
                    lemma,
                    pos,
                    ner,
                    begin,
                    link: None,
                };
                begin = t.end + 1;
                t
            })
            .collect();
        SentenceBuilder {
            s: AnnotatedSentence {
                article_id,
                sentence_number,
                article_title: None,
                tokens,
                depgraph: DependencyGraph::default(),
                temporal_expressions: vec![],
            },
            edges: vec![],
        }
    }

    pub fn dep(mut self, label: &str, gov: u32, dep: u32) -> Self {
        self.edges.push(DependencyEdge { gov, dep, label: label.into() });
        self
    }

    /// `"root 0 3; nsubj 3 2"`
    pub fn deps(mut self, layout: &str) -> Self {
        for item in layout.split(';').map(str::trim).filter(|s| !s.is_empty()) {
            let p: Vec<&str> = item.split_whitespace().collect();
            self = self.dep(p[0], p[1].parse().unwrap(), p[2].parse().unwrap());
        }
        self
    }

    pub fn timex(mut self, first: u32, last: u32, ty: TimexType, value: &str) -> Self {
        let text: Vec<&str> = (first..=last).map(|t| self.s.surface(t)).collect();
        let ty_name = format!("{ty:?}").to_uppercase();
        let id = self.s.temporal_expressions.len() + 1;
        self.s.temporal_expressions.push(TemporalExpression {
            first_token: first,
            last_token: last,
            timex_type: ty,
            value: value.into(),
            xml: format!("<TIMEX3 tid=\"t{id}\" type=\"{ty_name}\" value=\"{value}\">{}</TIMEX3>", text.join(" ")),
        });
        self
    }

    pub fn link(mut self, first: u32, last: u32, target: &str) -> Self {
        let begin = self.s.token(first).unwrap().begin;
        let end = self.s.token(last).unwrap().end;
        let anchor: Vec<&str> = (first..=last).map(|t| self.s.surface(t)).collect();
        let link = WikiLink { begin, end, anchor: anchor.join(" "), target: target.into() };
        for t in first..=last {
            self.s.tokens[t as usize - 1].link = Some(link.clone());
        }
        self
    }

    pub fn title(mut self, title: &str) -> Self {
        self.s.article_title = Some(title.into());
        self
    }

    pub fn build(mut self) -> AnnotatedSentence {
        self.s.depgraph = DependencyGraph::new(std::mem::take(&mut self.edges));
        validate_sentence(&self.s).unwrap_or_else(|e| panic!("invalid fixture sentence: {e:?}"));
        self.s
    }
}

pub fn c(role: Role, tokens: &[u32]) -> Constituent {
    Constituent::from_tokens(role, tokens.iter().copied())
}

/// Record whose n-ary extraction is `(subject; relation; args...)` and
/// whose triple is `(ts; tr; to)`.
pub fn record(
    sentence: &AnnotatedSentence,
    nary: (&[u32], &[u32], &[&[u32]]),
    clause: &str,
    triple: (&[u32], &[u32], &[u32]),
) -> ExtractionRecord {
    let ty = ExtractionType::Clause(ClauseType::parse(clause).unwrap());
    let r = ExtractionRecord {
        article_id: sentence.article_id,
        sentence_number: sentence.sentence_number,
        extraction_index: 0,
        nary: NaryExtraction {
            subject: c(Role::Subject, nary.0),
            relation: c(Role::Relation, nary.1),
            arguments: nary.2.iter().map(|a| c(Role::Argument, a)).collect(),
            clause_type: ty.clone(),
        },
        subject: c(Role::Subject, triple.0),
        relation: c(Role::Relation, triple.1),
        object: c(Role::Object, triple.2),
        polarity: Polarity::Positive,
        negative_words: vec![],
        modality: Modality::Certainty,
        modality_words: vec![],
        attribution: None,
        quantities: vec![],
        dropped_words: vec![],
        extraction_type: ty,
        spate: vec![],
        confidence: None,
        canonical_links: BTreeMap::new(),
        flags: ExtractorFlags::default(),
    };
    r.validate().unwrap();
    r.check_against(sentence).unwrap();
    r
}

/// Simple (s; r; o) record whose n-ary form has the object as its only
/// argument.
pub fn svo(sentence: &AnnotatedSentence, s: &[u32], r: &[u32], o: &[u32]) -> ExtractionRecord {
    if o.is_empty() {
        record(sentence, (s, r, &[]), "SV", (s, r, o))
    } else {
        record(sentence, (s, r, &[o]), "SVO", (s, r, o))
    }
}

pub fn words(sentence: &AnnotatedSentence, c: &Constituent) -> String {
    oie_corpus::triple::surface(c, sentence)
}

pub fn triple_text(sentence: &AnnotatedSentence, r: &ExtractionRecord) -> (String, String, String) {
    (words(sentence, &r.subject), words(sentence, &r.relation), words(sentence, &r.object))
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

const SURFACES: [&str; 16] = [
    "Paris", "visited", "the", "old", "city", "in", "1999", "yesterday", "John", "Smith", "founded", "a", "company",
    "near", "Berlin", "quickly",
];
const POS: [&str; 16] = [
    "NN", "NNP", "NNS", "JJ", "VBD", "VBZ", "VBG", "VB", "IN", "TO", "DT", "CD", "RB", "PRP", "WP", "POS",
];
const NER: [&str; 8] = ["O", "O", "O", "O", "PERSON", "LOCATION", "ORGANIZATION", "LOCATION"];
const LABELS: [&str; 24] = [
    "nsubj", "dobj", "prep", "pobj", "tmod", "advmod", "amod", "nn", "num", "number", "xcomp", "det", "conj", "cc",
    "punct", "dep", "rcmod", "aux", "appos", "vmod", "acomp", "prep", "pobj", "tmod",
];
const TRIGGER_LABELS: [&str; 9] = ["tmod", "advmod", "prep", "pobj", "xcomp", "amod", "nn", "num", "prep"];
const TITLES: [&str; 6] = ["Paris", "John_Smith", "Berlin", "Acme", "Old_Town", "Nowhere"];

/// A structurally valid sentence: dense tokens, a single-rooted tree,
/// non-overlapping temporal expressions and links.
pub fn random_sentence<R: Rng>(rng: &mut R, article_id: u64, sentence_number: u32) -> AnnotatedSentence {
    random_sentence_with(rng, article_id, sentence_number, false)
}

/// Like [`random_sentence`], but `triggers` skews labels, tags and spans
/// toward the ones the annotation rules react to.
pub fn random_sentence_with<R: Rng>(rng: &mut R, article_id: u64, sentence_number: u32, triggers: bool) -> AnnotatedSentence {
    let n: u32 = rng.random_range(2..=12);
    let mut begin = 0;
    let tokens: Vec<Token> = (1..=n)
        .map(|i| {
            let surface = SURFACES[rng.random_range(0..SURFACES.len())].to_string();
            let t = Token {
                index: i,
                lemma: surface.to_lowercase(),
                pos: if triggers && rng.random_bool(0.6) {
                    ["NN", "NNP", "JJ"][rng.random_range(0..3)]
                } else {
                    POS[rng.random_range(0..POS.len())]
                }
                .into(),
                ner: if triggers && rng.random_bool(0.3) { "LOCATION" } else { NER[rng.random_range(0..NER.len())] }.into(),
                begin,
                end: begin + surface.len() as u32,
                surface,
                link: None,
            };
            begin = t.end + 1;
            t
        })
        .collect();
    let mut order: Vec<u32> = (1..=n).collect();
    order.shuffle(rng);
    let mut edges = vec![DependencyEdge { gov: 0, dep: order[0], label: "root".into() }];
    for i in 1..order.len() {
        let gov = order[rng.random_range(0..i)];
        edges.push(DependencyEdge {
            gov,
            dep: order[i],
            label: if triggers && rng.random_bool(0.6) {
                TRIGGER_LABELS[rng.random_range(0..TRIGGER_LABELS.len())]
            } else {
                LABELS[rng.random_range(0..LABELS.len())]
            }
            .into(),
        });
    }
    let mut s = AnnotatedSentence {
        article_id,
        sentence_number,
        article_title: None,
        tokens,
        depgraph: DependencyGraph::new(edges),
        temporal_expressions: vec![],
    };
    // spans: walk left to right, occasionally opening a timex or link
    let mut t = 1;
    while t <= n {
        let len = rng.random_range(1..=3).min(n - t + 1);
        match rng.random_range(0..if triggers { 3 } else { 6 }) {
            0 => {
                let ty = [TimexType::Date, TimexType::Time, TimexType::Duration, TimexType::Set][rng.random_range(0..4)];
                s.temporal_expressions.push(TemporalExpression {
                    first_token: t,
                    last_token: t + len - 1,
                    timex_type: ty,
                    value: format!("{}", 1900 + rng.random_range(0..120)),
                    xml: "<TIMEX3/>".into(),
                });
            }
            1 => {
                let b = s.tokens[t as usize - 1].begin;
                let e = s.tokens[(t + len - 2) as usize].end;
                let anchor: Vec<&str> = (t..t + len).map(|i| s.surface(i)).collect();
                let link = WikiLink {
                    begin: b,
                    end: e,
                    anchor: anchor.join(" "),
                    target: TITLES[rng.random_range(0..TITLES.len())].into(),
                };
                for i in t..t + len {
                    s.tokens[i as usize - 1].link = Some(link.clone());
                }
            }
            _ => {}
        }
        t += len;
    }
    validate_sentence(&s).unwrap_or_else(|e| panic!("generator built an invalid sentence: {e:?}"));
    s
}

fn random_timex<R: Rng>(rng: &mut R) -> TimexPayload {
    TimexPayload {
        timex_type: TimexType::Date,
        value: format!("{}-0{}", 1800 + rng.random_range(0..200), rng.random_range(1..10)),
        xml: format!("<TIMEX3 tid=\"t{}\">x \"quoted\" \\ é</TIMEX3>", rng.random_range(0..9)),
    }
}

fn random_annotation<R: Rng>(rng: &mut R, pool: &[u32]) -> SpaTeAnnotation {
    let kinds = [
        SpaTeKind::TemporalTriple,
        SpaTeKind::TemporalArgument,
        SpaTeKind::SpatialTriple,
        SpaTeKind::SpatialArgument,
        SpaTeKind::TemporalReference,
        SpaTeKind::SpatialReference,
    ];
    let kind = kinds[rng.random_range(0..kinds.len())];
    let pick = |rng: &mut R, k: usize| -> Vec<u32> {
        let mut v: Vec<u32> = pool.choose_multiple(rng, k.min(pool.len())).copied().collect();
        v.sort_unstable();
        v
    };
    let k = rng.random_range(1..=2);
    let core = pick(rng, k);
    let k = rng.random_range(0..=1);
    let pre = pick(rng, k);
    SpaTeAnnotation {
        kind,
        predicate: rng.random_bool(0.5).then(|| "in".to_string()),
        core_words: core,
        pre_modifiers: pre,
        post_modifiers: vec![],
        timex: kind.is_temporal().then(|| random_timex(rng)),
        target: match kind {
            SpaTeKind::TemporalTriple | SpaTeKind::SpatialTriple => Target::WholeTriple,
            _ if rng.random_bool(0.5) => Target::Subject,
            _ => Target::Object,
        },
        head_word: kind.is_argument().then(|| pool[rng.random_range(0..pool.len())]),
    }
}

/// A valid record over `sentence`: n-ary constituents partition a random
/// subset of the tokens and the triple is derived from them the way the
/// extractor structures n-ary extractions.
pub fn random_record<R: Rng>(rng: &mut R, sentence: &AnnotatedSentence, index: u32, rich: bool) -> ExtractionRecord {
    let n = sentence.len() as u32;
    let mut ids: Vec<u32> = (1..=n).collect();
    ids.shuffle(rng);
    let used = rng.random_range(2..=n as usize);
    let (chosen, rest) = ids.split_at(used);
    let nargs = rng.random_range(0..=2usize.min(used - 2));
    // split points for subject, relation and arguments
    let mut cuts: Vec<usize> = (1..used).collect();
    cuts.shuffle(rng);
    let mut cuts: Vec<usize> = cuts[..nargs + 1].to_vec();
    cuts.sort_unstable();
    let mut parts: Vec<Vec<u32>> = Vec::new();
    let mut prev = 0;
    for &cut in cuts.iter().chain(std::iter::once(&used)) {
        let mut p = chosen[prev..cut].to_vec();
        p.sort_unstable();
        parts.push(p);
        prev = cut;
    }
    let subject = parts[0].clone();
    let relation = parts[1].clone();
    let args: Vec<Vec<u32>> = parts[2..].to_vec();
    let clause = match nargs {
        0 => ExtractionType::Clause(ClauseType::Sv),
        1 => [ClauseType::Svo, ClauseType::Sva, ClauseType::Svc][rng.random_range(0..3)].into(),
        _ if rng.random_bool(0.1) => ExtractionType::Implicit("has-poss".into()),
        _ => [ClauseType::Svoo, ClauseType::Svoa, ClauseType::Svoc][rng.random_range(0..3)].into(),
    };
    let (t_rel, t_obj) = match args.split_last() {
        None => (relation.clone(), vec![]),
        Some((last, init)) => {
            let mut r: Vec<u32> = relation.iter().chain(init.iter().flatten()).copied().collect();
            r.sort_unstable();
            (r, last.clone())
        }
    };
    let mut record = ExtractionRecord {
        article_id: sentence.article_id,
        sentence_number: sentence.sentence_number,
        extraction_index: index,
        nary: NaryExtraction {
            subject: c(Role::Subject, &subject),
            relation: c(Role::Relation, &relation),
            arguments: args.iter().map(|a| c(Role::Argument, a)).collect(),
            clause_type: clause.clone(),
        },
        subject: c(Role::Subject, &subject),
        relation: c(Role::Relation, &t_rel),
        object: c(Role::Object, &t_obj),
        polarity: Polarity::Positive,
        negative_words: vec![],
        modality: Modality::Certainty,
        modality_words: vec![],
        attribution: None,
        quantities: vec![],
        dropped_words: vec![],
        extraction_type: clause,
        spate: vec![],
        confidence: None,
        canonical_links: BTreeMap::new(),
        flags: ExtractorFlags::default(),
    };
    let mut rest: Vec<u32> = rest.to_vec();
    rest.sort_unstable();
    if rng.random_bool(0.3) && !rest.is_empty() {
        let k = rng.random_range(1..=rest.len());
        record.dropped_words = rest[..k].to_vec();
    }
    if !rich {
        return record;
    }
    let all: Vec<u32> = (1..=n).collect();
    if rng.random_bool(0.3) {
        record.polarity = Polarity::Negative;
        record.negative_words = vec![all[rng.random_range(0..all.len())]];
    }
    if rng.random_bool(0.3) {
        record.modality = Modality::Possibility;
        record.modality_words = vec![all[rng.random_range(0..all.len())]];
    }
    if rng.random_bool(0.3) {
        record.quantities.push(Quantity { marker: "Q_1".into(), tokens: vec![all[rng.random_range(0..all.len())]] });
        record.subject.slots.insert(0, Slot::Quantity("Q_1".into()));
    }
    if rng.random_bool(0.2) {
        record.attribution = Some(Attribution {
            phrase: vec![all[rng.random_range(0..all.len())]],
            predicate: "say".into(),
            polarity: if rng.random_bool(0.5) { Polarity::Negative } else { Polarity::Positive },
            modality: Modality::Certainty,
            spate: if rng.random_bool(0.5) { vec![random_annotation(rng, &all)] } else { vec![] },
        });
    }
    for _ in 0..rng.random_range(0..3) {
        record.spate.push(random_annotation(rng, &all));
    }
    if rng.random_bool(0.7) {
        // awkward floats exercise round-trip precision
        let v: f64 = match rng.random_range(0..4) {
            0 => 0.0,
            1 => 1.0,
            2 => 0.1 + 0.2 - 0.3 + rng.random::<f64>() * 1e-12,
            _ => rng.random::<f64>(),
        };
        record.confidence = Some(v.clamp(0.0, 1.0));
    }
    if rng.random_bool(0.3) {
        record.canonical_links.insert("Paris".into(), "Paris".into());
        record.canonical_links.insert("John Smith\t\"x\"".into(), "John_Smith".into());
    }
    record.flags = ExtractorFlags {
        in_minie_d: rng.random_bool(0.5),
        in_minie_a: rng.random_bool(0.5),
        dropped_all_optional_adverbials: rng.random_bool(0.5),
        dropped_all_optional_prepositions: rng.random_bool(0.5),
        processed_conjunction_subject: rng.random_bool(0.5),
        processed_conjunction_relation: rng.random_bool(0.5),
        processed_conjunction_object: rng.random_bool(0.5),
    };
    record.extraction_index = index;
    record
}
