//! Python bindings. Sentences and records cross the boundary as their
//! JSON Lines form, reports come back as JSON strings.

use std::path::PathBuf;

use oie_corpus::confidence::{self, RelationCounts, TrainOptions, FEATURE_NAMES};
use oie_corpus::ingest::{self, TitleSet};
use oie_corpus::kb::{self, Direction, KbTriple, NamedKb};
use oie_corpus::pipeline::{self, PipelineConfig, Stage};
use oie_corpus::postprocess::{self, BePolicy, Verdict};
use oie_corpus::profile::{ProfileAccumulator, RelationFrequencies};
use oie_corpus::{spate, tier, triple, AnnotatedSentence, ExtractionRecord, Strictness};
use pyo3::exceptions::{PyIOError, PyValueError};
use pyo3::prelude::*;

fn value_err(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn strictness(strict: bool) -> Strictness {
    if strict {
        Strictness::Strict
    } else {
        Strictness::Lenient
    }
}

#[pyclass(name = "Sentence", module = "oie_corpus", frozen, skip_from_py_object)]
#[derive(Clone)]
pub struct Sentence {
    inner: AnnotatedSentence,
}

#[pymethods]
impl Sentence {
    #[staticmethod]
    fn from_json(line: &str) -> PyResult<Self> {
        let doc = ingest::parse_str(line, Strictness::Strict).map_err(value_err)?;
        match doc.groups.into_iter().next() {
            Some(g) if g.records.is_empty() => Ok(Sentence { inner: g.sentence }),
            _ => Err(PyValueError::new_err("expected one sentence line")),
        }
    }

    fn to_json(&self) -> String {
        ingest::serialize_sentence(&self.inner)
    }

    #[getter]
    fn article_id(&self) -> u64 {
        self.inner.article_id
    }

    #[getter]
    fn sentence_number(&self) -> u32 {
        self.inner.sentence_number
    }

    #[getter]
    fn article_title(&self) -> Option<String> {
        self.inner.article_title.clone()
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }

    /// `(surface, lemma, pos, ner)` of a 1-based token.
    fn token(&self, index: u32) -> PyResult<(String, String, String, String)> {
        let t = self
            .inner
            .token(index)
            .ok_or_else(|| PyValueError::new_err(format!("no token {index}")))?;
        Ok((t.surface.clone(), t.lemma.clone(), t.pos.clone(), t.ner.clone()))
    }

    fn text(&self) -> String {
        (1..=self.inner.len() as u32)
            .map(|i| self.inner.surface(i))
            .collect::<Vec<_>>()
            .join(" ")
    }

    fn __repr__(&self) -> String {
        format!(
            "Sentence(article_id={}, sentence_number={}, tokens={})",
            self.inner.article_id,
            self.inner.sentence_number,
            self.inner.len()
        )
    }
}

#[pyclass(name = "Record", module = "oie_corpus", frozen, eq, skip_from_py_object)]
#[derive(Clone, PartialEq)]
pub struct Record {
    inner: ExtractionRecord,
}

#[pymethods]
impl Record {
    #[staticmethod]
    fn from_json(line: &str) -> PyResult<Self> {
        triple::deserialize(line).map(|inner| Record { inner }).map_err(value_err)
    }

    fn to_json(&self) -> String {
        triple::serialize(&self.inner)
    }

    #[getter]
    fn article_id(&self) -> u64 {
        self.inner.article_id
    }

    #[getter]
    fn sentence_number(&self) -> u32 {
        self.inner.sentence_number
    }

    #[getter]
    fn extraction_index(&self) -> u32 {
        self.inner.extraction_index
    }

    #[getter]
    fn confidence(&self) -> Option<f64> {
        self.inner.confidence
    }

    #[getter]
    fn subject(&self) -> Vec<u32> {
        self.inner.subject.tokens().collect()
    }

    #[getter]
    fn relation(&self) -> Vec<u32> {
        self.inner.relation.tokens().collect()
    }

    #[getter]
    fn object(&self) -> Vec<u32> {
        self.inner.object.tokens().collect()
    }

    #[getter]
    fn dropped_words(&self) -> Vec<u32> {
        self.inner.dropped_words.clone()
    }

    #[getter]
    fn num_annotations(&self) -> usize {
        self.inner.spate.len()
    }

    fn has_spatial(&self) -> bool {
        self.inner.has_spatial()
    }

    fn has_temporal(&self) -> bool {
        self.inner.has_temporal()
    }

    fn __repr__(&self) -> String {
        format!(
            "Record(article_id={}, sentence_number={}, extraction_index={})",
            self.inner.article_id, self.inner.sentence_number, self.inner.extraction_index
        )
    }
}

type Group = (Sentence, Vec<Record>, Vec<Option<bool>>);

/// Parses JSON Lines text into `(sentence, records, labels)` groups. A
/// label is None unless the triple line carries one.
#[pyfunction]
#[pyo3(signature = (text, strict = true))]
fn parse_document(text: &str, strict: bool) -> PyResult<Vec<Group>> {
    let doc = ingest::parse_str(text, strictness(strict)).map_err(value_err)?;
    Ok(doc
        .groups
        .into_iter()
        .map(|g| {
            let records = g.records.into_iter().map(|inner| Record { inner }).collect();
            (Sentence { inner: g.sentence }, records, g.labels)
        })
        .collect())
}

#[pyfunction]
fn annotate(sentence: &Sentence, record: &Record) -> Record {
    Record {
        inner: spate::annotate(&sentence.inner, &record.inner),
    }
}

#[pyfunction]
fn triple_text(sentence: &Sentence, record: &Record) -> (String, String, String) {
    let r = &record.inner;
    let s = &sentence.inner;
    (triple::surface(&r.subject, s), triple::surface(&r.relation, s), triple::surface(&r.object, s))
}

#[pyfunction]
fn lemmatized_relation(sentence: &Sentence, record: &Record) -> String {
    triple::lemmatized_relation(&record.inner, &sentence.inner)
}

/// Reason string when the "be" filter drops the record, else None.
#[pyfunction]
#[pyo3(signature = (sentence, record, policy = "both-typed"))]
fn be_filter(sentence: &Sentence, record: &Record, policy: &str) -> PyResult<Option<String>> {
    let policy = BePolicy::parse(policy).ok_or_else(|| PyValueError::new_err(format!("unknown policy {policy:?}")))?;
    Ok(match postprocess::filter_be_mismatch_with(&record.inner, &sentence.inner, policy) {
        Verdict::Keep => None,
        Verdict::Drop(reason) => Some(reason.to_string()),
    })
}

/// Returns the repaired record and whether a link spans subject and object.
#[pyfunction]
fn rearrange_links(sentence: &Sentence, record: &Record) -> (Record, bool) {
    let out = postprocess::rearrange_links(&record.inner, &sentence.inner);
    (Record { inner: out.record }, out.unrepairable_link)
}

/// `(clean, linked, reasons)` for the record given the page titles.
#[pyfunction]
fn classify(sentence: &Sentence, record: &Record, titles: Vec<String>) -> (bool, bool, Vec<String>) {
    let titles: TitleSet = titles.iter().map(String::as_str).collect();
    let v = tier::classify(&record.inner, &sentence.inner, &titles);
    (v.clean, v.linked, v.reasons.iter().map(|r| r.as_str().to_string()).collect())
}

#[pyfunction]
fn feature_names() -> Vec<&'static str> {
    FEATURE_NAMES.to_vec()
}

#[pyfunction]
fn features(sentence: &Sentence, record: &Record) -> Vec<f64> {
    confidence::extract_features(&record.inner, &sentence.inner, &RelationCounts::default())
        .values()
        .to_vec()
}

#[pyclass(name = "ConfidenceModel", module = "oie_corpus", frozen, skip_from_py_object)]
#[derive(Clone)]
pub struct Model {
    inner: confidence::ConfidenceModel,
}

#[pymethods]
impl Model {
    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        confidence::ConfidenceModel::from_json(text)
            .map(|inner| Model { inner })
            .map_err(value_err)
    }

    #[staticmethod]
    fn zero() -> Self {
        Model {
            inner: confidence::ConfidenceModel::zero(),
        }
    }

    /// Fits the model on raw feature rows.
    #[staticmethod]
    #[pyo3(signature = (rows, labels, reg = 0.01))]
    fn train(py: Python<'_>, rows: Vec<Vec<f64>>, labels: Vec<bool>, reg: f64) -> PyResult<Self> {
        let d = rows.first().map_or(0, Vec::len);
        let names: Vec<String> = if d == FEATURE_NAMES.len() {
            FEATURE_NAMES.iter().map(|s| s.to_string()).collect()
        } else {
            (0..d).map(|i| format!("f{i}")).collect()
        };
        py.detach(|| confidence::train_rows(&rows, &labels, reg, &names, TrainOptions::default()))
            .map(|inner| Model { inner })
            .map_err(value_err)
    }

    fn to_json(&self) -> String {
        self.inner.to_json()
    }

    #[getter]
    fn weights(&self) -> Vec<f64> {
        self.inner.weights.clone()
    }

    #[getter]
    fn bias(&self) -> f64 {
        self.inner.bias
    }

    fn score(&self, features: Vec<f64>) -> PyResult<f64> {
        confidence::score(&self.inner, &features).map_err(value_err)
    }
}

/// Equi-width buckets `(lower, upper, count, correct, precision)` and the
/// Pearson correlation of bucket midpoints with precision.
#[pyfunction]
#[pyo3(signature = (scores, labels, k = 10))]
#[allow(clippy::type_complexity)]
fn bucket_precision(
    scores: Vec<f64>,
    labels: Vec<bool>,
    k: usize,
) -> PyResult<(Vec<(f64, f64, u64, u64, Option<f64>)>, Option<f64>)> {
    if scores.len() != labels.len() {
        return Err(PyValueError::new_err("scores and labels differ in length"));
    }
    let scored: Vec<(f64, bool)> = scores.into_iter().zip(labels).collect();
    let cal = confidence::bucket_precision(&scored, k).map_err(value_err)?;
    let buckets = cal
        .buckets
        .iter()
        .map(|b| (b.lower, b.upper, b.count, b.correct, b.precision))
        .collect();
    Ok((buckets, cal.correlation))
}

type Pair<'py> = (PyRef<'py, Sentence>, PyRef<'py, Record>);

/// Corpus statistics as JSON.
#[pyfunction]
#[pyo3(signature = (pairs, top_k = 3))]
fn profile(pairs: Vec<Pair<'_>>, top_k: usize) -> String {
    let mut acc = ProfileAccumulator::new();
    for (s, r) in &pairs {
        acc.add(&r.inner, &s.inner);
    }
    acc.finish(top_k).to_json()
}

/// Relation frequencies as `relation<TAB>subject_type<TAB>object_type<TAB>count` lines.
#[pyfunction]
fn relation_frequencies(pairs: Vec<Pair<'_>>) -> String {
    let mut freq = RelationFrequencies::default();
    for (s, r) in &pairs {
        freq.add(&r.inner, &s.inner);
    }
    freq.to_tsv()
}

#[pyclass(name = "KbIndex", module = "oie_corpus", skip_from_py_object)]
#[derive(Clone, Default)]
pub struct Kb {
    inner: kb::KbIndex,
}

#[pymethods]
impl Kb {
    #[new]
    fn new() -> Self {
        Kb::default()
    }

    #[staticmethod]
    #[pyo3(signature = (text, strict = true))]
    fn from_tsv(text: &str, strict: bool) -> PyResult<Self> {
        let (inner, _) = kb::load_kb(text.as_bytes(), strictness(strict)).map_err(value_err)?;
        Ok(Kb { inner })
    }

    /// False when the triple was already present.
    fn insert(&mut self, subject: &str, relation: &str, object: &str) -> bool {
        self.inner.insert(KbTriple {
            subject: subject.into(),
            relation: relation.into(),
            object: object.into(),
        })
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }

    /// `(relation, "forward" | "reverse")` for every KB fact joining the two entities.
    fn hits(&self, subject: &str, object: &str) -> Vec<(String, &'static str)> {
        kb::kb_hit(&self.inner, subject, object)
            .into_iter()
            .map(|(r, d)| {
                let d = match d {
                    Direction::Forward => "forward",
                    Direction::Reverse => "reverse",
                };
                (r, d)
            })
            .collect()
    }
}

/// KB alignment report as JSON for records whose arguments are both linked.
#[pyfunction]
#[pyo3(signature = (pairs, index, top_k = 3))]
fn align(pairs: Vec<Pair<'_>>, index: &Kb, top_k: usize) -> PyResult<String> {
    let all: Vec<(&ExtractionRecord, &AnnotatedSentence)> = pairs.iter().map(|(s, r)| (&r.inner, &s.inner)).collect();
    let linked: Vec<_> = all
        .iter()
        .copied()
        .filter(|(r, s)| {
            !r.object.is_empty()
                && kb::argument_entity(r, &r.subject, s).is_some()
                && kb::argument_entity(r, &r.object, s).is_some()
        })
        .collect();
    let named = [NamedKb {
        name: "kb".into(),
        index: index.inner.clone(),
    }];
    kb::alignment_report(&named, None, &linked, &all, top_k)
        .map(|r| r.to_json())
        .map_err(value_err)
}

/// Runs the pipeline and returns the manifest JSON.
#[pyfunction]
#[pyo3(signature = (inputs, out, *, redirects = None, titles = None, model = None, kb = Vec::new(),
                    meta_facts = None, jobs = 1, stages = None, strict = true, top_k = 3))]
#[allow(clippy::too_many_arguments)]
fn run(
    py: Python<'_>,
    inputs: Vec<PathBuf>,
    out: PathBuf,
    redirects: Option<PathBuf>,
    titles: Option<PathBuf>,
    model: Option<PathBuf>,
    kb: Vec<PathBuf>,
    meta_facts: Option<PathBuf>,
    jobs: usize,
    stages: Option<&str>,
    strict: bool,
    top_k: usize,
) -> PyResult<String> {
    let stages = match stages {
        Some(s) => Stage::parse_list(s).map_err(value_err)?,
        None => Stage::ALL.to_vec(),
    };
    let config = PipelineConfig {
        inputs,
        out,
        redirects,
        titles,
        model,
        kb,
        meta_facts,
        strictness: strictness(strict),
        jobs,
        stages,
        top_k,
        ..PipelineConfig::default()
    };
    let manifest = config.out.join(pipeline::OUT_MANIFEST);
    py.detach(|| pipeline::run(&config)).map_err(|e| match e {
        pipeline::PipelineError::Io { .. } => PyIOError::new_err(e.to_string()),
        other => value_err(other),
    })?;
    std::fs::read_to_string(&manifest).map_err(|e| PyIOError::new_err(e.to_string()))
}

#[pymodule(name = "oie_corpus")]
fn oie_corpus_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<Sentence>()?;
    m.add_class::<Record>()?;
    m.add_class::<Model>()?;
    m.add_class::<Kb>()?;
    m.add_function(wrap_pyfunction!(parse_document, m)?)?;
    m.add_function(wrap_pyfunction!(annotate, m)?)?;
    m.add_function(wrap_pyfunction!(triple_text, m)?)?;
    m.add_function(wrap_pyfunction!(lemmatized_relation, m)?)?;
    m.add_function(wrap_pyfunction!(be_filter, m)?)?;
    m.add_function(wrap_pyfunction!(rearrange_links, m)?)?;
    m.add_function(wrap_pyfunction!(classify, m)?)?;
    m.add_function(wrap_pyfunction!(feature_names, m)?)?;
    m.add_function(wrap_pyfunction!(features, m)?)?;
    m.add_function(wrap_pyfunction!(bucket_precision, m)?)?;
    m.add_function(wrap_pyfunction!(profile, m)?)?;
    m.add_function(wrap_pyfunction!(relation_frequencies, m)?)?;
    m.add_function(wrap_pyfunction!(align, m)?)?;
    m.add_function(wrap_pyfunction!(run, m)?)?;
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    Ok(())
}
