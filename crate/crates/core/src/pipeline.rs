//! End-to-end corpus construction.
//!
//! Articles are the unit of parallel work. Each stage is a pure function of
//! an article's sentences and records, except for the relation frequency
//! table used by confidence scoring, which is computed from all
//! postprocessed records in between. Outputs are sorted by (article id,
//! sentence number, extraction index) before writing, so they do not depend
//! on the number of workers.

use std::collections::BTreeMap;
use std::fmt;
use std::fs::{self, File};
use std::io::{self, BufReader, Read, Write};
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::confidence::{self, ConfidenceModel, RelationCounts};
use crate::ingest::{
    self, canonicalize_link, parse_document, write_group, IngestError, ParsedDocument, ReadError, RedirectMap,
    SentenceGroup, Strictness, TitleSet,
};
use crate::kb::{self, AlignmentReport, MetaFacts, NamedKb};
use crate::postprocess::{self, BePolicy, Verdict};
use crate::profile::{ProfileAccumulator, RelationFrequencies};
use crate::sentence::AnnotatedSentence;
use crate::spate;
use crate::tier::{self, TierVerdict};
use crate::triple::{self, ExtractionRecord};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Stage {
    Ingest,
    Spate,
    Postprocess,
    Confidence,
    Tier,
    Profile,
    Align,
}

impl Stage {
    pub const ALL: [Stage; 7] = [
        Stage::Ingest,
        Stage::Spate,
        Stage::Postprocess,
        Stage::Confidence,
        Stage::Tier,
        Stage::Profile,
        Stage::Align,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Stage::Ingest => "ingest",
            Stage::Spate => "spate",
            Stage::Postprocess => "postprocess",
            Stage::Confidence => "confidence",
            Stage::Tier => "tier",
            Stage::Profile => "profile",
            Stage::Align => "align",
        }
    }

    pub fn parse(s: &str) -> Option<Stage> {
        Stage::ALL.into_iter().find(|st| st.as_str() == s)
    }

    /// Parses a comma-separated stage list.
    pub fn parse_list(s: &str) -> Result<Vec<Stage>, PipelineError> {
        s.split(',')
            .map(str::trim)
            .filter(|p| !p.is_empty())
            .map(|p| Stage::parse(p).ok_or_else(|| PipelineError::Config(format!("unknown stage {p:?}"))))
            .collect()
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("{}: {source}", path.display())]
    Read {
        path: PathBuf,
        #[source]
        source: ReadError,
    },
    #[error("stage {stage}: {context}: {detail}")]
    Stage {
        stage: Stage,
        context: String,
        detail: String,
    },
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> PipelineError + '_ {
    move |source| PipelineError::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn read_err(path: &Path) -> impl FnOnce(ReadError) -> PipelineError + '_ {
    move |source| PipelineError::Read {
        path: path.to_path_buf(),
        source,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub inputs: Vec<PathBuf>,
    pub out: PathBuf,
    pub redirects: Option<PathBuf>,
    pub titles: Option<PathBuf>,
    pub model: Option<PathBuf>,
    pub kb: Vec<PathBuf>,
    pub meta_facts: Option<PathBuf>,
    pub strictness: Strictness,
    pub jobs: usize,
    pub stages: Vec<Stage>,
    pub top_k: usize,
    pub frequent_threshold: u64,
    pub be_policy: BePolicy,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            inputs: Vec::new(),
            out: PathBuf::from("out"),
            redirects: None,
            titles: None,
            model: None,
            kb: Vec::new(),
            meta_facts: None,
            strictness: Strictness::Strict,
            jobs: 1,
            stages: Stage::ALL.to_vec(),
            top_k: 3,
            frequent_threshold: confidence::DEFAULT_FREQUENT_THRESHOLD,
            be_policy: BePolicy::BothTyped,
        }
    }
}

impl PipelineConfig {
    pub fn enabled(&self, stage: Stage) -> bool {
        self.stages.contains(&stage)
    }

    /// Checks the configuration before any input is read.
    pub fn validate(&self) -> Result<(), PipelineError> {
        if self.jobs < 1 {
            return Err(PipelineError::Config("jobs must be at least 1".into()));
        }
        if self.inputs.is_empty() {
            return Err(PipelineError::Config("no input files".into()));
        }
        if self.stages.is_empty() || self.stages.iter().enumerate().any(|(i, s)| *s != Stage::ALL[i]) {
            let list: Vec<&str> = self.stages.iter().map(|s| s.as_str()).collect();
            return Err(PipelineError::Config(format!(
                "stages must be a prefix of ingest,spate,postprocess,confidence,tier,profile,align; got {}",
                list.join(",")
            )));
        }
        let require = |stage: Stage, path: &Option<PathBuf>, flag: &str| -> Result<(), PipelineError> {
            if !self.enabled(stage) {
                return Ok(());
            }
            match path {
                None => Err(PipelineError::Config(format!("stage {stage} needs --{flag}"))),
                Some(p) if !p.is_file() => Err(PipelineError::Config(format!(
                    "stage {stage}: {} is not a readable file",
                    p.display()
                ))),
                Some(_) => Ok(()),
            }
        };
        require(Stage::Confidence, &self.model, "model")?;
        require(Stage::Tier, &self.titles, "titles")?;
        if self.enabled(Stage::Align) && self.kb.is_empty() {
            return Err(PipelineError::Config("stage align needs --kb".into()));
        }
        let mut files: Vec<&PathBuf> = self.inputs.iter().chain(&self.kb).collect();
        files.extend(self.redirects.iter().chain(&self.meta_facts));
        if let Some(p) = files.into_iter().find(|p| !p.is_file()) {
            return Err(PipelineError::Config(format!("{} is not a readable file", p.display())));
        }
        Ok(())
    }
}

/// Per-stage accounting: `emitted + rejected + filtered == input`.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct StageCounts {
    pub stage: Option<Stage>,
    pub unit: String,
    pub input: u64,
    pub emitted: u64,
    pub rejected: u64,
    pub filtered: u64,
}

impl StageCounts {
    fn new(stage: Stage, unit: &str) -> Self {
        StageCounts {
            stage: Some(stage),
            unit: unit.into(),
            ..Default::default()
        }
    }

    pub fn balanced(&self) -> bool {
        self.emitted + self.rejected + self.filtered == self.input
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InputDigest {
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RejectedLine {
    pub file: String,
    pub line: usize,
    pub reason: ingest::ReasonCode,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    pub inputs: Vec<InputDigest>,
    pub config: PipelineConfig,
    pub stages: Vec<StageCounts>,
    pub ingest_rejects: Vec<RejectedLine>,
    pub warnings: BTreeMap<String, u64>,
    pub outputs: Vec<String>,
}

pub fn sha256_file(path: &Path) -> Result<String, PipelineError> {
    let mut file = File::open(path).map_err(io_err(path))?;
    let mut hasher = Sha256::new();
    let mut buf = vec![0u8; 1 << 16];
    loop {
        let n = file.read(&mut buf).map_err(io_err(path))?;
        if n == 0 {
            break;
        }
        hasher.update(&buf[..n]);
    }
    Ok(hex::encode(hasher.finalize()))
}

/// Writes `bytes` to `path` through a temporary file in the same directory.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), PipelineError> {
    let dir = path.parent().filter(|d| !d.as_os_str().is_empty()).unwrap_or(Path::new("."));
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(io_err(dir))?;
    tmp.write_all(bytes).map_err(io_err(path))?;
    tmp.as_file().sync_all().map_err(io_err(path))?;
    tmp.persist(path).map_err(|e| PipelineError::Io {
        path: path.to_path_buf(),
        source: e.error,
    })?;
    Ok(())
}

pub fn read_document(path: &Path, strictness: Strictness) -> Result<ParsedDocument, PipelineError> {
    let file = File::open(path).map_err(io_err(path))?;
    parse_document(BufReader::new(file), strictness).map_err(read_err(path))
}

pub fn read_redirects(path: &Path, strictness: Strictness) -> Result<(RedirectMap, Vec<IngestError>), PipelineError> {
    let file = File::open(path).map_err(io_err(path))?;
    RedirectMap::from_tsv(BufReader::new(file), strictness).map_err(read_err(path))
}

pub fn read_titles(path: &Path) -> Result<TitleSet, PipelineError> {
    let file = File::open(path).map_err(io_err(path))?;
    TitleSet::from_reader(BufReader::new(file)).map_err(io_err(path))
}

pub fn read_model(path: &Path) -> Result<ConfidenceModel, PipelineError> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    ConfidenceModel::from_json(&text).map_err(|e| PipelineError::Config(format!("{}: {e}", path.display())))
}

pub fn read_kb(path: &Path, strictness: Strictness) -> Result<NamedKb, PipelineError> {
    let file = File::open(path).map_err(io_err(path))?;
    let (index, rejects) = kb::load_kb(BufReader::new(file), strictness).map_err(read_err(path))?;
    for r in rejects {
        log::warn!("{}: skipping {r}", path.display());
    }
    let name = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| path.display().to_string());
    Ok(NamedKb { name, index })
}

pub fn read_meta_facts(path: &Path, strictness: Strictness) -> Result<MetaFacts, PipelineError> {
    let file = File::open(path).map_err(io_err(path))?;
    let (meta, rejects) = kb::load_meta_facts(BufReader::new(file), strictness).map_err(read_err(path))?;
    for r in rejects {
        log::warn!("{}: skipping {r}", path.display());
    }
    Ok(meta)
}

pub fn read_relfreq(path: &Path) -> Result<RelationFrequencies, PipelineError> {
    let file = File::open(path).map_err(io_err(path))?;
    RelationFrequencies::from_tsv(BufReader::new(file)).map_err(read_err(path))
}

#[derive(Debug, Clone, PartialEq)]
pub struct Rejected {
    pub record: ExtractionRecord,
    pub stage: Stage,
    pub reasons: Vec<String>,
}

/// A sentence with its surviving records, records dropped along the way,
/// and tier verdicts once the tier stage has run.
#[derive(Debug, Clone, PartialEq)]
pub struct ProcessedGroup {
    pub sentence: AnnotatedSentence,
    pub records: Vec<ExtractionRecord>,
    pub verdicts: Vec<Option<TierVerdict>>,
    pub rejected: Vec<Rejected>,
}

#[derive(Debug, Default, Clone)]
struct Tally {
    unrepairable_links: u64,
    redirect_cycles: u64,
    be_filtered: u64,
}

impl Tally {
    fn merge(mut self, o: Tally) -> Tally {
        self.unrepairable_links += o.unrepairable_links;
        self.redirect_cycles += o.redirect_cycles;
        self.be_filtered += o.be_filtered;
        self
    }
}

struct Resources {
    redirects: RedirectMap,
    titles: Option<TitleSet>,
    model: Option<ConfidenceModel>,
    kbs: Vec<NamedKb>,
    meta: Option<MetaFacts>,
}

/// Self-linking, link canonicalization, annotation and postprocessing for
/// the sentences of one article.
fn process_article(
    config: &PipelineConfig,
    res: &Resources,
    groups: Vec<SentenceGroup>,
) -> Result<(Vec<ProcessedGroup>, Tally), PipelineError> {
    let mut tally = Tally::default();
    let mut sentences: Vec<AnnotatedSentence> = Vec::with_capacity(groups.len());
    let mut records: Vec<Vec<ExtractionRecord>> = Vec::with_capacity(groups.len());
    for g in groups {
        sentences.push(g.sentence);
        records.push(g.records);
    }
    if let Some(title) = sentences.iter().find_map(|s| s.article_title.clone()) {
        ingest::self_link_first_phrase(&mut sentences, &title);
    }

    let mut out = Vec::with_capacity(sentences.len());
    for (sentence, recs) in sentences.into_iter().zip(records) {
        let mut canonical = BTreeMap::new();
        for (link, _) in sentence.link_anchors() {
            let target = match canonicalize_link(&link.target, &res.redirects) {
                Ok(t) => t,
                Err(e) => match config.strictness {
                    Strictness::Strict => {
                        return Err(PipelineError::Stage {
                            stage: Stage::Ingest,
                            context: format!("article {} sentence {}", sentence.article_id, sentence.sentence_number),
                            detail: e.to_string(),
                        })
                    }
                    Strictness::Lenient => {
                        log::warn!("{e}; keeping the link target as is");
                        tally.redirect_cycles += 1;
                        link.target.clone()
                    }
                },
            };
            canonical.insert(link.target.clone(), target);
        }

        let mut kept = Vec::with_capacity(recs.len());
        let mut rejected = Vec::new();
        for mut record in recs {
            let tokens = record.triple_tokens();
            for tok in tokens.iter().filter_map(|&t| sentence.token(t)) {
                if let Some(link) = &tok.link {
                    record
                        .canonical_links
                        .insert(link.target.clone(), canonical[&link.target].clone());
                }
            }
            if config.enabled(Stage::Spate) {
                record = spate::annotate(&sentence, &record);
            }
            if config.enabled(Stage::Postprocess) {
                if let Verdict::Drop(reason) = postprocess::filter_be_mismatch_with(&record, &sentence, config.be_policy) {
                    tally.be_filtered += 1;
                    rejected.push(Rejected {
                        record,
                        stage: Stage::Postprocess,
                        reasons: vec![reason.to_string()],
                    });
                    continue;
                }
                let r = postprocess::rearrange_links(&record, &sentence);
                if r.unrepairable_link {
                    tally.unrepairable_links += 1;
                }
                record = r.record;
            }
            kept.push(record);
        }
        let n = kept.len();
        out.push(ProcessedGroup {
            sentence,
            records: kept,
            verdicts: vec![None; n],
            rejected,
        });
    }
    Ok((out, tally))
}

fn score_and_classify(
    config: &PipelineConfig,
    res: &Resources,
    counts: &RelationCounts,
    group: &mut ProcessedGroup,
) -> Result<(), PipelineError> {
    for (record, verdict) in group.records.iter_mut().zip(group.verdicts.iter_mut()) {
        if let (true, Some(model)) = (config.enabled(Stage::Confidence), &res.model) {
            let f = confidence::extract_features(record, &group.sentence, counts);
            let s = confidence::score_features(model, &f).map_err(|e| PipelineError::Stage {
                stage: Stage::Confidence,
                context: format!("record {:?}", record.key()),
                detail: e.to_string(),
            })?;
            record.confidence = Some(s);
        }
        if let (true, Some(titles)) = (config.enabled(Stage::Tier), &res.titles) {
            *verdict = Some(tier::classify(record, &group.sentence, titles));
        }
    }
    Ok(())
}

/// Triple line of a reject stream: the record plus `reason` and `stage`.
pub fn serialize_reject(r: &Rejected) -> String {
    let mut line = triple::serialize(&r.record);
    line.pop();
    let reasons = serde_json::to_string(&r.reasons).expect("strings serialize");
    line.push_str(&format!(",\"reason\":{reasons},\"stage\":\"{}\"}}", r.stage));
    line
}

fn render_groups<'a>(groups: impl IntoIterator<Item = (&'a AnnotatedSentence, Vec<&'a ExtractionRecord>)>) -> Vec<u8> {
    let mut buf = Vec::new();
    for (sentence, records) in groups {
        if records.is_empty() {
            continue;
        }
        let owned: Vec<ExtractionRecord> = records.into_iter().cloned().collect();
        write_group(&mut buf, sentence, &owned).expect("writing to memory");
    }
    buf
}

fn render_rejects(groups: &[ProcessedGroup]) -> Vec<u8> {
    let mut buf = Vec::new();
    for g in groups {
        let mut lines: Vec<(u32, String)> = g
            .rejected
            .iter()
            .map(|r| (r.record.extraction_index, serialize_reject(r)))
            .collect();
        for (r, v) in g.records.iter().zip(&g.verdicts) {
            if let Some(v) = v.as_ref().filter(|v| !v.clean) {
                let rej = Rejected {
                    record: r.clone(),
                    stage: Stage::Tier,
                    reasons: v.reasons.iter().map(|c| c.as_str().to_string()).collect(),
                };
                lines.push((r.extraction_index, serialize_reject(&rej)));
            }
        }
        if lines.is_empty() {
            continue;
        }
        lines.sort_by_key(|(i, _)| *i);
        buf.extend_from_slice(ingest::serialize_sentence(&g.sentence).as_bytes());
        buf.push(b'\n');
        for (_, l) in lines {
            buf.extend_from_slice(l.as_bytes());
            buf.push(b'\n');
        }
    }
    buf
}

/// Summary of a finished run.
#[derive(Debug, Clone, PartialEq)]
pub struct RunSummary {
    pub manifest: Manifest,
    pub groups: Vec<ProcessedGroup>,
}

pub const OUT_OPIEC: &str = "opiec.jsonl";
pub const OUT_CLEAN: &str = "clean.jsonl";
pub const OUT_LINKED: &str = "linked.jsonl";
pub const OUT_REJECTS: &str = "rejects.jsonl";
pub const OUT_REPORT_JSON: &str = "report.json";
pub const OUT_REPORT_TXT: &str = "report.txt";
pub const OUT_RELFREQ: &str = "relfreq.tsv";
pub const OUT_ALIGN_JSON: &str = "alignment.json";
pub const OUT_ALIGN_TXT: &str = "alignment.txt";
pub const OUT_MANIFEST: &str = "manifest.json";

pub fn run(config: &PipelineConfig) -> Result<RunSummary, PipelineError> {
    config.validate()?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(config.jobs)
        .build()
        .map_err(|e| PipelineError::Config(e.to_string()))?;
    pool.install(|| run_in_pool(config))
}

fn run_in_pool(config: &PipelineConfig) -> Result<RunSummary, PipelineError> {
    let strict = config.strictness;
    let mut digests = Vec::new();
    let aux = config
        .redirects
        .iter()
        .chain(&config.titles)
        .chain(&config.model)
        .chain(&config.kb)
        .chain(&config.meta_facts);
    for path in config.inputs.iter().chain(aux) {
        digests.push(InputDigest {
            path: path.display().to_string(),
            sha256: sha256_file(path)?,
        });
    }

    let mut redirects = RedirectMap::new();
    if let Some(p) = &config.redirects {
        let (map, rejects) = read_redirects(p, strict)?;
        for r in rejects {
            log::warn!("{}: skipping {r}", p.display());
        }
        redirects = map;
    }
    let res = Resources {
        redirects,
        titles: match (&config.titles, config.enabled(Stage::Tier)) {
            (Some(p), true) => Some(read_titles(p)?),
            _ => None,
        },
        model: match (&config.model, config.enabled(Stage::Confidence)) {
            (Some(p), true) => Some(read_model(p)?),
            _ => None,
        },
        kbs: if config.enabled(Stage::Align) {
            config.kb.iter().map(|p| read_kb(p, strict)).collect::<Result<_, _>>()?
        } else {
            Vec::new()
        },
        meta: match (&config.meta_facts, config.enabled(Stage::Align)) {
            (Some(p), true) => Some(read_meta_facts(p, strict)?),
            _ => None,
        },
    };
    if let Some(model) = &res.model {
        if model.weights.len() != confidence::FEATURE_DIM {
            return Err(PipelineError::Config(format!(
                "model has {} weights, expected {}",
                model.weights.len(),
                confidence::FEATURE_DIM
            )));
        }
    }

    // ingest
    let mut ingest_counts = StageCounts::new(Stage::Ingest, "lines");
    let mut ingest_rejects = Vec::new();
    let mut all_groups: Vec<SentenceGroup> = Vec::new();
    for path in &config.inputs {
        let doc = read_document(path, strict)?;
        ingest_counts.input += doc.stats.lines as u64;
        ingest_counts.emitted += (doc.stats.sentences + doc.stats.extractions) as u64;
        ingest_counts.rejected += doc.stats.rejected as u64;
        for r in &doc.stats.rejects {
            ingest_rejects.push(RejectedLine {
                file: path.display().to_string(),
                line: r.line,
                reason: r.reason,
                detail: r.detail.clone(),
            });
        }
        all_groups.extend(doc.groups);
    }
    all_groups.sort_by_key(|g| (g.sentence.article_id, g.sentence.sentence_number));
    for g in &mut all_groups {
        g.records.sort_by_key(|r| r.extraction_index);
    }
    let mut articles: Vec<Vec<SentenceGroup>> = Vec::new();
    for g in all_groups {
        match articles.last_mut() {
            Some(a) if a[0].sentence.article_id == g.sentence.article_id => a.push(g),
            _ => articles.push(vec![g]),
        }
    }
    let input_records: u64 = articles.iter().flatten().map(|g| g.records.len() as u64).sum();

    let processed: Vec<(Vec<ProcessedGroup>, Tally)> = articles
        .into_par_iter()
        .map(|a| process_article(config, &res, a))
        .collect::<Result<_, _>>()?;
    let mut tally = Tally::default();
    let mut groups: Vec<ProcessedGroup> = Vec::new();
    for (g, t) in processed {
        groups.extend(g);
        tally = tally.merge(t);
    }
    let kept: u64 = groups.iter().map(|g| g.records.len() as u64).sum();

    let mut stages = vec![ingest_counts];
    let passthrough = |stage: Stage, n: u64| StageCounts {
        input: n,
        emitted: n,
        ..StageCounts::new(stage, "records")
    };
    if config.enabled(Stage::Spate) {
        stages.push(passthrough(Stage::Spate, input_records));
    }
    if config.enabled(Stage::Postprocess) {
        stages.push(StageCounts {
            input: input_records,
            emitted: kept,
            filtered: tally.be_filtered,
            ..StageCounts::new(Stage::Postprocess, "records")
        });
    }

    let freqs = {
        let mut f = RelationFrequencies::default();
        for g in &groups {
            for r in &g.records {
                f.add(r, &g.sentence);
            }
        }
        f
    };
    let counts = RelationCounts {
        counts: freqs.by_relation(),
        threshold: config.frequent_threshold,
    };
    groups
        .par_iter_mut()
        .try_for_each(|g| score_and_classify(config, &res, &counts, g))?;
    if config.enabled(Stage::Confidence) {
        stages.push(passthrough(Stage::Confidence, kept));
    }
    let clean: u64 = groups.iter().flat_map(|g| &g.verdicts).flatten().filter(|v| v.clean).count() as u64;
    if config.enabled(Stage::Tier) {
        stages.push(StageCounts {
            input: kept,
            emitted: clean,
            filtered: kept - clean,
            ..StageCounts::new(Stage::Tier, "records")
        });
    }

    fs::create_dir_all(&config.out).map_err(io_err(&config.out))?;
    let mut outputs = Vec::new();
    let mut emit = |name: &str, bytes: Vec<u8>| -> Result<(), PipelineError> {
        write_atomic(&config.out.join(name), &bytes)?;
        outputs.push(name.to_string());
        Ok(())
    };
    emit(OUT_OPIEC, render_groups(groups.iter().map(|g| (&g.sentence, g.records.iter().collect()))))?;
    let tier_select = |want_linked: bool| {
        render_groups(groups.iter().map(|g| {
            let rs = g
                .records
                .iter()
                .zip(&g.verdicts)
                .filter(|(_, v)| v.as_ref().is_some_and(|v| if want_linked { v.linked } else { v.clean }))
                .map(|(r, _)| r)
                .collect();
            (&g.sentence, rs)
        }))
    };
    if config.enabled(Stage::Tier) {
        emit(OUT_CLEAN, tier_select(false))?;
        emit(OUT_LINKED, tier_select(true))?;
    }
    emit(OUT_REJECTS, render_rejects(&groups))?;

    if config.enabled(Stage::Profile) {
        let acc = groups
            .par_iter()
            .map(|g| {
                let mut acc = ProfileAccumulator::new();
                for r in &g.records {
                    acc.add(r, &g.sentence);
                }
                acc
            })
            .reduce(ProfileAccumulator::new, |mut a, b| {
                a.merge(&b);
                a
            });
        let report = acc.finish(config.top_k);
        emit(OUT_REPORT_JSON, report.to_json().into_bytes())?;
        emit(OUT_REPORT_TXT, report.to_text().into_bytes())?;
        emit(OUT_RELFREQ, acc.relation_frequencies().to_tsv().into_bytes())?;
        stages.push(passthrough(Stage::Profile, kept));
    }

    if config.enabled(Stage::Align) {
        let linked: Vec<(&ExtractionRecord, &AnnotatedSentence)> = groups
            .iter()
            .flat_map(|g| {
                g.records
                    .iter()
                    .zip(&g.verdicts)
                    .filter(|(_, v)| v.as_ref().is_some_and(|v| v.linked))
                    .map(move |(r, _)| (r, &g.sentence))
            })
            .collect();
        let all: Vec<(&ExtractionRecord, &AnnotatedSentence)> = groups
            .iter()
            .flat_map(|g| g.records.iter().map(move |r| (r, &g.sentence)))
            .collect();
        let report: AlignmentReport = kb::alignment_report(&res.kbs, res.meta.as_ref(), &linked, &all, config.top_k)
            .map_err(|e| PipelineError::Stage {
                stage: Stage::Align,
                context: "linked records".into(),
                detail: e.to_string(),
            })?;
        emit(OUT_ALIGN_JSON, report.to_json().into_bytes())?;
        emit(OUT_ALIGN_TXT, report.to_text().into_bytes())?;
        stages.push(passthrough(Stage::Align, linked.len() as u64));
    }

    let mut warnings = BTreeMap::new();
    warnings.insert("unrepairable-link".to_string(), tally.unrepairable_links);
    warnings.insert("redirect-cycle".to_string(), tally.redirect_cycles);
    outputs.push(OUT_MANIFEST.to_string());
    let manifest = Manifest {
        tool: env!("CARGO_PKG_NAME").to_string(),
        version: env!("CARGO_PKG_VERSION").to_string(),
        inputs: digests,
        config: config.clone(),
        stages,
        ingest_rejects,
        warnings,
        outputs,
    };
    let text = serde_json::to_string_pretty(&manifest).expect("manifest serializes") + "\n";
    write_atomic(&config.out.join(OUT_MANIFEST), text.as_bytes())?;
    Ok(RunSummary { manifest, groups })
}

/// Records of a parsed document paired with their sentences.
pub fn document_records(doc: &ParsedDocument) -> Vec<(&ExtractionRecord, &AnnotatedSentence)> {
    doc.groups
        .iter()
        .flat_map(|g| g.records.iter().map(move |r| (r, &g.sentence)))
        .collect()
}

/// Trains a confidence model from a labeled document. Unlabeled records are
/// ignored.
pub fn train_from_document(
    doc: &ParsedDocument,
    counts: &RelationCounts,
    reg: f64,
) -> Result<ConfidenceModel, confidence::ConfidenceError> {
    let labeled: Vec<_> = doc
        .groups
        .iter()
        .flat_map(|g| {
            g.records
                .iter()
                .zip(&g.labels)
                .filter_map(move |(r, l)| l.map(|l| (confidence::extract_features(r, &g.sentence, counts), l)))
        })
        .collect();
    confidence::train(&labeled, reg)
}
