mod config;

use std::fmt::Write as _;
use std::fs;
use std::path::Path;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use oie_corpus::confidence::{self, RelationCounts};
use oie_corpus::ingest::{IngestError, SentenceGroup};
use oie_corpus::kb;
use oie_corpus::pipeline::{self, PipelineConfig};
use oie_corpus::profile::{ProfileAccumulator, RelationFrequencies};
use oie_corpus::{spate, AnnotatedSentence, ExtractionRecord, Strictness};

use crate::config::Options;

pub const OUT_MODEL: &str = "model.json";
pub const OUT_CALIBRATION: &str = "calibration.txt";
const CALIBRATION_BUCKETS: usize = 10;

#[derive(Debug, Parser)]
#[command(name = "oie-corpus", version, about = "Build, filter and profile an open information extraction corpus")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run the pipeline over annotated sentences and their extractions
    Run(Options),
    /// Corpus statistics for already processed triples
    Profile(Options),
    /// Relation frequencies by argument type pair
    Relfreq(Options),
    /// Align linked triples with knowledge bases
    Align(Options),
    /// Train the confidence model from labeled triples
    TrainConfidence(Options),
    /// Check input files and report every malformed line
    Validate(Options),
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Run(o) => cmd_run(o),
        Command::Profile(o) => cmd_profile(o),
        Command::Relfreq(o) => cmd_relfreq(o),
        Command::Align(o) => cmd_align(o),
        Command::TrainConfidence(o) => cmd_train(o),
        Command::Validate(o) => cmd_validate(o),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn read_groups(config: &PipelineConfig) -> Result<Vec<SentenceGroup>> {
    if config.inputs.is_empty() {
        bail!("no input files; pass --input");
    }
    let mut groups = Vec::new();
    for path in &config.inputs {
        let doc = pipeline::read_document(path, config.strictness)?;
        if doc.stats.rejected > 0 {
            log::warn!("{}: skipped {} malformed lines", path.display(), doc.stats.rejected);
        }
        groups.extend(doc.groups);
    }
    groups.sort_by_key(|g| (g.sentence.article_id, g.sentence.sentence_number));
    Ok(groups)
}

fn pairs(groups: &[SentenceGroup]) -> Vec<(&ExtractionRecord, &AnnotatedSentence)> {
    groups
        .iter()
        .flat_map(|g| g.records.iter().map(move |r| (r, &g.sentence)))
        .collect()
}

fn emit(out: &Path, name: &str, bytes: &[u8]) -> Result<()> {
    fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    let path = out.join(name);
    pipeline::write_atomic(&path, bytes)?;
    println!("wrote {}", path.display());
    Ok(())
}

fn cmd_run(opts: &Options) -> Result<ExitCode> {
    let settings = opts.resolve()?;
    let summary = pipeline::run(&settings.pipeline)?;
    println!("{:<12} {:>10} {:>10} {:>10} {:>10}", "stage", "input", "emitted", "rejected", "filtered");
    for s in &summary.manifest.stages {
        let name = s.stage.map(|st| st.as_str()).unwrap_or("-");
        println!("{name:<12} {:>10} {:>10} {:>10} {:>10}", s.input, s.emitted, s.rejected, s.filtered);
    }
    for (name, n) in summary.manifest.warnings.iter().filter(|(_, n)| **n > 0) {
        println!("warning {name}: {n}");
    }
    println!("outputs in {}", settings.pipeline.out.display());
    Ok(ExitCode::SUCCESS)
}

fn cmd_profile(opts: &Options) -> Result<ExitCode> {
    let config = opts.resolve()?.pipeline;
    let groups = read_groups(&config)?;
    let mut acc = ProfileAccumulator::new();
    for (r, s) in pairs(&groups) {
        acc.add(r, s);
    }
    let report = acc.finish(config.top_k);
    emit(&config.out, pipeline::OUT_REPORT_JSON, report.to_json().as_bytes())?;
    emit(&config.out, pipeline::OUT_REPORT_TXT, report.to_text().as_bytes())?;
    Ok(ExitCode::SUCCESS)
}

fn cmd_relfreq(opts: &Options) -> Result<ExitCode> {
    let config = opts.resolve()?.pipeline;
    let groups = read_groups(&config)?;
    let mut freq = RelationFrequencies::default();
    for (r, s) in pairs(&groups) {
        freq.add(r, s);
    }
    emit(&config.out, pipeline::OUT_RELFREQ, freq.to_tsv().as_bytes())?;
    Ok(ExitCode::SUCCESS)
}

fn cmd_align(opts: &Options) -> Result<ExitCode> {
    let config = opts.resolve()?.pipeline;
    if config.kb.is_empty() {
        bail!("align needs at least one --kb");
    }
    let kbs = config
        .kb
        .iter()
        .map(|p| pipeline::read_kb(p, config.strictness))
        .collect::<Result<Vec<_>, _>>()?;
    let meta = match &config.meta_facts {
        Some(p) => Some(pipeline::read_meta_facts(p, config.strictness)?),
        None => None,
    };
    let groups = read_groups(&config)?;
    let all = pairs(&groups);
    // records whose arguments are not both linked still count toward date hits
    let linked: Vec<_> = all
        .iter()
        .copied()
        .filter(|(r, s)| {
            !r.object.is_empty()
                && kb::argument_entity(r, &r.subject, s).is_some()
                && kb::argument_entity(r, &r.object, s).is_some()
        })
        .collect();
    if linked.len() < all.len() {
        log::info!("{} of {} records have both arguments linked", linked.len(), all.len());
    }
    let report = kb::alignment_report(&kbs, meta.as_ref(), &linked, &all, config.top_k)?;
    emit(&config.out, pipeline::OUT_ALIGN_JSON, report.to_json().as_bytes())?;
    emit(&config.out, pipeline::OUT_ALIGN_TXT, report.to_text().as_bytes())?;
    Ok(ExitCode::SUCCESS)
}

fn calibration_text(cal: &confidence::Calibration, loss: f64, n: usize) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "training examples {n}  log loss {loss:.6}");
    let _ = writeln!(out, "{:<14} {:>8} {:>8} {:>10}", "bucket", "count", "correct", "precision");
    for b in &cal.buckets {
        let p = b.precision.map(|p| format!("{p:.4}")).unwrap_or_else(|| "-".into());
        let _ = writeln!(out, "[{:.2}, {:.2}) {:>8} {:>8} {:>10}", b.lower, b.upper, b.count, b.correct, p);
    }
    match cal.correlation {
        Some(r) => {
            let _ = writeln!(out, "pearson r {r:.4}");
        }
        None => {
            let _ = writeln!(out, "pearson r undefined");
        }
    }
    out
}

fn cmd_train(opts: &Options) -> Result<ExitCode> {
    let settings = opts.resolve()?;
    let config = &settings.pipeline;
    let groups = read_groups(config)?;
    let mut labeled = Vec::new();
    let mut unlabeled = 0usize;
    for g in &groups {
        for (r, l) in g.records.iter().zip(&g.labels) {
            match l {
                Some(l) => labeled.push((spate::annotate(&g.sentence, r), &g.sentence, *l)),
                None => unlabeled += 1,
            }
        }
    }
    if unlabeled > 0 {
        log::warn!("ignoring {unlabeled} records without a label");
    }
    if labeled.is_empty() {
        bail!("no labeled records in the input");
    }
    let mut freq = RelationFrequencies::default();
    for (r, s, _) in &labeled {
        freq.add(r, s);
    }
    let counts = RelationCounts {
        counts: freq.by_relation(),
        threshold: config.frequent_threshold,
    };
    let features: Vec<_> = labeled
        .iter()
        .map(|(r, s, l)| (confidence::extract_features(r, s, &counts), *l))
        .collect();
    let model = confidence::train(&features, settings.reg)?;
    let rows: Vec<Vec<f64>> = features.iter().map(|(f, _)| f.values().to_vec()).collect();
    let labels: Vec<bool> = features.iter().map(|(_, l)| *l).collect();
    let loss = confidence::log_loss(&model, &rows, &labels)?;
    let scored = rows
        .iter()
        .zip(&labels)
        .map(|(x, l)| Ok((confidence::score(&model, x)?, *l)))
        .collect::<Result<Vec<_>, confidence::ConfidenceError>>()?;
    let cal = confidence::bucket_precision(&scored, CALIBRATION_BUCKETS)?;
    emit(&config.out, OUT_MODEL, model.to_json().as_bytes())?;
    emit(&config.out, OUT_CALIBRATION, calibration_text(&cal, loss, labels.len()).as_bytes())?;
    Ok(ExitCode::SUCCESS)
}

fn report_rejects(path: &Path, rejects: &[IngestError]) -> usize {
    for r in rejects {
        println!("{}: {r}", path.display());
    }
    rejects.len()
}

fn cmd_validate(opts: &Options) -> Result<ExitCode> {
    let config = opts.resolve()?.pipeline;
    let lenient = Strictness::Lenient;
    let mut problems = 0usize;
    for path in &config.inputs {
        let doc = pipeline::read_document(path, lenient)?;
        let st = &doc.stats;
        println!(
            "{}: {} lines, {} sentences, {} extractions, {} malformed",
            path.display(),
            st.lines,
            st.sentences,
            st.extractions,
            st.rejected
        );
        problems += report_rejects(path, &st.rejects);
    }
    if let Some(path) = &config.redirects {
        let (map, rejects) = pipeline::read_redirects(path, lenient)?;
        println!("{}: {} redirects, {} malformed", path.display(), map.len(), rejects.len());
        problems += report_rejects(path, &rejects);
    }
    if let Some(path) = &config.titles {
        let titles = pipeline::read_titles(path)?;
        println!("{}: {} titles", path.display(), titles.len());
    }
    if let Some(path) = &config.model {
        match pipeline::read_model(path) {
            Ok(m) if m.weights.len() == confidence::FEATURE_DIM => {
                println!("{}: model with {} features", path.display(), m.weights.len())
            }
            Ok(m) => {
                println!(
                    "{}: model has {} weights, expected {}",
                    path.display(),
                    m.weights.len(),
                    confidence::FEATURE_DIM
                );
                problems += 1;
            }
            Err(e) => {
                println!("{e}");
                problems += 1;
            }
        }
    }
    for path in &config.kb {
        let file = fs::File::open(path).with_context(|| format!("opening {}", path.display()))?;
        let (index, rejects) = kb::load_kb(std::io::BufReader::new(file), lenient)
            .with_context(|| format!("reading {}", path.display()))?;
        println!("{}: {} distinct triples, {} malformed", path.display(), index.len(), rejects.len());
        problems += report_rejects(path, &rejects);
    }
    if let Some(path) = &config.meta_facts {
        let file = fs::File::open(path).with_context(|| format!("opening {}", path.display()))?;
        let (meta, rejects) = kb::load_meta_facts(std::io::BufReader::new(file), lenient)
            .with_context(|| format!("reading {}", path.display()))?;
        println!("{}: {} meta facts, {} malformed", path.display(), meta.len(), rejects.len());
        problems += report_rejects(path, &rejects);
    }
    if problems > 0 {
        println!("{problems} problems found");
        Ok(ExitCode::FAILURE)
    } else {
        println!("ok");
        Ok(ExitCode::SUCCESS)
    }
}
