use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::Args;
use oie_corpus::pipeline::{PipelineConfig, Stage};
use oie_corpus::postprocess::BePolicy;
use oie_corpus::Strictness;
use serde::Deserialize;

pub const DEFAULT_REG: f64 = 1e-2;

/// Flags shared by every subcommand. Each one has a config-file key of the
/// same name; flags given on the command line win.
#[derive(Debug, Clone, Default, Args)]
pub struct Options {
    /// Input file (repeatable)
    #[arg(long = "input", short = 'i', value_name = "FILE")]
    pub input: Vec<PathBuf>,
    /// Output directory
    #[arg(long, short = 'o', value_name = "DIR")]
    pub out: Option<PathBuf>,
    /// Redirect map, TSV source<TAB>target
    #[arg(long, value_name = "FILE")]
    pub redirects: Option<PathBuf>,
    /// Page titles, one per line
    #[arg(long, value_name = "FILE")]
    pub titles: Option<PathBuf>,
    /// Confidence model JSON
    #[arg(long, value_name = "FILE")]
    pub model: Option<PathBuf>,
    /// Knowledge base TSV (repeatable)
    #[arg(long = "kb", value_name = "FILE")]
    pub kb: Vec<PathBuf>,
    /// Meta-facts TSV subject<TAB>relation<TAB>object<TAB>predicate<TAB>value
    #[arg(long = "meta-facts", value_name = "FILE")]
    pub meta_facts: Option<PathBuf>,
    /// Worker threads
    #[arg(long, value_name = "N")]
    pub jobs: Option<usize>,
    /// Abort on the first malformed line (default)
    #[arg(long, conflicts_with = "lenient")]
    pub strict: bool,
    /// Skip malformed lines and count them
    #[arg(long)]
    pub lenient: bool,
    /// Comma-separated prefix of ingest,spate,postprocess,confidence,tier,profile,align
    #[arg(long, value_name = "LIST")]
    pub stages: Option<String>,
    /// Config file with the same keys as the flags
    #[arg(long, value_name = "FILE")]
    pub config: Option<PathBuf>,
    /// Rows per table in reports
    #[arg(long = "top-k", value_name = "N")]
    pub top_k: Option<usize>,
    /// Occurrences above which a relation counts as frequent
    #[arg(long = "frequent-threshold", value_name = "N")]
    pub frequent_threshold: Option<u64>,
    /// When the "be" filter drops a triple: both-typed or any-typed
    #[arg(long = "be-policy", value_name = "POLICY")]
    pub be_policy: Option<String>,
    /// L2 regularization for train-confidence
    #[arg(long, value_name = "X")]
    pub reg: Option<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(untagged)]
enum OneOrMany<T> {
    One(T),
    Many(Vec<T>),
}

impl<T> OneOrMany<T> {
    fn into_vec(self) -> Vec<T> {
        match self {
            OneOrMany::One(x) => vec![x],
            OneOrMany::Many(v) => v,
        }
    }
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "kebab-case")]
struct FileConfig {
    input: Option<OneOrMany<PathBuf>>,
    out: Option<PathBuf>,
    redirects: Option<PathBuf>,
    titles: Option<PathBuf>,
    model: Option<PathBuf>,
    kb: Option<OneOrMany<PathBuf>>,
    meta_facts: Option<PathBuf>,
    jobs: Option<usize>,
    strict: Option<bool>,
    lenient: Option<bool>,
    stages: Option<OneOrMany<String>>,
    top_k: Option<usize>,
    frequent_threshold: Option<u64>,
    be_policy: Option<String>,
    reg: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct Settings {
    pub pipeline: PipelineConfig,
    pub reg: f64,
}

fn load_file(path: &Path) -> Result<FileConfig> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let mut cfg: FileConfig = toml::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
    // relative paths in a config file are relative to the file
    let base = path.parent().unwrap_or(Path::new(""));
    let fix = |p: &mut PathBuf| {
        if p.is_relative() {
            *p = base.join(&*p);
        }
    };
    let fix_many = |v: &mut Option<OneOrMany<PathBuf>>| {
        if let Some(v) = v {
            match v {
                OneOrMany::One(p) => fix(p),
                OneOrMany::Many(ps) => ps.iter_mut().for_each(fix),
            }
        }
    };
    fix_many(&mut cfg.input);
    fix_many(&mut cfg.kb);
    for p in [&mut cfg.out, &mut cfg.redirects, &mut cfg.titles, &mut cfg.model, &mut cfg.meta_facts]
        .into_iter()
        .flatten()
    {
        fix(p);
    }
    Ok(cfg)
}

impl Options {
    /// Merges flags over the config file over defaults.
    pub fn resolve(&self) -> Result<Settings> {
        let file = match &self.config {
            Some(p) => load_file(p)?,
            None => FileConfig::default(),
        };
        let defaults = PipelineConfig::default();
        let pick_vec = |flag: &Vec<PathBuf>, key: Option<OneOrMany<PathBuf>>| {
            if flag.is_empty() {
                key.map(OneOrMany::into_vec).unwrap_or_default()
            } else {
                flag.clone()
            }
        };

        let strictness = if self.strict {
            Strictness::Strict
        } else if self.lenient {
            Strictness::Lenient
        } else {
            match (file.strict, file.lenient) {
                (Some(true), Some(true)) => bail!("config sets both strict and lenient"),
                (_, Some(true)) | (Some(false), None) => Strictness::Lenient,
                _ => Strictness::Strict,
            }
        };
        let stages = match (&self.stages, file.stages) {
            (Some(s), _) => Stage::parse_list(s)?,
            (None, Some(s)) => Stage::parse_list(&s.into_vec().join(","))?,
            (None, None) => defaults.stages.clone(),
        };
        let be_policy = match self.be_policy.clone().or(file.be_policy) {
            None => defaults.be_policy,
            Some(s) => match BePolicy::parse(&s) {
                Some(p) => p,
                None => bail!("unknown be-policy {s:?}; expected both-typed or any-typed"),
            },
        };
        let reg = self.reg.or(file.reg).unwrap_or(DEFAULT_REG);
        if !(reg >= 0.0 && reg.is_finite()) {
            bail!("reg must be a finite number >= 0");
        }

        let pipeline = PipelineConfig {
            inputs: pick_vec(&self.input, file.input),
            out: self.out.clone().or(file.out).unwrap_or(defaults.out),
            redirects: self.redirects.clone().or(file.redirects),
            titles: self.titles.clone().or(file.titles),
            model: self.model.clone().or(file.model),
            kb: pick_vec(&self.kb, file.kb),
            meta_facts: self.meta_facts.clone().or(file.meta_facts),
            strictness,
            jobs: self.jobs.or(file.jobs).unwrap_or(defaults.jobs),
            stages,
            top_k: self.top_k.or(file.top_k).unwrap_or(defaults.top_k),
            frequent_threshold: self
                .frequent_threshold
                .or(file.frequent_threshold)
                .unwrap_or(defaults.frequent_threshold),
            be_policy,
        };
        Ok(Settings { pipeline, reg })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flags_override_file_keys() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.toml");
        std::fs::write(
            &path,
            "input = [\"a.jsonl\", \"b.jsonl\"]\nout = \"res\"\njobs = 3\nlenient = true\nstages = \"ingest,spate\"\n",
        )
        .unwrap();
        let opts = Options {
            config: Some(path),
            jobs: Some(5),
            ..Options::default()
        };
        let s = opts.resolve().unwrap();
        assert_eq!(s.pipeline.jobs, 5);
        assert_eq!(s.pipeline.inputs, vec![dir.path().join("a.jsonl"), dir.path().join("b.jsonl")]);
        assert_eq!(s.pipeline.out, dir.path().join("res"));
        assert_eq!(s.pipeline.strictness, Strictness::Lenient);
        assert_eq!(s.pipeline.stages, vec![Stage::Ingest, Stage::Spate]);

        let opts = Options { strict: true, ..opts };
        assert_eq!(opts.resolve().unwrap().pipeline.strictness, Strictness::Strict);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.toml");
        std::fs::write(&path, "inputs = \"a\"\n").unwrap();
        let opts = Options {
            config: Some(path),
            ..Options::default()
        };
        assert!(opts.resolve().is_err());
    }

    #[test]
    fn defaults_without_config() {
        let s = Options::default().resolve().unwrap();
        assert_eq!(s.pipeline, PipelineConfig::default());
        assert_eq!(s.reg, DEFAULT_REG);
        let bad = Options {
            be_policy: Some("never".into()),
            ..Options::default()
        };
        assert!(bad.resolve().is_err());
    }
}
