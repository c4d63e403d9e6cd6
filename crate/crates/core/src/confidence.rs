//! Confidence scoring: feature extraction, L2-regularized logistic
//! regression and bucketed calibration.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::sentence::{AnnotatedSentence, TokenIndex};
use crate::spate::constituent_head;
use crate::triple::{lemmatized_relation, ClauseType, Constituent, ExtractionRecord, ExtractionType};

/// Feature names in model order.
pub const FEATURE_NAMES: [&str; 30] = [
    "sentence-length",
    "extraction-length",
    "clause-type-sv",
    "clause-type-sva",
    "clause-type-svc",
    "clause-type-svo",
    "clause-type-svoo",
    "clause-type-svoa",
    "clause-type-svoc",
    "clause-type-implicit",
    "dropped-all-optional-adverbials",
    "dropped-all-optional-prepositions",
    "relation-contiguous-in-sentence",
    "subject-conjunction-pos-match",
    "has-possessive-relation",
    "has-gerund",
    "infinitive-in-subject",
    "infinitive-in-relation",
    "words-in-sentence-order",
    "contains-dep-edge",
    "processed-conjunction-subject",
    "processed-conjunction-relation",
    "processed-conjunction-object",
    "object-before-subject",
    "in-minie-d",
    "in-minie-a",
    "relation-frequent",
    "extracts-quantity",
    "extracts-time",
    "extracts-space",
];

pub const FEATURE_DIM: usize = FEATURE_NAMES.len();

pub const DEFAULT_FREQUENT_THRESHOLD: u64 = 100_000;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ConfidenceError {
    #[error("degenerate labels")]
    DegenerateLabels,
    #[error("dimension mismatch: model has {model}, features have {features}")]
    DimensionMismatch { model: usize, features: usize },
    #[error("invalid model: {0}")]
    InvalidModel(String),
    #[error("regularization must be a nonnegative number, got {0}")]
    Regularization(f64),
    #[error("need at least 2 buckets, got {0}")]
    Buckets(usize),
}

/// Lemmatized relation counts with the threshold above which a relation is
/// considered frequent.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RelationCounts {
    pub counts: BTreeMap<String, u64>,
    pub threshold: u64,
}

impl Default for RelationCounts {
    fn default() -> Self {
        RelationCounts {
            counts: BTreeMap::new(),
            threshold: DEFAULT_FREQUENT_THRESHOLD,
        }
    }
}

impl RelationCounts {
    pub fn is_frequent(&self, relation: &str) -> bool {
        self.counts.get(relation).copied().unwrap_or(0) >= self.threshold
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureVector {
    pub sentence_length: u32,
    pub extraction_length: u32,
    /// Position of the clause indicator: SV..SVOC, then implicit.
    pub clause_type: usize,
    pub dropped_all_optional_adverbials: bool,
    pub dropped_all_optional_prepositions: bool,
    pub relation_contiguous_in_sentence: bool,
    pub subject_conjunction_pos_match: bool,
    pub has_possessive_relation: bool,
    pub has_gerund: bool,
    pub infinitive_in_subject: bool,
    pub infinitive_in_relation: bool,
    pub words_in_sentence_order: bool,
    pub contains_dep_edge: bool,
    pub processed_conjunction_subject: bool,
    pub processed_conjunction_relation: bool,
    pub processed_conjunction_object: bool,
    pub object_before_subject: bool,
    pub in_minie_d: bool,
    pub in_minie_a: bool,
    pub relation_frequent: bool,
    pub extracts_quantity: bool,
    pub extracts_time: bool,
    pub extracts_space: bool,
}

fn b(v: bool) -> f64 {
    if v {
        1.0
    } else {
        0.0
    }
}

impl FeatureVector {
    pub fn values(&self) -> [f64; FEATURE_DIM] {
        let mut out = [0.0; FEATURE_DIM];
        out[0] = self.sentence_length as f64;
        out[1] = self.extraction_length as f64;
        out[2 + self.clause_type.min(7)] = 1.0;
        let flags = [
            self.dropped_all_optional_adverbials,
            self.dropped_all_optional_prepositions,
            self.relation_contiguous_in_sentence,
            self.subject_conjunction_pos_match,
            self.has_possessive_relation,
            self.has_gerund,
            self.infinitive_in_subject,
            self.infinitive_in_relation,
            self.words_in_sentence_order,
            self.contains_dep_edge,
            self.processed_conjunction_subject,
            self.processed_conjunction_relation,
            self.processed_conjunction_object,
            self.object_before_subject,
            self.in_minie_d,
            self.in_minie_a,
            self.relation_frequent,
            self.extracts_quantity,
            self.extracts_time,
            self.extracts_space,
        ];
        for (i, f) in flags.into_iter().enumerate() {
            out[10 + i] = b(f);
        }
        out
    }
}

fn clause_index(t: &ExtractionType) -> usize {
    match t {
        ExtractionType::Clause(c) => ClauseType::ALL.iter().position(|x| x == c).unwrap_or(7),
        ExtractionType::Implicit(_) => 7,
    }
}

fn has_infinitive(c: &Constituent, sentence: &AnnotatedSentence) -> bool {
    let tags: Vec<&str> = c
        .tokens()
        .filter_map(|t| sentence.token(t))
        .map(|t| t.pos.as_str())
        .collect();
    tags.windows(2).any(|w| w[0] == "TO" && w[1].starts_with("VB"))
}

fn relation_contiguous(record: &ExtractionRecord, sentence: &AnnotatedSentence) -> bool {
    let rel: Vec<&str> = record.relation.tokens().map(|t| sentence.surface(t)).collect();
    if rel.is_empty() {
        return false;
    }
    let words: Vec<&str> = sentence.tokens.iter().map(|t| t.surface.as_str()).collect();
    words.windows(rel.len()).any(|w| w == rel.as_slice())
}

fn conjunction_pos_match(record: &ExtractionRecord, sentence: &AnnotatedSentence) -> bool {
    let Some(head) = constituent_head(sentence, &record.subject.token_set()) else {
        return true;
    };
    let prefix = |t: TokenIndex| -> String {
        sentence.token(t).map(|t| t.pos.chars().take(2).collect()).unwrap_or_default()
    };
    let head_prefix = prefix(head);
    sentence
        .depgraph
        .children(head)
        .filter(|(_, l)| *l == "conj")
        .all(|(c, _)| prefix(c) == head_prefix)
}

pub fn extract_features(record: &ExtractionRecord, sentence: &AnnotatedSentence, freqs: &RelationCounts) -> FeatureVector {
    let triple: BTreeSet<TokenIndex> = record.triple_tokens();
    let order: Vec<TokenIndex> = record
        .subject
        .tokens()
        .chain(record.relation.tokens())
        .chain(record.object.tokens())
        .collect();
    let pos_of = |t: TokenIndex| sentence.token(t).map(|t| t.pos.as_str()).unwrap_or("");
    let max_subject = record.subject.tokens().max();
    let min_object = record.object.tokens().min();
    FeatureVector {
        sentence_length: sentence.len() as u32,
        extraction_length: (record.subject.len() + record.relation.len() + record.object.len()) as u32,
        clause_type: clause_index(&record.extraction_type),
        dropped_all_optional_adverbials: record.flags.dropped_all_optional_adverbials,
        dropped_all_optional_prepositions: record.flags.dropped_all_optional_prepositions,
        relation_contiguous_in_sentence: relation_contiguous(record, sentence),
        subject_conjunction_pos_match: conjunction_pos_match(record, sentence),
        has_possessive_relation: record.relation.tokens().any(|t| matches!(pos_of(t), "POS" | "PRP$" | "WP$")),
        has_gerund: triple.iter().any(|&t| pos_of(t) == "VBG"),
        infinitive_in_subject: has_infinitive(&record.subject, sentence),
        infinitive_in_relation: has_infinitive(&record.relation, sentence),
        words_in_sentence_order: order.windows(2).all(|w| w[0] <= w[1]),
        contains_dep_edge: sentence
            .depgraph
            .edges()
            .iter()
            .any(|e| e.label == "dep" && triple.contains(&e.gov) && triple.contains(&e.dep)),
        processed_conjunction_subject: record.flags.processed_conjunction_subject,
        processed_conjunction_relation: record.flags.processed_conjunction_relation,
        processed_conjunction_object: record.flags.processed_conjunction_object,
        object_before_subject: matches!((min_object, max_subject), (Some(o), Some(s)) if o < s),
        in_minie_d: record.flags.in_minie_d,
        in_minie_a: record.flags.in_minie_a,
        relation_frequent: freqs.is_frequent(&lemmatized_relation(record, sentence)),
        extracts_quantity: !record.quantities.is_empty(),
        extracts_time: record.has_temporal(),
        extracts_space: record.has_spatial(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfidenceModel {
    pub weights: Vec<f64>,
    pub bias: f64,
    pub reg: f64,
    pub means: Vec<f64>,
    pub scales: Vec<f64>,
    pub feature_names: Vec<String>,
}

impl ConfidenceModel {
    /// All-zero model over the standard feature set; scores 0.5 everywhere.
    pub fn zero() -> Self {
        ConfidenceModel {
            weights: vec![0.0; FEATURE_DIM],
            bias: 0.0,
            reg: 0.0,
            means: vec![0.0; FEATURE_DIM],
            scales: vec![1.0; FEATURE_DIM],
            feature_names: FEATURE_NAMES.iter().map(|s| s.to_string()).collect(),
        }
    }

    pub fn check(&self) -> Result<(), ConfidenceError> {
        let d = self.weights.len();
        if self.means.len() != d || self.scales.len() != d || self.feature_names.len() != d {
            return Err(ConfidenceError::InvalidModel("field lengths differ".into()));
        }
        if self.scales.iter().any(|s| !(s.is_finite() && *s > 0.0)) {
            return Err(ConfidenceError::InvalidModel("scales must be positive".into()));
        }
        if self.reg.is_nan() || self.reg < 0.0 {
            return Err(ConfidenceError::InvalidModel("negative regularization".into()));
        }
        Ok(())
    }

    pub fn from_json(text: &str) -> Result<Self, ConfidenceError> {
        let model: ConfidenceModel =
            serde_json::from_str(text).map_err(|e| ConfidenceError::InvalidModel(e.to_string()))?;
        model.check()?;
        Ok(model)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("model serializes")
    }

    fn margin(&self, x: &[f64]) -> f64 {
        self.weights
            .iter()
            .zip(x)
            .zip(self.means.iter().zip(&self.scales))
            .map(|((w, x), (m, s))| w * (x - m) / s)
            .sum::<f64>()
            + self.bias
    }
}

pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// log(1 + exp(z)) without overflow.
fn softplus(z: f64) -> f64 {
    if z > 0.0 {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    }
}

pub fn score(model: &ConfidenceModel, features: &[f64]) -> Result<f64, ConfidenceError> {
    if features.len() != model.weights.len() {
        return Err(ConfidenceError::DimensionMismatch {
            model: model.weights.len(),
            features: features.len(),
        });
    }
    Ok(sigmoid(model.margin(features)))
}

pub fn score_features(model: &ConfidenceModel, features: &FeatureVector) -> Result<f64, ConfidenceError> {
    score(model, &features.values())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainOptions {
    pub tolerance: f64,
    pub max_iterations: usize,
}

impl Default for TrainOptions {
    fn default() -> Self {
        TrainOptions {
            tolerance: 1e-6,
            max_iterations: 200_000,
        }
    }
}

/// Standardized design matrix and labels.
struct Problem {
    x: Vec<Vec<f64>>,
    y: Vec<f64>,
    reg: f64,
}

impl Problem {
    /// Objective and gradient at `theta = [w..., b]`.
    fn eval(&self, theta: &[f64]) -> (f64, Vec<f64>) {
        let d = theta.len() - 1;
        let n = self.x.len() as f64;
        let mut grad = vec![0.0; d + 1];
        let mut loss = 0.0;
        for (row, &y) in self.x.iter().zip(&self.y) {
            let z = row.iter().zip(theta).map(|(a, w)| a * w).sum::<f64>() + theta[d];
            loss += softplus(z) - y * z;
            let r = sigmoid(z) - y;
            for (g, a) in grad.iter_mut().zip(row) {
                *g += r * a;
            }
            grad[d] += r;
        }
        let mut obj = loss / n;
        for (g, w) in grad.iter_mut().zip(theta) {
            *g = *g / n + self.reg * w;
            obj += 0.5 * self.reg * w * w;
        }
        (obj, grad)
    }
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Trains on raw feature rows. Standardization constants come from the
/// training rows; zero-variance dimensions keep scale 1.
pub fn train_rows(
    rows: &[Vec<f64>],
    labels: &[bool],
    reg: f64,
    feature_names: &[String],
    options: TrainOptions,
) -> Result<ConfidenceModel, ConfidenceError> {
    if !reg.is_finite() || reg < 0.0 {
        return Err(ConfidenceError::Regularization(reg));
    }
    if rows.is_empty() || labels.iter().all(|&l| l) || labels.iter().all(|&l| !l) || rows.len() != labels.len() {
        return Err(ConfidenceError::DegenerateLabels);
    }
    let d = feature_names.len();
    if let Some(bad) = rows.iter().find(|r| r.len() != d) {
        return Err(ConfidenceError::DimensionMismatch { model: d, features: bad.len() });
    }
    let n = rows.len() as f64;
    let means: Vec<f64> = (0..d).map(|j| rows.iter().map(|r| r[j]).sum::<f64>() / n).collect();
    let scales: Vec<f64> = (0..d)
        .map(|j| {
            let var = rows.iter().map(|r| (r[j] - means[j]).powi(2)).sum::<f64>() / n;
            let sd = var.sqrt();
            if sd > 0.0 && sd.is_finite() {
                sd
            } else {
                1.0
            }
        })
        .collect();
    let problem = Problem {
        x: rows
            .iter()
            .map(|r| (0..d).map(|j| (r[j] - means[j]) / scales[j]).collect())
            .collect(),
        y: labels.iter().map(|&l| b(l)).collect(),
        reg,
    };

    let mut theta = vec![0.0; d + 1];
    let (mut obj, mut grad) = problem.eval(&theta);
    let mut step = 1.0;
    let mut prev: Option<(Vec<f64>, Vec<f64>)> = None;
    for _ in 0..options.max_iterations {
        if norm(&grad) <= options.tolerance {
            break;
        }
        if let Some((pt, pg)) = &prev {
            let s: Vec<f64> = theta.iter().zip(pt).map(|(a, b)| a - b).collect();
            let yv: Vec<f64> = grad.iter().zip(pg).map(|(a, b)| a - b).collect();
            let sy: f64 = s.iter().zip(&yv).map(|(a, b)| a * b).sum();
            let ss: f64 = s.iter().map(|a| a * a).sum();
            if sy > 0.0 && ss > 0.0 {
                step = (ss / sy).clamp(1e-10, 1e10);
            }
        }
        let gg: f64 = grad.iter().map(|g| g * g).sum();
        let mut t = step;
        let (next, next_obj, next_grad) = loop {
            let cand: Vec<f64> = theta.iter().zip(&grad).map(|(w, g)| w - t * g).collect();
            let (o, g) = problem.eval(&cand);
            if o <= obj - 1e-4 * t * gg || t < 1e-16 {
                break (cand, o, g);
            }
            t *= 0.5;
        };
        prev = Some((std::mem::replace(&mut theta, next), std::mem::replace(&mut grad, next_grad)));
        obj = next_obj;
    }
    let bias = theta[d];
    theta.truncate(d);
    Ok(ConfidenceModel {
        weights: theta,
        bias,
        reg,
        means,
        scales,
        feature_names: feature_names.to_vec(),
    })
}

/// Trains on the standard feature set.
pub fn train(labeled: &[(FeatureVector, bool)], reg: f64) -> Result<ConfidenceModel, ConfidenceError> {
    let rows: Vec<Vec<f64>> = labeled.iter().map(|(f, _)| f.values().to_vec()).collect();
    let labels: Vec<bool> = labeled.iter().map(|(_, l)| *l).collect();
    let names: Vec<String> = FEATURE_NAMES.iter().map(|s| s.to_string()).collect();
    train_rows(&rows, &labels, reg, &names, TrainOptions::default())
}

/// Mean log-loss of the model on the given rows.
pub fn log_loss(model: &ConfidenceModel, rows: &[Vec<f64>], labels: &[bool]) -> Result<f64, ConfidenceError> {
    let mut total = 0.0;
    for (r, &l) in rows.iter().zip(labels) {
        score(model, r)?;
        let z = model.margin(r);
        total += softplus(z) - b(l) * z;
    }
    Ok(total / rows.len().max(1) as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Bucket {
    pub lower: f64,
    pub upper: f64,
    pub count: u64,
    pub correct: u64,
    pub precision: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Calibration {
    pub buckets: Vec<Bucket>,
    /// Pearson correlation between bucket midpoints and precisions over
    /// non-empty buckets.
    pub correlation: Option<f64>,
}

pub fn bucket_index(score: f64, k: usize) -> usize {
    ((score.clamp(0.0, 1.0) * k as f64).floor() as usize).min(k - 1)
}

pub fn pearson(xs: &[f64], ys: &[f64]) -> Option<f64> {
    let n = xs.len();
    if n < 2 || ys.len() != n {
        return None;
    }
    let mx = xs.iter().sum::<f64>() / n as f64;
    let my = ys.iter().sum::<f64>() / n as f64;
    let cov: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let vx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let vy: f64 = ys.iter().map(|y| (y - my).powi(2)).sum();
    if vx == 0.0 || vy == 0.0 {
        return None;
    }
    Some(cov / (vx * vy).sqrt())
}

pub fn bucket_precision(scored: &[(f64, bool)], k: usize) -> Result<Calibration, ConfidenceError> {
    if k < 2 {
        return Err(ConfidenceError::Buckets(k));
    }
    let mut counts = vec![(0u64, 0u64); k];
    for &(s, label) in scored {
        let c = &mut counts[bucket_index(s, k)];
        c.0 += 1;
        c.1 += u64::from(label);
    }
    let buckets: Vec<Bucket> = counts
        .iter()
        .enumerate()
        .map(|(i, &(count, correct))| Bucket {
            lower: i as f64 / k as f64,
            upper: (i + 1) as f64 / k as f64,
            count,
            correct,
            precision: (count > 0).then(|| correct as f64 / count as f64),
        })
        .collect();
    let (mids, precs): (Vec<f64>, Vec<f64>) = buckets
        .iter()
        .filter_map(|b| b.precision.map(|p| ((b.lower + b.upper) / 2.0, p)))
        .unzip();
    Ok(Calibration {
        correlation: pearson(&mids, &precs),
        buckets,
    })
}
