//! Classification of triples into the full, clean and linked tiers.

use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::ingest::TitleSet;
use crate::sentence::{AnnotatedSentence, TokenIndex, WikiLink};
use crate::triple::{Constituent, ExtractionRecord};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TierReason {
    PronounArgument,
    DeterminerArgument,
    WhArgument,
    SplitLink,
    SplitEntity,
    EmptyObject,
    NonConceptArgument,
}

impl TierReason {
    pub fn as_str(self) -> &'static str {
        match self {
            TierReason::PronounArgument => "pronoun-argument",
            TierReason::DeterminerArgument => "determiner-argument",
            TierReason::WhArgument => "wh-argument",
            TierReason::SplitLink => "split-link",
            TierReason::SplitEntity => "split-entity",
            TierReason::EmptyObject => "empty-object",
            TierReason::NonConceptArgument => "non-concept-argument",
        }
    }
}

impl fmt::Display for TierReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TierVerdict {
    pub clean: bool,
    pub linked: bool,
    pub reasons: Vec<TierReason>,
}

/// The link whose anchor tokens are exactly `tokens`.
pub fn exact_link<'s>(sentence: &'s AnnotatedSentence, tokens: &BTreeSet<TokenIndex>) -> Option<&'s WikiLink> {
    if tokens.is_empty() {
        return None;
    }
    sentence
        .link_anchors()
        .into_iter()
        .find(|(_, anchor)| anchor == tokens)
        .map(|(link, _)| link)
}

fn is_entity_run(sentence: &AnnotatedSentence, tokens: &BTreeSet<TokenIndex>) -> bool {
    let (Some(&first), Some(&last)) = (tokens.first(), tokens.last()) else {
        return false;
    };
    sentence.ner_run(first) == Some((first, last)) && tokens.len() == (last - first + 1) as usize
}

fn token_surface(sentence: &AnnotatedSentence, tokens: &BTreeSet<TokenIndex>) -> String {
    tokens.iter().map(|&t| sentence.surface(t)).collect::<Vec<_>>().join(" ")
}

fn is_concept(sentence: &AnnotatedSentence, constituent: &Constituent, titles: &TitleSet) -> bool {
    let tokens = constituent.token_set();
    !tokens.is_empty()
        && (exact_link(sentence, &tokens).is_some()
            || is_entity_run(sentence, &tokens)
            || titles.contains(&token_surface(sentence, &tokens)))
}

fn non_concept_reason(sentence: &AnnotatedSentence, constituent: &Constituent) -> TierReason {
    let tags: Vec<&str> = constituent
        .tokens()
        .filter_map(|t| sentence.token(t))
        .map(|t| t.pos.as_str())
        .collect();
    if tags.iter().any(|p| matches!(*p, "PRP" | "PRP$")) {
        TierReason::PronounArgument
    } else if tags.iter().any(|p| matches!(*p, "WP" | "WDT" | "WP$")) {
        TierReason::WhArgument
    } else if tags.contains(&"DT") {
        TierReason::DeterminerArgument
    } else {
        TierReason::NonConceptArgument
    }
}

fn split_across(record: &ExtractionRecord, span: &BTreeSet<TokenIndex>) -> bool {
    record
        .constituents()
        .iter()
        .filter(|c| c.tokens().any(|t| span.contains(&t)))
        .count()
        > 1
}

pub fn classify(record: &ExtractionRecord, sentence: &AnnotatedSentence, titles: &TitleSet) -> TierVerdict {
    let mut reasons = BTreeSet::new();
    if record.object.tokens().next().is_none() {
        reasons.insert(TierReason::EmptyObject);
    }
    for arg in [&record.subject, &record.object] {
        if arg.tokens().next().is_some() && !is_concept(sentence, arg, titles) {
            reasons.insert(non_concept_reason(sentence, arg));
        }
    }
    if sentence.link_anchors().iter().any(|(_, a)| split_across(record, a)) {
        reasons.insert(TierReason::SplitLink);
    }
    let entity_split = sentence
        .ner_runs()
        .into_iter()
        .any(|(first, last)| split_across(record, &(first..=last).collect()));
    if entity_split {
        reasons.insert(TierReason::SplitEntity);
    }
    let clean = reasons.is_empty();
    let linked = clean
        && [&record.subject, &record.object]
            .iter()
            .all(|c| exact_link(sentence, &c.token_set()).is_some());
    TierVerdict {
        clean,
        linked,
        reasons: reasons.into_iter().collect(),
    }
}
