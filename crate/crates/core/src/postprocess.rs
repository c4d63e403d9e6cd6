//! Post-processing of annotated triples: the "be" type-mismatch filter and
//! repair of links split across constituents.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::sentence::{AnnotatedSentence, TokenIndex};
use crate::spate::constituent_head;
use crate::triple::{lemmatized_relation, Constituent, ExtractionRecord};

/// NER label of the constituent's head token; `None` for an empty
/// constituent.
pub fn dominant_ner<'s>(constituent: &Constituent, sentence: &'s AnnotatedSentence) -> Option<&'s str> {
    let head = constituent_head(sentence, &constituent.token_set())?;
    sentence.token(head).map(|t| t.ner.as_str())
}

/// When the "be" filter fires.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BePolicy {
    /// Drop only when both arguments are typed and the types differ.
    #[default]
    BothTyped,
    /// Also drop when exactly one argument is typed.
    AnyTyped,
}

impl BePolicy {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "both-typed" => Some(BePolicy::BothTyped),
            "any-typed" => Some(BePolicy::AnyTyped),
            _ => None,
        }
    }
}

pub const BE_MISMATCH: &str = "be-type-mismatch";

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Verdict {
    Keep,
    Drop(&'static str),
}

pub fn filter_be_mismatch(record: &ExtractionRecord, sentence: &AnnotatedSentence) -> Verdict {
    filter_be_mismatch_with(record, sentence, BePolicy::BothTyped)
}

pub fn filter_be_mismatch_with(record: &ExtractionRecord, sentence: &AnnotatedSentence, policy: BePolicy) -> Verdict {
    if lemmatized_relation(record, sentence) != "be" {
        return Verdict::Keep;
    }
    let s = dominant_ner(&record.subject, sentence).unwrap_or("O");
    let o = dominant_ner(&record.object, sentence).unwrap_or("O");
    let typed = match policy {
        BePolicy::BothTyped => s != "O" && o != "O",
        BePolicy::AnyTyped => s != "O" || o != "O",
    };
    if typed && s != o {
        Verdict::Drop(BE_MISMATCH)
    } else {
        Verdict::Keep
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Rearranged {
    pub record: ExtractionRecord,
    /// Set when some link covers both subject and object, which cannot be
    /// repaired by moving tokens.
    pub unrepairable_link: bool,
}

fn move_tokens(from: &mut Constituent, to: &mut Constituent, tokens: &BTreeSet<TokenIndex>) {
    from.remove_tokens(tokens);
    for &t in tokens {
        to.insert_token(t);
    }
}

/// Moves tokens so that no link anchor is split between adjacent
/// constituents. Relation tokens move out to the argument; when that would
/// empty the relation, the argument's anchor tokens move into the relation
/// instead.
pub fn rearrange_links(record: &ExtractionRecord, sentence: &AnnotatedSentence) -> Rearranged {
    let mut out = record.clone();
    let mut unrepairable = false;
    for (_, anchor) in sentence.link_anchors() {
        let part = |c: &Constituent| -> BTreeSet<TokenIndex> { c.tokens().filter(|t| anchor.contains(t)).collect() };
        let (in_s, in_r, in_o) = (part(&out.subject), part(&out.relation), part(&out.object));
        if !in_s.is_empty() && !in_o.is_empty() {
            unrepairable = true;
            continue;
        }
        if !in_r.is_empty() && !in_o.is_empty() {
            if out.relation.tokens().count() > in_r.len() || out.relation.markers().next().is_some() {
                move_tokens(&mut out.relation, &mut out.object, &in_r);
            } else if out.object.tokens().count() > in_o.len() || out.object.markers().next().is_some() {
                move_tokens(&mut out.object, &mut out.relation, &in_o);
            } else {
                unrepairable = true;
            }
        } else if !in_r.is_empty() && !in_s.is_empty() {
            if out.relation.tokens().count() > in_r.len() || out.relation.markers().next().is_some() {
                move_tokens(&mut out.relation, &mut out.subject, &in_r);
            } else if out.subject.tokens().count() > in_s.len() || out.subject.markers().next().is_some() {
                move_tokens(&mut out.subject, &mut out.relation, &in_s);
            } else {
                unrepairable = true;
            }
        }
    }
    Rearranged {
        record: out,
        unrepairable_link: unrepairable,
    }
}
