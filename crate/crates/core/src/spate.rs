//! Spatio-temporal annotation rules over the dependency parse.
//!
//! Four rule families run in a fixed order, each on the output of the
//! previous one:
//!
//! 1. temporal annotations on the whole triple (`tmod`/`advmod` children of
//!    the relation head, `prep` + `pobj` phrases, and the same rules below
//!    `xcomp` children),
//! 2. temporal annotations on arguments (temporal modifiers of nouns and
//!    adjectives inside subject or object),
//! 3. spatial annotations on the triple (the `prep` rule only) and on
//!    arguments, with NER `LOCATION` in place of temporal expressions,
//! 4. detection of arguments that are themselves temporal or spatial
//!    references.
//!
//! Triple-level rules remove the annotated words from relation and object;
//! the preposition that becomes the lexicalized predicate goes to the dropped
//! words. When the n-ary extraction has more than three constituents and one
//! argument is exactly the annotated phrase, that argument is dropped and the
//! triple is restructured from the remaining constituents.
//!
//! Every rule family is applied to a fixed point, so running it a second time
//! finds nothing left to annotate.

use std::collections::{BTreeMap, BTreeSet};

use crate::sentence::{AnnotatedSentence, TokenIndex};
use crate::triple::{
    Constituent, ExtractionRecord, NaryExtraction, Role, Slot, SpaTeAnnotation, SpaTeKind, Target,
    TimexPayload,
};

/// Dependencies not followed when collecting a triple-level phrase.
pub const TRIPLE_EXCLUDED: [&str; 7] = ["rcmod", "punct", "appos", "dep", "cc", "conj", "vmod"];
/// Dependencies not followed when collecting an argument-level phrase.
pub const ARGUMENT_EXCLUDED: [&str; 5] = ["rcmod", "punct", "appos", "cc", "conj"];
/// Dependencies through which a noun or adjective can take a temporal or
/// spatial modifier.
pub const ARGUMENT_MODIFIERS: [&str; 7] = ["amod", "acomp", "advmod", "nn", "num", "number", "tmod"];

/// Inputs shared by all rules for one extraction.
pub struct RuleContext<'a> {
    pub sentence: &'a AnnotatedSentence,
    pub nary: &'a NaryExtraction,
    pub triple: &'a ExtractionRecord,
    pub temporal_index: BTreeMap<TokenIndex, usize>,
    pub location_index: BTreeSet<TokenIndex>,
}

impl<'a> RuleContext<'a> {
    pub fn new(sentence: &'a AnnotatedSentence, triple: &'a ExtractionRecord) -> Self {
        RuleContext {
            sentence,
            nary: &triple.nary,
            triple,
            temporal_index: sentence.temporal_index(),
            location_index: sentence.location_index(),
        }
    }

    fn is_member(&self, mode: Mode, token: TokenIndex) -> bool {
        match mode {
            Mode::Temporal => self.temporal_index.contains_key(&token),
            Mode::Spatial => self.location_index.contains(&token),
        }
    }

    fn timex_payload(&self, token: TokenIndex) -> Option<TimexPayload> {
        let tx = &self.sentence.temporal_expressions[*self.temporal_index.get(&token)?];
        Some(TimexPayload {
            timex_type: tx.timex_type,
            value: tx.value.clone(),
            xml: tx.xml.clone(),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Mode {
    Temporal,
    Spatial,
}

/// Head of a token set in the dependency graph: the member that is not a
/// dependent of another member. Several such members are resolved by depth
/// in the full graph, then by index; a set with no member attached to the
/// graph falls back to its last token.
pub fn constituent_head(sentence: &AnnotatedSentence, tokens: &BTreeSet<TokenIndex>) -> Option<TokenIndex> {
    let graph = &sentence.depgraph;
    let candidates: Vec<TokenIndex> = tokens
        .iter()
        .copied()
        .filter(|&t| !matches!(graph.governor(t), Some((g, _)) if tokens.contains(&g)))
        .collect();
    if candidates.len() == 1 {
        return Some(candidates[0]);
    }
    candidates
        .iter()
        .filter_map(|&t| graph.depth(t).map(|d| (d, t)))
        .min()
        .map(|(_, t)| t)
        .or_else(|| tokens.iter().next_back().copied())
}

/// Head word of the triple's relation.
pub fn relation_head(ctx: &RuleContext<'_>) -> TokenIndex {
    let tokens = ctx.triple.relation.token_set();
    constituent_head(ctx.sentence, &tokens)
        .or_else(|| tokens.iter().next_back().copied())
        .unwrap_or(0)
}

struct Candidate {
    trigger: TokenIndex,
    predicate: Option<TokenIndex>,
    tokens: BTreeSet<TokenIndex>,
}

fn location_run(sentence: &AnnotatedSentence, token: TokenIndex) -> BTreeSet<TokenIndex> {
    match sentence.ner_run(token) {
        Some((first, last)) if sentence.token(token).is_some_and(|t| t.is_location()) => (first..=last).collect(),
        _ => BTreeSet::new(),
    }
}

fn phrase(
    ctx: &RuleContext<'_>,
    mode: Mode,
    trigger: TokenIndex,
    excluded: &[&str],
    eligible: &BTreeSet<TokenIndex>,
) -> BTreeSet<TokenIndex> {
    let mut tokens = ctx.sentence.depgraph.subtree(trigger, excluded);
    if mode == Mode::Spatial {
        tokens.extend(location_run(ctx.sentence, trigger));
    }
    tokens.retain(|t| eligible.contains(t));
    tokens
}

fn collect_triple_candidates(
    ctx: &RuleContext<'_>,
    mode: Mode,
    head: TokenIndex,
    eligible: &BTreeSet<TokenIndex>,
    out: &mut Vec<Candidate>,
    depth: usize,
) {
    if depth > ctx.sentence.len() {
        return;
    }
    let graph = &ctx.sentence.depgraph;
    for (child, label) in graph.children(head) {
        match label {
            "tmod" | "advmod" if mode == Mode::Temporal => {
                if ctx.is_member(mode, child) && eligible.contains(&child) {
                    out.push(Candidate {
                        trigger: child,
                        predicate: None,
                        tokens: phrase(ctx, mode, child, &TRIPLE_EXCLUDED, eligible),
                    });
                }
            }
            "prep" => {
                for (pobj, l) in graph.children(child) {
                    if l == "pobj" && ctx.is_member(mode, pobj) && eligible.contains(&pobj) {
                        out.push(Candidate {
                            trigger: pobj,
                            predicate: Some(child),
                            tokens: phrase(ctx, mode, pobj, &TRIPLE_EXCLUDED, eligible),
                        });
                    }
                }
            }
            "xcomp" if mode == Mode::Temporal => {
                if ctx.is_member(mode, child) && eligible.contains(&child) {
                    out.push(Candidate {
                        trigger: child,
                        predicate: None,
                        tokens: phrase(ctx, mode, child, &TRIPLE_EXCLUDED, eligible),
                    });
                }
                collect_triple_candidates(ctx, mode, child, eligible, out, depth + 1);
            }
            _ => {}
        }
    }
}

fn present_arguments(nary: &NaryExtraction, triple_tokens: &BTreeSet<TokenIndex>) -> Vec<usize> {
    nary.arguments
        .iter()
        .enumerate()
        .filter(|(_, a)| a.tokens().any(|t| triple_tokens.contains(&t)))
        .map(|(i, _)| i)
        .collect()
}

fn rebuild_constituent(role: Role, markers: Vec<String>, tokens: BTreeSet<TokenIndex>) -> Constituent {
    let slots = markers
        .into_iter()
        .map(Slot::Quantity)
        .chain(tokens.into_iter().map(Slot::Token))
        .collect();
    Constituent::new(role, slots)
}

/// Redistributes relation and object tokens after argument `dropped` of the
/// n-ary extraction has been removed: the last remaining argument becomes
/// the object, everything before it joins the relation.
fn restructure(record: &mut ExtractionRecord, nary: &NaryExtraction, remaining: &[usize]) {
    let pool_rel = record.relation.token_set();
    let pool_obj = record.object.token_set();
    let mut rel_side: BTreeSet<TokenIndex> = nary.relation.token_set();
    let mut obj_side = BTreeSet::new();
    if let Some((&last, rest)) = remaining.split_last() {
        for &i in rest {
            rel_side.extend(nary.arguments[i].tokens());
        }
        obj_side = nary.arguments[last].token_set();
    }
    obj_side.retain(|t| !rel_side.contains(t));
    let placed = |t: &TokenIndex| rel_side.contains(t) || obj_side.contains(t);

    let mut new_rel: BTreeSet<TokenIndex> = pool_rel.iter().chain(&pool_obj).filter(|t| rel_side.contains(t)).copied().collect();
    new_rel.extend(pool_rel.iter().filter(|t| !placed(t)));
    let mut new_obj: BTreeSet<TokenIndex> = pool_rel.iter().chain(&pool_obj).filter(|t| obj_side.contains(t)).copied().collect();
    new_obj.extend(pool_obj.iter().filter(|t| !placed(t)));

    let rel_markers = record.relation.markers().map(str::to_owned).collect();
    let obj_markers = record.object.markers().map(str::to_owned).collect();
    record.relation = rebuild_constituent(Role::Relation, rel_markers, new_rel);
    record.object = rebuild_constituent(Role::Object, obj_markers, new_obj);
}

#[allow(clippy::too_many_arguments)]
fn build_annotation(
    ctx: &RuleContext<'_>,
    mode: Mode,
    kind: SpaTeKind,
    target: Target,
    trigger: TokenIndex,
    predicate: Option<TokenIndex>,
    tokens: &BTreeSet<TokenIndex>,
    head_word: Option<TokenIndex>,
) -> SpaTeAnnotation {
    let core: Vec<TokenIndex> = tokens.iter().copied().filter(|&t| ctx.is_member(mode, t)).collect();
    let first = core.first().copied().unwrap_or(trigger);
    let (pre, post): (Vec<TokenIndex>, Vec<TokenIndex>) = tokens
        .iter()
        .copied()
        .filter(|&t| !ctx.is_member(mode, t))
        .partition(|&t| t < first);
    SpaTeAnnotation {
        kind,
        predicate: predicate.map(|p| ctx.sentence.surface(p).to_string()),
        core_words: core,
        pre_modifiers: pre,
        post_modifiers: post,
        timex: match mode {
            Mode::Temporal => ctx.timex_payload(trigger),
            Mode::Spatial => None,
        },
        target,
        head_word,
    }
}

/// Tries one triple-level candidate; `None` when applying it would leave the
/// triple without relation or object.
fn apply_triple_candidate(
    ctx: &RuleContext<'_>,
    mode: Mode,
    record: &ExtractionRecord,
    cand: &Candidate,
) -> Option<(ExtractionRecord, SpaTeAnnotation)> {
    if cand.tokens.is_empty() {
        return None;
    }
    let before_tokens: BTreeSet<TokenIndex> = record.relation.tokens().chain(record.object.tokens()).collect();
    let present = present_arguments(ctx.nary, &before_tokens);

    let mut out = record.clone();
    out.relation.remove_tokens(&cand.tokens);
    out.object.remove_tokens(&cand.tokens);
    let mut phrase = cand.tokens.clone();
    if let Some(p) = cand.predicate {
        phrase.insert(p);
        if before_tokens.contains(&p) && !cand.tokens.contains(&p) {
            let single = BTreeSet::from([p]);
            out.relation.remove_tokens(&single);
            out.object.remove_tokens(&single);
            out.dropped_words.push(p);
            out.dropped_words.sort_unstable();
            out.dropped_words.dedup();
        }
    }

    if 2 + present.len() > 3 {
        let matched = present.iter().copied().find(|&i| {
            let arg = &ctx.nary.arguments[i];
            arg.markers().next().is_none() && arg.token_set() == phrase
        });
        if let Some(m) = matched {
            let remaining: Vec<usize> = present.iter().copied().filter(|&i| i != m).collect();
            restructure(&mut out, ctx.nary, &remaining);
        }
    }

    if out.relation.is_empty() || (out.object.is_empty() && !record.object.is_empty()) {
        return None;
    }
    let kind = match mode {
        Mode::Temporal => SpaTeKind::TemporalTriple,
        Mode::Spatial => SpaTeKind::SpatialTriple,
    };
    let ann = build_annotation(ctx, mode, kind, Target::WholeTriple, cand.trigger, cand.predicate, &cand.tokens, None);
    out.spate.push(ann.clone());
    Some((out, ann))
}

fn triple_rules(ctx: &RuleContext<'_>, mode: Mode) -> (ExtractionRecord, Vec<SpaTeAnnotation>) {
    let mut record = ctx.triple.clone();
    let mut annotations = Vec::new();
    if record.relation.is_empty() {
        return (record, annotations);
    }
    loop {
        let step_ctx = RuleContext {
            sentence: ctx.sentence,
            nary: ctx.nary,
            triple: &record,
            temporal_index: ctx.temporal_index.clone(),
            location_index: ctx.location_index.clone(),
        };
        let head = relation_head(&step_ctx);
        let eligible: BTreeSet<TokenIndex> = record.relation.tokens().chain(record.object.tokens()).collect();
        let mut candidates = Vec::new();
        collect_triple_candidates(&step_ctx, mode, head, &eligible, &mut candidates, 0);
        candidates.sort_by_key(|c| c.trigger);
        let applied = candidates
            .iter()
            .find_map(|c| apply_triple_candidate(&step_ctx, mode, &record, c));
        match applied {
            Some((next, ann)) => {
                record = next;
                annotations.push(ann);
            }
            None => break,
        }
    }
    (record, annotations)
}

fn argument_rules(ctx: &RuleContext<'_>, mode: Mode) -> (ExtractionRecord, Vec<SpaTeAnnotation>) {
    let mut record = ctx.triple.clone();
    let mut annotations = Vec::new();
    let kind = match mode {
        Mode::Temporal => SpaTeKind::TemporalArgument,
        Mode::Spatial => SpaTeKind::SpatialArgument,
    };
    for target in [Target::Subject, Target::Object] {
        'restart: loop {
            let constituent = match target {
                Target::Subject => &record.subject,
                _ => &record.object,
            };
            let members = constituent.token_set();
            for &w in &members {
                let Some(tok) = ctx.sentence.token(w) else { continue };
                if !(tok.pos_is("NN") || tok.pos_is("JJ")) || ctx.is_member(mode, w) {
                    continue;
                }
                for (child, label) in ctx.sentence.depgraph.children(w) {
                    if !ARGUMENT_MODIFIERS.contains(&label) || !members.contains(&child) || !ctx.is_member(mode, child) {
                        continue;
                    }
                    let mut tokens = phrase(ctx, mode, child, &ARGUMENT_EXCLUDED, &members);
                    tokens.remove(&w);
                    if tokens.is_empty() {
                        continue;
                    }
                    let ann = build_annotation(ctx, mode, kind, target, child, None, &tokens, Some(w));
                    match target {
                        Target::Subject => record.subject.remove_tokens(&tokens),
                        _ => record.object.remove_tokens(&tokens),
                    }
                    record.spate.push(ann.clone());
                    annotations.push(ann);
                    continue 'restart;
                }
            }
            break;
        }
    }
    (record, annotations)
}

/// Temporal annotations on the whole triple.
pub fn annotate_temporal_triple(ctx: &RuleContext<'_>) -> (ExtractionRecord, Vec<SpaTeAnnotation>) {
    triple_rules(ctx, Mode::Temporal)
}

/// Temporal modifiers inside subject and object.
pub fn annotate_temporal_arguments(ctx: &RuleContext<'_>) -> (ExtractionRecord, Vec<SpaTeAnnotation>) {
    argument_rules(ctx, Mode::Temporal)
}

/// Spatial annotations: the `prep` rule on the triple, then spatial
/// modifiers inside subject and object.
pub fn annotate_spatial(ctx: &RuleContext<'_>) -> (ExtractionRecord, Vec<SpaTeAnnotation>) {
    let (record, mut annotations) = triple_rules(ctx, Mode::Spatial);
    let inner = RuleContext {
        sentence: ctx.sentence,
        nary: ctx.nary,
        triple: &record,
        temporal_index: ctx.temporal_index.clone(),
        location_index: ctx.location_index.clone(),
    };
    let (record, more) = argument_rules(&inner, Mode::Spatial);
    annotations.extend(more);
    (record, annotations)
}

/// Arguments that are themselves a temporal expression or a location.
pub fn detect_references(ctx: &RuleContext<'_>) -> Vec<SpaTeAnnotation> {
    let mut out = Vec::new();
    for (target, constituent) in [(Target::Subject, &ctx.triple.subject), (Target::Object, &ctx.triple.object)] {
        let tokens: Vec<TokenIndex> = constituent.tokens().collect();
        if tokens.is_empty() {
            continue;
        }
        let covering = ctx
            .sentence
            .temporal_expressions
            .iter()
            .position(|tx| tokens.iter().all(|&t| tx.contains(t)));
        if let Some(i) = covering {
            let tx = &ctx.sentence.temporal_expressions[i];
            out.push(SpaTeAnnotation {
                kind: SpaTeKind::TemporalReference,
                predicate: None,
                core_words: tokens.clone(),
                pre_modifiers: vec![],
                post_modifiers: vec![],
                timex: Some(TimexPayload {
                    timex_type: tx.timex_type,
                    value: tx.value.clone(),
                    xml: tx.xml.clone(),
                }),
                target,
                head_word: None,
            });
        }
        if tokens.iter().all(|t| ctx.location_index.contains(t)) {
            out.push(SpaTeAnnotation {
                kind: SpaTeKind::SpatialReference,
                predicate: None,
                core_words: tokens,
                pre_modifiers: vec![],
                post_modifiers: vec![],
                timex: None,
                target,
                head_word: None,
            });
        }
    }
    out
}

/// Runs all rule families in order and returns the annotated record.
pub fn annotate(sentence: &AnnotatedSentence, record: &ExtractionRecord) -> ExtractionRecord {
    type Rule = fn(&RuleContext<'_>) -> (ExtractionRecord, Vec<SpaTeAnnotation>);
    let rules: [Rule; 3] = [annotate_temporal_triple, annotate_temporal_arguments, annotate_spatial];
    let mut current = record.clone();
    for rule in rules {
        current = rule(&RuleContext::new(sentence, &current)).0;
    }
    for reference in detect_references(&RuleContext::new(sentence, &current)) {
        if !current.spate.contains(&reference) {
            current.spate.push(reference);
        }
    }
    current
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sentence::{DependencyEdge, DependencyGraph, TemporalExpression, TimexType, Token};
    use crate::triple::{ClauseType, ExtractorFlags, Modality, Polarity};

    fn sentence(words: &[(&str, &str, &str)], deps: &[(u32, u32, &str)]) -> AnnotatedSentence {
        let mut begin = 0;
        let tokens = words
            .iter()
            .enumerate()
            .map(|(i, (w, pos, ner))| {
                let t = Token {
                    index: i as u32 + 1,
                    surface: w.to_string(),
                    lemma: w.to_lowercase(),
                    pos: pos.to_string(),
                    ner: ner.to_string(),
                    begin,
                    end: begin + w.len() as u32,
                    link: None,
                };
                begin = t.end + 1;
                t
            })
            .collect();
        AnnotatedSentence {
            article_id: 1,
            sentence_number: 0,
            article_title: None,
            tokens,
            depgraph: DependencyGraph::new(
                deps.iter()
                    .map(|&(gov, dep, label)| DependencyEdge { gov, dep, label: label.into() })
                    .collect(),
            ),
            temporal_expressions: vec![],
        }
    }

    fn record(subject: &[u32], relation: &[u32], object: &[u32], args: &[&[u32]]) -> ExtractionRecord {
        let c = |role, t: &[u32]| Constituent::from_tokens(role, t.iter().copied());
        ExtractionRecord {
            article_id: 1,
            sentence_number: 0,
            extraction_index: 0,
            nary: NaryExtraction {
                subject: c(Role::Subject, subject),
                relation: c(Role::Relation, relation),
                arguments: args.iter().map(|a| c(Role::Argument, a)).collect(),
                clause_type: ClauseType::Svo.into(),
            },
            subject: c(Role::Subject, subject),
            relation: c(Role::Relation, relation),
            object: c(Role::Object, object),
            polarity: Polarity::Positive,
            negative_words: vec![],
            modality: Modality::Certainty,
            modality_words: vec![],
            attribution: None,
            quantities: vec![],
            dropped_words: vec![],
            extraction_type: ClauseType::Svo.into(),
            spate: vec![],
            confidence: None,
            canonical_links: Default::default(),
            flags: ExtractorFlags::default(),
        }
    }

    #[test]
    fn relation_head_of_single_token() {
        let s = sentence(&[("A", "NNP", "O"), ("runs", "VBZ", "O")], &[(0, 2, "root"), (2, 1, "nsubj")]);
        let r = record(&[1], &[2], &[], &[]);
        assert_eq!(relation_head(&RuleContext::new(&s, &r)), 2);
    }

    #[test]
    fn relation_head_falls_back_to_last_detached_token() {
        let s = sentence(
            &[("A", "NNP", "O"), ("x", "VB", "O"), ("y", "VB", "O"), ("B", "NNP", "O")],
            &[(0, 1, "root")],
        );
        let r = record(&[1], &[2, 3], &[4], &[&[4]]);
        assert_eq!(relation_head(&RuleContext::new(&s, &r)), 3);
    }

    #[test]
    fn no_temporal_expressions_no_change() {
        let s = sentence(
            &[("Bill", "NNP", "PERSON"), ("founded", "VBD", "O"), ("Microsoft", "NNP", "ORGANIZATION")],
            &[(0, 2, "root"), (2, 1, "nsubj"), (2, 3, "dobj")],
        );
        let r = record(&[1], &[2], &[3], &[&[3]]);
        let ctx = RuleContext::new(&s, &r);
        let (out, anns) = annotate_temporal_triple(&ctx);
        assert_eq!(out, r);
        assert!(anns.is_empty());
        assert!(annotate_temporal_arguments(&ctx).1.is_empty());
        assert!(annotate_spatial(&ctx).1.is_empty());
        assert!(detect_references(&ctx).is_empty());
    }

    #[test]
    fn temporal_modifier_outside_the_expression_is_a_premodifier() {
        // X arrived at precisely 11:59 PM
        let mut s = sentence(
            &[
                ("X", "NNP", "PERSON"),
                ("arrived", "VBD", "O"),
                ("at", "IN", "O"),
                ("precisely", "RB", "O"),
                ("11:59", "CD", "TIME"),
                ("PM", "NN", "TIME"),
            ],
            &[(0, 2, "root"), (2, 1, "nsubj"), (2, 3, "prep"), (3, 6, "pobj"), (6, 5, "num"), (6, 4, "advmod")],
        );
        s.temporal_expressions.push(TemporalExpression {
            first_token: 5,
            last_token: 6,
            timex_type: TimexType::Time,
            value: "T23:59".into(),
            xml: "<TIMEX3 tid=\"t1\" type=\"TIME\" value=\"T23:59\">11:59 PM</TIMEX3>".into(),
        });
        let mut r = record(&[1], &[2, 3], &[4, 5, 6], &[&[3, 4, 5, 6]]);
        r.extraction_type = ClauseType::Sva.into();
        let (_, anns) = annotate_temporal_triple(&RuleContext::new(&s, &r));
        // object would become empty and the n-ary has no spare argument
        assert!(anns.is_empty());

        let s2 = {
            let mut s2 = s.clone();
            s2.tokens.push(Token { index: 7, surface: "home".into(), lemma: "home".into(), pos: "NN".into(), ner: "O".into(), begin: 40, end: 44, link: None });
            s2.depgraph = DependencyGraph::new(
                s.depgraph.edges().iter().cloned().chain([DependencyEdge { gov: 2, dep: 7, label: "dobj".into() }]).collect(),
            );
            s2
        };
        let r2 = record(&[1], &[2], &[3, 4, 5, 6, 7], &[&[3, 4, 5, 6, 7]]);
        let (out, anns) = annotate_temporal_triple(&RuleContext::new(&s2, &r2));
        assert_eq!(anns.len(), 1);
        assert_eq!(anns[0].predicate.as_deref(), Some("at"));
        assert_eq!(anns[0].core_words, vec![5, 6]);
        assert_eq!(anns[0].pre_modifiers, vec![4]);
        assert_eq!(anns[0].timex.as_ref().unwrap().timex_type, TimexType::Time);
        assert_eq!(out.object.token_set(), BTreeSet::from([7]));
        assert_eq!(out.dropped_words, vec![3]);
    }

    #[test]
    fn spatial_argument_merges_location_run() {
        // X visited the New York museum
        let s = sentence(
            &[
                ("X", "NNP", "PERSON"),
                ("visited", "VBD", "O"),
                ("New", "NNP", "LOCATION"),
                ("York", "NNP", "LOCATION"),
                ("museum", "NN", "O"),
            ],
            &[(0, 2, "root"), (2, 1, "nsubj"), (2, 5, "dobj"), (5, 3, "nn"), (5, 4, "nn")],
        );
        let r = record(&[1], &[2], &[3, 4, 5], &[&[3, 4, 5]]);
        let (out, anns) = annotate_spatial(&RuleContext::new(&s, &r));
        assert_eq!(anns.len(), 1);
        assert_eq!(anns[0].kind, SpaTeKind::SpatialArgument);
        assert_eq!(anns[0].core_words, vec![3, 4]);
        assert_eq!(anns[0].head_word, Some(5));
        assert_eq!(anns[0].timex, None);
        assert_eq!(out.object.token_set(), BTreeSet::from([5]));
    }

    #[test]
    fn references_on_location_object() {
        let s = sentence(
            &[("It", "PRP", "O"), ("moved", "VBD", "O"), ("to", "TO", "O"), ("Penryn", "NNP", "LOCATION")],
            &[(0, 2, "root"), (2, 1, "nsubj"), (2, 3, "prep"), (3, 4, "pobj")],
        );
        let r = record(&[1], &[2, 3], &[4], &[&[3, 4]]);
        let out = annotate(&s, &r);
        assert_eq!(out.subject, r.subject);
        assert_eq!(out.relation, r.relation);
        assert_eq!(out.object, r.object);
        assert_eq!(out.spate.len(), 1);
        assert_eq!(out.spate[0].kind, SpaTeKind::SpatialReference);
        assert_eq!(out.spate[0].target, Target::Object);
        // applying the whole chain again adds nothing
        assert_eq!(annotate(&s, &out), out);
    }
}
