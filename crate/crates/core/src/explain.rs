//! Compiles execution traces into explanations with `#i` region tokens.
//!
//! Each node renders a partial explanation from its template, splicing the
//! partials of its dependencies verbatim. Object mentions are grounded to the
//! region with maximal IoU; the root's partial plus an answer clause is the
//! final explanation.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use crate::interp::{common_attributes, compare_holds, ExecConfig, ExecutionTrace, NodeValue, Quantifier};
use crate::program::{AtomicOp, CompareMode, Direction, OpNode, ReasoningProgram};
use crate::scene::{align_object, AlignError, Attribute, AttributeFamily, RegionSet, SceneGraph, DEFAULT_MIN_IOU};
use crate::templates::{Segment, Slot, TemplateTable, Variant};

/// What to do with an object whose best region falls below `min_iou`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum MissPolicy {
    /// Mention the object by name without a region token.
    #[default]
    DropToken,
    /// Fail the whole question.
    Fail,
}

impl MissPolicy {
    pub fn as_str(&self) -> &'static str {
        match self {
            Self::DropToken => "drop-token",
            Self::Fail => "fail",
        }
    }
}

impl core::str::FromStr for MissPolicy {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim() {
            "drop-token" | "drop" => Ok(Self::DropToken),
            "fail" | "fail-question" => Ok(Self::Fail),
            other => Err(format!("unknown grounding-miss policy `{other}`")),
        }
    }
}

pub const DEFAULT_MAX_MENTIONS: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExplainConfig {
    pub min_iou: f64,
    pub on_miss: MissPolicy,
    /// Multi-object slots list this many mentions, then "and others".
    pub max_mentions: usize,
}

impl Default for ExplainConfig {
    fn default() -> Self {
        Self {
            min_iou: DEFAULT_MIN_IOU,
            on_miss: MissPolicy::DropToken,
            max_mentions: DEFAULT_MAX_MENTIONS,
        }
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ExplainError {
    #[error("node `{node}`: slot [{slot}] cannot be filled")]
    TemplateSlot { node: String, slot: Slot },
    #[error("node `{node}`: object `{object}`: {source}")]
    Alignment {
        node: String,
        object: String,
        source: AlignError,
    },
    #[error("token {position}: region #{index} out of range for {regions} regions")]
    RegionIndexOutOfRange {
        position: usize,
        index: usize,
        regions: usize,
    },
    #[error("node `{0}` has no result in the trace")]
    MissingResult(String),
}

impl ExplainError {
    pub fn class(&self) -> &'static str {
        match self {
            Self::TemplateSlot { .. } => "TemplateSlotError",
            Self::Alignment { .. } => "AlignmentBelowThreshold",
            Self::RegionIndexOutOfRange { .. } => "RegionIndexOutOfRange",
            Self::MissingResult(_) => "MissingResult",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Token {
    Word(String),
    /// A grounded (or, under `DropToken`, ungrounded) object reference.
    /// `words` is the surface phrase, e.g. `["the", "red", "apple"]`.
    Mention {
        object_id: String,
        words: Vec<String>,
        region: Option<usize>,
    },
}

impl Token {
    fn word(w: &str) -> Self {
        Token::Word(w.to_string())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct PartialExplanation {
    pub node_id: String,
    pub tokens: Vec<Token>,
}

impl PartialExplanation {
    /// Whitespace-token surface form.
    pub fn surface(&self) -> Vec<String> {
        let mut out = Vec::new();
        for tok in &self.tokens {
            match tok {
                Token::Word(w) => out.extend(w.split_whitespace().map(ToString::to_string)),
                Token::Mention { words, region, .. } => {
                    out.extend(words.iter().flat_map(|w| w.split_whitespace()).map(ToString::to_string));
                    if let Some(i) = region {
                        out.push(format!("#{i}"));
                    }
                }
            }
        }
        out
    }

    pub fn text(&self) -> String {
        self.surface().join(" ")
    }
}

/// A flattened explanation with its grounding maps.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct GroundedExplanation {
    pub question_id: String,
    pub image_id: String,
    pub question: String,
    pub reasoning_type: String,
    pub tokens: Vec<String>,
    pub answer: String,
    /// Token position holding `#i` mapped to `i`.
    pub grounding: BTreeMap<usize, usize>,
    pub grounded_objects: BTreeMap<String, usize>,
    /// Category names of grounded objects.
    pub object_categories: BTreeMap<String, String>,
    pub operations: Vec<AtomicOp>,
    /// Attribute values the explanation asserts, for recall scoring.
    pub attributes: Vec<Attribute>,
}

impl GroundedExplanation {
    pub fn text(&self) -> String {
        self.tokens.join(" ")
    }

    pub fn region_indices(&self) -> BTreeSet<usize> {
        self.grounding.values().copied().collect()
    }
}

/// Reads `#<digits>` tokens as region references.
pub fn region_token(token: &str) -> Option<usize> {
    let digits = token.strip_prefix('#')?;
    if digits.is_empty() || !digits.bytes().all(|b| b.is_ascii_digit()) {
        return None;
    }
    digits.parse().ok()
}

/// Tokenizes on whitespace and recovers the grounding map.
pub fn parse_explanation(text: &str, regions: usize) -> Result<GroundedExplanation, ExplainError> {
    let tokens: Vec<String> = text.split_whitespace().map(ToString::to_string).collect();
    let mut grounding = BTreeMap::new();
    for (position, tok) in tokens.iter().enumerate() {
        if let Some(index) = region_token(tok) {
            if index >= regions {
                return Err(ExplainError::RegionIndexOutOfRange {
                    position,
                    index,
                    regions,
                });
            }
            grounding.insert(position, index);
        }
    }
    Ok(GroundedExplanation {
        tokens,
        grounding,
        ..Default::default()
    })
}

/// Shared read-only inputs for rendering one question.
pub struct RenderContext<'a> {
    pub templates: &'a TemplateTable,
    pub scene: &'a SceneGraph,
    pub regions: &'a RegionSet,
    pub exec: &'a ExecConfig,
    pub config: &'a ExplainConfig,
}

/// A dependency as seen by the node that consumes it.
pub struct DepInput<'a> {
    pub value: &'a NodeValue,
    pub partial: &'a PartialExplanation,
}

fn words(s: &str) -> impl Iterator<Item = Token> + '_ {
    s.split_whitespace().map(Token::word)
}

fn join_values<'v>(values: impl IntoIterator<Item = &'v str>) -> Vec<Token> {
    let values: BTreeSet<&str> = values.into_iter().collect();
    if values.is_empty() {
        return alloc::vec![Token::word("nothing")];
    }
    let mut out = Vec::new();
    for (i, v) in values.into_iter().enumerate() {
        if i > 0 {
            out.push(Token::word("and"));
        }
        out.extend(words(v));
    }
    out
}

fn object_count(value: &NodeValue) -> Option<usize> {
    match value {
        NodeValue::Objects(ids) => Some(ids.len()),
        _ => None,
    }
}

fn copula(count: Option<usize>) -> &'static str {
    match count {
        Some(n) if n > 1 => "are",
        _ => "is",
    }
}

impl RenderContext<'_> {
    fn mention(&self, node: &OpNode, object_id: &str, adjective: Option<&str>) -> Result<Token, ExplainError> {
        let obj = self
            .scene
            .object(object_id)
            .ok_or_else(|| ExplainError::MissingResult(object_id.to_string()))?;
        let region = match align_object(obj, self.regions, self.config.min_iou) {
            Ok(a) => Some(a.index),
            Err(source) => match self.config.on_miss {
                MissPolicy::DropToken => None,
                MissPolicy::Fail => {
                    return Err(ExplainError::Alignment {
                        node: node.node_id.clone(),
                        object: object_id.to_string(),
                        source,
                    })
                }
            },
        };
        let mut phrase = alloc::vec!["the".to_string()];
        phrase.extend(
            adjective
                .into_iter()
                .flat_map(str::split_whitespace)
                .map(ToString::to_string),
        );
        phrase.extend(obj.name.split_whitespace().map(ToString::to_string));
        Ok(Token::Mention {
            object_id: object_id.to_string(),
            words: phrase,
            region,
        })
    }

    /// Conjunction of mentions, or the bare category when nothing was selected.
    fn objects_phrase(
        &self,
        node: &OpNode,
        ids: &[String],
        adjective: Option<&str>,
        nominal: &str,
    ) -> Result<Vec<Token>, ExplainError> {
        let mut out = Vec::new();
        if ids.is_empty() {
            out.extend(adjective.into_iter().flat_map(words));
            out.extend(words(nominal));
            return Ok(out);
        }
        for (i, id) in ids.iter().take(self.config.max_mentions.max(1)).enumerate() {
            if i > 0 {
                out.push(Token::word("and"));
            }
            out.push(self.mention(node, id, adjective)?);
        }
        if ids.len() > self.config.max_mentions.max(1) {
            out.extend([Token::word("and"), Token::word("others")]);
        }
        Ok(out)
    }

    fn group_values(&self, ids: &[String], family: Option<&str>) -> BTreeSet<&str> {
        let family = family.map(AttributeFamily::parse);
        ids.iter()
            .filter_map(|id| self.scene.object(id))
            .flat_map(|o| o.attributes().iter())
            .filter(|a| family.is_none_or(|f| a.family == f))
            .map(|a| a.value.as_str())
            .collect()
    }

    /// Values shared by both groups under the configured quantifier.
    fn shared_values(&self, a: &NodeValue, b: &NodeValue, family: Option<&str>) -> BTreeSet<&str> {
        let (Ok(ia), Ok(ib)) = (a.objects(), b.objects()) else {
            return BTreeSet::new();
        };
        match self.exec.quantifier {
            Quantifier::Universal => {
                let fam = family.map(AttributeFamily::parse);
                let Ok(common) = common_attributes(self.scene, a, b) else {
                    return BTreeSet::new();
                };
                let common: BTreeSet<String> = common
                    .into_iter()
                    .filter(|attr| fam.is_none_or(|f| attr.family == f))
                    .map(|attr| attr.value)
                    .collect();
                self.group_values(ia, family)
                    .into_iter()
                    .filter(|v| common.contains(*v))
                    .collect()
            }
            Quantifier::Existential => {
                let right = self.group_values(ib, family);
                self.group_values(ia, family)
                    .into_iter()
                    .filter(|v| right.contains(v))
                    .collect()
            }
        }
    }
}

fn variant_for(node: &OpNode, result: &NodeValue) -> Variant {
    if let Some(rel) = &node.relation {
        return match rel.direction {
            Direction::Subject => Variant::Subject,
            Direction::Object => Variant::Object,
        };
    }
    match result {
        NodeValue::Boolean(true) => Variant::True,
        NodeValue::Boolean(false) => Variant::False,
        _ => Variant::Default,
    }
}

/// Applies the node's template to its result and dependency partials.
pub fn render_node(
    ctx: &RenderContext<'_>,
    node: &OpNode,
    result: &NodeValue,
    deps: &[DepInput<'_>],
    nominal: &str,
) -> Result<PartialExplanation, ExplainError> {
    let template = ctx.templates.get(node.op);
    let pattern = template.pattern(variant_for(node, result));
    let unfillable = |slot: Slot| ExplainError::TemplateSlot {
        node: node.node_id.clone(),
        slot,
    };
    let dep = |i: usize, slot: Slot| deps.get(i).ok_or_else(|| unfillable(slot));
    let attr = node.attribute.as_deref();

    let mut tokens = Vec::new();
    let mut i = 0;
    while i < pattern.len() {
        let slot = match &pattern[i] {
            Segment::Word(w) => {
                tokens.push(Token::word(w));
                i += 1;
                continue;
            }
            Segment::Slot(slot) => *slot,
        };
        if !slot.fillable_by(node.op) {
            return Err(unfillable(slot));
        }
        match slot {
            Slot::Obj => {
                let ids = result.objects().map_err(|_| unfillable(slot))?;
                tokens.extend(ctx.objects_phrase(node, ids, None, nominal)?);
            }
            // An attribute directly before the objects is folded into each mention.
            Slot::Attr if node.op == AtomicOp::Filter && pattern.get(i + 1) == Some(&Segment::Slot(Slot::Obj)) => {
                let ids = result.objects().map_err(|_| unfillable(slot))?;
                tokens.extend(ctx.objects_phrase(node, ids, attr, nominal)?);
                i += 1;
            }
            Slot::Attr => match node.op {
                AtomicOp::Same | AtomicOp::Different => {
                    let (a, b) = (dep(0, slot)?.value, dep(1, slot)?.value);
                    tokens.extend(join_values(ctx.shared_values(a, b, attr)));
                }
                _ => tokens.extend(words(attr.ok_or_else(|| unfillable(slot))?)),
            },
            Slot::Attr1 | Slot::Attr2 => {
                let d = dep(usize::from(slot == Slot::Attr2), slot)?;
                let ids = d.value.objects().map_err(|_| unfillable(slot))?;
                tokens.extend(join_values(ctx.group_values(ids, attr)));
            }
            Slot::Dep | Slot::Dep1 => tokens.extend(dep(0, slot)?.partial.tokens.iter().cloned()),
            Slot::Dep2 => tokens.extend(dep(1, slot)?.partial.tokens.iter().cloned()),
            Slot::Be => tokens.push(Token::word(copula(object_count(dep(0, slot)?.value)))),
            Slot::CheckExistence => {
                let count = object_count(dep(0, slot)?.value).unwrap_or(0);
                match count {
                    0 => tokens.extend(words("is no")),
                    _ => tokens.push(Token::word(copula(Some(count)))),
                }
            }
            Slot::QueryAttr => match result {
                NodeValue::Value(v) => tokens.extend(words(v)),
                _ => return Err(unfillable(slot)),
            },
            Slot::VerifyAttr => {
                let holds = result.boolean().map_err(|_| unfillable(slot))?;
                if !holds {
                    tokens.push(Token::word("not"));
                }
                tokens.extend(words(attr.ok_or_else(|| unfillable(slot))?));
            }
            Slot::FindCommon => match result {
                NodeValue::ValueList(values) if values.is_empty() => tokens.extend(words("not alike")),
                NodeValue::ValueList(values) => tokens.extend(join_values(values.iter().map(|a| a.value.as_str()))),
                _ => return Err(unfillable(slot)),
            },
            Slot::CompareAttr => {
                let comparator = node.comparator.as_ref().ok_or_else(|| unfillable(slot))?;
                let holds = match (comparator.mode, result) {
                    (CompareMode::Boolean, NodeValue::Boolean(b)) => *b,
                    _ => {
                        let (a, b) = (dep(0, slot)?.value, dep(1, slot)?.value);
                        compare_holds(
                            ctx.scene,
                            a,
                            b,
                            attr.unwrap_or_default(),
                            comparator,
                            &ctx.exec.comparators,
                        )
                        .map(|(holds, _)| holds)
                        .map_err(|_| unfillable(slot))?
                    }
                };
                if !holds {
                    tokens.push(Token::word("not"));
                }
                tokens.extend(words(&comparator.word));
            }
            Slot::Relation => {
                let rel = node.relation.as_ref().ok_or_else(|| unfillable(slot))?;
                tokens.extend(words(&rel.predicate));
            }
            Slot::Logical => tokens.push(Token::word(node.op.as_str())),
        }
        i += 1;
    }
    Ok(PartialExplanation {
        node_id: node.node_id.clone(),
        tokens,
    })
}

/// Attribute values a node asserts as true, used as recall references.
fn asserted_attributes(g: &SceneGraph, node: &OpNode, result: &NodeValue, deps: &[&NodeValue]) -> Vec<Attribute> {
    let family_on = |ids: &[String], value: &str| {
        ids.iter()
            .filter_map(|id| g.object(id))
            .find_map(|o| o.family_of(value))
    };
    let mut out = Vec::new();
    match (node.op, result) {
        (AtomicOp::Filter, NodeValue::Objects(ids)) => {
            if let Some(v) = &node.attribute {
                if let Some(f) = family_on(ids, v) {
                    out.push(Attribute::new(f, v.as_str()));
                }
            }
        }
        (AtomicOp::Query, NodeValue::Value(v)) => {
            let f = AttributeFamily::parse(node.attribute.as_deref().unwrap_or_default());
            out.push(Attribute::new(f, v.as_str()));
        }
        (AtomicOp::Verify, NodeValue::Boolean(true)) => {
            if let (Some(v), Some(NodeValue::Objects(ids))) = (&node.attribute, deps.first()) {
                if let Some(f) = family_on(ids, v) {
                    out.push(Attribute::new(f, v.as_str()));
                }
            }
        }
        (AtomicOp::Common, NodeValue::ValueList(values)) => out.extend(values.iter().cloned()),
        (AtomicOp::Same | AtomicOp::Different, _) => {
            let fam = node.attribute.as_deref().map(AttributeFamily::parse);
            let ids = deps.iter().filter_map(|d| d.objects().ok()).flatten();
            for obj in ids.filter_map(|id| g.object(id)) {
                out.extend(
                    obj.attributes()
                        .iter()
                        .filter(|a| fam.is_none_or(|f| a.family == f))
                        .cloned(),
                );
            }
        }
        (AtomicOp::Relate, _) => {
            if let Some(rel) = &node.relation {
                out.push(Attribute::new(AttributeFamily::Relation, rel.predicate.as_str()));
            }
        }
        _ => {}
    }
    out
}

/// Renders every node in topological order and closes with the answer clause.
pub fn compile_explanation(
    trace: &ExecutionTrace,
    program: &ReasoningProgram,
    ctx: &RenderContext<'_>,
) -> Result<GroundedExplanation, ExplainError> {
    let mut partials: BTreeMap<&str, PartialExplanation> = BTreeMap::new();
    let mut nominal: BTreeMap<&str, String> = BTreeMap::new();
    let mut attributes = BTreeSet::new();
    for id in program.topo_order() {
        let node = program.node(id).expect("topo order lists program nodes");
        let result = trace
            .result(id)
            .ok_or_else(|| ExplainError::MissingResult(id.clone()))?;
        let name = node
            .category
            .clone()
            .or_else(|| node.deps.first().and_then(|d| nominal.get(d.as_str()).cloned()))
            .unwrap_or_else(|| "object".to_string());
        let dep_values: Vec<&NodeValue> = node
            .deps
            .iter()
            .map(|d| trace.result(d).ok_or_else(|| ExplainError::MissingResult(d.clone())))
            .collect::<Result<_, _>>()?;
        let deps: Vec<DepInput<'_>> = node
            .deps
            .iter()
            .zip(&dep_values)
            .map(|(d, value)| DepInput {
                value,
                partial: &partials[d.as_str()],
            })
            .collect();
        let partial = render_node(ctx, node, result, &deps, &name)?;
        attributes.extend(asserted_attributes(ctx.scene, node, result, &dep_values));
        nominal.insert(id, name);
        partials.insert(id, partial);
    }

    let root = &partials[program.root()];
    let mut tokens = Vec::new();
    let mut grounding = BTreeMap::new();
    let mut grounded_objects = BTreeMap::new();
    let mut object_categories = BTreeMap::new();
    for tok in &root.tokens {
        match tok {
            Token::Word(w) => tokens.extend(w.split_whitespace().map(ToString::to_string)),
            Token::Mention {
                object_id,
                words,
                region,
            } => {
                tokens.extend(words.iter().flat_map(|w| w.split_whitespace()).map(ToString::to_string));
                if let Some(i) = region {
                    grounding.insert(tokens.len(), *i);
                    tokens.push(format!("#{i}"));
                    grounded_objects.insert(object_id.clone(), *i);
                    if let Some(obj) = ctx.scene.object(object_id) {
                        object_categories.insert(object_id.clone(), obj.name.clone());
                    }
                }
            }
        }
    }
    tokens.extend(ctx.templates.answer_clause().iter().cloned());
    tokens.extend(trace.answer.split_whitespace().map(ToString::to_string));

    Ok(GroundedExplanation {
        question_id: program.question_id.clone(),
        image_id: program.image_id.clone(),
        question: program.question.clone(),
        reasoning_type: program.reasoning_type.clone(),
        tokens,
        answer: trace.answer.clone(),
        grounding,
        grounded_objects,
        object_categories,
        operations: program.operations().into_iter().collect(),
        attributes: attributes.into_iter().collect(),
    })
}
