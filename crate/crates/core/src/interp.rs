//! Executes reasoning programs against scene graphs.
//!
//! Every operation is a pure function of the scene and its dependency results.
//! Object selections are kept as id-sorted, duplicate-free lists.

use alloc::collections::BTreeSet;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::cmp::Ordering;
use core::fmt;

use crate::program::{AtomicOp, ComparatorSpec, CompareMode, Direction, ReasoningProgram};
use crate::scene::{Attribute, AttributeFamily, SceneGraph, SceneObject};
use crate::vocab::{ComparatorTable, SynonymTable};

/// How multi-object Verify/Same/Different quantify over group members.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Quantifier {
    #[default]
    Universal,
    Existential,
}

impl Quantifier {
    pub fn as_str(&self) -> &'static str {
        match self {
            Self::Universal => "universal",
            Self::Existential => "existential",
        }
    }
}

impl core::str::FromStr for Quantifier {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "universal" => Ok(Self::Universal),
            "existential" => Ok(Self::Existential),
            other => Err(alloc::format!("unknown quantifier `{other}`")),
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct ExecConfig {
    pub quantifier: Quantifier,
    pub synonyms: SynonymTable,
    pub comparators: ComparatorTable,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ResultKind {
    Objects,
    Boolean,
    Value,
    ValueList,
}

impl fmt::Display for ResultKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Objects => "objects",
            Self::Boolean => "boolean",
            Self::Value => "value",
            Self::ValueList => "value_list",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum NodeValue {
    Objects(Vec<String>),
    Boolean(bool),
    Value(String),
    ValueList(Vec<Attribute>),
}

impl NodeValue {
    pub fn kind(&self) -> ResultKind {
        match self {
            Self::Objects(_) => ResultKind::Objects,
            Self::Boolean(_) => ResultKind::Boolean,
            Self::Value(_) => ResultKind::Value,
            Self::ValueList(_) => ResultKind::ValueList,
        }
    }

    pub fn objects(&self) -> Result<&[String], OpError> {
        match self {
            Self::Objects(ids) => Ok(ids),
            other => Err(OpError::KindMismatch {
                expected: ResultKind::Objects,
                found: other.kind(),
            }),
        }
    }

    pub fn boolean(&self) -> Result<bool, OpError> {
        match self {
            Self::Boolean(b) => Ok(*b),
            other => Err(OpError::KindMismatch {
                expected: ResultKind::Boolean,
                found: other.kind(),
            }),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NodeResult {
    pub node_id: String,
    pub value: NodeValue,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AnswerKind {
    YesNo,
    Value,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ExecutionTrace {
    pub question_id: String,
    /// One result per node, in topological order.
    pub results: Vec<NodeResult>,
    pub answer: String,
    pub answer_kind: AnswerKind,
}

impl ExecutionTrace {
    pub fn result(&self, node_id: &str) -> Option<&NodeValue> {
        self.results.iter().find(|r| r.node_id == node_id).map(|r| &r.value)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum OpError {
    #[error("expected {expected} input, found {found}")]
    KindMismatch { expected: ResultKind, found: ResultKind },
    #[error("expected exactly one object, found {count}")]
    NonSingletonSelection { count: usize },
    #[error("object `{object}` has no `{family}` attribute")]
    MissingAttribute { object: String, family: String },
    #[error("selection is empty")]
    EmptySelection,
    #[error("value `{value}` is not in the `{family}` order table")]
    UnorderedValue { value: String, family: String },
    #[error("unknown comparator `{0}`")]
    UnknownComparator(String),
}

impl OpError {
    pub fn class(&self) -> &'static str {
        match self {
            Self::KindMismatch { .. } => "KindMismatch",
            Self::NonSingletonSelection { .. } => "NonSingletonSelection",
            Self::MissingAttribute { .. } => "MissingAttribute",
            Self::EmptySelection => "EmptySelection",
            Self::UnorderedValue { .. } => "UnorderedValue",
            Self::UnknownComparator(_) => "UnknownComparator",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("node `{node_id}`: {source}")]
pub struct ExecError {
    pub node_id: String,
    pub source: OpError,
}

fn objects_of<'g, 'a>(g: &'g SceneGraph, ids: &'a [String]) -> impl Iterator<Item = &'g SceneObject> + 'a
where
    'g: 'a,
{
    ids.iter().filter_map(move |id| g.object(id))
}

fn non_empty(ids: &[String]) -> Result<&[String], OpError> {
    if ids.is_empty() {
        Err(OpError::EmptySelection)
    } else {
        Ok(ids)
    }
}

fn singleton<'g>(g: &'g SceneGraph, ids: &[String]) -> Result<&'g SceneObject, OpError> {
    match ids {
        [only] => g.object(only).ok_or(OpError::EmptySelection),
        _ => Err(OpError::NonSingletonSelection { count: ids.len() }),
    }
}

/// Values an object holds in the named family; error if it holds none.
fn family_values<'o>(obj: &'o SceneObject, family: &str) -> Result<BTreeSet<&'o str>, OpError> {
    let values: BTreeSet<&str> = obj.values_in(AttributeFamily::parse(family)).collect();
    if values.is_empty() {
        return Err(OpError::MissingAttribute {
            object: obj.id.clone(),
            family: family.to_string(),
        });
    }
    Ok(values)
}

pub fn exec_select(g: &SceneGraph, category: &str, synonyms: &SynonymTable) -> NodeValue {
    let want = synonyms.normalize(category);
    NodeValue::Objects(
        g.objects()
            .filter(|o| synonyms.normalize(&o.name) == want)
            .map(|o| o.id.clone())
            .collect(),
    )
}

pub fn exec_exist(dep: &NodeValue) -> Result<NodeValue, OpError> {
    Ok(NodeValue::Boolean(!dep.objects()?.is_empty()))
}

pub fn exec_filter(g: &SceneGraph, dep: &NodeValue, attribute: &str) -> Result<NodeValue, OpError> {
    let kept = objects_of(g, dep.objects()?)
        .filter(|o| o.has_value(attribute))
        .map(|o| o.id.clone())
        .collect();
    Ok(NodeValue::Objects(kept))
}

pub fn exec_query(g: &SceneGraph, dep: &NodeValue, family: &str) -> Result<NodeValue, OpError> {
    let obj = singleton(g, dep.objects()?)?;
    let values = family_values(obj, family)?;
    let first = values.into_iter().next().expect("family_values is non-empty");
    Ok(NodeValue::Value(first.to_string()))
}

pub fn exec_verify(
    g: &SceneGraph,
    dep: &NodeValue,
    attribute: &str,
    quantifier: Quantifier,
) -> Result<NodeValue, OpError> {
    let ids = non_empty(dep.objects()?)?;
    let mut objs = objects_of(g, ids);
    let holds = match quantifier {
        Quantifier::Universal => objs.all(|o| o.has_value(attribute)),
        Quantifier::Existential => objs.any(|o| o.has_value(attribute)),
    };
    Ok(NodeValue::Boolean(holds))
}

pub fn exec_relate(
    g: &SceneGraph,
    dep: &NodeValue,
    predicate: &str,
    direction: Direction,
    category: &str,
    synonyms: &SynonymTable,
) -> Result<NodeValue, OpError> {
    let anchors: BTreeSet<&str> = dep.objects()?.iter().map(String::as_str).collect();
    let want = synonyms.normalize(category);
    let mut found = BTreeSet::new();
    for candidate in g.objects().filter(|o| synonyms.normalize(&o.name) == want) {
        let linked = match direction {
            Direction::Subject => candidate
                .relations
                .iter()
                .any(|r| r.predicate == predicate && anchors.contains(r.target.as_str())),
            Direction::Object => objects_of_set(g, &anchors).any(|a| {
                a.relations
                    .iter()
                    .any(|r| r.predicate == predicate && r.target == candidate.id)
            }),
        };
        if linked {
            found.insert(candidate.id.clone());
        }
    }
    Ok(NodeValue::Objects(found.into_iter().collect()))
}

fn objects_of_set<'g, 'a>(g: &'g SceneGraph, ids: &'a BTreeSet<&'a str>) -> impl Iterator<Item = &'g SceneObject> + 'a
where
    'g: 'a,
{
    ids.iter().filter_map(move |id| g.object(id))
}

/// Attribute pairs held by every object of both groups, ordered by family then value.
pub fn common_attributes(g: &SceneGraph, a: &NodeValue, b: &NodeValue) -> Result<Vec<Attribute>, OpError> {
    let a = non_empty(a.objects()?)?;
    let b = non_empty(b.objects()?)?;
    let mut objs = objects_of(g, a).chain(objects_of(g, b));
    let Some(first) = objs.next() else {
        return Ok(Vec::new());
    };
    let mut shared: BTreeSet<&Attribute> = first.attributes().iter().collect();
    for obj in objs {
        let held: BTreeSet<&Attribute> = obj.attributes().iter().collect();
        shared.retain(|attr| held.contains(attr));
    }
    Ok(shared.into_iter().cloned().collect())
}

pub fn exec_common(g: &SceneGraph, a: &NodeValue, b: &NodeValue) -> Result<NodeValue, OpError> {
    common_attributes(g, a, b).map(NodeValue::ValueList)
}

/// Same-ness of two groups, optionally restricted to one family.
pub fn same_attribute(
    g: &SceneGraph,
    a: &NodeValue,
    b: &NodeValue,
    family: Option<&str>,
    quantifier: Quantifier,
) -> Result<bool, OpError> {
    let ids_a = non_empty(a.objects()?)?;
    let ids_b = non_empty(b.objects()?)?;
    match (family, quantifier) {
        (Some(family), Quantifier::Universal) => {
            let mut shared: Option<BTreeSet<&str>> = None;
            for obj in objects_of(g, ids_a).chain(objects_of(g, ids_b)) {
                let values = family_values(obj, family)?;
                shared = Some(match shared {
                    None => values,
                    Some(s) => s.intersection(&values).copied().collect(),
                });
            }
            Ok(shared.is_some_and(|s| !s.is_empty()))
        }
        (Some(family), Quantifier::Existential) => {
            let left = objects_of(g, ids_a)
                .map(|o| family_values(o, family))
                .collect::<Result<Vec<_>, _>>()?;
            let right = objects_of(g, ids_b)
                .map(|o| family_values(o, family))
                .collect::<Result<Vec<_>, _>>()?;
            Ok(left.iter().any(|l| right.iter().any(|r| !l.is_disjoint(r))))
        }
        (None, Quantifier::Universal) => Ok(!common_attributes(g, a, b)?.is_empty()),
        (None, Quantifier::Existential) => Ok(objects_of(g, ids_a)
            .any(|x| objects_of(g, ids_b).any(|y| x.attributes().iter().any(|p| y.attributes().contains(p))))),
    }
}

pub fn exec_same(
    g: &SceneGraph,
    a: &NodeValue,
    b: &NodeValue,
    family: Option<&str>,
    quantifier: Quantifier,
) -> Result<NodeValue, OpError> {
    same_attribute(g, a, b, family, quantifier).map(NodeValue::Boolean)
}

pub fn exec_different(
    g: &SceneGraph,
    a: &NodeValue,
    b: &NodeValue,
    family: Option<&str>,
    quantifier: Quantifier,
) -> Result<NodeValue, OpError> {
    same_attribute(g, a, b, family, quantifier).map(|s| NodeValue::Boolean(!s))
}

/// Rank of the object's value in the family order.
fn ordered_rank(obj: &SceneObject, family: &str, table: &ComparatorTable) -> Result<usize, OpError> {
    let values = family_values(obj, family)?;
    if table.order(family).is_none() {
        return Err(OpError::UnknownComparator(family.to_string()));
    }
    values
        .iter()
        .find_map(|v| table.rank(family, v))
        .ok_or_else(|| OpError::UnorderedValue {
            value: values.iter().next().copied().unwrap_or_default().to_string(),
            family: family.to_string(),
        })
}

/// Placeholder answer when a selection comparison ends in a tie.
pub const TIE_ANSWER: &str = "neither";

/// Whether the first object strictly satisfies the comparator against the second.
pub fn compare_holds(
    g: &SceneGraph,
    a: &NodeValue,
    b: &NodeValue,
    family: &str,
    comparator: &ComparatorSpec,
    table: &ComparatorTable,
) -> Result<(bool, Ordering), OpError> {
    let left = singleton(g, a.objects()?)?;
    let right = singleton(g, b.objects()?)?;
    let cmp = table
        .comparator(&comparator.word)
        .filter(|c| c.family.eq_ignore_ascii_case(family.trim()))
        .ok_or_else(|| OpError::UnknownComparator(comparator.word.clone()))?;
    let ord = ordered_rank(left, family, table)?.cmp(&ordered_rank(right, family, table)?);
    Ok((ord == cmp.wants, ord))
}

pub fn exec_compare(
    g: &SceneGraph,
    a: &NodeValue,
    b: &NodeValue,
    family: &str,
    comparator: &ComparatorSpec,
    table: &ComparatorTable,
) -> Result<NodeValue, OpError> {
    let (holds, ord) = compare_holds(g, a, b, family, comparator, table)?;
    Ok(match comparator.mode {
        CompareMode::Boolean => NodeValue::Boolean(holds),
        CompareMode::Select => {
            let winner = if ord == Ordering::Equal {
                TIE_ANSWER.to_string()
            } else if holds {
                singleton(g, a.objects()?)?.name.clone()
            } else {
                singleton(g, b.objects()?)?.name.clone()
            };
            NodeValue::Value(winner)
        }
    })
}

pub fn exec_logical(op: AtomicOp, a: &NodeValue, b: &NodeValue) -> Result<NodeValue, OpError> {
    let (x, y) = (a.boolean()?, b.boolean()?);
    Ok(NodeValue::Boolean(match op {
        AtomicOp::Or => x || y,
        _ => x && y,
    }))
}

fn join_and(items: impl IntoIterator<Item = String>) -> String {
    let items: Vec<String> = items.into_iter().collect();
    if items.is_empty() {
        "none".to_string()
    } else {
        items.join(" and ")
    }
}

/// Surface answer for a root result.
pub fn answer_of(g: &SceneGraph, value: &NodeValue) -> (String, AnswerKind) {
    match value {
        NodeValue::Boolean(b) => ((if *b { "yes" } else { "no" }).to_string(), AnswerKind::YesNo),
        NodeValue::Value(v) => (v.clone(), AnswerKind::Value),
        NodeValue::ValueList(attrs) => (join_and(attrs.iter().map(|a| a.value.clone())), AnswerKind::Value),
        NodeValue::Objects(ids) => {
            let names: BTreeSet<String> = objects_of(g, ids).map(|o| o.name.clone()).collect();
            (join_and(names), AnswerKind::Value)
        }
    }
}

/// Evaluates one node given the results of its dependencies (in dependency order).
pub fn eval_node(
    node: &crate::program::OpNode,
    deps: &[&NodeValue],
    g: &SceneGraph,
    cfg: &ExecConfig,
) -> Result<NodeValue, OpError> {
    let attr = node.attribute.as_deref().unwrap_or_default();
    let category = node.category.as_deref().unwrap_or_default();
    match (node.op, deps) {
        (AtomicOp::Select, []) => Ok(exec_select(g, category, &cfg.synonyms)),
        (AtomicOp::Exist, [d]) => exec_exist(d),
        (AtomicOp::Filter, [d]) => exec_filter(g, d, attr),
        (AtomicOp::Query, [d]) => exec_query(g, d, attr),
        (AtomicOp::Verify, [d]) => exec_verify(g, d, attr, cfg.quantifier),
        (AtomicOp::Relate, [d]) => {
            let rel = node.relation.as_ref().expect("validated relate node");
            exec_relate(g, d, &rel.predicate, rel.direction, category, &cfg.synonyms)
        }
        (AtomicOp::Common, [a, b]) => exec_common(g, a, b),
        (AtomicOp::Same, [a, b]) => exec_same(g, a, b, node.attribute.as_deref(), cfg.quantifier),
        (AtomicOp::Different, [a, b]) => exec_different(g, a, b, node.attribute.as_deref(), cfg.quantifier),
        (AtomicOp::Compare, [a, b]) => {
            let comparator = node.comparator.as_ref().expect("validated compare node");
            exec_compare(g, a, b, attr, comparator, &cfg.comparators)
        }
        (AtomicOp::And | AtomicOp::Or, [a, b]) => exec_logical(node.op, a, b),
        _ => unreachable!("arity is validated when the program is built"),
    }
}

/// Runs every node in topological order.
pub fn execute(p: &ReasoningProgram, g: &SceneGraph, cfg: &ExecConfig) -> Result<ExecutionTrace, ExecError> {
    let order = p.topo_order();
    let mut results: Vec<NodeResult> = Vec::with_capacity(order.len());
    for id in order {
        let node = p.node(id).expect("topo order lists program nodes");
        let deps: Vec<&NodeValue> = node
            .deps
            .iter()
            .map(|d| {
                &results
                    .iter()
                    .find(|r| r.node_id == *d)
                    .expect("dependencies run first")
                    .value
            })
            .collect();
        let value = eval_node(node, &deps, g, cfg).map_err(|source| ExecError {
            node_id: id.clone(),
            source,
        })?;
        results.push(NodeResult {
            node_id: id.clone(),
            value,
        });
    }
    let root = &results
        .iter()
        .find(|r| r.node_id == p.root())
        .expect("root executed")
        .value;
    let (answer, answer_kind) = answer_of(g, root);
    Ok(ExecutionTrace {
        question_id: p.question_id.clone(),
        results,
        answer,
        answer_kind,
    })
}
