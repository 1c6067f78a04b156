//! Reasoning programs: atomic-operation triplets arranged in a dependency DAG.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ProgramError {
    #[error("parse error{}: {message}", node.as_ref().map(|n| format!(" at node `{n}`")).unwrap_or_default())]
    Parse { node: Option<String>, message: String },
    #[error("dependency cycle through node `{node}`")]
    Cycle { node: String },
    #[error("arity error at node `{node}`: {message}")]
    Arity { node: String, message: String },
}

impl ProgramError {
    pub fn parse(node: Option<&str>, message: impl Into<String>) -> Self {
        Self::Parse {
            node: node.map(ToString::to_string),
            message: message.into(),
        }
    }

    /// Stable error-class label for batch summaries.
    pub fn class(&self) -> &'static str {
        match self {
            Self::Parse { .. } => "ParseError",
            Self::Cycle { .. } => "CycleError",
            Self::Arity { .. } => "ArityError",
        }
    }
}

/// The twelve atomic reasoning operations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum AtomicOp {
    Select,
    Exist,
    Filter,
    Query,
    Verify,
    Common,
    Same,
    Different,
    Compare,
    Relate,
    And,
    Or,
}

impl AtomicOp {
    pub const ALL: [AtomicOp; 12] = [
        AtomicOp::Select,
        AtomicOp::Exist,
        AtomicOp::Filter,
        AtomicOp::Query,
        AtomicOp::Verify,
        AtomicOp::Common,
        AtomicOp::Same,
        AtomicOp::Different,
        AtomicOp::Compare,
        AtomicOp::Relate,
        AtomicOp::And,
        AtomicOp::Or,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            Self::Select => "select",
            Self::Exist => "exist",
            Self::Filter => "filter",
            Self::Query => "query",
            Self::Verify => "verify",
            Self::Common => "common",
            Self::Same => "same",
            Self::Different => "different",
            Self::Compare => "compare",
            Self::Relate => "relate",
            Self::And => "and",
            Self::Or => "or",
        }
    }

    pub fn dep_count(&self) -> usize {
        match self {
            Self::Select => 0,
            Self::Exist | Self::Filter | Self::Query | Self::Verify | Self::Relate => 1,
            Self::Common | Self::Same | Self::Different | Self::Compare | Self::And | Self::Or => 2,
        }
    }
}

impl FromStr for AtomicOp {
    type Err = ProgramError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let lower = s.trim().to_ascii_lowercase();
        AtomicOp::ALL
            .into_iter()
            .find(|op| op.as_str() == lower)
            .ok_or_else(|| ProgramError::parse(None, format!("unknown operation `{s}`")))
    }
}

impl fmt::Display for AtomicOp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Which side of the stored edge the newly located objects occupy.
///
/// `Subject`: result objects point at the dependency (`plate -on-> table`).
/// `Object`: the dependency points at the result objects.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Direction {
    Subject,
    Object,
}

impl Direction {
    pub fn as_str(&self) -> &'static str {
        match self {
            Self::Subject => "subject",
            Self::Object => "object",
        }
    }
}

impl FromStr for Direction {
    type Err = ProgramError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "subject" | "s" => Ok(Self::Subject),
            "object" | "o" => Ok(Self::Object),
            other => Err(ProgramError::parse(
                None,
                format!("unknown relation direction `{other}`"),
            )),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct RelationSpec {
    pub predicate: String,
    pub direction: Direction,
}

/// `Boolean` answers "is A <word> than B"; `Select` answers "which is <word>".
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub enum CompareMode {
    #[default]
    Boolean,
    Select,
}

impl CompareMode {
    pub fn as_str(&self) -> &'static str {
        match self {
            Self::Boolean => "boolean",
            Self::Select => "select",
        }
    }
}

impl FromStr for CompareMode {
    type Err = ProgramError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "boolean" | "verify" => Ok(Self::Boolean),
            "select" | "choose" => Ok(Self::Select),
            other => Err(ProgramError::parse(None, format!("unknown compare mode `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ComparatorSpec {
    /// Comparative word such as `larger`; resolved through the comparator table.
    pub word: String,
    pub mode: CompareMode,
}

/// One reasoning step: the `<operation, attribute, category>` triplet plus edges.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct OpNode {
    pub node_id: String,
    pub op: AtomicOp,
    pub attribute: Option<String>,
    pub category: Option<String>,
    pub relation: Option<RelationSpec>,
    pub comparator: Option<ComparatorSpec>,
    pub deps: Vec<String>,
}

impl OpNode {
    pub fn new(node_id: impl Into<String>, op: AtomicOp) -> Self {
        Self {
            node_id: node_id.into(),
            op,
            attribute: None,
            category: None,
            relation: None,
            comparator: None,
            deps: Vec::new(),
        }
    }

    pub fn attribute(mut self, attribute: impl Into<String>) -> Self {
        self.attribute = Some(attribute.into());
        self
    }

    pub fn category(mut self, category: impl Into<String>) -> Self {
        self.category = Some(category.into());
        self
    }

    pub fn relation(mut self, predicate: impl Into<String>, direction: Direction) -> Self {
        self.relation = Some(RelationSpec {
            predicate: predicate.into(),
            direction,
        });
        self
    }

    pub fn comparator(mut self, word: impl Into<String>, mode: CompareMode) -> Self {
        self.comparator = Some(ComparatorSpec {
            word: word.into(),
            mode,
        });
        self
    }

    pub fn deps<I, S>(mut self, deps: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        self.deps = deps.into_iter().map(Into::into).collect();
        self
    }

    fn check_arity(&self) -> Result<(), ProgramError> {
        let arity = |message: String| ProgramError::Arity {
            node: self.node_id.clone(),
            message,
        };
        let want = self.op.dep_count();
        if self.deps.len() != want {
            return Err(arity(format!(
                "{} takes {want} dependencies, found {}",
                self.op,
                self.deps.len()
            )));
        }
        let needs_attribute = matches!(
            self.op,
            AtomicOp::Filter | AtomicOp::Query | AtomicOp::Verify | AtomicOp::Compare
        );
        if needs_attribute && self.attribute.is_none() {
            return Err(arity(format!("{} requires an attribute", self.op)));
        }
        let needs_category = matches!(self.op, AtomicOp::Select | AtomicOp::Relate);
        if needs_category && self.category.is_none() {
            return Err(arity(format!("{} requires a category", self.op)));
        }
        match (self.op, &self.relation) {
            (AtomicOp::Relate, None) => return Err(arity("relate requires a relation".into())),
            (AtomicOp::Relate, Some(_)) | (_, None) => {}
            (op, Some(_)) => return Err(arity(format!("{op} does not take a relation"))),
        }
        match (self.op, &self.comparator) {
            (AtomicOp::Compare, None) => Err(arity("compare requires a comparator".into())),
            (AtomicOp::Compare, Some(_)) | (_, None) => Ok(()),
            (op, Some(_)) => Err(arity(format!("{op} does not take a comparator"))),
        }
    }
}

/// A validated, acyclic program with exactly one sink (the root).
#[derive(Debug, Clone, PartialEq)]
pub struct ReasoningProgram {
    pub question_id: String,
    pub question: String,
    pub reasoning_type: String,
    pub image_id: String,
    nodes: BTreeMap<String, OpNode>,
    root: String,
    order: Vec<String>,
}

/// Question-level metadata carried alongside the graph.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ProgramHeader {
    pub question_id: String,
    pub question: String,
    pub reasoning_type: String,
    pub image_id: String,
}

impl ReasoningProgram {
    pub fn new(header: ProgramHeader, nodes: Vec<OpNode>, root: impl Into<String>) -> Result<Self, ProgramError> {
        let root = root.into();
        if nodes.is_empty() {
            return Err(ProgramError::parse(None, "program has no nodes"));
        }
        let mut map = BTreeMap::new();
        for node in nodes {
            if node.node_id.is_empty() {
                return Err(ProgramError::parse(None, "empty node id"));
            }
            if map.contains_key(&node.node_id) {
                return Err(ProgramError::parse(Some(&node.node_id), "duplicate node id"));
            }
            map.insert(node.node_id.clone(), node);
        }
        for node in map.values() {
            if let Some(dep) = node.deps.iter().find(|d| !map.contains_key(*d)) {
                return Err(ProgramError::parse(
                    Some(&node.node_id),
                    format!("unknown dependency `{dep}`"),
                ));
            }
        }
        for node in map.values() {
            node.check_arity()?;
        }
        let order = topo_sort(&map)?;

        let mut has_dependent = BTreeSet::new();
        for node in map.values() {
            has_dependent.extend(node.deps.iter().map(String::as_str));
        }
        let sinks: Vec<&str> = map
            .keys()
            .map(String::as_str)
            .filter(|id| !has_dependent.contains(id))
            .collect();
        if !map.contains_key(&root) {
            return Err(ProgramError::parse(None, format!("unknown root `{root}`")));
        }
        if sinks != [root.as_str()] {
            return Err(ProgramError::parse(
                Some(&root),
                format!("root must be the only node without dependents, found {sinks:?}"),
            ));
        }

        Ok(Self {
            question_id: header.question_id,
            question: header.question,
            reasoning_type: header.reasoning_type,
            image_id: header.image_id,
            nodes: map,
            root,
            order,
        })
    }

    pub fn header(&self) -> ProgramHeader {
        ProgramHeader {
            question_id: self.question_id.clone(),
            question: self.question.clone(),
            reasoning_type: self.reasoning_type.clone(),
            image_id: self.image_id.clone(),
        }
    }

    pub fn root(&self) -> &str {
        &self.root
    }

    pub fn node(&self, id: &str) -> Option<&OpNode> {
        self.nodes.get(id)
    }

    /// Nodes in id order.
    pub fn nodes(&self) -> impl Iterator<Item = &OpNode> {
        self.nodes.values()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Dependencies before dependents; ready nodes are taken in node-id order.
    pub fn topo_order(&self) -> &[String] {
        &self.order
    }

    /// Distinct operations used, in declaration order of [`AtomicOp`].
    pub fn operations(&self) -> BTreeSet<AtomicOp> {
        self.nodes.values().map(|n| n.op).collect()
    }
}

/// Kahn's algorithm with a sorted ready set.
fn topo_sort(nodes: &BTreeMap<String, OpNode>) -> Result<Vec<String>, ProgramError> {
    let mut pending: BTreeMap<&str, usize> = BTreeMap::new();
    let mut dependents: BTreeMap<&str, Vec<&str>> = BTreeMap::new();
    for node in nodes.values() {
        pending.insert(&node.node_id, node.deps.len());
        for dep in &node.deps {
            dependents.entry(dep.as_str()).or_default().push(&node.node_id);
        }
    }
    let mut ready: BTreeSet<&str> = pending.iter().filter(|(_, &n)| n == 0).map(|(&id, _)| id).collect();
    let mut order = Vec::with_capacity(nodes.len());
    while let Some(id) = ready.pop_first() {
        order.push(id.to_string());
        for &next in dependents.get(id).into_iter().flatten() {
            let n = pending.get_mut(next).expect("dependent is a node");
            *n -= 1;
            if *n == 0 {
                ready.insert(next);
            }
        }
    }
    if order.len() != nodes.len() {
        let stuck = pending
            .iter()
            .find(|(_, &n)| n > 0)
            .map(|(&id, _)| id.to_string())
            .unwrap_or_default();
        return Err(ProgramError::Cycle { node: stuck });
    }
    Ok(order)
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn header() -> ProgramHeader {
        ProgramHeader {
            question_id: "q".into(),
            ..Default::default()
        }
    }

    pub(crate) fn plate_table_nodes() -> Vec<OpNode> {
        vec![
            OpNode::new("n0", AtomicOp::Select).category("table"),
            OpNode::new("n1", AtomicOp::Relate)
                .category("plate")
                .relation("on", Direction::Subject)
                .deps(["n0"]),
            OpNode::new("n2", AtomicOp::Verify).attribute("dirty").deps(["n1"]),
            OpNode::new("n3", AtomicOp::Verify).attribute("silver").deps(["n1"]),
            OpNode::new("n4", AtomicOp::And).deps(["n2", "n3"]),
        ]
    }

    #[test]
    fn plate_table_program_parses() {
        let p = ReasoningProgram::new(header(), plate_table_nodes(), "n4").unwrap();
        assert_eq!(p.len(), 5);
        assert_eq!(p.root(), "n4");
        assert_eq!(p.topo_order(), ["n0", "n1", "n2", "n3", "n4"]);
    }

    #[test]
    fn single_select_is_valid() {
        let p = ReasoningProgram::new(header(), vec![OpNode::new("s", AtomicOp::Select).category("dog")], "s").unwrap();
        assert_eq!(p.topo_order(), ["s"]);
    }

    #[test]
    fn and_with_one_dep_is_arity_error() {
        let nodes = vec![
            OpNode::new("a", AtomicOp::Select).category("dog"),
            OpNode::new("b", AtomicOp::Exist).deps(["a"]),
            OpNode::new("c", AtomicOp::And).deps(["b"]),
        ];
        let err = ReasoningProgram::new(header(), nodes, "c").unwrap_err();
        assert!(matches!(err, ProgramError::Arity { ref node, .. } if node == "c"));
    }

    #[test]
    fn missing_fields_are_arity_errors() {
        let err = ReasoningProgram::new(header(), vec![OpNode::new("a", AtomicOp::Select)], "a").unwrap_err();
        assert_eq!(err.class(), "ArityError");
        let nodes = vec![
            OpNode::new("a", AtomicOp::Select).category("dog"),
            OpNode::new("b", AtomicOp::Relate).category("cat").deps(["a"]),
        ];
        assert_eq!(
            ReasoningProgram::new(header(), nodes, "b").unwrap_err().class(),
            "ArityError"
        );
    }

    #[test]
    fn cycle_is_detected() {
        let nodes = vec![
            OpNode::new("a", AtomicOp::Exist).deps(["b"]),
            OpNode::new("b", AtomicOp::Exist).deps(["a"]),
        ];
        let err = ReasoningProgram::new(header(), nodes, "a").unwrap_err();
        assert!(matches!(err, ProgramError::Cycle { .. }));
    }

    #[test]
    fn two_sinks_rejected() {
        let nodes = vec![
            OpNode::new("a", AtomicOp::Select).category("dog"),
            OpNode::new("b", AtomicOp::Select).category("cat"),
        ];
        assert_eq!(
            ReasoningProgram::new(header(), nodes, "a").unwrap_err().class(),
            "ParseError"
        );
    }

    #[test]
    fn unknown_dep_and_op_are_parse_errors() {
        let nodes = vec![OpNode::new("a", AtomicOp::Exist).deps(["zz"])];
        assert_eq!(
            ReasoningProgram::new(header(), nodes, "a").unwrap_err().class(),
            "ParseError"
        );
        assert!("teleport".parse::<AtomicOp>().is_err());
        assert_eq!("Verify".parse::<AtomicOp>().unwrap(), AtomicOp::Verify);
    }

    #[test]
    fn diamond_orders_by_id() {
        let nodes = vec![
            OpNode::new("D", AtomicOp::And).deps(["C", "B"]),
            OpNode::new("C", AtomicOp::Exist).deps(["A"]),
            OpNode::new("B", AtomicOp::Exist).deps(["A"]),
            OpNode::new("A", AtomicOp::Select).category("x"),
        ];
        let p = ReasoningProgram::new(header(), nodes, "D").unwrap();
        assert_eq!(p.topo_order(), ["A", "B", "C", "D"]);
    }
}
