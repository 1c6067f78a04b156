//! Many-to-twelve mapping from foreign (GQA-style) program steps onto atomic operations.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use crate::program::{
    AtomicOp, ComparatorSpec, CompareMode, Direction, OpNode, ProgramError, ProgramHeader, ReasoningProgram,
    RelationSpec,
};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum MappingError {
    #[error("unmapped source operation `{0}`")]
    UnmappedOperation(String),
    #[error("mapping table lists `{0}` twice")]
    DuplicateEntry(String),
    #[error("step {index}: {message}")]
    BadStep { index: usize, message: String },
    #[error(transparent)]
    Program(#[from] ProgramError),
}

impl MappingError {
    pub fn class(&self) -> &'static str {
        match self {
            Self::UnmappedOperation(_) => "UnmappedOperation",
            Self::DuplicateEntry(_) | Self::BadStep { .. } => "ParseError",
            Self::Program(e) => e.class(),
        }
    }
}

/// Where a triplet field comes from in a source step.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub enum Field {
    #[default]
    None,
    /// The whole cleaned argument.
    Argument,
    /// The n-th comma-separated part of the argument.
    ArgumentPart(usize),
    /// Operation name after its first word (`verify color` yields `color`).
    Suffix,
    Literal(String),
}

impl Field {
    fn extract(&self, step: &SourceStep) -> Option<String> {
        let value = match self {
            Field::None => return None,
            Field::Argument => step.argument().to_string(),
            Field::ArgumentPart(i) => step.argument().split(',').nth(*i)?.trim().to_string(),
            Field::Suffix => step.operation().split_once(' ')?.1.trim().to_string(),
            Field::Literal(s) => s.clone(),
        };
        (!value.is_empty()).then_some(value)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct ExtractRules {
    pub attribute: Field,
    pub category: Field,
    /// Read `name,predicate,s|o` from the argument (GQA relate form).
    pub relation: bool,
    pub comparator: Field,
    pub compare_mode: CompareMode,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MappingEntry {
    pub source: String,
    pub op: AtomicOp,
    pub extract: ExtractRules,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct OpMappingTable {
    entries: BTreeMap<String, MappingEntry>,
}

fn normalize_name(name: &str) -> String {
    name.split_whitespace()
        .collect::<Vec<_>>()
        .join(" ")
        .to_ascii_lowercase()
}

impl OpMappingTable {
    pub fn new(entries: Vec<MappingEntry>) -> Result<Self, MappingError> {
        let mut map = BTreeMap::new();
        for mut entry in entries {
            let key = normalize_name(&entry.source);
            if map.contains_key(&key) {
                return Err(MappingError::DuplicateEntry(entry.source));
            }
            entry.source = key.clone();
            map.insert(key, entry);
        }
        Ok(Self { entries: map })
    }

    pub fn get(&self, source: &str) -> Option<&MappingEntry> {
        self.entries.get(&normalize_name(source))
    }

    pub fn entries(&self) -> impl Iterator<Item = &MappingEntry> {
        self.entries.values()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Fails on the first name of `vocabulary` the table cannot map.
    pub fn check_total<'a, I>(&self, vocabulary: I) -> Result<(), MappingError>
    where
        I: IntoIterator<Item = &'a str>,
    {
        match vocabulary.into_iter().find(|name| self.get(name).is_none()) {
            Some(name) => Err(MappingError::UnmappedOperation(name.to_string())),
            None => Ok(()),
        }
    }
}

/// One step of a foreign program. Dependencies index earlier steps.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SourceStep {
    operation: String,
    argument: String,
    pub dependencies: Vec<usize>,
}

impl SourceStep {
    /// Accepts both `("filter color", "red")` and the inline form `("filter color(red)", "")`.
    pub fn new(operation: &str, argument: &str, dependencies: Vec<usize>) -> Self {
        let (mut operation, mut argument) = (operation.trim(), argument.trim());
        if argument.is_empty() {
            if let Some((op, rest)) = operation.split_once('(') {
                if let Some(inner) = rest.trim_end().strip_suffix(')') {
                    operation = op.trim();
                    argument = inner.trim();
                }
            }
        }
        Self {
            operation: normalize_name(operation),
            argument: strip_object_ref(argument).to_string(),
            dependencies,
        }
    }

    pub fn operation(&self) -> &str {
        &self.operation
    }

    pub fn argument(&self) -> &str {
        &self.argument
    }
}

/// Drops a trailing GQA object reference such as ` (1234)` or ` (-)`.
fn strip_object_ref(arg: &str) -> &str {
    if let Some(open) = arg.rfind(" (") {
        let tail = &arg[open + 2..];
        if let Some(inner) = tail.strip_suffix(')') {
            if inner == "-" || inner.chars().all(|c| c.is_ascii_digit() || c == ',') {
                return arg[..open].trim_end();
            }
        }
    }
    arg
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SourceProgram {
    pub header: ProgramHeader,
    pub steps: Vec<SourceStep>,
}

fn node_id(index: usize, width: usize) -> String {
    format!("{index:0width$}")
}

/// Rewrites every step into its atomic triplet, preserving node count and edges.
///
/// Node ids are zero-padded step indices, so id order equals step order.
pub fn map_source_program(src: &SourceProgram, table: &OpMappingTable) -> Result<ReasoningProgram, MappingError> {
    if src.steps.is_empty() {
        return Err(ProgramError::parse(None, "empty source program").into());
    }
    let width = (src.steps.len() - 1).to_string().len();
    let mut nodes = Vec::with_capacity(src.steps.len());
    let mut referenced = BTreeSet::new();
    for (index, step) in src.steps.iter().enumerate() {
        let entry = table
            .get(step.operation())
            .ok_or_else(|| MappingError::UnmappedOperation(step.operation().to_string()))?;
        let rules = &entry.extract;
        let mut node = OpNode::new(node_id(index, width), entry.op);
        node.attribute = rules.attribute.extract(step);
        node.category = rules.category.extract(step);
        if rules.relation {
            let parts: Vec<&str> = step.argument().split(',').map(str::trim).collect();
            let [name, predicate, direction] = parts[..] else {
                return Err(MappingError::BadStep {
                    index,
                    message: format!("relation argument `{}` is not name,predicate,s|o", step.argument()),
                });
            };
            let direction: Direction = direction.parse().map_err(|_| MappingError::BadStep {
                index,
                message: format!("bad relation direction `{direction}`"),
            })?;
            if node.category.is_none() && !name.is_empty() && name != "_" {
                node.category = Some(name.to_string());
            }
            node.relation = Some(RelationSpec {
                predicate: predicate.to_string(),
                direction,
            });
        }
        if let Some(word) = rules.comparator.extract(step) {
            node.comparator = Some(ComparatorSpec {
                word,
                mode: rules.compare_mode,
            });
        }
        for &dep in &step.dependencies {
            if dep >= src.steps.len() {
                return Err(MappingError::BadStep {
                    index,
                    message: format!("dependency {dep} out of range"),
                });
            }
            referenced.insert(dep);
            node.deps.push(node_id(dep, width));
        }
        nodes.push(node);
    }
    let sinks: Vec<usize> = (0..src.steps.len()).filter(|i| !referenced.contains(i)).collect();
    let root = match sinks[..] {
        [only] => only,
        _ => src.steps.len() - 1,
    };
    Ok(ReasoningProgram::new(src.header.clone(), nodes, node_id(root, width))?)
}
