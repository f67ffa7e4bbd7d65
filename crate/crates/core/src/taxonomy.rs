//! The mental-disorder knowledge-base taxonomy: a leveled concept/instance
//! tree with typed cross relationships.
//!
//! Levels run from the single root (level 1) through disorder groups,
//! disorders, the three clinical concepts (level 4) and their instances
//! (level 5). Anything deeper is a sub-instance.
//!
//! A [`Taxonomy`] is a plain value. Edits return a new taxonomy and leave the
//! original untouched.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Labels allowed on level-4 concept nodes.
pub const CONCEPT_LABELS: [&str; 3] = ["Symptoms", "Risk Factors", "Supportive Symptoms"];

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct NodeId(String);

impl NodeId {
    pub fn new(id: impl Into<String>) -> Self {
        NodeId(id.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for NodeId {
    fn from(s: &str) -> Self {
        NodeId(s.to_string())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NodeKind {
    Root,
    DisorderGroup,
    Disorder,
    Concept,
    Instance,
    SubInstance,
}

impl NodeKind {
    /// Whether `level` is consistent with this kind.
    pub fn admits_level(self, level: u32) -> bool {
        match self {
            NodeKind::Root => level == 1,
            NodeKind::DisorderGroup => level == 2,
            NodeKind::Disorder => level == 3,
            NodeKind::Concept => level == 4,
            NodeKind::Instance => level == 5,
            NodeKind::SubInstance => level >= 6,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaxonomyNode {
    pub id: NodeId,
    pub label: String,
    pub level: u32,
    pub kind: NodeKind,
}

impl TaxonomyNode {
    pub fn new(id: impl Into<String>, label: impl Into<String>, level: u32, kind: NodeKind) -> Self {
        TaxonomyNode {
            id: NodeId::new(id),
            label: label.into(),
            level,
            kind,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EdgeKind {
    Hierarchical,
    Cross,
}

/// Type of a horizontal relationship. Anything other than the two named
/// types is kept as a free label.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(from = "String", into = "String")]
pub enum CrossType {
    SameAs,
    CauseIn,
    Other(String),
}

impl From<String> for CrossType {
    fn from(s: String) -> Self {
        match s.as_str() {
            "same_as" => CrossType::SameAs,
            "cause_in" => CrossType::CauseIn,
            _ => CrossType::Other(s),
        }
    }
}

impl std::fmt::Display for CrossType {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CrossType::SameAs => f.write_str("same_as"),
            CrossType::CauseIn => f.write_str("cause_in"),
            CrossType::Other(s) => f.write_str(s),
        }
    }
}

impl From<CrossType> for String {
    fn from(c: CrossType) -> Self {
        match c {
            CrossType::SameAs => "same_as".to_string(),
            CrossType::CauseIn => "cause_in".to_string(),
            CrossType::Other(s) => s,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Relationship {
    pub from: NodeId,
    pub to: NodeId,
    pub kind: EdgeKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cross_type: Option<CrossType>,
}

impl Relationship {
    pub fn hierarchical(from: impl Into<String>, to: impl Into<String>) -> Self {
        Relationship {
            from: NodeId::new(from),
            to: NodeId::new(to),
            kind: EdgeKind::Hierarchical,
            cross_type: None,
        }
    }

    pub fn cross(from: impl Into<String>, to: impl Into<String>, cross_type: CrossType) -> Self {
        Relationship {
            from: NodeId::new(from),
            to: NodeId::new(to),
            kind: EdgeKind::Cross,
            cross_type: Some(cross_type),
        }
    }

    fn describe(&self) -> String {
        match &self.cross_type {
            Some(ct) => format!("{} -[{}]-> {}", self.from, String::from(ct.clone()), self.to),
            None => format!("{} -> {}", self.from, self.to),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum ViolationKind {
    EmptyId,
    DuplicateId,
    NoRoot,
    MultipleRoots,
    LevelKindMismatch,
    InvalidConceptLabel,
    OrphanEdge,
    LevelViolation,
    MissingParent,
    MultipleParents,
    RootHasParent,
    Cycle,
    MissingCrossType,
    UnexpectedCrossType,
}

impl ViolationKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ViolationKind::EmptyId => "empty id",
            ViolationKind::DuplicateId => "duplicate id",
            ViolationKind::NoRoot => "no root",
            ViolationKind::MultipleRoots => "multiple roots",
            ViolationKind::LevelKindMismatch => "level/kind mismatch",
            ViolationKind::InvalidConceptLabel => "invalid concept label",
            ViolationKind::OrphanEdge => "orphan edge",
            ViolationKind::LevelViolation => "level violation",
            ViolationKind::MissingParent => "missing parent",
            ViolationKind::MultipleParents => "multiple parents",
            ViolationKind::RootHasParent => "root has parent",
            ViolationKind::Cycle => "cycle",
            ViolationKind::MissingCrossType => "missing cross type",
            ViolationKind::UnexpectedCrossType => "unexpected cross type",
        }
    }
}

/// One broken invariant. `subject` is a node id or an edge description.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Violation {
    pub kind: ViolationKind,
    pub subject: String,
    pub detail: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {} ({})", self.kind.as_str(), self.subject, self.detail)
    }
}

#[derive(Debug, Error)]
pub enum TaxonomyError {
    #[error("cannot read taxonomy {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed taxonomy document: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("invalid taxonomy: {}", .0.iter().map(|v| v.to_string()).collect::<Vec<_>>().join("; "))]
    Validation(Vec<Violation>),
    #[error("unknown parent node `{0}`")]
    UnknownParent(NodeId),
    #[error("parent `{parent}` is at level {parent_level}, node needs a parent at level {expected}")]
    ParentLevel {
        parent: NodeId,
        parent_level: u32,
        expected: u32,
    },
    #[error("node id `{0}` already exists")]
    DuplicateId(NodeId),
    #[error("the root node cannot be removed")]
    CannotRemoveRoot,
    #[error("unknown node `{0}`")]
    UnknownNode(NodeId),
}

/// What [`Taxonomy::query_related`] should return.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum RelationFilter {
    Parent,
    Children,
    Ancestors,
    Descendants,
    /// Cross neighbours, optionally restricted to one type. Outgoing edges
    /// are always returned; incoming edges only for `SameAs`, which is
    /// symmetric.
    Cross(Option<CrossType>),
}

/// On-disk JSON layout.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Taxonomy {
    pub name: String,
    pub version: String,
    #[serde(default, skip_serializing_if = "String::is_empty")]
    pub notes: String,
    pub nodes: Vec<TaxonomyNode>,
    pub edges: Vec<Relationship>,
}

impl Taxonomy {
    pub fn new(name: impl Into<String>, version: impl Into<String>, root_label: &str) -> Self {
        Taxonomy {
            name: name.into(),
            version: version.into(),
            notes: String::new(),
            nodes: vec![TaxonomyNode::new("root", root_label, 1, NodeKind::Root)],
            edges: Vec::new(),
        }
    }

    /// Parses without validating.
    pub fn from_json(json: &str) -> Result<Self, TaxonomyError> {
        Ok(serde_json::from_str(json)?)
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("taxonomy serializes");
        s.push('\n');
        s
    }

    pub fn node(&self, id: &NodeId) -> Option<&TaxonomyNode> {
        self.nodes.iter().find(|n| &n.id == id)
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn hierarchical_edges(&self) -> impl Iterator<Item = &Relationship> {
        self.edges.iter().filter(|e| e.kind == EdgeKind::Hierarchical)
    }

    pub fn cross_edges(&self) -> impl Iterator<Item = &Relationship> {
        self.edges.iter().filter(|e| e.kind == EdgeKind::Cross)
    }

    pub fn root(&self) -> Option<&TaxonomyNode> {
        self.nodes.iter().find(|n| n.kind == NodeKind::Root)
    }

    pub fn parent(&self, id: &NodeId) -> Option<&NodeId> {
        self.hierarchical_edges().find(|e| &e.to == id).map(|e| &e.from)
    }

    pub fn children(&self, id: &NodeId) -> Vec<&NodeId> {
        self.hierarchical_edges()
            .filter(|e| &e.from == id)
            .map(|e| &e.to)
            .collect()
    }

    /// Every invariant violation, ordered by subject then kind. Node
    /// violations sort before edge violations.
    pub fn validate(&self) -> Vec<Violation> {
        let mut node_v: Vec<Violation> = Vec::new();
        let mut edge_v: Vec<(Relationship, Violation)> = Vec::new();
        let mut push_node = |kind, subject: &str, detail: String| {
            node_v.push(Violation {
                kind,
                subject: subject.to_string(),
                detail,
            })
        };

        let mut seen: HashMap<&NodeId, &TaxonomyNode> = HashMap::new();
        for n in &self.nodes {
            if n.id.as_str().trim().is_empty() {
                push_node(ViolationKind::EmptyId, "", format!("node labeled `{}`", n.label));
            }
            if seen.insert(&n.id, n).is_some() {
                push_node(ViolationKind::DuplicateId, n.id.as_str(), "id used more than once".into());
            }
            if !n.kind.admits_level(n.level) {
                push_node(
                    ViolationKind::LevelKindMismatch,
                    n.id.as_str(),
                    format!("kind {:?} at level {}", n.kind, n.level),
                );
            }
            if n.kind == NodeKind::Concept && !CONCEPT_LABELS.contains(&n.label.as_str()) {
                push_node(
                    ViolationKind::InvalidConceptLabel,
                    n.id.as_str(),
                    format!("`{}` is not one of {:?}", n.label, CONCEPT_LABELS),
                );
            }
        }

        let roots: Vec<&TaxonomyNode> = self.nodes.iter().filter(|n| n.kind == NodeKind::Root).collect();
        match roots.len() {
            0 => push_node(ViolationKind::NoRoot, "", "taxonomy has no root node".into()),
            1 => {}
            _ => push_node(
                ViolationKind::MultipleRoots,
                roots[1].id.as_str(),
                format!(
                    "roots: {}",
                    roots.iter().map(|r| r.id.as_str()).collect::<Vec<_>>().join(", ")
                ),
            ),
        }

        let mut parents: BTreeMap<&NodeId, Vec<&NodeId>> = BTreeMap::new();
        for e in &self.edges {
            let from = seen.get(&e.from);
            let to = seen.get(&e.to);
            if from.is_none() || to.is_none() {
                let missing = if from.is_none() { &e.from } else { &e.to };
                edge_v.push((
                    e.clone(),
                    Violation {
                        kind: ViolationKind::OrphanEdge,
                        subject: e.describe(),
                        detail: format!("endpoint `{missing}` does not exist"),
                    },
                ));
            }
            match e.kind {
                EdgeKind::Hierarchical => {
                    if e.cross_type.is_some() {
                        edge_v.push((
                            e.clone(),
                            Violation {
                                kind: ViolationKind::UnexpectedCrossType,
                                subject: e.describe(),
                                detail: "hierarchical edges carry no cross type".into(),
                            },
                        ));
                    }
                    if let (Some(f), Some(t)) = (from, to) {
                        if t.level != f.level + 1 {
                            edge_v.push((
                                e.clone(),
                                Violation {
                                    kind: ViolationKind::LevelViolation,
                                    subject: e.describe(),
                                    detail: format!("level {} -> level {}", f.level, t.level),
                                },
                            ));
                        }
                        parents.entry(&e.to).or_default().push(&e.from);
                    }
                }
                EdgeKind::Cross => {
                    if e.cross_type.is_none() {
                        edge_v.push((
                            e.clone(),
                            Violation {
                                kind: ViolationKind::MissingCrossType,
                                subject: e.describe(),
                                detail: "cross edges need a cross_type".into(),
                            },
                        ));
                    }
                }
            }
        }

        for n in &self.nodes {
            let ps = parents.get(&n.id).map(Vec::as_slice).unwrap_or(&[]);
            if n.kind == NodeKind::Root {
                if !ps.is_empty() {
                    push_node(ViolationKind::RootHasParent, n.id.as_str(), format!("parent `{}`", ps[0]));
                }
            } else if ps.is_empty() {
                push_node(ViolationKind::MissingParent, n.id.as_str(), "no hierarchical parent".into());
            } else if ps.len() > 1 {
                push_node(
                    ViolationKind::MultipleParents,
                    n.id.as_str(),
                    format!("{} hierarchical parents", ps.len()),
                );
            }
        }

        for id in self.hierarchical_cycle_members() {
            push_node(ViolationKind::Cycle, id.as_str(), "hierarchical edges form a cycle".into());
        }

        node_v.sort_by(|a, b| (&a.subject, a.kind).cmp(&(&b.subject, b.kind)));
        edge_v.sort_by(|a, b| (&a.0, a.1.kind).cmp(&(&b.0, b.1.kind)));
        node_v.extend(edge_v.into_iter().map(|(_, v)| v));
        node_v
    }

    /// Nodes lying on a directed cycle of hierarchical edges.
    fn hierarchical_cycle_members(&self) -> BTreeSet<&NodeId> {
        let mut adj: BTreeMap<&NodeId, Vec<&NodeId>> = BTreeMap::new();
        for e in self.hierarchical_edges() {
            adj.entry(&e.from).or_default().push(&e.to);
        }
        #[derive(Clone, Copy, PartialEq)]
        enum Mark {
            Open,
            Done,
        }
        fn visit<'a>(
            n: &'a NodeId,
            adj: &BTreeMap<&'a NodeId, Vec<&'a NodeId>>,
            marks: &mut HashMap<&'a NodeId, Mark>,
            path: &mut Vec<&'a NodeId>,
            out: &mut BTreeSet<&'a NodeId>,
        ) {
            marks.insert(n, Mark::Open);
            path.push(n);
            for &next in adj.get(n).map(Vec::as_slice).unwrap_or(&[]) {
                match marks.get(next) {
                    Some(Mark::Open) => {
                        let at = path.iter().position(|p| *p == next).unwrap_or(0);
                        out.extend(path[at..].iter().copied());
                    }
                    Some(Mark::Done) => {}
                    None => visit(next, adj, marks, path, out),
                }
            }
            path.pop();
            marks.insert(n, Mark::Done);
        }
        let mut marks = HashMap::new();
        let mut out = BTreeSet::new();
        for &n in adj.keys() {
            if !marks.contains_key(n) {
                visit(n, &adj, &mut marks, &mut Vec::new(), &mut out);
            }
        }
        out
    }

    /// Inserts `node` under `parent` with a single hierarchical edge.
    pub fn add_node(&self, node: TaxonomyNode, parent: &NodeId) -> Result<Taxonomy, TaxonomyError> {
        if self.node(&node.id).is_some() {
            return Err(TaxonomyError::DuplicateId(node.id));
        }
        let p = self
            .node(parent)
            .ok_or_else(|| TaxonomyError::UnknownParent(parent.clone()))?;
        if p.level + 1 != node.level {
            return Err(TaxonomyError::ParentLevel {
                parent: parent.clone(),
                parent_level: p.level,
                expected: node.level.saturating_sub(1),
            });
        }
        let mut next = self.clone();
        next.edges.push(Relationship {
            from: parent.clone(),
            to: node.id.clone(),
            kind: EdgeKind::Hierarchical,
            cross_type: None,
        });
        next.nodes.push(node);
        Ok(next)
    }

    /// Removes `id`, its whole hierarchical subtree and every edge touching
    /// a removed node.
    pub fn remove_node(&self, id: &NodeId) -> Result<Taxonomy, TaxonomyError> {
        let node = self.node(id).ok_or_else(|| TaxonomyError::UnknownNode(id.clone()))?;
        if node.kind == NodeKind::Root {
            return Err(TaxonomyError::CannotRemoveRoot);
        }
        let mut doomed: BTreeSet<NodeId> = BTreeSet::new();
        let mut stack = vec![id.clone()];
        while let Some(cur) = stack.pop() {
            if doomed.insert(cur.clone()) {
                stack.extend(self.children(&cur).into_iter().cloned());
            }
        }
        let mut next = self.clone();
        next.nodes.retain(|n| !doomed.contains(&n.id));
        next.edges
            .retain(|e| !doomed.contains(&e.from) && !doomed.contains(&e.to));
        Ok(next)
    }

    pub fn query_related(
        &self,
        id: &NodeId,
        filter: &RelationFilter,
    ) -> Result<Vec<(NodeId, Relationship)>, TaxonomyError> {
        if self.node(id).is_none() {
            return Err(TaxonomyError::UnknownNode(id.clone()));
        }
        let parent_edge =
            |n: &NodeId| self.hierarchical_edges().find(|e| &e.to == n).cloned();
        let mut out = Vec::new();
        match filter {
            RelationFilter::Parent => {
                if let Some(e) = parent_edge(id) {
                    out.push((e.from.clone(), e));
                }
            }
            RelationFilter::Children => {
                for e in self.hierarchical_edges().filter(|e| &e.from == id) {
                    out.push((e.to.clone(), e.clone()));
                }
            }
            RelationFilter::Ancestors => {
                let mut cur = id.clone();
                let mut guard = 0;
                while let Some(e) = parent_edge(&cur) {
                    cur = e.from.clone();
                    out.push((e.from.clone(), e));
                    guard += 1;
                    if guard > self.nodes.len() {
                        break;
                    }
                }
            }
            RelationFilter::Descendants => {
                let mut visited = BTreeSet::new();
                let mut stack = vec![id.clone()];
                while let Some(cur) = stack.pop() {
                    for e in self.hierarchical_edges().filter(|e| e.from == cur) {
                        if visited.insert(e.to.clone()) {
                            out.push((e.to.clone(), e.clone()));
                            stack.push(e.to.clone());
                        }
                    }
                }
            }
            RelationFilter::Cross(wanted) => {
                for e in self.cross_edges() {
                    if wanted.is_some() && wanted != &e.cross_type {
                        continue;
                    }
                    if &e.from == id {
                        out.push((e.to.clone(), e.clone()));
                    } else if &e.to == id && e.cross_type == Some(CrossType::SameAs) {
                        out.push((e.from.clone(), e.clone()));
                    }
                }
            }
        }
        Ok(out)
    }
}

/// Reads, parses and validates a taxonomy document.
pub fn load_taxonomy(path: &Path) -> Result<Taxonomy, TaxonomyError> {
    let text = std::fs::read_to_string(path).map_err(|source| TaxonomyError::Io {
        path: path.display().to_string(),
        source,
    })?;
    let t = Taxonomy::from_json(&text)?;
    let violations = t.validate();
    if violations.is_empty() {
        Ok(t)
    } else {
        Err(TaxonomyError::Validation(violations))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> Taxonomy {
        let t = Taxonomy::new("t", "1", "Mental Disorders");
        let root = NodeId::from("root");
        let t = t
            .add_node(TaxonomyNode::new("g", "Depressive Disorders", 2, NodeKind::DisorderGroup), &root)
            .unwrap();
        let t = t
            .add_node(TaxonomyNode::new("d", "MDD", 3, NodeKind::Disorder), &"g".into())
            .unwrap();
        let t = t
            .add_node(TaxonomyNode::new("c", "Symptoms", 4, NodeKind::Concept), &"d".into())
            .unwrap();
        let t = t
            .add_node(TaxonomyNode::new("i1", "Sadness", 5, NodeKind::Instance), &"c".into())
            .unwrap();
        t.add_node(TaxonomyNode::new("i2", "Fatigue", 5, NodeKind::Instance), &"c".into())
            .unwrap()
    }

    #[test]
    fn root_only_is_valid() {
        let t = Taxonomy::new("t", "1", "Mental Disorders");
        assert!(t.validate().is_empty());
        assert_eq!(t.node_count(), 1);
        assert!(t.edges.is_empty());
    }

    #[test]
    fn two_roots_is_one_violation() {
        let mut t = Taxonomy::new("t", "1", "Mental Disorders");
        t.nodes.push(TaxonomyNode::new("root2", "Other", 1, NodeKind::Root));
        let v = t.validate();
        assert_eq!(v.len(), 1, "{v:?}");
        assert_eq!(v[0].kind, ViolationKind::MultipleRoots);
        assert_eq!(v[0].kind.as_str(), "multiple roots");
    }

    #[test]
    fn edge_to_missing_parent_is_orphan() {
        let mut t = small();
        // i2's real parent edge is replaced by one from a node that does not exist.
        t.edges.retain(|e| e.to.as_str() != "i2");
        t.edges.push(Relationship::hierarchical("ghost", "i2"));
        let v = t.validate();
        let kinds: Vec<_> = v.iter().map(|v| v.kind).collect();
        assert!(kinds.contains(&ViolationKind::OrphanEdge), "{v:?}");
        assert!(v.iter().any(|v| v.kind == ViolationKind::OrphanEdge && v.subject.contains("ghost")));
    }

    #[test]
    fn same_level_edge_is_level_violation() {
        let mut t = small();
        t.edges.push(Relationship::hierarchical("i1", "i2"));
        let v = t.validate();
        assert!(v
            .iter()
            .any(|v| v.kind == ViolationKind::LevelViolation && v.subject == "i1 -> i2"));
    }

    #[test]
    fn add_rejects_bad_parent_and_duplicates() {
        let t = small();
        let e = t
            .add_node(TaxonomyNode::new("x", "X", 6, NodeKind::SubInstance), &"nope".into())
            .unwrap_err();
        assert!(matches!(e, TaxonomyError::UnknownParent(_)));
        let e = t
            .add_node(TaxonomyNode::new("i1", "X", 6, NodeKind::SubInstance), &"i2".into())
            .unwrap_err();
        assert!(matches!(e, TaxonomyError::DuplicateId(_)));
        let e = t
            .add_node(TaxonomyNode::new("x", "X", 7, NodeKind::SubInstance), &"i2".into())
            .unwrap_err();
        assert!(matches!(e, TaxonomyError::ParentLevel { .. }));
    }

    #[test]
    fn remove_root_rejected() {
        let t = small();
        assert!(matches!(
            t.remove_node(&"root".into()),
            Err(TaxonomyError::CannotRemoveRoot)
        ));
        assert!(matches!(t.remove_node(&"zz".into()), Err(TaxonomyError::UnknownNode(_))));
    }

    #[test]
    fn remove_leaf_drops_one_node() {
        let t = small();
        let after = t.remove_node(&"i2".into()).unwrap();
        assert_eq!(after.node_count(), t.node_count() - 1);
        assert!(after.validate().is_empty());
    }

    #[test]
    fn remove_subtree_with_cross_edge() {
        let t = small();
        let t = t
            .add_node(TaxonomyNode::new("s1", "a", 6, NodeKind::SubInstance), &"i1".into())
            .unwrap();
        let t = t
            .add_node(TaxonomyNode::new("s2", "b", 6, NodeKind::SubInstance), &"i1".into())
            .unwrap();
        let mut t = t;
        t.edges.push(Relationship::cross("s1", "i2", CrossType::CauseIn));
        assert!(t.validate().is_empty());
        let before_nodes = t.node_count();
        let before_cross = t.cross_edges().count();
        let after = t.remove_node(&"i1".into()).unwrap();
        assert_eq!(after.node_count(), before_nodes - 3);
        assert_eq!(after.cross_edges().count(), before_cross - 1);
        assert!(after.validate().is_empty());
    }

    #[test]
    fn cycle_detected() {
        let mut t = small();
        t.edges.push(Relationship::hierarchical("i1", "g"));
        let v = t.validate();
        assert!(v.iter().any(|v| v.kind == ViolationKind::Cycle), "{v:?}");
    }

    #[test]
    fn cross_type_serializes_as_string() {
        let r = Relationship::cross("a", "b", CrossType::Other("may trigger".into()));
        let json = serde_json::to_string(&r).unwrap();
        assert!(json.contains("\"cross_type\":\"may trigger\""));
        let back: Relationship = serde_json::from_str(&json).unwrap();
        assert_eq!(back, r);
        let same: Relationship =
            serde_json::from_str(r#"{"from":"a","to":"b","kind":"cross","cross_type":"same_as"}"#).unwrap();
        assert_eq!(same.cross_type, Some(CrossType::SameAs));
    }

    #[test]
    fn ancestors_of_root_and_descendants_of_leaf_are_empty() {
        let t = small();
        assert!(t.query_related(&"root".into(), &RelationFilter::Ancestors).unwrap().is_empty());
        assert!(t.query_related(&"i1".into(), &RelationFilter::Descendants).unwrap().is_empty());
        let anc: Vec<_> = t
            .query_related(&"i1".into(), &RelationFilter::Ancestors)
            .unwrap()
            .into_iter()
            .map(|(n, _)| n.to_string())
            .collect();
        assert_eq!(anc, ["c", "d", "g", "root"]);
        assert!(matches!(
            t.query_related(&"zz".into(), &RelationFilter::Children),
            Err(TaxonomyError::UnknownNode(_))
        ));
    }
}
