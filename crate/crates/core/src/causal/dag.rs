use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use super::DagError;

/// Directed acyclic graph over named columns. Edges are `(cause, effect)` index pairs.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "DagRepr", into = "DagRepr")]
pub struct Dag {
    nodes: Vec<String>,
    edges: BTreeSet<(usize, usize)>,
}

#[derive(Serialize, Deserialize)]
struct DagRepr {
    nodes: Vec<String>,
    edges: Vec<(String, String)>,
}

impl From<Dag> for DagRepr {
    fn from(dag: Dag) -> Self {
        DagRepr {
            edges: dag.named_edges(),
            nodes: dag.nodes,
        }
    }
}

impl TryFrom<DagRepr> for Dag {
    type Error = DagError;

    fn try_from(repr: DagRepr) -> Result<Self, Self::Error> {
        let mut dag = Dag::new(repr.nodes);
        for (from, to) in &repr.edges {
            dag.add_named_edge(from, to)?;
        }
        Ok(dag)
    }
}

/// A single structural edit.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "lowercase")]
pub enum EdgeEdit {
    Add { from: String, to: String },
    Remove { from: String, to: String },
    Reverse { from: String, to: String },
}

impl Dag {
    pub fn new<S: Into<String>>(nodes: impl IntoIterator<Item = S>) -> Self {
        Self {
            nodes: nodes.into_iter().map(Into::into).collect(),
            edges: BTreeSet::new(),
        }
    }

    pub fn nodes(&self) -> &[String] {
        &self.nodes
    }

    pub fn edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.edges.iter().copied()
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn named_edges(&self) -> Vec<(String, String)> {
        self.edges
            .iter()
            .map(|&(a, b)| (self.nodes[a].clone(), self.nodes[b].clone()))
            .collect()
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.nodes.iter().position(|n| n == name)
    }

    pub fn has_edge(&self, from: usize, to: usize) -> bool {
        self.edges.contains(&(from, to))
    }

    pub fn parents(&self, node: usize) -> Vec<usize> {
        self.edges
            .iter()
            .filter(|&&(_, b)| b == node)
            .map(|&(a, _)| a)
            .collect()
    }

    fn reaches(&self, from: usize, to: usize) -> bool {
        let mut stack = vec![from];
        let mut seen = vec![false; self.nodes.len()];
        while let Some(n) = stack.pop() {
            if n == to {
                return true;
            }
            if std::mem::replace(&mut seen[n], true) {
                continue;
            }
            stack.extend(self.edges.iter().filter(|&&(a, _)| a == n).map(|&(_, b)| b));
        }
        false
    }

    /// Whether inserting `from -> to` would close a directed cycle.
    pub fn would_cycle(&self, from: usize, to: usize) -> bool {
        from == to || self.reaches(to, from)
    }

    pub fn add_edge(&mut self, from: usize, to: usize) -> Result<(), DagError> {
        let n = self.nodes.len();
        if from >= n || to >= n {
            return Err(DagError::UnknownNode(format!("index {}", from.max(to))));
        }
        if self.would_cycle(from, to) {
            return Err(DagError::Cycle(self.nodes[from].clone(), self.nodes[to].clone()));
        }
        self.edges.insert((from, to));
        Ok(())
    }

    pub fn add_named_edge(&mut self, from: &str, to: &str) -> Result<(), DagError> {
        let a = self
            .index_of(from)
            .ok_or_else(|| DagError::UnknownNode(from.to_string()))?;
        let b = self
            .index_of(to)
            .ok_or_else(|| DagError::UnknownNode(to.to_string()))?;
        self.add_edge(a, b)
    }

    pub fn remove_edge(&mut self, from: usize, to: usize) -> bool {
        self.edges.remove(&(from, to))
    }

    /// Flips `from -> to`; the graph is left untouched if that would cycle.
    pub fn reverse_edge(&mut self, from: usize, to: usize) -> Result<(), DagError> {
        if !self.edges.remove(&(from, to)) {
            return Ok(());
        }
        if self.would_cycle(to, from) {
            self.edges.insert((from, to));
            return Err(DagError::Cycle(self.nodes[to].clone(), self.nodes[from].clone()));
        }
        self.edges.insert((to, from));
        Ok(())
    }

    /// Applies an edit by name. Adding an existing edge or removing a missing one is a no-op.
    pub fn apply(&mut self, edit: &EdgeEdit) -> Result<(), DagError> {
        let idx = |dag: &Dag, name: &str| {
            dag.index_of(name)
                .ok_or_else(|| DagError::UnknownNode(name.to_string()))
        };
        match edit {
            EdgeEdit::Add { from, to } => {
                let (a, b) = (idx(self, from)?, idx(self, to)?);
                if self.has_edge(a, b) {
                    return Ok(());
                }
                self.add_edge(a, b)
            }
            EdgeEdit::Remove { from, to } => {
                let (a, b) = (idx(self, from)?, idx(self, to)?);
                self.remove_edge(a, b);
                Ok(())
            }
            EdgeEdit::Reverse { from, to } => {
                let (a, b) = (idx(self, from)?, idx(self, to)?);
                self.reverse_edge(a, b)
            }
        }
    }

    /// Kahn order; ties resolved by node index.
    pub fn topological_order(&self) -> Vec<usize> {
        let n = self.nodes.len();
        let mut indegree = vec![0usize; n];
        for &(_, b) in &self.edges {
            indegree[b] += 1;
        }
        let mut ready: BTreeSet<usize> = (0..n).filter(|&i| indegree[i] == 0).collect();
        let mut order = Vec::with_capacity(n);
        while let Some(&next) = ready.iter().next() {
            ready.remove(&next);
            order.push(next);
            for &(a, b) in &self.edges {
                if a == next {
                    indegree[b] -= 1;
                    if indegree[b] == 0 {
                        ready.insert(b);
                    }
                }
            }
        }
        order
    }

    /// Graphviz rendering for inspection.
    pub fn to_dot(&self) -> String {
        let mut out = String::from("digraph {\n");
        for n in &self.nodes {
            out.push_str(&format!("  {n:?};\n"));
        }
        for (a, b) in self.named_edges() {
            out.push_str(&format!("  {a:?} -> {b:?};\n"));
        }
        out.push('}');
        out
    }

    fn pair_state(&self, i: usize, j: usize) -> i8 {
        if self.has_edge(i, j) {
            1
        } else if self.has_edge(j, i) {
            -1
        } else {
            0
        }
    }
}

/// Structural Hamming distance: one unit per node pair whose edge state differs,
/// so an addition, a deletion and a reversal each cost 1.
pub fn ged(a: &Dag, b: &Dag) -> Result<usize, DagError> {
    let same_nodes = a.nodes.len() == b.nodes.len()
        && a.nodes.iter().collect::<BTreeSet<_>>() == b.nodes.iter().collect::<BTreeSet<_>>();
    if !same_nodes {
        return Err(DagError::NodeMismatch);
    }
    // Map b's indices onto a's node order.
    let remap: Vec<usize> = a
        .nodes
        .iter()
        .map(|n| b.index_of(n).expect("node sets are equal"))
        .collect();
    let n = a.nodes.len();
    let mut distance = 0;
    for i in 0..n {
        for j in (i + 1)..n {
            if a.pair_state(i, j) != b.pair_state(remap[i], remap[j]) {
                distance += 1;
            }
        }
    }
    Ok(distance)
}
