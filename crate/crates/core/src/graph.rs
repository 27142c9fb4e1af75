//! Directed graphs over named factors.

use std::collections::{BTreeSet, HashSet, VecDeque};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GraphError {
    #[error("graph contains a directed cycle")]
    CyclicGraph,
    #[error("unknown factor `{0}`")]
    UnknownFactor(String),
    #[error("adjacency is not {expected}x{expected} (found {found} rows or a ragged row)")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("adjacency entry ({0}, {1}) is not 0 or 1")]
    NonBinary(usize, usize),
    #[error("self loop on factor {0}")]
    SelfLoop(usize),
    #[error("duplicate factor name `{0}`")]
    DuplicateName(String),
    #[error("graphs with more than 64 factors are not supported (got {0})")]
    TooLarge(usize),
}

/// A directed graph over `d` factors stored as a dense binary adjacency
/// matrix. `adjacency[i][j] = 1` means factor `i` causes factor `j`.
///
/// A graph becomes *finalized* once it has been checked to be acyclic; the
/// pipeline stages that need a DAG only accept finalized graphs.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct CausalGraph {
    names: Vec<String>,
    adj: Vec<bool>,
    finalized: bool,
}

pub const MAX_FACTORS: usize = 64;

impl CausalGraph {
    pub fn empty(names: Vec<String>) -> Result<Self, GraphError> {
        check_names(&names)?;
        let d = names.len();
        Ok(Self {
            names,
            adj: vec![false; d * d],
            finalized: false,
        })
    }

    pub fn from_adjacency(names: Vec<String>, rows: &[Vec<u8>]) -> Result<Self, GraphError> {
        let mut g = Self::empty(names)?;
        let d = g.d();
        if rows.len() != d || rows.iter().any(|r| r.len() != d) {
            return Err(GraphError::DimensionMismatch {
                expected: d,
                found: rows.len(),
            });
        }
        for (i, row) in rows.iter().enumerate() {
            for (j, &v) in row.iter().enumerate() {
                match v {
                    0 => {}
                    1 if i == j => return Err(GraphError::SelfLoop(i)),
                    1 => g.adj[i * d + j] = true,
                    _ => return Err(GraphError::NonBinary(i, j)),
                }
            }
        }
        Ok(g)
    }

    /// Builds a graph from `(cause, effect)` index pairs.
    pub fn from_edges(names: Vec<String>, edges: &[(usize, usize)]) -> Result<Self, GraphError> {
        let mut g = Self::empty(names)?;
        for &(i, j) in edges {
            if i == j {
                return Err(GraphError::SelfLoop(i));
            }
            let d = g.d();
            if i >= d || j >= d {
                return Err(GraphError::DimensionMismatch { expected: d, found: i.max(j) + 1 });
            }
            g.adj[i * d + j] = true;
        }
        Ok(g)
    }

    pub fn d(&self) -> usize {
        self.names.len()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn index_of(&self, name: &str) -> Result<usize, GraphError> {
        self.names
            .iter()
            .position(|n| n == name)
            .ok_or_else(|| GraphError::UnknownFactor(name.to_string()))
    }

    pub fn has_edge(&self, i: usize, j: usize) -> bool {
        self.adj[i * self.d() + j]
    }

    /// Sets or clears `i -> j`. Clears the finalized flag.
    pub fn set_edge(&mut self, i: usize, j: usize, present: bool) {
        assert_ne!(i, j, "self loops are not allowed");
        let d = self.d();
        self.adj[i * d + j] = present;
        self.finalized = false;
    }

    pub fn edge_count(&self) -> usize {
        self.adj.iter().filter(|&&b| b).count()
    }

    /// Edges in row-major order.
    pub fn edges(&self) -> Vec<(usize, usize)> {
        let d = self.d();
        (0..d)
            .flat_map(|i| (0..d).map(move |j| (i, j)))
            .filter(|&(i, j)| self.has_edge(i, j))
            .collect()
    }

    pub fn parents(&self, j: usize) -> Vec<usize> {
        (0..self.d()).filter(|&i| self.has_edge(i, j)).collect()
    }

    pub fn children(&self, i: usize) -> Vec<usize> {
        (0..self.d()).filter(|&j| self.has_edge(i, j)).collect()
    }

    /// Parent set of `j` as a bit mask (bit `i` set for parent `i`).
    pub fn parent_mask(&self, j: usize) -> u64 {
        let mut mask = 0u64;
        for i in 0..self.d() {
            if self.has_edge(i, j) {
                mask |= 1 << i;
            }
        }
        mask
    }

    pub fn adjacency_rows(&self) -> Vec<Vec<u8>> {
        let d = self.d();
        (0..d)
            .map(|i| (0..d).map(|j| self.has_edge(i, j) as u8).collect())
            .collect()
    }

    /// Row-major adjacency as a flat boolean slice.
    pub fn adjacency(&self) -> &[bool] {
        &self.adj
    }

    /// Row-major adjacency bit string, e.g. `"010001000"`.
    pub fn bit_string(&self) -> String {
        self.adj.iter().map(|&b| if b { '1' } else { '0' }).collect()
    }

    /// Depth-first cycle detection.
    pub fn is_acyclic(&self) -> bool {
        has_topological_order(self.d(), &self.adj)
    }

    /// Kahn order with ties broken by the smallest index.
    pub fn topological_order(&self) -> Result<Vec<usize>, GraphError> {
        let d = self.d();
        let mut indeg: Vec<usize> = (0..d).map(|j| self.parents(j).len()).collect();
        let mut ready: BTreeSet<usize> = (0..d).filter(|&j| indeg[j] == 0).collect();
        let mut order = Vec::with_capacity(d);
        while let Some(i) = ready.pop_first() {
            order.push(i);
            for j in self.children(i) {
                indeg[j] -= 1;
                if indeg[j] == 0 {
                    ready.insert(j);
                }
            }
        }
        if order.len() == d {
            Ok(order)
        } else {
            Err(GraphError::CyclicGraph)
        }
    }

    /// Checks acyclicity and marks the graph as a finished DAG.
    pub fn finalize(mut self) -> Result<Self, GraphError> {
        if !self.is_acyclic() {
            return Err(GraphError::CyclicGraph);
        }
        self.finalized = true;
        Ok(self)
    }

    pub fn is_finalized(&self) -> bool {
        self.finalized
    }

    /// Stratifies the DAG: level 0 holds the parentless nodes, level k the
    /// nodes whose parents all sit in levels below k.
    pub fn causal_order(&self) -> Result<Vec<Vec<usize>>, GraphError> {
        let d = self.d();
        let order = self.topological_order()?;
        let mut level = vec![0usize; d];
        for &j in &order {
            level[j] = self.parents(j).iter().map(|&p| level[p] + 1).max().unwrap_or(0);
        }
        let depth = level.iter().copied().max().map_or(0, |m| m + 1);
        let mut levels = vec![Vec::new(); depth];
        for (j, &l) in level.iter().enumerate() {
            levels[l].push(j);
        }
        Ok(levels)
    }

    pub fn causal_order_names(&self) -> Result<Vec<Vec<String>>, GraphError> {
        Ok(self
            .causal_order()?
            .into_iter()
            .map(|lvl| lvl.into_iter().map(|i| self.names[i].clone()).collect())
            .collect())
    }

    /// All nodes with a directed path into `node`, excluding `node`.
    pub fn ancestor_indices(&self, node: usize) -> BTreeSet<usize> {
        self.reverse_reachable(node, None)
    }

    pub fn ancestors(&self, node: &str) -> Result<BTreeSet<String>, GraphError> {
        let idx = self.index_of(node)?;
        Ok(self
            .ancestor_indices(idx)
            .into_iter()
            .map(|i| self.names[i].clone())
            .collect())
    }

    /// Nodes that reach `target` along directed paths avoiding `blocked`.
    pub fn reverse_reachable(&self, target: usize, blocked: Option<usize>) -> BTreeSet<usize> {
        let mut seen = BTreeSet::new();
        let mut queue = VecDeque::from([target]);
        while let Some(v) = queue.pop_front() {
            for p in self.parents(v) {
                if Some(p) == blocked || p == target {
                    continue;
                }
                if seen.insert(p) {
                    queue.push_back(p);
                }
            }
        }
        seen
    }

    /// Copy keeping only the edges accepted by `keep`.
    pub fn filter_edges(&self, mut keep: impl FnMut(usize, usize) -> bool) -> CausalGraph {
        let mut g = self.clone();
        for (i, j) in self.edges() {
            if !keep(i, j) {
                g.adj[i * self.d() + j] = false;
            }
        }
        g
    }

    /// Structural Hamming distance: node pairs whose edge status differs
    /// (a reversed edge counts once).
    pub fn shd(&self, other: &CausalGraph) -> usize {
        assert_eq!(self.d(), other.d());
        let d = self.d();
        let mut dist = 0;
        for i in 0..d {
            for j in (i + 1)..d {
                let a = (self.has_edge(i, j), self.has_edge(j, i));
                let b = (other.has_edge(i, j), other.has_edge(j, i));
                if a != b {
                    dist += 1;
                }
            }
        }
        dist
    }

    /// Same skeleton and same v-structures.
    pub fn markov_equivalent(&self, other: &CausalGraph) -> bool {
        if self.d() != other.d() {
            return false;
        }
        let d = self.d();
        let adjacent = |g: &CausalGraph, i: usize, j: usize| g.has_edge(i, j) || g.has_edge(j, i);
        for i in 0..d {
            for j in 0..d {
                if i != j && adjacent(self, i, j) != adjacent(other, i, j) {
                    return false;
                }
            }
        }
        self.v_structures() == other.v_structures()
    }

    fn v_structures(&self) -> HashSet<(usize, usize, usize)> {
        let mut out = HashSet::new();
        for c in 0..self.d() {
            let ps = self.parents(c);
            for (k, &a) in ps.iter().enumerate() {
                for &b in &ps[k + 1..] {
                    if !self.has_edge(a, b) && !self.has_edge(b, a) {
                        out.insert((a.min(b), c, a.max(b)));
                    }
                }
            }
        }
        out
    }

    pub fn to_dot(&self) -> String {
        let mut s = String::from("digraph causal {\n");
        for name in &self.names {
            let _ = writeln!(s, "  \"{}\";", escape(name));
        }
        for (i, j) in self.edges() {
            let _ = writeln!(s, "  \"{}\" -> \"{}\";", escape(&self.names[i]), escape(&self.names[j]));
        }
        s.push_str("}\n");
        s
    }
}

fn escape(name: &str) -> String {
    name.replace('\\', "\\\\").replace('"', "\\\"")
}

fn check_names(names: &[String]) -> Result<(), GraphError> {
    if names.len() > MAX_FACTORS {
        return Err(GraphError::TooLarge(names.len()));
    }
    let mut seen = HashSet::new();
    for n in names {
        if !seen.insert(n.as_str()) {
            return Err(GraphError::DuplicateName(n.clone()));
        }
    }
    Ok(())
}

/// Iterative three-colour DFS over a row-major adjacency.
pub fn has_topological_order(d: usize, adj: &[bool]) -> bool {
    #[derive(Clone, Copy, PartialEq)]
    enum Mark {
        White,
        Grey,
        Black,
    }
    let mut mark = vec![Mark::White; d];
    for root in 0..d {
        if mark[root] != Mark::White {
            continue;
        }
        let mut stack = vec![(root, 0usize)];
        mark[root] = Mark::Grey;
        while let Some((v, next)) = stack.last_mut() {
            let v = *v;
            if *next == d {
                mark[v] = Mark::Black;
                stack.pop();
                continue;
            }
            let w = *next;
            *next += 1;
            if !adj[v * d + w] {
                continue;
            }
            match mark[w] {
                Mark::Grey => return false,
                Mark::White => {
                    mark[w] = Mark::Grey;
                    stack.push((w, 0));
                }
                Mark::Black => {}
            }
        }
    }
    true
}

/// On-disk graph artifact.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct GraphJson {
    pub factor_names: Vec<String>,
    pub adjacency: Vec<Vec<u8>>,
    pub bic: f64,
    pub seed: u64,
}

impl GraphJson {
    pub fn from_graph(graph: &CausalGraph, bic: f64, seed: u64) -> Self {
        Self {
            factor_names: graph.names().to_vec(),
            adjacency: graph.adjacency_rows(),
            bic,
            seed,
        }
    }

    pub fn to_graph(&self) -> Result<CausalGraph, GraphError> {
        CausalGraph::from_adjacency(self.factor_names.clone(), &self.adjacency)
    }
}
