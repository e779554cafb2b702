//! Undirected graphs, Markov blanket families and edge-set metrics.

use std::collections::BTreeSet;
use std::fmt;
use std::io::{BufRead, Write};

use crate::error::{parse_err, Error, Result};

/// An unordered node pair stored as `(min, max)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Edge(usize, usize);

impl Edge {
    /// Panics on a self-loop.
    pub fn new(a: usize, b: usize) -> Self {
        assert_ne!(a, b, "self-loop {a}-{a}");
        if a < b {
            Edge(a, b)
        } else {
            Edge(b, a)
        }
    }

    pub fn lo(&self) -> usize {
        self.0
    }

    pub fn hi(&self) -> usize {
        self.1
    }

    pub fn touches(&self, v: usize) -> bool {
        self.0 == v || self.1 == v
    }

    pub fn shares_node(&self, other: &Edge) -> bool {
        self.touches(other.0) || self.touches(other.1)
    }
}

impl fmt::Display for Edge {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{{{},{}}}", self.0, self.1)
    }
}

/// Simple undirected graph on nodes `0..d`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct UGraph {
    adj: Vec<BTreeSet<usize>>,
    edges: BTreeSet<Edge>,
}

impl UGraph {
    pub fn empty(d: usize) -> Self {
        Self {
            adj: vec![BTreeSet::new(); d],
            edges: BTreeSet::new(),
        }
    }

    pub fn complete(d: usize) -> Self {
        let mut g = Self::empty(d);
        for i in 0..d {
            for j in i + 1..d {
                g.add_edge(i, j);
            }
        }
        g
    }

    pub fn from_edges<I>(d: usize, edges: I) -> Result<Self>
    where
        I: IntoIterator<Item = (usize, usize)>,
    {
        let mut g = Self::empty(d);
        for (a, b) in edges {
            if a >= d || b >= d {
                return Err(Error::NodeOutOfRange { node: a.max(b), d });
            }
            if a == b {
                return Err(Error::InvalidArgument(format!("self-loop on node {a}")));
            }
            g.add_edge(a, b);
        }
        Ok(g)
    }

    pub fn d(&self) -> usize {
        self.adj.len()
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    /// Edges in lexicographic order.
    pub fn edges(&self) -> impl Iterator<Item = Edge> + '_ {
        self.edges.iter().copied()
    }

    pub fn edge_set(&self) -> &BTreeSet<Edge> {
        &self.edges
    }

    pub fn neighbors(&self, v: usize) -> &BTreeSet<usize> {
        &self.adj[v]
    }

    /// Sorted neighbor list, which is the Markov blanket of `v`.
    pub fn blanket(&self, v: usize) -> Vec<usize> {
        self.adj[v].iter().copied().collect()
    }

    pub fn degree(&self, v: usize) -> usize {
        self.adj[v].len()
    }

    pub fn has_edge(&self, a: usize, b: usize) -> bool {
        a != b && self.adj[a].contains(&b)
    }

    pub fn contains(&self, e: Edge) -> bool {
        self.edges.contains(&e)
    }

    /// Returns `true` if the edge was new.
    pub fn add_edge(&mut self, a: usize, b: usize) -> bool {
        let e = Edge::new(a, b);
        if self.edges.insert(e) {
            self.adj[a].insert(b);
            self.adj[b].insert(a);
            true
        } else {
            false
        }
    }

    pub fn remove_edge(&mut self, a: usize, b: usize) -> bool {
        let e = Edge::new(a, b);
        if self.edges.remove(&e) {
            self.adj[a].remove(&b);
            self.adj[b].remove(&a);
            true
        } else {
            false
        }
    }

    /// Adds the edge if absent, removes it otherwise.
    pub fn toggle(&mut self, e: Edge) {
        if !self.remove_edge(e.0, e.1) {
            self.add_edge(e.0, e.1);
        }
    }

    pub fn is_subgraph_of(&self, other: &UGraph) -> bool {
        self.d() == other.d() && self.edges.is_subset(&other.edges)
    }

    pub fn max_degree(&self) -> usize {
        (0..self.d()).map(|v| self.degree(v)).max().unwrap_or(0)
    }

    pub fn mean_degree(&self) -> f64 {
        if self.d() == 0 {
            0.0
        } else {
            2.0 * self.edge_count() as f64 / self.d() as f64
        }
    }

    /// Connected components, each sorted, ordered by smallest member.
    pub fn components(&self) -> Vec<Vec<usize>> {
        let d = self.d();
        let mut seen = vec![false; d];
        let mut out = Vec::new();
        for s in 0..d {
            if seen[s] {
                continue;
            }
            seen[s] = true;
            let mut comp = vec![s];
            let mut stack = vec![s];
            while let Some(v) = stack.pop() {
                for &w in &self.adj[v] {
                    if !seen[w] {
                        seen[w] = true;
                        comp.push(w);
                        stack.push(w);
                    }
                }
            }
            comp.sort_unstable();
            out.push(comp);
        }
        out
    }

    pub fn is_forest(&self) -> bool {
        self.edge_count() + self.components().len() == self.d()
    }

    /// Disjoint union; nodes of `other` are shifted by `self.d()`.
    pub fn disjoint_union(&self, other: &UGraph) -> UGraph {
        let off = self.d();
        let mut g = UGraph::empty(off + other.d());
        for e in self
            .edges()
            .chain(other.edges().map(|e| Edge(e.0 + off, e.1 + off)))
        {
            g.add_edge(e.0, e.1);
        }
        g
    }

    /// Reads the graph file format: `d <count>` then one `i j` edge per line.
    pub fn read<R: BufRead>(source: R) -> Result<Self> {
        let mut graph: Option<UGraph> = None;
        for (idx, line) in source.lines().enumerate() {
            let lineno = idx + 1;
            let line = line?;
            let t = line.trim();
            if t.is_empty() || t.starts_with('#') {
                continue;
            }
            let toks: Vec<&str> = t.split_whitespace().collect();
            match &mut graph {
                None => {
                    if toks.len() != 2 || toks[0] != "d" {
                        return Err(parse_err(lineno, "expected header `d <count>`"));
                    }
                    let d: usize = toks[1]
                        .parse()
                        .map_err(|_| parse_err(lineno, "invalid node count"))?;
                    graph = Some(UGraph::empty(d));
                }
                Some(g) => {
                    if toks.len() != 2 {
                        return Err(parse_err(lineno, "expected an edge `i j`"));
                    }
                    let parse = |s: &str| {
                        s.parse::<usize>()
                            .map_err(|_| parse_err(lineno, format!("invalid node `{s}`")))
                    };
                    let (a, b) = (parse(toks[0])?, parse(toks[1])?);
                    if a >= g.d() || b >= g.d() {
                        return Err(parse_err(lineno, format!("node out of range in `{t}`")));
                    }
                    if a == b {
                        return Err(parse_err(lineno, "self-loop"));
                    }
                    g.add_edge(a, b);
                }
            }
        }
        graph.ok_or_else(|| parse_err(0, "missing `d <count>` header"))
    }

    pub fn write<W: Write>(&self, mut sink: W) -> Result<()> {
        writeln!(sink, "d {}", self.d())?;
        for e in self.edges() {
            writeln!(sink, "{} {}", e.0, e.1)?;
        }
        Ok(())
    }
}

/// Per-node Markov blankets that need not be mutually consistent.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BlanketFamily {
    blankets: Vec<BTreeSet<usize>>,
}

/// How asymmetric blanket memberships are turned into edges.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Combine {
    And,
    Or,
}

impl BlanketFamily {
    pub fn empty(d: usize) -> Self {
        Self {
            blankets: vec![BTreeSet::new(); d],
        }
    }

    pub fn new(blankets: Vec<Vec<usize>>) -> Result<Self> {
        let d = blankets.len();
        let mut out = Vec::with_capacity(d);
        for (j, mb) in blankets.into_iter().enumerate() {
            let set: BTreeSet<usize> = mb.into_iter().collect();
            if set.contains(&j) {
                return Err(Error::NodeInBlanket { node: j });
            }
            if let Some(&i) = set.iter().find(|&&i| i >= d) {
                return Err(Error::NodeOutOfRange { node: i, d });
            }
            out.push(set);
        }
        Ok(Self { blankets: out })
    }

    pub fn d(&self) -> usize {
        self.blankets.len()
    }

    pub fn blanket(&self, j: usize) -> &BTreeSet<usize> {
        &self.blankets[j]
    }

    /// `i ∈ mb(j) ⇒ j ∈ mb(i)` for every pair.
    pub fn is_symmetric(&self) -> bool {
        self.blankets
            .iter()
            .enumerate()
            .all(|(j, mb)| mb.iter().all(|&i| self.blankets[i].contains(&j)))
    }

    pub fn combine(&self, mode: Combine) -> UGraph {
        let mut g = UGraph::empty(self.d());
        for (j, mb) in self.blankets.iter().enumerate() {
            for &i in mb {
                let keep = match mode {
                    Combine::And => self.blankets[i].contains(&j),
                    Combine::Or => true,
                };
                if keep {
                    g.add_edge(i, j);
                }
            }
        }
        g
    }

    /// Writes `d <count>` followed by one `j: m1 m2 …` line per node.
    pub fn write<W: Write>(&self, mut sink: W) -> Result<()> {
        writeln!(sink, "d {}", self.d())?;
        for (j, mb) in self.blankets.iter().enumerate() {
            let members: Vec<String> = mb.iter().map(|i| i.to_string()).collect();
            if members.is_empty() {
                writeln!(sink, "{j}:")?;
            } else {
                writeln!(sink, "{j}: {}", members.join(" "))?;
            }
        }
        Ok(())
    }
}

/// Free-function form of [`BlanketFamily::combine`].
pub fn combine(family: &BlanketFamily, mode: Combine) -> UGraph {
    family.combine(mode)
}

/// Free-function form of [`BlanketFamily::is_symmetric`].
pub fn is_symmetric(family: &BlanketFamily) -> bool {
    family.is_symmetric()
}

/// A single-edge move.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Toggle {
    Add,
    Remove,
}

/// One entry per edge of `space`: remove if present in `g`, add otherwise,
/// in lexicographic edge order.
pub fn restricted_neighbors(g: &UGraph, space: &UGraph) -> Result<Vec<(Edge, Toggle)>> {
    if g.d() != space.d() {
        return Err(Error::DimensionMismatch(format!(
            "graph on {} nodes, space on {}",
            g.d(),
            space.d()
        )));
    }
    if !g.is_subgraph_of(space) {
        return Err(Error::NotInSpace);
    }
    Ok(space
        .edges()
        .map(|e| {
            let t = if g.contains(e) {
                Toggle::Remove
            } else {
                Toggle::Add
            };
            (e, t)
        })
        .collect())
}

/// Edge-set confusion counts of a learned graph against the truth.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct ConfusionCounts {
    pub tp: usize,
    pub fp: usize,
    pub fn_: usize,
    pub tn: usize,
}

impl ConfusionCounts {
    pub fn hamming(&self) -> usize {
        self.fp + self.fn_
    }
}

pub fn confusion(learned: &UGraph, truth: &UGraph) -> Result<ConfusionCounts> {
    if learned.d() != truth.d() {
        return Err(Error::DimensionMismatch(format!(
            "learned graph has {} nodes, truth has {}",
            learned.d(),
            truth.d()
        )));
    }
    let d = truth.d();
    let tp = learned.edge_set().intersection(truth.edge_set()).count();
    let fp = learned.edge_count() - tp;
    let fn_ = truth.edge_count() - tp;
    let tn = d * d.saturating_sub(1) / 2 - tp - fp - fn_;
    Ok(ConfusionCounts { tp, fp, fn_, tn })
}
