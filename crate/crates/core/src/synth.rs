//! Synthetic Markov networks: fixed 16-node components, random clique
//! factors, exact per-component joints and sampling; Bayesian networks and
//! their moral graphs.
//!
//! Randomness comes from ChaCha8 seeded with `seed_from_u64(seed)`. Work on
//! connected component `c` (in [`UGraph::components`] order) uses stream `c`
//! of that generator, so results do not depend on processing order.

use std::io::{BufRead, Write};

use rand::distributions::Open01;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::data::Dataset;
use crate::error::{parse_err, Error, Result};
use crate::graph::UGraph;

/// Largest component state space that is normalized exactly.
pub const MAX_COMPONENT_STATES: u64 = 1 << 20;

/// The four 16-node component topologies.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ComponentKind {
    Grid,
    Hub,
    Loop,
    Clique,
}

impl ComponentKind {
    pub const ALL: [ComponentKind; 4] = [
        ComponentKind::Grid,
        ComponentKind::Hub,
        ComponentKind::Loop,
        ComponentKind::Clique,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            ComponentKind::Grid => "grid",
            ComponentKind::Hub => "hub",
            ComponentKind::Loop => "loop",
            ComponentKind::Clique => "clique",
        }
    }
}

impl std::str::FromStr for ComponentKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "grid" => Ok(ComponentKind::Grid),
            "hub" => Ok(ComponentKind::Hub),
            "loop" => Ok(ComponentKind::Loop),
            "clique" => Ok(ComponentKind::Clique),
            other => Err(Error::InvalidArgument(format!(
                "unknown component `{other}`"
            ))),
        }
    }
}

fn graph_of(edges: &[(usize, usize)]) -> UGraph {
    UGraph::from_edges(16, edges.iter().copied()).expect("valid fixed topology")
}

/// The fixed 16-node graph of a component kind.
///
/// * grid: 4×4 lattice, node `4·row + col`.
/// * hub: node 0 joined to spokes 1–8; leaf `8 + s` hangs off spoke `s` for `s` in 1–7.
/// * loop: the 16-cycle with chords {0,4}, {0,8}, {2,12}.
/// * clique: 5-cliques on 0–4 and 5–9, nodes 10–15 isolated.
pub fn gen_component(kind: ComponentKind) -> UGraph {
    let mut edges = Vec::new();
    match kind {
        ComponentKind::Grid => {
            for r in 0..4 {
                for c in 0..4 {
                    let v = 4 * r + c;
                    if c < 3 {
                        edges.push((v, v + 1));
                    }
                    if r < 3 {
                        edges.push((v, v + 4));
                    }
                }
            }
        }
        ComponentKind::Hub => {
            for s in 1..=8 {
                edges.push((0, s));
            }
            for s in 1..=7 {
                edges.push((s, 8 + s));
            }
        }
        ComponentKind::Loop => {
            for v in 0..16 {
                edges.push((v, (v + 1) % 16));
            }
            edges.extend([(0, 4), (0, 8), (2, 12)]);
        }
        ComponentKind::Clique => {
            for block in [0, 5] {
                for a in block..block + 5 {
                    for b in a + 1..block + 5 {
                        edges.push((a, b));
                    }
                }
            }
        }
    }
    graph_of(&edges)
}

/// Disjoint union of `replicas` rounds of the listed kinds, in order
/// `kinds[0], kinds[1], …` for each round.
pub fn replicate(kinds: &[ComponentKind], replicas: usize) -> Result<UGraph> {
    if replicas == 0 {
        return Err(Error::InvalidArgument("replicas must be at least 1".into()));
    }
    if kinds.is_empty() {
        return Err(Error::InvalidArgument("no component kinds given".into()));
    }
    let mut g = UGraph::empty(0);
    for _ in 0..replicas {
        for &k in kinds {
            g = g.disjoint_union(&gen_component(k));
        }
    }
    Ok(g)
}

/// All maximal cliques, each sorted, in lexicographic order.
pub fn maximal_cliques(g: &UGraph) -> Vec<Vec<usize>> {
    fn expand(
        g: &UGraph,
        r: &mut Vec<usize>,
        mut p: Vec<usize>,
        mut x: Vec<usize>,
        out: &mut Vec<Vec<usize>>,
    ) {
        if p.is_empty() {
            if x.is_empty() {
                let mut c = r.clone();
                c.sort_unstable();
                out.push(c);
            }
            return;
        }
        let pivot = p
            .iter()
            .chain(&x)
            .copied()
            .max_by_key(|&u| {
                (
                    p.iter().filter(|&&v| g.has_edge(u, v)).count(),
                    std::cmp::Reverse(u),
                )
            })
            .expect("p is non-empty");
        let branch: Vec<usize> = p
            .iter()
            .copied()
            .filter(|&v| !g.has_edge(pivot, v))
            .collect();
        for v in branch {
            r.push(v);
            let np = p.iter().copied().filter(|&u| g.has_edge(v, u)).collect();
            let nx = x.iter().copied().filter(|&u| g.has_edge(v, u)).collect();
            expand(g, r, np, nx, out);
            r.pop();
            p.retain(|&u| u != v);
            x.push(v);
        }
    }
    let mut out = Vec::new();
    expand(
        g,
        &mut Vec::new(),
        (0..g.d()).collect(),
        Vec::new(),
        &mut out,
    );
    out.sort();
    out
}

/// A positive table over the joint states of `nodes` (row-major, first node most significant).
#[derive(Debug, Clone, PartialEq)]
pub struct CliqueFactor {
    pub nodes: Vec<usize>,
    pub values: Vec<f64>,
}

/// Exact normalized joint of one connected component.
#[derive(Debug, Clone, PartialEq)]
pub struct ComponentJoint {
    pub nodes: Vec<usize>,
    /// Probabilities in row-major order over `nodes`.
    pub probs: Vec<f64>,
    /// Log partition function.
    pub log_z: f64,
}

impl ComponentJoint {
    /// Category of each component node for joint state `state`.
    pub fn decode(&self, cards: &[usize], mut state: usize) -> Vec<u32> {
        let mut out = vec![0u32; self.nodes.len()];
        for (slot, &v) in out.iter_mut().zip(&self.nodes).rev() {
            *slot = (state % cards[v]) as u32;
            state /= cards[v];
        }
        out
    }
}

/// Markov network with explicit clique factors and exact component joints.
#[derive(Debug, Clone, PartialEq)]
pub struct FactorModel {
    pub graph: UGraph,
    pub cards: Vec<usize>,
    pub factors: Vec<CliqueFactor>,
    pub components: Vec<ComponentJoint>,
}

fn state_space(cards: &[usize], nodes: &[usize]) -> u128 {
    nodes
        .iter()
        .fold(1u128, |acc, &v| acc.saturating_mul(cards[v] as u128))
}

impl FactorModel {
    /// Validates the factors and normalizes each component exactly.
    pub fn new(graph: UGraph, cards: Vec<usize>, factors: Vec<CliqueFactor>) -> Result<Self> {
        if cards.len() != graph.d() {
            return Err(Error::DimensionMismatch(format!(
                "{} cardinalities for {} nodes",
                cards.len(),
                graph.d()
            )));
        }
        if cards.contains(&0) {
            return Err(Error::InvalidArgument(
                "cardinalities must be positive".into(),
            ));
        }
        for f in &factors {
            if f.nodes.windows(2).any(|w| w[0] >= w[1]) || f.nodes.is_empty() {
                return Err(Error::InvalidArgument(format!(
                    "factor scope {:?} must be non-empty and strictly increasing",
                    f.nodes
                )));
            }
            if let Some(&v) = f.nodes.iter().find(|&&v| v >= graph.d()) {
                return Err(Error::NodeOutOfRange {
                    node: v,
                    d: graph.d(),
                });
            }
            for (a, &u) in f.nodes.iter().enumerate() {
                for &w in &f.nodes[a + 1..] {
                    if !graph.has_edge(u, w) {
                        return Err(Error::InvalidArgument(format!(
                            "factor scope {:?} is not a clique",
                            f.nodes
                        )));
                    }
                }
            }
            let size = state_space(&cards, &f.nodes);
            if f.values.len() as u128 != size {
                return Err(Error::InvalidArgument(format!(
                    "factor {:?} has {} values, expected {size}",
                    f.nodes,
                    f.values.len()
                )));
            }
            if f.values.iter().any(|&v| !(v > 0.0 && v.is_finite())) {
                return Err(Error::InvalidArgument(format!(
                    "factor {:?} has a non-positive value",
                    f.nodes
                )));
            }
        }

        let mut components = Vec::new();
        for nodes in graph.components() {
            let states = state_space(&cards, &nodes);
            if states > MAX_COMPONENT_STATES as u128 {
                return Err(Error::ComponentTooLarge {
                    states,
                    limit: MAX_COMPONENT_STATES,
                });
            }
            let local: Vec<&CliqueFactor> = factors
                .iter()
                .filter(|f| nodes.binary_search(&f.nodes[0]).is_ok())
                .collect();
            components.push(component_joint(&cards, nodes, &local));
        }
        Ok(Self {
            graph,
            cards,
            factors,
            components,
        })
    }

    pub fn d(&self) -> usize {
        self.graph.d()
    }

    /// Writes the model file: `NODES`, `CARDS`, an `EDGES` block and one
    /// `FACTOR` block per clique.
    pub fn write<W: Write>(&self, mut sink: W) -> Result<()> {
        writeln!(sink, "NODES {}", self.d())?;
        writeln!(sink, "CARDS {}", join(&self.cards))?;
        writeln!(sink, "EDGES")?;
        for e in self.graph.edges() {
            writeln!(sink, "{} {}", e.lo(), e.hi())?;
        }
        for f in &self.factors {
            writeln!(sink, "FACTOR {}", join(&f.nodes))?;
            writeln!(sink, "{}", join(&f.values))?;
        }
        Ok(())
    }
}

fn join<T: std::fmt::Display>(items: &[T]) -> String {
    items
        .iter()
        .map(|x| x.to_string())
        .collect::<Vec<_>>()
        .join(" ")
}

fn component_joint(
    cards: &[usize],
    nodes: Vec<usize>,
    factors: &[&CliqueFactor],
) -> ComponentJoint {
    let states = state_space(cards, &nodes) as usize;
    // position of each factor node inside the component's row-major layout
    let strides: Vec<usize> = {
        let mut s = vec![1usize; nodes.len()];
        for k in (0..nodes.len().saturating_sub(1)).rev() {
            s[k] = s[k + 1] * cards[nodes[k + 1]];
        }
        s
    };
    let scopes: Vec<Vec<(usize, usize)>> = factors
        .iter()
        .map(|f| {
            f.nodes
                .iter()
                .map(|v| {
                    let pos = nodes.binary_search(v).expect("factor inside component");
                    (strides[pos], cards[nodes[pos]])
                })
                .collect()
        })
        .collect();

    let mut log_unnorm = vec![0.0f64; states];
    for (state, slot) in log_unnorm.iter_mut().enumerate() {
        for (f, scope) in factors.iter().zip(&scopes) {
            let mut idx = 0;
            for &(stride, r) in scope {
                idx = idx * r + (state / stride) % r;
            }
            *slot += f.values[idx].ln();
        }
    }
    let max = log_unnorm.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut probs: Vec<f64> = log_unnorm.iter().map(|&l| (l - max).exp()).collect();
    let z: f64 = probs.iter().sum();
    for p in probs.iter_mut() {
        *p /= z;
    }
    ComponentJoint {
        nodes,
        probs,
        log_z: max + z.ln(),
    }
}

fn component_rng(seed: u64, stream: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream as u64);
    rng
}

/// Random factor model: one factor per maximal clique with entries drawn
/// i.i.d. uniform on the open interval (0, 1).
pub fn draw_factors(g: &UGraph, cards: &[usize], seed: u64) -> Result<FactorModel> {
    if cards.len() != g.d() {
        return Err(Error::DimensionMismatch(format!(
            "{} cardinalities for {} nodes",
            cards.len(),
            g.d()
        )));
    }
    let cliques = maximal_cliques(g);
    let mut factors = Vec::with_capacity(cliques.len());
    for (c, nodes) in g.components().into_iter().enumerate() {
        let states = state_space(cards, &nodes);
        if states > MAX_COMPONENT_STATES as u128 {
            return Err(Error::ComponentTooLarge {
                states,
                limit: MAX_COMPONENT_STATES,
            });
        }
        let mut rng = component_rng(seed, c);
        for clique in cliques
            .iter()
            .filter(|q| nodes.binary_search(&q[0]).is_ok())
        {
            let size = state_space(cards, clique) as usize;
            let values = (0..size).map(|_| rng.sample::<f64, _>(Open01)).collect();
            factors.push(CliqueFactor {
                nodes: clique.clone(),
                values,
            });
        }
    }
    factors.sort_by(|a, b| a.nodes.cmp(&b.nodes));
    FactorModel::new(g.clone(), cards.to_vec(), factors)
}

fn cumulative(probs: &[f64]) -> Vec<f64> {
    let mut acc = 0.0;
    probs
        .iter()
        .map(|&p| {
            acc += p;
            acc
        })
        .collect()
}

fn inverse_cdf(cdf: &[f64], u: f64) -> usize {
    // first state whose cumulative mass exceeds u; rounding slack lands on the last state
    cdf.partition_point(|&c| c <= u).min(cdf.len() - 1)
}

/// Draws `n` i.i.d. rows, each component by inverse CDF over its exact joint.
#[allow(clippy::needless_range_loop)]
pub fn sample(model: &FactorModel, n: usize, seed: u64) -> Dataset {
    let mut columns = vec![vec![0u32; n]; model.d()];
    for (c, comp) in model.components.iter().enumerate() {
        let mut rng = component_rng(seed, c);
        let cdf = cumulative(&comp.probs);
        for k in 0..n {
            let state = inverse_cdf(&cdf, rng.gen::<f64>());
            for (&v, x) in comp.nodes.iter().zip(comp.decode(&model.cards, state)) {
                columns[v][k] = x;
            }
        }
    }
    Dataset::from_columns(model.cards.clone(), columns).expect("sampled values are in range")
}

/// Topological order of a parent-set list, or [`Error::Cycle`].
pub fn topological_order(parents: &[Vec<usize>]) -> Result<Vec<usize>> {
    let d = parents.len();
    let mut children = vec![Vec::new(); d];
    let mut indegree = vec![0usize; d];
    for (v, ps) in parents.iter().enumerate() {
        for &p in ps {
            if p >= d {
                return Err(Error::NodeOutOfRange { node: p, d });
            }
            if p == v {
                return Err(Error::Cycle);
            }
            children[p].push(v);
            indegree[v] += 1;
        }
    }
    // smallest ready node first
    let mut ready: std::collections::BTreeSet<usize> =
        (0..d).filter(|&v| indegree[v] == 0).collect();
    let mut order = Vec::with_capacity(d);
    while let Some(v) = ready.pop_first() {
        order.push(v);
        for &c in &children[v] {
            indegree[c] -= 1;
            if indegree[c] == 0 {
                ready.insert(c);
            }
        }
    }
    if order.len() == d {
        Ok(order)
    } else {
        Err(Error::Cycle)
    }
}

/// Moral graph: co-parents married, directions dropped.
pub fn moralize(parents: &[Vec<usize>]) -> Result<UGraph> {
    topological_order(parents)?;
    let mut g = UGraph::empty(parents.len());
    for (v, ps) in parents.iter().enumerate() {
        for (a, &p) in ps.iter().enumerate() {
            if p != v {
                g.add_edge(p, v);
            }
            for &q in &ps[a + 1..] {
                if p != q {
                    g.add_edge(p, q);
                }
            }
        }
    }
    Ok(g)
}

/// Bayesian network with full conditional probability tables.
#[derive(Debug, Clone, PartialEq)]
pub struct DagModel {
    pub cards: Vec<usize>,
    /// Sorted parent set of each node.
    pub parents: Vec<Vec<usize>>,
    /// Per node: one row of `r_j` probabilities per parent configuration,
    /// parent configurations row-major with the first parent most significant.
    pub cpts: Vec<Vec<f64>>,
}

impl DagModel {
    pub fn new(cards: Vec<usize>, parents: Vec<Vec<usize>>, cpts: Vec<Vec<f64>>) -> Result<Self> {
        let d = cards.len();
        if parents.len() != d || cpts.len() != d {
            return Err(Error::DimensionMismatch(format!(
                "{d} cardinalities, {} parent sets, {} tables",
                parents.len(),
                cpts.len()
            )));
        }
        let parents: Vec<Vec<usize>> = parents
            .into_iter()
            .map(|mut ps| {
                ps.sort_unstable();
                ps.dedup();
                ps
            })
            .collect();
        topological_order(&parents)?;
        for j in 0..d {
            let rows = state_space(&cards, &parents[j]);
            let expect = rows * cards[j] as u128;
            if cpts[j].len() as u128 != expect {
                return Err(Error::InvalidArgument(format!(
                    "table of node {j} has {} entries, expected {expect}",
                    cpts[j].len()
                )));
            }
            for (l, row) in cpts[j].chunks_exact(cards[j]).enumerate() {
                let sum: f64 = row.iter().sum();
                if row.iter().any(|&p| !(0.0..=1.0).contains(&p)) || (sum - 1.0).abs() > 1e-9 {
                    return Err(Error::InvalidArgument(format!(
                        "row {l} of node {j} is not a probability distribution"
                    )));
                }
            }
        }
        Ok(Self {
            cards,
            parents,
            cpts,
        })
    }

    pub fn d(&self) -> usize {
        self.cards.len()
    }

    pub fn moral_graph(&self) -> UGraph {
        moralize(&self.parents).expect("validated acyclic")
    }

    pub fn write<W: Write>(&self, mut sink: W) -> Result<()> {
        writeln!(sink, "NODES {}", self.d())?;
        writeln!(sink, "CARDS {}", join(&self.cards))?;
        for (j, ps) in self.parents.iter().enumerate() {
            if ps.is_empty() {
                writeln!(sink, "PARENTS {j}")?;
            } else {
                writeln!(sink, "PARENTS {j} {}", join(ps))?;
            }
        }
        for (j, cpt) in self.cpts.iter().enumerate() {
            writeln!(sink, "CPT {j}")?;
            writeln!(sink, "{}", join(cpt))?;
        }
        Ok(())
    }
}

/// Ancestral sampling of `n` rows.
#[allow(clippy::needless_range_loop)]
pub fn sample_dag(model: &DagModel, n: usize, seed: u64) -> Dataset {
    let order = topological_order(&model.parents).expect("validated acyclic");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let d = model.d();
    let cdfs: Vec<Vec<Vec<f64>>> = model
        .cpts
        .iter()
        .zip(&model.cards)
        .map(|(cpt, &r)| cpt.chunks_exact(r).map(cumulative).collect())
        .collect();
    let mut columns = vec![vec![0u32; n]; d];
    for k in 0..n {
        for &v in &order {
            let cfg = model.parents[v].iter().fold(0usize, |acc, &p| {
                acc * model.cards[p] + columns[p][k] as usize
            });
            columns[v][k] = inverse_cdf(&cdfs[v][cfg], rng.gen::<f64>()) as u32;
        }
    }
    Dataset::from_columns(model.cards.clone(), columns).expect("sampled values are in range")
}

/// Contents of a model file.
#[derive(Debug, Clone, PartialEq)]
pub enum ModelFile {
    Markov(FactorModel),
    /// A DAG file; tables are present only when every node has a `CPT` block.
    Dag {
        cards: Vec<usize>,
        parents: Vec<Vec<usize>>,
        model: Option<DagModel>,
    },
}

#[derive(PartialEq)]
enum Block {
    None,
    Edges,
    Values,
}

fn parse_usizes(toks: &[&str], lineno: usize) -> Result<Vec<usize>> {
    toks.iter()
        .map(|t| {
            t.parse::<usize>().map_err(|_| {
                parse_err(
                    lineno,
                    format!("expected a non-negative integer, found `{t}`"),
                )
            })
        })
        .collect()
}

/// Reads either model file flavor; `PARENTS`/`CPT` keywords mark a DAG file.
pub fn read_model<R: BufRead>(source: R) -> Result<ModelFile> {
    let mut d: Option<usize> = None;
    let mut cards: Option<Vec<usize>> = None;
    let mut edges: Vec<(usize, usize)> = Vec::new();
    let mut factors: Vec<(usize, Vec<usize>, Vec<f64>)> = Vec::new();
    let mut parents: Vec<Option<Vec<usize>>> = Vec::new();
    let mut cpts: Vec<Option<(usize, Vec<f64>)>> = Vec::new();
    let mut is_dag = false;
    let mut block = Block::None;
    let mut last_line = 0;

    for (idx, line) in source.lines().enumerate() {
        let lineno = idx + 1;
        last_line = lineno;
        let line = line?;
        let t = line.trim();
        if t.is_empty() || t.starts_with('#') {
            continue;
        }
        let toks: Vec<&str> = t.split_whitespace().collect();
        let need_d = || d.ok_or_else(|| parse_err(lineno, "`NODES` must come first"));
        match toks[0] {
            "NODES" => {
                let v = parse_usizes(&toks[1..], lineno)?;
                if v.len() != 1 {
                    return Err(parse_err(lineno, "expected `NODES d`"));
                }
                d = Some(v[0]);
                parents = vec![None; v[0]];
                cpts = vec![None; v[0]];
                block = Block::None;
            }
            "CARDS" => {
                let dd = need_d()?;
                let v = parse_usizes(&toks[1..], lineno)?;
                if v.len() != dd || v.contains(&0) {
                    return Err(parse_err(
                        lineno,
                        format!("expected {dd} positive cardinalities"),
                    ));
                }
                cards = Some(v);
                block = Block::None;
            }
            "EDGES" => {
                need_d()?;
                block = Block::Edges;
            }
            "FACTOR" => {
                need_d()?;
                let nodes = parse_usizes(&toks[1..], lineno)?;
                factors.push((lineno, nodes, Vec::new()));
                block = Block::Values;
            }
            "PARENTS" => {
                let dd = need_d()?;
                is_dag = true;
                let v = parse_usizes(&toks[1..], lineno)?;
                let Some((&child, ps)) = v.split_first() else {
                    return Err(parse_err(lineno, "expected `PARENTS child [parents…]`"));
                };
                if child >= dd || ps.iter().any(|&p| p >= dd) {
                    return Err(parse_err(lineno, "node out of range"));
                }
                parents[child] = Some(ps.to_vec());
                block = Block::None;
            }
            "CPT" => {
                let dd = need_d()?;
                is_dag = true;
                let v = parse_usizes(&toks[1..], lineno)?;
                if v.len() != 1 || v[0] >= dd {
                    return Err(parse_err(lineno, "expected `CPT child`"));
                }
                cpts[v[0]] = Some((lineno, Vec::new()));
                factors.push((lineno, vec![usize::MAX, v[0]], Vec::new()));
                block = Block::Values;
            }
            _ => match block {
                Block::Edges => {
                    let dd = need_d()?;
                    let v = parse_usizes(&toks, lineno)?;
                    if v.len() != 2 || v[0] >= dd || v[1] >= dd || v[0] == v[1] {
                        return Err(parse_err(lineno, format!("invalid edge `{t}`")));
                    }
                    edges.push((v[0], v[1]));
                }
                Block::Values => {
                    let target = factors.last_mut().expect("values follow a header");
                    for tok in toks {
                        let x: f64 = tok
                            .parse()
                            .map_err(|_| parse_err(lineno, format!("invalid number `{tok}`")))?;
                        target.2.push(x);
                    }
                }
                Block::None => {
                    return Err(parse_err(lineno, format!("unexpected line `{t}`")));
                }
            },
        }
    }

    let d = d.ok_or_else(|| parse_err(last_line, "missing `NODES` line"))?;
    let cards = cards.ok_or_else(|| parse_err(last_line, "missing `CARDS` line"))?;

    // CPT bodies were collected in the factor list under a sentinel scope
    let mut markov_factors = Vec::new();
    for (lineno, nodes, values) in factors {
        if nodes.first() == Some(&usize::MAX) {
            cpts[nodes[1]] = Some((lineno, values));
        } else {
            markov_factors.push((lineno, nodes, values));
        }
    }

    if is_dag {
        let parents: Vec<Vec<usize>> = parents.into_iter().map(|p| p.unwrap_or_default()).collect();
        topological_order(&parents)?;
        let model = if cpts.iter().all(|c| c.is_some()) {
            let tables = cpts.into_iter().map(|c| c.expect("checked").1).collect();
            Some(DagModel::new(cards.clone(), parents.clone(), tables)?)
        } else if cpts.iter().any(|c| c.is_some()) {
            let missing = cpts.iter().position(|c| c.is_none()).expect("some missing");
            return Err(parse_err(
                last_line,
                format!("node {missing} has no CPT block"),
            ));
        } else {
            None
        };
        return Ok(ModelFile::Dag {
            cards,
            parents,
            model,
        });
    }

    let graph = UGraph::from_edges(d, edges)?;
    let mut fs = Vec::with_capacity(markov_factors.len());
    for (lineno, nodes, values) in markov_factors {
        if nodes.windows(2).any(|w| w[0] >= w[1]) {
            return Err(parse_err(
                lineno,
                "factor nodes must be strictly increasing",
            ));
        }
        fs.push(CliqueFactor { nodes, values });
    }
    Ok(ModelFile::Markov(FactorModel::new(graph, cards, fs)?))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cycle(n: usize) -> UGraph {
        UGraph::from_edges(n, (0..n).map(|v| (v, (v + 1) % n))).unwrap()
    }

    #[test]
    fn clique_enumeration() {
        assert_eq!(maximal_cliques(&UGraph::complete(3)), vec![vec![0, 1, 2]]);
        let path = UGraph::from_edges(3, [(0, 1), (1, 2)]).unwrap();
        assert_eq!(maximal_cliques(&path), vec![vec![0, 1], vec![1, 2]]);
        assert_eq!(
            maximal_cliques(&cycle(4)),
            vec![vec![0, 1], vec![0, 3], vec![1, 2], vec![2, 3]]
        );
        assert_eq!(maximal_cliques(&UGraph::empty(2)), vec![vec![0], vec![1]]);
    }

    #[test]
    fn replicate_sizes() {
        let all = replicate(&ComponentKind::ALL, 1).unwrap();
        assert_eq!((all.d(), all.edge_count()), (64, 78));
        let grids = replicate(&[ComponentKind::Grid], 2).unwrap();
        assert_eq!((grids.d(), grids.edge_count()), (32, 48));
        assert_eq!(replicate(&ComponentKind::ALL, 8).unwrap().d(), 512);
        assert!(replicate(&ComponentKind::ALL, 0).is_err());
    }

    #[test]
    fn constant_factors_give_uniform_joint() {
        let g = UGraph::complete(2);
        let f = CliqueFactor {
            nodes: vec![0, 1],
            values: vec![0.3; 4],
        };
        let m = FactorModel::new(g, vec![2, 2], vec![f]).unwrap();
        for p in &m.components[0].probs {
            assert!((p - 0.25).abs() < 1e-15);
        }
        assert!((m.components[0].log_z - 1.2f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn factors_must_be_positive_cliques() {
        let g = UGraph::from_edges(3, [(0, 1)]).unwrap();
        let bad_scope = CliqueFactor {
            nodes: vec![0, 2],
            values: vec![1.0; 4],
        };
        assert!(FactorModel::new(g.clone(), vec![2; 3], vec![bad_scope]).is_err());
        let zero = CliqueFactor {
            nodes: vec![0, 1],
            values: vec![1.0, 0.0, 1.0, 1.0],
        };
        assert!(FactorModel::new(g, vec![2; 3], vec![zero]).is_err());
    }

    #[test]
    fn draws_are_seeded_and_normalized() {
        let g = replicate(&[ComponentKind::Loop, ComponentKind::Clique], 1).unwrap();
        let a = draw_factors(&g, &[2; 32], 7).unwrap();
        let b = draw_factors(&g, &[2; 32], 7).unwrap();
        let c = draw_factors(&g, &[2; 32], 8).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
        for comp in &a.components {
            let s: f64 = comp.probs.iter().sum();
            assert!((s - 1.0).abs() < 1e-9);
        }
        assert!(a
            .factors
            .iter()
            .all(|f| f.values.iter().all(|&v| v > 0.0 && v < 1.0)));
    }

    #[test]
    fn oversized_component_refused() {
        let g = cycle(21);
        assert!(matches!(
            draw_factors(&g, &[2; 21], 1),
            Err(Error::ComponentTooLarge { .. })
        ));
    }

    #[test]
    fn empty_sample() {
        let g = UGraph::complete(2);
        let m = draw_factors(&g, &[2, 2], 3).unwrap();
        let ds = sample(&m, 0, 1);
        assert_eq!((ds.n(), ds.d()), (0, 2));
        assert_eq!(sample(&m, 50, 9), sample(&m, 50, 9));
    }

    #[test]
    fn moralization() {
        // 0→2←1
        let g = moralize(&[vec![], vec![], vec![0, 1]]).unwrap();
        assert_eq!(g, UGraph::complete(3));
        let chain = moralize(&[vec![], vec![0], vec![1]]).unwrap();
        assert_eq!(chain, UGraph::from_edges(3, [(0, 1), (1, 2)]).unwrap());
        assert!(matches!(moralize(&[vec![1], vec![0]]), Err(Error::Cycle)));
    }

    #[test]
    fn degenerate_cpt() {
        let m = DagModel::new(vec![2], vec![vec![]], vec![vec![1.0, 0.0]]).unwrap();
        let ds = sample_dag(&m, 100, 5);
        assert!(ds.column(0).iter().all(|&v| v == 0));
        assert_eq!(sample_dag(&m, 0, 5).n(), 0);
        assert!(DagModel::new(vec![2], vec![vec![]], vec![vec![0.6, 0.6]]).is_err());
    }

    #[test]
    fn model_files_round_trip() {
        let g = gen_component(ComponentKind::Hub);
        let m = draw_factors(&g, &[2; 16], 11).unwrap();
        let mut buf = Vec::new();
        m.write(&mut buf).unwrap();
        match read_model(&buf[..]).unwrap() {
            ModelFile::Markov(back) => assert_eq!(back, m),
            other => panic!("{other:?}"),
        }

        let dag = DagModel::new(
            vec![2, 3],
            vec![vec![], vec![0]],
            vec![vec![0.25, 0.75], vec![0.2, 0.3, 0.5, 1.0, 0.0, 0.0]],
        )
        .unwrap();
        let mut buf = Vec::new();
        dag.write(&mut buf).unwrap();
        match read_model(&buf[..]).unwrap() {
            ModelFile::Dag { model, parents, .. } => {
                assert_eq!(model.unwrap(), dag);
                assert_eq!(parents, vec![vec![], vec![0]]);
            }
            other => panic!("{other:?}"),
        }

        let structure = "NODES 3\nCARDS 2 2 2\nPARENTS 2 0 1\n";
        match read_model(structure.as_bytes()).unwrap() {
            ModelFile::Dag { model, parents, .. } => {
                assert!(model.is_none());
                assert_eq!(moralize(&parents).unwrap().edge_count(), 3);
            }
            other => panic!("{other:?}"),
        }
        assert!(matches!(
            read_model("NODES 2\nCARDS 2 2\nEDGES\n0 5\n".as_bytes()),
            Err(Error::Parse { line: 4, .. })
        ));
    }
}
