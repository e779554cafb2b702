//! Phase-2 search over subgraphs of a restricted edge space.

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::graph::{restricted_neighbors, Edge, Toggle, UGraph};
use crate::score::{mpl_global, LocalScoreCache, ScoreParams, Scorer};

/// Where hill climbing starts.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub enum StartGraph {
    #[default]
    Empty,
    /// Any subgraph of the space, e.g. the AND-combined blankets.
    Given(UGraph),
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct HillClimbConfig {
    pub start: StartGraph,
    /// Re-evaluate every candidate each iteration instead of only those
    /// touching the last accepted edge.
    pub naive: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct HillClimbResult {
    pub graph: UGraph,
    /// `mpl_global` of `graph`, recomputed from scratch.
    pub score: f64,
    /// Accepted toggles in order.
    pub trace: Vec<(Edge, Toggle)>,
    /// Number of pseudo-Bayes factors evaluated.
    pub evaluations: usize,
}

struct Candidate {
    edge: Edge,
    delta: f64,
}

/// Greedy single-edge hill climbing within `space`.
///
/// Each step accepts the toggle with the largest strictly positive log
/// pseudo-Bayes factor; ties prefer additions, then the smaller edge. After a
/// toggle on `{k,l}` only candidates sharing a node with it are re-scored,
/// since the factors of all other candidates are unchanged.
pub fn hill_climb(
    data: &Dataset,
    space: &UGraph,
    p: &ScoreParams,
    config: &HillClimbConfig,
) -> Result<HillClimbResult> {
    if space.d() != data.d() {
        return Err(Error::DimensionMismatch(format!(
            "space on {} nodes, data has {} variables",
            space.d(),
            data.d()
        )));
    }
    let mut g = match &config.start {
        StartGraph::Empty => UGraph::empty(space.d()),
        StartGraph::Given(start) => {
            if !start.is_subgraph_of(space) {
                return Err(Error::NotInSpace);
            }
            start.clone()
        }
    };

    let cache = LocalScoreCache::new();
    let scorer = Scorer::new(data, *p, Some(&cache));
    let mut node_score: Vec<f64> = (0..g.d())
        .map(|v| scorer.objective(v, &g.blanket(v)))
        .collect();

    let toggled_blanket = |g: &UGraph, v: usize, other: usize| -> Vec<usize> {
        let mut mb = g.blanket(v);
        match mb.binary_search(&other) {
            Ok(pos) => {
                mb.remove(pos);
            }
            Err(pos) => mb.insert(pos, other),
        }
        mb
    };
    let factor = |g: &UGraph, node_score: &[f64], e: Edge| -> f64 {
        let (a, b) = (e.lo(), e.hi());
        scorer.objective(a, &toggled_blanket(g, a, b))
            + scorer.objective(b, &toggled_blanket(g, b, a))
            - node_score[a]
            - node_score[b]
    };

    let mut evaluations = 0;
    let mut candidates: Vec<Candidate> = space
        .edges()
        .map(|edge| {
            evaluations += 1;
            Candidate {
                edge,
                delta: factor(&g, &node_score, edge),
            }
        })
        .collect();
    let mut trace = Vec::new();

    loop {
        let mut best: Option<(usize, Toggle)> = None;
        for (idx, c) in candidates.iter().enumerate() {
            if c.delta.partial_cmp(&0.0) != Some(std::cmp::Ordering::Greater) {
                continue;
            }
            let toggle = if g.contains(c.edge) {
                Toggle::Remove
            } else {
                Toggle::Add
            };
            let better = match best {
                None => true,
                Some((b, bt)) => {
                    let bd = candidates[b].delta;
                    // candidates are visited in edge order, so equal keys keep the earlier edge
                    c.delta > bd || (c.delta == bd && toggle == Toggle::Add && bt == Toggle::Remove)
                }
            };
            if better {
                best = Some((idx, toggle));
            }
        }
        let Some((idx, toggle)) = best else { break };
        let accepted = candidates[idx].edge;
        g.toggle(accepted);
        for v in [accepted.lo(), accepted.hi()] {
            node_score[v] = scorer.objective(v, &g.blanket(v));
        }
        trace.push((accepted, toggle));
        for c in candidates.iter_mut() {
            if config.naive || c.edge.shares_node(&accepted) {
                evaluations += 1;
                c.delta = factor(&g, &node_score, c.edge);
            }
        }
    }

    let score = mpl_global(data, &g, p, None)?;
    Ok(HillClimbResult {
        graph: g,
        score,
        trace,
        evaluations,
    })
}

/// Largest space accepted by [`brute_force_optimum`].
pub const BRUTE_FORCE_MAX_EDGES: usize = 25;

/// Exhaustive maximum of the score over all subgraphs of `space`.
///
/// Among equal scores the lexicographically smallest sorted edge list wins.
pub fn brute_force_optimum(
    data: &Dataset,
    space: &UGraph,
    p: &ScoreParams,
) -> Result<(UGraph, f64)> {
    let edges: Vec<Edge> = space.edges().collect();
    let m = edges.len();
    if m > BRUTE_FORCE_MAX_EDGES {
        return Err(Error::SpaceTooLarge {
            edges: m,
            limit: BRUTE_FORCE_MAX_EDGES,
        });
    }
    if space.d() != data.d() {
        return Err(Error::DimensionMismatch(format!(
            "space on {} nodes, data has {} variables",
            space.d(),
            data.d()
        )));
    }
    let d = space.d();
    let scorer = Scorer::new(data, *p, None);

    // per node: the space edges it touches, and the objective for every subset of them
    let mut incident: Vec<Vec<usize>> = vec![Vec::new(); d];
    for (k, e) in edges.iter().enumerate() {
        incident[e.lo()].push(k);
        incident[e.hi()].push(k);
    }
    let tables: Vec<Vec<f64>> = (0..d)
        .map(|v| {
            let local = &incident[v];
            (0..1usize << local.len())
                .map(|mask| {
                    let mb: Vec<usize> = local
                        .iter()
                        .enumerate()
                        .filter(|(b, _)| mask >> b & 1 == 1)
                        .map(|(_, &k)| {
                            let e = edges[k];
                            if e.lo() == v {
                                e.hi()
                            } else {
                                e.lo()
                            }
                        })
                        .collect::<std::collections::BTreeSet<_>>()
                        .into_iter()
                        .collect();
                    scorer.objective(v, &mb)
                })
                .collect()
        })
        .collect();

    let subset_edges = |mask: u64| -> Vec<Edge> {
        (0..m)
            .filter(|k| mask >> k & 1 == 1)
            .map(|k| edges[k])
            .collect()
    };
    let mut best_mask = 0u64;
    let mut best_value = f64::NEG_INFINITY;
    for mask in 0..1u64 << m {
        let value: f64 = (0..d)
            .map(|v| {
                let local = incident[v]
                    .iter()
                    .enumerate()
                    .fold(0usize, |acc, (b, &k)| acc | ((mask >> k & 1) as usize) << b);
                tables[v][local]
            })
            .sum();
        if value > best_value
            || (value == best_value && subset_edges(mask) < subset_edges(best_mask))
        {
            best_value = value;
            best_mask = mask;
        }
    }
    let mut g = UGraph::empty(d);
    for e in subset_edges(best_mask) {
        g.add_edge(e.lo(), e.hi());
    }
    let score = mpl_global(data, &g, p, None)?;
    Ok((g, score))
}

/// Checks that no single toggle within `space` improves the score of `g`.
pub fn is_local_optimum(
    data: &Dataset,
    g: &UGraph,
    space: &UGraph,
    p: &ScoreParams,
) -> Result<bool> {
    let base = mpl_global(data, g, p, None)?;
    for (e, _) in restricted_neighbors(g, space)? {
        let mut h = g.clone();
        h.toggle(e);
        if mpl_global(data, &h, p, None)? > base {
            return Ok(false);
        }
    }
    Ok(true)
}
