//! Exact phase 2 as a pseudo-Boolean optimization problem.
//!
//! Every edge of the restricted space gets a Boolean variable, and every node
//! gets one variable per subset of its neighbors in the space. Product
//! constraints tie each blanket variable to the edge variables it implies and
//! an exactly-one constraint per node selects a single blanket. The objective
//! minimizes integer weights `-⌊K · local score⌋`.
//!
//! Variables are numbered from 1: edges first in lexicographic order, then
//! blanket candidates grouped by node, each group in subset-bitmask order
//! where bit `b` stands for the `b`-th smallest space neighbor.

use std::io::{BufRead, Write};

use rayon::prelude::*;

use crate::data::Dataset;
use crate::error::{parse_err, Error, Result};
use crate::graph::{Edge, UGraph};
use crate::score::{ScoreParams, Scorer};

pub const DEFAULT_SCALE: i64 = 1_000_000;
pub const DEFAULT_CANDIDATE_LIMIT: u64 = 15_000;

/// 1-based variable index.
pub type Var = usize;

/// Blanket candidates of one node.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NodeCandidates {
    /// Sorted neighbors of the node in the space.
    pub neighbors: Vec<usize>,
    /// Edge variable of each neighbor, aligned with `neighbors`.
    pub edge_vars: Vec<Var>,
    /// Variable of candidate 0; candidate `k` is `first_var + k`.
    pub first_var: Var,
    /// Weight of each candidate, indexed by bitmask over `neighbors`.
    pub weights: Vec<i64>,
}

impl NodeCandidates {
    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn blanket(&self, mask: usize) -> Vec<usize> {
        self.neighbors
            .iter()
            .enumerate()
            .filter(|(b, _)| mask >> b & 1 == 1)
            .map(|(_, &v)| v)
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Constraint {
    /// `x_blanket - (∏ positive)(∏ ¬negative) = 0`.
    Product {
        blanket: Var,
        positive: Vec<Var>,
        negative: Vec<Var>,
    },
    /// `Σ vars = 1`.
    ExactlyOne(Vec<Var>),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PboProblem {
    pub d: usize,
    /// Edge of variable `k + 1`.
    pub edges: Vec<Edge>,
    pub nodes: Vec<NodeCandidates>,
    pub constraints: Vec<Constraint>,
    pub scale: i64,
}

/// A 0/1 value per variable; index 0 is unused.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Assignment(pub Vec<bool>);

impl Assignment {
    pub fn get(&self, v: Var) -> bool {
        self.0[v]
    }
}

/// Total number of candidates `Σ_j 2^{d_j}`, saturating.
pub fn candidate_count(space: &UGraph) -> u128 {
    (0..space.d())
        .map(|v| {
            let dj = space.degree(v) as u32;
            if dj >= 127 {
                u128::MAX
            } else {
                1u128 << dj
            }
        })
        .fold(0u128, |a, b| a.saturating_add(b))
}

/// Builds the problem for `space`. Refuses when the candidate total exceeds `limit`.
pub fn encode(
    data: &Dataset,
    space: &UGraph,
    p: &ScoreParams,
    scale: i64,
    limit: u64,
) -> Result<PboProblem> {
    if space.d() != data.d() {
        return Err(Error::DimensionMismatch(format!(
            "space on {} nodes, data has {} variables",
            space.d(),
            data.d()
        )));
    }
    if scale <= 0 {
        return Err(Error::InvalidArgument(format!(
            "scale must be positive, got {scale}"
        )));
    }
    let candidates = candidate_count(space);
    if candidates > limit as u128 {
        return Err(Error::CapacityExceeded { candidates, limit });
    }

    let edges: Vec<Edge> = space.edges().collect();
    let edge_var = |a: usize, b: usize| -> Var {
        edges.binary_search(&Edge::new(a, b)).expect("space edge") + 1
    };
    let scorer = Scorer::new(data, *p, None);
    let weights: Vec<Vec<i64>> = (0..space.d())
        .into_par_iter()
        .map(|v| {
            let nb = space.blanket(v);
            (0..1usize << nb.len())
                .map(|mask| {
                    let mb: Vec<usize> = nb
                        .iter()
                        .enumerate()
                        .filter(|(b, _)| mask >> b & 1 == 1)
                        .map(|(_, &u)| u)
                        .collect();
                    weight(scorer.objective(v, &mb), scale)
                })
                .collect()
        })
        .collect();

    let mut next = edges.len() + 1;
    let mut nodes = Vec::with_capacity(space.d());
    let mut constraints = Vec::new();
    for (v, w) in weights.into_iter().enumerate() {
        let neighbors = space.blanket(v);
        let edge_vars: Vec<Var> = neighbors.iter().map(|&u| edge_var(v, u)).collect();
        let node = NodeCandidates {
            neighbors,
            edge_vars,
            first_var: next,
            weights: w,
        };
        next += node.len();
        for mask in 0..node.len() {
            let (mut positive, mut negative) = (Vec::new(), Vec::new());
            for (b, &ev) in node.edge_vars.iter().enumerate() {
                if mask >> b & 1 == 1 {
                    positive.push(ev);
                } else {
                    negative.push(ev);
                }
            }
            constraints.push(Constraint::Product {
                blanket: node.first_var + mask,
                positive,
                negative,
            });
        }
        constraints.push(Constraint::ExactlyOne(
            (node.first_var..node.first_var + node.len()).collect(),
        ));
        nodes.push(node);
    }

    Ok(PboProblem {
        d: space.d(),
        edges,
        nodes,
        constraints,
        scale,
    })
}

/// `-⌊K · score⌋`.
pub fn weight(score: f64, scale: i64) -> i64 {
    -((scale as f64 * score).floor() as i64)
}

impl PboProblem {
    pub fn variable_count(&self) -> usize {
        self.edges.len() + self.nodes.iter().map(|n| n.len()).sum::<usize>()
    }

    pub fn constraint_count(&self) -> usize {
        self.constraints.len()
    }

    /// The assignment induced by a subgraph of the space.
    pub fn assignment_for(&self, g: &UGraph) -> Result<Assignment> {
        let mut values = vec![false; self.variable_count() + 1];
        for e in g.edges() {
            let k = self
                .edges
                .binary_search(&e)
                .map_err(|_| Error::NotInSpace)?;
            values[k + 1] = true;
        }
        for node in &self.nodes {
            let mask = node
                .edge_vars
                .iter()
                .enumerate()
                .fold(0usize, |m, (b, &ev)| m | (values[ev] as usize) << b);
            values[node.first_var + mask] = true;
        }
        Ok(Assignment(values))
    }

    pub fn objective(&self, a: &Assignment) -> i64 {
        self.nodes
            .iter()
            .flat_map(|n| {
                n.weights
                    .iter()
                    .enumerate()
                    .filter(|&(k, _)| a.get(n.first_var + k))
                    .map(|(_, &w)| w)
            })
            .sum()
    }

    pub fn is_feasible(&self, a: &Assignment) -> bool {
        if a.0.len() != self.variable_count() + 1 {
            return false;
        }
        self.constraints.iter().all(|c| match c {
            Constraint::Product {
                blanket,
                positive,
                negative,
            } => {
                let product =
                    positive.iter().all(|&v| a.get(v)) && negative.iter().all(|&v| !a.get(v));
                a.get(*blanket) == product
            }
            Constraint::ExactlyOne(vars) => vars.iter().filter(|&&v| a.get(v)).count() == 1,
        })
    }

    /// Graph of a feasible assignment.
    pub fn decode(&self, a: &Assignment) -> Result<UGraph> {
        if a.0.len() != self.variable_count() + 1 {
            return Err(Error::Infeasible(format!(
                "assignment has {} variables, problem has {}",
                a.0.len().saturating_sub(1),
                self.variable_count()
            )));
        }
        let mut g = UGraph::empty(self.d);
        for (k, e) in self.edges.iter().enumerate() {
            if a.get(k + 1) {
                g.add_edge(e.lo(), e.hi());
            }
        }
        for (v, node) in self.nodes.iter().enumerate() {
            let selected: Vec<usize> = (0..node.len())
                .filter(|&k| a.get(node.first_var + k))
                .collect();
            if selected.len() != 1 {
                return Err(Error::Infeasible(format!(
                    "node {v} has {} selected blankets",
                    selected.len()
                )));
            }
            let chosen = node.blanket(selected[0]);
            if chosen != g.blanket(v) {
                return Err(Error::Infeasible(format!(
                    "node {v} selects blanket {chosen:?} but its edges give {:?}",
                    g.blanket(v)
                )));
            }
        }
        Ok(g)
    }

    /// Writes the problem in nonlinear OPB form.
    pub fn write_opb<W: Write>(&self, mut sink: W) -> Result<()> {
        writeln!(
            sink,
            "* #variable= {} #constraint= {}",
            self.variable_count(),
            self.constraint_count()
        )?;
        let mut line = String::from("min:");
        for node in &self.nodes {
            for (k, w) in node.weights.iter().enumerate() {
                line.push_str(&format!(" {w:+} x{}", node.first_var + k));
            }
        }
        line.push_str(" ;");
        writeln!(sink, "{line}")?;
        for c in &self.constraints {
            match c {
                Constraint::Product {
                    blanket,
                    positive,
                    negative,
                } => {
                    if positive.is_empty() && negative.is_empty() {
                        writeln!(sink, "+1 x{blanket} = 1 ;")?;
                    } else {
                        let lits: Vec<String> = positive
                            .iter()
                            .map(|v| format!("x{v}"))
                            .chain(negative.iter().map(|v| format!("~x{v}")))
                            .collect();
                        writeln!(sink, "+1 x{blanket} -1 {} = 0 ;", lits.join(" "))?;
                    }
                }
                Constraint::ExactlyOne(vars) => {
                    let terms: Vec<String> = vars.iter().map(|v| format!("+1 x{v}")).collect();
                    writeln!(sink, "{} = 1 ;", terms.join(" "))?;
                }
            }
        }
        Ok(())
    }
}

/// Summary of an OPB file: the header counts and what the body actually holds.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OpbSummary {
    pub declared_variables: usize,
    pub declared_constraints: usize,
    /// Largest variable index referenced.
    pub max_variable: usize,
    pub constraints: usize,
    pub has_objective: bool,
}

/// Reads the header and counts the constraints of an OPB file.
pub fn read_opb_summary<R: BufRead>(source: R) -> Result<OpbSummary> {
    let mut header: Option<(usize, usize)> = None;
    let mut max_variable = 0;
    let mut constraints = 0;
    let mut has_objective = false;
    for (idx, line) in source.lines().enumerate() {
        let lineno = idx + 1;
        let line = line?;
        let t = line.trim();
        if t.is_empty() {
            continue;
        }
        if let Some(rest) = t.strip_prefix('*') {
            if header.is_none() {
                let toks: Vec<&str> = rest.split_whitespace().collect();
                let find = |key: &str| -> Option<usize> {
                    let pos = toks.iter().position(|&x| x == key)?;
                    toks.get(pos + 1)?.parse().ok()
                };
                if let (Some(v), Some(c)) = (find("#variable="), find("#constraint=")) {
                    header = Some((v, c));
                }
            }
            continue;
        }
        if !t.ends_with(';') {
            return Err(parse_err(lineno, "statement does not end with `;`"));
        }
        for tok in t.split_whitespace() {
            if let Some(v) = tok.trim_start_matches('~').strip_prefix('x') {
                let v: usize = v
                    .parse()
                    .map_err(|_| parse_err(lineno, format!("bad variable `{tok}`")))?;
                max_variable = max_variable.max(v);
            }
        }
        if t.starts_with("min:") {
            has_objective = true;
        } else {
            constraints += 1;
        }
    }
    let (declared_variables, declared_constraints) =
        header.ok_or_else(|| parse_err(1, "missing `* #variable= … #constraint= …` header"))?;
    Ok(OpbSummary {
        declared_variables,
        declared_constraints,
        max_variable,
        constraints,
        has_objective,
    })
}

/// Reads a solver assignment from `v x1 -x2 …` lines; other lines are ignored.
pub fn read_assignment<R: BufRead>(source: R, variables: usize) -> Result<Assignment> {
    let mut values = vec![false; variables + 1];
    let mut seen = vec![false; variables + 1];
    for (idx, line) in source.lines().enumerate() {
        let lineno = idx + 1;
        let line = line?;
        let Some(rest) = line.trim().strip_prefix("v ") else {
            continue;
        };
        for tok in rest.split_whitespace() {
            let (neg, name) = match tok.strip_prefix('-') {
                Some(n) => (true, n),
                None => (false, tok),
            };
            let v: usize = name
                .strip_prefix('x')
                .and_then(|s| s.parse().ok())
                .ok_or_else(|| parse_err(lineno, format!("bad literal `{tok}`")))?;
            if v == 0 || v > variables {
                return Err(parse_err(lineno, format!("variable x{v} out of range")));
            }
            values[v] = !neg;
            seen[v] = true;
        }
    }
    if let Some(v) = (1..=variables).find(|&v| !seen[v]) {
        return Err(parse_err(0, format!("no value for x{v}")));
    }
    Ok(Assignment(values))
}

type NodeMin = dyn Fn(&[NodeCandidates], usize, usize, usize) -> i64;

/// Branch and bound over the edge variables in lexicographic order.
///
/// The bound for a partial assignment sums, per node, the smallest weight
/// among candidates still compatible with the decided incident edges. Edges
/// are tried off before on and an incumbent is replaced only on strict
/// improvement, so the lexicographically smallest optimal assignment is returned.
pub fn solve_internal(problem: &PboProblem) -> Assignment {
    let m = problem.edges.len();
    // (node, bit of this edge in the node's mask) for both endpoints
    let endpoints: Vec<[(usize, usize); 2]> = problem
        .edges
        .iter()
        .map(|e| {
            let bit = |v: usize, u: usize| {
                problem.nodes[v]
                    .neighbors
                    .binary_search(&u)
                    .expect("neighbor present")
            };
            [(e.lo(), bit(e.lo(), e.hi())), (e.hi(), bit(e.hi(), e.lo()))]
        })
        .collect();

    struct State {
        decided: Vec<usize>,
        value: Vec<usize>,
        node_min: Vec<i64>,
        bound: i64,
    }
    let node_min = |nodes: &[NodeCandidates], v: usize, decided: usize, value: usize| -> i64 {
        nodes[v]
            .weights
            .iter()
            .enumerate()
            .filter(|&(k, _)| k & decided == value)
            .map(|(_, &w)| w)
            .min()
            .expect("at least one compatible candidate")
    };

    let d = problem.d;
    let mins: Vec<i64> = (0..d).map(|v| node_min(&problem.nodes, v, 0, 0)).collect();
    let mut state = State {
        decided: vec![0; d],
        value: vec![0; d],
        bound: mins.iter().sum(),
        node_min: mins,
    };
    let mut chosen = vec![false; m];
    let mut best: Option<(i64, Vec<bool>)> = None;

    fn recurse(
        depth: usize,
        problem: &PboProblem,
        endpoints: &[[(usize, usize); 2]],
        state: &mut State,
        chosen: &mut Vec<bool>,
        best: &mut Option<(i64, Vec<bool>)>,
        node_min: &NodeMin,
    ) {
        if let Some((b, _)) = best {
            if state.bound >= *b {
                return;
            }
        }
        if depth == endpoints.len() {
            // every node is fully decided, so the bound is exact
            *best = Some((state.bound, chosen.clone()));
            return;
        }
        for on in [false, true] {
            let saved: Vec<(usize, usize, usize, i64)> = endpoints[depth]
                .iter()
                .map(|&(v, _)| (v, state.decided[v], state.value[v], state.node_min[v]))
                .collect();
            for &(v, bit) in &endpoints[depth] {
                state.decided[v] |= 1 << bit;
                if on {
                    state.value[v] |= 1 << bit;
                }
                let new_min = node_min(&problem.nodes, v, state.decided[v], state.value[v]);
                state.bound += new_min - state.node_min[v];
                state.node_min[v] = new_min;
            }
            chosen[depth] = on;
            recurse(depth + 1, problem, endpoints, state, chosen, best, node_min);
            for &(v, dec, val, nm) in saved.iter().rev() {
                state.bound += nm - state.node_min[v];
                state.decided[v] = dec;
                state.value[v] = val;
                state.node_min[v] = nm;
            }
        }
        chosen[depth] = false;
    }

    recurse(
        0,
        problem,
        &endpoints,
        &mut state,
        &mut chosen,
        &mut best,
        &node_min,
    );

    let (_, edges_on) = best.expect("the all-off assignment is always feasible");
    let mut g = UGraph::empty(d);
    for (k, &on) in edges_on.iter().enumerate() {
        if on {
            let e = problem.edges[k];
            g.add_edge(e.lo(), e.hi());
        }
    }
    problem
        .assignment_for(&g)
        .expect("edges come from the space")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::score::mpl_local;
    use std::f64::consts::LN_2;

    fn single_edge_data() -> Dataset {
        let rows: Vec<Vec<u32>> = (0..40u32)
            .map(|k| vec![k % 2, (k % 2) ^ u32::from(k % 9 == 0)])
            .collect();
        Dataset::from_rows(vec![2, 2], &rows).unwrap()
    }

    #[test]
    fn counts_for_single_edge_space() {
        let ds = single_edge_data();
        let pb = encode(
            &ds,
            &UGraph::complete(2),
            &ScoreParams::default(),
            DEFAULT_SCALE,
            100,
        )
        .unwrap();
        assert_eq!(pb.variable_count(), 5);
        assert_eq!(pb.constraint_count(), 6);
        let mut buf = Vec::new();
        pb.write_opb(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(
            text.lines().next().unwrap(),
            "* #variable= 5 #constraint= 6"
        );
        // node 0 candidates are x2 (∅) and x3 ({1}); node 1 gets x4, x5
        assert!(text.contains("+1 x2 -1 ~x1 = 0 ;"), "{text}");
        assert!(text.contains("+1 x3 -1 x1 = 0 ;"), "{text}");
        assert!(text.contains("+1 x2 +1 x3 = 1 ;"), "{text}");
    }

    #[test]
    fn empty_space_counts() {
        let ds = Dataset::empty(vec![2, 2, 2]).unwrap();
        let pb = encode(
            &ds,
            &UGraph::empty(3),
            &ScoreParams::default(),
            DEFAULT_SCALE,
            100,
        )
        .unwrap();
        assert_eq!(pb.variable_count(), 3);
        assert_eq!(pb.constraint_count(), 6);

        let one = Dataset::empty(vec![2]).unwrap();
        let pb = encode(
            &one,
            &UGraph::empty(1),
            &ScoreParams::default(),
            DEFAULT_SCALE,
            100,
        )
        .unwrap();
        let mut buf = Vec::new();
        pb.write_opb(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(
            text,
            "* #variable= 1 #constraint= 2\nmin: +0 x1 ;\n+1 x1 = 1 ;\n+1 x1 = 1 ;\n"
        );
    }

    #[test]
    fn weight_floor_arithmetic() {
        assert_eq!(weight(-LN_2, 1_000_000), 693_148);
        assert_eq!(weight(0.0, 1_000_000), 0);
        let one = Dataset::from_rows(vec![2], &[vec![0]]).unwrap();
        let pb = encode(
            &one,
            &UGraph::empty(1),
            &ScoreParams::default(),
            DEFAULT_SCALE,
            10,
        )
        .unwrap();
        assert_eq!(pb.nodes[0].weights, vec![693_148]);
    }

    #[test]
    fn capacity_refusal_names_total() {
        let ds = Dataset::empty(vec![2; 5]).unwrap();
        match encode(
            &ds,
            &UGraph::complete(5),
            &ScoreParams::default(),
            DEFAULT_SCALE,
            79,
        ) {
            Err(Error::CapacityExceeded { candidates, limit }) => {
                assert_eq!((candidates, limit), (80, 79));
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn decode_checks_consistency() {
        let ds = single_edge_data();
        let pb = encode(
            &ds,
            &UGraph::complete(2),
            &ScoreParams::default(),
            DEFAULT_SCALE,
            100,
        )
        .unwrap();
        let empty = pb.assignment_for(&UGraph::empty(2)).unwrap();
        assert_eq!(pb.decode(&empty).unwrap().edge_count(), 0);
        let full = pb.assignment_for(&UGraph::complete(2)).unwrap();
        assert_eq!(pb.decode(&full).unwrap(), UGraph::complete(2));
        assert!(pb.is_feasible(&full));
        // edge on, but both nodes keep their empty blanket selected
        let mut bad = empty.clone();
        bad.0[1] = true;
        assert!(matches!(pb.decode(&bad), Err(Error::Infeasible(_))));
        assert!(!pb.is_feasible(&bad));
    }

    #[test]
    fn solver_picks_better_of_two() {
        let ds = single_edge_data();
        let p = ScoreParams::default();
        let space = UGraph::complete(2);
        let pb = encode(&ds, &space, &p, DEFAULT_SCALE, 100).unwrap();
        let a = solve_internal(&pb);
        assert!(pb.is_feasible(&a));
        let g = pb.decode(&a).unwrap();
        let on = mpl_local(&ds, 0, &[1], &p).unwrap() + mpl_local(&ds, 1, &[0], &p).unwrap();
        let off = mpl_local(&ds, 0, &[], &p).unwrap() + mpl_local(&ds, 1, &[], &p).unwrap();
        assert_eq!(g.edge_count() == 1, on > off);
    }

    #[test]
    fn equal_weights_give_smallest_assignment() {
        let ds = Dataset::empty(vec![2; 4]).unwrap();
        let pb = encode(
            &ds,
            &UGraph::complete(4),
            &ScoreParams::default(),
            DEFAULT_SCALE,
            1000,
        )
        .unwrap();
        assert!(pb.nodes.iter().all(|n| n.weights.iter().all(|&w| w == 0)));
        let g = pb.decode(&solve_internal(&pb)).unwrap();
        assert_eq!(g.edge_count(), 0);
    }

    #[test]
    fn opb_summary_and_assignment_file() {
        let ds = single_edge_data();
        let pb = encode(
            &ds,
            &UGraph::complete(2),
            &ScoreParams::default(),
            DEFAULT_SCALE,
            100,
        )
        .unwrap();
        let mut buf = Vec::new();
        pb.write_opb(&mut buf).unwrap();
        let s = read_opb_summary(&buf[..]).unwrap();
        assert_eq!(s.declared_variables, s.max_variable);
        assert_eq!(s.declared_constraints, s.constraints);
        assert!(s.has_objective);

        let a = read_assignment("s OPTIMUM FOUND\nv x1 -x2 x3\nv -x4 x5\n".as_bytes(), 5).unwrap();
        assert_eq!(pb.decode(&a).unwrap(), UGraph::complete(2));
        assert!(read_assignment("v x1\n".as_bytes(), 2).is_err());
        assert!(read_assignment("v x7\n".as_bytes(), 2).is_err());
    }
}
