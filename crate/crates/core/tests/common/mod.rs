//! Test oracles, generators and property checks shared by the integration
//! suites and the acceptance runner.
#![allow(dead_code)]

use std::collections::BTreeMap;

use proptest::prelude::*;
use proptest::test_runner::TestCaseError;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use statrs::function::gamma::ln_gamma;

use mplnet::data::{count_configurations, Dataset};
use mplnet::global_search::{brute_force_optimum, hill_climb, is_local_optimum, HillClimbConfig};
use mplnet::graph::{BlanketFamily, Combine, Edge, Toggle, UGraph};
use mplnet::mb_search::{find_all_blankets, find_markov_blanket, BlanketMove, MbSearchConfig};
use mplnet::pbo::{encode, solve_internal};
use mplnet::score::{
    graph_log_prior, mpl_global, mpl_local, node_log_prior, pic_global, GraphPrior,
    LocalScoreCache, ScoreParams,
};
use mplnet::synth::{draw_factors, sample};

pub type CheckResult = Result<(), TestCaseError>;

// ---------------------------------------------------------------- generators

pub fn random_graph(d: usize, edge_prob: f64, rng: &mut impl Rng) -> UGraph {
    let mut g = UGraph::empty(d);
    for a in 0..d {
        for b in a + 1..d {
            if rng.gen_bool(edge_prob) {
                g.add_edge(a, b);
            }
        }
    }
    g
}

/// Random binary Markov network and a sample from it.
pub fn random_system(d: usize, edge_prob: f64, n: usize, seed: u64) -> (UGraph, Dataset) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed_0000);
    let g = random_graph(d, edge_prob, &mut rng);
    let model = draw_factors(&g, &vec![2; d], seed).expect("small model");
    let data = sample(&model, n, seed.wrapping_add(17));
    (g, data)
}

/// Random chordal graph: a random graph made chordal by eliminating the nodes
/// in a random order and adding fill-in edges.
pub fn random_chordal_graph(d: usize, edge_prob: f64, rng: &mut impl Rng) -> UGraph {
    let mut g = random_graph(d, edge_prob, rng);
    let mut order: Vec<usize> = (0..d).collect();
    for k in (1..d).rev() {
        order.swap(k, rng.gen_range(0..=k));
    }
    let mut eliminated = vec![false; d];
    for &v in &order {
        let nb: Vec<usize> = g
            .neighbors(v)
            .iter()
            .copied()
            .filter(|&u| !eliminated[u])
            .collect();
        for (a, &x) in nb.iter().enumerate() {
            for &y in &nb[a + 1..] {
                g.add_edge(x, y);
            }
        }
        eliminated[v] = true;
    }
    g
}

pub fn arb_dataset(max_d: usize, max_n: usize, max_r: usize) -> impl Strategy<Value = Dataset> {
    (1..=max_d)
        .prop_flat_map(move |d| (proptest::collection::vec(2..=max_r, d), 0..=max_n))
        .prop_flat_map(|(cards, n)| {
            let row: Vec<std::ops::Range<u32>> = cards.iter().map(|&r| 0..r as u32).collect();
            (Just(cards), proptest::collection::vec(row, n))
        })
        .prop_map(|(cards, rows)| Dataset::from_rows(cards, &rows).expect("rows fit cards"))
}

pub fn arb_graph_on(d: usize) -> impl Strategy<Value = UGraph> {
    proptest::collection::vec(any::<bool>(), d * d.saturating_sub(1) / 2).prop_map(move |bits| {
        let pairs = (0..d).flat_map(|a| (a + 1..d).map(move |b| (a, b)));
        UGraph::from_edges(d, pairs.zip(bits).filter(|(_, b)| *b).map(|(e, _)| e)).unwrap()
    })
}

pub fn arb_data_and_graph(
    max_d: usize,
    max_n: usize,
    max_r: usize,
) -> impl Strategy<Value = (Dataset, UGraph)> {
    arb_dataset(max_d, max_n, max_r).prop_flat_map(|ds| {
        let d = ds.d();
        (Just(ds), arb_graph_on(d))
    })
}

pub fn arb_params() -> impl Strategy<Value = ScoreParams> {
    (
        prop_oneof![Just(1.0), Just(0.5), Just(4.0), 0.05f64..20.0],
        prop_oneof![Just(GraphPrior::Uniform), Just(GraphPrior::Sparsity)],
    )
        .prop_map(|(ess, prior)| ScoreParams::new(ess, prior).unwrap())
}

// ---------------------------------------------------------------- oracles

/// Local score by dense enumeration of every blanket configuration, counting
/// each one with a direct scan over the rows.
pub fn dense_mpl_local(data: &Dataset, j: usize, mb: &[usize], ess: f64) -> f64 {
    let r = data.card(j);
    let q: usize = mb.iter().map(|&i| data.card(i)).product();
    let a_ij = ess / (r as f64 * q as f64);
    let a_j = ess / q as f64;
    let mut total = 0.0;
    for l in 0..q {
        // decode l, first blanket member most significant
        let mut cfg = vec![0u32; mb.len()];
        let mut rest = l;
        for (slot, &i) in cfg.iter_mut().zip(mb).rev() {
            *slot = (rest % data.card(i)) as u32;
            rest /= data.card(i);
        }
        let mut counts = vec![0usize; r];
        for row in 0..data.n() {
            if mb.iter().zip(&cfg).all(|(&i, &c)| data.value(row, i) == c) {
                counts[data.value(row, j) as usize] += 1;
            }
        }
        let n_l: usize = counts.iter().sum();
        total += ln_gamma(a_j) - ln_gamma(n_l as f64 + a_j);
        for &c in &counts {
            total += ln_gamma(c as f64 + a_ij) - ln_gamma(a_ij);
        }
    }
    total
}

/// Negative maximized pseudo-log-likelihood plus `((r_j - 1)/2) q_j ln n`.
pub fn bic_local(data: &Dataset, j: usize, mb: &[usize]) -> f64 {
    let table = count_configurations(data, j, mb).unwrap();
    let mut nll = 0.0;
    for counts in table.entries.values() {
        let n_l: u64 = counts.iter().sum();
        for &c in counts {
            if c > 0 {
                nll -= c as f64 * (c as f64 / n_l as f64).ln();
            }
        }
    }
    let q: f64 = mb.iter().map(|&i| data.card(i) as f64).product();
    nll + (data.card(j) as f64 - 1.0) / 2.0 * q * (data.n() as f64).ln()
}

/// All subsets of the other nodes, each sorted, in bitmask order.
pub fn all_blankets(d: usize, j: usize) -> Vec<Vec<usize>> {
    let others: Vec<usize> = (0..d).filter(|&i| i != j).collect();
    (0..1usize << others.len())
        .map(|m| {
            others
                .iter()
                .enumerate()
                .filter(|(b, _)| m >> b & 1 == 1)
                .map(|(_, &v)| v)
                .collect()
        })
        .collect()
}

/// Exhaustive argmax of the local score; ties go to the earlier subset.
pub fn exhaustive_blanket(data: &Dataset, j: usize, p: &ScoreParams) -> Vec<usize> {
    let mut best = (f64::NEG_INFINITY, Vec::new());
    for mb in all_blankets(data.d(), j) {
        let s = mpl_local(data, j, &mb, p).unwrap();
        if s > best.0 {
            best = (s, mb);
        }
    }
    best.1
}

pub fn hamming(a: &UGraph, b: &UGraph) -> usize {
    a.edge_set().symmetric_difference(b.edge_set()).count()
}

fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * (1.0 + a.abs().max(b.abs()))
}

// ---------------------------------------------------------------- property checks

pub fn check_count_totals(data: &Dataset, j: usize, mb: &[usize]) -> CheckResult {
    let t = count_configurations(data, j, mb).unwrap();
    prop_assert_eq!(t.total(), data.n() as u64);
    let q: u128 = mb.iter().map(|&i| data.card(i) as u128).product();
    prop_assert!(t.entries.len() as u128 <= q.min(data.n() as u128));
    Ok(())
}

pub fn check_decomposability(data: &Dataset, g: &UGraph, p: &ScoreParams) -> CheckResult {
    let global = mpl_global(data, g, p, None).unwrap();
    let locals: f64 = (0..g.d())
        .map(|j| mpl_local(data, j, &g.blanket(j), p).unwrap())
        .sum();
    let prior = graph_log_prior(g, data.cards(), p);
    prop_assert_eq!(global, locals + prior);
    if p.prior == GraphPrior::Uniform {
        prop_assert_eq!(global - prior, locals);
    }
    let node_priors: f64 = (0..g.d())
        .map(|j| node_log_prior(data.cards(), j, &g.blanket(j), p.prior))
        .sum();
    prop_assert!(close(prior, node_priors, 1e-12));
    Ok(())
}

pub fn check_sparse_dense(data: &Dataset, g: &UGraph, ess: f64) -> CheckResult {
    let p = ScoreParams::with_ess(ess).unwrap();
    for j in 0..g.d() {
        let mb = g.blanket(j);
        let q: usize = mb.iter().map(|&i| data.card(i)).product();
        if q > 1 << 12 {
            continue;
        }
        let sparse = mpl_local(data, j, &mb, &p).unwrap();
        let dense = dense_mpl_local(data, j, &mb, ess);
        prop_assert!(
            (sparse - dense).abs() <= 1e-9 * (1.0 + dense.abs()),
            "{} vs {}",
            sparse,
            dense
        );
    }
    Ok(())
}

/// Relabels the categories of `var` with the permutation `perm`.
pub fn relabel(data: &Dataset, var: usize, perm: &[u32]) -> Dataset {
    let columns: Vec<Vec<u32>> = (0..data.d())
        .map(|i| {
            let col = data.column(i);
            if i == var {
                col.iter().map(|&x| perm[x as usize]).collect()
            } else {
                col.to_vec()
            }
        })
        .collect();
    Dataset::from_columns(data.cards().to_vec(), columns).unwrap()
}

pub fn check_label_permutation(data: &Dataset, g: &UGraph, var: usize, shift: u32) -> CheckResult {
    let var = var % data.d();
    let r = data.card(var) as u32;
    let perm: Vec<u32> = (0..r).map(|x| (x + shift) % r).rev().collect();
    let other = relabel(data, var, &perm);
    let p = ScoreParams::default();
    for j in 0..g.d() {
        let mb = g.blanket(j);
        let a = mpl_local(data, j, &mb, &p).unwrap();
        let b = mpl_local(&other, j, &mb, &p).unwrap();
        prop_assert!(close(a, b, 1e-12), "node {}: {} vs {}", j, a, b);
    }
    Ok(())
}

pub fn check_row_permutation(data: &Dataset, g: &UGraph, seed: u64) -> CheckResult {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut perm: Vec<usize> = (0..data.n()).collect();
    for k in (1..perm.len()).rev() {
        perm.swap(k, rng.gen_range(0..=k));
    }
    let shuffled = data.permute_rows(&perm).unwrap();
    for prior in [GraphPrior::Uniform, GraphPrior::Sparsity] {
        let p = ScoreParams::new(1.0, prior).unwrap();
        prop_assert_eq!(
            mpl_global(data, g, &p, None).unwrap(),
            mpl_global(&shuffled, g, &p, None).unwrap()
        );
    }
    if data.n() > 0 {
        prop_assert_eq!(
            pic_global(data, g).unwrap(),
            pic_global(&shuffled, g).unwrap()
        );
    }
    for j in 0..g.d() {
        let mb = g.blanket(j);
        prop_assert_eq!(
            count_configurations(data, j, &mb).unwrap(),
            count_configurations(&shuffled, j, &mb).unwrap()
        );
    }
    Ok(())
}

pub fn check_cache_transparency(data: &Dataset, g: &UGraph, p: &ScoreParams) -> CheckResult {
    let plain = mpl_global(data, g, p, None).unwrap();
    let cache = LocalScoreCache::new();
    let cold = mpl_global(data, g, p, Some(&cache)).unwrap();
    let warm = mpl_global(data, g, p, Some(&cache)).unwrap();
    prop_assert_eq!(plain.to_bits(), cold.to_bits());
    prop_assert_eq!(plain.to_bits(), warm.to_bits());
    let tiny = LocalScoreCache::with_capacity_cap(1);
    prop_assert_eq!(
        plain.to_bits(),
        mpl_global(data, g, p, Some(&tiny)).unwrap().to_bits()
    );
    Ok(())
}

/// Blanket search: strictly increasing objective along the moves, no
/// improving addition at the end, no improving deletion above two members,
/// and the skip flag does not change the result.
pub fn check_blanket_search(data: &Dataset, p: &ScoreParams) -> CheckResult {
    for j in 0..data.d() {
        let r = find_markov_blanket(data, j, p, &MbSearchConfig::default()).unwrap();
        let objective = |mb: &[usize]| {
            mpl_local(data, j, mb, p).unwrap() + node_log_prior(data.cards(), j, mb, p.prior)
        };
        let mut prev = objective(&[]);
        let mut mb: Vec<usize> = Vec::new();
        for &(mv, value) in &r.moves {
            match mv {
                BlanketMove::Add(i) => {
                    mb.push(i);
                    mb.sort_unstable();
                }
                BlanketMove::Remove(i) => mb.retain(|&m| m != i),
            }
            prop_assert_eq!(value, objective(&mb));
            prop_assert!(value > prev);
            prev = value;
        }
        prop_assert_eq!(&mb, &r.blanket);
        prop_assert_eq!(r.score, mpl_local(data, j, &r.blanket, p).unwrap());
        for i in (0..data.d()).filter(|&i| i != j && !r.blanket.contains(&i)) {
            let mut bigger = r.blanket.clone();
            bigger.push(i);
            bigger.sort_unstable();
            prop_assert!(objective(&bigger) <= r.objective);
        }
        if r.blanket.len() > 2 {
            for &i in &r.blanket {
                let smaller: Vec<usize> = r.blanket.iter().copied().filter(|&m| m != i).collect();
                prop_assert!(objective(&smaller) <= r.objective);
            }
        }
        let unskipped = find_markov_blanket(
            data,
            j,
            p,
            &MbSearchConfig {
                skip_last_added: false,
                ..Default::default()
            },
        )
        .unwrap();
        prop_assert_eq!(&unskipped.blanket, &r.blanket);
    }
    let one = find_all_blankets(data, p, &MbSearchConfig::default(), 1).unwrap();
    let many = find_all_blankets(data, p, &MbSearchConfig::default(), 4).unwrap();
    prop_assert_eq!(one, many);
    Ok(())
}

/// Graph search: strictly increasing score along the trace, local optimality,
/// the brute-force sandwich, the distance-two rule and agreement of the
/// incremental and naive variants.
pub fn check_graph_search(data: &Dataset, space: &UGraph, p: &ScoreParams) -> CheckResult {
    let r = hill_climb(data, space, p, &HillClimbConfig::default()).unwrap();
    let mut g = UGraph::empty(space.d());
    let mut prev = mpl_global(data, &g, p, None).unwrap();
    let empty_score = prev;
    for &(e, t) in &r.trace {
        prop_assert_eq!(t == Toggle::Add, !g.contains(e));
        g.toggle(e);
        let s = mpl_global(data, &g, p, None).unwrap();
        prop_assert!(s > prev, "{} not above {}", s, prev);
        prev = s;
    }
    prop_assert_eq!(&g, &r.graph);
    prop_assert!(r.graph.is_subgraph_of(space));
    prop_assert!(is_local_optimum(data, &r.graph, space, p).unwrap());
    prop_assert!(r.score >= empty_score);

    let naive = hill_climb(
        data,
        space,
        p,
        &HillClimbConfig {
            naive: true,
            ..Default::default()
        },
    )
    .unwrap();
    prop_assert_eq!(&naive.graph, &r.graph);

    if space.edge_count() <= 12 {
        let (bf, bf_score) = brute_force_optimum(data, space, p).unwrap();
        prop_assert!(bf_score + 1e-9 >= r.score);
        if bf_score > r.score + 1e-9 {
            prop_assert!(hamming(&bf, &r.graph) >= 2);
        }
    }
    Ok(())
}

/// Every subgraph of `space` maps to a feasible assignment whose objective is
/// minus the sum of floored scaled node objectives, and decodes back.
pub fn check_encode_equivalence(
    data: &Dataset,
    space: &UGraph,
    p: &ScoreParams,
    scale: i64,
) -> CheckResult {
    let problem = encode(data, space, p, scale, u64::MAX).unwrap();
    let edges: Vec<Edge> = space.edges().collect();
    prop_assert!(edges.len() <= 12);
    for mask in 0u32..1 << edges.len() {
        let g = UGraph::from_edges(
            space.d(),
            edges
                .iter()
                .enumerate()
                .filter(|(k, _)| mask >> k & 1 == 1)
                .map(|(_, e)| (e.lo(), e.hi())),
        )
        .unwrap();
        let a = problem.assignment_for(&g).unwrap();
        prop_assert!(problem.is_feasible(&a));
        let expect: i64 = (0..g.d())
            .map(|j| {
                let mb = g.blanket(j);
                let s = mpl_local(data, j, &mb, p).unwrap()
                    + node_log_prior(data.cards(), j, &mb, p.prior);
                -((scale as f64 * s).floor() as i64)
            })
            .sum();
        prop_assert_eq!(problem.objective(&a), expect);
        prop_assert_eq!(problem.decode(&a).unwrap(), g);
    }
    Ok(())
}

/// The built-in solver reaches the brute-force optimum of the true score.
pub fn check_exact_matches_brute_force(
    data: &Dataset,
    space: &UGraph,
    p: &ScoreParams,
) -> CheckResult {
    let problem = encode(data, space, p, mplnet::pbo::DEFAULT_SCALE, u64::MAX).unwrap();
    let g = problem.decode(&solve_internal(&problem)).unwrap();
    let s = mpl_global(data, &g, p, None).unwrap();
    let (_, bf) = brute_force_optimum(data, space, p).unwrap();
    // flooring loses less than one unit of 1/K per node
    prop_assert!(s + space.d() as f64 / mplnet::pbo::DEFAULT_SCALE as f64 >= bf);
    let hc = hill_climb(data, space, p, &HillClimbConfig::default()).unwrap();
    prop_assert!(s + space.d() as f64 / mplnet::pbo::DEFAULT_SCALE as f64 >= hc.score);
    Ok(())
}

pub fn check_combine(family: &BlanketFamily) -> CheckResult {
    let and = family.combine(Combine::And);
    let or = family.combine(Combine::Or);
    prop_assert!(and.is_subgraph_of(&or));
    if family.is_symmetric() {
        prop_assert_eq!(and, or);
    }
    Ok(())
}

/// Empirical cell frequencies of the listed variables.
pub fn frequencies(data: &Dataset, vars: &[usize]) -> BTreeMap<Vec<u32>, f64> {
    let mut m = BTreeMap::new();
    for k in 0..data.n() {
        let key: Vec<u32> = vars.iter().map(|&v| data.value(k, v)).collect();
        *m.entry(key).or_insert(0.0) += 1.0;
    }
    for v in m.values_mut() {
        *v /= data.n() as f64;
    }
    m
}
