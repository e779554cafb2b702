//! Marginal pseudo-likelihood scores, graph priors and the PIC criterion.
//!
//! All logarithms are natural. The local score of node `j` with blanket `mb`
//! uses the symmetric Dirichlet hyperparameters `α_ijl = N / (r_j · q_j)` and
//! sums only over blanket configurations that occur in the data; unobserved
//! configurations contribute exactly zero.

use std::collections::HashMap;
use std::sync::RwLock;

use crate::data::{check_blanket, flat_counts, sorted_unique, Dataset};
use crate::error::{Error, Result};
use crate::graph::UGraph;

const EULER_GAMMA: f64 = 0.577_215_664_901_532_9;

/// Below this `ln x`, `ln Γ(x)` is evaluated from its two-term expansion at 0.
const TINY_LN_ARG: f64 = -30.0;

/// `ln Γ(x)` for `x > 0`.
pub fn log_gamma(x: f64) -> Result<f64> {
    if x.is_nan() || x <= 0.0 {
        return Err(Error::InvalidArgument(format!(
            "log_gamma is defined for positive arguments, got {x}"
        )));
    }
    Ok(ln_gamma_pos(x))
}

#[inline]
fn ln_gamma_pos(x: f64) -> f64 {
    if x == 1.0 || x == 2.0 {
        0.0
    } else {
        statrs::function::gamma::ln_gamma(x)
    }
}

/// `ln Γ(e^ln_x)`, accurate when `x` underflows.
fn ln_gamma_of_ln(ln_x: f64) -> f64 {
    if ln_x < TINY_LN_ARG {
        -ln_x - EULER_GAMMA * ln_x.exp()
    } else {
        ln_gamma_pos(ln_x.exp())
    }
}

/// Graph prior used on top of the pseudo-likelihood.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum GraphPrior {
    #[default]
    Uniform,
    /// `p(G) ∝ ∏_j 2^{-q_j (r_j - 1)}`, unnormalized.
    Sparsity,
}

/// Equivalent sample size and graph prior.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScoreParams {
    pub ess: f64,
    pub prior: GraphPrior,
}

impl Default for ScoreParams {
    fn default() -> Self {
        Self {
            ess: 1.0,
            prior: GraphPrior::Uniform,
        }
    }
}

impl ScoreParams {
    pub fn new(ess: f64, prior: GraphPrior) -> Result<Self> {
        if !(ess > 0.0 && ess.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "equivalent sample size must be positive, got {ess}"
            )));
        }
        Ok(Self { ess, prior })
    }

    pub fn with_ess(ess: f64) -> Result<Self> {
        Self::new(ess, GraphPrior::Uniform)
    }
}

/// Number of blanket configurations `q_j = ∏ r_i`, exact while it fits in
/// 128 bits and otherwise only through its logarithm.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConfigCount {
    pub exact: Option<u128>,
    pub ln: f64,
}

impl ConfigCount {
    pub fn of(cards: &[usize], mb: &[usize]) -> Self {
        let mut exact = Some(1u128);
        let mut ln = 0.0;
        for &i in mb {
            exact = exact.and_then(|q| q.checked_mul(cards[i] as u128));
            ln += (cards[i] as f64).ln();
        }
        Self { exact, ln }
    }

    pub fn as_f64(&self) -> f64 {
        match self.exact {
            Some(q) => q as f64,
            None => self.ln.exp(),
        }
    }
}

/// Local log-MPL without argument checks. `mb` must not contain `j`.
pub(crate) fn mpl_local_unchecked(data: &Dataset, j: usize, mb: &[usize], ess: f64) -> f64 {
    if data.n() == 0 {
        return 0.0;
    }
    let r = data.card(j);
    let q = ConfigCount::of(data.cards(), mb);
    // α_jl = N / q_j and α_ijl = α_jl / r_j
    let (a_cfg, a_cell, lg_cfg, lg_cell) = match q.exact {
        Some(qe) if qe <= 1u128 << 53 => {
            let a_cfg = ess / qe as f64;
            let a_cell = ess / (r as f64 * qe as f64);
            (a_cfg, a_cell, ln_gamma_pos(a_cfg), ln_gamma_pos(a_cell))
        }
        _ => {
            let ln_cfg = ess.ln() - q.ln;
            let ln_cell = ln_cfg - (r as f64).ln();
            (
                ln_cfg.exp(),
                ln_cell.exp(),
                ln_gamma_of_ln(ln_cfg),
                ln_gamma_of_ln(ln_cell),
            )
        }
    };

    let counts = flat_counts(data, j, mb);
    let mut total = 0.0;
    for row in counts.rows() {
        let n_cfg: u32 = row.iter().sum();
        let mut term = lg_cfg - ln_gamma_pos(n_cfg as f64 + a_cfg);
        for &c in row {
            if c > 0 {
                term += ln_gamma_pos(c as f64 + a_cell) - lg_cell;
            }
        }
        total += term;
    }
    total
}

/// Local log marginal pseudo-likelihood `log p(x_j | x_mb)`.
pub fn mpl_local(data: &Dataset, j: usize, mb: &[usize], p: &ScoreParams) -> Result<f64> {
    check_blanket(data.d(), j, mb)?;
    Ok(mpl_local_unchecked(data, j, &sorted_unique(mb), p.ess))
}

/// Per-node share of the graph prior for node `j` with blanket `mb`.
pub fn node_log_prior(cards: &[usize], j: usize, mb: &[usize], prior: GraphPrior) -> f64 {
    match prior {
        GraphPrior::Uniform => 0.0,
        GraphPrior::Sparsity => {
            let q = ConfigCount::of(cards, mb).as_f64();
            -std::f64::consts::LN_2 * q * (cards[j] as f64 - 1.0)
        }
    }
}

/// `log p(G)` up to a constant.
pub fn graph_log_prior(g: &UGraph, cards: &[usize], p: &ScoreParams) -> f64 {
    match p.prior {
        GraphPrior::Uniform => 0.0,
        GraphPrior::Sparsity => (0..g.d())
            .map(|j| node_log_prior(cards, j, &g.blanket(j), p.prior))
            .sum(),
    }
}

/// Memo of local scores keyed by `(node, sorted blanket)`.
///
/// Backed by a shared map behind a read-write lock, so one cache may serve
/// several threads. Values are deterministic functions of their key, so
/// concurrent inserts of the same key are benign and the last writer wins.
/// A cache must only be used with one dataset and equivalent sample size.
#[derive(Debug, Default)]
pub struct LocalScoreCache {
    map: RwLock<HashMap<(usize, Vec<usize>), f64>>,
    cap: Option<usize>,
}

impl LocalScoreCache {
    pub fn new() -> Self {
        Self::default()
    }

    /// A cache that stops inserting once it holds `cap` entries.
    pub fn with_capacity_cap(cap: usize) -> Self {
        Self {
            map: RwLock::default(),
            cap: Some(cap),
        }
    }

    pub fn len(&self) -> usize {
        self.map.read().expect("cache lock").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Looks up `(j, mb)`; `mb` must already be sorted.
    pub fn get_or_insert_with(&self, j: usize, mb: &[usize], compute: impl FnOnce() -> f64) -> f64 {
        let key = (j, mb.to_vec());
        if let Some(&v) = self.map.read().expect("cache lock").get(&key) {
            return v;
        }
        let v = compute();
        let mut map = self.map.write().expect("cache lock");
        if self.cap.is_none_or(|cap| map.len() < cap) {
            map.insert(key, v);
        }
        v
    }
}

/// Dataset, parameters and cache bundled for repeated local evaluations.
pub struct Scorer<'a> {
    data: &'a Dataset,
    params: ScoreParams,
    cache: Option<&'a LocalScoreCache>,
}

impl<'a> Scorer<'a> {
    pub fn new(data: &'a Dataset, params: ScoreParams, cache: Option<&'a LocalScoreCache>) -> Self {
        Self {
            data,
            params,
            cache,
        }
    }

    pub fn data(&self) -> &'a Dataset {
        self.data
    }

    pub fn params(&self) -> &ScoreParams {
        &self.params
    }

    /// Local log-MPL for a sorted blanket not containing `j`.
    pub fn local(&self, j: usize, mb: &[usize]) -> f64 {
        debug_assert!(mb.windows(2).all(|w| w[0] < w[1]) && !mb.contains(&j));
        match self.cache {
            Some(c) => c.get_or_insert_with(j, mb, || {
                mpl_local_unchecked(self.data, j, mb, self.params.ess)
            }),
            None => mpl_local_unchecked(self.data, j, mb, self.params.ess),
        }
    }

    /// Local log-MPL plus the node's share of the graph prior: the quantity
    /// the search procedures maximize.
    pub fn objective(&self, j: usize, mb: &[usize]) -> f64 {
        self.local(j, mb) + node_log_prior(self.data.cards(), j, mb, self.params.prior)
    }
}

fn check_graph(data: &Dataset, g: &UGraph) -> Result<()> {
    if g.d() != data.d() {
        return Err(Error::DimensionMismatch(format!(
            "graph on {} nodes, data has {} variables",
            g.d(),
            data.d()
        )));
    }
    Ok(())
}

/// `Σ_j log p(x_j | x_adj(j)) + log p(G)`.
pub fn mpl_global(
    data: &Dataset,
    g: &UGraph,
    p: &ScoreParams,
    cache: Option<&LocalScoreCache>,
) -> Result<f64> {
    check_graph(data, g)?;
    let scorer = Scorer::new(data, *p, cache);
    let local: f64 = (0..g.d()).map(|j| scorer.local(j, &g.blanket(j))).sum();
    Ok(local + graph_log_prior(g, data.cards(), p))
}

/// Log pseudo-Bayes factor of two graphs that differ in exactly one edge.
pub fn log_pseudo_bayes_factor(
    data: &Dataset,
    g1: &UGraph,
    g2: &UGraph,
    p: &ScoreParams,
    cache: Option<&LocalScoreCache>,
) -> Result<f64> {
    check_graph(data, g1)?;
    check_graph(data, g2)?;
    let diff: Vec<_> = g1.edge_set().symmetric_difference(g2.edge_set()).collect();
    if diff.len() != 1 {
        return Err(Error::NotSingleEdgeDifference(diff.len()));
    }
    let e = *diff[0];
    let scorer = Scorer::new(data, *p, cache);
    let side = |g: &UGraph| {
        scorer.objective(e.lo(), &g.blanket(e.lo())) + scorer.objective(e.hi(), &g.blanket(e.hi()))
    };
    Ok(side(g1) - side(g2))
}

/// PIC of node `j` with blanket `mb`, to be minimized:
/// `-Σ_l Σ_i n_ijl ln(n_ijl / n_jl) + q_j ln n` with `q_j` over the full
/// configuration space.
pub fn pic_local(data: &Dataset, j: usize, mb: &[usize]) -> Result<f64> {
    check_blanket(data.d(), j, mb)?;
    if data.n() == 0 {
        return Err(Error::InvalidArgument(
            "PIC is undefined for an empty dataset".into(),
        ));
    }
    let mb = sorted_unique(mb);
    let counts = flat_counts(data, j, &mb);
    let mut fit = 0.0;
    for row in counts.rows() {
        let n_cfg: u32 = row.iter().sum();
        for &c in row {
            if c > 0 {
                fit -= c as f64 * (c as f64 / n_cfg as f64).ln();
            }
        }
    }
    let q = ConfigCount::of(data.cards(), &mb).as_f64();
    Ok(fit + q * (data.n() as f64).ln())
}

/// Sum of local PIC values over all nodes of `g`.
pub fn pic_global(data: &Dataset, g: &UGraph) -> Result<f64> {
    check_graph(data, g)?;
    (0..g.d()).map(|j| pic_local(data, j, &g.blanket(j))).sum()
}
