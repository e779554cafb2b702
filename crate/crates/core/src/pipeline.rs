//! End-to-end learning and the synthetic benchmark loop.

use std::time::{Duration, Instant};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::global_search::{hill_climb, HillClimbConfig};
use crate::graph::{confusion, BlanketFamily, Combine, UGraph};
use crate::mb_search::{find_all_blankets_timed, MbSearchConfig};
use crate::pbo::{encode, solve_internal, PboProblem, DEFAULT_CANDIDATE_LIMIT, DEFAULT_SCALE};
use crate::score::{mpl_global, ScoreParams};
use crate::synth::{draw_factors, replicate, sample, ComponentKind};

/// What happens after the blankets are found.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub enum Phase2 {
    /// Output the combined blanket graph.
    None,
    /// Greedy search over the OR space.
    #[default]
    Hc,
    /// Exact optimum over the OR space with the built-in solver.
    Exact,
    /// Encode the OR space for an external solver and output the combined graph.
    OpbExport,
}

impl std::str::FromStr for Phase2 {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "none" => Ok(Phase2::None),
            "hc" => Ok(Phase2::Hc),
            "exact" => Ok(Phase2::Exact),
            "opb-export" => Ok(Phase2::OpbExport),
            other => Err(Error::InvalidArgument(format!("unknown phase 2 `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LearnConfig {
    pub params: ScoreParams,
    pub mb: MbSearchConfig,
    /// Combination used when phase 2 does not search.
    pub combine: Combine,
    pub phase2: Phase2,
    pub threads: usize,
    pub pbo_scale: i64,
    pub pbo_limit: u64,
}

impl Default for LearnConfig {
    fn default() -> Self {
        Self {
            params: ScoreParams::default(),
            mb: MbSearchConfig::default(),
            combine: Combine::And,
            phase2: Phase2::Hc,
            threads: 1,
            pbo_scale: DEFAULT_SCALE,
            pbo_limit: DEFAULT_CANDIDATE_LIMIT,
        }
    }
}

#[derive(Debug, Clone)]
pub struct LearnOutcome {
    pub family: BlanketFamily,
    pub and_graph: UGraph,
    pub or_graph: UGraph,
    pub graph: UGraph,
    /// `mpl_global` of `graph`.
    pub score: f64,
    /// Present for `Exact` and `OpbExport`.
    pub problem: Option<PboProblem>,
    pub blanket_times: Vec<Duration>,
    pub phase1_time: Duration,
    pub phase2_time: Duration,
}

impl LearnOutcome {
    pub fn max_blanket_time(&self) -> Duration {
        self.blanket_times.iter().copied().max().unwrap_or_default()
    }
}

/// Runs blanket discovery, then the configured second phase.
pub fn learn(data: &Dataset, config: &LearnConfig) -> Result<LearnOutcome> {
    let t0 = Instant::now();
    let timed = find_all_blankets_timed(data, &config.params, &config.mb, config.threads)?;
    let phase1_time = t0.elapsed();
    let family = timed.family;
    let and_graph = family.combine(Combine::And);
    let or_graph = family.combine(Combine::Or);
    log::info!(
        "blankets found in {:.3}s: |E_and| = {}, |E_or| = {}",
        phase1_time.as_secs_f64(),
        and_graph.edge_count(),
        or_graph.edge_count()
    );

    let t1 = Instant::now();
    let (graph, problem) = match config.phase2 {
        Phase2::None => (family.combine(config.combine), None),
        Phase2::Hc => {
            let r = hill_climb(data, &or_graph, &config.params, &HillClimbConfig::default())?;
            log::info!("hill climbing accepted {} toggles", r.trace.len());
            (r.graph, None)
        }
        Phase2::Exact => {
            let problem = encode(
                data,
                &or_graph,
                &config.params,
                config.pbo_scale,
                config.pbo_limit,
            )?;
            let solution = solve_internal(&problem);
            let g = problem.decode(&solution)?;
            (g, Some(problem))
        }
        Phase2::OpbExport => {
            let problem = encode(
                data,
                &or_graph,
                &config.params,
                config.pbo_scale,
                config.pbo_limit,
            )?;
            (family.combine(config.combine), Some(problem))
        }
    };
    let phase2_time = t1.elapsed();
    let score = mpl_global(data, &graph, &config.params, None)?;
    Ok(LearnOutcome {
        family,
        and_graph,
        or_graph,
        graph,
        score,
        problem,
        blanket_times: timed.node_times,
        phase1_time,
        phase2_time,
    })
}

/// Default sample-size ladder, 250 doubling to 32000.
pub const DEFAULT_SIZES: [usize; 8] = [250, 500, 1000, 2000, 4000, 8000, 16000, 32000];

#[derive(Debug, Clone, PartialEq)]
pub struct BenchConfig {
    pub kinds: Vec<ComponentKind>,
    pub replicas: usize,
    pub sizes: Vec<usize>,
    pub dists: usize,
    pub sets: usize,
    pub ess_list: Vec<f64>,
    pub seed: u64,
    pub threads: usize,
    pub learn: LearnConfig,
}

impl Default for BenchConfig {
    fn default() -> Self {
        Self {
            kinds: ComponentKind::ALL.to_vec(),
            replicas: 1,
            sizes: DEFAULT_SIZES.to_vec(),
            dists: 10,
            sets: 10,
            ess_list: vec![1.0],
            seed: 1,
            threads: 1,
            learn: LearnConfig::default(),
        }
    }
}

/// Means over all learned structures for one (n, ess) cell.
#[derive(Debug, Clone, PartialEq)]
pub struct BenchRow {
    pub n: usize,
    pub ess: f64,
    pub runs: usize,
    pub tp: f64,
    pub fp: f64,
    pub fn_: f64,
    pub hamming: f64,
    /// Mean wall-clock seconds for the whole learn call.
    pub total_secs: f64,
    /// Mean of the per-run largest single-blanket time.
    pub max_blanket_secs: f64,
}

impl BenchRow {
    pub const CSV_HEADER: &'static str = "n,ess,runs,tp,fp,fn,hamming,total_secs,max_blanket_secs";

    pub fn to_csv(&self) -> String {
        format!(
            "{},{},{},{:.4},{:.4},{:.4},{:.4},{:.6},{:.6}",
            self.n,
            self.ess,
            self.runs,
            self.tp,
            self.fp,
            self.fn_,
            self.hamming,
            self.total_secs,
            self.max_blanket_secs
        )
    }
}

/// Seed of distribution `dist`.
pub fn dist_seed(seed: u64, dist: usize) -> u64 {
    seed.wrapping_mul(1_000_003).wrapping_add(dist as u64)
}

/// Seed of dataset `set` drawn from distribution `dist`.
pub fn set_seed(seed: u64, dist: usize, set: usize) -> u64 {
    dist_seed(seed, dist)
        .wrapping_mul(1_000_033)
        .wrapping_add(set as u64 + 1)
}

/// Binary synthetic benchmark. For each distribution and dataset the largest
/// requested sample is drawn once and smaller sizes use its leading rows.
pub fn run_bench(config: &BenchConfig) -> Result<Vec<BenchRow>> {
    if config.sizes.is_empty()
        || config.ess_list.is_empty()
        || config.dists == 0
        || config.sets == 0
    {
        return Err(Error::InvalidArgument(
            "sizes, ess list, dists and sets must be non-empty".into(),
        ));
    }
    let truth = replicate(&config.kinds, config.replicas)?;
    let cards = vec![2; truth.d()];
    let n_max = *config.sizes.iter().max().expect("non-empty");

    #[derive(Default, Clone)]
    struct Acc {
        runs: usize,
        tp: f64,
        fp: f64,
        fn_: f64,
        total: f64,
        max_blanket: f64,
    }
    let cells = config.sizes.len() * config.ess_list.len();
    let mut acc = vec![Acc::default(); cells];

    for dist in 0..config.dists {
        let model = draw_factors(&truth, &cards, dist_seed(config.seed, dist))?;
        for set in 0..config.sets {
            let full = sample(&model, n_max, set_seed(config.seed, dist, set));
            for (si, &n) in config.sizes.iter().enumerate() {
                let data = full.truncate(n);
                for (ei, &ess) in config.ess_list.iter().enumerate() {
                    let mut learn_cfg = config.learn.clone();
                    learn_cfg.params = ScoreParams::new(ess, learn_cfg.params.prior)?;
                    learn_cfg.threads = config.threads;
                    let start = Instant::now();
                    let out = learn(&data, &learn_cfg)?;
                    let total = start.elapsed();
                    let c = confusion(&out.graph, &truth)?;
                    let a = &mut acc[si * config.ess_list.len() + ei];
                    a.runs += 1;
                    a.tp += c.tp as f64;
                    a.fp += c.fp as f64;
                    a.fn_ += c.fn_ as f64;
                    a.total += total.as_secs_f64();
                    a.max_blanket += out.max_blanket_time().as_secs_f64();
                    log::debug!("dist {dist} set {set} n {n} ess {ess}: {c:?}");
                }
            }
        }
    }

    let mut rows = Vec::with_capacity(cells);
    for (si, &n) in config.sizes.iter().enumerate() {
        for (ei, &ess) in config.ess_list.iter().enumerate() {
            let a = &acc[si * config.ess_list.len() + ei];
            let k = a.runs as f64;
            rows.push(BenchRow {
                n,
                ess,
                runs: a.runs,
                tp: a.tp / k,
                fp: a.fp / k,
                fn_: a.fn_ / k,
                hamming: (a.fp + a.fn_) / k,
                total_secs: a.total / k,
                max_blanket_secs: a.max_blanket / k,
            });
        }
    }
    Ok(rows)
}
