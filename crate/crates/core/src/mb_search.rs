//! Per-node Markov blanket discovery by greedy hill climbing.
//!
//! Each node's blanket is grown one member at a time. After every accepted
//! addition, while the blanket holds more than two members, the single best
//! improving deletion is applied repeatedly. Moves are accepted only on
//! strict improvement and ties go to the lowest node index.

use std::time::{Duration, Instant};

use rayon::prelude::*;

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::graph::BlanketFamily;
use crate::score::{LocalScoreCache, ScoreParams, Scorer};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MbSearchConfig {
    /// Additions that would grow the blanket beyond this size are skipped.
    pub max_blanket: Option<usize>,
    /// Skip the just-added node in the first deletion scan. Removing it
    /// restores the previous blanket, which scored strictly lower.
    pub skip_last_added: bool,
}

impl Default for MbSearchConfig {
    fn default() -> Self {
        Self {
            max_blanket: None,
            skip_last_added: true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BlanketMove {
    Add(usize),
    Remove(usize),
}

#[derive(Debug, Clone, PartialEq)]
pub struct BlanketSearch {
    /// Sorted blanket.
    pub blanket: Vec<usize>,
    /// Local log-MPL of `blanket`.
    pub score: f64,
    /// Search objective of `blanket`: the local score plus the node's prior share.
    pub objective: f64,
    /// Accepted moves with the objective reached after each.
    pub moves: Vec<(BlanketMove, f64)>,
}

fn with_member(mb: &[usize], i: usize) -> Vec<usize> {
    let mut v = mb.to_vec();
    let pos = v.binary_search(&i).unwrap_err();
    v.insert(pos, i);
    v
}

fn without_member(mb: &[usize], i: usize) -> Vec<usize> {
    mb.iter().copied().filter(|&m| m != i).collect()
}

/// Hill-climbs the blanket of node `j`.
pub fn find_markov_blanket(
    data: &Dataset,
    j: usize,
    p: &ScoreParams,
    config: &MbSearchConfig,
) -> Result<BlanketSearch> {
    let d = data.d();
    if j >= d {
        return Err(Error::NodeOutOfRange { node: j, d });
    }
    let cache = LocalScoreCache::new();
    let scorer = Scorer::new(data, *p, Some(&cache));

    let mut best: Vec<usize> = Vec::new();
    let mut best_score = scorer.objective(j, &best);
    let mut moves = Vec::new();

    loop {
        // addition scan
        let current = best.clone();
        let mut added = None;
        let room = config.max_blanket.is_none_or(|m| current.len() < m);
        if room {
            for i in (0..d).filter(|&i| i != j && current.binary_search(&i).is_err()) {
                let cand = with_member(&current, i);
                let s = scorer.objective(j, &cand);
                if s > best_score {
                    best_score = s;
                    best = cand;
                    added = Some(i);
                }
            }
        }
        let Some(added) = added else { break };
        moves.push((BlanketMove::Add(added), best_score));

        // deletion phase
        let mut first = true;
        while best.len() > 2 {
            let current = best.clone();
            let mut removed = None;
            for &i in &current {
                if first && config.skip_last_added && i == added {
                    continue;
                }
                let cand = without_member(&current, i);
                let s = scorer.objective(j, &cand);
                if s > best_score {
                    best_score = s;
                    best = cand;
                    removed = Some(i);
                }
            }
            first = false;
            match removed {
                Some(i) => moves.push((BlanketMove::Remove(i), best_score)),
                None => break,
            }
        }
    }

    Ok(BlanketSearch {
        score: scorer.local(j, &best),
        objective: best_score,
        blanket: best,
        moves,
    })
}

/// Blanket family with the wall-clock time spent on each node.
#[derive(Debug, Clone)]
pub struct TimedFamily {
    pub family: BlanketFamily,
    pub node_times: Vec<Duration>,
}

impl TimedFamily {
    pub fn max_node_time(&self) -> Duration {
        self.node_times.iter().copied().max().unwrap_or_default()
    }
}

/// Runs the per-node searches on `workers` threads and joins the results by node index.
pub fn find_all_blankets_timed(
    data: &Dataset,
    p: &ScoreParams,
    config: &MbSearchConfig,
    workers: usize,
) -> Result<TimedFamily> {
    if workers == 0 {
        return Err(Error::InvalidArgument("workers must be at least 1".into()));
    }
    let run = |j: usize| -> Result<(Vec<usize>, Duration)> {
        let start = Instant::now();
        let found = find_markov_blanket(data, j, p, config)?;
        Ok((found.blanket, start.elapsed()))
    };
    let results: Vec<Result<(Vec<usize>, Duration)>> = if workers == 1 {
        (0..data.d()).map(run).collect()
    } else {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(workers)
            .build()
            .map_err(|e| Error::InvalidArgument(format!("thread pool: {e}")))?;
        pool.install(|| (0..data.d()).into_par_iter().map(run).collect())
    };
    let mut blankets = Vec::with_capacity(data.d());
    let mut node_times = Vec::with_capacity(data.d());
    for r in results {
        let (mb, t) = r?;
        blankets.push(mb);
        node_times.push(t);
    }
    Ok(TimedFamily {
        family: BlanketFamily::new(blankets)?,
        node_times,
    })
}

pub fn find_all_blankets(
    data: &Dataset,
    p: &ScoreParams,
    config: &MbSearchConfig,
    workers: usize,
) -> Result<BlanketFamily> {
    Ok(find_all_blankets_timed(data, p, config, workers)?.family)
}
