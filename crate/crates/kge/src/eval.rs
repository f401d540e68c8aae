//! Ranking over the full entity dictionary, MRR and hits@K, and per-slice
//! breakdowns by relation-frequency order of magnitude.
//!
//! Ties are handled pessimistically: every candidate scoring equal to the
//! positive pushes its rank down. A constant-score model therefore ranks
//! every positive at |candidates|, not 1.

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::str::FromStr;

#[cfg(feature = "parallel")]
use rayon::prelude::*;

use crate::error::{KgeError, Result};
use crate::graph::{DatasetStats, EntityId, Split, SplitSet, Triple, TripleStore};
use crate::models::{Direction, ModelParams, Query};

/// Whether known positives are removed from the candidate list.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RankMode {
    Raw,
    Filtered,
}

/// hits@K counts ranks < K (strict) or ranks ≤ K (inclusive, the common
/// convention and the default).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HitsComparator {
    Strict,
    Inclusive,
}

impl HitsComparator {
    fn admits(self, rank: usize, k: usize) -> bool {
        match self {
            HitsComparator::Strict => rank < k,
            HitsComparator::Inclusive => rank <= k,
        }
    }
}

impl fmt::Display for HitsComparator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            HitsComparator::Strict => "strict",
            HitsComparator::Inclusive => "inclusive",
        })
    }
}

impl FromStr for HitsComparator {
    type Err = KgeError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "strict" => Ok(HitsComparator::Strict),
            "inclusive" => Ok(HitsComparator::Inclusive),
            other => Err(KgeError::InvalidArgument(format!(
                "unknown hits comparator '{other}' (expected 'strict' or 'inclusive')"
            ))),
        }
    }
}

/// Ranks of one positive triple in both prediction directions.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RankingResult {
    pub triple: Triple,
    pub target_rank: usize,
    pub source_rank: usize,
}

/// rank = 1 + |{candidates scoring above the positive}|
///          + |{other candidates tying the positive}|.
///
/// In filtered mode, candidates forming a known positive under
/// `filter_splits` are excluded — except the query's own answer.
pub fn rank_triple(
    params: &ModelParams,
    store: &TripleStore,
    triple: Triple,
    filter_splits: SplitSet,
    mode: RankMode,
) -> RankingResult {
    RankingResult {
        triple,
        target_rank: rank_side(
            params,
            store,
            triple,
            Direction::PredictTarget,
            filter_splits,
            mode,
        ),
        source_rank: rank_side(
            params,
            store,
            triple,
            Direction::PredictSource,
            filter_splits,
            mode,
        ),
    }
}

fn rank_side(
    params: &ModelParams,
    store: &TripleStore,
    triple: Triple,
    direction: Direction,
    filter_splits: SplitSet,
    mode: RankMode,
) -> usize {
    let (query_entity, answer) = match direction {
        Direction::PredictTarget => (triple.source, triple.target),
        Direction::PredictSource => (triple.target, triple.source),
    };
    let excluded: HashSet<EntityId> = match mode {
        RankMode::Raw => HashSet::new(),
        RankMode::Filtered => match direction {
            Direction::PredictTarget => store
                .targets(triple.source, triple.relation, filter_splits)
                .into_iter()
                .filter(|&e| e != answer)
                .collect(),
            Direction::PredictSource => store
                .sources(triple.relation, triple.target, filter_splits)
                .into_iter()
                .filter(|&e| e != answer)
                .collect(),
        },
    };
    // The positive is scored through the same predicted vector as every
    // candidate, so ties are exact float equalities, not near-misses.
    let predicted = params.predicted_for(Query {
        entity: query_entity,
        relation: triple.relation,
        direction,
    });
    let pos = params.score_against(&predicted, answer);
    let mut rank = 1usize;
    for e in 0..params.n_entities() as EntityId {
        if e == answer || excluded.contains(&e) {
            continue;
        }
        if params.score_against(&predicted, e) >= pos {
            rank += 1;
        }
    }
    rank
}

/// Mean reciprocal rank. Errors on an empty list.
pub fn mrr(ranks: &[usize]) -> Result<f64> {
    if ranks.is_empty() {
        return Err(KgeError::EmptyInput {
            what: "rank list".to_string(),
        });
    }
    Ok(ranks.iter().map(|&r| 1.0 / r as f64).sum::<f64>() / ranks.len() as f64)
}

/// Fraction of ranks admitted at K under the comparator. Empty input → 0.
pub fn hits_at_k(ranks: &[usize], k: usize, comparator: HitsComparator) -> f64 {
    if ranks.is_empty() {
        return 0.0;
    }
    let hits = ranks.iter().filter(|&&r| comparator.admits(r, k)).count();
    hits as f64 / ranks.len() as f64
}

/// Metrics over one rank list (the whole split, or one frequency slice).
#[derive(Debug, Clone, PartialEq)]
pub struct SliceMetrics {
    pub mrr: f64,
    pub hits: BTreeMap<usize, f64>,
    /// Pooled ranks contributing to this slice (2 per triple).
    pub n_ranks: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricsReport {
    pub mrr: f64,
    pub hits: BTreeMap<usize, f64>,
    /// Keyed by relation-frequency order-of-magnitude group.
    pub per_slice: BTreeMap<u32, SliceMetrics>,
    /// Triples ranked (each contributes a target and a source rank).
    pub n_evaluated: usize,
    pub comparator: HitsComparator,
    pub config_fingerprint: String,
}

#[derive(Debug, Clone)]
pub struct EvalConfig {
    pub ks: Vec<usize>,
    pub comparator: HitsComparator,
    pub filter: SplitSet,
    pub mode: RankMode,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            ks: vec![1, 10],
            comparator: HitsComparator::Inclusive,
            filter: SplitSet::ALL,
            mode: RankMode::Filtered,
        }
    }
}

/// Ranks every triple of `split` in both directions, pools the ranks into one
/// list for the aggregate metrics, and breaks the same ranks down by the
/// triple's relation-frequency group.
pub fn evaluate(
    params: &ModelParams,
    store: &TripleStore,
    split: Split,
    stats: &DatasetStats,
    cfg: &EvalConfig,
) -> Result<MetricsReport> {
    let triples = store.split(split);
    if triples.is_empty() {
        return Err(KgeError::EmptyInput {
            what: format!("{split:?} split"),
        });
    }
    let results = rank_all(params, store, triples, cfg);
    assemble(&results, stats, cfg)
}

/// Sequential twin of [`evaluate`]; identical output bit for bit.
pub fn evaluate_serial(
    params: &ModelParams,
    store: &TripleStore,
    split: Split,
    stats: &DatasetStats,
    cfg: &EvalConfig,
) -> Result<MetricsReport> {
    let triples = store.split(split);
    if triples.is_empty() {
        return Err(KgeError::EmptyInput {
            what: format!("{split:?} split"),
        });
    }
    let results = rank_all_serial(params, store, triples, cfg);
    assemble(&results, stats, cfg)
}

#[cfg(feature = "parallel")]
pub fn rank_all(
    params: &ModelParams,
    store: &TripleStore,
    triples: &[Triple],
    cfg: &EvalConfig,
) -> Vec<RankingResult> {
    triples
        .par_iter()
        .map(|&t| rank_triple(params, store, t, cfg.filter, cfg.mode))
        .collect()
}

#[cfg(not(feature = "parallel"))]
pub fn rank_all(
    params: &ModelParams,
    store: &TripleStore,
    triples: &[Triple],
    cfg: &EvalConfig,
) -> Vec<RankingResult> {
    rank_all_serial(params, store, triples, cfg)
}

pub fn rank_all_serial(
    params: &ModelParams,
    store: &TripleStore,
    triples: &[Triple],
    cfg: &EvalConfig,
) -> Vec<RankingResult> {
    triples
        .iter()
        .map(|&t| rank_triple(params, store, t, cfg.filter, cfg.mode))
        .collect()
}

fn assemble(
    results: &[RankingResult],
    stats: &DatasetStats,
    cfg: &EvalConfig,
) -> Result<MetricsReport> {
    let mut pooled = Vec::with_capacity(results.len() * 2);
    let mut by_slice: BTreeMap<u32, Vec<usize>> = BTreeMap::new();
    for r in results {
        pooled.push(r.target_rank);
        pooled.push(r.source_rank);
        let slice = by_slice.entry(stats.oom_of(r.triple.relation)).or_default();
        slice.push(r.target_rank);
        slice.push(r.source_rank);
    }
    let hits_map = |ranks: &[usize]| -> BTreeMap<usize, f64> {
        cfg.ks
            .iter()
            .map(|&k| (k, hits_at_k(ranks, k, cfg.comparator)))
            .collect()
    };
    let per_slice = by_slice
        .into_iter()
        .map(|(group, ranks)| {
            Ok((
                group,
                SliceMetrics {
                    mrr: mrr(&ranks)?,
                    hits: hits_map(&ranks),
                    n_ranks: ranks.len(),
                },
            ))
        })
        .collect::<Result<BTreeMap<u32, SliceMetrics>>>()?;
    Ok(MetricsReport {
        mrr: mrr(&pooled)?,
        hits: hits_map(&pooled),
        per_slice,
        n_evaluated: results.len(),
        comparator: cfg.comparator,
        config_fingerprint: String::new(),
    })
}

/// Filtered both-direction MRR of `triples` (e.g. a dev subsample) against
/// all known splits; the training loop's early-stopping signal.
pub fn pooled_mrr(params: &ModelParams, store: &TripleStore, triples: &[Triple]) -> Result<f64> {
    let cfg = EvalConfig::default();
    let results = rank_all(params, store, triples, &cfg);
    let mut pooled = Vec::with_capacity(results.len() * 2);
    for r in &results {
        pooled.push(r.target_rank);
        pooled.push(r.source_rank);
    }
    mrr(&pooled)
}
