//! The six negative-sampling strategies. All share one interface: given a
//! positive triple and n_s, emit negative source ids and negative target ids.
//!
//! Pool-based strategies (corrupt, typed, relational) draw without replacement
//! from an enumerated candidate pool and top up any shortfall with random
//! entities; both the pool and the fill reject ids that would form a known
//! positive under the configured filter splits. Random sampling deliberately
//! performs no such check. The embedding strategies (nn, nmiss) query a ball
//! tree built once over a frozen model's entity rows and post-filter positives
//! from the result list.

pub mod knn;

pub use knn::KnnIndex;

use std::collections::HashSet;

use rand::Rng;
use rand_chacha::ChaCha8Rng;

#[cfg(feature = "parallel")]
use rayon::prelude::*;

use crate::error::Result;
use crate::graph::{EntityId, SplitSet, Triple, TripleStore, TypeCatalog};
use crate::models::ModelParams;

/// Negatives for one positive: up to n_s ids per direction.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct NegativeBatch {
    pub sources: Vec<EntityId>,
    pub targets: Vec<EntityId>,
}

/// Which slot of the positive is being corrupted.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Side {
    Target,
    Source,
}

pub trait NegativeSampler: Sync {
    /// Draws negatives for one positive. Deterministic given the rng state.
    fn sample(
        &self,
        store: &TripleStore,
        positive: Triple,
        n_s: usize,
        rng: &mut ChaCha8Rng,
    ) -> NegativeBatch;

    /// Draws negatives for a batch of positives. The default consumes the rng
    /// sequentially, one positive at a time; rng-free samplers override this
    /// with a parallel map.
    fn sample_batch(
        &self,
        store: &TripleStore,
        positives: &[Triple],
        n_s: usize,
        rng: &mut ChaCha8Rng,
    ) -> Vec<NegativeBatch> {
        positives
            .iter()
            .map(|&p| self.sample(store, p, n_s, rng))
            .collect()
    }

    /// True for samplers built around a frozen embedding model (nn, nmiss).
    fn is_embedding_based(&self) -> bool {
        false
    }
}

/// Uniform draws over the whole entity set, with replacement, positivity
/// unchecked: collisions with true triples are accepted as noise.
#[derive(Debug, Clone, Copy, Default)]
pub struct RandomSampler;

impl NegativeSampler for RandomSampler {
    fn sample(
        &self,
        store: &TripleStore,
        _positive: Triple,
        n_s: usize,
        rng: &mut ChaCha8Rng,
    ) -> NegativeBatch {
        let n = store.n_entities() as u32;
        let targets = (0..n_s).map(|_| rng.random_range(0..n)).collect();
        let sources = (0..n_s).map(|_| rng.random_range(0..n)).collect();
        NegativeBatch { sources, targets }
    }
}

/// Entities observed in the corrupted slot for the same relation (over
/// train∪dev), minus known positives.
#[derive(Debug, Clone, Copy)]
pub struct CorruptSampler {
    pub filter: SplitSet,
}

impl Default for CorruptSampler {
    fn default() -> Self {
        CorruptSampler {
            filter: SplitSet::TRAIN_DEV,
        }
    }
}

impl NegativeSampler for CorruptSampler {
    fn sample(
        &self,
        store: &TripleStore,
        positive: Triple,
        n_s: usize,
        rng: &mut ChaCha8Rng,
    ) -> NegativeBatch {
        NegativeBatch {
            targets: corrupt_side(store, positive, Side::Target, n_s, self.filter, rng),
            sources: corrupt_side(store, positive, Side::Source, n_s, self.filter, rng),
        }
    }
}

/// Entities whose type set intersects the relation's declared range (targets)
/// or domain (sources). Relations without a signature fall back to corrupt
/// sampling.
#[derive(Debug, Clone)]
pub struct TypedSampler<'a> {
    catalog: &'a TypeCatalog,
    pub filter: SplitSet,
}

impl<'a> TypedSampler<'a> {
    pub fn new(catalog: &'a TypeCatalog) -> Self {
        TypedSampler {
            catalog,
            filter: SplitSet::TRAIN_DEV,
        }
    }
}

impl NegativeSampler for TypedSampler<'_> {
    fn sample(
        &self,
        store: &TripleStore,
        positive: Triple,
        n_s: usize,
        rng: &mut ChaCha8Rng,
    ) -> NegativeBatch {
        match self.catalog.signature(positive.relation) {
            None => CorruptSampler {
                filter: self.filter,
            }
            .sample(store, positive, n_s, rng),
            Some((domain, range)) => {
                let targets = pool_side(
                    store,
                    positive,
                    Side::Target,
                    self.catalog.entities_with_type(range),
                    n_s,
                    self.filter,
                    rng,
                );
                let sources = pool_side(
                    store,
                    positive,
                    Side::Source,
                    self.catalog.entities_with_type(domain),
                    n_s,
                    self.filter,
                    rng,
                );
                NegativeBatch { sources, targets }
            }
        }
    }
}

/// Entities connected to the positive's source (for targets) or target (for
/// sources) through relations other than the positive's own.
#[derive(Debug, Clone, Copy)]
pub struct RelationalSampler {
    pub filter: SplitSet,
}

impl Default for RelationalSampler {
    fn default() -> Self {
        RelationalSampler {
            filter: SplitSet::TRAIN_DEV,
        }
    }
}

impl NegativeSampler for RelationalSampler {
    fn sample(
        &self,
        store: &TripleStore,
        positive: Triple,
        n_s: usize,
        rng: &mut ChaCha8Rng,
    ) -> NegativeBatch {
        let pool = |around: EntityId| -> Vec<EntityId> {
            // Neighbors through any other relation, deduplicated in
            // first-seen order (deterministic).
            let mut seen = HashSet::new();
            store
                .neighbors(around)
                .iter()
                .filter(|(r, _)| *r != positive.relation)
                .map(|(_, e)| *e)
                .filter(|&e| seen.insert(e))
                .collect()
        };
        let target_pool = pool(positive.source);
        let source_pool = pool(positive.target);
        NegativeBatch {
            targets: pool_side(
                store,
                positive,
                Side::Target,
                &target_pool,
                n_s,
                self.filter,
                rng,
            ),
            sources: pool_side(
                store,
                positive,
                Side::Source,
                &source_pool,
                n_s,
                self.filter,
                rng,
            ),
        }
    }
}

fn is_known_positive(
    store: &TripleStore,
    positive: Triple,
    side: Side,
    candidate: EntityId,
    filter: SplitSet,
) -> bool {
    match side {
        Side::Target => store.contains(positive.source, positive.relation, candidate, filter),
        Side::Source => store.contains(candidate, positive.relation, positive.target, filter),
    }
}

/// Without-replacement draw from `pool` minus known positives, topped up by
/// filtered random fill when the pool is short.
fn pool_side(
    store: &TripleStore,
    positive: Triple,
    side: Side,
    pool: &[EntityId],
    n_s: usize,
    filter: SplitSet,
    rng: &mut ChaCha8Rng,
) -> Vec<EntityId> {
    let admissible: Vec<EntityId> = pool
        .iter()
        .copied()
        .filter(|&c| !is_known_positive(store, positive, side, c, filter))
        .collect();
    let take = admissible.len().min(n_s);
    let mut out: Vec<EntityId> = rand::seq::index::sample(rng, admissible.len(), take)
        .iter()
        .map(|i| admissible[i])
        .collect();
    if out.len() < n_s {
        random_filtered_fill(store, positive, side, n_s - out.len(), filter, rng, &mut out);
    }
    out
}

fn corrupt_side(
    store: &TripleStore,
    positive: Triple,
    side: Side,
    n_s: usize,
    filter: SplitSet,
    rng: &mut ChaCha8Rng,
) -> Vec<EntityId> {
    let pool = match side {
        Side::Target => store.relation_targets(positive.relation),
        Side::Source => store.relation_sources(positive.relation),
    };
    pool_side(store, positive, side, pool, n_s, filter, rng)
}

/// Uniform draws with replacement, rejecting ids that would form a known
/// positive. Falls back to one complement enumeration if rejection stalls
/// (dense positive rows); emits fewer than `need` only when no admissible
/// entity exists at all.
fn random_filtered_fill(
    store: &TripleStore,
    positive: Triple,
    side: Side,
    need: usize,
    filter: SplitSet,
    rng: &mut ChaCha8Rng,
    out: &mut Vec<EntityId>,
) {
    let n = store.n_entities() as u32;
    let mut added = 0;
    let max_attempts = 50 * need + 100;
    for _ in 0..max_attempts {
        if added == need {
            return;
        }
        let c = rng.random_range(0..n);
        if !is_known_positive(store, positive, side, c, filter) {
            out.push(c);
            added += 1;
        }
    }
    let complement: Vec<EntityId> = (0..n)
        .filter(|&c| !is_known_positive(store, positive, side, c, filter))
        .collect();
    if complement.is_empty() {
        return;
    }
    while added < need {
        out.push(complement[rng.random_range(0..complement.len())]);
        added += 1;
    }
}

/// A pre-trained embedding model used only to generate negatives; its
/// parameters are never updated.
#[derive(Debug, Clone)]
pub struct FrozenSamplerModel {
    params: ModelParams,
}

impl FrozenSamplerModel {
    pub fn freeze(params: ModelParams) -> Self {
        FrozenSamplerModel { params }
    }

    pub fn params(&self) -> &ModelParams {
        &self.params
    }
}

pub const DEFAULT_LEAF_SIZE: usize = 32;

/// Negatives nearest to the positive entity's own frozen embedding: hardest
/// lookalikes of the true answer.
#[derive(Debug, Clone)]
pub struct NearestNeighborSampler<'a> {
    frozen: &'a FrozenSamplerModel,
    index: KnnIndex,
    pub filter: SplitSet,
}

impl<'a> NearestNeighborSampler<'a> {
    pub fn new(frozen: &'a FrozenSamplerModel, leaf_size: usize, filter: SplitSet) -> Result<Self> {
        Ok(NearestNeighborSampler {
            index: build_entity_index(frozen.params(), leaf_size)?,
            frozen,
            filter,
        })
    }

    fn sample_one(&self, store: &TripleStore, positive: Triple, n_s: usize) -> NegativeBatch {
        let p = self.frozen.params();
        NegativeBatch {
            targets: knn_side(
                &self.index,
                store,
                positive,
                Side::Target,
                p.entity(positive.target),
                n_s,
                self.filter,
            ),
            sources: knn_side(
                &self.index,
                store,
                positive,
                Side::Source,
                p.entity(positive.source),
                n_s,
                self.filter,
            ),
        }
    }
}

impl NegativeSampler for NearestNeighborSampler<'_> {
    fn sample(
        &self,
        store: &TripleStore,
        positive: Triple,
        n_s: usize,
        _rng: &mut ChaCha8Rng,
    ) -> NegativeBatch {
        self.sample_one(store, positive, n_s)
    }

    fn sample_batch(
        &self,
        store: &TripleStore,
        positives: &[Triple],
        n_s: usize,
        _rng: &mut ChaCha8Rng,
    ) -> Vec<NegativeBatch> {
        map_positives(positives, |p| self.sample_one(store, p, n_s))
    }

    fn is_embedding_based(&self) -> bool {
        true
    }
}

/// Negatives nearest to the frozen model's *predicted* target/source vectors:
/// entities the model itself would rank highly — near misses.
#[derive(Debug, Clone)]
pub struct NearMissSampler<'a> {
    frozen: &'a FrozenSamplerModel,
    index: KnnIndex,
    pub filter: SplitSet,
}

impl<'a> NearMissSampler<'a> {
    pub fn new(frozen: &'a FrozenSamplerModel, leaf_size: usize, filter: SplitSet) -> Result<Self> {
        Ok(NearMissSampler {
            index: build_entity_index(frozen.params(), leaf_size)?,
            frozen,
            filter,
        })
    }

    fn sample_one(&self, store: &TripleStore, positive: Triple, n_s: usize) -> NegativeBatch {
        let (v_s, v_t) = self.frozen.params().predicted_vectors(
            positive.source,
            positive.relation,
            positive.target,
        );
        NegativeBatch {
            targets: knn_side(&self.index, store, positive, Side::Target, &v_t, n_s, self.filter),
            sources: knn_side(&self.index, store, positive, Side::Source, &v_s, n_s, self.filter),
        }
    }
}

impl NegativeSampler for NearMissSampler<'_> {
    fn sample(
        &self,
        store: &TripleStore,
        positive: Triple,
        n_s: usize,
        _rng: &mut ChaCha8Rng,
    ) -> NegativeBatch {
        self.sample_one(store, positive, n_s)
    }

    fn sample_batch(
        &self,
        store: &TripleStore,
        positives: &[Triple],
        n_s: usize,
        _rng: &mut ChaCha8Rng,
    ) -> Vec<NegativeBatch> {
        map_positives(positives, |p| self.sample_one(store, p, n_s))
    }

    fn is_embedding_based(&self) -> bool {
        true
    }
}

/// One tree over all frozen entity rows serves both query directions; it is
/// built once because the frozen model never changes.
fn build_entity_index(params: &ModelParams, leaf_size: usize) -> Result<KnnIndex> {
    KnnIndex::build(
        (0..params.n_entities() as u32).map(|e| (e, params.entity(e))),
        leaf_size,
    )
}

/// kNN around `query`, excluding the positive's own entity and every entity
/// forming a known positive under `filter`. Requests enough neighbors that the
/// exclusions can never starve the result below n_s while candidates remain.
fn knn_side(
    index: &KnnIndex,
    store: &TripleStore,
    positive: Triple,
    side: Side,
    query: &[f64],
    n_s: usize,
    filter: SplitSet,
) -> Vec<EntityId> {
    let mut excluded: HashSet<EntityId> = match side {
        Side::Target => store
            .targets(positive.source, positive.relation, filter)
            .into_iter()
            .collect(),
        Side::Source => store
            .sources(positive.relation, positive.target, filter)
            .into_iter()
            .collect(),
    };
    excluded.insert(match side {
        Side::Target => positive.target,
        Side::Source => positive.source,
    });
    let k = (n_s + excluded.len()).min(index.len());
    index
        .knn(query, k)
        .into_iter()
        .map(|(id, _)| id)
        .filter(|id| !excluded.contains(id))
        .take(n_s)
        .collect()
}

#[cfg(feature = "parallel")]
fn map_positives<F>(positives: &[Triple], f: F) -> Vec<NegativeBatch>
where
    F: Fn(Triple) -> NegativeBatch + Sync,
{
    positives.par_iter().map(|&p| f(p)).collect()
}

#[cfg(not(feature = "parallel"))]
fn map_positives<F>(positives: &[Triple], f: F) -> Vec<NegativeBatch>
where
    F: Fn(Triple) -> NegativeBatch + Sync,
{
    positives.iter().map(|&p| f(p)).collect()
}
