//! Deterministic synthetic typed knowledge graph for desk-scale training
//! runs and benchmarks.
//!
//! 200 entities live on a line of 8 levels × 25 positions. Four interval
//! types cover the levels, and each of the 10 relations is a
//! position-preserving level shift applied to an explicit set of source
//! levels, so every relation is a strictly typed 1:1 mapping and the whole
//! graph admits an exact translation structure (level k ↦ k·u plus a
//! per-position anchor). Two properties are deliberate:
//!
//! - **Chain-free relations.** Within one relation no level is both a source
//!   and a target. A symmetric scorer must give (a, b) and (b, a) the same
//!   score, so if one relation contained both the pair a→b and b→c, the
//!   inverse-direction candidate a would tie the gold c on every query from
//!   b. Keeping source and target levels disjoint per relation removes that
//!   trap while leaving the maps asymmetric (so translation models still see
//!   a direction).
//! - **Multi-level target pools.** Each relation touches four source levels,
//!   so corrupting a triple inside one relation already contrasts the gold
//!   against same-position entities from other levels, which is what forces
//!   level discrimination (not just position matching) during training.
//!
//! The triple set is fixed; the seed drives only the train/dev/test split.

use rand::seq::SliceRandom;

use crate::graph::{EntityId, Triple, TripleStore, TypeCatalog, Vocab};
use crate::rng;

pub const N_LEVELS: usize = 8;
pub const N_POSITIONS: usize = 25;
pub const N_ENTITIES: usize = N_LEVELS * N_POSITIONS;
pub const N_TYPES: usize = 4;
pub const N_RELATIONS: usize = 10;
pub const N_DEV: usize = 100;
pub const N_TEST: usize = 100;

/// Levels covered by each type.
const TYPE_LEVELS: [&[usize]; N_TYPES] = [
    &[0, 1, 2, 3, 4, 5, 6],
    &[1, 2, 3, 4, 5, 6, 7],
    &[0, 1, 2, 3, 4, 5],
    &[2, 3, 4, 5, 6, 7],
];

/// (domain type, range type, level shift, source levels) per relation.
/// Source levels are chain-free w.r.t. the shift (no level appears on both
/// sides of one relation) and shifted sources always land inside the range
/// type, so every triple is well typed by construction.
const RELATIONS: [(usize, usize, i64, &[usize]); N_RELATIONS] = [
    (0, 1, 1, &[0, 2, 4, 6]),
    (1, 0, -1, &[1, 3, 5, 7]),
    (2, 3, 2, &[0, 1, 4, 5]),
    (3, 2, -2, &[2, 3, 6, 7]),
    (0, 1, 1, &[0, 2, 4, 6]),
    (1, 0, -1, &[1, 3, 5, 7]),
    (2, 3, 2, &[0, 1, 4, 5]),
    (3, 2, -2, &[2, 3, 6, 7]),
    (0, 1, 1, &[0, 2, 4, 6]),
    (1, 0, -1, &[1, 3, 5, 7]),
];

#[derive(Debug, Clone)]
pub struct SyntheticKg {
    pub store: TripleStore,
    pub catalog: TypeCatalog,
}

fn entity_id(level: usize, position: usize) -> EntityId {
    (level * N_POSITIONS + position) as EntityId
}

/// Generates the synthetic KG. The triple set is fixed; `seed` shuffles the
/// triples before carving off the dev and test splits.
pub fn synthetic_typed_kg(seed: u64) -> SyntheticKg {
    let mut entities = Vocab::new();
    for level in 0..N_LEVELS {
        for position in 0..N_POSITIONS {
            entities.intern(&format!("ent{:03}", level * N_POSITIONS + position));
        }
    }
    let mut relations = Vocab::new();
    for r in 0..N_RELATIONS {
        relations.intern(&format!("rel{r}"));
    }

    let mut catalog = TypeCatalog::default();
    for (type_idx, levels) in TYPE_LEVELS.iter().enumerate() {
        for &level in *levels {
            for position in 0..N_POSITIONS {
                catalog.add_entity_type(entity_id(level, position), &format!("type{type_idx}"));
            }
        }
    }
    for (r, &(domain, range, _, _)) in RELATIONS.iter().enumerate() {
        catalog.set_signature(
            r as u32,
            &format!("type{domain}"),
            &format!("type{range}"),
        );
    }

    let mut triples = Vec::new();
    for (r, &(domain, range, shift, source_levels)) in RELATIONS.iter().enumerate() {
        for &level in source_levels {
            let target_level = (level as i64 + shift) as usize;
            debug_assert!(TYPE_LEVELS[domain].contains(&level));
            debug_assert!(TYPE_LEVELS[range].contains(&target_level));
            debug_assert!(!source_levels.contains(&target_level));
            for position in 0..N_POSITIONS {
                triples.push(Triple::new(
                    entity_id(level, position),
                    r as u32,
                    entity_id(target_level, position),
                ));
            }
        }
    }

    let mut shuffle_rng = rng::stream(seed, rng::STREAM_SYNTH);
    triples.shuffle(&mut shuffle_rng);
    let test = triples.split_off(triples.len() - N_TEST);
    let dev = triples.split_off(triples.len() - N_DEV);
    let store = TripleStore::build(entities, relations, triples, dev, test)
        .expect("synthetic triples are in-bounds by construction");
    SyntheticKg { store, catalog }
}

impl SyntheticKg {
    /// Writes train.txt / valid.txt / test.txt / types.txt under `dir`.
    pub fn write_dataset(&self, dir: &std::path::Path) -> crate::error::Result<()> {
        use crate::error::KgeError;
        use crate::graph::Split;
        std::fs::create_dir_all(dir).map_err(|e| KgeError::io(dir, e))?;
        for (split, name) in [
            (Split::Train, "train.txt"),
            (Split::Dev, "valid.txt"),
            (Split::Test, "test.txt"),
        ] {
            let path = dir.join(name);
            let mut buf = Vec::new();
            self.store
                .write_split(split, &mut buf)
                .map_err(|e| KgeError::io(&path, e))?;
            std::fs::write(&path, buf).map_err(|e| KgeError::io(&path, e))?;
        }
        let types_path = dir.join("types.txt");
        let mut out = String::new();
        for e in 0..self.store.n_entities() as EntityId {
            if let Some(types) = self.catalog.entity_types(e) {
                for t in types {
                    out.push_str(&format!("T\t{}\t{}\n", self.store.entities().name(e), t));
                }
            }
        }
        for r in 0..self.store.n_relations() as u32 {
            if let Some((domain, range)) = self.catalog.signature(r) {
                out.push_str(&format!(
                    "R\t{}\t{}\t{}\n",
                    self.store.relations().name(r),
                    domain,
                    range
                ));
            }
        }
        std::fs::write(&types_path, out).map_err(|e| crate::error::KgeError::io(&types_path, e))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::Split;
    use std::collections::HashSet;

    fn level_of(e: EntityId) -> usize {
        e as usize / N_POSITIONS
    }

    fn position_of(e: EntityId) -> usize {
        e as usize % N_POSITIONS
    }

    #[test]
    fn generation_is_deterministic_in_the_seed() {
        let a = synthetic_typed_kg(7);
        let b = synthetic_typed_kg(7);
        let c = synthetic_typed_kg(8);
        for split in Split::ALL {
            assert_eq!(a.store.split(split), b.store.split(split));
        }
        assert_ne!(a.store.split(Split::Train), c.store.split(Split::Train));
        // A different seed moves triples between splits, never invents new
        // ones: the union is the same 1000-triple set.
        let union = |kg: &SyntheticKg| -> HashSet<Triple> {
            Split::ALL
                .iter()
                .flat_map(|&s| kg.store.split(s).iter().copied())
                .collect()
        };
        assert_eq!(union(&a), union(&c));
    }

    #[test]
    fn counts_match_the_construction() {
        let kg = synthetic_typed_kg(0);
        assert_eq!(kg.store.n_entities(), N_ENTITIES);
        assert_eq!(kg.store.n_relations(), N_RELATIONS);
        let train = kg.store.split(Split::Train).len();
        let dev = kg.store.split(Split::Dev).len();
        let test = kg.store.split(Split::Test).len();
        assert_eq!(dev, N_DEV);
        assert_eq!(test, N_TEST);
        assert_eq!(train + dev + test, 1000);
        assert_eq!(train, 800);
    }

    #[test]
    fn every_entity_is_typed_and_types_have_interval_sizes() {
        let kg = synthetic_typed_kg(0);
        for e in 0..N_ENTITIES as EntityId {
            let types = kg.catalog.entity_types(e).expect("untyped entity");
            assert!(!types.is_empty());
        }
        for (idx, levels) in TYPE_LEVELS.iter().enumerate() {
            let members = kg.catalog.entities_with_type(&format!("type{idx}"));
            assert_eq!(members.len(), levels.len() * N_POSITIONS);
        }
    }

    #[test]
    fn triples_respect_their_relation_signatures() {
        let kg = synthetic_typed_kg(3);
        for split in Split::ALL {
            for t in kg.store.split(split) {
                let (domain, range) = kg.catalog.signature(t.relation).expect("unsigned relation");
                assert!(kg.catalog.entity_types(t.source).unwrap().contains(domain));
                assert!(kg.catalog.entity_types(t.target).unwrap().contains(range));
            }
        }
    }

    #[test]
    fn relations_are_one_to_one_and_loop_free() {
        let kg = synthetic_typed_kg(1);
        let mut sources: Vec<HashSet<EntityId>> = vec![HashSet::new(); N_RELATIONS];
        let mut targets: Vec<HashSet<EntityId>> = vec![HashSet::new(); N_RELATIONS];
        for split in Split::ALL {
            for t in kg.store.split(split) {
                assert_ne!(t.source, t.target, "self-loop in {t:?}");
                assert!(
                    sources[t.relation as usize].insert(t.source),
                    "duplicate source in relation {}",
                    t.relation
                );
                assert!(
                    targets[t.relation as usize].insert(t.target),
                    "duplicate target in relation {}",
                    t.relation
                );
            }
        }
    }

    #[test]
    fn maps_are_position_preserving_level_shifts() {
        let kg = synthetic_typed_kg(2);
        for split in Split::ALL {
            for t in kg.store.split(split) {
                assert_eq!(position_of(t.source), position_of(t.target));
                let (_, _, shift, source_levels) = RELATIONS[t.relation as usize];
                assert!(source_levels.contains(&level_of(t.source)));
                assert_eq!(
                    level_of(t.target) as i64 - level_of(t.source) as i64,
                    shift
                );
            }
        }
    }

    #[test]
    fn no_relation_mixes_source_and_target_levels() {
        // The chain-free property the whole design leans on: within one
        // relation, source levels and target levels are disjoint.
        let kg = synthetic_typed_kg(6);
        let mut sources: Vec<HashSet<usize>> = vec![HashSet::new(); N_RELATIONS];
        let mut targets: Vec<HashSet<usize>> = vec![HashSet::new(); N_RELATIONS];
        for split in Split::ALL {
            for t in kg.store.split(split) {
                sources[t.relation as usize].insert(level_of(t.source));
                targets[t.relation as usize].insert(level_of(t.target));
            }
        }
        for r in 0..N_RELATIONS {
            assert!(
                sources[r].is_disjoint(&targets[r]),
                "relation {r} chains levels"
            );
        }
    }

    #[test]
    fn splits_are_disjoint() {
        let kg = synthetic_typed_kg(5);
        let train: HashSet<Triple> = kg.store.split(Split::Train).iter().copied().collect();
        let dev: HashSet<Triple> = kg.store.split(Split::Dev).iter().copied().collect();
        let test: HashSet<Triple> = kg.store.split(Split::Test).iter().copied().collect();
        assert!(train.is_disjoint(&dev));
        assert!(train.is_disjoint(&test));
        assert!(dev.is_disjoint(&test));
    }

    #[test]
    fn dataset_round_trips_through_files() {
        let kg = synthetic_typed_kg(4);
        let dir = tempfile::tempdir().unwrap();
        kg.write_dataset(dir.path()).unwrap();
        let mut entities = Vocab::new();
        let mut relations = Vocab::new();
        let train =
            crate::graph::load_split(&dir.path().join("train.txt"), &mut entities, &mut relations, true)
                .unwrap();
        let dev =
            crate::graph::load_split(&dir.path().join("valid.txt"), &mut entities, &mut relations, true)
                .unwrap();
        let test =
            crate::graph::load_split(&dir.path().join("test.txt"), &mut entities, &mut relations, true)
                .unwrap();
        assert_eq!(train.len(), kg.store.split(Split::Train).len());
        assert_eq!(dev.len(), N_DEV);
        assert_eq!(test.len(), N_TEST);
        let store = TripleStore::build(entities, relations, train, dev, test).unwrap();
        let catalog = TypeCatalog::load(&dir.path().join("types.txt"), &store).unwrap();
        assert_eq!(catalog.skipped_records(), 0);
        // Reloaded ids follow first appearance in the shuffled files, so
        // match signatures by relation name rather than raw id.
        for r in 0..N_RELATIONS as u32 {
            let name = kg.store.relations().name(r);
            let reloaded = store.relations().id(name).unwrap();
            assert_eq!(catalog.signature(reloaded), kg.catalog.signature(r));
        }
    }
}
