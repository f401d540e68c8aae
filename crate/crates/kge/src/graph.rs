//! Triple storage: string dictionaries, split-aware membership and adjacency
//! indexes, entity-type catalog, and training-split statistics.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::fs::File;
use std::io::{BufRead, BufReader, Read, Write};
use std::ops::BitOr;
use std::path::Path;

use crate::error::{KgeError, Result};

pub type EntityId = u32;
pub type RelationId = u32;

/// One (source, relation, target) edge, id-encoded.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Triple {
    pub source: EntityId,
    pub relation: RelationId,
    pub target: EntityId,
}

impl Triple {
    pub fn new(source: EntityId, relation: RelationId, target: EntityId) -> Self {
        Triple {
            source,
            relation,
            target,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Split {
    Train,
    Dev,
    Test,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Dev, Split::Test];

    fn bit(self) -> u8 {
        match self {
            Split::Train => 1,
            Split::Dev => 2,
            Split::Test => 4,
        }
    }

    fn index(self) -> usize {
        match self {
            Split::Train => 0,
            Split::Dev => 1,
            Split::Test => 2,
        }
    }
}

/// A union of splits, used to scope membership queries and filtering.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SplitSet(u8);

impl SplitSet {
    pub const EMPTY: SplitSet = SplitSet(0);
    pub const TRAIN: SplitSet = SplitSet(1);
    pub const DEV: SplitSet = SplitSet(2);
    pub const TEST: SplitSet = SplitSet(4);
    pub const TRAIN_DEV: SplitSet = SplitSet(1 | 2);
    pub const ALL: SplitSet = SplitSet(1 | 2 | 4);

    pub fn of(split: Split) -> SplitSet {
        SplitSet(split.bit())
    }

    pub fn contains(self, split: Split) -> bool {
        self.0 & split.bit() != 0
    }

    pub fn is_empty(self) -> bool {
        self.0 == 0
    }

    fn intersects(self, mask: u8) -> bool {
        self.0 & mask != 0
    }
}

impl BitOr for SplitSet {
    type Output = SplitSet;

    fn bitor(self, rhs: SplitSet) -> SplitSet {
        SplitSet(self.0 | rhs.0)
    }
}

/// Bijective string ↔ dense-id dictionary; ids are assigned in first-seen order.
#[derive(Debug, Clone, Default)]
pub struct Vocab {
    names: Vec<String>,
    ids: HashMap<String, u32>,
}

impl Vocab {
    pub fn new() -> Self {
        Vocab::default()
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    /// Id for `name`, minting a new one if unseen.
    pub fn intern(&mut self, name: &str) -> u32 {
        if let Some(&id) = self.ids.get(name) {
            return id;
        }
        let id = self.names.len() as u32;
        self.names.push(name.to_owned());
        self.ids.insert(name.to_owned(), id);
        id
    }

    pub fn id(&self, name: &str) -> Option<u32> {
        self.ids.get(name).copied()
    }

    /// Panics if `id` was never minted.
    pub fn name(&self, id: u32) -> &str {
        &self.names[id as usize]
    }
}

/// Parses a tab-separated triple file. With `grow` set, unseen strings are
/// interned; otherwise they are an error (the dictionaries are frozen).
pub fn load_split(
    path: &Path,
    entities: &mut Vocab,
    relations: &mut Vocab,
    grow: bool,
) -> Result<Vec<Triple>> {
    let label = path.display().to_string();
    let file = File::open(path).map_err(|e| KgeError::io(&label, e))?;
    parse_split(BufReader::new(file), &label, entities, relations, grow)
}

pub fn parse_split<R: Read>(
    reader: BufReader<R>,
    path_label: &str,
    entities: &mut Vocab,
    relations: &mut Vocab,
    grow: bool,
) -> Result<Vec<Triple>> {
    let mut triples = Vec::new();
    for (lineno, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| KgeError::io(path_label, e))?;
        if line.is_empty() {
            continue;
        }
        let mut fields = line.split('\t');
        let (s, r, t) = match (fields.next(), fields.next(), fields.next(), fields.next()) {
            (Some(s), Some(r), Some(t), None) => (s, r, t),
            _ => {
                return Err(KgeError::MalformedTriple {
                    path: path_label.to_owned(),
                    line: lineno + 1,
                    reason: format!(
                        "expected 3 tab-separated fields, got {}",
                        line.split('\t').count()
                    ),
                })
            }
        };
        let resolve = |vocab: &mut Vocab, sym: &str| -> Result<u32> {
            if grow {
                Ok(vocab.intern(sym))
            } else {
                vocab.id(sym).ok_or_else(|| KgeError::UnknownSymbol {
                    symbol: sym.to_owned(),
                })
            }
        };
        let source = resolve(entities, s)?;
        let relation = resolve(relations, r)?;
        let target = resolve(entities, t)?;
        triples.push(Triple {
            source,
            relation,
            target,
        });
    }
    Ok(triples)
}

/// Immutable triple container with split-masked membership and the adjacency
/// views the samplers need. All sampler-facing lists are in deterministic order.
#[derive(Debug, Clone)]
pub struct TripleStore {
    entities: Vocab,
    relations: Vocab,
    splits: [Vec<Triple>; 3],
    // (s, r, t) → bitmask of splits containing it.
    membership: HashMap<(u32, u32, u32), u8>,
    // (s, r) → [(t, split mask)], (r, t) → [(s, split mask)]; over all splits.
    targets_by_sr: HashMap<(u32, u32), Vec<(u32, u8)>>,
    sources_by_rt: HashMap<(u32, u32), Vec<(u32, u8)>>,
    // Observed targets / sources per relation over train∪dev, sorted ascending.
    rel_targets: Vec<Vec<u32>>,
    rel_sources: Vec<Vec<u32>>,
    // Undirected (relation, neighbor) pairs per entity over train∪dev,
    // deduplicated, in first-seen order.
    neighbors: Vec<Vec<(u32, u32)>>,
}

impl TripleStore {
    pub fn build(
        entities: Vocab,
        relations: Vocab,
        train: Vec<Triple>,
        dev: Vec<Triple>,
        test: Vec<Triple>,
    ) -> Result<Self> {
        let n_e = entities.len() as u32;
        let n_r = relations.len() as u32;
        let splits = [train, dev, test];
        for (split, name) in splits.iter().zip(["train", "dev", "test"]) {
            for tr in split {
                if tr.source >= n_e || tr.target >= n_e || tr.relation >= n_r {
                    return Err(KgeError::InvalidArgument(format!(
                        "{name} triple ({}, {}, {}) outside dictionary bounds |E|={n_e}, |R|={n_r}",
                        tr.source, tr.relation, tr.target
                    )));
                }
            }
        }

        let mut membership: HashMap<(u32, u32, u32), u8> = HashMap::new();
        let mut targets_by_sr: HashMap<(u32, u32), Vec<(u32, u8)>> = HashMap::new();
        let mut sources_by_rt: HashMap<(u32, u32), Vec<(u32, u8)>> = HashMap::new();
        let mut rel_target_sets: Vec<BTreeSet<u32>> = vec![BTreeSet::new(); n_r as usize];
        let mut rel_source_sets: Vec<BTreeSet<u32>> = vec![BTreeSet::new(); n_r as usize];
        let mut neighbors: Vec<Vec<(u32, u32)>> = vec![Vec::new(); n_e as usize];
        let mut neighbor_seen: HashSet<(u32, u32, u32)> = HashSet::new();

        for split in Split::ALL {
            let bit = split.bit();
            for tr in &splits[split.index()] {
                let key = (tr.source, tr.relation, tr.target);
                *membership.entry(key).or_insert(0) |= bit;
                push_masked(
                    targets_by_sr.entry((tr.source, tr.relation)).or_default(),
                    tr.target,
                    bit,
                );
                push_masked(
                    sources_by_rt.entry((tr.relation, tr.target)).or_default(),
                    tr.source,
                    bit,
                );
                if split != Split::Test {
                    rel_target_sets[tr.relation as usize].insert(tr.target);
                    rel_source_sets[tr.relation as usize].insert(tr.source);
                    if neighbor_seen.insert((tr.source, tr.relation, tr.target)) {
                        neighbors[tr.source as usize].push((tr.relation, tr.target));
                        if tr.source != tr.target {
                            neighbors[tr.target as usize].push((tr.relation, tr.source));
                        }
                    }
                }
            }
        }

        Ok(TripleStore {
            entities,
            relations,
            splits,
            membership,
            targets_by_sr,
            sources_by_rt,
            rel_targets: rel_target_sets.into_iter().map(Vec::from_iter).collect(),
            rel_sources: rel_source_sets.into_iter().map(Vec::from_iter).collect(),
            neighbors,
        })
    }

    pub fn n_entities(&self) -> usize {
        self.entities.len()
    }

    pub fn n_relations(&self) -> usize {
        self.relations.len()
    }

    pub fn entities(&self) -> &Vocab {
        &self.entities
    }

    pub fn relations(&self) -> &Vocab {
        &self.relations
    }

    pub fn split(&self, split: Split) -> &[Triple] {
        &self.splits[split.index()]
    }

    /// O(1) expected membership test over a union of splits.
    pub fn contains(&self, s: EntityId, r: RelationId, t: EntityId, within: SplitSet) -> bool {
        self.membership
            .get(&(s, r, t))
            .is_some_and(|&mask| within.intersects(mask))
    }

    /// Targets t with (s, r, t) in the requested splits.
    pub fn targets(&self, s: EntityId, r: RelationId, within: SplitSet) -> Vec<EntityId> {
        collect_masked(self.targets_by_sr.get(&(s, r)), within)
    }

    /// Sources s with (s, r, t) in the requested splits.
    pub fn sources(&self, r: RelationId, t: EntityId, within: SplitSet) -> Vec<EntityId> {
        collect_masked(self.sources_by_rt.get(&(r, t)), within)
    }

    /// Entities observed as a target of `r` in train∪dev, ascending.
    pub fn relation_targets(&self, r: RelationId) -> &[EntityId] {
        &self.rel_targets[r as usize]
    }

    /// Entities observed as a source of `r` in train∪dev, ascending.
    pub fn relation_sources(&self, r: RelationId) -> &[EntityId] {
        &self.rel_sources[r as usize]
    }

    /// (relation, neighbor) pairs of `e` over train∪dev, either direction.
    pub fn neighbors(&self, e: EntityId) -> &[(RelationId, EntityId)] {
        &self.neighbors[e as usize]
    }

    /// Writes one split back out in the triple file format, in stored order.
    pub fn write_split<W: Write>(&self, split: Split, mut w: W) -> std::io::Result<()> {
        for tr in self.split(split) {
            writeln!(
                w,
                "{}\t{}\t{}",
                self.entities.name(tr.source),
                self.relations.name(tr.relation),
                self.entities.name(tr.target)
            )?;
        }
        Ok(())
    }
}

fn push_masked(list: &mut Vec<(u32, u8)>, id: u32, bit: u8) {
    if let Some(entry) = list.iter_mut().find(|(e, _)| *e == id) {
        entry.1 |= bit;
    } else {
        list.push((id, bit));
    }
}

fn collect_masked(list: Option<&Vec<(u32, u8)>>, within: SplitSet) -> Vec<u32> {
    list.map(|entries| {
        entries
            .iter()
            .filter(|(_, mask)| within.intersects(*mask))
            .map(|(id, _)| *id)
            .collect()
    })
    .unwrap_or_default()
}

/// Entity type labels and relation (domain, range) signatures.
#[derive(Debug, Clone, Default)]
pub struct TypeCatalog {
    entity_types: HashMap<EntityId, BTreeSet<String>>,
    relation_signature: HashMap<RelationId, (String, String)>,
    entities_by_type: HashMap<String, Vec<EntityId>>,
    skipped_records: usize,
}

impl TypeCatalog {
    /// Reads `T<TAB>entity<TAB>type` and `R<TAB>relation<TAB>domain<TAB>range`
    /// records. Records naming entities or relations absent from the store are
    /// skipped and counted, not fatal.
    pub fn load(path: &Path, store: &TripleStore) -> Result<Self> {
        let label = path.display().to_string();
        let file = File::open(path).map_err(|e| KgeError::io(&label, e))?;
        Self::parse(BufReader::new(file), &label, store)
    }

    pub fn parse<R: Read>(reader: BufReader<R>, path_label: &str, store: &TripleStore) -> Result<Self> {
        let mut catalog = TypeCatalog::default();
        for (lineno, line) in reader.lines().enumerate() {
            let line = line.map_err(|e| KgeError::io(path_label, e))?;
            if line.is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split('\t').collect();
            let malformed = |reason: &str| KgeError::MalformedTypeRecord {
                path: path_label.to_owned(),
                line: lineno + 1,
                reason: reason.to_owned(),
            };
            match fields.as_slice() {
                ["T", entity, label] => match store.entities().id(entity) {
                    Some(id) => catalog.add_entity_type(id, label),
                    None => catalog.skipped_records += 1,
                },
                ["R", relation, domain, range] => match store.relations().id(relation) {
                    Some(id) => catalog.set_signature(id, domain, range),
                    None => catalog.skipped_records += 1,
                },
                ["T", ..] => return Err(malformed("T record takes 2 fields after the tag")),
                ["R", ..] => return Err(malformed("R record takes 3 fields after the tag")),
                _ => return Err(malformed("unknown record tag (expected T or R)")),
            }
        }
        Ok(catalog)
    }

    pub fn add_entity_type(&mut self, entity: EntityId, label: &str) {
        let labels = self.entity_types.entry(entity).or_default();
        if labels.insert(label.to_owned()) {
            self.entities_by_type
                .entry(label.to_owned())
                .or_default()
                .push(entity);
        }
    }

    pub fn set_signature(&mut self, relation: RelationId, domain: &str, range: &str) {
        self.relation_signature
            .insert(relation, (domain.to_owned(), range.to_owned()));
    }

    pub fn entity_types(&self, e: EntityId) -> Option<&BTreeSet<String>> {
        self.entity_types.get(&e)
    }

    pub fn signature(&self, r: RelationId) -> Option<(&str, &str)> {
        self.relation_signature
            .get(&r)
            .map(|(d, g)| (d.as_str(), g.as_str()))
    }

    /// Entities carrying `label`, in record order.
    pub fn entities_with_type(&self, label: &str) -> &[EntityId] {
        self.entities_by_type
            .get(label)
            .map(Vec::as_slice)
            .unwrap_or(&[])
    }

    pub fn skipped_records(&self) -> usize {
        self.skipped_records
    }

    pub fn is_empty(&self) -> bool {
        self.entity_types.is_empty() && self.relation_signature.is_empty()
    }
}

/// Order-of-magnitude group for a training frequency f ≥ 1: group n covers
/// 10^n < f ≤ 10^(n+1), with f = 1 assigned to group 0.
pub fn oom_group(freq: u64) -> u32 {
    let mut group = 0;
    let mut upper = 10u64;
    while freq > upper {
        group += 1;
        upper = upper.saturating_mul(10);
    }
    group
}

/// Relation frequencies, entity degrees, and OOM groups over the training split.
#[derive(Debug, Clone)]
pub struct DatasetStats {
    relation_freq: Vec<u64>,
    degree: Vec<u64>,
    oom_groups: BTreeMap<u32, BTreeSet<RelationId>>,
}

impl DatasetStats {
    pub fn compute(store: &TripleStore) -> Self {
        let mut relation_freq = vec![0u64; store.n_relations()];
        let mut degree = vec![0u64; store.n_entities()];
        for tr in store.split(Split::Train) {
            relation_freq[tr.relation as usize] += 1;
            degree[tr.source as usize] += 1;
            degree[tr.target as usize] += 1;
        }
        let mut oom_groups: BTreeMap<u32, BTreeSet<RelationId>> = BTreeMap::new();
        for (r, &freq) in relation_freq.iter().enumerate() {
            if freq >= 1 {
                oom_groups
                    .entry(oom_group(freq))
                    .or_default()
                    .insert(r as u32);
            }
        }
        DatasetStats {
            relation_freq,
            degree,
            oom_groups,
        }
    }

    pub fn freq(&self, r: RelationId) -> u64 {
        self.relation_freq[r as usize]
    }

    /// Count of training triples containing `e` as source or target (self-loops
    /// count twice).
    pub fn degree(&self, e: EntityId) -> u64 {
        self.degree[e as usize]
    }

    pub fn oom_groups(&self) -> &BTreeMap<u32, BTreeSet<RelationId>> {
        &self.oom_groups
    }

    /// Slice index for evaluation grouping. Relations unseen in train (freq 0)
    /// land in group 0.
    pub fn oom_of(&self, r: RelationId) -> u32 {
        let f = self.freq(r);
        if f == 0 {
            0
        } else {
            oom_group(f)
        }
    }

    /// Mean training degree in the |train| / |E| convention (each triple counted
    /// once, not once per endpoint).
    pub fn avg_degree(&self, store: &TripleStore) -> f64 {
        if store.n_entities() == 0 {
            return 0.0;
        }
        store.split(Split::Train).len() as f64 / store.n_entities() as f64
    }

    /// CSV rows (relation, freq, oom) for relations seen in train, by id.
    pub fn write_relation_csv<W: Write>(&self, store: &TripleStore, mut w: W) -> std::io::Result<()> {
        writeln!(w, "relation,freq,oom")?;
        for (r, &freq) in self.relation_freq.iter().enumerate() {
            if freq >= 1 {
                writeln!(
                    w,
                    "{},{},{}",
                    csv_field(store.relations().name(r as u32)),
                    freq,
                    oom_group(freq)
                )?;
            }
        }
        Ok(())
    }

    /// CSV rows (entity, degree) for every entity, by id.
    pub fn write_degree_csv<W: Write>(&self, store: &TripleStore, mut w: W) -> std::io::Result<()> {
        writeln!(w, "entity,degree")?;
        for (e, &deg) in self.degree.iter().enumerate() {
            writeln!(w, "{},{}", csv_field(store.entities().name(e as u32)), deg)?;
        }
        Ok(())
    }
}

/// Quotes a CSV field only when it needs it.
pub fn csv_field(s: &str) -> String {
    if s.contains(',') || s.contains('"') || s.contains('\n') {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_owned()
    }
}
