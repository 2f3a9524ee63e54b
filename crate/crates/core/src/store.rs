//! Triple storage, vocabularies and adjacency indexes.
//!
//! A [`TripleStore`] holds the three splits of a knowledge base. The
//! membership set used for filtered ranking covers every split, while the
//! adjacency indexes used by rule mining and feature extraction are built
//! from the training split alone.

use std::collections::{HashMap, HashSet};
use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct EntityId(pub u32);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct RelationId(pub u32);

impl EntityId {
    #[inline]
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl RelationId {
    #[inline]
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl fmt::Display for EntityId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "e{}", self.0)
    }
}

impl fmt::Display for RelationId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "r{}", self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Triple {
    pub head: EntityId,
    pub relation: RelationId,
    pub tail: EntityId,
}

impl Triple {
    pub fn new(head: EntityId, relation: RelationId, tail: EntityId) -> Self {
        Triple {
            head,
            relation,
            tail,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Split {
    Train,
    Valid,
    Test,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Valid, Split::Test];

    pub fn name(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Valid => "valid",
            Split::Test => "test",
        }
    }
}

/// Interned string labels with dense ids starting at zero.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Vocab {
    labels: Vec<String>,
    index: HashMap<String, u32>,
}

impl Vocab {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_labels<I, S>(labels: I) -> Result<Self>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let mut vocab = Vocab::new();
        for label in labels {
            let label = label.into();
            if vocab.get(&label).is_some() {
                return Err(Error::InvalidArgument(format!(
                    "duplicate vocabulary label `{label}`"
                )));
            }
            vocab.intern(&label);
        }
        Ok(vocab)
    }

    pub fn intern(&mut self, label: &str) -> u32 {
        if let Some(&id) = self.index.get(label) {
            return id;
        }
        let id = self.labels.len() as u32;
        self.labels.push(label.to_owned());
        self.index.insert(label.to_owned(), id);
        id
    }

    pub fn get(&self, label: &str) -> Option<u32> {
        self.index.get(label).copied()
    }

    pub fn label(&self, id: u32) -> Option<&str> {
        self.labels.get(id as usize).map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    /// Writes `id<TAB>label` lines.
    pub fn write_tsv(&self, path: &Path) -> Result<()> {
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut out = BufWriter::new(file);
        for (id, label) in self.labels.iter().enumerate() {
            writeln!(out, "{id}\t{label}").map_err(|e| Error::io(path, e))?;
        }
        out.flush().map_err(|e| Error::io(path, e))
    }
}

/// Counts produced while loading a store.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct LoadReport {
    pub entities: usize,
    pub relations: usize,
    pub train: usize,
    pub valid: usize,
    pub test: usize,
    /// Duplicate lines dropped, per split in train/valid/test order.
    pub duplicates: [usize; 3],
    /// Entities that never occur in a training triple.
    pub unseen_in_train: Vec<String>,
}

impl fmt::Display for LoadReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "entities\t{}", self.entities)?;
        writeln!(f, "relations\t{}", self.relations)?;
        writeln!(f, "train\t{}", self.train)?;
        writeln!(f, "valid\t{}", self.valid)?;
        writeln!(f, "test\t{}", self.test)?;
        writeln!(
            f,
            "duplicates\t{}\t{}\t{}",
            self.duplicates[0], self.duplicates[1], self.duplicates[2]
        )?;
        write!(f, "unseen_in_train\t{}", self.unseen_in_train.len())
    }
}

/// Incrementally collects labelled triples before indexing them.
#[derive(Debug, Default)]
pub struct StoreBuilder {
    entities: Vocab,
    relations: Vocab,
    splits: [Vec<Triple>; 3],
    seen: [HashSet<Triple>; 3],
    duplicates: [usize; 3],
}

impl StoreBuilder {
    pub fn new() -> Self {
        Self::default()
    }

    /// Starts from fixed vocabularies, e.g. ones restored from a checkpoint.
    pub fn with_vocabularies(entities: Vocab, relations: Vocab) -> Self {
        StoreBuilder {
            entities,
            relations,
            ..Self::default()
        }
    }

    fn slot(split: Split) -> usize {
        match split {
            Split::Train => 0,
            Split::Valid => 1,
            Split::Test => 2,
        }
    }

    /// Adds a labelled triple, interning labels. Returns `false` for a
    /// duplicate within the same split.
    pub fn add(&mut self, split: Split, head: &str, relation: &str, tail: &str) -> bool {
        let triple = Triple::new(
            EntityId(self.entities.intern(head)),
            RelationId(self.relations.intern(relation)),
            EntityId(self.entities.intern(tail)),
        );
        self.add_triple(split, triple)
    }

    /// Adds a triple over ids that must already be valid for the vocabularies.
    pub fn add_triple(&mut self, split: Split, triple: Triple) -> bool {
        let slot = Self::slot(split);
        if self.seen[slot].insert(triple) {
            self.splits[slot].push(triple);
            true
        } else {
            self.duplicates[slot] += 1;
            false
        }
    }

    pub fn entity_id(&self, label: &str) -> Option<EntityId> {
        self.entities.get(label).map(EntityId)
    }

    pub fn build(self) -> (TripleStore, LoadReport) {
        let [train, valid, test] = self.splits;
        let store = TripleStore::index(self.entities, self.relations, train, valid, test);
        let mut in_train = vec![false; store.num_entities()];
        for t in store.train() {
            in_train[t.head.index()] = true;
            in_train[t.tail.index()] = true;
        }
        let unseen_in_train = in_train
            .iter()
            .enumerate()
            .filter(|(_, seen)| !**seen)
            .map(|(id, _)| store.entities.labels[id].clone())
            .collect();
        let report = LoadReport {
            entities: store.num_entities(),
            relations: store.num_relations(),
            train: store.train.len(),
            valid: store.valid.len(),
            test: store.test.len(),
            duplicates: self.duplicates,
            unseen_in_train,
        };
        (store, report)
    }
}

/// Immutable knowledge base with training-split adjacency indexes.
#[derive(Debug, Clone)]
pub struct TripleStore {
    entities: Vocab,
    relations: Vocab,
    train: Vec<Triple>,
    valid: Vec<Triple>,
    test: Vec<Triple>,
    out_index: HashMap<(EntityId, RelationId), Vec<EntityId>>,
    in_index: HashMap<(EntityId, RelationId), Vec<EntityId>>,
    by_head: Vec<Vec<(RelationId, EntityId)>>,
    by_tail: Vec<Vec<(RelationId, EntityId)>>,
    by_relation: Vec<Vec<Triple>>,
    train_set: HashSet<Triple>,
    known: HashSet<Triple>,
}

impl TripleStore {
    fn index(
        entities: Vocab,
        relations: Vocab,
        train: Vec<Triple>,
        valid: Vec<Triple>,
        test: Vec<Triple>,
    ) -> Self {
        let mut out_index: HashMap<_, Vec<EntityId>> = HashMap::new();
        let mut in_index: HashMap<_, Vec<EntityId>> = HashMap::new();
        let mut by_head = vec![Vec::new(); entities.len()];
        let mut by_tail = vec![Vec::new(); entities.len()];
        let mut by_relation = vec![Vec::new(); relations.len()];
        for t in &train {
            out_index.entry((t.head, t.relation)).or_default().push(t.tail);
            in_index.entry((t.tail, t.relation)).or_default().push(t.head);
            by_head[t.head.index()].push((t.relation, t.tail));
            by_tail[t.tail.index()].push((t.relation, t.head));
            by_relation[t.relation.index()].push(*t);
        }
        for list in out_index.values_mut().chain(in_index.values_mut()) {
            list.sort_unstable();
        }
        for list in by_head.iter_mut().chain(by_tail.iter_mut()) {
            list.sort_unstable();
        }
        let train_set: HashSet<Triple> = train.iter().copied().collect();
        let known = train
            .iter()
            .chain(valid.iter())
            .chain(test.iter())
            .copied()
            .collect();
        TripleStore {
            entities,
            relations,
            train,
            valid,
            test,
            out_index,
            in_index,
            by_head,
            by_tail,
            by_relation,
            train_set,
            known,
        }
    }

    /// Builds a store over anonymous ids `e0..` / `r0..`; used for synthetic data.
    pub fn from_ids(
        num_entities: usize,
        num_relations: usize,
        train: &[Triple],
        valid: &[Triple],
        test: &[Triple],
    ) -> Result<Self> {
        let entities = Vocab::from_labels((0..num_entities).map(|i| format!("e{i}")))?;
        let relations = Vocab::from_labels((0..num_relations).map(|i| format!("r{i}")))?;
        let mut builder = StoreBuilder::with_vocabularies(entities, relations);
        for (split, triples) in [(Split::Train, train), (Split::Valid, valid), (Split::Test, test)] {
            for &t in triples {
                if t.head.index() >= num_entities || t.tail.index() >= num_entities {
                    return Err(Error::UnknownId {
                        kind: "entity",
                        id: t.head.0.max(t.tail.0),
                    });
                }
                if t.relation.index() >= num_relations {
                    return Err(Error::UnknownId {
                        kind: "relation",
                        id: t.relation.0,
                    });
                }
                builder.add_triple(split, t);
            }
        }
        Ok(builder.build().0)
    }

    /// Convenience constructor from labelled triples.
    pub fn from_labeled(
        train: &[(&str, &str, &str)],
        valid: &[(&str, &str, &str)],
        test: &[(&str, &str, &str)],
    ) -> Self {
        let mut builder = StoreBuilder::new();
        for (split, triples) in [(Split::Train, train), (Split::Valid, valid), (Split::Test, test)] {
            for (h, r, t) in triples {
                builder.add(split, h, r, t);
            }
        }
        builder.build().0
    }

    pub fn num_entities(&self) -> usize {
        self.entities.len()
    }

    pub fn num_relations(&self) -> usize {
        self.relations.len()
    }

    pub fn entities(&self) -> &Vocab {
        &self.entities
    }

    pub fn relations(&self) -> &Vocab {
        &self.relations
    }

    pub fn entity_ids(&self) -> impl Iterator<Item = EntityId> {
        (0..self.entities.len() as u32).map(EntityId)
    }

    pub fn relation_ids(&self) -> impl Iterator<Item = RelationId> {
        (0..self.relations.len() as u32).map(RelationId)
    }

    pub fn entity(&self, label: &str) -> Result<EntityId> {
        self.entities
            .get(label)
            .map(EntityId)
            .ok_or_else(|| Error::UnknownLabel {
                kind: "entity",
                label: label.to_owned(),
            })
    }

    pub fn relation(&self, label: &str) -> Result<RelationId> {
        self.relations
            .get(label)
            .map(RelationId)
            .ok_or_else(|| Error::UnknownLabel {
                kind: "relation",
                label: label.to_owned(),
            })
    }

    pub fn entity_label(&self, id: EntityId) -> &str {
        self.entities.label(id.0).unwrap_or("<invalid>")
    }

    pub fn relation_label(&self, id: RelationId) -> &str {
        self.relations.label(id.0).unwrap_or("<invalid>")
    }

    pub fn check_entity(&self, id: EntityId) -> Result<()> {
        if id.index() < self.num_entities() {
            Ok(())
        } else {
            Err(Error::UnknownId {
                kind: "entity",
                id: id.0,
            })
        }
    }

    pub fn check_relation(&self, id: RelationId) -> Result<()> {
        if id.index() < self.num_relations() {
            Ok(())
        } else {
            Err(Error::UnknownId {
                kind: "relation",
                id: id.0,
            })
        }
    }

    pub fn split(&self, split: Split) -> &[Triple] {
        match split {
            Split::Train => &self.train,
            Split::Valid => &self.valid,
            Split::Test => &self.test,
        }
    }

    pub fn train(&self) -> &[Triple] {
        &self.train
    }

    /// Training triples of one relation, in load order.
    pub fn train_of(&self, relation: RelationId) -> &[Triple] {
        self.by_relation
            .get(relation.index())
            .map(Vec::as_slice)
            .unwrap_or(&[])
    }

    /// True iff the triple was loaded into any split.
    pub fn exists(&self, head: EntityId, relation: RelationId, tail: EntityId) -> bool {
        self.known.contains(&Triple::new(head, relation, tail))
    }

    pub fn exists_train(&self, head: EntityId, relation: RelationId, tail: EntityId) -> bool {
        self.train_set.contains(&Triple::new(head, relation, tail))
    }

    /// Sorted tails `t` with `(head, relation, t)` in the training split.
    pub fn neighbors_out(&self, head: EntityId, relation: RelationId) -> &[EntityId] {
        self.out_index
            .get(&(head, relation))
            .map(Vec::as_slice)
            .unwrap_or(&[])
    }

    /// Sorted heads `h` with `(h, relation, tail)` in the training split.
    pub fn neighbors_in(&self, tail: EntityId, relation: RelationId) -> &[EntityId] {
        self.in_index
            .get(&(tail, relation))
            .map(Vec::as_slice)
            .unwrap_or(&[])
    }

    /// All training edges leaving `head`, as sorted `(relation, tail)` pairs.
    pub fn outgoing(&self, head: EntityId) -> &[(RelationId, EntityId)] {
        self.by_head
            .get(head.index())
            .map(Vec::as_slice)
            .unwrap_or(&[])
    }

    /// All training edges entering `tail`, as sorted `(relation, head)` pairs.
    pub fn incoming(&self, tail: EntityId) -> &[(RelationId, EntityId)] {
        self.by_tail
            .get(tail.index())
            .map(Vec::as_slice)
            .unwrap_or(&[])
    }
}

fn read_split(path: &Path, split: Split, builder: &mut StoreBuilder) -> Result<()> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    for (n, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        let line = line.strip_suffix('\r').unwrap_or(&line);
        if line.is_empty() {
            continue;
        }
        let cols: Vec<&str> = line.split('\t').collect();
        if cols.len() != 3 {
            return Err(Error::parse(
                path,
                n + 1,
                format!("expected 3 tab-separated columns, found {}", cols.len()),
            ));
        }
        if cols.iter().any(|c| c.is_empty()) {
            return Err(Error::parse(path, n + 1, "empty entity or relation token"));
        }
        builder.add(split, cols[0], cols[1], cols[2]);
    }
    Ok(())
}

/// Loads TSV `head<TAB>relation<TAB>tail` files for the three splits.
pub fn load_triples(train: &Path, valid: &Path, test: &Path) -> Result<(TripleStore, LoadReport)> {
    load_triples_into(StoreBuilder::new(), train, valid, test)
}

/// Like [`load_triples`] but starts from `builder`, so labels already in
/// its vocabularies keep their ids.
pub fn load_triples_into(
    mut builder: StoreBuilder,
    train: &Path,
    valid: &Path,
    test: &Path,
) -> Result<(TripleStore, LoadReport)> {
    read_split(train, Split::Train, &mut builder)?;
    read_split(valid, Split::Valid, &mut builder)?;
    read_split(test, Split::Test, &mut builder)?;
    Ok(builder.build())
}
