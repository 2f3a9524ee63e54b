//! Numerical entity attributes and per-relation RBF parameters.
//!
//! Values enter the model only as signed head-minus-tail differences. For
//! each relation a feature is used when both endpoints carry a value for
//! at least a fraction `tau` of its training triples; its RBF center and
//! width are the mean and population standard deviation of the training
//! differences and stay fixed afterwards.

use std::collections::HashSet;
use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::store::{EntityId, RelationId, TripleStore, Vocab};

pub const DEFAULT_TAU: f64 = 0.9;
pub const DEFAULT_SIGMA_FLOOR: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct FeatureId(pub u32);

impl FeatureId {
    #[inline]
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

/// Sparse entity x attribute table. At most one finite value per pair.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct NumericTable {
    features: Vocab,
    per_entity: Vec<Vec<(FeatureId, f64)>>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct NumericLoadReport {
    pub rows: usize,
    pub stored: usize,
    /// Entity labels not in the knowledge base (rows skipped).
    pub unknown_entities: Vec<String>,
    /// Rows dropped because the (entity, feature) pair already had a value.
    pub duplicates: usize,
}

impl fmt::Display for NumericLoadReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "rows\t{}", self.rows)?;
        writeln!(f, "stored\t{}", self.stored)?;
        writeln!(f, "unknown_entities\t{}", self.unknown_entities.len())?;
        write!(f, "duplicates\t{}", self.duplicates)
    }
}

impl NumericTable {
    pub fn new(num_entities: usize) -> Self {
        NumericTable {
            features: Vocab::new(),
            per_entity: vec![Vec::new(); num_entities],
        }
    }

    /// Starts with a fixed feature vocabulary so ids match an existing spec.
    pub fn with_features(num_entities: usize, features: Vocab) -> Self {
        NumericTable {
            features,
            per_entity: vec![Vec::new(); num_entities],
        }
    }

    /// Stores a value, keeping the first one for a repeated pair. Returns
    /// whether the value was stored.
    pub fn insert(&mut self, entity: EntityId, feature: &str, value: f64) -> Result<bool> {
        if !value.is_finite() {
            return Err(Error::NonFinite(format!("numeric value for {feature}")));
        }
        let slot = self
            .per_entity
            .get_mut(entity.index())
            .ok_or(Error::UnknownId {
                kind: "entity",
                id: entity.0,
            })?;
        let fid = FeatureId(self.features.intern(feature));
        match slot.binary_search_by_key(&fid, |&(f, _)| f) {
            Ok(_) => Ok(false),
            Err(pos) => {
                slot.insert(pos, (fid, value));
                Ok(true)
            }
        }
    }

    pub fn features(&self) -> &Vocab {
        &self.features
    }

    pub fn num_features(&self) -> usize {
        self.features.len()
    }

    pub fn feature(&self, label: &str) -> Result<FeatureId> {
        self.features
            .get(label)
            .map(FeatureId)
            .ok_or_else(|| Error::UnknownLabel {
                kind: "numeric feature",
                label: label.to_owned(),
            })
    }

    pub fn feature_label(&self, id: FeatureId) -> &str {
        self.features.label(id.0).unwrap_or("<invalid>")
    }

    pub fn get(&self, entity: EntityId, feature: FeatureId) -> Option<f64> {
        let slot = self.per_entity.get(entity.index())?;
        slot.binary_search_by_key(&feature, |&(f, _)| f)
            .ok()
            .map(|i| slot[i].1)
    }

    pub fn values_of(&self, entity: EntityId) -> &[(FeatureId, f64)] {
        self.per_entity
            .get(entity.index())
            .map(Vec::as_slice)
            .unwrap_or(&[])
    }

    /// Number of entities with at least one value.
    pub fn covered_entities(&self) -> usize {
        self.per_entity.iter().filter(|v| !v.is_empty()).count()
    }

    /// Signed difference `value(head) - value(tail)` when both exist.
    pub fn difference(&self, head: EntityId, tail: EntityId, feature: FeatureId) -> Option<f64> {
        Some(self.get(head, feature)? - self.get(tail, feature)?)
    }
}

/// Reads `entity<TAB>feature<TAB>value` rows for entities of `store`.
pub fn load_numeric(store: &TripleStore, path: &Path) -> Result<(NumericTable, NumericLoadReport)> {
    load_numeric_into(NumericTable::new(store.num_entities()), store, path)
}

/// Like [`load_numeric`] but fills `table`, keeping its feature ids.
pub fn load_numeric_into(
    mut table: NumericTable,
    store: &TripleStore,
    path: &Path,
) -> Result<(NumericTable, NumericLoadReport)> {
    if table.per_entity.len() != store.num_entities() {
        return Err(Error::DimensionMismatch {
            what: "entities in numeric table".into(),
            expected: store.num_entities(),
            got: table.per_entity.len(),
        });
    }
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut report = NumericLoadReport::default();
    let mut unknown = HashSet::new();
    for (n, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        let line = line.strip_suffix('\r').unwrap_or(&line);
        if line.is_empty() {
            continue;
        }
        let cols: Vec<&str> = line.split('\t').collect();
        if cols.len() != 3 || cols.iter().any(|c| c.is_empty()) {
            return Err(Error::parse(
                path,
                n + 1,
                "expected `entity<TAB>feature<TAB>value`",
            ));
        }
        let value: f64 = cols[2]
            .trim()
            .parse()
            .map_err(|_| Error::parse(path, n + 1, format!("unparseable value `{}`", cols[2])))?;
        if !value.is_finite() {
            return Err(Error::parse(path, n + 1, format!("non-finite value `{}`", cols[2])));
        }
        report.rows += 1;
        let Some(entity) = store.entities().get(cols[0]).map(EntityId) else {
            if unknown.insert(cols[0].to_owned()) {
                report.unknown_entities.push(cols[0].to_owned());
            }
            continue;
        };
        if table.insert(entity, cols[1], value)? {
            report.stored += 1;
        } else {
            report.duplicates += 1;
        }
    }
    Ok((table, report))
}

fn check_tau(tau: f64) -> Result<()> {
    if tau > 0.0 && tau <= 1.0 {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!("tau must lie in (0, 1], got {tau}")))
    }
}

/// Features with head-and-tail coverage of at least `tau` over the
/// training triples of `relation`, by descending support then feature id.
pub fn select_features(
    store: &TripleStore,
    table: &NumericTable,
    relation: RelationId,
    tau: f64,
) -> Result<Vec<FeatureId>> {
    Ok(feature_supports(store, table, relation, tau)?
        .into_iter()
        .map(|(f, _)| f)
        .collect())
}

fn feature_supports(
    store: &TripleStore,
    table: &NumericTable,
    relation: RelationId,
    tau: f64,
) -> Result<Vec<(FeatureId, usize)>> {
    check_tau(tau)?;
    let triples = store.train_of(relation);
    if triples.is_empty() {
        return Ok(Vec::new());
    }
    let mut support = vec![0usize; table.num_features()];
    for t in triples {
        for &(f, _) in table.values_of(t.head) {
            if table.get(t.tail, f).is_some() {
                support[f.index()] += 1;
            }
        }
    }
    let total = triples.len() as f64;
    let mut selected: Vec<(FeatureId, usize)> = support
        .into_iter()
        .enumerate()
        .filter(|&(_, s)| s > 0 && s as f64 / total >= tau)
        .map(|(f, s)| (FeatureId(f as u32), s))
        .collect();
    selected.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(&b.0)));
    Ok(selected)
}

/// Fixed RBF parameters of one selected feature.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RbfFit {
    pub feature: FeatureId,
    pub center: f64,
    pub sigma: f64,
    /// Training triples with both values present.
    pub support: usize,
}

/// Mean and population standard deviation of the training differences of
/// `feature` under `relation`; the width is clamped below by `sigma_floor`.
pub fn fit_rbf(
    store: &TripleStore,
    table: &NumericTable,
    relation: RelationId,
    feature: FeatureId,
    sigma_floor: f64,
) -> Result<RbfFit> {
    let diffs: Vec<f64> = store
        .train_of(relation)
        .iter()
        .filter_map(|t| table.difference(t.head, t.tail, feature))
        .collect();
    if diffs.is_empty() {
        return Err(Error::Fit(format!(
            "rbf for {} / {}: no training triple has both values",
            store.relation_label(relation),
            table.feature_label(feature)
        )));
    }
    let n = diffs.len() as f64;
    let center = diffs.iter().sum::<f64>() / n;
    let variance = diffs.iter().map(|d| (d - center) * (d - center)).sum::<f64>() / n;
    Ok(RbfFit {
        feature,
        center,
        sigma: variance.sqrt().max(sigma_floor),
        support: diffs.len(),
    })
}

/// Selected features and their fitted RBF parameters for every relation.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct RelationNumericSpec {
    per_relation: Vec<Vec<RbfFit>>,
}

impl RelationNumericSpec {
    pub fn empty(num_relations: usize) -> Self {
        RelationNumericSpec {
            per_relation: vec![Vec::new(); num_relations],
        }
    }

    pub fn from_fits(per_relation: Vec<Vec<RbfFit>>) -> Self {
        RelationNumericSpec { per_relation }
    }

    /// Selects features at `tau` and fits them, relations in parallel.
    pub fn fit(store: &TripleStore, table: &NumericTable, tau: f64, sigma_floor: f64) -> Result<Self> {
        check_tau(tau)?;
        if !(sigma_floor > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "sigma floor must be positive, got {sigma_floor}"
            )));
        }
        let per_relation = store
            .relation_ids()
            .collect::<Vec<_>>()
            .into_par_iter()
            .map(|r| {
                select_features(store, table, r, tau)?
                    .into_iter()
                    .map(|f| fit_rbf(store, table, r, f, sigma_floor))
                    .collect::<Result<Vec<_>>>()
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(RelationNumericSpec { per_relation })
    }

    pub fn num_relations(&self) -> usize {
        self.per_relation.len()
    }

    pub fn fits(&self, relation: RelationId) -> &[RbfFit] {
        self.per_relation
            .get(relation.index())
            .map(Vec::as_slice)
            .unwrap_or(&[])
    }

    pub fn dim(&self, relation: RelationId) -> usize {
        self.fits(relation).len()
    }

    /// Relations with at least one selected feature.
    pub fn relations_with_features(&self) -> usize {
        self.per_relation.iter().filter(|f| !f.is_empty()).count()
    }

    /// Writes `relation<TAB>feature<TAB>c<TAB>sigma<TAB>support` lines.
    pub fn save(&self, store: &TripleStore, table: &NumericTable, path: &Path) -> Result<()> {
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut out = BufWriter::new(file);
        self.write_to(store, table, &mut out)
            .map_err(|e| Error::io(path, e))?;
        out.flush().map_err(|e| Error::io(path, e))
    }

    pub fn write_to(&self, store: &TripleStore, table: &NumericTable, out: &mut impl Write) -> std::io::Result<()> {
        for (r, fits) in self.per_relation.iter().enumerate() {
            let rel = store.relation_label(RelationId(r as u32));
            for fit in fits {
                writeln!(
                    out,
                    "{rel}\t{}\t{}\t{}\t{}",
                    table.feature_label(fit.feature),
                    fit.center,
                    fit.sigma,
                    fit.support
                )?;
            }
        }
        Ok(())
    }

    pub fn load(store: &TripleStore, table: &NumericTable, path: &Path) -> Result<Self> {
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        Self::read_from(store, table, BufReader::new(file), path)
    }

    pub fn read_from(store: &TripleStore, table: &NumericTable, reader: impl BufRead, path: &Path) -> Result<Self> {
        let mut spec = RelationNumericSpec::empty(store.num_relations());
        for (n, line) in reader.lines().enumerate() {
            let line = line.map_err(|e| Error::io(path, e))?;
            let line = line.strip_suffix('\r').unwrap_or(&line);
            if line.is_empty() {
                continue;
            }
            let cols: Vec<&str> = line.split('\t').collect();
            if cols.len() != 5 {
                return Err(Error::parse(path, n + 1, "expected 5 columns"));
            }
            let real = |s: &str| {
                s.parse::<f64>()
                    .ok()
                    .filter(|v| v.is_finite())
                    .ok_or_else(|| Error::parse(path, n + 1, format!("bad number `{s}`")))
            };
            let fit = RbfFit {
                feature: table.feature(cols[1])?,
                center: real(cols[2])?,
                sigma: real(cols[3])?,
                support: cols[4]
                    .parse()
                    .map_err(|_| Error::parse(path, n + 1, format!("bad support `{}`", cols[4])))?,
            };
            if !(fit.sigma > 0.0) {
                return Err(Error::parse(path, n + 1, "sigma must be positive"));
            }
            spec.per_relation[store.relation(cols[0])?.index()].push(fit);
        }
        Ok(spec)
    }
}

/// Head-minus-tail differences over a relation's selected features.
#[derive(Debug, Clone, PartialEq)]
pub struct NumericDiff {
    /// Differences; entries whose mask is false hold 0 and are never read.
    pub values: Vec<f64>,
    pub present: Vec<bool>,
}

impl NumericDiff {
    pub fn empty() -> Self {
        NumericDiff {
            values: Vec::new(),
            present: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

pub fn numeric_diff_vector(
    table: &NumericTable,
    spec: &RelationNumericSpec,
    relation: RelationId,
    head: EntityId,
    tail: EntityId,
) -> NumericDiff {
    let fits = spec.fits(relation);
    let mut values = Vec::with_capacity(fits.len());
    let mut present = Vec::with_capacity(fits.len());
    for fit in fits {
        match table.difference(head, tail, fit.feature) {
            Some(d) => {
                values.push(d);
                present.push(true);
            }
            None => {
                values.push(0.0);
                present.push(false);
            }
        }
    }
    NumericDiff { values, present }
}
