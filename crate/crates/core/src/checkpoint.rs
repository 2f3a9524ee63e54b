//! Single-file model container.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! offset  size  field
//! 0       8     magic  b"KBPOECK\0"
//! 8       4     format version (u32)
//! 12      8     header length H (u64)
//! 20      H     header, UTF-8 JSON
//! 20+H    P     tensor payloads in directory order, raw LE f64 or f32
//! 20+H+P  32    SHA-256 over bytes [0, 20+H+P)
//! ```
//!
//! Floats inside the header are written as shortest round-trip decimal
//! strings so that every value survives exactly.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::model::{Params, PoeModel};
use crate::numeric::{FeatureId, NumericTable, RbfFit, RelationNumericSpec};
use crate::optim::AdamState;
use crate::rules::{Direction, PathFormula, Rule, RuleSet, Step};
use crate::store::{RelationId, StoreBuilder, TripleStore, Vocab};
use crate::trainer::TrainConfig;

pub const MAGIC: [u8; 8] = *b"KBPOECK\0";
pub const FORMAT_VERSION: u32 = 1;
const PREAMBLE: usize = 8 + 4 + 8;
const CHECKSUM_LEN: usize = 32;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Precision {
    #[default]
    F64,
    /// Parameters are rounded to 32-bit floats on save.
    F32,
}

impl Precision {
    fn tag(self) -> &'static str {
        match self {
            Precision::F64 => "f64",
            Precision::F32 => "f32",
        }
    }

    fn width(self) -> usize {
        match self {
            Precision::F64 => 8,
            Precision::F32 => 4,
        }
    }
}

/// Everything needed to rebuild and evaluate a trained model.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub entities: Vocab,
    pub relations: Vocab,
    pub features: Vocab,
    pub config: TrainConfig,
    pub rules: RuleSet,
    pub spec: RelationNumericSpec,
    pub model: PoeModel,
    pub optimizer: Option<AdamState>,
}

#[derive(Serialize, Deserialize)]
struct Header {
    entities: Vec<String>,
    relations: Vec<String>,
    features: Vec<String>,
    config: Vec<(String, String)>,
    experts: String,
    transform: String,
    rules: Vec<RuleEntry>,
    numeric: Vec<FitEntry>,
    optimizer: Option<OptimizerEntry>,
    tensors: Vec<TensorEntry>,
}

#[derive(Serialize, Deserialize)]
struct RuleEntry {
    relation: u32,
    /// `(relation, "+" | "-")` per step.
    body: Vec<(u32, String)>,
    coverage: Option<String>,
    support: Option<usize>,
    head_count: Option<usize>,
}

#[derive(Serialize, Deserialize)]
struct FitEntry {
    relation: u32,
    feature: u32,
    center: String,
    sigma: String,
    support: usize,
}

#[derive(Serialize, Deserialize)]
struct OptimizerEntry {
    step: u64,
    beta1: String,
    beta2: String,
    epsilon: String,
}

#[derive(Serialize, Deserialize, Clone, PartialEq, Debug)]
struct TensorEntry {
    name: String,
    dtype: String,
    shape: Vec<usize>,
}

fn float(s: &str, what: &str) -> Result<f64> {
    s.parse()
        .map_err(|_| Error::Corrupt(format!("bad number `{s}` in {what}")))
}

fn tensor_names(params: &Params, prefix: &str) -> Vec<(String, Vec<usize>)> {
    let (e, r, k) = (params.num_entities(), params.num_relations(), params.dim);
    let mut out = vec![
        (format!("{prefix}entity"), vec![e, k]),
        (format!("{prefix}latent"), vec![r, k]),
    ];
    for (i, w) in params.relational.iter().enumerate() {
        out.push((format!("{prefix}relational/{i}"), vec![w.len()]));
    }
    for (i, w) in params.numerical.iter().enumerate() {
        out.push((format!("{prefix}numerical/{i}"), vec![w.len()]));
    }
    out
}

fn tensor_data<'a>(params: &'a Params, name: &str) -> Option<&'a [f64]> {
    if name == "entity" {
        return Some(&params.entity);
    }
    if name == "latent" {
        return Some(&params.latent);
    }
    let (group, idx) = name.split_once('/')?;
    let idx: usize = idx.parse().ok()?;
    match group {
        "relational" => params.relational.get(idx).map(Vec::as_slice),
        "numerical" => params.numerical.get(idx).map(Vec::as_slice),
        _ => None,
    }
}

const ADAM_FIRST: &str = "adam/first/";
const ADAM_SECOND: &str = "adam/second/";

impl Checkpoint {
    /// Bundles a trained model with the vocabularies it was trained on.
    pub fn new(
        store: &TripleStore,
        table: &NumericTable,
        rules: &RuleSet,
        spec: &RelationNumericSpec,
        model: &PoeModel,
        config: &TrainConfig,
        optimizer: Option<&AdamState>,
    ) -> Result<Self> {
        model.check_compatible(store, rules, spec)?;
        Ok(Checkpoint {
            entities: store.entities().clone(),
            relations: store.relations().clone(),
            features: table.features().clone(),
            config: config.clone(),
            rules: rules.clone(),
            spec: spec.clone(),
            model: model.clone(),
            optimizer: optimizer.cloned(),
        })
    }

    /// Builder seeded with the stored vocabularies, for loading data files
    /// whose ids must agree with the model.
    pub fn store_builder(&self) -> StoreBuilder {
        StoreBuilder::with_vocabularies(self.entities.clone(), self.relations.clone())
    }

    /// Empty numeric table using the stored feature ids.
    pub fn numeric_table(&self, num_entities: usize) -> NumericTable {
        NumericTable::with_features(num_entities, self.features.clone())
    }

    /// Fails with a schema error naming the first tensor whose embedding
    /// width differs from `dim`.
    pub fn expect_dim(&self, dim: usize) -> Result<()> {
        let p = &self.model.params;
        if p.dim != dim {
            return Err(Error::Schema(format!(
                "tensor `entity` has shape [{}, {}], expected [{}, {dim}]",
                p.num_entities(),
                p.dim,
                p.num_entities()
            )));
        }
        Ok(())
    }

    /// Checks that `store` uses exactly the stored entity and relation ids.
    pub fn check_store(&self, store: &TripleStore) -> Result<()> {
        if store.num_entities() != self.entities.len() || store.entities().labels()[..] != self.entities.labels()[..] {
            return Err(Error::Schema(format!(
                "entity vocabulary differs: checkpoint has {}, data has {}",
                self.entities.len(),
                store.num_entities()
            )));
        }
        if store.relations().labels() != self.relations.labels() {
            return Err(Error::Schema(format!(
                "relation vocabulary differs: checkpoint has {}, data has {}",
                self.relations.len(),
                store.num_relations()
            )));
        }
        Ok(())
    }

    pub fn save(&self, path: &Path, precision: Precision) -> Result<()> {
        let bytes = self.to_bytes(precision)?;
        fs::write(path, bytes).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }

    pub fn to_bytes(&self, precision: Precision) -> Result<Vec<u8>> {
        let params = &self.model.params;
        let mut tensors: Vec<(String, Vec<usize>, &[f64])> = Vec::new();
        for (name, shape) in tensor_names(params, "") {
            let data = tensor_data(params, &name).expect("tensor names come from the parameters");
            tensors.push((name, shape, data));
        }
        if let Some(adam) = &self.optimizer {
            for (state, prefix) in [(&adam.first, ADAM_FIRST), (&adam.second, ADAM_SECOND)] {
                if tensor_names(state, "") != tensor_names(params, "") {
                    return Err(Error::Schema("optimizer state does not mirror the parameters".into()));
                }
                for (name, shape) in tensor_names(state, "") {
                    let data = tensor_data(state, &name).expect("tensor names come from the state");
                    tensors.push((format!("{prefix}{name}"), shape, data));
                }
            }
        }

        let mut rules = Vec::new();
        for r in 0..self.rules.num_relations() as u32 {
            for rule in self.rules.rules(RelationId(r)) {
                let steps: Vec<Step> = match rule.formula {
                    PathFormula::OneHop(a) => vec![a],
                    PathFormula::TwoHop(a, b) => vec![a, b],
                };
                rules.push(RuleEntry {
                    relation: r,
                    body: steps
                        .iter()
                        .map(|s| {
                            let dir = match s.direction {
                                Direction::Forward => "+",
                                Direction::Inverse => "-",
                            };
                            (s.relation.0, dir.to_owned())
                        })
                        .collect(),
                    coverage: rule.coverage.map(|c| c.to_string()),
                    support: rule.support,
                    head_count: rule.head_count,
                });
            }
        }
        let mut numeric = Vec::new();
        for r in 0..self.spec.num_relations() as u32 {
            for fit in self.spec.fits(RelationId(r)) {
                numeric.push(FitEntry {
                    relation: r,
                    feature: fit.feature.0,
                    center: fit.center.to_string(),
                    sigma: fit.sigma.to_string(),
                    support: fit.support,
                });
            }
        }
        let header = Header {
            entities: self.entities.labels().to_vec(),
            relations: self.relations.labels().to_vec(),
            features: self.features.labels().to_vec(),
            config: self
                .config
                .entries()
                .into_iter()
                .map(|(k, v)| (k.to_owned(), v))
                .collect(),
            experts: self.model.experts.to_string(),
            transform: self.model.transform.to_string(),
            rules,
            numeric,
            optimizer: self.optimizer.as_ref().map(|a| OptimizerEntry {
                step: a.step,
                beta1: a.beta1.to_string(),
                beta2: a.beta2.to_string(),
                epsilon: a.epsilon.to_string(),
            }),
            tensors: tensors
                .iter()
                .map(|(name, shape, _)| TensorEntry {
                    name: name.clone(),
                    dtype: precision.tag().to_owned(),
                    shape: shape.clone(),
                })
                .collect(),
        };
        let header = serde_json::to_vec(&header).map_err(|e| Error::Schema(e.to_string()))?;

        let payload: usize = tensors.iter().map(|(_, _, d)| d.len() * precision.width()).sum();
        let mut out = Vec::with_capacity(PREAMBLE + header.len() + payload + CHECKSUM_LEN);
        out.extend_from_slice(&MAGIC);
        out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
        out.extend_from_slice(&(header.len() as u64).to_le_bytes());
        out.extend_from_slice(&header);
        for (_, _, data) in &tensors {
            for &v in *data {
                match precision {
                    Precision::F64 => out.extend_from_slice(&v.to_le_bytes()),
                    Precision::F32 => out.extend_from_slice(&(v as f32).to_le_bytes()),
                }
            }
        }
        let digest = Sha256::digest(&out);
        out.extend_from_slice(&digest);
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < PREAMBLE + CHECKSUM_LEN {
            return Err(Error::Corrupt(format!("file too short ({} bytes)", bytes.len())));
        }
        if bytes[..8] != MAGIC {
            return Err(Error::Corrupt("bad magic".into()));
        }
        let version = u32::from_le_bytes(bytes[8..12].try_into().unwrap());
        if version != FORMAT_VERSION {
            return Err(Error::UnsupportedVersion {
                found: version,
                expected: FORMAT_VERSION,
            });
        }
        let (body, checksum) = bytes.split_at(bytes.len() - CHECKSUM_LEN);
        if Sha256::digest(body).as_slice() != checksum {
            return Err(Error::Corrupt("checksum mismatch".into()));
        }
        let header_len = u64::from_le_bytes(body[12..20].try_into().unwrap());
        let header_end = usize::try_from(header_len)
            .ok()
            .and_then(|h| PREAMBLE.checked_add(h))
            .filter(|&end| end <= body.len())
            .ok_or_else(|| Error::Corrupt("header length exceeds file".into()))?;
        let header: Header = serde_json::from_slice(&body[PREAMBLE..header_end])
            .map_err(|e| Error::Corrupt(format!("header: {e}")))?;
        let mut payload = &body[header_end..];

        let entities = Vocab::from_labels(header.entities).map_err(|e| Error::Corrupt(e.to_string()))?;
        let relations = Vocab::from_labels(header.relations).map_err(|e| Error::Corrupt(e.to_string()))?;
        let features = Vocab::from_labels(header.features).map_err(|e| Error::Corrupt(e.to_string()))?;
        let num_relations = relations.len();
        let relation_id = |r: u32| {
            if (r as usize) < num_relations {
                Ok(RelationId(r))
            } else {
                Err(Error::Schema(format!("relation id {r} out of range")))
            }
        };

        let mut config = TrainConfig::default();
        for (k, v) in &header.config {
            config
                .set(k, v)
                .map_err(|e| Error::Schema(format!("config: {e}")))?;
        }

        let mut per_relation: Vec<Vec<Rule>> = vec![Vec::new(); num_relations];
        for entry in header.rules {
            let steps = entry
                .body
                .iter()
                .map(|(r, d)| {
                    let direction = match d.as_str() {
                        "+" => Direction::Forward,
                        "-" => Direction::Inverse,
                        other => return Err(Error::Schema(format!("bad step direction `{other}`"))),
                    };
                    Ok(Step {
                        relation: relation_id(*r)?,
                        direction,
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            let formula = match steps[..] {
                [a] => PathFormula::OneHop(a),
                [a, b] => PathFormula::TwoHop(a, b),
                _ => return Err(Error::Schema(format!("rule body of length {}", steps.len()))),
            };
            let head = relation_id(entry.relation)?;
            per_relation[head.index()].push(Rule {
                formula,
                coverage: entry.coverage.as_deref().map(|c| float(c, "rule coverage")).transpose()?,
                support: entry.support,
                head_count: entry.head_count,
            });
        }
        let rules = RuleSet::from_rules(per_relation);

        let mut fits: Vec<Vec<RbfFit>> = vec![Vec::new(); num_relations];
        for entry in header.numeric {
            if entry.feature as usize >= features.len() {
                return Err(Error::Schema(format!("feature id {} out of range", entry.feature)));
            }
            fits[relation_id(entry.relation)?.index()].push(RbfFit {
                feature: FeatureId(entry.feature),
                center: float(&entry.center, "rbf center")?,
                sigma: float(&entry.sigma, "rbf width")?,
                support: entry.support,
            });
        }
        let spec = RelationNumericSpec::from_fits(fits);

        // The entity tensor fixes the embedding width; every other shape is
        // implied by the vocabularies, the rules and the numeric spec.
        let dim = header
            .tensors
            .iter()
            .find(|t| t.name == "entity")
            .and_then(|t| t.shape.get(1).copied())
            .ok_or_else(|| Error::Schema("missing tensor `entity`".into()))?;
        let mut params = Params {
            dim,
            entity: vec![0.0; entities.len() * dim],
            latent: vec![0.0; num_relations * dim],
            relational: (0..num_relations as u32).map(|r| vec![0.0; rules.feature_len(RelationId(r))]).collect(),
            numerical: (0..num_relations as u32).map(|r| vec![0.0; spec.dim(RelationId(r))]).collect(),
        };
        let mut optimizer = header.optimizer.as_ref().map(|_| {
            (Params::zeros_like(&params), Params::zeros_like(&params))
        });
        let expected: Vec<(String, Vec<usize>)> = tensor_names(&params, "");

        let mut seen = std::collections::HashSet::new();
        for entry in &header.tensors {
            let width = match entry.dtype.as_str() {
                "f64" => 8,
                "f32" => 4,
                other => return Err(Error::Schema(format!("tensor `{}` has unknown dtype `{other}`", entry.name))),
            };
            if !seen.insert(entry.name.as_str()) {
                return Err(Error::Schema(format!("duplicate tensor `{}`", entry.name)));
            }
            let (target, local) = if let Some(rest) = entry.name.strip_prefix(ADAM_FIRST) {
                (optimizer.as_mut().map(|o| &mut o.0), rest)
            } else if let Some(rest) = entry.name.strip_prefix(ADAM_SECOND) {
                (optimizer.as_mut().map(|o| &mut o.1), rest)
            } else {
                (Some(&mut params), entry.name.as_str())
            };
            let Some(target) = target else {
                return Err(Error::Schema(format!("tensor `{}` without optimizer state", entry.name)));
            };
            let Some((_, shape)) = expected.iter().find(|(n, _)| n == local) else {
                return Err(Error::Schema(format!("unknown tensor `{}`", entry.name)));
            };
            if *shape != entry.shape {
                return Err(Error::Schema(format!(
                    "tensor `{}` has shape {:?}, expected {:?}",
                    entry.name, entry.shape, shape
                )));
            }
            let len: usize = shape.iter().product();
            let nbytes = len * width;
            if payload.len() < nbytes {
                return Err(Error::Corrupt(format!("payload of `{}` truncated", entry.name)));
            }
            let (raw, rest) = payload.split_at(nbytes);
            payload = rest;
            let slot = tensor_slot(target, local);
            for (dst, chunk) in slot.iter_mut().zip(raw.chunks_exact(width)) {
                *dst = if width == 8 {
                    f64::from_le_bytes(chunk.try_into().unwrap())
                } else {
                    f32::from_le_bytes(chunk.try_into().unwrap()) as f64
                };
            }
        }
        if !payload.is_empty() {
            return Err(Error::Corrupt(format!("{} trailing payload bytes", payload.len())));
        }
        let prefixes: &[&str] = if optimizer.is_some() { &["", ADAM_FIRST, ADAM_SECOND] } else { &[""] };
        for prefix in prefixes {
            for (name, _) in &expected {
                let full = format!("{prefix}{name}");
                if !seen.contains(full.as_str()) {
                    return Err(Error::Schema(format!("missing tensor `{full}`")));
                }
            }
        }

        let experts = header.experts.parse().map_err(|e| Error::Schema(format!("experts: {e}")))?;
        let transform = header.transform.parse().map_err(|e| Error::Schema(format!("transform: {e}")))?;
        let model = PoeModel::from_parts(params, &spec, experts, transform)?;
        let optimizer = match (header.optimizer, optimizer) {
            (Some(o), Some((first, second))) => Some(AdamState {
                first,
                second,
                step: o.step,
                beta1: float(&o.beta1, "beta1")?,
                beta2: float(&o.beta2, "beta2")?,
                epsilon: float(&o.epsilon, "epsilon")?,
            }),
            _ => None,
        };
        Ok(Checkpoint {
            entities,
            relations,
            features,
            config,
            rules,
            spec,
            model,
            optimizer,
        })
    }
}

fn tensor_slot<'a>(params: &'a mut Params, name: &str) -> &'a mut [f64] {
    match name {
        "entity" => &mut params.entity,
        "latent" => &mut params.latent,
        _ => {
            let (group, idx) = name.split_once('/').expect("validated tensor name");
            let idx: usize = idx.parse().expect("validated tensor name");
            if group == "relational" {
                &mut params.relational[idx]
            } else {
                &mut params.numerical[idx]
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::ModelOptions;
    use crate::store::{EntityId, Triple};

    fn sample(with_optimizer: bool) -> Checkpoint {
        let train = [
            Triple::new(EntityId(0), RelationId(0), EntityId(1)),
            Triple::new(EntityId(1), RelationId(1), EntityId(2)),
            Triple::new(EntityId(0), RelationId(1), EntityId(2)),
        ];
        let store = TripleStore::from_ids(3, 2, &train, &[], &[]).unwrap();
        let mut table = NumericTable::new(3);
        table.insert(EntityId(0), "height", 3.0).unwrap();
        table.insert(EntityId(2), "height", 1.5).unwrap();
        let rules = RuleSet::from_rules(vec![
            vec![Rule {
                formula: PathFormula::TwoHop(Step::forward(RelationId(1)), Step::inverse(RelationId(1))),
                coverage: Some(1.0 / 3.0),
                support: Some(1),
                head_count: Some(3),
            }],
            vec![Rule::unscored(PathFormula::OneHop(Step::inverse(RelationId(0))))],
        ]);
        let spec = RelationNumericSpec::from_fits(vec![
            vec![],
            vec![RbfFit {
                feature: FeatureId(0),
                center: 0.1 + 0.2,
                sigma: 1e-6,
                support: 1,
            }],
        ]);
        let model = PoeModel::init(3, &rules, &spec, ModelOptions { dim: 4, ..Default::default() }, 11).unwrap();
        let mut adam = AdamState::new(&model.params);
        adam.step = 7;
        adam.first.entity[3] = 0.25;
        let config = TrainConfig {
            learning_rate: 0.003,
            seed: 11,
            ..TrainConfig::default()
        };
        Checkpoint::new(&store, &table, &rules, &spec, &model, &config, with_optimizer.then_some(&adam)).unwrap()
    }

    #[test]
    fn round_trip_is_exact() {
        for with in [false, true] {
            let ck = sample(with);
            let back = Checkpoint::from_bytes(&ck.to_bytes(Precision::F64).unwrap()).unwrap();
            assert_eq!(back, ck);
        }
    }

    #[test]
    fn save_is_deterministic() {
        let ck = sample(true);
        assert_eq!(ck.to_bytes(Precision::F64).unwrap(), ck.to_bytes(Precision::F64).unwrap());
    }

    #[test]
    fn f32_rounds_parameters() {
        let ck = sample(false);
        let back = Checkpoint::from_bytes(&ck.to_bytes(Precision::F32).unwrap()).unwrap();
        for (a, b) in ck.model.params.entity.iter().zip(&back.model.params.entity) {
            assert_eq!(*b, *a as f32 as f64);
        }
        assert_eq!(back.spec, ck.spec);
    }

    #[test]
    fn truncation_and_bit_flips_are_corruption() {
        let bytes = sample(false).to_bytes(Precision::F64).unwrap();
        for cut in [0, 10, 40, bytes.len() / 2, bytes.len() - 1] {
            assert!(matches!(Checkpoint::from_bytes(&bytes[..cut]), Err(Error::Corrupt(_))), "cut {cut}");
        }
        let mut flipped = bytes.clone();
        let i = flipped.len() - 40;
        flipped[i] ^= 1;
        assert!(matches!(Checkpoint::from_bytes(&flipped), Err(Error::Corrupt(_))));
    }

    #[test]
    fn other_version_is_rejected() {
        let mut bytes = sample(false).to_bytes(Precision::F64).unwrap();
        bytes[8..12].copy_from_slice(&2u32.to_le_bytes());
        assert!(matches!(
            Checkpoint::from_bytes(&bytes),
            Err(Error::UnsupportedVersion { found: 2, expected: 1 })
        ));
    }

    fn rewrite_header(bytes: &[u8], edit: impl FnOnce(&mut Header)) -> Vec<u8> {
        let len = u64::from_le_bytes(bytes[12..20].try_into().unwrap()) as usize;
        let mut header: Header = serde_json::from_slice(&bytes[PREAMBLE..PREAMBLE + len]).unwrap();
        edit(&mut header);
        let new_header = serde_json::to_vec(&header).unwrap();
        let mut out = bytes[..12].to_vec();
        out.extend_from_slice(&(new_header.len() as u64).to_le_bytes());
        out.extend_from_slice(&new_header);
        out.extend_from_slice(&bytes[PREAMBLE + len..bytes.len() - CHECKSUM_LEN]);
        let digest = Sha256::digest(&out);
        out.extend_from_slice(&digest);
        out
    }

    #[test]
    fn unknown_tensor_is_a_schema_error() {
        let bytes = sample(false).to_bytes(Precision::F64).unwrap();
        let bad = rewrite_header(&bytes, |h| h.tensors[1].name = "bogus".into());
        match Checkpoint::from_bytes(&bad) {
            Err(Error::Schema(msg)) => assert!(msg.contains("bogus"), "{msg}"),
            other => panic!("expected schema error, got {other:?}"),
        }
    }

    #[test]
    fn width_mismatch_names_the_tensor() {
        let ck = sample(false);
        ck.expect_dim(4).unwrap();
        match ck.expect_dim(8) {
            Err(Error::Schema(msg)) => assert!(msg.contains("`entity`"), "{msg}"),
            other => panic!("expected schema error, got {other:?}"),
        }
        let bytes = ck.to_bytes(Precision::F64).unwrap();
        let bad = rewrite_header(&bytes, |h| h.tensors[1].shape = vec![2, 5]);
        match Checkpoint::from_bytes(&bad) {
            Err(Error::Schema(msg)) => assert!(msg.contains("`latent`"), "{msg}"),
            other => panic!("expected schema error, got {other:?}"),
        }
    }
}
