//! Product of experts over latent, relational and numerical features.
//!
//! Each relation owns three experts whose log-scores are
//!
//! * latent: `(e_h * e_t) . w_r` (DistMult),
//! * relational: `r_(h,t) . w_rel_r` over the relation's rule bodies,
//! * numerical: `phi(n_(h,t)) . w_num_r` with `phi` an RBF (or sign) of the
//!   head-minus-tail attribute differences.
//!
//! The unnormalized probability of a triple is the product of its experts,
//! so the model works with the sum of log-scores throughout and normalizes
//! with a log-sum-exp over a candidate set.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::features::{FeatureExtractor, PairFeatures};
use crate::numeric::{NumericDiff, RelationNumericSpec};
use crate::rules::RuleSet;
use crate::store::{EntityId, RelationId, Triple, TripleStore};

/// Which experts contribute to the score (`l`, `r`, `n` subsets).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Experts {
    pub latent: bool,
    pub relational: bool,
    pub numerical: bool,
}

impl Experts {
    pub const ALL: Experts = Experts {
        latent: true,
        relational: true,
        numerical: true,
    };
    pub const NONE: Experts = Experts {
        latent: false,
        relational: false,
        numerical: false,
    };
    pub const LATENT: Experts = Experts {
        latent: true,
        relational: false,
        numerical: false,
    };

    /// The seven non-empty subsets in `l, r, n, lr, ln, rn, lrn` order.
    pub fn ablations() -> [Experts; 7] {
        ["l", "r", "n", "lr", "ln", "rn", "lrn"].map(|s| s.parse().unwrap())
    }

    pub fn is_empty(&self) -> bool {
        !(self.latent || self.relational || self.numerical)
    }
}

impl Default for Experts {
    fn default() -> Self {
        Experts::ALL
    }
}

impl fmt::Display for Experts {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_empty() {
            return f.write_str("none");
        }
        for (on, c) in [(self.latent, 'l'), (self.relational, 'r'), (self.numerical, 'n')] {
            if on {
                write!(f, "{c}")?;
            }
        }
        Ok(())
    }
}

impl FromStr for Experts {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.strip_prefix("KB").unwrap_or(s);
        if s == "none" {
            return Ok(Experts::NONE);
        }
        let mut e = Experts::NONE;
        for c in s.chars() {
            let slot = match c {
                'l' => &mut e.latent,
                'r' => &mut e.relational,
                'n' => &mut e.numerical,
                _ => return Err(Error::InvalidArgument(format!("bad ablation `{s}`"))),
            };
            if *slot {
                return Err(Error::InvalidArgument(format!("bad ablation `{s}`")));
            }
            *slot = true;
        }
        if e.is_empty() {
            return Err(Error::InvalidArgument("empty ablation".into()));
        }
        Ok(e)
    }
}

/// How attribute differences are turned into numerical-expert inputs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum NumericTransform {
    #[default]
    Rbf,
    /// `+1` for non-negative differences, `-1` otherwise.
    Sign,
}

impl fmt::Display for NumericTransform {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            NumericTransform::Rbf => "rbf",
            NumericTransform::Sign => "sign",
        })
    }
}

impl FromStr for NumericTransform {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "rbf" => Ok(NumericTransform::Rbf),
            "sign" => Ok(NumericTransform::Sign),
            _ => Err(Error::InvalidArgument(format!("bad numeric transform `{s}`"))),
        }
    }
}

/// Identifies one contiguous parameter vector of the model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ParamBlock {
    Entity(EntityId),
    Latent(RelationId),
    Relational(RelationId),
    Numerical(RelationId),
}

/// Learnable parameters laid out by block.
#[derive(Debug, Clone, PartialEq)]
pub struct Params {
    pub dim: usize,
    /// Row-major `|E| x dim`.
    pub entity: Vec<f64>,
    /// Row-major `|R| x dim`.
    pub latent: Vec<f64>,
    pub relational: Vec<Vec<f64>>,
    pub numerical: Vec<Vec<f64>>,
}

impl Params {
    pub fn zeros_like(other: &Params) -> Self {
        Params {
            dim: other.dim,
            entity: vec![0.0; other.entity.len()],
            latent: vec![0.0; other.latent.len()],
            relational: other.relational.iter().map(|v| vec![0.0; v.len()]).collect(),
            numerical: other.numerical.iter().map(|v| vec![0.0; v.len()]).collect(),
        }
    }

    pub fn num_entities(&self) -> usize {
        if self.dim == 0 {
            0
        } else {
            self.entity.len() / self.dim
        }
    }

    pub fn num_relations(&self) -> usize {
        self.relational.len()
    }

    pub fn block(&self, block: ParamBlock) -> &[f64] {
        let k = self.dim;
        match block {
            ParamBlock::Entity(e) => &self.entity[e.index() * k..(e.index() + 1) * k],
            ParamBlock::Latent(r) => &self.latent[r.index() * k..(r.index() + 1) * k],
            ParamBlock::Relational(r) => &self.relational[r.index()],
            ParamBlock::Numerical(r) => &self.numerical[r.index()],
        }
    }

    pub fn block_mut(&mut self, block: ParamBlock) -> &mut [f64] {
        let k = self.dim;
        match block {
            ParamBlock::Entity(e) => &mut self.entity[e.index() * k..(e.index() + 1) * k],
            ParamBlock::Latent(r) => &mut self.latent[r.index() * k..(r.index() + 1) * k],
            ParamBlock::Relational(r) => &mut self.relational[r.index()],
            ParamBlock::Numerical(r) => &mut self.numerical[r.index()],
        }
    }

    /// Every block in a fixed order.
    pub fn blocks(&self) -> Vec<ParamBlock> {
        let mut out = Vec::new();
        out.extend((0..self.num_entities() as u32).map(|e| ParamBlock::Entity(EntityId(e))));
        for r in 0..self.num_relations() as u32 {
            out.push(ParamBlock::Latent(RelationId(r)));
        }
        for r in 0..self.num_relations() as u32 {
            out.push(ParamBlock::Relational(RelationId(r)));
        }
        for r in 0..self.num_relations() as u32 {
            out.push(ParamBlock::Numerical(RelationId(r)));
        }
        out
    }

    pub fn all_finite(&self) -> bool {
        self.entity
            .iter()
            .chain(&self.latent)
            .chain(self.relational.iter().flatten())
            .chain(self.numerical.iter().flatten())
            .all(|v| v.is_finite())
    }
}

/// Sparse gradient: only touched blocks are present.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Gradients {
    blocks: BTreeMap<ParamBlock, Vec<f64>>,
}

impl Gradients {
    pub fn new() -> Self {
        Self::default()
    }

    fn add_scaled(&mut self, block: ParamBlock, len: usize, scale: f64, values: impl Iterator<Item = f64>) {
        let slot = self.blocks.entry(block).or_insert_with(|| vec![0.0; len]);
        for (g, v) in slot.iter_mut().zip(values) {
            *g += scale * v;
        }
    }

    /// Replaces one block's gradient.
    pub fn set_block(&mut self, block: ParamBlock, values: Vec<f64>) {
        self.blocks.insert(block, values);
    }

    /// Adds `other` block by block in key order.
    pub fn accumulate(&mut self, other: &Gradients) {
        for (&block, values) in &other.blocks {
            self.add_scaled(block, values.len(), 1.0, values.iter().copied());
        }
    }

    pub fn get(&self, block: ParamBlock) -> Option<&[f64]> {
        self.blocks.get(&block).map(Vec::as_slice)
    }

    pub fn iter(&self) -> impl Iterator<Item = (ParamBlock, &[f64])> {
        self.blocks.iter().map(|(b, v)| (*b, v.as_slice()))
    }

    pub fn len(&self) -> usize {
        self.blocks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.blocks.is_empty()
    }

    pub fn norm(&self) -> f64 {
        self.blocks
            .values()
            .flatten()
            .map(|g| g * g)
            .sum::<f64>()
            .sqrt()
    }
}

/// A positive triple together with the candidate multiset it is normalized
/// against. The positive is `triples[positive]`.
#[derive(Debug, Clone, PartialEq)]
pub struct CandidateSet {
    pub triples: Vec<Triple>,
    pub positive: usize,
}

impl CandidateSet {
    pub fn positive_triple(&self) -> Triple {
        self.triples[self.positive]
    }
}

/// Per-expert log-scores of one candidate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScoredCandidate {
    pub triple: Triple,
    pub latent: f64,
    pub relational: f64,
    pub numerical: f64,
    pub total: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModelOptions {
    pub dim: usize,
    pub experts: Experts,
    pub transform: NumericTransform,
}

impl Default for ModelOptions {
    fn default() -> Self {
        ModelOptions {
            dim: 100,
            experts: Experts::ALL,
            transform: NumericTransform::Rbf,
        }
    }
}

/// Uniform Glorot bound `sqrt(6 / (fan_in + fan_out))`.
pub fn glorot_bound(fan_in: usize, fan_out: usize) -> f64 {
    (6.0 / (fan_in + fan_out) as f64).sqrt()
}

#[derive(Debug, Clone, PartialEq)]
pub struct PoeModel {
    pub params: Params,
    /// Fixed RBF centers and widths per relation, aligned with `params.numerical`.
    centers: Vec<Vec<f64>>,
    sigmas: Vec<Vec<f64>>,
    pub experts: Experts,
    pub transform: NumericTransform,
}

impl PoeModel {
    /// Glorot-uniform initialization, deterministic in `seed`.
    ///
    /// The entity table is treated as an `|E| x dim` matrix; every
    /// per-relation weight vector of length `n` as an `n x 1` one.
    pub fn init(
        num_entities: usize,
        rules: &RuleSet,
        spec: &RelationNumericSpec,
        options: ModelOptions,
        seed: u64,
    ) -> Result<Self> {
        if options.dim == 0 {
            return Err(Error::InvalidArgument("embedding dimension must be positive".into()));
        }
        if rules.num_relations() != spec.num_relations() {
            return Err(Error::DimensionMismatch {
                what: "relations in rule set vs numeric spec".into(),
                expected: rules.num_relations(),
                got: spec.num_relations(),
            });
        }
        let num_relations = rules.num_relations();
        let k = options.dim;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut uniform = |len: usize, bound: f64| -> Vec<f64> {
            (0..len).map(|_| rng.gen_range(-bound..=bound)).collect()
        };
        let entity = uniform(num_entities * k, glorot_bound(num_entities.max(1), k));
        let latent = uniform(num_relations * k, glorot_bound(k, 1));
        let relational = (0..num_relations as u32)
            .map(|r| {
                let n = rules.feature_len(RelationId(r));
                uniform(n, glorot_bound(n, 1))
            })
            .collect();
        let numerical = (0..num_relations as u32)
            .map(|r| {
                let n = spec.dim(RelationId(r));
                uniform(n, glorot_bound(n, 1))
            })
            .collect();
        let (centers, sigmas) = (0..num_relations as u32)
            .map(|r| {
                let fits = spec.fits(RelationId(r));
                (
                    fits.iter().map(|f| f.center).collect(),
                    fits.iter().map(|f| f.sigma).collect(),
                )
            })
            .unzip();
        Ok(PoeModel {
            params: Params {
                dim: k,
                entity,
                latent,
                relational,
                numerical,
            },
            centers,
            sigmas,
            experts: options.experts,
            transform: options.transform,
        })
    }

    /// Assembles a model from stored parameters, e.g. from a checkpoint.
    pub fn from_parts(
        params: Params,
        spec: &RelationNumericSpec,
        experts: Experts,
        transform: NumericTransform,
    ) -> Result<Self> {
        if spec.num_relations() != params.num_relations() {
            return Err(Error::DimensionMismatch {
                what: "relations".into(),
                expected: params.num_relations(),
                got: spec.num_relations(),
            });
        }
        let mut centers = Vec::new();
        let mut sigmas = Vec::new();
        for r in 0..params.num_relations() as u32 {
            let fits = spec.fits(RelationId(r));
            if fits.len() != params.numerical[r as usize].len() {
                return Err(Error::DimensionMismatch {
                    what: format!("numerical weights of relation {r}"),
                    expected: fits.len(),
                    got: params.numerical[r as usize].len(),
                });
            }
            centers.push(fits.iter().map(|f| f.center).collect());
            sigmas.push(fits.iter().map(|f| f.sigma).collect());
        }
        Ok(PoeModel {
            params,
            centers,
            sigmas,
            experts,
            transform,
        })
    }

    pub fn dim(&self) -> usize {
        self.params.dim
    }

    pub fn num_entities(&self) -> usize {
        self.params.num_entities()
    }

    pub fn num_relations(&self) -> usize {
        self.params.num_relations()
    }

    pub fn centers(&self, relation: RelationId) -> &[f64] {
        &self.centers[relation.index()]
    }

    pub fn sigmas(&self, relation: RelationId) -> &[f64] {
        &self.sigmas[relation.index()]
    }

    /// Checks that the parameter shapes match a store, rule set and spec.
    pub fn check_compatible(&self, store: &TripleStore, rules: &RuleSet, spec: &RelationNumericSpec) -> Result<()> {
        let mismatch = |what: String, expected: usize, got: usize| {
            Err(Error::DimensionMismatch { what, expected, got })
        };
        if self.num_entities() != store.num_entities() {
            return mismatch("entities".into(), store.num_entities(), self.num_entities());
        }
        if self.num_relations() != store.num_relations() {
            return mismatch("relations".into(), store.num_relations(), self.num_relations());
        }
        for r in store.relation_ids() {
            if self.params.relational[r.index()].len() != rules.feature_len(r) {
                return mismatch(
                    format!("relational weights of {}", store.relation_label(r)),
                    rules.feature_len(r),
                    self.params.relational[r.index()].len(),
                );
            }
            if self.params.numerical[r.index()].len() != spec.dim(r) {
                return mismatch(
                    format!("numerical weights of {}", store.relation_label(r)),
                    spec.dim(r),
                    self.params.numerical[r.index()].len(),
                );
            }
        }
        Ok(())
    }

    fn entity(&self, e: EntityId) -> &[f64] {
        self.params.block(ParamBlock::Entity(e))
    }

    fn latent_weights(&self, r: RelationId) -> &[f64] {
        self.params.block(ParamBlock::Latent(r))
    }

    /// DistMult log-score `sum_i e_h[i] * e_t[i] * w_r[i]`.
    pub fn latent_logit(&self, head: EntityId, relation: RelationId, tail: EntityId) -> f64 {
        let (eh, et, w) = (self.entity(head), self.entity(tail), self.latent_weights(relation));
        eh.iter()
            .zip(et)
            .zip(w)
            .map(|((a, b), w)| (a * b) * w)
            .sum()
    }

    pub fn relational_logit(&self, relation: RelationId, features: &[bool]) -> Result<f64> {
        let w = &self.params.relational[relation.index()];
        if w.len() != features.len() {
            return Err(Error::DimensionMismatch {
                what: format!("relational features of relation {}", relation.0),
                expected: w.len(),
                got: features.len(),
            });
        }
        Ok(w.iter()
            .zip(features)
            .filter(|(_, &on)| on)
            .map(|(w, _)| *w)
            .sum())
    }

    /// Transformed input of numerical feature `i`; absent entries give 0.
    pub fn numeric_activation(&self, relation: RelationId, i: usize, diff: f64, present: bool) -> f64 {
        if !present {
            return 0.0;
        }
        match self.transform {
            NumericTransform::Rbf => {
                let c = self.centers[relation.index()][i];
                let s = self.sigmas[relation.index()][i];
                let z = diff - c;
                (-(z * z) / (s * s)).exp()
            }
            NumericTransform::Sign => {
                if diff >= 0.0 {
                    1.0
                } else {
                    -1.0
                }
            }
        }
    }

    pub fn numerical_logit(&self, relation: RelationId, diffs: &NumericDiff) -> Result<f64> {
        let w = &self.params.numerical[relation.index()];
        if w.len() != diffs.values.len() || w.len() != diffs.present.len() {
            return Err(Error::DimensionMismatch {
                what: format!("numerical features of relation {}", relation.0),
                expected: w.len(),
                got: diffs.values.len(),
            });
        }
        Ok(w.iter()
            .enumerate()
            .map(|(i, w)| w * self.numeric_activation(relation, i, diffs.values[i], diffs.present[i]))
            .sum())
    }

    /// Per-expert log-scores; disabled experts contribute 0.
    pub fn score(&self, triple: Triple, features: &PairFeatures) -> Result<ScoredCandidate> {
        let latent = if self.experts.latent {
            self.latent_logit(triple.head, triple.relation, triple.tail)
        } else {
            0.0
        };
        let relational = if self.experts.relational {
            self.relational_logit(triple.relation, &features.relational)?
        } else {
            0.0
        };
        let numerical = if self.experts.numerical {
            self.numerical_logit(triple.relation, &features.numeric)?
        } else {
            0.0
        };
        Ok(ScoredCandidate {
            triple,
            latent,
            relational,
            numerical,
            total: latent + relational + numerical,
        })
    }

    pub fn total_logit(&self, triple: Triple, features: &PairFeatures) -> Result<f64> {
        Ok(self.score(triple, features)?.total)
    }

    /// Extracts features and scores a triple.
    pub fn logit(&self, extractor: &FeatureExtractor<'_>, triple: Triple) -> Result<f64> {
        let features = extractor.extract(triple, self.experts)?;
        self.total_logit(triple, &features)
    }

    /// Softmax of the candidates' total logits.
    pub fn softmax_prob(&self, extractor: &FeatureExtractor<'_>, set: &CandidateSet) -> Result<Vec<f64>> {
        let logits = set
            .triples
            .iter()
            .map(|&t| self.logit(extractor, t))
            .collect::<Result<Vec<_>>>()?;
        Ok(softmax(&logits))
    }

    /// Cross-entropy of one candidate set and its gradient.
    fn example_loss(&self, extractor: &FeatureExtractor<'_>, set: &CandidateSet) -> Result<(f64, Gradients)> {
        let features = set
            .triples
            .iter()
            .map(|&t| extractor.extract(t, self.experts))
            .collect::<Result<Vec<_>>>()?;
        let logits = set
            .triples
            .iter()
            .zip(&features)
            .map(|(&t, f)| self.total_logit(t, f))
            .collect::<Result<Vec<_>>>()?;
        let lse = log_sum_exp(&logits);
        let loss = lse - logits[set.positive];

        let k = self.dim();
        let mut grads = Gradients::new();
        for (c, (&triple, feats)) in set.triples.iter().zip(&features).enumerate() {
            // d loss / d logit_c = p_c - [c is the positive]
            let mut coeff = (logits[c] - lse).exp();
            if c == set.positive {
                coeff -= 1.0;
            }
            let r = triple.relation;
            if self.experts.latent {
                let (eh, et, w) = (self.entity(triple.head), self.entity(triple.tail), self.latent_weights(r));
                grads.add_scaled(
                    ParamBlock::Entity(triple.head),
                    k,
                    coeff,
                    et.iter().zip(w).map(|(a, b)| a * b),
                );
                grads.add_scaled(
                    ParamBlock::Entity(triple.tail),
                    k,
                    coeff,
                    eh.iter().zip(w).map(|(a, b)| a * b),
                );
                grads.add_scaled(ParamBlock::Latent(r), k, coeff, eh.iter().zip(et).map(|(a, b)| a * b));
            }
            if self.experts.relational && !feats.relational.is_empty() {
                grads.add_scaled(
                    ParamBlock::Relational(r),
                    feats.relational.len(),
                    coeff,
                    feats.relational.iter().map(|&on| if on { 1.0 } else { 0.0 }),
                );
            }
            if self.experts.numerical && !feats.numeric.is_empty() {
                let n = &feats.numeric;
                grads.add_scaled(
                    ParamBlock::Numerical(r),
                    n.len(),
                    coeff,
                    (0..n.len()).map(|i| self.numeric_activation(r, i, n.values[i], n.present[i])),
                );
            }
        }
        Ok((loss, grads))
    }

    /// Summed negative log-likelihood of the positives and its exact gradient.
    ///
    /// Examples are processed in parallel; their gradients are reduced in
    /// batch order, so the result does not depend on thread scheduling.
    pub fn loss_and_gradients(
        &self,
        extractor: &FeatureExtractor<'_>,
        batch: &[CandidateSet],
    ) -> Result<(f64, Gradients)> {
        if batch.is_empty() {
            return Err(Error::InvalidArgument("empty batch".into()));
        }
        if batch.iter().any(|s| s.positive >= s.triples.len()) {
            return Err(Error::InvalidArgument("positive index outside candidate set".into()));
        }
        let parts = batch
            .par_iter()
            .map(|set| self.example_loss(extractor, set))
            .collect::<Result<Vec<_>>>()?;
        let mut loss = 0.0;
        let mut grads = Gradients::new();
        for (l, g) in &parts {
            loss += l;
            grads.accumulate(g);
        }
        Ok((loss, grads))
    }

    /// Like [`loss_and_gradients`](Self::loss_and_gradients) but reduces
    /// per-example results as a parallel tree, so the floating-point
    /// summation order may vary between runs.
    pub fn loss_and_gradients_unordered(
        &self,
        extractor: &FeatureExtractor<'_>,
        batch: &[CandidateSet],
    ) -> Result<(f64, Gradients)> {
        if batch.is_empty() {
            return Err(Error::InvalidArgument("empty batch".into()));
        }
        if batch.iter().any(|s| s.positive >= s.triples.len()) {
            return Err(Error::InvalidArgument("positive index outside candidate set".into()));
        }
        batch
            .par_iter()
            .map(|set| self.example_loss(extractor, set))
            .try_reduce(
                || (0.0, Gradients::new()),
                |(la, mut ga), (lb, gb)| {
                    ga.accumulate(&gb);
                    Ok((la + lb, ga))
                },
            )
    }
}

/// `log(sum(exp(x)))`, shifted by the maximum.
pub fn log_sum_exp(values: &[f64]) -> f64 {
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return max;
    }
    max + values.iter().map(|v| (v - max).exp()).sum::<f64>().ln()
}

pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let lse = log_sum_exp(logits);
    logits.iter().map(|v| (v - lse).exp()).collect()
}
