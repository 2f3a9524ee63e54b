//! Brute-force oracles and data generators shared by the integration tests.
//! Nothing here goes through the store's indexes or the model's scorers.

#![allow(dead_code)]

use std::collections::{BTreeMap, HashSet};

use kbpoe::model::{Experts, ModelOptions, NumericTransform, Params, PoeModel};
use kbpoe::numeric::{FeatureId, NumericTable, RbfFit, RelationNumericSpec};
use kbpoe::rules::{Direction, PathFormula, Rule, RuleSet, Step};
use kbpoe::{CandidateSet, EntityId, RelationId, Triple, TripleStore};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn t(h: u32, r: u32, tail: u32) -> Triple {
    Triple::new(EntityId(h), RelationId(r), EntityId(tail))
}

pub fn random_triples(rng: &mut ChaCha8Rng, n_e: usize, n_r: usize, n: usize) -> Vec<Triple> {
    (0..n)
        .map(|_| {
            t(
                rng.gen_range(0..n_e as u32),
                rng.gen_range(0..n_r as u32),
                rng.gen_range(0..n_e as u32),
            )
        })
        .collect()
}

/// Random store; duplicates in the input are fine, the store drops them.
pub fn random_store(rng: &mut ChaCha8Rng, n_e: usize, n_r: usize, sizes: [usize; 3]) -> TripleStore {
    let train = random_triples(rng, n_e, n_r, sizes[0]);
    let valid = random_triples(rng, n_e, n_r, sizes[1]);
    let test = random_triples(rng, n_e, n_r, sizes[2]);
    TripleStore::from_ids(n_e, n_r, &train, &valid, &test).unwrap()
}

// ---------------------------------------------------------------- rules

/// Plain set of training edges.
pub struct Graph {
    pub n_e: usize,
    pub n_r: usize,
    pub edges: HashSet<(u32, u32, u32)>,
    pub triples: Vec<Triple>,
}

impl Graph {
    pub fn new(n_e: usize, n_r: usize, triples: &[Triple]) -> Self {
        let mut seen = HashSet::new();
        let triples: Vec<Triple> = triples.iter().copied().filter(|t| seen.insert(*t)).collect();
        Graph {
            n_e,
            n_r,
            edges: triples.iter().map(|t| (t.head.0, t.relation.0, t.tail.0)).collect(),
            triples,
        }
    }

    fn step(&self, s: Step, from: u32, to: u32) -> bool {
        match s.direction {
            Direction::Forward => self.edges.contains(&(from, s.relation.0, to)),
            Direction::Inverse => self.edges.contains(&(to, s.relation.0, from)),
        }
    }

    pub fn holds(&self, f: &PathFormula, target: u32, h: u32, tail: u32) -> bool {
        match *f {
            PathFormula::OneHop(s) => {
                !(s.relation.0 == target && s.direction == Direction::Forward) && self.step(s, h, tail)
            }
            PathFormula::TwoHop(a, b) => (0..self.n_e as u32).any(|x| self.step(a, h, x) && self.step(b, x, tail)),
        }
    }

    pub fn all_bodies(&self) -> Vec<PathFormula> {
        let mut steps = Vec::new();
        for r in 0..self.n_r as u32 {
            steps.push(Step::forward(RelationId(r)));
            steps.push(Step::inverse(RelationId(r)));
        }
        let mut out: Vec<PathFormula> = steps.iter().map(|&s| PathFormula::OneHop(s)).collect();
        for &a in &steps {
            for &b in &steps {
                out.push(PathFormula::TwoHop(a, b));
            }
        }
        out
    }
}

/// `(formula, support, head_count)` per relation, unsorted.
pub fn brute_force_mine(g: &Graph, min_coverage: f64, min_support: usize) -> Vec<Vec<(PathFormula, usize, usize)>> {
    let bodies = g.all_bodies();
    (0..g.n_r as u32)
        .map(|r| {
            let heads: Vec<&Triple> = g.triples.iter().filter(|t| t.relation.0 == r).collect();
            let mut out = Vec::new();
            for f in &bodies {
                if let PathFormula::OneHop(s) = f {
                    if s.relation.0 == r && s.direction == Direction::Forward {
                        continue;
                    }
                }
                let support = heads.iter().filter(|t| g.holds(f, r, t.head.0, t.tail.0)).count();
                if support == 0 || heads.is_empty() {
                    continue;
                }
                let coverage = support as f64 / heads.len() as f64;
                if support >= min_support && coverage >= min_coverage {
                    out.push((*f, support, heads.len()));
                }
            }
            out
        })
        .collect()
}

/// Small KB with an inverse pair, a composition and random noise.
pub fn planted_triples(rng: &mut ChaCha8Rng, n_e: usize, noise: usize) -> Vec<Triple> {
    // r0 random, r1 = inverse of r0, r2 = r0 followed by r3, r3 random
    let mut out = Vec::new();
    let r0 = random_triples(rng, n_e, 1, n_e);
    let r3: Vec<Triple> = random_triples(rng, n_e, 1, n_e).into_iter().map(|x| t(x.head.0, 3, x.tail.0)).collect();
    for a in &r0 {
        out.push(*a);
        out.push(t(a.tail.0, 1, a.head.0));
        for b in &r3 {
            if b.head == a.tail {
                out.push(t(a.head.0, 2, b.tail.0));
            }
        }
    }
    out.extend(&r3);
    // noise lives on r4 and r5 so the planted patterns stay exact
    out.extend(random_triples(rng, n_e, 2, noise).into_iter().map(|x| t(x.head.0, 4 + x.relation.0, x.tail.0)));
    out
}

// ---------------------------------------------------------------- scoring

/// Independent model arithmetic over raw parameters and brute-force features.
pub struct Oracle<'a> {
    pub graph: Graph,
    pub rules: &'a RuleSet,
    pub table: &'a NumericTable,
    pub spec: &'a RelationNumericSpec,
}

impl<'a> Oracle<'a> {
    pub fn new(store: &TripleStore, rules: &'a RuleSet, table: &'a NumericTable, spec: &'a RelationNumericSpec) -> Self {
        Oracle {
            graph: Graph::new(store.num_entities(), store.num_relations(), store.train()),
            rules,
            table,
            spec,
        }
    }

    pub fn logit(&self, model: &PoeModel, params: &Params, tr: Triple) -> f64 {
        let k = params.dim;
        let (h, r, tl) = (tr.head.index(), tr.relation.index(), tr.tail.index());
        let mut latent = 0.0;
        if model.experts.latent {
            for i in 0..k {
                latent += (params.entity[h * k + i] * params.entity[tl * k + i]) * params.latent[r * k + i];
            }
        }
        let mut relational = 0.0;
        if model.experts.relational {
            for (j, rule) in self.rules.rules(tr.relation).iter().enumerate() {
                if self.graph.holds(&rule.formula, r as u32, tr.head.0, tr.tail.0) {
                    relational += params.relational[r][j];
                }
            }
        }
        let mut numerical = 0.0;
        if model.experts.numerical {
            for (j, fit) in self.spec.fits(tr.relation).iter().enumerate() {
                let (Some(a), Some(b)) = (self.table.get(tr.head, fit.feature), self.table.get(tr.tail, fit.feature)) else {
                    continue;
                };
                let d = a - b;
                let phi = match model.transform {
                    NumericTransform::Rbf => {
                        let z = d - fit.center;
                        (-(z * z) / (fit.sigma * fit.sigma)).exp()
                    }
                    NumericTransform::Sign => {
                        if d >= 0.0 {
                            1.0
                        } else {
                            -1.0
                        }
                    }
                };
                numerical += params.numerical[r][j] * phi;
            }
        }
        latent + relational + numerical
    }

    /// Summed cross-entropy, computed without any shifting tricks.
    pub fn loss(&self, model: &PoeModel, params: &Params, batch: &[CandidateSet]) -> f64 {
        batch
            .iter()
            .map(|set| {
                let logits: Vec<f64> = set.triples.iter().map(|&x| self.logit(model, params, x)).collect();
                let z: f64 = logits.iter().map(|l| l.exp()).sum();
                z.ln() - logits[set.positive]
            })
            .sum()
    }

    /// Filtered rank by scoring every entity and filtering with the union
    /// of the three splits.
    pub fn rank(&self, model: &PoeModel, store_triples: &HashSet<Triple>, n_e: usize, tr: Triple, tail_query: bool) -> usize {
        let complete = |e: u32| {
            if tail_query {
                t(tr.head.0, tr.relation.0, e)
            } else {
                t(e, tr.relation.0, tr.tail.0)
            }
        };
        let gold = self.logit(model, &model.params, tr);
        let (mut greater, mut equal) = (0, 0);
        for e in 0..n_e as u32 {
            let c = complete(e);
            if c == tr || store_triples.contains(&c) {
                continue;
            }
            let s = self.logit(model, &model.params, c);
            if s > gold {
                greater += 1;
            } else if s == gold {
                equal += 1;
            }
        }
        1 + greater + equal / 2
    }
}

pub fn all_triples(store: &TripleStore) -> HashSet<Triple> {
    kbpoe::Split::ALL.iter().flat_map(|&s| store.split(s).iter().copied()).collect()
}

// ---------------------------------------------------------------- random models

pub struct RandomSetup {
    pub store: TripleStore,
    pub rules: RuleSet,
    pub table: NumericTable,
    pub spec: RelationNumericSpec,
    pub model: PoeModel,
}

pub fn random_formula(rng: &mut ChaCha8Rng, n_r: usize) -> PathFormula {
    let step = |rng: &mut ChaCha8Rng| {
        let r = RelationId(rng.gen_range(0..n_r as u32));
        if rng.gen_bool(0.5) {
            Step::forward(r)
        } else {
            Step::inverse(r)
        }
    };
    if rng.gen_bool(0.4) {
        PathFormula::OneHop(step(rng))
    } else {
        let a = step(rng);
        PathFormula::TwoHop(a, step(rng))
    }
}

/// A random store with random rules, numeric values, RBF spec and
/// parameters. Parameters are spread wider than the Glorot init so that
/// all terms matter.
pub fn random_setup(rng: &mut ChaCha8Rng, max_e: usize, max_k: usize, experts: Experts, transform: NumericTransform) -> RandomSetup {
    let n_e = rng.gen_range(2..=max_e);
    let n_r = rng.gen_range(1..=3);
    let k = rng.gen_range(1..=max_k);
    let sizes = [rng.gen_range(1..=3 * n_e), rng.gen_range(0..=n_e), rng.gen_range(0..=n_e)];
    let store = random_store(rng, n_e, n_r, sizes);

    let rules = RuleSet::from_rules(
        (0..n_r)
            .map(|_| {
                let mut fs: Vec<PathFormula> = (0..rng.gen_range(0..=4)).map(|_| random_formula(rng, n_r)).collect();
                fs.sort();
                fs.dedup();
                fs.into_iter().map(Rule::unscored).collect()
            })
            .collect(),
    );

    let mut table = NumericTable::new(n_e);
    let n_f = rng.gen_range(1..=3);
    for e in 0..n_e as u32 {
        for f in 0..n_f {
            if rng.gen_bool(0.7) {
                let v = if rng.gen_bool(0.2) { 0.0 } else { rng.gen_range(-3.0..3.0) };
                table.insert(EntityId(e), &format!("f{f}"), v).unwrap();
            }
        }
    }
    let n_f = table.num_features();
    let spec = RelationNumericSpec::from_fits(
        (0..n_r)
            .map(|_| {
                let mut ids: Vec<u32> = (0..n_f as u32).collect();
                ids.shuffle(rng);
                ids.truncate(rng.gen_range(0..=n_f));
                ids.into_iter()
                    .map(|f| RbfFit {
                        feature: FeatureId(f),
                        center: rng.gen_range(-2.0..2.0),
                        sigma: rng.gen_range(0.5..3.0),
                        support: 1,
                    })
                    .collect()
            })
            .collect(),
    );

    let mut model = PoeModel::init(
        n_e,
        &rules,
        &spec,
        ModelOptions {
            dim: k,
            experts,
            transform,
        },
        rng.gen(),
    )
    .unwrap();
    let p = &mut model.params;
    for v in p
        .entity
        .iter_mut()
        .chain(p.latent.iter_mut())
        .chain(p.relational.iter_mut().flatten())
        .chain(p.numerical.iter_mut().flatten())
    {
        *v = rng.gen_range(-1.5..1.5);
    }
    RandomSetup {
        store,
        rules,
        table,
        spec,
        model,
    }
}

pub fn random_batch(rng: &mut ChaCha8Rng, n_e: usize, n_r: usize) -> Vec<CandidateSet> {
    (0..rng.gen_range(1..=3))
        .map(|_| {
            let n = rng.gen_range(2..=6);
            let triples = random_triples(rng, n_e, n_r, n);
            CandidateSet {
                positive: rng.gen_range(0..triples.len()),
                triples,
            }
        })
        .collect()
}

// ---------------------------------------------------------------- synthetic numeric KB

pub const SYNTH_ENTITIES: usize = 200;

/// 200 entities with one attribute `a`. `r_num` holds for `(h, t)` iff
/// `a(h) - a(t)` lies in [25, 40]; 5% extra edges are random pairs outside
/// that band. Triples are split 80/10/10.
pub fn numeric_signal_kb(seed: u64) -> (TripleStore, NumericTable, Vec<f64>) {
    let mut rng = rng(seed);
    let values: Vec<f64> = (0..SYNTH_ENTITIES).map(|_| rng.gen_range(0.0..100.0)).collect();
    let mut triples = Vec::new();
    for h in 0..SYNTH_ENTITIES {
        for tl in 0..SYNTH_ENTITIES {
            let d = values[h] - values[tl];
            if (25.0..=40.0).contains(&d) {
                triples.push(t(h as u32, 0, tl as u32));
            }
        }
    }
    let planted: HashSet<Triple> = triples.iter().copied().collect();
    let noise = triples.len() / 20;
    let mut added = 0;
    while added < noise {
        let c = t(rng.gen_range(0..SYNTH_ENTITIES as u32), 0, rng.gen_range(0..SYNTH_ENTITIES as u32));
        if c.head != c.tail && !planted.contains(&c) && !triples[planted.len()..].contains(&c) {
            triples.push(c);
            added += 1;
        }
    }
    triples.shuffle(&mut rng);
    let n = triples.len();
    let (n_train, n_valid) = (n * 8 / 10, n / 10);
    let store = TripleStore::from_ids(
        SYNTH_ENTITIES,
        1,
        &triples[..n_train],
        &triples[n_train..n_train + n_valid],
        &triples[n_train + n_valid..],
    )
    .unwrap();
    let mut table = NumericTable::new(SYNTH_ENTITIES);
    for (e, &v) in values.iter().enumerate() {
        table.insert(EntityId(e as u32), "a", v).unwrap();
    }
    (store, table, values)
}

/// Mean and population standard deviation.
pub fn mean_and_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

pub fn group_by<K: Ord, V>(items: impl IntoIterator<Item = (K, V)>) -> BTreeMap<K, Vec<V>> {
    let mut out: BTreeMap<K, Vec<V>> = BTreeMap::new();
    for (k, v) in items {
        out.entry(k).or_default().push(v);
    }
    out
}
