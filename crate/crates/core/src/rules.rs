//! Path-rule mining and binary relational feature vectors.
//!
//! For every relation `r` the miner collects the bodies of horn rules
//! `body => (x, r, y)` whose head coverage clears a threshold. A body is a
//! path of one or two steps between the head and the tail, each step
//! traversing a relation forward or backward. The bodies kept for `r`
//! define the binary feature vector used by the relational expert.

use std::cmp::Ordering;
use std::collections::{HashMap, HashSet};
use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::store::{EntityId, RelationId, Triple, TripleStore};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Direction {
    /// The step `a -> b` uses the edge `(a, r, b)`.
    Forward,
    /// The step `a -> b` uses the edge `(b, r, a)`.
    Inverse,
}

impl Direction {
    fn symbol(self) -> char {
        match self {
            Direction::Forward => '+',
            Direction::Inverse => '-',
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Step {
    pub relation: RelationId,
    pub direction: Direction,
}

impl Step {
    pub fn forward(relation: RelationId) -> Self {
        Step {
            relation,
            direction: Direction::Forward,
        }
    }

    pub fn inverse(relation: RelationId) -> Self {
        Step {
            relation,
            direction: Direction::Inverse,
        }
    }

    /// Entities reachable from `from` in one step.
    fn targets<'a>(&self, store: &'a TripleStore, from: EntityId) -> &'a [EntityId] {
        match self.direction {
            Direction::Forward => store.neighbors_out(from, self.relation),
            Direction::Inverse => store.neighbors_in(from, self.relation),
        }
    }

    /// Entities that reach `to` in one step.
    fn sources<'a>(&self, store: &'a TripleStore, to: EntityId) -> &'a [EntityId] {
        match self.direction {
            Direction::Forward => store.neighbors_in(to, self.relation),
            Direction::Inverse => store.neighbors_out(to, self.relation),
        }
    }

    fn connects(&self, store: &TripleStore, from: EntityId, to: EntityId) -> bool {
        match self.direction {
            Direction::Forward => store.exists_train(from, self.relation, to),
            Direction::Inverse => store.exists_train(to, self.relation, from),
        }
    }
}

/// A rule body: a one- or two-step path from the head entity to the tail.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum PathFormula {
    OneHop(Step),
    TwoHop(Step, Step),
}

impl PathFormula {
    fn sort_key(&self) -> (Vec<RelationId>, Vec<Direction>) {
        match *self {
            PathFormula::OneHop(s) => (vec![s.relation], vec![s.direction]),
            PathFormula::TwoHop(a, b) => {
                (vec![a.relation, b.relation], vec![a.direction, b.direction])
            }
        }
    }

    /// Evaluates the formula between `head` and `tail` on the training split.
    ///
    /// `target` is the relation whose feature vector is being computed: a
    /// forward one-hop over `target` would test the very edge being
    /// predicted, so it is always false.
    pub fn holds(&self, store: &TripleStore, target: RelationId, head: EntityId, tail: EntityId) -> bool {
        match *self {
            PathFormula::OneHop(s) => {
                if s.relation == target && s.direction == Direction::Forward {
                    return false;
                }
                s.connects(store, head, tail)
            }
            PathFormula::TwoHop(first, second) => {
                let left = first.targets(store, head);
                let right = second.sources(store, tail);
                if left.len() <= right.len() {
                    left.iter().any(|&x| second.connects(store, x, tail))
                } else {
                    right.iter().any(|&x| first.connects(store, head, x))
                }
            }
        }
    }

    pub fn display<'a>(&'a self, store: &'a TripleStore) -> FormulaDisplay<'a> {
        FormulaDisplay {
            formula: self,
            store,
        }
    }
}

impl Ord for PathFormula {
    fn cmp(&self, other: &Self) -> Ordering {
        self.sort_key().cmp(&other.sort_key())
    }
}

impl PartialOrd for PathFormula {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Renders a body in the rule-file syntax, e.g. `born_in+,capital_of-`.
pub struct FormulaDisplay<'a> {
    formula: &'a PathFormula,
    store: &'a TripleStore,
}

impl fmt::Display for FormulaDisplay<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let step = |f: &mut fmt::Formatter<'_>, s: &Step| {
            write!(
                f,
                "{}{}",
                self.store.relation_label(s.relation),
                s.direction.symbol()
            )
        };
        match self.formula {
            PathFormula::OneHop(s) => step(f, s),
            PathFormula::TwoHop(a, b) => {
                step(f, a)?;
                f.write_str(",")?;
                step(f, b)
            }
        }
    }
}

/// A mined or supplied rule body for one head relation.
#[derive(Debug, Clone, PartialEq)]
pub struct Rule {
    pub formula: PathFormula,
    /// Head coverage, when known.
    pub coverage: Option<f64>,
    /// Number of head-relation training pairs the body holds for.
    pub support: Option<usize>,
    /// Number of training triples of the head relation.
    pub head_count: Option<usize>,
}

impl Rule {
    pub fn unscored(formula: PathFormula) -> Self {
        Rule {
            formula,
            coverage: None,
            support: None,
            head_count: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MiningConfig {
    pub max_body_len: usize,
    pub min_head_coverage: f64,
    pub min_head_support: usize,
}

impl Default for MiningConfig {
    fn default() -> Self {
        MiningConfig {
            max_body_len: 2,
            min_head_coverage: 0.01,
            min_head_support: 1,
        }
    }
}

impl MiningConfig {
    fn validate(&self) -> Result<()> {
        if !(1..=2).contains(&self.max_body_len) {
            return Err(Error::InvalidArgument(format!(
                "max_body_len must be 1 or 2, got {}",
                self.max_body_len
            )));
        }
        if !(self.min_head_coverage > 0.0 && self.min_head_coverage <= 1.0) {
            return Err(Error::InvalidArgument(format!(
                "min_head_coverage must lie in (0, 1], got {}",
                self.min_head_coverage
            )));
        }
        if self.min_head_support == 0 {
            return Err(Error::InvalidArgument(
                "min_head_support must be at least 1".into(),
            ));
        }
        Ok(())
    }
}

/// Per-relation ordered rule bodies; the order fixes feature indexes.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct RuleSet {
    per_relation: Vec<Vec<Rule>>,
}

impl RuleSet {
    pub fn empty(num_relations: usize) -> Self {
        RuleSet {
            per_relation: vec![Vec::new(); num_relations],
        }
    }

    pub fn from_rules(per_relation: Vec<Vec<Rule>>) -> Self {
        RuleSet { per_relation }
    }

    pub fn num_relations(&self) -> usize {
        self.per_relation.len()
    }

    pub fn rules(&self, relation: RelationId) -> &[Rule] {
        self.per_relation
            .get(relation.index())
            .map(Vec::as_slice)
            .unwrap_or(&[])
    }

    pub fn feature_len(&self, relation: RelationId) -> usize {
        self.rules(relation).len()
    }

    pub fn total(&self) -> usize {
        self.per_relation.iter().map(Vec::len).sum()
    }

    /// Writes one rule per line: `head<TAB>body[<TAB>coverage<TAB>support<TAB>head_count]`.
    pub fn save(&self, store: &TripleStore, path: &Path) -> Result<()> {
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut out = BufWriter::new(file);
        self.write_to(store, &mut out).map_err(|e| Error::io(path, e))?;
        out.flush().map_err(|e| Error::io(path, e))
    }

    pub fn write_to(&self, store: &TripleStore, out: &mut impl Write) -> std::io::Result<()> {
        for (r, rules) in self.per_relation.iter().enumerate() {
            let head = store.relation_label(RelationId(r as u32));
            for rule in rules {
                write!(out, "{head}\t{}", rule.formula.display(store))?;
                if let Some(c) = rule.coverage {
                    write!(out, "\t{c}")?;
                    if let (Some(s), Some(n)) = (rule.support, rule.head_count) {
                        write!(out, "\t{s}\t{n}")?;
                    }
                }
                writeln!(out)?;
            }
        }
        Ok(())
    }

    /// Reads a rule file, resolving labels against the store's relations.
    pub fn load(store: &TripleStore, path: &Path) -> Result<Self> {
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        Self::read_from(store, BufReader::new(file), path)
    }

    pub fn read_from(store: &TripleStore, reader: impl BufRead, path: &Path) -> Result<Self> {
        let mut set = RuleSet::empty(store.num_relations());
        for (n, line) in reader.lines().enumerate() {
            let line = line.map_err(|e| Error::io(path, e))?;
            let line = line.strip_suffix('\r').unwrap_or(&line);
            if line.is_empty() {
                continue;
            }
            let lineno = n + 1;
            let cols: Vec<&str> = line.split('\t').collect();
            if !matches!(cols.len(), 2 | 3 | 5) {
                return Err(Error::parse(
                    path,
                    lineno,
                    format!("expected 2, 3 or 5 columns, found {}", cols.len()),
                ));
            }
            let head = store.relation(cols[0])?;
            let formula = parse_body(store, cols[1]).map_err(|e| match e {
                Error::InvalidArgument(m) => Error::parse(path, lineno, m),
                other => other,
            })?;
            let mut rule = Rule::unscored(formula);
            if cols.len() >= 3 {
                let c: f64 = cols[2]
                    .parse()
                    .map_err(|_| Error::parse(path, lineno, format!("bad coverage `{}`", cols[2])))?;
                rule.coverage = Some(c);
            }
            if cols.len() == 5 {
                let count = |s: &str| {
                    s.parse::<usize>()
                        .map_err(|_| Error::parse(path, lineno, format!("bad count `{s}`")))
                };
                rule.support = Some(count(cols[3])?);
                rule.head_count = Some(count(cols[4])?);
            }
            set.per_relation[head.index()].push(rule);
        }
        Ok(set)
    }
}

fn parse_step(store: &TripleStore, token: &str) -> Result<Step> {
    let direction = match token.chars().last() {
        Some('+') => Direction::Forward,
        Some('-') => Direction::Inverse,
        _ => {
            return Err(Error::InvalidArgument(format!(
                "step `{token}` must end in `+` or `-`"
            )))
        }
    };
    let label = &token[..token.len() - 1];
    if label.is_empty() {
        return Err(Error::InvalidArgument(format!("empty relation in step `{token}`")));
    }
    Ok(Step {
        relation: store.relation(label)?,
        direction,
    })
}

fn parse_body(store: &TripleStore, body: &str) -> Result<PathFormula> {
    let parts: Vec<&str> = body.split(',').collect();
    match parts.as_slice() {
        [a] => Ok(PathFormula::OneHop(parse_step(store, a)?)),
        [a, b] => Ok(PathFormula::TwoHop(
            parse_step(store, a)?,
            parse_step(store, b)?,
        )),
        _ => Err(Error::InvalidArgument(format!(
            "body `{body}` must have one or two steps"
        ))),
    }
}

/// Bodies that hold for the training pair `(head, tail)` of relation `target`.
fn bodies_for_pair(
    store: &TripleStore,
    target: RelationId,
    head: EntityId,
    tail: EntityId,
    max_body_len: usize,
    found: &mut HashSet<PathFormula>,
) {
    found.clear();
    // (head, s, tail) and (tail, s, head)
    for &(s, x) in store.outgoing(head) {
        if x == tail && s != target {
            found.insert(PathFormula::OneHop(Step::forward(s)));
        }
    }
    for &(s, x) in store.incoming(head) {
        if x == tail {
            found.insert(PathFormula::OneHop(Step::inverse(s)));
        }
    }
    if max_body_len < 2 {
        return;
    }
    // First steps out of head, keyed by the intermediate entity.
    let mut first: HashMap<EntityId, Vec<Step>> = HashMap::new();
    for &(s, x) in store.outgoing(head) {
        first.entry(x).or_default().push(Step::forward(s));
    }
    for &(s, x) in store.incoming(head) {
        first.entry(x).or_default().push(Step::inverse(s));
    }
    // Second steps into tail: (x, s, tail) is forward, (tail, s, x) inverse.
    let seconds = store
        .incoming(tail)
        .iter()
        .map(|&(s, x)| (x, Step::forward(s)))
        .chain(store.outgoing(tail).iter().map(|&(s, x)| (x, Step::inverse(s))));
    for (x, second) in seconds {
        if let Some(firsts) = first.get(&x) {
            for &f in firsts {
                found.insert(PathFormula::TwoHop(f, second));
            }
        }
    }
}

fn mine_relation(store: &TripleStore, relation: RelationId, config: &MiningConfig) -> Vec<Rule> {
    let triples = store.train_of(relation);
    if triples.is_empty() || triples.len() < config.min_head_support {
        return Vec::new();
    }
    let mut counts: HashMap<PathFormula, usize> = HashMap::new();
    let mut found = HashSet::new();
    for t in triples {
        bodies_for_pair(store, relation, t.head, t.tail, config.max_body_len, &mut found);
        for f in &found {
            *counts.entry(*f).or_default() += 1;
        }
    }
    let head_count = triples.len();
    let mut rules: Vec<Rule> = counts
        .into_iter()
        .filter_map(|(formula, support)| {
            let coverage = support as f64 / head_count as f64;
            (support >= config.min_head_support && coverage >= config.min_head_coverage).then_some(
                Rule {
                    formula,
                    coverage: Some(coverage),
                    support: Some(support),
                    head_count: Some(head_count),
                },
            )
        })
        .collect();
    rules.sort_by(|a, b| {
        b.support
            .cmp(&a.support)
            .then_with(|| a.formula.cmp(&b.formula))
    });
    rules
}

/// Mines rule bodies for every relation from the training split.
///
/// Counting is exact. Relations are processed in parallel.
pub fn mine_rules(store: &TripleStore, config: &MiningConfig) -> Result<RuleSet> {
    config.validate()?;
    let per_relation = store
        .relation_ids()
        .collect::<Vec<_>>()
        .into_par_iter()
        .map(|r| mine_relation(store, r, config))
        .collect();
    Ok(RuleSet { per_relation })
}

/// Binary feature vector of `relation`'s rule bodies for the pair `(head, tail)`.
pub fn relational_vector(
    store: &TripleStore,
    rules: &RuleSet,
    relation: RelationId,
    head: EntityId,
    tail: EntityId,
) -> Result<Vec<bool>> {
    store.check_entity(head)?;
    store.check_entity(tail)?;
    Ok(rules
        .rules(relation)
        .iter()
        .map(|rule| rule.formula.holds(store, relation, head, tail))
        .collect())
}

/// Same as [`relational_vector`] for a whole triple.
pub fn relational_vector_for(store: &TripleStore, rules: &RuleSet, triple: Triple) -> Result<Vec<bool>> {
    relational_vector(store, rules, triple.relation, triple.head, triple.tail)
}
