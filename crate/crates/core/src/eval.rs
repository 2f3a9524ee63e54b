//! Filtered ranking evaluation.
//!
//! A query `(h, r, ?)` or `(?, r, t)` is answered by scoring every entity
//! in the vocabulary as the missing slot. Candidates that form a known true
//! triple in any split, other than the gold answer itself, are dropped
//! before ranking. Ties count half: the rank is
//! `1 + #greater + floor(#equal / 2)`.

use std::collections::HashMap;
use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::features::FeatureExtractor;
use crate::model::PoeModel;
use crate::store::{EntityId, RelationId, Triple, TripleStore};

pub const HITS_AT: [usize; 4] = [1, 3, 5, 10];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum QueryDirection {
    /// `(h, r, ?)`
    Tail,
    /// `(?, r, t)`
    Head,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct CompletionQuery {
    pub direction: QueryDirection,
    pub fixed: EntityId,
    pub relation: RelationId,
    pub gold: EntityId,
}

impl CompletionQuery {
    pub fn tail(triple: Triple) -> Self {
        CompletionQuery {
            direction: QueryDirection::Tail,
            fixed: triple.head,
            relation: triple.relation,
            gold: triple.tail,
        }
    }

    pub fn head(triple: Triple) -> Self {
        CompletionQuery {
            direction: QueryDirection::Head,
            fixed: triple.tail,
            relation: triple.relation,
            gold: triple.head,
        }
    }

    /// The triple obtained by filling the open slot with `candidate`.
    pub fn complete(&self, candidate: EntityId) -> Triple {
        match self.direction {
            QueryDirection::Tail => Triple::new(self.fixed, self.relation, candidate),
            QueryDirection::Head => Triple::new(candidate, self.relation, self.fixed),
        }
    }
}

/// Tail and head queries for every triple, in that order.
pub fn queries_for(triples: &[Triple]) -> Vec<CompletionQuery> {
    triples
        .iter()
        .flat_map(|&t| [CompletionQuery::tail(t), CompletionQuery::head(t)])
        .collect()
}

/// Total logit of every entity as the query's open slot, indexed by entity id.
pub fn score_candidates(
    model: &PoeModel,
    extractor: &FeatureExtractor<'_>,
    direction: QueryDirection,
    fixed: EntityId,
    relation: RelationId,
) -> Result<Vec<f64>> {
    let probe = CompletionQuery {
        direction,
        fixed,
        relation,
        gold: fixed,
    };
    extractor
        .store
        .entity_ids()
        .map(|e| model.logit(extractor, probe.complete(e)))
        .collect()
}

fn rank_from_scores(store: &TripleStore, query: &CompletionQuery, scores: &[f64], filtered: bool) -> usize {
    let gold_score = scores[query.gold.index()];
    let mut greater = 0usize;
    let mut equal = 0usize;
    for (i, &s) in scores.iter().enumerate() {
        let e = EntityId(i as u32);
        if e == query.gold {
            continue;
        }
        if filtered {
            let t = query.complete(e);
            if store.exists(t.head, t.relation, t.tail) {
                continue;
            }
        }
        if s > gold_score {
            greater += 1;
        } else if s == gold_score {
            equal += 1;
        }
    }
    1 + greater + equal / 2
}

/// Filtered rank of the gold answer.
pub fn rank_query(model: &PoeModel, extractor: &FeatureExtractor<'_>, query: &CompletionQuery) -> Result<usize> {
    let scores = score_candidates(model, extractor, query.direction, query.fixed, query.relation)?;
    Ok(rank_from_scores(extractor.store, query, &scores, true))
}

/// Rank without removing other known answers.
pub fn rank_query_raw(model: &PoeModel, extractor: &FeatureExtractor<'_>, query: &CompletionQuery) -> Result<usize> {
    let scores = score_candidates(model, extractor, query.direction, query.fixed, query.relation)?;
    Ok(rank_from_scores(extractor.store, query, &scores, false))
}

/// Rank-based metrics. MRR and Hits are percentages.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Metrics {
    pub count: usize,
    pub mean_rank: f64,
    pub mrr: f64,
    /// Hits@1, @3, @5, @10.
    pub hits: [f64; 4],
}

impl Metrics {
    pub fn from_ranks(ranks: &[usize]) -> Self {
        let n = ranks.len();
        if n == 0 {
            return Metrics {
                count: 0,
                mean_rank: 0.0,
                mrr: 0.0,
                hits: [0.0; 4],
            };
        }
        let nf = n as f64;
        let mean_rank = ranks.iter().map(|&r| r as f64).sum::<f64>() / nf;
        let mrr = 100.0 * ranks.iter().map(|&r| 1.0 / r as f64).sum::<f64>() / nf;
        let hits = HITS_AT.map(|k| 100.0 * ranks.iter().filter(|&&r| r <= k).count() as f64 / nf);
        Metrics {
            count: n,
            mean_rank,
            mrr,
            hits,
        }
    }

    pub fn hits_at(&self, k: usize) -> Option<f64> {
        HITS_AT.iter().position(|&h| h == k).map(|i| self.hits[i])
    }

    /// Machine-readable `key=value` lines.
    pub fn key_values(&self) -> String {
        let mut out = format!(
            "queries={}\nmr={}\nmrr={}\n",
            self.count, self.mean_rank, self.mrr
        );
        for (k, h) in HITS_AT.iter().zip(self.hits) {
            out.push_str(&format!("hits@{k}={h}\n"));
        }
        out
    }
}

impl fmt::Display for Metrics {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(
            f,
            "{:>8} {:>9} {:>7} {:>7} {:>7} {:>7} {:>8}",
            "queries", "MR", "MRR", "H@1", "H@3", "H@5", "H@10"
        )?;
        write!(
            f,
            "{:>8} {:>9.1} {:>7.1} {:>7.1} {:>7.1} {:>7.1} {:>8.1}",
            self.count, self.mean_rank, self.mrr, self.hits[0], self.hits[1], self.hits[2], self.hits[3]
        )
    }
}

/// Filtered ranks of every query, in query order.
pub fn rank_queries(
    model: &PoeModel,
    extractor: &FeatureExtractor<'_>,
    queries: &[CompletionQuery],
) -> Result<Vec<usize>> {
    queries
        .par_iter()
        .map(|q| rank_query(model, extractor, q))
        .collect()
}

pub fn evaluate_queries(
    model: &PoeModel,
    extractor: &FeatureExtractor<'_>,
    queries: &[CompletionQuery],
) -> Result<Metrics> {
    Ok(Metrics::from_ranks(&rank_queries(model, extractor, queries)?))
}

/// Metrics over both query directions of every triple.
pub fn evaluate(model: &PoeModel, extractor: &FeatureExtractor<'_>, triples: &[Triple]) -> Result<Metrics> {
    if triples.is_empty() {
        return Err(Error::InvalidArgument("cannot evaluate an empty split".into()));
    }
    evaluate_queries(model, extractor, &queries_for(triples))
}

/// Average precision of a ranking by descending score.
///
/// Tied scores form one block; every positive in a block is credited with
/// the precision at the end of the block.
pub fn pr_auc_scores(scores: &[f64], labels: &[bool]) -> Result<f64> {
    if scores.len() != labels.len() {
        return Err(Error::DimensionMismatch {
            what: "pr-auc labels".into(),
            expected: scores.len(),
            got: labels.len(),
        });
    }
    let positives = labels.iter().filter(|&&l| l).count();
    if positives == 0 {
        return Err(Error::InvalidArgument("ground truth has no positive entity".into()));
    }
    if scores.iter().any(|s| s.is_nan()) {
        return Err(Error::NonFinite("pr-auc scores".into()));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].partial_cmp(&scores[a]).unwrap());
    let mut area = 0.0;
    let mut tp = 0usize;
    let mut seen = 0usize;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        let mut block_pos = 0usize;
        while j < order.len() && scores[order[j]] == scores[order[i]] {
            if labels[order[j]] {
                block_pos += 1;
            }
            j += 1;
        }
        tp += block_pos;
        seen += j - i;
        area += block_pos as f64 * (tp as f64 / seen as f64);
        i = j;
    }
    Ok(area / positives as f64)
}

/// PR-AUC of one completion query against a complete ground truth. The
/// candidates are exactly the labelled entities; nothing is filtered.
pub fn pr_auc(
    model: &PoeModel,
    extractor: &FeatureExtractor<'_>,
    direction: QueryDirection,
    fixed: EntityId,
    relation: RelationId,
    gold: &[(EntityId, bool)],
) -> Result<f64> {
    if gold.is_empty() {
        return Err(Error::InvalidArgument("empty ground truth".into()));
    }
    let probe = CompletionQuery {
        direction,
        fixed,
        relation,
        gold: fixed,
    };
    let scores = gold
        .iter()
        .map(|&(e, _)| {
            extractor.store.check_entity(e)?;
            model.logit(extractor, probe.complete(e))
        })
        .collect::<Result<Vec<_>>>()?;
    let labels: Vec<bool> = gold.iter().map(|&(_, l)| l).collect();
    pr_auc_scores(&scores, &labels)
}

/// Reads `entity<TAB>{1|0}` lines.
pub fn load_ground_truth(store: &TripleStore, path: &Path) -> Result<Vec<(EntityId, bool)>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (n, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        let line = line.strip_suffix('\r').unwrap_or(&line);
        if line.is_empty() {
            continue;
        }
        let (label, flag) = line
            .split_once('\t')
            .ok_or_else(|| Error::parse(path, n + 1, "expected `entity<TAB>{1|0}`"))?;
        let positive = match flag {
            "1" => true,
            "0" => false,
            other => return Err(Error::parse(path, n + 1, format!("bad label `{other}`"))),
        };
        out.push((store.entity(label)?, positive));
    }
    Ok(out)
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct CardinalitySplit {
    pub one: Vec<CompletionQuery>,
    pub many: Vec<CompletionQuery>,
}

/// A query is `One` when exactly one entity completes it across all splits.
pub fn split_by_cardinality(store: &TripleStore, queries: &[CompletionQuery]) -> CardinalitySplit {
    let mut tails: HashMap<(EntityId, RelationId), usize> = HashMap::new();
    let mut heads: HashMap<(EntityId, RelationId), usize> = HashMap::new();
    let mut seen = std::collections::HashSet::new();
    for split in crate::store::Split::ALL {
        for t in store.split(split) {
            if !seen.insert(*t) {
                continue;
            }
            *tails.entry((t.head, t.relation)).or_default() += 1;
            *heads.entry((t.tail, t.relation)).or_default() += 1;
        }
    }
    let mut out = CardinalitySplit::default();
    for &q in queries {
        let count = match q.direction {
            QueryDirection::Tail => tails.get(&(q.fixed, q.relation)),
            QueryDirection::Head => heads.get(&(q.fixed, q.relation)),
        }
        .copied()
        .unwrap_or(0);
        if count == 1 {
            out.one.push(q);
        } else {
            out.many.push(q);
        }
    }
    out
}
