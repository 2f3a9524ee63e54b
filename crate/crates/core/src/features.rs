//! Bundles the training graph, rule set and numeric spec so that the model
//! can ask for the features of any candidate triple.

use crate::error::Result;
use crate::model::Experts;
use crate::numeric::{numeric_diff_vector, NumericDiff, NumericTable, RelationNumericSpec};
use crate::rules::{relational_vector_for, RuleSet};
use crate::store::{Triple, TripleStore};

/// Features of one `(head, tail)` pair under one relation.
#[derive(Debug, Clone, PartialEq)]
pub struct PairFeatures {
    pub relational: Vec<bool>,
    pub numeric: NumericDiff,
}

impl PairFeatures {
    pub fn none() -> Self {
        PairFeatures {
            relational: Vec::new(),
            numeric: NumericDiff::empty(),
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct FeatureExtractor<'a> {
    pub store: &'a TripleStore,
    pub rules: &'a RuleSet,
    pub table: &'a NumericTable,
    pub spec: &'a RelationNumericSpec,
}

impl<'a> FeatureExtractor<'a> {
    pub fn new(
        store: &'a TripleStore,
        rules: &'a RuleSet,
        table: &'a NumericTable,
        spec: &'a RelationNumericSpec,
    ) -> Self {
        FeatureExtractor {
            store,
            rules,
            table,
            spec,
        }
    }

    /// Computes only the feature groups the enabled experts read; the
    /// others are left empty.
    pub fn extract(&self, triple: Triple, experts: Experts) -> Result<PairFeatures> {
        let relational = if experts.relational {
            relational_vector_for(self.store, self.rules, triple)?
        } else {
            Vec::new()
        };
        let numeric = if experts.numerical {
            numeric_diff_vector(self.table, self.spec, triple.relation, triple.head, triple.tail)
        } else {
            NumericDiff::empty()
        };
        Ok(PairFeatures {
            relational,
            numeric,
        })
    }
}
