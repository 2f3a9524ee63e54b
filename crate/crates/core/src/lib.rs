//! Knowledge base completion with a product of experts over latent
//! (DistMult embeddings), relational (mined path rules) and numerical
//! (RBF-transformed attribute differences) features.
//!
//! The pipeline is: load a [`TripleStore`], mine a [`RuleSet`], fit a
//! [`RelationNumericSpec`] from a [`NumericTable`], [`train`] a
//! [`PoeModel`] and [`evaluate`] it with filtered ranking metrics.

pub mod checkpoint;
pub mod error;
pub mod eval;
pub mod features;
pub mod model;
pub mod numeric;
pub mod optim;
pub mod rules;
pub mod store;
pub mod trainer;

pub use checkpoint::Checkpoint;
pub use error::{Error, Result};
pub use eval::{evaluate, rank_query, CompletionQuery, Metrics, QueryDirection};
pub use features::{FeatureExtractor, PairFeatures};
pub use model::{CandidateSet, Experts, Gradients, ModelOptions, NumericTransform, ParamBlock, Params, PoeModel};
pub use numeric::{load_numeric, NumericTable, RelationNumericSpec};
pub use optim::AdamState;
pub use rules::{mine_rules, MiningConfig, PathFormula, RuleSet};
pub use store::{load_triples, EntityId, RelationId, Split, Triple, TripleStore};
pub use trainer::{train, TrainConfig, TrainOutcome};
