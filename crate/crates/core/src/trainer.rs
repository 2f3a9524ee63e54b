//! Mini-batch training with negative sampling and early stopping.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::eval::evaluate;
use crate::features::FeatureExtractor;
use crate::model::{CandidateSet, Experts, ModelOptions, NumericTransform, PoeModel};
use crate::optim::{adam_step, AdamState};
use crate::store::{EntityId, Split, Triple};

/// Training hyperparameters. Defaults follow the published setup.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub num_negatives: usize,
    pub epochs: usize,
    pub validate_every: usize,
    pub embedding_dim: usize,
    pub ablation: Experts,
    pub numeric_transform: NumericTransform,
    pub seed: u64,
    pub deterministic: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 0.001,
            batch_size: 512,
            num_negatives: 500,
            epochs: 100,
            validate_every: 5,
            embedding_dim: 100,
            ablation: Experts::ALL,
            numeric_transform: NumericTransform::Rbf,
            seed: 0,
            deterministic: false,
        }
    }
}

fn parse_value<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .trim()
        .parse()
        .map_err(|_| Error::InvalidArgument(format!("bad value `{value}` for `{key}`")))
}

impl TrainConfig {
    pub const KEYS: [&'static str; 10] = [
        "learning_rate",
        "batch_size",
        "num_negatives",
        "epochs",
        "validate_every",
        "embedding_dim",
        "ablation",
        "numeric_transform",
        "seed",
        "deterministic",
    ];

    /// Sets one field from its `key=value` spelling.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        match key {
            "learning_rate" => self.learning_rate = parse_value(key, value)?,
            "batch_size" => self.batch_size = parse_value(key, value)?,
            "num_negatives" => self.num_negatives = parse_value(key, value)?,
            "epochs" => self.epochs = parse_value(key, value)?,
            "validate_every" => self.validate_every = parse_value(key, value)?,
            "embedding_dim" => self.embedding_dim = parse_value(key, value)?,
            "ablation" => self.ablation = value.trim().parse()?,
            "numeric_transform" => self.numeric_transform = value.trim().parse()?,
            "seed" => self.seed = parse_value(key, value)?,
            "deterministic" => self.deterministic = parse_value(key, value)?,
            _ => return Err(Error::InvalidArgument(format!("unknown config key `{key}`"))),
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("batch_size", self.batch_size),
            ("num_negatives", self.num_negatives),
            ("validate_every", self.validate_every),
            ("embedding_dim", self.embedding_dim),
        ];
        for (name, v) in positive {
            if v == 0 {
                return Err(Error::InvalidArgument(format!("{name} must be positive")));
            }
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::InvalidArgument("learning_rate must be positive".into()));
        }
        if self.ablation.is_empty() {
            return Err(Error::InvalidArgument("at least one expert must be enabled".into()));
        }
        Ok(())
    }

    /// `key=value` lines in [`TrainConfig::KEYS`] order.
    pub fn to_kv(&self) -> String {
        self.entries()
            .into_iter()
            .map(|(k, v)| format!("{k}={v}\n"))
            .collect()
    }

    pub fn entries(&self) -> Vec<(&'static str, String)> {
        vec![
            ("learning_rate", self.learning_rate.to_string()),
            ("batch_size", self.batch_size.to_string()),
            ("num_negatives", self.num_negatives.to_string()),
            ("epochs", self.epochs.to_string()),
            ("validate_every", self.validate_every.to_string()),
            ("embedding_dim", self.embedding_dim.to_string()),
            ("ablation", self.ablation.to_string()),
            ("numeric_transform", self.numeric_transform.to_string()),
            ("seed", self.seed.to_string()),
            ("deterministic", self.deterministic.to_string()),
        ]
    }

    pub fn model_options(&self) -> ModelOptions {
        ModelOptions {
            dim: self.embedding_dim,
            experts: self.ablation,
            transform: self.numeric_transform,
        }
    }
}

/// Parses flat `key=value` text; `#` starts a comment line.
pub fn parse_kv(text: &str) -> Result<BTreeMap<String, String>> {
    let mut out = BTreeMap::new();
    for (n, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (k, v) = line.split_once('=').ok_or_else(|| {
            Error::InvalidArgument(format!("line {}: expected key=value, got `{line}`", n + 1))
        })?;
        out.insert(k.trim().to_owned(), v.trim().to_owned());
    }
    Ok(out)
}

/// Tail- and head-corrupted candidate sets for one positive. Each holds
/// the positive at index 0 followed by `n` uniform draws with replacement.
pub fn sample_negatives<R: Rng>(
    num_entities: usize,
    positive: Triple,
    n: usize,
    rng: &mut R,
) -> Result<(CandidateSet, CandidateSet)> {
    if num_entities == 0 {
        return Err(Error::InvalidArgument("cannot sample from an empty vocabulary".into()));
    }
    if n == 0 {
        return Err(Error::InvalidArgument("need at least one negative".into()));
    }
    let mut tails = Vec::with_capacity(n + 1);
    tails.push(positive);
    for _ in 0..n {
        let e = EntityId(rng.gen_range(0..num_entities as u32));
        tails.push(Triple::new(positive.head, positive.relation, e));
    }
    let mut heads = Vec::with_capacity(n + 1);
    heads.push(positive);
    for _ in 0..n {
        let e = EntityId(rng.gen_range(0..num_entities as u32));
        heads.push(Triple::new(e, positive.relation, positive.tail));
    }
    Ok((
        CandidateSet {
            triples: tails,
            positive: 0,
        },
        CandidateSet {
            triples: heads,
            positive: 0,
        },
    ))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LogEntry {
    /// Mean loss per candidate set over the epoch.
    Epoch { epoch: usize, loss: f64 },
    /// Filtered validation MRR (percent) after `epoch`.
    Validation { epoch: usize, mrr: f64 },
}

impl fmt::Display for LogEntry {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            LogEntry::Epoch { epoch, loss } => write!(f, "{epoch}\t{loss}"),
            LogEntry::Validation { epoch, mrr } => write!(f, "validation\t{epoch}\t{mrr}"),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainingLog {
    pub entries: Vec<LogEntry>,
}

impl TrainingLog {
    pub fn losses(&self) -> Vec<f64> {
        self.entries
            .iter()
            .filter_map(|e| match e {
                LogEntry::Epoch { loss, .. } => Some(*loss),
                _ => None,
            })
            .collect()
    }

    pub fn validation_mrrs(&self) -> Vec<f64> {
        self.entries
            .iter()
            .filter_map(|e| match e {
                LogEntry::Validation { mrr, .. } => Some(*mrr),
                _ => None,
            })
            .collect()
    }
}

impl fmt::Display for TrainingLog {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for e in &self.entries {
            writeln!(f, "{e}")?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopDecision {
    Improved,
    Continue,
    Stop,
}

/// Stops at the first validation score below the best seen so far.
#[derive(Debug, Clone, Default)]
pub struct EarlyStopping {
    best: Option<f64>,
}

impl EarlyStopping {
    pub fn observe(&mut self, score: f64) -> StopDecision {
        match self.best {
            None => {
                self.best = Some(score);
                StopDecision::Improved
            }
            Some(b) if score > b => {
                self.best = Some(score);
                StopDecision::Improved
            }
            Some(b) if score < b => StopDecision::Stop,
            Some(_) => StopDecision::Continue,
        }
    }

    pub fn best(&self) -> Option<f64> {
        self.best
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    /// Parameters with the best validation MRR (or the last ones when no
    /// validation ran).
    pub model: PoeModel,
    pub best_mrr: Option<f64>,
    pub best_epoch: usize,
    pub epochs_run: usize,
    pub log: TrainingLog,
    /// Optimizer state at the end of training.
    pub optimizer: AdamState,
}

/// Trains with default progress handling.
pub fn train(extractor: &FeatureExtractor<'_>, config: &TrainConfig) -> Result<TrainOutcome> {
    train_with(extractor, config, |_| {})
}

/// Trains a fresh model, reporting every log entry to `on_entry`.
///
/// Each positive contributes a tail-corrupted and a head-corrupted
/// cross-entropy term. Validation runs every `validate_every` epochs and
/// after the last one; training stops at the first MRR decrease.
pub fn train_with(
    extractor: &FeatureExtractor<'_>,
    config: &TrainConfig,
    mut on_entry: impl FnMut(&LogEntry),
) -> Result<TrainOutcome> {
    config.validate()?;
    let store = extractor.store;
    let mut model = PoeModel::init(
        store.num_entities(),
        extractor.rules,
        extractor.spec,
        config.model_options(),
        config.seed,
    )?;
    model.check_compatible(store, extractor.rules, extractor.spec)?;
    let mut optimizer = AdamState::new(&model.params);
    let mut log = TrainingLog::default();
    let mut best = (model.clone(), None, 0usize);
    let mut stopper = EarlyStopping::default();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed.wrapping_add(0x9e37_79b9_7f4a_7c15));
    let train = store.train();
    let valid = store.split(Split::Valid);
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut epochs_run = 0;

    for epoch in 1..=config.epochs {
        order.shuffle(&mut rng);
        let mut total = 0.0;
        let mut sets = 0usize;
        for chunk in order.chunks(config.batch_size) {
            let mut batch = Vec::with_capacity(2 * chunk.len());
            for &i in chunk {
                let (tails, heads) = sample_negatives(store.num_entities(), train[i], config.num_negatives, &mut rng)?;
                batch.push(tails);
                batch.push(heads);
            }
            let (loss, grads) = if config.deterministic {
                model.loss_and_gradients(extractor, &batch)?
            } else {
                model.loss_and_gradients_unordered(extractor, &batch)?
            };
            if !loss.is_finite() {
                return Err(Error::NonFinite(format!("loss at epoch {epoch}")));
            }
            adam_step(&mut model.params, &grads, &mut optimizer, config.learning_rate)?;
            total += loss;
            sets += batch.len();
        }
        epochs_run = epoch;
        let entry = LogEntry::Epoch {
            epoch,
            loss: if sets == 0 { 0.0 } else { total / sets as f64 },
        };
        on_entry(&entry);
        log.entries.push(entry);

        if valid.is_empty() || !(epoch % config.validate_every == 0 || epoch == config.epochs) {
            continue;
        }
        let mrr = evaluate(&model, extractor, valid)?.mrr;
        let entry = LogEntry::Validation { epoch, mrr };
        on_entry(&entry);
        log.entries.push(entry);
        match stopper.observe(mrr) {
            StopDecision::Improved => best = (model.clone(), Some(mrr), epoch),
            StopDecision::Continue => {}
            StopDecision::Stop => break,
        }
    }

    let (model, best_mrr, best_epoch) = if best.1.is_some() {
        best
    } else {
        (model, None, epochs_run)
    };
    Ok(TrainOutcome {
        model,
        best_mrr,
        best_epoch,
        epochs_run,
        log,
        optimizer,
    })
}
