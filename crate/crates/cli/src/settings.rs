use std::collections::BTreeSet;
use std::path::Path;

use kbpoe::numeric::{DEFAULT_SIGMA_FLOOR, DEFAULT_TAU};
use kbpoe::trainer::parse_kv;
use kbpoe::{MiningConfig, TrainConfig};

use crate::args::{FitArgs, GlobalArgs, MiningArgs, TrainArgs};
use crate::failure::Failure;

const EXTRA_KEYS: [&str; 6] = [
    "min_head_coverage",
    "min_head_support",
    "max_body_len",
    "tau",
    "sigma_floor",
    "threads",
];

/// Effective configuration: defaults, then the config file, then flags.
#[derive(Debug, Clone)]
pub struct Settings {
    pub train: TrainConfig,
    pub mining: MiningConfig,
    pub tau: f64,
    pub sigma_floor: f64,
    pub threads: Option<usize>,
    /// Keys given explicitly by the config file or a flag.
    pub explicit: BTreeSet<String>,
}

impl Default for Settings {
    fn default() -> Self {
        Settings {
            train: TrainConfig::default(),
            mining: MiningConfig::default(),
            tau: DEFAULT_TAU,
            sigma_floor: DEFAULT_SIGMA_FLOOR,
            threads: None,
            explicit: BTreeSet::new(),
        }
    }
}

fn parse<T: std::str::FromStr>(key: &str, value: &str) -> Result<T, Failure> {
    value
        .parse()
        .map_err(|_| Failure::data(format!("bad value `{value}` for `{key}`")))
}

impl Settings {
    pub fn is_key(key: &str) -> bool {
        TrainConfig::KEYS.contains(&key) || EXTRA_KEYS.contains(&key)
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<(), Failure> {
        match key {
            "min_head_coverage" => self.mining.min_head_coverage = parse(key, value)?,
            "min_head_support" => self.mining.min_head_support = parse(key, value)?,
            "max_body_len" => self.mining.max_body_len = parse(key, value)?,
            "tau" => self.tau = parse(key, value)?,
            "sigma_floor" => self.sigma_floor = parse(key, value)?,
            "threads" => self.threads = Some(parse(key, value)?),
            _ if TrainConfig::KEYS.contains(&key) => self.train.set(key, value)?,
            _ => return Err(Failure::usage(format!("unknown config key `{key}`"))),
        }
        self.explicit.insert(key.to_owned());
        Ok(())
    }

    pub fn load_file(&mut self, path: &Path) -> Result<(), Failure> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Failure::data(format!("cannot read {}: {e}", path.display())))?;
        for (key, value) in parse_kv(&text)? {
            if !Self::is_key(&key) {
                return Err(Failure::usage(format!(
                    "unknown config key `{key}` in {}",
                    path.display()
                )));
            }
            self.set(&key, &value)?;
        }
        Ok(())
    }

    pub fn resolve(
        global: &GlobalArgs,
        mining: Option<&MiningArgs>,
        fit: Option<&FitArgs>,
        train: Option<&TrainArgs>,
    ) -> Result<Self, Failure> {
        let mut s = Settings::default();
        if let Some(path) = &global.config {
            s.load_file(path)?;
        }
        for (key, value) in flag_overrides(global, mining, fit, train) {
            s.set(key, &value)?;
        }
        s.validate()?;
        Ok(s)
    }

    fn validate(&self) -> Result<(), Failure> {
        self.train.validate()?;
        if self.threads == Some(0) {
            return Err(Failure::data("threads must be positive"));
        }
        Ok(())
    }

    /// Every effective setting as `key=value`, in a fixed order.
    pub fn entries(&self) -> Vec<(&'static str, String)> {
        let mut out = self.train.entries();
        out.extend([
            (
                "min_head_coverage",
                self.mining.min_head_coverage.to_string(),
            ),
            ("min_head_support", self.mining.min_head_support.to_string()),
            ("max_body_len", self.mining.max_body_len.to_string()),
            ("tau", self.tau.to_string()),
            ("sigma_floor", self.sigma_floor.to_string()),
            (
                "threads",
                self.threads
                    .map_or_else(|| "auto".to_owned(), |t| t.to_string()),
            ),
        ]);
        out
    }

    /// `# key=value` lines for log headers.
    pub fn echo(&self) -> String {
        self.entries()
            .into_iter()
            .map(|(k, v)| format!("# {k}={v}\n"))
            .collect()
    }
}

fn flag_overrides(
    global: &GlobalArgs,
    mining: Option<&MiningArgs>,
    fit: Option<&FitArgs>,
    train: Option<&TrainArgs>,
) -> Vec<(&'static str, String)> {
    fn push<T: ToString>(out: &mut Vec<(&'static str, String)>, key: &'static str, v: Option<T>) {
        if let Some(v) = v {
            out.push((key, v.to_string()));
        }
    }
    let mut out = Vec::new();
    push(&mut out, "seed", global.seed);
    if global.deterministic {
        out.push(("deterministic", "true".into()));
    }
    push(&mut out, "ablation", global.ablation.clone());
    push(
        &mut out,
        "numeric_transform",
        global.numeric_transform.map(|t| t.name()),
    );
    push(&mut out, "threads", global.threads);
    if let Some(m) = mining {
        push(&mut out, "min_head_coverage", m.min_head_coverage);
        push(&mut out, "min_head_support", m.min_head_support);
        push(&mut out, "max_body_len", m.max_body_len);
    }
    if let Some(f) = fit {
        push(&mut out, "tau", f.tau);
        push(&mut out, "sigma_floor", f.sigma_floor);
    }
    if let Some(t) = train {
        push(&mut out, "epochs", t.epochs);
        push(&mut out, "learning_rate", t.learning_rate);
        push(&mut out, "batch_size", t.batch_size);
        push(&mut out, "num_negatives", t.num_negatives);
        push(&mut out, "embedding_dim", t.embedding_dim);
        push(&mut out, "validate_every", t.validate_every);
    }
    out
}
