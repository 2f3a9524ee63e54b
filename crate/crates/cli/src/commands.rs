use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use kbpoe::checkpoint::Precision;
use kbpoe::eval::{
    evaluate_queries, load_ground_truth, pr_auc, queries_for, score_candidates,
    split_by_cardinality,
};
use kbpoe::numeric::load_numeric_into;
use kbpoe::store::load_triples_into;
use kbpoe::store::StoreBuilder;
use kbpoe::trainer::train_with;
use kbpoe::{
    evaluate, mine_rules, Checkpoint, EntityId, FeatureExtractor, NumericTable, QueryDirection,
    RelationNumericSpec, RuleSet, Split, TripleStore,
};

use crate::args::{DataArgs, ModelCheck, SplitArg};
use crate::failure::Failure;
use crate::settings::Settings;

fn out_file(out: &Path, name: &str) -> Result<PathBuf, Failure> {
    fs::create_dir_all(out)
        .map_err(|e| Failure::data(format!("cannot create {}: {e}", out.display())))?;
    Ok(out.join(name))
}

fn write_text(path: &Path, text: &str) -> Result<(), Failure> {
    fs::write(path, text)
        .map_err(|e| Failure::data(format!("cannot write {}: {e}", path.display())))
}

struct Data {
    store: TripleStore,
    table: NumericTable,
}

fn load_data(
    builder: StoreBuilder,
    table: impl FnOnce(usize) -> NumericTable,
    data: &DataArgs,
) -> Result<Data, Failure> {
    let (store, report) = load_triples_into(builder, &data.train, &data.valid, &data.test)?;
    eprintln!("{report}");
    let table = table(store.num_entities());
    let table = match &data.numeric {
        Some(path) => {
            let (table, report) = load_numeric_into(table, &store, path)?;
            eprintln!("{report}");
            table
        }
        None => table,
    };
    Ok(Data { store, table })
}

fn load_fresh(data: &DataArgs) -> Result<Data, Failure> {
    load_data(StoreBuilder::new(), NumericTable::new, data)
}

/// Loads a checkpoint and the data files with the checkpoint's ids.
fn load_with_checkpoint(
    path: &Path,
    check: &ModelCheck,
    settings: &Settings,
    data: &DataArgs,
) -> Result<(Checkpoint, Data), Failure> {
    let ck = Checkpoint::load(path)?;
    let dim = check.embedding_dim.or_else(|| {
        settings
            .explicit
            .contains("embedding_dim")
            .then_some(settings.train.embedding_dim)
    });
    if let Some(dim) = dim {
        ck.expect_dim(dim)?;
    }
    let data = load_data(ck.store_builder(), |n| ck.numeric_table(n), data)?;
    ck.check_store(&data.store)?;
    Ok((ck, data))
}

pub fn ingest(out: &Path, data: &DataArgs) -> Result<(), Failure> {
    let (store, report) = kbpoe::load_triples(&data.train, &data.valid, &data.test)?;
    let mut summary = format!("{report}\n");
    if let Some(path) = &data.numeric {
        let (table, report) = kbpoe::load_numeric(&store, path)?;
        summary.push_str(&format!("{report}\n"));
        table
            .features()
            .write_tsv(&out_file(out, "features.tsv")?)?;
    }
    store
        .entities()
        .write_tsv(&out_file(out, "entities.tsv")?)?;
    store
        .relations()
        .write_tsv(&out_file(out, "relations.tsv")?)?;
    write_text(&out_file(out, "ingest.txt")?, &summary)?;
    print!("{summary}");
    Ok(())
}

pub fn mine(out: &Path, settings: &Settings, data: &DataArgs) -> Result<(), Failure> {
    let d = load_fresh(data)?;
    let rules = mine_rules(&d.store, &settings.mining)?;
    rules.save(&d.store, &out_file(out, "rules.tsv")?)?;
    println!("rules\t{}", rules.total());
    Ok(())
}

pub fn fit_numeric(out: &Path, settings: &Settings, data: &DataArgs) -> Result<(), Failure> {
    if data.numeric.is_none() {
        return Err(Failure::usage("fit-numeric needs --numeric"));
    }
    let d = load_fresh(data)?;
    let spec = RelationNumericSpec::fit(&d.store, &d.table, settings.tau, settings.sigma_floor)?;
    spec.save(&d.store, &d.table, &out_file(out, "numeric_spec.tsv")?)?;
    println!(
        "relations_with_features\t{}",
        spec.relations_with_features()
    );
    Ok(())
}

pub struct TrainInputs<'a> {
    pub data: &'a DataArgs,
    pub rules: Option<&'a Path>,
    pub numeric_spec: Option<&'a Path>,
    pub f32: bool,
}

pub fn train(out: &Path, settings: &Settings, inputs: TrainInputs<'_>) -> Result<(), Failure> {
    let d = load_fresh(inputs.data)?;
    let experts = settings.train.ablation;
    let rules = match inputs.rules {
        Some(path) => RuleSet::load(&d.store, path)?,
        None if experts.relational => mine_rules(&d.store, &settings.mining)?,
        None => RuleSet::empty(d.store.num_relations()),
    };
    let spec = match inputs.numeric_spec {
        Some(path) => RelationNumericSpec::load(&d.store, &d.table, path)?,
        None if experts.numerical && inputs.data.numeric.is_some() => {
            RelationNumericSpec::fit(&d.store, &d.table, settings.tau, settings.sigma_floor)?
        }
        None => RelationNumericSpec::empty(d.store.num_relations()),
    };
    rules.save(&d.store, &out_file(out, "rules.tsv")?)?;
    spec.save(&d.store, &d.table, &out_file(out, "numeric_spec.tsv")?)?;

    let extractor = FeatureExtractor::new(&d.store, &rules, &d.table, &spec);
    let outcome = train_with(&extractor, &settings.train, |entry| eprintln!("{entry}"))?;

    let mut log = settings.echo();
    log.push_str(&outcome.log.to_string());
    log.push_str(&format!("# epochs_run={}\n", outcome.epochs_run));
    log.push_str(&format!("# best_epoch={}\n", outcome.best_epoch));
    if let Some(mrr) = outcome.best_mrr {
        log.push_str(&format!("# best_valid_mrr={mrr}\n"));
    }
    write_text(&out_file(out, "train.log")?, &log)?;

    let ck = Checkpoint::new(
        &d.store,
        &d.table,
        &rules,
        &spec,
        &outcome.model,
        &settings.train,
        Some(&outcome.optimizer),
    )?;
    let precision = if inputs.f32 {
        Precision::F32
    } else {
        Precision::F64
    };
    ck.save(&out_file(out, "model.ckpt")?, precision)?;

    let test = d.store.split(Split::Test);
    if test.is_empty() {
        write_text(&out_file(out, "metrics.txt")?, "queries=0\n")?;
        return Ok(());
    }
    let metrics = evaluate(&outcome.model, &extractor, test)?;
    write_text(&out_file(out, "metrics.txt")?, &metrics.key_values())?;
    println!("{metrics}");
    Ok(())
}

pub fn eval(
    out: &Path,
    settings: &Settings,
    data: &DataArgs,
    checkpoint: &Path,
    check: &ModelCheck,
    split: SplitArg,
    by_cardinality: bool,
) -> Result<(), Failure> {
    let (ck, d) = load_with_checkpoint(checkpoint, check, settings, data)?;
    let extractor = FeatureExtractor::new(&d.store, &ck.rules, &d.table, &ck.spec);
    let split = match split {
        SplitArg::Valid => Split::Valid,
        SplitArg::Test => Split::Test,
    };
    let triples = d.store.split(split);
    if triples.is_empty() {
        return Err(Failure::data(format!(
            "the {} split is empty",
            split.name()
        )));
    }
    let queries = queries_for(triples);
    let metrics = evaluate_queries(&ck.model, &extractor, &queries)?;
    let mut report = metrics.key_values();
    println!("{metrics}");
    if by_cardinality {
        let parts = split_by_cardinality(&d.store, &queries);
        for (name, qs) in [("one", &parts.one), ("many", &parts.many)] {
            let m = evaluate_queries(&ck.model, &extractor, qs)?;
            for line in m.key_values().lines() {
                report.push_str(&format!("{name}.{line}\n"));
            }
            println!("{name}\n{m}");
        }
    }
    write_text(&out_file(out, "metrics.txt")?, &report)?;
    Ok(())
}

/// A parsed `head<TAB>relation<TAB>?` or `?<TAB>relation<TAB>tail` query.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct QuerySpec {
    pub direction: QueryDirection,
    pub fixed: String,
    pub relation: String,
}

/// Accepts real tabs or the two-character escape `\t` as separators.
pub fn parse_query(text: &str) -> Result<QuerySpec, Failure> {
    let parts: Vec<&str> = if text.contains('\t') {
        text.split('\t').collect()
    } else {
        text.split("\\t").collect()
    };
    let bad = || {
        Failure::usage(format!(
            "query `{text}` must look like `head<TAB>relation<TAB>?` or `?<TAB>relation<TAB>tail`"
        ))
    };
    let [h, r, t] = parts.as_slice() else {
        return Err(bad());
    };
    let (direction, fixed) = match (*h, *t) {
        (h, "?") if h != "?" => (QueryDirection::Tail, h),
        ("?", t) if t != "?" => (QueryDirection::Head, t),
        _ => return Err(bad()),
    };
    if fixed.is_empty() || r.is_empty() {
        return Err(bad());
    }
    Ok(QuerySpec {
        direction,
        fixed: fixed.to_owned(),
        relation: (*r).to_owned(),
    })
}

/// Entities by descending logit, ties broken by ascending id.
pub fn ranked_candidates(
    ck: &Checkpoint,
    extractor: &FeatureExtractor<'_>,
    query: &QuerySpec,
    filtered: bool,
) -> Result<Vec<(EntityId, f64)>, Failure> {
    let store = extractor.store;
    let fixed = store.entity(&query.fixed)?;
    let relation = store.relation(&query.relation)?;
    let scores = score_candidates(&ck.model, extractor, query.direction, fixed, relation)?;
    let mut ranked: Vec<(EntityId, f64)> = scores
        .into_iter()
        .enumerate()
        .map(|(i, s)| (EntityId(i as u32), s))
        .filter(|&(e, _)| {
            !filtered
                || match query.direction {
                    QueryDirection::Tail => !store.exists(fixed, relation, e),
                    QueryDirection::Head => !store.exists(e, relation, fixed),
                }
        })
        .collect();
    ranked.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    Ok(ranked)
}

pub struct PredictInputs<'a> {
    pub data: &'a DataArgs,
    pub checkpoint: &'a Path,
    pub check: &'a ModelCheck,
    pub query: &'a str,
    pub topk: usize,
    pub filtered: bool,
}

pub fn predict(settings: &Settings, inputs: PredictInputs<'_>) -> Result<(), Failure> {
    let query = parse_query(inputs.query)?;
    let (ck, d) = load_with_checkpoint(inputs.checkpoint, inputs.check, settings, inputs.data)?;
    let extractor = FeatureExtractor::new(&d.store, &ck.rules, &d.table, &ck.spec);
    let ranked = ranked_candidates(&ck, &extractor, &query, inputs.filtered)?;
    let stdout = std::io::stdout();
    let mut w = stdout.lock();
    for (e, s) in ranked.into_iter().take(inputs.topk) {
        writeln!(w, "{}\t{s}", d.store.entity_label(e))?;
    }
    Ok(())
}

pub fn prauc(
    out: &Path,
    settings: &Settings,
    data: &DataArgs,
    checkpoint: &Path,
    check: &ModelCheck,
    query: &str,
    ground_truth: &Path,
) -> Result<(), Failure> {
    let query = parse_query(query)?;
    let (ck, d) = load_with_checkpoint(checkpoint, check, settings, data)?;
    let extractor = FeatureExtractor::new(&d.store, &ck.rules, &d.table, &ck.spec);
    let fixed = d.store.entity(&query.fixed)?;
    let relation = d.store.relation(&query.relation)?;
    let gold = load_ground_truth(&d.store, ground_truth)?;
    let area = pr_auc(
        &ck.model,
        &extractor,
        query.direction,
        fixed,
        relation,
        &gold,
    )?;
    let positives = gold.iter().filter(|g| g.1).count();
    let report = format!(
        "candidates={}\npositives={positives}\npr_auc={area}\n",
        gold.len()
    );
    write_text(&out_file(out, "metrics.txt")?, &report)?;
    print!("{report}");
    Ok(())
}
