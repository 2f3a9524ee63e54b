use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use kbpoe::eval::score_candidates;
use kbpoe::store::load_triples_into;
use kbpoe::{rank_query, Checkpoint, CompletionQuery, FeatureExtractor, QueryDirection, Triple};

const ENTITIES: usize = 24;

struct Kb {
    _dir: tempfile::TempDir,
    root: PathBuf,
}

impl Kb {
    fn path(&self, name: &str) -> PathBuf {
        self.root.join(name)
    }

    fn data_args(&self) -> Vec<String> {
        ["train", "valid", "test", "numeric"]
            .iter()
            .flat_map(|s| {
                [
                    format!("--{s}"),
                    self.path(&format!("{s}.tsv")).display().to_string(),
                ]
            })
            .collect()
    }
}

/// Small KB with a composition rule, an inverse pair and one numeric
/// attribute that orders `older_than`.
fn write_kb() -> Kb {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path().to_path_buf();
    let e = |i: usize| format!("e{i}");
    let mut lines = Vec::new();
    for i in 0..ENTITIES {
        lines.push(format!("{}\tparent\t{}", e(i), e((i + 1) % ENTITIES)));
        lines.push(format!("{}\tchild\t{}", e((i + 1) % ENTITIES), e(i)));
        lines.push(format!("{}\tgrandparent\t{}", e(i), e((i + 2) % ENTITIES)));
        if i + 3 < ENTITIES {
            lines.push(format!("{}\tolder_than\t{}", e(i + 3), e(i)));
        }
    }
    let (mut train, mut valid, mut test) = (String::new(), String::new(), String::new());
    for (n, line) in lines.iter().enumerate() {
        let target = match n % 10 {
            0 => &mut valid,
            1 => &mut test,
            _ => &mut train,
        };
        writeln!(target, "{line}").unwrap();
    }
    let mut numeric = String::new();
    for i in 0..ENTITIES {
        writeln!(numeric, "{}\tage\t{}", e(i), 10 * i).unwrap();
    }
    fs::write(root.join("train.tsv"), train).unwrap();
    fs::write(root.join("valid.tsv"), valid).unwrap();
    fs::write(root.join("test.tsv"), test).unwrap();
    fs::write(root.join("numeric.tsv"), numeric).unwrap();
    Kb { _dir: dir, root }
}

fn kbpoe(args: &[String]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_kbpoe"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn strings(args: &[&str]) -> Vec<String> {
    args.iter().map(|s| s.to_string()).collect()
}

fn train_into(kb: &Kb, out: &Path) -> Output {
    let mut args = strings(&[
        "train",
        "--deterministic",
        "--seed",
        "5",
        "--epochs",
        "6",
        "--validate-every",
        "2",
        "--embedding-dim",
        "8",
        "--num-negatives",
        "10",
        "--batch-size",
        "16",
        "--learning-rate",
        "0.05",
        "--min-head-coverage",
        "0.1",
        "--tau",
        "0.5",
    ]);
    args.extend(kb.data_args());
    args.extend(["--out".into(), out.display().to_string()]);
    kbpoe(&args)
}

fn trained(kb: &Kb) -> PathBuf {
    let out = kb.path("run");
    let o = train_into(kb, &out);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    out
}

#[test]
fn deterministic_training_is_byte_identical() {
    let kb = write_kb();
    let a = trained(&kb);
    let b = kb.path("run2");
    assert!(train_into(&kb, &b).status.success());
    for name in [
        "model.ckpt",
        "metrics.txt",
        "train.log",
        "rules.tsv",
        "numeric_spec.tsv",
    ] {
        let x = fs::read(a.join(name)).unwrap();
        let y = fs::read(b.join(name)).unwrap();
        assert!(!x.is_empty(), "{name} is empty");
        assert_eq!(x, y, "{name} differs between runs");
    }
    // Re-running into the same directory overwrites identically.
    let before = fs::read(a.join("model.ckpt")).unwrap();
    assert!(train_into(&kb, &a).status.success());
    assert_eq!(before, fs::read(a.join("model.ckpt")).unwrap());
}

#[test]
fn train_log_echoes_effective_config() {
    let kb = write_kb();
    let out = trained(&kb);
    let log = fs::read_to_string(out.join("train.log")).unwrap();
    for line in [
        "# seed=5",
        "# epochs=6",
        "# embedding_dim=8",
        "# deterministic=true",
        "# tau=0.5",
    ] {
        assert!(log.lines().any(|l| l == line), "missing `{line}` in\n{log}");
    }
    let metrics = fs::read_to_string(out.join("metrics.txt")).unwrap();
    assert!(metrics.starts_with("queries="));
    assert!(metrics.contains("hits@10="));
}

#[test]
fn config_file_is_overridden_by_flags() {
    let kb = write_kb();
    let cfg = kb.path("run.cfg");
    fs::write(&cfg, "seed=1\nepochs=2\nembedding_dim=4\nnum_negatives=5\n").unwrap();
    let out = kb.path("cfg_run");
    let mut args = strings(&[
        "train",
        "--config",
        cfg.to_str().unwrap(),
        "--epochs",
        "1",
        "--deterministic",
    ]);
    args.extend(kb.data_args());
    args.extend(["--out".into(), out.display().to_string()]);
    let o = kbpoe(&args);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let log = fs::read_to_string(out.join("train.log")).unwrap();
    assert!(log.contains("# epochs=1\n"));
    assert!(log.contains("# seed=1\n"));
    assert!(log.contains("# embedding_dim=4\n"));
}

#[test]
fn exit_codes() {
    let kb = write_kb();
    assert_eq!(kbpoe(&strings(&["--help"])).status.code(), Some(0));
    assert_eq!(kbpoe(&strings(&["frobnicate"])).status.code(), Some(1));
    assert_eq!(kbpoe(&strings(&["train"])).status.code(), Some(1));
    let mut bad_ablation = strings(&["train", "--ablation", "x"]);
    bad_ablation.extend(kb.data_args());
    assert_eq!(kbpoe(&bad_ablation).status.code(), Some(1));

    let cfg = kb.path("typo.cfg");
    fs::write(&cfg, "epoch=3\n").unwrap();
    let mut typo = strings(&["ingest", "--config", cfg.to_str().unwrap()]);
    typo.extend(kb.data_args());
    assert_eq!(kbpoe(&typo).status.code(), Some(1));

    fs::write(kb.path("broken.tsv"), "a\tr\n").unwrap();
    let broken = strings(&[
        "ingest",
        "--train",
        kb.path("broken.tsv").to_str().unwrap(),
        "--valid",
        kb.path("valid.tsv").to_str().unwrap(),
        "--test",
        kb.path("test.tsv").to_str().unwrap(),
        "--out",
        kb.path("ingest").to_str().unwrap(),
    ]);
    assert_eq!(kbpoe(&broken).status.code(), Some(2));

    let mut missing = strings(&["ingest", "--out", kb.path("ingest").to_str().unwrap()]);
    missing.extend(kb.data_args());
    missing[4] = kb.path("nope.tsv").display().to_string();
    assert_eq!(kbpoe(&missing).status.code(), Some(2));

    let mut ok = strings(&["ingest", "--out", kb.path("ingest").to_str().unwrap()]);
    ok.extend(kb.data_args());
    let o = kbpoe(&ok);
    assert_eq!(o.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&o.stdout).contains(&format!("entities\t{ENTITIES}")));
    assert!(kb.path("ingest/entities.tsv").exists());
}

fn predict_args(kb: &Kb, ckpt: &Path, query: &str, topk: usize) -> Vec<String> {
    let mut args = strings(&[
        "predict",
        "--checkpoint",
        ckpt.to_str().unwrap(),
        "--query",
        query,
        "--topk",
    ]);
    args.push(topk.to_string());
    args.extend(kb.data_args());
    args
}

fn parse_predictions(o: &Output) -> Vec<(String, f64)> {
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    String::from_utf8(o.stdout.clone())
        .unwrap()
        .lines()
        .map(|l| {
            let (e, s) = l.split_once('\t').unwrap();
            (e.to_owned(), s.parse().unwrap())
        })
        .collect()
}

#[test]
fn predict_agrees_with_rank_query() {
    let kb = write_kb();
    let out = trained(&kb);
    let ckpt = out.join("model.ckpt");

    let ck = Checkpoint::load(&ckpt).unwrap();
    let builder = ck.store_builder();
    let (store, _) = load_triples_into(
        builder,
        &kb.path("train.tsv"),
        &kb.path("valid.tsv"),
        &kb.path("test.tsv"),
    )
    .unwrap();
    let (table, _) = kbpoe::numeric::load_numeric_into(
        ck.numeric_table(store.num_entities()),
        &store,
        &kb.path("numeric.tsv"),
    )
    .unwrap();
    let ex = FeatureExtractor::new(&store, &ck.rules, &table, &ck.spec);

    for query in [
        "e3\tgrandparent\t?",
        "?\\tparent\\te7",
        "e10\tolder_than\t?",
    ] {
        let got = parse_predictions(&kbpoe(&predict_args(&kb, &ckpt, query, ENTITIES)));
        assert_eq!(got.len(), ENTITIES);
        for w in got.windows(2) {
            let (a, b) = (&w[0], &w[1]);
            let ida = store.entity(&a.0).unwrap();
            let idb = store.entity(&b.0).unwrap();
            assert!(
                a.1 > b.1 || (a.1 == b.1 && ida < idb),
                "bad order {a:?} {b:?}"
            );
        }
        let parts: Vec<&str> = if query.contains('\t') {
            query.split('\t').collect()
        } else {
            query.split("\\t").collect()
        };
        let relation = store.relation(parts[1]).unwrap();
        let (direction, fixed) = if parts[2] == "?" {
            (QueryDirection::Tail, store.entity(parts[0]).unwrap())
        } else {
            (QueryDirection::Head, store.entity(parts[2]).unwrap())
        };
        let scores = score_candidates(&ck.model, &ex, direction, fixed, relation).unwrap();
        for (label, s) in &got {
            let e = store.entity(label).unwrap();
            assert_eq!(*s, scores[e.index()], "printed logit differs for {label}");
        }
        // The raw (unfiltered) position of each candidate is its raw rank
        // when nothing ties; filtered rank_query never exceeds it.
        for (pos, (label, _)) in got.iter().enumerate() {
            let e = store.entity(label).unwrap();
            let triple = match direction {
                QueryDirection::Tail => Triple::new(fixed, relation, e),
                QueryDirection::Head => Triple::new(e, relation, fixed),
            };
            let q = match direction {
                QueryDirection::Tail => CompletionQuery::tail(triple),
                QueryDirection::Head => CompletionQuery::head(triple),
            };
            let rank = rank_query(&ck.model, &ex, &q).unwrap();
            let ties = scores.iter().filter(|&&s| s == scores[e.index()]).count();
            if ties == 1 {
                assert!(
                    rank <= pos + 1,
                    "{label}: filtered rank {rank} > position {}",
                    pos + 1
                );
            }
        }
    }
}

#[test]
fn predict_topk_and_filtering() {
    let kb = write_kb();
    let out = trained(&kb);
    let ckpt = out.join("model.ckpt");
    let all = parse_predictions(&kbpoe(&predict_args(&kb, &ckpt, "e0\tparent\t?", 1000)));
    assert_eq!(all.len(), ENTITIES);
    let top3 = parse_predictions(&kbpoe(&predict_args(&kb, &ckpt, "e0\tparent\t?", 3)));
    assert_eq!(top3, all[..3].to_vec());

    let mut filtered = predict_args(&kb, &ckpt, "e0\tparent\t?", 1000);
    filtered.push("--filtered".into());
    let f = parse_predictions(&kbpoe(&filtered));
    assert_eq!(f.len(), ENTITIES - 1);
    assert!(f.iter().all(|(e, _)| e != "e1"));
}

#[test]
fn predict_unknown_label_names_the_token() {
    let kb = write_kb();
    let out = trained(&kb);
    let ckpt = out.join("model.ckpt");
    for (query, token) in [("nobody\tparent\t?", "nobody"), ("e1\tcousin\t?", "cousin")] {
        let o = kbpoe(&predict_args(&kb, &ckpt, query, 5));
        assert_eq!(o.status.code(), Some(2));
        assert!(String::from_utf8_lossy(&o.stderr).contains(token));
    }
    let o = kbpoe(&predict_args(&kb, &ckpt, "e1\tparent\te2", 5));
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn eval_reproduces_train_metrics_and_checks_width() {
    let kb = write_kb();
    let out = trained(&kb);
    let ckpt = out.join("model.ckpt");
    let eval_out = kb.path("eval");
    let mut args = strings(&[
        "eval",
        "--checkpoint",
        ckpt.to_str().unwrap(),
        "--by-cardinality",
        "--out",
        eval_out.to_str().unwrap(),
    ]);
    args.extend(kb.data_args());
    let o = kbpoe(&args);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let trained_metrics = fs::read_to_string(out.join("metrics.txt")).unwrap();
    let eval_metrics = fs::read_to_string(eval_out.join("metrics.txt")).unwrap();
    assert!(eval_metrics.starts_with(&trained_metrics));
    assert!(eval_metrics.contains("one.queries="));
    assert!(eval_metrics.contains("many.queries="));

    args.extend(["--embedding-dim".into(), "16".into()]);
    let o = kbpoe(&args);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("entity"));
}

#[test]
fn prauc_and_standalone_artifacts() {
    let kb = write_kb();
    let out = trained(&kb);
    let ckpt = out.join("model.ckpt");
    let mut gt = String::new();
    for i in 0..ENTITIES {
        writeln!(gt, "e{i}\t{}", u8::from(i == 5)).unwrap();
    }
    fs::write(kb.path("gt.tsv"), gt).unwrap();
    let pr_out = kb.path("prauc");
    let mut args = strings(&[
        "prauc",
        "--checkpoint",
        ckpt.to_str().unwrap(),
        "--query",
        "e3\tgrandparent\t?",
        "--ground-truth",
        kb.path("gt.tsv").to_str().unwrap(),
        "--out",
        pr_out.to_str().unwrap(),
    ]);
    args.extend(kb.data_args());
    let o = kbpoe(&args);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let report = fs::read_to_string(pr_out.join("metrics.txt")).unwrap();
    let area: f64 = report
        .lines()
        .find_map(|l| l.strip_prefix("pr_auc="))
        .unwrap()
        .parse()
        .unwrap();
    assert!((0.0..=1.0).contains(&area));

    let mined = kb.path("mined");
    let mut args = strings(&[
        "mine-rules",
        "--min-head-coverage",
        "0.1",
        "--out",
        mined.to_str().unwrap(),
    ]);
    args.extend(kb.data_args());
    assert!(kbpoe(&args).status.success());
    assert_eq!(
        fs::read(mined.join("rules.tsv")).unwrap(),
        fs::read(out.join("rules.tsv")).unwrap()
    );

    let fitted = kb.path("fitted");
    let mut args = strings(&[
        "fit-numeric",
        "--tau",
        "0.5",
        "--out",
        fitted.to_str().unwrap(),
    ]);
    args.extend(kb.data_args());
    assert!(kbpoe(&args).status.success());
    assert_eq!(
        fs::read(fitted.join("numeric_spec.tsv")).unwrap(),
        fs::read(out.join("numeric_spec.tsv")).unwrap()
    );
}
