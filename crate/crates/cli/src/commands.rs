use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{Context, Result};
use log::{info, warn};
use ndarray::{Array1, Array2};
use rayon::prelude::*;

use kgtext_core::eval::{
    evaluate_link_prediction, grid_search_alpha, inner_products, make_folds, read_labels,
    rerank_with, train_classifier, ClassifierReport, GridSearchReport, LabeledSet, Qrels,
    RankingReport, RetrievalRun, L2_GRID,
};
use kgtext_core::{
    generate_inductive_splits, load_graph, load_split, read_descriptions, write_split, Checkpoint,
    KnowledgeGraph, Partition, SplitSpec, Trainer,
};

use crate::config::{RunConfig, ValidationError};

fn write(path: impl AsRef<Path>, contents: impl AsRef<[u8]>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, contents).with_context(|| format!("writing {}", path.display()))
}

fn ensure_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))
}

pub fn graph(cfg: &RunConfig) -> Result<KnowledgeGraph> {
    let triples = cfg.input("triples")?;
    let descriptions = cfg.input("descriptions")?;
    Ok(load_graph(&triples, &descriptions)?)
}

/// The split named by `data.split_dir`, or every triple in training.
pub fn split(cfg: &RunConfig, graph: &KnowledgeGraph) -> Result<SplitSpec> {
    match cfg.maybe_input("split_dir")? {
        Some(dir) => Ok(load_split(&dir, graph)?),
        None => {
            info!("no split_dir configured; using every triple for training");
            Ok(SplitSpec::all_train(graph))
        }
    }
}

pub fn cmd_split(cfg: &RunConfig) -> Result<SplitSpec> {
    let graph = graph(cfg)?;
    let dir = cfg.output("split_dir")?;
    let split = generate_inductive_splits(&graph, &cfg.split)?;
    if let Some(w) = &split.warning {
        warn!("{w}");
    }
    write_split(&dir, &graph, &split)?;
    println!(
        "{} split: {} train / {} valid / {} test triples; {} valid and {} test entities; {} discarded -> {}",
        split.scenario,
        split.train_triples.len(),
        split.valid_triples.len(),
        split.test_triples.len(),
        split.entities(Partition::Valid).len(),
        split.entities(Partition::Test).len(),
        split.discarded,
        dir.display()
    );
    Ok(split)
}

fn train_on(cfg: &RunConfig, graph: &KnowledgeGraph, split: &SplitSpec) -> Result<Checkpoint> {
    let mut trainer = Trainer::new(graph, &split.train_triples, cfg.train.clone())?;
    if let Some(path) = cfg.maybe_input("pretrained")? {
        let n = trainer.load_pretrained(&path)?;
        info!("loaded {n} pretrained word vectors from {}", path.display());
    }
    Ok(trainer.run(|_, _| {})?)
}

pub fn cmd_train(cfg: &RunConfig) -> Result<Checkpoint> {
    let graph = graph(cfg)?;
    let split = split(cfg, &graph)?;
    let path = cfg.output("checkpoint")?;
    let out = cfg.output("output")?;
    let ck = train_on(cfg, &graph, &split)?;
    if let Some(dir) = path.parent() {
        ensure_dir(dir)?;
    }
    ensure_dir(&out)?;
    ck.save(&path)?;
    ck.write_loss_csv(&out.join("loss.csv"))?;
    println!(
        "trained {} epochs, final loss {:.6} -> {}",
        ck.epochs(),
        ck.final_mean_loss().unwrap_or(f64::NAN),
        path.display()
    );
    Ok(ck)
}

fn eval_target(cfg: &RunConfig, split: &SplitSpec) -> (Partition, kgtext_core::Scenario) {
    (
        cfg.eval.partition.unwrap_or(Partition::Test),
        cfg.eval.scenario.unwrap_or(split.scenario),
    )
}

pub fn cmd_eval_lp(cfg: &RunConfig) -> Result<RankingReport> {
    let graph = graph(cfg)?;
    let split = split(cfg, &graph)?;
    let ck = Checkpoint::load(&cfg.input("checkpoint")?)?;
    let out = cfg.output("output")?;
    let (partition, scenario) = eval_target(cfg, &split);
    let report = evaluate_link_prediction(&ck, &graph, &split, partition, scenario)?;
    ensure_dir(&out)?;
    write(out.join("lp_summary.txt"), report.summary_table())?;
    write(out.join("lp_summary.csv"), report.summary_csv())?;
    write(out.join("lp_ranks.csv"), report.ranks_csv(&graph))?;
    print!("{}", report.summary_table());
    Ok(report)
}

pub fn cmd_classify(cfg: &RunConfig) -> Result<ClassifierReport> {
    let graph = graph(cfg)?;
    let split = split(cfg, &graph)?;
    let ck = Checkpoint::load(&cfg.input("checkpoint")?)?;
    let labels = read_labels(&cfg.input("labels")?)?;
    let out = cfg.output("output")?;

    let classes: Vec<&str> = {
        let mut c: Vec<&str> = labels.values().map(String::as_str).collect();
        c.sort_unstable();
        c.dedup();
        c
    };
    let emb = ck.embed_graph(&graph)?;
    let mut rows: BTreeMap<Partition, (Vec<usize>, Vec<usize>)> = BTreeMap::new();
    let mut unknown = 0;
    for (name, label) in &labels {
        let Some(e) = graph.entity_id(name) else {
            unknown += 1;
            continue;
        };
        if !emb.available[e] {
            continue;
        }
        let class = classes
            .binary_search(&label.as_str())
            .expect("label collected above");
        let entry = rows.entry(split.role(e)).or_default();
        entry.0.push(e);
        entry.1.push(class);
    }
    if unknown > 0 {
        warn!("{unknown} labelled entities are not in the graph");
    }
    let set = |part: Partition| -> Result<LabeledSet> {
        let (ents, ys) = rows.get(&part).cloned().unwrap_or_default();
        let mut x = Array2::zeros((ents.len(), emb.vectors.ncols()));
        for (i, &e) in ents.iter().enumerate() {
            x.row_mut(i).assign(&emb.vectors.row(e));
        }
        Ok(LabeledSet::new(x, ys)?)
    };
    let report = train_classifier(
        &set(Partition::Train)?,
        &set(Partition::Valid)?,
        &set(Partition::Test)?,
        classes.len(),
        &L2_GRID,
    )?;
    ensure_dir(&out)?;
    let mut table = report.table();
    let _ = writeln!(table, "\nclasses: {}", classes.join(", "));
    write(out.join("classify.txt"), &table)?;
    write(out.join("classify.csv"), report.csv())?;
    print!("{table}");
    Ok(report)
}

fn embed_texts(
    ck: &Checkpoint,
    texts: &HashMap<String, String>,
    wanted: &[&str],
) -> Result<HashMap<String, Array1<f64>>> {
    let encoded: Vec<Option<(String, Array1<f64>)>> = wanted
        .par_iter()
        .map(|id| match texts.get(*id) {
            Some(t) if !t.trim().is_empty() => ck
                .encode_text(t)
                .map(|enc| Some((id.to_string(), enc.vector))),
            _ => Ok(None),
        })
        .collect::<kgtext_core::Result<_>>()?;
    Ok(encoded.into_iter().flatten().collect())
}

pub fn cmd_rerank(cfg: &RunConfig) -> Result<GridSearchReport> {
    let ck = Checkpoint::load(&cfg.input("checkpoint")?)?;
    let queries = read_descriptions(&cfg.input("queries")?)?;
    let docs_path = match cfg.is_set("documents") {
        true => cfg.input("documents")?,
        false => cfg.input("descriptions")?,
    };
    let docs = read_descriptions(&docs_path)?;
    let qrels = Qrels::read(&cfg.input("qrels")?)?;
    let run = RetrievalRun::read(&cfg.input("run")?)?;
    let out = cfg.output("output")?;

    let qids: Vec<&str> = run.queries.keys().map(String::as_str).collect();
    let mut dids: Vec<&str> = run
        .queries
        .values()
        .flatten()
        .map(|e| e.doc.as_str())
        .collect();
    dids.sort_unstable();
    dids.dedup();
    let qemb = embed_texts(&ck, &queries, &qids)?;
    let demb = embed_texts(&ck, &docs, &dids)?;
    let ips = inner_products(&run, &qemb, &demb);

    let judged: Vec<&str> = qids
        .iter()
        .copied()
        .filter(|q| qrels.ideal_dcg(q, cfg.ndcg_k) > 0.0)
        .collect();
    if judged.len() < cfg.folds {
        return Err(ValidationError(format!(
            "config key `rerank.folds`: {} folds but only {} judged queries in the run",
            cfg.folds,
            judged.len()
        ))
        .into());
    }
    let folds = make_folds(judged.iter().copied(), cfg.folds, cfg.seed);
    let report = grid_search_alpha(&folds, &run, &ips, &qrels, cfg.ndcg_k)?;

    let mut alpha_of: HashMap<&str, f64> = HashMap::new();
    for (fold, result) in folds.iter().zip(&report.folds) {
        for q in fold {
            alpha_of.insert(q, result.alpha);
        }
    }
    let mut reranked = RetrievalRun {
        queries: BTreeMap::new(),
        alpha: report.folds.iter().map(|f| f.alpha).sum::<f64>() / report.folds.len() as f64,
    };
    let mut cache: BTreeMap<u64, RetrievalRun> = BTreeMap::new();
    for q in &qids {
        let alpha = alpha_of.get(q).copied().unwrap_or(0.0);
        let by_alpha = match cache.get(&alpha.to_bits()) {
            Some(r) => r,
            None => {
                let (r, _) = rerank_with(&run, &ips, alpha)?;
                cache.entry(alpha.to_bits()).or_insert(r)
            }
        };
        reranked
            .queries
            .insert(q.to_string(), by_alpha.queries[*q].clone());
    }

    ensure_dir(&out)?;
    reranked.write(&out.join("reranked.run"))?;
    write(out.join("rerank_ndcg.txt"), report.table())?;
    write(out.join("rerank_ndcg.csv"), report.csv())?;
    write(
        out.join("rerank_ttest.txt"),
        format!(
            "mean_diff\t{}\nt\t{}\np_value\t{}\n",
            report.t_test.mean_diff, report.t_test.t, report.t_test.p_value
        ),
    )?;
    print!("{}", report.table());
    Ok(report)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepPoint {
    pub max_len: usize,
    pub mrr: f64,
    pub hits10: f64,
    pub seconds: f64,
}

/// Trains one model per description length and evaluates each. The CSVs are
/// rewritten after every length so an interrupted sweep leaves its rows.
pub fn cmd_sweep_len(cfg: &RunConfig) -> Result<Vec<SweepPoint>> {
    let graph = graph(cfg)?;
    let split = split(cfg, &graph)?;
    let out = cfg.output("output")?;
    let (partition, scenario) = eval_target(cfg, &split);
    for &len in &cfg.lengths {
        let mut c = cfg.train.clone();
        c.max_len = len;
        c.validate()
            .map_err(|e| ValidationError(format!("config key `sweep.lengths`: {e}")))?;
    }
    ensure_dir(&out)?;
    let mut points = Vec::new();
    for &len in &cfg.lengths {
        let mut c = cfg.clone();
        c.train.max_len = len;
        let start = Instant::now();
        let ck = train_on(&c, &graph, &split)?;
        let seconds = start.elapsed().as_secs_f64();
        let report = evaluate_link_prediction(&ck, &graph, &split, partition, scenario)?;
        let p = SweepPoint {
            max_len: len,
            mrr: report.metrics.mrr,
            hits10: report.metrics.hits10,
            seconds,
        };
        println!(
            "max_len {:>4}  MRR {:.4}  Hits@10 {:.4}  {:.2}s",
            p.max_len, p.mrr, p.hits10, p.seconds
        );
        points.push(p);
        let mut mrr = String::from("max_len,mrr,hits10\n");
        let mut time = String::from("max_len,seconds\n");
        for p in &points {
            let _ = writeln!(mrr, "{},{},{}", p.max_len, p.mrr, p.hits10);
            let _ = writeln!(time, "{},{}", p.max_len, p.seconds);
        }
        write(out.join("sweep_mrr.csv"), mrr)?;
        write(out.join("sweep_time.csv"), time)?;
    }
    Ok(points)
}

/// Where a command's artifacts go, for the failure marker.
pub fn artifact_dir(cfg: &RunConfig, command: &str) -> Option<PathBuf> {
    match command {
        "split" => cfg.output("split_dir").ok(),
        _ => cfg.output("output").ok(),
    }
}

/// Validates the inputs a command needs before any work starts.
pub fn preflight(cfg: &RunConfig, command: &str) -> Result<(), ValidationError> {
    let needs: &[&str] = match command {
        "split" | "train" | "sweep-len" => &["triples", "descriptions"],
        "eval-lp" => &["triples", "descriptions", "checkpoint"],
        "classify" => &["triples", "descriptions", "checkpoint", "labels"],
        "rerank" => &["checkpoint", "queries", "qrels", "run"],
        _ => &[],
    };
    for key in needs {
        cfg.input(key)?;
    }
    match command {
        "split" => {
            cfg.output("split_dir")?;
        }
        "train" => {
            cfg.output("checkpoint")?;
        }
        "rerank" if !cfg.is_set("documents") => {
            cfg.input("descriptions")?;
        }
        _ => {}
    }
    for key in ["split_dir", "pretrained", "documents"] {
        if command != "split" {
            cfg.maybe_input(key)?;
        }
    }
    Ok(())
}
