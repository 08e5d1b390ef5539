use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use ndarray::Array1;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::error::{Error, Result};
use crate::graph::read_tsv;

/// The interpolation grid: 20 evenly spaced values from 0 to 1.
pub fn alpha_grid() -> Vec<f64> {
    (0..20).map(|i| i as f64 / 19.0).collect()
}

/// Graded relevance judgments, `query -> doc -> grade`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Qrels {
    judgments: BTreeMap<String, HashMap<String, u8>>,
}

impl Qrels {
    pub fn insert(&mut self, query: &str, doc: &str, grade: u8) -> Result<()> {
        if grade > 2 {
            return Err(Error::Contract(format!("grade {grade} outside 0..=2")));
        }
        let q = self.judgments.entry(query.to_string()).or_default();
        if q.insert(doc.to_string(), grade).is_some() {
            return Err(Error::Contract(format!("({query}, {doc}) judged twice")));
        }
        Ok(())
    }

    /// Reads `query<TAB>0<TAB>doc<TAB>grade` lines.
    pub fn read(path: &Path) -> Result<Self> {
        let mut q = Qrels::default();
        for (line, cols) in read_tsv(path, 4)? {
            let grade: u8 = cols[3]
                .trim()
                .parse()
                .map_err(|_| Error::parse(path, line, format!("bad grade `{}`", cols[3])))?;
            q.insert(&cols[0], &cols[2], grade)
                .map_err(|e| Error::parse(path, line, e.to_string()))?;
        }
        Ok(q)
    }

    pub fn grade(&self, query: &str, doc: &str) -> u8 {
        self.judgments
            .get(query)
            .and_then(|q| q.get(doc))
            .copied()
            .unwrap_or(0)
    }

    pub fn queries(&self) -> impl Iterator<Item = &str> {
        self.judgments.keys().map(String::as_str)
    }

    /// DCG@k of the best possible ordering of the judged documents.
    pub fn ideal_dcg(&self, query: &str, k: usize) -> f64 {
        let mut grades: Vec<u8> = self
            .judgments
            .get(query)
            .map(|q| q.values().copied().collect())
            .unwrap_or_default();
        grades.sort_unstable_by(|a, b| b.cmp(a));
        dcg_at_k(&grades, k)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunEntry {
    pub doc: String,
    /// 1-based position in the base run.
    pub base_rank: usize,
    pub z_ir: f64,
    pub z_new: f64,
}

/// Ranked documents per query, best first.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RetrievalRun {
    pub queries: BTreeMap<String, Vec<RunEntry>>,
    pub alpha: f64,
}

impl RetrievalRun {
    /// Reads `query<TAB>doc<TAB>rank<TAB>score` lines; entries are ordered by rank.
    pub fn read(path: &Path) -> Result<Self> {
        let mut queries: BTreeMap<String, Vec<(usize, String, f64)>> = BTreeMap::new();
        for (line, cols) in read_tsv(path, 4)? {
            let rank: usize = cols[2]
                .trim()
                .parse()
                .map_err(|_| Error::parse(path, line, format!("bad rank `{}`", cols[2])))?;
            let score: f64 = cols[3]
                .trim()
                .parse()
                .map_err(|_| Error::parse(path, line, format!("bad score `{}`", cols[3])))?;
            queries
                .entry(cols[0].clone())
                .or_default()
                .push((rank, cols[1].clone(), score));
        }
        let queries = queries
            .into_iter()
            .map(|(q, mut rows)| {
                rows.sort_by_key(|r| r.0);
                let entries = rows
                    .into_iter()
                    .enumerate()
                    .map(|(i, (_, doc, score))| RunEntry {
                        doc,
                        base_rank: i + 1,
                        z_ir: score,
                        z_new: score,
                    })
                    .collect();
                (q, entries)
            })
            .collect();
        Ok(RetrievalRun {
            queries,
            alpha: 0.0,
        })
    }

    /// Builds a run from `(query, doc, score)` rows already in rank order.
    pub fn from_rows<'a>(rows: impl IntoIterator<Item = (&'a str, &'a str, f64)>) -> Self {
        let mut queries: BTreeMap<String, Vec<RunEntry>> = BTreeMap::new();
        for (q, d, s) in rows {
            let list = queries.entry(q.to_string()).or_default();
            list.push(RunEntry {
                doc: d.to_string(),
                base_rank: list.len() + 1,
                z_ir: s,
                z_new: s,
            });
        }
        RetrievalRun {
            queries,
            alpha: 0.0,
        }
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let mut out = String::new();
        for (q, entries) in &self.queries {
            for (i, e) in entries.iter().enumerate() {
                let _ = writeln!(out, "{q}\t{}\t{}\t{}", e.doc, i + 1, e.z_new);
            }
        }
        fs::write(path, out).map_err(|e| Error::io(path, e))
    }

    pub fn docs(&self, query: &str) -> Vec<&str> {
        self.queries
            .get(query)
            .map(|e| e.iter().map(|x| x.doc.as_str()).collect())
            .unwrap_or_default()
    }
}

/// `sum_{i=1..k} (2^g_i - 1) / log2(1 + i)`, grades beyond the list count as 0.
pub fn dcg_at_k(grades: &[u8], k: usize) -> f64 {
    grades
        .iter()
        .take(k)
        .enumerate()
        .map(|(i, &g)| ((1u32 << g) - 1) as f64 / ((i + 2) as f64).log2())
        .sum()
}

#[derive(Debug, Clone, PartialEq)]
pub struct NdcgReport {
    pub k: usize,
    pub per_query: BTreeMap<String, f64>,
    pub mean: f64,
    /// Queries left out because no judged document is relevant.
    pub excluded: usize,
}

/// NDCG@k per query of `run`; queries whose ideal DCG is zero are excluded.
pub fn ndcg_at_k(run: &RetrievalRun, qrels: &Qrels, k: usize) -> NdcgReport {
    ndcg_for(run, qrels, k, run.queries.keys().map(String::as_str))
}

fn ndcg_for<'a>(
    run: &RetrievalRun,
    qrels: &Qrels,
    k: usize,
    queries: impl Iterator<Item = &'a str>,
) -> NdcgReport {
    let mut per_query = BTreeMap::new();
    let mut excluded = 0;
    for q in queries {
        let ideal = qrels.ideal_dcg(q, k);
        if ideal == 0.0 {
            excluded += 1;
            continue;
        }
        let grades: Vec<u8> = run
            .queries
            .get(q)
            .map(|e| e.iter().map(|x| qrels.grade(q, &x.doc)).collect())
            .unwrap_or_default();
        per_query.insert(q.to_string(), dcg_at_k(&grades, k) / ideal);
    }
    let mean = if per_query.is_empty() {
        0.0
    } else {
        per_query.values().sum::<f64>() / per_query.len() as f64
    };
    NdcgReport {
        k,
        per_query,
        mean,
        excluded,
    }
}

/// `f(q)^T f(d)` for every run entry, `None` where an embedding is missing.
pub type EmbeddingScores = BTreeMap<String, Vec<Option<f64>>>;

pub fn inner_products(
    run: &RetrievalRun,
    query_emb: &HashMap<String, Array1<f64>>,
    doc_emb: &HashMap<String, Array1<f64>>,
) -> EmbeddingScores {
    run.queries
        .iter()
        .map(|(q, entries)| {
            let qv = query_emb.get(q);
            let ips = entries
                .iter()
                .map(|e| Some(qv?.dot(doc_emb.get(&e.doc)?)))
                .collect();
            (q.clone(), ips)
        })
        .collect()
}

/// Replaces scores with `alpha * f(q)^T f(d) + (1 - alpha) * z_IR` and
/// re-sorts, breaking ties by base rank. Entries without an inner product
/// keep `(1 - alpha) * z_IR`. Returns the run and the number of such entries.
pub fn rerank_with(
    run: &RetrievalRun,
    ips: &EmbeddingScores,
    alpha: f64,
) -> Result<(RetrievalRun, usize)> {
    if !(0.0..=1.0).contains(&alpha) {
        return Err(Error::Contract(format!("alpha {alpha} outside [0, 1]")));
    }
    let mut missing = 0;
    let queries = run
        .queries
        .iter()
        .map(|(q, entries)| {
            let mut entries = entries.clone();
            entries.sort_by_key(|e| e.base_rank);
            let scores = ips.get(q);
            for (i, e) in entries.iter_mut().enumerate() {
                let ip = scores.and_then(|s| s.get(i).copied().flatten());
                if ip.is_none() {
                    missing += 1;
                }
                e.z_new = alpha * ip.unwrap_or(0.0) + (1.0 - alpha) * e.z_ir;
            }
            entries.sort_by(|a, b| {
                b.z_new
                    .total_cmp(&a.z_new)
                    .then(a.base_rank.cmp(&b.base_rank))
            });
            (q.clone(), entries)
        })
        .collect();
    Ok((RetrievalRun { queries, alpha }, missing))
}

pub fn rerank(
    run: &RetrievalRun,
    query_emb: &HashMap<String, Array1<f64>>,
    doc_emb: &HashMap<String, Array1<f64>>,
    alpha: f64,
) -> Result<RetrievalRun> {
    let mut base = run.clone();
    for entries in base.queries.values_mut() {
        entries.sort_by_key(|e| e.base_rank);
    }
    let (out, missing) = rerank_with(&base, &inner_products(&base, query_emb, doc_emb), alpha)?;
    if missing > 0 {
        log::warn!("{missing} run entries have no embedding and keep their scaled base score");
    }
    Ok(out)
}

/// Splits the sorted query ids into `n` folds after a seeded shuffle.
pub fn make_folds<'a>(
    queries: impl IntoIterator<Item = &'a str>,
    n: usize,
    seed: u64,
) -> Vec<Vec<String>> {
    let mut qs: Vec<String> = queries.into_iter().map(str::to_string).collect();
    qs.sort();
    qs.dedup();
    qs.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut folds = vec![Vec::new(); n];
    for (i, q) in qs.into_iter().enumerate() {
        folds[i % n].push(q);
    }
    for f in &mut folds {
        f.sort();
    }
    folds
}

#[derive(Debug, Clone, PartialEq)]
pub struct FoldResult {
    pub alpha: f64,
    pub train_ndcg: f64,
    pub test_ndcg: f64,
    pub base_test_ndcg: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridSearchReport {
    pub k: usize,
    pub folds: Vec<FoldResult>,
    pub mean_test_ndcg: f64,
    pub mean_base_ndcg: f64,
    /// Per test query: `(base NDCG, re-ranked NDCG)`.
    pub per_query: BTreeMap<String, (f64, f64)>,
    pub t_test: TTest,
}

impl GridSearchReport {
    pub fn table(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(
            out,
            "{:<6} {:>8} {:>12} {:>12} {:>12}",
            "fold", "alpha", "train", "test", "base test"
        );
        for (i, f) in self.folds.iter().enumerate() {
            let _ = writeln!(
                out,
                "{:<6} {:>8.4} {:>12.4} {:>12.4} {:>12.4}",
                i + 1,
                f.alpha,
                f.train_ndcg,
                f.test_ndcg,
                f.base_test_ndcg
            );
        }
        let _ = writeln!(
            out,
            "\nNDCG@{}: base {:.4}  re-ranked {:.4}  paired t {:.3}  p {:.4}",
            self.k, self.mean_base_ndcg, self.mean_test_ndcg, self.t_test.t, self.t_test.p_value
        );
        out
    }

    pub fn csv(&self) -> String {
        let mut out = String::from("fold,alpha,train_ndcg,test_ndcg,base_test_ndcg\n");
        for (i, f) in self.folds.iter().enumerate() {
            let _ = writeln!(
                out,
                "{},{},{},{},{}",
                i + 1,
                f.alpha,
                f.train_ndcg,
                f.test_ndcg,
                f.base_test_ndcg
            );
        }
        let _ = writeln!(
            out,
            "mean,,,{},{}\np_value,{}",
            self.mean_test_ndcg, self.mean_base_ndcg, self.t_test.p_value
        );
        out
    }
}

/// For each fold, picks the grid alpha with the best mean NDCG@k over the
/// other folds' queries (smallest alpha on ties) and scores the fold with it.
pub fn grid_search_alpha(
    folds: &[Vec<String>],
    run: &RetrievalRun,
    ips: &EmbeddingScores,
    qrels: &Qrels,
    k: usize,
) -> Result<GridSearchReport> {
    let grid = alpha_grid();
    let reranked: Vec<RetrievalRun> = grid
        .iter()
        .map(|&a| rerank_with(run, ips, a).map(|r| r.0))
        .collect::<Result<_>>()?;
    let base = &reranked[0];
    let mut results = Vec::with_capacity(folds.len());
    let mut per_query = BTreeMap::new();
    for (fi, test) in folds.iter().enumerate() {
        let train: Vec<&str> = folds
            .iter()
            .enumerate()
            .filter(|&(j, _)| j != fi)
            .flat_map(|(_, f)| f.iter().map(String::as_str))
            .collect();
        let judged = |qs: &[&str]| ndcg_for(base, qrels, k, qs.iter().copied()).per_query.len();
        let test_refs: Vec<&str> = test.iter().map(String::as_str).collect();
        if judged(&train) == 0 || judged(&test_refs) == 0 {
            return Err(Error::Config(format!(
                "fold {} has no judged queries",
                fi + 1
            )));
        }
        let mut best = (0usize, f64::NEG_INFINITY);
        for (ai, r) in reranked.iter().enumerate() {
            let m = ndcg_for(r, qrels, k, train.iter().copied()).mean;
            if m > best.1 {
                best = (ai, m);
            }
        }
        let chosen = &reranked[best.0];
        let test_rep = ndcg_for(chosen, qrels, k, test_refs.iter().copied());
        let base_rep = ndcg_for(base, qrels, k, test_refs.iter().copied());
        for (q, v) in &test_rep.per_query {
            per_query.insert(q.clone(), (base_rep.per_query[q], *v));
        }
        results.push(FoldResult {
            alpha: grid[best.0],
            train_ndcg: best.1,
            test_ndcg: test_rep.mean,
            base_test_ndcg: base_rep.mean,
        });
    }
    let nf = results.len() as f64;
    let (b, n): (Vec<f64>, Vec<f64>) = per_query.values().copied().unzip();
    Ok(GridSearchReport {
        k,
        mean_test_ndcg: results.iter().map(|f| f.test_ndcg).sum::<f64>() / nf,
        mean_base_ndcg: results.iter().map(|f| f.base_test_ndcg).sum::<f64>() / nf,
        folds: results,
        t_test: paired_t_test(&n, &b),
        per_query,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TTest {
    pub mean_diff: f64,
    pub t: f64,
    pub p_value: f64,
}

/// Two-tailed paired t-test on `a - b`.
pub fn paired_t_test(a: &[f64], b: &[f64]) -> TTest {
    let n = a.len().min(b.len());
    let diffs: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    let mean = if n == 0 {
        0.0
    } else {
        diffs.iter().sum::<f64>() / n as f64
    };
    if n < 2 {
        return TTest {
            mean_diff: mean,
            t: 0.0,
            p_value: 1.0,
        };
    }
    let var = diffs.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    if var == 0.0 {
        let (t, p) = if mean == 0.0 {
            (0.0, 1.0)
        } else {
            (mean.signum() * f64::INFINITY, 0.0)
        };
        return TTest {
            mean_diff: mean,
            t,
            p_value: p,
        };
    }
    let t = mean / (var / n as f64).sqrt();
    let dist = StudentsT::new(0.0, 1.0, (n - 1) as f64).expect("positive degrees of freedom");
    TTest {
        mean_diff: mean,
        t,
        p_value: 2.0 * (1.0 - dist.cdf(t.abs())),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dcg_fixtures() {
        assert!((dcg_at_k(&[2, 1, 0], 3) - 3.630_929_753_571_457).abs() < 1e-6);
        assert_eq!(dcg_at_k(&[0, 0, 0], 3), 0.0);
        assert_eq!(dcg_at_k(&[2, 1], 10), dcg_at_k(&[2, 1, 0, 0], 10));
        let reversed = dcg_at_k(&[0, 1, 2], 3) / dcg_at_k(&[2, 1, 0], 3);
        assert!((reversed - 0.586_883).abs() < 1e-6);
    }

    fn toy() -> (RetrievalRun, Qrels) {
        let run = RetrievalRun::from_rows([
            ("q", "a", 3.0),
            ("q", "b", 2.0),
            ("q", "c", 1.0),
            ("z", "x", 1.0),
        ]);
        let mut qrels = Qrels::default();
        qrels.insert("q", "c", 2).unwrap();
        qrels.insert("q", "b", 1).unwrap();
        qrels.insert("q", "a", 0).unwrap();
        qrels.insert("z", "x", 0).unwrap();
        (run, qrels)
    }

    #[test]
    fn ndcg_excludes_unjudged_queries() {
        let (run, qrels) = toy();
        let r = ndcg_at_k(&run, &qrels, 3);
        assert_eq!(r.excluded, 1);
        assert!((r.per_query["q"] - 0.586_883).abs() < 1e-6);
    }

    #[test]
    fn interpolation_endpoints() {
        let (run, _) = toy();
        let q: HashMap<String, Array1<f64>> = [("q".to_string(), Array1::from(vec![1.0]))].into();
        let d: HashMap<String, Array1<f64>> = [("a", 0.0), ("b", 1.0), ("c", 5.0)]
            .into_iter()
            .map(|(k, v)| (k.to_string(), Array1::from(vec![v])))
            .collect();
        assert_eq!(
            rerank(&run, &q, &d, 0.0).unwrap().docs("q"),
            vec!["a", "b", "c"]
        );
        assert_eq!(
            rerank(&run, &q, &d, 1.0).unwrap().docs("q"),
            vec!["c", "b", "a"]
        );
        let half = rerank(&run, &q, &d, 0.5).unwrap();
        let b = half.queries["q"].iter().find(|e| e.doc == "b").unwrap();
        assert_eq!(b.z_new, 0.5 * 1.0 + 0.5 * 2.0);
        assert!(rerank(&run, &q, &d, 1.5).is_err());
    }

    #[test]
    fn folds_partition_queries() {
        let qs: Vec<String> = (0..23).map(|i| format!("q{i}")).collect();
        let folds = make_folds(qs.iter().map(String::as_str), 5, 7);
        let mut all: Vec<String> = folds.concat();
        all.sort();
        let mut want = qs.clone();
        want.sort();
        assert_eq!(all, want);
        assert!(folds.iter().all(|f| f.len() == 4 || f.len() == 5));
        assert_eq!(folds, make_folds(qs.iter().map(String::as_str), 5, 7));
    }

    #[test]
    fn t_test_reference_value() {
        // t = 1.5 / (sqrt(5/3)/2) with 3 degrees of freedom
        let a = [1.0, 2.0, 3.0, 6.0];
        let b = [0.0, 0.0, 0.0, 6.0];
        let r = paired_t_test(&a, &b);
        assert!((r.t - 2.323_790_007_724_45).abs() < 1e-9);
        assert!((r.p_value - 0.102_749).abs() < 1e-4);
    }
}
