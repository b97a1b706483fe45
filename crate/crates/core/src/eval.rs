//! Word similarity, analogy and relation similarity evaluation.
//!
//! Records containing out-of-vocabulary words are skipped and counted, so
//! every score comes with its coverage.

use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;

use crate::embed_store::{cosine, dot, norm, WordVectors};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct SimilarityRecord {
    pub first: String,
    pub second: String,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct SimilarityDataset {
    pub name: String,
    pub records: Vec<SimilarityRecord>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AnalogyRecord {
    pub x: String,
    pub y: String,
    pub x_star: String,
    pub y_star: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AnalogyCategory {
    pub name: String,
    pub records: Vec<AnalogyRecord>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct AnalogyDataset {
    pub categories: Vec<AnalogyCategory>,
}

/// Word pairs `(x, y)` and `(x*, y*)` with a gold relational similarity.
#[derive(Debug, Clone, PartialEq)]
pub struct RelationRecord {
    pub pair: AnalogyRecord,
    pub score: f64,
}

/// Average (1-based) ranks; tied values share the mean of their positions.
pub fn average_ranks(xs: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..xs.len()).collect();
    order.sort_by(|&a, &b| xs[a].total_cmp(&xs[b]));
    let mut ranks = vec![0.0; xs.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i + 1;
        while j < order.len() && xs[order[j]] == xs[order[i]] {
            j += 1;
        }
        let rank = (i + j + 1) as f64 / 2.0;
        for &k in &order[i..j] {
            ranks[k] = rank;
        }
        i = j;
    }
    ranks
}

pub fn pearson(xs: &[f64], ys: &[f64]) -> Result<f64> {
    if xs.len() != ys.len() || xs.len() < 2 {
        return Err(Error::Data(format!(
            "correlation needs two equal-length lists of at least 2 values, got {} and {}",
            xs.len(),
            ys.len()
        )));
    }
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (x, y) in xs.iter().zip(ys) {
        let (dx, dy) = (x - mx, y - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(Error::Data("correlation is undefined for a constant list".into()));
    }
    Ok((sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0))
}

/// Spearman's rank correlation with average ranks for ties.
pub fn spearman(xs: &[f64], ys: &[f64]) -> Result<f64> {
    if xs.iter().chain(ys).any(|v| !v.is_finite()) {
        return Err(Error::Data("correlation inputs must be finite".into()));
    }
    pearson(&average_ranks(xs), &average_ranks(ys))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimilarityScore {
    pub rho: f64,
    pub coverage: f64,
    /// Pairs actually scored.
    pub n: usize,
}

pub fn eval_similarity(vectors: &WordVectors, dataset: &SimilarityDataset) -> Result<SimilarityScore> {
    let mut model = Vec::new();
    let mut gold = Vec::new();
    for r in &dataset.records {
        if let (Some(a), Some(b)) = (vectors.vector(&r.first), vectors.vector(&r.second)) {
            model.push(cosine(a, b)?);
            gold.push(r.score);
        }
    }
    if model.len() < 2 {
        return Err(Error::Data(format!(
            "only {} of {} similarity pairs are in the vocabulary",
            model.len(),
            dataset.records.len()
        )));
    }
    Ok(SimilarityScore {
        rho: spearman(&model, &gold)?,
        coverage: model.len() as f64 / dataset.records.len() as f64,
        n: model.len(),
    })
}

/// `argmax_{y' not in {x, y, x*}} cos(x* + y - x, y')`, ties to the lower id.
/// Returns `Ok(None)` when a query word is out of vocabulary.
pub fn solve_analogy_3cosadd(vectors: &WordVectors, x: &str, y: &str, x_star: &str) -> Result<Option<usize>> {
    let (Some(ix), Some(iy), Some(is)) = (vectors.id(x), vectors.id(y), vectors.id(x_star)) else {
        return Ok(None);
    };
    let m = vectors.matrix();
    let target: Vec<f64> = (0..m.dim()).map(|t| m.row(is)[t] + m.row(iy)[t] - m.row(ix)[t]).collect();
    let tn = norm(&target);
    let mut best: Option<(usize, f64)> = None;
    for id in 0..m.rows() {
        if id == ix || id == iy || id == is {
            continue;
        }
        let row = m.row(id);
        let denom = tn * norm(row);
        let score = if denom > 0.0 { dot(&target, row) / denom } else { 0.0 };
        if best.is_none_or(|(_, s)| score > s) {
            best = Some((id, score));
        }
    }
    match best {
        Some((id, _)) => Ok(Some(id)),
        None => Err(Error::Data(format!(
            "no candidate answers for {} : {} :: {} : ?",
            x, y, x_star
        ))),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CategoryScore {
    pub name: String,
    pub correct: usize,
    pub scored: usize,
    pub total: usize,
}

impl CategoryScore {
    /// Zero when no record in the category could be scored.
    pub fn accuracy(&self) -> f64 {
        if self.scored == 0 {
            0.0
        } else {
            self.correct as f64 / self.scored as f64
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AnalogyScore {
    pub accuracy: f64,
    pub correct: usize,
    pub scored: usize,
    pub total: usize,
    pub categories: Vec<CategoryScore>,
}

impl AnalogyScore {
    pub fn coverage(&self) -> f64 {
        self.scored as f64 / self.total.max(1) as f64
    }
}

/// Records whose answer `y*` is out of vocabulary are skipped like any other
/// OOV record, since they can never be answered.
pub fn eval_analogy(vectors: &WordVectors, dataset: &AnalogyDataset) -> Result<AnalogyScore> {
    let mut categories = Vec::with_capacity(dataset.categories.len());
    for cat in &dataset.categories {
        let mut score = CategoryScore {
            name: cat.name.clone(),
            correct: 0,
            scored: 0,
            total: cat.records.len(),
        };
        for r in &cat.records {
            let Some(answer) = vectors.id(&r.y_star) else { continue };
            if let Some(pred) = solve_analogy_3cosadd(vectors, &r.x, &r.y, &r.x_star)? {
                score.scored += 1;
                if pred == answer {
                    score.correct += 1;
                }
            }
        }
        categories.push(score);
    }
    let correct = categories.iter().map(|c| c.correct).sum();
    let scored: usize = categories.iter().map(|c| c.scored).sum();
    let total = categories.iter().map(|c| c.total).sum();
    if scored == 0 {
        return Err(Error::Data(format!("none of {} analogy records are in the vocabulary", total)));
    }
    Ok(AnalogyScore {
        accuracy: correct as f64 / scored as f64,
        correct,
        scored,
        total,
        categories,
    })
}

/// `cos(y - x, y* - x*)`.
pub fn relation_similarity(x: &[f64], y: &[f64], x_star: &[f64], y_star: &[f64]) -> Result<f64> {
    let a: Vec<f64> = y.iter().zip(x).map(|(p, q)| p - q).collect();
    let b: Vec<f64> = y_star.iter().zip(x_star).map(|(p, q)| p - q).collect();
    if norm(&a) == 0.0 || norm(&b) == 0.0 {
        return Err(Error::Data("relation offset is the zero vector".into()));
    }
    cosine(&a, &b)
}

/// Spearman correlation between model relation similarity and gold scores.
pub fn eval_relations(vectors: &WordVectors, records: &[RelationRecord]) -> Result<SimilarityScore> {
    let mut model = Vec::new();
    let mut gold = Vec::new();
    for r in records {
        let p = &r.pair;
        let words = [&p.x, &p.y, &p.x_star, &p.y_star].map(|w| vectors.vector(w));
        if let [Some(x), Some(y), Some(xs), Some(ys)] = words {
            model.push(relation_similarity(x, y, xs, ys)?);
            gold.push(r.score);
        }
    }
    if model.len() < 2 {
        return Err(Error::Data(format!(
            "only {} of {} relation records are in the vocabulary",
            model.len(),
            records.len()
        )));
    }
    Ok(SimilarityScore {
        rho: spearman(&model, &gold)?,
        coverage: model.len() as f64 / records.len() as f64,
        n: model.len(),
    })
}

/// Mean cosine over same-cluster word pairs minus mean cosine over
/// cross-cluster pairs. Words missing from `vectors` are ignored.
pub fn cluster_margin<S: AsRef<str>>(vectors: &WordVectors, clusters: &[Vec<S>]) -> Result<f64> {
    let rows: Vec<Vec<&[f64]>> = clusters
        .iter()
        .map(|c| c.iter().filter_map(|w| vectors.vector(w.as_ref())).collect())
        .collect();
    let (mut intra, mut n_intra, mut inter, mut n_inter) = (0.0, 0usize, 0.0, 0usize);
    for (ci, a) in rows.iter().enumerate() {
        for (i, u) in a.iter().enumerate() {
            for v in &a[i + 1..] {
                intra += cosine(u, v)?;
                n_intra += 1;
            }
            for b in &rows[ci + 1..] {
                for v in b {
                    inter += cosine(u, v)?;
                    n_inter += 1;
                }
            }
        }
    }
    if n_intra == 0 || n_inter == 0 {
        return Err(Error::Data(
            "cluster margin needs two clusters with a same-cluster pair in the vocabulary".into(),
        ));
    }
    Ok(intra / n_intra as f64 - inter / n_inter as f64)
}

fn parse_score(source: &str, lineno: usize, field: &str) -> Result<f64> {
    match field.parse::<f64>() {
        Ok(v) if v.is_finite() => Ok(v),
        _ => Err(Error::parse(source, lineno, format!("invalid score {:?}", field))),
    }
}

/// Lines `word1 word2 score`; `#` comments and blank lines are ignored.
pub fn read_similarity<R: BufRead>(reader: R, source: &str) -> Result<SimilarityDataset> {
    let mut records = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        let [a, b, s] = fields[..] else {
            return Err(Error::parse(source, i + 1, format!("expected 3 fields, found {}", fields.len())));
        };
        records.push(SimilarityRecord {
            first: a.to_lowercase(),
            second: b.to_lowercase(),
            score: parse_score(source, i + 1, s)?,
        });
    }
    Ok(SimilarityDataset {
        name: source.to_owned(),
        records,
    })
}

pub fn load_similarity(path: impl AsRef<Path>) -> Result<SimilarityDataset> {
    let path = path.as_ref();
    let (reader, source) = open(path)?;
    let mut ds = read_similarity(reader, &source)?;
    if let Some(stem) = path.file_stem() {
        ds.name = stem.to_string_lossy().into_owned();
    }
    Ok(ds)
}

fn analogy_fields(source: &str, lineno: usize, line: &str) -> Result<AnalogyRecord> {
    let fields: Vec<String> = line.split_whitespace().map(str::to_lowercase).collect();
    let [x, y, xs, ys] = &fields[..] else {
        return Err(Error::parse(source, lineno, format!("expected 4 words, found {}", fields.len())));
    };
    Ok(AnalogyRecord {
        x: x.clone(),
        y: y.clone(),
        x_star: xs.clone(),
        y_star: ys.clone(),
    })
}

/// Google analogy format: `: category` headers followed by `x y x* y*`
/// lines. Records before the first header go to an `uncategorized` group.
pub fn read_analogy<R: BufRead>(reader: R, source: &str) -> Result<AnalogyDataset> {
    let mut categories: Vec<AnalogyCategory> = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        if let Some(name) = line.strip_prefix(':') {
            categories.push(AnalogyCategory {
                name: name.trim().to_owned(),
                records: Vec::new(),
            });
            continue;
        }
        let record = analogy_fields(source, i + 1, line)?;
        if categories.is_empty() {
            categories.push(AnalogyCategory {
                name: "uncategorized".into(),
                records: Vec::new(),
            });
        }
        categories.last_mut().unwrap().records.push(record);
    }
    Ok(AnalogyDataset { categories })
}

/// Lines `x y x* y* score` with `#` comments.
pub fn read_relations<R: BufRead>(reader: R, source: &str) -> Result<Vec<RelationRecord>> {
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let Some((words, score)) = line.rsplit_once(char::is_whitespace) else {
            return Err(Error::parse(source, i + 1, "expected 4 words and a score"));
        };
        out.push(RelationRecord {
            pair: analogy_fields(source, i + 1, words)?,
            score: parse_score(source, i + 1, score)?,
        });
    }
    Ok(out)
}

fn open(path: &Path) -> Result<(BufReader<File>, String)> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    Ok((BufReader::new(file), path.display().to_string()))
}

pub fn load_analogy(path: impl AsRef<Path>) -> Result<AnalogyDataset> {
    let (reader, source) = open(path.as_ref())?;
    read_analogy(reader, &source)
}

pub fn load_relations(path: impl AsRef<Path>) -> Result<Vec<RelationRecord>> {
    let (reader, source) = open(path.as_ref())?;
    read_relations(reader, &source)
}
