//! Dense embedding tables, vector math and the word2vec text format.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use rand::Rng as _;

use crate::error::{Error, Result};
use crate::rng::Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TableRole {
    /// Center-word table of the skip-gram baseline.
    Center,
    /// Context-word table, the output lexicon of the dynamic trainer.
    Context,
    /// Loaded from a file; origin unknown.
    External,
    /// Linear map between vector spaces.
    Projection,
}

/// Row-major `rows x dim` table.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingMatrix {
    data: Vec<f64>,
    rows: usize,
    dim: usize,
    role: TableRole,
}

impl EmbeddingMatrix {
    pub fn zeros(rows: usize, dim: usize, role: TableRole) -> Self {
        EmbeddingMatrix {
            data: vec![0.0; rows * dim],
            rows,
            dim,
            role,
        }
    }

    pub fn from_vec(data: Vec<f64>, rows: usize, dim: usize, role: TableRole) -> Result<Self> {
        if data.len() != rows * dim {
            return Err(Error::DimensionMismatch {
                expected: rows * dim,
                actual: data.len(),
            });
        }
        Ok(EmbeddingMatrix {
            data,
            rows,
            dim,
            role,
        })
    }

    /// Entries drawn i.i.d. from `[-0.5/dim, 0.5/dim]`.
    pub fn init_uniform(rows: usize, dim: usize, role: TableRole, rng: &mut Rng) -> Self {
        assert!(rows >= 1 && dim >= 1, "embedding table must be nonempty");
        let bound = 0.5 / dim as f64;
        let data = (0..rows * dim)
            .map(|_| rng.gen_range(-bound..=bound))
            .collect();
        EmbeddingMatrix {
            data,
            rows,
            dim,
            role,
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn role(&self) -> TableRole {
        self.role
    }

    pub fn row(&self, id: usize) -> &[f64] {
        &self.data[id * self.dim..(id + 1) * self.dim]
    }

    pub fn row_mut(&mut self, id: usize) -> &mut [f64] {
        &mut self.data[id * self.dim..(id + 1) * self.dim]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}

#[inline]
pub fn dot(x: &[f64], y: &[f64]) -> f64 {
    debug_assert_eq!(x.len(), y.len());
    x.iter().zip(y).map(|(a, b)| a * b).sum()
}

#[inline]
pub fn norm(x: &[f64]) -> f64 {
    dot(x, x).sqrt()
}

/// `y += alpha * x`
#[inline]
pub fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    debug_assert_eq!(x.len(), y.len());
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

pub fn cosine(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() {
        return Err(Error::DimensionMismatch {
            expected: x.len(),
            actual: y.len(),
        });
    }
    let (nx, ny) = (norm(x), norm(y));
    if nx == 0.0 || ny == 0.0 {
        return Err(Error::Data("cosine of a zero-norm vector is undefined".into()));
    }
    Ok((dot(x, y) / (nx * ny)).clamp(-1.0, 1.0))
}

/// Top-`k` rows by cosine to row `query`, excluding the query itself.
///
/// Sorted by descending similarity, ties by ascending id. Zero rows score 0.
pub fn nearest_neighbors(matrix: &EmbeddingMatrix, query: usize, k: usize) -> Result<Vec<(usize, f64)>> {
    if query >= matrix.rows() {
        return Err(Error::Data(format!(
            "query id {} outside table of {} rows",
            query,
            matrix.rows()
        )));
    }
    if k >= matrix.rows() {
        return Err(Error::Config(format!(
            "k = {} must be smaller than the vocabulary size {}",
            k,
            matrix.rows()
        )));
    }
    let q = matrix.row(query);
    let qn = norm(q);
    if qn == 0.0 {
        return Err(Error::Data(format!("row {} has zero norm", query)));
    }
    let mut scored: Vec<(usize, f64)> = (0..matrix.rows())
        .filter(|&id| id != query)
        .map(|id| {
            let r = matrix.row(id);
            let rn = norm(r);
            let sim = if rn == 0.0 { 0.0 } else { (dot(q, r) / (qn * rn)).clamp(-1.0, 1.0) };
            (id, sim)
        })
        .collect();
    scored.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    scored.truncate(k);
    Ok(scored)
}

/// Write word2vec text format: "<rows> <dim>" header, then
/// "<word> <v1> ... <vdim>" with six decimals.
pub fn write_text<W: Write, S: AsRef<str>>(mut out: W, matrix: &EmbeddingMatrix, words: &[S]) -> Result<()> {
    if words.len() != matrix.rows() {
        return Err(Error::DimensionMismatch {
            expected: matrix.rows(),
            actual: words.len(),
        });
    }
    writeln!(out, "{} {}", matrix.rows(), matrix.dim())?;
    let mut line = String::new();
    for (id, word) in words.iter().enumerate() {
        line.clear();
        line.push_str(word.as_ref());
        for v in matrix.row(id) {
            use std::fmt::Write as _;
            // normalize -0.000000 so reloaded zeros print identically
            let v = if *v == 0.0 { 0.0 } else { *v };
            write!(line, " {:.6}", v).unwrap();
        }
        line.push('\n');
        out.write_all(line.as_bytes())?;
    }
    out.flush()?;
    Ok(())
}

pub fn save_text<S: AsRef<str>>(path: impl AsRef<Path>, matrix: &EmbeddingMatrix, words: &[S]) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    write_text(BufWriter::new(file), matrix, words)
}

/// Read word2vec text format. Trailing whitespace on rows, as written by the
/// reference C tool, is accepted.
pub fn read_text<R: BufRead>(reader: R, source: &str) -> Result<(EmbeddingMatrix, Vec<String>)> {
    let mut lines = reader.lines();
    let header = match lines.next() {
        Some(line) => line?,
        None => return Err(Error::parse(source, 1, "missing \"<rows> <dim>\" header")),
    };
    let mut fields = header.split_whitespace();
    let parse_dim = |f: Option<&str>| -> Result<usize> {
        f.and_then(|s| s.parse().ok())
            .ok_or_else(|| Error::parse(source, 1, format!("malformed header {:?}", header)))
    };
    let rows = parse_dim(fields.next())?;
    let dim = parse_dim(fields.next())?;
    if fields.next().is_some() || dim == 0 {
        return Err(Error::parse(source, 1, format!("malformed header {:?}", header)));
    }

    let mut words = Vec::with_capacity(rows);
    let mut data = Vec::with_capacity(rows * dim);
    for (idx, line) in lines.enumerate() {
        let lineno = idx + 2;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        if words.len() == rows {
            return Err(Error::parse(source, lineno, format!("more than {} rows", rows)));
        }
        let mut fields = line.split_whitespace();
        let word = fields.next().unwrap();
        let before = data.len();
        for f in fields {
            let v: f64 = f
                .parse()
                .map_err(|_| Error::parse(source, lineno, format!("invalid value {:?}", f)))?;
            if !v.is_finite() {
                return Err(Error::parse(source, lineno, format!("non-finite value {:?}", f)));
            }
            data.push(v);
        }
        let got = data.len() - before;
        if got != dim {
            return Err(Error::parse(
                source,
                lineno,
                format!("row for {:?} has {} values, expected {}", word, got, dim),
            ));
        }
        words.push(word.to_owned());
    }
    if words.len() != rows {
        return Err(Error::parse(
            source,
            words.len() + 2,
            format!("expected {} rows, found {}", rows, words.len()),
        ));
    }
    Ok((EmbeddingMatrix::from_vec(data, rows, dim, TableRole::External)?, words))
}

pub fn load_text(path: impl AsRef<Path>) -> Result<(EmbeddingMatrix, Vec<String>)> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_text(BufReader::new(file), &path.display().to_string())
}

/// An embedding table together with its word index.
#[derive(Debug, Clone)]
pub struct WordVectors {
    words: Vec<String>,
    index: HashMap<String, usize>,
    matrix: EmbeddingMatrix,
}

impl WordVectors {
    pub fn new(words: Vec<String>, matrix: EmbeddingMatrix) -> Result<Self> {
        if words.len() != matrix.rows() {
            return Err(Error::DimensionMismatch {
                expected: matrix.rows(),
                actual: words.len(),
            });
        }
        let mut index = HashMap::with_capacity(words.len());
        for (id, w) in words.iter().enumerate() {
            if index.insert(w.clone(), id).is_some() {
                return Err(Error::Data(format!("duplicate word {:?} in embedding table", w)));
            }
        }
        Ok(WordVectors { words, index, matrix })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let (matrix, words) = load_text(path)?;
        Self::new(words, matrix)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        save_text(path, &self.matrix, &self.words)
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.matrix.dim()
    }

    pub fn id(&self, word: &str) -> Option<usize> {
        self.index.get(word).copied()
    }

    pub fn word(&self, id: usize) -> &str {
        &self.words[id]
    }

    pub fn words(&self) -> &[String] {
        &self.words
    }

    pub fn vector(&self, word: &str) -> Option<&[f64]> {
        self.id(word).map(|id| self.matrix.row(id))
    }

    pub fn matrix(&self) -> &EmbeddingMatrix {
        &self.matrix
    }

    pub fn neighbors(&self, word: &str, k: usize) -> Result<Vec<(&str, f64)>> {
        let id = self
            .id(word)
            .ok_or_else(|| Error::Data(format!("unknown word {:?}", word)))?;
        Ok(nearest_neighbors(&self.matrix, id, k)?
            .into_iter()
            .map(|(id, s)| (self.word(id), s))
            .collect())
    }
}
