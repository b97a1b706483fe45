//! Corpus ingestion, vocabulary construction and sampling distributions.
//!
//! Tokenization policy: lowercase, split on whitespace, strip leading and
//! trailing punctuation from each token, drop tokens that end up empty.
//! Interior punctuation such as the apostrophe in "don't" is kept.

use std::collections::{HashMap, HashSet};
use std::fs::File;
use std::hash::Hasher;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use fnv::FnvHasher;
use rand::Rng as _;

use crate::error::{Error, Result};
use crate::rng::Rng;

/// Default minimum word count for vocabulary membership.
pub const DEFAULT_MIN_COUNT: u64 = 5;
/// Default inclusive sentence length bounds, in tokens.
pub const DEFAULT_MIN_LEN: usize = 10;
pub const DEFAULT_MAX_LEN: usize = 40;
/// Default subsampling threshold.
pub const DEFAULT_SUBSAMPLE: f64 = 1e-5;

pub fn tokenize(line: &str) -> Vec<String> {
    line.split_whitespace()
        .map(|tok| {
            tok.trim_matches(|c: char| c.is_ascii_punctuation() || is_unicode_punctuation(c))
                .to_lowercase()
        })
        .filter(|tok| !tok.is_empty())
        .collect()
}

fn is_unicode_punctuation(c: char) -> bool {
    matches!(
        c,
        '\u{2010}'..='\u{2027}' | '\u{2030}'..='\u{205E}' | '\u{00A1}' | '\u{00AB}' | '\u{00BB}' | '\u{00BF}'
    )
}

/// Keep sentences whose token count lies in `[min_len, max_len]`.
pub fn filter_sentences<T>(
    sentences: Vec<Vec<T>>,
    min_len: usize,
    max_len: usize,
) -> Result<Vec<Vec<T>>> {
    if min_len > max_len {
        return Err(Error::Config(format!(
            "sentence length bounds inverted: min_len {} > max_len {}",
            min_len, max_len
        )));
    }
    Ok(sentences
        .into_iter()
        .filter(|s| s.len() >= min_len && s.len() <= max_len)
        .collect())
}

/// Tokenize every line of a reader. Blank lines produce empty sentences.
pub fn read_sentences<R: BufRead>(reader: R) -> Result<Vec<Vec<String>>> {
    reader
        .lines()
        .map(|line| Ok(tokenize(&line?)))
        .collect()
}

pub fn read_corpus_file(path: impl AsRef<Path>) -> Result<Vec<Vec<String>>> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_sentences(BufReader::new(file)).map_err(|e| match e {
        Error::Stream(source) => Error::io(path, source),
        other => other,
    })
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocab {
    words: Vec<String>,
    ids: HashMap<String, usize>,
    counts: Vec<u64>,
    total_tokens: u64,
}

impl Vocab {
    /// Count tokens and keep those occurring at least `min_count` times.
    ///
    /// Ids are assigned by descending count, ties broken lexicographically.
    pub fn build<S, T>(sentences: &[S], min_count: u64) -> Result<Self>
    where
        S: AsRef<[T]>,
        T: AsRef<str>,
    {
        if sentences.is_empty() {
            return Err(Error::Data("cannot build a vocabulary from an empty corpus".into()));
        }
        let mut counts: HashMap<&str, u64> = HashMap::new();
        for sentence in sentences {
            for tok in sentence.as_ref() {
                *counts.entry(tok.as_ref()).or_default() += 1;
            }
        }
        let mut entries: Vec<(String, u64)> = counts
            .into_iter()
            .filter(|&(_, c)| c >= min_count)
            .map(|(w, c)| (w.to_owned(), c))
            .collect();
        if entries.is_empty() {
            return Err(Error::Data(format!(
                "no word occurs at least {} times; vocabulary is empty",
                min_count
            )));
        }
        entries.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
        Ok(Self::from_entries(entries))
    }

    /// Build from `(word, count)` pairs, preserving their order as id order.
    pub fn from_entries(entries: Vec<(String, u64)>) -> Self {
        let mut words = Vec::with_capacity(entries.len());
        let mut counts = Vec::with_capacity(entries.len());
        let mut ids = HashMap::with_capacity(entries.len());
        for (word, count) in entries {
            ids.insert(word.clone(), words.len());
            words.push(word);
            counts.push(count);
        }
        let total_tokens = counts.iter().sum();
        Vocab {
            words,
            ids,
            counts,
            total_tokens,
        }
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    pub fn id(&self, word: &str) -> Option<usize> {
        self.ids.get(word).copied()
    }

    pub fn word(&self, id: usize) -> &str {
        &self.words[id]
    }

    pub fn words(&self) -> &[String] {
        &self.words
    }

    pub fn count(&self, id: usize) -> u64 {
        self.counts[id]
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    pub fn total_tokens(&self) -> u64 {
        self.total_tokens
    }

    /// Map tokens to ids, dropping out-of-vocabulary tokens.
    pub fn encode<T: AsRef<str>>(&self, tokens: &[T]) -> Vec<usize> {
        tokens.iter().filter_map(|t| self.id(t.as_ref())).collect()
    }

    pub fn decode(&self, ids: &[usize]) -> Vec<&str> {
        ids.iter().map(|&id| self.word(id)).collect()
    }

    /// Write "<word> <count>" lines in id order.
    pub fn write<W: Write>(&self, mut out: W) -> Result<()> {
        for (word, count) in self.words.iter().zip(&self.counts) {
            writeln!(out, "{} {}", word, count)?;
        }
        out.flush()?;
        Ok(())
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        self.write(BufWriter::new(file))
    }

    pub fn read<R: BufRead>(reader: R, source: &str) -> Result<Self> {
        let mut entries = Vec::new();
        let mut seen = HashSet::new();
        for (idx, line) in reader.lines().enumerate() {
            let line = line?;
            let lineno = idx + 1;
            if line.trim().is_empty() {
                continue;
            }
            let mut parts = line.split_whitespace();
            let (word, count) = match (parts.next(), parts.next(), parts.next()) {
                (Some(w), Some(c), None) => (w, c),
                _ => return Err(Error::parse(source, lineno, "expected \"<word> <count>\"")),
            };
            let count: u64 = count
                .parse()
                .map_err(|_| Error::parse(source, lineno, format!("invalid count {:?}", count)))?;
            if !seen.insert(word.to_owned()) {
                return Err(Error::parse(source, lineno, format!("duplicate word {:?}", word)));
            }
            entries.push((word.to_owned(), count));
        }
        if entries.is_empty() {
            return Err(Error::Data(format!("{}: vocabulary file is empty", source)));
        }
        Ok(Self::from_entries(entries))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        Self::read(BufReader::new(file), &path.display().to_string())
    }
}

/// Sentences as vocabulary ids. Every id is below the vocabulary size.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct SentenceStream {
    sentences: Vec<Vec<usize>>,
}

impl SentenceStream {
    /// Encode tokenized sentences. Sentences left empty after dropping
    /// out-of-vocabulary tokens are removed.
    pub fn encode<S, T>(sentences: &[S], vocab: &Vocab) -> Self
    where
        S: AsRef<[T]>,
        T: AsRef<str>,
    {
        let sentences = sentences
            .iter()
            .map(|s| vocab.encode(s.as_ref()))
            .filter(|s| !s.is_empty())
            .collect();
        SentenceStream { sentences }
    }

    pub fn from_ids(sentences: Vec<Vec<usize>>, vocab_len: usize) -> Result<Self> {
        for (idx, s) in sentences.iter().enumerate() {
            if let Some(&bad) = s.iter().find(|&&id| id >= vocab_len) {
                return Err(Error::Data(format!(
                    "sentence {} contains id {} outside vocabulary of size {}",
                    idx, bad, vocab_len
                )));
            }
        }
        Ok(SentenceStream { sentences })
    }

    pub fn len(&self) -> usize {
        self.sentences.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sentences.is_empty()
    }

    pub fn get(&self, idx: usize) -> &[usize] {
        &self.sentences[idx]
    }

    pub fn iter(&self) -> impl Iterator<Item = &[usize]> {
        self.sentences.iter().map(Vec::as_slice)
    }

    pub fn token_count(&self) -> usize {
        self.sentences.iter().map(Vec::len).sum()
    }

    pub fn max_len(&self) -> usize {
        self.sentences.iter().map(Vec::len).max().unwrap_or(0)
    }

    /// 64-bit FNV-1a over the encoded corpus text: each sentence's words
    /// joined by single spaces and terminated by "\n". Hex encoded.
    pub fn fingerprint(&self, vocab: &Vocab) -> String {
        let mut hasher = FnvHasher::default();
        for sentence in &self.sentences {
            for (pos, &id) in sentence.iter().enumerate() {
                if pos > 0 {
                    hasher.write(b" ");
                }
                hasher.write(vocab.word(id).as_bytes());
            }
            hasher.write(b"\n");
        }
        format!("{:016x}", hasher.finish())
    }
}

/// A prepared training corpus: filtered sentences, their vocabulary and the
/// id-encoded stream.
#[derive(Debug, Clone)]
pub struct Corpus {
    pub vocab: Vocab,
    pub sentences: SentenceStream,
}

impl Corpus {
    /// Filter by raw token length, build the vocabulary (unless one is given)
    /// and encode.
    pub fn prepare(
        raw: Vec<Vec<String>>,
        min_len: usize,
        max_len: usize,
        min_count: u64,
        vocab: Option<Vocab>,
    ) -> Result<Self> {
        let filtered = filter_sentences(raw, min_len, max_len)?;
        if filtered.is_empty() {
            return Err(Error::Data(format!(
                "no sentence has between {} and {} tokens",
                min_len, max_len
            )));
        }
        let vocab = match vocab {
            Some(v) => v,
            None => Vocab::build(&filtered, min_count)?,
        };
        let sentences = SentenceStream::encode(&filtered, &vocab);
        if sentences.is_empty() {
            return Err(Error::Data("corpus is empty after vocabulary encoding".into()));
        }
        Ok(Corpus { vocab, sentences })
    }
}

/// Probability of discarding a token with relative frequency `count / total`.
/// Clamped at zero for words rarer than the threshold.
pub fn subsample_prob(count: u64, total: u64, threshold: f64) -> f64 {
    let freq = count as f64 / total as f64;
    (1.0 - (threshold / freq).sqrt()).max(0.0)
}

/// Unigram distribution raised to the 3/4 power, stored as exact prefix sums.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseTable {
    cumulative: Vec<f64>,
}

impl NoiseTable {
    pub fn new(vocab: &Vocab) -> Self {
        Self::from_counts(vocab.counts())
    }

    pub fn from_counts(counts: &[u64]) -> Self {
        assert!(!counts.is_empty(), "noise table needs a nonempty vocabulary");
        let weights: Vec<f64> = counts.iter().map(|&c| (c as f64).powf(0.75)).collect();
        let z: f64 = weights.iter().sum();
        let mut acc = 0.0;
        let mut cumulative: Vec<f64> = weights
            .iter()
            .map(|w| {
                acc += w;
                acc / z
            })
            .collect();
        // the division leaves the last entry within an ulp of 1; pin it
        *cumulative.last_mut().unwrap() = 1.0;
        NoiseTable { cumulative }
    }

    pub fn len(&self) -> usize {
        self.cumulative.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cumulative.is_empty()
    }

    pub fn cumulative(&self) -> &[f64] {
        &self.cumulative
    }

    pub fn prob(&self, id: usize) -> f64 {
        if id == 0 {
            self.cumulative[0]
        } else {
            self.cumulative[id] - self.cumulative[id - 1]
        }
    }

    pub fn draw(&self, rng: &mut Rng) -> usize {
        let r: f64 = rng.gen();
        self.cumulative
            .partition_point(|&c| c <= r)
            .min(self.cumulative.len() - 1)
    }

    /// Draw an id not contained in `exclude`, resampling on collision.
    pub fn sample_negative(&self, rng: &mut Rng, exclude: &[usize]) -> Result<usize> {
        if exclude.len() >= self.len() {
            let covered: HashSet<usize> = exclude.iter().copied().filter(|&id| id < self.len()).collect();
            if covered.len() == self.len() {
                return Err(Error::Data(
                    "negative sampling exclusion set covers the whole vocabulary".into(),
                ));
            }
        }
        loop {
            let id = self.draw(rng);
            if !exclude.contains(&id) {
                return Ok(id);
            }
        }
    }
}
