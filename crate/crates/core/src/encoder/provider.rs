//! Sources of per-token contextual vectors.
//!
//! External vector file layout:
//!
//! ```text
//! dim <d>
//! corpus_fingerprint <16 hex digits>
//! <word> <f1> ... <fd>      one line per token
//!                           blank line ends a sentence
//! ```
//!
//! The fingerprint is [`SentenceStream::fingerprint`] of the corpus the
//! vectors were computed for. Producers that split words into sub-tokens
//! must pool them back to one vector per word (mean pooling is the usual
//! choice) before writing.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Lines, Write};
use std::path::{Path, PathBuf};

use super::{encode, EncoderParams};
use crate::corpus::{SentenceStream, Vocab};
use crate::error::{Error, Result};

/// Per-token vectors for one sentence, row-major `n x dim`.
pub type SentenceVectors = Vec<f64>;

pub enum ContextProvider {
    Builtin {
        params: EncoderParams,
        frozen: bool,
        cache: Option<Vec<SentenceVectors>>,
    },
    External(ExternalVectors),
}

impl ContextProvider {
    pub fn builtin(params: EncoderParams, frozen: bool) -> Self {
        ContextProvider::Builtin {
            params,
            frozen,
            cache: None,
        }
    }

    /// Keep encoder outputs across epochs. Only meaningful for a frozen
    /// built-in encoder.
    pub fn with_cache(self) -> Self {
        match self {
            ContextProvider::Builtin {
                params,
                frozen: true,
                ..
            } => ContextProvider::Builtin {
                params,
                frozen: true,
                cache: Some(Vec::new()),
            },
            other => other,
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            ContextProvider::Builtin { params, .. } => params.config.dim,
            ContextProvider::External(ext) => ext.dim,
        }
    }

    pub fn is_frozen(&self) -> bool {
        match self {
            ContextProvider::Builtin { frozen, .. } => *frozen,
            ContextProvider::External(_) => true,
        }
    }

    pub fn encoder(&self) -> Option<&EncoderParams> {
        match self {
            ContextProvider::Builtin { params, .. } => Some(params),
            ContextProvider::External(_) => None,
        }
    }

    pub fn encoder_mut(&mut self) -> Option<&mut EncoderParams> {
        match self {
            ContextProvider::Builtin { params, .. } => Some(params),
            ContextProvider::External(_) => None,
        }
    }

    pub fn begin_epoch(&mut self) -> Result<()> {
        match self {
            ContextProvider::Builtin { .. } => Ok(()),
            ContextProvider::External(ext) => ext.rewind(),
        }
    }

    /// Vectors for the sentence at `index`. Sentences must be requested in
    /// corpus order within an epoch.
    pub fn sentence(&mut self, index: usize, ids: &[usize], vocab: &Vocab) -> Result<SentenceVectors> {
        match self {
            ContextProvider::Builtin { params, cache, .. } => {
                if let Some(cache) = cache {
                    if let Some(v) = cache.get(index) {
                        return Ok(v.clone());
                    }
                    let v = encode(ids, params)?;
                    if cache.len() == index {
                        cache.push(v.clone());
                    }
                    Ok(v)
                } else {
                    encode(ids, params)
                }
            }
            ContextProvider::External(ext) => ext.next_sentence(index, ids, vocab),
        }
    }

    /// An independent reader positioned at sentence `start`, for use by a
    /// parallel worker. Requires a frozen source.
    pub fn fork_at(&self, start: usize) -> Result<ContextProvider> {
        match self {
            ContextProvider::Builtin { params, frozen: true, .. } => Ok(ContextProvider::builtin(params.clone(), true)),
            ContextProvider::Builtin { .. } => Err(Error::Config("cannot fork an unfrozen encoder".into())),
            ContextProvider::External(ext) => {
                let mut fork = open_external_vectors(&ext.path, ext.dim, &ext.fingerprint)?;
                fork.skip_sentences(start)?;
                Ok(ContextProvider::External(fork))
            }
        }
    }

    /// Confirm the source has no sentences beyond `len`.
    pub fn end_epoch(&mut self, len: usize) -> Result<()> {
        match self {
            ContextProvider::Builtin { .. } => Ok(()),
            ContextProvider::External(ext) => ext.expect_end(len),
        }
    }
}

pub struct ExternalVectors {
    path: PathBuf,
    dim: usize,
    fingerprint: String,
    lines: Lines<BufReader<File>>,
    lineno: usize,
}

fn read_header(path: &Path, expected_dim: usize, fingerprint: &str) -> Result<Lines<BufReader<File>>> {
    let source = path.display().to_string();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut lines = BufReader::new(file).lines();
    let mut header = |lineno: usize, key: &str| -> Result<String> {
        let line = lines
            .next()
            .transpose()?
            .ok_or_else(|| Error::parse(&source, lineno, format!("missing \"{} ...\" header", key)))?;
        match line.split_once(' ') {
            Some((k, v)) if k == key => Ok(v.trim().to_owned()),
            _ => Err(Error::parse(&source, lineno, format!("expected \"{} ...\", found {:?}", key, line))),
        }
    };
    let dim_field = header(1, "dim")?;
    let dim: usize = dim_field
        .parse()
        .map_err(|_| Error::parse(&source, 1, format!("invalid dim {:?}", dim_field)))?;
    if dim != expected_dim {
        return Err(Error::DimensionMismatch {
            expected: expected_dim,
            actual: dim,
        });
    }
    let declared = header(2, "corpus_fingerprint")?;
    if !declared.eq_ignore_ascii_case(fingerprint) {
        return Err(Error::FingerprintMismatch {
            expected: fingerprint.to_owned(),
            actual: declared,
        });
    }
    Ok(lines)
}

/// Open an external vector file after checking its dimension and corpus
/// fingerprint.
pub fn open_external_vectors(path: impl AsRef<Path>, expected_dim: usize, fingerprint: &str) -> Result<ExternalVectors> {
    let path = path.as_ref();
    let lines = read_header(path, expected_dim, fingerprint)?;
    Ok(ExternalVectors {
        path: path.to_owned(),
        dim: expected_dim,
        fingerprint: fingerprint.to_owned(),
        lines,
        lineno: 2,
    })
}

impl ExternalVectors {
    pub fn dim(&self) -> usize {
        self.dim
    }

    fn rewind(&mut self) -> Result<()> {
        self.lines = read_header(&self.path, self.dim, &self.fingerprint)?;
        self.lineno = 2;
        Ok(())
    }

    fn next_line(&mut self) -> Result<Option<String>> {
        let line = self.lines.next().transpose().map_err(|e| Error::io(&self.path, e))?;
        if line.is_some() {
            self.lineno += 1;
        }
        Ok(line)
    }

    /// Read the next sentence block and check it against the corpus sentence.
    pub fn next_sentence(&mut self, index: usize, ids: &[usize], vocab: &Vocab) -> Result<SentenceVectors> {
        let misaligned = |message: String| Error::Misaligned { sentence: index, message };
        let mut out = Vec::with_capacity(ids.len() * self.dim);
        let mut count = 0;
        while let Some(line) = self.next_line()? {
            if line.trim().is_empty() {
                if count == 0 {
                    continue;
                }
                break;
            }
            let mut fields = line.split_whitespace();
            let word = fields.next().unwrap();
            if count >= ids.len() {
                return Err(misaligned(format!(
                    "line {}: more than {} token vectors",
                    self.lineno,
                    ids.len()
                )));
            }
            let expected = vocab.word(ids[count]);
            if word != expected {
                return Err(misaligned(format!(
                    "line {}: token {} is {:?}, corpus has {:?}",
                    self.lineno, count, word, expected
                )));
            }
            let before = out.len();
            for f in fields {
                let v: f64 = f.parse().map_err(|_| {
                    Error::parse(self.path.display().to_string(), self.lineno, format!("invalid value {:?}", f))
                })?;
                out.push(v);
            }
            if out.len() - before != self.dim {
                return Err(Error::parse(
                    self.path.display().to_string(),
                    self.lineno,
                    format!("expected {} values, found {}", self.dim, out.len() - before),
                ));
            }
            count += 1;
        }
        if count != ids.len() {
            return Err(misaligned(format!(
                "found {} token vectors, corpus sentence has {} tokens",
                count,
                ids.len()
            )));
        }
        Ok(out)
    }

    /// Skip `n` sentence blocks without validating their contents.
    pub fn skip_sentences(&mut self, n: usize) -> Result<()> {
        let mut skipped = 0;
        let mut in_block = false;
        while skipped < n {
            match self.next_line()? {
                None => {
                    if in_block {
                        skipped += 1;
                    }
                    break;
                }
                Some(l) if l.trim().is_empty() => {
                    if in_block {
                        skipped += 1;
                        in_block = false;
                    }
                }
                Some(_) => in_block = true,
            }
        }
        if skipped < n {
            return Err(Error::Misaligned {
                sentence: skipped,
                message: "file ended early".into(),
            });
        }
        Ok(())
    }

    fn expect_end(&mut self, len: usize) -> Result<()> {
        while let Some(line) = self.next_line()? {
            if !line.trim().is_empty() {
                return Err(Error::Misaligned {
                    sentence: len,
                    message: format!("line {}: vectors beyond the last corpus sentence", self.lineno),
                });
            }
        }
        Ok(())
    }
}

/// Export built-in encoder outputs for every sentence in the external vector
/// format. Values use the shortest representation that parses back exactly.
pub fn write_context_vectors<W: Write>(
    out: W,
    params: &EncoderParams,
    sentences: &SentenceStream,
    vocab: &Vocab,
) -> Result<()> {
    let mut out = BufWriter::new(out);
    let d = params.config.dim;
    writeln!(out, "dim {}", d)?;
    writeln!(out, "corpus_fingerprint {}", sentences.fingerprint(vocab))?;
    for ids in sentences.iter() {
        let vectors = encode(ids, params)?;
        for (pos, &id) in ids.iter().enumerate() {
            out.write_all(vocab.word(id).as_bytes())?;
            for v in &vectors[pos * d..(pos + 1) * d] {
                write!(out, " {}", v)?;
            }
            out.write_all(b"\n")?;
        }
        out.write_all(b"\n")?;
    }
    out.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fixture() -> (Vocab, SentenceStream) {
        let vocab = Vocab::from_entries(vec![("a".into(), 3), ("b".into(), 2)]);
        let stream = SentenceStream::from_ids(vec![vec![0, 1], vec![1, 0, 0]], 2).unwrap();
        (vocab, stream)
    }

    fn write(dir: &Path, body: &str) -> PathBuf {
        let path = dir.join("ctx.txt");
        std::fs::write(&path, body).unwrap();
        path
    }

    #[test]
    fn delivers_vectors_in_order() {
        let (vocab, stream) = fixture();
        let dir = tempfile::tempdir().unwrap();
        let fp = stream.fingerprint(&vocab);
        let body = format!(
            "dim 2\ncorpus_fingerprint {}\na 1 2\nb 3 4\n\nb 5 6\na 7 8\na 9 10\n",
            fp
        );
        let path = write(dir.path(), &body);
        let mut provider = ContextProvider::External(open_external_vectors(&path, 2, &fp).unwrap());
        for epoch in 0..2 {
            provider.begin_epoch().unwrap();
            let s0 = provider.sentence(0, stream.get(0), &vocab).unwrap();
            let s1 = provider.sentence(1, stream.get(1), &vocab).unwrap();
            assert_eq!(s0, vec![1.0, 2.0, 3.0, 4.0], "epoch {}", epoch);
            assert_eq!(s1, vec![5.0, 6.0, 7.0, 8.0, 9.0, 10.0]);
            provider.end_epoch(2).unwrap();
        }
    }

    #[test]
    fn rejects_dimension_and_fingerprint() {
        let (vocab, stream) = fixture();
        let dir = tempfile::tempdir().unwrap();
        let fp = stream.fingerprint(&vocab);
        let path = write(dir.path(), &format!("dim 768\ncorpus_fingerprint {}\n", fp));
        assert!(matches!(
            open_external_vectors(&path, 64, &fp),
            Err(Error::DimensionMismatch { expected: 64, actual: 768 })
        ));
        let path = write(dir.path(), "dim 2\ncorpus_fingerprint 0000000000000000\n");
        assert!(matches!(
            open_external_vectors(&path, 2, &fp),
            Err(Error::FingerprintMismatch { .. })
        ));
    }

    #[test]
    fn names_misaligned_sentence() {
        let (vocab, stream) = fixture();
        let dir = tempfile::tempdir().unwrap();
        let fp = stream.fingerprint(&vocab);
        let path = write(
            dir.path(),
            &format!("dim 2\ncorpus_fingerprint {}\na 1 2\nb 3 4\n\nb 5 6\na 7 8\n", fp),
        );
        let mut ext = open_external_vectors(&path, 2, &fp).unwrap();
        ext.next_sentence(0, stream.get(0), &vocab).unwrap();
        match ext.next_sentence(1, stream.get(1), &vocab) {
            Err(Error::Misaligned { sentence: 1, .. }) => {}
            other => panic!("unexpected {:?}", other.err()),
        }
    }

    #[test]
    fn skip_and_trailing_data() {
        let (vocab, stream) = fixture();
        let dir = tempfile::tempdir().unwrap();
        let fp = stream.fingerprint(&vocab);
        let path = write(
            dir.path(),
            &format!(
                "dim 2\ncorpus_fingerprint {}\na 1 2\nb 3 4\n\nb 5 6\na 7 8\na 9 10\n\na 0 0\n",
                fp
            ),
        );
        let mut ext = open_external_vectors(&path, 2, &fp).unwrap();
        ext.skip_sentences(1).unwrap();
        assert_eq!(ext.next_sentence(1, stream.get(1), &vocab).unwrap()[0], 5.0);
        assert!(matches!(ext.expect_end(2), Err(Error::Misaligned { sentence: 2, .. })));
    }
}
