//! Generated corpora with known structure, used by tests and the example
//! scripts.

use rand::seq::SliceRandom;
use rand::Rng as _;

use crate::rng::{self, Stream};

/// Sentences that cycle through `period` words (`w0 w1 ... w0 w1 ...`) from a
/// random starting word. Every token is determined by either neighbor.
pub fn alternating_corpus(sentences: usize, period: usize, len: (usize, usize), seed: u64) -> Vec<Vec<String>> {
    assert!(period >= 2 && len.0 >= 2 && len.0 <= len.1);
    let mut rng = rng::stream(seed, Stream::Synthetic);
    (0..sentences)
        .map(|_| {
            let start = rng.gen_range(0..period);
            let n = rng.gen_range(len.0..=len.1);
            (0..n).map(|i| format!("w{}", (start + i) % period)).collect()
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynonymSpec {
    pub clusters: usize,
    /// Evaluated words per cluster.
    pub members: usize,
    /// Further content words of each cluster, not evaluated.
    pub topics: usize,
    /// Words shared by every cluster.
    pub function_words: usize,
    /// Sentence templates, shared by all clusters.
    pub templates: usize,
    /// Fraction of template positions holding a function word.
    pub function_rate: f64,
    pub min_len: usize,
    pub max_len: usize,
    /// Chance that a token is replaced by a random vocabulary word.
    pub noise: f64,
}

impl Default for SynonymSpec {
    fn default() -> Self {
        SynonymSpec {
            clusters: 4,
            members: 5,
            topics: 5,
            function_words: 6,
            templates: 20,
            function_rate: 0.4,
            min_len: 10,
            max_len: 14,
            noise: 0.05,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SynonymCorpus {
    pub sentences: Vec<Vec<String>>,
    /// Member words of each cluster.
    pub clusters: Vec<Vec<String>>,
}

/// Sentences drawn from templates shared by every cluster. A template fixes
/// its function words and leaves content slots; each sentence picks a
/// cluster and fills every slot with a random content word (member or topic)
/// of that cluster. Members of one cluster are therefore interchangeable and
/// differ from other clusters only in the content words they co-occur with.
pub fn synonym_corpus(spec: &SynonymSpec, sentences: usize, seed: u64) -> SynonymCorpus {
    assert!(spec.clusters >= 2 && spec.members >= 2 && spec.min_len >= 2 && spec.min_len <= spec.max_len);
    let mut rng = rng::stream(seed, Stream::Synthetic);
    let members: Vec<Vec<String>> = (0..spec.clusters)
        .map(|k| (0..spec.members).map(|j| format!("c{}m{}", k, j)).collect())
        .collect();
    let content: Vec<Vec<String>> = (0..spec.clusters)
        .map(|k| {
            let topics = (0..spec.topics).map(|j| format!("c{}t{}", k, j));
            members[k].iter().cloned().chain(topics).collect()
        })
        .collect();
    let function: Vec<String> = (0..spec.function_words).map(|j| format!("f{}", j)).collect();

    // None marks a content slot
    let templates: Vec<Vec<Option<usize>>> = (0..spec.templates)
        .map(|_| {
            let n = rng.gen_range(spec.min_len..=spec.max_len);
            let mut t: Vec<Option<usize>> = (0..n)
                .map(|_| {
                    (!function.is_empty() && rng.gen_bool(spec.function_rate))
                        .then(|| rng.gen_range(0..function.len()))
                })
                .collect();
            // at least two content slots
            let mut slots: Vec<usize> = (0..n).collect();
            slots.shuffle(&mut rng);
            for &p in &slots[..2] {
                t[p] = None;
            }
            t
        })
        .collect();
    let all: Vec<&String> = content.iter().flatten().chain(&function).collect();

    let out = (0..sentences)
        .map(|_| {
            let k = rng.gen_range(0..spec.clusters);
            let t = &templates[rng.gen_range(0..templates.len())];
            t.iter()
                .map(|slot| {
                    if rng.gen_bool(spec.noise) {
                        return all[rng.gen_range(0..all.len())].clone();
                    }
                    match *slot {
                        None => content[k][rng.gen_range(0..content[k].len())].clone(),
                        Some(f) => function[f].clone(),
                    }
                })
                .collect()
        })
        .collect();
    SynonymCorpus {
        sentences: out,
        clusters: members,
    }
}

/// Word-similarity records over cluster members: same-cluster pairs scored
/// 1, cross-cluster pairs 0.
pub fn cluster_similarity_pairs(clusters: &[Vec<String>]) -> Vec<(String, String, f64)> {
    let mut out = Vec::new();
    for (ci, a) in clusters.iter().enumerate() {
        for (i, u) in a.iter().enumerate() {
            for v in &a[i + 1..] {
                out.push((u.clone(), v.clone(), 1.0));
            }
            for b in &clusters[ci + 1..] {
                for v in b {
                    out.push((u.clone(), v.clone(), 0.0));
                }
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn alternating_is_periodic() {
        let c = alternating_corpus(50, 3, (10, 12), 4);
        assert_eq!(c.len(), 50);
        for s in &c {
            assert!((10..=12).contains(&s.len()));
            for w in s.windows(2) {
                let a: usize = w[0][1..].parse().unwrap();
                let b: usize = w[1][1..].parse().unwrap();
                assert_eq!(b, (a + 1) % 3);
            }
        }
        assert_eq!(c, alternating_corpus(50, 3, (10, 12), 4));
    }

    #[test]
    fn synonym_corpus_shape() {
        let spec = SynonymSpec {
            noise: 0.0,
            ..SynonymSpec::default()
        };
        let c = synonym_corpus(&spec, 200, 3);
        assert_eq!(c.clusters.len(), 4);
        for s in &c.sentences {
            assert!((spec.min_len..=spec.max_len).contains(&s.len()));
            let content: Vec<&String> = s.iter().filter(|w| w.starts_with('c')).collect();
            assert!(content.len() >= 2);
            let k = &content[0][..2];
            assert!(content.iter().all(|w| w.starts_with(k)), "{:?}", s);
        }
        assert_eq!(cluster_similarity_pairs(&c.clusters).len(), 20 * 19 / 2);
    }
}
