use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use contextsg::corpus::{read_corpus_file, Corpus, Vocab};
use contextsg::dynsg::train_dyn;
use contextsg::embed_store::WordVectors;
use contextsg::encoder::{
    mlm_accuracy, open_external_vectors, pretrain_mlm, write_context_vectors, ContextProvider, EncoderParams,
};
use contextsg::eval::{eval_analogy, eval_relations, eval_similarity, load_analogy, load_relations, load_similarity};
use contextsg::optim::TrainReport;
use contextsg::sgns::train_sgns;
use contextsg::synthetic::{alternating_corpus, cluster_similarity_pairs, synonym_corpus, SynonymSpec};
use contextsg::{Error, Result};

use crate::config::RunConfig;
use crate::Failure;

pub fn dispatch(command: &str, c: &RunConfig) -> std::result::Result<(), Failure> {
    match command {
        "build-vocab" => build_vocab(c),
        "pretrain" => pretrain(c),
        "train" => train(c),
        "eval" => eval(c),
        "neighbors" => neighbors(c),
        "export-pairs" => export_pairs(c),
        "export-context" => export_context(c),
        "generate" => generate(c),
        _ => unreachable!("command list and dispatch disagree on {}", command),
    }
    .map_err(Failure::from)
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    let file = File::create(path).map_err(|e| Error::Io {
        path: path.to_owned(),
        source: e,
    })?;
    Ok(BufWriter::new(file))
}

fn load_corpus(c: &RunConfig) -> Result<Corpus> {
    let raw = read_corpus_file(c.path("corpus")?)?;
    let vocab = c.opt_path("vocab").map(Vocab::load).transpose()?;
    Corpus::prepare(raw, c.usize("min_len")?, c.usize("max_len")?, c.u64("min_count")?, vocab)
}

fn build_vocab(c: &RunConfig) -> Result<()> {
    let out = c.path("output")?;
    let raw = read_corpus_file(c.path("corpus")?)?;
    let corpus = Corpus::prepare(raw, c.usize("min_len")?, c.usize("max_len")?, c.u64("min_count")?, None)?;
    corpus.vocab.save(&out)?;
    eprintln!(
        "{} words, {} tokens in {} sentences",
        corpus.vocab.len(),
        corpus.vocab.total_tokens(),
        corpus.sentences.len()
    );
    Ok(())
}

fn pretrain(c: &RunConfig) -> Result<()> {
    let out = c.path("output")?;
    let config = c.encoder()?;
    let options = c.pretrain()?;
    let corpus = load_corpus(c)?;
    let (params, _) = pretrain_mlm(&corpus.sentences, corpus.vocab.len(), &config, &options, |epoch, loss, acc| {
        eprintln!("epoch {} loss {:.6} accuracy {:.4}", epoch, loss, acc)
    })?;
    params.save(&out)?;
    let acc = mlm_accuracy(&params, &corpus.sentences, options.seed)?;
    println!("mlm_accuracy={:.6}", acc);
    Ok(())
}

fn write_log(c: &RunConfig, report: &TrainReport) -> Result<()> {
    for (epoch, loss) in report.epoch_losses.iter().enumerate() {
        eprintln!("epoch {} mean loss {:.6}", epoch + 1, loss);
    }
    if let Some(path) = c.opt_path("log") {
        let mut out = create(&path)?;
        for rec in &report.log {
            writeln!(out, "{}", rec)?;
        }
        out.flush()?;
    }
    Ok(())
}

fn train(c: &RunConfig) -> Result<()> {
    let out = c.path("output")?;
    let mode = c.choice("mode", &["baseline", "dynamic"])?;
    let corpus = load_corpus(c)?;
    let (table, report) = if mode == "baseline" {
        let result = train_sgns(&corpus.sentences, &corpus.vocab, &c.sgns()?)?;
        (result.centers, result.report)
    } else {
        let config = c.dynamic()?;
        let encoder = c.opt_path("encoder").map(EncoderParams::load).transpose()?;
        let mut provider = match c.choice("provider", &["builtin", "external"])? {
            "builtin" => {
                let params = encoder.ok_or_else(|| {
                    Error::Config("dynamic mode with the builtin provider needs --encoder".into())
                })?;
                let provider = ContextProvider::builtin(params, config.freeze_encoder);
                if c.bool("cache_context")? {
                    provider.with_cache()
                } else {
                    provider
                }
            }
            _ => {
                let dim = match &encoder {
                    Some(p) => p.config.dim,
                    None => c.usize("context_dim")?,
                };
                let fingerprint = corpus.sentences.fingerprint(&corpus.vocab);
                ContextProvider::External(open_external_vectors(c.path("context_vectors")?, dim, &fingerprint)?)
            }
        };
        let result = train_dyn(&corpus.sentences, &corpus.vocab, &mut provider, &config)?;
        (result.contexts, result.report)
    };
    write_log(c, &report)?;
    WordVectors::new(corpus.vocab.words().to_vec(), table)?.save(&out)?;
    Ok(())
}

fn eval(c: &RunConfig) -> Result<()> {
    let vectors = WordVectors::load(c.path("embeddings")?)?;
    let dataset = c.path("dataset")?;
    match c.choice("task", &["sim", "analogy", "relation"])? {
        "sim" => {
            let s = eval_similarity(&vectors, &load_similarity(&dataset)?)?;
            println!("rho={:.6} coverage={:.6} n={}", s.rho, s.coverage, s.n);
        }
        "relation" => {
            let s = eval_relations(&vectors, &load_relations(&dataset)?)?;
            println!("rho={:.6} coverage={:.6} n={}", s.rho, s.coverage, s.n);
        }
        _ => {
            let s = eval_analogy(&vectors, &load_analogy(&dataset)?)?;
            println!(
                "overall accuracy={:.6} correct={} scored={} total={} coverage={:.6}",
                s.accuracy,
                s.correct,
                s.scored,
                s.total,
                s.coverage()
            );
            for cat in &s.categories {
                println!(
                    "{} accuracy={:.6} correct={} scored={} total={}",
                    cat.name,
                    cat.accuracy(),
                    cat.correct,
                    cat.scored,
                    cat.total
                );
            }
        }
    }
    Ok(())
}

fn neighbors(c: &RunConfig) -> Result<()> {
    let vectors = WordVectors::load(c.path("embeddings")?)?;
    let word = c.str("word");
    if word.is_empty() {
        return Err(Error::Config("neighbors needs --word".into()));
    }
    for (w, sim) in vectors.neighbors(word, c.usize("k")?)? {
        println!("{} {:.6}", w, sim);
    }
    Ok(())
}

fn export_pairs(c: &RunConfig) -> Result<()> {
    let vectors = WordVectors::load(c.path("embeddings")?)?;
    let path = c.path("pairs")?;
    let file = File::open(&path).map_err(|e| Error::Io {
        path: path.clone(),
        source: e,
    })?;
    let stdout = std::io::stdout();
    let mut out = BufWriter::new(stdout.lock());
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line?;
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        let parse_err = |message: String| Error::Parse {
            path: path.display().to_string(),
            line: i + 1,
            message,
        };
        let [a, b] = fields[..] else {
            return Err(parse_err(format!("expected 2 words, found {}", fields.len())));
        };
        write!(out, "{} {}", a, b)?;
        for w in [a, b] {
            let v = vectors
                .vector(w)
                .ok_or_else(|| parse_err(format!("{:?} is not in the embeddings", w)))?;
            for x in v {
                write!(out, " {:.6}", x)?;
            }
        }
        writeln!(out)?;
    }
    out.flush()?;
    Ok(())
}

fn export_context(c: &RunConfig) -> Result<()> {
    let params = EncoderParams::load(c.path("encoder")?)?;
    let corpus = load_corpus(c)?;
    let out = create(&c.path("output")?)?;
    write_context_vectors(out, &params, &corpus.sentences, &corpus.vocab)
}

fn generate(c: &RunConfig) -> Result<()> {
    let n = c.usize("sentences")?;
    let seed = c.u64("seed")?;
    let sentences = match c.choice("kind", &["synonym", "alternating"])? {
        "synonym" => {
            let corpus = synonym_corpus(&SynonymSpec::default(), n, seed);
            if let Some(path) = c.opt_path("dataset") {
                let mut out = create(&path)?;
                writeln!(out, "# cluster members: same cluster 1, different clusters 0")?;
                for (a, b, s) in cluster_similarity_pairs(&corpus.clusters) {
                    writeln!(out, "{} {} {}", a, b, s)?;
                }
                out.flush()?;
            }
            corpus.sentences
        }
        _ => alternating_corpus(n, 8, (10, 20), seed),
    };
    let mut out = create(&c.path("corpus")?)?;
    for s in sentences {
        writeln!(out, "{}", s.join(" "))?;
    }
    out.flush()?;
    Ok(())
}
