use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_contextsg")).args(args).output().unwrap()
}

fn ok(args: &[&str]) -> String {
    let out = run(args);
    assert!(out.status.success(), "{:?}: {}", args, String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

fn fail(args: &[&str]) -> (i32, String) {
    let out = run(args);
    assert!(!out.status.success(), "{:?} should fail", args);
    (out.status.code().unwrap(), String::from_utf8(out.stderr).unwrap())
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

struct Fixture {
    dir: TempDir,
}

impl Fixture {
    fn new() -> Self {
        Fixture {
            dir: TempDir::new().unwrap(),
        }
    }

    fn path(&self, name: &str) -> PathBuf {
        self.dir.path().join(name)
    }

    fn write(&self, name: &str, text: &str) -> PathBuf {
        let path = self.path(name);
        fs::write(&path, text).unwrap();
        path
    }

    /// Generated synonym corpus with its vocabulary and a small encoder.
    fn trained(&self, sentences: usize) -> (PathBuf, PathBuf, PathBuf) {
        let corpus = self.path("corpus.txt");
        let vocab = self.path("vocab.txt");
        let enc = self.path("enc.json");
        let n = sentences.to_string();
        ok(&["generate", "--corpus", p(&corpus), "--dataset", p(&self.path("sim.txt")), "--sentences", &n]);
        ok(&["build-vocab", "--corpus", p(&corpus), "--output", p(&vocab), "--min_count", "1"]);
        ok(&[
            "pretrain", "--corpus", p(&corpus), "--vocab", p(&vocab), "--min_count", "1",
            "--enc_dim", "16", "--ffn_dim", "32", "--heads", "2", "--enc_max_len", "16",
            "--pretrain_epochs", "1", "--output", p(&enc),
        ]);
        (corpus, vocab, enc)
    }
}

#[test]
fn build_vocab_counts_by_hand() {
    let f = Fixture::new();
    let corpus = f.write("c.txt", "The cat sat.\nthe dog sat\nA cat, a dog!\n");
    let out = f.path("v.txt");
    ok(&["build-vocab", "--corpus", p(&corpus), "--output", p(&out), "--min_count", "1", "--min_len", "1"]);
    let text = fs::read_to_string(&out).unwrap();
    let mut lines: Vec<&str> = text.lines().collect();
    lines.sort();
    assert_eq!(lines, ["a 2", "cat 2", "dog 2", "sat 2", "the 2"]);

    let again = f.path("v2.txt");
    ok(&["build-vocab", "--corpus", p(&corpus), "--output", p(&again), "--min_count", "1", "--min_len", "1"]);
    assert_eq!(fs::read(&out).unwrap(), fs::read(&again).unwrap());

    let (_, err) = fail(&["build-vocab", "--corpus", p(&corpus), "--output", p(&out), "--min_count", "3", "--min_len", "1"]);
    assert!(err.contains("empty"), "{}", err);
}

#[test]
fn missing_corpus_names_the_path() {
    let f = Fixture::new();
    let missing = f.path("nowhere.txt");
    let (code, err) = fail(&["build-vocab", "--corpus", p(&missing), "--output", p(&f.path("v.txt"))]);
    assert_eq!(code, 2);
    assert!(err.contains("nowhere.txt"), "{}", err);
}

#[test]
fn usage_errors_exit_one() {
    assert_eq!(fail(&["frobnicate"]).0, 1);
    assert_eq!(fail(&["train", "--no_such_key", "3"]).0, 1);
    assert_eq!(fail(&["train", "--dim"]).0, 1);
    assert_eq!(fail(&["train", "--lr", "fast"]).0, 1);
    assert!(ok(&["help"]).contains("build-vocab"));
}

#[test]
fn pretrain_is_reproducible_and_checks_heads() {
    let f = Fixture::new();
    let (corpus, vocab, enc) = f.trained(200);
    let again = f.path("enc2.json");
    ok(&[
        "pretrain", "--corpus", p(&corpus), "--vocab", p(&vocab), "--min_count", "1",
        "--enc_dim", "16", "--ffn_dim", "32", "--heads", "2", "--enc_max_len", "16",
        "--pretrain_epochs", "1", "--output", p(&again),
    ]);
    assert_eq!(fs::read(&enc).unwrap(), fs::read(&again).unwrap());

    let (code, _) = fail(&[
        "pretrain", "--corpus", p(&corpus), "--vocab", p(&vocab), "--min_count", "1",
        "--enc_dim", "16", "--heads", "3", "--enc_max_len", "16", "--output", p(&again),
    ]);
    assert_eq!(code, 1);
}

#[test]
fn end_to_end_and_external_vectors() {
    let f = Fixture::new();
    let (corpus, vocab, enc) = f.trained(1000);
    let common = ["--corpus", p(&corpus), "--vocab", p(&vocab), "--min_count", "1", "--dim", "20", "--epochs", "1"];
    let dyn_out = f.path("dyn.txt");
    let log = f.path("log.txt");
    let mut args = vec!["train", "--encoder", p(&enc), "--output", p(&dyn_out), "--log", p(&log)];
    args.extend(common);
    ok(&args);
    let log = fs::read_to_string(&log).unwrap();
    let fields: Vec<&str> = log.lines().next().unwrap().split_whitespace().collect();
    assert_eq!(fields.len(), 4);

    let header = fs::read_to_string(&dyn_out).unwrap();
    assert!(header.starts_with(&format!("{} 20\n", fs::read_to_string(&vocab).unwrap().lines().count())));

    let sim = f.path("sim.txt");
    let score = ok(&["eval", "--embeddings", p(&dyn_out), "--dataset", p(&sim)]);
    let fields: Vec<&str> = score.split_whitespace().collect();
    assert_eq!(fields.len(), 3);
    assert!(fields[0].starts_with("rho=") && fields[1] == "coverage=1.000000" && fields[2] == "n=190");

    let ctx = f.path("ctx.txt");
    let mut args = vec!["export-context", "--encoder", p(&enc), "--output", p(&ctx)];
    args.extend(&common[..6]);
    ok(&args);
    let ext_out = f.path("ext.txt");
    let mut args = vec!["train", "--provider", "external", "--context_vectors", p(&ctx), "--context_dim", "16"];
    args.extend(["--output", p(&ext_out)]);
    args.extend(common);
    ok(&args);
    assert_eq!(fs::read(&dyn_out).unwrap(), fs::read(&ext_out).unwrap());

    // a corpus that differs from the one the vectors were written for
    let text = fs::read_to_string(&corpus).unwrap();
    let other = f.write("other.txt", &text.lines().rev().collect::<Vec<_>>().join("\n"));
    let (code, err) = fail(&[
        "train", "--provider", "external", "--context_vectors", p(&ctx), "--context_dim", "16",
        "--corpus", p(&other), "--vocab", p(&vocab), "--min_count", "1", "--dim", "20", "--epochs", "1",
        "--output", p(&ext_out),
    ]);
    assert_eq!(code, 2);
    assert!(err.contains("fingerprint"), "{}", err);
}

#[test]
fn echoed_config_loads_back() {
    let f = Fixture::new();
    let out = run(&["eval", "--dim", "7", "--attention", "false", "--embeddings", p(&f.path("none.txt"))]);
    let echoed = String::from_utf8(out.stderr).unwrap();
    let config: String = echoed.lines().take_while(|l| !l.starts_with("error")).map(|l| format!("{}\n", l)).collect();
    assert!(config.contains("dim = 7") && config.contains("attention = false"));
    let file = f.write("run.cfg", &config);
    let again = run(&["eval", "--config", p(&file), "--embeddings", p(&f.path("none.txt"))]);
    assert_eq!(String::from_utf8(again.stderr).unwrap(), echoed);
}

const VECTORS: &str = "4 3\nking 1 0 0\nqueen 0 1 0\nman 1 0.1 0\ntwin 1 0 0\n";

#[test]
fn neighbors_lists_duplicate_first() {
    let f = Fixture::new();
    let emb = f.write("e.txt", VECTORS);
    let out = ok(&["neighbors", "--embeddings", p(&emb), "--word", "king", "--k", "2"]);
    let lines: Vec<&str> = out.lines().collect();
    assert_eq!(lines, ["twin 1.000000", "man 0.995037"]);
    assert_eq!(fail(&["neighbors", "--embeddings", p(&emb), "--word", "prince"]).0, 2);
}

#[test]
fn export_pairs_format() {
    let f = Fixture::new();
    let emb = f.write("e.txt", VECTORS);
    let pairs = f.write("p.txt", "# pairs\nking queen\n\nman twin\n");
    let out = ok(&["export-pairs", "--embeddings", p(&emb), "--pairs", p(&pairs)]);
    assert_eq!(
        out,
        "king queen 1.000000 0.000000 0.000000 0.000000 1.000000 0.000000\n\
         man twin 1.000000 0.100000 0.000000 1.000000 0.000000 0.000000\n"
    );
    let bad = f.write("b.txt", "king prince\n");
    let (_, err) = fail(&["export-pairs", "--embeddings", p(&emb), "--pairs", p(&bad)]);
    assert!(err.contains("prince"), "{}", err);
}

#[test]
fn eval_formats_and_parse_errors() {
    let f = Fixture::new();
    let emb = f.write("e.txt", VECTORS);
    let sim = f.write("s.txt", "king twin 10\nking queen 1\nman twin 8\nking prince 3\n");
    assert_eq!(
        ok(&["eval", "--embeddings", p(&emb), "--dataset", p(&sim)]),
        "rho=1.000000 coverage=0.750000 n=3\n"
    );

    let analogy = f.write(
        "a.txt",
        ": royal\nman king twin queen\nking man twin man\n: other\nman king queen prince\n",
    );
    let out = ok(&["eval", "--task", "analogy", "--embeddings", p(&emb), "--dataset", p(&analogy)]);
    let lines: Vec<&str> = out.lines().collect();
    assert_eq!(lines.len(), 3);
    assert!(lines[0].starts_with("overall "));
    assert!(lines[1].starts_with("royal ") && lines[1].contains("total=2"));
    assert!(lines[2].starts_with("other ") && lines[2].contains("total=1"));

    let broken = f.write("bad.txt", "king twin 10\nking queen\n");
    let (code, err) = fail(&["eval", "--embeddings", p(&emb), "--dataset", p(&broken)]);
    assert_eq!(code, 2);
    assert!(err.contains(":2") || err.contains("line 2"), "{}", err);
}
