//! `contextsg` command-line driver.

mod commands;
mod config;

use std::process::ExitCode;

use config::{RunConfig, KEYS};
use contextsg::Error;

const COMMANDS: &[(&str, &str)] = &[
    ("build-vocab", "count words in --corpus and write --output"),
    ("pretrain", "MLM-pretrain an encoder on --corpus, write checkpoint to --output"),
    ("train", "train embeddings (--mode baseline|dynamic), write --output"),
    ("eval", "score --embeddings on --dataset (--task sim|analogy|relation)"),
    ("neighbors", "list the --k nearest words to --word"),
    ("export-pairs", "print both vectors of each pair in --pairs"),
    ("export-context", "write built-in encoder vectors for --corpus in the external format"),
    ("generate", "write a synthetic --corpus (and a similarity --dataset)"),
];

pub enum Failure {
    Usage(String),
    Core(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Core(e)
    }
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Usage(_) | Failure::Core(Error::Config(_)) => 1,
            Failure::Core(Error::Divergence(_)) => 3,
            Failure::Core(_) => 2,
        }
    }
}

fn usage() -> String {
    let mut s = String::from("usage: contextsg <command> [--config FILE] [--key value ...]\n\ncommands:\n");
    for (name, help) in COMMANDS {
        s.push_str(&format!("  {:<15} {}\n", name, help));
    }
    s.push_str("\nkeys (also accepted in the config file as \"key = value\"):\n");
    for k in KEYS {
        s.push_str(&format!("  --{:<17} {} [{}]\n", k.name, k.help, k.default));
    }
    s
}

/// Defaults, then the `--config` file, then the remaining flags.
fn resolve(args: &[String]) -> Result<RunConfig, Failure> {
    let mut flags = Vec::new();
    let mut config_file = None;
    let mut it = args.iter();
    while let Some(arg) = it.next() {
        let Some(name) = arg.strip_prefix("--") else {
            return Err(Failure::Usage(format!("unexpected argument {:?}", arg)));
        };
        let (name, value) = match name.split_once('=') {
            Some((n, v)) => (n.to_owned(), v.to_owned()),
            None => {
                let v = it
                    .next()
                    .ok_or_else(|| Failure::Usage(format!("--{} needs a value", name)))?;
                (name.to_owned(), v.clone())
            }
        };
        if name == "config" {
            config_file = Some(value);
        } else {
            flags.push((name, value));
        }
    }
    let mut config = RunConfig::default();
    if let Some(path) = config_file {
        let text = std::fs::read_to_string(&path).map_err(|e| Error::Io {
            path: path.clone().into(),
            source: e,
        })?;
        config.apply_text(&text, &path)?;
    }
    for (k, v) in flags {
        config.set(&k, &v)?;
    }
    Ok(config)
}

fn run(args: &[String]) -> Result<(), Failure> {
    let Some(command) = args.first() else {
        return Err(Failure::Usage(usage()));
    };
    if command == "--help" || command == "-h" || command == "help" {
        print!("{}", usage());
        return Ok(());
    }
    if !COMMANDS.iter().any(|(c, _)| c == command) {
        return Err(Failure::Usage(format!("unknown command {:?}\n\n{}", command, usage())));
    }
    let config = resolve(&args[1..])?;
    eprint!("{}", config.render());
    commands::dispatch(command, &config)
}

fn main() -> ExitCode {
    let args: Vec<String> = std::env::args().skip(1).collect();
    match run(&args) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            match &f {
                Failure::Usage(msg) => eprintln!("error: {}", msg.trim_end()),
                Failure::Core(e) => eprintln!("error: {}", e),
            }
            ExitCode::from(f.code())
        }
    }
}
