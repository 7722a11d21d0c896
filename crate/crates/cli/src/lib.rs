//! The `titlegen` command line. Every stage reads and writes plain files so
//! the pipeline can be resumed from any point:
//!
//! ```text
//! ingest -> preprocess -> vocab -> train -> eval
//!                                       \-> index -> serve | query
//! ```
//!
//! Exit codes: 0 success, 1 usage error, 2 data or model error. Diagnostics
//! go to stderr and machine output to stdout.

pub mod config;

use std::ffi::OsString;
use std::fs::File;
use std::io::{self, BufReader, BufWriter, Read, Write};
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand, ValueEnum};
use titlegen_core::corpus::{
    build_vocab_for, ingest, open_dump, parse_posts_stream, preprocess, read_jsonl, split_of,
    write_jsonl, PairRecord, RawPair, Side, Split, Vocabulary,
};
use titlegen_core::inference::{exact_match_rate, generate, BeamConfig};
use titlegen_core::model::{Checkpoint, Example};
use titlegen_core::par;
use titlegen_core::retrieval::{build_index, LshConfig, SearchIndex};
use titlegen_core::training::{train, validate};
use titlegen_service::{handle_query, load_artifacts, QueryRequest, ServiceConfig, ServiceState};

use crate::config::RunConfig;

#[derive(Debug, Parser)]
#[command(name = "titlegen", version, about = "Question titles and similar questions for code snippets")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Extract raw (code, title) pairs from a posts dump (.xml or .xml.gz).
    Ingest {
        /// Posts dump to read.
        #[arg(long)]
        dump: PathBuf,
        /// Keep only questions carrying this tag; empty keeps all.
        #[arg(long, default_value = "python")]
        tag: String,
        /// Raw pairs, one JSON object per line.
        #[arg(long)]
        out: PathBuf,
    },
    /// Clean raw pairs into a deduplicated training corpus.
    Preprocess {
        /// Raw pairs from `ingest`.
        #[arg(long = "in")]
        input: PathBuf,
        /// Corpus, one JSON object per line.
        #[arg(long)]
        out: PathBuf,
    },
    /// Build a vocabulary from the training split of a corpus.
    Vocab {
        /// Corpus from `preprocess`.
        #[arg(long = "in")]
        input: PathBuf,
        /// Which side of the pairs to count.
        #[arg(long, value_enum)]
        side: SideArg,
        /// Total size including the six special tokens.
        #[arg(long, default_value_t = 50_000)]
        max_size: usize,
        /// Minimum count for a token to be kept.
        #[arg(long, default_value_t = 1)]
        min_count: u64,
        /// Vocabulary file, one `token<TAB>count` line per id.
        #[arg(long)]
        out: PathBuf,
    },
    /// Train a model and print per-epoch metrics as JSON lines.
    Train {
        /// Corpus from `preprocess`; split by post id unless --valid is given.
        #[arg(long)]
        corpus: PathBuf,
        /// TOML file with optional [model], [train] and [vocab] tables.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Overrides `train.seed`.
        #[arg(long)]
        seed: Option<u64>,
        /// Separate validation corpus (all of it is used).
        #[arg(long)]
        valid: Option<PathBuf>,
        /// Code vocabulary from `vocab`; built from the training split if absent.
        #[arg(long)]
        code_vocab: Option<PathBuf>,
        /// Title vocabulary from `vocab`; built from the training split if absent.
        #[arg(long)]
        title_vocab: Option<PathBuf>,
        /// Checkpoint to write.
        #[arg(long)]
        out: PathBuf,
    },
    /// Report perplexity and exact-match rate of beam top-1 titles.
    Eval {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        corpus: PathBuf,
        /// Which split of the corpus to score.
        #[arg(long, value_enum, default_value_t = SplitArg::All)]
        split: SplitArg,
        #[command(flatten)]
        beam: BeamArgs,
    },
    /// Embed every corpus snippet and write a search index.
    Index {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        corpus: PathBuf,
        /// Seed for the hashing hyperplanes.
        #[arg(long, default_value_t = 1)]
        seed: u64,
        /// Index file to write.
        #[arg(long)]
        out: PathBuf,
    },
    /// Serve the HTTP API (and the web UI when --static-dir exists).
    Serve {
        #[arg(long, env = "TITLEGEN_MODEL")]
        model: PathBuf,
        #[arg(long, env = "TITLEGEN_INDEX")]
        index: PathBuf,
        #[arg(long, env = "TITLEGEN_ADDR", default_value = "127.0.0.1:8080")]
        addr: SocketAddr,
        /// Directory of static files served under `/`.
        #[arg(long, env = "TITLEGEN_STATIC_DIR")]
        static_dir: Option<PathBuf>,
        #[command(flatten)]
        beam: BeamArgs,
        /// Retrieved questions per query.
        #[arg(long, env = "TITLEGEN_RETRIEVE_K", default_value_t = 5)]
        retrieve_k: usize,
    },
    /// Answer one query and print the same JSON the service would send.
    Query {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        index: PathBuf,
        /// Snippet file; read from stdin when absent.
        #[arg(long)]
        code_file: Option<PathBuf>,
        /// Language hint passed through to the request.
        #[arg(long)]
        language: Option<String>,
        #[command(flatten)]
        beam: BeamArgs,
        /// Retrieved questions per query.
        #[arg(long, default_value_t = 5)]
        retrieve_k: usize,
    },
}

#[derive(Debug, Clone, Copy, Args)]
struct BeamArgs {
    /// Beam width.
    #[arg(long, env = "TITLEGEN_BEAM", default_value_t = 5)]
    beam: usize,
    /// Titles returned per query.
    #[arg(long, default_value_t = 3)]
    k: usize,
    /// Fewest title tokens before END may be chosen.
    #[arg(long, default_value_t = 4)]
    min_len: usize,
    /// Most title tokens.
    #[arg(long, default_value_t = 16)]
    max_len: usize,
}

impl BeamArgs {
    fn config(self) -> BeamConfig {
        BeamConfig {
            beam: self.beam,
            min_len: self.min_len,
            max_len: self.max_len,
            k: self.k,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum SideArg {
    Code,
    Title,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum SplitArg {
    All,
    Train,
    Valid,
    Test,
}

impl SplitArg {
    fn admits(self, post_id: u64) -> bool {
        match self {
            SplitArg::All => true,
            SplitArg::Train => split_of(post_id) == Split::Train,
            SplitArg::Valid => split_of(post_id) == Split::Valid,
            SplitArg::Test => split_of(post_id) == Split::Test,
        }
    }
}

/// Why a command failed, which decides the exit code.
#[derive(Debug)]
enum Failure {
    Usage(String),
    Data(String),
}

impl From<titlegen_core::Error> for Failure {
    fn from(e: titlegen_core::Error) -> Self {
        Failure::Data(e.to_string())
    }
}

type Outcome = Result<(), Failure>;

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> Failure + '_ {
    move |e| Failure::Data(format!("{}: {e}", path.display()))
}

fn create(path: &Path) -> Result<BufWriter<File>, Failure> {
    File::create(path).map(BufWriter::new).map_err(io_err(path))
}

fn read_records<T: serde::de::DeserializeOwned>(path: &Path) -> Result<Vec<T>, Failure> {
    let f = File::open(path).map_err(io_err(path))?;
    read_jsonl(BufReader::new(f)).map_err(|e| Failure::Data(format!("{}: {e}", path.display())))
}

fn write_records<T: serde::Serialize>(path: &Path, items: &[T]) -> Outcome {
    let mut w = create(path)?;
    write_jsonl(&mut w, items)?;
    w.flush().map_err(io_err(path))
}

fn read_vocab(path: &Path) -> Result<Vocabulary, Failure> {
    let f = File::open(path).map_err(io_err(path))?;
    Vocabulary::read_from(BufReader::new(f)).map_err(|e| Failure::Data(format!("{}: {e}", path.display())))
}

fn load_checkpoint(path: &Path) -> Result<Checkpoint, Failure> {
    Checkpoint::load(path).map_err(|e| Failure::Data(format!("cannot load model {}: {e}", path.display())))
}

/// Parses `argv` (without the program name) and runs the command.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let args = std::iter::once(OsString::from("titlegen")).chain(argv.into_iter().map(Into::into));
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => return report_parse_error(e),
    };
    match dispatch(cli.command) {
        Ok(()) => 0,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            1
        }
        Err(Failure::Data(msg)) => {
            eprintln!("error: {msg}");
            2
        }
    }
}

fn report_parse_error(e: clap::Error) -> i32 {
    match e.kind() {
        ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => {
            print!("{e}");
            0
        }
        ErrorKind::DisplayHelpOnMissingArgumentOrSubcommand | ErrorKind::MissingSubcommand => {
            eprint!("{e}");
            1
        }
        ErrorKind::InvalidSubcommand => {
            let name = e
                .get(clap::error::ContextKind::InvalidSubcommand)
                .map(|v| v.to_string())
                .unwrap_or_default();
            eprintln!("error: unknown command '{name}'; run `titlegen --help` for the command list");
            1
        }
        _ => {
            eprint!("{e}");
            1
        }
    }
}

fn dispatch(cmd: Command) -> Outcome {
    match cmd {
        Command::Ingest { dump, tag, out } => cmd_ingest(&dump, &tag, &out),
        Command::Preprocess { input, out } => cmd_preprocess(&input, &out),
        Command::Vocab {
            input,
            side,
            max_size,
            min_count,
            out,
        } => cmd_vocab(&input, side, max_size, min_count, &out),
        Command::Train {
            corpus,
            config,
            seed,
            valid,
            code_vocab,
            title_vocab,
            out,
        } => cmd_train(TrainArgs {
            corpus,
            config,
            seed,
            valid,
            code_vocab,
            title_vocab,
            out,
        }),
        Command::Eval {
            model,
            corpus,
            split,
            beam,
        } => cmd_eval(&model, &corpus, split, beam.config()),
        Command::Index {
            model,
            corpus,
            seed,
            out,
        } => cmd_index(&model, &corpus, seed, &out),
        Command::Serve {
            model,
            index,
            addr,
            static_dir,
            beam,
            retrieve_k,
        } => cmd_serve(&model, &index, addr, static_dir, beam.config(), retrieve_k),
        Command::Query {
            model,
            index,
            code_file,
            language,
            beam,
            retrieve_k,
        } => cmd_query(&model, &index, code_file.as_deref(), language, beam.config(), retrieve_k),
    }
}

fn cmd_ingest(dump: &Path, tag: &str, out: &Path) -> Outcome {
    let input = open_dump(dump)?;
    let mut stream = parse_posts_stream(input);
    let mut w = create(out)?;
    let result = ingest(&mut stream, tag, |pair: RawPair| {
        serde_json::to_writer(&mut w, &pair)?;
        w.write_all(b"\n")?;
        Ok(())
    });
    w.flush().map_err(io_err(out))?;
    let n = result.map_err(|e| Failure::Data(format!("{}: {e}", dump.display())))?;
    eprintln!("ingest: {n} pairs, {} malformed rows skipped", stream.warnings());
    Ok(())
}

fn cmd_preprocess(input: &Path, out: &Path) -> Outcome {
    let raw: Vec<RawPair> = read_records(input)?;
    let kept = preprocess(&raw);
    write_records(out, &kept)?;
    eprintln!("preprocess: kept {} of {} pairs", kept.len(), raw.len());
    Ok(())
}

fn cmd_vocab(input: &Path, side: SideArg, max_size: usize, min_count: u64, out: &Path) -> Outcome {
    let pairs: Vec<PairRecord> = read_records(input)?;
    let train: Vec<PairRecord> = pairs.into_iter().filter(|p| SplitArg::Train.admits(p.post_id)).collect();
    let side = match side {
        SideArg::Code => Side::Code,
        SideArg::Title => Side::Title,
    };
    let vocab = build_vocab_for(&train, side, max_size, min_count).map_err(|e| Failure::Usage(e.to_string()))?;
    let mut w = create(out)?;
    vocab.write_to(&mut w)?;
    w.flush().map_err(io_err(out))?;
    eprintln!("vocab: {} entries", vocab.len());
    Ok(())
}

struct TrainArgs {
    corpus: PathBuf,
    config: Option<PathBuf>,
    seed: Option<u64>,
    valid: Option<PathBuf>,
    code_vocab: Option<PathBuf>,
    title_vocab: Option<PathBuf>,
    out: PathBuf,
}

fn cmd_train(a: TrainArgs) -> Outcome {
    let mut cfg = match &a.config {
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(io_err(path))?;
            RunConfig::from_toml(&text).map_err(|e| Failure::Usage(format!("{}: {e}", path.display())))?
        }
        None => RunConfig::default(),
    };
    if let Some(seed) = a.seed {
        cfg.train.seed = seed;
    }
    cfg.train.validate().map_err(|e| Failure::Usage(e.to_string()))?;

    let pairs: Vec<PairRecord> = read_records(&a.corpus)?;
    let (train_pairs, valid_pairs) = match &a.valid {
        Some(path) => (pairs, read_records(path)?),
        None => pairs.into_iter().partition(|p| SplitArg::Train.admits(p.post_id)),
    };
    let valid_pairs: Vec<PairRecord> = match &a.valid {
        Some(_) => valid_pairs,
        None => valid_pairs.into_iter().filter(|p| SplitArg::Valid.admits(p.post_id)).collect(),
    };
    if train_pairs.is_empty() || valid_pairs.is_empty() {
        return Err(Failure::Data(format!(
            "need training and validation pairs, found {} and {} (pass --valid for a corpus without a validation split)",
            train_pairs.len(),
            valid_pairs.len()
        )));
    }
    let v = &cfg.vocab;
    let code_vocab = match &a.code_vocab {
        Some(p) => read_vocab(p)?,
        None => build_vocab_for(&train_pairs, Side::Code, v.code_max_size, v.code_min_count)?,
    };
    let title_vocab = match &a.title_vocab {
        Some(p) => read_vocab(p)?,
        None => build_vocab_for(&train_pairs, Side::Title, v.title_max_size, v.title_min_count)?,
    };
    let model_cfg = cfg.model.to_config(code_vocab.len(), title_vocab.len());
    model_cfg.validate().map_err(|e| Failure::Usage(e.to_string()))?;
    let to_examples = |ps: &[PairRecord]| -> Vec<Example> {
        ps.iter().map(|p| Example::from_pair(p, &code_vocab, &title_vocab)).collect()
    };
    let (tr, va) = (to_examples(&train_pairs), to_examples(&valid_pairs));
    eprintln!(
        "train: {} train / {} valid pairs, vocab {} code / {} title",
        tr.len(),
        va.len(),
        code_vocab.len(),
        title_vocab.len()
    );

    let stdout = io::stdout();
    let mut log_err = None;
    let outcome = train(&tr, &va, &model_cfg, &cfg.train, |m| {
        let mut lock = stdout.lock();
        let line = serde_json::to_string(m).expect("metrics serialize");
        if let Err(e) = writeln!(lock, "{line}") {
            log_err.get_or_insert(e);
        }
    })?;
    if let Some(e) = log_err {
        return Err(Failure::Data(format!("writing metrics: {e}")));
    }
    let ck = Checkpoint::new(model_cfg, outcome.params, code_vocab, title_vocab)?;
    ck.save(&a.out)?;
    eprintln!("train: best epoch {} written to {}", outcome.best_epoch, a.out.display());
    Ok(())
}

fn cmd_eval(model: &Path, corpus: &Path, split: SplitArg, beam: BeamConfig) -> Outcome {
    beam.validate().map_err(|e| Failure::Usage(e.to_string()))?;
    let ck = load_checkpoint(model)?;
    let pairs: Vec<PairRecord> = read_records(corpus)?;
    let pairs: Vec<PairRecord> = pairs.into_iter().filter(|p| split.admits(p.post_id)).collect();
    if pairs.is_empty() {
        return Err(Failure::Data("no pairs in the selected split".into()));
    }
    let exs: Vec<Example> = pairs
        .iter()
        .map(|p| Example::from_pair(p, &ck.code_vocab, &ck.title_vocab))
        .collect();
    let ppl = validate(&exs, &ck.params, &ck.config)?;
    let tops = par::map(&pairs, |p| generate(&ck, &p.code, &beam));
    let mut predicted = Vec::with_capacity(pairs.len());
    for t in tops {
        predicted.push(t?.into_iter().next().map(|g| g.title).unwrap_or_default());
    }
    let refs: Vec<_> = pairs.iter().map(|p| p.title.clone()).collect();
    let em = exact_match_rate(&predicted, &refs);
    println!(
        "{{\"pairs\":{},\"perplexity\":{:.6},\"exact_match\":{:.6}}}",
        pairs.len(),
        ppl,
        em
    );
    Ok(())
}

fn cmd_index(model: &Path, corpus: &Path, seed: u64, out: &Path) -> Outcome {
    let ck = load_checkpoint(model)?;
    let pairs: Vec<PairRecord> = read_records(corpus)?;
    let (emb, lsh) = build_index(&pairs, &ck, LshConfig::default(), seed)?;
    let idx = SearchIndex { emb, lsh };
    idx.save(out)?;
    eprintln!("index: {} rows of dimension {}", idx.len(), idx.emb.dim());
    Ok(())
}

fn service_state(model: &Path, index: &Path, beam: BeamConfig, k: usize) -> Result<ServiceState, Failure> {
    let cfg = ServiceConfig { beam, k };
    load_artifacts(model, index, cfg).map_err(|e| Failure::Data(e.to_string()))
}

fn cmd_serve(
    model: &Path,
    index: &Path,
    addr: SocketAddr,
    static_dir: Option<PathBuf>,
    beam: BeamConfig,
    k: usize,
) -> Outcome {
    // fail before binding if anything is wrong with the artifacts
    let state = Arc::new(service_state(model, index, beam, k)?);
    let rt = tokio::runtime::Runtime::new().map_err(|e| Failure::Data(format!("runtime: {e}")))?;
    eprintln!("serving {} questions on http://{addr}", state.index.len());
    rt.block_on(titlegen_service::serve(state, addr, static_dir))
        .map_err(|e| Failure::Data(format!("{addr}: {e}")))
}

fn cmd_query(
    model: &Path,
    index: &Path,
    code_file: Option<&Path>,
    language: Option<String>,
    beam: BeamConfig,
    k: usize,
) -> Outcome {
    let code = match code_file {
        Some(path) => std::fs::read_to_string(path).map_err(io_err(path))?,
        None => {
            let mut s = String::new();
            io::stdin()
                .read_to_string(&mut s)
                .map_err(|e| Failure::Data(format!("stdin: {e}")))?;
            s
        }
    };
    let state = service_state(model, index, beam, k)?;
    let reply = handle_query(&state, &QueryRequest { code, language });
    let mut out = io::stdout().lock();
    out.write_all(reply.body.as_bytes())
        .and_then(|_| out.flush())
        .map_err(|e| Failure::Data(format!("stdout: {e}")))?;
    if reply.status == 200 {
        Ok(())
    } else {
        Err(Failure::Data(format!("query rejected with status {}", reply.status)))
    }
}
