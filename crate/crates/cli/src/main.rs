use std::fs::File;
use std::io::{self, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::parser::ValueSource;
use clap::{ArgAction, ArgMatches, Args, CommandFactory, FromArgMatches, Parser, Subcommand};
use gmkl::eval::{self, AvgCosNorm, SimilarityMetric};
use gmkl::mixture::kl_bounds;
use gmkl::trainer::{load_model, save_model, train_file, Model, TrainConfig};
use gmkl::Error;

/// Gaussian mixture word embeddings trained with a KL-divergence energy.
#[derive(Parser)]
#[command(name = "gmkl", version)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Train a model on a Text8-style corpus.
    Train(TrainArgs),
    /// Spearman correlation against a word-similarity dataset.
    EvalSim(EvalSimArgs),
    /// Best precision and F1 on a lexical entailment dataset.
    EvalEntail(EvalEntailArgs),
    /// Nearest component means to one component of a word.
    Neighbors(NeighborsArgs),
    /// KL bounds between two words, in both directions.
    Kl(KlArgs),
    /// Write component means as text, one "token comp v1 .. vD" line each.
    Export(ExportArgs),
}

/// Hyperparameter flags override the config file, which overrides the
/// defaults shown here.
#[derive(Args)]
struct TrainArgs {
    /// Corpus: lowercase a-z tokens separated by whitespace.
    #[arg(long)]
    corpus: PathBuf,
    /// Where to write the model file.
    #[arg(long)]
    out: PathBuf,
    /// JSON file with TrainConfig fields.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Embedding dimension.
    #[arg(long, default_value_t = 50)]
    dim: usize,
    /// Mixture components per word.
    #[arg(long, default_value_t = 2)]
    components: usize,
    /// Context window radius.
    #[arg(long, default_value_t = 10)]
    window: usize,
    /// dynamic draws each radius uniformly from 1..=window.
    #[arg(long, default_value = "dynamic", value_parser = ["dynamic", "fixed"])]
    window_mode: String,
    #[arg(long, default_value_t = 128)]
    batch_size: usize,
    /// Adagrad learning rate.
    #[arg(long, default_value_t = 0.05)]
    lr: f64,
    /// Hinge margin.
    #[arg(long, default_value_t = 1.0)]
    margin: f64,
    /// Subsampling threshold; 0 keeps every token.
    #[arg(long, default_value_t = 1e-5)]
    subsample_t: f64,
    #[arg(long, default_value = "sqrt", value_parser = ["sqrt", "sqrt_plus_linear"])]
    subsample_rule: String,
    /// Drop words seen fewer times.
    #[arg(long, default_value_t = 5)]
    min_count: u64,
    #[arg(long, default_value_t = 5)]
    epochs: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long, default_value_t = 1e-4)]
    var_min: f64,
    #[arg(long, default_value_t = 1e2)]
    var_max: f64,
    /// Negatives are drawn from count^neg_exponent.
    #[arg(long, default_value_t = 0.75)]
    neg_exponent: f64,
    /// Negatives per positive pair.
    #[arg(long, default_value_t = 1)]
    negatives: usize,
    /// Share one table between center and context roles.
    #[arg(long, default_value_t = true, action = ArgAction::Set)]
    tied: bool,
    #[arg(long, default_value = "sum", value_parser = ["sum", "mean"])]
    batch_reduction: String,
    #[arg(long, default_value_t = 1e-8)]
    adagrad_eps: f64,
    /// Worker threads. With more than 1, runs are not bit-reproducible.
    #[arg(long, env = "GMKL_THREADS", default_value_t = 1)]
    threads: usize,
    /// Batches between loss lines.
    #[arg(long, default_value_t = 1000)]
    log_every: usize,
}

#[derive(Args)]
struct EvalSimArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    dataset: PathBuf,
    #[arg(long, default_value = "maxcos", value_parser = ["maxcos", "avgcos", "klapprox", "klcomp"])]
    metric: String,
    /// tsv: "word1 word2 score"; scws: the SCWS release format.
    #[arg(long, default_value = "tsv", value_parser = ["tsv", "scws"])]
    format: String,
    /// Divide avgcos by the number of components only, instead of by all pairs.
    #[arg(long)]
    avg_per_component: bool,
    /// Name printed in the result line [default: dataset file stem].
    #[arg(long)]
    name: Option<String>,
    #[arg(long)]
    pretty: bool,
}

#[derive(Args)]
struct EvalEntailArgs {
    #[arg(long)]
    model: PathBuf,
    /// "premise hypothesis label" with label 0/1/true/false.
    #[arg(long)]
    dataset: PathBuf,
    /// Cap on swept thresholds; 0 sweeps every observed score.
    #[arg(long, default_value_t = 0)]
    threshold_steps: usize,
    /// Name printed in the result line [default: dataset file stem].
    #[arg(long)]
    name: Option<String>,
    #[arg(long)]
    pretty: bool,
}

#[derive(Args)]
struct NeighborsArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    word: String,
    #[arg(long, default_value_t = 0)]
    component: usize,
    #[arg(long, default_value_t = 10)]
    k: usize,
    #[arg(long)]
    pretty: bool,
}

#[derive(Args)]
struct KlArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    w1: String,
    #[arg(long)]
    w2: String,
    #[arg(long)]
    pretty: bool,
}

#[derive(Args)]
struct ExportArgs {
    #[arg(long)]
    model: PathBuf,
    /// Output file [default: standard output].
    #[arg(long)]
    out: Option<PathBuf>,
}

fn main() -> ExitCode {
    let matches = match Cli::command().try_get_matches() {
        Ok(m) => m,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    let cli = match Cli::from_arg_matches(&matches) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(1);
        }
    };
    let result = match cli.cmd {
        Cmd::Train(a) => cmd_train(a, matches.subcommand_matches("train").expect("train matches")),
        Cmd::EvalSim(a) => cmd_eval_sim(a),
        Cmd::EvalEntail(a) => cmd_eval_entail(a),
        Cmd::Neighbors(a) => cmd_neighbors(a),
        Cmd::Kl(a) => cmd_kl(a),
        Cmd::Export(a) => cmd_export(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Usage(_) | Error::Evaluation(_) | Error::DimensionMismatch { .. } => 1,
        Error::Io { .. } | Error::Input { .. } | Error::Format(_) => 2,
        Error::NonFiniteGradient { .. } | Error::Numeric { .. } => 3,
    }
}

fn io_err(path: &Path, source: io::Error) -> Error {
    Error::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn serde_enum<T: serde::de::DeserializeOwned>(s: &str) -> T {
    serde_json::from_value(serde_json::Value::String(s.to_string())).expect("value restricted by clap")
}

fn build_config(a: &TrainArgs, m: &ArgMatches) -> Result<TrainConfig, Error> {
    let mut cfg = match &a.config {
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|e| io_err(path, e))?;
            serde_json::from_str(&text).map_err(|e| Error::Usage(format!("{}: {e}", path.display())))?
        }
        None => TrainConfig::default(),
    };
    let given = |id: &str| {
        matches!(
            m.value_source(id),
            Some(ValueSource::CommandLine | ValueSource::EnvVariable)
        )
    };
    macro_rules! take {
        ($($field:ident),*) => {
            $(if given(stringify!($field)) { cfg.$field = a.$field.clone(); })*
        };
    }
    take!(
        dim, components, window, batch_size, lr, margin, subsample_t, min_count, epochs, seed, var_min,
        var_max, neg_exponent, negatives, tied, adagrad_eps, threads, log_every
    );
    if given("window_mode") {
        cfg.window_mode = serde_enum(&a.window_mode);
    }
    if given("subsample_rule") {
        cfg.subsample_rule = serde_enum(&a.subsample_rule);
    }
    if given("batch_reduction") {
        cfg.batch_reduction = serde_enum(&a.batch_reduction);
    }
    cfg.validate()?;
    Ok(cfg)
}

fn cmd_train(a: TrainArgs, m: &ArgMatches) -> Result<(), Error> {
    let cfg = build_config(&a, m)?;
    let stdout = io::stdout();
    let outcome = train_file(&a.corpus, &cfg, &mut |p| {
        let _ = writeln!(stdout.lock(), "epoch {} batch {} loss {:.6}", p.epoch, p.batch, p.mean_loss);
    })?;
    save_model(&outcome.model, &a.out)?;
    eprintln!(
        "trained {} triples over {} words; wrote {}",
        outcome.triples,
        outcome.model.vocab.len(),
        a.out.display()
    );
    Ok(())
}

fn open(path: &Path) -> Result<BufReader<File>, Error> {
    File::open(path).map(BufReader::new).map_err(|e| io_err(path, e))
}

fn dataset_name(name: &Option<String>, path: &Path) -> String {
    name.clone().unwrap_or_else(|| {
        path.file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| path.display().to_string())
    })
}

fn cmd_eval_sim(a: EvalSimArgs) -> Result<(), Error> {
    let metric: SimilarityMetric = a.metric.parse()?;
    let model = load_model(&a.model)?;
    let records = match a.format.as_str() {
        "scws" => eval::read_scws(open(&a.dataset)?)?,
        _ => eval::read_similarity_tsv(open(&a.dataset)?)?,
    };
    let norm = if a.avg_per_component { AvgCosNorm::Components } else { AvgCosNorm::AllPairs };
    let r = eval::eval_similarity_with(&model, &records, metric, norm)?;
    let name = dataset_name(&a.name, &a.dataset);
    if a.pretty {
        println!("{:<20} {:<10} {:>8} {:>6} {:>6}", "dataset", "metric", "rho100", "used", "oov");
        println!("{:<20} {:<10} {:>8.2} {:>6} {:>6}", name, metric, r.rho100, r.n_used, r.n_oov);
    } else {
        println!("dataset={name} metric={metric} rho100={:?} used={} oov={}", r.rho100, r.n_used, r.n_oov);
    }
    Ok(())
}

fn cmd_eval_entail(a: EvalEntailArgs) -> Result<(), Error> {
    let model = load_model(&a.model)?;
    let records = eval::read_entailment_tsv(open(&a.dataset)?)?;
    let r = eval::eval_entailment(&model, &records, a.threshold_steps)?;
    let name = dataset_name(&a.name, &a.dataset);
    if a.pretty {
        println!("{:<20} {:>10} {:>10} {:>6} {:>6}", "dataset", "precision", "f1", "used", "oov");
        println!(
            "{:<20} {:>10.4} {:>10.4} {:>6} {:>6}",
            name, r.best_precision, r.best_f1, r.n_used, r.n_oov
        );
    } else {
        println!("dataset={name} best_precision={:?} best_f1={:?}", r.best_precision, r.best_f1);
    }
    Ok(())
}

fn cmd_neighbors(a: NeighborsArgs) -> Result<(), Error> {
    let model = load_model(&a.model)?;
    let found = eval::neighbors(&model, &a.word, a.component, a.k)?;
    if a.pretty {
        println!("{:>4}  {:<24} {:>8}", "rank", "neighbor", "cosine");
    }
    for (rank, n) in found.iter().enumerate() {
        let label = format!("{}:{}", n.token, n.component);
        if a.pretty {
            println!("{:>4}  {:<24} {:>8.4}", rank + 1, label, n.cosine);
        } else {
            println!("{} {label} {:?}", rank + 1, n.cosine);
        }
    }
    Ok(())
}

fn lookup(model: &Model, word: &str) -> Result<usize, Error> {
    model
        .vocab
        .id(word)
        .ok_or_else(|| Error::Usage(format!("word {word:?} is not in the vocabulary")))
}

fn cmd_kl(a: KlArgs) -> Result<(), Error> {
    let model = load_model(&a.model)?;
    let (f, g) = (model.mixture(lookup(&model, &a.w1)?), model.mixture(lookup(&model, &a.w2)?));
    if a.pretty {
        println!("{:<30} {:>12} {:>12} {:>12}", "direction", "kl_lower", "kl_upper", "kl_approx");
    }
    for (x, y, nx, ny) in [(&f, &g, &a.w1, &a.w2), (&g, &f, &a.w2, &a.w1)] {
        let b = kl_bounds(x, y)?;
        if a.pretty {
            println!(
                "{:<30} {:>12.6} {:>12.6} {:>12.6}",
                format!("{nx} || {ny}"),
                b.lower,
                b.upper,
                b.mean()
            );
        } else {
            println!("from={nx} to={ny} kl_lower={:?} kl_upper={:?} kl_approx={:?}", b.lower, b.upper, b.mean());
        }
    }
    Ok(())
}

fn cmd_export(a: ExportArgs) -> Result<(), Error> {
    let model = load_model(&a.model)?;
    let (sink, path): (Box<dyn Write>, PathBuf) = match &a.out {
        Some(p) => (Box::new(File::create(p).map_err(|e| io_err(p, e))?), p.clone()),
        None => (Box::new(io::stdout().lock()), PathBuf::from("<stdout>")),
    };
    let mut out = BufWriter::new(sink);
    let table = model.bank.center();
    let mut write = || -> io::Result<()> {
        for id in 0..model.vocab.len() {
            for comp in 0..table.n_components() {
                write!(out, "{} {comp}", model.vocab.token(id))?;
                for v in table.mean(id, comp) {
                    write!(out, " {v}")?;
                }
                writeln!(out)?;
            }
        }
        out.flush()
    };
    write().map_err(|e| io_err(&path, e))
}
