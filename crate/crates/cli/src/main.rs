use std::fs;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde_json::json;

use sstr_core::corpus::{self, DetectionWriter, SyntheticSpec};
use sstr_core::evalkit;
use sstr_core::geometry::{coverage, select_anchors};
use sstr_core::index::{AnnParams, Backend, DescriptorStore, SearchIndex};
use sstr_core::loss::max_gradient_error;
use sstr_core::phoc::{derive_bigrams, encode_str, normalize_word, Histogram, PhocConfig};
use sstr_core::retrieval::{self, RankedList, RetrievalParams};

/// Scene text retrieval with PHOC descriptors.
#[derive(Debug, Parser)]
#[command(name = "sstr", version)]
struct Cli {
    /// Output format for results.
    #[arg(long, value_enum, global = true, default_value_t = Format::Tsv)]
    output: Format,

    /// Worker thread cap for parallel stages (defaults to all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Json,
    Tsv,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Encode a word as a PHOC vector.
    Encode {
        #[arg(long)]
        word: String,
        #[command(flatten)]
        config: ConfigArg,
    },
    /// Most frequent bigrams of a lexicon.
    Bigrams {
        /// One word per line.
        #[arg(long)]
        lexicon: PathBuf,
        #[arg(long, default_value_t = 50)]
        count: usize,
        #[command(flatten)]
        config: ConfigArg,
    },
    /// Select anchor shapes that cover every box in an annotation file.
    Anchors {
        /// `w h` lines or a detection file.
        #[arg(long)]
        input: PathBuf,
        #[arg(long, default_value_t = 0.6)]
        min_iou: f64,
        #[arg(long, default_value_t = 32)]
        max_k: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Compare the PHOC loss gradient against finite differences.
    LossCheck {
        #[arg(long, default_value_t = 100)]
        pairs: usize,
        #[arg(long, default_value_t = 604)]
        dim: usize,
        #[arg(long, default_value_t = 1e-6)]
        step: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Generate a synthetic benchmark corpus.
    Synth(SynthArgs),
    /// Build and save a search index from a detection file.
    Index {
        #[arg(long)]
        input: PathBuf,
        #[arg(long, value_enum, default_value_t = BackendArg::Exact)]
        backend: BackendArg,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        config: ConfigArg,
        #[command(flatten)]
        ann: AnnArgs,
    },
    /// Rank images for one query or a file of queries.
    Query {
        #[arg(long)]
        index: PathBuf,
        #[arg(long, conflicts_with = "queries", required_unless_present = "queries")]
        text: Option<String>,
        /// One query per line (batch mode).
        #[arg(long)]
        queries: Option<PathBuf>,
        /// Number of ranked images to print.
        #[arg(long, default_value_t = 10)]
        k: usize,
        #[command(flatten)]
        search: SearchArgs,
    },
    /// Score queries against ground truth and write a JSON report.
    Eval {
        #[arg(long)]
        index: PathBuf,
        #[arg(long)]
        gt: PathBuf,
        #[arg(long)]
        queries: PathBuf,
        #[arg(long)]
        report: PathBuf,
        #[command(flatten)]
        search: SearchArgs,
    },
    /// Per-stage query latency.
    Bench {
        #[arg(long)]
        index: PathBuf,
        #[arg(long)]
        queries: PathBuf,
        #[arg(long, default_value_t = 5)]
        repetitions: usize,
        #[command(flatten)]
        search: SearchArgs,
    },
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum BackendArg {
    Exact,
    Graph,
}

impl From<BackendArg> for Backend {
    fn from(b: BackendArg) -> Self {
        match b {
            BackendArg::Exact => Backend::Exact,
            BackendArg::Graph => Backend::Graph,
        }
    }
}

#[derive(Debug, Args)]
struct ConfigArg {
    /// PHOC configuration file (TOML); defaults to the 604-dimensional layout.
    #[arg(long)]
    config: Option<PathBuf>,
}

impl ConfigArg {
    fn load(&self) -> Result<PhocConfig> {
        match &self.config {
            None => Ok(PhocConfig::default()),
            Some(path) => {
                let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
                Ok(PhocConfig::from_toml(&text)?)
            }
        }
    }
}

#[derive(Debug, Args)]
struct AnnArgs {
    /// Graph out-degree.
    #[arg(long, default_value_t = AnnParams::default().m)]
    m: usize,
    #[arg(long, default_value_t = AnnParams::default().ef_construction)]
    ef_construction: usize,
    #[arg(long, default_value_t = AnnParams::default().ef_search)]
    ef_search: usize,
    /// Seed for graph level assignment.
    #[arg(long, default_value_t = AnnParams::default().seed)]
    seed: u64,
}

impl AnnArgs {
    fn params(&self) -> AnnParams {
        AnnParams {
            m: self.m,
            ef_construction: self.ef_construction,
            ef_search: self.ef_search,
            seed: self.seed,
        }
    }
}

#[derive(Debug, Args)]
struct SearchArgs {
    /// Descriptors fetched per query from a graph index.
    #[arg(long)]
    k_pool: Option<usize>,
    /// Override the graph beam width stored in the index.
    #[arg(long)]
    ef_search: Option<usize>,
}

impl SearchArgs {
    fn open(&self, path: &Path) -> Result<(SearchIndex, RetrievalParams)> {
        let mut index = SearchIndex::load(path).with_context(|| format!("loading index {}", path.display()))?;
        if let Some(ef) = self.ef_search {
            index.set_ef_search(ef)?;
        }
        if self.k_pool == Some(0) {
            bail!("--k-pool must be >= 1");
        }
        Ok((index, RetrievalParams { k_pool: self.k_pool }))
    }
}

#[derive(Debug, Args)]
struct SynthArgs {
    /// Directory for detections.jsonl, gt.tsv, queries.txt, query_split.tsv and manifest.json.
    #[arg(long)]
    out_dir: PathBuf,
    #[arg(long, default_value_t = 1000)]
    images: usize,
    /// Lexicon file; a pseudo-word lexicon is generated when absent.
    #[arg(long)]
    lexicon: Option<PathBuf>,
    #[arg(long, default_value_t = 20_000)]
    lexicon_size: usize,
    #[arg(long, default_value_t = 60)]
    descriptors: usize,
    #[arg(long, default_value_t = 1)]
    min_words: usize,
    #[arg(long, default_value_t = 5)]
    max_words: usize,
    #[arg(long, default_value_t = 0.0)]
    noise: f64,
    #[arg(long, default_value_t = 0.0)]
    flip_rate: f64,
    #[arg(long, default_value_t = 0.25)]
    distractor_rate: f64,
    #[arg(long, default_value_t = 50)]
    query_count: usize,
    #[arg(long, default_value_t = 0.2)]
    unseen_fraction: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[command(flatten)]
    config: ConfigArg,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    if let Some(n) = cli.threads {
        if n == 0 {
            bail!("--threads must be >= 1");
        }
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    }
    let stdout = io::stdout();
    let mut out = BufWriter::new(stdout.lock());
    let fmt = cli.output;
    match cli.command {
        Command::Encode { word, config } => encode(&mut out, fmt, &word, &config.load()?)?,
        Command::Bigrams { lexicon, count, config } => {
            let config = config.load()?;
            let words = corpus::load_lexicon(&lexicon, &config)?;
            let bigrams = derive_bigrams(&words, count, &config)?;
            match fmt {
                Format::Json => writeln!(out, "{}", json!({ "bigrams": bigrams }))?,
                Format::Tsv => {
                    for b in bigrams {
                        writeln!(out, "{b}")?;
                    }
                }
            }
        }
        Command::Anchors { input, min_iou, max_k, seed } => {
            let shapes = corpus::load_shapes(&input)?;
            let anchors = select_anchors(&shapes, min_iou, max_k, seed)?;
            let cov = coverage(&shapes, &anchors, min_iou);
            match fmt {
                Format::Json => {
                    let list: Vec<[f64; 2]> = anchors.shapes().iter().map(|s| [s.w, s.h]).collect();
                    let v = json!({ "seed": seed, "min_iou": min_iou, "coverage": cov, "anchors": list });
                    writeln!(out, "{}", serde_json::to_string_pretty(&v)?)?;
                }
                Format::Tsv => {
                    writeln!(out, "# seed={seed} min_iou={min_iou} k={} coverage={cov}", anchors.len())?;
                    for s in anchors.shapes() {
                        writeln!(out, "{}\t{}", s.w, s.h)?;
                    }
                }
            }
        }
        Command::LossCheck { pairs, dim, step, seed } => {
            if pairs == 0 || dim == 0 {
                bail!("--pairs and --dim must be >= 1");
            }
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut worst: f64 = 0.0;
            for _ in 0..pairs {
                let target: Vec<f64> = (0..dim).map(|_| f64::from(u8::from(rng.random_bool(0.1)))).collect();
                let pred: Vec<f64> = (0..dim).map(|_| rng.random_range(0.05..0.95)).collect();
                worst = worst.max(max_gradient_error(&target, &pred, 1e-7, step)?);
            }
            match fmt {
                Format::Json => writeln!(
                    out,
                    "{}",
                    json!({ "seed": seed, "pairs": pairs, "dim": dim, "step": step, "max_relative_error": worst })
                )?,
                Format::Tsv => {
                    writeln!(out, "seed\tpairs\tdim\tmax_relative_error")?;
                    writeln!(out, "{seed}\t{pairs}\t{dim}\t{worst:e}")?;
                }
            }
        }
        Command::Synth(args) => synth(&mut out, fmt, &args)?,
        Command::Index {
            input,
            backend,
            out: path,
            config,
            ann,
        } => {
            let config = config.load()?;
            let mut store = DescriptorStore::new(config.clone());
            corpus::for_each_detection(&input, &config, |d| store.add(&d))?;
            let index = store.seal(backend.into(), ann.params())?;
            index.save(&path)?;
            let summary = json!({
                "index": path.display().to_string(),
                "backend": index.backend().to_string(),
                "descriptors": index.len(),
                "images": index.image_count(),
                "config_hash": config.hash().to_string(),
            });
            write_summary(&mut out, fmt, &summary)?;
        }
        Command::Query {
            index,
            text,
            queries,
            k,
            search,
        } => {
            let (index, params) = search.open(&index)?;
            let config = index.config().clone();
            let texts = match (text, queries) {
                (Some(t), _) => vec![t],
                (None, Some(path)) => corpus::load_queries(&path)?,
                (None, None) => unreachable!("clap requires one of --text or --queries"),
            };
            if fmt == Format::Tsv {
                writeln!(out, "query\trank\timage_id\tscore")?;
            }
            for chunk in texts.chunks(64) {
                let lists: Vec<RankedList> = chunk
                    .par_iter()
                    .map(|t| retrieval::query(t, &index, &config, &params))
                    .collect::<Result<_, _>>()?;
                for list in lists {
                    print_ranked(&mut out, fmt, &list, k)?;
                }
                out.flush()?;
            }
        }
        Command::Eval {
            index,
            gt,
            queries,
            report,
            search,
        } => {
            let (index, params) = search.open(&index)?;
            let gt = corpus::load_ground_truth(&gt)?;
            let queries = corpus::load_queries(&queries)?;
            let rep = evalkit::evaluate(&queries, &index, index.config(), &gt, &params)?;
            fs::write(&report, serde_json::to_string_pretty(&rep)?)
                .with_context(|| format!("writing {}", report.display()))?;
            for w in &rep.warnings {
                eprintln!("warning: {w}");
            }
            let summary = json!({
                "report": report.display().to_string(),
                "mAP": rep.map,
                "mean_p_at_10": rep.mean_p_at_10,
                "mean_p_at_20": rep.mean_p_at_20,
                "evaluated": rep.per_query.len(),
            });
            write_summary(&mut out, fmt, &summary)?;
        }
        Command::Bench {
            index,
            queries,
            repetitions,
            search,
        } => {
            let (index, params) = search.open(&index)?;
            let queries = corpus::load_queries(&queries)?;
            let rep = evalkit::bench(&index, index.config(), &queries, repetitions, &params)?;
            match fmt {
                Format::Json => writeln!(out, "{}", serde_json::to_string_pretty(&rep)?)?,
                Format::Tsv => {
                    writeln!(out, "metric\tvalue")?;
                    writeln!(out, "backend\t{}", rep.backend)?;
                    for (name, v) in rep.rows() {
                        writeln!(out, "{name}\t{v}")?;
                    }
                }
            }
        }
    }
    out.flush()?;
    Ok(())
}

fn encode(out: &mut impl Write, fmt: Format, word: &str, config: &PhocConfig) -> Result<()> {
    let normalized = normalize_word(word, config)?.as_string();
    let phoc = encode_str(word, config)?;
    let bits: Vec<usize> = phoc.set_bits().collect();
    let slots: Vec<String> = bits
        .iter()
        .filter_map(|&i| config.describe(i))
        .map(|s| {
            let kind = match s.histogram {
                Histogram::Unigram => "uni",
                Histogram::Bigram => "bi",
            };
            format!("{kind}:L{}:r{}:{}", s.level, s.region, s.symbol)
        })
        .collect();
    let vector: Vec<u8> = phoc.as_slice().iter().map(|&v| v as u8).collect();
    match fmt {
        Format::Json => {
            let v = json!({
                "word": word,
                "normalized": normalized,
                "dimension": phoc.len(),
                "config_hash": config.hash().to_string(),
                "set_bits": bits,
                "slots": slots,
                "vector": vector,
            });
            writeln!(out, "{v}")?;
        }
        Format::Tsv => {
            let join = |v: &mut dyn Iterator<Item = String>| v.collect::<Vec<_>>().join(" ");
            writeln!(out, "normalized\t{normalized}")?;
            writeln!(out, "dimension\t{}", phoc.len())?;
            writeln!(out, "set_bits\t{}", join(&mut bits.iter().map(ToString::to_string)))?;
            writeln!(out, "slots\t{}", slots.join(" "))?;
            writeln!(out, "vector\t{}", join(&mut vector.iter().map(ToString::to_string)))?;
        }
    }
    Ok(())
}

fn synth(out: &mut impl Write, fmt: Format, args: &SynthArgs) -> Result<()> {
    let config = args.config.load()?;
    let lexicon = match &args.lexicon {
        Some(path) => corpus::load_lexicon(path, &config)?,
        None => corpus::synthetic_lexicon(args.lexicon_size, args.seed),
    };
    let mut spec = SyntheticSpec::new(args.images, lexicon, args.seed);
    spec.descriptors_per_image = args.descriptors;
    spec.min_words = args.min_words;
    spec.max_words = args.max_words;
    spec.phoc_noise = args.noise;
    spec.bit_flip_rate = args.flip_rate;
    spec.distractor_rate = args.distractor_rate;
    spec.query_count = args.query_count;
    spec.unseen_fraction = args.unseen_fraction;
    spec.validate()?;

    let dir = &args.out_dir;
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let mut writer = DetectionWriter::create(dir.join("detections.jsonl"), &config)?;
    let meta = corpus::generate_each(&spec, &config, |_, d| writer.write(&d))?;
    writer.finish()?;

    corpus::write_ground_truth(dir.join("gt.tsv"), &meta.ground_truth)?;
    let mut queries = String::new();
    let mut split = String::new();
    for q in &meta.queries {
        queries.push_str(&q.word);
        queries.push('\n');
        split.push_str(&format!("{}\t{}\n", q.word, if q.seen { "seen" } else { "unseen" }));
    }
    fs::write(dir.join("queries.txt"), queries)?;
    fs::write(dir.join("query_split.tsv"), split)?;
    fs::write(dir.join("training_words.txt"), meta.training_words.join("\n") + "\n")?;
    fs::write(dir.join("phoc.toml"), config.to_toml())?;

    let manifest = json!({
        "seed": args.seed,
        "images": spec.image_count,
        "descriptors": meta.descriptor_count,
        "descriptors_per_image": spec.descriptors_per_image,
        "words_per_image": [spec.min_words, spec.max_words],
        "phoc_noise": spec.phoc_noise,
        "bit_flip_rate": spec.bit_flip_rate,
        "distractor_rate": spec.distractor_rate,
        "query_count": meta.queries.len(),
        "unseen_fraction": spec.unseen_fraction,
        "lexicon": args.lexicon.as_ref().map(|p| p.display().to_string()),
        "lexicon_size": spec.lexicon.len(),
        "config_hash": config.hash().to_string(),
    });
    fs::write(dir.join("manifest.json"), serde_json::to_string_pretty(&manifest)?)?;
    write_summary(out, fmt, &manifest)
}

fn print_ranked(out: &mut impl Write, fmt: Format, list: &RankedList, k: usize) -> Result<()> {
    let top = &list.items[..k.min(list.items.len())];
    match fmt {
        Format::Json => {
            let items: Vec<_> = top
                .iter()
                .enumerate()
                .map(|(i, it)| json!({ "rank": i + 1, "image_id": it.image_id, "score": it.score }))
                .collect();
            writeln!(out, "{}", json!({ "query": list.query, "exhaustive": list.exhaustive, "results": items }))?;
        }
        Format::Tsv => {
            for (i, it) in top.iter().enumerate() {
                writeln!(out, "{}\t{}\t{}\t{}", list.query, i + 1, it.image_id, it.score)?;
            }
        }
    }
    Ok(())
}

/// Flat object as pretty JSON or `key<TAB>value` lines.
fn write_summary(out: &mut impl Write, fmt: Format, value: &serde_json::Value) -> Result<()> {
    match fmt {
        Format::Json => writeln!(out, "{}", serde_json::to_string_pretty(value)?)?,
        Format::Tsv => {
            if let Some(map) = value.as_object() {
                for (k, v) in map {
                    match v {
                        serde_json::Value::String(s) => writeln!(out, "{k}\t{s}")?,
                        other => writeln!(out, "{k}\t{other}")?,
                    }
                }
            }
        }
    }
    Ok(())
}
