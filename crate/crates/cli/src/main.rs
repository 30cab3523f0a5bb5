//! `topolens`: build, inspect and serve a topology-embedding project.
//!
//! Exit codes: 0 success, 2 I/O or data error, 64 usage error.

use std::io::Write;
use std::net::{IpAddr, SocketAddr};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand, ValueEnum};

use topolens_core::project::{self, InputConfig, InputFormat};
use topolens_core::{EmbeddingMethod, ImageMode, Project, ProjectConfig};

const EXIT_DATA: u8 = 2;
const EXIT_USAGE: u8 = 64;

#[derive(Parser)]
#[command(
    name = "topolens",
    version,
    about = "Topological embeddings of labeled raster images"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Load and subsample a corpus into a new project directory.
    Ingest(IngestArgs),
    /// Persistence diagrams, cycles, persistence images and distances.
    Compute(ComputeArgs),
    /// 2-D embeddings of the distance matrix.
    Embed(EmbedArgs),
    /// Serve the JSON API (and optionally a UI bundle).
    Serve(ServeArgs),
    /// Write distances, embeddings or persistence images as CSV or JSON.
    Export(ExportArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum FormatArg {
    Idx,
    Dir,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Integrate,
    Sample,
}

#[derive(Args)]
struct IngestArgs {
    /// IDX image file (optionally gzipped) or a directory of `<label>_<name>.png` files.
    #[arg(long)]
    input: Option<PathBuf>,
    #[arg(long, value_enum)]
    format: Option<FormatArg>,
    /// IDX label file; derived from the image file name when omitted.
    #[arg(long)]
    labels: Option<PathBuf>,
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    per_class: Option<u64>,
    #[arg(long)]
    seed: Option<u64>,
    /// Use raw intensities as filtration values instead of 1 - intensity.
    #[arg(long)]
    no_invert: bool,
    #[arg(long)]
    out: PathBuf,
    /// Project configuration JSON; flags override its fields.
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Args)]
struct ComputeArgs {
    #[arg(long)]
    project: PathBuf,
    #[arg(long)]
    sigma: Option<f64>,
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    resolution: Option<u64>,
    #[arg(long, value_enum)]
    mode: Option<ModeArg>,
    #[arg(long)]
    no_invert: bool,
    /// Scale weights by the largest persistence across the corpus.
    #[arg(long)]
    global_scale: bool,
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    threads: Option<u64>,
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Args)]
struct EmbedArgs {
    #[arg(long)]
    project: PathBuf,
    /// Comma-separated subset of mds, isomap, tsne.
    #[arg(long, value_delimiter = ',', value_parser = parse_method)]
    methods: Option<Vec<EmbeddingMethod>>,
    /// Neighbours per point in the Isomap graph.
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    k: Option<u64>,
    #[arg(long)]
    perplexity: Option<f64>,
    #[arg(long)]
    iterations: Option<usize>,
    #[arg(long)]
    learning_rate: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    threads: Option<u64>,
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Args)]
struct ServeArgs {
    #[arg(long)]
    project: PathBuf,
    #[arg(long, default_value_t = 8080)]
    port: u16,
    #[arg(long, default_value = "127.0.0.1")]
    host: IpAddr,
    /// Directory with a built UI bundle to serve at `/`.
    #[arg(long)]
    ui: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum What {
    Distances,
    Embedding,
    Pimages,
}

#[derive(Clone, Copy, ValueEnum)]
enum ExportFormat {
    Csv,
    Json,
}

#[derive(Args)]
struct ExportArgs {
    #[arg(long)]
    project: PathBuf,
    #[arg(long, value_enum)]
    what: What,
    #[arg(long, value_enum, default_value = "csv")]
    format: ExportFormat,
    /// Restrict an embedding export to one method.
    #[arg(long, value_parser = parse_method)]
    method: Option<EmbeddingMethod>,
    /// Output file, or `-` for standard output.
    #[arg(long, default_value = "-")]
    out: PathBuf,
}

fn parse_method(s: &str) -> Result<EmbeddingMethod, String> {
    s.parse()
        .map_err(|_| format!("unknown method {s:?} (expected mds, isomap or tsne)"))
}

enum Failure {
    Usage(String),
    Data(anyhow::Error),
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        Failure::Data(e)
    }
}

impl From<project::ProjectError> for Failure {
    fn from(e: project::ProjectError) -> Self {
        match e {
            project::ProjectError::InvalidConfig(msg) => Failure::Usage(msg),
            e => Failure::Data(e.into()),
        }
    }
}

type Outcome = Result<(), Failure>;

fn read_config_file(path: &Path) -> Result<ProjectConfig, Failure> {
    let text =
        std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text)
        .with_context(|| format!("parsing {}", path.display()))
        .map_err(Failure::Data)
}

fn base_config(project_dir: &Path, config: Option<&Path>) -> Result<ProjectConfig, Failure> {
    match config {
        Some(path) => read_config_file(path),
        None => Ok(project::read_config(project_dir)?),
    }
}

fn threads(t: Option<u64>) -> Option<usize> {
    t.map(|t| t as usize)
}

fn ingest(args: IngestArgs) -> Outcome {
    let mut cfg = match &args.config {
        Some(path) => read_config_file(path)?,
        None => {
            let (Some(input), Some(format), Some(per_class)) =
                (&args.input, args.format, args.per_class)
            else {
                return Err(Failure::Usage(
                    "ingest needs --input, --format and --per-class (or --config)".into(),
                ));
            };
            let format = match format {
                FormatArg::Idx => InputFormat::Idx,
                FormatArg::Dir => InputFormat::Dir,
            };
            ProjectConfig::new(
                InputConfig {
                    path: input.clone(),
                    format,
                    labels: None,
                },
                per_class as usize,
            )
        }
    };
    if let Some(input) = args.input {
        cfg.input.path = input;
    }
    if let Some(format) = args.format {
        cfg.input.format = match format {
            FormatArg::Idx => InputFormat::Idx,
            FormatArg::Dir => InputFormat::Dir,
        };
    }
    if let Some(labels) = args.labels {
        cfg.input.labels = Some(labels);
    }
    if let Some(k) = args.per_class {
        cfg.per_class = k as usize;
    }
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    if args.no_invert {
        cfg.invert = false;
    }
    let items = project::ingest_corpus(&cfg, &args.out)?;
    log::info!("wrote {} items to {}", items.len(), args.out.display());
    Ok(())
}

fn compute(args: ComputeArgs) -> Outcome {
    let mut cfg = base_config(&args.project, args.config.as_deref())?;
    if let Some(sigma) = args.sigma {
        cfg.image.sigma = sigma;
    }
    if let Some(n) = args.resolution {
        cfg.image.resolution = n as usize;
    }
    if let Some(mode) = args.mode {
        cfg.image.mode = match mode {
            ModeArg::Integrate => ImageMode::Integrate,
            ModeArg::Sample => ImageMode::Sample,
        };
    }
    if args.no_invert {
        cfg.invert = false;
    }
    if args.global_scale {
        cfg.image.global_scale = true;
    }
    cfg.threads = threads(args.threads);
    let manifest = project::compute(&cfg, &args.project)?;
    log::info!("computed {} items", manifest.item_count);
    Ok(())
}

fn embed(args: EmbedArgs) -> Outcome {
    let mut cfg = base_config(&args.project, args.config.as_deref())?;
    if let Some(methods) = args.methods {
        cfg.embedding.methods = methods;
    }
    if let Some(k) = args.k {
        cfg.embedding.k = k as usize;
    }
    let tsne = &mut cfg.embedding.tsne;
    if let Some(p) = args.perplexity {
        tsne.perplexity = p;
    }
    if let Some(it) = args.iterations {
        tsne.iterations = it;
    }
    if let Some(lr) = args.learning_rate {
        tsne.learning_rate = lr;
    }
    if let Some(seed) = args.seed {
        tsne.seed = seed;
    }
    cfg.threads = threads(args.threads);
    let manifest = project::embed(&cfg, &args.project)?;
    log::info!("embedded with {:?}", manifest.embedding_methods);
    Ok(())
}

fn serve(args: ServeArgs) -> Outcome {
    let runtime = tokio::runtime::Runtime::new().context("starting async runtime")?;
    let addr = SocketAddr::new(args.host, args.port);
    runtime
        .block_on(topolens_server::serve(args.project, addr, args.ui))
        .map_err(|e| Failure::Data(e.into()))
}

fn export(args: ExportArgs) -> Outcome {
    if args.method.is_some() && !matches!(args.what, What::Embedding) {
        return Err(Failure::Usage(
            "--method only applies to --what embedding".into(),
        ));
    }
    let project = project::load_project(&args.project)?;
    let mut buf = Vec::new();
    match args.format {
        ExportFormat::Csv => write_csv(&project, &args, &mut buf)?,
        ExportFormat::Json => write_json(&project, &args, &mut buf)?,
    }
    if args.out.as_os_str() == "-" {
        std::io::stdout()
            .lock()
            .write_all(&buf)
            .context("writing to standard output")?;
    } else {
        std::fs::write(&args.out, &buf)
            .with_context(|| format!("writing {}", args.out.display()))?;
    }
    Ok(())
}

fn selected_embeddings(
    project: &Project,
    method: Option<EmbeddingMethod>,
) -> Result<Vec<&topolens_core::Embedding>, Failure> {
    match method {
        None => Ok(project.embeddings.iter().collect()),
        Some(m) => project
            .embedding(m)
            .map(|e| vec![e])
            .ok_or_else(|| Failure::Data(anyhow::anyhow!("method {m} has not been computed"))),
    }
}

fn write_csv(project: &Project, args: &ExportArgs, out: &mut Vec<u8>) -> Outcome {
    let mut w = csv::Writer::from_writer(out);
    let ids = project.distances.item_ids();
    let err = |e: csv::Error| Failure::Data(e.into());
    match args.what {
        What::Distances => {
            w.write_record(ids).map_err(err)?;
            for i in 0..project.distances.len() {
                w.write_record(project.distances.row(i).iter().map(|v| v.to_string()))
                    .map_err(err)?;
            }
        }
        What::Embedding => {
            w.write_record(["method", "id", "label", "x", "y"])
                .map_err(err)?;
            for e in selected_embeddings(project, args.method)? {
                for (id, c) in e.item_ids.iter().zip(&e.coords) {
                    let label = project.position(id).map_or(0, |i| project.items[i].label);
                    w.write_record([
                        e.method.to_string(),
                        id.clone(),
                        label.to_string(),
                        c[0].to_string(),
                        c[1].to_string(),
                    ])
                    .map_err(err)?;
                }
            }
        }
        What::Pimages => {
            let n = project.images.first().map_or(0, |im| im.pixels.len());
            let header = ["id".to_string(), "label".to_string()]
                .into_iter()
                .chain((0..n).map(|p| format!("p{p}")));
            w.write_record(header).map_err(err)?;
            for (item, image) in project.items.iter().zip(&project.images) {
                let row = [item.id.clone(), item.label.to_string()]
                    .into_iter()
                    .chain(image.pixels.iter().map(|v| v.to_string()));
                w.write_record(row).map_err(err)?;
            }
        }
    }
    w.flush().context("flushing csv")?;
    Ok(())
}

fn write_json(project: &Project, args: &ExportArgs, out: &mut Vec<u8>) -> Outcome {
    #[derive(serde::Serialize)]
    struct Distances<'a> {
        item_ids: &'a [String],
        distances: Vec<&'a [f64]>,
    }
    let json = match args.what {
        What::Distances => serde_json::to_vec(&Distances {
            item_ids: project.distances.item_ids(),
            distances: (0..project.distances.len())
                .map(|i| project.distances.row(i))
                .collect(),
        }),
        What::Embedding => serde_json::to_vec(&selected_embeddings(project, args.method)?),
        What::Pimages => serde_json::to_vec(&project.images),
    }
    .context("encoding json")?;
    out.extend_from_slice(&json);
    out.push(b'\n');
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .target(env_logger::Target::Stderr)
        .init();

    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let outcome = match cli.command {
        Command::Ingest(a) => ingest(a),
        Command::Compute(a) => compute(a),
        Command::Embed(a) => embed(a),
        Command::Serve(a) => serve(a),
        Command::Export(a) => export(a),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(EXIT_USAGE)
        }
        Err(Failure::Data(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(EXIT_DATA)
        }
    }
}
