use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, CommandFactory, Parser, Subcommand};
use rsic::captioner::{load_checkpoint, save_checkpoint, EdgeKind, Variant};
use rsic::corpus::{gen_synthetic, load_dataset_json, Dataset, Split, MIN_SYNTHETIC};
use rsic::experiment::{evaluate_split, run_compare, train_model, ExperimentConfig, StrategyKind};
use rsic::imagecore::{encode_pgm, read_netpbm, to_grayscale, EdgeDetector};
use rsic::persist::write_atomic;
use rsic::search::{build_archive, decode_caption, load_archive, save_archive, Archive, Strategy};

#[derive(Parser)]
#[command(name = "rsic", version, about = "Edge-aware remote sensing image captioning")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic captioned corpus.
    GenSynth {
        #[arg(long, default_value_t = 100)]
        n: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train one model variant; writes model.jssf and training_log.csv.
    Train {
        #[command(flatten)]
        exp: ExpArgs,
        #[arg(long, value_parser = parse_edge)]
        edge: Option<EdgeKind>,
        #[arg(long, value_parser = parse_variant)]
        fusion: Option<Variant>,
    },
    /// Caption a single image.
    Caption {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        image: PathBuf,
        #[command(flatten)]
        decode: DecodeArgs,
    },
    /// Caption a dataset split and score it; writes report.csv, report.md and predictions.jsonl.
    Evaluate {
        #[arg(long)]
        checkpoint: PathBuf,
        #[command(flatten)]
        exp: ExpArgs,
        #[arg(long, value_parser = parse_split)]
        split: Option<Split>,
        #[command(flatten)]
        decode: DecodeArgs,
    },
    /// Train and evaluate every edge x fusion cell; writes report.csv and report.md.
    Compare {
        #[command(flatten)]
        exp: ExpArgs,
        #[arg(long, value_parser = parse_edge, value_delimiter = ',')]
        edge: Vec<EdgeKind>,
        #[arg(long, value_parser = parse_variant, value_delimiter = ',')]
        fusion: Vec<Variant>,
        #[command(flatten)]
        decode: DecodeArgs,
    },
    /// Encode the train split into a retrieval archive (archive.jssa).
    BuildArchive {
        #[arg(long)]
        checkpoint: PathBuf,
        #[command(flatten)]
        exp: ExpArgs,
    },
    /// Write the edge map of an image for each detector as PGM.
    Edges {
        #[arg(long)]
        image: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_parser = parse_edge, value_delimiter = ',')]
        edge: Vec<EdgeKind>,
    },
}

#[derive(Args)]
struct ExpArgs {
    /// Experiment JSON; flags override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Dataset JSON with images/ next to it.
    #[arg(long)]
    dataset: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    epochs: Option<usize>,
}

#[derive(Args)]
struct DecodeArgs {
    #[arg(long, value_parser = parse_strategy)]
    strategy: Option<StrategyKind>,
    /// Beam width for beam and cbbs.
    #[arg(long)]
    beam: Option<usize>,
    /// Archive neighbours for cbbs.
    #[arg(long)]
    knn: Option<usize>,
    /// Archive file for cbbs.
    #[arg(long)]
    archive: Option<PathBuf>,
}

fn parse_edge(s: &str) -> Result<EdgeKind, String> {
    EdgeKind::parse(s).ok_or_else(|| format!("unknown edge detector {s:?} (none|canny|sobel|laplacian)"))
}

fn parse_variant(s: &str) -> Result<Variant, String> {
    Variant::parse(s).ok_or_else(|| format!("unknown fusion {s:?} (single|early|late)"))
}

fn parse_split(s: &str) -> Result<Split, String> {
    Split::parse(s).ok_or_else(|| format!("unknown split {s:?} (train|val|test)"))
}

fn parse_strategy(s: &str) -> Result<StrategyKind, String> {
    StrategyKind::parse(s).ok_or_else(|| format!("unknown strategy {s:?} (greedy|beam|cbbs)"))
}

enum Failure {
    Usage(String),
    Run(rsic::Error),
}

impl From<rsic::Error> for Failure {
    fn from(e: rsic::Error) -> Self {
        Failure::Run(e)
    }
}

type CmdResult = Result<(), Failure>;

fn experiment(args: &ExpArgs) -> Result<ExperimentConfig, Failure> {
    let mut exp = match &args.config {
        Some(p) => ExperimentConfig::load(p)?,
        None => ExperimentConfig::default(),
    };
    if let Some(d) = &args.dataset {
        exp.dataset = Some(d.clone());
    }
    if let Some(s) = args.seed {
        exp.seed = s;
    }
    if let Some(o) = &args.out {
        exp.out = Some(o.clone());
    }
    if let Some(e) = args.epochs {
        exp.model.train.epochs = e;
    }
    Ok(exp)
}

fn apply_decode(exp: &mut ExperimentConfig, d: &DecodeArgs) {
    if let Some(s) = d.strategy {
        exp.decode.strategy = s;
    }
    if let Some(b) = d.beam {
        exp.decode.beam_width = b;
    }
    if let Some(k) = d.knn {
        exp.decode.k = k;
    }
}

fn dataset(exp: &ExperimentConfig) -> Result<Dataset, Failure> {
    match &exp.dataset {
        Some(p) if !p.exists() => Err(Failure::Run(rsic::Error::Config(format!(
            "dataset not found: {}",
            p.display()
        )))),
        Some(p) => Ok(load_dataset_json(p)?),
        None if exp.synthetic.is_some() => Ok(exp.resolve_dataset()?),
        None => Err(Failure::Usage("a dataset is required (--dataset or a config with one)".into())),
    }
}

/// Loads the archive for cbbs; other strategies ignore it.
fn archive_for(exp: &ExperimentConfig, d: &DecodeArgs) -> Result<Option<Archive>, Failure> {
    exp.decode.validate()?;
    match (exp.decode.strategy, &d.archive) {
        (StrategyKind::Cbbs, None) => Err(Failure::Usage("--strategy cbbs needs --archive".into())),
        (StrategyKind::Cbbs, Some(p)) => Ok(Some(load_archive(p)?)),
        _ => Ok(None),
    }
}

fn cmd_gen_synth(n: usize, seed: u64, out: &Path) -> CmdResult {
    if n < MIN_SYNTHETIC {
        return Err(Failure::Usage(format!("--n must be at least {MIN_SYNTHETIC}, got {n}")));
    }
    let ds = gen_synthetic(n, seed, out)?;
    let [train, val, test] = ds.split_counts();
    println!("train {train} / val {val} / test {test}");
    println!("wrote {}", out.join("dataset.json").display());
    Ok(())
}

fn cmd_train(args: &ExpArgs, edge: Option<EdgeKind>, fusion: Option<Variant>) -> CmdResult {
    let exp = experiment(args)?;
    let cfg = exp.model_config(
        fusion.unwrap_or(exp.model.variant),
        edge.unwrap_or(exp.model.edge),
    );
    cfg.validate()?;
    let ds = dataset(&exp)?;
    let out = exp.out_dir();
    std::fs::create_dir_all(&out).map_err(|e| rsic::Error::io(&out, e))?;
    let trained = train_model(&cfg, &ds, exp.min_count, |e| {
        eprintln!("epoch {} loss {:.4} acc {:.4}", e.epoch, e.loss, e.token_accuracy)
    })?;
    save_checkpoint(&trained.model, out.join("model.jssf"))?;
    write_atomic(&out.join("training_log.csv"), trained.log.to_csv().as_bytes())?;
    println!(
        "{}: loss {:.4} -> {:.4} in {} steps",
        cfg.label(),
        trained.log.initial_loss,
        trained.log.final_loss(),
        trained.log.total_steps
    );
    println!("wrote {}", out.join("model.jssf").display());
    Ok(())
}

fn cmd_caption(checkpoint: &Path, image: &Path, d: &DecodeArgs) -> CmdResult {
    let mut exp = ExperimentConfig::default();
    apply_decode(&mut exp, d);
    let archive = archive_for(&exp, d)?;
    let model = load_checkpoint(checkpoint)?;
    let ctx = model.encode_image(&read_netpbm(image)?)?;
    let h = decode_caption(&model, &ctx, &exp.decode.strategy(), archive.as_ref())?;
    println!("{}", model.vocab().decode(&h.tokens));
    Ok(())
}

fn cmd_evaluate(checkpoint: &Path, args: &ExpArgs, split: Option<Split>, d: &DecodeArgs) -> CmdResult {
    let mut exp = experiment(args)?;
    apply_decode(&mut exp, d);
    let archive = archive_for(&exp, d)?;
    let model = load_checkpoint(checkpoint)?;
    let ds = dataset(&exp)?;
    let out = exp.out_dir();
    let strategy: Strategy = exp.decode.strategy();
    let r = evaluate_split(
        &model,
        &ds,
        split.unwrap_or(exp.eval_split),
        &strategy,
        archive.as_ref(),
        &out,
    )?;
    print!("{}", r.to_markdown());
    println!("wrote {}", out.join("report.csv").display());
    Ok(())
}

fn cmd_compare(args: &ExpArgs, edges: &[EdgeKind], fusions: &[Variant], d: &DecodeArgs) -> CmdResult {
    let mut exp = experiment(args)?;
    apply_decode(&mut exp, d);
    if d.archive.is_some() {
        return Err(Failure::Usage("compare builds one archive per cell; drop --archive".into()));
    }
    if !edges.is_empty() {
        exp.edges = edges.to_vec();
    }
    if !fusions.is_empty() {
        exp.fusions = fusions.to_vec();
    }
    let table = run_compare(&exp, |msg| eprintln!("{msg}"))?;
    print!("{}", table.to_markdown());
    println!("wrote {}", exp.out_dir().join("report.md").display());
    if table.rows.iter().any(|r| r.result.is_err()) {
        return Err(Failure::Run(rsic::Error::Data("one or more cells FAILED".into())));
    }
    Ok(())
}

fn cmd_build_archive(checkpoint: &Path, args: &ExpArgs) -> CmdResult {
    let exp = experiment(args)?;
    let model = load_checkpoint(checkpoint)?;
    let ds = dataset(&exp)?;
    let archive = build_archive(&model, &ds, &ds.split(Split::Train))?;
    let out = exp.out_dir();
    std::fs::create_dir_all(&out).map_err(|e| rsic::Error::io(&out, e))?;
    save_archive(&archive, out.join("archive.jssa"))?;
    println!(
        "{} entries, feature dim {}; wrote {}",
        archive.entries.len(),
        archive.feature_dim(),
        out.join("archive.jssa").display()
    );
    Ok(())
}

fn cmd_edges(image: &Path, out: &Path, edges: &[EdgeKind]) -> CmdResult {
    let img = read_netpbm(image)?;
    let gray = to_grayscale(&img);
    std::fs::create_dir_all(out).map_err(|e| rsic::Error::io(out, e))?;
    let stem = image.file_stem().and_then(|s| s.to_str()).unwrap_or("image");
    let kinds = if edges.is_empty() { &EdgeKind::ALL[1..] } else { edges };
    for kind in kinds {
        let Some(det): Option<EdgeDetector> = kind.detector() else {
            continue;
        };
        let map = det.detect(&gray)?.to_image(1)?;
        let path = out.join(format!("{stem}_{kind}.pgm"));
        write_atomic(&path, &encode_pgm(&map))?;
        println!("wrote {}", path.display());
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::GenSynth { n, seed, out } => cmd_gen_synth(*n, *seed, out),
        Command::Train { exp, edge, fusion } => cmd_train(exp, *edge, *fusion),
        Command::Caption {
            checkpoint,
            image,
            decode,
        } => cmd_caption(checkpoint, image, decode),
        Command::Evaluate {
            checkpoint,
            exp,
            split,
            decode,
        } => cmd_evaluate(checkpoint, exp, *split, decode),
        Command::Compare {
            exp,
            edge,
            fusion,
            decode,
        } => cmd_compare(exp, edge, fusion, decode),
        Command::BuildArchive { checkpoint, exp } => cmd_build_archive(checkpoint, exp),
        Command::Edges { image, out, edge } => cmd_edges(image, out, edge),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(msg)) => {
            Cli::command()
                .error(clap::error::ErrorKind::InvalidValue, msg)
                .exit();
        }
        Err(Failure::Run(e)) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
