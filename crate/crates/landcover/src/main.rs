//! Command-line front end: synthesize a corpus, prepare raw tiles, train
//! either model, evaluate a checkpoint, and render predictions.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use landcover::data::synth::{write_synth_corpus, SynthParams};
use landcover::data::{
    distribution, load_split, prepare_corpus, train_class_weights, Manifest, Sample, Split,
};
use landcover::engine::{ModelKind, TrainConfig, Trainer};
use landcover::metrics::{composite, render_band, render_labels};
use landcover::taxonomy::ClassTaxonomy;
use landcover::{Error, Result};

#[derive(Parser)]
#[command(name = "landcover", version, about = "Land-cover segmentation: corpus tools, training, evaluation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic labelled corpus with a manifest
    Synth(SynthArgs),
    /// Remap a raw-legend corpus to the six-class schema and filter tiles
    Prepare(PrepareArgs),
    /// Train the adversarial model or the supervised baseline
    Train(TrainArgs),
    /// Score a checkpoint on a split and write a metrics report
    Eval(EvalArgs),
    /// Render a checkpoint's predictions next to the ground truth
    Predict(PredictArgs),
}

#[derive(Args)]
struct SynthArgs {
    /// Output directory for tiles and manifest.tsv
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 8)]
    tiles: usize,
    #[arg(long, default_value_t = 11)]
    seed: u64,
    /// Write labels as raw source-legend codes instead of class ids
    #[arg(long)]
    source_legend: bool,
    /// With --source-legend: corrupt this many train tiles with a patch of
    /// a dropped code, to exercise the prepare filter
    #[arg(long, default_value_t = 0)]
    contaminate: usize,
}

#[derive(Args)]
struct PrepareArgs {
    /// Manifest of the raw-legend corpus
    #[arg(long)]
    input: PathBuf,
    /// Output directory for the prepared corpus
    #[arg(long)]
    out: PathBuf,
    /// Taxonomy TOML; defaults to the built-in NLCD mapping
    #[arg(long)]
    taxonomy: Option<PathBuf>,
    /// Drop tiles whose dropped-pixel fraction exceeds this
    #[arg(long, default_value_t = 0.05)]
    threshold: f64,
}

#[derive(Args)]
struct TrainArgs {
    /// Manifest of the prepared corpus
    #[arg(long)]
    manifest: PathBuf,
    /// Directory for logs, checkpoints, and the resolved config
    #[arg(long)]
    run_dir: PathBuf,
    /// Training config TOML; flags below override its fields
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, value_parser = parse_model)]
    model: Option<ModelKind>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    width_mult: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    /// Resume from an existing checkpoint
    #[arg(long)]
    resume: Option<PathBuf>,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    manifest: PathBuf,
    #[arg(long)]
    checkpoint: PathBuf,
    /// Metrics report destination (TOML)
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value = "test")]
    split: Split,
    /// Also write per-tile composite renders here
    #[arg(long)]
    render_dir: Option<PathBuf>,
}

#[derive(Args)]
struct PredictArgs {
    #[arg(long)]
    manifest: PathBuf,
    #[arg(long)]
    checkpoint: PathBuf,
    /// Directory for rendered prediction PNGs
    #[arg(long)]
    out_dir: PathBuf,
    #[arg(long, default_value = "test")]
    split: Split,
}

fn parse_model(s: &str) -> std::result::Result<ModelKind, String> {
    match s {
        "cgan" => Ok(ModelKind::Cgan),
        "cnn" => Ok(ModelKind::Cnn),
        other => Err(format!("unknown model {other:?}; expected cgan or cnn")),
    }
}

fn load_taxonomy(path: Option<&Path>) -> Result<ClassTaxonomy> {
    match path {
        Some(p) => ClassTaxonomy::from_file(p),
        None => Ok(ClassTaxonomy::default()),
    }
}

fn run_synth(args: SynthArgs) -> Result<()> {
    let params = SynthParams {
        n_tiles: args.tiles,
        ..SynthParams::default()
    };
    let legend = args.source_legend.then(ClassTaxonomy::default);
    let manifest =
        write_synth_corpus(&params, args.seed, &args.out, legend.as_ref(), args.contaminate)?;
    println!("wrote {} tiles under {}", manifest.len(), args.out.display());
    Ok(())
}

fn run_prepare(args: PrepareArgs) -> Result<()> {
    let input = Manifest::load(&args.input)?;
    let taxonomy = load_taxonomy(args.taxonomy.as_deref())?;
    let (kept, dropped) = prepare_corpus(&input, &taxonomy, args.threshold, &args.out)?;
    let prepared = Manifest::load(args.out.join("manifest.tsv"))?;
    let report = distribution(&prepared)?;
    let dist_path = args.out.join("distribution.toml");
    std::fs::write(&dist_path, report.to_toml()).map_err(|e| Error::io(&dist_path, e))?;
    println!("prepared {kept} tiles ({dropped} dropped) under {}", args.out.display());
    Ok(())
}

fn run_train(args: TrainArgs) -> Result<()> {
    let mut config = match &args.config {
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
            toml::from_str::<TrainConfig>(&text)
                .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?
        }
        None => TrainConfig::default(),
    };
    if let Some(m) = args.model {
        config.model = m;
    }
    if let Some(e) = args.epochs {
        config.max_epochs = e;
    }
    if let Some(b) = args.batch_size {
        config.batch_size = b;
    }
    if let Some(w) = args.width_mult {
        config.width_multiplier = w;
    }
    if let Some(s) = args.seed {
        config.seed = s;
    }
    config.validate()?;

    let manifest = Manifest::load(&args.manifest)?;
    let train = load_split(&manifest, Split::Train)?;
    let val = load_split(&manifest, Split::Validation)?;
    let weights = train_class_weights(&manifest)?;

    let mut trainer = match &args.resume {
        Some(path) => Trainer::load(path)?,
        None => Trainer::new(config, weights)?,
    };

    std::fs::create_dir_all(&args.run_dir).map_err(|e| Error::io(&args.run_dir, e))?;
    let resolved = args.run_dir.join("config.toml");
    let text = toml::to_string_pretty(&trainer.config)
        .map_err(|e| Error::Config(format!("config serialization failed: {e}")))?;
    std::fs::write(&resolved, text).map_err(|e| Error::io(&resolved, e))?;

    let summary = trainer.fit(&train, &val, &args.run_dir)?;
    println!(
        "{}: ran {} epochs, best validation macro F1 {:.3} ({:?})",
        trainer.config.model.as_str(),
        summary.epochs_run,
        summary.best_val_f1,
        summary.stop
    );
    Ok(())
}

fn render_sample(sample: &Sample, prediction: &ndarray::Array2<u8>) -> Result<image::RgbImage> {
    let colors = ClassTaxonomy::default().colors().clone();
    // panels: near-infrared band, ground truth, prediction
    let nir = render_band(sample.image.index_axis(ndarray::Axis(0), 3));
    let truth = render_labels(sample.labels.view(), &colors)?;
    let pred = render_labels(prediction.view(), &colors)?;
    composite(&[nir, truth, pred])
}

fn run_eval(args: EvalArgs) -> Result<()> {
    let manifest = Manifest::load(&args.manifest)?;
    let samples = load_split(&manifest, args.split)?;
    let mut trainer = Trainer::load(&args.checkpoint)?;
    let report = trainer.evaluate(&samples, args.split.as_str())?;
    report.save(&args.out)?;
    if let Some(dir) = &args.render_dir {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let predictions = trainer.predict(&samples)?;
        for (sample, pred) in samples.iter().zip(&predictions) {
            let sheet = render_sample(sample, pred)?;
            let path = dir.join(format!("{}.png", sample.id));
            sheet
                .save(&path)
                .map_err(|e| Error::Metrics(format!("render save failed: {e}")))?;
        }
    }
    println!(
        "{} on {}: macro F1 {:.3}, accuracy {:.3}",
        report.model, report.split, report.macro_f1, report.overall_accuracy
    );
    Ok(())
}

fn run_predict(args: PredictArgs) -> Result<()> {
    let manifest = Manifest::load(&args.manifest)?;
    let samples = load_split(&manifest, args.split)?;
    let mut trainer = Trainer::load(&args.checkpoint)?;
    let predictions = trainer.predict(&samples)?;
    std::fs::create_dir_all(&args.out_dir).map_err(|e| Error::io(&args.out_dir, e))?;
    let colors = ClassTaxonomy::default().colors().clone();
    for (sample, pred) in samples.iter().zip(&predictions) {
        let img = render_labels(pred.view(), &colors)?;
        let path = args.out_dir.join(format!("{}.png", sample.id));
        img.save(&path)
            .map_err(|e| Error::Metrics(format!("render save failed: {e}")))?;
    }
    println!("wrote {} predictions to {}", predictions.len(), args.out_dir.display());
    Ok(())
}

fn main() -> ExitCode {
    env_logger::init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Synth(args) => run_synth(args),
        Command::Prepare(args) => run_prepare(args),
        Command::Train(args) => run_train(args),
        Command::Eval(args) => run_eval(args),
        Command::Predict(args) => run_predict(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e @ Error::Config(_)) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
