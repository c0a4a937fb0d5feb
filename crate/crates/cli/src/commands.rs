//! Subcommand definitions and dispatch.

use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use ctxparse::bundle::{load_bundle, save_bundle};
use ctxparse::data::{load_dataset, write_dataset, DatasetLayout};
use ctxparse::fusion::ContextInput;
use ctxparse::ganet::{history_to_csv, GaConfig};
use ctxparse::image::{write_id_png, RasterImage};
use ctxparse::pipeline::{
    self, evaluate_bundle, evaluate_identity, evaluate_visual_only, predict_image,
    train_model, PipelineConfig,
};
use ctxparse::superpixel::{build_adjacency, slic_segment, SlicParams};
use ctxparse::synth::{synth_generate, SynthConfig};
use ctxparse::visual::{ClassifierKind, VisualTrainConfig};

use crate::config::FileConfig;
use crate::log;

/// Superpixel scene parser: one-vs-all visual classification, co-occurrence
/// context voting, and a GA-trained integration network.
#[derive(Parser)]
#[command(name = "ctxparse", version, about)]
pub struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic banded-scene benchmark (train/ and test/ splits).
    Synth(SynthOpts),
    /// Train all three layers on a dataset and write a model bundle.
    Train(TrainOpts),
    /// Predict label maps (index PNG + palette overlay) for images.
    Predict(PredictOpts),
    /// Evaluate a bundle against a labeled dataset.
    Eval(EvalOpts),
    /// Segment one image and dump superpixel ids as a 16-bit PNG.
    Inspect(InspectOpts),
    /// Dump co-occurrence tables as text and heatmap PNGs.
    InspectOcp(InspectOcpOpts),
    /// Summarize a GA history CSV written by train.
    GaLog(GaLogOpts),
}

#[derive(Args)]
struct SynthOpts {
    /// Output directory; receives train/ and test/ dataset roots.
    #[arg(long)]
    out: PathBuf,
    /// Number of classes (2..=8): bands plus one blob class.
    #[arg(long, default_value_t = 5)]
    classes: usize,
    #[arg(long, default_value_t = 64)]
    width: u32,
    #[arg(long, default_value_t = 64)]
    height: u32,
    /// Training images.
    #[arg(long, default_value_t = 200)]
    train_count: usize,
    /// Test images.
    #[arg(long, default_value_t = 50)]
    test_count: usize,
    /// Gaussian color noise sigma.
    #[arg(long, default_value_t = 25.0)]
    noise_sigma: f64,
    /// Band boundary jitter as a fraction of nominal band height.
    #[arg(long, default_value_t = 0.35)]
    band_jitter: f64,
    #[arg(long, default_value_t = 9)]
    seed: u64,
}

#[derive(Args)]
struct TrainOpts {
    /// Dataset root (images/, labels/, classes.txt).
    #[arg(long)]
    data: PathBuf,
    /// Output bundle path (.cpb).
    #[arg(long)]
    out: PathBuf,
    /// Flat key = value config file; explicit flags win over it.
    #[arg(long)]
    config: Option<PathBuf>,
    /// GA history CSV path [default: <out>.ga.csv].
    #[arg(long)]
    ga_log: Option<PathBuf>,

    /// Requested superpixels per image [default: 400].
    #[arg(long)]
    target_count: Option<usize>,
    /// SLIC compactness (spatial weight) [default: 10].
    #[arg(long)]
    compactness: Option<f64>,
    /// SLIC iterations [default: 10].
    #[arg(long)]
    iterations: Option<usize>,
    /// Seed recorded for the segmentation stage [default: 0].
    #[arg(long)]
    slic_seed: Option<u64>,

    /// Spatial grid side G; G*G blocks condition the global priors
    /// [default: 3].
    #[arg(long)]
    grid_side: Option<usize>,
    /// Add-alpha smoothing for co-occurrence rows [default: 1].
    #[arg(long)]
    ocp_alpha: Option<f64>,

    /// Layer-I classifier form [default: logistic].
    #[arg(long, value_enum)]
    classifier: Option<ClassifierArg>,
    /// Hidden units for the mlp classifier [default: 16].
    #[arg(long)]
    classifier_hidden: Option<usize>,
    /// Training preset: desk (lr 1e-2, 500 epochs) or slow-decay
    /// (lr 1e-4, 0.1x every 30 epochs) [default: desk].
    #[arg(long, value_enum)]
    preset: Option<PresetArg>,
    /// Override preset epochs.
    #[arg(long)]
    epochs: Option<usize>,
    /// Override preset learning rate.
    #[arg(long)]
    learning_rate: Option<f64>,
    /// Override preset L2 penalty.
    #[arg(long)]
    l2: Option<f64>,
    /// Seed for classifier initialization [default: 0].
    #[arg(long)]
    visual_seed: Option<u64>,

    /// Integration hidden size [default: 2 * classes].
    #[arg(long)]
    hidden: Option<usize>,
    /// Integration input mode: the three vectors separate (3M) or visual
    /// plus fused context (2M ablation) [default: separate].
    #[arg(long, value_enum)]
    context_input: Option<ContextInputArg>,

    /// GA generations [default: 1000].
    #[arg(long)]
    generations: Option<usize>,
    /// GA population size [default: 8].
    #[arg(long)]
    population: Option<usize>,
    /// GA mating pool size [default: 4].
    #[arg(long)]
    pool_size: Option<usize>,
    /// Crossover probability per pair [default: 0.9].
    #[arg(long)]
    crossover_prob: Option<f64>,
    /// Mutation probability per non-crossover child [default: 0.9].
    #[arg(long)]
    mutation_prob: Option<f64>,
    /// Fraction of genes resampled per mutation [default: 0.1].
    #[arg(long)]
    mutation_genes: Option<f64>,
    /// Genome init range low end [default: -1].
    #[arg(long)]
    init_low: Option<f64>,
    /// Genome init range high end [default: 1].
    #[arg(long)]
    init_high: Option<f64>,
    /// Keep all parents each generation [default: true].
    #[arg(long)]
    elitism: Option<bool>,
    /// GA seed [default: 0].
    #[arg(long)]
    ga_seed: Option<u64>,

    /// Fraction of training images held out for GA fitness [default: 0.2].
    #[arg(long)]
    holdout: Option<f64>,
    /// Seed of the fit/holdout split [default: 0].
    #[arg(long)]
    split_seed: Option<u64>,
    /// Worker threads for per-image stages; 0 = all cores [default: 0].
    #[arg(long)]
    workers: Option<usize>,
}

#[derive(Clone, Copy, ValueEnum)]
enum ClassifierArg {
    Logistic,
    Mlp,
}

#[derive(Clone, Copy, ValueEnum)]
enum PresetArg {
    Desk,
    SlowDecay,
}

#[derive(Clone, Copy, ValueEnum)]
enum ContextInputArg {
    Separate,
    Fused,
}

#[derive(Args)]
struct PredictOpts {
    /// Trained bundle (.cpb).
    #[arg(long)]
    bundle: PathBuf,
    /// Output directory for <stem>.labels.png and <stem>.overlay.png.
    #[arg(long)]
    out: PathBuf,
    /// Also write <stem>.stages.txt with per-superpixel probabilities.
    #[arg(long)]
    dump_stages: bool,
    /// Input images (.png or .ppm).
    #[arg(required = true)]
    images: Vec<PathBuf>,
}

#[derive(Args)]
struct EvalOpts {
    /// Trained bundle (.cpb).
    #[arg(long)]
    bundle: PathBuf,
    /// Labeled dataset root.
    #[arg(long)]
    data: PathBuf,
    /// Machine-readable results file [default: eval_results.txt].
    #[arg(long, default_value = "eval_results.txt")]
    out: PathBuf,
    /// Score the ground truth against itself (debug; all metrics 1.0).
    #[arg(long)]
    identity: bool,
    /// Score the Layer-I visual argmax instead of the full pipeline.
    #[arg(long)]
    visual_only: bool,
    /// Worker threads; 0 = all cores.
    #[arg(long, default_value_t = 0)]
    workers: usize,
}

#[derive(Args)]
struct InspectOpts {
    /// Input image.
    #[arg(long)]
    image: PathBuf,
    /// Output 16-bit grayscale PNG of superpixel ids.
    #[arg(long)]
    out: PathBuf,
    /// Requested superpixels [default: 400].
    #[arg(long, default_value_t = 400)]
    target_count: usize,
    #[arg(long, default_value_t = 10.0)]
    compactness: f64,
    #[arg(long, default_value_t = 10)]
    iterations: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct InspectOcpOpts {
    /// Trained bundle (.cpb).
    #[arg(long)]
    bundle: PathBuf,
    /// Output directory for tables and heatmaps.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct GaLogOpts {
    /// History CSV written by train.
    #[arg(long)]
    log: PathBuf,
}

/// Runs a subcommand and maps errors to the documented exit codes:
/// 0 success, 1 runtime failure, 2 invalid input or configuration.
pub fn run(cli: Cli) -> i32 {
    let result = match cli.command {
        Command::Synth(o) => cmd_synth(o),
        Command::Train(o) => cmd_train(o),
        Command::Predict(o) => cmd_predict(o),
        Command::Eval(o) => cmd_eval(o),
        Command::Inspect(o) => cmd_inspect(o),
        Command::InspectOcp(o) => cmd_inspect_ocp(o),
        Command::GaLog(o) => cmd_ga_log(o),
    };
    match result {
        Ok(()) => 0,
        Err(err) => {
            eprintln!("error: {err:#}");
            match err.downcast_ref::<ctxparse::Error>() {
                Some(e) if e.is_usage() => 2,
                Some(_) => 1,
                // Anyhow-wrapped config/path problems are usage errors.
                None => 2,
            }
        }
    }
}

fn cmd_synth(o: SynthOpts) -> Result<()> {
    let base = SynthConfig::default_for(o.classes);
    let mk = |count: usize, seed: u64| SynthConfig {
        class_count: o.classes,
        width: o.width,
        height: o.height,
        band_jitter: o.band_jitter,
        noise_sigma: o.noise_sigma,
        count,
        seed,
        ..base.clone()
    };
    for (name, count, seed) in [
        ("train", o.train_count, o.seed),
        ("test", o.test_count, o.seed.wrapping_add(0x9e3779b9)),
    ] {
        let ds = synth_generate(&mk(count, seed))?;
        let root = o.out.join(name);
        write_dataset(&ds, &root)?;
        log::info(format!(
            "wrote {count} images ({} classes, {}x{}) to {}",
            o.classes,
            o.width,
            o.height,
            root.display()
        ));
    }
    Ok(())
}

fn resolve_train_config(o: &TrainOpts) -> Result<PipelineConfig> {
    let file = match &o.config {
        Some(path) => FileConfig::load(path)?,
        None => FileConfig::empty(),
    };
    let known = [
        "target_count",
        "compactness",
        "iterations",
        "slic_seed",
        "grid_side",
        "ocp_alpha",
        "classifier",
        "classifier_hidden",
        "preset",
        "epochs",
        "learning_rate",
        "l2",
        "visual_seed",
        "hidden",
        "context_input",
        "generations",
        "population",
        "pool_size",
        "crossover_prob",
        "mutation_prob",
        "mutation_genes",
        "init_low",
        "init_high",
        "elitism",
        "ga_seed",
        "holdout",
        "split_seed",
        "workers",
    ];
    for unknown in file.keys_not_in(&known) {
        log::info(format!("warning: unknown config key '{unknown}' ignored"));
    }

    let preset_name: String = file.resolve(
        o.preset.map(|p| match p {
            PresetArg::Desk => "desk".to_string(),
            PresetArg::SlowDecay => "slow-decay".to_string(),
        }),
        "preset",
        "desk".to_string(),
    )?;
    let mut visual = match preset_name.as_str() {
        "desk" => VisualTrainConfig::desk(),
        "slow-decay" => VisualTrainConfig::slow_decay(),
        other => anyhow::bail!("unknown preset '{other}' (want desk or slow-decay)"),
    };
    let classifier_name: String = file.resolve(
        o.classifier.map(|c| match c {
            ClassifierArg::Logistic => "logistic".to_string(),
            ClassifierArg::Mlp => "mlp".to_string(),
        }),
        "classifier",
        "logistic".to_string(),
    )?;
    visual.kind = match classifier_name.as_str() {
        "logistic" => ClassifierKind::Logistic,
        "mlp" => ClassifierKind::Mlp {
            hidden: file.resolve(o.classifier_hidden, "classifier_hidden", 16)?,
        },
        other => anyhow::bail!("unknown classifier '{other}' (want logistic or mlp)"),
    };
    visual.epochs = file.resolve(o.epochs, "epochs", visual.epochs)?;
    visual.learning_rate = file.resolve(o.learning_rate, "learning_rate", visual.learning_rate)?;
    visual.l2 = file.resolve(o.l2, "l2", visual.l2)?;
    visual.seed = file.resolve(o.visual_seed, "visual_seed", 0)?;

    let context_name: String = file.resolve(
        o.context_input.map(|c| match c {
            ContextInputArg::Separate => "separate".to_string(),
            ContextInputArg::Fused => "fused".to_string(),
        }),
        "context_input",
        "separate".to_string(),
    )?;
    let context_input = match context_name.as_str() {
        "separate" => ContextInput::Separate,
        "fused" => ContextInput::Fused,
        other => anyhow::bail!("unknown context input '{other}' (want separate or fused)"),
    };

    let ga_default = GaConfig::default();
    let cfg = PipelineConfig {
        slic: SlicParams {
            target_count: file.resolve(o.target_count, "target_count", 400)?,
            compactness: file.resolve(o.compactness, "compactness", 10.0)?,
            iterations: file.resolve(o.iterations, "iterations", 10)?,
            seed: file.resolve(o.slic_seed, "slic_seed", 0)?,
        },
        grid_side: file.resolve(o.grid_side, "grid_side", 3)?,
        ocp_alpha: file.resolve(o.ocp_alpha, "ocp_alpha", 1.0)?,
        visual,
        hidden: match file.resolve(o.hidden, "hidden", 0)? {
            0 => None,
            h => Some(h),
        },
        context_input,
        ga: GaConfig {
            generations: file.resolve(o.generations, "generations", ga_default.generations)?,
            population: file.resolve(o.population, "population", ga_default.population)?,
            pool_size: file.resolve(o.pool_size, "pool_size", ga_default.pool_size)?,
            crossover_prob: file.resolve(
                o.crossover_prob,
                "crossover_prob",
                ga_default.crossover_prob,
            )?,
            mutation_prob: file.resolve(
                o.mutation_prob,
                "mutation_prob",
                ga_default.mutation_prob,
            )?,
            mutation_fraction: file.resolve(
                o.mutation_genes,
                "mutation_genes",
                ga_default.mutation_fraction,
            )?,
            init_low: file.resolve(o.init_low, "init_low", ga_default.init_low)?,
            init_high: file.resolve(o.init_high, "init_high", ga_default.init_high)?,
            elitism: file.resolve(o.elitism, "elitism", true)?,
            seed: file.resolve(o.ga_seed, "ga_seed", 0)?,
        },
        holdout_fraction: file.resolve(o.holdout, "holdout", 0.2)?,
        split_seed: file.resolve(o.split_seed, "split_seed", 0)?,
        workers: file.resolve(o.workers, "workers", 0)?,
    };
    Ok(cfg)
}

fn cmd_train(o: TrainOpts) -> Result<()> {
    let cfg = resolve_train_config(&o)?;
    let ds = load_dataset(&o.data, &DatasetLayout::default())?;
    for w in &ds.warnings {
        log::info(format!("warning: {w}"));
    }
    log::info(format!(
        "training on {} images, {} classes",
        ds.items.len(),
        ds.class_count
    ));
    let report = train_model(&ds, &cfg)?;
    for w in &report.warnings {
        log::info(format!("warning: {w}"));
    }
    for (stage, secs) in &report.timings {
        log::info(format!("stage {stage}: {secs:.2}s"));
    }
    log::info(format!(
        "visual holdout accuracy {:.4}, GA best {:.4}",
        report.visual_holdout_accuracy,
        report.history.last().map(|s| s.best).unwrap_or(0.0)
    ));
    save_bundle(&report.bundle, &o.out)?;
    let ga_log = o
        .ga_log
        .clone()
        .unwrap_or_else(|| append_ext(&o.out, "ga.csv"));
    std::fs::write(&ga_log, history_to_csv(&report.history))
        .with_context(|| format!("cannot write GA history {}", ga_log.display()))?;
    log::info(format!(
        "wrote bundle {} and GA history {}",
        o.out.display(),
        ga_log.display()
    ));
    Ok(())
}

fn append_ext(path: &Path, ext: &str) -> PathBuf {
    let mut s = path.as_os_str().to_os_string();
    s.push(".");
    s.push(ext);
    PathBuf::from(s)
}

fn cmd_predict(o: PredictOpts) -> Result<()> {
    let bundle = load_bundle(&o.bundle)?;
    std::fs::create_dir_all(&o.out)
        .with_context(|| format!("cannot create {}", o.out.display()))?;
    let mut failures = 0usize;
    for path in &o.images {
        let stem = path
            .file_stem()
            .and_then(|s| s.to_str())
            .unwrap_or("image")
            .to_string();
        let outcome = (|| -> Result<()> {
            let image = RasterImage::open(path)?;
            let (labels, dumps) = predict_image(&bundle, &image, o.dump_stages)?;
            labels.write_png(&o.out.join(format!("{stem}.labels.png")))?;
            let overlay = pipeline::colorize(&labels, &bundle.palette)?;
            overlay.write_png(&o.out.join(format!("{stem}.overlay.png")))?;
            if let Some(dumps) = dumps {
                std::fs::write(
                    o.out.join(format!("{stem}.stages.txt")),
                    pipeline::stage_dump_text(&dumps),
                )?;
            }
            Ok(())
        })();
        match outcome {
            Ok(()) => log::debug(format!("predicted {}", path.display())),
            Err(err) => {
                eprintln!("error: {}: {err:#}", path.display());
                failures += 1;
            }
        }
    }
    log::info(format!(
        "predicted {} image(s) into {}",
        o.images.len() - failures,
        o.out.display()
    ));
    if failures > 0 {
        anyhow::bail!("{failures} image(s) failed");
    }
    Ok(())
}

fn cmd_eval(o: EvalOpts) -> Result<()> {
    let bundle = load_bundle(&o.bundle)?;
    let ds = load_dataset(&o.data, &DatasetLayout::default())?;
    for w in &ds.warnings {
        log::info(format!("warning: {w}"));
    }
    let report = if o.identity {
        evaluate_identity(&ds, o.workers)?
    } else if o.visual_only {
        evaluate_visual_only(&bundle, &ds, o.workers)?
    } else {
        evaluate_bundle(&bundle, &ds, o.workers)?
    };
    print!("{}", pipeline::eval_report_table(&report, &ds.class_names));
    println!(
        "pixel {:.4}  class {:.4}  mIoU {:.4}",
        report.pixel_accuracy, report.class_accuracy, report.mean_iou
    );
    std::fs::write(&o.out, pipeline::eval_report_text(&report, &ds.class_names))
        .with_context(|| format!("cannot write results {}", o.out.display()))?;
    log::info(format!("wrote results {}", o.out.display()));
    Ok(())
}

fn cmd_inspect(o: InspectOpts) -> Result<()> {
    let image = RasterImage::open(&o.image)?;
    let params = SlicParams {
        target_count: o.target_count,
        compactness: o.compactness,
        iterations: o.iterations,
        seed: o.seed,
    };
    let mut spmap = slic_segment(&image, &params)?;
    build_adjacency(&mut spmap);
    if spmap.count() > u16::MAX as usize + 1 {
        anyhow::bail!("{} superpixels exceed the 16-bit id dump format", spmap.count());
    }
    let ids: Vec<u16> = spmap.assignment().iter().map(|&id| id as u16).collect();
    write_id_png(&o.out, spmap.width(), spmap.height(), &ids)?;
    println!(
        "{} superpixels over {}x{} -> {}",
        spmap.count(),
        image.width(),
        image.height(),
        o.out.display()
    );
    Ok(())
}

fn heatmap(values: &[f64], rows: usize, cols: usize, path: &Path) -> Result<()> {
    const CELL: u32 = 16;
    let max = values.iter().cloned().fold(f64::MIN, f64::max).max(1e-12);
    let img = RasterImage::from_fn(cols as u32 * CELL, rows as u32 * CELL, |x, y| {
        let r = (y / CELL) as usize;
        let c = (x / CELL) as usize;
        let v = (values[r * cols + c] / max).clamp(0.0, 1.0);
        // Cold-to-hot ramp.
        let red = (v * 255.0).round() as u8;
        let blue = ((1.0 - v) * 255.0).round() as u8;
        let green = ((1.0 - (2.0 * v - 1.0).abs()) * 160.0).round() as u8;
        [red, green, blue]
    })?;
    img.write_png(path)?;
    Ok(())
}

fn table_text(values: &[f64], rows: usize, cols: usize, row_label: impl Fn(usize) -> String) -> String {
    let mut out = String::new();
    for r in 0..rows {
        out.push_str(&row_label(r));
        for c in 0..cols {
            out.push_str(&format!(" {:>8.5}", values[r * cols + c]));
        }
        out.push('\n');
    }
    out
}

fn cmd_inspect_ocp(o: InspectOcpOpts) -> Result<()> {
    let bundle = load_bundle(&o.bundle)?;
    std::fs::create_dir_all(&o.out)
        .with_context(|| format!("cannot create {}", o.out.display()))?;
    let m = bundle.class_count;
    let ocp = &bundle.ocp;

    let local_txt = format!(
        "# local co-occurrence P(neighbor class | class), rows = source class\n{}",
        table_text(ocp.local_table(), m, m, |r| {
            format!("{:<12}", bundle.class_names[r])
        })
    );
    std::fs::write(o.out.join("local_ocp.txt"), local_txt)?;
    heatmap(ocp.local_table(), m, m, &o.out.join("local_ocp.png"))?;

    let blocks = bundle.grid_side * bundle.grid_side;
    let prior_txt = format!(
        "# per-block class priors P(class | block), rows = block (row-major grid)\n{}",
        table_text(ocp.block_prior_table(), blocks, m, |r| format!("block {r:<6}"))
    );
    std::fs::write(o.out.join("block_priors.txt"), prior_txt)?;
    heatmap(
        ocp.block_prior_table(),
        blocks,
        m,
        &o.out.join("block_priors.png"),
    )?;
    println!(
        "wrote local_ocp.txt/.png and block_priors.txt/.png to {}",
        o.out.display()
    );
    Ok(())
}

fn cmd_ga_log(o: GaLogOpts) -> Result<()> {
    let text = std::fs::read_to_string(&o.log)
        .with_context(|| format!("cannot read {}", o.log.display()))?;
    let mut lines = text.lines();
    let header = lines.next().unwrap_or_default();
    if header != "generation,best,mean" {
        anyhow::bail!("{}: not a GA history CSV (bad header)", o.log.display());
    }
    let mut rows = 0usize;
    let mut first_best = None;
    let mut last_best: f64 = 0.0;
    let mut monotone = true;
    let mut prev = f64::NEG_INFINITY;
    for line in lines {
        if line.trim().is_empty() {
            continue;
        }
        let parts: Vec<&str> = line.split(',').collect();
        if parts.len() != 3 {
            anyhow::bail!("{}: bad row '{line}'", o.log.display());
        }
        let best: f64 = parts[1].parse().context("bad best value")?;
        if first_best.is_none() {
            first_best = Some(best);
        }
        if best < prev {
            monotone = false;
        }
        prev = best;
        last_best = best;
        rows += 1;
    }
    println!(
        "generations: {rows}\nfirst best: {}\nfinal best: {last_best}\nnon-decreasing: {monotone}",
        first_best.unwrap_or(0.0)
    );
    Ok(())
}
