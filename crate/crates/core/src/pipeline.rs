//! End-to-end wiring: train all three layers on a dataset, predict label
//! maps with a trained bundle, and evaluate predictions. The CLI is a thin
//! wrapper around this module.

use std::time::Instant;

use rayon::prelude::*;

use crate::bundle::{dataset_hash, derive_palette, ModelBundle, Provenance};
use crate::context::{
    estimate_ocp, global_vote, local_vote, majority_classes, OcpTrainItem,
};
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::fusion::{
    train_integration, ContextInput, FusionSample, ProbTriple,
};
use crate::ganet::{GaConfig, GenStats};
use crate::image::{LabelMap, RasterImage};
use crate::metrics::ConfusionMatrix;
use crate::prob::ClassProbVector;
use crate::superpixel::{assign_blocks, build_adjacency, slic_segment, BlockGrid, SlicParams, SuperpixelMap};
use crate::visual::{
    extract_features, most_probable_class, predict_visual, train_classifier_bank,
    VisualTrainConfig,
};

/// Full run configuration, one field per tunable stage.
#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    pub slic: SlicParams,
    pub grid_side: usize,
    pub ocp_alpha: f64,
    pub visual: VisualTrainConfig,
    /// Integration hidden size; defaults to twice the class count.
    pub hidden: Option<usize>,
    pub context_input: ContextInput,
    pub ga: GaConfig,
    /// Fraction of training images held out as the GA fitness set.
    pub holdout_fraction: f64,
    pub split_seed: u64,
    /// Worker threads for per-image stages; 0 uses the global pool.
    pub workers: usize,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            slic: SlicParams::default(),
            grid_side: 3,
            ocp_alpha: 1.0,
            visual: VisualTrainConfig::desk(),
            hidden: None,
            context_input: ContextInput::Separate,
            ga: GaConfig::default(),
            holdout_fraction: 0.2,
            split_seed: 0,
            workers: 0,
        }
    }
}

impl PipelineConfig {
    /// Checks every stage's preconditions up front, before any work runs.
    pub fn validate(&self) -> Result<()> {
        if self.slic.target_count == 0 {
            return Err(Error::invalid("target_count must be at least 1"));
        }
        if self.slic.iterations == 0 {
            return Err(Error::invalid("iterations must be at least 1"));
        }
        if !(self.slic.compactness > 0.0) {
            return Err(Error::invalid("compactness must be positive"));
        }
        if self.grid_side == 0 {
            return Err(Error::invalid("grid_side must be at least 1"));
        }
        if self.ocp_alpha < 0.0 {
            return Err(Error::invalid("ocp alpha must be non-negative"));
        }
        if self.visual.epochs == 0 {
            return Err(Error::invalid("classifier epochs must be at least 1"));
        }
        if !(self.visual.learning_rate > 0.0) {
            return Err(Error::invalid("learning rate must be positive"));
        }
        if self.visual.l2 < 0.0 {
            return Err(Error::invalid("l2 penalty must be non-negative"));
        }
        if self.hidden == Some(0) {
            return Err(Error::invalid("integration hidden size must be at least 1"));
        }
        if !(self.holdout_fraction > 0.0 && self.holdout_fraction < 1.0) {
            return Err(Error::invalid(
                "holdout fraction must be strictly between 0 and 1",
            ));
        }
        self.ga.validate()
    }
}

/// Runs `f` on a dedicated pool of `workers` threads (or the global pool
/// when `workers` is 0). Every parallel stage merges results by index or
/// by commutative integer addition, so the pool size cannot change any
/// output.
pub fn with_pool<R: Send>(workers: usize, f: impl FnOnce() -> R + Send) -> R {
    if workers == 0 {
        f()
    } else {
        rayon::ThreadPoolBuilder::new()
            .num_threads(workers)
            .build()
            .expect("thread pool construction")
            .install(f)
    }
}

/// Per-image segmentation, block assignment, and features.
pub struct ImageAnalysis {
    pub spmap: SuperpixelMap,
    pub blocks: BlockGrid,
    pub features: Vec<Vec<f64>>,
}

/// Segments an image and extracts per-superpixel features.
pub fn analyze_image(
    image: &RasterImage,
    slic: &SlicParams,
    grid_side: usize,
) -> Result<ImageAnalysis> {
    let mut spmap = slic_segment(image, slic)?;
    build_adjacency(&mut spmap);
    let blocks = assign_blocks(&spmap, grid_side)?;
    let features = extract_features(image, &spmap)?;
    Ok(ImageAnalysis {
        spmap,
        blocks,
        features,
    })
}

/// Everything `train_model` produces besides the bundle itself.
pub struct TrainReport {
    pub bundle: ModelBundle,
    pub history: Vec<GenStats>,
    /// Stage name and wall-clock seconds, in execution order.
    pub timings: Vec<(&'static str, f64)>,
    /// Pixel-weighted accuracy of the visual argmax on the GA holdout.
    pub visual_holdout_accuracy: f64,
    pub warnings: Vec<String>,
}

/// Trains the three layers on `ds`:
/// the classifier bank and the OCP tables on the fit portion, then the
/// integration net by GA on the held-out portion's probability triples.
pub fn train_model(ds: &Dataset, cfg: &PipelineConfig) -> Result<TrainReport> {
    cfg.validate()?;
    if ds.items.is_empty() {
        return Err(Error::invalid("training dataset is empty"));
    }
    if ds.class_count == 0 {
        return Err(Error::invalid("dataset has no classes"));
    }
    let m = ds.class_count;
    let n = ds.items.len();
    let (fit_idx, hold_idx) =
        crate::data::split_indices(n, 1.0 - cfg.holdout_fraction, cfg.split_seed);
    if fit_idx.is_empty() || hold_idx.is_empty() {
        return Err(Error::invalid(format!(
            "holdout fraction {} leaves an empty split for {n} images",
            cfg.holdout_fraction
        )));
    }
    let mut fit_idx = fit_idx;
    let mut hold_idx = hold_idx;
    fit_idx.sort_unstable();
    hold_idx.sort_unstable();

    let mut timings = Vec::new();
    let mut warnings = Vec::new();

    with_pool(cfg.workers, || -> Result<TrainReport> {
        // Segment, grid, and featurize every image.
        let t = Instant::now();
        let analyses: Vec<ImageAnalysis> = ds
            .items
            .par_iter()
            .map(|item| analyze_image(&item.image, &cfg.slic, cfg.grid_side))
            .collect::<Result<_>>()?;
        let truths: Vec<Vec<Option<u8>>> = ds
            .items
            .par_iter()
            .zip(&analyses)
            .map(|(item, a)| majority_classes(&a.spmap, &item.labels, m))
            .collect::<Result<_>>()?;
        timings.push(("analyze", t.elapsed().as_secs_f64()));

        // Layer I on the fit images.
        let t = Instant::now();
        let mut fit_features: Vec<Vec<f64>> = Vec::new();
        let mut fit_labels: Vec<u8> = Vec::new();
        for &i in &fit_idx {
            for (f, c) in analyses[i].features.iter().zip(&truths[i]) {
                if let Some(c) = c {
                    fit_features.push(f.clone());
                    fit_labels.push(*c);
                }
            }
        }
        if fit_features.is_empty() {
            return Err(Error::invalid(
                "no labeled superpixels in the fit split (all pixels IGNORE?)",
            ));
        }
        let bank = train_classifier_bank(&fit_features, &fit_labels, m, &cfg.visual)?;
        warnings.extend(bank.warnings.iter().cloned());
        timings.push(("visual-train", t.elapsed().as_secs_f64()));

        // Layer II priors from fit ground truth.
        let t = Instant::now();
        let ocp_items: Vec<OcpTrainItem> = fit_idx
            .iter()
            .map(|&i| OcpTrainItem {
                spmap: &analyses[i].spmap,
                blocks: &analyses[i].blocks,
                classes: &truths[i],
            })
            .collect();
        let ocp = estimate_ocp::<f64>(&ocp_items, m, cfg.grid_side, cfg.ocp_alpha)?;
        timings.push(("ocp", t.elapsed().as_secs_f64()));

        // Probability triples on the holdout images.
        let t = Instant::now();
        let hold_samples: Vec<Vec<FusionSample<f64>>> = hold_idx
            .par_iter()
            .map(|&i| -> Result<Vec<FusionSample<f64>>> {
                let a = &analyses[i];
                let probs: Vec<ClassProbVector<f64>> = a
                    .features
                    .iter()
                    .map(|f| predict_visual(&bank, f))
                    .collect::<Result<_>>()?;
                let predicted: Vec<u8> =
                    probs.iter().map(|p| most_probable_class(p) as u8).collect();
                let mut samples = Vec::new();
                for j in 0..a.spmap.count() {
                    let Some(truth) = truths[i][j] else { continue };
                    let local = local_vote(j, &predicted, &a.spmap, &ocp)?;
                    let global = global_vote(j, &predicted, &a.spmap, &a.blocks, &ocp)?;
                    samples.push(FusionSample {
                        probs: ProbTriple {
                            visual: probs[j].clone(),
                            local,
                            global,
                        },
                        truth,
                        pixel_count: a.spmap.pixel_count(j) as u64,
                    });
                }
                Ok(samples)
            })
            .collect::<Result<_>>()?;
        let samples: Vec<FusionSample<f64>> = hold_samples.into_iter().flatten().collect();
        if samples.is_empty() {
            return Err(Error::invalid(
                "no labeled superpixels in the holdout split (all pixels IGNORE?)",
            ));
        }
        let mut correct = 0u64;
        let mut total = 0u64;
        for s in &samples {
            total += s.pixel_count;
            if s.probs.visual.argmax() == s.truth as usize {
                correct += s.pixel_count;
            }
        }
        let visual_holdout_accuracy = correct as f64 / total as f64;
        timings.push(("votes", t.elapsed().as_secs_f64()));

        // Layer III by GA.
        let t = Instant::now();
        let hidden = cfg.hidden.unwrap_or(2 * m).max(1);
        let (net, history) =
            train_integration(&samples, m, hidden, cfg.context_input, &cfg.ga)?;
        timings.push(("integration", t.elapsed().as_secs_f64()));
        let ga_best = history.last().map(|s| s.best).unwrap_or(0.0);
        if ga_best < visual_holdout_accuracy {
            warnings.push(format!(
                "integration fitness {ga_best:.4} is below the visual-only baseline \
                 {visual_holdout_accuracy:.4}; the fused model may underperform Layer I \
                 (try more generations or a larger population)"
            ));
        }

        let bundle = ModelBundle {
            class_count: m,
            class_names: ds.class_names.clone(),
            palette: derive_palette(m),
            slic: cfg.slic.clone(),
            grid_side: cfg.grid_side,
            bank,
            ocp,
            net,
            provenance: Provenance {
                split_seed: cfg.split_seed,
                visual_seed: cfg.visual.seed,
                ga_seed: cfg.ga.seed,
                dataset_hash: dataset_hash(ds),
                tool: format!("ctxparse {}", env!("CARGO_PKG_VERSION")),
            },
        };
        Ok(TrainReport {
            bundle,
            history,
            timings,
            visual_holdout_accuracy,
            warnings,
        })
    })
}

/// Per-superpixel stage probabilities emitted by `predict --dump-stages`.
#[derive(Debug, Clone, PartialEq)]
pub struct StageDump {
    pub superpixel: usize,
    pub visual: Vec<f64>,
    pub local: Vec<f64>,
    pub global: Vec<f64>,
    pub final_probs: Vec<f64>,
    pub label: u8,
}

/// Renders stage dumps as a structured-text document, one block per
/// superpixel.
pub fn stage_dump_text(dumps: &[StageDump]) -> String {
    let fmt = |v: &[f64]| {
        v.iter()
            .map(|x| x.to_string())
            .collect::<Vec<_>>()
            .join(" ")
    };
    let mut out = String::new();
    for d in dumps {
        out.push_str(&format!("superpixel = {}\n", d.superpixel));
        out.push_str(&format!("p_vis = {}\n", fmt(&d.visual)));
        out.push_str(&format!("v_local = {}\n", fmt(&d.local)));
        out.push_str(&format!("v_global = {}\n", fmt(&d.global)));
        out.push_str(&format!("final = {}\n", fmt(&d.final_probs)));
        out.push_str(&format!("label = {}\n\n", d.label));
    }
    out
}

fn paint_labels(spmap: &SuperpixelMap, labels: &[u8], class_count: usize) -> Result<LabelMap> {
    let per_pixel: Vec<u8> = spmap
        .assignment()
        .iter()
        .map(|&id| labels[id as usize])
        .collect();
    LabelMap::new(spmap.width(), spmap.height(), per_pixel, class_count)
}

/// Runs the full three-layer prediction on one image. Set `dump` to also
/// collect per-superpixel stage probabilities.
pub fn predict_image(
    bundle: &ModelBundle,
    image: &RasterImage,
    dump: bool,
) -> Result<(LabelMap, Option<Vec<StageDump>>)> {
    let a = analyze_image(image, &bundle.slic, bundle.grid_side)?;
    let probs: Vec<ClassProbVector<f64>> = a
        .features
        .iter()
        .map(|f| predict_visual(&bundle.bank, f))
        .collect::<Result<_>>()?;
    let predicted: Vec<u8> = probs.iter().map(|p| most_probable_class(p) as u8).collect();
    let mut triples = Vec::with_capacity(a.spmap.count());
    for j in 0..a.spmap.count() {
        let local = local_vote(j, &predicted, &a.spmap, &bundle.ocp)?;
        let global = global_vote(j, &predicted, &a.spmap, &a.blocks, &bundle.ocp)?;
        triples.push(ProbTriple {
            visual: probs[j].clone(),
            local,
            global,
        });
    }
    let mut labels = Vec::with_capacity(a.spmap.count());
    let mut dumps = dump.then(Vec::new);
    for (j, t) in triples.iter().enumerate() {
        let p = bundle.net.forward(&t.visual, &t.local, &t.global)?;
        let label = p.argmax() as u8;
        labels.push(label);
        if let Some(d) = dumps.as_mut() {
            d.push(StageDump {
                superpixel: j,
                visual: t.visual.as_slice().to_vec(),
                local: t.local.as_slice().to_vec(),
                global: t.global.as_slice().to_vec(),
                final_probs: p.as_slice().to_vec(),
                label,
            });
        }
    }
    let map = paint_labels(&a.spmap, &labels, bundle.class_count)?;
    Ok((map, dumps))
}

/// Layer-I-only prediction (visual argmax per superpixel), the baseline
/// the contextual layers are measured against.
pub fn predict_visual_only(bundle: &ModelBundle, image: &RasterImage) -> Result<LabelMap> {
    let a = analyze_image(image, &bundle.slic, bundle.grid_side)?;
    let labels: Vec<u8> = a
        .features
        .iter()
        .map(|f| predict_visual(&bundle.bank, f).map(|p| most_probable_class(&p) as u8))
        .collect::<Result<_>>()?;
    paint_labels(&a.spmap, &labels, bundle.class_count)
}

/// Colors a label map with the bundle palette.
pub fn colorize(labels: &LabelMap, palette: &[[u8; 3]]) -> Result<RasterImage> {
    let pixels: Vec<[u8; 3]> = labels
        .labels()
        .iter()
        .map(|&l| {
            palette
                .get(l as usize)
                .copied()
                .ok_or_else(|| Error::invalid(format!("label {l} has no palette entry")))
        })
        .collect::<Result<_>>()?;
    RasterImage::new(labels.width(), labels.height(), pixels)
}

/// Metric summary of an evaluation run.
pub struct EvalReport {
    pub confusion: ConfusionMatrix,
    pub pixel_accuracy: f64,
    pub class_accuracy: f64,
    pub mean_iou: f64,
    pub per_class: Vec<Option<f64>>,
}

impl EvalReport {
    fn from_confusion(confusion: ConfusionMatrix) -> Result<Self> {
        Ok(Self {
            pixel_accuracy: confusion.pixel_accuracy()?,
            class_accuracy: confusion.class_accuracy()?,
            mean_iou: confusion.mean_iou()?,
            per_class: confusion.per_class_accuracy(),
            confusion,
        })
    }
}

fn evaluate_with<F>(ds: &Dataset, workers: usize, predict: F) -> Result<EvalReport>
where
    F: Fn(&crate::data::DatasetItem) -> Result<LabelMap> + Sync,
{
    if ds.items.is_empty() {
        return Err(Error::invalid("evaluation dataset is empty"));
    }
    let m = ds.class_count;
    let confusion = with_pool(workers, || -> Result<ConfusionMatrix> {
        let per_image: Vec<ConfusionMatrix> = ds
            .items
            .par_iter()
            .map(|item| -> Result<ConfusionMatrix> {
                let pred = predict(item)?;
                let mut cm = ConfusionMatrix::new(m)?;
                cm.accumulate(&pred, &item.labels)?;
                Ok(cm)
            })
            .collect::<Result<_>>()?;
        let mut total = ConfusionMatrix::new(m)?;
        for cm in &per_image {
            total.merge(cm)?;
        }
        Ok(total)
    })?;
    EvalReport::from_confusion(confusion)
}

/// Full-pipeline evaluation of `bundle` against `ds`'s ground truth.
pub fn evaluate_bundle(bundle: &ModelBundle, ds: &Dataset, workers: usize) -> Result<EvalReport> {
    if bundle.class_count != ds.class_count {
        return Err(Error::invalid(format!(
            "bundle has {} classes but dataset has {}",
            bundle.class_count, ds.class_count
        )));
    }
    evaluate_with(ds, workers, |item| {
        predict_image(bundle, &item.image, false).map(|(m, _)| m)
    })
}

/// Visual-only evaluation (Layer I baseline).
pub fn evaluate_visual_only(
    bundle: &ModelBundle,
    ds: &Dataset,
    workers: usize,
) -> Result<EvalReport> {
    evaluate_with(ds, workers, |item| predict_visual_only(bundle, &item.image))
}

/// Debug mode: scores the ground truth against itself (all metrics 1.0 on
/// any dataset with at least one labeled pixel).
pub fn evaluate_identity(ds: &Dataset, workers: usize) -> Result<EvalReport> {
    evaluate_with(ds, workers, |item| Ok(item.labels.clone()))
}

/// Machine-readable evaluation results (flat key = value text).
pub fn eval_report_text(report: &EvalReport, class_names: &[String]) -> String {
    let mut out = String::new();
    out.push_str(&format!("pixel_accuracy = {}\n", report.pixel_accuracy));
    out.push_str(&format!("class_accuracy = {}\n", report.class_accuracy));
    out.push_str(&format!("mean_iou = {}\n", report.mean_iou));
    for (name, acc) in class_names.iter().zip(&report.per_class) {
        match acc {
            Some(a) => out.push_str(&format!("class.{name}.accuracy = {a}\n")),
            None => out.push_str(&format!("class.{name}.accuracy = absent\n")),
        }
    }
    out
}

/// Human-readable per-class table: a header row of class names and one
/// row of percentages following the global and average columns.
pub fn eval_report_table(report: &EvalReport, class_names: &[String]) -> String {
    let mut header = format!("{:<10} {:>7} {:>7}", "", "Global", "Avg.");
    let mut row = format!(
        "{:<10} {:>7.1} {:>7.1}",
        "accuracy",
        report.pixel_accuracy * 100.0,
        report.class_accuracy * 100.0
    );
    for (name, acc) in class_names.iter().zip(&report.per_class) {
        let short: String = name.chars().take(7).collect();
        header.push_str(&format!(" {short:>7}"));
        match acc {
            Some(a) => row.push_str(&format!(" {:>7.1}", a * 100.0)),
            None => row.push_str(&format!(" {:>7}", "-")),
        }
    }
    format!("{header}\n{row}\nmean IoU: {:.1}\n", report.mean_iou * 100.0)
}
