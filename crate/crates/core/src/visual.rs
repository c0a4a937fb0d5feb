//! Visual prediction layer: per-superpixel feature extraction and a bank
//! of one-vs-all binary classifiers producing class-probability vectors.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::image::RasterImage;
use crate::prob::ClassProbVector;
use crate::scalar::{pairwise_sum, sigmoid, Real};
use crate::superpixel::SuperpixelMap;

/// Fixed visual descriptor length: mean RGB (3) + std RGB (3) + normalized
/// centroid (2) + relative size (1) + 8-bin hue histogram + 8-bin gradient
/// orientation histogram.
pub const FEATURE_DIM: usize = 25;

/// Extracts one [`FEATURE_DIM`]-long descriptor per superpixel.
///
/// Color statistics are scaled to `[0, 1]`, the centroid is normalized by
/// the image extent, the hue histogram is normalized by pixel count, and
/// the gradient histogram is normalized by total Sobel magnitude (all-zero
/// on constant regions).
pub fn extract_features<T: Real>(
    image: &RasterImage,
    spmap: &SuperpixelMap,
) -> Result<Vec<Vec<T>>> {
    if image.width() != spmap.width() || image.height() != spmap.height() {
        return Err(Error::invalid(format!(
            "image is {}x{} but superpixel map is {}x{}",
            image.width(),
            image.height(),
            spmap.width(),
            spmap.height()
        )));
    }
    let (w, h) = (image.width() as usize, image.height() as usize);
    let n = spmap.count();

    let mut sum = vec![[0u64; 3]; n];
    let mut sumsq = vec![[0u64; 3]; n];
    let mut hue = vec![[0u64; 8]; n];
    let mut grad = vec![[0f64; 8]; n];
    let mut grad_total = vec![0f64; n];

    let gray: Vec<f64> = image
        .pixels()
        .iter()
        .map(|p| 0.299 * p[0] as f64 + 0.587 * p[1] as f64 + 0.114 * p[2] as f64)
        .collect();
    let gray_at = |x: isize, y: isize| -> f64 {
        let x = x.clamp(0, w as isize - 1) as usize;
        let y = y.clamp(0, h as isize - 1) as usize;
        gray[y * w + x]
    };

    for y in 0..h {
        for x in 0..w {
            let id = spmap.id_at(x as u32, y as u32) as usize;
            let p = image.get(x as u32, y as u32);
            for c in 0..3 {
                sum[id][c] += p[c] as u64;
                sumsq[id][c] += (p[c] as u64) * (p[c] as u64);
            }
            hue[id][hue_bin(p)] += 1;

            let (xi, yi) = (x as isize, y as isize);
            let gx = gray_at(xi + 1, yi - 1) + 2.0 * gray_at(xi + 1, yi) + gray_at(xi + 1, yi + 1)
                - gray_at(xi - 1, yi - 1)
                - 2.0 * gray_at(xi - 1, yi)
                - gray_at(xi - 1, yi + 1);
            let gy = gray_at(xi - 1, yi + 1) + 2.0 * gray_at(xi, yi + 1) + gray_at(xi + 1, yi + 1)
                - gray_at(xi - 1, yi - 1)
                - 2.0 * gray_at(xi, yi - 1)
                - gray_at(xi + 1, yi - 1);
            let mag = (gx * gx + gy * gy).sqrt();
            if mag > 0.0 {
                // Unsigned orientation in [0, pi).
                let mut theta = gy.atan2(gx);
                if theta < 0.0 {
                    theta += std::f64::consts::PI;
                }
                if theta >= std::f64::consts::PI {
                    theta = 0.0;
                }
                let bin = ((theta / std::f64::consts::PI * 8.0) as usize).min(7);
                grad[id][bin] += mag;
                grad_total[id] += mag;
            }
        }
    }

    let total_px = (w * h) as f64;
    let mut out = Vec::with_capacity(n);
    for id in 0..n {
        let npx = spmap.pixel_count(id) as f64;
        let mut f = Vec::with_capacity(FEATURE_DIM);
        for c in 0..3 {
            f.push(T::of(sum[id][c] as f64 / npx / 255.0));
        }
        for c in 0..3 {
            let mean = sum[id][c] as f64 / npx;
            let var = (sumsq[id][c] as f64 / npx - mean * mean).max(0.0);
            f.push(T::of(var.sqrt() / 255.0));
        }
        let (cx, cy) = spmap.centroid(id);
        f.push(T::of(if w > 1 { cx / (w as f64 - 1.0) } else { 0.5 }));
        f.push(T::of(if h > 1 { cy / (h as f64 - 1.0) } else { 0.5 }));
        f.push(T::of(npx / total_px));
        for b in 0..8 {
            f.push(T::of(hue[id][b] as f64 / npx));
        }
        for b in 0..8 {
            f.push(T::of(if grad_total[id] > 0.0 {
                grad[id][b] / grad_total[id]
            } else {
                0.0
            }));
        }
        debug_assert_eq!(f.len(), FEATURE_DIM);
        out.push(f);
    }
    Ok(out)
}

/// HSV hue bucketed into 8 bins of 45 degrees; gray pixels (undefined hue)
/// go to bin 0.
fn hue_bin(p: [u8; 3]) -> usize {
    let max = p[0].max(p[1]).max(p[2]);
    let min = p[0].min(p[1]).min(p[2]);
    if max == min {
        return 0;
    }
    let (r, g, b) = (p[0] as f64, p[1] as f64, p[2] as f64);
    let d = (max - min) as f64;
    let mut h = if max == p[0] {
        60.0 * ((g - b) / d)
    } else if max == p[1] {
        60.0 * ((b - r) / d) + 120.0
    } else {
        60.0 * ((r - g) / d) + 240.0
    };
    if h < 0.0 {
        h += 360.0;
    }
    ((h / 45.0) as usize).min(7)
}

/// Which function family each one-vs-all unit uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ClassifierKind {
    /// Logistic regression: sigmoid of one affine map (the default).
    Logistic,
    /// One hidden layer of the given width, sigmoid activations.
    Mlp { hidden: usize },
}

/// Training hyperparameters for the classifier bank.
#[derive(Debug, Clone, PartialEq)]
pub struct VisualTrainConfig {
    pub kind: ClassifierKind,
    pub epochs: usize,
    pub learning_rate: f64,
    /// Optional schedule: multiply the rate by `factor` every `every` epochs.
    pub decay: Option<(f64, usize)>,
    pub l2: f64,
    pub seed: u64,
}

impl VisualTrainConfig {
    /// Stable defaults for small logistic units.
    pub fn desk() -> Self {
        Self {
            kind: ClassifierKind::Logistic,
            epochs: 500,
            learning_rate: 1e-2,
            decay: None,
            l2: 1e-4,
            seed: 0,
        }
    }

    /// Alternative preset: low initial rate with 0.1x decay every 30 epochs.
    pub fn slow_decay() -> Self {
        Self {
            kind: ClassifierKind::Logistic,
            epochs: 90,
            learning_rate: 1e-4,
            decay: Some((0.1, 30)),
            l2: 1e-4,
            seed: 0,
        }
    }
}

impl Default for VisualTrainConfig {
    fn default() -> Self {
        Self::desk()
    }
}

/// Parameters of one binary one-vs-all unit.
#[derive(Debug, Clone, PartialEq)]
pub enum UnitParams<T: Real> {
    Logistic {
        weights: Vec<T>,
        bias: T,
    },
    Mlp {
        /// Input-to-hidden weights, row-major over input dims.
        w1: Vec<T>,
        b1: Vec<T>,
        w2: Vec<T>,
        b2: T,
    },
}

impl<T: Real> UnitParams<T> {
    fn score(&self, feats: &[T]) -> T {
        match self {
            UnitParams::Logistic { weights, bias } => {
                let mut z = *bias;
                for (w, x) in weights.iter().zip(feats) {
                    z = z + *w * *x;
                }
                sigmoid(z)
            }
            UnitParams::Mlp { w1, b1, w2, b2 } => {
                let hsize = b1.len();
                let mut z = *b2;
                for (j, (&b1j, &w2j)) in b1.iter().zip(w2).enumerate() {
                    let mut a = b1j;
                    for (d, &x) in feats.iter().enumerate() {
                        a = a + w1[d * hsize + j] * x;
                    }
                    z = z + w2j * sigmoid(a);
                }
                sigmoid(z)
            }
        }
    }
}

/// M trained one-vs-all units plus the configuration they were trained
/// with. Serialized inside the model bundle.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassifierBank<T: Real> {
    class_count: usize,
    dim: usize,
    units: Vec<UnitParams<T>>,
    pub config: VisualTrainConfig,
    pub warnings: Vec<String>,
}

impl<T: Real> ClassifierBank<T> {
    pub fn from_parts(
        dim: usize,
        units: Vec<UnitParams<T>>,
        config: VisualTrainConfig,
        warnings: Vec<String>,
    ) -> Result<Self> {
        if units.is_empty() {
            return Err(Error::invalid("classifier bank needs at least one class"));
        }
        for u in &units {
            let ok = match u {
                UnitParams::Logistic { weights, bias } => {
                    weights.len() == dim
                        && weights.iter().all(|w| w.is_finite())
                        && bias.is_finite()
                }
                UnitParams::Mlp { w1, b1, w2, b2 } => {
                    w1.len() == dim * b1.len()
                        && w2.len() == b1.len()
                        && w1.iter().chain(b1).chain(w2).all(|w| w.is_finite())
                        && b2.is_finite()
                }
            };
            if !ok {
                return Err(Error::invalid("classifier unit has bad shape or non-finite weights"));
            }
        }
        Ok(Self {
            class_count: units.len(),
            dim,
            units,
            config,
            warnings,
        })
    }

    pub fn class_count(&self) -> usize {
        self.class_count
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn units(&self) -> &[UnitParams<T>] {
        &self.units
    }
}

/// Bias magnitude of a constant-negative unit (a class with no positive
/// training samples).
const NEGATIVE_BIAS: f64 = -20.0;

/// Trains the bank of `class_count` one-vs-all units by full-batch gradient
/// descent with per-class balancing: the positive and negative sides each
/// contribute total weight 1/2 regardless of their sample counts.
pub fn train_classifier_bank<T: Real>(
    features: &[Vec<T>],
    labels: &[u8],
    class_count: usize,
    cfg: &VisualTrainConfig,
) -> Result<ClassifierBank<T>> {
    if features.is_empty() {
        return Err(Error::invalid("empty training set"));
    }
    if features.len() != labels.len() {
        return Err(Error::invalid("features and labels disagree in length"));
    }
    if class_count == 0 {
        return Err(Error::invalid("class count must be at least 1"));
    }
    let dim = features[0].len();
    if features.iter().any(|f| f.len() != dim) {
        return Err(Error::invalid("inconsistent feature dimensions"));
    }
    for &l in labels {
        if (l as usize) >= class_count {
            return Err(Error::invalid(format!(
                "label {l} out of range for {class_count} classes"
            )));
        }
    }

    let results: Vec<(UnitParams<T>, Option<String>)> = (0..class_count)
        .into_par_iter()
        .map(|class| {
            let targets: Vec<bool> = labels.iter().map(|&l| l as usize == class).collect();
            let n_pos = targets.iter().filter(|&&t| t).count();
            if n_pos == 0 {
                let unit = UnitParams::Logistic {
                    weights: vec![T::zero(); dim],
                    bias: T::of(NEGATIVE_BIAS),
                };
                let warn = format!(
                    "class {class} has no positive samples; trained as constant-negative"
                );
                return (unit, Some(warn));
            }
            let unit = match cfg.kind {
                ClassifierKind::Logistic => train_logistic(features, &targets, dim, cfg),
                ClassifierKind::Mlp { hidden } => train_mlp(features, &targets, dim, hidden, cfg),
            };
            (unit, None)
        })
        .collect();

    let mut units = Vec::with_capacity(class_count);
    let mut warnings = Vec::new();
    for (unit, warn) in results {
        units.push(unit);
        warnings.extend(warn);
    }
    ClassifierBank::from_parts(dim, units, cfg.clone(), warnings)
}

fn lr_at(cfg: &VisualTrainConfig, epoch: usize) -> f64 {
    match cfg.decay {
        Some((factor, every)) if every > 0 => {
            cfg.learning_rate * factor.powi((epoch / every) as i32)
        }
        _ => cfg.learning_rate,
    }
}

/// Balanced class weights as exact powers-of-two-friendly scalings:
/// each side of the split sums to 1/2.
fn side_indices(targets: &[bool]) -> (Vec<usize>, Vec<usize>) {
    let mut pos = Vec::new();
    let mut neg = Vec::new();
    for (i, &t) in targets.iter().enumerate() {
        if t {
            pos.push(i);
        } else {
            neg.push(i);
        }
    }
    (pos, neg)
}

fn train_logistic<T: Real>(
    features: &[Vec<T>],
    targets: &[bool],
    dim: usize,
    cfg: &VisualTrainConfig,
) -> UnitParams<T> {
    let (pos, neg) = side_indices(targets);
    let w_pos = T::of(if pos.is_empty() { 0.0 } else { 0.5 / pos.len() as f64 });
    let w_neg = T::of(if neg.is_empty() { 0.0 } else { 0.5 / neg.len() as f64 });
    let l2 = T::of(cfg.l2);
    let mut weights = vec![T::zero(); dim];
    let mut bias = T::zero();

    let n = features.len();
    let mut residual = vec![T::zero(); n];
    let mut scratch_pos = vec![T::zero(); pos.len()];
    let mut scratch_neg = vec![T::zero(); neg.len()];

    for epoch in 0..cfg.epochs {
        let lr = T::of(lr_at(cfg, epoch));
        for (i, f) in features.iter().enumerate() {
            let mut z = bias;
            for (w, x) in weights.iter().zip(f) {
                z = z + *w * *x;
            }
            let y = if targets[i] { T::one() } else { T::zero() };
            residual[i] = sigmoid(z) - y;
        }
        // Per-side pairwise sums keep gradient accumulation exactly
        // scale-invariant under duplicated training sets.
        let mut side_grad = |dimsel: Option<usize>| -> T {
            for (slot, &i) in scratch_pos.iter_mut().zip(&pos) {
                *slot = match dimsel {
                    Some(d) => residual[i] * features[i][d],
                    None => residual[i],
                };
            }
            for (slot, &i) in scratch_neg.iter_mut().zip(&neg) {
                *slot = match dimsel {
                    Some(d) => residual[i] * features[i][d],
                    None => residual[i],
                };
            }
            w_pos * pairwise_sum(&scratch_pos) + w_neg * pairwise_sum(&scratch_neg)
        };
        for d in 0..dim {
            let g = side_grad(Some(d)) + l2 * weights[d];
            weights[d] = weights[d] - lr * g;
        }
        bias = bias - lr * side_grad(None);
    }
    UnitParams::Logistic { weights, bias }
}

fn train_mlp<T: Real>(
    features: &[Vec<T>],
    targets: &[bool],
    dim: usize,
    hidden: usize,
    cfg: &VisualTrainConfig,
) -> UnitParams<T> {
    let hidden = hidden.max(1);
    let (pos, neg) = side_indices(targets);
    let w_pos = T::of(if pos.is_empty() { 0.0 } else { 0.5 / pos.len() as f64 });
    let w_neg = T::of(if neg.is_empty() { 0.0 } else { 0.5 / neg.len() as f64 });
    let l2 = T::of(cfg.l2);

    // Same seed for every class so relabeling permutes the bank unchanged.
    let mut rng = ChaCha20Rng::seed_from_u64(cfg.seed);
    let scale1 = 1.0 / (dim as f64).sqrt();
    let scale2 = 1.0 / (hidden as f64).sqrt();
    let mut w1: Vec<T> = (0..dim * hidden)
        .map(|_| T::of((rng.random::<f64>() * 2.0 - 1.0) * scale1))
        .collect();
    let mut b1 = vec![T::zero(); hidden];
    let mut w2: Vec<T> = (0..hidden)
        .map(|_| T::of((rng.random::<f64>() * 2.0 - 1.0) * scale2))
        .collect();
    let mut b2 = T::zero();

    let n = features.len();
    let mut acts = vec![T::zero(); n * hidden];
    let mut delta_out = vec![T::zero(); n];
    let mut scratch_pos = vec![T::zero(); pos.len()];
    let mut scratch_neg = vec![T::zero(); neg.len()];

    for epoch in 0..cfg.epochs {
        let lr = T::of(lr_at(cfg, epoch));
        for (i, f) in features.iter().enumerate() {
            let mut z = b2;
            for j in 0..hidden {
                let mut a = b1[j];
                for (d, &x) in f.iter().enumerate() {
                    a = a + w1[d * hidden + j] * x;
                }
                let hj = sigmoid(a);
                acts[i * hidden + j] = hj;
                z = z + w2[j] * hj;
            }
            let y = if targets[i] { T::one() } else { T::zero() };
            delta_out[i] = sigmoid(z) - y;
        }
        let side_grad = |f: &mut dyn FnMut(usize) -> T,
                         scratch_pos: &mut [T],
                         scratch_neg: &mut [T]| {
            for (slot, &i) in scratch_pos.iter_mut().zip(&pos) {
                *slot = f(i);
            }
            for (slot, &i) in scratch_neg.iter_mut().zip(&neg) {
                *slot = f(i);
            }
            w_pos * pairwise_sum(scratch_pos) + w_neg * pairwise_sum(scratch_neg)
        };
        // Output layer.
        let mut new_w2 = w2.clone();
        for j in 0..hidden {
            let g = side_grad(
                &mut |i| delta_out[i] * acts[i * hidden + j],
                &mut scratch_pos,
                &mut scratch_neg,
            ) + l2 * w2[j];
            new_w2[j] = w2[j] - lr * g;
        }
        let gb2 = side_grad(&mut |i| delta_out[i], &mut scratch_pos, &mut scratch_neg);
        // Hidden layer (using pre-update output weights).
        for j in 0..hidden {
            let hterm = |i: usize, acts: &[T]| {
                let hj = acts[i * hidden + j];
                delta_out[i] * w2[j] * hj * (T::one() - hj)
            };
            for d in 0..dim {
                let g = side_grad(
                    &mut |i| hterm(i, &acts) * features[i][d],
                    &mut scratch_pos,
                    &mut scratch_neg,
                ) + l2 * w1[d * hidden + j];
                w1[d * hidden + j] = w1[d * hidden + j] - lr * g;
            }
            let g = side_grad(&mut |i| hterm(i, &acts), &mut scratch_pos, &mut scratch_neg);
            b1[j] = b1[j] - lr * g;
        }
        w2 = new_w2;
        b2 = b2 - lr * gb2;
    }
    UnitParams::Mlp { w1, b1, w2, b2 }
}

/// Scores `feats` against every unit and L1-normalizes the sigmoid outputs
/// into a probability vector.
pub fn predict_visual<T: Real>(
    bank: &ClassifierBank<T>,
    feats: &[T],
) -> Result<ClassProbVector<T>> {
    if feats.len() != bank.dim {
        return Err(Error::invalid(format!(
            "feature vector has length {}, bank expects {}",
            feats.len(),
            bank.dim
        )));
    }
    let scores: Vec<T> = bank.units.iter().map(|u| u.score(feats)).collect();
    ClassProbVector::from_scores(&scores)
}

/// The class with maximum probability; ties go to the lowest index.
pub fn most_probable_class<T: Real>(p: &ClassProbVector<T>) -> usize {
    p.argmax()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::superpixel::{build_adjacency, slic_segment, SlicParams};

    fn one_superpixel_map(w: u32, h: u32) -> SuperpixelMap {
        SuperpixelMap::from_assignment(w, h, vec![0u32; (w * h) as usize]).unwrap()
    }

    #[test]
    fn constant_gray_has_zero_variance_and_gradient() {
        let img = RasterImage::from_fn(9, 7, |_, _| [77, 77, 77]).unwrap();
        let sp = one_superpixel_map(9, 7);
        let feats = extract_features::<f64>(&img, &sp).unwrap();
        assert_eq!(feats.len(), 1);
        let f = &feats[0];
        assert_eq!(f.len(), FEATURE_DIM);
        // std RGB
        assert_eq!(&f[3..6], &[0.0, 0.0, 0.0]);
        // gradient histogram
        assert_eq!(&f[17..25], &[0.0; 8]);
    }

    #[test]
    fn whole_image_superpixel_centroid_and_size() {
        let img = RasterImage::from_fn(10, 6, |x, y| [x as u8, y as u8, 0]).unwrap();
        let sp = one_superpixel_map(10, 6);
        let f = &extract_features::<f64>(&img, &sp).unwrap()[0];
        assert!((f[6] - 0.5).abs() < 1.0 / 10.0, "centroid x {}", f[6]);
        assert!((f[7] - 0.5).abs() < 1.0 / 6.0, "centroid y {}", f[7]);
        assert_eq!(f[8], 1.0);
    }

    #[test]
    fn red_and_blue_superpixels_differ_in_channel_means() {
        let img = RasterImage::from_fn(8, 4, |x, _| {
            if x < 4 {
                [255, 0, 0]
            } else {
                [0, 0, 255]
            }
        })
        .unwrap();
        let mut sp = slic_segment(
            &img,
            &SlicParams {
                target_count: 2,
                ..SlicParams::default()
            },
        )
        .unwrap();
        build_adjacency(&mut sp);
        assert_eq!(sp.count(), 2);
        let feats = extract_features::<f64>(&img, &sp).unwrap();
        // Direct pixel summation oracle: pure sides have mean 1.0 in their
        // channel and 0.0 in the other's.
        let red = sp.id_at(0, 0) as usize;
        let blue = sp.id_at(7, 0) as usize;
        assert_eq!(feats[red][0], 1.0);
        assert_eq!(feats[red][2], 0.0);
        assert_eq!(feats[blue][0], 0.0);
        assert_eq!(feats[blue][2], 1.0);
    }

    #[test]
    fn feature_dim_mismatch_is_an_error() {
        let img = RasterImage::from_fn(4, 4, |_, _| [0, 0, 0]).unwrap();
        let sp = one_superpixel_map(5, 4);
        assert!(extract_features::<f64>(&img, &sp).is_err());
    }

    /// Simple perceptron oracle: returns true if it finds a separating
    /// hyperplane, proving the data is linearly separable.
    fn perceptron_separable(xs: &[Vec<f64>], ys: &[bool], epochs: usize) -> bool {
        let dim = xs[0].len();
        let mut w = vec![0.0; dim];
        let mut b = 0.0;
        for _ in 0..epochs {
            let mut mistakes = 0;
            for (x, &y) in xs.iter().zip(ys) {
                let z: f64 = w.iter().zip(x).map(|(w, x)| w * x).sum::<f64>() + b;
                let pred = z > 0.0;
                if pred != y {
                    mistakes += 1;
                    let s = if y { 1.0 } else { -1.0 };
                    for (wd, xd) in w.iter_mut().zip(x) {
                        *wd += s * xd;
                    }
                    b += s;
                }
            }
            if mistakes == 0 {
                return true;
            }
        }
        false
    }

    fn blob_data() -> (Vec<Vec<f64>>, Vec<u8>) {
        // Two 2-D blobs of 100 points each, centers (0.2, 0.2) and (0.8, 0.8).
        let mut rng = ChaCha20Rng::seed_from_u64(42);
        let mut xs = Vec::new();
        let mut ys = Vec::new();
        for class in 0..2u8 {
            let (cx, cy) = if class == 0 { (0.2, 0.2) } else { (0.8, 0.8) };
            for _ in 0..100 {
                let dx = (rng.random::<f64>() - 0.5) * 0.3;
                let dy = (rng.random::<f64>() - 0.5) * 0.3;
                xs.push(vec![cx + dx, cy + dy]);
                ys.push(class);
            }
        }
        (xs, ys)
    }

    #[test]
    fn separable_blobs_reach_full_training_accuracy() {
        let (xs, ys) = blob_data();
        let sep = perceptron_separable(&xs, &ys.iter().map(|&y| y == 1).collect::<Vec<_>>(), 200);
        assert!(sep, "oracle says the blobs are not separable; fix the data");

        let cfg = VisualTrainConfig {
            epochs: 1500,
            learning_rate: 0.5,
            l2: 1e-6,
            ..VisualTrainConfig::desk()
        };
        let bank = train_classifier_bank(&xs, &ys, 2, &cfg).unwrap();
        let correct = xs
            .iter()
            .zip(&ys)
            .filter(|(x, &y)| {
                let p = predict_visual(&bank, x).unwrap();
                most_probable_class(&p) == y as usize
            })
            .count();
        assert_eq!(correct, xs.len());
    }

    #[test]
    fn single_class_bank_returns_certainty() {
        let xs = vec![vec![0.1, 0.2], vec![0.3, 0.4]];
        let ys = vec![0u8, 0];
        let bank = train_classifier_bank(&xs, &ys, 1, &VisualTrainConfig::desk()).unwrap();
        let p = predict_visual(&bank, &[0.5, 0.5]).unwrap();
        assert_eq!(p.as_slice(), &[1.0]);
    }

    #[test]
    fn duplicated_training_set_yields_identical_weights() {
        let (xs, ys) = blob_data();
        let mut xs2 = xs.clone();
        xs2.extend_from_slice(&xs);
        let mut ys2 = ys.clone();
        ys2.extend_from_slice(&ys);
        let cfg = VisualTrainConfig::desk();
        let a = train_classifier_bank(&xs, &ys, 2, &cfg).unwrap();
        let b = train_classifier_bank(&xs2, &ys2, 2, &cfg).unwrap();
        assert_eq!(a.units(), b.units());
    }

    #[test]
    fn zero_positive_class_is_constant_negative_with_warning() {
        let xs = vec![vec![0.0, 1.0], vec![1.0, 0.0]];
        let ys = vec![0u8, 0];
        let bank = train_classifier_bank(&xs, &ys, 2, &VisualTrainConfig::desk()).unwrap();
        assert_eq!(bank.warnings.len(), 1);
        assert!(bank.warnings[0].contains("class 1"));
        let p = predict_visual(&bank, &[0.5, 0.5]).unwrap();
        assert!(p.as_slice()[1] < 0.01);
    }

    #[test]
    fn empty_training_set_is_invalid() {
        let r = train_classifier_bank::<f64>(&[], &[], 2, &VisualTrainConfig::desk());
        assert!(r.is_err());
    }

    #[test]
    fn zero_bank_predicts_uniform() {
        let units = (0..4)
            .map(|_| UnitParams::Logistic {
                weights: vec![0.0f64; 3],
                bias: 0.0,
            })
            .collect();
        let bank =
            ClassifierBank::from_parts(3, units, VisualTrainConfig::desk(), vec![]).unwrap();
        let p = predict_visual(&bank, &[0.3, 0.1, 0.9]).unwrap();
        assert_eq!(p.as_slice(), &[0.25; 4]);
    }

    #[test]
    fn dominant_bias_dominates_the_normalized_vector() {
        // Hand oracle: sigma(10) = 0.9999546, sigma(-10) = 4.54e-5, so class
        // 0 holds 0.9999546 / (0.9999546 + 2 * 4.54e-5) > 0.99.
        let mk = |b: f64| UnitParams::Logistic {
            weights: vec![0.0f64; 2],
            bias: b,
        };
        let bank = ClassifierBank::from_parts(
            2,
            vec![mk(10.0), mk(-10.0), mk(-10.0)],
            VisualTrainConfig::desk(),
            vec![],
        )
        .unwrap();
        let p = predict_visual(&bank, &[0.0, 0.0]).unwrap();
        assert!(p.as_slice()[0] > 0.99, "got {:?}", p.as_slice());
    }

    #[test]
    fn prediction_length_mismatch_is_an_error() {
        let bank = ClassifierBank::from_parts(
            2,
            vec![UnitParams::Logistic {
                weights: vec![0.0f64; 2],
                bias: 0.0,
            }],
            VisualTrainConfig::desk(),
            vec![],
        )
        .unwrap();
        assert!(predict_visual(&bank, &[0.0]).is_err());
    }

    #[test]
    fn increasing_bias_never_decreases_normalized_probability() {
        let mut rng = ChaCha20Rng::seed_from_u64(7);
        for _ in 0..50 {
            let m = 2 + (rng.random::<u32>() % 5) as usize;
            let dim = 3;
            let units: Vec<UnitParams<f64>> = (0..m)
                .map(|_| UnitParams::Logistic {
                    weights: (0..dim).map(|_| rng.random::<f64>() * 2.0 - 1.0).collect(),
                    bias: rng.random::<f64>() * 2.0 - 1.0,
                })
                .collect();
            let feats: Vec<f64> = (0..dim).map(|_| rng.random::<f64>()).collect();
            let target = (rng.random::<u32>() as usize) % m;
            let bank =
                ClassifierBank::from_parts(dim, units.clone(), VisualTrainConfig::desk(), vec![])
                    .unwrap();
            let before = predict_visual(&bank, &feats).unwrap().as_slice()[target];
            let mut bumped = units;
            if let UnitParams::Logistic { bias, .. } = &mut bumped[target] {
                *bias += 0.5;
            }
            let bank2 =
                ClassifierBank::from_parts(dim, bumped, VisualTrainConfig::desk(), vec![]).unwrap();
            let after = predict_visual(&bank2, &feats).unwrap().as_slice()[target];
            assert!(after >= before);
        }
    }

    #[test]
    fn relabeling_classes_permutes_the_bank() {
        let (xs, ys) = blob_data();
        let cfg = VisualTrainConfig::desk();
        let bank = train_classifier_bank(&xs, &ys, 2, &cfg).unwrap();
        let swapped: Vec<u8> = ys.iter().map(|&y| 1 - y).collect();
        let bank2 = train_classifier_bank(&xs, &swapped, 2, &cfg).unwrap();
        assert_eq!(bank.units()[0], bank2.units()[1]);
        assert_eq!(bank.units()[1], bank2.units()[0]);
    }

    #[test]
    fn mlp_variant_trains_and_separates() {
        let (xs, ys) = blob_data();
        let cfg = VisualTrainConfig {
            kind: ClassifierKind::Mlp { hidden: 4 },
            epochs: 300,
            learning_rate: 0.5,
            decay: None,
            l2: 1e-5,
            seed: 3,
        };
        let bank = train_classifier_bank(&xs, &ys, 2, &cfg).unwrap();
        let correct = xs
            .iter()
            .zip(&ys)
            .filter(|(x, &y)| {
                most_probable_class(&predict_visual(&bank, x).unwrap()) == y as usize
            })
            .count();
        assert!(correct >= 195, "mlp separated only {correct}/200");
    }

    #[test]
    fn f32_instantiation_works() {
        let xs: Vec<Vec<f32>> = vec![vec![0.1, 0.9], vec![0.9, 0.1]];
        let ys = vec![0u8, 1];
        let bank = train_classifier_bank(&xs, &ys, 2, &VisualTrainConfig::desk()).unwrap();
        let p = predict_visual(&bank, &[0.1f32, 0.9]).unwrap();
        assert_eq!(most_probable_class(&p), 0);
    }
}
