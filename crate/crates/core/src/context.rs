//! Contextual voting layer: object co-occurrence priors estimated from
//! training label maps, and the local/global votes they induce.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::image::{LabelMap, IGNORE};
use crate::prob::ClassProbVector;
use crate::scalar::Real;
use crate::superpixel::{BlockGrid, SuperpixelMap};

/// Co-occurrence prior tables.
///
/// `local` is an M x M row-stochastic matrix: row `a` is the smoothed
/// distribution of a neighbor's class given that a superpixel has class
/// `a`. `global` conditions on spatial blocks as well: the slice at
/// (source block, source class, target block) is the smoothed distribution
/// over the target superpixel's class. `block_prior` is the per-block
/// class distribution, kept for diagnostics and the `inspect-ocp` command.
#[derive(Debug, Clone, PartialEq)]
pub struct OcpModel<T: Real> {
    class_count: usize,
    grid_side: usize,
    smoothing_alpha: f64,
    local: Vec<T>,
    global: Vec<T>,
    block_prior: Vec<T>,
}

impl<T: Real> OcpModel<T> {
    pub fn from_parts(
        class_count: usize,
        grid_side: usize,
        smoothing_alpha: f64,
        local: Vec<T>,
        global: Vec<T>,
        block_prior: Vec<T>,
    ) -> Result<Self> {
        let m = class_count;
        let b = grid_side * grid_side;
        if m == 0 || grid_side == 0 {
            return Err(Error::invalid("class count and grid side must be at least 1"));
        }
        if local.len() != m * m || global.len() != (b * m) * (b * m) || block_prior.len() != b * m {
            return Err(Error::invalid("co-occurrence table shapes are inconsistent"));
        }
        let model = Self {
            class_count,
            grid_side,
            smoothing_alpha,
            local,
            global,
            block_prior,
        };
        model.check_stochastic()?;
        Ok(model)
    }

    fn check_stochastic(&self) -> Result<()> {
        let m = self.class_count;
        let check_rows = |table: &[T], what: &str| -> Result<()> {
            for (r, row) in table.chunks(m).enumerate() {
                let mut sum = 0.0;
                for v in row {
                    let v = v.as_f64();
                    if !v.is_finite() || v < 0.0 {
                        return Err(Error::Contract(format!("{what} row {r} has entry {v}")));
                    }
                    sum += v;
                }
                if (sum - 1.0).abs() > 1e-9 {
                    return Err(Error::Contract(format!(
                        "{what} row {r} sums to {sum}, want 1 within 1e-9"
                    )));
                }
            }
            Ok(())
        };
        check_rows(&self.local, "local OCP")?;
        check_rows(&self.global, "global OCP")?;
        check_rows(&self.block_prior, "block prior")
    }

    /// Uniform tables, for ablation checks.
    pub fn uniform(class_count: usize, grid_side: usize) -> Result<Self> {
        let m = class_count;
        let b = grid_side * grid_side;
        let u = T::one() / T::of(m as f64);
        Self::from_parts(
            class_count,
            grid_side,
            0.0,
            vec![u; m * m],
            vec![u; b * m * b * m],
            vec![u; b * m],
        )
    }

    pub fn class_count(&self) -> usize {
        self.class_count
    }

    pub fn grid_side(&self) -> usize {
        self.grid_side
    }

    pub fn smoothing_alpha(&self) -> f64 {
        self.smoothing_alpha
    }

    /// P(neighbor class `b` | class `a`).
    #[inline]
    pub fn local(&self, a: usize, b: usize) -> T {
        self.local[a * self.class_count + b]
    }

    /// Row of the local table for source class `a`.
    pub fn local_row(&self, a: usize) -> &[T] {
        &self.local[a * self.class_count..(a + 1) * self.class_count]
    }

    /// P(target class | source block, source class, target block).
    #[inline]
    pub fn global_row(&self, src_block: usize, src_class: usize, tgt_block: usize) -> &[T] {
        let m = self.class_count;
        let b = self.grid_side * self.grid_side;
        let row = (src_block * m + src_class) * b + tgt_block;
        &self.global[row * m..(row + 1) * m]
    }

    /// P(class | block).
    pub fn block_prior_row(&self, block: usize) -> &[T] {
        &self.block_prior[block * self.class_count..(block + 1) * self.class_count]
    }

    pub fn local_table(&self) -> &[T] {
        &self.local
    }

    pub fn global_table(&self) -> &[T] {
        &self.global
    }

    pub fn block_prior_table(&self) -> &[T] {
        &self.block_prior
    }
}

/// One training image for [`estimate_ocp`]: its segmentation, block
/// assignment, and per-superpixel majority ground-truth class (`None` for
/// superpixels whose pixels are all IGNORE).
pub struct OcpTrainItem<'a> {
    pub spmap: &'a SuperpixelMap,
    pub blocks: &'a BlockGrid,
    pub classes: &'a [Option<u8>],
}

/// Majority ground-truth class of each superpixel, ignoring IGNORE pixels;
/// ties go to the lowest class index, all-IGNORE superpixels map to `None`.
pub fn majority_classes(
    spmap: &SuperpixelMap,
    labels: &LabelMap,
    class_count: usize,
) -> Result<Vec<Option<u8>>> {
    if labels.width() != spmap.width() || labels.height() != spmap.height() {
        return Err(Error::invalid("label map dimensions do not match superpixel map"));
    }
    let mut counts = vec![0u32; spmap.count() * class_count];
    for y in 0..spmap.height() {
        for x in 0..spmap.width() {
            let l = labels.get(x, y);
            if l == IGNORE {
                continue;
            }
            if (l as usize) >= class_count {
                return Err(Error::invalid(format!("label {l} out of range")));
            }
            counts[spmap.id_at(x, y) as usize * class_count + l as usize] += 1;
        }
    }
    Ok((0..spmap.count())
        .map(|id| {
            let row = &counts[id * class_count..(id + 1) * class_count];
            let mut best: Option<(u32, usize)> = None;
            for (c, &n) in row.iter().enumerate() {
                if n > 0 && best.map_or(true, |(bn, _)| n > bn) {
                    best = Some((n, c));
                }
            }
            best.map(|(_, c)| c as u8)
        })
        .collect())
}

#[derive(Clone)]
struct Counts {
    local: Vec<u64>,
    global: Vec<u64>,
    block: Vec<u64>,
}

impl Counts {
    fn zero(m: usize, b: usize) -> Self {
        Self {
            local: vec![0; m * m],
            global: vec![0; b * m * b * m],
            block: vec![0; b * m],
        }
    }

    fn add(mut self, other: Counts) -> Self {
        for (a, b) in self.local.iter_mut().zip(other.local) {
            *a += b;
        }
        for (a, b) in self.global.iter_mut().zip(other.global) {
            *a += b;
        }
        for (a, b) in self.block.iter_mut().zip(other.block) {
            *a += b;
        }
        self
    }
}

/// Estimates the co-occurrence tables from training images.
///
/// Local counts accumulate over ordered adjacent superpixel pairs; global
/// counts over all ordered same-image pairs (self excluded, adjacency not
/// required). Rows are add-alpha smoothed and normalized; with `alpha = 0`
/// an unobserved row falls back to uniform.
pub fn estimate_ocp<T: Real>(
    items: &[OcpTrainItem<'_>],
    class_count: usize,
    grid_side: usize,
    smoothing_alpha: f64,
) -> Result<OcpModel<T>> {
    if items.is_empty() {
        return Err(Error::invalid("empty training set"));
    }
    if class_count == 0 || grid_side == 0 {
        return Err(Error::invalid("class count and grid side must be at least 1"));
    }
    if smoothing_alpha < 0.0 {
        return Err(Error::invalid("smoothing alpha must be non-negative"));
    }
    let m = class_count;
    let b = grid_side * grid_side;
    for item in items {
        if item.classes.len() != item.spmap.count() {
            return Err(Error::invalid("class list does not match superpixel count"));
        }
        if item.blocks.grid_side() != grid_side {
            return Err(Error::invalid("block grid side mismatch"));
        }
        for c in item.classes.iter().flatten() {
            if (*c as usize) >= m {
                return Err(Error::invalid(format!("class {c} out of range")));
            }
        }
    }

    // Per-image counting merged by commutative integer addition, so the
    // result is independent of parallel scheduling.
    let counts = items
        .par_iter()
        .map(|item| {
            let mut c = Counts::zero(m, b);
            let labeled: Vec<(usize, usize, usize)> = item
                .classes
                .iter()
                .enumerate()
                .filter_map(|(j, cls)| {
                    cls.map(|cl| (j, cl as usize, item.blocks.block_of(j) as usize))
                })
                .collect();
            for &(j, cj, _) in &labeled {
                for &k in item.spmap.neighbors(j) {
                    if let Some(ck) = item.classes[k as usize] {
                        c.local[cj * m + ck as usize] += 1;
                    }
                }
            }
            for &(j, cj, bj) in &labeled {
                for &(k, ck, bk) in &labeled {
                    if j == k {
                        continue;
                    }
                    // Ordered pair: source (j) casts evidence about target (k).
                    let row = (bj * m + cj) * b + bk;
                    c.global[row * m + ck] += 1;
                }
            }
            for &(_, cj, bj) in &labeled {
                c.block[bj * m + cj] += 1;
            }
            c
        })
        .reduce(|| Counts::zero(m, b), Counts::add);

    let normalize = |counts: &[u64]| -> Vec<T> {
        let mut out = Vec::with_capacity(counts.len());
        for row in counts.chunks(m) {
            let total: u64 = row.iter().sum();
            let denom = total as f64 + smoothing_alpha * m as f64;
            if denom <= 0.0 {
                out.extend(std::iter::repeat(T::one() / T::of(m as f64)).take(m));
            } else {
                out.extend(row.iter().map(|&c| T::of((c as f64 + smoothing_alpha) / denom)));
            }
        }
        out
    };

    OcpModel::from_parts(
        class_count,
        grid_side,
        smoothing_alpha,
        normalize(&counts.local),
        normalize(&counts.global),
        normalize(&counts.block),
    )
}

/// Local context vote for superpixel `j`: neighbors cast their local-OCP
/// rows (selected by their predicted classes), weighted by pixel count.
/// A superpixel with no neighbors votes uniform.
pub fn local_vote<T: Real>(
    j: usize,
    predicted: &[u8],
    spmap: &SuperpixelMap,
    ocp: &OcpModel<T>,
) -> Result<ClassProbVector<T>> {
    let m = ocp.class_count();
    let neighbors = spmap.neighbors(j);
    if neighbors.is_empty() {
        return ClassProbVector::uniform(m);
    }
    let mut acc = vec![T::zero(); m];
    for &k in neighbors {
        let ck = predicted[k as usize] as usize;
        let weight = T::of(spmap.pixel_count(k as usize) as f64);
        for (a, &p) in acc.iter_mut().zip(ocp.local_row(ck)) {
            *a = *a + weight * p;
        }
    }
    ClassProbVector::from_scores(&acc)
}

/// Global context vote for superpixel `j`: every other superpixel in the
/// image casts the global-OCP row selected by its block, its predicted
/// class, and `j`'s block, weighted by pixel count. A single-superpixel
/// image votes uniform.
pub fn global_vote<T: Real>(
    j: usize,
    predicted: &[u8],
    spmap: &SuperpixelMap,
    blocks: &BlockGrid,
    ocp: &OcpModel<T>,
) -> Result<ClassProbVector<T>> {
    let m = ocp.class_count();
    if spmap.count() <= 1 {
        return ClassProbVector::uniform(m);
    }
    let bj = blocks.block_of(j) as usize;
    let mut acc = vec![T::zero(); m];
    for k in 0..spmap.count() {
        if k == j {
            continue;
        }
        let ck = predicted[k] as usize;
        let bk = blocks.block_of(k) as usize;
        let weight = T::of(spmap.pixel_count(k) as f64);
        for (a, &p) in acc.iter_mut().zip(ocp.global_row(bk, ck, bj)) {
            *a = *a + weight * p;
        }
    }
    ClassProbVector::from_scores(&acc)
}

/// Fuses the two context votes into a single vector (normalized
/// elementwise mean). The integration layer consumes the pair unfused;
/// this is exposed for diagnostics and single-vector ablations.
pub fn fuse_context<T: Real>(
    v_local: &ClassProbVector<T>,
    v_global: &ClassProbVector<T>,
) -> Result<ClassProbVector<T>> {
    if v_local.len() != v_global.len() {
        return Err(Error::invalid("context votes disagree in length"));
    }
    let half = T::of(0.5);
    let mean: Vec<T> = v_local
        .as_slice()
        .iter()
        .zip(v_global.as_slice())
        .map(|(&a, &b)| half * (a + b))
        .collect();
    ClassProbVector::from_scores(&mean)
}
