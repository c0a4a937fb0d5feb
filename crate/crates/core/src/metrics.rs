//! Segmentation metrics: global pixel accuracy, mean per-class accuracy,
//! and mean intersection-over-union, accumulated through a confusion
//! matrix. IGNORE pixels are excluded everywhere.

use crate::error::{Error, Result};
use crate::image::{LabelMap, IGNORE};

/// M x M counts; entry `[gt][pred]` is the number of pixels with ground
/// truth `gt` predicted as `pred`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfusionMatrix {
    class_count: usize,
    counts: Vec<u64>,
}

impl ConfusionMatrix {
    pub fn new(class_count: usize) -> Result<Self> {
        if class_count == 0 {
            return Err(Error::invalid("class count must be at least 1"));
        }
        Ok(Self {
            class_count,
            counts: vec![0; class_count * class_count],
        })
    }

    pub fn class_count(&self) -> usize {
        self.class_count
    }

    #[inline]
    pub fn get(&self, gt: usize, pred: usize) -> u64 {
        self.counts[gt * self.class_count + pred]
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    /// Adds one prediction/ground-truth pair of label maps. Pixels whose
    /// ground truth is IGNORE are skipped.
    pub fn accumulate(&mut self, pred: &LabelMap, gt: &LabelMap) -> Result<()> {
        if pred.width() != gt.width() || pred.height() != gt.height() {
            return Err(Error::invalid(format!(
                "prediction is {}x{} but ground truth is {}x{}",
                pred.width(),
                pred.height(),
                gt.width(),
                gt.height()
            )));
        }
        let m = self.class_count;
        for (&p, &g) in pred.labels().iter().zip(gt.labels()) {
            if g == IGNORE {
                continue;
            }
            if (g as usize) >= m {
                return Err(Error::invalid(format!("ground-truth label {g} out of range")));
            }
            if (p as usize) >= m {
                return Err(Error::invalid(format!("predicted label {p} out of range")));
            }
            self.counts[g as usize * m + p as usize] += 1;
        }
        Ok(())
    }

    /// Adds raw label slices (used by per-superpixel tests and tools).
    pub fn accumulate_slices(&mut self, pred: &[u8], gt: &[u8]) -> Result<()> {
        if pred.len() != gt.len() {
            return Err(Error::invalid("prediction and ground truth disagree in length"));
        }
        let m = self.class_count;
        for (&p, &g) in pred.iter().zip(gt) {
            if g == IGNORE {
                continue;
            }
            if (g as usize) >= m || (p as usize) >= m {
                return Err(Error::invalid("label out of range"));
            }
            self.counts[g as usize * m + p as usize] += 1;
        }
        Ok(())
    }

    /// Merges another matrix into this one (commutative, so per-image
    /// matrices can be reduced in any order).
    pub fn merge(&mut self, other: &ConfusionMatrix) -> Result<()> {
        if other.class_count != self.class_count {
            return Err(Error::invalid("confusion matrices disagree in class count"));
        }
        for (a, b) in self.counts.iter_mut().zip(&other.counts) {
            *a += b;
        }
        Ok(())
    }

    fn require_nonempty(&self) -> Result<()> {
        if self.total() == 0 {
            return Err(Error::invalid("confusion matrix is empty"));
        }
        Ok(())
    }

    /// Fraction of evaluated pixels labeled correctly (trace / total).
    pub fn pixel_accuracy(&self) -> Result<f64> {
        self.require_nonempty()?;
        let trace: u64 = (0..self.class_count).map(|c| self.get(c, c)).sum();
        Ok(trace as f64 / self.total() as f64)
    }

    /// Per-class recall; `None` for classes absent from the ground truth.
    pub fn per_class_accuracy(&self) -> Vec<Option<f64>> {
        (0..self.class_count)
            .map(|g| {
                let row: u64 = (0..self.class_count).map(|p| self.get(g, p)).sum();
                if row == 0 {
                    None
                } else {
                    Some(self.get(g, g) as f64 / row as f64)
                }
            })
            .collect()
    }

    /// Mean recall over classes present in the ground truth.
    pub fn class_accuracy(&self) -> Result<f64> {
        self.require_nonempty()?;
        let accs: Vec<f64> = self.per_class_accuracy().into_iter().flatten().collect();
        Ok(accs.iter().sum::<f64>() / accs.len() as f64)
    }

    /// Mean over classes present in ground truth or prediction of
    /// TP / (TP + FP + FN).
    pub fn mean_iou(&self) -> Result<f64> {
        self.require_nonempty()?;
        let m = self.class_count;
        let mut sum = 0.0;
        let mut present = 0usize;
        for c in 0..m {
            let tp = self.get(c, c);
            let gt_row: u64 = (0..m).map(|p| self.get(c, p)).sum();
            let pred_col: u64 = (0..m).map(|g| self.get(g, c)).sum();
            let union = gt_row + pred_col - tp;
            if union == 0 {
                continue;
            }
            sum += tp as f64 / union as f64;
            present += 1;
        }
        Ok(sum / present as f64)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn hand_example() -> ConfusionMatrix {
        // gt [0, 0, 1, 1], pred [0, 1, 1, 1] -> [[1, 1], [0, 2]].
        let mut cm = ConfusionMatrix::new(2).unwrap();
        cm.accumulate_slices(&[0, 1, 1, 1], &[0, 0, 1, 1]).unwrap();
        cm
    }

    #[test]
    fn hand_confusion_counts() {
        let cm = hand_example();
        assert_eq!(
            [cm.get(0, 0), cm.get(0, 1), cm.get(1, 0), cm.get(1, 1)],
            [1, 1, 0, 2]
        );
    }

    #[test]
    fn hand_metric_values() {
        let cm = hand_example();
        assert_eq!(cm.pixel_accuracy().unwrap(), 3.0 / 4.0);
        // class = mean(1/2, 2/2); mIoU = mean(1/2, 2/3) = 7/12.
        assert_eq!(cm.class_accuracy().unwrap(), (0.5 + 1.0) / 2.0);
        assert_eq!(cm.mean_iou().unwrap(), (0.5 + 2.0 / 3.0) / 2.0);
    }

    #[test]
    fn perfect_prediction_scores_one() {
        let mut cm = ConfusionMatrix::new(3).unwrap();
        cm.accumulate_slices(&[0, 1, 2, 2], &[0, 1, 2, 2]).unwrap();
        assert_eq!(cm.pixel_accuracy().unwrap(), 1.0);
        assert_eq!(cm.class_accuracy().unwrap(), 1.0);
        assert_eq!(cm.mean_iou().unwrap(), 1.0);
    }

    #[test]
    fn ignore_pixels_leave_the_matrix_unchanged() {
        let mut cm = ConfusionMatrix::new(2).unwrap();
        cm.accumulate_slices(&[0, 1], &[IGNORE, IGNORE]).unwrap();
        assert_eq!(cm.total(), 0);
        assert!(cm.pixel_accuracy().is_err());
    }

    #[test]
    fn four_identical_pixels_increment_the_diagonal() {
        let mut cm = ConfusionMatrix::new(2).unwrap();
        cm.accumulate_slices(&[0, 0, 0, 0], &[0, 0, 0, 0]).unwrap();
        assert_eq!(cm.get(0, 0), 4);
    }

    #[test]
    fn absent_classes_are_excluded_from_means() {
        // Class 2 never appears in gt or pred: excluded from both means.
        let mut cm = ConfusionMatrix::new(3).unwrap();
        cm.accumulate_slices(&[0, 1, 1, 1], &[0, 0, 1, 1]).unwrap();
        assert_eq!(cm.class_accuracy().unwrap(), (0.5 + 1.0) / 2.0);
        assert_eq!(cm.mean_iou().unwrap(), (0.5 + 2.0 / 3.0) / 2.0);
        assert_eq!(cm.per_class_accuracy()[2], None);

        // A class absent from gt but present in pred joins mIoU (as 0)
        // but not class accuracy.
        let mut cm = ConfusionMatrix::new(3).unwrap();
        cm.accumulate_slices(&[0, 2], &[0, 0]).unwrap();
        assert_eq!(cm.class_accuracy().unwrap(), 0.5);
        let miou = cm.mean_iou().unwrap();
        assert_eq!(miou, (0.5 + 0.0) / 2.0);
    }

    #[test]
    fn dimension_mismatch_is_invalid() {
        let mut cm = ConfusionMatrix::new(2).unwrap();
        let a = LabelMap::new(2, 1, vec![0, 1], 2).unwrap();
        let b = LabelMap::new(1, 2, vec![0, 1], 2).unwrap();
        assert!(cm.accumulate(&a, &b).is_err());
    }

    #[test]
    fn accumulation_over_images_equals_concatenation() {
        let mut split = ConfusionMatrix::new(3).unwrap();
        split.accumulate_slices(&[0, 1], &[0, 2]).unwrap();
        split.accumulate_slices(&[2, 2], &[2, 1]).unwrap();
        let mut whole = ConfusionMatrix::new(3).unwrap();
        whole
            .accumulate_slices(&[0, 1, 2, 2], &[0, 2, 2, 1])
            .unwrap();
        assert_eq!(split, whole);

        let mut merged = ConfusionMatrix::new(3).unwrap();
        let mut part = ConfusionMatrix::new(3).unwrap();
        part.accumulate_slices(&[0, 1], &[0, 2]).unwrap();
        merged.merge(&part).unwrap();
        let mut part2 = ConfusionMatrix::new(3).unwrap();
        part2.accumulate_slices(&[2, 2], &[2, 1]).unwrap();
        merged.merge(&part2).unwrap();
        assert_eq!(merged, whole);
    }

    #[test]
    fn majority_constant_prediction_bounds_pixel_accuracy() {
        let gt = [0u8, 0, 0, 1, 1, 2];
        let pred = [0u8; 6];
        let mut cm = ConfusionMatrix::new(3).unwrap();
        cm.accumulate_slices(&pred, &gt).unwrap();
        let max_freq = 3.0 / 6.0;
        assert!(cm.pixel_accuracy().unwrap() >= max_freq);
    }

    proptest! {
        #[test]
        fn metrics_in_unit_interval_and_permutation_invariant(
            labels in prop::collection::vec((0u8..4, 0u8..4), 1..200)
        ) {
            let pred: Vec<u8> = labels.iter().map(|&(p, _)| p).collect();
            let gt: Vec<u8> = labels.iter().map(|&(_, g)| g).collect();
            let mut cm = ConfusionMatrix::new(4).unwrap();
            cm.accumulate_slices(&pred, &gt).unwrap();
            for v in [
                cm.pixel_accuracy().unwrap(),
                cm.class_accuracy().unwrap(),
                cm.mean_iou().unwrap(),
            ] {
                prop_assert!((0.0..=1.0).contains(&v));
            }

            // Permute class indices consistently: metrics unchanged.
            let perm = [2u8, 0, 3, 1];
            let ppred: Vec<u8> = pred.iter().map(|&p| perm[p as usize]).collect();
            let pgt: Vec<u8> = gt.iter().map(|&g| perm[g as usize]).collect();
            let mut pcm = ConfusionMatrix::new(4).unwrap();
            pcm.accumulate_slices(&ppred, &pgt).unwrap();
            prop_assert_eq!(cm.pixel_accuracy().unwrap(), pcm.pixel_accuracy().unwrap());
            prop_assert!((cm.class_accuracy().unwrap() - pcm.class_accuracy().unwrap()).abs() < 1e-12);
            prop_assert!((cm.mean_iou().unwrap() - pcm.mean_iou().unwrap()).abs() < 1e-12);
        }
    }
}
