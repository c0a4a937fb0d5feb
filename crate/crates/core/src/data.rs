//! Dataset ingestion for `images/` + `labels/` + `classes.txt` directory
//! layouts, deterministic train/test splitting, and a dataset writer used
//! by the synthetic generator.

use std::fs;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

use crate::error::{Error, Result};
use crate::image::{LabelMap, RasterImage};

/// Directory layout of a dataset root.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DatasetLayout {
    pub images_dir: String,
    pub labels_dir: String,
    pub class_file: String,
}

impl Default for DatasetLayout {
    fn default() -> Self {
        Self {
            images_dir: "images".into(),
            labels_dir: "labels".into(),
            class_file: "classes.txt".into(),
        }
    }
}

/// One image with its ground truth, identified by the file stem.
#[derive(Debug, Clone, PartialEq)]
pub struct DatasetItem {
    pub image: RasterImage,
    pub labels: LabelMap,
    pub id: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub items: Vec<DatasetItem>,
    pub class_count: usize,
    pub class_names: Vec<String>,
    pub warnings: Vec<String>,
}

/// Class name presets matching the common benchmark label sets.
pub const SBD_CLASSES: [&str; 8] = [
    "sky", "tree", "road", "grass", "water", "building", "mountain", "foreground",
];

pub const CAMVID_CLASSES: [&str; 11] = [
    "sky",
    "building",
    "pole",
    "road",
    "pavement",
    "tree",
    "sign",
    "fence",
    "car",
    "pedestrian",
    "bicyclist",
];

/// Loads a dataset from `root` using `layout`.
///
/// Images are `.png` or `.ppm` files under the images dir; each must have
/// an 8-bit single-channel label PNG of the same stem under the labels
/// dir. Items are ordered lexicographically by stem. Per-file problems
/// (missing label, dimension mismatch, out-of-range label value) fail the
/// load with an error naming the file.
pub fn load_dataset(root: &Path, layout: &DatasetLayout) -> Result<Dataset> {
    let images_dir = root.join(&layout.images_dir);
    let labels_dir = root.join(&layout.labels_dir);
    let class_file = root.join(&layout.class_file);
    if !images_dir.is_dir() {
        return Err(Error::file(&images_dir, "images directory not found"));
    }
    if !labels_dir.is_dir() {
        return Err(Error::file(&labels_dir, "labels directory not found"));
    }
    let class_names = read_class_names(&class_file)?;
    let class_count = class_names.len();

    let mut entries: Vec<(String, PathBuf)> = Vec::new();
    let mut skipped: Vec<String> = Vec::new();
    for entry in fs::read_dir(&images_dir).map_err(|e| Error::io(&images_dir, e))? {
        let entry = entry.map_err(|e| Error::io(&images_dir, e))?;
        let path = entry.path();
        let ext = path
            .extension()
            .and_then(|e| e.to_str())
            .map(|e| e.to_ascii_lowercase());
        if !matches!(ext.as_deref(), Some("png") | Some("ppm")) {
            skipped.push(path.display().to_string());
            continue;
        }
        let stem = path
            .file_stem()
            .and_then(|s| s.to_str())
            .ok_or_else(|| Error::file(&path, "image file has no usable stem"))?
            .to_string();
        entries.push((stem, path));
    }
    entries.sort();
    skipped.sort();
    for pair in entries.windows(2) {
        if pair[0].0 == pair[1].0 {
            return Err(Error::file(
                &pair[1].1,
                format!("duplicate image stem '{}'", pair[1].0),
            ));
        }
    }

    let mut warnings = Vec::new();
    if entries.is_empty() {
        warnings.push(format!("no images found under {}", images_dir.display()));
    }
    for path in skipped {
        warnings.push(format!("skipping non-image file {path}"));
    }

    let mut items = Vec::with_capacity(entries.len());
    for (stem, img_path) in entries {
        let image = RasterImage::open(&img_path)?;
        let label_path = labels_dir.join(format!("{stem}.png"));
        if !label_path.is_file() {
            return Err(Error::file(
                &label_path,
                format!("label file missing for image '{stem}'"),
            ));
        }
        let labels = LabelMap::read_png(&label_path, class_count)?;
        if labels.width() != image.width() || labels.height() != image.height() {
            return Err(Error::file(
                &label_path,
                format!(
                    "label map is {}x{} but image is {}x{}",
                    labels.width(),
                    labels.height(),
                    image.width(),
                    image.height()
                ),
            ));
        }
        items.push(DatasetItem {
            image,
            labels,
            id: stem,
        });
    }
    Ok(Dataset {
        items,
        class_count,
        class_names,
        warnings,
    })
}

fn read_class_names(path: &Path) -> Result<Vec<String>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let names: Vec<String> = text
        .lines()
        .map(|l| l.trim().to_string())
        .filter(|l| !l.is_empty())
        .collect();
    if names.is_empty() {
        return Err(Error::file(path, "class file lists no classes"));
    }
    if names.len() > 255 {
        return Err(Error::file(path, "more than 255 classes are not supported"));
    }
    Ok(names)
}

/// Writes `ds` to `root` in the standard layout (PNG images).
pub fn write_dataset(ds: &Dataset, root: &Path) -> Result<()> {
    let layout = DatasetLayout::default();
    let images_dir = root.join(&layout.images_dir);
    let labels_dir = root.join(&layout.labels_dir);
    fs::create_dir_all(&images_dir).map_err(|e| Error::io(&images_dir, e))?;
    fs::create_dir_all(&labels_dir).map_err(|e| Error::io(&labels_dir, e))?;
    for item in &ds.items {
        item.image
            .write_png(&images_dir.join(format!("{}.png", item.id)))?;
        item.labels
            .write_png(&labels_dir.join(format!("{}.png", item.id)))?;
    }
    let class_file = root.join(&layout.class_file);
    fs::write(&class_file, ds.class_names.join("\n") + "\n")
        .map_err(|e| Error::io(&class_file, e))
}

/// Seeded shuffle-then-split: the first `floor(n * train_fraction)` items
/// of the shuffled order become the training set. Both sides are returned
/// sorted by id; together they hold exactly the input items.
pub fn split(ds: Dataset, train_fraction: f64, seed: u64) -> Result<(Dataset, Dataset)> {
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(Error::invalid(format!(
            "train fraction must be strictly between 0 and 1, got {train_fraction}"
        )));
    }
    let n = ds.items.len();
    let (train_idx, test_idx) = split_indices(n, train_fraction, seed);
    let mut train_items = Vec::with_capacity(train_idx.len());
    let mut test_items = Vec::with_capacity(test_idx.len());
    let mut take: Vec<Option<DatasetItem>> = ds.items.into_iter().map(Some).collect();
    for i in train_idx {
        train_items.push(take[i].take().expect("index used once"));
    }
    for i in test_idx {
        test_items.push(take[i].take().expect("index used once"));
    }
    train_items.sort_by(|a, b| a.id.cmp(&b.id));
    test_items.sort_by(|a, b| a.id.cmp(&b.id));
    let mk = |items| Dataset {
        items,
        class_count: ds.class_count,
        class_names: ds.class_names.clone(),
        warnings: Vec::new(),
    };
    Ok((mk(train_items), mk(test_items)))
}

/// Index-level split used by the pipeline's holdout logic.
pub fn split_indices(n: usize, train_fraction: f64, seed: u64) -> (Vec<usize>, Vec<usize>) {
    let mut order: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    for i in (1..n).rev() {
        let j = ((rng.random::<f64>() * (i + 1) as f64) as usize).min(i);
        order.swap(i, j);
    }
    let n_train = ((n as f64) * train_fraction).floor() as usize;
    let test = order.split_off(n_train);
    (order, test)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::image::IGNORE;

    fn tiny_dataset(n: usize) -> Dataset {
        let items = (0..n)
            .map(|i| DatasetItem {
                image: RasterImage::from_fn(2, 2, |x, y| [i as u8, x as u8, y as u8]).unwrap(),
                labels: LabelMap::new(2, 2, vec![0, 1, 1, IGNORE], 2).unwrap(),
                id: format!("img_{i:04}"),
            })
            .collect();
        Dataset {
            items,
            class_count: 2,
            class_names: vec!["a".into(), "b".into()],
            warnings: Vec::new(),
        }
    }

    fn temp_root(tag: &str) -> PathBuf {
        let dir = std::env::temp_dir().join(format!("ctxparse_data_{tag}"));
        let _ = fs::remove_dir_all(&dir);
        fs::create_dir_all(&dir).unwrap();
        dir
    }

    #[test]
    fn round_trip_write_then_load() {
        let root = temp_root("rt");
        let ds = tiny_dataset(3);
        write_dataset(&ds, &root).unwrap();
        let loaded = load_dataset(&root, &DatasetLayout::default()).unwrap();
        assert_eq!(loaded.items, ds.items);
        assert_eq!(loaded.class_names, ds.class_names);
        assert!(loaded.warnings.is_empty());
    }

    #[test]
    fn empty_dataset_warns() {
        let root = temp_root("empty");
        fs::create_dir_all(root.join("images")).unwrap();
        fs::create_dir_all(root.join("labels")).unwrap();
        fs::write(root.join("classes.txt"), "a\nb\n").unwrap();
        let ds = load_dataset(&root, &DatasetLayout::default()).unwrap();
        assert!(ds.items.is_empty());
        assert_eq!(ds.warnings.len(), 1);
    }

    #[test]
    fn missing_label_names_the_file() {
        let root = temp_root("missing");
        let ds = tiny_dataset(1);
        write_dataset(&ds, &root).unwrap();
        fs::remove_file(root.join("labels/img_0000.png")).unwrap();
        let err = load_dataset(&root, &DatasetLayout::default())
            .unwrap_err()
            .to_string();
        assert!(err.contains("img_0000"), "{err}");
    }

    #[test]
    fn out_of_range_label_names_file_and_value() {
        let root = temp_root("badlabel");
        let ds = tiny_dataset(1);
        write_dataset(&ds, &root).unwrap();
        // Rewrite the label map with a value beyond M.
        let bad = LabelMap::new(2, 2, vec![0, 5, 1, 0], 6).unwrap();
        bad.write_png(&root.join("labels/img_0000.png")).unwrap();
        let err = load_dataset(&root, &DatasetLayout::default())
            .unwrap_err()
            .to_string();
        assert!(err.contains('5') && err.contains("img_0000"), "{err}");
    }

    #[test]
    fn dimension_mismatch_is_per_file_error() {
        let root = temp_root("dims");
        let ds = tiny_dataset(1);
        write_dataset(&ds, &root).unwrap();
        let other = LabelMap::new(3, 1, vec![0, 1, 0], 2).unwrap();
        other.write_png(&root.join("labels/img_0000.png")).unwrap();
        let err = load_dataset(&root, &DatasetLayout::default())
            .unwrap_err()
            .to_string();
        assert!(err.contains("3x1"), "{err}");
    }

    #[test]
    fn loader_orders_lexicographically_and_accepts_ppm() {
        let root = temp_root("order");
        fs::create_dir_all(root.join("images")).unwrap();
        fs::create_dir_all(root.join("labels")).unwrap();
        fs::write(root.join("classes.txt"), "a\n").unwrap();
        let img = RasterImage::from_fn(1, 1, |_, _| [1, 2, 3]).unwrap();
        let lbl = LabelMap::new(1, 1, vec![0], 1).unwrap();
        for id in ["b", "a", "c"] {
            if id == "a" {
                img.write_ppm(&root.join(format!("images/{id}.ppm"))).unwrap();
            } else {
                img.write_png(&root.join(format!("images/{id}.png"))).unwrap();
            }
            lbl.write_png(&root.join(format!("labels/{id}.png"))).unwrap();
        }
        let ds = load_dataset(&root, &DatasetLayout::default()).unwrap();
        let ids: Vec<&str> = ds.items.iter().map(|i| i.id.as_str()).collect();
        assert_eq!(ids, ["a", "b", "c"]);
    }

    #[test]
    fn split_715_at_080_gives_572_143() {
        let ds = tiny_dataset(715);
        let (train, test) = split(ds, 0.8, 7).unwrap();
        assert_eq!(train.items.len(), 572);
        assert_eq!(test.items.len(), 143);
    }

    #[test]
    fn split_is_seed_deterministic_and_partitions() {
        let ds = tiny_dataset(20);
        let (a_train, a_test) = split(ds.clone(), 0.7, 99).unwrap();
        let (b_train, b_test) = split(ds.clone(), 0.7, 99).unwrap();
        assert_eq!(a_train, b_train);
        assert_eq!(a_test, b_test);

        let mut all: Vec<String> = a_train
            .items
            .iter()
            .chain(&a_test.items)
            .map(|i| i.id.clone())
            .collect();
        all.sort();
        let mut want: Vec<String> = ds.items.iter().map(|i| i.id.clone()).collect();
        want.sort();
        assert_eq!(all, want);
    }

    #[test]
    fn split_two_items_in_half() {
        let ds = tiny_dataset(2);
        let (train, test) = split(ds, 0.5, 0).unwrap();
        assert_eq!(train.items.len(), 1);
        assert_eq!(test.items.len(), 1);
    }

    #[test]
    fn bad_fraction_is_invalid() {
        assert!(split(tiny_dataset(4), 0.0, 0).is_err());
        assert!(split(tiny_dataset(4), 1.0, 0).is_err());
    }
}
