//! Versioned persistence of a trained model: classifier bank, OCP tables,
//! integration net, and provenance, in a self-describing structured-text
//! document (`.cpb`). Weight blocks are base-64-encoded little-endian f64
//! arrays with per-block CRC32 checksums, so round trips are bit-exact.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use base64::engine::general_purpose::STANDARD as B64;
use base64::Engine as _;

use crate::context::OcpModel;
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::fusion::{ContextInput, IntegrationNet};
use crate::superpixel::SlicParams;
use crate::visual::{ClassifierBank, ClassifierKind, UnitParams, VisualTrainConfig};

pub const BUNDLE_VERSION: u32 = 1;
const MAGIC: &str = "ctxparse-bundle";

/// Reproducibility record: seeds, input fingerprint, and the producing
/// tool version. No wall-clock fields, so retraining with identical seeds
/// reproduces the file byte for byte.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Provenance {
    pub split_seed: u64,
    pub visual_seed: u64,
    pub ga_seed: u64,
    pub dataset_hash: u64,
    pub tool: String,
}

/// Everything needed to run prediction: model weights plus the
/// segmentation and grid parameters they were trained with.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelBundle {
    pub class_count: usize,
    pub class_names: Vec<String>,
    pub palette: Vec<[u8; 3]>,
    pub slic: SlicParams,
    pub grid_side: usize,
    pub bank: ClassifierBank<f64>,
    pub ocp: OcpModel<f64>,
    pub net: IntegrationNet<f64>,
    pub provenance: Provenance,
}

/// FNV-1a over every item's id, dimensions, pixels, and labels, in dataset
/// order.
pub fn dataset_hash(ds: &Dataset) -> u64 {
    let mut h = 0xcbf29ce484222325u64;
    let mut eat = |bytes: &[u8]| {
        for &b in bytes {
            h ^= b as u64;
            h = h.wrapping_mul(0x100000001b3);
        }
    };
    eat(&(ds.items.len() as u64).to_le_bytes());
    eat(&(ds.class_count as u64).to_le_bytes());
    for item in &ds.items {
        eat(item.id.as_bytes());
        eat(&item.image.width().to_le_bytes());
        eat(&item.image.height().to_le_bytes());
        for p in item.image.pixels() {
            eat(p);
        }
        eat(item.labels.labels());
    }
    h
}

/// Deterministic class palette for overlays: evenly spread hues at fixed
/// saturation/value.
pub fn derive_palette(class_count: usize) -> Vec<[u8; 3]> {
    (0..class_count)
        .map(|i| {
            let hue = (i as f64 * 0.618_033_988_75).fract() * 360.0;
            hsv_to_rgb(hue, 0.62, 0.95)
        })
        .collect()
}

fn hsv_to_rgb(h: f64, s: f64, v: f64) -> [u8; 3] {
    let c = v * s;
    let hp = h / 60.0;
    let x = c * (1.0 - ((hp % 2.0) - 1.0).abs());
    let (r, g, b) = match hp as u32 {
        0 => (c, x, 0.0),
        1 => (x, c, 0.0),
        2 => (0.0, c, x),
        3 => (0.0, x, c),
        4 => (x, 0.0, c),
        _ => (c, 0.0, x),
    };
    let m = v - c;
    [
        ((r + m) * 255.0).round() as u8,
        ((g + m) * 255.0).round() as u8,
        ((b + m) * 255.0).round() as u8,
    ]
}

fn encode_array(out: &mut String, key: &str, values: &[f64]) {
    let mut bytes = Vec::with_capacity(values.len() * 8);
    for v in values {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    let crc = crc32fast::hash(&bytes);
    let _ = writeln!(
        out,
        "{key} = f64[{}] {} crc:{crc:08x}",
        values.len(),
        B64.encode(&bytes)
    );
}

/// Serializes `bundle` to `path`.
pub fn save_bundle(bundle: &ModelBundle, path: &Path) -> Result<()> {
    let mut out = String::new();
    let _ = writeln!(out, "{MAGIC} v{BUNDLE_VERSION}");
    let _ = writeln!(out, "class_count = {}", bundle.class_count);
    for (i, name) in bundle.class_names.iter().enumerate() {
        let _ = writeln!(out, "class_name.{i} = {name}");
    }
    for (i, p) in bundle.palette.iter().enumerate() {
        let _ = writeln!(out, "palette.{i} = {},{},{}", p[0], p[1], p[2]);
    }
    let _ = writeln!(out, "slic.target_count = {}", bundle.slic.target_count);
    let _ = writeln!(out, "slic.compactness = {}", bundle.slic.compactness);
    let _ = writeln!(out, "slic.iterations = {}", bundle.slic.iterations);
    let _ = writeln!(out, "slic.seed = {}", bundle.slic.seed);
    let _ = writeln!(out, "grid_side = {}", bundle.grid_side);

    let _ = writeln!(out, "ocp.alpha = {}", bundle.ocp.smoothing_alpha());
    encode_array(&mut out, "ocp.local", bundle.ocp.local_table());
    encode_array(&mut out, "ocp.global", bundle.ocp.global_table());
    encode_array(&mut out, "ocp.block_prior", bundle.ocp.block_prior_table());

    let cfg = &bundle.bank.config;
    let kind = match cfg.kind {
        ClassifierKind::Logistic => "logistic".to_string(),
        ClassifierKind::Mlp { hidden } => format!("mlp:{hidden}"),
    };
    let _ = writeln!(out, "bank.kind = {kind}");
    let _ = writeln!(out, "bank.dim = {}", bundle.bank.dim());
    let _ = writeln!(out, "bank.epochs = {}", cfg.epochs);
    let _ = writeln!(out, "bank.learning_rate = {}", cfg.learning_rate);
    match cfg.decay {
        Some((factor, every)) => {
            let _ = writeln!(out, "bank.decay = {factor}:{every}");
        }
        None => {
            let _ = writeln!(out, "bank.decay = none");
        }
    }
    let _ = writeln!(out, "bank.l2 = {}", cfg.l2);
    let _ = writeln!(out, "bank.seed = {}", cfg.seed);
    for (i, warning) in bundle.bank.warnings.iter().enumerate() {
        let _ = writeln!(out, "bank.warning.{i} = {warning}");
    }
    for (i, unit) in bundle.bank.units().iter().enumerate() {
        match unit {
            UnitParams::Logistic { weights, bias } => {
                let _ = writeln!(out, "bank.class.{i}.kind = logistic");
                encode_array(&mut out, &format!("bank.class.{i}.weights"), weights);
                encode_array(&mut out, &format!("bank.class.{i}.bias"), &[*bias]);
            }
            UnitParams::Mlp { w1, b1, w2, b2 } => {
                let _ = writeln!(out, "bank.class.{i}.kind = mlp");
                encode_array(&mut out, &format!("bank.class.{i}.w1"), w1);
                encode_array(&mut out, &format!("bank.class.{i}.b1"), b1);
                encode_array(&mut out, &format!("bank.class.{i}.w2"), w2);
                encode_array(&mut out, &format!("bank.class.{i}.b2"), &[*b2]);
            }
        }
    }

    let _ = writeln!(out, "net.hidden = {}", bundle.net.hidden());
    let input = match bundle.net.input() {
        ContextInput::Separate => "separate",
        ContextInput::Fused => "fused",
    };
    let _ = writeln!(out, "net.input = {input}");
    let (w1, b1, w2, b2) = bundle.net.weights();
    encode_array(&mut out, "net.w1", w1);
    encode_array(&mut out, "net.b1", b1);
    encode_array(&mut out, "net.w2", w2);
    encode_array(&mut out, "net.b2", b2);

    let _ = writeln!(out, "provenance.split_seed = {}", bundle.provenance.split_seed);
    let _ = writeln!(out, "provenance.visual_seed = {}", bundle.provenance.visual_seed);
    let _ = writeln!(out, "provenance.ga_seed = {}", bundle.provenance.ga_seed);
    let _ = writeln!(
        out,
        "provenance.dataset_hash = {:016x}",
        bundle.provenance.dataset_hash
    );
    let _ = writeln!(out, "provenance.tool = {}", bundle.provenance.tool);

    fs::write(path, out).map_err(|e| Error::io(path, e))
}

struct Doc<'p> {
    path: &'p Path,
    fields: BTreeMap<String, (String, usize)>,
}

impl<'p> Doc<'p> {
    fn get(&self, key: &str) -> Result<(&str, usize)> {
        self.fields
            .get(key)
            .map(|(v, l)| (v.as_str(), *l))
            .ok_or_else(|| Error::Parse {
                path: self.path.into(),
                line: 0,
                message: format!("missing key '{key}' (file truncated?)"),
            })
    }

    fn parse<T: std::str::FromStr>(&self, key: &str) -> Result<T> {
        let (v, line) = self.get(key)?;
        v.parse().map_err(|_| Error::Parse {
            path: self.path.into(),
            line,
            message: format!("cannot parse '{v}' for key '{key}'"),
        })
    }

    fn string(&self, key: &str) -> Result<String> {
        Ok(self.get(key)?.0.to_string())
    }

    fn array(&self, key: &str) -> Result<Vec<f64>> {
        let (v, line) = self.get(key)?;
        let bad = |message: String| Error::Parse {
            path: self.path.into(),
            line,
            message,
        };
        let rest = v
            .strip_prefix("f64[")
            .ok_or_else(|| bad(format!("array '{key}' must start with 'f64['")))?;
        let (len_str, rest) = rest
            .split_once("] ")
            .ok_or_else(|| bad(format!("array '{key}' missing length delimiter")))?;
        let len: usize = len_str
            .parse()
            .map_err(|_| bad(format!("bad array length '{len_str}'")))?;
        let (b64, crc_part) = rest
            .split_once(" crc:")
            .ok_or_else(|| bad(format!("array '{key}' missing checksum")))?;
        let stored = u32::from_str_radix(crc_part.trim(), 16)
            .map_err(|_| bad(format!("bad checksum '{crc_part}'")))?;
        let bytes = B64
            .decode(b64)
            .map_err(|e| bad(format!("bad base64 in '{key}': {e}")))?;
        let computed = crc32fast::hash(&bytes);
        if computed != stored {
            return Err(Error::Checksum {
                key: key.to_string(),
                stored,
                computed,
            });
        }
        if bytes.len() != len * 8 {
            return Err(bad(format!(
                "array '{key}' decodes to {} bytes, want {}",
                bytes.len(),
                len * 8
            )));
        }
        Ok(bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
            .collect())
    }
}

/// Parses a bundle from `path`.
pub fn load_bundle(path: &Path) -> Result<ModelBundle> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut lines = text.lines().enumerate();
    let (_, header) = lines.next().ok_or_else(|| Error::Parse {
        path: path.into(),
        line: 1,
        message: "empty file".into(),
    })?;
    let version = header
        .strip_prefix(MAGIC)
        .and_then(|r| r.trim().strip_prefix('v'))
        .ok_or_else(|| Error::Parse {
            path: path.into(),
            line: 1,
            message: format!("not a {MAGIC} file"),
        })?;
    let version: u32 = version.parse().map_err(|_| Error::Parse {
        path: path.into(),
        line: 1,
        message: format!("bad version '{version}'"),
    })?;
    if version != BUNDLE_VERSION {
        return Err(Error::Version {
            found: version,
            expected: BUNDLE_VERSION,
        });
    }

    let mut fields = BTreeMap::new();
    for (idx, line) in lines {
        let line_no = idx + 1;
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let (key, value) = trimmed.split_once(" = ").ok_or_else(|| Error::Parse {
            path: path.into(),
            line: line_no,
            message: format!("expected 'key = value', got '{trimmed}'"),
        })?;
        fields.insert(key.to_string(), (value.to_string(), line_no));
    }
    let doc = Doc { path, fields };

    let class_count: usize = doc.parse("class_count")?;
    let mut class_names = Vec::with_capacity(class_count);
    for i in 0..class_count {
        class_names.push(doc.string(&format!("class_name.{i}"))?);
    }
    let mut palette = Vec::with_capacity(class_count);
    for i in 0..class_count {
        let (v, line) = doc.get(&format!("palette.{i}"))?;
        let parts: Vec<&str> = v.split(',').collect();
        let parse_u8 = |s: &str| {
            s.trim().parse::<u8>().map_err(|_| Error::Parse {
                path: path.into(),
                line,
                message: format!("bad palette entry '{v}'"),
            })
        };
        if parts.len() != 3 {
            return Err(Error::Parse {
                path: path.into(),
                line,
                message: format!("bad palette entry '{v}'"),
            });
        }
        palette.push([parse_u8(parts[0])?, parse_u8(parts[1])?, parse_u8(parts[2])?]);
    }

    let slic = SlicParams {
        target_count: doc.parse("slic.target_count")?,
        compactness: doc.parse("slic.compactness")?,
        iterations: doc.parse("slic.iterations")?,
        seed: doc.parse("slic.seed")?,
    };
    let grid_side: usize = doc.parse("grid_side")?;

    let ocp = OcpModel::from_parts(
        class_count,
        grid_side,
        doc.parse("ocp.alpha")?,
        doc.array("ocp.local")?,
        doc.array("ocp.global")?,
        doc.array("ocp.block_prior")?,
    )?;

    let (kind_str, kind_line) = doc.get("bank.kind")?;
    let bad_kind = |msg: String| Error::Parse {
        path: path.into(),
        line: kind_line,
        message: msg,
    };
    let kind = if kind_str == "logistic" {
        ClassifierKind::Logistic
    } else if let Some(h) = kind_str.strip_prefix("mlp:") {
        ClassifierKind::Mlp {
            hidden: h
                .parse()
                .map_err(|_| bad_kind(format!("bad classifier kind '{kind_str}'")))?,
        }
    } else {
        return Err(bad_kind(format!("unknown classifier kind '{kind_str}'")));
    };
    let (decay_str, decay_line) = doc.get("bank.decay")?;
    let bad_decay = |msg: String| Error::Parse {
        path: path.into(),
        line: decay_line,
        message: msg,
    };
    let decay = if decay_str == "none" {
        None
    } else {
        let (f, e) = decay_str
            .split_once(':')
            .ok_or_else(|| bad_decay(format!("bad decay '{decay_str}'")))?;
        Some((
            f.parse()
                .map_err(|_| bad_decay(format!("bad decay factor '{f}'")))?,
            e.parse()
                .map_err(|_| bad_decay(format!("bad decay interval '{e}'")))?,
        ))
    };
    let bank_cfg = VisualTrainConfig {
        kind,
        epochs: doc.parse("bank.epochs")?,
        learning_rate: doc.parse("bank.learning_rate")?,
        decay,
        l2: doc.parse("bank.l2")?,
        seed: doc.parse("bank.seed")?,
    };
    let dim: usize = doc.parse("bank.dim")?;
    let mut warnings = Vec::new();
    for i in 0.. {
        match doc.string(&format!("bank.warning.{i}")) {
            Ok(w) => warnings.push(w),
            Err(_) => break,
        }
    }
    let mut units = Vec::with_capacity(class_count);
    for i in 0..class_count {
        let ukind = doc.string(&format!("bank.class.{i}.kind"))?;
        let unit = match ukind.as_str() {
            "logistic" => {
                let weights = doc.array(&format!("bank.class.{i}.weights"))?;
                let bias = doc.array(&format!("bank.class.{i}.bias"))?;
                UnitParams::Logistic {
                    weights,
                    bias: bias[0],
                }
            }
            "mlp" => {
                let b2 = doc.array(&format!("bank.class.{i}.b2"))?;
                UnitParams::Mlp {
                    w1: doc.array(&format!("bank.class.{i}.w1"))?,
                    b1: doc.array(&format!("bank.class.{i}.b1"))?,
                    w2: doc.array(&format!("bank.class.{i}.w2"))?,
                    b2: b2[0],
                }
            }
            other => {
                return Err(Error::Parse {
                    path: path.into(),
                    line: doc.get(&format!("bank.class.{i}.kind"))?.1,
                    message: format!("unknown unit kind '{other}'"),
                })
            }
        };
        units.push(unit);
    }
    let bank = ClassifierBank::from_parts(dim, units, bank_cfg, warnings)?;

    let hidden: usize = doc.parse("net.hidden")?;
    let input = match doc.string("net.input")?.as_str() {
        "separate" => ContextInput::Separate,
        "fused" => ContextInput::Fused,
        other => {
            return Err(Error::Parse {
                path: path.into(),
                line: doc.get("net.input")?.1,
                message: format!("unknown net input mode '{other}'"),
            })
        }
    };
    let net = IntegrationNet::from_parts(
        class_count,
        hidden,
        input,
        doc.array("net.w1")?,
        doc.array("net.b1")?,
        doc.array("net.w2")?,
        doc.array("net.b2")?,
    )?;

    let (hash_str, hash_line) = doc.get("provenance.dataset_hash")?;
    let dataset_hash = u64::from_str_radix(hash_str, 16).map_err(|_| Error::Parse {
        path: path.into(),
        line: hash_line,
        message: format!("bad dataset hash '{hash_str}'"),
    })?;
    let provenance = Provenance {
        split_seed: doc.parse("provenance.split_seed")?,
        visual_seed: doc.parse("provenance.visual_seed")?,
        ga_seed: doc.parse("provenance.ga_seed")?,
        dataset_hash,
        tool: doc.string("provenance.tool")?,
    };

    Ok(ModelBundle {
        class_count,
        class_names,
        palette,
        slic,
        grid_side,
        bank,
        ocp,
        net,
        provenance,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fusion::genome_len;

    fn sample_bundle(class_count: usize) -> ModelBundle {
        let m = class_count;
        let g = 3usize;
        let b = g * g;
        let units = (0..m)
            .map(|i| UnitParams::Logistic {
                weights: (0..25).map(|d| (i * 25 + d) as f64 * 0.01 - 0.1).collect(),
                bias: i as f64 * 0.5 - 1.0,
            })
            .collect();
        let bank =
            ClassifierBank::from_parts(25, units, VisualTrainConfig::desk(), vec![]).unwrap();
        let uniform = 1.0 / m as f64;
        let ocp = OcpModel::from_parts(
            m,
            g,
            1.0,
            vec![uniform; m * m],
            vec![uniform; b * m * b * m],
            vec![uniform; b * m],
        )
        .unwrap();
        let h = 2 * m;
        let glen = genome_len(m, h, ContextInput::Separate);
        let genome: Vec<f64> = (0..glen).map(|i| (i as f64 * 0.137).sin()).collect();
        let net = IntegrationNet::unpack_genome(&genome, m, h, ContextInput::Separate).unwrap();
        ModelBundle {
            class_count: m,
            class_names: (0..m).map(|i| format!("class {i}")).collect(),
            palette: derive_palette(m),
            slic: SlicParams::default(),
            grid_side: g,
            bank,
            ocp,
            net,
            provenance: Provenance {
                split_seed: 5,
                visual_seed: 6,
                ga_seed: 7,
                dataset_hash: 0xdeadbeef12345678,
                tool: "ctxparse 0.1.0".into(),
            },
        }
    }

    fn temp_path(name: &str) -> std::path::PathBuf {
        let dir = std::env::temp_dir().join("ctxparse_bundle_test");
        std::fs::create_dir_all(&dir).unwrap();
        dir.join(name)
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let bundle = sample_bundle(5);
        let path = temp_path("rt.cpb");
        save_bundle(&bundle, &path).unwrap();
        let loaded = load_bundle(&path).unwrap();
        assert_eq!(loaded, bundle);
    }

    #[test]
    fn eight_class_bundle_reports_eight_names() {
        let bundle = sample_bundle(8);
        let path = temp_path("m8.cpb");
        save_bundle(&bundle, &path).unwrap();
        let loaded = load_bundle(&path).unwrap();
        assert_eq!(loaded.class_count, 8);
        assert_eq!(loaded.class_names.len(), 8);
    }

    #[test]
    fn corrupted_array_byte_reports_checksum_failure() {
        let bundle = sample_bundle(3);
        let path = temp_path("corrupt.cpb");
        save_bundle(&bundle, &path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        // Flip one base64 character inside the net.w1 block.
        let pos = text.find("net.w1 = f64[").unwrap() + 30;
        let mut bytes = text.into_bytes();
        bytes[pos] = if bytes[pos] == b'A' { b'B' } else { b'A' };
        std::fs::write(&path, &bytes).unwrap();
        match load_bundle(&path) {
            Err(Error::Checksum { key, .. }) => assert_eq!(key, "net.w1"),
            other => panic!("want checksum error, got {other:?}"),
        }
    }

    #[test]
    fn version_mismatch_names_both_versions() {
        let bundle = sample_bundle(2);
        let path = temp_path("ver.cpb");
        save_bundle(&bundle, &path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        let bumped = text.replace("ctxparse-bundle v1", "ctxparse-bundle v9");
        std::fs::write(&path, bumped).unwrap();
        match load_bundle(&path) {
            Err(Error::Version { found, expected }) => {
                assert_eq!(found, 9);
                assert_eq!(expected, 1);
            }
            other => panic!("want version error, got {other:?}"),
        }
    }

    #[test]
    fn truncated_file_is_a_parse_error() {
        let bundle = sample_bundle(2);
        let path = temp_path("trunc.cpb");
        save_bundle(&bundle, &path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        let cut = text.len() / 2;
        std::fs::write(&path, &text[..cut]).unwrap();
        match load_bundle(&path) {
            Err(Error::Parse { .. }) | Err(Error::Checksum { .. }) => {}
            other => panic!("want parse/checksum error, got {other:?}"),
        }
    }

    #[test]
    fn mlp_units_round_trip() {
        let mut bundle = sample_bundle(2);
        let units = vec![
            UnitParams::Mlp {
                w1: (0..50).map(|i| i as f64 * 0.01).collect(),
                b1: vec![0.1, -0.2],
                w2: vec![0.5, -0.5],
                b2: 0.25,
            },
            UnitParams::Logistic {
                weights: vec![0.0; 25],
                bias: -20.0,
            },
        ];
        bundle.bank = ClassifierBank::from_parts(
            25,
            units,
            VisualTrainConfig {
                kind: ClassifierKind::Mlp { hidden: 2 },
                decay: Some((0.1, 30)),
                ..VisualTrainConfig::desk()
            },
            vec!["class 1 has no positive samples; trained as constant-negative".into()],
        )
        .unwrap();
        let path = temp_path("mlp.cpb");
        save_bundle(&bundle, &path).unwrap();
        assert_eq!(load_bundle(&path).unwrap(), bundle);
    }

    #[test]
    fn derived_palette_is_distinct() {
        let p = derive_palette(8);
        for i in 0..p.len() {
            for j in i + 1..p.len() {
                assert_ne!(p[i], p[j]);
            }
        }
    }
}
