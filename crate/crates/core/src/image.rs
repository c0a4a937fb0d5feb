//! In-memory raster images and label maps, plus their on-disk encodings
//! (8-bit RGB PNG / binary PPM P6 for images, 8-bit grayscale PNG for
//! label maps, 16-bit grayscale PNG for superpixel-id dumps).

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};

/// Ground-truth sentinel for pixels excluded from training and metrics.
pub const IGNORE: u8 = 255;

/// An 8-bit RGB image, row-major.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RasterImage {
    width: u32,
    height: u32,
    pixels: Vec<[u8; 3]>,
}

impl RasterImage {
    pub fn new(width: u32, height: u32, pixels: Vec<[u8; 3]>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::invalid("image dimensions must be at least 1x1"));
        }
        if pixels.len() != (width as usize) * (height as usize) {
            return Err(Error::invalid(format!(
                "pixel buffer has {} entries, want {}",
                pixels.len(),
                (width as usize) * (height as usize)
            )));
        }
        Ok(Self {
            width,
            height,
            pixels,
        })
    }

    /// Builds an image by evaluating `f(x, y)` for every pixel.
    pub fn from_fn(width: u32, height: u32, mut f: impl FnMut(u32, u32) -> [u8; 3]) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::invalid("image dimensions must be at least 1x1"));
        }
        let mut pixels = Vec::with_capacity((width as usize) * (height as usize));
        for y in 0..height {
            for x in 0..width {
                pixels.push(f(x, y));
            }
        }
        Self::new(width, height, pixels)
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn pixel_count(&self) -> usize {
        self.pixels.len()
    }

    #[inline]
    pub fn get(&self, x: u32, y: u32) -> [u8; 3] {
        self.pixels[(y as usize) * (self.width as usize) + x as usize]
    }

    pub fn pixels(&self) -> &[[u8; 3]] {
        &self.pixels
    }

    /// Reads a PNG or binary PPM (P6), dispatching on the file extension.
    pub fn open(path: &Path) -> Result<Self> {
        match path
            .extension()
            .and_then(|e| e.to_str())
            .map(|e| e.to_ascii_lowercase())
            .as_deref()
        {
            Some("png") => Self::read_png(path),
            Some("ppm") => Self::read_ppm(path),
            other => Err(Error::file(
                path,
                format!("unsupported image extension {other:?}, want .png or .ppm"),
            )),
        }
    }

    pub fn read_png(path: &Path) -> Result<Self> {
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        let mut decoder = png::Decoder::new(BufReader::new(file));
        decoder.set_transformations(png::Transformations::EXPAND | png::Transformations::STRIP_16);
        let mut reader = decoder
            .read_info()
            .map_err(|e| Error::file(path, format!("png decode: {e}")))?;
        let mut buf = vec![0u8; reader.output_buffer_size().unwrap_or(0)];
        let info = reader
            .next_frame(&mut buf)
            .map_err(|e| Error::file(path, format!("png decode: {e}")))?;
        let (w, h) = (info.width, info.height);
        let data = &buf[..info.buffer_size()];
        let pixels: Vec<[u8; 3]> = match info.color_type {
            png::ColorType::Rgb => data.chunks_exact(3).map(|c| [c[0], c[1], c[2]]).collect(),
            png::ColorType::Rgba => data.chunks_exact(4).map(|c| [c[0], c[1], c[2]]).collect(),
            png::ColorType::Grayscale => data.iter().map(|&g| [g, g, g]).collect(),
            png::ColorType::GrayscaleAlpha => {
                data.chunks_exact(2).map(|c| [c[0], c[0], c[0]]).collect()
            }
            other => {
                return Err(Error::file(
                    path,
                    format!("unsupported png color type {other:?}"),
                ))
            }
        };
        Self::new(w, h, pixels)
    }

    pub fn write_png(&self, path: &Path) -> Result<()> {
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut encoder = png::Encoder::new(BufWriter::new(file), self.width, self.height);
        encoder.set_color(png::ColorType::Rgb);
        encoder.set_depth(png::BitDepth::Eight);
        let mut writer = encoder
            .write_header()
            .map_err(|e| Error::file(path, format!("png encode: {e}")))?;
        let flat: Vec<u8> = self.pixels.iter().flat_map(|p| p.iter().copied()).collect();
        writer
            .write_image_data(&flat)
            .map_err(|e| Error::file(path, format!("png encode: {e}")))
    }

    pub fn read_ppm(path: &Path) -> Result<Self> {
        let mut bytes = Vec::new();
        File::open(path)
            .map_err(|e| Error::io(path, e))?
            .read_to_end(&mut bytes)
            .map_err(|e| Error::io(path, e))?;
        let mut pos = 0usize;
        let mut next_token = |bytes: &[u8]| -> Result<String> {
            // Skip whitespace and '#' comments between header fields.
            loop {
                while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
                    pos += 1;
                }
                if pos < bytes.len() && bytes[pos] == b'#' {
                    while pos < bytes.len() && bytes[pos] != b'\n' {
                        pos += 1;
                    }
                } else {
                    break;
                }
            }
            let start = pos;
            while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
                pos += 1;
            }
            if start == pos {
                return Err(Error::file(path, "truncated ppm header"));
            }
            Ok(String::from_utf8_lossy(&bytes[start..pos]).into_owned())
        };
        if next_token(&bytes)? != "P6" {
            return Err(Error::file(path, "not a binary ppm (P6) file"));
        }
        let parse = |tok: String| -> Result<u32> {
            tok.parse::<u32>()
                .map_err(|_| Error::file(path, format!("bad ppm header field '{tok}'")))
        };
        let w = parse(next_token(&bytes)?)?;
        let h = parse(next_token(&bytes)?)?;
        let maxval = parse(next_token(&bytes)?)?;
        if maxval != 255 {
            return Err(Error::file(path, format!("ppm maxval {maxval}, want 255")));
        }
        // Exactly one whitespace byte separates the header from raster data.
        pos += 1;
        let need = (w as usize) * (h as usize) * 3;
        if bytes.len() < pos + need {
            return Err(Error::file(path, "truncated ppm raster data"));
        }
        let pixels = bytes[pos..pos + need]
            .chunks_exact(3)
            .map(|c| [c[0], c[1], c[2]])
            .collect();
        Self::new(w, h, pixels)
    }

    pub fn write_ppm(&self, path: &Path) -> Result<()> {
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = BufWriter::new(file);
        let hdr = format!("P6\n{} {}\n255\n", self.width, self.height);
        w.write_all(hdr.as_bytes())
            .and_then(|_| {
                for p in &self.pixels {
                    w.write_all(p)?;
                }
                Ok(())
            })
            .map_err(|e| Error::io(path, e))
    }
}

/// Per-pixel class indices in `0..M-1`, with [`IGNORE`] marking pixels
/// excluded from training statistics and metrics.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelMap {
    width: u32,
    height: u32,
    labels: Vec<u8>,
}

impl LabelMap {
    pub fn new(width: u32, height: u32, labels: Vec<u8>, class_count: usize) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::invalid("label map dimensions must be at least 1x1"));
        }
        if labels.len() != (width as usize) * (height as usize) {
            return Err(Error::invalid(format!(
                "label buffer has {} entries, want {}",
                labels.len(),
                (width as usize) * (height as usize)
            )));
        }
        for (i, &l) in labels.iter().enumerate() {
            if l != IGNORE && (l as usize) >= class_count {
                return Err(Error::invalid(format!(
                    "label {l} at pixel {i} out of range for {class_count} classes"
                )));
            }
        }
        Ok(Self {
            width,
            height,
            labels,
        })
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    #[inline]
    pub fn get(&self, x: u32, y: u32) -> u8 {
        self.labels[(y as usize) * (self.width as usize) + x as usize]
    }

    pub fn labels(&self) -> &[u8] {
        &self.labels
    }

    /// Reads an 8-bit single-channel (grayscale or indexed) PNG of class
    /// indices and validates every value against `class_count`.
    pub fn read_png(path: &Path, class_count: usize) -> Result<Self> {
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        let mut decoder = png::Decoder::new(BufReader::new(file));
        // Keep palette indices as stored; labels are indices, not colors.
        decoder.set_transformations(png::Transformations::IDENTITY);
        let mut reader = decoder
            .read_info()
            .map_err(|e| Error::file(path, format!("png decode: {e}")))?;
        let mut buf = vec![0u8; reader.output_buffer_size().unwrap_or(0)];
        let info = reader
            .next_frame(&mut buf)
            .map_err(|e| Error::file(path, format!("png decode: {e}")))?;
        if info.bit_depth != png::BitDepth::Eight {
            return Err(Error::file(
                path,
                format!("label png must be 8-bit, found {:?}", info.bit_depth),
            ));
        }
        if !matches!(
            info.color_type,
            png::ColorType::Grayscale | png::ColorType::Indexed
        ) {
            return Err(Error::file(
                path,
                format!(
                    "label png must be single-channel (grayscale or indexed), found {:?}",
                    info.color_type
                ),
            ));
        }
        let labels = buf[..info.buffer_size()].to_vec();
        for (i, &l) in labels.iter().enumerate() {
            if l != IGNORE && (l as usize) >= class_count {
                return Err(Error::file(
                    path,
                    format!("label value {l} at pixel {i} out of range for {class_count} classes"),
                ));
            }
        }
        LabelMap::new(info.width, info.height, labels, class_count)
    }

    /// Writes the map as an 8-bit grayscale PNG of class indices.
    pub fn write_png(&self, path: &Path) -> Result<()> {
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut encoder = png::Encoder::new(BufWriter::new(file), self.width, self.height);
        encoder.set_color(png::ColorType::Grayscale);
        encoder.set_depth(png::BitDepth::Eight);
        let mut writer = encoder
            .write_header()
            .map_err(|e| Error::file(path, format!("png encode: {e}")))?;
        writer
            .write_image_data(&self.labels)
            .map_err(|e| Error::file(path, format!("png encode: {e}")))
    }
}

/// Writes per-pixel u16 values (superpixel ids) as a 16-bit grayscale PNG.
pub fn write_id_png(path: &Path, width: u32, height: u32, ids: &[u16]) -> Result<()> {
    if ids.len() != (width as usize) * (height as usize) {
        return Err(Error::invalid("id buffer does not match dimensions"));
    }
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut encoder = png::Encoder::new(BufWriter::new(file), width, height);
    encoder.set_color(png::ColorType::Grayscale);
    encoder.set_depth(png::BitDepth::Sixteen);
    let mut writer = encoder
        .write_header()
        .map_err(|e| Error::file(path, format!("png encode: {e}")))?;
    let mut bytes = Vec::with_capacity(ids.len() * 2);
    for id in ids {
        bytes.extend_from_slice(&id.to_be_bytes());
    }
    writer
        .write_image_data(&bytes)
        .map_err(|e| Error::file(path, format!("png encode: {e}")))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_degenerate_dimensions() {
        assert!(RasterImage::new(0, 1, vec![]).is_err());
        assert!(RasterImage::new(2, 2, vec![[0; 3]; 3]).is_err());
        assert!(RasterImage::new(1, 1, vec![[7, 8, 9]]).is_ok());
    }

    #[test]
    fn label_map_validates_values() {
        assert!(LabelMap::new(2, 1, vec![0, 5], 3).is_err());
        assert!(LabelMap::new(2, 1, vec![0, IGNORE], 3).is_ok());
    }

    #[test]
    fn png_round_trip() {
        let dir = std::env::temp_dir().join("ctxparse_img_test");
        std::fs::create_dir_all(&dir).unwrap();
        let img = RasterImage::from_fn(5, 3, |x, y| [x as u8 * 40, y as u8 * 80, 7]).unwrap();
        let p = dir.join("rt.png");
        img.write_png(&p).unwrap();
        assert_eq!(RasterImage::read_png(&p).unwrap(), img);

        let lm = LabelMap::new(4, 2, vec![0, 1, 2, IGNORE, 1, 1, 0, 2], 3).unwrap();
        let lp = dir.join("rt_labels.png");
        lm.write_png(&lp).unwrap();
        assert_eq!(LabelMap::read_png(&lp, 3).unwrap(), lm);
    }

    #[test]
    fn ppm_round_trip_and_comments() {
        let dir = std::env::temp_dir().join("ctxparse_ppm_test");
        std::fs::create_dir_all(&dir).unwrap();
        let img = RasterImage::from_fn(3, 2, |x, y| [x as u8, y as u8, 200]).unwrap();
        let p = dir.join("rt.ppm");
        img.write_ppm(&p).unwrap();
        assert_eq!(RasterImage::read_ppm(&p).unwrap(), img);

        // Header comments are legal in PPM.
        let commented = dir.join("c.ppm");
        let mut bytes = b"P6\n# a comment\n2 1\n255\n".to_vec();
        bytes.extend_from_slice(&[1, 2, 3, 4, 5, 6]);
        std::fs::write(&commented, &bytes).unwrap();
        let img = RasterImage::read_ppm(&commented).unwrap();
        assert_eq!(img.get(1, 0), [4, 5, 6]);
    }

    #[test]
    fn label_png_rejects_out_of_range_values() {
        let dir = std::env::temp_dir().join("ctxparse_lbl_test");
        std::fs::create_dir_all(&dir).unwrap();
        let lm = LabelMap::new(2, 1, vec![0, 6], 7).unwrap();
        let p = dir.join("bad.png");
        lm.write_png(&p).unwrap();
        let err = LabelMap::read_png(&p, 3).unwrap_err().to_string();
        assert!(err.contains("6"), "error should name the bad value: {err}");
        assert!(err.contains("bad.png"), "error should name the file: {err}");
    }
}
