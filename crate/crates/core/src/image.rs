//! Grayscale image container, 8-bit file I/O and 1-D scan orders.
//!
//! Pixels are stored row-major. The flat "vec" view used by the sensing
//! operators is column-major, i.e. index `col * rows + row`.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct Image {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Image {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    /// Builds an image from row-major pixel values.
    pub fn from_row_major(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::LengthMismatch {
                expected: rows * cols,
                got: data.len(),
            });
        }
        Ok(Self { rows, cols, data })
    }

    /// Builds an image from a column-major vector (the inverse of [`Image::vec`]).
    pub fn from_vec(rows: usize, cols: usize, v: &[f64]) -> Result<Self> {
        if v.len() != rows * cols {
            return Err(Error::LengthMismatch {
                expected: rows * cols,
                got: v.len(),
            });
        }
        let mut img = Self::zeros(rows, cols);
        for c in 0..cols {
            for r in 0..rows {
                img.data[r * cols + c] = v[c * rows + r];
            }
        }
        Ok(img)
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for c in 0..cols {
                data.push(f(r, c));
            }
        }
        Self { rows, cols, data }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        self.data[r * self.cols + c] = v;
    }

    /// Row-major pixel slice.
    pub fn pixels(&self) -> &[f64] {
        &self.data
    }

    pub fn pixels_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_pixels(self) -> Vec<f64> {
        self.data
    }

    /// Column-major flattening.
    pub fn vec(&self) -> Vec<f64> {
        let mut v = vec![0.0; self.data.len()];
        for c in 0..self.cols {
            for r in 0..self.rows {
                v[c * self.rows + r] = self.data[r * self.cols + c];
            }
        }
        v
    }

    /// Center crop to at most `rows x cols`.
    pub fn center_crop(&self, rows: usize, cols: usize) -> Image {
        let rows = rows.min(self.rows);
        let cols = cols.min(self.cols);
        let r0 = (self.rows - rows) / 2;
        let c0 = (self.cols - cols) / 2;
        Image::from_fn(rows, cols, |r, c| self.get(r0 + r, c0 + c))
    }

    /// 8-bit encoding used on save: clamp to [0, 255], then round half up.
    pub fn quantize(v: f64) -> u8 {
        if v.is_nan() {
            return 0;
        }
        (v.clamp(0.0, 255.0) + 0.5).floor() as u8
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        self.data.iter().map(|&v| Self::quantize(v)).collect()
    }
}

/// Loads a binary PGM (P5) or, with the `png` feature, an 8-bit grayscale PNG.
pub fn load_image(path: impl AsRef<Path>) -> Result<Image> {
    let path = path.as_ref();
    let bytes = fs::read(path)?;
    if bytes.starts_with(b"\x89PNG") {
        return decode_png(&bytes);
    }
    decode_pgm(&bytes)
}

/// Saves as PNG when the extension is `.png`, otherwise as binary PGM.
pub fn save_image(img: &Image, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let is_png = path
        .extension()
        .and_then(|e| e.to_str())
        .is_some_and(|e| e.eq_ignore_ascii_case("png"));
    let bytes = if is_png { encode_png(img)? } else { encode_pgm(img) };
    let mut w = BufWriter::new(fs::File::create(path)?);
    w.write_all(&bytes)?;
    w.flush()?;
    Ok(())
}

pub fn encode_pgm(img: &Image) -> Vec<u8> {
    let mut out = format!("P5\n{} {}\n255\n", img.cols, img.rows).into_bytes();
    out.extend(img.to_bytes());
    out
}

pub fn decode_pgm(bytes: &[u8]) -> Result<Image> {
    let mut pos = 0usize;
    let mut header = [0usize; 3];
    let magic = next_token(bytes, &mut pos).ok_or_else(|| Error::Malformed("empty file".into()))?;
    if magic != b"P5" {
        return Err(Error::UnsupportedFormat(format!(
            "expected binary PGM (P5), found {:?}",
            String::from_utf8_lossy(magic)
        )));
    }
    for slot in header.iter_mut() {
        let tok = next_token(bytes, &mut pos).ok_or_else(|| Error::Malformed("truncated PGM header".into()))?;
        *slot = std::str::from_utf8(tok)
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| Error::Malformed("bad PGM header field".into()))?;
    }
    let [cols, rows, maxval] = header;
    if maxval == 0 || maxval > 255 {
        return Err(Error::UnsupportedFormat(format!(
            "PGM maxval {maxval}; only 8-bit images are supported"
        )));
    }
    if rows == 0 || cols == 0 {
        return Err(Error::Malformed("zero-sized PGM".into()));
    }
    // exactly one whitespace byte separates the header from the raster
    pos += 1;
    let n = rows * cols;
    if bytes.len() < pos + n {
        return Err(Error::Malformed("truncated PGM raster".into()));
    }
    let data = bytes[pos..pos + n].iter().map(|&b| f64::from(b)).collect();
    Image::from_row_major(rows, cols, data)
}

fn next_token<'a>(bytes: &'a [u8], pos: &mut usize) -> Option<&'a [u8]> {
    loop {
        while *pos < bytes.len() && bytes[*pos].is_ascii_whitespace() {
            *pos += 1;
        }
        if *pos < bytes.len() && bytes[*pos] == b'#' {
            while *pos < bytes.len() && bytes[*pos] != b'\n' {
                *pos += 1;
            }
            continue;
        }
        break;
    }
    let start = *pos;
    while *pos < bytes.len() && !bytes[*pos].is_ascii_whitespace() {
        *pos += 1;
    }
    (start < *pos).then(|| &bytes[start..*pos])
}

#[cfg(feature = "png")]
fn decode_png(bytes: &[u8]) -> Result<Image> {
    let decoder = png::Decoder::new(std::io::Cursor::new(bytes));
    let mut reader = decoder.read_info().map_err(|e| Error::Malformed(format!("png: {e}")))?;
    let info = reader.info();
    if info.color_type != png::ColorType::Grayscale || info.bit_depth != png::BitDepth::Eight {
        return Err(Error::UnsupportedFormat(format!(
            "png {:?} at {:?}; only 8-bit grayscale is supported",
            info.color_type, info.bit_depth
        )));
    }
    let (cols, rows) = (info.width as usize, info.height as usize);
    let mut buf = vec![0u8; reader.output_buffer_size().unwrap_or(rows * cols)];
    let frame = reader
        .next_frame(&mut buf)
        .map_err(|e| Error::Malformed(format!("png: {e}")))?;
    let stride = frame.line_size;
    let mut data = Vec::with_capacity(rows * cols);
    for r in 0..rows {
        data.extend(buf[r * stride..r * stride + cols].iter().map(|&b| f64::from(b)));
    }
    Image::from_row_major(rows, cols, data)
}

#[cfg(not(feature = "png"))]
fn decode_png(_bytes: &[u8]) -> Result<Image> {
    Err(Error::UnsupportedFormat("built without png support".into()))
}

#[cfg(feature = "png")]
fn encode_png(img: &Image) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    {
        let mut enc = png::Encoder::new(&mut out, img.cols as u32, img.rows as u32);
        enc.set_color(png::ColorType::Grayscale);
        enc.set_depth(png::BitDepth::Eight);
        let mut w = enc.write_header().map_err(|e| Error::Malformed(format!("png: {e}")))?;
        w.write_image_data(&img.to_bytes())
            .map_err(|e| Error::Malformed(format!("png: {e}")))?;
    }
    Ok(out)
}

#[cfg(not(feature = "png"))]
fn encode_png(_img: &Image) -> Result<Vec<u8>> {
    Err(Error::UnsupportedFormat("built without png support".into()))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum ScanAxis {
    /// Concatenate columns (each traversed top to bottom).
    ColumnWise,
    /// Concatenate rows (each traversed left to right).
    RowWise,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum ScanStrategy {
    /// Lines stacked in natural order.
    Raster,
    /// Every second line (0-based odd indices) traversed in reverse, so
    /// consecutive samples are always 4-neighbours.
    Serpentine,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ScanSignal {
    pub values: Vec<f64>,
    pub shape: (usize, usize),
    pub axis: ScanAxis,
    pub strategy: ScanStrategy,
}

/// Pixel coordinates visited by a scan, in order.
pub fn scan_order(
    shape: (usize, usize),
    axis: ScanAxis,
    strategy: ScanStrategy,
) -> impl Iterator<Item = (usize, usize)> {
    let (rows, cols) = shape;
    let (lines, len) = match axis {
        ScanAxis::ColumnWise => (cols, rows),
        ScanAxis::RowWise => (rows, cols),
    };
    (0..lines).flat_map(move |line| {
        let reversed = strategy == ScanStrategy::Serpentine && line % 2 == 1;
        (0..len).map(move |i| {
            let along = if reversed { len - 1 - i } else { i };
            match axis {
                ScanAxis::ColumnWise => (along, line),
                ScanAxis::RowWise => (line, along),
            }
        })
    })
}

pub fn scan(img: &Image, axis: ScanAxis, strategy: ScanStrategy) -> ScanSignal {
    let values = scan_order(img.shape(), axis, strategy)
        .map(|(r, c)| img.get(r, c))
        .collect();
    ScanSignal {
        values,
        shape: img.shape(),
        axis,
        strategy,
    }
}

pub fn unscan(sig: &ScanSignal) -> Result<Image> {
    let (rows, cols) = sig.shape;
    if sig.values.len() != rows * cols {
        return Err(Error::LengthMismatch {
            expected: rows * cols,
            got: sig.values.len(),
        });
    }
    let mut img = Image::zeros(rows, cols);
    for ((r, c), &v) in scan_order(sig.shape, sig.axis, sig.strategy).zip(&sig.values) {
        img.set(r, c, v);
    }
    Ok(img)
}
