//! Measurement operators.
//!
//! All operators index pixels through the column-major vector `vec(X)`
//! (index `col * rows + row`). Random draws use ChaCha8 seeded from a
//! 64-bit seed, so masks and matrices are identical across platforms.

use std::fmt;
use std::io::Write as _;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::image::Image;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum MatrixKind {
    Pci,
    Gaussian,
    Bernoulli,
}

impl MatrixKind {
    pub fn name(self) -> &'static str {
        match self {
            Self::Pci => "pci",
            Self::Gaussian => "gaussian",
            Self::Bernoulli => "bernoulli",
        }
    }
}

impl fmt::Display for MatrixKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for MatrixKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "pci" => Ok(Self::Pci),
            "gaussian" => Ok(Self::Gaussian),
            "bernoulli" => Ok(Self::Bernoulli),
            other => Err(Error::InvalidParameter(format!("unknown matrix kind {other:?}"))),
        }
    }
}

fn check_ratio(ratio: f64) -> Result<()> {
    if !(ratio > 0.0 && ratio <= 1.0) {
        return Err(Error::InvalidParameter(format!("ratio {ratio} outside (0, 1]")));
    }
    Ok(())
}

/// `M = round(ratio * N)`.
pub fn measurement_count(ratio: f64, n: usize) -> usize {
    (ratio * n as f64).round() as usize
}

/// Random pixel subset: the rows of the identity kept by the sampler.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SampleMask {
    shape: (usize, usize),
    omega: Vec<usize>,
    seed: u64,
}

impl SampleMask {
    /// Indices must be distinct and below `m * n`; they are sorted here.
    pub fn new(shape: (usize, usize), mut omega: Vec<usize>, seed: u64) -> Result<Self> {
        let n = shape.0 * shape.1;
        omega.sort_unstable();
        if omega.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::InvalidParameter("mask indices must be distinct".into()));
        }
        if let Some(&last) = omega.last() {
            if last >= n {
                return Err(Error::InvalidParameter(format!(
                    "mask index {last} out of range for {n} pixels"
                )));
            }
        }
        Ok(Self { shape, omega, seed })
    }

    pub fn full(shape: (usize, usize)) -> Self {
        Self {
            shape,
            omega: (0..shape.0 * shape.1).collect(),
            seed: 0,
        }
    }

    pub fn shape(&self) -> (usize, usize) {
        self.shape
    }

    pub fn omega(&self) -> &[usize] {
        &self.omega
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn len(&self) -> usize {
        self.omega.len()
    }

    pub fn is_empty(&self) -> bool {
        self.omega.is_empty()
    }

    pub fn ratio(&self) -> f64 {
        self.omega.len() as f64 / (self.shape.0 * self.shape.1) as f64
    }

    /// Row-major pixel offsets of the sampled positions, in `omega` order.
    pub fn row_major_offsets(&self) -> Vec<usize> {
        let (m, n) = self.shape;
        self.omega.iter().map(|&i| (i % m) * n + i / m).collect()
    }

    pub fn to_text(&self) -> String {
        let mut s = format!("PCIMASK {} {} {}\n", self.shape.0, self.shape.1, self.omega.len());
        for i in &self.omega {
            s.push_str(&i.to_string());
            s.push('\n');
        }
        s
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut lines = text.lines();
        let head = lines.next().unwrap_or_default();
        let f: Vec<&str> = head.split_whitespace().collect();
        if f.len() != 4 || f[0] != "PCIMASK" {
            return Err(Error::Malformed(format!("bad mask header {head:?}")));
        }
        let num = |s: &str| -> Result<usize> {
            s.trim()
                .parse()
                .map_err(|_| Error::Malformed(format!("bad number {s:?} in mask file")))
        };
        let shape = (num(f[1])?, num(f[2])?);
        let count = num(f[3])?;
        let omega = lines
            .filter(|l| !l.trim().is_empty())
            .map(num)
            .collect::<Result<Vec<_>>>()?;
        if omega.len() != count {
            return Err(Error::LengthMismatch {
                expected: count,
                got: omega.len(),
            });
        }
        if omega.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Malformed("mask indices must be strictly increasing".into()));
        }
        Self::new(shape, omega, 0)
    }
}

/// Uniform draw of `round(ratio * N)` pixels without replacement.
pub fn make_pci(shape: (usize, usize), ratio: f64, seed: u64) -> Result<SampleMask> {
    check_ratio(ratio)?;
    let n = shape.0 * shape.1;
    let m = measurement_count(ratio, n);
    if m == 0 {
        return Err(Error::InvalidParameter(format!(
            "ratio {ratio} gives no measurements for {n} pixels"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let omega = rand::seq::index::sample(&mut rng, n, m).into_vec();
    let mut mask = SampleMask::new(shape, omega, seed)?;
    mask.seed = seed;
    Ok(mask)
}

fn check_shape(expected: (usize, usize), got: (usize, usize)) -> Result<()> {
    if expected != got {
        return Err(Error::ShapeMismatch { expected, got });
    }
    Ok(())
}

/// `y[i] = vec(img)[omega[i]]`.
pub fn sense_pci(img: &Image, mask: &SampleMask) -> Result<Vec<f64>> {
    check_shape(mask.shape, img.shape())?;
    let v = img.vec();
    Ok(mask.omega.iter().map(|&i| v[i]).collect())
}

/// Scatter into a zero image; the transpose of [`sense_pci`].
pub fn embed_zeros(y: &[f64], mask: &SampleMask) -> Result<Image> {
    if y.len() != mask.len() {
        return Err(Error::LengthMismatch {
            expected: mask.len(),
            got: y.len(),
        });
    }
    let (m, n) = mask.shape;
    let mut v = vec![0.0; m * n];
    for (&i, &val) in mask.omega.iter().zip(y) {
        v[i] = val;
    }
    Image::from_vec(m, n, &v)
}

/// Block sensing with one shared `Mb x B^2` matrix applied to every
/// `B x B` block. Blocks are visited column-major and each block is
/// vectorized column-major.
#[derive(Clone, Debug, PartialEq)]
pub struct DenseSensing {
    kind: MatrixKind,
    shape: (usize, usize),
    block: usize,
    ratio: f64,
    seed: u64,
    rows: usize,
    /// row-major `rows x block^2`
    matrix: Vec<f64>,
}

pub fn make_dense(
    kind: MatrixKind,
    shape: (usize, usize),
    ratio: f64,
    block: usize,
    seed: u64,
) -> Result<DenseSensing> {
    check_ratio(ratio)?;
    if kind == MatrixKind::Pci {
        return Err(Error::InvalidParameter("pci is not a dense matrix kind".into()));
    }
    if block == 0 || !shape.0.is_multiple_of(block) || !shape.1.is_multiple_of(block) {
        return Err(Error::InvalidParameter(format!(
            "block {block} does not divide a {}x{} image",
            shape.0, shape.1
        )));
    }
    let b2 = block * block;
    let rows = measurement_count(ratio, b2);
    if rows == 0 {
        return Err(Error::InvalidParameter(format!(
            "ratio {ratio} gives no measurements per {block}x{block} block"
        )));
    }
    let scale = 1.0 / (b2 as f64 * ratio).sqrt();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let matrix = (0..rows * b2)
        .map(|_| match kind {
            MatrixKind::Gaussian => rng.sample::<f64, _>(StandardNormal) * scale,
            _ => {
                if rng.random::<bool>() {
                    scale
                } else {
                    -scale
                }
            }
        })
        .collect();
    Ok(DenseSensing {
        kind,
        shape,
        block,
        ratio,
        seed,
        rows,
        matrix,
    })
}

impl DenseSensing {
    pub fn kind(&self) -> MatrixKind {
        self.kind
    }

    pub fn shape(&self) -> (usize, usize) {
        self.shape
    }

    pub fn block(&self) -> usize {
        self.block
    }

    pub fn ratio(&self) -> f64 {
        self.ratio
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Measurements per block.
    pub fn block_rows(&self) -> usize {
        self.rows
    }

    pub fn matrix(&self) -> &[f64] {
        &self.matrix
    }

    pub fn len(&self) -> usize {
        self.rows * self.block_count()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn block_count(&self) -> usize {
        (self.shape.0 / self.block) * (self.shape.1 / self.block)
    }

    /// Replaces the shared block matrix (row-major, `rows x block^2`).
    pub fn set_matrix(&mut self, rows: usize, matrix: Vec<f64>) -> Result<()> {
        if rows == 0 || matrix.len() != rows * self.block * self.block {
            return Err(Error::LengthMismatch {
                expected: rows * self.block * self.block,
                got: matrix.len(),
            });
        }
        self.rows = rows;
        self.matrix = matrix;
        Ok(())
    }

    /// Top-left corner of block `b` in column-major block order.
    fn block_origin(&self, b: usize) -> (usize, usize) {
        let per_col = self.shape.0 / self.block;
        ((b % per_col) * self.block, (b / per_col) * self.block)
    }

    /// Forward map on row-major pixels.
    pub fn apply(&self, pixels: &[f64], out: &mut [f64]) {
        let (bsz, n) = (self.block, self.shape.1);
        let b2 = bsz * bsz;
        let mut v = vec![0.0; b2];
        for b in 0..self.block_count() {
            let (r0, c0) = self.block_origin(b);
            for c in 0..bsz {
                for r in 0..bsz {
                    v[c * bsz + r] = pixels[(r0 + r) * n + c0 + c];
                }
            }
            let y = &mut out[b * self.rows..(b + 1) * self.rows];
            for (i, yi) in y.iter_mut().enumerate() {
                let row = &self.matrix[i * b2..(i + 1) * b2];
                *yi = row.iter().zip(&v).map(|(a, x)| a * x).sum();
            }
        }
    }

    /// Transpose map into row-major pixels (overwrites `pixels`).
    pub fn apply_adjoint(&self, y: &[f64], pixels: &mut [f64]) {
        let (bsz, n) = (self.block, self.shape.1);
        let b2 = bsz * bsz;
        let mut v = vec![0.0; b2];
        for b in 0..self.block_count() {
            v.fill(0.0);
            let yb = &y[b * self.rows..(b + 1) * self.rows];
            for (i, &yi) in yb.iter().enumerate() {
                let row = &self.matrix[i * b2..(i + 1) * b2];
                for (vj, a) in v.iter_mut().zip(row) {
                    *vj += a * yi;
                }
            }
            let (r0, c0) = self.block_origin(b);
            for c in 0..bsz {
                for r in 0..bsz {
                    pixels[(r0 + r) * n + c0 + c] = v[c * bsz + r];
                }
            }
        }
    }
}

pub fn sense_dense(img: &Image, d: &DenseSensing) -> Result<Vec<f64>> {
    check_shape(d.shape, img.shape())?;
    let mut y = vec![0.0; d.len()];
    d.apply(img.pixels(), &mut y);
    Ok(y)
}

/// Transpose of [`sense_dense`].
pub fn dense_adjoint(y: &[f64], d: &DenseSensing) -> Result<Image> {
    if y.len() != d.len() {
        return Err(Error::LengthMismatch {
            expected: d.len(),
            got: y.len(),
        });
    }
    let mut img = Image::zeros(d.shape.0, d.shape.1);
    d.apply_adjoint(y, img.pixels_mut());
    Ok(img)
}

/// Either measurement operator.
#[derive(Clone, Debug, PartialEq)]
pub enum Sensing {
    Pci(SampleMask),
    Dense(DenseSensing),
}

impl Sensing {
    pub fn kind(&self) -> MatrixKind {
        match self {
            Sensing::Pci(_) => MatrixKind::Pci,
            Sensing::Dense(d) => d.kind,
        }
    }

    pub fn shape(&self) -> (usize, usize) {
        match self {
            Sensing::Pci(m) => m.shape,
            Sensing::Dense(d) => d.shape,
        }
    }

    /// Number of measurements.
    pub fn len(&self) -> usize {
        match self {
            Sensing::Pci(m) => m.len(),
            Sensing::Dense(d) => d.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn sense(&self, img: &Image) -> Result<Vec<f64>> {
        match self {
            Sensing::Pci(m) => sense_pci(img, m),
            Sensing::Dense(d) => sense_dense(img, d),
        }
    }

    pub fn seed(&self) -> u64 {
        match self {
            Sensing::Pci(m) => m.seed(),
            Sensing::Dense(d) => d.seed(),
        }
    }

    /// Measurements per pixel.
    pub fn ratio(&self) -> f64 {
        let (m, n) = self.shape();
        self.len() as f64 / (m * n) as f64
    }

    pub fn adjoint(&self, y: &[f64]) -> Result<Image> {
        match self {
            Sensing::Pci(m) => embed_zeros(y, m),
            Sensing::Dense(d) => dense_adjoint(y, d),
        }
    }
}

/// Builds the operator for `kind`; `block` is ignored for PCI.
pub fn make_sensing(kind: MatrixKind, shape: (usize, usize), ratio: f64, block: usize, seed: u64) -> Result<Sensing> {
    Ok(match kind {
        MatrixKind::Pci => Sensing::Pci(make_pci(shape, ratio, seed)?),
        k => Sensing::Dense(make_dense(k, shape, ratio, block, seed)?),
    })
}

/// Measurement vector plus the parameters needed to rebuild its operator.
#[derive(Clone, Debug, PartialEq)]
pub struct Measurements {
    pub shape: (usize, usize),
    pub ratio: f64,
    pub seed: u64,
    pub kind: MatrixKind,
    /// Dense block edge; 0 for PCI.
    pub block: usize,
    pub values: Vec<f64>,
}

impl Measurements {
    /// `CSMEAS m n ratio seed kind block count` followed by little-endian
    /// f64 values.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(64 + 8 * self.values.len());
        let _ = writeln!(
            out,
            "CSMEAS {} {} {} {} {} {} {}",
            self.shape.0,
            self.shape.1,
            self.ratio,
            self.seed,
            self.kind,
            self.block,
            self.values.len()
        );
        for v in &self.values {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let end = bytes
            .iter()
            .position(|&b| b == b'\n')
            .ok_or_else(|| Error::Malformed("missing measurement header".into()))?;
        let head = std::str::from_utf8(&bytes[..end])
            .map_err(|_| Error::Malformed("measurement header is not text".into()))?;
        let f: Vec<&str> = head.split_whitespace().collect();
        if f.len() != 8 || f[0] != "CSMEAS" {
            return Err(Error::Malformed(format!("bad measurement header {head:?}")));
        }
        let bad = |what: &str| Error::Malformed(format!("bad {what} in measurement header"));
        let m: usize = f[1].parse().map_err(|_| bad("rows"))?;
        let n: usize = f[2].parse().map_err(|_| bad("cols"))?;
        let ratio: f64 = f[3].parse().map_err(|_| bad("ratio"))?;
        let seed: u64 = f[4].parse().map_err(|_| bad("seed"))?;
        let kind: MatrixKind = f[5].parse()?;
        let block: usize = f[6].parse().map_err(|_| bad("block"))?;
        let count: usize = f[7].parse().map_err(|_| bad("count"))?;
        let body = &bytes[end + 1..];
        if body.len() != count * 8 {
            return Err(Error::LengthMismatch {
                expected: count * 8,
                got: body.len(),
            });
        }
        let values: Vec<f64> = body
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("measurements"));
        }
        Ok(Self {
            shape: (m, n),
            ratio,
            seed,
            kind,
            block,
            values,
        })
    }
}
