use std::fmt;

use crate::error::{Error, Result};
use crate::image::Image;

pub const PEAK: f64 = 255.0;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct QualityReport {
    /// `f64::INFINITY` when the images are identical.
    pub psnr_db: f64,
    pub mse: f64,
    pub peak: f64,
}

impl QualityReport {
    /// Two decimals, or `inf`.
    pub fn psnr_field(&self) -> String {
        format_psnr(self.psnr_db)
    }
}

impl fmt::Display for QualityReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "psnr {} dB (mse {:.4})", self.psnr_field(), self.mse)
    }
}

pub fn format_psnr(db: f64) -> String {
    if db.is_infinite() && db > 0.0 {
        "inf".to_string()
    } else {
        format!("{db:.2}")
    }
}

/// Mean squared error over real-valued pixels; no clamping.
pub fn mse(reference: &Image, other: &Image) -> Result<f64> {
    if reference.shape() != other.shape() {
        return Err(Error::ShapeMismatch {
            expected: reference.shape(),
            got: other.shape(),
        });
    }
    let sum: f64 = reference
        .pixels()
        .iter()
        .zip(other.pixels())
        .map(|(a, b)| (a - b) * (a - b))
        .sum();
    Ok(sum / reference.len().max(1) as f64)
}

pub fn psnr(reference: &Image, reconstructed: &Image) -> Result<QualityReport> {
    let mse = mse(reference, reconstructed)?;
    let psnr_db = if mse == 0.0 {
        f64::INFINITY
    } else {
        10.0 * (PEAK * PEAK / mse).log10()
    };
    Ok(QualityReport {
        psnr_db,
        mse,
        peak: PEAK,
    })
}
