//! Browser bindings. Each exported function wraps a plain Rust function of
//! the same name with a `_impl` suffix, which the native tests call.

use liftcs::matched::{bior53_plan, reconstruct_with, run_pipeline, DesignConfig};
use liftcs::metrics::psnr;
use liftcs::sensing::embed_zeros;
use liftcs::{
    compose_filterbank, design_matched, make_sensing, DecompositionPlan, Image, LRule, LiftingChain, MatrixKind,
    SolverConfig, StandardWavelet, Strategy,
};
use wasm_bindgen::prelude::*;

#[wasm_bindgen]
#[derive(Clone, Debug)]
pub struct Filters {
    h0: Vec<f64>,
    h1: Vec<f64>,
    h0_start: i32,
    h1_start: i32,
    csv: String,
}

#[wasm_bindgen]
impl Filters {
    #[wasm_bindgen(getter)]
    pub fn h0(&self) -> Vec<f64> {
        self.h0.clone()
    }

    #[wasm_bindgen(getter)]
    pub fn h1(&self) -> Vec<f64> {
        self.h1.clone()
    }

    #[wasm_bindgen(getter)]
    pub fn h0_start(&self) -> i32 {
        self.h0_start
    }

    #[wasm_bindgen(getter)]
    pub fn h1_start(&self) -> i32 {
        self.h1_start
    }

    /// All four filters, one CSV row each.
    #[wasm_bindgen(getter)]
    pub fn csv(&self) -> String {
        self.csv.clone()
    }
}

pub fn compose_impl(t: &[f64], s: &[f64]) -> Result<Filters, String> {
    let chain = LiftingChain::single(t.to_vec(), s.to_vec()).map_err(|e| e.to_string())?;
    let fb = compose_filterbank(&chain);
    let (h0, h1) = (fb.h0.trimmed(), fb.h1.trimmed());
    Ok(Filters {
        h0_start: h0.start as i32,
        h1_start: h1.start as i32,
        h0: h0.taps,
        h1: h1.taps,
        csv: fb.to_csv(),
    })
}

/// Analysis filters of a single predict/update pair.
#[wasm_bindgen]
pub fn compose(t: &[f64], s: &[f64]) -> Result<Filters, JsError> {
    compose_impl(t, s).map_err(|e| JsError::new(&e))
}

fn image(pixels: &[f64], rows: usize, cols: usize) -> Result<Image, String> {
    Image::from_row_major(rows, cols, pixels.to_vec()).map_err(|e| e.to_string())
}

/// Matched design summary of a fully known image.
pub fn design_impl(pixels: &[f64], rows: usize, cols: usize) -> Result<String, String> {
    let img = image(pixels, rows, cols)?;
    let d = design_matched(&img, &DesignConfig::default()).map_err(|e| e.to_string())?;
    Ok(d.summary())
}

#[wasm_bindgen]
pub fn design(pixels: &[f64], rows: usize, cols: usize) -> Result<String, JsError> {
    design_impl(pixels, rows, cols).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen]
#[derive(Clone, Debug)]
pub struct Reconstruction {
    pixels: Vec<f64>,
    zero_filled: Vec<f64>,
    psnr: f64,
    zero_filled_psnr: f64,
    iterations: usize,
    converged: bool,
    summary: String,
}

#[wasm_bindgen]
impl Reconstruction {
    /// Row-major reconstruction.
    #[wasm_bindgen(getter)]
    pub fn pixels(&self) -> Vec<f64> {
        self.pixels.clone()
    }

    /// Row-major sampled pixels with zeros elsewhere.
    #[wasm_bindgen(getter)]
    pub fn zero_filled(&self) -> Vec<f64> {
        self.zero_filled.clone()
    }

    #[wasm_bindgen(getter)]
    pub fn psnr(&self) -> f64 {
        self.psnr
    }

    #[wasm_bindgen(getter)]
    pub fn zero_filled_psnr(&self) -> f64 {
        self.zero_filled_psnr
    }

    #[wasm_bindgen(getter)]
    pub fn iterations(&self) -> usize {
        self.iterations
    }

    #[wasm_bindgen(getter)]
    pub fn converged(&self) -> bool {
        self.converged
    }

    /// Design summary for the matched wavelet, empty otherwise.
    #[wasm_bindgen(getter)]
    pub fn summary(&self) -> String {
        self.summary.clone()
    }
}

pub fn reconstruct_impl(
    pixels: &[f64],
    rows: usize,
    cols: usize,
    ratio: f64,
    seed: u64,
    wavelet: &str,
    strategy: &str,
) -> Result<Reconstruction, String> {
    let err = |e: liftcs::Error| e.to_string();
    let img = image(pixels, rows, cols)?;
    let strategy: Strategy = strategy.parse().map_err(err)?;
    let levels = DecompositionPlan::default_levels(img.shape()).min(3);
    let sensing = make_sensing(MatrixKind::Pci, img.shape(), ratio, 8, seed).map_err(err)?;
    let y = sensing.sense(&img).map_err(err)?;
    let liftcs::Sensing::Pci(mask) = &sensing else {
        unreachable!("pci sensing")
    };
    let zero = embed_zeros(&y, mask).map_err(err)?;
    let cfg = SolverConfig::default();
    let template = bior53_plan(strategy, levels, LRule::default());
    let (rec, rep, summary) = if wavelet.eq_ignore_ascii_case("matched") {
        let r = run_pipeline(&y, &sensing, &template, &DesignConfig::default(), &cfg).map_err(err)?;
        let summary = r.design.summary();
        (r.image, r.report, summary)
    } else {
        let w: StandardWavelet = wavelet.parse().map_err(err)?;
        let plan = DecompositionPlan::new(strategy, levels, w.chain());
        let (rec, rep) = reconstruct_with(&y, &sensing, &plan, &cfg).map_err(err)?;
        (rec, rep, String::new())
    };
    Ok(Reconstruction {
        psnr: psnr(&img, &rec).map_err(err)?.psnr_db,
        zero_filled_psnr: psnr(&img, &zero).map_err(err)?.psnr_db,
        pixels: rec.into_pixels(),
        zero_filled: zero.into_pixels(),
        iterations: rep.iterations,
        converged: rep.converged,
        summary,
    })
}

/// PCI sensing at `ratio` followed by basis-pursuit reconstruction with
/// `wavelet` (db2, db4, bior53 or matched).
#[wasm_bindgen]
pub fn reconstruct(
    pixels: &[f64],
    rows: usize,
    cols: usize,
    ratio: f64,
    seed: u64,
    wavelet: &str,
    strategy: &str,
) -> Result<Reconstruction, JsError> {
    reconstruct_impl(pixels, rows, cols, ratio, seed, wavelet, strategy).map_err(|e| JsError::new(&e))
}
