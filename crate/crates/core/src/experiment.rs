//! Factorial reconstruction sweeps.
//!
//! A sweep runs every `(image, ratio, matrix, wavelet)` cell for `trials`
//! repetitions, trial `i` drawing its operator with seed `seed + i`. Each
//! trial becomes one CSV row; each cell adds an aggregate row (`trial` =
//! `agg`) holding the means of its successful trials. Means and standard
//! deviations also go to a separate per-cell stats table.
//!
//! Aggregates are computed from the trial fields exactly as printed, so a
//! reader recomputing them from the CSV gets the same numbers.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::image::{load_image, Image};
use crate::matched::{reconstruct_with, run_pipeline, DesignConfig, DetailReference};
use crate::metrics::{format_psnr, psnr};
use crate::pyramid::{DecompositionPlan, LRule, Strategy};
use crate::sensing::{make_sensing, MatrixKind};
use crate::solver::SolverConfig;
use crate::wavelets::StandardWavelet;

pub const CSV_HEADER: &str = "image,ratio,matrix,wavelet,strategy,levels,trial,iterations,residual,seconds,psnr_db";

pub const STATS_HEADER: &str = "image,ratio,matrix,wavelet,strategy,levels,trials,failures,unconverged,\
psnr_mean,psnr_std,seconds_mean,seconds_std,iterations_mean,error";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum WaveletChoice {
    Standard(StandardWavelet),
    /// Coarse 5/3 estimate, matched design, final solve.
    Matched,
}

impl WaveletChoice {
    pub fn name(self) -> &'static str {
        match self {
            Self::Standard(w) => w.name(),
            Self::Matched => "matched",
        }
    }
}

impl fmt::Display for WaveletChoice {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for WaveletChoice {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s.eq_ignore_ascii_case("matched") {
            Ok(Self::Matched)
        } else {
            s.parse().map(Self::Standard)
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentConfig {
    pub images: Vec<PathBuf>,
    pub ratios: Vec<f64>,
    pub matrices: Vec<MatrixKind>,
    pub wavelets: Vec<WaveletChoice>,
    pub strategy: Strategy,
    pub levels: usize,
    pub l_rule: LRule,
    pub trials: usize,
    pub seed: u64,
    pub output: Option<PathBuf>,
    /// Dense sensing block edge.
    pub block: usize,
    /// Center crop to `crop x crop` before sensing; `None` keeps the full
    /// image.
    pub crop: Option<usize>,
    pub design: DesignConfig,
    pub solver: SolverConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            images: Vec::new(),
            ratios: vec![0.5],
            matrices: vec![MatrixKind::Pci],
            wavelets: vec![WaveletChoice::Standard(StandardWavelet::Bior53)],
            strategy: Strategy::LPyramid,
            levels: 3,
            l_rule: LRule::default(),
            trials: 10,
            seed: 0,
            output: None,
            block: 8,
            crop: Some(64),
            design: DesignConfig::default(),
            solver: SolverConfig::default(),
        }
    }
}

impl ExperimentConfig {
    /// Parses `key = value` lines. List keys (`image`, `ratio`, `matrix`,
    /// `wavelet`) may repeat or hold comma-separated values; a list given
    /// in the file replaces the default. `#` starts a comment. Relative
    /// image paths resolve against `base`.
    pub fn parse(text: &str, base: Option<&Path>) -> Result<Self> {
        let mut cfg = Self::default();
        let mut seen: Vec<&str> = Vec::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::Malformed(format!("line {}: expected key=value", lineno + 1)))?;
            let (key, value) = (key.trim(), value.trim());
            let err = |what: &str| Error::InvalidParameter(format!("line {}: bad {what} {value:?}", lineno + 1));
            let is_list = matches!(key, "image" | "ratio" | "matrix" | "wavelet");
            if is_list && !seen.contains(&key) {
                match key {
                    "image" => cfg.images.clear(),
                    "ratio" => cfg.ratios.clear(),
                    "matrix" => cfg.matrices.clear(),
                    _ => cfg.wavelets.clear(),
                }
            }
            let items = value.split(',').map(str::trim).filter(|s| !s.is_empty());
            match key {
                "image" => {
                    for item in items {
                        let p = PathBuf::from(item);
                        cfg.images.push(match base {
                            Some(b) if p.is_relative() => b.join(p),
                            _ => p,
                        });
                    }
                }
                "ratio" => {
                    for item in items {
                        cfg.ratios.push(item.parse().map_err(|_| err("ratio"))?);
                    }
                }
                "matrix" => {
                    for item in items {
                        cfg.matrices.push(item.parse()?);
                    }
                }
                "wavelet" => {
                    for item in items {
                        cfg.wavelets.push(item.parse()?);
                    }
                }
                "strategy" => cfg.strategy = value.parse()?,
                "levels" => cfg.levels = value.parse().map_err(|_| err("levels"))?,
                "l_rule" => cfg.l_rule = value.parse()?,
                "trials" => cfg.trials = value.parse().map_err(|_| err("trials"))?,
                "seed" => cfg.seed = value.parse().map_err(|_| err("seed"))?,
                "output" => cfg.output = Some(PathBuf::from(value)),
                "block" => cfg.block = value.parse().map_err(|_| err("block"))?,
                "crop" => {
                    cfg.crop = match value {
                        "none" | "0" => None,
                        v => Some(v.parse().map_err(|_| err("crop"))?),
                    }
                }
                "lt" => cfg.design.lt = value.parse().map_err(|_| err("lt"))?,
                "ls" => cfg.design.ls = value.parse().map_err(|_| err("ls"))?,
                "stages" => cfg.design.stages = value.parse().map_err(|_| err("stages"))?,
                "reference" => cfg.design.reference = value.parse::<DetailReference>()?,
                "max_iters" => cfg.solver.max_iters = value.parse().map_err(|_| err("max_iters"))?,
                "penalty" => cfg.solver.penalty = value.parse().map_err(|_| err("penalty"))?,
                "feas_tol" => cfg.solver.feas_tol = value.parse().map_err(|_| err("feas_tol"))?,
                _ => {
                    return Err(Error::InvalidParameter(format!(
                        "line {}: unknown key {key:?}",
                        lineno + 1
                    )))
                }
            }
            if !seen.contains(&key) {
                seen.push(key);
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidParameter(m.to_string()));
        if self.images.is_empty() || self.ratios.is_empty() || self.matrices.is_empty() || self.wavelets.is_empty() {
            return bad("images, ratios, matrices and wavelets must all be non-empty");
        }
        if self.ratios.iter().any(|r| !(*r > 0.0 && *r <= 1.0)) {
            return bad("ratios must lie in (0, 1]");
        }
        if self.trials == 0 {
            return bad("trials must be >= 1");
        }
        if self.levels == 0 {
            return bad("levels must be >= 1");
        }
        Ok(())
    }

    fn template(&self) -> DecompositionPlan {
        DecompositionPlan::new(self.strategy, self.levels, StandardWavelet::Bior53.chain()).with_l_rule(self.l_rule)
    }
}

/// One CSV row, with every field already formatted.
#[derive(Clone, Debug, PartialEq)]
pub struct ResultRow {
    pub image: String,
    pub ratio: f64,
    pub matrix: MatrixKind,
    pub wavelet: WaveletChoice,
    pub strategy: Strategy,
    pub levels: usize,
    /// Trial index, or `None` for the aggregate row.
    pub trial: Option<usize>,
    pub iterations: String,
    pub residual: String,
    pub seconds: String,
    pub psnr_db: String,
}

impl ResultRow {
    pub fn to_csv(&self) -> String {
        let trial = self.trial.map_or("agg".to_string(), |t| t.to_string());
        format!(
            "{},{},{},{},{},{},{},{},{},{},{}",
            self.image,
            self.ratio,
            self.matrix,
            self.wavelet,
            self.strategy,
            self.levels,
            trial,
            self.iterations,
            self.residual,
            self.seconds,
            self.psnr_db
        )
    }
}

/// Per-cell summary over successful trials.
#[derive(Clone, Debug, PartialEq)]
pub struct CellStats {
    pub image: String,
    pub ratio: f64,
    pub matrix: MatrixKind,
    pub wavelet: WaveletChoice,
    pub strategy: Strategy,
    pub levels: usize,
    pub trials: usize,
    pub failures: usize,
    pub unconverged: usize,
    pub psnr_mean: f64,
    pub psnr_std: f64,
    pub seconds_mean: f64,
    pub seconds_std: f64,
    pub iterations_mean: f64,
    /// First error message in the cell, if any trial failed.
    pub error: Option<String>,
}

impl CellStats {
    pub fn to_csv(&self) -> String {
        let error = self
            .error
            .as_deref()
            .map(|e| e.replace([',', '\n'], ";"))
            .unwrap_or_default();
        format!(
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
            self.image,
            self.ratio,
            self.matrix,
            self.wavelet,
            self.strategy,
            self.levels,
            self.trials,
            self.failures,
            self.unconverged,
            self.psnr_mean,
            self.psnr_std,
            self.seconds_mean,
            self.seconds_std,
            self.iterations_mean,
            error
        )
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct ExperimentReport {
    /// Trial rows, each cell followed by its aggregate row.
    pub rows: Vec<ResultRow>,
    pub cells: Vec<CellStats>,
}

impl ExperimentReport {
    pub fn to_csv(&self) -> String {
        let mut out = String::from(CSV_HEADER);
        out.push('\n');
        for r in &self.rows {
            out.push_str(&r.to_csv());
            out.push('\n');
        }
        out
    }

    pub fn stats_csv(&self) -> String {
        let mut out = String::from(STATS_HEADER);
        out.push('\n');
        for c in &self.cells {
            out.push_str(&c.to_csv());
            out.push('\n');
        }
        out
    }

    /// Writes the CSV to `path` and the stats table next to it
    /// (`name.stats.csv`).
    pub fn write(&self, path: &Path) -> Result<PathBuf> {
        std::fs::write(path, self.to_csv())?;
        let stats = stats_path(path);
        std::fs::write(&stats, self.stats_csv())?;
        Ok(stats)
    }
}

pub fn stats_path(path: &Path) -> PathBuf {
    let stem = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    path.with_file_name(format!("{stem}.stats.csv"))
}

/// Outcome of one trial before formatting.
#[derive(Clone, Debug, PartialEq)]
pub struct TrialOutcome {
    pub iterations: usize,
    pub residual: f64,
    pub seconds: f64,
    pub psnr_db: f64,
    pub converged: bool,
}

/// Runs one trial of one cell. Seconds cover the solver calls only (both
/// solves for the matched pipeline).
pub fn run_trial(
    img: &Image,
    ratio: f64,
    matrix: MatrixKind,
    wavelet: WaveletChoice,
    cfg: &ExperimentConfig,
    seed: u64,
) -> Result<TrialOutcome> {
    let sensing = make_sensing(matrix, img.shape(), ratio, cfg.block, seed)?;
    let y = sensing.sense(img)?;
    let template = cfg.template();
    let (rec, iterations, residual, seconds, converged) = match wavelet {
        WaveletChoice::Standard(w) => {
            let plan = DecompositionPlan::new(cfg.strategy, cfg.levels, w.chain()).with_l_rule(cfg.l_rule);
            let (rec, rep) = reconstruct_with(&y, &sensing, &plan, &cfg.solver)?;
            (rec, rep.iterations, rep.residual, rep.seconds, rep.converged)
        }
        WaveletChoice::Matched => {
            let r = run_pipeline(&y, &sensing, &template, &cfg.design, &cfg.solver)?;
            (
                r.image,
                r.report.iterations,
                r.report.residual,
                r.coarse_report.seconds + r.report.seconds,
                r.report.converged && r.coarse_report.converged,
            )
        }
    };
    Ok(TrialOutcome {
        iterations,
        residual,
        seconds,
        psnr_db: psnr(img, &rec)?.psnr_db,
        converged,
    })
}

/// Loads an image and applies the configured crop.
pub fn prepare_image(path: &Path, crop: Option<usize>) -> Result<Image> {
    let img = load_image(path)?;
    Ok(match crop {
        Some(c) => img.center_crop(c, c),
        None => img,
    })
}

fn mean(v: &[f64]) -> f64 {
    if v.is_empty() {
        return f64::NAN;
    }
    v.iter().sum::<f64>() / v.len() as f64
}

/// Population standard deviation; zero for a single value.
fn std_dev(v: &[f64]) -> f64 {
    if v.is_empty() {
        return f64::NAN;
    }
    let m = mean(v);
    if m.is_infinite() {
        return 0.0;
    }
    (v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / v.len() as f64).sqrt()
}

fn parse_field(s: &str) -> f64 {
    s.parse().unwrap_or(f64::NAN)
}

/// Runs the whole grid in config order. A failing trial becomes a row of
/// `nan` fields and never stops the sweep; `progress` sees each finished
/// row.
pub fn run_experiment(cfg: &ExperimentConfig, mut progress: impl FnMut(&ResultRow)) -> Result<ExperimentReport> {
    cfg.validate()?;
    let mut report = ExperimentReport::default();
    for path in &cfg.images {
        let name = path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| path.display().to_string());
        let loaded = prepare_image(path, cfg.crop);
        for &ratio in &cfg.ratios {
            for &matrix in &cfg.matrices {
                for &wavelet in &cfg.wavelets {
                    let row =
                        |trial, iterations: String, residual: String, seconds: String, psnr_db: String| ResultRow {
                            image: name.clone(),
                            ratio,
                            matrix,
                            wavelet,
                            strategy: cfg.strategy,
                            levels: cfg.levels,
                            trial,
                            iterations,
                            residual,
                            seconds,
                            psnr_db,
                        };
                    let mut ok_rows: Vec<ResultRow> = Vec::new();
                    let (mut failures, mut unconverged, mut error) = (0, 0, None);
                    for t in 0..cfg.trials {
                        let outcome = loaded
                            .as_ref()
                            .map_err(|e| Error::InvalidParameter(e.to_string()))
                            .and_then(|img| {
                                run_trial(img, ratio, matrix, wavelet, cfg, cfg.seed.wrapping_add(t as u64))
                            });
                        let r = match outcome {
                            Ok(o) => {
                                if !o.converged {
                                    unconverged += 1;
                                }
                                let r = row(
                                    Some(t),
                                    o.iterations.to_string(),
                                    format!("{:e}", o.residual),
                                    format!("{:.6}", o.seconds),
                                    format_psnr(o.psnr_db),
                                );
                                ok_rows.push(r.clone());
                                r
                            }
                            Err(e) => {
                                failures += 1;
                                error.get_or_insert(e.to_string());
                                let nan = || "nan".to_string();
                                row(Some(t), nan(), nan(), nan(), nan())
                            }
                        };
                        progress(&r);
                        report.rows.push(r);
                    }
                    let col = |f: fn(&ResultRow) -> &str| ok_rows.iter().map(|r| parse_field(f(r))).collect::<Vec<_>>();
                    let (its, res, secs, ps) = (
                        col(|r| &r.iterations),
                        col(|r| &r.residual),
                        col(|r| &r.seconds),
                        col(|r| &r.psnr_db),
                    );
                    let agg = row(
                        None,
                        mean(&its).to_string(),
                        format!("{:e}", mean(&res)),
                        mean(&secs).to_string(),
                        match mean(&ps) {
                            m if m.is_infinite() && m > 0.0 => "inf".to_string(),
                            m => m.to_string(),
                        },
                    );
                    progress(&agg);
                    report.rows.push(agg);
                    report.cells.push(CellStats {
                        image: name.clone(),
                        ratio,
                        matrix,
                        wavelet,
                        strategy: cfg.strategy,
                        levels: cfg.levels,
                        trials: cfg.trials,
                        failures,
                        unconverged,
                        psnr_mean: mean(&ps),
                        psnr_std: std_dev(&ps),
                        seconds_mean: mean(&secs),
                        seconds_std: std_dev(&secs),
                        iterations_mean: mean(&its),
                        error,
                    });
                }
            }
        }
    }
    Ok(report)
}
