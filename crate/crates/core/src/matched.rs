//! Image-matched lifting wavelets estimated from partial measurements.
//!
//! The pipeline has three steps:
//!
//! 1. [`coarse_estimate`] reconstructs `x~` with the LeGall 5/3 wavelet.
//! 2. [`design_matched`] scans `x~` column-wise and row-wise (serpentine)
//!    and fits, per direction, a predict filter against a detail reference
//!    and an update filter that makes lowpass-only synthesis reproduce the
//!    scan.
//! 3. [`reconstruct_matched`] solves basis pursuit again with the fitted
//!    separable wavelet.
//!
//! Both fits are closed-form least squares over interior samples only, so no
//! row of the design matrix depends on boundary extension.

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::filterbank::{compose_filterbank, Filter, Filterbank};
use crate::image::{scan, Image, ScanAxis, ScanSignal, ScanStrategy};
use crate::lifting::{self, LiftingChain, LiftingStage};
use crate::pyramid::{DecompositionPlan, LRule, Strategy};
use crate::sensing::Sensing;
use crate::solver::{build_operator, solve_bp, SolveReport, SolverConfig};
use crate::wavelets;

/// Relative singular-value cutoff below which a fit counts as rank deficient.
const RANK_TOL: f64 = 1e-10;

/// Target the predict fit aims the detail channel at.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash)]
pub enum DetailReference {
    /// Single-level LeGall 5/3 detail of the scan.
    #[default]
    Bior53,
    /// Zero: the predictor minimizes detail energy outright.
    Zero,
}

impl DetailReference {
    pub fn name(self) -> &'static str {
        match self {
            Self::Bior53 => "bior53",
            Self::Zero => "zero",
        }
    }
}

impl fmt::Display for DetailReference {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for DetailReference {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "bior53" | "5/3" => Ok(Self::Bior53),
            "zero" | "none" => Ok(Self::Zero),
            other => Err(Error::InvalidParameter(format!("unknown detail reference {other:?}"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct DesignConfig {
    /// Predict length, even.
    pub lt: usize,
    /// Update length, even.
    pub ls: usize,
    pub stages: usize,
    pub reference: DetailReference,
}

impl Default for DesignConfig {
    fn default() -> Self {
        Self {
            lt: 2,
            ls: 2,
            stages: 1,
            reference: DetailReference::default(),
        }
    }
}

impl DesignConfig {
    fn validate(&self) -> Result<()> {
        for (name, v) in [("Lt", self.lt), ("Ls", self.ls)] {
            if v < 2 || v % 2 != 0 {
                return Err(Error::InvalidParameter(format!(
                    "{name} must be even and >= 2, got {v}"
                )));
            }
        }
        if self.stages == 0 {
            return Err(Error::InvalidParameter("stages must be >= 1".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct DesignMeta {
    pub lt: usize,
    pub ls: usize,
    pub stages: usize,
    /// Sampling ratio of the measurements the design came from.
    pub ratio: f64,
    pub seed: u64,
}

/// Fitted column and row chains with their composed filterbanks.
#[derive(Clone, Debug, PartialEq)]
pub struct MatchedDesign {
    pub col_chain: LiftingChain,
    pub row_chain: LiftingChain,
    pub col_filterbank: Filterbank,
    pub row_filterbank: Filterbank,
    pub meta: DesignMeta,
}

/// Intermediate signals of a one-stage fit on a scan.
#[derive(Clone, Debug, PartialEq)]
pub struct StageSignals {
    pub scan: ScanSignal,
    /// Detail after the fitted predict.
    pub detail: Vec<f64>,
    /// Detail reference the predict was fitted against.
    pub reference: Vec<f64>,
    /// Approximation after the fitted update.
    pub approx: Vec<f64>,
    /// `approx` upsampled by two (zeros at odd positions).
    pub upsampled: Vec<f64>,
    /// Lowpass-only synthesis of `approx`.
    pub lowpass: Vec<f64>,
}

/// Least squares `min ||m x - b||`, or `None` when `m` is numerically rank
/// deficient.
fn least_squares(m: DMatrix<f64>, b: DVector<f64>) -> Option<Vec<f64>> {
    if m.nrows() < m.ncols() {
        return None;
    }
    let svd = m.svd(true, true);
    let smax = svd.singular_values.max();
    let smin = svd.singular_values.min();
    // also rejects NaN
    if smax.is_nan() || smax <= 0.0 || smin <= RANK_TOL * smax {
        return None;
    }
    let x = svd.solve(&b, 0.0).ok()?;
    Some(x.iter().copied().collect())
}

/// `[0.., c, c, ..0]` of even length `len`.
fn centered(len: usize, c: f64) -> Vec<f64> {
    let mut v = vec![0.0; len];
    v[len / 2 - 1] = c;
    v[len / 2] = c;
    v
}

/// Fits a predict filter on lifted channels: minimizes
/// `sum_n (odd[n] - sum_k t[k] even[n - Lt/2 + 1 + k] - reference[n])^2`
/// over the rows whose even taps all lie inside the channel. Returns `None`
/// when the system is rank deficient.
pub fn fit_predict_channels(even: &[f64], odd: &[f64], lt: usize, reference: &[f64]) -> Option<Vec<f64>> {
    let half = lt as isize / 2 - 1;
    let rows: Vec<usize> = (0..odd.len().min(reference.len()))
        .filter(|&n| {
            let lo = n as isize - half;
            lo >= 0 && lo + lt as isize <= even.len() as isize
        })
        .collect();
    let m = DMatrix::from_fn(rows.len(), lt, |r, k| even[rows[r] - half as usize + k]);
    let b = DVector::from_iterator(rows.len(), rows.iter().map(|&n| odd[n] - reference[n]));
    least_squares(m, b)
}

/// Predict filter of length `lt` for the scan signal `x`, fitted against
/// `reference` (one value per odd sample). Rank-deficient inputs fall back to
/// the 5/3 predictor `[.., 0.5, 0.5, ..]`.
pub fn fit_predict(x: &[f64], lt: usize, reference: &[f64]) -> Result<Vec<f64>> {
    if lt < 2 || !lt.is_multiple_of(2) {
        return Err(Error::InvalidParameter(format!("Lt must be even and >= 2, got {lt}")));
    }
    if x.len() < 2 * lt {
        return Err(Error::InvalidParameter(format!(
            "signal of length {} is too short for Lt = {lt}",
            x.len()
        )));
    }
    if reference.len() != x.len() / 2 {
        return Err(Error::LengthMismatch {
            expected: x.len() / 2,
            got: reference.len(),
        });
    }
    let (even, odd) = lifting::lazy_split(x);
    Ok(fit_predict_channels(&even, &odd, lt, reference).unwrap_or_else(|| centered(lt, 0.5)))
}

/// Lowpass-only synthesis over the interior:
/// `out[n] = sum_j a[j] f0[n - 2j]` for the rows returned by
/// [`update_rows`].
fn lowpass_rows(a: &[f64], f0: &Filter, rows: &[usize]) -> Vec<f64> {
    rows.iter()
        .map(|&n| {
            let n = n as isize;
            (f0.start..=f0.end())
                .filter(|k| (n - k).rem_euclid(2) == 0 && f0.at(*k) != 0.0)
                .map(|k| a[((n - k) / 2) as usize] * f0.at(k))
                .sum()
        })
        .collect()
}

/// Output samples of the update fit: every `a[j]` that reaches sample `n`
/// through `f0` must exist and read only in-range detail samples.
pub fn update_rows(len: usize, approx_len: usize, detail_len: usize, ls: usize, f0: &Filter) -> Vec<usize> {
    let half = ls as isize / 2;
    let a_ok = |j: isize| j >= 0 && j < approx_len as isize && j - half >= 0 && j + half - 1 < detail_len as isize;
    (0..len)
        .filter(|&n| {
            let n = n as isize;
            (f0.start..=f0.end())
                .filter(|k| (n - k).rem_euclid(2) == 0 && f0.at(*k) != 0.0)
                .all(|k| a_ok((n - k) / 2))
        })
        .collect()
}

/// Fits an update filter: with `a = even + S(detail)`, minimizes
/// `sum_n (sum_j a[j] f0[n - 2j] - x[n])^2` over [`update_rows`]. Returns
/// `None` when the system is rank deficient.
pub fn fit_update_channels(x: &[f64], even: &[f64], detail: &[f64], ls: usize, f0: &Filter) -> Option<Vec<f64>> {
    let rows = update_rows(x.len(), even.len(), detail.len(), ls, f0);
    if rows.is_empty() {
        return None;
    }
    let half = ls as isize / 2;
    let base = lowpass_rows(even, f0, &rows);
    let mut m = DMatrix::zeros(rows.len(), ls);
    for i in 0..ls {
        // shifted detail feeding a[j] through tap s[i]
        let shift = half - 1 - i as isize;
        let shifted: Vec<f64> = (0..even.len() as isize)
            .map(|j| {
                let idx = j + shift;
                if idx >= 0 && (idx as usize) < detail.len() {
                    detail[idx as usize]
                } else {
                    0.0
                }
            })
            .collect();
        for (r, v) in lowpass_rows(&shifted, f0, &rows).into_iter().enumerate() {
            m[(r, i)] = v;
        }
    }
    let b = DVector::from_iterator(rows.len(), rows.iter().zip(&base).map(|(&n, b)| x[n] - b));
    least_squares(m, b)
}

/// Update filter of length `ls` for the scan `x` after predicting with `t`.
/// Rank-deficient inputs (for instance a detail that is identically zero)
/// fall back to `[.., 0.25, 0.25, ..]`.
pub fn fit_update(x: &[f64], t: &[f64], ls: usize) -> Result<Vec<f64>> {
    if ls < 2 || !ls.is_multiple_of(2) {
        return Err(Error::InvalidParameter(format!("Ls must be even and >= 2, got {ls}")));
    }
    let probe = LiftingChain::single(t.to_vec(), vec![0.0; ls])?;
    let f0 = compose_filterbank(&probe).f0;
    let (even, odd) = lifting::lazy_split(x);
    let detail = lifting::apply_predict(&even, &odd, t);
    Ok(fit_update_channels(x, &even, &detail, ls, &f0).unwrap_or_else(|| centered(ls, 0.25)))
}

/// Single-level LeGall 5/3 detail of `x`.
pub fn bior53_detail(x: &[f64]) -> Vec<f64> {
    lifting::forward_1d(x, &wavelets::bior53()).1
}

/// Fits `cfg.stages` predict/update pairs on one scan signal.
pub fn design_chain(x: &[f64], cfg: &DesignConfig) -> Result<LiftingChain> {
    cfg.validate()?;
    let need = 2 * cfg.lt.max(cfg.ls) + 2;
    if x.len() < need {
        return Err(Error::InvalidParameter(format!(
            "scan of length {} is too short to fit Lt = {}, Ls = {}",
            x.len(),
            cfg.lt,
            cfg.ls
        )));
    }
    let reference = match cfg.reference {
        DetailReference::Bior53 => bior53_detail(x),
        DetailReference::Zero => vec![0.0; x.len() / 2],
    };
    let (mut even, mut odd) = lifting::lazy_split(x);
    let mut stages: Vec<LiftingStage> = Vec::with_capacity(cfg.stages);
    for k in 0..cfg.stages {
        // later stages refine an existing wavelet; their neutral step is zero
        let fallback = |len, c| if k == 0 { centered(len, c) } else { vec![0.0; len] };
        let t = fit_predict_channels(&even, &odd, cfg.lt, &reference).unwrap_or_else(|| fallback(cfg.lt, 0.5));
        let detail = lifting::apply_predict(&even, &odd, &t);

        let mut probe = stages.clone();
        probe.push(LiftingStage::new(t.clone(), vec![0.0; cfg.ls])?);
        let f0 = compose_filterbank(&LiftingChain::new(probe)?).f0;
        let s = fit_update_channels(x, &even, &detail, cfg.ls, &f0).unwrap_or_else(|| fallback(cfg.ls, 0.25));
        even = lifting::apply_update(&even, &detail, &s);
        odd = detail;
        stages.push(LiftingStage::new(t, s)?);
    }
    LiftingChain::new(stages)
}

/// Stage signals of a single-stage chain applied to `scan`.
pub fn stage_signals(scan: &ScanSignal, chain: &LiftingChain, reference: DetailReference) -> Result<StageSignals> {
    let st = chain
        .stages()
        .first()
        .ok_or_else(|| Error::InvalidParameter("empty chain".into()))?;
    let x = &scan.values;
    let (even, odd) = lifting::lazy_split(x);
    let detail = lifting::apply_predict(&even, &odd, st.predict());
    let approx = lifting::apply_update(&even, &detail, st.update());
    let mut upsampled = vec![0.0; x.len()];
    for (j, &a) in approx.iter().enumerate() {
        upsampled[2 * j] = a;
    }
    let single = LiftingChain::new(vec![st.clone()])?;
    let lowpass = lifting::inverse_1d(&approx, &vec![0.0; detail.len()], &single)?;
    let reference = match reference {
        DetailReference::Bior53 => bior53_detail(x),
        DetailReference::Zero => vec![0.0; detail.len()],
    };
    Ok(StageSignals {
        scan: scan.clone(),
        detail,
        reference,
        approx,
        upsampled,
        lowpass,
    })
}

/// Fits separate column and row chains to `img` from its serpentine scans.
/// The column chain is fitted on the column-wise scan.
pub fn design_matched(img: &Image, cfg: &DesignConfig) -> Result<MatchedDesign> {
    let col = scan(img, ScanAxis::ColumnWise, ScanStrategy::Serpentine);
    let row = scan(img, ScanAxis::RowWise, ScanStrategy::Serpentine);
    let col_chain = design_chain(&col.values, cfg)?;
    let row_chain = design_chain(&row.values, cfg)?;
    Ok(MatchedDesign::new(
        col_chain,
        row_chain,
        DesignMeta {
            lt: cfg.lt,
            ls: cfg.ls,
            stages: cfg.stages,
            ratio: 1.0,
            seed: 0,
        },
    ))
}

/// L-pyramid plan with 5/3 chains for the coarse estimate.
pub fn bior53_plan(strategy: Strategy, levels: usize, l_rule: LRule) -> DecompositionPlan {
    DecompositionPlan::new(strategy, levels, wavelets::bior53()).with_l_rule(l_rule)
}

/// Reconstructs with `plan` and returns the image and solver report.
pub fn reconstruct_with(
    y: &[f64],
    sensing: &Sensing,
    plan: &DecompositionPlan,
    cfg: &SolverConfig,
) -> Result<(Image, SolveReport)> {
    let op = build_operator(sensing, plan, sensing.shape())?;
    let (s, report) = solve_bp(&op, y, cfg)?;
    Ok((op.synthesize(&s)?, report))
}

/// Coarse estimate `x~ = Psi s~` with `plan53` (normally 5/3 chains).
pub fn coarse_estimate(
    y: &[f64],
    sensing: &Sensing,
    plan53: &DecompositionPlan,
    cfg: &SolverConfig,
) -> Result<(Image, SolveReport)> {
    reconstruct_with(y, sensing, plan53, cfg)
}

/// Final reconstruction with the matched chains. `template` supplies the
/// strategy, depth and L rule; its chains are replaced.
pub fn reconstruct_matched(
    y: &[f64],
    sensing: &Sensing,
    design: &MatchedDesign,
    template: &DecompositionPlan,
    cfg: &SolverConfig,
) -> Result<(Image, SolveReport)> {
    let plan = design.plan(template);
    reconstruct_with(y, sensing, &plan, cfg)
}

/// Outcome of the full coarse, design, reconstruct pipeline.
#[derive(Clone, Debug)]
pub struct PipelineResult {
    pub coarse: Image,
    pub coarse_report: SolveReport,
    pub design: MatchedDesign,
    pub image: Image,
    pub report: SolveReport,
}

/// Runs all three steps. `template` fixes strategy and depth for both
/// solves.
pub fn run_pipeline(
    y: &[f64],
    sensing: &Sensing,
    template: &DecompositionPlan,
    design_cfg: &DesignConfig,
    cfg: &SolverConfig,
) -> Result<PipelineResult> {
    let plan53 = bior53_plan(template.strategy, template.levels, template.l_rule);
    let (coarse, coarse_report) = coarse_estimate(y, sensing, &plan53, cfg)?;
    let mut design = design_matched(&coarse, design_cfg)?;
    design.meta.ratio = sensing.ratio();
    design.meta.seed = sensing.seed();
    let (image, report) = reconstruct_matched(y, sensing, &design, template, cfg)?;
    Ok(PipelineResult {
        coarse,
        coarse_report,
        design,
        image,
        report,
    })
}

impl MatchedDesign {
    pub fn new(col_chain: LiftingChain, row_chain: LiftingChain, meta: DesignMeta) -> Self {
        Self {
            col_filterbank: compose_filterbank(&col_chain),
            row_filterbank: compose_filterbank(&row_chain),
            col_chain,
            row_chain,
            meta,
        }
    }

    /// `template` with this design's chains.
    pub fn plan(&self, template: &DecompositionPlan) -> DecompositionPlan {
        DecompositionPlan::separable(
            template.strategy,
            template.levels,
            self.col_chain.clone(),
            self.row_chain.clone(),
        )
        .with_l_rule(template.l_rule)
    }

    /// Text form:
    ///
    /// ```text
    /// MATCHED lt=2 ls=2 stages=1 ratio=0.2 seed=7
    /// [column]
    /// predict: t0 t1
    /// update: s0 s1
    /// h0,start,taps...
    /// h1,...
    /// f0,...
    /// f1,...
    /// [row]
    /// ...
    /// ```
    ///
    /// Numbers use shortest round-trip formatting, so parsing restores the
    /// design exactly.
    pub fn to_text(&self) -> String {
        let m = &self.meta;
        let mut out = format!(
            "MATCHED lt={} ls={} stages={} ratio={:?} seed={}\n",
            m.lt, m.ls, m.stages, m.ratio, m.seed
        );
        let join = |v: &[f64]| v.iter().map(|x| format!("{x:?}")).collect::<Vec<_>>().join(" ");
        for (name, chain, bank) in [
            ("column", &self.col_chain, &self.col_filterbank),
            ("row", &self.row_chain, &self.row_filterbank),
        ] {
            out.push_str(&format!("[{name}]\n"));
            for st in chain.stages() {
                out.push_str(&format!("predict: {}\n", join(st.predict())));
                out.push_str(&format!("update: {}\n", join(st.update())));
            }
            out.push_str(&bank.to_csv());
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let bad = |m: String| Error::Malformed(m);
        let mut lines = text.lines().map(str::trim).filter(|l| !l.is_empty());
        let header = lines.next().ok_or_else(|| bad("empty design file".into()))?;
        let mut fields = header.split_whitespace();
        if fields.next() != Some("MATCHED") {
            return Err(bad(format!("not a design file: {header:?}")));
        }
        let mut meta = DesignMeta {
            lt: 0,
            ls: 0,
            stages: 0,
            ratio: 0.0,
            seed: 0,
        };
        for f in fields {
            let (k, v) = f
                .split_once('=')
                .ok_or_else(|| bad(format!("bad header field {f:?}")))?;
            let e = |_| bad(format!("bad header value {f:?}"));
            match k {
                "lt" => meta.lt = v.parse().map_err(e)?,
                "ls" => meta.ls = v.parse().map_err(e)?,
                "stages" => meta.stages = v.parse().map_err(e)?,
                "ratio" => meta.ratio = v.parse().map_err(|_| bad(format!("bad header value {f:?}")))?,
                "seed" => meta.seed = v.parse().map_err(e)?,
                _ => return Err(bad(format!("unknown header field {k:?}"))),
            }
        }

        let parse_taps = |rest: &str| -> Result<Vec<f64>> {
            rest.split_whitespace()
                .map(|t| t.parse::<f64>().map_err(|_| bad(format!("bad coefficient {t:?}"))))
                .collect()
        };
        // (name, lifting steps, filter rows)
        type Section = (String, Vec<LiftingStage>, Vec<(String, Filter)>);
        let mut sections: Vec<Section> = Vec::new();
        let mut pending: Option<Vec<f64>> = None;
        for line in lines {
            if let Some(name) = line.strip_prefix('[').and_then(|l| l.strip_suffix(']')) {
                sections.push((name.to_string(), Vec::new(), Vec::new()));
                continue;
            }
            let sec = sections
                .last_mut()
                .ok_or_else(|| bad(format!("line outside a section: {line:?}")))?;
            if let Some(rest) = line.strip_prefix("predict:") {
                if pending.is_some() {
                    return Err(bad("predict line without update".into()));
                }
                pending = Some(parse_taps(rest)?);
            } else if let Some(rest) = line.strip_prefix("update:") {
                let t = pending
                    .take()
                    .ok_or_else(|| bad("update line without predict".into()))?;
                sec.1.push(LiftingStage::new(t, parse_taps(rest)?)?);
            } else {
                sec.2.push(Filter::from_csv_row(line)?);
            }
        }
        if pending.is_some() {
            return Err(bad("predict line without update".into()));
        }

        let mut chain_of = |want: &str| -> Result<LiftingChain> {
            let pos = sections
                .iter()
                .position(|s| s.0 == want)
                .ok_or_else(|| bad(format!("missing [{want}] section")))?;
            let (_, stages, filters) = sections.remove(pos);
            let chain = LiftingChain::new(stages)?;
            let bank = compose_filterbank(&chain);
            for (name, f) in &filters {
                let expect = bank
                    .filters()
                    .iter()
                    .find(|(n, _)| n == name)
                    .map(|(_, f)| (*f).clone())
                    .ok_or_else(|| bad(format!("unknown filter {name:?}")))?;
                let same = expect.start == f.start
                    && expect.taps.len() == f.taps.len()
                    && expect
                        .taps
                        .iter()
                        .zip(&f.taps)
                        .all(|(a, b)| (a - b).abs() <= 1e-9 * (1.0 + a.abs()));
                if !same {
                    return Err(bad(format!("[{want}] filter {name} does not match its lifting steps")));
                }
            }
            Ok(chain)
        };
        let col_chain = chain_of("column")?;
        let row_chain = chain_of("row")?;
        Ok(Self::new(col_chain, row_chain, meta))
    }

    /// Human-readable summary of taps and analysis filters.
    pub fn summary(&self) -> String {
        let fmt = |v: &[f64]| v.iter().map(|x| format!("{x:.4}")).collect::<Vec<_>>().join(" ");
        let mut out = String::new();
        for (name, chain, bank) in [
            ("column", &self.col_chain, &self.col_filterbank),
            ("row", &self.row_chain, &self.row_filterbank),
        ] {
            out.push_str(&format!("{name}:\n"));
            for (i, st) in chain.stages().iter().enumerate() {
                out.push_str(&format!(
                    "  stage {}: t = [{}]  s = [{}]\n",
                    i + 1,
                    fmt(st.predict()),
                    fmt(st.update())
                ));
            }
            out.push_str(&format!("  h0 = [{}]\n", fmt(&bank.h0.trimmed().taps)));
            out.push_str(&format!("  h1 = [{}]\n", fmt(&bank.h1.trimmed().taps)));
        }
        out
    }
}
