use std::fmt;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use liftcs::experiment::{run_experiment, stats_path, ExperimentConfig, CSV_HEADER};
use liftcs::image::{load_image, save_image, Image};
use liftcs::matched::{bior53_plan, design_matched, reconstruct_with, run_pipeline, DesignConfig, MatchedDesign};
use liftcs::metrics::{format_psnr, psnr};
use liftcs::sensing::{make_dense, make_sensing, Measurements, SampleMask, Sensing};
use liftcs::{
    DecompositionPlan, DetailReference, LRule, MatrixKind, SolveReport, SolverConfig, StandardWavelet, Strategy,
};

/// Compressive sensing with matched lifting wavelets.
#[derive(Parser)]
#[command(name = "liftcs", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Sense an image and write measurement (and PCI mask) files.
    Sense(SenseArgs),
    /// Estimate matched row/column wavelets from measurements.
    Design(DesignArgs),
    /// Reconstruct an image from measurements.
    Reconstruct(ReconstructArgs),
    /// Run a factorial sweep described by a key=value config file.
    Experiment(ExperimentArgs),
}

#[derive(Args)]
struct SenseArgs {
    #[arg(long)]
    image: PathBuf,
    #[arg(long)]
    ratio: f64,
    #[arg(long, default_value = "pci")]
    matrix: MatrixKind,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Block edge for dense matrices.
    #[arg(long, default_value_t = 8)]
    block: usize,
    /// Center crop to NxN before sensing.
    #[arg(long)]
    crop: Option<usize>,
    /// Output prefix; writes PREFIX.meas and PREFIX.mask. Defaults to the
    /// image path without its extension.
    #[arg(long)]
    out: Option<PathBuf>,
}

/// Where the measurements live.
#[derive(Args)]
struct Input {
    #[arg(long)]
    meas: PathBuf,
    /// PCI mask file; defaults to the measurement path with a `.mask`
    /// extension.
    #[arg(long)]
    mask: Option<PathBuf>,
}

#[derive(Args)]
struct Decomposition {
    #[arg(long, default_value = "l-pyramid")]
    strategy: Strategy,
    #[arg(long, default_value_t = 3)]
    levels: usize,
    #[arg(long, default_value = "recursive-l")]
    l_rule: LRule,
}

#[derive(Args)]
struct Solver {
    #[arg(long)]
    max_iters: Option<usize>,
    #[arg(long)]
    feas_tol: Option<f64>,
    #[arg(long)]
    penalty: Option<f64>,
}

#[derive(Args)]
struct Matching {
    #[arg(long, default_value_t = 2)]
    lt: usize,
    #[arg(long, default_value_t = 2)]
    ls: usize,
    #[arg(long, default_value_t = 1)]
    stages: usize,
    /// Detail reference for the predict fit: bior53 or zero.
    #[arg(long, default_value = "bior53")]
    detail_reference: DetailReference,
}

#[derive(Args)]
struct DesignArgs {
    #[command(flatten)]
    input: Input,
    #[command(flatten)]
    decomposition: Decomposition,
    #[command(flatten)]
    solver: Solver,
    #[command(flatten)]
    matching: Matching,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct ReconstructArgs {
    #[command(flatten)]
    input: Input,
    /// db2, db4, bior53 or matched.
    #[arg(long, default_value = "bior53")]
    wavelet: String,
    /// Design file for `--wavelet matched`.
    #[arg(long)]
    design: Option<PathBuf>,
    /// Estimate the matched design from the measurements first.
    #[arg(long)]
    auto_design: bool,
    #[command(flatten)]
    decomposition: Decomposition,
    #[command(flatten)]
    solver: Solver,
    #[command(flatten)]
    matching: Matching,
    #[arg(long)]
    out: PathBuf,
    /// Original image, for PSNR.
    #[arg(long)]
    reference: Option<PathBuf>,
    /// CSV file to append a report row to (created with a header).
    #[arg(long)]
    csv: Option<PathBuf>,
    /// Exit with status 2 if the solver stops before converging.
    #[arg(long)]
    strict: bool,
}

#[derive(Args)]
struct ExperimentArgs {
    #[arg(long)]
    config: PathBuf,
    /// Overrides `output` from the config.
    #[arg(long)]
    output: Option<PathBuf>,
    #[arg(long)]
    quiet: bool,
}

enum Failure {
    Input(String),
    Numerical(String),
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Failure::Input(m) => write!(f, "{m}"),
            Failure::Numerical(m) => write!(f, "numerical failure: {m}"),
        }
    }
}

impl From<liftcs::Error> for Failure {
    fn from(e: liftcs::Error) -> Self {
        Failure::Input(e.to_string())
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Input(e.to_string())
    }
}

type CliResult<T> = Result<T, Failure>;

fn with_path<T>(path: &Path, r: liftcs::Result<T>) -> CliResult<T> {
    r.map_err(|e| Failure::Input(format!("{}: {e}", path.display())))
}

fn solver_config(s: &Solver) -> SolverConfig {
    let mut cfg = SolverConfig::default();
    if let Some(v) = s.max_iters {
        cfg.max_iters = v;
    }
    if let Some(v) = s.feas_tol {
        cfg.feas_tol = v;
    }
    if let Some(v) = s.penalty {
        cfg.penalty = v;
    }
    cfg
}

fn design_config(m: &Matching) -> DesignConfig {
    DesignConfig {
        lt: m.lt,
        ls: m.ls,
        stages: m.stages,
        reference: m.detail_reference,
    }
}

fn template(d: &Decomposition) -> DecompositionPlan {
    bior53_plan(d.strategy, d.levels, d.l_rule)
}

fn cmd_sense(a: &SenseArgs) -> CliResult<()> {
    let mut img = with_path(&a.image, load_image(&a.image))?;
    if let Some(c) = a.crop {
        img = img.center_crop(c, c);
    }
    let start = Instant::now();
    let sensing = make_sensing(a.matrix, img.shape(), a.ratio, a.block, a.seed)?;
    let values = sensing.sense(&img)?;
    let elapsed = start.elapsed().as_secs_f64();
    let prefix = a.out.clone().unwrap_or_else(|| a.image.with_extension(""));
    let meas = Measurements {
        shape: img.shape(),
        ratio: a.ratio,
        seed: a.seed,
        kind: a.matrix,
        block: if a.matrix == MatrixKind::Pci { 0 } else { a.block },
        values,
    };
    let meas_path = prefix.with_extension("meas");
    fs::write(&meas_path, meas.to_bytes())?;
    println!("measurements: {}", meas_path.display());
    if let Sensing::Pci(mask) = &sensing {
        let mask_path = prefix.with_extension("mask");
        fs::write(&mask_path, mask.to_text())?;
        println!("mask: {}", mask_path.display());
    }
    println!("M = {}, N = {}, {:.6} s", meas.values.len(), img.len(), elapsed);
    Ok(())
}

/// Reads measurements and rebuilds their operator.
fn load_input(input: &Input) -> CliResult<(Measurements, Sensing)> {
    let bytes = fs::read(&input.meas).map_err(|e| Failure::Input(format!("{}: {e}", input.meas.display())))?;
    let meas = with_path(&input.meas, Measurements::from_bytes(&bytes))?;
    let sensing = match meas.kind {
        MatrixKind::Pci => {
            let path = input.mask.clone().unwrap_or_else(|| input.meas.with_extension("mask"));
            let text = fs::read_to_string(&path).map_err(|e| Failure::Input(format!("{}: {e}", path.display())))?;
            let mask = with_path(&path, SampleMask::from_text(&text))?;
            let mask = SampleMask::new(mask.shape(), mask.omega().to_vec(), meas.seed)?;
            if mask.shape() != meas.shape {
                return Err(Failure::Input(format!(
                    "mask is {:?} but measurements are {:?}",
                    mask.shape(),
                    meas.shape
                )));
            }
            Sensing::Pci(mask)
        }
        kind => Sensing::Dense(make_dense(kind, meas.shape, meas.ratio, meas.block, meas.seed)?),
    };
    if sensing.len() != meas.values.len() {
        return Err(Failure::Input(format!(
            "operator has {} rows but the file holds {} measurements",
            sensing.len(),
            meas.values.len()
        )));
    }
    Ok((meas, sensing))
}

fn check_finite(img: &Image, what: &str) -> CliResult<()> {
    if img.pixels().iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Failure::Numerical(format!("{what} contains non-finite pixels")))
    }
}

fn cmd_design(a: &DesignArgs) -> CliResult<()> {
    let (meas, sensing) = load_input(&a.input)?;
    let cfg = solver_config(&a.solver);
    let plan53 = template(&a.decomposition);
    let (coarse, rep) = reconstruct_with(&meas.values, &sensing, &plan53, &cfg)?;
    check_finite(&coarse, "coarse estimate")?;
    if !rep.converged {
        eprintln!(
            "warning: coarse solve stopped after {} iterations (residual {:e})",
            rep.iterations, rep.residual
        );
    }
    let mut design = design_matched(&coarse, &design_config(&a.matching))?;
    design.meta.ratio = sensing.ratio();
    design.meta.seed = meas.seed;
    fs::write(&a.out, design.to_text())?;
    print!("{}", design.summary());
    println!("design: {}", a.out.display());
    Ok(())
}

fn append_row(path: &Path, row: &str) -> CliResult<()> {
    let fresh = fs::metadata(path).map(|m| m.len() == 0).unwrap_or(true);
    let mut f = fs::OpenOptions::new().create(true).append(true).open(path)?;
    if fresh {
        writeln!(f, "{CSV_HEADER}")?;
    }
    writeln!(f, "{row}")?;
    Ok(())
}

fn cmd_reconstruct(a: &ReconstructArgs) -> CliResult<()> {
    let (meas, sensing) = load_input(&a.input)?;
    let cfg = solver_config(&a.solver);
    let reference = match &a.reference {
        Some(p) => {
            let img = with_path(p, load_image(p))?;
            if img.shape() != meas.shape {
                return Err(Failure::Input(format!(
                    "reference image is {:?} but measurements are {:?}",
                    img.shape(),
                    meas.shape
                )));
            }
            Some(img)
        }
        None => None,
    };
    let score = |img: &Image| reference.as_ref().map(|r| psnr(r, img).map(|q| q.psnr_db)).transpose();
    let tpl = template(&a.decomposition);
    let (image, report, seconds): (Image, SolveReport, f64) = if a.wavelet.eq_ignore_ascii_case("matched") {
        match (&a.design, a.auto_design) {
            (Some(_), true) => return Err(Failure::Input("--design and --auto-design are exclusive".into())),
            (None, false) => {
                return Err(Failure::Input(
                    "--wavelet matched needs --design FILE or --auto-design".into(),
                ))
            }
            (Some(path), false) => {
                let text = fs::read_to_string(path).map_err(|e| Failure::Input(format!("{}: {e}", path.display())))?;
                let design = with_path(path, MatchedDesign::from_text(&text))?;
                let (img, rep) = reconstruct_with(&meas.values, &sensing, &design.plan(&tpl), &cfg)?;
                let s = rep.seconds;
                (img, rep, s)
            }
            (None, true) => {
                let r = run_pipeline(&meas.values, &sensing, &tpl, &design_config(&a.matching), &cfg)?;
                check_finite(&r.coarse, "coarse estimate")?;
                print!("{}", r.design.summary());
                if let (Some(c), Some(f)) = (score(&r.coarse)?, score(&r.image)?) {
                    println!("coarse psnr {} dB, final psnr {} dB", format_psnr(c), format_psnr(f));
                }
                let s = r.coarse_report.seconds + r.report.seconds;
                (r.image, r.report, s)
            }
        }
    } else {
        let w: StandardWavelet = a.wavelet.parse()?;
        if a.design.is_some() || a.auto_design {
            return Err(Failure::Input(
                "--design/--auto-design only apply to --wavelet matched".into(),
            ));
        }
        let plan = DecompositionPlan::new(a.decomposition.strategy, a.decomposition.levels, w.chain())
            .with_l_rule(a.decomposition.l_rule);
        let (img, rep) = reconstruct_with(&meas.values, &sensing, &plan, &cfg)?;
        let s = rep.seconds;
        (img, rep, s)
    };
    check_finite(&image, "reconstruction")?;
    save_image(&image, &a.out)?;
    let quality = score(&image)?;
    println!(
        "{} iterations, residual {:e}, {:.3} s{}{}",
        report.iterations,
        report.residual,
        seconds,
        if report.converged { "" } else { " (not converged)" },
        quality
            .map(|p| format!(", psnr {} dB", format_psnr(p)))
            .unwrap_or_default()
    );
    if let Some(csv) = &a.csv {
        let name = a
            .reference
            .as_deref()
            .unwrap_or(&a.input.meas)
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_default();
        let row = format!(
            "{},{},{},{},{},{},0,{},{:e},{:.6},{}",
            name,
            meas.ratio,
            meas.kind,
            a.wavelet.to_ascii_lowercase(),
            a.decomposition.strategy,
            a.decomposition.levels,
            report.iterations,
            report.residual,
            seconds,
            quality.map(format_psnr).unwrap_or_else(|| "nan".into())
        );
        append_row(csv, &row)?;
    }
    if a.strict && !report.converged {
        return Err(Failure::Numerical(format!(
            "solver stopped after {} iterations with residual {:e}",
            report.iterations, report.residual
        )));
    }
    Ok(())
}

fn cmd_experiment(a: &ExperimentArgs) -> CliResult<()> {
    let text = fs::read_to_string(&a.config).map_err(|e| Failure::Input(format!("{}: {e}", a.config.display())))?;
    let base = a.config.parent();
    let mut cfg = with_path(&a.config, ExperimentConfig::parse(&text, base))?;
    if let Some(o) = &a.output {
        cfg.output = Some(o.clone());
    }
    let quiet = a.quiet;
    let report = run_experiment(&cfg, |row| {
        if !quiet {
            eprintln!("{}", row.to_csv());
        }
    })?;
    match &cfg.output {
        Some(path) => {
            report.write(path)?;
            println!("results: {}", path.display());
            println!("stats: {}", stats_path(path).display());
        }
        None => print!("{}", report.to_csv()),
    }
    let failures: usize = report.cells.iter().map(|c| c.failures).sum();
    if failures > 0 {
        eprintln!("warning: {failures} trials failed; see the stats table");
    }
    Ok(())
}

fn main() -> ExitCode {
    // clap reports usage errors with status 2, which is reserved here for
    // numerical failures
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    let result = match &cli.command {
        Command::Sense(a) => cmd_sense(a),
        Command::Design(a) => cmd_design(a),
        Command::Reconstruct(a) => cmd_reconstruct(a),
        Command::Experiment(a) => cmd_experiment(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                Failure::Input(_) => ExitCode::from(1),
                Failure::Numerical(_) => ExitCode::from(2),
            }
        }
    }
}
