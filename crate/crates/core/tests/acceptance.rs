//! One line per acceptance criterion. Runs sequentially so the timing
//! criterion is not disturbed by parallel tests; exits non-zero if any
//! criterion fails.

mod common;

use std::process::ExitCode;
use std::time::Instant;

use common::oracles::{dense_ls, predict_oracle, smooth_signal, update_system};
use common::{dot, fixture, norm, random_chain, random_vec, rel_err, smooth_image};
use liftcs::matched::{bior53_plan, fit_predict, fit_update, reconstruct_with, run_pipeline, DesignConfig};
use liftcs::pyramid::{forward_2d, inverse_2d, synthesis_adjoint, synthesis_apply};
use liftcs::sensing::{embed_zeros, make_pci, sense_pci};
use liftcs::solver::{build_operator, dot_test, MatrixOperator};
use liftcs::{
    compose_filterbank, forward_1d, inverse_1d, make_sensing, psnr, solve_bp, transpose_inverse_1d, DecompositionPlan,
    Image, LRule, LiftingChain, MatrixKind, SampleMask, Sensing, SolverConfig, StandardWavelet, Strategy,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;

fn ensure(ok: bool, msg: String) -> Outcome {
    if ok {
        Ok(msg)
    } else {
        Err(msg)
    }
}

fn rel_l2(a: &[f64], b: &[f64]) -> f64 {
    let num: f64 = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum();
    (num / b.iter().map(|y| y * y).sum::<f64>()).sqrt()
}

fn perfect_reconstruction() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut worst: f64 = 0.0;
    for len in 2..=256 {
        let chain = random_chain(&mut rng);
        let x = random_vec(&mut rng, len);
        let (a, d) = forward_1d(&x, &chain);
        worst = worst.max(rel_err(&x, &inverse_1d(&a, &d, &chain).unwrap()));
    }
    let mut cases = 0;
    for strategy in [Strategy::RPyramid, Strategy::LPyramid] {
        for rule in [LRule::RecursiveL, LRule::LatestTrio] {
            for levels in 1..=3 {
                for _ in 0..20 {
                    let rows = rng.random_range(8..=64);
                    let cols = rng.random_range(8..=64);
                    let plan =
                        DecompositionPlan::separable(strategy, levels, random_chain(&mut rng), random_chain(&mut rng))
                            .with_l_rule(rule);
                    let img = Image::from_fn(rows, cols, |_, _| rng.random_range(-255.0..255.0));
                    let back = inverse_2d(&forward_2d(&img, &plan).unwrap()).unwrap();
                    worst = worst.max(rel_err(img.pixels(), back.pixels()));
                    cases += 1;
                }
            }
            let plan = DecompositionPlan::separable(strategy, 3, random_chain(&mut rng), random_chain(&mut rng))
                .with_l_rule(rule);
            let img = Image::from_fn(64, 64, |_, _| rng.random_range(-255.0..255.0));
            let back = inverse_2d(&forward_2d(&img, &plan).unwrap()).unwrap();
            worst = worst.max(rel_err(img.pixels(), back.pixels()));
            cases += 1;
        }
    }
    let secs = start.elapsed().as_secs_f64();
    ensure(
        worst < 1e-10 && secs < 10.0,
        format!("255 1-D + {cases} 2-D cases, worst rel err {worst:.1e}, {secs:.2} s"),
    )
}

/// Largest tap difference after trimming; infinite if the supports differ.
fn tap_error(got: &liftcs::Filter, want: &[f64]) -> f64 {
    let g = got.trimmed();
    if g.taps.len() != want.len() {
        return f64::INFINITY;
    }
    g.taps.iter().zip(want).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max)
}

fn fitted_pair_filters() -> Outcome {
    let start = Instant::now();
    let chain = LiftingChain::single(vec![0.5028, 0.4941], vec![0.2858, 0.2790]).unwrap();
    let fb = compose_filterbank(&chain);
    let e0 = tap_error(&fb.h0, &[-0.1412, 0.2858, 0.7185, 0.2790, -0.1403]);
    let e1 = tap_error(&fb.h1, &[-0.4941, 1.0, -0.5028]);
    let secs = start.elapsed().as_secs_f64();
    ensure(
        e0 <= 5e-4 && e1 <= 5e-4 && secs < 1.0,
        format!(
            "h0 {:?}, h1 {:?}, max tap error {:.1e}",
            fb.h0.trimmed().taps,
            fb.h1.trimmed().taps,
            e0.max(e1)
        ),
    )
}

/// 5/3 lifting on an integer impulse of height 8; every intermediate
/// value stays an integer, so the responses are exact.
fn legall_impulse_responses(len: usize, at: usize) -> (Vec<i64>, Vec<i64>) {
    let x: Vec<i64> = (0..len).map(|i| if i == at { 8 } else { 0 }).collect();
    let half = len / 2;
    let even = |n: usize| x[2 * n];
    let mut d = vec![0i64; half];
    for n in 1..half - 1 {
        let p = even(n) + even(n + 1);
        assert_eq!(p % 2, 0);
        d[n] = x[2 * n + 1] - p / 2;
    }
    let mut a = vec![0i64; half];
    for n in 2..half - 1 {
        let u = d[n] + d[n - 1];
        assert_eq!(u % 4, 0);
        a[n] = even(n) + u / 4;
    }
    (a, d)
}

fn legall_identity() -> Outcome {
    let fb = compose_filterbank(&StandardWavelet::Bior53.chain());
    let mut worst: f64 = 0.0;
    let mut checked = 0;
    let len = 40;
    for at in 12..28 {
        let (a, d) = legall_impulse_responses(len, at);
        for n in 4..len / 2 - 4 {
            let k = 2 * n as isize - at as isize;
            worst = worst.max((fb.h0.at(k) - a[n] as f64 / 8.0).abs());
            worst = worst.max((fb.h1.at(k) - d[n] as f64 / 8.0).abs());
            checked += 1;
        }
    }
    let exact = fb.h0.trimmed().taps == [-0.125, 0.25, 0.75, 0.25, -0.125] && fb.h1.trimmed().taps == [-0.5, 1.0, -0.5];
    ensure(
        worst <= 1e-14 && exact,
        format!("{checked} impulse positions against integer arithmetic, worst {worst:.1e}"),
    )
}

fn adjoint_suite() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut worst = [0.0f64; 4];
    for i in 0..100 {
        let chain = random_chain(&mut rng);
        let len: usize = rng.random_range(2..=200);
        let (a, d) = (random_vec(&mut rng, len.div_ceil(2)), random_vec(&mut rng, len / 2));
        let y = random_vec(&mut rng, len);
        let x = inverse_1d(&a, &d, &chain).unwrap();
        let (ta, td) = transpose_inverse_1d(&y, &chain);
        let e = (dot(&x, &y) - dot(&a, &ta) - dot(&d, &td)).abs() / (norm(&x) * norm(&y));
        worst[0] = worst[0].max(e);

        let (rows, cols) = (rng.random_range(4..=40), rng.random_range(4..=40));
        let strategy = if i % 2 == 0 {
            Strategy::LPyramid
        } else {
            Strategy::RPyramid
        };
        let plan = DecompositionPlan::separable(strategy, 2, random_chain(&mut rng), random_chain(&mut rng));
        let s = random_vec(&mut rng, rows * cols);
        let w = Image::from_row_major(rows, cols, random_vec(&mut rng, rows * cols)).unwrap();
        let img = synthesis_apply(&s, &plan, (rows, cols)).unwrap();
        let t = synthesis_adjoint(&w, &plan).unwrap();
        let e = (dot(img.pixels(), w.pixels()) - dot(&s, &t)).abs() / (norm(img.pixels()) * norm(w.pixels()));
        worst[1] = worst[1].max(e);

        let mask = make_pci((rows, cols), rng.random_range(0.1..1.0), i).unwrap();
        let u = Image::from_row_major(rows, cols, random_vec(&mut rng, rows * cols)).unwrap();
        let v = random_vec(&mut rng, mask.len());
        let gathered = sense_pci(&u, &mask).unwrap();
        let scattered = embed_zeros(&v, &mask).unwrap();
        let e = (dot(&gathered, &v) - dot(u.pixels(), scattered.pixels())).abs() / (norm(&gathered) * norm(&v));
        worst[2] = worst[2].max(e);

        let kind = [MatrixKind::Pci, MatrixKind::Gaussian, MatrixKind::Bernoulli][i as usize % 3];
        let sensing = make_sensing(kind, (16, 16), 0.5, 8, i).unwrap();
        let plan = DecompositionPlan::separable(Strategy::LPyramid, 2, random_chain(&mut rng), random_chain(&mut rng));
        let op = build_operator(&sensing, &plan, (16, 16)).unwrap();
        worst[3] = worst[3].max(dot_test(&op, i));
    }
    ensure(
        worst.iter().all(|&w| w <= 1e-8),
        format!(
            "worst relative mismatch: 1-D {:.1e}, synthesis {:.1e}, gather/scatter {:.1e}, composite {:.1e}",
            worst[0], worst[1], worst[2], worst[3]
        ),
    )
}

fn least_squares_oracles() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let (mut wp, mut wu) = (0.0f64, 0.0f64);
    for i in 0..40 {
        let len = rng.random_range(64..=512);
        let x = smooth_signal(1000 + i, len);
        let (lt, ls) = (2 * rng.random_range(1..=2), 2 * rng.random_range(1..=2));
        let reference = liftcs::matched::bior53_detail(&x);
        let t = fit_predict(&x, lt, &reference).unwrap();
        wp = wp.max(rel_err(&predict_oracle(&x, lt, &reference), &t));
        let t0 = fit_predict(&x, lt, &vec![0.0; len / 2]).unwrap();
        let s = fit_update(&x, &t0, ls).unwrap();
        let (rows, b) = update_system(&x, &t0, ls);
        wu = wu.max(rel_err(&dense_ls(&rows, &b), &s));
    }
    let ramp: Vec<f64> = (0..64).map(|v| v as f64).collect();
    let t = fit_predict(&ramp, 2, &[0.0; 32]).unwrap();
    let ramp_err = (t[0] - 0.5).abs().max((t[1] - 0.5).abs());
    ensure(
        wp <= 1e-8 && wu <= 1e-8 && ramp_err <= 1e-10,
        format!("predict {wp:.1e}, update {wu:.1e}, ramp t = {t:?}"),
    )
}

fn solver_sanity() -> Outcome {
    let a = MatrixOperator::gaussian(6, 8, 2024);
    let cols: Vec<Vec<f64>> = (0..8).map(|j| a.column(j)).collect();
    let tight = SolverConfig {
        feas_tol: 1e-8,
        cg_tol: 1e-12,
        dual_tol: 1e-9,
        max_iters: 20_000,
        ..SolverConfig::default()
    };
    let mut sparse_err: f64 = 0.0;
    let mut unique = true;
    for j in 0..8 {
        for value in [1.0, -1.0] {
            let y: Vec<f64> = cols[j].iter().map(|v| v * value).collect();
            // no other single column explains y
            for (_, c) in cols.iter().enumerate().filter(|(k, _)| *k != j) {
                let best = dot(c, &y) / dot(c, c);
                let resid: f64 = c.iter().zip(&y).map(|(p, q)| (q - best * p).powi(2)).sum();
                unique &= resid > 1e-6;
            }
            let (s, _) = solve_bp(&a, &y, &tight).unwrap();
            for (k, v) in s.iter().enumerate() {
                let want = if k == j { value } else { 0.0 };
                sparse_err = sparse_err.max((v - want).abs());
            }
        }
    }

    let img = smooth_image(32, 32);
    let plan = bior53_plan(Strategy::LPyramid, 3, LRule::RecursiveL);
    let sensing = make_sensing(MatrixKind::Pci, img.shape(), 0.4, 8, 3).unwrap();
    let op = build_operator(&sensing, &plan, img.shape()).unwrap();
    let y = sensing.sense(&img).unwrap();
    let cfg = SolverConfig {
        max_iters: 150,
        ..SolverConfig::default()
    };
    let (s, _) = solve_bp(&op, &y, &cfg).unwrap();
    let mut scale_err: f64 = 0.0;
    for alpha in [2.0, -1.0] {
        let ya: Vec<f64> = y.iter().map(|v| alpha * v).collect();
        let (sa, _) = solve_bp(&op, &ya, &cfg).unwrap();
        let want: Vec<f64> = s.iter().map(|v| alpha * v).collect();
        scale_err = scale_err.max(rel_l2(&sa, &want));
    }

    let full = Sensing::Pci(SampleMask::full(img.shape()));
    let cfg = SolverConfig::default();
    let (rec, _) = reconstruct_with(&full.sense(&img).unwrap(), &full, &plan, &cfg).unwrap();
    let full_err = rel_l2(rec.pixels(), img.pixels());
    ensure(
        unique && sparse_err < 1e-3 && scale_err < 1e-6 && full_err <= cfg.feas_tol,
        format!(
            "1-sparse max error {sparse_err:.1e}, scale {scale_err:.1e}, full mask {full_err:.2e} (feas_tol {:.0e})",
            cfg.feas_tol
        ),
    )
}

fn l_pyramid_direction() -> Outcome {
    let img = smooth_image(64, 64);
    let cfg = SolverConfig::default();
    let mut wins = 0;
    let mut gaps = Vec::new();
    for seed in 0..10 {
        let sensing = make_sensing(MatrixKind::Pci, img.shape(), 0.5, 8, seed).unwrap();
        let y = sensing.sense(&img).unwrap();
        let score = |strategy| {
            let plan = bior53_plan(strategy, 3, LRule::RecursiveL);
            psnr(&img, &reconstruct_with(&y, &sensing, &plan, &cfg).unwrap().0)
                .unwrap()
                .psnr_db
        };
        let (l, r) = (score(Strategy::LPyramid), score(Strategy::RPyramid));
        wins += usize::from(l >= r);
        gaps.push(l - r);
    }
    let mean = gaps.iter().sum::<f64>() / gaps.len() as f64;
    ensure(wins >= 8, format!("L >= R in {wins}/10 trials, mean gap {mean:+.2} dB"))
}

fn matched_direction() -> Outcome {
    let start = Instant::now();
    let template = bior53_plan(Strategy::LPyramid, 3, LRule::RecursiveL);
    let (design, cfg) = (DesignConfig::default(), SolverConfig::default());
    let mut cells = Vec::new();
    let mut every_cell = true;
    let mut big_gap = false;
    for name in ["camera", "coins", "chelsea"] {
        let img = fixture(name);
        for ratio in [0.1, 0.3, 0.5] {
            let (mut std53, mut matched) = (0.0, 0.0);
            for trial in 0..3 {
                let sensing = make_sensing(MatrixKind::Pci, img.shape(), ratio, 8, trial).unwrap();
                let y = sensing.sense(&img).unwrap();
                let r = run_pipeline(&y, &sensing, &template, &design, &cfg).unwrap();
                std53 += psnr(&img, &r.coarse).unwrap().psnr_db / 3.0;
                matched += psnr(&img, &r.image).unwrap().psnr_db / 3.0;
            }
            every_cell &= matched >= std53;
            if ratio == 0.1 {
                big_gap |= matched - std53 >= 3.0;
            }
            cells.push(format!("{name}@{ratio}: {matched:.2}/{std53:.2}"));
        }
    }
    let secs = start.elapsed().as_secs_f64();
    ensure(
        every_cell && big_gap && secs < 300.0,
        format!("matched/5-3 dB {} ({secs:.0} s)", cells.join(", ")),
    )
}

struct MatrixRuns {
    pci_seconds: f64,
    gauss_seconds: f64,
    pci_psnr: f64,
    gauss_psnr: f64,
}

/// Ten interleaved PCI and dense Gaussian reconstructions of the camera
/// crop at 50%.
fn matrix_runs() -> MatrixRuns {
    let img = fixture("camera");
    let plan = bior53_plan(Strategy::LPyramid, 3, LRule::RecursiveL);
    let cfg = SolverConfig::default();
    let mut runs = MatrixRuns {
        pci_seconds: 0.0,
        gauss_seconds: 0.0,
        pci_psnr: 0.0,
        gauss_psnr: 0.0,
    };
    for seed in 0..10 {
        for kind in [MatrixKind::Pci, MatrixKind::Gaussian] {
            let sensing = make_sensing(kind, img.shape(), 0.5, 8, seed).unwrap();
            let y = sensing.sense(&img).unwrap();
            let (rec, rep) = reconstruct_with(&y, &sensing, &plan, &cfg).unwrap();
            let p = psnr(&img, &rec).unwrap().psnr_db / 10.0;
            if kind == MatrixKind::Pci {
                runs.pci_seconds += rep.seconds;
                runs.pci_psnr += p;
            } else {
                runs.gauss_seconds += rep.seconds;
                runs.gauss_psnr += p;
            }
        }
    }
    runs
}

fn pci_timing(r: &MatrixRuns) -> Outcome {
    let ratio = r.pci_seconds / r.gauss_seconds;
    ensure(
        ratio < 0.5,
        format!(
            "PCI {:.2} s vs Gaussian {:.2} s, ratio {ratio:.2}",
            r.pci_seconds, r.gauss_seconds
        ),
    )
}

fn gaussian_psnr_gap(r: &MatrixRuns) -> Outcome {
    let gap = r.gauss_psnr - r.pci_psnr;
    ensure(
        (-1.0..=6.0).contains(&gap),
        format!(
            "Gaussian {:.2} dB, PCI {:.2} dB, difference {gap:+.2} dB",
            r.gauss_psnr, r.pci_psnr
        ),
    )
}

fn main() -> ExitCode {
    let mut failed = 0;
    let mut report = |n: usize, what: &str, outcome: Outcome| {
        let (tag, msg) = match outcome {
            Ok(m) => ("PASS", m),
            Err(m) => {
                failed += 1;
                ("FAIL", m)
            }
        };
        println!("criterion {n:>2} {tag} {what}: {msg}");
    };
    report(1, "perfect reconstruction", perfect_reconstruction());
    report(2, "composed filters of a fitted 5/3-length pair", fitted_pair_filters());
    report(3, "LeGall 5/3 identity", legall_identity());
    report(4, "adjoint suite", adjoint_suite());
    report(5, "least-squares oracles", least_squares_oracles());
    report(6, "solver sanity", solver_sanity());
    report(7, "L-pyramid beats R-pyramid", l_pyramid_direction());
    report(8, "matched beats 5/3", matched_direction());
    let runs = matrix_runs();
    report(9, "PCI faster than dense Gaussian", pci_timing(&runs));
    report(10, "Gaussian vs PCI PSNR", gaussian_psnr_gap(&runs));
    if failed == 0 {
        println!("all criteria passed");
        ExitCode::SUCCESS
    } else {
        println!("{failed} criteria failed");
        ExitCode::FAILURE
    }
}
