use liftcs::lifting::{apply_predict, apply_update, inverse_1d, lazy_split};
use liftcs::LiftingChain;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::random_vec;

/// Dense least squares by Householder QR with column-major storage.
pub fn dense_ls(rows: &[Vec<f64>], b: &[f64]) -> Vec<f64> {
    let p = rows[0].len();
    let mut a: Vec<Vec<f64>> = (0..p).map(|j| rows.iter().map(|r| r[j]).collect()).collect();
    let mut b = b.to_vec();
    for k in 0..p {
        let alpha = -a[k][k].signum() * a[k][k..].iter().map(|v| v * v).sum::<f64>().sqrt();
        let mut v: Vec<f64> = a[k][k..].to_vec();
        v[0] -= alpha;
        let vv: f64 = v.iter().map(|x| x * x).sum();
        if vv == 0.0 {
            continue;
        }
        let reflect = |col: &mut [f64]| {
            let f = 2.0 * v.iter().zip(&col[k..]).map(|(x, y)| x * y).sum::<f64>() / vv;
            for (c, vi) in col[k..].iter_mut().zip(&v) {
                *c -= f * vi;
            }
        };
        for col in a.iter_mut().skip(k) {
            reflect(col);
        }
        reflect(&mut b);
    }
    let mut x = vec![0.0; p];
    for i in (0..p).rev() {
        let s: f64 = (i + 1..p).map(|j| a[j][i] * x[j]).sum();
        x[i] = (b[i] - s) / a[i][i];
    }
    x
}

/// Rows `x[2n - Lt + 2 + 2k]`, target `x[2n+1] - ref[n]`, for every `n`
/// whose taps stay inside the signal.
pub fn predict_oracle(x: &[f64], lt: usize, reference: &[f64]) -> Vec<f64> {
    let (mut rows, mut b) = (Vec::new(), Vec::new());
    for n in 0..x.len() / 2 {
        let first = 2 * n as isize - lt as isize + 2;
        let last = 2 * n + lt;
        if first < 0 || last >= x.len() {
            continue;
        }
        rows.push((0..lt).map(|k| x[first as usize + 2 * k]).collect());
        b.push(x[2 * n + 1] - reference[n]);
    }
    dense_ls(&rows, &b)
}

/// Builds the lowpass-only synthesis as an affine function of `s` by
/// probing the lifting engine, keeping output samples whose approximation
/// samples need no boundary extension in the update step.
pub fn update_system(x: &[f64], t: &[f64], ls: usize) -> (Vec<Vec<f64>>, Vec<f64>) {
    let lt = t.len();
    let (even, odd) = lazy_split(x);
    let detail = apply_predict(&even, &odd, t);
    let chain = LiftingChain::single(t.to_vec(), vec![0.0; ls]).unwrap();
    let lowpass = |a: &[f64]| inverse_1d(a, &vec![0.0; detail.len()], &chain).unwrap();
    let base = lowpass(&even);
    // columns straight from the detail, so nothing cancels against `base`
    let cols: Vec<Vec<f64>> = (0..ls)
        .map(|i| {
            let mut e = vec![0.0; ls];
            e[i] = 1.0;
            lowpass(&apply_update(&vec![0.0; even.len()], &detail, &e))
        })
        .collect();
    let half = ls as isize / 2;
    let a_ok = |j: isize| j - half >= 0 && j + half - 1 < detail.len() as isize && j < even.len() as isize;
    let mut rows = Vec::new();
    let mut b = Vec::new();
    for n in 0..x.len() {
        let j = (n / 2) as isize;
        let ok = if n % 2 == 0 {
            a_ok(j)
        } else {
            let lo = j - lt as isize / 2 + 1;
            lo >= 0 && lo + lt as isize <= even.len() as isize && (lo..lo + lt as isize).all(a_ok)
        };
        if ok {
            rows.push(cols.iter().map(|c| c[n]).collect());
            b.push(x[n] - base[n]);
        }
    }
    (rows, b)
}

/// Random walk with a slow sinusoid on top: smooth at the sample scale
/// but broadband enough that the fits stay well conditioned.
pub fn smooth_signal(seed: u64, len: usize) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let steps = random_vec(&mut rng, len);
    let phase = steps[0] * 3.0;
    let mut level = 0.0;
    steps
        .iter()
        .enumerate()
        .map(|(i, s)| {
            level += 4.0 * s;
            level + 40.0 * (i as f64 / 23.0 + phase).sin()
        })
        .collect()
}
