#![allow(dead_code)]

pub mod oracles;

use std::path::PathBuf;

use liftcs::{load_image, Image, LiftingChain, LiftingStage};
use rand::Rng;

pub const FIXTURES: [&str; 7] = ["camera", "coins", "chelsea", "coffee", "grass", "brick", "moon"];

pub fn fixture_path(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("tests/data")
        .join(format!("{name}.pgm"))
}

pub fn fixture(name: &str) -> Image {
    load_image(fixture_path(name)).expect("fixture image")
}

/// Smooth 64x64 test card: two low-frequency sinusoids and a soft blob.
pub fn smooth_image(rows: usize, cols: usize) -> Image {
    Image::from_fn(rows, cols, |r, c| {
        let (y, x) = (r as f64 / rows as f64, c as f64 / cols as f64);
        let blob = (-((x - 0.35).powi(2) + (y - 0.6).powi(2)) / 0.03).exp();
        110.0
            + 50.0 * (2.0 * std::f64::consts::PI * (1.1 * y + 0.3)).sin() * (2.0 * std::f64::consts::PI * 0.7 * x).cos()
            + 60.0 * blob
            + 20.0 * x
    })
}

pub fn random_taps(rng: &mut impl Rng, max_half: usize) -> Vec<f64> {
    let len = 2 * rng.random_range(1..=max_half);
    (0..len).map(|_| rng.random_range(-0.6..0.6)).collect()
}

/// 1 to 3 stages of random even-length filters, sometimes with a gain.
pub fn random_chain(rng: &mut impl Rng) -> LiftingChain {
    let stages = (0..rng.random_range(1..=3))
        .map(|_| LiftingStage::new(random_taps(rng, 3), random_taps(rng, 3)).unwrap())
        .collect();
    let gain = if rng.random_bool(0.3) {
        rng.random_range(0.5..2.0)
    } else {
        1.0
    };
    LiftingChain::with_gain(stages, gain).unwrap()
}

pub fn random_vec(rng: &mut impl Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// `max |a - b| / max(1, max |a|)`
pub fn rel_err(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    let scale = a.iter().fold(1.0f64, |m, v| m.max(v.abs()));
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max) / scale
}
