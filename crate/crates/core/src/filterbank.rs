//! Equivalent two-channel filterbank of a lifting chain.
//!
//! Starting from the lazy bank `H0 = 1, H1 = z, F0 = 1, F1 = z^-1`, each
//! predict step with `T(z)` and update step with `S(z)` rewrites
//!
//! ```text
//! H1 <- H1 - H0 T(z^2)     F0 <- F0 + F1 T(z^2)
//! H0 <- H0 + H1 S(z^2)     F1 <- F1 - F0 S(z^2)
//! ```
//!
//! where the update uses the already-predicted `H1` and `F0`. Filters are
//! reported in the time domain, `H(z) = sum_n h[n] z^-n`, so that
//! `approx[n] = (h0 * x)[2n]` and `detail[n] = (h1 * x)[2n]`.

use std::f64::consts::PI;
use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::lifting::LiftingChain;

/// Finite Laurent polynomial `sum_i coeffs[i] z^(low + i)`.
#[derive(Clone, Debug, PartialEq)]
struct Laurent {
    low: isize,
    coeffs: Vec<f64>,
}

impl Laurent {
    fn monomial(power: isize) -> Self {
        Self {
            low: power,
            coeffs: vec![1.0],
        }
    }

    fn high(&self) -> isize {
        self.low + self.coeffs.len() as isize - 1
    }

    fn get(&self, power: isize) -> f64 {
        let i = power - self.low;
        if i < 0 {
            return 0.0;
        }
        self.coeffs.get(i as usize).copied().unwrap_or(0.0)
    }

    fn add_scaled(&self, other: &Laurent, scale: f64) -> Laurent {
        let low = self.low.min(other.low);
        let high = self.high().max(other.high());
        let coeffs = (low..=high).map(|p| self.get(p) + scale * other.get(p)).collect();
        Laurent { low, coeffs }
    }

    fn mul(&self, other: &Laurent) -> Laurent {
        let mut coeffs = vec![0.0; self.coeffs.len() + other.coeffs.len() - 1];
        for (i, a) in self.coeffs.iter().enumerate() {
            for (j, b) in other.coeffs.iter().enumerate() {
                coeffs[i + j] += a * b;
            }
        }
        Laurent {
            low: self.low + other.low,
            coeffs,
        }
    }

    /// `P(z) -> P(z^2)`
    fn upsample(&self) -> Laurent {
        let mut coeffs = vec![0.0; 2 * self.coeffs.len() - 1];
        for (i, c) in self.coeffs.iter().enumerate() {
            coeffs[2 * i] = *c;
        }
        Laurent {
            low: 2 * self.low,
            coeffs,
        }
    }

    fn scaled(mut self, k: f64) -> Laurent {
        self.coeffs.iter_mut().for_each(|c| *c *= k);
        self
    }

    fn into_filter(self) -> Filter {
        // h[n] is the coefficient of z^-n
        let start = -self.high();
        let mut taps = self.coeffs;
        taps.reverse();
        Filter { start, taps }
    }
}

/// Time-domain FIR filter with taps `h[start], h[start + 1], ...`.
#[derive(Clone, Debug, PartialEq)]
pub struct Filter {
    pub start: isize,
    pub taps: Vec<f64>,
}

impl Filter {
    pub fn end(&self) -> isize {
        self.start + self.taps.len() as isize - 1
    }

    pub fn support_len(&self) -> usize {
        self.taps.len()
    }

    pub fn at(&self, n: isize) -> f64 {
        let i = n - self.start;
        if i < 0 {
            return 0.0;
        }
        self.taps.get(i as usize).copied().unwrap_or(0.0)
    }

    /// Drops exact zeros at both ends.
    pub fn trimmed(&self) -> Filter {
        let first = self.taps.iter().position(|&v| v != 0.0);
        let Some(first) = first else {
            return Filter {
                start: 0,
                taps: Vec::new(),
            };
        };
        let last = self.taps.iter().rposition(|&v| v != 0.0).unwrap();
        Filter {
            start: self.start + first as isize,
            taps: self.taps[first..=last].to_vec(),
        }
    }

    /// `H(e^{jw})` as (magnitude, phase).
    pub fn response(&self, omega: f64) -> (f64, f64) {
        let (mut re, mut im) = (0.0, 0.0);
        for (i, &h) in self.taps.iter().enumerate() {
            let n = (self.start + i as isize) as f64;
            re += h * (omega * n).cos();
            im -= h * (omega * n).sin();
        }
        (re.hypot(im), im.atan2(re))
    }

    /// Magnitude response sampled at `points` frequencies in `[0, pi]`.
    pub fn magnitude_response(&self, points: usize) -> Vec<(f64, f64)> {
        (0..points)
            .map(|i| {
                let w = if points > 1 {
                    PI * i as f64 / (points - 1) as f64
                } else {
                    0.0
                };
                (w, self.response(w).0)
            })
            .collect()
    }

    /// `name,support_start,tap0,tap1,...`
    pub fn to_csv_row(&self, name: &str) -> String {
        let mut s = format!("{name},{}", self.start);
        for t in &self.taps {
            let _ = write!(s, ",{t:?}");
        }
        s
    }

    pub fn from_csv_row(line: &str) -> Result<(String, Filter)> {
        let mut parts = line.trim().split(',');
        let name = parts
            .next()
            .filter(|s| !s.is_empty())
            .ok_or_else(|| Error::Malformed(format!("filter row {line:?}")))?
            .to_string();
        let start = parts
            .next()
            .and_then(|s| s.trim().parse().ok())
            .ok_or_else(|| Error::Malformed(format!("filter row {line:?}")))?;
        let taps = parts
            .map(|s| s.trim().parse::<f64>())
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|e| Error::Malformed(format!("filter tap: {e}")))?;
        Ok((name, Filter { start, taps }))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Filterbank {
    pub h0: Filter,
    pub h1: Filter,
    pub f0: Filter,
    pub f1: Filter,
}

impl Filterbank {
    pub fn filters(&self) -> [(&'static str, &Filter); 4] {
        [("h0", &self.h0), ("h1", &self.h1), ("f0", &self.f0), ("f1", &self.f1)]
    }

    pub fn to_csv(&self) -> String {
        self.filters().iter().map(|(n, f)| f.to_csv_row(n) + "\n").collect()
    }
}

/// `T(z) = z^-(Lt/2 - 1) sum_i t[i] z^i`
fn predict_poly(t: &[f64]) -> Laurent {
    Laurent {
        low: -(t.len() as isize / 2 - 1),
        coeffs: t.to_vec(),
    }
}

/// `S(z) = z^(Ls/2 - 1) sum_i s[i] z^-i`
fn update_poly(s: &[f64]) -> Laurent {
    let mut coeffs = s.to_vec();
    coeffs.reverse();
    Laurent {
        low: -(s.len() as isize / 2),
        coeffs,
    }
}

pub fn compose_filterbank(chain: &LiftingChain) -> Filterbank {
    let mut h0 = Laurent::monomial(0);
    let mut h1 = Laurent::monomial(1);
    let mut f0 = Laurent::monomial(0);
    let mut f1 = Laurent::monomial(-1);
    for st in chain.stages() {
        let t2 = predict_poly(st.predict()).upsample();
        h1 = h1.add_scaled(&h0.mul(&t2), -1.0);
        f0 = f0.add_scaled(&f1.mul(&t2), 1.0);
        let s2 = update_poly(st.update()).upsample();
        h0 = h0.add_scaled(&h1.mul(&s2), 1.0);
        f1 = f1.add_scaled(&f0.mul(&s2), -1.0);
    }
    let k = chain.gain();
    Filterbank {
        h0: h0.scaled(k).into_filter(),
        h1: h1.scaled(1.0 / k).into_filter(),
        f0: f0.scaled(1.0 / k).into_filter(),
        f1: f1.scaled(k).into_filter(),
    }
}
