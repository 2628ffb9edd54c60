//! One-dimensional lifting engine.
//!
//! A signal `x` of length `L` is split into an even channel `x[2n]` and an
//! odd channel `x[2n+1]`. Each [`LiftingStage`] first predicts the odd
//! channel from the even one,
//!
//! ```text
//! detail[n] = odd[n] - sum_k t[k] * x[2n - Lt + 2 + 2k]
//! ```
//!
//! and then updates the even channel from the new detail,
//!
//! ```text
//! approx[n] = even[n] + sum_i s[i] * detail[n + Ls/2 - 1 - i]
//! ```
//!
//! Samples outside the signal come from the whole-sample symmetric extension
//! of the full-rate signal (`x[-i] = x[i]`, `x[L-1+i] = x[L-1-i]`). The
//! reflection maps even positions to even positions and odd to odd, so each
//! channel can be extended on its own and every step stays exactly
//! invertible.

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct LiftingStage {
    predict: Vec<f64>,
    update: Vec<f64>,
}

impl LiftingStage {
    pub fn new(predict: Vec<f64>, update: Vec<f64>) -> Result<Self> {
        check_taps("predict", &predict)?;
        check_taps("update", &update)?;
        Ok(Self { predict, update })
    }

    pub fn predict(&self) -> &[f64] {
        &self.predict
    }

    pub fn update(&self) -> &[f64] {
        &self.update
    }
}

fn check_taps(what: &str, taps: &[f64]) -> Result<()> {
    if taps.len() < 2 || !taps.len().is_multiple_of(2) {
        return Err(Error::InvalidParameter(format!(
            "{what} filter must have even length >= 2, got {}",
            taps.len()
        )));
    }
    if taps.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("lifting filter"));
    }
    Ok(())
}

/// Ordered lifting stages plus an optional channel normalization
/// (`approx *= gain`, `detail /= gain` after the last stage).
#[derive(Clone, Debug, PartialEq)]
pub struct LiftingChain {
    stages: Vec<LiftingStage>,
    gain: f64,
}

impl LiftingChain {
    pub fn new(stages: Vec<LiftingStage>) -> Result<Self> {
        Self::with_gain(stages, 1.0)
    }

    pub fn with_gain(stages: Vec<LiftingStage>, gain: f64) -> Result<Self> {
        if stages.is_empty() {
            return Err(Error::InvalidParameter("lifting chain needs at least one stage".into()));
        }
        if !gain.is_finite() || gain == 0.0 {
            return Err(Error::InvalidParameter(format!("invalid channel gain {gain}")));
        }
        Ok(Self { stages, gain })
    }

    /// Single-stage chain.
    pub fn single(predict: Vec<f64>, update: Vec<f64>) -> Result<Self> {
        Self::new(vec![LiftingStage::new(predict, update)?])
    }

    pub fn stages(&self) -> &[LiftingStage] {
        &self.stages
    }

    pub fn gain(&self) -> f64 {
        self.gain
    }

    pub fn push(&mut self, stage: LiftingStage) {
        self.stages.push(stage);
    }
}

/// Reflects a full-rate index into `0..len` (whole-sample symmetric).
#[inline]
fn reflect(i: isize, len: usize) -> usize {
    let last = len as isize - 1;
    if (0..=last).contains(&i) {
        return i as usize;
    }
    if last == 0 {
        return 0;
    }
    let period = 2 * last;
    let mut j = i.rem_euclid(period);
    if j > last {
        j = period - j;
    }
    j as usize
}

/// Even-channel index holding full-rate sample `2j` after extension.
#[inline]
fn even_at(j: isize, len: usize) -> usize {
    reflect(2 * j, len) / 2
}

/// Odd-channel index holding full-rate sample `2j + 1` after extension.
#[inline]
fn odd_at(j: isize, len: usize) -> usize {
    (reflect(2 * j + 1, len) - 1) / 2
}

/// Range of output positions `n` whose taps `n + shift .. n + shift + taps`
/// all fall inside a channel of length `chan`.
#[inline]
fn interior(outputs: usize, shift: isize, taps: usize, chan: usize) -> std::ops::Range<usize> {
    let lo = (-shift).max(0) as usize;
    let hi = (chan as isize - taps as isize - shift + 1).clamp(0, outputs as isize) as usize;
    lo.min(hi)..hi
}

/// `odd[n] += sign * sum_k t[k] even[n - Lt/2 + 1 + k]`
fn predict_step(even: &[f64], odd: &mut [f64], t: &[f64], sign: f64) {
    let len = even.len() + odd.len();
    let shift = 1 - t.len() as isize / 2;
    let inner = interior(odd.len(), shift, t.len(), even.len());
    for (n, o) in odd.iter_mut().enumerate() {
        let base = n as isize + shift;
        let p: f64 = if inner.contains(&n) {
            let w = &even[base as usize..base as usize + t.len()];
            w.iter().zip(t).map(|(e, tk)| e * tk).sum()
        } else {
            t.iter()
                .enumerate()
                .map(|(k, &tk)| tk * even[even_at(base + k as isize, len)])
                .sum()
        };
        *o += sign * p;
    }
}

/// Transpose of [`predict_step`]: scatters odd-channel values onto the
/// even channel.
fn predict_step_adjoint(odd: &[f64], even: &mut [f64], t: &[f64], sign: f64) {
    let len = even.len() + odd.len();
    let shift = 1 - t.len() as isize / 2;
    let inner = interior(odd.len(), shift, t.len(), even.len());
    for (n, &o) in odd.iter().enumerate() {
        let base = n as isize + shift;
        if inner.contains(&n) {
            let w = &mut even[base as usize..base as usize + t.len()];
            for (e, tk) in w.iter_mut().zip(t) {
                *e += sign * tk * o;
            }
        } else {
            for (k, &tk) in t.iter().enumerate() {
                even[even_at(base + k as isize, len)] += sign * tk * o;
            }
        }
    }
}

/// `even[n] += sign * sum_i s[i] odd[n + Ls/2 - 1 - i]`
fn update_step(odd: &[f64], even: &mut [f64], s: &[f64], sign: f64) {
    if odd.is_empty() {
        return;
    }
    let len = even.len() + odd.len();
    // taps run backwards from n + Ls/2 - 1 down to n - Ls/2
    let shift = -(s.len() as isize / 2);
    let inner = interior(even.len(), shift, s.len(), odd.len());
    let top = s.len() as isize / 2 - 1;
    for (n, e) in even.iter_mut().enumerate() {
        let u: f64 = if inner.contains(&n) {
            let lo = (n as isize + shift) as usize;
            let w = &odd[lo..lo + s.len()];
            w.iter().zip(s.iter().rev()).map(|(d, si)| d * si).sum()
        } else {
            let base = n as isize + top;
            s.iter()
                .enumerate()
                .map(|(i, &si)| si * odd[odd_at(base - i as isize, len)])
                .sum()
        };
        *e += sign * u;
    }
}

fn update_step_adjoint(even: &[f64], odd: &mut [f64], s: &[f64], sign: f64) {
    if odd.is_empty() {
        return;
    }
    let len = even.len() + odd.len();
    let shift = -(s.len() as isize / 2);
    let inner = interior(even.len(), shift, s.len(), odd.len());
    let top = s.len() as isize / 2 - 1;
    for (n, &e) in even.iter().enumerate() {
        if inner.contains(&n) {
            let lo = (n as isize + shift) as usize;
            let w = &mut odd[lo..lo + s.len()];
            for (d, si) in w.iter_mut().zip(s.iter().rev()) {
                *d += sign * si * e;
            }
        } else {
            let base = n as isize + top;
            for (i, &si) in s.iter().enumerate() {
                odd[odd_at(base - i as isize, len)] += sign * si * e;
            }
        }
    }
}

pub fn lazy_split(x: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let even = x.iter().step_by(2).copied().collect();
    let odd = x.iter().skip(1).step_by(2).copied().collect();
    (even, odd)
}

pub fn lazy_merge(even: &[f64], odd: &[f64]) -> Result<Vec<f64>> {
    if even.len() != odd.len() && even.len() != odd.len() + 1 {
        return Err(Error::InvalidParameter(format!(
            "cannot interleave {} even and {} odd samples",
            even.len(),
            odd.len()
        )));
    }
    let mut out = Vec::with_capacity(even.len() + odd.len());
    for (i, &e) in even.iter().enumerate() {
        out.push(e);
        if let Some(&o) = odd.get(i) {
            out.push(o);
        }
    }
    Ok(out)
}

/// Detail produced by a single predict step on the lazy channels.
pub fn apply_predict(even: &[f64], odd: &[f64], t: &[f64]) -> Vec<f64> {
    let mut detail = odd.to_vec();
    predict_step(even, &mut detail, t, -1.0);
    detail
}

/// Approximation produced by a single update step.
pub fn apply_update(even: &[f64], detail: &[f64], s: &[f64]) -> Vec<f64> {
    let mut approx = even.to_vec();
    update_step(detail, &mut approx, s, 1.0);
    approx
}

fn split_into(x: &[f64], out: &mut [f64]) {
    let ne = x.len().div_ceil(2);
    for (i, &v) in x.iter().enumerate() {
        if i % 2 == 0 {
            out[i / 2] = v;
        } else {
            out[ne + i / 2] = v;
        }
    }
}

fn merge_into(ch: &[f64], out: &mut [f64]) {
    let ne = ch.len().div_ceil(2);
    for (i, o) in out.iter_mut().enumerate() {
        *o = if i % 2 == 0 { ch[i / 2] } else { ch[ne + i / 2] };
    }
}

fn lift_forward(ch: &mut [f64], chain: &LiftingChain) {
    let ne = ch.len().div_ceil(2);
    let (even, odd) = ch.split_at_mut(ne);
    for st in &chain.stages {
        predict_step(even, odd, &st.predict, -1.0);
        update_step(odd, even, &st.update, 1.0);
    }
    if chain.gain != 1.0 {
        even.iter_mut().for_each(|v| *v *= chain.gain);
        odd.iter_mut().for_each(|v| *v /= chain.gain);
    }
}

fn lift_inverse(ch: &mut [f64], chain: &LiftingChain) {
    let ne = ch.len().div_ceil(2);
    let (even, odd) = ch.split_at_mut(ne);
    if chain.gain != 1.0 {
        even.iter_mut().for_each(|v| *v /= chain.gain);
        odd.iter_mut().for_each(|v| *v *= chain.gain);
    }
    for st in chain.stages.iter().rev() {
        update_step(odd, even, &st.update, -1.0);
        predict_step(even, odd, &st.predict, 1.0);
    }
}

/// Transpose of [`lift_inverse`], applied to split channels.
fn lift_inverse_adjoint(ch: &mut [f64], chain: &LiftingChain) {
    let ne = ch.len().div_ceil(2);
    let (even, odd) = ch.split_at_mut(ne);
    for st in &chain.stages {
        predict_step_adjoint(odd, even, &st.predict, 1.0);
        update_step_adjoint(even, odd, &st.update, -1.0);
    }
    if chain.gain != 1.0 {
        even.iter_mut().for_each(|v| *v /= chain.gain);
        odd.iter_mut().for_each(|v| *v *= chain.gain);
    }
}

// Block variants: a channel is a sequence of `w`-wide vectors, and every
// lifting step acts on whole vectors. Used for column transforms of a
// row-major array, where each row is one vector.

#[inline]
fn axpy(y: &mut [f64], a: f64, x: &[f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += a * xi;
    }
}

/// Block form of [`predict_step`] (`adjoint` selects the transpose).
fn predict_block(even: &mut [f64], odd: &mut [f64], w: usize, t: &[f64], sign: f64, adjoint: bool) {
    let (ne, no) = (even.len() / w, odd.len() / w);
    let len = ne + no;
    let shift = 1 - t.len() as isize / 2;
    for n in 0..no {
        let base = n as isize + shift;
        let o = &mut odd[n * w..(n + 1) * w];
        for (k, &tk) in t.iter().enumerate() {
            if tk == 0.0 {
                continue;
            }
            let j = even_at(base + k as isize, len);
            let e = &mut even[j * w..(j + 1) * w];
            if adjoint {
                axpy(e, sign * tk, o);
            } else {
                axpy(o, sign * tk, e);
            }
        }
    }
}

/// Block form of [`update_step`] (`adjoint` selects the transpose).
fn update_block(even: &mut [f64], odd: &mut [f64], w: usize, s: &[f64], sign: f64, adjoint: bool) {
    let (ne, no) = (even.len() / w, odd.len() / w);
    if no == 0 {
        return;
    }
    let len = ne + no;
    let top = s.len() as isize / 2 - 1;
    for n in 0..ne {
        let base = n as isize + top;
        let e = &mut even[n * w..(n + 1) * w];
        for (i, &si) in s.iter().enumerate() {
            if si == 0.0 {
                continue;
            }
            let j = odd_at(base - i as isize, len);
            let d = &mut odd[j * w..(j + 1) * w];
            if adjoint {
                axpy(d, sign * si, e);
            } else {
                axpy(e, sign * si, d);
            }
        }
    }
}

fn split_block(x: &[f64], w: usize, out: &mut [f64]) {
    let len = x.len() / w;
    let ne = len.div_ceil(2);
    for i in 0..len {
        let dst = if i % 2 == 0 { i / 2 } else { ne + i / 2 };
        out[dst * w..(dst + 1) * w].copy_from_slice(&x[i * w..(i + 1) * w]);
    }
}

fn merge_block(ch: &[f64], w: usize, out: &mut [f64]) {
    let len = ch.len() / w;
    let ne = len.div_ceil(2);
    for i in 0..len {
        let src = if i % 2 == 0 { i / 2 } else { ne + i / 2 };
        out[i * w..(i + 1) * w].copy_from_slice(&ch[src * w..(src + 1) * w]);
    }
}

fn scale_channels(ch: &mut [f64], split: usize, a: f64, d: f64) {
    let (even, odd) = ch.split_at_mut(split);
    even.iter_mut().for_each(|v| *v *= a);
    odd.iter_mut().for_each(|v| *v *= d);
}

/// [`forward_in_place`] applied to `buf.len() / width` vectors of `width`
/// values: every one of the `width` interleaved signals is transformed.
pub fn forward_block_in_place(buf: &mut [f64], width: usize, scratch: &mut Vec<f64>, chain: &LiftingChain) {
    let len = buf.len() / width;
    if len < 2 {
        return;
    }
    scratch.resize(buf.len(), 0.0);
    split_block(buf, width, scratch);
    let split = len.div_ceil(2) * width;
    let (even, odd) = scratch.split_at_mut(split);
    for st in &chain.stages {
        predict_block(even, odd, width, &st.predict, -1.0, false);
        update_block(even, odd, width, &st.update, 1.0, false);
    }
    if chain.gain != 1.0 {
        scale_channels(scratch, split, chain.gain, 1.0 / chain.gain);
    }
    buf.copy_from_slice(scratch);
}

/// Inverse of [`forward_block_in_place`].
pub fn inverse_block_in_place(buf: &mut [f64], width: usize, scratch: &mut Vec<f64>, chain: &LiftingChain) {
    let len = buf.len() / width;
    if len < 2 {
        return;
    }
    let split = len.div_ceil(2) * width;
    if chain.gain != 1.0 {
        scale_channels(buf, split, 1.0 / chain.gain, chain.gain);
    }
    {
        let (even, odd) = buf.split_at_mut(split);
        for st in chain.stages.iter().rev() {
            update_block(even, odd, width, &st.update, -1.0, false);
            predict_block(even, odd, width, &st.predict, 1.0, false);
        }
    }
    scratch.resize(buf.len(), 0.0);
    merge_block(buf, width, scratch);
    buf.copy_from_slice(scratch);
}

/// Transpose of [`inverse_block_in_place`].
pub fn inverse_adjoint_block_in_place(buf: &mut [f64], width: usize, scratch: &mut Vec<f64>, chain: &LiftingChain) {
    let len = buf.len() / width;
    if len < 2 {
        return;
    }
    scratch.resize(buf.len(), 0.0);
    split_block(buf, width, scratch);
    let split = len.div_ceil(2) * width;
    {
        let (even, odd) = scratch.split_at_mut(split);
        for st in &chain.stages {
            predict_block(even, odd, width, &st.predict, 1.0, true);
            update_block(even, odd, width, &st.update, -1.0, true);
        }
    }
    if chain.gain != 1.0 {
        scale_channels(scratch, split, 1.0 / chain.gain, chain.gain);
    }
    buf.copy_from_slice(scratch);
}

/// Forward transform in place: on return `buf` holds `[approx | detail]`
/// with `ceil(L/2)` approximation samples.
pub fn forward_in_place(buf: &mut [f64], scratch: &mut Vec<f64>, chain: &LiftingChain) {
    if buf.len() < 2 {
        return;
    }
    scratch.resize(buf.len(), 0.0);
    split_into(buf, scratch);
    lift_forward(scratch, chain);
    buf.copy_from_slice(scratch);
}

/// Inverse of [`forward_in_place`].
pub fn inverse_in_place(buf: &mut [f64], scratch: &mut Vec<f64>, chain: &LiftingChain) {
    if buf.len() < 2 {
        return;
    }
    lift_inverse(buf, chain);
    scratch.resize(buf.len(), 0.0);
    merge_into(buf, scratch);
    buf.copy_from_slice(scratch);
}

/// Transpose of [`inverse_in_place`]: full-rate input, `[approx | detail]`
/// output.
pub fn inverse_adjoint_in_place(buf: &mut [f64], scratch: &mut Vec<f64>, chain: &LiftingChain) {
    if buf.len() < 2 {
        return;
    }
    scratch.resize(buf.len(), 0.0);
    split_into(buf, scratch);
    lift_inverse_adjoint(scratch, chain);
    buf.copy_from_slice(scratch);
}

/// Single-level analysis. Returns `(approx, detail)`.
pub fn forward_1d(x: &[f64], chain: &LiftingChain) -> (Vec<f64>, Vec<f64>) {
    let mut buf = x.to_vec();
    forward_in_place(&mut buf, &mut Vec::new(), chain);
    let detail = buf.split_off(x.len().div_ceil(2));
    (buf, detail)
}

/// Single-level synthesis, the exact inverse of [`forward_1d`].
pub fn inverse_1d(approx: &[f64], detail: &[f64], chain: &LiftingChain) -> Result<Vec<f64>> {
    if approx.len() != detail.len() && approx.len() != detail.len() + 1 {
        return Err(Error::InvalidParameter(format!(
            "{} approximation and {} detail samples do not come from one split",
            approx.len(),
            detail.len()
        )));
    }
    let mut buf = [approx, detail].concat();
    inverse_in_place(&mut buf, &mut Vec::new(), chain);
    Ok(buf)
}

/// Transpose of the synthesis map `(approx, detail) -> x`.
pub fn transpose_inverse_1d(y: &[f64], chain: &LiftingChain) -> (Vec<f64>, Vec<f64>) {
    let mut buf = y.to_vec();
    inverse_adjoint_in_place(&mut buf, &mut Vec::new(), chain);
    let detail = buf.split_off(y.len().div_ceil(2));
    (buf, detail)
}
