//! Separable multi-level 2-D decompositions.
//!
//! Coefficients live in place in an `m x n` array. Along columns, the band
//! `L_k` occupies rows `0..r_k` and `H_k` rows `r_k..r_{k-1}`, with
//! `r_0 = m` and `r_k = ceil(r_{k-1} / 2)`; rows are split the same way along
//! columns of the array. A subband is a pair (column band, row band), so its
//! rectangle follows from the two labels alone.
//!
//! Level 1 transforms every column, then every row. Deeper levels differ by
//! strategy:
//!
//! * R-pyramid: only `L_{k-1}L_{k-1}` is split again.
//! * L-pyramid, recursive-L: every subband is split along each direction in
//!   which it is still lowpass. This is the same as a `k`-level 1-D transform
//!   of every column followed by one of every row.
//! * L-pyramid, latest-trio: `L_{k-1}L_{k-1}` is split in both directions,
//!   `L_{k-1}H_{k-1}` along columns and `H_{k-1}L_{k-1}` along rows.

use std::cmp::Reverse;
use std::fmt;
use std::io::Write as _;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::image::Image;
use crate::lifting::{
    forward_block_in_place, forward_in_place, inverse_adjoint_block_in_place, inverse_adjoint_in_place,
    inverse_block_in_place, inverse_in_place, LiftingChain,
};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Strategy {
    RPyramid,
    LPyramid,
}

impl Strategy {
    pub fn name(self) -> &'static str {
        match self {
            Self::RPyramid => "r-pyramid",
            Self::LPyramid => "l-pyramid",
        }
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Strategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "r-pyramid" | "r" | "rpyramid" => Ok(Self::RPyramid),
            "l-pyramid" | "l" | "lpyramid" => Ok(Self::LPyramid),
            other => Err(Error::InvalidParameter(format!("unknown strategy {other:?}"))),
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash)]
pub enum LRule {
    #[default]
    RecursiveL,
    LatestTrio,
}

impl FromStr for LRule {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "recursive-l" | "recursive" => Ok(Self::RecursiveL),
            "latest-trio" | "trio" => Ok(Self::LatestTrio),
            other => Err(Error::InvalidParameter(format!("unknown l-rule {other:?}"))),
        }
    }
}

impl fmt::Display for LRule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::RecursiveL => "recursive-l",
            Self::LatestTrio => "latest-trio",
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct DecompositionPlan {
    pub strategy: Strategy,
    pub levels: usize,
    pub l_rule: LRule,
    pub col_chain: LiftingChain,
    pub row_chain: LiftingChain,
}

impl DecompositionPlan {
    pub fn new(strategy: Strategy, levels: usize, chain: LiftingChain) -> Self {
        Self {
            strategy,
            levels,
            l_rule: LRule::default(),
            col_chain: chain.clone(),
            row_chain: chain,
        }
    }

    pub fn separable(strategy: Strategy, levels: usize, col_chain: LiftingChain, row_chain: LiftingChain) -> Self {
        Self {
            strategy,
            levels,
            l_rule: LRule::default(),
            col_chain,
            row_chain,
        }
    }

    pub fn with_l_rule(mut self, rule: LRule) -> Self {
        self.l_rule = rule;
        self
    }

    /// Default depth for an image of the given shape.
    pub fn default_levels(shape: (usize, usize)) -> usize {
        if shape.0.min(shape.1) >= 512 {
            4
        } else {
            3
        }
    }
}

/// One direction of a subband: lowpass or highpass at a level.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Band {
    L(usize),
    H(usize),
}

impl Band {
    pub fn level(self) -> usize {
        match self {
            Band::L(k) | Band::H(k) => k,
        }
    }

    pub fn is_low(self) -> bool {
        matches!(self, Band::L(_))
    }

    /// `(start, len)` of this band along an axis of length `len0`.
    fn extent(self, len0: usize) -> (usize, usize) {
        let sizes = halvings(len0, self.level());
        match self {
            Band::L(k) => (0, sizes[k]),
            Band::H(k) => (sizes[k], sizes[k - 1] - sizes[k]),
        }
    }

    fn rank(self) -> (u8, Reverse<usize>) {
        match self {
            Band::L(_) => (0, Reverse(0)),
            Band::H(j) => (1, Reverse(j)),
        }
    }
}

impl fmt::Display for Band {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Band::L(k) => write!(f, "L{k}"),
            Band::H(k) => write!(f, "H{k}"),
        }
    }
}

/// `[len, ceil(len/2), ...]`, `levels + 1` entries.
fn halvings(len: usize, levels: usize) -> Vec<usize> {
    let mut v = vec![len];
    for _ in 0..levels {
        v.push(v.last().unwrap().div_ceil(2));
    }
    v
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SubbandInfo {
    pub label: String,
    pub col_band: Band,
    pub row_band: Band,
    pub row0: usize,
    pub col0: usize,
    pub rows: usize,
    pub cols: usize,
}

impl SubbandInfo {
    fn new(strategy: Strategy, col_band: Band, row_band: Band, shape: (usize, usize)) -> Self {
        let (row0, rows) = col_band.extent(shape.0);
        let (col0, cols) = row_band.extent(shape.1);
        let label = match strategy {
            Strategy::RPyramid => {
                let c = if col_band.is_low() { 'L' } else { 'H' };
                let r = if row_band.is_low() { 'L' } else { 'H' };
                format!("{c}{r}{}", col_band.level())
            }
            Strategy::LPyramid => format!("{col_band}{row_band}"),
        };
        Self {
            label,
            col_band,
            row_band,
            row0,
            col0,
            rows,
            cols,
        }
    }

    pub fn len(&self) -> usize {
        self.rows * self.cols
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Both directions lowpass.
    pub fn is_approximation(&self) -> bool {
        self.col_band.is_low() && self.row_band.is_low()
    }

    fn order_key(&self) -> impl Ord {
        let (a, b) = (self.col_band.level(), self.row_band.level());
        (
            Reverse(a.min(b)),
            Reverse(a.max(b)),
            self.col_band.rank(),
            self.row_band.rank(),
        )
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Axis {
    Col,
    Row,
}

/// One batch of 1-D transforms: along columns (`Axis::Col`) each column of
/// the rectangle is one signal.
#[derive(Clone, Copy, Debug)]
struct Op {
    axis: Axis,
    row0: usize,
    rows: usize,
    col0: usize,
    cols: usize,
}

fn check_levels(shape: (usize, usize), levels: usize) -> Result<()> {
    let (m, n) = shape;
    let too_many = Error::TooManyLevels {
        levels,
        rows: m,
        cols: n,
    };
    if levels == 0 {
        return Err(Error::InvalidParameter("levels must be >= 1".into()));
    }
    let (r, c) = (halvings(m, levels - 1), halvings(n, levels - 1));
    if r[levels - 1] < 2 || c[levels - 1] < 2 {
        return Err(too_many);
    }
    Ok(())
}

/// Simulates the plan on band labels; returns the transform batches and the
/// final leaves.
fn plan_ops(shape: (usize, usize), plan: &DecompositionPlan) -> Result<(Vec<Op>, Vec<SubbandInfo>)> {
    check_levels(shape, plan.levels)?;
    let mut leaves = vec![(Band::L(0), Band::L(0))];
    let mut ops = Vec::new();
    for j in 1..=plan.levels {
        let prev = j - 1;
        // which leaves are split along columns / rows at this level
        let col_split = |c: Band, r: Band| -> bool {
            if c != Band::L(prev) {
                return false;
            }
            match (plan.strategy, plan.l_rule) {
                _ if j == 1 => true,
                (Strategy::RPyramid, _) => r == Band::L(prev),
                (Strategy::LPyramid, LRule::RecursiveL) => true,
                (Strategy::LPyramid, LRule::LatestTrio) => r == Band::L(prev) || r == Band::H(prev),
            }
        };
        let row_split = |c: Band, r: Band| -> bool {
            if r != Band::L(prev) {
                return false;
            }
            match (plan.strategy, plan.l_rule) {
                _ if j == 1 => true,
                (Strategy::RPyramid, _) => c == Band::L(prev),
                (Strategy::LPyramid, LRule::RecursiveL) => true,
                (Strategy::LPyramid, LRule::LatestTrio) => c == Band::L(prev) || c == Band::H(prev),
            }
        };
        let mut next = Vec::new();
        for &(c, r) in &leaves {
            if col_split(c, r) {
                let (row0, rows) = c.extent(shape.0);
                let (col0, cols) = r.extent(shape.1);
                ops.push(Op {
                    axis: Axis::Col,
                    row0,
                    rows,
                    col0,
                    cols,
                });
                next.push((Band::L(j), r));
                next.push((Band::H(j), r));
            } else {
                next.push((c, r));
            }
        }
        leaves = next;
        let mut next = Vec::new();
        for &(c, r) in &leaves {
            // row splits see the column-split labels, so the predicate is
            // evaluated against the band the leaf had before this level
            let c_before = match c {
                Band::L(k) | Band::H(k) if k == j => Band::L(prev),
                other => other,
            };
            if row_split(c_before, r) {
                let (row0, rows) = c.extent(shape.0);
                let (col0, cols) = r.extent(shape.1);
                ops.push(Op {
                    axis: Axis::Row,
                    row0,
                    rows,
                    col0,
                    cols,
                });
                next.push((c, Band::L(j)));
                next.push((c, Band::H(j)));
            } else {
                next.push((c, r));
            }
        }
        leaves = next;
    }
    let mut infos: Vec<SubbandInfo> = leaves
        .into_iter()
        .map(|(c, r)| SubbandInfo::new(plan.strategy, c, r, shape))
        .collect();
    infos.sort_by_cached_key(|s| s.order_key());
    Ok((merge_ops(ops), infos))
}

/// Fuses neighbouring batches that act on adjacent rectangles with the
/// same extent along the transform axis.
fn merge_ops(ops: Vec<Op>) -> Vec<Op> {
    let mut out: Vec<Op> = Vec::with_capacity(ops.len());
    for op in ops {
        if let Some(last) = out.last_mut() {
            if last.axis == op.axis {
                match op.axis {
                    Axis::Col if last.row0 == op.row0 && last.rows == op.rows && last.col0 + last.cols == op.col0 => {
                        last.cols += op.cols;
                        continue;
                    }
                    Axis::Row if last.col0 == op.col0 && last.cols == op.cols && last.row0 + last.rows == op.row0 => {
                        last.rows += op.rows;
                        continue;
                    }
                    _ => {}
                }
            }
        }
        out.push(op);
    }
    out
}

/// Ordered subband descriptors; the order is the flattening order of the
/// coefficient vector.
pub fn subband_layout(shape: (usize, usize), plan: &DecompositionPlan) -> Result<Vec<SubbandInfo>> {
    Ok(plan_ops(shape, plan)?.1)
}

/// Precomputed separable transform for one shape and plan.
#[derive(Clone, Debug)]
pub struct Pyramid {
    shape: (usize, usize),
    plan: DecompositionPlan,
    ops: Vec<Op>,
    layout: Vec<SubbandInfo>,
    /// `flat[i] = array[perm[i]]`, array row-major
    perm: Vec<usize>,
}

#[derive(Clone, Copy)]
enum Dir {
    Forward,
    Inverse,
    InverseAdjoint,
}

impl Pyramid {
    pub fn new(shape: (usize, usize), plan: &DecompositionPlan) -> Result<Self> {
        let (ops, layout) = plan_ops(shape, plan)?;
        let n = shape.1;
        let mut perm = Vec::with_capacity(shape.0 * shape.1);
        for s in &layout {
            for r in s.row0..s.row0 + s.rows {
                perm.extend((s.col0..s.col0 + s.cols).map(|c| r * n + c));
            }
        }
        debug_assert_eq!(perm.len(), shape.0 * shape.1);
        Ok(Self {
            shape,
            plan: plan.clone(),
            ops,
            layout,
            perm,
        })
    }

    pub fn shape(&self) -> (usize, usize) {
        self.shape
    }

    pub fn len(&self) -> usize {
        self.perm.len()
    }

    pub fn is_empty(&self) -> bool {
        self.perm.is_empty()
    }

    pub fn plan(&self) -> &DecompositionPlan {
        &self.plan
    }

    pub fn layout(&self) -> &[SubbandInfo] {
        &self.layout
    }

    fn run(&self, arr: &mut [f64], op: &Op, dir: Dir) {
        let n = self.shape.1;
        let chain = match op.axis {
            Axis::Col => &self.plan.col_chain,
            Axis::Row => &self.plan.row_chain,
        };
        let apply = |buf: &mut [f64], scratch: &mut Vec<f64>| match dir {
            Dir::Forward => forward_in_place(buf, scratch, chain),
            Dir::Inverse => inverse_in_place(buf, scratch, chain),
            Dir::InverseAdjoint => inverse_adjoint_in_place(buf, scratch, chain),
        };
        let mut scratch = Vec::new();
        match op.axis {
            Axis::Row => {
                for r in op.row0..op.row0 + op.rows {
                    let start = r * n + op.col0;
                    apply(&mut arr[start..start + op.cols], &mut scratch);
                }
            }
            Axis::Col => {
                let apply_block = |buf: &mut [f64], scratch: &mut Vec<f64>| match dir {
                    Dir::Forward => forward_block_in_place(buf, op.cols, scratch, chain),
                    Dir::Inverse => inverse_block_in_place(buf, op.cols, scratch, chain),
                    Dir::InverseAdjoint => inverse_adjoint_block_in_place(buf, op.cols, scratch, chain),
                };
                if op.col0 == 0 && op.cols == n {
                    apply_block(&mut arr[op.row0 * n..(op.row0 + op.rows) * n], &mut scratch);
                } else {
                    let mut buf = Vec::with_capacity(op.rows * op.cols);
                    for r in op.row0..op.row0 + op.rows {
                        buf.extend_from_slice(&arr[r * n + op.col0..r * n + op.col0 + op.cols]);
                    }
                    apply_block(&mut buf, &mut scratch);
                    for (i, r) in (op.row0..op.row0 + op.rows).enumerate() {
                        arr[r * n + op.col0..r * n + op.col0 + op.cols]
                            .copy_from_slice(&buf[i * op.cols..(i + 1) * op.cols]);
                    }
                }
            }
        }
    }

    /// In-place analysis of a row-major array.
    pub fn analyze_in_place(&self, arr: &mut [f64]) {
        for op in &self.ops {
            self.run(arr, op, Dir::Forward);
        }
    }

    /// In-place synthesis of a row-major coefficient array.
    pub fn synthesize_in_place(&self, arr: &mut [f64]) {
        for op in self.ops.iter().rev() {
            self.run(arr, op, Dir::Inverse);
        }
    }

    /// Transpose of [`Self::synthesize_in_place`].
    pub fn synthesize_adjoint_in_place(&self, arr: &mut [f64]) {
        for op in &self.ops {
            self.run(arr, op, Dir::InverseAdjoint);
        }
    }

    /// Coefficient array to coefficient vector.
    pub fn flatten(&self, arr: &[f64]) -> Vec<f64> {
        self.perm.iter().map(|&p| arr[p]).collect()
    }

    /// Coefficient vector to coefficient array (inverse and transpose of
    /// [`Self::flatten`]).
    pub fn structure(&self, flat: &[f64]) -> Vec<f64> {
        let mut arr = vec![0.0; flat.len()];
        for (&p, &v) in self.perm.iter().zip(flat) {
            arr[p] = v;
        }
        arr
    }

    fn check_len(&self, got: usize) -> Result<()> {
        if got != self.len() {
            return Err(Error::LengthMismatch {
                expected: self.len(),
                got,
            });
        }
        Ok(())
    }

    /// Row-major pixels to flat coefficients.
    pub fn analyze(&self, pixels: &[f64]) -> Result<Vec<f64>> {
        self.check_len(pixels.len())?;
        let mut arr = pixels.to_vec();
        self.analyze_in_place(&mut arr);
        Ok(self.flatten(&arr))
    }

    /// Flat coefficients to row-major pixels.
    pub fn synthesize(&self, coeffs: &[f64]) -> Result<Vec<f64>> {
        self.check_len(coeffs.len())?;
        let mut arr = self.structure(coeffs);
        self.synthesize_in_place(&mut arr);
        Ok(arr)
    }

    /// Row-major pixels to flat coefficients through the transpose of
    /// [`Self::synthesize`].
    pub fn synthesize_adjoint(&self, pixels: &[f64]) -> Result<Vec<f64>> {
        self.check_len(pixels.len())?;
        let mut arr = pixels.to_vec();
        self.synthesize_adjoint_in_place(&mut arr);
        Ok(self.flatten(&arr))
    }

    /// Energy of each synthesis atom, per subband (atoms within a subband
    /// share one footprint up to boundary effects). Measured on the atom at
    /// the middle of each subband.
    pub fn atom_energies(&self) -> Vec<f64> {
        let mut weights = vec![0.0; self.len()];
        let mut offset = 0;
        for s in &self.layout {
            let mut flat = vec![0.0; self.len()];
            let center = (s.rows / 2) * s.cols + s.cols / 2;
            flat[offset + center] = 1.0;
            let img = self.synthesize(&flat).expect("length matches");
            let e: f64 = img.iter().map(|v| v * v).sum();
            weights[offset..offset + s.len()].fill(e);
            offset += s.len();
        }
        weights
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Subband {
    pub info: SubbandInfo,
    /// row-major block
    pub data: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SubbandTree {
    pub plan: DecompositionPlan,
    pub shape: (usize, usize),
    pub subbands: Vec<Subband>,
}

impl SubbandTree {
    /// Builds a tree from a flat coefficient vector in layout order.
    pub fn from_flat(shape: (usize, usize), plan: &DecompositionPlan, flat: &[f64]) -> Result<Self> {
        let layout = subband_layout(shape, plan)?;
        if flat.len() != shape.0 * shape.1 {
            return Err(Error::LengthMismatch {
                expected: shape.0 * shape.1,
                got: flat.len(),
            });
        }
        let mut offset = 0;
        let subbands = layout
            .into_iter()
            .map(|info| {
                let data = flat[offset..offset + info.len()].to_vec();
                offset += info.len();
                Subband { info, data }
            })
            .collect();
        Ok(Self {
            plan: plan.clone(),
            shape,
            subbands,
        })
    }

    pub fn flatten(&self) -> Vec<f64> {
        self.subbands.iter().flat_map(|s| s.data.iter().copied()).collect()
    }

    pub fn len(&self) -> usize {
        self.subbands.iter().map(|s| s.data.len()).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn get(&self, label: &str) -> Option<&Subband> {
        self.subbands.iter().find(|s| s.info.label == label)
    }

    pub fn labels(&self) -> Vec<&str> {
        self.subbands.iter().map(|s| s.info.label.as_str()).collect()
    }

    /// `SUBBANDS m n count`, one `label rows cols` line per subband, then the
    /// flat coefficients as little-endian f64.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        let (m, n) = self.shape;
        let _ = writeln!(out, "SUBBANDS {m} {n} {}", self.subbands.len());
        for s in &self.subbands {
            let _ = writeln!(out, "{} {} {}", s.info.label, s.info.rows, s.info.cols);
        }
        for v in self.flatten() {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    /// Parses [`Self::to_bytes`] output; the header must match the layout
    /// `plan` produces for the stored shape.
    pub fn from_bytes(bytes: &[u8], plan: &DecompositionPlan) -> Result<Self> {
        let mut pos = 0;
        let mut next_line = || -> Result<String> {
            let end = bytes[pos..]
                .iter()
                .position(|&b| b == b'\n')
                .ok_or_else(|| Error::Malformed("truncated subband header".into()))?;
            let line = std::str::from_utf8(&bytes[pos..pos + end])
                .map_err(|_| Error::Malformed("subband header is not text".into()))?
                .to_string();
            pos += end + 1;
            Ok(line)
        };
        let head = next_line()?;
        let f: Vec<&str> = head.split_whitespace().collect();
        let parse = |s: &str| -> Result<usize> {
            s.parse()
                .map_err(|_| Error::Malformed(format!("bad number {s:?} in subband header")))
        };
        if f.len() != 4 || f[0] != "SUBBANDS" {
            return Err(Error::Malformed(format!("bad subband header {head:?}")));
        }
        let shape = (parse(f[1])?, parse(f[2])?);
        let count = parse(f[3])?;
        let layout = subband_layout(shape, plan)?;
        if layout.len() != count {
            return Err(Error::Malformed(format!(
                "header lists {count} subbands, plan has {}",
                layout.len()
            )));
        }
        for info in &layout {
            let line = next_line()?;
            let want = format!("{} {} {}", info.label, info.rows, info.cols);
            if line.trim() != want {
                return Err(Error::Malformed(format!("expected subband {want:?}, got {line:?}")));
            }
        }
        let body = &bytes[pos..];
        let total = shape.0 * shape.1;
        if body.len() != total * 8 {
            return Err(Error::LengthMismatch {
                expected: total * 8,
                got: body.len(),
            });
        }
        let flat: Vec<f64> = body
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        Self::from_flat(shape, plan, &flat)
    }
}

pub fn forward_2d(img: &Image, plan: &DecompositionPlan) -> Result<SubbandTree> {
    let p = Pyramid::new(img.shape(), plan)?;
    let flat = p.analyze(img.pixels())?;
    SubbandTree::from_flat(img.shape(), plan, &flat)
}

pub fn inverse_2d(tree: &SubbandTree) -> Result<Image> {
    let p = Pyramid::new(tree.shape, &tree.plan)?;
    for (s, info) in tree.subbands.iter().zip(p.layout()) {
        if s.info != *info || s.data.len() != info.len() {
            return Err(Error::Malformed(format!(
                "subband {} does not match the plan layout",
                s.info.label
            )));
        }
    }
    if tree.subbands.len() != p.layout().len() {
        return Err(Error::Malformed("subband count does not match the plan".into()));
    }
    let pixels = p.synthesize(&tree.flatten())?;
    Image::from_row_major(tree.shape.0, tree.shape.1, pixels)
}

/// `Psi s`: coefficient vector to image.
pub fn synthesis_apply(s: &[f64], plan: &DecompositionPlan, shape: (usize, usize)) -> Result<Image> {
    let p = Pyramid::new(shape, plan)?;
    Image::from_row_major(shape.0, shape.1, p.synthesize(s)?)
}

/// `Psi^T y`: image to coefficient vector.
pub fn synthesis_adjoint(img: &Image, plan: &DecompositionPlan) -> Result<Vec<f64>> {
    Pyramid::new(img.shape(), plan)?.synthesize_adjoint(img.pixels())
}
