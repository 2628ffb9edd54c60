//! Basis pursuit, `min ||s||_1` subject to `A s = y`, by ADMM.
//!
//! The splitting keeps a feasible iterate `x` and a sparse iterate `z`:
//!
//! ```text
//! x <- argmin { ||x - (z - u)||_R : A x = y }     (projection)
//! z <- soft(a x + (1 - a) z + u, 1 / R)          (shrinkage)
//! u <- u + a x + (1 - a) z - z
//! ```
//!
//! with a diagonal metric `R = rho * diag(w)`. The weights `w` are the
//! squared column norms the operator reports (its atom energies), which
//! keeps `A R^-1 A^T` well conditioned for unnormalized wavelets. The
//! projection solves `(A R^-1 A^T) q = y - A v` by warm-started conjugate
//! gradients, so only `A` and `A^T` are ever applied.
//!
//! `y` is rescaled to unit RMS before iterating and the result scaled back,
//! which makes the solver exactly equivariant to scaling and sign of `y`.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::image::Image;
use crate::pyramid::{DecompositionPlan, Pyramid};
use crate::sensing::Sensing;

pub trait LinearOperator {
    /// `(M, N)`: measurements by coefficients.
    fn dims(&self) -> (usize, usize);

    /// `out = A x`
    fn apply(&self, x: &[f64], out: &mut [f64]);

    /// `out = A^T y`
    fn apply_adjoint(&self, y: &[f64], out: &mut [f64]);

    /// Positive per-coefficient scale for the ADMM metric. `None` means
    /// uniform.
    fn column_weights(&self) -> Option<Vec<f64>> {
        None
    }
}

/// Dense row-major matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct MatrixOperator {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl MatrixOperator {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::LengthMismatch {
                expected: rows * cols,
                got: data.len(),
            });
        }
        Ok(Self { rows, cols, data })
    }

    pub fn identity(n: usize) -> Self {
        let mut data = vec![0.0; n * n];
        for i in 0..n {
            data[i * n + i] = 1.0;
        }
        Self { rows: n, cols: n, data }
    }

    /// i.i.d. standard normal entries scaled by `1/sqrt(rows)`.
    pub fn gaussian(rows: usize, cols: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let s = 1.0 / (rows as f64).sqrt();
        let data = (0..rows * cols)
            .map(|_| s * Distribution::<f64>::sample(&StandardNormal, &mut rng))
            .collect::<Vec<f64>>();
        Self { rows, cols, data }
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        (0..self.rows).map(|i| self.data[i * self.cols + j]).collect()
    }
}

impl LinearOperator for MatrixOperator {
    fn dims(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    fn apply(&self, x: &[f64], out: &mut [f64]) {
        for (i, o) in out.iter_mut().enumerate() {
            let row = &self.data[i * self.cols..(i + 1) * self.cols];
            *o = row.iter().zip(x).map(|(a, b)| a * b).sum();
        }
    }

    fn apply_adjoint(&self, y: &[f64], out: &mut [f64]) {
        out.fill(0.0);
        for (i, &yi) in y.iter().enumerate() {
            let row = &self.data[i * self.cols..(i + 1) * self.cols];
            for (o, a) in out.iter_mut().zip(row) {
                *o += a * yi;
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SolverConfig {
    pub max_iters: usize,
    /// Relative constraint residual `||y - A s|| / ||y||`.
    pub feas_tol: f64,
    /// Relative change of the sparse iterate between iterations.
    pub dual_tol: f64,
    /// ADMM penalty `rho`, relative to unit-RMS measurements.
    pub penalty: f64,
    /// Over-relaxation factor in `(0, 2)`.
    pub relaxation: f64,
    /// Inner conjugate-gradient tolerance, relative to `||y||`.
    pub cg_tol: f64,
    pub cg_max_iters: usize,
    /// `Some(sigma)` relaxes the constraint to `||y - A s|| <= sigma`.
    pub noise: Option<f64>,
    pub seed: u64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            max_iters: 1000,
            feas_tol: 1e-4,
            dual_tol: 3e-4,
            penalty: 10.0,
            relaxation: 1.0,
            cg_tol: 1e-6,
            cg_max_iters: 200,
            noise: None,
            seed: 0,
        }
    }
}

impl SolverConfig {
    fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidParameter(m.to_string()));
        if self.max_iters == 0 {
            return bad("max_iters must be >= 1");
        }
        if !(self.feas_tol > 0.0 && self.dual_tol > 0.0 && self.cg_tol > 0.0) {
            return bad("tolerances must be positive");
        }
        if !(self.penalty > 0.0 && self.penalty.is_finite()) {
            return bad("penalty must be positive");
        }
        if !(self.relaxation > 0.0 && self.relaxation < 2.0) {
            return bad("relaxation must lie in (0, 2)");
        }
        if let Some(s) = self.noise {
            if !(s >= 0.0 && s.is_finite()) {
                return bad("noise level must be a finite non-negative number");
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SolveReport {
    pub iterations: usize,
    /// `||y - A s|| / ||y||` of the returned point (0 when `y = 0`).
    pub residual: f64,
    pub l1_norm: f64,
    pub seconds: f64,
    pub converged: bool,
    /// Relative residual of the sparse iterate after each iteration.
    pub residual_history: Vec<f64>,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// `std::time::Instant` panics on bare wasm32, so timings read zero there.
struct Stopwatch(#[cfg(not(target_arch = "wasm32"))] std::time::Instant);

impl Stopwatch {
    fn start() -> Self {
        Self(
            #[cfg(not(target_arch = "wasm32"))]
            std::time::Instant::now(),
        )
    }

    fn seconds(&self) -> f64 {
        #[cfg(not(target_arch = "wasm32"))]
        return self.0.elapsed().as_secs_f64();
        #[cfg(target_arch = "wasm32")]
        return 0.0;
    }
}

/// Relative mismatch `|<A x, y> - <x, A^T y>| / (||Ax|| ||y||)` for seeded
/// random `x`, `y`.
pub fn dot_test(op: &dyn LinearOperator, seed: u64) -> f64 {
    let (m, n) = op.dims();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let x: Vec<f64> = (0..n).map(|_| StandardNormal.sample(&mut rng)).collect();
    let y: Vec<f64> = (0..m).map(|_| StandardNormal.sample(&mut rng)).collect();
    let mut ax = vec![0.0; m];
    let mut aty = vec![0.0; n];
    op.apply(&x, &mut ax);
    op.apply_adjoint(&y, &mut aty);
    let (l, r) = (dot(&ax, &y), dot(&x, &aty));
    let scale = (norm(&ax) * norm(&y)).max(norm(&x) * norm(&aty));
    if scale == 0.0 {
        return 0.0;
    }
    (l - r).abs() / scale
}

/// Work buffers and the `A R^-1 A^T` application.
struct Gram<'a> {
    op: &'a dyn LinearOperator,
    rinv: Vec<f64>,
    tmp_n: Vec<f64>,
}

impl Gram<'_> {
    /// `out = A R^-1 A^T q + shift q`
    fn apply(&mut self, q: &[f64], shift: f64, out: &mut [f64]) {
        self.op.apply_adjoint(q, &mut self.tmp_n);
        for (t, r) in self.tmp_n.iter_mut().zip(&self.rinv) {
            *t *= r;
        }
        self.op.apply(&self.tmp_n, out);
        if shift != 0.0 {
            for (o, qi) in out.iter_mut().zip(q) {
                *o += shift * qi;
            }
        }
    }

    /// Conjugate gradients on `(G + shift I) q = b`, starting from `q`, until
    /// the residual norm drops below `atol`.
    fn solve(&mut self, b: &[f64], shift: f64, q: &mut [f64], atol: f64, max_iters: usize) {
        let m = b.len();
        let bn = norm(b);
        if bn == 0.0 {
            q.fill(0.0);
            return;
        }
        let mut r = vec![0.0; m];
        self.apply(q, shift, &mut r);
        for (ri, bi) in r.iter_mut().zip(b) {
            *ri = bi - *ri;
        }
        let mut p = r.clone();
        let mut gp = vec![0.0; m];
        let mut rr = dot(&r, &r);
        for _ in 0..max_iters {
            if rr.sqrt() <= atol {
                break;
            }
            self.apply(&p, shift, &mut gp);
            let pgp = dot(&p, &gp);
            if pgp <= 0.0 {
                break;
            }
            let alpha = rr / pgp;
            for i in 0..m {
                q[i] += alpha * p[i];
                r[i] -= alpha * gp[i];
            }
            let rr_new = dot(&r, &r);
            let beta = rr_new / rr;
            rr = rr_new;
            for i in 0..m {
                p[i] = r[i] + beta * p[i];
            }
        }
    }
}

fn soft(v: f64, t: f64) -> f64 {
    if v > t {
        v - t
    } else if v < -t {
        v + t
    } else {
        0.0
    }
}

/// Solves basis pursuit. Non-convergence is reported through
/// `SolveReport::converged`, not as an error.
pub fn solve_bp(a: &dyn LinearOperator, y: &[f64], cfg: &SolverConfig) -> Result<(Vec<f64>, SolveReport)> {
    cfg.validate()?;
    let start = Stopwatch::start();
    let (m, n) = a.dims();
    if y.len() != m {
        return Err(Error::LengthMismatch {
            expected: m,
            got: y.len(),
        });
    }
    if y.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("measurements"));
    }
    let ynorm = norm(y);
    if ynorm == 0.0 {
        let report = SolveReport {
            iterations: 1,
            residual: 0.0,
            l1_norm: 0.0,
            seconds: start.seconds(),
            converged: true,
            residual_history: vec![0.0],
        };
        return Ok((vec![0.0; n], report));
    }

    let scale = ynorm / (m as f64).sqrt();
    let yn: Vec<f64> = y.iter().map(|v| v / scale).collect();
    let yn_norm = norm(&yn);
    let sigma = cfg.noise.map(|s| s / scale);
    let cg_atol = cfg.cg_tol * yn_norm;

    let weights = a.column_weights().unwrap_or_else(|| vec![1.0; n]);
    if weights.len() != n || weights.iter().any(|w| !(*w > 0.0 && w.is_finite())) {
        return Err(Error::InvalidParameter(
            "operator column weights must be positive".into(),
        ));
    }
    let rho: Vec<f64> = weights.iter().map(|w| cfg.penalty * w).collect();
    let thresh: Vec<f64> = rho.iter().map(|r| 1.0 / r).collect();
    let mut gram = Gram {
        op: a,
        rinv: thresh.clone(),
        tmp_n: vec![0.0; n],
    };

    let alpha = cfg.relaxation;
    let mut x = vec![0.0; n];
    let mut z = vec![0.0; n];
    let mut u = vec![0.0; n];
    let mut v = vec![0.0; n];
    let mut q = vec![0.0; m];
    let mut av = vec![0.0; m];
    let mut b = vec![0.0; m];
    let mut az = vec![0.0; m];
    let mut atq = vec![0.0; n];
    let mut history = Vec::new();
    let mut converged = false;
    let mut iterations = 0;

    for _ in 0..cfg.max_iters {
        iterations += 1;
        // projection of v = z - u onto the constraint set
        for i in 0..n {
            v[i] = z[i] - u[i];
        }
        a.apply(&v, &mut av);
        for i in 0..m {
            b[i] = yn[i] - av[i];
        }
        match sigma {
            None => gram.solve(&b, 0.0, &mut q, cg_atol, cfg.cg_max_iters),
            Some(s) => project_ball(&mut gram, &b, s, &mut q, cg_atol, cfg.cg_max_iters),
        }
        a.apply_adjoint(&q, &mut atq);
        for i in 0..n {
            x[i] = v[i] + gram.rinv[i] * atq[i];
        }

        // shrinkage with over-relaxation
        let mut dz2 = 0.0;
        let mut z2 = 0.0;
        for i in 0..n {
            let xh = alpha * x[i] + (1.0 - alpha) * z[i];
            let zn = soft(xh + u[i], thresh[i]);
            u[i] += xh - zn;
            dz2 += (zn - z[i]) * (zn - z[i]);
            z2 += zn * zn;
            z[i] = zn;
        }

        a.apply(&z, &mut az);
        let res = excess_residual(&az, &yn, sigma) / yn_norm;
        history.push(res);
        let change = dz2.sqrt() / z2.sqrt().max(f64::MIN_POSITIVE);
        if res <= cfg.feas_tol && change <= cfg.dual_tol {
            converged = true;
            break;
        }
    }

    // return whichever of the two iterates is sparser among feasible ones
    a.apply(&x, &mut av);
    let x_res = excess_residual(&av, &yn, sigma) / yn_norm;
    let z_res = *history.last().unwrap();
    let (mut sol, res) = if z_res <= cfg.feas_tol { (z, z_res) } else { (x, x_res) };
    for s in &mut sol {
        *s *= scale;
    }
    let l1_norm = sol.iter().map(|v| v.abs()).sum();
    let report = SolveReport {
        iterations,
        residual: res,
        l1_norm,
        seconds: start.seconds(),
        converged,
        residual_history: history,
    };
    Ok((sol, report))
}

/// `||A s - y||`, less the allowed noise level when relaxed.
fn excess_residual(as_: &[f64], y: &[f64], sigma: Option<f64>) -> f64 {
    let r = as_.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
    match sigma {
        Some(s) => (r - s).max(0.0),
        None => r,
    }
}

/// Projection onto `||A x - y|| <= sigma` in the `R` metric. With
/// `x = v + R^-1 A^T q`, `q` solves `(G + mu I) q = b` for the `mu >= 0`
/// at which `mu ||q|| = sigma`; `mu` is found by bisection in log scale.
fn project_ball(gram: &mut Gram<'_>, b: &[f64], sigma: f64, q: &mut [f64], atol: f64, max_iters: usize) {
    if norm(b) <= sigma {
        q.fill(0.0);
        return;
    }
    if sigma == 0.0 {
        gram.solve(b, 0.0, q, atol, max_iters);
        return;
    }
    // mu ||q(mu)|| increases from 0 to ||b|| as mu goes from 0 to infinity
    let (mut lo, mut hi) = (1e-12_f64, 1e12_f64);
    for _ in 0..60 {
        let mid = (lo * hi).sqrt();
        gram.solve(b, mid, q, atol, max_iters);
        let r = mid * norm(q);
        if (r - sigma).abs() <= 1e-9 * sigma {
            return;
        }
        if r > sigma {
            hi = mid;
        } else {
            lo = mid;
        }
        if hi / lo < 1.0 + 1e-12 {
            break;
        }
    }
    gram.solve(b, lo, q, atol, max_iters);
}

/// `A = Phi Psi`: wavelet synthesis followed by sensing. Never materializes
/// a matrix for the pixel sampler.
#[derive(Clone, Debug)]
pub struct CompositeOperator {
    sensing: Sensing,
    pyramid: Pyramid,
    /// row-major offsets of sampled pixels (PCI only)
    offsets: Vec<usize>,
}

impl CompositeOperator {
    pub fn pyramid(&self) -> &Pyramid {
        &self.pyramid
    }

    pub fn sensing(&self) -> &Sensing {
        &self.sensing
    }

    /// `Psi s` as an image.
    pub fn synthesize(&self, s: &[f64]) -> Result<Image> {
        let (m, n) = self.pyramid.shape();
        Image::from_row_major(m, n, self.pyramid.synthesize(s)?)
    }
}

impl LinearOperator for CompositeOperator {
    fn dims(&self) -> (usize, usize) {
        (self.sensing.len(), self.pyramid.len())
    }

    fn apply(&self, x: &[f64], out: &mut [f64]) {
        let mut arr = self.pyramid.structure(x);
        self.pyramid.synthesize_in_place(&mut arr);
        match &self.sensing {
            Sensing::Pci(_) => {
                for (o, &p) in out.iter_mut().zip(&self.offsets) {
                    *o = arr[p];
                }
            }
            Sensing::Dense(d) => d.apply(&arr, out),
        }
    }

    fn apply_adjoint(&self, y: &[f64], out: &mut [f64]) {
        let mut arr = vec![0.0; self.pyramid.len()];
        match &self.sensing {
            Sensing::Pci(_) => {
                for (&v, &p) in y.iter().zip(&self.offsets) {
                    arr[p] = v;
                }
            }
            Sensing::Dense(d) => d.apply_adjoint(y, &mut arr),
        }
        self.pyramid.synthesize_adjoint_in_place(&mut arr);
        let flat = self.pyramid.flatten(&arr);
        out.copy_from_slice(&flat);
    }

    fn column_weights(&self) -> Option<Vec<f64>> {
        Some(self.pyramid.atom_energies())
    }
}

pub fn build_operator(sensing: &Sensing, plan: &DecompositionPlan, shape: (usize, usize)) -> Result<CompositeOperator> {
    if sensing.shape() != shape {
        return Err(Error::ShapeMismatch {
            expected: shape,
            got: sensing.shape(),
        });
    }
    let pyramid = Pyramid::new(shape, plan)?;
    let offsets = match sensing {
        Sensing::Pci(mask) => mask.row_major_offsets(),
        Sensing::Dense(_) => Vec::new(),
    };
    let op = CompositeOperator {
        sensing: sensing.clone(),
        pyramid,
        offsets,
    };
    debug_assert!(dot_test(&op, 0) < 1e-8, "composite adjoint fails the dot test");
    Ok(op)
}
