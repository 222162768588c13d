//! Forward-mode automatic differentiation on batched dual numbers.
//!
//! A [`Dual`] carries a value and a fixed-width vector of directional
//! derivatives ([`TANGENT_WIDTH`] tangents per pass). Functions to be
//! differentiated implement [`DiffFn`] once, generically over [`Scalar`],
//! and are then evaluable with plain `f64`, first-order duals, or
//! second-order duals (`Dual<Dual>`), which is how the solver obtains
//! exact Lagrangian Hessians of small stage terms.
//!
//! Sparse Jacobians use distance-2 column coloring so that structurally
//! orthogonal columns share a tangent slot; on multiple-shooting problems
//! this keeps the number of evaluation passes proportional to the stage
//! bandwidth instead of the variable count.

use std::array;
use std::ops::{Add, Div, Mul, Neg, Sub};
use thiserror::Error;

/// Number of directional derivatives carried per evaluation pass.
pub const TANGENT_WIDTH: usize = 8;

#[derive(Debug, Error)]
pub enum AdError {
    #[error("non-finite value produced while differentiating ({context})")]
    NonFinite { context: &'static str },
    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },
    #[error("sparsity pattern entry ({row}, {col}) outside a {nrows}x{ncols} Jacobian")]
    PatternOutOfRange { row: usize, col: usize, nrows: usize, ncols: usize },
    #[error("duplicate sparsity pattern entry ({row}, {col})")]
    PatternDuplicate { row: usize, col: usize },
}

/// The arithmetic closure shared by `f64` and dual numbers.
///
/// `min`/`max` and comparisons are deliberately absent: everything
/// evaluated through this trait must be smooth.
pub trait Scalar:
    Copy
    + Send
    + Sync
    + 'static
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + Neg<Output = Self>
    + Add<f64, Output = Self>
    + Sub<f64, Output = Self>
    + Mul<f64, Output = Self>
    + Div<f64, Output = Self>
{
    fn from_f64(v: f64) -> Self;
    /// Value part, stripped of all derivative information.
    fn value(&self) -> f64;
    fn exp(self) -> Self;
    fn ln(self) -> Self;
    fn powi(self, n: i32) -> Self;
}

impl Scalar for f64 {
    fn from_f64(v: f64) -> Self {
        v
    }
    fn value(&self) -> f64 {
        *self
    }
    fn exp(self) -> Self {
        f64::exp(self)
    }
    fn ln(self) -> Self {
        f64::ln(self)
    }
    fn powi(self, n: i32) -> Self {
        f64::powi(self, n)
    }
}

/// Dual number with [`TANGENT_WIDTH`] tangents over a base scalar `T`.
#[derive(Debug, Clone, Copy)]
pub struct Dual<T = f64> {
    pub re: T,
    pub dt: [T; TANGENT_WIDTH],
}

/// First-order dual over `f64`.
pub type Dual1 = Dual<f64>;
/// Second-order dual (forward-over-forward).
pub type Dual2 = Dual<Dual<f64>>;

impl<T: Scalar> Dual<T> {
    pub fn constant(v: f64) -> Self {
        Self { re: T::from_f64(v), dt: [T::from_f64(0.0); TANGENT_WIDTH] }
    }

    /// Lift a base scalar with zero tangents.
    pub fn lift(re: T) -> Self {
        Self { re, dt: [T::from_f64(0.0); TANGENT_WIDTH] }
    }

    /// Value seeded as the `slot`-th independent variable of this pass.
    pub fn seeded(v: f64, slot: usize) -> Self {
        debug_assert!(slot < TANGENT_WIDTH);
        let mut dt = [T::from_f64(0.0); TANGENT_WIDTH];
        dt[slot] = T::from_f64(1.0);
        Self { re: T::from_f64(v), dt }
    }
}

impl<T: Scalar> Add for Dual<T> {
    type Output = Self;
    fn add(self, rhs: Self) -> Self {
        Self { re: self.re + rhs.re, dt: array::from_fn(|i| self.dt[i] + rhs.dt[i]) }
    }
}

impl<T: Scalar> Sub for Dual<T> {
    type Output = Self;
    fn sub(self, rhs: Self) -> Self {
        Self { re: self.re - rhs.re, dt: array::from_fn(|i| self.dt[i] - rhs.dt[i]) }
    }
}

impl<T: Scalar> Mul for Dual<T> {
    type Output = Self;
    fn mul(self, rhs: Self) -> Self {
        Self {
            re: self.re * rhs.re,
            dt: array::from_fn(|i| self.re * rhs.dt[i] + self.dt[i] * rhs.re),
        }
    }
}

impl<T: Scalar> Div for Dual<T> {
    type Output = Self;
    fn div(self, rhs: Self) -> Self {
        let q = self.re / rhs.re;
        Self { re: q, dt: array::from_fn(|i| (self.dt[i] - q * rhs.dt[i]) / rhs.re) }
    }
}

impl<T: Scalar> Neg for Dual<T> {
    type Output = Self;
    fn neg(self) -> Self {
        Self { re: -self.re, dt: array::from_fn(|i| -self.dt[i]) }
    }
}

impl<T: Scalar> Add<f64> for Dual<T> {
    type Output = Self;
    fn add(self, rhs: f64) -> Self {
        Self { re: self.re + rhs, dt: self.dt }
    }
}

impl<T: Scalar> Sub<f64> for Dual<T> {
    type Output = Self;
    fn sub(self, rhs: f64) -> Self {
        Self { re: self.re - rhs, dt: self.dt }
    }
}

impl<T: Scalar> Mul<f64> for Dual<T> {
    type Output = Self;
    fn mul(self, rhs: f64) -> Self {
        Self { re: self.re * rhs, dt: array::from_fn(|i| self.dt[i] * rhs) }
    }
}

impl<T: Scalar> Div<f64> for Dual<T> {
    type Output = Self;
    fn div(self, rhs: f64) -> Self {
        Self { re: self.re / rhs, dt: array::from_fn(|i| self.dt[i] / rhs) }
    }
}

impl<T: Scalar> Scalar for Dual<T> {
    fn from_f64(v: f64) -> Self {
        Self::constant(v)
    }

    fn value(&self) -> f64 {
        self.re.value()
    }

    fn exp(self) -> Self {
        let e = self.re.exp();
        Self { re: e, dt: array::from_fn(|i| self.dt[i] * e) }
    }

    fn ln(self) -> Self {
        Self { re: self.re.ln(), dt: array::from_fn(|i| self.dt[i] / self.re) }
    }

    fn powi(self, n: i32) -> Self {
        if n == 0 {
            return Self::constant(1.0);
        }
        let d = self.re.powi(n - 1) * f64::from(n);
        Self { re: self.re.powi(n), dt: array::from_fn(|i| self.dt[i] * d) }
    }
}

/// A function evaluable over any [`Scalar`], the unit of differentiation.
pub trait DiffFn: Send + Sync {
    fn n_in(&self) -> usize;
    fn n_out(&self) -> usize;
    fn eval<T: Scalar>(&self, x: &[T], out: &mut [T]);
}

/// Nonzero positions of a Jacobian or Hessian.
#[derive(Debug, Clone)]
pub struct SparsityPattern {
    pub nrows: usize,
    pub ncols: usize,
    pub entries: Vec<(usize, usize)>,
}

impl SparsityPattern {
    pub fn new(nrows: usize, ncols: usize, mut entries: Vec<(usize, usize)>) -> Result<Self, AdError> {
        for &(r, c) in &entries {
            if r >= nrows || c >= ncols {
                return Err(AdError::PatternOutOfRange { row: r, col: c, nrows, ncols });
            }
        }
        entries.sort_unstable();
        for w in entries.windows(2) {
            if w[0] == w[1] {
                return Err(AdError::PatternDuplicate { row: w[0].0, col: w[0].1 });
            }
        }
        Ok(Self { nrows, ncols, entries })
    }

    pub fn dense(nrows: usize, ncols: usize) -> Self {
        let entries = (0..nrows).flat_map(|r| (0..ncols).map(move |c| (r, c))).collect();
        Self { nrows, ncols, entries }
    }
}

/// Triplet-form sparse matrix (rows sorted, unique positions).
#[derive(Debug, Clone)]
pub struct SparseMat {
    pub nrows: usize,
    pub ncols: usize,
    pub rows: Vec<usize>,
    pub cols: Vec<usize>,
    pub vals: Vec<f64>,
}

impl SparseMat {
    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        let mut dense = vec![vec![0.0; self.ncols]; self.nrows];
        for ((&r, &c), &v) in self.rows.iter().zip(&self.cols).zip(&self.vals) {
            dense[r][c] += v;
        }
        dense
    }
}

/// Greedy distance-2 coloring: columns sharing a row never share a color.
/// Returns per-column colors and the color count.
pub fn color_columns(pattern: &SparsityPattern) -> (Vec<usize>, usize) {
    let ncols = pattern.ncols;
    let mut col_rows: Vec<Vec<usize>> = vec![Vec::new(); ncols];
    for &(r, c) in &pattern.entries {
        col_rows[c].push(r);
    }
    let mut row_colors: Vec<Vec<usize>> = vec![Vec::new(); pattern.nrows];
    let mut colors = vec![usize::MAX; ncols];
    let mut n_colors = 0;
    for c in 0..ncols {
        let mut forbidden: Vec<bool> = vec![false; n_colors + 1];
        for &r in &col_rows[c] {
            for &col_color in &row_colors[r] {
                if col_color < forbidden.len() {
                    forbidden[col_color] = true;
                }
            }
        }
        let color = (0..).find(|&k| k >= forbidden.len() || !forbidden[k]).unwrap();
        colors[c] = color;
        n_colors = n_colors.max(color + 1);
        for &r in &col_rows[c] {
            row_colors[r].push(color);
        }
    }
    (colors, n_colors)
}

fn check_finite(vals: &[f64], context: &'static str) -> Result<(), AdError> {
    if vals.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(AdError::NonFinite { context })
    }
}

/// Exact gradient of a scalar-valued [`DiffFn`] at `x`.
pub fn gradient<F: DiffFn>(f: &F, x: &[f64]) -> Result<Vec<f64>, AdError> {
    if f.n_in() != x.len() {
        return Err(AdError::Dimension { expected: f.n_in(), got: x.len() });
    }
    debug_assert_eq!(f.n_out(), 1);
    let n = x.len();
    let mut grad = vec![0.0; n];
    let mut xd: Vec<Dual1> = x.iter().map(|&v| Dual1::constant(v)).collect();
    let mut out = [Dual1::constant(0.0)];
    for base in (0..n).step_by(TANGENT_WIDTH) {
        let width = TANGENT_WIDTH.min(n - base);
        for k in 0..width {
            xd[base + k] = Dual1::seeded(x[base + k], k);
        }
        out[0] = Dual1::constant(0.0);
        f.eval(&xd, &mut out);
        grad[base..base + width].copy_from_slice(&out[0].dt[..width]);
        for k in 0..width {
            xd[base + k] = Dual1::constant(x[base + k]);
        }
    }
    check_finite(&grad, "gradient")?;
    Ok(grad)
}

/// Exact Jacobian of a vector-valued [`DiffFn`] at `x`.
///
/// With a pattern, structurally orthogonal columns are compressed into
/// shared tangent slots and entries outside the pattern are guaranteed
/// zero in the result (they are never even sampled). Without a pattern
/// the evaluation is dense.
pub fn jacobian<F: DiffFn>(
    f: &F,
    x: &[f64],
    pattern: Option<&SparsityPattern>,
) -> Result<SparseMat, AdError> {
    if f.n_in() != x.len() {
        return Err(AdError::Dimension { expected: f.n_in(), got: x.len() });
    }
    let n = x.len();
    let m = f.n_out();
    let dense_pattern;
    let pattern = match pattern {
        Some(p) => {
            if p.nrows != m || p.ncols != n {
                return Err(AdError::Dimension { expected: m * n, got: p.nrows * p.ncols });
            }
            p
        }
        None => {
            dense_pattern = SparsityPattern::dense(m, n);
            &dense_pattern
        }
    };

    let (colors, n_colors) = color_columns(pattern);
    let mut values = vec![0.0; pattern.entries.len()];
    let mut xd: Vec<Dual1> = x.iter().map(|&v| Dual1::constant(v)).collect();
    let mut out = vec![Dual1::constant(0.0); m];

    for color_base in (0..n_colors).step_by(TANGENT_WIDTH) {
        let width = TANGENT_WIDTH.min(n_colors - color_base);
        for c in 0..n {
            let k = colors[c];
            if k >= color_base && k < color_base + width {
                xd[c] = Dual1::seeded(x[c], k - color_base);
            }
        }
        for o in out.iter_mut() {
            *o = Dual1::constant(0.0);
        }
        f.eval(&xd, &mut out);
        for (idx, &(r, c)) in pattern.entries.iter().enumerate() {
            let k = colors[c];
            if k >= color_base && k < color_base + width {
                values[idx] = out[r].dt[k - color_base];
            }
        }
        for c in 0..n {
            let k = colors[c];
            if k >= color_base && k < color_base + width {
                xd[c] = Dual1::constant(x[c]);
            }
        }
    }
    check_finite(&values, "jacobian")?;
    Ok(SparseMat {
        nrows: m,
        ncols: n,
        rows: pattern.entries.iter().map(|e| e.0).collect(),
        cols: pattern.entries.iter().map(|e| e.1).collect(),
        vals: values,
    })
}

/// Dense Hessian of `w . f(x)` (a multiplier-weighted output sum),
/// computed by forward-over-forward evaluation. Returns a full `n x n`
/// symmetric matrix in row-major order. Intended for small stage terms.
pub fn hessian_weighted<F: DiffFn>(f: &F, x: &[f64], w: &[f64]) -> Result<Vec<f64>, AdError> {
    if f.n_in() != x.len() {
        return Err(AdError::Dimension { expected: f.n_in(), got: x.len() });
    }
    if f.n_out() != w.len() {
        return Err(AdError::Dimension { expected: f.n_out(), got: w.len() });
    }
    hessian_weighted_with(x, w, &mut |xd, out| f.eval(xd, out))
}

/// Core of [`hessian_weighted`], taking the second-order evaluation as a
/// closure so object-safe callers can use it too.
pub fn hessian_weighted_with(
    x: &[f64],
    w: &[f64],
    eval2: &mut dyn FnMut(&[Dual2], &mut [Dual2]),
) -> Result<Vec<f64>, AdError> {
    let n = x.len();
    let m = w.len();
    let mut hess = vec![0.0; n * n];
    let mut xd: Vec<Dual2> = x.iter().map(|&v| Dual2::constant(v)).collect();
    let mut out = vec![Dual2::constant(0.0); m];

    for ib in (0..n).step_by(TANGENT_WIDTH) {
        let iw = TANGENT_WIDTH.min(n - ib);
        for jb in (ib..n).step_by(TANGENT_WIDTH) {
            let jw = TANGENT_WIDTH.min(n - jb);
            // Outer tangents along block i, inner tangents along block j.
            for k in 0..iw {
                xd[ib + k].dt[k] = Dual1::constant(1.0);
            }
            for k in 0..jw {
                xd[jb + k].re = Dual1::seeded(x[jb + k], k);
            }
            for o in out.iter_mut() {
                *o = Dual2::constant(0.0);
            }
            eval2(&xd, &mut out);
            for i in 0..iw {
                for j in 0..jw {
                    let mut h = 0.0;
                    for (r, &wr) in w.iter().enumerate() {
                        h += wr * out[r].dt[i].dt[j];
                    }
                    hess[(ib + i) * n + (jb + j)] = h;
                    hess[(jb + j) * n + (ib + i)] = h;
                }
            }
            for k in 0..iw {
                xd[ib + k] = Dual2::constant(x[ib + k]);
            }
            for k in 0..jw {
                xd[jb + k] = Dual2::constant(x[jb + k]);
            }
        }
    }
    check_finite(&hess, "hessian")?;
    Ok(hess)
}
