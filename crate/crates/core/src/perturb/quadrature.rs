//! Product-integration rules for weakly singular convolutions.
//!
//! For an exponent `a > 0` and step `h`, the rule approximates
//!
//! ```text
//! int_0^{t_i} tau^(a-1) H(tau) dtau
//!     ~ sum_{j<i} interior[j] H(t_j) + endpoint[i] H(t_i)
//! ```
//!
//! by replacing `H` with its piecewise-linear interpolant and integrating
//! the moments of `tau^(a-1)` exactly. The weights do not depend on `i`, so
//! a convolution against a kernel `tau^(a-1) G(tau)` reduces to a discrete
//! Toeplitz sum over precomputed matrices.

use std::sync::OnceLock;

use nalgebra::DMatrix;
use rayon::prelude::*;

use crate::error::{invalid, Result};
use crate::grid::{GridValue, TimeGrid, Trajectory};
use crate::mlfunc::{g_kernel, ml_matrix_raw, rgamma, FractionalOrder, MlControl, MlParams};
use crate::operator::{mul_acc, BoundedOperator};

const GL_POINTS: usize = 16;

/// Gauss-Legendre nodes and weights on `[-1, 1]`.
fn gauss_legendre() -> &'static [(f64, f64); GL_POINTS] {
    static RULE: OnceLock<[(f64, f64); GL_POINTS]> = OnceLock::new();
    RULE.get_or_init(|| {
        let n = GL_POINTS;
        let mut rule = [(0.0, 0.0); GL_POINTS];
        for i in 0..n.div_ceil(2) {
            let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
            let mut dp = 0.0;
            for _ in 0..100 {
                let (mut p0, mut p1) = (1.0, x);
                for k in 2..=n {
                    let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
                    p0 = p1;
                    p1 = p2;
                }
                dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
                let dx = p1 / dp;
                x -= dx;
                if dx.abs() < 1e-16 {
                    break;
                }
            }
            let w = 2.0 / ((1.0 - x * x) * dp * dp);
            rule[i] = (-x, w);
            rule[n - 1 - i] = (x, w);
        }
        rule
    })
}

/// Moments `P = int_j^{j+1} u^(a-1) (j+1-u) du` and `Q = int_j^{j+1} u^(a-1) (u-j) du`.
fn moments(a: f64, j: usize) -> (f64, f64) {
    if j == 0 {
        return (1.0 / (a * (a + 1.0)), 1.0 / (a + 1.0));
    }
    // The integrand is analytic on [j, j+1] for j >= 1; 16 Gauss points
    // reach full double precision.
    let jf = j as f64;
    let (mut p, mut q) = (0.0, 0.0);
    for &(x, w) in gauss_legendre() {
        let v = 0.5 * (x + 1.0);
        let f = (jf + v).powf(a - 1.0) * 0.5 * w;
        p += f * (1.0 - v);
        q += f * v;
    }
    (p, q)
}

/// Weights of the product trapezoidal rule for `tau^(a-1)` on a uniform grid.
#[derive(Clone, Debug)]
pub struct ProductRule {
    exponent: f64,
    step: f64,
    interior: Vec<f64>,
    endpoint: Vec<f64>,
}

impl ProductRule {
    pub fn new(exponent: f64, step: f64, steps: usize) -> Result<Self> {
        if !(exponent.is_finite() && exponent > 0.0) {
            return Err(invalid("exponent", format!("must be positive, got {exponent}")));
        }
        if !(step.is_finite() && step > 0.0) {
            return Err(invalid("step", format!("must be positive, got {step}")));
        }
        let scale = step.powf(exponent);
        let m: Vec<(f64, f64)> = (0..steps).map(|j| moments(exponent, j)).collect();
        let interior = (0..steps)
            .map(|j| scale * (m[j].0 + if j > 0 { m[j - 1].1 } else { 0.0 }))
            .collect();
        let endpoint = (0..=steps)
            .map(|i| if i == 0 { 0.0 } else { scale * m[i - 1].1 })
            .collect();
        Ok(Self {
            exponent,
            step,
            interior,
            endpoint,
        })
    }

    pub fn exponent(&self) -> f64 {
        self.exponent
    }

    pub fn step(&self) -> f64 {
        self.step
    }

    pub fn steps(&self) -> usize {
        self.interior.len()
    }

    pub fn interior(&self) -> &[f64] {
        &self.interior
    }

    pub fn endpoint(&self) -> &[f64] {
        &self.endpoint
    }

    /// Applies the rule on `[0, t_i]` to samples `h[j] = H(t_j)`, `j = 0..=i`.
    pub fn integrate(&self, i: usize, h: &[f64]) -> f64 {
        let body: f64 = self.interior[..i].iter().zip(h).map(|(w, v)| w * v).sum();
        body + self.endpoint[i] * h[i]
    }
}

/// A convolution kernel `k(tau) = tau^(a-1) G(tau)` with `G` smooth and
/// matrix-valued, prepared for a fixed grid.
#[derive(Clone, Debug)]
pub struct ProductKernel {
    dim: usize,
    grid: TimeGrid,
    interior: Vec<DMatrix<f64>>,
    endpoint: Vec<DMatrix<f64>>,
}

impl ProductKernel {
    /// Samples `G` at the grid offsets and folds in the rule weights.
    pub fn new(
        exponent: f64,
        grid: &TimeGrid,
        dim: usize,
        smooth: impl Fn(f64) -> Result<DMatrix<f64>> + Sync,
    ) -> Result<Self> {
        let rule = ProductRule::new(exponent, grid.step(), grid.steps())?;
        let samples = (0..grid.len())
            .into_par_iter()
            .map(|j| smooth(grid.node(j)))
            .collect::<Result<Vec<_>>>()?;
        if let Some(bad) = samples.iter().find(|g| g.nrows() != dim || g.ncols() != dim) {
            return Err(crate::error::Error::DimensionMismatch {
                expected: dim,
                found: bad.nrows(),
                context: "kernel sample",
            });
        }
        let interior = rule.interior().iter().zip(&samples).map(|(w, g)| g * *w).collect();
        let endpoint = rule.endpoint().iter().zip(&samples).map(|(w, g)| g * *w).collect();
        Ok(Self {
            dim,
            grid: *grid,
            interior,
            endpoint,
        })
    }

    /// Kernel `g_b(tau) I` of the Riemann-Liouville integral of order `b`.
    pub fn riemann_liouville(order: f64, grid: &TimeGrid, dim: usize) -> Result<Self> {
        let c = rgamma(order);
        Self::new(order, grid, dim, |_| Ok(DMatrix::identity(dim, dim) * c))
    }

    /// Kernel of `T(tau; A) = tau^(a-1) E_{a,a}(A tau^a)`.
    pub fn rl_family(alpha: FractionalOrder, a: &BoundedOperator, grid: &TimeGrid) -> Result<Self> {
        let al = alpha.value();
        let params = MlParams::new(al, al)?;
        let ctl = MlControl::default();
        Self::new(al, grid, a.dim(), |tau| {
            if tau == 0.0 {
                Ok(DMatrix::identity(a.dim(), a.dim()) * rgamma(al))
            } else {
                ml_matrix_raw(params, a.matrix(), tau.powf(al), &ctl)
            }
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    /// `out_i = int_0^{t_i} k(t_i - s) phi(s) ds`; `out_0 = 0`.
    pub fn convolve<V: GridValue>(&self, phi: &Trajectory<V>) -> Result<Trajectory<V>> {
        if phi.grid() != &self.grid {
            return Err(invalid("grid", "integrand and kernel must share the grid"));
        }
        let (rows, cols) = phi.shape();
        if rows != self.dim {
            return Err(crate::error::Error::DimensionMismatch {
                expected: self.dim,
                found: rows,
                context: "convolution integrand",
            });
        }
        let n = self.dim;
        let vals = phi.values();
        let out: Vec<V> = (0..self.grid.len())
            .into_par_iter()
            .map(|i| {
                let mut acc = vec![0.0; rows * cols];
                if i > 0 {
                    for j in 0..i {
                        mul_acc(&mut acc, 1.0, self.interior[j].as_slice(), vals[i - j].data(), n);
                    }
                    mul_acc(&mut acc, 1.0, self.endpoint[i].as_slice(), vals[0].data(), n);
                }
                V::from_data(rows, cols, acc)
            })
            .collect();
        Trajectory::new(self.grid, out)
    }
}

/// Convolution `int_0^t T(t-s;A) phi(s) ds` at every node.
pub fn singular_convolution<V: GridValue>(
    alpha: FractionalOrder,
    a: &BoundedOperator,
    integrand: &Trajectory<V>,
    grid: &TimeGrid,
) -> Result<Trajectory<V>> {
    ProductKernel::rl_family(alpha, a, grid)?.convolve(integrand)
}

/// Riemann-Liouville integral `I^b v` at every node.
pub fn fractional_integral<V: GridValue>(order: f64, v: &Trajectory<V>) -> Result<Trajectory<V>> {
    ProductKernel::riemann_liouville(order, v.grid(), v.shape().0)?.convolve(v)
}

/// `(g_a * g_b)(t)` with `steps` (even) panels on `[0, t]`. The interval is
/// split at `t/2` so that each half carries exactly one endpoint singularity.
pub fn kernel_convolution(a: f64, b: f64, t: f64, steps: usize) -> Result<f64> {
    if steps < 2 || !steps.is_multiple_of(2) {
        return Err(invalid("steps", format!("must be even and >= 2, got {steps}")));
    }
    if !(t > 0.0) {
        return Err(invalid("t", "must be positive"));
    }
    let half = steps / 2;
    let h = t / steps as f64;
    let left = ProductRule::new(b, h, half)?;
    let right = ProductRule::new(a, h, half)?;
    let hl: Vec<f64> = (0..=half).map(|j| g_kernel(a, t - j as f64 * h) * rgamma(b)).collect();
    let hr: Vec<f64> = (0..=half).map(|j| g_kernel(b, t - j as f64 * h) * rgamma(a)).collect();
    Ok(left.integrate(half, &hl) + right.integrate(half, &hr))
}
