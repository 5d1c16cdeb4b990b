//! Fractional cosine, sine and Riemann-Liouville families of a bounded
//! operator, realized through matrix Mittag-Leffler functions:
//!
//! ```text
//! C(t;A) = E_{a,1}(A t^a)
//! S(t;A) = t E_{a,2}(A t^a)
//! T(t;A) = t^(a-1) E_{a,a}(A t^a)
//! ```

use nalgebra::DMatrix;
use rayon::prelude::*;

use crate::error::{invalid, Error, Result};
use crate::grid::{OperatorTrajectory, TimeGrid, Trajectory};
use crate::mlfunc::{g_kernel, ml_matrix_raw, FractionalOrder, MlControl, MlParams};
use crate::operator::BoundedOperator;

fn check_time(t: f64) -> Result<()> {
    if !(t.is_finite() && t >= 0.0) {
        return Err(invalid("t", format!("must be finite and non-negative, got {t}")));
    }
    Ok(())
}

fn ml(alpha: f64, beta: f64, a: &BoundedOperator, t: f64) -> Result<DMatrix<f64>> {
    let params = MlParams::new(alpha, beta)?;
    ml_matrix_raw(params, a.matrix(), t.powf(alpha), &MlControl::default())
}

pub fn cosine_family(alpha: FractionalOrder, a: &BoundedOperator, t: f64) -> Result<BoundedOperator> {
    check_time(t)?;
    if t == 0.0 {
        return Ok(BoundedOperator::identity(a.dim()));
    }
    BoundedOperator::new(ml(alpha.value(), 1.0, a, t)?)
}

pub fn sine_family(alpha: FractionalOrder, a: &BoundedOperator, t: f64) -> Result<BoundedOperator> {
    check_time(t)?;
    if t == 0.0 {
        return Ok(BoundedOperator::zeros(a.dim()));
    }
    BoundedOperator::new(ml(alpha.value(), 2.0, a, t)? * t)
}

/// `T(t;A)`; the value at `t = 0` is the limit, `0`.
pub fn rl_family(alpha: FractionalOrder, a: &BoundedOperator, t: f64) -> Result<BoundedOperator> {
    check_time(t)?;
    if t == 0.0 {
        return Ok(BoundedOperator::zeros(a.dim()));
    }
    let al = alpha.value();
    BoundedOperator::new(ml(al, al, a, t)? * t.powf(al - 1.0))
}

/// `T'(t;A) = t^(a-2) E_{a,a-1}(A t^a)`. Singular at `t = 0` unless `a = 2`.
pub fn rl_family_derivative(alpha: FractionalOrder, a: &BoundedOperator, t: f64) -> Result<BoundedOperator> {
    check_time(t)?;
    let al = alpha.value();
    if t == 0.0 {
        if alpha.is_classical() {
            return Ok(BoundedOperator::identity(a.dim()));
        }
        return Err(invalid(
            "t",
            "the derivative of T(t;A) is singular at t = 0 for alpha < 2",
        ));
    }
    BoundedOperator::new(ml(al, al - 1.0, a, t)? * t.powf(al - 2.0))
}

/// `T'(t;A)` in convolution form `g_{a-1}(t) I + (g_{a-1} * A T(.;A))(t)`,
/// with the convolution collapsed to `A t^(2a-2) E_{a,2a-1}(A t^a)`.
pub fn rl_family_derivative_convolution(
    alpha: FractionalOrder,
    a: &BoundedOperator,
    t: f64,
) -> Result<BoundedOperator> {
    check_time(t)?;
    let al = alpha.value();
    if t == 0.0 {
        return rl_family_derivative(alpha, a, t);
    }
    let conv = a.matrix() * ml(al, 2.0 * al - 1.0, a, t)? * t.powf(2.0 * al - 2.0);
    let n = a.dim();
    BoundedOperator::new(conv + DMatrix::identity(n, n) * g_kernel(al - 1.0, t))
}

/// Evaluates a family at every grid node in parallel.
pub fn on_grid(grid: &TimeGrid, family: impl Fn(f64) -> Result<BoundedOperator> + Sync) -> Result<OperatorTrajectory> {
    let values = (0..grid.len())
        .into_par_iter()
        .map(|i| family(grid.node(i)).map(BoundedOperator::into_matrix))
        .collect::<Result<Vec<_>>>()?;
    Trajectory::new(*grid, values)
}

/// Constants with `||C(t;A)|| <= M e^(omega t)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GrowthEnvelope {
    m: f64,
    omega: f64,
}

impl GrowthEnvelope {
    pub fn new(m: f64, omega: f64) -> Result<Self> {
        if !(m.is_finite() && m >= 1.0) {
            return Err(invalid("M", format!("must be finite and >= 1, got {m}")));
        }
        if !(omega.is_finite() && omega >= 0.0) {
            return Err(invalid("omega", format!("must be finite and >= 0, got {omega}")));
        }
        Ok(Self { m, omega })
    }

    pub fn m(&self) -> f64 {
        self.m
    }

    pub fn omega(&self) -> f64 {
        self.omega
    }

    pub fn bound(&self, t: f64) -> f64 {
        self.m * (self.omega * t).exp()
    }

    /// Checks the envelope against `||C(t;A)||` at every node of `grid`.
    pub fn certify(&self, alpha: FractionalOrder, a: &BoundedOperator, grid: &TimeGrid) -> Result<()> {
        let norms = cosine_norms(alpha, a, grid)?;
        for (i, n) in norms.iter().enumerate() {
            let t = grid.node(i);
            if *n > self.bound(t) * (1.0 + 1e-12) {
                return Err(Error::EnvelopeViolation {
                    m: self.m,
                    omega: self.omega,
                    time: t,
                });
            }
        }
        Ok(())
    }
}

fn cosine_norms(alpha: FractionalOrder, a: &BoundedOperator, grid: &TimeGrid) -> Result<Vec<f64>> {
    (0..grid.len())
        .into_par_iter()
        .map(|i| cosine_family(alpha, a, grid.node(i)).map(|c| c.norm()))
        .collect()
}

/// Exponential rate from the spectrum: the largest `Re(lambda^(1/alpha))`
/// over eigenvalues in the sector `|arg lambda| < alpha pi / 2`, floored at 0.
pub fn spectral_growth_rate(alpha: FractionalOrder, a: &BoundedOperator) -> f64 {
    let al = alpha.value();
    a.matrix()
        .complex_eigenvalues()
        .iter()
        .filter_map(|l| {
            let (r, arg) = (l.norm(), l.arg());
            (r > 0.0 && arg.abs() < al * std::f64::consts::FRAC_PI_2).then(|| r.powf(1.0 / al) * (arg / al).cos())
        })
        .fold(0.0, f64::max)
}

/// Default envelope: `omega` from the spectrum, `M` the smallest constant
/// dominating `||C(t;A)|| e^(-omega t)` on a 4x refinement of `grid`.
/// The returned envelope is certified on `grid`.
pub fn estimate_envelope(alpha: FractionalOrder, a: &BoundedOperator, grid: &TimeGrid) -> Result<GrowthEnvelope> {
    let omega = spectral_growth_rate(alpha, a);
    let fine = grid.refined().refined();
    let norms = cosine_norms(alpha, a, &fine)?;
    let m = norms
        .iter()
        .enumerate()
        .map(|(i, n)| n * (-omega * fine.node(i)).exp())
        .fold(1.0, f64::max);
    let env = GrowthEnvelope::new(m, omega)?;
    env.certify(alpha, a, grid)?;
    Ok(env)
}
