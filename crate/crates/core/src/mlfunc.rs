//! Two-parameter Mittag-Leffler functions (scalar and matrix argument) and
//! the power kernels `g_a(t) = t^(a-1) / Gamma(a)`.
//!
//! Both Mittag-Leffler evaluators sum the defining power series
//!
//! ```text
//! E_{a,b}(z) = sum_k z^k / Gamma(k a + b)
//! ```
//!
//! directly. The series is stopped once a term is below `tol * (1 + |sum|)`
//! after the term magnitudes have been non-increasing for three consecutive
//! indices, which skips the initial hump for larger `|z|`. Arguments whose
//! summation would lose more than a fixed number of digits to cancellation
//! are rejected instead of being returned with silent precision loss.

use nalgebra::DMatrix;

use crate::error::{invalid, Error, Result};
use crate::operator::BoundedOperator;

/// Order `alpha` of the evolution equation, restricted to `(1, 2]`.
#[derive(Clone, Copy, Debug, PartialEq, PartialOrd)]
pub struct FractionalOrder(f64);

impl FractionalOrder {
    pub fn new(alpha: f64) -> Result<Self> {
        if !(alpha > 1.0 && alpha <= 2.0) {
            return Err(invalid("alpha", format!("must lie in (1, 2], got {alpha}")));
        }
        Ok(Self(alpha))
    }

    pub fn value(self) -> f64 {
        self.0
    }

    /// `alpha - 1`, the order of the fractional integral turning the cosine
    /// family into the Riemann-Liouville family.
    pub fn rl_exponent(self) -> f64 {
        self.0 - 1.0
    }

    /// `2 - alpha`, the order of the integral inside the Caputo derivative.
    pub fn caputo_exponent(self) -> f64 {
        2.0 - self.0
    }

    pub fn is_classical(self) -> bool {
        self.0 == 2.0
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MlParams {
    alpha: f64,
    beta: f64,
}

impl MlParams {
    pub fn new(alpha: f64, beta: f64) -> Result<Self> {
        if !(alpha.is_finite() && alpha > 0.0) {
            return Err(invalid(
                "alpha",
                format!("Mittag-Leffler alpha must be positive, got {alpha}"),
            ));
        }
        if !beta.is_finite() {
            return Err(invalid("beta", "must be finite"));
        }
        Ok(Self { alpha, beta })
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }
}

/// Truncation settings shared by the scalar and matrix evaluators.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MlControl {
    pub tol: f64,
    pub max_terms: usize,
    /// Largest accepted `|z|` (matrix: induced norm of the argument).
    pub max_argument: f64,
    /// Largest accepted ratio `eps * sum |term_k| / (1 + |sum|)`.
    pub max_cancellation: f64,
}

impl Default for MlControl {
    fn default() -> Self {
        Self {
            tol: 1e-16,
            max_terms: 512,
            max_argument: 100.0,
            max_cancellation: 1e-6,
        }
    }
}

/// A truncated series value with the number of terms summed and a bound on
/// the neglected tail.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MlSum {
    pub value: f64,
    pub terms: usize,
    pub remainder_bound: f64,
}

/// `1 / Gamma(x)`, zero at the poles `x = 0, -1, -2, ...`.
pub fn rgamma(x: f64) -> f64 {
    if x <= 0.0 && x == x.floor() {
        return 0.0;
    }
    if x > 171.0 {
        return (-libm::lgamma(x)).exp();
    }
    1.0 / libm::tgamma(x)
}

pub fn gamma(x: f64) -> f64 {
    libm::tgamma(x)
}

/// `g_a(t) = t^(a-1) / Gamma(a)` for `t > 0`, and `0` for `t <= 0` or `a = 0`.
pub fn g_kernel(alpha: f64, t: f64) -> f64 {
    if alpha == 0.0 || t <= 0.0 {
        return 0.0;
    }
    t.powf(alpha - 1.0) * rgamma(alpha)
}

/// Upper bound on `sum_{k > last} |z|^k / Gamma(k a + b)` given the last
/// summed term. Uses log-convexity of Gamma: the term ratios decrease.
fn tail_after(params: &MlParams, abs_z: f64, last: usize, last_term: f64) -> f64 {
    if last_term == 0.0 && abs_z == 0.0 {
        return 0.0;
    }
    let x = last as f64 * params.alpha + params.beta;
    if x <= 0.0 {
        return f64::INFINITY;
    }
    let ratio = abs_z * (libm::lgamma(x) - libm::lgamma(x + params.alpha)).exp();
    if ratio >= 1.0 {
        return f64::INFINITY;
    }
    last_term.abs() * ratio / (1.0 - ratio) * (1.0 + 1e-12)
}

/// `E_{a,b}(z)` with the default control.
pub fn ml_scalar(params: MlParams, z: f64) -> Result<f64> {
    ml_scalar_with(params, z, &MlControl::default()).map(|s| s.value)
}

pub fn ml_scalar_with(params: MlParams, z: f64, ctl: &MlControl) -> Result<MlSum> {
    if !z.is_finite() {
        return Err(invalid("z", "must be finite"));
    }
    if z.abs() > ctl.max_argument {
        return Err(Error::NonConvergence {
            max_terms: 0,
            context: format!("|z| = {} exceeds the series range {}", z.abs(), ctl.max_argument),
        });
    }
    // Neumaier-compensated summation.
    let (mut sum, mut comp, mut abs_sum) = (0.0f64, 0.0f64, 0.0f64);
    let mut power = 1.0f64;
    let mut prev = f64::INFINITY;
    let mut run = 0usize;
    for k in 0..ctl.max_terms {
        if k > 0 {
            power *= z;
        }
        let term = power * rgamma(k as f64 * params.alpha + params.beta);
        let t = sum + term;
        if sum.abs() >= term.abs() {
            comp += (sum - t) + term;
        } else {
            comp += (term - t) + sum;
        }
        sum = t;
        abs_sum += term.abs();
        run = if term.abs() <= prev { run + 1 } else { 0 };
        prev = term.abs();
        let value = sum + comp;
        if run >= 3 && term.abs() <= ctl.tol * (1.0 + value.abs()) {
            if f64::EPSILON * abs_sum > ctl.max_cancellation * (1.0 + value.abs()) {
                return Err(Error::NonConvergence {
                    max_terms: k + 1,
                    context: format!("cancellation in E_(alpha,beta)({z}) exceeds working precision"),
                });
            }
            return Ok(MlSum {
                value,
                terms: k + 1,
                remainder_bound: tail_after(&params, z.abs(), k, term),
            });
        }
    }
    Err(Error::NonConvergence {
        max_terms: ctl.max_terms,
        context: format!("E_({},{})({z})", params.alpha, params.beta),
    })
}

/// `E_{a,b}(scale * M) = sum_k (scale M)^k / Gamma(k a + b)`.
pub fn ml_matrix(params: MlParams, m: &BoundedOperator, scale: f64) -> Result<BoundedOperator> {
    let out = ml_matrix_raw(params, m.matrix(), scale, &MlControl::default())?;
    BoundedOperator::new(out)
}

pub fn ml_matrix_with(params: MlParams, m: &BoundedOperator, scale: f64, ctl: &MlControl) -> Result<BoundedOperator> {
    BoundedOperator::new(ml_matrix_raw(params, m.matrix(), scale, ctl)?)
}

fn induced_norm_bound(m: &DMatrix<f64>) -> f64 {
    let inf = m
        .row_iter()
        .map(|r| r.iter().map(|v| v.abs()).sum::<f64>())
        .fold(0.0, f64::max);
    let one = m
        .column_iter()
        .map(|c| c.iter().map(|v| v.abs()).sum::<f64>())
        .fold(0.0, f64::max);
    inf.min(one)
}

/// Matrix series on raw storage; the argument may be any square matrix.
pub(crate) fn ml_matrix_raw(params: MlParams, m: &DMatrix<f64>, scale: f64, ctl: &MlControl) -> Result<DMatrix<f64>> {
    if !(scale.is_finite() && scale >= 0.0) {
        return Err(invalid(
            "scale",
            format!("must be finite and non-negative, got {scale}"),
        ));
    }
    let n = m.nrows();
    let arg = m * scale;
    let arg_norm = induced_norm_bound(&arg);
    if arg_norm > ctl.max_argument {
        return Err(Error::NonConvergence {
            max_terms: 0,
            context: format!("||z|| = {arg_norm} exceeds the series range {}", ctl.max_argument),
        });
    }
    let mut power = DMatrix::<f64>::identity(n, n);
    let mut sum = DMatrix::<f64>::zeros(n, n);
    let mut abs_sum = 0.0;
    let mut prev = f64::INFINITY;
    let mut run = 0usize;
    for k in 0..ctl.max_terms {
        if k > 0 {
            power = &power * &arg;
        }
        let c = rgamma(k as f64 * params.alpha + params.beta);
        let term_norm = power.norm() * c.abs();
        sum.zip_apply(&power, |s, p| *s += p * c);
        abs_sum += term_norm;
        run = if term_norm <= prev { run + 1 } else { 0 };
        prev = term_norm;
        if run >= 3 && term_norm <= ctl.tol * (1.0 + sum.norm()) {
            if f64::EPSILON * abs_sum > ctl.max_cancellation * (1.0 + sum.norm()) {
                return Err(Error::NonConvergence {
                    max_terms: k + 1,
                    context: "cancellation in matrix Mittag-Leffler series exceeds working precision".into(),
                });
            }
            return Ok(sum);
        }
        if power.iter().all(|&v| v == 0.0) {
            // Nilpotent argument: every further term vanishes.
            return Ok(sum);
        }
    }
    Err(Error::NonConvergence {
        max_terms: ctl.max_terms,
        context: format!("matrix E_({},{})", params.alpha, params.beta),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p(a: f64, b: f64) -> MlParams {
        MlParams::new(a, b).unwrap()
    }

    #[test]
    fn order_bounds() {
        assert!(FractionalOrder::new(1.0).is_err());
        assert!(FractionalOrder::new(2.0001).is_err());
        assert!(FractionalOrder::new(f64::NAN).is_err());
        let a = FractionalOrder::new(1.5).unwrap();
        assert_eq!(a.rl_exponent(), 0.5);
        assert_eq!(a.caputo_exponent(), 0.5);
        assert!(FractionalOrder::new(2.0).unwrap().is_classical());
    }

    #[test]
    fn kernel_values() {
        assert_eq!(g_kernel(1.0, 5.0), 1.0);
        assert!((g_kernel(2.0, 3.0) - 3.0).abs() < 1e-15);
        assert_eq!(g_kernel(0.0, 1.0), 0.0);
        assert_eq!(g_kernel(1.5, 0.0), 0.0);
        assert_eq!(g_kernel(1.5, -1.0), 0.0);
    }

    #[test]
    fn rgamma_poles_and_values() {
        assert_eq!(rgamma(0.0), 0.0);
        assert_eq!(rgamma(-3.0), 0.0);
        assert!((rgamma(5.0) - 1.0 / 24.0).abs() < 1e-17);
        assert!(rgamma(171.5) > 0.0 && rgamma(171.5) < 1e-300);
    }

    #[test]
    fn exponential_and_cosine() {
        let e = ml_scalar(p(1.0, 1.0), 1.0).unwrap();
        assert!((e - std::f64::consts::E).abs() < 1e-14);
        let c = ml_scalar(p(2.0, 1.0), -1.0).unwrap();
        assert!((c - 1f64.cos()).abs() < 1e-15);
        assert_eq!(ml_scalar(p(1.5, 1.0), 0.0).unwrap(), 1.0);
    }

    #[test]
    fn reference_value_from_extended_precision() {
        // 200-term mpmath summation at 40 digits.
        let v = ml_scalar(p(1.5, 2.0), 0.7).unwrap();
        assert!((v - 1.232_287_972_160_097_6).abs() < 4e-15, "{v:.17}");
    }

    #[test]
    fn rejects_out_of_range_arguments() {
        assert!(matches!(
            ml_scalar(p(1.5, 1.0), 150.0),
            Err(Error::NonConvergence { .. })
        ));
        // Heavy cancellation: E_{1.2}(-100) needs ~20 digits beyond f64.
        assert!(matches!(
            ml_scalar(p(1.2, 1.0), -100.0),
            Err(Error::NonConvergence { .. })
        ));
        let ctl = MlControl {
            max_terms: 4,
            ..MlControl::default()
        };
        assert!(ml_scalar_with(p(1.0, 1.0), 5.0, &ctl).is_err());
    }

    #[test]
    fn remainder_bound_dominates_tail() {
        let params = p(1.3, 1.7);
        let ctl = MlControl {
            tol: 1e-6,
            ..MlControl::default()
        };
        let coarse = ml_scalar_with(params, 3.0, &ctl).unwrap();
        let fine = ml_scalar_with(params, 3.0, &MlControl::default()).unwrap();
        assert!((fine.value - coarse.value).abs() <= coarse.remainder_bound);
    }

    #[test]
    fn zero_matrix_gives_scaled_identity() {
        let z = BoundedOperator::zeros(3);
        let e = ml_matrix(p(1.7, 2.5), &z, 1.0).unwrap();
        let expected = DMatrix::identity(3, 3) * rgamma(2.5);
        assert!((e.matrix() - expected).abs().max() < 1e-16);
    }

    #[test]
    fn matrix_cosine_at_pi() {
        // M = J^2 with J the rotation generator, so M = -I.
        let j = BoundedOperator::from_rows(&[vec![0.0, 1.0], vec![-1.0, 0.0]]).unwrap();
        let m = &j * &j;
        let pi = std::f64::consts::PI;
        let e = ml_matrix(p(2.0, 1.0), &m, pi * pi).unwrap();
        assert!((e.matrix() + DMatrix::identity(2, 2)).abs().max() < 1e-13);
    }

    #[test]
    fn nilpotent_argument_terminates() {
        let n = BoundedOperator::from_rows(&[vec![0.0, 1.0], vec![0.0, 0.0]]).unwrap();
        let e = ml_matrix(p(1.5, 1.0), &n, 2.0).unwrap();
        assert!((e.matrix()[(0, 1)] - 2.0 * rgamma(2.5)).abs() < 1e-15);
        assert_eq!(e.matrix()[(0, 0)], 1.0);
    }
}
