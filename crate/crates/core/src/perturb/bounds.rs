//! Growth bounds for the perturbed families:
//!
//! ```text
//! ||C(s;A+B)||          <= M e^(ws) E_a(M K s^a)
//! ||S(s;A+B)||          <= M e^(ws) s E_{a,2}(M K s^a)
//! ||C(s;A+B) - C(s;A)|| <= M e^(ws) [E_a(M K s^a) - 1]
//! ||S(s;A+B) - S(s;A)|| <= M e^(ws) s [E_{a,2}(M K s^a) - 1]
//! ```

use crate::error::{Error, Result};
use crate::families::{cosine_family, sine_family};
use crate::grid::{TimeDependentOperator, TimeGrid};
use crate::mlfunc::{rgamma, FractionalOrder};
use crate::operator::{spectral_norm, BoundedOperator};

use super::series::{perturbed_cosine, perturbed_sine, SeriesControl};

/// Margins below this are reported as violations.
pub const MARGIN_TOL: f64 = 1e-9;

/// `E_{a,b}(z) - 1/Gamma(b)` for `z >= 0`, summed without the constant term.
fn ml_minus_first(alpha: f64, beta: f64, z: f64) -> f64 {
    let mut sum = 0.0;
    let mut power = 1.0;
    for k in 1..2000 {
        power *= z;
        let term = power * rgamma(k as f64 * alpha + beta);
        sum += term;
        if term <= 1e-17 * sum && (k as f64) * alpha > z.powf(1.0 / alpha) + 2.0 {
            break;
        }
        if term == 0.0 {
            break;
        }
    }
    sum
}

/// The four bounds at time `s` for envelope `(m, omega)` and constant `k`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GrowthBounds {
    pub cosine: f64,
    pub sine: f64,
    pub cosine_difference: f64,
    pub sine_difference: f64,
}

pub fn growth_bounds(alpha: FractionalOrder, m: f64, omega: f64, k: f64, s: f64) -> GrowthBounds {
    let al = alpha.value();
    let z = m * k * s.powf(al);
    let pre = m * (omega * s).exp();
    let dc = ml_minus_first(al, 1.0, z);
    let ds = ml_minus_first(al, 2.0, z);
    GrowthBounds {
        cosine: pre * (1.0 + dc),
        sine: pre * s * (1.0 + ds),
        cosine_difference: pre * dc,
        sine_difference: pre * s * ds,
    }
}

/// `(cosh(sqrt(MK) s), sinh(sqrt(MK) s) / sqrt(MK))`, the `alpha = 2`
/// growth functions multiplying `M e^(ws)`.
pub fn classical_growth(m: f64, k: f64, s: f64) -> (f64, f64) {
    let r = (m * k).sqrt();
    if r == 0.0 {
        return (1.0, s);
    }
    ((r * s).cosh(), (r * s).sinh() / r)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BoundRow {
    pub s: f64,
    pub norm_c: f64,
    pub bound_c: f64,
    pub norm_s: f64,
    pub bound_s: f64,
    pub norm_dc: f64,
    pub bound_dc: f64,
    pub norm_ds: f64,
    pub bound_ds: f64,
}

impl BoundRow {
    pub fn margin_c(&self) -> f64 {
        self.bound_c - self.norm_c
    }

    pub fn margin_s(&self) -> f64 {
        self.bound_s - self.norm_s
    }

    pub fn margin_dc(&self) -> f64 {
        self.bound_dc - self.norm_dc
    }

    pub fn margin_ds(&self) -> f64 {
        self.bound_ds - self.norm_ds
    }

    pub fn min_margin(&self) -> f64 {
        self.margin_c()
            .min(self.margin_s())
            .min(self.margin_dc())
            .min(self.margin_ds())
    }
}

#[derive(Clone, Debug)]
pub struct BoundReport {
    pub rows: Vec<BoundRow>,
    pub m: f64,
    pub omega: f64,
    pub k: f64,
}

impl BoundReport {
    pub fn min_margin(&self) -> f64 {
        self.rows.iter().map(BoundRow::min_margin).fold(f64::INFINITY, f64::min)
    }

    /// Fails with the first offending bound if any margin is below `-tol`.
    pub fn check(&self, tol: f64) -> Result<()> {
        type Margin = fn(&BoundRow) -> f64;
        let checks: [(&'static str, Margin); 4] = [
            ("cosine", BoundRow::margin_c),
            ("sine", BoundRow::margin_s),
            ("cosine difference", BoundRow::margin_dc),
            ("sine difference", BoundRow::margin_ds),
        ];
        for (which, margin) in checks {
            let bad: Vec<&BoundRow> = self.rows.iter().filter(|r| margin(r) < -tol).collect();
            if let Some(first) = bad.first() {
                return Err(Error::BoundViolation {
                    count: bad.len(),
                    first_time: first.s,
                    which,
                });
            }
        }
        Ok(())
    }
}

/// Evaluates the four bounds against the perturbation series at every node.
pub fn growth_bound_report(
    alpha: FractionalOrder,
    a: &BoundedOperator,
    b: &TimeDependentOperator,
    grid: &TimeGrid,
    ctl: &SeriesControl,
) -> Result<BoundReport> {
    ctl.envelope.certify(alpha, a, grid)?;
    let c = perturbed_cosine(alpha, a, b, grid, ctl)?;
    let s = perturbed_sine(alpha, a, b, grid, ctl)?;
    let (m, omega, k) = (ctl.envelope.m(), ctl.envelope.omega(), ctl.k_t);
    let rows = grid
        .nodes()
        .enumerate()
        .map(|(i, t)| {
            let c0 = cosine_family(alpha, a, t)?.into_matrix();
            let s0 = sine_family(alpha, a, t)?.into_matrix();
            let (ci, si) = (c.values.value(i), s.values.value(i));
            let g = growth_bounds(alpha, m, omega, k, t);
            Ok(BoundRow {
                s: t,
                norm_c: spectral_norm(ci),
                bound_c: g.cosine,
                norm_s: spectral_norm(si),
                bound_s: g.sine,
                norm_dc: spectral_norm(&(ci - c0)),
                bound_dc: g.cosine_difference,
                norm_ds: spectral_norm(&(si - s0)),
                bound_ds: g.sine_difference,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(BoundReport { rows, m, omega, k })
}

/// As [`growth_bound_report`], failing with `BoundViolation` if any margin
/// is below `-MARGIN_TOL`.
pub fn verify_growth_bounds(
    alpha: FractionalOrder,
    a: &BoundedOperator,
    b: &TimeDependentOperator,
    grid: &TimeGrid,
    ctl: &SeriesControl,
) -> Result<BoundReport> {
    let report = growth_bound_report(alpha, a, b, grid, ctl)?;
    report.check(MARGIN_TOL)?;
    Ok(report)
}
