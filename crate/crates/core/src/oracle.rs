//! Reference solvers independent of the Mittag-Leffler machinery: a
//! fractional Adams predictor-corrector for the Volterra form
//!
//! ```text
//! u(t) = x + t y + I^a [(A + B(.)) u + f](t)
//! ```
//!
//! a discrete Caputo derivative, and the equation residual built on it.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::error::{invalid, Error, Result};
use crate::grid::{Forcing, TimeDependentOperator, TimeGrid, Trajectory, VectorTrajectory};
use crate::mlfunc::{gamma, FractionalOrder};
use crate::operator::BoundedOperator;

/// A Cauchy problem `D^a u = (A + B(t)) u + f(t)`, `u(0) = x`, `u'(0) = y`
/// posed on a grid.
#[derive(Clone, Debug)]
pub struct IvpSpec {
    pub alpha: FractionalOrder,
    pub a: BoundedOperator,
    pub b: TimeDependentOperator,
    pub f: Forcing,
    pub x: DVector<f64>,
    pub y: DVector<f64>,
    pub grid: TimeGrid,
}

impl IvpSpec {
    pub fn new(
        alpha: FractionalOrder,
        a: BoundedOperator,
        b: TimeDependentOperator,
        f: Forcing,
        x: DVector<f64>,
        y: DVector<f64>,
        grid: TimeGrid,
    ) -> Result<Self> {
        a.check_dim(b.dim(), "perturbation B vs generator A")?;
        a.check_dim(f.dim(), "forcing f vs generator A")?;
        a.check_dim(x.len(), "initial value x")?;
        a.check_dim(y.len(), "initial velocity y")?;
        Ok(Self {
            alpha,
            a,
            b,
            f,
            x,
            y,
            grid,
        })
    }

    pub fn dim(&self) -> usize {
        self.a.dim()
    }

    /// `(A + B(t)) u + f(t)`.
    pub fn rhs(&self, t: f64, u: &DVector<f64>) -> DVector<f64> {
        (self.a.matrix() + self.b.eval(t)) * u + self.f.eval(t)
    }

    pub fn with_grid(&self, grid: TimeGrid) -> Self {
        Self { grid, ..self.clone() }
    }
}

/// Fractional Adams-Bashforth-Moulton method, one corrector sweep per step.
///
/// Predictor weights `h^a ((k+1)^a - k^a) / Gamma(a+1)` (rectangle rule),
/// corrector the product trapezoidal weights
/// `h^a / Gamma(a+2) * {n^(a+1) - (n-a)(n+1)^a, (k+2)^(a+1) + k^(a+1) - 2(k+1)^(a+1), 1}`
/// for `j = 0`, `j = n - k`, and `j = n + 1`.
pub fn adams_solve(spec: &IvpSpec) -> Result<VectorTrajectory> {
    let al = spec.alpha.value();
    let grid = spec.grid;
    let (h, steps) = (grid.step(), grid.steps());
    let ha = h.powf(al);
    let pred: Vec<f64> = (0..steps)
        .map(|k| ha * ((k as f64 + 1.0).powf(al) - (k as f64).powf(al)) / gamma(al + 1.0))
        .collect();
    let c = ha / gamma(al + 2.0);
    let corr: Vec<f64> = (0..steps)
        .map(|k| {
            let k = k as f64;
            c * ((k + 2.0).powf(al + 1.0) + k.powf(al + 1.0) - 2.0 * (k + 1.0).powf(al + 1.0))
        })
        .collect();
    let base = |t: f64| &spec.x + &spec.y * t;
    let mut u = vec![spec.x.clone()];
    let mut rhs = vec![spec.rhs(0.0, &spec.x)];
    for n in 0..steps {
        let t = grid.node(n + 1);
        let mut up = base(t);
        for j in 0..=n {
            up.axpy(pred[n - j], &rhs[j], 1.0);
        }
        let nf = n as f64;
        let a0 = c * (nf.powf(al + 1.0) - (nf - al) * (nf + 1.0).powf(al));
        let mut uc = base(t);
        uc.axpy(a0, &rhs[0], 1.0);
        for j in 1..=n {
            uc.axpy(corr[n - j], &rhs[j], 1.0);
        }
        uc.axpy(c, &spec.rhs(t, &up), 1.0);
        rhs.push(spec.rhs(t, &uc));
        u.push(uc);
    }
    Trajectory::new(grid, u)
}

/// Samples at the interior nodes `t_1, ..., t_(N-1)` of a grid.
#[derive(Clone, Debug, PartialEq)]
pub struct InteriorSamples<V> {
    grid: TimeGrid,
    values: Vec<V>,
}

impl<V> InteriorSamples<V> {
    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn values(&self) -> &[V] {
        &self.values
    }

    /// `(t_i, value_i)` for `i = 1..N-1`.
    pub fn iter(&self) -> impl Iterator<Item = (f64, &V)> + '_ {
        self.values.iter().enumerate().map(|(k, v)| (self.grid.node(k + 1), v))
    }
}

impl InteriorSamples<f64> {
    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(0.0, f64::max)
    }
}

/// Exponents `s` for which the corrected scheme is exact on `t^s`.
fn correction_exponents(alpha: f64, slope_known: bool) -> Vec<f64> {
    let mut out: Vec<f64> = Vec::new();
    let mut candidates = vec![alpha, alpha + 1.0, 2.0 * alpha, 2.0];
    if !slope_known {
        candidates.insert(0, 1.0);
    }
    for s in candidates {
        if out.iter().all(|&o| (o - s).abs() > 0.05) {
            out.push(s);
        }
    }
    out
}

/// Uncorrected scheme on a unit grid at nodes `1..=last`: Caputo weights
/// `[(n-k+1)^(2-a) - (n-k)^(2-a)] / Gamma(3-a)` against interval values of
/// the second derivative extrapolated from second differences.
fn base_scheme(alpha: f64, samples: &[f64], last: usize) -> Vec<f64> {
    let e = 2.0 - alpha;
    let g = 1.0 / gamma(3.0 - alpha);
    let d2 = |j: usize| samples[j + 1] - 2.0 * samples[j] + samples[j - 1];
    let interval: Vec<f64> = (1..=last)
        .map(|k| match k {
            1 | 2 => d2(1),
            _ => 1.5 * d2(k - 1) - 0.5 * d2(k - 2),
        })
        .collect();
    let weights: Vec<f64> = (0..last)
        .map(|m| g * ((m as f64 + 1.0).powf(e) - (m as f64).powf(e)))
        .collect();
    (1..=last)
        .map(|n| (1..=n).map(|k| weights[n - k] * interval[k - 1]).sum())
        .collect()
}

/// Discrete Caputo derivative of order `alpha` at the interior nodes.
///
/// For `alpha < 2` this is an L1-type scheme on second differences with
/// starting weights that make it exact on `t^s` for the singular exponents
/// `s` of the solution. The samples used by the correction are
/// `u_j - u_0 - t_j slope`; without `slope`, `s = 1` is added to the set.
/// For `alpha = 2` it is the centered second difference.
pub fn caputo_l1_derivative(
    u: &VectorTrajectory,
    alpha: FractionalOrder,
    slope: Option<&DVector<f64>>,
) -> Result<InteriorSamples<DVector<f64>>> {
    let grid = *u.grid();
    let steps = grid.steps();
    let dim = u.shape().0;
    if let Some(s) = slope {
        if s.len() != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                found: s.len(),
                context: "initial slope",
            });
        }
    }
    let h = grid.step();
    let vals = u.values();
    if alpha.is_classical() {
        if steps < 2 {
            return Err(Error::GridTooCoarse { required: 2, steps });
        }
        let values = (1..steps)
            .map(|n| (&vals[n + 1] - &vals[n] * 2.0 + &vals[n - 1]) / (h * h))
            .collect();
        return Ok(InteriorSamples { grid, values });
    }
    let al = alpha.value();
    let sigmas = correction_exponents(al, slope.is_some());
    let m = sigmas.len();
    let required = m + 2;
    if steps < required {
        return Err(Error::GridTooCoarse { required, steps });
    }
    let last = steps - 1;

    // Starting weights: for every node n, sum_j W[n][j] j^s fixes the
    // defect of the base scheme on t^s.
    let vandermonde = DMatrix::from_fn(m, m, |r, c| ((c + 1) as f64).powf(sigmas[r]));
    let lu = vandermonde.lu();
    let mut defects = DMatrix::zeros(m, last);
    for (r, &s) in sigmas.iter().enumerate() {
        let samples: Vec<f64> = (0..=steps).map(|j| (j as f64).powf(s)).collect();
        let base = base_scheme(al, &samples, last);
        // Caputo derivatives of order a > 1 annihilate t^0 and t^1.
        let c = if s <= 1.0 {
            0.0
        } else {
            gamma(s + 1.0) / gamma(s + 1.0 - al)
        };
        for n in 1..=last {
            defects[(r, n - 1)] = c * (n as f64).powf(s - al) - base[n - 1];
        }
    }
    let weights = lu
        .solve(&defects)
        .ok_or_else(|| invalid("alpha", "correction exponents are degenerate"))?;

    let z: Vec<DVector<f64>> = (1..=m)
        .map(|j| {
            let mut v = &vals[j] - &vals[0];
            if let Some(s) = slope {
                v -= s * grid.node(j);
            }
            v
        })
        .collect();
    let scale = h.powf(-al);
    let per_component: Vec<Vec<f64>> = (0..dim)
        .into_par_iter()
        .map(|c| {
            let samples: Vec<f64> = vals.iter().map(|v| v[c]).collect();
            base_scheme(al, &samples, last)
        })
        .collect();
    let values = (1..=last)
        .map(|n| {
            let mut d = DVector::from_fn(dim, |c, _| per_component[c][n - 1]);
            for (j, zj) in z.iter().enumerate() {
                d.axpy(weights[(j, n - 1)], zj, 1.0);
            }
            d * scale
        })
        .collect();
    Ok(InteriorSamples { grid, values })
}

/// `||D^a u - (A + B(t)) u - f(t)||` at the interior nodes, using `spec.y`
/// as the initial slope.
pub fn residual(u: &VectorTrajectory, spec: &IvpSpec) -> Result<InteriorSamples<f64>> {
    if u.grid() != &spec.grid {
        return Err(invalid("grid", "trajectory and problem must share the grid"));
    }
    spec.a.check_dim(u.shape().0, "trajectory vs problem dimension")?;
    let d = caputo_l1_derivative(u, spec.alpha, Some(&spec.y))?;
    let values = d
        .values()
        .par_iter()
        .enumerate()
        .map(|(k, dk)| {
            let i = k + 1;
            (dk - spec.rhs(spec.grid.node(i), u.value(i))).norm()
        })
        .collect();
    Ok(InteriorSamples {
        grid: spec.grid,
        values,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mlfunc::{ml_scalar, MlParams};
    use crate::perturb::quadrature::fractional_integral;

    fn order(a: f64) -> FractionalOrder {
        FractionalOrder::new(a).unwrap()
    }

    fn scalar_spec(alpha: f64, a: f64, x: f64, y: f64, grid: TimeGrid) -> IvpSpec {
        IvpSpec::new(
            order(alpha),
            BoundedOperator::from_rows(&[vec![a]]).unwrap(),
            TimeDependentOperator::zero(1),
            Forcing::Zero(1),
            DVector::from_element(1, x),
            DVector::from_element(1, y),
            grid,
        )
        .unwrap()
    }

    fn scalar_traj(grid: TimeGrid, f: impl Fn(f64) -> f64) -> VectorTrajectory {
        Trajectory::from_fn(grid, |t| DVector::from_element(1, f(t)))
    }

    #[test]
    fn free_motion_is_exact() {
        let grid = TimeGrid::new(2.0, 16).unwrap();
        let spec = IvpSpec::new(
            order(1.5),
            BoundedOperator::zeros(2),
            TimeDependentOperator::zero(2),
            Forcing::Zero(2),
            DVector::from_vec(vec![1.0, -1.0]),
            DVector::from_vec(vec![0.5, 2.0]),
            grid,
        )
        .unwrap();
        let u = adams_solve(&spec).unwrap();
        for (i, v) in u.values().iter().enumerate() {
            let t = grid.node(i);
            assert!((v - (&spec.x + &spec.y * t)).norm() < 1e-14);
        }
        assert!(residual(&u, &spec).unwrap().max() < 1e-12);
    }

    #[test]
    fn classical_oscillator_second_order() {
        let err = |n| {
            let grid = TimeGrid::new(2.0, n).unwrap();
            let u = adams_solve(&scalar_spec(2.0, -1.0, 1.0, 0.0, grid)).unwrap();
            u.values()
                .iter()
                .enumerate()
                .map(|(i, v)| (v[0] - grid.node(i).cos()).abs())
                .fold(0.0, f64::max)
        };
        let (e1, e2) = (err(64), err(128));
        assert!(e1 < 1e-3 && e1 / e2 > 3.5, "{e1} {e2}");
    }

    #[test]
    fn fractional_relaxation_converges() {
        let p = MlParams::new(1.5, 1.0).unwrap();
        let err = |n| {
            let grid = TimeGrid::new(1.0, n).unwrap();
            let u = adams_solve(&scalar_spec(1.5, -1.0, 1.0, 0.0, grid)).unwrap();
            u.values()
                .iter()
                .enumerate()
                .map(|(i, v)| (v[0] - ml_scalar(p, -grid.node(i).powf(1.5)).unwrap()).abs())
                .fold(0.0, f64::max)
        };
        let (e1, e2) = (err(100), err(200));
        assert!(e2 < 1e-4 && e1 / e2 > 2.0_f64.powf(1.5) * 0.9, "{e1} {e2}");
    }

    #[test]
    fn caputo_of_affine_and_quadratic() {
        let grid = TimeGrid::new(1.0, 20).unwrap();
        let affine = scalar_traj(grid, |t| 2.0 - 3.0 * t);
        for &al in &[1.3, 1.8, 2.0] {
            let d = caputo_l1_derivative(&affine, order(al), None).unwrap();
            let worst = d.values().iter().map(|v| v[0].abs()).fold(0.0, f64::max);
            assert!(worst < 1e-9, "alpha {al}: {worst}");
        }
        let quad = scalar_traj(grid, |t| t * t);
        let d = caputo_l1_derivative(&quad, order(2.0), None).unwrap();
        assert!(d.values().iter().all(|v| (v[0] - 2.0).abs() < 1e-10));
        let d = caputo_l1_derivative(&quad, order(1.5), Some(&DVector::zeros(1))).unwrap();
        for (t, v) in d.iter() {
            let exact = 2.0 / gamma(1.5) * t.powf(0.5);
            assert!((v[0] - exact).abs() < 1e-10, "t = {t}");
        }
    }

    #[test]
    fn caputo_of_singular_power_is_exact() {
        let grid = TimeGrid::new(1.0, 40).unwrap();
        let u = scalar_traj(grid, |t| t.powf(1.4) + 0.5 * t.powf(2.8));
        let d = caputo_l1_derivative(&u, order(1.4), Some(&DVector::zeros(1))).unwrap();
        for (t, v) in d.iter() {
            let exact = gamma(2.4) + 0.5 * gamma(3.8) / gamma(2.4) * t.powf(1.4);
            assert!((v[0] - exact).abs() < 1e-9);
        }
    }

    #[test]
    fn caputo_inverts_fractional_integral() {
        let err = |n| {
            let grid = TimeGrid::new(1.0, n).unwrap();
            let v = scalar_traj(grid, |t| (2.0 * t).cos() + t);
            let iv = fractional_integral(1.6, &v).unwrap();
            let d = caputo_l1_derivative(&iv, order(1.6), Some(&DVector::zeros(1))).unwrap();
            d.iter()
                .map(|(t, dv)| (dv[0] - (2.0 * t).cos() - t).abs())
                .fold(0.0, f64::max)
        };
        let (e1, e2) = (err(64), err(128));
        assert!(e2 < 1e-2 && e2 < e1, "{e1} {e2}");
    }

    #[test]
    fn too_coarse_grid_is_rejected() {
        let grid = TimeGrid::new(1.0, 4).unwrap();
        let u = scalar_traj(grid, |t| t);
        assert!(matches!(
            caputo_l1_derivative(&u, order(1.5), None),
            Err(Error::GridTooCoarse { .. })
        ));
    }

    #[test]
    fn corrupted_node_is_detected() {
        let grid = TimeGrid::new(1.0, 64).unwrap();
        let spec = scalar_spec(1.5, -1.0, 1.0, 0.0, grid);
        let p = MlParams::new(1.5, 1.0).unwrap();
        let exact: Vec<DVector<f64>> = grid
            .nodes()
            .map(|t| DVector::from_element(1, ml_scalar(p, -t.powf(1.5)).unwrap()))
            .collect();
        let clean = Trajectory::new(grid, exact.clone()).unwrap();
        let base = residual(&clean, &spec).unwrap().max();
        let mut bad = exact;
        bad[40][0] += 1e-3;
        let r = residual(&Trajectory::new(grid, bad).unwrap(), &spec).unwrap();
        assert!(base < 1e-3);
        assert!(r.values()[39] > 100.0 * base);
    }
}
