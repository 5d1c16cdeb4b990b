//! Perturbation series for `C(t;A+B)`, `S(t;A+B)` and the particular
//! solution, with truncation certified by a-priori term bounds.

use nalgebra::{DMatrix, DVector};

use crate::error::{invalid, Error, Result};
use crate::families::{cosine_family, estimate_envelope, on_grid, sine_family, GrowthEnvelope};
use crate::grid::{
    Forcing, GridValue, OperatorTrajectory, TimeDependentOperator, TimeGrid, Trajectory, VectorTrajectory,
};
use crate::mlfunc::FractionalOrder;
use crate::operator::BoundedOperator;

use super::quadrature::ProductKernel;

/// Truncation settings and the constants entering the a-priori bounds.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SeriesControl {
    pub tol: f64,
    pub max_terms: usize,
    pub envelope: GrowthEnvelope,
    /// Upper bound on `max(||B(s)||, ||B'(s)||)` over the grid.
    pub k_t: f64,
    /// Upper bound on `max(||f(s)||, ||f'(s)||)` over the grid.
    pub n_t: f64,
}

impl SeriesControl {
    pub fn new(tol: f64, max_terms: usize, envelope: GrowthEnvelope, k_t: f64, n_t: f64) -> Result<Self> {
        if !(tol.is_finite() && tol > 0.0) {
            return Err(invalid("series_tol", format!("must be positive, got {tol}")));
        }
        if max_terms == 0 {
            return Err(invalid("max_terms", "must be positive"));
        }
        if !(k_t.is_finite() && k_t >= 0.0) {
            return Err(invalid("K_t", format!("must be finite and non-negative, got {k_t}")));
        }
        if !(n_t.is_finite() && n_t >= 0.0) {
            return Err(invalid("N_t", format!("must be finite and non-negative, got {n_t}")));
        }
        Ok(Self {
            tol,
            max_terms,
            envelope,
            k_t,
            n_t,
        })
    }

    /// Estimates the envelope of `C(.;A)` and measures `K_t`, `N_t` on `grid`.
    pub fn for_problem(
        alpha: FractionalOrder,
        a: &BoundedOperator,
        b: &TimeDependentOperator,
        f: &Forcing,
        grid: &TimeGrid,
        tol: f64,
    ) -> Result<Self> {
        let envelope = estimate_envelope(alpha, a, grid)?;
        Self::new(
            tol,
            200,
            envelope,
            b.sup_norm_with_derivative(grid),
            f.sup_norm_with_derivative(grid),
        )
    }

    pub fn with_envelope(mut self, envelope: GrowthEnvelope) -> Self {
        self.envelope = envelope;
        self
    }

    fn check_perturbation(&self, b: &TimeDependentOperator, grid: &TimeGrid) -> Result<()> {
        let sup = b.sup_norm_with_derivative(grid);
        if self.k_t < sup * (1.0 - 1e-12) {
            return Err(invalid(
                "K_t",
                format!("{} is below sup max(||B||, ||B'||) = {sup}", self.k_t),
            ));
        }
        Ok(())
    }

    fn check_forcing(&self, f: &Forcing, grid: &TimeGrid) -> Result<()> {
        let sup = f.sup_norm_with_derivative(grid);
        if self.n_t < sup * (1.0 - 1e-12) {
            return Err(invalid(
                "N_t",
                format!("{} is below sup max(||f||, ||f'||) = {sup}", self.n_t),
            ));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TailVariant {
    Cosine,
    Sine,
    Particular,
}

/// `ln g_c(t)`, using the right limit at `t = 0`.
fn ln_kernel(c: f64, t: f64) -> f64 {
    if t <= 0.0 {
        return if c == 1.0 { 0.0 } else { f64::NEG_INFINITY };
    }
    (c - 1.0) * t.ln() - libm::lgamma(c)
}

/// A-priori bound on the norm of series term `n` at time `t`:
/// `M^(n+1) K^n e^(omega t) g_{n alpha + c}(t)` with `c = 1` (cosine),
/// `c = 2` (sine), and `c = alpha + 1` times `N_t` (particular).
pub fn tail_bound(n: usize, t: f64, alpha: FractionalOrder, ctl: &SeriesControl, variant: TailVariant) -> f64 {
    let al = alpha.value();
    let (c, scale) = match variant {
        TailVariant::Cosine => (1.0, 1.0),
        TailVariant::Sine => (2.0, 1.0),
        TailVariant::Particular => (al + 1.0, ctl.n_t),
    };
    if scale == 0.0 || (n > 0 && ctl.k_t == 0.0) {
        return 0.0;
    }
    let nf = n as f64;
    let k_part = if n == 0 { 0.0 } else { nf * ctl.k_t.ln() };
    let ln = (nf + 1.0) * ctl.envelope.m().ln() + k_part + ctl.envelope.omega() * t + ln_kernel(nf * al + c, t);
    scale * ln.exp()
}

/// `sum_{n > n0} tail_bound(n)`, summed directly with a geometric bound on
/// the part beyond the last explicit term (the term ratios decrease).
pub fn tail_remainder(n0: usize, t: f64, alpha: FractionalOrder, ctl: &SeriesControl, variant: TailVariant) -> f64 {
    sum_tail(n0, |n| tail_bound(n, t, alpha, ctl, variant))
}

/// `sum_{n > n0} term(n)` for non-negative terms whose consecutive ratios
/// are non-increasing.
pub(crate) fn sum_tail(n0: usize, term: impl Fn(usize) -> f64) -> f64 {
    let mut sum = 0.0;
    let mut n = n0 + 1;
    let mut current = term(n);
    loop {
        if current == 0.0 {
            return sum;
        }
        sum += current;
        let next = term(n + 1);
        let ratio = next / current;
        if ratio < 1.0 {
            let rest = next / (1.0 - ratio);
            if rest <= 1e-17 * sum || n > n0 + 10_000 {
                return sum + rest;
            }
        } else if n > n0 + 10_000 {
            return f64::INFINITY;
        }
        current = next;
        n += 1;
    }
}

/// A truncated series together with its truncation certificate.
#[derive(Clone, Debug)]
pub struct SeriesSum<V> {
    pub values: Trajectory<V>,
    /// Number of terms summed (`n0 + 1`).
    pub terms: usize,
    /// Certified bound on the neglected tail at the final time.
    pub remainder: f64,
}

/// The kernel `T(.;A)` and the samples of `B` on one grid, shared by all
/// series built for the same problem.
struct Engine {
    alpha: FractionalOrder,
    grid: TimeGrid,
    kernel: ProductKernel,
    b: Vec<DMatrix<f64>>,
}

impl Engine {
    fn new(alpha: FractionalOrder, a: &BoundedOperator, b: &TimeDependentOperator, grid: &TimeGrid) -> Result<Self> {
        a.check_dim(b.dim(), "perturbation B vs generator A")?;
        Ok(Self {
            alpha,
            grid: *grid,
            kernel: ProductKernel::rl_family(alpha, a, grid)?,
            b: b.sample(grid).into_values(),
        })
    }

    /// `int_0^t T(t-s;A) B(s) prev(s) ds`.
    fn next<V: GridValue>(&self, prev: &Trajectory<V>) -> Result<Trajectory<V>> {
        let (rows, cols) = prev.shape();
        let phi: Vec<V> = prev
            .values()
            .iter()
            .zip(&self.b)
            .map(|(v, b)| {
                let m = DMatrix::from_column_slice(rows, cols, v.data());
                V::from_data(rows, cols, (b * m).as_slice().to_vec())
            })
            .collect();
        self.kernel.convolve(&Trajectory::new(self.grid, phi)?)
    }

    fn sum<V: GridValue>(
        &self,
        first: Trajectory<V>,
        ctl: &SeriesControl,
        variant: TailVariant,
        what: &str,
    ) -> Result<SeriesSum<V>> {
        let t_end = self.grid.t_end();
        let mut sum = first.clone();
        let mut term = first;
        let mut n = 0;
        loop {
            let remainder = tail_remainder(n, t_end, self.alpha, ctl, variant);
            if remainder < ctl.tol {
                return Ok(SeriesSum {
                    values: sum,
                    terms: n + 1,
                    remainder,
                });
            }
            if n + 1 >= ctl.max_terms {
                return Err(Error::NonConvergence {
                    max_terms: ctl.max_terms,
                    context: format!("{what}: certified remainder {remainder:e} >= tol {:e}", ctl.tol),
                });
            }
            term = self.next(&term)?;
            sum = sum.added(&term);
            n += 1;
        }
    }

    fn term<V: GridValue>(&self, n: usize, first: Trajectory<V>) -> Result<Trajectory<V>> {
        (0..n).try_fold(first, |t, _| self.next(&t))
    }
}

fn cosine_samples(alpha: FractionalOrder, a: &BoundedOperator, grid: &TimeGrid) -> Result<OperatorTrajectory> {
    on_grid(grid, |t| cosine_family(alpha, a, t))
}

fn sine_samples(alpha: FractionalOrder, a: &BoundedOperator, grid: &TimeGrid) -> Result<OperatorTrajectory> {
    on_grid(grid, |t| sine_family(alpha, a, t))
}

/// Term `C_n(.;A)` of the cosine series; `C_0 = C(.;A)`.
pub fn series_term_cosine(
    n: usize,
    alpha: FractionalOrder,
    a: &BoundedOperator,
    b: &TimeDependentOperator,
    grid: &TimeGrid,
) -> Result<OperatorTrajectory> {
    Engine::new(alpha, a, b, grid)?.term(n, cosine_samples(alpha, a, grid)?)
}

/// Term `S_n(.;A)` of the sine series; `S_0 = S(.;A)`.
pub fn series_term_sine(
    n: usize,
    alpha: FractionalOrder,
    a: &BoundedOperator,
    b: &TimeDependentOperator,
    grid: &TimeGrid,
) -> Result<OperatorTrajectory> {
    Engine::new(alpha, a, b, grid)?.term(n, sine_samples(alpha, a, grid)?)
}

/// `C(t;A+B) = sum_n C_n(t;A)`.
pub fn perturbed_cosine(
    alpha: FractionalOrder,
    a: &BoundedOperator,
    b: &TimeDependentOperator,
    grid: &TimeGrid,
    ctl: &SeriesControl,
) -> Result<SeriesSum<DMatrix<f64>>> {
    ctl.check_perturbation(b, grid)?;
    let engine = Engine::new(alpha, a, b, grid)?;
    engine.sum(
        cosine_samples(alpha, a, grid)?,
        ctl,
        TailVariant::Cosine,
        "cosine series",
    )
}

/// `S(t;A+B) = sum_n S_n(t;A)`.
pub fn perturbed_sine(
    alpha: FractionalOrder,
    a: &BoundedOperator,
    b: &TimeDependentOperator,
    grid: &TimeGrid,
    ctl: &SeriesControl,
) -> Result<SeriesSum<DMatrix<f64>>> {
    ctl.check_perturbation(b, grid)?;
    let engine = Engine::new(alpha, a, b, grid)?;
    engine.sum(sine_samples(alpha, a, grid)?, ctl, TailVariant::Sine, "sine series")
}

/// `w = sum_n w_n` with `w_0 = T(.;A) * f` and `w_n = T(.;A) * (B w_(n-1))`.
pub fn particular_solution(
    alpha: FractionalOrder,
    a: &BoundedOperator,
    b: &TimeDependentOperator,
    f: &Forcing,
    grid: &TimeGrid,
    ctl: &SeriesControl,
) -> Result<SeriesSum<DVector<f64>>> {
    ctl.check_perturbation(b, grid)?;
    let engine = Engine::new(alpha, a, b, grid)?;
    particular_with(&engine, a, f, ctl)
}

fn particular_with(
    engine: &Engine,
    a: &BoundedOperator,
    f: &Forcing,
    ctl: &SeriesControl,
) -> Result<SeriesSum<DVector<f64>>> {
    a.check_dim(f.dim(), "forcing f vs generator A")?;
    ctl.check_forcing(f, &engine.grid)?;
    if f.is_zero() {
        return Ok(SeriesSum {
            values: Trajectory::zeros(engine.grid, a.dim(), 1),
            terms: 0,
            remainder: 0.0,
        });
    }
    let w0 = engine.kernel.convolve(&f.sample(&engine.grid))?;
    engine.sum(w0, ctl, TailVariant::Particular, "particular series")
}

/// `w(t) = int_0^t T(t-s;A+B) f(s) ds` for a constant perturbation.
pub fn variation_of_constants(
    alpha: FractionalOrder,
    a: &BoundedOperator,
    b: &BoundedOperator,
    f: &Forcing,
    grid: &TimeGrid,
) -> Result<VectorTrajectory> {
    a.check_same_dim(b, "perturbation B vs generator A")?;
    a.check_dim(f.dim(), "forcing f vs generator A")?;
    ProductKernel::rl_family(alpha, &(a + b), grid)?.convolve(&f.sample(grid))
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TruncationReport {
    pub terms: usize,
    pub remainder: f64,
}

impl<V> From<&SeriesSum<V>> for TruncationReport {
    fn from(s: &SeriesSum<V>) -> Self {
        Self {
            terms: s.terms,
            remainder: s.remainder,
        }
    }
}

#[derive(Clone, Debug)]
pub struct IvpSolution {
    pub u: VectorTrajectory,
    pub cosine: TruncationReport,
    pub sine: TruncationReport,
    pub particular: TruncationReport,
}

impl IvpSolution {
    /// Bound on the total truncation error of `u` at the final time.
    pub fn truncation_bound(&self, x: &DVector<f64>, y: &DVector<f64>) -> f64 {
        self.cosine.remainder * x.norm() + self.sine.remainder * y.norm() + self.particular.remainder
    }
}

/// `u = C(.;A+B) x + S(.;A+B) y + w`.
#[allow(clippy::too_many_arguments)]
pub fn solve_ivp(
    alpha: FractionalOrder,
    a: &BoundedOperator,
    b: &TimeDependentOperator,
    f: &Forcing,
    x: &DVector<f64>,
    y: &DVector<f64>,
    grid: &TimeGrid,
    ctl: &SeriesControl,
) -> Result<IvpSolution> {
    a.check_dim(x.len(), "initial value x")?;
    a.check_dim(y.len(), "initial velocity y")?;
    ctl.check_perturbation(b, grid)?;
    let engine = Engine::new(alpha, a, b, grid)?;
    let c = engine.sum(
        cosine_samples(alpha, a, grid)?,
        ctl,
        TailVariant::Cosine,
        "cosine series",
    )?;
    let s = engine.sum(sine_samples(alpha, a, grid)?, ctl, TailVariant::Sine, "sine series")?;
    let w = particular_with(&engine, a, f, ctl)?;
    let u = c.values.apply(x).added(&s.values.apply(y)).added(&w.values);
    Ok(IvpSolution {
        u,
        cosine: (&c).into(),
        sine: (&s).into(),
        particular: (&w).into(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mlfunc::{g_kernel, ml_scalar, MlParams};

    fn order(a: f64) -> FractionalOrder {
        FractionalOrder::new(a).unwrap()
    }

    fn scalar(v: f64) -> BoundedOperator {
        BoundedOperator::from_rows(&[vec![v]]).unwrap()
    }

    fn ctl(m: f64, omega: f64, k: f64, n: f64) -> SeriesControl {
        SeriesControl::new(1e-12, 200, GrowthEnvelope::new(m, omega).unwrap(), k, n).unwrap()
    }

    #[test]
    fn tail_bound_values() {
        let al = order(1.5);
        let c = ctl(2.0, 0.5, 1.0, 0.0);
        assert!((tail_bound(0, 1.3, al, &c, TailVariant::Cosine) - 2.0 * 0.65f64.exp()).abs() < 1e-14);
        let c0 = ctl(1.0, 0.0, 0.0, 0.0);
        assert_eq!(tail_bound(3, 1.0, al, &c0, TailVariant::Cosine), 0.0);
        let c1 = ctl(1.0, 0.0, 1.0, 0.0);
        assert!((tail_bound(2, 1.0, al, &c1, TailVariant::Cosine) - 1.0 / 6.0).abs() < 1e-15);
        assert!((tail_bound(0, 0.0, al, &c1, TailVariant::Cosine) - 1.0).abs() < 1e-15);
        assert_eq!(tail_bound(0, 0.0, al, &c1, TailVariant::Sine), 0.0);
        assert_eq!(tail_bound(0, 1.0, al, &c1, TailVariant::Particular), 0.0);
    }

    #[test]
    fn tail_remainder_matches_mittag_leffler_difference() {
        // With M = 1, omega = 0 the cosine tail is E_a(K t^a) minus its partial sum.
        let al = order(1.3);
        let c = ctl(1.0, 0.0, 2.0, 0.0);
        let t: f64 = 1.5;
        let e = ml_scalar(MlParams::new(1.3, 1.0).unwrap(), 2.0 * t.powf(1.3)).unwrap();
        let partial: f64 = (0..=3).map(|n| tail_bound(n, t, al, &c, TailVariant::Cosine)).sum();
        let r = tail_remainder(3, t, al, &c, TailVariant::Cosine);
        assert!(((e - partial) - r).abs() < 1e-12 * e, "{} vs {r}", e - partial);
    }

    #[test]
    fn unperturbed_series_is_the_family() {
        let grid = TimeGrid::new(1.0, 32).unwrap();
        let al = order(1.7);
        let a = BoundedOperator::from_rows(&[vec![-1.0, 0.4], vec![0.2, -0.6]]).unwrap();
        let b = TimeDependentOperator::zero(2);
        let c = perturbed_cosine(al, &a, &b, &grid, &ctl(1.5, 0.0, 0.0, 0.0)).unwrap();
        assert_eq!(c.terms, 1);
        assert_eq!(c.values, cosine_samples(al, &a, &grid).unwrap());
        assert_eq!(c.values.value(0), &DMatrix::identity(2, 2));
        let s = perturbed_sine(al, &a, &b, &grid, &ctl(1.5, 0.0, 0.0, 0.0)).unwrap();
        assert_eq!(s.values.value(0), &DMatrix::zeros(2, 2));
        let t1 = series_term_cosine(1, al, &a, &b, &grid).unwrap();
        assert_eq!(t1.sup_norm(), 0.0);
    }

    #[test]
    fn first_cosine_term_matches_first_order_expansion() {
        // d/db E_a((a+b) t^a) at b = 0 is t^a E'_a(a t^a); the first-order
        // term in b is b t^a sum_k (k+1) a^k t^(k a) / Gamma((k+1) a + 1).
        let (al, a, b) = (1.5, -1.0, 0.2);
        let grid = TimeGrid::new(1.0, 512).unwrap();
        let term = series_term_cosine(
            1,
            order(al),
            &scalar(a),
            &TimeDependentOperator::constant(scalar(b)),
            &grid,
        )
        .unwrap();
        for i in [128, 256, 512] {
            let t: f64 = grid.node(i);
            let oracle: f64 = b
                * t.powf(al)
                * (0..80)
                    .map(|k| (k + 1) as f64 * (a * t.powf(al)).powi(k) / libm::tgamma((k + 1) as f64 * al + 1.0))
                    .sum::<f64>();
            assert!((term.value(i)[(0, 0)] - oracle).abs() < 2e-6, "t = {t}");
        }
    }

    #[test]
    fn commuting_scalar_cosine_matches_closed_form() {
        let (al, a, b) = (1.8, -1.0, 0.4);
        let grid = TimeGrid::new(1.5, 512).unwrap();
        let c = perturbed_cosine(
            order(al),
            &scalar(a),
            &TimeDependentOperator::constant(scalar(b)),
            &grid,
            &ctl(1.0, 0.0, b, 0.0),
        )
        .unwrap();
        let p = MlParams::new(al, 1.0).unwrap();
        for (i, v) in c.values.values().iter().enumerate() {
            let t = grid.node(i);
            let exact = ml_scalar(p, (a + b) * t.powf(al)).unwrap();
            assert!((v[(0, 0)] - exact).abs() < 1e-5);
        }
    }

    #[test]
    fn constant_forcing_without_dynamics() {
        let grid = TimeGrid::new(2.0, 16).unwrap();
        let al = order(1.5);
        let f = Forcing::Constant(DVector::from_vec(vec![1.0, -2.0]));
        let w = particular_solution(
            al,
            &BoundedOperator::zeros(2),
            &TimeDependentOperator::zero(2),
            &f,
            &grid,
            &ctl(1.0, 0.0, 0.0, 2.5),
        )
        .unwrap();
        for (i, v) in w.values.values().iter().enumerate() {
            let g = g_kernel(2.5, grid.node(i));
            assert!((v[0] - g).abs() < 1e-13 && (v[1] + 2.0 * g).abs() < 1e-13);
        }
        let z = particular_solution(
            al,
            &BoundedOperator::zeros(2),
            &TimeDependentOperator::zero(2),
            &Forcing::Zero(2),
            &grid,
            &ctl(1.0, 0.0, 0.0, 0.0),
        )
        .unwrap();
        assert_eq!(z.values.sup_norm(), 0.0);
    }

    #[test]
    fn variation_of_constants_against_series() {
        // int_0^t T(s; c) ds = t^a E_{a,a+1}(c t^a).
        let (al, a, b) = (1.6, -1.0, 0.25);
        let grid = TimeGrid::new(1.0, 256).unwrap();
        let f = Forcing::Constant(DVector::from_element(1, 1.0));
        let w = variation_of_constants(order(al), &scalar(a), &scalar(b), &f, &grid).unwrap();
        let p = MlParams::new(al, al + 1.0).unwrap();
        for (i, v) in w.values().iter().enumerate() {
            let t: f64 = grid.node(i);
            let exact = t.powf(al) * ml_scalar(p, (a + b) * t.powf(al)).unwrap();
            assert!((v[0] - exact).abs() < 1e-5);
        }
    }

    #[test]
    fn harmonic_oscillator() {
        let grid = TimeGrid::new(3.0, 64).unwrap();
        let a = BoundedOperator::identity(2).scaled(-1.0);
        let x = DVector::from_vec(vec![1.0, 0.5]);
        let y = DVector::from_vec(vec![-0.3, 2.0]);
        let sol = solve_ivp(
            order(2.0),
            &a,
            &TimeDependentOperator::zero(2),
            &Forcing::Zero(2),
            &x,
            &y,
            &grid,
            &ctl(1.0, 0.0, 0.0, 0.0),
        )
        .unwrap();
        assert_eq!(sol.u.value(0), &x);
        for (i, u) in sol.u.values().iter().enumerate() {
            let t = grid.node(i);
            let exact = &x * t.cos() + &y * t.sin();
            assert!((u - exact).norm() < 1e-13);
        }
    }

    #[test]
    fn understated_constants_are_rejected() {
        let grid = TimeGrid::new(1.0, 8).unwrap();
        let b = TimeDependentOperator::constant(scalar(0.5));
        let r = perturbed_cosine(order(1.5), &scalar(-1.0), &b, &grid, &ctl(1.0, 0.0, 0.1, 0.0));
        assert!(matches!(r, Err(Error::InvalidParameter { name: "K_t", .. })));
        let f = Forcing::Constant(DVector::from_element(1, 3.0));
        let r = particular_solution(order(1.5), &scalar(-1.0), &b, &f, &grid, &ctl(1.0, 0.0, 0.5, 1.0));
        assert!(matches!(r, Err(Error::InvalidParameter { name: "N_t", .. })));
    }

    #[test]
    fn too_few_terms_is_non_convergence() {
        let grid = TimeGrid::new(1.0, 8).unwrap();
        let b = TimeDependentOperator::constant(scalar(0.5));
        let mut c = ctl(1.0, 0.0, 0.5, 0.0);
        c.max_terms = 2;
        let r = perturbed_cosine(order(1.5), &scalar(-1.0), &b, &grid, &c);
        assert!(matches!(r, Err(Error::NonConvergence { .. })));
    }
}
