//! Uniform time grids, sampled trajectories, and the time-dependent data
//! (perturbing operator and forcing) that solvers sample on a grid.

use nalgebra::{DMatrix, DVector};

use crate::error::{invalid, Error, Result};
use crate::operator::{spectral_norm, BoundedOperator};

/// Uniform grid `t_i = i * T / N`, `i = 0..=N`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TimeGrid {
    t_end: f64,
    steps: usize,
}

impl TimeGrid {
    pub fn new(t_end: f64, steps: usize) -> Result<Self> {
        if !(t_end.is_finite() && t_end > 0.0) {
            return Err(invalid("T", format!("must be finite and positive, got {t_end}")));
        }
        if steps == 0 {
            return Err(invalid("N", "must be at least 1"));
        }
        Ok(Self { t_end, steps })
    }

    pub fn t_end(&self) -> f64 {
        self.t_end
    }

    /// Number of steps `N`; the grid has `N + 1` nodes.
    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn len(&self) -> usize {
        self.steps + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn step(&self) -> f64 {
        self.t_end / self.steps as f64
    }

    pub fn node(&self, i: usize) -> f64 {
        if i == self.steps {
            self.t_end
        } else {
            i as f64 * self.step()
        }
    }

    pub fn nodes(&self) -> impl Iterator<Item = f64> + '_ {
        (0..=self.steps).map(move |i| self.node(i))
    }

    /// The same interval with twice as many steps.
    pub fn refined(&self) -> Self {
        Self {
            t_end: self.t_end,
            steps: self.steps * 2,
        }
    }
}

/// Values that can live on a grid: column vectors or matrices, stored
/// column-major.
pub trait GridValue: Clone + Send + Sync {
    fn rows(&self) -> usize;
    fn cols(&self) -> usize;
    fn data(&self) -> &[f64];
    fn from_data(rows: usize, cols: usize, data: Vec<f64>) -> Self;
    /// Euclidean norm for vectors, spectral norm for matrices.
    fn value_norm(&self) -> f64;

    fn zeros_like(&self) -> Self {
        Self::from_data(self.rows(), self.cols(), vec![0.0; self.data().len()])
    }
}

impl GridValue for DVector<f64> {
    fn rows(&self) -> usize {
        self.nrows()
    }
    fn cols(&self) -> usize {
        1
    }
    fn data(&self) -> &[f64] {
        self.as_slice()
    }
    fn from_data(_rows: usize, _cols: usize, data: Vec<f64>) -> Self {
        DVector::from_vec(data)
    }
    fn value_norm(&self) -> f64 {
        self.norm()
    }
}

impl GridValue for DMatrix<f64> {
    fn rows(&self) -> usize {
        self.nrows()
    }
    fn cols(&self) -> usize {
        self.ncols()
    }
    fn data(&self) -> &[f64] {
        self.as_slice()
    }
    fn from_data(rows: usize, cols: usize, data: Vec<f64>) -> Self {
        DMatrix::from_vec(rows, cols, data)
    }
    fn value_norm(&self) -> f64 {
        spectral_norm(self)
    }
}

/// One value per grid node.
#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory<V> {
    grid: TimeGrid,
    values: Vec<V>,
}

pub type VectorTrajectory = Trajectory<DVector<f64>>;
pub type OperatorTrajectory = Trajectory<DMatrix<f64>>;

impl<V: GridValue> Trajectory<V> {
    pub fn new(grid: TimeGrid, values: Vec<V>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::DimensionMismatch {
                expected: grid.len(),
                found: values.len(),
                context: "trajectory length vs grid nodes",
            });
        }
        if let Some(first) = values.first() {
            let (r, c) = (first.rows(), first.cols());
            if values.iter().any(|v| v.rows() != r || v.cols() != c) {
                return Err(invalid("trajectory", "all samples must share one shape"));
            }
        }
        if values.iter().any(|v| v.data().iter().any(|x| !x.is_finite())) {
            return Err(invalid("trajectory", "samples must be finite"));
        }
        Ok(Self { grid, values })
    }

    pub fn from_fn(grid: TimeGrid, mut f: impl FnMut(f64) -> V) -> Self {
        let values = grid.nodes().map(&mut f).collect();
        Self { grid, values }
    }

    pub fn zeros(grid: TimeGrid, rows: usize, cols: usize) -> Self {
        let z = V::from_data(rows, cols, vec![0.0; rows * cols]);
        Self {
            grid,
            values: vec![z; grid.len()],
        }
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn values(&self) -> &[V] {
        &self.values
    }

    pub fn value(&self, i: usize) -> &V {
        &self.values[i]
    }

    pub fn into_values(self) -> Vec<V> {
        self.values
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.values[0].rows(), self.values[0].cols())
    }

    /// Largest sample norm over the grid.
    pub fn sup_norm(&self) -> f64 {
        self.values.iter().map(GridValue::value_norm).fold(0.0, f64::max)
    }

    /// `max_i ||self_i - other_i||`.
    pub fn max_deviation(&self, other: &Self) -> Result<f64> {
        if self.grid != other.grid {
            return Err(invalid("trajectory", "grids differ"));
        }
        Ok(self
            .values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| {
                let d: Vec<f64> = a.data().iter().zip(b.data()).map(|(x, y)| x - y).collect();
                V::from_data(a.rows(), a.cols(), d).value_norm()
            })
            .fold(0.0, f64::max))
    }

    /// Entrywise `self + other`.
    pub fn added(&self, other: &Self) -> Self {
        self.zip_with(other, |a, b| a + b)
    }

    pub(crate) fn zip_with(&self, other: &Self, f: impl Fn(f64, f64) -> f64) -> Self {
        let values = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| {
                let d = a.data().iter().zip(b.data()).map(|(&x, &y)| f(x, y)).collect();
                V::from_data(a.rows(), a.cols(), d)
            })
            .collect();
        Self {
            grid: self.grid,
            values,
        }
    }

    pub fn scaled(&self, s: f64) -> Self {
        let values = self
            .values
            .iter()
            .map(|a| V::from_data(a.rows(), a.cols(), a.data().iter().map(|x| x * s).collect()))
            .collect();
        Self {
            grid: self.grid,
            values,
        }
    }
}

impl OperatorTrajectory {
    /// Applies every operator sample to the same vector.
    pub fn apply(&self, x: &DVector<f64>) -> VectorTrajectory {
        Trajectory {
            grid: self.grid,
            values: self.values.iter().map(|m| m * x).collect(),
        }
    }
}

/// Sampled derivative of tabulated data: central differences inside,
/// second-order one-sided stencils at both ends.
pub(crate) fn finite_difference<V: GridValue>(samples: &[V], h: f64) -> Vec<V> {
    let n = samples.len();
    let combine = |coeffs: &[(usize, f64)]| {
        let first = &samples[coeffs[0].0];
        let mut acc = vec![0.0; first.data().len()];
        for &(idx, c) in coeffs {
            for (a, v) in acc.iter_mut().zip(samples[idx].data()) {
                *a += c * v / h;
            }
        }
        V::from_data(first.rows(), first.cols(), acc)
    };
    match n {
        0 => Vec::new(),
        1 => vec![samples[0].zeros_like()],
        2 => {
            let d = combine(&[(1, 1.0), (0, -1.0)]);
            vec![d.clone(), d]
        }
        _ => (0..n)
            .map(|i| {
                if i == 0 {
                    combine(&[(0, -1.5), (1, 2.0), (2, -0.5)])
                } else if i == n - 1 {
                    combine(&[(n - 1, 1.5), (n - 2, -2.0), (n - 3, 0.5)])
                } else {
                    combine(&[(i + 1, 0.5), (i - 1, -0.5)])
                }
            })
            .collect(),
    }
}

/// Piecewise-linear lookup into samples on a grid, clamped to `[0, T]`.
fn interpolate<V: GridValue>(grid: &TimeGrid, samples: &[V], t: f64) -> V {
    let h = grid.step();
    let x = (t / h).clamp(0.0, grid.steps() as f64);
    let i = (x.floor() as usize).min(grid.steps() - 1);
    let theta = x - i as f64;
    if theta == 0.0 {
        return samples[i].clone();
    }
    let (a, b) = (&samples[i], &samples[i + 1]);
    let d = a
        .data()
        .iter()
        .zip(b.data())
        .map(|(x, y)| (1.0 - theta) * x + theta * y)
        .collect();
    V::from_data(a.rows(), a.cols(), d)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum OperatorKind {
    Constant,
    Polynomial,
    Tabulated,
}

/// The perturbation `t -> B(t)` together with its derivative.
#[derive(Clone, Debug)]
pub enum TimeDependentOperator {
    Constant(BoundedOperator),
    /// `B(t) = sum_k C_k t^k`.
    Polynomial(Vec<BoundedOperator>),
    /// Samples on a grid; the derivative is the finite difference of the
    /// samples and both are linearly interpolated between nodes.
    Tabulated {
        grid: TimeGrid,
        values: Vec<DMatrix<f64>>,
        derivs: Vec<DMatrix<f64>>,
    },
}

impl TimeDependentOperator {
    pub fn constant(b: BoundedOperator) -> Self {
        Self::Constant(b)
    }

    pub fn zero(dim: usize) -> Self {
        Self::Constant(BoundedOperator::zeros(dim))
    }

    pub fn polynomial(coeffs: Vec<BoundedOperator>) -> Result<Self> {
        let Some(first) = coeffs.first() else {
            return Err(invalid("B", "polynomial needs at least one coefficient"));
        };
        for c in &coeffs {
            first.check_same_dim(c, "polynomial coefficients of B")?;
        }
        Ok(Self::Polynomial(coeffs))
    }

    pub fn tabulated(grid: TimeGrid, values: Vec<DMatrix<f64>>) -> Result<Self> {
        let traj = Trajectory::new(grid, values)?;
        let (r, c) = traj.shape();
        if r != c {
            return Err(invalid("B", "tabulated samples must be square"));
        }
        let values = traj.into_values();
        let derivs = finite_difference(&values, grid.step());
        Ok(Self::Tabulated { grid, values, derivs })
    }

    pub fn kind(&self) -> OperatorKind {
        match self {
            Self::Constant(_) => OperatorKind::Constant,
            Self::Polynomial(_) => OperatorKind::Polynomial,
            Self::Tabulated { .. } => OperatorKind::Tabulated,
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            Self::Constant(b) => b.dim(),
            Self::Polynomial(c) => c[0].dim(),
            Self::Tabulated { values, .. } => values[0].nrows(),
        }
    }

    pub fn as_constant(&self) -> Option<&BoundedOperator> {
        match self {
            Self::Constant(b) => Some(b),
            _ => None,
        }
    }

    pub fn eval(&self, t: f64) -> DMatrix<f64> {
        match self {
            Self::Constant(b) => b.matrix().clone(),
            Self::Polynomial(coeffs) => {
                let mut acc = coeffs.last().unwrap().matrix().clone();
                for c in coeffs.iter().rev().skip(1) {
                    acc = acc * t + c.matrix();
                }
                acc
            }
            Self::Tabulated { grid, values, .. } => interpolate(grid, values, t),
        }
    }

    pub fn deriv(&self, t: f64) -> DMatrix<f64> {
        match self {
            Self::Constant(b) => DMatrix::zeros(b.dim(), b.dim()),
            Self::Polynomial(coeffs) => {
                let n = coeffs[0].dim();
                let mut acc = DMatrix::zeros(n, n);
                for (k, c) in coeffs.iter().enumerate().skip(1).rev() {
                    acc = acc * t + c.matrix() * k as f64;
                }
                acc
            }
            Self::Tabulated { grid, derivs, .. } => interpolate(grid, derivs, t),
        }
    }

    pub fn sample(&self, grid: &TimeGrid) -> OperatorTrajectory {
        Trajectory::from_fn(*grid, |t| self.eval(t))
    }

    /// `sup_i max(||B(t_i)||, ||B'(t_i)||)` over the grid nodes.
    pub fn sup_norm_with_derivative(&self, grid: &TimeGrid) -> f64 {
        match self {
            Self::Constant(b) => b.norm(),
            _ => grid
                .nodes()
                .map(|t| spectral_norm(&self.eval(t)).max(spectral_norm(&self.deriv(t))))
                .fold(0.0, f64::max),
        }
    }

    pub fn is_identically_zero(&self) -> bool {
        match self {
            Self::Constant(b) => b.is_zero(),
            Self::Polynomial(c) => c.iter().all(BoundedOperator::is_zero),
            Self::Tabulated { values, .. } => values.iter().all(|m| m.iter().all(|&v| v == 0.0)),
        }
    }
}

/// The inhomogeneity `t -> f(t)` together with its derivative.
#[derive(Clone, Debug)]
pub enum Forcing {
    Zero(usize),
    Constant(DVector<f64>),
    /// `f(t) = sum_k c_k t^k`.
    Polynomial(Vec<DVector<f64>>),
    Tabulated {
        grid: TimeGrid,
        values: Vec<DVector<f64>>,
        derivs: Vec<DVector<f64>>,
    },
}

impl Forcing {
    pub fn polynomial(coeffs: Vec<DVector<f64>>) -> Result<Self> {
        let Some(first) = coeffs.first() else {
            return Err(invalid("f", "polynomial needs at least one coefficient"));
        };
        if coeffs.iter().any(|c| c.len() != first.len()) {
            return Err(invalid("f", "polynomial coefficients must share one length"));
        }
        Ok(Self::Polynomial(coeffs))
    }

    pub fn tabulated(grid: TimeGrid, values: Vec<DVector<f64>>) -> Result<Self> {
        let values = Trajectory::new(grid, values)?.into_values();
        let derivs = finite_difference(&values, grid.step());
        Ok(Self::Tabulated { grid, values, derivs })
    }

    pub fn dim(&self) -> usize {
        match self {
            Self::Zero(n) => *n,
            Self::Constant(c) => c.len(),
            Self::Polynomial(c) => c[0].len(),
            Self::Tabulated { values, .. } => values[0].len(),
        }
    }

    pub fn is_zero(&self) -> bool {
        match self {
            Self::Zero(_) => true,
            Self::Constant(c) => c.iter().all(|&v| v == 0.0),
            Self::Polynomial(cs) => cs.iter().all(|c| c.iter().all(|&v| v == 0.0)),
            Self::Tabulated { values, .. } => values.iter().all(|c| c.iter().all(|&v| v == 0.0)),
        }
    }

    pub fn eval(&self, t: f64) -> DVector<f64> {
        match self {
            Self::Zero(n) => DVector::zeros(*n),
            Self::Constant(c) => c.clone(),
            Self::Polynomial(coeffs) => {
                let mut acc = coeffs.last().unwrap().clone();
                for c in coeffs.iter().rev().skip(1) {
                    acc = acc * t + c;
                }
                acc
            }
            Self::Tabulated { grid, values, .. } => interpolate(grid, values, t),
        }
    }

    pub fn deriv(&self, t: f64) -> DVector<f64> {
        match self {
            Self::Zero(n) => DVector::zeros(*n),
            Self::Constant(c) => DVector::zeros(c.len()),
            Self::Polynomial(coeffs) => {
                let mut acc = DVector::zeros(coeffs[0].len());
                for (k, c) in coeffs.iter().enumerate().skip(1).rev() {
                    acc = acc * t + c * k as f64;
                }
                acc
            }
            Self::Tabulated { grid, derivs, .. } => interpolate(grid, derivs, t),
        }
    }

    pub fn sample(&self, grid: &TimeGrid) -> VectorTrajectory {
        Trajectory::from_fn(*grid, |t| self.eval(t))
    }

    /// `sup_i max(||f(t_i)||, ||f'(t_i)||)` over the grid nodes.
    pub fn sup_norm_with_derivative(&self, grid: &TimeGrid) -> f64 {
        if self.is_zero() {
            return 0.0;
        }
        grid.nodes()
            .map(|t| self.eval(t).norm().max(self.deriv(t).norm()))
            .fold(0.0, f64::max)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_nodes_hit_both_ends() {
        let g = TimeGrid::new(2.0, 7).unwrap();
        assert_eq!(g.node(0), 0.0);
        assert_eq!(g.node(7), 2.0);
        assert_eq!(g.len(), 8);
        assert!(TimeGrid::new(0.0, 4).is_err());
        assert!(TimeGrid::new(1.0, 0).is_err());
    }

    #[test]
    fn polynomial_operator_and_derivative() {
        let b0 = BoundedOperator::from_rows(&[vec![1.0, 0.0], vec![0.0, 2.0]]).unwrap();
        let b1 = BoundedOperator::from_rows(&[vec![0.0, 1.0], vec![0.0, 0.0]]).unwrap();
        let b = TimeDependentOperator::polynomial(vec![b0, b1]).unwrap();
        let v = b.eval(0.5);
        assert_eq!(v[(0, 1)], 0.5);
        assert_eq!(v[(1, 1)], 2.0);
        let d = b.deriv(0.3);
        assert_eq!(d[(0, 1)], 1.0);
        assert_eq!(d[(0, 0)], 0.0);
        assert_eq!(b.kind(), OperatorKind::Polynomial);
    }

    #[test]
    fn constant_operator_has_zero_derivative() {
        let b = TimeDependentOperator::constant(BoundedOperator::identity(3));
        assert!(b.deriv(1.0).iter().all(|&v| v == 0.0));
        let g = TimeGrid::new(1.0, 4).unwrap();
        assert!((b.sup_norm_with_derivative(&g) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn tabulated_derivative_is_exact_for_quadratics() {
        let g = TimeGrid::new(1.0, 10).unwrap();
        let vals: Vec<DMatrix<f64>> = g.nodes().map(|t| DMatrix::from_element(1, 1, t * t)).collect();
        let b = TimeDependentOperator::tabulated(g, vals).unwrap();
        for t in g.nodes() {
            assert!((b.deriv(t)[(0, 0)] - 2.0 * t).abs() < 1e-12, "t = {t}");
        }
        // Linear interpolation between 0.04 and 0.09.
        assert!((b.eval(0.25)[(0, 0)] - 0.065).abs() < 1e-15);
    }

    #[test]
    fn forcing_polynomial_derivative() {
        let f = Forcing::polynomial(vec![
            DVector::from_vec(vec![1.0, 0.0]),
            DVector::from_vec(vec![0.0, 1.0]),
        ])
        .unwrap();
        assert_eq!(f.eval(2.0), DVector::from_vec(vec![1.0, 2.0]));
        assert_eq!(f.deriv(2.0), DVector::from_vec(vec![0.0, 1.0]));
        let g = TimeGrid::new(1.0, 4).unwrap();
        assert!((f.sup_norm_with_derivative(&g) - 2f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn trajectory_rejects_wrong_length() {
        let g = TimeGrid::new(1.0, 4).unwrap();
        assert!(VectorTrajectory::new(g, vec![DVector::zeros(2); 3]).is_err());
    }
}
