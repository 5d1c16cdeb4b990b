//! Explicit solutions for constant `A`, `B`.
//!
//! For arbitrary (non-commuting) `A`, `B` the solution is the series
//!
//! ```text
//! u(t) = sum_n P_n [ t^(n a) / Gamma(n a + 1) x + t^(n a + 1) / Gamma(n a + 2) y ]
//!      + int_0^t sum_n P_n (t-s)^(n a + a - 1) / Gamma(n a + a) f(s) ds
//! ```
//!
//! with `P_n = sum_{k+m=n} Q_{k,m}`. The coefficients `Q_{k,m}` are the sums
//! of all words in `A`, `B` with `k` letters `A` and `m` letters `B`. When
//! `AB = BA` the solution collapses to Mittag-Leffler functions of `A + B`.

use std::collections::HashMap;
use std::hash::{DefaultHasher, Hash, Hasher};
use std::sync::{Arc, OnceLock, RwLock};

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::families::{cosine_family, on_grid, sine_family};
use crate::grid::{Forcing, TimeGrid, Trajectory, VectorTrajectory};
use crate::mlfunc::{rgamma, FractionalOrder};
use crate::operator::BoundedOperator;
use crate::perturb::quadrature::ProductKernel;
use crate::perturb::series::{sum_tail, SeriesControl, TruncationReport};

/// Relative tolerance of the commutation test.
pub const COMMUTE_TOL: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq)]
pub struct Commutator {
    pub value: BoundedOperator,
    /// `||AB - BA|| <= COMMUTE_TOL ||A|| ||B||`.
    pub is_zero: bool,
}

pub fn commutator(a: &BoundedOperator, b: &BoundedOperator) -> Result<Commutator> {
    a.check_same_dim(b, "commutator operands")?;
    let value = &(a * b) - &(b * a);
    let is_zero = value.is_zero() || value.norm() <= COMMUTE_TOL * a.norm() * b.norm();
    Ok(Commutator { value, is_zero })
}

fn require_permutable(a: &BoundedOperator, b: &BoundedOperator) -> Result<()> {
    let c = commutator(a, b)?;
    if !c.is_zero {
        return Err(Error::NotPermutable {
            commutator_norm: c.value.norm(),
        });
    }
    Ok(())
}

/// `Q_{k,m}` for all `k + m <= n_max`, built by
/// `Q_{k,m} = sum_{l=0}^{k} A^(k-l) B Q_{l,m-1}`, `Q_{k,0} = A^k`.
#[derive(Clone, Debug)]
pub struct QTable {
    a: DMatrix<f64>,
    b: DMatrix<f64>,
    n_max: usize,
    a_powers: Vec<DMatrix<f64>>,
    /// `entries[k][m]`.
    entries: Vec<Vec<DMatrix<f64>>>,
    /// `level_sums[n] = sum_{k+m=n} Q_{k,m}`.
    level_sums: Vec<DMatrix<f64>>,
}

impl QTable {
    pub fn new(a: &BoundedOperator, b: &BoundedOperator, n_max: usize) -> Result<Self> {
        a.check_same_dim(b, "Q-table operands")?;
        let n = a.dim();
        let mut table = Self {
            a: a.matrix().clone(),
            b: b.matrix().clone(),
            n_max: 0,
            a_powers: vec![DMatrix::identity(n, n)],
            entries: vec![vec![DMatrix::identity(n, n)]],
            level_sums: vec![DMatrix::identity(n, n)],
        };
        table.extend_to(n_max);
        Ok(table)
    }

    pub fn n_max(&self) -> usize {
        self.n_max
    }

    /// Grows the table to all `k + m <= n_max`; a no-op if already there.
    pub fn extend_to(&mut self, n_max: usize) {
        for total in self.n_max + 1..=n_max {
            self.a_powers.push(&self.a * &self.a_powers[total - 1]);
            self.entries.push(Vec::with_capacity(n_max - total + 1));
            let mut level = self.a_powers[total].clone();
            for m in 0..=total {
                let k = total - m;
                let q = if m == 0 {
                    self.a_powers[k].clone()
                } else {
                    let mut acc = DMatrix::zeros(self.a.nrows(), self.a.ncols());
                    for l in 0..=k {
                        acc += &self.a_powers[k - l] * (&self.b * &self.entries[l][m - 1]);
                    }
                    level += &acc;
                    acc
                };
                debug_assert_eq!(self.entries[k].len(), m);
                self.entries[k].push(q);
            }
            self.level_sums.push(level);
            self.n_max = total;
        }
    }

    pub fn get(&self, k: usize, m: usize) -> Option<&DMatrix<f64>> {
        self.entries.get(k).and_then(|row| row.get(m))
    }

    pub fn level_sum(&self, n: usize) -> Option<&DMatrix<f64>> {
        self.level_sums.get(n)
    }

    fn matches(&self, a: &DMatrix<f64>, b: &DMatrix<f64>) -> bool {
        &self.a == a && &self.b == b
    }
}

pub fn q_table(a: &BoundedOperator, b: &BoundedOperator, n_max: usize) -> Result<QTable> {
    QTable::new(a, b, n_max)
}

/// Q-tables memoized per `(A, B)` pair. Readers share tables; a table that
/// is too small is replaced by an extended copy under the write lock.
#[derive(Debug, Default)]
pub struct QCache {
    tables: RwLock<HashMap<u64, Vec<Arc<QTable>>>>,
}

fn content_hash(a: &DMatrix<f64>, b: &DMatrix<f64>) -> u64 {
    let mut h = DefaultHasher::new();
    a.nrows().hash(&mut h);
    for v in a.iter().chain(b.iter()) {
        v.to_bits().hash(&mut h);
    }
    h.finish()
}

impl QCache {
    pub fn new() -> Self {
        Self::default()
    }

    /// Process-wide cache used by the solvers.
    pub fn global() -> &'static QCache {
        static CACHE: OnceLock<QCache> = OnceLock::new();
        CACHE.get_or_init(QCache::new)
    }

    pub fn table(&self, a: &BoundedOperator, b: &BoundedOperator, n_max: usize) -> Result<Arc<QTable>> {
        a.check_same_dim(b, "Q-table operands")?;
        let key = content_hash(a.matrix(), b.matrix());
        {
            let tables = self.tables.read().unwrap_or_else(|e| e.into_inner());
            if let Some(t) = tables
                .get(&key)
                .and_then(|v| v.iter().find(|t| t.matches(a.matrix(), b.matrix())))
            {
                if t.n_max() >= n_max {
                    return Ok(Arc::clone(t));
                }
            }
        }
        let mut tables = self.tables.write().unwrap_or_else(|e| e.into_inner());
        let bucket = tables.entry(key).or_default();
        let slot = bucket.iter().position(|t| t.matches(a.matrix(), b.matrix()));
        let table = match slot {
            Some(i) if bucket[i].n_max() >= n_max => return Ok(Arc::clone(&bucket[i])),
            Some(i) => {
                let mut grown = (*bucket[i]).clone();
                grown.extend_to(n_max);
                bucket[i] = Arc::new(grown);
                &bucket[i]
            }
            None => {
                bucket.push(Arc::new(QTable::new(a, b, n_max)?));
                bucket.last().expect("just pushed")
            }
        };
        Ok(Arc::clone(table))
    }

    pub fn len(&self) -> usize {
        self.tables
            .read()
            .unwrap_or_else(|e| e.into_inner())
            .values()
            .map(Vec::len)
            .sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Clone, Debug)]
pub struct ClosedFormSolution {
    pub u: VectorTrajectory,
    /// Present for the truncated word-sum series.
    pub truncation: Option<TruncationReport>,
}

/// Per-level scalar coefficients of the word-sum series at time `t`:
/// multipliers of `P_n x`, `P_n y`, and of `P_n` in the forcing kernel.
type Coefficients = dyn Fn(usize, f64) -> Vec<(f64, f64, f64)> + Sync;

fn fractional_coefficients(alpha: f64) -> impl Fn(usize, f64) -> Vec<(f64, f64, f64)> + Sync {
    move |n0, t| {
        (0..=n0)
            .map(|n| {
                let e = n as f64 * alpha;
                let p = if n == 0 { 1.0 } else { t.powf(e) };
                (p * rgamma(e + 1.0), p * t * rgamma(e + 2.0), p * rgamma(e + alpha))
            })
            .collect()
    }
}

fn classical_coefficients(n0: usize, t: f64) -> Vec<(f64, f64, f64)> {
    // t^(2n)/(2n)!, t^(2n+1)/(2n+1)!, t^(2n)/(2n+1)!
    let mut out = Vec::with_capacity(n0 + 1);
    let (mut c, mut d, mut k) = (1.0, t, 1.0);
    for n in 0..=n0 {
        if n > 0 {
            let (two_n, t2) = (2.0 * n as f64, t * t);
            c *= t2 / ((two_n - 1.0) * two_n);
            d *= t2 / (two_n * (two_n + 1.0));
            k *= t2 / (two_n * (two_n + 1.0));
        }
        out.push((c, d, k));
    }
    out
}

#[allow(clippy::too_many_arguments)]
fn word_sum_solution(
    alpha: f64,
    coefficients: &Coefficients,
    a: &BoundedOperator,
    b: &BoundedOperator,
    f: &Forcing,
    x: &DVector<f64>,
    y: &DVector<f64>,
    grid: &TimeGrid,
    ctl: &SeriesControl,
) -> Result<ClosedFormSolution> {
    a.check_same_dim(b, "perturbation B vs generator A")?;
    a.check_dim(x.len(), "initial value x")?;
    a.check_dim(y.len(), "initial velocity y")?;
    a.check_dim(f.dim(), "forcing f vs generator A")?;
    let t_end = grid.t_end();
    let growth = a.norm() + b.norm();
    let f_sup = if f.is_zero() {
        0.0
    } else {
        grid.nodes().map(|t| f.eval(t).norm()).fold(0.0, f64::max)
    };
    let (xn, yn) = (x.norm(), y.norm());
    // ||P_n|| <= (||A|| + ||B||)^n, and the forcing integral of level n is
    // bounded by sup ||f|| g_{n a + a + 1}(t).
    let level_bound = |n: usize| {
        let e = n as f64 * alpha;
        let g = |c: f64| ((e + c - 1.0) * t_end.ln() - libm::lgamma(e + c)).exp();
        let p = if n == 0 { 1.0 } else { growth.powi(n as i32) };
        p * (xn * g(1.0) + yn * g(2.0) + f_sup * g(alpha + 1.0))
    };
    let mut n0 = 0;
    let remainder = loop {
        let r = if growth == 0.0 { 0.0 } else { sum_tail(n0, level_bound) };
        if r < ctl.tol {
            break r;
        }
        n0 += 1;
        if n0 >= ctl.max_terms {
            return Err(Error::NonConvergence {
                max_terms: ctl.max_terms,
                context: format!("word-sum series: certified remainder {r:e} >= tol {:e}", ctl.tol),
            });
        }
    };
    let table = QCache::global().table(a, b, n0)?;
    let levels: Vec<&DMatrix<f64>> = (0..=n0).map(|n| table.level_sum(n).expect("table covers n0")).collect();
    let px: Vec<DVector<f64>> = levels.iter().map(|p| *p * x).collect();
    let py: Vec<DVector<f64>> = levels.iter().map(|p| *p * y).collect();
    let homogeneous = Trajectory::from_fn(*grid, |t| {
        let mut u = DVector::zeros(x.len());
        for (n, (cx, cy, _)) in coefficients(n0, t).into_iter().enumerate() {
            u += &px[n] * cx + &py[n] * cy;
        }
        u
    });
    let u = if f.is_zero() {
        homogeneous
    } else {
        let dim = a.dim();
        let kernel = ProductKernel::new(alpha, grid, dim, |tau| {
            let mut g = DMatrix::zeros(dim, dim);
            for (n, (_, _, ck)) in coefficients(n0, tau).into_iter().enumerate() {
                g += levels[n] * ck;
            }
            Ok(g)
        })?;
        homogeneous.added(&kernel.convolve(&f.sample(grid))?)
    };
    Ok(ClosedFormSolution {
        u,
        truncation: Some(TruncationReport {
            terms: n0 + 1,
            remainder,
        }),
    })
}

/// Word-sum series solution for arbitrary constant `A`, `B`.
#[allow(clippy::too_many_arguments)]
pub fn solve_nonpermutable(
    alpha: FractionalOrder,
    a: &BoundedOperator,
    b: &BoundedOperator,
    f: &Forcing,
    x: &DVector<f64>,
    y: &DVector<f64>,
    grid: &TimeGrid,
    ctl: &SeriesControl,
) -> Result<ClosedFormSolution> {
    let al = alpha.value();
    word_sum_solution(al, &fractional_coefficients(al), a, b, f, x, y, grid, ctl)
}

/// `E_{a,1}((A+B) t^a) x + t E_{a,2}((A+B) t^a) y + T(.;A+B) * f` for
/// commuting `A`, `B`.
#[allow(clippy::too_many_arguments)]
pub fn solve_permutable(
    alpha: FractionalOrder,
    a: &BoundedOperator,
    b: &BoundedOperator,
    f: &Forcing,
    x: &DVector<f64>,
    y: &DVector<f64>,
    grid: &TimeGrid,
) -> Result<ClosedFormSolution> {
    require_permutable(a, b)?;
    a.check_dim(x.len(), "initial value x")?;
    a.check_dim(y.len(), "initial velocity y")?;
    a.check_dim(f.dim(), "forcing f vs generator A")?;
    let sum = a + b;
    let c = on_grid(grid, |t| cosine_family(alpha, &sum, t))?;
    let s = on_grid(grid, |t| sine_family(alpha, &sum, t))?;
    let mut u = c.apply(x).added(&s.apply(y));
    if !f.is_zero() {
        u = u.added(&ProductKernel::rl_family(alpha, &sum, grid)?.convolve(&f.sample(grid))?);
    }
    Ok(ClosedFormSolution { u, truncation: None })
}

/// `alpha = 2` word-sum series with factorial coefficients.
pub fn solve_classical_nonpermutable(
    a: &BoundedOperator,
    b: &BoundedOperator,
    f: &Forcing,
    x: &DVector<f64>,
    y: &DVector<f64>,
    grid: &TimeGrid,
    ctl: &SeriesControl,
) -> Result<ClosedFormSolution> {
    word_sum_solution(2.0, &classical_coefficients, a, b, f, x, y, grid, ctl)
}

/// `alpha = 2`, commuting `A`, `B`: `E_{2,1}((A+B)t^2) x + t E_{2,2}((A+B)t^2) y`
/// plus the forcing convolution. No matrix square roots are taken.
pub fn solve_classical_permutable(
    a: &BoundedOperator,
    b: &BoundedOperator,
    f: &Forcing,
    x: &DVector<f64>,
    y: &DVector<f64>,
    grid: &TimeGrid,
) -> Result<ClosedFormSolution> {
    let two = FractionalOrder::new(2.0)?;
    solve_permutable(two, a, b, f, x, y, grid)
}
