//! Perturbation-series solution of `D^a u = (A + B(t)) u + f(t)`.

pub mod bounds;
pub mod quadrature;
pub mod series;

pub use bounds::{growth_bounds, verify_growth_bounds, BoundReport, BoundRow};
pub use quadrature::{fractional_integral, kernel_convolution, singular_convolution, ProductKernel, ProductRule};
pub use series::{
    particular_solution, perturbed_cosine, perturbed_sine, series_term_cosine, series_term_sine, solve_ivp, tail_bound,
    tail_remainder, variation_of_constants, IvpSolution, SeriesControl, SeriesSum, TailVariant, TruncationReport,
};
