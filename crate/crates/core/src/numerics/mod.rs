//! Small numerical kernels used by the analytical module and its oracles.

pub mod bessel;
pub mod quadrature;

pub use bessel::bessel_i0;
pub use quadrature::{integrate, integrate_semi_infinite, integrate_split, Integral, Tolerance};

/// Pairwise (cascade) summation; the result depends only on the order of
/// `values`, never on how work was scheduled to produce them.
pub fn pairwise_sum(values: &[f64]) -> f64 {
    const BLOCK: usize = 32;
    if values.len() <= BLOCK {
        return values.iter().sum();
    }
    let mid = values.len() / 2;
    pairwise_sum(&values[..mid]) + pairwise_sum(&values[mid..])
}
