//! Modified Bessel function of the first kind, order zero.

use crate::error::{Error, Result};

const RELATIVE_TRUNCATION: f64 = 1e-14;
const MAX_TERMS: usize = 10_000;

/// `I₀(z) = Σ (z²/4)^k / (k!)²`, summed until a term drops below `1e-14`
/// of the running sum.
///
/// Every term is positive, so the series has no cancellation; it overflows
/// only once `I₀(z)` itself leaves the `f64` range (`z ≳ 713`).
pub fn bessel_i0(z: f64) -> Result<f64> {
    if !z.is_finite() {
        return Err(Error::Numeric(format!(
            "I0 argument must be finite, got {z}"
        )));
    }
    let quarter_sq = 0.25 * z * z;
    let mut term = 1.0;
    let mut sum = 1.0;
    for k in 1..MAX_TERMS {
        term *= quarter_sq / (k as f64 * k as f64);
        sum += term;
        if term <= RELATIVE_TRUNCATION * sum {
            return if sum.is_finite() {
                Ok(sum)
            } else {
                Err(Error::Numeric(format!("I0({z}) overflows")))
            };
        }
    }
    Err(Error::Numeric(format!(
        "I0 series did not converge at z = {z}"
    )))
}
