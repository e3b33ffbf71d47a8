//! Multivariate logistic (max-stable) sampling with unit Fréchet margins.
//!
//! The symmetric logistic distribution in dimension d with dependence
//! parameter δ ∈ (0, 1] has joint CDF
//!
//! ```text
//! F(x) = exp{ -( Σ_j x_j^(-1/δ) )^δ },   x_j > 0,
//! ```
//!
//! so each margin is unit Fréchet, F_j(x) = exp(-1/x). Small δ gives strong
//! tail dependence (mass concentrating on the diagonal), δ = 1 gives exact
//! independence. Samples follow the mixture representation
//! X_j = (S / E_j)^δ with S positive δ-stable and E_j i.i.d. unit
//! exponentials; S is drawn through the Kanter rejection-free formula.
//! Intermediate quantities are kept in log space so that extreme draws never
//! overflow before the final exponentiation.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::RngStream;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawLogisticParams", into = "RawLogisticParams")]
pub struct LogisticParams {
    delta: f64,
    dim: usize,
}

/// Unvalidated mirror used so deserialization runs the same checks as `new`.
#[derive(Serialize, Deserialize, Clone, Copy)]
struct RawLogisticParams {
    delta: f64,
    dim: usize,
}

impl TryFrom<RawLogisticParams> for LogisticParams {
    type Error = Error;

    fn try_from(raw: RawLogisticParams) -> Result<Self> {
        LogisticParams::new(raw.delta, raw.dim)
    }
}

impl From<LogisticParams> for RawLogisticParams {
    fn from(p: LogisticParams) -> Self {
        RawLogisticParams { delta: p.delta, dim: p.dim }
    }
}

impl LogisticParams {
    pub fn new(delta: f64, dim: usize) -> Result<Self> {
        if !(delta > 0.0 && delta <= 1.0) {
            return Err(Error::invalid(format!(
                "logistic dependence delta must lie in (0,1], got {delta}"
            )));
        }
        if dim == 0 {
            return Err(Error::invalid("logistic dimension must be at least 1"));
        }
        Ok(LogisticParams { delta, dim })
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    pub fn dim(&self) -> usize {
        self.dim
    }
}

/// Log of a positive δ-stable variable with Laplace transform
/// E[exp(-u S)] = exp(-u^δ). Kanter's representation: with U uniform on
/// (0, π) and W unit exponential,
///
/// ```text
/// S = ( A(U) / W )^((1-δ)/δ),
/// A(u) = sin((1-δ)u) · sin(δu)^(δ/(1-δ)) / sin(u)^(1/(1-δ)).
/// ```
fn ln_positive_stable(delta: f64, rng: &mut RngStream) -> f64 {
    if delta == 1.0 {
        return 0.0;
    }
    let u = rng.open_uniform() * std::f64::consts::PI;
    let w = rng.exponential();
    let ln_a = ((1.0 - delta) * u).sin().ln() + delta / (1.0 - delta) * (delta * u).sin().ln()
        - 1.0 / (1.0 - delta) * u.sin().ln();
    (1.0 - delta) / delta * (ln_a - w.ln())
}

/// Draws n positive δ-stable variables. For δ = 1 the distribution is the
/// point mass at 1 and every draw is exactly 1.0.
pub fn sample_positive_stable(delta: f64, n: usize, rng: &mut RngStream) -> Result<Vec<f64>> {
    if !(delta > 0.0 && delta <= 1.0) {
        return Err(Error::invalid(format!(
            "stable index delta must lie in (0,1], got {delta}"
        )));
    }
    Ok((0..n).map(|_| ln_positive_stable(delta, rng).exp()).collect())
}

/// Draws n rows from the multivariate logistic distribution. Row i satisfies
/// X_ij = (S_i / E_ij)^δ with one stable draw per row.
pub fn sample_logistic(params: &LogisticParams, n: usize, rng: &mut RngStream) -> Vec<Vec<f64>> {
    let delta = params.delta;
    (0..n)
        .map(|_| {
            let ln_s = ln_positive_stable(delta, rng);
            (0..params.dim)
                .map(|_| (delta * (ln_s - rng.exponential().ln())).exp())
                .collect()
        })
        .collect()
}

/// Joint CDF of the logistic distribution at x. Coordinates ≤ 0 give 0.
pub fn logistic_cdf(params: &LogisticParams, x: &[f64]) -> Result<f64> {
    if x.len() != params.dim {
        return Err(Error::dim(format!(
            "cdf point has {} coordinates, distribution has {}",
            x.len(),
            params.dim
        )));
    }
    if x.iter().any(|&v| v <= 0.0) {
        return Ok(0.0);
    }
    let delta = params.delta;
    let sum: f64 = x.iter().map(|&v| (-v.ln() / delta).exp()).sum();
    Ok((-sum.powf(delta)).exp())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn params(delta: f64, dim: usize) -> LogisticParams {
        LogisticParams::new(delta, dim).unwrap()
    }

    #[test]
    fn rejects_bad_delta() {
        assert!(LogisticParams::new(0.0, 2).is_err());
        assert!(LogisticParams::new(1.5, 2).is_err());
        assert!(LogisticParams::new(-0.3, 2).is_err());
        assert!(sample_positive_stable(0.0, 5, &mut RngStream::new(1)).is_err());
    }

    #[test]
    fn univariate_cdf_is_frechet_for_any_delta() {
        for delta in [0.1, 0.5, 1.0] {
            let f = logistic_cdf(&params(delta, 1), &[2.0]).unwrap();
            assert_relative_eq!(f, (-0.5f64).exp(), max_relative = 1e-12);
        }
    }

    #[test]
    fn independence_case_factorizes() {
        let f = logistic_cdf(&params(1.0, 2), &[1.0, 1.0]).unwrap();
        assert_relative_eq!(f, (-2.0f64).exp(), max_relative = 1e-12);
    }

    #[test]
    fn half_delta_bivariate_value() {
        let f = logistic_cdf(&params(0.5, 2), &[1.0, 1.0]).unwrap();
        assert_relative_eq!(f, (-(2.0f64.sqrt())).exp(), max_relative = 1e-12);
    }

    #[test]
    fn cdf_vanishes_on_nonpositive_coordinates() {
        let p = params(0.5, 2);
        assert_eq!(logistic_cdf(&p, &[0.0, 1.0]).unwrap(), 0.0);
        assert_eq!(logistic_cdf(&p, &[-1.0, 1.0]).unwrap(), 0.0);
    }

    #[test]
    fn cdf_dimension_mismatch_errors() {
        assert!(logistic_cdf(&params(0.5, 2), &[1.0]).is_err());
    }

    #[test]
    fn degenerate_stable_is_exactly_one() {
        let s = sample_positive_stable(1.0, 100, &mut RngStream::new(4)).unwrap();
        assert!(s.iter().all(|&v| v == 1.0));
    }

    #[test]
    fn stable_draws_are_positive_and_finite() {
        for delta in [0.1, 0.5, 0.9] {
            let s = sample_positive_stable(delta, 10_000, &mut RngStream::new(8)).unwrap();
            assert!(s.iter().all(|&v| v > 0.0 && v.is_finite()));
        }
    }

    #[test]
    fn sampler_is_deterministic_in_seed() {
        let p = params(0.7, 3);
        let a = sample_logistic(&p, 50, &mut RngStream::new(21));
        let b = sample_logistic(&p, 50, &mut RngStream::new(21));
        assert_eq!(a, b);
    }

    #[test]
    fn samples_have_expected_shape_and_positivity() {
        let p = params(0.3, 4);
        let rows = sample_logistic(&p, 200, &mut RngStream::new(2));
        assert_eq!(rows.len(), 200);
        for row in &rows {
            assert_eq!(row.len(), 4);
            assert!(row.iter().all(|&v| v > 0.0 && v.is_finite()));
        }
    }

    #[test]
    fn empty_sample_is_empty() {
        let p = params(0.5, 2);
        assert!(sample_logistic(&p, 0, &mut RngStream::new(1)).is_empty());
    }

    // Monte Carlo oracle: the Laplace transform of the stable law is known in
    // closed form; the sampler must reproduce it. This is the ground truth the
    // Kanter formula is validated against.
    #[test]
    fn laplace_transform_matches_closed_form() {
        let mut rng = RngStream::new(1729);
        for delta in [0.1, 0.5, 0.9] {
            let s = sample_positive_stable(delta, 100_000, &mut rng).unwrap();
            for u in [0.5, 1.0, 2.0] {
                let emp: f64 = s.iter().map(|&v| (-u * v).exp()).sum::<f64>() / s.len() as f64;
                let theo = (-u.powf(delta)).exp();
                assert!(
                    (emp - theo).abs() <= 0.005,
                    "delta={delta} u={u}: empirical {emp} vs {theo}"
                );
            }
        }
    }
}
