//! Coefficient-of-variation and autocorrelation diagnostics.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// How per-subset c.o.v. values combine into the c.o.v. of the product.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub enum Correlation {
    /// Independent subset estimators: `sqrt(sum delta_j^2)`.
    Uncorrelated,
    /// Fully correlated estimators: `sum delta_j`.
    Correlated,
}

impl Correlation {
    /// The exponent `s` of the per-subset budget `TOL^2 / K^s`.
    pub fn s(self) -> i32 {
        match self {
            Correlation::Uncorrelated => 1,
            Correlation::Correlated => 2,
        }
    }
}

impl TryFrom<u8> for Correlation {
    type Error = String;

    fn try_from(s: u8) -> std::result::Result<Self, String> {
        match s {
            1 => Ok(Correlation::Uncorrelated),
            2 => Ok(Correlation::Correlated),
            _ => Err(format!("correlation mode s must be 1 or 2, got {s}")),
        }
    }
}

impl From<Correlation> for u8 {
    fn from(c: Correlation) -> u8 {
        c.s() as u8
    }
}

/// `sqrt((1 - p)(1 + phi) / (n p))`; infinite when `p = 0`.
pub fn estimate_cov(p_hat: f64, n: usize, phi: f64) -> f64 {
    if p_hat <= 0.0 || n == 0 {
        return f64::INFINITY;
    }
    ((1.0 - p_hat).max(0.0) * (1.0 + phi.max(0.0)) / (n as f64 * p_hat)).sqrt()
}

/// Autocorrelation factor `phi` and why it may be unreliable.
#[derive(Debug, Clone, PartialEq)]
pub struct Autocorrelation {
    pub phi: f64,
    pub warning: Option<String>,
}

/// `phi = 2 sum_{k>=1} (1 - k/n) rho(k)` with `rho` pooled over chains and
/// the sum stopped at the first non-positive `rho(k)`.
pub fn estimate_autocorrelation<S: AsRef<[bool]>>(chains: &[S]) -> Result<Autocorrelation> {
    let Some(first) = chains.first() else {
        return Err(Error::InvalidInput("need at least one chain".into()));
    };
    let n = first.as_ref().len();
    if chains.iter().any(|c| c.as_ref().len() != n) {
        return Err(Error::InvalidInput("chains must have equal length".into()));
    }
    if n < 2 {
        return Ok(Autocorrelation { phi: 0.0, warning: Some(format!("chains of length {n} carry no lag information")) });
    }
    let total = (n * chains.len()) as f64;
    let hits: usize = chains.iter().map(|c| c.as_ref().iter().filter(|&&b| b).count()).sum();
    let p = hits as f64 / total;
    let r0 = p * (1.0 - p);
    if r0 <= 0.0 {
        return Ok(Autocorrelation { phi: 0.0, warning: Some("constant indicators: zero variance".into()) });
    }
    let mut phi = 0.0;
    for k in 1..n {
        let mut joint = 0usize;
        for c in chains {
            let c = c.as_ref();
            joint += c[..n - k].iter().zip(&c[k..]).filter(|(a, b)| **a && **b).count();
        }
        let rk = joint as f64 / (chains.len() * (n - k)) as f64 - p * p;
        let rho = rk / r0;
        if rho <= 0.0 {
            break;
        }
        phi += 2.0 * (1.0 - k as f64 / n as f64) * rho;
    }
    Ok(Autocorrelation { phi, warning: None })
}

/// Combined c.o.v. of a product of subset estimators.
pub fn combine_cov(per_subset: &[f64], mode: Correlation) -> f64 {
    match mode {
        Correlation::Uncorrelated => per_subset.iter().map(|d| d * d).sum::<f64>().sqrt(),
        Correlation::Correlated => per_subset.iter().sum(),
    }
}
