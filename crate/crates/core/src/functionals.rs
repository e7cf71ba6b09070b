//! Population functionals and their large-sample variance formulas.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use crate::measures::{mean_of, quantile_in_place, variance_of, Sample};
use crate::special::{norm_cdf, norm_quantile};
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum FunctionalSpec {
    Mean,
    Variance,
    MeanAndVariance,
    Quantile(f64),
}

impl FunctionalSpec {
    pub fn quantile(q: f64) -> Result<Self> {
        if q > 0.0 && q < 1.0 {
            Ok(FunctionalSpec::Quantile(q))
        } else {
            Err(Error::QuantileLevel(q))
        }
    }

    /// Length of the value vector.
    pub fn dim(&self) -> usize {
        match self {
            FunctionalSpec::MeanAndVariance => 2,
            _ => 1,
        }
    }

    pub fn describe(&self) -> String {
        match self {
            FunctionalSpec::Mean => String::from("mean"),
            FunctionalSpec::Variance => String::from("variance"),
            FunctionalSpec::MeanAndVariance => String::from("mean_and_variance"),
            FunctionalSpec::Quantile(q) => format!("quantile({q})"),
        }
    }

    fn check(&self, len: usize) -> Result<()> {
        if len == 0 {
            return Err(Error::EmptySample);
        }
        match *self {
            FunctionalSpec::Variance | FunctionalSpec::MeanAndVariance if len < 2 => Err(Error::TooFewObservations(len)),
            FunctionalSpec::Quantile(q) if !(q > 0.0 && q < 1.0) => Err(Error::QuantileLevel(q)),
            _ => Ok(()),
        }
    }

    /// Evaluates on a raw buffer. Quantiles select in place, so the buffer
    /// may be reordered.
    pub fn evaluate_buffer(&self, values: &mut [f64]) -> Result<Vec<f64>> {
        self.check(values.len())?;
        Ok(match *self {
            FunctionalSpec::Mean => vec![mean_of(values)],
            FunctionalSpec::Variance => vec![variance_of(values)],
            FunctionalSpec::MeanAndVariance => vec![mean_of(values), variance_of(values)],
            FunctionalSpec::Quantile(q) => vec![quantile_in_place(values, q)?],
        })
    }
}

pub fn evaluate(f: &FunctionalSpec, s: &Sample) -> Result<Vec<f64>> {
    f.check(s.len())?;
    Ok(match *f {
        FunctionalSpec::Mean => vec![s.mean()],
        FunctionalSpec::Variance => vec![s.variance()],
        FunctionalSpec::MeanAndVariance => vec![s.mean(), s.variance()],
        FunctionalSpec::Quantile(q) => vec![s.quantile(q)?],
    })
}

/// `√(v/n)`: standard deviation of the limiting posterior of the mean.
pub fn mean_asymptotic_sd(engine_variance: f64, n: usize) -> f64 {
    libm::sqrt(engine_variance / n as f64)
}

/// Large-sample coverage `2Φ(z_{1−α/2}·√r) − 1` of a nominal `1−α` interval
/// whose width is off by the variance ratio `r`.
pub fn coverage_limit(variance_ratio: f64, alpha: f64) -> Result<f64> {
    if !(variance_ratio >= 0.0) {
        return Err(Error::invalid(format!("variance ratio must be nonnegative (got {variance_ratio})")));
    }
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::invalid(format!("alpha must lie in (0, 1) (got {alpha})")));
    }
    let z = norm_quantile(1.0 - alpha / 2.0);
    Ok(2.0 * norm_cdf(z * libm::sqrt(variance_ratio)) - 1.0)
}

/// Bahadur variance `q(1−q)/f²` of the q-quantile.
pub fn quantile_asymptotic_var(q: f64, density_at_quantile: f64) -> Result<f64> {
    if !(q > 0.0 && q < 1.0) {
        return Err(Error::QuantileLevel(q));
    }
    if !(density_at_quantile > 0.0) {
        return Err(Error::ZeroDensity);
    }
    Ok(q * (1.0 - q) / (density_at_quantile * density_at_quantile))
}
