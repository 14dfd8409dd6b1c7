//! Statistical primitives used by certification.

mod binomial;
mod normal;
mod rng;

pub use binomial::{binom_lower_bound, binom_upper_tail};
pub use normal::{std_normal_cdf, std_normal_inv_cdf, std_normal_pdf};
pub use rng::{stream_id, RngStream};

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Failure probability and sample budgets for the two-pass certification.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ConfidenceSpec {
    pub alpha: f64,
    pub n0: u64,
    pub nc: u64,
}

impl Default for ConfidenceSpec {
    fn default() -> Self {
        Self {
            alpha: 0.001,
            n0: 100,
            nc: 100_000,
        }
    }
}

impl ConfidenceSpec {
    pub fn new(alpha: f64, n0: u64, nc: u64) -> Result<Self> {
        let spec = Self { alpha, n0, nc };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::domain(format!("alpha must lie in (0,1), got {}", self.alpha)));
        }
        if self.n0 == 0 || self.nc == 0 {
            return Err(Error::domain("n0 and nc must be positive"));
        }
        Ok(())
    }
}
