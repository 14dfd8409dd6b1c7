//! Walk-jump sampling and the gradient-flow attractor map.
//!
//! The walk is unadjusted Langevin in the parameterization
//! `y ← y − δ²∇φ(y) + √2·δ·ε`. In the common `(h drift, √(2h) noise)` form
//! this is step size `h = δ²`.

use serde::{Deserialize, Serialize};

use crate::error::check_dim;
use crate::linalg::norm;
use crate::score::ScoreSource;
use crate::stats::RngStream;
use crate::{Error, Point, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct WalkJumpConfig {
    pub sigma_prime: f64,
    pub delta: f64,
    pub tau: usize,
    pub seed: u64,
}

impl Default for WalkJumpConfig {
    fn default() -> Self {
        Self {
            sigma_prime: 0.05,
            delta: 0.001,
            tau: 100,
            seed: 0,
        }
    }
}

impl WalkJumpConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.sigma_prime > 0.0) || !(self.delta > 0.0) || self.tau == 0 {
            return Err(Error::config("walk-jump needs sigma_prime > 0, delta > 0 and tau >= 1"));
        }
        Ok(())
    }
}

fn check_scale<E: ScoreSource + ?Sized>(energy: &E, sigma: f64, what: &str) -> Result<()> {
    if (energy.sigma() - sigma).abs() > 1e-12 * sigma.max(1.0) {
        return Err(Error::domain(format!(
            "{what} energy is for sigma {}, expected {sigma}",
            energy.sigma()
        )));
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct Walk {
    pub last: Point,
    /// `y₀, …, y_τ` when requested.
    pub trajectory: Option<Vec<Point>>,
}

/// `τ` Langevin steps from `y0` on the energy at scale `σ′`.
pub fn langevin_walk<E: ScoreSource + ?Sized>(
    energy: &E,
    y0: &[f64],
    cfg: &WalkJumpConfig,
    gen: &mut RngStream,
    keep_trajectory: bool,
) -> Result<Walk> {
    cfg.validate()?;
    check_scale(energy, cfg.sigma_prime, "fine")?;
    check_dim(energy.dim(), y0.len())?;
    let d2 = cfg.delta * cfg.delta;
    let noise_scale = std::f64::consts::SQRT_2 * cfg.delta;
    let mut y = y0.to_vec();
    let mut trajectory = keep_trajectory.then(|| {
        let mut t = Vec::with_capacity(cfg.tau + 1);
        t.push(y.clone());
        t
    });
    for step in 0..cfg.tau {
        let g = energy.energy_grad(&y);
        for (yi, gi) in y.iter_mut().zip(&g) {
            *yi += -d2 * gi + noise_scale * gen.normal();
        }
        if !y.iter().all(|v| v.is_finite()) {
            return Err(Error::NonFinite { step });
        }
        if let Some(t) = trajectory.as_mut() {
            t.push(y.clone());
        }
    }
    Ok(Walk { last: y, trajectory })
}

/// One Bayes-estimator application at the energy's scale.
pub fn jump<E: ScoreSource + ?Sized>(energy: &E, y: &[f64]) -> Result<Point> {
    check_dim(energy.dim(), y.len())?;
    Ok(energy.denoise(y))
}

/// `x̂_σ(y)` as the start, a walk at `σ′`, then a jump at `σ′`.
pub fn walk_jump<C: ScoreSource + ?Sized, F: ScoreSource + ?Sized>(
    coarse: &C,
    fine: &F,
    y: &[f64],
    cfg: &WalkJumpConfig,
    gen: &mut RngStream,
) -> Result<Point> {
    let y0 = jump(coarse, y)?;
    let walk = langevin_walk(fine, &y0, cfg, gen, false)?;
    jump(fine, &walk.last)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Flow {
    pub point: Point,
    pub converged: bool,
    pub steps: usize,
}

/// Explicit Euler on `y' = −∇φ(y)` until `‖∇φ‖ ≤ tol` or `max_steps`.
pub fn gradient_flow<E: ScoreSource + ?Sized>(
    energy: &E,
    y: &[f64],
    step: f64,
    max_steps: usize,
    tol: f64,
) -> Result<Flow> {
    check_dim(energy.dim(), y.len())?;
    if !(step > 0.0) || !(tol > 0.0) {
        return Err(Error::domain("gradient flow needs step > 0 and tol > 0"));
    }
    let mut y = y.to_vec();
    for t in 0..max_steps {
        let g = energy.energy_grad(&y);
        if norm(&g) <= tol {
            return Ok(Flow { point: y, converged: true, steps: t });
        }
        y.iter_mut().zip(&g).for_each(|(yi, gi)| *yi -= step * gi);
        if !y.iter().all(|v| v.is_finite()) {
            return Err(Error::NonFinite { step: t });
        }
    }
    let converged = norm(&energy.energy_grad(&y)) <= tol;
    Ok(Flow { point: y, converged, steps: max_steps })
}
