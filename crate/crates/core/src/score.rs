//! Energy sources: anything that supplies `φ`, `∇φ` and `∇²φ·v` at a known
//! noise scale `σ`, and therefore the Bayes estimator `x̂(y) = y − σ²∇φ(y)`.

use crate::densities::{beta_of, DataModel};
use crate::Point;

/// An energy `φ_σ` of the noisy variable `Y = X + N(0, σ²I)`.
///
/// Inputs are assumed to have dimension [`ScoreSource::dim`]; callers
/// validate dimensions once at construction time.
pub trait ScoreSource: Send + Sync {
    fn dim(&self) -> usize;

    /// Noise scale this energy describes.
    fn sigma(&self) -> f64;

    fn energy(&self, y: &[f64]) -> f64;

    fn energy_grad(&self, y: &[f64]) -> Point;

    /// `∇²φ(y)·v`.
    fn energy_hvp(&self, y: &[f64], v: &[f64]) -> Point;

    /// `x̂(y) = y − σ²∇φ(y)`.
    fn denoise(&self, y: &[f64]) -> Point {
        let s2 = self.sigma() * self.sigma();
        let g = self.energy_grad(y);
        y.iter().zip(&g).map(|(yi, gi)| yi - s2 * gi).collect()
    }

    /// `J_x̂(y)ᵀ v = (I − σ²∇²φ(y)) v`.
    fn denoise_vjp(&self, y: &[f64], v: &[f64]) -> Point {
        let s2 = self.sigma() * self.sigma();
        let hv = self.energy_hvp(y, v);
        v.iter().zip(&hv).map(|(vi, hi)| vi - s2 * hi).collect()
    }
}

impl<T: ScoreSource + ?Sized> ScoreSource for &T {
    fn dim(&self) -> usize {
        (**self).dim()
    }
    fn sigma(&self) -> f64 {
        (**self).sigma()
    }
    fn energy(&self, y: &[f64]) -> f64 {
        (**self).energy(y)
    }
    fn energy_grad(&self, y: &[f64]) -> Point {
        (**self).energy_grad(y)
    }
    fn energy_hvp(&self, y: &[f64], v: &[f64]) -> Point {
        (**self).energy_hvp(y, v)
    }
    fn denoise(&self, y: &[f64]) -> Point {
        (**self).denoise(y)
    }
    fn denoise_vjp(&self, y: &[f64], v: &[f64]) -> Point {
        (**self).denoise_vjp(y, v)
    }
}

/// Constant energy: `x̂` is the identity. Drives vanilla smoothing.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ZeroEnergy {
    pub dim: usize,
    pub sigma: f64,
}

impl ScoreSource for ZeroEnergy {
    fn dim(&self) -> usize {
        self.dim
    }
    fn sigma(&self) -> f64 {
        self.sigma
    }
    fn energy(&self, _y: &[f64]) -> f64 {
        0.0
    }
    fn energy_grad(&self, y: &[f64]) -> Point {
        vec![0.0; y.len()]
    }
    fn energy_hvp(&self, y: &[f64], _v: &[f64]) -> Point {
        vec![0.0; y.len()]
    }
    fn denoise(&self, y: &[f64]) -> Point {
        y.to_vec()
    }
    fn denoise_vjp(&self, _y: &[f64], v: &[f64]) -> Point {
        v.to_vec()
    }
}

/// Exact energy `φ = −log f_Y` of an analytic data model smoothed at `sigma`.
#[derive(Debug, Clone, PartialEq)]
pub struct SmoothedModel {
    pub model: DataModel,
    pub sigma: f64,
}

impl SmoothedModel {
    pub fn new(model: DataModel, sigma: f64) -> Self {
        Self { model, sigma }
    }
}

impl ScoreSource for SmoothedModel {
    fn dim(&self) -> usize {
        self.model.dim()
    }
    fn sigma(&self) -> f64 {
        self.sigma
    }
    fn energy(&self, y: &[f64]) -> f64 {
        -self.model.smoothed_log_density(y, self.sigma).expect("dimension checked by caller")
    }
    fn energy_grad(&self, y: &[f64]) -> Point {
        let s = self.model.smoothed_score(y, self.sigma).expect("dimension checked by caller");
        s.into_iter().map(|v| -v).collect()
    }
    fn energy_hvp(&self, y: &[f64], v: &[f64]) -> Point {
        let h = self
            .model
            .smoothed_hess_vec(y, v, self.sigma)
            .expect("dimension checked by caller");
        h.into_iter().map(|x| -x).collect()
    }
    fn denoise(&self, y: &[f64]) -> Point {
        self.model.bayes_estimate(y, self.sigma).expect("dimension checked by caller")
    }
    fn denoise_vjp(&self, y: &[f64], v: &[f64]) -> Point {
        match &self.model {
            DataModel::Gaussian(g) => {
                let beta = beta_of(self.sigma, g.sigma0).expect("valid model").value();
                v.iter().map(|vi| beta * vi).collect()
            }
            DataModel::Mixture(_) => {
                let s2 = self.sigma * self.sigma;
                let hv = self.energy_hvp(y, v);
                v.iter().zip(&hv).map(|(vi, hi)| vi - s2 * hi).collect()
            }
        }
    }
}
