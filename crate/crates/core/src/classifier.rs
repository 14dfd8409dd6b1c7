//! Base classifiers and the empirical-Bayes classifiers built on them.
//!
//! The hard classifier is `π(x) = h(x̂(x))`. The soft classifier averages the
//! base probabilities at `x̂(x + εⱼ)` over `m` noise draws. All gradients that
//! involve `Π` are taken with the noise held fixed.

use crate::error::check_dim;
use crate::linalg::{argmax, dot, log_softmax, log_sum_exp, norm_sq, softmax};
use crate::mlp::Mlp;
use crate::score::ScoreSource;
use crate::stats::RngStream;
use crate::{Error, Point, Result};

/// Probabilities are floored here before taking logs.
pub const PROB_FLOOR: f64 = 1e-12;

/// Anything that maps a point to a class index.
pub trait HardClassifier: Sync {
    fn num_classes(&self) -> usize;
    fn dim(&self) -> usize;
    /// Class at `x`; `x` must have dimension [`HardClassifier::dim`].
    fn predict_class(&self, x: &[f64]) -> usize;
}

impl<T: HardClassifier + ?Sized> HardClassifier for &T {
    fn num_classes(&self) -> usize {
        (**self).num_classes()
    }
    fn dim(&self) -> usize {
        (**self).dim()
    }
    fn predict_class(&self, x: &[f64]) -> usize {
        (**self).predict_class(x)
    }
}

/// Dimension-checked [`HardClassifier::predict_class`].
pub fn classify_hard<C: HardClassifier + ?Sized>(c: &C, x: &[f64]) -> Result<usize> {
    check_dim(c.dim(), x.len())?;
    Ok(c.predict_class(x))
}

/// `h(x) = sign(⟨w, x⟩ + b)` as a two-class classifier: index 1 for a positive
/// margin, index 0 otherwise (the boundary goes to the lower index).
#[derive(Debug, Clone, PartialEq)]
pub struct LinearClassifier {
    pub w: Point,
    pub b: f64,
}

impl LinearClassifier {
    pub fn new(w: Point, b: f64) -> Result<Self> {
        if w.is_empty() || norm_sq(&w) == 0.0 || !w.iter().all(|v| v.is_finite()) || !b.is_finite() {
            return Err(Error::domain("linear classifier needs a finite nonzero w"));
        }
        Ok(Self { w, b })
    }

    /// `⟨w, x⟩ + b`.
    pub fn score(&self, x: &[f64]) -> f64 {
        dot(&self.w, x) + self.b
    }
}

impl HardClassifier for LinearClassifier {
    fn num_classes(&self) -> usize {
        2
    }
    fn dim(&self) -> usize {
        self.w.len()
    }
    fn predict_class(&self, x: &[f64]) -> usize {
        usize::from(self.score(x) > 0.0)
    }
}

/// Softmax over the logits of an [`Mlp`].
#[derive(Debug, Clone, PartialEq)]
pub struct SoftClassifier {
    mlp: Mlp,
}

impl SoftClassifier {
    pub fn new(dim: usize, hidden: &[usize], classes: usize, gen: &mut RngStream) -> Result<Self> {
        if classes < 2 {
            return Err(Error::domain("a classifier needs at least two classes"));
        }
        let mut widths = vec![dim];
        widths.extend_from_slice(hidden);
        widths.push(classes);
        Ok(Self { mlp: Mlp::new(&widths, gen)? })
    }

    pub fn from_mlp(mlp: Mlp) -> Result<Self> {
        if mlp.output_dim() < 2 {
            return Err(Error::domain("a classifier needs at least two classes"));
        }
        Ok(Self { mlp })
    }

    pub fn mlp(&self) -> &Mlp {
        &self.mlp
    }

    pub fn mlp_mut(&mut self) -> &mut Mlp {
        &mut self.mlp
    }

    pub fn logits(&self, x: &[f64]) -> Vec<f64> {
        self.mlp.forward(x)
    }

    pub fn probs(&self, x: &[f64]) -> Vec<f64> {
        softmax(&self.mlp.forward(x))
    }
}

impl HardClassifier for SoftClassifier {
    fn num_classes(&self) -> usize {
        self.mlp.output_dim()
    }
    fn dim(&self) -> usize {
        self.mlp.input_dim()
    }
    fn predict_class(&self, x: &[f64]) -> usize {
        argmax(&self.mlp.forward(x))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum BaseClassifier {
    Linear(LinearClassifier),
    Soft(SoftClassifier),
}

impl From<LinearClassifier> for BaseClassifier {
    fn from(c: LinearClassifier) -> Self {
        Self::Linear(c)
    }
}

impl From<SoftClassifier> for BaseClassifier {
    fn from(c: SoftClassifier) -> Self {
        Self::Soft(c)
    }
}

impl HardClassifier for BaseClassifier {
    fn num_classes(&self) -> usize {
        match self {
            Self::Linear(c) => c.num_classes(),
            Self::Soft(c) => c.num_classes(),
        }
    }
    fn dim(&self) -> usize {
        match self {
            Self::Linear(c) => c.dim(),
            Self::Soft(c) => c.dim(),
        }
    }
    fn predict_class(&self, x: &[f64]) -> usize {
        match self {
            Self::Linear(c) => c.predict_class(x),
            Self::Soft(c) => c.predict_class(x),
        }
    }
}

/// Base classifier composed with a Bayes estimator at the estimator's `σ`.
#[derive(Debug, Clone)]
pub struct EbClassifier<E> {
    pub base: BaseClassifier,
    pub estimator: E,
    /// Monte-Carlo samples for `Π`.
    pub m: usize,
}

impl<E: ScoreSource> EbClassifier<E> {
    /// `sigma` must equal the scale the estimator was built for.
    pub fn new(base: impl Into<BaseClassifier>, estimator: E, sigma: f64, m: usize) -> Result<Self> {
        let base = base.into();
        if (sigma - estimator.sigma()).abs() > 1e-12 * sigma.abs().max(1.0) {
            return Err(Error::domain(format!(
                "classifier sigma {sigma} does not match estimator sigma {}",
                estimator.sigma()
            )));
        }
        check_dim(base.dim(), estimator.dim())?;
        if m == 0 {
            return Err(Error::domain("m must be at least 1"));
        }
        Ok(Self { base, estimator, m })
    }

    pub fn sigma(&self) -> f64 {
        self.estimator.sigma()
    }

    fn soft(&self) -> Result<&SoftClassifier> {
        match &self.base {
            BaseClassifier::Soft(s) => Ok(s),
            BaseClassifier::Linear(_) => Err(Error::domain("soft operations need a soft base classifier")),
        }
    }

    /// `m` fresh noise vectors at scale `σ`.
    pub fn draw_noise(&self, gen: &mut RngStream) -> Vec<Point> {
        (0..self.m).map(|_| gen.normal_vec(self.dim(), self.sigma())).collect()
    }

    /// Monte-Carlo `Π(x)` with fresh noise from `gen`.
    pub fn soft_pi(&self, x: &[f64], gen: &mut RngStream) -> Result<Vec<f64>> {
        check_dim(self.dim(), x.len())?;
        let noise = self.draw_noise(gen);
        self.soft_pi_fixed(x, &noise)
    }

    /// `Π(x)` for an explicit noise list.
    pub fn soft_pi_fixed(&self, x: &[f64], noise: &[Point]) -> Result<Vec<f64>> {
        let h = self.soft()?;
        check_dim(self.dim(), x.len())?;
        if noise.is_empty() {
            return Err(Error::domain("noise list is empty"));
        }
        let mut acc = vec![0.0; h.num_classes()];
        for eps in noise {
            check_dim(self.dim(), eps.len())?;
            let y: Point = x.iter().zip(eps).map(|(a, e)| a + e).collect();
            let p = h.probs(&self.estimator.denoise(&y));
            acc.iter_mut().zip(&p).for_each(|(a, b)| *a += b);
        }
        let total: f64 = acc.iter().sum();
        acc.iter_mut().for_each(|a| *a /= total);
        Ok(acc)
    }

    /// `log Π_k(x)` with fixed noise, floored at `log 1e-12`.
    pub fn log_pi(&self, x: &[f64], k: usize, noise: &[Point]) -> Result<f64> {
        Ok(self.fixed_noise_pass(x, k, noise, false, None)?.0)
    }

    /// `∇ₓ log Π_k(x)` with fixed noise.
    pub fn grad_log_pi(&self, x: &[f64], k: usize, noise: &[Point]) -> Result<Point> {
        Ok(self.fixed_noise_pass(x, k, noise, true, None)?.1)
    }

    /// `log Π_k(x)` and `∇ₓ log Π_k(x)` from one pass.
    pub fn log_pi_with_grad(&self, x: &[f64], k: usize, noise: &[Point]) -> Result<(f64, Point)> {
        self.fixed_noise_pass(x, k, noise, true, None)
    }

    /// Accumulates `scale · ∇_θ(−log Π_k(x, θ))` into `grad` and returns `−log Π_k`.
    /// The estimator is untouched.
    pub fn neg_log_pi_param_grad(&self, x: &[f64], k: usize, noise: &[Point], grad: &mut [f64], scale: f64) -> Result<f64> {
        Ok(-self.fixed_noise_pass(x, k, noise, false, Some((grad, scale)))?.0)
    }

    /// Shared evaluation. Writing `ℓⱼ = log H_k(x̂(x + εⱼ))`, the exact value is
    /// `logsumexpⱼ ℓⱼ − log m` and every gradient is `Σⱼ softmax(ℓ)ⱼ ∇ℓⱼ`, which
    /// stays finite even when `Π_k` underflows.
    fn fixed_noise_pass(
        &self,
        x: &[f64],
        k: usize,
        noise: &[Point],
        want_input: bool,
        theta: Option<(&mut [f64], f64)>,
    ) -> Result<(f64, Point)> {
        let h = self.soft()?;
        let d = self.dim();
        check_dim(d, x.len())?;
        if k >= h.num_classes() {
            return Err(Error::domain(format!("class {k} out of range")));
        }
        if noise.is_empty() {
            return Err(Error::domain("noise list is empty"));
        }
        let mut ys = Vec::with_capacity(noise.len());
        let mut traces = Vec::with_capacity(noise.len());
        let mut ell = Vec::with_capacity(noise.len());
        let mut probs = Vec::with_capacity(noise.len());
        for eps in noise {
            check_dim(d, eps.len())?;
            let y: Point = x.iter().zip(eps).map(|(a, e)| a + e).collect();
            let trace = h.mlp.forward_trace(&self.estimator.denoise(&y));
            let lsm = log_softmax(trace.output());
            ell.push(lsm[k]);
            probs.push(lsm.iter().map(|v| v.exp()).collect::<Vec<_>>());
            ys.push(y);
            traces.push(trace);
        }
        let lse = log_sum_exp(&ell);
        let value = (lse - (noise.len() as f64).ln()).max(PROB_FLOOR.ln());
        if !want_input && theta.is_none() {
            return Ok((value, Vec::new()));
        }
        let weights: Vec<f64> = ell.iter().map(|l| (l - lse).exp()).collect();
        let mut gx = vec![0.0; if want_input { d } else { 0 }];
        let (mut pg, scale) = match theta {
            Some((g, s)) => (Some(g), s),
            None => (None, 0.0),
        };
        for j in 0..noise.len() {
            // Cotangent of ℓⱼ on the logits: wⱼ (e_k − p).
            let c: Vec<f64> = probs[j]
                .iter()
                .enumerate()
                .map(|(i, p)| weights[j] * (if i == k { 1.0 } else { 0.0 } - p))
                .collect();
            let gu = h.mlp.backward(&traces[j], &c, pg.as_deref_mut(), -scale);
            if want_input {
                let g = self.estimator.denoise_vjp(&ys[j], &gu);
                gx.iter_mut().zip(&g).for_each(|(a, b)| *a += b);
            }
        }
        Ok((value, gx))
    }
}

impl<E: ScoreSource> HardClassifier for EbClassifier<E> {
    fn num_classes(&self) -> usize {
        self.base.num_classes()
    }
    fn dim(&self) -> usize {
        self.base.dim()
    }
    fn predict_class(&self, x: &[f64]) -> usize {
        self.base.predict_class(&self.estimator.denoise(x))
    }
}
