//! Analytic data models with exact smoothed densities, scores and Bayes
//! estimators.
//!
//! For `X` drawn from a model and `Y = X + N(0, σ²I)`, every isotropic
//! Gaussian component of scale `σ₀` becomes one of scale `s = √(σ² + σ₀²)`.
//! Mixture quantities are evaluated with log-sum-exp responsibilities so that
//! nothing overflows or underflows far from the means.

use serde::{Deserialize, Serialize};

use crate::error::check_dim;
use crate::linalg::{dot, log_sum_exp};
use crate::stats::RngStream;
use crate::{Error, Point, Result};

/// Gaussian shrinkage factor `β = 1/(1 + (σ/σ₀)²)`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct Beta(f64);

impl Beta {
    pub fn value(self) -> f64 {
        self.0
    }
}

pub fn beta_of(sigma: f64, sigma0: f64) -> Result<Beta> {
    if !(sigma0 > 0.0) {
        return Err(Error::domain(format!("sigma0 must be positive, got {sigma0}")));
    }
    if !(sigma >= 0.0) {
        return Err(Error::domain(format!("sigma must be non-negative, got {sigma}")));
    }
    let ratio = sigma / sigma0;
    Ok(Beta(1.0 / (1.0 + ratio * ratio)))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IsoGaussian {
    pub mean: Point,
    pub sigma0: f64,
}

impl IsoGaussian {
    pub fn new(mean: Point, sigma0: f64) -> Result<Self> {
        if !(sigma0 > 0.0) || mean.is_empty() {
            return Err(Error::domain("IsoGaussian needs sigma0 > 0 and d >= 1"));
        }
        Ok(Self { mean, sigma0 })
    }

    pub fn centered(dim: usize, sigma0: f64) -> Result<Self> {
        Self::new(vec![0.0; dim], sigma0)
    }
}

/// Equal-scale isotropic Gaussian mixture.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IsoMixture {
    pub means: Vec<Point>,
    pub weights: Vec<f64>,
    pub sigma0: f64,
}

impl IsoMixture {
    pub fn new(means: Vec<Point>, weights: Vec<f64>, sigma0: f64) -> Result<Self> {
        if means.is_empty() || means.len() != weights.len() {
            return Err(Error::domain("mixture needs one weight per mean"));
        }
        if !(sigma0 > 0.0) {
            return Err(Error::domain("mixture sigma0 must be positive"));
        }
        let d = means[0].len();
        if d == 0 || means.iter().any(|m| m.len() != d) {
            return Err(Error::domain("mixture means must share a positive dimension"));
        }
        if weights.iter().any(|&w| !(w > 0.0)) || (weights.iter().sum::<f64>() - 1.0).abs() > 1e-12 {
            return Err(Error::domain("mixture weights must be positive and sum to 1"));
        }
        Ok(Self { means, weights, sigma0 })
    }

    /// Two components at `±mu` with weight 1/2 each.
    pub fn symmetric(mu: Point, sigma0: f64) -> Result<Self> {
        let neg = mu.iter().map(|v| -v).collect();
        Self::new(vec![mu, neg], vec![0.5, 0.5], sigma0)
    }

    /// Equal weights over the given means.
    pub fn balanced(means: Vec<Point>, sigma0: f64) -> Result<Self> {
        let k = means.len().max(1);
        Self::new(means, vec![1.0 / k as f64; k], sigma0)
    }

    /// `Some(mu)` when this is the symmetric two-component form.
    pub fn half_separation(&self) -> Option<&[f64]> {
        if self.means.len() != 2 || self.weights[0] != self.weights[1] {
            return None;
        }
        let (a, b) = (&self.means[0], &self.means[1]);
        a.iter().zip(b).all(|(x, y)| *x == -*y).then_some(a.as_slice())
    }

    /// Component log-weights `ln w_k − ‖y − μ_k‖²/(2s²)` (unnormalized).
    fn log_terms(&self, y: &[f64], s2: f64) -> Vec<f64> {
        self.means
            .iter()
            .zip(&self.weights)
            .map(|(m, w)| {
                let d2: f64 = y.iter().zip(m).map(|(a, b)| (a - b) * (a - b)).sum();
                w.ln() - d2 / (2.0 * s2)
            })
            .collect()
    }

    /// Posterior responsibilities and their mean `Σ r_k μ_k`.
    fn responsibilities(&self, y: &[f64], s2: f64) -> (Vec<f64>, Vec<f64>) {
        let terms = self.log_terms(y, s2);
        let lse = log_sum_exp(&terms);
        let r: Vec<f64> = terms.iter().map(|t| (t - lse).exp()).collect();
        let mut mbar = vec![0.0; y.len()];
        for (rk, m) in r.iter().zip(&self.means) {
            for (acc, mi) in mbar.iter_mut().zip(m) {
                *acc += rk * mi;
            }
        }
        (r, mbar)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DataModel {
    Gaussian(IsoGaussian),
    Mixture(IsoMixture),
}

impl From<IsoGaussian> for DataModel {
    fn from(g: IsoGaussian) -> Self {
        DataModel::Gaussian(g)
    }
}

impl From<IsoMixture> for DataModel {
    fn from(m: IsoMixture) -> Self {
        DataModel::Mixture(m)
    }
}

impl DataModel {
    pub fn dim(&self) -> usize {
        match self {
            DataModel::Gaussian(g) => g.mean.len(),
            DataModel::Mixture(m) => m.means[0].len(),
        }
    }

    pub fn sigma0(&self) -> f64 {
        match self {
            DataModel::Gaussian(g) => g.sigma0,
            DataModel::Mixture(m) => m.sigma0,
        }
    }

    fn smoothed_var(&self, sigma: f64) -> f64 {
        sigma * sigma + self.sigma0() * self.sigma0()
    }

    /// `n` i.i.d. draws of `X`.
    pub fn sample(&self, n: usize, gen: &mut RngStream) -> Vec<Point> {
        (0..n).map(|_| self.sample_one(gen)).collect()
    }

    pub fn sample_one(&self, gen: &mut RngStream) -> Point {
        match self {
            DataModel::Gaussian(g) => g.mean.iter().map(|m| m + g.sigma0 * gen.normal()).collect(),
            DataModel::Mixture(mix) => {
                let k = pick_component(&mix.weights, gen.uniform());
                mix.means[k].iter().map(|m| m + mix.sigma0 * gen.normal()).collect()
            }
        }
    }

    /// `log f_Y(y)` including the normalizing constant.
    pub fn smoothed_log_density(&self, y: &[f64], sigma: f64) -> Result<f64> {
        check_dim(self.dim(), y.len())?;
        let s2 = self.smoothed_var(sigma);
        let norm = -0.5 * y.len() as f64 * (std::f64::consts::TAU * s2).ln();
        Ok(norm
            + match self {
                DataModel::Gaussian(g) => {
                    let d2: f64 = y.iter().zip(&g.mean).map(|(a, b)| (a - b) * (a - b)).sum();
                    -d2 / (2.0 * s2)
                }
                DataModel::Mixture(m) => log_sum_exp(&m.log_terms(y, s2)),
            })
    }

    /// `∇ log f_Y(y)` for `Y = X + N(0, σ²I)`.
    pub fn smoothed_score(&self, y: &[f64], sigma: f64) -> Result<Point> {
        check_dim(self.dim(), y.len())?;
        let s2 = self.smoothed_var(sigma);
        let center = match self {
            DataModel::Gaussian(g) => g.mean.clone(),
            DataModel::Mixture(m) => m.responsibilities(y, s2).1,
        };
        Ok(center.iter().zip(y).map(|(c, yi)| (c - yi) / s2).collect())
    }

    /// `∇² log f_Y(y) · v`.
    pub fn smoothed_hess_vec(&self, y: &[f64], v: &[f64], sigma: f64) -> Result<Point> {
        check_dim(self.dim(), y.len())?;
        check_dim(self.dim(), v.len())?;
        let s2 = self.smoothed_var(sigma);
        let mut out: Point = v.iter().map(|vi| -vi / s2).collect();
        if let DataModel::Mixture(m) = self {
            // Posterior covariance of the component mean, scaled by 1/s⁴.
            let (r, mbar) = m.responsibilities(y, s2);
            for (rk, mk) in r.iter().zip(&m.means) {
                let dev: Vec<f64> = mk.iter().zip(&mbar).map(|(a, b)| a - b).collect();
                let c = rk * dot(&dev, v) / (s2 * s2);
                for (o, di) in out.iter_mut().zip(&dev) {
                    *o += c * di;
                }
            }
        }
        Ok(out)
    }

    /// Bayes estimate `E[X | Y = y] = y + σ²∇ log f_Y(y)`.
    ///
    /// Uses `β(y − m) + m` for the Gaussian and `βy + (1−β)·tanh(⟨βy, μ⟩/σ₀²)·μ`
    /// for the symmetric two-component mixture; other mixtures go through
    /// the score.
    pub fn bayes_estimate(&self, y: &[f64], sigma: f64) -> Result<Point> {
        check_dim(self.dim(), y.len())?;
        let beta = beta_of(sigma, self.sigma0())?.value();
        match self {
            DataModel::Gaussian(g) => Ok(y
                .iter()
                .zip(&g.mean)
                .map(|(yi, mi)| mi + beta * (yi - mi))
                .collect()),
            DataModel::Mixture(m) => {
                if let Some(mu) = m.half_separation() {
                    let t = (beta * dot(y, mu) / (m.sigma0 * m.sigma0)).tanh();
                    Ok(y.iter()
                        .zip(mu)
                        .map(|(yi, mi)| beta * yi + (1.0 - beta) * t * mi)
                        .collect())
                } else {
                    let score = self.smoothed_score(y, sigma)?;
                    Ok(y.iter().zip(&score).map(|(yi, si)| yi + sigma * sigma * si).collect())
                }
            }
        }
    }
}

fn pick_component(weights: &[f64], u: f64) -> usize {
    let mut acc = 0.0;
    for (k, w) in weights.iter().enumerate() {
        acc += w;
        if u < acc {
            return k;
        }
    }
    weights.len() - 1
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fd_score(model: &DataModel, y: &[f64], sigma: f64, h: f64) -> Point {
        (0..y.len())
            .map(|i| {
                let mut p = y.to_vec();
                let mut m = y.to_vec();
                p[i] += h;
                m[i] -= h;
                (model.smoothed_log_density(&p, sigma).unwrap()
                    - model.smoothed_log_density(&m, sigma).unwrap())
                    / (2.0 * h)
            })
            .collect()
    }

    #[test]
    fn beta_examples() {
        assert_eq!(beta_of(0.0, 1.0).unwrap().value(), 1.0);
        assert_eq!(beta_of(1.0, 1.0).unwrap().value(), 0.5);
        let tiny = beta_of(1e6, 1.0).unwrap().value();
        assert!((tiny - 1e-12).abs() < 1e-20, "{tiny}");
        assert!(beta_of(1.0, 0.0).is_err());
    }

    #[test]
    fn gaussian_score_and_estimate() {
        let g: DataModel = IsoGaussian::centered(2, 1.0).unwrap().into();
        assert_eq!(g.smoothed_score(&[2.0, 0.0], 1.0).unwrap(), vec![-1.0, 0.0]);
        assert_eq!(g.bayes_estimate(&[2.0, -2.0], 1.0).unwrap(), vec![1.0, -1.0]);
    }

    #[test]
    fn mixture_symmetry_point() {
        let m: DataModel = IsoMixture::symmetric(vec![2.0, 1.0, -1.0], 0.7).unwrap().into();
        let zero = vec![0.0; 3];
        assert!(m.smoothed_score(&zero, 0.4).unwrap().iter().all(|v| v.abs() < 1e-15));
        assert!(m.bayes_estimate(&zero, 0.4).unwrap().iter().all(|v| *v == 0.0));
    }

    #[test]
    fn mixture_score_matches_finite_differences() {
        let m: DataModel = IsoMixture::symmetric(vec![2.0, 0.0], 1.0).unwrap().into();
        let s = m.smoothed_score(&[1.0, 1.0], 0.5).unwrap();
        let fd = fd_score(&m, &[1.0, 1.0], 0.5, 1e-5);
        for (a, b) in s.iter().zip(&fd) {
            assert!((a - b).abs() < 1e-5, "{a} vs {b}");
        }
    }

    #[test]
    fn mixture_closed_form_example() {
        let m: DataModel = IsoMixture::symmetric(vec![2.0, 0.0], 1.0).unwrap().into();
        let x = m.bayes_estimate(&[4.0, 0.0], 1.0).unwrap();
        let expect = 2.0 + 4.0_f64.tanh();
        assert!((x[0] - expect).abs() < 1e-14 && x[1] == 0.0);
        assert!((x[0] - 2.99932).abs() < 1e-5);
        let via_score = m.smoothed_score(&[4.0, 0.0], 1.0).unwrap();
        assert!((4.0 + via_score[0] - x[0]).abs() < 1e-12);
    }

    #[test]
    fn general_mixture_matches_closed_form_route() {
        // Same symmetric mixture, components listed so the closed form is not detected.
        let sym = IsoMixture::symmetric(vec![1.5, -0.5], 0.8).unwrap();
        let general = IsoMixture::new(
            vec![vec![1.5, -0.5], vec![-1.5, 0.5000000000000001]],
            vec![0.5, 0.5],
            0.8,
        )
        .unwrap();
        assert!(general.half_separation().is_none());
        let (a, b): (DataModel, DataModel) = (sym.into(), general.into());
        for y in [[0.3, 0.2], [3.0, -4.0], [-1.0, 0.1]] {
            let ea = a.bayes_estimate(&y, 0.6).unwrap();
            let eb = b.bayes_estimate(&y, 0.6).unwrap();
            for (u, v) in ea.iter().zip(&eb) {
                assert!((u - v).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn far_field_score_is_finite() {
        let m: DataModel = IsoMixture::symmetric(vec![3.0, 0.0], 0.1).unwrap().into();
        let s = m.smoothed_score(&[1e4, -1e4], 0.05).unwrap();
        assert!(s.iter().all(|v| v.is_finite()));
        let e = m.bayes_estimate(&[1e4, -1e4], 0.05).unwrap();
        assert!(e.iter().all(|v| v.is_finite()));
    }

    #[test]
    fn hessian_matches_score_differences() {
        let m: DataModel = IsoMixture::balanced(
            vec![vec![1.0, 0.0], vec![-1.0, 0.5], vec![0.0, -2.0]],
            0.6,
        )
        .unwrap()
        .into();
        let y = [0.2, -0.4];
        let v = [0.7, -0.3];
        let hv = m.smoothed_hess_vec(&y, &v, 0.5).unwrap();
        let h = 1e-5;
        let yp: Vec<f64> = y.iter().zip(&v).map(|(a, b)| a + h * b).collect();
        let ym: Vec<f64> = y.iter().zip(&v).map(|(a, b)| a - h * b).collect();
        let sp = m.smoothed_score(&yp, 0.5).unwrap();
        let sm = m.smoothed_score(&ym, 0.5).unwrap();
        for i in 0..2 {
            let fd = (sp[i] - sm[i]) / (2.0 * h);
            assert!((fd - hv[i]).abs() < 1e-7, "{fd} vs {}", hv[i]);
        }
    }

    #[test]
    fn sampling_is_reproducible_and_centred() {
        let g: DataModel = IsoGaussian::centered(2, 1.0).unwrap().into();
        let mut a = RngStream::new(5, 0);
        let mut b = RngStream::new(5, 0);
        assert_eq!(g.sample(1, &mut a), g.sample(1, &mut b));

        let n = 100_000;
        let pts = g.sample(n, &mut RngStream::new(6, 0));
        for c in 0..2 {
            let mean = pts.iter().map(|p| p[c]).sum::<f64>() / n as f64;
            assert!(mean.abs() < 4.0 / (n as f64).sqrt(), "{mean}");
        }

        let m: DataModel = IsoMixture::symmetric(vec![3.0, 0.0], 1.0).unwrap().into();
        let pts = m.sample(n, &mut RngStream::new(7, 0));
        let frac = pts.iter().filter(|p| p[0] > 0.0).count() as f64 / n as f64;
        assert!((frac - 0.5).abs() < 0.01, "{frac}");
    }

    #[test]
    fn rejects_bad_models() {
        assert!(IsoMixture::new(vec![vec![1.0]], vec![0.7], 1.0).is_err());
        assert!(IsoMixture::new(vec![vec![1.0], vec![1.0, 2.0]], vec![0.5, 0.5], 1.0).is_err());
        assert!(IsoGaussian::centered(2, -1.0).is_err());
        let g: DataModel = IsoGaussian::centered(2, 1.0).unwrap().into();
        assert!(matches!(g.bayes_estimate(&[1.0], 1.0), Err(Error::Dimension { .. })));
    }
}
