//! Two-pass randomized-smoothing prediction and certification, and the
//! analytic radii of the linear cases.
//!
//! Noise for point `i` comes in blocks of [`BLOCK`] samples; block `b` of pass
//! `p` is drawn from the stream keyed by `(seed, i, p, b)`. Tallies are
//! integer sums, so results do not depend on how blocks are scheduled.

use serde::{Deserialize, Serialize};

use crate::classifier::{HardClassifier, LinearClassifier};
use crate::densities::beta_of;
use crate::error::check_dim;
use crate::linalg::{argmax, norm};
use crate::par::{map_range, Execution};
use crate::stats::{binom_lower_bound, binom_upper_tail, std_normal_inv_cdf, ConfidenceSpec, RngStream};
use crate::{Error, Result};

pub const BLOCK: u64 = 4096;

const PASS_SELECT: u64 = 0;
const PASS_ESTIMATE: u64 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CertResult {
    /// `None` means abstain.
    pub predicted: Option<usize>,
    pub pa_lower: f64,
    pub radius: f64,
    /// Estimation-pass tallies per class.
    pub counts: Vec<u64>,
    /// Selection-pass tallies per class.
    pub selection_counts: Vec<u64>,
    pub spec: ConfidenceSpec,
}

impl CertResult {
    pub fn abstained(&self) -> bool {
        self.predicted.is_none()
    }

    /// Whether the point counts as certified-correct at `radius`.
    pub fn correct_at(&self, label: usize, radius: f64) -> bool {
        self.predicted == Some(label) && self.radius >= radius
    }
}

/// Where the noise of one point comes from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NoiseKey {
    pub seed: u64,
    pub point: u64,
}

fn check_args<C: HardClassifier + ?Sized>(c: &C, x: &[f64], sigma: f64, spec: &ConfidenceSpec) -> Result<()> {
    spec.validate()?;
    check_dim(c.dim(), x.len())?;
    if !(sigma >= 0.0 && sigma.is_finite()) {
        return Err(Error::domain(format!("sigma must be finite and non-negative, got {sigma}")));
    }
    Ok(())
}

/// Per-class tallies of `c(x + σε)` over `n` samples of one pass.
pub fn sample_counts<C: HardClassifier + ?Sized>(
    c: &C,
    x: &[f64],
    sigma: f64,
    n: u64,
    key: NoiseKey,
    pass: u64,
    exec: Execution,
) -> Vec<u64> {
    let k = c.num_classes();
    let blocks = n.div_ceil(BLOCK);
    let parts = map_range(exec, blocks as usize, |b| {
        let mut gen = RngStream::keyed(key.seed, &[key.point, pass, b as u64]);
        let len = BLOCK.min(n - b as u64 * BLOCK);
        let mut counts = vec![0u64; k];
        let mut y = vec![0.0; x.len()];
        for _ in 0..len {
            gen.fill_normal(&mut y, sigma);
            y.iter_mut().zip(x).for_each(|(yi, xi)| *yi += xi);
            counts[c.predict_class(&y)] += 1;
        }
        counts
    });
    let mut total = vec![0u64; k];
    for p in parts {
        total.iter_mut().zip(&p).for_each(|(t, v)| *t += v);
    }
    total
}

fn top_class(counts: &[u64]) -> usize {
    let as_f: Vec<f64> = counts.iter().map(|&c| c as f64).collect();
    argmax(&as_f)
}

/// Decision of the selection test on existing tallies: the top class if
/// `P[Bin(n, 1/2) ≥ n_top] ≤ α`.
pub fn predict_from_counts(counts: &[u64], alpha: f64) -> Option<usize> {
    let n: u64 = counts.iter().sum();
    if n == 0 {
        return None;
    }
    let top = top_class(counts);
    (binom_upper_tail(counts[top], n, 0.5) <= alpha).then_some(top)
}

/// `σ·Γ⁻¹(p̲_A)`, or 0 when `p̲_A ≤ 1/2`.
pub fn radius_from_lower(pa_lower: f64, sigma: f64) -> f64 {
    if pa_lower > 0.5 {
        sigma * std_normal_inv_cdf(pa_lower).expect("pa_lower lies in (1/2, 1]")
    } else {
        0.0
    }
}

pub fn predict_keyed<C: HardClassifier + ?Sized>(
    c: &C,
    x: &[f64],
    sigma: f64,
    spec: &ConfidenceSpec,
    key: NoiseKey,
    exec: Execution,
) -> Result<Option<usize>> {
    check_args(c, x, sigma, spec)?;
    let counts = sample_counts(c, x, sigma, spec.n0, key, PASS_SELECT, exec);
    Ok(predict_from_counts(&counts, spec.alpha))
}

/// Smoothed prediction with `spec.n0` samples; `None` is abstain.
pub fn predict<C: HardClassifier + ?Sized>(
    c: &C,
    x: &[f64],
    sigma: f64,
    spec: &ConfidenceSpec,
    gen: &mut RngStream,
) -> Result<Option<usize>> {
    let key = NoiseKey { seed: gen.next_u64(), point: 0 };
    predict_keyed(c, x, sigma, spec, key, Execution::Sequential)
}

pub fn certify_keyed<C: HardClassifier + ?Sized>(
    c: &C,
    x: &[f64],
    sigma: f64,
    spec: &ConfidenceSpec,
    key: NoiseKey,
    exec: Execution,
) -> Result<CertResult> {
    check_args(c, x, sigma, spec)?;
    let selection_counts = sample_counts(c, x, sigma, spec.n0, key, PASS_SELECT, exec);
    let candidate = top_class(&selection_counts);
    let counts = sample_counts(c, x, sigma, spec.nc, key, PASS_ESTIMATE, exec);
    let pa_lower = binom_lower_bound(counts[candidate], spec.nc, spec.alpha)?;
    let radius = radius_from_lower(pa_lower, sigma);
    Ok(CertResult {
        predicted: (pa_lower > 0.5).then_some(candidate),
        pa_lower,
        radius,
        counts,
        selection_counts,
        spec: *spec,
    })
}

/// Selection with `n0` samples, then a Clopper-Pearson bound on `p_A` from
/// `nc` fresh samples.
pub fn certify<C: HardClassifier + ?Sized>(
    c: &C,
    x: &[f64],
    sigma: f64,
    spec: &ConfidenceSpec,
    gen: &mut RngStream,
) -> Result<CertResult> {
    let key = NoiseKey { seed: gen.next_u64(), point: 0 };
    certify_keyed(c, x, sigma, spec, key, Execution::Sequential)
}

/// Certify every point, point `i` using key `(seed, i)`. Parallel across points.
pub fn certify_batch<C: HardClassifier + ?Sized>(
    c: &C,
    points: &[Vec<f64>],
    sigma: f64,
    spec: &ConfidenceSpec,
    seed: u64,
    exec: Execution,
) -> Result<Vec<CertResult>> {
    map_range(exec, points.len(), |i| {
        let key = NoiseKey { seed, point: i as u64 };
        certify_keyed(c, &points[i], sigma, spec, key, Execution::Sequential)
    })
    .into_iter()
    .collect()
}

/// Radius certified when every estimation sample agrees.
pub fn rmax(spec: &ConfidenceSpec, sigma: f64) -> Result<f64> {
    spec.validate()?;
    Ok(radius_from_lower(binom_lower_bound(spec.nc, spec.nc, spec.alpha)?, sigma))
}

/// `|⟨w, x⟩ + b| / ‖w‖`.
pub fn linear_margin(h: &LinearClassifier, x: &[f64]) -> Result<f64> {
    check_dim(h.w.len(), x.len())?;
    Ok(h.score(x).abs() / norm(&h.w))
}

/// Exact prediction of the smoothed `h ∘ x̂` over centered isotropic Gaussian data.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OracleAnswer {
    pub class: usize,
    pub radius: f64,
    /// `⟨w, βx⟩ + b = 0`; the class then follows the tie rule.
    pub on_boundary: bool,
}

/// Class `h(βx)` and radius `|⟨w, βx⟩ + b| / (β‖w‖)`.
pub fn prop1_oracle(h: &LinearClassifier, x: &[f64], sigma: f64, sigma0: f64) -> Result<OracleAnswer> {
    check_dim(h.w.len(), x.len())?;
    let beta = beta_of(sigma, sigma0)?.value();
    let bx: Vec<f64> = x.iter().map(|v| beta * v).collect();
    let s = h.score(&bx);
    Ok(OracleAnswer {
        class: h.predict_class(&bx),
        radius: s.abs() / (beta * norm(&h.w)),
        on_boundary: s == 0.0,
    })
}
