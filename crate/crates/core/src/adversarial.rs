//! Adversarial training of the empirical-Bayes soft classifier.
//!
//! The loss of an example `(x, k)` is `max_{‖δ‖≤ε} −log Π_k(x + δ, θ)`, the
//! inner maximum approximated by normalized-gradient PGD with the Monte-Carlo
//! noise fixed for the whole attack. The energy is frozen: only the soft
//! classifier's parameters are updated.

use serde::{Deserialize, Serialize};

use crate::classifier::{EbClassifier, HardClassifier, SoftClassifier};
use crate::energy::cosine_lr;
use crate::linalg::{argmax, norm};
use crate::mlp::Adam;
use crate::par::{map_range, Execution};
use crate::score::{ScoreSource, ZeroEnergy};
use crate::stats::RngStream;
use crate::{Error, Point, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AttackSpec {
    pub epsilon: f64,
    pub steps: usize,
    /// Per-step ℓ₂ length; `None` means `2ε / steps`.
    pub step_size: Option<f64>,
    /// Noise samples for `Π` inside the attack.
    pub m: usize,
}

impl Default for AttackSpec {
    fn default() -> Self {
        Self {
            epsilon: 1.0,
            steps: 16,
            step_size: None,
            m: 1,
        }
    }
}

impl AttackSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon >= 0.0 && self.epsilon.is_finite()) {
            return Err(Error::config("attack.epsilon must be finite and non-negative"));
        }
        if self.epsilon > 0.0 && self.steps == 0 {
            return Err(Error::config("attack.steps must be positive when epsilon > 0"));
        }
        if self.m == 0 {
            return Err(Error::config("attack.m must be positive"));
        }
        if let Some(s) = self.step_size {
            if !(s > 0.0 && s.is_finite()) {
                return Err(Error::config("attack.step_size must be positive"));
            }
        }
        Ok(())
    }

    pub fn effective_step_size(&self) -> f64 {
        self.step_size.unwrap_or(2.0 * self.epsilon / self.steps.max(1) as f64)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AttackResult {
    /// `x + δ` of the best iterate.
    pub point: Point,
    /// `−log Π_k` at `point`.
    pub loss: f64,
    /// `−log Π_k` at `x`.
    pub initial_loss: f64,
    /// A non-finite gradient stopped the attack early.
    pub aborted: bool,
}

/// Maximize `−log Π_k` over the ε-ball around `x` with the given fixed noise.
pub fn pgd_attack<E: ScoreSource>(
    c: &EbClassifier<E>,
    x: &[f64],
    k: usize,
    spec: &AttackSpec,
    noise: &[Point],
) -> Result<AttackResult> {
    spec.validate()?;
    let (lp0, mut g) = c.log_pi_with_grad(x, k, noise)?;
    let initial_loss = -lp0;
    let mut best = AttackResult {
        point: x.to_vec(),
        loss: initial_loss,
        initial_loss,
        aborted: false,
    };
    if spec.epsilon == 0.0 {
        return Ok(best);
    }
    let step = spec.effective_step_size();
    let mut delta = vec![0.0; x.len()];
    for t in 0..spec.steps {
        if !g.iter().all(|v| v.is_finite()) {
            best.aborted = true;
            return Ok(best);
        }
        let gn = norm(&g);
        if gn == 0.0 {
            break;
        }
        // Descent on log Π_k.
        delta.iter_mut().zip(&g).for_each(|(d, gi)| *d -= step * gi / gn);
        let dn = norm(&delta);
        if dn > spec.epsilon {
            let s = spec.epsilon / dn;
            delta.iter_mut().for_each(|d| *d *= s);
        }
        let p: Point = x.iter().zip(&delta).map(|(a, d)| a + d).collect();
        let (lp, ng) = if t + 1 < spec.steps {
            c.log_pi_with_grad(&p, k, noise)?
        } else {
            (c.log_pi(&p, k, noise)?, g)
        };
        if -lp > best.loss {
            best.loss = -lp;
            best.point = p;
        }
        g = ng;
    }
    Ok(best)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrainMode {
    /// Attack, with `x̂` from the energy.
    Xhat,
    /// No attack, with `x̂`.
    Xhat0,
    /// Attack, with `x̂` replaced by the identity.
    VanillaSmooth,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub steps: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    /// Cosine decay ends at `learning_rate * lr_final_fraction`.
    pub lr_final_fraction: f64,
    /// Hidden widths of the soft classifier.
    pub hidden: Vec<usize>,
    /// Noise samples for `Π` in the training loss.
    pub m: usize,
    pub sigma: f64,
    pub seed: u64,
    pub mode: TrainMode,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            steps: 1000,
            batch_size: 64,
            learning_rate: 1e-2,
            lr_final_fraction: 0.05,
            hidden: vec![32, 32],
            m: 1,
            sigma: 0.3,
            seed: 0,
            mode: TrainMode::Xhat,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.steps == 0 || self.batch_size == 0 || self.m == 0 || self.hidden.contains(&0) {
            return Err(Error::config("train counts must be positive"));
        }
        if !(self.sigma >= 0.0 && self.sigma.is_finite()) {
            return Err(Error::config("train.sigma must be finite and non-negative"));
        }
        if !(self.learning_rate > 0.0) || !(0.0..=1.0).contains(&self.lr_final_fraction) {
            return Err(Error::config("train learning rate schedule is invalid"));
        }
        Ok(())
    }
}

/// One row of the training log.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainLogRow {
    pub step: usize,
    pub clean_loss: f64,
    pub adversarial_loss: f64,
    /// Fraction of the batch whose `argmax Π` at the attacked point is wrong.
    pub attack_success: f64,
    /// Not part of the deterministic output.
    pub wall_time_s: f64,
}

/// Estimator actually used by a training mode.
#[derive(Debug, Clone, Copy)]
enum Estimator<'a, E> {
    Learned(&'a E),
    Identity(ZeroEnergy),
}

impl<E: ScoreSource> ScoreSource for Estimator<'_, E> {
    fn dim(&self) -> usize {
        match self {
            Self::Learned(e) => e.dim(),
            Self::Identity(z) => z.dim(),
        }
    }
    fn sigma(&self) -> f64 {
        match self {
            Self::Learned(e) => e.sigma(),
            Self::Identity(z) => z.sigma(),
        }
    }
    fn energy(&self, y: &[f64]) -> f64 {
        match self {
            Self::Learned(e) => e.energy(y),
            Self::Identity(z) => z.energy(y),
        }
    }
    fn energy_grad(&self, y: &[f64]) -> Point {
        match self {
            Self::Learned(e) => e.energy_grad(y),
            Self::Identity(z) => z.energy_grad(y),
        }
    }
    fn energy_hvp(&self, y: &[f64], v: &[f64]) -> Point {
        match self {
            Self::Learned(e) => e.energy_hvp(y, v),
            Self::Identity(z) => z.energy_hvp(y, v),
        }
    }
    fn denoise(&self, y: &[f64]) -> Point {
        match self {
            Self::Learned(e) => e.denoise(y),
            Self::Identity(z) => z.denoise(y),
        }
    }
    fn denoise_vjp(&self, y: &[f64], v: &[f64]) -> Point {
        match self {
            Self::Learned(e) => e.denoise_vjp(y, v),
            Self::Identity(z) => z.denoise_vjp(y, v),
        }
    }
}

/// Examples per gradient chunk; chunks are summed in index order.
const CHUNK: usize = 8;

/// Train a fresh soft classifier on `(points, labels)` with `classes` classes.
#[allow(clippy::too_many_arguments)]
pub fn train_xhat<E: ScoreSource>(
    points: &[Point],
    labels: &[usize],
    classes: usize,
    energy: &E,
    cfg: &TrainConfig,
    attack: &AttackSpec,
    gen: &mut RngStream,
    exec: Execution,
) -> Result<(SoftClassifier, Vec<TrainLogRow>)> {
    cfg.validate()?;
    attack.validate()?;
    if points.is_empty() || points.len() != labels.len() {
        return Err(Error::domain("training data must be nonempty with one label per point"));
    }
    let dim = energy.dim();
    if let Some(p) = points.iter().find(|p| p.len() != dim) {
        return Err(Error::Dimension { expected: dim, got: p.len() });
    }
    if labels.iter().any(|&l| l >= classes) {
        return Err(Error::domain("label out of range"));
    }
    let estimator = match cfg.mode {
        TrainMode::Xhat | TrainMode::Xhat0 => Estimator::Learned(energy),
        TrainMode::VanillaSmooth => Estimator::Identity(ZeroEnergy { dim, sigma: energy.sigma() }),
    };
    let attack = AttackSpec {
        epsilon: if cfg.mode == TrainMode::Xhat0 { 0.0 } else { attack.epsilon },
        ..attack.clone()
    };

    let init = SoftClassifier::new(dim, &cfg.hidden, classes, gen)?;
    let mut clf = EbClassifier::new(init, estimator, cfg.sigma, cfg.m)?;
    let n_params = soft(&clf).mlp().num_params();
    let mut opt = Adam::new(n_params, 0.9, 0.999);
    let mut log = Vec::with_capacity(cfg.steps);
    let scale = 1.0 / cfg.batch_size as f64;

    for step in 0..cfg.steps {
        let started = std::time::Instant::now();
        let batch: Vec<(usize, Vec<Point>)> = (0..cfg.batch_size)
            .map(|_| {
                let i = gen.index(points.len());
                (i, clf.draw_noise(gen))
            })
            .collect();
        let clf_ref = &clf;
        let attack_ref = &attack;
        let n_chunks = batch.len().div_ceil(CHUNK);
        let parts = map_range(exec, n_chunks, |c| -> Result<(Vec<f64>, [f64; 3])> {
            let mut grad = vec![0.0; n_params];
            let mut acc = [0.0; 3];
            for (i, noise) in &batch[c * CHUNK..((c + 1) * CHUNK).min(batch.len())] {
                let (x, k) = (&points[*i], labels[*i]);
                let res = pgd_attack(clf_ref, x, k, attack_ref, noise)?;
                let adv = clf_ref.neg_log_pi_param_grad(&res.point, k, noise, &mut grad, scale)?;
                let pi = clf_ref.soft_pi_fixed(&res.point, noise)?;
                acc[0] += res.initial_loss;
                acc[1] += adv;
                if argmax(&pi) != k {
                    acc[2] += 1.0;
                }
            }
            Ok((grad, acc))
        });
        let mut grad = vec![0.0; n_params];
        let mut acc = [0.0; 3];
        for part in parts {
            let (g, a) = part?;
            grad.iter_mut().zip(&g).for_each(|(s, v)| *s += v);
            acc.iter_mut().zip(&a).for_each(|(s, v)| *s += v);
        }
        let row = TrainLogRow {
            step,
            clean_loss: acc[0] * scale,
            adversarial_loss: acc[1] * scale,
            attack_success: acc[2] * scale,
            wall_time_s: 0.0,
        };
        if !row.adversarial_loss.is_finite() || !grad.iter().all(|g| g.is_finite()) {
            return Err(Error::TrainingDiverged {
                step,
                detail: format!("adversarial loss {}", row.adversarial_loss),
            });
        }
        let lr = cosine_lr(cfg.learning_rate, cfg.lr_final_fraction, step, cfg.steps);
        if let crate::classifier::BaseClassifier::Soft(s) = &mut clf.base {
            opt.step(s.mlp_mut().params_mut(), &grad, lr);
        }
        log.push(TrainLogRow { wall_time_s: started.elapsed().as_secs_f64(), ..row });
    }
    Ok((soft(&clf).clone(), log))
}

fn soft<E>(c: &EbClassifier<E>) -> &SoftClassifier {
    match &c.base {
        crate::classifier::BaseClassifier::Soft(s) => s,
        crate::classifier::BaseClassifier::Linear(_) => unreachable!("training builds a soft classifier"),
    }
}

/// Clean accuracy of `argmax H(x̂(x))` on labeled points.
pub fn clean_accuracy<C: HardClassifier>(c: &C, points: &[Point], labels: &[usize]) -> f64 {
    let hits = points.iter().zip(labels).filter(|(p, &l)| c.predict_class(p) == l).count();
    hits as f64 / points.len().max(1) as f64
}
