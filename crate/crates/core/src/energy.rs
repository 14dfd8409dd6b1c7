//! Learnable energy `φ_σ(y; θ)` and its denoising least-squares training.
//!
//! Training minimizes `E‖x − x̂(x + ε)‖²` with `x̂(y) = y − σ²∇_yφ(y)`. The
//! parameter gradient of that loss runs through `∇_yφ`, so it needs the
//! second-order machinery of [`Mlp::directional`]: with `r = x − x̂(y)` fixed,
//! `∂‖r‖²/∂θ = 2σ² ∂⟨∇_yφ(y), r⟩/∂θ`.

use serde::{Deserialize, Serialize};

use crate::error::check_dim;
use crate::mlp::{Adam, Mlp};
use crate::par::{map_range, Execution};
use crate::score::ScoreSource;
use crate::stats::RngStream;
use crate::{Error, Point, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct EnergyNet {
    mlp: Mlp,
    sigma: f64,
}

impl EnergyNet {
    /// Random hidden layers and a zero output layer, so training starts from `x̂ = id`.
    pub fn new(dim: usize, hidden: &[usize], sigma: f64, gen: &mut RngStream) -> Result<Self> {
        let mut mlp = Mlp::new(&widths(dim, hidden), gen)?;
        let n = mlp.num_params();
        let last = hidden.last().copied().unwrap_or(dim);
        mlp.params_mut()[n - last - 1..].iter_mut().for_each(|p| *p = 0.0);
        Self::from_mlp(mlp, sigma)
    }

    pub fn from_mlp(mlp: Mlp, sigma: f64) -> Result<Self> {
        if mlp.output_dim() != 1 {
            return Err(Error::domain("energy network must have a scalar output"));
        }
        if !(sigma >= 0.0) {
            return Err(Error::domain("energy sigma must be non-negative"));
        }
        Ok(Self { mlp, sigma })
    }

    pub fn zeros(dim: usize, hidden: &[usize], sigma: f64) -> Result<Self> {
        Self::from_mlp(Mlp::zeros(&widths(dim, hidden))?, sigma)
    }

    pub fn mlp(&self) -> &Mlp {
        &self.mlp
    }

    pub fn mlp_mut(&mut self) -> &mut Mlp {
        &mut self.mlp
    }

    pub fn input_dim(&self) -> usize {
        self.mlp.input_dim()
    }

    pub fn energy(&self, y: &[f64]) -> Result<f64> {
        check_dim(self.input_dim(), y.len())?;
        Ok(self.mlp.forward(y)[0])
    }

    pub fn input_grad(&self, y: &[f64]) -> Result<Point> {
        check_dim(self.input_dim(), y.len())?;
        Ok(self.mlp.input_grad(y))
    }

    /// `∇²φ(y)·v`, exact.
    pub fn input_hvp(&self, y: &[f64], v: &[f64]) -> Result<Point> {
        check_dim(self.input_dim(), y.len())?;
        check_dim(self.input_dim(), v.len())?;
        Ok(self.mlp.directional(y, v, None, 1.0).hvp)
    }
}

fn widths(dim: usize, hidden: &[usize]) -> Vec<usize> {
    let mut w = Vec::with_capacity(hidden.len() + 2);
    w.push(dim);
    w.extend_from_slice(hidden);
    w.push(1);
    w
}

impl ScoreSource for EnergyNet {
    fn dim(&self) -> usize {
        self.input_dim()
    }
    fn sigma(&self) -> f64 {
        self.sigma
    }
    fn energy(&self, y: &[f64]) -> f64 {
        self.mlp.forward(y)[0]
    }
    fn energy_grad(&self, y: &[f64]) -> Point {
        self.mlp.input_grad(y)
    }
    fn energy_hvp(&self, y: &[f64], v: &[f64]) -> Point {
        self.mlp.directional(y, v, None, 1.0).hvp
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DeenConfig {
    pub sigma: f64,
    pub hidden: Vec<usize>,
    pub batch_size: usize,
    pub steps: usize,
    pub learning_rate: f64,
    /// Cosine decay ends at `learning_rate * lr_final_fraction`.
    pub lr_final_fraction: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub seed: u64,
}

impl Default for DeenConfig {
    fn default() -> Self {
        Self {
            sigma: 0.3,
            hidden: vec![128, 128],
            batch_size: 128,
            steps: 2000,
            learning_rate: 1e-3,
            lr_final_fraction: 0.1,
            beta1: 0.9,
            beta2: 0.999,
            seed: 0,
        }
    }
}

impl DeenConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.sigma > 0.0) {
            return Err(Error::config("deen.sigma must be positive"));
        }
        if self.batch_size == 0 || self.steps == 0 || self.hidden.contains(&0) {
            return Err(Error::config("deen counts must be positive"));
        }
        if !(self.learning_rate > 0.0) || !(0.0..=1.0).contains(&self.lr_final_fraction) {
            return Err(Error::config("deen learning rate schedule is invalid"));
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return Err(Error::config("deen moment parameters must lie in [0,1)"));
        }
        Ok(())
    }

    pub(crate) fn lr_at(&self, step: usize) -> f64 {
        cosine_lr(self.learning_rate, self.lr_final_fraction, step, self.steps)
    }
}

pub(crate) fn cosine_lr(base: f64, final_fraction: f64, step: usize, steps: usize) -> f64 {
    let t = if steps <= 1 { 1.0 } else { step as f64 / (steps - 1) as f64 };
    let lo = base * final_fraction;
    lo + 0.5 * (base - lo) * (1.0 + (std::f64::consts::PI * t).cos())
}

/// Examples per gradient chunk; chunks are summed in index order.
const CHUNK: usize = 16;

/// Squared denoising error of one pair and, optionally, its parameter gradient.
fn pair_loss(net: &EnergyNet, x: &[f64], y: &[f64], grad: Option<&mut [f64]>, scale: f64) -> f64 {
    let s2 = net.sigma * net.sigma;
    let g = net.mlp.input_grad(y);
    let r: Vec<f64> = x.iter().zip(y).zip(&g).map(|((xi, yi), gi)| xi - yi + s2 * gi).collect();
    if let Some(grad) = grad {
        net.mlp.directional(y, &r, Some(grad), 2.0 * s2 * scale);
    }
    r.iter().map(|v| v * v).sum()
}

/// Mean denoising loss over explicit `(x, y)` pairs.
pub fn deen_loss(net: &EnergyNet, clean: &[Point], noisy: &[Point]) -> f64 {
    let total: f64 = clean.iter().zip(noisy).map(|(x, y)| pair_loss(net, x, y, None, 0.0)).sum();
    total / clean.len().max(1) as f64
}

pub fn train_deen(data: &[Point], cfg: &DeenConfig, gen: &mut RngStream) -> Result<EnergyNet> {
    train_deen_logged(data, cfg, gen, Execution::default()).map(|(net, _)| net)
}

/// Train and return the net with the minibatch loss of every step.
pub fn train_deen_logged(
    data: &[Point],
    cfg: &DeenConfig,
    gen: &mut RngStream,
    exec: Execution,
) -> Result<(EnergyNet, Vec<f64>)> {
    cfg.validate()?;
    let first = data.first().ok_or_else(|| Error::domain("DEEN needs at least one data point"))?;
    let dim = first.len();
    if let Some(bad) = data.iter().find(|p| p.len() != dim) {
        return Err(Error::Dimension { expected: dim, got: bad.len() });
    }
    let mut net = EnergyNet::new(dim, &cfg.hidden, cfg.sigma, gen)?;
    let mut opt = Adam::new(net.mlp.num_params(), cfg.beta1, cfg.beta2);
    let mut losses = Vec::with_capacity(cfg.steps);
    let scale = 1.0 / cfg.batch_size as f64;

    for step in 0..cfg.steps {
        // Draw the whole batch up front so parallel evaluation sees fixed inputs.
        let batch: Vec<(usize, Point)> = (0..cfg.batch_size)
            .map(|_| {
                let i = gen.index(data.len());
                let y = data[i].iter().map(|x| x + cfg.sigma * gen.normal()).collect();
                (i, y)
            })
            .collect();
        let n_chunks = batch.len().div_ceil(CHUNK);
        let net_ref = &net;
        let parts = map_range(exec, n_chunks, |c| {
            let mut grad = vec![0.0; net_ref.mlp.num_params()];
            let mut loss = 0.0;
            for (i, y) in &batch[c * CHUNK..((c + 1) * CHUNK).min(batch.len())] {
                loss += pair_loss(net_ref, &data[*i], y, Some(&mut grad), scale);
            }
            (loss, grad)
        });
        let mut grad = vec![0.0; net.mlp.num_params()];
        let mut loss = 0.0;
        for (l, g) in parts {
            loss += l;
            grad.iter_mut().zip(&g).for_each(|(a, b)| *a += b);
        }
        loss *= scale;
        if !loss.is_finite() || !grad.iter().all(|g| g.is_finite()) {
            return Err(Error::TrainingDiverged {
                step,
                detail: format!("denoising loss {loss}"),
            });
        }
        losses.push(loss);
        opt.step(net.mlp.params_mut(), &grad, cfg.lr_at(step));
    }
    Ok((net, losses))
}
