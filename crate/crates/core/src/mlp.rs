//! Fully connected softplus network with exact first and second order
//! derivatives, shared by the energy network and the soft classifier.
//!
//! Parameters live in one flat vector. For each layer `l = 1..L`, in order:
//! the weight matrix `W_l` (`n_l × n_{l−1}`, row-major) followed by the bias
//! `b_l` (`n_l`). Hidden layers apply softplus; the output layer is affine.

use crate::error::check_dim;
use crate::stats::RngStream;
use crate::{Error, Result};

#[inline]
pub fn softplus(z: f64) -> f64 {
    z.max(0.0) + (-z.abs()).exp().ln_1p()
}

#[inline]
fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    widths: Vec<usize>,
    params: Vec<f64>,
}

/// Activations recorded by a forward pass.
#[derive(Debug, Clone)]
pub struct Trace {
    /// `inputs[l]` is the input of layer `l`; `inputs[0]` is the network input.
    inputs: Vec<Vec<f64>>,
    /// Pre-activations of every layer; the last one is the network output.
    pre: Vec<Vec<f64>>,
}

impl Trace {
    pub fn output(&self) -> &[f64] {
        self.pre.last().expect("network has at least one layer")
    }
}

/// Result of [`Mlp::directional`] for a scalar network `f`.
#[derive(Debug, Clone)]
pub struct Directional {
    pub value: f64,
    /// `∇f(x)`.
    pub grad: Vec<f64>,
    /// `∇²f(x)·u`.
    pub hvp: Vec<f64>,
    /// `⟨∇f(x), u⟩`.
    pub slope: f64,
}

fn param_count(widths: &[usize]) -> usize {
    widths.windows(2).map(|w| w[1] * w[0] + w[1]).sum()
}

impl Mlp {
    /// LeCun-normal weights (`N(0, 1/n_in)`), zero biases.
    pub fn new(widths: &[usize], gen: &mut RngStream) -> Result<Self> {
        let mut net = Self::zeros(widths)?;
        let mut offset = 0;
        for w in widths.windows(2) {
            let (n_in, n_out) = (w[0], w[1]);
            let scale = 1.0 / (n_in as f64).sqrt();
            for p in &mut net.params[offset..offset + n_in * n_out] {
                *p = scale * gen.normal();
            }
            offset += n_in * n_out + n_out;
        }
        Ok(net)
    }

    pub fn zeros(widths: &[usize]) -> Result<Self> {
        if widths.len() < 2 || widths.contains(&0) {
            return Err(Error::domain(format!("invalid layer widths {widths:?}")));
        }
        Ok(Self {
            widths: widths.to_vec(),
            params: vec![0.0; param_count(widths)],
        })
    }

    pub fn from_params(widths: &[usize], params: Vec<f64>) -> Result<Self> {
        let mut net = Self::zeros(widths)?;
        check_dim(net.params.len(), params.len())?;
        net.params = params;
        Ok(net)
    }

    pub fn widths(&self) -> &[usize] {
        &self.widths
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn num_params(&self) -> usize {
        self.params.len()
    }

    pub fn input_dim(&self) -> usize {
        self.widths[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.widths.last().unwrap()
    }

    fn num_layers(&self) -> usize {
        self.widths.len() - 1
    }

    /// `(offset of W_l, n_in, n_out)`; the bias follows the weights.
    fn layer_offsets(&self) -> Vec<(usize, usize, usize)> {
        let mut out = Vec::with_capacity(self.num_layers());
        let mut offset = 0;
        for w in self.widths.windows(2) {
            out.push((offset, w[0], w[1]));
            offset += w[0] * w[1] + w[1];
        }
        out
    }

    fn affine(&self, off: usize, n_in: usize, n_out: usize, x: &[f64], with_bias: bool) -> Vec<f64> {
        let w = &self.params[off..off + n_in * n_out];
        let b = &self.params[off + n_in * n_out..off + n_in * n_out + n_out];
        (0..n_out)
            .map(|o| {
                let row = &w[o * n_in..(o + 1) * n_in];
                let s: f64 = row.iter().zip(x).map(|(a, b)| a * b).sum();
                if with_bias {
                    s + b[o]
                } else {
                    s
                }
            })
            .collect()
    }

    /// `Wᵀ p` for layer at `off`.
    fn transpose_apply(&self, off: usize, n_in: usize, n_out: usize, p: &[f64]) -> Vec<f64> {
        let w = &self.params[off..off + n_in * n_out];
        let mut out = vec![0.0; n_in];
        for (o, &po) in p.iter().enumerate() {
            if po == 0.0 {
                continue;
            }
            let row = &w[o * n_in..(o + 1) * n_in];
            for (acc, wv) in out.iter_mut().zip(row) {
                *acc += wv * po;
            }
        }
        out
    }

    pub fn forward(&self, x: &[f64]) -> Vec<f64> {
        let layers = self.layer_offsets();
        let last = layers.len() - 1;
        let mut a = x.to_vec();
        for (l, &(off, n_in, n_out)) in layers.iter().enumerate() {
            let mut z = self.affine(off, n_in, n_out, &a, true);
            if l < last {
                z.iter_mut().for_each(|v| *v = softplus(*v));
            }
            a = z;
        }
        a
    }

    pub fn forward_trace(&self, x: &[f64]) -> Trace {
        let layers = self.layer_offsets();
        let last = layers.len() - 1;
        let mut inputs = Vec::with_capacity(layers.len());
        let mut pre = Vec::with_capacity(layers.len());
        let mut a = x.to_vec();
        for (l, &(off, n_in, n_out)) in layers.iter().enumerate() {
            let z = self.affine(off, n_in, n_out, &a, true);
            let next = if l < last { z.iter().map(|v| softplus(*v)).collect() } else { Vec::new() };
            inputs.push(std::mem::replace(&mut a, next));
            pre.push(z);
        }
        Trace { inputs, pre }
    }

    /// Reverse pass for the scalar `⟨c, f(x)⟩`: returns its input gradient and,
    /// when `grad` is given, accumulates `scale · ∂/∂θ` into it.
    pub fn backward(&self, trace: &Trace, cotangent: &[f64], mut grad: Option<&mut [f64]>, scale: f64) -> Vec<f64> {
        let layers = self.layer_offsets();
        let mut g = cotangent.to_vec();
        for l in (0..layers.len()).rev() {
            let (off, n_in, n_out) = layers[l];
            let a_in = &trace.inputs[l];
            if let Some(grad) = grad.as_deref_mut() {
                for (o, &go) in g.iter().enumerate() {
                    let c = scale * go;
                    if c != 0.0 {
                        let row = &mut grad[off + o * n_in..off + (o + 1) * n_in];
                        for (r, ai) in row.iter_mut().zip(a_in) {
                            *r += c * ai;
                        }
                    }
                    grad[off + n_in * n_out + o] += c;
                }
            }
            let mut adj = self.transpose_apply(off, n_in, n_out, &g);
            if l > 0 {
                for (v, z) in adj.iter_mut().zip(&trace.pre[l - 1]) {
                    *v *= sigmoid(*z);
                }
            }
            g = adj;
        }
        g
    }

    /// Input gradient of a scalar-output network.
    pub fn input_grad(&self, x: &[f64]) -> Vec<f64> {
        let trace = self.forward_trace(x);
        self.backward(&trace, &[1.0], None, 1.0)
    }

    /// Forward tangent along `u`, then reverse over the primal and tangent
    /// streams of the scalar network `f`.
    ///
    /// The reverse sweep differentiates `ψ(x, θ) = ⟨∇f(x), u⟩`, which yields
    /// `∇f(x)` (adjoint of the tangent seed), `∇²f(x)·u` (adjoint of `x`) and,
    /// when `grad` is given, `scale · ∂ψ/∂θ`.
    pub fn directional(&self, x: &[f64], u: &[f64], mut grad: Option<&mut [f64]>, scale: f64) -> Directional {
        debug_assert_eq!(self.output_dim(), 1);
        let layers = self.layer_offsets();
        let last = layers.len() - 1;

        let mut a = x.to_vec();
        let mut ad = u.to_vec();
        let mut inputs = Vec::with_capacity(layers.len());
        let mut tangents = Vec::with_capacity(layers.len());
        let mut pre = Vec::with_capacity(layers.len());
        let mut pre_dot = Vec::with_capacity(layers.len());
        for (l, &(off, n_in, n_out)) in layers.iter().enumerate() {
            let z = self.affine(off, n_in, n_out, &a, true);
            let zd = self.affine(off, n_in, n_out, &ad, false);
            let (na, nad) = if l < last {
                (
                    z.iter().map(|v| softplus(*v)).collect(),
                    z.iter().zip(&zd).map(|(v, d)| sigmoid(*v) * d).collect(),
                )
            } else {
                (Vec::new(), Vec::new())
            };
            inputs.push(std::mem::replace(&mut a, na));
            tangents.push(std::mem::replace(&mut ad, nad));
            pre.push(z);
            pre_dot.push(zd);
        }
        let value = pre[last][0];
        let slope = pre_dot[last][0];

        // Adjoints of the tangent pre-activation (pd) and primal pre-activation (p).
        let mut pd = vec![1.0];
        let mut p = vec![0.0];
        for l in (0..layers.len()).rev() {
            let (off, n_in, n_out) = layers[l];
            if let Some(grad) = grad.as_deref_mut() {
                let (a_in, ad_in) = (&inputs[l], &tangents[l]);
                for o in 0..n_out {
                    let (cd, cp) = (scale * pd[o], scale * p[o]);
                    let row = &mut grad[off + o * n_in..off + (o + 1) * n_in];
                    for i in 0..n_in {
                        row[i] += cd * ad_in[i] + cp * a_in[i];
                    }
                    grad[off + n_in * n_out + o] += cp;
                }
            }
            let adj_t = self.transpose_apply(off, n_in, n_out, &pd);
            let adj_a = self.transpose_apply(off, n_in, n_out, &p);
            if l == 0 {
                return Directional {
                    value,
                    grad: adj_t,
                    hvp: adj_a,
                    slope,
                };
            }
            let (z, zd) = (&pre[l - 1], &pre_dot[l - 1]);
            pd = Vec::with_capacity(z.len());
            p = Vec::with_capacity(z.len());
            for i in 0..z.len() {
                let s1 = sigmoid(z[i]);
                let s2 = s1 * (1.0 - s1);
                pd.push(s1 * adj_t[i]);
                p.push(s1 * adj_a[i] + s2 * zd[i] * adj_t[i]);
            }
        }
        unreachable!("loop returns at the input layer")
    }
}

/// Adaptive-moment optimizer with bias correction.
#[derive(Debug, Clone)]
pub struct Adam {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    m: Vec<f64>,
    v: Vec<f64>,
    t: u64,
}

impl Adam {
    pub fn new(n: usize, beta1: f64, beta2: f64) -> Self {
        Self {
            beta1,
            beta2,
            eps: 1e-8,
            m: vec![0.0; n],
            v: vec![0.0; n],
            t: 0,
        }
    }

    pub fn step(&mut self, params: &mut [f64], grad: &[f64], lr: f64) {
        self.t += 1;
        let c1 = 1.0 - self.beta1.powi(self.t as i32);
        let c2 = 1.0 - self.beta2.powi(self.t as i32);
        for i in 0..params.len() {
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * grad[i];
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * grad[i] * grad[i];
            let mh = self.m[i] / c1;
            let vh = self.v[i] / c2;
            params[i] -= lr * mh / (vh.sqrt() + self.eps);
        }
    }
}
