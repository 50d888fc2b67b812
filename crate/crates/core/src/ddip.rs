//! Untrained decoder network fitted per detection instance.
//!
//! A tiny fully connected net (layer widths 4, 8, 16, 32, 2MN) maps a fixed
//! random seed vector through tanh layers to a scaled symbol estimate. The
//! only training signal is the data-fit loss `||H x - y||^2 / (2MN)` of the
//! frame being detected, minimized with Adam; there is no dataset and no
//! offline training phase. Fitting stops once the windowed variance of
//! successive outputs falls below a threshold, which guards against fitting
//! the noise. The final output seeds the BPIC loop.

use rand::Rng;
use rand_distr::StandardNormal;
use std::collections::VecDeque;

use crate::channel::RealLinearModel;
use crate::error::{Error, Result};
use crate::linalg::RealMatrix;

/// Layer widths of the standard decoder, input to output (the last entry is
/// the frame size `2MN`).
pub const DECODER_WIDTHS: [usize; 4] = [4, 8, 16, 32];

/// Fully connected decoder with tanh activations and a scaled output.
#[derive(Debug, Clone)]
pub struct DecoderNet {
    sizes: Vec<usize>,
    /// `weights[l]` maps layer `l` to layer `l+1`, shape `sizes[l+1] x sizes[l]`.
    pub weights: Vec<RealMatrix>,
    pub biases: Vec<Vec<f64>>,
    z0: Vec<f64>,
    scale: f64,
}

/// Gradient (or moment) container shaped like the trainable parameters.
#[derive(Debug, Clone)]
pub struct NetGrads {
    pub weights: Vec<RealMatrix>,
    pub biases: Vec<Vec<f64>>,
}

impl NetGrads {
    fn zeros_like(net: &DecoderNet) -> Self {
        Self {
            weights: net
                .weights
                .iter()
                .map(|w| RealMatrix::zeros(w.rows(), w.cols()))
                .collect(),
            biases: net.biases.iter().map(|b| vec![0.0; b.len()]).collect(),
        }
    }
}

impl DecoderNet {
    /// Build a decoder with explicit layer sizes. The seed vector is drawn
    /// from a standard normal and stays fixed; weights and biases of layer
    /// `l` are uniform on `(-1/sqrt(p_l), 1/sqrt(p_l))` with `p_l` the
    /// neuron count of that layer.
    pub fn with_sizes<R: Rng + ?Sized>(sizes: &[usize], scale: f64, rng: &mut R) -> Result<Self> {
        if sizes.len() < 2 || sizes.contains(&0) {
            return Err(Error::InvalidParameter(
                "decoder needs at least two non-empty layers".into(),
            ));
        }
        let z0: Vec<f64> = (0..sizes[0]).map(|_| rng.sample(StandardNormal)).collect();
        let mut weights = Vec::with_capacity(sizes.len() - 1);
        let mut biases = Vec::with_capacity(sizes.len() - 1);
        for l in 1..sizes.len() {
            let bound = 1.0 / (sizes[l] as f64).sqrt();
            let mut w = RealMatrix::zeros(sizes[l], sizes[l - 1]);
            for i in 0..sizes[l] {
                for j in 0..sizes[l - 1] {
                    w.set(i, j, rng.gen_range(-bound..bound));
                }
            }
            weights.push(w);
            biases.push((0..sizes[l]).map(|_| rng.gen_range(-bound..bound)).collect());
        }
        Ok(Self {
            sizes: sizes.to_vec(),
            weights,
            biases,
            z0,
            scale,
        })
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn z0(&self) -> &[f64] {
        &self.z0
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }

    pub fn output_dim(&self) -> usize {
        *self.sizes.last().unwrap()
    }

    /// All post-activation layer outputs `f_2 .. f_L` (before output scaling).
    pub fn forward_activations(&self) -> Vec<Vec<f64>> {
        let mut acts = Vec::with_capacity(self.weights.len());
        let mut input = &self.z0;
        for (w, b) in self.weights.iter().zip(&self.biases) {
            let mut a = w.matvec(input);
            for (ai, bi) in a.iter_mut().zip(b) {
                *ai = (*ai + bi).tanh();
            }
            acts.push(a);
            input = acts.last().unwrap();
        }
        acts
    }

    /// Network output `c * f_L(...)`; every entry lies in `[-c, c]`.
    pub fn forward(&self) -> Vec<f64> {
        let acts = self.forward_activations();
        scaled_output(self, acts.last().unwrap())
    }
}

fn scaled_output(net: &DecoderNet, last: &[f64]) -> Vec<f64> {
    last.iter().map(|&f| net.scale * f).collect()
}

/// Build the standard decoder for an `M x N` frame (output width `2MN`).
pub fn init_net<R: Rng + ?Sized>(m: usize, n: usize, scale: f64, rng: &mut R) -> Result<DecoderNet> {
    if m == 0 || n == 0 {
        return Err(Error::InvalidParameter("frame dimensions must be positive".into()));
    }
    let mut sizes = DECODER_WIDTHS.to_vec();
    sizes.push(2 * m * n);
    DecoderNet::with_sizes(&sizes, scale, rng)
}

/// Data-fit loss `||H f(net) - y||^2 / dim`.
pub fn loss(net: &DecoderNet, model: &RealLinearModel) -> f64 {
    let out = net.forward();
    let hx = model.h.matvec(&out);
    let ss: f64 = hx
        .iter()
        .zip(&model.y)
        .map(|(a, b)| (a - b) * (a - b))
        .sum();
    ss / model.dim() as f64
}

/// Analytic gradient of [`loss`] with respect to every weight and bias.
/// The seed vector receives no gradient.
pub fn gradients(net: &DecoderNet, model: &RealLinearModel) -> NetGrads {
    let acts = net.forward_activations();
    let out = scaled_output(net, acts.last().unwrap());
    let mut resid = model.h.matvec(&out);
    for (r, &yi) in resid.iter_mut().zip(&model.y) {
        *r -= yi;
    }
    let mut grads = NetGrads::zeros_like(net);
    backprop(net, &acts, &resid, model, &mut grads);
    grads
}

/// Reverse-mode pass given the activations and the residual `H x - y`.
fn backprop(
    net: &DecoderNet,
    acts: &[Vec<f64>],
    resid: &[f64],
    model: &RealLinearModel,
    grads: &mut NetGrads,
) {
    let n = model.dim() as f64;
    // dL/d(output) = (2/n) H^T r, then through the output scaling and tanh.
    let g_out = model.h.matvec_t(resid);
    let last = acts.last().unwrap();
    let mut delta: Vec<f64> = g_out
        .iter()
        .zip(last)
        .map(|(&g, &f)| (2.0 / n) * g * net.scale * (1.0 - f * f))
        .collect();

    for l in (0..net.weights.len()).rev() {
        let input: &[f64] = if l == 0 { &net.z0 } else { &acts[l - 1] };
        let gw = &mut grads.weights[l];
        for (i, &di) in delta.iter().enumerate() {
            for (g, &inj) in gw.row_mut(i).iter_mut().zip(input) {
                *g = di * inj;
            }
        }
        grads.biases[l].copy_from_slice(&delta);
        if l > 0 {
            let back = net.weights[l].matvec_t(&delta);
            delta = back
                .iter()
                .zip(&acts[l - 1])
                .map(|(&g, &f)| g * (1.0 - f * f))
                .collect();
        }
    }
}

/// Adam optimizer state: first and second moment accumulators shaped like
/// the parameters, plus the step counter and hyperparameters.
#[derive(Debug, Clone)]
pub struct AdamState {
    m: NetGrads,
    v: NetGrads,
    step: u64,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl AdamState {
    pub fn new(net: &DecoderNet, learning_rate: f64) -> Self {
        Self {
            m: NetGrads::zeros_like(net),
            v: NetGrads::zeros_like(net),
            step: 0,
            learning_rate,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }

    pub fn step(&self) -> u64 {
        self.step
    }

    pub fn first_moments(&self) -> &NetGrads {
        &self.m
    }

    pub fn second_moments(&self) -> &NetGrads {
        &self.v
    }
}

struct AdamCoeffs {
    lr: f64,
    beta1: f64,
    beta2: f64,
    epsilon: f64,
    bias1: f64,
    bias2: f64,
}

#[inline]
fn adam_scalar(theta: &mut f64, g: f64, m: &mut f64, v: &mut f64, c: &AdamCoeffs) {
    *m = c.beta1 * *m + (1.0 - c.beta1) * g;
    *v = c.beta2 * *v + (1.0 - c.beta2) * g * g;
    let m_hat = *m / c.bias1;
    let v_hat = *v / c.bias2;
    *theta -= c.lr * m_hat / (v_hat.sqrt() + c.epsilon);
}

/// One Adam step over every weight and bias.
pub fn adam_update(net: &mut DecoderNet, grads: &NetGrads, adam: &mut AdamState) {
    adam.step += 1;
    let coeffs = AdamCoeffs {
        lr: adam.learning_rate,
        beta1: adam.beta1,
        beta2: adam.beta2,
        epsilon: adam.epsilon,
        bias1: 1.0 - adam.beta1.powi(adam.step as i32),
        bias2: 1.0 - adam.beta2.powi(adam.step as i32),
    };
    let update = |theta: &mut [f64], g: &[f64], m: &mut [f64], v: &mut [f64]| {
        for (((t, &gi), mi), vi) in theta.iter_mut().zip(g).zip(m.iter_mut()).zip(v.iter_mut()) {
            adam_scalar(t, gi, mi, vi, &coeffs);
        }
    };
    for l in 0..net.weights.len() {
        update(
            net.weights[l].as_mut_slice(),
            grads.weights[l].as_slice(),
            adam.m.weights[l].as_mut_slice(),
            adam.v.weights[l].as_mut_slice(),
        );
        update(
            &mut net.biases[l],
            &grads.biases[l],
            &mut adam.m.biases[l],
            &mut adam.v.biases[l],
        );
    }
}

/// Decision from the output-variance stopping rule.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum StopDecision {
    /// Keep iterating; carries the variance once the window is full.
    Continue { varsigma: Option<f64> },
    Stop { varsigma: f64 },
}

/// Sliding-window variance monitor over successive network outputs.
///
/// The variance is normalized per output entry, so the same threshold means
/// the same amount of per-symbol movement at any frame size; this is what
/// keeps the stopping iteration insensitive to the grid dimensions. The
/// test is inactive until `window` outputs have been seen; the stopping
/// iteration can therefore never be smaller than the window.
#[derive(Debug, Clone)]
pub struct StopMonitor {
    window: usize,
    threshold: f64,
    history: VecDeque<Vec<f64>>,
    /// Running per-entry sum over the window.
    sum: Vec<f64>,
    /// Running sum of squared norms over the window.
    sum_sq: f64,
    count: usize,
}

impl StopMonitor {
    pub fn new(window: usize, threshold: f64) -> Result<Self> {
        if window == 0 {
            return Err(Error::InvalidParameter("stop window must be positive".into()));
        }
        Ok(Self {
            window,
            threshold,
            history: VecDeque::with_capacity(window + 1),
            sum: Vec::new(),
            sum_sq: 0.0,
            count: 0,
        })
    }

    pub fn iterations_seen(&self) -> usize {
        self.count
    }

    /// Push an output and evaluate the windowed per-entry variance
    /// `(1/W) sum_j ||x_j - mean||^2 / dim` once `W` outputs are available.
    pub fn push(&mut self, output: &[f64]) -> StopDecision {
        if self.sum.is_empty() {
            self.sum = vec![0.0; output.len()];
        }
        self.count += 1;
        for (s, &o) in self.sum.iter_mut().zip(output) {
            *s += o;
        }
        self.sum_sq += crate::linalg::dot(output, output);
        if self.history.len() == self.window {
            // Evict the oldest entry and reuse its buffer.
            let mut old = self.history.pop_front().unwrap();
            for (s, &o) in self.sum.iter_mut().zip(&old) {
                *s -= o;
            }
            self.sum_sq -= crate::linalg::dot(&old, &old);
            old.copy_from_slice(output);
            self.history.push_back(old);
        } else {
            self.history.push_back(output.to_vec());
        }
        if self.count < self.window {
            return StopDecision::Continue { varsigma: None };
        }
        // sum_j ||x_j - mean||^2 = sum_j ||x_j||^2 - ||sum||^2 / W
        let w = self.window as f64;
        let mean_sq = crate::linalg::dot(&self.sum, &self.sum) / w;
        let varsigma = ((self.sum_sq - mean_sq) / (w * self.sum.len() as f64)).max(0.0);
        if varsigma < self.threshold {
            StopDecision::Stop { varsigma }
        } else {
            StopDecision::Continue {
                varsigma: Some(varsigma),
            }
        }
    }
}

/// Parameters of the fitting loop.
#[derive(Debug, Clone)]
pub struct DdipConfig {
    /// Output scaling `c` (the constellation's per-dimension amplitude).
    pub scale: f64,
    pub window: usize,
    pub epsilon: f64,
    pub learning_rate: f64,
    /// Hard cap on iterations; hitting it flags the run as truncated.
    pub max_iterations: usize,
}

impl Default for DdipConfig {
    fn default() -> Self {
        Self {
            scale: std::f64::consts::FRAC_1_SQRT_2,
            window: 30,
            epsilon: 1e-3,
            learning_rate: 0.01,
            max_iterations: 500,
        }
    }
}

/// One trace row of the fitting loop. The loss is absent on the stopping
/// iteration (the loop exits before computing it), the variance is absent
/// while the window is still filling.
#[derive(Debug, Clone, Copy)]
pub struct DdipTracePoint {
    pub iteration: usize,
    pub loss: Option<f64>,
    pub varsigma: Option<f64>,
}

/// Outcome of a fitting run.
#[derive(Debug, Clone)]
pub struct DdipRun {
    /// Final network output, the initial estimate handed to BPIC.
    pub x_init: Vec<f64>,
    /// Number of iterations executed (`I`).
    pub iterations: usize,
    /// True when the hard cap fired instead of the variance rule.
    pub truncated: bool,
    pub trace: Vec<DdipTracePoint>,
}

/// Fit a fresh decoder to one detection instance and return its output as
/// the BPIC initial estimate.
pub fn run_ddip<R: Rng + ?Sized>(
    model: &RealLinearModel,
    cfg: &DdipConfig,
    rng: &mut R,
) -> Result<DdipRun> {
    if cfg.max_iterations == 0 {
        return Err(Error::InvalidParameter("iteration cap must be positive".into()));
    }
    let mut sizes = DECODER_WIDTHS.to_vec();
    sizes.push(model.dim());
    let mut net = DecoderNet::with_sizes(&sizes, cfg.scale, rng)?;
    let mut adam = AdamState::new(&net, cfg.learning_rate);
    let mut monitor = StopMonitor::new(cfg.window, cfg.epsilon)?;
    let mut grads = NetGrads::zeros_like(&net);
    let mut trace = Vec::new();

    let mut out = Vec::new();
    for i in 1..=cfg.max_iterations {
        let acts = net.forward_activations();
        out = scaled_output(&net, acts.last().unwrap());

        match monitor.push(&out) {
            StopDecision::Stop { varsigma } => {
                trace.push(DdipTracePoint {
                    iteration: i,
                    loss: None,
                    varsigma: Some(varsigma),
                });
                return Ok(DdipRun {
                    x_init: out,
                    iterations: i,
                    truncated: false,
                    trace,
                });
            }
            StopDecision::Continue { varsigma } => {
                let mut resid = model.h.matvec(&out);
                for (r, &yi) in resid.iter_mut().zip(&model.y) {
                    *r -= yi;
                }
                let loss_val = crate::linalg::dot(&resid, &resid) / model.dim() as f64;
                trace.push(DdipTracePoint {
                    iteration: i,
                    loss: Some(loss_val),
                    varsigma,
                });
                backprop(&net, &acts, &resid, model, &mut grads);
                adam_update(&mut net, &grads, &mut adam);
            }
        }
    }

    Ok(DdipRun {
        x_init: out,
        iterations: cfg.max_iterations,
        truncated: true,
        trace,
    })
}
