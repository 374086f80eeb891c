//! Forward pass and backpropagation-through-time for the two-layer LSTM.
//!
//! Per layer and time step, with `x` the (dropout-masked) layer input and
//! `h'` the (dropout-masked) previous hidden state:
//!
//! ```text
//! i = σ(Wᵢx + Uᵢh' + bᵢ)   f = σ(W_f x + U_f h' + b_f)
//! o = σ(Wₒx + Uₒh' + bₒ)   g = tanh(W_g x + U_g h' + b_g)
//! c = f ⊙ c_prev + i ⊙ g    h = o ⊙ tanh(c)
//! ```
//!
//! The final layer-2 hidden state feeds a dense head followed by ReLU.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::params::{Gradients, LstmLayerParams, ModelParams};
use super::{ModelError, Result};

/// Forward-pass mode.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Mode {
    /// Dropout active with masks drawn from `seed`; one mask set per sequence.
    Train { dropout_rate: f64, seed: u64 },
    Infer,
}

/// Inverted-dropout masks, fixed over all time steps of one sequence.
/// Entries are `0` or `1 / (1 - rate)`.
#[derive(Debug, Clone, PartialEq)]
pub struct DropoutMasks {
    pub layer1_input: Vec<f64>,
    pub layer1_recurrent: Vec<f64>,
    pub layer2_input: Vec<f64>,
    pub layer2_recurrent: Vec<f64>,
}

pub fn dropout_mask(len: usize, rate: f64, rng: &mut impl Rng) -> Vec<f64> {
    let keep = 1.0 / (1.0 - rate);
    (0..len).map(|_| if rng.gen::<f64>() < rate { 0.0 } else { keep }).collect()
}

impl DropoutMasks {
    pub fn sample(params: &ModelParams, rate: f64, seed: u64) -> Self {
        let d = params.dims;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Self {
            layer1_input: dropout_mask(d.input_size, rate, &mut rng),
            layer1_recurrent: dropout_mask(d.hidden1, rate, &mut rng),
            layer2_input: dropout_mask(d.hidden1, rate, &mut rng),
            layer2_recurrent: dropout_mask(d.hidden2, rate, &mut rng),
        }
    }
}

/// Per-step activations of one layer.
#[derive(Debug, Clone, Default)]
pub struct LayerCache {
    /// Masked layer input per step.
    pub x: Vec<Vec<f64>>,
    /// Masked previous hidden state per step.
    pub h_prev: Vec<Vec<f64>>,
    /// Gate activations per step, gate order i, f, o, g.
    pub gates: Vec<[Vec<f64>; 4]>,
    pub c_prev: Vec<Vec<f64>>,
    pub tanh_c: Vec<Vec<f64>>,
    /// Unmasked hidden output per step.
    pub h: Vec<Vec<f64>>,
}

/// Everything BPTT needs from a forward call.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    pub masks: Option<DropoutMasks>,
    pub layer1: LayerCache,
    pub layer2: LayerCache,
    pub dense_pre: Vec<f64>,
    pub output: Vec<f64>,
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

fn masked(v: &[f64], mask: Option<&Vec<f64>>) -> Vec<f64> {
    match mask {
        Some(m) => v.iter().zip(m).map(|(a, b)| a * b).collect(),
        None => v.to_vec(),
    }
}

fn layer_forward(
    p: &LstmLayerParams,
    inputs: &[Vec<f64>],
    in_mask: Option<&Vec<f64>>,
    rec_mask: Option<&Vec<f64>>,
) -> LayerCache {
    let hs = p.hidden_size;
    let mut cache = LayerCache::default();
    let mut h = vec![0.0; hs];
    let mut c = vec![0.0; hs];
    for x_raw in inputs {
        let x = masked(x_raw, in_mask);
        let hp = masked(&h, rec_mask);
        let gates: [Vec<f64>; 4] = std::array::from_fn(|k| {
            let mut z = p.b[k].clone();
            p.w[k].matvec_add(&x, &mut z);
            p.u[k].matvec_add(&hp, &mut z);
            if k == 3 {
                z.iter_mut().for_each(|v| *v = v.tanh());
            } else {
                z.iter_mut().for_each(|v| *v = sigmoid(*v));
            }
            z
        });
        let [i, f, o, g] = &gates;
        let c_new: Vec<f64> = (0..hs).map(|j| f[j] * c[j] + i[j] * g[j]).collect();
        let tanh_c: Vec<f64> = c_new.iter().map(|v| v.tanh()).collect();
        h = (0..hs).map(|j| o[j] * tanh_c[j]).collect();

        cache.x.push(x);
        cache.h_prev.push(hp);
        cache.c_prev.push(std::mem::replace(&mut c, c_new));
        cache.gates.push(gates);
        cache.tanh_c.push(tanh_c);
        cache.h.push(h.clone());
    }
    cache
}

/// Runs the network over one input window (one scalar per time step when
/// `input_size == 1`; otherwise the window is split into `input_size` chunks).
pub fn forward(params: &ModelParams, window: &[f64], mode: Mode) -> Result<(Vec<f64>, ForwardCache)> {
    let d = params.dims;
    if window.is_empty() || window.len() % d.input_size != 0 {
        return Err(ModelError::BadWindow { len: window.len(), input_size: d.input_size });
    }
    if window.iter().any(|v| !v.is_finite()) {
        return Err(ModelError::NumericFailure("non-finite input".into()));
    }
    let masks = match mode {
        Mode::Train { dropout_rate, seed } if dropout_rate > 0.0 => {
            Some(DropoutMasks::sample(params, dropout_rate, seed))
        }
        _ => None,
    };
    let steps: Vec<Vec<f64>> = window.chunks_exact(d.input_size).map(<[f64]>::to_vec).collect();

    let layer1 = layer_forward(
        &params.layer1,
        &steps,
        masks.as_ref().map(|m| &m.layer1_input),
        masks.as_ref().map(|m| &m.layer1_recurrent),
    );
    let layer2 = layer_forward(
        &params.layer2,
        &layer1.h,
        masks.as_ref().map(|m| &m.layer2_input),
        masks.as_ref().map(|m| &m.layer2_recurrent),
    );

    let last = layer2.h.last().expect("at least one step");
    let mut dense_pre = params.dense_b.clone();
    params.dense_w.matvec_add(last, &mut dense_pre);
    let output: Vec<f64> = dense_pre.iter().map(|&z| z.max(0.0)).collect();
    if output.iter().chain(&dense_pre).any(|v| !v.is_finite()) {
        return Err(ModelError::NumericFailure("non-finite network output".into()));
    }
    Ok((output.clone(), ForwardCache { masks, layer1, layer2, dense_pre, output }))
}

/// Inference-mode prediction.
pub fn predict(params: &ModelParams, window: &[f64]) -> Result<Vec<f64>> {
    forward(params, window, Mode::Infer).map(|(y, _)| y)
}

/// Mean squared error over the output vector.
pub fn example_loss(prediction: &[f64], target: &[f64]) -> f64 {
    prediction.iter().zip(target).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() / target.len() as f64
}

/// BPTT through one layer. `dh_out[t]` is the loss gradient w.r.t. the
/// layer's unmasked output at step `t`; returns the gradient w.r.t. the
/// layer's unmasked input at every step.
fn layer_backward(
    p: &LstmLayerParams,
    cache: &LayerCache,
    in_mask: Option<&Vec<f64>>,
    rec_mask: Option<&Vec<f64>>,
    dh_out: &[Vec<f64>],
    grad: &mut LstmLayerParams,
) -> Vec<Vec<f64>> {
    let hs = p.hidden_size;
    let steps = cache.h.len();
    let mut dx_all = vec![Vec::new(); steps];
    let mut dh_next = vec![0.0; hs];
    let mut dc_next = vec![0.0; hs];

    for t in (0..steps).rev() {
        let [i, f, o, g] = &cache.gates[t];
        let tanh_c = &cache.tanh_c[t];
        let c_prev = &cache.c_prev[t];

        let mut dz: [Vec<f64>; 4] = std::array::from_fn(|_| vec![0.0; hs]);
        for j in 0..hs {
            let dh = dh_out[t][j] + dh_next[j];
            let dc = dc_next[j] + dh * o[j] * (1.0 - tanh_c[j] * tanh_c[j]);
            dz[0][j] = dc * g[j] * i[j] * (1.0 - i[j]);
            dz[1][j] = dc * c_prev[j] * f[j] * (1.0 - f[j]);
            dz[2][j] = dh * tanh_c[j] * o[j] * (1.0 - o[j]);
            dz[3][j] = dc * i[j] * (1.0 - g[j] * g[j]);
            dc_next[j] = dc * f[j];
        }

        let mut dx = vec![0.0; p.input_size];
        let mut dhp = vec![0.0; hs];
        for k in 0..4 {
            grad.w[k].outer_add(&dz[k], &cache.x[t]);
            grad.u[k].outer_add(&dz[k], &cache.h_prev[t]);
            grad.b[k].iter_mut().zip(&dz[k]).for_each(|(a, b)| *a += b);
            p.w[k].tmatvec_add(&dz[k], &mut dx);
            p.u[k].tmatvec_add(&dz[k], &mut dhp);
        }
        if let Some(m) = in_mask {
            dx.iter_mut().zip(m).for_each(|(a, b)| *a *= b);
        }
        if let Some(m) = rec_mask {
            dhp.iter_mut().zip(m).for_each(|(a, b)| *a *= b);
        }
        dx_all[t] = dx;
        dh_next = dhp;
    }
    dx_all
}

/// Accumulates the gradient of [`example_loss`] into `grad`.
pub fn backward_into(params: &ModelParams, cache: &ForwardCache, target: &[f64], grad: &mut Gradients) -> Result<()> {
    let d = params.dims;
    if grad.dims() != d {
        return Err(ModelError::ShapeMismatch { expected: d, actual: grad.dims() });
    }
    if target.len() != d.output_size
        || cache.output.len() != d.output_size
        || cache.layer2.h.last().is_none_or(|h| h.len() != d.hidden2)
        || cache.layer1.h.last().is_none_or(|h| h.len() != d.hidden1)
    {
        return Err(ModelError::CacheMismatch);
    }
    let g = &mut grad.0;
    let n = d.output_size as f64;
    let d_pre: Vec<f64> = cache
        .output
        .iter()
        .zip(target)
        .zip(&cache.dense_pre)
        .map(|((y, t), z)| if *z > 0.0 { 2.0 * (y - t) / n } else { 0.0 })
        .collect();

    let steps = cache.layer2.h.len();
    let h_last = &cache.layer2.h[steps - 1];
    g.dense_w.outer_add(&d_pre, h_last);
    g.dense_b.iter_mut().zip(&d_pre).for_each(|(a, b)| *a += b);

    let mut dh2 = vec![vec![0.0; d.hidden2]; steps];
    params.dense_w.tmatvec_add(&d_pre, &mut dh2[steps - 1]);

    let masks = cache.masks.as_ref();
    let dh1 = layer_backward(
        &params.layer2,
        &cache.layer2,
        masks.map(|m| &m.layer2_input),
        masks.map(|m| &m.layer2_recurrent),
        &dh2,
        &mut g.layer2,
    );
    layer_backward(
        &params.layer1,
        &cache.layer1,
        masks.map(|m| &m.layer1_input),
        masks.map(|m| &m.layer1_recurrent),
        &dh1,
        &mut g.layer1,
    );
    Ok(())
}

pub fn backward(params: &ModelParams, cache: &ForwardCache, target: &[f64]) -> Result<Gradients> {
    let mut g = Gradients::zeros(params.dims);
    backward_into(params, cache, target, &mut g)?;
    Ok(g)
}
