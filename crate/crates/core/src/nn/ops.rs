//! Per-layer forward/backward primitives.
//!
//! Each forward returns the layer output plus the cache its backward needs.
//! Dropout is the inverted variant: surviving units are scaled by
//! `1/(1-rate)` at train time so inference applies no correction. Masks
//! are a pure function of the dropout seed and layer position, never of
//! the parameter values, which keeps finite-difference probes and the
//! analytic backward pass on identical masks.

use rand::Rng;

use crate::nn::tensor::{matmul, matmul_a_bt, matmul_at_b, TensorBuffer};
use crate::nn::Activation;
use crate::rng;
use crate::scalar::Scalar;

/// `max(0, z)`.
pub fn relu<S: Scalar>(z: S) -> S {
    if z > S::zero() {
        z
    } else {
        S::zero()
    }
}

/// ReLU derivative; the kink at zero takes the value 0.
pub fn relu_prime<S: Scalar>(z: S) -> S {
    if z > S::zero() {
        S::one()
    } else {
        S::zero()
    }
}

/// Numerically stable logistic function, `0.5 * (1 + tanh(z/2))`.
///
/// The tanh form neither overflows nor produces NaN anywhere on the real
/// line, and stays strictly below 1 through `z = 36` at 64-bit precision.
pub fn sigmoid<S: Scalar>(z: S) -> S {
    let half = S::from_real(0.5);
    half * (S::one() + (z * half).tanh())
}

/// Sigmoid derivative expressed through the output: `p (1 - p)`.
pub fn sigmoid_prime_from_output<S: Scalar>(p: S) -> S {
    p * (S::one() - p)
}

pub fn activate<S: Scalar>(kind: Activation, z: S) -> S {
    match kind {
        Activation::ReLU => relu(z),
        Activation::Sigmoid => sigmoid(z),
        Activation::None => z,
    }
}

/// Activation derivative computed from the activation *output*.
///
/// Works for this layer set because ReLU output is positive exactly where
/// its input is, and the sigmoid derivative is a function of its output.
pub fn activate_prime_from_output<S: Scalar>(kind: Activation, out: S) -> S {
    match kind {
        Activation::ReLU => relu_prime(out),
        Activation::Sigmoid => sigmoid_prime_from_output(out),
        Activation::None => S::one(),
    }
}

/// Inverted-dropout factors: 0 with probability `rate`, else `1/(1-rate)`.
pub fn dropout_factors<S: Scalar>(len: usize, rate: f64, seed: u64) -> Vec<S> {
    debug_assert!((0.0..1.0).contains(&rate));
    let keep = S::from_real(1.0 / (1.0 - rate));
    let mut rng = rng::seeded(seed);
    (0..len)
        .map(|_| {
            if rng.random::<f64>() < rate {
                S::zero()
            } else {
                keep
            }
        })
        .collect()
}

// ---------------------------------------------------------------------------
// Dense
// ---------------------------------------------------------------------------

pub struct DenseCache<S: Scalar> {
    /// `[batch, in_dim]`
    pub input: TensorBuffer<S>,
    /// Post-activation, pre-dropout output `[batch, out_dim]`.
    pub activated: TensorBuffer<S>,
    /// Element-wise dropout factors, when active.
    pub dropout: Option<Vec<S>>,
}

pub struct DenseGrads<S: Scalar> {
    pub d_weight: TensorBuffer<S>,
    pub d_bias: TensorBuffer<S>,
    pub d_input: TensorBuffer<S>,
}

/// `y = dropout(act(x W + b))`; dropout only when `train` and `rate > 0`.
pub fn dense_forward<S: Scalar>(
    x: &TensorBuffer<S>,
    weight: &TensorBuffer<S>,
    bias: &TensorBuffer<S>,
    activation: Activation,
    dropout_rate: f64,
    train: bool,
    dropout_seed: u64,
) -> (TensorBuffer<S>, DenseCache<S>) {
    let out_dim = weight.cols();
    let mut pre = matmul(x, weight);
    for row in pre.values.chunks_mut(out_dim) {
        for (v, &b) in row.iter_mut().zip(bias.values.iter()) {
            *v += b;
        }
    }
    let activated = TensorBuffer::from_vec(
        pre.shape(),
        pre.values.iter().map(|&z| activate(activation, z)).collect(),
    );
    let (output, dropout) = if train && dropout_rate > 0.0 {
        let factors = dropout_factors::<S>(activated.len(), dropout_rate, dropout_seed);
        let dropped = TensorBuffer::from_vec(
            activated.shape(),
            activated
                .values
                .iter()
                .zip(factors.iter())
                .map(|(&v, &f)| v * f)
                .collect(),
        );
        (dropped, Some(factors))
    } else {
        (activated.clone(), None)
    };
    (
        output,
        DenseCache {
            input: x.clone(),
            activated,
            dropout,
        },
    )
}

pub fn dense_backward<S: Scalar>(
    d_out: &TensorBuffer<S>,
    cache: &DenseCache<S>,
    weight: &TensorBuffer<S>,
    activation: Activation,
) -> DenseGrads<S> {
    let mut d_pre = d_out.clone();
    if let Some(factors) = &cache.dropout {
        for (g, &f) in d_pre.values.iter_mut().zip(factors.iter()) {
            *g *= f;
        }
    }
    for (g, &a) in d_pre.values.iter_mut().zip(cache.activated.values.iter()) {
        *g *= activate_prime_from_output(activation, a);
    }
    let d_weight = matmul_at_b(&cache.input, &d_pre);
    let out_dim = weight.cols();
    let mut d_bias = TensorBuffer::zeros(&[out_dim]);
    for row in d_pre.values.chunks(out_dim) {
        for (b, &g) in d_bias.values.iter_mut().zip(row.iter()) {
            *b += g;
        }
    }
    let d_input = matmul_a_bt(&d_pre, weight);
    DenseGrads {
        d_weight,
        d_bias,
        d_input,
    }
}

// ---------------------------------------------------------------------------
// Conv1D (Same zero padding, ReLU)
// ---------------------------------------------------------------------------

pub struct ConvCache<S: Scalar> {
    /// `[batch, len, in_ch]`
    pub input: TensorBuffer<S>,
    /// Post-ReLU output `[batch, len, filters]`.
    pub output: TensorBuffer<S>,
}

pub struct ConvGrads<S: Scalar> {
    pub d_kernel: TensorBuffer<S>,
    pub d_bias: TensorBuffer<S>,
    pub d_input: TensorBuffer<S>,
}

/// Cross-correlation with Same zero padding (left pad `(k-1)/2`), then
/// ReLU. Output length equals input length.
pub fn conv1d_forward<S: Scalar>(
    x: &TensorBuffer<S>,
    kernel: &TensorBuffer<S>,
    bias: &TensorBuffer<S>,
) -> (TensorBuffer<S>, ConvCache<S>) {
    let (batch, len, in_ch) = dims3(x);
    let k = kernel.shape()[0];
    let filters = kernel.shape()[2];
    debug_assert_eq!(kernel.shape()[1], in_ch);
    let pad_left = (k - 1) / 2;

    let mut out = TensorBuffer::zeros(&[batch, len, filters]);
    for b in 0..batch {
        for i in 0..len {
            let out_off = (b * len + i) * filters;
            out.values[out_off..out_off + filters].copy_from_slice(&bias.values);
            for d in 0..k {
                let xi = i + d;
                if xi < pad_left || xi - pad_left >= len {
                    continue;
                }
                let x_off = (b * len + (xi - pad_left)) * in_ch;
                for c in 0..in_ch {
                    let xv = x.values[x_off + c];
                    if xv == S::zero() {
                        continue;
                    }
                    let k_off = (d * in_ch + c) * filters;
                    for f in 0..filters {
                        out.values[out_off + f] += xv * kernel.values[k_off + f];
                    }
                }
            }
            for v in &mut out.values[out_off..out_off + filters] {
                *v = relu(*v);
            }
        }
    }
    let cache = ConvCache {
        input: x.clone(),
        output: out.clone(),
    };
    (out, cache)
}

pub fn conv1d_backward<S: Scalar>(
    d_out: &TensorBuffer<S>,
    cache: &ConvCache<S>,
    kernel: &TensorBuffer<S>,
) -> ConvGrads<S> {
    let (batch, len, in_ch) = dims3(&cache.input);
    let k = kernel.shape()[0];
    let filters = kernel.shape()[2];
    let pad_left = (k - 1) / 2;

    // ReLU gate.
    let mut d_pre = d_out.clone();
    for (g, &o) in d_pre.values.iter_mut().zip(cache.output.values.iter()) {
        *g *= relu_prime(o);
    }

    let mut d_kernel = kernel.zeros_like();
    let mut d_bias = TensorBuffer::zeros(&[filters]);
    let mut d_input = cache.input.zeros_like();
    for b in 0..batch {
        for i in 0..len {
            let g_off = (b * len + i) * filters;
            let g_row = &d_pre.values[g_off..g_off + filters];
            for (db, &g) in d_bias.values.iter_mut().zip(g_row.iter()) {
                *db += g;
            }
            for d in 0..k {
                let xi = i + d;
                if xi < pad_left || xi - pad_left >= len {
                    continue;
                }
                let x_off = (b * len + (xi - pad_left)) * in_ch;
                for c in 0..in_ch {
                    let xv = cache.input.values[x_off + c];
                    let k_off = (d * in_ch + c) * filters;
                    let mut dx = S::zero();
                    for (f, &g) in g_row.iter().enumerate() {
                        d_kernel.values[k_off + f] += xv * g;
                        dx += kernel.values[k_off + f] * g;
                    }
                    d_input.values[x_off + c] += dx;
                }
            }
        }
    }
    ConvGrads {
        d_kernel,
        d_bias,
        d_input,
    }
}

// ---------------------------------------------------------------------------
// MaxPool1D
// ---------------------------------------------------------------------------

pub struct PoolCache {
    /// Flat input index of each window's maximum (ties break to the
    /// earliest position, making backprop deterministic).
    pub argmax: Vec<usize>,
    pub in_shape: Vec<usize>,
}

/// Non-overlapping windows with stride `pool_size`; a trailing remainder
/// shorter than the window is dropped.
pub fn maxpool1d_forward<S: Scalar>(
    x: &TensorBuffer<S>,
    pool_size: usize,
) -> (TensorBuffer<S>, PoolCache) {
    let (batch, len, ch) = dims3(x);
    let out_len = len / pool_size;
    let mut out = TensorBuffer::zeros(&[batch, out_len, ch]);
    let mut argmax = vec![0usize; batch * out_len * ch];
    for b in 0..batch {
        for w in 0..out_len {
            for c in 0..ch {
                let mut best_idx = (b * len + w * pool_size) * ch + c;
                let mut best = x.values[best_idx];
                for j in 1..pool_size {
                    let idx = (b * len + w * pool_size + j) * ch + c;
                    if x.values[idx] > best {
                        best = x.values[idx];
                        best_idx = idx;
                    }
                }
                let o = (b * out_len + w) * ch + c;
                out.values[o] = best;
                argmax[o] = best_idx;
            }
        }
    }
    (
        out,
        PoolCache {
            argmax,
            in_shape: x.shape().to_vec(),
        },
    )
}

pub fn maxpool1d_backward<S: Scalar>(d_out: &TensorBuffer<S>, cache: &PoolCache) -> TensorBuffer<S> {
    let mut d_input = TensorBuffer::zeros(&cache.in_shape);
    for (o, &idx) in cache.argmax.iter().enumerate() {
        d_input.values[idx] += d_out.values[o];
    }
    d_input
}

// ---------------------------------------------------------------------------
// GRU
// ---------------------------------------------------------------------------

/// Gate block order inside the concatenated GRU tensors.
const GATE_UPDATE: usize = 0;
const GATE_RESET: usize = 1;
const GATE_CANDIDATE: usize = 2;

pub struct GruCache<S: Scalar> {
    /// Input after dropout, `[batch, T, features]`.
    pub dropped_input: TensorBuffer<S>,
    /// Dropout factors `[batch, features]` shared across timesteps.
    pub dropout: Option<Vec<S>>,
    /// Hidden state entering each step (`h_0 = 0`), `T` tensors `[batch, units]`.
    pub h_prev: Vec<TensorBuffer<S>>,
    pub update: Vec<TensorBuffer<S>>,
    pub reset: Vec<TensorBuffer<S>>,
    pub candidate: Vec<TensorBuffer<S>>,
    /// `reset ⊙ h_prev` per step.
    pub gated_prev: Vec<TensorBuffer<S>>,
}

pub struct GruGrads<S: Scalar> {
    pub d_kernel: TensorBuffer<S>,
    pub d_recurrent: TensorBuffer<S>,
    pub d_bias: TensorBuffer<S>,
    pub d_input: TensorBuffer<S>,
}

/// `out[.,j] += x[.,p] * m[p, gate*units + j]` for one gate block of a
/// `[rows, 3*units]` matrix.
fn add_matmul_gate<S: Scalar>(
    out: &mut [S],
    x: &[S],
    rows: usize,
    k: usize,
    m: &TensorBuffer<S>,
    gate: usize,
    units: usize,
) {
    let stride = m.cols();
    debug_assert_eq!(m.rows(), k);
    for i in 0..rows {
        let x_row = &x[i * k..(i + 1) * k];
        let out_row = &mut out[i * units..(i + 1) * units];
        for (p, &xv) in x_row.iter().enumerate() {
            if xv == S::zero() {
                continue;
            }
            let m_row = &m.values[p * stride + gate * units..p * stride + (gate + 1) * units];
            for (o, &mv) in out_row.iter_mut().zip(m_row.iter()) {
                *o += xv * mv;
            }
        }
    }
}

/// `dm[p, gate*units + j] += x[.,p] * da[.,j]` (outer-product accumulation).
fn add_outer_gate<S: Scalar>(
    dm: &mut TensorBuffer<S>,
    x: &[S],
    da: &[S],
    rows: usize,
    k: usize,
    gate: usize,
    units: usize,
) {
    let stride = dm.cols();
    for i in 0..rows {
        let x_row = &x[i * k..(i + 1) * k];
        let da_row = &da[i * units..(i + 1) * units];
        for (p, &xv) in x_row.iter().enumerate() {
            if xv == S::zero() {
                continue;
            }
            let dm_row =
                &mut dm.values[p * stride + gate * units..p * stride + (gate + 1) * units];
            for (d, &g) in dm_row.iter_mut().zip(da_row.iter()) {
                *d += xv * g;
            }
        }
    }
}

/// `dx[.,p] += da[.,j] * m[p, gate*units + j]`.
fn add_matmul_gate_t<S: Scalar>(
    dx: &mut [S],
    da: &[S],
    rows: usize,
    k: usize,
    m: &TensorBuffer<S>,
    gate: usize,
    units: usize,
) {
    let stride = m.cols();
    for i in 0..rows {
        let da_row = &da[i * units..(i + 1) * units];
        let dx_row = &mut dx[i * k..(i + 1) * k];
        for (p, d) in dx_row.iter_mut().enumerate() {
            let m_row = &m.values[p * stride + gate * units..p * stride + (gate + 1) * units];
            let mut acc = S::zero();
            for (&g, &mv) in da_row.iter().zip(m_row.iter()) {
                acc += g * mv;
            }
            *d += acc;
        }
    }
}

/// Standard GRU recurrence over `[batch, T, features]`, returning the final
/// hidden state `[batch, units]`:
///
/// ```text
/// z_t = sigmoid(x_t W_z + h_{t-1} U_z + b_z)
/// r_t = sigmoid(x_t W_r + h_{t-1} U_r + b_r)
/// c_t = tanh(x_t W_c + (r_t ⊙ h_{t-1}) U_c + b_c)
/// h_t = (1 - z_t) ⊙ h_{t-1} + z_t ⊙ c_t,   h_0 = 0
/// ```
///
/// At train time, inverted dropout is applied to the *input*, with one
/// mask per sample shared across all timesteps.
pub fn gru_forward<S: Scalar>(
    x: &TensorBuffer<S>,
    kernel: &TensorBuffer<S>,
    recurrent: &TensorBuffer<S>,
    bias: &TensorBuffer<S>,
    dropout_rate: f64,
    train: bool,
    dropout_seed: u64,
) -> (TensorBuffer<S>, GruCache<S>) {
    let (batch, steps, features) = dims3(x);
    let units = recurrent.rows();
    debug_assert_eq!(kernel.rows(), features);
    debug_assert_eq!(kernel.cols(), 3 * units);
    debug_assert_eq!(bias.len(), 3 * units);

    let (dropped_input, dropout) = if train && dropout_rate > 0.0 {
        let factors = dropout_factors::<S>(batch * features, dropout_rate, dropout_seed);
        let mut dropped = x.clone();
        for b in 0..batch {
            for t in 0..steps {
                let off = (b * steps + t) * features;
                for c in 0..features {
                    dropped.values[off + c] *= factors[b * features + c];
                }
            }
        }
        (dropped, Some(factors))
    } else {
        (x.clone(), None)
    };

    let mut cache = GruCache {
        dropped_input: dropped_input.clone(),
        dropout,
        h_prev: Vec::with_capacity(steps),
        update: Vec::with_capacity(steps),
        reset: Vec::with_capacity(steps),
        candidate: Vec::with_capacity(steps),
        gated_prev: Vec::with_capacity(steps),
    };

    let mut h = TensorBuffer::zeros(&[batch, units]);
    for t in 0..steps {
        let x_t: Vec<S> = (0..batch)
            .flat_map(|b| {
                let off = (b * steps + t) * features;
                dropped_input.values[off..off + features].iter().copied()
            })
            .collect();

        let bias_row = |gate: usize| -> Vec<S> {
            let mut v = Vec::with_capacity(batch * units);
            for _ in 0..batch {
                v.extend_from_slice(&bias.values[gate * units..(gate + 1) * units]);
            }
            v
        };

        let mut a_z = bias_row(GATE_UPDATE);
        add_matmul_gate(&mut a_z, &x_t, batch, features, kernel, GATE_UPDATE, units);
        add_matmul_gate(&mut a_z, &h.values, batch, units, recurrent, GATE_UPDATE, units);
        let z = TensorBuffer::from_vec(&[batch, units], a_z.iter().map(|&v| sigmoid(v)).collect());

        let mut a_r = bias_row(GATE_RESET);
        add_matmul_gate(&mut a_r, &x_t, batch, features, kernel, GATE_RESET, units);
        add_matmul_gate(&mut a_r, &h.values, batch, units, recurrent, GATE_RESET, units);
        let r = TensorBuffer::from_vec(&[batch, units], a_r.iter().map(|&v| sigmoid(v)).collect());

        let gated: Vec<S> = r
            .values
            .iter()
            .zip(h.values.iter())
            .map(|(&rv, &hv)| rv * hv)
            .collect();

        let mut a_c = bias_row(GATE_CANDIDATE);
        add_matmul_gate(&mut a_c, &x_t, batch, features, kernel, GATE_CANDIDATE, units);
        add_matmul_gate(&mut a_c, &gated, batch, units, recurrent, GATE_CANDIDATE, units);
        let c = TensorBuffer::from_vec(&[batch, units], a_c.iter().map(|&v| v.tanh()).collect());

        let mut h_next = TensorBuffer::zeros(&[batch, units]);
        for i in 0..batch * units {
            h_next.values[i] =
                (S::one() - z.values[i]) * h.values[i] + z.values[i] * c.values[i];
        }

        cache.h_prev.push(h);
        cache.update.push(z);
        cache.reset.push(r);
        cache.candidate.push(c);
        cache
            .gated_prev
            .push(TensorBuffer::from_vec(&[batch, units], gated));
        h = h_next;
    }
    (h, cache)
}

/// Backpropagation through time over every step of the recurrence.
pub fn gru_backward<S: Scalar>(
    d_h_final: &TensorBuffer<S>,
    cache: &GruCache<S>,
    kernel: &TensorBuffer<S>,
    recurrent: &TensorBuffer<S>,
) -> GruGrads<S> {
    let (batch, steps, features) = dims3(&cache.dropped_input);
    let units = recurrent.rows();

    let mut d_kernel = kernel.zeros_like();
    let mut d_recurrent = recurrent.zeros_like();
    let mut d_bias = TensorBuffer::zeros(&[3 * units]);
    let mut d_input = cache.dropped_input.zeros_like();

    let mut d_h = d_h_final.values.clone();
    for t in (0..steps).rev() {
        let h_prev = &cache.h_prev[t];
        let z = &cache.update[t];
        let r = &cache.reset[t];
        let c = &cache.candidate[t];
        let gated = &cache.gated_prev[t];

        let n = batch * units;
        let mut d_a_z = vec![S::zero(); n];
        let mut d_a_c = vec![S::zero(); n];
        let mut d_h_prev = vec![S::zero(); n];
        for i in 0..n {
            let dz = d_h[i] * (c.values[i] - h_prev.values[i]);
            let dc = d_h[i] * z.values[i];
            d_h_prev[i] = d_h[i] * (S::one() - z.values[i]);
            d_a_z[i] = dz * z.values[i] * (S::one() - z.values[i]);
            d_a_c[i] = dc * (S::one() - c.values[i] * c.values[i]);
        }

        // Candidate path: d(gated) = d_a_c · U_cᵀ, then split into reset
        // gate and direct h_{t-1} contributions.
        let mut d_gated = vec![S::zero(); n];
        add_matmul_gate_t(&mut d_gated, &d_a_c, batch, units, recurrent, GATE_CANDIDATE, units);
        let mut d_a_r = vec![S::zero(); n];
        for i in 0..n {
            d_a_r[i] = d_gated[i]
                * h_prev.values[i]
                * r.values[i]
                * (S::one() - r.values[i]);
            d_h_prev[i] += d_gated[i] * r.values[i];
        }

        let x_t: Vec<S> = (0..batch)
            .flat_map(|b| {
                let off = (b * steps + t) * features;
                cache.dropped_input.values[off..off + features].iter().copied()
            })
            .collect();

        for (gate, d_a) in [
            (GATE_UPDATE, &d_a_z),
            (GATE_RESET, &d_a_r),
            (GATE_CANDIDATE, &d_a_c),
        ] {
            add_outer_gate(&mut d_kernel, &x_t, d_a, batch, features, gate, units);
            for i in 0..batch {
                let da_row = &d_a[i * units..(i + 1) * units];
                let db_row = &mut d_bias.values[gate * units..(gate + 1) * units];
                for (b, &g) in db_row.iter_mut().zip(da_row.iter()) {
                    *b += g;
                }
            }
        }
        add_outer_gate(&mut d_recurrent, &h_prev.values, &d_a_z, batch, units, GATE_UPDATE, units);
        add_outer_gate(&mut d_recurrent, &h_prev.values, &d_a_r, batch, units, GATE_RESET, units);
        add_outer_gate(
            &mut d_recurrent,
            &gated.values,
            &d_a_c,
            batch,
            units,
            GATE_CANDIDATE,
            units,
        );

        // Gradient to h_{t-1} through the gate pre-activations.
        add_matmul_gate_t(&mut d_h_prev, &d_a_z, batch, units, recurrent, GATE_UPDATE, units);
        add_matmul_gate_t(&mut d_h_prev, &d_a_r, batch, units, recurrent, GATE_RESET, units);

        // Gradient to x_t through all three gates.
        let mut d_x_t = vec![S::zero(); batch * features];
        add_matmul_gate_t(&mut d_x_t, &d_a_z, batch, features, kernel, GATE_UPDATE, units);
        add_matmul_gate_t(&mut d_x_t, &d_a_r, batch, features, kernel, GATE_RESET, units);
        add_matmul_gate_t(&mut d_x_t, &d_a_c, batch, features, kernel, GATE_CANDIDATE, units);
        for b in 0..batch {
            let off = (b * steps + t) * features;
            for cx in 0..features {
                d_input.values[off + cx] += d_x_t[b * features + cx];
            }
        }

        d_h = d_h_prev;
    }

    // Undo the input dropout scaling toward the raw input.
    if let Some(factors) = &cache.dropout {
        for b in 0..batch {
            for t in 0..steps {
                let off = (b * steps + t) * features;
                for cx in 0..features {
                    d_input.values[off + cx] *= factors[b * features + cx];
                }
            }
        }
    }

    GruGrads {
        d_kernel,
        d_recurrent,
        d_bias,
        d_input,
    }
}

fn dims3<S: Scalar>(x: &TensorBuffer<S>) -> (usize, usize, usize) {
    let shape = x.shape();
    assert_eq!(shape.len(), 3, "expected a 3-D tensor, got {shape:?}");
    (shape[0], shape[1], shape[2])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sigmoid_closed_forms() {
        assert_eq!(sigmoid(0.0f64), 0.5);
        assert_eq!(sigmoid_prime_from_output(0.5f64), 0.25);
        assert_eq!(relu(-3.0f64), 0.0);
        assert_eq!(relu(2.0f64), 2.0);
        assert_eq!(relu_prime(0.0f64), 0.0);
    }

    #[test]
    fn sigmoid_saturation_stays_inside_unit_interval() {
        // High-precision route: 1/(1+e^-36) evaluated directly.
        let direct = 1.0f64 / (1.0 + (-36.0f64).exp());
        let s = sigmoid(36.0f64);
        assert!(s < 1.0);
        assert!((s - direct).abs() < 1e-15);
        assert!(sigmoid(-36.0f64) > 0.0);
        // No NaN anywhere, even far past saturation.
        assert!(sigmoid(1e6f64).is_finite());
        assert!(sigmoid(-1e6f64).is_finite());
    }

    #[test]
    fn dense_zero_weights_relu_is_zero() {
        let x = TensorBuffer::from_vec(&[2, 3], vec![1.0, -2.0, 3.0, 0.0, 5.0, -1.0]);
        let w = TensorBuffer::<f64>::zeros(&[3, 2]);
        let b = TensorBuffer::<f64>::zeros(&[2]);
        let (y, _) = dense_forward(&x, &w, &b, Activation::ReLU, 0.0, false, 0);
        assert!(y.values.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn dense_affine_arithmetic() {
        let x = TensorBuffer::from_vec(&[1, 1], vec![3.0f64]);
        let w = TensorBuffer::from_vec(&[1, 1], vec![2.0f64]);
        let b = TensorBuffer::from_vec(&[1], vec![1.0f64]);
        let (y, _) = dense_forward(&x, &w, &b, Activation::None, 0.0, false, 0);
        assert_eq!(y.values, vec![7.0]);
    }

    #[test]
    fn dropout_preserves_expectation() {
        let n = 100_000;
        let factors = dropout_factors::<f64>(n, 0.75, 1234);
        let mean: f64 = factors.iter().sum::<f64>() / n as f64;
        assert!((mean - 1.0).abs() < 0.02, "dropout mean {mean}");
    }

    #[test]
    fn dense_dropout_expectation_through_layer() {
        // One input unit fanned out wide; every activation equals 1.
        let n = 100_000;
        let x = TensorBuffer::from_vec(&[1, 1], vec![1.0f64]);
        let w = TensorBuffer::from_vec(&[1, n], vec![1.0; n]);
        let b = TensorBuffer::<f64>::zeros(&[n]);
        let (y, _) = dense_forward(&x, &w, &b, Activation::None, 0.75, true, 99);
        let mean: f64 = y.values.iter().sum::<f64>() / n as f64;
        assert!((mean - 1.0).abs() < 0.02, "dropped mean {mean}");
        // Infer mode: no mask, no scaling.
        let (y_infer, _) = dense_forward(&x, &w, &b, Activation::None, 0.75, false, 99);
        assert!(y_infer.values.iter().all(|&v| v == 1.0));
    }

    #[test]
    fn dropout_blocked_unit_has_zero_weight_gradient() {
        let x = TensorBuffer::from_vec(&[2, 2], vec![1.0f64, 2.0, 0.5, -1.0]);
        let w = TensorBuffer::from_vec(&[2, 4], (0..8).map(|i| 0.1 * i as f64).collect());
        let b = TensorBuffer::<f64>::zeros(&[4]);
        let (_, cache) = dense_forward(&x, &w, &b, Activation::None, 0.5, true, 7);
        let factors = cache.dropout.clone().unwrap();
        let d_out = TensorBuffer::from_vec(&[2, 4], vec![1.0f64; 8]);
        let grads = dense_backward(&d_out, &cache, &w, Activation::None);
        // A unit masked in every batch row gets no data-term gradient on
        // its incoming weights.
        for unit in 0..4 {
            if (0..2).all(|row| factors[row * 4 + unit] == 0.0) {
                for input in 0..2 {
                    assert_eq!(grads.d_weight.values[input * 4 + unit], 0.0);
                }
            }
        }
        // The seeded mask must actually exercise both cases.
        assert!(factors.contains(&0.0));
        assert!(factors.iter().any(|&f| f != 0.0));
    }

    #[test]
    fn conv_zero_kernel_zero_output() {
        let x = TensorBuffer::from_vec(&[1, 4, 1], vec![1.0f64, -2.0, 3.0, 4.0]);
        let k = TensorBuffer::<f64>::zeros(&[3, 1, 2]);
        let b = TensorBuffer::<f64>::zeros(&[2]);
        let (y, _) = conv1d_forward(&x, &k, &b);
        assert_eq!(y.shape(), &[1, 4, 2]);
        assert!(y.values.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn conv_delta_kernel_is_identity_on_positive_input() {
        let x = TensorBuffer::from_vec(&[1, 5, 1], vec![1.0f64, 2.0, 3.0, 4.0, 5.0]);
        // kernel [0, 1, 0]: center tap only.
        let k = TensorBuffer::from_vec(&[3, 1, 1], vec![0.0f64, 1.0, 0.0]);
        let b = TensorBuffer::<f64>::zeros(&[1]);
        let (y, _) = conv1d_forward(&x, &k, &b);
        assert_eq!(y.values, x.values);
    }

    #[test]
    fn conv_same_padding_asymmetry_even_kernel() {
        // k=2: left pad 0, right pad 1. Kernel taps [a, b] at position i
        // read x[i] and x[i+1].
        let x = TensorBuffer::from_vec(&[1, 3, 1], vec![1.0f64, 2.0, 3.0]);
        let k = TensorBuffer::from_vec(&[2, 1, 1], vec![1.0f64, 1.0]);
        let b = TensorBuffer::<f64>::zeros(&[1]);
        let (y, _) = conv1d_forward(&x, &k, &b);
        assert_eq!(y.values, vec![3.0, 5.0, 3.0]);
    }

    #[test]
    fn maxpool_basic_and_remainder() {
        let x = TensorBuffer::from_vec(&[1, 4, 1], vec![1.0f64, 5.0, 2.0, 4.0]);
        let (y, _) = maxpool1d_forward(&x, 2);
        assert_eq!(y.values, vec![5.0, 4.0]);

        let x199 = TensorBuffer::from_vec(&[1, 199, 1], (0..199).map(|i| i as f64).collect());
        let (y66, _) = maxpool1d_forward(&x199, 3);
        assert_eq!(y66.shape(), &[1, 66, 1]);
    }

    #[test]
    fn maxpool_tie_routes_to_earliest() {
        let x = TensorBuffer::from_vec(&[1, 4, 1], vec![2.0f64, 2.0, 2.0, 2.0]);
        let (y, cache) = maxpool1d_forward(&x, 2);
        assert_eq!(y.values, vec![2.0, 2.0]);
        assert_eq!(cache.argmax, vec![0, 2]);
        let d_out = TensorBuffer::from_vec(&[1, 2, 1], vec![1.0f64, 1.0]);
        let dx = maxpool1d_backward(&d_out, &cache);
        assert_eq!(dx.values, vec![1.0, 0.0, 1.0, 0.0]);
    }

    #[test]
    fn gru_zero_parameters_zero_output() {
        let x = TensorBuffer::from_vec(&[1, 3, 2], vec![1.0f64, -1.0, 0.5, 2.0, 0.3, 0.7]);
        let kernel = TensorBuffer::<f64>::zeros(&[2, 9]);
        let recurrent = TensorBuffer::<f64>::zeros(&[3, 9]);
        let bias = TensorBuffer::<f64>::zeros(&[9]);
        let (h, _) = gru_forward(&x, &kernel, &recurrent, &bias, 0.0, false, 0);
        assert!(h.values.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn gru_single_step_closed_form() {
        // With h_0 = 0: h_1 = z_1 ⊙ tanh(x W_c + b_c).
        let units = 2;
        let x = TensorBuffer::from_vec(&[1, 1, 3], vec![0.3f64, -0.4, 0.9]);
        let kernel = TensorBuffer::from_vec(
            &[3, 3 * units],
            (0..18).map(|i| (i as f64) * 0.05 - 0.4).collect(),
        );
        let recurrent = TensorBuffer::from_vec(
            &[units, 3 * units],
            (0..12).map(|i| (i as f64) * 0.03 - 0.2).collect(),
        );
        let bias = TensorBuffer::from_vec(&[3 * units], (0..6).map(|i| 0.01 * i as f64).collect());
        let (h, _) = gru_forward(&x, &kernel, &recurrent, &bias, 0.0, false, 0);

        for j in 0..units {
            let mut a_z = bias.values[j];
            let mut a_c = bias.values[2 * units + j];
            for p in 0..3 {
                a_z += x.values[p] * kernel.values[p * 3 * units + j];
                a_c += x.values[p] * kernel.values[p * 3 * units + 2 * units + j];
            }
            let expected = sigmoid(a_z) * a_c.tanh();
            assert!((h.values[j] - expected).abs() < 1e-12);
        }
    }

    /// Straight-line scalar re-implementation used as the GRU oracle.
    fn scalar_gru_oracle(
        x: &[Vec<Vec<f64>>], // [batch][t][features]
        w: &[Vec<f64>],      // [features][3u]
        u: &[Vec<f64>],      // [units][3u]
        b: &[f64],           // [3u]
        units: usize,
    ) -> Vec<Vec<f64>> {
        let sig = |v: f64| 1.0 / (1.0 + (-v).exp());
        x.iter()
            .map(|seq| {
                let mut h = vec![0.0; units];
                for x_t in seq {
                    let mut z = vec![0.0; units];
                    let mut r = vec![0.0; units];
                    let mut c = vec![0.0; units];
                    for j in 0..units {
                        let mut az = b[j];
                        let mut ar = b[units + j];
                        for (p, &xv) in x_t.iter().enumerate() {
                            az += xv * w[p][j];
                            ar += xv * w[p][units + j];
                        }
                        for (p, &hv) in h.iter().enumerate() {
                            az += hv * u[p][j];
                            ar += hv * u[p][units + j];
                        }
                        z[j] = sig(az);
                        r[j] = sig(ar);
                    }
                    for j in 0..units {
                        let mut ac = b[2 * units + j];
                        for (p, &xv) in x_t.iter().enumerate() {
                            ac += xv * w[p][2 * units + j];
                        }
                        for (p, &hv) in h.iter().enumerate() {
                            ac += r[p] * hv * u[p][2 * units + j];
                        }
                        c[j] = ac.tanh();
                    }
                    for j in 0..units {
                        h[j] = (1.0 - z[j]) * h[j] + z[j] * c[j];
                    }
                }
                h
            })
            .collect()
    }

    #[test]
    fn gru_matches_scalar_oracle() {
        // 2 samples x 3 steps x 2 features, 3 units, fixed pseudo-random values.
        let batch = 2;
        let steps = 3;
        let features = 2;
        let units = 3;
        let gen = |i: usize| ((i * 2654435761) % 1000) as f64 / 1000.0 - 0.5;
        let x_flat: Vec<f64> = (0..batch * steps * features).map(gen).collect();
        let w_flat: Vec<f64> = (0..features * 3 * units).map(|i| gen(i + 101)).collect();
        let u_flat: Vec<f64> = (0..units * 3 * units).map(|i| gen(i + 577)).collect();
        let b_flat: Vec<f64> = (0..3 * units).map(|i| gen(i + 919)).collect();

        let x = TensorBuffer::from_vec(&[batch, steps, features], x_flat.clone());
        let kernel = TensorBuffer::from_vec(&[features, 3 * units], w_flat.clone());
        let recurrent = TensorBuffer::from_vec(&[units, 3 * units], u_flat.clone());
        let bias = TensorBuffer::from_vec(&[3 * units], b_flat.clone());
        let (h, _) = gru_forward(&x, &kernel, &recurrent, &bias, 0.0, false, 0);

        let x_nested: Vec<Vec<Vec<f64>>> = (0..batch)
            .map(|bi| {
                (0..steps)
                    .map(|t| {
                        (0..features)
                            .map(|f| x_flat[(bi * steps + t) * features + f])
                            .collect()
                    })
                    .collect()
            })
            .collect();
        let w_nested: Vec<Vec<f64>> = (0..features)
            .map(|p| w_flat[p * 3 * units..(p + 1) * 3 * units].to_vec())
            .collect();
        let u_nested: Vec<Vec<f64>> = (0..units)
            .map(|p| u_flat[p * 3 * units..(p + 1) * 3 * units].to_vec())
            .collect();
        let expected = scalar_gru_oracle(&x_nested, &w_nested, &u_nested, &b_flat, units);
        for (bi, expected_row) in expected.iter().enumerate() {
            for (j, &e) in expected_row.iter().enumerate() {
                assert!(
                    (h.values[bi * units + j] - e).abs() < 1e-12,
                    "mismatch at ({bi},{j})"
                );
            }
        }
    }

    #[test]
    fn gru_zero_input_kernel_ignores_input() {
        // With zero input kernels and zero biases the hidden state never
        // leaves zero, so prepending zero rows changes nothing.
        let units = 3;
        let gen = |i: usize| ((i * 48271) % 1000) as f64 / 2000.0 - 0.25;
        let recurrent =
            TensorBuffer::from_vec(&[units, 3 * units], (0..27).map(gen).collect());
        let kernel = TensorBuffer::<f64>::zeros(&[2, 3 * units]);
        let bias = TensorBuffer::<f64>::zeros(&[3 * units]);

        let x_short = TensorBuffer::from_vec(&[1, 2, 2], vec![0.3f64, -0.2, 0.9, 0.1]);
        let mut padded = vec![0.0f64; 4];
        padded.extend_from_slice(&x_short.values);
        let x_long = TensorBuffer::from_vec(&[1, 4, 2], padded);

        let (h_short, _) = gru_forward(&x_short, &kernel, &recurrent, &bias, 0.0, false, 0);
        let (h_long, _) = gru_forward(&x_long, &kernel, &recurrent, &bias, 0.0, false, 0);
        assert_eq!(h_short.values, vec![0.0; units]);
        assert_eq!(h_long.values, h_short.values);
    }
}
