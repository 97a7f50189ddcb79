//! Fully connected tanh networks `ψ_θ(t, x1, x2)`.
//!
//! Input derivatives come from nested dual numbers ([`MlpParams::eval`]) or,
//! in bulk, from truncated Taylor jets ([`MlpParams::jet`]). Parameter
//! gradients of any weighted sum of input derivatives are computed by a
//! reverse sweep over the jet forward pass ([`MlpParams::param_gradient`]).

pub mod adam;
pub mod dual;
pub mod jet;

use crate::{Error, Result};
use dual::{Dual, Nested, Real};
use jet::JetSpace;
use rand::{Rng, SeedableRng};
use rayon::prelude::*;
use std::collections::HashMap;

pub use adam::{AdamConfig, AdamState};

/// Points per parallel work item in batched passes; fixed so reductions
/// happen in the same order for any thread count.
const CHUNK: usize = 256;

/// `tanh` through `expm1`, accurate to a few ulp and several times faster
/// than the libm routine.
#[inline]
fn tanh_fast(z: f64) -> f64 {
    if z.abs() > 20.0 {
        return z.signum();
    }
    let e = (2.0 * z).exp_m1();
    e / (e + 2.0)
}

/// Dot product with four independent accumulators.
#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = [0.0; 4];
    let (ca, ra) = a.split_at(a.len() - a.len() % 4);
    let (cb, rb) = b.split_at(ca.len());
    for (x, y) in ca.chunks_exact(4).zip(cb.chunks_exact(4)) {
        for k in 0..4 {
            acc[k] += x[k] * y[k];
        }
    }
    let mut tail = 0.0;
    for (x, y) in ra.iter().zip(rb) {
        tail += x * y;
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

#[derive(Debug, Clone, PartialEq)]
pub struct MlpParams {
    layer_sizes: Vec<usize>,
    params: Vec<f64>,
    offsets: Vec<usize>,
    seed: u64,
    max_order: u32,
}

/// `∂^α ψ_θ` at `point = (t, x1, x2)`, `alpha = (α_t, α_1, α_2)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DerivativeQuery {
    pub point: [f64; 3],
    pub alpha: [u32; 3],
}

/// One term `weight · ∂^α ψ_θ(point)` of a loss that is linear in the
/// network's derivatives.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DerivativeSeed {
    pub point: [f64; 3],
    pub alpha: [u32; 3],
    pub weight: f64,
}

fn layer_offsets(sizes: &[usize]) -> Vec<usize> {
    let mut off = Vec::with_capacity(sizes.len());
    let mut at = 0;
    for w in sizes.windows(2) {
        off.push(at);
        at += w[0] * w[1] + w[1];
    }
    off.push(at);
    off
}

impl MlpParams {
    /// Xavier-uniform weights and zero biases from a ChaCha stream.
    pub fn new(layer_sizes: &[usize], seed: u64) -> Result<Self> {
        let mut net = Self::zeros(layer_sizes)?;
        net.seed = seed;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        for l in 0..layer_sizes.len() - 1 {
            let (fan_in, fan_out) = (layer_sizes[l], layer_sizes[l + 1]);
            let a = (6.0 / (fan_in + fan_out) as f64).sqrt();
            let start = net.offsets[l];
            for w in &mut net.params[start..start + fan_in * fan_out] {
                *w = rng.random_range(-a..a);
            }
        }
        Ok(net)
    }

    pub fn zeros(layer_sizes: &[usize]) -> Result<Self> {
        if layer_sizes.len() < 2 || layer_sizes[0] != 3 || *layer_sizes.last().unwrap() != 1 {
            return Err(Error::Config(format!(
                "layer sizes must start at 3 and end at 1, got {layer_sizes:?}"
            )));
        }
        if layer_sizes.contains(&0) {
            return Err(Error::Config("empty layer".into()));
        }
        let offsets = layer_offsets(layer_sizes);
        Ok(Self {
            layer_sizes: layer_sizes.to_vec(),
            params: vec![0.0; *offsets.last().unwrap()],
            offsets,
            seed: 0,
            max_order: jet::MAX_ORDER as u32,
        })
    }

    /// Rebuilds a network from stored parts.
    pub fn from_parts(layer_sizes: &[usize], params: Vec<f64>, seed: u64) -> Result<Self> {
        let mut net = Self::zeros(layer_sizes)?;
        if params.len() != net.params.len() {
            return Err(Error::Format(format!(
                "expected {} parameters, found {}",
                net.params.len(),
                params.len()
            )));
        }
        net.params = params;
        net.seed = seed;
        Ok(net)
    }

    pub fn default_architecture() -> Vec<usize> {
        vec![3, 64, 64, 64, 1]
    }

    pub fn layer_sizes(&self) -> &[usize] {
        &self.layer_sizes
    }
    pub fn params(&self) -> &[f64] {
        &self.params
    }
    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }
    pub fn len(&self) -> usize {
        self.params.len()
    }
    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }
    pub fn seed(&self) -> u64 {
        self.seed
    }
    pub fn max_order(&self) -> u32 {
        self.max_order
    }

    pub fn with_max_order(mut self, order: u32) -> Self {
        self.max_order = order.min(jet::MAX_ORDER as u32);
        self
    }

    pub fn is_finite(&self) -> bool {
        self.params.iter().all(|p| p.is_finite())
    }

    fn layers(&self) -> usize {
        self.layer_sizes.len() - 1
    }

    #[inline]
    fn weights(&self, l: usize) -> &[f64] {
        let (i, o) = (self.layer_sizes[l], self.layer_sizes[l + 1]);
        &self.params[self.offsets[l]..self.offsets[l] + i * o]
    }

    #[inline]
    fn biases(&self, l: usize) -> &[f64] {
        let (i, o) = (self.layer_sizes[l], self.layer_sizes[l + 1]);
        let start = self.offsets[l] + i * o;
        &self.params[start..start + o]
    }

    /// Network output for any scalar type.
    pub fn forward_generic<T: Real>(&self, input: [T; 3]) -> T {
        let mut a: Vec<T> = input.to_vec();
        for l in 0..self.layers() {
            let (n_in, n_out) = (self.layer_sizes[l], self.layer_sizes[l + 1]);
            let w = self.weights(l);
            let b = self.biases(l);
            let last = l + 1 == self.layers();
            let mut next = Vec::with_capacity(n_out);
            for o in 0..n_out {
                let row = &w[o * n_in..(o + 1) * n_in];
                let mut z = T::constant(b[o]);
                for (wi, ai) in row.iter().zip(&a) {
                    z = z + ai.scale(*wi);
                }
                next.push(if last { z } else { z.tanh() });
            }
            a = next;
        }
        a[0]
    }

    pub fn forward(&self, point: [f64; 3]) -> f64 {
        self.forward_generic(point)
    }

    /// Exact `∂^α ψ_θ` by nested forward-mode differentiation.
    pub fn eval(&self, q: DerivativeQuery) -> Result<f64> {
        let order = q.alpha.iter().sum::<u32>();
        if order > self.max_order {
            return Err(Error::Capability(format!(
                "derivative order {order} exceeds network limit {}",
                self.max_order
            )));
        }
        let mut dirs = Vec::with_capacity(order as usize);
        for (var, &k) in q.alpha.iter().enumerate() {
            dirs.extend(std::iter::repeat_n(var, k as usize));
        }
        fn run<T: Nested>(net: &MlpParams, p: [f64; 3], dirs: &[usize]) -> f64 {
            let input = [0, 1, 2].map(|v| T::seed(p[v], v, dirs));
            net.forward_generic(input).top_derivative()
        }
        type D1 = Dual<f64>;
        type D2 = Dual<D1>;
        type D3 = Dual<D2>;
        type D4 = Dual<D3>;
        Ok(match order {
            0 => run::<f64>(self, q.point, &dirs),
            1 => run::<D1>(self, q.point, &dirs),
            2 => run::<D2>(self, q.point, &dirs),
            3 => run::<D3>(self, q.point, &dirs),
            _ => run::<D4>(self, q.point, &dirs),
        })
    }

    /// Outputs at many points.
    pub fn forward_batch(&self, points: &[[f64; 3]]) -> Vec<f64> {
        points
            .par_chunks(CHUNK)
            .flat_map_iter(|chunk| self.batch_pass(chunk, None).0)
            .collect()
    }

    /// Forward pass over a chunk; with `weights`, also the gradient of
    /// `Σ weights[b] ψ(points[b])`.
    fn batch_pass(&self, points: &[[f64; 3]], weights: Option<&[f64]>) -> (Vec<f64>, Vec<f64>) {
        let nb = points.len();
        let mut acts: Vec<Vec<f64>> = Vec::with_capacity(self.layers() + 1);
        acts.push(points.iter().flat_map(|p| p.iter().copied()).collect());
        for l in 0..self.layers() {
            let (n_in, n_out) = (self.layer_sizes[l], self.layer_sizes[l + 1]);
            let w = self.weights(l);
            let b = self.biases(l);
            let last = l + 1 == self.layers();
            let prev = &acts[l];
            let mut next = vec![0.0; nb * n_out];
            for s in 0..nb {
                let a = &prev[s * n_in..(s + 1) * n_in];
                let out = &mut next[s * n_out..(s + 1) * n_out];
                for o in 0..n_out {
                    let row = &w[o * n_in..(o + 1) * n_in];
                    let z = b[o] + dot(row, a);
                    out[o] = if last { z } else { tanh_fast(z) };
                }
            }
            acts.push(next);
        }
        let values = acts.last().unwrap().clone();
        let Some(wts) = weights else {
            return (values, Vec::new());
        };
        let mut grad = vec![0.0; self.params.len()];
        let mut delta: Vec<f64> = wts.to_vec();
        for l in (0..self.layers()).rev() {
            let (n_in, n_out) = (self.layer_sizes[l], self.layer_sizes[l + 1]);
            let w = self.weights(l);
            let a = &acts[l];
            let off = self.offsets[l];
            for s in 0..nb {
                let d = &delta[s * n_out..(s + 1) * n_out];
                let ai = &a[s * n_in..(s + 1) * n_in];
                for o in 0..n_out {
                    if d[o] == 0.0 {
                        continue;
                    }
                    let g = &mut grad[off + o * n_in..off + (o + 1) * n_in];
                    for (gi, x) in g.iter_mut().zip(ai) {
                        *gi += d[o] * x;
                    }
                    grad[off + n_in * n_out + o] += d[o];
                }
            }
            if l == 0 {
                break;
            }
            let mut prev = vec![0.0; nb * n_in];
            for s in 0..nb {
                let d = &delta[s * n_out..(s + 1) * n_out];
                let p = &mut prev[s * n_in..(s + 1) * n_in];
                for o in 0..n_out {
                    let row = &w[o * n_in..(o + 1) * n_in];
                    for (pi, wi) in p.iter_mut().zip(row) {
                        *pi += wi * d[o];
                    }
                }
                let y = &a[s * n_in..(s + 1) * n_in];
                for (pi, yi) in p.iter_mut().zip(y) {
                    *pi *= 1.0 - yi * yi;
                }
            }
            delta = prev;
        }
        (values, grad)
    }

    /// Taylor jet of `ψ_θ` at `point` to the given order.
    pub fn jet(&self, point: [f64; 3], order: usize) -> JetValues {
        JetValues {
            order,
            coeffs: self.jet_tape(point, order).pop().unwrap(),
        }
    }

    fn jet_tape(&self, point: [f64; 3], order: usize) -> Vec<Vec<f64>> {
        let sp = JetSpace::get(order);
        let j = sp.len();
        let mut input = vec![0.0; 3 * j];
        for v in 0..3 {
            input[v * j] = point[v];
            if order > 0 {
                input[v * j + 1 + v] = 1.0;
            }
        }
        let mut tape = vec![input];
        let mut z = vec![0.0; j];
        for l in 0..self.layers() {
            let (n_in, n_out) = (self.layer_sizes[l], self.layer_sizes[l + 1]);
            let w = self.weights(l);
            let b = self.biases(l);
            let last = l + 1 == self.layers();
            let a = tape.last().unwrap();
            let mut next = vec![0.0; n_out * j];
            for o in 0..n_out {
                z.iter_mut().for_each(|v| *v = 0.0);
                z[0] = b[o];
                for i in 0..n_in {
                    let wi = w[o * n_in + i];
                    for (zk, ak) in z.iter_mut().zip(&a[i * j..(i + 1) * j]) {
                        *zk += wi * ak;
                    }
                }
                if last {
                    next[o * j..(o + 1) * j].copy_from_slice(&z);
                } else {
                    sp.tanh(&z, &mut next[o * j..(o + 1) * j]);
                }
            }
            tape.push(next);
        }
        tape
    }

    /// Adds the gradient of `Σ_β out_bar[β] c_β` to `grad`.
    fn jet_backward(&self, tape: &[Vec<f64>], order: usize, out_bar: &[f64], grad: &mut [f64]) {
        let sp = JetSpace::get(order);
        let j = sp.len();
        let mut zbar: Vec<f64> = out_bar.to_vec();
        let mut slope = vec![0.0; j];
        for l in (0..self.layers()).rev() {
            let (n_in, n_out) = (self.layer_sizes[l], self.layer_sizes[l + 1]);
            let w = self.weights(l);
            let a = &tape[l];
            let off = self.offsets[l];
            for o in 0..n_out {
                let zb = &zbar[o * j..(o + 1) * j];
                for i in 0..n_in {
                    grad[off + o * n_in + i] += zb
                        .iter()
                        .zip(&a[i * j..(i + 1) * j])
                        .map(|(x, y)| x * y)
                        .sum::<f64>();
                }
                grad[off + n_in * n_out + o] += zb[0];
            }
            if l == 0 {
                break;
            }
            let mut abar = vec![0.0; n_in * j];
            for o in 0..n_out {
                let zb = &zbar[o * j..(o + 1) * j];
                for i in 0..n_in {
                    let wi = w[o * n_in + i];
                    for (ab, z) in abar[i * j..(i + 1) * j].iter_mut().zip(zb) {
                        *ab += wi * z;
                    }
                }
            }
            let mut prev = vec![0.0; n_in * j];
            for i in 0..n_in {
                sp.tanh_slope(&a[i * j..(i + 1) * j], &mut slope);
                sp.mul_transpose_add(&slope, &abar[i * j..(i + 1) * j], &mut prev[i * j..(i + 1) * j]);
            }
            zbar = prev;
        }
    }

    /// Gradient over all parameters of `Σ_s weight_s · ∂^{α_s} ψ_θ(point_s)`.
    pub fn param_gradient(&self, seeds: &[DerivativeSeed]) -> Vec<f64> {
        // group by point, in first-appearance order
        let mut index: HashMap<[u64; 3], usize> = HashMap::new();
        let mut groups: Vec<([f64; 3], Vec<([u32; 3], f64)>)> = Vec::new();
        for s in seeds {
            let key = s.point.map(f64::to_bits);
            let g = *index.entry(key).or_insert_with(|| {
                groups.push((s.point, Vec::new()));
                groups.len() - 1
            });
            groups[g].1.push((s.alpha, s.weight));
        }
        let (plain, jets): (Vec<_>, Vec<_>) = groups
            .into_iter()
            .partition(|(_, terms)| terms.iter().all(|(a, _)| *a == [0, 0, 0]));

        let points: Vec<[f64; 3]> = plain.iter().map(|g| g.0).collect();
        let weights: Vec<f64> = plain
            .iter()
            .map(|g| g.1.iter().map(|t| t.1).sum())
            .collect();
        let mut grad = vec![0.0; self.params.len()];
        let partials: Vec<Vec<f64>> = points
            .par_chunks(CHUNK)
            .zip(weights.par_chunks(CHUNK))
            .map(|(p, w)| self.batch_pass(p, Some(w)).1)
            .collect();
        let jet_partials: Vec<Vec<f64>> = jets
            .par_chunks(CHUNK / 16)
            .map(|chunk| {
                let mut g = vec![0.0; self.params.len()];
                for (point, terms) in chunk {
                    let order = terms
                        .iter()
                        .map(|(a, _)| a.iter().sum::<u32>() as usize)
                        .max()
                        .unwrap();
                    let sp = JetSpace::get(order);
                    let mut bar = vec![0.0; sp.len()];
                    for (alpha, w) in terms {
                        let k = sp.index(*alpha).expect("multi-index within jet order");
                        bar[k] += w * sp.factorial[k];
                    }
                    let tape = self.jet_tape(*point, order);
                    self.jet_backward(&tape, order, &bar, &mut g);
                }
                g
            })
            .collect();
        for p in partials.iter().chain(&jet_partials) {
            for (g, v) in grad.iter_mut().zip(p) {
                *g += v;
            }
        }
        grad
    }
}

/// Jet of the network output.
#[derive(Debug, Clone)]
pub struct JetValues {
    order: usize,
    coeffs: Vec<f64>,
}

impl JetValues {
    /// `∂^α ψ_θ`, zero-cost lookup; panics beyond the jet order.
    pub fn d(&self, alpha: [u32; 3]) -> f64 {
        let sp = JetSpace::get(self.order);
        let k = sp.index(alpha).expect("multi-index within jet order");
        self.coeffs[k] * sp.factorial[k]
    }
}
