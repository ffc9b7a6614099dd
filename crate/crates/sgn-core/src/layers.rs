//! Trainable layer wrappers around the tensor primitives. Each layer owns its
//! parameters, caches what its hand-written backward pass needs, and
//! accumulates parameter gradients on the way back.
//!
//! Batches are slices of per-sample `(T, C, V)` tensors; batch statistics
//! (batch norm) couple samples, everything else is sample-parallel.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::Result;
use crate::lif::{lif_sequence_trace, lif_sequence_vjp, LifParams, LifTrace};
use crate::tensor::{BnMode, DenseTensor, Mat, Param, SpikeTensor};

/// Uniform init with the 1/sqrt(fan_in) bound.
fn init_uniform(rng: &mut ChaCha8Rng, n: usize, fan_in: usize) -> Vec<f64> {
    let bound = 1.0 / (fan_in as f64).sqrt();
    (0..n).map(|_| rng.gen_range(-bound..bound)).collect()
}

pub fn spikes_to_dense(spikes: Vec<SpikeTensor>) -> Vec<DenseTensor> {
    spikes.into_iter().map(SpikeTensor::into_dense).collect()
}

// ── pointwise convolution layer ──────────────────────────────────────────

/// 1x1 convolution along channels, optionally grouped.
pub struct Conv1x1 {
    pub name: String,
    pub weight: Param,
    pub bias: Option<Param>,
    pub c_in: usize,
    pub c_out: usize,
    pub groups: usize,
    /// Mean nonzero fraction of the last forward batch's input; the event
    /// rate this layer would see on spike-driven hardware.
    pub last_input_rate: f64,
    cache_x: Vec<DenseTensor>,
}

impl Conv1x1 {
    pub fn new(
        name: impl Into<String>,
        c_in: usize,
        c_out: usize,
        groups: usize,
        with_bias: bool,
        rng: &mut ChaCha8Rng,
    ) -> Self {
        assert!(c_in % groups == 0 && c_out % groups == 0, "groups must divide channels");
        let name = name.into();
        let fan_in = c_in / groups;
        let weight = Param::new(
            format!("{name}.weight"),
            vec![c_out, fan_in],
            init_uniform(rng, c_out * fan_in, fan_in),
            true,
        );
        let bias = with_bias.then(|| {
            Param::new(format!("{name}.bias"), vec![c_out], vec![0.0; c_out], true)
        });
        Conv1x1 { name, weight, bias, c_in, c_out, groups, last_input_rate: 0.0, cache_x: Vec::new() }
    }

    /// Identity mapping for tests; requires `c_in == c_out`.
    pub fn identity(name: impl Into<String>, channels: usize) -> Self {
        let name = name.into();
        let eye = Mat::identity(channels);
        Conv1x1 {
            weight: Param::new(format!("{name}.weight"), vec![channels, channels], eye.data, true),
            bias: None,
            c_in: channels,
            c_out: channels,
            groups: 1,
            name,
            last_input_rate: 0.0,
            cache_x: Vec::new(),
        }
    }

    fn fan_in(&self) -> usize {
        self.c_in / self.groups
    }

    fn apply(&self, x: &DenseTensor) -> DenseTensor {
        let (t_dim, c_in, v_dim) = x.shape();
        assert_eq!(c_in, self.c_in, "{}: channel mismatch", self.name);
        // spike-valued inputs are mostly zero; route them through the
        // gather/scatter kernel instead of the dense one
        if self.groups == 1 && x.nonzero_fraction() < 0.25 {
            return self.apply_sparse(x);
        }
        let fan_in = self.fan_in();
        let per_group_out = self.c_out / self.groups;
        let mut out = DenseTensor::zeros(t_dim, self.c_out, v_dim);
        for t in 0..t_dim {
            for co in 0..self.c_out {
                let g = co / per_group_out;
                let wrow = &self.weight.value[co * fan_in..(co + 1) * fan_in];
                let dst = out.row_mut(t, co);
                if let Some(b) = &self.bias {
                    let bv = b.value[co];
                    dst.iter_mut().for_each(|d| *d = bv);
                }
                for (i, &w) in wrow.iter().enumerate() {
                    if w == 0.0 {
                        continue;
                    }
                    let src = x.row(t, g * fan_in + i);
                    for (d, &xv) in dst.iter_mut().zip(src) {
                        *d += w * xv;
                    }
                }
            }
        }
        out
    }

    /// Event-driven kernel: accumulate a weight column per nonzero input into
    /// a joint-major scratch, then transpose into the output layout.
    fn apply_sparse(&self, x: &DenseTensor) -> DenseTensor {
        let (t_dim, c_in, v_dim) = x.shape();
        let c_out = self.c_out;
        // weight transposed to (c_in, c_out) so columns are contiguous
        let mut wt = vec![0.0; c_in * c_out];
        for co in 0..c_out {
            for ci in 0..c_in {
                wt[ci * c_out + co] = self.weight.value[co * c_in + ci];
            }
        }
        let mut out = DenseTensor::zeros(t_dim, c_out, v_dim);
        let mut scratch = vec![0.0; v_dim * c_out];
        for t in 0..t_dim {
            scratch.iter_mut().for_each(|s| *s = 0.0);
            for ci in 0..c_in {
                let src = x.row(t, ci);
                let wrow = &wt[ci * c_out..(ci + 1) * c_out];
                for (v, &xv) in src.iter().enumerate() {
                    if xv == 0.0 {
                        continue;
                    }
                    let dst = &mut scratch[v * c_out..(v + 1) * c_out];
                    for (d, &w) in dst.iter_mut().zip(wrow) {
                        *d += xv * w;
                    }
                }
            }
            for co in 0..c_out {
                let bv = self.bias.as_ref().map_or(0.0, |b| b.value[co]);
                let dst = out.row_mut(t, co);
                for (v, d) in dst.iter_mut().enumerate() {
                    *d = scratch[v * c_out + co] + bv;
                }
            }
        }
        out
    }

    pub fn forward_batch(&mut self, xs: &[DenseTensor]) -> Vec<DenseTensor> {
        self.last_input_rate =
            xs.iter().map(DenseTensor::nonzero_fraction).sum::<f64>() / xs.len() as f64;
        let out: Vec<DenseTensor> = xs.par_iter().map(|x| self.apply(x)).collect();
        self.cache_x = xs.to_vec();
        out
    }

    fn backward_one(&self, x: &DenseTensor, g: &DenseTensor) -> (DenseTensor, Vec<f64>, Vec<f64>) {
        let fan_in = self.fan_in();
        let per_group_out = self.c_out / self.groups;
        let (t_dim, _, v_dim) = x.shape();
        let mut dx = DenseTensor::zeros(t_dim, self.c_in, v_dim);
        let mut dw = vec![0.0; self.weight.len()];
        let mut db = vec![0.0; self.c_out];
        let sparse = self.groups == 1 && x.nonzero_fraction() < 0.25;
        if sparse {
            // dw via nonzero inputs against a joint-major transposed cotangent
            let c_out = self.c_out;
            let mut gt = vec![0.0; v_dim * c_out];
            for t in 0..t_dim {
                for co in 0..c_out {
                    let grow = g.row(t, co);
                    db[co] += grow.iter().sum::<f64>();
                    for (v, &gv) in grow.iter().enumerate() {
                        gt[v * c_out + co] = gv;
                    }
                }
                for ci in 0..self.c_in {
                    let src = x.row(t, ci);
                    for (v, &xv) in src.iter().enumerate() {
                        if xv == 0.0 {
                            continue;
                        }
                        let grow = &gt[v * c_out..(v + 1) * c_out];
                        for co in 0..c_out {
                            dw[co * fan_in + ci] += xv * grow[co];
                        }
                    }
                }
            }
        }
        for t in 0..t_dim {
            for co in 0..self.c_out {
                let gr = co / per_group_out;
                let grow = g.row(t, co);
                if !sparse {
                    db[co] += grow.iter().sum::<f64>();
                }
                let wrow = &self.weight.value[co * fan_in..(co + 1) * fan_in];
                for i in 0..fan_in {
                    let ci = gr * fan_in + i;
                    if !sparse {
                        let src = x.row(t, ci);
                        let mut acc = 0.0;
                        for (a, b) in grow.iter().zip(src) {
                            acc += a * b;
                        }
                        dw[co * fan_in + i] += acc;
                    }
                    let w = wrow[i];
                    if w != 0.0 {
                        let dst = dx.row_mut(t, ci);
                        for (d, &gv) in dst.iter_mut().zip(grow) {
                            *d += w * gv;
                        }
                    }
                }
            }
        }
        (dx, dw, db)
    }

    /// Accumulates weight/bias gradients and returns input gradients.
    pub fn backward_batch(&mut self, grads: &[DenseTensor]) -> Vec<DenseTensor> {
        assert_eq!(grads.len(), self.cache_x.len(), "{}: backward without forward", self.name);
        let results: Vec<(DenseTensor, Vec<f64>, Vec<f64>)> = self
            .cache_x
            .par_iter()
            .zip(grads.par_iter())
            .map(|(x, g)| self.backward_one(x, g))
            .collect();
        let mut dxs = Vec::with_capacity(results.len());
        for (dx, dw, db) in results {
            for (acc, d) in self.weight.grad.iter_mut().zip(&dw) {
                *acc += *d;
            }
            if let Some(b) = &mut self.bias {
                for (acc, d) in b.grad.iter_mut().zip(&db) {
                    *acc += *d;
                }
            }
            dxs.push(dx);
        }
        dxs
    }

    pub fn visit_params(&mut self, f: &mut dyn FnMut(&mut Param)) {
        f(&mut self.weight);
        if let Some(b) = &mut self.bias {
            f(b);
        }
    }

    pub fn param_count(&self) -> usize {
        self.weight.len() + self.bias.as_ref().map_or(0, Param::len)
    }
}

// ── batch normalization layer ────────────────────────────────────────────

struct BnCache {
    xhat: Vec<DenseTensor>,
    invstd: Vec<f64>,
    mode: BnMode,
}

pub struct BatchNorm {
    pub name: String,
    pub gamma: Param,
    pub beta: Param,
    pub running_mean: Vec<f64>,
    pub running_var: Vec<f64>,
    pub momentum: f64,
    pub eps: f64,
    cache: Option<BnCache>,
}

impl BatchNorm {
    pub fn new(name: impl Into<String>, channels: usize) -> Self {
        let name = name.into();
        BatchNorm {
            gamma: Param::new(format!("{name}.gamma"), vec![channels], vec![1.0; channels], false),
            beta: Param::new(format!("{name}.beta"), vec![channels], vec![0.0; channels], false),
            running_mean: vec![0.0; channels],
            running_var: vec![1.0; channels],
            momentum: 0.1,
            eps: 1e-5,
            name,
            cache: None,
        }
    }

    pub fn channels(&self) -> usize {
        self.gamma.len()
    }

    pub fn forward_batch(&mut self, xs: &[DenseTensor], mode: BnMode) -> Vec<DenseTensor> {
        let (t_dim, c_dim, v_dim) = xs[0].shape();
        assert_eq!(c_dim, self.channels(), "{}: channel mismatch", self.name);
        let n_red = (xs.len() * t_dim * v_dim) as f64;

        let (mean, var) = match mode {
            BnMode::Eval => (self.running_mean.clone(), self.running_var.clone()),
            BnMode::Train => {
                let mut mean = vec![0.0; c_dim];
                let mut var = vec![0.0; c_dim];
                for x in xs {
                    for t in 0..t_dim {
                        for c in 0..c_dim {
                            mean[c] += x.row(t, c).iter().sum::<f64>();
                        }
                    }
                }
                mean.iter_mut().for_each(|m| *m /= n_red);
                for x in xs {
                    for t in 0..t_dim {
                        for c in 0..c_dim {
                            let m = mean[c];
                            var[c] += x.row(t, c).iter().map(|&xv| (xv - m) * (xv - m)).sum::<f64>();
                        }
                    }
                }
                var.iter_mut().for_each(|s| *s /= n_red);
                let unbias = if n_red > 1.0 { n_red / (n_red - 1.0) } else { 1.0 };
                for c in 0..c_dim {
                    self.running_mean[c] =
                        (1.0 - self.momentum) * self.running_mean[c] + self.momentum * mean[c];
                    self.running_var[c] = (1.0 - self.momentum) * self.running_var[c]
                        + self.momentum * var[c] * unbias;
                }
                (mean, var)
            }
        };

        let invstd: Vec<f64> = var.iter().map(|&s| 1.0 / (s + self.eps).sqrt()).collect();
        let mut xhats = Vec::with_capacity(xs.len());
        let mut outs = Vec::with_capacity(xs.len());
        for x in xs {
            let mut xhat = DenseTensor::zeros(t_dim, c_dim, v_dim);
            let mut out = DenseTensor::zeros(t_dim, c_dim, v_dim);
            for t in 0..t_dim {
                for c in 0..c_dim {
                    let (m, inv) = (mean[c], invstd[c]);
                    let (g, b) = (self.gamma.value[c], self.beta.value[c]);
                    let src = x.row(t, c);
                    let xh = xhat.row_mut(t, c);
                    for (h, &xv) in xh.iter_mut().zip(src) {
                        *h = (xv - m) * inv;
                    }
                    let dst = out.row_mut(t, c);
                    for (d, &h) in dst.iter_mut().zip(xhat.row(t, c)) {
                        *d = h * g + b;
                    }
                }
            }
            xhats.push(xhat);
            outs.push(out);
        }
        self.cache = Some(BnCache { xhat: xhats, invstd, mode });
        outs
    }

    pub fn backward_batch(&mut self, grads: &[DenseTensor]) -> Vec<DenseTensor> {
        let cache = self.cache.as_ref().expect("backward without forward");
        let (t_dim, c_dim, v_dim) = grads[0].shape();
        let n_red = (grads.len() * t_dim * v_dim) as f64;

        // per-channel reductions
        let mut sum_g = vec![0.0; c_dim];
        let mut sum_gx = vec![0.0; c_dim];
        for (g, xhat) in grads.iter().zip(&cache.xhat) {
            for t in 0..t_dim {
                for c in 0..c_dim {
                    let grow = g.row(t, c);
                    let hrow = xhat.row(t, c);
                    sum_g[c] += grow.iter().sum::<f64>();
                    sum_gx[c] += grow.iter().zip(hrow).map(|(a, b)| a * b).sum::<f64>();
                }
            }
        }
        for c in 0..c_dim {
            self.beta.grad[c] += sum_g[c];
            self.gamma.grad[c] += sum_gx[c];
        }

        let mut dxs = Vec::with_capacity(grads.len());
        for (g, xhat) in grads.iter().zip(&cache.xhat) {
            let mut dx = DenseTensor::zeros(t_dim, c_dim, v_dim);
            for t in 0..t_dim {
                for c in 0..c_dim {
                    let gam = self.gamma.value[c];
                    let inv = cache.invstd[c];
                    let grow = g.row(t, c);
                    let hrow = xhat.row(t, c);
                    let dst = dx.row_mut(t, c);
                    match cache.mode {
                        BnMode::Eval => {
                            for (d, &gv) in dst.iter_mut().zip(grow) {
                                *d = gv * gam * inv;
                            }
                        }
                        BnMode::Train => {
                            for ((d, &gv), &h) in dst.iter_mut().zip(grow).zip(hrow) {
                                *d = gam * inv
                                    * (gv - sum_g[c] / n_red - h * sum_gx[c] / n_red);
                            }
                        }
                    }
                }
            }
            dxs.push(dx);
        }
        dxs
    }

    pub fn visit_params(&mut self, f: &mut dyn FnMut(&mut Param)) {
        f(&mut self.gamma);
        f(&mut self.beta);
    }

    pub fn param_count(&self) -> usize {
        self.gamma.len() + self.beta.len()
    }
}

// ── spiking activation layer ─────────────────────────────────────────────

pub struct LifLayer {
    pub name: String,
    pub params: LifParams,
    traces: Vec<LifTrace>,
    /// Mean firing rate over the last forward batch.
    pub last_rate: f64,
}

impl LifLayer {
    pub fn new(name: impl Into<String>, params: LifParams) -> Self {
        LifLayer { name: name.into(), params, traces: Vec::new(), last_rate: 0.0 }
    }

    pub fn forward_batch(&mut self, xs: &[DenseTensor]) -> Result<Vec<SpikeTensor>> {
        let traces: Vec<LifTrace> = xs
            .par_iter()
            .map(|x| lif_sequence_trace(&self.params, x))
            .collect::<Result<Vec<_>>>()?;
        let spikes: Vec<SpikeTensor> = traces.iter().map(|tr| tr.spikes.clone()).collect();
        self.last_rate = if spikes.is_empty() {
            0.0
        } else {
            spikes.iter().map(SpikeTensor::firing_rate).sum::<f64>() / spikes.len() as f64
        };
        self.traces = traces;
        Ok(spikes)
    }

    pub fn backward_batch(&mut self, grads: &[DenseTensor]) -> Vec<DenseTensor> {
        assert_eq!(grads.len(), self.traces.len(), "{}: backward without forward", self.name);
        self.traces
            .par_iter()
            .zip(grads.par_iter())
            .map(|(tr, g)| lif_sequence_vjp(&self.params, tr, g))
            .collect()
    }
}

// ── conv + bn (+ lif) composites ─────────────────────────────────────────

/// Conv followed by batch norm; the ubiquitous projection unit.
pub struct ConvBn {
    pub conv: Conv1x1,
    pub bn: BatchNorm,
}

impl ConvBn {
    pub fn new(name: &str, c_in: usize, c_out: usize, rng: &mut ChaCha8Rng) -> Self {
        ConvBn {
            conv: Conv1x1::new(format!("{name}.conv"), c_in, c_out, 1, true, rng),
            bn: BatchNorm::new(format!("{name}.bn"), c_out),
        }
    }

    pub fn forward_batch(&mut self, xs: &[DenseTensor], mode: BnMode) -> Vec<DenseTensor> {
        let h = self.conv.forward_batch(xs);
        self.bn.forward_batch(&h, mode)
    }

    pub fn backward_batch(&mut self, grads: &[DenseTensor]) -> Vec<DenseTensor> {
        let g = self.bn.backward_batch(grads);
        self.conv.backward_batch(&g)
    }

    pub fn visit_params(&mut self, f: &mut dyn FnMut(&mut Param)) {
        self.conv.visit_params(f);
        self.bn.visit_params(f);
    }

    pub fn param_count(&self) -> usize {
        self.conv.param_count() + self.bn.param_count()
    }
}

/// Conv, batch norm, then a spiking stage: the standard projection pipeline.
pub struct ConvBnLif {
    pub conv: Conv1x1,
    pub bn: BatchNorm,
    pub lif: LifLayer,
}

impl ConvBnLif {
    pub fn new(name: &str, c_in: usize, c_out: usize, lif: LifParams, rng: &mut ChaCha8Rng) -> Self {
        ConvBnLif {
            conv: Conv1x1::new(format!("{name}.conv"), c_in, c_out, 1, true, rng),
            bn: BatchNorm::new(format!("{name}.bn"), c_out),
            lif: LifLayer::new(format!("{name}.sn"), lif),
        }
    }

    pub fn forward_batch(&mut self, xs: &[DenseTensor], mode: BnMode) -> Result<Vec<SpikeTensor>> {
        let h = self.conv.forward_batch(xs);
        let h = self.bn.forward_batch(&h, mode);
        self.lif.forward_batch(&h)
    }

    pub fn backward_batch(&mut self, grads: &[DenseTensor]) -> Vec<DenseTensor> {
        let g = self.lif.backward_batch(grads);
        let g = self.bn.backward_batch(&g);
        self.conv.backward_batch(&g)
    }

    pub fn visit_params(&mut self, f: &mut dyn FnMut(&mut Param)) {
        self.conv.visit_params(f);
        self.bn.visit_params(f);
    }

    pub fn param_count(&self) -> usize {
        self.conv.param_count() + self.bn.param_count()
    }
}

// ── fully connected layer on pooled vectors ──────────────────────────────

pub struct Fc {
    pub name: String,
    pub weight: Param,
    pub bias: Param,
    pub c_in: usize,
    pub c_out: usize,
    cache_x: Vec<Vec<f64>>,
}

impl Fc {
    pub fn new(name: impl Into<String>, c_in: usize, c_out: usize, rng: &mut ChaCha8Rng) -> Self {
        let name = name.into();
        Fc {
            weight: Param::new(
                format!("{name}.weight"),
                vec![c_out, c_in],
                init_uniform(rng, c_out * c_in, c_in),
                true,
            ),
            bias: Param::new(format!("{name}.bias"), vec![c_out], vec![0.0; c_out], true),
            c_in,
            c_out,
            name,
            cache_x: Vec::new(),
        }
    }

    pub fn forward_batch(&mut self, xs: &[Vec<f64>]) -> Vec<Vec<f64>> {
        let out = xs
            .iter()
            .map(|x| {
                assert_eq!(x.len(), self.c_in, "{}: input size mismatch", self.name);
                (0..self.c_out)
                    .map(|o| {
                        let wrow = &self.weight.value[o * self.c_in..(o + 1) * self.c_in];
                        self.bias.value[o]
                            + wrow.iter().zip(x).map(|(w, xv)| w * xv).sum::<f64>()
                    })
                    .collect()
            })
            .collect();
        self.cache_x = xs.to_vec();
        out
    }

    pub fn backward_batch(&mut self, grads: &[Vec<f64>]) -> Vec<Vec<f64>> {
        let mut dxs = Vec::with_capacity(grads.len());
        for (x, g) in self.cache_x.iter().zip(grads) {
            let mut dx = vec![0.0; self.c_in];
            for o in 0..self.c_out {
                self.bias.grad[o] += g[o];
                let wrow = &self.weight.value[o * self.c_in..(o + 1) * self.c_in];
                let wgrad = &mut self.weight.grad[o * self.c_in..(o + 1) * self.c_in];
                for i in 0..self.c_in {
                    wgrad[i] += g[o] * x[i];
                    dx[i] += wrow[i] * g[o];
                }
            }
            dxs.push(dx);
        }
        dxs
    }

    pub fn visit_params(&mut self, f: &mut dyn FnMut(&mut Param)) {
        f(&mut self.weight);
        f(&mut self.bias);
    }

    pub fn param_count(&self) -> usize {
        self.weight.len() + self.bias.len()
    }
}

// ── dropout on pooled vectors ────────────────────────────────────────────

pub struct Dropout {
    pub rate: f64,
    masks: Vec<Vec<f64>>,
}

impl Dropout {
    pub fn new(rate: f64) -> Self {
        assert!((0.0..1.0).contains(&rate), "dropout rate must be in [0, 1)");
        Dropout { rate, masks: Vec::new() }
    }

    pub fn forward_batch(
        &mut self,
        xs: &[Vec<f64>],
        mode: BnMode,
        rng: &mut ChaCha8Rng,
    ) -> Vec<Vec<f64>> {
        if mode == BnMode::Eval || self.rate == 0.0 {
            self.masks.clear();
            return xs.to_vec();
        }
        let keep = 1.0 - self.rate;
        self.masks = xs
            .iter()
            .map(|x| {
                x.iter()
                    .map(|_| if rng.gen::<f64>() < keep { 1.0 / keep } else { 0.0 })
                    .collect()
            })
            .collect();
        xs.iter()
            .zip(&self.masks)
            .map(|(x, m)| x.iter().zip(m).map(|(a, b)| a * b).collect())
            .collect()
    }

    pub fn backward_batch(&mut self, grads: &[Vec<f64>]) -> Vec<Vec<f64>> {
        if self.masks.is_empty() {
            return grads.to_vec();
        }
        grads
            .iter()
            .zip(&self.masks)
            .map(|(g, m)| g.iter().zip(m).map(|(a, b)| a * b).collect())
            .collect()
    }
}

// ── pooling ──────────────────────────────────────────────────────────────

/// Global average pool over frames and joints, leaving a per-channel vector.
pub fn global_avg_pool(x: &DenseTensor) -> Vec<f64> {
    let (t_dim, c_dim, v_dim) = x.shape();
    let norm = 1.0 / (t_dim * v_dim) as f64;
    (0..c_dim)
        .map(|c| (0..t_dim).map(|t| x.row(t, c).iter().sum::<f64>()).sum::<f64>() * norm)
        .collect()
}

/// Adjoint of [`global_avg_pool`].
pub fn global_avg_pool_vjp(grad: &[f64], t_dim: usize, v_dim: usize) -> DenseTensor {
    let c_dim = grad.len();
    let norm = 1.0 / (t_dim * v_dim) as f64;
    DenseTensor::from_fn(t_dim, c_dim, v_dim, |_, c, _| grad[c] * norm)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gradcheck::finite_diff_check;
    use approx::assert_relative_eq;
    use rand::SeedableRng;

    fn rng() -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(7)
    }

    fn rand_vals(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
        (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()
    }

    #[test]
    fn grouped_conv_keeps_groups_separate() {
        let mut r = rng();
        let mut conv = Conv1x1::new("g", 4, 4, 2, false, &mut r);
        // weight rows are per-group; set to 1s so each output sums its group.
        conv.weight.value.iter_mut().for_each(|w| *w = 1.0);
        let x = DenseTensor::from_fn(1, 4, 1, |_, c, _| (c + 1) as f64);
        let y = conv.forward_batch(&[x]).pop().unwrap();
        // groups: (1+2) for outputs 0,1 and (3+4) for outputs 2,3
        assert_eq!(y.get(0, 0, 0), 3.0);
        assert_eq!(y.get(0, 1, 0), 3.0);
        assert_eq!(y.get(0, 2, 0), 7.0);
        assert_eq!(y.get(0, 3, 0), 7.0);
    }

    #[test]
    fn conv_layer_gradient_matches_finite_differences() {
        let mut r = rng();
        let conv = Conv1x1::new("c", 3, 2, 1, true, &mut r);
        let (t, v) = (2, 3);
        let weight = conv.weight.value.clone();
        let bias = conv.bias.as_ref().unwrap().value.clone();
        let op = (
            |x: &[f64]| {
                let mut c2 = Conv1x1::new("c2", 3, 2, 1, true, &mut rng());
                c2.weight.value = weight.clone();
                c2.bias.as_mut().unwrap().value = bias.clone();
                let xt = DenseTensor::from_vec(t, 3, v, x.to_vec()).unwrap();
                c2.forward_batch(&[xt]).pop().unwrap().data().to_vec()
            },
            |x: &[f64], u: &[f64]| {
                let mut c2 = Conv1x1::new("c2", 3, 2, 1, true, &mut rng());
                c2.weight.value = weight.clone();
                c2.bias.as_mut().unwrap().value = bias.clone();
                let xt = DenseTensor::from_vec(t, 3, v, x.to_vec()).unwrap();
                c2.forward_batch(&[xt]);
                let g = DenseTensor::from_vec(t, 2, v, u.to_vec()).unwrap();
                c2.backward_batch(&[g]).pop().unwrap().data().to_vec()
            },
        );
        let mut r2 = rng();
        let x = rand_vals(&mut r2, t * 3 * v);
        let u = rand_vals(&mut r2, t * 2 * v);
        let err = finite_diff_check(&op, &x, &u, 1e-5).unwrap();
        assert!(err < 1e-6, "conv layer gradient error {err}");
    }

    #[test]
    fn bn_train_gradient_matches_finite_differences() {
        let (t, c, v) = (2, 2, 3);
        let make = || {
            let mut bn = BatchNorm::new("bn", c);
            bn.gamma.value = vec![1.3, 0.7];
            bn.beta.value = vec![0.1, -0.2];
            bn
        };
        let op = (
            move |x: &[f64]| {
                let mut bn = make();
                let xt = DenseTensor::from_vec(t, c, v, x.to_vec()).unwrap();
                bn.forward_batch(&[xt], BnMode::Train).pop().unwrap().data().to_vec()
            },
            move |x: &[f64], u: &[f64]| {
                let mut bn = make();
                let xt = DenseTensor::from_vec(t, c, v, x.to_vec()).unwrap();
                bn.forward_batch(&[xt], BnMode::Train);
                let g = DenseTensor::from_vec(t, c, v, u.to_vec()).unwrap();
                bn.backward_batch(&[g]).pop().unwrap().data().to_vec()
            },
        );
        let mut r = rng();
        let x = rand_vals(&mut r, t * c * v);
        let u = rand_vals(&mut r, t * c * v);
        let err = finite_diff_check(&op, &x, &u, 1e-5).unwrap();
        assert!(err < 1e-5, "bn train gradient error {err}");
    }

    #[test]
    fn bn_eval_gradient_is_exact_affine() {
        let (t, c, v) = (2, 2, 2);
        let op = (
            move |x: &[f64]| {
                let mut bn = BatchNorm::new("bn", c);
                bn.gamma.value = vec![2.0, 0.5];
                let xt = DenseTensor::from_vec(t, c, v, x.to_vec()).unwrap();
                bn.forward_batch(&[xt], BnMode::Eval).pop().unwrap().data().to_vec()
            },
            move |x: &[f64], u: &[f64]| {
                let mut bn = BatchNorm::new("bn", c);
                bn.gamma.value = vec![2.0, 0.5];
                let xt = DenseTensor::from_vec(t, c, v, x.to_vec()).unwrap();
                bn.forward_batch(&[xt], BnMode::Eval);
                let g = DenseTensor::from_vec(t, c, v, u.to_vec()).unwrap();
                bn.backward_batch(&[g]).pop().unwrap().data().to_vec()
            },
        );
        let mut r = rng();
        let x = rand_vals(&mut r, t * c * v);
        let u = rand_vals(&mut r, t * c * v);
        let err = finite_diff_check(&op, &x, &u, 1e-5).unwrap();
        assert!(err < 1e-6, "bn eval gradient error {err}");
    }

    #[test]
    fn fc_gradient_matches_finite_differences() {
        let mut r = rng();
        let fc0 = Fc::new("fc", 4, 3, &mut r);
        let weight = fc0.weight.value.clone();
        let op = (
            |x: &[f64]| {
                let mut fc = Fc::new("fc", 4, 3, &mut rng());
                fc.weight.value = weight.clone();
                fc.forward_batch(&[x.to_vec()]).pop().unwrap()
            },
            |x: &[f64], u: &[f64]| {
                let mut fc = Fc::new("fc", 4, 3, &mut rng());
                fc.weight.value = weight.clone();
                fc.forward_batch(&[x.to_vec()]);
                fc.backward_batch(&[u.to_vec()]).pop().unwrap()
            },
        );
        let mut r2 = rng();
        let x = rand_vals(&mut r2, 4);
        let u = rand_vals(&mut r2, 3);
        let err = finite_diff_check(&op, &x, &u, 1e-5).unwrap();
        assert!(err < 1e-6, "fc gradient error {err}");
    }

    #[test]
    fn gap_and_vjp_are_adjoint() {
        let x = DenseTensor::from_fn(2, 3, 2, |t, c, v| (t + c + v) as f64 * 0.5);
        let pooled = global_avg_pool(&x);
        assert_eq!(pooled.len(), 3);
        assert_relative_eq!(pooled[0], (0.0 + 0.5 + 0.5 + 1.0) / 4.0);
        let g = vec![1.0, 2.0, 3.0];
        let back = global_avg_pool_vjp(&g, 2, 2);
        assert_relative_eq!(back.get(0, 1, 0), 0.5);
        assert_relative_eq!(back.get(1, 2, 1), 0.75);
    }

    #[test]
    fn dropout_eval_is_identity_and_train_scales() {
        let mut d = Dropout::new(0.5);
        let mut r = rng();
        let x = vec![vec![1.0, 2.0, 3.0, 4.0]];
        let y = d.forward_batch(&x, BnMode::Eval, &mut r);
        assert_eq!(y, x);
        let y = d.forward_batch(&x, BnMode::Train, &mut r);
        for (a, b) in y[0].iter().zip(&x[0]) {
            assert!(*a == 0.0 || (*a - b * 2.0).abs() < 1e-12);
        }
    }
}
