//! Dense tensor substrate and the primitive differentiable operations shared
//! by every block: pointwise convolution, batch normalization, cyclic shifts,
//! even/odd frame splitting, linear upsampling, and the joint-dimension DFT.
//!
//! Tensors are indexed `(t, c, v)` — frame (= spike step), channel, joint —
//! stored row-major with the joint axis contiguous.

use crate::error::{Result, SgnError};

/// Real-valued activation tensor indexed `(t, c, v)`.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseTensor {
    t: usize,
    c: usize,
    v: usize,
    data: Vec<f64>,
}

impl DenseTensor {
    pub fn zeros(t: usize, c: usize, v: usize) -> Self {
        assert!(t >= 1 && c >= 1 && v >= 1, "tensor dimensions must be >= 1");
        DenseTensor { t, c, v, data: vec![0.0; t * c * v] }
    }

    pub fn from_vec(t: usize, c: usize, v: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != t * c * v {
            return Err(SgnError::Dimension(format!(
                "data length {} does not match shape ({t},{c},{v})",
                data.len()
            )));
        }
        if !data.iter().all(|x| x.is_finite()) {
            return Err(SgnError::Data("non-finite value in tensor".into()));
        }
        Ok(DenseTensor { t, c, v, data })
    }

    pub fn from_fn(t: usize, c: usize, v: usize, mut f: impl FnMut(usize, usize, usize) -> f64) -> Self {
        let mut out = Self::zeros(t, c, v);
        for ti in 0..t {
            for ci in 0..c {
                for vi in 0..v {
                    out.set(ti, ci, vi, f(ti, ci, vi));
                }
            }
        }
        out
    }

    #[inline]
    pub fn shape(&self) -> (usize, usize, usize) {
        (self.t, self.c, self.v)
    }

    #[inline]
    pub fn frames(&self) -> usize {
        self.t
    }

    #[inline]
    pub fn channels(&self) -> usize {
        self.c
    }

    #[inline]
    pub fn joints(&self) -> usize {
        self.v
    }

    #[inline]
    fn idx(&self, t: usize, c: usize, v: usize) -> usize {
        debug_assert!(t < self.t && c < self.c && v < self.v);
        (t * self.c + c) * self.v + v
    }

    #[inline]
    pub fn get(&self, t: usize, c: usize, v: usize) -> f64 {
        self.data[self.idx(t, c, v)]
    }

    #[inline]
    pub fn set(&mut self, t: usize, c: usize, v: usize, val: f64) {
        let i = self.idx(t, c, v);
        self.data[i] = val;
    }

    #[inline]
    pub fn add_at(&mut self, t: usize, c: usize, v: usize, val: f64) {
        let i = self.idx(t, c, v);
        self.data[i] += val;
    }

    /// Contiguous joint row for `(t, c)`.
    #[inline]
    pub fn row(&self, t: usize, c: usize) -> &[f64] {
        let start = (t * self.c + c) * self.v;
        &self.data[start..start + self.v]
    }

    #[inline]
    pub fn row_mut(&mut self, t: usize, c: usize) -> &mut [f64] {
        let start = (t * self.c + c) * self.v;
        &mut self.data[start..start + self.v]
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> DenseTensor {
        DenseTensor {
            t: self.t,
            c: self.c,
            v: self.v,
            data: self.data.iter().map(|&x| f(x)).collect(),
        }
    }

    pub fn scale(&self, s: f64) -> DenseTensor {
        self.map(|x| x * s)
    }

    pub fn add(&self, other: &DenseTensor) -> DenseTensor {
        assert_eq!(self.shape(), other.shape(), "add: shape mismatch");
        DenseTensor {
            t: self.t,
            c: self.c,
            v: self.v,
            data: self.data.iter().zip(&other.data).map(|(a, b)| a + b).collect(),
        }
    }

    pub fn add_assign(&mut self, other: &DenseTensor) {
        assert_eq!(self.shape(), other.shape(), "add_assign: shape mismatch");
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += *b;
        }
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    pub fn mean(&self) -> f64 {
        self.data.iter().sum::<f64>() / self.data.len() as f64
    }

    /// Fraction of nonzero entries; the event rate seen by a downstream layer.
    pub fn nonzero_fraction(&self) -> f64 {
        let nz = self.data.iter().filter(|&&x| x != 0.0).count();
        nz as f64 / self.data.len() as f64
    }

    /// Joint-mixing product: `out[t,c,v] = Σ_u self[t,c,u] · m[u,v]`.
    pub fn matmul_joints(&self, m: &Mat) -> DenseTensor {
        assert_eq!(m.rows, self.v, "matmul_joints: matrix rows must equal joint count");
        let mut out = DenseTensor::zeros(self.t, self.c, m.cols);
        for t in 0..self.t {
            for c in 0..self.c {
                let src = self.row(t, c);
                let dst = out.row_mut(t, c);
                for (u, &x) in src.iter().enumerate() {
                    if x == 0.0 {
                        continue;
                    }
                    let mrow = m.row(u);
                    for (d, &w) in dst.iter_mut().zip(mrow) {
                        *d += x * w;
                    }
                }
            }
        }
        out
    }

    /// Channel-mixing product: `out[t,m,v] = Σ_c mat[m,c] · self[t,c,v]`,
    /// accumulated in `f64` per `(t, v)`.
    pub fn matmul_channels(&self, mat: &Mat) -> DenseTensor {
        assert_eq!(mat.cols, self.c, "matmul_channels: matrix cols must equal channel count");
        let mut out = DenseTensor::zeros(self.t, mat.rows, self.v);
        for t in 0..self.t {
            for m in 0..mat.rows {
                let mrow = mat.row(m);
                let dst = out.row_mut(t, m);
                for (ci, &w) in mrow.iter().enumerate() {
                    if w == 0.0 {
                        continue;
                    }
                    let src = self.row(t, ci);
                    for (d, &x) in dst.iter_mut().zip(src) {
                        *d += w * x;
                    }
                }
            }
        }
        out
    }
}

/// Binary spike tensor; every element is 0 or 1.
#[derive(Debug, Clone, PartialEq)]
pub struct SpikeTensor(DenseTensor);

impl SpikeTensor {
    pub fn from_dense(d: DenseTensor) -> Result<Self> {
        if !d.data.iter().all(|&x| x == 0.0 || x == 1.0) {
            return Err(SgnError::Numerical("spike tensor element outside {0,1}".into()));
        }
        Ok(SpikeTensor(d))
    }

    /// Caller guarantees all elements are already 0 or 1.
    pub(crate) fn from_dense_unchecked(d: DenseTensor) -> Self {
        debug_assert!(d.data.iter().all(|&x| x == 0.0 || x == 1.0));
        SpikeTensor(d)
    }

    pub fn zeros(t: usize, c: usize, v: usize) -> Self {
        SpikeTensor(DenseTensor::zeros(t, c, v))
    }

    #[inline]
    pub fn dense(&self) -> &DenseTensor {
        &self.0
    }

    pub fn into_dense(self) -> DenseTensor {
        self.0
    }

    #[inline]
    pub fn shape(&self) -> (usize, usize, usize) {
        self.0.shape()
    }

    #[inline]
    pub fn get(&self, t: usize, c: usize, v: usize) -> f64 {
        self.0.get(t, c, v)
    }

    /// Mean of the binary entries; always in [0, 1].
    pub fn firing_rate(&self) -> f64 {
        self.0.mean()
    }
}

/// Real/imaginary halves of a complex tensor, equal shapes.
#[derive(Debug, Clone)]
pub struct ComplexPair {
    pub real: DenseTensor,
    pub imag: DenseTensor,
}

impl ComplexPair {
    pub fn new(real: DenseTensor, imag: DenseTensor) -> Result<Self> {
        if real.shape() != imag.shape() {
            return Err(SgnError::Dimension("complex pair halves differ in shape".into()));
        }
        Ok(ComplexPair { real, imag })
    }
}

/// A learnable quantity with its gradient accumulator.
#[derive(Debug, Clone)]
pub struct Param {
    pub name: String,
    pub shape: Vec<usize>,
    pub value: Vec<f64>,
    pub grad: Vec<f64>,
    pub trainable: bool,
    /// Whether weight decay applies to this parameter.
    pub decay: bool,
}

impl Param {
    pub fn new(name: impl Into<String>, shape: Vec<usize>, value: Vec<f64>, decay: bool) -> Self {
        let n: usize = shape.iter().product();
        assert_eq!(n, value.len(), "param value length must match shape");
        Param {
            name: name.into(),
            shape,
            grad: vec![0.0; value.len()],
            value,
            trainable: true,
            decay,
        }
    }

    pub fn scalar(name: impl Into<String>, value: f64) -> Self {
        Self::new(name, vec![1], vec![value], false)
    }

    pub fn zero_grad(&mut self) {
        self.grad.iter_mut().for_each(|g| *g = 0.0);
    }

    pub fn len(&self) -> usize {
        self.value.len()
    }

    pub fn is_empty(&self) -> bool {
        self.value.is_empty()
    }
}

/// Row-major 2-D matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Mat {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl Mat {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Mat { rows, cols, data: vec![0.0; rows * cols] }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.set(i, i, 1.0);
        }
        m
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Self {
        let r = rows.len();
        let c = rows[0].len();
        let mut data = Vec::with_capacity(r * c);
        for row in rows {
            assert_eq!(row.len(), c, "ragged rows");
            data.extend_from_slice(row);
        }
        Mat { rows: r, cols: c, data }
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, val: f64) {
        self.data[r * self.cols + c] = val;
    }

    #[inline]
    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, r: usize) -> &mut [f64] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn transpose(&self) -> Mat {
        let mut out = Mat::zeros(self.cols, self.rows);
        for r in 0..self.rows {
            for c in 0..self.cols {
                out.set(c, r, self.get(r, c));
            }
        }
        out
    }

    pub fn matmul(&self, other: &Mat) -> Mat {
        assert_eq!(self.cols, other.rows, "matmul: inner dimensions differ");
        let mut out = Mat::zeros(self.rows, other.cols);
        for r in 0..self.rows {
            for k in 0..self.cols {
                let a = self.get(r, k);
                if a == 0.0 {
                    continue;
                }
                let brow = other.row(k);
                let orow = out.row_mut(r);
                for (o, &b) in orow.iter_mut().zip(brow) {
                    *o += a * b;
                }
            }
        }
        out
    }

    pub fn scale(&self, s: f64) -> Mat {
        Mat { rows: self.rows, cols: self.cols, data: self.data.iter().map(|x| x * s).collect() }
    }
}

// ── pointwise convolution ────────────────────────────────────────────────

/// 1x1 convolution along the channel axis:
/// `out[t,co,v] = Σ_ci weight[co,ci] · x[t,ci,v] + bias[co]`.
///
/// `weight` is `(c_out, c_in)` row-major; `bias` is optional with length `c_out`.
pub fn pointwise_conv(x: &DenseTensor, weight: &Mat, bias: Option<&[f64]>) -> Result<DenseTensor> {
    if weight.cols != x.channels() {
        return Err(SgnError::Dimension(format!(
            "conv expects {} input channels, tensor has {}",
            weight.cols,
            x.channels()
        )));
    }
    if let Some(b) = bias {
        if b.len() != weight.rows {
            return Err(SgnError::Dimension("bias length must equal output channels".into()));
        }
    }
    let (t_dim, _, v_dim) = x.shape();
    let mut out = DenseTensor::zeros(t_dim, weight.rows, v_dim);
    for t in 0..t_dim {
        for co in 0..weight.rows {
            let wrow = weight.row(co);
            let dst = out.row_mut(t, co);
            if let Some(b) = bias {
                dst.iter_mut().for_each(|d| *d = b[co]);
            }
            for (ci, &w) in wrow.iter().enumerate() {
                if w == 0.0 {
                    continue;
                }
                let src = x.row(t, ci);
                for (d, &xv) in dst.iter_mut().zip(src) {
                    *d += w * xv;
                }
            }
        }
    }
    Ok(out)
}

/// Vector-Jacobian products of [`pointwise_conv`]: returns
/// `(d_input, d_weight, d_bias)` given the output cotangent.
pub fn pointwise_conv_vjp(
    x: &DenseTensor,
    weight: &Mat,
    grad_out: &DenseTensor,
) -> (DenseTensor, Mat, Vec<f64>) {
    let (t_dim, c_in, v_dim) = x.shape();
    assert_eq!(grad_out.shape(), (t_dim, weight.rows, v_dim));
    let mut dx = DenseTensor::zeros(t_dim, c_in, v_dim);
    let mut dw = Mat::zeros(weight.rows, weight.cols);
    let mut db = vec![0.0; weight.rows];
    for t in 0..t_dim {
        for co in 0..weight.rows {
            let g = grad_out.row(t, co);
            db[co] += g.iter().sum::<f64>();
            let wrow = weight.row(co);
            let dwrow = dw.row_mut(co);
            for ci in 0..c_in {
                let src = x.row(t, ci);
                let mut acc = 0.0;
                for (a, b) in g.iter().zip(src) {
                    acc += a * b;
                }
                dwrow[ci] += acc;
                let w = wrow[ci];
                if w != 0.0 {
                    let dst = dx.row_mut(t, ci);
                    for (d, &gv) in dst.iter_mut().zip(g) {
                        *d += w * gv;
                    }
                }
            }
        }
    }
    (dx, dw, db)
}

// ── batch normalization ──────────────────────────────────────────────────

/// Per-channel affine/normalization state.
#[derive(Debug, Clone)]
pub struct BnState {
    pub gamma: Vec<f64>,
    pub beta: Vec<f64>,
    pub running_mean: Vec<f64>,
    pub running_var: Vec<f64>,
    pub momentum: f64,
    pub eps: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BnMode {
    Train,
    Eval,
}

impl BnState {
    pub fn new(channels: usize, momentum: f64, eps: f64) -> Result<Self> {
        if eps <= 0.0 {
            return Err(SgnError::Config("batch norm eps must be > 0".into()));
        }
        Ok(BnState {
            gamma: vec![1.0; channels],
            beta: vec![0.0; channels],
            running_mean: vec![0.0; channels],
            running_var: vec![1.0; channels],
            momentum,
            eps,
        })
    }
}

/// Batch normalization over a batch of `(T, C, V)` tensors; statistics are
/// taken per channel over `(batch, t, v)`. Train mode normalizes with batch
/// statistics and updates the running estimates; eval mode uses the stored
/// running statistics.
pub fn batch_norm_batch(xs: &[&DenseTensor], state: &mut BnState, mode: BnMode) -> Vec<DenseTensor> {
    assert!(!xs.is_empty(), "batch norm needs at least one sample");
    let (t_dim, c_dim, v_dim) = xs[0].shape();
    assert_eq!(c_dim, state.gamma.len(), "batch norm channel mismatch");
    let n_red = (xs.len() * t_dim * v_dim) as f64;

    let (mean, var) = match mode {
        BnMode::Eval => (state.running_mean.clone(), state.running_var.clone()),
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
            // Running variance uses the unbiased estimate.
            let unbias = if n_red > 1.0 { n_red / (n_red - 1.0) } else { 1.0 };
            for c in 0..c_dim {
                state.running_mean[c] =
                    (1.0 - state.momentum) * state.running_mean[c] + state.momentum * mean[c];
                state.running_var[c] =
                    (1.0 - state.momentum) * state.running_var[c] + state.momentum * var[c] * unbias;
            }
            (mean, var)
        }
    };

    xs.iter()
        .map(|x| {
            let mut out = DenseTensor::zeros(t_dim, c_dim, v_dim);
            for t in 0..t_dim {
                for c in 0..c_dim {
                    let inv = 1.0 / (var[c] + state.eps).sqrt();
                    let (m, g, b) = (mean[c], state.gamma[c], state.beta[c]);
                    let src = x.row(t, c);
                    let dst = out.row_mut(t, c);
                    for (d, &xv) in dst.iter_mut().zip(src) {
                        *d = (xv - m) * inv * g + b;
                    }
                }
            }
            out
        })
        .collect()
}

/// Single-tensor batch norm; the tensor is treated as the whole batch.
pub fn batch_norm(x: &DenseTensor, state: &mut BnState, mode: BnMode) -> DenseTensor {
    batch_norm_batch(&[x], state, mode).pop().unwrap()
}

// ── cyclic shift ─────────────────────────────────────────────────────────

/// Cyclic shift of a vector. `dir = +1` rolls right (`out[i] = v[(i-1) mod d]`),
/// `dir = -1` rolls left (`out[i] = v[(i+1) mod d]`).
pub fn cyclic_shift(v: &[f64], dir: i32) -> Vec<f64> {
    let d = v.len();
    assert!(d >= 1, "cyclic shift needs a non-empty vector");
    let mut out = vec![0.0; d];
    match dir {
        1 => {
            for i in 0..d {
                out[i] = v[(i + d - 1) % d];
            }
        }
        -1 => {
            for i in 0..d {
                out[i] = v[(i + 1) % d];
            }
        }
        _ => panic!("cyclic shift direction must be +1 or -1"),
    }
    out
}

/// In-place accumulate of `shift(src, dir)` into `dst`.
pub fn cyclic_shift_add(dst: &mut [f64], src: &[f64], dir: i32) {
    let d = src.len();
    debug_assert_eq!(dst.len(), d);
    match dir {
        1 => {
            for i in 0..d {
                dst[i] += src[(i + d - 1) % d];
            }
        }
        -1 => {
            for i in 0..d {
                dst[i] += src[(i + 1) % d];
            }
        }
        _ => panic!("cyclic shift direction must be +1 or -1"),
    }
}

// ── even/odd frame split ─────────────────────────────────────────────────

/// Split frames into even-indexed (0,2,4,…) and odd-indexed (1,3,5,…) halves.
/// The frame count must be even; padding is the caller's job.
pub fn even_odd_split(x: &DenseTensor) -> Result<(DenseTensor, DenseTensor)> {
    let (t_dim, c_dim, v_dim) = x.shape();
    if t_dim % 2 != 0 {
        return Err(SgnError::Contract(format!("even/odd split needs even frame count, got {t_dim}")));
    }
    let half = t_dim / 2;
    let mut even = DenseTensor::zeros(half, c_dim, v_dim);
    let mut odd = DenseTensor::zeros(half, c_dim, v_dim);
    for i in 0..half {
        for c in 0..c_dim {
            even.row_mut(i, c).copy_from_slice(x.row(2 * i, c));
            odd.row_mut(i, c).copy_from_slice(x.row(2 * i + 1, c));
        }
    }
    Ok((even, odd))
}

/// Inverse of [`even_odd_split`]: interleave two equal-length halves.
pub fn interleave(even: &DenseTensor, odd: &DenseTensor) -> DenseTensor {
    assert_eq!(even.shape(), odd.shape(), "interleave: halves must share shape");
    let (half, c_dim, v_dim) = even.shape();
    let mut out = DenseTensor::zeros(2 * half, c_dim, v_dim);
    for i in 0..half {
        for c in 0..c_dim {
            out.row_mut(2 * i, c).copy_from_slice(even.row(i, c));
            out.row_mut(2 * i + 1, c).copy_from_slice(odd.row(i, c));
        }
    }
    out
}

// ── linear upsampling ────────────────────────────────────────────────────

/// Endpoint-aligned piecewise-linear interpolation along the frame axis.
/// Output sample `i` reads position `i·(T_in−1)/(T_out−1)`; a single input
/// frame is replicated.
pub fn linear_upsample(x: &DenseTensor, t_target: usize) -> Result<DenseTensor> {
    let (t_in, c_dim, v_dim) = x.shape();
    if t_target < t_in {
        return Err(SgnError::Contract(format!(
            "upsample target {t_target} is below input length {t_in}"
        )));
    }
    if t_target == t_in {
        return Ok(x.clone());
    }
    let mut out = DenseTensor::zeros(t_target, c_dim, v_dim);
    for i in 0..t_target {
        let (lo, hi, w) = upsample_taps(t_in, t_target, i);
        for c in 0..c_dim {
            let a = x.row(lo, c);
            let b = x.row(hi, c);
            let dst = out.row_mut(i, c);
            for ((d, &av), &bv) in dst.iter_mut().zip(a).zip(b) {
                *d = av * (1.0 - w) + bv * w;
            }
        }
    }
    Ok(out)
}

/// Source taps and blend weight for output frame `i`.
fn upsample_taps(t_in: usize, t_target: usize, i: usize) -> (usize, usize, f64) {
    if t_in == 1 {
        return (0, 0, 0.0);
    }
    let pos = i as f64 * (t_in as f64 - 1.0) / (t_target as f64 - 1.0);
    let lo = pos.floor() as usize;
    let hi = (lo + 1).min(t_in - 1);
    (lo, hi, pos - lo as f64)
}

/// Adjoint of [`linear_upsample`]: scatter the output cotangent back onto
/// the input frames with the same interpolation weights.
pub fn linear_upsample_vjp(t_in: usize, grad_out: &DenseTensor) -> DenseTensor {
    let (t_target, c_dim, v_dim) = grad_out.shape();
    if t_target == t_in {
        return grad_out.clone();
    }
    let mut dx = DenseTensor::zeros(t_in, c_dim, v_dim);
    for i in 0..t_target {
        let (lo, hi, w) = upsample_taps(t_in, t_target, i);
        for c in 0..c_dim {
            let g = grad_out.row(i, c).to_vec();
            {
                let dst = dx.row_mut(lo, c);
                for (d, &gv) in dst.iter_mut().zip(&g) {
                    *d += gv * (1.0 - w);
                }
            }
            if hi != lo {
                let dst = dx.row_mut(hi, c);
                for (d, &gv) in dst.iter_mut().zip(&g) {
                    *d += gv * w;
                }
            }
        }
    }
    dx
}

// ── joint-dimension DFT ──────────────────────────────────────────────────

/// Cached twiddle rows for one transform length: `cos[u·V+k] = cos(2πuk/V)`
/// and likewise for sine. Symmetric in `u` and `k`.
struct DftPlan {
    cos: Vec<f64>,
    sin: Vec<f64>,
}

fn dft_plan(v_dim: usize) -> std::sync::Arc<DftPlan> {
    use std::collections::HashMap;
    use std::sync::{Arc, Mutex, OnceLock};
    static PLANS: OnceLock<Mutex<HashMap<usize, Arc<DftPlan>>>> = OnceLock::new();
    let plans = PLANS.get_or_init(|| Mutex::new(HashMap::new()));
    let mut guard = plans.lock().unwrap();
    guard
        .entry(v_dim)
        .or_insert_with(|| {
            let mut cos = vec![0.0; v_dim * v_dim];
            let mut sin = vec![0.0; v_dim * v_dim];
            for u in 0..v_dim {
                for k in 0..v_dim {
                    let ang = 2.0 * std::f64::consts::PI * ((u * k) % v_dim) as f64 / v_dim as f64;
                    cos[u * v_dim + k] = ang.cos();
                    sin[u * v_dim + k] = ang.sin();
                }
            }
            Arc::new(DftPlan { cos, sin })
        })
        .clone()
}

/// Discrete Fourier transform along the joint axis, negative-exponent forward
/// convention: `X[k] = Σ_v x[v]·exp(−2πi·kv/V)`. Direct O(V²) evaluation with
/// f64 accumulation; joint counts here are small and rarely powers of two.
/// Zero inputs are skipped, which pays off on spike-valued tensors.
pub fn dft_joints(x: &DenseTensor) -> ComplexPair {
    let (t_dim, c_dim, v_dim) = x.shape();
    let plan = dft_plan(v_dim);
    let mut real = DenseTensor::zeros(t_dim, c_dim, v_dim);
    let mut imag = DenseTensor::zeros(t_dim, c_dim, v_dim);
    for t in 0..t_dim {
        for c in 0..c_dim {
            let src = x.row(t, c);
            let re = real.row_mut(t, c);
            let im = imag.row_mut(t, c);
            for (u, &xv) in src.iter().enumerate() {
                if xv == 0.0 {
                    continue;
                }
                let crow = &plan.cos[u * v_dim..(u + 1) * v_dim];
                let srow = &plan.sin[u * v_dim..(u + 1) * v_dim];
                for k in 0..v_dim {
                    re[k] += xv * crow[k];
                    im[k] -= xv * srow[k];
                }
            }
        }
    }
    ComplexPair { real, imag }
}

/// Adjoint of [`dft_joints`] as a real-linear map:
/// `dx[v] = Σ_k g_re[k]·cos(2πkv/V) − g_im[k]·sin(2πkv/V)`.
pub fn dft_joints_vjp(grad: &ComplexPair) -> DenseTensor {
    let (t_dim, c_dim, v_dim) = grad.real.shape();
    let plan = dft_plan(v_dim);
    let mut dx = DenseTensor::zeros(t_dim, c_dim, v_dim);
    for t in 0..t_dim {
        for c in 0..c_dim {
            let gre = grad.real.row(t, c);
            let gim = grad.imag.row(t, c);
            let dst = dx.row_mut(t, c);
            for k in 0..v_dim {
                let (cr, ci) = (gre[k], gim[k]);
                if cr == 0.0 && ci == 0.0 {
                    continue;
                }
                let crow = &plan.cos[k * v_dim..(k + 1) * v_dim];
                let srow = &plan.sin[k * v_dim..(k + 1) * v_dim];
                for v in 0..v_dim {
                    dst[v] += cr * crow[v] - ci * srow[v];
                }
            }
        }
    }
    dx
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn conv_identity_weight_passes_input_through() {
        let x = DenseTensor::from_fn(2, 3, 4, |t, c, v| (t + 2 * c + 3 * v) as f64);
        let w = Mat::identity(3);
        let y = pointwise_conv(&x, &w, None).unwrap();
        assert_eq!(x, y);
    }

    #[test]
    fn conv_sums_channels() {
        // C_in=2, C_out=1, weight [1,1], x[t,·,v] = (1,0) -> 1
        let x = DenseTensor::from_fn(1, 2, 1, |_, c, _| if c == 0 { 1.0 } else { 0.0 });
        let w = Mat::from_rows(&[vec![1.0, 1.0]]);
        let y = pointwise_conv(&x, &w, None).unwrap();
        assert_eq!(y.get(0, 0, 0), 1.0);
    }

    #[test]
    fn conv_weighted_sum_with_bias() {
        // weight [[2,3]], bias [1], x = (1,1) -> 6
        let x = DenseTensor::from_fn(1, 2, 1, |_, _, _| 1.0);
        let w = Mat::from_rows(&[vec![2.0, 3.0]]);
        let y = pointwise_conv(&x, &w, Some(&[1.0])).unwrap();
        assert_eq!(y.get(0, 0, 0), 6.0);
    }

    #[test]
    fn conv_rejects_channel_mismatch() {
        let x = DenseTensor::zeros(1, 2, 1);
        let w = Mat::identity(3);
        assert!(matches!(pointwise_conv(&x, &w, None), Err(SgnError::Dimension(_))));
    }

    #[test]
    fn bn_identity_configuration_is_identity() {
        // identity up to the variance floor: scale is (1 + eps)^(-1/2)
        let x = DenseTensor::from_fn(2, 2, 3, |t, c, v| (t * 6 + c * 3 + v) as f64 * 0.25 - 1.0);
        let mut st = BnState::new(2, 0.1, 1e-5).unwrap();
        let y = batch_norm(&x, &mut st, BnMode::Eval);
        for (a, b) in x.data().iter().zip(y.data()) {
            assert_relative_eq!(a, b, max_relative = 6e-6);
        }
    }

    #[test]
    fn bn_eval_applies_affine() {
        // gamma=2, beta=1, stats (0,1), x=3 -> 7 (within the eps-widened scale)
        let x = DenseTensor::from_fn(1, 1, 1, |_, _, _| 3.0);
        let mut st = BnState::new(1, 0.1, 1e-12).unwrap();
        st.gamma[0] = 2.0;
        st.beta[0] = 1.0;
        let y = batch_norm(&x, &mut st, BnMode::Eval);
        assert_relative_eq!(y.get(0, 0, 0), 7.0, max_relative = 1e-9);
    }

    #[test]
    fn bn_train_constant_channel_maps_to_beta() {
        let x = DenseTensor::from_fn(2, 1, 3, |_, _, _| 5.0);
        let mut st = BnState::new(1, 0.1, 1e-5).unwrap();
        let y = batch_norm(&x, &mut st, BnMode::Train);
        for &val in y.data() {
            assert_eq!(val, 0.0);
        }
    }

    #[test]
    fn bn_rejects_nonpositive_eps() {
        assert!(matches!(BnState::new(1, 0.1, 0.0), Err(SgnError::Config(_))));
    }

    #[test]
    fn cyclic_shift_definition() {
        let v = [1.0, 2.0, 3.0, 4.0];
        assert_eq!(cyclic_shift(&v, 1), vec![4.0, 1.0, 2.0, 3.0]);
        assert_eq!(cyclic_shift(&v, -1), vec![2.0, 3.0, 4.0, 1.0]);
        assert_eq!(cyclic_shift(&[7.0], 1), vec![7.0]);
        assert_eq!(cyclic_shift(&[7.0], -1), vec![7.0]);
    }

    #[test]
    fn even_odd_split_definition() {
        let x = DenseTensor::from_fn(4, 1, 2, |t, _, v| (10 * t + v) as f64);
        let (even, odd) = even_odd_split(&x).unwrap();
        assert_eq!(even.frames(), 2);
        assert_eq!(even.get(0, 0, 0), 0.0);
        assert_eq!(even.get(1, 0, 0), 20.0);
        assert_eq!(odd.get(0, 0, 0), 10.0);
        assert_eq!(odd.get(1, 0, 1), 31.0);
        let back = interleave(&even, &odd);
        assert_eq!(back, x);
    }

    #[test]
    fn even_odd_split_rejects_odd_frames() {
        let x = DenseTensor::zeros(3, 1, 1);
        assert!(matches!(even_odd_split(&x), Err(SgnError::Contract(_))));
    }

    #[test]
    fn upsample_identity_and_midpoint() {
        let x = DenseTensor::from_fn(2, 1, 1, |t, _, _| 2.0 * t as f64);
        assert_eq!(linear_upsample(&x, 2).unwrap(), x);
        let y = linear_upsample(&x, 3).unwrap();
        assert_eq!(y.get(0, 0, 0), 0.0);
        assert_relative_eq!(y.get(1, 0, 0), 1.0);
        assert_eq!(y.get(2, 0, 0), 2.0);
    }

    #[test]
    fn upsample_endpoint_aligned_ramp() {
        // [1,3,5] -> length 5 -> [1,2,3,4,5]
        let x = DenseTensor::from_fn(3, 1, 1, |t, _, _| 1.0 + 2.0 * t as f64);
        let y = linear_upsample(&x, 5).unwrap();
        for i in 0..5 {
            assert_relative_eq!(y.get(i, 0, 0), 1.0 + i as f64, max_relative = 1e-12);
        }
    }

    #[test]
    fn upsample_rejects_shrinking() {
        let x = DenseTensor::zeros(4, 1, 1);
        assert!(matches!(linear_upsample(&x, 3), Err(SgnError::Contract(_))));
    }

    #[test]
    fn upsample_replicates_single_frame() {
        let x = DenseTensor::from_fn(1, 1, 2, |_, _, v| v as f64 + 1.0);
        let y = linear_upsample(&x, 4).unwrap();
        for t in 0..4 {
            assert_eq!(y.get(t, 0, 0), 1.0);
            assert_eq!(y.get(t, 0, 1), 2.0);
        }
    }

    #[test]
    fn dft_constant_signal_concentrates_in_dc() {
        let x = DenseTensor::from_fn(1, 1, 4, |_, _, _| 1.0);
        let f = dft_joints(&x);
        assert_relative_eq!(f.real.get(0, 0, 0), 4.0, max_relative = 1e-12);
        for k in 1..4 {
            assert_relative_eq!(f.real.get(0, 0, k), 0.0, epsilon = 1e-12);
        }
        for k in 0..4 {
            assert_relative_eq!(f.imag.get(0, 0, k), 0.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn dft_impulse_is_flat() {
        let x = DenseTensor::from_fn(1, 1, 5, |_, _, v| if v == 0 { 1.0 } else { 0.0 });
        let f = dft_joints(&x);
        for k in 0..5 {
            assert_relative_eq!(f.real.get(0, 0, k), 1.0, epsilon = 1e-12);
            assert_relative_eq!(f.imag.get(0, 0, k), 0.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn dft_sine_lands_in_expected_bins() {
        // x = [0,1,0,-1]: imaginary bin 1 = -2, bin 3 = +2, everything else 0.
        let vals = [0.0, 1.0, 0.0, -1.0];
        let x = DenseTensor::from_fn(1, 1, 4, |_, _, v| vals[v]);
        let f = dft_joints(&x);
        for k in 0..4 {
            assert_relative_eq!(f.real.get(0, 0, k), 0.0, epsilon = 1e-12);
        }
        assert_relative_eq!(f.imag.get(0, 0, 1), -2.0, max_relative = 1e-12);
        assert_relative_eq!(f.imag.get(0, 0, 3), 2.0, max_relative = 1e-12);
        assert_relative_eq!(f.imag.get(0, 0, 0), 0.0, epsilon = 1e-12);
        assert_relative_eq!(f.imag.get(0, 0, 2), 0.0, epsilon = 1e-12);
    }

    #[test]
    fn spike_tensor_rejects_non_binary() {
        let d = DenseTensor::from_fn(1, 1, 2, |_, _, v| v as f64 * 0.5);
        assert!(SpikeTensor::from_dense(d).is_err());
    }

    #[test]
    fn matmul_joints_mixes_joints() {
        // swap matrix sends row [1,0] to [0,1]
        let x = DenseTensor::from_fn(1, 1, 2, |_, _, v| if v == 0 { 1.0 } else { 0.0 });
        let swap = Mat::from_rows(&[vec![0.0, 1.0], vec![1.0, 0.0]]);
        let y = x.matmul_joints(&swap);
        assert_eq!(y.get(0, 0, 0), 0.0);
        assert_eq!(y.get(0, 0, 1), 1.0);
    }
}
