//! Frequency-domain spiking convolution: a learnable joint window, a DFT
//! along the joint axis, complex-valued spiking convolution over the real and
//! imaginary parts, and the block-level residual composition.

use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Result, SgnError};
use crate::layers::{ConvBn, ConvBnLif, LifLayer};
use crate::lif::LifParams;
use crate::tensor::{
    dft_joints, dft_joints_vjp, BnMode, ComplexPair, DenseTensor, Param, SpikeTensor,
};

/// Soft spatial gate: `F[t,c,v] = G[t,c,v] · w[v]`.
pub fn joint_window(x: &DenseTensor, w: &[f64]) -> DenseTensor {
    let (t_dim, c_dim, v_dim) = x.shape();
    assert_eq!(w.len(), v_dim, "window length must equal joint count");
    let mut out = DenseTensor::zeros(t_dim, c_dim, v_dim);
    for t in 0..t_dim {
        for c in 0..c_dim {
            let src = x.row(t, c);
            let dst = out.row_mut(t, c);
            for ((d, &xv), &wv) in dst.iter_mut().zip(src).zip(w) {
                *d = xv * wv;
            }
        }
    }
    out
}

pub struct FrequencyConv {
    pub name: String,
    pub window: Param,
    pub re_branch: ConvBn,
    pub im_branch: ConvBn,
    pub lif_sum: LifLayer,
    pub lif_diff: LifLayer,
    pub fuse_sum: ConvBnLif,
    pub fuse_diff: ConvBnLif,
    /// Mean nonzero fraction of the last forward input (feeds the window
    /// and the joint-axis transform).
    pub last_input_rate: f64,
    cache_x: Vec<DenseTensor>,
}

impl FrequencyConv {
    pub fn new(
        name: &str,
        channels: usize,
        joints: usize,
        lif: LifParams,
        rng: &mut ChaCha8Rng,
    ) -> Self {
        FrequencyConv {
            window: Param::new(format!("{name}.window"), vec![joints], vec![1.0; joints], true),
            re_branch: ConvBn::new(&format!("{name}.re"), channels, channels, rng),
            im_branch: ConvBn::new(&format!("{name}.im"), channels, channels, rng),
            lif_sum: LifLayer::new(format!("{name}.sum.sn"), lif),
            lif_diff: LifLayer::new(format!("{name}.diff.sn"), lif),
            fuse_sum: ConvBnLif::new(&format!("{name}.fuse1"), channels, channels, lif, rng),
            fuse_diff: ConvBnLif::new(&format!("{name}.fuse2"), channels, channels, lif, rng),
            name: name.to_string(),
            last_input_rate: 0.0,
            cache_x: Vec::new(),
        }
    }

    /// The two complex-convolution branch outputs `SN(R'±I')` before fusion.
    pub fn complex_spiking_conv(
        &mut self,
        pairs: &[ComplexPair],
        mode: BnMode,
    ) -> Result<(Vec<SpikeTensor>, Vec<SpikeTensor>)> {
        let reals: Vec<DenseTensor> = pairs.iter().map(|p| p.real.clone()).collect();
        let imags: Vec<DenseTensor> = pairs.iter().map(|p| p.imag.clone()).collect();
        let r = self.re_branch.forward_batch(&reals, mode);
        let i = self.im_branch.forward_batch(&imags, mode);
        let sums: Vec<DenseTensor> = r.iter().zip(&i).map(|(a, b)| a.add(b)).collect();
        let diffs: Vec<DenseTensor> =
            r.iter().zip(&i).map(|(a, b)| a.add(&b.scale(-1.0))).collect();
        let o1 = self.lif_sum.forward_batch(&sums)?;
        let o2 = self.lif_diff.forward_batch(&diffs)?;
        Ok((o1, o2))
    }

    /// Window → DFT → complex spiking conv → fused spiking sum; output values
    /// are spike counts in {0, 1, 2}.
    pub fn forward_batch(&mut self, xs: &[DenseTensor], mode: BnMode) -> Result<Vec<DenseTensor>> {
        let (_, _, v_dim) = xs[0].shape();
        if v_dim != self.window.len() {
            return Err(SgnError::Dimension(format!(
                "{}: window covers {} joints, input has {v_dim}",
                self.name,
                self.window.len()
            )));
        }
        self.last_input_rate =
            xs.iter().map(DenseTensor::nonzero_fraction).sum::<f64>() / xs.len() as f64;
        self.cache_x = xs.to_vec();
        let pairs: Vec<ComplexPair> = xs
            .par_iter()
            .map(|x| dft_joints(&joint_window(x, &self.window.value)))
            .collect();
        let (o1, o2) = self.complex_spiking_conv(&pairs, mode)?;
        let f1 = self.fuse_sum.forward_batch(&crate::layers::spikes_to_dense(o1), mode)?;
        let f2 = self.fuse_diff.forward_batch(&crate::layers::spikes_to_dense(o2), mode)?;
        Ok(f1
            .into_iter()
            .zip(f2)
            .map(|(a, b)| a.into_dense().add(b.dense()))
            .collect())
    }

    pub fn backward_batch(&mut self, grads: &[DenseTensor]) -> Vec<DenseTensor> {
        let d_o1 = self.fuse_sum.backward_batch(grads);
        let d_o2 = self.fuse_diff.backward_batch(grads);
        let d_sum = self.lif_sum.backward_batch(&d_o1);
        let d_diff = self.lif_diff.backward_batch(&d_o2);
        let d_r: Vec<DenseTensor> = d_sum.iter().zip(&d_diff).map(|(a, b)| a.add(b)).collect();
        let d_i: Vec<DenseTensor> =
            d_sum.iter().zip(&d_diff).map(|(a, b)| a.add(&b.scale(-1.0))).collect();
        let d_re = self.re_branch.backward_batch(&d_r);
        let d_im = self.im_branch.backward_batch(&d_i);
        // adjoint of the DFT, then of the window
        let d_windowed: Vec<DenseTensor> = d_re
            .into_par_iter()
            .zip(d_im.into_par_iter())
            .map(|(re, im)| dft_joints_vjp(&ComplexPair { real: re, imag: im }))
            .collect();
        let mut dxs = Vec::with_capacity(d_windowed.len());
        for (x, dw) in self.cache_x.iter().zip(&d_windowed) {
            let (t_dim, c_dim, v_dim) = x.shape();
            let mut dx = DenseTensor::zeros(t_dim, c_dim, v_dim);
            for t in 0..t_dim {
                for c in 0..c_dim {
                    let xr = x.row(t, c);
                    let gr = dw.row(t, c);
                    let dr = dx.row_mut(t, c);
                    for v in 0..v_dim {
                        dr[v] = gr[v] * self.window.value[v];
                        self.window.grad[v] += gr[v] * xr[v];
                    }
                }
            }
            dxs.push(dx);
        }
        dxs
    }

    pub fn visit_params(&mut self, f: &mut dyn FnMut(&mut Param)) {
        f(&mut self.window);
        self.re_branch.visit_params(f);
        self.im_branch.visit_params(f);
        self.fuse_sum.visit_params(f);
        self.fuse_diff.visit_params(f);
    }

    pub fn param_count(&self) -> usize {
        self.window.len()
            + self.re_branch.param_count()
            + self.im_branch.param_count()
            + self.fuse_sum.param_count()
            + self.fuse_diff.param_count()
    }
}

/// Residual path of the block composition: identity when channel counts
/// match, otherwise a learned pointwise projection with batch norm.
pub enum Residual {
    Identity,
    Proj(ConvBn),
}

impl Residual {
    pub fn new(name: &str, c_in: usize, c_out: usize, rng: &mut ChaCha8Rng) -> Self {
        if c_in == c_out {
            Residual::Identity
        } else {
            Residual::Proj(ConvBn::new(name, c_in, c_out, rng))
        }
    }

    pub fn forward_batch(&mut self, xs: &[DenseTensor], mode: BnMode) -> Vec<DenseTensor> {
        match self {
            Residual::Identity => xs.to_vec(),
            Residual::Proj(p) => p.forward_batch(xs, mode),
        }
    }

    pub fn backward_batch(&mut self, grads: &[DenseTensor]) -> Vec<DenseTensor> {
        match self {
            Residual::Identity => grads.to_vec(),
            Residual::Proj(p) => p.backward_batch(grads),
        }
    }

    pub fn visit_params(&mut self, f: &mut dyn FnMut(&mut Param)) {
        if let Residual::Proj(p) = self {
            p.visit_params(f);
        }
    }

    pub fn param_count(&self) -> usize {
        match self {
            Residual::Identity => 0,
            Residual::Proj(p) => p.param_count(),
        }
    }
}

/// Block-level composition `X_l = F + G + res(X_prev)`.
pub fn block_compose(
    f: &[DenseTensor],
    g: &[DenseTensor],
    res_out: &[DenseTensor],
) -> Result<Vec<DenseTensor>> {
    if f[0].shape() != g[0].shape() || f[0].shape() != res_out[0].shape() {
        return Err(SgnError::Dimension("block compose operands differ in shape".into()));
    }
    Ok(f.iter()
        .zip(g)
        .zip(res_out)
        .map(|((a, b), c)| a.add(b).add(c))
        .collect())
}
