//! Skeleton spike encoding and the spiking graph convolution block: per-channel
//! min–max normalization into spikes, relation-wise joint mixing against the
//! learnable adjacency powers, and the two-branch spiking output.

use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Result, SgnError};
use crate::graph::AdjacencyPowers;
use crate::layers::{BatchNorm, Conv1x1, ConvBn, LifLayer};
use crate::lif::LifParams;
use crate::tensor::{BnMode, DenseTensor, Mat, SpikeTensor};

/// Map each channel linearly onto [0, 1] over the whole sequence; a constant
/// channel maps to zero. Rejects non-finite coordinates.
pub fn minmax_normalize(x: &DenseTensor) -> Result<DenseTensor> {
    if !x.is_finite() {
        return Err(SgnError::Data("non-finite coordinate in raw sequence".into()));
    }
    let (t_dim, c_dim, v_dim) = x.shape();
    let mut out = DenseTensor::zeros(t_dim, c_dim, v_dim);
    for c in 0..c_dim {
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for t in 0..t_dim {
            for &val in x.row(t, c) {
                lo = lo.min(val);
                hi = hi.max(val);
            }
        }
        let span = hi - lo;
        for t in 0..t_dim {
            let src = x.row(t, c);
            let dst = out.row_mut(t, c);
            if span > 0.0 {
                for (d, &val) in dst.iter_mut().zip(src) {
                    *d = (val - lo) / span;
                }
            }
            // constant channel: stays zero
        }
    }
    Ok(out)
}

/// Initial encoding stage: normalization, pointwise conv, batch norm, spikes.
pub struct SpikeEncoder {
    pub conv: Conv1x1,
    pub bn: BatchNorm,
    pub lif: LifLayer,
}

impl SpikeEncoder {
    pub fn new(c_in: usize, c_out: usize, lif: LifParams, rng: &mut ChaCha8Rng) -> Self {
        SpikeEncoder {
            conv: Conv1x1::new("encoder.conv", c_in, c_out, 1, true, rng),
            bn: BatchNorm::new("encoder.bn", c_out),
            lif: LifLayer::new("encoder.sn", lif),
        }
    }

    pub fn forward_batch(&mut self, raw: &[DenseTensor], mode: BnMode) -> Result<Vec<SpikeTensor>> {
        let normalized = raw.iter().map(minmax_normalize).collect::<Result<Vec<_>>>()?;
        let h = self.conv.forward_batch(&normalized);
        let h = self.bn.forward_batch(&h, mode);
        self.lif.forward_batch(&h)
    }

    /// Propagates into the conv/bn parameters; the raw input needs no gradient.
    pub fn backward_batch(&mut self, grads: &[DenseTensor]) {
        let g = self.lif.backward_batch(grads);
        let g = self.bn.backward_batch(&g);
        self.conv.backward_batch(&g);
    }

    pub fn visit_params(&mut self, f: &mut dyn FnMut(&mut crate::tensor::Param)) {
        self.conv.visit_params(f);
        self.bn.visit_params(f);
    }

    pub fn param_count(&self) -> usize {
        self.conv.param_count() + self.bn.param_count()
    }
}

/// Spiking graph convolution: relation-wise joint mixing and channel lift,
/// batch-normalized, plus a convolutional shortcut, both spiking.
pub struct SpikingGraphConv {
    pub name: String,
    pub relation_convs: Vec<Conv1x1>,
    pub bn_main: BatchNorm,
    pub lif_main: LifLayer,
    pub shortcut: ConvBn,
    pub lif_short: LifLayer,
    /// Mean nonzero fraction of the last forward input (drives the joint
    /// mixing against the adjacency powers).
    pub last_input_rate: f64,
    cache_x: Vec<DenseTensor>,
}

impl SpikingGraphConv {
    pub fn new(
        name: &str,
        c_in: usize,
        c_out: usize,
        relations: usize,
        lif: LifParams,
        rng: &mut ChaCha8Rng,
    ) -> Self {
        let relation_convs = (0..relations)
            .map(|n| Conv1x1::new(format!("{name}.rel{n}.conv"), c_in, c_out, 1, true, rng))
            .collect();
        SpikingGraphConv {
            name: name.to_string(),
            relation_convs,
            bn_main: BatchNorm::new(format!("{name}.bn"), c_out),
            lif_main: LifLayer::new(format!("{name}.sn"), lif),
            shortcut: ConvBn::new(&format!("{name}.shortcut"), c_in, c_out, rng),
            lif_short: LifLayer::new(format!("{name}.shortcut.sn"), lif),
            last_input_rate: 0.0,
            cache_x: Vec::new(),
        }
    }

    /// `BN[Σ_n Conv_n(x · pa[n])]`, the pre-activation graph aggregation.
    pub fn aggregate_batch(
        &mut self,
        xs: &[DenseTensor],
        pa: &AdjacencyPowers,
        mode: BnMode,
    ) -> Result<Vec<DenseTensor>> {
        if xs[0].joints() != pa.joints {
            return Err(SgnError::Dimension(format!(
                "graph conv expects {} joints, tensor has {}",
                pa.joints,
                xs[0].joints()
            )));
        }
        self.last_input_rate =
            xs.iter().map(DenseTensor::nonzero_fraction).sum::<f64>() / xs.len() as f64;
        self.cache_x = xs.to_vec();
        let mut summed: Option<Vec<DenseTensor>> = None;
        for (n, conv) in self.relation_convs.iter_mut().enumerate() {
            let slice = pa.slice(n);
            let mixed: Vec<DenseTensor> = xs.par_iter().map(|x| x.matmul_joints(&slice)).collect();
            let h = conv.forward_batch(&mixed);
            summed = Some(match summed {
                None => h,
                Some(mut acc) => {
                    for (a, b) in acc.iter_mut().zip(&h) {
                        a.add_assign(b);
                    }
                    acc
                }
            });
        }
        Ok(self.bn_main.forward_batch(&summed.unwrap(), mode))
    }

    /// Full block output `SN(aggregate) + SN(shortcut)`; element values are
    /// spike counts in {0, 1, 2}, carried as a dense tensor.
    pub fn forward_batch(
        &mut self,
        xs: &[DenseTensor],
        pa: &AdjacencyPowers,
        mode: BnMode,
    ) -> Result<Vec<DenseTensor>> {
        let g_i = self.aggregate_batch(xs, pa, mode)?;
        let main = self.lif_main.forward_batch(&g_i)?;
        let short_pre = self.shortcut.forward_batch(xs, mode);
        let short = self.lif_short.forward_batch(&short_pre)?;
        Ok(main
            .into_iter()
            .zip(short)
            .map(|(a, b)| a.into_dense().add(b.dense()))
            .collect())
    }

    /// Backward through the aggregation only (no spiking stages).
    pub fn aggregate_backward(
        &mut self,
        grads: &[DenseTensor],
        pa: &mut AdjacencyPowers,
    ) -> Vec<DenseTensor> {
        let g = self.bn_main.backward_batch(grads);
        let (t_dim, c_in, v_dim) = self.cache_x[0].shape();
        let mut dxs = vec![DenseTensor::zeros(t_dim, c_in, v_dim); self.cache_x.len()];
        for (n, conv) in self.relation_convs.iter_mut().enumerate() {
            let d_mixed = conv.backward_batch(&g);
            let slice_t = pa.slice(n).transpose();
            // input gradient flows back through the joint mixing
            let contribs: Vec<DenseTensor> =
                d_mixed.par_iter().map(|dm| dm.matmul_joints(&slice_t)).collect();
            for (dx, contrib) in dxs.iter_mut().zip(&contribs) {
                dx.add_assign(contrib);
            }
            // dPA[u,v] = Σ_{sample,t,c} x[t,c,u]·d_mixed[t,c,v]
            let dpa_parts: Vec<Mat> = self
                .cache_x
                .par_iter()
                .zip(d_mixed.par_iter())
                .map(|(x, dm)| {
                    let mut dpa = Mat::zeros(v_dim, v_dim);
                    for t in 0..t_dim {
                        for c in 0..c_in {
                            let xr = x.row(t, c);
                            let dr = dm.row(t, c);
                            for (u, &xv) in xr.iter().enumerate() {
                                if xv == 0.0 {
                                    continue;
                                }
                                let dst = dpa.row_mut(u);
                                for (d, &g) in dst.iter_mut().zip(dr) {
                                    *d += xv * g;
                                }
                            }
                        }
                    }
                    dpa
                })
                .collect();
            for part in dpa_parts {
                pa.add_slice_grad(n, &part);
            }
        }
        dxs
    }

    /// Backward through the full two-branch output.
    pub fn backward_batch(
        &mut self,
        grads: &[DenseTensor],
        pa: &mut AdjacencyPowers,
    ) -> Vec<DenseTensor> {
        let d_main = self.lif_main.backward_batch(grads);
        let mut dxs = self.aggregate_backward(&d_main, pa);
        let d_short = self.lif_short.backward_batch(grads);
        let d_short_in = self.shortcut.backward_batch(&d_short);
        for (dx, ds) in dxs.iter_mut().zip(&d_short_in) {
            dx.add_assign(ds);
        }
        dxs
    }

    pub fn visit_params(&mut self, f: &mut dyn FnMut(&mut crate::tensor::Param)) {
        for conv in &mut self.relation_convs {
            conv.visit_params(f);
        }
        self.bn_main.visit_params(f);
        self.shortcut.visit_params(f);
    }

    pub fn param_count(&self) -> usize {
        self.relation_convs.iter().map(Conv1x1::param_count).sum::<usize>()
            + self.bn_main.param_count()
            + self.shortcut.param_count()
    }
}

#[cfg(test)]
pub(crate) fn bn_bypass(bn: &mut BatchNorm) {
    // running variance of 1 - eps makes eval-mode normalization exactly 1:1
    bn.running_var.iter_mut().for_each(|v| *v = 1.0 - bn.eps);
}
