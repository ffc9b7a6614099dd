//! Auxiliary time–frequency branch: channel downsampling into the wavelet
//! width, temporal padding to a power of two, iterative decomposition,
//! topology-aware aggregation of the low-frequency bands, per-level fusion,
//! and the classification head that blends both branches.

use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Result, SgnError};
use crate::graph::{topk_neighbors, topology_score, AdjacencyPowers};
use crate::layers::{
    global_avg_pool, global_avg_pool_vjp, spikes_to_dense, Conv1x1, ConvBn, ConvBnLif, Dropout,
    Fc, LifLayer,
};
use crate::lif::LifParams;
use crate::tensor::{linear_upsample, linear_upsample_vjp, BnMode, DenseTensor, Param};
use crate::wavelet::{decompose, decompose_vjp, FilterBank};

/// Pad the frame axis to the next power of two by appending duplicated
/// copies of the beginning frames; no-op when already a power of two.
pub fn pad_temporal(x: &DenseTensor) -> DenseTensor {
    let (t_dim, c_dim, v_dim) = x.shape();
    let target = t_dim.next_power_of_two();
    if target == t_dim {
        return x.clone();
    }
    let mut out = DenseTensor::zeros(target, c_dim, v_dim);
    for t in 0..target {
        let src_t = if t < t_dim { t } else { t - t_dim };
        for c in 0..c_dim {
            out.row_mut(t, c).copy_from_slice(x.row(src_t, c));
        }
    }
    out
}

/// Adjoint of [`pad_temporal`]: fold appended-frame cotangents back onto the
/// frames they duplicated.
pub fn pad_temporal_vjp(grad: &DenseTensor, t_orig: usize) -> DenseTensor {
    let (t_pad, c_dim, v_dim) = grad.shape();
    if t_pad == t_orig {
        return grad.clone();
    }
    let mut out = DenseTensor::zeros(t_orig, c_dim, v_dim);
    for t in 0..t_pad {
        let dst_t = if t < t_orig { t } else { t - t_orig };
        for c in 0..c_dim {
            let src = grad.row(t, c);
            let dst = out.row_mut(dst_t, c);
            for (d, &g) in dst.iter_mut().zip(src) {
                *d += g;
            }
        }
    }
    out
}

/// Mean over each target's selected neighborhood:
/// `S̄[t,c,v] = (1/k)·Σ_{u∈N_v} S[t,c,u]`.
pub fn tatf_aggregate(s: &DenseTensor, neighbors: &[Vec<usize>]) -> Result<DenseTensor> {
    let (t_dim, c_dim, v_dim) = s.shape();
    if neighbors.len() != v_dim {
        return Err(SgnError::Dimension("one neighbor list per joint required".into()));
    }
    let k = neighbors[0].len() as f64;
    let mut out = DenseTensor::zeros(t_dim, c_dim, v_dim);
    for t in 0..t_dim {
        for c in 0..c_dim {
            let src = s.row(t, c);
            let dst = out.row_mut(t, c);
            for (v, d) in dst.iter_mut().enumerate() {
                let mut acc = 0.0;
                for &u in &neighbors[v] {
                    acc += src[u];
                }
                *d = acc / k;
            }
        }
    }
    Ok(out)
}

/// Adjoint of [`tatf_aggregate`] with the selection held fixed.
pub fn tatf_aggregate_vjp(grad: &DenseTensor, neighbors: &[Vec<usize>]) -> DenseTensor {
    let (t_dim, c_dim, v_dim) = grad.shape();
    let k = neighbors[0].len() as f64;
    let mut out = DenseTensor::zeros(t_dim, c_dim, v_dim);
    for t in 0..t_dim {
        for c in 0..c_dim {
            let g = grad.row(t, c).to_vec();
            let dst = out.row_mut(t, c);
            for (v, &gv) in g.iter().enumerate() {
                for &u in &neighbors[v] {
                    dst[u] += gv / k;
                }
            }
        }
    }
    out
}

/// Per-level blend of detail and aggregated scaling bands:
/// `X = D_up + λ·S̄`.
pub fn fuse_level(d_up: &DenseTensor, s_agg: &DenseTensor, lambda: f64) -> DenseTensor {
    d_up.add(&s_agg.scale(lambda))
}

struct FusionCache {
    t_orig: usize,
    detail_frames: Vec<usize>,
    scaling_frames: Vec<usize>,
    neighbors: Vec<Vec<usize>>,
    /// Aggregated low bands per sample per fused level (for the λ gradient).
    s_agg: Vec<Vec<DenseTensor>>,
    /// Channel-averaged fused response per sample (diagnostics).
    agg_maps: Vec<DenseTensor>,
}

/// The auxiliary multiwavelet branch producing the fused feature vector.
pub struct WaveletFusionHead {
    pub lif_in: LifLayer,
    pub down_group: Conv1x1,
    pub down_proj: ConvBn,
    pub bank: FilterBank,
    pub lambda: Param,
    pub post: ConvBnLif,
    pub k_topo: usize,
    pub levels: usize,
    /// Mean nonzero fraction of each decomposition level's input tensor.
    pub last_level_rates: Vec<f64>,
    cache: Option<FusionCache>,
}

impl WaveletFusionHead {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        name: &str,
        c_l: usize,
        c_mid: usize,
        groups: usize,
        bank: FilterBank,
        levels: usize,
        k_topo: usize,
        lambda_init: f64,
        lif: LifParams,
        rng: &mut ChaCha8Rng,
    ) -> Result<Self> {
        if levels == 0 {
            return Err(SgnError::Config("need at least one decomposition level".into()));
        }
        let m = bank.m;
        Ok(WaveletFusionHead {
            lif_in: LifLayer::new(format!("{name}.in.sn"), lif),
            down_group: Conv1x1::new(format!("{name}.group"), c_l, c_mid, groups, true, rng),
            down_proj: ConvBn::new(&format!("{name}.proj"), c_mid, m, rng),
            bank,
            lambda: Param::scalar(format!("{name}.lambda"), lambda_init),
            post: ConvBnLif::new(&format!("{name}.post"), m, c_l, lif, rng),
            k_topo,
            levels,
            last_level_rates: Vec::new(),
            cache: None,
        })
    }

    /// Two-stage channel reduction into the wavelet coefficient width.
    pub fn downsample_channels(
        &mut self,
        xs: &[DenseTensor],
        mode: BnMode,
    ) -> Result<Vec<DenseTensor>> {
        let spikes = self.lif_in.forward_batch(xs)?;
        let h = self.down_group.forward_batch(&spikes_to_dense(spikes));
        Ok(self.down_proj.forward_batch(&h, mode))
    }

    /// Full branch: downsample, pad, decompose, upsample, aggregate the low
    /// bands over the learned topology, fuse per level, sum, project, pool.
    pub fn forward_batch(
        &mut self,
        xs: &[DenseTensor],
        pa_last: &AdjacencyPowers,
        mode: BnMode,
    ) -> Result<Vec<Vec<f64>>> {
        let down = self.downsample_channels(xs, mode)?;
        let t_orig = down[0].frames();
        let padded: Vec<DenseTensor> = down.par_iter().map(pad_temporal).collect();
        if padded[0].frames() % (1 << self.levels) != 0 {
            return Err(SgnError::Config(format!(
                "{} decomposition levels need at least {} padded frames, have {}",
                self.levels,
                1 << self.levels,
                padded[0].frames()
            )));
        }
        let decs = padded
            .par_iter()
            .map(|p| decompose(p, &self.bank, self.levels))
            .collect::<Result<Vec<_>>>()?;

        self.last_level_rates = (0..self.levels)
            .map(|j| {
                let total: f64 = decs
                    .iter()
                    .zip(&padded)
                    .map(|(dec, p)| {
                        if j == 0 {
                            p.nonzero_fraction()
                        } else {
                            dec.scalings[j - 1].nonzero_fraction()
                        }
                    })
                    .sum();
                total / decs.len() as f64
            })
            .collect();
        let topo = topology_score(pa_last).scores;
        let neighbors = topk_neighbors(&topo, self.k_topo, true)?;
        let lambda = self.lambda.value[0];
        let levels = self.levels;

        let per_sample: Vec<(DenseTensor, Vec<DenseTensor>)> = decs
            .par_iter()
            .map(|dec| {
                let mut agg: Option<DenseTensor> = None;
                let mut s_aggs = Vec::new();
                for j in 0..levels {
                    let s_up = linear_upsample(&dec.scalings[j], t_orig)?;
                    if j + 1 < levels {
                        let d_up = linear_upsample(&dec.details[j], t_orig)?;
                        let s_agg = tatf_aggregate(&s_up, &neighbors)?;
                        let fused = fuse_level(&d_up, &s_agg, lambda);
                        s_aggs.push(s_agg);
                        agg = Some(match agg {
                            None => fused,
                            Some(mut a) => {
                                a.add_assign(&fused);
                                a
                            }
                        });
                    } else {
                        // final level: scaling band joins without interaction
                        agg = Some(match agg {
                            None => s_up,
                            Some(mut a) => {
                                a.add_assign(&s_up);
                                a
                            }
                        });
                    }
                }
                Ok((agg.unwrap(), s_aggs))
            })
            .collect::<Result<Vec<_>>>()?;

        let agg_batch: Vec<DenseTensor> = per_sample.iter().map(|(a, _)| a.clone()).collect();
        let s_agg: Vec<Vec<DenseTensor>> = per_sample.into_iter().map(|(_, s)| s).collect();
        let agg_maps = agg_batch
            .iter()
            .map(|a| {
                let (t_dim, c_dim, v_dim) = a.shape();
                DenseTensor::from_fn(t_dim, 1, v_dim, |t, _, v| {
                    (0..c_dim).map(|c| a.get(t, c, v)).sum::<f64>() / c_dim as f64
                })
            })
            .collect();

        let out = self.post.forward_batch(&agg_batch, mode)?;
        let pooled = out.iter().map(|s| global_avg_pool(s.dense())).collect();

        self.cache = Some(FusionCache {
            t_orig,
            detail_frames: decs[0].details.iter().map(DenseTensor::frames).collect(),
            scaling_frames: decs[0].scalings.iter().map(DenseTensor::frames).collect(),
            neighbors,
            s_agg,
            agg_maps,
        });
        Ok(pooled)
    }

    pub fn backward_batch(&mut self, d_pooled: &[Vec<f64>]) -> Vec<DenseTensor> {
        let cache = self.cache.take().expect("backward without forward");
        let joints = cache.neighbors.len();
        let d_out: Vec<DenseTensor> = d_pooled
            .iter()
            .map(|g| global_avg_pool_vjp(g, cache.t_orig, joints))
            .collect();
        let d_agg = self.post.backward_batch(&d_out);

        let lambda = self.lambda.value[0];
        let levels = self.levels;
        let d_down: Vec<(DenseTensor, f64)> = d_agg
            .par_iter()
            .zip(cache.s_agg.par_iter())
            .map(|(da, s_aggs)| {
                let mut d_details = Vec::with_capacity(levels);
                let mut d_scalings = Vec::with_capacity(levels);
                let mut d_lambda = 0.0;
                for j in 0..levels {
                    let sf = cache.scaling_frames[j];
                    let df = cache.detail_frames[j];
                    if j + 1 < levels {
                        // fused level: d_up gets da, s_agg gets λ·da
                        d_details.push(linear_upsample_vjp(df, da));
                        d_lambda += da
                            .data()
                            .iter()
                            .zip(s_aggs[j].data())
                            .map(|(a, b)| a * b)
                            .sum::<f64>();
                        let d_s_agg = da.scale(lambda);
                        let d_s_up = tatf_aggregate_vjp(&d_s_agg, &cache.neighbors);
                        d_scalings.push(linear_upsample_vjp(sf, &d_s_up));
                    } else {
                        let (t, c, v) = (df, da.channels(), da.joints());
                        d_details.push(DenseTensor::zeros(t, c, v));
                        d_scalings.push(linear_upsample_vjp(sf, da));
                    }
                }
                let d_padded = decompose_vjp(&self.bank, &d_details, &d_scalings);
                (pad_temporal_vjp(&d_padded, cache.t_orig), d_lambda)
            })
            .collect();

        let mut d_down_t = Vec::with_capacity(d_down.len());
        for (dd, dl) in d_down {
            self.lambda.grad[0] += dl;
            d_down_t.push(dd);
        }
        let d_h = self.down_proj.backward_batch(&d_down_t);
        let d_spk = self.down_group.backward_batch(&d_h);
        self.lif_in.backward_batch(&d_spk)
    }

    /// Channel-averaged fused `T×V` response of each sample from the last
    /// forward, with its per-frame mean-square energy curve.
    pub fn response_maps(&self) -> Option<Vec<(DenseTensor, Vec<f64>)>> {
        self.cache.as_ref().map(|c| {
            c.agg_maps
                .iter()
                .map(|m| {
                    let (t_dim, _, v_dim) = m.shape();
                    let energy: Vec<f64> = (0..t_dim)
                        .map(|t| {
                            m.row(t, 0).iter().map(|x| x * x).sum::<f64>() / v_dim as f64
                        })
                        .collect();
                    (m.clone(), energy)
                })
                .collect()
        })
    }

    pub fn visit_params(&mut self, f: &mut dyn FnMut(&mut Param)) {
        self.down_group.visit_params(f);
        self.down_proj.visit_params(f);
        f(&mut self.lambda);
        self.post.visit_params(f);
    }

    pub fn param_count(&self) -> usize {
        self.down_group.param_count() + self.down_proj.param_count() + 1 + self.post.param_count()
    }
}

/// Final head: pooled spiking backbone features blended with the wavelet
/// branch, dropout, and the fully connected classifier.
pub struct Classifier {
    pub lif_backbone: LifLayer,
    pub beta: Param,
    pub dropout: Dropout,
    pub fc: Fc,
    /// Mean nonzero fraction of the fused feature vectors entering the FC.
    pub last_fused_rate: f64,
    cache_dims: (usize, usize),
    cache_xhat: Vec<Vec<f64>>,
}

impl Classifier {
    pub fn new(
        name: &str,
        c_l: usize,
        num_classes: usize,
        dropout: f64,
        beta_init: f64,
        lif: LifParams,
        rng: &mut ChaCha8Rng,
    ) -> Self {
        Classifier {
            lif_backbone: LifLayer::new(format!("{name}.sn"), lif),
            beta: Param::scalar(format!("{name}.beta"), beta_init),
            dropout: Dropout::new(dropout),
            fc: Fc::new(format!("{name}.fc"), c_l, num_classes, rng),
            last_fused_rate: 0.0,
            cache_dims: (0, 0),
            cache_xhat: Vec::new(),
        }
    }

    pub fn forward_batch(
        &mut self,
        x_l: &[DenseTensor],
        x_hat: &[Vec<f64>],
        mode: BnMode,
        rng: &mut ChaCha8Rng,
    ) -> Result<Vec<Vec<f64>>> {
        if x_hat[0].len() != self.fc.c_in {
            return Err(SgnError::Config(format!(
                "classifier expects {} features, wavelet branch provides {}",
                self.fc.c_in,
                x_hat[0].len()
            )));
        }
        let (t_dim, _, v_dim) = x_l[0].shape();
        self.cache_dims = (t_dim, v_dim);
        self.cache_xhat = x_hat.to_vec();
        let spikes = self.lif_backbone.forward_batch(x_l)?;
        let beta = self.beta.value[0];
        let fused: Vec<Vec<f64>> = spikes
            .iter()
            .zip(x_hat)
            .map(|(s, xh)| {
                global_avg_pool(s.dense())
                    .iter()
                    .zip(xh)
                    .map(|(p, h)| p + beta * h)
                    .collect()
            })
            .collect();
        let dropped = self.dropout.forward_batch(&fused, mode, rng);
        self.last_fused_rate = dropped
            .iter()
            .map(|v| v.iter().filter(|x| **x != 0.0).count() as f64 / v.len() as f64)
            .sum::<f64>()
            / dropped.len() as f64;
        Ok(self.fc.forward_batch(&dropped))
    }

    /// Returns gradients for the backbone tensor and the wavelet vector.
    pub fn backward_batch(&mut self, d_logits: &[Vec<f64>]) -> (Vec<DenseTensor>, Vec<Vec<f64>>) {
        let d_dropped = self.fc.backward_batch(d_logits);
        let d_fused = self.dropout.backward_batch(&d_dropped);
        let beta = self.beta.value[0];
        let (t_dim, v_dim) = self.cache_dims;
        let mut d_xhat = Vec::with_capacity(d_fused.len());
        let mut d_pool = Vec::with_capacity(d_fused.len());
        for (g, xh) in d_fused.iter().zip(&self.cache_xhat) {
            self.beta.grad[0] += g.iter().zip(xh).map(|(a, b)| a * b).sum::<f64>();
            d_xhat.push(g.iter().map(|x| x * beta).collect());
            d_pool.push(global_avg_pool_vjp(g, t_dim, v_dim));
        }
        let d_x_l = self.lif_backbone.backward_batch(&d_pool);
        (d_x_l, d_xhat)
    }

    pub fn visit_params(&mut self, f: &mut dyn FnMut(&mut Param)) {
        f(&mut self.beta);
        self.fc.visit_params(f);
    }

    pub fn param_count(&self) -> usize {
        1 + self.fc.param_count()
    }
}
