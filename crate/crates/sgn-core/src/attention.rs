//! Topology-shift attention: spiking Q/K/V projections, head-averaged
//! similarity, fusion with the learned topology score, top-k sparse neighbor
//! selection, and aggregation through alternating cyclic channel shifts.
//!
//! Neighbor selection is discrete; gradients treat the selected index sets as
//! constants, so only the value path (and the output projection) trains.

use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Result, SgnError};
use crate::graph::{topk_neighbors, topology_score, AdjacencyPowers};
use crate::layers::ConvBnLif;
use crate::lif::LifParams;
use crate::tensor::{BnMode, DenseTensor, Mat, Param, SpikeTensor};

/// Head-averaged similarity at one step:
/// `Q_t[i,j] = (1/H)·Σ_h (q_{i,h}·k_{j,h}) / d` (the `1/d` scaling is optional).
/// Binary inputs keep every entry in [0, 1] under the scaled form.
pub fn similarity_step(
    q: &SpikeTensor,
    k: &SpikeTensor,
    t: usize,
    heads: usize,
    scale: bool,
) -> Mat {
    let (_, d_total, v_dim) = q.shape();
    debug_assert_eq!(q.shape(), k.shape());
    debug_assert_eq!(d_total % heads, 0);
    let head_dim = d_total / heads;
    let mut out = Mat::zeros(v_dim, v_dim);
    // binary inputs: q[c,i]·k[c,j] contributes k-row adds where q fires
    for c in 0..d_total {
        let qrow = q.dense().row(t, c);
        let krow = k.dense().row(t, c);
        for (i, &qv) in qrow.iter().enumerate() {
            if qv == 0.0 {
                continue;
            }
            let dst = out.row_mut(i);
            for (d, &kv) in dst.iter_mut().zip(krow) {
                *d += kv;
            }
        }
    }
    let norm = if scale { 1.0 / (heads * head_dim) as f64 } else { 1.0 / heads as f64 };
    out.data.iter_mut().for_each(|x| *x *= norm);
    out
}

/// Weighted fusion of the static topology score and the dynamic similarity:
/// `C_t = α·A + (1−α)·Q_t`.
pub fn fuse_scores(topo: &Mat, qt: &Mat, alpha: f64) -> Mat {
    assert_eq!(topo.rows, qt.rows);
    assert_eq!(topo.cols, qt.cols);
    let mut out = Mat::zeros(topo.rows, topo.cols);
    for (o, (a, b)) in out.data.iter_mut().zip(topo.data.iter().zip(&qt.data)) {
        *o = alpha * a + (1.0 - alpha) * b;
    }
    out
}

/// Sum of cyclically shifted neighbor value vectors per target joint; shift
/// direction alternates +1/−1 with neighbor rank. Returns the aggregated
/// `(T, D, V)` tensor and the exact number of scalar additions performed.
pub fn shift_aggregate(
    values: &SpikeTensor,
    neighbors: &[Vec<Vec<usize>>],
    heads: usize,
) -> Result<(DenseTensor, u64)> {
    let (t_dim, d_total, v_dim) = values.shape();
    assert_eq!(neighbors.len(), t_dim, "need one neighbor table per step");
    let head_dim = d_total / heads;
    let mut out = DenseTensor::zeros(t_dim, d_total, v_dim);
    let mut ops: u64 = 0;
    // per-joint value vectors are strided in the (t,c,v) layout; stage each
    // (t, head) slice into a V×d scratch so the shift loop runs contiguous
    let mut scratch = vec![0.0; v_dim * head_dim];
    let mut acc = vec![0.0; head_dim];
    for t in 0..t_dim {
        let table = &neighbors[t];
        assert_eq!(table.len(), v_dim, "need one neighbor list per target joint");
        for list in table {
            for &src in list {
                if src >= v_dim {
                    return Err(SgnError::Contract(format!(
                        "neighbor index {src} outside 0..{v_dim}"
                    )));
                }
            }
        }
        for h in 0..heads {
            let base = h * head_dim;
            for i in 0..head_dim {
                let row = values.dense().row(t, base + i);
                for (v, &x) in row.iter().enumerate() {
                    scratch[v * head_dim + i] = x;
                }
            }
            for (target, list) in table.iter().enumerate() {
                acc.iter_mut().for_each(|a| *a = 0.0);
                for (rank, &src) in list.iter().enumerate() {
                    let dir = if rank % 2 == 0 { 1 } else { -1 };
                    let sv = &scratch[src * head_dim..(src + 1) * head_dim];
                    crate::tensor::cyclic_shift_add(&mut acc, sv, dir);
                    ops += head_dim as u64;
                }
                for (i, &a) in acc.iter().enumerate() {
                    out.set(t, base + i, target, a);
                }
            }
        }
    }
    Ok((out, ops))
}

/// Adjoint of [`shift_aggregate`]: scatter the output cotangent back onto the
/// selected value vectors through the inverse shifts.
pub fn shift_aggregate_vjp(
    grad: &DenseTensor,
    neighbors: &[Vec<Vec<usize>>],
    heads: usize,
) -> DenseTensor {
    let (t_dim, d_total, v_dim) = grad.shape();
    let head_dim = d_total / heads;
    let mut dv = DenseTensor::zeros(t_dim, d_total, v_dim);
    let mut g_scratch = vec![0.0; v_dim * head_dim];
    let mut acc_scratch = vec![0.0; v_dim * head_dim];
    for t in 0..t_dim {
        for h in 0..heads {
            let base = h * head_dim;
            for i in 0..head_dim {
                let row = grad.row(t, base + i);
                for (v, &g) in row.iter().enumerate() {
                    g_scratch[v * head_dim + i] = g;
                }
            }
            acc_scratch.iter_mut().for_each(|a| *a = 0.0);
            for (target, list) in neighbors[t].iter().enumerate() {
                let gv = &g_scratch[target * head_dim..(target + 1) * head_dim];
                for (rank, &src) in list.iter().enumerate() {
                    // inverse of the forward shift
                    let dir = if rank % 2 == 0 { -1 } else { 1 };
                    let dst = &mut acc_scratch[src * head_dim..(src + 1) * head_dim];
                    crate::tensor::cyclic_shift_add(dst, gv, dir);
                }
            }
            for i in 0..head_dim {
                let row = dv.row_mut(t, base + i);
                for (v, r) in row.iter_mut().enumerate() {
                    *r = acc_scratch[v * head_dim + i];
                }
            }
        }
    }
    dv
}

/// Per-step diagnostic record of the attention scores and selections.
pub struct AttnStepDiag {
    pub similarity: Mat,
    pub fused: Mat,
    pub neighbors: Vec<Vec<usize>>,
}

pub struct AttnDiagnostics {
    pub topology: Mat,
    pub steps: Vec<AttnStepDiag>,
    /// How often each joint was selected as a source across steps and targets.
    pub degree: Vec<usize>,
}

pub struct TopoShiftAttention {
    pub name: String,
    pub heads: usize,
    pub k: usize,
    pub scale_similarity: bool,
    pub alpha: Param,
    pub q_proj: ConvBnLif,
    pub k_proj: ConvBnLif,
    pub v_proj: ConvBnLif,
    pub out_proj: ConvBnLif,
    cache_neighbors: Vec<Vec<Vec<Vec<usize>>>>,
    /// Scalar additions spent in aggregation during the last forward.
    pub last_agg_ops: u64,
}

impl TopoShiftAttention {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        name: &str,
        channels: usize,
        heads: usize,
        k: usize,
        alpha_init: f64,
        scale_similarity: bool,
        lif: LifParams,
        rng: &mut ChaCha8Rng,
    ) -> Result<Self> {
        if channels % heads != 0 {
            return Err(SgnError::Config(format!(
                "channel count {channels} not divisible by {heads} heads"
            )));
        }
        Ok(TopoShiftAttention {
            heads,
            k,
            scale_similarity,
            alpha: Param::scalar(format!("{name}.alpha"), alpha_init),
            q_proj: ConvBnLif::new(&format!("{name}.q"), channels, channels, lif, rng),
            k_proj: ConvBnLif::new(&format!("{name}.k"), channels, channels, lif, rng),
            v_proj: ConvBnLif::new(&format!("{name}.v"), channels, channels, lif, rng),
            out_proj: ConvBnLif::new(&format!("{name}.out"), channels, channels, lif, rng),
            name: name.to_string(),
            cache_neighbors: Vec::new(),
            last_agg_ops: 0,
        })
    }

    /// Per-step neighbor tables from fused scores, self-boosted.
    fn select_neighbors(
        &self,
        q: &SpikeTensor,
        k_spk: &SpikeTensor,
        topo: &Mat,
    ) -> Result<Vec<Vec<Vec<usize>>>> {
        let (t_dim, _, _) = q.shape();
        let alpha = self.alpha.value[0];
        (0..t_dim)
            .map(|t| {
                let qt = similarity_step(q, k_spk, t, self.heads, self.scale_similarity);
                let ct = fuse_scores(topo, &qt, alpha);
                topk_neighbors(&ct, self.k, true)
            })
            .collect()
    }

    pub fn forward_batch(
        &mut self,
        xs: &[DenseTensor],
        pa: &AdjacencyPowers,
        mode: BnMode,
    ) -> Result<Vec<DenseTensor>> {
        let q = self.q_proj.forward_batch(xs, mode)?;
        let k_spk = self.k_proj.forward_batch(xs, mode)?;
        let v = self.v_proj.forward_batch(xs, mode)?;
        let topo = topology_score(pa).scores;

        let selected: Vec<Vec<Vec<Vec<usize>>>> = q
            .par_iter()
            .zip(k_spk.par_iter())
            .map(|(qs, ks)| self.select_neighbors(qs, ks, &topo))
            .collect::<Result<Vec<_>>>()?;
        let aggregated: Vec<(DenseTensor, u64)> = v
            .par_iter()
            .zip(selected.par_iter())
            .map(|(vs, nb)| shift_aggregate(vs, nb, self.heads))
            .collect::<Result<Vec<_>>>()?;
        self.last_agg_ops = aggregated.iter().map(|(_, ops)| ops).sum();
        let g: Vec<DenseTensor> = aggregated.into_iter().map(|(g, _)| g).collect();

        let projected = self.out_proj.forward_batch(&g, mode)?;
        self.cache_neighbors = selected;
        Ok(projected
            .into_iter()
            .zip(xs)
            .map(|(p, x)| p.into_dense().add(x))
            .collect())
    }

    pub fn backward_batch(&mut self, grads: &[DenseTensor]) -> Vec<DenseTensor> {
        let d_g = self.out_proj.backward_batch(grads);
        let d_v: Vec<DenseTensor> = d_g
            .par_iter()
            .zip(self.cache_neighbors.par_iter())
            .map(|(dg, nb)| shift_aggregate_vjp(dg, nb, self.heads))
            .collect();
        let d_x_value = self.v_proj.backward_batch(&d_v);
        // residual passthrough; the score path carries no gradient because the
        // selection indices are constants
        grads
            .iter()
            .zip(d_x_value)
            .map(|(g, dv)| g.add(&dv))
            .collect()
    }

    /// Eval-mode trace of scores and selections for one sample.
    pub fn diagnostics(&mut self, x: &DenseTensor, pa: &AdjacencyPowers) -> Result<AttnDiagnostics> {
        let q = self.q_proj.forward_batch(std::slice::from_ref(x), BnMode::Eval)?.remove(0);
        let k_spk = self.k_proj.forward_batch(std::slice::from_ref(x), BnMode::Eval)?.remove(0);
        let topo = topology_score(pa).scores;
        let alpha = self.alpha.value[0];
        let (t_dim, _, v_dim) = q.shape();
        let mut steps = Vec::with_capacity(t_dim);
        let mut degree = vec![0usize; v_dim];
        for t in 0..t_dim {
            let qt = similarity_step(&q, &k_spk, t, self.heads, self.scale_similarity);
            let ct = fuse_scores(&topo, &qt, alpha);
            let neighbors = topk_neighbors(&ct, self.k, true)?;
            for list in &neighbors {
                for &src in list {
                    degree[src] += 1;
                }
            }
            steps.push(AttnStepDiag { similarity: qt, fused: ct, neighbors });
        }
        Ok(AttnDiagnostics { topology: topo, steps, degree })
    }

    pub fn visit_params(&mut self, f: &mut dyn FnMut(&mut Param)) {
        f(&mut self.alpha);
        self.q_proj.visit_params(f);
        self.k_proj.visit_params(f);
        self.v_proj.visit_params(f);
        self.out_proj.visit_params(f);
    }

    pub fn param_count(&self) -> usize {
        1 + self.q_proj.param_count()
            + self.k_proj.param_count()
            + self.v_proj.param_count()
            + self.out_proj.param_count()
    }
}
