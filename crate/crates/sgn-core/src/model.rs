//! Backbone assembly (stacked graph-conv → attention → frequency blocks),
//! the wavelet fusion head, surrogate-gradient training with SGD, modality
//! derivation, and logit-averaging ensembles.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::attention::TopoShiftAttention;
use crate::data::{resize_frames, Dataset};
use crate::error::{Result, SgnError};
use crate::frequency::{block_compose, FrequencyConv, Residual};
use crate::fusion::{Classifier, WaveletFusionHead};
use crate::graph::{normalize_adjacency, AdjacencyPowers, SkeletonGraph};
use crate::layers::spikes_to_dense;
use crate::lif::LifParams;
use crate::sgc::{SpikeEncoder, SpikingGraphConv};
use crate::tensor::{BnMode, DenseTensor, Param};
use crate::wavelet::{build_filter_bank_with, HighPassMode};

/// Full architecture description; every default is the reference setting.
#[derive(Debug, Clone)]
pub struct ModelConfig {
    /// Input/output channel pairs of the stacked blocks.
    pub channels: Vec<(usize, usize)>,
    pub joints: usize,
    pub frames: usize,
    /// Relation slices in the adjacency-power stack.
    pub relations: usize,
    pub heads: usize,
    /// Neighbors per joint in the sparse attention.
    pub k: usize,
    /// Neighbors per joint in the wavelet-branch aggregation.
    pub k_topo: usize,
    /// Wavelet coefficient count (channel width of the decomposition).
    pub wavelet_m: usize,
    /// Decomposition levels; `None` derives ⌊log2 T_padded⌋.
    pub levels: Option<usize>,
    pub num_classes: usize,
    pub lif: LifParams,
    pub alpha_init: f64,
    pub lambda_init: f64,
    pub beta_init: f64,
    pub dropout: f64,
    /// Groups of the first downsampling conv in the wavelet branch.
    pub fusion_groups: usize,
    /// C_mid = C_L / this divisor in the wavelet branch.
    pub fusion_mid_divisor: usize,
    /// Scale Q·K dot products by 1/d before fusing with the topology score.
    pub scale_similarity: bool,
    pub high_pass: HighPassMode,
    /// Clamp block outputs back to {0,1} (ablation switch).
    pub rebinarize: bool,
    pub seed: u64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            channels: vec![(3, 64), (64, 64), (64, 128), (128, 256)],
            joints: 25,
            frames: 16,
            relations: 3,
            heads: 4,
            k: 8,
            k_topo: 6,
            wavelet_m: 8,
            levels: Some(3),
            num_classes: 60,
            lif: LifParams::default(),
            alpha_init: 0.7,
            lambda_init: 0.1,
            beta_init: 1.0,
            dropout: 0.3,
            fusion_groups: 8,
            fusion_mid_divisor: 4,
            scale_similarity: true,
            high_pass: HighPassMode::ScaledLowPass,
            rebinarize: false,
            seed: 1,
        }
    }
}

impl ModelConfig {
    /// Shrunken channel chain for CI-scale runs.
    pub fn tiny() -> Self {
        ModelConfig {
            channels: vec![(3, 16), (16, 16), (16, 32), (32, 64)],
            ..ModelConfig::default()
        }
    }

    pub fn levels_resolved(&self) -> usize {
        match self.levels {
            Some(j) => j,
            None => {
                let t_pad = self.frames.next_power_of_two();
                (t_pad as f64).log2().floor() as usize
            }
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.channels.is_empty() {
            return Err(SgnError::Config("need at least one block".into()));
        }
        for w in self.channels.windows(2) {
            if w[0].1 != w[1].0 {
                return Err(SgnError::Config(format!(
                    "channel chain broken: block outputs {} but next expects {}",
                    w[0].1, w[1].0
                )));
            }
        }
        if self.num_classes == 0 || self.joints == 0 || self.frames == 0 {
            return Err(SgnError::Config("counts must be positive".into()));
        }
        let c_l = self.backbone_channels();
        if c_l % self.fusion_mid_divisor != 0 {
            return Err(SgnError::Config("fusion mid divisor must divide C_L".into()));
        }
        let c_mid = c_l / self.fusion_mid_divisor;
        if c_l % self.fusion_groups != 0 || c_mid % self.fusion_groups != 0 {
            return Err(SgnError::Config("fusion groups must divide C_L and C_mid".into()));
        }
        let t_pad = self.frames.next_power_of_two();
        if (1 << self.levels_resolved()) > t_pad {
            return Err(SgnError::Config(format!(
                "{} decomposition levels exceed padded length {t_pad}",
                self.levels_resolved()
            )));
        }
        self.lif.validate()?;
        Ok(())
    }

    pub fn backbone_channels(&self) -> usize {
        self.channels.last().unwrap().1
    }

    /// k clamped to the joint count for small graphs.
    pub fn k_effective(&self) -> usize {
        self.k.min(self.joints)
    }

    pub fn k_topo_effective(&self) -> usize {
        self.k_topo.min(self.joints)
    }
}

/// One backbone stage: graph conv, attention, frequency conv, residual.
pub struct Block {
    pub powers: AdjacencyPowers,
    pub sgc: SpikingGraphConv,
    pub attn: TopoShiftAttention,
    pub freq: FrequencyConv,
    pub residual: Residual,
    rebinarize: bool,
    clamp_mask: Vec<DenseTensor>,
}

impl Block {
    pub fn forward_batch(&mut self, xs: &[DenseTensor], mode: BnMode) -> Result<Vec<DenseTensor>> {
        let mut g_o = self.sgc.forward_batch(xs, &self.powers, mode)?;
        if self.rebinarize {
            self.clamp_mask = g_o
                .iter()
                .map(|t| t.map(|x| if x > 1.0 { 0.0 } else { 1.0 }))
                .collect();
            g_o = g_o.into_iter().map(|t| t.map(|x| x.min(1.0))).collect();
        }
        let g = self.attn.forward_batch(&g_o, &self.powers, mode)?;
        let f = self.freq.forward_batch(&g, mode)?;
        let r = self.residual.forward_batch(xs, mode);
        block_compose(&f, &g, &r)
    }

    pub fn backward_batch(&mut self, grads: &[DenseTensor]) -> Vec<DenseTensor> {
        let d_g_from_f = self.freq.backward_batch(grads);
        let d_g: Vec<DenseTensor> = grads.iter().zip(&d_g_from_f).map(|(a, b)| a.add(b)).collect();
        let mut d_go = self.attn.backward_batch(&d_g);
        if self.rebinarize {
            d_go = d_go
                .iter()
                .zip(&self.clamp_mask)
                .map(|(g, m)| {
                    let mut out = g.clone();
                    for (o, &keep) in out.data_mut().iter_mut().zip(m.data()) {
                        *o *= keep;
                    }
                    out
                })
                .collect();
        }
        let mut d_x = self.sgc.backward_batch(&d_go, &mut self.powers);
        let d_res = self.residual.backward_batch(grads);
        for (dx, dr) in d_x.iter_mut().zip(&d_res) {
            dx.add_assign(dr);
        }
        d_x
    }

    pub fn visit_params(&mut self, f: &mut dyn FnMut(&mut Param)) {
        f(&mut self.powers.pa);
        self.sgc.visit_params(f);
        self.attn.visit_params(f);
        self.freq.visit_params(f);
        self.residual.visit_params(f);
    }

    pub fn param_count(&self) -> usize {
        self.powers.pa.len()
            + self.sgc.param_count()
            + self.attn.param_count()
            + self.freq.param_count()
            + self.residual.param_count()
    }
}

pub struct Model {
    pub config: ModelConfig,
    pub graph: SkeletonGraph,
    pub encoder: SpikeEncoder,
    pub blocks: Vec<Block>,
    pub fusion: WaveletFusionHead,
    pub classifier: Classifier,
}

impl Model {
    pub fn build(config: ModelConfig, graph: SkeletonGraph) -> Result<Model> {
        config.validate()?;
        if graph.joints != config.joints {
            return Err(SgnError::Config(format!(
                "graph has {} joints, config expects {}",
                graph.joints, config.joints
            )));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let a_norm = normalize_adjacency(&graph.adjacency())?;
        let c_in0 = config.channels[0].0;
        let encoder = SpikeEncoder::new(c_in0, c_in0, config.lif, &mut rng);
        let mut blocks = Vec::with_capacity(config.channels.len());
        for (l, &(c_in, c_out)) in config.channels.iter().enumerate() {
            let name = format!("block{}", l + 1);
            let powers =
                AdjacencyPowers::from_normalized(format!("{name}.pa"), &a_norm, config.relations)?;
            let sgc = SpikingGraphConv::new(
                &format!("{name}.graph"),
                c_in,
                c_out,
                config.relations,
                config.lif,
                &mut rng,
            );
            let attn = TopoShiftAttention::new(
                &format!("{name}.attn"),
                c_out,
                config.heads,
                config.k_effective(),
                config.alpha_init,
                config.scale_similarity,
                config.lif,
                &mut rng,
            )?;
            let freq = FrequencyConv::new(
                &format!("{name}.freq"),
                c_out,
                config.joints,
                config.lif,
                &mut rng,
            );
            let residual = Residual::new(&format!("{name}.res"), c_in, c_out, &mut rng);
            blocks.push(Block {
                powers,
                sgc,
                attn,
                freq,
                residual,
                rebinarize: config.rebinarize,
                clamp_mask: Vec::new(),
            });
        }
        let c_l = config.backbone_channels();
        let bank = build_filter_bank_with(config.wavelet_m, config.high_pass);
        let fusion = WaveletFusionHead::new(
            "fusion",
            c_l,
            c_l / config.fusion_mid_divisor,
            config.fusion_groups,
            bank,
            config.levels_resolved(),
            config.k_topo_effective(),
            config.lambda_init,
            config.lif,
            &mut rng,
        )?;
        let classifier = Classifier::new(
            "head",
            c_l,
            config.num_classes,
            config.dropout,
            config.beta_init,
            config.lif,
            &mut rng,
        );
        Ok(Model { config, graph, encoder, blocks, fusion, classifier })
    }

    /// Forward over raw `(T, 3, V)` batches. Sequences are resized to the
    /// configured frame count on entry.
    pub fn forward_batch(
        &mut self,
        raw: &[DenseTensor],
        mode: BnMode,
        rng: &mut ChaCha8Rng,
    ) -> Result<Vec<Vec<f64>>> {
        if raw.is_empty() {
            return Err(SgnError::Data("empty batch".into()));
        }
        if raw[0].joints() != self.config.joints {
            return Err(SgnError::Dimension(format!(
                "model expects {} joints, batch has {}",
                self.config.joints,
                raw[0].joints()
            )));
        }
        let sized: Vec<DenseTensor> = raw
            .iter()
            .map(|x| resize_frames(x, self.config.frames))
            .collect();
        let spikes = self.encoder.forward_batch(&sized, mode)?;
        let mut x = spikes_to_dense(spikes);
        for block in &mut self.blocks {
            x = block.forward_batch(&x, mode)?;
        }
        let x_hat = self
            .fusion
            .forward_batch(&x, &self.blocks.last().unwrap().powers, mode)?;
        self.classifier.forward_batch(&x, &x_hat, mode, rng)
    }

    /// Eval-mode forward without dropout randomness.
    pub fn infer_batch(&mut self, raw: &[DenseTensor]) -> Result<Vec<Vec<f64>>> {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        self.forward_batch(raw, BnMode::Eval, &mut rng)
    }

    pub fn backward_batch(&mut self, d_logits: &[Vec<f64>]) {
        let (d_x_cls, d_xhat) = self.classifier.backward_batch(d_logits);
        let d_x_fusion = self.fusion.backward_batch(&d_xhat);
        let mut d_x: Vec<DenseTensor> = d_x_cls
            .iter()
            .zip(&d_x_fusion)
            .map(|(a, b)| a.add(b))
            .collect();
        for block in self.blocks.iter_mut().rev() {
            d_x = block.backward_batch(&d_x);
        }
        self.encoder.backward_batch(&d_x);
    }

    pub fn visit_params(&mut self, f: &mut dyn FnMut(&mut Param)) {
        self.encoder.visit_params(f);
        for block in &mut self.blocks {
            block.visit_params(f);
        }
        self.fusion.visit_params(f);
        self.classifier.visit_params(f);
    }

    pub fn param_count(&mut self) -> usize {
        let mut n = 0;
        self.visit_params(&mut |p| n += p.len());
        n
    }

    pub fn zero_grad(&mut self) {
        self.visit_params(&mut Param::zero_grad);
    }

    /// Mean firing rate of every spiking stage in the last forward.
    pub fn firing_rates(&self) -> Vec<(String, f64)> {
        let mut out = vec![(self.encoder.lif.name.clone(), self.encoder.lif.last_rate)];
        for b in &self.blocks {
            for l in [
                &b.sgc.lif_main,
                &b.sgc.lif_short,
                &b.attn.q_proj.lif,
                &b.attn.k_proj.lif,
                &b.attn.v_proj.lif,
                &b.attn.out_proj.lif,
                &b.freq.lif_sum,
                &b.freq.lif_diff,
                &b.freq.fuse_sum.lif,
                &b.freq.fuse_diff.lif,
            ] {
                out.push((l.name.clone(), l.last_rate));
            }
        }
        for l in [&self.fusion.lif_in, &self.fusion.post.lif, &self.classifier.lif_backbone] {
            out.push((l.name.clone(), l.last_rate));
        }
        out
    }
}

// ── loss ─────────────────────────────────────────────────────────────────

/// Mean cross-entropy over the batch with softmax gradients.
pub fn cross_entropy(logits: &[Vec<f64>], labels: &[usize]) -> (f64, Vec<Vec<f64>>) {
    assert_eq!(logits.len(), labels.len());
    let n = logits.len() as f64;
    let mut loss = 0.0;
    let mut grads = Vec::with_capacity(logits.len());
    for (row, &label) in logits.iter().zip(labels) {
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let exps: Vec<f64> = row.iter().map(|x| (x - max).exp()).collect();
        let z: f64 = exps.iter().sum();
        loss += -(exps[label] / z).ln();
        grads.push(
            exps.iter()
                .enumerate()
                .map(|(i, e)| {
                    let p = e / z;
                    (if i == label { p - 1.0 } else { p }) / n
                })
                .collect(),
        );
    }
    (loss / n, grads)
}

// ── optimizer ────────────────────────────────────────────────────────────

/// SGD with momentum and decoupled weight-decay exclusions (batch-norm affine
/// parameters and the scalar blend coefficients never decay).
pub struct Sgd {
    pub lr: f64,
    pub momentum: f64,
    pub weight_decay: f64,
    buffers: Vec<Vec<f64>>,
}

impl Sgd {
    pub fn new(model: &mut Model, lr: f64, momentum: f64, weight_decay: f64) -> Self {
        let mut buffers = Vec::new();
        model.visit_params(&mut |p| buffers.push(vec![0.0; p.len()]));
        Sgd { lr, momentum, weight_decay, buffers }
    }

    pub fn step(&mut self, model: &mut Model) {
        let mut idx = 0;
        let (lr, mu, wd) = (self.lr, self.momentum, self.weight_decay);
        let buffers = &mut self.buffers;
        model.visit_params(&mut |p| {
            let buf = &mut buffers[idx];
            idx += 1;
            if !p.trainable {
                return;
            }
            for i in 0..p.value.len() {
                let mut g = p.grad[i];
                if p.decay {
                    g += wd * p.value[i];
                }
                buf[i] = mu * buf[i] + g;
                p.value[i] -= lr * buf[i];
            }
        });
    }
}

// ── training ─────────────────────────────────────────────────────────────

#[derive(Debug, Clone)]
pub struct TrainConfig {
    pub lr: f64,
    pub momentum: f64,
    pub weight_decay: f64,
    pub batch_size: usize,
    pub epochs: usize,
    /// Epoch at which the learning rate is multiplied by `lr_decay`.
    pub lr_decay_epoch: usize,
    pub lr_decay: f64,
    pub seed: u64,
    /// Stop once test accuracy reaches this level, when set.
    pub target_accuracy: Option<f64>,
    /// Auxiliary loss weight; accepted for configuration parity, unused by
    /// the plain cross-entropy objective.
    pub aux_loss_weight: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            lr: 0.1,
            momentum: 0.9,
            weight_decay: 1e-4,
            batch_size: 64,
            epochs: 150,
            lr_decay_epoch: 110,
            lr_decay: 0.1,
            seed: 1,
            target_accuracy: None,
            aux_loss_weight: 0.03,
        }
    }
}

#[derive(Debug, Clone)]
pub struct EpochStats {
    pub epoch: usize,
    pub lr: f64,
    pub train_loss: f64,
    pub train_accuracy: f64,
    pub test_accuracy: f64,
}

/// Learning rate at a given epoch under the step schedule.
pub fn lr_at_epoch(cfg: &TrainConfig, epoch: usize) -> f64 {
    if epoch >= cfg.lr_decay_epoch {
        cfg.lr * cfg.lr_decay
    } else {
        cfg.lr
    }
}

/// Mean accuracy of eval-mode predictions over a dataset.
pub fn evaluate(model: &mut Model, ds: &Dataset, batch_size: usize) -> Result<f64> {
    let mut hits = 0usize;
    for chunk in ds.samples.chunks(batch_size.max(1)) {
        let raw: Vec<DenseTensor> = chunk.iter().map(|s| s.joints.clone()).collect();
        let logits = model.infer_batch(&raw)?;
        for (row, s) in logits.iter().zip(chunk) {
            let pred = argmax(row);
            if pred == s.label {
                hits += 1;
            }
        }
    }
    Ok(hits as f64 / ds.len() as f64)
}

pub fn argmax(row: &[f64]) -> usize {
    row.iter()
        .enumerate()
        .max_by(|a, b| a.1.total_cmp(b.1))
        .map(|(i, _)| i)
        .unwrap()
}

/// Seeded mini-batch SGD with the step schedule; returns per-epoch history.
pub fn train(
    model: &mut Model,
    train_set: &Dataset,
    test_set: &Dataset,
    cfg: &TrainConfig,
) -> Result<Vec<EpochStats>> {
    if train_set.is_empty() {
        return Err(SgnError::Data("empty training set".into()));
    }
    let mut opt = Sgd::new(model, cfg.lr, cfg.momentum, cfg.weight_decay);
    let mut shuffle_rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut dropout_rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x5DEECE66D);
    let mut history = Vec::new();
    let mut order: Vec<usize> = (0..train_set.len()).collect();
    for epoch in 0..cfg.epochs {
        opt.lr = lr_at_epoch(cfg, epoch);
        order.shuffle(&mut shuffle_rng);
        let mut epoch_loss = 0.0;
        let mut hits = 0usize;
        for batch_idx in order.chunks(cfg.batch_size) {
            let raw: Vec<DenseTensor> = batch_idx
                .iter()
                .map(|&i| train_set.samples[i].joints.clone())
                .collect();
            let labels: Vec<usize> =
                batch_idx.iter().map(|&i| train_set.samples[i].label).collect();
            let logits = model.forward_batch(&raw, BnMode::Train, &mut dropout_rng)?;
            let (loss, d_logits) = cross_entropy(&logits, &labels);
            if !loss.is_finite() {
                return Err(SgnError::Numerical(format!(
                    "training loss diverged at epoch {epoch}"
                )));
            }
            epoch_loss += loss * labels.len() as f64;
            hits += logits
                .iter()
                .zip(&labels)
                .filter(|(row, &l)| argmax(row) == l)
                .count();
            model.zero_grad();
            model.backward_batch(&d_logits);
            opt.step(model);
        }
        let test_accuracy = if test_set.is_empty() {
            0.0
        } else {
            evaluate(model, test_set, cfg.batch_size)?
        };
        history.push(EpochStats {
            epoch,
            lr: opt.lr,
            train_loss: epoch_loss / train_set.len() as f64,
            train_accuracy: hits as f64 / train_set.len() as f64,
            test_accuracy,
        });
        if let Some(target) = cfg.target_accuracy {
            if test_accuracy >= target {
                break;
            }
        }
    }
    Ok(history)
}

// ── modalities and ensembles ─────────────────────────────────────────────

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Modality {
    Joint,
    Bone,
    JointMotion,
    BoneMotion,
}

impl Modality {
    pub const ALL: [Modality; 4] =
        [Modality::Joint, Modality::Bone, Modality::JointMotion, Modality::BoneMotion];

    pub fn name(&self) -> &'static str {
        match self {
            Modality::Joint => "joint",
            Modality::Bone => "bone",
            Modality::JointMotion => "joint_motion",
            Modality::BoneMotion => "bone_motion",
        }
    }

    pub fn parse(s: &str) -> Result<Modality> {
        match s {
            "joint" => Ok(Modality::Joint),
            "bone" => Ok(Modality::Bone),
            "joint_motion" => Ok(Modality::JointMotion),
            "bone_motion" => Ok(Modality::BoneMotion),
            other => Err(SgnError::Config(format!("unknown modality {other:?}"))),
        }
    }
}

/// Derive a modality stream from raw joint coordinates. Bone streams need the
/// graph's parent table; motion streams difference consecutive frames with a
/// zero last frame.
pub fn derive_modality(x: &DenseTensor, kind: Modality, graph: &SkeletonGraph) -> Result<DenseTensor> {
    match kind {
        Modality::Joint => Ok(x.clone()),
        Modality::Bone => {
            let parents = graph.parents.as_ref().ok_or_else(|| {
                SgnError::Config("bone modality needs a parent table in the graph".into())
            })?;
            let (t_dim, c_dim, v_dim) = x.shape();
            Ok(DenseTensor::from_fn(t_dim, c_dim, v_dim, |t, c, v| {
                x.get(t, c, v) - x.get(t, c, parents[v])
            }))
        }
        Modality::JointMotion => Ok(frame_difference(x)),
        Modality::BoneMotion => {
            let bone = derive_modality(x, Modality::Bone, graph)?;
            Ok(frame_difference(&bone))
        }
    }
}

fn frame_difference(x: &DenseTensor) -> DenseTensor {
    let (t_dim, c_dim, v_dim) = x.shape();
    DenseTensor::from_fn(t_dim, c_dim, v_dim, |t, c, v| {
        if t + 1 < t_dim {
            x.get(t + 1, c, v) - x.get(t, c, v)
        } else {
            0.0
        }
    })
}

/// Apply a modality to every sample of a dataset.
pub fn derive_modality_dataset(ds: &Dataset, kind: Modality, graph: &SkeletonGraph) -> Result<Dataset> {
    let samples = ds
        .samples
        .iter()
        .map(|s| {
            Ok(crate::data::Sample {
                label: s.label,
                joints: derive_modality(&s.joints, kind, graph)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Dataset { samples, num_classes: ds.num_classes })
}

/// Arithmetic mean of per-stream logits.
pub fn ensemble_logits(streams: &[Vec<f64>]) -> Result<Vec<f64>> {
    if streams.is_empty() {
        return Err(SgnError::Config("ensemble needs at least one stream".into()));
    }
    let n = streams[0].len();
    if streams.iter().any(|s| s.len() != n) {
        return Err(SgnError::Config("ensemble streams disagree on class count".into()));
    }
    let mut out = vec![0.0; n];
    for s in streams {
        for (o, &x) in out.iter_mut().zip(s) {
            *o += x;
        }
    }
    out.iter_mut().for_each(|x| *x /= streams.len() as f64);
    Ok(out)
}
