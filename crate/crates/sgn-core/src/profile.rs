//! Analytic FLOP counting, firing-rate measurement, synaptic-operation
//! accounting, and MAC/AC energy estimation over a frozen model.
//!
//! Counting conventions: one multiply-accumulate is one FLOP; complex MACs in
//! the joint-axis transform count as four real MACs; per-layer synaptic
//! operations are `fr · T · FLOPs` with `fr` the nonzero fraction of the
//! layer's input. The first encoder convolution is billed at the MAC energy,
//! everything else at the accumulate energy.

use crate::data::Dataset;
use crate::error::{Result, SgnError};
use crate::model::{Model, ModelConfig};
use crate::tensor::DenseTensor;

/// 45 nm per-operation energies in picojoules.
#[derive(Debug, Clone, Copy)]
pub struct EnergyModel {
    pub e_mac_pj: f64,
    pub e_ac_pj: f64,
}

impl Default for EnergyModel {
    fn default() -> Self {
        EnergyModel { e_mac_pj: 4.6, e_ac_pj: 0.9 }
    }
}

/// One analytically counted layer.
#[derive(Debug, Clone)]
pub struct FlopEntry {
    pub name: String,
    pub flops: u64,
    pub is_first_encoder: bool,
}

/// A costed layer of the final report.
#[derive(Debug, Clone)]
pub struct LayerCost {
    pub name: String,
    pub flops: u64,
    pub firing_rate: f64,
    pub sops: f64,
    pub is_first_encoder: bool,
}

#[derive(Debug, Clone)]
pub struct CostReport {
    pub layers: Vec<LayerCost>,
    pub total_flops: u64,
    pub total_sops: f64,
    pub energy_mj: f64,
}

/// `SOPs = fr · T · FLOPs`.
pub fn sops(fr: f64, t: usize, flops: u64) -> f64 {
    debug_assert!((0.0..=1.0).contains(&fr));
    fr * t as f64 * flops as f64
}

/// Energy in millijoules: MAC rate on the first encoder conv's FLOPs, AC rate
/// on every other layer's SOPs.
pub fn energy_mj(layers: &[LayerCost], em: &EnergyModel) -> f64 {
    let mut pj = 0.0;
    for l in layers {
        if l.is_first_encoder {
            pj += em.e_mac_pj * l.flops as f64;
        } else {
            pj += em.e_ac_pj * l.sops;
        }
    }
    pj * 1e-9
}

/// Analytic per-layer FLOP counts for a configuration; data-independent.
/// `input_shape` is `(frames, joints)` of the encoded sequence.
pub fn count_flops(config: &ModelConfig, input_shape: (usize, usize)) -> Vec<FlopEntry> {
    let (t, v) = input_shape;
    let tv = (t * v) as u64;
    let v2t = (v * v * t) as u64;
    let mut out = Vec::new();
    let c0 = config.channels[0].0 as u64;
    out.push(FlopEntry {
        name: "encoder.conv".into(),
        flops: c0 * c0 * tv,
        is_first_encoder: true,
    });
    let k_eff = config.k_effective() as u64;
    for (l, &(c_in, c_out)) in config.channels.iter().enumerate() {
        let (c_in, c_out) = (c_in as u64, c_out as u64);
        let name = format!("block{}", l + 1);
        for n in 0..config.relations {
            out.push(FlopEntry {
                name: format!("{name}.graph.pa{n}"),
                flops: c_in * v2t,
                is_first_encoder: false,
            });
            out.push(FlopEntry {
                name: format!("{name}.graph.rel{n}.conv"),
                flops: c_in * c_out * tv,
                is_first_encoder: false,
            });
        }
        out.push(FlopEntry {
            name: format!("{name}.graph.shortcut.conv"),
            flops: c_in * c_out * tv,
            is_first_encoder: false,
        });
        for proj in ["q", "k", "v", "out"] {
            out.push(FlopEntry {
                name: format!("{name}.attn.{proj}.conv"),
                flops: c_out * c_out * tv,
                is_first_encoder: false,
            });
        }
        out.push(FlopEntry {
            name: format!("{name}.attn.score"),
            flops: c_out * v2t,
            is_first_encoder: false,
        });
        out.push(FlopEntry {
            name: format!("{name}.attn.aggregate"),
            flops: k_eff * (v as u64) * c_out * t as u64,
            is_first_encoder: false,
        });
        out.push(FlopEntry {
            name: format!("{name}.freq.dft"),
            flops: 4 * c_out * v2t,
            is_first_encoder: false,
        });
        for branch in ["re", "im", "fuse1", "fuse2"] {
            out.push(FlopEntry {
                name: format!("{name}.freq.{branch}.conv"),
                flops: c_out * c_out * tv,
                is_first_encoder: false,
            });
        }
        if c_in != c_out {
            out.push(FlopEntry {
                name: format!("{name}.res.conv"),
                flops: c_in * c_out * tv,
                is_first_encoder: false,
            });
        }
    }
    let c_l = config.backbone_channels() as u64;
    let c_mid = c_l / config.fusion_mid_divisor as u64;
    let m = config.wavelet_m as u64;
    out.push(FlopEntry {
        name: "fusion.group".into(),
        flops: c_l * c_mid * tv / config.fusion_groups as u64,
        is_first_encoder: false,
    });
    out.push(FlopEntry {
        name: "fusion.proj.conv".into(),
        flops: c_mid * m * tv,
        is_first_encoder: false,
    });
    let t_pad = t.next_power_of_two() as u64;
    for j in 1..=config.levels_resolved() {
        let t_level = t_pad >> j;
        for filter in ["lam0", "lam1", "gam0", "gam1"] {
            out.push(FlopEntry {
                name: format!("fusion.wavelet.level{j}.{filter}"),
                flops: m * m * t_level * v as u64,
                is_first_encoder: false,
            });
        }
    }
    out.push(FlopEntry {
        name: "fusion.post.conv".into(),
        flops: m * c_l * tv,
        is_first_encoder: false,
    });
    out.push(FlopEntry {
        name: "head.fc".into(),
        flops: c_l * config.num_classes as u64,
        is_first_encoder: false,
    });
    out
}

/// Total analytic FLOPs of a configuration.
pub fn total_flops(config: &ModelConfig) -> u64 {
    count_flops(config, (config.frames, config.joints))
        .iter()
        .map(|e| e.flops)
        .sum()
}

fn weighted_rates(
    model: &mut Model,
    samples: &[DenseTensor],
    chunk: usize,
    collect: impl Fn(&Model) -> Vec<(String, f64)>,
) -> Result<Vec<(String, f64)>> {
    if samples.is_empty() {
        return Err(SgnError::Data("firing-rate measurement needs samples".into()));
    }
    let mut acc: Vec<(String, f64)> = Vec::new();
    let mut total = 0usize;
    for part in samples.chunks(chunk.max(1)) {
        model.infer_batch(part)?;
        let rates = collect(model);
        if acc.is_empty() {
            acc = rates.iter().map(|(n, _)| (n.clone(), 0.0)).collect();
        }
        for (slot, (_, r)) in acc.iter_mut().zip(&rates) {
            slot.1 += r * part.len() as f64;
        }
        total += part.len();
    }
    for slot in &mut acc {
        slot.1 /= total as f64;
    }
    Ok(acc)
}

/// Mean firing rate of every spiking stage over the given samples.
pub fn measure_firing_rate(
    model: &mut Model,
    samples: &[DenseTensor],
    chunk: usize,
) -> Result<Vec<(String, f64)>> {
    weighted_rates(model, samples, chunk, Model::firing_rates)
}

/// Input event rate of every billed layer over the given samples.
fn measure_input_rates(
    model: &mut Model,
    samples: &[DenseTensor],
    chunk: usize,
) -> Result<Vec<(String, f64)>> {
    weighted_rates(model, samples, chunk, cost_rates)
}

/// Per-billed-layer input rates from the model's last forward.
fn cost_rates(model: &Model) -> Vec<(String, f64)> {
    let mut out = vec![(
        model.encoder.conv.name.clone(),
        model.encoder.conv.last_input_rate,
    )];
    for b in &model.blocks {
        for n in 0..b.powers.relations {
            out.push((format!("{}.pa{n}", b.sgc.name), b.sgc.last_input_rate));
        }
        for conv in &b.sgc.relation_convs {
            out.push((conv.name.clone(), conv.last_input_rate));
        }
        out.push((b.sgc.shortcut.conv.name.clone(), b.sgc.shortcut.conv.last_input_rate));
        for proj in [&b.attn.q_proj, &b.attn.k_proj, &b.attn.v_proj, &b.attn.out_proj] {
            out.push((proj.conv.name.clone(), proj.conv.last_input_rate));
        }
        let attn_prefix = b.attn.name.clone();
        let qk_rate = 0.5 * (b.attn.q_proj.lif.last_rate + b.attn.k_proj.lif.last_rate);
        out.push((format!("{attn_prefix}.score"), qk_rate));
        out.push((format!("{attn_prefix}.aggregate"), b.attn.v_proj.lif.last_rate));
        out.push((format!("{}.dft", b.freq.name), b.freq.last_input_rate));
        for branch in [&b.freq.re_branch, &b.freq.im_branch] {
            out.push((branch.conv.name.clone(), branch.conv.last_input_rate));
        }
        for branch in [&b.freq.fuse_sum, &b.freq.fuse_diff] {
            out.push((branch.conv.name.clone(), branch.conv.last_input_rate));
        }
        if let crate::frequency::Residual::Proj(p) = &b.residual {
            out.push((p.conv.name.clone(), p.conv.last_input_rate));
        }
    }
    out.push((model.fusion.down_group.name.clone(), model.fusion.down_group.last_input_rate));
    out.push((model.fusion.down_proj.conv.name.clone(), model.fusion.down_proj.conv.last_input_rate));
    for (j, &rate) in model.fusion.last_level_rates.iter().enumerate() {
        out.push((format!("fusion.wavelet.level{}", j + 1), rate));
    }
    out.push((model.fusion.post.conv.name.clone(), model.fusion.post.conv.last_input_rate));
    out.push((model.classifier.fc.name.clone(), model.classifier.last_fused_rate));
    out
}

/// Assemble the full cost report: analytic FLOPs joined with measured input
/// rates, per-layer SOPs, and the energy estimate.
pub fn profile_model(
    model: &mut Model,
    dataset: &Dataset,
    sample_cap: Option<usize>,
    chunk: usize,
    em: &EnergyModel,
) -> Result<CostReport> {
    let take = sample_cap.unwrap_or(dataset.len()).min(dataset.len());
    let samples: Vec<DenseTensor> =
        dataset.samples[..take].iter().map(|s| s.joints.clone()).collect();
    let rates = measure_input_rates(model, &samples, chunk)?;
    let entries = count_flops(&model.config, (model.config.frames, model.config.joints));
    let t = model.config.frames;
    let mut layers = Vec::with_capacity(entries.len());
    for e in entries {
        let rate = lookup_rate(&rates, &e.name)?;
        layers.push(LayerCost {
            sops: sops(rate, t, e.flops),
            name: e.name,
            flops: e.flops,
            firing_rate: rate,
            is_first_encoder: e.is_first_encoder,
        });
    }
    let total_flops = layers.iter().map(|l| l.flops).sum();
    let total_sops = layers.iter().map(|l| l.sops).sum();
    let energy = energy_mj(&layers, em);
    Ok(CostReport { layers, total_flops, total_sops, energy_mj: energy })
}

fn lookup_rate(rates: &[(String, f64)], name: &str) -> Result<f64> {
    // wavelet filters share their level's input rate
    let key = if let Some(idx) = name.find(".lam").or_else(|| name.find(".gam")) {
        &name[..idx]
    } else {
        name
    };
    rates
        .iter()
        .find(|(n, _)| n == key)
        .map(|(_, r)| *r)
        .ok_or_else(|| SgnError::Config(format!("no rate source for layer {name:?}")))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::generate_synthetic;
    use crate::graph::SkeletonGraph;
    use approx::assert_relative_eq;

    #[test]
    fn conv_flop_formula() {
        // 3 -> 64 channels over 16 frames and 25 joints: 76,800 MACs
        assert_eq!(3u64 * 64 * 16 * 25, 76_800);
        let config = ModelConfig::default();
        let entries = count_flops(&config, (16, 25));
        let fc = entries.iter().find(|e| e.name == "head.fc").unwrap();
        assert_eq!(fc.flops, 256 * 60);
    }

    #[test]
    fn sops_formula_is_the_product() {
        assert_eq!(sops(0.5, 4, 10), 20.0);
        assert_eq!(sops(0.0, 100, 12345), 0.0);
        assert_eq!(sops(1.0, 1, 777), 777.0);
    }

    #[test]
    fn energy_examples() {
        let em = EnergyModel::default();
        // 1 G SOPs at 0.9 pJ -> 0.9 mJ
        let layers = vec![LayerCost {
            name: "x".into(),
            flops: 0,
            firing_rate: 1.0,
            sops: 1e9,
            is_first_encoder: false,
        }];
        assert_relative_eq!(energy_mj(&layers, &em), 0.9, max_relative = 1e-12);
        // 0.01 G first-layer MACs -> 0.046 mJ
        let layers = vec![LayerCost {
            name: "enc".into(),
            flops: 10_000_000,
            firing_rate: 1.0,
            sops: 0.0,
            is_first_encoder: true,
        }];
        assert_relative_eq!(energy_mj(&layers, &em), 0.046, max_relative = 1e-12);
        // zero activity still bills the encoder
        let layers = vec![
            LayerCost {
                name: "enc".into(),
                flops: 1000,
                firing_rate: 0.0,
                sops: 0.0,
                is_first_encoder: true,
            },
            LayerCost {
                name: "conv".into(),
                flops: 99999,
                firing_rate: 0.0,
                sops: 0.0,
                is_first_encoder: false,
            },
        ];
        assert_relative_eq!(energy_mj(&layers, &em), 4.6 * 1000.0 * 1e-9, max_relative = 1e-12);
    }

    #[test]
    fn energy_is_monotone_in_firing_rates() {
        let em = EnergyModel::default();
        let mut state = 0x1234_5678_u64;
        let mut rand = || {
            state ^= state << 13;
            state ^= state >> 7;
            state ^= state << 17;
            (state >> 11) as f64 / (1u64 << 53) as f64
        };
        for _ in 0..50 {
            let mut layers: Vec<LayerCost> = (0..6)
                .map(|i| {
                    let flops = (1000.0 + rand() * 1e6) as u64;
                    let fr = rand();
                    LayerCost {
                        name: format!("l{i}"),
                        flops,
                        firing_rate: fr,
                        sops: sops(fr, 16, flops),
                        is_first_encoder: i == 0,
                    }
                })
                .collect();
            let before = energy_mj(&layers, &em);
            let idx = 1 + (rand() * 4.9) as usize;
            let bumped = (layers[idx].firing_rate + 0.3).min(1.0);
            layers[idx].firing_rate = bumped;
            layers[idx].sops = sops(bumped, 16, layers[idx].flops);
            let after = energy_mj(&layers, &em);
            assert!(after >= before);
        }
    }

    #[test]
    fn counting_is_config_only() {
        let config = ModelConfig::tiny();
        let a = count_flops(&config, (16, 25));
        let b = count_flops(&config, (16, 25));
        assert_eq!(a.len(), b.len());
        for (x, y) in a.iter().zip(&b) {
            assert_eq!(x.flops, y.flops);
            assert_eq!(x.name, y.name);
        }
    }

    #[test]
    fn report_joins_rates_and_respects_the_sops_identity() {
        let config = ModelConfig {
            num_classes: 3,
            joints: 25,
            ..ModelConfig {
                channels: vec![(3, 8), (8, 8)],
                heads: 2,
                wavelet_m: 4,
                levels: Some(2),
                fusion_groups: 2,
                fusion_mid_divisor: 2,
                ..ModelConfig::default()
            }
        };
        let mut model = Model::build(config, SkeletonGraph::ntu25()).unwrap();
        let ds = generate_synthetic(3, 4, 25, 16, 3).unwrap();
        let report =
            profile_model(&mut model, &ds, Some(8), 8, &EnergyModel::default()).unwrap();
        assert!(!report.layers.is_empty());
        let t = 16;
        for l in &report.layers {
            assert!((0.0..=1.0).contains(&l.firing_rate), "{}: fr {}", l.name, l.firing_rate);
            assert_relative_eq!(l.sops, l.firing_rate * t as f64 * l.flops as f64);
        }
        assert_eq!(
            report.layers.iter().filter(|l| l.is_first_encoder).count(),
            1
        );
        assert!(report.energy_mj >= 0.0);
    }

    #[test]
    fn firing_rates_are_bounded_and_deterministic() {
        let config = ModelConfig {
            channels: vec![(3, 8), (8, 8)],
            joints: 25,
            num_classes: 3,
            heads: 2,
            wavelet_m: 4,
            levels: Some(2),
            fusion_groups: 2,
            fusion_mid_divisor: 2,
            ..ModelConfig::default()
        };
        let mut model = Model::build(config, SkeletonGraph::ntu25()).unwrap();
        let ds = generate_synthetic(3, 4, 25, 16, 5).unwrap();
        let samples: Vec<DenseTensor> = ds.samples.iter().map(|s| s.joints.clone()).collect();
        let a = measure_firing_rate(&mut model, &samples, 4).unwrap();
        let b = measure_firing_rate(&mut model, &samples, 4).unwrap();
        assert_eq!(a, b);
        for (name, r) in &a {
            assert!((0.0..=1.0).contains(r), "{name}: rate {r}");
        }
        // all-zero input with zero biases stays silent everywhere
        let zeros: Vec<DenseTensor> = (0..2).map(|_| DenseTensor::zeros(16, 3, 25)).collect();
        let silent = measure_firing_rate(&mut model, &zeros, 2).unwrap();
        for (name, r) in &silent {
            assert_eq!(*r, 0.0, "{name} fired on zero input");
        }
    }
}
