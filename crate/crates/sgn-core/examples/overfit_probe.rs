use sgn_core::data::generate_synthetic;
use sgn_core::model::*;
use sgn_core::tensor::{BnMode, DenseTensor};
use sgn_core::graph::SkeletonGraph;
use rand::SeedableRng;

fn chain_graph(v: usize) -> SkeletonGraph {
    let edges: Vec<(usize, usize)> = (0..v - 1).map(|i| (i, i + 1)).collect();
    let mut parents = vec![0usize];
    parents.extend(0..v - 1);
    SkeletonGraph::new(v, edges, Some(parents)).unwrap()
}

fn toy_config() -> ModelConfig {
    ModelConfig {
        channels: vec![(3, 8), (8, 8)],
        joints: 5, frames: 8, heads: 2, k: 3, k_topo: 3,
        wavelet_m: 4, levels: Some(2), num_classes: 2,
        fusion_groups: 2, fusion_mid_divisor: 2, dropout: 0.0,
        ..ModelConfig::default()
    }
}

fn main() {
    let ds = generate_synthetic(2, 4, 5, 8, 13).unwrap();
    let raw: Vec<DenseTensor> = ds.samples.iter().map(|s| s.joints.clone()).collect();
    let labels: Vec<usize> = ds.samples.iter().map(|s| s.label).collect();
    for (lr, mom, cal_passes) in [
        (0.05, 0.0, 50usize),
        (0.1, 0.0, 50),
        (0.02, 0.0, 50),
        (0.01, 0.0, 50),
        (0.05, 0.0, 200),
    ] {
        let mut model = Model::build(toy_config(), chain_graph(5)).unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        for _ in 0..cal_passes {
            let _ = model.forward_batch(&raw, BnMode::Train, &mut rng).unwrap();
        }
        let mut opt = Sgd::new(&mut model, lr, mom, 0.0);
        let mut losses = Vec::new();
        for _ in 0..20 {
            let logits = model.forward_batch(&raw, BnMode::Eval, &mut rng).unwrap();
            let (loss, d) = cross_entropy(&logits, &labels);
            losses.push(loss);
            model.zero_grad();
            model.backward_batch(&d);
            opt.step(&mut model);
        }
        let monotone = losses.windows(2).all(|w| w[1] < w[0]);
        println!("lr={lr} mom={mom} cal={cal_passes}: monotone={monotone} first={:.4} last={:.4}", losses[0], losses[19]);
        if !monotone {
            let bad: Vec<String> = losses.windows(2).enumerate().filter(|(_, w)| w[1] >= w[0]).map(|(i, w)| format!("{}:{:.5}->{:.5}", i, w[0], w[1])).collect();
            println!("   rises: {}", bad.join(" "));
        }
    }
}
