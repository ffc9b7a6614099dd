use sgn_core::data::generate_synthetic;
use sgn_core::graph::SkeletonGraph;
use sgn_core::model::*;
use sgn_core::tensor::{BnMode, DenseTensor};
use rand::SeedableRng;
use std::time::Instant;

fn main() {
    let ds = generate_synthetic(5, 100, 25, 16, 7).unwrap();
    let config = ModelConfig { num_classes: 5, joints: 25, ..ModelConfig::tiny() };
    let mut model = Model::build(config, SkeletonGraph::ntu25()).unwrap();
    let raw: Vec<DenseTensor> = ds.samples[..64].iter().map(|s| s.joints.clone()).collect();
    let labels: Vec<usize> = ds.samples[..64].iter().map(|s| s.label).collect();
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
    // warm up
    let _ = model.forward_batch(&raw, BnMode::Train, &mut rng).unwrap();
    let t0 = Instant::now();
    let logits = model.forward_batch(&raw, BnMode::Train, &mut rng).unwrap();
    let t_fwd = t0.elapsed();
    let (_, d) = cross_entropy(&logits, &labels);
    model.zero_grad();
    let t1 = Instant::now();
    model.backward_batch(&d);
    let t_bwd = t1.elapsed();
    println!("batch 64: forward {t_fwd:?} backward {t_bwd:?}");
    // per-stage forward timing
    let t = Instant::now();
    let spikes = model.encoder.forward_batch(&raw.iter().map(|x| sgn_core::data::resize_frames(x, 16)).collect::<Vec<_>>(), BnMode::Train).unwrap();
    println!("encoder: {:?}", t.elapsed());
    let mut x: Vec<DenseTensor> = spikes.into_iter().map(|s| s.into_dense()).collect();
    for (i, block) in model.blocks.iter_mut().enumerate() {
        let t = Instant::now();
        x = block.forward_batch(&x, BnMode::Train).unwrap();
        println!("block{}: {:?}", i + 1, t.elapsed());
    }
    let t = Instant::now();
    let xh = model.fusion.forward_batch(&x, &model.blocks.last().unwrap().powers, BnMode::Train).unwrap();
    println!("fusion: {:?}", t.elapsed());
    let t = Instant::now();
    let _ = model.classifier.forward_batch(&x, &xh, BnMode::Train, &mut rng).unwrap();
    println!("classifier: {:?}", t.elapsed());
}
