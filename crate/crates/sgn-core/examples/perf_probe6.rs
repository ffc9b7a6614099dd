use sgn_core::data::generate_synthetic;
use sgn_core::graph::SkeletonGraph;
use sgn_core::model::*;
use sgn_core::tensor::{BnMode, DenseTensor};
use std::time::Instant;

fn main() {
    let ds = generate_synthetic(5, 100, 25, 16, 7).unwrap();
    let config = ModelConfig { num_classes: 5, joints: 25, ..ModelConfig::tiny() };
    let mut model = Model::build(config, SkeletonGraph::ntu25()).unwrap();
    let raw: Vec<DenseTensor> = ds.samples[..64].iter().map(|s| sgn_core::data::resize_frames(&s.joints, 16)).collect();
    let spikes = model.encoder.forward_batch(&raw, BnMode::Train).unwrap();
    let mut x: Vec<DenseTensor> = spikes.into_iter().map(|s| s.into_dense()).collect();
    for block in model.blocks.iter_mut().take(3) {
        x = block.forward_batch(&x, BnMode::Train).unwrap();
    }
    let b4 = &mut model.blocks[3];
    let g_o = b4.sgc.forward_batch(&x, &b4.powers, BnMode::Train).unwrap();
    let _ = b4.attn.forward_batch(&g_o, &b4.powers, BnMode::Train).unwrap();
    let t = Instant::now();
    let _ = b4.attn.forward_batch(&g_o, &b4.powers, BnMode::Train).unwrap();
    println!("attn.forward_batch total: {:?}", t.elapsed());
    let t = Instant::now();
    let f = b4.freq.forward_batch(&g_o, BnMode::Train).unwrap();
    println!("freq.forward_batch total: {:?}", t.elapsed());
    std::hint::black_box(&f);
    // freq internals
    use sgn_core::frequency::joint_window;
    use sgn_core::tensor::dft_joints;
    let t = Instant::now();
    let pairs: Vec<_> = g_o.iter().map(|g| dft_joints(&joint_window(g, &vec![1.0; 25]))).collect();
    println!("  window+dft: {:?} ({} pairs)", t.elapsed(), pairs.len());
    let t = Instant::now();
    let reals: Vec<DenseTensor> = pairs.iter().map(|p| p.real.clone()).collect();
    let r = b4.freq.re_branch.forward_batch(&reals, BnMode::Train);
    println!("  re branch convbn: {:?}", t.elapsed());
    std::hint::black_box(&r);
}
