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
    for _ in 0..2 {
        let t = Instant::now();
        let g_o = b4.sgc.forward_batch(&x, &b4.powers, BnMode::Train).unwrap();
        println!("  sgc: {:?}", t.elapsed());
        let t = Instant::now();
        let g = b4.attn.forward_batch(&g_o, &b4.powers, BnMode::Train).unwrap();
        println!("  attn: {:?}", t.elapsed());
        let t = Instant::now();
        let f = b4.freq.forward_batch(&g, BnMode::Train).unwrap();
        println!("  freq: {:?}", t.elapsed());
        let t = Instant::now();
        let _r = b4.residual.forward_batch(&x, BnMode::Train);
        println!("  res: {:?}", t.elapsed());
        let _ = f;
    }
}
