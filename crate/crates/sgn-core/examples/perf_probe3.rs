use rand::SeedableRng;
use sgn_core::layers::*;
use sgn_core::tensor::{BnMode, DenseTensor};
use sgn_core::lif::LifParams;
use std::time::Instant;

fn main() {
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
    let xs: Vec<DenseTensor> = (0..64)
        .map(|i| DenseTensor::from_fn(16, 64, 25, |t, c, v| ((t + c + v + i) % 5) as f64 * 0.3))
        .collect();
    let mut conv = Conv1x1::new("c", 64, 64, 1, true, &mut rng);
    // warm
    let _ = conv.forward_batch(&xs);
    let t = Instant::now();
    let out = conv.forward_batch(&xs);
    println!("conv fwd 64x(16,64,25): {:?}", t.elapsed());
    let t = Instant::now();
    let _ = conv.backward_batch(&out);
    println!("conv bwd: {:?}", t.elapsed());

    let mut bn = BatchNorm::new("bn", 64);
    let t = Instant::now();
    let _ = bn.forward_batch(&xs, BnMode::Train);
    println!("bn fwd: {:?}", t.elapsed());

    let mut lif = LifLayer::new("l", LifParams::default());
    let t = Instant::now();
    let s = lif.forward_batch(&xs).unwrap();
    println!("lif fwd: {:?}", t.elapsed());
    let t = Instant::now();
    let _ = lif.backward_batch(&xs);
    println!("lif bwd: {:?}", t.elapsed());
    drop(s);

    // raw clone cost
    let t = Instant::now();
    let c = xs.to_vec();
    println!("clone batch: {:?}", t.elapsed());
    drop(c);
}
