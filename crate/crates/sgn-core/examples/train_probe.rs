use sgn_core::data::generate_synthetic;
use sgn_core::graph::SkeletonGraph;
use sgn_core::model::*;
use std::time::Instant;

fn main() {
    for (data_seed, batch, lr) in [(7u64, 16usize, 0.1f64), (8, 16, 0.1), (9, 16, 0.1), (7, 32, 0.1)] {
        let ds = generate_synthetic(5, 100, 25, 16, data_seed).unwrap();
        let (train_set, test_set) = ds.split(20);
        let config = ModelConfig { num_classes: 5, joints: 25, seed: 1, ..ModelConfig::tiny() };
        let mut model = Model::build(config, SkeletonGraph::ntu25()).unwrap();
        let cfg = TrainConfig {
            epochs: 30,
            batch_size: batch,
            lr,
            target_accuracy: Some(0.9),
            ..TrainConfig::default()
        };
        let t1 = Instant::now();
        let hist = train(&mut model, &train_set, &test_set, &cfg).unwrap();
        let last = hist.last().unwrap();
        println!(
            "seed={data_seed} batch={batch} lr={lr}: stopped at epoch {} test_acc {:.3} in {:?} ({} epochs run)",
            last.epoch, last.test_accuracy, t1.elapsed(), hist.len()
        );
    }
}
