use rand::SeedableRng;
use sgn_core::attention::*;
use sgn_core::graph::{normalize_adjacency, topk_neighbors, topology_score, AdjacencyPowers, SkeletonGraph};
use sgn_core::tensor::{DenseTensor, SpikeTensor};
use std::time::Instant;

fn main() {
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
    use rand::Rng;
    let q: Vec<SpikeTensor> = (0..64)
        .map(|_| {
            SpikeTensor::from_dense(DenseTensor::from_fn(16, 64, 25, |_, _, _| {
                f64::from(rng.gen_bool(0.2))
            }))
            .unwrap()
        })
        .collect();
    let k = q.clone();
    let g = SkeletonGraph::ntu25();
    let a_norm = normalize_adjacency(&g.adjacency()).unwrap();
    let pa = AdjacencyPowers::from_normalized("pa", &a_norm, 3).unwrap();
    let topo = topology_score(&pa).scores;

    let t0 = Instant::now();
    let mut count = 0usize;
    for (qs, ks) in q.iter().zip(&k) {
        for t in 0..16 {
            let qt = similarity_step(qs, ks, t, 4, true);
            let ct = fuse_scores(&topo, &qt, 0.7);
            let nb = topk_neighbors(&ct, 8, true).unwrap();
            count += nb.len();
        }
    }
    println!("similarity+fuse+topk over 64x16 steps: {:?} ({count} lists)", t0.elapsed());

    // each part
    let t0 = Instant::now();
    for (qs, ks) in q.iter().zip(&k) {
        for t in 0..16 {
            let qt = similarity_step(qs, ks, t, 4, true);
            std::hint::black_box(&qt);
        }
    }
    println!("similarity only: {:?}", t0.elapsed());
    let qt = similarity_step(&q[0], &k[0], 0, 4, true);
    let t0 = Instant::now();
    for _ in 0..1024 {
        let ct = fuse_scores(&topo, &qt, 0.7);
        std::hint::black_box(&ct);
    }
    println!("fuse only x1024: {:?}", t0.elapsed());
    let ct = fuse_scores(&topo, &qt, 0.7);
    let t0 = Instant::now();
    for _ in 0..1024 {
        let nb = topk_neighbors(&ct, 8, true).unwrap();
        std::hint::black_box(&nb);
    }
    println!("topk only x1024: {:?}", t0.elapsed());
}
