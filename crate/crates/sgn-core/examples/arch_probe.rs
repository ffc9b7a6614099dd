use sgn_core::graph::SkeletonGraph;
use sgn_core::model::*;
use sgn_core::profile::total_flops;

fn main() {
    let config = ModelConfig::default();
    let flops = total_flops(&config);
    let mut model = Model::build(config, SkeletonGraph::ntu25()).unwrap();
    let params = model.param_count();
    println!("default config: params = {params} ({:.3} M), flops = {flops} ({:.3} G)",
             params as f64 / 1e6, flops as f64 / 1e9);
    let tiny = ModelConfig { num_classes: 5, ..ModelConfig::tiny() };
    let tflops = total_flops(&tiny);
    let mut tm = Model::build(tiny, SkeletonGraph::ntu25()).unwrap();
    println!("tiny config: params = {} ({:.3} M), flops = {} ({:.3} G)",
             tm.param_count(), tm.param_count() as f64 / 1e6, tflops, tflops as f64 / 1e9);
}
