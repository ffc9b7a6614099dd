//! Labeled skeleton sequences, a deterministic synthetic generator for
//! desk-scale experiments, and frame resizing.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Result, SgnError};
use crate::tensor::DenseTensor;

/// One labeled sequence of raw joint coordinates, shape `(T, 3, V)`.
#[derive(Debug, Clone)]
pub struct Sample {
    pub label: usize,
    pub joints: DenseTensor,
}

#[derive(Debug, Clone)]
pub struct Dataset {
    pub samples: Vec<Sample>,
    pub num_classes: usize,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Deterministic stratified split; `test_per_class` samples of each class
    /// go to the test set, the rest to training.
    pub fn split(&self, test_per_class: usize) -> (Dataset, Dataset) {
        let mut train = Vec::new();
        let mut test = Vec::new();
        let mut taken = vec![0usize; self.num_classes];
        for s in &self.samples {
            if taken[s.label] < test_per_class {
                taken[s.label] += 1;
                test.push(s.clone());
            } else {
                train.push(s.clone());
            }
        }
        (
            Dataset { samples: train, num_classes: self.num_classes },
            Dataset { samples: test, num_classes: self.num_classes },
        )
    }
}

/// Resize the frame axis to `t_target` by uniform temporal sampling with
/// endpoints aligned.
pub fn resize_frames(x: &DenseTensor, t_target: usize) -> DenseTensor {
    let (t_in, c_dim, v_dim) = x.shape();
    if t_in == t_target {
        return x.clone();
    }
    let mut out = DenseTensor::zeros(t_target, c_dim, v_dim);
    for i in 0..t_target {
        let src = if t_target == 1 {
            0
        } else {
            ((i as f64) * (t_in as f64 - 1.0) / (t_target as f64 - 1.0)).round() as usize
        };
        for c in 0..c_dim {
            out.row_mut(i, c).copy_from_slice(x.row(src.min(t_in - 1), c));
        }
    }
    out
}

fn gaussian(rng: &mut ChaCha8Rng) -> f64 {
    // Box-Muller
    let u1: f64 = rng.gen_range(f64::EPSILON..1.0);
    let u2: f64 = rng.gen();
    (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
}

/// Synthetic action classes: each class drives a class-specific subset of
/// joints with sinusoids of class-specific frequency and phase on top of a
/// shared rest pose, plus Gaussian noise (σ = 0.05). Deterministic per seed;
/// a dataset is accepted only if a nearest-centroid classifier on raw
/// coordinates reaches 80%, otherwise it is regenerated from a derived seed.
pub fn generate_synthetic(
    n_classes: usize,
    n_per_class: usize,
    joints: usize,
    frames: usize,
    seed: u64,
) -> Result<Dataset> {
    if n_classes == 0 || n_per_class == 0 || joints == 0 || frames == 0 {
        return Err(SgnError::Config("synthetic generator counts must be >= 1".into()));
    }
    for attempt in 0..16u64 {
        let ds = synthesize(n_classes, n_per_class, joints, frames, seed ^ (attempt * 0x9E37_79B9));
        if n_classes == 1 || nearest_centroid_accuracy(&ds) >= 0.8 {
            return Ok(ds);
        }
    }
    Err(SgnError::Numerical("synthetic generator failed the separability floor".into()))
}

fn synthesize(
    n_classes: usize,
    n_per_class: usize,
    joints: usize,
    frames: usize,
    seed: u64,
) -> Dataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    // shared rest pose
    let base: Vec<Vec<f64>> = (0..3)
        .map(|_| (0..joints).map(|_| rng.gen_range(-0.5..0.5)).collect())
        .collect();
    let driven_count = (joints as f64 * 0.4).ceil() as usize;

    struct ClassSpec {
        driven: Vec<usize>,
        freq: f64,
        phase: f64,
        amp: [f64; 3],
    }
    let specs: Vec<ClassSpec> = (0..n_classes)
        .map(|c| {
            let mut pool: Vec<usize> = (0..joints).collect();
            for i in (1..pool.len()).rev() {
                let j = rng.gen_range(0..=i);
                pool.swap(i, j);
            }
            ClassSpec {
                driven: pool.into_iter().take(driven_count.max(1)).collect(),
                freq: 1.0 + 0.5 * c as f64,
                phase: rng.gen_range(0.0..std::f64::consts::TAU),
                amp: [
                    rng.gen_range(0.5..1.0),
                    rng.gen_range(0.5..1.0),
                    rng.gen_range(0.5..1.0),
                ],
            }
        })
        .collect();

    let mut samples = Vec::with_capacity(n_classes * n_per_class);
    for (label, spec) in specs.iter().enumerate() {
        for _ in 0..n_per_class {
            let jitter = rng.gen_range(0.9..1.1);
            let mut x = DenseTensor::zeros(frames, 3, joints);
            for t in 0..frames {
                let angle = std::f64::consts::TAU * spec.freq * t as f64 / frames as f64 + spec.phase;
                for ch in 0..3 {
                    for v in 0..joints {
                        let mut val = base[ch][v];
                        if let Some(rank) = spec.driven.iter().position(|&d| d == v) {
                            val += spec.amp[ch] * jitter * (angle + 0.4 * rank as f64).sin();
                        }
                        val += 0.05 * gaussian(&mut rng);
                        x.set(t, ch, v, val);
                    }
                }
            }
            samples.push(Sample { label, joints: x });
        }
    }
    Dataset { samples, num_classes: n_classes }
}

/// Accuracy of a nearest-centroid classifier on raw flattened coordinates;
/// the separability floor for synthetic data.
pub fn nearest_centroid_accuracy(ds: &Dataset) -> f64 {
    let dim = ds.samples[0].joints.data().len();
    let mut centroids = vec![vec![0.0; dim]; ds.num_classes];
    let mut counts = vec![0usize; ds.num_classes];
    for s in &ds.samples {
        counts[s.label] += 1;
        for (acc, &x) in centroids[s.label].iter_mut().zip(s.joints.data()) {
            *acc += x;
        }
    }
    for (c, n) in centroids.iter_mut().zip(&counts) {
        if *n > 0 {
            c.iter_mut().for_each(|x| *x /= *n as f64);
        }
    }
    let mut hits = 0usize;
    for s in &ds.samples {
        let mut best = (f64::INFINITY, 0usize);
        for (label, c) in centroids.iter().enumerate() {
            let d: f64 = c
                .iter()
                .zip(s.joints.data())
                .map(|(a, b)| (a - b) * (a - b))
                .sum();
            if d < best.0 {
                best = (d, label);
            }
        }
        if best.1 == s.label {
            hits += 1;
        }
    }
    hits as f64 / ds.samples.len() as f64
}
