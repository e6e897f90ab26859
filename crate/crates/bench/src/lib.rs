//! Fixtures shared by the benchmarks.

use feduaa_core::data::{generate, ClientSpec, GenSpec};
use feduaa_core::numerics::Architecture;
use feduaa_core::rng::stream;
use feduaa_core::uaw::UncertaintyRecord;
use feduaa_core::{FederatedDataset, ModelParams, Tensor2};
use rand::Rng;

pub fn model(layers: &[usize], classes: usize, seed: u64) -> ModelParams {
    let arch = Architecture::new(layers.to_vec(), classes).expect("valid architecture");
    ModelParams::init(arch, &mut stream(seed, "bench/model"))
}

pub fn batch(rows: usize, cols: usize, seed: u64) -> Tensor2 {
    let mut rng = stream(seed, "bench/batch");
    let data = (0..rows * cols)
        .map(|_| rng.random_range(-2.0..2.0))
        .collect();
    Tensor2::new(rows, cols, data).expect("finite batch")
}

pub fn labels(rows: usize, classes: usize, seed: u64) -> Vec<usize> {
    let mut rng = stream(seed, "bench/labels");
    (0..rows).map(|_| rng.random_range(0..classes)).collect()
}

pub fn records(n: usize, seed: u64) -> Vec<UncertaintyRecord> {
    let mut rng = stream(seed, "bench/records");
    (0..n)
        .map(|_| {
            let u: f64 = rng.random();
            UncertaintyRecord::new(u, rng.random_bool(1.0 - u)).expect("u in [0, 1]")
        })
        .collect()
}

pub fn federation(clients: usize, samples: usize, seed: u64) -> FederatedDataset {
    let spec = GenSpec {
        clients: (0..clients)
            .map(|i| ClientSpec {
                client_id: format!("client{i}"),
                classes: 5,
                samples,
                skew: 2.0,
                shift: 0.25 * i as f64,
                label_noise: 0.0,
            })
            .collect(),
        input_dim: 20,
        separation: 3.0,
        seed,
    };
    generate(&spec).expect("valid generation spec")
}
