use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, Gamma, Normal, StandardNormal};

use super::{split_sizes, ClientPartition, FederatedDataset};
use crate::error::{Error, Result};
use crate::numerics::Tensor2;
use crate::rng::{self, Rng as StreamRng};

const MAX_ATTEMPTS: usize = 100;

/// Heterogeneity knobs for one synthetic client.
#[derive(Debug, Clone, PartialEq)]
pub struct ClientSpec {
    pub client_id: String,
    pub classes: usize,
    pub samples: usize,
    /// Dirichlet concentration of the class proportions; small means skewed.
    pub skew: f64,
    /// Length of the client's feature translation.
    pub shift: f64,
    /// Fraction of training labels replaced by a different class.
    pub label_noise: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GenSpec {
    pub clients: Vec<ClientSpec>,
    pub input_dim: usize,
    /// Distance between any two class centres (cluster noise has unit variance).
    pub separation: f64,
    pub seed: u64,
}

impl GenSpec {
    /// Five clients shaped after the public DR-staging collections: their class
    /// counts and sample counts scaled down tenfold.
    pub fn default_benchmark(seed: u64) -> Self {
        let rows: [(&str, usize, usize, f64, f64); 5] = [
            ("aptos", 5, 366, 1.0, 0.0),
            ("messidor", 4, 120, 2.0, 0.75),
            ("ddr", 6, 1367, 0.8, 0.5),
            ("drr", 5, 3513, 1.5, 0.25),
            ("idrid", 5, 52, 3.0, 1.0),
        ];
        Self {
            clients: rows
                .iter()
                .map(|&(id, k, n, skew, shift)| ClientSpec {
                    client_id: id.to_string(),
                    classes: k,
                    samples: n,
                    skew,
                    shift,
                    label_noise: 0.0,
                })
                .collect(),
            input_dim: 20,
            separation: 3.0,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.clients.is_empty() {
            return Err(Error::Config("generation spec lists no clients".into()));
        }
        if self.input_dim == 0 {
            return Err(Error::Config("input_dim must be positive".into()));
        }
        if !(self.separation.is_finite() && self.separation >= 0.0) {
            return Err(Error::Config(
                "separation must be finite and non-negative".into(),
            ));
        }
        let mut ids = std::collections::HashSet::new();
        for c in &self.clients {
            if !ids.insert(c.client_id.as_str()) {
                return Err(Error::Config(format!(
                    "duplicate client_id `{}`",
                    c.client_id
                )));
            }
            if c.client_id.is_empty() || c.client_id.contains([',', '/', '\\']) {
                return Err(Error::Config(format!(
                    "invalid client_id `{}`",
                    c.client_id
                )));
            }
            if c.classes < 2 {
                return Err(Error::Config(format!(
                    "client `{}`: K must be ≥ 2",
                    c.client_id
                )));
            }
            if c.classes > self.input_dim {
                return Err(Error::Config(format!(
                    "client `{}`: K = {} exceeds input_dim = {}",
                    c.client_id, c.classes, self.input_dim
                )));
            }
            if c.samples < 10 * c.classes {
                return Err(Error::Config(format!(
                    "client `{}`: needs at least {} samples, got {}",
                    c.client_id,
                    10 * c.classes,
                    c.samples
                )));
            }
            if !(c.skew > 0.0 && c.skew.is_finite()) {
                return Err(Error::Config(format!(
                    "client `{}`: skew must be positive",
                    c.client_id
                )));
            }
            if !(c.shift.is_finite() && c.shift >= 0.0) {
                return Err(Error::Config(format!(
                    "client `{}`: shift must be ≥ 0",
                    c.client_id
                )));
            }
            if !(0.0..1.0).contains(&c.label_noise) {
                return Err(Error::Config(format!(
                    "client `{}`: label_noise must be in [0, 1)",
                    c.client_id
                )));
            }
        }
        Ok(())
    }
}

/// Class centres `c_k = (separation / √2) · e_k`: every pair sits `separation` apart.
fn class_center(class: usize, dim: usize, separation: f64) -> Vec<f64> {
    let mut c = vec![0.0; dim];
    c[class] = separation / std::f64::consts::SQRT_2;
    c
}

fn dirichlet_proportions(concentration: f64, k: usize, rng: &mut StreamRng) -> Vec<f64> {
    let gamma = Gamma::new(concentration, 1.0).expect("positive concentration");
    loop {
        let draws: Vec<f64> = (0..k).map(|_| gamma.sample(rng)).collect();
        let total: f64 = draws.iter().sum();
        if total > 0.0 {
            return draws.into_iter().map(|g| g / total).collect();
        }
    }
}

fn sample_class(proportions: &[f64], rng: &mut StreamRng) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (k, p) in proportions.iter().enumerate() {
        acc += p;
        if u < acc {
            return k;
        }
    }
    proportions.len() - 1
}

/// Replaces `⌊fraction · n_train⌋` training labels with a uniformly drawn different class.
pub fn apply_label_noise(partition: &mut ClientPartition, fraction: f64, seed: u64) -> Result<()> {
    if !(0.0..1.0).contains(&fraction) {
        return Err(Error::domain(format!(
            "label noise fraction {fraction} outside [0, 1)"
        )));
    }
    let k = partition.classes;
    let mut rng = rng::stream(seed, &format!("label-noise/{}", partition.client_id));
    let labels = partition.train_labels_mut();
    let flips = (fraction * labels.len() as f64).floor() as usize;
    let mut idx: Vec<usize> = (0..labels.len()).collect();
    idx.shuffle(&mut rng);
    for &i in &idx[..flips] {
        let other = rng.random_range(0..k - 1);
        labels[i] = if other >= labels[i] { other + 1 } else { other };
    }
    Ok(())
}

fn generate_client(spec: &GenSpec, client: &ClientSpec) -> Result<ClientPartition> {
    let dim = spec.input_dim;
    let mut rng = rng::stream(spec.seed, &client.client_id);
    let offset: Vec<f64> = {
        let dir: Vec<f64> = (0..dim)
            .map(|_| rng.sample::<f64, _>(StandardNormal))
            .collect();
        let norm = dir
            .iter()
            .map(|v| v * v)
            .sum::<f64>()
            .sqrt()
            .max(f64::MIN_POSITIVE);
        dir.into_iter().map(|v| client.shift * v / norm).collect()
    };
    let centers: Vec<Vec<f64>> = (0..client.classes)
        .map(|k| class_center(k, dim, spec.separation))
        .collect();
    let (n_train, n_val, _) = split_sizes(client.samples);

    for attempt in 0..MAX_ATTEMPTS {
        let proportions = dirichlet_proportions(client.skew, client.classes, &mut rng);
        let mut labels: Vec<usize> = (0..client.samples)
            .map(|_| sample_class(&proportions, &mut rng))
            .collect();
        let mut rows: Vec<Vec<f64>> = labels
            .iter()
            .map(|&y| {
                centers[y]
                    .iter()
                    .zip(&offset)
                    .map(|(c, o)| c + o + rng.sample::<f64, _>(StandardNormal))
                    .collect()
            })
            .collect();

        let mut order: Vec<usize> = (0..client.samples).collect();
        order.shuffle(&mut rng);
        rows = order
            .iter()
            .map(|&i| std::mem::take(&mut rows[i]))
            .collect();
        labels = order.iter().map(|&i| labels[i]).collect();

        let test_classes: std::collections::HashSet<usize> =
            labels[n_train + n_val..].iter().copied().collect();
        if test_classes.len() < 2 {
            continue;
        }
        let features = Tensor2::from_rows(&rows)?;
        let mut partition = match ClientPartition::new(
            client.client_id.clone(),
            client.classes,
            features,
            labels,
        ) {
            Ok(p) => p,
            Err(Error::Domain(_)) => continue,
            Err(e) => return Err(e),
        };
        if client.label_noise > 0.0 {
            apply_label_noise(
                &mut partition,
                client.label_noise,
                spec.seed ^ attempt as u64,
            )?;
            if partition.validate().is_err() {
                continue;
            }
        }
        return Ok(partition);
    }
    Err(Error::domain(format!(
        "client `{}`: no feasible class layout after {MAX_ATTEMPTS} attempts",
        client.client_id
    )))
}

pub fn generate(spec: &GenSpec) -> Result<FederatedDataset> {
    spec.validate()?;
    let partitions = spec
        .clients
        .iter()
        .map(|c| generate_client(spec, c))
        .collect::<Result<Vec<_>>>()?;
    FederatedDataset::new(partitions)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseSpec {
    pub sigma_squared: f64,
}

/// `features + N(0, σ²)` entry-wise. With a fixed seed, larger σ² scales the same draw.
pub fn corrupt(features: &Tensor2, noise: NoiseSpec, seed: u64) -> Result<Tensor2> {
    let var = noise.sigma_squared;
    if !(var.is_finite() && var >= 0.0) {
        return Err(Error::domain(format!(
            "noise variance must be ≥ 0, got {var}"
        )));
    }
    if var == 0.0 {
        return Ok(features.clone());
    }
    let mut rng = rng::rng_from_seed(seed);
    let normal = Normal::new(0.0, var.sqrt()).expect("finite std");
    let data = features
        .data()
        .iter()
        .map(|x| x + normal.sample(&mut rng))
        .collect();
    Tensor2::new(features.rows(), features.cols(), data)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn single(id: &str, k: usize, n: usize, skew: f64, shift: f64) -> ClientSpec {
        ClientSpec {
            client_id: id.into(),
            classes: k,
            samples: n,
            skew,
            shift,
            label_noise: 0.0,
        }
    }

    #[test]
    fn deterministic_per_seed() {
        let spec = GenSpec::default_benchmark(4);
        assert_eq!(generate(&spec).unwrap(), generate(&spec).unwrap());
        let other = GenSpec::default_benchmark(5);
        assert_ne!(generate(&spec).unwrap(), generate(&other).unwrap());
    }

    #[test]
    fn identical_spec_gives_identical_partition() {
        let a = GenSpec {
            clients: vec![single("x", 3, 90, 1.0, 0.0)],
            input_dim: 5,
            separation: 2.0,
            seed: 9,
        };
        let b = GenSpec {
            clients: vec![single("x", 3, 90, 1.0, 0.0), single("y", 4, 80, 1.0, 0.0)],
            ..a.clone()
        };
        assert_eq!(
            generate(&a).unwrap().partitions[0],
            generate(&b).unwrap().partitions[0]
        );
    }

    #[test]
    fn default_benchmark_shape() {
        let ds = generate(&GenSpec::default_benchmark(0)).unwrap();
        let ks: Vec<usize> = ds.partitions.iter().map(|p| p.classes).collect();
        let ns: Vec<usize> = ds.partitions.iter().map(|p| p.len()).collect();
        assert_eq!(ks, vec![5, 4, 6, 5, 5]);
        assert_eq!(ns, vec![366, 120, 1367, 3513, 52]);
        assert_eq!(ds.input_dim(), 20);
    }

    #[test]
    fn spec_validation() {
        let mut spec = GenSpec::default_benchmark(0);
        spec.clients[1].client_id = "aptos".into();
        assert!(matches!(generate(&spec), Err(Error::Config(_))));
        let mut spec = GenSpec::default_benchmark(0);
        spec.clients[0].samples = 20;
        assert!(matches!(generate(&spec), Err(Error::Config(_))));
        let mut spec = GenSpec::default_benchmark(0);
        spec.clients[0].classes = 1;
        assert!(spec.validate().is_err());
    }

    /// χ² goodness of fit against uniform, df = K − 1 = 3, 0.99 quantile 11.345.
    #[test]
    fn huge_concentration_gives_uniform_proportions() {
        for seed in 0..5 {
            let spec = GenSpec {
                clients: vec![single("u", 4, 2000, 1e6, 0.0)],
                input_dim: 4,
                separation: 1.0,
                seed,
            };
            let ds = generate(&spec).unwrap();
            let mut counts = [0.0; 4];
            for &y in &ds.partitions[0].labels {
                counts[y] += 1.0;
            }
            let expected = 500.0;
            let chi2: f64 = counts
                .iter()
                .map(|c| (c - expected) * (c - expected) / expected)
                .sum();
            assert!(chi2 < 11.345, "seed {seed}: χ² = {chi2}");
        }
    }

    #[test]
    fn shift_moves_client_means() {
        let base = GenSpec {
            clients: vec![single("s", 2, 4000, 50.0, 0.0)],
            input_dim: 6,
            separation: 2.0,
            seed: 3,
        };
        let mut shifted = base.clone();
        shifted.clients[0].shift = 2.5;
        let mean = |spec: &GenSpec| -> Vec<f64> {
            let p = &generate(spec).unwrap().partitions[0];
            (0..6)
                .map(|c| p.features.iter_rows().map(|r| r[c]).sum::<f64>() / p.len() as f64)
                .collect()
        };
        let (m0, m1) = (mean(&base), mean(&shifted));
        let dist = m0
            .iter()
            .zip(&m1)
            .map(|(a, b)| (a - b).powi(2))
            .sum::<f64>()
            .sqrt();
        // per-coordinate standard error ≈ 1/√4000 for each mean; 6 coordinates
        let se = (2.0 * 6.0 / 4000.0f64).sqrt();
        assert!(dist >= 2.5 - 3.0 * se, "{dist}");
    }

    #[test]
    fn label_noise_flips_exact_fraction() {
        let spec = GenSpec {
            clients: vec![single("n", 3, 300, 5.0, 0.0)],
            input_dim: 3,
            separation: 4.0,
            seed: 1,
        };
        let clean = generate(&spec).unwrap().partitions.remove(0);
        let mut noisy = clean.clone();
        apply_label_noise(&mut noisy, 0.3, 77).unwrap();
        let flipped = clean
            .train_labels()
            .iter()
            .zip(noisy.train_labels())
            .filter(|(a, b)| a != b)
            .count();
        assert_eq!(flipped, (0.3 * clean.train_len() as f64).floor() as usize);
        assert_eq!(clean.test_labels(), noisy.test_labels());
        assert_eq!(clean.features, noisy.features);
    }

    #[test]
    fn corruption_moments_and_identity() {
        let x = Tensor2::new(200, 100, vec![0.5; 20_000]).unwrap();
        assert_eq!(corrupt(&x, NoiseSpec { sigma_squared: 0.0 }, 1).unwrap(), x);
        let y = corrupt(&x, NoiseSpec { sigma_squared: 1.0 }, 1).unwrap();
        let diffs: Vec<f64> = y.data().iter().zip(x.data()).map(|(a, b)| a - b).collect();
        let mean = diffs.iter().sum::<f64>() / diffs.len() as f64;
        let var = diffs.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / (diffs.len() - 1) as f64;
        assert!((var - 1.0).abs() < 0.05, "{var}");
        assert_eq!(y, corrupt(&x, NoiseSpec { sigma_squared: 1.0 }, 1).unwrap());
        assert!(corrupt(
            &x,
            NoiseSpec {
                sigma_squared: -1.0
            },
            1
        )
        .is_err());
    }

    /// Least-squares linear classifier on two clusters ten unit-σ apart.
    #[test]
    fn well_separated_pair_is_linearly_separable() {
        let spec = GenSpec {
            clients: vec![single("sep", 2, 400, 10.0, 0.0)],
            input_dim: 2,
            separation: 10.0,
            seed: 2,
        };
        let p = generate(&spec).unwrap().partitions.remove(0);
        let x = p.train_features();
        let y = p.train_labels();
        // The centres are (s/√2, 0) and (0, s/√2); the bisector x0 = x1 separates them.
        let correct = x
            .iter_rows()
            .zip(y)
            .filter(|(r, &c)| (r[1] > r[0]) == (c == 1))
            .count();
        assert!(correct as f64 / y.len() as f64 >= 0.99);
    }
}
