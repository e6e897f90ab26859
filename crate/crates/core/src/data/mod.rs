//! Federated datasets: synthetic non-iid generation, test-time corruption and
//! CSV ingestion.

mod csv_io;
mod generate;

pub use csv_io::{
    load_csv, load_manifest, read_manifest, write_csv, write_dataset, CsvSchema, ManifestEntry,
};
pub use generate::{apply_label_noise, corrupt, generate, ClientSpec, GenSpec, NoiseSpec};

use crate::error::{Error, Result};
use crate::numerics::Tensor2;

/// Sizes of the train/val/test split for `n` samples (80/10/10).
pub fn split_sizes(n: usize) -> (usize, usize, usize) {
    let test = n / 10;
    let val = n / 10;
    (n - val - test, val, test)
}

/// One client's data. Rows are stored train, then validation, then test.
#[derive(Debug, Clone, PartialEq)]
pub struct ClientPartition {
    pub client_id: String,
    pub classes: usize,
    pub features: Tensor2,
    pub labels: Vec<usize>,
    n_train: usize,
    n_val: usize,
}

impl ClientPartition {
    /// Splits contiguous rows by [`split_sizes`] and checks the partition invariants.
    pub fn new(
        client_id: String,
        classes: usize,
        features: Tensor2,
        labels: Vec<usize>,
    ) -> Result<Self> {
        if features.rows() != labels.len() {
            return Err(Error::shape(format!(
                "client `{client_id}`: {} feature rows but {} labels",
                features.rows(),
                labels.len()
            )));
        }
        let (n_train, n_val, _) = split_sizes(labels.len());
        let partition = Self {
            client_id,
            classes,
            features,
            labels,
            n_train,
            n_val,
        };
        partition.validate()?;
        Ok(partition)
    }

    pub fn validate(&self) -> Result<()> {
        if self.classes < 2 {
            return Err(Error::domain(format!(
                "client `{}` needs at least two classes",
                self.client_id
            )));
        }
        if let Some(&bad) = self.labels.iter().find(|&&y| y >= self.classes) {
            return Err(Error::domain(format!(
                "client `{}`: label {bad} out of range for K = {}",
                self.client_id, self.classes
            )));
        }
        let mut seen = vec![false; self.classes];
        for &y in self.train_labels() {
            seen[y] = true;
        }
        if let Some(missing) = seen.iter().position(|s| !s) {
            return Err(Error::domain(format!(
                "client `{}`: class {missing} absent from the training split",
                self.client_id
            )));
        }
        let first = self.test_labels().first();
        if self.test_labels().iter().all(|y| Some(y) == first) {
            return Err(Error::domain(format!(
                "client `{}`: the test split needs at least two classes",
                self.client_id
            )));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn train_range(&self) -> std::ops::Range<usize> {
        0..self.n_train
    }

    pub fn val_range(&self) -> std::ops::Range<usize> {
        self.n_train..self.n_train + self.n_val
    }

    pub fn test_range(&self) -> std::ops::Range<usize> {
        self.n_train + self.n_val..self.labels.len()
    }

    pub fn train_len(&self) -> usize {
        self.n_train
    }

    fn rows(&self, range: std::ops::Range<usize>) -> Tensor2 {
        let idx: Vec<usize> = range.collect();
        self.features.select_rows(&idx)
    }

    pub fn train_features(&self) -> Tensor2 {
        self.rows(self.train_range())
    }

    pub fn val_features(&self) -> Tensor2 {
        self.rows(self.val_range())
    }

    pub fn test_features(&self) -> Tensor2 {
        self.rows(self.test_range())
    }

    pub fn train_labels(&self) -> &[usize] {
        &self.labels[self.train_range()]
    }

    pub fn val_labels(&self) -> &[usize] {
        &self.labels[self.val_range()]
    }

    pub fn test_labels(&self) -> &[usize] {
        &self.labels[self.test_range()]
    }

    pub(crate) fn train_labels_mut(&mut self) -> &mut [usize] {
        let range = self.train_range();
        &mut self.labels[range]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FederatedDataset {
    pub partitions: Vec<ClientPartition>,
}

impl FederatedDataset {
    pub fn new(partitions: Vec<ClientPartition>) -> Result<Self> {
        let ds = Self { partitions };
        ds.validate()?;
        Ok(ds)
    }

    pub fn validate(&self) -> Result<()> {
        if self.partitions.is_empty() {
            return Err(Error::domain("dataset has no clients"));
        }
        let dim = self.partitions[0].features.cols();
        let mut ids = std::collections::HashSet::new();
        for p in &self.partitions {
            if !ids.insert(p.client_id.as_str()) {
                return Err(Error::Config(format!(
                    "duplicate client_id `{}`",
                    p.client_id
                )));
            }
            if p.features.cols() != dim {
                return Err(Error::shape(format!(
                    "client `{}` has {} features, expected {dim}",
                    p.client_id,
                    p.features.cols()
                )));
            }
            p.validate()?;
        }
        Ok(())
    }

    pub fn input_dim(&self) -> usize {
        self.partitions[0].features.cols()
    }

    pub fn len(&self) -> usize {
        self.partitions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.partitions.is_empty()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn split_is_exhaustive() {
        for n in [10, 52, 366, 3513] {
            let (a, b, c) = split_sizes(n);
            assert_eq!(a + b + c, n);
            assert!(a >= 8 * n / 10);
        }
        assert_eq!(split_sizes(52), (42, 5, 5));
    }

    #[test]
    fn partition_rejects_missing_train_class() {
        let f = Tensor2::zeros(10, 1);
        let labels = vec![0, 0, 0, 0, 0, 0, 0, 0, 1, 1];
        assert!(matches!(
            ClientPartition::new("c".into(), 2, f, labels),
            Err(Error::Domain(_))
        ));
    }

    #[test]
    fn ranges_cover_rows() {
        let f = Tensor2::zeros(20, 2);
        let labels: Vec<usize> = (0..20).map(|i| i % 2).collect();
        let p = ClientPartition::new("c".into(), 2, f, labels).unwrap();
        assert_eq!(
            (p.train_range(), p.val_range(), p.test_range()),
            (0..16, 16..18, 18..20)
        );
        assert_eq!(p.test_features().rows(), 2);
    }
}
