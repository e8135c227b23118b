//! Datasets: synthetic Gaussian blobs, IDX and CSV ingestion, seeded batching.

mod csv_io;
mod idx;

pub use csv_io::{read_csv, write_csv};
pub use idx::{load_idx, parse_idx};

use std::fmt;
use std::path::Path;

use rand::seq::SliceRandom;
use rand_distr::{Distribution, StandardNormal, Uniform};

use crate::error::{Error, Result};
use crate::rng::{pcg, STREAM_DATA, STREAM_SHUFFLE};
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Split {
    Train,
    Val,
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Split::Train => "train",
            Split::Val => "val",
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    features: Tensor,
    labels: Vec<usize>,
    class_count: usize,
    split: Split,
}

impl Dataset {
    pub fn new(features: Tensor, labels: Vec<usize>, class_count: usize, split: Split) -> Result<Self> {
        let (n, _) = features.dims2()?;
        if n == 0 {
            return Err(Error::input("dataset is empty"));
        }
        if labels.len() != n {
            return Err(Error::dim(format!("{n} feature rows but {} labels", labels.len())));
        }
        if let Some((i, &l)) = labels.iter().enumerate().find(|&(_, &l)| l >= class_count) {
            return Err(Error::input(format!(
                "label {l} of sample {i} out of range for {class_count} classes"
            )));
        }
        if let Some(i) = features.data().iter().position(|v| !v.is_finite()) {
            return Err(Error::input(format!(
                "non-finite feature in sample {}",
                i / features.shape()[1].max(1)
            )));
        }
        Ok(Dataset {
            features,
            labels,
            class_count,
            split,
        })
    }

    pub fn features(&self) -> &Tensor {
        &self.features
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn class_count(&self) -> usize {
        self.class_count
    }

    pub fn split(&self) -> Split {
        self.split
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.features.shape()[1]
    }

    /// Share of the most frequent label.
    pub fn majority_fraction(&self) -> f64 {
        let mut counts = vec![0usize; self.class_count];
        for &l in &self.labels {
            counts[l] += 1;
        }
        *counts.iter().max().unwrap_or(&0) as f64 / self.len() as f64
    }

    pub fn subset(&self, indices: &[usize]) -> Result<Dataset> {
        Ok(Dataset {
            features: self.features.select_rows(indices)?,
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
            class_count: self.class_count,
            split: self.split,
        })
    }

    /// Same samples under a wider label space.
    pub fn with_class_count(self, class_count: usize) -> Result<Dataset> {
        Dataset::new(self.features, self.labels, class_count, self.split)
    }
}

pub const TRAIN_CSV: &str = "train.csv";
pub const VAL_CSV: &str = "val.csv";
pub const IDX_FILES: [&str; 4] = [
    "train-images-idx3-ubyte",
    "train-labels-idx1-ubyte",
    "t10k-images-idx3-ubyte",
    "t10k-labels-idx1-ubyte",
];

/// Loads `train.csv` / `val.csv` from `dir`, or, failing that, the four MNIST
/// IDX files. Both splits share one class count.
pub fn load_dir(dir: &Path) -> Result<(Dataset, Dataset)> {
    let (train, val) = if dir.join(TRAIN_CSV).exists() || !dir.join(IDX_FILES[0]).exists() {
        let train = read_csv(&dir.join(TRAIN_CSV), Split::Train, None)?;
        let val = read_csv(&dir.join(VAL_CSV), Split::Val, None)?;
        (train, val)
    } else {
        let f = |i: usize| dir.join(IDX_FILES[i]);
        (load_idx(&f(0), &f(1), Split::Train)?, load_idx(&f(2), &f(3), Split::Val)?)
    };
    if train.dim() != val.dim() {
        return Err(Error::input(format!(
            "train has {} features but val has {}",
            train.dim(),
            val.dim()
        )));
    }
    let c = train.class_count().max(val.class_count());
    Ok((train.with_class_count(c)?, val.with_class_count(c)?))
}

/// Isotropic Gaussian clusters, one per class.
#[derive(Clone, Debug, PartialEq)]
pub struct BlobSpec {
    pub class_count: usize,
    pub dims: usize,
    pub samples_per_class: usize,
    /// Standard deviation of each cluster.
    pub spread: f64,
    /// Centers are uniform in `[-center_scale, center_scale]^dims`.
    pub center_scale: f64,
    pub seed: u64,
}

impl Default for BlobSpec {
    fn default() -> Self {
        BlobSpec {
            class_count: 20,
            dims: 16,
            samples_per_class: 250,
            spread: 1.0,
            center_scale: 1.0,
            seed: 0,
        }
    }
}

impl BlobSpec {
    pub fn validate(&self) -> Result<()> {
        if self.class_count < 2 {
            return Err(Error::config(format!(
                "class_count must be at least 2, got {}",
                self.class_count
            )));
        }
        if self.dims == 0 {
            return Err(Error::config("dims must be at least 1"));
        }
        if self.samples_per_class < 2 {
            return Err(Error::config("samples_per_class must be at least 2 for a train/val split"));
        }
        if !(self.spread > 0.0 && self.spread.is_finite()) {
            return Err(Error::config(format!("spread must be positive, got {}", self.spread)));
        }
        if !(self.center_scale > 0.0 && self.center_scale.is_finite()) {
            return Err(Error::config(format!(
                "center_scale must be positive, got {}",
                self.center_scale
            )));
        }
        Ok(())
    }

    /// Training samples per class; the remaining fifth goes to validation.
    pub fn train_per_class(&self) -> usize {
        (self.samples_per_class * 4 / 5).max(1)
    }
}

/// Draws the blobs and splits every class 80/20 into train and validation.
pub fn generate_blobs(spec: &BlobSpec) -> Result<(Dataset, Dataset)> {
    spec.validate()?;
    let mut rng = pcg(spec.seed, STREAM_DATA);
    let (c, d) = (spec.class_count, spec.dims);
    let center = Uniform::new_inclusive(-spec.center_scale, spec.center_scale)
        .map_err(|e| Error::config(e.to_string()))?;
    let centers: Vec<f64> = (0..c * d).map(|_| center.sample(&mut rng)).collect();

    let n_train = spec.train_per_class();
    let (mut train_x, mut train_y, mut val_x, mut val_y) = (Vec::new(), Vec::new(), Vec::new(), Vec::new());
    for class in 0..c {
        let mu = &centers[class * d..(class + 1) * d];
        for i in 0..spec.samples_per_class {
            let (xs, ys) = if i < n_train {
                (&mut train_x, &mut train_y)
            } else {
                (&mut val_x, &mut val_y)
            };
            for &m in mu {
                let z: f64 = StandardNormal.sample(&mut rng);
                xs.push(m + spec.spread * z);
            }
            ys.push(class);
        }
    }
    let train = Dataset::new(Tensor::matrix(train_y.len(), d, train_x)?, train_y, c, Split::Train)?;
    let val = Dataset::new(Tensor::matrix(val_y.len(), d, val_x)?, val_y, c, Split::Val)?;
    Ok((train, val))
}

#[derive(Clone, Debug, PartialEq)]
pub struct Batch {
    pub indices: Vec<usize>,
    pub features: Tensor,
    pub labels: Vec<usize>,
}

/// Seeded Fisher-Yates permutation of the dataset, cut into batches of
/// `batch_size`; the last batch may be shorter.
pub fn batches(ds: &Dataset, batch_size: usize, epoch_seed: u64) -> Result<Batches<'_>> {
    if batch_size == 0 {
        return Err(Error::config("batch_size must be at least 1"));
    }
    let mut order: Vec<usize> = (0..ds.len()).collect();
    order.shuffle(&mut pcg(epoch_seed, STREAM_SHUFFLE));
    Ok(Batches {
        ds,
        order,
        batch_size,
        pos: 0,
    })
}

pub struct Batches<'a> {
    ds: &'a Dataset,
    order: Vec<usize>,
    batch_size: usize,
    pos: usize,
}

impl Batches<'_> {
    pub fn order(&self) -> &[usize] {
        &self.order
    }
}

impl Iterator for Batches<'_> {
    type Item = Batch;

    fn next(&mut self) -> Option<Batch> {
        if self.pos >= self.order.len() {
            return None;
        }
        let end = (self.pos + self.batch_size).min(self.order.len());
        let indices = self.order[self.pos..end].to_vec();
        self.pos = end;
        let features = self.ds.features.select_rows(&indices).expect("indices in range");
        let labels = indices.iter().map(|&i| self.ds.labels[i]).collect();
        Some(Batch {
            indices,
            features,
            labels,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> BlobSpec {
        BlobSpec {
            class_count: 3,
            dims: 2,
            samples_per_class: 10,
            ..BlobSpec::default()
        }
    }

    #[test]
    fn blobs_are_deterministic_and_split() {
        let (a_train, a_val) = generate_blobs(&small()).unwrap();
        let (b_train, b_val) = generate_blobs(&small()).unwrap();
        assert_eq!(a_train, b_train);
        assert_eq!(a_val, b_val);
        assert_eq!(a_train.len(), 24);
        assert_eq!(a_val.len(), 6);
        assert_eq!(a_train.split(), Split::Train);
        let other = generate_blobs(&BlobSpec { seed: 1, ..small() }).unwrap().0;
        assert_ne!(other, a_train);
    }

    #[test]
    fn blob_validation() {
        assert!(generate_blobs(&BlobSpec { class_count: 1, ..small() }).is_err());
        assert!(generate_blobs(&BlobSpec { spread: 0.0, ..small() }).is_err());
        assert!(generate_blobs(&BlobSpec { samples_per_class: 1, ..small() }).is_err());
    }

    #[test]
    fn dataset_rejects_bad_labels_and_nan() {
        let x = Tensor::zeros(&[2, 2]);
        assert!(Dataset::new(x.clone(), vec![0, 2], 2, Split::Train).is_err());
        assert!(Dataset::new(x.clone(), vec![0], 2, Split::Train).is_err());
        let nan = Tensor::from_rows(&[[0.0, f64::NAN]]).unwrap();
        assert!(Dataset::new(nan, vec![0], 2, Split::Train).is_err());
        assert!(Dataset::new(Tensor::zeros(&[0, 2]), vec![], 2, Split::Train).is_err());
    }

    #[test]
    fn batches_partition_the_data() {
        let (train, _) = generate_blobs(&small()).unwrap();
        let all: Vec<Batch> = batches(&train, 5, 42).unwrap().collect();
        assert_eq!(all.len(), 5);
        assert_eq!(all.last().unwrap().indices.len(), 4);
        let mut seen: Vec<usize> = all.iter().flat_map(|b| b.indices.clone()).collect();
        seen.sort_unstable();
        assert_eq!(seen, (0..train.len()).collect::<Vec<_>>());
        for b in &all {
            for (k, &i) in b.indices.iter().enumerate() {
                assert_eq!(b.labels[k], train.labels()[i]);
                assert_eq!(b.features.row(k), train.features().row(i));
            }
        }
    }

    #[test]
    fn batches_are_seeded() {
        let (train, _) = generate_blobs(&small()).unwrap();
        let a: Vec<_> = batches(&train, 7, 3).unwrap().collect();
        let b: Vec<_> = batches(&train, 7, 3).unwrap().collect();
        assert_eq!(a, b);
        let c = batches(&train, 7, 4).unwrap();
        assert_ne!(c.order(), batches(&train, 7, 3).unwrap().order());
    }

    #[test]
    fn oversized_batch_is_single_permuted_batch() {
        let (train, _) = generate_blobs(&small()).unwrap();
        let all: Vec<_> = batches(&train, 1000, 9).unwrap().collect();
        assert_eq!(all.len(), 1);
        assert_eq!(all[0].indices.len(), train.len());
        assert_ne!(all[0].indices, (0..train.len()).collect::<Vec<_>>());
        assert!(batches(&train, 0, 9).is_err());
    }
}
