//! Datasets: MNIST IDX ingestion, desk-scale reductions, a parity generator
//! and seeded minibatching.

mod idx;

pub use idx::{load_idx, load_mnist, mnist_paths, write_idx, MnistPart, IMAGES_MAGIC, LABELS_MAGIC};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::{sub_seed, Matrix, RngState};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Train,
    Val,
    Test,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    /// One sample per row.
    pub features: Matrix,
    pub labels: Vec<usize>,
    pub classes: usize,
    pub split: Split,
    /// (rows, cols) of each image, if the features are images.
    pub image_shape: Option<(usize, usize)>,
}

impl Dataset {
    pub fn new(
        features: Matrix,
        labels: Vec<usize>,
        classes: usize,
        split: Split,
        image_shape: Option<(usize, usize)>,
    ) -> Result<Self> {
        if features.rows() != labels.len() {
            return Err(Error::Shape {
                op: "dataset",
                left: features.shape(),
                right: (labels.len(), 1),
            });
        }
        if let Some(&bad) = labels.iter().find(|&&l| l >= classes) {
            return Err(Error::Param(format!("label {bad} outside [0, {classes})")));
        }
        if let Some((h, w)) = image_shape {
            if h * w != features.cols() {
                return Err(Error::Param(format!("image shape {h}x{w} does not match {} features", features.cols())));
            }
        }
        Ok(Dataset {
            features,
            labels,
            classes,
            split,
            image_shape,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.features.cols()
    }

    /// Rows `indices`, in order.
    pub fn select(&self, indices: &[usize]) -> Dataset {
        Dataset {
            features: self.features.select_rows(indices),
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
            classes: self.classes,
            split: self.split,
            image_shape: self.image_shape,
        }
    }

    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.classes];
        for &l in &self.labels {
            counts[l] += 1;
        }
        counts
    }

    /// Splits off the last `n_val` samples as a validation set.
    pub fn split_validation(&self, n_val: usize) -> Result<(Dataset, Dataset)> {
        if n_val >= self.len() {
            return Err(Error::Param(format!(
                "validation size {n_val} leaves no training data out of {}",
                self.len()
            )));
        }
        let cut = self.len() - n_val;
        let train = self.select(&(0..cut).collect::<Vec<_>>());
        let mut val = self.select(&(cut..self.len()).collect::<Vec<_>>());
        val.split = Split::Val;
        Ok((train, val))
    }
}

/// Stratified subsample of `n` samples in seeded random order.
///
/// Each class gets an equal quota (the remainder going to the lowest class
/// indices); quota a class cannot fill is redistributed over the others.
pub fn subsample(ds: &Dataset, n: usize, seed: u64) -> Result<Dataset> {
    if n > ds.len() {
        return Err(Error::Param(format!("cannot draw {n} samples from {}", ds.len())));
    }
    let mut rng = RngState::new(seed);
    let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); ds.classes];
    for (i, &l) in ds.labels.iter().enumerate() {
        by_class[l].push(i);
    }
    for members in &mut by_class {
        rng.shuffle(members);
    }

    let mut quota = vec![0usize; ds.classes];
    let mut remaining = n;
    while remaining > 0 {
        let open: Vec<usize> = (0..ds.classes).filter(|&c| quota[c] < by_class[c].len()).collect();
        let (share, extra) = (remaining / open.len(), remaining % open.len());
        for (j, &c) in open.iter().enumerate() {
            let want = share + usize::from(j < extra);
            let take = want.min(by_class[c].len() - quota[c]);
            quota[c] += take;
            remaining -= take;
        }
    }

    let mut chosen: Vec<usize> = by_class.iter().zip(&quota).flat_map(|(m, &q)| m[..q].iter().copied()).collect();
    rng.shuffle(&mut chosen);
    Ok(ds.select(&chosen))
}

/// Average-pools each image over `factor × factor` tiles.
pub fn downsample(ds: &Dataset, factor: usize) -> Result<Dataset> {
    let (h, w) = ds
        .image_shape
        .ok_or_else(|| Error::Param("downsampling needs an image dataset".into()))?;
    if factor == 0 || h % factor != 0 || w % factor != 0 {
        return Err(Error::Param(format!("factor {factor} does not divide {h}x{w}")));
    }
    let (oh, ow) = (h / factor, w / factor);
    let area = (factor * factor) as f64;
    let mut out = Matrix::zeros(ds.len(), oh * ow);
    for r in 0..ds.len() {
        let src = ds.features.row(r);
        let dst = out.row_mut(r);
        for i in 0..oh {
            for j in 0..ow {
                let mut s = 0.0;
                for di in 0..factor {
                    for dj in 0..factor {
                        s += src[(i * factor + di) * w + j * factor + dj];
                    }
                }
                dst[i * ow + j] = s / area;
            }
        }
    }
    Dataset::new(out, ds.labels.clone(), ds.classes, ds.split, Some((oh, ow)))
}

fn parity_dataset(rows: Vec<Vec<u8>>, n_bits: usize) -> Result<Dataset> {
    let labels = rows.iter().map(|r| r.iter().fold(0u8, |a, &b| a ^ b) as usize).collect();
    let data = rows.iter().flatten().map(|&b| b as f64).collect();
    Dataset::new(Matrix::from_vec(rows.len(), n_bits, data)?, labels, 2, Split::Train, None)
}

/// Uniform random bit strings labelled by their XOR.
pub fn gen_parity(n_bits: usize, n_samples: usize, seed: u64) -> Result<Dataset> {
    if n_bits == 0 {
        return Err(Error::Param("parity needs at least one bit".into()));
    }
    let mut rng = RngState::new(seed);
    let rows = (0..n_samples)
        .map(|_| (0..n_bits).map(|_| (rng.next_u64() >> 63) as u8).collect())
        .collect();
    parity_dataset(rows, n_bits)
}

/// All 2^n_bits strings in counting order, most significant bit first.
pub fn gen_parity_exhaustive(n_bits: usize) -> Result<Dataset> {
    if n_bits == 0 || n_bits > 20 {
        return Err(Error::Param(format!("exhaustive parity supports 1..=20 bits, got {n_bits}")));
    }
    let rows = (0..1usize << n_bits)
        .map(|v| (0..n_bits).rev().map(|b| ((v >> b) & 1) as u8).collect())
        .collect();
    parity_dataset(rows, n_bits)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BatchPlan {
    pub batch_size: usize,
    pub seed: u64,
}

impl BatchPlan {
    pub fn new(batch_size: usize, seed: u64) -> Result<Self> {
        if batch_size == 0 {
            return Err(Error::Param("batch size must be positive".into()));
        }
        Ok(BatchPlan { batch_size, seed })
    }

    /// The epoch's sample order: a permutation drawn from its own sub-seed.
    pub fn permutation(&self, n: usize, epoch: usize) -> Vec<usize> {
        RngState::new(sub_seed(self.seed, epoch as u64)).permutation(n)
    }

    /// Index lists of the epoch's minibatches; the last one may be short.
    pub fn batches(&self, n: usize, epoch: usize) -> Result<Vec<Vec<usize>>> {
        if self.batch_size == 0 {
            return Err(Error::Param("batch size must be positive".into()));
        }
        Ok(self.permutation(n, epoch).chunks(self.batch_size).map(<[usize]>::to_vec).collect())
    }
}
