//! Training loop, evaluation, run records and the random search harness.

mod search;

pub use search::{mean_curve, random_search, sample_config, HyperSample, HyperSpace, SearchOutcome, SearchSummary, TrialSummary};

use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::data::{self, BatchPlan, Dataset, MnistPart};
use crate::error::{Error, Result};
use crate::init::{init_network, Architecture, InitSpec};
use crate::io::{csv_bytes, write_atomic, write_json};
use crate::nn::{batch_sums, checkpoint, BodyKind, Network};
use crate::optim::{LrSchedule, SgdMomentum};
use crate::tensor::Activation;

/// Rows per forward pass in [`evaluate`].
pub const EVAL_BATCH: usize = 1000;

/// A minibatch loss above `DIVERGENCE_FACTOR · ln(classes)` (a hundred
/// times chance level) ends the run as diverged. Saturating units and the
/// log-sum-exp loss keep exploding runs finite, so waiting for NaN alone
/// can take arbitrarily long.
pub const DIVERGENCE_FACTOR: f64 = 100.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSpec {
    /// Weight layers including the first plain layer and the output layer.
    pub depth: usize,
    pub width: usize,
    pub body: BodyKind,
    pub activation: Activation,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OptimSpec {
    pub lr: f64,
    pub momentum: f64,
    #[serde(default)]
    pub schedule: LrSchedule,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "snake_case", deny_unknown_fields)]
pub enum DataSpec {
    Mnist {
        /// Directory holding the IDX files; defaults to `$HWY_DATA_DIR/mnist`,
        /// else `data/mnist`.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        dir: Option<PathBuf>,
        /// Hold out the last `validation` training images.
        #[serde(default)]
        validation: usize,
        /// Stratified subsample size of the (remaining) training images.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        subset: Option<usize>,
        #[serde(default)]
        subset_seed: u64,
        /// Average-pooling factor; 1 keeps 28×28.
        #[serde(default = "one")]
        downsample: usize,
    },
    Parity {
        bits: usize,
        /// Random samples; `None` enumerates all 2^bits strings.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        samples: Option<usize>,
        #[serde(default)]
        seed: u64,
    },
}

fn one() -> usize {
    1
}

fn default_batch() -> usize {
    64
}

fn default_epochs() -> usize {
    50
}

pub fn default_mnist_dir() -> PathBuf {
    match std::env::var_os("HWY_DATA_DIR") {
        Some(root) => PathBuf::from(root).join("mnist"),
        None => PathBuf::from("data").join("mnist"),
    }
}

/// Training and optional validation data for a run.
#[derive(Debug, Clone)]
pub struct TrainData {
    pub train: Dataset,
    pub val: Option<Dataset>,
}

impl DataSpec {
    /// Fills in defaults that depend on the environment, so the returned value alone
    /// reproduces the data.
    pub fn resolved(&self) -> DataSpec {
        let mut out = self.clone();
        if let DataSpec::Mnist { dir, .. } = &mut out {
            dir.get_or_insert_with(default_mnist_dir);
        }
        out
    }

    pub fn load(&self) -> Result<TrainData> {
        match self.resolved() {
            DataSpec::Mnist {
                dir,
                validation,
                subset,
                subset_seed,
                downsample,
            } => {
                let full = data::load_mnist(&dir.expect("resolved"), MnistPart::Train)?;
                let (train, val) = if validation > 0 {
                    let (t, v) = full.split_validation(validation)?;
                    (t, Some(v))
                } else {
                    (full, None)
                };
                let train = match subset {
                    Some(n) => data::subsample(&train, n, subset_seed)?,
                    None => train,
                };
                if downsample == 1 {
                    return Ok(TrainData { train, val });
                }
                Ok(TrainData {
                    train: data::downsample(&train, downsample)?,
                    val: val.map(|v| data::downsample(&v, downsample)).transpose()?,
                })
            }
            DataSpec::Parity { bits, samples, seed } => {
                let train = match samples {
                    Some(n) => data::gen_parity(bits, n, seed)?,
                    None => data::gen_parity_exhaustive(bits)?,
                };
                Ok(TrainData { train, val: None })
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub model: ModelSpec,
    pub init: InitSpec,
    pub optim: OptimSpec,
    #[serde(default = "default_batch")]
    pub batch_size: usize,
    #[serde(default = "default_epochs")]
    pub epochs: usize,
    pub shuffle_seed: u64,
    pub data: DataSpec,
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |e: Error| Error::Config(e.to_string());
        if self.model.depth < 2 || self.model.width == 0 {
            return Err(Error::Config(format!(
                "need depth >= 2 and width >= 1, got depth {} width {}",
                self.model.depth, self.model.width
            )));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be positive".into()));
        }
        self.optim.schedule.validate().map_err(bad)?;
        if !(self.optim.lr > 0.0 && self.optim.lr.is_finite()) || !(0.0..1.0).contains(&self.optim.momentum) {
            return Err(Error::Config(format!(
                "need lr > 0 and momentum in [0, 1), got {} and {}",
                self.optim.lr, self.optim.momentum
            )));
        }
        Ok(())
    }

    pub fn architecture(&self, ds: &Dataset) -> Architecture {
        Architecture {
            input_dim: ds.dim(),
            width: self.model.width,
            classes: ds.classes,
            depth: self.model.depth,
            body: self.model.body,
            activation: self.model.activation,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochMetrics {
    /// 1-based.
    pub epoch: usize,
    pub lr: f64,
    /// Sample-weighted mean over the epoch's minibatches, each measured
    /// before its update.
    pub train_loss: f64,
    pub train_err: f64,
    pub val_loss: Option<f64>,
    pub val_err: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum RunStatus {
    Completed,
    /// Training stopped during `epoch` (1-based); that epoch is not in the curve.
    Diverged { epoch: usize, reason: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub run_id: String,
    pub config: TrainConfig,
    pub param_count: usize,
    pub outcome: RunStatus,
    pub curve: Vec<EpochMetrics>,
    /// Excluded from reproducibility comparisons.
    pub wall_time_s: f64,
    /// File name of the checkpoint, relative to the record.
    #[serde(default)]
    pub checkpoint: Option<String>,
}

impl RunRecord {
    pub fn final_train_loss(&self) -> Option<f64> {
        match self.outcome {
            RunStatus::Completed => self.curve.last().map(|m| m.train_loss),
            RunStatus::Diverged { .. } => None,
        }
    }

    pub fn curve_csv(&self) -> Result<Vec<u8>> {
        let header: Vec<String> = ["epoch", "train_loss", "train_err", "val_loss", "val_err"]
            .map(String::from)
            .to_vec();
        let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        csv_bytes(
            &header,
            self.curve.iter().map(|m| {
                vec![
                    m.epoch.to_string(),
                    m.train_loss.to_string(),
                    m.train_err.to_string(),
                    opt(m.val_loss),
                    opt(m.val_err),
                ]
            }),
        )
    }

    /// Bitwise comparison of everything except wall time.
    pub fn same_result(&self, other: &RunRecord) -> bool {
        let strip = |r: &RunRecord| RunRecord {
            wall_time_s: 0.0,
            ..r.clone()
        };
        let (a, b) = (strip(self), strip(other));
        a.run_id == b.run_id
            && a.config == b.config
            && a.outcome == b.outcome
            && a.param_count == b.param_count
            && a.curve.len() == b.curve.len()
            && a.curve.iter().zip(&b.curve).all(|(x, y)| {
                x.train_loss.to_bits() == y.train_loss.to_bits()
                    && x.train_err.to_bits() == y.train_err.to_bits()
                    && x.val_loss.map(f64::to_bits) == y.val_loss.map(f64::to_bits)
                    && x.val_err.map(f64::to_bits) == y.val_err.map(f64::to_bits)
                    && x.lr.to_bits() == y.lr.to_bits()
            })
    }
}

/// Mean loss and error rate over the whole dataset, in fixed-size chunks.
pub fn evaluate(net: &Network, ds: &Dataset) -> Result<(f64, f64)> {
    evaluate_with(net, ds, None)
}

/// As [`evaluate`], with body layer `lesion` copying its input.
pub fn evaluate_lesioned(net: &Network, ds: &Dataset, lesion: usize) -> Result<(f64, f64)> {
    evaluate_with(net, ds, Some(lesion))
}

fn evaluate_with(net: &Network, ds: &Dataset, lesion: Option<usize>) -> Result<(f64, f64)> {
    if ds.is_empty() {
        return Err(Error::Param("cannot evaluate on an empty dataset".into()));
    }
    let (mut loss, mut correct) = (0.0, 0usize);
    let idx: Vec<usize> = (0..ds.len()).collect();
    for chunk in idx.chunks(EVAL_BATCH) {
        let x = ds.features.select_rows(chunk);
        let labels: Vec<usize> = chunk.iter().map(|&i| ds.labels[i]).collect();
        let logits = net.logits(&x, lesion)?;
        let (l, c) = batch_sums(&logits, &labels)?;
        loss += l;
        correct += c;
    }
    let n = ds.len() as f64;
    Ok((loss / n, 1.0 - correct as f64 / n))
}

fn check_data_dims(net: &Network, ds: &Dataset) -> Result<()> {
    if net.input_dim() != ds.dim() || net.classes() < ds.classes {
        return Err(Error::Shape {
            op: "network vs dataset",
            left: (net.input_dim(), net.classes()),
            right: (ds.dim(), ds.classes),
        });
    }
    Ok(())
}

/// Trains a fresh network on `data`. Divergence (an exploding loss or a
/// non-finite gradient) ends the run early and is recorded, not returned as an error.
pub fn train_run(config: &TrainConfig, data: &TrainData, run_id: &str) -> Result<(RunRecord, Network)> {
    config.validate()?;
    let start = Instant::now();
    let arch = config.architecture(&data.train);
    let mut net = init_network(&arch, &config.init)?;
    check_data_dims(&net, &data.train)?;
    if let Some(v) = &data.val {
        check_data_dims(&net, v)?;
    }
    let plan = BatchPlan::new(config.batch_size, config.shuffle_seed)?;
    let names = net.param_names();
    let mut opt = SgdMomentum::new(config.optim.lr, config.optim.momentum, &net.params())?;
    let ds = &data.train;
    let mut curve = Vec::with_capacity(config.epochs);
    let mut outcome = RunStatus::Completed;
    let loss_limit = DIVERGENCE_FACTOR * (ds.classes.max(2) as f64).ln();

    'epochs: for epoch in 0..config.epochs {
        let lr = config.optim.schedule.lr_at(config.optim.lr, epoch);
        let (mut loss_sum, mut correct) = (0.0, 0usize);
        for batch in plan.batches(ds.len(), epoch)? {
            let x = ds.features.select_rows(&batch);
            let labels: Vec<usize> = batch.iter().map(|&i| ds.labels[i]).collect();
            let trace = net.forward(&x, &labels)?;
            let (l, c) = batch_sums(&trace.output.output, &labels)?;
            let batch_loss = l / batch.len() as f64;
            if !(batch_loss <= loss_limit) {
                outcome = RunStatus::Diverged {
                    epoch: epoch + 1,
                    reason: format!("minibatch loss {batch_loss} exceeds {loss_limit}"),
                };
                break 'epochs;
            }
            loss_sum += l;
            correct += c;
            let grads = net.param_gradients(&trace, &labels)?;
            let step = opt.step(&mut net.params_mut(), &grads.tensors(), &names, lr);
            match step {
                Ok(()) => {}
                Err(Error::NonFinite(what)) => {
                    outcome = RunStatus::Diverged {
                        epoch: epoch + 1,
                        reason: format!("non-finite {what}"),
                    };
                    break 'epochs;
                }
                Err(e) => return Err(e),
            }
        }
        let n = ds.len() as f64;
        let (val_loss, val_err) = match &data.val {
            Some(v) => {
                let (l, e) = evaluate(&net, v)?;
                (Some(l), Some(e))
            }
            None => (None, None),
        };
        curve.push(EpochMetrics {
            epoch: epoch + 1,
            lr,
            train_loss: loss_sum / n,
            train_err: 1.0 - correct as f64 / n,
            val_loss,
            val_err,
        });
        log::debug!("{run_id} epoch {}: loss {:.6}", epoch + 1, loss_sum / n);
    }

    let record = RunRecord {
        run_id: run_id.to_string(),
        config: TrainConfig {
            data: config.data.resolved(),
            ..config.clone()
        },
        param_count: net.param_count(),
        outcome,
        curve,
        wall_time_s: start.elapsed().as_secs_f64(),
        checkpoint: None,
    };
    Ok((record, net))
}

/// Writes `{run_id}.json`, `{run_id}.csv` and, for completed runs,
/// `{run_id}.ckpt` into `dir`.
pub fn persist_run(dir: &Path, record: &RunRecord, net: &Network) -> Result<RunRecord> {
    let mut record = record.clone();
    if record.outcome == RunStatus::Completed {
        let name = format!("{}.ckpt", record.run_id);
        checkpoint::save(net, &dir.join(&name))?;
        record.checkpoint = Some(name);
    }
    write_atomic(&dir.join(format!("{}.csv", record.run_id)), &record.curve_csv()?)?;
    write_json(&dir.join(format!("{}.json", record.run_id)), &record)?;
    Ok(record)
}
