use serde::{Deserialize, Serialize};

use super::{train_run, EpochMetrics, RunRecord, RunStatus, TrainConfig, TrainData};
use crate::error::{Error, Result};
use crate::nn::{BodyKind, Network};
use crate::optim::LrSchedule;
use crate::tensor::{sub_seed, Activation, RngState};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HyperSpace {
    /// Log-uniform.
    pub lr: (f64, f64),
    /// Uniform.
    pub momentum: (f64, f64),
    /// Log-uniform per-epoch exponential decay factor.
    pub decay: (f64, f64),
    pub activations: Vec<Activation>,
    /// Uniform; highway bodies only.
    pub gate_bias: (f64, f64),
}

impl Default for HyperSpace {
    fn default() -> Self {
        HyperSpace {
            lr: (1e-3, 1.0),
            momentum: (0.5, 0.99),
            decay: (0.9, 1.0),
            activations: vec![Activation::Relu, Activation::Tanh],
            gate_bias: (-10.0, -1.0),
        }
    }
}

impl HyperSpace {
    pub fn validate(&self) -> Result<()> {
        let ordered = |(lo, hi): (f64, f64)| lo.is_finite() && hi.is_finite() && lo <= hi;
        let checks = [
            (ordered(self.lr) && self.lr.0 > 0.0, "lr range must be positive and ordered"),
            (
                ordered(self.momentum) && self.momentum.0 >= 0.0 && self.momentum.1 < 1.0,
                "momentum range must lie in [0, 1)",
            ),
            (
                ordered(self.decay) && self.decay.0 > 0.0 && self.decay.1 <= 1.0,
                "decay range must lie in (0, 1]",
            ),
            (!self.activations.is_empty(), "at least one activation is required"),
            (
                !self.activations.contains(&Activation::Identity),
                "identity is not a hidden activation",
            ),
            (ordered(self.gate_bias) && self.gate_bias.1 < 0.0, "gate bias range must be negative"),
        ];
        match checks.iter().find(|(ok, _)| !ok) {
            Some((_, msg)) => Err(Error::Config((*msg).to_string())),
            None => Ok(()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HyperSample {
    pub lr: f64,
    pub momentum: f64,
    pub decay: f64,
    pub activation: Activation,
    /// Drawn for every trial so the draw sequence does not depend on the
    /// body kind; only applied to highway bodies.
    pub gate_bias: f64,
}

fn uniform(rng: &mut RngState, (lo, hi): (f64, f64)) -> Result<f64> {
    if lo == hi {
        // Keep the stream position independent of degenerate ranges.
        rng.next_u64();
        return Ok(lo);
    }
    rng.uniform_scalar(lo, hi)
}

fn log_uniform(rng: &mut RngState, (lo, hi): (f64, f64)) -> Result<f64> {
    Ok(uniform(rng, (lo.ln(), hi.ln()))?.exp().clamp(lo, hi))
}

impl HyperSample {
    pub fn draw(space: &HyperSpace, rng: &mut RngState) -> Result<Self> {
        Ok(HyperSample {
            lr: log_uniform(rng, space.lr)?,
            momentum: uniform(rng, space.momentum)?,
            decay: log_uniform(rng, space.decay)?,
            activation: space.activations[rng.index(space.activations.len())],
            gate_bias: uniform(rng, space.gate_bias)?,
        })
    }
}

/// The configuration of trial `index`: hyperparameters and all seeds are
/// drawn from the sub-stream `sub_seed(master_seed, index)`.
pub fn sample_config(
    space: &HyperSpace,
    base: &TrainConfig,
    master_seed: u64,
    index: usize,
) -> Result<(HyperSample, TrainConfig)> {
    let mut rng = RngState::new(sub_seed(master_seed, index as u64));
    let h = HyperSample::draw(space, &mut rng)?;
    let mut cfg = base.clone();
    cfg.optim.lr = h.lr;
    cfg.optim.momentum = h.momentum;
    cfg.optim.schedule = LrSchedule::Exponential { factor: h.decay };
    cfg.model.activation = h.activation;
    if cfg.model.body == BodyKind::Highway {
        cfg.init.gate_bias = h.gate_bias;
    }
    cfg.init.seed = rng.next_u64();
    cfg.shuffle_seed = rng.next_u64();
    Ok((h, cfg))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrialSummary {
    pub index: usize,
    pub run_id: String,
    pub hyper: HyperSample,
    pub completed: bool,
    pub final_train_loss: Option<f64>,
    /// Set when the trial failed outright rather than diverging.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SearchSummary {
    pub master_seed: u64,
    pub space: HyperSpace,
    pub trials: Vec<TrialSummary>,
    /// Index of the completed trial with the lowest final training loss.
    pub best: Option<usize>,
    pub top_k: usize,
    /// Indices of the top-k trials, best first.
    pub top_indices: Vec<usize>,
    /// Epoch-wise mean of the top-k training curves.
    pub top_k_mean: Vec<EpochMetrics>,
}

pub struct SearchOutcome {
    pub summary: SearchSummary,
    /// Per trial: the record and trained network, or the failure.
    pub runs: Vec<std::result::Result<(RunRecord, Network), String>>,
}

/// Completed trials ordered by final loss, ties by index.
fn ranking(runs: &[std::result::Result<(RunRecord, Network), String>]) -> Vec<(usize, f64)> {
    let mut ranked: Vec<(usize, f64)> = runs
        .iter()
        .enumerate()
        .filter_map(|(i, r)| r.as_ref().ok().and_then(|(rec, _)| rec.final_train_loss()).map(|l| (i, l)))
        .collect();
    ranked.sort_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)));
    ranked
}

/// Epoch-wise mean of the given curves, truncated to the shortest.
pub fn mean_curve(curves: &[&[EpochMetrics]]) -> Vec<EpochMetrics> {
    let Some(len) = curves.iter().map(|c| c.len()).min() else {
        return Vec::new();
    };
    let k = curves.len() as f64;
    let mean_opt = |f: &dyn Fn(&EpochMetrics) -> Option<f64>, e: usize| -> Option<f64> {
        curves.iter().map(|c| f(&c[e])).sum::<Option<f64>>().map(|s| s / k)
    };
    (0..len)
        .map(|e| EpochMetrics {
            epoch: e + 1,
            lr: curves.iter().map(|c| c[e].lr).sum::<f64>() / k,
            train_loss: curves.iter().map(|c| c[e].train_loss).sum::<f64>() / k,
            train_err: curves.iter().map(|c| c[e].train_err).sum::<f64>() / k,
            val_loss: mean_opt(&|m| m.val_loss, e),
            val_err: mean_opt(&|m| m.val_err, e),
        })
        .collect()
}

/// Runs `n_runs` independently sampled trials, `parallel` at a time.
/// Results are ordered by trial index whatever the execution order.
pub fn random_search(
    space: &HyperSpace,
    base: &TrainConfig,
    data: &TrainData,
    n_runs: usize,
    master_seed: u64,
    top_k: usize,
    parallel: usize,
) -> Result<SearchOutcome> {
    if n_runs == 0 {
        return Err(Error::Config("a search needs at least one run".into()));
    }
    space.validate()?;
    base.validate()?;
    let configs = (0..n_runs)
        .map(|i| sample_config(space, base, master_seed, i))
        .collect::<Result<Vec<_>>>()?;

    let run_one = |i: usize| -> std::result::Result<(RunRecord, Network), String> {
        train_run(&configs[i].1, data, &format!("trial-{i:03}")).map_err(|e| e.to_string())
    };
    let runs: Vec<_> = if parallel > 1 {
        use rayon::prelude::*;
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(parallel)
            .build()
            .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
        pool.install(|| (0..n_runs).into_par_iter().map(run_one).collect())
    } else {
        (0..n_runs).map(run_one).collect()
    };

    let ranked = ranking(&runs);
    let top_indices: Vec<usize> = ranked.iter().take(top_k).map(|&(i, _)| i).collect();
    let top_curves: Vec<&[EpochMetrics]> = top_indices
        .iter()
        .map(|&i| runs[i].as_ref().expect("ranked runs succeeded").0.curve.as_slice())
        .collect();
    let trials = runs
        .iter()
        .zip(&configs)
        .enumerate()
        .map(|(i, (r, (h, _)))| match r {
            Ok((rec, _)) => TrialSummary {
                index: i,
                run_id: rec.run_id.clone(),
                hyper: *h,
                completed: rec.outcome == RunStatus::Completed,
                final_train_loss: rec.final_train_loss(),
                error: None,
            },
            Err(e) => TrialSummary {
                index: i,
                run_id: format!("trial-{i:03}"),
                hyper: *h,
                completed: false,
                final_train_loss: None,
                error: Some(e.clone()),
            },
        })
        .collect();
    Ok(SearchOutcome {
        summary: SearchSummary {
            master_seed,
            space: space.clone(),
            trials,
            best: ranked.first().map(|&(i, _)| i),
            top_k,
            top_k_mean: mean_curve(&top_curves),
            top_indices,
        },
        runs,
    })
}
