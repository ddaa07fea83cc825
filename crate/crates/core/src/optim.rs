//! Heavy-ball SGD and per-epoch learning-rate schedules.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::Matrix;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum LrSchedule {
    /// λ · factor^epoch.
    Exponential { factor: f64 },
    /// λ · γ^(number of milestones ≤ epoch).
    Step { gamma: f64, milestones: Vec<usize> },
}

impl Default for LrSchedule {
    fn default() -> Self {
        LrSchedule::Exponential { factor: 1.0 }
    }
}

impl LrSchedule {
    pub fn validate(&self) -> Result<()> {
        match self {
            LrSchedule::Exponential { factor } if !(*factor > 0.0 && *factor <= 1.0) => {
                Err(Error::Param(format!("decay factor {factor} outside (0, 1]")))
            }
            LrSchedule::Step { gamma, .. } if !(*gamma > 0.0 && *gamma <= 1.0) => {
                Err(Error::Param(format!("gamma {gamma} outside (0, 1]")))
            }
            LrSchedule::Step { milestones, .. } if milestones.windows(2).any(|w| w[0] >= w[1]) => {
                Err(Error::Param(format!("milestones {milestones:?} are not strictly increasing")))
            }
            _ => Ok(()),
        }
    }

    pub fn lr_at(&self, base_lr: f64, epoch: usize) -> f64 {
        match self {
            LrSchedule::Exponential { factor } => base_lr * factor.powi(epoch.min(i32::MAX as usize) as i32),
            LrSchedule::Step { gamma, milestones } => {
                let passed = milestones.iter().take_while(|&&m| m <= epoch).count();
                base_lr * gamma.powi(passed as i32)
            }
        }
    }
}

#[derive(Debug, Clone)]
pub struct SgdMomentum {
    base_lr: f64,
    momentum: f64,
    velocity: Vec<Matrix>,
}

impl SgdMomentum {
    /// Velocity buffers are shaped after `params` and start at zero.
    pub fn new(base_lr: f64, momentum: f64, params: &[&Matrix]) -> Result<Self> {
        if !(base_lr > 0.0 && base_lr.is_finite()) {
            return Err(Error::Param(format!("learning rate {base_lr} must be positive")));
        }
        if !(0.0..1.0).contains(&momentum) {
            return Err(Error::Param(format!("momentum {momentum} outside [0, 1)")));
        }
        Ok(SgdMomentum {
            base_lr,
            momentum,
            velocity: params.iter().map(|p| Matrix::zeros(p.rows(), p.cols())).collect(),
        })
    }

    pub fn base_lr(&self) -> f64 {
        self.base_lr
    }

    pub fn momentum(&self) -> f64 {
        self.momentum
    }

    pub fn velocity(&self) -> &[Matrix] {
        &self.velocity
    }

    /// v ← μv − lr·g; p ← p + v.
    ///
    /// Every gradient is validated before any parameter is touched, so a
    /// rejected step leaves both parameters and velocity unchanged.
    pub fn step(&mut self, params: &mut [&mut Matrix], grads: &[&Matrix], names: &[String], lr: f64) -> Result<()> {
        if params.len() != self.velocity.len() || grads.len() != self.velocity.len() {
            return Err(Error::Usage(format!(
                "optimizer tracks {} tensors, got {} parameters and {} gradients",
                self.velocity.len(),
                params.len(),
                grads.len()
            )));
        }
        for (i, (p, g)) in params.iter().zip(grads).enumerate() {
            let name = names.get(i).map(String::as_str).unwrap_or("parameter");
            if p.shape() != self.velocity[i].shape() || g.shape() != p.shape() {
                return Err(Error::Shape {
                    op: "sgd_step",
                    left: p.shape(),
                    right: g.shape(),
                });
            }
            g.check_finite(|| format!("gradient of {name}"))?;
        }
        let mu = self.momentum;
        for ((p, g), v) in params.iter_mut().zip(grads).zip(&mut self.velocity) {
            for ((pv, &gv), vv) in p.as_mut_slice().iter_mut().zip(g.as_slice()).zip(v.as_mut_slice()) {
                *vv = mu * *vv - lr * gv;
                *pv += *vv;
            }
        }
        Ok(())
    }
}
