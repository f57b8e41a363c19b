//! SGD with momentum, Adam, and the two-phase schedule that warms up with
//! Adam and then hands over to decaying SGD.
//!
//! The hand-over is mechanical: either a fixed step threshold or a
//! validation patience rule, whichever fires first. Slot buffers are created
//! lazily on the first step and mirror the parameter shapes from then on.

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Momentum SGD: `v = mu*v + g; theta -= lr*v`.
#[derive(Clone, Debug)]
pub struct Sgd {
    pub momentum: f64,
    velocity: Vec<Tensor>,
}

impl Sgd {
    pub fn new(momentum: f64) -> Sgd {
        Sgd {
            momentum,
            velocity: Vec::new(),
        }
    }

    pub fn step(&mut self, params: &mut [&mut Tensor], grads: &[Tensor], lr: f64) -> Result<()> {
        ensure_slots(&mut self.velocity, grads)?;
        check_alignment(params, grads)?;
        for ((theta, g), v) in params.iter_mut().zip(grads).zip(&mut self.velocity) {
            for ((t, &gv), vv) in theta
                .data_mut()
                .iter_mut()
                .zip(g.data())
                .zip(v.data_mut())
            {
                *vv = self.momentum * *vv + gv;
                *t -= lr * *vv;
            }
        }
        Ok(())
    }
}

/// Adam with bias correction. `beta2` defaults to 0.99 in the schedule
/// config; epsilon sits outside the square root.
#[derive(Clone, Debug)]
pub struct Adam {
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    m: Vec<Tensor>,
    v: Vec<Tensor>,
    t: u64,
}

impl Adam {
    pub fn new(beta1: f64, beta2: f64, epsilon: f64) -> Adam {
        Adam {
            beta1,
            beta2,
            epsilon,
            m: Vec::new(),
            v: Vec::new(),
            t: 0,
        }
    }

    pub fn timestep(&self) -> u64 {
        self.t
    }

    pub fn step(&mut self, params: &mut [&mut Tensor], grads: &[Tensor], lr: f64) -> Result<()> {
        ensure_slots(&mut self.m, grads)?;
        ensure_slots(&mut self.v, grads)?;
        check_alignment(params, grads)?;
        self.t += 1;
        let c1 = 1.0 - self.beta1.powi(self.t as i32);
        let c2 = 1.0 - self.beta2.powi(self.t as i32);
        for (((theta, g), m), v) in params
            .iter_mut()
            .zip(grads)
            .zip(&mut self.m)
            .zip(&mut self.v)
        {
            for (((t, &gv), mv), vv) in theta
                .data_mut()
                .iter_mut()
                .zip(g.data())
                .zip(m.data_mut())
                .zip(v.data_mut())
            {
                *mv = self.beta1 * *mv + (1.0 - self.beta1) * gv;
                *vv = self.beta2 * *vv + (1.0 - self.beta2) * gv * gv;
                let m_hat = *mv / c1;
                let v_hat = *vv / c2;
                *t -= lr * m_hat / (v_hat.sqrt() + self.epsilon);
            }
        }
        Ok(())
    }
}

fn ensure_slots(slots: &mut Vec<Tensor>, grads: &[Tensor]) -> Result<()> {
    if slots.is_empty() {
        *slots = grads.iter().map(Tensor::zeros_like).collect();
        return Ok(());
    }
    if slots.len() != grads.len() {
        return Err(Error::ShapeMismatch {
            context: "optimizer slots vs gradients",
            left: vec![slots.len()],
            right: vec![grads.len()],
        });
    }
    for (s, g) in slots.iter().zip(grads) {
        if s.shape() != g.shape() {
            return Err(Error::ShapeMismatch {
                context: "optimizer slot shape vs gradient",
                left: s.shape().to_vec(),
                right: g.shape().to_vec(),
            });
        }
    }
    Ok(())
}

fn check_alignment(params: &[&mut Tensor], grads: &[Tensor]) -> Result<()> {
    if params.len() != grads.len() {
        return Err(Error::ShapeMismatch {
            context: "parameters vs gradients",
            left: vec![params.len()],
            right: vec![grads.len()],
        });
    }
    for (p, g) in params.iter().zip(grads) {
        if p.shape() != g.shape() {
            return Err(Error::ShapeMismatch {
                context: "parameter shape vs gradient",
                left: p.shape().to_vec(),
                right: g.shape().to_vec(),
            });
        }
    }
    Ok(())
}

/// Whether to count decay intervals in optimizer steps or in epochs.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DecayUnit {
    Steps,
    Epochs,
}

/// Which optimizer the schedule selects at a given point.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Phase {
    Adam,
    Sgd,
}

/// Two-phase schedule configuration.
#[derive(Clone, Debug)]
pub struct ScheduleConfig {
    pub adam_lr: f64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_epsilon: f64,
    pub sgd_lr: f64,
    pub sgd_momentum: f64,
    /// Hand over to SGD at this optimizer step (u64::MAX = never by count).
    pub switch_step: u64,
    pub decay_factor: f64,
    pub decay_interval: u64,
    pub decay_unit: DecayUnit,
    pub lr_min: f64,
    /// Consecutive validation degradations that force the hand-over early;
    /// 0 disables the rule.
    pub patience: usize,
}

impl Default for ScheduleConfig {
    fn default() -> Self {
        ScheduleConfig {
            adam_lr: 1e-4,
            adam_beta1: 0.9,
            adam_beta2: 0.99,
            adam_epsilon: 1e-8,
            sgd_lr: 1e-4,
            sgd_momentum: 0.9,
            switch_step: u64::MAX,
            decay_factor: 0.1,
            decay_interval: 30,
            decay_unit: DecayUnit::Epochs,
            lr_min: 1e-4,
            patience: 3,
        }
    }
}

impl ScheduleConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("adam_lr", self.adam_lr),
            ("sgd_lr", self.sgd_lr),
            ("decay_factor", self.decay_factor),
            ("lr_min", self.lr_min),
        ] {
            if !(v > 0.0) {
                return Err(Error::Config(format!("{name} must be positive, got {v}")));
            }
        }
        if self.decay_interval == 0 {
            return Err(Error::Config("decay_interval must be positive".into()));
        }
        Ok(())
    }
}

/// Tracks the phase hand-over and produces the effective learning rate.
#[derive(Clone, Debug)]
pub struct Schedule {
    cfg: ScheduleConfig,
    switched_at: Option<(u64, u64)>,
    last_validation: Option<f64>,
    degradations: usize,
    patience_fired: bool,
}

impl Schedule {
    pub fn new(cfg: ScheduleConfig) -> Result<Schedule> {
        cfg.validate()?;
        Ok(Schedule {
            cfg,
            switched_at: None,
            last_validation: None,
            degradations: 0,
            patience_fired: false,
        })
    }

    pub fn config(&self) -> &ScheduleConfig {
        &self.cfg
    }

    /// Feed one per-epoch validation loss (or any value where rising means
    /// over-fitting). After `patience` consecutive rises the next
    /// [`Self::choice`] switches to SGD.
    pub fn observe_validation_loss(&mut self, loss: f64) {
        if self.cfg.patience == 0 || self.switched_at.is_some() {
            return;
        }
        if let Some(prev) = self.last_validation {
            if loss > prev {
                self.degradations += 1;
            } else {
                self.degradations = 0;
            }
            if self.degradations >= self.cfg.patience {
                self.patience_fired = true;
            }
        }
        self.last_validation = Some(loss);
    }

    /// Optimizer choice and effective learning rate for the step about to
    /// run. Records the hand-over point the first time it fires; threshold
    /// crossings are anchored at the configured step so the decay clock does
    /// not depend on when the schedule was first consulted.
    pub fn choice(&mut self, step: u64, epoch: u64) -> (Phase, f64) {
        if self.switched_at.is_none() {
            if self.patience_fired {
                self.switched_at = Some((step, epoch));
            } else if step >= self.cfg.switch_step {
                self.switched_at = Some((self.cfg.switch_step, epoch));
            }
        }
        match self.switched_at {
            None => (Phase::Adam, self.cfg.adam_lr),
            Some((s0, e0)) => {
                let elapsed = match self.cfg.decay_unit {
                    DecayUnit::Steps => step - s0,
                    DecayUnit::Epochs => epoch - e0,
                };
                let intervals = (elapsed / self.cfg.decay_interval) as i32;
                let lr = self.cfg.sgd_lr * self.cfg.decay_factor.powi(intervals);
                (Phase::Sgd, lr.max(self.cfg.lr_min))
            }
        }
    }
}
