//! Supervised training of the invertible ISP with Adam.

use std::io::Write;

use super::loss::{loss_and_grad, Pair};
use super::model::{InvIspModel, ModelConfig};
use crate::error::{Error, Result};
use crate::prng::Prng;

const BATCH_STREAM: u64 = 0xBA7C;

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub model: ModelConfig,
    pub lr: f64,
    pub steps: usize,
    pub batch: usize,
    pub seed: u64,
    pub lambda: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            model: ModelConfig::default(),
            lr: 1e-3,
            steps: 5000,
            batch: 4,
            seed: 0,
            lambda: 1.0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl Adam {
    pub fn new(len: usize, lr: f64) -> Self {
        Self {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            m: vec![0.0; len],
            v: vec![0.0; len],
            t: 0,
        }
    }

    pub fn step(&mut self, params: &mut [f64], grads: &[f64]) {
        assert_eq!(params.len(), self.m.len());
        assert_eq!(grads.len(), self.m.len());
        self.t += 1;
        let c1 = 1.0 - self.beta1.powi(self.t);
        let c2 = 1.0 - self.beta2.powi(self.t);
        for (((p, &g), m), v) in params.iter_mut().zip(grads).zip(&mut self.m).zip(&mut self.v) {
            *m = self.beta1 * *m + (1.0 - self.beta1) * g;
            *v = self.beta2 * *v + (1.0 - self.beta2) * g * g;
            *p -= self.lr * (*m / c1) / ((*v / c2).sqrt() + self.eps);
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogRow {
    pub step: usize,
    pub loss_fwd: f64,
    pub loss_inv: f64,
    pub loss_total: f64,
}

impl LogRow {
    pub const CSV_HEADER: &'static str = "step,loss_fwd,loss_inv,loss_total";

    pub fn write_csv<W: Write>(rows: &[LogRow], mut w: W) -> std::io::Result<()> {
        writeln!(w, "{}", Self::CSV_HEADER)?;
        for r in rows {
            writeln!(w, "{},{},{},{}", r.step, r.loss_fwd, r.loss_inv, r.loss_total)?;
        }
        Ok(())
    }
}

/// Stateful Adam loop over a fixed dataset. Deterministic given the seed.
pub struct Trainer<'a> {
    config: TrainConfig,
    data: &'a [Pair],
    model: InvIspModel,
    adam: Adam,
    sampler: Prng,
    order: Vec<usize>,
    cursor: usize,
    step: usize,
    log: Vec<LogRow>,
}

impl<'a> Trainer<'a> {
    pub fn new(data: &'a [Pair], config: TrainConfig) -> Result<Self> {
        if data.is_empty() {
            return Err(Error::Parameter("training set is empty".into()));
        }
        if config.batch == 0 {
            return Err(Error::Parameter("batch size must be positive".into()));
        }
        if !(config.lr > 0.0 && config.lr.is_finite()) {
            return Err(Error::Parameter("learning rate must be positive".into()));
        }
        let mut model = InvIspModel::new(config.model.clone(), config.seed)?;
        model.provenance.lambda = config.lambda;
        let adam = Adam::new(model.param_count(), config.lr);
        Ok(Self {
            sampler: Prng::derive(config.seed, &[BATCH_STREAM]),
            order: Vec::new(),
            cursor: 0,
            step: 0,
            log: Vec::new(),
            config,
            data,
            model,
            adam,
        })
    }

    fn next_batch(&mut self) -> Vec<Pair> {
        (0..self.config.batch)
            .map(|_| {
                if self.cursor == self.order.len() {
                    self.order = (0..self.data.len()).collect();
                    for i in (1..self.order.len()).rev() {
                        let j = self.sampler.next_below(i as u64 + 1) as usize;
                        self.order.swap(i, j);
                    }
                    self.cursor = 0;
                }
                self.cursor += 1;
                self.data[self.order[self.cursor - 1]].clone()
            })
            .collect()
    }

    /// One Adam step. On a non-finite loss or a singular mixing matrix the
    /// model is left at its last good parameters and an error is returned.
    pub fn step(&mut self) -> Result<LogRow> {
        let batch = self.next_batch();
        let result = loss_and_grad(&self.model, &batch, self.config.lambda).and_then(|r| {
            if r.grads.iter().all(|g| g.is_finite()) {
                Ok(r)
            } else {
                Err(Error::numeric(None, "non-finite gradient"))
            }
        });
        let r = match result {
            Ok(r) => r,
            Err(Error::Numeric { .. }) => {
                return Err(Error::Diverged {
                    step: self.step,
                    last_good_step: self.step,
                })
            }
            Err(e) => return Err(e),
        };
        let previous = self.model.flatten_params();
        let mut params = previous.clone();
        self.adam.step(&mut params, &r.grads);
        if let Err(e) = self.model.assign_params(&params) {
            self.model
                .assign_params(&previous)
                .expect("previous parameters were valid");
            return Err(e);
        }
        let row = LogRow {
            step: self.step,
            loss_fwd: r.loss_fwd,
            loss_inv: r.loss_inv,
            loss_total: r.loss_total,
        };
        self.step += 1;
        self.model.provenance.step = self.step as u64;
        self.log.push(row);
        Ok(row)
    }

    /// Runs `steps` Adam steps, calling `hook` after each one.
    pub fn run_with(
        &mut self,
        steps: usize,
        mut hook: impl FnMut(&Trainer<'a>, &LogRow) -> Result<()>,
    ) -> Result<()> {
        for _ in 0..steps {
            let row = self.step()?;
            hook(self, &row)?;
        }
        Ok(())
    }

    pub fn steps_done(&self) -> usize {
        self.step
    }

    pub fn model(&self) -> &InvIspModel {
        &self.model
    }

    pub fn log(&self) -> &[LogRow] {
        &self.log
    }

    pub fn into_outcome(self) -> TrainOutcome {
        TrainOutcome {
            model: self.model,
            log: self.log,
        }
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub model: InvIspModel,
    pub log: Vec<LogRow>,
}

pub fn train(data: &[Pair], config: &TrainConfig) -> Result<TrainOutcome> {
    let mut trainer = Trainer::new(data, config.clone())?;
    trainer.run_with(config.steps, |_, _| Ok(()))?;
    Ok(trainer.into_outcome())
}
