//! Mini-batch training with Adam. Batches are a pure function of the
//! training seed and the step number, so a run resumed from a checkpoint
//! replays the same data an uninterrupted run would have seen.

use std::fmt::Write as _;

use ndarray::Array2;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::flow::normalize;
use super::model::{BatchItem, GradFault, LossBreakdown};
use super::nn::Adam;
use super::{Context, FlowSample, PolicyError, PolicyParams};

/// A demonstration window: context at some step and the absolute actions
/// that followed it.
#[derive(Debug, Clone)]
pub struct TrainSample {
    pub context: Context,
    pub actions: Array2<f64>,
    pub progress: Option<f64>,
}

#[derive(Debug, Clone, Default)]
pub struct TrainingSet {
    pub samples: Vec<TrainSample>,
}

impl TrainingSet {
    pub fn new(samples: Vec<TrainSample>) -> Self {
        Self { samples }
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Samples `batch_size` items with fresh noise, flow timestep and, for a
    /// random subset, a clamped action prefix.
    pub fn draw_batch<R: Rng>(&self, params: &PolicyParams, batch_size: usize, rng: &mut R) -> Vec<BatchItem> {
        let cfg = &params.config;
        (0..batch_size)
            .map(|_| {
                let s = &self.samples[rng.gen_range(0..self.samples.len())];
                let x1 = normalize(s.actions.view(), &s.context.robot_state, cfg);
                let x0 = Array2::from_shape_simple_fn(x1.raw_dim(), || rng.sample(StandardNormal));
                let tau = rng.gen_range(0.0..1.0);
                let mut flow = FlowSample::new(x0, x1, tau);
                if cfg.rtc_max_prefix > 0 && rng.gen_bool(cfg.rtc_prob) {
                    flow.prefix_len = rng.gen_range(1..=cfg.rtc_max_prefix);
                }
                BatchItem { context: s.context.clone(), flow, progress_label: s.progress }
            })
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetricsRow {
    pub step: u64,
    pub flow_loss: f64,
    pub progress_mse: Option<f64>,
}

impl MetricsRow {
    pub const CSV_HEADER: &'static str = "step,flow_loss,progress_mse";

    pub fn to_csv(&self) -> String {
        let mut s = String::new();
        let _ = write!(s, "{},{:.8e},", self.step, self.flow_loss);
        if let Some(p) = self.progress_mse {
            let _ = write!(s, "{p:.8e}");
        }
        s
    }
}

/// Parameters, optimizer state and the data schedule of one training run.
#[derive(Debug, Clone)]
pub struct Trainer {
    pub params: PolicyParams,
    pub adam: Adam,
    /// Completed optimizer steps.
    pub step: u64,
    pub seed: u64,
    pub batch_size: usize,
}

impl Trainer {
    pub fn new(params: PolicyParams, seed: u64, batch_size: usize) -> Self {
        let adam = Adam::new(params.tensors.iter().map(|t| t.len()));
        Self { params, adam, step: 0, seed, batch_size }
    }

    /// One Adam update on `batch`. Returns the losses measured before the update.
    pub fn train_step(&mut self, batch: &[BatchItem], lr: f64) -> Result<LossBreakdown, PolicyError> {
        self.train_step_with_fault(batch, lr, None)
    }

    pub fn train_step_with_fault(
        &mut self,
        batch: &[BatchItem],
        lr: f64,
        fault: Option<&GradFault>,
    ) -> Result<LossBreakdown, PolicyError> {
        if !(lr > 0.0) || !lr.is_finite() {
            return Err(PolicyError::Argument(format!("learning rate must be positive and finite, got {lr}")));
        }
        let (losses, grads) = self.params.loss_and_grad(batch, true, fault)?;
        let grads = grads.expect("gradient requested");
        if grads.iter().flatten().any(|g| !g.is_finite()) {
            return Err(PolicyError::Numeric(format!(
                "non-finite gradient at step {}; parameter norms: {}",
                self.step,
                self.params.norm_report()
            )));
        }
        self.adam.update(&mut self.params.tensors, &grads, lr);
        if !self.params.is_finite() {
            return Err(PolicyError::Numeric(format!(
                "parameters became non-finite at step {}; norms: {}",
                self.step,
                self.params.norm_report()
            )));
        }
        self.step += 1;
        Ok(losses)
    }

    /// The batch used for optimizer step `step`.
    pub fn batch_for_step(&self, set: &TrainingSet, step: u64) -> Vec<BatchItem> {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(step);
        set.draw_batch(&self.params, self.batch_size, &mut rng)
    }

    /// Runs `steps` further optimizer steps, reporting each one.
    pub fn fit(
        &mut self,
        set: &TrainingSet,
        steps: u64,
        lr: f64,
        mut on_step: impl FnMut(&MetricsRow),
    ) -> Result<Vec<MetricsRow>, PolicyError> {
        if set.is_empty() {
            return Err(PolicyError::Argument("training set is empty".into()));
        }
        let mut rows = Vec::with_capacity(steps as usize);
        for _ in 0..steps {
            let batch = self.batch_for_step(set, self.step);
            let step = self.step;
            let losses = self.train_step(&batch, lr)?;
            let row = MetricsRow { step, flow_loss: losses.flow, progress_mse: losses.progress_mse };
            on_step(&row);
            rows.push(row);
        }
        Ok(rows)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::policy::PolicyConfig;

    fn tiny() -> PolicyConfig {
        PolicyConfig {
            horizon: 4,
            action_dim: 2,
            state_dim: 2,
            feature_dim: 3,
            obs_len: 2,
            n_instructions: 2,
            embed_dim: 4,
            hidden_dim: 8,
            hidden_layers: 2,
            time_features: 4,
            attn_dim: 4,
            progress_hidden: 4,
            rtc_max_prefix: 2,
            ..PolicyConfig::default()
        }
    }

    fn set(cfg: &PolicyConfig) -> TrainingSet {
        let samples = (0..6)
            .map(|i| TrainSample {
                context: Context {
                    observation_features: Array2::from_elem((cfg.obs_len, cfg.feature_dim), i as f64 * 0.1),
                    instruction_id: i % 2,
                    robot_state: vec![0.0, 0.1 * i as f64],
                },
                actions: Array2::from_elem((cfg.horizon, cfg.action_dim), 0.05 * i as f64),
                progress: Some(i as f64 / 5.0),
            })
            .collect();
        TrainingSet::new(samples)
    }

    #[test]
    fn non_positive_lr_is_rejected() {
        let cfg = tiny();
        let mut tr = Trainer::new(PolicyParams::init(cfg.clone(), 0).unwrap(), 0, 4);
        let batch = tr.batch_for_step(&set(&cfg), 0);
        for lr in [0.0, -1e-3, f64::NAN] {
            assert!(matches!(tr.train_step(&batch, lr), Err(PolicyError::Argument(_))));
        }
        assert_eq!(tr.step, 0);
    }

    #[test]
    fn batches_depend_only_on_seed_and_step() {
        let cfg = tiny();
        let data = set(&cfg);
        let a = Trainer::new(PolicyParams::init(cfg.clone(), 0).unwrap(), 9, 3);
        let b = Trainer::new(PolicyParams::init(cfg.clone(), 1).unwrap(), 9, 3);
        let x = a.batch_for_step(&data, 17);
        let y = b.batch_for_step(&data, 17);
        for (p, q) in x.iter().zip(&y) {
            assert_eq!(p.flow, q.flow);
        }
        assert_ne!(a.batch_for_step(&data, 18)[0].flow, x[0].flow);
    }

    #[test]
    fn huge_lr_surfaces_numeric_error() {
        let cfg = tiny();
        let mut tr = Trainer::new(PolicyParams::init(cfg.clone(), 0).unwrap(), 0, 4);
        let data = set(&cfg);
        let mut result = Ok(Vec::new());
        for _ in 0..50 {
            result = tr.fit(&data, 1, 1e300, |_| {});
            if result.is_err() {
                break;
            }
        }
        assert!(matches!(result, Err(PolicyError::Numeric(_))));
    }

    #[test]
    fn metrics_csv_leaves_missing_progress_blank() {
        let row = MetricsRow { step: 3, flow_loss: 0.5, progress_mse: None };
        assert_eq!(row.to_csv(), "3,5.00000000e-1,");
    }
}
