//! Turns annotated episodes into policy training samples.

use ndarray::Array2;

use super::{Dataset, DatasetError, Episode};
use crate::executor::SubtaskConditioning;
use crate::policy::features::{OBS_LEN, OBS_STRIDE};
use crate::policy::{Context, PolicyConfig, TrainSample, TrainingSet};

#[derive(Debug, Clone, PartialEq)]
pub struct SampleOptions {
    /// Use every `stride`-th in-segment frame.
    pub stride: usize,
}

impl Default for SampleOptions {
    fn default() -> Self {
        Self { stride: 1 }
    }
}

/// Conditioning for segment `seg` of `episode`.
pub fn segment_conditioning(dataset: &Dataset, episode: &Episode, seg: usize) -> Result<SubtaskConditioning, DatasetError> {
    let s = &episode.segments[seg];
    let id = dataset
        .instruction_id(&s.label)
        .ok_or_else(|| DatasetError::Data(format!("label {} is not in the instruction vocabulary", s.label)))?;
    let target = s.target.clone().ok_or_else(|| DatasetError::Data(format!("segment {} has no target pose", s.label)))?;
    Ok(SubtaskConditioning::new(&dataset.manifest.instructions[id], id, target))
}

/// Policy context at `frame` while executing segment `seg`.
pub fn segment_context(dataset: &Dataset, episode: &Episode, seg: usize, frame: usize) -> Result<Context, DatasetError> {
    let cond = segment_conditioning(dataset, episode, seg)?;
    let first = frame.saturating_sub(OBS_LEN * OBS_STRIDE + 1);
    let history: Vec<Vec<f64>> = (first..=frame).map(|f| episode.state(f).to_vec()).collect();
    Ok(cond.context(&history, episode.state(frame)))
}

/// One sample per selected in-segment frame: the context at that frame, the
/// next `H` actions (the segment's final action repeats past its end) and
/// the progress label.
pub fn training_set(
    dataset: &Dataset,
    episodes: &[Episode],
    cfg: &PolicyConfig,
    opts: &SampleOptions,
) -> Result<TrainingSet, DatasetError> {
    let h = cfg.horizon;
    let mut samples = Vec::new();
    for ep in episodes {
        if ep.action_dim != cfg.action_dim || ep.state_dim != cfg.state_dim {
            return Err(DatasetError::Data(format!("episode {} dimensions do not match the policy", ep.id)));
        }
        for (k, seg) in ep.segments.iter().enumerate() {
            let (t0, t1) = (ep.t[seg.start_frame], ep.t[seg.end_frame]);
            for f in (seg.start_frame..=seg.end_frame).step_by(opts.stride.max(1)) {
                let context = segment_context(dataset, ep, k, f)?;
                let actions = Array2::from_shape_fn((h, cfg.action_dim), |(i, j)| ep.action((f + i).min(seg.end_frame))[j]);
                let progress = Some((ep.t[f] - t0) as f64 / (t1 - t0) as f64);
                samples.push(TrainSample { context, actions, progress });
            }
        }
    }
    if samples.is_empty() {
        return Err(DatasetError::Data("no in-segment frames to train on".into()));
    }
    Ok(TrainingSet::new(samples))
}
