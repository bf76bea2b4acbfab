//! Scripted demonstrations: the arm visits each subtask's target with a
//! minimum-jerk move whose duration grows with the distance travelled,
//! holding still between subtasks.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::episode::{annotate_progress, Episode, EpisodeMeta, EpisodeSource, SubtaskSegment};
use super::{Dataset, DatasetError, Manifest, ManifestEntry};
use crate::executor::{RobotLimits, SimRobotState, Simulator, ACTION_DIM, JOINTS};
use crate::policy::min_jerk;
use crate::skills::SkillLibrary;

#[derive(Debug, Clone, PartialEq)]
pub struct SynthOptions {
    /// Std-dev of the start-pose and target perturbation on each joint, radians.
    pub noise_sigma: f64,
    /// Std-dev of per-step action jitter on each joint, radians.
    pub action_noise: f64,
    pub lead_in: usize,
    pub gap: usize,
    pub min_duration: usize,
    pub max_duration: usize,
    pub limits: RobotLimits,
}

impl Default for SynthOptions {
    fn default() -> Self {
        Self {
            noise_sigma: 0.05,
            action_noise: 0.001,
            lead_in: 8,
            gap: 12,
            min_duration: 60,
            max_duration: 120,
            limits: RobotLimits::default(),
        }
    }
}

impl SynthOptions {
    /// Ticks allotted to a move: 60 per radian of the largest joint change
    /// (half weight on the gripper) on top of 40, clamped to the configured range.
    pub fn duration_for(&self, from: &[f64], to: &[f64]) -> usize {
        let mut span: f64 = 0.0;
        for k in 0..ACTION_DIM {
            let w = if k < JOINTS { 1.0 } else { 0.5 };
            span = span.max(w * (to[k] - from[k]).abs());
        }
        ((40.0 + 60.0 * span).round() as usize).clamp(self.min_duration, self.max_duration)
    }
}

struct Recorder {
    sim: Simulator,
    state: SimRobotState,
    t: Vec<u64>,
    states: Vec<f64>,
    actions: Vec<f64>,
}

impl Recorder {
    fn push(&mut self, action: Vec<f64>) {
        self.t.push(self.state.step);
        self.states.extend(self.state.to_vector());
        self.state = self.sim.apply(&self.state, &action).state;
        self.actions.extend(action);
    }

    fn hold(&mut self, n: usize) {
        for _ in 0..n {
            let a = self.state.hold_action();
            self.push(a);
        }
    }

    fn frames(&self) -> usize {
        self.t.len()
    }
}

fn perturb(base: &[f64], sigma: f64, rng: &mut ChaCha8Rng) -> Vec<f64> {
    base.iter()
        .enumerate()
        .map(|(k, v)| if k < JOINTS && sigma > 0.0 { v + sigma * rng.sample::<f64, _>(StandardNormal) } else { *v })
        .collect()
}

/// `n_episodes` demonstrations cycling through the library's task
/// categories. A pure function of `(library, n_episodes, seed, opts)`.
pub fn generate_synthetic(
    library: &SkillLibrary,
    n_episodes: usize,
    seed: u64,
    opts: &SynthOptions,
) -> Result<Dataset, DatasetError> {
    library.validate(&opts.limits).map_err(|e| DatasetError::Script(e.0))?;
    if library.tasks.is_empty() {
        return Err(DatasetError::Script("library defines no tasks".into()));
    }
    let mut episodes = Vec::with_capacity(n_episodes);
    for e in 0..n_episodes {
        let task = &library.tasks[e % library.tasks.len()];
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(e as u64);
        let start = perturb(&library.home, opts.noise_sigma, &mut rng);
        if !opts.limits.contains(&start) {
            return Err(DatasetError::Script(format!("perturbed start pose of episode {e} leaves the joint limits")));
        }
        let mut rec = Recorder {
            sim: Simulator::new(opts.limits.clone()),
            state: SimRobotState::from_vector(&start, 0),
            t: Vec::new(),
            states: Vec::new(),
            actions: Vec::new(),
        };
        rec.hold(opts.lead_in);
        let mut segments = Vec::with_capacity(task.subtasks.len());
        for (k, label) in task.subtasks.iter().enumerate() {
            let skill = library.get(label).expect("validated library");
            let target = perturb(&skill.target, opts.noise_sigma, &mut rng);
            if !opts.limits.contains(&target) {
                return Err(DatasetError::Script(format!("perturbed target of {label} leaves the joint limits")));
            }
            let from = rec.state.to_vector();
            let duration = opts.duration_for(&from, &target);
            let start_frame = rec.frames();
            for i in 0..duration {
                let s = min_jerk((i + 1) as f64 / duration as f64);
                let mut a: Vec<f64> = from.iter().zip(&target).map(|(x, y)| x + (y - x) * s).collect();
                if opts.action_noise > 0.0 && i + 1 < duration {
                    for v in a.iter_mut().take(JOINTS) {
                        *v += opts.action_noise * rng.sample::<f64, _>(StandardNormal);
                    }
                }
                rec.push(a);
            }
            segments.push(SubtaskSegment {
                label: label.clone(),
                start_frame,
                end_frame: start_frame + duration,
                target: Some(target),
            });
            let pause = if k + 1 == task.subtasks.len() { opts.lead_in } else { opts.gap };
            rec.hold(pause.max(1));
        }
        let ep = Episode {
            id: format!("ep-{e:05}"),
            meta: EpisodeMeta {
                category: task.category.clone(),
                source: EpisodeSource::Synthetic,
                error: false,
                cameras: vec![],
            },
            state_dim: ACTION_DIM,
            action_dim: ACTION_DIM,
            t: rec.t,
            states: rec.states,
            actions: rec.actions,
            segments,
            progress: None,
        };
        episodes.push(annotate_progress(&ep)?);
    }
    let mut categories: Vec<String> = Vec::new();
    for ep in &episodes {
        if !categories.contains(&ep.meta.category) {
            categories.push(ep.meta.category.clone());
        }
    }
    let manifest = Manifest {
        version: 1,
        episodes: episodes
            .iter()
            .map(|ep| ManifestEntry {
                id: ep.id.clone(),
                file: format!("{}.episode.json", ep.id),
                category: ep.meta.category.clone(),
            })
            .collect(),
        categories,
        instructions: library.instructions(),
        labels: library.skills.iter().map(|s| s.label.clone()).collect(),
    };
    Ok(Dataset { manifest, episodes })
}
