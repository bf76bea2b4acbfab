//! Inputs shared by the benchmarks.

use chembot_core::eval::StepSequence;
use chembot_core::policy::{features, Context, PolicyConfig};
use ndarray::Array2;

/// A generated plan and its reference with one reordering and one omission.
pub fn plan_pair() -> (StepSequence, StepSequence) {
    let gen = StepSequence::new([
        "grasp the reagent bottle",
        "open the reagent bottle",
        "pour 5 mL of the reagent into the beaker",
        "place the bottle on the rack",
        "stir the beaker with the glass rod",
    ])
    .unwrap();
    let reference = StepSequence::new([
        "open the reagent bottle",
        "grasp the reagent bottle",
        "pour 5 mL of reagent into the beaker",
        "stir the solution with the glass rod",
    ])
    .unwrap();
    (gen, reference)
}

/// A zero observation context shaped for `cfg`.
pub fn blank_context(cfg: &PolicyConfig) -> Context {
    Context {
        observation_features: Array2::zeros((cfg.obs_len, features::feature_dim(cfg.state_dim))),
        instruction_id: 0,
        robot_state: vec![0.0; cfg.state_dim],
    }
}
