//! Loss evaluation, Euler sampling of the learned flow, and progress
//! inference.

use ndarray::{Array2, ArrayView2};
use rand::Rng;
use rand_distr::StandardNormal;

use super::model::{BatchItem, ProgressInput, VelocityInput};
use super::{Context, PolicyConfig, PolicyError, PolicyParams};

/// Maps absolute actions into the space the flow is trained in.
pub fn normalize(actions: ArrayView2<f64>, state: &[f64], cfg: &PolicyConfig) -> Array2<f64> {
    let mut x = actions.to_owned();
    if cfg.relative_actions {
        for mut row in x.rows_mut() {
            row.iter_mut().zip(state).for_each(|(a, s)| *a -= s);
        }
    }
    x / cfg.action_scale
}

pub fn denormalize(x: ArrayView2<f64>, state: &[f64], cfg: &PolicyConfig) -> Array2<f64> {
    let mut a = &x * cfg.action_scale;
    if cfg.relative_actions {
        for mut row in a.rows_mut() {
            row.iter_mut().zip(state).for_each(|(v, s)| *v += s);
        }
    }
    a
}

/// Masked mean-squared flow-matching loss of a batch.
pub fn flow_loss(params: &PolicyParams, batch: &[BatchItem]) -> Result<f64, PolicyError> {
    Ok(params.loss_and_grad(batch, false, None)?.0.flow)
}

/// Integrates the velocity field from `x0` at τ = 0 to τ = 1 with `steps`
/// Euler steps. Rows covered by `prefix` (normalized) are clamped for the
/// whole integration and presented to the network with timestep 1.
pub fn sample_from_noise(
    params: &PolicyParams,
    ctx: &Context,
    x0: Array2<f64>,
    prefix: Option<ArrayView2<f64>>,
    steps: usize,
) -> Result<Array2<f64>, PolicyError> {
    let cfg = &params.config;
    ctx.validate(cfg)?;
    if steps == 0 {
        return Err(PolicyError::Argument("at least one Euler step is required".into()));
    }
    let (h, a) = (cfg.horizon, cfg.action_dim);
    if x0.dim() != (h, a) {
        return Err(PolicyError::Config(format!("noise is {:?}, expected ({h}, {a})", x0.dim())));
    }
    let d = prefix.map_or(0, |p| p.nrows());
    if d >= h {
        return Err(PolicyError::Argument(format!("prefix of {d} rows leaves nothing to sample (H = {h})")));
    }
    if let Some(p) = prefix {
        if p.ncols() != a {
            return Err(PolicyError::Config(format!("prefix has {} columns, expected {a}", p.ncols())));
        }
    }
    let mut x = x0.into_shape_with_order((1, h * a)).expect("contiguous noise");
    if let Some(p) = prefix {
        for r in 0..d {
            for k in 0..a {
                x[[0, r * a + k]] = p[[r, k]];
            }
        }
    }
    let dt = 1.0 / steps as f64;
    for step in 0..steps {
        let tau = step as f64 * dt;
        let tau_pos = Array2::from_shape_fn((1, h), |(_, r)| if r < d { 1.0 } else { tau });
        let input = VelocityInput::from_contexts(cfg, &[ctx], x.clone(), tau_pos, vec![tau]);
        let (v, _) = params.velocity_forward(&input);
        for i in d * a..h * a {
            x[[0, i]] += dt * v[[0, i]];
        }
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(PolicyError::Numeric(format!("sampling diverged; parameter norms: {}", params.norm_report())));
    }
    Ok(x.into_shape_with_order((h, a)).expect("contiguous sample"))
}

/// Draws an absolute `H × A` action chunk. `prefix`, when given, holds the
/// absolute actions already committed for the first rows of the chunk.
pub fn sample_actions<R: Rng>(
    params: &PolicyParams,
    ctx: &Context,
    prefix: Option<ArrayView2<f64>>,
    steps: usize,
    rng: &mut R,
) -> Result<Array2<f64>, PolicyError> {
    let cfg = &params.config;
    let x0 = Array2::from_shape_simple_fn((cfg.horizon, cfg.action_dim), || rng.sample(StandardNormal));
    let prefix_n = prefix.map(|p| normalize(p, &ctx.robot_state, cfg));
    let x = sample_from_noise(params, ctx, x0, prefix_n.as_ref().map(|p| p.view()), steps)?;
    let mut actions = denormalize(x.view(), &ctx.robot_state, cfg);
    if let Some(p) = prefix {
        // Undo round-off so committed actions come back bit-identical.
        actions.slice_mut(ndarray::s![..p.nrows(), ..]).assign(&p);
    }
    Ok(actions)
}

/// Predicted completion in `[0, 1]` for one context.
pub fn progress_forward(params: &PolicyParams, ctx: &Context) -> Result<f64, PolicyError> {
    ctx.validate(&params.config)?;
    let input = ProgressInput::from_contexts(&params.config, &[ctx]);
    let p = params.progress_forward_batch(&input).p[0];
    if !p.is_finite() {
        return Err(PolicyError::Numeric("non-finite progress".into()));
    }
    Ok(p)
}

/// Mean squared error of progress predictions against labels.
pub fn progress_loss(params: &PolicyParams, labelled: &[(&Context, f64)]) -> Result<f64, PolicyError> {
    if labelled.is_empty() {
        return Err(PolicyError::Argument("no labelled contexts".into()));
    }
    let mut preds = Vec::with_capacity(labelled.len());
    for (ctx, _) in labelled {
        ctx.validate(&params.config)?;
    }
    let contexts: Vec<&Context> = labelled.iter().map(|(c, _)| *c).collect();
    for chunk in contexts.chunks(256) {
        let input = ProgressInput::from_contexts(&params.config, chunk);
        preds.extend(params.progress_forward_batch(&input).p.iter().copied());
    }
    let labels: Vec<f64> = labelled.iter().map(|(_, l)| *l).collect();
    Ok(progress_mse(&preds, &labels))
}

pub fn progress_mse(predictions: &[f64], labels: &[f64]) -> f64 {
    assert_eq!(predictions.len(), labels.len());
    if predictions.is_empty() {
        return 0.0;
    }
    predictions.iter().zip(labels).map(|(p, l)| (p - l).powi(2)).sum::<f64>() / predictions.len() as f64
}
