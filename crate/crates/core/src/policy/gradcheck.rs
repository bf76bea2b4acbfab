//! Central-difference gradient checking against the analytic backward pass.

use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::model::{BatchItem, GradFault};
use super::nn::{linear, linear_backward};
use super::{PolicyError, PolicyParams};

/// Anything with a flat parameter vector, a scalar loss and its gradient.
pub trait GradCheckable {
    /// `(name, len)` of each parameter group, in flat order.
    fn groups(&self) -> Vec<(String, usize)>;
    fn get(&self, flat: usize) -> f64;
    fn set(&mut self, flat: usize, value: f64);
    fn loss(&self) -> Result<f64, PolicyError>;
    fn gradient(&self) -> Result<Vec<f64>, PolicyError>;
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub checked: usize,
    pub max_rel_error: f64,
    /// Group and index within the group of the worst coordinate.
    pub worst: (String, usize),
}

/// Relative error `|a − n| / max(|a|, |n|, floor)`.
fn rel_error(analytic: f64, numeric: f64, floor: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(floor)
}

/// Compares analytic and central-difference gradients on at least
/// `min_coords` coordinates (or all, if fewer), spread so that every group
/// contributes.
pub fn grad_check<M: GradCheckable>(
    model: &mut M,
    eps: f64,
    min_coords: usize,
    seed: u64,
) -> Result<GradCheckReport, PolicyError> {
    let groups = model.groups();
    let total: usize = groups.iter().map(|g| g.1).sum();
    let analytic = model.gradient()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let per_group = min_coords.div_ceil(groups.len().max(1)).max(1);
    let mut picks: Vec<(usize, usize)> = Vec::new();
    let mut offset = 0;
    let mut leftovers = Vec::new();
    for (g, (_, len)) in groups.iter().enumerate() {
        let mut idx: Vec<usize> = (0..*len).collect();
        idx.shuffle(&mut rng);
        let take = per_group.min(*len);
        picks.extend(idx[..take].iter().map(|i| (g, offset + i)));
        leftovers.extend(idx[take..].iter().map(|i| (g, offset + i)));
        offset += len;
    }
    leftovers.shuffle(&mut rng);
    let short = min_coords.min(total).saturating_sub(picks.len());
    picks.extend(leftovers.into_iter().take(short));

    let mut group_start = Vec::with_capacity(groups.len());
    let mut acc = 0;
    for (_, len) in &groups {
        group_start.push(acc);
        acc += len;
    }
    let mut report = GradCheckReport { checked: 0, max_rel_error: 0.0, worst: (String::new(), 0) };
    for (g, flat) in picks {
        let orig = model.get(flat);
        model.set(flat, orig + eps);
        let up = model.loss()?;
        model.set(flat, orig - eps);
        let down = model.loss()?;
        model.set(flat, orig);
        let numeric = (up - down) / (2.0 * eps);
        let err = rel_error(analytic[flat], numeric, 1e-6);
        report.checked += 1;
        if report.checked == 1 || err > report.max_rel_error {
            report.max_rel_error = err;
            report.worst = (groups[g].0.clone(), flat - group_start[g]);
        }
    }
    Ok(report)
}

/// The full policy loss on a fixed batch, optionally with a corrupted
/// backward pass.
pub struct PolicyGradCheck {
    pub params: PolicyParams,
    pub batch: Vec<BatchItem>,
    pub fault: Option<GradFault>,
    offsets: Vec<usize>,
}

impl PolicyGradCheck {
    pub fn new(params: PolicyParams, batch: Vec<BatchItem>, fault: Option<GradFault>) -> Self {
        let mut offsets = Vec::with_capacity(params.tensors.len());
        let mut acc = 0;
        for t in &params.tensors {
            offsets.push(acc);
            acc += t.len();
        }
        Self { params, batch, fault, offsets }
    }

    fn locate(&self, flat: usize) -> (usize, usize) {
        let t = self.offsets.partition_point(|o| *o <= flat) - 1;
        (t, flat - self.offsets[t])
    }
}

impl GradCheckable for PolicyGradCheck {
    fn groups(&self) -> Vec<(String, usize)> {
        self.params.tensors.iter().map(|t| (t.name.clone(), t.len())).collect()
    }

    fn get(&self, flat: usize) -> f64 {
        let (t, i) = self.locate(flat);
        self.params.tensors[t].data[i]
    }

    fn set(&mut self, flat: usize, value: f64) {
        let (t, i) = self.locate(flat);
        self.params.tensors[t].data[i] = value;
    }

    fn loss(&self) -> Result<f64, PolicyError> {
        Ok(self.params.loss_and_grad(&self.batch, false, None)?.0.total)
    }

    fn gradient(&self) -> Result<Vec<f64>, PolicyError> {
        let (_, grads) = self.params.loss_and_grad(&self.batch, true, self.fault.as_ref())?;
        Ok(grads.expect("gradient requested").concat())
    }
}

/// Single affine layer with a squared-error loss; the smallest network the
/// checker can be pointed at.
#[derive(Debug, Clone)]
pub struct LinearProbe {
    pub weight: Array2<f64>,
    pub bias: ndarray::Array1<f64>,
    pub inputs: Array2<f64>,
    pub targets: Array2<f64>,
}

impl LinearProbe {
    fn n_weight(&self) -> usize {
        self.weight.len()
    }
}

impl GradCheckable for LinearProbe {
    fn groups(&self) -> Vec<(String, usize)> {
        vec![("weight".into(), self.weight.len()), ("bias".into(), self.bias.len())]
    }

    fn get(&self, flat: usize) -> f64 {
        if flat < self.n_weight() {
            self.weight.as_slice().expect("standard layout")[flat]
        } else {
            self.bias[flat - self.n_weight()]
        }
    }

    fn set(&mut self, flat: usize, value: f64) {
        let nw = self.n_weight();
        if flat < nw {
            self.weight.as_slice_mut().expect("standard layout")[flat] = value;
        } else {
            self.bias[flat - nw] = value;
        }
    }

    fn loss(&self) -> Result<f64, PolicyError> {
        let y = linear(self.inputs.view(), self.weight.view(), self.bias.view());
        Ok((&y - &self.targets).mapv(|r| r * r).mean().unwrap_or(0.0))
    }

    fn gradient(&self) -> Result<Vec<f64>, PolicyError> {
        let y = linear(self.inputs.view(), self.weight.view(), self.bias.view());
        let dy = (&y - &self.targets) * (2.0 / y.len() as f64);
        let mut gw = Array2::zeros(self.weight.raw_dim());
        let mut gb = ndarray::Array1::zeros(self.bias.len());
        linear_backward(self.inputs.view(), self.weight.view(), dy.view(), gw.view_mut(), gb.view_mut());
        let mut g = gw.into_raw_vec_and_offset().0;
        g.extend(gb.iter());
        Ok(g)
    }
}
