//! The velocity field and the progress head, with forward caches and
//! analytic gradients for the joint loss.

use ndarray::{s, Array1, Array2, ArrayView2, Axis};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::nn::{self, layer_norm, layer_norm_backward, linear, linear_backward, silu, silu_backward, Tensor};
use super::{Context, FlowSample, PolicyConfig, PolicyError};

/// All learnable weights: velocity-field encoder, flow-timestep embedding,
/// action decoder and the progress head.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyParams {
    pub config: PolicyConfig,
    pub tensors: Vec<Tensor>,
}

/// Names of the tensors that make up the progress head.
pub const PROGRESS_TENSORS: &[&str] = &[
    "prog.q.w",
    "prog.q.b",
    "prog.k.w",
    "prog.k.b",
    "prog.v.w",
    "prog.v.b",
    "prog.o.w",
    "prog.o.b",
    "prog.ln.g",
    "prog.ln.b",
    "prog.mlp1.w",
    "prog.mlp1.b",
    "prog.mlp2.w",
    "prog.mlp2.b",
];

impl PolicyParams {
    pub fn init(config: PolicyConfig, seed: u64) -> Result<Self, PolicyError> {
        config.validate()?;
        let c = &config;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let ha = c.horizon * c.action_dim;
        let e = c.embed_dim;
        let ctx_in = c.feature_dim + c.state_dim;
        let mut t = Vec::new();
        t.push(Tensor::uniform("ctx.enc.w", &[e, ctx_in], ctx_in, &mut rng));
        t.push(Tensor::uniform("ctx.enc.b", &[e], ctx_in, &mut rng));
        let mut emb = Tensor::zeros("ctx.instr", &[c.n_instructions, e]);
        emb.data.iter_mut().for_each(|v| *v = rng.gen_range(-0.1..0.1));
        t.push(emb);
        t.push(Tensor::uniform("time.w", &[e, c.time_features], c.time_features, &mut rng));
        t.push(Tensor::uniform("time.b", &[e], c.time_features, &mut rng));
        let mut fan_in = ha + c.horizon + 2 * e;
        for l in 0..c.hidden_layers {
            t.push(Tensor::uniform(format!("vel.h{l}.w"), &[c.hidden_dim, fan_in], fan_in, &mut rng));
            t.push(Tensor::uniform(format!("vel.h{l}.b"), &[c.hidden_dim], fan_in, &mut rng));
            fan_in = c.hidden_dim;
        }
        t.push(Tensor::uniform("vel.out.w", &[ha, c.hidden_dim], c.hidden_dim, &mut rng));
        t.push(Tensor::zeros("vel.out.b", &[ha]));
        t.push(Tensor::zeros("vel.skip.w", &[1, c.time_features]));
        t.push(Tensor::zeros("vel.skip.b", &[1]));

        let a = c.attn_dim;
        t.push(Tensor::uniform("prog.q.w", &[a, c.state_dim], c.state_dim, &mut rng));
        t.push(Tensor::uniform("prog.q.b", &[a], c.state_dim, &mut rng));
        t.push(Tensor::uniform("prog.k.w", &[a, c.feature_dim], c.feature_dim, &mut rng));
        t.push(Tensor::uniform("prog.k.b", &[a], c.feature_dim, &mut rng));
        t.push(Tensor::uniform("prog.v.w", &[a, c.feature_dim], c.feature_dim, &mut rng));
        t.push(Tensor::uniform("prog.v.b", &[a], c.feature_dim, &mut rng));
        t.push(Tensor::uniform("prog.o.w", &[a, a], a, &mut rng));
        t.push(Tensor::uniform("prog.o.b", &[a], a, &mut rng));
        t.push(Tensor::filled("prog.ln.g", &[a], 1.0));
        t.push(Tensor::zeros("prog.ln.b", &[a]));
        t.push(Tensor::uniform("prog.mlp1.w", &[c.progress_hidden, a], a, &mut rng));
        t.push(Tensor::uniform("prog.mlp1.b", &[c.progress_hidden], a, &mut rng));
        t.push(Tensor::uniform("prog.mlp2.w", &[1, c.progress_hidden], c.progress_hidden, &mut rng));
        t.push(Tensor::zeros("prog.mlp2.b", &[1]));
        Ok(Self { config, tensors: t })
    }

    pub fn index(&self, name: &str) -> usize {
        self.tensors.iter().position(|t| t.name == name).unwrap_or_else(|| panic!("unknown tensor {name}"))
    }

    pub fn get(&self, name: &str) -> &Tensor {
        &self.tensors[self.index(name)]
    }

    pub fn get_mut(&mut self, name: &str) -> &mut Tensor {
        let i = self.index(name);
        &mut self.tensors[i]
    }

    pub fn num_params(&self) -> usize {
        self.tensors.iter().map(Tensor::len).sum()
    }

    pub fn zero_grads(&self) -> Vec<Vec<f64>> {
        self.tensors.iter().map(|t| vec![0.0; t.len()]).collect()
    }

    pub fn is_finite(&self) -> bool {
        self.tensors.iter().all(|t| t.data.iter().all(|v| v.is_finite()))
    }

    /// `name=norm` pairs for numeric-error diagnostics.
    pub fn norm_report(&self) -> String {
        self.tensors.iter().map(|t| format!("{}={:.4e}", t.name, t.norm())).collect::<Vec<_>>().join(", ")
    }

    pub fn set_all(&mut self, value: f64) {
        self.tensors.iter_mut().for_each(|t| t.data.iter_mut().for_each(|v| *v = value));
    }
}

/// Fixed sinusoidal features of the flow timestep.
pub fn time_features(tau: f64, n: usize) -> Vec<f64> {
    let mut f = Vec::with_capacity(n);
    for k in 0..n / 2 {
        let w = std::f64::consts::PI * (k + 1) as f64;
        f.push((w * tau).sin());
        f.push((w * tau).cos());
    }
    f.resize(n, 0.0);
    f
}

/// Batched velocity-field input.
pub struct VelocityInput {
    /// Noisy actions, `(B, H·A)` row-major per sample.
    pub x: Array2<f64>,
    /// Per-position flow timestep, `(B, H)`.
    pub tau_pos: Array2<f64>,
    /// Suffix flow timestep per sample.
    pub tau: Vec<f64>,
    /// `(B, D + S)`: mean-pooled observation features then robot state.
    pub ctx: Array2<f64>,
    pub instr: Vec<usize>,
}

impl VelocityInput {
    pub fn from_contexts(
        config: &PolicyConfig,
        contexts: &[&Context],
        x: Array2<f64>,
        tau_pos: Array2<f64>,
        tau: Vec<f64>,
    ) -> Self {
        let b = contexts.len();
        let mut ctx = Array2::zeros((b, config.feature_dim + config.state_dim));
        for (i, c) in contexts.iter().enumerate() {
            let pooled = c.observation_features.mean_axis(Axis(0)).expect("non-empty observation");
            ctx.slice_mut(s![i, ..config.feature_dim]).assign(&pooled);
            for (k, v) in c.robot_state.iter().enumerate() {
                ctx[[i, config.feature_dim + k]] = *v;
            }
        }
        Self { x, tau_pos, tau, ctx, instr: contexts.iter().map(|c| c.instruction_id).collect() }
    }
}

pub struct VelocityCache {
    ctx_pre: Array2<f64>,
    t_feat: Array2<f64>,
    t_pre: Array2<f64>,
    /// Inputs to each hidden layer and the output layer.
    layer_in: Vec<Array2<f64>>,
    layer_pre: Vec<Array2<f64>>,
}

pub struct ProgressInput<'a> {
    pub features: Vec<ArrayView2<'a, f64>>,
    /// `(B, S)`
    pub state: Array2<f64>,
}

impl<'a> ProgressInput<'a> {
    pub fn from_contexts(config: &PolicyConfig, contexts: &[&'a Context]) -> Self {
        let mut state = Array2::zeros((contexts.len(), config.state_dim));
        for (i, c) in contexts.iter().enumerate() {
            for (k, v) in c.robot_state.iter().enumerate() {
                state[[i, k]] = *v;
            }
        }
        Self { features: contexts.iter().map(|c| c.observation_features.view()).collect(), state }
    }
}

pub struct ProgressCache {
    q: Array2<f64>,
    keys: Vec<Array2<f64>>,
    values: Vec<Array2<f64>>,
    alphas: Vec<Array1<f64>>,
    attended: Array2<f64>,
    ln: nn::LayerNormCache,
    y: Array2<f64>,
    z_pre: Array2<f64>,
    z: Array2<f64>,
    pub p: Array1<f64>,
}

impl PolicyParams {
    pub fn velocity_forward(&self, inp: &VelocityInput) -> (Array2<f64>, VelocityCache) {
        let c = &self.config;
        let b = inp.x.nrows();
        let enc_w = self.get("ctx.enc.w").view2();
        let enc_b = self.get("ctx.enc.b").view1();
        let instr = self.get("ctx.instr").view2();
        let mut ctx_pre = linear(inp.ctx.view(), enc_w, enc_b);
        for (i, id) in inp.instr.iter().enumerate() {
            let mut row = ctx_pre.row_mut(i);
            row += &instr.row(*id);
        }
        let ctx = silu(&ctx_pre);

        let mut t_feat = Array2::zeros((b, c.time_features));
        for (i, tau) in inp.tau.iter().enumerate() {
            for (k, v) in time_features(*tau, c.time_features).into_iter().enumerate() {
                t_feat[[i, k]] = v;
            }
        }
        let t_pre = linear(t_feat.view(), self.get("time.w").view2(), self.get("time.b").view1());
        let t_emb = silu(&t_pre);

        let ha = c.horizon * c.action_dim;
        let e = c.embed_dim;
        let mut h = Array2::zeros((b, ha + c.horizon + 2 * e));
        h.slice_mut(s![.., ..ha]).assign(&inp.x);
        h.slice_mut(s![.., ha..ha + c.horizon]).assign(&inp.tau_pos);
        h.slice_mut(s![.., ha + c.horizon..ha + c.horizon + e]).assign(&ctx);
        h.slice_mut(s![.., ha + c.horizon + e..]).assign(&t_emb);

        let mut layer_in = Vec::with_capacity(c.hidden_layers + 1);
        let mut layer_pre = Vec::with_capacity(c.hidden_layers);
        for l in 0..c.hidden_layers {
            let pre = linear(h.view(), self.get(&format!("vel.h{l}.w")).view2(), self.get(&format!("vel.h{l}.b")).view1());
            let act = silu(&pre);
            layer_in.push(h);
            layer_pre.push(pre);
            h = act;
        }
        let mut out = linear(h.view(), self.get("vel.out.w").view2(), self.get("vel.out.b").view1());
        // Time-gated identity path: the optimal field is roughly
        // (x1 − x_τ)/(1 − τ), which a narrow MLP cannot pass x_τ through.
        let gain = linear(t_feat.view(), self.get("vel.skip.w").view2(), self.get("vel.skip.b").view1());
        for i in 0..b {
            out.row_mut(i).scaled_add(gain[[i, 0]], &inp.x.row(i));
        }
        layer_in.push(h);
        (out, VelocityCache { ctx_pre, t_feat, t_pre, layer_in, layer_pre })
    }

    pub fn velocity_backward(&self, inp: &VelocityInput, cache: &VelocityCache, dout: &Array2<f64>, grads: &mut [Vec<f64>]) {
        let c = &self.config;
        let l_out = cache.layer_in.len() - 1;
        let (iw, ib) = (self.index("vel.out.w"), self.index("vel.out.b"));
        let mut dh = backward_linear(self, grads, iw, ib, cache.layer_in[l_out].view(), dout.view());
        let dgain = Array2::from_shape_fn((dout.nrows(), 1), |(i, _)| dout.row(i).dot(&inp.x.row(i)));
        let (sw, sb) = (self.index("vel.skip.w"), self.index("vel.skip.b"));
        backward_linear(self, grads, sw, sb, cache.t_feat.view(), dgain.view());
        for l in (0..c.hidden_layers).rev() {
            let dpre = silu_backward(&cache.layer_pre[l], &dh);
            let (iw, ib) = (self.index(&format!("vel.h{l}.w")), self.index(&format!("vel.h{l}.b")));
            dh = backward_linear(self, grads, iw, ib, cache.layer_in[l].view(), dpre.view());
        }
        let ha = c.horizon * c.action_dim;
        let e = c.embed_dim;
        let d_ctx = dh.slice(s![.., ha + c.horizon..ha + c.horizon + e]).to_owned();
        let d_temb = dh.slice(s![.., ha + c.horizon + e..]).to_owned();

        let dt_pre = silu_backward(&cache.t_pre, &d_temb);
        let (iw, ib) = (self.index("time.w"), self.index("time.b"));
        backward_linear(self, grads, iw, ib, cache.t_feat.view(), dt_pre.view());

        let dctx_pre = silu_backward(&cache.ctx_pre, &d_ctx);
        let (iw, ib) = (self.index("ctx.enc.w"), self.index("ctx.enc.b"));
        backward_linear(self, grads, iw, ib, inp.ctx.view(), dctx_pre.view());
        let ie = self.index("ctx.instr");
        for (i, id) in inp.instr.iter().enumerate() {
            let row = &mut grads[ie][id * e..(id + 1) * e];
            row.iter_mut().zip(dctx_pre.row(i)).for_each(|(g, d)| *g += d);
        }
    }

    pub fn progress_forward_batch(&self, inp: &ProgressInput) -> ProgressCache {
        let c = &self.config;
        let scale = 1.0 / (c.attn_dim as f64).sqrt();
        let q = linear(inp.state.view(), self.get("prog.q.w").view2(), self.get("prog.q.b").view1());
        let (kw, kb) = (self.get("prog.k.w").view2(), self.get("prog.k.b").view1());
        let (vw, vb) = (self.get("prog.v.w").view2(), self.get("prog.v.b").view1());
        let b = q.nrows();
        let mut keys = Vec::with_capacity(b);
        let mut values = Vec::with_capacity(b);
        let mut alphas = Vec::with_capacity(b);
        let mut attended = Array2::zeros((b, c.attn_dim));
        for i in 0..b {
            let f = inp.features[i];
            let k = linear(f, kw, kb);
            let v = linear(f, vw, vb);
            let mut score: Vec<f64> = k.dot(&q.row(i)).iter().map(|s| s * scale).collect();
            nn::softmax_inplace(&mut score);
            let alpha = Array1::from(score);
            attended.row_mut(i).assign(&alpha.dot(&v));
            keys.push(k);
            values.push(v);
            alphas.push(alpha);
        }
        let a = linear(attended.view(), self.get("prog.o.w").view2(), self.get("prog.o.b").view1());
        let h = &q + &a;
        let (y, ln) = layer_norm(&h, self.get("prog.ln.g").view1(), self.get("prog.ln.b").view1(), c.layer_norm_eps);
        let z_pre = linear(y.view(), self.get("prog.mlp1.w").view2(), self.get("prog.mlp1.b").view1());
        let z = silu(&z_pre);
        let logit = linear(z.view(), self.get("prog.mlp2.w").view2(), self.get("prog.mlp2.b").view1());
        let p = logit.column(0).mapv(nn::sigmoid);
        ProgressCache { q, keys, values, alphas, attended, ln, y, z_pre, z, p }
    }

    pub fn progress_backward(&self, inp: &ProgressInput, cache: &ProgressCache, dp: &Array1<f64>, grads: &mut [Vec<f64>]) {
        let c = &self.config;
        let scale = 1.0 / (c.attn_dim as f64).sqrt();
        let b = dp.len();
        let mut dlogit = Array2::zeros((b, 1));
        for i in 0..b {
            dlogit[[i, 0]] = dp[i] * cache.p[i] * (1.0 - cache.p[i]);
        }
        let (iw, ib) = (self.index("prog.mlp2.w"), self.index("prog.mlp2.b"));
        let dz = backward_linear(self, grads, iw, ib, cache.z.view(), dlogit.view());
        let dz_pre = silu_backward(&cache.z_pre, &dz);
        let (iw, ib) = (self.index("prog.mlp1.w"), self.index("prog.mlp1.b"));
        let dy = backward_linear(self, grads, iw, ib, cache.y.view(), dz_pre.view());

        let (ig, ibeta) = (self.index("prog.ln.g"), self.index("prog.ln.b"));
        let gamma = self.tensors[ig].view1();
        let (left, right) = grads.split_at_mut(ibeta);
        let dh = layer_norm_backward(
            &cache.ln,
            gamma,
            &dy,
            ndarray::ArrayViewMut1::from(&mut left[ig][..]),
            ndarray::ArrayViewMut1::from(&mut right[0][..]),
        );

        let mut dq = dh.clone();
        let (iw, ib) = (self.index("prog.o.w"), self.index("prog.o.b"));
        let d_att = backward_linear(self, grads, iw, ib, cache.attended.view(), dh.view());

        let (ikw, ikb) = (self.index("prog.k.w"), self.index("prog.k.b"));
        let (ivw, ivb) = (self.index("prog.v.w"), self.index("prog.v.b"));
        for i in 0..b {
            let alpha = &cache.alphas[i];
            let keys = &cache.keys[i];
            let values = &cache.values[i];
            let d_o = d_att.row(i);
            let d_alpha = values.dot(&d_o);
            let dot = alpha.dot(&d_alpha);
            let d_score = alpha * &(d_alpha - dot);
            // dq += Σ_t dscore_t K_t * scale ; dK_t = dscore_t q * scale ; dV_t = α_t dO
            let mut dq_row = dq.row_mut(i);
            dq_row.scaled_add(scale, &d_score.dot(keys));
            let q_row = cache.q.row(i);
            let dk = Array2::from_shape_fn(keys.raw_dim(), |(t, k)| d_score[t] * q_row[k] * scale);
            let dv = Array2::from_shape_fn(values.raw_dim(), |(t, k)| alpha[t] * d_o[k]);
            backward_linear(self, grads, ikw, ikb, inp.features[i], dk.view());
            backward_linear(self, grads, ivw, ivb, inp.features[i], dv.view());
        }
        let (iw, ib) = (self.index("prog.q.w"), self.index("prog.q.b"));
        backward_linear(self, grads, iw, ib, inp.state.view(), dq.view());
    }
}

fn backward_linear(
    params: &PolicyParams,
    grads: &mut [Vec<f64>],
    iw: usize,
    ib: usize,
    x: ArrayView2<f64>,
    dy: ArrayView2<f64>,
) -> Array2<f64> {
    debug_assert!(iw < ib);
    let w = &params.tensors[iw];
    let (left, right) = grads.split_at_mut(ib);
    let gw = nn::view2_mut(&mut left[iw], &w.shape);
    let gb = ndarray::ArrayViewMut1::from(&mut right[0][..]);
    linear_backward(x, w.view2(), dy, gw, gb)
}

/// One element of a training batch.
#[derive(Debug, Clone)]
pub struct BatchItem {
    pub context: Context,
    pub flow: FlowSample,
    pub progress_label: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossBreakdown {
    pub flow: f64,
    /// `None` when no item in the batch carries a progress label.
    pub progress_mse: Option<f64>,
    pub total: f64,
}

/// Sign-flips the gradient of one tensor; used to check that the gradient
/// checker catches a broken backward pass.
#[derive(Debug, Clone)]
pub struct GradFault {
    pub tensor: String,
}

fn flow_parts(config: &PolicyConfig, batch: &[BatchItem]) -> (Array2<f64>, Array2<f64>, Array2<f64>, Array2<f64>, usize) {
    let (h, a) = (config.horizon, config.action_dim);
    let b = batch.len();
    let mut x = Array2::zeros((b, h * a));
    let mut tau_pos = Array2::zeros((b, h));
    let mut target = Array2::zeros((b, h * a));
    let mut mask = Array2::zeros((b, h * a));
    let mut count = 0;
    for (i, item) in batch.iter().enumerate() {
        let f = &item.flow;
        let xt = f.x_tau();
        for r in 0..h {
            let prefix = r < f.prefix_len;
            tau_pos[[i, r]] = if prefix { 1.0 } else { f.tau };
            for k in 0..a {
                x[[i, r * a + k]] = xt[[r, k]];
                if !prefix {
                    target[[i, r * a + k]] = f.x1[[r, k]] - f.x0[[r, k]];
                    mask[[i, r * a + k]] = 1.0;
                    count += 1;
                }
            }
        }
    }
    (x, tau_pos, target, mask, count)
}

impl PolicyParams {
    fn check_batch(&self, batch: &[BatchItem]) -> Result<(), PolicyError> {
        if batch.is_empty() {
            return Err(PolicyError::Argument("batch is empty".into()));
        }
        for item in batch {
            item.context.validate(&self.config)?;
            item.flow.validate(&self.config)?;
            if let Some(p) = item.progress_label {
                if !(0.0..=1.0).contains(&p) {
                    return Err(PolicyError::Argument(format!("progress label {p} outside [0, 1]")));
                }
            }
        }
        Ok(())
    }

    /// Joint loss `flow + w · progress_mse` and, when `want_grad`, its gradient.
    pub fn loss_and_grad(
        &self,
        batch: &[BatchItem],
        want_grad: bool,
        fault: Option<&GradFault>,
    ) -> Result<(LossBreakdown, Option<Vec<Vec<f64>>>), PolicyError> {
        self.check_batch(batch)?;
        let cfg = &self.config;
        let contexts: Vec<&Context> = batch.iter().map(|b| &b.context).collect();
        let (x, tau_pos, target, mask, count) = flow_parts(cfg, batch);
        let tau = batch.iter().map(|b| b.flow.tau).collect();
        let vin = VelocityInput::from_contexts(cfg, &contexts, x, tau_pos, tau);
        let (v, vcache) = self.velocity_forward(&vin);
        let resid = (&v - &target) * &mask;
        let flow = if count == 0 { 0.0 } else { resid.iter().map(|r| r * r).sum::<f64>() / count as f64 };

        let labeled: Vec<usize> = batch.iter().enumerate().filter(|(_, b)| b.progress_label.is_some()).map(|(i, _)| i).collect();
        let mut progress_mse = None;
        let mut pcache = None;
        let lab_contexts: Vec<&Context> = labeled.iter().map(|i| &batch[*i].context).collect();
        let pin = ProgressInput::from_contexts(cfg, &lab_contexts);
        if !labeled.is_empty() {
            let cache = self.progress_forward_batch(&pin);
            let mse =
                labeled.iter().zip(cache.p.iter()).map(|(i, p)| (p - batch[*i].progress_label.unwrap()).powi(2)).sum::<f64>()
                    / labeled.len() as f64;
            progress_mse = Some(mse);
            pcache = Some(cache);
        }
        let total = flow + cfg.progress_weight * progress_mse.unwrap_or(0.0);
        if !total.is_finite() {
            return Err(PolicyError::Numeric(format!("non-finite loss {total}; parameter norms: {}", self.norm_report())));
        }
        let losses = LossBreakdown { flow, progress_mse, total };
        if !want_grad {
            return Ok((losses, None));
        }

        let mut grads = self.zero_grads();
        if count > 0 {
            let dv = resid * (2.0 / count as f64);
            self.velocity_backward(&vin, &vcache, &dv, &mut grads);
        }
        if let Some(cache) = &pcache {
            let n = labeled.len() as f64;
            let dp = Array1::from_iter(
                labeled
                    .iter()
                    .zip(cache.p.iter())
                    .map(|(i, p)| cfg.progress_weight * 2.0 * (p - batch[*i].progress_label.unwrap()) / n),
            );
            self.progress_backward(&pin, cache, &dp, &mut grads);
        }
        if let Some(f) = fault {
            let i = self.index(&f.tensor);
            grads[i].iter_mut().for_each(|g| *g = -*g);
        }
        Ok((losses, Some(grads)))
    }
}
