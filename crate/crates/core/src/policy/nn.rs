//! Differentiable building blocks with explicit forward caches and
//! hand-written backward passes, all in f64.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, ArrayViewMut1, ArrayViewMut2, Axis};
use rand::Rng;
use serde::{Deserialize, Serialize};

/// A named, flat parameter array with its logical shape.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tensor {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

impl Tensor {
    pub fn zeros(name: impl Into<String>, shape: &[usize]) -> Self {
        Self { name: name.into(), shape: shape.to_vec(), data: vec![0.0; shape.iter().product()] }
    }

    pub fn filled(name: impl Into<String>, shape: &[usize], v: f64) -> Self {
        Self { name: name.into(), shape: shape.to_vec(), data: vec![v; shape.iter().product()] }
    }

    /// Uniform in `±1/sqrt(fan_in)`.
    pub fn uniform<R: Rng>(name: impl Into<String>, shape: &[usize], fan_in: usize, rng: &mut R) -> Self {
        let bound = 1.0 / (fan_in.max(1) as f64).sqrt();
        let n = shape.iter().product();
        Self { name: name.into(), shape: shape.to_vec(), data: (0..n).map(|_| rng.gen_range(-bound..bound)).collect() }
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn view2(&self) -> ArrayView2<'_, f64> {
        ArrayView2::from_shape((self.shape[0], self.shape[1]), &self.data).expect("rank-2 tensor")
    }

    pub fn view1(&self) -> ArrayView1<'_, f64> {
        ArrayView1::from(&self.data[..])
    }

    pub fn norm(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }
}

pub fn view2_mut<'a>(data: &'a mut [f64], shape: &[usize]) -> ArrayViewMut2<'a, f64> {
    ArrayViewMut2::from_shape((shape[0], shape[1]), data).expect("rank-2 tensor")
}

/// `y = x Wᵀ + b` for a batch `x` of shape `(B, in)` and `W` of shape `(out, in)`.
pub fn linear(x: ArrayView2<f64>, w: ArrayView2<f64>, b: ArrayView1<f64>) -> Array2<f64> {
    let mut y = x.dot(&w.t());
    y += &b;
    y
}

/// Accumulates `dW += dyᵀ x`, `db += Σ dy` and returns `dx = dy W`.
pub fn linear_backward(
    x: ArrayView2<f64>,
    w: ArrayView2<f64>,
    dy: ArrayView2<f64>,
    mut gw: ArrayViewMut2<f64>,
    mut gb: ArrayViewMut1<f64>,
) -> Array2<f64> {
    gw += &dy.t().dot(&x);
    gb += &dy.sum_axis(Axis(0));
    dy.dot(&w)
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub fn silu(pre: &Array2<f64>) -> Array2<f64> {
    pre.mapv(|x| x * sigmoid(x))
}

pub fn silu_backward(pre: &Array2<f64>, dy: &Array2<f64>) -> Array2<f64> {
    let mut dx = dy.clone();
    dx.zip_mut_with(pre, |d, &x| {
        let s = sigmoid(x);
        *d *= s * (1.0 + x * (1.0 - s));
    });
    dx
}

/// Row-wise layer normalization cache.
pub struct LayerNormCache {
    pub xhat: Array2<f64>,
    pub inv_std: Array1<f64>,
}

pub fn layer_norm(h: &Array2<f64>, gamma: ArrayView1<f64>, beta: ArrayView1<f64>, eps: f64) -> (Array2<f64>, LayerNormCache) {
    let n = h.ncols() as f64;
    let mut xhat = h.clone();
    let mut inv_std = Array1::zeros(h.nrows());
    for (mut row, is) in xhat.rows_mut().into_iter().zip(inv_std.iter_mut()) {
        let mean = row.sum() / n;
        row -= mean;
        let var = row.iter().map(|v| v * v).sum::<f64>() / n;
        *is = 1.0 / (var + eps).sqrt();
        row *= *is;
    }
    let mut y = xhat.clone();
    y *= &gamma;
    y += &beta;
    (y, LayerNormCache { xhat, inv_std })
}

pub fn layer_norm_backward(
    cache: &LayerNormCache,
    gamma: ArrayView1<f64>,
    dy: &Array2<f64>,
    mut ggamma: ArrayViewMut1<f64>,
    mut gbeta: ArrayViewMut1<f64>,
) -> Array2<f64> {
    ggamma += &(dy * &cache.xhat).sum_axis(Axis(0));
    gbeta += &dy.sum_axis(Axis(0));
    let n = dy.ncols() as f64;
    let mut dh = Array2::zeros(dy.raw_dim());
    for r in 0..dy.nrows() {
        let dxhat = &dy.row(r) * &gamma;
        let xh = cache.xhat.row(r);
        let mean_d = dxhat.sum() / n;
        let mean_dx = (&dxhat * &xh).sum() / n;
        let mut out = dh.row_mut(r);
        for k in 0..dxhat.len() {
            out[k] = cache.inv_std[r] * (dxhat[k] - mean_d - xh[k] * mean_dx);
        }
    }
    dh
}

/// In-place softmax of a slice.
pub fn softmax_inplace(v: &mut [f64]) {
    let max = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for x in v.iter_mut() {
        *x = (*x - max).exp();
        sum += *x;
    }
    v.iter_mut().for_each(|x| *x /= sum);
}

/// Adam with bias correction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Adam {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub step: u64,
    pub m: Vec<Vec<f64>>,
    pub v: Vec<Vec<f64>>,
}

impl Adam {
    pub fn new(sizes: impl IntoIterator<Item = usize>) -> Self {
        let sizes: Vec<usize> = sizes.into_iter().collect();
        Self {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            step: 0,
            m: sizes.iter().map(|n| vec![0.0; *n]).collect(),
            v: sizes.iter().map(|n| vec![0.0; *n]).collect(),
        }
    }

    pub fn update(&mut self, params: &mut [Tensor], grads: &[Vec<f64>], lr: f64) {
        self.step += 1;
        let t = self.step as i32;
        let c1 = 1.0 - self.beta1.powi(t);
        let c2 = 1.0 - self.beta2.powi(t);
        for ((p, g), (m, v)) in params.iter_mut().zip(grads).zip(self.m.iter_mut().zip(self.v.iter_mut())) {
            for i in 0..p.data.len() {
                m[i] = self.beta1 * m[i] + (1.0 - self.beta1) * g[i];
                v[i] = self.beta2 * v[i] + (1.0 - self.beta2) * g[i] * g[i];
                p.data[i] -= lr * (m[i] / c1) / ((v[i] / c2).sqrt() + self.eps);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn linear_matches_manual() {
        let x = array![[1.0, 2.0], [3.0, -1.0]];
        let w = array![[0.5, -1.0], [2.0, 0.0], [1.0, 1.0]];
        let b = array![0.1, 0.2, 0.3];
        let y = linear(x.view(), w.view(), b.view());
        assert_eq!(y, array![[-1.4, 2.2, 3.3], [2.6, 6.2, 2.3]]);
    }

    #[test]
    fn layer_norm_zero_input_is_zero() {
        let h = Array2::zeros((2, 4));
        let g = Array1::ones(4);
        let b = Array1::zeros(4);
        let (y, _) = layer_norm(&h, g.view(), b.view(), 1e-5);
        assert!(y.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn softmax_sums_to_one() {
        let mut v = [1000.0, 1001.0, 999.0];
        softmax_inplace(&mut v);
        assert!((v.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!(v[1] > v[0] && v[0] > v[2]);
    }

    #[test]
    fn sigmoid_is_stable_at_extremes() {
        assert_eq!(sigmoid(-1000.0), 0.0);
        assert_eq!(sigmoid(1000.0), 1.0);
        assert_eq!(sigmoid(0.0), 0.5);
    }

    #[test]
    fn adam_moves_against_gradient() {
        let mut p = vec![Tensor::filled("w", &[2], 1.0)];
        let mut opt = Adam::new([2]);
        opt.update(&mut p, &[vec![1.0, -1.0]], 0.1);
        assert!((p[0].data[0] - 0.9).abs() < 1e-6);
        assert!((p[0].data[1] - 1.1).abs() < 1e-6);
    }
}
