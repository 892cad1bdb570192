//! Affine layer `y = xW + b` with row-major `W` of shape `in_dim x out_dim`.

use crate::rng::SeededRng;
use crate::{Error, Result, Scalar};

#[derive(Debug, Clone, PartialEq)]
pub struct DenseLayer<T> {
    in_dim: usize,
    out_dim: usize,
    weights: Vec<T>,
    bias: Vec<T>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerGrad<T> {
    pub d_weights: Vec<T>,
    pub d_bias: Vec<T>,
}

impl<T: Scalar> DenseLayer<T> {
    pub fn zeros(in_dim: usize, out_dim: usize) -> Self {
        Self {
            in_dim,
            out_dim,
            weights: vec![T::zero(); in_dim * out_dim],
            bias: vec![T::zero(); out_dim],
        }
    }

    pub fn from_parts(in_dim: usize, out_dim: usize, weights: Vec<T>, bias: Vec<T>) -> Result<Self> {
        if weights.len() != in_dim * out_dim {
            return Err(Error::shape("dense weights", in_dim * out_dim, weights.len()));
        }
        if bias.len() != out_dim {
            return Err(Error::shape("dense bias", out_dim, bias.len()));
        }
        if weights.iter().chain(&bias).any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("dense layer parameters".into()));
        }
        Ok(Self {
            in_dim,
            out_dim,
            weights,
            bias,
        })
    }

    /// Glorot-uniform weights in `[-a, a]`, `a = sqrt(6 / (in + out))`, zero bias.
    pub fn glorot(in_dim: usize, out_dim: usize, rng: &mut SeededRng) -> Self {
        let a = (6.0 / (in_dim + out_dim) as f64).sqrt();
        let weights = (0..in_dim * out_dim).map(|_| rng.uniform_symmetric(a)).collect();
        Self {
            in_dim,
            out_dim,
            weights,
            bias: vec![T::zero(); out_dim],
        }
    }

    pub fn in_dim(&self) -> usize {
        self.in_dim
    }

    pub fn out_dim(&self) -> usize {
        self.out_dim
    }

    pub fn weights(&self) -> &[T] {
        &self.weights
    }

    pub fn bias(&self) -> &[T] {
        &self.bias
    }

    pub fn weights_mut(&mut self) -> &mut [T] {
        &mut self.weights
    }

    pub fn bias_mut(&mut self) -> &mut [T] {
        &mut self.bias
    }

    pub fn param_count(&self) -> usize {
        self.weights.len() + self.bias.len()
    }

    pub fn zero_grad(&self) -> LayerGrad<T> {
        LayerGrad {
            d_weights: vec![T::zero(); self.weights.len()],
            d_bias: vec![T::zero(); self.bias.len()],
        }
    }

    pub fn forward(&self, x: &[T]) -> Result<Vec<T>> {
        if x.len() != self.in_dim {
            return Err(Error::shape("dense_forward input", self.in_dim, x.len()));
        }
        let mut out = vec![T::zero(); self.out_dim];
        self.forward_into(x, &mut out);
        Ok(out)
    }

    /// Unchecked hot path; lengths are debug-asserted.
    pub fn forward_into(&self, x: &[T], out: &mut [T]) {
        debug_assert_eq!(x.len(), self.in_dim);
        debug_assert_eq!(out.len(), self.out_dim);
        out.copy_from_slice(&self.bias);
        for (xi, row) in x.iter().zip(self.weights.chunks_exact(self.out_dim)) {
            if *xi == T::zero() {
                continue;
            }
            for (o, w) in out.iter_mut().zip(row) {
                *o += *xi * *w;
            }
        }
    }

    /// Adds `x ⊗ upstream` and `upstream` into `grad`; writes `upstream · Wᵀ`
    /// into `downstream` when given.
    pub fn accumulate_backward(
        &self,
        x: &[T],
        upstream: &[T],
        grad: &mut LayerGrad<T>,
        downstream: Option<&mut [T]>,
    ) {
        debug_assert_eq!(x.len(), self.in_dim);
        debug_assert_eq!(upstream.len(), self.out_dim);
        for (db, u) in grad.d_bias.iter_mut().zip(upstream) {
            *db += *u;
        }
        for (xi, grow) in x.iter().zip(grad.d_weights.chunks_exact_mut(self.out_dim)) {
            if *xi == T::zero() {
                continue;
            }
            for (g, u) in grow.iter_mut().zip(upstream) {
                *g += *xi * *u;
            }
        }
        if let Some(down) = downstream {
            self.input_grad_into(upstream, down);
        }
    }

    /// `upstream · Wᵀ` only, for layers whose own gradient is not wanted.
    pub fn input_grad_into(&self, upstream: &[T], downstream: &mut [T]) {
        debug_assert_eq!(upstream.len(), self.out_dim);
        debug_assert_eq!(downstream.len(), self.in_dim);
        for (d, row) in downstream.iter_mut().zip(self.weights.chunks_exact(self.out_dim)) {
            *d = row.iter().zip(upstream).map(|(w, u)| *w * *u).sum();
        }
    }

    pub fn backward(&self, x: &[T], upstream: &[T]) -> Result<(LayerGrad<T>, Vec<T>)> {
        if x.len() != self.in_dim {
            return Err(Error::shape("dense_backward input", self.in_dim, x.len()));
        }
        if upstream.len() != self.out_dim {
            return Err(Error::shape("dense_backward upstream", self.out_dim, upstream.len()));
        }
        let mut grad = self.zero_grad();
        let mut down = vec![T::zero(); self.in_dim];
        self.accumulate_backward(x, upstream, &mut grad, Some(&mut down));
        Ok((grad, down))
    }

    fn check_grad(&self, grad: &LayerGrad<T>) -> Result<()> {
        if grad.d_weights.len() != self.weights.len() {
            return Err(Error::shape("sgd weights", self.weights.len(), grad.d_weights.len()));
        }
        if grad.d_bias.len() != self.bias.len() {
            return Err(Error::shape("sgd bias", self.bias.len(), grad.d_bias.len()));
        }
        Ok(())
    }

    /// `params -= lr * grad`.
    pub fn sgd_step(&mut self, grad: &LayerGrad<T>, lr: T) -> Result<()> {
        self.check_grad(grad)?;
        if lr < T::zero() {
            return Err(Error::Config("learning rate must be non-negative".into()));
        }
        for (p, g) in self.weights.iter_mut().zip(&grad.d_weights) {
            *p -= lr * *g;
        }
        for (p, g) in self.bias.iter_mut().zip(&grad.d_bias) {
            *p -= lr * *g;
        }
        Ok(())
    }

    /// Weights row-major, then bias.
    pub fn params(&self) -> impl Iterator<Item = &T> {
        self.weights.iter().chain(&self.bias)
    }

    pub fn params_mut(&mut self) -> impl Iterator<Item = &mut T> {
        self.weights.iter_mut().chain(self.bias.iter_mut())
    }
}

impl<T: Scalar> LayerGrad<T> {
    pub fn scale(&mut self, s: T) {
        for g in self.d_weights.iter_mut().chain(self.d_bias.iter_mut()) {
            *g *= s;
        }
    }

    pub fn add_assign(&mut self, other: &LayerGrad<T>) {
        for (a, b) in self.d_weights.iter_mut().zip(&other.d_weights) {
            *a += *b;
        }
        for (a, b) in self.d_bias.iter_mut().zip(&other.d_bias) {
            *a += *b;
        }
    }

    pub fn values(&self) -> impl Iterator<Item = &T> {
        self.d_weights.iter().chain(&self.d_bias)
    }

    pub fn is_zero(&self) -> bool {
        self.values().all(|g| *g == T::zero())
    }
}

/// Velocity buffer for SGD with momentum and L2 weight decay:
/// `v = momentum * v + (g + decay * p)`, `p -= lr * v`.
#[derive(Debug, Clone)]
pub struct SgdMomentum<T> {
    velocity: Vec<T>,
}

impl<T: Scalar> SgdMomentum<T> {
    pub fn for_layer(layer: &DenseLayer<T>) -> Self {
        Self {
            velocity: vec![T::zero(); layer.param_count()],
        }
    }

    pub fn step(
        &mut self,
        layer: &mut DenseLayer<T>,
        grad: &LayerGrad<T>,
        lr: T,
        momentum: T,
        weight_decay: T,
    ) -> Result<()> {
        layer.check_grad(grad)?;
        if momentum == T::zero() && weight_decay == T::zero() {
            return layer.sgd_step(grad, lr);
        }
        for ((p, g), v) in layer.params_mut().zip(grad.values()).zip(self.velocity.iter_mut()) {
            *v = momentum * *v + *g + weight_decay * *p;
            *p -= lr * *v;
        }
        Ok(())
    }
}

pub fn dense_forward<T: Scalar>(x: &[T], layer: &DenseLayer<T>) -> Result<Vec<T>> {
    layer.forward(x)
}

pub fn dense_backward<T: Scalar>(
    x: &[T],
    layer: &DenseLayer<T>,
    upstream: &[T],
) -> Result<(LayerGrad<T>, Vec<T>)> {
    layer.backward(x, upstream)
}

pub fn sgd_step<T: Scalar>(mut layer: DenseLayer<T>, grad: &LayerGrad<T>, lr: T) -> Result<DenseLayer<T>> {
    layer.sgd_step(grad, lr)?;
    Ok(layer)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{bce_loss, central_difference, sigmoid};

    fn layer(in_dim: usize, out_dim: usize, w: &[f64], b: &[f64]) -> DenseLayer<f64> {
        DenseLayer::from_parts(in_dim, out_dim, w.to_vec(), b.to_vec()).unwrap()
    }

    #[test]
    fn forward_examples() {
        let id = layer(2, 2, &[1.0, 0.0, 0.0, 1.0], &[0.0, 0.0]);
        assert_eq!(dense_forward(&[1.0, 2.0], &id).unwrap(), vec![1.0, 2.0]);

        let z = layer(3, 2, &[0.0; 6], &[3.0, -1.0]);
        assert_eq!(dense_forward(&[7.0, -2.0, 0.5], &z).unwrap(), vec![3.0, -1.0]);

        // [1,1] · [[1,2],[3,4]] = [4, 6]
        let m = layer(2, 2, &[1.0, 2.0, 3.0, 4.0], &[0.5, 0.5]);
        assert_eq!(dense_forward(&[1.0, 1.0], &m).unwrap(), vec![4.5, 6.5]);
    }

    #[test]
    fn forward_shape_error_names_dims() {
        let m = DenseLayer::<f64>::zeros(3, 2);
        match dense_forward(&[1.0], &m) {
            Err(Error::Shape { expected, actual, .. }) => assert_eq!((expected, actual), (3, 1)),
            other => panic!("{other:?}"),
        }
        assert!(DenseLayer::<f64>::from_parts(2, 2, vec![0.0; 3], vec![0.0; 2]).is_err());
        assert!(DenseLayer::<f64>::from_parts(1, 1, vec![f64::NAN], vec![0.0]).is_err());
    }

    #[test]
    fn backward_examples() {
        let m = layer(2, 3, &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0], &[0.0; 3]);
        let (g, down) = dense_backward(&[1.0, -1.0], &m, &[0.0; 3]).unwrap();
        assert!(g.is_zero());
        assert_eq!(down, vec![0.0, 0.0]);

        let s = layer(1, 1, &[2.0], &[0.0]);
        let (g, down) = dense_backward(&[1.0], &s, &[3.0]).unwrap();
        assert_eq!(g.d_weights, vec![3.0]);
        assert_eq!(g.d_bias, vec![3.0]);
        assert_eq!(down, vec![6.0]);

        assert!(dense_backward(&[1.0], &s, &[1.0, 2.0]).is_err());
    }

    #[test]
    fn backward_matches_central_differences() {
        // loss = bce(sigmoid(xW + b), y); independent numeric derivative per parameter.
        let mut rng = SeededRng::new(0);
        let m: DenseLayer<f64> = DenseLayer::glorot(4, 3, &mut rng);
        let x = [0.3, -1.2, 0.8, 0.05];
        let y = [1.0, 0.0, 1.0];
        let loss_of = |l: &DenseLayer<f64>| bce_loss(&sigmoid(&l.forward(&x).unwrap()), &y).unwrap();
        let p = sigmoid(&m.forward(&x).unwrap());
        let upstream: Vec<f64> = p.iter().zip(&y).map(|(p, y)| p - y).collect();
        let (g, down) = m.backward(&x, &upstream).unwrap();

        let analytic: Vec<f64> = g.values().copied().collect();
        for (i, a) in analytic.iter().enumerate() {
            let n = central_difference(1e-4, |eps| {
                let mut l = m.clone();
                *l.params_mut().nth(i).unwrap() += eps;
                loss_of(&l)
            });
            assert!((a - n).abs() / a.abs().max(n.abs()).max(1e-8) < 1e-4, "param {i}: {a} vs {n}");
        }
        for (i, d) in down.iter().enumerate() {
            let n = central_difference(1e-4, |eps| {
                let mut xp = x;
                xp[i] += eps;
                bce_loss(&sigmoid(&m.forward(&xp).unwrap()), &y).unwrap()
            });
            assert!((d - n).abs() < 1e-7, "input {i}");
        }
    }

    #[test]
    fn sgd_examples() {
        let m = layer(2, 1, &[1.0, -2.0], &[0.25]);
        let zero = m.zero_grad();
        assert_eq!(sgd_step(m.clone(), &zero, 0.1).unwrap(), m);

        let one = layer(1, 1, &[1.0], &[0.0]);
        let g = LayerGrad {
            d_weights: vec![2.0],
            d_bias: vec![0.0],
        };
        let stepped = sgd_step(one, &g, 0.5).unwrap();
        assert_eq!(stepped.weights(), &[0.0]);
    }

    #[test]
    fn sgd_two_steps_equal_one_summed_step() {
        let mut rng = SeededRng::new(1);
        let m: DenseLayer<f64> = DenseLayer::glorot(3, 2, &mut rng);
        let mk = |r: &mut SeededRng| LayerGrad {
            d_weights: (0..6).map(|_| r.uniform_symmetric(1.0)).collect(),
            d_bias: (0..2).map(|_| r.uniform_symmetric(1.0)).collect(),
        };
        let g1 = mk(&mut rng);
        let g2 = mk(&mut rng);
        let two = sgd_step(sgd_step(m.clone(), &g1, 0.1).unwrap(), &g2, 0.1).unwrap();
        let mut sum = g1.clone();
        sum.add_assign(&g2);
        let one = sgd_step(m, &sum, 0.1).unwrap();
        for (a, b) in two.params().zip(one.params()) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn sgd_zero_lr_is_identity_and_shapes_are_checked() {
        let mut rng = SeededRng::new(2);
        let m: DenseLayer<f64> = DenseLayer::glorot(3, 2, &mut rng);
        let mut g = m.zero_grad();
        g.d_weights.iter_mut().for_each(|v| *v = 5.0);
        assert_eq!(sgd_step(m.clone(), &g, 0.0).unwrap(), m);
        let bad = DenseLayer::<f64>::zeros(2, 2).zero_grad();
        assert!(sgd_step(m, &bad, 0.1).is_err());
    }

    #[test]
    fn momentum_without_momentum_is_plain_sgd() {
        let mut rng = SeededRng::new(4);
        let m: DenseLayer<f64> = DenseLayer::glorot(2, 2, &mut rng);
        let mut g = m.zero_grad();
        g.d_bias = vec![1.0, -1.0];
        let mut a = m.clone();
        SgdMomentum::for_layer(&a).step(&mut a, &g, 0.1, 0.0, 0.0).unwrap();
        assert_eq!(a, sgd_step(m.clone(), &g, 0.1).unwrap());

        let mut b = m.clone();
        let mut state = SgdMomentum::for_layer(&b);
        state.step(&mut b, &g, 0.1, 0.9, 0.0).unwrap();
        state.step(&mut b, &g, 0.1, 0.9, 0.0).unwrap();
        // v1 = g, v2 = 1.9 g
        assert!((b.bias()[0] - (m.bias()[0] - 0.1 * 2.9)).abs() < 1e-15);
    }

    #[test]
    fn glorot_bounds() {
        let mut rng = SeededRng::new(9);
        let m: DenseLayer<f64> = DenseLayer::glorot(10, 14, &mut rng);
        let a = (6.0f64 / 24.0).sqrt();
        assert!(m.weights().iter().all(|w| w.abs() <= a));
        assert!(m.bias().iter().all(|b| *b == 0.0));
    }
}
