//! Reverse pass for the fused network.

use crate::nn::{bce_logit_grad, bce_term, DenseLayer, LayerGrad};
use crate::{Error, Result, Scalar};

use super::{merge_sum, FeatureMask, FeatureSet, Group, HybridNet};

#[derive(Debug, Clone, PartialEq)]
pub struct BranchGrad<T> {
    pub layer1: LayerGrad<T>,
    pub layer2: LayerGrad<T>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrunkGrad<T> {
    pub layer3: LayerGrad<T>,
    pub layer4: LayerGrad<T>,
    pub out: LayerGrad<T>,
}

/// Gradients for every group. Frozen or inactive groups hold exact zeros.
#[derive(Debug, Clone, PartialEq)]
pub struct NetGrad<T> {
    pub branches: Vec<BranchGrad<T>>,
    pub trunk: TrunkGrad<T>,
}

impl<T: Scalar> BranchGrad<T> {
    pub(crate) fn layers(&self) -> [&LayerGrad<T>; 2] {
        [&self.layer1, &self.layer2]
    }

    pub fn is_zero(&self) -> bool {
        self.layers().iter().all(|g| g.is_zero())
    }

    pub fn norm_sq(&self) -> T {
        self.layers().iter().flat_map(|g| g.values()).map(|v| *v * *v).sum()
    }
}

impl<T: Scalar> TrunkGrad<T> {
    pub(crate) fn layers(&self) -> [&LayerGrad<T>; 3] {
        [&self.layer3, &self.layer4, &self.out]
    }

    pub fn is_zero(&self) -> bool {
        self.layers().iter().all(|g| g.is_zero())
    }
}

impl<T: Scalar> NetGrad<T> {
    pub fn zeros_like(net: &HybridNet<T>) -> Self {
        let branches = net
            .encoder
            .branches
            .iter()
            .map(|b| BranchGrad {
                layer1: b.layer1.zero_grad(),
                layer2: b.layer2.zero_grad(),
            })
            .collect();
        let t = &net.trunk;
        Self {
            branches,
            trunk: TrunkGrad {
                layer3: t.layer3.zero_grad(),
                layer4: t.layer4.zero_grad(),
                out: t.out.zero_grad(),
            },
        }
    }

    pub fn group_is_zero(&self, group: Group) -> bool {
        match group {
            Group::Branch(k) => self.branches.get(k).is_none_or(BranchGrad::is_zero),
            Group::Trunk => self.trunk.is_zero(),
        }
    }

    /// Same order as [`HybridNet::params`].
    pub fn flatten(&self) -> Vec<T> {
        let mut out = Vec::new();
        for b in &self.branches {
            for g in b.layers() {
                out.extend(g.values().copied());
            }
        }
        for g in self.trunk.layers() {
            out.extend(g.values().copied());
        }
        out
    }
}

/// One training example: features by kind id and its label vector in {0, 1}.
#[derive(Debug, Clone, Copy)]
pub struct ExampleRef<'a, T> {
    pub features: &'a FeatureSet<'a, T>,
    pub labels: &'a [T],
}

fn mask_relu<T: Scalar>(grad: &mut [T], activation: &[T]) {
    for (g, a) in grad.iter_mut().zip(activation) {
        if *a <= T::zero() {
            *g = T::zero();
        }
    }
}

fn backprop_layer<T: Scalar>(
    layer: &DenseLayer<T>,
    input: &[T],
    upstream: &[T],
    grad: Option<&mut LayerGrad<T>>,
    downstream: Option<&mut [T]>,
) {
    match (grad, downstream) {
        (Some(g), down) => layer.accumulate_backward(input, upstream, g, down),
        (None, Some(down)) => layer.input_grad_into(upstream, down),
        (None, None) => {}
    }
}

impl<T: Scalar> HybridNet<T> {
    /// Forward + backward for one example. Adds `scale * dLoss/dθ` into `grad`
    /// for trainable groups and returns the unscaled loss.
    pub fn accumulate_example(
        &self,
        example: ExampleRef<'_, T>,
        mask: FeatureMask,
        grad: &mut NetGrad<T>,
        scale: T,
    ) -> Result<T> {
        self.encoder.check_mask(mask)?;
        if example.labels.len() != self.trunk.outputs() {
            return Err(Error::shape("labels", self.trunk.outputs(), example.labels.len()));
        }
        let mut traces = Vec::with_capacity(mask.len());
        for k in mask.iter() {
            let x = self.encoder.masked_input(example.features, k)?;
            let (h1, h2) = self.encoder.branches[k].forward_trace(x);
            traces.push((k, x, h1, h2));
        }
        let hs: Vec<&[T]> = traces.iter().map(|t| t.3.as_slice()).collect();
        let sig = merge_sum(&hs)?;
        let tt = self.trunk.forward_trace(&sig.values);
        let loss: T = tt
            .scores
            .iter()
            .zip(example.labels)
            .map(|(&p, &y)| bce_term(p, y))
            .sum();

        let trunk_on = self.is_trainable(Group::Trunk);
        let branches_on = mask.iter().any(|k| self.is_trainable(Group::Branch(k)));
        if !trunk_on && !branches_on {
            return Ok(loss);
        }

        let d_logit: Vec<T> = tt
            .scores
            .iter()
            .zip(example.labels)
            .map(|(&p, &y)| bce_logit_grad(p, y) * scale)
            .collect();
        let t = &self.trunk;
        let g = &mut grad.trunk;

        let mut d_a4 = vec![T::zero(); t.out.in_dim()];
        backprop_layer(&t.out, &tt.a4, &d_logit, trunk_on.then_some(&mut g.out), Some(&mut d_a4));
        mask_relu(&mut d_a4, &tt.a4);

        let mut d_a3 = vec![T::zero(); t.layer4.in_dim()];
        backprop_layer(&t.layer4, &tt.a3, &d_a4, trunk_on.then_some(&mut g.layer4), Some(&mut d_a3));
        mask_relu(&mut d_a3, &tt.a3);

        let mut d_sig = vec![T::zero(); t.layer3.in_dim()];
        backprop_layer(
            &t.layer3,
            &sig.values,
            &d_a3,
            trunk_on.then_some(&mut g.layer3),
            branches_on.then_some(d_sig.as_mut_slice()),
        );
        if !branches_on {
            return Ok(loss);
        }

        // The merge is a sum: every active branch receives d_sig unchanged.
        for (k, x, h1, h2) in &traces {
            if !self.is_trainable(Group::Branch(*k)) {
                continue;
            }
            let b = &self.encoder.branches[*k];
            let bg = &mut grad.branches[*k];
            let mut d_h2 = d_sig.clone();
            mask_relu(&mut d_h2, h2);
            let mut d_h1 = vec![T::zero(); b.layer2.in_dim()];
            b.layer2.accumulate_backward(h1, &d_h2, &mut bg.layer2, Some(&mut d_h1));
            mask_relu(&mut d_h1, h1);
            b.layer1.accumulate_backward(x, &d_h1, &mut bg.layer1, None);
        }
        Ok(loss)
    }

    /// Mean over examples of the per-example summed BCE.
    pub fn batch_loss(&self, batch: &[ExampleRef<'_, T>], mask: FeatureMask) -> Result<T> {
        if batch.is_empty() {
            return Err(Error::Empty("batch"));
        }
        let mut total = T::zero();
        for ex in batch {
            if ex.labels.len() != self.trunk.outputs() {
                return Err(Error::shape("labels", self.trunk.outputs(), ex.labels.len()));
            }
            let (_, scores) = self.forward(ex.features, mask)?;
            total += scores.iter().zip(ex.labels).map(|(&p, &y)| bce_term(p, y)).sum::<T>();
        }
        Ok(total / T::lit(batch.len() as f64))
    }
}

/// Mean batch loss and its gradient for all trainable groups.
pub fn net_backward<T: Scalar>(
    batch: &[ExampleRef<'_, T>],
    mask: FeatureMask,
    net: &HybridNet<T>,
) -> Result<(T, NetGrad<T>)> {
    if batch.is_empty() {
        return Err(Error::Empty("batch"));
    }
    let mut grad = NetGrad::zeros_like(net);
    let scale = T::one() / T::lit(batch.len() as f64);
    let mut total = T::zero();
    for ex in batch {
        total += net.accumulate_example(*ex, mask, &mut grad, scale)?;
    }
    Ok((total * scale, grad))
}
