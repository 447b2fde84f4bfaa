//! Named building blocks: conv / conv+bn+act wrappers, the bottleneck
//! residual block in both flavours, and the attention node.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use rand_chacha::ChaCha8Rng;

use crate::cbam::{cbam_backward, cbam_forward, cbam_forward_cached, CbamCache, CbamParams};
use crate::cost::CostAcc;
use crate::error::Result;
use crate::layers::{
    activation_backward, activation_forward, batchnorm_backward, batchnorm_eval,
    batchnorm_forward_cached, conv2d_backward, conv2d_forward, init_conv, Activation,
    BatchNormParams, BnCache, Mode,
};
use crate::net::{BlockKind, GradStore, ParamKind};
use crate::tensor::Tensor;

/// A convolution with a dotted parameter name.
#[derive(Clone, Debug)]
pub struct ConvNode {
    pub name: String,
    pub p: crate::layers::ConvParams,
}

impl ConvNode {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        name: String,
        c_in: usize,
        c_out: usize,
        k: usize,
        stride: usize,
        padding: usize,
        groups: usize,
        with_bias: bool,
        rng: &mut ChaCha8Rng,
    ) -> Self {
        let p = init_conv(c_out, c_in / groups, k, stride, padding, groups, with_bias, rng);
        ConvNode { name, p }
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        conv2d_forward(x, &self.p)
    }

    /// `x` must be the tensor that produced the forward output.
    pub fn backward(&self, x: &Tensor, gout: &Tensor, grads: &mut GradStore) -> Result<Tensor> {
        let (dx, g) = conv2d_backward(x, &self.p, gout)?;
        grads.accumulate(&format!("{}.weight", self.name), g.kernel)?;
        if let Some(b) = g.bias {
            grads.accumulate(&format!("{}.bias", self.name), b)?;
        }
        Ok(dx)
    }

    pub fn visit(&self, f: &mut dyn FnMut(&str, &Tensor, ParamKind)) {
        f(&format!("{}.weight", self.name), &self.p.kernel, ParamKind::ConvWeight);
        if let Some(b) = &self.p.bias {
            f(&format!("{}.bias", self.name), b, ParamKind::Bias);
        }
    }

    pub fn visit_mut(&mut self, f: &mut dyn FnMut(&str, &mut Tensor, ParamKind)) {
        f(
            &format!("{}.weight", self.name),
            &mut self.p.kernel,
            ParamKind::ConvWeight,
        );
        if let Some(b) = &mut self.p.bias {
            f(&format!("{}.bias", self.name), b, ParamKind::Bias);
        }
    }

    pub fn cost(&self, hw: (usize, usize), acc: &mut CostAcc) -> (usize, usize) {
        acc.conv(&self.name, &self.p, hw)
    }
}

/// Convolution, batch norm, optional activation.
#[derive(Clone, Debug)]
pub struct ConvBnAct {
    pub conv: ConvNode,
    pub bn_name: String,
    pub bn: BatchNormParams,
    pub act: Option<Activation>,
}

#[derive(Debug)]
pub struct ConvBnActCache {
    conv_in: Tensor,
    bn: BnCache,
    act_out: Option<Tensor>,
}

impl ConvBnAct {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        base: &str,
        c_in: usize,
        c_out: usize,
        k: usize,
        stride: usize,
        padding: usize,
        groups: usize,
        act: Option<Activation>,
        rng: &mut ChaCha8Rng,
    ) -> Self {
        ConvBnAct {
            conv: ConvNode::new(
                format!("{base}.conv"),
                c_in,
                c_out,
                k,
                stride,
                padding,
                groups,
                false,
                rng,
            ),
            bn_name: format!("{base}.bn"),
            bn: BatchNormParams::new(c_out),
            act,
        }
    }

    pub fn forward_train(&mut self, x: &Tensor) -> Result<(Tensor, ConvBnActCache)> {
        let y = self.conv.forward(x)?;
        let (y, bn_cache) = batchnorm_forward_cached(&y, &mut self.bn, Mode::Train)?;
        let (out, act_out) = match self.act {
            Some(a) => {
                let o = activation_forward(&y, a);
                (o.clone(), Some(o))
            }
            None => (y, None),
        };
        Ok((
            out,
            ConvBnActCache {
                conv_in: x.clone(),
                bn: bn_cache,
                act_out,
            },
        ))
    }

    pub fn forward_eval(&self, x: &Tensor) -> Result<Tensor> {
        let y = self.conv.forward(x)?;
        let y = batchnorm_eval(&y, &self.bn)?;
        Ok(match self.act {
            Some(a) => activation_forward(&y, a),
            None => y,
        })
    }

    pub fn backward(
        &self,
        cache: &ConvBnActCache,
        gout: &Tensor,
        grads: &mut GradStore,
    ) -> Result<Tensor> {
        let dbn_out = match (self.act, &cache.act_out) {
            (Some(a), Some(out)) => activation_backward(a, out, gout)?,
            _ => gout.clone(),
        };
        let (dconv_out, dgamma, dbeta) = batchnorm_backward(&self.bn, &cache.bn, &dbn_out)?;
        grads.accumulate(&format!("{}.gamma", self.bn_name), dgamma)?;
        grads.accumulate(&format!("{}.beta", self.bn_name), dbeta)?;
        self.conv.backward(&cache.conv_in, &dconv_out, grads)
    }

    pub fn visit(&self, f: &mut dyn FnMut(&str, &Tensor, ParamKind)) {
        self.conv.visit(f);
        f(&format!("{}.gamma", self.bn_name), &self.bn.gamma, ParamKind::BnGamma);
        f(&format!("{}.beta", self.bn_name), &self.bn.beta, ParamKind::BnBeta);
        f(
            &format!("{}.running_mean", self.bn_name),
            &self.bn.running_mean,
            ParamKind::BnRunningMean,
        );
        f(
            &format!("{}.running_var", self.bn_name),
            &self.bn.running_var,
            ParamKind::BnRunningVar,
        );
    }

    pub fn visit_mut(&mut self, f: &mut dyn FnMut(&str, &mut Tensor, ParamKind)) {
        self.conv.visit_mut(f);
        f(
            &format!("{}.gamma", self.bn_name),
            &mut self.bn.gamma,
            ParamKind::BnGamma,
        );
        f(
            &format!("{}.beta", self.bn_name),
            &mut self.bn.beta,
            ParamKind::BnBeta,
        );
        f(
            &format!("{}.running_mean", self.bn_name),
            &mut self.bn.running_mean,
            ParamKind::BnRunningMean,
        );
        f(
            &format!("{}.running_var", self.bn_name),
            &mut self.bn.running_var,
            ParamKind::BnRunningVar,
        );
    }

    pub fn cost(&self, hw: (usize, usize), acc: &mut CostAcc) -> (usize, usize) {
        let out_hw = self.conv.cost(hw, acc);
        acc.bn(&self.bn_name, self.bn.channels(), out_hw);
        if self.act.is_some() {
            acc.activation(&format!("{}.act", self.conv.name), self.bn.channels(), out_hw);
        }
        out_hw
    }
}

/// Bottleneck residual block: 1x1 squeeze, a 3x3 middle (standard) or a
/// depthwise-separable pair (lightweight), 1x1 expand, plus a skip that is
/// the identity when the channel counts agree and a 1x1 projection
/// otherwise. The activation runs after the merge.
#[derive(Clone, Debug)]
pub struct Bottleneck {
    pub name: String,
    pub reduce: ConvBnAct,
    pub middle: Vec<ConvBnAct>,
    pub expand: ConvBnAct,
    pub skip: Option<ConvNode>,
    pub act: Activation,
}

#[derive(Debug)]
pub struct BottleneckCache {
    reduce: ConvBnActCache,
    middle: Vec<ConvBnActCache>,
    expand: ConvBnActCache,
    skip_in: Option<Tensor>,
    out: Tensor,
}

impl Bottleneck {
    pub fn new(
        name: String,
        kind: BlockKind,
        c_in: usize,
        c_out: usize,
        act: Activation,
        rng: &mut ChaCha8Rng,
    ) -> Self {
        let mid = (c_out / 2).max(1);
        let reduce = ConvBnAct::new(&format!("{name}.reduce"), c_in, mid, 1, 1, 0, 1, Some(act), rng);
        let middle = match kind {
            BlockKind::Standard => {
                alloc::vec![ConvBnAct::new(
                    &format!("{name}.mid"),
                    mid,
                    mid,
                    3,
                    1,
                    1,
                    1,
                    Some(act),
                    rng,
                )]
            }
            BlockKind::Lightweight => alloc::vec![
                ConvBnAct::new(&format!("{name}.dw"), mid, mid, 3, 1, 1, mid, Some(act), rng),
                ConvBnAct::new(&format!("{name}.pw"), mid, mid, 1, 1, 0, 1, Some(act), rng),
            ],
        };
        let expand = ConvBnAct::new(&format!("{name}.expand"), mid, c_out, 1, 1, 0, 1, None, rng);
        let skip = (c_in != c_out).then(|| {
            ConvNode::new(format!("{name}.skip"), c_in, c_out, 1, 1, 0, 1, true, rng)
        });
        Bottleneck {
            name,
            reduce,
            middle,
            expand,
            skip,
            act,
        }
    }

    pub fn forward_train(&mut self, x: &Tensor) -> Result<(Tensor, BottleneckCache)> {
        let (mut y, reduce_c) = self.reduce.forward_train(x)?;
        let mut middle_c = Vec::with_capacity(self.middle.len());
        for m in &mut self.middle {
            let (ny, c) = m.forward_train(&y)?;
            y = ny;
            middle_c.push(c);
        }
        let (main, expand_c) = self.expand.forward_train(&y)?;
        let merged = match &self.skip {
            Some(proj) => main.add(&proj.forward(x)?)?,
            None => main.add(x)?,
        };
        let out = activation_forward(&merged, self.act);
        Ok((
            out.clone(),
            BottleneckCache {
                reduce: reduce_c,
                middle: middle_c,
                expand: expand_c,
                skip_in: self.skip.is_some().then(|| x.clone()),
                out,
            },
        ))
    }

    pub fn forward_eval(&self, x: &Tensor) -> Result<Tensor> {
        let mut y = self.reduce.forward_eval(x)?;
        for m in &self.middle {
            y = m.forward_eval(&y)?;
        }
        let main = self.expand.forward_eval(&y)?;
        let merged = match &self.skip {
            Some(proj) => main.add(&proj.forward(x)?)?,
            None => main.add(x)?,
        };
        Ok(activation_forward(&merged, self.act))
    }

    pub fn backward(
        &self,
        cache: &BottleneckCache,
        gout: &Tensor,
        grads: &mut GradStore,
    ) -> Result<Tensor> {
        let dmerged = activation_backward(self.act, &cache.out, gout)?;
        let mut d = self.expand.backward(&cache.expand, &dmerged, grads)?;
        for (m, c) in self.middle.iter().zip(&cache.middle).rev() {
            d = m.backward(c, &d, grads)?;
        }
        let mut dx = self.reduce.backward(&cache.reduce, &d, grads)?;
        match (&self.skip, &cache.skip_in) {
            (Some(proj), Some(x)) => {
                let dskip = proj.backward(x, &dmerged, grads)?;
                dx.add_assign(&dskip)?;
            }
            _ => dx.add_assign(&dmerged)?,
        }
        Ok(dx)
    }

    pub fn visit(&self, f: &mut dyn FnMut(&str, &Tensor, ParamKind)) {
        self.reduce.visit(f);
        for m in &self.middle {
            m.visit(f);
        }
        self.expand.visit(f);
        if let Some(s) = &self.skip {
            s.visit(f);
        }
    }

    pub fn visit_mut(&mut self, f: &mut dyn FnMut(&str, &mut Tensor, ParamKind)) {
        self.reduce.visit_mut(f);
        for m in &mut self.middle {
            m.visit_mut(f);
        }
        self.expand.visit_mut(f);
        if let Some(s) = &mut self.skip {
            s.visit_mut(f);
        }
    }

    pub fn cost(&self, hw: (usize, usize), acc: &mut CostAcc) -> (usize, usize) {
        let mut cur = self.reduce.cost(hw, acc);
        for m in &self.middle {
            cur = m.cost(cur, acc);
        }
        cur = self.expand.cost(cur, acc);
        if let Some(s) = &self.skip {
            s.cost(hw, acc);
        }
        let c_out = self.expand.bn.channels();
        acc.residual_add(&format!("{}.add", self.name), c_out, cur);
        acc.activation(&format!("{}.act", self.name), c_out, cur);
        cur
    }
}

/// Attention block with dotted parameter names.
#[derive(Clone, Debug)]
pub struct CbamNode {
    pub name: String,
    pub p: CbamParams,
}

impl CbamNode {
    pub fn new(
        name: String,
        channels: usize,
        reduction: usize,
        elu_mlp: bool,
        rng: &mut ChaCha8Rng,
    ) -> Result<Self> {
        Ok(CbamNode {
            name,
            p: CbamParams::new(channels, reduction, elu_mlp, rng)?,
        })
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        cbam_forward(x, &self.p)
    }

    pub fn forward_cached(&self, x: &Tensor) -> Result<(Tensor, CbamCache)> {
        cbam_forward_cached(x, &self.p)
    }

    pub fn backward(
        &self,
        cache: &CbamCache,
        gout: &Tensor,
        grads: &mut GradStore,
    ) -> Result<Tensor> {
        let (dx, g) = cbam_backward(&self.p, cache, gout)?;
        grads.accumulate(&format!("{}.fc1.weight", self.name), g.channel.fc1_weight)?;
        if let Some(b) = g.channel.fc1_bias {
            grads.accumulate(&format!("{}.fc1.bias", self.name), b)?;
        }
        grads.accumulate(&format!("{}.fc2.weight", self.name), g.channel.fc2_weight)?;
        if let Some(b) = g.channel.fc2_bias {
            grads.accumulate(&format!("{}.fc2.bias", self.name), b)?;
        }
        grads.accumulate(&format!("{}.conv.weight", self.name), g.spatial.conv_kernel)?;
        if let Some(b) = g.spatial.conv_bias {
            grads.accumulate(&format!("{}.conv.bias", self.name), b)?;
        }
        Ok(dx)
    }

    pub fn visit(&self, f: &mut dyn FnMut(&str, &Tensor, ParamKind)) {
        let c = &self.p.channel;
        f(&format!("{}.fc1.weight", self.name), &c.fc1.weight, ParamKind::LinearWeight);
        if let Some(b) = &c.fc1.bias {
            f(&format!("{}.fc1.bias", self.name), b, ParamKind::Bias);
        }
        f(&format!("{}.fc2.weight", self.name), &c.fc2.weight, ParamKind::LinearWeight);
        if let Some(b) = &c.fc2.bias {
            f(&format!("{}.fc2.bias", self.name), b, ParamKind::Bias);
        }
        let s = &self.p.spatial;
        f(&format!("{}.conv.weight", self.name), &s.conv.kernel, ParamKind::ConvWeight);
        if let Some(b) = &s.conv.bias {
            f(&format!("{}.conv.bias", self.name), b, ParamKind::Bias);
        }
    }

    pub fn visit_mut(&mut self, f: &mut dyn FnMut(&str, &mut Tensor, ParamKind)) {
        let c = &mut self.p.channel;
        f(
            &format!("{}.fc1.weight", self.name),
            &mut c.fc1.weight,
            ParamKind::LinearWeight,
        );
        if let Some(b) = &mut c.fc1.bias {
            f(&format!("{}.fc1.bias", self.name), b, ParamKind::Bias);
        }
        f(
            &format!("{}.fc2.weight", self.name),
            &mut c.fc2.weight,
            ParamKind::LinearWeight,
        );
        if let Some(b) = &mut c.fc2.bias {
            f(&format!("{}.fc2.bias", self.name), b, ParamKind::Bias);
        }
        let s = &mut self.p.spatial;
        f(
            &format!("{}.conv.weight", self.name),
            &mut s.conv.kernel,
            ParamKind::ConvWeight,
        );
        if let Some(b) = &mut s.conv.bias {
            f(&format!("{}.conv.bias", self.name), b, ParamKind::Bias);
        }
    }

    pub fn cost(&self, hw: (usize, usize), acc: &mut CostAcc) -> (usize, usize) {
        // the shared MLP runs once per pooled branch
        acc.linear(&format!("{}.fc1", self.name), &self.p.channel.fc1, 2);
        acc.linear(&format!("{}.fc2", self.name), &self.p.channel.fc2, 2);
        acc.conv(&format!("{}.conv", self.name), &self.p.spatial.conv, hw);
        acc.attention_gating(&format!("{}.gate", self.name), self.p.channel.channels(), hw);
        hw
    }
}
