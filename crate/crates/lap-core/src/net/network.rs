//! The full model: stem, hourglass stacks, intermediate supervision heads,
//! and stack-to-stack fusion.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::cbam::CbamCache;
use crate::cost::CostAcc;
use crate::error::{Error, Result};
use crate::layers::{maxpool2d, maxpool2d_backward};
use crate::net::blocks::{Bottleneck, BottleneckCache, CbamNode, ConvBnAct, ConvBnActCache, ConvNode};
use crate::net::hourglass::{Hourglass, HourglassCache, HourglassSettings};
use crate::net::{GradStore, NetworkConfig, ParamKind};
use crate::tensor::{Shape, Tensor};

/// One hourglass stage with its supervision head and, when another stage
/// follows, the 1x1 remaps that fuse features and heatmaps back into the
/// running representation.
pub struct Stack {
    name: String,
    hourglass: Hourglass,
    post: Bottleneck,
    lin: ConvBnAct,
    cbam: Option<CbamNode>,
    head: ConvNode,
    remap_feat: Option<ConvNode>,
    remap_heat: Option<ConvNode>,
}

pub struct StackCache {
    hg: HourglassCache,
    post: BottleneckCache,
    lin: ConvBnActCache,
    cbam: Option<CbamCache>,
    refined: Tensor,
    heat: Option<Tensor>,
}

pub struct NetCache {
    stem_conv: ConvBnActCache,
    stem_b1: BottleneckCache,
    pool_in_shape: Shape,
    pool_arg: Vec<usize>,
    stem_b2: BottleneckCache,
    stem_b3: BottleneckCache,
    stacks: Vec<StackCache>,
}

pub struct LapNet {
    pub config: NetworkConfig,
    stem_conv: ConvBnAct,
    stem_b1: Bottleneck,
    stem_b2: Bottleneck,
    stem_b3: Bottleneck,
    stacks: Vec<Stack>,
}

/// Builds a freshly initialized network. Initialization order is fixed, so
/// a seed fully determines every weight.
pub fn build_network(config: &NetworkConfig, seed: u64) -> Result<LapNet> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let act = config.activation;
    let kind = config.block_kind;
    let (c4, c2, c) = (config.channels / 4, config.channels / 2, config.channels);

    let stem_conv = ConvBnAct::new("stem", 3, c4, 7, 2, 3, 1, Some(act), &mut rng);
    let stem_b1 = Bottleneck::new("stem.res1".into(), kind, c4, c2, act, &mut rng);
    let stem_b2 = Bottleneck::new("stem.res2".into(), kind, c2, c2, act, &mut rng);
    let stem_b3 = Bottleneck::new("stem.res3".into(), kind, c2, c, act, &mut rng);

    let hg_settings = HourglassSettings {
        channels: c,
        blocks_per_level: config.blocks_per_level,
        block_kind: kind,
        activation: act,
        attention_inside: config.cbam_inside,
        reduction_ratio: config.reduction_ratio,
    };

    let mut stacks = Vec::with_capacity(config.stacks);
    for i in 0..config.stacks {
        let name = format!("stack{i}");
        let hourglass = Hourglass::new(&format!("{name}.hg"), config.depth, 0, hg_settings, &mut rng)?;
        let post = Bottleneck::new(format!("{name}.post"), kind, c, c, act, &mut rng);
        let lin = ConvBnAct::new(&format!("{name}.lin"), c, c, 1, 1, 0, 1, Some(act), &mut rng);
        let cbam = if config.cbam_between_stacks {
            Some(CbamNode::new(
                format!("{name}.cbam"),
                c,
                config.reduction_ratio,
                false,
                &mut rng,
            )?)
        } else {
            None
        };
        let head = ConvNode::new(
            format!("{name}.head"),
            c,
            config.num_keypoints,
            1,
            1,
            0,
            1,
            true,
            &mut rng,
        );
        let last = i + 1 == config.stacks;
        let remap_feat = (!last).then(|| {
            ConvNode::new(format!("{name}.remap_feat"), c, c, 1, 1, 0, 1, true, &mut rng)
        });
        let remap_heat = (!last).then(|| {
            ConvNode::new(
                format!("{name}.remap_heat"),
                config.num_keypoints,
                c,
                1,
                1,
                0,
                1,
                true,
                &mut rng,
            )
        });
        stacks.push(Stack {
            name,
            hourglass,
            post,
            lin,
            cbam,
            head,
            remap_feat,
            remap_heat,
        });
    }

    Ok(LapNet {
        config: config.clone(),
        stem_conv,
        stem_b1,
        stem_b2,
        stem_b3,
        stacks,
    })
}

impl Stack {
    fn forward_train(&mut self, x: &Tensor) -> Result<(Tensor, Option<Tensor>, StackCache)> {
        let (y, hg_cache) = self.hourglass.forward_train(x)?;
        let (y, post_cache) = self.post.forward_train(&y)?;
        let (y, lin_cache) = self.lin.forward_train(&y)?;
        let (refined, cbam_cache) = match &self.cbam {
            Some(cbam) => {
                let (r, c) = cbam.forward_cached(&y)?;
                (r, Some(c))
            }
            None => (y, None),
        };
        let heat = self.head.forward(&refined)?;
        let next = match (&self.remap_feat, &self.remap_heat) {
            (Some(rf), Some(rh)) => {
                let mut next = x.clone();
                next.add_assign(&rf.forward(&refined)?)?;
                next.add_assign(&rh.forward(&heat)?)?;
                Some(next)
            }
            _ => None,
        };
        let cache = StackCache {
            hg: hg_cache,
            post: post_cache,
            lin: lin_cache,
            cbam: cbam_cache,
            refined,
            heat: next.is_some().then(|| heat.clone()),
        };
        Ok((heat, next, cache))
    }

    fn forward_eval(&self, x: &Tensor) -> Result<(Tensor, Option<Tensor>)> {
        let y = self.hourglass.forward_eval(x)?;
        let y = self.post.forward_eval(&y)?;
        let y = self.lin.forward_eval(&y)?;
        let refined = match &self.cbam {
            Some(cbam) => cbam.forward(&y)?,
            None => y,
        };
        let heat = self.head.forward(&refined)?;
        let next = match (&self.remap_feat, &self.remap_heat) {
            (Some(rf), Some(rh)) => {
                let mut next = x.clone();
                next.add_assign(&rf.forward(&refined)?)?;
                next.add_assign(&rh.forward(&heat)?)?;
                Some(next)
            }
            _ => None,
        };
        Ok((heat, next))
    }

    /// `dnext` is the gradient flowing into this stack's fused output, when
    /// a later stack exists. Returns the gradient w.r.t. the stack input.
    fn backward(
        &self,
        cache: &StackCache,
        dheat_supervision: &Tensor,
        dnext: Option<&Tensor>,
        grads: &mut GradStore,
    ) -> Result<Tensor> {
        let mut dheat = dheat_supervision.clone();
        let mut drefined: Option<Tensor> = None;
        if let Some(dnext) = dnext {
            let rf = self.remap_feat.as_ref().expect("non-last stack has remaps");
            let rh = self.remap_heat.as_ref().expect("non-last stack has remaps");
            let heat = cache.heat.as_ref().expect("non-last stack caches heatmaps");
            drefined = Some(rf.backward(&cache.refined, dnext, grads)?);
            dheat.add_assign(&rh.backward(heat, dnext, grads)?)?;
        }
        let dhead = self.head.backward(&cache.refined, &dheat, grads)?;
        let mut drefined = match drefined {
            Some(mut d) => {
                d.add_assign(&dhead)?;
                d
            }
            None => dhead,
        };
        if let (Some(cbam), Some(ccache)) = (&self.cbam, &cache.cbam) {
            drefined = cbam.backward(ccache, &drefined, grads)?;
        }
        let d = self.lin.backward(&cache.lin, &drefined, grads)?;
        let d = self.post.backward(&cache.post, &d, grads)?;
        let mut dx = self.hourglass.backward(&cache.hg, &d, grads)?;
        if let Some(dnext) = dnext {
            dx.add_assign(dnext)?; // identity path of the fusion sum
        }
        Ok(dx)
    }

    fn visit(&self, f: &mut dyn FnMut(&str, &Tensor, ParamKind)) {
        self.hourglass.visit(f);
        self.post.visit(f);
        self.lin.visit(f);
        if let Some(c) = &self.cbam {
            c.visit(f);
        }
        self.head.visit(f);
        if let Some(r) = &self.remap_feat {
            r.visit(f);
        }
        if let Some(r) = &self.remap_heat {
            r.visit(f);
        }
    }

    fn visit_mut(&mut self, f: &mut dyn FnMut(&str, &mut Tensor, ParamKind)) {
        self.hourglass.visit_mut(f);
        self.post.visit_mut(f);
        self.lin.visit_mut(f);
        if let Some(c) = &mut self.cbam {
            c.visit_mut(f);
        }
        self.head.visit_mut(f);
        if let Some(r) = &mut self.remap_feat {
            r.visit_mut(f);
        }
        if let Some(r) = &mut self.remap_heat {
            r.visit_mut(f);
        }
    }

    fn cost(&self, hw: (usize, usize), acc: &mut CostAcc) -> (usize, usize) {
        let hw = self.hourglass.cost(&format!("{}.hg", self.name), hw, acc);
        let hw = self.post.cost(hw, acc);
        let hw = self.lin.cost(hw, acc);
        let hw = match &self.cbam {
            Some(c) => c.cost(hw, acc),
            None => hw,
        };
        self.head.cost(hw, acc);
        if let Some(r) = &self.remap_feat {
            r.cost(hw, acc);
        }
        if let Some(r) = &self.remap_heat {
            r.cost(hw, acc);
            acc.residual_add(&format!("{}.fuse", self.name), self.lin.bn.channels(), hw);
        }
        hw
    }
}

impl LapNet {
    fn check_input(&self, x: &Tensor) -> Result<()> {
        let s = x.shape();
        let expected = Shape::new(s.n, 3, self.config.input_h, self.config.input_w);
        if s != expected || s.n == 0 {
            return Err(Error::ShapeMismatch { expected, got: s });
        }
        Ok(())
    }

    /// Training-mode forward; returns one heatmap tensor per stack plus the
    /// cache the backward pass consumes. Updates batch-norm running stats.
    pub fn forward_train(&mut self, x: &Tensor) -> Result<(Vec<Tensor>, NetCache)> {
        self.check_input(x)?;
        let (y, stem_conv_c) = self.stem_conv.forward_train(x)?;
        let (y, b1_c) = self.stem_b1.forward_train(&y)?;
        let pool_in_shape = y.shape();
        let (y, pool_arg) = maxpool2d(&y)?;
        let (y, b2_c) = self.stem_b2.forward_train(&y)?;
        let (mut inter, b3_c) = self.stem_b3.forward_train(&y)?;

        let mut heats = Vec::with_capacity(self.stacks.len());
        let mut stack_caches = Vec::with_capacity(self.stacks.len());
        for stack in &mut self.stacks {
            let (heat, next, cache) = stack.forward_train(&inter)?;
            heats.push(heat);
            stack_caches.push(cache);
            if let Some(next) = next {
                inter = next;
            }
        }
        Ok((
            heats,
            NetCache {
                stem_conv: stem_conv_c,
                stem_b1: b1_c,
                pool_in_shape,
                pool_arg,
                stem_b2: b2_c,
                stem_b3: b3_c,
                stacks: stack_caches,
            },
        ))
    }

    /// Inference forward: running statistics, no caches, no mutation.
    pub fn forward_eval(&self, x: &Tensor) -> Result<Vec<Tensor>> {
        self.check_input(x)?;
        let y = self.stem_conv.forward_eval(x)?;
        let y = self.stem_b1.forward_eval(&y)?;
        let (y, _) = maxpool2d(&y)?;
        let y = self.stem_b2.forward_eval(&y)?;
        let mut inter = self.stem_b3.forward_eval(&y)?;
        let mut heats = Vec::with_capacity(self.stacks.len());
        for stack in &self.stacks {
            let (heat, next) = stack.forward_eval(&inter)?;
            heats.push(heat);
            if let Some(next) = next {
                inter = next;
            }
        }
        Ok(heats)
    }

    /// Backward from per-stack heatmap gradients. Returns the gradient with
    /// respect to the input image and all parameter gradients.
    pub fn backward(&self, cache: &NetCache, dheats: &[Tensor]) -> Result<(Tensor, GradStore)> {
        if dheats.len() != self.stacks.len() {
            return Err(Error::InvalidConfig(format!(
                "expected {} heatmap gradients, got {}",
                self.stacks.len(),
                dheats.len()
            )));
        }
        let mut grads = GradStore::new();
        let mut dnext: Option<Tensor> = None;
        for ((stack, scache), dheat) in self
            .stacks
            .iter()
            .zip(&cache.stacks)
            .zip(dheats)
            .rev()
        {
            let dx = stack.backward(scache, dheat, dnext.as_ref(), &mut grads)?;
            dnext = Some(dx);
        }
        let dinter = dnext.expect("at least one stack");
        let d = self.stem_b3.backward(&cache.stem_b3, &dinter, &mut grads)?;
        let d = self.stem_b2.backward(&cache.stem_b2, &d, &mut grads)?;
        let d = maxpool2d_backward(cache.pool_in_shape, &cache.pool_arg, &d)?;
        let d = self.stem_b1.backward(&cache.stem_b1, &d, &mut grads)?;
        let dx = self.stem_conv.backward(&cache.stem_conv, &d, &mut grads)?;
        Ok((dx, grads))
    }

    pub fn visit(&self, f: &mut dyn FnMut(&str, &Tensor, ParamKind)) {
        self.stem_conv.visit(f);
        self.stem_b1.visit(f);
        self.stem_b2.visit(f);
        self.stem_b3.visit(f);
        for s in &self.stacks {
            s.visit(f);
        }
    }

    pub fn visit_mut(&mut self, f: &mut dyn FnMut(&str, &mut Tensor, ParamKind)) {
        self.stem_conv.visit_mut(f);
        self.stem_b1.visit_mut(f);
        self.stem_b2.visit_mut(f);
        self.stem_b3.visit_mut(f);
        for s in &mut self.stacks {
            s.visit_mut(f);
        }
    }

    /// Enumerates instantiated trainable scalars: the independent route the
    /// analytic cost model is checked against.
    pub fn count_trainable_scalars(&self) -> u64 {
        let mut total = 0u64;
        self.visit(&mut |_, t, kind| {
            if kind.trainable() {
                total += t.len() as u64;
            }
        });
        total
    }

    /// Walks the structure in forward order, feeding the cost accumulator.
    pub fn cost(&self, acc: &mut CostAcc) {
        let hw = (self.config.input_h, self.config.input_w);
        let hw = self.stem_conv.cost(hw, acc);
        let hw = self.stem_b1.cost(hw, acc);
        let hw = acc.pool("stem.pool", self.stem_b1.expand.bn.channels(), hw);
        let hw = self.stem_b2.cost(hw, acc);
        let mut hw = self.stem_b3.cost(hw, acc);
        for s in &self.stacks {
            hw = s.cost(hw, acc);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::net::{build_lap_config, Preset};
    use rand::Rng;

    fn toy_net(seed: u64) -> LapNet {
        build_network(&build_lap_config(Preset::Toy), seed).unwrap()
    }

    fn random_input(net: &LapNet, n: usize, seed: u64) -> Tensor {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let shape = Shape::new(n, 3, net.config.input_h, net.config.input_w);
        let data = (0..shape.volume()).map(|_| rng.random_range(0.0..1.0)).collect();
        Tensor::from_vec(shape, data).unwrap()
    }

    #[test]
    fn toy_forward_shapes() {
        let mut net = toy_net(1);
        let x = random_input(&net, 2, 7);
        let (heats, _) = net.forward_train(&x).unwrap();
        assert_eq!(heats.len(), 1);
        assert_eq!(heats[0].shape(), Shape::new(2, 4, 16, 16));
    }

    #[test]
    fn rejects_wrong_input_size() {
        let mut net = toy_net(1);
        let x = Tensor::zeros(Shape::new(1, 3, 32, 64));
        assert!(matches!(
            net.forward_train(&x),
            Err(Error::ShapeMismatch { .. })
        ));
    }

    #[test]
    fn zeroed_heads_give_zero_heatmaps() {
        let mut net = toy_net(3);
        for s in &mut net.stacks {
            s.head.p.kernel = Tensor::zeros(s.head.p.kernel.shape());
            if let Some(b) = &mut s.head.p.bias {
                *b = Tensor::zeros(b.shape());
            }
        }
        let x = random_input(&net, 1, 9);
        let heats = net.forward_eval(&x).unwrap();
        assert!(heats[0].data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn same_seed_same_weights_different_seed_differs() {
        let a = toy_net(5);
        let b = toy_net(5);
        let c = toy_net(6);
        let collect = |net: &LapNet| {
            let mut v = Vec::new();
            net.visit(&mut |name, t, _| v.push((String::from(name), t.data().to_vec())));
            v
        };
        assert_eq!(collect(&a), collect(&b));
        assert_ne!(collect(&a), collect(&c));
    }

    #[test]
    fn visit_and_visit_mut_agree_on_names() {
        let mut net = toy_net(2);
        let mut names = Vec::new();
        net.visit(&mut |n, _, _| names.push(String::from(n)));
        let mut names_mut = Vec::new();
        net.visit_mut(&mut |n, _, _| names_mut.push(String::from(n)));
        assert_eq!(names, names_mut);
        // names are unique
        let mut sorted = names.clone();
        sorted.sort();
        sorted.dedup();
        assert_eq!(sorted.len(), names.len());
    }

    #[test]
    fn grad_names_match_trainable_param_names() {
        let mut net = toy_net(4);
        let x = random_input(&net, 1, 11);
        let (heats, cache) = net.forward_train(&x).unwrap();
        let dheats: Vec<Tensor> = heats.iter().map(|h| Tensor::ones(h.shape())).collect();
        let (_, grads) = net.backward(&cache, &dheats).unwrap();
        let mut trainable = Vec::new();
        net.visit(&mut |n, _, kind| {
            if kind.trainable() {
                trainable.push(String::from(n));
            }
        });
        trainable.sort();
        let mut got: Vec<String> = grads.names().into_iter().map(String::from).collect();
        got.sort();
        assert_eq!(trainable, got);
    }

    #[test]
    fn two_stack_config_yields_two_heatmap_tensors() {
        let mut cfg = build_lap_config(Preset::Toy);
        cfg.stacks = 2;
        let mut net = build_network(&cfg, 1).unwrap();
        let x = random_input(&net, 1, 13);
        let (heats, _) = net.forward_train(&x).unwrap();
        assert_eq!(heats.len(), 2);
        for h in &heats {
            assert_eq!(h.shape(), Shape::new(1, 4, 16, 16));
        }
    }
}
