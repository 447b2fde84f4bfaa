//! Recursive hourglass: at every level a skip branch keeps the current
//! resolution while a pooled branch descends, recurses, and upsamples back,
//! and the two merge by addition. Optional attention sits on the skip
//! branch.

use alloc::boxed::Box;
use alloc::format;
use alloc::vec::Vec;

use rand_chacha::ChaCha8Rng;

use crate::cbam::CbamCache;
use crate::cost::CostAcc;
use crate::error::Result;
use crate::layers::{maxpool2d, maxpool2d_backward, upsample_nearest, upsample_nearest_backward, Activation};
use crate::net::blocks::{Bottleneck, BottleneckCache, CbamNode};
use crate::net::{BlockKind, GradStore, ParamKind};
use crate::tensor::{Shape, Tensor};

pub struct Hourglass {
    skip_blocks: Vec<Bottleneck>,
    skip_cbam: Option<CbamNode>,
    down_blocks: Vec<Bottleneck>,
    inner: Inner,
    up_blocks: Vec<Bottleneck>,
}

enum Inner {
    Deeper(Box<Hourglass>),
    Bottom(Vec<Bottleneck>),
}

pub struct HourglassCache {
    skip: Vec<BottleneckCache>,
    cbam: Option<CbamCache>,
    pool_in_shape: Shape,
    pool_arg: Vec<usize>,
    down: Vec<BottleneckCache>,
    inner: InnerCache,
    up: Vec<BottleneckCache>,
}

enum InnerCache {
    Deeper(Box<HourglassCache>),
    Bottom(Vec<BottleneckCache>),
}

/// Settings shared by every level of one hourglass.
#[derive(Clone, Copy)]
pub struct HourglassSettings {
    pub channels: usize,
    pub blocks_per_level: usize,
    pub block_kind: BlockKind,
    pub activation: Activation,
    pub attention_inside: bool,
    pub reduction_ratio: usize,
}

impl Hourglass {
    pub fn new(
        name: &str,
        depth: usize,
        level: usize,
        s: HourglassSettings,
        rng: &mut ChaCha8Rng,
    ) -> Result<Self> {
        let c = s.channels;
        let mut blocks = |tag: &str| -> Vec<Bottleneck> {
            (0..s.blocks_per_level)
                .map(|j| {
                    Bottleneck::new(
                        format!("{name}.l{level}.{tag}{j}"),
                        s.block_kind,
                        c,
                        c,
                        s.activation,
                        rng,
                    )
                })
                .collect()
        };
        let skip_blocks = blocks("skip");
        let down_blocks = blocks("down");
        let skip_cbam = if s.attention_inside {
            Some(CbamNode::new(
                format!("{name}.l{level}.cbam"),
                c,
                s.reduction_ratio,
                false,
                rng,
            )?)
        } else {
            None
        };
        let inner = if depth > 1 {
            Inner::Deeper(Box::new(Hourglass::new(name, depth - 1, level + 1, s, rng)?))
        } else {
            Inner::Bottom(
                (0..s.blocks_per_level)
                    .map(|j| {
                        Bottleneck::new(
                            format!("{name}.bottom{j}"),
                            s.block_kind,
                            c,
                            c,
                            s.activation,
                            rng,
                        )
                    })
                    .collect(),
            )
        };
        let up_blocks = (0..s.blocks_per_level)
            .map(|j| {
                Bottleneck::new(
                    format!("{name}.l{level}.up{j}"),
                    s.block_kind,
                    c,
                    c,
                    s.activation,
                    rng,
                )
            })
            .collect();
        Ok(Hourglass {
            skip_blocks,
            skip_cbam,
            down_blocks,
            inner,
            up_blocks,
        })
    }

    pub fn forward_train(&mut self, x: &Tensor) -> Result<(Tensor, HourglassCache)> {
        let mut up1 = x.clone();
        let mut skip_caches = Vec::with_capacity(self.skip_blocks.len());
        for b in &mut self.skip_blocks {
            let (y, c) = b.forward_train(&up1)?;
            up1 = y;
            skip_caches.push(c);
        }
        let cbam_cache = match &self.skip_cbam {
            Some(cbam) => {
                let (y, c) = cbam.forward_cached(&up1)?;
                up1 = y;
                Some(c)
            }
            None => None,
        };

        let pool_in_shape = x.shape();
        let (pooled, pool_arg) = maxpool2d(x)?;
        let mut low = pooled;
        let mut down_caches = Vec::with_capacity(self.down_blocks.len());
        for b in &mut self.down_blocks {
            let (y, c) = b.forward_train(&low)?;
            low = y;
            down_caches.push(c);
        }
        let (mut low, inner_cache) = match &mut self.inner {
            Inner::Deeper(hg) => {
                let (y, c) = hg.forward_train(&low)?;
                (y, InnerCache::Deeper(Box::new(c)))
            }
            Inner::Bottom(blocks) => {
                let mut caches = Vec::with_capacity(blocks.len());
                for b in blocks {
                    let (y, c) = b.forward_train(&low)?;
                    low = y;
                    caches.push(c);
                }
                (low, InnerCache::Bottom(caches))
            }
        };
        let mut up_caches = Vec::with_capacity(self.up_blocks.len());
        for b in &mut self.up_blocks {
            let (y, c) = b.forward_train(&low)?;
            low = y;
            up_caches.push(c);
        }
        let up2 = upsample_nearest(&low);
        let out = up1.add(&up2)?;
        Ok((
            out,
            HourglassCache {
                skip: skip_caches,
                cbam: cbam_cache,
                pool_in_shape,
                pool_arg,
                down: down_caches,
                inner: inner_cache,
                up: up_caches,
            },
        ))
    }

    pub fn forward_eval(&self, x: &Tensor) -> Result<Tensor> {
        let mut up1 = x.clone();
        for b in &self.skip_blocks {
            up1 = b.forward_eval(&up1)?;
        }
        if let Some(cbam) = &self.skip_cbam {
            up1 = cbam.forward(&up1)?;
        }
        let (mut low, _) = maxpool2d(x)?;
        for b in &self.down_blocks {
            low = b.forward_eval(&low)?;
        }
        low = match &self.inner {
            Inner::Deeper(hg) => hg.forward_eval(&low)?,
            Inner::Bottom(blocks) => {
                let mut y = low;
                for b in blocks {
                    y = b.forward_eval(&y)?;
                }
                y
            }
        };
        for b in &self.up_blocks {
            low = b.forward_eval(&low)?;
        }
        up1.add(&upsample_nearest(&low))
    }

    pub fn backward(
        &self,
        cache: &HourglassCache,
        gout: &Tensor,
        grads: &mut GradStore,
    ) -> Result<Tensor> {
        // pooled branch
        let mut d = upsample_nearest_backward(gout)?;
        for (b, c) in self.up_blocks.iter().zip(&cache.up).rev() {
            d = b.backward(c, &d, grads)?;
        }
        d = match (&self.inner, &cache.inner) {
            (Inner::Deeper(hg), InnerCache::Deeper(c)) => hg.backward(c, &d, grads)?,
            (Inner::Bottom(blocks), InnerCache::Bottom(caches)) => {
                let mut dd = d;
                for (b, c) in blocks.iter().zip(caches).rev() {
                    dd = b.backward(c, &dd, grads)?;
                }
                dd
            }
            _ => unreachable!("cache shape always matches the module tree"),
        };
        for (b, c) in self.down_blocks.iter().zip(&cache.down).rev() {
            d = b.backward(c, &d, grads)?;
        }
        let mut dx = maxpool2d_backward(cache.pool_in_shape, &cache.pool_arg, &d)?;

        // skip branch
        let mut ds = gout.clone();
        if let (Some(cbam), Some(c)) = (&self.skip_cbam, &cache.cbam) {
            ds = cbam.backward(c, &ds, grads)?;
        }
        for (b, c) in self.skip_blocks.iter().zip(&cache.skip).rev() {
            ds = b.backward(c, &ds, grads)?;
        }
        dx.add_assign(&ds)?;
        Ok(dx)
    }

    pub fn visit(&self, f: &mut dyn FnMut(&str, &Tensor, ParamKind)) {
        for b in &self.skip_blocks {
            b.visit(f);
        }
        if let Some(c) = &self.skip_cbam {
            c.visit(f);
        }
        for b in &self.down_blocks {
            b.visit(f);
        }
        match &self.inner {
            Inner::Deeper(hg) => hg.visit(f),
            Inner::Bottom(blocks) => {
                for b in blocks {
                    b.visit(f);
                }
            }
        }
        for b in &self.up_blocks {
            b.visit(f);
        }
    }

    pub fn visit_mut(&mut self, f: &mut dyn FnMut(&str, &mut Tensor, ParamKind)) {
        for b in &mut self.skip_blocks {
            b.visit_mut(f);
        }
        if let Some(c) = &mut self.skip_cbam {
            c.visit_mut(f);
        }
        for b in &mut self.down_blocks {
            b.visit_mut(f);
        }
        match &mut self.inner {
            Inner::Deeper(hg) => hg.visit_mut(f),
            Inner::Bottom(blocks) => {
                for b in blocks {
                    b.visit_mut(f);
                }
            }
        }
        for b in &mut self.up_blocks {
            b.visit_mut(f);
        }
    }

    pub fn cost(&self, name: &str, hw: (usize, usize), acc: &mut CostAcc) -> (usize, usize) {
        let mut skip_hw = hw;
        for b in &self.skip_blocks {
            skip_hw = b.cost(skip_hw, acc);
        }
        if let Some(c) = &self.skip_cbam {
            skip_hw = c.cost(skip_hw, acc);
        }
        let channels = match self.skip_blocks.first() {
            Some(b) => b.expand.bn.channels(),
            None => 0,
        };
        let mut low_hw = acc.pool(&format!("{name}.pool"), channels, hw);
        for b in &self.down_blocks {
            low_hw = b.cost(low_hw, acc);
        }
        low_hw = match &self.inner {
            Inner::Deeper(hg) => hg.cost(name, low_hw, acc),
            Inner::Bottom(blocks) => {
                let mut cur = low_hw;
                for b in blocks {
                    cur = b.cost(cur, acc);
                }
                cur
            }
        };
        for b in &self.up_blocks {
            low_hw = b.cost(low_hw, acc);
        }
        let up_hw = acc.upsample(low_hw);
        debug_assert_eq!(up_hw, skip_hw);
        acc.residual_add(&format!("{name}.merge"), channels, up_hw);
        up_hw
    }
}
