//! Convolutional Block Attention Module: channel attention, spatial
//! attention, and their strictly sequential composition.
//!
//! Channel attention pools each channel over space (average and max), runs
//! both descriptors through one shared two-layer MLP, sums, and squashes
//! with a sigmoid into a per-channel gate. Spatial attention pools across
//! channels per pixel, stacks the two maps, convolves 7x7, and squashes
//! into a per-pixel gate. Gating is a broadcast elementwise product.

use alloc::string::String;
use alloc::vec::Vec;

use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::layers::{
    activation_backward, activation_forward, conv2d_backward, conv2d_forward, init_conv,
    init_linear, linear_backward, linear_forward, Activation, ConvParams, LinearParams,
};
use crate::math;
use crate::tensor::{ReduceAxes, ReduceMode, Shape, Tensor};

/// Shared-MLP channel attention: `C -> C/r -> C` with an activation between
/// the two layers. The same weights serve the average- and max-pooled
/// branches.
#[derive(Clone, Debug)]
pub struct ChannelAttentionParams {
    pub fc1: LinearParams,
    pub fc2: LinearParams,
    pub reduction: usize,
    pub hidden_act: Activation,
}

impl ChannelAttentionParams {
    pub fn new(
        channels: usize,
        reduction: usize,
        elu_mlp: bool,
        rng: &mut ChaCha8Rng,
    ) -> Result<Self> {
        if reduction == 0 || channels % reduction != 0 {
            return Err(Error::InvalidConfig(String::from(
                "channel attention reduction must divide the channel count",
            )));
        }
        let hidden = channels / reduction;
        Ok(ChannelAttentionParams {
            fc1: init_linear(hidden, channels, rng),
            fc2: init_linear(channels, hidden, rng),
            reduction,
            hidden_act: if elu_mlp {
                Activation::elu_default()
            } else {
                Activation::Relu
            },
        })
    }

    pub fn channels(&self) -> usize {
        self.fc1.in_features()
    }
}

/// 7x7 convolution over the two channel-pooled maps.
#[derive(Clone, Debug)]
pub struct SpatialAttentionParams {
    pub conv: ConvParams,
}

impl SpatialAttentionParams {
    pub fn new(rng: &mut ChaCha8Rng) -> Self {
        SpatialAttentionParams {
            conv: init_conv(1, 2, 7, 1, 3, 1, true, rng),
        }
    }
}

#[derive(Clone, Debug)]
pub struct CbamParams {
    pub channel: ChannelAttentionParams,
    pub spatial: SpatialAttentionParams,
}

impl CbamParams {
    pub fn new(
        channels: usize,
        reduction: usize,
        elu_mlp: bool,
        rng: &mut ChaCha8Rng,
    ) -> Result<Self> {
        Ok(CbamParams {
            channel: ChannelAttentionParams::new(channels, reduction, elu_mlp, rng)?,
            spatial: SpatialAttentionParams::new(rng),
        })
    }
}

// ---------------------------------------------------------------------------
// channel attention
// ---------------------------------------------------------------------------

#[derive(Clone, Debug)]
pub struct ChannelAttentionCache {
    pub avg: Tensor,
    pub max: Tensor,
    pub max_arg: Vec<usize>,
    pub hidden_avg: Tensor,
    pub hidden_max: Tensor,
    pub gate: Tensor,
    pub input_shape: Shape,
}

/// Gradients for the shared MLP (both branches already summed).
#[derive(Clone, Debug)]
pub struct ChannelAttentionGrads {
    pub fc1_weight: Tensor,
    pub fc1_bias: Option<Tensor>,
    pub fc2_weight: Tensor,
    pub fc2_bias: Option<Tensor>,
}

pub fn channel_attention(f: &Tensor, p: &ChannelAttentionParams) -> Result<Tensor> {
    channel_attention_cached(f, p).map(|(g, _)| g)
}

pub fn channel_attention_cached(
    f: &Tensor,
    p: &ChannelAttentionParams,
) -> Result<(Tensor, ChannelAttentionCache)> {
    if f.shape().c != p.channels() {
        return Err(Error::ChannelMismatch {
            expected: p.channels(),
            got: f.shape().c,
        });
    }
    let avg = f.reduce(ReduceAxes::Spatial, ReduceMode::Mean)?;
    let (max, max_arg) = f.spatial_max_with_arg()?;

    let hidden_avg = activation_forward(&linear_forward(&avg, &p.fc1)?, p.hidden_act);
    let out_avg = linear_forward(&hidden_avg, &p.fc2)?;
    let hidden_max = activation_forward(&linear_forward(&max, &p.fc1)?, p.hidden_act);
    let out_max = linear_forward(&hidden_max, &p.fc2)?;

    let gate = out_avg.add(&out_max)?.map(math::sigmoid);
    let cache = ChannelAttentionCache {
        avg,
        max,
        max_arg,
        hidden_avg,
        hidden_max,
        gate: gate.clone(),
        input_shape: f.shape(),
    };
    Ok((gate, cache))
}

/// Backward of the gate w.r.t. the feature map and the shared MLP.
/// `dgate` has the gate's `N x C x 1 x 1` shape.
pub fn channel_attention_backward(
    p: &ChannelAttentionParams,
    cache: &ChannelAttentionCache,
    dgate: &Tensor,
) -> Result<(Tensor, ChannelAttentionGrads)> {
    let g = &cache.gate;
    if dgate.shape() != g.shape() {
        return Err(Error::ShapeMismatch {
            expected: g.shape(),
            got: dgate.shape(),
        });
    }
    // through the sigmoid
    let dlogits_data: Vec<f64> = dgate
        .data()
        .iter()
        .zip(g.data())
        .map(|(&d, &y)| d * y * (1.0 - y))
        .collect();
    let dlogits = Tensor::from_vec(g.shape(), dlogits_data)?;

    let back_branch =
        |hidden: &Tensor, pooled: &Tensor| -> Result<(Tensor, ChannelAttentionGrads)> {
            let (dhidden_out, dw2, db2) = linear_backward(hidden, &p.fc2, &dlogits)?;
            let dhidden_pre = activation_backward(p.hidden_act, hidden, &dhidden_out)?;
            let (dpooled, dw1, db1) = linear_backward(pooled, &p.fc1, &dhidden_pre)?;
            Ok((
                dpooled,
                ChannelAttentionGrads {
                    fc1_weight: dw1,
                    fc1_bias: db1,
                    fc2_weight: dw2,
                    fc2_bias: db2,
                },
            ))
        };

    let (davg, ga) = back_branch(&cache.hidden_avg, &cache.avg)?;
    let (dmax, gm) = back_branch(&cache.hidden_max, &cache.max)?;

    let mut grads = ga;
    grads.fc1_weight.add_assign(&gm.fc1_weight)?;
    grads.fc2_weight.add_assign(&gm.fc2_weight)?;
    if let (Some(a), Some(b)) = (&mut grads.fc1_bias, &gm.fc1_bias) {
        a.add_assign(b)?;
    }
    if let (Some(a), Some(b)) = (&mut grads.fc2_bias, &gm.fc2_bias) {
        a.add_assign(b)?;
    }

    // avg pooling spreads uniformly; max pooling routes to the argmax pixel
    let s = cache.input_shape;
    let hw = (s.h * s.w) as f64;
    let mut df = Tensor::zeros(s);
    for n in 0..s.n {
        for c in 0..s.c {
            let spread = davg.at(n, c, 0, 0) / hw;
            for v in df.plane_mut(n, c) {
                *v += spread;
            }
        }
    }
    {
        let plane = s.h * s.w;
        let data = df.data_mut();
        for (slot, &arg) in cache.max_arg.iter().enumerate() {
            let n = slot / s.c;
            let c = slot % s.c;
            data[(n * s.c + c) * plane + arg] += dmax.at(n, c, 0, 0);
        }
    }
    Ok((df, grads))
}

/// `F' = gate (x) F`, the channel-broadcast product.
pub fn apply_channel_attention(f: &Tensor, gate: &Tensor) -> Result<Tensor> {
    let gs = gate.shape();
    if gs.h != 1 || gs.w != 1 || gs.c != f.shape().c {
        return Err(Error::ShapeMismatch {
            expected: Shape::new(f.shape().n, f.shape().c, 1, 1),
            got: gs,
        });
    }
    f.elementwise_mul(gate)
}

// ---------------------------------------------------------------------------
// spatial attention
// ---------------------------------------------------------------------------

#[derive(Clone, Debug)]
pub struct SpatialAttentionCache {
    pub stacked: Tensor,
    pub max_arg: Vec<usize>,
    pub map: Tensor,
    pub input_shape: Shape,
}

#[derive(Clone, Debug)]
pub struct SpatialAttentionGrads {
    pub conv_kernel: Tensor,
    pub conv_bias: Option<Tensor>,
}

pub fn spatial_attention(f: &Tensor, p: &SpatialAttentionParams) -> Result<Tensor> {
    spatial_attention_cached(f, p).map(|(m, _)| m)
}

pub fn spatial_attention_cached(
    f: &Tensor,
    p: &SpatialAttentionParams,
) -> Result<(Tensor, SpatialAttentionCache)> {
    let s = f.shape();
    let avg = f.reduce(ReduceAxes::Channel, ReduceMode::Mean)?;
    let (max, max_arg) = f.channel_max_with_arg()?;

    let mut stacked = Tensor::zeros(Shape::new(s.n, 2, s.h, s.w));
    for n in 0..s.n {
        stacked.plane_mut(n, 0).copy_from_slice(avg.plane(n, 0));
        stacked.plane_mut(n, 1).copy_from_slice(max.plane(n, 0));
    }

    let logits = conv2d_forward(&stacked, &p.conv)?;
    let map = logits.map(math::sigmoid);
    let cache = SpatialAttentionCache {
        stacked,
        max_arg,
        map: map.clone(),
        input_shape: s,
    };
    Ok((map, cache))
}

pub fn spatial_attention_backward(
    p: &SpatialAttentionParams,
    cache: &SpatialAttentionCache,
    dmap: &Tensor,
) -> Result<(Tensor, SpatialAttentionGrads)> {
    let m = &cache.map;
    if dmap.shape() != m.shape() {
        return Err(Error::ShapeMismatch {
            expected: m.shape(),
            got: dmap.shape(),
        });
    }
    let dlogits_data: Vec<f64> = dmap
        .data()
        .iter()
        .zip(m.data())
        .map(|(&d, &y)| d * y * (1.0 - y))
        .collect();
    let dlogits = Tensor::from_vec(m.shape(), dlogits_data)?;

    let (dstacked, conv_grads) = conv2d_backward(&cache.stacked, &p.conv, &dlogits)?;

    let s = cache.input_shape;
    let hw = s.h * s.w;
    let mut df = Tensor::zeros(s);
    for n in 0..s.n {
        let davg = dstacked.plane(n, 0).to_vec();
        let dmax = dstacked.plane(n, 1).to_vec();
        for c in 0..s.c {
            let plane = df.plane_mut(n, c);
            for (v, d) in plane.iter_mut().zip(&davg) {
                *v += d / s.c as f64;
            }
        }
        for (i, &d) in dmax.iter().enumerate() {
            let winner = cache.max_arg[n * hw + i];
            df.plane_mut(n, winner)[i] += d;
        }
    }
    Ok((
        df,
        SpatialAttentionGrads {
            conv_kernel: conv_grads.kernel,
            conv_bias: conv_grads.bias,
        },
    ))
}

// ---------------------------------------------------------------------------
// full block
// ---------------------------------------------------------------------------

#[derive(Clone, Debug)]
pub struct CbamCache {
    pub input: Tensor,
    pub channel: ChannelAttentionCache,
    pub refined: Tensor,
    pub spatial: SpatialAttentionCache,
}

#[derive(Clone, Debug)]
pub struct CbamGrads {
    pub channel: ChannelAttentionGrads,
    pub spatial: SpatialAttentionGrads,
}

/// Channel attention first, then spatial attention on the refined map.
pub fn cbam_forward(f: &Tensor, p: &CbamParams) -> Result<Tensor> {
    cbam_forward_cached(f, p).map(|(y, _)| y)
}

pub fn cbam_forward_cached(f: &Tensor, p: &CbamParams) -> Result<(Tensor, CbamCache)> {
    let (gate, channel_cache) = channel_attention_cached(f, &p.channel)?;
    let refined = apply_channel_attention(f, &gate)?;
    let (map, spatial_cache) = spatial_attention_cached(&refined, &p.spatial)?;
    let out = refined.elementwise_mul(&map)?;
    Ok((
        out,
        CbamCache {
            input: f.clone(),
            channel: channel_cache,
            refined,
            spatial: spatial_cache,
        },
    ))
}

pub fn cbam_backward(
    p: &CbamParams,
    cache: &CbamCache,
    gout: &Tensor,
) -> Result<(Tensor, CbamGrads)> {
    let s = cache.input.shape();
    if gout.shape() != s {
        return Err(Error::ShapeMismatch {
            expected: s,
            got: gout.shape(),
        });
    }
    let map = &cache.spatial.map;

    // F'' = map (x) F'
    let mut drefined = gout.elementwise_mul(map)?;
    let mut dmap = Tensor::zeros(map.shape());
    for n in 0..s.n {
        for c in 0..s.c {
            let gp = gout.plane(n, c);
            let rp = cache.refined.plane(n, c);
            let dm = dmap.plane_mut(n, 0);
            for ((d, &g), &r) in dm.iter_mut().zip(gp).zip(rp) {
                *d += g * r;
            }
        }
    }
    let (drefined_from_map, spatial_grads) =
        spatial_attention_backward(&p.spatial, &cache.spatial, &dmap)?;
    drefined.add_assign(&drefined_from_map)?;

    // F' = gate (x) F
    let gate = &cache.channel.gate;
    let mut df = drefined.elementwise_mul(gate)?;
    let mut dgate = Tensor::zeros(gate.shape());
    for n in 0..s.n {
        for c in 0..s.c {
            let dr = drefined.plane(n, c);
            let fp = cache.input.plane(n, c);
            let mut acc = 0.0;
            for (&d, &f) in dr.iter().zip(fp) {
                acc += d * f;
            }
            dgate.set(n, c, 0, 0, acc);
        }
    }
    let (df_from_gate, channel_grads) =
        channel_attention_backward(&p.channel, &cache.channel, &dgate)?;
    df.add_assign(&df_from_gate)?;

    Ok((
        df,
        CbamGrads {
            channel: channel_grads,
            spatial: spatial_grads,
        },
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;
    use rand::{Rng, SeedableRng};

    fn rng(seed: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(seed)
    }

    fn random_tensor(shape: Shape, r: &mut ChaCha8Rng) -> Tensor {
        let data = (0..shape.volume())
            .map(|_| r.random_range(-1.0..1.0))
            .collect();
        Tensor::from_vec(shape, data).unwrap()
    }

    fn zero_mlp(channels: usize, reduction: usize) -> ChannelAttentionParams {
        let hidden = channels / reduction;
        ChannelAttentionParams {
            fc1: LinearParams {
                weight: Tensor::zeros(Shape::new(hidden, channels, 1, 1)),
                bias: Some(Tensor::zeros(Shape::new(1, hidden, 1, 1))),
            },
            fc2: LinearParams {
                weight: Tensor::zeros(Shape::new(channels, hidden, 1, 1)),
                bias: Some(Tensor::zeros(Shape::new(1, channels, 1, 1))),
            },
            reduction,
            hidden_act: Activation::Relu,
        }
    }

    fn zero_spatial() -> SpatialAttentionParams {
        SpatialAttentionParams {
            conv: ConvParams::new(
                Tensor::zeros(Shape::new(1, 2, 7, 7)),
                Some(Tensor::zeros(Shape::new(1, 1, 1, 1))),
                1,
                3,
                1,
            )
            .unwrap(),
        }
    }

    #[test]
    fn zero_mlp_gate_is_half() {
        let f = random_tensor(Shape::new(2, 4, 3, 3), &mut rng(1));
        let gate = channel_attention(&f, &zero_mlp(4, 2)).unwrap();
        assert!(gate.data().iter().all(|&v| v == 0.5));
    }

    #[test]
    fn constant_channels_make_avg_equal_max() {
        let mut f = Tensor::zeros(Shape::new(1, 3, 4, 4));
        for c in 0..3 {
            f.plane_mut(0, c).fill(c as f64 - 1.0);
        }
        let avg = f.reduce(ReduceAxes::Spatial, ReduceMode::Mean).unwrap();
        let (max, _) = f.spatial_max_with_arg().unwrap();
        assert_eq!(avg.data(), max.data());

        // so the gate equals sigmoid(2 * MLP(v))
        let mut r = rng(5);
        let p = ChannelAttentionParams::new(3, 1, false, &mut r).unwrap();
        let gate = channel_attention(&f, &p).unwrap();
        let one = linear_forward(
            &activation_forward(&linear_forward(&avg, &p.fc1).unwrap(), p.hidden_act),
            &p.fc2,
        )
        .unwrap();
        let expect = one.map(|v| math::sigmoid(2.0 * v));
        assert_eq!(gate.data(), expect.data());
    }

    #[test]
    fn hand_set_mlp_gate() {
        // C = 2, r = 1; small MLP evaluated by hand with scalar math.
        let p = ChannelAttentionParams {
            fc1: LinearParams {
                weight: Tensor::from_vec(Shape::new(2, 2, 1, 1), vec![1.0, 0.5, -0.5, 1.0])
                    .unwrap(),
                bias: Some(Tensor::from_vec(Shape::new(1, 2, 1, 1), vec![0.1, -0.1]).unwrap()),
            },
            fc2: LinearParams {
                weight: Tensor::from_vec(Shape::new(2, 2, 1, 1), vec![0.5, 1.0, 1.0, -0.5])
                    .unwrap(),
                bias: Some(Tensor::from_vec(Shape::new(1, 2, 1, 1), vec![0.0, 0.2]).unwrap()),
            },
            reduction: 1,
            hidden_act: Activation::Relu,
        };
        // channel 0 map: (1,2;3,4) -> avg 2.5, max 4; channel 1 constant 2
        let f = Tensor::from_vec(
            Shape::new(1, 2, 2, 2),
            vec![1.0, 2.0, 3.0, 4.0, 2.0, 2.0, 2.0, 2.0],
        )
        .unwrap();
        let mlp = |v: [f64; 2]| -> [f64; 2] {
            let h0 = (1.0 * v[0] + 0.5 * v[1] + 0.1).max(0.0);
            let h1 = (-0.5 * v[0] + 1.0 * v[1] - 0.1).max(0.0);
            [0.5 * h0 + 1.0 * h1, 1.0 * h0 - 0.5 * h1 + 0.2]
        };
        let a = mlp([2.5, 2.0]);
        let m = mlp([4.0, 2.0]);
        let expect = [math::sigmoid(a[0] + m[0]), math::sigmoid(a[1] + m[1])];
        let gate = channel_attention(&f, &p).unwrap();
        assert!((gate.at(0, 0, 0, 0) - expect[0]).abs() < 1e-12);
        assert!((gate.at(0, 1, 0, 0) - expect[1]).abs() < 1e-12);
    }

    #[test]
    fn branch_order_does_not_change_gate() {
        let mut r = rng(9);
        let p = ChannelAttentionParams::new(4, 2, false, &mut r).unwrap();
        let f = random_tensor(Shape::new(1, 4, 3, 3), &mut r);
        let avg = f.reduce(ReduceAxes::Spatial, ReduceMode::Mean).unwrap();
        let (max, _) = f.spatial_max_with_arg().unwrap();
        let branch = |x: &Tensor| {
            linear_forward(
                &activation_forward(&linear_forward(x, &p.fc1).unwrap(), p.hidden_act),
                &p.fc2,
            )
            .unwrap()
        };
        let ab = branch(&avg).add(&branch(&max)).unwrap().map(math::sigmoid);
        let ba = branch(&max).add(&branch(&avg)).unwrap().map(math::sigmoid);
        assert_eq!(ab.data(), ba.data());
        assert_eq!(ab.data(), channel_attention(&f, &p).unwrap().data());
    }

    #[test]
    fn gate_application_halves_with_constant_half_gate() {
        let f = random_tensor(Shape::new(1, 3, 2, 2), &mut rng(2));
        let gate = Tensor::filled(Shape::new(1, 3, 1, 1), 0.5);
        let out = apply_channel_attention(&f, &gate).unwrap();
        assert_eq!(out.data(), f.scale(0.5).data());
    }

    #[test]
    fn saturated_gate_recovers_input() {
        let mut r = rng(3);
        let f = random_tensor(Shape::new(1, 2, 2, 2), &mut r);
        let mut p = zero_mlp(2, 1);
        // huge positive bias on the output layer drives the gate to ~1
        p.fc2.bias = Some(Tensor::filled(Shape::new(1, 2, 1, 1), 60.0));
        let gate = channel_attention(&f, &p).unwrap();
        let out = apply_channel_attention(&f, &gate).unwrap();
        for (o, x) in out.data().iter().zip(f.data()) {
            assert!((o - x).abs() <= 1e-12 * x.abs().max(1.0));
            assert!(o.abs() <= x.abs());
        }
    }

    #[test]
    fn random_gate_matches_elementwise_mul() {
        let mut r = rng(13);
        let f = random_tensor(Shape::new(2, 4, 3, 3), &mut r);
        let p = ChannelAttentionParams::new(4, 2, false, &mut r).unwrap();
        let gate = channel_attention(&f, &p).unwrap();
        let a = apply_channel_attention(&f, &gate).unwrap();
        let b = f.elementwise_mul(&gate).unwrap();
        assert_eq!(a.data(), b.data());
    }

    #[test]
    fn zero_spatial_conv_gives_half_map() {
        let f = random_tensor(Shape::new(1, 3, 4, 5), &mut rng(4));
        let map = spatial_attention(&f, &zero_spatial()).unwrap();
        assert_eq!(map.shape(), Shape::new(1, 1, 4, 5));
        assert!(map.data().iter().all(|&v| v == 0.5));
    }

    #[test]
    fn single_channel_pools_are_the_map_itself() {
        let f = random_tensor(Shape::new(1, 1, 3, 3), &mut rng(6));
        let avg = f.reduce(ReduceAxes::Channel, ReduceMode::Mean).unwrap();
        let (max, _) = f.channel_max_with_arg().unwrap();
        assert_eq!(avg.data(), f.data());
        assert_eq!(max.data(), f.data());
    }

    #[test]
    fn one_hot_center_kernel_spatial_map() {
        // kernel selects the avg-pool map at the center tap, so the
        // attention map is sigmoid(channel-mean) pixel by pixel.
        let mut kernel = Tensor::zeros(Shape::new(1, 2, 7, 7));
        kernel.set(0, 0, 3, 3, 1.0);
        let p = SpatialAttentionParams {
            conv: ConvParams::new(kernel, None, 1, 3, 1).unwrap(),
        };
        let f = random_tensor(Shape::new(1, 2, 3, 3), &mut rng(8));
        let map = spatial_attention(&f, &p).unwrap();
        let mean = f.reduce(ReduceAxes::Channel, ReduceMode::Mean).unwrap();
        for (m, v) in map.data().iter().zip(mean.data()) {
            assert!((m - math::sigmoid(*v)).abs() < 1e-15);
        }
    }

    #[test]
    fn zero_weights_give_quarter_output() {
        let p = CbamParams {
            channel: zero_mlp(4, 2),
            spatial: zero_spatial(),
        };
        let f = random_tensor(Shape::new(2, 4, 4, 4), &mut rng(10));
        let out = cbam_forward(&f, &p).unwrap();
        for (o, x) in out.data().iter().zip(f.data()) {
            assert!((o - x / 4.0).abs() < 1e-12);
        }
    }

    #[test]
    fn full_block_matches_composed_sub_ops() {
        let mut r = rng(21);
        let p = CbamParams::new(4, 2, false, &mut r).unwrap();
        let f = random_tensor(Shape::new(1, 4, 4, 4), &mut r);
        let fused = cbam_forward(&f, &p).unwrap();

        let gate = channel_attention(&f, &p.channel).unwrap();
        let refined = apply_channel_attention(&f, &gate).unwrap();
        let map = spatial_attention(&refined, &p.spatial).unwrap();
        let manual = refined.elementwise_mul(&map).unwrap();
        assert_eq!(fused.data(), manual.data());
    }

    #[test]
    fn attenuation_and_sign_preserved() {
        let mut r = rng(33);
        let p = CbamParams::new(4, 4, false, &mut r).unwrap();
        let f = random_tensor(Shape::new(1, 4, 4, 4), &mut r).scale(3.0);
        let out = cbam_forward(&f, &p).unwrap();
        for (o, x) in out.data().iter().zip(f.data()) {
            assert!(o.abs() <= x.abs());
            if *x != 0.0 {
                assert!(o.signum() == x.signum() || *o == 0.0);
            }
        }
    }

    #[test]
    fn zero_upstream_gives_zero_grads() {
        let mut r = rng(40);
        let p = CbamParams::new(4, 2, false, &mut r).unwrap();
        let f = random_tensor(Shape::new(1, 4, 4, 4), &mut r);
        let (_, cache) = cbam_forward_cached(&f, &p).unwrap();
        let (df, grads) = cbam_backward(&p, &cache, &Tensor::zeros(f.shape())).unwrap();
        assert!(df.data().iter().all(|&v| v == 0.0));
        assert!(grads.channel.fc1_weight.data().iter().all(|&v| v == 0.0));
        assert!(grads.spatial.conv_kernel.data().iter().all(|&v| v == 0.0));
    }
}
