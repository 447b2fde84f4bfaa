//! Central finite-difference verification of every backward pass.
//!
//! Each check scalarizes a layer's output through a fixed random probe
//! (`loss = sum(output * probe)`），computes analytic gradients with the
//! layer's backward, and compares them coordinate by coordinate against
//! `(f(x + h) - f(x - h)) / 2h` at `h = 1e-5` in f64. Relative error is
//! `|analytic - fd| / max(1, |analytic|)`.

use alloc::string::String;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::Result;
use crate::heatmap;
use crate::layers::{
    activation_backward, activation_forward, batchnorm_backward, batchnorm_forward_cached,
    linear_backward, linear_forward, maxpool2d, maxpool2d_backward, upsample_nearest,
    upsample_nearest_backward, Activation, BatchNormParams, LinearParams, Mode,
};
use crate::net::{
    build_lap_config, build_network, Bottleneck, BlockKind, CbamNode, ConvBnAct, ConvNode,
    GradStore, Hourglass, HourglassSettings, LapNet, ParamKind, Preset,
};
use crate::tensor::{Shape, Tensor};

pub const FD_STEP: f64 = 1e-5;
pub const TOL_LAYER: f64 = 1e-6;
pub const TOL_LOSS: f64 = 1e-8;
pub const TOL_NET: f64 = 1e-5;

#[derive(Clone, Debug)]
pub struct CheckResult {
    pub name: String,
    pub max_rel_err: f64,
    pub tolerance: f64,
    pub coords_checked: usize,
}

impl CheckResult {
    pub fn passed(&self) -> bool {
        self.max_rel_err < self.tolerance
    }
}

pub fn relative_error(analytic: f64, fd: f64) -> f64 {
    let denom = analytic.abs().max(1.0);
    (analytic - fd).abs() / denom
}

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn random_tensor(shape: Shape, r: &mut ChaCha8Rng) -> Tensor {
    let data = (0..shape.volume())
        .map(|_| r.random_range(-1.0..1.0))
        .collect();
    Tensor::from_vec(shape, data).expect("length matches")
}

/// Random values bounded away from zero, for kinked activations.
fn random_tensor_with_margin(shape: Shape, margin: f64, r: &mut ChaCha8Rng) -> Tensor {
    let data = (0..shape.volume())
        .map(|_| {
            let mag = r.random_range(margin..1.0);
            if r.random_bool(0.5) {
                mag
            } else {
                -mag
            }
        })
        .collect();
    Tensor::from_vec(shape, data).expect("length matches")
}

/// Anything whose gradients can be FD-checked: a forward pass producing one
/// or more outputs, a backward pass accumulating named parameter grads, and
/// mutable access to the parameters.
trait Target {
    fn forward(&mut self, x: &Tensor) -> Vec<Tensor>;
    fn backward(&mut self, x: &Tensor, probes: &[Tensor]) -> (Tensor, GradStore);
    fn visit_params_mut(&mut self, f: &mut dyn FnMut(&str, &mut Tensor, ParamKind));
}

fn probe_loss<T: Target>(target: &mut T, x: &Tensor, probes: &[Tensor]) -> f64 {
    let outs = target.forward(x);
    let mut acc = 0.0;
    for (o, p) in outs.iter().zip(probes) {
        for (a, b) in o.data().iter().zip(p.data()) {
            acc += a * b;
        }
    }
    acc
}

fn add_at<T: Target>(target: &mut T, name: &str, coord: usize, delta: f64) {
    target.visit_params_mut(&mut |n, tensor, _| {
        if n == name {
            tensor.data_mut()[coord] += delta;
        }
    });
}

/// Evenly spread deterministic subsample of `0..len`.
fn sample_coords(len: usize, limit: Option<usize>) -> Vec<usize> {
    match limit {
        Some(limit) if len > limit => (0..limit).map(|i| i * len / limit).collect(),
        _ => (0..len).collect(),
    }
}

fn run_check<T: Target>(
    name: &str,
    target: &mut T,
    x0: &Tensor,
    tolerance: f64,
    input_limit: Option<usize>,
    param_limit: Option<usize>,
    seed: u64,
) -> CheckResult {
    let outs = target.forward(x0);
    let mut prng = rng(seed ^ 0x70726f6265);
    let probes: Vec<Tensor> = outs
        .iter()
        .map(|o| random_tensor(o.shape(), &mut prng))
        .collect();

    let (dx, grads) = target.backward(x0, &probes);
    let mut max_rel = 0.0f64;
    let mut coords = 0usize;

    // input coordinates
    for i in sample_coords(x0.len(), input_limit) {
        let mut xp = x0.clone();
        xp.data_mut()[i] += FD_STEP;
        let lp = probe_loss(target, &xp, &probes);
        xp.data_mut()[i] -= 2.0 * FD_STEP;
        let lm = probe_loss(target, &xp, &probes);
        let fd = (lp - lm) / (2.0 * FD_STEP);
        max_rel = max_rel.max(relative_error(dx.data()[i], fd));
        coords += 1;
    }

    // parameter coordinates
    let mut params: Vec<(String, usize)> = Vec::new();
    target.visit_params_mut(&mut |n, tensor, kind| {
        if kind.trainable() {
            params.push((String::from(n), tensor.len()));
        }
    });
    for (pname, len) in params {
        let analytic = grads
            .get(&pname)
            .map(|g| g.data().to_vec())
            .unwrap_or_else(|| alloc::vec![0.0; len]);
        for i in sample_coords(len, param_limit) {
            add_at(target, &pname, i, FD_STEP);
            let lp = probe_loss(target, x0, &probes);
            add_at(target, &pname, i, -2.0 * FD_STEP);
            let lm = probe_loss(target, x0, &probes);
            add_at(target, &pname, i, FD_STEP);
            let fd = (lp - lm) / (2.0 * FD_STEP);
            max_rel = max_rel.max(relative_error(analytic[i], fd));
            coords += 1;
        }
    }

    CheckResult {
        name: String::from(name),
        max_rel_err: max_rel,
        tolerance,
        coords_checked: coords,
    }
}

// --- adapters --------------------------------------------------------------

struct ConvTarget(ConvNode);

impl Target for ConvTarget {
    fn forward(&mut self, x: &Tensor) -> Vec<Tensor> {
        alloc::vec![self.0.forward(x).expect("valid conv instance")]
    }
    fn backward(&mut self, x: &Tensor, probes: &[Tensor]) -> (Tensor, GradStore) {
        let mut grads = GradStore::new();
        let dx = self.0.backward(x, &probes[0], &mut grads).expect("backward");
        (dx, grads)
    }
    fn visit_params_mut(&mut self, f: &mut dyn FnMut(&str, &mut Tensor, ParamKind)) {
        self.0.visit_mut(f);
    }
}

struct ActTarget(Activation);

impl Target for ActTarget {
    fn forward(&mut self, x: &Tensor) -> Vec<Tensor> {
        alloc::vec![activation_forward(x, self.0)]
    }
    fn backward(&mut self, x: &Tensor, probes: &[Tensor]) -> (Tensor, GradStore) {
        let out = activation_forward(x, self.0);
        let dx = activation_backward(self.0, &out, &probes[0]).expect("backward");
        (dx, GradStore::new())
    }
    fn visit_params_mut(&mut self, _f: &mut dyn FnMut(&str, &mut Tensor, ParamKind)) {}
}

struct BnTarget {
    p: BatchNormParams,
    mode: Mode,
}

impl Target for BnTarget {
    fn forward(&mut self, x: &Tensor) -> Vec<Tensor> {
        let (y, _) = batchnorm_forward_cached(x, &mut self.p, self.mode).expect("bn forward");
        alloc::vec![y]
    }
    fn backward(&mut self, x: &Tensor, probes: &[Tensor]) -> (Tensor, GradStore) {
        let (_, cache) = batchnorm_forward_cached(x, &mut self.p, self.mode).expect("bn forward");
        let (dx, dgamma, dbeta) = batchnorm_backward(&self.p, &cache, &probes[0]).expect("bn bwd");
        let mut grads = GradStore::new();
        grads.accumulate("bn.gamma", dgamma).unwrap();
        grads.accumulate("bn.beta", dbeta).unwrap();
        (dx, grads)
    }
    fn visit_params_mut(&mut self, f: &mut dyn FnMut(&str, &mut Tensor, ParamKind)) {
        f("bn.gamma", &mut self.p.gamma, ParamKind::BnGamma);
        f("bn.beta", &mut self.p.beta, ParamKind::BnBeta);
    }
}

struct PoolTarget;

impl Target for PoolTarget {
    fn forward(&mut self, x: &Tensor) -> Vec<Tensor> {
        alloc::vec![maxpool2d(x).expect("pool").0]
    }
    fn backward(&mut self, x: &Tensor, probes: &[Tensor]) -> (Tensor, GradStore) {
        let (_, arg) = maxpool2d(x).expect("pool");
        let dx = maxpool2d_backward(x.shape(), &arg, &probes[0]).expect("pool bwd");
        (dx, GradStore::new())
    }
    fn visit_params_mut(&mut self, _f: &mut dyn FnMut(&str, &mut Tensor, ParamKind)) {}
}

struct UpsampleTarget;

impl Target for UpsampleTarget {
    fn forward(&mut self, x: &Tensor) -> Vec<Tensor> {
        alloc::vec![upsample_nearest(x)]
    }
    fn backward(&mut self, _x: &Tensor, probes: &[Tensor]) -> (Tensor, GradStore) {
        let dx = upsample_nearest_backward(&probes[0]).expect("upsample bwd");
        (dx, GradStore::new())
    }
    fn visit_params_mut(&mut self, _f: &mut dyn FnMut(&str, &mut Tensor, ParamKind)) {}
}

struct LinearTarget(LinearParams);

impl Target for LinearTarget {
    fn forward(&mut self, x: &Tensor) -> Vec<Tensor> {
        alloc::vec![linear_forward(x, &self.0).expect("linear")]
    }
    fn backward(&mut self, x: &Tensor, probes: &[Tensor]) -> (Tensor, GradStore) {
        let (dx, dw, db) = linear_backward(x, &self.0, &probes[0]).expect("linear bwd");
        let mut grads = GradStore::new();
        grads.accumulate("lin.weight", dw).unwrap();
        if let Some(db) = db {
            grads.accumulate("lin.bias", db).unwrap();
        }
        (dx, grads)
    }
    fn visit_params_mut(&mut self, f: &mut dyn FnMut(&str, &mut Tensor, ParamKind)) {
        f("lin.weight", &mut self.0.weight, ParamKind::LinearWeight);
        if let Some(b) = &mut self.0.bias {
            f("lin.bias", b, ParamKind::Bias);
        }
    }
}

struct ConvBnActTarget(ConvBnAct);

impl Target for ConvBnActTarget {
    fn forward(&mut self, x: &Tensor) -> Vec<Tensor> {
        alloc::vec![self.0.forward_train(x).expect("forward").0]
    }
    fn backward(&mut self, x: &Tensor, probes: &[Tensor]) -> (Tensor, GradStore) {
        let (_, cache) = self.0.forward_train(x).expect("forward");
        let mut grads = GradStore::new();
        let dx = self.0.backward(&cache, &probes[0], &mut grads).expect("bwd");
        (dx, grads)
    }
    fn visit_params_mut(&mut self, f: &mut dyn FnMut(&str, &mut Tensor, ParamKind)) {
        self.0.visit_mut(f);
    }
}

/// Depthwise stage with bn+act, then the pointwise projection.
struct SepConvTarget {
    dw: ConvBnAct,
    pw: ConvNode,
}

impl Target for SepConvTarget {
    fn forward(&mut self, x: &Tensor) -> Vec<Tensor> {
        let (mid, _) = self.dw.forward_train(x).expect("dw");
        alloc::vec![self.pw.forward(&mid).expect("pw")]
    }
    fn backward(&mut self, x: &Tensor, probes: &[Tensor]) -> (Tensor, GradStore) {
        let (mid, cache) = self.dw.forward_train(x).expect("dw");
        let mut grads = GradStore::new();
        let dmid = self.pw.backward(&mid, &probes[0], &mut grads).expect("pw bwd");
        let dx = self.dw.backward(&cache, &dmid, &mut grads).expect("dw bwd");
        (dx, grads)
    }
    fn visit_params_mut(&mut self, f: &mut dyn FnMut(&str, &mut Tensor, ParamKind)) {
        self.dw.visit_mut(f);
        self.pw.visit_mut(f);
    }
}

struct CbamTarget(CbamNode);

impl Target for CbamTarget {
    fn forward(&mut self, x: &Tensor) -> Vec<Tensor> {
        alloc::vec![self.0.forward(x).expect("cbam")]
    }
    fn backward(&mut self, x: &Tensor, probes: &[Tensor]) -> (Tensor, GradStore) {
        let (_, cache) = self.0.forward_cached(x).expect("cbam");
        let mut grads = GradStore::new();
        let dx = self.0.backward(&cache, &probes[0], &mut grads).expect("cbam bwd");
        (dx, grads)
    }
    fn visit_params_mut(&mut self, f: &mut dyn FnMut(&str, &mut Tensor, ParamKind)) {
        self.0.visit_mut(f);
    }
}

struct BottleneckTarget(Bottleneck);

impl Target for BottleneckTarget {
    fn forward(&mut self, x: &Tensor) -> Vec<Tensor> {
        alloc::vec![self.0.forward_train(x).expect("block").0]
    }
    fn backward(&mut self, x: &Tensor, probes: &[Tensor]) -> (Tensor, GradStore) {
        let (_, cache) = self.0.forward_train(x).expect("block");
        let mut grads = GradStore::new();
        let dx = self.0.backward(&cache, &probes[0], &mut grads).expect("block bwd");
        (dx, grads)
    }
    fn visit_params_mut(&mut self, f: &mut dyn FnMut(&str, &mut Tensor, ParamKind)) {
        self.0.visit_mut(f);
    }
}

struct HourglassTarget(Hourglass);

impl Target for HourglassTarget {
    fn forward(&mut self, x: &Tensor) -> Vec<Tensor> {
        alloc::vec![self.0.forward_train(x).expect("hourglass").0]
    }
    fn backward(&mut self, x: &Tensor, probes: &[Tensor]) -> (Tensor, GradStore) {
        let (_, cache) = self.0.forward_train(x).expect("hourglass");
        let mut grads = GradStore::new();
        let dx = self.0.backward(&cache, &probes[0], &mut grads).expect("hg bwd");
        (dx, grads)
    }
    fn visit_params_mut(&mut self, f: &mut dyn FnMut(&str, &mut Tensor, ParamKind)) {
        self.0.visit_mut(f);
    }
}

struct NetTarget(LapNet);

impl Target for NetTarget {
    fn forward(&mut self, x: &Tensor) -> Vec<Tensor> {
        self.0.forward_train(x).expect("net").0
    }
    fn backward(&mut self, x: &Tensor, probes: &[Tensor]) -> (Tensor, GradStore) {
        let (_, cache) = self.0.forward_train(x).expect("net");
        let (dx, grads) = self.0.backward(&cache, probes).expect("net bwd");
        (dx, grads)
    }
    fn visit_params_mut(&mut self, f: &mut dyn FnMut(&str, &mut Tensor, ParamKind)) {
        self.0.visit_mut(f);
    }
}

// --- the suite --------------------------------------------------------------

fn check_mse_loss(seed: u64) -> CheckResult {
    let mut r = rng(seed);
    let shape = Shape::new(2, 3, 4, 4);
    let pred0 = random_tensor(shape, &mut r);
    let gt = random_tensor(shape, &mut r);
    let vis = alloc::vec![
        alloc::vec![true, false, true],
        alloc::vec![true, true, true]
    ];
    let (_, grad) = heatmap::mse_loss(&pred0, &gt, &vis).expect("loss");
    let mut max_rel = 0.0f64;
    for i in 0..pred0.len() {
        let mut p = pred0.clone();
        p.data_mut()[i] += FD_STEP;
        let (lp, _) = heatmap::mse_loss(&p, &gt, &vis).expect("loss");
        p.data_mut()[i] -= 2.0 * FD_STEP;
        let (lm, _) = heatmap::mse_loss(&p, &gt, &vis).expect("loss");
        let fd = (lp - lm) / (2.0 * FD_STEP);
        max_rel = max_rel.max(relative_error(grad.data()[i], fd));
    }
    CheckResult {
        name: String::from("mse_loss"),
        max_rel_err: max_rel,
        tolerance: TOL_LOSS,
        coords_checked: pred0.len(),
    }
}

/// Runs every gradient check. `filter` restricts to checks whose name
/// contains the given substring.
pub fn run_suite(seed: u64, filter: Option<&str>) -> Result<Vec<CheckResult>> {
    let mut results: Vec<CheckResult> = Vec::new();
    let wanted = |name: &str| filter.is_none_or(|f| name.contains(f));
    let mut r = rng(seed);

    if wanted("conv3x3") {
        let node = ConvNode::new("conv".into(), 3, 4, 3, 1, 1, 1, true, &mut r);
        let x = random_tensor(Shape::new(2, 3, 4, 4), &mut r);
        results.push(run_check("conv3x3", &mut ConvTarget(node), &x, TOL_LAYER, None, None, seed));
    }
    if wanted("conv_stride2") {
        let node = ConvNode::new("conv".into(), 2, 3, 3, 2, 1, 1, true, &mut r);
        let x = random_tensor(Shape::new(1, 2, 5, 5), &mut r);
        results.push(run_check(
            "conv_stride2",
            &mut ConvTarget(node),
            &x,
            TOL_LAYER,
            None,
            None,
            seed,
        ));
    }
    if wanted("conv_depthwise") {
        let node = ConvNode::new("conv".into(), 4, 4, 3, 1, 1, 4, true, &mut r);
        let x = random_tensor(Shape::new(2, 4, 4, 4), &mut r);
        results.push(run_check(
            "conv_depthwise",
            &mut ConvTarget(node),
            &x,
            TOL_LAYER,
            None,
            None,
            seed,
        ));
    }
    if wanted("conv_pointwise") {
        let node = ConvNode::new("conv".into(), 4, 2, 1, 1, 0, 1, true, &mut r);
        let x = random_tensor(Shape::new(2, 4, 3, 3), &mut r);
        results.push(run_check(
            "conv_pointwise",
            &mut ConvTarget(node),
            &x,
            TOL_LAYER,
            None,
            None,
            seed,
        ));
    }
    if wanted("batchnorm_train") {
        let mut t = BnTarget {
            p: BatchNormParams::new(3),
            mode: Mode::Train,
        };
        let x = random_tensor(Shape::new(2, 3, 4, 4), &mut r);
        results.push(run_check(
            "batchnorm_train",
            &mut t,
            &x,
            TOL_LAYER,
            None,
            None,
            seed,
        ));
    }
    if wanted("batchnorm_eval") {
        let mut p = BatchNormParams::new(3);
        // non-trivial running stats
        for c in 0..3 {
            p.running_mean.data_mut()[c] = 0.1 * c as f64;
            p.running_var.data_mut()[c] = 0.5 + 0.25 * c as f64;
        }
        let mut t = BnTarget { p, mode: Mode::Eval };
        let x = random_tensor(Shape::new(2, 3, 4, 4), &mut r);
        results.push(run_check(
            "batchnorm_eval",
            &mut t,
            &x,
            TOL_LAYER,
            None,
            None,
            seed,
        ));
    }
    if wanted("conv_bn_act") {
        let cba = ConvBnAct::new("cba", 3, 4, 3, 1, 1, 1, Some(Activation::elu_default()), &mut r);
        let x = random_tensor(Shape::new(2, 3, 4, 4), &mut r);
        results.push(run_check(
            "conv_bn_act",
            &mut ConvBnActTarget(cba),
            &x,
            TOL_LAYER,
            None,
            None,
            seed,
        ));
    }
    if wanted("relu") {
        let x = random_tensor_with_margin(Shape::new(2, 3, 4, 4), 0.05, &mut r);
        results.push(run_check(
            "relu",
            &mut ActTarget(Activation::Relu),
            &x,
            TOL_LAYER,
            None,
            None,
            seed,
        ));
    }
    if wanted("elu") {
        let x = random_tensor(Shape::new(2, 3, 4, 4), &mut r);
        results.push(run_check(
            "elu",
            &mut ActTarget(Activation::elu_default()),
            &x,
            TOL_LAYER,
            None,
            None,
            seed,
        ));
    }
    if wanted("sigmoid") {
        let x = random_tensor(Shape::new(2, 3, 4, 4), &mut r);
        results.push(run_check(
            "sigmoid",
            &mut ActTarget(Activation::Sigmoid),
            &x,
            TOL_LAYER,
            None,
            None,
            seed,
        ));
    }
    if wanted("maxpool") {
        // distinct-jitter ramp keeps window maxima unique under perturbation
        let mut x = random_tensor(Shape::new(2, 2, 4, 4), &mut r);
        for (i, v) in x.data_mut().iter_mut().enumerate() {
            *v += i as f64 * 1e-3;
        }
        results.push(run_check("maxpool", &mut PoolTarget, &x, TOL_LAYER, None, None, seed));
    }
    if wanted("upsample") {
        let x = random_tensor(Shape::new(2, 2, 3, 3), &mut r);
        results.push(run_check(
            "upsample",
            &mut UpsampleTarget,
            &x,
            TOL_LAYER,
            None,
            None,
            seed,
        ));
    }
    if wanted("linear") {
        let p = crate::layers::init_linear(3, 4, &mut r);
        let x = random_tensor(Shape::new(2, 4, 1, 1), &mut r);
        results.push(run_check("linear", &mut LinearTarget(p), &x, TOL_LAYER, None, None, seed));
    }
    if wanted("sepconv") {
        let dw = ConvBnAct::new("dw", 3, 3, 3, 1, 1, 3, Some(Activation::elu_default()), &mut r);
        let pw = ConvNode::new("pw".into(), 3, 4, 1, 1, 0, 1, true, &mut r);
        let x = random_tensor(Shape::new(1, 3, 4, 4), &mut r);
        results.push(run_check(
            "sepconv",
            &mut SepConvTarget { dw, pw },
            &x,
            TOL_LAYER,
            None,
            None,
            seed,
        ));
    }
    if wanted("cbam") {
        let node = CbamNode::new("cbam".into(), 4, 2, false, &mut r)?;
        let x = random_tensor(Shape::new(1, 4, 4, 4), &mut r);
        results.push(run_check("cbam", &mut CbamTarget(node), &x, TOL_LAYER, None, None, seed));
    }
    if wanted("bottleneck_standard") {
        let b = Bottleneck::new(
            "blk".into(),
            BlockKind::Standard,
            3,
            4,
            Activation::elu_default(),
            &mut r,
        );
        let x = random_tensor(Shape::new(1, 3, 4, 4), &mut r);
        results.push(run_check(
            "bottleneck_standard",
            &mut BottleneckTarget(b),
            &x,
            TOL_LAYER,
            None,
            None,
            seed,
        ));
    }
    if wanted("bottleneck_lightweight") {
        let b = Bottleneck::new(
            "blk".into(),
            BlockKind::Lightweight,
            4,
            4,
            Activation::elu_default(),
            &mut r,
        );
        let x = random_tensor(Shape::new(1, 4, 4, 4), &mut r);
        results.push(run_check(
            "bottleneck_lightweight",
            &mut BottleneckTarget(b),
            &x,
            TOL_LAYER,
            None,
            None,
            seed,
        ));
    }
    if wanted("hourglass_depth1") {
        let s = HourglassSettings {
            channels: 4,
            blocks_per_level: 1,
            block_kind: BlockKind::Lightweight,
            activation: Activation::elu_default(),
            attention_inside: true,
            reduction_ratio: 2,
        };
        let hg = Hourglass::new("hg", 1, 0, s, &mut r)?;
        let x = random_tensor(Shape::new(1, 4, 4, 4), &mut r);
        results.push(run_check(
            "hourglass_depth1",
            &mut HourglassTarget(hg),
            &x,
            TOL_LAYER,
            None,
            None,
            seed,
        ));
    }
    if wanted("mse_loss") {
        results.push(check_mse_loss(seed));
    }
    if wanted("toy_net") {
        let cfg = build_lap_config(Preset::Toy);
        let net = build_network(&cfg, seed ^ 0xA5A5)?;
        let x = {
            let mut xr = rng(seed ^ 0x1111);
            let shape = Shape::new(1, 3, cfg.input_h, cfg.input_w);
            let data = (0..shape.volume())
                .map(|_| xr.random_range(0.0..1.0))
                .collect();
            Tensor::from_vec(shape, data).expect("length matches")
        };
        results.push(run_check(
            "toy_net_end_to_end",
            &mut NetTarget(net),
            &x,
            TOL_NET,
            Some(48),
            Some(2),
            seed,
        ));
    }
    Ok(results)
}
