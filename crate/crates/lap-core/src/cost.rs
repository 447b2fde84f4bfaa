//! Analytic parameter and FLOP accounting.
//!
//! A FLOP here is one multiply-accumulate of a convolution or linear kernel
//! element, which is the unit the reduction figures are quoted in. Counts
//! are exact integers end to end. Elementwise work (activations, gating,
//! residual adds, pooling, biases) is excluded from FLOP totals unless
//! `include_elementwise` is set, in which case it is itemized with its own
//! row kind.
//!
//! Parameter totals include everything trainable: conv weights follow the
//! closed-form products, while biases, batch-norm affines, and linear
//! weights are itemized separately so the conv-only figures stay visible.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::layers::{ConvParams, LinearParams};
use crate::net::{build_network, NetworkConfig};

/// Parameters of a standard convolution: `Dk * Dk * Cin * Cout`.
pub fn params_standard(d_k: u64, c_in: u64, c_out: u64) -> u64 {
    d_k * d_k * c_in * c_out
}

/// Parameters of a depthwise-separable pair:
/// `Dk * Dk * Cin + 1 * 1 * Cin * Cout`.
pub fn params_depthwise_separable(d_k: u64, c_in: u64, c_out: u64) -> u64 {
    d_k * d_k * c_in + c_in * c_out
}

/// FLOPs of a standard convolution on a square `K x K` output map:
/// `K * K * Cin * Cout * Dk * Dk`.
pub fn flops_standard(k: u64, d_k: u64, c_in: u64, c_out: u64) -> u64 {
    k * k * c_in * c_out * d_k * d_k
}

/// FLOPs of a depthwise-separable pair in factored form:
/// `K^2 * Cin * (Cout + Dk^2)`.
pub fn flops_depthwise_separable(k: u64, d_k: u64, c_in: u64, c_out: u64) -> u64 {
    k * k * c_in * (c_out + d_k * d_k)
}

/// The same quantity as the explicit two-stage sum `F_sum + F_p`, kept as a
/// separate route so the factored form can be checked against it.
pub fn flops_depthwise_separable_sum(k: u64, d_k: u64, c_in: u64, c_out: u64) -> u64 {
    let f_sum = k * k * c_in * d_k * d_k;
    let f_p = k * k * c_in * c_out;
    f_sum + f_p
}

/// Kind tag for a cost row.
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum LayerKind {
    Conv,
    DepthwiseConv,
    PointwiseConv,
    BatchNorm,
    Linear,
    Bias,
    Elementwise,
}

impl LayerKind {
    pub fn as_str(self) -> &'static str {
        match self {
            LayerKind::Conv => "conv",
            LayerKind::DepthwiseConv => "depthwise_conv",
            LayerKind::PointwiseConv => "pointwise_conv",
            LayerKind::BatchNorm => "batch_norm",
            LayerKind::Linear => "linear",
            LayerKind::Bias => "bias",
            LayerKind::Elementwise => "elementwise",
        }
    }
}

/// One itemized row of the report.
#[derive(Clone, Debug)]
pub struct LayerCost {
    pub name: String,
    pub kind: LayerKind,
    pub params: u64,
    pub flops: u64,
}

/// Accumulator the network components feed while the structure is walked in
/// forward order. Spatial dims are tracked alongside so per-layer FLOPs use
/// each layer's actual output map.
pub struct CostAcc {
    pub include_elementwise: bool,
    pub layers: Vec<LayerCost>,
}

impl CostAcc {
    pub fn new(include_elementwise: bool) -> Self {
        CostAcc {
            include_elementwise,
            layers: Vec::new(),
        }
    }

    fn push(&mut self, name: &str, kind: LayerKind, params: u64, flops: u64) {
        self.layers.push(LayerCost {
            name: String::from(name),
            kind,
            params,
            flops,
        });
    }

    /// Registers a convolution; returns its output spatial dims.
    pub fn conv(&mut self, name: &str, p: &ConvParams, hw: (usize, usize)) -> (usize, usize) {
        let k = p.kernel_size();
        let oh = (hw.0 + 2 * p.padding - k) / p.stride + 1;
        let ow = (hw.1 + 2 * p.padding - k) / p.stride + 1;
        let (c_out, c_in_pg) = (p.c_out() as u64, (p.c_in() / p.groups) as u64);
        let kk = (k * k) as u64;
        let weight_params = c_out * c_in_pg * kk;
        let flops = (oh * ow) as u64 * c_out * c_in_pg * kk;
        let kind = if p.is_depthwise() {
            LayerKind::DepthwiseConv
        } else if p.is_pointwise() {
            LayerKind::PointwiseConv
        } else {
            LayerKind::Conv
        };
        self.push(name, kind, weight_params, flops);
        if p.bias.is_some() {
            let bias_flops = if self.include_elementwise {
                (oh * ow) as u64 * c_out
            } else {
                0
            };
            self.push(&format!("{name}.bias"), LayerKind::Bias, c_out, bias_flops);
        }
        (oh, ow)
    }

    pub fn bn(&mut self, name: &str, channels: usize, hw: (usize, usize)) {
        let flops = if self.include_elementwise {
            2 * (channels * hw.0 * hw.1) as u64
        } else {
            0
        };
        self.push(name, LayerKind::BatchNorm, 2 * channels as u64, flops);
    }

    /// `applications` is how many times the layer runs per forward pass
    /// (the shared attention MLP runs twice).
    pub fn linear(&mut self, name: &str, p: &LinearParams, applications: u64) {
        let (of, inf) = (p.out_features() as u64, p.in_features() as u64);
        self.push(name, LayerKind::Linear, of * inf, applications * of * inf);
        if p.bias.is_some() {
            let bias_flops = if self.include_elementwise {
                applications * of
            } else {
                0
            };
            self.push(&format!("{name}.bias"), LayerKind::Bias, of, bias_flops);
        }
    }

    pub fn activation(&mut self, name: &str, channels: usize, hw: (usize, usize)) {
        if self.include_elementwise {
            let n = (channels * hw.0 * hw.1) as u64;
            self.push(name, LayerKind::Elementwise, 0, n);
        }
    }

    pub fn residual_add(&mut self, name: &str, channels: usize, hw: (usize, usize)) {
        if self.include_elementwise {
            let n = (channels * hw.0 * hw.1) as u64;
            self.push(name, LayerKind::Elementwise, 0, n);
        }
    }

    /// Pooling, gating products, and squashing around one attention block.
    pub fn attention_gating(&mut self, name: &str, channels: usize, hw: (usize, usize)) {
        if self.include_elementwise {
            let chw = (channels * hw.0 * hw.1) as u64;
            let n = 6 * chw + channels as u64 + (hw.0 * hw.1) as u64;
            self.push(name, LayerKind::Elementwise, 0, n);
        }
    }

    /// 2x2 max pooling: three comparisons per output element.
    pub fn pool(&mut self, name: &str, channels: usize, hw_in: (usize, usize)) -> (usize, usize) {
        let out = (hw_in.0 / 2, hw_in.1 / 2);
        if self.include_elementwise {
            let n = 3 * (channels * out.0 * out.1) as u64;
            self.push(name, LayerKind::Elementwise, 0, n);
        }
        out
    }

    /// Nearest-neighbour upsampling is pure replication.
    pub fn upsample(&mut self, hw_in: (usize, usize)) -> (usize, usize) {
        (hw_in.0 * 2, hw_in.1 * 2)
    }
}

/// Aggregated report with itemized subtotals.
#[derive(Clone, Debug)]
pub struct CostReport {
    pub label: String,
    pub layers: Vec<LayerCost>,
    pub total_params: u64,
    pub total_flops: u64,
    pub conv_weight_params: u64,
    pub bias_params: u64,
    pub bn_params: u64,
    pub linear_params: u64,
    pub include_elementwise: bool,
}

impl CostReport {
    pub fn from_layers(label: &str, layers: Vec<LayerCost>, include_elementwise: bool) -> Self {
        let mut report = CostReport {
            label: String::from(label),
            total_params: 0,
            total_flops: 0,
            conv_weight_params: 0,
            bias_params: 0,
            bn_params: 0,
            linear_params: 0,
            include_elementwise,
            layers,
        };
        for row in &report.layers {
            report.total_params += row.params;
            report.total_flops += row.flops;
            match row.kind {
                LayerKind::Conv | LayerKind::DepthwiseConv | LayerKind::PointwiseConv => {
                    report.conv_weight_params += row.params
                }
                LayerKind::Bias => report.bias_params += row.params,
                LayerKind::BatchNorm => report.bn_params += row.params,
                LayerKind::Linear => report.linear_params += row.params,
                LayerKind::Elementwise => {}
            }
        }
        report
    }

    /// Machine-readable structured text: one record per layer, then totals.
    pub fn to_machine_text(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!("report {}\n", self.label));
        for row in &self.layers {
            out.push_str(&format!(
                "layer {} {} {} {}\n",
                row.name,
                row.kind.as_str(),
                row.params,
                row.flops
            ));
        }
        out.push_str(&format!("total_params {}\n", self.total_params));
        out.push_str(&format!("total_flops {}\n", self.total_flops));
        out.push_str(&format!("conv_weight_params {}\n", self.conv_weight_params));
        out.push_str(&format!("bias_params {}\n", self.bias_params));
        out.push_str(&format!("bn_params {}\n", self.bn_params));
        out.push_str(&format!("linear_params {}\n", self.linear_params));
        out
    }

    /// Human-readable summary table.
    pub fn to_table(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!("cost report: {}\n", self.label));
        out.push_str(&format!(
            "{:<44} {:>14} {:>16}  kind\n",
            "layer", "params", "flops"
        ));
        for row in &self.layers {
            out.push_str(&format!(
                "{:<44} {:>14} {:>16}  {}\n",
                row.name,
                row.params,
                row.flops,
                row.kind.as_str()
            ));
        }
        out.push_str(&format!(
            "totals: params {} ({:.3}M), flops {} ({:.3}G)\n",
            self.total_params,
            self.total_params as f64 / 1e6,
            self.total_flops,
            self.total_flops as f64 / 1e9
        ));
        out.push_str(&format!(
            "itemized params: conv weights {}, biases {}, batch norm {}, linear {}\n",
            self.conv_weight_params, self.bias_params, self.bn_params, self.linear_params
        ));
        out
    }
}

/// Walks every layer of the network the config describes and counts with
/// the closed-form expressions. The parameter total equals an enumeration
/// of the instantiated trainable scalars exactly.
pub fn count_network(config: &NetworkConfig) -> Result<CostReport> {
    count_network_with(config, config.input_h, config.input_w, false)
}

pub fn count_network_with(
    config: &NetworkConfig,
    input_h: usize,
    input_w: usize,
    include_elementwise: bool,
) -> Result<CostReport> {
    let mut cfg = config.clone();
    cfg.input_h = input_h;
    cfg.input_w = input_w;
    cfg.validate()?;
    // weight values are irrelevant for counting; seed 0 keeps this cheap and
    // deterministic
    let net = build_network(&cfg, 0)?;
    let mut acc = CostAcc::new(include_elementwise);
    net.cost(&mut acc);
    Ok(CostReport::from_layers(
        &format!("{}x{} input", input_h, input_w),
        acc.layers,
        include_elementwise,
    ))
}

/// Reduction percentages of `ours` against `baseline`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Comparison {
    pub param_reduction_pct: f64,
    pub flop_reduction_pct: f64,
}

pub fn reduction_percent(ours: u64, baseline: u64) -> Result<f64> {
    if baseline == 0 {
        return Err(Error::ZeroBaseline);
    }
    Ok(100.0 * (1.0 - ours as f64 / baseline as f64))
}

pub fn compare(ours: &CostReport, baseline: &CostReport) -> Result<Comparison> {
    compare_totals(
        ours.total_params,
        ours.total_flops,
        baseline.total_params,
        baseline.total_flops,
    )
}

pub fn compare_totals(
    our_params: u64,
    our_flops: u64,
    base_params: u64,
    base_flops: u64,
) -> Result<Comparison> {
    Ok(Comparison {
        param_reduction_pct: reduction_percent(our_params, base_params)?,
        flop_reduction_pct: reduction_percent(our_flops, base_flops)?,
    })
}

impl Comparison {
    /// The comparison block as printed by the `analyze` command, two
    /// decimals as reported.
    pub fn format_block(&self) -> String {
        format!(
            "param_reduction_pct {:.2}\nflop_reduction_pct {:.2}\n",
            self.param_reduction_pct, self.flop_reduction_pct
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::net::{build_lap_config, Preset};

    #[test]
    fn formula_values() {
        assert_eq!(params_standard(3, 64, 128), 73_728);
        assert_eq!(params_depthwise_separable(3, 64, 128), 8_768);
        assert_eq!(params_depthwise_separable(3, 64, 128), 576 + 8_192);
        assert_eq!(flops_standard(56, 3, 64, 128), 231_211_008);
        assert_eq!(flops_depthwise_separable(56, 3, 64, 128), 27_496_448);
        assert_eq!(flops_depthwise_separable(56, 3, 64, 128), 3136 * 64 * 137);
        assert_eq!(
            flops_depthwise_separable_sum(56, 3, 64, 128),
            1_806_336 + 25_690_112
        );
    }

    #[test]
    fn pointwise_special_cases() {
        let c = 24;
        assert_eq!(params_standard(1, c, c), c * c);
        assert_eq!(params_depthwise_separable(1, c, c), c + c * c);
        assert_eq!(flops_standard(1, 1, 1, 1), 1);
        assert_eq!(flops_depthwise_separable(9, 1, c, c), 81 * c * (c + 1));
    }

    #[test]
    fn doubling_c_out_doubles_standard_flops() {
        assert_eq!(
            flops_standard(14, 3, 32, 128),
            2 * flops_standard(14, 3, 32, 64)
        );
    }

    #[test]
    fn factored_equals_two_term_sum_everywhere() {
        for k in [1u64, 3, 7, 14, 56, 97] {
            for d_k in [1u64, 3, 5, 7] {
                for c_in in [1u64, 3, 64, 255] {
                    for c_out in [1u64, 17, 128] {
                        assert_eq!(
                            flops_depthwise_separable(k, d_k, c_in, c_out),
                            flops_depthwise_separable_sum(k, d_k, c_in, c_out)
                        );
                    }
                }
            }
        }
    }

    #[test]
    fn separable_is_smaller_and_ratio_matches() {
        // N_D / N_S = 1/C_out + 1/Dk^2, exactly as rationals
        let (d_k, c_in, c_out) = (3u64, 64u64, 128u64);
        let nd = params_depthwise_separable(d_k, c_in, c_out);
        let ns = params_standard(d_k, c_in, c_out);
        assert!(nd < ns);
        let ratio = nd as f64 / ns as f64;
        let expect = 1.0 / c_out as f64 + 1.0 / (d_k * d_k) as f64;
        assert!((ratio - expect).abs() < 1e-12);

        let fd = flops_depthwise_separable(56, d_k, c_in, c_out);
        let fs = flops_standard(56, d_k, c_in, c_out);
        assert!(fd < fs);
        assert!((fd as f64 / fs as f64 - expect).abs() < 1e-12);
    }

    #[test]
    fn reduction_percentages() {
        assert!((reduction_percent(2_300_000, 6_700_000).unwrap() - 65.67164).abs() < 1e-3);
        let c = compare_totals(2_300_000, 3_700_000_000, 6_700_000, 9_080_000_000).unwrap();
        assert_eq!(c.format_block(), "param_reduction_pct 65.67\nflop_reduction_pct 59.25\n");
        assert_eq!(reduction_percent(5, 5).unwrap(), 0.0);
        assert_eq!(reduction_percent(1, 0), Err(Error::ZeroBaseline));
    }

    #[test]
    fn lap2_is_lighter_than_the_standard_baseline() {
        let ours = count_network(&build_lap_config(Preset::Lap2)).unwrap();
        let base = count_network(&build_lap_config(Preset::Hourglass2Standard)).unwrap();
        assert!(ours.total_params < base.total_params);
        assert!(ours.total_flops < base.total_flops);
    }

    #[test]
    fn toy_preset_is_under_100k_params() {
        let r = count_network(&build_lap_config(Preset::Toy)).unwrap();
        assert!(r.total_params < 100_000, "toy params = {}", r.total_params);
    }

    #[test]
    fn swapping_lightweight_for_standard_increases_params() {
        use crate::net::BlockKind;
        let mut cfg = build_lap_config(Preset::Toy);
        let light = count_network(&cfg).unwrap().total_params;
        cfg.block_kind = BlockKind::Standard;
        let standard = count_network(&cfg).unwrap().total_params;
        assert!(light < standard);
    }

    #[test]
    fn elementwise_flag_only_adds_flops() {
        let cfg = build_lap_config(Preset::Toy);
        let plain = count_network(&cfg).unwrap();
        let with =
            count_network_with(&cfg, cfg.input_h, cfg.input_w, true).unwrap();
        assert_eq!(plain.total_params, with.total_params);
        assert!(with.total_flops > plain.total_flops);
    }
}
