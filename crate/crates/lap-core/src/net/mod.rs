//! Network assembly: bottleneck residual blocks, the recursive hourglass,
//! and the full multi-stack model with intermediate supervision heads.

mod blocks;
mod config;
mod hourglass;
mod network;

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub use blocks::{Bottleneck, BottleneckCache, CbamNode, ConvBnAct, ConvBnActCache, ConvNode};
pub use config::{
    build_lap_config, parse_bool, parse_f64, parse_key_values, parse_usize, BlockKind,
    NetworkConfig, Preset,
};
pub use hourglass::{Hourglass, HourglassCache, HourglassSettings};
pub use network::{build_network, LapNet, NetCache, Stack};

/// What a visited parameter tensor is, so callers can count, itemize, or
/// filter buffers from trainables.
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum ParamKind {
    ConvWeight,
    LinearWeight,
    Bias,
    BnGamma,
    BnBeta,
    BnRunningMean,
    BnRunningVar,
}

impl ParamKind {
    /// Running statistics are buffers, not trainable parameters.
    pub fn trainable(self) -> bool {
        !matches!(self, ParamKind::BnRunningMean | ParamKind::BnRunningVar)
    }
}

/// Gradient accumulator keyed by parameter name. Accumulation sums, so
/// parameters used several times per step (the shared attention MLP, stacked
/// reuse) collect their full gradient.
#[derive(Default, Debug)]
pub struct GradStore {
    map: BTreeMap<String, Tensor>,
}

impl GradStore {
    pub fn new() -> Self {
        GradStore {
            map: BTreeMap::new(),
        }
    }

    pub fn accumulate(&mut self, name: &str, grad: Tensor) -> Result<()> {
        match self.map.get_mut(name) {
            Some(existing) => {
                if existing.shape() != grad.shape() {
                    return Err(Error::ShapeMismatch {
                        expected: existing.shape(),
                        got: grad.shape(),
                    });
                }
                existing.add_assign(&grad)
            }
            None => {
                self.map.insert(String::from(name), grad);
                Ok(())
            }
        }
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.map.get(name)
    }

    pub fn len(&self) -> usize {
        self.map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }

    pub fn names(&self) -> Vec<&str> {
        self.map.keys().map(|s| s.as_str()).collect()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor)> {
        self.map.iter().map(|(k, v)| (k.as_str(), v))
    }
}
