//! Dense rank-4 tensor storage.
//!
//! Layout is fixed: row-major `(N, C, H, W)` over a contiguous `f64` buffer.
//! There are no strided views; every operation produces a fresh tensor.
//! Broadcasting is deliberately restricted to the two gate shapes the
//! attention module needs (per-channel `N x C x 1 x 1` / `1 x C x 1 x 1`
//! and per-pixel `N x 1 x H x W`).

use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use crate::error::{Error, Result};

/// Dimensions of a rank-4 tensor: batch, channels, height, width.
#[derive(Clone, Copy, PartialEq, Eq, Debug, Hash)]
pub struct Shape {
    pub n: usize,
    pub c: usize,
    pub h: usize,
    pub w: usize,
}

impl Shape {
    pub const fn new(n: usize, c: usize, h: usize, w: usize) -> Self {
        Shape { n, c, h, w }
    }

    /// Total number of elements.
    pub const fn volume(&self) -> usize {
        self.n * self.c * self.h * self.w
    }

    /// Elements per batch item.
    pub const fn per_sample(&self) -> usize {
        self.c * self.h * self.w
    }
}

impl fmt::Display for Shape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {}, {}, {})", self.n, self.c, self.h, self.w)
    }
}

/// Dense rank-4 tensor of `f64` values.
#[derive(Clone, PartialEq)]
pub struct Tensor {
    shape: Shape,
    data: Vec<f64>,
}

impl fmt::Debug for Tensor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Tensor{} ", self.shape)?;
        if self.data.len() <= 16 {
            write!(f, "{:?}", self.data)
        } else {
            write!(f, "[{} values]", self.data.len())
        }
    }
}

/// Axes a reduction collapses.
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum ReduceAxes {
    /// Collapse H and W; output is `N x C x 1 x 1`.
    Spatial,
    /// Collapse C; output is `N x 1 x H x W`.
    Channel,
}

#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum ReduceMode {
    Mean,
    Max,
}

impl Tensor {
    pub fn zeros(shape: Shape) -> Self {
        Tensor {
            shape,
            data: vec![0.0; shape.volume()],
        }
    }

    pub fn filled(shape: Shape, value: f64) -> Self {
        Tensor {
            shape,
            data: vec![value; shape.volume()],
        }
    }

    pub fn ones(shape: Shape) -> Self {
        Self::filled(shape, 1.0)
    }

    /// Wraps an existing buffer; the length must match the shape volume.
    pub fn from_vec(shape: Shape, data: Vec<f64>) -> Result<Self> {
        if data.len() != shape.volume() {
            return Err(Error::DataLength {
                expected: shape.volume(),
                got: data.len(),
            });
        }
        Ok(Tensor { shape, data })
    }

    pub fn shape(&self) -> Shape {
        self.shape
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    /// Flat index of `(n, c, h, w)`.
    #[inline]
    pub fn idx(&self, n: usize, c: usize, h: usize, w: usize) -> usize {
        ((n * self.shape.c + c) * self.shape.h + h) * self.shape.w + w
    }

    #[inline]
    pub fn at(&self, n: usize, c: usize, h: usize, w: usize) -> f64 {
        self.data[self.idx(n, c, h, w)]
    }

    #[inline]
    pub fn set(&mut self, n: usize, c: usize, h: usize, w: usize, v: f64) {
        let i = self.idx(n, c, h, w);
        self.data[i] = v;
    }

    /// Contiguous `(h, w)` plane of one `(n, c)` slot.
    pub fn plane(&self, n: usize, c: usize) -> &[f64] {
        let hw = self.shape.h * self.shape.w;
        let start = (n * self.shape.c + c) * hw;
        &self.data[start..start + hw]
    }

    pub fn plane_mut(&mut self, n: usize, c: usize) -> &mut [f64] {
        let hw = self.shape.h * self.shape.w;
        let start = (n * self.shape.c + c) * hw;
        &mut self.data[start..start + hw]
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Tensor {
        Tensor {
            shape: self.shape,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn scale(&self, s: f64) -> Tensor {
        self.map(|v| v * s)
    }

    /// Elementwise sum; shapes must be equal.
    pub fn add(&self, other: &Tensor) -> Result<Tensor> {
        if self.shape != other.shape {
            return Err(Error::ShapeMismatch {
                expected: self.shape,
                got: other.shape,
            });
        }
        let data = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| a + b)
            .collect();
        Ok(Tensor {
            shape: self.shape,
            data,
        })
    }

    /// Elementwise difference; shapes must be equal.
    pub fn sub(&self, other: &Tensor) -> Result<Tensor> {
        if self.shape != other.shape {
            return Err(Error::ShapeMismatch {
                expected: self.shape,
                got: other.shape,
            });
        }
        let data = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| a - b)
            .collect();
        Ok(Tensor {
            shape: self.shape,
            data,
        })
    }

    /// In-place `self += other` for equal shapes.
    pub fn add_assign(&mut self, other: &Tensor) -> Result<()> {
        if self.shape != other.shape {
            return Err(Error::ShapeMismatch {
                expected: self.shape,
                got: other.shape,
            });
        }
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
        Ok(())
    }

    /// Elementwise product, allowing the two gate broadcasts: `b` may have
    /// the same shape as `self`, a channel-gate shape (`N x C x 1 x 1` or
    /// `1 x C x 1 x 1`), or a spatial-gate shape (`N x 1 x H x W`).
    /// The output always has `self`'s shape.
    pub fn elementwise_mul(&self, b: &Tensor) -> Result<Tensor> {
        let s = self.shape;
        let bs = b.shape;
        let mut out = self.clone();
        if bs == s {
            for (o, g) in out.data.iter_mut().zip(&b.data) {
                *o *= g;
            }
            return Ok(out);
        }
        // channel gate: one scalar per (n, c) slot
        if bs.c == s.c && bs.h == 1 && bs.w == 1 && (bs.n == s.n || bs.n == 1) {
            for n in 0..s.n {
                let bn = if bs.n == 1 { 0 } else { n };
                for c in 0..s.c {
                    let g = b.at(bn, c, 0, 0);
                    for v in out.plane_mut(n, c) {
                        *v *= g;
                    }
                }
            }
            return Ok(out);
        }
        // spatial gate: one map shared by all channels of each sample
        if bs.n == s.n && bs.c == 1 && bs.h == s.h && bs.w == s.w {
            for n in 0..s.n {
                let gate = b.plane(n, 0).to_vec();
                for c in 0..s.c {
                    for (v, g) in out.plane_mut(n, c).iter_mut().zip(&gate) {
                        *v *= g;
                    }
                }
            }
            return Ok(out);
        }
        Err(Error::ShapeMismatch {
            expected: s,
            got: bs,
        })
    }

    /// Reduction over the spatial axes or the channel axis.
    pub fn reduce(&self, axes: ReduceAxes, mode: ReduceMode) -> Result<Tensor> {
        let s = self.shape;
        match axes {
            ReduceAxes::Spatial => {
                if s.h * s.w == 0 {
                    return Err(Error::EmptyReduction);
                }
                let mut out = Tensor::zeros(Shape::new(s.n, s.c, 1, 1));
                for n in 0..s.n {
                    for c in 0..s.c {
                        let plane = self.plane(n, c);
                        let v = match mode {
                            ReduceMode::Mean => {
                                plane.iter().sum::<f64>() / (s.h * s.w) as f64
                            }
                            ReduceMode::Max => {
                                plane.iter().copied().fold(f64::NEG_INFINITY, f64::max)
                            }
                        };
                        out.set(n, c, 0, 0, v);
                    }
                }
                Ok(out)
            }
            ReduceAxes::Channel => {
                if s.c == 0 {
                    return Err(Error::EmptyReduction);
                }
                let mut out = Tensor::zeros(Shape::new(s.n, 1, s.h, s.w));
                let hw = s.h * s.w;
                for n in 0..s.n {
                    let acc = out.plane_mut(n, 0);
                    match mode {
                        ReduceMode::Mean => {
                            for c in 0..s.c {
                                let start = (n * s.c + c) * hw;
                                for (a, v) in
                                    acc.iter_mut().zip(&self.data[start..start + hw])
                                {
                                    *a += v;
                                }
                            }
                            for a in acc.iter_mut() {
                                *a /= s.c as f64;
                            }
                        }
                        ReduceMode::Max => {
                            acc.fill(f64::NEG_INFINITY);
                            for c in 0..s.c {
                                let start = (n * s.c + c) * hw;
                                for (a, v) in
                                    acc.iter_mut().zip(&self.data[start..start + hw])
                                {
                                    *a = a.max(*v);
                                }
                            }
                        }
                    }
                }
                Ok(out)
            }
        }
    }

    /// Like `reduce(Spatial, Max)` but also reports the flat plane index of
    /// each maximum (first occurrence in row-major order).
    pub fn spatial_max_with_arg(&self) -> Result<(Tensor, Vec<usize>)> {
        let s = self.shape;
        if s.h * s.w == 0 {
            return Err(Error::EmptyReduction);
        }
        let mut out = Tensor::zeros(Shape::new(s.n, s.c, 1, 1));
        let mut args = Vec::with_capacity(s.n * s.c);
        for n in 0..s.n {
            for c in 0..s.c {
                let plane = self.plane(n, c);
                let mut best = plane[0];
                let mut arg = 0usize;
                for (i, &v) in plane.iter().enumerate().skip(1) {
                    if v > best {
                        best = v;
                        arg = i;
                    }
                }
                out.set(n, c, 0, 0, best);
                args.push(arg);
            }
        }
        Ok((out, args))
    }

    /// Like `reduce(Channel, Max)` but also reports the winning channel per
    /// pixel (lowest channel index on ties).
    pub fn channel_max_with_arg(&self) -> Result<(Tensor, Vec<usize>)> {
        let s = self.shape;
        if s.c == 0 {
            return Err(Error::EmptyReduction);
        }
        let hw = s.h * s.w;
        let mut out = Tensor::zeros(Shape::new(s.n, 1, s.h, s.w));
        let mut args = vec![0usize; s.n * hw];
        for n in 0..s.n {
            {
                let first = self.plane(n, 0).to_vec();
                out.plane_mut(n, 0).copy_from_slice(&first);
            }
            for c in 1..s.c {
                let start = (n * s.c + c) * hw;
                let acc = out.plane_mut(n, 0);
                for (i, (a, v)) in acc
                    .iter_mut()
                    .zip(&self.data[start..start + hw])
                    .enumerate()
                {
                    if *v > *a {
                        *a = *v;
                        args[n * hw + i] = c;
                    }
                }
            }
        }
        Ok((out, args))
    }

    pub fn min_value(&self) -> f64 {
        self.data.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max_value(&self) -> f64 {
        self.data.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn mean(&self) -> f64 {
        if self.data.is_empty() {
            return 0.0;
        }
        self.data.iter().sum::<f64>() / self.data.len() as f64
    }

    pub fn sum(&self) -> f64 {
        self.data.iter().sum()
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn t(n: usize, c: usize, h: usize, w: usize, data: &[f64]) -> Tensor {
        Tensor::from_vec(Shape::new(n, c, h, w), data.to_vec()).unwrap()
    }

    #[test]
    fn from_vec_rejects_bad_length() {
        let err = Tensor::from_vec(Shape::new(1, 1, 2, 2), vec![1.0; 3]).unwrap_err();
        assert_eq!(
            err,
            Error::DataLength {
                expected: 4,
                got: 3
            }
        );
    }

    #[test]
    fn mul_constant_channel_gate() {
        let a = Tensor::ones(Shape::new(1, 2, 2, 2));
        let gate = t(1, 2, 1, 1, &[0.5, 0.5]);
        let out = a.elementwise_mul(&gate).unwrap();
        assert!(out.data().iter().all(|&v| v == 0.5));
        assert_eq!(out.shape(), a.shape());
    }

    #[test]
    fn mul_ones_is_identity() {
        let a = t(1, 1, 2, 2, &[1.5, -2.25, 0.0, 7.125]);
        let out = a.elementwise_mul(&Tensor::ones(a.shape())).unwrap();
        assert_eq!(out.data(), a.data());
    }

    #[test]
    fn mul_spatial_gate_hand_case() {
        // a = (1,2;3,4) single channel, gate = (0,1;1,0) -> (0,2;3,0)
        let a = t(1, 1, 2, 2, &[1.0, 2.0, 3.0, 4.0]);
        let gate = t(1, 1, 2, 2, &[0.0, 1.0, 1.0, 0.0]);
        let out = a.elementwise_mul(&gate).unwrap();
        assert_eq!(out.data(), &[0.0, 2.0, 3.0, 0.0]);
    }

    #[test]
    fn mul_rejects_other_shapes() {
        let a = Tensor::ones(Shape::new(1, 2, 2, 2));
        let b = Tensor::ones(Shape::new(1, 2, 2, 1));
        let err = a.elementwise_mul(&b).unwrap_err();
        assert_eq!(
            err,
            Error::ShapeMismatch {
                expected: Shape::new(1, 2, 2, 2),
                got: Shape::new(1, 2, 2, 1)
            }
        );
    }

    #[test]
    fn reduce_spatial_mean_hand_case() {
        let a = t(1, 1, 2, 2, &[1.0, 2.0, 3.0, 4.0]);
        let m = a.reduce(ReduceAxes::Spatial, ReduceMode::Mean).unwrap();
        assert_eq!(m.shape(), Shape::new(1, 1, 1, 1));
        assert_eq!(m.at(0, 0, 0, 0), 2.5);
    }

    #[test]
    fn reduce_channel_max_hand_case() {
        // channels [1-map, 3-map] -> 3 everywhere
        let a = t(1, 2, 1, 2, &[1.0, 1.0, 3.0, 3.0]);
        let m = a.reduce(ReduceAxes::Channel, ReduceMode::Max).unwrap();
        assert_eq!(m.shape(), Shape::new(1, 1, 1, 2));
        assert_eq!(m.data(), &[3.0, 3.0]);
    }

    #[test]
    fn reduce_channel_mean_pixelwise() {
        // channels [(0,2),(4,6)] -> (2,4)
        let a = t(1, 2, 1, 2, &[0.0, 2.0, 4.0, 6.0]);
        let m = a.reduce(ReduceAxes::Channel, ReduceMode::Mean).unwrap();
        assert_eq!(m.data(), &[2.0, 4.0]);
    }

    #[test]
    fn reduce_empty_domain_errors() {
        let a = Tensor::zeros(Shape::new(1, 1, 0, 2));
        assert_eq!(
            a.reduce(ReduceAxes::Spatial, ReduceMode::Mean).unwrap_err(),
            Error::EmptyReduction
        );
        let b = Tensor::zeros(Shape::new(1, 0, 2, 2));
        assert_eq!(
            b.reduce(ReduceAxes::Channel, ReduceMode::Max).unwrap_err(),
            Error::EmptyReduction
        );
    }

    #[test]
    fn spatial_max_arg_prefers_first() {
        let a = t(1, 1, 2, 2, &[5.0, 5.0, 1.0, 5.0]);
        let (m, args) = a.spatial_max_with_arg().unwrap();
        assert_eq!(m.at(0, 0, 0, 0), 5.0);
        assert_eq!(args, vec![0]);
    }

    fn small_tensor() -> impl Strategy<Value = Tensor> {
        (1usize..3, 1usize..4, 1usize..4, 1usize..4).prop_flat_map(|(n, c, h, w)| {
            let len = n * c * h * w;
            proptest::collection::vec(-10.0f64..10.0, len).prop_map(move |data| {
                Tensor::from_vec(Shape::new(n, c, h, w), data).unwrap()
            })
        })
    }

    proptest! {
        #[test]
        fn prop_mul_ones_identity(a in small_tensor()) {
            let out = a.elementwise_mul(&Tensor::ones(a.shape())).unwrap();
            prop_assert_eq!(out.data(), a.data());
        }

        #[test]
        fn prop_mean_times_count_equals_sum(a in small_tensor()) {
            let s = a.shape();
            let mean = a.reduce(ReduceAxes::Spatial, ReduceMode::Mean).unwrap();
            for n in 0..s.n {
                for c in 0..s.c {
                    let sum: f64 = a.plane(n, c).iter().sum();
                    let via_mean = mean.at(n, c, 0, 0) * (s.h * s.w) as f64;
                    prop_assert!((sum - via_mean).abs() <= 1e-9 * (1.0 + sum.abs()));
                }
            }
        }

        #[test]
        fn prop_min_mean_max_order(a in small_tensor()) {
            for (axes, mode_pairs) in [
                (ReduceAxes::Spatial, ()),
                (ReduceAxes::Channel, ()),
            ] {
                let _ = mode_pairs;
                let mean = a.reduce(axes, ReduceMode::Mean).unwrap();
                let max = a.reduce(axes, ReduceMode::Max).unwrap();
                prop_assert_eq!(mean.shape(), max.shape());
                for (m, x) in mean.data().iter().zip(max.data()) {
                    prop_assert!(m <= x);
                }
                prop_assert!(mean.mean() >= a.min_value() - 1e-12);
            }
        }
    }
}
