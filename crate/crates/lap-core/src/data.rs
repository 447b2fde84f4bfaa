//! Synthetic keypoint data and the augmentation pipeline.
//!
//! The toy dataset renders Gaussian bright blobs on a noisy background.
//! Each joint carries a fixed, distinct intensity so the network can tell
//! joints apart. Sample generation is a pure function of (spec, index).

use alloc::vec;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::heatmap::{flip_keypoints, Keypoint, KeypointSchema, KeypointSet};
use crate::math;
use crate::tensor::{Shape, Tensor};

/// splitmix64; used to derive independent per-sample streams and the
/// train/validation split from one dataset seed.
pub fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E3779B97F4A7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58476D1CE4E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D049BB133111EB);
    x ^ (x >> 31)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ToyDatasetSpec {
    pub num_samples: usize,
    /// Square image side in pixels.
    pub image_size: usize,
    pub num_keypoints: usize,
    pub blob_radius: (f64, f64),
    /// Intensity band the per-joint signatures are spread across.
    pub blob_intensity: (f64, f64),
    /// Uniform background noise amplitude.
    pub noise: f64,
    pub seed: u64,
}

impl Default for ToyDatasetSpec {
    fn default() -> Self {
        ToyDatasetSpec {
            num_samples: 512,
            image_size: 64,
            num_keypoints: 4,
            blob_radius: (2.0, 3.0),
            blob_intensity: (0.45, 1.0),
            noise: 0.05,
            seed: 7,
        }
    }
}

impl ToyDatasetSpec {
    pub fn validate(&self) -> Result<()> {
        if self.num_samples == 0 || self.num_keypoints == 0 || self.image_size < 16 {
            return Err(Error::InvalidConfig(
                "toy dataset needs samples, keypoints, and image_size >= 16".into(),
            ));
        }
        if self.blob_radius.0 <= 0.0 || self.blob_radius.1 < self.blob_radius.0 {
            return Err(Error::InvalidConfig("bad blob radius range".into()));
        }
        if 2.0 * 3.0 * self.blob_radius.1 >= self.image_size as f64 {
            return Err(Error::InvalidConfig(
                "blob radius too large for the image: margins would overlap".into(),
            ));
        }
        if self.noise < 0.0 {
            return Err(Error::InvalidConfig("noise must be non-negative".into()));
        }
        Ok(())
    }

    /// The fixed intensity signature of joint `j`.
    pub fn joint_intensity(&self, j: usize) -> f64 {
        let (lo, hi) = self.blob_intensity;
        if self.num_keypoints <= 1 {
            hi
        } else {
            lo + (hi - lo) * j as f64 / (self.num_keypoints - 1) as f64
        }
    }
}

fn sample_rng(spec: &ToyDatasetSpec, index: usize) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(splitmix64(
        spec.seed ^ (index as u64).wrapping_mul(0xA24BAED4963EE407),
    ))
}

/// Renders one sample: a 3-channel image (grayscale replicated) and its
/// keypoints in image pixel coordinates. Deterministic per (spec, index).
pub fn generate_toy_sample(spec: &ToyDatasetSpec, index: usize) -> Result<(Tensor, KeypointSet)> {
    spec.validate()?;
    if index >= spec.num_samples {
        return Err(Error::InvalidConfig(format!(
            "sample index {index} out of range ({} samples)",
            spec.num_samples
        )));
    }
    let mut rng = sample_rng(spec, index);
    let size = spec.image_size;
    let j = spec.num_keypoints;

    let radii: Vec<f64> = (0..j)
        .map(|_| rng.random_range(spec.blob_radius.0..=spec.blob_radius.1))
        .collect();

    // blob centers stay 3 radii from every border and keep mutual distance
    let mut centers: Vec<(f64, f64)> = Vec::with_capacity(j);
    for ji in 0..j {
        let margin = 3.0 * radii[ji];
        let lo = margin;
        let hi = size as f64 - 1.0 - margin;
        let mut best = (lo, lo);
        for _attempt in 0..100 {
            let x = rng.random_range(lo..=hi);
            let y = rng.random_range(lo..=hi);
            let ok = centers
                .iter()
                .enumerate()
                .all(|(k, &(cx, cy))| {
                    math::dist(x, y, cx, cy) >= 2.0 * (radii[k] + radii[ji])
                });
            best = (x, y);
            if ok {
                break;
            }
        }
        centers.push(best);
    }

    let mut gray = vec![0.0f64; size * size];
    for ji in 0..j {
        let intensity = spec.joint_intensity(ji);
        let (cx, cy) = centers[ji];
        let denom = 2.0 * radii[ji] * radii[ji];
        for py in 0..size {
            let dy = py as f64 - cy;
            for px in 0..size {
                let dx = px as f64 - cx;
                let v = intensity * math::exp(-(dx * dx + dy * dy) / denom);
                let cell = &mut gray[py * size + px];
                if v > *cell {
                    *cell = v;
                }
            }
        }
    }
    if spec.noise > 0.0 {
        for cell in gray.iter_mut() {
            *cell += spec.noise * rng.random_range(0.0..1.0);
        }
    }

    let mut image = Tensor::zeros(Shape::new(1, 3, size, size));
    for c in 0..3 {
        image.plane_mut(0, c).copy_from_slice(&gray);
    }
    let points = centers
        .into_iter()
        .map(|(x, y)| Keypoint {
            x,
            y,
            visible: true,
        })
        .collect();
    Ok((image, KeypointSet::new(points)))
}

/// Deterministic 90/10 split by index hash.
pub fn is_validation_index(seed: u64, index: usize) -> bool {
    splitmix64(seed ^ (index as u64).wrapping_mul(0xD6E8FEB86659FD93) ^ 0x5851F42D4C957F2D) % 10
        == 0
}

pub fn split_indices(spec: &ToyDatasetSpec) -> (Vec<usize>, Vec<usize>) {
    let mut train = Vec::new();
    let mut val = Vec::new();
    for i in 0..spec.num_samples {
        if is_validation_index(spec.seed, i) {
            val.push(i);
        } else {
            train.push(i);
        }
    }
    (train, val)
}

// ---------------------------------------------------------------------------
// augmentation
// ---------------------------------------------------------------------------

/// Augmentation toggles and ranges. Applied in fixed order: scale, rotate,
/// flip, crop to the input size (identity at equal sizes), color jitter.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AugmentConfig {
    pub enabled: bool,
    pub scale: (f64, f64),
    pub rotate_deg: (f64, f64),
    pub flip_prob: f64,
    pub brightness: (f64, f64),
    pub contrast: (f64, f64),
}

impl Default for AugmentConfig {
    fn default() -> Self {
        AugmentConfig {
            enabled: false,
            scale: (0.75, 1.25),
            rotate_deg: (-30.0, 30.0),
            flip_prob: 0.5,
            brightness: (0.8, 1.2),
            contrast: (0.8, 1.2),
        }
    }
}

fn bilinear(plane: &[f64], h: usize, w: usize, x: f64, y: f64) -> f64 {
    if x <= -1.0 || y <= -1.0 || x >= w as f64 || y >= h as f64 {
        return 0.0;
    }
    let x0 = math::floor(x);
    let y0 = math::floor(y);
    let fx = x - x0;
    let fy = y - y0;
    let sample = |xi: f64, yi: f64| -> f64 {
        if xi < 0.0 || yi < 0.0 || xi >= w as f64 || yi >= h as f64 {
            0.0
        } else {
            plane[yi as usize * w + xi as usize]
        }
    };
    let v00 = sample(x0, y0);
    let v01 = sample(x0 + 1.0, y0);
    let v10 = sample(x0, y0 + 1.0);
    let v11 = sample(x0 + 1.0, y0 + 1.0);
    v00 * (1.0 - fx) * (1.0 - fy)
        + v01 * fx * (1.0 - fy)
        + v10 * (1.0 - fx) * fy
        + v11 * fx * fy
}

/// Applies the augmentation pipeline to one sample. The image keeps its
/// size (scale and rotation resample about the center; the crop step is a
/// same-size center crop). Keypoints follow the same affine map; joints
/// that leave the frame are marked invisible.
pub fn augment(
    image: &Tensor,
    kps: &KeypointSet,
    schema: &KeypointSchema,
    cfg: &AugmentConfig,
    rng: &mut ChaCha8Rng,
) -> (Tensor, KeypointSet) {
    if !cfg.enabled {
        return (image.clone(), kps.clone());
    }
    let s = image.shape();
    let (h, w) = (s.h, s.w);
    let scale = rng.random_range(cfg.scale.0..=cfg.scale.1);
    let theta = rng.random_range(cfg.rotate_deg.0..=cfg.rotate_deg.1) * core::f64::consts::PI
        / 180.0;
    let flip = rng.random_bool(cfg.flip_prob.clamp(0.0, 1.0));
    let brightness = rng.random_range(cfg.brightness.0..=cfg.brightness.1);
    let contrast = rng.random_range(cfg.contrast.0..=cfg.contrast.1);

    let (cx, cy) = ((w as f64 - 1.0) / 2.0, (h as f64 - 1.0) / 2.0);
    let (sin, cos) = (math::sin(theta), math::cos(theta));

    // inverse map (output pixel -> input coords) for resampling
    let mut out = Tensor::zeros(s);
    for n in 0..s.n {
        for c in 0..s.c {
            let src = image.plane(n, c);
            let dst = out.plane_mut(n, c);
            for oy in 0..h {
                let ry = oy as f64 - cy;
                for ox in 0..w {
                    let rx = ox as f64 - cx;
                    let ix = cx + (rx * cos + ry * sin) / scale;
                    let iy = cy + (-rx * sin + ry * cos) / scale;
                    dst[oy * w + ox] = bilinear(src, h, w, ix, iy);
                }
            }
        }
    }

    // forward map for the keypoints
    let mut points = Vec::with_capacity(kps.points.len());
    for p in &kps.points {
        if !p.visible {
            points.push(Keypoint::invisible());
            continue;
        }
        let rx = p.x - cx;
        let ry = p.y - cy;
        let x = cx + scale * (rx * cos - ry * sin);
        let y = cy + scale * (rx * sin + ry * cos);
        let inside = x >= 0.0 && x <= w as f64 - 1.0 && y >= 0.0 && y <= h as f64 - 1.0;
        points.push(Keypoint {
            x,
            y,
            visible: inside,
        });
    }
    let mut kps_out = KeypointSet::new(points);

    if flip {
        let mut flipped = Tensor::zeros(s);
        for n in 0..s.n {
            for c in 0..s.c {
                let src = out.plane(n, c);
                let dst = flipped.plane_mut(n, c);
                for y in 0..h {
                    for x in 0..w {
                        dst[y * w + x] = src[y * w + (w - 1 - x)];
                    }
                }
            }
        }
        out = flipped;
        kps_out = flip_keypoints(&kps_out, schema, w);
    }

    // color jitter: multiplicative brightness, then contrast about the mean
    let mean = out.mean() * brightness;
    for v in out.data_mut() {
        *v = (*v * brightness - mean) * contrast + mean;
    }

    (out, kps_out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec() -> ToyDatasetSpec {
        ToyDatasetSpec::default()
    }

    #[test]
    fn generation_is_deterministic() {
        let s = spec();
        let (img_a, kps_a) = generate_toy_sample(&s, 3).unwrap();
        let (img_b, kps_b) = generate_toy_sample(&s, 3).unwrap();
        assert_eq!(img_a.data(), img_b.data());
        assert_eq!(kps_a, kps_b);
        let (img_c, _) = generate_toy_sample(&s, 4).unwrap();
        assert_ne!(img_a.data(), img_c.data());
    }

    #[test]
    fn zero_noise_peak_sits_on_a_keypoint() {
        let mut s = spec();
        s.noise = 0.0;
        s.num_keypoints = 1;
        let (img, kps) = generate_toy_sample(&s, 0).unwrap();
        let kp = kps.points[0];
        let (mut best, mut arg) = (f64::NEG_INFINITY, (0usize, 0usize));
        for y in 0..s.image_size {
            for x in 0..s.image_size {
                let v = img.at(0, 0, y, x);
                if v > best {
                    best = v;
                    arg = (x, y);
                }
            }
        }
        assert!((arg.0 as f64 - kp.x).abs() <= 0.5);
        assert!((arg.1 as f64 - kp.y).abs() <= 0.5);
    }

    #[test]
    fn blob_positions_respect_margins() {
        let s = spec();
        for idx in 0..32 {
            let (_, kps) = generate_toy_sample(&s, idx).unwrap();
            for p in &kps.points {
                let margin = 3.0 * s.blob_radius.0;
                assert!(p.x >= margin - 1e-9);
                assert!(p.y >= margin - 1e-9);
                assert!(p.x <= s.image_size as f64 - 1.0 - margin + 1e-9);
                assert!(p.y <= s.image_size as f64 - 1.0 - margin + 1e-9);
            }
        }
    }

    #[test]
    fn split_is_roughly_ninety_ten_and_deterministic() {
        let s = spec();
        let (train, val) = split_indices(&s);
        assert_eq!(train.len() + val.len(), s.num_samples);
        let frac = val.len() as f64 / s.num_samples as f64;
        assert!(frac > 0.04 && frac < 0.18, "val fraction {frac}");
        let (train2, val2) = split_indices(&s);
        assert_eq!(train, train2);
        assert_eq!(val, val2);
    }

    #[test]
    fn disabled_augmentation_is_identity() {
        let s = spec();
        let schema = KeypointSchema::toy(s.num_keypoints);
        let (img, kps) = generate_toy_sample(&s, 0).unwrap();
        let cfg = AugmentConfig::default();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let (img2, kps2) = augment(&img, &kps, &schema, &cfg, &mut rng);
        assert_eq!(img.data(), img2.data());
        assert_eq!(kps, kps2);
    }

    #[test]
    fn flip_only_mirrors_coordinates() {
        let s = spec();
        let schema = KeypointSchema::toy(s.num_keypoints);
        let (img, kps) = generate_toy_sample(&s, 1).unwrap();
        let cfg = AugmentConfig {
            enabled: true,
            scale: (1.0, 1.0),
            rotate_deg: (0.0, 0.0),
            flip_prob: 1.0,
            brightness: (1.0, 1.0),
            contrast: (1.0, 1.0),
        };
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let (img2, kps2) = augment(&img, &kps, &schema, &cfg, &mut rng);
        let w = s.image_size as f64;
        for (a, b) in kps.points.iter().zip(&kps2.points) {
            assert!((b.x - (w - 1.0 - a.x)).abs() < 1e-9);
            assert!((a.y - b.y).abs() < 1e-9);
        }
        // mirrored image, up to identity-jitter rounding
        for y in 0..s.image_size {
            let d = img.at(0, 0, y, 3) - img2.at(0, 0, y, s.image_size - 4);
            assert!(d.abs() < 1e-12);
        }
    }

    #[test]
    fn quarter_turn_rotates_keypoints_by_hand_formula() {
        let s = spec();
        let schema = KeypointSchema::toy(s.num_keypoints);
        let (img, kps) = generate_toy_sample(&s, 2).unwrap();
        let cfg = AugmentConfig {
            enabled: true,
            scale: (1.0, 1.0),
            rotate_deg: (90.0, 90.0),
            flip_prob: 0.0,
            brightness: (1.0, 1.0),
            contrast: (1.0, 1.0),
        };
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let (_, kps2) = augment(&img, &kps, &schema, &cfg, &mut rng);
        let c = (s.image_size as f64 - 1.0) / 2.0;
        for (a, b) in kps.points.iter().zip(&kps2.points) {
            // 90 degrees: (x, y) -> (cx - (y - cy), cy + (x - cx))
            assert!((b.x - (c - (a.y - c))).abs() < 1e-9);
            assert!((b.y - (c + (a.x - c))).abs() < 1e-9);
        }
    }

    #[test]
    fn augmentation_preserves_count_and_visibility_consistency() {
        let s = spec();
        let schema = KeypointSchema::toy(s.num_keypoints);
        let cfg = AugmentConfig {
            enabled: true,
            scale: (1.4, 1.8), // aggressive, pushes joints out of frame
            ..AugmentConfig::default()
        };
        for idx in 0..16 {
            let (img, kps) = generate_toy_sample(&s, idx).unwrap();
            let mut rng = ChaCha8Rng::seed_from_u64(100 + idx as u64);
            let (img2, kps2) = augment(&img, &kps, &schema, &cfg, &mut rng);
            assert_eq!(kps2.points.len(), kps.points.len());
            assert_eq!(img2.shape(), img.shape());
            let w = s.image_size as f64 - 1.0;
            for p in &kps2.points {
                if p.visible {
                    assert!(p.x >= 0.0 && p.x <= w && p.y >= 0.0 && p.y <= w);
                }
            }
        }
    }
}
