//! Gaussian heatmap codec: keypoint schemas, ground-truth construction,
//! the heatmap MSE loss, argmax decoding with quarter-pixel refinement, and
//! the textual keypoint record format.

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::math;
use crate::tensor::{Shape, Tensor};

pub const DEFAULT_SIGMA: f64 = 2.0;

/// Joint layout: names in order, left/right pairs for flipping, limb
/// segments for rendering, and per-joint OKS constants.
#[derive(Clone, Debug, PartialEq)]
pub struct KeypointSchema {
    pub name: String,
    pub joints: Vec<String>,
    pub flip_pairs: Vec<(usize, usize)>,
    pub limbs: Vec<(usize, usize)>,
    pub oks_k: Vec<f64>,
}

impl KeypointSchema {
    /// The 17-joint layout: nose, eyes, ears, shoulders, elbows, wrists,
    /// hips, knees, ankles (left before right within each pair).
    pub fn coco17() -> Self {
        let joints = [
            "nose",
            "left_eye",
            "right_eye",
            "left_ear",
            "right_ear",
            "left_shoulder",
            "right_shoulder",
            "left_elbow",
            "right_elbow",
            "left_wrist",
            "right_wrist",
            "left_hip",
            "right_hip",
            "left_knee",
            "right_knee",
            "left_ankle",
            "right_ankle",
        ];
        KeypointSchema {
            name: "coco17".to_string(),
            joints: joints.iter().map(|s| s.to_string()).collect(),
            flip_pairs: vec![
                (1, 2),
                (3, 4),
                (5, 6),
                (7, 8),
                (9, 10),
                (11, 12),
                (13, 14),
                (15, 16),
            ],
            limbs: vec![
                (15, 13),
                (13, 11),
                (16, 14),
                (14, 12),
                (11, 12),
                (5, 11),
                (6, 12),
                (5, 6),
                (5, 7),
                (6, 8),
                (7, 9),
                (8, 10),
                (1, 2),
                (0, 1),
                (0, 2),
                (1, 3),
                (2, 4),
                (3, 5),
                (4, 6),
            ],
            oks_k: vec![
                0.026, 0.025, 0.025, 0.035, 0.035, 0.079, 0.079, 0.072, 0.072, 0.062, 0.062,
                0.107, 0.107, 0.087, 0.087, 0.089, 0.089,
            ],
        }
    }

    /// The 16-joint layout: head, neck, pelvis, thorax, then paired limbs.
    /// OKS constants are uniform because the benchmark behind this layout
    /// does not define them.
    pub fn mpii16() -> Self {
        let joints = [
            "head",
            "neck",
            "pelvis",
            "thorax",
            "left_shoulder",
            "right_shoulder",
            "left_elbow",
            "right_elbow",
            "left_wrist",
            "right_wrist",
            "left_knee",
            "right_knee",
            "left_ankle",
            "right_ankle",
            "left_hip",
            "right_hip",
        ];
        KeypointSchema {
            name: "mpii16".to_string(),
            joints: joints.iter().map(|s| s.to_string()).collect(),
            flip_pairs: vec![(4, 5), (6, 7), (8, 9), (10, 11), (12, 13), (14, 15)],
            limbs: vec![
                (0, 1),
                (1, 3),
                (3, 2),
                (3, 4),
                (3, 5),
                (4, 6),
                (5, 7),
                (6, 8),
                (7, 9),
                (2, 14),
                (2, 15),
                (14, 10),
                (15, 11),
                (10, 12),
                (11, 13),
            ],
            oks_k: vec![0.1; 16],
        }
    }

    /// Synthetic schema with `k` unpaired joints chained as limbs.
    pub fn toy(k: usize) -> Self {
        KeypointSchema {
            name: format!("toy-{k}"),
            joints: (0..k).map(|i| format!("kp{i}")).collect(),
            flip_pairs: Vec::new(),
            limbs: (0..k.saturating_sub(1)).map(|i| (i, i + 1)).collect(),
            oks_k: vec![0.1; k],
        }
    }

    /// 17 joints select the coco layout, 16 the mpii layout, anything else
    /// the synthetic one.
    pub fn for_keypoint_count(j: usize) -> Self {
        match j {
            17 => Self::coco17(),
            16 => Self::mpii16(),
            k => Self::toy(k),
        }
    }

    pub fn num_joints(&self) -> usize {
        self.joints.len()
    }

    /// Joint index permutation under a horizontal flip.
    pub fn flip_index(&self) -> Vec<usize> {
        let mut idx: Vec<usize> = (0..self.num_joints()).collect();
        for &(a, b) in &self.flip_pairs {
            idx.swap(a, b);
        }
        idx
    }
}

/// One joint location in heatmap pixel coordinates (x = column, y = row).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Keypoint {
    pub x: f64,
    pub y: f64,
    pub visible: bool,
}

impl Keypoint {
    pub fn invisible() -> Self {
        Keypoint {
            x: 0.0,
            y: 0.0,
            visible: false,
        }
    }
}

/// All joints of one sample, in schema order.
#[derive(Clone, Debug, PartialEq)]
pub struct KeypointSet {
    pub points: Vec<Keypoint>,
}

impl KeypointSet {
    pub fn new(points: Vec<Keypoint>) -> Self {
        KeypointSet { points }
    }

    pub fn visibility(&self) -> Vec<bool> {
        self.points.iter().map(|p| p.visible).collect()
    }

    /// Scales coordinates (image pixels to heatmap pixels, say).
    pub fn scaled(&self, factor: f64) -> KeypointSet {
        KeypointSet {
            points: self
                .points
                .iter()
                .map(|p| Keypoint {
                    x: p.x * factor,
                    y: p.y * factor,
                    visible: p.visible,
                })
                .collect(),
        }
    }
}

/// Per-keypoint likelihood maps for a batch, `N x J x h x w`.
#[derive(Clone, Debug)]
pub struct HeatmapStack {
    pub maps: Tensor,
    pub sigma: f64,
}

/// Builds unnormalized Gaussian ground truth (peak value 1 at the joint).
/// Invisible joints produce all-zero maps; joints outside the frame simply
/// leave their truncated tail, never an error.
pub fn encode(samples: &[KeypointSet], h: usize, w: usize, sigma: f64) -> Result<HeatmapStack> {
    if sigma <= 0.0 || !sigma.is_finite() {
        return Err(Error::InvalidConfig(format!("sigma must be positive, got {sigma}")));
    }
    let n = samples.len();
    let j = samples.first().map_or(0, |s| s.points.len());
    let mut maps = Tensor::zeros(Shape::new(n, j, h, w));
    let denom = 2.0 * sigma * sigma;
    for (ni, sample) in samples.iter().enumerate() {
        if sample.points.len() != j {
            return Err(Error::InvalidConfig(
                "all samples must have the same joint count".into(),
            ));
        }
        for (ji, kp) in sample.points.iter().enumerate() {
            if !kp.visible {
                continue;
            }
            let plane = maps.plane_mut(ni, ji);
            for py in 0..h {
                let dy = py as f64 - kp.y;
                for px in 0..w {
                    let dx = px as f64 - kp.x;
                    plane[py * w + px] = math::exp(-(dx * dx + dy * dy) / denom);
                }
            }
        }
    }
    Ok(HeatmapStack { maps, sigma })
}

/// Mean squared error over batch x visible joints x pixels, with the
/// gradient w.r.t. the prediction. Invisible joints are excluded from both
/// the sum and the count.
pub fn mse_loss(pred: &Tensor, gt: &Tensor, visibility: &[Vec<bool>]) -> Result<(f64, Tensor)> {
    let s = pred.shape();
    if gt.shape() != s {
        return Err(Error::ShapeMismatch {
            expected: s,
            got: gt.shape(),
        });
    }
    if visibility.len() != s.n || visibility.iter().any(|v| v.len() != s.c) {
        return Err(Error::InvalidConfig(
            "visibility mask must be N x J".into(),
        ));
    }
    let visible_pairs: usize = visibility
        .iter()
        .map(|v| v.iter().filter(|&&b| b).count())
        .sum();
    let count = (visible_pairs * s.h * s.w) as f64;
    let mut grad = Tensor::zeros(s);
    if count == 0.0 {
        return Ok((0.0, grad));
    }
    let mut sum = 0.0;
    for n in 0..s.n {
        for j in 0..s.c {
            if !visibility[n][j] {
                continue;
            }
            let pp = pred.plane(n, j);
            let gp = gt.plane(n, j);
            let dp = grad.plane_mut(n, j);
            for ((d, &p), &g) in dp.iter_mut().zip(pp).zip(gp) {
                let diff = p - g;
                sum += diff * diff;
                *d = 2.0 * diff / count;
            }
        }
    }
    Ok((sum / count, grad))
}

/// A decoded joint: location plus the peak value as confidence.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DecodedKeypoint {
    pub x: f64,
    pub y: f64,
    pub confidence: f64,
}

/// Argmax decoding with quarter-pixel refinement: the peak shifts 0.25 px
/// along each axis toward the larger neighbour (no shift at ties or when a
/// neighbour is outside the map). Ties in the argmax break to the lowest
/// row-major index, so an all-zero map decodes to (0, 0) with confidence 0.
pub fn decode(maps: &Tensor) -> Result<Vec<Vec<DecodedKeypoint>>> {
    let s = maps.shape();
    if s.h < 3 || s.w < 3 {
        return Err(Error::InvalidConfig(
            "decode needs maps at least 3x3".into(),
        ));
    }
    let mut out = Vec::with_capacity(s.n);
    for n in 0..s.n {
        let mut sample = Vec::with_capacity(s.c);
        for j in 0..s.c {
            let plane = maps.plane(n, j);
            let mut best = plane[0];
            let mut arg = 0usize;
            for (i, &v) in plane.iter().enumerate().skip(1) {
                if v > best {
                    best = v;
                    arg = i;
                }
            }
            let (py, px) = (arg / s.w, arg % s.w);
            let mut x = px as f64;
            let mut y = py as f64;
            if px > 0 && px + 1 < s.w {
                let right = plane[py * s.w + px + 1];
                let left = plane[py * s.w + px - 1];
                if right > left {
                    x += 0.25;
                } else if left > right {
                    x -= 0.25;
                }
            }
            if py > 0 && py + 1 < s.h {
                let down = plane[(py + 1) * s.w + px];
                let up = plane[(py - 1) * s.w + px];
                if down > up {
                    y += 0.25;
                } else if up > down {
                    y -= 0.25;
                }
            }
            sample.push(DecodedKeypoint {
                x,
                y,
                confidence: best,
            });
        }
        out.push(sample);
    }
    Ok(out)
}

/// Horizontal flip: `x -> width - 1 - x`, left/right joints swapped.
pub fn flip_keypoints(kps: &KeypointSet, schema: &KeypointSchema, width: usize) -> KeypointSet {
    let idx = schema.flip_index();
    let mut points = vec![Keypoint::invisible(); kps.points.len()];
    for (j, &src) in idx.iter().enumerate() {
        let p = kps.points[src];
        points[j] = Keypoint {
            x: (width as f64 - 1.0) - p.x,
            y: p.y,
            visible: p.visible,
        };
    }
    KeypointSet { points }
}

// ---------------------------------------------------------------------------
// keypoint record text format
// ---------------------------------------------------------------------------

/// One record per sample: an id line, then one `joint_name x y visible`
/// line per joint in schema order. Records are separated by blank lines.
pub fn keypoint_records_to_text(
    records: &[(String, KeypointSet)],
    schema: &KeypointSchema,
) -> Result<String> {
    let mut out = String::new();
    for (id, kps) in records {
        if kps.points.len() != schema.num_joints() {
            return Err(Error::InvalidConfig(format!(
                "record `{id}` has {} joints, schema `{}` expects {}",
                kps.points.len(),
                schema.name,
                schema.num_joints()
            )));
        }
        out.push_str(id);
        out.push('\n');
        for (name, p) in schema.joints.iter().zip(&kps.points) {
            out.push_str(&format!(
                "{} {} {} {}\n",
                name,
                p.x,
                p.y,
                if p.visible { 1 } else { 0 }
            ));
        }
        out.push('\n');
    }
    Ok(out)
}

pub fn keypoint_records_from_text(
    text: &str,
    schema: &KeypointSchema,
) -> Result<Vec<(String, KeypointSet)>> {
    let mut lines = text.lines().map(str::trim).filter(|l| !l.is_empty());
    let mut records = Vec::new();
    while let Some(id_line) = lines.next() {
        let id = id_line.to_string();
        let mut points = Vec::with_capacity(schema.num_joints());
        for expected_name in &schema.joints {
            let line = lines.next().ok_or_else(|| {
                Error::Parse(format!("record `{id}`: truncated joint list"))
            })?;
            let mut tok = line.split_whitespace();
            let name = tok.next().unwrap_or("");
            if name != expected_name {
                return Err(Error::Parse(format!(
                    "record `{id}`: expected joint `{expected_name}`, got `{name}`"
                )));
            }
            let x: f64 = tok
                .next()
                .and_then(|t| t.parse().ok())
                .ok_or_else(|| Error::Parse(format!("record `{id}`: bad x for {name}")))?;
            let y: f64 = tok
                .next()
                .and_then(|t| t.parse().ok())
                .ok_or_else(|| Error::Parse(format!("record `{id}`: bad y for {name}")))?;
            let visible = match tok.next() {
                Some("1") => true,
                Some("0") => false,
                _ => {
                    return Err(Error::Parse(format!(
                        "record `{id}`: visibility must be 0 or 1 for {name}"
                    )))
                }
            };
            points.push(Keypoint { x, y, visible });
        }
        records.push((id, KeypointSet { points }));
    }
    Ok(records)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn single(x: f64, y: f64) -> Vec<KeypointSet> {
        vec![KeypointSet::new(vec![Keypoint {
            x,
            y,
            visible: true,
        }])]
    }

    #[test]
    fn encode_peak_is_one_on_pixel() {
        let hm = encode(&single(5.0, 5.0), 12, 12, 2.0).unwrap();
        assert_eq!(hm.maps.at(0, 0, 5, 5), 1.0);
        assert_eq!(hm.maps.max_value(), 1.0);
    }

    #[test]
    fn encode_value_at_sigma_distance() {
        let sigma = 2.0;
        let hm = encode(&single(5.0, 5.0), 12, 12, sigma).unwrap();
        // pixel (y=5, x=7) is exactly sigma away
        let v = hm.maps.at(0, 0, 5, 7);
        assert!((v - math::exp(-0.5)).abs() < 1e-12);
        assert!((v - 0.6065307).abs() < 1e-7);
    }

    #[test]
    fn invisible_joint_is_zero_map() {
        let kps = vec![KeypointSet::new(vec![Keypoint::invisible()])];
        let hm = encode(&kps, 8, 8, 2.0).unwrap();
        assert!(hm.maps.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn out_of_frame_joint_truncates_without_error() {
        let hm = encode(&single(-30.0, -30.0), 8, 8, 2.0).unwrap();
        assert!(hm.maps.max_value() < 1e-12);
    }

    #[test]
    fn encode_rejects_nonpositive_sigma() {
        assert!(encode(&single(1.0, 1.0), 8, 8, 0.0).is_err());
    }

    #[test]
    fn peak_pixel_value_matches_nearest_distance() {
        let sigma = 2.0;
        for (x, y) in [(4.0, 4.0), (4.3, 5.6), (3.75, 4.25), (5.5, 3.49)] {
            let hm = encode(&single(x, y), 16, 16, sigma).unwrap();
            let nx = math::round(x);
            let ny = math::round(y);
            let d2 = (nx - x) * (nx - x) + (ny - y) * (ny - y);
            let expect = math::exp(-d2 / (2.0 * sigma * sigma));
            assert!((hm.maps.max_value() - expect).abs() < 1e-12);
        }
    }

    #[test]
    fn mse_examples() {
        let a = Tensor::from_vec(Shape::new(1, 1, 1, 2), vec![0.5, 0.0]).unwrap();
        let b = Tensor::from_vec(Shape::new(1, 1, 1, 2), vec![1.0, 0.0]).unwrap();
        let vis = vec![vec![true]];
        let (loss, grad) = mse_loss(&a, &b, &vis).unwrap();
        assert!((loss - 0.125).abs() < 1e-15);
        assert_eq!(grad.data(), &[-0.5, 0.0]);

        let (zero, g) = mse_loss(&a, &a, &vis).unwrap();
        assert_eq!(zero, 0.0);
        assert!(g.data().iter().all(|&v| v == 0.0));

        let ones = Tensor::ones(Shape::new(2, 1, 3, 3));
        let zeros = Tensor::zeros(Shape::new(2, 1, 3, 3));
        let vis2 = vec![vec![true], vec![true]];
        let (l, _) = mse_loss(&zeros, &ones, &vis2).unwrap();
        assert_eq!(l, 1.0);
    }

    #[test]
    fn mse_ignores_invisible_joints() {
        let pred = Tensor::from_vec(Shape::new(1, 2, 1, 1), vec![5.0, 1.0]).unwrap();
        let gt = Tensor::from_vec(Shape::new(1, 2, 1, 1), vec![0.0, 0.0]).unwrap();
        let (loss, grad) = mse_loss(&pred, &gt, &[vec![false, true]]).unwrap();
        assert_eq!(loss, 1.0);
        assert_eq!(grad.data(), &[0.0, 2.0]);
    }

    #[test]
    fn decode_exact_peak() {
        let mut m = Tensor::zeros(Shape::new(1, 1, 8, 8));
        m.set(0, 0, 3, 4, 1.0);
        let kp = decode(&m).unwrap()[0][0];
        assert_eq!((kp.x, kp.y, kp.confidence), (4.0, 3.0, 1.0));
    }

    #[test]
    fn decode_shifts_toward_larger_neighbour() {
        let mut m = Tensor::zeros(Shape::new(1, 1, 8, 8));
        m.set(0, 0, 3, 4, 1.0);
        m.set(0, 0, 3, 5, 0.5);
        m.set(0, 0, 3, 3, 0.1);
        let kp = decode(&m).unwrap()[0][0];
        assert_eq!(kp.x, 4.25);
        assert_eq!(kp.y, 3.0);
    }

    #[test]
    fn decode_all_zero_tie_breaks_to_origin() {
        let m = Tensor::zeros(Shape::new(1, 1, 4, 4));
        let kp = decode(&m).unwrap()[0][0];
        assert_eq!((kp.x, kp.y, kp.confidence), (0.0, 0.0, 0.0));
    }

    #[test]
    fn flip_is_involution_and_fixed_point_at_center() {
        let schema = KeypointSchema::coco17();
        let mut points = vec![Keypoint::invisible(); 17];
        points[9] = Keypoint {
            x: 10.0,
            y: 20.0,
            visible: true,
        };
        points[0] = Keypoint {
            x: 31.5,
            y: 4.0,
            visible: true,
        }; // center of width 64
        let kps = KeypointSet::new(points);
        let flipped = flip_keypoints(&kps, &schema, 64);
        // left_wrist (9) lands on right_wrist (10) at x = 63 - 10 = 53
        assert_eq!(flipped.points[10].x, 53.0);
        assert_eq!(flipped.points[10].y, 20.0);
        assert!(flipped.points[10].visible);
        assert!(!flipped.points[9].visible);
        // nose has no pair; centered x stays put
        assert_eq!(flipped.points[0].x, 31.5);

        let back = flip_keypoints(&flipped, &schema, 64);
        assert_eq!(back, kps);
    }

    #[test]
    fn schema_flip_pairs_are_involutions() {
        for schema in [
            KeypointSchema::coco17(),
            KeypointSchema::mpii16(),
            KeypointSchema::toy(4),
        ] {
            let idx = schema.flip_index();
            for (j, &k) in idx.iter().enumerate() {
                assert_eq!(idx[k], j);
            }
            assert_eq!(schema.oks_k.len(), schema.num_joints());
            for &(a, b) in &schema.limbs {
                assert!(a < schema.num_joints() && b < schema.num_joints());
            }
        }
        assert_eq!(KeypointSchema::coco17().num_joints(), 17);
        assert_eq!(KeypointSchema::mpii16().num_joints(), 16);
    }

    #[test]
    fn record_text_round_trip() {
        let schema = KeypointSchema::toy(3);
        let records = vec![
            (
                "sample0".to_string(),
                KeypointSet::new(vec![
                    Keypoint {
                        x: 1.25,
                        y: 2.5,
                        visible: true,
                    },
                    Keypoint::invisible(),
                    Keypoint {
                        x: 10.0,
                        y: 0.125,
                        visible: true,
                    },
                ]),
            ),
            (
                "sample1".to_string(),
                KeypointSet::new(vec![
                    Keypoint {
                        x: 0.0,
                        y: 0.0,
                        visible: true,
                    },
                    Keypoint {
                        x: 3.0,
                        y: 4.0,
                        visible: true,
                    },
                    Keypoint::invisible(),
                ]),
            ),
        ];
        let text = keypoint_records_to_text(&records, &schema).unwrap();
        let back = keypoint_records_from_text(&text, &schema).unwrap();
        assert_eq!(back, records);
    }

    #[test]
    fn record_parse_rejects_bad_joint_name() {
        let schema = KeypointSchema::toy(2);
        let text = "s0\nkp0 1 2 1\nwrong 3 4 0\n";
        assert!(matches!(
            keypoint_records_from_text(text, &schema),
            Err(Error::Parse(_))
        ));
    }

    proptest! {
        /// encode-decode round trip for joints on integer pixels well inside
        /// the map recovers the coordinates within half a pixel.
        #[test]
        fn prop_encode_decode_round_trip(xi in 6usize..26, yi in 6usize..26) {
            let hm = encode(&single(xi as f64, yi as f64), 32, 32, 2.0).unwrap();
            let kp = decode(&hm.maps).unwrap()[0][0];
            prop_assert!((kp.x - xi as f64).abs() <= 0.5);
            prop_assert!((kp.y - yi as f64).abs() <= 0.5);
            prop_assert_eq!(kp.confidence, 1.0);
        }

        #[test]
        fn prop_mse_nonnegative_and_zero_iff_equal(
            vals in proptest::collection::vec(-2.0f64..2.0, 8)
        ) {
            let a = Tensor::from_vec(Shape::new(1, 2, 2, 2), vals.clone()).unwrap();
            let vis = vec![vec![true, true]];
            let (l, _) = mse_loss(&a, &a, &vis).unwrap();
            prop_assert_eq!(l, 0.0);
            let b = Tensor::from_vec(
                Shape::new(1, 2, 2, 2),
                vals.iter().map(|v| v + 0.5).collect::<Vec<_>>(),
            )
            .unwrap();
            let (l2, _) = mse_loss(&a, &b, &vis).unwrap();
            prop_assert!(l2 > 0.0);
        }
    }
}
