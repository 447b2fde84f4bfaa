//! Keypoint evaluation: PCK, OKS similarity, and average precision over a
//! sweep of OKS thresholds.
//!
//! Evaluation is single-person: each sample carries exactly one detection,
//! so no bipartite matching is involved. For AP, the recall denominator at
//! a threshold is the number of samples whose detection could pass it
//! (OKS >= t); AP then measures how well the confidence ranking separates
//! passing from failing detections, and equals 1.0 exactly when every
//! passing detection outranks every failing one.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::heatmap::{DecodedKeypoint, KeypointSchema, KeypointSet};
use crate::math;

/// The ten thresholds the headline AP averages over.
pub const OKS_THRESHOLDS: [f64; 10] = [0.50, 0.55, 0.60, 0.65, 0.70, 0.75, 0.80, 0.85, 0.90, 0.95];

pub const PCK_TAUS: [f64; 3] = [0.05, 0.10, 0.20];

/// Fraction of ground-truth-visible joints whose prediction lies within
/// `tau * normalizer` in Euclidean distance.
pub fn pck(
    preds: &[KeypointSet],
    gts: &[KeypointSet],
    tau: f64,
    normalizer: f64,
) -> Result<f64> {
    if preds.len() != gts.len() {
        return Err(Error::InvalidConfig(format!(
            "pck: {} predictions vs {} ground-truth samples",
            preds.len(),
            gts.len()
        )));
    }
    if normalizer <= 0.0 {
        return Err(Error::InvalidConfig("pck normalizer must be positive".into()));
    }
    let mut visible = 0usize;
    let mut hits = 0usize;
    for (p, g) in preds.iter().zip(gts) {
        for (pp, gp) in p.points.iter().zip(&g.points) {
            if !gp.visible {
                continue;
            }
            visible += 1;
            if math::dist(pp.x, pp.y, gp.x, gp.y) <= tau * normalizer {
                hits += 1;
            }
        }
    }
    if visible == 0 {
        return Err(Error::EmptyInput("pck over zero visible joints".into()));
    }
    Ok(hits as f64 / visible as f64)
}

/// Object keypoint similarity: mean over visible joints of
/// `exp(-d^2 / (2 * area * k_j^2))`. Returns 0 when nothing is visible.
pub fn oks(pred: &KeypointSet, gt: &KeypointSet, area: f64, k: &[f64]) -> Result<f64> {
    if area <= 0.0 {
        return Err(Error::InvalidConfig("oks area must be positive".into()));
    }
    if k.len() != gt.points.len() || pred.points.len() != gt.points.len() {
        return Err(Error::InvalidConfig(
            "oks: joint count mismatch between prediction, ground truth, and k".into(),
        ));
    }
    let mut sum = 0.0;
    let mut visible = 0usize;
    for ((pp, gp), &kj) in pred.points.iter().zip(&gt.points).zip(k) {
        if !gp.visible {
            continue;
        }
        let d = math::dist(pp.x, pp.y, gp.x, gp.y);
        sum += math::exp(-(d * d) / (2.0 * area * kj * kj));
        visible += 1;
    }
    if visible == 0 {
        return Ok(0.0);
    }
    Ok(sum / visible as f64)
}

/// Per-threshold average precision plus their mean.
#[derive(Clone, Debug)]
pub struct ApResult {
    pub per_threshold: Vec<(f64, f64)>,
    pub mean_ap: f64,
}

impl ApResult {
    pub fn at(&self, threshold: f64) -> Option<f64> {
        self.per_threshold
            .iter()
            .find(|(t, _)| (t - threshold).abs() < 1e-9)
            .map(|(_, ap)| *ap)
    }
}

/// All-point-interpolated AP of confidence-ranked detections at each OKS
/// threshold. `scored` pairs each sample's OKS with its confidence.
pub fn average_precision(scored: &[(f64, f64)], thresholds: &[f64]) -> Result<ApResult> {
    if scored.is_empty() {
        return Err(Error::EmptyInput("average precision over zero samples".into()));
    }
    // confidence-descending rank, stable in input order on ties
    let mut order: Vec<usize> = (0..scored.len()).collect();
    order.sort_by(|&a, &b| {
        scored[b].1
            .partial_cmp(&scored[a].1)
            .unwrap_or(core::cmp::Ordering::Equal)
    });

    let mut per_threshold = Vec::with_capacity(thresholds.len());
    for &t in thresholds {
        let npos = scored.iter().filter(|(oks, _)| *oks >= t).count();
        if npos == 0 {
            per_threshold.push((t, 0.0));
            continue;
        }
        let mut tp = 0usize;
        let mut precision = Vec::with_capacity(order.len());
        let mut recall = Vec::with_capacity(order.len());
        for (rank, &i) in order.iter().enumerate() {
            if scored[i].0 >= t {
                tp += 1;
            }
            precision.push(tp as f64 / (rank + 1) as f64);
            recall.push(tp as f64 / npos as f64);
        }
        // precision envelope (all-point interpolation)
        let mut envelope = precision.clone();
        for i in (0..envelope.len().saturating_sub(1)).rev() {
            envelope[i] = envelope[i].max(envelope[i + 1]);
        }
        let mut ap = 0.0;
        let mut prev_recall = 0.0;
        for (r, p) in recall.iter().zip(&envelope) {
            if *r > prev_recall {
                ap += (r - prev_recall) * p;
                prev_recall = *r;
            }
        }
        per_threshold.push((t, ap));
    }
    let mean_ap = per_threshold.iter().map(|(_, ap)| ap).sum::<f64>()
        / per_threshold.len() as f64;
    Ok(ApResult {
        per_threshold,
        mean_ap,
    })
}

/// Full evaluation summary.
#[derive(Clone, Debug)]
pub struct EvalResult {
    pub ap: f64,
    pub ap50: f64,
    pub ap75: f64,
    pub per_threshold: Vec<(f64, f64)>,
    pub pck: Vec<(f64, f64)>,
    pub per_joint_mean_error: Vec<f64>,
    pub samples: usize,
}

impl EvalResult {
    /// The structured text report the `eval` command emits.
    pub fn to_text(&self, schema: &KeypointSchema) -> String {
        let mut out = String::new();
        out.push_str(&format!("samples {}\n", self.samples));
        out.push_str(&format!("ap {:.6}\n", self.ap));
        out.push_str(&format!("ap50 {:.6}\n", self.ap50));
        out.push_str(&format!("ap75 {:.6}\n", self.ap75));
        for (tau, v) in &self.pck {
            out.push_str(&format!("pck@{tau} {v:.6}\n"));
        }
        for (name, err) in schema.joints.iter().zip(&self.per_joint_mean_error) {
            out.push_str(&format!("joint {name} mean_error {err:.6}\n"));
        }
        out
    }
}

/// Evaluates decoded predictions against ground truth in the same
/// (heatmap-pixel) coordinate space. `area` scales OKS; `normalizer`
/// scales the PCK threshold (the map diagonal is the usual choice).
pub fn evaluate(
    preds: &[Vec<DecodedKeypoint>],
    gts: &[KeypointSet],
    schema: &KeypointSchema,
    area: f64,
    normalizer: f64,
) -> Result<EvalResult> {
    if preds.len() != gts.len() {
        return Err(Error::InvalidConfig(format!(
            "evaluate: {} predictions vs {} ground-truth samples",
            preds.len(),
            gts.len()
        )));
    }
    if preds.is_empty() {
        return Err(Error::EmptyInput("evaluate over zero samples".into()));
    }
    let as_sets: Vec<KeypointSet> = preds
        .iter()
        .map(|joints| {
            KeypointSet::new(
                joints
                    .iter()
                    .map(|d| crate::heatmap::Keypoint {
                        x: d.x,
                        y: d.y,
                        visible: true,
                    })
                    .collect(),
            )
        })
        .collect();

    // one detection per sample: OKS + mean confidence over visible joints
    let mut scored = Vec::new();
    for (i, (p, g)) in as_sets.iter().zip(gts).enumerate() {
        let visible = g.points.iter().filter(|p| p.visible).count();
        if visible == 0 {
            continue;
        }
        let score = oks(p, g, area, &schema.oks_k)?;
        let conf = preds[i]
            .iter()
            .zip(&g.points)
            .filter(|(_, gp)| gp.visible)
            .map(|(d, _)| d.confidence)
            .sum::<f64>()
            / visible as f64;
        scored.push((score, conf));
    }
    if scored.is_empty() {
        return Err(Error::EmptyInput("evaluate: no visible joints anywhere".into()));
    }
    let ap = average_precision(&scored, &OKS_THRESHOLDS)?;

    let mut pcks = Vec::new();
    for tau in PCK_TAUS {
        pcks.push((tau, pck(&as_sets, gts, tau, normalizer)?));
    }

    let j = schema.num_joints();
    let mut err_sum = alloc::vec![0.0f64; j];
    let mut err_cnt = alloc::vec![0usize; j];
    for (p, g) in as_sets.iter().zip(gts) {
        for (ji, (pp, gp)) in p.points.iter().zip(&g.points).enumerate() {
            if gp.visible {
                err_sum[ji] += math::dist(pp.x, pp.y, gp.x, gp.y);
                err_cnt[ji] += 1;
            }
        }
    }
    let per_joint_mean_error = err_sum
        .iter()
        .zip(&err_cnt)
        .map(|(s, &c)| if c == 0 { 0.0 } else { s / c as f64 })
        .collect();

    Ok(EvalResult {
        ap: ap.mean_ap,
        ap50: ap.at(0.50).unwrap_or(0.0),
        ap75: ap.at(0.75).unwrap_or(0.0),
        per_threshold: ap.per_threshold,
        pck: pcks,
        per_joint_mean_error,
        samples: gts.len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::heatmap::Keypoint;

    fn set(coords: &[(f64, f64)]) -> KeypointSet {
        KeypointSet::new(
            coords
                .iter()
                .map(|&(x, y)| Keypoint {
                    x,
                    y,
                    visible: true,
                })
                .collect(),
        )
    }

    #[test]
    fn pck_perfect_and_hopeless() {
        let gt = vec![set(&[(1.0, 1.0), (5.0, 5.0)])];
        assert_eq!(pck(&gt, &gt, 0.1, 10.0).unwrap(), 1.0);
        let far = vec![set(&[(100.0, 100.0), (100.0, 100.0)])];
        assert_eq!(pck(&far, &gt, 0.1, 10.0).unwrap(), 0.0);
    }

    #[test]
    fn pck_half_within_threshold() {
        // one joint dead on, one 5 px off; tau * norm = 1 px
        let gt = vec![set(&[(1.0, 1.0), (5.0, 5.0)])];
        let pred = vec![set(&[(1.0, 1.0), (10.0, 5.0)])];
        assert_eq!(pck(&pred, &gt, 0.1, 10.0).unwrap(), 0.5);
    }

    #[test]
    fn pck_monotone_in_tau() {
        let gt = vec![set(&[(0.0, 0.0), (4.0, 0.0), (8.0, 0.0)])];
        let pred = vec![set(&[(0.5, 0.0), (5.5, 0.0), (16.0, 0.0)])];
        let mut prev = 0.0;
        for tau in [0.01, 0.05, 0.1, 0.2, 0.5, 1.0] {
            let v = pck(&pred, &gt, tau, 10.0).unwrap();
            assert!(v >= prev);
            prev = v;
        }
    }

    #[test]
    fn pck_errors_without_visible_joints() {
        let gt = vec![KeypointSet::new(alloc::vec![Keypoint::invisible()])];
        assert!(matches!(
            pck(&gt, &gt, 0.1, 10.0),
            Err(Error::EmptyInput(_))
        ));
    }

    #[test]
    fn oks_closed_forms() {
        let gt = set(&[(2.0, 3.0)]);
        assert_eq!(oks(&gt, &gt, 64.0, &[0.1]).unwrap(), 1.0);

        // d^2 = 2 * area * k^2  ->  exp(-1)
        let area = 50.0;
        let k = 0.1;
        let d = math::sqrt(2.0 * area * k * k);
        let pred = set(&[(2.0 + d, 3.0)]);
        let v = oks(&pred, &gt, area, &[k]).unwrap();
        assert!((v - math::exp(-1.0)).abs() < 1e-12);
        assert!((v - 0.3678794).abs() < 1e-7);

        let far = set(&[(1e9, 1e9)]);
        assert!(oks(&far, &gt, area, &[k]).unwrap() < 1e-300);
    }

    #[test]
    fn oks_translation_invariant() {
        let gt = set(&[(2.0, 3.0), (7.0, 1.0)]);
        let pred = set(&[(2.5, 3.5), (6.0, 2.0)]);
        let a = oks(&pred, &gt, 30.0, &[0.1, 0.1]).unwrap();
        let shift = |s: &KeypointSet| {
            KeypointSet::new(
                s.points
                    .iter()
                    .map(|p| Keypoint {
                        x: p.x + 11.0,
                        y: p.y - 4.0,
                        visible: p.visible,
                    })
                    .collect(),
            )
        };
        let b = oks(&shift(&pred), &shift(&gt), 30.0, &[0.1, 0.1]).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn ap_perfect_predictions() {
        let scored = alloc::vec![(1.0, 1.0); 5];
        let r = average_precision(&scored, &OKS_THRESHOLDS).unwrap();
        assert_eq!(r.mean_ap, 1.0);
        assert!(r.per_threshold.iter().all(|(_, ap)| *ap == 1.0));
    }

    #[test]
    fn ap_all_zero_oks() {
        let scored = alloc::vec![(0.0, 0.9), (0.0, 0.1)];
        let r = average_precision(&scored, &OKS_THRESHOLDS).unwrap();
        assert_eq!(r.mean_ap, 0.0);
    }

    #[test]
    fn ap_two_sample_hand_case() {
        // one perfect high-confidence detection, one zero-OKS low-confidence:
        // the ranked list is [TP, failing], so at every threshold the single
        // reachable positive is retrieved first at precision 1.
        let scored = alloc::vec![(1.0, 0.9), (0.0, 0.1)];
        let r = average_precision(&scored, &OKS_THRESHOLDS).unwrap();
        for (_, ap) in &r.per_threshold {
            assert_eq!(*ap, 1.0);
        }
        // misranked: the failing detection outranks the passing one; the
        // 2-element PR curve is (p=0, r=0) then (p=1/2, r=1), so AP = 1/2.
        let misranked = alloc::vec![(1.0, 0.1), (0.0, 0.9)];
        let r2 = average_precision(&misranked, &OKS_THRESHOLDS).unwrap();
        for (_, ap) in &r2.per_threshold {
            assert_eq!(*ap, 0.5);
        }
    }

    #[test]
    fn ap_invariant_under_monotone_confidence_rescaling() {
        let scored: Vec<(f64, f64)> = (0..50)
            .map(|i| {
                let oks = (i as f64 * 0.37).sin().abs();
                let conf = 0.1 + 0.8 * ((i as f64 * 0.11).cos().abs());
                (oks, conf)
            })
            .collect();
        let base = average_precision(&scored, &OKS_THRESHOLDS).unwrap();
        let rescaled: Vec<(f64, f64)> = scored
            .iter()
            .map(|&(o, c)| (o, 0.05 + 0.5 * c * c * c))
            .collect();
        let r = average_precision(&rescaled, &OKS_THRESHOLDS).unwrap();
        assert_eq!(base.per_threshold, r.per_threshold);
    }

    #[test]
    fn ap_empty_input_errors() {
        assert!(matches!(
            average_precision(&[], &OKS_THRESHOLDS),
            Err(Error::EmptyInput(_))
        ));
    }

    #[test]
    fn evaluate_perfect_gives_unit_scores() {
        let schema = KeypointSchema::toy(2);
        let gts = alloc::vec![set(&[(3.0, 4.0), (10.0, 2.0)]), set(&[(1.0, 1.0), (5.0, 9.0)])];
        let preds: Vec<Vec<DecodedKeypoint>> = gts
            .iter()
            .map(|g| {
                g.points
                    .iter()
                    .map(|p| DecodedKeypoint {
                        x: p.x,
                        y: p.y,
                        confidence: 1.0,
                    })
                    .collect()
            })
            .collect();
        let r = evaluate(&preds, &gts, &schema, 256.0, 22.6).unwrap();
        assert_eq!(r.ap, 1.0);
        assert_eq!(r.ap50, 1.0);
        assert_eq!(r.ap75, 1.0);
        for (_, v) in &r.pck {
            assert_eq!(*v, 1.0);
        }
        assert!(r.per_joint_mean_error.iter().all(|&e| e == 0.0));
    }
}
