//! Ranking and mask metrics: average precision, ROC-AUC (rank statistic with
//! midrank tie handling), PR curves, mask IoU, and outside-mask energy.
//!
//! Score ties are broken by stable original order where ordering matters
//! (average precision, PR curves); AUC handles ties exactly via midranks.

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Indices sorted by descending score, stable in the original order.
fn rank_order(scores: &[f64]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|&a, &b| scores[b].partial_cmp(&scores[a]).unwrap());
    idx
}

/// Rank-based average precision: mean over positives of the precision at
/// each positive's rank.
pub fn average_precision(scores: &[f64], labels: &[bool]) -> Result<f64> {
    check_lengths(scores, labels)?;
    let positives = labels.iter().filter(|&&l| l).count();
    if positives == 0 {
        return Err(Error::Metric("average precision needs at least one positive".into()));
    }
    let mut tp = 0usize;
    let mut acc = 0.0;
    for (rank, &i) in rank_order(scores).iter().enumerate() {
        if labels[i] {
            tp += 1;
            acc += tp as f64 / (rank + 1) as f64;
        }
    }
    Ok(acc / positives as f64)
}

/// ROC-AUC as the normalized Mann-Whitney U statistic, ties counted half.
pub fn roc_auc(scores: &[f64], labels: &[bool]) -> Result<f64> {
    check_lengths(scores, labels)?;
    let p = labels.iter().filter(|&&l| l).count();
    let n = labels.len() - p;
    if p == 0 || n == 0 {
        return Err(Error::Metric(
            "roc-auc needs at least one positive and one negative".into(),
        ));
    }
    // ascending order; tied scores share their midrank
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|&a, &b| scores[a].partial_cmp(&scores[b]).unwrap());
    let mut rank_sum_pos = 0.0;
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && scores[idx[j + 1]] == scores[idx[i]] {
            j += 1;
        }
        // 1-based ranks i+1..=j+1 share the midrank
        let midrank = (i + 1 + j + 1) as f64 / 2.0;
        for &k in &idx[i..=j] {
            if labels[k] {
                rank_sum_pos += midrank;
            }
        }
        i = j + 1;
    }
    let u = rank_sum_pos - (p * (p + 1)) as f64 / 2.0;
    Ok(u / (p * n) as f64)
}

/// Pool every (sample, class) score into one binary problem.
pub fn micro_auc(scores: &[Vec<f64>], labels: &[Vec<bool>]) -> Result<f64> {
    let mut s = Vec::new();
    let mut l = Vec::new();
    for (row_s, row_l) in scores.iter().zip(labels) {
        s.extend_from_slice(row_s);
        l.extend_from_slice(row_l);
    }
    roc_auc(&s, &l)
}

/// IoU between the thresholded saliency mask and a binary mask; 1.0 when
/// both are empty.
pub fn mask_iou(vis: &Tensor, seg: &Tensor, threshold: f64) -> Result<f64> {
    if vis.shape() != seg.shape() {
        return Err(Error::ShapeMismatch {
            context: "mask_iou",
            left: vis.shape().to_vec(),
            right: seg.shape().to_vec(),
        });
    }
    let mut intersection = 0usize;
    let mut union = 0usize;
    for (&v, &m) in vis.data().iter().zip(seg.data()) {
        let a = v >= threshold;
        let b = m != 0.0;
        if a && b {
            intersection += 1;
        }
        if a || b {
            union += 1;
        }
    }
    if union == 0 {
        return Ok(1.0);
    }
    Ok(intersection as f64 / union as f64)
}

/// Fraction of total saliency mass lying outside the segmentation mask.
pub fn outside_mask_energy(vis: &Tensor, seg: &Tensor) -> Result<f64> {
    if vis.shape() != seg.shape() {
        return Err(Error::ShapeMismatch {
            context: "outside_mask_energy",
            left: vis.shape().to_vec(),
            right: seg.shape().to_vec(),
        });
    }
    let mut outside = 0.0;
    let mut total = 0.0;
    for (&v, &m) in vis.data().iter().zip(seg.data()) {
        total += v;
        if m == 0.0 {
            outside += v;
        }
    }
    Ok(outside / total.max(1e-12))
}

/// One (recall, precision) point per distinct score threshold, descending.
pub fn pr_curve(scores: &[f64], labels: &[bool]) -> Result<Vec<(f64, f64)>> {
    check_lengths(scores, labels)?;
    let positives = labels.iter().filter(|&&l| l).count();
    if positives == 0 {
        return Err(Error::Metric("pr curve needs at least one positive".into()));
    }
    let order = rank_order(scores);
    let mut points = Vec::new();
    let mut tp = 0usize;
    let mut taken = 0usize;
    for (pos, &i) in order.iter().enumerate() {
        if labels[i] {
            tp += 1;
        }
        taken += 1;
        let next_differs = pos + 1 == order.len() || scores[order[pos + 1]] != scores[i];
        if next_differs {
            points.push((tp as f64 / positives as f64, tp as f64 / taken as f64));
        }
    }
    Ok(points)
}

fn check_lengths(scores: &[f64], labels: &[bool]) -> Result<()> {
    if scores.len() != labels.len() {
        return Err(Error::ShapeMismatch {
            context: "scores vs labels",
            left: vec![scores.len()],
            right: vec![labels.len()],
        });
    }
    if scores.iter().any(|v| !v.is_finite()) {
        return Err(Error::Metric("scores must be finite".into()));
    }
    Ok(())
}

/// Full evaluation summary over one split. Classes whose AP or AUC is
/// undefined (no positives, or single-class labels) carry `None` and are
/// excluded from the aggregate rows.
#[derive(Clone, Debug)]
pub struct EvalReport {
    pub per_class_ap: Vec<Option<f64>>,
    pub per_class_auc: Vec<Option<f64>>,
    pub mean_ap: f64,
    pub median_ap: f64,
    pub micro_auc: Option<f64>,
    pub macro_auc: Option<f64>,
    pub mean_mask_iou: f64,
    pub mean_outside_energy: f64,
    pub pr_curves: Vec<Vec<(f64, f64)>>,
}

impl EvalReport {
    /// Build the report from per-sample score/label rows plus per-sample
    /// mask diagnostics.
    pub fn compute(
        scores: &[Vec<f64>],
        labels: &[Vec<bool>],
        ious: &[f64],
        energies: &[f64],
    ) -> Result<EvalReport> {
        if scores.is_empty() || scores.len() != labels.len() {
            return Err(Error::Metric("report needs matching, nonempty rows".into()));
        }
        let k = scores[0].len();
        let mut per_class_ap = Vec::with_capacity(k);
        let mut per_class_auc = Vec::with_capacity(k);
        let mut pr_curves = Vec::with_capacity(k);
        for class in 0..k {
            let s: Vec<f64> = scores.iter().map(|row| row[class]).collect();
            let l: Vec<bool> = labels.iter().map(|row| row[class]).collect();
            per_class_ap.push(average_precision(&s, &l).ok());
            per_class_auc.push(roc_auc(&s, &l).ok());
            pr_curves.push(pr_curve(&s, &l).unwrap_or_default());
        }
        let defined: Vec<f64> = per_class_ap.iter().flatten().copied().collect();
        let mean_ap = mean(&defined);
        let median_ap = median(&defined);
        let defined_auc: Vec<f64> = per_class_auc.iter().flatten().copied().collect();
        let macro_auc = if defined_auc.is_empty() {
            None
        } else {
            Some(mean(&defined_auc))
        };
        Ok(EvalReport {
            per_class_ap,
            per_class_auc,
            mean_ap,
            median_ap,
            micro_auc: micro_auc(scores, labels).ok(),
            macro_auc,
            mean_mask_iou: mean(ious),
            mean_outside_energy: mean(energies),
            pr_curves,
        })
    }

    /// Human-readable table: one row per class plus summary rows.
    pub fn to_tsv(&self) -> String {
        let mut out = String::from("row\tap\tauc\n");
        for (class, (ap, auc)) in self.per_class_ap.iter().zip(&self.per_class_auc).enumerate() {
            out.push_str(&format!("class_{class}\t{}\t{}\n", opt(ap), opt(auc)));
        }
        out.push_str(&format!("mean\t{:.6}\t{}\n", self.mean_ap, opt(&self.macro_auc)));
        out.push_str(&format!("median\t{:.6}\t-\n", self.median_ap));
        out.push_str(&format!("micro_auc\t-\t{}\n", opt(&self.micro_auc)));
        out.push_str(&format!("mask_iou\t{:.6}\t-\n", self.mean_mask_iou));
        out.push_str(&format!("outside_energy\t{:.6}\t-\n", self.mean_outside_energy));
        out
    }

    /// Machine-readable `key = value` lines.
    pub fn to_kv(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!("num_classes = {}\n", self.per_class_ap.len()));
        out.push_str(&format!("mean_ap = {:.12}\n", self.mean_ap));
        out.push_str(&format!("median_ap = {:.12}\n", self.median_ap));
        out.push_str(&format!("micro_auc = {}\n", opt_kv(&self.micro_auc)));
        out.push_str(&format!("macro_auc = {}\n", opt_kv(&self.macro_auc)));
        out.push_str(&format!("mean_mask_iou = {:.12}\n", self.mean_mask_iou));
        out.push_str(&format!("mean_outside_energy = {:.12}\n", self.mean_outside_energy));
        for (class, ap) in self.per_class_ap.iter().enumerate() {
            out.push_str(&format!("ap.{class} = {}\n", opt_kv(ap)));
        }
        for (class, auc) in self.per_class_auc.iter().enumerate() {
            out.push_str(&format!("auc.{class} = {}\n", opt_kv(auc)));
        }
        out
    }

    /// `recall<TAB>precision` lines for one class, for external plotting.
    pub fn pr_curve_text(&self, class: usize) -> String {
        let mut out = String::new();
        for (r, p) in &self.pr_curves[class] {
            out.push_str(&format!("{r:.6}\t{p:.6}\n"));
        }
        out
    }
}

fn opt(v: &Option<f64>) -> String {
    match v {
        Some(x) => format!("{x:.6}"),
        None => "-".into(),
    }
}

fn opt_kv(v: &Option<f64>) -> String {
    match v {
        Some(x) => format!("{x:.12}"),
        None => "undefined".into(),
    }
}

fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return 0.0;
    }
    xs.iter().sum::<f64>() / xs.len() as f64
}

fn median(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return 0.0;
    }
    let mut v = xs.to_vec();
    v.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let mid = v.len() / 2;
    if v.len() % 2 == 1 {
        v[mid]
    } else {
        0.5 * (v[mid - 1] + v[mid])
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::Rng;

    #[test]
    fn ap_perfect_ranking_is_one() {
        let ap = average_precision(&[0.9, 0.8, 0.7], &[true, true, true]).unwrap();
        assert_eq!(ap, 1.0);
    }

    #[test]
    fn ap_hand_case() {
        let ap = average_precision(&[0.9, 0.8, 0.7], &[true, false, true]).unwrap();
        assert!((ap - 5.0 / 6.0).abs() < 1e-15);
    }

    #[test]
    fn ap_positive_at_bottom() {
        let ap = average_precision(&[0.1, 0.9], &[true, false]).unwrap();
        assert_eq!(ap, 0.5);
    }

    #[test]
    fn ap_without_positives_is_undefined() {
        assert!(average_precision(&[0.5, 0.4], &[false, false]).is_err());
    }

    #[test]
    fn ap_invariant_under_monotone_score_transforms() {
        let mut rng = Rng::new(3);
        for _ in 0..30 {
            let n = 2 + rng.below(10);
            let scores: Vec<f64> = (0..n).map(|_| rng.next_f64()).collect();
            let labels: Vec<bool> = (0..n).map(|_| rng.next_f64() < 0.5).collect();
            if !labels.iter().any(|&l| l) {
                continue;
            }
            let base = average_precision(&scores, &labels).unwrap();
            let exp: Vec<f64> = scores.iter().map(|&s| s.exp()).collect();
            let affine: Vec<f64> = scores.iter().map(|&s| 3.0 * s + 10.0).collect();
            assert_eq!(base, average_precision(&exp, &labels).unwrap());
            assert_eq!(base, average_precision(&affine, &labels).unwrap());
        }
    }

    #[test]
    fn auc_perfectly_separated_is_one() {
        let auc = roc_auc(&[0.9, 0.8, 0.2, 0.1], &[true, true, false, false]).unwrap();
        assert_eq!(auc, 1.0);
    }

    #[test]
    fn auc_all_ties_is_half() {
        let auc = roc_auc(&[0.4, 0.4, 0.4], &[true, false, true]).unwrap();
        assert_eq!(auc, 0.5);
    }

    #[test]
    fn auc_pair_count_hand_case() {
        let auc = roc_auc(&[0.2, 0.4, 0.6, 0.8], &[false, true, false, true]).unwrap();
        assert_eq!(auc, 0.75);
    }

    #[test]
    fn auc_degenerate_labels_rejected() {
        assert!(roc_auc(&[0.1, 0.2], &[true, true]).is_err());
        assert!(roc_auc(&[0.1, 0.2], &[false, false]).is_err());
    }

    #[test]
    fn auc_complement_symmetry_without_ties() {
        let mut rng = Rng::new(5);
        for _ in 0..30 {
            let n = 4 + rng.below(12);
            let mut scores: Vec<f64> = (0..n).map(|_| rng.next_f64()).collect();
            scores.dedup_by(|a, b| a == b);
            let labels: Vec<bool> = (0..scores.len()).map(|i| i % 2 == 0).collect();
            let neg: Vec<f64> = scores.iter().map(|&s| -s).collect();
            let a = roc_auc(&scores, &labels).unwrap();
            let b = roc_auc(&neg, &labels).unwrap();
            assert!((a + b - 1.0).abs() < 1e-12, "{a} + {b}");
        }
    }

    #[test]
    fn iou_cases() {
        let a = Tensor::new(&[1, 2, 2], vec![1.0, 1.0, 0.0, 0.0]).unwrap();
        assert_eq!(mask_iou(&a, &a, 0.5).unwrap(), 1.0);
        let b = Tensor::new(&[1, 2, 2], vec![0.0, 0.0, 1.0, 1.0]).unwrap();
        assert_eq!(mask_iou(&a, &b, 0.5).unwrap(), 0.0);
        let z = Tensor::zeros(&[1, 2, 2]);
        assert_eq!(mask_iou(&z, &z, 0.5).unwrap(), 1.0);
        // half-overlapping equal-area regions: IoU = 1/3
        let left = Tensor::new(&[1, 1, 4], vec![1.0, 1.0, 0.0, 0.0]).unwrap();
        let mid = Tensor::new(&[1, 1, 4], vec![0.0, 1.0, 1.0, 0.0]).unwrap();
        assert!((mask_iou(&left, &mid, 0.5).unwrap() - 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn outside_energy_cases() {
        let seg = Tensor::new(&[1, 2, 2], vec![1.0, 1.0, 0.0, 0.0]).unwrap();
        let inside = Tensor::new(&[1, 2, 2], vec![0.3, 0.7, 0.0, 0.0]).unwrap();
        assert_eq!(outside_mask_energy(&inside, &seg).unwrap(), 0.0);
        // uniform saliency over a mask covering half the pixels
        let uniform = Tensor::filled(&[1, 2, 2], 0.25);
        assert!((outside_mask_energy(&uniform, &seg).unwrap() - 0.5).abs() < 1e-12);
        let zero = Tensor::zeros(&[1, 2, 2]);
        assert_eq!(outside_mask_energy(&zero, &seg).unwrap(), 0.0);
    }

    #[test]
    fn pr_curve_shapes() {
        // all positives ranked first: precision pinned at 1 until recall 1
        let pts = pr_curve(&[0.9, 0.8, 0.3, 0.2], &[true, true, false, false]).unwrap();
        assert_eq!(pts[0], (0.5, 1.0));
        assert_eq!(pts[1], (1.0, 1.0));
        assert_eq!(pts.last().unwrap().0, 1.0);

        // reversed two-sample ranking
        let pts = pr_curve(&[0.1, 0.9], &[true, false]).unwrap();
        assert_eq!(pts, vec![(0.0, 0.0), (1.0, 0.5)]);
    }

    #[test]
    fn pr_curve_recall_nondecreasing() {
        let mut rng = Rng::new(9);
        for _ in 0..20 {
            let n = 3 + rng.below(15);
            let scores: Vec<f64> = (0..n).map(|_| (rng.below(5) as f64) / 4.0).collect();
            let labels: Vec<bool> = (0..n).map(|_| rng.next_f64() < 0.4).collect();
            if !labels.iter().any(|&l| l) {
                continue;
            }
            let pts = pr_curve(&scores, &labels).unwrap();
            for pair in pts.windows(2) {
                assert!(pair[1].0 >= pair[0].0);
            }
            assert_eq!(pts.last().unwrap().0, 1.0);
        }
    }

    #[test]
    fn report_aggregates_and_serializes() {
        let scores = vec![
            vec![0.9, 0.2, 0.3],
            vec![0.8, 0.7, 0.1],
            vec![0.2, 0.9, 0.6],
            vec![0.1, 0.4, 0.8],
        ];
        let labels = vec![
            vec![true, false, false],
            vec![true, true, false],
            vec![false, true, true],
            vec![false, false, true],
        ];
        let report =
            EvalReport::compute(&scores, &labels, &[0.5, 0.6, 0.7, 0.8], &[0.1, 0.2, 0.3, 0.4])
                .unwrap();
        assert!(report.mean_ap > 0.0 && report.mean_ap <= 1.0);
        assert!((report.mean_mask_iou - 0.65).abs() < 1e-12);
        let tsv = report.to_tsv();
        // 1 header + 3 classes + 5 summary rows
        assert_eq!(tsv.lines().count(), 9);
        let kv = report.to_kv();
        assert!(kv.contains("mean_ap = "));
        assert!(!report.pr_curve_text(0).is_empty());
    }
}
