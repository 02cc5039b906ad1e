//! Boundary extraction and segmentation metrics split by area.
//!
//! A point is a boundary point when some neighbor within the radius carries a
//! different label. mIoU is reported over all points, over ground-truth
//! boundary points, and over the remaining inner points; B-IoU compares the
//! ground-truth and predicted boundary sets directly.

use serde::{Deserialize, Serialize};

use crate::cloud::PointCloud;
use crate::error::{Error, Result};
use crate::index::NeighborhoodIndex;

pub const DEFAULT_BOUNDARY_RADIUS: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundarySource {
    GroundTruth,
    Prediction,
}

/// Sorted, unique indices of boundary points at one stage.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BoundarySet {
    pub stage: usize,
    pub source: BoundarySource,
    pub num_points: usize,
    indices: Vec<usize>,
}

impl BoundarySet {
    pub fn new(
        stage: usize,
        source: BoundarySource,
        num_points: usize,
        mut indices: Vec<usize>,
    ) -> Result<Self> {
        indices.sort_unstable();
        indices.dedup();
        if let Some(&bad) = indices.last().filter(|&&i| i >= num_points) {
            return Err(Error::InvalidParameter(format!(
                "boundary index {bad} out of range for {num_points} points"
            )));
        }
        Ok(Self {
            stage,
            source,
            num_points,
            indices,
        })
    }

    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn contains(&self, i: usize) -> bool {
        self.indices.binary_search(&i).is_ok()
    }

    /// Membership mask over all points of the stage.
    pub fn mask(&self) -> Vec<bool> {
        let mut m = vec![false; self.num_points];
        for &i in &self.indices {
            m[i] = true;
        }
        m
    }

    /// Indices not in the set.
    pub fn complement(&self) -> Vec<usize> {
        let mask = self.mask();
        (0..self.num_points).filter(|&i| !mask[i]).collect()
    }
}

/// Points with at least one neighbor (self excluded) of a different label.
pub fn extract_boundary(
    labels: &[usize],
    index: &NeighborhoodIndex,
    radius: f64,
    stage: usize,
    source: BoundarySource,
) -> Result<BoundarySet> {
    if labels.len() != index.len() {
        return Err(Error::LengthMismatch {
            expected: index.len(),
            actual: labels.len(),
        });
    }
    check_radius(radius)?;
    let indices = (0..labels.len())
        .filter(|&i| {
            index
                .radius_query(i, radius)
                .iter()
                .any(|&j| labels[j] != labels[i])
        })
        .collect();
    BoundarySet::new(stage, source, labels.len(), indices)
}

pub(crate) fn check_radius(radius: f64) -> Result<()> {
    if radius > 0.0 && radius.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!(
            "radius must be positive, got {radius}"
        )))
    }
}

/// Per-class intersection and union counts over some subset of points.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct IouCounts {
    pub intersection: Vec<u64>,
    pub union: Vec<u64>,
}

impl IouCounts {
    pub fn zeros(num_classes: usize) -> Self {
        Self {
            intersection: vec![0; num_classes],
            union: vec![0; num_classes],
        }
    }

    pub fn accumulate(&mut self, other: &IouCounts) {
        for (a, b) in self.intersection.iter_mut().zip(&other.intersection) {
            *a += b;
        }
        for (a, b) in self.union.iter_mut().zip(&other.union) {
            *a += b;
        }
    }

    /// IoU per class; `None` where the class is absent from both truth and prediction.
    pub fn per_class(&self) -> Vec<Option<f64>> {
        self.intersection
            .iter()
            .zip(&self.union)
            .map(|(&i, &u)| (u > 0).then(|| i as f64 / u as f64))
            .collect()
    }

    pub fn mean(&self) -> Option<f64> {
        mean_defined(&self.per_class())
    }
}

fn mean_defined(values: &[Option<f64>]) -> Option<f64> {
    let defined: Vec<f64> = values.iter().flatten().copied().collect();
    (!defined.is_empty()).then(|| defined.iter().sum::<f64>() / defined.len() as f64)
}

/// Result of [`miou_on`].
#[derive(Debug, Clone, PartialEq)]
pub struct SubsetIou {
    pub per_class: Vec<Option<f64>>,
    pub mean: Option<f64>,
    pub counts: IouCounts,
}

pub fn iou_counts(subset: &[usize], gt: &[usize], pred: &[usize], num_classes: usize) -> IouCounts {
    let mut counts = IouCounts::zeros(num_classes);
    for &i in subset {
        let (l, p) = (gt[i], pred[i]);
        if l == p {
            counts.intersection[l] += 1;
            counts.union[l] += 1;
        } else {
            counts.union[l] += 1;
            counts.union[p] += 1;
        }
    }
    counts
}

/// Mean IoU restricted to `subset`. Classes with an empty union are excluded
/// from the mean; an empty subset leaves every class and the mean undefined.
pub fn miou_on(
    subset: &[usize],
    gt: &[usize],
    pred: &[usize],
    num_classes: usize,
) -> Result<SubsetIou> {
    if gt.len() != pred.len() {
        return Err(Error::LengthMismatch {
            expected: gt.len(),
            actual: pred.len(),
        });
    }
    if let Some(&bad) = subset.iter().find(|&&i| i >= gt.len()) {
        return Err(Error::InvalidParameter(format!("subset index {bad} out of range")));
    }
    if let Some(&bad) = gt.iter().chain(pred).find(|&&l| l >= num_classes) {
        return Err(Error::LabelOutOfRange {
            label: bad,
            num_classes,
        });
    }
    let counts = iou_counts(subset, gt, pred, num_classes);
    Ok(SubsetIou {
        per_class: counts.per_class(),
        mean: counts.mean(),
        counts,
    })
}

/// `|a ∩ b| / |a ∪ b|`; two empty sets align perfectly (1.0).
pub fn boundary_iou(b_gt: &BoundarySet, b_pred: &BoundarySet) -> Result<f64> {
    let (inter, union) = boundary_overlap(b_gt, b_pred)?;
    Ok(if union == 0 {
        1.0
    } else {
        inter as f64 / union as f64
    })
}

fn boundary_overlap(a: &BoundarySet, b: &BoundarySet) -> Result<(u64, u64)> {
    if a.stage != b.stage || a.num_points != b.num_points {
        return Err(Error::StageMismatch(format!(
            "boundary sets from stage {} ({} points) and stage {} ({} points)",
            a.stage, a.num_points, b.stage, b.num_points
        )));
    }
    let (mut i, mut j, mut inter) = (0, 0, 0u64);
    while i < a.indices.len() && j < b.indices.len() {
        match a.indices[i].cmp(&b.indices[j]) {
            std::cmp::Ordering::Less => i += 1,
            std::cmp::Ordering::Greater => j += 1,
            std::cmp::Ordering::Equal => {
                inter += 1;
                i += 1;
                j += 1;
            }
        }
    }
    let union = (a.len() + b.len()) as u64 - inter;
    Ok((inter, union))
}

/// Raw counts behind a [`MetricsReport`]; summing these across scenes and
/// then deriving ratios gives the pooled (dataset-level) metrics.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SceneCounts {
    pub overall: IouCounts,
    pub boundary: IouCounts,
    pub inner: IouCounts,
    pub boundary_intersection: u64,
    pub boundary_union: u64,
    pub correct: u64,
    pub total: u64,
    pub class_correct: Vec<u64>,
    pub class_total: Vec<u64>,
    pub boundary_count: u64,
    pub inner_count: u64,
}

impl SceneCounts {
    pub fn zeros(num_classes: usize) -> Self {
        Self {
            overall: IouCounts::zeros(num_classes),
            boundary: IouCounts::zeros(num_classes),
            inner: IouCounts::zeros(num_classes),
            boundary_intersection: 0,
            boundary_union: 0,
            correct: 0,
            total: 0,
            class_correct: vec![0; num_classes],
            class_total: vec![0; num_classes],
            boundary_count: 0,
            inner_count: 0,
        }
    }

    pub fn accumulate(&mut self, other: &SceneCounts) -> Result<()> {
        if other.class_total.len() != self.class_total.len() {
            return Err(Error::InvalidParameter(
                "cannot pool scenes with different class counts".into(),
            ));
        }
        self.overall.accumulate(&other.overall);
        self.boundary.accumulate(&other.boundary);
        self.inner.accumulate(&other.inner);
        self.boundary_intersection += other.boundary_intersection;
        self.boundary_union += other.boundary_union;
        self.correct += other.correct;
        self.total += other.total;
        for (a, b) in self.class_correct.iter_mut().zip(&other.class_correct) {
            *a += b;
        }
        for (a, b) in self.class_total.iter_mut().zip(&other.class_total) {
            *a += b;
        }
        self.boundary_count += other.boundary_count;
        self.inner_count += other.inner_count;
        Ok(())
    }

    pub fn report(&self, radius: f64) -> MetricsReport {
        let ratio = |n: u64, d: u64| if d == 0 { None } else { Some(n as f64 / d as f64) };
        let class_acc: Vec<Option<f64>> = self
            .class_correct
            .iter()
            .zip(&self.class_total)
            .map(|(&c, &t)| ratio(c, t))
            .collect();
        MetricsReport {
            miou_overall: self.overall.mean(),
            miou_boundary: self.boundary.mean(),
            miou_inner: self.inner.mean(),
            b_iou: ratio(self.boundary_intersection, self.boundary_union).unwrap_or(1.0),
            oa: ratio(self.correct, self.total),
            macc: mean_defined(&class_acc),
            per_class_iou: self.overall.per_class(),
            boundary_count: self.boundary_count,
            inner_count: self.inner_count,
            radius,
        }
    }
}

/// Metric suite for one scene or a pooled set of scenes. `None` marks an
/// undefined value and serializes as JSON `null`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub miou_overall: Option<f64>,
    pub miou_boundary: Option<f64>,
    pub miou_inner: Option<f64>,
    pub b_iou: f64,
    pub oa: Option<f64>,
    pub macc: Option<f64>,
    pub per_class_iou: Vec<Option<f64>>,
    pub boundary_count: u64,
    pub inner_count: u64,
    pub radius: f64,
}

/// Counts for one scene, given an index built over its positions.
pub fn scene_counts(
    cloud: &PointCloud,
    index: &NeighborhoodIndex,
    radius: f64,
) -> Result<SceneCounts> {
    let pred = cloud.pred_labels().ok_or(Error::MissingPredictions)?;
    let gt = cloud.gt_labels();
    let k = cloud.num_classes();
    let b_gt = extract_boundary(gt, index, radius, 0, BoundarySource::GroundTruth)?;
    let b_pred = extract_boundary(pred, index, radius, 0, BoundarySource::Prediction)?;
    let all: Vec<usize> = (0..cloud.len()).collect();
    let inner = b_gt.complement();
    let (b_inter, b_union) = boundary_overlap(&b_gt, &b_pred)?;

    let mut counts = SceneCounts::zeros(k);
    counts.overall = iou_counts(&all, gt, pred, k);
    counts.boundary = iou_counts(b_gt.indices(), gt, pred, k);
    counts.inner = iou_counts(&inner, gt, pred, k);
    counts.boundary_intersection = b_inter;
    counts.boundary_union = b_union;
    counts.total = cloud.len() as u64;
    for (&l, &p) in gt.iter().zip(pred) {
        counts.class_total[l] += 1;
        if l == p {
            counts.correct += 1;
            counts.class_correct[l] += 1;
        }
    }
    counts.boundary_count = b_gt.len() as u64;
    counts.inner_count = inner.len() as u64;
    Ok(counts)
}

/// Full metric suite for a cloud carrying predictions.
pub fn full_report(cloud: &PointCloud, radius: f64) -> Result<MetricsReport> {
    if cloud.pred_labels().is_none() {
        return Err(Error::MissingPredictions);
    }
    check_radius(radius)?;
    let index = NeighborhoodIndex::build(cloud.positions())?;
    Ok(scene_counts(cloud, &index, radius)?.report(radius))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn gt_set(n: usize, idx: &[usize]) -> BoundarySet {
        BoundarySet::new(0, BoundarySource::GroundTruth, n, idx.to_vec()).unwrap()
    }

    fn pred_set(n: usize, idx: &[usize]) -> BoundarySet {
        BoundarySet::new(0, BoundarySource::Prediction, n, idx.to_vec()).unwrap()
    }

    #[test]
    fn uniform_labels_have_no_boundary() {
        let pts: Vec<_> = (0..10).map(|i| [i as f64 * 0.05, 0.0, 0.0]).collect();
        let idx = NeighborhoodIndex::build(&pts).unwrap();
        let b = extract_boundary(&[2; 10], &idx, 0.1, 0, BoundarySource::GroundTruth).unwrap();
        assert!(b.is_empty());
    }

    #[test]
    fn two_point_boundary() {
        let idx = NeighborhoodIndex::build(&[[0.0; 3], [0.05, 0.0, 0.0]]).unwrap();
        let b = extract_boundary(&[0, 1], &idx, 0.1, 0, BoundarySource::GroundTruth).unwrap();
        assert_eq!(b.indices(), &[0, 1]);
        assert!(b.complement().is_empty());
    }

    #[test]
    fn extract_rejects_length_mismatch() {
        let idx = NeighborhoodIndex::build(&[[0.0; 3]]).unwrap();
        assert!(extract_boundary(&[0, 1], &idx, 0.1, 0, BoundarySource::GroundTruth).is_err());
        assert!(extract_boundary(&[0], &idx, 0.0, 0, BoundarySource::GroundTruth).is_err());
    }

    #[test]
    fn miou_small_example() {
        let r = miou_on(&[0, 1, 2, 3], &[0, 0, 1, 1], &[0, 1, 1, 1], 2).unwrap();
        assert_eq!(r.per_class, vec![Some(0.5), Some(2.0 / 3.0)]);
        assert!((r.mean.unwrap() - 7.0 / 12.0).abs() < 1e-15);
    }

    #[test]
    fn miou_perfect_and_absent_classes() {
        let gt = [0, 0, 2, 2, 2];
        let r = miou_on(&[0, 1, 2, 3, 4], &gt, &gt, 4).unwrap();
        assert_eq!(r.per_class, vec![Some(1.0), None, Some(1.0), None]);
        assert_eq!(r.mean, Some(1.0));
    }

    #[test]
    fn miou_empty_subset_is_undefined() {
        let r = miou_on(&[], &[0, 1], &[0, 1], 2).unwrap();
        assert_eq!(r.per_class, vec![None, None]);
        assert_eq!(r.mean, None);
    }

    #[test]
    fn two_point_inner_area_is_empty() {
        let cloud = PointCloud::new(vec![[0.0; 3], [0.05, 0.0, 0.0]], vec![0, 1], 2)
            .unwrap()
            .with_predictions(vec![0, 1])
            .unwrap();
        let rep = full_report(&cloud, 0.1).unwrap();
        assert_eq!(rep.miou_inner, None);
        assert_eq!(rep.inner_count, 0);
        assert_eq!(rep.boundary_count, 2);
    }

    #[test]
    fn b_iou_cases() {
        let n = 10;
        assert_eq!(boundary_iou(&gt_set(n, &[1, 2]), &pred_set(n, &[2, 1])).unwrap(), 1.0);
        assert_eq!(boundary_iou(&gt_set(n, &[1, 2]), &pred_set(n, &[3, 4])).unwrap(), 0.0);
        assert_eq!(boundary_iou(&gt_set(n, &[0, 1, 2, 3]), &pred_set(n, &[2, 3, 7])).unwrap(), 0.4);
        assert_eq!(boundary_iou(&gt_set(n, &[]), &pred_set(n, &[])).unwrap(), 1.0);
        assert_eq!(boundary_iou(&gt_set(n, &[]), &pred_set(n, &[5])).unwrap(), 0.0);
        let other_stage = BoundarySet::new(1, BoundarySource::Prediction, n, vec![]).unwrap();
        assert!(boundary_iou(&gt_set(n, &[]), &other_stage).is_err());
    }

    #[test]
    fn boundary_set_validates_indices() {
        assert!(BoundarySet::new(0, BoundarySource::GroundTruth, 3, vec![3]).is_err());
        let b = BoundarySet::new(0, BoundarySource::GroundTruth, 5, vec![4, 1, 4]).unwrap();
        assert_eq!(b.indices(), &[1, 4]);
    }

    #[test]
    fn perfect_report_and_single_class() {
        let pts: Vec<_> = (0..20).map(|i| [i as f64 * 0.04, 0.0, 0.0]).collect();
        let labels: Vec<usize> = (0..20).map(|i| usize::from(i >= 10)).collect();
        let cloud = PointCloud::new(pts.clone(), labels.clone(), 2)
            .unwrap()
            .with_predictions(labels)
            .unwrap();
        let rep = full_report(&cloud, 0.1).unwrap();
        assert_eq!(rep.miou_overall, Some(1.0));
        assert_eq!(rep.miou_boundary, Some(1.0));
        assert_eq!(rep.miou_inner, Some(1.0));
        assert_eq!(rep.b_iou, 1.0);
        assert_eq!(rep.boundary_count + rep.inner_count, 20);

        let single = PointCloud::new(pts, vec![0; 20], 1)
            .unwrap()
            .with_predictions(vec![0; 20])
            .unwrap();
        let rep = full_report(&single, 0.1).unwrap();
        assert_eq!(rep.b_iou, 1.0);
        assert_eq!(rep.miou_boundary, None);
        assert_eq!(rep.boundary_count, 0);
    }

    #[test]
    fn report_requires_predictions() {
        let cloud = PointCloud::new(vec![[0.0; 3]], vec![0], 1).unwrap();
        assert!(matches!(full_report(&cloud, 0.1), Err(Error::MissingPredictions)));
    }

    #[test]
    fn json_uses_null_for_undefined() {
        let single = PointCloud::new(vec![[0.0; 3], [0.01, 0.0, 0.0]], vec![0, 0], 2)
            .unwrap()
            .with_predictions(vec![0, 0])
            .unwrap();
        let v = serde_json::to_value(full_report(&single, 0.1).unwrap()).unwrap();
        assert!(v["miou_boundary"].is_null());
        assert!(v["per_class_iou"][1].is_null());
        assert_eq!(v["per_class_iou"][0], 1.0);
        for key in [
            "miou_overall", "miou_boundary", "miou_inner", "b_iou", "oa", "macc",
            "per_class_iou", "boundary_count", "inner_count", "radius",
        ] {
            assert!(v.get(key).is_some(), "missing {key}");
        }
    }

    fn random_labeled(n: usize, k: usize, seed: u64) -> (Vec<[f64; 3]>, Vec<usize>, Vec<usize>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let pts = (0..n).map(|_| [rng.gen(), rng.gen(), rng.gen::<f64>() * 0.2]).collect();
        let gt = (0..n).map(|_| rng.gen_range(0..k)).collect();
        let pred = (0..n).map(|_| rng.gen_range(0..k)).collect();
        (pts, gt, pred)
    }

    #[test]
    fn matches_brute_force_boundary() {
        let (pts, gt, _) = random_labeled(200, 3, 21);
        let idx = NeighborhoodIndex::build(&pts).unwrap();
        let b = extract_boundary(&gt, &idx, 0.1, 0, BoundarySource::GroundTruth).unwrap();
        let oracle: Vec<usize> = (0..pts.len())
            .filter(|&i| {
                (0..pts.len()).any(|j| {
                    j != i && gt[j] != gt[i] && crate::index::dist2(&pts[i], &pts[j]) <= 0.01
                })
            })
            .collect();
        assert_eq!(b.indices(), &oracle[..]);
    }

    #[test]
    fn boundary_and_inner_recombine_to_overall() {
        let (pts, gt, pred) = random_labeled(300, 4, 8);
        let cloud = PointCloud::new(pts, gt, 4).unwrap().with_predictions(pred).unwrap();
        let idx = NeighborhoodIndex::build(cloud.positions()).unwrap();
        let c = scene_counts(&cloud, &idx, 0.1).unwrap();
        let mut sum = c.boundary.clone();
        sum.accumulate(&c.inner);
        assert_eq!(sum, c.overall);
    }

    #[test]
    fn pooled_identical_scenes_match_single() {
        let (pts, gt, pred) = random_labeled(150, 3, 2);
        let cloud = PointCloud::new(pts, gt, 3).unwrap().with_predictions(pred).unwrap();
        let idx = NeighborhoodIndex::build(cloud.positions()).unwrap();
        let single = scene_counts(&cloud, &idx, 0.1).unwrap();
        let mut pooled = SceneCounts::zeros(3);
        pooled.accumulate(&single).unwrap();
        pooled.accumulate(&single).unwrap();
        let a = single.report(0.1);
        let b = pooled.report(0.1);
        assert_eq!(a.miou_overall, b.miou_overall);
        assert_eq!(a.b_iou, b.b_iou);
        assert_eq!(a.per_class_iou, b.per_class_iou);
        assert_eq!(a.macc, b.macc);
    }

    proptest::proptest! {
        #[test]
        fn boundary_invariant_under_label_permutation(seed in 0u64..1000) {
            let (pts, gt, _) = random_labeled(120, 4, seed);
            let perm = [2usize, 0, 3, 1];
            let relabeled: Vec<usize> = gt.iter().map(|&l| perm[l]).collect();
            let idx = NeighborhoodIndex::build(&pts).unwrap();
            let a = extract_boundary(&gt, &idx, 0.1, 0, BoundarySource::GroundTruth).unwrap();
            let b = extract_boundary(&relabeled, &idx, 0.1, 0, BoundarySource::GroundTruth).unwrap();
            proptest::prop_assert_eq!(a, b);
        }

        #[test]
        fn b_iou_symmetric(
            a in proptest::collection::vec(0usize..50, 0..30),
            b in proptest::collection::vec(0usize..50, 0..30),
        ) {
            let x = boundary_iou(&gt_set(50, &a), &pred_set(50, &b)).unwrap();
            let y = boundary_iou(&gt_set(50, &b), &pred_set(50, &a)).unwrap();
            proptest::prop_assert_eq!(x, y);
            proptest::prop_assert!((0.0..=1.0).contains(&x));
        }
    }
}
