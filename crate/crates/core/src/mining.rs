//! Ground-truth boundary sets at every sub-sampling stage.
//!
//! Sub-sampled points carry a label distribution rather than a label. Three
//! ways of turning those into boundary sets are provided: compare the argmax
//! labels, threshold a symmetric KL divergence between neighboring
//! distributions, or borrow the label of the nearest input point.

use std::fmt;
use std::str::FromStr;

use ndarray::ArrayView1;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hierarchy::SamplingHierarchy;
use crate::metrics::{extract_boundary, BoundarySet, BoundarySource};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum MiningVariant {
    #[default]
    Argmax,
    KlThreshold,
    Nearest,
}

impl MiningVariant {
    pub fn name(self) -> &'static str {
        match self {
            MiningVariant::Argmax => "argmax",
            MiningVariant::KlThreshold => "kl",
            MiningVariant::Nearest => "nearest",
        }
    }
}

impl fmt::Display for MiningVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for MiningVariant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "argmax" => Ok(MiningVariant::Argmax),
            "kl" | "kl_threshold" | "kl-threshold" => Ok(MiningVariant::KlThreshold),
            "nearest" => Ok(MiningVariant::Nearest),
            other => Err(Error::InvalidParameter(format!("unknown mining variant `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MiningConfig {
    pub variant: MiningVariant,
    pub kl_threshold: f64,
    pub kl_epsilon: f64,
}

impl Default for MiningConfig {
    fn default() -> Self {
        Self {
            variant: MiningVariant::Argmax,
            kl_threshold: 0.5,
            kl_epsilon: 1e-6,
        }
    }
}

impl MiningConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.kl_threshold >= 0.0) {
            return Err(Error::InvalidParameter("kl_threshold must be >= 0".into()));
        }
        if !(self.kl_epsilon > 0.0 && self.kl_epsilon <= 1e-3) {
            return Err(Error::InvalidParameter("kl_epsilon must lie in (0, 1e-3]".into()));
        }
        Ok(())
    }
}

/// Index of the largest entry; ties go to the lowest index.
pub(crate) fn argmax(row: ArrayView1<f64>) -> usize {
    let mut best = 0;
    for (k, &v) in row.iter().enumerate() {
        if v > row[best] {
            best = k;
        }
    }
    best
}

pub fn stage_labels_argmax(hierarchy: &SamplingHierarchy, stage: usize) -> Result<Vec<usize>> {
    let s = hierarchy.stage(stage)?;
    Ok(s.label_dists.rows().into_iter().map(argmax).collect())
}

/// Labels of the input point nearest to each stage point.
pub fn stage_labels_nearest(hierarchy: &SamplingHierarchy, stage: usize) -> Result<Vec<usize>> {
    let s = hierarchy.stage(stage)?;
    let input_labels = stage_labels_argmax(hierarchy, 0)?;
    if stage == 0 {
        return Ok(input_labels);
    }
    let input_index = hierarchy.stage(0)?.index();
    Ok(s
        .positions
        .iter()
        .map(|p| input_labels[input_index.nearest(p)])
        .collect())
}

/// Symmetrized KL divergence between ε-smoothed distributions.
pub fn symmetric_kl(p: ArrayView1<f64>, q: ArrayView1<f64>, epsilon: f64) -> f64 {
    let norm = 1.0 + epsilon * p.len() as f64;
    p.iter()
        .zip(q.iter())
        .map(|(&a, &b)| {
            let a = (a + epsilon) / norm;
            let b = (b + epsilon) / norm;
            (a - b) * (a.ln() - b.ln())
        })
        .sum()
}

pub fn mine_stage_boundaries(
    hierarchy: &SamplingHierarchy,
    stage: usize,
    config: &MiningConfig,
) -> Result<BoundarySet> {
    config.validate()?;
    let s = hierarchy.stage(stage)?;
    let index = s.index();
    let radius = s.stage_radius;
    match config.variant {
        MiningVariant::Argmax => {
            let labels = stage_labels_argmax(hierarchy, stage)?;
            extract_boundary(&labels, index, radius, stage, BoundarySource::GroundTruth)
        }
        MiningVariant::Nearest => {
            let labels = stage_labels_nearest(hierarchy, stage)?;
            extract_boundary(&labels, index, radius, stage, BoundarySource::GroundTruth)
        }
        MiningVariant::KlThreshold => {
            let dists = &s.label_dists;
            let indices = (0..s.len())
                .filter(|&i| {
                    index.radius_query(i, radius).iter().any(|&j| {
                        symmetric_kl(dists.row(i), dists.row(j), config.kl_epsilon)
                            > config.kl_threshold
                    })
                })
                .collect();
            BoundarySet::new(stage, BoundarySource::GroundTruth, s.len(), indices)
        }
    }
}

/// Disagreement between soft (distribution) and hard (re-voted) labels at a stage.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct StageDisagreement {
    pub stage: usize,
    pub points: usize,
    pub disagreements: usize,
}

/// Compares argmax of the propagated distribution with iterated majority
/// voting over hard labels, stage by stage. Empty for a single-stage hierarchy.
pub fn soft_vs_hard_divergence(hierarchy: &SamplingHierarchy) -> Vec<StageDisagreement> {
    let k = hierarchy.num_classes();
    let stages = hierarchy.stages();
    let mut hard: Vec<usize> = stages[0].label_dists.rows().into_iter().map(argmax).collect();
    let mut report = Vec::new();
    for (n, stage) in stages.iter().enumerate().skip(1) {
        hard = stage
            .pooling_map
            .iter()
            .map(|group| {
                let mut votes = vec![0usize; k];
                for &g in group {
                    votes[hard[g]] += 1;
                }
                let mut best = 0;
                for c in 1..k {
                    if votes[c] > votes[best] {
                        best = c;
                    }
                }
                best
            })
            .collect();
        let disagreements = stage
            .label_dists
            .rows()
            .into_iter()
            .zip(&hard)
            .filter(|(row, &h)| argmax(row.view()) != h)
            .count();
        report.push(StageDisagreement {
            stage: n,
            points: stage.len(),
            disagreements,
        });
    }
    report
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cloud::PointCloud;
    use ndarray::array;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_cloud(n: usize, k: usize, seed: u64) -> PointCloud {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let pos = (0..n).map(|_| [rng.gen(), rng.gen(), rng.gen::<f64>() * 0.3]).collect();
        let labels = (0..n).map(|_| rng.gen_range(0..k)).collect();
        PointCloud::new(pos, labels, k).unwrap()
    }

    fn collinear() -> SamplingHierarchy {
        let pos = (0..9).map(|i| [0.05 + 0.1 * i as f64, 0.0, 0.0]).collect();
        let cloud = PointCloud::new(pos, vec![0, 0, 0, 0, 0, 1, 1, 1, 1], 2).unwrap();
        SamplingHierarchy::build(&cloud, 0.3, 0.2, 2).unwrap()
    }

    #[test]
    fn argmax_tie_breaks_low() {
        assert_eq!(argmax(array![0.5, 0.5].view()), 0);
        assert_eq!(argmax(array![2.0 / 3.0, 1.0 / 3.0].view()), 0);
        assert_eq!(argmax(array![0.2, 0.4, 0.4].view()), 1);
    }

    #[test]
    fn stage_zero_argmax_is_ground_truth() {
        let cloud = random_cloud(80, 3, 4);
        let h = SamplingHierarchy::build(&cloud, 0.2, 0.1, 2).unwrap();
        assert_eq!(stage_labels_argmax(&h, 0).unwrap(), cloud.gt_labels());
        assert!(stage_labels_argmax(&h, 2).is_err());
    }

    #[test]
    fn stage_zero_all_variants_match_extraction() {
        let cloud = random_cloud(200, 3, 17);
        let h = SamplingHierarchy::build(&cloud, 0.2, 0.1, 3).unwrap();
        let expect = extract_boundary(
            cloud.gt_labels(),
            h.stage(0).unwrap().index(),
            0.1,
            0,
            BoundarySource::GroundTruth,
        )
        .unwrap();
        for variant in [MiningVariant::Argmax, MiningVariant::KlThreshold, MiningVariant::Nearest] {
            let cfg = MiningConfig {
                variant,
                ..Default::default()
            };
            assert_eq!(mine_stage_boundaries(&h, 0, &cfg).unwrap(), expect, "{variant}");
        }
    }

    #[test]
    fn collinear_stage_one_boundary() {
        let h = collinear();
        assert_eq!(stage_labels_argmax(&h, 1).unwrap(), vec![0, 0, 1]);
        // Stage-1 centroids are 0.3 apart and the stage radius is 0.4.
        let b = mine_stage_boundaries(&h, 1, &MiningConfig::default()).unwrap();
        assert_eq!(b.indices(), &[1, 2]);
    }

    #[test]
    fn identical_distributions_are_not_kl_boundaries() {
        let pos = vec![[0.0, 0.0, 0.0], [0.1, 0.0, 0.0], [0.6, 0.0, 0.0], [0.7, 0.0, 0.0]];
        let cloud = PointCloud::new(pos, vec![0, 1, 0, 1], 2).unwrap();
        let h = SamplingHierarchy::build(&cloud, 0.5, 0.1, 2).unwrap();
        let s1 = h.stage(1).unwrap();
        assert_eq!(s1.label_dists.row(0), s1.label_dists.row(1));
        let cfg = MiningConfig {
            variant: MiningVariant::KlThreshold,
            ..Default::default()
        };
        assert!(mine_stage_boundaries(&h, 1, &cfg).unwrap().is_empty());
    }

    #[test]
    fn kl_threshold_extremes() {
        let cloud = random_cloud(300, 3, 23);
        let h = SamplingHierarchy::build(&cloud, 0.15, 0.1, 2).unwrap();
        let s1 = h.stage(1).unwrap();
        let zero = MiningConfig {
            variant: MiningVariant::KlThreshold,
            kl_threshold: 0.0,
            ..Default::default()
        };
        let mined = mine_stage_boundaries(&h, 1, &zero).unwrap();
        let expect: Vec<usize> = (0..s1.len())
            .filter(|&i| {
                s1.index()
                    .radius_query(i, s1.stage_radius)
                    .iter()
                    .any(|&j| s1.label_dists.row(i) != s1.label_dists.row(j))
            })
            .collect();
        assert_eq!(mined.indices(), &expect[..]);
        let inf = MiningConfig {
            kl_threshold: f64::INFINITY,
            ..zero
        };
        assert!(mine_stage_boundaries(&h, 1, &inf).unwrap().is_empty());
    }

    #[test]
    fn symmetric_kl_properties() {
        let p = array![0.7, 0.2, 0.1];
        let q = array![0.1, 0.3, 0.6];
        let d = symmetric_kl(p.view(), q.view(), 1e-6);
        assert!(d > 0.0);
        assert_eq!(d, symmetric_kl(q.view(), p.view(), 1e-6));
        assert_eq!(symmetric_kl(p.view(), p.view(), 1e-6), 0.0);
        // Thirds: (1/3) ln 2 in each direction.
        let a = array![2.0 / 3.0, 1.0 / 3.0];
        let b = array![1.0 / 3.0, 2.0 / 3.0];
        let d = symmetric_kl(a.view(), b.view(), 1e-6);
        assert!((d - 2.0 / 3.0 * 2f64.ln()).abs() < 1e-5);
    }

    #[test]
    fn config_validation() {
        assert!(MiningConfig::default().validate().is_ok());
        let bad = MiningConfig {
            kl_epsilon: 0.01,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
        let bad = MiningConfig {
            kl_threshold: -1.0,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
        assert!("bogus".parse::<MiningVariant>().is_err());
        assert_eq!("kl".parse::<MiningVariant>().unwrap(), MiningVariant::KlThreshold);
    }

    #[test]
    fn uniform_cloud_never_disagrees() {
        let mut cloud = random_cloud(200, 1, 3);
        cloud = PointCloud::new(cloud.positions().to_vec(), vec![0; 200], 1).unwrap();
        let h = SamplingHierarchy::build(&cloud, 0.1, 0.1, 4).unwrap();
        let rep = soft_vs_hard_divergence(&h);
        assert_eq!(rep.len(), 3);
        assert!(rep.iter().all(|s| s.disagreements == 0));
    }

    #[test]
    fn single_stage_divergence_is_empty() {
        let cloud = random_cloud(10, 2, 0);
        let h = SamplingHierarchy::build(&cloud, 0.1, 0.1, 1).unwrap();
        assert!(soft_vs_hard_divergence(&h).is_empty());
    }

    #[test]
    fn argmax_matches_strict_majority_of_pooled_inputs() {
        let cloud = random_cloud(400, 3, 31);
        let h = SamplingHierarchy::build(&cloud, 0.12, 0.1, 3).unwrap();
        for n in 0..3 {
            let labels = stage_labels_argmax(&h, n).unwrap();
            for (i, members) in h.input_members(n).unwrap().iter().enumerate() {
                let mut votes = [0usize; 3];
                for &m in members {
                    votes[cloud.gt_labels()[m]] += 1;
                }
                let max = *votes.iter().max().unwrap();
                if votes.iter().filter(|&&v| v == max).count() == 1 {
                    assert_eq!(votes[labels[i]], max);
                }
            }
        }
    }

    /// Triples of points per 0.15 m cell with labels (a, a, b): never tied.
    fn tie_free_cloud(seed: u64) -> PointCloud {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut pos = Vec::new();
        let mut labels = Vec::new();
        for cx in 0..6 {
            for cy in 0..6 {
                let a = rng.gen_range(0..3);
                let b = rng.gen_range(0..3);
                for l in [a, a, b] {
                    pos.push([
                        0.15 * (cx as f64 + rng.gen_range(0.05..0.95)),
                        0.15 * (cy as f64 + rng.gen_range(0.05..0.95)),
                        0.15 * rng.gen_range(0.05..0.95),
                    ]);
                    labels.push(l);
                }
            }
        }
        PointCloud::new(pos, labels, 3).unwrap()
    }

    proptest::proptest! {
        #[test]
        fn argmax_mining_invariant_under_relabeling(seed in 0u64..300, p in 0usize..6) {
            let perms = [[0, 1, 2], [0, 2, 1], [1, 0, 2], [1, 2, 0], [2, 0, 1], [2, 1, 0]];
            let perm = perms[p];
            let cloud = tie_free_cloud(seed);
            let relabeled = PointCloud::new(
                cloud.positions().to_vec(),
                cloud.gt_labels().iter().map(|&l| perm[l]).collect(),
                3,
            ).unwrap();
            let h = SamplingHierarchy::build(&cloud, 0.15, 0.1, 2).unwrap();
            let g = SamplingHierarchy::build(&relabeled, 0.15, 0.1, 2).unwrap();
            for n in 0..2 {
                let a = mine_stage_boundaries(&h, n, &MiningConfig::default()).unwrap();
                let b = mine_stage_boundaries(&g, n, &MiningConfig::default()).unwrap();
                proptest::prop_assert_eq!(a, b);
            }
        }
    }
}
