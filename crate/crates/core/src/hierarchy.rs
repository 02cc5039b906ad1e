//! Grid sub-sampling and the multi-stage sampling hierarchy.
//!
//! Stage 0 is the input cloud with one-hot label distributions. Each later
//! stage groups the previous stage's points by axis-aligned cubic cell, keeps
//! the group centroid, and averages the group's label distributions.

use std::collections::BTreeMap;
use std::sync::OnceLock;

use ndarray::Array2;

use crate::cloud::{Point3, PointCloud};
use crate::error::{Error, Result};
use crate::index::NeighborhoodIndex;

/// Output of one grid sub-sampling pass.
#[derive(Debug, Clone, PartialEq)]
pub struct GridGroups {
    pub positions: Vec<Point3>,
    /// For each output point, the input indices it aggregates (ascending).
    pub groups: Vec<Vec<usize>>,
    pub label_dists: Array2<f64>,
}

/// Groups points by the cell `[k*s, (k+1)*s)^3` containing them; each group
/// becomes its centroid carrying the mean of the members' distributions.
///
/// Output order follows the lexicographic order of cell coordinates.
pub fn grid_subsample(
    positions: &[Point3],
    label_dists: &Array2<f64>,
    cell_size: f64,
) -> Result<GridGroups> {
    grid_subsample_weighted(positions, label_dists, &vec![1; positions.len()], cell_size)
}

/// Like [`grid_subsample`], but member distributions are averaged with the
/// given integer weights (the number of input points each member stands for).
/// The centroid stays unweighted.
pub fn grid_subsample_weighted(
    positions: &[Point3],
    label_dists: &Array2<f64>,
    weights: &[usize],
    cell_size: f64,
) -> Result<GridGroups> {
    if !(cell_size > 0.0) || !cell_size.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "cell_size must be positive, got {cell_size}"
        )));
    }
    for len in [label_dists.nrows(), weights.len()] {
        if len != positions.len() {
            return Err(Error::LengthMismatch {
                expected: positions.len(),
                actual: len,
            });
        }
    }
    let mut cells: BTreeMap<[i64; 3], Vec<usize>> = BTreeMap::new();
    for (i, p) in positions.iter().enumerate() {
        let key = [
            (p[0] / cell_size).floor() as i64,
            (p[1] / cell_size).floor() as i64,
            (p[2] / cell_size).floor() as i64,
        ];
        cells.entry(key).or_default().push(i);
    }

    let k = label_dists.ncols();
    let mut out_pos = Vec::with_capacity(cells.len());
    let mut out_dist = Array2::zeros((cells.len(), k));
    let mut groups = Vec::with_capacity(cells.len());
    for (g, members) in cells.into_values().enumerate() {
        let inv = 1.0 / members.len() as f64;
        let mass: usize = members.iter().map(|&m| weights[m]).sum();
        let mut c = [0.0; 3];
        for &m in &members {
            for a in 0..3 {
                c[a] += positions[m][a];
            }
            let w = weights[m] as f64;
            for (dst, src) in out_dist.row_mut(g).iter_mut().zip(label_dists.row(m)) {
                *dst += w * src;
            }
        }
        out_pos.push([c[0] * inv, c[1] * inv, c[2] * inv]);
        let inv_mass = 1.0 / mass as f64;
        out_dist.row_mut(g).mapv_inplace(|v| v * inv_mass);
        groups.push(members);
    }
    Ok(GridGroups {
        positions: out_pos,
        groups,
        label_dists: out_dist,
    })
}

/// One level of the hierarchy.
#[derive(Debug, Clone)]
pub struct Stage {
    pub positions: Vec<Point3>,
    /// Parent (stage n-1) indices aggregated by each point; empty at stage 0.
    pub pooling_map: Vec<Vec<usize>>,
    /// For stage n-1 points, the stage-n point that absorbed them; empty at stage 0.
    pub parent_assignment: Vec<usize>,
    pub label_dists: Array2<f64>,
    /// Number of input points transitively pooled into each point.
    pub input_counts: Vec<usize>,
    pub stage_radius: f64,
    index: OnceLock<NeighborhoodIndex>,
}

impl Stage {
    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    /// Spatial index over this stage's points, built on first use.
    pub fn index(&self) -> &NeighborhoodIndex {
        self.index.get_or_init(|| {
            NeighborhoodIndex::build(&self.positions).expect("stage positions are finite")
        })
    }
}

impl PartialEq for Stage {
    fn eq(&self, other: &Self) -> bool {
        self.positions == other.positions
            && self.pooling_map == other.pooling_map
            && self.label_dists == other.label_dists
            && self.stage_radius.to_bits() == other.stage_radius.to_bits()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SamplingHierarchy {
    stages: Vec<Stage>,
    num_classes: usize,
}

impl SamplingHierarchy {
    /// Stage n > 0 uses cell `base_cell * 2^(n-1)`; every stage n uses
    /// neighborhood radius `base_radius * 2^n`. Distributions are pooled with
    /// weights equal to the input points each member represents, so a stage
    /// point's distribution is the class histogram of its input points.
    pub fn build(
        cloud: &PointCloud,
        base_cell: f64,
        base_radius: f64,
        num_stages: usize,
    ) -> Result<Self> {
        if num_stages == 0 {
            return Err(Error::InvalidParameter("num_stages must be >= 1".into()));
        }
        if !(base_radius > 0.0) || !(base_cell > 0.0) {
            return Err(Error::InvalidParameter(
                "base_cell and base_radius must be positive".into(),
            ));
        }
        if cloud.is_empty() {
            return Err(Error::EmptyInput);
        }
        let k = cloud.num_classes();
        let mut one_hot = Array2::zeros((cloud.len(), k));
        for (i, &l) in cloud.gt_labels().iter().enumerate() {
            one_hot[[i, l]] = 1.0;
        }
        let mut stages = vec![Stage {
            positions: cloud.positions().to_vec(),
            pooling_map: Vec::new(),
            parent_assignment: Vec::new(),
            label_dists: one_hot,
            input_counts: vec![1; cloud.len()],
            stage_radius: base_radius,
            index: OnceLock::new(),
        }];
        for n in 1..num_stages {
            let prev = &stages[n - 1];
            let cell = base_cell * 2f64.powi(n as i32 - 1);
            let grid = grid_subsample_weighted(
                &prev.positions,
                &prev.label_dists,
                &prev.input_counts,
                cell,
            )?;
            let input_counts = grid
                .groups
                .iter()
                .map(|g| g.iter().map(|&m| prev.input_counts[m]).sum())
                .collect();
            let mut assignment = vec![0; prev.len()];
            for (g, members) in grid.groups.iter().enumerate() {
                for &m in members {
                    assignment[m] = g;
                }
            }
            stages.push(Stage {
                positions: grid.positions,
                pooling_map: grid.groups,
                parent_assignment: assignment,
                label_dists: grid.label_dists,
                input_counts,
                stage_radius: base_radius * 2f64.powi(n as i32),
                index: OnceLock::new(),
            });
        }
        Ok(Self {
            stages,
            num_classes: k,
        })
    }

    pub fn num_stages(&self) -> usize {
        self.stages.len()
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn stage(&self, n: usize) -> Result<&Stage> {
        self.stages.get(n).ok_or_else(|| {
            Error::StageMismatch(format!(
                "stage {n} requested, hierarchy has {}",
                self.stages.len()
            ))
        })
    }

    pub fn stages(&self) -> &[Stage] {
        &self.stages
    }

    /// Input (stage 0) indices that were transitively pooled into each stage-n point.
    pub fn input_members(&self, n: usize) -> Result<Vec<Vec<usize>>> {
        self.stage(n)?;
        let mut members: Vec<Vec<usize>> = (0..self.stages[0].len()).map(|i| vec![i]).collect();
        for stage in &self.stages[1..=n] {
            members = stage
                .pooling_map
                .iter()
                .map(|group| {
                    let mut m: Vec<usize> =
                        group.iter().flat_map(|&g| members[g].iter().copied()).collect();
                    m.sort_unstable();
                    m
                })
                .collect();
        }
        Ok(members)
    }
}
