//! Contrastive boundary loss on point features.
//!
//! For every ground-truth boundary point, neighbors sharing its label are
//! positives and all other neighbors are negatives; the loss is the negative
//! log of the positive share of `exp(-d(f_i, f_k) / tau)` mass, averaged over
//! the boundary points that have at least one positive. `d` is the Euclidean
//! distance between raw feature rows.

use ndarray::{Array2, ArrayView1};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::index::NeighborhoodIndex;
use crate::metrics::{check_radius, BoundarySet};

/// Per-point features at one stage.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    pub stage: usize,
    pub features: Array2<f64>,
}

impl FeatureMatrix {
    pub fn new(stage: usize, features: Array2<f64>) -> Result<Self> {
        check_finite_rows(&features)?;
        Ok(Self { stage, features })
    }

    pub fn rows(&self) -> usize {
        self.features.nrows()
    }

    pub fn dim(&self) -> usize {
        self.features.ncols()
    }
}

pub(crate) fn check_finite_rows(m: &Array2<f64>) -> Result<()> {
    for (row, r) in m.rows().into_iter().enumerate() {
        if r.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite { row });
        }
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CblConfig {
    pub temperature: f64,
    pub lambda: f64,
}

impl Default for CblConfig {
    fn default() -> Self {
        Self {
            temperature: 1.0,
            lambda: 0.1,
        }
    }
}

impl CblConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.temperature > 0.0 && self.temperature.is_finite()) {
            return Err(Error::InvalidParameter("temperature must be positive".into()));
        }
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(Error::InvalidParameter("lambda must be non-negative".into()));
        }
        Ok(())
    }
}

/// Contribution of one boundary point.
#[derive(Debug, Clone, PartialEq)]
pub struct CblTerm {
    pub point: usize,
    pub loss: f64,
    pub positives: usize,
    pub negatives: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CblOutput {
    pub loss: f64,
    /// Terms for the boundary points that entered the average.
    pub terms: Vec<CblTerm>,
    /// Boundary points skipped for lacking a positive neighbor.
    pub skipped: usize,
}

fn euclidean(a: ArrayView1<f64>, b: ArrayView1<f64>) -> f64 {
    a.iter()
        .zip(b.iter())
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

fn log_sum_exp(values: impl Iterator<Item = f64> + Clone) -> f64 {
    let max = values.clone().fold(f64::NEG_INFINITY, f64::max);
    max + values.map(|v| (v - max).exp()).sum::<f64>().ln()
}

/// Loss and (optionally) gradient given precomputed neighbor lists (self excluded).
pub fn cbl_with_neighbors(
    features: &Array2<f64>,
    boundary: &[usize],
    labels: &[usize],
    neighbors: &[Vec<usize>],
    temperature: f64,
    want_grad: bool,
) -> Result<(CblOutput, Option<Array2<f64>>)> {
    let n = features.nrows();
    if labels.len() != n || neighbors.len() != n {
        return Err(Error::LengthMismatch {
            expected: n,
            actual: if labels.len() != n { labels.len() } else { neighbors.len() },
        });
    }
    if let Some(&bad) = boundary.iter().find(|&&i| i >= n) {
        return Err(Error::InvalidParameter(format!("boundary index {bad} out of range")));
    }
    check_finite_rows(features)?;

    let mut terms = Vec::new();
    let mut skipped = 0;
    // (i, neighbor list, logits a_k = -d_ik / tau, distances)
    let mut cached: Vec<(usize, Vec<f64>, Vec<f64>)> = Vec::new();
    for &i in boundary {
        let nb = &neighbors[i];
        let positives = nb.iter().filter(|&&j| labels[j] == labels[i]).count();
        if positives == 0 || nb.is_empty() {
            skipped += 1;
            continue;
        }
        let dists: Vec<f64> = nb
            .iter()
            .map(|&k| euclidean(features.row(i), features.row(k)))
            .collect();
        let logits: Vec<f64> = dists.iter().map(|d| -d / temperature).collect();
        let all = log_sum_exp(logits.iter().copied());
        let pos = log_sum_exp(
            nb.iter()
                .zip(&logits)
                .filter(|(&j, _)| labels[j] == labels[i])
                .map(|(_, &a)| a),
        );
        terms.push(CblTerm {
            point: i,
            loss: all - pos,
            positives,
            negatives: nb.len() - positives,
        });
        if want_grad {
            cached.push((i, logits, dists));
        }
    }

    let loss = if terms.is_empty() {
        0.0
    } else {
        terms.iter().map(|t| t.loss).sum::<f64>() / terms.len() as f64
    };
    let output = CblOutput {
        loss,
        terms,
        skipped,
    };
    if !want_grad {
        return Ok((output, None));
    }

    let mut grad = Array2::zeros(features.raw_dim());
    if cached.is_empty() {
        return Ok((output, Some(grad)));
    }
    let scale = 1.0 / cached.len() as f64;
    for (i, logits, dists) in &cached {
        let i = *i;
        let nb = &neighbors[i];
        let all = log_sum_exp(logits.iter().copied());
        let pos = log_sum_exp(
            nb.iter()
                .zip(logits)
                .filter(|(&j, _)| labels[j] == labels[i])
                .map(|(_, &a)| a),
        );
        for ((&k, &a), &d) in nb.iter().zip(logits).zip(dists) {
            // d loss_i / d a_k
            let mut g = (a - all).exp();
            if labels[k] == labels[i] {
                g -= (a - pos).exp();
            }
            if d == 0.0 || g == 0.0 {
                continue;
            }
            // a_k = -d_ik / tau, d d_ik / d f_i = (f_i - f_k) / d_ik
            let coef = -g * scale / (temperature * d);
            for c in 0..features.ncols() {
                let diff = features[[i, c]] - features[[k, c]];
                grad[[i, c]] += coef * diff;
                grad[[k, c]] -= coef * diff;
            }
        }
    }
    Ok((output, Some(grad)))
}

fn neighbor_lists(index: &NeighborhoodIndex, radius: f64, n: usize) -> Result<Vec<Vec<usize>>> {
    check_radius(radius)?;
    if index.len() != n {
        return Err(Error::LengthMismatch {
            expected: n,
            actual: index.len(),
        });
    }
    Ok(index.all_neighbors(radius))
}

fn check_stage(features: &FeatureMatrix, boundary: &BoundarySet) -> Result<()> {
    if features.stage != boundary.stage || features.rows() != boundary.num_points {
        return Err(Error::StageMismatch(format!(
            "features at stage {} ({} rows), boundary at stage {} ({} points)",
            features.stage,
            features.rows(),
            boundary.stage,
            boundary.num_points
        )));
    }
    Ok(())
}

pub fn cbl_forward(
    features: &FeatureMatrix,
    boundary: &BoundarySet,
    labels: &[usize],
    index: &NeighborhoodIndex,
    radius: f64,
    config: &CblConfig,
) -> Result<CblOutput> {
    config.validate()?;
    check_stage(features, boundary)?;
    let nb = neighbor_lists(index, radius, features.rows())?;
    let (out, _) = cbl_with_neighbors(
        &features.features,
        boundary.indices(),
        labels,
        &nb,
        config.temperature,
        false,
    )?;
    Ok(out)
}

/// Gradient of [`cbl_forward`]'s loss with respect to every feature row.
pub fn cbl_backward(
    features: &FeatureMatrix,
    boundary: &BoundarySet,
    labels: &[usize],
    index: &NeighborhoodIndex,
    radius: f64,
    config: &CblConfig,
) -> Result<Array2<f64>> {
    config.validate()?;
    check_stage(features, boundary)?;
    let nb = neighbor_lists(index, radius, features.rows())?;
    let (_, grad) = cbl_with_neighbors(
        &features.features,
        boundary.indices(),
        labels,
        &nb,
        config.temperature,
        true,
    )?;
    Ok(grad.expect("gradient requested"))
}

/// A scalar loss and its gradient with respect to one feature matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct LossWithGrad {
    pub value: f64,
    pub grad: Array2<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CompositeLoss {
    pub value: f64,
    pub ce: f64,
    pub cbl_total: f64,
    pub ce_grad: Array2<f64>,
    /// Stage gradients already scaled by lambda.
    pub stage_grads: Vec<Array2<f64>>,
}

/// `ce + lambda * sum(stage losses)`, with gradients combined the same way.
pub fn total_loss(
    ce: &LossWithGrad,
    per_stage_cbl: &[LossWithGrad],
    config: &CblConfig,
) -> Result<CompositeLoss> {
    config.validate()?;
    if !ce.value.is_finite() {
        return Err(Error::NonFinite { row: 0 });
    }
    if let Some(row) = per_stage_cbl.iter().position(|s| !s.value.is_finite()) {
        return Err(Error::NonFinite { row: row + 1 });
    }
    let cbl_total: f64 = per_stage_cbl.iter().map(|s| s.value).sum();
    Ok(CompositeLoss {
        value: ce.value + config.lambda * cbl_total,
        ce: ce.value,
        cbl_total,
        ce_grad: ce.grad.clone(),
        stage_grads: per_stage_cbl
            .iter()
            .map(|s| s.grad.mapv(|g| g * config.lambda))
            .collect(),
    })
}
