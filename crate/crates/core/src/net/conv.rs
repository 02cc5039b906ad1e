//! Continuous point convolution.
//!
//! For point `i` with neighborhood `S_i = N_i ∪ {i}`:
//!
//! ```text
//! agg_i = (1 / |S_i|) * Σ_{j ∈ S_i} g((x_i - x_j) / r) ⊙ f_j
//! out_i = act(projᵀ agg_i + bias)
//! ```
//!
//! where `g` is a one-hidden-layer MLP (ReLU) from a 3D offset to a `C_in`
//! gating vector. Offsets are scaled by the stage radius `r`.

use ndarray::{Array2, Axis};
use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::cbl::{check_finite_rows, FeatureMatrix};
use crate::cloud::Point3;
use crate::error::{Error, Result};
use crate::index::NeighborhoodIndex;
use crate::metrics::check_radius;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Relu,
    Linear,
}

/// Flattened (center, member) pairs for every point's neighborhood, self first.
#[derive(Debug, Clone, PartialEq)]
pub struct PairList {
    pub centers: Vec<usize>,
    pub members: Vec<usize>,
    /// (x_center - x_member) / radius, one row per pair.
    pub offsets: Array2<f64>,
    /// 1 / |S_i| per point.
    pub weights: Vec<f64>,
}

impl PairList {
    /// `neighbors[i]` must exclude `i` itself.
    pub fn new(positions: &[Point3], neighbors: &[Vec<usize>], radius: f64) -> Self {
        let total: usize = neighbors.iter().map(|n| n.len() + 1).sum();
        let mut centers = Vec::with_capacity(total);
        let mut members = Vec::with_capacity(total);
        let mut offsets = Array2::zeros((total, 3));
        let mut weights = Vec::with_capacity(positions.len());
        let mut row = 0;
        for (i, nb) in neighbors.iter().enumerate() {
            weights.push(1.0 / (nb.len() + 1) as f64);
            for j in std::iter::once(i).chain(nb.iter().copied()) {
                centers.push(i);
                members.push(j);
                for a in 0..3 {
                    offsets[[row, a]] = (positions[i][a] - positions[j][a]) / radius;
                }
                row += 1;
            }
        }
        Self {
            centers,
            members,
            offsets,
            weights,
        }
    }

    pub fn num_points(&self) -> usize {
        self.weights.len()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvLayer {
    /// Kernel MLP, offset -> hidden.
    pub w1: Array2<f64>,
    pub b1: Array2<f64>,
    /// Kernel MLP, hidden -> gate (C_in).
    pub w2: Array2<f64>,
    pub b2: Array2<f64>,
    /// C_in x C_out.
    pub proj: Array2<f64>,
    pub bias: Array2<f64>,
    pub activation: Activation,
}

/// Intermediate values kept from the forward pass.
#[derive(Debug, Clone)]
pub struct ConvCache {
    hidden_pre: Array2<f64>,
    gates: Array2<f64>,
    agg: Array2<f64>,
    pre: Array2<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvGrads {
    pub w1: Array2<f64>,
    pub b1: Array2<f64>,
    pub w2: Array2<f64>,
    pub b2: Array2<f64>,
    pub proj: Array2<f64>,
    pub bias: Array2<f64>,
}

impl ConvGrads {
    pub fn into_vec(self) -> Vec<Array2<f64>> {
        vec![self.w1, self.b1, self.w2, self.b2, self.proj, self.bias]
    }
}

fn normal_matrix<R: Rng>(rng: &mut R, rows: usize, cols: usize, std: f64) -> Array2<f64> {
    let dist = Normal::new(0.0, std).expect("positive std");
    Array2::from_shape_fn((rows, cols), |_| dist.sample(rng))
}

impl ConvLayer {
    pub fn new<R: Rng>(c_in: usize, c_out: usize, hidden: usize, rng: &mut R) -> Self {
        Self {
            w1: normal_matrix(rng, 3, hidden, (2.0 / 3.0f64).sqrt()),
            // Self pairs have a zero offset; a zero bias would sit them on the ReLU kink.
            b1: Array2::from_elem((1, hidden), 0.1),
            w2: normal_matrix(rng, hidden, c_in, 0.5 / (hidden as f64).sqrt()),
            b2: Array2::ones((1, c_in)),
            proj: normal_matrix(rng, c_in, c_out, (2.0 / c_in as f64).sqrt()),
            bias: Array2::zeros((1, c_out)),
            activation: Activation::Relu,
        }
    }

    pub fn c_in(&self) -> usize {
        self.proj.nrows()
    }

    pub fn c_out(&self) -> usize {
        self.proj.ncols()
    }

    pub fn params(&self) -> [&Array2<f64>; 6] {
        [&self.w1, &self.b1, &self.w2, &self.b2, &self.proj, &self.bias]
    }

    pub fn params_mut(&mut self) -> [&mut Array2<f64>; 6] {
        [
            &mut self.w1,
            &mut self.b1,
            &mut self.w2,
            &mut self.b2,
            &mut self.proj,
            &mut self.bias,
        ]
    }

    pub fn check_finite(&self) -> Result<()> {
        if self.params().iter().any(|p| p.iter().any(|v| !v.is_finite())) {
            return Err(Error::InvalidParameter("non-finite convolution parameter".into()));
        }
        Ok(())
    }

    pub fn forward(&self, pairs: &PairList, features: &Array2<f64>) -> (Array2<f64>, ConvCache) {
        let n = pairs.num_points();
        let hidden_pre = pairs.offsets.dot(&self.w1) + &self.b1;
        let hidden = hidden_pre.mapv(relu);
        let gates = hidden.dot(&self.w2) + &self.b2;
        let mut agg = Array2::zeros((n, self.c_in()));
        for (p, (&i, &j)) in pairs.centers.iter().zip(&pairs.members).enumerate() {
            let w = pairs.weights[i];
            let gate = gates.row(p);
            let f = features.row(j);
            let mut dst = agg.row_mut(i);
            for c in 0..gate.len() {
                dst[c] += w * gate[c] * f[c];
            }
        }
        let pre = agg.dot(&self.proj) + &self.bias;
        let out = match self.activation {
            Activation::Relu => pre.mapv(relu),
            Activation::Linear => pre.clone(),
        };
        (
            out,
            ConvCache {
                hidden_pre,
                gates,
                agg,
                pre,
            },
        )
    }

    /// Returns parameter gradients and the gradient with respect to `features`.
    pub fn backward(
        &self,
        pairs: &PairList,
        features: &Array2<f64>,
        cache: &ConvCache,
        d_out: &Array2<f64>,
    ) -> (ConvGrads, Array2<f64>) {
        let d_pre = match self.activation {
            Activation::Relu => {
                let mut d = d_out.clone();
                d.zip_mut_with(&cache.pre, |g, &p| {
                    if p <= 0.0 {
                        *g = 0.0;
                    }
                });
                d
            }
            Activation::Linear => d_out.clone(),
        };
        let d_proj = cache.agg.t().dot(&d_pre);
        let d_bias = d_pre.sum_axis(Axis(0)).insert_axis(Axis(0));
        let d_agg = d_pre.dot(&self.proj.t());

        let c_in = self.c_in();
        let mut d_gates = Array2::zeros(cache.gates.raw_dim());
        let mut d_features = Array2::zeros(features.raw_dim());
        for (p, (&i, &j)) in pairs.centers.iter().zip(&pairs.members).enumerate() {
            let w = pairs.weights[i];
            for c in 0..c_in {
                let g = w * d_agg[[i, c]];
                d_gates[[p, c]] = g * features[[j, c]];
                d_features[[j, c]] += g * cache.gates[[p, c]];
            }
        }
        let hidden = cache.hidden_pre.mapv(relu);
        let d_w2 = hidden.t().dot(&d_gates);
        let d_b2 = d_gates.sum_axis(Axis(0)).insert_axis(Axis(0));
        let mut d_hidden = d_gates.dot(&self.w2.t());
        d_hidden.zip_mut_with(&cache.hidden_pre, |g, &z| {
            if z <= 0.0 {
                *g = 0.0;
            }
        });
        let d_w1 = pairs.offsets.t().dot(&d_hidden);
        let d_b1 = d_hidden.sum_axis(Axis(0)).insert_axis(Axis(0));
        (
            ConvGrads {
                w1: d_w1,
                b1: d_b1,
                w2: d_w2,
                b2: d_b2,
                proj: d_proj,
                bias: d_bias,
            },
            d_features,
        )
    }
}

fn relu(v: f64) -> f64 {
    v.max(0.0)
}

/// One convolution over a stage's points, with neighborhoods at `radius`.
pub fn conv_forward(
    layer: &ConvLayer,
    points: &[Point3],
    index: &NeighborhoodIndex,
    radius: f64,
    features: &FeatureMatrix,
) -> Result<FeatureMatrix> {
    check_radius(radius)?;
    layer.check_finite()?;
    check_finite_rows(&features.features)?;
    if points.len() != features.rows() || index.len() != points.len() {
        return Err(Error::LengthMismatch {
            expected: points.len(),
            actual: features.rows(),
        });
    }
    if features.dim() != layer.c_in() {
        return Err(Error::LengthMismatch {
            expected: layer.c_in(),
            actual: features.dim(),
        });
    }
    let pairs = PairList::new(points, &index.all_neighbors(radius), radius);
    let (out, _) = layer.forward(&pairs, &features.features);
    FeatureMatrix::new(features.stage, out)
}
