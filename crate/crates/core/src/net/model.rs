//! Encoder-decoder network over a sampling hierarchy.
//!
//! Encoder: conv at stage 0, then for each later stage mean-pool the previous
//! stage's features along the pooling map and convolve. Decoder: from the
//! deepest stage upward, copy parent features to children, concatenate with
//! the encoder skip at that stage and convolve. The head is linear; with the
//! multi-scale option it sees every decoder stage copied down to stage 0.
//!
//! Feature taps for the contrastive loss: the stage-0 decoder output and the
//! encoder output of every later stage.

use ndarray::{concatenate, s, Array2, Axis};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::cbl::{cbl_with_neighbors, total_loss, CblConfig, FeatureMatrix, LossWithGrad};
use crate::cloud::PointCloud;
use crate::error::{Error, Result};
use crate::hierarchy::SamplingHierarchy;
use crate::metrics::BoundarySet;
use crate::mining::{mine_stage_boundaries, stage_labels_argmax, stage_labels_nearest, MiningConfig, MiningVariant};

use super::conv::{ConvCache, ConvLayer, PairList};

/// Per-point input features: a constant channel and height above z = 0.
pub const INPUT_FEATURES: usize = 2;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetConfig {
    pub num_classes: usize,
    /// Feature width per stage; its length is the number of stages.
    pub widths: Vec<usize>,
    pub kernel_hidden: usize,
    pub multi_scale_head: bool,
    /// Stages whose taps receive the contrastive loss.
    pub cbl_stages: Vec<usize>,
    /// Grid cell of the first sub-sampling, meters; doubles per stage.
    pub base_cell: f64,
    pub seed: u64,
}

impl Default for NetConfig {
    fn default() -> Self {
        Self {
            num_classes: 4,
            widths: vec![16, 32, 64],
            kernel_hidden: 8,
            multi_scale_head: true,
            cbl_stages: vec![0, 1, 2],
            base_cell: 0.1,
            seed: 0,
        }
    }
}

impl NetConfig {
    pub fn num_stages(&self) -> usize {
        self.widths.len()
    }

    pub fn validate(&self) -> Result<()> {
        if self.num_classes == 0 || self.widths.is_empty() || self.widths.contains(&0) {
            return Err(Error::InvalidParameter(
                "num_classes and all stage widths must be positive".into(),
            ));
        }
        if self.kernel_hidden == 0 {
            return Err(Error::InvalidParameter("kernel_hidden must be positive".into()));
        }
        if let Some(&bad) = self.cbl_stages.iter().find(|&&s| s >= self.num_stages()) {
            return Err(Error::InvalidParameter(format!(
                "cbl stage {bad} outside 0..{}",
                self.num_stages()
            )));
        }
        if !(self.base_cell > 0.0) {
            return Err(Error::InvalidParameter("base_cell must be positive".into()));
        }
        Ok(())
    }
}

pub fn input_features(cloud: &PointCloud) -> Array2<f64> {
    let mut f = Array2::ones((cloud.len(), INPUT_FEATURES));
    for (i, p) in cloud.positions().iter().enumerate() {
        f[[i, 1]] = p[2];
    }
    f
}

/// A scene with everything the network needs precomputed: hierarchy,
/// neighborhoods, stage labels and mined boundary sets.
#[derive(Debug, Clone)]
pub struct PreparedScene {
    pub cloud: PointCloud,
    pub hierarchy: SamplingHierarchy,
    pub input: Array2<f64>,
    pub pairs: Vec<PairList>,
    pub neighbors: Vec<Vec<Vec<usize>>>,
    /// For each stage, the ancestor at that stage of every stage-0 point.
    pub ancestors: Vec<Vec<usize>>,
    pub stage_labels: Vec<Vec<usize>>,
    pub boundaries: Vec<BoundarySet>,
}

impl PreparedScene {
    pub fn new(
        cloud: &PointCloud,
        config: &NetConfig,
        radius: f64,
        mining: &MiningConfig,
    ) -> Result<Self> {
        let hierarchy =
            SamplingHierarchy::build(cloud, config.base_cell, radius, config.num_stages())?;
        Self::from_hierarchy(cloud, hierarchy, mining)
    }

    pub fn from_hierarchy(
        cloud: &PointCloud,
        hierarchy: SamplingHierarchy,
        mining: &MiningConfig,
    ) -> Result<Self> {
        let mut pairs = Vec::new();
        let mut neighbors = Vec::new();
        let mut ancestors = Vec::new();
        let mut stage_labels = Vec::new();
        let mut boundaries = Vec::new();
        for (n, stage) in hierarchy.stages().iter().enumerate() {
            let nb = stage.index().all_neighbors(stage.stage_radius);
            pairs.push(PairList::new(&stage.positions, &nb, stage.stage_radius));
            neighbors.push(nb);
            ancestors.push(if n == 0 {
                (0..cloud.len()).collect()
            } else {
                let prev: &Vec<usize> = &ancestors[n - 1];
                prev.iter().map(|&a| stage.parent_assignment[a]).collect()
            });
            stage_labels.push(match mining.variant {
                MiningVariant::Nearest => stage_labels_nearest(&hierarchy, n)?,
                _ => stage_labels_argmax(&hierarchy, n)?,
            });
            boundaries.push(mine_stage_boundaries(&hierarchy, n, mining)?);
        }
        Ok(Self {
            cloud: cloud.clone(),
            input: input_features(cloud),
            hierarchy,
            pairs,
            neighbors,
            ancestors,
            stage_labels,
            boundaries,
        })
    }

    pub fn num_stages(&self) -> usize {
        self.hierarchy.num_stages()
    }
}

#[derive(Debug, Clone)]
pub struct ForwardCache {
    enc_in: Vec<Array2<f64>>,
    enc_cache: Vec<ConvCache>,
    enc_out: Vec<Array2<f64>>,
    dec_in: Vec<Array2<f64>>,
    dec_cache: Vec<ConvCache>,
    dec_out: Vec<Array2<f64>>,
    head_in: Array2<f64>,
}

#[derive(Debug, Clone)]
pub struct ForwardOutput {
    /// Stage-0 class logits, one row per input point.
    pub logits: Array2<f64>,
    /// Contrastive-loss taps, one per stage.
    pub taps: Vec<FeatureMatrix>,
    pub cache: ForwardCache,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepLoss {
    pub ce: f64,
    pub cbl_total: f64,
    pub total: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SegNet {
    pub config: NetConfig,
    pub encoders: Vec<ConvLayer>,
    /// `decoders[n]` runs at stage n, for n < num_stages - 1.
    pub decoders: Vec<ConvLayer>,
    pub head_w: Array2<f64>,
    pub head_b: Array2<f64>,
}

/// Mean over each pooling group.
fn pool(features: &Array2<f64>, groups: &[Vec<usize>]) -> Array2<f64> {
    let mut out = Array2::zeros((groups.len(), features.ncols()));
    for (g, members) in groups.iter().enumerate() {
        let inv = 1.0 / members.len() as f64;
        let mut row = out.row_mut(g);
        for &m in members {
            row.scaled_add(inv, &features.row(m));
        }
    }
    out
}

fn pool_backward(d_out: &Array2<f64>, groups: &[Vec<usize>], n_prev: usize) -> Array2<f64> {
    let mut d = Array2::zeros((n_prev, d_out.ncols()));
    for (g, members) in groups.iter().enumerate() {
        let inv = 1.0 / members.len() as f64;
        for &m in members {
            d.row_mut(m).scaled_add(inv, &d_out.row(g));
        }
    }
    d
}

/// Copy features of coarse points to the fine points mapped onto them.
fn upsample(features: &Array2<f64>, owner: &[usize]) -> Array2<f64> {
    features.select(Axis(0), owner)
}

fn upsample_backward(d_fine: &Array2<f64>, owner: &[usize], n_coarse: usize) -> Array2<f64> {
    let mut d = Array2::zeros((n_coarse, d_fine.ncols()));
    for (i, &o) in owner.iter().enumerate() {
        d.row_mut(o).scaled_add(1.0, &d_fine.row(i));
    }
    d
}

/// Mean softmax cross-entropy of `logits` against `labels`.
pub fn cross_entropy(logits: &Array2<f64>, labels: &[usize]) -> LossWithGrad {
    let n = logits.nrows();
    let mut grad = Array2::zeros(logits.raw_dim());
    let mut total = 0.0;
    for (i, row) in logits.rows().into_iter().enumerate() {
        let max = row.fold(f64::NEG_INFINITY, |a, &b| a.max(b));
        let sum: f64 = row.iter().map(|v| (v - max).exp()).sum();
        let lse = max + sum.ln();
        total += lse - row[labels[i]];
        for (k, &v) in row.iter().enumerate() {
            grad[[i, k]] = (v - lse).exp() / n as f64;
        }
        grad[[i, labels[i]]] -= 1.0 / n as f64;
    }
    LossWithGrad {
        value: total / n as f64,
        grad,
    }
}

impl SegNet {
    pub fn new(config: NetConfig) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let w = &config.widths;
        let s = w.len();
        let encoders = (0..s)
            .map(|n| {
                let c_in = if n == 0 { INPUT_FEATURES } else { w[n - 1] };
                ConvLayer::new(c_in, w[n], config.kernel_hidden, &mut rng)
            })
            .collect();
        let decoders = (0..s - 1)
            .map(|n| ConvLayer::new(w[n] + w[n + 1], w[n], config.kernel_hidden, &mut rng))
            .collect();
        let head_in = Self::head_width(&config);
        let dist = Normal::new(0.0, (1.0 / head_in as f64).sqrt()).expect("positive std");
        let head_w = Array2::from_shape_fn((head_in, config.num_classes), |_| dist.sample(&mut rng));
        let head_b = Array2::zeros((1, config.num_classes));
        Ok(Self {
            config,
            encoders,
            decoders,
            head_w,
            head_b,
        })
    }

    fn head_width(config: &NetConfig) -> usize {
        if config.multi_scale_head {
            config.widths.iter().sum()
        } else {
            config.widths[0]
        }
    }

    /// Parameters in declaration order: encoders, decoders, head weight, head bias.
    pub fn params(&self) -> Vec<&Array2<f64>> {
        let mut v: Vec<&Array2<f64>> = Vec::new();
        for layer in self.encoders.iter().chain(&self.decoders) {
            v.extend(layer.params());
        }
        v.push(&self.head_w);
        v.push(&self.head_b);
        v
    }

    pub fn params_mut(&mut self) -> Vec<&mut Array2<f64>> {
        let mut v: Vec<&mut Array2<f64>> = Vec::new();
        for layer in self.encoders.iter_mut().chain(self.decoders.iter_mut()) {
            v.extend(layer.params_mut());
        }
        v.push(&mut self.head_w);
        v.push(&mut self.head_b);
        v
    }

    pub fn num_params(&self) -> usize {
        self.params().iter().map(|p| p.len()).sum()
    }

    pub fn flat_params(&self) -> Vec<f64> {
        self.params().iter().flat_map(|p| p.iter().copied()).collect()
    }

    pub fn set_flat_params(&mut self, values: &[f64]) -> Result<()> {
        if values.len() != self.num_params() {
            return Err(Error::LengthMismatch {
                expected: self.num_params(),
                actual: values.len(),
            });
        }
        let mut offset = 0;
        for p in self.params_mut() {
            for v in p.iter_mut() {
                *v = values[offset];
                offset += 1;
            }
        }
        Ok(())
    }

    pub fn forward(&self, scene: &PreparedScene) -> Result<ForwardOutput> {
        let s = self.config.num_stages();
        if scene.num_stages() != s {
            return Err(Error::StageMismatch(format!(
                "network has {s} stages, scene hierarchy has {}",
                scene.num_stages()
            )));
        }
        let stages = scene.hierarchy.stages();
        let mut enc_in = Vec::with_capacity(s);
        let mut enc_cache = Vec::with_capacity(s);
        let mut enc_out: Vec<Array2<f64>> = Vec::with_capacity(s);
        for n in 0..s {
            let input = if n == 0 {
                scene.input.clone()
            } else {
                pool(&enc_out[n - 1], &stages[n].pooling_map)
            };
            let (out, cache) = self.encoders[n].forward(&scene.pairs[n], &input);
            enc_in.push(input);
            enc_cache.push(cache);
            enc_out.push(out);
        }

        let mut dec_out: Vec<Option<Array2<f64>>> = vec![None; s];
        let mut dec_in: Vec<Option<Array2<f64>>> = vec![None; s - 1];
        let mut dec_cache: Vec<Option<ConvCache>> = vec![None; s - 1];
        dec_out[s - 1] = Some(enc_out[s - 1].clone());
        for n in (0..s - 1).rev() {
            let up = upsample(
                dec_out[n + 1].as_ref().expect("deeper stage decoded"),
                &stages[n + 1].parent_assignment,
            );
            let input = concatenate![Axis(1), enc_out[n], up];
            let (out, cache) = self.decoders[n].forward(&scene.pairs[n], &input);
            dec_in[n] = Some(input);
            dec_cache[n] = Some(cache);
            dec_out[n] = Some(out);
        }
        let dec_out: Vec<Array2<f64>> = dec_out.into_iter().map(Option::unwrap).collect();

        let head_in = if self.config.multi_scale_head {
            let blocks: Vec<Array2<f64>> = (0..s)
                .map(|n| upsample(&dec_out[n], &scene.ancestors[n]))
                .collect();
            let views: Vec<_> = blocks.iter().map(|b| b.view()).collect();
            ndarray::concatenate(Axis(1), &views).expect("blocks share row count")
        } else {
            dec_out[0].clone()
        };
        let logits = head_in.dot(&self.head_w) + &self.head_b;

        let taps = (0..s)
            .map(|n| {
                let f = if n == 0 { dec_out[0].clone() } else { enc_out[n].clone() };
                FeatureMatrix { stage: n, features: f }
            })
            .collect();
        Ok(ForwardOutput {
            logits,
            taps,
            cache: ForwardCache {
                enc_in,
                enc_cache,
                enc_out,
                dec_in: dec_in.into_iter().map(Option::unwrap).collect(),
                dec_cache: dec_cache.into_iter().map(Option::unwrap).collect(),
                dec_out,
                head_in,
            },
        })
    }

    /// Gradients of all parameters (declaration order) given the gradient of
    /// the logits and optional gradients on each stage tap.
    pub fn backward(
        &self,
        scene: &PreparedScene,
        cache: &ForwardCache,
        d_logits: &Array2<f64>,
        d_taps: &[Option<Array2<f64>>],
    ) -> Vec<Array2<f64>> {
        let s = self.config.num_stages();
        let w = &self.config.widths;
        let stages = scene.hierarchy.stages();

        let d_head_w = cache.head_in.t().dot(d_logits);
        let d_head_b = d_logits.sum_axis(Axis(0)).insert_axis(Axis(0));
        let d_head_in = d_logits.dot(&self.head_w.t());

        let mut d_dec_out: Vec<Array2<f64>> =
            cache.dec_out.iter().map(|o| Array2::zeros(o.raw_dim())).collect();
        let mut d_enc_out: Vec<Array2<f64>> =
            cache.enc_out.iter().map(|o| Array2::zeros(o.raw_dim())).collect();
        if self.config.multi_scale_head {
            let mut col = 0;
            for n in 0..s {
                let block = d_head_in.slice(s![.., col..col + w[n]]).to_owned();
                d_dec_out[n] += &upsample_backward(&block, &scene.ancestors[n], stages[n].len());
                col += w[n];
            }
        } else {
            d_dec_out[0] += &d_head_in;
        }
        for (n, d) in d_taps.iter().enumerate() {
            if let Some(d) = d {
                if n == 0 {
                    d_dec_out[0] += d;
                } else {
                    d_enc_out[n] += d;
                }
            }
        }

        let mut dec_grads = Vec::with_capacity(s.saturating_sub(1));
        for n in 0..s - 1 {
            let (g, d_in) = self.decoders[n].backward(
                &scene.pairs[n],
                &cache.dec_in[n],
                &cache.dec_cache[n],
                &d_dec_out[n],
            );
            dec_grads.push(g);
            d_enc_out[n] += &d_in.slice(s![.., ..w[n]]);
            let d_up = d_in.slice(s![.., w[n]..]).to_owned();
            let d_parent =
                upsample_backward(&d_up, &stages[n + 1].parent_assignment, stages[n + 1].len());
            d_dec_out[n + 1] += &d_parent;
        }
        let last = d_dec_out[s - 1].clone();
        d_enc_out[s - 1] += &last;

        let mut enc_grads = vec![None; s];
        for n in (0..s).rev() {
            let (g, d_in) = self.encoders[n].backward(
                &scene.pairs[n],
                &cache.enc_in[n],
                &cache.enc_cache[n],
                &d_enc_out[n],
            );
            enc_grads[n] = Some(g);
            if n > 0 {
                let d_prev = pool_backward(&d_in, &stages[n].pooling_map, stages[n - 1].len());
                d_enc_out[n - 1] += &d_prev;
            }
        }

        let mut grads = Vec::new();
        for g in enc_grads.into_iter().map(Option::unwrap).chain(dec_grads) {
            grads.extend(g.into_vec());
        }
        grads.push(d_head_w);
        grads.push(d_head_b);
        grads
    }

    /// Cross-entropy plus lambda-weighted contrastive loss at `cbl_stages`,
    /// and the gradient of that total. With lambda = 0 the contrastive terms
    /// are not evaluated at all.
    pub fn loss_and_grad(
        &self,
        scene: &PreparedScene,
        cbl: &CblConfig,
        cbl_stages: &[usize],
    ) -> Result<(StepLoss, Vec<Array2<f64>>)> {
        let out = self.forward(scene)?;
        let ce = cross_entropy(&out.logits, scene.cloud.gt_labels());
        let active: &[usize] = if cbl.lambda == 0.0 { &[] } else { cbl_stages };
        let mut stage_terms = Vec::with_capacity(active.len());
        for &n in active {
            let (o, g) = cbl_with_neighbors(
                &out.taps[n].features,
                scene.boundaries[n].indices(),
                &scene.stage_labels[n],
                &scene.neighbors[n],
                cbl.temperature,
                true,
            )?;
            stage_terms.push(LossWithGrad {
                value: o.loss,
                grad: g.expect("gradient requested"),
            });
        }
        let composite = total_loss(&ce, &stage_terms, cbl)?;
        let mut d_taps: Vec<Option<Array2<f64>>> = vec![None; self.config.num_stages()];
        for (&n, g) in active.iter().zip(composite.stage_grads) {
            match &mut d_taps[n] {
                Some(acc) => *acc += &g,
                slot => *slot = Some(g),
            }
        }
        let grads = self.backward(scene, &out.cache, &composite.ce_grad, &d_taps);
        Ok((
            StepLoss {
                ce: composite.ce,
                cbl_total: composite.cbl_total,
                total: composite.value,
            },
            grads,
        ))
    }

    /// Argmax of the logits per point; ties go to the lowest class.
    pub fn predict(&self, scene: &PreparedScene) -> Result<Vec<usize>> {
        let out = self.forward(scene)?;
        Ok(out
            .logits
            .rows()
            .into_iter()
            .map(crate::mining::argmax)
            .collect())
    }
}
