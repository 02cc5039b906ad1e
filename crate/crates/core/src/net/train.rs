//! SGD training with momentum, weight decay and per-epoch learning-rate decay.

use std::fmt::Write as _;

use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::cbl::CblConfig;
use crate::cloud::PointCloud;
use crate::error::{Error, Result};
use crate::metrics::{scene_counts, MetricsReport, SceneCounts};
use crate::mining::MiningConfig;

use super::model::{PreparedScene, SegNet};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub learning_rate: f64,
    pub momentum: f64,
    pub weight_decay: f64,
    /// Multiplier applied to the learning rate after every epoch.
    pub lr_decay: f64,
    pub cbl: CblConfig,
    /// Boundary radius at stage 0, meters; doubles per stage.
    pub radius: f64,
    pub mining: MiningConfig,
    /// Seeds the per-epoch scene order.
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 60,
            learning_rate: 0.01,
            momentum: 0.98,
            weight_decay: 1e-3,
            lr_decay: 0.1f64.powf(1.0 / 20.0),
            cbl: CblConfig::default(),
            radius: 0.1,
            mining: MiningConfig::default(),
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        self.cbl.validate()?;
        self.mining.validate()?;
        let positive = [self.learning_rate, self.lr_decay, self.radius];
        if positive.iter().any(|v| !(*v > 0.0 && v.is_finite())) {
            return Err(Error::InvalidParameter(
                "learning rate, lr decay and radius must be positive".into(),
            ));
        }
        if !(0.0..1.0).contains(&self.momentum) || !(self.weight_decay >= 0.0) {
            return Err(Error::InvalidParameter(
                "momentum must lie in [0, 1) and weight decay be >= 0".into(),
            ));
        }
        Ok(())
    }

    pub fn default_with_epochs(epochs: usize) -> Self {
        Self {
            epochs,
            ..Default::default()
        }
    }

    pub fn lr_at(&self, epoch: usize) -> f64 {
        self.learning_rate * self.lr_decay.powi(epoch as i32)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub ce: f64,
    pub cbl_total: f64,
    pub total: f64,
    pub lr: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct TrainLog {
    pub epochs: Vec<EpochLog>,
    pub updates: usize,
}

impl TrainLog {
    /// CSV with header `epoch,ce,cbl_total,total,lr`; epochs are 1-based.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("epoch,ce,cbl_total,total,lr\n");
        for e in &self.epochs {
            writeln!(out, "{},{},{},{},{}", e.epoch, e.ce, e.cbl_total, e.total, e.lr).unwrap();
        }
        out
    }
}

/// Heavy-ball SGD: `v = mu * v + g + wd * w; w -= lr * v`.
struct Sgd {
    velocity: Vec<Array2<f64>>,
}

impl Sgd {
    fn new(net: &SegNet) -> Self {
        Self {
            velocity: net.params().iter().map(|p| Array2::zeros(p.raw_dim())).collect(),
        }
    }

    fn step(&mut self, net: &mut SegNet, grads: &[Array2<f64>], lr: f64, cfg: &TrainConfig) {
        for ((p, v), g) in net.params_mut().into_iter().zip(&mut self.velocity).zip(grads) {
            ndarray::Zip::from(&mut *p).and(&mut *v).and(g).for_each(|w, v, &g| {
                *v = cfg.momentum * *v + g + cfg.weight_decay * *w;
                *w -= lr * *v;
            });
        }
    }
}

pub fn prepare_scenes(net: &SegNet, scenes: &[PointCloud], cfg: &TrainConfig) -> Result<Vec<PreparedScene>> {
    scenes
        .iter()
        .map(|c| {
            if c.num_classes() != net.config.num_classes {
                return Err(Error::InvalidParameter(format!(
                    "scene has {} classes, network expects {}",
                    c.num_classes(),
                    net.config.num_classes
                )));
            }
            PreparedScene::new(c, &net.config, cfg.radius, &cfg.mining)
        })
        .collect()
}

/// Trains in place; one update per scene per epoch, scenes shuffled each epoch.
pub fn train(net: &mut SegNet, scenes: &[PointCloud], cfg: &TrainConfig) -> Result<TrainLog> {
    if scenes.is_empty() {
        return Err(Error::InvalidParameter("no training scenes".into()));
    }
    cfg.validate()?;
    let prepared = prepare_scenes(net, scenes, cfg)?;
    train_prepared(net, &prepared, cfg)
}

pub fn train_prepared(
    net: &mut SegNet,
    scenes: &[PreparedScene],
    cfg: &TrainConfig,
) -> Result<TrainLog> {
    if scenes.is_empty() {
        return Err(Error::InvalidParameter("no training scenes".into()));
    }
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut sgd = Sgd::new(net);
    let mut log = TrainLog::default();
    let cbl_stages = net.config.cbl_stages.clone();
    let mut order: Vec<usize> = (0..scenes.len()).collect();
    for epoch in 0..cfg.epochs {
        let lr = cfg.lr_at(epoch);
        order.shuffle(&mut rng);
        let (mut ce, mut cbl, mut total) = (0.0, 0.0, 0.0);
        for &s in &order {
            let diverged = Error::Diverged { epoch: epoch + 1 };
            let (loss, grads) = match net.loss_and_grad(&scenes[s], &cfg.cbl, &cbl_stages) {
                Ok(v) => v,
                Err(Error::NonFinite { .. }) => return Err(diverged),
                Err(e) => return Err(e),
            };
            if !loss.total.is_finite() || grads.iter().any(|g| g.iter().any(|v| !v.is_finite())) {
                return Err(diverged);
            }
            sgd.step(net, &grads, lr, cfg);
            if net.params().iter().any(|p| p.iter().any(|v| !v.is_finite())) {
                return Err(diverged);
            }
            log.updates += 1;
            ce += loss.ce;
            cbl += loss.cbl_total;
            total += loss.total;
        }
        let n = scenes.len() as f64;
        log.epochs.push(EpochLog {
            epoch: epoch + 1,
            ce: ce / n,
            cbl_total: cbl / n,
            total: total / n,
            lr,
        });
    }
    Ok(log)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    /// Pooled over scenes: per-class counts are summed before dividing.
    pub aggregate: MetricsReport,
    pub per_scene: Vec<MetricsReport>,
}

pub fn evaluate(net: &SegNet, scenes: &[PointCloud], radius: f64) -> Result<Evaluation> {
    let cfg = TrainConfig {
        radius,
        ..Default::default()
    };
    let prepared = prepare_scenes(net, scenes, &cfg)?;
    evaluate_prepared(net, &prepared, radius)
}

pub fn evaluate_prepared(net: &SegNet, scenes: &[PreparedScene], radius: f64) -> Result<Evaluation> {
    let mut pooled = SceneCounts::zeros(net.config.num_classes);
    let mut per_scene = Vec::with_capacity(scenes.len());
    for scene in scenes {
        let pred = net.predict(scene)?;
        let cloud = scene.cloud.clone().with_predictions(pred)?;
        let index = scene.hierarchy.stage(0)?.index();
        let counts = scene_counts(&cloud, index, radius)?;
        per_scene.push(counts.report(radius));
        pooled.accumulate(&counts)?;
    }
    Ok(Evaluation {
        aggregate: pooled.report(radius),
        per_scene,
    })
}
