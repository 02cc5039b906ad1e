//! Central finite differences for checking analytic gradients, plus the
//! randomized checks behind the `gradcheck` command.

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::Serialize;

use crate::cbl::{cbl_backward, cbl_forward, CblConfig, FeatureMatrix};
use crate::cloud::{Point3, PointCloud};
use crate::index::NeighborhoodIndex;
use crate::metrics::{extract_boundary, BoundarySource};
use crate::mining::MiningConfig;
use crate::net::{NetConfig, PreparedScene, SegNet};
use crate::synth::{generate, SynthConfig};

pub const FD_STEP: f64 = 1e-5;
/// Step used by the randomized checks. Some gradient entries there sit near
/// 1e-7 while the loss is of order one, so a step of 1e-5 leaves them
/// dominated by rounding noise.
pub const RANDOM_FD_STEP: f64 = 1e-4;

/// Central-difference estimate of the gradient of `f` at `x`.
pub fn finite_difference<F>(mut f: F, x: &[f64], h: f64) -> Vec<f64>
where
    F: FnMut(&[f64]) -> f64,
{
    let mut probe = x.to_vec();
    (0..x.len())
        .map(|i| {
            probe[i] = x[i] + h;
            let plus = f(&probe);
            probe[i] = x[i] - h;
            let minus = f(&probe);
            probe[i] = x[i];
            (plus - minus) / (2.0 * h)
        })
        .collect()
}

/// Entries whose analytic and numeric magnitudes both fall below this are
/// compared absolutely, since their relative error is dominated by
/// floating-point cancellation in the difference quotient.
pub const REL_ERR_FLOOR: f64 = 1e-6;

/// `max_i |a_i - n_i| / max(|a_i|, |n_i|, REL_ERR_FLOOR)`.
pub fn max_relative_error(analytic: &[f64], numeric: &[f64]) -> f64 {
    assert_eq!(analytic.len(), numeric.len());
    analytic
        .iter()
        .zip(numeric)
        .map(|(a, n)| (a - n).abs() / a.abs().max(n.abs()).max(REL_ERR_FLOOR))
        .fold(0.0, f64::max)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GradcheckReport {
    pub instances: usize,
    pub max_rel_err: f64,
    pub pass: bool,
}

/// Tolerance for the contrastive loss check.
pub const CBL_TOLERANCE: f64 = 1e-5;
/// Tolerance for the whole-network check.
pub const NETWORK_TOLERANCE: f64 = 1e-4;

/// Worst relative error between the analytic contrastive-loss gradient and
/// central differences on one random instance (N <= 64, C <= 16, K <= 4).
pub fn cbl_instance_error(rng: &mut ChaCha8Rng, temperature: f64) -> f64 {
    let n = rng.gen_range(8..=64);
    let c = rng.gen_range(2..=16);
    let k = rng.gen_range(2..=4);
    let radius = 0.1;
    let points: Vec<Point3> = (0..n)
        .map(|_| [rng.gen::<f64>() * 0.3, rng.gen::<f64>() * 0.3, rng.gen::<f64>() * 0.1])
        .collect();
    let labels: Vec<usize> = (0..n).map(|_| rng.gen_range(0..k)).collect();
    let features = Array2::from_shape_fn((n, c), |_| rng.sample::<f64, _>(StandardNormal));
    let index = NeighborhoodIndex::build(&points).expect("finite points");
    let boundary = extract_boundary(&labels, &index, radius, 0, BoundarySource::GroundTruth)
        .expect("valid labels");
    let cfg = CblConfig {
        temperature,
        lambda: 0.1,
    };
    let fm = FeatureMatrix::new(0, features.clone()).expect("finite features");
    let analytic = cbl_backward(&fm, &boundary, &labels, &index, radius, &cfg).expect("valid");
    let flat: Vec<f64> = features.iter().copied().collect();
    let numeric = finite_difference(
        |v| {
            let f = FeatureMatrix {
                stage: 0,
                features: Array2::from_shape_vec((n, c), v.to_vec()).unwrap(),
            };
            cbl_forward(&f, &boundary, &labels, &index, radius, &cfg)
                .expect("valid")
                .loss
        },
        &flat,
        RANDOM_FD_STEP,
    );
    max_relative_error(&analytic.iter().copied().collect::<Vec<_>>(), &numeric)
}

/// Runs `instances` random contrastive-loss gradient checks.
pub fn cbl_gradcheck(instances: usize, seed: u64) -> GradcheckReport {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let max_rel_err = (0..instances)
        .map(|_| cbl_instance_error(&mut rng, 1.0))
        .fold(0.0, f64::max);
    GradcheckReport {
        instances,
        max_rel_err,
        pass: max_rel_err < CBL_TOLERANCE,
    }
}

/// Whole-network check (cross-entropy plus lambda-weighted contrastive loss
/// at every stage) on a 30-point synthetic scene.
pub fn network_gradcheck(seed: u64) -> f64 {
    let cloud: PointCloud = generate(&SynthConfig {
        seed,
        num_points: 30,
        num_classes: 3,
        extent: 0.6,
        ..Default::default()
    })
    .expect("valid config");
    let net = SegNet::new(NetConfig {
        num_classes: 3,
        widths: vec![4, 6, 8],
        kernel_hidden: 4,
        seed,
        ..Default::default()
    })
    .expect("valid config");
    let scene = PreparedScene::new(&cloud, &net.config, 0.15, &MiningConfig::default())
        .expect("valid scene");
    let cbl = CblConfig::default();
    let stages = net.config.cbl_stages.clone();
    let (_, grads) = net.loss_and_grad(&scene, &cbl, &stages).expect("finite");
    let analytic: Vec<f64> = grads.iter().flat_map(|g| g.iter().copied()).collect();
    let mut probe = net.clone();
    let numeric = finite_difference(
        |v| {
            probe.set_flat_params(v).unwrap();
            probe.loss_and_grad(&scene, &cbl, &stages).unwrap().0.total
        },
        &net.flat_params(),
        RANDOM_FD_STEP,
    );
    max_relative_error(&analytic, &numeric)
}
