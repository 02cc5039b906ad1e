//! Values generated once and frozen. A change here means generated data or
//! training numerics moved.

use cblseg::net::{train, NetConfig, SegNet, TrainConfig};
use cblseg::{generate, generate_split, SynthConfig};

fn benchmark() -> SynthConfig {
    SynthConfig {
        seed: 42,
        ..Default::default()
    }
}

#[test]
fn benchmark_scene_histogram() {
    let cloud = generate(&benchmark()).unwrap();
    assert_eq!(cloud.len(), 2000);
    assert_eq!(cloud.class_histogram(), vec![949, 458, 413, 180]);
}

#[test]
fn sixty_epoch_loss_decreases() {
    let (scenes, _) = generate_split(&benchmark(), 20, 10).unwrap();
    let mut net = SegNet::new(NetConfig::default()).unwrap();
    let log = train(&mut net, &scenes, &TrainConfig::default_with_epochs(60)).unwrap();
    assert_eq!(log.epochs.len(), 60);
    let first = log.epochs[0].total;
    let last = log.epochs[59].total;
    assert!(last < first, "{last} !< {first}");
    assert!((first - 1.4801912942466031).abs() < 1e-9, "{first}");
    assert!((last - 0.4503544231008864).abs() < 1e-9, "{last}");
}
