//! Train the network on a few synthetic rooms, save a checkpoint and score
//! held-out rooms.
//!
//! ```text
//! cargo run --release --example train_eval -- [epochs]
//! ```

use cblseg::net::{evaluate, load_checkpoint, save_checkpoint, train, NetConfig, SegNet, TrainConfig};
use cblseg::{generate_split, SynthConfig};

fn main() -> cblseg::Result<()> {
    let epochs = std::env::args().nth(1).map(|e| e.parse().expect("epochs")).unwrap_or(15);
    let (train_set, test_set) = generate_split(&SynthConfig { seed: 42, ..Default::default() }, 6, 3)?;

    let mut net = SegNet::new(NetConfig::default())?;
    println!("{} parameters", net.num_params());
    let log = train(&mut net, &train_set, &TrainConfig::default_with_epochs(epochs))?;
    for e in log.epochs.iter().step_by(5.max(epochs / 6)) {
        println!("epoch {:>3}  ce {:.4}  cbl {:.4}  lr {:.5}", e.epoch, e.ce, e.cbl_total, e.lr);
    }

    let path = std::env::temp_dir().join("cblseg_train_eval.bin");
    save_checkpoint(&net, &path)?;
    let restored = load_checkpoint(&path)?;
    let eval = evaluate(&restored, &test_set, 0.1)?;
    let r = &eval.aggregate;
    println!(
        "held-out: mIoU {:.4}  boundary {:.4}  inner {:.4}  B-IoU {:.4}",
        r.miou_overall.unwrap_or(f64::NAN),
        r.miou_boundary.unwrap_or(f64::NAN),
        r.miou_inner.unwrap_or(f64::NAN),
        r.b_iou
    );
    Ok(())
}
