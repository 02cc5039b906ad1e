//! Baseline vs. contrastive boundary loss at the input only vs. at every
//! stage, on synthetic planar-room scenes.
//!
//! ```text
//! cargo run --release --example ablation -- [seed] [epochs] [train_scenes] [test_scenes]
//! ```

use std::time::Instant;

use cblseg::net::train::{evaluate_prepared, prepare_scenes, train_prepared};
use cblseg::net::{NetConfig, SegNet, TrainConfig};
use cblseg::{generate_split, CblConfig, SynthConfig};

fn main() -> cblseg::Result<()> {
    let args: Vec<u64> = std::env::args().skip(1).map(|a| a.parse().expect("integer argument")).collect();
    let seed = args.first().copied().unwrap_or(0);
    let epochs = args.get(1).copied().unwrap_or(60) as usize;
    let n_train = args.get(2).copied().unwrap_or(20) as usize;
    let n_test = args.get(3).copied().unwrap_or(10) as usize;

    let synth = SynthConfig {
        seed: 42,
        ..Default::default()
    };
    let (train, test) = generate_split(&synth, n_train, n_test)?;

    let arms: [(&str, f64, Vec<usize>); 3] = [
        ("baseline", 0.0, vec![]),
        ("cbl-input", 0.1, vec![0]),
        ("cbl-subscene", 0.1, vec![0, 1, 2]),
    ];
    println!("arm,seed,miou,miou_boundary,miou_inner,b_iou,oa,final_loss,seconds");
    for (name, lambda, stages) in arms {
        let start = Instant::now();
        let mut net = SegNet::new(NetConfig {
            seed,
            cbl_stages: stages,
            ..Default::default()
        })?;
        let cfg = TrainConfig {
            epochs,
            seed,
            cbl: CblConfig {
                lambda,
                ..Default::default()
            },
            ..Default::default()
        };
        let train_p = prepare_scenes(&net, &train, &cfg)?;
        let test_p = prepare_scenes(&net, &test, &cfg)?;
        let log = train_prepared(&mut net, &train_p, &cfg)?;
        let eval = evaluate_prepared(&net, &test_p, cfg.radius)?.aggregate;
        println!(
            "{name},{seed},{:.4},{:.4},{:.4},{:.4},{:.4},{:.4},{:.1}",
            eval.miou_overall.unwrap_or(f64::NAN),
            eval.miou_boundary.unwrap_or(f64::NAN),
            eval.miou_inner.unwrap_or(f64::NAN),
            eval.b_iou,
            eval.oa.unwrap_or(f64::NAN),
            log.epochs.last().map(|e| e.total).unwrap_or(f64::NAN),
            start.elapsed().as_secs_f64()
        );
    }
    Ok(())
}
