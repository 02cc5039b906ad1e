//! Boundary points mined at every stage of a sampling hierarchy, with the
//! three ways of labelling sub-sampled points.

use cblseg::{generate, mine_stage_boundaries, MiningConfig, MiningVariant, SamplingHierarchy, SynthConfig};

fn main() -> cblseg::Result<()> {
    let cloud = generate(&SynthConfig {
        seed: 3,
        ..Default::default()
    })?;
    let hierarchy = SamplingHierarchy::build(&cloud, 0.1, 0.1, 4)?;

    println!("stage  points  radius  argmax      kl  nearest");
    for (n, stage) in hierarchy.stages().iter().enumerate() {
        let count = |variant| -> cblseg::Result<usize> {
            let cfg = MiningConfig {
                variant,
                ..Default::default()
            };
            Ok(mine_stage_boundaries(&hierarchy, n, &cfg)?.len())
        };
        println!(
            "{n:>5} {:>7} {:>7.2} {:>7} {:>7} {:>8}",
            stage.len(),
            stage.stage_radius,
            count(MiningVariant::Argmax)?,
            count(MiningVariant::KlThreshold)?,
            count(MiningVariant::Nearest)?,
        );
    }
    Ok(())
}
