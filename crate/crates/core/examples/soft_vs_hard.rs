//! Pooled label distributions against hard majority re-voting. The fixture
//! has a cell whose hard votes say class 0 while its inputs are mostly
//! class 1.

use std::path::PathBuf;

use cblseg::{soft_vs_hard_divergence, PointCloud, SamplingHierarchy};

fn main() -> cblseg::Result<()> {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/mining_15.txt");
    let cloud = PointCloud::read(path)?;
    let hierarchy = SamplingHierarchy::build(&cloud, 0.3, 0.2, 3)?;

    for (n, stage) in hierarchy.stages().iter().enumerate().skip(1) {
        println!("stage {n}:");
        for (i, row) in stage.label_dists.rows().into_iter().enumerate() {
            let d: Vec<String> = row.iter().map(|p| format!("{p:.3}")).collect();
            println!("  point {i}: [{}] from {} inputs", d.join(", "), stage.input_counts[i]);
        }
    }
    for s in soft_vs_hard_divergence(&hierarchy) {
        println!("stage {}: {} of {} points disagree", s.stage, s.disagreements, s.points);
    }
    Ok(())
}
