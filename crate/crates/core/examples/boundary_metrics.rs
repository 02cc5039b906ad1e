//! Boundary-aware evaluation of a prediction: overall, boundary and inner
//! mIoU plus B-IoU.
//!
//! ```text
//! cargo run --example boundary_metrics -- [cloud.txt] [radius]
//! ```
//! Without arguments it scores the checked-in 50-point fixture.

use std::path::PathBuf;

use cblseg::{extract_boundary, full_report, NeighborhoodIndex, PointCloud};
use cblseg::metrics::BoundarySource;

fn main() -> cblseg::Result<()> {
    let mut args = std::env::args().skip(1);
    let path = args
        .next()
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/metrics_50.txt"));
    let radius: f64 = args.next().map(|r| r.parse().expect("radius")).unwrap_or(0.1);

    let cloud = PointCloud::read(&path)?;
    let index = NeighborhoodIndex::build(cloud.positions())?;
    let gt = extract_boundary(cloud.gt_labels(), &index, radius, 0, BoundarySource::GroundTruth)?;
    let pred = cloud.pred_labels().expect("cloud needs a prediction column");
    let pb = extract_boundary(pred, &index, radius, 0, BoundarySource::Prediction)?;
    println!("{} points, {} ground-truth boundary, {} predicted boundary", cloud.len(), gt.len(), pb.len());

    let report = full_report(&cloud, radius)?;
    println!("{}", serde_json::to_string_pretty(&report).expect("serializable"));
    Ok(())
}
