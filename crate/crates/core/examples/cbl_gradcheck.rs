//! Contrastive boundary loss on a small cloud, and its analytic gradient
//! against central finite differences.

use cblseg::gradcheck::{cbl_gradcheck, network_gradcheck};
use cblseg::metrics::BoundarySource;
use cblseg::{cbl_forward, extract_boundary, CblConfig, FeatureMatrix, NeighborhoodIndex};
use ndarray::Array2;

fn main() -> cblseg::Result<()> {
    // Two classes meeting at x = 0.15; features separate them imperfectly.
    let points: Vec<[f64; 3]> = (0..8).map(|i| [i as f64 * 0.05, 0.0, 0.0]).collect();
    let labels = vec![0, 0, 0, 0, 1, 1, 1, 1];
    let features = Array2::from_shape_fn((8, 3), |(i, c)| if c == 0 { i as f64 * 0.2 } else { 0.1 * c as f64 });
    let index = NeighborhoodIndex::build(&points)?;
    let boundary = extract_boundary(&labels, &index, 0.1, 0, BoundarySource::GroundTruth)?;
    let fm = FeatureMatrix::new(0, features)?;
    let out = cbl_forward(&fm, &boundary, &labels, &index, 0.1, &CblConfig::default())?;
    println!("boundary points {:?}", boundary.indices());
    for t in &out.terms {
        println!("  point {}: term {:.6} ({} positives, {} negatives)", t.point, t.loss, t.positives, t.negatives);
    }
    println!("loss {:.6} (skipped {})", out.loss, out.skipped);

    let report = cbl_gradcheck(20, 0);
    println!("random instances: {}", serde_json::to_string(&report).expect("serializable"));
    println!("whole network max relative error: {:.3e}", network_gradcheck(0));
    Ok(())
}
