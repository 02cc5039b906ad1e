//! One continuous-convolution layer: every point gathers its neighbors'
//! features through a learned kernel of their relative offsets.

use cblseg::net::{conv_forward, ConvLayer};
use cblseg::{FeatureMatrix, NeighborhoodIndex};
use ndarray::Array2;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> cblseg::Result<()> {
    let points: Vec<[f64; 3]> = (0..6).map(|i| [i as f64 * 0.04, 0.0, 0.0]).collect();
    let features = FeatureMatrix::new(0, Array2::from_shape_fn((6, 2), |(i, c)| (i + c) as f64 * 0.5))?;
    let index = NeighborhoodIndex::build(&points)?;
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let layer = ConvLayer::new(2, 4, 8, &mut rng);

    let out = conv_forward(&layer, &points, &index, 0.1, &features)?;
    for (i, row) in out.features.rows().into_iter().enumerate() {
        let n = index.radius_query(i, 0.1).len();
        println!("point {i} ({n} neighbors): {row:.4}");
    }
    Ok(())
}
