//! Radius and nearest-neighbor queries on a k-d tree, checked against a
//! brute-force scan.

use cblseg::{NeighborhoodIndex, Point3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn main() -> cblseg::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let points: Vec<Point3> = (0..1000).map(|_| [rng.gen(), rng.gen(), rng.gen::<f64>() * 0.3]).collect();
    let index = NeighborhoodIndex::build(&points)?;

    for radius in [0.05, 0.1, 0.2] {
        let found = index.all_neighbors(radius);
        let mut mismatches = 0;
        for (i, hits) in found.iter().enumerate() {
            let brute: Vec<usize> = (0..points.len())
                .filter(|&j| j != i && dist(&points[i], &points[j]) <= radius)
                .collect();
            mismatches += usize::from(&brute != hits);
        }
        let mean = found.iter().map(Vec::len).sum::<usize>() as f64 / points.len() as f64;
        println!("r = {radius:.2}: mean neighbors {mean:6.2}, mismatches vs brute force: {mismatches}");
    }

    let query = [0.5, 0.5, 0.1];
    let nearest = index.nearest(&query);
    println!("nearest to {query:?}: #{nearest} at {:?}", points[nearest]);
    Ok(())
}

fn dist(a: &Point3, b: &Point3) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}
