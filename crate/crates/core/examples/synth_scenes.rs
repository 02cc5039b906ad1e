//! Synthetic scenes for each layout, written as text clouds.
//!
//! ```text
//! cargo run --example synth_scenes -- [out_dir]
//! ```

use cblseg::{generate, Layout, SynthConfig};

fn main() -> cblseg::Result<()> {
    let out = std::env::args().nth(1);
    for layout in [Layout::PlanarRooms, Layout::Checkerboard, Layout::Blobs] {
        let cfg = SynthConfig {
            layout,
            seed: 1,
            jitter: 0.01,
            ..Default::default()
        };
        let cloud = generate(&cfg)?;
        println!("{layout:?}: {} points, class histogram {:?}", cloud.len(), cloud.class_histogram());
        if let Some(dir) = &out {
            std::fs::create_dir_all(dir)?;
            cloud.write(format!("{dir}/{layout:?}.txt").to_lowercase())?;
        }
    }
    Ok(())
}
