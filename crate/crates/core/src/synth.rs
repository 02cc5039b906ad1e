//! Procedural labeled scenes with known boundary geometry.
//!
//! Three layouts:
//! - `planar-rooms`: a floor (class 0) split into four rooms by two
//!   partition walls (class 1), each room holding one box-shaped object whose
//!   class (2..K) fixes its size and height. Coordinates are meters.
//! - `checkerboard`: a flat square of cells labeled `(ix + iy) mod K`.
//! - `blobs`: K Gaussian blobs in a cube, each point labeled by its nearest
//!   blob center.

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::cloud::{Point3, PointCloud};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Layout {
    PlanarRooms,
    Checkerboard,
    Blobs,
}

impl fmt::Display for Layout {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Layout::PlanarRooms => "planar-rooms",
            Layout::Checkerboard => "checkerboard",
            Layout::Blobs => "blobs",
        })
    }
}

impl FromStr for Layout {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "planar-rooms" => Ok(Layout::PlanarRooms),
            "checkerboard" => Ok(Layout::Checkerboard),
            "blobs" => Ok(Layout::Blobs),
            other => Err(Error::InvalidParameter(format!("unknown layout `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthConfig {
    pub seed: u64,
    pub num_points: usize,
    pub num_classes: usize,
    pub layout: Layout,
    /// Standard deviation of isotropic position noise, meters.
    pub jitter: f64,
    /// Side length of the scene footprint, meters.
    pub extent: f64,
    /// Checkerboard cell side, meters.
    pub cell: f64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            num_points: 2000,
            num_classes: 4,
            layout: Layout::PlanarRooms,
            jitter: 0.0,
            extent: 2.0,
            cell: 0.5,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.extent > 0.0 && self.extent.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "degenerate scene extent {}",
                self.extent
            )));
        }
        if self.num_classes == 0 || self.num_points < self.num_classes {
            return Err(Error::InvalidParameter(
                "need num_classes >= 1 and num_points >= num_classes".into(),
            ));
        }
        if !(self.jitter >= 0.0 && self.jitter.is_finite()) {
            return Err(Error::InvalidParameter("jitter must be >= 0".into()));
        }
        if self.layout == Layout::Checkerboard && !(self.cell > 0.0) {
            return Err(Error::InvalidParameter("checkerboard cell must be positive".into()));
        }
        Ok(())
    }
}

/// An axis-aligned rectangle in 3D: origin plus two edge vectors along axes.
#[derive(Debug, Clone, Copy)]
struct Patch {
    origin: Point3,
    u: Point3,
    v: Point3,
    label: usize,
}

impl Patch {
    fn area(&self) -> f64 {
        let nu = (self.u[0].powi(2) + self.u[1].powi(2) + self.u[2].powi(2)).sqrt();
        let nv = (self.v[0].powi(2) + self.v[1].powi(2) + self.v[2].powi(2)).sqrt();
        nu * nv
    }

    fn sample(&self, rng: &mut ChaCha8Rng) -> Point3 {
        let (a, b): (f64, f64) = (rng.gen(), rng.gen());
        [
            self.origin[0] + a * self.u[0] + b * self.v[0],
            self.origin[1] + a * self.u[1] + b * self.v[1],
            self.origin[2] + a * self.u[2] + b * self.v[2],
        ]
    }
}

fn floor_patch(x0: f64, y0: f64, x1: f64, y1: f64, z: f64, label: usize) -> Patch {
    Patch {
        origin: [x0, y0, z],
        u: [x1 - x0, 0.0, 0.0],
        v: [0.0, y1 - y0, 0.0],
        label,
    }
}

/// Top and four side faces of an axis-aligned box resting on z = 0.
fn box_patches(x0: f64, y0: f64, sx: f64, sy: f64, h: f64, label: usize) -> [Patch; 5] {
    [
        floor_patch(x0, y0, x0 + sx, y0 + sy, h, label),
        Patch { origin: [x0, y0, 0.0], u: [sx, 0.0, 0.0], v: [0.0, 0.0, h], label },
        Patch { origin: [x0, y0 + sy, 0.0], u: [sx, 0.0, 0.0], v: [0.0, 0.0, h], label },
        Patch { origin: [x0, y0, 0.0], u: [0.0, sy, 0.0], v: [0.0, 0.0, h], label },
        Patch { origin: [x0 + sx, y0, 0.0], u: [0.0, sy, 0.0], v: [0.0, 0.0, h], label },
    ]
}

/// Footprint and height ranges for object class `c >= 2`, as fractions of extent / meters.
fn object_shape(c: usize) -> ((f64, f64), (f64, f64)) {
    match c {
        2 => ((0.2, 0.3), (0.35, 0.45)),
        3 => ((0.12, 0.17), (0.15, 0.25)),
        c => {
            let h = 0.05 + 0.08 * (c - 3) as f64;
            ((0.1, 0.14), (h, h + 0.04))
        }
    }
}

const WALL_HEIGHT: f64 = 0.5;

fn planar_rooms(cfg: &SynthConfig, rng: &mut ChaCha8Rng) -> Vec<Patch> {
    let e = cfg.extent;
    let k = cfg.num_classes;
    if k == 1 {
        return vec![floor_patch(0.0, 0.0, e, e, 0.0, 0)];
    }
    let wx = e * rng.gen_range(0.4..0.6);
    let wy = e * rng.gen_range(0.4..0.6);
    let mut patches = vec![
        floor_patch(0.0, 0.0, e, e, 0.0, 0),
        Patch { origin: [wx, 0.0, 0.0], u: [0.0, e, 0.0], v: [0.0, 0.0, WALL_HEIGHT], label: 1 },
        Patch { origin: [0.0, wy, 0.0], u: [e, 0.0, 0.0], v: [0.0, 0.0, WALL_HEIGHT], label: 1 },
    ];
    if k == 2 {
        return patches;
    }
    let rooms = [
        (0.0, 0.0, wx, wy),
        (wx, 0.0, e, wy),
        (0.0, wy, wx, e),
        (wx, wy, e, e),
    ];
    let margin = 0.08 * e;
    for (r, &(x0, y0, x1, y1)) in rooms.iter().enumerate() {
        let class = 2 + (r + rng.gen_range(0..k - 2)) % (k - 2);
        let ((f_lo, f_hi), (h_lo, h_hi)) = object_shape(class);
        let sx = (e * rng.gen_range(f_lo..f_hi)).min(x1 - x0 - 2.0 * margin);
        let sy = (e * rng.gen_range(f_lo..f_hi)).min(y1 - y0 - 2.0 * margin);
        let h = rng.gen_range(h_lo..h_hi);
        let ox = x0 + margin + rng.gen::<f64>() * (x1 - x0 - 2.0 * margin - sx);
        let oy = y0 + margin + rng.gen::<f64>() * (y1 - y0 - 2.0 * margin - sy);
        patches.extend(box_patches(ox, oy, sx, sy, h, class));
    }
    patches
}

fn sample_patches(patches: &[Patch], n: usize, rng: &mut ChaCha8Rng) -> (Vec<Point3>, Vec<usize>) {
    let total: f64 = patches.iter().map(Patch::area).sum();
    let mut cumulative = Vec::with_capacity(patches.len());
    let mut acc = 0.0;
    for p in patches {
        acc += p.area() / total;
        cumulative.push(acc);
    }
    let mut pos = Vec::with_capacity(n);
    let mut labels = Vec::with_capacity(n);
    for _ in 0..n {
        let u: f64 = rng.gen();
        let idx = cumulative
            .iter()
            .position(|&c| u < c)
            .unwrap_or(patches.len() - 1);
        pos.push(patches[idx].sample(rng));
        labels.push(patches[idx].label);
    }
    (pos, labels)
}

pub fn generate(config: &SynthConfig) -> Result<PointCloud> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let e = config.extent;
    let k = config.num_classes;
    let (mut pos, labels) = match config.layout {
        Layout::PlanarRooms => {
            let patches = planar_rooms(config, &mut rng);
            sample_patches(&patches, config.num_points, &mut rng)
        }
        Layout::Checkerboard => {
            let mut pos = Vec::with_capacity(config.num_points);
            let mut labels = Vec::with_capacity(config.num_points);
            for _ in 0..config.num_points {
                let p = [rng.gen::<f64>() * e, rng.gen::<f64>() * e, 0.0];
                let ix = (p[0] / config.cell).floor() as usize;
                let iy = (p[1] / config.cell).floor() as usize;
                pos.push(p);
                labels.push((ix + iy) % k);
            }
            (pos, labels)
        }
        Layout::Blobs => {
            let centers: Vec<Point3> = (0..k)
                .map(|_| {
                    [
                        e * rng.gen_range(0.2..0.8),
                        e * rng.gen_range(0.2..0.8),
                        e * rng.gen_range(0.2..0.8),
                    ]
                })
                .collect();
            let spread = Normal::new(0.0, e / 8.0).expect("positive std");
            let mut pos = Vec::with_capacity(config.num_points);
            let mut labels = Vec::with_capacity(config.num_points);
            for i in 0..config.num_points {
                let c = centers[i % k];
                let p = [
                    c[0] + spread.sample(&mut rng),
                    c[1] + spread.sample(&mut rng),
                    c[2] + spread.sample(&mut rng),
                ];
                let nearest = (0..k)
                    .min_by(|&a, &b| {
                        crate::index::dist2(&p, &centers[a])
                            .total_cmp(&crate::index::dist2(&p, &centers[b]))
                    })
                    .unwrap();
                pos.push(p);
                labels.push(nearest);
            }
            (pos, labels)
        }
    };
    if config.jitter > 0.0 {
        let noise = Normal::new(0.0, config.jitter).expect("positive std");
        for p in &mut pos {
            for c in p.iter_mut() {
                *c += noise.sample(&mut rng);
            }
        }
    }
    PointCloud::new(pos, labels, k)
}

/// Train and test scenes generated from distinct seeds derived from `config.seed`.
pub fn generate_split(
    config: &SynthConfig,
    n_train: usize,
    n_test: usize,
) -> Result<(Vec<PointCloud>, Vec<PointCloud>)> {
    if n_train == 0 || n_test == 0 {
        return Err(Error::InvalidParameter("split sizes must be >= 1".into()));
    }
    let seeds = derive_seeds(config.seed, n_train + n_test);
    let scenes = seeds
        .iter()
        .map(|&seed| {
            generate(&SynthConfig {
                seed,
                ..config.clone()
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let mut train = scenes;
    let test = train.split_off(n_train);
    Ok((train, test))
}

/// `n` pairwise-distinct scene seeds drawn from a generator seeded by `base`.
pub fn derive_seeds(base: u64, n: usize) -> Vec<u64> {
    let mut rng = ChaCha8Rng::seed_from_u64(base ^ 0x5eed_5eed_5eed_5eed);
    let mut seeds: Vec<u64> = Vec::with_capacity(n);
    while seeds.len() < n {
        let s = rng.gen();
        if !seeds.contains(&s) {
            seeds.push(s);
        }
    }
    seeds
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::index::NeighborhoodIndex;
    use crate::metrics::{extract_boundary, BoundarySource};

    fn boundary_fraction(cloud: &PointCloud, r: f64) -> f64 {
        let idx = NeighborhoodIndex::build(cloud.positions()).unwrap();
        let b = extract_boundary(cloud.gt_labels(), &idx, r, 0, BoundarySource::GroundTruth)
            .unwrap();
        b.len() as f64 / cloud.len() as f64
    }

    #[test]
    fn checkerboard_boundaries_hug_cell_faces() {
        let cfg = SynthConfig {
            layout: Layout::Checkerboard,
            num_classes: 2,
            cell: 0.5,
            ..Default::default()
        };
        let cloud = generate(&cfg).unwrap();
        let idx = NeighborhoodIndex::build(cloud.positions()).unwrap();
        let b = extract_boundary(cloud.gt_labels(), &idx, 0.1, 0, BoundarySource::GroundTruth)
            .unwrap();
        assert!(!b.is_empty());
        for &i in b.indices() {
            let p = cloud.positions()[i];
            let face_dist = |c: f64| {
                let m = c.rem_euclid(0.5);
                let d = m.min(0.5 - m);
                // Faces on the outer border of the scene are not class faces.
                if c < 0.1 || c > 1.9 { f64::INFINITY } else { d }
            };
            assert!(face_dist(p[0]).min(face_dist(p[1])) <= 0.1, "point {p:?}");
        }
    }

    #[test]
    fn single_class_has_no_boundary() {
        for layout in [Layout::PlanarRooms, Layout::Checkerboard, Layout::Blobs] {
            let cfg = SynthConfig {
                num_classes: 1,
                layout,
                ..Default::default()
            };
            assert_eq!(boundary_fraction(&generate(&cfg).unwrap(), 0.1), 0.0);
        }
    }

    #[test]
    fn rooms_contain_every_class() {
        let cfg = SynthConfig {
            seed: 42,
            ..Default::default()
        };
        let cloud = generate(&cfg).unwrap();
        assert_eq!(cloud.len(), 2000);
        assert!(cloud.class_histogram().iter().all(|&c| c > 0));
    }

    #[test]
    fn generation_is_deterministic() {
        for layout in [Layout::PlanarRooms, Layout::Checkerboard, Layout::Blobs] {
            let cfg = SynthConfig {
                seed: 9,
                layout,
                jitter: 0.01,
                num_points: 300,
                ..Default::default()
            };
            assert_eq!(generate(&cfg).unwrap(), generate(&cfg).unwrap());
        }
    }

    #[test]
    fn invalid_configs() {
        let bad_extent = SynthConfig {
            extent: 0.0,
            ..Default::default()
        };
        assert!(generate(&bad_extent).is_err());
        let too_few = SynthConfig {
            num_points: 3,
            ..Default::default()
        };
        assert!(generate(&too_few).is_err());
        assert!(generate_split(&SynthConfig::default(), 0, 1).is_err());
        assert!("rooms".parse::<Layout>().is_err());
    }

    #[test]
    fn split_scenes_are_distinct_and_reproducible() {
        let cfg = SynthConfig {
            num_points: 200,
            ..Default::default()
        };
        let (train, test) = generate_split(&cfg, 2, 1).unwrap();
        assert_eq!((train.len(), test.len()), (2, 1));
        assert_ne!(train[0], train[1]);
        assert_ne!(train[0], test[0]);
        let again = generate_split(&cfg, 2, 1).unwrap();
        assert_eq!((train, test), again);
    }

    #[test]
    fn train_and_test_positions_are_disjoint() {
        let cfg = SynthConfig {
            num_points: 500,
            ..Default::default()
        };
        let (train, test) = generate_split(&cfg, 3, 2).unwrap();
        let key = |p: &Point3| p.map(f64::to_bits);
        let train_pts: std::collections::HashSet<_> =
            train.iter().flat_map(|c| c.positions().iter().map(key)).collect();
        for c in &test {
            assert!(c.positions().iter().all(|p| !train_pts.contains(&key(p))));
        }
    }

    #[test]
    fn boundary_fraction_grows_with_jitter() {
        for layout in [Layout::Checkerboard, Layout::PlanarRooms] {
            let fractions: Vec<f64> = [0.0, 0.02, 0.05]
                .iter()
                .map(|&jitter| {
                    let cfg = SynthConfig {
                        seed: 3,
                        layout,
                        jitter,
                        ..Default::default()
                    };
                    boundary_fraction(&generate(&cfg).unwrap(), 0.1)
                })
                .collect();
            assert!(
                fractions.windows(2).all(|w| w[0] <= w[1]),
                "{layout}: {fractions:?}"
            );
        }
    }
}
