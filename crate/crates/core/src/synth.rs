//! Seeded multi-blob phantoms.
//!
//! All randomness comes from [`SynthRng`], xoshiro256** seeded through
//! SplitMix64 (the reference `seed_from_u64` construction). Derived draws are
//! pinned so other implementations can reproduce fixtures:
//!
//! - `uniform_int(lo, hi)` = `lo + next_u64() % (hi - lo + 1)`
//! - `uniform_f64()` = `(next_u64() >> 11) * 2^-53`
//! - `normal(m, s)` = `m + s * sqrt(-2 ln(1 - u1)) * cos(2 pi u2)` with
//!   `u1`, `u2` two consecutive `uniform_f64` draws
//!
//! [`generate`] draws the blob count, then per blob its radius followed by
//! center coordinates (z, y, x; z is skipped for 2D shapes) until a placement
//! succeeds or the retry budget runs out.

use rand_core::{RngCore, SeedableRng};
use rand_xoshiro::Xoshiro256StarStar;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::labeling::{label_components_exact, ComponentLabeling};
use crate::volume::{BinaryMask, Shape};

/// Placement attempts per blob before giving up.
pub const PLACEMENT_ATTEMPTS: usize = 1000;

#[derive(Debug, Clone)]
pub struct SynthRng(Xoshiro256StarStar);

impl SynthRng {
    pub fn new(seed: u64) -> Self {
        Self(Xoshiro256StarStar::seed_from_u64(seed))
    }

    pub fn next_u64(&mut self) -> u64 {
        self.0.next_u64()
    }

    /// Uniform integer in `lo..=hi`.
    pub fn uniform_int(&mut self, lo: usize, hi: usize) -> usize {
        debug_assert!(lo <= hi);
        let span = (hi - lo) as u64 + 1;
        lo + (self.next_u64() % span) as usize
    }

    /// Uniform in `[0, 1)`.
    pub fn uniform_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    pub fn normal(&mut self, mean: f64, std: f64) -> f64 {
        let u1 = self.uniform_f64();
        let u2 = self.uniform_f64();
        mean + std * (-2.0 * (1.0 - u1).ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum BlobShape {
    /// Voxels within Euclidean distance `r` of the center.
    #[default]
    Sphere,
    /// Voxels within Chebyshev distance `r`, edge `2r + 1`.
    Cube,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlobSpec {
    /// Inclusive range of blob counts.
    pub count: (usize, usize),
    /// Inclusive range of radii in voxels.
    pub radius: (usize, usize),
    pub shape: BlobShape,
    /// Voxels of different blobs are further apart than this (and never
    /// touch under 26-connectivity).
    pub min_separation: f64,
    pub seed: u64,
}

impl BlobSpec {
    pub fn new(count: (usize, usize), radius: (usize, usize), seed: u64) -> Self {
        Self {
            count,
            radius,
            shape: BlobShape::Sphere,
            min_separation: 0.0,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.count.0 > self.count.1 {
            return Err(Error::InvalidConfig(format!(
                "count range {:?} is empty",
                self.count
            )));
        }
        if self.radius.0 < 1 || self.radius.0 > self.radius.1 {
            return Err(Error::InvalidConfig(format!(
                "radius range {:?} is invalid",
                self.radius
            )));
        }
        if !(self.min_separation >= 0.0 && self.min_separation.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "min_separation {} must be finite and >= 0",
                self.min_separation
            )));
        }
        Ok(())
    }
}

/// Offsets of a blob of radius `r` around the origin, in (z, y, x) order.
fn blob_offsets(shape: BlobShape, r: usize, planar: bool) -> Vec<[isize; 3]> {
    let r = r as isize;
    let rz = if planar { 0 } else { r };
    let mut out = Vec::new();
    for dz in -rz..=rz {
        for dy in -r..=r {
            for dx in -r..=r {
                let inside = match shape {
                    BlobShape::Sphere => dz * dz + dy * dy + dx * dx <= r * r,
                    BlobShape::Cube => true,
                };
                if inside {
                    out.push([dz, dy, dx]);
                }
            }
        }
    }
    out
}

struct Placer {
    shape: Shape,
    planar: bool,
    /// 0 for background, otherwise 1 + blob number.
    owner: Vec<u32>,
    /// Voxels conflict when their squared distance is at most this.
    limit: f64,
    reach: isize,
    next_id: u32,
}

impl Placer {
    fn new(shape: &Shape, min_separation: f64) -> Self {
        Self {
            shape: shape.clone(),
            planar: shape.ndim() == 2,
            owner: vec![0; shape.len()],
            limit: (min_separation * min_separation).max(3.0),
            reach: (min_separation.floor() as isize).max(1),
            next_id: 1,
        }
    }

    fn block(&mut self, mask: &BinaryMask) {
        let id = self.next_id;
        self.next_id += 1;
        for v in mask.foreground() {
            self.owner[v] = id;
        }
    }

    fn fits(&self, voxels: &[usize]) -> bool {
        let (reach, limit) = (self.reach, self.limit);
        let dims = self.shape.dims3().map(|d| d as isize);
        let rz = if self.planar { 0 } else { reach };
        for &v in voxels {
            let [z, y, x] = self.shape.coords3(v).map(|c| c as isize);
            for dz in -rz..=rz {
                for dy in -reach..=reach {
                    for dx in -reach..=reach {
                        if ((dz * dz + dy * dy + dx * dx) as f64) > limit {
                            continue;
                        }
                        let (nz, ny, nx) = (z + dz, y + dy, x + dx);
                        if nz < 0
                            || ny < 0
                            || nx < 0
                            || nz >= dims[0]
                            || ny >= dims[1]
                            || nx >= dims[2]
                        {
                            continue;
                        }
                        let n = self.shape.index3([nz as usize, ny as usize, nx as usize]);
                        if self.owner[n] != 0 {
                            return false;
                        }
                    }
                }
            }
        }
        true
    }

    /// Places one blob; returns its voxels.
    fn place(&mut self, rng: &mut SynthRng, spec: &BlobSpec) -> Result<Vec<usize>> {
        let r = rng.uniform_int(spec.radius.0, spec.radius.1);
        let offsets = blob_offsets(spec.shape, r, self.planar);
        let [nz, ny, nx] = self.shape.dims3();
        let span = |n: usize| (n > 2 * r).then(|| (r, n - 1 - r));
        let (ys, xs) = match (span(ny), span(nx)) {
            (Some(ys), Some(xs)) => (ys, xs),
            _ => return Err(Error::PlacementFailed { attempts: 0 }),
        };
        let zs = if self.planar {
            (0, 0)
        } else {
            span(nz).ok_or(Error::PlacementFailed { attempts: 0 })?
        };
        for _ in 0..PLACEMENT_ATTEMPTS {
            let cz = if self.planar {
                0
            } else {
                rng.uniform_int(zs.0, zs.1)
            };
            let cy = rng.uniform_int(ys.0, ys.1);
            let cx = rng.uniform_int(xs.0, xs.1);
            let voxels: Vec<usize> = offsets
                .iter()
                .map(|[dz, dy, dx]| {
                    self.shape.index3([
                        (cz as isize + dz) as usize,
                        (cy as isize + dy) as usize,
                        (cx as isize + dx) as usize,
                    ])
                })
                .collect();
            if self.fits(&voxels) {
                let id = self.next_id;
                self.next_id += 1;
                for &v in &voxels {
                    self.owner[v] = id;
                }
                return Ok(voxels);
            }
        }
        Err(Error::PlacementFailed {
            attempts: PLACEMENT_ATTEMPTS,
        })
    }
}

/// Draws `spec.count` non-touching blobs inside `shape`.
pub fn generate(shape: &Shape, spec: &BlobSpec) -> Result<(BinaryMask, ComponentLabeling)> {
    spec.validate()?;
    let mut rng = SynthRng::new(spec.seed);
    let count = rng.uniform_int(spec.count.0, spec.count.1);
    let mut placer = Placer::new(shape, spec.min_separation);
    let mut mask = BinaryMask::zeros(shape.clone());
    for _ in 0..count {
        for v in placer.place(&mut rng, spec)? {
            mask.set(v, true);
        }
    }
    let labeling = label_components_exact(&mask);
    Ok((mask, labeling))
}

/// Drops `drop_instances` random instances and adds `add_false` radius-1
/// spheres that touch nothing in the original mask.
pub fn corrupt(
    mask: &BinaryMask,
    drop_instances: usize,
    add_false: usize,
    seed: u64,
) -> Result<BinaryMask> {
    let mut spec = BlobSpec::new((add_false, add_false), (1, 1), seed);
    spec.shape = BlobShape::Sphere;
    corrupt_with(mask, drop_instances, &spec)
}

/// Like [`corrupt`], with the added blobs described by `spec`. Dropped
/// instances are chosen first (partial Fisher-Yates over instance ids), then
/// `spec.count` is drawn and the blobs are placed.
pub fn corrupt_with(
    mask: &BinaryMask,
    drop_instances: usize,
    spec: &BlobSpec,
) -> Result<BinaryMask> {
    spec.validate()?;
    let cc = label_components_exact(mask);
    if drop_instances > cc.count() {
        return Err(Error::TooManyDrops {
            requested: drop_instances,
            available: cc.count(),
        });
    }
    let mut rng = SynthRng::new(spec.seed);
    let mut ids: Vec<u32> = (1..=cc.count() as u32).collect();
    for i in 0..drop_instances {
        let j = rng.uniform_int(i, ids.len() - 1);
        ids.swap(i, j);
    }
    let mut out = mask.clone();
    for &id in &ids[..drop_instances] {
        for &v in &cc.instances()[id as usize - 1].voxels {
            out.set(v, false);
        }
    }

    let mut placer = Placer::new(mask.shape(), spec.min_separation);
    placer.block(mask);
    let count = rng.uniform_int(spec.count.0, spec.count.1);
    for _ in 0..count {
        for v in placer.place(&mut rng, spec)? {
            out.set(v, true);
        }
    }
    Ok(out)
}
