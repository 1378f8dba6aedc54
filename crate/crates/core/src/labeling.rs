//! Connected-component labeling under full (8/26) connectivity.
//!
//! Two backends produce the same canonical labeling: an exact union-find
//! pass, and the iterative max-pool propagation used by GPU pipelines. Ids
//! are assigned in ascending order of each component's minimum flat index,
//! so the outputs of the two backends can be compared with plain equality.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::volume::{BinaryMask, Shape};

/// One connected component.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InstanceRecord {
    pub id: u32,
    /// Flat indices, ascending.
    pub voxels: Vec<usize>,
    pub center_of_mass: Vec<usize>,
}

impl InstanceRecord {
    pub fn size(&self) -> usize {
        self.voxels.len()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ComponentLabeling {
    shape: Shape,
    labels: Vec<u32>,
    instances: Vec<InstanceRecord>,
    converged: bool,
}

impl ComponentLabeling {
    pub fn shape(&self) -> &Shape {
        &self.shape
    }

    /// Per-voxel ids; 0 is background.
    pub fn labels(&self) -> &[u32] {
        &self.labels
    }

    pub fn instances(&self) -> &[InstanceRecord] {
        &self.instances
    }

    pub fn count(&self) -> usize {
        self.instances.len()
    }

    pub fn instance(&self, id: u32) -> Option<&InstanceRecord> {
        id.checked_sub(1)
            .and_then(|i| self.instances.get(i as usize))
    }

    /// False only when a max-pool run stopped before reaching a fixed point.
    pub fn converged(&self) -> bool {
        self.converged
    }

    pub fn to_mask(&self) -> BinaryMask {
        let bits = self.labels.iter().map(|&l| u8::from(l != 0)).collect();
        BinaryMask::new(self.shape.clone(), bits).expect("labels match shape")
    }

    /// Builds a canonical labeling from arbitrary per-voxel component keys.
    ///
    /// `keys[i] == 0` marks background; equal nonzero keys share a component.
    fn from_keys(shape: &Shape, keys: &[usize], converged: bool) -> Self {
        let mut remap = vec![0u32; keys.len() + 1];
        let mut labels = vec![0u32; keys.len()];
        let mut voxels: Vec<Vec<usize>> = Vec::new();
        for (i, &k) in keys.iter().enumerate() {
            if k == 0 {
                continue;
            }
            let id = match remap[k] {
                0 => {
                    voxels.push(Vec::new());
                    let id = voxels.len() as u32;
                    remap[k] = id;
                    id
                }
                id => id,
            };
            labels[i] = id;
            voxels[id as usize - 1].push(i);
        }
        let instances = voxels
            .into_iter()
            .enumerate()
            .map(|(i, voxels)| {
                let center_of_mass = center_of_mass_of(&voxels, shape);
                InstanceRecord {
                    id: i as u32 + 1,
                    voxels,
                    center_of_mass,
                }
            })
            .collect();
        Self {
            shape: shape.clone(),
            labels,
            instances,
            converged,
        }
    }
}

/// Labeling parameters. Connectivity is always the full 3x3(x3) neighbourhood.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CcaConfig {
    maxpool_iterations: usize,
}

impl CcaConfig {
    pub fn new(maxpool_iterations: usize) -> Result<Self> {
        if maxpool_iterations == 0 {
            return Err(Error::ZeroIterations);
        }
        Ok(Self { maxpool_iterations })
    }

    /// Iteration budget equal to the sum of dims, enough for any component.
    pub fn converging(shape: &Shape) -> Self {
        Self {
            maxpool_iterations: shape.dims().iter().sum(),
        }
    }

    pub fn maxpool_iterations(&self) -> usize {
        self.maxpool_iterations
    }
}

/// Which labeling backend to run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum Labeler {
    #[default]
    Exact,
    /// Max-pool propagation; `None` uses [`CcaConfig::converging`].
    MaxPool(Option<CcaConfig>),
}

impl Labeler {
    pub fn label(&self, mask: &BinaryMask) -> ComponentLabeling {
        match self {
            Labeler::Exact => label_components_exact(mask),
            Labeler::MaxPool(cfg) => {
                let cfg = cfg.unwrap_or_else(|| CcaConfig::converging(mask.shape()));
                label_components_maxpool(mask, &cfg)
            }
        }
    }
}

struct DisjointSet {
    parent: Vec<usize>,
}

impl DisjointSet {
    fn new(n: usize) -> Self {
        Self {
            parent: (0..n).collect(),
        }
    }

    fn find(&mut self, mut node: usize) -> usize {
        let mut root = node;
        while self.parent[root] != root {
            root = self.parent[root];
        }
        while self.parent[node] != root {
            let next = self.parent[node];
            self.parent[node] = root;
            node = next;
        }
        root
    }

    /// Keeps the smaller index as the root.
    fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra != rb {
            let (lo, hi) = if ra < rb { (ra, rb) } else { (rb, ra) };
            self.parent[hi] = lo;
        }
    }
}

/// Offsets preceding the centre in scan order: 13 in 3D, 4 in 2D.
const BACKWARD: [[isize; 3]; 13] = [
    [-1, -1, -1],
    [-1, -1, 0],
    [-1, -1, 1],
    [-1, 0, -1],
    [-1, 0, 0],
    [-1, 0, 1],
    [-1, 1, -1],
    [-1, 1, 0],
    [-1, 1, 1],
    [0, -1, -1],
    [0, -1, 0],
    [0, -1, 1],
    [0, 0, -1],
];

fn offset(p: [usize; 3], d: [isize; 3], dims: [usize; 3]) -> Option<[usize; 3]> {
    let mut out = [0usize; 3];
    for axis in 0..3 {
        let v = p[axis] as isize + d[axis];
        if v < 0 || v >= dims[axis] as isize {
            return None;
        }
        out[axis] = v as usize;
    }
    Some(out)
}

/// Exact union-find labeling.
pub fn label_components_exact(mask: &BinaryMask) -> ComponentLabeling {
    let shape = mask.shape();
    let dims = shape.dims3();
    let data = mask.data();
    let mut sets = DisjointSet::new(data.len());
    for (i, &v) in data.iter().enumerate() {
        if v == 0 {
            continue;
        }
        let p = shape.coords3(i);
        for d in BACKWARD {
            if let Some(q) = offset(p, d, dims) {
                let j = shape.index3(q);
                if data[j] != 0 {
                    sets.union(i, j);
                }
            }
        }
    }
    let keys: Vec<usize> = (0..data.len())
        .map(|i| if data[i] == 0 { 0 } else { sets.find(i) + 1 })
        .collect();
    ComponentLabeling::from_keys(shape, &keys, true)
}

fn maxpool_sweep(shape: &Shape, current: &[usize], next: &mut [usize]) -> bool {
    let [nz, ny, nx] = shape.dims3();
    next.par_iter_mut()
        .enumerate()
        .map(|(i, out)| {
            let own = current[i];
            if own == 0 {
                *out = 0;
                return false;
            }
            let [z, y, x] = shape.coords3(i);
            let mut best = own;
            for zz in z.saturating_sub(1)..(z + 2).min(nz) {
                for yy in y.saturating_sub(1)..(y + 2).min(ny) {
                    let row = (zz * ny + yy) * nx;
                    for xx in x.saturating_sub(1)..(x + 2).min(nx) {
                        best = best.max(current[row + xx]);
                    }
                }
            }
            *out = best;
            best != own
        })
        .reduce(|| false, |a, b| a || b)
}

/// Iterative max-pool labeling: every foreground voxel starts with its
/// 1-based flat index and repeatedly takes the maximum seed in its
/// neighbourhood. Stops early at a fixed point, which gives the same result
/// as running the remaining iterations.
pub fn label_components_maxpool(mask: &BinaryMask, cfg: &CcaConfig) -> ComponentLabeling {
    let shape = mask.shape();
    let mut current: Vec<usize> = mask
        .data()
        .iter()
        .enumerate()
        .map(|(i, &v)| if v == 0 { 0 } else { i + 1 })
        .collect();
    let mut next = vec![0usize; current.len()];
    let mut converged = false;
    for _ in 0..cfg.maxpool_iterations() {
        let changed = maxpool_sweep(shape, &current, &mut next);
        std::mem::swap(&mut current, &mut next);
        if !changed {
            converged = true;
            break;
        }
    }
    if !converged {
        converged = !maxpool_sweep(shape, &current, &mut next);
    }
    ComponentLabeling::from_keys(shape, &current, converged)
}

fn center_of_mass_of(voxels: &[usize], shape: &Shape) -> Vec<usize> {
    let ndim = shape.ndim();
    let count = voxels.len() as u128;
    if count == 0 {
        return vec![0; ndim];
    }
    let mut sums = vec![0u128; ndim];
    for &v in voxels {
        for (s, c) in sums.iter_mut().zip(shape.coords(v)) {
            *s += c as u128;
        }
    }
    sums.iter()
        .zip(shape.dims())
        .map(|(&s, &d)| {
            // floor(s / n + 1/2) == floor((2s + n) / 2n) in exact arithmetic
            let rounded = (2 * s + count) / (2 * count);
            (rounded as usize).min(d - 1)
        })
        .collect()
}

/// Per-axis mean voxel coordinate rounded with `floor(x + 0.5)`.
pub fn center_of_mass(instance: &InstanceRecord, shape: &Shape) -> Vec<usize> {
    center_of_mass_of(&instance.voxels, shape)
}

/// Ids of instances in `b` sharing at least one voxel with instance `id_in_a` of `a`.
pub fn intersecting_instances(
    a: &ComponentLabeling,
    b: &ComponentLabeling,
    id_in_a: u32,
) -> Result<Vec<u32>> {
    a.shape.ensure_same(&b.shape)?;
    let inst = a.instance(id_in_a).ok_or(Error::UnknownInstance(id_in_a))?;
    let mut ids: Vec<u32> = inst
        .voxels
        .iter()
        .map(|&v| b.labels[v])
        .filter(|&l| l != 0)
        .collect();
    ids.sort_unstable();
    ids.dedup();
    Ok(ids)
}
