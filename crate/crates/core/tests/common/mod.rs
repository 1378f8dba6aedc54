#![allow(dead_code)]

use std::collections::VecDeque;

use ici_core::synth::SynthRng;
use ici_core::volume::{BinaryMask, Shape, Volume};

pub fn shape(dims: &[usize]) -> Shape {
    Shape::new(dims).unwrap()
}

pub fn random_mask(shape: &Shape, p: f64, rng: &mut SynthRng) -> BinaryMask {
    let bits = (0..shape.len())
        .map(|_| (rng.uniform_f64() < p) as u8)
        .collect();
    BinaryMask::new(shape.clone(), bits).unwrap()
}

/// Probabilities in (0, 1) kept at least `margin` away from 0.5.
pub fn random_probs(shape: &Shape, margin: f64, rng: &mut SynthRng) -> Volume {
    Volume::from_fn(shape.clone(), |_| loop {
        let x = 0.02 + 0.96 * rng.uniform_f64();
        if (x - 0.5).abs() >= margin {
            break x;
        }
    })
}

fn neighbors(shape: &Shape, v: usize) -> Vec<usize> {
    let c = shape.coords(v);
    let dims = shape.dims();
    let mut out = Vec::new();
    let n = dims.len();
    let total = 3usize.pow(n as u32);
    for k in 0..total {
        let mut code = k;
        let mut coords = Vec::with_capacity(n);
        let mut ok = true;
        let mut zero = true;
        for axis in (0..n).rev() {
            let d = (code % 3) as isize - 1;
            code /= 3;
            if d != 0 {
                zero = false;
            }
            let x = c[axis] as isize + d;
            if x < 0 || x >= dims[axis] as isize {
                ok = false;
            }
            coords.push(x as usize);
        }
        if ok && !zero {
            coords.reverse();
            out.push(shape.index(&coords).unwrap());
        }
    }
    out
}

/// BFS flood fill over the full neighborhood, seeds visited in flat order.
pub fn flood_fill(mask: &BinaryMask) -> Vec<u32> {
    let shape = mask.shape();
    let mut labels = vec![0u32; mask.len()];
    let mut next = 0;
    for start in 0..mask.len() {
        if !mask.is_set(start) || labels[start] != 0 {
            continue;
        }
        next += 1;
        labels[start] = next;
        let mut queue = VecDeque::from([start]);
        while let Some(v) = queue.pop_front() {
            for n in neighbors(shape, v) {
                if mask.is_set(n) && labels[n] == 0 {
                    labels[n] = next;
                    queue.push_back(n);
                }
            }
        }
    }
    labels
}

/// Voxel sets per component id (index 0 unused).
pub fn components(labels: &[u32]) -> Vec<Vec<usize>> {
    let n = labels.iter().copied().max().unwrap_or(0) as usize;
    let mut out = vec![Vec::new(); n + 1];
    for (v, &l) in labels.iter().enumerate() {
        if l != 0 {
            out[l as usize].push(v);
        }
    }
    out
}
