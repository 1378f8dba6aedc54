//! Reverse-mode differentiation over scalar reductions of volumes.
//!
//! A [`Tape`] records volume inputs, optional elementwise sigmoid views of
//! them, and a sequence of scalar nodes. Scalar nodes are either reductions
//! over a volume (masked, weighted, or pointwise-loss sums over an explicit
//! index list) or ordinary scalar arithmetic. Every node refers only to
//! earlier nodes, so a single reverse sweep computes all adjoints.
//!
//! Adjoints are accumulated in reverse node order with sequential scatter,
//! which makes [`Tape::backward`] bit-reproducible.

use crate::error::{Error, Result};
use crate::volume::Volume;

/// Probabilities are clamped to `[EPS, 1 - EPS]` before logarithms.
pub const PROB_EPS: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct VolumeId(usize);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct NodeId(usize);

/// A finite scalar value with its position on a tape.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DiffScalar {
    value: f64,
    node: NodeId,
}

impl DiffScalar {
    pub fn value(&self) -> f64 {
        self.value
    }

    pub fn node(&self) -> NodeId {
        self.node
    }
}

/// Elementwise binary-target losses `f(target, p)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Pointwise {
    /// `-(y ln p + (1 - y) ln(1 - p))`
    Bce,
    /// `y g(p) + (1 - y) g(1 - p)` with `g(q) = -(1 - q)^gamma ln q`
    Focal { gamma: f64 },
}

fn focal_term(q: f64, gamma: f64) -> f64 {
    -(1.0 - q).powf(gamma) * q.ln()
}

fn focal_term_deriv(q: f64, gamma: f64) -> f64 {
    let tail = if gamma == 0.0 {
        0.0
    } else {
        gamma * (1.0 - q).powf(gamma - 1.0) * q.ln()
    };
    tail - (1.0 - q).powf(gamma) / q
}

impl Pointwise {
    /// Value and derivative with respect to `p`. Clamped inputs have zero slope.
    pub fn eval(&self, target: f64, p: f64) -> (f64, f64) {
        let q = p.clamp(PROB_EPS, 1.0 - PROB_EPS);
        let live = if q == p { 1.0 } else { 0.0 };
        match *self {
            Pointwise::Bce => {
                let v = -(target * q.ln() + (1.0 - target) * (1.0 - q).ln());
                let d = -(target / q - (1.0 - target) / (1.0 - q));
                (v, d * live)
            }
            Pointwise::Focal { gamma } => {
                let v = target * focal_term(q, gamma) + (1.0 - target) * focal_term(1.0 - q, gamma);
                let d = target * focal_term_deriv(q, gamma)
                    - (1.0 - target) * focal_term_deriv(1.0 - q, gamma);
                (v, d * live)
            }
        }
    }
}

#[derive(Debug, Clone)]
enum VolumeNode {
    Input(Volume),
    Sigmoid { parent: VolumeId, values: Volume },
}

impl VolumeNode {
    fn values(&self) -> &Volume {
        match self {
            VolumeNode::Input(v) => v,
            VolumeNode::Sigmoid { values, .. } => values,
        }
    }
}

#[derive(Debug, Clone)]
enum Op {
    Constant,
    MaskedSum {
        vol: VolumeId,
        indices: Vec<usize>,
    },
    WeightedSum {
        vol: VolumeId,
        indices: Vec<usize>,
        weights: Vec<f64>,
    },
    /// `sum_k f(targets[k], v[indices[k]])`, storing each local slope.
    PointwiseSum {
        vol: VolumeId,
        indices: Vec<usize>,
        slopes: Vec<f64>,
    },
    Add(NodeId, NodeId),
    Sub(NodeId, NodeId),
    Mul(NodeId, NodeId),
    Div(NodeId, NodeId),
    Affine {
        x: NodeId,
        scale: f64,
    },
    Linear(Vec<(NodeId, f64)>),
    /// Routes the adjoint to the selected argument only.
    Max {
        winner: NodeId,
    },
    Pointwise {
        x: NodeId,
        slope: f64,
    },
}

#[derive(Debug, Clone)]
struct Node {
    op: Op,
    value: f64,
}

/// Append-only record of a scalar computation over volumes.
#[derive(Debug, Clone, Default)]
pub struct Tape {
    volumes: Vec<VolumeNode>,
    nodes: Vec<Node>,
}

/// Gradients of one root with respect to each input volume.
#[derive(Debug, Clone)]
pub struct Gradients {
    inputs: Vec<(VolumeId, Volume)>,
}

impl Gradients {
    pub fn get(&self, id: VolumeId) -> Option<&Volume> {
        self.inputs.iter().find(|(v, _)| *v == id).map(|(_, g)| g)
    }

    pub fn into_volume(self, id: VolumeId) -> Option<Volume> {
        self.inputs
            .into_iter()
            .find(|(v, _)| *v == id)
            .map(|(_, g)| g)
    }
}

fn finite(op: &'static str, value: f64) -> Result<f64> {
    if value.is_finite() {
        Ok(value)
    } else {
        Err(Error::NonFinite { op, value })
    }
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn input(&mut self, volume: Volume) -> VolumeId {
        self.volumes.push(VolumeNode::Input(volume));
        VolumeId(self.volumes.len() - 1)
    }

    /// Elementwise logistic view of another tape volume.
    pub fn sigmoid(&mut self, parent: VolumeId) -> VolumeId {
        let values = self.volumes[parent.0]
            .values()
            .map(|x| 1.0 / (1.0 + (-x).exp()));
        self.volumes.push(VolumeNode::Sigmoid { parent, values });
        VolumeId(self.volumes.len() - 1)
    }

    pub fn values(&self, id: VolumeId) -> &Volume {
        self.volumes[id.0].values()
    }

    fn push(&mut self, op: &'static str, value: f64, node: Op) -> Result<DiffScalar> {
        let value = finite(op, value)?;
        self.nodes.push(Node { op: node, value });
        Ok(DiffScalar {
            value,
            node: NodeId(self.nodes.len() - 1),
        })
    }

    fn check(&self, x: DiffScalar) -> Result<NodeId> {
        if x.node.0 < self.nodes.len() && self.nodes[x.node.0].value.to_bits() == x.value.to_bits()
        {
            Ok(x.node)
        } else {
            Err(Error::ForeignNode)
        }
    }

    fn check_indices(&self, vol: VolumeId, indices: &[usize]) -> Result<&[f64]> {
        let data = self.volumes[vol.0].values().data();
        if let Some(&bad) = indices.iter().find(|&&i| i >= data.len()) {
            return Err(Error::IndexOutOfRange {
                index: bad,
                len: data.len(),
            });
        }
        Ok(data)
    }

    pub fn constant(&mut self, value: f64) -> Result<DiffScalar> {
        self.push("constant", value, Op::Constant)
    }

    /// `sum_{i in indices} v[i]`, summed in the given order.
    pub fn masked_sum(&mut self, vol: VolumeId, indices: &[usize]) -> Result<DiffScalar> {
        let data = self.check_indices(vol, indices)?;
        let value = indices.iter().fold(0.0, |acc, &i| acc + data[i]);
        let indices = indices.to_vec();
        self.push("masked_sum", value, Op::MaskedSum { vol, indices })
    }

    /// `sum_k weights[k] * v[indices[k]]`.
    pub fn weighted_sum(
        &mut self,
        vol: VolumeId,
        indices: &[usize],
        weights: &[f64],
    ) -> Result<DiffScalar> {
        if indices.len() != weights.len() {
            return Err(Error::LengthMismatch {
                expected: indices.len(),
                actual: weights.len(),
            });
        }
        let data = self.check_indices(vol, indices)?;
        let value = indices
            .iter()
            .zip(weights)
            .fold(0.0, |acc, (&i, &w)| acc + w * data[i]);
        let (indices, weights) = (indices.to_vec(), weights.to_vec());
        self.push(
            "weighted_sum",
            value,
            Op::WeightedSum {
                vol,
                indices,
                weights,
            },
        )
    }

    /// `sum_k f(targets[k], v[indices[k]])` for a pointwise loss `f`.
    pub fn pointwise_sum(
        &mut self,
        vol: VolumeId,
        indices: &[usize],
        target: impl Fn(usize) -> f64,
        kind: Pointwise,
    ) -> Result<DiffScalar> {
        let data = self.check_indices(vol, indices)?;
        let mut value = 0.0;
        let mut slopes = Vec::with_capacity(indices.len());
        for (k, &i) in indices.iter().enumerate() {
            let (v, d) = kind.eval(target(k), data[i]);
            value += v;
            slopes.push(d);
        }
        let indices = indices.to_vec();
        self.push(
            "pointwise_sum",
            value,
            Op::PointwiseSum {
                vol,
                indices,
                slopes,
            },
        )
    }

    pub fn add(&mut self, a: DiffScalar, b: DiffScalar) -> Result<DiffScalar> {
        let (na, nb) = (self.check(a)?, self.check(b)?);
        self.push("add", a.value + b.value, Op::Add(na, nb))
    }

    pub fn sub(&mut self, a: DiffScalar, b: DiffScalar) -> Result<DiffScalar> {
        let (na, nb) = (self.check(a)?, self.check(b)?);
        self.push("sub", a.value - b.value, Op::Sub(na, nb))
    }

    pub fn mul(&mut self, a: DiffScalar, b: DiffScalar) -> Result<DiffScalar> {
        let (na, nb) = (self.check(a)?, self.check(b)?);
        self.push("mul", a.value * b.value, Op::Mul(na, nb))
    }

    pub fn div(&mut self, a: DiffScalar, b: DiffScalar) -> Result<DiffScalar> {
        let (na, nb) = (self.check(a)?, self.check(b)?);
        self.push("div", a.value / b.value, Op::Div(na, nb))
    }

    /// `scale * x + shift`.
    pub fn affine(&mut self, x: DiffScalar, scale: f64, shift: f64) -> Result<DiffScalar> {
        let nx = self.check(x)?;
        let scaled = self.push("affine", scale * x.value, Op::Affine { x: nx, scale })?;
        if shift == 0.0 {
            return Ok(scaled);
        }
        let c = self.constant(shift)?;
        self.add(scaled, c)
    }

    /// `sum_k w_k x_k`, accumulated left to right.
    pub fn linear(&mut self, terms: &[(DiffScalar, f64)]) -> Result<DiffScalar> {
        let mut value = 0.0;
        let mut ops = Vec::with_capacity(terms.len());
        for &(x, w) in terms {
            ops.push((self.check(x)?, w));
            value += w * x.value;
        }
        self.push("linear", value, Op::Linear(ops))
    }

    /// Sequential sum of `xs`; zero for an empty slice.
    pub fn sum(&mut self, xs: &[DiffScalar]) -> Result<DiffScalar> {
        let terms: Vec<_> = xs.iter().map(|&x| (x, 1.0)).collect();
        self.linear(&terms)
    }

    /// Maximum of `xs`; ties resolve to the earliest argument.
    pub fn max(&mut self, xs: &[DiffScalar]) -> Result<DiffScalar> {
        let mut best: Option<DiffScalar> = None;
        for &x in xs {
            self.check(x)?;
            if best.is_none_or(|b| x.value > b.value) {
                best = Some(x);
            }
        }
        let best = best.ok_or_else(|| Error::InvalidConfig("max of no values".into()))?;
        self.push("max", best.value, Op::Max { winner: best.node })
    }

    /// `f(target, x)` for a pointwise loss `f`.
    pub fn pointwise(&mut self, x: DiffScalar, target: f64, kind: Pointwise) -> Result<DiffScalar> {
        let nx = self.check(x)?;
        let (v, slope) = kind.eval(target, x.value);
        self.push("pointwise", v, Op::Pointwise { x: nx, slope })
    }

    fn adjoint_buffer<'a>(
        &self,
        bufs: &'a mut [Option<Vec<f64>>],
        vol: VolumeId,
    ) -> &'a mut Vec<f64> {
        let len = self.volumes[vol.0].values().len();
        bufs[vol.0].get_or_insert_with(|| vec![0.0; len])
    }

    /// Gradient of `root` with respect to every input volume.
    pub fn backward(&self, root: DiffScalar) -> Result<Gradients> {
        let root = self.check(root)?;
        let mut adj = vec![0.0f64; root.0 + 1];
        adj[root.0] = 1.0;
        let mut vol_adj: Vec<Option<Vec<f64>>> = vec![None; self.volumes.len()];
        for n in (0..=root.0).rev() {
            let g = adj[n];
            if g == 0.0 {
                continue;
            }
            match &self.nodes[n].op {
                Op::Constant => {}
                Op::MaskedSum { vol, indices } => {
                    let buf = self.adjoint_buffer(&mut vol_adj, *vol);
                    for &i in indices {
                        buf[i] += g;
                    }
                }
                Op::WeightedSum {
                    vol,
                    indices,
                    weights,
                } => {
                    let buf = self.adjoint_buffer(&mut vol_adj, *vol);
                    for (&i, &w) in indices.iter().zip(weights) {
                        buf[i] += g * w;
                    }
                }
                Op::PointwiseSum {
                    vol,
                    indices,
                    slopes,
                } => {
                    let buf = self.adjoint_buffer(&mut vol_adj, *vol);
                    for (&i, &s) in indices.iter().zip(slopes) {
                        buf[i] += g * s;
                    }
                }
                Op::Add(a, b) => {
                    adj[a.0] += g;
                    adj[b.0] += g;
                }
                Op::Sub(a, b) => {
                    adj[a.0] += g;
                    adj[b.0] -= g;
                }
                Op::Mul(a, b) => {
                    let (va, vb) = (self.nodes[a.0].value, self.nodes[b.0].value);
                    adj[a.0] += g * vb;
                    adj[b.0] += g * va;
                }
                Op::Div(a, b) => {
                    let (va, vb) = (self.nodes[a.0].value, self.nodes[b.0].value);
                    adj[a.0] += g / vb;
                    adj[b.0] -= g * va / (vb * vb);
                }
                Op::Affine { x, scale } => adj[x.0] += g * scale,
                Op::Linear(terms) => {
                    for &(x, w) in terms {
                        adj[x.0] += g * w;
                    }
                }
                Op::Max { winner } => adj[winner.0] += g,
                Op::Pointwise { x, slope } => adj[x.0] += g * slope,
            }
        }
        for v in (0..self.volumes.len()).rev() {
            if let VolumeNode::Sigmoid { parent, values } = &self.volumes[v] {
                let Some(child) = vol_adj[v].take() else {
                    continue;
                };
                let len = values.len();
                let buf = vol_adj[parent.0].get_or_insert_with(|| vec![0.0; len]);
                for ((b, &c), &s) in buf.iter_mut().zip(&child).zip(values.data()) {
                    *b += c * s * (1.0 - s);
                }
                vol_adj[v] = Some(child);
            }
        }
        let inputs = self
            .volumes
            .iter()
            .enumerate()
            .filter_map(|(v, node)| match node {
                VolumeNode::Input(vol) => {
                    let data = vol_adj[v].take().unwrap_or_else(|| vec![0.0; vol.len()]);
                    let grad = Volume::new(vol.shape().clone(), data).expect("adjoint length");
                    Some((VolumeId(v), grad))
                }
                VolumeNode::Sigmoid { .. } => None,
            })
            .collect();
        Ok(Gradients { inputs })
    }
}

/// Outcome of comparing an analytic gradient against central differences.
#[derive(Debug, Clone, PartialEq)]
pub struct GradCheck {
    pub max_rel_error: f64,
    pub worst_index: usize,
    pub analytic: Vec<f64>,
    pub numeric: Vec<f64>,
}

/// Relative error with a `max(1, |a|, |b|)` denominator.
pub fn relative_error(a: f64, b: f64) -> f64 {
    (a - b).abs() / 1f64.max(a.abs()).max(b.abs())
}

/// Checks the gradient of `f` at `v` against central differences with step `h`.
///
/// `f` receives a fresh tape holding `v` as its only input.
pub fn finite_diff_check<F>(f: F, v: &Volume, h: f64) -> Result<GradCheck>
where
    F: Fn(&mut Tape, VolumeId) -> Result<DiffScalar>,
{
    if !(h > 0.0) {
        return Err(Error::InvalidConfig(format!(
            "finite-difference step {h} must be > 0"
        )));
    }
    let eval = |vol: Volume| -> Result<f64> {
        let mut tape = Tape::new();
        let id = tape.input(vol);
        Ok(f(&mut tape, id)?.value())
    };
    let mut tape = Tape::new();
    let id = tape.input(v.clone());
    let root = f(&mut tape, id)?;
    let analytic = tape
        .backward(root)?
        .into_volume(id)
        .expect("input gradient")
        .into_data();
    let mut numeric = Vec::with_capacity(v.len());
    let mut worst = (0.0f64, 0usize);
    for i in 0..v.len() {
        let x = v.data()[i];
        let up = eval(v.with_value(i, x + h))?;
        let down = eval(v.with_value(i, x - h))?;
        let d = (up - down) / (2.0 * h);
        let err = relative_error(analytic[i], d);
        if err > worst.0 {
            worst = (err, i);
        }
        numeric.push(d);
    }
    Ok(GradCheck {
        max_rel_error: worst.0,
        worst_index: worst.1,
        analytic,
        numeric,
    })
}
