//! Reverse-mode tape over dense tensors.
//!
//! Every primitive pushes a node holding its forward value and whatever it
//! needs for the adjoint. `backward` walks the nodes in exact reverse
//! order, so operands always precede their consumers.

use std::sync::Arc;

use rand::Rng;

use super::params::{ParamId, ParamStore};
use super::tensor::Tensor;
use crate::error::{Error, Result};
use crate::manifold::radial::RadialMap;
use crate::manifold::{distance_kernel, EPS_ATANH, EPS_ZERO};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Segment assignment of rows, e.g. the target node of every edge.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Segments {
    ids: Vec<usize>,
    count: usize,
    sizes: Vec<usize>,
}

impl Segments {
    pub fn new(ids: Vec<usize>, count: usize) -> Result<Self> {
        let mut sizes = vec![0usize; count];
        for &s in &ids {
            if s >= count {
                return Err(Error::invalid(format!(
                    "segment id {s} out of range for {count} segments"
                )));
            }
            sizes[s] += 1;
        }
        Ok(Self { ids, count, sizes })
    }

    pub fn ids(&self) -> &[usize] {
        &self.ids
    }

    pub fn count(&self) -> usize {
        self.count
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }
}

#[derive(Debug)]
enum Op {
    Const,
    Leaf,
    Param(ParamId),
    MatMul(Var, Var),
    Add(Var, Var),
    Scale(Var, f64),
    Relu(Var),
    LeakyRelu(Var, f64),
    Tanh(Var),
    AtanhClamped(Var),
    RowNorm(Var),
    Dropout(Var, Vec<f64>),
    SegmentSoftmax(Var, Arc<Segments>),
    SegmentSum(Var, Arc<Segments>),
    SegmentMean(Var, Arc<Segments>),
    GatherRows(Var, Arc<Vec<usize>>),
    ConcatCols(Vec<Var>),
    MulRows(Var, Var),
    Radial(Var, RadialMap),
    PoincareDistance(Var, Var, f64),
    CrossEntropy(Var, Arc<Vec<usize>>, Tensor),
    Sum(Var),
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    op: Op,
    needs_grad: bool,
}

/// Recorded forward computation.
#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

/// Adjoints of every node after a backward pass.
#[derive(Debug)]
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
}

impl Gradients {
    pub fn get(&self, v: Var) -> Option<&Tensor> {
        self.grads[v.0].as_ref()
    }
}

fn same_shape(op: &'static str, a: &Tensor, b: &Tensor) -> Result<()> {
    if a.shape() == b.shape() {
        Ok(())
    } else {
        Err(Error::shape(op, format!("{:?} vs {:?}", a.shape(), b.shape())))
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

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    fn needs(&self, v: Var) -> bool {
        self.nodes[v.0].needs_grad
    }

    fn push(&mut self, value: Tensor, op: Op, needs_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            needs_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn push_derived(&mut self, value: Tensor, op: Op, inputs: &[Var]) -> Var {
        let needs = inputs.iter().any(|v| self.needs(*v));
        self.push(value, op, needs)
    }

    /// A value that never receives a gradient.
    pub fn constant(&mut self, t: Tensor) -> Var {
        self.push(t, Op::Const, false)
    }

    /// A differentiable input whose adjoint can be read from [`Gradients`].
    pub fn leaf(&mut self, t: Tensor) -> Var {
        self.push(t, Op::Leaf, true)
    }

    pub fn param(&mut self, store: &ParamStore, id: ParamId) -> Var {
        self.push(store.value(id).clone(), Op::Param(id), true)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = self.value(a).matmul(self.value(b))?;
        Ok(self.push_derived(out, Op::MatMul(a, b), &[a, b]))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let (x, y) = (self.value(a), self.value(b));
        same_shape("add", x, y)?;
        let mut out = x.clone();
        out.add_assign(y);
        Ok(self.push_derived(out, Op::Add(a, b), &[a, b]))
    }

    pub fn scale(&mut self, a: Var, s: f64) -> Var {
        let out = self.value(a).map(|x| x * s);
        self.push_derived(out, Op::Scale(a, s), &[a])
    }

    pub fn relu(&mut self, a: Var) -> Var {
        let out = self.value(a).map(|x| x.max(0.0));
        self.push_derived(out, Op::Relu(a), &[a])
    }

    pub fn leaky_relu(&mut self, a: Var, slope: f64) -> Var {
        let out = self.value(a).map(|x| if x > 0.0 { x } else { slope * x });
        self.push_derived(out, Op::LeakyRelu(a, slope), &[a])
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        let out = self.value(a).map(f64::tanh);
        self.push_derived(out, Op::Tanh(a), &[a])
    }

    /// `atanh` with its argument clamped to `±(1 - EPS_ATANH)`.
    pub fn atanh_clamped(&mut self, a: Var) -> Var {
        let cap = 1.0 - EPS_ATANH;
        let out = self.value(a).map(|x| x.clamp(-cap, cap).atanh());
        self.push_derived(out, Op::AtanhClamped(a), &[a])
    }

    /// Euclidean norm of every row, as an `n x 1` column.
    pub fn row_norm(&mut self, a: Var) -> Var {
        let x = self.value(a);
        let data = (0..x.rows())
            .map(|i| x.row(i).iter().map(|v| v * v).sum::<f64>().sqrt())
            .collect();
        let out = Tensor::matrix(x.rows(), 1, data).expect("column shape");
        self.push_derived(out, Op::RowNorm(a), &[a])
    }

    /// Inverted dropout. `rng = None` means evaluation mode (identity).
    pub fn dropout(&mut self, a: Var, rate: f64, rng: Option<&mut dyn rand::RngCore>) -> Result<Var> {
        if !(0.0..1.0).contains(&rate) {
            return Err(Error::invalid(format!("dropout rate {rate} outside [0, 1)")));
        }
        let Some(rng) = rng else {
            return Ok(a);
        };
        if rate == 0.0 {
            return Ok(a);
        }
        let keep = 1.0 / (1.0 - rate);
        let x = self.value(a);
        let mask: Vec<f64> = (0..x.len())
            .map(|_| if rng.random::<f64>() < rate { 0.0 } else { keep })
            .collect();
        let mut out = x.clone();
        for (o, m) in out.data_mut().iter_mut().zip(&mask) {
            *o *= m;
        }
        Ok(self.push_derived(out, Op::Dropout(a, mask), &[a]))
    }

    /// Column-wise softmax within each segment of rows.
    pub fn segment_softmax(&mut self, a: Var, seg: &Arc<Segments>) -> Result<Var> {
        let x = self.value(a);
        if x.rows() != seg.ids().len() {
            return Err(Error::shape(
                "segment_softmax",
                format!("{} rows for {} segment ids", x.rows(), seg.ids().len()),
            ));
        }
        let cols = x.cols();
        let mut max = vec![f64::NEG_INFINITY; seg.count() * cols];
        for (i, &s) in seg.ids().iter().enumerate() {
            for (j, &v) in x.row(i).iter().enumerate() {
                let m = &mut max[s * cols + j];
                *m = m.max(v);
            }
        }
        let mut out = x.clone();
        let mut denom = vec![0.0; seg.count() * cols];
        for (i, &s) in seg.ids().iter().enumerate() {
            for (j, v) in out.row_mut(i).iter_mut().enumerate() {
                *v = (*v - max[s * cols + j]).exp();
                denom[s * cols + j] += *v;
            }
        }
        for (i, &s) in seg.ids().iter().enumerate() {
            for (j, v) in out.row_mut(i).iter_mut().enumerate() {
                *v /= denom[s * cols + j];
            }
        }
        Ok(self.push_derived(out, Op::SegmentSoftmax(a, seg.clone()), &[a]))
    }

    fn segment_reduce(&self, x: &Tensor, seg: &Segments, op: &'static str) -> Result<Tensor> {
        if x.rows() != seg.ids().len() {
            return Err(Error::shape(
                op,
                format!("{} rows for {} segment ids", x.rows(), seg.ids().len()),
            ));
        }
        let mut out = Tensor::zeros(&[seg.count(), x.cols()]);
        for (i, &s) in seg.ids().iter().enumerate() {
            for (o, v) in out.row_mut(s).iter_mut().zip(x.row(i)) {
                *o += v;
            }
        }
        Ok(out)
    }

    pub fn segment_sum(&mut self, a: Var, seg: &Arc<Segments>) -> Result<Var> {
        let out = self.segment_reduce(self.value(a), seg, "segment_sum")?;
        Ok(self.push_derived(out, Op::SegmentSum(a, seg.clone()), &[a]))
    }

    /// Mean per segment; empty segments yield zero rows.
    pub fn segment_mean(&mut self, a: Var, seg: &Arc<Segments>) -> Result<Var> {
        let mut out = self.segment_reduce(self.value(a), seg, "segment_mean")?;
        for (s, &n) in seg.sizes().iter().enumerate() {
            if n > 0 {
                let inv = 1.0 / n as f64;
                out.row_mut(s).iter_mut().for_each(|v| *v *= inv);
            }
        }
        Ok(self.push_derived(out, Op::SegmentMean(a, seg.clone()), &[a]))
    }

    pub fn gather_rows(&mut self, a: Var, idx: &Arc<Vec<usize>>) -> Result<Var> {
        let x = self.value(a);
        if let Some(&bad) = idx.iter().find(|&&i| i >= x.rows()) {
            return Err(Error::shape(
                "gather_rows",
                format!("row {bad} out of range for {} rows", x.rows()),
            ));
        }
        let cols = x.cols();
        let mut data = Vec::with_capacity(idx.len() * cols);
        for &i in idx.iter() {
            data.extend_from_slice(x.row(i));
        }
        let out = Tensor::matrix(idx.len(), cols, data)?;
        Ok(self.push_derived(out, Op::GatherRows(a, idx.clone()), &[a]))
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var> {
        let first = *parts
            .first()
            .ok_or_else(|| Error::invalid("concat_cols of nothing"))?;
        let rows = self.value(first).rows();
        if parts.iter().any(|p| self.value(*p).rows() != rows) {
            return Err(Error::shape("concat_cols", "row counts differ"));
        }
        let total: usize = parts.iter().map(|p| self.value(*p).cols()).sum();
        let mut data = Vec::with_capacity(rows * total);
        for i in 0..rows {
            for p in parts {
                data.extend_from_slice(self.value(*p).row(i));
            }
        }
        let out = Tensor::matrix(rows, total, data)?;
        Ok(self.push_derived(out, Op::ConcatCols(parts.to_vec()), parts))
    }

    /// Scales row `i` of `a` by `w[i, 0]`.
    pub fn mul_rows(&mut self, a: Var, w: Var) -> Result<Var> {
        let (x, s) = (self.value(a), self.value(w));
        if s.cols() != 1 || s.rows() != x.rows() {
            return Err(Error::shape(
                "mul_rows",
                format!("{:?} by {:?}", x.shape(), s.shape()),
            ));
        }
        let mut out = x.clone();
        for i in 0..out.rows() {
            let f = s.data()[i];
            out.row_mut(i).iter_mut().for_each(|v| *v *= f);
        }
        Ok(self.push_derived(out, Op::MulRows(a, w), &[a, w]))
    }

    /// Applies a radial manifold map to every row.
    pub fn radial(&mut self, a: Var, map: RadialMap) -> Var {
        let x = self.value(a);
        let mut out = x.clone();
        for i in 0..x.rows() {
            let r = norm(x.row(i));
            let (f, _) = map.kernel(r.max(0.0));
            if r < EPS_ZERO && matches!(map, RadialMap::Project { .. }) {
                continue;
            }
            out.row_mut(i).iter_mut().for_each(|v| *v *= f);
        }
        self.push_derived(out, Op::Radial(a, map), &[a])
    }

    /// Row-paired Poincaré distances, as an `n x 1` column.
    pub fn poincare_distance(&mut self, x: Var, y: Var, c: f64) -> Result<Var> {
        let (a, b) = (self.value(x), self.value(y));
        same_shape("poincare_distance", a, b)?;
        let data = (0..a.rows())
            .map(|i| distance_kernel(a.row(i), b.row(i), c).0)
            .collect();
        let out = Tensor::matrix(a.rows(), 1, data)?;
        Ok(self.push_derived(out, Op::PoincareDistance(x, y, c), &[x, y]))
    }

    /// Mean softmax cross-entropy of `logits` rows against class labels.
    pub fn cross_entropy(&mut self, logits: Var, labels: &Arc<Vec<usize>>) -> Result<Var> {
        let z = self.value(logits);
        if z.rows() != labels.len() || z.rows() == 0 {
            return Err(Error::shape(
                "cross_entropy",
                format!("{} rows for {} labels", z.rows(), labels.len()),
            ));
        }
        let classes = z.cols();
        let mut probs = z.clone();
        let mut loss = 0.0;
        for (i, &y) in labels.iter().enumerate() {
            if y >= classes {
                return Err(Error::invalid(format!("label {y} out of range for {classes} classes")));
            }
            let row = probs.row_mut(i);
            let m = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let lse = m + row.iter().map(|v| (v - m).exp()).sum::<f64>().ln();
            loss += lse - row[y];
            row.iter_mut().for_each(|v| *v = (*v - lse).exp());
        }
        let out = Tensor::scalar(loss / labels.len() as f64);
        Ok(self.push_derived(out, Op::CrossEntropy(logits, labels.clone(), probs), &[logits]))
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let out = Tensor::scalar(self.value(a).sum());
        self.push_derived(out, Op::Sum(a), &[a])
    }

    /// Reverse pass from a scalar node.
    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        if self.value(loss).len() != 1 {
            return Err(Error::invalid(format!(
                "backward needs a scalar loss, got shape {:?}",
                self.value(loss).shape()
            )));
        }
        let mut grads: Vec<Option<Tensor>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[loss.0] = Some(Tensor::full(self.value(loss).shape(), 1.0));
        for idx in (0..=loss.0).rev() {
            let node = &self.nodes[idx];
            if !node.needs_grad {
                continue;
            }
            let Some(g) = grads[idx].take() else { continue };
            self.propagate(node, &g, &mut grads)?;
            grads[idx] = Some(g);
        }
        Ok(Gradients { grads })
    }

    /// Runs [`Tape::backward`] and adds parameter adjoints into `store`.
    /// Parameters not reachable from `loss` get nothing added.
    pub fn backward_into(&self, loss: Var, store: &mut ParamStore) -> Result<Gradients> {
        let grads = self.backward(loss)?;
        for (node, g) in self.nodes.iter().zip(&grads.grads) {
            if let (Op::Param(id), Some(g)) = (&node.op, g) {
                store.accumulate_grad(*id, g);
            }
        }
        Ok(grads)
    }

    fn propagate(&self, node: &Node, g: &Tensor, grads: &mut [Option<Tensor>]) -> Result<()> {
        let send = |v: Var, t: Tensor, grads: &mut [Option<Tensor>]| {
            if !self.needs(v) {
                return;
            }
            match &mut grads[v.0] {
                Some(acc) => acc.add_assign(&t),
                slot @ None => *slot = Some(t),
            }
        };
        match &node.op {
            Op::Const | Op::Leaf | Op::Param(_) => {}
            Op::MatMul(a, b) => {
                if self.needs(*a) {
                    send(*a, g.matmul_t(self.value(*b))?, grads);
                }
                if self.needs(*b) {
                    send(*b, self.value(*a).t_matmul(g)?, grads);
                }
            }
            Op::Add(a, b) => {
                send(*a, g.clone(), grads);
                send(*b, g.clone(), grads);
            }
            Op::Scale(a, s) => send(*a, g.map(|v| v * s), grads),
            Op::Relu(a) => {
                let x = self.value(*a);
                send(*a, zip_map(g, x, |g, x| if x > 0.0 { g } else { 0.0 }), grads);
            }
            Op::LeakyRelu(a, slope) => {
                let x = self.value(*a);
                send(*a, zip_map(g, x, |g, x| if x > 0.0 { g } else { slope * g }), grads);
            }
            Op::Tanh(a) => {
                send(*a, zip_map(g, &node.value, |g, y| g * (1.0 - y * y)), grads);
            }
            Op::AtanhClamped(a) => {
                let cap = 1.0 - EPS_ATANH;
                let x = self.value(*a);
                send(
                    *a,
                    zip_map(g, x, |g, x| if x.abs() < cap { g / (1.0 - x * x) } else { 0.0 }),
                    grads,
                );
            }
            Op::RowNorm(a) => {
                let x = self.value(*a);
                let mut out = x.clone();
                for i in 0..x.rows() {
                    let n = node.value.data()[i];
                    let f = if n > EPS_ZERO { g.data()[i] / n } else { 0.0 };
                    out.row_mut(i).iter_mut().for_each(|v| *v *= f);
                }
                send(*a, out, grads);
            }
            Op::Dropout(a, mask) => {
                let mut out = g.clone();
                for (o, m) in out.data_mut().iter_mut().zip(mask) {
                    *o *= m;
                }
                send(*a, out, grads);
            }
            Op::SegmentSoftmax(a, seg) => {
                let y = &node.value;
                let cols = y.cols();
                let mut dot = vec![0.0; seg.count() * cols];
                for (i, &s) in seg.ids().iter().enumerate() {
                    for j in 0..cols {
                        dot[s * cols + j] += g.get(i, j) * y.get(i, j);
                    }
                }
                let mut out = y.clone();
                for (i, &s) in seg.ids().iter().enumerate() {
                    for (j, v) in out.row_mut(i).iter_mut().enumerate() {
                        *v *= g.get(i, j) - dot[s * cols + j];
                    }
                }
                send(*a, out, grads);
            }
            Op::SegmentSum(a, seg) | Op::SegmentMean(a, seg) => {
                let mean = matches!(node.op, Op::SegmentMean(..));
                let cols = g.cols();
                let mut data = Vec::with_capacity(seg.ids().len() * cols);
                for &s in seg.ids() {
                    let f = if mean { 1.0 / seg.sizes()[s] as f64 } else { 1.0 };
                    data.extend(g.row(s).iter().map(|v| v * f));
                }
                send(*a, Tensor::matrix(seg.ids().len(), cols, data)?, grads);
            }
            Op::GatherRows(a, idx) => {
                let x = self.value(*a);
                let mut out = Tensor::zeros(&[x.rows(), x.cols()]);
                for (k, &i) in idx.iter().enumerate() {
                    for (o, v) in out.row_mut(i).iter_mut().zip(g.row(k)) {
                        *o += v;
                    }
                }
                send(*a, out, grads);
            }
            Op::ConcatCols(parts) => {
                let mut offset = 0;
                for p in parts {
                    let w = self.value(*p).cols();
                    let rows = g.rows();
                    let mut data = Vec::with_capacity(rows * w);
                    for i in 0..rows {
                        data.extend_from_slice(&g.row(i)[offset..offset + w]);
                    }
                    send(*p, Tensor::matrix(rows, w, data)?, grads);
                    offset += w;
                }
            }
            Op::MulRows(a, w) => {
                let (x, s) = (self.value(*a), self.value(*w));
                if self.needs(*a) {
                    let mut out = g.clone();
                    for i in 0..out.rows() {
                        let f = s.data()[i];
                        out.row_mut(i).iter_mut().for_each(|v| *v *= f);
                    }
                    send(*a, out, grads);
                }
                if self.needs(*w) {
                    let data = (0..x.rows())
                        .map(|i| x.row(i).iter().zip(g.row(i)).map(|(a, b)| a * b).sum())
                        .collect();
                    send(*w, Tensor::matrix(x.rows(), 1, data)?, grads);
                }
            }
            Op::Radial(a, map) => {
                let x = self.value(*a);
                let mut out = g.clone();
                for i in 0..x.rows() {
                    let xi = x.row(i);
                    let r = norm(xi);
                    if r < EPS_ZERO && matches!(map, RadialMap::Project { .. }) {
                        continue;
                    }
                    let (f, d) = map.kernel(r);
                    let xg: f64 = xi.iter().zip(g.row(i)).map(|(a, b)| a * b).sum();
                    for (o, &xv) in out.row_mut(i).iter_mut().zip(xi) {
                        *o = f * *o + d * xg * xv;
                    }
                }
                send(*a, out, grads);
            }
            Op::PoincareDistance(xv, yv, c) => {
                let (x, y) = (self.value(*xv), self.value(*yv));
                let mut gx = x.clone();
                let mut gy = y.clone();
                for i in 0..x.rows() {
                    let (xi, yi) = (x.row(i), y.row(i));
                    let (_, p) = distance_kernel(xi, yi, *c);
                    let zz = p.z * p.z - 1.0;
                    // non-differentiable at coincident points; treat as flat
                    let dd_dz = if zz > 1e-24 {
                        g.data()[i] / (c.sqrt() * zz.sqrt())
                    } else {
                        0.0
                    };
                    let ab = p.alpha * p.beta;
                    let k = 2.0 * c * dd_dz;
                    for j in 0..xi.len() {
                        let diff = xi[j] - yi[j];
                        gx.row_mut(i)[j] = k
                            * (2.0 * diff / ab + p.diff2 * 2.0 * c * xi[j] / (p.alpha * ab));
                        gy.row_mut(i)[j] = k
                            * (-2.0 * diff / ab + p.diff2 * 2.0 * c * yi[j] / (p.beta * ab));
                    }
                }
                send(*xv, gx, grads);
                send(*yv, gy, grads);
            }
            Op::CrossEntropy(a, labels, probs) => {
                let scale = g.data()[0] / labels.len() as f64;
                let mut out = probs.clone();
                for (i, &y) in labels.iter().enumerate() {
                    out.row_mut(i)[y] -= 1.0;
                }
                out.data_mut().iter_mut().for_each(|v| *v *= scale);
                send(*a, out, grads);
            }
            Op::Sum(a) => {
                let shape = self.value(*a).shape().to_vec();
                send(*a, Tensor::full(&shape, g.data()[0]), grads);
            }
        }
        Ok(())
    }
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn zip_map(g: &Tensor, x: &Tensor, f: impl Fn(f64, f64) -> f64) -> Tensor {
    let mut out = g.clone();
    for (o, &xv) in out.data_mut().iter_mut().zip(x.data()) {
        *o = f(*o, xv);
    }
    out
}
