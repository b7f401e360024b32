//! Tape-based automatic differentiation over dual-number batches.
//!
//! The networks here have a single scalar input `t`, so derivatives with
//! respect to `t` are propagated forward as tangents (one extra matrix per
//! activation), while gradients with respect to parameters are obtained by
//! replaying a tape of recorded operations in reverse over the combined
//! value+tangent computation.

use std::collections::HashMap;

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Smooth nonlinearities usable inside the solution network.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    #[default]
    Tanh,
    Sin,
}

impl Activation {
    #[inline]
    pub fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Tanh => x.tanh(),
            Activation::Sin => x.sin(),
        }
    }

    /// First derivative, given the pre-activation input.
    #[inline]
    pub fn d1(self, x: f64) -> f64 {
        match self {
            Activation::Tanh => {
                let y = x.tanh();
                1.0 - y * y
            }
            Activation::Sin => x.cos(),
        }
    }

    /// Second derivative, given the pre-activation input. Needed when
    /// reverse-differentiating through the forward tangents.
    #[inline]
    pub fn d2(self, x: f64) -> f64 {
        match self {
            Activation::Tanh => {
                let y = x.tanh();
                -2.0 * y * (1.0 - y * y)
            }
            Activation::Sin => -x.sin(),
        }
    }
}

/// A named parameter tensor. Shape is fixed at creation; `frozen` tensors
/// never receive gradients or optimizer updates.
#[derive(Clone, Debug)]
pub struct Tensor {
    pub name: String,
    pub data: Array2<f64>,
    pub frozen: bool,
}

impl Tensor {
    pub fn shape(&self) -> (usize, usize) {
        self.data.dim()
    }
}

#[derive(Serialize, Deserialize)]
struct TensorRecord {
    name: String,
    shape: [usize; 2],
    frozen: bool,
    data: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct StoreFile {
    tensors: Vec<TensorRecord>,
}

/// Ordered collection of named parameter tensors.
#[derive(Clone, Debug, Default)]
pub struct ParameterStore {
    tensors: Vec<Tensor>,
    index: HashMap<String, usize>,
}

impl ParameterStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, name: &str, data: Array2<f64>) -> Result<()> {
        if self.index.contains_key(name) {
            return Err(Error::Config(format!("duplicate tensor name {name:?}")));
        }
        self.index.insert(name.to_string(), self.tensors.len());
        self.tensors.push(Tensor {
            name: name.to_string(),
            data,
            frozen: false,
        });
        Ok(())
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.index.get(name).map(|&i| &self.tensors[i])
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Tensor> {
        let i = *self.index.get(name)?;
        Some(&mut self.tensors[i])
    }

    fn require(&self, name: &str) -> Result<&Tensor> {
        self.get(name)
            .ok_or_else(|| Error::Config(format!("unknown tensor {name:?}")))
    }

    pub fn freeze(&mut self, name: &str) -> Result<()> {
        self.get_mut(name)
            .ok_or_else(|| Error::Config(format!("unknown tensor {name:?}")))?
            .frozen = true;
        Ok(())
    }

    pub fn iter(&self) -> impl Iterator<Item = &Tensor> {
        self.tensors.iter()
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = &mut Tensor> {
        self.tensors.iter_mut()
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.tensors.iter().map(|t| t.name.as_str())
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn to_json(&self) -> serde_json::Value {
        let tensors = self
            .tensors
            .iter()
            .map(|t| TensorRecord {
                name: t.name.clone(),
                shape: [t.data.nrows(), t.data.ncols()],
                frozen: t.frozen,
                data: t.data.iter().copied().collect(),
            })
            .collect();
        serde_json::to_value(StoreFile { tensors }).expect("store serialization")
    }

    pub fn from_json(value: serde_json::Value) -> Result<Self> {
        let file: StoreFile = serde_json::from_value(value)?;
        let mut store = ParameterStore::new();
        for rec in file.tensors {
            let [rows, cols] = rec.shape;
            if rec.data.len() != rows * cols {
                return Err(Error::ShapeMismatch(format!(
                    "tensor {:?}: {} values for shape {}x{}",
                    rec.name,
                    rec.data.len(),
                    rows,
                    cols
                )));
            }
            let data = Array2::from_shape_vec((rows, cols), rec.data)
                .map_err(|e| Error::ShapeMismatch(e.to_string()))?;
            store.insert(&rec.name, data)?;
            if rec.frozen {
                store.freeze(&rec.name)?;
            }
        }
        Ok(store)
    }
}

/// A batch of values together with their derivatives with respect to the
/// scalar time input. Both matrices always share one shape.
#[derive(Clone, Debug)]
pub struct DualBatch {
    pub values: Array2<f64>,
    pub tangents: Array2<f64>,
}

impl DualBatch {
    pub fn new(values: Array2<f64>, tangents: Array2<f64>) -> Result<Self> {
        if values.dim() != tangents.dim() {
            return Err(Error::ShapeMismatch(format!(
                "values {:?} vs tangents {:?}",
                values.dim(),
                tangents.dim()
            )));
        }
        Ok(DualBatch { values, tangents })
    }

    /// The time input itself: values are the sampled times, tangent is 1.
    pub fn time_input(times: &Array1<f64>) -> Self {
        let n = times.len();
        let values = Array2::from_shape_fn((n, 1), |(i, _)| times[i]);
        DualBatch {
            values,
            tangents: Array2::ones((n, 1)),
        }
    }

    pub fn dim(&self) -> (usize, usize) {
        self.values.dim()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct NodeId(usize);

enum Op {
    Leaf,
    Affine {
        input: NodeId,
        weight: String,
        bias: String,
    },
    Activation {
        input: NodeId,
        kind: Activation,
    },
    Add {
        lhs: NodeId,
        rhs: NodeId,
    },
    /// Initial-value reparametrization: out = z0 + (1 - e^{-t}) * in,
    /// with the tangent rule e^{-t} * in + (1 - e^{-t}) * d(in)/dt.
    Reparam {
        input: NodeId,
        scale: Array1<f64>,
        decay: Array1<f64>,
    },
    /// Hamilton residuals of a reparametrized 4-channel state. The potential
    /// gradient and Hessian at the forward point are cached for the reverse
    /// sweep; the resulting node is value-only (zero tangents).
    Residual {
        input: NodeId,
        hess: Array2<f64>,
    },
    MeanSquare {
        input: NodeId,
    },
    MeanScalars {
        inputs: Vec<NodeId>,
    },
}

struct Node {
    op: Op,
    batch: DualBatch,
    needs_grad: bool,
}

/// Map from tensor name to the gradient of a scalar loss.
#[derive(Debug, Default)]
pub struct GradientMap {
    map: HashMap<String, Array2<f64>>,
}

impl GradientMap {
    pub fn get(&self, name: &str) -> Option<&Array2<f64>> {
        self.map.get(name)
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.map.keys().map(|s| s.as_str())
    }

    pub fn len(&self) -> usize {
        self.map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }

    pub fn insert(&mut self, name: &str, grad: Array2<f64>) {
        self.map.insert(name.to_string(), grad);
    }

    fn accumulate(&mut self, name: &str, grad: Array2<f64>) {
        match self.map.get_mut(name) {
            Some(g) => *g += &grad,
            None => {
                self.map.insert(name.to_string(), grad);
            }
        }
    }
}

/// Record of primitive operations, replayable in reverse. One tape lives for
/// one training step and is consumed by [`GradientTape::backward`].
#[derive(Default)]
pub struct GradientTape {
    nodes: Vec<Node>,
}

impl GradientTape {
    pub fn new() -> Self {
        Self::default()
    }

    fn push(&mut self, op: Op, batch: DualBatch, needs_grad: bool) -> NodeId {
        let id = NodeId(self.nodes.len());
        self.nodes.push(Node {
            op,
            batch,
            needs_grad,
        });
        id
    }

    fn node(&self, id: NodeId) -> Result<&Node> {
        self.nodes
            .get(id.0)
            .ok_or_else(|| Error::Config(format!("node {} not on tape", id.0)))
    }

    pub fn batch(&self, id: NodeId) -> &DualBatch {
        &self.nodes[id.0].batch
    }

    pub fn leaf(&mut self, batch: DualBatch) -> NodeId {
        self.push(Op::Leaf, batch, false)
    }

    pub fn time_input(&mut self, times: &Array1<f64>) -> NodeId {
        self.leaf(DualBatch::time_input(times))
    }

    /// values = in · W + b (row-broadcast bias); tangents = d(in)/dt · W.
    pub fn affine(
        &mut self,
        store: &ParameterStore,
        input: NodeId,
        weight: &str,
        bias: &str,
    ) -> Result<NodeId> {
        let w = store.require(weight)?;
        let b = store.require(bias)?;
        let node = self.node(input)?;
        let (n, in_width) = node.batch.dim();
        let (w_rows, w_cols) = w.shape();
        if w_rows != in_width {
            return Err(Error::ShapeMismatch(format!(
                "affine {weight:?}: input width {in_width}, weight rows {w_rows}"
            )));
        }
        if b.shape() != (1, w_cols) {
            return Err(Error::ShapeMismatch(format!(
                "affine {bias:?}: expected 1x{w_cols}, got {:?}",
                b.shape()
            )));
        }
        let mut values = node.batch.values.dot(&w.data);
        let tangents = node.batch.tangents.dot(&w.data);
        for mut row in values.rows_mut() {
            row += &b.data.row(0);
        }
        let _ = n;
        let needs_grad = node.needs_grad || !w.frozen || !b.frozen;
        Ok(self.push(
            Op::Affine {
                input,
                weight: weight.to_string(),
                bias: bias.to_string(),
            },
            DualBatch { values, tangents },
            needs_grad,
        ))
    }

    pub fn activation(&mut self, input: NodeId, kind: Activation) -> Result<NodeId> {
        let node = self.node(input)?;
        let values = node.batch.values.mapv(|x| kind.apply(x));
        let mut tangents = node.batch.values.mapv(|x| kind.d1(x));
        tangents *= &node.batch.tangents;
        let needs_grad = node.needs_grad;
        Ok(self.push(
            Op::Activation { input, kind },
            DualBatch { values, tangents },
            needs_grad,
        ))
    }

    pub fn add(&mut self, lhs: NodeId, rhs: NodeId) -> Result<NodeId> {
        let a = self.node(lhs)?;
        let b = self.node(rhs)?;
        if a.batch.dim() != b.batch.dim() {
            return Err(Error::ShapeMismatch(format!(
                "add: {:?} vs {:?}",
                a.batch.dim(),
                b.batch.dim()
            )));
        }
        let values = &a.batch.values + &b.batch.values;
        let tangents = &a.batch.tangents + &b.batch.tangents;
        let needs_grad = a.needs_grad || b.needs_grad;
        Ok(self.push(
            Op::Add { lhs, rhs },
            DualBatch { values, tangents },
            needs_grad,
        ))
    }

    /// out = offset + (1 - e^{-t}) * in. `times` must match the batch rows.
    pub fn reparam(
        &mut self,
        input: NodeId,
        offset: &Array1<f64>,
        times: &Array1<f64>,
    ) -> Result<NodeId> {
        let node = self.node(input)?;
        let (n, width) = node.batch.dim();
        if times.len() != n {
            return Err(Error::ShapeMismatch(format!(
                "reparam: {} times for batch of {n}",
                times.len()
            )));
        }
        if offset.len() != width {
            return Err(Error::ShapeMismatch(format!(
                "reparam: offset width {} vs batch width {width}",
                offset.len()
            )));
        }
        let decay = times.mapv(|t| (-t).exp());
        let scale = decay.mapv(|d| 1.0 - d);
        let mut values = Array2::zeros((n, width));
        let mut tangents = Array2::zeros((n, width));
        for i in 0..n {
            for j in 0..width {
                values[(i, j)] = offset[j] + scale[i] * node.batch.values[(i, j)];
                tangents[(i, j)] =
                    decay[i] * node.batch.values[(i, j)] + scale[i] * node.batch.tangents[(i, j)];
            }
        }
        let needs_grad = node.needs_grad;
        Ok(self.push(
            Op::Reparam { input, scale, decay },
            DualBatch { values, tangents },
            needs_grad,
        ))
    }

    /// Hamilton residuals of a 4-channel reparametrized state:
    ///   r1 = dx/dt - px, r2 = dy/dt - py,
    ///   r3 = dpx/dt + dV/dx, r4 = dpy/dt + dV/dy.
    /// `grad_v` holds (dV/dx, dV/dy) and `hess_v` (Vxx, Vxy, Vyy) at the
    /// state's positions, both with one row per batch entry.
    pub fn residual(
        &mut self,
        input: NodeId,
        grad_v: &Array2<f64>,
        hess_v: &Array2<f64>,
    ) -> Result<NodeId> {
        let node = self.node(input)?;
        let (n, width) = node.batch.dim();
        if width != 4 {
            return Err(Error::ShapeMismatch(format!(
                "residual: expected 4 channels, got {width}"
            )));
        }
        if grad_v.dim() != (n, 2) || hess_v.dim() != (n, 3) {
            return Err(Error::ShapeMismatch(
                "residual: potential derivative cache shape".into(),
            ));
        }
        let v = &node.batch.values;
        let t = &node.batch.tangents;
        let mut values = Array2::zeros((n, 4));
        for i in 0..n {
            values[(i, 0)] = t[(i, 0)] - v[(i, 2)];
            values[(i, 1)] = t[(i, 1)] - v[(i, 3)];
            values[(i, 2)] = t[(i, 2)] + grad_v[(i, 0)];
            values[(i, 3)] = t[(i, 3)] + grad_v[(i, 1)];
        }
        let needs_grad = node.needs_grad;
        Ok(self.push(
            Op::Residual {
                input,
                hess: hess_v.clone(),
            },
            DualBatch {
                tangents: Array2::zeros((n, 4)),
                values,
            },
            needs_grad,
        ))
    }

    /// Mean of squared entries, as a 1x1 scalar node.
    pub fn mean_square(&mut self, input: NodeId) -> Result<NodeId> {
        let node = self.node(input)?;
        let count = node.batch.values.len() as f64;
        let total: f64 = node.batch.values.iter().map(|x| x * x).sum();
        let needs_grad = node.needs_grad;
        Ok(self.push(
            Op::MeanSquare { input },
            DualBatch {
                values: Array2::from_elem((1, 1), total / count),
                tangents: Array2::zeros((1, 1)),
            },
            needs_grad,
        ))
    }

    /// Mean of several scalar nodes.
    pub fn mean_scalars(&mut self, inputs: &[NodeId]) -> Result<NodeId> {
        if inputs.is_empty() {
            return Err(Error::Config("mean_scalars: empty input set".into()));
        }
        let mut total = 0.0;
        let mut needs_grad = false;
        for &id in inputs {
            let node = self.node(id)?;
            if node.batch.dim() != (1, 1) {
                return Err(Error::ShapeMismatch(
                    "mean_scalars: non-scalar input".into(),
                ));
            }
            total += node.batch.values[(0, 0)];
            needs_grad |= node.needs_grad;
        }
        Ok(self.push(
            Op::MeanScalars {
                inputs: inputs.to_vec(),
            },
            DualBatch {
                values: Array2::from_elem((1, 1), total / inputs.len() as f64),
                tangents: Array2::zeros((1, 1)),
            },
            needs_grad,
        ))
    }

    pub fn scalar_value(&self, id: NodeId) -> f64 {
        self.nodes[id.0].batch.values[(0, 0)]
    }

    /// Reverse sweep from a scalar loss node. Consumes the tape and returns
    /// gradients for every non-frozen tensor that participated.
    pub fn backward(self, store: &ParameterStore, loss: NodeId) -> Result<GradientMap> {
        let node = self.node(loss)?;
        if node.batch.dim() != (1, 1) {
            return Err(Error::Config(format!(
                "backward: loss node has shape {:?}, expected scalar",
                node.batch.dim()
            )));
        }
        self.backward_seeded(store, &[(loss, Array2::ones((1, 1)))])
    }

    /// Reverse sweep seeded with explicit adjoints on the given nodes' values
    /// (used when an external loss, e.g. a discriminator, consumes residuals).
    pub fn backward_seeded(
        self,
        store: &ParameterStore,
        seeds: &[(NodeId, Array2<f64>)],
    ) -> Result<GradientMap> {
        let mut adj_v: Vec<Option<Array2<f64>>> = (0..self.nodes.len()).map(|_| None).collect();
        let mut adj_t: Vec<Option<Array2<f64>>> = (0..self.nodes.len()).map(|_| None).collect();
        for (id, seed) in seeds {
            let node = self.node(*id)?;
            if node.batch.dim() != seed.dim() {
                return Err(Error::ShapeMismatch(format!(
                    "seed shape {:?} vs node shape {:?}",
                    seed.dim(),
                    node.batch.dim()
                )));
            }
            match &mut adj_v[id.0] {
                Some(a) => *a += seed,
                slot => *slot = Some(seed.clone()),
            }
        }

        fn add_into(slot: &mut Option<Array2<f64>>, grad: Array2<f64>) {
            match slot {
                Some(a) => *a += &grad,
                None => *slot = Some(grad),
            }
        }

        let mut grads = GradientMap::default();
        for idx in (0..self.nodes.len()).rev() {
            let (gv, gt) = match (adj_v[idx].take(), adj_t[idx].take()) {
                (None, None) => continue,
                (v, t) => {
                    let shape = self.nodes[idx].batch.dim();
                    (
                        v.unwrap_or_else(|| Array2::zeros(shape)),
                        t.unwrap_or_else(|| Array2::zeros(shape)),
                    )
                }
            };
            let node = &self.nodes[idx];
            match &node.op {
                Op::Leaf => {}
                Op::Affine {
                    input,
                    weight,
                    bias,
                } => {
                    let w = store.require(weight)?;
                    let b = store.require(bias)?;
                    let in_batch = &self.nodes[input.0].batch;
                    if !w.frozen {
                        let gw = in_batch.values.t().dot(&gv) + in_batch.tangents.t().dot(&gt);
                        grads.accumulate(weight, gw);
                    }
                    if !b.frozen {
                        let gb = gv.sum_axis(ndarray::Axis(0)).insert_axis(ndarray::Axis(0));
                        grads.accumulate(bias, gb);
                    }
                    if self.nodes[input.0].needs_grad {
                        add_into(&mut adj_v[input.0], gv.dot(&w.data.t()));
                        add_into(&mut adj_t[input.0], gt.dot(&w.data.t()));
                    }
                }
                Op::Activation { input, kind } => {
                    if self.nodes[input.0].needs_grad {
                        let in_batch = &self.nodes[input.0].batch;
                        let d1 = in_batch.values.mapv(|x| kind.d1(x));
                        let d2 = in_batch.values.mapv(|x| kind.d2(x));
                        add_into(&mut adj_v[input.0], &gv * &d1 + &gt * &d2 * &in_batch.tangents);
                        add_into(&mut adj_t[input.0], &gt * &d1);
                    }
                }
                Op::Add { lhs, rhs } => {
                    for &id in [lhs, rhs].iter() {
                        if self.nodes[id.0].needs_grad {
                            add_into(&mut adj_v[id.0], gv.clone());
                            add_into(&mut adj_t[id.0], gt.clone());
                        }
                    }
                }
                Op::Reparam { input, scale, decay } => {
                    if self.nodes[input.0].needs_grad {
                        let (n, width) = gv.dim();
                        let mut dv = Array2::zeros((n, width));
                        let mut dt = Array2::zeros((n, width));
                        for i in 0..n {
                            for j in 0..width {
                                dv[(i, j)] = scale[i] * gv[(i, j)] + decay[i] * gt[(i, j)];
                                dt[(i, j)] = scale[i] * gt[(i, j)];
                            }
                        }
                        add_into(&mut adj_v[input.0], dv);
                        add_into(&mut adj_t[input.0], dt);
                    }
                }
                Op::Residual { input, hess } => {
                    if self.nodes[input.0].needs_grad {
                        let n = gv.nrows();
                        let mut dv = Array2::zeros((n, 4));
                        let mut dt = Array2::zeros((n, 4));
                        for i in 0..n {
                            dt[(i, 0)] = gv[(i, 0)];
                            dt[(i, 1)] = gv[(i, 1)];
                            dt[(i, 2)] = gv[(i, 2)];
                            dt[(i, 3)] = gv[(i, 3)];
                            dv[(i, 2)] = -gv[(i, 0)];
                            dv[(i, 3)] = -gv[(i, 1)];
                            // chain rule through dV evaluated at (x, y)
                            dv[(i, 0)] = gv[(i, 2)] * hess[(i, 0)] + gv[(i, 3)] * hess[(i, 1)];
                            dv[(i, 1)] = gv[(i, 2)] * hess[(i, 1)] + gv[(i, 3)] * hess[(i, 2)];
                        }
                        add_into(&mut adj_v[input.0], dv);
                        add_into(&mut adj_t[input.0], dt);
                    }
                }
                Op::MeanSquare { input } => {
                    if self.nodes[input.0].needs_grad {
                        let in_batch = &self.nodes[input.0].batch;
                        let count = in_batch.values.len() as f64;
                        let seed = gv[(0, 0)];
                        add_into(
                            &mut adj_v[input.0],
                            in_batch.values.mapv(|x| 2.0 * x * seed / count),
                        );
                    }
                }
                Op::MeanScalars { inputs } => {
                    let share = gv[(0, 0)] / inputs.len() as f64;
                    for &id in inputs {
                        if self.nodes[id.0].needs_grad {
                            add_into(&mut adj_v[id.0], Array2::from_elem((1, 1), share));
                        }
                    }
                }
            }
        }
        Ok(grads)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use ndarray::array;

    fn store_with(pairs: &[(&str, Array2<f64>)]) -> ParameterStore {
        let mut s = ParameterStore::new();
        for (name, data) in pairs {
            s.insert(name, data.clone()).unwrap();
        }
        s
    }

    #[test]
    fn affine_one_unit() {
        let store = store_with(&[("w", array![[2.0]]), ("b", array![[1.0]])]);
        let mut tape = GradientTape::new();
        let t = tape.time_input(&array![3.0]);
        let out = tape.affine(&store, t, "w", "b").unwrap();
        let batch = tape.batch(out);
        assert_eq!(batch.values[(0, 0)], 7.0);
        assert_eq!(batch.tangents[(0, 0)], 2.0);
    }

    #[test]
    fn affine_zero_weight_is_constant() {
        let store = store_with(&[("w", array![[0.0]]), ("b", array![[5.0]])]);
        let mut tape = GradientTape::new();
        let t = tape.time_input(&array![1.7]);
        let out = tape.affine(&store, t, "w", "b").unwrap();
        assert_eq!(tape.batch(out).values[(0, 0)], 5.0);
        assert_eq!(tape.batch(out).tangents[(0, 0)], 0.0);
    }

    #[test]
    fn affine_shape_mismatch_is_error() {
        let store = store_with(&[("w", array![[1.0], [2.0]]), ("b", array![[0.0]])]);
        let mut tape = GradientTape::new();
        let t = tape.time_input(&array![1.0]);
        assert!(tape.affine(&store, t, "w", "b").is_err());
    }

    #[test]
    fn tanh_at_zero_and_saturation() {
        let store = ParameterStore::new();
        let _ = store;
        let mut tape = GradientTape::new();
        let x = tape.leaf(DualBatch::new(array![[0.0], [25.0]], array![[1.0], [1.0]]).unwrap());
        let y = tape.activation(x, Activation::Tanh).unwrap();
        let batch = tape.batch(y);
        assert_eq!(batch.values[(0, 0)], 0.0);
        assert_eq!(batch.tangents[(0, 0)], 1.0);
        assert_relative_eq!(batch.values[(1, 0)], 1.0, epsilon = 1e-12);
        assert!(batch.tangents[(1, 0)].abs() < 1e-12);
    }

    #[test]
    fn sin_at_half_pi() {
        let mut tape = GradientTape::new();
        let x = tape.leaf(
            DualBatch::new(
                array![[std::f64::consts::FRAC_PI_2]],
                array![[1.0]],
            )
            .unwrap(),
        );
        let y = tape.activation(x, Activation::Sin).unwrap();
        assert_relative_eq!(tape.batch(y).values[(0, 0)], 1.0, epsilon = 1e-15);
        assert!(tape.batch(y).tangents[(0, 0)].abs() < 1e-12);
    }

    #[test]
    fn backward_quadratic_closed_form() {
        // loss = (w*t - 7)^2 at w=2, t=3: d/dw = 2*(6-7)*3 = -6
        let store = store_with(&[("w", array![[2.0]]), ("b", array![[-7.0]])]);
        let mut tape = GradientTape::new();
        let t = tape.time_input(&array![3.0]);
        let lin = tape.affine(&store, t, "w", "b").unwrap();
        let loss = tape.mean_square(lin).unwrap();
        let grads = tape.backward(&store, loss).unwrap();
        assert_relative_eq!(grads.get("w").unwrap()[(0, 0)], -6.0, epsilon = 1e-12);
    }

    #[test]
    fn backward_zero_loss_gives_zero_grads() {
        let store = store_with(&[("w", array![[0.0]]), ("b", array![[0.0]])]);
        let mut tape = GradientTape::new();
        let t = tape.time_input(&array![1.0, 2.0]);
        let lin = tape.affine(&store, t, "w", "b").unwrap();
        let loss = tape.mean_square(lin).unwrap();
        assert_eq!(tape.scalar_value(loss), 0.0);
        let grads = tape.backward(&store, loss).unwrap();
        assert_eq!(grads.get("w").unwrap()[(0, 0)], 0.0);
        assert_eq!(grads.get("b").unwrap()[(0, 0)], 0.0);
    }

    #[test]
    fn backward_rejects_non_scalar_loss() {
        let store = store_with(&[("w", array![[1.0]]), ("b", array![[0.0]])]);
        let mut tape = GradientTape::new();
        let t = tape.time_input(&array![1.0, 2.0]);
        let lin = tape.affine(&store, t, "w", "b").unwrap();
        assert!(tape.backward(&store, lin).is_err());
    }

    #[test]
    fn frozen_tensor_gets_no_gradient() {
        let mut store = store_with(&[("w", array![[2.0]]), ("b", array![[1.0]])]);
        store.freeze("w").unwrap();
        let mut tape = GradientTape::new();
        let t = tape.time_input(&array![3.0]);
        let lin = tape.affine(&store, t, "w", "b").unwrap();
        let loss = tape.mean_square(lin).unwrap();
        let grads = tape.backward(&store, loss).unwrap();
        assert!(grads.get("w").is_none());
        assert!(grads.get("b").is_some());
    }

    #[test]
    fn tangent_linearity_under_add() {
        let mut tape = GradientTape::new();
        let a = tape.leaf(DualBatch::new(array![[1.0, 2.0]], array![[0.5, -0.25]]).unwrap());
        let b = tape.leaf(DualBatch::new(array![[3.0, 4.0]], array![[1.5, 0.75]]).unwrap());
        let c = tape.add(a, b).unwrap();
        let batch = tape.batch(c);
        assert!((batch.tangents[(0, 0)] - 2.0).abs() < 1e-12);
        assert!((batch.tangents[(0, 1)] - 0.5).abs() < 1e-12);
    }

    #[test]
    fn store_json_round_trip_is_exact() {
        let mut store = store_with(&[
            ("w", array![[0.1234567890123456789, -1.0 / 3.0]]),
            ("b", array![[f64::MIN_POSITIVE, 1e300]]),
        ]);
        store.freeze("b").unwrap();
        let json = store.to_json();
        let restored = ParameterStore::from_json(json).unwrap();
        for (a, b) in store.iter().zip(restored.iter()) {
            assert_eq!(a.name, b.name);
            assert_eq!(a.frozen, b.frozen);
            assert_eq!(a.data, b.data);
        }
    }
}
