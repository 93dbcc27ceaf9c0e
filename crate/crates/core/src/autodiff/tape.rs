use alloc::format;
use alloc::vec::Vec;
use core::f64::consts::PI;

use super::kernel::gemm;
use super::Array;
use crate::{Error, Result};

/// Handle to a node on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone, Copy)]
enum Op {
    Leaf,
    MatMul(Var, Var),
    Affine(Var, Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Scale(Var, f64),
    Tanh(Var),
    Square(Var),
    Sum(Var),
    Mean(Var),
    ConcatCols(Var, Var),
    RepeatRows(Var),
    GaussianLogDensity(Var, Var, f64),
}

#[derive(Debug)]
struct Node {
    op: Op,
    value: Array,
    requires_grad: bool,
}

/// Append-only record of a forward computation. Node inputs always precede
/// the node, so the tape is a topological order of the graph.
#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
    first_non_finite: Option<usize>,
}

/// Gradients of a scalar with respect to the leaves of a tape.
#[derive(Debug)]
pub struct Gradients {
    grads: Vec<Option<Array>>,
    shapes: Vec<(usize, usize)>,
}

impl Gradients {
    /// `None` when `var` is not a trainable leaf or does not reach the loss.
    pub fn get(&self, var: Var) -> Option<&Array> {
        self.grads.get(var.0).and_then(Option::as_ref)
    }

    /// Gradient of a leaf, zero when the loss does not depend on it.
    pub fn wrt(&self, var: Var) -> Array {
        match self.get(var) {
            Some(g) => g.clone(),
            None => {
                let (r, c) = self.shapes[var.0];
                Array::zeros(r, c)
            }
        }
    }
}

fn shape_err(op: &'static str, a: &Array, b: &Array) -> Error {
    Error::Shape {
        op,
        lhs: a.shape(),
        rhs: b.shape(),
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

    /// Index of the first node whose forward value has a NaN or infinity.
    pub fn first_non_finite(&self) -> Option<usize> {
        self.first_non_finite
    }

    pub fn value(&self, v: Var) -> &Array {
        &self.nodes[v.0].value
    }

    /// A trainable leaf.
    pub fn param(&mut self, value: Array) -> Var {
        self.push(Op::Leaf, value, true)
    }

    /// A leaf that never receives gradient.
    pub fn constant(&mut self, value: Array) -> Var {
        self.push(Op::Leaf, value, false)
    }

    fn push(&mut self, op: Op, value: Array, requires_grad: bool) -> Var {
        if self.first_non_finite.is_none() && !value.all_finite() {
            self.first_non_finite = Some(self.nodes.len());
        }
        self.nodes.push(Node {
            op,
            value,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn needs(&self, vars: &[Var]) -> bool {
        vars.iter().any(|v| self.nodes[v.0].requires_grad)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = self.value(a).matmul(self.value(b))?;
        let rg = self.needs(&[a, b]);
        Ok(self.push(Op::MatMul(a, b), value, rg))
    }

    /// `x * w + b`, with the `1 x n` bias broadcast over rows.
    pub fn affine(&mut self, x: Var, w: Var, b: Var) -> Result<Var> {
        let value = self.value(x).affine(self.value(w), self.value(b))?;
        let rg = self.needs(&[x, w, b]);
        Ok(self.push(Op::Affine(x, w, b), value, rg))
    }

    fn zip(&mut self, a: Var, b: Var, name: &'static str, f: impl Fn(f64, f64) -> f64) -> Result<Array> {
        let (va, vb) = (self.value(a), self.value(b));
        if va.shape() != vb.shape() {
            return Err(shape_err(name, va, vb));
        }
        let data = va.data().iter().zip(vb.data()).map(|(&x, &y)| f(x, y)).collect();
        Array::from_vec(va.rows(), va.cols(), data)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = self.zip(a, b, "add", |x, y| x + y)?;
        let rg = self.needs(&[a, b]);
        Ok(self.push(Op::Add(a, b), value, rg))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = self.zip(a, b, "sub", |x, y| x - y)?;
        let rg = self.needs(&[a, b]);
        Ok(self.push(Op::Sub(a, b), value, rg))
    }

    pub fn scale(&mut self, a: Var, k: f64) -> Var {
        let value = self.value(a).map(|x| k * x);
        let rg = self.needs(&[a]);
        self.push(Op::Scale(a, k), value, rg)
    }

    pub fn neg(&mut self, a: Var) -> Var {
        self.scale(a, -1.0)
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        let value = self.value(a).map(libm::tanh);
        let rg = self.needs(&[a]);
        self.push(Op::Tanh(a), value, rg)
    }

    pub fn square(&mut self, a: Var) -> Var {
        let value = self.value(a).map(|x| x * x);
        let rg = self.needs(&[a]);
        self.push(Op::Square(a), value, rg)
    }

    /// Sum of all entries, as a `1 x 1` node.
    pub fn sum(&mut self, a: Var) -> Var {
        let value = Array::scalar(self.value(a).data().iter().sum());
        let rg = self.needs(&[a]);
        self.push(Op::Sum(a), value, rg)
    }

    pub fn mean(&mut self, a: Var) -> Var {
        let v = self.value(a);
        let value = Array::scalar(v.data().iter().sum::<f64>() / v.len() as f64);
        let rg = self.needs(&[a]);
        self.push(Op::Mean(a), value, rg)
    }

    /// `[a | b]` for arrays with the same number of rows.
    pub fn concat_cols(&mut self, a: Var, b: Var) -> Result<Var> {
        let (va, vb) = (self.value(a), self.value(b));
        if va.rows() != vb.rows() {
            return Err(shape_err("concat_cols", va, vb));
        }
        let cols = va.cols() + vb.cols();
        let mut data = Vec::with_capacity(va.rows() * cols);
        for r in 0..va.rows() {
            data.extend_from_slice(va.row(r));
            data.extend_from_slice(vb.row(r));
        }
        let value = Array::from_vec(va.rows(), cols, data)?;
        let rg = self.needs(&[a, b]);
        Ok(self.push(Op::ConcatCols(a, b), value, rg))
    }

    /// Stacks `n` copies of a single-row node.
    pub fn repeat_rows(&mut self, a: Var, n: usize) -> Result<Var> {
        let va = self.value(a);
        if va.rows() != 1 {
            return Err(Error::Shape {
                op: "repeat_rows",
                lhs: va.shape(),
                rhs: (1, va.cols()),
            });
        }
        let value = Array::from_vec(n, va.cols(), va.data().repeat(n))?;
        let rg = self.needs(&[a]);
        Ok(self.push(Op::RepeatRows(a), value, rg))
    }

    /// `sum_ij log N(x_ij | mean_ij, variance)` as a `1 x 1` node. Either
    /// argument may be a single row that is broadcast against the other.
    pub fn gaussian_log_density(&mut self, x: Var, mean: Var, variance: f64) -> Result<Var> {
        if !(variance > 0.0 && variance.is_finite()) {
            return Err(Error::Contract(format!("variance must be positive, got {variance}")));
        }
        let (vx, vm) = (self.value(x), self.value(mean));
        let rows = broadcast_rows(vx, vm).ok_or_else(|| shape_err("gaussian_log_density", vx, vm))?;
        let norm = -0.5 * libm::log(2.0 * PI * variance);
        let mut total = 0.0;
        for r in 0..rows {
            let xr = vx.row(if vx.rows() == 1 { 0 } else { r });
            let mr = vm.row(if vm.rows() == 1 { 0 } else { r });
            for (a, b) in xr.iter().zip(mr) {
                total += norm - (a - b) * (a - b) / (2.0 * variance);
            }
        }
        let rg = self.needs(&[x, mean]);
        Ok(self.push(Op::GaussianLogDensity(x, mean, variance), Array::scalar(total), rg))
    }

    /// Reverse sweep from a scalar node. Gradients are kept for trainable
    /// leaves only.
    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        let shape = self.value(loss).shape();
        if shape != (1, 1) {
            return Err(Error::Contract(format!(
                "backward needs a scalar loss, got shape {shape:?}"
            )));
        }
        let n = loss.0 + 1;
        let mut grads: Vec<Option<Array>> = (0..n).map(|_| None).collect();
        grads[loss.0] = Some(Array::scalar(1.0));
        for i in (0..n).rev() {
            let node = &self.nodes[i];
            if !node.requires_grad {
                grads[i] = None;
                continue;
            }
            if let Op::Leaf = node.op {
                continue;
            }
            let Some(g) = grads[i].take() else { continue };
            self.propagate(node, &g, &mut grads);
        }
        Ok(Gradients {
            grads,
            shapes: self.nodes[..n].iter().map(|nd| nd.value.shape()).collect(),
        })
    }

    fn propagate(&self, node: &Node, g: &Array, grads: &mut [Option<Array>]) {
        let wants = |v: Var| self.nodes[v.0].requires_grad;
        match node.op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                let (va, vb) = (self.value(a), self.value(b));
                let (m, k, n) = (va.rows(), va.cols(), vb.cols());
                if wants(a) {
                    let acc = slot(grads, a, va.shape());
                    gemm(m, n, k, 1.0, g.data(), false, vb.data(), true, 1.0, acc.data_mut());
                }
                if wants(b) {
                    let acc = slot(grads, b, vb.shape());
                    gemm(k, m, n, 1.0, va.data(), true, g.data(), false, 1.0, acc.data_mut());
                }
            }
            Op::Affine(x, w, b) => {
                let (vx, vw) = (self.value(x), self.value(w));
                let (m, k, n) = (vx.rows(), vx.cols(), vw.cols());
                if wants(x) {
                    let acc = slot(grads, x, vx.shape());
                    gemm(m, n, k, 1.0, g.data(), false, vw.data(), true, 1.0, acc.data_mut());
                }
                if wants(w) {
                    let acc = slot(grads, w, vw.shape());
                    gemm(k, m, n, 1.0, vx.data(), true, g.data(), false, 1.0, acc.data_mut());
                }
                if wants(b) {
                    slot(grads, b, (1, n)).add_assign(&g.column_sums());
                }
            }
            Op::Add(a, b) => {
                if wants(a) {
                    slot(grads, a, g.shape()).add_assign(g);
                }
                if wants(b) {
                    slot(grads, b, g.shape()).add_assign(g);
                }
            }
            Op::Sub(a, b) => {
                if wants(a) {
                    slot(grads, a, g.shape()).add_assign(g);
                }
                if wants(b) {
                    slot(grads, b, g.shape()).add_scaled_assign(g, -1.0);
                }
            }
            Op::Scale(a, k) => {
                if wants(a) {
                    slot(grads, a, g.shape()).add_scaled_assign(g, k);
                }
            }
            Op::Tanh(a) => {
                if wants(a) {
                    let acc = slot(grads, a, g.shape());
                    for ((o, gv), y) in acc.data_mut().iter_mut().zip(g.data()).zip(node.value.data()) {
                        *o += gv * (1.0 - y * y);
                    }
                }
            }
            Op::Square(a) => {
                if wants(a) {
                    let va = self.value(a);
                    let acc = slot(grads, a, g.shape());
                    for ((o, gv), x) in acc.data_mut().iter_mut().zip(g.data()).zip(va.data()) {
                        *o += 2.0 * gv * x;
                    }
                }
            }
            Op::Sum(a) | Op::Mean(a) => {
                if wants(a) {
                    let va = self.value(a);
                    let mut k = g.item();
                    if let Op::Mean(_) = node.op {
                        k /= va.len() as f64;
                    }
                    let acc = slot(grads, a, va.shape());
                    acc.data_mut().iter_mut().for_each(|o| *o += k);
                }
            }
            Op::ConcatCols(a, b) => {
                let ca = self.value(a).cols();
                let cb = self.value(b).cols();
                for (var, offset, cols) in [(a, 0, ca), (b, ca, cb)] {
                    if !wants(var) {
                        continue;
                    }
                    let acc = slot(grads, var, (g.rows(), cols));
                    for r in 0..g.rows() {
                        let src = &g.row(r)[offset..offset + cols];
                        for (o, s) in acc.row_mut(r).iter_mut().zip(src) {
                            *o += s;
                        }
                    }
                }
            }
            Op::RepeatRows(a) => {
                if wants(a) {
                    slot(grads, a, (1, g.cols())).add_assign(&g.column_sums());
                }
            }
            Op::GaussianLogDensity(x, mean, variance) => {
                let (vx, vm) = (self.value(x), self.value(mean));
                let rows = vx.rows().max(vm.rows());
                let k = g.item() / variance;
                // d/dx = -(x - m) / var, d/dm = (x - m) / var
                for (var, sign, shape) in [(x, -1.0, vx.shape()), (mean, 1.0, vm.shape())] {
                    if !wants(var) {
                        continue;
                    }
                    let acc = slot(grads, var, shape);
                    let single = shape.0 == 1;
                    for r in 0..rows {
                        let xr = vx.row(if vx.rows() == 1 { 0 } else { r });
                        let mr = vm.row(if vm.rows() == 1 { 0 } else { r });
                        let out = acc.row_mut(if single { 0 } else { r });
                        for ((o, a), b) in out.iter_mut().zip(xr).zip(mr) {
                            *o += sign * k * (a - b);
                        }
                    }
                }
            }
        }
    }
}

fn broadcast_rows(a: &Array, b: &Array) -> Option<usize> {
    if a.cols() != b.cols() {
        return None;
    }
    match (a.rows(), b.rows()) {
        (x, y) if x == y => Some(x),
        (1, y) => Some(y),
        (x, 1) => Some(x),
        _ => None,
    }
}

fn slot(grads: &mut [Option<Array>], v: Var, shape: (usize, usize)) -> &mut Array {
    grads[v.0].get_or_insert_with(|| Array::zeros(shape.0, shape.1))
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    #[test]
    fn tanh_at_zero() {
        let mut t = Tape::new();
        let x = t.param(Array::scalar(0.0));
        let y = t.tanh(x);
        assert_eq!(t.value(y).item(), 0.0);
        let g = t.backward(y).unwrap();
        assert_eq!(g.wrt(x).item(), 1.0);
    }

    #[test]
    fn sum_of_squares_gradient() {
        let mut t = Tape::new();
        let data = vec![1.5, -2.0, 0.25, 3.0];
        let x = t.param(Array::from_vec(2, 2, data.clone()).unwrap());
        let sq = t.square(x);
        let loss = t.sum(sq);
        let g = t.backward(loss).unwrap().wrt(x);
        for (gv, xv) in g.data().iter().zip(&data) {
            assert_eq!(*gv, 2.0 * xv);
        }
    }

    #[test]
    fn gaussian_log_density_value() {
        let mut t = Tape::new();
        let x = t.constant(Array::scalar(0.0));
        let m = t.param(Array::scalar(0.0));
        let l = t.gaussian_log_density(x, m, 0.1).unwrap();
        assert!((t.value(l).item() - 0.232_354_013_292_350_1).abs() < 1e-12);
        assert!(t.gaussian_log_density(x, m, 0.0).is_err());
    }

    #[test]
    fn sum_of_parameters_has_unit_gradient() {
        let mut t = Tape::new();
        let p = t.param(Array::from_vec(3, 2, vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]).unwrap());
        let s = t.sum(p);
        assert_eq!(t.backward(s).unwrap().wrt(p), Array::filled(3, 2, 1.0));
    }

    #[test]
    fn disconnected_parameter_gets_zero() {
        let mut t = Tape::new();
        let used = t.param(Array::scalar(2.0));
        let unused = t.param(Array::filled(2, 3, 7.0));
        let sq = t.square(used);
        let g = t.backward(sq).unwrap();
        assert!(g.get(unused).is_none());
        assert_eq!(g.wrt(unused), Array::zeros(2, 3));
        assert_eq!(g.wrt(used).item(), 4.0);
    }

    #[test]
    fn non_scalar_loss_is_rejected() {
        let mut t = Tape::new();
        let p = t.param(Array::zeros(2, 2));
        assert!(matches!(t.backward(p), Err(Error::Contract(_))));
    }

    #[test]
    fn shape_mismatch_is_an_error() {
        let mut t = Tape::new();
        let a = t.param(Array::zeros(2, 3));
        let b = t.param(Array::zeros(2, 3));
        assert!(matches!(t.matmul(a, b), Err(Error::Shape { .. })));
        let c = t.param(Array::zeros(3, 3));
        assert!(t.add(a, c).is_err());
        assert!(t.concat_cols(a, c).is_err());
        assert!(t.repeat_rows(a, 4).is_err());
    }

    #[test]
    fn non_finite_values_are_flagged() {
        let mut t = Tape::new();
        let a = t.param(Array::scalar(1e200));
        assert_eq!(t.first_non_finite(), None);
        let sq = t.square(a);
        assert_eq!(t.first_non_finite(), Some(sq.index()));
    }

    #[test]
    fn constants_receive_no_gradient() {
        let mut t = Tape::new();
        let c = t.constant(Array::scalar(3.0));
        let p = t.param(Array::scalar(2.0));
        let prod = t.matmul(c, p).unwrap();
        let g = t.backward(prod).unwrap();
        assert!(g.get(c).is_none());
        assert_eq!(g.wrt(p).item(), 3.0);
    }
}
