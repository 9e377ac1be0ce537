//! Reverse-mode differentiation over a per-step operation tape.

use std::collections::HashMap;

use super::matrix::gemm_into;
use super::{Matrix, ParamId, ParamStore};
use crate::error::{Error, Result};

/// Handle to a value recorded on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    Param,
    MatMul(Var, Var),
    AddRow(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Div(Var, Var),
    Minimum(Var, Var),
    Relu(Var),
    Tanh(Var),
    Softplus(Var),
    Exp(Var),
    Ln(Var),
    Square(Var),
    Scale(Var, f64),
    AddScalar(Var),
    Clamp(Var, f64, f64),
    GatherRows(Var, Vec<usize>),
    ScatterAddRows(Var, Vec<usize>),
    ConcatCols(Vec<Var>),
    ConcatRows(Vec<Var>),
    MeanRows(Var),
    Sum(Var),
}

#[derive(Debug, Default)]
pub struct Tape {
    values: Vec<Matrix>,
    ops: Vec<Op>,
    params: HashMap<ParamId, Var>,
}

fn shape_err(op: &str, a: (usize, usize), b: (usize, usize)) -> Error {
    Error::Dimension(format!("{op}: shapes {a:?} and {b:?} are incompatible"))
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

impl Tape {
    pub fn new() -> Self {
        Tape::default()
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    fn push(&mut self, value: Matrix, op: Op) -> Var {
        self.values.push(value);
        self.ops.push(op);
        Var(self.values.len() - 1)
    }

    pub fn value(&self, v: Var) -> &Matrix {
        &self.values[v.0]
    }

    pub fn shape(&self, v: Var) -> (usize, usize) {
        self.values[v.0].shape()
    }

    /// A constant input; gradients flow to it but it is not a parameter.
    pub fn leaf(&mut self, value: Matrix) -> Var {
        self.push(value, Op::Leaf)
    }

    /// The tape node for a parameter, created on first use.
    pub fn param(&mut self, store: &ParamStore, id: ParamId) -> Var {
        if let Some(&v) = self.params.get(&id) {
            return v;
        }
        let v = self.push(store.get(id).clone(), Op::Param);
        self.params.insert(id, v);
        v
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa.1 != sb.0 {
            return Err(shape_err("matmul", sa, sb));
        }
        let out = self.values[a.0].matmul(&self.values[b.0]);
        Ok(self.push(out, Op::MatMul(a, b)))
    }

    /// Add a `1 × c` row to every row of `a`.
    pub fn add_row(&mut self, a: Var, bias: Var) -> Result<Var> {
        let (sa, sb) = (self.shape(a), self.shape(bias));
        if sb != (1, sa.1) {
            return Err(shape_err("add_row", sa, sb));
        }
        let mut out = self.values[a.0].clone();
        let b = self.values[bias.0].data().to_vec();
        for r in 0..sa.0 {
            for (x, y) in out.row_mut(r).iter_mut().zip(&b) {
                *x += y;
            }
        }
        Ok(self.push(out, Op::AddRow(a, bias)))
    }

    fn binary(&mut self, name: &str, a: Var, b: Var, f: impl Fn(f64, f64) -> f64, op: Op) -> Result<Var> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa != sb {
            return Err(shape_err(name, sa, sb));
        }
        let out = self.values[a.0].zip_map(&self.values[b.0], f);
        Ok(self.push(out, op))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary("add", a, b, |x, y| x + y, Op::Add(a, b))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary("sub", a, b, |x, y| x - y, Op::Sub(a, b))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary("mul", a, b, |x, y| x * y, Op::Mul(a, b))
    }

    pub fn div(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary("div", a, b, |x, y| x / y, Op::Div(a, b))
    }

    pub fn minimum(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary("minimum", a, b, f64::min, Op::Minimum(a, b))
    }

    fn unary(&mut self, a: Var, f: impl Fn(f64) -> f64, op: Op) -> Var {
        let out = self.values[a.0].map(f);
        self.push(out, op)
    }

    pub fn relu(&mut self, a: Var) -> Var {
        self.unary(a, |x| x.max(0.0), Op::Relu(a))
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        self.unary(a, f64::tanh, Op::Tanh(a))
    }

    pub fn softplus(&mut self, a: Var) -> Var {
        self.unary(a, softplus, Op::Softplus(a))
    }

    pub fn exp(&mut self, a: Var) -> Var {
        self.unary(a, f64::exp, Op::Exp(a))
    }

    pub fn ln(&mut self, a: Var) -> Var {
        self.unary(a, f64::ln, Op::Ln(a))
    }

    pub fn square(&mut self, a: Var) -> Var {
        self.unary(a, |x| x * x, Op::Square(a))
    }

    pub fn scale(&mut self, a: Var, s: f64) -> Var {
        self.unary(a, |x| x * s, Op::Scale(a, s))
    }

    pub fn add_scalar(&mut self, a: Var, s: f64) -> Var {
        self.unary(a, |x| x + s, Op::AddScalar(a))
    }

    pub fn clamp(&mut self, a: Var, lo: f64, hi: f64) -> Var {
        self.unary(a, |x| x.clamp(lo, hi), Op::Clamp(a, lo, hi))
    }

    /// `out[k] = a[idx[k]]`.
    pub fn gather_rows(&mut self, a: Var, idx: &[usize]) -> Result<Var> {
        let src = &self.values[a.0];
        if let Some(&bad) = idx.iter().find(|&&i| i >= src.rows()) {
            return Err(Error::Dimension(format!(
                "gather_rows: index {bad} out of {} rows",
                src.rows()
            )));
        }
        let cols = src.cols();
        let mut data = Vec::with_capacity(idx.len() * cols);
        for &i in idx {
            data.extend_from_slice(src.row(i));
        }
        let out = Matrix::from_vec(idx.len(), cols, data);
        Ok(self.push(out, Op::GatherRows(a, idx.to_vec())))
    }

    /// `out[idx[k]] += a[k]` into `rows` zero rows.
    pub fn scatter_add_rows(&mut self, a: Var, idx: &[usize], rows: usize) -> Result<Var> {
        let src = &self.values[a.0];
        if idx.len() != src.rows() {
            return Err(Error::Dimension(format!(
                "scatter_add_rows: {} indices for {} rows",
                idx.len(),
                src.rows()
            )));
        }
        if let Some(&bad) = idx.iter().find(|&&i| i >= rows) {
            return Err(Error::Dimension(format!(
                "scatter_add_rows: target {bad} out of {rows} rows"
            )));
        }
        let mut out = Matrix::zeros(rows, src.cols());
        for (k, &i) in idx.iter().enumerate() {
            for (o, v) in out.row_mut(i).iter_mut().zip(src.row(k)) {
                *o += v;
            }
        }
        Ok(self.push(out, Op::ScatterAddRows(a, idx.to_vec())))
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var> {
        let rows = self.shape(parts[0]).0;
        if let Some(&p) = parts.iter().find(|&&p| self.shape(p).0 != rows) {
            return Err(shape_err("concat_cols", self.shape(parts[0]), self.shape(p)));
        }
        let cols: usize = parts.iter().map(|&p| self.shape(p).1).sum();
        let mut out = Matrix::zeros(rows, cols);
        for r in 0..rows {
            let mut off = 0;
            for &p in parts {
                let src = self.values[p.0].row(r);
                out.row_mut(r)[off..off + src.len()].copy_from_slice(src);
                off += src.len();
            }
        }
        Ok(self.push(out, Op::ConcatCols(parts.to_vec())))
    }

    pub fn concat_rows(&mut self, parts: &[Var]) -> Result<Var> {
        let cols = self.shape(parts[0]).1;
        if let Some(&p) = parts.iter().find(|&&p| self.shape(p).1 != cols) {
            return Err(shape_err("concat_rows", self.shape(parts[0]), self.shape(p)));
        }
        let mut data = Vec::new();
        for &p in parts {
            data.extend_from_slice(self.values[p.0].data());
        }
        let rows = data.len() / cols.max(1);
        let out = Matrix::from_vec(if cols == 0 { 0 } else { rows }, cols, data);
        Ok(self.push(out, Op::ConcatRows(parts.to_vec())))
    }

    /// Column means as a `1 × c` row; zeros for an empty input.
    pub fn mean_rows(&mut self, a: Var) -> Var {
        let src = &self.values[a.0];
        let mut out = Matrix::zeros(1, src.cols());
        if src.rows() > 0 {
            let inv = 1.0 / src.rows() as f64;
            for r in 0..src.rows() {
                for (o, v) in out.row_mut(0).iter_mut().zip(src.row(r)) {
                    *o += v;
                }
            }
            out.scale_assign(inv);
        }
        self.push(out, Op::MeanRows(a))
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let s = self.values[a.0].sum();
        self.push(Matrix::scalar(s), Op::Sum(a))
    }

    pub fn mean(&mut self, a: Var) -> Var {
        let n = self.values[a.0].len().max(1) as f64;
        let s = self.sum(a);
        self.scale(s, 1.0 / n)
    }

    /// Gradients of the scalar `loss` with respect to every recorded value.
    pub fn backward(&self, loss: Var) -> Result<Grads> {
        if loss.0 >= self.values.len() {
            return Err(Error::State("backward on a value not recorded on this tape".into()));
        }
        if self.values[loss.0].shape() != (1, 1) {
            return Err(Error::Dimension(format!(
                "backward needs a scalar loss, got {:?}",
                self.values[loss.0].shape()
            )));
        }
        let mut grads: Vec<Option<Matrix>> = vec![None; loss.0 + 1];
        grads[loss.0] = Some(Matrix::scalar(1.0));

        for i in (0..=loss.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            let y = &self.values[i];
            match &self.ops[i] {
                Op::Leaf | Op::Param => {}
                Op::MatMul(a, b) => {
                    let (va, vb) = (&self.values[a.0], &self.values[b.0]);
                    let ga = slot(&mut grads, *a, va.shape());
                    gemm_into(&g, false, vb, true, ga, 1.0);
                    let gb = slot(&mut grads, *b, vb.shape());
                    gemm_into(va, true, &g, false, gb, 1.0);
                }
                Op::AddRow(a, b) => {
                    accumulate(&mut grads, *a, &g);
                    let gb = slot(&mut grads, *b, (1, g.cols()));
                    for r in 0..g.rows() {
                        for (o, v) in gb.row_mut(0).iter_mut().zip(g.row(r)) {
                            *o += v;
                        }
                    }
                }
                Op::Add(a, b) => {
                    accumulate(&mut grads, *a, &g);
                    accumulate(&mut grads, *b, &g);
                }
                Op::Sub(a, b) => {
                    accumulate(&mut grads, *a, &g);
                    accumulate(&mut grads, *b, &g.map(|v| -v));
                }
                Op::Mul(a, b) => {
                    let (va, vb) = (&self.values[a.0], &self.values[b.0]);
                    accumulate(&mut grads, *a, &g.zip_map(vb, |g, y| g * y));
                    accumulate(&mut grads, *b, &g.zip_map(va, |g, x| g * x));
                }
                Op::Div(a, b) => {
                    let vb = &self.values[b.0];
                    accumulate(&mut grads, *a, &g.zip_map(vb, |g, d| g / d));
                    let gy = g.zip_map(y, |g, q| g * q);
                    accumulate(&mut grads, *b, &gy.zip_map(vb, |gq, d| -gq / d));
                }
                Op::Minimum(a, b) => {
                    let (va, vb) = (&self.values[a.0], &self.values[b.0]);
                    let pick_a = va.zip_map(vb, |x, y| if x <= y { 1.0 } else { 0.0 });
                    accumulate(&mut grads, *a, &g.zip_map(&pick_a, |g, m| g * m));
                    accumulate(&mut grads, *b, &g.zip_map(&pick_a, |g, m| g * (1.0 - m)));
                }
                Op::Relu(a) => {
                    let x = &self.values[a.0];
                    accumulate(&mut grads, *a, &g.zip_map(x, |g, x| if x > 0.0 { g } else { 0.0 }));
                }
                Op::Tanh(a) => accumulate(&mut grads, *a, &g.zip_map(y, |g, t| g * (1.0 - t * t))),
                Op::Softplus(a) => {
                    let x = &self.values[a.0];
                    accumulate(&mut grads, *a, &g.zip_map(x, |g, x| g * sigmoid(x)));
                }
                Op::Exp(a) => accumulate(&mut grads, *a, &g.zip_map(y, |g, e| g * e)),
                Op::Ln(a) => {
                    let x = &self.values[a.0];
                    accumulate(&mut grads, *a, &g.zip_map(x, |g, x| g / x));
                }
                Op::Square(a) => {
                    let x = &self.values[a.0];
                    accumulate(&mut grads, *a, &g.zip_map(x, |g, x| 2.0 * g * x));
                }
                Op::Scale(a, s) => accumulate(&mut grads, *a, &g.map(|v| v * s)),
                Op::AddScalar(a) => accumulate(&mut grads, *a, &g),
                Op::Clamp(a, lo, hi) => {
                    let x = &self.values[a.0];
                    let pass = g.zip_map(x, |g, x| if x >= *lo && x <= *hi { g } else { 0.0 });
                    accumulate(&mut grads, *a, &pass);
                }
                Op::GatherRows(a, idx) => {
                    let ga = slot(&mut grads, *a, self.values[a.0].shape());
                    for (k, &r) in idx.iter().enumerate() {
                        for (o, v) in ga.row_mut(r).iter_mut().zip(g.row(k)) {
                            *o += v;
                        }
                    }
                }
                Op::ScatterAddRows(a, idx) => {
                    let ga = slot(&mut grads, *a, self.values[a.0].shape());
                    for (k, &r) in idx.iter().enumerate() {
                        for (o, v) in ga.row_mut(k).iter_mut().zip(g.row(r)) {
                            *o += v;
                        }
                    }
                }
                Op::ConcatCols(parts) => {
                    let mut off = 0;
                    for p in parts {
                        let (rows, cols) = self.values[p.0].shape();
                        let gp = slot(&mut grads, *p, (rows, cols));
                        for r in 0..rows {
                            for (o, v) in gp.row_mut(r).iter_mut().zip(&g.row(r)[off..off + cols]) {
                                *o += v;
                            }
                        }
                        off += cols;
                    }
                }
                Op::ConcatRows(parts) => {
                    let mut off = 0;
                    for p in parts {
                        let shape = self.values[p.0].shape();
                        let n = shape.0 * shape.1;
                        let gp = slot(&mut grads, *p, shape);
                        for (o, v) in gp.data_mut().iter_mut().zip(&g.data()[off..off + n]) {
                            *o += v;
                        }
                        off += n;
                    }
                }
                Op::MeanRows(a) => {
                    let shape = self.values[a.0].shape();
                    let inv = 1.0 / shape.0.max(1) as f64;
                    let ga = slot(&mut grads, *a, shape);
                    for r in 0..shape.0 {
                        for (o, v) in ga.row_mut(r).iter_mut().zip(g.row(0)) {
                            *o += v * inv;
                        }
                    }
                }
                Op::Sum(a) => {
                    let s = g.item();
                    let ga = slot(&mut grads, *a, self.values[a.0].shape());
                    for o in ga.data_mut() {
                        *o += s;
                    }
                }
            }
            grads[i] = Some(g);
        }

        let params = self
            .params
            .iter()
            .filter_map(|(&id, &v)| grads.get(v.0).and_then(|g| g.clone()).map(|g| (id, g)))
            .collect();
        Ok(Grads { nodes: grads, params })
    }
}

fn slot(grads: &mut [Option<Matrix>], v: Var, shape: (usize, usize)) -> &mut Matrix {
    grads[v.0].get_or_insert_with(|| Matrix::zeros(shape.0, shape.1))
}

fn accumulate(grads: &mut [Option<Matrix>], v: Var, g: &Matrix) {
    match &mut grads[v.0] {
        Some(existing) => existing.add_assign(g),
        none => *none = Some(g.clone()),
    }
}

/// Result of [`Tape::backward`].
#[derive(Debug)]
pub struct Grads {
    nodes: Vec<Option<Matrix>>,
    params: HashMap<ParamId, Matrix>,
}

impl Grads {
    /// Gradient with respect to a recorded value; `None` if unreachable.
    pub fn wrt(&self, v: Var) -> Option<&Matrix> {
        self.nodes.get(v.0).and_then(Option::as_ref)
    }

    pub fn param(&self, id: ParamId) -> Option<&Matrix> {
        self.params.get(&id)
    }

    /// `buf[id] += scale · grad(id)` for every reached parameter.
    pub fn accumulate_into(&self, buf: &mut GradBuffer, scale: f64) {
        for (id, g) in &self.params {
            let dst = &mut buf.grads[id.0];
            for (o, v) in dst.data_mut().iter_mut().zip(g.data()) {
                *o += scale * v;
            }
        }
    }
}

/// Summed parameter gradients, one zero-initialized tensor per parameter.
#[derive(Debug, Clone, PartialEq)]
pub struct GradBuffer {
    grads: Vec<Matrix>,
}

impl GradBuffer {
    pub fn zeros_like(store: &ParamStore) -> Self {
        GradBuffer {
            grads: store
                .ids()
                .map(|id| {
                    let (r, c) = store.get(id).shape();
                    Matrix::zeros(r, c)
                })
                .collect(),
        }
    }

    pub fn get(&self, id: ParamId) -> &Matrix {
        &self.grads[id.0]
    }

    pub fn iter(&self) -> impl Iterator<Item = &Matrix> {
        self.grads.iter()
    }

    pub fn global_norm(&self) -> f64 {
        self.grads.iter().map(Matrix::sum_sq).sum::<f64>().sqrt()
    }

    pub fn scale(&mut self, s: f64) {
        for g in &mut self.grads {
            g.scale_assign(s);
        }
    }

    pub fn add(&mut self, other: &GradBuffer) {
        for (a, b) in self.grads.iter_mut().zip(&other.grads) {
            a.add_assign(b);
        }
    }

    pub fn is_finite(&self) -> bool {
        self.grads.iter().all(Matrix::is_finite)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn linear_gradient() {
        let mut store = ParamStore::new(0);
        let w = store.add("w", Matrix::from_vec(3, 1, vec![0.5, -1.0, 2.0])).unwrap();
        let mut t = Tape::new();
        let x = t.leaf(Matrix::from_vec(1, 3, vec![1.0, 2.0, 3.0]));
        let wv = t.param(&store, w);
        let y = t.matmul(x, wv).unwrap();
        let loss = t.sum(y);
        let g = t.backward(loss).unwrap();
        assert_eq!(g.param(w).unwrap().data(), &[1.0, 2.0, 3.0]);
        assert_eq!(g.wrt(x).unwrap().data(), &[0.5, -1.0, 2.0]);
    }

    #[test]
    fn backward_errors() {
        let t = Tape::new();
        assert!(matches!(t.backward(Var(0)), Err(Error::State(_))));
        let mut t = Tape::new();
        let x = t.leaf(Matrix::zeros(2, 2));
        assert!(matches!(t.backward(x), Err(Error::Dimension(_))));
        let y = t.leaf(Matrix::zeros(3, 2));
        assert!(t.add(x, y).is_err());
        assert!(t.matmul(y, y).is_err());
    }

    #[test]
    fn shared_param_gradients_add_up() {
        let mut store = ParamStore::new(0);
        let w = store.add("w", Matrix::scalar(3.0)).unwrap();
        let mut t = Tape::new();
        let a = t.param(&store, w);
        let b = t.param(&store, w);
        assert_eq!(a, b);
        let y = t.mul(a, b).unwrap();
        let g = t.backward(y).unwrap();
        assert_eq!(g.param(w).unwrap().item(), 6.0);
    }
}
