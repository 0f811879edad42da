//! Tape-based reverse-mode differentiation over the small op set the readers
//! and the LSTM language model need.
//!
//! A [`Graph`] borrows a [`ParamStore`] for the duration of one forward pass.
//! Every op appends a node holding its value; [`Graph::backward`] walks the
//! tape in reverse and accumulates parameter gradients into a [`Grads`].

use std::collections::HashMap;

use crate::error::{Error, Result};
use crate::numeric::params::{Grads, ParamId, ParamStore};
use crate::numeric::tensor::{dot, matvec_acc, matvec_t_acc, outer_acc, Real, Tensor};

/// Handle to a node on the tape.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

#[derive(Debug)]
enum Op<T> {
    Input,
    Param(ParamId),
    Embed {
        table: ParamId,
        ids: Vec<usize>,
    },
    /// Σ Mₖ·xₖ (+ b)
    Affine {
        terms: Vec<(Var, Var)>,
        bias: Option<Var>,
    },
    MatTVec(Var, Var),
    MatMul(Var, Var),
    MatMulBT(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Sigmoid(Var),
    Tanh(Var),
    OneMinus(Var),
    Log(Var),
    Scale(Var, T),
    Concat(Vec<Var>),
    ConcatCols(Var, Var),
    Stack(Vec<Var>),
    Row(Var, usize),
    Softmax {
        x: Var,
        mask: Option<Vec<bool>>,
    },
    SoftmaxRows(Var),
    GroupSum {
        x: Var,
        groups: Vec<Vec<usize>>,
    },
    Pick(Var, usize),
    Sum(Var),
    Dot(Var, Var),
    NllSoftmax {
        logits: Var,
        target: usize,
    },
}

struct Node<T> {
    op: Op<T>,
    value: Option<Tensor<T>>,
}

pub struct Graph<'p, T: Real> {
    params: &'p ParamStore<T>,
    nodes: Vec<Node<T>>,
    param_nodes: HashMap<ParamId, Var>,
}

fn shape_err<T>(msg: String) -> Result<T> {
    Err(Error::Shape(msg))
}

fn sigmoid<T: Real>(x: T) -> T {
    if x >= T::zero() {
        T::one() / (T::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (T::one() + e)
    }
}

/// Stable softmax over the unmasked entries; masked entries get 0.
pub(crate) fn softmax_slice<T: Real>(x: &[T], mask: Option<&[bool]>) -> Result<Vec<T>> {
    let live = |i: usize| mask.is_none_or(|m| m[i]);
    let mut max = T::neg_infinity();
    for (i, &v) in x.iter().enumerate() {
        if live(i) && v > max {
            max = v;
        }
    }
    if max == T::neg_infinity() {
        return Err(Error::AllMasked);
    }
    let mut out = vec![T::zero(); x.len()];
    let mut total = T::zero();
    for (i, &v) in x.iter().enumerate() {
        if live(i) {
            let e = (v - max).exp();
            out[i] = e;
            total = total + e;
        }
    }
    for o in &mut out {
        *o = *o / total;
    }
    Ok(out)
}

impl<'p, T: Real> Graph<'p, T> {
    pub fn new(params: &'p ParamStore<T>) -> Self {
        Graph {
            params,
            nodes: Vec::with_capacity(1024),
            param_nodes: HashMap::new(),
        }
    }

    pub fn params(&self) -> &'p ParamStore<T> {
        self.params
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, op: Op<T>, value: Tensor<T>) -> Var {
        self.nodes.push(Node { op, value: Some(value) });
        Var(self.nodes.len() - 1)
    }

    pub fn value(&self, v: Var) -> &Tensor<T> {
        let node = &self.nodes[v.0];
        match (&node.value, &node.op) {
            (Some(t), _) => t,
            (None, Op::Param(p)) => self.params.get(*p),
            _ => unreachable!("only parameter nodes are stored by reference"),
        }
    }

    pub fn input(&mut self, t: Tensor<T>) -> Var {
        self.push(Op::Input, t)
    }

    pub fn param(&mut self, id: ParamId) -> Var {
        if let Some(&v) = self.param_nodes.get(&id) {
            return v;
        }
        self.nodes.push(Node {
            op: Op::Param(id),
            value: None,
        });
        let v = Var(self.nodes.len() - 1);
        self.param_nodes.insert(id, v);
        v
    }

    /// Rows of an embedding table, one per id: `[ids.len() × dim]`.
    pub fn embed(&mut self, table: ParamId, ids: &[usize]) -> Result<Var> {
        let t = self.params.get(table);
        let (rows, cols) = (t.rows(), t.cols());
        let mut data = Vec::with_capacity(ids.len() * cols);
        for &id in ids {
            if id >= rows {
                return Err(Error::IdOutOfRange { id, rows });
            }
            data.extend_from_slice(t.row(id));
        }
        let value = Tensor::matrix(ids.len(), cols, data)?;
        Ok(self.push(
            Op::Embed {
                table,
                ids: ids.to_vec(),
            },
            value,
        ))
    }

    /// `Σ Mₖ·xₖ + b` for matrices `Mₖ` and vectors `xₖ`.
    pub fn affine(&mut self, terms: &[(Var, Var)], bias: Option<Var>) -> Result<Var> {
        let rows = match (terms.first(), bias) {
            (Some((m, _)), _) => self.value(*m).rows(),
            (None, Some(b)) => self.value(b).len(),
            (None, None) => return shape_err("affine with no terms".into()),
        };
        let mut out = match bias {
            Some(b) => {
                let bv = self.value(b);
                if bv.len() != rows {
                    return shape_err(format!("bias length {} != {rows}", bv.len()));
                }
                bv.data().to_vec()
            }
            None => vec![T::zero(); rows],
        };
        for &(m, x) in terms {
            let (mv, xv) = (self.value(m), self.value(x));
            if mv.shape().len() != 2 || mv.rows() != rows || mv.cols() != xv.len() {
                return shape_err(format!("affine term {:?} · {:?} into {rows}", mv.shape(), xv.shape()));
            }
            matvec_acc(mv.data(), xv.data(), &mut out);
        }
        Ok(self.push(
            Op::Affine {
                terms: terms.to_vec(),
                bias,
            },
            Tensor::vector(out),
        ))
    }

    /// Matrix `[r×c]` times vector `[c]`.
    pub fn matvec(&mut self, m: Var, x: Var) -> Result<Var> {
        self.affine(&[(m, x)], None)
    }

    /// Transposed matrix `[r×c]ᵀ` times vector `[r]`, giving `[c]`.
    pub fn mat_t_vec(&mut self, m: Var, y: Var) -> Result<Var> {
        let (mv, yv) = (self.value(m), self.value(y));
        if mv.shape().len() != 2 || mv.rows() != yv.len() {
            return shape_err(format!("mat_t_vec {:?}ᵀ · {:?}", mv.shape(), yv.shape()));
        }
        let mut out = vec![T::zero(); mv.cols()];
        matvec_t_acc(mv.data(), yv.data(), &mut out);
        Ok(self.push(Op::MatTVec(m, y), Tensor::vector(out)))
    }

    /// `[n×k] · [k×m]`.
    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (av, bv) = (self.value(a), self.value(b));
        let (n, k, m) = (av.rows(), av.cols(), bv.cols());
        if bv.rows() != k || bv.shape().len() != 2 || av.shape().len() != 2 {
            return shape_err(format!("matmul {:?} · {:?}", av.shape(), bv.shape()));
        }
        let mut out = vec![T::zero(); n * m];
        for i in 0..n {
            let orow = &mut out[i * m..(i + 1) * m];
            for p in 0..k {
                let a_ip = av.data()[i * k + p];
                if a_ip == T::zero() {
                    continue;
                }
                for (o, &b_pj) in orow.iter_mut().zip(bv.row(p)) {
                    *o = *o + a_ip * b_pj;
                }
            }
        }
        Ok(self.push(Op::MatMul(a, b), Tensor::matrix(n, m, out)?))
    }

    /// `[n×k] · [m×k]ᵀ`, giving `[n×m]`.
    pub fn matmul_bt(&mut self, a: Var, b: Var) -> Result<Var> {
        let (av, bv) = (self.value(a), self.value(b));
        let (n, k, m) = (av.rows(), av.cols(), bv.rows());
        if bv.cols() != k || bv.shape().len() != 2 || av.shape().len() != 2 {
            return shape_err(format!("matmul_bt {:?} · {:?}ᵀ", av.shape(), bv.shape()));
        }
        let mut out = Vec::with_capacity(n * m);
        for i in 0..n {
            for j in 0..m {
                out.push(dot(av.row(i), bv.row(j)));
            }
        }
        Ok(self.push(Op::MatMulBT(a, b), Tensor::matrix(n, m, out)?))
    }

    fn same_shape(&self, a: Var, b: Var, what: &str) -> Result<()> {
        let (x, y) = (self.value(a).shape(), self.value(b).shape());
        if x != y {
            return shape_err(format!("{what}: {x:?} vs {y:?}"));
        }
        Ok(())
    }

    fn zip_with(&mut self, a: Var, b: Var, op: Op<T>, f: impl Fn(T, T) -> T) -> Result<Var> {
        let (av, bv) = (self.value(a), self.value(b));
        let data = av.data().iter().zip(bv.data()).map(|(&x, &y)| f(x, y)).collect();
        let t = Tensor::new(av.shape().to_vec(), data)?;
        Ok(self.push(op, t))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape(a, b, "add")?;
        self.zip_with(a, b, Op::Add(a, b), |x, y| x + y)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape(a, b, "sub")?;
        self.zip_with(a, b, Op::Sub(a, b), |x, y| x - y)
    }

    /// Element-wise product.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape(a, b, "mul")?;
        self.zip_with(a, b, Op::Mul(a, b), |x, y| x * y)
    }

    fn map(&mut self, a: Var, op: Op<T>, f: impl Fn(T) -> T) -> Var {
        let av = self.value(a);
        let t = Tensor::new(av.shape().to_vec(), av.data().iter().map(|&x| f(x)).collect()).expect("same shape");
        self.push(op, t)
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        self.map(a, Op::Sigmoid(a), sigmoid)
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        self.map(a, Op::Tanh(a), |x| x.tanh())
    }

    pub fn one_minus(&mut self, a: Var) -> Var {
        self.map(a, Op::OneMinus(a), |x| T::one() - x)
    }

    pub fn log(&mut self, a: Var) -> Var {
        self.map(a, Op::Log(a), |x| x.ln())
    }

    pub fn scale(&mut self, a: Var, c: T) -> Var {
        self.map(a, Op::Scale(a, c), |x| x * c)
    }

    pub fn neg(&mut self, a: Var) -> Var {
        self.scale(a, -T::one())
    }

    /// Concatenate vectors end to end.
    pub fn concat(&mut self, parts: &[Var]) -> Var {
        let mut data = Vec::new();
        for &p in parts {
            data.extend_from_slice(self.value(p).data());
        }
        self.push(Op::Concat(parts.to_vec()), Tensor::vector(data))
    }

    /// Concatenate two matrices with equal row counts side by side.
    pub fn concat_cols(&mut self, a: Var, b: Var) -> Result<Var> {
        let (av, bv) = (self.value(a), self.value(b));
        if av.rows() != bv.rows() {
            return shape_err(format!("concat_cols {:?} | {:?}", av.shape(), bv.shape()));
        }
        let (n, p, q) = (av.rows(), av.cols(), bv.cols());
        let mut data = Vec::with_capacity(n * (p + q));
        for i in 0..n {
            data.extend_from_slice(av.row(i));
            data.extend_from_slice(bv.row(i));
        }
        let t = Tensor::matrix(n, p + q, data)?;
        Ok(self.push(Op::ConcatCols(a, b), t))
    }

    /// Stack equal-length vectors as matrix rows.
    pub fn stack(&mut self, rows: &[Var]) -> Result<Var> {
        let cols = rows.first().map_or(0, |&r| self.value(r).len());
        let mut data = Vec::with_capacity(rows.len() * cols);
        for &r in rows {
            let rv = self.value(r);
            if rv.len() != cols {
                return shape_err(format!("stack row of length {} != {cols}", rv.len()));
            }
            data.extend_from_slice(rv.data());
        }
        let t = Tensor::matrix(rows.len(), cols, data)?;
        Ok(self.push(Op::Stack(rows.to_vec()), t))
    }

    pub fn row(&mut self, m: Var, i: usize) -> Result<Var> {
        let mv = self.value(m);
        if i >= mv.rows() {
            return shape_err(format!("row {i} of {:?}", mv.shape()));
        }
        let t = Tensor::vector(mv.row(i).to_vec());
        Ok(self.push(Op::Row(m, i), t))
    }

    /// Softmax over a vector; `false` mask entries are excluded and get 0.
    pub fn softmax(&mut self, x: Var, mask: Option<&[bool]>) -> Result<Var> {
        let xv = self.value(x);
        if let Some(m) = mask {
            if m.len() != xv.len() {
                return shape_err(format!("mask length {} != {}", m.len(), xv.len()));
            }
        }
        if xv.is_empty() {
            return Err(Error::AllMasked);
        }
        let out = softmax_slice(xv.data(), mask)?;
        Ok(self.push(
            Op::Softmax {
                x,
                mask: mask.map(<[bool]>::to_vec),
            },
            Tensor::vector(out),
        ))
    }

    /// Row-wise softmax of a matrix.
    pub fn softmax_rows(&mut self, x: Var) -> Result<Var> {
        let xv = self.value(x);
        let (n, m) = (xv.rows(), xv.cols());
        let mut data = Vec::with_capacity(n * m);
        for i in 0..n {
            data.extend(softmax_slice(xv.row(i), None)?);
        }
        let t = Tensor::matrix(n, m, data)?;
        Ok(self.push(Op::SoftmaxRows(x), t))
    }

    /// `out[k] = Σ_{i ∈ groups[k]} x[i]`.
    pub fn group_sum(&mut self, x: Var, groups: &[Vec<usize>]) -> Result<Var> {
        let xv = self.value(x);
        let mut out = Vec::with_capacity(groups.len());
        for g in groups {
            let mut s = T::zero();
            for &i in g {
                if i >= xv.len() {
                    return shape_err(format!("group index {i} >= {}", xv.len()));
                }
                s = s + xv.data()[i];
            }
            out.push(s);
        }
        Ok(self.push(
            Op::GroupSum {
                x,
                groups: groups.to_vec(),
            },
            Tensor::vector(out),
        ))
    }

    pub fn pick(&mut self, x: Var, i: usize) -> Result<Var> {
        let xv = self.value(x);
        if i >= xv.len() {
            return shape_err(format!("pick {i} of {}", xv.len()));
        }
        let t = Tensor::scalar(xv.data()[i]);
        Ok(self.push(Op::Pick(x, i), t))
    }

    pub fn sum(&mut self, x: Var) -> Var {
        let s = self.value(x).data().iter().copied().sum();
        self.push(Op::Sum(x), Tensor::scalar(s))
    }

    pub fn dot(&mut self, a: Var, b: Var) -> Result<Var> {
        let (av, bv) = (self.value(a), self.value(b));
        if av.len() != bv.len() {
            return shape_err(format!("dot {} vs {}", av.len(), bv.len()));
        }
        let s = dot(av.data(), bv.data());
        Ok(self.push(Op::Dot(a, b), Tensor::scalar(s)))
    }

    /// `−log softmax(logits)[target]`.
    pub fn nll_softmax(&mut self, logits: Var, target: usize) -> Result<Var> {
        let lv = self.value(logits);
        if target >= lv.len() {
            return shape_err(format!("target {target} of {} logits", lv.len()));
        }
        let max = lv.data().iter().copied().fold(T::neg_infinity(), T::max);
        let lse = lv.data().iter().map(|&x| (x - max).exp()).sum::<T>().ln() + max;
        let t = Tensor::scalar(lse - lv.data()[target]);
        Ok(self.push(Op::NllSoftmax { logits, target }, t))
    }

    /// Reverse sweep from a scalar node.
    pub fn backward(&self, loss: Var) -> Result<Grads<T>> {
        let lv = self.value(loss);
        if lv.len() != 1 {
            return shape_err(format!("backward from non-scalar {:?}", lv.shape()));
        }
        if !lv.data()[0].is_finite() {
            return Err(Error::NonFinite(format!("loss {}", lv.data()[0])));
        }
        let mut out = Grads::for_store(self.params);
        let mut grads: Vec<Option<Vec<T>>> = vec![None; loss.0 + 1];
        grads[loss.0] = Some(vec![T::one()]);

        let graph = self;
        for i in (0..=loss.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            let node = &self.nodes[i];
            macro_rules! acc {
                ($v:expr) => {{
                    let v: Var = $v;
                    let len = graph.value(v).len();
                    grads[v.0].get_or_insert_with(|| vec![T::zero(); len])
                }};
            }
            match &node.op {
                Op::Input => {}
                Op::Param(p) => out.add_dense(*p, &g),
                Op::Embed { table, ids } => {
                    let cols = self.params.get(*table).cols();
                    for (r, &id) in ids.iter().enumerate() {
                        out.add_row(*table, id, &g[r * cols..(r + 1) * cols]);
                    }
                }
                Op::Affine { terms, bias } => {
                    for &(m, x) in terms {
                        let xv = self.value(x).data();
                        outer_acc(&g, xv, acc!(m));
                        let mv = self.value(m).data();
                        matvec_t_acc(mv, &g, acc!(x));
                    }
                    if let Some(b) = bias {
                        add_into(acc!(*b), &g);
                    }
                }
                Op::MatTVec(m, y) => {
                    let yv = self.value(*y).data();
                    outer_acc(yv, &g, acc!(*m));
                    let mv = self.value(*m).data();
                    matvec_acc(mv, &g, acc!(*y));
                }
                Op::MatMul(a, b) => {
                    let (av, bv) = (self.value(*a), self.value(*b));
                    let (n, k, m) = (av.rows(), av.cols(), bv.cols());
                    let da = acc!(*a);
                    for i in 0..n {
                        for p in 0..k {
                            da[i * k + p] = da[i * k + p] + dot(&g[i * m..(i + 1) * m], bv.row(p));
                        }
                    }
                    let db = acc!(*b);
                    for i in 0..n {
                        for p in 0..k {
                            let a_ip = av.data()[i * k + p];
                            for j in 0..m {
                                db[p * m + j] = db[p * m + j] + a_ip * g[i * m + j];
                            }
                        }
                    }
                }
                Op::MatMulBT(a, b) => {
                    let (av, bv) = (self.value(*a), self.value(*b));
                    let (n, k, m) = (av.rows(), av.cols(), bv.rows());
                    let da = acc!(*a);
                    for i in 0..n {
                        for j in 0..m {
                            let gij = g[i * m + j];
                            for p in 0..k {
                                da[i * k + p] = da[i * k + p] + gij * bv.data()[j * k + p];
                            }
                        }
                    }
                    let db = acc!(*b);
                    for i in 0..n {
                        for j in 0..m {
                            let gij = g[i * m + j];
                            for p in 0..k {
                                db[j * k + p] = db[j * k + p] + gij * av.data()[i * k + p];
                            }
                        }
                    }
                }
                Op::Add(a, b) => {
                    add_into(acc!(*a), &g);
                    add_into(acc!(*b), &g);
                }
                Op::Sub(a, b) => {
                    add_into(acc!(*a), &g);
                    let db = acc!(*b);
                    for (d, &x) in db.iter_mut().zip(&g) {
                        *d = *d - x;
                    }
                }
                Op::Mul(a, b) => {
                    let bv = self.value(*b).data();
                    let da = acc!(*a);
                    for ((d, &x), &y) in da.iter_mut().zip(&g).zip(bv) {
                        *d = *d + x * y;
                    }
                    let av = self.value(*a).data();
                    let db = acc!(*b);
                    for ((d, &x), &y) in db.iter_mut().zip(&g).zip(av) {
                        *d = *d + x * y;
                    }
                }
                Op::Sigmoid(a) => {
                    let y = node.value.as_ref().expect("stored").data();
                    let da = acc!(*a);
                    for ((d, &x), &s) in da.iter_mut().zip(&g).zip(y) {
                        *d = *d + x * s * (T::one() - s);
                    }
                }
                Op::Tanh(a) => {
                    let y = node.value.as_ref().expect("stored").data();
                    let da = acc!(*a);
                    for ((d, &x), &t) in da.iter_mut().zip(&g).zip(y) {
                        *d = *d + x * (T::one() - t * t);
                    }
                }
                Op::OneMinus(a) => {
                    let da = acc!(*a);
                    for (d, &x) in da.iter_mut().zip(&g) {
                        *d = *d - x;
                    }
                }
                Op::Log(a) => {
                    let av = self.value(*a).data();
                    let da = acc!(*a);
                    for ((d, &x), &v) in da.iter_mut().zip(&g).zip(av) {
                        *d = *d + x / v;
                    }
                }
                Op::Scale(a, c) => {
                    let da = acc!(*a);
                    for (d, &x) in da.iter_mut().zip(&g) {
                        *d = *d + x * *c;
                    }
                }
                Op::Concat(parts) => {
                    let mut off = 0;
                    for &p in parts {
                        let n = self.value(p).len();
                        add_into(acc!(p), &g[off..off + n]);
                        off += n;
                    }
                }
                Op::ConcatCols(a, b) => {
                    let (p, q) = (self.value(*a).cols(), self.value(*b).cols());
                    let n = self.value(*a).rows();
                    let da = acc!(*a);
                    for r in 0..n {
                        add_into(&mut da[r * p..(r + 1) * p], &g[r * (p + q)..r * (p + q) + p]);
                    }
                    let db = acc!(*b);
                    for r in 0..n {
                        add_into(&mut db[r * q..(r + 1) * q], &g[r * (p + q) + p..(r + 1) * (p + q)]);
                    }
                }
                Op::Stack(rows) => {
                    let cols = g.len() / rows.len().max(1);
                    for (r, &v) in rows.iter().enumerate() {
                        add_into(acc!(v), &g[r * cols..(r + 1) * cols]);
                    }
                }
                Op::Row(m, r) => {
                    let cols = g.len();
                    let dm = acc!(*m);
                    add_into(&mut dm[r * cols..(r + 1) * cols], &g);
                }
                Op::Softmax { x, mask } => {
                    let y = node.value.as_ref().expect("stored").data();
                    let inner: T = g.iter().zip(y).map(|(&a, &b)| a * b).sum();
                    let dx = acc!(*x);
                    for (j, d) in dx.iter_mut().enumerate() {
                        if mask.as_ref().is_none_or(|m| m[j]) {
                            *d = *d + y[j] * (g[j] - inner);
                        }
                    }
                }
                Op::SoftmaxRows(x) => {
                    let yv = node.value.as_ref().expect("stored");
                    let (n, m) = (yv.rows(), yv.cols());
                    let dx = acc!(*x);
                    for r in 0..n {
                        let y = yv.row(r);
                        let gr = &g[r * m..(r + 1) * m];
                        let inner: T = gr.iter().zip(y).map(|(&a, &b)| a * b).sum();
                        for j in 0..m {
                            dx[r * m + j] = dx[r * m + j] + y[j] * (gr[j] - inner);
                        }
                    }
                }
                Op::GroupSum { x, groups } => {
                    let dx = acc!(*x);
                    for (k, grp) in groups.iter().enumerate() {
                        for &i in grp {
                            dx[i] = dx[i] + g[k];
                        }
                    }
                }
                Op::Pick(x, idx) => {
                    let dx = acc!(*x);
                    dx[*idx] = dx[*idx] + g[0];
                }
                Op::Sum(x) => {
                    let dx = acc!(*x);
                    for d in dx.iter_mut() {
                        *d = *d + g[0];
                    }
                }
                Op::Dot(a, b) => {
                    let bv = self.value(*b).data();
                    let da = acc!(*a);
                    for (d, &y) in da.iter_mut().zip(bv) {
                        *d = *d + g[0] * y;
                    }
                    let av = self.value(*a).data();
                    let db = acc!(*b);
                    for (d, &x) in db.iter_mut().zip(av) {
                        *d = *d + g[0] * x;
                    }
                }
                Op::NllSoftmax { logits, target } => {
                    let p = softmax_slice(self.value(*logits).data(), None)?;
                    let dl = acc!(*logits);
                    for (j, (d, pj)) in dl.iter_mut().zip(p).enumerate() {
                        let one = if j == *target { T::one() } else { T::zero() };
                        *d = *d + g[0] * (pj - one);
                    }
                }
            }
        }
        Ok(out)
    }
}

fn add_into<T: Real>(dst: &mut [T], src: &[T]) {
    for (d, &s) in dst.iter_mut().zip(src) {
        *d = *d + s;
    }
}
