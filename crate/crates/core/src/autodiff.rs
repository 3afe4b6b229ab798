//! Reverse-mode differentiation on a tape of dense row-major 2-D tensors.
//!
//! Values are computed eagerly as ops are recorded. `backward` walks the tape
//! once in reverse. Shape errors are programming errors and panic; domain
//! errors (log of a non-positive value, sqrt of a negative one) are returned.

use std::sync::Arc;

use crate::equivariant::EquivariantBasis;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl Tensor {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Self {
        assert_eq!(rows * cols, data.len(), "tensor data length does not match shape");
        Tensor { rows, cols, data }
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Tensor { rows, cols, data: vec![0.0; rows * cols] }
    }

    pub fn scalar(v: f64) -> Self {
        Tensor::new(1, 1, vec![v])
    }

    pub fn row(v: Vec<f64>) -> Self {
        Tensor::new(1, v.len(), v)
    }

    pub fn col(v: Vec<f64>) -> Self {
        Tensor::new(v.len(), 1, v)
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    pub fn row_slice(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn item(&self) -> f64 {
        assert_eq!(self.data.len(), 1, "item() on a non-scalar tensor");
        self.data[0]
    }

    fn add_assign(&mut self, other: &Tensor) {
        assert_eq!(self.shape(), other.shape());
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
    }
}

/// C = alpha·A·B + beta·C with arbitrary strides.
#[allow(clippy::too_many_arguments)]
pub(crate) fn gemm(
    m: usize,
    k: usize,
    n: usize,
    alpha: f64,
    a: &[f64],
    rsa: isize,
    csa: isize,
    b: &[f64],
    rsb: isize,
    csb: isize,
    beta: f64,
    c: &mut [f64],
    rsc: isize,
    csc: isize,
) {
    if m == 0 || n == 0 {
        return;
    }
    if k == 0 {
        for v in c.iter_mut() {
            *v *= beta;
        }
        return;
    }
    let max_a = (m as isize - 1) * rsa + (k as isize - 1) * csa;
    let max_b = (k as isize - 1) * rsb + (n as isize - 1) * csb;
    let max_c = (m as isize - 1) * rsc + (n as isize - 1) * csc;
    assert!(max_a < a.len() as isize && max_b < b.len() as isize && max_c < c.len() as isize);
    // SAFETY: the asserts above bound every index touched by the kernel,
    // strides are non-negative and the three buffers do not alias.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            alpha,
            a.as_ptr(),
            rsa,
            csa,
            b.as_ptr(),
            rsb,
            csb,
            beta,
            c.as_mut_ptr(),
            rsc,
            csc,
        );
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(pub usize);

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    MatMul(Var, Var),
    /// x · W[:, :in]ᵀ + W[:, in]
    LinearBias(Var, Var),
    EquivWeight(Var, Arc<EquivariantBasis>),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    AddScalar(Var),
    Relu(Var),
    Tanh(Var),
    Exp(Var),
    Log(Var),
    Square(Var),
    Sqrt(Var),
    Sum(Var),
    Mean(Var),
    SumAxis1(Var),
    SoftmaxRows(Var),
    LogSoftmaxRows(Var),
    Min(Var, Var),
    Clip(Var, f64, f64),
    GatherCols(Var, Vec<usize>),
    GatherRows(Var, Vec<usize>),
    ScatterAddRows(Var, Vec<usize>),
    ConcatCols(Vec<Var>),
    SliceCols(Var, usize),
    MulCol(Var, Var),
}

#[derive(Debug, Clone)]
struct Node {
    value: Tensor,
    op: Op,
    needs_grad: bool,
}

#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

pub struct Gradients {
    grads: Vec<Option<Tensor>>,
}

impl Gradients {
    pub fn get(&self, v: Var) -> Option<&Tensor> {
        self.grads[v.0].as_ref()
    }

    /// Gradient or zeros of the right shape.
    pub fn wrt(&self, v: Var, shape: (usize, usize)) -> Tensor {
        self.grads[v.0].clone().unwrap_or_else(|| Tensor::zeros(shape.0, shape.1))
    }
}

impl Tape {
    pub fn new() -> Self {
        Tape { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Tensor, op: Op, parents: &[Var]) -> Var {
        let needs_grad = parents.iter().any(|p| self.nodes[p.0].needs_grad);
        self.nodes.push(Node { value, op, needs_grad });
        Var(self.nodes.len() - 1)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> (usize, usize) {
        self.nodes[v.0].value.shape()
    }

    pub fn constant(&mut self, t: Tensor) -> Var {
        self.nodes.push(Node { value: t, op: Op::Leaf, needs_grad: false });
        Var(self.nodes.len() - 1)
    }

    pub fn param(&mut self, t: Tensor) -> Var {
        self.nodes.push(Node { value: t, op: Op::Leaf, needs_grad: true });
        Var(self.nodes.len() - 1)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        let (m, k) = self.shape(a);
        let (k2, n) = self.shape(b);
        assert_eq!(k, k2, "matmul shape mismatch {m}x{k} · {k2}x{n}");
        let mut out = vec![0.0; m * n];
        gemm(
            m,
            k,
            n,
            1.0,
            &self.value(a).data,
            k as isize,
            1,
            &self.value(b).data,
            n as isize,
            1,
            0.0,
            &mut out,
            n as isize,
            1,
        );
        self.push(Tensor::new(m, n, out), Op::MatMul(a, b), &[a, b])
    }

    /// Affine map with the bias stored as the last column of `w`
    /// (`w` is `out × (in + 1)`).
    pub fn linear(&mut self, x: Var, w: Var) -> Var {
        let (b, din) = self.shape(x);
        let (dout, win) = self.shape(w);
        assert_eq!(win, din + 1, "linear: weight has {win} columns for input width {din}");
        let wv = &self.value(w).data;
        let mut out = Vec::with_capacity(b * dout);
        for _ in 0..b {
            out.extend((0..dout).map(|o| wv[o * win + din]));
        }
        gemm(
            b,
            din,
            dout,
            1.0,
            &self.value(x).data,
            din as isize,
            1,
            wv,
            1,
            win as isize,
            1.0,
            &mut out,
            dout as isize,
            1,
        );
        self.push(Tensor::new(b, dout, out), Op::LinearBias(x, w), &[x, w])
    }

    /// W = Σ c_i V_i, with `c` a `1 × rank` row.
    pub fn equiv_weight(&mut self, c: Var, basis: Arc<EquivariantBasis>) -> Var {
        assert_eq!(self.value(c).len(), basis.rank(), "coefficient count must equal basis rank");
        let w = basis.compose(&self.value(c).data);
        let t = Tensor::new(basis.out_dim(), basis.in_dim(), w);
        self.push(t, Op::EquivWeight(c, basis), &[c])
    }

    fn binary(&mut self, a: Var, b: Var, f: impl Fn(f64, f64) -> f64, op: Op) -> Var {
        let (va, vb) = (self.value(a), self.value(b));
        assert_eq!(va.shape(), vb.shape(), "elementwise shape mismatch {:?} vs {:?}", va.shape(), vb.shape());
        let data = va.data.iter().zip(&vb.data).map(|(&x, &y)| f(x, y)).collect();
        let t = Tensor::new(va.rows, va.cols, data);
        self.push(t, op, &[a, b])
    }

    fn unary(&mut self, a: Var, f: impl Fn(f64) -> f64, op: Op) -> Var {
        let va = self.value(a);
        let t = Tensor::new(va.rows, va.cols, va.data.iter().map(|&x| f(x)).collect());
        self.push(t, op, &[a])
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        self.binary(a, b, |x, y| x + y, Op::Add(a, b))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Var {
        self.binary(a, b, |x, y| x - y, Op::Sub(a, b))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        self.binary(a, b, |x, y| x * y, Op::Mul(a, b))
    }

    /// Elementwise minimum; ties send the gradient to `a`.
    pub fn min(&mut self, a: Var, b: Var) -> Var {
        self.binary(a, b, f64::min, Op::Min(a, b))
    }

    /// Multiply every column of `a` by the column vector `c` (rows × 1).
    pub fn mul_col(&mut self, a: Var, c: Var) -> Var {
        let (va, vc) = (self.value(a), self.value(c));
        assert_eq!(vc.shape(), (va.rows, 1), "mul_col needs a column of matching height");
        let cols = va.cols;
        let data = va.data.iter().enumerate().map(|(i, &x)| x * vc.data[i / cols]).collect();
        let t = Tensor::new(va.rows, va.cols, data);
        self.push(t, Op::MulCol(a, c), &[a, c])
    }

    pub fn scale(&mut self, a: Var, s: f64) -> Var {
        self.unary(a, |x| s * x, Op::Scale(a, s))
    }

    pub fn add_scalar(&mut self, a: Var, s: f64) -> Var {
        self.unary(a, |x| x + s, Op::AddScalar(a))
    }

    pub fn relu(&mut self, a: Var) -> Var {
        self.unary(a, |x| x.max(0.0), Op::Relu(a))
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        self.unary(a, f64::tanh, Op::Tanh(a))
    }

    pub fn exp(&mut self, a: Var) -> Var {
        self.unary(a, f64::exp, Op::Exp(a))
    }

    pub fn log(&mut self, a: Var) -> Result<Var> {
        if let Some(bad) = self.value(a).data.iter().find(|&&x| !(x > 0.0)) {
            return Err(Error::Domain { op: "log", detail: format!("argument {bad}") });
        }
        Ok(self.unary(a, f64::ln, Op::Log(a)))
    }

    pub fn sqrt(&mut self, a: Var) -> Result<Var> {
        if let Some(bad) = self.value(a).data.iter().find(|&&x| !(x >= 0.0)) {
            return Err(Error::Domain { op: "sqrt", detail: format!("argument {bad}") });
        }
        Ok(self.unary(a, f64::sqrt, Op::Sqrt(a)))
    }

    pub fn square(&mut self, a: Var) -> Var {
        self.unary(a, |x| x * x, Op::Square(a))
    }

    pub fn clip(&mut self, a: Var, lo: f64, hi: f64) -> Var {
        assert!(lo <= hi, "clip bounds reversed");
        self.unary(a, |x| x.clamp(lo, hi), Op::Clip(a, lo, hi))
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let s = self.value(a).data.iter().sum();
        self.push(Tensor::scalar(s), Op::Sum(a), &[a])
    }

    pub fn mean(&mut self, a: Var) -> Var {
        let v = self.value(a);
        assert!(!v.is_empty(), "mean of an empty tensor");
        let s = v.data.iter().sum::<f64>() / v.len() as f64;
        self.push(Tensor::scalar(s), Op::Mean(a), &[a])
    }

    /// Per-row sum, giving a `rows × 1` column.
    pub fn sum_axis1(&mut self, a: Var) -> Var {
        let v = self.value(a);
        let data = (0..v.rows).map(|r| v.row_slice(r).iter().sum()).collect();
        let t = Tensor::new(v.rows, 1, data);
        self.push(t, Op::SumAxis1(a), &[a])
    }

    pub fn softmax_rows(&mut self, a: Var) -> Var {
        let v = self.value(a);
        let mut data = Vec::with_capacity(v.len());
        for r in 0..v.rows {
            let row = v.row_slice(r);
            let m = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let e: Vec<f64> = row.iter().map(|x| (x - m).exp()).collect();
            let z: f64 = e.iter().sum();
            data.extend(e.iter().map(|x| x / z));
        }
        let t = Tensor::new(v.rows, v.cols, data);
        self.push(t, Op::SoftmaxRows(a), &[a])
    }

    pub fn log_softmax_rows(&mut self, a: Var) -> Var {
        let v = self.value(a);
        let mut data = Vec::with_capacity(v.len());
        for r in 0..v.rows {
            let row = v.row_slice(r);
            let m = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let lz = m + row.iter().map(|x| (x - m).exp()).sum::<f64>().ln();
            data.extend(row.iter().map(|x| x - lz));
        }
        let t = Tensor::new(v.rows, v.cols, data);
        self.push(t, Op::LogSoftmaxRows(a), &[a])
    }

    /// `out[i] = a[i, idx[i]]` as a column.
    pub fn gather_cols(&mut self, a: Var, idx: Vec<usize>) -> Var {
        let v = self.value(a);
        assert_eq!(idx.len(), v.rows, "one index per row");
        let data = idx
            .iter()
            .enumerate()
            .map(|(r, &c)| {
                assert!(c < v.cols, "gather index {c} out of range");
                v.get(r, c)
            })
            .collect();
        let t = Tensor::new(v.rows, 1, data);
        self.push(t, Op::GatherCols(a, idx), &[a])
    }

    pub fn gather_rows(&mut self, a: Var, idx: Vec<usize>) -> Var {
        let v = self.value(a);
        let mut data = Vec::with_capacity(idx.len() * v.cols);
        for &r in &idx {
            data.extend_from_slice(v.row_slice(r));
        }
        let t = Tensor::new(idx.len(), v.cols, data);
        self.push(t, Op::GatherRows(a, idx), &[a])
    }

    /// `out[idx[i]] += a[i]` into `n` rows.
    pub fn scatter_add_rows(&mut self, a: Var, idx: Vec<usize>, n: usize) -> Var {
        let v = self.value(a);
        assert_eq!(idx.len(), v.rows, "one target per row");
        let mut out = vec![0.0; n * v.cols];
        for (i, &r) in idx.iter().enumerate() {
            assert!(r < n, "scatter target out of range");
            for (o, x) in out[r * v.cols..(r + 1) * v.cols].iter_mut().zip(v.row_slice(i)) {
                *o += x;
            }
        }
        let t = Tensor::new(n, v.cols, out);
        self.push(t, Op::ScatterAddRows(a, idx), &[a])
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Var {
        assert!(!parts.is_empty());
        let rows = self.value(parts[0]).rows;
        assert!(parts.iter().all(|p| self.value(*p).rows == rows), "concat rows differ");
        let cols: usize = parts.iter().map(|p| self.value(*p).cols).sum();
        let mut data = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for p in parts {
                data.extend_from_slice(self.value(*p).row_slice(r));
            }
        }
        let t = Tensor::new(rows, cols, data);
        self.push(t, Op::ConcatCols(parts.to_vec()), parts)
    }

    pub fn slice_cols(&mut self, a: Var, start: usize, len: usize) -> Var {
        let v = self.value(a);
        assert!(start + len <= v.cols, "slice out of range");
        let mut data = Vec::with_capacity(v.rows * len);
        for r in 0..v.rows {
            data.extend_from_slice(&v.row_slice(r)[start..start + len]);
        }
        let t = Tensor::new(v.rows, len, data);
        self.push(t, Op::SliceCols(a, start), &[a])
    }

    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        if self.value(loss).len() != 1 {
            return Err(Error::Invalid(format!("backward needs a scalar loss, got shape {:?}", self.shape(loss))));
        }
        let mut grads: Vec<Option<Tensor>> = vec![None; self.nodes.len()];
        grads[loss.0] = Some(Tensor::scalar(1.0));
        for i in (0..=loss.0).rev() {
            let node = &self.nodes[i];
            if !node.needs_grad {
                continue;
            }
            let Some(g) = grads[i].take() else { continue };
            self.propagate(i, &g, &mut grads);
            grads[i] = Some(g);
        }
        Ok(Gradients { grads })
    }

    fn acc(&self, grads: &mut [Option<Tensor>], v: Var, g: Tensor) {
        if !self.nodes[v.0].needs_grad {
            return;
        }
        match &mut grads[v.0] {
            Some(t) => t.add_assign(&g),
            slot => *slot = Some(g),
        }
    }

    fn propagate(&self, i: usize, g: &Tensor, grads: &mut [Option<Tensor>]) {
        let node = &self.nodes[i];
        let out = &node.value;
        let map = |t: &Tensor, f: &dyn Fn(usize, f64) -> f64| -> Tensor {
            Tensor::new(t.rows, t.cols, t.data.iter().enumerate().map(|(k, &x)| f(k, x)).collect())
        };
        match &node.op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                let (m, k) = self.shape(*a);
                let n = self.shape(*b).1;
                if self.nodes[a.0].needs_grad {
                    let mut da = vec![0.0; m * k];
                    // dA = G · Bᵀ
                    gemm(m, n, k, 1.0, &g.data, n as isize, 1, &self.value(*b).data, 1, n as isize, 0.0, &mut da, k as isize, 1);
                    self.acc(grads, *a, Tensor::new(m, k, da));
                }
                if self.nodes[b.0].needs_grad {
                    let mut db = vec![0.0; k * n];
                    // dB = Aᵀ · G
                    gemm(k, m, n, 1.0, &self.value(*a).data, 1, k as isize, &g.data, n as isize, 1, 0.0, &mut db, n as isize, 1);
                    self.acc(grads, *b, Tensor::new(k, n, db));
                }
            }
            Op::LinearBias(x, w) => {
                let (b, din) = self.shape(*x);
                let (dout, win) = self.shape(*w);
                if self.nodes[x.0].needs_grad {
                    let mut dx = vec![0.0; b * din];
                    gemm(b, dout, din, 1.0, &g.data, dout as isize, 1, &self.value(*w).data, win as isize, 1, 0.0, &mut dx, din as isize, 1);
                    self.acc(grads, *x, Tensor::new(b, din, dx));
                }
                if self.nodes[w.0].needs_grad {
                    let mut dw = vec![0.0; dout * win];
                    gemm(dout, b, din, 1.0, &g.data, 1, dout as isize, &self.value(*x).data, din as isize, 1, 0.0, &mut dw, win as isize, 1);
                    for r in 0..b {
                        for o in 0..dout {
                            dw[o * win + din] += g.data[r * dout + o];
                        }
                    }
                    self.acc(grads, *w, Tensor::new(dout, win, dw));
                }
            }
            Op::EquivWeight(c, basis) => {
                let mut dc = vec![0.0; basis.rank()];
                basis.project(&g.data, &mut dc);
                let (r, cc) = self.shape(*c);
                self.acc(grads, *c, Tensor::new(r, cc, dc));
            }
            Op::Add(a, b) => {
                self.acc(grads, *a, g.clone());
                self.acc(grads, *b, g.clone());
            }
            Op::Sub(a, b) => {
                self.acc(grads, *a, g.clone());
                self.acc(grads, *b, map(g, &|_, x| -x));
            }
            Op::Mul(a, b) => {
                let (va, vb) = (self.value(*a), self.value(*b));
                self.acc(grads, *a, map(g, &|k, x| x * vb.data[k]));
                self.acc(grads, *b, map(g, &|k, x| x * va.data[k]));
            }
            Op::MulCol(a, c) => {
                let (va, vc) = (self.value(*a), self.value(*c));
                let cols = va.cols;
                self.acc(grads, *a, map(g, &|k, x| x * vc.data[k / cols]));
                let dc = (0..va.rows)
                    .map(|r| (0..cols).map(|j| g.data[r * cols + j] * va.data[r * cols + j]).sum())
                    .collect();
                self.acc(grads, *c, Tensor::new(va.rows, 1, dc));
            }
            Op::Scale(a, s) => self.acc(grads, *a, map(g, &|_, x| s * x)),
            Op::AddScalar(a) => self.acc(grads, *a, g.clone()),
            Op::Relu(a) => {
                let va = self.value(*a);
                self.acc(grads, *a, map(g, &|k, x| if va.data[k] > 0.0 { x } else { 0.0 }));
            }
            Op::Tanh(a) => self.acc(grads, *a, map(g, &|k, x| x * (1.0 - out.data[k] * out.data[k]))),
            Op::Exp(a) => self.acc(grads, *a, map(g, &|k, x| x * out.data[k])),
            Op::Log(a) => {
                let va = self.value(*a);
                self.acc(grads, *a, map(g, &|k, x| x / va.data[k]));
            }
            Op::Square(a) => {
                let va = self.value(*a);
                self.acc(grads, *a, map(g, &|k, x| 2.0 * x * va.data[k]));
            }
            Op::Sqrt(a) => self.acc(
                grads,
                *a,
                map(g, &|k, x| if out.data[k] > 0.0 { 0.5 * x / out.data[k] } else { 0.0 }),
            ),
            Op::Sum(a) => {
                let (r, c) = self.shape(*a);
                self.acc(grads, *a, Tensor::new(r, c, vec![g.data[0]; r * c]));
            }
            Op::Mean(a) => {
                let (r, c) = self.shape(*a);
                self.acc(grads, *a, Tensor::new(r, c, vec![g.data[0] / (r * c) as f64; r * c]));
            }
            Op::SumAxis1(a) => {
                let (r, c) = self.shape(*a);
                let data = (0..r * c).map(|k| g.data[k / c]).collect();
                self.acc(grads, *a, Tensor::new(r, c, data));
            }
            Op::SoftmaxRows(a) => {
                let (r, c) = self.shape(*a);
                let mut d = vec![0.0; r * c];
                for row in 0..r {
                    let p = &out.data[row * c..(row + 1) * c];
                    let gr = &g.data[row * c..(row + 1) * c];
                    let dot: f64 = p.iter().zip(gr).map(|(x, y)| x * y).sum();
                    for j in 0..c {
                        d[row * c + j] = p[j] * (gr[j] - dot);
                    }
                }
                self.acc(grads, *a, Tensor::new(r, c, d));
            }
            Op::LogSoftmaxRows(a) => {
                let (r, c) = self.shape(*a);
                let mut d = vec![0.0; r * c];
                for row in 0..r {
                    let lp = &out.data[row * c..(row + 1) * c];
                    let gr = &g.data[row * c..(row + 1) * c];
                    let gs: f64 = gr.iter().sum();
                    for j in 0..c {
                        d[row * c + j] = gr[j] - lp[j].exp() * gs;
                    }
                }
                self.acc(grads, *a, Tensor::new(r, c, d));
            }
            Op::Min(a, b) => {
                let (va, vb) = (self.value(*a), self.value(*b));
                self.acc(grads, *a, map(g, &|k, x| if va.data[k] <= vb.data[k] { x } else { 0.0 }));
                self.acc(grads, *b, map(g, &|k, x| if va.data[k] <= vb.data[k] { 0.0 } else { x }));
            }
            Op::Clip(a, lo, hi) => {
                let va = self.value(*a);
                self.acc(grads, *a, map(g, &|k, x| if va.data[k] >= *lo && va.data[k] <= *hi { x } else { 0.0 }));
            }
            Op::GatherCols(a, idx) => {
                let (r, c) = self.shape(*a);
                let mut d = vec![0.0; r * c];
                for (row, &col) in idx.iter().enumerate() {
                    d[row * c + col] = g.data[row];
                }
                self.acc(grads, *a, Tensor::new(r, c, d));
            }
            Op::GatherRows(a, idx) => {
                let (r, c) = self.shape(*a);
                let mut d = vec![0.0; r * c];
                for (i, &src) in idx.iter().enumerate() {
                    for j in 0..c {
                        d[src * c + j] += g.data[i * c + j];
                    }
                }
                self.acc(grads, *a, Tensor::new(r, c, d));
            }
            Op::ScatterAddRows(a, idx) => {
                let c = out.cols;
                let mut d = Vec::with_capacity(idx.len() * c);
                for &t in idx {
                    d.extend_from_slice(&g.data[t * c..(t + 1) * c]);
                }
                self.acc(grads, *a, Tensor::new(idx.len(), c, d));
            }
            Op::ConcatCols(parts) => {
                let rows = out.rows;
                let mut off = 0;
                for p in parts {
                    let pc = self.value(*p).cols;
                    let mut d = Vec::with_capacity(rows * pc);
                    for r in 0..rows {
                        d.extend_from_slice(&g.data[r * out.cols + off..r * out.cols + off + pc]);
                    }
                    self.acc(grads, *p, Tensor::new(rows, pc, d));
                    off += pc;
                }
            }
            Op::SliceCols(a, start) => {
                let (r, c) = self.shape(*a);
                let len = out.cols;
                let mut d = vec![0.0; r * c];
                for row in 0..r {
                    d[row * c + start..row * c + start + len].copy_from_slice(&g.data[row * len..(row + 1) * len]);
                }
                self.acc(grads, *a, Tensor::new(r, c, d));
            }
        }
    }
}

/// Central-difference check of an analytic gradient. `f` returns the loss
/// and its gradient at the given point. Returns the largest relative error
/// `|a − n| / max(|a|, |n|, 1e-8)` over coordinates.
pub fn finite_diff_check<F>(mut f: F, params: &[f64], h: f64) -> f64
where
    F: FnMut(&[f64]) -> (f64, Vec<f64>),
{
    assert!(h > 0.0, "finite-difference step must be positive");
    let (_, analytic) = f(params);
    assert_eq!(analytic.len(), params.len());
    let mut p = params.to_vec();
    let mut worst: f64 = 0.0;
    for i in 0..p.len() {
        let orig = p[i];
        p[i] = orig + h;
        let fp = f(&p).0;
        p[i] = orig - h;
        let fm = f(&p).0;
        p[i] = orig;
        let num = (fp - fm) / (2.0 * h);
        let a = analytic[i];
        let rel = (a - num).abs() / a.abs().max(num.abs()).max(1e-8);
        worst = worst.max(rel);
    }
    worst
}

/// Adam over a flat list of parameter tensors.
#[derive(Debug, Clone)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    t: u64,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl Adam {
    pub fn new(lr: f64, sizes: &[usize]) -> Self {
        Adam {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            t: 0,
            m: sizes.iter().map(|&n| vec![0.0; n]).collect(),
            v: sizes.iter().map(|&n| vec![0.0; n]).collect(),
        }
    }

    pub fn step(&mut self, params: &mut [&mut Vec<f64>], grads: &[Vec<f64>]) {
        assert_eq!(params.len(), self.m.len());
        self.t += 1;
        let bc1 = 1.0 - self.beta1.powi(self.t as i32);
        let bc2 = 1.0 - self.beta2.powi(self.t as i32);
        for (k, p) in params.iter_mut().enumerate() {
            let (m, v, g) = (&mut self.m[k], &mut self.v[k], &grads[k]);
            for i in 0..p.len() {
                m[i] = self.beta1 * m[i] + (1.0 - self.beta1) * g[i];
                v[i] = self.beta2 * v[i] + (1.0 - self.beta2) * g[i] * g[i];
                let mh = m[i] / bc1;
                let vh = v[i] / bc2;
                p[i] -= self.lr * mh / (vh.sqrt() + self.eps);
            }
        }
    }
}
