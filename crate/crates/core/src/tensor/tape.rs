use super::{log_sum_exp, softmax_slice, Tensor};
use crate::{Error, Result};

/// Handle to a node on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Clone, Debug)]
enum Op {
    Leaf,
    /// `a · wᵀ` with `a: [n×k]`, `w: [m×k]`.
    MatMulT(Var, Var),
    /// Row-broadcast add of a bias vector.
    AddBias(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    AddScalar(Var),
    Relu(Var),
    Exp(Var),
    Log(Var),
    Sigmoid(Var),
    Square(Var),
    Clamp(Var, f64, f64),
    SoftmaxRows(Var),
    LogSoftmaxRows(Var),
    LogSumExpRows(Var),
    SumAll(Var),
    SumRows(Var),
    Concat(Vec<Var>),
    Slice(Var, usize, usize),
}

struct Node {
    value: Tensor,
    op: Op,
    needs_grad: bool,
}

/// Define-by-run reverse-mode tape. Nodes are appended in evaluation order,
/// so reverse creation order is a valid topological order for backprop.
#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

fn rc(t: &Tensor) -> (usize, usize) {
    match t.shape() {
        [n] => (1, *n),
        [r, c] => (*r, *c),
        _ => (1, t.len()),
    }
}

/// `c = a·b + beta·c` over strided row-major views.
#[allow(clippy::too_many_arguments)]
fn gemm(
    m: usize,
    k: usize,
    n: usize,
    a: &[f64],
    (rsa, csa): (usize, usize),
    b: &[f64],
    (rsb, csb): (usize, usize),
    beta: f64,
    c: &mut [f64],
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
    // SAFETY: callers pass slices whose lengths cover the strided extents
    // (checked by the shape validation in `matmul_t`), and `c` does not alias.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            rsa as isize,
            csa as isize,
            b.as_ptr(),
            rsb as isize,
            csb as isize,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
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

    fn push(&mut self, value: Tensor, op: Op, needs_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            needs_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn node(&self, v: Var) -> &Node {
        &self.nodes[v.0]
    }

    fn ng(&self, v: Var) -> bool {
        self.nodes[v.0].needs_grad
    }

    /// Adds a leaf; it participates in backprop iff `requires_grad` is set.
    pub fn leaf(&mut self, tensor: Tensor) -> Var {
        let ng = tensor.requires_grad;
        self.push(tensor, Op::Leaf, ng)
    }

    pub fn constant(&mut self, mut tensor: Tensor) -> Var {
        tensor.requires_grad = false;
        self.leaf(tensor)
    }

    pub fn constant_matrix(&mut self, rows: usize, cols: usize, data: Vec<f64>) -> Result<Var> {
        Ok(self.constant(Tensor::matrix(rows, cols, data)?))
    }

    pub fn tensor(&self, v: Var) -> &Tensor {
        &self.node(v).value
    }

    pub fn value(&self, v: Var) -> &[f64] {
        self.node(v).value.data()
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.node(v).value.shape()
    }

    /// Scalar value of a one-element node.
    pub fn scalar(&self, v: Var) -> f64 {
        self.value(v)[0]
    }

    /// `(rows, cols)` of a node, rank-1 nodes counting as one row.
    pub fn dims(&self, v: Var) -> (usize, usize) {
        rc(&self.node(v).value)
    }

    pub fn grad(&self, v: Var) -> Option<&[f64]> {
        self.node(v).value.grad.as_deref()
    }

    /// Fails with a numeric error naming `net` if any entry is non-finite.
    pub fn check_finite(&self, v: Var, net: &str) -> Result<()> {
        if let Some((i, x)) = self
            .value(v)
            .iter()
            .enumerate()
            .find(|(_, x)| !x.is_finite())
        {
            return Err(Error::Numeric {
                net: net.to_string(),
                detail: format!("entry {i} is {x}"),
            });
        }
        Ok(())
    }

    fn unary(&mut self, a: Var, op: Op, f: impl Fn(f64) -> f64) -> Var {
        let src = &self.node(a).value;
        let data = src.data().iter().map(|x| f(*x)).collect();
        let t = Tensor::new(src.shape().to_vec(), data).expect("same shape");
        let ng = self.ng(a);
        self.push(t, op, ng)
    }

    fn same_shape(&self, a: Var, b: Var, what: &str) -> Result<()> {
        if self.shape(a) != self.shape(b) {
            return Err(Error::dim(what, self.shape(a), self.shape(b)));
        }
        Ok(())
    }

    fn binary(&mut self, a: Var, b: Var, op: Op, f: impl Fn(f64, f64) -> f64) -> Var {
        let (x, y) = (self.node(a).value.data(), self.node(b).value.data());
        let data = x.iter().zip(y).map(|(p, q)| f(*p, *q)).collect();
        let t = Tensor::new(self.shape(a).to_vec(), data).expect("same shape");
        let ng = self.ng(a) || self.ng(b);
        self.push(t, op, ng)
    }

    /// `a · wᵀ` for `a: [n×k]` and `w: [m×k]`.
    pub fn matmul_t(&mut self, a: Var, w: Var) -> Result<Var> {
        let (n, k) = self.dims(a);
        let (m, k2) = self.dims(w);
        if k != k2 {
            return Err(Error::dim("matmul input width", &[m, k2], &[n, k]));
        }
        let mut out = vec![0.0; n * m];
        gemm(
            n,
            k,
            m,
            self.value(a),
            (k, 1),
            self.value(w),
            (1, k),
            0.0,
            &mut out,
        );
        let ng = self.ng(a) || self.ng(w);
        Ok(self.push(Tensor::matrix(n, m, out)?, Op::MatMulT(a, w), ng))
    }

    pub fn add_bias(&mut self, a: Var, bias: Var) -> Result<Var> {
        let (n, m) = self.dims(a);
        if self.value(bias).len() != m {
            return Err(Error::dim("bias width", &[m], self.shape(bias)));
        }
        let b = self.value(bias);
        let mut out = self.value(a).to_vec();
        for row in out.chunks_mut(m.max(1)) {
            for (o, bb) in row.iter_mut().zip(b) {
                *o += bb;
            }
        }
        let ng = self.ng(a) || self.ng(bias);
        let shape = self.shape(a).to_vec();
        debug_assert_eq!(out.len(), n * m);
        Ok(self.push(Tensor::new(shape, out)?, Op::AddBias(a, bias), ng))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape(a, b, "add")?;
        Ok(self.binary(a, b, Op::Add(a, b), |x, y| x + y))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape(a, b, "sub")?;
        Ok(self.binary(a, b, Op::Sub(a, b), |x, y| x - y))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape(a, b, "mul")?;
        Ok(self.binary(a, b, Op::Mul(a, b), |x, y| x * y))
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Var {
        self.unary(a, Op::Scale(a, c), |x| c * x)
    }

    pub fn neg(&mut self, a: Var) -> Var {
        self.scale(a, -1.0)
    }

    pub fn add_scalar(&mut self, a: Var, c: f64) -> Var {
        self.unary(a, Op::AddScalar(a), |x| x + c)
    }

    pub fn relu(&mut self, a: Var) -> Var {
        self.unary(a, Op::Relu(a), |x| if x > 0.0 { x } else { 0.0 })
    }

    pub fn exp(&mut self, a: Var) -> Var {
        self.unary(a, Op::Exp(a), f64::exp)
    }

    /// Natural log; callers clamp inputs away from zero first.
    pub fn log(&mut self, a: Var) -> Var {
        self.unary(a, Op::Log(a), f64::ln)
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        self.unary(a, Op::Sigmoid(a), |x| {
            if x >= 0.0 {
                1.0 / (1.0 + (-x).exp())
            } else {
                let e = x.exp();
                e / (1.0 + e)
            }
        })
    }

    pub fn square(&mut self, a: Var) -> Var {
        self.unary(a, Op::Square(a), |x| x * x)
    }

    /// Elementwise clamp; the gradient is zero outside `[lo, hi]`.
    pub fn clamp(&mut self, a: Var, lo: f64, hi: f64) -> Var {
        self.unary(a, Op::Clamp(a, lo, hi), |x| x.clamp(lo, hi))
    }

    fn rowwise(&mut self, a: Var, op: Op, out_cols: Option<usize>, f: impl Fn(&[f64]) -> Vec<f64>) -> Var {
        let (n, m) = self.dims(a);
        let src = self.value(a);
        let mut out = Vec::with_capacity(n * out_cols.unwrap_or(m));
        for row in src.chunks(m.max(1)).take(n) {
            out.extend(f(row));
        }
        let shape = match out_cols {
            Some(c) => vec![n, c],
            None => self.shape(a).to_vec(),
        };
        let ng = self.ng(a);
        self.push(Tensor::new(shape, out).expect("row op shape"), op, ng)
    }

    pub fn softmax_rows(&mut self, a: Var) -> Var {
        self.rowwise(a, Op::SoftmaxRows(a), None, softmax_slice)
    }

    pub fn log_softmax_rows(&mut self, a: Var) -> Var {
        self.rowwise(a, Op::LogSoftmaxRows(a), None, |r| {
            let l = log_sum_exp(r);
            r.iter().map(|x| x - l).collect()
        })
    }

    /// `[n×m] → [n×1]` log-sum-exp of each row.
    pub fn log_sum_exp_rows(&mut self, a: Var) -> Var {
        self.rowwise(a, Op::LogSumExpRows(a), Some(1), |r| vec![log_sum_exp(r)])
    }

    /// `[n×m] → [n×1]` row sums.
    pub fn sum_rows(&mut self, a: Var) -> Var {
        self.rowwise(a, Op::SumRows(a), Some(1), |r| vec![r.iter().sum()])
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let s = self.value(a).iter().sum();
        let ng = self.ng(a);
        self.push(Tensor::scalar(s), Op::SumAll(a), ng)
    }

    pub fn mean(&mut self, a: Var) -> Var {
        let n = self.value(a).len().max(1) as f64;
        let s = self.sum(a);
        self.scale(s, 1.0 / n)
    }

    /// Column-wise concatenation of matrices sharing a row count.
    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var> {
        let Some(first) = parts.first() else {
            return Err(Error::Contract("concat of zero tensors".into()));
        };
        let n = self.dims(*first).0;
        let mut widths = Vec::with_capacity(parts.len());
        for p in parts {
            let (r, c) = self.dims(*p);
            if r != n {
                return Err(Error::dim("concat rows", &[n], &[r]));
            }
            widths.push(c);
        }
        let total: usize = widths.iter().sum();
        let mut out = Vec::with_capacity(n * total);
        for i in 0..n {
            for (p, w) in parts.iter().zip(&widths) {
                out.extend_from_slice(&self.value(*p)[i * w..(i + 1) * w]);
            }
        }
        let ng = parts.iter().any(|p| self.ng(*p));
        Ok(self.push(Tensor::matrix(n, total, out)?, Op::Concat(parts.to_vec()), ng))
    }

    /// Columns `start..end` of a matrix.
    pub fn slice_cols(&mut self, a: Var, start: usize, end: usize) -> Result<Var> {
        let (n, m) = self.dims(a);
        if start > end || end > m {
            return Err(Error::dim("column slice", &[m], &[start, end]));
        }
        let w = end - start;
        let src = self.value(a);
        let mut out = Vec::with_capacity(n * w);
        for i in 0..n {
            out.extend_from_slice(&src[i * m + start..i * m + end]);
        }
        let ng = self.ng(a);
        Ok(self.push(Tensor::matrix(n, w, out)?, Op::Slice(a, start, end), ng))
    }

    /// Reverse pass from a one-element node. Afterwards every node that
    /// requires a gradient exposes it through [`Tape::grad`].
    pub fn backward(&mut self, loss: Var) -> Result<()> {
        let lv = self.value(loss);
        if lv.len() != 1 {
            return Err(Error::Contract(format!(
                "backward needs a scalar loss, got shape {:?}",
                self.shape(loss)
            )));
        }
        if !lv[0].is_finite() {
            return Err(Error::NumericInput(format!("loss is {}", lv[0])));
        }
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; loss.0 + 1];
        grads[loss.0] = Some(vec![1.0]);

        for i in (0..=loss.0).rev() {
            if !self.nodes[i].needs_grad {
                continue;
            }
            let Some(g) = grads[i].take() else { continue };
            if let Op::Leaf = self.nodes[i].op {
                self.nodes[i].value.grad = Some(g);
                continue;
            }
            self.propagate(i, &g, &mut grads);
        }
        Ok(())
    }

    fn propagate(&self, i: usize, g: &[f64], grads: &mut [Option<Vec<f64>>]) {
        let node = &self.nodes[i];
        let out = node.value.data();
        let ng = |v: &Var| self.nodes[v.0].needs_grad;
        let len = |v: &Var| self.nodes[v.0].value.len();
        macro_rules! acc {
            ($v:expr) => {
                grads[$v.0].get_or_insert_with(|| vec![0.0; len(&$v)])
            };
        }
        match &node.op {
            Op::Leaf => {}
            Op::MatMulT(a, w) => {
                let (n, k) = self.dims(*a);
                let m = self.dims(*w).0;
                if ng(a) {
                    let wv = self.value(*w);
                    let ga = acc!(*a);
                    // dA = G · W
                    gemm(n, m, k, g, (m, 1), wv, (k, 1), 1.0, ga);
                }
                if ng(w) {
                    let av = self.value(*a);
                    let gw = acc!(*w);
                    // dW = Gᵀ · A
                    gemm(m, n, k, g, (1, m), av, (k, 1), 1.0, gw);
                }
            }
            Op::AddBias(a, b) => {
                if ng(a) {
                    for (d, s) in acc!(*a).iter_mut().zip(g) {
                        *d += s;
                    }
                }
                if ng(b) {
                    let m = len(b);
                    let gb = acc!(*b);
                    for row in g.chunks(m.max(1)) {
                        for (d, s) in gb.iter_mut().zip(row) {
                            *d += s;
                        }
                    }
                }
            }
            Op::Add(a, b) => {
                for v in [a, b] {
                    if ng(v) {
                        for (d, s) in acc!(*v).iter_mut().zip(g) {
                            *d += s;
                        }
                    }
                }
            }
            Op::Sub(a, b) => {
                if ng(a) {
                    for (d, s) in acc!(*a).iter_mut().zip(g) {
                        *d += s;
                    }
                }
                if ng(b) {
                    for (d, s) in acc!(*b).iter_mut().zip(g) {
                        *d -= s;
                    }
                }
            }
            Op::Mul(a, b) => {
                if ng(a) {
                    let bv = self.value(*b);
                    for ((d, s), y) in acc!(*a).iter_mut().zip(g).zip(bv) {
                        *d += s * y;
                    }
                }
                if ng(b) {
                    let av = self.value(*a);
                    for ((d, s), x) in acc!(*b).iter_mut().zip(g).zip(av) {
                        *d += s * x;
                    }
                }
            }
            Op::Scale(a, c) => {
                for (d, s) in acc!(*a).iter_mut().zip(g) {
                    *d += c * s;
                }
            }
            Op::AddScalar(a) => {
                for (d, s) in acc!(*a).iter_mut().zip(g) {
                    *d += s;
                }
            }
            Op::Relu(a) => {
                let x = self.value(*a);
                for ((d, s), xi) in acc!(*a).iter_mut().zip(g).zip(x) {
                    if *xi > 0.0 {
                        *d += s;
                    }
                }
            }
            Op::Exp(a) => {
                for ((d, s), y) in acc!(*a).iter_mut().zip(g).zip(out) {
                    *d += s * y;
                }
            }
            Op::Log(a) => {
                let x = self.value(*a);
                for ((d, s), xi) in acc!(*a).iter_mut().zip(g).zip(x) {
                    *d += s / xi;
                }
            }
            Op::Sigmoid(a) => {
                for ((d, s), y) in acc!(*a).iter_mut().zip(g).zip(out) {
                    *d += s * y * (1.0 - y);
                }
            }
            Op::Square(a) => {
                let x = self.value(*a);
                for ((d, s), xi) in acc!(*a).iter_mut().zip(g).zip(x) {
                    *d += 2.0 * s * xi;
                }
            }
            Op::Clamp(a, lo, hi) => {
                let x = self.value(*a);
                for ((d, s), xi) in acc!(*a).iter_mut().zip(g).zip(x) {
                    if *xi >= *lo && *xi <= *hi {
                        *d += s;
                    }
                }
            }
            Op::SoftmaxRows(a) => {
                let m = self.dims(*a).1.max(1);
                let ga = acc!(*a);
                for ((dr, gr), yr) in ga.chunks_mut(m).zip(g.chunks(m)).zip(out.chunks(m)) {
                    let dot: f64 = gr.iter().zip(yr).map(|(p, q)| p * q).sum();
                    for ((d, gi), yi) in dr.iter_mut().zip(gr).zip(yr) {
                        *d += yi * (gi - dot);
                    }
                }
            }
            Op::LogSoftmaxRows(a) => {
                let m = self.dims(*a).1.max(1);
                let ga = acc!(*a);
                for ((dr, gr), yr) in ga.chunks_mut(m).zip(g.chunks(m)).zip(out.chunks(m)) {
                    let gsum: f64 = gr.iter().sum();
                    for ((d, gi), yi) in dr.iter_mut().zip(gr).zip(yr) {
                        *d += gi - yi.exp() * gsum;
                    }
                }
            }
            Op::LogSumExpRows(a) => {
                let m = self.dims(*a).1.max(1);
                let x = self.value(*a);
                let ga = acc!(*a);
                for (((dr, xr), gi), l) in ga.chunks_mut(m).zip(x.chunks(m)).zip(g).zip(out) {
                    for (d, xi) in dr.iter_mut().zip(xr) {
                        *d += gi * (xi - l).exp();
                    }
                }
            }
            Op::SumAll(a) => {
                let s = g[0];
                for d in acc!(*a).iter_mut() {
                    *d += s;
                }
            }
            Op::SumRows(a) => {
                let m = self.dims(*a).1.max(1);
                for (dr, gi) in acc!(*a).chunks_mut(m).zip(g) {
                    for d in dr {
                        *d += gi;
                    }
                }
            }
            Op::Concat(parts) => {
                let n = self.dims(parts[0]).0;
                let total: usize = parts.iter().map(|p| self.dims(*p).1).sum();
                let mut off = 0;
                for p in parts {
                    let w = self.dims(*p).1;
                    if ng(p) {
                        let gp = acc!(*p);
                        for r in 0..n {
                            for c in 0..w {
                                gp[r * w + c] += g[r * total + off + c];
                            }
                        }
                    }
                    off += w;
                }
            }
            Op::Slice(a, start, end) => {
                let (n, m) = self.dims(*a);
                let w = end - start;
                let ga = acc!(*a);
                for r in 0..n {
                    for c in 0..w {
                        ga[r * m + start + c] += g[r * w + c];
                    }
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng as _;

    fn leaf(t: &mut Tape, rows: usize, cols: usize, data: Vec<f64>) -> Var {
        t.leaf(Tensor::matrix(rows, cols, data).unwrap().with_grad())
    }

    #[test]
    fn square_gradient() {
        let mut t = Tape::new();
        let x = t.leaf(Tensor::scalar(3.0).with_grad());
        let y = t.square(x);
        let l = t.sum(y);
        t.backward(l).unwrap();
        assert_eq!(t.grad(x).unwrap(), &[6.0]);
    }

    #[test]
    fn relu_subgradient_is_zero_on_negatives() {
        let mut t = Tape::new();
        let x = leaf(&mut t, 1, 2, vec![-1.0, 2.0]);
        let r = t.relu(x);
        let l = t.sum(r);
        t.backward(l).unwrap();
        assert_eq!(t.grad(x).unwrap(), &[0.0, 1.0]);
    }

    #[test]
    fn backward_rejects_non_scalar() {
        let mut t = Tape::new();
        let x = leaf(&mut t, 1, 2, vec![1.0, 2.0]);
        let y = t.square(x);
        assert!(matches!(t.backward(y), Err(Error::Contract(_))));
    }

    #[test]
    fn matmul_rejects_width_mismatch() {
        let mut t = Tape::new();
        let a = leaf(&mut t, 2, 3, vec![0.0; 6]);
        let w = leaf(&mut t, 4, 2, vec![0.0; 8]);
        assert!(matches!(t.matmul_t(a, w), Err(Error::Dimension { .. })));
    }

    #[test]
    fn constants_receive_no_gradient() {
        let mut t = Tape::new();
        let c = t.constant(Tensor::scalar(2.0));
        let x = t.leaf(Tensor::scalar(3.0).with_grad());
        let y = t.mul(c, x).unwrap();
        let l = t.sum(y);
        t.backward(l).unwrap();
        assert!(t.grad(c).is_none());
        assert_eq!(t.grad(x).unwrap(), &[2.0]);
    }

    /// Central finite differences over every entry of every op on random
    /// inputs; the oracle never touches the backward code.
    #[test]
    fn every_op_matches_finite_differences() {
        type Build = fn(&mut Tape, Var, Var) -> Var;
        let cases: Vec<(&str, Build)> = vec![
            ("matmul_t", |t, a, b| {
                let b2 = t.slice_cols(b, 0, 3).unwrap();
                t.matmul_t(a, b2).unwrap()
            }),
            ("mul_sub", |t, a, b| {
                let b2 = t.slice_cols(b, 0, 3).unwrap();
                let m = t.mul(a, b2).unwrap();
                t.sub(m, a).unwrap()
            }),
            ("exp_log", |t, a, _| {
                let e = t.exp(a);
                let e1 = t.add_scalar(e, 1.0);
                t.log(e1)
            }),
            ("sigmoid_square", |t, a, _| {
                let s = t.sigmoid(a);
                t.square(s)
            }),
            ("softmax_rows", |t, a, b| {
                let s = t.softmax_rows(a);
                let b2 = t.slice_cols(b, 0, 3).unwrap();
                t.mul(s, b2).unwrap()
            }),
            ("log_softmax_rows", |t, a, b| {
                let s = t.log_softmax_rows(a);
                let b2 = t.slice_cols(b, 0, 3).unwrap();
                t.mul(s, b2).unwrap()
            }),
            ("lse_rows", |t, a, _| t.log_sum_exp_rows(a)),
            ("concat_scale", |t, a, b| {
                let c = t.concat_cols(&[a, b]).unwrap();
                t.scale(c, -1.7)
            }),
            ("clamp_inside", |t, a, _| t.clamp(a, -50.0, 50.0)),
        ];

        let mut rng = crate::rng::stream(11, "tape-fd");
        for (name, build) in cases {
            let a0: Vec<f64> = (0..6).map(|_| rng.random_range(-1.5..1.5)).collect();
            let b0: Vec<f64> = (0..8).map(|_| rng.random_range(-1.5..1.5)).collect();
            // Fixed random projection to a scalar.
            let proj: Vec<f64> = (0..16).map(|_| rng.random_range(-1.0..1.0)).collect();

            let eval = |a: &[f64], b: &[f64], grads: bool| -> (f64, Vec<f64>, Vec<f64>) {
                let mut t = Tape::new();
                let av = t.leaf(Tensor::matrix(2, 3, a.to_vec()).unwrap().with_grad());
                let bv = t.leaf(Tensor::matrix(2, 4, b.to_vec()).unwrap().with_grad());
                let out = build(&mut t, av, bv);
                let n = t.value(out).len();
                let p = t.constant(Tensor::new(t.shape(out).to_vec(), proj[..n].to_vec()).unwrap());
                let prod = t.mul(out, p).unwrap();
                let l = t.sum(prod);
                let val = t.scalar(l);
                if !grads {
                    return (val, vec![], vec![]);
                }
                t.backward(l).unwrap();
                let ga = t.grad(av).map(|g| g.to_vec()).unwrap_or(vec![0.0; 6]);
                let gb = t.grad(bv).map(|g| g.to_vec()).unwrap_or(vec![0.0; 8]);
                (val, ga, gb)
            };
            let (_, ga, gb) = eval(&a0, &b0, true);
            let h = 1e-5;
            for (which, analytic) in [(0, &ga), (1, &gb)] {
                for i in 0..analytic.len() {
                    let (mut ap, mut am) = (a0.clone(), a0.clone());
                    let (mut bp, mut bm) = (b0.clone(), b0.clone());
                    if which == 0 {
                        ap[i] += h;
                        am[i] -= h;
                    } else {
                        bp[i] += h;
                        bm[i] -= h;
                    }
                    let fd = (eval(&ap, &bp, false).0 - eval(&am, &bm, false).0) / (2.0 * h);
                    let err = (fd - analytic[i]).abs() / fd.abs().max(analytic[i].abs()).max(1e-3);
                    assert!(err < 1e-6, "{name}: input {which}[{i}] fd {fd} vs {}", analytic[i]);
                }
            }
        }
    }
}
