use rand::Rng;

use crate::error::{AutogradError, Result};
use crate::kernels::{matmul_nn, matmul_nt, matmul_tn, sigmoid, std_normal_cdf, std_normal_pdf};
use crate::params::{Gradients, ParamId, ParamStore};
use crate::real::Real;
use crate::tensor::Tensor;

/// Handle to a node on the tape.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

enum Op<F> {
    Leaf,
    Param(ParamId),
    MatMul(Var, Var),
    MatMulNT(Var, Var),
    Add(Var, Var),
    AddRow(Var, Var),
    Mul(Var, Var),
    Scale(Var, F),
    EmbedSum {
        table: ParamId,
        indices: Vec<u32>,
        channels: usize,
    },
    LayerNorm {
        x: Var,
        gain: Var,
        bias: Var,
        normed: Vec<F>,
        inv_std: Vec<F>,
    },
    Softmax(Var),
    Gelu(Var),
    Sigmoid(Var),
    Tanh(Var),
    Dropout {
        x: Var,
        mask: Vec<F>,
    },
    BceWithLogits {
        x: Var,
        targets: Vec<F>,
    },
    SliceCols {
        x: Var,
        start: usize,
    },
    ConcatCols(Vec<Var>),
    SliceRows {
        x: Var,
        start: usize,
    },
    ConcatRows(Vec<Var>),
    Sum(Var),
}

enum Value<F> {
    Owned(Tensor<F>),
    Param(ParamId),
}

struct Node<F> {
    value: Value<F>,
    op: Op<F>,
}

/// A single forward pass recorded for differentiation.
///
/// Graphs borrow the parameter store immutably, so any number of graphs can
/// run concurrently over shared parameters. A graph is single-threaded.
pub struct Graph<'s, F: Real> {
    store: &'s ParamStore<F>,
    nodes: Vec<Node<F>>,
    grads: Vec<Option<Vec<F>>>,
    backpropagated: bool,
    training: bool,
}

fn mismatch(op: &'static str, lhs: &[usize], rhs: &[usize]) -> AutogradError {
    AutogradError::ShapeMismatch {
        op,
        lhs: lhs.to_vec(),
        rhs: rhs.to_vec(),
    }
}

impl<'s, F: Real> Graph<'s, F> {
    /// New graph in evaluation mode (dropout disabled).
    pub fn new(store: &'s ParamStore<F>) -> Self {
        Self {
            store,
            nodes: Vec::new(),
            grads: Vec::new(),
            backpropagated: false,
            training: false,
        }
    }

    pub fn with_training(mut self, training: bool) -> Self {
        self.training = training;
        self
    }

    pub fn is_training(&self) -> bool {
        self.training
    }

    pub fn store(&self) -> &'s ParamStore<F> {
        self.store
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Tensor<F>, op: Op<F>) -> Var {
        self.nodes.push(Node {
            value: Value::Owned(value),
            op,
        });
        Var(self.nodes.len() - 1)
    }

    pub fn value(&self, v: Var) -> &Tensor<F> {
        match &self.nodes[v.0].value {
            Value::Owned(t) => t,
            Value::Param(id) => self.store.value(*id),
        }
    }

    /// Gradient of the loss with respect to `v`, available after
    /// [`Graph::backward`]. `None` if `v` does not influence the loss.
    pub fn grad(&self, v: Var) -> Option<&[F]> {
        self.grads.get(v.0).and_then(|g| g.as_deref())
    }

    pub fn input(&mut self, t: Tensor<F>) -> Var {
        self.push(t, Op::Leaf)
    }

    pub fn param(&mut self, id: ParamId) -> Var {
        self.nodes.push(Node {
            value: Value::Param(id),
            op: Op::Param(id),
        });
        Var(self.nodes.len() - 1)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ta, tb) = (self.value(a), self.value(b));
        let (m, k, k2, n) = (ta.rows(), ta.cols(), tb.rows(), tb.cols());
        if k != k2 {
            return Err(mismatch("matmul", ta.shape(), tb.shape()));
        }
        let mut out = vec![F::zero(); m * n];
        matmul_nn(ta.data(), tb.data(), m, k, n, &mut out);
        Ok(self.push(Tensor::matrix(m, n, out)?, Op::MatMul(a, b)))
    }

    /// `a * b^T`
    pub fn matmul_nt(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ta, tb) = (self.value(a), self.value(b));
        let (m, k, n, k2) = (ta.rows(), ta.cols(), tb.rows(), tb.cols());
        if k != k2 {
            return Err(mismatch("matmul_nt", ta.shape(), tb.shape()));
        }
        let mut out = vec![F::zero(); m * n];
        matmul_nt(ta.data(), tb.data(), m, k, n, &mut out);
        Ok(self.push(Tensor::matrix(m, n, out)?, Op::MatMulNT(a, b)))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ta, tb) = (self.value(a), self.value(b));
        if ta.len() != tb.len() || ta.rows() != tb.rows() {
            return Err(mismatch("add", ta.shape(), tb.shape()));
        }
        let data = ta.data().iter().zip(tb.data()).map(|(&x, &y)| x + y).collect();
        let t = Tensor::new(ta.shape().to_vec(), data)?;
        Ok(self.push(t, Op::Add(a, b)))
    }

    /// Adds a row vector `b` (length = columns of `a`) to every row of `a`.
    pub fn add_row(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ta, tb) = (self.value(a), self.value(b));
        let n = ta.cols();
        if tb.len() != n {
            return Err(mismatch("add_row", ta.shape(), tb.shape()));
        }
        let mut data = ta.data().to_vec();
        for row in data.chunks_mut(n) {
            row.iter_mut().zip(tb.data()).for_each(|(x, &y)| *x += y);
        }
        let t = Tensor::new(ta.shape().to_vec(), data)?;
        Ok(self.push(t, Op::AddRow(a, b)))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ta, tb) = (self.value(a), self.value(b));
        if ta.len() != tb.len() || ta.rows() != tb.rows() {
            return Err(mismatch("mul", ta.shape(), tb.shape()));
        }
        let data = ta.data().iter().zip(tb.data()).map(|(&x, &y)| x * y).collect();
        let t = Tensor::new(ta.shape().to_vec(), data)?;
        Ok(self.push(t, Op::Mul(a, b)))
    }

    pub fn scale(&mut self, a: Var, c: F) -> Var {
        let ta = self.value(a);
        let data = ta.data().iter().map(|&x| x * c).collect();
        let t = Tensor::new(ta.shape().to_vec(), data).expect("same shape");
        self.push(t, Op::Scale(a, c))
    }

    /// Looks up `channels` embedding rows per position and sums them.
    ///
    /// `indices` is position-major: `indices[t * channels + c]` is the token
    /// of channel `c` at position `t`. Output is `positions x H`.
    pub fn embed_sum(&mut self, table: ParamId, indices: Vec<u32>, channels: usize) -> Result<Var> {
        let tt = self.store.value(table);
        let (vocab, h) = (tt.rows(), tt.cols());
        if channels == 0 || indices.len() % channels != 0 {
            return Err(mismatch("embed_sum", &[indices.len()], &[channels]));
        }
        let positions = indices.len() / channels;
        let mut out = vec![F::zero(); positions * h];
        for (t, row) in out.chunks_mut(h).enumerate() {
            for &tok in &indices[t * channels..(t + 1) * channels] {
                let tok = tok as usize;
                if tok >= vocab {
                    return Err(AutogradError::OutOfRange {
                        what: "embedding table",
                        index: tok,
                        size: vocab,
                    });
                }
                row.iter_mut().zip(tt.row(tok)).for_each(|(o, &e)| *o += e);
            }
        }
        let t = Tensor::matrix(positions, h, out)?;
        Ok(self.push(
            t,
            Op::EmbedSum {
                table,
                indices,
                channels,
            },
        ))
    }

    /// Row-wise layer normalization with learned gain and bias.
    pub fn layer_norm(&mut self, x: Var, gain: Var, bias: Var, eps: F) -> Result<Var> {
        let tx = self.value(x);
        let n = tx.cols();
        if self.value(gain).len() != n || self.value(bias).len() != n {
            return Err(mismatch("layer_norm", tx.shape(), self.value(gain).shape()));
        }
        let rows = tx.rows();
        let nf = F::from_f64(n as f64);
        let mut normed = vec![F::zero(); rows * n];
        let mut inv_std = vec![F::zero(); rows];
        for r in 0..rows {
            let row = tx.row(r);
            let mean = row.iter().copied().sum::<F>() / nf;
            let var = row.iter().map(|&v| (v - mean) * (v - mean)).sum::<F>() / nf;
            let rs = F::one() / (var + eps).sqrt();
            inv_std[r] = rs;
            for (o, &v) in normed[r * n..(r + 1) * n].iter_mut().zip(row) {
                *o = (v - mean) * rs;
            }
        }
        let (g, b) = (self.value(gain).data(), self.value(bias).data());
        let mut out = normed.clone();
        for row in out.chunks_mut(n) {
            for ((o, &gv), &bv) in row.iter_mut().zip(g).zip(b) {
                *o = *o * gv + bv;
            }
        }
        let t = Tensor::new(tx.shape().to_vec(), out)?;
        Ok(self.push(
            t,
            Op::LayerNorm {
                x,
                gain,
                bias,
                normed,
                inv_std,
            },
        ))
    }

    /// Row-wise softmax.
    pub fn softmax(&mut self, x: Var) -> Result<Var> {
        self.masked_softmax(x, None)
    }

    /// Row-wise softmax where columns with `mask[c] == false` receive exactly
    /// zero probability.
    pub fn masked_softmax(&mut self, x: Var, mask: Option<&[bool]>) -> Result<Var> {
        let tx = self.value(x);
        let n = tx.cols();
        if let Some(m) = mask {
            if m.len() != n {
                return Err(mismatch("masked_softmax", tx.shape(), &[m.len()]));
            }
        }
        let keep = |c: usize| mask.map_or(true, |m| m[c]);
        let mut out = vec![F::zero(); tx.len()];
        for (r, orow) in out.chunks_mut(n).enumerate() {
            let row = tx.row(r);
            let mut max = F::neg_infinity();
            for (c, &v) in row.iter().enumerate() {
                if keep(c) && v > max {
                    max = v;
                }
            }
            if max == F::neg_infinity() {
                continue;
            }
            let mut sum = F::zero();
            for (c, (o, &v)) in orow.iter_mut().zip(row).enumerate() {
                if keep(c) {
                    *o = (v - max).exp();
                    sum += *o;
                }
            }
            orow.iter_mut().for_each(|o| *o /= sum);
        }
        let t = Tensor::new(tx.shape().to_vec(), out)?;
        Ok(self.push(t, Op::Softmax(x)))
    }

    fn unary(&mut self, x: Var, f: impl Fn(F) -> F, op: Op<F>) -> Var {
        let tx = self.value(x);
        let data = tx.data().iter().map(|&v| f(v)).collect();
        let t = Tensor::new(tx.shape().to_vec(), data).expect("same shape");
        self.push(t, op)
    }

    /// Exact (erf-based) GELU.
    pub fn gelu(&mut self, x: Var) -> Var {
        self.unary(
            x,
            |v| F::from_f64(v.as_f64() * std_normal_cdf(v.as_f64())),
            Op::Gelu(x),
        )
    }

    pub fn sigmoid(&mut self, x: Var) -> Var {
        self.unary(x, sigmoid, Op::Sigmoid(x))
    }

    pub fn tanh(&mut self, x: Var) -> Var {
        self.unary(x, |v| v.tanh(), Op::Tanh(x))
    }

    /// Inverted dropout. Identity when `p == 0` or the graph is not training.
    pub fn dropout<R: Rng + ?Sized>(&mut self, x: Var, p: f64, rng: &mut R) -> Result<Var> {
        if !(0.0..1.0).contains(&p) {
            return Err(AutogradError::DropoutProbability(p));
        }
        if p == 0.0 || !self.training {
            return Ok(x);
        }
        let scale = F::from_f64(1.0 / (1.0 - p));
        let tx = self.value(x);
        let mask: Vec<F> = (0..tx.len())
            .map(|_| {
                if rng.random::<f64>() < p {
                    F::zero()
                } else {
                    scale
                }
            })
            .collect();
        let data = tx.data().iter().zip(&mask).map(|(&v, &m)| v * m).collect();
        let t = Tensor::new(tx.shape().to_vec(), data)?;
        Ok(self.push(t, Op::Dropout { x, mask }))
    }

    /// Mean binary cross-entropy of logits against 0/1 targets.
    pub fn bce_with_logits(&mut self, x: Var, targets: &[F]) -> Result<Var> {
        let tx = self.value(x);
        if tx.len() != targets.len() || targets.is_empty() {
            return Err(mismatch("bce_with_logits", tx.shape(), &[targets.len()]));
        }
        let n = F::from_f64(targets.len() as f64);
        let loss = tx
            .data()
            .iter()
            .zip(targets)
            .map(|(&z, &y)| z.max(F::zero()) - z * y + (F::one() + (-z.abs()).exp()).ln())
            .sum::<F>()
            / n;
        Ok(self.push(
            Tensor::scalar(loss),
            Op::BceWithLogits {
                x,
                targets: targets.to_vec(),
            },
        ))
    }

    pub fn slice_cols(&mut self, x: Var, start: usize, len: usize) -> Result<Var> {
        let tx = self.value(x);
        let (rows, n) = (tx.rows(), tx.cols());
        if start + len > n {
            return Err(mismatch("slice_cols", tx.shape(), &[start, len]));
        }
        let mut out = Vec::with_capacity(rows * len);
        for r in 0..rows {
            out.extend_from_slice(&tx.row(r)[start..start + len]);
        }
        Ok(self.push(Tensor::matrix(rows, len, out)?, Op::SliceCols { x, start }))
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var> {
        let rows = self.value(parts[0]).rows();
        let mut total = 0;
        for &p in parts {
            let t = self.value(p);
            if t.rows() != rows {
                return Err(mismatch("concat_cols", &[rows], t.shape()));
            }
            total += t.cols();
        }
        let mut out = Vec::with_capacity(rows * total);
        for r in 0..rows {
            for &p in parts {
                out.extend_from_slice(self.value(p).row(r));
            }
        }
        Ok(self.push(Tensor::matrix(rows, total, out)?, Op::ConcatCols(parts.to_vec())))
    }

    pub fn slice_rows(&mut self, x: Var, start: usize, len: usize) -> Result<Var> {
        let tx = self.value(x);
        let (rows, n) = (tx.rows(), tx.cols());
        if start + len > rows {
            return Err(mismatch("slice_rows", tx.shape(), &[start, len]));
        }
        let out = tx.data()[start * n..(start + len) * n].to_vec();
        Ok(self.push(Tensor::matrix(len, n, out)?, Op::SliceRows { x, start }))
    }

    pub fn concat_rows(&mut self, parts: &[Var]) -> Result<Var> {
        let n = self.value(parts[0]).cols();
        let mut out = Vec::new();
        let mut rows = 0;
        for &p in parts {
            let t = self.value(p);
            if t.cols() != n {
                return Err(mismatch("concat_rows", &[n], t.shape()));
            }
            rows += t.rows();
            out.extend_from_slice(t.data());
        }
        Ok(self.push(Tensor::matrix(rows, n, out)?, Op::ConcatRows(parts.to_vec())))
    }

    pub fn sum(&mut self, x: Var) -> Var {
        let s = self.value(x).data().iter().copied().sum::<F>();
        self.push(Tensor::scalar(s), Op::Sum(x))
    }

    /// Reverse pass from a scalar `loss`. Parameter gradients are added into
    /// `grads`; node gradients stay queryable through [`Graph::grad`].
    pub fn backward(&mut self, loss: Var, grads: &mut Gradients<F>) -> Result<()> {
        if self.backpropagated {
            return Err(AutogradError::AlreadyBackpropagated);
        }
        let shape = self.value(loss).shape().to_vec();
        if self.value(loss).len() != 1 {
            return Err(AutogradError::NonScalarLoss(shape));
        }
        self.backpropagated = true;
        let mut node_grads: Vec<Option<Vec<F>>> = vec![None; self.nodes.len()];
        node_grads[loss.0] = Some(vec![F::one()]);

        for i in (0..=loss.0).rev() {
            let Some(g) = node_grads[i].take() else {
                continue;
            };
            self.propagate(i, &g, &mut node_grads, grads);
            node_grads[i] = Some(g);
        }
        self.grads = node_grads;
        Ok(())
    }

    fn propagate(
        &self,
        i: usize,
        g: &[F],
        ng: &mut [Option<Vec<F>>],
        pg: &mut Gradients<F>,
    ) {
        fn buf<'b, F: Real>(ng: &'b mut [Option<Vec<F>>], v: Var, len: usize) -> &'b mut Vec<F> {
            ng[v.0].get_or_insert_with(|| vec![F::zero(); len])
        }
        let out = self.value(Var(i));
        match &self.nodes[i].op {
            Op::Leaf => {}
            Op::Param(id) => {
                let b = pg.buffer(*id, g.len());
                b.iter_mut().zip(g).for_each(|(a, &v)| *a += v);
            }
            Op::MatMul(a, b) => {
                let (ta, tb) = (self.value(*a), self.value(*b));
                let (m, k, n) = (ta.rows(), ta.cols(), tb.cols());
                matmul_nt(g, tb.data(), m, n, k, buf(ng, *a, m * k));
                matmul_tn(ta.data(), g, m, k, n, buf(ng, *b, k * n));
            }
            Op::MatMulNT(a, b) => {
                let (ta, tb) = (self.value(*a), self.value(*b));
                let (m, k, n) = (ta.rows(), ta.cols(), tb.rows());
                matmul_nn(g, tb.data(), m, n, k, buf(ng, *a, m * k));
                matmul_tn(g, ta.data(), m, n, k, buf(ng, *b, n * k));
            }
            Op::Add(a, b) => {
                for v in [*a, *b] {
                    buf(ng, v, g.len()).iter_mut().zip(g).for_each(|(x, &y)| *x += y);
                }
            }
            Op::AddRow(a, b) => {
                buf(ng, *a, g.len()).iter_mut().zip(g).for_each(|(x, &y)| *x += y);
                let n = out.cols();
                let gb = buf(ng, *b, n);
                for row in g.chunks(n) {
                    gb.iter_mut().zip(row).for_each(|(x, &y)| *x += y);
                }
            }
            Op::Mul(a, b) => {
                let (da, db) = (self.value(*a).data(), self.value(*b).data());
                let ga = buf(ng, *a, g.len());
                for ((x, &gv), &bv) in ga.iter_mut().zip(g).zip(db) {
                    *x += gv * bv;
                }
                let gb = buf(ng, *b, g.len());
                for ((x, &gv), &av) in gb.iter_mut().zip(g).zip(da) {
                    *x += gv * av;
                }
            }
            Op::Scale(a, c) => {
                buf(ng, *a, g.len())
                    .iter_mut()
                    .zip(g)
                    .for_each(|(x, &y)| *x += y * *c);
            }
            Op::EmbedSum {
                table,
                indices,
                channels,
            } => {
                let tt = self.store.value(*table);
                let h = tt.cols();
                let gt = pg.buffer(*table, tt.len());
                for (t, grow) in g.chunks(h).enumerate() {
                    for &tok in &indices[t * channels..(t + 1) * channels] {
                        let tok = tok as usize;
                        gt[tok * h..(tok + 1) * h]
                            .iter_mut()
                            .zip(grow)
                            .for_each(|(x, &y)| *x += y);
                    }
                }
            }
            Op::LayerNorm {
                x,
                gain,
                bias,
                normed,
                inv_std,
            } => {
                let n = out.cols();
                let nf = F::from_f64(n as f64);
                let gain_v = self.value(*gain).data();
                {
                    let gg = buf(ng, *gain, n);
                    for (grow, xrow) in g.chunks(n).zip(normed.chunks(n)) {
                        for ((a, &gv), &xh) in gg.iter_mut().zip(grow).zip(xrow) {
                            *a += gv * xh;
                        }
                    }
                }
                {
                    let gb = buf(ng, *bias, n);
                    for grow in g.chunks(n) {
                        gb.iter_mut().zip(grow).for_each(|(a, &v)| *a += v);
                    }
                }
                let gx = buf(ng, *x, g.len());
                for (r, (grow, xrow)) in g.chunks(n).zip(normed.chunks(n)).enumerate() {
                    let mut mean_d = F::zero();
                    let mut mean_dx = F::zero();
                    for ((&gv, &gn), &xh) in grow.iter().zip(gain_v).zip(xrow) {
                        let d = gv * gn;
                        mean_d += d;
                        mean_dx += d * xh;
                    }
                    mean_d /= nf;
                    mean_dx /= nf;
                    let rs = inv_std[r];
                    for (c, o) in gx[r * n..(r + 1) * n].iter_mut().enumerate() {
                        let d = grow[c] * gain_v[c];
                        *o += rs * (d - mean_d - xrow[c] * mean_dx);
                    }
                }
            }
            Op::Softmax(x) => {
                let n = out.cols();
                let y = out.data();
                let gx = buf(ng, *x, g.len());
                for (r, grow) in g.chunks(n).enumerate() {
                    let yrow = &y[r * n..(r + 1) * n];
                    let dot: F = grow.iter().zip(yrow).map(|(&a, &b)| a * b).sum();
                    for (c, o) in gx[r * n..(r + 1) * n].iter_mut().enumerate() {
                        *o += yrow[c] * (grow[c] - dot);
                    }
                }
            }
            Op::Gelu(x) => {
                let xs = self.value(*x).data();
                let gx = buf(ng, *x, g.len());
                for ((o, &gv), &xv) in gx.iter_mut().zip(g).zip(xs) {
                    let v = xv.as_f64();
                    let d = std_normal_cdf(v) + v * std_normal_pdf(v);
                    *o += gv * F::from_f64(d);
                }
            }
            Op::Sigmoid(x) => {
                let y = out.data();
                let gx = buf(ng, *x, g.len());
                for ((o, &gv), &yv) in gx.iter_mut().zip(g).zip(y) {
                    *o += gv * yv * (F::one() - yv);
                }
            }
            Op::Tanh(x) => {
                let y = out.data();
                let gx = buf(ng, *x, g.len());
                for ((o, &gv), &yv) in gx.iter_mut().zip(g).zip(y) {
                    *o += gv * (F::one() - yv * yv);
                }
            }
            Op::Dropout { x, mask } => {
                let gx = buf(ng, *x, g.len());
                for ((o, &gv), &m) in gx.iter_mut().zip(g).zip(mask) {
                    *o += gv * m;
                }
            }
            Op::BceWithLogits { x, targets } => {
                let xs = self.value(*x).data();
                let n = F::from_f64(targets.len() as f64);
                let gx = buf(ng, *x, xs.len());
                for ((o, &z), &y) in gx.iter_mut().zip(xs).zip(targets) {
                    *o += g[0] * (sigmoid(z) - y) / n;
                }
            }
            Op::SliceCols { x, start } => {
                let tx = self.value(*x);
                let (n, len) = (tx.cols(), out.cols());
                let gx = buf(ng, *x, tx.len());
                for (r, grow) in g.chunks(len).enumerate() {
                    gx[r * n + start..r * n + start + len]
                        .iter_mut()
                        .zip(grow)
                        .for_each(|(a, &v)| *a += v);
                }
            }
            Op::ConcatCols(parts) => {
                let total = out.cols();
                let mut offset = 0;
                for &p in parts {
                    let tp = self.value(p);
                    let w = tp.cols();
                    let gp = buf(ng, p, tp.len());
                    for (r, grow) in g.chunks(total).enumerate() {
                        gp[r * w..(r + 1) * w]
                            .iter_mut()
                            .zip(&grow[offset..offset + w])
                            .for_each(|(a, &v)| *a += v);
                    }
                    offset += w;
                }
            }
            Op::SliceRows { x, start } => {
                let tx = self.value(*x);
                let n = tx.cols();
                let gx = buf(ng, *x, tx.len());
                gx[start * n..start * n + g.len()]
                    .iter_mut()
                    .zip(g)
                    .for_each(|(a, &v)| *a += v);
            }
            Op::ConcatRows(parts) => {
                let mut offset = 0;
                for &p in parts {
                    let len = self.value(p).len();
                    buf(ng, p, len)
                        .iter_mut()
                        .zip(&g[offset..offset + len])
                        .for_each(|(a, &v)| *a += v);
                    offset += len;
                }
            }
            Op::Sum(x) => {
                let len = self.value(*x).len();
                buf(ng, *x, len).iter_mut().for_each(|a| *a += g[0]);
            }
        }
    }
}
