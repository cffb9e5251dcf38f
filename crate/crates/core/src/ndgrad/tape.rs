use rand::Rng;

use super::{NdError, Tensor};

pub const BCE_EPS: f64 = 1e-7;

/// Handle to a value recorded on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

#[derive(Debug)]
enum Op {
    Leaf,
    Dense { x: Var, w: Var, b: Var },
    Conv1d { x: Var, k: Var, b: Var, stride: usize, pad: usize },
    MaxPool { x: Var, argmax: Vec<usize> },
    Relu(Var),
    Sigmoid(Var),
    Tanh(Var),
    Softmax(Var),
    Dropout { x: Var, mask: Vec<f64> },
    Concat(Vec<Var>),
    Bce { p: Var, y: Vec<f64> },
    Mse { x: Var, target: Vec<f64> },
    Sum(Var),
    Add(Var, Var),
    Mul(Var, Var),
    Bmm(Var, Var),
    Transpose(Var),
    Reshape(Var),
}

#[derive(Debug)]
struct Node {
    shape: Vec<usize>,
    value: Vec<f64>,
    requires_grad: bool,
    op: Op,
}

/// Records forward computations in execution order for reverse-mode
/// differentiation. Batched: leading axes are batch axes where noted.
#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
    grads: Vec<Option<Vec<f64>>>,
}

fn shape_err(what: &str, a: &[usize], b: &[usize]) -> NdError {
    NdError::ShapeMismatch(format!("{what}: {a:?} vs {b:?}"))
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

    fn push(&mut self, shape: Vec<usize>, value: Vec<f64>, requires_grad: bool, op: Op) -> Var {
        debug_assert_eq!(shape.iter().product::<usize>(), value.len());
        self.nodes.push(Node { shape, value, requires_grad, op });
        self.grads.push(None);
        Var(self.nodes.len() - 1)
    }

    fn rg(&self, vs: &[Var]) -> bool {
        vs.iter().any(|v| self.nodes[v.0].requires_grad)
    }

    /// Records a copy of `t`; gradients flow to it iff `t.requires_grad`.
    pub fn leaf(&mut self, t: &Tensor) -> Var {
        self.push(t.shape.clone(), t.values.clone(), t.requires_grad, Op::Leaf)
    }

    pub fn constant(&mut self, shape: Vec<usize>, values: Vec<f64>) -> Result<Var, NdError> {
        let t = Tensor::new(shape, values)?;
        Ok(self.push(t.shape, t.values, false, Op::Leaf))
    }

    pub fn value(&self, v: Var) -> &[f64] {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        &self.nodes[v.0].shape
    }

    pub fn grad(&self, v: Var) -> Option<&[f64]> {
        self.grads[v.0].as_deref()
    }

    /// `x[B, in] · W[out, in]ᵀ + b[out]`.
    pub fn dense(&mut self, x: Var, w: Var, b: Var) -> Result<Var, NdError> {
        let (xs, ws, bs) = (self.shape(x), self.shape(w), self.shape(b));
        if xs.len() != 2 || ws.len() != 2 || xs[1] != ws[1] {
            return Err(shape_err("dense input/weight", xs, ws));
        }
        if bs != [ws[0]] {
            return Err(shape_err("dense weight/bias", ws, bs));
        }
        let (n, din, dout) = (xs[0], xs[1], ws[0]);
        let (xv, wv, bv) = (self.value(x), self.value(w), self.value(b));
        let mut out = vec![0.0; n * dout];
        for r in 0..n {
            let xr = &xv[r * din..(r + 1) * din];
            for o in 0..dout {
                let wr = &wv[o * din..(o + 1) * din];
                out[r * dout + o] = bv[o] + dot(xr, wr);
            }
        }
        let rg = self.rg(&[x, w, b]);
        Ok(self.push(vec![n, dout], out, rg, Op::Dense { x, w, b }))
    }

    /// `x[B, Cin, L]` with `kernel[Cout, Cin, k]` and `bias[Cout]`; zero padding
    /// of `(k - 1) / 2` keeps the length at stride 1.
    pub fn conv1d(&mut self, x: Var, kernel: Var, bias: Var, stride: usize) -> Result<Var, NdError> {
        let (xs, ks, bs) = (self.shape(x), self.shape(kernel), self.shape(bias));
        if xs.len() != 3 || ks.len() != 3 || xs[1] != ks[1] {
            return Err(shape_err("conv1d input/kernel", xs, ks));
        }
        if bs != [ks[0]] {
            return Err(shape_err("conv1d kernel/bias", ks, bs));
        }
        if stride == 0 {
            return Err(NdError::ShapeMismatch("conv1d stride must be positive".into()));
        }
        let (n, cin, len) = (xs[0], xs[1], xs[2]);
        let (cout, kw) = (ks[0], ks[2]);
        let pad = (kw - 1) / 2;
        if len + 2 * pad < kw {
            return Err(shape_err("conv1d input shorter than kernel", xs, ks));
        }
        let lout = (len + 2 * pad - kw) / stride + 1;
        let (xv, kv, bv) = (self.value(x), self.value(kernel), self.value(bias));
        let mut out = vec![0.0; n * cout * lout];
        for r in 0..n {
            for co in 0..cout {
                let dst = &mut out[(r * cout + co) * lout..(r * cout + co + 1) * lout];
                dst.iter_mut().for_each(|v| *v = bv[co]);
                for ci in 0..cin {
                    let src = &xv[(r * cin + ci) * len..(r * cin + ci + 1) * len];
                    for k in 0..kw {
                        let wk = kv[(co * cin + ci) * kw + k];
                        for (t, d) in dst.iter_mut().enumerate() {
                            let pos = (t * stride + k) as isize - pad as isize;
                            if pos >= 0 && (pos as usize) < len {
                                *d += wk * src[pos as usize];
                            }
                        }
                    }
                }
            }
        }
        let rg = self.rg(&[x, kernel, bias]);
        Ok(self.push(vec![n, cout, lout], out, rg, Op::Conv1d { x, k: kernel, b: bias, stride, pad }))
    }

    /// Non-overlapping max over windows of the last axis; a trailing
    /// remainder shorter than the window is dropped.
    pub fn maxpool1d(&mut self, x: Var, window: usize) -> Result<Var, NdError> {
        let xs = self.shape(x).to_vec();
        let len = *xs.last().ok_or_else(|| NdError::ShapeMismatch("maxpool1d on a scalar".into()))?;
        if window == 0 || window > len {
            return Err(NdError::ShapeMismatch(format!("maxpool1d window {window} for shape {xs:?}")));
        }
        let lout = len / window;
        let rows = self.value(x).len() / len;
        let xv = self.value(x);
        let mut out = Vec::with_capacity(rows * lout);
        let mut argmax = Vec::with_capacity(rows * lout);
        for r in 0..rows {
            for t in 0..lout {
                let start = r * len + t * window;
                let mut best = start;
                for i in start + 1..start + window {
                    if xv[i] > xv[best] {
                        best = i;
                    }
                }
                out.push(xv[best]);
                argmax.push(best);
            }
        }
        let mut shape = xs;
        *shape.last_mut().unwrap() = lout;
        let rg = self.rg(&[x]);
        Ok(self.push(shape, out, rg, Op::MaxPool { x, argmax }))
    }

    fn unary(&mut self, x: Var, f: impl Fn(f64) -> f64, op: Op) -> Var {
        let out = self.value(x).iter().map(|&v| f(v)).collect();
        let shape = self.shape(x).to_vec();
        let rg = self.rg(&[x]);
        self.push(shape, out, rg, op)
    }

    pub fn relu(&mut self, x: Var) -> Var {
        self.unary(x, |v| v.max(0.0), Op::Relu(x))
    }

    pub fn sigmoid(&mut self, x: Var) -> Var {
        self.unary(x, crate::psychometrics::logistic, Op::Sigmoid(x))
    }

    pub fn tanh(&mut self, x: Var) -> Var {
        self.unary(x, f64::tanh, Op::Tanh(x))
    }

    /// Softmax over the last axis.
    pub fn softmax(&mut self, x: Var) -> Result<Var, NdError> {
        let len = *self.shape(x).last().ok_or_else(|| NdError::ShapeMismatch("softmax on a scalar".into()))?;
        let mut out = self.value(x).to_vec();
        if len > 0 {
            for row in out.chunks_mut(len) {
                softmax_in_place(row);
            }
        }
        let shape = self.shape(x).to_vec();
        let rg = self.rg(&[x]);
        Ok(self.push(shape, out, rg, Op::Softmax(x)))
    }

    /// Inverted dropout: survivors are scaled by 1/(1 - rate). The identity
    /// when not training or at rate 0.
    pub fn dropout<R: Rng>(&mut self, x: Var, rate: f64, training: bool, rng: &mut R) -> Result<Var, NdError> {
        if !(0.0..1.0).contains(&rate) {
            return Err(NdError::InvalidArgument(format!("dropout rate {rate} outside [0, 1)")));
        }
        if !training || rate == 0.0 {
            return Ok(x);
        }
        let scale = 1.0 / (1.0 - rate);
        let mask: Vec<f64> =
            (0..self.value(x).len()).map(|_| if rng.random::<f64>() < rate { 0.0 } else { scale }).collect();
        let out = self.value(x).iter().zip(&mask).map(|(v, m)| v * m).collect();
        let shape = self.shape(x).to_vec();
        let rg = self.rg(&[x]);
        Ok(self.push(shape, out, rg, Op::Dropout { x, mask }))
    }

    /// Concatenation along the last axis; leading axes must agree.
    pub fn concat(&mut self, xs: &[Var]) -> Result<Var, NdError> {
        let first = xs.first().ok_or_else(|| NdError::ShapeMismatch("concat of nothing".into()))?;
        let lead = self.shape(*first).split_last().map(|(_, l)| l.to_vec()).unwrap_or_default();
        let mut widths = Vec::with_capacity(xs.len());
        for &v in xs {
            let s = self.shape(v);
            match s.split_last() {
                Some((w, l)) if l == lead.as_slice() => widths.push(*w),
                _ => return Err(shape_err("concat", self.shape(*first), s)),
            }
        }
        let rows: usize = lead.iter().product();
        let total: usize = widths.iter().sum();
        let mut out = Vec::with_capacity(rows * total);
        for r in 0..rows {
            for (v, &w) in xs.iter().zip(&widths) {
                out.extend_from_slice(&self.value(*v)[r * w..(r + 1) * w]);
            }
        }
        let mut shape = lead;
        shape.push(total);
        let rg = self.rg(xs);
        Ok(self.push(shape, out, rg, Op::Concat(xs.to_vec())))
    }

    /// Mean binary cross-entropy with `p` clamped into [1e-7, 1 - 1e-7].
    pub fn bce_loss(&mut self, p: Var, y: &[f64]) -> Result<Var, NdError> {
        let pv = self.value(p);
        if pv.len() != y.len() || y.is_empty() {
            return Err(shape_err("bce_loss", self.shape(p), &[y.len()]));
        }
        let n = y.len() as f64;
        let loss = pv
            .iter()
            .zip(y)
            .map(|(&p, &y)| {
                let p = p.clamp(BCE_EPS, 1.0 - BCE_EPS);
                -(y * p.ln() + (1.0 - y) * (1.0 - p).ln())
            })
            .sum::<f64>()
            / n;
        let rg = self.rg(&[p]);
        Ok(self.push(vec![], vec![loss], rg, Op::Bce { p, y: y.to_vec() }))
    }

    /// Mean squared error against a constant target.
    pub fn mse_loss(&mut self, x: Var, target: &[f64]) -> Result<Var, NdError> {
        let xv = self.value(x);
        if xv.len() != target.len() || target.is_empty() {
            return Err(shape_err("mse_loss", self.shape(x), &[target.len()]));
        }
        let loss = xv.iter().zip(target).map(|(a, b)| (a - b).powi(2)).sum::<f64>() / target.len() as f64;
        let rg = self.rg(&[x]);
        Ok(self.push(vec![], vec![loss], rg, Op::Mse { x, target: target.to_vec() }))
    }

    pub fn sum(&mut self, x: Var) -> Var {
        let s = self.value(x).iter().sum();
        let rg = self.rg(&[x]);
        self.push(vec![], vec![s], rg, Op::Sum(x))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var, NdError> {
        if self.shape(a) != self.shape(b) {
            return Err(shape_err("add", self.shape(a), self.shape(b)));
        }
        let out = self.value(a).iter().zip(self.value(b)).map(|(x, y)| x + y).collect();
        let shape = self.shape(a).to_vec();
        let rg = self.rg(&[a, b]);
        Ok(self.push(shape, out, rg, Op::Add(a, b)))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var, NdError> {
        if self.shape(a) != self.shape(b) {
            return Err(shape_err("mul", self.shape(a), self.shape(b)));
        }
        let out = self.value(a).iter().zip(self.value(b)).map(|(x, y)| x * y).collect();
        let shape = self.shape(a).to_vec();
        let rg = self.rg(&[a, b]);
        Ok(self.push(shape, out, rg, Op::Mul(a, b)))
    }

    /// Batched matrix product `a[B, n, k] · b[B, k, m]`.
    pub fn bmm(&mut self, a: Var, b: Var) -> Result<Var, NdError> {
        let (as_, bs) = (self.shape(a), self.shape(b));
        if as_.len() != 3 || bs.len() != 3 || as_[0] != bs[0] || as_[2] != bs[1] {
            return Err(shape_err("bmm", as_, bs));
        }
        let (nb, n, k, m) = (as_[0], as_[1], as_[2], bs[2]);
        let (av, bv) = (self.value(a), self.value(b));
        let mut out = vec![0.0; nb * n * m];
        for r in 0..nb {
            let ab = &av[r * n * k..(r + 1) * n * k];
            let bb = &bv[r * k * m..(r + 1) * k * m];
            let ob = &mut out[r * n * m..(r + 1) * n * m];
            for i in 0..n {
                let orow = &mut ob[i * m..(i + 1) * m];
                for l in 0..k {
                    axpy(ab[i * k + l], &bb[l * m..(l + 1) * m], orow);
                }
            }
        }
        let rg = self.rg(&[a, b]);
        Ok(self.push(vec![nb, n, m], out, rg, Op::Bmm(a, b)))
    }

    /// Swaps the last two axes of a rank-3 value.
    pub fn transpose_last2(&mut self, x: Var) -> Result<Var, NdError> {
        let s = self.shape(x).to_vec();
        if s.len() != 3 {
            return Err(NdError::ShapeMismatch(format!("transpose_last2 needs rank 3, got {s:?}")));
        }
        let (nb, n, m) = (s[0], s[1], s[2]);
        let xv = self.value(x);
        let mut out = vec![0.0; xv.len()];
        for r in 0..nb {
            for i in 0..n {
                for j in 0..m {
                    out[r * n * m + j * n + i] = xv[r * n * m + i * m + j];
                }
            }
        }
        let rg = self.rg(&[x]);
        Ok(self.push(vec![nb, m, n], out, rg, Op::Transpose(x)))
    }

    pub fn reshape(&mut self, x: Var, shape: &[usize]) -> Result<Var, NdError> {
        if shape.iter().product::<usize>() != self.value(x).len() {
            return Err(shape_err("reshape", self.shape(x), shape));
        }
        let out = self.value(x).to_vec();
        let rg = self.rg(&[x]);
        Ok(self.push(shape.to_vec(), out, rg, Op::Reshape(x)))
    }

    /// Reverse sweep from a scalar loss. Gradients accumulate across fan-out
    /// and are read back with [`Tape::grad`].
    pub fn backward(&mut self, loss: Var) -> Result<(), NdError> {
        if self.nodes.is_empty() {
            return Err(NdError::EmptyTape);
        }
        if self.nodes[loss.0].value.len() != 1 {
            return Err(NdError::NonScalarLoss(self.nodes[loss.0].shape.clone()));
        }
        self.grads.iter_mut().for_each(|g| *g = None);
        self.grads[loss.0] = Some(vec![1.0]);
        let Tape { nodes, grads } = self;
        for idx in (0..=loss.0).rev() {
            let node = &nodes[idx];
            if !node.requires_grad {
                continue;
            }
            let Some(g) = grads[idx].take() else { continue };
            propagate(nodes, grads, node, &g);
            grads[idx] = Some(g);
        }
        Ok(())
    }

    /// Adds the gradient recorded for `v` into `t`'s slot.
    pub fn accumulate_into(&self, v: Var, t: &mut Tensor) -> Result<(), NdError> {
        match self.grad(v) {
            Some(g) => t.accumulate_grad(g),
            None => t.accumulate_grad(&vec![0.0; t.len()]),
        }
    }
}

fn slot<'a>(nodes: &[Node], grads: &'a mut [Option<Vec<f64>>], v: Var) -> Option<&'a mut [f64]> {
    let node = &nodes[v.0];
    if !node.requires_grad {
        return None;
    }
    Some(grads[v.0].get_or_insert_with(|| vec![0.0; node.value.len()]).as_mut_slice())
}

fn propagate(nodes: &[Node], grads: &mut [Option<Vec<f64>>], node: &Node, g: &[f64]) {
    match &node.op {
        Op::Leaf => {}
        Op::Dense { x, w, b } => {
            let (n, din) = (nodes[x.0].shape[0], nodes[x.0].shape[1]);
            let dout = nodes[w.0].shape[0];
            let xv = &nodes[x.0].value;
            let wv = &nodes[w.0].value;
            if let Some(gx) = slot(nodes, grads, *x) {
                for r in 0..n {
                    let gxr = &mut gx[r * din..(r + 1) * din];
                    for o in 0..dout {
                        axpy(g[r * dout + o], &wv[o * din..(o + 1) * din], gxr);
                    }
                }
            }
            if let Some(gw) = slot(nodes, grads, *w) {
                for o in 0..dout {
                    let gwr = &mut gw[o * din..(o + 1) * din];
                    for r in 0..n {
                        axpy(g[r * dout + o], &xv[r * din..(r + 1) * din], gwr);
                    }
                }
            }
            if let Some(gb) = slot(nodes, grads, *b) {
                for r in 0..n {
                    for o in 0..dout {
                        gb[o] += g[r * dout + o];
                    }
                }
            }
        }
        Op::Conv1d { x, k, b, stride, pad } => {
            let (n, cin, len) = (nodes[x.0].shape[0], nodes[x.0].shape[1], nodes[x.0].shape[2]);
            let (cout, kw) = (nodes[k.0].shape[0], nodes[k.0].shape[2]);
            let lout = node.shape[2];
            let xv = &nodes[x.0].value;
            let kv = &nodes[k.0].value;
            let tap = |t: usize, kk: usize| -> Option<usize> {
                let pos = (t * stride + kk) as isize - *pad as isize;
                (pos >= 0 && (pos as usize) < len).then_some(pos as usize)
            };
            if let Some(gx) = slot(nodes, grads, *x) {
                for r in 0..n {
                    for co in 0..cout {
                        let gr = &g[(r * cout + co) * lout..(r * cout + co + 1) * lout];
                        for ci in 0..cin {
                            let dst = &mut gx[(r * cin + ci) * len..(r * cin + ci + 1) * len];
                            for kk in 0..kw {
                                let wk = kv[(co * cin + ci) * kw + kk];
                                for (t, gv) in gr.iter().enumerate() {
                                    if let Some(p) = tap(t, kk) {
                                        dst[p] += wk * gv;
                                    }
                                }
                            }
                        }
                    }
                }
            }
            if let Some(gk) = slot(nodes, grads, *k) {
                for r in 0..n {
                    for co in 0..cout {
                        let gr = &g[(r * cout + co) * lout..(r * cout + co + 1) * lout];
                        for ci in 0..cin {
                            let src = &xv[(r * cin + ci) * len..(r * cin + ci + 1) * len];
                            for kk in 0..kw {
                                let mut acc = 0.0;
                                for (t, gv) in gr.iter().enumerate() {
                                    if let Some(p) = tap(t, kk) {
                                        acc += gv * src[p];
                                    }
                                }
                                gk[(co * cin + ci) * kw + kk] += acc;
                            }
                        }
                    }
                }
            }
            if let Some(gb) = slot(nodes, grads, *b) {
                for r in 0..n {
                    for (co, gbv) in gb.iter_mut().enumerate() {
                        *gbv += g[(r * cout + co) * lout..(r * cout + co + 1) * lout].iter().sum::<f64>();
                    }
                }
            }
        }
        Op::MaxPool { x, argmax } => {
            if let Some(gx) = slot(nodes, grads, *x) {
                for (gv, &i) in g.iter().zip(argmax) {
                    gx[i] += gv;
                }
            }
        }
        Op::Relu(x) => {
            let xv = &nodes[x.0].value;
            if let Some(gx) = slot(nodes, grads, *x) {
                for ((d, gv), &v) in gx.iter_mut().zip(g).zip(xv) {
                    if v > 0.0 {
                        *d += gv;
                    }
                }
            }
        }
        Op::Sigmoid(x) => {
            if let Some(gx) = slot(nodes, grads, *x) {
                for ((d, gv), &y) in gx.iter_mut().zip(g).zip(&node.value) {
                    *d += gv * y * (1.0 - y);
                }
            }
        }
        Op::Tanh(x) => {
            if let Some(gx) = slot(nodes, grads, *x) {
                for ((d, gv), &y) in gx.iter_mut().zip(g).zip(&node.value) {
                    *d += gv * (1.0 - y * y);
                }
            }
        }
        Op::Softmax(x) => {
            let len = *node.shape.last().unwrap();
            if let Some(gx) = slot(nodes, grads, *x) {
                for ((dx, gr), yr) in gx.chunks_mut(len).zip(g.chunks(len)).zip(node.value.chunks(len)) {
                    let inner = dot(gr, yr);
                    for ((d, gv), y) in dx.iter_mut().zip(gr).zip(yr) {
                        *d += y * (gv - inner);
                    }
                }
            }
        }
        Op::Dropout { x, mask } => {
            if let Some(gx) = slot(nodes, grads, *x) {
                for ((d, gv), m) in gx.iter_mut().zip(g).zip(mask) {
                    *d += gv * m;
                }
            }
        }
        Op::Concat(xs) => {
            let total = *node.shape.last().unwrap();
            let rows = if total == 0 { 0 } else { g.len() / total };
            let mut offset = 0;
            for v in xs {
                let w = *nodes[v.0].shape.last().unwrap();
                if let Some(gx) = slot(nodes, grads, *v) {
                    for r in 0..rows {
                        let src = &g[r * total + offset..r * total + offset + w];
                        gx[r * w..(r + 1) * w].iter_mut().zip(src).for_each(|(d, s)| *d += s);
                    }
                }
                offset += w;
            }
        }
        Op::Bce { p, y } => {
            let pv = &nodes[p.0].value;
            let n = y.len() as f64;
            if let Some(gp) = slot(nodes, grads, *p) {
                for ((d, &pr), &yy) in gp.iter_mut().zip(pv).zip(y) {
                    if (BCE_EPS..=1.0 - BCE_EPS).contains(&pr) {
                        *d += g[0] * (-(yy / pr) + (1.0 - yy) / (1.0 - pr)) / n;
                    }
                }
            }
        }
        Op::Mse { x, target } => {
            let xv = &nodes[x.0].value;
            let n = target.len() as f64;
            if let Some(gx) = slot(nodes, grads, *x) {
                for ((d, a), b) in gx.iter_mut().zip(xv).zip(target) {
                    *d += g[0] * 2.0 * (a - b) / n;
                }
            }
        }
        Op::Sum(x) => {
            if let Some(gx) = slot(nodes, grads, *x) {
                gx.iter_mut().for_each(|d| *d += g[0]);
            }
        }
        Op::Add(a, b) => {
            for v in [a, b] {
                if let Some(gv) = slot(nodes, grads, *v) {
                    gv.iter_mut().zip(g).for_each(|(d, s)| *d += s);
                }
            }
        }
        Op::Mul(a, b) => {
            let (av, bv) = (&nodes[a.0].value, &nodes[b.0].value);
            if let Some(ga) = slot(nodes, grads, *a) {
                for ((d, s), o) in ga.iter_mut().zip(g).zip(bv) {
                    *d += s * o;
                }
            }
            if let Some(gb) = slot(nodes, grads, *b) {
                for ((d, s), o) in gb.iter_mut().zip(g).zip(av) {
                    *d += s * o;
                }
            }
        }
        Op::Bmm(a, b) => {
            let (nb, n, k) = (nodes[a.0].shape[0], nodes[a.0].shape[1], nodes[a.0].shape[2]);
            let m = nodes[b.0].shape[2];
            let (av, bv) = (&nodes[a.0].value, &nodes[b.0].value);
            if let Some(ga) = slot(nodes, grads, *a) {
                for r in 0..nb {
                    for i in 0..n {
                        let gr = &g[r * n * m + i * m..r * n * m + (i + 1) * m];
                        for l in 0..k {
                            let brow = &bv[r * k * m + l * m..r * k * m + (l + 1) * m];
                            ga[r * n * k + i * k + l] += dot(gr, brow);
                        }
                    }
                }
            }
            if let Some(gb) = slot(nodes, grads, *b) {
                for r in 0..nb {
                    for i in 0..n {
                        let gr = &g[r * n * m + i * m..r * n * m + (i + 1) * m];
                        for l in 0..k {
                            let coef = av[r * n * k + i * k + l];
                            axpy(coef, gr, &mut gb[r * k * m + l * m..r * k * m + (l + 1) * m]);
                        }
                    }
                }
            }
        }
        Op::Transpose(x) => {
            let (nb, n, m) = (nodes[x.0].shape[0], nodes[x.0].shape[1], nodes[x.0].shape[2]);
            if let Some(gx) = slot(nodes, grads, *x) {
                for r in 0..nb {
                    for i in 0..n {
                        for j in 0..m {
                            gx[r * n * m + i * m + j] += g[r * n * m + j * n + i];
                        }
                    }
                }
            }
        }
        Op::Reshape(x) => {
            if let Some(gx) = slot(nodes, grads, *x) {
                gx.iter_mut().zip(g).for_each(|(d, s)| *d += s);
            }
        }
    }
}

#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[inline]
fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    y.iter_mut().zip(x).for_each(|(d, s)| *d += alpha * s);
}

pub(crate) fn softmax_in_place(row: &mut [f64]) {
    let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut total = 0.0;
    for v in row.iter_mut() {
        *v = (*v - max).exp();
        total += *v;
    }
    row.iter_mut().for_each(|v| *v /= total);
}
