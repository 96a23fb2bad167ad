//! Tape-based reverse-mode differentiation over a fixed set of operations.

use crate::error::{NetError, NetResult};
use crate::real::{gemm, Real};
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(pub usize);

#[derive(Debug, Clone)]
enum Op<R: Real> {
    Leaf,
    Reshape(Var),
    /// Same-padded stride-1 convolution; `cols` keeps the im2col matrix.
    Conv2d {
        x: Var,
        w: Var,
        b: Var,
        k: usize,
        cols: Vec<R>,
    },
    AvgPool2(Var),
    Upsample2(Var),
    ConcatRows(Vec<Var>),
    SliceRows {
        x: Var,
        start: usize,
    },
    ConcatCols(Vec<Var>),
    SliceCols {
        x: Var,
        start: usize,
    },
    Add(Var, Var),
    Scale(Var, R),
    Silu(Var),
    Tanh(Var),
    Sigmoid(Var),
    Softplus(Var),
    ExpClamp {
        x: Var,
        lo: R,
        hi: R,
    },
    MatMul {
        a: Var,
        b: Var,
        ta: bool,
        tb: bool,
    },
    SoftmaxRows(Var),
    MaskedMeanAbs {
        x: Var,
        target: Vec<R>,
        mask: Vec<bool>,
    },
    MaskedMeanSq {
        x: Var,
        target: Vec<R>,
        mask: Vec<bool>,
    },
    WeightedSum(Vec<(Var, R)>),
}

#[derive(Debug, Clone)]
struct Node<R: Real> {
    value: Tensor<R>,
    op: Op<R>,
    requires_grad: bool,
}

#[derive(Debug, Clone, Default)]
pub struct Graph<R: Real> {
    nodes: Vec<Node<R>>,
}

fn shape_err(msg: impl Into<String>) -> NetError {
    NetError::Shape(msg.into())
}

pub fn sigmoid<R: Real>(x: R) -> R {
    if x >= R::zero() {
        R::one() / (R::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (R::one() + e)
    }
}

pub fn softplus<R: Real>(x: R) -> R {
    if x > R::of(20.0) {
        x
    } else {
        x.exp().ln_1p()
    }
}

fn im2col<R: Real>(x: &[R], c: usize, h: usize, w: usize, k: usize) -> Vec<R> {
    let p = (k / 2) as isize;
    let hw = h * w;
    let mut cols = vec![R::zero(); c * k * k * hw];
    for ci in 0..c {
        let plane = &x[ci * hw..(ci + 1) * hw];
        for ky in 0..k {
            for kx in 0..k {
                let row = &mut cols[((ci * k + ky) * k + kx) * hw..][..hw];
                let (dy, dx) = (ky as isize - p, kx as isize - p);
                for y in 0..h {
                    let sy = y as isize + dy;
                    if sy < 0 || sy >= h as isize {
                        continue;
                    }
                    let x0 = (-dx).max(0) as usize;
                    let x1 = (w as isize - dx).min(w as isize).max(0) as usize;
                    for xo in x0..x1 {
                        row[y * w + xo] = plane[sy as usize * w + (xo as isize + dx) as usize];
                    }
                }
            }
        }
    }
    cols
}

fn col2im_add<R: Real>(cols: &[R], dx: &mut [R], c: usize, h: usize, w: usize, k: usize) {
    let p = (k / 2) as isize;
    let hw = h * w;
    for ci in 0..c {
        for ky in 0..k {
            for kx in 0..k {
                let row = &cols[((ci * k + ky) * k + kx) * hw..][..hw];
                let (dy, ddx) = (ky as isize - p, kx as isize - p);
                for y in 0..h {
                    let sy = y as isize + dy;
                    if sy < 0 || sy >= h as isize {
                        continue;
                    }
                    let x0 = (-ddx).max(0) as usize;
                    let x1 = (w as isize - ddx).min(w as isize).max(0) as usize;
                    for xo in x0..x1 {
                        dx[ci * hw + sy as usize * w + (xo as isize + ddx) as usize] += row[y * w + xo];
                    }
                }
            }
        }
    }
}

fn masked_count(mask: &[bool]) -> NetResult<usize> {
    let n = mask.iter().filter(|m| **m).count();
    if n == 0 {
        Err(NetError::EmptyMask)
    } else {
        Ok(n)
    }
}

impl<R: Real> Graph<R> {
    pub fn new() -> Self {
        Self { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Tensor<R>, op: Op<R>, inputs: &[Var]) -> Var {
        let requires_grad = inputs.iter().any(|v| self.nodes[v.0].requires_grad);
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    /// Constant input, no gradient.
    pub fn input(&mut self, t: Tensor<R>) -> Var {
        self.nodes.push(Node {
            value: t,
            op: Op::Leaf,
            requires_grad: false,
        });
        Var(self.nodes.len() - 1)
    }

    /// Trainable leaf; its gradient is kept after `backward`.
    pub fn param(&mut self, t: Tensor<R>) -> Var {
        self.nodes.push(Node {
            value: t,
            op: Op::Leaf,
            requires_grad: true,
        });
        Var(self.nodes.len() - 1)
    }

    pub fn value(&self, v: Var) -> &Tensor<R> {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        &self.nodes[v.0].value.shape
    }

    pub fn grad(&self, v: Var) -> Option<&[R]> {
        self.nodes[v.0].value.grad.as_deref()
    }

    fn data(&self, v: Var) -> &[R] {
        &self.nodes[v.0].value.data
    }

    pub fn reshape(&mut self, x: Var, shape: &[usize]) -> NetResult<Var> {
        let t = Tensor::new(shape, self.data(x).to_vec())?;
        Ok(self.push(t, Op::Reshape(x), &[x]))
    }

    fn chw(&self, x: Var, what: &str) -> NetResult<(usize, usize, usize)> {
        match self.shape(x) {
            [c, h, w] => Ok((*c, *h, *w)),
            s => Err(shape_err(format!("{what} expects [C, H, W], got {s:?}"))),
        }
    }

    /// `w`: `[cout, cin, k, k]` with odd `k`, `b`: `[cout]`.
    pub fn conv2d(&mut self, x: Var, w: Var, b: Var) -> NetResult<Var> {
        let (cin, h, wd) = self.chw(x, "conv2d")?;
        let (cout, k) = match self.shape(w) {
            [o, i, k1, k2] if *i == cin && k1 == k2 && k1 % 2 == 1 => (*o, *k1),
            s => return Err(shape_err(format!("conv weight {s:?} does not fit {cin} input channels"))),
        };
        if self.shape(b) != [cout] {
            return Err(shape_err(format!("conv bias {:?} for {cout} outputs", self.shape(b))));
        }
        let hw = h * wd;
        let cols = im2col(self.data(x), cin, h, wd, k);
        let mut out = vec![R::zero(); cout * hw];
        for (o, row) in out.chunks_exact_mut(hw).enumerate() {
            row.fill(self.data(b)[o]);
        }
        gemm(false, false, cout, hw, cin * k * k, R::one(), self.data(w), &cols, R::one(), &mut out);
        let t = Tensor::new(&[cout, h, wd], out)?;
        Ok(self.push(t, Op::Conv2d { x, w, b, k, cols }, &[x, w, b]))
    }

    pub fn avg_pool2(&mut self, x: Var) -> NetResult<Var> {
        let (c, h, w) = self.chw(x, "avg_pool2")?;
        if h % 2 != 0 || w % 2 != 0 {
            return Err(shape_err(format!("avg_pool2 needs even sizes, got {h}x{w}")));
        }
        let (ho, wo) = (h / 2, w / 2);
        let src = self.data(x);
        let q = R::of(0.25);
        let mut out = vec![R::zero(); c * ho * wo];
        for ci in 0..c {
            for y in 0..ho {
                for xx in 0..wo {
                    let base = ci * h * w;
                    let s = src[base + 2 * y * w + 2 * xx]
                        + src[base + 2 * y * w + 2 * xx + 1]
                        + src[base + (2 * y + 1) * w + 2 * xx]
                        + src[base + (2 * y + 1) * w + 2 * xx + 1];
                    out[(ci * ho + y) * wo + xx] = s * q;
                }
            }
        }
        let t = Tensor::new(&[c, ho, wo], out)?;
        Ok(self.push(t, Op::AvgPool2(x), &[x]))
    }

    /// Nearest-neighbour ×2.
    pub fn upsample2(&mut self, x: Var) -> NetResult<Var> {
        let (c, h, w) = self.chw(x, "upsample2")?;
        let (ho, wo) = (2 * h, 2 * w);
        let src = self.data(x);
        let mut out = vec![R::zero(); c * ho * wo];
        for ci in 0..c {
            for y in 0..ho {
                for xx in 0..wo {
                    out[(ci * ho + y) * wo + xx] = src[(ci * h + y / 2) * w + xx / 2];
                }
            }
        }
        let t = Tensor::new(&[c, ho, wo], out)?;
        Ok(self.push(t, Op::Upsample2(x), &[x]))
    }

    /// Concatenation along the first axis; trailing shapes must agree.
    pub fn concat_rows(&mut self, parts: &[Var]) -> NetResult<Var> {
        let first = parts.first().ok_or_else(|| shape_err("concat of nothing"))?;
        let tail = self.shape(*first)[1..].to_vec();
        let mut rows = 0;
        let mut data = Vec::new();
        for p in parts {
            let s = self.shape(*p);
            if s[1..] != tail[..] {
                return Err(shape_err(format!("concat_rows: {s:?} vs trailing {tail:?}")));
            }
            rows += s[0];
            data.extend_from_slice(self.data(*p));
        }
        let mut shape = vec![rows];
        shape.extend_from_slice(&tail);
        let t = Tensor::new(&shape, data)?;
        Ok(self.push(t, Op::ConcatRows(parts.to_vec()), parts))
    }

    pub fn slice_rows(&mut self, x: Var, start: usize, len: usize) -> NetResult<Var> {
        let s = self.shape(x).to_vec();
        if s.is_empty() || start + len > s[0] {
            return Err(shape_err(format!("slice_rows {start}+{len} of {s:?}")));
        }
        let inner: usize = s[1..].iter().product();
        let data = self.data(x)[start * inner..(start + len) * inner].to_vec();
        let mut shape = s.clone();
        shape[0] = len;
        let t = Tensor::new(&shape, data)?;
        Ok(self.push(t, Op::SliceRows { x, start }, &[x]))
    }

    fn matrix(&self, x: Var, what: &str) -> NetResult<(usize, usize)> {
        match self.shape(x) {
            [r, c] => Ok((*r, *c)),
            s => Err(shape_err(format!("{what} expects a matrix, got {s:?}"))),
        }
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> NetResult<Var> {
        let first = parts.first().ok_or_else(|| shape_err("concat of nothing"))?;
        let (rows, _) = self.matrix(*first, "concat_cols")?;
        let mut widths = Vec::with_capacity(parts.len());
        for p in parts {
            let (r, c) = self.matrix(*p, "concat_cols")?;
            if r != rows {
                return Err(shape_err(format!("concat_cols: {r} rows vs {rows}")));
            }
            widths.push(c);
        }
        let total: usize = widths.iter().sum();
        let mut data = vec![R::zero(); rows * total];
        let mut off = 0;
        for (p, wdt) in parts.iter().zip(&widths) {
            let src = self.data(*p);
            for r in 0..rows {
                data[r * total + off..r * total + off + wdt].copy_from_slice(&src[r * wdt..(r + 1) * wdt]);
            }
            off += wdt;
        }
        let t = Tensor::new(&[rows, total], data)?;
        Ok(self.push(t, Op::ConcatCols(parts.to_vec()), parts))
    }

    pub fn slice_cols(&mut self, x: Var, start: usize, len: usize) -> NetResult<Var> {
        let (rows, cols) = self.matrix(x, "slice_cols")?;
        if start + len > cols {
            return Err(shape_err(format!("slice_cols {start}+{len} of {cols}")));
        }
        let src = self.data(x);
        let mut data = Vec::with_capacity(rows * len);
        for r in 0..rows {
            data.extend_from_slice(&src[r * cols + start..r * cols + start + len]);
        }
        let t = Tensor::new(&[rows, len], data)?;
        Ok(self.push(t, Op::SliceCols { x, start }, &[x]))
    }

    pub fn add(&mut self, a: Var, b: Var) -> NetResult<Var> {
        if self.shape(a) != self.shape(b) {
            return Err(shape_err(format!("add: {:?} vs {:?}", self.shape(a), self.shape(b))));
        }
        let data = self.data(a).iter().zip(self.data(b)).map(|(x, y)| *x + *y).collect();
        let t = Tensor::new(&self.shape(a).to_vec(), data)?;
        Ok(self.push(t, Op::Add(a, b), &[a, b]))
    }

    pub fn scale(&mut self, x: Var, s: R) -> Var {
        let data = self.data(x).iter().map(|v| *v * s).collect();
        let t = Tensor::new(&self.shape(x).to_vec(), data).unwrap();
        self.push(t, Op::Scale(x, s), &[x])
    }

    fn map(&mut self, x: Var, op: Op<R>, f: impl Fn(R) -> R) -> Var {
        let data = self.data(x).iter().map(|v| f(*v)).collect();
        let t = Tensor::new(&self.shape(x).to_vec(), data).unwrap();
        self.push(t, op, &[x])
    }

    pub fn silu(&mut self, x: Var) -> Var {
        self.map(x, Op::Silu(x), |v| v * sigmoid(v))
    }

    pub fn tanh(&mut self, x: Var) -> Var {
        self.map(x, Op::Tanh(x), |v| v.tanh())
    }

    pub fn sigmoid(&mut self, x: Var) -> Var {
        self.map(x, Op::Sigmoid(x), sigmoid)
    }

    pub fn softplus(&mut self, x: Var) -> Var {
        self.map(x, Op::Softplus(x), softplus)
    }

    /// `exp(clamp(x, lo, hi))`; zero gradient outside the clamp range.
    pub fn exp_clamp(&mut self, x: Var, lo: R, hi: R) -> Var {
        self.map(x, Op::ExpClamp { x, lo, hi }, |v| v.max(lo).min(hi).exp())
    }

    /// `op(a)·op(b)` for matrices, `op` transposing when the flag is set.
    pub fn matmul(&mut self, a: Var, b: Var, ta: bool, tb: bool) -> NetResult<Var> {
        let (ar, ac) = self.matrix(a, "matmul")?;
        let (br, bc) = self.matrix(b, "matmul")?;
        let (m, k) = if ta { (ac, ar) } else { (ar, ac) };
        let (k2, n) = if tb { (bc, br) } else { (br, bc) };
        if k != k2 {
            return Err(shape_err(format!("matmul inner dims {k} vs {k2}")));
        }
        let mut out = vec![R::zero(); m * n];
        gemm(ta, tb, m, n, k, R::one(), self.data(a), self.data(b), R::zero(), &mut out);
        let t = Tensor::new(&[m, n], out)?;
        Ok(self.push(t, Op::MatMul { a, b, ta, tb }, &[a, b]))
    }

    pub fn softmax_rows(&mut self, x: Var) -> NetResult<Var> {
        let (rows, cols) = self.matrix(x, "softmax_rows")?;
        let src = self.data(x);
        let mut out = vec![R::zero(); rows * cols];
        for r in 0..rows {
            let row = &src[r * cols..(r + 1) * cols];
            let m = row.iter().fold(R::neg_infinity(), |a, b| a.max(*b));
            let dst = &mut out[r * cols..(r + 1) * cols];
            let mut s = R::zero();
            for (d, v) in dst.iter_mut().zip(row) {
                *d = (*v - m).exp();
                s = s + *d;
            }
            for d in dst.iter_mut() {
                *d = *d / s;
            }
        }
        let t = Tensor::new(&[rows, cols], out)?;
        Ok(self.push(t, Op::SoftmaxRows(x), &[x]))
    }

    fn masked_setup(&self, x: Var, target: &[R], mask: &[bool]) -> NetResult<(usize, usize)> {
        let (c, hw) = self.value(x).as_matrix();
        if target.len() != c * hw || mask.len() != hw {
            return Err(shape_err(format!(
                "masked loss: {c}x{hw} values, {} targets, {} mask entries",
                target.len(),
                mask.len()
            )));
        }
        Ok((c, masked_count(mask)?))
    }

    /// Mean of `|x - target|` over masked texels and all channels; `x` is
    /// channel-major `[C, …]` and `mask` covers one channel plane.
    pub fn masked_mean_abs(&mut self, x: Var, target: Vec<R>, mask: Vec<bool>) -> NetResult<Var> {
        let (c, n) = self.masked_setup(x, &target, &mask)?;
        let hw = mask.len();
        let src = self.data(x);
        let mut s = R::zero();
        for ci in 0..c {
            for (i, m) in mask.iter().enumerate() {
                if *m {
                    s = s + (src[ci * hw + i] - target[ci * hw + i]).abs();
                }
            }
        }
        let v = s / R::of((n * c) as f64);
        Ok(self.push(Tensor::scalar(v), Op::MaskedMeanAbs { x, target, mask }, &[x]))
    }

    /// Mean over masked texels of the squared norm of `x - target` across channels.
    pub fn masked_mean_sq(&mut self, x: Var, target: Vec<R>, mask: Vec<bool>) -> NetResult<Var> {
        let (c, n) = self.masked_setup(x, &target, &mask)?;
        let hw = mask.len();
        let src = self.data(x);
        let mut s = R::zero();
        for ci in 0..c {
            for (i, m) in mask.iter().enumerate() {
                if *m {
                    let d = src[ci * hw + i] - target[ci * hw + i];
                    s = s + d * d;
                }
            }
        }
        let v = s / R::of(n as f64);
        Ok(self.push(Tensor::scalar(v), Op::MaskedMeanSq { x, target, mask }, &[x]))
    }

    pub fn weighted_sum(&mut self, terms: &[(Var, R)]) -> NetResult<Var> {
        let mut s = R::zero();
        for (v, w) in terms {
            if self.value(*v).len() != 1 {
                return Err(shape_err("weighted_sum takes scalars"));
            }
            s = s + self.data(*v)[0] * *w;
        }
        let inputs: Vec<Var> = terms.iter().map(|t| t.0).collect();
        Ok(self.push(Tensor::scalar(s), Op::WeightedSum(terms.to_vec()), &inputs))
    }

    /// Reverse sweep from the scalar `out`; gradients land in every node
    /// that depends on a parameter.
    pub fn backward(&mut self, out: Var) -> NetResult<()> {
        if self.value(out).len() != 1 {
            return Err(shape_err("backward starts from a scalar"));
        }
        let mut grads: Vec<Option<Vec<R>>> = vec![None; self.nodes.len()];
        grads[out.0] = Some(vec![R::one()]);
        for i in (0..=out.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            if !self.nodes[i].requires_grad {
                continue;
            }
            self.propagate(i, &g, &mut grads);
            self.nodes[i].value.grad = Some(g);
        }
        Ok(())
    }

    fn acc<'g>(&self, grads: &'g mut [Option<Vec<R>>], v: Var) -> Option<&'g mut Vec<R>> {
        if !self.nodes[v.0].requires_grad {
            return None;
        }
        let n = self.nodes[v.0].value.len();
        Some(grads[v.0].get_or_insert_with(|| vec![R::zero(); n]))
    }

    fn propagate(&self, i: usize, g: &[R], grads: &mut [Option<Vec<R>>]) {
        let y = &self.nodes[i].value.data;
        match &self.nodes[i].op {
            Op::Leaf => {}
            Op::Reshape(x) => {
                if let Some(dx) = self.acc(grads, *x) {
                    dx.iter_mut().zip(g).for_each(|(d, v)| *d = *d + *v);
                }
            }
            Op::Conv2d { x, w, b, k, cols } => {
                let (cin, h, wd) = self.chw(*x, "conv2d").unwrap();
                let hw = h * wd;
                let cout = self.shape(*w)[0];
                let kk = cin * k * k;
                if let Some(dw) = self.acc(grads, *w) {
                    gemm(false, true, cout, kk, hw, R::one(), g, cols, R::one(), dw);
                }
                if let Some(db) = self.acc(grads, *b) {
                    for (o, d) in db.iter_mut().enumerate() {
                        *d = *d + g[o * hw..(o + 1) * hw].iter().copied().sum::<R>();
                    }
                }
                if self.nodes[x.0].requires_grad {
                    let mut dcols = vec![R::zero(); kk * hw];
                    gemm(true, false, kk, hw, cout, R::one(), self.data(*w), g, R::zero(), &mut dcols);
                    let dx = self.acc(grads, *x).unwrap();
                    col2im_add(&dcols, dx, cin, h, wd, *k);
                }
            }
            Op::AvgPool2(x) => {
                let (c, h, w) = self.chw(*x, "avg_pool2").unwrap();
                let (ho, wo) = (h / 2, w / 2);
                if let Some(dx) = self.acc(grads, *x) {
                    let q = R::of(0.25);
                    for ci in 0..c {
                        for yy in 0..h {
                            for xx in 0..w {
                                let gi = (ci * ho + yy / 2) * wo + xx / 2;
                                let d = &mut dx[(ci * h + yy) * w + xx];
                                *d = *d + g[gi] * q;
                            }
                        }
                    }
                }
            }
            Op::Upsample2(x) => {
                let (c, h, w) = self.chw(*x, "upsample2").unwrap();
                let (ho, wo) = (2 * h, 2 * w);
                if let Some(dx) = self.acc(grads, *x) {
                    for ci in 0..c {
                        for yy in 0..ho {
                            for xx in 0..wo {
                                let d = &mut dx[(ci * h + yy / 2) * w + xx / 2];
                                *d = *d + g[(ci * ho + yy) * wo + xx];
                            }
                        }
                    }
                }
            }
            Op::ConcatRows(parts) => {
                let mut off = 0;
                for p in parts {
                    let n = self.value(*p).len();
                    if let Some(dp) = self.acc(grads, *p) {
                        dp.iter_mut().zip(&g[off..off + n]).for_each(|(d, v)| *d = *d + *v);
                    }
                    off += n;
                }
            }
            Op::SliceRows { x, start } => {
                let inner: usize = self.shape(*x)[1..].iter().product();
                if let Some(dx) = self.acc(grads, *x) {
                    dx[start * inner..start * inner + g.len()]
                        .iter_mut()
                        .zip(g)
                        .for_each(|(d, v)| *d = *d + *v);
                }
            }
            Op::ConcatCols(parts) => {
                let total = self.shape(Var(i))[1];
                let rows = self.shape(Var(i))[0];
                let mut off = 0;
                for p in parts {
                    let wdt = self.shape(*p)[1];
                    if let Some(dp) = self.acc(grads, *p) {
                        for r in 0..rows {
                            for c in 0..wdt {
                                dp[r * wdt + c] = dp[r * wdt + c] + g[r * total + off + c];
                            }
                        }
                    }
                    off += wdt;
                }
            }
            Op::SliceCols { x, start } => {
                let (rows, cols) = (self.shape(*x)[0], self.shape(*x)[1]);
                let len = self.shape(Var(i))[1];
                if let Some(dx) = self.acc(grads, *x) {
                    for r in 0..rows {
                        for c in 0..len {
                            dx[r * cols + start + c] = dx[r * cols + start + c] + g[r * len + c];
                        }
                    }
                }
            }
            Op::Add(a, b) => {
                for v in [a, b] {
                    if let Some(d) = self.acc(grads, *v) {
                        d.iter_mut().zip(g).for_each(|(d, v)| *d = *d + *v);
                    }
                }
            }
            Op::Scale(x, s) => {
                if let Some(dx) = self.acc(grads, *x) {
                    dx.iter_mut().zip(g).for_each(|(d, v)| *d = *d + *v * *s);
                }
            }
            Op::Silu(x) => {
                let xs = self.data(*x);
                if let Some(dx) = self.acc(grads, *x) {
                    for ((d, v), gv) in dx.iter_mut().zip(xs).zip(g) {
                        let s = sigmoid(*v);
                        *d = *d + *gv * s * (R::one() + *v * (R::one() - s));
                    }
                }
            }
            Op::Tanh(x) => {
                if let Some(dx) = self.acc(grads, *x) {
                    for ((d, yv), gv) in dx.iter_mut().zip(y).zip(g) {
                        *d = *d + *gv * (R::one() - *yv * *yv);
                    }
                }
            }
            Op::Sigmoid(x) => {
                if let Some(dx) = self.acc(grads, *x) {
                    for ((d, yv), gv) in dx.iter_mut().zip(y).zip(g) {
                        *d = *d + *gv * *yv * (R::one() - *yv);
                    }
                }
            }
            Op::Softplus(x) => {
                let xs = self.data(*x);
                if let Some(dx) = self.acc(grads, *x) {
                    for ((d, v), gv) in dx.iter_mut().zip(xs).zip(g) {
                        *d = *d + *gv * sigmoid(*v);
                    }
                }
            }
            Op::ExpClamp { x, lo, hi } => {
                let xs = self.data(*x);
                if let Some(dx) = self.acc(grads, *x) {
                    for (((d, v), yv), gv) in dx.iter_mut().zip(xs).zip(y).zip(g) {
                        if *v > *lo && *v < *hi {
                            *d = *d + *gv * *yv;
                        }
                    }
                }
            }
            Op::MatMul { a, b, ta, tb } => {
                let (ar, ac) = (self.shape(*a)[0], self.shape(*a)[1]);
                let (m, k) = if *ta { (ac, ar) } else { (ar, ac) };
                let n = self.shape(Var(i))[1];
                if self.nodes[a.0].requires_grad {
                    let bd = self.data(*b);
                    let da = self.acc(grads, *a).unwrap();
                    if *ta {
                        gemm(*tb, true, k, m, n, R::one(), bd, g, R::one(), da);
                    } else {
                        gemm(false, !*tb, m, k, n, R::one(), g, bd, R::one(), da);
                    }
                }
                if self.nodes[b.0].requires_grad {
                    let ad = self.data(*a);
                    let db = self.acc(grads, *b).unwrap();
                    if *tb {
                        gemm(true, *ta, n, k, m, R::one(), g, ad, R::one(), db);
                    } else {
                        gemm(!*ta, false, k, n, m, R::one(), ad, g, R::one(), db);
                    }
                }
            }
            Op::SoftmaxRows(x) => {
                let cols = self.shape(Var(i))[1];
                if let Some(dx) = self.acc(grads, *x) {
                    for ((dr, yr), gr) in dx.chunks_exact_mut(cols).zip(y.chunks_exact(cols)).zip(g.chunks_exact(cols)) {
                        let dot: R = yr.iter().zip(gr).map(|(a, b)| *a * *b).sum();
                        for ((d, yv), gv) in dr.iter_mut().zip(yr).zip(gr) {
                            *d = *d + *yv * (*gv - dot);
                        }
                    }
                }
            }
            Op::MaskedMeanAbs { x, target, mask } => {
                let hw = mask.len();
                let c = target.len() / hw;
                let n = mask.iter().filter(|m| **m).count();
                let s = g[0] / R::of((n * c) as f64);
                let xs = self.data(*x);
                if let Some(dx) = self.acc(grads, *x) {
                    for ci in 0..c {
                        for (t, m) in mask.iter().enumerate() {
                            let j = ci * hw + t;
                            if *m {
                                let diff = xs[j] - target[j];
                                if diff > R::zero() {
                                    dx[j] = dx[j] + s;
                                } else if diff < R::zero() {
                                    dx[j] = dx[j] - s;
                                }
                            }
                        }
                    }
                }
            }
            Op::MaskedMeanSq { x, target, mask } => {
                let hw = mask.len();
                let c = target.len() / hw;
                let n = mask.iter().filter(|m| **m).count();
                let s = R::of(2.0) * g[0] / R::of(n as f64);
                let xs = self.data(*x);
                if let Some(dx) = self.acc(grads, *x) {
                    for ci in 0..c {
                        for (t, m) in mask.iter().enumerate() {
                            let j = ci * hw + t;
                            if *m {
                                dx[j] = dx[j] + s * (xs[j] - target[j]);
                            }
                        }
                    }
                }
            }
            Op::WeightedSum(terms) => {
                for (v, w) in terms {
                    if let Some(d) = self.acc(grads, *v) {
                        d[0] = d[0] + g[0] * *w;
                    }
                }
            }
        }
    }
}
