use super::ops::{self, ConvGeom, Pad4, SepGeom};
use super::{Float, Tensor};
use crate::error::{Error, Result};

/// Handle to a node of a [`Graph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug)]
enum Op<T> {
    Leaf,
    Conv2d { input: Var, weight: Var, bias: Option<Var>, geom: ConvGeom },
    Relu(Var),
    AvgPool2(Var),
    Upsample2(Var),
    Concat { inputs: Vec<Var>, axis: usize },
    Narrow { input: Var, axis: usize, start: usize },
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, T),
    Offset(Var),
    Abs(Var),
    Square(Var),
    Sum(Var),
    Mean(Var),
    ReplicatePad { input: Var, pad: Pad4 },
    Separable { frame: Var, kv: Var, kh: Var, geom: SepGeom },
}

#[derive(Debug)]
struct Node<T> {
    value: Tensor<T>,
    op: Op<T>,
    requires_grad: bool,
}

/// A define-by-run computation record.
///
/// Nodes are appended in evaluation order, so the node list is already a
/// topological order and backward is a single reverse sweep.
#[derive(Debug, Default)]
pub struct Graph<T> {
    nodes: Vec<Node<T>>,
    grads: Vec<Option<Vec<T>>>,
    consumed: bool,
}

fn outer_inner(shape: &[usize], axis: usize) -> (usize, usize) {
    (shape[..axis].iter().product(), shape[axis + 1..].iter().product())
}

impl<T: Float> Graph<T> {
    pub fn new() -> Self {
        Self { nodes: Vec::new(), grads: Vec::new(), consumed: false }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Adds a constant input.
    pub fn leaf(&mut self, value: Tensor<T>) -> Var {
        self.push(value, Op::Leaf, false)
    }

    /// Adds an input whose gradient is wanted.
    pub fn param(&mut self, value: Tensor<T>) -> Var {
        self.push(value, Op::Leaf, true)
    }

    pub fn value(&self, v: Var) -> &Tensor<T> {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    /// Gradient of the last [`backward`](Self::backward) loss w.r.t. `v`.
    pub fn grad(&self, v: Var) -> Option<Tensor<T>> {
        let g = self.grads.get(v.0)?.as_ref()?;
        Some(Tensor::new(self.nodes[v.0].value.shape(), g.clone()).expect("grad shape"))
    }

    /// Moves a gradient out of the graph, zero-filled when the loss did not
    /// depend on `v`.
    pub fn take_grad(&mut self, v: Var) -> Tensor<T> {
        let shape = self.nodes[v.0].value.shape().to_vec();
        match self.grads.get_mut(v.0).and_then(Option::take) {
            Some(g) => Tensor::new(&shape, g).expect("grad shape"),
            None => Tensor::zeros(&shape),
        }
    }

    fn push(&mut self, value: Tensor<T>, op: Op<T>, requires_grad: bool) -> Var {
        self.nodes.push(Node { value, op, requires_grad });
        Var(self.nodes.len() - 1)
    }

    fn any_grad(&self, vars: &[Var]) -> bool {
        vars.iter().any(|v| self.nodes[v.0].requires_grad)
    }

    fn dims4(&self, op: &str, v: Var) -> Result<(usize, usize, usize, usize)> {
        self.value(v)
            .dims4()
            .map_err(|_| Error::Shape(format!("{op}: expected [N, C, H, W] input, got {:?}", self.shape(v))))
    }

    fn same_shape(&self, op: &str, a: Var, b: Var) -> Result<()> {
        if self.shape(a) != self.shape(b) {
            return Err(Error::Shape(format!("{op}: {:?} vs {:?}", self.shape(a), self.shape(b))));
        }
        Ok(())
    }

    /// 2D convolution with zero padding. `weight` is `[C_out, C_in, kh, kw]`,
    /// `bias` is `[C_out]`.
    pub fn conv2d(&mut self, input: Var, weight: Var, bias: Option<Var>, stride: usize, padding: usize) -> Result<Var> {
        let (n, c_in, h, w) = self.dims4("conv2d", input)?;
        let (c_out, wc_in, kh, kw) = match self.shape(weight)[..] {
            [a, b, c, d] => (a, b, c, d),
            _ => return Err(Error::Shape(format!("conv2d: weight shape {:?} is not rank 4", self.shape(weight)))),
        };
        if wc_in != c_in {
            return Err(Error::Shape(format!(
                "conv2d: input {:?} has {c_in} channels, weight {:?} expects {wc_in}",
                self.shape(input),
                self.shape(weight)
            )));
        }
        if stride == 0 || h + 2 * padding < kh || w + 2 * padding < kw {
            return Err(Error::Shape(format!(
                "conv2d: kernel {kh}x{kw} (stride {stride}, padding {padding}) does not fit input {:?}",
                self.shape(input)
            )));
        }
        if let Some(b) = bias {
            if self.shape(b) != [c_out] {
                return Err(Error::Shape(format!("conv2d: bias {:?} for {c_out} output channels", self.shape(b))));
            }
        }
        let geom = ConvGeom { n, c_in, h, w, c_out, kh, kw, stride, padding };
        let out = ops::conv2d_forward(
            self.value(input).data(),
            self.value(weight).data(),
            bias.map(|b| self.value(b).data()),
            &geom,
        );
        let value = Tensor::new(&[n, c_out, geom.out_h(), geom.out_w()], out)?;
        let mut deps = vec![input, weight];
        deps.extend(bias);
        let rg = self.any_grad(&deps);
        Ok(self.push(value, Op::Conv2d { input, weight, bias, geom }, rg))
    }

    pub fn relu(&mut self, x: Var) -> Var {
        let value = self.value(x).map(|v| v.max(T::zero()));
        let rg = self.any_grad(&[x]);
        self.push(value, Op::Relu(x), rg)
    }

    /// 2×2 average pooling with stride 2.
    pub fn avg_pool2(&mut self, x: Var) -> Result<Var> {
        let (n, c, h, w) = self.dims4("avg_pool2", x)?;
        if h % 2 != 0 || w % 2 != 0 {
            return Err(Error::Shape(format!("avg_pool2: spatial size {h}x{w} is not even")));
        }
        let out = ops::avg_pool2_forward(self.value(x).data(), n * c, h, w);
        let value = Tensor::new(&[n, c, h / 2, w / 2], out)?;
        let rg = self.any_grad(&[x]);
        Ok(self.push(value, Op::AvgPool2(x), rg))
    }

    /// Bilinear ×2 upsampling (half-pixel centers, clamped edges).
    pub fn upsample2(&mut self, x: Var) -> Result<Var> {
        let (n, c, h, w) = self.dims4("upsample2", x)?;
        let out = ops::upsample2_forward(self.value(x).data(), n * c, h, w);
        let value = Tensor::new(&[n, c, 2 * h, 2 * w], out)?;
        let rg = self.any_grad(&[x]);
        Ok(self.push(value, Op::Upsample2(x), rg))
    }

    /// Concatenates along `axis`; all other extents must agree.
    pub fn concat(&mut self, inputs: &[Var], axis: usize) -> Result<Var> {
        let first = *inputs.first().ok_or_else(|| Error::Shape("concat: no inputs".into()))?;
        let base = self.shape(first).to_vec();
        if axis >= base.len() {
            return Err(Error::Shape(format!("concat: axis {axis} out of range for {base:?}")));
        }
        let mut total = 0;
        for &v in inputs {
            let s = self.shape(v);
            let compatible = s.len() == base.len()
                && s.iter().zip(&base).enumerate().all(|(i, (a, b))| i == axis || a == b);
            if !compatible {
                return Err(Error::Shape(format!("concat along {axis}: {base:?} vs {s:?}")));
            }
            total += s[axis];
        }
        let (outer, inner) = outer_inner(&base, axis);
        let mut data = Vec::with_capacity(outer * total * inner);
        for o in 0..outer {
            for &v in inputs {
                let len = self.shape(v)[axis] * inner;
                data.extend_from_slice(&self.value(v).data()[o * len..(o + 1) * len]);
            }
        }
        let mut shape = base;
        shape[axis] = total;
        let value = Tensor::new(&shape, data)?;
        let rg = self.any_grad(inputs);
        Ok(self.push(value, Op::Concat { inputs: inputs.to_vec(), axis }, rg))
    }

    /// Slices `len` entries starting at `start` along `axis`.
    pub fn narrow(&mut self, x: Var, axis: usize, start: usize, len: usize) -> Result<Var> {
        let shape = self.shape(x).to_vec();
        if axis >= shape.len() || len == 0 || start + len > shape[axis] {
            return Err(Error::Shape(format!("narrow: [{start}, {}) along axis {axis} of {shape:?}", start + len)));
        }
        let (outer, inner) = outer_inner(&shape, axis);
        let src = self.value(x).data();
        let mut data = Vec::with_capacity(outer * len * inner);
        for o in 0..outer {
            let base = (o * shape[axis] + start) * inner;
            data.extend_from_slice(&src[base..base + len * inner]);
        }
        let mut out_shape = shape;
        out_shape[axis] = len;
        let value = Tensor::new(&out_shape, data)?;
        let rg = self.any_grad(&[x]);
        Ok(self.push(value, Op::Narrow { input: x, axis, start }, rg))
    }

    /// Spatial crop of an `[N, C, H, W]` tensor.
    pub fn crop(&mut self, x: Var, top: usize, left: usize, height: usize, width: usize) -> Result<Var> {
        self.dims4("crop", x)?;
        let rows = self.narrow(x, 2, top, height)?;
        self.narrow(rows, 3, left, width)
    }

    fn binary(&mut self, name: &str, a: Var, b: Var, f: impl Fn(T, T) -> T, op: Op<T>) -> Result<Var> {
        self.same_shape(name, a, b)?;
        let data = self.value(a).data().iter().zip(self.value(b).data()).map(|(&x, &y)| f(x, y)).collect();
        let value = Tensor::new(self.shape(a), data)?;
        let rg = self.any_grad(&[a, b]);
        Ok(self.push(value, op, rg))
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

    pub fn scale(&mut self, x: Var, factor: T) -> Var {
        let value = self.value(x).map(|v| v * factor);
        let rg = self.any_grad(&[x]);
        self.push(value, Op::Scale(x, factor), rg)
    }

    pub fn add_scalar(&mut self, x: Var, offset: T) -> Var {
        let value = self.value(x).map(|v| v + offset);
        let rg = self.any_grad(&[x]);
        self.push(value, Op::Offset(x), rg)
    }

    pub fn abs(&mut self, x: Var) -> Var {
        let value = self.value(x).map(|v| v.abs());
        let rg = self.any_grad(&[x]);
        self.push(value, Op::Abs(x), rg)
    }

    pub fn square(&mut self, x: Var) -> Var {
        let value = self.value(x).map(|v| v * v);
        let rg = self.any_grad(&[x]);
        self.push(value, Op::Square(x), rg)
    }

    pub fn sum(&mut self, x: Var) -> Var {
        let s = self.value(x).data().iter().copied().sum();
        let rg = self.any_grad(&[x]);
        self.push(Tensor::scalar(s), Op::Sum(x), rg)
    }

    pub fn mean(&mut self, x: Var) -> Var {
        let t = self.value(x);
        let s: T = t.data().iter().copied().sum();
        let m = s / T::from_usize(t.len()).unwrap();
        let rg = self.any_grad(&[x]);
        self.push(Tensor::scalar(m), Op::Mean(x), rg)
    }

    /// Edge-replicating spatial padding `(top, bottom, left, right)`.
    pub fn replicate_pad(&mut self, x: Var, pad: (usize, usize, usize, usize)) -> Result<Var> {
        let (n, c, h, w) = self.dims4("replicate_pad", x)?;
        let out = ops::replicate_pad_forward(self.value(x).data(), n * c, h, w, pad);
        let value = Tensor::new(&[n, c, h + pad.0 + pad.1, w + pad.2 + pad.3], out)?;
        let rg = self.any_grad(&[x]);
        Ok(self.push(value, Op::ReplicatePad { input: x, pad }, rg))
    }

    /// Spatially varying separable filter. `frame` is `[N, C, H, W]`; `kv`
    /// and `kh` are `[N, K, H, W]` holding the vertical and horizontal 1D
    /// kernel of every pixel. Samples outside the frame replicate the edge.
    pub fn separable_filter(&mut self, frame: Var, kv: Var, kh: Var) -> Result<Var> {
        let (n, c, h, w) = self.dims4("separable_filter", frame)?;
        let (kn, k, kh_, kw_) = self.dims4("separable_filter", kv)?;
        if (kn, kh_, kw_) != (n, h, w) || self.shape(kh) != self.shape(kv) || k % 2 == 0 {
            return Err(Error::Shape(format!(
                "separable_filter: frame {:?}, vertical kernels {:?}, horizontal kernels {:?}",
                self.shape(frame),
                self.shape(kv),
                self.shape(kh)
            )));
        }
        let geom = SepGeom { n, c, h, w, k };
        let out = ops::separable_forward(self.value(frame).data(), self.value(kv).data(), self.value(kh).data(), &geom);
        let value = Tensor::new(&[n, c, h, w], out)?;
        let rg = self.any_grad(&[frame, kv, kh]);
        Ok(self.push(value, Op::Separable { frame, kv, kh, geom }, rg))
    }

    /// Populates gradients of the scalar `loss` w.r.t. every node that
    /// requires them. A graph supports one backward pass.
    pub fn backward(&mut self, loss: Var) -> Result<()> {
        if self.consumed {
            return Err(Error::Backward("graph already consumed; run a new forward pass".into()));
        }
        if self.value(loss).len() != 1 {
            return Err(Error::Backward(format!("loss must be scalar, got shape {:?}", self.shape(loss))));
        }
        self.consumed = true;
        let mut grads: Vec<Option<Vec<T>>> = (0..self.nodes.len()).map(|_| None).collect();
        if !self.nodes[loss.0].requires_grad {
            self.grads = grads;
            return Ok(());
        }
        grads[loss.0] = Some(vec![T::one()]);
        for id in (0..=loss.0).rev() {
            let Some(g) = grads[id].take() else { continue };
            if !self.nodes[id].requires_grad {
                continue;
            }
            self.propagate(id, &g, &mut grads)?;
            grads[id] = Some(g);
        }
        self.grads = grads;
        Ok(())
    }

    fn propagate(&self, id: usize, g: &[T], grads: &mut [Option<Vec<T>>]) -> Result<()> {
        let nodes = &self.nodes;
        let wants = |v: Var| nodes[v.0].requires_grad;
        let mut acc = |v: Var, f: &mut dyn FnMut(&mut [T])| {
            if !nodes[v.0].requires_grad {
                return;
            }
            let slot = grads[v.0].get_or_insert_with(|| vec![T::zero(); nodes[v.0].value.len()]);
            f(slot);
        };
        match &nodes[id].op {
            Op::Leaf => {}
            Op::Conv2d { input, weight, bias, geom } => {
                let cg = ops::conv2d_backward(
                    nodes[input.0].value.data(),
                    nodes[weight.0].value.data(),
                    g,
                    geom,
                    (wants(*input), wants(*weight), bias.is_some_and(wants)),
                );
                if let Some(dx) = cg.dx {
                    acc(*input, &mut |s| add_into(s, &dx));
                }
                if let Some(dw) = cg.dweight {
                    acc(*weight, &mut |s| add_into(s, &dw));
                }
                if let (Some(b), Some(db)) = (bias, cg.dbias) {
                    acc(*b, &mut |s| add_into(s, &db));
                }
            }
            Op::Relu(x) => {
                let xv = nodes[x.0].value.data();
                acc(*x, &mut |s| {
                    for ((d, &gv), &v) in s.iter_mut().zip(g).zip(xv) {
                        if v > T::zero() {
                            *d += gv;
                        }
                    }
                });
            }
            Op::AvgPool2(x) => {
                let (n, c, h, w) = nodes[x.0].value.dims4()?;
                acc(*x, &mut |s| ops::avg_pool2_backward(g, s, n * c, h, w));
            }
            Op::Upsample2(x) => {
                let (n, c, h, w) = nodes[x.0].value.dims4()?;
                acc(*x, &mut |s| ops::upsample2_backward(g, s, n * c, h, w));
            }
            Op::Concat { inputs, axis } => {
                let out_shape = nodes[id].value.shape();
                let (outer, inner) = outer_inner(out_shape, *axis);
                let mut offset = 0;
                for &v in inputs {
                    let len = nodes[v.0].value.shape()[*axis] * inner;
                    acc(v, &mut |s| {
                        for o in 0..outer {
                            let src = &g[o * out_shape[*axis] * inner + offset..][..len];
                            add_into(&mut s[o * len..(o + 1) * len], src);
                        }
                    });
                    offset += len;
                }
            }
            Op::Narrow { input, axis, start } => {
                let in_shape = nodes[input.0].value.shape();
                let len = nodes[id].value.shape()[*axis];
                let (outer, inner) = outer_inner(in_shape, *axis);
                acc(*input, &mut |s| {
                    for o in 0..outer {
                        let base = (o * in_shape[*axis] + start) * inner;
                        add_into(&mut s[base..base + len * inner], &g[o * len * inner..(o + 1) * len * inner]);
                    }
                });
            }
            Op::Add(a, b) => {
                acc(*a, &mut |s| add_into(s, g));
                acc(*b, &mut |s| add_into(s, g));
            }
            Op::Sub(a, b) => {
                acc(*a, &mut |s| add_into(s, g));
                acc(*b, &mut |s| {
                    for (d, &gv) in s.iter_mut().zip(g) {
                        *d -= gv;
                    }
                });
            }
            Op::Mul(a, b) => {
                let (av, bv) = (nodes[a.0].value.data(), nodes[b.0].value.data());
                acc(*a, &mut |s| {
                    for ((d, &gv), &o) in s.iter_mut().zip(g).zip(bv) {
                        *d += gv * o;
                    }
                });
                acc(*b, &mut |s| {
                    for ((d, &gv), &o) in s.iter_mut().zip(g).zip(av) {
                        *d += gv * o;
                    }
                });
            }
            Op::Scale(x, f) => {
                acc(*x, &mut |s| {
                    for (d, &gv) in s.iter_mut().zip(g) {
                        *d += gv * *f;
                    }
                });
            }
            Op::Offset(x) => acc(*x, &mut |s| add_into(s, g)),
            Op::Abs(x) => {
                let xv = nodes[x.0].value.data();
                acc(*x, &mut |s| {
                    for ((d, &gv), &v) in s.iter_mut().zip(g).zip(xv) {
                        if v > T::zero() {
                            *d += gv;
                        } else if v < T::zero() {
                            *d -= gv;
                        }
                    }
                });
            }
            Op::Square(x) => {
                let xv = nodes[x.0].value.data();
                let two = T::lit(2.0);
                acc(*x, &mut |s| {
                    for ((d, &gv), &v) in s.iter_mut().zip(g).zip(xv) {
                        *d += two * v * gv;
                    }
                });
            }
            Op::Sum(x) => acc(*x, &mut |s| s.iter_mut().for_each(|d| *d += g[0])),
            Op::Mean(x) => {
                let gv = g[0] / T::from_usize(nodes[x.0].value.len()).unwrap();
                acc(*x, &mut |s| s.iter_mut().for_each(|d| *d += gv));
            }
            Op::ReplicatePad { input, pad } => {
                let (n, c, h, w) = nodes[input.0].value.dims4()?;
                acc(*input, &mut |s| ops::replicate_pad_backward(g, s, n * c, h, w, *pad));
            }
            Op::Separable { frame, kv, kh, geom } => {
                let sg = ops::separable_backward(
                    nodes[frame.0].value.data(),
                    nodes[kv.0].value.data(),
                    nodes[kh.0].value.data(),
                    g,
                    geom,
                    (wants(*frame), wants(*kv), wants(*kh)),
                );
                if let Some(d) = sg.dframe {
                    acc(*frame, &mut |s| add_into(s, &d));
                }
                if let Some(d) = sg.dkv {
                    acc(*kv, &mut |s| add_into(s, &d));
                }
                if let Some(d) = sg.dkh {
                    acc(*kh, &mut |s| add_into(s, &d));
                }
            }
        }
        Ok(())
    }
}

fn add_into<T: Float>(dst: &mut [T], src: &[T]) {
    for (d, &s) in dst.iter_mut().zip(src) {
        *d += s;
    }
}
