//! Minimal reverse-mode tape over dense 4-D tensors (batch, channels,
//! height, width).
//!
//! Operations execute eagerly and append a node to the tape; `backward`
//! walks the tape in reverse, accumulating gradients into every node that
//! the loss depends on. Nodes the loss cannot reach receive no gradient and
//! cost nothing, so side computations (e.g. values recorded only for
//! logging) cannot perturb an update.

use thiserror::Error;

use crate::autodiff::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Shape {
    pub batch: usize,
    pub channels: usize,
    pub height: usize,
    pub width: usize,
}

impl Shape {
    pub fn new(batch: usize, channels: usize, height: usize, width: usize) -> Self {
        Self {
            batch,
            channels,
            height,
            width,
        }
    }

    pub fn scalar() -> Self {
        Self::new(1, 1, 1, 1)
    }

    pub fn count(&self) -> usize {
        self.batch * self.channels * self.height * self.width
    }

    pub fn plane(&self) -> usize {
        self.height * self.width
    }
}

impl std::fmt::Display for Shape {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "{}x{}x{}x{}",
            self.batch, self.channels, self.height, self.width
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct TensorId(pub(crate) usize);

#[derive(Debug, Error, PartialEq)]
pub enum AutodiffError {
    #[error("shape mismatch in {context}: {left} vs {right}")]
    ShapeMismatch {
        context: &'static str,
        left: Shape,
        right: Shape,
    },
    #[error("tensor id {0} was not recorded on this graph")]
    GraphNotRecorded(usize),
    #[error("backward needs a scalar loss, got {0}")]
    NonScalarLoss(Shape),
    #[error("value length {actual} does not match shape {shape} ({expected} elements)")]
    LengthMismatch {
        shape: Shape,
        expected: usize,
        actual: usize,
    },
}

#[derive(Debug)]
enum Op<T> {
    Leaf,
    Add(TensorId, TensorId),
    Sub(TensorId, TensorId),
    Mul(TensorId, TensorId),
    Square(TensorId),
    Abs(TensorId),
    Relu(TensorId),
    LeakyRelu(TensorId, T),
    Tanh(TensorId),
    /// `k·x + b` with constant scalars.
    Affine(TensorId, T, T),
    /// Identity inside `[lo, hi]`, gradient zero outside.
    Clamp(TensorId, T, T),
    /// `scale·x + shift` with learnable scalar tensors.
    ScaleShift {
        input: TensorId,
        scale: TensorId,
        shift: TensorId,
    },
    /// 3x3, stride 1, same padding. Weight is (out, in, 3, 3), bias (1, out, 1, 1).
    Conv2d {
        input: TensorId,
        weight: TensorId,
        bias: TensorId,
    },
    /// Constant (out x in) matrix applied along the channel axis per pixel.
    ChannelMap {
        input: TensorId,
        matrix: Vec<T>,
        out_channels: usize,
    },
    /// Per-pixel l2 norm over channels, collapsing to one channel.
    ChannelL2(TensorId),
    /// Mean over the spatial plane, collapsing to (b, c, 1, 1).
    SpatialMean(TensorId),
    /// Mean over every element, collapsing to a scalar.
    MeanAll(TensorId),
}

#[derive(Debug)]
struct Node<T> {
    shape: Shape,
    values: Vec<T>,
    op: Op<T>,
}

/// Gradients keyed by tensor id; nodes unreached by the loss hold `None`.
#[derive(Debug)]
pub struct Gradients<T> {
    grads: Vec<Option<Vec<T>>>,
}

impl<T: Scalar> Gradients<T> {
    pub fn get(&self, id: TensorId) -> Option<&[T]> {
        self.grads.get(id.0).and_then(|g| g.as_deref())
    }
}

#[derive(Debug, Default)]
pub struct Graph<T> {
    nodes: Vec<Node<T>>,
}

impl<T: Scalar> Graph<T> {
    pub fn new() -> Self {
        Self { nodes: Vec::new() }
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn shape(&self, id: TensorId) -> Shape {
        self.nodes[id.0].shape
    }

    pub fn values(&self, id: TensorId) -> &[T] {
        &self.nodes[id.0].values
    }

    /// Value of a single-element tensor.
    pub fn scalar_value(&self, id: TensorId) -> T {
        debug_assert_eq!(self.nodes[id.0].shape.count(), 1);
        self.nodes[id.0].values[0]
    }

    fn push(&mut self, shape: Shape, values: Vec<T>, op: Op<T>) -> TensorId {
        debug_assert_eq!(shape.count(), values.len());
        self.nodes.push(Node { shape, values, op });
        TensorId(self.nodes.len() - 1)
    }

    fn check(&self, id: TensorId) -> Result<(), AutodiffError> {
        if id.0 >= self.nodes.len() {
            return Err(AutodiffError::GraphNotRecorded(id.0));
        }
        Ok(())
    }

    fn same_shape(
        &self,
        context: &'static str,
        a: TensorId,
        b: TensorId,
    ) -> Result<Shape, AutodiffError> {
        self.check(a)?;
        self.check(b)?;
        let (sa, sb) = (self.nodes[a.0].shape, self.nodes[b.0].shape);
        if sa != sb {
            return Err(AutodiffError::ShapeMismatch {
                context,
                left: sa,
                right: sb,
            });
        }
        Ok(sa)
    }

    pub fn leaf(&mut self, shape: Shape, values: Vec<T>) -> Result<TensorId, AutodiffError> {
        if values.len() != shape.count() {
            return Err(AutodiffError::LengthMismatch {
                shape,
                expected: shape.count(),
                actual: values.len(),
            });
        }
        Ok(self.push(shape, values, Op::Leaf))
    }

    pub fn scalar_leaf(&mut self, value: T) -> TensorId {
        self.push(Shape::scalar(), vec![value], Op::Leaf)
    }

    pub fn add(&mut self, a: TensorId, b: TensorId) -> Result<TensorId, AutodiffError> {
        let shape = self.same_shape("add", a, b)?;
        let values = self.nodes[a.0]
            .values
            .iter()
            .zip(&self.nodes[b.0].values)
            .map(|(&x, &y)| x + y)
            .collect();
        Ok(self.push(shape, values, Op::Add(a, b)))
    }

    pub fn sub(&mut self, a: TensorId, b: TensorId) -> Result<TensorId, AutodiffError> {
        let shape = self.same_shape("sub", a, b)?;
        let values = self.nodes[a.0]
            .values
            .iter()
            .zip(&self.nodes[b.0].values)
            .map(|(&x, &y)| x - y)
            .collect();
        Ok(self.push(shape, values, Op::Sub(a, b)))
    }

    pub fn mul(&mut self, a: TensorId, b: TensorId) -> Result<TensorId, AutodiffError> {
        let shape = self.same_shape("mul", a, b)?;
        let values = self.nodes[a.0]
            .values
            .iter()
            .zip(&self.nodes[b.0].values)
            .map(|(&x, &y)| x * y)
            .collect();
        Ok(self.push(shape, values, Op::Mul(a, b)))
    }

    pub fn square(&mut self, a: TensorId) -> Result<TensorId, AutodiffError> {
        self.check(a)?;
        let shape = self.nodes[a.0].shape;
        let values = self.nodes[a.0].values.iter().map(|&x| x * x).collect();
        Ok(self.push(shape, values, Op::Square(a)))
    }

    pub fn abs(&mut self, a: TensorId) -> Result<TensorId, AutodiffError> {
        self.check(a)?;
        let shape = self.nodes[a.0].shape;
        let values = self.nodes[a.0].values.iter().map(|&x| x.abs()).collect();
        Ok(self.push(shape, values, Op::Abs(a)))
    }

    pub fn relu(&mut self, a: TensorId) -> Result<TensorId, AutodiffError> {
        self.check(a)?;
        let shape = self.nodes[a.0].shape;
        let zero = T::zero();
        let values = self.nodes[a.0].values.iter().map(|&x| x.max(zero)).collect();
        Ok(self.push(shape, values, Op::Relu(a)))
    }

    pub fn leaky_relu(&mut self, a: TensorId, slope: T) -> Result<TensorId, AutodiffError> {
        self.check(a)?;
        let shape = self.nodes[a.0].shape;
        let zero = T::zero();
        let values = self.nodes[a.0]
            .values
            .iter()
            .map(|&x| if x > zero { x } else { slope * x })
            .collect();
        Ok(self.push(shape, values, Op::LeakyRelu(a, slope)))
    }

    pub fn tanh(&mut self, a: TensorId) -> Result<TensorId, AutodiffError> {
        self.check(a)?;
        let shape = self.nodes[a.0].shape;
        let values = self.nodes[a.0].values.iter().map(|&x| x.tanh()).collect();
        Ok(self.push(shape, values, Op::Tanh(a)))
    }

    pub fn affine(&mut self, a: TensorId, k: T, b: T) -> Result<TensorId, AutodiffError> {
        self.check(a)?;
        let shape = self.nodes[a.0].shape;
        let values = self.nodes[a.0].values.iter().map(|&x| k * x + b).collect();
        Ok(self.push(shape, values, Op::Affine(a, k, b)))
    }

    pub fn clamp(&mut self, a: TensorId, lo: T, hi: T) -> Result<TensorId, AutodiffError> {
        self.check(a)?;
        let shape = self.nodes[a.0].shape;
        let values = self.nodes[a.0]
            .values
            .iter()
            .map(|&x| x.max(lo).min(hi))
            .collect();
        Ok(self.push(shape, values, Op::Clamp(a, lo, hi)))
    }

    /// Elementwise `scale·x + shift` where scale and shift are scalar
    /// (1,1,1,1) tensors, typically learnable.
    pub fn scale_shift(
        &mut self,
        input: TensorId,
        scale: TensorId,
        shift: TensorId,
    ) -> Result<TensorId, AutodiffError> {
        self.check(input)?;
        for id in [scale, shift] {
            self.check(id)?;
            let s = self.nodes[id.0].shape;
            if s.count() != 1 {
                return Err(AutodiffError::ShapeMismatch {
                    context: "scale_shift scalar",
                    left: s,
                    right: Shape::scalar(),
                });
            }
        }
        let shape = self.nodes[input.0].shape;
        let k = self.nodes[scale.0].values[0];
        let b = self.nodes[shift.0].values[0];
        let values = self.nodes[input.0]
            .values
            .iter()
            .map(|&x| k * x + b)
            .collect();
        Ok(self.push(shape, values, Op::ScaleShift { input, scale, shift }))
    }

    /// 3x3 convolution, stride 1, zero ("same") padding.
    pub fn conv2d(
        &mut self,
        input: TensorId,
        weight: TensorId,
        bias: TensorId,
    ) -> Result<TensorId, AutodiffError> {
        self.check(input)?;
        self.check(weight)?;
        self.check(bias)?;
        let ishape = self.nodes[input.0].shape;
        let wshape = self.nodes[weight.0].shape;
        let bshape = self.nodes[bias.0].shape;
        if wshape.height != 3 || wshape.width != 3 || wshape.channels != ishape.channels {
            return Err(AutodiffError::ShapeMismatch {
                context: "conv2d weight",
                left: wshape,
                right: Shape::new(wshape.batch, ishape.channels, 3, 3),
            });
        }
        let out_ch = wshape.batch;
        if bshape != Shape::new(1, out_ch, 1, 1) {
            return Err(AutodiffError::ShapeMismatch {
                context: "conv2d bias",
                left: bshape,
                right: Shape::new(1, out_ch, 1, 1),
            });
        }
        let oshape = Shape::new(ishape.batch, out_ch, ishape.height, ishape.width);
        let values = conv2d_forward(
            &self.nodes[input.0].values,
            ishape,
            &self.nodes[weight.0].values,
            out_ch,
            &self.nodes[bias.0].values,
        );
        Ok(self.push(oshape, values, Op::Conv2d { input, weight, bias }))
    }

    /// Applies a constant (out x in) matrix along the channel axis.
    pub fn channel_map(
        &mut self,
        input: TensorId,
        out_channels: usize,
        matrix: &[T],
    ) -> Result<TensorId, AutodiffError> {
        self.check(input)?;
        let ishape = self.nodes[input.0].shape;
        let in_ch = ishape.channels;
        if matrix.len() != out_channels * in_ch {
            return Err(AutodiffError::LengthMismatch {
                shape: Shape::new(1, out_channels, 1, in_ch),
                expected: out_channels * in_ch,
                actual: matrix.len(),
            });
        }
        let oshape = Shape::new(ishape.batch, out_channels, ishape.height, ishape.width);
        let plane = ishape.plane();
        let input_vals = &self.nodes[input.0].values;
        let mut values = vec![T::zero(); oshape.count()];
        for b in 0..ishape.batch {
            for o in 0..out_channels {
                let out_base = (b * out_channels + o) * plane;
                for i in 0..in_ch {
                    let m = matrix[o * in_ch + i];
                    let in_base = (b * in_ch + i) * plane;
                    for p in 0..plane {
                        values[out_base + p] = values[out_base + p] + m * input_vals[in_base + p];
                    }
                }
            }
        }
        Ok(self.push(
            oshape,
            values,
            Op::ChannelMap {
                input,
                matrix: matrix.to_vec(),
                out_channels,
            },
        ))
    }

    /// Per-pixel l2 norm over the channel axis.
    pub fn channel_l2(&mut self, input: TensorId) -> Result<TensorId, AutodiffError> {
        self.check(input)?;
        let ishape = self.nodes[input.0].shape;
        let oshape = Shape::new(ishape.batch, 1, ishape.height, ishape.width);
        let plane = ishape.plane();
        let input_vals = &self.nodes[input.0].values;
        let mut values = vec![T::zero(); oshape.count()];
        for b in 0..ishape.batch {
            for p in 0..plane {
                let mut acc = T::zero();
                for c in 0..ishape.channels {
                    let v = input_vals[(b * ishape.channels + c) * plane + p];
                    acc = acc + v * v;
                }
                values[b * plane + p] = acc.sqrt();
            }
        }
        Ok(self.push(oshape, values, Op::ChannelL2(input)))
    }

    /// Mean over the spatial plane per (batch, channel).
    pub fn spatial_mean(&mut self, input: TensorId) -> Result<TensorId, AutodiffError> {
        self.check(input)?;
        let ishape = self.nodes[input.0].shape;
        let oshape = Shape::new(ishape.batch, ishape.channels, 1, 1);
        let plane = ishape.plane();
        let norm = T::from_f64(1.0 / plane as f64);
        let input_vals = &self.nodes[input.0].values;
        let mut values = vec![T::zero(); oshape.count()];
        for (bc, out) in values.iter_mut().enumerate() {
            let mut acc = T::zero();
            for p in 0..plane {
                acc = acc + input_vals[bc * plane + p];
            }
            *out = acc * norm;
        }
        Ok(self.push(oshape, values, Op::SpatialMean(input)))
    }

    /// Mean over every element, producing a scalar node.
    pub fn mean_all(&mut self, input: TensorId) -> Result<TensorId, AutodiffError> {
        self.check(input)?;
        let ishape = self.nodes[input.0].shape;
        let mut acc = T::zero();
        for &v in &self.nodes[input.0].values {
            acc = acc + v;
        }
        let mean = acc * T::from_f64(1.0 / ishape.count() as f64);
        Ok(self.push(Shape::scalar(), vec![mean], Op::MeanAll(input)))
    }

    /// Reverse-mode gradients of a scalar loss node with respect to every
    /// node it depends on.
    pub fn backward(&self, loss: TensorId) -> Result<Gradients<T>, AutodiffError> {
        if loss.0 >= self.nodes.len() {
            return Err(AutodiffError::GraphNotRecorded(loss.0));
        }
        let loss_shape = self.nodes[loss.0].shape;
        if loss_shape.count() != 1 {
            return Err(AutodiffError::NonScalarLoss(loss_shape));
        }
        let mut grads: Vec<Option<Vec<T>>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[loss.0] = Some(vec![T::one()]);

        for id in (0..=loss.0).rev() {
            if grads[id].is_none() {
                continue;
            }
            let (parents, current) = grads.split_at_mut(id);
            let gout = current[0].as_ref().expect("checked above");
            let node = &self.nodes[id];
            self.propagate(node, gout, parents);
        }
        Ok(Gradients { grads })
    }

    fn propagate(&self, node: &Node<T>, gout: &[T], parents: &mut [Option<Vec<T>>]) {
        let acc = |parents: &mut [Option<Vec<T>>], id: TensorId, f: &mut dyn FnMut(&mut [T])| {
            let len = self.nodes[id.0].shape.count();
            let slot = parents[id.0].get_or_insert_with(|| vec![T::zero(); len]);
            f(slot);
        };
        match &node.op {
            Op::Leaf => {}
            Op::Add(a, b) => {
                acc(parents, *a, &mut |g| {
                    for (gi, &go) in g.iter_mut().zip(gout) {
                        *gi = *gi + go;
                    }
                });
                acc(parents, *b, &mut |g| {
                    for (gi, &go) in g.iter_mut().zip(gout) {
                        *gi = *gi + go;
                    }
                });
            }
            Op::Sub(a, b) => {
                acc(parents, *a, &mut |g| {
                    for (gi, &go) in g.iter_mut().zip(gout) {
                        *gi = *gi + go;
                    }
                });
                acc(parents, *b, &mut |g| {
                    for (gi, &go) in g.iter_mut().zip(gout) {
                        *gi = *gi - go;
                    }
                });
            }
            Op::Mul(a, b) => {
                let av = &self.nodes[a.0].values;
                let bv = &self.nodes[b.0].values;
                acc(parents, *a, &mut |g| {
                    for ((gi, &go), &bx) in g.iter_mut().zip(gout).zip(bv) {
                        *gi = *gi + go * bx;
                    }
                });
                acc(parents, *b, &mut |g| {
                    for ((gi, &go), &ax) in g.iter_mut().zip(gout).zip(av) {
                        *gi = *gi + go * ax;
                    }
                });
            }
            Op::Square(a) => {
                let av = &self.nodes[a.0].values;
                let two = T::from_f64(2.0);
                acc(parents, *a, &mut |g| {
                    for ((gi, &go), &x) in g.iter_mut().zip(gout).zip(av) {
                        *gi = *gi + go * two * x;
                    }
                });
            }
            Op::Abs(a) => {
                // subgradient 0 at the kink
                let av = &self.nodes[a.0].values;
                let zero = T::zero();
                acc(parents, *a, &mut |g| {
                    for ((gi, &go), &x) in g.iter_mut().zip(gout).zip(av) {
                        let s = if x > zero {
                            T::one()
                        } else if x < zero {
                            -T::one()
                        } else {
                            zero
                        };
                        *gi = *gi + go * s;
                    }
                });
            }
            Op::Relu(a) => {
                // subgradient 0 at the kink
                let av = &self.nodes[a.0].values;
                let zero = T::zero();
                acc(parents, *a, &mut |g| {
                    for ((gi, &go), &x) in g.iter_mut().zip(gout).zip(av) {
                        if x > zero {
                            *gi = *gi + go;
                        }
                    }
                });
            }
            Op::LeakyRelu(a, slope) => {
                let av = &self.nodes[a.0].values;
                let zero = T::zero();
                let slope = *slope;
                acc(parents, *a, &mut |g| {
                    for ((gi, &go), &x) in g.iter_mut().zip(gout).zip(av) {
                        let d = if x > zero { T::one() } else { slope };
                        *gi = *gi + go * d;
                    }
                });
            }
            Op::Tanh(a) => {
                let out = &node.values;
                acc(parents, *a, &mut |g| {
                    for ((gi, &go), &t) in g.iter_mut().zip(gout).zip(out) {
                        *gi = *gi + go * (T::one() - t * t);
                    }
                });
            }
            Op::Affine(a, k, _) => {
                let k = *k;
                acc(parents, *a, &mut |g| {
                    for (gi, &go) in g.iter_mut().zip(gout) {
                        *gi = *gi + go * k;
                    }
                });
            }
            Op::Clamp(a, lo, hi) => {
                let av = &self.nodes[a.0].values;
                let (lo, hi) = (*lo, *hi);
                acc(parents, *a, &mut |g| {
                    for ((gi, &go), &x) in g.iter_mut().zip(gout).zip(av) {
                        if x > lo && x < hi {
                            *gi = *gi + go;
                        }
                    }
                });
            }
            Op::ScaleShift { input, scale, shift } => {
                let xv = &self.nodes[input.0].values;
                let k = self.nodes[scale.0].values[0];
                acc(parents, *input, &mut |g| {
                    for (gi, &go) in g.iter_mut().zip(gout) {
                        *gi = *gi + go * k;
                    }
                });
                let mut gscale = T::zero();
                let mut gshift = T::zero();
                for (&go, &x) in gout.iter().zip(xv) {
                    gscale = gscale + go * x;
                    gshift = gshift + go;
                }
                acc(parents, *scale, &mut |g| g[0] = g[0] + gscale);
                acc(parents, *shift, &mut |g| g[0] = g[0] + gshift);
            }
            Op::Conv2d { input, weight, bias } => {
                let ishape = self.nodes[input.0].shape;
                let out_ch = self.nodes[weight.0].shape.batch;
                let iv = &self.nodes[input.0].values;
                let wv = &self.nodes[weight.0].values;
                acc(parents, *input, &mut |g| {
                    conv2d_backward_input(g, ishape, wv, out_ch, gout);
                });
                acc(parents, *weight, &mut |g| {
                    conv2d_backward_weight(g, ishape, iv, out_ch, gout);
                });
                acc(parents, *bias, &mut |g| {
                    conv2d_backward_bias(g, ishape, out_ch, gout);
                });
            }
            Op::ChannelMap {
                input,
                matrix,
                out_channels,
            } => {
                let ishape = self.nodes[input.0].shape;
                let in_ch = ishape.channels;
                let plane = ishape.plane();
                acc(parents, *input, &mut |g| {
                    for b in 0..ishape.batch {
                        for o in 0..*out_channels {
                            let gout_base = (b * out_channels + o) * plane;
                            for i in 0..in_ch {
                                let m = matrix[o * in_ch + i];
                                let gin_base = (b * in_ch + i) * plane;
                                for p in 0..plane {
                                    g[gin_base + p] = g[gin_base + p] + m * gout[gout_base + p];
                                }
                            }
                        }
                    }
                });
            }
            Op::ChannelL2(input) => {
                let ishape = self.nodes[input.0].shape;
                let plane = ishape.plane();
                let iv = &self.nodes[input.0].values;
                let out = &node.values;
                let zero = T::zero();
                acc(parents, *input, &mut |g| {
                    for b in 0..ishape.batch {
                        for p in 0..plane {
                            let norm = out[b * plane + p];
                            if norm == zero {
                                continue; // subgradient 0 at the origin
                            }
                            let go = gout[b * plane + p];
                            for c in 0..ishape.channels {
                                let idx = (b * ishape.channels + c) * plane + p;
                                g[idx] = g[idx] + go * iv[idx] / norm;
                            }
                        }
                    }
                });
            }
            Op::SpatialMean(input) => {
                let ishape = self.nodes[input.0].shape;
                let plane = ishape.plane();
                let norm = T::from_f64(1.0 / plane as f64);
                acc(parents, *input, &mut |g| {
                    for (bc, &go) in gout.iter().enumerate() {
                        let contrib = go * norm;
                        for p in 0..plane {
                            g[bc * plane + p] = g[bc * plane + p] + contrib;
                        }
                    }
                });
            }
            Op::MeanAll(input) => {
                let count = self.nodes[input.0].shape.count();
                let contrib = gout[0] * T::from_f64(1.0 / count as f64);
                acc(parents, *input, &mut |g| {
                    for gi in g.iter_mut() {
                        *gi = *gi + contrib;
                    }
                });
            }
        }
    }
}

fn conv2d_forward<T: Scalar>(
    input: &[T],
    ishape: Shape,
    weight: &[T],
    out_ch: usize,
    bias: &[T],
) -> Vec<T> {
    let (h, w) = (ishape.height, ishape.width);
    let in_ch = ishape.channels;
    let plane = h * w;
    let mut out = vec![T::zero(); ishape.batch * out_ch * plane];
    for b in 0..ishape.batch {
        for co in 0..out_ch {
            let out_base = (b * out_ch + co) * plane;
            let bv = bias[co];
            for v in &mut out[out_base..out_base + plane] {
                *v = bv;
            }
            for ci in 0..in_ch {
                let in_base = (b * in_ch + ci) * plane;
                for ky in 0..3usize {
                    for kx in 0..3usize {
                        let wv = weight[((co * in_ch + ci) * 3 + ky) * 3 + kx];
                        if wv == T::zero() {
                            continue;
                        }
                        let x0 = 1usize.saturating_sub(kx);
                        let x1 = (w + 1 - kx).min(w);
                        for y in 0..h {
                            let iy = y + ky;
                            if iy < 1 || iy > h {
                                continue;
                            }
                            let iy = iy - 1;
                            let orow = out_base + y * w;
                            let irow = in_base + iy * w;
                            let shift = kx as isize - 1;
                            for x in x0..x1 {
                                let ix = (x as isize + shift) as usize;
                                out[orow + x] = out[orow + x] + wv * input[irow + ix];
                            }
                        }
                    }
                }
            }
        }
    }
    out
}

fn conv2d_backward_input<T: Scalar>(
    gin: &mut [T],
    ishape: Shape,
    weight: &[T],
    out_ch: usize,
    gout: &[T],
) {
    let (h, w) = (ishape.height, ishape.width);
    let in_ch = ishape.channels;
    let plane = h * w;
    for b in 0..ishape.batch {
        for co in 0..out_ch {
            let gout_base = (b * out_ch + co) * plane;
            for ci in 0..in_ch {
                let gin_base = (b * in_ch + ci) * plane;
                for ky in 0..3usize {
                    for kx in 0..3usize {
                        let wv = weight[((co * in_ch + ci) * 3 + ky) * 3 + kx];
                        if wv == T::zero() {
                            continue;
                        }
                        let x0 = 1usize.saturating_sub(kx);
                        let x1 = (w + 1 - kx).min(w);
                        for y in 0..h {
                            let iy = y + ky;
                            if iy < 1 || iy > h {
                                continue;
                            }
                            let iy = iy - 1;
                            let grow = gout_base + y * w;
                            let irow = gin_base + iy * w;
                            let shift = kx as isize - 1;
                            for x in x0..x1 {
                                let ix = (x as isize + shift) as usize;
                                gin[irow + ix] = gin[irow + ix] + wv * gout[grow + x];
                            }
                        }
                    }
                }
            }
        }
    }
}

fn conv2d_backward_weight<T: Scalar>(
    gw: &mut [T],
    ishape: Shape,
    input: &[T],
    out_ch: usize,
    gout: &[T],
) {
    let (h, w) = (ishape.height, ishape.width);
    let in_ch = ishape.channels;
    let plane = h * w;
    for b in 0..ishape.batch {
        for co in 0..out_ch {
            let gout_base = (b * out_ch + co) * plane;
            for ci in 0..in_ch {
                let in_base = (b * in_ch + ci) * plane;
                for ky in 0..3usize {
                    for kx in 0..3usize {
                        let mut acc = T::zero();
                        let x0 = 1usize.saturating_sub(kx);
                        let x1 = (w + 1 - kx).min(w);
                        for y in 0..h {
                            let iy = y + ky;
                            if iy < 1 || iy > h {
                                continue;
                            }
                            let iy = iy - 1;
                            let grow = gout_base + y * w;
                            let irow = in_base + iy * w;
                            let shift = kx as isize - 1;
                            for x in x0..x1 {
                                let ix = (x as isize + shift) as usize;
                                acc = acc + gout[grow + x] * input[irow + ix];
                            }
                        }
                        let widx = ((co * in_ch + ci) * 3 + ky) * 3 + kx;
                        gw[widx] = gw[widx] + acc;
                    }
                }
            }
        }
    }
}

fn conv2d_backward_bias<T: Scalar>(gb: &mut [T], ishape: Shape, out_ch: usize, gout: &[T]) {
    let plane = ishape.plane();
    for b in 0..ishape.batch {
        for co in 0..out_ch {
            let base = (b * out_ch + co) * plane;
            let mut acc = T::zero();
            for p in 0..plane {
                acc = acc + gout[base + p];
            }
            gb[co] = gb[co] + acc;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn leaf_length_is_checked() {
        let mut g = Graph::<f64>::new();
        assert!(matches!(
            g.leaf(Shape::new(1, 1, 2, 2), vec![0.0; 3]).unwrap_err(),
            AutodiffError::LengthMismatch { expected: 4, actual: 3, .. }
        ));
    }

    #[test]
    fn backward_rejects_foreign_ids_and_non_scalars() {
        let mut g = Graph::<f64>::new();
        let x = g.leaf(Shape::new(1, 1, 1, 2), vec![1.0, 2.0]).unwrap();
        assert_eq!(
            g.backward(TensorId(7)).unwrap_err(),
            AutodiffError::GraphNotRecorded(7)
        );
        assert!(matches!(
            g.backward(x).unwrap_err(),
            AutodiffError::NonScalarLoss(_)
        ));
    }

    #[test]
    fn sum_of_weighted_input_has_input_gradient() {
        // loss = mean(w ⊙ x) · n = Σ w·x up to the 1/n factor
        let mut g = Graph::<f64>::new();
        let shape = Shape::new(1, 1, 1, 3);
        let w = g.leaf(shape, vec![0.5, -1.0, 2.0]).unwrap();
        let x = g.leaf(shape, vec![3.0, 4.0, 5.0]).unwrap();
        let prod = g.mul(w, x).unwrap();
        let loss = g.mean_all(prod).unwrap();
        let grads = g.backward(loss).unwrap();
        let gw = grads.get(w).unwrap();
        for (gi, xi) in gw.iter().zip([3.0, 4.0, 5.0]) {
            assert_abs_diff_eq!(*gi, xi / 3.0, epsilon = 1e-15);
        }
    }

    #[test]
    fn tanh_gradient_at_zero_is_one() {
        let mut g = Graph::<f64>::new();
        let x = g.leaf(Shape::scalar(), vec![0.0]).unwrap();
        let t = g.tanh(x).unwrap();
        let loss = g.mean_all(t).unwrap();
        let grads = g.backward(loss).unwrap();
        assert_eq!(grads.get(x).unwrap()[0], 1.0);
    }

    #[test]
    fn relu_and_abs_subgradient_at_kink_is_zero() {
        let mut g = Graph::<f64>::new();
        let x = g.leaf(Shape::scalar(), vec![0.0]).unwrap();
        let r = g.relu(x).unwrap();
        let a = g.abs(x).unwrap();
        let s = g.add(r, a).unwrap();
        let loss = g.mean_all(s).unwrap();
        let grads = g.backward(loss).unwrap();
        assert_eq!(grads.get(x).unwrap()[0], 0.0);
    }

    #[test]
    fn unreached_nodes_have_no_gradient() {
        let mut g = Graph::<f64>::new();
        let x = g.leaf(Shape::scalar(), vec![2.0]).unwrap();
        let y = g.leaf(Shape::scalar(), vec![3.0]).unwrap();
        let _side = g.square(y).unwrap();
        let loss = g.mean_all(x).unwrap();
        let grads = g.backward(loss).unwrap();
        assert!(grads.get(y).is_none());
    }

    #[test]
    fn conv2d_known_answer() {
        // 1x1x2x2 input, single 3x3 kernel picking the center → identity + bias
        let mut g = Graph::<f64>::new();
        let x = g
            .leaf(Shape::new(1, 1, 2, 2), vec![1.0, 2.0, 3.0, 4.0])
            .unwrap();
        let mut kernel = vec![0.0; 9];
        kernel[4] = 1.0; // center tap
        let w = g.leaf(Shape::new(1, 1, 3, 3), kernel).unwrap();
        let b = g.leaf(Shape::new(1, 1, 1, 1), vec![10.0]).unwrap();
        let y = g.conv2d(x, w, b).unwrap();
        assert_eq!(g.values(y), &[11.0, 12.0, 13.0, 14.0]);
    }

    #[test]
    fn conv2d_edge_padding_is_zero() {
        // kernel tap at top-left: output(y,x) = input(y-1,x-1), zero off-grid
        let mut g = Graph::<f64>::new();
        let x = g
            .leaf(Shape::new(1, 1, 2, 2), vec![1.0, 2.0, 3.0, 4.0])
            .unwrap();
        let mut kernel = vec![0.0; 9];
        kernel[0] = 1.0;
        let w = g.leaf(Shape::new(1, 1, 3, 3), kernel).unwrap();
        let b = g.leaf(Shape::new(1, 1, 1, 1), vec![0.0]).unwrap();
        let y = g.conv2d(x, w, b).unwrap();
        assert_eq!(g.values(y), &[0.0, 0.0, 0.0, 1.0]);
    }

    #[test]
    fn channel_map_mixes_channels() {
        let mut g = Graph::<f64>::new();
        // 2 channels, 1x2 plane
        let x = g
            .leaf(Shape::new(1, 2, 1, 2), vec![1.0, 2.0, 10.0, 20.0])
            .unwrap();
        let y = g.channel_map(x, 1, &[2.0, 0.5]).unwrap();
        assert_eq!(g.values(y), &[7.0, 14.0]);
    }

    #[test]
    fn channel_l2_and_spatial_mean() {
        let mut g = Graph::<f64>::new();
        let x = g
            .leaf(Shape::new(1, 2, 1, 2), vec![3.0, 0.0, 4.0, 0.0])
            .unwrap();
        let n = g.channel_l2(x).unwrap();
        assert_eq!(g.values(n), &[5.0, 0.0]);
        let m = g.spatial_mean(n).unwrap();
        assert_eq!(g.values(m), &[2.5]);
    }
}
