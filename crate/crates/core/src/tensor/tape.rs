//! Recording tape for reverse-mode differentiation.
//!
//! Values live on the tape in the order they were created, so the record is
//! already topologically sorted; `backward` walks it once from the loss to
//! the leaves. A tape can be differentiated exactly once ([`Tape::backward`]
//! consumes the record and a second call reports [`TensorError::TapeConsumed`]).

use super::ops;
use super::{Tensor, TensorError};

/// Handle to a value recorded on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ValueId(usize);

enum Node {
    Leaf,
    Relu {
        x: ValueId,
    },
    Softmax {
        x: ValueId,
    },
    Add {
        a: ValueId,
        b: ValueId,
    },
    Mul {
        a: ValueId,
        b: ValueId,
    },
    Scale {
        x: ValueId,
        c: f64,
    },
    Sum {
        x: ValueId,
    },
    Reshape {
        x: ValueId,
    },
    /// `[c,h,w]` feature map flattened to `[h*w, c]` position rows.
    SpatialToRows {
        x: ValueId,
    },
    /// Feature map `[c,h,w]` scaled per spatial position by `mask [h*w]`.
    MulPositions {
        feat: ValueId,
        mask: ValueId,
    },
    /// `lambda * a + (1 - lambda) * b` with scalar `lambda`.
    Blend {
        lambda: ValueId,
        a: ValueId,
        b: ValueId,
    },
    Dense {
        x: ValueId,
        weight: ValueId,
        bias: ValueId,
    },
    Conv2d {
        input: ValueId,
        filters: ValueId,
        bias: ValueId,
    },
    MaxPool2 {
        x: ValueId,
        argmax: Vec<usize>,
    },
    BofPool {
        features: ValueId,
        centers: ValueId,
        log_scales: ValueId,
        scales: Vec<f64>,
        saved: ops::BofSaved,
    },
    AngularLoss {
        est: ValueId,
        gt: Vec<f64>,
    },
}

struct Entry {
    value: Tensor,
    node: Node,
}

/// Gradients produced by [`Tape::backward`], addressed by [`ValueId`].
///
/// A value that the loss does not depend on has no entry; callers treat the
/// absence as an exact zero.
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
}

impl Gradients {
    /// Gradient of the loss with respect to `id`, if any path reached it.
    pub fn get(&self, id: ValueId) -> Option<&Tensor> {
        self.grads.get(id.0).and_then(|g| g.as_ref())
    }

    /// Like [`Gradients::get`] but materializes the zero tensor for values
    /// the loss does not depend on.
    pub fn get_or_zero(&self, id: ValueId, shape: &[usize]) -> Tensor {
        match self.get(id) {
            Some(g) => g.clone(),
            None => Tensor::zeros(shape.to_vec()),
        }
    }
}

/// Records tensor operations for one reverse pass.
#[derive(Default)]
pub struct Tape {
    entries: Vec<Entry>,
    consumed: bool,
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    /// Number of recorded values.
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// The tensor held by `id`.
    pub fn value(&self, id: ValueId) -> &Tensor {
        &self.entries[id.0].value
    }

    fn push(&mut self, value: Tensor, node: Node) -> ValueId {
        self.entries.push(Entry { value, node });
        ValueId(self.entries.len() - 1)
    }

    fn shape_err(op: &'static str, detail: String) -> TensorError {
        TensorError::ShapeMismatch { op, detail }
    }

    /// Registers an input or parameter value.
    pub fn leaf(&mut self, value: Tensor) -> ValueId {
        self.push(value, Node::Leaf)
    }

    /// Elementwise maximum with zero.
    pub fn relu(&mut self, x: ValueId) -> ValueId {
        let v = self.value(x);
        let data = v.data().iter().map(|&a| a.max(0.0)).collect();
        let out = Tensor::from_raw(v.shape().to_vec(), data);
        self.push(out, Node::Relu { x })
    }

    /// Stable softmax over a rank-1 tensor.
    pub fn softmax(&mut self, x: ValueId) -> Result<ValueId, TensorError> {
        let v = self.value(x);
        if v.shape().len() != 1 {
            return Err(Self::shape_err(
                "softmax",
                format!("expected rank-1 input, got shape {:?}", v.shape()),
            ));
        }
        let out = Tensor::from_raw(v.shape().to_vec(), ops::softmax_fwd(v.data()));
        Ok(self.push(out, Node::Softmax { x }))
    }

    /// Elementwise sum of two same-shaped tensors.
    pub fn add(&mut self, a: ValueId, b: ValueId) -> Result<ValueId, TensorError> {
        let (va, vb) = (self.value(a), self.value(b));
        if va.shape() != vb.shape() {
            return Err(Self::shape_err(
                "add",
                format!("{:?} vs {:?}", va.shape(), vb.shape()),
            ));
        }
        let data = va.data().iter().zip(vb.data()).map(|(x, y)| x + y).collect();
        let out = Tensor::from_raw(va.shape().to_vec(), data);
        Ok(self.push(out, Node::Add { a, b }))
    }

    /// Elementwise (Hadamard) product of two same-shaped tensors.
    pub fn mul(&mut self, a: ValueId, b: ValueId) -> Result<ValueId, TensorError> {
        let (va, vb) = (self.value(a), self.value(b));
        if va.shape() != vb.shape() {
            return Err(Self::shape_err(
                "mul",
                format!("{:?} vs {:?}", va.shape(), vb.shape()),
            ));
        }
        let data = va.data().iter().zip(vb.data()).map(|(x, y)| x * y).collect();
        let out = Tensor::from_raw(va.shape().to_vec(), data);
        Ok(self.push(out, Node::Mul { a, b }))
    }

    /// Multiplication by a constant.
    pub fn scale(&mut self, x: ValueId, c: f64) -> ValueId {
        let v = self.value(x);
        let data = v.data().iter().map(|&a| a * c).collect();
        let out = Tensor::from_raw(v.shape().to_vec(), data);
        self.push(out, Node::Scale { x, c })
    }

    /// Sum of all elements, as a scalar tensor.
    pub fn sum(&mut self, x: ValueId) -> ValueId {
        let total: f64 = self.value(x).data().iter().sum();
        let out = Tensor::from_raw(vec![1], vec![total]);
        self.push(out, Node::Sum { x })
    }

    /// Reinterprets the value with a new shape of equal length.
    pub fn reshape(&mut self, x: ValueId, shape: Vec<usize>) -> Result<ValueId, TensorError> {
        let v = self.value(x);
        if shape.iter().product::<usize>() != v.len() {
            return Err(Self::shape_err(
                "reshape",
                format!("{:?} -> {:?}", v.shape(), shape),
            ));
        }
        let out = Tensor::from_raw(shape, v.data().to_vec());
        Ok(self.push(out, Node::Reshape { x }))
    }

    /// Rearranges a `[c,h,w]` feature map into `[h*w, c]` rows, one feature
    /// vector per spatial position.
    pub fn spatial_to_rows(&mut self, x: ValueId) -> Result<ValueId, TensorError> {
        let v = self.value(x);
        let &[c, h, w] = v.shape() else {
            return Err(Self::shape_err(
                "spatial_to_rows",
                format!("expected rank-3 input, got shape {:?}", v.shape()),
            ));
        };
        let n = h * w;
        let mut data = vec![0.0; n * c];
        for ch in 0..c {
            let chan = &v.data()[ch * n..(ch + 1) * n];
            for (j, &val) in chan.iter().enumerate() {
                data[j * c + ch] = val;
            }
        }
        let out = Tensor::from_raw(vec![n, c], data);
        Ok(self.push(out, Node::SpatialToRows { x }))
    }

    /// Scales every channel of `feat [c,h,w]` per spatial position by
    /// `mask [h*w]`.
    pub fn mul_positions(&mut self, feat: ValueId, mask: ValueId) -> Result<ValueId, TensorError> {
        let (vf, vm) = (self.value(feat), self.value(mask));
        let &[c, h, w] = vf.shape() else {
            return Err(Self::shape_err(
                "mul_positions",
                format!("expected rank-3 feature map, got shape {:?}", vf.shape()),
            ));
        };
        let n = h * w;
        if vm.len() != n || vm.shape().len() != 1 {
            return Err(Self::shape_err(
                "mul_positions",
                format!("mask shape {:?} does not cover {} positions", vm.shape(), n),
            ));
        }
        let mut data = vec![0.0; c * n];
        for ch in 0..c {
            let src = &vf.data()[ch * n..(ch + 1) * n];
            let dst = &mut data[ch * n..(ch + 1) * n];
            for j in 0..n {
                dst[j] = src[j] * vm.data()[j];
            }
        }
        let out = Tensor::from_raw(vf.shape().to_vec(), data);
        Ok(self.push(out, Node::MulPositions { feat, mask }))
    }

    /// Convex-style blend `lambda * a + (1 - lambda) * b` with a scalar
    /// `lambda` value (not restricted to [0, 1]).
    pub fn blend(&mut self, lambda: ValueId, a: ValueId, b: ValueId) -> Result<ValueId, TensorError> {
        let vl = self.value(lambda);
        if !vl.is_scalar() {
            return Err(Self::shape_err(
                "blend",
                format!("lambda must be scalar, got shape {:?}", vl.shape()),
            ));
        }
        let l = vl.data()[0];
        let (va, vb) = (self.value(a), self.value(b));
        if va.shape() != vb.shape() {
            return Err(Self::shape_err(
                "blend",
                format!("{:?} vs {:?}", va.shape(), vb.shape()),
            ));
        }
        let data = va
            .data()
            .iter()
            .zip(vb.data())
            .map(|(x, y)| l * x + (1.0 - l) * y)
            .collect();
        let out = Tensor::from_raw(va.shape().to_vec(), data);
        Ok(self.push(out, Node::Blend { lambda, a, b }))
    }

    /// Dense affine layer; `x [n]`, `weight [n,m]`, `bias [m]`.
    pub fn dense(
        &mut self,
        x: ValueId,
        weight: ValueId,
        bias: ValueId,
    ) -> Result<ValueId, TensorError> {
        let (vx, vw, vb) = (self.value(x), self.value(weight), self.value(bias));
        let &[n, m] = vw.shape() else {
            return Err(Self::shape_err(
                "dense",
                format!("weight must be rank-2, got shape {:?}", vw.shape()),
            ));
        };
        if vx.shape().len() != 1 || vx.len() != n || vb.shape().len() != 1 || vb.len() != m {
            return Err(Self::shape_err(
                "dense",
                format!(
                    "x {:?}, weight {:?}, bias {:?} are inconsistent",
                    vx.shape(),
                    vw.shape(),
                    vb.shape()
                ),
            ));
        }
        let out = Tensor::from_raw(
            vec![m],
            ops::dense_fwd(vx.data(), vw.data(), vb.data(), n, m),
        );
        Ok(self.push(out, Node::Dense { x, weight, bias }))
    }

    /// Same-padded square convolution; `input [cin,h,w]`,
    /// `filters [cout,cin,k,k]`, `bias [cout]`.
    pub fn conv2d(
        &mut self,
        input: ValueId,
        filters: ValueId,
        bias: ValueId,
    ) -> Result<ValueId, TensorError> {
        let (vi, vf, vb) = (self.value(input), self.value(filters), self.value(bias));
        let &[cin, h, w] = vi.shape() else {
            return Err(Self::shape_err(
                "conv2d",
                format!("input must be rank-3, got shape {:?}", vi.shape()),
            ));
        };
        let &[cout, fcin, k, k2] = vf.shape() else {
            return Err(Self::shape_err(
                "conv2d",
                format!("filters must be rank-4, got shape {:?}", vf.shape()),
            ));
        };
        if fcin != cin || k != k2 || k == 0 {
            return Err(Self::shape_err(
                "conv2d",
                format!("filters {:?} do not fit input {:?}", vf.shape(), vi.shape()),
            ));
        }
        if vb.shape().len() != 1 || vb.len() != cout {
            return Err(Self::shape_err(
                "conv2d",
                format!("bias {:?} does not match {} output channels", vb.shape(), cout),
            ));
        }
        let out = Tensor::from_raw(
            vec![cout, h, w],
            ops::conv2d_fwd(vi.data(), cin, h, w, vf.data(), cout, k, vb.data()),
        );
        Ok(self.push(out, Node::Conv2d { input, filters, bias }))
    }

    /// 2x2 stride-2 max pooling over a `[c,h,w]` map with `h, w >= 2`.
    pub fn maxpool2(&mut self, x: ValueId) -> Result<ValueId, TensorError> {
        let v = self.value(x);
        let &[c, h, w] = v.shape() else {
            return Err(Self::shape_err(
                "maxpool2",
                format!("expected rank-3 input, got shape {:?}", v.shape()),
            ));
        };
        if h < 2 || w < 2 {
            return Err(Self::shape_err(
                "maxpool2",
                format!("spatial dims {}x{} are too small to pool", h, w),
            ));
        }
        let (data, argmax) = ops::maxpool2_fwd(v.data(), c, h, w);
        let out = Tensor::from_raw(vec![c, h / 2, w / 2], data);
        Ok(self.push(out, Node::MaxPool2 { x, argmax }))
    }

    /// Fused RBF soft assignment and mean pooling; `features [n,d]`,
    /// `centers [k,d]`, `log_scales [k]` (scales are `exp(log_scales)`).
    /// Produces the `[k]` histogram.
    pub fn bof_pool(
        &mut self,
        features: ValueId,
        centers: ValueId,
        log_scales: ValueId,
    ) -> Result<ValueId, TensorError> {
        let (vx, vc, vs) = (self.value(features), self.value(centers), self.value(log_scales));
        let &[n, d] = vx.shape() else {
            return Err(Self::shape_err(
                "bof_pool",
                format!("features must be rank-2, got shape {:?}", vx.shape()),
            ));
        };
        let &[k, cd] = vc.shape() else {
            return Err(Self::shape_err(
                "bof_pool",
                format!("centers must be rank-2, got shape {:?}", vc.shape()),
            ));
        };
        if cd != d || n == 0 || k == 0 {
            return Err(Self::shape_err(
                "bof_pool",
                format!("features {:?} vs centers {:?}", vx.shape(), vc.shape()),
            ));
        }
        if vs.shape().len() != 1 || vs.len() != k {
            return Err(Self::shape_err(
                "bof_pool",
                format!("log_scales {:?} does not match {} codewords", vs.shape(), k),
            ));
        }
        let scales: Vec<f64> = vs.data().iter().map(|s| s.exp()).collect();
        let (hist, saved) = ops::bof_fwd(vx.data(), n, d, vc.data(), k, &scales);
        let out = Tensor::from_raw(vec![k], hist);
        Ok(self.push(
            out,
            Node::BofPool {
                features,
                centers,
                log_scales,
                scales,
                saved,
            },
        ))
    }

    /// Recovery angle in radians between `est` (rank-1, length 3) and the
    /// constant ground-truth vector `gt`.
    pub fn angular_loss(&mut self, est: ValueId, gt: [f64; 3]) -> Result<ValueId, TensorError> {
        let v = self.value(est);
        if v.shape() != [3] {
            return Err(Self::shape_err(
                "angular_loss",
                format!("estimate must have shape [3], got {:?}", v.shape()),
            ));
        }
        if gt.iter().any(|g| !g.is_finite()) || gt.iter().map(|g| g * g).sum::<f64>() == 0.0 {
            return Err(Self::shape_err(
                "angular_loss",
                "ground truth must be finite and nonzero".to_string(),
            ));
        }
        let loss = ops::angular_fwd(v.data(), &gt);
        let out = Tensor::from_raw(vec![1], vec![loss]);
        Ok(self.push(out, Node::AngularLoss { est, gt: gt.to_vec() }))
    }

    /// Reverse pass from the scalar `loss`, consuming the tape's record.
    ///
    /// Returns the gradient of the loss with respect to every recorded value
    /// it depends on; other values have no entry (an exact zero).
    pub fn backward(&mut self, loss: ValueId) -> Result<Gradients, TensorError> {
        if self.consumed {
            return Err(TensorError::TapeConsumed);
        }
        let lv = self.value(loss);
        if !lv.is_scalar() {
            return Err(TensorError::NonScalarLoss {
                shape: lv.shape().to_vec(),
            });
        }
        self.consumed = true;
        let mut grads: Vec<Option<Tensor>> = (0..self.entries.len()).map(|_| None).collect();
        grads[loss.0] = Some(Tensor::from_raw(vec![1], vec![1.0]));

        // Entries are recorded in creation order, so reverse order visits
        // every value after all of its consumers; by the time `i` is reached
        // its gradient is complete and can be pushed to its inputs.
        for i in (0..=loss.0).rev() {
            let Some(g) = grads[i].clone() else { continue };
            let gd = g.data();
            match &self.entries[i].node {
                Node::Leaf => {}
                Node::Relu { x } => {
                    let contrib: Vec<f64> = self.entries[x.0]
                        .value
                        .data()
                        .iter()
                        .zip(gd)
                        .map(|(&xv, &gv)| if xv > 0.0 { gv } else { 0.0 })
                        .collect();
                    Self::accumulate(&mut grads, &self.entries, *x, &contrib);
                }
                Node::Softmax { x } => {
                    let contrib = ops::softmax_bwd(self.entries[i].value.data(), gd);
                    Self::accumulate(&mut grads, &self.entries, *x, &contrib);
                }
                Node::Add { a, b } => {
                    Self::accumulate(&mut grads, &self.entries, *a, gd);
                    Self::accumulate(&mut grads, &self.entries, *b, gd);
                }
                Node::Mul { a, b } => {
                    let (a, b) = (*a, *b);
                    let ga: Vec<f64> = self.entries[b.0]
                        .value
                        .data()
                        .iter()
                        .zip(gd)
                        .map(|(x, y)| x * y)
                        .collect();
                    let gb: Vec<f64> = self.entries[a.0]
                        .value
                        .data()
                        .iter()
                        .zip(gd)
                        .map(|(x, y)| x * y)
                        .collect();
                    Self::accumulate(&mut grads, &self.entries, a, &ga);
                    Self::accumulate(&mut grads, &self.entries, b, &gb);
                }
                Node::Scale { x, c } => {
                    let contrib: Vec<f64> = gd.iter().map(|v| v * c).collect();
                    Self::accumulate(&mut grads, &self.entries, *x, &contrib);
                }
                Node::Sum { x } => {
                    let contrib = vec![gd[0]; self.entries[x.0].value.len()];
                    Self::accumulate(&mut grads, &self.entries, *x, &contrib);
                }
                Node::Reshape { x } => {
                    Self::accumulate(&mut grads, &self.entries, *x, gd);
                }
                Node::SpatialToRows { x } => {
                    let &[c, h, w] = self.entries[x.0].value.shape() else {
                        unreachable!("validated at record time");
                    };
                    let n = h * w;
                    let mut contrib = vec![0.0; c * n];
                    for j in 0..n {
                        for ch in 0..c {
                            contrib[ch * n + j] = gd[j * c + ch];
                        }
                    }
                    Self::accumulate(&mut grads, &self.entries, *x, &contrib);
                }
                Node::MulPositions { feat, mask } => {
                    let (feat, mask) = (*feat, *mask);
                    let &[c, h, w] = self.entries[feat.0].value.shape() else {
                        unreachable!("validated at record time");
                    };
                    let n = h * w;
                    let fdata = self.entries[feat.0].value.data();
                    let mdata = self.entries[mask.0].value.data();
                    let mut gf = vec![0.0; c * n];
                    let mut gm = vec![0.0; n];
                    for ch in 0..c {
                        for j in 0..n {
                            let gv = gd[ch * n + j];
                            gf[ch * n + j] = gv * mdata[j];
                            gm[j] += gv * fdata[ch * n + j];
                        }
                    }
                    Self::accumulate(&mut grads, &self.entries, feat, &gf);
                    Self::accumulate(&mut grads, &self.entries, mask, &gm);
                }
                Node::Blend { lambda, a, b } => {
                    let (lambda, a, b) = (*lambda, *a, *b);
                    let l = self.entries[lambda.0].value.data()[0];
                    let adata = self.entries[a.0].value.data();
                    let bdata = self.entries[b.0].value.data();
                    let ga: Vec<f64> = gd.iter().map(|v| v * l).collect();
                    let gb: Vec<f64> = gd.iter().map(|v| v * (1.0 - l)).collect();
                    let gl: f64 = gd
                        .iter()
                        .zip(adata.iter().zip(bdata))
                        .map(|(g, (x, y))| g * (x - y))
                        .sum();
                    Self::accumulate(&mut grads, &self.entries, a, &ga);
                    Self::accumulate(&mut grads, &self.entries, b, &gb);
                    Self::accumulate(&mut grads, &self.entries, lambda, &[gl]);
                }
                Node::Dense { x, weight, bias } => {
                    let (x, weight, bias) = (*x, *weight, *bias);
                    let &[n, m] = self.entries[weight.0].value.shape() else {
                        unreachable!("validated at record time");
                    };
                    let (gx, gw, gb) = ops::dense_bwd(
                        self.entries[x.0].value.data(),
                        self.entries[weight.0].value.data(),
                        n,
                        m,
                        gd,
                    );
                    Self::accumulate(&mut grads, &self.entries, x, &gx);
                    Self::accumulate(&mut grads, &self.entries, weight, &gw);
                    Self::accumulate(&mut grads, &self.entries, bias, &gb);
                }
                Node::Conv2d { input, filters, bias } => {
                    let (input, filters, bias) = (*input, *filters, *bias);
                    let &[cin, h, w] = self.entries[input.0].value.shape() else {
                        unreachable!("validated at record time");
                    };
                    let &[cout, _, k, _] = self.entries[filters.0].value.shape() else {
                        unreachable!("validated at record time");
                    };
                    let (gi, gf, gb) = ops::conv2d_bwd(
                        self.entries[input.0].value.data(),
                        cin,
                        h,
                        w,
                        self.entries[filters.0].value.data(),
                        cout,
                        k,
                        gd,
                    );
                    Self::accumulate(&mut grads, &self.entries, input, &gi);
                    Self::accumulate(&mut grads, &self.entries, filters, &gf);
                    Self::accumulate(&mut grads, &self.entries, bias, &gb);
                }
                Node::MaxPool2 { x, argmax } => {
                    let mut contrib = vec![0.0; self.entries[x.0].value.len()];
                    for (out_i, &in_i) in argmax.iter().enumerate() {
                        contrib[in_i] += gd[out_i];
                    }
                    Self::accumulate(&mut grads, &self.entries, *x, &contrib);
                }
                Node::BofPool {
                    features,
                    centers,
                    log_scales,
                    scales,
                    saved,
                } => {
                    let (features, centers, log_scales) = (*features, *centers, *log_scales);
                    let &[n, d] = self.entries[features.0].value.shape() else {
                        unreachable!("validated at record time");
                    };
                    let k = scales.len();
                    let (gx, gc, grho) = ops::bof_bwd(
                        self.entries[features.0].value.data(),
                        n,
                        d,
                        self.entries[centers.0].value.data(),
                        k,
                        scales,
                        saved,
                        gd,
                    );
                    // Chain through the reparameterization rho = exp(s).
                    let gs: Vec<f64> = grho.iter().zip(scales).map(|(g, rho)| g * rho).collect();
                    Self::accumulate(&mut grads, &self.entries, features, &gx);
                    Self::accumulate(&mut grads, &self.entries, centers, &gc);
                    Self::accumulate(&mut grads, &self.entries, log_scales, &gs);
                }
                Node::AngularLoss { est, gt } => {
                    let contrib =
                        ops::angular_bwd(self.entries[est.0].value.data(), gt, gd[0]);
                    Self::accumulate(&mut grads, &self.entries, *est, &contrib);
                }
            }
        }
        Ok(Gradients { grads })
    }

    fn accumulate(grads: &mut [Option<Tensor>], entries: &[Entry], id: ValueId, contrib: &[f64]) {
        match &mut grads[id.0] {
            Some(g) => {
                for (dst, src) in g.data_mut().iter_mut().zip(contrib) {
                    *dst += src;
                }
            }
            None => {
                grads[id.0] = Some(Tensor::from_raw(
                    entries[id.0].value.shape().to_vec(),
                    contrib.to_vec(),
                ));
            }
        }
    }
}
