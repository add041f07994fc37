//! Model state, initialization, and forward/backward execution.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{parameter_count, AttentionMode, BocfConfig, Codebook, Histogram, ModelError};
use crate::imageio::{IlluminantRgb, RgbImage};
use crate::tensor::{Tape, Tensor, ValueId};

struct ConvLayer {
    filters: Tensor, // [out, in, k, k]
    bias: Tensor,    // [out]
}

/// Mask layer plus blend weight for either attention variant.
struct Attention {
    weight: Tensor, // variant1: [N*D, N]; variant2: [K, K]
    bias: Tensor,   // variant1: [N]; variant2: [K]
    lambda: Tensor, // [1]
}

/// A complete BoCF model: conv stack, codebook, optional attention, head.
pub struct BocfModel {
    config: BocfConfig,
    conv: Vec<ConvLayer>,
    centers: Tensor,    // [K, D]
    log_scales: Tensor, // [K]; scales are exp(log_scales)
    attention: Option<Attention>,
    head_w1: Tensor, // [K, hidden]
    head_b1: Tensor, // [hidden]
    head_w2: Tensor, // [hidden, 3]
    head_b2: Tensor, // [3]
}

/// Handles into a recorded forward pass, for loss construction and
/// gradient inspection.
pub struct Trace {
    /// The simplex estimate, shape `[3]`.
    pub estimate: ValueId,
    /// The pooled BoF histogram, shape `[K]`.
    pub histogram: ValueId,
    /// The representation entering the head: the histogram, or the
    /// variant-2 blended histogram.
    pub head_input: ValueId,
    /// The attention mask (variant 1: `[N]`; variant 2: `[K]`).
    pub mask: Option<ValueId>,
    /// The blend weight λ, shape `[1]`.
    pub lambda: Option<ValueId>,
    /// Parameter leaves, aligned with [`BocfModel::param_names`].
    pub params: Vec<ValueId>,
}

/// Everything a single eager forward pass produces.
pub struct ForwardOutput {
    pub estimate: IlluminantRgb,
    pub histogram: Histogram,
    /// Attention mask values when the model has an attention stage.
    pub mask: Option<Vec<f64>>,
}

/// Uniform Glorot limit for a layer with the given fan-in and fan-out.
fn glorot(fan_in: usize, fan_out: usize) -> f64 {
    (6.0 / (fan_in + fan_out) as f64).sqrt()
}

fn uniform_tensor(rng: &mut ChaCha8Rng, shape: Vec<usize>, limit: f64) -> Tensor {
    let len = shape.iter().product();
    let data = (0..len).map(|_| rng.gen_range(-limit..limit)).collect();
    Tensor::from_raw(shape, data)
}

impl BocfModel {
    /// Builds a model with randomly initialized parameters.
    ///
    /// Weights are uniform Glorot (`±sqrt(6/(fan_in+fan_out))`), biases zero,
    /// codebook centers uniform in `[0, 1)` (the post-ReLU feature range),
    /// log-scales zero (ρ = 1), and λ = 0.5. Draw order is fixed (conv
    /// layers, then centers, then attention weight) so a seed pins every
    /// parameter.
    pub fn new(config: BocfConfig, seed: u64) -> Result<Self, ModelError> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let k2 = config.kernel_size * config.kernel_size;
        let f = config.filters;

        let mut conv = Vec::with_capacity(config.conv_layers);
        for layer in 0..config.conv_layers {
            let cin = if layer == 0 { 3 } else { f };
            let limit = glorot(cin * k2, f * k2);
            conv.push(ConvLayer {
                filters: uniform_tensor(
                    &mut rng,
                    vec![f, cin, config.kernel_size, config.kernel_size],
                    limit,
                ),
                bias: Tensor::zeros(vec![f]),
            });
        }

        let k = config.codebook_size;
        let d = config.feature_dim();
        let centers_data: Vec<f64> = (0..k * d).map(|_| rng.gen::<f64>()).collect();
        let centers = Tensor::from_raw(vec![k, d], centers_data);
        let log_scales = Tensor::zeros(vec![k]);

        let attention = match config.attention {
            AttentionMode::None => None,
            AttentionMode::Variant1 => {
                let n = config.feature_count();
                let limit = glorot(n * d, n);
                Some(Attention {
                    weight: uniform_tensor(&mut rng, vec![n * d, n], limit),
                    bias: Tensor::zeros(vec![n]),
                    lambda: Tensor::from_raw(vec![1], vec![0.5]),
                })
            }
            AttentionMode::Variant2 => {
                let limit = glorot(k, k);
                Some(Attention {
                    weight: uniform_tensor(&mut rng, vec![k, k], limit),
                    bias: Tensor::zeros(vec![k]),
                    lambda: Tensor::from_raw(vec![1], vec![0.5]),
                })
            }
        };

        let hidden = config.hidden_size;
        let head_w1 = uniform_tensor(&mut rng, vec![k, hidden], glorot(k, hidden));
        let head_b1 = Tensor::zeros(vec![hidden]);
        let head_w2 = uniform_tensor(&mut rng, vec![hidden, 3], glorot(hidden, 3));
        let head_b2 = Tensor::zeros(vec![3]);

        Ok(Self {
            config,
            conv,
            centers,
            log_scales,
            attention,
            head_w1,
            head_b1,
            head_w2,
            head_b2,
        })
    }

    pub fn config(&self) -> &BocfConfig {
        &self.config
    }

    /// The codebook view of the current center/scale parameters.
    pub fn codebook(&self) -> Codebook {
        let scales = self.log_scales.data().iter().map(|s| s.exp()).collect();
        Codebook::new(self.centers.clone(), scales).expect("model invariants uphold codebook")
    }

    /// Replaces the codebook centers (the k-means initialization path).
    pub fn set_codebook_centers(&mut self, centers: Tensor) -> Result<(), ModelError> {
        if centers.shape() != self.centers.shape() {
            return Err(ModelError::Shape(format!(
                "centers shape {:?} does not match model {:?}",
                centers.shape(),
                self.centers.shape()
            )));
        }
        self.centers = centers;
        Ok(())
    }

    /// The attention blend weight, when the model has an attention stage.
    pub fn lambda(&self) -> Option<f64> {
        self.attention.as_ref().map(|a| a.lambda.data()[0])
    }

    pub fn set_lambda(&mut self, lambda: f64) -> Result<(), ModelError> {
        if !lambda.is_finite() {
            return Err(ModelError::Config(format!("non-finite lambda {}", lambda)));
        }
        match &mut self.attention {
            Some(a) => {
                a.lambda.data_mut()[0] = lambda;
                Ok(())
            }
            None => Err(ModelError::NoLambda),
        }
    }

    /// Stable names of every parameter tensor, in the canonical order used
    /// by [`BocfModel::params`], the optimizer, and checkpoints.
    pub fn param_names(&self) -> Vec<String> {
        let mut names = Vec::new();
        for i in 0..self.conv.len() {
            names.push(format!("conv{}.filters", i));
            names.push(format!("conv{}.bias", i));
        }
        names.push("codebook.centers".to_string());
        names.push("codebook.log_scales".to_string());
        if self.attention.is_some() {
            names.push("attention.weight".to_string());
            names.push("attention.bias".to_string());
            names.push("attention.lambda".to_string());
        }
        names.extend(
            ["head.w1", "head.b1", "head.w2", "head.b2"]
                .iter()
                .map(|s| s.to_string()),
        );
        names
    }

    /// Parameter tensors in canonical order.
    pub fn params(&self) -> Vec<&Tensor> {
        let mut out = Vec::new();
        for layer in &self.conv {
            out.push(&layer.filters);
            out.push(&layer.bias);
        }
        out.push(&self.centers);
        out.push(&self.log_scales);
        if let Some(a) = &self.attention {
            out.push(&a.weight);
            out.push(&a.bias);
            out.push(&a.lambda);
        }
        out.extend([&self.head_w1, &self.head_b1, &self.head_w2, &self.head_b2]);
        out
    }

    /// Mutable parameter tensors in canonical order.
    pub fn params_mut(&mut self) -> Vec<&mut Tensor> {
        let mut out = Vec::new();
        for layer in &mut self.conv {
            out.push(&mut layer.filters);
            out.push(&mut layer.bias);
        }
        out.push(&mut self.centers);
        out.push(&mut self.log_scales);
        if let Some(a) = &mut self.attention {
            out.push(&mut a.weight);
            out.push(&mut a.bias);
            out.push(&mut a.lambda);
        }
        out.extend([
            &mut self.head_w1,
            &mut self.head_b1,
            &mut self.head_w2,
            &mut self.head_b2,
        ]);
        out
    }

    /// Total scalar parameter count; always equals
    /// [`parameter_count`]`(self.config())`.
    pub fn parameter_count(&self) -> usize {
        let total: usize = self.params().iter().map(|p| p.len()).sum();
        debug_assert_eq!(total, parameter_count(&self.config));
        total
    }

    fn check_input(&self, input: &Tensor) -> Result<(), ModelError> {
        let s = self.config.input_size;
        if input.shape() != [3, s, s] {
            let got = if input.shape().len() == 3 {
                input.shape()[1]
            } else {
                0
            };
            if input.shape().len() == 3 && input.shape()[0] == 3 && input.shape()[1] == input.shape()[2]
            {
                return Err(ModelError::InputSize { expected: s, got });
            }
            return Err(ModelError::Shape(format!(
                "input must be [3, {}, {}], got {:?}",
                s,
                s,
                input.shape()
            )));
        }
        Ok(())
    }

    /// Records the conv stack (conv → relu → pool per layer) and returns the
    /// feature-map value `[D, S', S']`.
    fn trace_conv(&self, tape: &mut Tape, input: ValueId, params: &[ValueId]) -> Result<ValueId, ModelError> {
        let mut x = input;
        for (i, _) in self.conv.iter().enumerate() {
            let c = tape.conv2d(x, params[2 * i], params[2 * i + 1])?;
            let r = tape.relu(c);
            x = tape.maxpool2(r)?;
        }
        Ok(x)
    }

    /// Records the whole forward pass on `tape` starting from the `input`
    /// leaf (shape `[3, S, S]`), registering every parameter as a leaf.
    pub fn trace(&self, tape: &mut Tape, input: ValueId) -> Result<Trace, ModelError> {
        self.check_input(tape.value(input))?;
        let params: Vec<ValueId> = self
            .params()
            .into_iter()
            .map(|p| tape.leaf(p.clone()))
            .collect();
        let codebook_at = 2 * self.conv.len();
        let (centers, log_scales) = (params[codebook_at], params[codebook_at + 1]);
        let attention_at = codebook_at + 2;
        let head_at = if self.attention.is_some() {
            attention_at + 3
        } else {
            attention_at
        };

        let feature_map = self.trace_conv(tape, input, &params)?;

        let mut mask = None;
        let mut lambda = None;
        // Variant 1: spatial mask from the flattened map, rescaled by N so a
        // uniform mask is the identity, blended per Eq. 13.
        let pooled_from = if self.config.attention == AttentionMode::Variant1 {
            let n = self.config.feature_count();
            let d = self.config.feature_dim();
            let flat = tape.reshape(feature_map, vec![n * d])?;
            let logits = tape.dense(flat, params[attention_at], params[attention_at + 1])?;
            let m = tape.softmax(logits)?;
            mask = Some(m);
            lambda = Some(params[attention_at + 2]);
            let weighted = tape.mul_positions(feature_map, m)?;
            let rescaled = tape.scale(weighted, n as f64);
            tape.blend(params[attention_at + 2], rescaled, feature_map)?
        } else {
            feature_map
        };

        let rows = tape.spatial_to_rows(pooled_from)?;
        let histogram = tape.bof_pool(rows, centers, log_scales)?;

        // Variant 2: histogram mask v = softmax(W h + b), y = λ(v ⊙ h) + (1-λ)h,
        // not renormalized (Eq. 12-13).
        let head_input = if self.config.attention == AttentionMode::Variant2 {
            let logits = tape.dense(histogram, params[attention_at], params[attention_at + 1])?;
            let v = tape.softmax(logits)?;
            mask = Some(v);
            lambda = Some(params[attention_at + 2]);
            let vh = tape.mul(v, histogram)?;
            tape.blend(params[attention_at + 2], vh, histogram)?
        } else {
            histogram
        };

        let h1 = tape.dense(head_input, params[head_at], params[head_at + 1])?;
        let h1 = tape.relu(h1);
        let logits = tape.dense(h1, params[head_at + 2], params[head_at + 3])?;
        let estimate = tape.softmax(logits)?;

        Ok(Trace {
            estimate,
            histogram,
            head_input,
            mask,
            lambda,
            params,
        })
    }

    /// Eager forward pass over a planar `[3, S, S]` tensor.
    pub fn forward_tensor(&self, input: &Tensor) -> Result<ForwardOutput, ModelError> {
        let mut tape = Tape::new();
        let leaf = tape.leaf(input.clone());
        let trace = self.trace(&mut tape, leaf)?;
        let est = tape.value(trace.estimate).data();
        let estimate = IlluminantRgb::new(est[0], est[1], est[2])
            .map_err(|e| ModelError::Numeric(format!("softmax head underflow: {}", e)))?;
        Ok(ForwardOutput {
            estimate,
            histogram: Histogram::new(tape.value(trace.histogram).data().to_vec())?,
            mask: trace.mask.map(|m| tape.value(m).data().to_vec()),
        })
    }

    /// Full pipeline on an image already at the configured input size.
    pub fn forward(&self, image: &RgbImage) -> Result<IlluminantRgb, ModelError> {
        Ok(self.forward_tensor(&image.to_tensor())?.estimate)
    }

    /// Angular loss (radians) against the ground truth, and its gradients
    /// with respect to every parameter, in canonical parameter order.
    pub fn loss_and_gradients(
        &self,
        input: &Tensor,
        truth: &IlluminantRgb,
    ) -> Result<(f64, Vec<Tensor>), ModelError> {
        let mut tape = Tape::new();
        let leaf = tape.leaf(input.clone());
        let trace = self.trace(&mut tape, leaf)?;
        let loss = tape.angular_loss(trace.estimate, truth.as_array())?;
        let loss_value = tape.value(loss).item()?;
        let grads = tape.backward(loss)?;
        let out = trace
            .params
            .iter()
            .zip(self.params())
            .map(|(&id, p)| grads.get_or_zero(id, p.shape()))
            .collect();
        Ok((loss_value, out))
    }

    /// The conv stack's output: the `[D, S', S']` feature map and the N
    /// feature vectors (one per spatial position).
    pub fn extract_features(
        &self,
        input: &Tensor,
    ) -> Result<(Tensor, Vec<Vec<f64>>), ModelError> {
        self.check_input(input)?;
        let mut tape = Tape::new();
        let leaf = tape.leaf(input.clone());
        // Only the conv parameters participate; skip leafing the rest.
        let mut params = Vec::with_capacity(2 * self.conv.len());
        for layer in &self.conv {
            params.push(tape.leaf(layer.filters.clone()));
            params.push(tape.leaf(layer.bias.clone()));
        }
        let map_id = self.trace_conv(&mut tape, leaf, &params)?;
        let rows_id = tape.spatial_to_rows(map_id)?;
        let map = tape.value(map_id).clone();
        let d = self.config.feature_dim();
        let rows = tape
            .value(rows_id)
            .data()
            .chunks_exact(d)
            .map(|r| r.to_vec())
            .collect();
        Ok((map, rows))
    }

    /// Attention variant 1 applied to a feature map: spatial softmax mask,
    /// rescaled by N, blended with the input by λ (Eq. 13 on positions).
    pub fn attention_variant1(&self, feature_map: &Tensor) -> Result<Tensor, ModelError> {
        self.require_attention(AttentionMode::Variant1)?;
        let s = self.config.feature_map_side();
        let d = self.config.feature_dim();
        if feature_map.shape() != [d, s, s] {
            return Err(ModelError::Shape(format!(
                "feature map must be [{}, {}, {}], got {:?}",
                d,
                s,
                s,
                feature_map.shape()
            )));
        }
        let a = self.attention.as_ref().expect("mode checked");
        let n = self.config.feature_count();
        let mut tape = Tape::new();
        let map = tape.leaf(feature_map.clone());
        let (w, b, l) = (
            tape.leaf(a.weight.clone()),
            tape.leaf(a.bias.clone()),
            tape.leaf(a.lambda.clone()),
        );
        let flat = tape.reshape(map, vec![n * d])?;
        let logits = tape.dense(flat, w, b)?;
        let m = tape.softmax(logits)?;
        let weighted = tape.mul_positions(map, m)?;
        let rescaled = tape.scale(weighted, n as f64);
        let blended = tape.blend(l, rescaled, map)?;
        Ok(tape.value(blended).clone())
    }

    /// Attention variant 2 applied to a histogram: mask v = softmax(W h + b),
    /// output `λ(v ⊙ h) + (1-λ)h`, not renormalized.
    pub fn attention_variant2(&self, hist: &Histogram) -> Result<Vec<f64>, ModelError> {
        self.require_attention(AttentionMode::Variant2)?;
        let k = self.config.codebook_size;
        if hist.len() != k {
            return Err(ModelError::Shape(format!(
                "histogram has {} bins, model expects {}",
                hist.len(),
                k
            )));
        }
        let a = self.attention.as_ref().expect("mode checked");
        let mut tape = Tape::new();
        let h = tape.leaf(Tensor::from_raw(vec![k], hist.bins().to_vec()));
        let (w, b, l) = (
            tape.leaf(a.weight.clone()),
            tape.leaf(a.bias.clone()),
            tape.leaf(a.lambda.clone()),
        );
        let logits = tape.dense(h, w, b)?;
        let v = tape.softmax(logits)?;
        let vh = tape.mul(v, h)?;
        let y = tape.blend(l, vh, h)?;
        Ok(tape.value(y).data().to_vec())
    }

    /// The estimation head: dense(K → hidden) → relu → dense(hidden → 3) →
    /// softmax, yielding a simplex estimate.
    pub fn estimate_head(&self, rep: &[f64]) -> Result<IlluminantRgb, ModelError> {
        let k = self.config.codebook_size;
        if rep.len() != k {
            return Err(ModelError::Shape(format!(
                "representation has {} entries, model expects {}",
                rep.len(),
                k
            )));
        }
        if let Some(i) = rep.iter().position(|v| !v.is_finite()) {
            return Err(ModelError::Numeric(format!(
                "non-finite representation entry at {}",
                i
            )));
        }
        let mut tape = Tape::new();
        let x = tape.leaf(Tensor::from_raw(vec![k], rep.to_vec()));
        let (w1, b1) = (tape.leaf(self.head_w1.clone()), tape.leaf(self.head_b1.clone()));
        let (w2, b2) = (tape.leaf(self.head_w2.clone()), tape.leaf(self.head_b2.clone()));
        let h = tape.dense(x, w1, b1)?;
        let h = tape.relu(h);
        let logits = tape.dense(h, w2, b2)?;
        let est = tape.softmax(logits)?;
        let e = tape.value(est).data();
        IlluminantRgb::new(e[0], e[1], e[2])
            .map_err(|err| ModelError::Numeric(format!("softmax head underflow: {}", err)))
    }

    fn require_attention(&self, expected: AttentionMode) -> Result<(), ModelError> {
        if self.config.attention != expected {
            return Err(ModelError::AttentionMode {
                expected,
                actual: self.config.attention,
            });
        }
        Ok(())
    }

    /// Builds a model directly from named tensors (the checkpoint path).
    pub(super) fn from_parts(
        config: BocfConfig,
        mut take: impl FnMut(&str, Vec<usize>) -> Result<Tensor, ModelError>,
    ) -> Result<Self, ModelError> {
        config.validate()?;
        let k2 = config.kernel_size;
        let f = config.filters;
        let mut conv = Vec::with_capacity(config.conv_layers);
        for i in 0..config.conv_layers {
            let cin = if i == 0 { 3 } else { f };
            conv.push(ConvLayer {
                filters: take(&format!("conv{}.filters", i), vec![f, cin, k2, k2])?,
                bias: take(&format!("conv{}.bias", i), vec![f])?,
            });
        }
        let k = config.codebook_size;
        let d = config.feature_dim();
        let centers = take("codebook.centers", vec![k, d])?;
        let log_scales = take("codebook.log_scales", vec![k])?;
        let attention = match config.attention {
            AttentionMode::None => None,
            AttentionMode::Variant1 => {
                let n = config.feature_count();
                Some(Attention {
                    weight: take("attention.weight", vec![n * d, n])?,
                    bias: take("attention.bias", vec![n])?,
                    lambda: take("attention.lambda", vec![1])?,
                })
            }
            AttentionMode::Variant2 => Some(Attention {
                weight: take("attention.weight", vec![k, k])?,
                bias: take("attention.bias", vec![k])?,
                lambda: take("attention.lambda", vec![1])?,
            }),
        };
        let hidden = config.hidden_size;
        let head_w1 = take("head.w1", vec![k, hidden])?;
        let head_b1 = take("head.b1", vec![hidden])?;
        let head_w2 = take("head.w2", vec![hidden, 3])?;
        let head_b2 = take("head.b2", vec![3])?;
        Ok(Self {
            config,
            conv,
            centers,
            log_scales,
            attention,
            head_w1,
            head_b1,
            head_w2,
            head_b2,
        })
    }
}

impl crate::evaluate::IlluminantEstimator for BocfModel {
    fn estimate_illuminant(
        &self,
        image: &RgbImage,
    ) -> Result<IlluminantRgb, crate::evaluate::EstimateError> {
        self.forward(image)
            .map_err(|e| crate::evaluate::EstimateError(e.to_string()))
    }

    fn input_size(&self) -> Option<usize> {
        Some(self.config.input_size)
    }
}
